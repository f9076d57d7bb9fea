//! Probabilities and moments of truncated and folded multivariate normal and
//! extended skew-normal distributions.

pub mod bench;
pub mod error;
pub mod esn;
pub mod folded;
pub mod linalg;
pub mod mvn;
pub mod oracle;
pub mod quad;
pub mod settings;
pub mod tesn;
pub mod tn;

pub use error::{Error, Result};
pub use linalg::{PartitionIndex, SymMatrix};
pub use mvn::{NormalParams, Probability, TruncationBox};
pub use settings::{OutOfBoundsRule, QmcConfig, Settings};
