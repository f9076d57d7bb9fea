//! Library-wide numerical settings.

/// Randomized quasi-Monte Carlo configuration for rectangle probabilities of
/// dimension three and higher.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QmcConfig {
    /// Lattice points per randomized replicate (each point is also used antithetically).
    pub sample_count: usize,
    /// Number of independent random shifts; the spread across them gives the error estimate.
    pub replicates: usize,
    pub seed: u64,
    /// The point count is doubled (at most three times) while the error estimate exceeds this.
    pub target_abs_error: f64,
}

impl Default for QmcConfig {
    fn default() -> Self {
        QmcConfig {
            sample_count: 1 << 13,
            replicates: 12,
            seed: 20240101,
            target_abs_error: 1e-6,
        }
    }
}

impl QmcConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub(crate) fn normalized(&self) -> QmcConfig {
        QmcConfig {
            sample_count: self.sample_count.max(1),
            replicates: self.replicates.max(8),
            ..*self
        }
    }
}

/// How coordinates whose truncation interval carries numerically zero
/// probability are collapsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutOfBoundsRule {
    /// Degenerate the coordinate exactly at the near bound with zero variance.
    AtBound,
    /// Place the coordinate at its tail-truncated univariate mean and keep the
    /// (tiny) tail variance, propagated linearly to the remaining coordinates.
    /// Converges to `AtBound` as the interval moves further into the tail.
    #[default]
    TailMoments,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub qmc: QmcConfig,
    /// Relative eigenvalue tolerance for accepting a matrix as PSD.
    pub psd_tol: f64,
    /// Marginal interval probability below which a coordinate is out of bounds.
    pub out_of_bounds_eps: f64,
    /// For `tau / sqrt(1 + lambda'lambda)` at or below this value the ESN is
    /// replaced by its limiting normal law.
    pub limit_tau_tilde: f64,
    pub out_of_bounds_rule: OutOfBoundsRule,
    /// Largest per-coordinate moment order accepted by the recurrences.
    pub max_moment_order: u32,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            qmc: QmcConfig::default(),
            psd_tol: 1e-10,
            out_of_bounds_eps: 1e-12,
            limit_tau_tilde: -35.0,
            out_of_bounds_rule: OutOfBoundsRule::default(),
            max_moment_order: 8,
        }
    }
}

impl Settings {
    pub fn with_qmc(mut self, qmc: QmcConfig) -> Self {
        self.qmc = qmc;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.qmc.seed = seed;
        self
    }
}
