//! Globally adaptive Gauss-Kronrod (10/21) quadrature on finite and infinite
//! intervals, and a nested two-dimensional rule built on it.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689,
    0.973_906_528_517_171_720_077_964_012_084,
    0.930_157_491_355_708_226_001_207_180_060,
    0.865_063_366_688_984_510_732_096_688_423,
    0.780_817_726_586_416_897_063_717_578_345,
    0.679_409_568_299_024_406_234_327_365_115,
    0.562_757_134_668_604_683_339_000_099_273,
    0.433_395_394_129_247_190_799_265_943_166,
    0.294_392_862_701_460_198_131_126_603_104,
    0.148_874_338_981_631_210_884_826_001_130,
    0.0,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062,
    0.032_558_162_307_964_727_478_818_972_459,
    0.054_755_896_574_351_996_031_381_300_245,
    0.075_039_674_810_919_952_767_043_140_916,
    0.093_125_454_583_697_605_535_065_465_083,
    0.109_387_158_802_297_641_899_210_590_326,
    0.123_491_976_262_065_851_077_600_525_478,
    0.134_709_217_311_473_325_928_054_001_772,
    0.142_775_938_577_060_080_797_094_273_139,
    0.147_739_104_901_338_491_374_841_515_972,
    0.149_445_554_002_916_905_664_936_468_390,
];
/// Gauss weights for the odd-indexed Kronrod nodes.
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893,
    0.149_451_349_150_580_593_145_776_339_658,
    0.219_086_362_515_982_043_995_534_934_228,
    0.269_266_719_309_996_355_091_226_921_569,
    0.295_524_224_714_752_870_173_892_994_651,
];

const MAX_INTERVALS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
}

struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: FnMut(f64) -> f64>(f: &mut F, lo: f64, hi: f64) -> Segment {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let fc = f(c);
    let mut k = fc * WGK[10];
    let mut g = 0.0;
    for i in 0..10 {
        let d = h * XGK[i];
        let s = f(c - d) + f(c + d);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    let value = k * h;
    let error = ((k - g) * h).abs();
    Segment { lo, hi, value, error }
}

/// Integrates `f` over a finite interval to `max(abs_tol, rel_tol * |I|)`.
fn adapt<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, abs_tol: f64, rel_tol: f64) -> Result<QuadResult> {
    let mut heap = BinaryHeap::new();
    let first = kronrod(&mut f, lo, hi);
    let (mut value, mut error) = (first.value, first.error);
    heap.push(first);
    while error > abs_tol.max(rel_tol * value.abs()) {
        if heap.len() >= MAX_INTERVALS || !value.is_finite() {
            return Err(Error::QuadratureNonConvergence { estimate: value, error });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if !(mid > worst.lo && mid < worst.hi) {
            // interval cannot be split further in double precision
            return Err(Error::QuadratureNonConvergence { estimate: value, error });
        }
        let left = kronrod(&mut f, worst.lo, mid);
        let right = kronrod(&mut f, mid, worst.hi);
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        // re-sum periodically so the running totals do not drift
        if heap.len() % 64 == 0 {
            value = heap.iter().map(|s| s.value).sum();
            error = heap.iter().map(|s| s.error).sum();
        }
    }
    value = heap.iter().map(|s| s.value).sum();
    error = heap.iter().map(|s| s.error).sum();
    Ok(QuadResult { value, error })
}

/// `∫_a^b f(x) dx` where either limit may be infinite.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult { value: 0.0, error: 0.0 });
    }
    if a > b {
        let r = integrate(f, b, a, abs_tol, rel_tol)?;
        return Ok(QuadResult { value: -r.value, error: r.error });
    }
    match (a.is_finite(), b.is_finite()) {
        (true, true) => adapt(f, a, b, abs_tol, rel_tol),
        (true, false) => adapt(
            |t| {
                let s = 1.0 - t;
                f(a + t / s) / (s * s)
            },
            0.0,
            1.0,
            abs_tol,
            rel_tol,
        ),
        (false, true) => adapt(
            |t| {
                let s = 1.0 - t;
                f(b - t / s) / (s * s)
            },
            0.0,
            1.0,
            abs_tol,
            rel_tol,
        ),
        (false, false) => adapt(
            |t| {
                let s = 1.0 - t * t;
                f(t / s) * (1.0 + t * t) / (s * s)
            },
            -1.0,
            1.0,
            abs_tol,
            rel_tol,
        ),
    }
}

/// `∫_{x0}^{x1} ∫_{y0(x)}^{y1(x)} f(x, y) dy dx`. The inner rule runs at a
/// tenth of the outer tolerance.
pub fn integrate_2d<F, G>(f: F, x0: f64, x1: f64, y_range: G, abs_tol: f64) -> Result<QuadResult>
where
    F: Fn(f64, f64) -> f64,
    G: Fn(f64) -> (f64, f64),
{
    let mut inner_err: Option<Error> = None;
    let outer = integrate(
        |x| {
            let (y0, y1) = y_range(x);
            match integrate(|y| f(x, y), y0, y1, 0.1 * abs_tol, 1e-10) {
                Ok(r) => r.value,
                Err(e) => {
                    inner_err.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        x0,
        x1,
        abs_tol,
        1e-10,
    );
    if let Some(e) = inner_err {
        return Err(e);
    }
    outer
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| x.powi(5) - 2.0 * x, 0.0, 2.0, 1e-14, 0.0).unwrap();
        assert!((r.value - (64.0 / 6.0 - 4.0)).abs() < 1e-13);
    }

    #[test]
    fn infinite_ranges() {
        let g = |x: f64| (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
        let full = integrate(g, f64::NEG_INFINITY, f64::INFINITY, 1e-13, 0.0).unwrap();
        assert!((full.value - 1.0).abs() < 1e-12);
        let half = integrate(g, 0.0, f64::INFINITY, 1e-13, 0.0).unwrap();
        assert!((half.value - 0.5).abs() < 1e-12);
        let left = integrate(|x| x * g(x), f64::NEG_INFINITY, 0.0, 1e-13, 0.0).unwrap();
        assert!((left.value + 1.0 / (2.0 * PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn reversed_limits_negate() {
        let r = integrate(|x| x.cos(), 1.0, 0.0, 1e-14, 0.0).unwrap();
        assert!((r.value + 1f64.sin()).abs() < 1e-14);
    }

    #[test]
    fn kink_needs_subdivision() {
        let r = integrate(|x: f64| x.abs(), -1.0, 2.0, 1e-12, 0.0).unwrap();
        assert!((r.value - 2.5).abs() < 1e-11);
    }

    #[test]
    fn triangle_area() {
        let r = integrate_2d(|_, _| 1.0, 0.0, 1.0, |x| (0.0, x), 1e-12).unwrap();
        assert!((r.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn divergent_integral_reports() {
        let r = integrate(|x: f64| 1.0 / x, 0.0, 1.0, 1e-10, 0.0);
        assert!(matches!(r, Err(Error::QuadratureNonConvergence { .. })));
    }
}
