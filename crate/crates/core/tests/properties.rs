use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use tesn::esn::{esn_cdf, esn_conditional, esn_derive, esn_marginal, esn_pdf, AugmentedNormal, EsnParams};
use tesn::folded::{flip_params, SignPattern};
use tesn::linalg::{conditional_normal, select, sym_sqrt};
use tesn::mvn::{mvn_pdf, mvn_prob};
use tesn::tesn::{tesn_mean_cov, tesn_prob};
use tesn::tn::tn_first_two_corrected;
use tesn::{NormalParams, PartitionIndex, QmcConfig, Settings, SymMatrix, TruncationBox};

fn spd(p: usize) -> impl Strategy<Value = SymMatrix> {
    prop::collection::vec(-1.0..1.0f64, p * p).prop_map(move |a| {
        let a = DMatrix::from_vec(p, p, a);
        SymMatrix::symmetrize(&a * a.transpose() + DMatrix::identity(p, p) * 0.5)
    })
}

fn vector(p: usize, r: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-r..r, p).prop_map(DVector::from_vec)
}

fn esn(p: usize) -> impl Strategy<Value = EsnParams> {
    (vector(p, 1.0), spd(p), vector(p, 2.0), -1.5..1.5f64)
        .prop_map(|(mu, s, l, t)| EsnParams::new(mu, s, l, t).unwrap())
}

/// Lower corner in [-2, 0.5], width in [0.5, 3]; roughly a third of the sides open.
fn boxes(p: usize) -> impl Strategy<Value = TruncationBox> {
    prop::collection::vec((-2.0..0.5f64, 0.5..3.0f64, 0u8..6), p).prop_map(|sides| {
        let lo = sides.iter().map(|&(a, _, k)| if k == 0 { f64::NEG_INFINITY } else { a }).collect();
        let hi = sides.iter().map(|&(a, w, k)| if k == 1 { f64::INFINITY } else { a + w }).collect();
        TruncationBox::new(lo, hi).unwrap()
    })
}

fn dim_and<S: Strategy>(f: impl Fn(usize) -> S) -> impl Strategy<Value = S::Value> {
    (1usize..=3).prop_flat_map(f)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn square_root_squares_back(s in dim_and(|p| spd(p))) {
        let r = sym_sqrt(&s, 1e-12).unwrap();
        let back = r.as_matrix() * r.as_matrix();
        prop_assert!((back - s.as_matrix()).norm() <= 1e-12 * s.as_matrix().norm());
    }

    #[test]
    fn conditional_covariance_is_psd(s in spd(3), mu in vector(3, 1.0), x in vector(1, 2.0), j in 0usize..3) {
        let given = PartitionIndex::from_removed(3, &[j]).unwrap();
        let (_, c) = conditional_normal(&mu, &s, &given, &x).unwrap();
        let tr = c.diagonal().sum();
        prop_assert!(c.eigen_range().0 >= -1e-10 * tr);
        prop_assert_eq!(c.as_matrix(), &c.as_matrix().transpose());
    }

    #[test]
    fn partition_round_trip(v in vector(4, 5.0), j in 0usize..4) {
        let part = PartitionIndex::from_removed(4, &[j]).unwrap();
        let kept = select(&v, part.kept());
        let removed = select(&v, part.removed());
        prop_assert_eq!(part.merge(&kept, &removed), v);
    }

    #[test]
    fn zero_skewness_is_normal(p in dim_and(|p| esn(p).prop_map(move |e| (e, p))), x in vector(3, 2.0)) {
        let (e, n) = p;
        let normal = EsnParams::normal(e.normal_part());
        let x = x.rows(0, n).into_owned();
        let a = esn_pdf(&x, &normal).unwrap();
        let b = mvn_pdf(&x, &e.normal_part()).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * b.max(1e-300));
    }

    #[test]
    fn marginal_times_conditional(e in esn(3), x in vector(3, 1.5), j in 0usize..3) {
        let keep = PartitionIndex::from_kept(3, &[j]).unwrap();
        let marg = esn_marginal(&e, &keep).unwrap();
        let given = PartitionIndex::from_removed(3, &[j]).unwrap();
        let xj = DVector::from_element(1, x[j]);
        let cond = esn_conditional(&e, &given, &xj).unwrap();
        let rest = select(&x, given.kept());
        let whole = esn_pdf(&x, &e).unwrap();
        let prod = esn_pdf(&xj, &marg).unwrap() * esn_pdf(&rest, &cond).unwrap();
        prop_assert!((whole - prod).abs() <= 1e-10 * whole, "{} vs {}", whole, prod);
    }

    #[test]
    fn sign_flip_closure(e in esn(3), x in vector(3, 2.0), bits in 0u8..8) {
        let s = SignPattern::new((0..3).map(|i| if bits >> i & 1 == 1 { -1 } else { 1 }).collect()).unwrap();
        let a = esn_pdf(&s.apply(&x), &e).unwrap();
        let b = esn_pdf(&x, &flip_params(&e, &s).unwrap()).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
    }

    #[test]
    fn univariate_complement(mu in -1.0..1.0f64, var in 0.3..3.0f64, a in -2.0..0.0f64, w in 0.1..3.0f64) {
        let n = NormalParams::new(DVector::from_element(1, mu), SymMatrix::from_diagonal(&[var])).unwrap();
        let cfg = QmcConfig::default();
        let pr = |lo: f64, hi: f64| mvn_prob(&TruncationBox::new(vec![lo], vec![hi]).unwrap(), &n, &cfg).unwrap().value;
        let total = pr(a, a + w) + pr(f64::NEG_INFINITY, a) + pr(a + w, f64::INFINITY);
        prop_assert!((total - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn whole_space_has_unit_mass(s in spd(3), mu in vector(3, 1.0)) {
        let n = NormalParams::new(mu, s).unwrap();
        let pr = mvn_prob(&TruncationBox::unbounded(3), &n, &QmcConfig::default()).unwrap();
        prop_assert!((pr.value - 1.0).abs() <= pr.abs_error + 1e-12);
    }

    #[test]
    fn enlarging_the_box_adds_mass(e in esn(2), b in boxes(2), grow in 0.1..1.0f64) {
        let s = Settings::default();
        let big = TruncationBox::new(
            b.lower().iter().map(|x| x - grow).collect(),
            b.upper().iter().map(|x| x + grow).collect(),
        ).unwrap();
        let small = tesn_prob(&b, &e, &s).unwrap();
        let large = tesn_prob(&big, &e, &s).unwrap();
        prop_assert!(small.value <= large.value + small.abs_error + large.abs_error);
    }

    #[test]
    fn sn_cdf_factor_two(e in esn(2), y in vector(2, 1.5)) {
        let sn = EsnParams::new(e.mu.clone(), e.sigma.clone(), e.lambda.clone(), 0.0).unwrap();
        let s = Settings::default();
        let c = esn_cdf(&y, &sn, &s).unwrap();
        let aug = AugmentedNormal::new(&sn, &esn_derive(&sn).unwrap());
        let upper = TruncationBox::new(vec![f64::NEG_INFINITY; 2], y.iter().copied().collect()).unwrap();
        let joint = mvn_prob(&aug.extend_box(&upper).unwrap(), &aug.params(), &s.qmc).unwrap();
        prop_assert!((c.value - 2.0 * joint.value).abs() <= c.abs_error + 2.0 * joint.abs_error + 1e-12);
    }

    #[test]
    fn truncated_mean_stays_in_box(e in dim_and(esn), seed in 0u64..1000) {
        let p = e.dim();
        let lo: Vec<f64> = (0..p).map(|i| -1.0 - 0.1 * ((seed + i as u64) % 7) as f64).collect();
        let hi: Vec<f64> = lo.iter().map(|a| a + 1.3).collect();
        let b = TruncationBox::new(lo, hi).unwrap();
        let m = tesn_mean_cov(&b, &e, &Settings::default()).unwrap();
        for i in 0..p {
            prop_assert!(b.lower()[i] <= m.mean[i] && m.mean[i] <= b.upper()[i]);
        }
        prop_assert!(m.cov.eigen_range().0 >= -1e-8 * m.cov.diagonal().sum());
    }

    #[test]
    fn normal_truncated_mean_stays_in_box(s in spd(2), mu in vector(2, 3.0), b in boxes(2)) {
        let n = NormalParams::new(mu, s).unwrap();
        let m = tn_first_two_corrected(&b, &n, &Settings::default()).unwrap();
        for i in 0..2 {
            prop_assert!(b.lower()[i] <= m.mean[i] && m.mean[i] <= b.upper()[i]);
        }
    }
}
