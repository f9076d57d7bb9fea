use nalgebra::DVector;

use super::*;
use crate::esn::{esn_conditional, esn_marginal, esn_mean_cov};
use crate::linalg::PartitionIndex;
use crate::tn::tn_first_two_corrected;

const INF: f64 = f64::INFINITY;

fn esn(mu: &[f64], rows: &[&[f64]], lambda: &[f64], tau: f64) -> EsnParams {
    let s = SymMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
    EsnParams::new(DVector::from_column_slice(mu), s, DVector::from_column_slice(lambda), tau).unwrap()
}

fn bi() -> EsnParams {
    esn(&[0.2, -0.4], &[&[1.0, 0.35], &[0.35, 1.4]], &[1.2, -0.8], 0.5)
}

fn tri() -> EsnParams {
    esn(
        &[0.3, -0.2, 0.5],
        &[&[1.2, 0.4, -0.3], &[0.4, 0.9, 0.2], &[-0.3, 0.2, 1.5]],
        &[1.5, -0.7, 0.4],
        0.6,
    )
}

fn bx(lo: &[f64], hi: &[f64]) -> TruncationBox {
    TruncationBox::new(lo.to_vec(), hi.to_vec()).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

#[test]
fn orthant_probability() {
    let p = esn(&[0.0], &[&[1.0]], &[1.0], 0.0);
    let l = tesn_prob(&TruncationBox::positive_orthant(1), &p, &Settings::default()).unwrap();
    assert!((l.value - 0.75).abs() < 1e-12, "{}", l.value);
}

#[test]
fn whole_space_probability() {
    let l = tesn_prob(&TruncationBox::unbounded(3), &tri(), &Settings::default()).unwrap();
    assert!((l.value - 1.0).abs() < 1e-6);
}

#[test]
fn univariate_table_matches_quadrature() {
    // ∫_{-1}^{2} x^k φ(x) Φ(1 + 2x) dx / Φ(1/√5)
    let want = [
        0.954_382_793_889_366_4,
        0.413_677_215_141_587_65,
        0.596_844_205_528_639_8,
        0.671_887_179_856_757_7,
        1.026_755_045_991_073_9,
    ];
    let p = esn(&[0.0], &[&[1.0]], &[2.0], 1.0);
    let t = tesn_fk_univariate(-1.0, 2.0, &p, 4, &Settings::default()).unwrap();
    for (k, w) in want.iter().enumerate() {
        let got = t.value(&MultiIndex::new(vec![k as u32])).unwrap();
        assert!((got - w).abs() < 1e-9, "k={k}: {got} vs {w}");
    }
}

#[test]
fn univariate_half_normal_first_moment() {
    let p = EsnParams::normal(NormalParams::standard(1));
    let t = tesn_fk_univariate(0.0, INF, &p, 1, &Settings::default()).unwrap();
    let got = t.value(&MultiIndex::new(vec![1])).unwrap();
    assert!((got - 0.398_942_280_401_432_7).abs() < 1e-14);
}

#[test]
fn order_zero_is_probability() {
    let s = Settings::default();
    for (b, p) in [
        (bx(&[-1.0], &[2.0]), esn(&[0.1], &[&[1.3]], &[-1.5], 0.7)),
        (bx(&[-0.5, -1.0], &[1.5, 0.8]), bi()),
    ] {
        let l = tesn_prob(&b, &p, &s).unwrap().value;
        let z = MultiIndex::zeros(p.dim());
        assert!(close(tesn_fk(&b, &p, &z, &s).unwrap(), l, 1e-12));
        assert!(close(tesn_fk_via_normal(&b, &p, &z, &s).unwrap(), l, 1e-12));
        assert_eq!(tesn_moment(&b, &p, &z, TesnMethod::Auto, &s).unwrap(), 1.0);
    }
}

#[test]
fn untruncated_mean_matches_closed_form() {
    let s = Settings::default();
    for p in [bi(), tri()] {
        let want = esn_mean_cov(&p).unwrap();
        let b = TruncationBox::unbounded(p.dim());
        let got = tesn_mean_cov(&b, &p, &s).unwrap();
        for i in 0..p.dim() {
            assert!((got.mean[i] - want.mean[i]).abs() < 5e-5);
            let m = tesn_moment(&b, &p, &MultiIndex::unit(p.dim(), i), TesnMethod::Recurrence, &s).unwrap();
            assert!((m - want.mean[i]).abs() < 5e-5, "{m} vs {}", want.mean[i]);
            for j in 0..p.dim() {
                assert!((got.cov.get(i, j) - want.cov.get(i, j)).abs() < 5e-5);
            }
        }
    }
}

#[test]
fn recurrence_agrees_with_normal_reduction() {
    let s = Settings::default();
    let cases = [
        (bx(&[-0.5, -1.0], &[1.5, 0.8]), bi()),
        (bx(&[-INF, -0.3], &[0.9, INF]), bi()),
        (bx(&[-1.0, -0.5, -INF], &[1.0, 1.5, 0.7]), tri()),
    ];
    for (b, p) in cases {
        let dim = p.dim();
        let mut ks = vec![MultiIndex::zeros(dim)];
        for i in 0..dim {
            ks.push(MultiIndex::unit(dim, i));
            for j in i..dim {
                ks.push(MultiIndex::unit(dim, i).plus(j));
            }
        }
        ks.push(MultiIndex::unit(dim, 0).plus(0).plus(dim - 1));
        let r = tesn_moments(&b, &p, &ks, TesnMethod::Recurrence, &s).unwrap();
        let n = tesn_moments(&b, &p, &ks, TesnMethod::NormalReduction, &s).unwrap();
        for ((k, x), y) in ks.iter().zip(&r).zip(&n) {
            assert!(close(*x, *y, 1e-4), "{k:?}: {x} vs {y}");
        }
        for k in [&ks[1], ks.last().unwrap()] {
            let f = tesn_fk(&b, &p, k, &s).unwrap();
            let g = tesn_fk_via_normal(&b, &p, k, &s).unwrap();
            assert!(close(f, g, 1e-4), "{k:?}: {f} vs {g}");
        }
    }
}

#[test]
fn direct_path_agrees_with_reduction() {
    let s = Settings::default();
    let cases = [
        (bx(&[-0.5, -1.0], &[1.5, 0.8]), bi()),
        (bx(&[0.0, -INF], &[INF, 0.5]), bi()),
        (bx(&[-1.0, -0.5, -INF], &[1.0, 1.5, 0.7]), tri()),
    ];
    for (b, p) in cases {
        let a = tesn_mean_cov(&b, &p, &s).unwrap();
        let d = tesn_mean_cov_direct(&b, &p, &s).unwrap();
        let r = tesn_first_two_recurrence(&b, &p, &s).unwrap();
        for i in 0..p.dim() {
            assert!(close(d.mean[i], a.mean[i], 1e-4), "{} vs {}", d.mean[i], a.mean[i]);
            assert!(close(r.mean[i], a.mean[i], 1e-4));
            for j in 0..p.dim() {
                assert!(close(d.cov.get(i, j), a.cov.get(i, j), 1e-4), "{i}{j}: {} vs {}", d.cov.get(i, j), a.cov.get(i, j));
                assert!(close(r.cov.get(i, j), a.cov.get(i, j), 1e-4));
            }
        }
    }
}

#[test]
fn normal_special_case() {
    let s = Settings::default();
    let n = NormalParams::new(DVector::from_column_slice(&[0.2, -0.1]), bi().sigma.clone()).unwrap();
    let p = EsnParams::normal(n.clone());
    let b = bx(&[-0.5, -1.0], &[1.5, 0.8]);
    let want = tn_first_two_corrected(&b, &n, &s).unwrap();
    for got in [tesn_mean_cov(&b, &p, &s).unwrap(), tesn_mean_cov_direct(&b, &p, &s).unwrap()] {
        assert!(got.max_abs_diff(&want) < 1e-6);
    }
}

#[test]
fn deep_tau_uses_limit() {
    let s = Settings::default();
    let p = esn(&[0.2, -0.4], &[&[1.0, 0.35], &[0.35, 1.4]], &[1.2, -0.8], -200.0);
    let b = bx(&[-0.5, -1.0], &[1.5, 0.8]);
    let want = tn_first_two_corrected(&b, &crate::esn::esn_limit_params(&p).unwrap(), &s).unwrap();
    let (got, trace) = tesn_mean_cov_traced(&b, &p, &s).unwrap();
    assert!(got.max_abs_diff(&want) < 1e-6);
    assert_eq!(trace.first(), Some(&Correction::LimitTau));
    assert!(tesn_mean_cov_direct(&b, &p, &s).unwrap().max_abs_diff(&want) < 1e-6);
}

#[test]
fn edge_data_matches_marginal_and_conditional() {
    let p = tri();
    let b = bx(&[-1.0, -0.5, -INF], &[1.0, 1.5, 0.7]);
    for j in 0..2 {
        let e = EdgeConditional::new(&b, &p, j).unwrap();
        let marg = esn_marginal(&p, &PartitionIndex::from_kept(3, &[j]).unwrap()).unwrap();
        let x = b.lower()[j];
        let pdf = crate::esn::esn_pdf(&DVector::from_element(1, x), &marg).unwrap();
        assert!(close(e.edge_pdf_a, pdf, 1e-12), "{} vs {pdf}", e.edge_pdf_a);

        let part = PartitionIndex::from_removed(3, &[j]).unwrap();
        let cond = esn_conditional(&p, &part, &DVector::from_element(1, x)).unwrap();
        let child = e.child_params(false).unwrap().unwrap();
        assert!((&child.mu - &cond.mu).amax() < 1e-12);
        assert!((child.sigma.as_matrix() - cond.sigma.as_matrix()).amax() < 1e-12);
        assert!((&child.lambda - &cond.lambda).amax() < 1e-10);
        assert!((child.tau - cond.tau).abs() < 1e-12);
    }
    let e = EdgeConditional::new(&b, &p, 2).unwrap();
    assert!(e.child_params(false).is_none());
    assert_eq!(e.edge_pdf_a, 0.0);
}

#[test]
fn dropping_an_edge_matches_far_limit() {
    let s = Settings::default();
    let p = bi();
    let a = tesn_mean_cov_direct(&bx(&[-INF, -1.0], &[1.5, 0.8]), &p, &s).unwrap();
    let b = tesn_mean_cov_direct(&bx(&[-40.0, -1.0], &[1.5, 0.8]), &p, &s).unwrap();
    assert!(a.max_abs_diff(&b) < 1e-10);
}
