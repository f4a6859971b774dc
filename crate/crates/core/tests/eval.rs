mod common;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use proptest::prelude::*;
use sparsevar::eval::{self, MetricReport, RunMetrics, Summary};
use sparsevar::var_model::VarCoefficients;
use sparsevar::Method;

fn coef(vals: &[f64]) -> VarCoefficients {
    VarCoefficients::new(vec![DMatrix::from_row_slice(2, 2, vals)]).unwrap()
}

#[test]
fn classification_rates() {
    let truth = coef(&[0.5, 0.0, 0.0, 0.3]);
    let est = coef(&[0.4, 0.1, 0.0, 0.0]);
    assert_eq!(eval::tpr(&est, &truth).unwrap(), 0.5);
    assert_eq!(eval::tnr(&est, &truth).unwrap(), 0.5);
    let maee = eval::maee(&[est.clone(), truth.clone()], &truth).unwrap();
    assert!((maee - (0.1 + 0.1 + 0.3) / 4.0 / 2.0).abs() < 1e-15);
    // tiny values count as nonzero
    let eps = coef(&[1e-300, 0.0, 0.0, 0.0]);
    assert_eq!(eval::tpr(&eps, &truth).unwrap(), 0.5);
    assert!(eval::tpr(&truth, &coef(&[0.0; 4])).is_err());
    assert!(eval::tnr(&truth, &coef(&[1.0; 4])).is_err());
    let other = VarCoefficients::new(vec![DMatrix::zeros(3, 3)]).unwrap();
    assert!(eval::maee(&[other], &truth).is_err());
}

#[test]
fn forecast_error() {
    let f = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
    let a = DMatrix::from_row_slice(2, 2, &[1.5, 2.0, 2.0, 4.5]);
    assert!((eval::mafe(&f, &a).unwrap() - 0.5).abs() < 1e-15);
    assert!(eval::mafe(&f, &DMatrix::zeros(1, 2)).is_err());
}

#[test]
fn paired_t_matches_reference_values() {
    let a = [0.31, 0.42, 0.29, 0.55, 0.38, 0.47, 0.33, 0.41];
    let b = [0.35, 0.40, 0.36, 0.58, 0.45, 0.49, 0.30, 0.47];
    let r = eval::paired_t(&a, &b).unwrap();
    assert!((r.statistic - (-2.201398157116028)).abs() < 1e-10);
    assert!((r.p_value - 0.06359962262480948).abs() < 1e-8);
    let same = eval::paired_t(&a, &a).unwrap();
    assert_eq!((same.statistic, same.p_value), (0.0, 1.0));
    let whole = [1.0, 2.0, 5.0, 3.0];
    let shifted: Vec<f64> = whole.iter().map(|v| v + 0.5).collect();
    let s = eval::paired_t(&shifted, &whole).unwrap();
    assert!(s.statistic.is_infinite() && s.p_value == 0.0);
    assert!(eval::paired_t(&a[..1], &b[..1]).is_err());
}

#[test]
fn diebold_mariano_one_step_is_a_rescaled_t() {
    let a: Vec<f64> = (0..30)
        .map(|i| 0.3 + 0.05 * ((i * 7) % 11) as f64)
        .collect();
    let b: Vec<f64> = (0..30)
        .map(|i| 0.32 + 0.04 * ((i * 5) % 13) as f64)
        .collect();
    let dm = eval::diebold_mariano(&a, &b, 1).unwrap();
    let t = eval::paired_t(&a, &b).unwrap();
    let n = 30.0f64;
    assert!((dm.statistic - t.statistic * (n / (n - 1.0)).sqrt()).abs() < 1e-12);
    assert!(!dm.degenerate);
    let same = eval::diebold_mariano(&a, &a, 1).unwrap();
    assert!(same.degenerate && same.p_value == 1.0);
    assert!(eval::diebold_mariano(&a[..5], &b[..5], 1).is_err());
    assert!(eval::diebold_mariano(&a, &b, 0).is_err());
}

#[test]
fn diebold_mariano_long_run_variance() {
    let a: Vec<f64> = common::gaussian_matrix(20, 1, 4)
        .iter()
        .map(|v| v.abs())
        .collect();
    let b = vec![0.5; 20];
    let d: Vec<f64> = a.iter().map(|v| v - 0.5).collect();
    let n = 20.0;
    let m = d.iter().sum::<f64>() / n;
    let g = |l: usize| (l..20).map(|t| (d[t] - m) * (d[t - l] - m)).sum::<f64>() / n;
    let lrv = g(0) + 2.0 * g(1) + 2.0 * g(2);
    assert!(lrv > 0.0);
    let dm = eval::diebold_mariano(&a, &b, 3).unwrap();
    let want = m / (lrv / n).sqrt();
    assert!(
        (dm.statistic - want).abs() < 1e-12,
        "{} vs {want}",
        dm.statistic
    );
}

#[test]
fn kendall_w_examples() {
    let agree = DMatrix::from_row_slice(
        3,
        4,
        &[
            1.0, 2.0, 3.0, 4.0, 10.0, 20.0, 30.0, 40.0, 0.1, 0.2, 0.3, 0.4,
        ],
    );
    let w = eval::kendall_w(&agree).unwrap();
    assert!((w.w - 1.0).abs() < 1e-12);
    assert!((w.chi_square - 9.0).abs() < 1e-12);

    // two judges with reversed rankings disagree completely
    let reversed = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 3.0, 2.0, 1.0]);
    let w = eval::kendall_w(&reversed).unwrap();
    assert!(w.w.abs() < 1e-12);
    assert!((w.p_value - 1.0).abs() < 1e-12);

    // tie-corrected: ranks (1.5, 1.5, 3) and (1, 2, 3) give W = 13/14
    let tied = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 2.0, 1.0, 2.0, 3.0]);
    let w = eval::kendall_w(&tied).unwrap();
    assert!((w.w - 13.0 / 14.0).abs() < 1e-12);
    assert!((w.chi_square - 26.0 / 7.0).abs() < 1e-12);

    assert!(eval::kendall_w(&DMatrix::from_element(3, 3, 1.0)).is_err());
    assert!(eval::kendall_w(&DMatrix::zeros(1, 3)).is_err());
}

#[test]
fn ranks_average_ties() {
    assert_eq!(
        eval::rank_with_ties(&[3.0, 1.0, 3.0, 2.0]),
        vec![3.5, 1.0, 3.5, 2.0]
    );
}

#[test]
fn summary_standard_error() {
    let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(s.mean, 2.5);
    assert!((s.se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    assert!(Summary::of(&[]).is_none());
}

#[test]
fn report_rows_and_outputs() {
    let mut runs = BTreeMap::new();
    runs.insert(
        Method::Sparse,
        RunMetrics {
            maee: vec![0.04, 0.05, 0.045],
            tpr: vec![0.8, 0.9, 0.85],
            tnr: vec![0.8, 0.85, 0.9],
            mafe: vec![0.3, 0.31, 0.32],
        },
    );
    runs.insert(
        Method::Ls,
        RunMetrics {
            maee: vec![0.15, 0.16, 0.17],
            tpr: vec![1.0; 3],
            tnr: vec![0.0; 3],
            mafe: vec![0.34, 0.35, 0.33],
        },
    );
    let rep = MetricReport::build(&runs, Method::Sparse).unwrap();
    let row = rep.row(Method::Sparse).unwrap();
    assert!((row.maee.unwrap().mean - 0.045).abs() < 1e-12);
    assert!(rep
        .comparisons
        .iter()
        .any(|c| c.metric == "maee" && c.b == Method::Ls && c.statistic < 0.0));
    let table = rep.to_table();
    assert!(table.contains("Sparse VAR") && table.contains("LS"));
    let mut buf = Vec::new();
    rep.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 3);
    let mut buf = Vec::new();
    rep.write_comparisons_csv(&mut buf).unwrap();
    assert!(String::from_utf8(buf)
        .unwrap()
        .starts_with("metric,test,a,b,statistic,p_value"));
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

proptest! {
    /// Without ties, W relates to the mean pairwise Spearman correlation by
    /// `ρ̄ = (mW − 1)/(m − 1)`.
    #[test]
    fn kendall_w_matches_mean_spearman(m in 2usize..6, n in 3usize..8, seed in 0u64..1000) {
        let scores = common::gaussian_matrix(m, n, seed);
        let w = eval::kendall_w(&scores).unwrap();
        let ranks: Vec<Vec<f64>> = (0..m)
            .map(|r| eval::rank_with_ties(&scores.row(r).iter().copied().collect::<Vec<_>>()))
            .collect();
        let mut total = 0.0;
        let mut pairs = 0.0;
        for i in 0..m {
            for j in i + 1..m {
                total += pearson(&ranks[i], &ranks[j]);
                pairs += 1.0;
            }
        }
        let mf = m as f64;
        prop_assert!(((mf * w.w - 1.0) / (mf - 1.0) - total / pairs).abs() < 1e-10);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&w.w));
    }

    #[test]
    fn paired_t_is_antisymmetric(seed in 0u64..1000) {
        let a: Vec<f64> = common::gaussian_matrix(12, 1, seed).iter().copied().collect();
        let b: Vec<f64> = common::gaussian_matrix(12, 1, seed + 1).iter().copied().collect();
        let ab = eval::paired_t(&a, &b).unwrap();
        let ba = eval::paired_t(&b, &a).unwrap();
        prop_assert!((ab.statistic + ba.statistic).abs() < 1e-12);
        prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab.p_value));
    }
}

#[test]
fn estimation_error_examples() {
    let truth = coef(&[0.5, 0.0, -0.2, 0.3]);
    assert_eq!(
        eval::maee(&[truth.clone(), truth.clone()], &truth).unwrap(),
        0.0
    );
    let off = coef(&[0.6, -0.1, -0.1, 0.2]);
    assert!((eval::maee(&[off], &truth).unwrap() - 0.1).abs() < 1e-15);
    assert_eq!(eval::tpr(&truth, &truth).unwrap(), 1.0);
    assert_eq!(eval::tnr(&truth, &truth).unwrap(), 1.0);
    let dense = coef(&[0.1, 0.2, 0.3, 0.4]);
    assert_eq!(
        (
            eval::tpr(&dense, &truth).unwrap(),
            eval::tnr(&dense, &truth).unwrap()
        ),
        (1.0, 0.0)
    );
    let f = DMatrix::from_element(3, 2, 1.0);
    assert_eq!(eval::mafe(&f, &f).unwrap(), 0.0);
    assert!((eval::mafe(&f, &(f.add_scalar(0.25))).unwrap() - 0.25).abs() < 1e-15);
}

#[test]
fn metrics_are_permutation_consistent() {
    let truth = VarCoefficients::new(vec![common::gaussian_matrix(4, 4, 1).map(|v| {
        if v.abs() < 0.7 {
            0.0
        } else {
            v
        }
    })])
    .unwrap();
    let est = VarCoefficients::new(vec![common::gaussian_matrix(4, 4, 2).map(|v| {
        if v.abs() < 0.5 {
            0.0
        } else {
            v
        }
    })])
    .unwrap();
    let perm = [2, 0, 3, 1];
    let (tp, ep) = (truth.permuted(&perm), est.permuted(&perm));
    assert_eq!(
        eval::maee(std::slice::from_ref(&est), &truth).unwrap(),
        eval::maee(std::slice::from_ref(&ep), &tp).unwrap()
    );
    assert_eq!(
        eval::tpr(&est, &truth).unwrap(),
        eval::tpr(&ep, &tp).unwrap()
    );
    assert_eq!(
        eval::tnr(&est, &truth).unwrap(),
        eval::tnr(&ep, &tp).unwrap()
    );
}

#[test]
fn diebold_mariano_calibration() {
    // d_t i.i.d. N(0.1, 1): statistic ≈ 0.1·√n = 10 with unit spread
    let n = 10_000;
    let z = common::gaussian_matrix(n, 1, 77);
    let a: Vec<f64> = z.iter().map(|v| 5.0 + 0.1 + v).collect();
    let b = vec![5.0; n];
    let dm = eval::diebold_mariano(&a, &b, 1).unwrap();
    assert!(
        (dm.statistic - 10.0).abs() < 3.0,
        "statistic {}",
        dm.statistic
    );
    assert!(dm.p_value < 1e-10);
    let same = eval::diebold_mariano(&a, &a, 1).unwrap();
    assert_eq!(same.statistic, 0.0);
    assert_eq!(same.p_value, 1.0);
}

#[test]
fn kendall_null_mean_is_one_over_judges() {
    use rand::seq::SliceRandom;
    let (m, n, sims) = (15, 17, 10_000);
    let mut rng = sparsevar::var_model::rng_for(3, 0);
    let mut items: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let mut total = 0.0;
    for _ in 0..sims {
        let mut scores = DMatrix::zeros(m, n);
        for r in 0..m {
            items.shuffle(&mut rng);
            for (c, v) in items.iter().enumerate() {
                scores[(r, c)] = *v;
            }
        }
        total += eval::kendall_w(&scores).unwrap().w;
    }
    let mean = total / sims as f64;
    assert!((mean * m as f64 - 1.0).abs() < 0.1, "mean W {mean}");
}
