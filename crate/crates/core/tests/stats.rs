mod common;

use common::{assert_close, floats, logistic_dataset, oracles, shapiro_sample, SplitMix64};
use nalgebra::{DMatrix, DVector};
use octdyn_core::stats::{
    classify_metrics, clean, compare_with_without_dp, correlate, fit_logistic, roc, shapiro_wilk,
    univariate_screen, vif, vif_screen, CorrelationMethod, CorrelationMode, DataMatrix, StatsError, Term,
};
use proptest::prelude::*;

fn design(rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

fn names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("x{j}")).collect()
}

#[test]
fn logistic_matches_reference_fits() {
    let fx = oracles();
    for (k, case) in fx["logistic"].as_array().unwrap().iter().enumerate() {
        let (x, y) = logistic_dataset(k as u64);
        let x_sum: f64 = x.iter().flatten().sum();
        assert_close(x_sum, case["x_sum"].as_f64().unwrap(), 1e-9 * x_sum.abs().max(1.0), "x checksum");
        assert_eq!(y.iter().filter(|&&v| v).count() as u64, case["positives"].as_u64().unwrap());
        let fit = fit_logistic(&design(&x), &names(x[0].len()), &y).unwrap();
        let coef = fit.coefficients();
        let se: Vec<f64> = std::iter::once(fit.intercept.se).chain(fit.terms.iter().map(|t| t.se)).collect();
        for (j, (c, s)) in floats(&case["coef"]).iter().zip(floats(&case["se"])).enumerate() {
            assert_close(coef[j], *c, 1e-6, &format!("dataset {k} coef {j}"));
            assert_close(se[j], s, 1e-6, &format!("dataset {k} se {j}"));
        }
        assert_close(fit.loglik, case["loglik"].as_f64().unwrap(), 1e-8, "loglik");
        assert_close(fit.nagelkerke_r2, case["nagelkerke_r2"].as_f64().unwrap(), 1e-8, "nagelkerke");
    }
}

#[test]
fn intercept_only_is_exactly_null() {
    let (_, y) = logistic_dataset(0);
    let fit = fit_logistic(&DMatrix::zeros(y.len(), 0), &[], &y).unwrap();
    assert_eq!(fit.nagelkerke_r2, 0.0);
    assert_eq!(fit.loglik, fit.loglik_null);
}

#[test]
fn published_coefficient_rows() {
    let t = Term::from_estimate("duration", -0.124, 0.045);
    assert_close(t.odds_ratio, 0.884, 0.001, "OR");
    assert_close(t.ci_low, 0.809, 0.003, "CI low");
    assert_close(t.ci_high, 0.965, 0.003, "CI high");
    assert_close(t.wald, 7.59, 0.01, "Wald");
    let t = Term::from_estimate("rr_ez", 0.261, 0.133);
    assert_close(t.odds_ratio, 1.298, 0.001, "OR");
    assert_close(t.ci_high, 1.685, 0.003, "CI high");
}

#[test]
fn shapiro_wilk_matches_reference() {
    let fx = oracles();
    for (s, case) in fx["shapiro"].as_array().unwrap().iter().enumerate() {
        let v = shapiro_sample(s as u64);
        assert_eq!(v.len() as u64, case["n"].as_u64().unwrap());
        let sum: f64 = v.iter().sum();
        assert_close(sum, case["sum"].as_f64().unwrap(), 1e-9 * sum.abs().max(1.0), "sample checksum");
        let r = shapiro_wilk(&v).unwrap();
        let (w, p) = (case["w"].as_f64().unwrap(), case["p"].as_f64().unwrap());
        assert_close(r.w, w, 1e-6, &format!("sample {s} W"));
        assert_close(r.p, p, 1e-4, &format!("sample {s} p"));
        assert_eq!(r.p > 0.05, p > 0.05, "sample {s} decision");
    }
}

#[test]
fn correlation_matches_reference() {
    let fx = oracles();
    let c = &fx["correlation"]["independent"];
    let mut rng = SplitMix64::new(7000);
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for _ in 0..200 {
        x.push(rng.normal());
        y.push(rng.normal());
    }
    let p = correlate(&x, &y, CorrelationMode::Pearson).unwrap();
    assert_close(p.r, c["pearson_r"].as_f64().unwrap(), 1e-12, "pearson r");
    assert_close(p.p, c["pearson_p"].as_f64().unwrap(), 1e-9, "pearson p");
    assert!(p.r.abs() < 0.2 && p.p > 0.01);
    let s = correlate(&x, &y, CorrelationMode::Spearman).unwrap();
    assert_close(s.r, c["spearman_r"].as_f64().unwrap(), 1e-12, "spearman r");
    assert_close(s.p, c["spearman_p"].as_f64().unwrap(), 1e-9, "spearman p");

    let t = &fx["correlation"]["tied"];
    let mut rng = SplitMix64::new(7001);
    let (mut tx, mut ty) = (Vec::new(), Vec::new());
    for _ in 0..60 {
        let a = (rng.uniform() * 5.0).floor();
        tx.push(a);
        ty.push(a + (rng.uniform() * 4.0).floor());
    }
    let s = correlate(&tx, &ty, CorrelationMode::Spearman).unwrap();
    assert_close(s.r, t["spearman_r"].as_f64().unwrap(), 1e-12, "tied spearman r");
    assert_close(s.p, t["spearman_p"].as_f64().unwrap(), 1e-12, "tied spearman p");
}

#[test]
fn correlation_examples() {
    let x: Vec<f64> = (0..30).map(|i| i as f64 * 0.37 - 4.0).collect();
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
    assert_close(correlate(&x, &y, CorrelationMode::Pearson).unwrap().r, 1.0, 1e-12, "linear");
    let cube: Vec<f64> = x.iter().map(|v| v.powi(3)).collect();
    assert_close(correlate(&x, &cube, CorrelationMode::Spearman).unwrap().r, 1.0, 1e-12, "monotone");
    assert!(correlate(&x, &cube, CorrelationMode::Pearson).unwrap().r < 1.0);
    assert!(matches!(correlate(&x, &vec![1.0; 30], CorrelationMode::Pearson), Err(StatsError::DegenerateSample(_))));
    // Exponential data fails the normality gate, so auto mode ranks.
    let mut rng = SplitMix64::new(3);
    let e: Vec<f64> = (0..100).map(|_| rng.exponential()).collect();
    let f: Vec<f64> = (0..100).map(|_| rng.exponential()).collect();
    assert_eq!(correlate(&e, &f, CorrelationMode::Auto).unwrap().method, CorrelationMethod::Spearman);
}

#[test]
fn screen_selects_the_informative_column() {
    let fx = oracles();
    let sc = &fx["screen"];
    let mut rng = SplitMix64::new(sc["seed"].as_u64().unwrap());
    let x: Vec<Vec<f64>> = (0..200).map(|_| (0..5).map(|_| rng.normal()).collect()).collect();
    let y: Vec<bool> = x.iter().map(|r| rng.uniform() < common::sigmoid(1.5 * r[2] - 0.2)).collect();
    let cols: Vec<(String, Vec<f64>)> = (0..5).map(|j| (format!("c{j}"), x.iter().map(|r| r[j]).collect())).collect();
    let refs: Vec<(&str, Vec<f64>)> = cols.iter().map(|(n, v)| (n.as_str(), v.clone())).collect();
    let m = DataMatrix::from_columns(&refs, &y).unwrap();
    let rep = univariate_screen(&m, 0.10).unwrap();
    assert_eq!(rep.selected, vec!["c2".to_string()]);
    for (e, p) in rep.entries.iter().zip(floats(&sc["p"])) {
        assert_close(e.p.unwrap(), p, 1e-8, &e.column);
    }
}

#[test]
fn screen_edge_cases() {
    let y: Vec<bool> = (0..40).map(|i| i % 2 == 0).collect();
    let same: Vec<f64> = (0..40).map(|i| (i / 2) as f64).collect();
    let sep: Vec<f64> = y.iter().map(|&v| f64::from(u8::from(v))).collect();
    let m = DataMatrix::from_columns(&[("same", same), ("sep", sep)], &y).unwrap();
    let rep = univariate_screen(&m, 0.10).unwrap();
    assert!(rep.entries[0].p.unwrap() > 0.9);
    assert!(rep.selected.is_empty());
    assert_eq!(rep.entries[1].status, octdyn_core::stats::ScreenStatus::NonConverged);
}

/// Brute-force VIF: normal equations `(Z'Z) b = Z'y` solved by LU.
fn vif_normal_equations(cols: &[Vec<f64>], j: usize) -> f64 {
    let n = cols[0].len();
    let others: Vec<&Vec<f64>> = cols.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, c)| c).collect();
    let z = DMatrix::from_fn(n, others.len() + 1, |i, k| if k == 0 { 1.0 } else { others[k - 1][i] });
    let y = DVector::from_column_slice(&cols[j]);
    let b = (z.transpose() * &z).lu().solve(&(z.transpose() * &y)).unwrap();
    let resid = &y - &z * b;
    let mean = y.mean();
    let r2 = 1.0 - resid.norm_squared() / y.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    1.0 / (1.0 - r2)
}

#[test]
fn vif_matches_normal_equations() {
    let mut rng = SplitMix64::new(11);
    let a: Vec<f64> = (0..80).map(|_| rng.normal()).collect();
    let b: Vec<f64> = a.iter().map(|v| 0.8 * v + 0.6 * rng.normal()).collect();
    let c: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.3 * x - 0.5 * y + rng.normal()).collect();
    let cols = vec![a.clone(), b.clone(), c.clone()];
    let m = DataMatrix::from_columns(&[("a", a), ("b", b), ("c", c)], &vec![true; 80]).unwrap();
    for (j, (_, v)) in vif(&m).unwrap().iter().enumerate() {
        assert_close(*v, vif_normal_equations(&cols, j), 1e-9, "vif");
    }
}

#[test]
fn duplicate_column_removed_once() {
    let mut rng = SplitMix64::new(12);
    let a: Vec<f64> = (0..50).map(|_| rng.normal()).collect();
    let b: Vec<f64> = (0..50).map(|_| rng.normal()).collect();
    let m = DataMatrix::from_columns(&[("a", a.clone()), ("b", b), ("a2", a)], &vec![true; 50]).unwrap();
    let rep = vif_screen(&m, 5.0).unwrap();
    assert!(rep.initial[0].1.is_infinite());
    assert_eq!(rep.removed.len(), 1);
    assert_eq!(rep.kept.len(), 2);
}

#[test]
fn auc_equals_pair_count() {
    let mut rng = SplitMix64::new(21);
    for _ in 0..100 {
        let n = 2 + rng.below(29);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.uniform() < 0.5).collect();
        labels[0] = true;
        labels[1] = false;
        // Coarse scores so ties are common.
        let scores: Vec<f64> = (0..n).map(|_| (rng.uniform() * 6.0).floor() / 6.0).collect();
        let mut concordant = 0.0;
        let (mut p, mut q) = (0.0, 0.0);
        for i in 0..n {
            if labels[i] {
                p += 1.0;
            } else {
                q += 1.0;
            }
        }
        for i in (0..n).filter(|&i| labels[i]) {
            for j in (0..n).filter(|&j| !labels[j]) {
                concordant += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
        assert_eq!(roc(&scores, &labels).unwrap().auc, concordant / (p * q));
    }
}

#[test]
fn confusion_examples() {
    let labels = [true, true, true, true, false, false, false, false, false, false];
    let scores = [0.9, 0.8, 0.7, 0.2, 0.1, 0.1, 0.3, 0.4, 0.6, 0.55];
    let m = classify_metrics(&scores, &labels, 0.5).unwrap();
    assert_eq!((m.tp, m.fn_, m.tn, m.fp), (3, 1, 4, 2));
    assert_close(m.accuracy, 0.7, 1e-15, "acc");
    assert_close(m.sensitivity, 0.75, 1e-15, "sens");
    assert_close(m.specificity, 4.0 / 6.0, 1e-15, "spec");
    let none = classify_metrics(&[0.1; 10], &labels, 0.5).unwrap();
    assert_eq!((none.sensitivity, none.specificity), (0.0, 1.0));
    let exact: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l))).collect();
    let all = classify_metrics(&exact, &labels, 0.5).unwrap();
    assert_eq!((all.accuracy, all.sensitivity, all.specificity), (1.0, 1.0, 1.0));
}

fn dp_matrix(seed: u64, informative_dp: bool) -> DataMatrix {
    let mut rng = SplitMix64::new(seed);
    let n = 300;
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); 3];
    let mut y = Vec::new();
    for _ in 0..n {
        let (a, b, rr) = (rng.normal(), rng.normal(), rng.normal());
        let eta = if informative_dp { 2.5 * rr } else { 1.2 * a };
        y.push(rng.uniform() < common::sigmoid(eta));
        cols[0].push(a);
        cols[1].push(b);
        cols[2].push(rr);
    }
    DataMatrix::from_columns(&[("age", cols[0].clone()), ("bd_um", cols[1].clone()), ("rr_ez", cols[2].clone())], &y)
        .unwrap()
}

#[test]
fn dynamic_parameter_comparison() {
    let dp = vec!["rr_ez".to_string()];
    let rep = compare_with_without_dp(&dp_matrix(31, true), &dp, 0.2, 0.5, 7).unwrap();
    assert!(rep.with_dp.test_metrics.accuracy > rep.without_dp.test_metrics.accuracy);
    assert!(rep.lr_p < 0.01);
    assert_eq!(rep.n_test, 60);

    let rep = compare_with_without_dp(&dp_matrix(32, false), &dp, 0.2, 0.5, 7).unwrap();
    assert!((rep.with_dp.test_roc.auc - rep.without_dp.test_roc.auc).abs() < 0.05);

    let rep = compare_with_without_dp(&dp_matrix(33, false), &[], 0.2, 0.5, 7).unwrap();
    assert_eq!((rep.lr_statistic, rep.lr_p), (0.0, 1.0));
}

fn column_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn odds_ratio_and_interval(b in -5.0f64..5.0, se in 0.001f64..3.0) {
        let t = Term::from_estimate("x", b, se);
        prop_assert!((t.odds_ratio / b.exp() - 1.0).abs() <= 1e-12);
        prop_assert!((t.ci_low / (b - 1.96 * se).exp() - 1.0).abs() <= 1e-12);
        prop_assert!((t.ci_high / (b + 1.96 * se).exp() - 1.0).abs() <= 1e-12);
        prop_assert!(t.ci_low < t.odds_ratio && t.odds_ratio < t.ci_high);
    }

    #[test]
    fn auc_shift_invariance(ints in prop::collection::vec(-50i32..50, 20), shift in -1000i32..1000, mask in prop::collection::vec(any::<bool>(), 20)) {
        // Integer-valued scores keep the shift exact, so ties are preserved.
        let mut labels = mask;
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = ints.iter().map(|&v| f64::from(v)).collect();
        let shifted: Vec<f64> = ints.iter().map(|&v| f64::from(v + shift)).collect();
        let (a, b) = (roc(&scores, &labels).unwrap(), roc(&shifted, &labels).unwrap());
        prop_assert_eq!(a.auc, b.auc);
        let rates = |c: &octdyn_core::stats::RocCurve| c.points.iter().map(|p| (p.fpr, p.tpr)).collect::<Vec<_>>();
        prop_assert_eq!(rates(&a), rates(&b));
    }

    #[test]
    fn spearman_monotone_invariance(x in column_strategy(25), y in column_strategy(25)) {
        prop_assume!(x.iter().any(|v| *v != x[0]) && y.iter().any(|v| *v != y[0]));
        let a = correlate(&x, &y, CorrelationMode::Spearman).unwrap();
        let tx: Vec<f64> = x.iter().map(|v| (v / 10.0).exp() + 3.0 * v).collect();
        let b = correlate(&tx, &y, CorrelationMode::Spearman).unwrap();
        prop_assert!((a.r - b.r).abs() < 1e-12);
    }

    #[test]
    fn clean_is_idempotent(cells in prop::collection::vec(prop::collection::vec(prop::option::weighted(0.9, -10.0f64..10.0), 4), 12..40)) {
        let n = cells.len();
        let outcome: Vec<Option<bool>> = (0..n).map(|i| if i % 7 == 3 { None } else { Some(i % 2 == 0) }).collect();
        let m = DataMatrix::new((0..4).map(|j| format!("c{j}")).collect(), cells, outcome).unwrap();
        match clean(&m, 0.10) {
            Ok((once, _)) => {
                let (twice, report) = clean(&once, 0.10).unwrap();
                prop_assert_eq!(&once, &twice);
                prop_assert!(report.imputed.is_empty() && report.dropped_columns.is_empty());
            }
            Err(e) => prop_assert!(matches!(e, StatsError::AllColumnsDropped)),
        }
    }
}

#[test]
fn logistic_scale_invariance() {
    let mut rng = SplitMix64::new(41);
    for k in [0.001, 0.5, 7.0, 1000.0] {
        let x: Vec<Vec<f64>> = (0..150).map(|_| vec![rng.normal(), rng.normal()]).collect();
        let y: Vec<bool> = x.iter().map(|r| rng.uniform() < common::sigmoid(0.8 * r[0] - 0.5 * r[1])).collect();
        let scaled: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0] * k, r[1]]).collect();
        let a = fit_logistic(&design(&x), &names(2), &y).unwrap();
        let b = fit_logistic(&design(&scaled), &names(2), &y).unwrap();
        assert_close(b.terms[0].b * k, a.terms[0].b, 1e-8, "scaled B");
        assert_close(b.terms[0].wald, a.terms[0].wald, 1e-8, "Wald");
        assert_close(b.terms[0].p, a.terms[0].p, 1e-8, "p");
        assert_close(b.loglik, a.loglik, 1e-8, "loglik");
    }
}

#[test]
fn vif_orthogonal_design_is_one() {
    // Columns of a 16-run two-level factorial are exactly orthogonal and centred.
    let cols: Vec<(String, Vec<f64>)> = (0..4)
        .map(|b| (format!("f{b}"), (0..16).map(|i| if (i >> b) & 1 == 1 { 1.0 } else { -1.0 }).collect()))
        .collect();
    let refs: Vec<(&str, Vec<f64>)> = cols.iter().map(|(n, v)| (n.as_str(), v.clone())).collect();
    let m = DataMatrix::from_columns(&refs, &[true; 16]).unwrap();
    for (_, v) in vif(&m).unwrap() {
        assert_eq!(v, 1.0);
    }
}
