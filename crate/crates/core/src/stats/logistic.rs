//! Binary logistic regression by iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

use super::{classify_metrics, roc, ClassificationMetrics, DataMatrix, StatsError};

/// Normal quantile for two-sided 95% intervals.
pub const Z_95: f64 = 1.96;
const MAX_ITER: usize = 50;
const MAX_HALVINGS: usize = 30;
const TOL: f64 = 1e-8;
/// Linear predictors beyond this magnitude mean fitted probabilities within
/// ~1e-13 of 0 or 1; together with a rising likelihood this indicates separation.
const SEPARATION_ETA: f64 = 30.0;

/// One row of a coefficient table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub name: String,
    pub b: f64,
    pub se: f64,
    pub wald: f64,
    pub p: f64,
    pub odds_ratio: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Term {
    /// Wald statistic, two-sided p, odds ratio and 95% interval from an estimate and its SE.
    pub fn from_estimate(name: impl Into<String>, b: f64, se: f64) -> Self {
        let z = b / se;
        Term {
            name: name.into(),
            b,
            se,
            wald: z * z,
            // chi-square(1) upper tail of z^2, written via erfc for tail accuracy
            p: erfc(z.abs() / std::f64::consts::SQRT_2),
            odds_ratio: b.exp(),
            ci_low: (b - Z_95 * se).exp(),
            ci_high: (b + Z_95 * se).exp(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub intercept: Term,
    pub terms: Vec<Term>,
    pub loglik: f64,
    pub loglik_null: f64,
    pub nagelkerke_r2: f64,
    pub n: usize,
    pub converged: bool,
    pub separation: bool,
    pub iterations: usize,
    /// In-sample classification at threshold 0.5.
    pub metrics: Option<ClassificationMetrics>,
    pub auc: Option<f64>,
}

impl LogisticFit {
    pub fn coefficients(&self) -> Vec<f64> {
        std::iter::once(self.intercept.b).chain(self.terms.iter().map(|t| t.b)).collect()
    }

    pub fn term(&self, name: &str) -> Option<&Term> {
        self.terms.iter().find(|t| t.name == name)
    }

    /// Probability of the positive class for each row of a covariate block (no intercept column).
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                let eta = self.intercept.b + self.terms.iter().enumerate().map(|(j, t)| t.b * x[(i, j)]).sum::<f64>();
                sigmoid(eta)
            })
            .collect()
    }
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn loglik(eta: &DVector<f64>, y: &[bool]) -> f64 {
    eta.iter().zip(y).map(|(&e, &yi)| if yi { -softplus(-e) } else { -softplus(e) }).sum()
}

/// Log-likelihood of the intercept-only model.
fn null_loglik(y: &[bool]) -> f64 {
    let n = y.len() as f64;
    let k = y.iter().filter(|&&v| v).count() as f64;
    let term = |c: f64| if c > 0.0 { c * (c / n).ln() } else { 0.0 };
    term(k) + term(n - k)
}

/// Nagelkerke's rescaled Cox-Snell pseudo-R^2.
pub fn nagelkerke_r2(loglik: f64, loglik_null: f64, n: usize) -> f64 {
    let n = n as f64;
    let cox_snell = 1.0 - ((2.0 / n) * (loglik_null - loglik)).exp();
    let max = 1.0 - ((2.0 / n) * loglik_null).exp();
    if max <= 0.0 {
        return 0.0;
    }
    (cox_snell / max).clamp(0.0, 1.0)
}

/// Likelihood-ratio test between nested fits: statistic and chi-square upper tail.
pub fn likelihood_ratio_test(loglik_full: f64, loglik_reduced: f64, df: usize) -> (f64, f64) {
    let stat = (2.0 * (loglik_full - loglik_reduced)).max(0.0);
    if df == 0 {
        return (stat, 1.0);
    }
    let chi = ChiSquared::new(df as f64).expect("positive df");
    (stat, chi.sf(stat))
}

/// Fits `logit P(y) = b0 + x b` by Newton-Raphson.
///
/// `x` holds covariates only; the intercept is added here. Converges when
/// `max |delta b| < 1e-8` or stops after 50 iterations. Separation or a
/// singular information matrix mid-way yields `NonConverged` with the last
/// iterate.
pub fn fit_logistic(x: &DMatrix<f64>, names: &[String], y: &[bool]) -> Result<LogisticFit, StatsError> {
    let (n, p) = (x.nrows(), x.ncols());
    if names.len() != p || y.len() != n {
        return Err(StatsError::ShapeMismatch(format!(
            "{n}x{p} design, {} names, {} outcomes",
            names.len(),
            y.len()
        )));
    }
    if n <= p + 1 {
        return Err(StatsError::TooFewObservations { n, p: p + 1 });
    }
    let positives = y.iter().filter(|&&v| v).count();
    if positives == 0 || positives == n {
        return Err(StatsError::OneClassOnly);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::DegenerateSample("non-finite covariate".into()));
    }

    let mut design = DMatrix::from_element(n, p + 1, 1.0);
    design.columns_mut(1, p).copy_from(x);
    let sv = design.singular_values();
    if sv.min() <= 1e-10 * sv.max() {
        return Err(StatsError::RankDeficient);
    }
    let yv = DVector::from_iterator(n, y.iter().map(|&v| f64::from(u8::from(v))));

    let information = |beta: &DVector<f64>| {
        let eta = &design * beta;
        let mu = eta.map(sigmoid);
        let w = mu.map(|m| m * (1.0 - m));
        let mut xw = design.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= w[i];
        }
        (eta, mu, design.transpose() * xw)
    };

    let mut beta = DVector::zeros(p + 1);
    // Start at the null model so intercept-only fits converge in one step.
    let ybar = positives as f64 / n as f64;
    beta[0] = (ybar / (1.0 - ybar)).ln();
    let mut ll = loglik(&(&design * &beta), y);
    let (mut converged, mut separation, mut iterations) = (false, false, 0);
    for iter in 1..=MAX_ITER {
        iterations = iter;
        let (_, mu, info) = information(&beta);
        let score = design.transpose() * (&yv - &mu);
        let Some(chol) = info.cholesky() else {
            if iter == 1 {
                return Err(StatsError::RankDeficient);
            }
            break;
        };
        // Step halving keeps badly scaled designs from overshooting into a worse likelihood.
        let mut delta = chol.solve(&score);
        let (mut eta, mut new_ll) = (DVector::zeros(n), f64::NEG_INFINITY);
        for _ in 0..MAX_HALVINGS {
            eta = &design * (&beta + &delta);
            new_ll = loglik(&eta, y);
            if new_ll.is_finite() && new_ll >= ll - 1e-12 * ll.abs() {
                break;
            }
            delta *= 0.5;
        }
        beta += &delta;
        let rising = new_ll > ll;
        ll = new_ll;
        if delta.amax() < TOL {
            converged = true;
            break;
        }
        if rising && eta.amax() > SEPARATION_ETA {
            separation = true;
            break;
        }
    }

    let (eta, mu, info) = information(&beta);
    let cov = info.clone().try_inverse();
    if cov.is_none() && converged {
        return Err(StatsError::RankDeficient);
    }
    let se = |j: usize| cov.as_ref().map_or(f64::NAN, |c| c[(j, j)].max(0.0).sqrt());
    let loglik_value = loglik(&eta, y);
    let loglik_null = null_loglik(y);
    let loglik_model = if p == 0 { loglik_null } else { loglik_value };
    let probs: Vec<f64> = mu.iter().copied().collect();
    let metrics = classify_metrics(&probs, y, 0.5).ok();
    let auc = roc(&probs, y).ok().map(|r| r.auc);
    let fit = LogisticFit {
        intercept: Term::from_estimate("(Intercept)", beta[0], se(0)),
        terms: names.iter().enumerate().map(|(j, nm)| Term::from_estimate(nm.clone(), beta[j + 1], se(j + 1))).collect(),
        loglik: loglik_model,
        loglik_null,
        nagelkerke_r2: if p == 0 { 0.0 } else { nagelkerke_r2(loglik_model, loglik_null, n) },
        n,
        converged,
        separation,
        iterations,
        metrics,
        auc,
    };
    if converged {
        Ok(fit)
    } else {
        Err(StatsError::NonConverged(Box::new(fit)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ScreenStatus {
    Fitted,
    NonConverged,
    Failed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreenEntry {
    pub column: String,
    pub p: Option<f64>,
    pub b: Option<f64>,
    pub status: ScreenStatus,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScreenReport {
    pub alpha: f64,
    pub entries: Vec<ScreenEntry>,
    pub selected: Vec<String>,
}

/// Single-covariate logistic fit per column; keeps columns with Wald `p < alpha`.
/// Columns whose fit fails or does not converge are skipped and reported.
pub fn univariate_screen(m: &DataMatrix, alpha: f64) -> Result<ScreenReport, StatsError> {
    let y = m.labels()?;
    let positives = y.iter().filter(|&&v| v).count();
    if positives == 0 || positives == y.len() {
        return Err(StatsError::OneClassOnly);
    }
    let mut report = ScreenReport { alpha, ..Default::default() };
    for name in &m.columns {
        let names = vec![name.clone()];
        let entry = match m.design(&names).and_then(|(x, y)| fit_logistic(&x, &names, &y)) {
            Ok(fit) => {
                let t = &fit.terms[0];
                if t.p < alpha {
                    report.selected.push(name.clone());
                }
                ScreenEntry { column: name.clone(), p: Some(t.p), b: Some(t.b), status: ScreenStatus::Fitted }
            }
            Err(StatsError::NonConverged(fit)) => ScreenEntry {
                column: name.clone(),
                p: None,
                b: Some(fit.terms[0].b),
                status: ScreenStatus::NonConverged,
            },
            Err(e) => ScreenEntry { column: name.clone(), p: None, b: None, status: ScreenStatus::Failed(e.to_string()) },
        };
        report.entries.push(entry);
    }
    Ok(report)
}
