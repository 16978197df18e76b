//! Statistical protocol for the logistic prognosis models.
//!
//! Cleaning, Shapiro-Wilk normality, Pearson/Spearman correlation, VIF
//! screening, univariate logistic screening, IRLS logistic regression with
//! Wald inference, ROC analysis and the nested with/without comparison.

mod clean;
mod compare;
mod correlate;
mod logistic;
mod matrix;
mod normality;
mod protocol;
mod roc;
mod vif;

pub use clean::{clean, CleaningReport, DEFAULT_MISSING_THRESHOLD};
pub use compare::{compare_with_without_dp, stratified_split, ComparisonReport, ModelSummary};
pub use correlate::{correlate, rank_average, CorrelationMethod, CorrelationMode, Correlation};
pub use logistic::{
    fit_logistic, likelihood_ratio_test, nagelkerke_r2, univariate_screen, LogisticFit, ScreenEntry, ScreenReport,
    ScreenStatus, Term, Z_95,
};
pub use matrix::DataMatrix;
pub use normality::{shapiro_wilk, ShapiroWilk};
pub use protocol::{run_protocol, ProtocolOptions, ProtocolReport};
pub use roc::{classify_metrics, roc, youden_threshold, ClassificationMetrics, RocCurve, RocPoint};
pub use vif::{vif, vif_screen, VifReport, VIF_LIMIT};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("sample size {n} outside supported range {min}..={max}")]
    SampleSize { n: usize, min: usize, max: usize },
    #[error("outcome has only one class")]
    OneClassOnly,
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("logistic fit did not converge after {} iterations", .0.iterations)]
    NonConverged(Box<LogisticFit>),
    #[error("every column was dropped during cleaning")]
    AllColumnsDropped,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("column {0} still has missing values")]
    MissingValues(String),
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("need more observations ({n}) than parameters ({p})")]
    TooFewObservations { n: usize, p: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("empty input")]
    EmptyInput,
}
