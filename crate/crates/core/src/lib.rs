//! Automated analysis chain for longitudinal macular-hole OCT studies.
//!
//! The crate is organised bottom-up:
//!
//! * [`data`]: scans, stages, study records, manifests and outcome labels.
//! * [`morphometry`]: hole geometry, outer-band defects, composite indices and
//!   qualitative flags measured on multi-class label masks.
//! * [`dynamics`]: recovery rates of each lesion across follow-up stages.
//! * [`stats`]: cleaning, normality, correlation, VIF screening, logistic
//!   regression with Wald inference and ROC analysis.
//! * [`segmetrics`]: per-class segmentation quality metrics.
//! * [`fusion`]: a small cross-attention classifier over image tokens,
//!   clinical vectors and feature vectors, trained with exact gradients.
//! * [`report`]: CSV / SVG emitters shared by the command-line tool.

pub mod data;
pub mod dynamics;
pub mod fusion;
pub mod morphometry;
pub mod report;
pub mod segmetrics;
pub mod stats;

pub use data::{
    ClassLabel, LabeledScan, LongitudinalSeries, Orientation, OutcomeLabel, PixelSpacing, Stage,
    StageDays, StudyRecord,
};
