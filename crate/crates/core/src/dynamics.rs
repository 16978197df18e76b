//! Dynamic recovery parameters.
//!
//! A lesion's recovery rate is its preoperative size divided by the nominal day
//! of the first follow-up stage at which it is no longer visible. Lesions that
//! never resolve within the observed stages are censored with rate 0 and a flag.
//! An optional shape weight `1 + lambda * (1 - circularity)` scales the rate.

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{PixelSpacing, Stage, StageDays};
use crate::morphometry::{Component, FeatureVector};

#[derive(Debug, Error, PartialEq)]
pub enum DynError {
    #[error("no preoperative measurement for {0:?}")]
    MissingBaseline(Lesion),
    #[error("resolution day must be positive")]
    ZeroDay,
    #[error("shape weight needs a non-empty component")]
    EmptyComponent,
    #[error("eye {0} has no preoperative features")]
    MissingBaselineFeatures(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Lesion {
    MacularHoleArea,
    PseudocystArea,
    ElmDefect,
    EzDefect,
}

impl Lesion {
    pub const ALL: [Lesion; 4] =
        [Lesion::MacularHoleArea, Lesion::PseudocystArea, Lesion::ElmDefect, Lesion::EzDefect];

    /// Column prefix in the dynamics CSV.
    pub fn column(self) -> &'static str {
        match self {
            Lesion::MacularHoleArea => "rr_hole",
            Lesion::PseudocystArea => "rr_cyst",
            Lesion::ElmDefect => "rr_elm",
            Lesion::EzDefect => "rr_ez",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Lesion::MacularHoleArea | Lesion::PseudocystArea => "um2",
            Lesion::ElmDefect | Lesion::EzDefect => "um",
        }
    }

    fn size(self, fv: &FeatureVector) -> Option<f64> {
        match self {
            Lesion::MacularHoleArea => fv.hole_area_um2,
            Lesion::PseudocystArea => fv.pseudocyst_area_um2,
            Lesion::ElmDefect => fv.elm_defect_um,
            Lesion::EzDefect => fv.ez_defect_um,
        }
    }

    fn circularity(self, fv: &FeatureVector) -> Option<f64> {
        match self {
            Lesion::MacularHoleArea => fv.hole_circularity,
            Lesion::PseudocystArea => fv.cyst_circularity,
            Lesion::ElmDefect | Lesion::EzDefect => None,
        }
    }
}

/// Size of one lesion at each stage; `None` marks a stage without a measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct LesionTrajectory {
    pub lesion: Lesion,
    pub values: BTreeMap<Stage, Option<f64>>,
}

impl LesionTrajectory {
    pub fn new(lesion: Lesion, values: impl IntoIterator<Item = (Stage, Option<f64>)>) -> Self {
        Self { lesion, values: values.into_iter().collect() }
    }

    pub fn baseline(&self) -> Option<f64> {
        self.values.get(&Stage::Pre).copied().flatten()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Resolution {
    /// First follow-up day at or below epsilon. `degenerate` marks a lesion that
    /// was already at or below epsilon preoperatively.
    Resolved { day: u32, degenerate: bool },
    Censored { degenerate: bool },
}

/// Earliest follow-up stage (up to and including `cutoff`) at which the lesion size is `<= epsilon`.
pub fn resolution_day(
    traj: &LesionTrajectory,
    epsilon: f64,
    days: &StageDays,
    cutoff: Option<Stage>,
) -> Result<Resolution, DynError> {
    let initial = traj.baseline().ok_or(DynError::MissingBaseline(traj.lesion))?;
    let mut postop = traj
        .values
        .iter()
        .filter(|(&st, _)| st != Stage::Pre && cutoff.is_none_or(|c| st <= c))
        .filter_map(|(&st, v)| v.map(|v| (st, v)));
    if initial <= epsilon {
        return Ok(match postop.next() {
            Some((st, _)) => Resolution::Resolved { day: days.day(st), degenerate: true },
            None => Resolution::Censored { degenerate: true },
        });
    }
    Ok(postop
        .find(|&(_, v)| v <= epsilon)
        .map_or(Resolution::Censored { degenerate: false }, |(st, _)| Resolution::Resolved {
            day: days.day(st),
            degenerate: false,
        }))
}

pub fn recovery_rate(initial: f64, resolve_day: u32) -> Result<f64, DynError> {
    if resolve_day == 0 {
        return Err(DynError::ZeroDay);
    }
    Ok(initial / f64::from(resolve_day))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRate {
    pub raw_rate: f64,
    pub weighted_rate: f64,
    pub censored: bool,
    pub resolve_day: Option<u32>,
    pub shape_weight: f64,
    pub degenerate: bool,
}

impl RecoveryRate {
    pub fn from_resolution(initial: f64, resolution: Resolution) -> Result<Self, DynError> {
        let (raw_rate, censored, resolve_day, degenerate) = match resolution {
            Resolution::Resolved { day, degenerate } => (recovery_rate(initial, day)?, false, Some(day), degenerate),
            Resolution::Censored { degenerate } => (0.0, true, None, degenerate),
        };
        Ok(Self { raw_rate, weighted_rate: raw_rate, censored, resolve_day, shape_weight: 1.0, degenerate })
    }
}

pub fn weighted_recovery_rate(r: RecoveryRate, weight: f64) -> RecoveryRate {
    RecoveryRate { weighted_rate: r.raw_rate * weight, shape_weight: weight, ..r }
}

/// `4 pi A / P^2` with `P` the outer-boundary edge length (4-connectivity edge
/// count scaled by spacing), clamped to `(0, 1]`. Interior holes do not count
/// towards the perimeter.
pub fn circularity(component: &Component, spacing: PixelSpacing) -> Result<f64, DynError> {
    let (top, bottom, left, right) = component.bounds().ok_or(DynError::EmptyComponent)?;
    // Padded local grid: 0 = unknown, 1 = component, 2 = outside.
    let (h, w) = (bottom - top + 3, right - left + 3);
    let mut grid = vec![0u8; h * w];
    for &(r, c) in &component.pixels {
        grid[(r - top + 1) * w + (c - left + 1)] = 1;
    }
    let mut queue = VecDeque::from([0usize]);
    grid[0] = 2;
    while let Some(i) = queue.pop_front() {
        let (r, c) = (i / w, i % w);
        let neighbours = [
            (r > 0).then(|| i - w),
            (r + 1 < h).then(|| i + w),
            (c > 0).then(|| i - 1),
            (c + 1 < w).then(|| i + 1),
        ];
        for j in neighbours.into_iter().flatten() {
            if grid[j] == 0 {
                grid[j] = 2;
                queue.push_back(j);
            }
        }
    }
    let (mut horizontal_edges, mut vertical_edges) = (0usize, 0usize);
    for i in (0..grid.len()).filter(|&i| grid[i] == 1) {
        // The padding guarantees every component cell has four in-bounds neighbours.
        horizontal_edges += usize::from(grid[i - w] == 2) + usize::from(grid[i + w] == 2);
        vertical_edges += usize::from(grid[i - 1] == 2) + usize::from(grid[i + 1] == 2);
    }
    let area = component.len() as f64 * spacing.pixel_area();
    let perimeter = horizontal_edges as f64 * spacing.x() + vertical_edges as f64 * spacing.y();
    let c = 4.0 * PI * area / (perimeter * perimeter);
    Ok(c.clamp(f64::MIN_POSITIVE, 1.0))
}

pub fn weight_from_circularity(c: f64, lambda: f64) -> f64 {
    1.0 + lambda * (1.0 - c.clamp(0.0, 1.0))
}

pub fn shape_weight(component: &Component, spacing: PixelSpacing, lambda: f64) -> Result<f64, DynError> {
    Ok(weight_from_circularity(circularity(component, spacing)?, lambda))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    pub days: StageDays,
    /// Absolute resolution threshold per lesion, in `Lesion::ALL` order.
    pub epsilon: [f64; 4],
    /// Shape weighting strength; `None` disables weighting.
    pub lambda: Option<f64>,
    /// Ignore stages after this one.
    pub cutoff: Option<Stage>,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self { days: StageDays::default(), epsilon: [0.0; 4], lambda: None, cutoff: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicFeatures {
    pub rates: [RecoveryRate; 4],
}

/// Column names appended to the baseline feature row.
pub const DYNAMIC_COLUMNS: [&str; 12] = [
    "rr_hole",
    "rr_hole_w",
    "rr_hole_censored",
    "rr_cyst",
    "rr_cyst_w",
    "rr_cyst_censored",
    "rr_elm",
    "rr_elm_w",
    "rr_elm_censored",
    "rr_ez",
    "rr_ez_w",
    "rr_ez_censored",
];

impl DynamicFeatures {
    pub fn rate(&self, lesion: Lesion) -> &RecoveryRate {
        &self.rates[lesion as usize]
    }

    pub fn columns(&self) -> Vec<(&'static str, f64)> {
        let values = self.rates.iter().flat_map(|r| [r.raw_rate, r.weighted_rate, f64::from(u8::from(r.censored))]);
        DYNAMIC_COLUMNS.into_iter().zip(values).collect()
    }
}

/// Recovery rates for all four lesions of one eye, from its per-stage features.
pub fn derive_dynamics(
    eye_id: &str,
    features: &BTreeMap<Stage, FeatureVector>,
    params: &DynamicsParams,
) -> Result<DynamicFeatures, DynError> {
    let pre = features.get(&Stage::Pre).ok_or_else(|| DynError::MissingBaselineFeatures(eye_id.to_string()))?;
    let mut rates = [RecoveryRate::from_resolution(0.0, Resolution::Censored { degenerate: true })?; 4];
    for (slot, lesion) in rates.iter_mut().zip(Lesion::ALL) {
        let traj = LesionTrajectory::new(lesion, features.iter().map(|(&st, fv)| (st, lesion.size(fv))));
        let initial = traj.baseline().ok_or(DynError::MissingBaseline(lesion))?;
        let resolution = resolution_day(&traj, params.epsilon[lesion as usize], &params.days, params.cutoff)?;
        let rate = RecoveryRate::from_resolution(initial, resolution)?;
        let weight = match (params.lambda, lesion.circularity(pre)) {
            (Some(lambda), Some(c)) => weight_from_circularity(c, lambda),
            _ => 1.0,
        };
        *slot = weighted_recovery_rate(rate, weight);
    }
    Ok(DynamicFeatures { rates })
}

/// Derives dynamics and stores them on the baseline feature vector.
pub fn attach_dynamics(
    eye_id: &str,
    features: &mut BTreeMap<Stage, FeatureVector>,
    params: &DynamicsParams,
) -> Result<(), DynError> {
    let dynamics = derive_dynamics(eye_id, features, params)?;
    if let Some(pre) = features.get_mut(&Stage::Pre) {
        pre.dynamics = Some(dynamics);
    }
    Ok(())
}
