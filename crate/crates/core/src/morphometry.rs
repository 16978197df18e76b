//! Hole geometry, outer-band defects, composite indices and qualitative flags.
//!
//! Widths are measured along image rows, which are assumed parallel to the RPE
//! after device flattening. The hole is the largest 4-connected component of
//! `MacularHole` pixels; smaller specks are ignored.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ClassLabel, LabeledScan, Orientation, Stage};
use crate::dynamics::{self, DynamicFeatures};

#[derive(Debug, Error, PartialEq)]
pub enum MorphError {
    #[error("no scans for eye {eye_id} at stage {stage}")]
    NoScans { eye_id: String, stage: Stage },
    #[error("band defects are only defined for ELM and EZ, got {0}")]
    NotABand(ClassLabel),
}

/// A set of pixels as (row, col) pairs in raster order.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Component {
    pub pixels: Vec<(usize, usize)>,
}

impl Component {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Inclusive (top, bottom, left, right) bounds; `None` for an empty set.
    pub fn bounds(&self) -> Option<(usize, usize, usize, usize)> {
        let first = self.pixels.first()?;
        let init = (first.0, first.0, first.1, first.1);
        Some(self.pixels.iter().fold(init, |(t, b, l, r), &(row, col)| {
            (t.min(row), b.max(row), l.min(col), r.max(col))
        }))
    }
}

/// 4-connected components of a row-major mask, ordered by their first pixel in raster order.
pub fn connected_components(mask: &[bool], width: usize, height: usize) -> Vec<Component> {
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        while let Some(i) = queue.pop_front() {
            let (r, c) = (i / width, i % width);
            pixels.push((r, c));
            let mut visit = |j: usize| {
                if mask[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if r > 0 {
                visit(i - width);
            }
            if r + 1 < height {
                visit(i + width);
            }
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < width {
                visit(i + 1);
            }
        }
        pixels.sort_unstable();
        out.push(Component { pixels });
    }
    out
}

/// Largest component; the first in raster order wins ties.
pub fn largest_component(scan: &LabeledScan, label: ClassLabel) -> Option<Component> {
    connected_components(&scan.mask(label), scan.width(), scan.height())
        .into_iter()
        .fold(None, |best: Option<Component>, c| match best {
            Some(b) if b.len() >= c.len() => Some(b),
            _ => Some(c),
        })
}

/// Pixel-level hole measurements before spacing is applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HolePixels {
    pub top_row: usize,
    pub base_row: usize,
    pub mld_row: usize,
    pub mld_px: usize,
    pub bd_px: usize,
    pub area_px: usize,
}

impl HolePixels {
    pub fn height_rows(&self) -> usize {
        self.base_row - self.top_row + 1
    }

    pub fn e_rows(&self) -> usize {
        self.base_row - self.mld_row
    }
}

/// Per-row extent (`right - left + 1`) of a component, keyed by row, top to bottom.
pub fn row_widths(component: &Component) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize, usize)> = Vec::new();
    for &(r, c) in &component.pixels {
        match out.last_mut() {
            Some(last) if last.0 == r => {
                last.1 = last.1.min(c);
                last.2 = last.2.max(c);
            }
            _ => out.push((r, c, c)),
        }
    }
    out.into_iter().map(|(r, l, rt)| (r, rt - l + 1)).collect()
}

pub fn hole_pixels(component: &Component) -> Option<HolePixels> {
    let widths = row_widths(component);
    let &(top_row, _) = widths.first()?;
    let &(base_row, bd_px) = widths.last()?;
    // Scan bottom-up so the first strict minimum is the one nearest the base.
    let (mld_row, mld_px) = widths
        .iter()
        .rev()
        .fold((base_row, bd_px), |best, &(r, w)| if w < best.1 { (r, w) } else { best });
    Some(HolePixels { top_row, base_row, mld_row, mld_px, bd_px, area_px: component.len() })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HoleGeometry {
    pub hole_present: bool,
    pub mld_um: f64,
    pub bd_um: f64,
    pub e_um: f64,
    pub height_um: f64,
    pub hole_area_um2: f64,
    pub pseudocyst_area_um2: f64,
}

pub fn measure_hole(scan: &LabeledScan) -> HoleGeometry {
    let sp = scan.spacing();
    let pseudocyst_area_um2 = scan.count(ClassLabel::Pseudocysts) as f64 * sp.pixel_area();
    match largest_component(scan, ClassLabel::MacularHole).as_ref().and_then(hole_pixels) {
        None => HoleGeometry { pseudocyst_area_um2, ..HoleGeometry::default() },
        Some(px) => HoleGeometry {
            hole_present: true,
            mld_um: px.mld_px as f64 * sp.x(),
            bd_um: px.bd_px as f64 * sp.x(),
            e_um: px.e_rows() as f64 * sp.y(),
            height_um: px.height_rows() as f64 * sp.y(),
            hole_area_um2: px.area_px as f64 * sp.pixel_area(),
            pseudocyst_area_um2,
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandDefect {
    pub defect_um: f64,
    pub band_absent: bool,
}

/// Longest run of band-free columns strictly inside the band's column support.
/// `None` when the band has no pixels.
pub fn band_gap_columns(scan: &LabeledScan, band: ClassLabel) -> Option<usize> {
    let occupied: Vec<bool> = (0..scan.width())
        .map(|c| (0..scan.height()).any(|r| scan.get(r, c) == band))
        .collect();
    let left = occupied.iter().position(|&o| o)?;
    let right = occupied.iter().rposition(|&o| o)?;
    let (longest, _) = occupied[left..=right].iter().fold((0usize, 0usize), |(best, run), &o| {
        if o {
            (best, 0)
        } else {
            (best.max(run + 1), run + 1)
        }
    });
    Some(longest)
}

pub fn measure_band_defect(scan: &LabeledScan, band: ClassLabel) -> Result<BandDefect, MorphError> {
    if !matches!(band, ClassLabel::Elm | ClassLabel::Ez) {
        return Err(MorphError::NotABand(band));
    }
    Ok(match band_gap_columns(scan, band) {
        None => BandDefect { defect_um: 0.0, band_absent: true },
        Some(cols) => BandDefect { defect_um: cols as f64 * scan.spacing().x(), band_absent: false },
    })
}

/// Ratio indices; `None` where the denominator is zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CompositeIndices {
    pub mhi: Option<f64>,
    pub thi: Option<f64>,
    pub dhi: Option<f64>,
    pub area_ratio: Option<f64>,
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den).filter(|v| v.is_finite())
}

pub fn composite_indices(g: &HoleGeometry) -> CompositeIndices {
    CompositeIndices {
        mhi: ratio(g.height_um, g.bd_um),
        thi: ratio(g.height_um, g.mld_um),
        // A closed minimum diameter leaves DHI undefined along with THI.
        dhi: if g.mld_um > 0.0 { ratio(g.mld_um, g.bd_um) } else { None },
        area_ratio: ratio(g.hole_area_um2, g.pseudocyst_area_um2),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualitativeFlags {
    pub erm_present: bool,
    pub traction_space_present: bool,
}

pub const DEFAULT_MIN_PIXELS: usize = 10;

pub fn qualitative_flags(scan: &LabeledScan, min_pixels: usize) -> QualitativeFlags {
    let min_pixels = min_pixels.max(1);
    QualitativeFlags {
        erm_present: scan.count(ClassLabel::Erm) >= min_pixels,
        traction_space_present: scan.count(ClassLabel::Space) >= min_pixels,
    }
}

/// Everything measured on a single B-scan.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanMeasurements {
    pub orientation: Orientation,
    pub hole: HoleGeometry,
    pub elm: BandDefect,
    pub ez: BandDefect,
    pub composite: CompositeIndices,
    pub flags: QualitativeFlags,
    pub hole_circularity: Option<f64>,
    pub cyst_circularity: Option<f64>,
}

pub fn measure_scan(scan: &LabeledScan, min_pixels: usize) -> ScanMeasurements {
    let hole = measure_hole(scan);
    let circ = |label| {
        largest_component(scan, label).and_then(|c| dynamics::circularity(&c, scan.spacing()).ok())
    };
    ScanMeasurements {
        orientation: scan.orientation(),
        hole,
        elm: measure_band_defect(scan, ClassLabel::Elm).expect("ELM is a band"),
        ez: measure_band_defect(scan, ClassLabel::Ez).expect("EZ is a band"),
        composite: composite_indices(&hole),
        flags: qualitative_flags(scan, min_pixels),
        hole_circularity: circ(ClassLabel::MacularHole),
        cyst_circularity: circ(ClassLabel::Pseudocysts),
    }
}

/// Per-stage feature row ("Values"). Undefined entries are `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub eye_id: String,
    pub stage: Option<Stage>,
    pub hole_present: Option<bool>,
    pub mld_um: Option<f64>,
    pub bd_um: Option<f64>,
    pub e_um: Option<f64>,
    pub height_um: Option<f64>,
    pub hole_area_um2: Option<f64>,
    pub pseudocyst_area_um2: Option<f64>,
    pub elm_defect_um: Option<f64>,
    pub ez_defect_um: Option<f64>,
    pub mhi: Option<f64>,
    pub thi: Option<f64>,
    pub dhi: Option<f64>,
    pub area_ratio: Option<f64>,
    pub erm_present: Option<bool>,
    pub traction_space_present: Option<bool>,
    pub hole_circularity: Option<f64>,
    pub cyst_circularity: Option<f64>,
    /// Orientation tags that contributed, e.g. `"HV"`.
    pub orientations: String,
    pub dynamics: Option<DynamicFeatures>,
}

/// Names of the numeric feature columns, in output order.
pub const FEATURE_COLUMNS: [&str; 14] = [
    "mld_um",
    "bd_um",
    "e_um",
    "height_um",
    "hole_area_um2",
    "pseudocyst_area_um2",
    "elm_defect_um",
    "ez_defect_um",
    "mhi",
    "thi",
    "dhi",
    "area_ratio",
    "erm_present",
    "traction_space_present",
];

impl FeatureVector {
    /// Feature columns as numbers; flags become 0/1.
    pub fn columns(&self) -> Vec<(&'static str, Option<f64>)> {
        let flag = |b: Option<bool>| b.map(|b| if b { 1.0 } else { 0.0 });
        let values = [
            self.mld_um,
            self.bd_um,
            self.e_um,
            self.height_um,
            self.hole_area_um2,
            self.pseudocyst_area_um2,
            self.elm_defect_um,
            self.ez_defect_um,
            self.mhi,
            self.thi,
            self.dhi,
            self.area_ratio,
            flag(self.erm_present),
            flag(self.traction_space_present),
        ];
        FEATURE_COLUMNS.into_iter().zip(values).collect()
    }

    pub fn set_column(&mut self, name: &str, value: Option<f64>) -> bool {
        let flag = value.map(|v| v != 0.0);
        match name {
            "mld_um" => self.mld_um = value,
            "bd_um" => self.bd_um = value,
            "e_um" => self.e_um = value,
            "height_um" => self.height_um = value,
            "hole_area_um2" => self.hole_area_um2 = value,
            "pseudocyst_area_um2" => self.pseudocyst_area_um2 = value,
            "elm_defect_um" => self.elm_defect_um = value,
            "ez_defect_um" => self.ez_defect_um = value,
            "mhi" => self.mhi = value,
            "thi" => self.thi = value,
            "dhi" => self.dhi = value,
            "area_ratio" => self.area_ratio = value,
            "erm_present" => self.erm_present = flag,
            "traction_space_present" => self.traction_space_present = flag,
            "hole_circularity" => self.hole_circularity = value,
            "cyst_circularity" => self.cyst_circularity = value,
            _ => return false,
        }
        true
    }
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Combines per-scan measurements: mean of defined scalars, logical OR of flags.
pub fn combine_measurements(
    eye_id: &str,
    stage: Stage,
    per_scan: &[ScanMeasurements],
) -> Result<FeatureVector, MorphError> {
    if per_scan.is_empty() {
        return Err(MorphError::NoScans { eye_id: eye_id.to_string(), stage });
    }
    let mean = |f: &dyn Fn(&ScanMeasurements) -> Option<f64>| mean_defined(per_scan.iter().map(f));
    Ok(FeatureVector {
        eye_id: eye_id.to_string(),
        stage: Some(stage),
        hole_present: Some(per_scan.iter().any(|m| m.hole.hole_present)),
        mld_um: mean(&|m| Some(m.hole.mld_um)),
        bd_um: mean(&|m| Some(m.hole.bd_um)),
        e_um: mean(&|m| Some(m.hole.e_um)),
        height_um: mean(&|m| Some(m.hole.height_um)),
        hole_area_um2: mean(&|m| Some(m.hole.hole_area_um2)),
        pseudocyst_area_um2: mean(&|m| Some(m.hole.pseudocyst_area_um2)),
        elm_defect_um: mean(&|m| Some(m.elm.defect_um)),
        ez_defect_um: mean(&|m| Some(m.ez.defect_um)),
        mhi: mean(&|m| m.composite.mhi),
        thi: mean(&|m| m.composite.thi),
        dhi: mean(&|m| m.composite.dhi),
        area_ratio: mean(&|m| m.composite.area_ratio),
        erm_present: Some(per_scan.iter().any(|m| m.flags.erm_present)),
        traction_space_present: Some(per_scan.iter().any(|m| m.flags.traction_space_present)),
        hole_circularity: mean(&|m| m.hole_circularity),
        cyst_circularity: mean(&|m| m.cyst_circularity),
        orientations: per_scan.iter().map(|m| m.orientation.tag()).collect(),
        dynamics: None,
    })
}

/// Measures every available scan of one record and combines them.
pub fn extract_features(
    eye_id: &str,
    stage: Stage,
    scans: &[LabeledScan],
    min_pixels: usize,
) -> Result<FeatureVector, MorphError> {
    let per_scan: Vec<ScanMeasurements> = scans.iter().map(|s| measure_scan(s, min_pixels)).collect();
    combine_measurements(eye_id, stage, &per_scan)
}

/// Fills `rows x cols` with one label.
pub fn paint_rect(
    scan: &mut LabeledScan,
    label: ClassLabel,
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<usize>,
) {
    for r in rows {
        for c in cols.clone() {
            scan.set(r, c, label);
        }
    }
}
