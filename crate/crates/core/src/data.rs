//! Data model: label grids, follow-up stages, study records and manifests.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::{GrayImage, ImageReader};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("malformed manifest row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("duplicate stage {stage} for eye {eye_id}")]
    DuplicateStage { eye_id: String, stage: Stage },
    #[error("unknown label code {code} at (row {row}, col {col})")]
    UnknownLabelCode { code: u8, row: usize, col: usize },
    #[error("unreadable image {path}: {reason}")]
    UnreadableImage { path: PathBuf, reason: String },
    #[error("missing BCVA at stage {0}")]
    MissingBcva(Stage),
    #[error("invalid pixel spacing ({0}, {1})")]
    InvalidSpacing(f64, f64),
    #[error("invalid scan: {0}")]
    InvalidScan(String),
    #[error("invalid stage-day map: {0}")]
    InvalidStageDays(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Segmentation classes, with their on-disk label codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum ClassLabel {
    Background = 0,
    MacularHole = 1,
    Pseudocysts = 2,
    Erm = 3,
    Space = 4,
    Vmt = 5,
    Pvd = 6,
    Elm = 7,
    Ez = 8,
    Rpe = 9,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 10] = [
        ClassLabel::Background,
        ClassLabel::MacularHole,
        ClassLabel::Pseudocysts,
        ClassLabel::Erm,
        ClassLabel::Space,
        ClassLabel::Vmt,
        ClassLabel::Pvd,
        ClassLabel::Elm,
        ClassLabel::Ez,
        ClassLabel::Rpe,
    ];

    /// Every class except background, in code order.
    pub const FOREGROUND: [ClassLabel; 9] = [
        ClassLabel::MacularHole,
        ClassLabel::Pseudocysts,
        ClassLabel::Erm,
        ClassLabel::Space,
        ClassLabel::Vmt,
        ClassLabel::Pvd,
        ClassLabel::Elm,
        ClassLabel::Ez,
        ClassLabel::Rpe,
    ];

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Background => "Background",
            ClassLabel::MacularHole => "MacularHole",
            ClassLabel::Pseudocysts => "Pseudocysts",
            ClassLabel::Erm => "ERM",
            ClassLabel::Space => "Space",
            ClassLabel::Vmt => "VMT",
            ClassLabel::Pvd => "PVD",
            ClassLabel::Elm => "ELM",
            ClassLabel::Ez => "EZ",
            ClassLabel::Rpe => "RPE",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown class {s:?}"))
    }
}

/// Physical pixel size in micrometres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelSpacing {
    um_per_px_x: f64,
    um_per_px_y: f64,
}

impl PixelSpacing {
    pub fn new(um_per_px_x: f64, um_per_px_y: f64) -> Result<Self, DataError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(um_per_px_x) || !ok(um_per_px_y) {
            return Err(DataError::InvalidSpacing(um_per_px_x, um_per_px_y));
        }
        Ok(Self { um_per_px_x, um_per_px_y })
    }

    /// Lateral size of one pixel.
    pub fn x(&self) -> f64 {
        self.um_per_px_x
    }

    /// Axial size of one pixel.
    pub fn y(&self) -> f64 {
        self.um_per_px_y
    }

    pub fn pixel_area(&self) -> f64 {
        self.um_per_px_x * self.um_per_px_y
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    Horizontal,
    Vertical,
}

impl Orientation {
    pub fn tag(self) -> &'static str {
        match self {
            Orientation::Horizontal => "H",
            Orientation::Vertical => "V",
        }
    }
}

/// A 2D grid of class labels with its physical spacing.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledScan {
    width: usize,
    height: usize,
    labels: Vec<ClassLabel>,
    orientation: Orientation,
    spacing: PixelSpacing,
}

impl LabeledScan {
    /// Builds a scan from row-major label codes, rejecting unknown codes.
    pub fn from_codes(
        width: usize,
        height: usize,
        codes: &[u8],
        orientation: Orientation,
        spacing: PixelSpacing,
    ) -> Result<Self, DataError> {
        if width == 0 || height == 0 {
            return Err(DataError::InvalidScan(format!("empty grid {width}x{height}")));
        }
        if codes.len() != width * height {
            return Err(DataError::InvalidScan(format!(
                "expected {} codes for {width}x{height}, got {}",
                width * height,
                codes.len()
            )));
        }
        let labels = codes
            .iter()
            .enumerate()
            .map(|(i, &code)| {
                ClassLabel::from_code(code).ok_or(DataError::UnknownLabelCode {
                    code,
                    row: i / width,
                    col: i % width,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { width, height, labels, orientation, spacing })
    }

    /// All-background scan.
    pub fn blank(
        width: usize,
        height: usize,
        orientation: Orientation,
        spacing: PixelSpacing,
    ) -> Result<Self, DataError> {
        Self::from_codes(width, height, &vec![0; width * height], orientation, spacing)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn spacing(&self) -> PixelSpacing {
        self.spacing
    }

    pub fn labels(&self) -> &[ClassLabel] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> ClassLabel {
        self.labels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, label: ClassLabel) {
        self.labels[row * self.width + col] = label;
    }

    pub fn with_spacing(mut self, spacing: PixelSpacing) -> Self {
        self.spacing = spacing;
        self
    }

    pub fn count(&self, label: ClassLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Row-major boolean mask of one class.
    pub fn mask(&self, label: ClassLabel) -> Vec<bool> {
        self.labels.iter().map(|&l| l == label).collect()
    }

    pub fn codes(&self) -> Vec<u8> {
        self.labels.iter().map(|l| l.code()).collect()
    }
}

/// Reads an 8-bit single-channel PNG or PGM whose pixel values are label codes.
pub fn load_scan(
    path: &Path,
    spacing: PixelSpacing,
    orientation: Orientation,
) -> Result<LabeledScan, DataError> {
    let gray = read_gray(path)?;
    let (w, h) = gray.dimensions();
    LabeledScan::from_codes(w as usize, h as usize, gray.as_raw(), orientation, spacing)
}

/// Writes the label codes as an 8-bit grayscale image; format follows the extension.
pub fn write_scan(scan: &LabeledScan, path: &Path) -> Result<(), DataError> {
    let img = GrayImage::from_raw(scan.width as u32, scan.height as u32, scan.codes())
        .expect("buffer length matches dimensions");
    img.save(path).map_err(|e| DataError::UnreadableImage {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Reads an 8-bit grayscale image, refusing anything that would need colour conversion.
pub fn read_gray(path: &Path) -> Result<GrayImage, DataError> {
    if !path.exists() {
        return Err(DataError::FileNotFound(path.to_path_buf()));
    }
    let unreadable = |reason: String| DataError::UnreadableImage { path: path.to_path_buf(), reason };
    let img = ImageReader::open(path)
        .map_err(|e| unreadable(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| unreadable(e.to_string()))?
        .decode()
        .map_err(|e| unreadable(e.to_string()))?;
    match img {
        image::DynamicImage::ImageLuma8(g) => Ok(g),
        other => Err(unreadable(format!("expected 8-bit single channel, got {:?}", other.color()))),
    }
}

/// Follow-up stages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    Pre,
    W2,
    M3,
    M6,
    M12,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Pre, Stage::W2, Stage::M3, Stage::M6, Stage::M12];
    pub const POSTOP: [Stage; 4] = [Stage::W2, Stage::M3, Stage::M6, Stage::M12];

    pub fn tag(self) -> &'static str {
        match self {
            Stage::Pre => "PRE",
            Stage::W2 => "W2",
            Stage::M3 => "M3",
            Stage::M6 => "M6",
            Stage::M12 => "M12",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .iter()
            .copied()
            .find(|st| st.tag().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

/// Nominal days since surgery for each stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageDays([u32; 5]);

impl Default for StageDays {
    fn default() -> Self {
        StageDays([0, 14, 90, 180, 365])
    }
}

impl StageDays {
    pub fn new(days: [u32; 5]) -> Result<Self, DataError> {
        if days.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DataError::InvalidStageDays(format!(
                "days must be strictly increasing, got {days:?}"
            )));
        }
        Ok(StageDays(days))
    }

    pub fn day(&self, stage: Stage) -> u32 {
        self.0[stage.index()]
    }

    pub fn as_array(&self) -> [u32; 5] {
        self.0
    }
}

/// Where to find one B-scan of a record.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanRef {
    pub path: PathBuf,
    pub orientation: Orientation,
    /// Per-scan override of the global spacing.
    pub spacing: Option<PixelSpacing>,
}

/// One eye at one stage.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyRecord {
    pub eye_id: String,
    pub stage: Stage,
    pub bcva_etdrs: Option<u8>,
    /// Clinical covariates in manifest column order; `None` marks a missing cell.
    pub clinical: Vec<(String, Option<f64>)>,
    pub scans: Vec<ScanRef>,
}

impl StudyRecord {
    pub fn new(eye_id: impl Into<String>, stage: Stage) -> Self {
        Self { eye_id: eye_id.into(), stage, bcva_etdrs: None, clinical: Vec::new(), scans: Vec::new() }
    }

    pub fn with_bcva(mut self, letters: u8) -> Self {
        assert!(letters <= 100, "ETDRS letters lie in 0..=100");
        self.bcva_etdrs = Some(letters);
        self
    }

    pub fn clinical_value(&self, name: &str) -> Option<f64> {
        self.clinical.iter().find(|(n, _)| n == name).and_then(|(_, v)| *v)
    }
}

/// All records of one eye, keyed by stage.
#[derive(Clone, Debug, PartialEq)]
pub struct LongitudinalSeries {
    pub eye_id: String,
    pub records: BTreeMap<Stage, StudyRecord>,
}

impl LongitudinalSeries {
    pub fn new(eye_id: impl Into<String>) -> Self {
        Self { eye_id: eye_id.into(), records: BTreeMap::new() }
    }

    pub fn insert(&mut self, record: StudyRecord) -> Result<(), DataError> {
        if self.records.contains_key(&record.stage) {
            return Err(DataError::DuplicateStage { eye_id: self.eye_id.clone(), stage: record.stage });
        }
        self.records.insert(record.stage, record);
        Ok(())
    }

    pub fn baseline(&self) -> Option<&StudyRecord> {
        self.records.get(&Stage::Pre)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Superior,
    NotSuperior,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeLabel {
    pub value: Outcome,
    pub delta_letters: i32,
}

impl OutcomeLabel {
    pub fn is_superior(&self) -> bool {
        self.value == Outcome::Superior
    }
}

pub const DEFAULT_SUPERIOR_THRESHOLD: i32 = 20;

/// Labels the change in ETDRS letters between a baseline and a follow-up record.
pub fn outcome_label(
    pre: &StudyRecord,
    post: &StudyRecord,
    threshold: i32,
) -> Result<OutcomeLabel, DataError> {
    let before = pre.bcva_etdrs.ok_or(DataError::MissingBcva(pre.stage))?;
    let after = post.bcva_etdrs.ok_or(DataError::MissingBcva(post.stage))?;
    let delta_letters = i32::from(after) - i32::from(before);
    let value = if delta_letters >= threshold { Outcome::Superior } else { Outcome::NotSuperior };
    Ok(OutcomeLabel { value, delta_letters })
}

const RESERVED_COLUMNS: [&str; 7] =
    ["eye_id", "stage", "bcva_etdrs", "scan_h", "scan_v", "spacing_x", "spacing_y"];

/// Parses a study manifest. Series are returned in order of first appearance.
///
/// Scan paths are kept as written; callers resolve them against a scan root.
pub fn load_manifest(path: &Path) -> Result<Vec<LongitudinalSeries>, DataError> {
    if !path.exists() {
        return Err(DataError::FileNotFound(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    parse_manifest(&text)
}

pub fn parse_manifest(text: &str) -> Result<Vec<LongitudinalSeries>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .quoting(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let malformed = |line: u64, reason: String| DataError::MalformedRow { line, reason };

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| malformed(1, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let eye_col = col("eye_id").ok_or_else(|| malformed(1, "missing eye_id column".into()))?;
    let stage_col = col("stage").ok_or_else(|| malformed(1, "missing stage column".into()))?;
    let bcva_col = col("bcva_etdrs");
    let (scan_h, scan_v) = (col("scan_h"), col("scan_v"));
    let (sx_col, sy_col) = (col("spacing_x"), col("spacing_y"));
    let clinical_cols: Vec<(usize, &String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !RESERVED_COLUMNS.contains(&h.as_str()))
        .collect();

    let mut series: Vec<LongitudinalSeries> = Vec::new();
    for result in reader.records() {
        let row = result.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: Option<usize>| i.and_then(|i| row.get(i)).filter(|s| !s.is_empty());

        let eye_id = field(Some(eye_col)).ok_or_else(|| malformed(line, "empty eye_id".into()))?;
        let stage: Stage = field(Some(stage_col))
            .ok_or_else(|| malformed(line, "empty stage".into()))?
            .parse()
            .map_err(|e| malformed(line, e))?;
        let bcva_etdrs = match field(bcva_col) {
            None => None,
            Some(s) => {
                let v: u8 = s.parse().map_err(|_| malformed(line, format!("bad bcva_etdrs {s:?}")))?;
                if v > 100 {
                    return Err(malformed(line, format!("bcva_etdrs {v} outside 0..=100")));
                }
                Some(v)
            }
        };
        let clinical = clinical_cols
            .iter()
            .map(|&(i, name)| {
                let value = match field(Some(i)) {
                    None => None,
                    Some(s) => Some(
                        s.parse::<f64>()
                            .ok()
                            .filter(|v| v.is_finite())
                            .ok_or_else(|| malformed(line, format!("non-numeric {name}: {s:?}")))?,
                    ),
                };
                Ok((name.to_string(), value))
            })
            .collect::<Result<Vec<_>, DataError>>()?;
        let spacing = match (field(sx_col), field(sy_col)) {
            (None, None) => None,
            (Some(x), Some(y)) => {
                let parse = |s: &str| s.parse::<f64>().map_err(|_| malformed(line, format!("bad spacing {s:?}")));
                Some(PixelSpacing::new(parse(x)?, parse(y)?).map_err(|e| malformed(line, e.to_string()))?)
            }
            _ => return Err(malformed(line, "spacing_x and spacing_y must be given together".into())),
        };
        let mut scans = Vec::new();
        for (c, orientation) in [(scan_h, Orientation::Horizontal), (scan_v, Orientation::Vertical)] {
            if let Some(p) = field(c) {
                scans.push(ScanRef { path: PathBuf::from(p), orientation, spacing });
            }
        }

        let record = StudyRecord { eye_id: eye_id.to_string(), stage, bcva_etdrs, clinical, scans };
        match series.iter_mut().find(|s| s.eye_id == eye_id) {
            Some(s) => s.insert(record)?,
            None => {
                let mut s = LongitudinalSeries::new(eye_id);
                s.insert(record)?;
                series.push(s);
            }
        }
    }
    Ok(series)
}
