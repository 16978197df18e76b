//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths resolve
//! against the directory of the config file. Command-line flags override file
//! values.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use octdyn_core::data::DEFAULT_SUPERIOR_THRESHOLD;
use octdyn_core::fusion::AttentionDirection;
use octdyn_core::morphometry::DEFAULT_MIN_PIXELS;
use octdyn_core::stats::{DEFAULT_MISSING_THRESHOLD, VIF_LIMIT};
use octdyn_core::{PixelSpacing, StageDays};
use serde::Serialize;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// Shape weighting off, Superior threshold fixed at 20 letters.
    PaperReplication,
    Extended,
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::PaperReplication => "paper-replication",
            Profile::Extended => "extended",
        })
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper-replication" => Ok(Profile::PaperReplication),
            "extended" => Ok(Profile::Extended),
            _ => Err(format!("unknown profile {s:?}")),
        }
    }
}

/// Which follow-up stages feed the recovery rates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DpWindow {
    Full,
    /// Ignore stages after the prediction horizon.
    Horizon,
}

impl FromStr for DpWindow {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(DpWindow::Full),
            "horizon" => Ok(DpWindow::Horizon),
            _ => Err(format!("unknown dp window {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FusionSettings {
    pub image_size: usize,
    pub patch: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_blocks: usize,
    pub head_hidden: usize,
    pub ff_mult: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub folds: usize,
    pub zero_init_classifier: bool,
    pub direction: AttentionDirection,
}

impl Default for FusionSettings {
    fn default() -> Self {
        Self {
            image_size: 64,
            patch: 16,
            d_model: 64,
            n_heads: 4,
            n_blocks: 2,
            head_hidden: 64,
            ff_mult: 2,
            epochs: 100,
            lr: 1e-2,
            batch_size: 8,
            momentum: 0.9,
            folds: 5,
            zero_init_classifier: false,
            direction: AttentionDirection::VectorQueriesImage,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub scan_root: Option<PathBuf>,
    pub fusion_dataset: Option<PathBuf>,
    pub spacing: PixelSpacing,
    pub stage_days: StageDays,
    /// Resolution thresholds: hole area, pseudocyst area, ELM defect, EZ defect.
    pub epsilon: [f64; 4],
    pub lambda: Option<f64>,
    pub superior_threshold: i32,
    pub class_threshold: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub profile: Profile,
    pub dp_window: DpWindow,
    pub min_pixels: usize,
    pub missing_threshold: f64,
    pub screen_alpha: f64,
    pub vif_limit: f64,
    pub test_fraction: f64,
    pub fusion: FusionSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            scan_root: None,
            fusion_dataset: None,
            spacing: PixelSpacing::new(1.0, 1.0).expect("unit spacing"),
            stage_days: StageDays::default(),
            epsilon: [0.0; 4],
            lambda: None,
            superior_threshold: DEFAULT_SUPERIOR_THRESHOLD,
            class_threshold: 0.5,
            seed: 0,
            out: PathBuf::from("out"),
            profile: Profile::PaperReplication,
            dp_window: DpWindow::Full,
            min_pixels: DEFAULT_MIN_PIXELS,
            missing_threshold: DEFAULT_MISSING_THRESHOLD,
            screen_alpha: 0.10,
            vif_limit: VIF_LIMIT,
            test_fraction: 0.2,
            fusion: FusionSettings::default(),
        }
    }
}

/// Every key accepted in a config file.
pub const KEYS: [&str; 36] = [
    "manifest",
    "scan_root",
    "fusion_dataset",
    "spacing_x",
    "spacing_y",
    "stage_days",
    "epsilon_hole",
    "epsilon_cyst",
    "epsilon_elm",
    "epsilon_ez",
    "lambda",
    "superior_threshold",
    "class_threshold",
    "seed",
    "out",
    "profile",
    "dp_window",
    "min_pixels",
    "missing_threshold",
    "screen_alpha",
    "vif_limit",
    "test_fraction",
    "image_size",
    "patch",
    "d_model",
    "n_heads",
    "n_blocks",
    "head_hidden",
    "ff_mult",
    "epochs",
    "lr",
    "batch_size",
    "momentum",
    "folds",
    "zero_init_classifier",
    "direction",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("{key}: cannot parse {value:?}"))
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            line: 0,
            reason: format!("{}: {e}", path.display()),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config { line: i + 1, reason: format!("expected key = value, got {line:?}") })?;
            cfg.set(key.trim(), value.trim(), base)
                .map_err(|reason| CliError::Config { line: i + 1, reason })?;
        }
        Ok(cfg)
    }

    /// Applies one setting. Paths are resolved against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), String> {
        let path = || base.join(value);
        let f = &mut self.fusion;
        match key {
            "manifest" => self.manifest = Some(path()),
            "scan_root" => self.scan_root = Some(path()),
            "fusion_dataset" => self.fusion_dataset = Some(path()),
            "out" => self.out = path(),
            "spacing_x" | "spacing_y" => {
                let v: f64 = parse(key, value)?;
                let (x, y) = if key == "spacing_x" { (v, self.spacing.y()) } else { (self.spacing.x(), v) };
                self.spacing = PixelSpacing::new(x, y).map_err(|e| e.to_string())?;
            }
            "stage_days" => {
                let days: Vec<u32> = value.split(',').map(|d| parse(key, d.trim())).collect::<Result<_, _>>()?;
                let days: [u32; 5] = days.try_into().map_err(|_| "stage_days needs five comma-separated days".to_string())?;
                self.stage_days = StageDays::new(days).map_err(|e| e.to_string())?;
            }
            "epsilon_hole" => self.epsilon[0] = parse(key, value)?,
            "epsilon_cyst" => self.epsilon[1] = parse(key, value)?,
            "epsilon_elm" => self.epsilon[2] = parse(key, value)?,
            "epsilon_ez" => self.epsilon[3] = parse(key, value)?,
            "lambda" => self.lambda = if value == "off" { None } else { Some(parse(key, value)?) },
            "superior_threshold" => self.superior_threshold = parse(key, value)?,
            "class_threshold" => self.class_threshold = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "profile" => self.profile = value.parse()?,
            "dp_window" => self.dp_window = value.parse()?,
            "min_pixels" => self.min_pixels = parse(key, value)?,
            "missing_threshold" => self.missing_threshold = parse(key, value)?,
            "screen_alpha" => self.screen_alpha = parse(key, value)?,
            "vif_limit" => self.vif_limit = parse(key, value)?,
            "test_fraction" => self.test_fraction = parse(key, value)?,
            "image_size" => f.image_size = parse(key, value)?,
            "patch" => f.patch = parse(key, value)?,
            "d_model" => f.d_model = parse(key, value)?,
            "n_heads" => f.n_heads = parse(key, value)?,
            "n_blocks" => f.n_blocks = parse(key, value)?,
            "head_hidden" => f.head_hidden = parse(key, value)?,
            "ff_mult" => f.ff_mult = parse(key, value)?,
            "epochs" => f.epochs = parse(key, value)?,
            "lr" => f.lr = parse(key, value)?,
            "batch_size" => f.batch_size = parse(key, value)?,
            "momentum" => f.momentum = parse(key, value)?,
            "folds" => f.folds = parse(key, value)?,
            "zero_init_classifier" => f.zero_init_classifier = parse(key, value)?,
            "direction" => {
                f.direction = match value {
                    "vector-queries-image" => AttentionDirection::VectorQueriesImage,
                    "image-queries-vector" => AttentionDirection::ImageQueriesVector,
                    _ => return Err(format!("direction: unknown value {value:?}")),
                }
            }
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Applies profile constraints; returns a note for every value it overrode.
    pub fn enforce_profile(&mut self) -> Vec<String> {
        let mut notes = Vec::new();
        if self.profile == Profile::PaperReplication {
            if let Some(l) = self.lambda.take() {
                notes.push(format!("profile paper-replication: lambda {l} ignored, shape weighting off"));
            }
            if self.superior_threshold != DEFAULT_SUPERIOR_THRESHOLD {
                notes.push(format!(
                    "profile paper-replication: superior_threshold {} replaced by {DEFAULT_SUPERIOR_THRESHOLD}",
                    self.superior_threshold
                ));
                self.superior_threshold = DEFAULT_SUPERIOR_THRESHOLD;
            }
        }
        notes
    }
}
