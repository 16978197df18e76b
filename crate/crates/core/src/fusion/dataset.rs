//! Tri-modal datasets on disk and a seeded synthetic generator.
//!
//! A dataset directory holds `samples.csv` and the images it references.
//! Columns: `sample_id`, `image` (path relative to the directory), any of
//! `label_w2`, `label_m3`, `label_m6`, `label_m12` (`1` superior, `0` not,
//! empty unknown), clinical columns prefixed `cd_` and values columns
//! prefixed `val_`. Values columns named `val_rr_*` are the dynamic parameters.

use std::fs;
use std::path::Path;

use image::GrayImage;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::model::Sample;
use super::tensor::Mat;
use super::FusionError;
use crate::data::{read_gray, Stage};

pub const DP_PREFIX: &str = "rr_";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionRecord {
    pub id: String,
    pub image: Mat,
    pub clinical: Vec<f64>,
    pub values: Vec<f64>,
    /// Outcome per post-operative stage, W2 through M12.
    pub labels: [Option<bool>; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionDataset {
    pub clinical_names: Vec<String>,
    pub values_names: Vec<String>,
    pub records: Vec<FusionRecord>,
    /// Number of missing covariate cells replaced by their column mean on load.
    pub imputed_cells: usize,
}

fn horizon_slot(h: Stage) -> Result<usize, FusionError> {
    match h {
        Stage::Pre => Err(FusionError::InvalidConfig("the horizon must be a post-operative stage".into())),
        _ => Ok(h.index() - 1),
    }
}

impl FusionDataset {
    pub fn is_dp(name: &str) -> bool {
        name.starts_with(DP_PREFIX)
    }

    /// Indices into `values_names` that are kept with or without dynamic parameters.
    pub fn values_selection(&self, with_dp: bool) -> Vec<usize> {
        (0..self.values_names.len()).filter(|&j| with_dp || !Self::is_dp(&self.values_names[j])).collect()
    }

    pub fn has_dp(&self) -> bool {
        self.values_names.iter().any(|n| Self::is_dp(n))
    }

    /// Labelled samples for a horizon, with their record ids.
    pub fn samples(&self, horizon: Stage, with_dp: bool) -> Result<(Vec<String>, Vec<Sample>), FusionError> {
        let slot = horizon_slot(horizon)?;
        let keep = self.values_selection(with_dp);
        let (mut ids, mut out) = (Vec::new(), Vec::new());
        for r in &self.records {
            if let Some(y) = r.labels[slot] {
                ids.push(r.id.clone());
                out.push(Sample {
                    image: r.image.clone(),
                    clinical: r.clinical.clone(),
                    values: keep.iter().map(|&j| r.values[j]).collect(),
                    superior: y,
                });
            }
        }
        Ok((ids, out))
    }

    pub fn load(dir: &Path) -> Result<Self, FusionError> {
        let csv_path = dir.join("samples.csv");
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(&csv_path).map_err(|e| {
            FusionError::Dataset(format!("{}: {e}", csv_path.display()))
        })?;
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| FusionError::Dataset(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let find = |name: &str| headers.iter().position(|h| h == name);
        let id_col = find("sample_id").ok_or_else(|| FusionError::Dataset("missing sample_id column".into()))?;
        let img_col = find("image").ok_or_else(|| FusionError::Dataset("missing image column".into()))?;
        let label_cols: Vec<Option<usize>> =
            Stage::POSTOP.iter().map(|s| find(&format!("label_{}", s.tag().to_lowercase()))).collect();
        let prefixed = |prefix: &str| -> Vec<(usize, String)> {
            headers
                .iter()
                .enumerate()
                .filter_map(|(i, h)| h.strip_prefix(prefix).map(|n| (i, n.to_string())))
                .collect()
        };
        let cd = prefixed("cd_");
        let val = prefixed("val_");

        let mut raw: Vec<(FusionRecord, Vec<Option<f64>>, Vec<Option<f64>>)> = Vec::new();
        for (line, row) in rdr.records().enumerate() {
            let row = row.map_err(|e| FusionError::Dataset(e.to_string()))?;
            let bad = |reason: String| FusionError::Dataset(format!("samples.csv line {}: {reason}", line + 2));
            let num = |i: usize| -> Result<Option<f64>, FusionError> {
                let cell = row.get(i).unwrap_or("");
                if cell.is_empty() {
                    return Ok(None);
                }
                cell.parse::<f64>().map(Some).map_err(|_| bad(format!("{:?} is not a number", cell)))
            };
            let mut labels = [None; 4];
            for (slot, col) in label_cols.iter().enumerate() {
                if let Some(c) = col {
                    labels[slot] = match row.get(*c).unwrap_or("") {
                        "" => None,
                        "1" => Some(true),
                        "0" => Some(false),
                        other => return Err(bad(format!("label {other:?} is not 0, 1 or empty"))),
                    };
                }
            }
            let gray = read_gray(&dir.join(row.get(img_col).unwrap_or("")))?;
            let c: Vec<Option<f64>> = cd.iter().map(|(i, _)| num(*i)).collect::<Result<_, _>>()?;
            let v: Vec<Option<f64>> = val.iter().map(|(i, _)| num(*i)).collect::<Result<_, _>>()?;
            let rec = FusionRecord {
                id: row.get(id_col).unwrap_or("").to_string(),
                image: gray_to_mat(&gray),
                clinical: Vec::new(),
                values: Vec::new(),
                labels,
            };
            raw.push((rec, c, v));
        }
        if raw.is_empty() {
            return Err(FusionError::Dataset("samples.csv has no rows".into()));
        }
        let mut imputed_cells = 0;
        let impute = |cols: usize, pick: &dyn Fn(usize) -> Vec<Option<f64>>, count: &mut usize| -> Vec<Vec<f64>> {
            let mut out = vec![Vec::with_capacity(cols); raw.len()];
            for j in 0..cols {
                let col = pick(j);
                let present: Vec<f64> = col.iter().flatten().copied().collect();
                let mean = if present.is_empty() { 0.0 } else { present.iter().sum::<f64>() / present.len() as f64 };
                for (i, v) in col.iter().enumerate() {
                    if v.is_none() {
                        *count += 1;
                    }
                    out[i].push(v.unwrap_or(mean));
                }
            }
            out
        };
        let clinical = impute(cd.len(), &|j| raw.iter().map(|r| r.1[j]).collect(), &mut imputed_cells);
        let values = impute(val.len(), &|j| raw.iter().map(|r| r.2[j]).collect(), &mut imputed_cells);
        let records = raw
            .into_iter()
            .zip(clinical.into_iter().zip(values))
            .map(|((mut rec, _, _), (c, v))| {
                rec.clinical = c;
                rec.values = v;
                rec
            })
            .collect();
        Ok(Self {
            clinical_names: cd.into_iter().map(|(_, n)| n).collect(),
            values_names: val.into_iter().map(|(_, n)| n).collect(),
            records,
            imputed_cells,
        })
    }

    /// Writes `samples.csv` plus one PNG per record under `images/`.
    pub fn save(&self, dir: &Path) -> Result<(), FusionError> {
        fs::create_dir_all(dir.join("images"))?;
        let mut w = csv::Writer::from_path(dir.join("samples.csv")).map_err(|e| FusionError::Dataset(e.to_string()))?;
        let mut header = vec!["sample_id".to_string(), "image".to_string()];
        header.extend(Stage::POSTOP.iter().map(|s| format!("label_{}", s.tag().to_lowercase())));
        header.extend(self.clinical_names.iter().map(|n| format!("cd_{n}")));
        header.extend(self.values_names.iter().map(|n| format!("val_{n}")));
        w.write_record(&header).map_err(|e| FusionError::Dataset(e.to_string()))?;
        for r in &self.records {
            let rel = format!("images/{}.png", r.id);
            mat_to_gray(&r.image)
                .save(dir.join(&rel))
                .map_err(|e| FusionError::Dataset(format!("{rel}: {e}")))?;
            let mut row = vec![r.id.clone(), rel];
            row.extend(r.labels.iter().map(|l| match l {
                Some(true) => "1".to_string(),
                Some(false) => "0".to_string(),
                None => String::new(),
            }));
            row.extend(r.clinical.iter().chain(&r.values).map(|v| v.to_string()));
            w.write_record(&row).map_err(|e| FusionError::Dataset(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn gray_to_mat(g: &GrayImage) -> Mat {
    let (w, h) = g.dimensions();
    Mat::from_vec(h as usize, w as usize, g.as_raw().iter().map(|&v| f64::from(v) / 255.0).collect())
}

pub fn mat_to_gray(m: &Mat) -> GrayImage {
    let px = m.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    GrayImage::from_raw(m.cols as u32, m.rows as u32, px).expect("buffer length matches dimensions")
}

/// Knobs of the synthetic generator. Effects are shifts, in noise standard
/// deviations, between the superior and not-superior classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub image_size: usize,
    pub seed: u64,
    pub dp_effect: f64,
    pub clinical_effect: f64,
    pub image_effect: f64,
    /// Probability that a later horizon's label differs from the W2 label.
    pub label_flip: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { n: 40, image_size: 64, seed: 0, dp_effect: 2.0, clinical_effect: 0.5, image_effect: 1.0, label_flip: 0.05 }
    }
}

/// Balanced synthetic cohort: a dark disc whose radius shrinks for superior
/// eyes, four clinical covariates and six values columns, two of them
/// recovery rates; only `rr_ez` carries the dynamic-parameter signal.
pub fn synthetic(spec: &SyntheticSpec) -> FusionDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let mut labels: Vec<bool> = (0..spec.n).map(|i| i % 2 == 0).collect();
    labels.shuffle(&mut rng);
    let s = spec.image_size;
    let centre = (s as f64 - 1.0) / 2.0;
    let records = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let shift = if y { 1.0 } else { 0.0 };
            let mut z = || std.sample(&mut rng);
            let radius = (s as f64 * (0.22 - 0.05 * spec.image_effect * shift + 0.02 * z())).max(1.0);
            let mut image = Mat::zeros(s, s);
            for r in 0..s {
                for c in 0..s {
                    let d = ((r as f64 - centre).powi(2) + (c as f64 - centre).powi(2)).sqrt();
                    let base = if d <= radius { 0.1 } else { 0.6 };
                    *image.at_mut(r, c) = (base + 0.05 * z()).clamp(0.0, 1.0);
                }
            }
            let clinical = vec![
                65.0 + 8.0 * z(),
                120.0 + 40.0 * (z() - spec.clinical_effect * shift),
                23.5 + z(),
                f64::from(u8::from(z() > 0.0)),
            ];
            let values = vec![
                400.0 + 120.0 * z(),
                900.0 + 250.0 * z(),
                0.5 + 0.1 * z(),
                300.0 + 100.0 * z(),
                1.0 + 0.3 * z(),
                1.0 + 0.3 * (z() + spec.dp_effect * shift),
            ];
            let mut lab = [Some(y); 4];
            for slot in lab.iter_mut().skip(1) {
                if rng.random::<f64>() < spec.label_flip {
                    *slot = Some(!y);
                }
            }
            FusionRecord { id: format!("s{i:03}"), image, clinical, values, labels: lab }
        })
        .collect();
    FusionDataset {
        clinical_names: ["age", "duration_days", "axial_length_mm", "sex"].map(String::from).to_vec(),
        values_names: ["mld_um", "bd_um", "dhi", "ez_defect_um", "rr_hole", "rr_ez"].map(String::from).to_vec(),
        records,
        imputed_cells: 0,
    }
}
