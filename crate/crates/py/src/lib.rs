//! Python bindings. Structured results cross the boundary as plain dicts and
//! lists (serialized through JSON), label scans and fusion models as classes.

use std::path::PathBuf;

use octdyn_core::data::{self, outcome_label, StudyRecord};
use octdyn_core::dynamics::{self, Lesion, LesionTrajectory, Resolution};
use octdyn_core::fusion::{self, checkpoint, FusionConfig, Mat, Modality};
use octdyn_core::morphometry::{self, HoleGeometry};
use octdyn_core::segmetrics::{self, Aggregation};
use octdyn_core::stats::{self, DataMatrix, Term};
use octdyn_core::{ClassLabel, Orientation, PixelSpacing, Stage, StageDays};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn spacing(s: (f64, f64)) -> PyResult<PixelSpacing> {
    PixelSpacing::new(s.0, s.1).map_err(value_err)
}

fn orientation(tag: &str) -> PyResult<Orientation> {
    match tag.to_ascii_uppercase().as_str() {
        "H" | "HORIZONTAL" => Ok(Orientation::Horizontal),
        "V" | "VERTICAL" => Ok(Orientation::Vertical),
        _ => Err(PyValueError::new_err(format!("orientation must be 'H' or 'V', got {tag:?}"))),
    }
}

fn stage(tag: &str) -> PyResult<Stage> {
    tag.parse().map_err(PyValueError::new_err)
}

/// A 2D grid of class label codes (0 background, 1 hole, ..., 9 RPE).
#[pyclass(name = "LabeledScan", module = "octdyn", frozen, from_py_object)]
#[derive(Clone)]
struct PyScan(octdyn_core::LabeledScan);

#[pymethods]
impl PyScan {
    /// `rows` is a list of equal-length lists of label codes.
    #[new]
    #[pyo3(signature = (rows, spacing = (1.0, 1.0), orientation = "H"))]
    fn new(rows: Vec<Vec<u8>>, spacing: (f64, f64), orientation: &str) -> PyResult<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(PyValueError::new_err("rows have different lengths"));
        }
        let codes: Vec<u8> = rows.concat();
        let scan = octdyn_core::LabeledScan::from_codes(width, height, &codes, self::orientation(orientation)?, self::spacing(spacing)?)
            .map_err(value_err)?;
        Ok(Self(scan))
    }

    #[staticmethod]
    #[pyo3(signature = (path, spacing = (1.0, 1.0), orientation = "H"))]
    fn load(path: PathBuf, spacing: (f64, f64), orientation: &str) -> PyResult<Self> {
        data::load_scan(&path, self::spacing(spacing)?, self::orientation(orientation)?)
            .map(Self)
            .map_err(|e| PyOSError::new_err(e.to_string()))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        data::write_scan(&self.0, &path).map_err(|e| PyOSError::new_err(e.to_string()))
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    #[getter]
    fn spacing(&self) -> (f64, f64) {
        (self.0.spacing().x(), self.0.spacing().y())
    }

    /// Label codes as a list of int lists (not `bytes`).
    fn rows(&self) -> Vec<Vec<u32>> {
        self.0.codes().chunks(self.0.width()).map(|r| r.iter().map(|&c| u32::from(c)).collect()).collect()
    }

    /// Pixel count of one class, by code or name.
    fn count(&self, label: &Bound<'_, PyAny>) -> PyResult<usize> {
        Ok(self.0.count(class_label(label)?))
    }

    /// Hole geometry, band defects, composite indices and flags of this scan.
    #[pyo3(signature = (min_pixels = morphometry::DEFAULT_MIN_PIXELS))]
    fn measure<'py>(&self, py: Python<'py>, min_pixels: usize) -> PyResult<Bound<'py, PyAny>> {
        let m = morphometry::measure_scan(&self.0, min_pixels);
        #[derive(Serialize)]
        struct Out<'a> {
            hole: &'a HoleGeometry,
            elm: &'a morphometry::BandDefect,
            ez: &'a morphometry::BandDefect,
            composite: &'a morphometry::CompositeIndices,
            flags: &'a morphometry::QualitativeFlags,
            hole_circularity: Option<f64>,
            cyst_circularity: Option<f64>,
        }
        to_py(
            py,
            &Out {
                hole: &m.hole,
                elm: &m.elm,
                ez: &m.ez,
                composite: &m.composite,
                flags: &m.flags,
                hole_circularity: m.hole_circularity,
                cyst_circularity: m.cyst_circularity,
            },
        )
    }

    fn __repr__(&self) -> String {
        format!("LabeledScan({}x{}, spacing={:?})", self.0.width(), self.0.height(), self.spacing())
    }
}

fn class_label(label: &Bound<'_, PyAny>) -> PyResult<ClassLabel> {
    if let Ok(code) = label.extract::<u8>() {
        return ClassLabel::from_code(code).ok_or_else(|| PyValueError::new_err(format!("unknown label code {code}")));
    }
    let name: String = label.extract()?;
    name.parse().map_err(PyValueError::new_err)
}

/// Combined feature row for one eye and stage from one or more scans.
#[pyfunction]
#[pyo3(signature = (eye_id, stage, scans, min_pixels = morphometry::DEFAULT_MIN_PIXELS))]
fn extract_features<'py>(
    py: Python<'py>,
    eye_id: &str,
    stage: &str,
    scans: Vec<PyScan>,
    min_pixels: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let scans: Vec<_> = scans.into_iter().map(|s| s.0).collect();
    let fv = morphometry::extract_features(eye_id, self::stage(stage)?, &scans, min_pixels).map_err(value_err)?;
    to_py(py, &fv)
}

/// MHI, THI, DHI and area ratio; undefined ratios come back as None.
#[pyfunction]
#[pyo3(signature = (mld_um, bd_um, e_um, height_um, hole_area_um2 = 0.0, pseudocyst_area_um2 = 0.0))]
fn composite_indices<'py>(
    py: Python<'py>,
    mld_um: f64,
    bd_um: f64,
    e_um: f64,
    height_um: f64,
    hole_area_um2: f64,
    pseudocyst_area_um2: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let g = HoleGeometry { hole_present: true, mld_um, bd_um, e_um, height_um, hole_area_um2, pseudocyst_area_um2 };
    to_py(py, &morphometry::composite_indices(&g))
}

fn lesion(name: &str) -> PyResult<Lesion> {
    match name {
        "hole" => Ok(Lesion::MacularHoleArea),
        "cyst" => Ok(Lesion::PseudocystArea),
        "elm" => Ok(Lesion::ElmDefect),
        "ez" => Ok(Lesion::EzDefect),
        _ => Err(PyValueError::new_err(format!("lesion must be hole, cyst, elm or ez, got {name:?}"))),
    }
}

/// First follow-up day at which a lesion's size is at most `epsilon`, or None if it
/// never resolves. `sizes` maps stage tags ("PRE", "W2", ...) to sizes.
#[pyfunction]
#[pyo3(signature = (sizes, epsilon = 0.0, lesion = "hole", stage_days = None))]
fn resolution_day(
    sizes: std::collections::HashMap<String, Option<f64>>,
    epsilon: f64,
    lesion: &str,
    stage_days: Option<[u32; 5]>,
) -> PyResult<Option<u32>> {
    let values = sizes.iter().map(|(k, v)| Ok((stage(k)?, *v))).collect::<PyResult<Vec<_>>>()?;
    let t = LesionTrajectory::new(self::lesion(lesion)?, values);
    let days = match stage_days {
        Some(d) => StageDays::new(d).map_err(value_err)?,
        None => StageDays::default(),
    };
    match dynamics::resolution_day(&t, epsilon, &days, None).map_err(value_err)? {
        Resolution::Resolved { day, .. } => Ok(Some(day)),
        Resolution::Censored { .. } => Ok(None),
    }
}

#[pyfunction]
fn recovery_rate(initial: f64, resolve_day: u32) -> PyResult<f64> {
    dynamics::recovery_rate(initial, resolve_day).map_err(value_err)
}

/// Logistic regression by Newton-Raphson. `x` is row-major; an intercept is added.
#[pyfunction]
#[pyo3(signature = (x, y, names = None))]
fn fit_logistic<'py>(
    py: Python<'py>,
    x: Vec<Vec<f64>>,
    y: Vec<bool>,
    names: Option<Vec<String>>,
) -> PyResult<Bound<'py, PyAny>> {
    let p = x.first().map_or(0, Vec::len);
    let names = names.unwrap_or_else(|| (0..p).map(|j| format!("x{j}")).collect());
    if names.len() != p {
        return Err(PyValueError::new_err(format!("{} names for {p} columns", names.len())));
    }
    let cols: Vec<(&str, Vec<f64>)> =
        names.iter().enumerate().map(|(j, n)| (n.as_str(), x.iter().map(|r| r[j]).collect())).collect();
    let m = DataMatrix::from_columns(&cols, &y).map_err(value_err)?;
    let (design, labels) = m.design(&names).map_err(value_err)?;
    match stats::fit_logistic(&design, &names, &labels) {
        Ok(fit) => to_py(py, &fit),
        // Separated data: hand back the last iterate, flagged `converged: False`.
        Err(stats::StatsError::NonConverged(fit)) => to_py(py, &*fit),
        Err(e) => Err(value_err(e)),
    }
}

/// Odds ratio and 95% interval for a coefficient and its standard error.
#[pyfunction]
fn odds_ratio(b: f64, se: f64) -> (f64, f64, f64) {
    let t = Term::from_estimate("", b, se);
    (t.odds_ratio, t.ci_low, t.ci_high)
}

/// Returns (W, p).
#[pyfunction]
fn shapiro_wilk(sample: Vec<f64>) -> PyResult<(f64, f64)> {
    let r = stats::shapiro_wilk(&sample).map_err(value_err)?;
    Ok((r.w, r.p))
}

/// ROC points and AUC with half credit for ties.
#[pyfunction]
fn roc<'py>(py: Python<'py>, scores: Vec<f64>, labels: Vec<bool>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &stats::roc(&scores, &labels).map_err(value_err)?)
}

/// Variance inflation factor per column; `columns` maps names to values.
#[pyfunction]
fn vif(columns: Vec<(String, Vec<f64>)>) -> PyResult<Vec<(String, f64)>> {
    let n = columns.first().map_or(0, |c| c.1.len());
    let cols: Vec<(&str, Vec<f64>)> = columns.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
    let m = DataMatrix::from_columns(&cols, &vec![false; n]).map_err(value_err)?;
    stats::vif(&m).map_err(value_err)
}

/// Dice, IoU, accuracy and F1 of two boolean masks.
#[pyfunction]
fn binary_metrics<'py>(py: Python<'py>, pred: Vec<bool>, truth: Vec<bool>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &segmetrics::binary_metrics(&pred, &truth).map_err(value_err)?)
}

/// Per-class metrics and the mean row over paired scans.
#[pyfunction]
#[pyo3(signature = (pred, truth, aggregation = "micro"))]
fn segmentation_report<'py>(
    py: Python<'py>,
    pred: Vec<PyScan>,
    truth: Vec<PyScan>,
    aggregation: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let agg = match aggregation {
        "micro" => Aggregation::Micro,
        "macro" => Aggregation::Macro,
        _ => return Err(PyValueError::new_err("aggregation must be 'micro' or 'macro'")),
    };
    let p: Vec<_> = pred.into_iter().map(|s| s.0).collect();
    let t: Vec<_> = truth.into_iter().map(|s| s.0).collect();
    to_py(py, &segmetrics::report(&p, &t, &ClassLabel::FOREGROUND, agg).map_err(value_err)?)
}

/// Change in ETDRS letters and whether it reaches the threshold.
#[pyfunction]
#[pyo3(signature = (pre_letters, post_letters, threshold = data::DEFAULT_SUPERIOR_THRESHOLD))]
fn outcome(pre_letters: u8, post_letters: u8, threshold: i32) -> PyResult<(bool, i32)> {
    if pre_letters > 100 || post_letters > 100 {
        return Err(PyValueError::new_err("ETDRS letters lie in 0..=100"));
    }
    let pre = StudyRecord::new("", Stage::Pre).with_bcva(pre_letters);
    let post = StudyRecord::new("", Stage::M12).with_bcva(post_letters);
    let l = outcome_label(&pre, &post, threshold).map_err(value_err)?;
    Ok((l.is_superior(), l.delta_letters))
}

fn sample(image: Vec<Vec<f64>>, clinical: Vec<f64>, values: Vec<f64>) -> PyResult<fusion::Sample> {
    let rows = image.len();
    let cols = image.first().map_or(0, Vec::len);
    if image.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("image rows have different lengths"));
    }
    Ok(fusion::Sample { image: Mat::from_vec(rows, cols, image.concat()), clinical, values, superior: false })
}

/// Image/clinical/values fusion classifier.
#[pyclass(name = "FusionModel", module = "octdyn", frozen)]
struct PyFusionModel(fusion::TrainedModel);

#[pymethods]
impl PyFusionModel {
    /// Untrained model with identity input scaling.
    #[new]
    #[pyo3(signature = (
        clinical_dim, values_dim, image_size = 32, patch = 16, d_model = 16, n_heads = 2, n_blocks = 1,
        head_hidden = 16, seed = 0, modality = "full", zero_init_classifier = false
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        clinical_dim: usize,
        values_dim: usize,
        image_size: usize,
        patch: usize,
        d_model: usize,
        n_heads: usize,
        n_blocks: usize,
        head_hidden: usize,
        seed: u64,
        modality: &str,
        zero_init_classifier: bool,
    ) -> PyResult<Self> {
        let modality = match modality {
            "image" => Modality::ImageOnly,
            "vectors" => Modality::Vectors,
            "full" => Modality::Full,
            _ => return Err(PyValueError::new_err("modality must be image, vectors or full")),
        };
        let cfg = FusionConfig {
            image_size,
            patch,
            d_model,
            n_heads,
            n_blocks,
            clinical_dim,
            values_dim,
            head_hidden,
            seed,
            modality,
            zero_init_classifier,
            ..FusionConfig::default()
        };
        let model = fusion::FusionModel::new(cfg).map_err(value_err)?;
        let scaling = fusion::InputScaling::identity(clinical_dim, values_dim);
        Ok(Self(fusion::TrainedModel { model, scaling }))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        checkpoint::load(&path).map(Self).map_err(value_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        checkpoint::save(&self.0, &path).map_err(value_err)
    }

    #[getter]
    fn n_parameters(&self) -> usize {
        self.0.model.n_scalars()
    }

    #[getter]
    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, self.0.model.config())
    }

    /// Probability of a superior outcome for one sample; `image` is a square grid in [0, 1].
    fn predict(&self, image: Vec<Vec<f64>>, clinical: Vec<f64>, values: Vec<f64>) -> PyResult<f64> {
        let s = sample(image, clinical, values)?;
        Ok(self.0.predict(&[s]).map_err(value_err)?[0])
    }
}

#[pymodule]
fn octdyn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScan>()?;
    m.add_class::<PyFusionModel>()?;
    m.add_function(wrap_pyfunction!(extract_features, m)?)?;
    m.add_function(wrap_pyfunction!(composite_indices, m)?)?;
    m.add_function(wrap_pyfunction!(resolution_day, m)?)?;
    m.add_function(wrap_pyfunction!(recovery_rate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_logistic, m)?)?;
    m.add_function(wrap_pyfunction!(odds_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(shapiro_wilk, m)?)?;
    m.add_function(wrap_pyfunction!(roc, m)?)?;
    m.add_function(wrap_pyfunction!(vif, m)?)?;
    m.add_function(wrap_pyfunction!(binary_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(segmentation_report, m)?)?;
    m.add_function(wrap_pyfunction!(outcome, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
