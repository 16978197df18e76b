//! One function per subcommand. Each writes its outputs under the configured
//! output directory and returns a [`Summary`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use octdyn_core::data::{load_manifest, load_scan, outcome_label, StudyRecord};
use octdyn_core::dynamics::{derive_dynamics, DynamicsParams, DYNAMIC_COLUMNS};
use octdyn_core::fusion::checkpoint;
use octdyn_core::fusion::harness::HarnessOutcome;
use octdyn_core::fusion::{
    evaluate_harness, FusionConfig, FusionDataset, HarnessOptions, Sample, TrainOptions,
};
use octdyn_core::morphometry::{extract_features, FeatureVector, FEATURE_COLUMNS};
use octdyn_core::report::{roc_csv, roc_svg, segmetrics_csv, FeatureRow, FeatureTable, CIRCULARITY_COLUMNS};
use octdyn_core::segmetrics::{self, Aggregation};
use octdyn_core::stats::{run_protocol, DataMatrix, ProtocolOptions, ProtocolReport};
use octdyn_core::{ClassLabel, LabeledScan, Orientation, Stage};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::config::{DpWindow, RunConfig};
use crate::{CliError, Summary};

fn write(summary: &mut Summary, path: PathBuf, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(&path, contents)?;
    summary.outputs.push(path);
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn horizon_required(h: Option<Stage>) -> Result<Stage, CliError> {
    h.ok_or_else(|| CliError::Usage("--horizon is required (w2, m3, m6 or m12)".into()))
}

fn tag(h: Stage) -> String {
    h.tag().to_lowercase()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

// ---------------------------------------------------------------- extract

fn measure_record(
    rec: &StudyRecord,
    cfg: &RunConfig,
    root: &Path,
    clinical_names: &[String],
) -> Result<FeatureRow, String> {
    if rec.scans.is_empty() {
        return Err("no scans listed".into());
    }
    let scans = rec
        .scans
        .iter()
        .map(|s| load_scan(&root.join(&s.path), s.spacing.unwrap_or(cfg.spacing), s.orientation))
        .collect::<Result<Vec<LabeledScan>, _>>()
        .map_err(|e| e.to_string())?;
    let features = extract_features(&rec.eye_id, rec.stage, &scans, cfg.min_pixels).map_err(|e| e.to_string())?;
    Ok(FeatureRow {
        eye_id: rec.eye_id.clone(),
        stage: Some(rec.stage),
        bcva_etdrs: rec.bcva_etdrs,
        clinical: clinical_names.iter().map(|n| rec.clinical_value(n)).collect(),
        features,
        dynamic: Vec::new(),
    })
}

pub fn extract(cfg: &RunConfig, manifest: Option<&Path>, scan_root: Option<&Path>) -> Result<Summary, CliError> {
    let manifest = manifest
        .map(Path::to_path_buf)
        .or_else(|| cfg.manifest.clone())
        .ok_or_else(|| CliError::Usage("no manifest given (--manifest or `manifest =` in the config)".into()))?;
    let series = load_manifest(&manifest)?;
    if series.is_empty() {
        return Err(CliError::EmptyInput(format!("{} lists no records", manifest.display())));
    }
    let root = scan_root
        .map(Path::to_path_buf)
        .or_else(|| cfg.scan_root.clone())
        .unwrap_or_else(|| manifest.parent().unwrap_or(Path::new(".")).to_path_buf());
    let mut clinical_names: Vec<String> = Vec::new();
    let records: Vec<&StudyRecord> = series.iter().flat_map(|s| s.records.values()).collect();
    for rec in &records {
        for (name, _) in &rec.clinical {
            if !clinical_names.contains(name) {
                clinical_names.push(name.clone());
            }
        }
    }
    let results: Vec<Result<FeatureRow, String>> =
        records.par_iter().map(|rec| measure_record(rec, cfg, &root, &clinical_names)).collect();

    let mut summary = Summary::default();
    let mut log = String::from("eye_id,stage,error\n");
    let mut rows = Vec::new();
    for (rec, res) in records.iter().zip(results) {
        match res {
            Ok(row) => rows.push(row),
            Err(e) => {
                summary.failures += 1;
                summary.notes.push(format!("skipped {} {}: {e}", rec.eye_id, rec.stage));
                let _ = writeln!(log, "{},{},{}", csv_field(&rec.eye_id), rec.stage, csv_field(&e));
            }
        }
    }
    let table = FeatureTable { clinical_names, rows };
    write(&mut summary, cfg.out.join("features.csv"), table.to_csv_string())?;
    write(&mut summary, cfg.out.join("extract_log.csv"), log)?;
    Ok(summary)
}

// ---------------------------------------------------------------- dynamics

fn read_table(path: &Path) -> Result<FeatureTable, CliError> {
    if !path.exists() {
        return Err(CliError::Data(octdyn_core::data::DataError::FileNotFound(path.to_path_buf())));
    }
    Ok(FeatureTable::read(fs::File::open(path)?)?)
}

/// Row indices per eye, in order of first appearance.
fn group_by_eye(table: &FeatureTable) -> Vec<(String, Vec<usize>)> {
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, r) in table.rows.iter().enumerate() {
        match groups.iter_mut().find(|(e, _)| *e == r.eye_id) {
            Some((_, v)) => v.push(i),
            None => groups.push((r.eye_id.clone(), vec![i])),
        }
    }
    groups
}

pub fn dynamics(cfg: &RunConfig, features: Option<&Path>, horizon: Option<Stage>) -> Result<Summary, CliError> {
    let path = features.map(Path::to_path_buf).unwrap_or_else(|| cfg.out.join("features.csv"));
    let mut table = read_table(&path)?;
    let cutoff = match cfg.dp_window {
        DpWindow::Full => None,
        DpWindow::Horizon => Some(horizon_required(horizon)?),
    };
    let params = DynamicsParams { days: cfg.stage_days, epsilon: cfg.epsilon, lambda: cfg.lambda, cutoff };
    let mut summary = Summary::default();
    let mut log = String::from("eye_id,error\n");
    for (eye, idx) in group_by_eye(&table) {
        let by_stage: BTreeMap<Stage, FeatureVector> = idx
            .iter()
            .filter_map(|&i| {
                let r = &table.rows[i];
                r.stage.map(|s| (s, r.features.clone()))
            })
            .collect();
        match derive_dynamics(&eye, &by_stage, &params) {
            Ok(d) => {
                for &i in &idx {
                    if table.rows[i].stage == Some(Stage::Pre) {
                        table.rows[i].features.dynamics = Some(d);
                    }
                }
            }
            Err(e) => {
                summary.failures += 1;
                summary.notes.push(format!("no dynamics for {eye}: {e}"));
                let _ = writeln!(log, "{},{}", csv_field(&eye), csv_field(&e.to_string()));
            }
        }
    }
    write(&mut summary, cfg.out.join("features_dynamics.csv"), table.to_csv_string())?;
    write(&mut summary, cfg.out.join("dynamics_log.csv"), log)?;
    Ok(summary)
}

// ---------------------------------------------------------------- fit

/// Weighted recovery rates, the dynamic parameters that enter the model.
pub fn dp_columns() -> Vec<String> {
    DYNAMIC_COLUMNS.iter().filter(|c| c.ends_with("_w")).map(|c| c.to_string()).collect()
}

/// One row per eye from its preoperative features; the outcome compares BCVA at `horizon` with PRE.
pub fn design_matrix(
    table: &FeatureTable,
    horizon: Stage,
    superior_threshold: i32,
) -> Result<(DataMatrix, Vec<String>), CliError> {
    let mut columns: Vec<String> = table.clinical_names.clone();
    columns.extend(FEATURE_COLUMNS.iter().chain(&CIRCULARITY_COLUMNS).map(|s| s.to_string()));
    let dp = if table.has_dynamics() { dp_columns() } else { Vec::new() };
    columns.extend(dp.iter().cloned());
    let mut notes = Vec::new();
    let (mut ids, mut cells, mut outcome, mut response) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (eye, idx) in group_by_eye(table) {
        let at = |st: Stage| idx.iter().map(|&i| &table.rows[i]).find(|r| r.stage == Some(st));
        let Some(pre) = at(Stage::Pre) else {
            notes.push(format!("{eye}: no preoperative row"));
            continue;
        };
        let label = at(horizon).and_then(|post| {
            let rec = |r: &FeatureRow, st| StudyRecord { bcva_etdrs: r.bcva_etdrs, ..StudyRecord::new(eye.clone(), st) };
            outcome_label(&rec(pre, Stage::Pre), &rec(post, horizon), superior_threshold).ok()
        });
        ids.push(eye.clone());
        cells.push(columns.iter().map(|c| pre.value(table, c)).collect());
        outcome.push(label.map(|l| l.is_superior()));
        response.push(label.map(|l| f64::from(l.delta_letters)));
    }
    let mut m = DataMatrix::new(columns, cells, outcome)?;
    m.row_ids = ids;
    m.response = Some(response);
    Ok((m, notes))
}

#[derive(Serialize)]
struct FitOutput<'a> {
    horizon: Stage,
    profile: String,
    without_dp: bool,
    superior_threshold: i32,
    dp_columns: Vec<String>,
    report: &'a ProtocolReport,
}

fn terms_csv(h: Stage, report: &ProtocolReport) -> String {
    let mut s = String::from("horizon,model,term,b,se,wald,p,odds_ratio,ci_low,ci_high\n");
    let c = &report.comparison;
    for (model, summary) in [("without_dp", &c.without_dp), ("with_dp", &c.with_dp)] {
        for t in std::iter::once(&summary.fit.intercept).chain(&summary.fit.terms) {
            let _ = writeln!(
                s,
                "{},{model},{},{},{},{},{},{},{},{}",
                h.tag(),
                csv_field(&t.name),
                t.b,
                t.se,
                t.wald,
                t.p,
                t.odds_ratio,
                t.ci_low,
                t.ci_high
            );
        }
    }
    s
}

pub fn fit(
    cfg: &RunConfig,
    features: Option<&Path>,
    horizon: Option<Stage>,
    without_dp: bool,
) -> Result<Summary, CliError> {
    let horizon = horizon_required(horizon)?;
    let path = features.map(Path::to_path_buf).unwrap_or_else(|| {
        let with = cfg.out.join("features_dynamics.csv");
        if with.exists() {
            with
        } else {
            cfg.out.join("features.csv")
        }
    });
    let table = read_table(&path)?;
    let (matrix, notes) = design_matrix(&table, horizon, cfg.superior_threshold)?;
    if matrix.outcome.iter().all(Option::is_none) {
        return Err(CliError::EmptyInput(format!("no eye has BCVA at PRE and {horizon}")));
    }
    let dp = if table.has_dynamics() { dp_columns() } else { Vec::new() };
    let opts = ProtocolOptions {
        missing_threshold: cfg.missing_threshold,
        screen_alpha: cfg.screen_alpha,
        vif_limit: cfg.vif_limit,
        test_fraction: cfg.test_fraction,
        class_threshold: cfg.class_threshold,
        seed: cfg.seed,
        without_dp,
    };
    let report = run_protocol(&matrix, &dp, &opts)?;
    let mut summary = Summary { notes, ..Summary::default() };
    let c = &report.comparison;
    for (model, m) in [("without DP", &c.without_dp), ("with DP", &c.with_dp)] {
        if !m.fit.converged {
            summary.failures += 1;
            summary.notes.push(format!("{model} fit at {horizon} did not converge (separation); estimates are partial"));
        }
    }
    let h = tag(horizon);
    let out = FitOutput {
        horizon,
        profile: cfg.profile.to_string(),
        without_dp,
        superior_threshold: cfg.superior_threshold,
        dp_columns: dp,
        report: &report,
    };
    write(&mut summary, cfg.out.join(format!("fit_{h}.json")), to_json(&out)?)?;
    write(&mut summary, cfg.out.join(format!("terms_{h}.csv")), terms_csv(horizon, &report))?;
    write(&mut summary, cfg.out.join(format!("roc_{h}_without_dp.csv")), roc_csv(&c.without_dp.test_roc.points))?;
    write(&mut summary, cfg.out.join(format!("roc_{h}_with_dp.csv")), roc_csv(&c.with_dp.test_roc.points))?;
    let svg = roc_svg(&[
        ("without DP", &c.without_dp.test_roc.points, c.without_dp.test_roc.auc),
        ("with DP", &c.with_dp.test_roc.points, c.with_dp.test_roc.auc),
    ]);
    write(&mut summary, cfg.out.join(format!("roc_{h}.svg")), svg)?;
    Ok(summary)
}

// ---------------------------------------------------------------- segmetrics

fn label_images(dir: &Path) -> Result<BTreeMap<String, PathBuf>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Data(octdyn_core::data::DataError::FileNotFound(dir.to_path_buf())));
    }
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png" | "pgm" | "pnm")) {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            out.insert(name, path);
        }
    }
    Ok(out)
}

pub fn segmetrics(cfg: &RunConfig, pred: &Path, truth: &Path, aggregation: &str) -> Result<Summary, CliError> {
    let aggregation = match aggregation {
        "micro" => Aggregation::Micro,
        "macro" => Aggregation::Macro,
        other => return Err(CliError::Usage(format!("aggregation must be micro or macro, got {other:?}"))),
    };
    let (p, t) = (label_images(pred)?, label_images(truth)?);
    if let Some(name) = p.keys().find(|k| !t.contains_key(*k)).or_else(|| t.keys().find(|k| !p.contains_key(*k))) {
        return Err(CliError::UnpairedFile(name.clone()));
    }
    if p.is_empty() {
        return Err(CliError::EmptyInput(format!("no label images in {}", pred.display())));
    }
    let load = |path: &PathBuf| load_scan(path, cfg.spacing, Orientation::Horizontal);
    let pairs: Vec<(LabeledScan, LabeledScan)> = p
        .par_iter()
        .map(|(name, pp)| Ok((load(pp)?, load(&t[name])?)))
        .collect::<Result<_, CliError>>()?;
    let (ps, ts): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let report = segmetrics::report(&ps, &ts, &ClassLabel::FOREGROUND, aggregation)?;
    let mut summary = Summary::default();
    write(&mut summary, cfg.out.join("segmetrics.csv"), segmetrics_csv(&report))?;
    Ok(summary)
}

// ---------------------------------------------------------------- fusion

fn fusion_dataset(cfg: &RunConfig, dataset: Option<&Path>) -> Result<FusionDataset, CliError> {
    let dir = dataset
        .map(Path::to_path_buf)
        .or_else(|| cfg.fusion_dataset.clone())
        .ok_or_else(|| CliError::Usage("no fusion dataset given (--dataset or `fusion_dataset =`)".into()))?;
    Ok(FusionDataset::load(&dir)?)
}

pub fn fusion_config(cfg: &RunConfig) -> FusionConfig {
    let f = &cfg.fusion;
    FusionConfig {
        image_size: f.image_size,
        patch: f.patch,
        d_model: f.d_model,
        n_heads: f.n_heads,
        n_blocks: f.n_blocks,
        head_hidden: f.head_hidden,
        ff_mult: f.ff_mult,
        seed: cfg.seed,
        direction: f.direction,
        zero_init_classifier: f.zero_init_classifier,
        ..FusionConfig::default()
    }
}

fn ablation_csv(outcome: &HarnessOutcome) -> String {
    let r = &outcome.report;
    let mut s = String::from(
        "horizon,label,with_dp,dp_applicable,epochs,cv_auc,test_auc,accuracy,sensitivity,specificity,reference_auc\n",
    );
    for row in &r.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.horizon.tag(),
            row.label,
            u8::from(row.with_dp),
            u8::from(row.dp_applicable),
            row.epochs,
            row.cv_auc,
            row.test.auc,
            row.test.accuracy,
            row.test.sensitivity,
            row.test.specificity,
            r.reference_auc.map_or_else(String::new, |a| a.to_string())
        );
    }
    s
}

pub fn train_fusion(
    cfg: &RunConfig,
    dataset: Option<&Path>,
    horizon: Option<Stage>,
    without_dp: bool,
) -> Result<Summary, CliError> {
    let horizon = horizon_required(horizon)?;
    let mut ds = fusion_dataset(cfg, dataset)?;
    let mut summary = Summary::default();
    if ds.imputed_cells > 0 {
        summary.notes.push(format!("{} missing cells mean-imputed", ds.imputed_cells));
    }
    if without_dp {
        let keep = ds.values_selection(false);
        for r in &mut ds.records {
            r.values = keep.iter().map(|&j| r.values[j]).collect();
        }
        ds.values_names = keep.iter().map(|&j| ds.values_names[j].clone()).collect();
    }
    let f = &cfg.fusion;
    let opts = HarnessOptions {
        train: TrainOptions {
            epochs: f.epochs,
            lr: f.lr,
            batch_size: f.batch_size,
            momentum: f.momentum,
            seed: cfg.seed,
        },
        folds: f.folds,
        test_fraction: cfg.test_fraction,
        candidate_epochs: Vec::new(),
        class_threshold: cfg.class_threshold,
        seed: cfg.seed,
    };
    let outcome = evaluate_harness(&ds, &fusion_config(cfg), horizon, &opts)?;
    let h = tag(horizon);
    write(&mut summary, cfg.out.join(format!("fusion_{h}.json")), to_json(&outcome.report)?)?;
    write(&mut summary, cfg.out.join(format!("fusion_{h}_ablation.csv")), ablation_csv(&outcome))?;
    let curves: Vec<(&str, &[_], f64)> =
        outcome.report.rows.iter().map(|r| (r.label.as_str(), r.roc.as_slice(), r.test.auc)).collect();
    write(&mut summary, cfg.out.join(format!("fusion_{h}_roc.svg")), roc_svg(&curves))?;
    let main = if ds.has_dp() { "full+dp" } else { "full" };
    let (_, model) = outcome.models.iter().find(|(l, _)| l == main).expect("full model trained");
    write(&mut summary, cfg.out.join(format!("fusion_{h}.ckpt.json")), checkpoint::to_json(model)?)?;
    Ok(summary)
}

pub fn predict(
    cfg: &RunConfig,
    checkpoint_path: &Path,
    dataset: Option<&Path>,
    sample: Option<&str>,
) -> Result<Summary, CliError> {
    let model = checkpoint::load(checkpoint_path)?;
    let ds = fusion_dataset(cfg, dataset)?;
    let width = model.model.config().values_dim;
    let with_dp = if width == ds.values_names.len() {
        true
    } else if width == ds.values_selection(false).len() {
        false
    } else {
        return Err(CliError::Usage(format!(
            "checkpoint expects {width} values columns, dataset has {}",
            ds.values_names.len()
        )));
    };
    let keep = ds.values_selection(with_dp);
    let records: Vec<_> = ds.records.iter().filter(|r| sample.is_none_or(|id| r.id == id)).collect();
    if records.is_empty() {
        return Err(CliError::EmptyInput(match sample {
            Some(id) => format!("no sample {id:?} in the dataset"),
            None => "dataset has no samples".into(),
        }));
    }
    let samples: Vec<Sample> = records
        .iter()
        .map(|r| Sample {
            image: r.image.clone(),
            clinical: r.clinical.clone(),
            values: keep.iter().map(|&j| r.values[j]).collect(),
            superior: false,
        })
        .collect();
    let probs = model.predict(&samples)?;
    let mut csv = String::from("sample_id,p_superior\n");
    for (r, p) in records.iter().zip(&probs) {
        let _ = writeln!(csv, "{},{p}", csv_field(&r.id));
    }
    let mut summary = Summary::default();
    if let (Some(id), [p]) = (sample, probs.as_slice()) {
        summary.notes.push(format!("{id}: p_superior = {p}"));
    }
    write(&mut summary, cfg.out.join("predictions.csv"), csv)?;
    Ok(summary)
}

// ---------------------------------------------------------------- report

fn num(v: &Value) -> String {
    match v {
        Value::Number(n) => n.to_string(),
        Value::Bool(b) => u8::from(*b).to_string(),
        Value::String(s) => csv_field(s),
        _ => String::new(),
    }
}

fn reports(dir: &Path, prefix: &str) -> Result<Vec<(String, Value)>, CliError> {
    let mut out = Vec::new();
    let mut names: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name().and_then(|n| n.to_str()).is_some_and(|n| {
                n.starts_with(prefix) && n.ends_with(".json") && !n.ends_with(".ckpt.json")
            })
        })
        .collect();
    // Horizons in follow-up order rather than alphabetical.
    names.sort_by_key(|p| {
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let order = Stage::POSTOP.iter().position(|s| stem.ends_with(&format!("_{}", tag(*s)))).unwrap_or(9);
        (order, stem)
    });
    for p in names {
        let v: Value = serde_json::from_str(&fs::read_to_string(&p)?)?;
        out.push((p.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string(), v));
    }
    Ok(out)
}

pub fn report(cfg: &RunConfig, input: Option<&Path>) -> Result<Summary, CliError> {
    let dir = input.map(Path::to_path_buf).unwrap_or_else(|| cfg.out.clone());
    let fits = reports(&dir, "fit_")?;
    let fusions = reports(&dir, "fusion_")?;
    if fits.is_empty() && fusions.is_empty() {
        return Err(CliError::EmptyInput(format!("no fit_*.json or fusion_*.json in {}", dir.display())));
    }
    let mut summary = Summary::default();
    if !fits.is_empty() {
        let mut t2 = String::from(
            "horizon,n,n_superior,accuracy_without_dp,accuracy_with_dp,auc_without_dp,auc_with_dp,lr_statistic,lr_df,lr_p,nagelkerke_r2_with_dp\n",
        );
        let mut t3 = String::from("horizon,model,term,b,se,wald,p,odds_ratio,ci_low,ci_high\n");
        for (_, v) in &fits {
            let r = &v["report"];
            let c = &r["comparison"];
            let _ = writeln!(
                t2,
                "{},{},{},{},{},{},{},{},{},{},{}",
                num(&v["horizon"]),
                num(&r["n_rows"]),
                num(&r["n_superior"]),
                num(&c["without_dp"]["test_metrics"]["accuracy"]),
                num(&c["with_dp"]["test_metrics"]["accuracy"]),
                num(&c["without_dp"]["test_roc"]["auc"]),
                num(&c["with_dp"]["test_roc"]["auc"]),
                num(&c["lr_statistic"]),
                num(&c["lr_df"]),
                num(&c["lr_p"]),
                num(&c["with_dp"]["fit"]["nagelkerke_r2"]),
            );
            for model in ["without_dp", "with_dp"] {
                let fit = &c[model]["fit"];
                let terms = std::iter::once(&fit["intercept"]).chain(fit["terms"].as_array().into_iter().flatten());
                for t in terms {
                    let _ = writeln!(
                        t3,
                        "{},{model},{},{},{},{},{},{},{},{}",
                        num(&v["horizon"]),
                        num(&t["name"]),
                        num(&t["b"]),
                        num(&t["se"]),
                        num(&t["wald"]),
                        num(&t["p"]),
                        num(&t["odds_ratio"]),
                        num(&t["ci_low"]),
                        num(&t["ci_high"]),
                    );
                }
            }
        }
        write(&mut summary, cfg.out.join("table_dp_comparison.csv"), t2)?;
        write(&mut summary, cfg.out.join("table_coefficients.csv"), t3)?;
    }
    if !fusions.is_empty() {
        let mut s = String::from(
            "horizon,label,with_dp,dp_applicable,epochs,cv_auc,test_auc,accuracy,sensitivity,specificity,reference_auc\n",
        );
        for (_, v) in &fusions {
            for row in v["rows"].as_array().into_iter().flatten() {
                let t = &row["test"];
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    num(&v["horizon"]),
                    num(&row["label"]),
                    num(&row["with_dp"]),
                    num(&row["dp_applicable"]),
                    num(&row["epochs"]),
                    num(&row["cv_auc"]),
                    num(&t["auc"]),
                    num(&t["accuracy"]),
                    num(&t["sensitivity"]),
                    num(&t["specificity"]),
                    num(&v["reference_auc"]),
                );
            }
        }
        write(&mut summary, cfg.out.join("table_fusion_ablation.csv"), s)?;
    }
    Ok(summary)
}
