//! CSV and SVG emitters: feature tables, ROC curves and segmentation metrics.

use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Stage;
use crate::dynamics::DYNAMIC_COLUMNS;
use crate::morphometry::{FeatureVector, FEATURE_COLUMNS};
use crate::segmetrics::MetricsReport;
use crate::stats::RocPoint;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("feature table line {line}: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub const CLINICAL_PREFIX: &str = "cd_";
pub const CIRCULARITY_COLUMNS: [&str; 2] = ["hole_circularity", "cyst_circularity"];

/// One `(eye, stage)` row of the feature table.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub eye_id: String,
    pub stage: Option<Stage>,
    pub bcva_etdrs: Option<u8>,
    /// Aligned with [`FeatureTable::clinical_names`].
    pub clinical: Vec<Option<f64>>,
    pub features: FeatureVector,
    /// Dynamic columns read back from a table, in `DYNAMIC_COLUMNS` order.
    /// Ignored on output when `features.dynamics` is set.
    pub dynamic: Vec<Option<f64>>,
}

impl FeatureRow {
    pub fn dynamic_values(&self) -> Option<Vec<Option<f64>>> {
        match &self.features.dynamics {
            Some(d) => Some(d.columns().into_iter().map(|(_, v)| Some(v)).collect()),
            None if self.dynamic.iter().any(Option::is_some) => Some(self.dynamic.clone()),
            None => None,
        }
    }

    /// Any column by name: clinical (without prefix), feature, circularity or dynamic.
    pub fn value(&self, table: &FeatureTable, name: &str) -> Option<f64> {
        if let Some(j) = table.clinical_names.iter().position(|n| n == name) {
            return self.clinical.get(j).copied().flatten();
        }
        if let Some(j) = DYNAMIC_COLUMNS.iter().position(|&n| n == name) {
            return self.dynamic_values().and_then(|d| d[j]);
        }
        match name {
            "hole_circularity" => self.features.hole_circularity,
            "cyst_circularity" => self.features.cyst_circularity,
            _ => self.features.columns().into_iter().find(|(n, _)| *n == name).and_then(|(_, v)| v),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub clinical_names: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn parse_cell(s: &str, line: u64, col: &str) -> Result<Option<f64>, ReportError> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|_| ReportError::Malformed { line, reason: format!("{col}: {s:?} is not a number") })
}

impl FeatureTable {
    pub fn has_dynamics(&self) -> bool {
        self.rows.iter().any(|r| r.dynamic_values().is_some())
    }

    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["eye_id", "stage", "bcva_etdrs", "orientations"].map(String::from).to_vec();
        h.extend(self.clinical_names.iter().map(|n| format!("{CLINICAL_PREFIX}{n}")));
        h.extend(FEATURE_COLUMNS.iter().chain(&CIRCULARITY_COLUMNS).map(|s| s.to_string()));
        if self.has_dynamics() {
            h.extend(DYNAMIC_COLUMNS.iter().map(|s| s.to_string()));
        }
        h
    }

    pub fn write<W: Write>(&self, out: W) -> Result<(), ReportError> {
        let mut w = csv::Writer::from_writer(out);
        let dyn_cols = self.has_dynamics();
        w.write_record(self.header())?;
        for r in &self.rows {
            let mut rec = vec![
                r.eye_id.clone(),
                r.stage.map_or_else(String::new, |s| s.tag().to_string()),
                r.bcva_etdrs.map_or_else(String::new, |b| b.to_string()),
                r.features.orientations.clone(),
            ];
            rec.extend(r.clinical.iter().map(|&v| cell(v)));
            rec.extend(r.features.columns().into_iter().map(|(_, v)| cell(v)));
            rec.push(cell(r.features.hole_circularity));
            rec.push(cell(r.features.cyst_circularity));
            if dyn_cols {
                match r.dynamic_values() {
                    Some(d) => rec.extend(d.into_iter().map(cell)),
                    None => rec.extend(std::iter::repeat_n(String::new(), DYNAMIC_COLUMNS.len())),
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8 output")
    }

    pub fn read<R: Read>(input: R) -> Result<Self, ReportError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let pos = |name: &str| headers.iter().position(|h| h == name);
        let (eye, stage) = match (pos("eye_id"), pos("stage")) {
            (Some(e), Some(s)) => (e, s),
            _ => return Err(ReportError::Malformed { line: 1, reason: "missing eye_id or stage column".into() }),
        };
        let bcva = pos("bcva_etdrs");
        let orient = pos("orientations");
        let clinical: Vec<(usize, String)> = headers
            .iter()
            .enumerate()
            .filter_map(|(i, h)| h.strip_prefix(CLINICAL_PREFIX).map(|n| (i, n.to_string())))
            .collect();
        let dynamic: Vec<Option<usize>> = DYNAMIC_COLUMNS.iter().map(|c| pos(c)).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let get = |i: usize| rec.get(i).unwrap_or("");
            let stage_v = match get(stage) {
                "" => None,
                s => Some(s.parse::<Stage>().map_err(|reason| ReportError::Malformed { line, reason })?),
            };
            let bcva_v = match bcva.map(get).unwrap_or("") {
                "" => None,
                s => Some(s.parse::<u8>().map_err(|_| ReportError::Malformed {
                    line,
                    reason: format!("bcva_etdrs {s:?} is not an integer letter score"),
                })?),
            };
            let mut fv = FeatureVector {
                eye_id: get(eye).to_string(),
                stage: stage_v,
                orientations: orient.map(get).unwrap_or("").to_string(),
                ..FeatureVector::default()
            };
            for name in FEATURE_COLUMNS.iter().chain(&CIRCULARITY_COLUMNS) {
                if let Some(i) = pos(name) {
                    fv.set_column(name, parse_cell(get(i), line, name)?);
                }
            }
            fv.hole_present = fv.hole_area_um2.map(|a| a > 0.0);
            let clin = clinical.iter().map(|(i, n)| parse_cell(get(*i), line, n)).collect::<Result<_, _>>()?;
            let dyn_vals: Vec<Option<f64>> = dynamic
                .iter()
                .zip(DYNAMIC_COLUMNS)
                .map(|(i, n)| i.map_or(Ok(None), |i| parse_cell(get(i), line, n)))
                .collect::<Result<_, _>>()?;
            rows.push(FeatureRow {
                eye_id: fv.eye_id.clone(),
                stage: stage_v,
                bcva_etdrs: bcva_v,
                clinical: clin,
                features: fv,
                dynamic: if dyn_vals.iter().any(Option::is_some) { dyn_vals } else { Vec::new() },
            });
        }
        Ok(Self { clinical_names: clinical.into_iter().map(|(_, n)| n).collect(), rows })
    }
}

fn fmt_threshold(t: f64) -> String {
    if t.is_infinite() {
        if t > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        t.to_string()
    }
}

/// `threshold,fpr,tpr` rows in sweep order.
pub fn roc_csv(points: &[RocPoint]) -> String {
    let mut s = String::from("threshold,fpr,tpr\n");
    for p in points {
        let _ = writeln!(s, "{},{},{}", fmt_threshold(p.threshold), p.fpr, p.tpr);
    }
    s
}

/// A square ROC plot with the chance diagonal and one polyline per curve.
pub fn roc_svg(curves: &[(&str, &[RocPoint], f64)]) -> String {
    const SIZE: f64 = 400.0;
    const PAD: f64 = 40.0;
    const COLOURS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
    let span = SIZE - 2.0 * PAD;
    let x = |fpr: f64| PAD + fpr * span;
    let y = |tpr: f64| SIZE - PAD - tpr * span;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#);
    let _ = writeln!(s, r#"<rect x="{PAD}" y="{PAD}" width="{span}" height="{span}" fill="none" stroke="black"/>"#);
    let _ = writeln!(s, r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#999" stroke-dasharray="4 4"/>"##, x(0.0), y(0.0), x(1.0), y(1.0));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">False positive rate</text>"#, SIZE / 2.0, SIZE - 8.0);
    let _ = writeln!(s, r#"<text x="12" y="{}" font-size="12" transform="rotate(-90 12 {})" text-anchor="middle">True positive rate</text>"#, SIZE / 2.0, SIZE / 2.0);
    for (i, (label, pts, auc)) in curves.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        let coords: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", x(p.fpr), y(p.tpr))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{colour}" stroke-width="2" points="{}"/>"#, coords.join(" "));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" fill="{colour}">{} (AUC {:.3})</text>"#,
            PAD + span * 0.45,
            SIZE - PAD - 10.0 - 14.0 * i as f64,
            xml_escape(label),
            auc
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Per-class rows plus a `Mean` row; `auc_fallback` is 1 when AUC came from a hard mask.
pub fn segmetrics_csv(r: &MetricsReport) -> String {
    let mut s = String::from("class,dice,iou,accuracy,f1,roc_auc,auc_fallback,support\n");
    for c in &r.per_class {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            c.class.name(),
            c.dice,
            c.iou,
            c.accuracy,
            c.f1,
            cell(c.roc_auc),
            u8::from(c.hard_mask_fallback),
            c.support
        );
    }
    let m = &r.mean;
    let _ = writeln!(s, "Mean,{},{},{},{},{},,", m.dice, m.iou, m.accuracy, m.f1, cell(m.roc_auc));
    s
}
