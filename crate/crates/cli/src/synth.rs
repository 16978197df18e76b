//! Synthetic study fixture: label scans for every eye and stage, a manifest,
//! paired segmentation folders, a fusion dataset and a run config.
//!
//! A latent healing speed per eye drives both how early each lesion closes and
//! how many letters the eye gains, so recovery rates carry outcome signal.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use octdyn_core::data::write_scan;
use octdyn_core::fusion::{synthetic, SyntheticSpec};
use octdyn_core::morphometry::paint_rect;
use octdyn_core::{ClassLabel, LabeledScan, Orientation, PixelSpacing, Stage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{CliError, Summary};

pub const WIDTH: usize = 128;
pub const HEIGHT: usize = 80;
pub const SPACING_X: f64 = 10.0;
pub const SPACING_Y: f64 = 4.0;

const ELM_ROW: usize = 62;
const EZ_ROW: usize = 66;
const RPE_ROW: usize = 70;

/// Geometry of one eye before surgery, in pixels.
#[derive(Clone, Copy, Debug)]
struct Eye {
    centre: usize,
    top: usize,
    waist: usize,
    min_half: f64,
    slope_up: f64,
    slope_down: f64,
    ez_half: usize,
    elm_half: usize,
    cyst: (usize, usize),
    erm: bool,
    space: bool,
    /// Stage index (1..=4, 5 = beyond follow-up) at which each lesion is gone.
    close_hole: usize,
    close_ez: usize,
    close_elm: usize,
    close_cyst: usize,
}

fn close_index(speed: f64, lag: f64, rng: &mut ChaCha8Rng) -> usize {
    let x = (1.0 - speed) * 4.0 + lag + rng.random::<f64>() * 1.2;
    (x.floor() as usize + 1).clamp(1, 5)
}

fn shrink(stage: usize, close: usize) -> f64 {
    if stage >= close {
        0.0
    } else {
        1.0 - 0.6 * stage as f64 / close as f64
    }
}

fn draw_scan(eye: &Eye, stage: usize, orientation: Orientation, jitter: f64) -> LabeledScan {
    let spacing = PixelSpacing::new(SPACING_X, SPACING_Y).expect("positive spacing");
    let mut s = LabeledScan::blank(WIDTH, HEIGHT, orientation, spacing).expect("non-empty grid");
    let c = eye.centre as isize;
    let span = |half: usize| -> std::ops::Range<usize> {
        let h = half as isize;
        (c - h).max(0) as usize..((c + h + 1) as usize).min(WIDTH)
    };
    paint_rect(&mut s, ClassLabel::Rpe, RPE_ROW..RPE_ROW + 3, 0..WIDTH);
    for (row, band, half, close) in [
        (ELM_ROW, ClassLabel::Elm, eye.elm_half, eye.close_elm),
        (EZ_ROW, ClassLabel::Ez, eye.ez_half, eye.close_ez),
    ] {
        paint_rect(&mut s, band, row..row + 2, 0..WIDTH);
        let gap = (half as f64 * shrink(stage, close) * jitter).round() as usize;
        if gap > 0 {
            paint_rect(&mut s, ClassLabel::Background, row..row + 2, span(gap));
        }
    }
    let f = shrink(stage, eye.close_hole) * jitter;
    if f > 0.0 {
        let bottom = ELM_ROW - 1;
        let top = bottom - ((bottom - eye.top) as f64 * f).round().max(2.0) as usize;
        let waist = (top + ((eye.waist - eye.top) as f64 * f) as usize).min(bottom);
        for r in top..=bottom {
            let d = r as f64 - waist as f64;
            let half = eye.min_half * f + if d < 0.0 { -d * eye.slope_up } else { d * eye.slope_down } * f;
            paint_rect(&mut s, ClassLabel::MacularHole, r..r + 1, span(half.round() as usize));
        }
    }
    let fc = shrink(stage, eye.close_cyst) * jitter;
    if fc > 0.0 {
        let (h, w) = ((eye.cyst.0 as f64 * fc).ceil() as usize, (eye.cyst.1 as f64 * fc).ceil() as usize);
        for side in [-1isize, 1] {
            let c0 = (c + side * 30 - w as isize / 2).clamp(0, (WIDTH - w) as isize) as usize;
            paint_rect(&mut s, ClassLabel::Pseudocysts, 40..40 + h, c0..c0 + w);
        }
    }
    if eye.erm && stage == 0 {
        paint_rect(&mut s, ClassLabel::Erm, 2..4, span(40));
    }
    if eye.space && stage == 0 {
        paint_rect(&mut s, ClassLabel::Space, 5..9, span(8));
    }
    s
}

/// Writes the fixture under `out` and returns the written paths.
pub fn write_fixture(out: &Path, seed: u64, eyes: usize) -> Result<Summary, CliError> {
    if eyes < 4 {
        return Err(CliError::Usage("the synthetic study needs at least 4 eyes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Normal<f64> = Normal::new(0.0, 1.0).expect("unit normal");
    let scans_dir = out.join("scans");
    fs::create_dir_all(&scans_dir)?;
    let mut manifest = String::from("eye_id,stage,bcva_etdrs,scan_h,scan_v,age,duration_days,axial_length_mm\n");
    let mut truth_scans = Vec::new();
    for i in 0..eyes {
        let id = format!("E{:03}", i + 1);
        let speed: f64 = rng.random();
        let top = rng.random_range(8..20);
        let eye = Eye {
            centre: rng.random_range(54..74),
            top,
            waist: top + rng.random_range(10..25),
            min_half: 14.0 - 8.0 * speed + rng.random_range(-3.0..3.0),
            slope_up: rng.random_range(0.1..0.5),
            slope_down: rng.random_range(0.5..1.2),
            ez_half: rng.random_range(18..34),
            elm_half: rng.random_range(10..24),
            cyst: (rng.random_range(3..9), rng.random_range(4..12)),
            erm: rng.random::<f64>() < 0.3,
            space: rng.random::<f64>() < 0.2,
            close_hole: close_index(speed, 0.0, &mut rng),
            close_ez: close_index(speed, 1.0, &mut rng),
            close_elm: close_index(speed, 0.5, &mut rng),
            close_cyst: close_index(speed, 0.2, &mut rng),
        };
        let age = (66.0 + 7.0 * z.sample(&mut rng)).round();
        let duration = (150.0 + 80.0 * (z.sample(&mut rng) + 1.5 * (0.5 - speed))).max(7.0).round();
        let axial = ((23.6 + 0.9 * z.sample(&mut rng)) * 100.0).round() / 100.0;
        let pre_bcva = rng.random_range(25..50u8);
        let gain = 8.0 + 28.0 * speed + 8.0 * z.sample(&mut rng);
        for (k, stage) in Stage::ALL.iter().enumerate() {
            let frac = [0.0, 0.55, 0.8, 0.92, 1.0][k];
            let bcva = (f64::from(pre_bcva) + gain * frac + 2.0 * z.sample(&mut rng)).round().clamp(0.0, 100.0) as u8;
            let bcva = if k == 0 { pre_bcva } else { bcva };
            let mut names = Vec::new();
            for orientation in [Orientation::Horizontal, Orientation::Vertical] {
                let jitter = if orientation == Orientation::Horizontal { 1.0 } else { rng.random_range(0.85..1.1) };
                let scan = draw_scan(&eye, k, orientation, jitter);
                let name = format!("{id}_{}_{}.png", stage.tag(), orientation.tag());
                write_scan(&scan, &scans_dir.join(&name))?;
                if k == 0 && orientation == Orientation::Horizontal && truth_scans.len() < 8 {
                    truth_scans.push((name.clone(), scan));
                }
                names.push(name);
            }
            let _ = writeln!(
                manifest,
                "{id},{},{bcva},scans/{},scans/{},{age},{duration},{axial}",
                stage.tag(),
                names[0],
                names[1]
            );
        }
    }
    let mut summary = Summary::default();
    let manifest_path = out.join("manifest.csv");
    fs::write(&manifest_path, manifest)?;
    summary.outputs.push(manifest_path);
    summary.outputs.push(scans_dir);

    // Predictions: the truth with sprinkled pixel errors.
    for sub in ["seg/pred", "seg/truth"] {
        fs::create_dir_all(out.join(sub))?;
    }
    for (name, truth) in &truth_scans {
        let mut pred = truth.clone();
        for _ in 0..(WIDTH * HEIGHT / 40) {
            let (r, c) = (rng.random_range(1..HEIGHT), rng.random_range(0..WIDTH));
            let label = if rng.random::<f64>() < 0.5 { truth.get(r - 1, c) } else { ClassLabel::Background };
            pred.set(r, c, label);
        }
        write_scan(truth, &out.join("seg/truth").join(name))?;
        write_scan(&pred, &out.join("seg/pred").join(name))?;
    }
    summary.outputs.push(out.join("seg"));

    let fusion = synthetic(&SyntheticSpec { n: eyes, image_size: 32, seed, ..SyntheticSpec::default() });
    fusion.save(&out.join("fusion"))?;
    summary.outputs.push(out.join("fusion"));

    let cfg = format!(
        "# synthetic study\n\
         manifest = manifest.csv\n\
         fusion_dataset = fusion\n\
         spacing_x = {SPACING_X}\n\
         spacing_y = {SPACING_Y}\n\
         seed = {seed}\n\
         image_size = 32\n\
         patch = 16\n\
         d_model = 16\n\
         n_heads = 2\n\
         n_blocks = 1\n\
         head_hidden = 16\n\
         epochs = 20\n\
         folds = 3\n"
    );
    let cfg_path = out.join("run.cfg");
    fs::write(&cfg_path, cfg)?;
    summary.outputs.push(cfg_path);
    Ok(summary)
}
