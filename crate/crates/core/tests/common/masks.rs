//! Random label scans plus a brute-force geometry oracle that shares no code
//! with the library's component labelling or row scanning.

use octdyn_core::{ClassLabel, LabeledScan, Orientation, PixelSpacing};

use super::SplitMix64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Rectangle,
    Hourglass,
    MultiComponent,
}

pub const SHAPES: [Shape; 3] = [Shape::Rectangle, Shape::Hourglass, Shape::MultiComponent];

/// Expected integer measurements.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Expected {
    pub hole: Option<HoleExpect>,
    pub cyst_px: usize,
    pub elm_gap: Option<usize>,
    pub ez_gap: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HoleExpect {
    pub mld_px: usize,
    pub bd_px: usize,
    pub e_rows: usize,
    pub height_rows: usize,
    pub area_px: usize,
}

fn range(rng: &mut SplitMix64, lo: usize, hi: usize) -> usize {
    lo + rng.below(hi - lo + 1)
}

fn fill(grid: &mut [u8], w: usize, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>, code: u8) {
    for r in rows {
        for c in cols.clone() {
            grid[r * w + c] = code;
        }
    }
}

/// Random scan with a hole of the given shape, pseudocysts and two gapped bands.
pub fn random_scan(seed: u64, shape: Shape) -> LabeledScan {
    let mut rng = SplitMix64::new(seed);
    let w = range(&mut rng, 40, 90);
    let h = range(&mut rng, 40, 70);
    let mut g = vec![0u8; w * h];
    let hole = ClassLabel::MacularHole.code();
    // Bands occupy the bottom rows; the hole lives above them.
    let band_top = h - 6;
    for (row, code) in [(band_top + 1, ClassLabel::Elm.code()), (band_top + 3, ClassLabel::Ez.code())] {
        let mut c = rng.below(4);
        while c < w {
            let run = range(&mut rng, 1, 12);
            fill(&mut g, w, row..row + 1 + rng.below(2), c..(c + run).min(w), code);
            c += run + rng.below(8);
        }
    }
    for _ in 0..rng.below(4) {
        let (r0, c0) = (rng.below(band_top - 4), rng.below(w - 4));
        fill(&mut g, w, r0..r0 + range(&mut rng, 1, 4), c0..c0 + range(&mut rng, 1, 4), ClassLabel::Pseudocysts.code());
    }
    match shape {
        Shape::Rectangle => {
            let (r0, c0) = (rng.below(band_top / 2), rng.below(w / 2));
            let (rh, cw) = (range(&mut rng, 1, band_top - r0), range(&mut rng, 1, w - c0));
            fill(&mut g, w, r0..r0 + rh, c0..c0 + cw, hole);
        }
        Shape::Hourglass => {
            let top = rng.below(band_top / 3);
            let bottom = range(&mut rng, top + 2, band_top - 1);
            let waist = range(&mut rng, top, bottom);
            let centre = range(&mut rng, w / 4, 3 * w / 4);
            let min_half = rng.below(3);
            let slope = 0.2 + rng.uniform() * 1.5;
            for r in top..=bottom {
                let half = min_half + ((r as f64 - waist as f64).abs() * slope) as usize;
                let left = centre.saturating_sub(half);
                let right = (centre + half + rng.below(2)).min(w - 1);
                fill(&mut g, w, r..r + 1, left..right + 1, hole);
            }
        }
        Shape::MultiComponent => {
            for _ in 0..range(&mut rng, 2, 5) {
                let (r0, c0) = (rng.below(band_top - 2), rng.below(w - 2));
                let rh = range(&mut rng, 1, (band_top - r0).min(15));
                let cw = range(&mut rng, 1, (w - c0).min(15));
                fill(&mut g, w, r0..r0 + rh, c0..c0 + cw, hole);
            }
        }
    }
    // Sprinkle isolated speckle that must never win the largest-component rule.
    for _ in 0..rng.below(6) {
        let i = rng.below(band_top * w);
        if g[i] == 0 {
            g[i] = hole;
        }
    }
    LabeledScan::from_codes(w, h, &g, Orientation::Horizontal, PixelSpacing::new(1.0, 1.0).unwrap()).unwrap()
}

/// Component id per pixel via repeated min-label relaxation until a fixed point.
fn relax_labels(mask: &[bool], w: usize, h: usize) -> Vec<Option<usize>> {
    let mut lab: Vec<Option<usize>> = (0..mask.len()).map(|i| mask[i].then_some(i)).collect();
    loop {
        let mut changed = false;
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                let Some(mut best) = lab[i] else { continue };
                let mut neighbours = Vec::with_capacity(4);
                if r > 0 {
                    neighbours.push(i - w);
                }
                if r + 1 < h {
                    neighbours.push(i + w);
                }
                if c > 0 {
                    neighbours.push(i - 1);
                }
                if c + 1 < w {
                    neighbours.push(i + 1);
                }
                for j in neighbours {
                    if let Some(l) = lab[j] {
                        best = best.min(l);
                    }
                }
                if Some(best) != lab[i] {
                    lab[i] = Some(best);
                    changed = true;
                }
            }
        }
        if !changed {
            return lab;
        }
    }
}

fn band_gap(scan: &LabeledScan, band: ClassLabel) -> Option<usize> {
    let cols: Vec<usize> =
        (0..scan.width()).filter(|&c| (0..scan.height()).any(|r| scan.get(r, c) == band)).collect();
    if cols.is_empty() {
        return None;
    }
    // Gaps between consecutive occupied columns.
    Some(cols.windows(2).map(|p| p[1] - p[0] - 1).max().unwrap_or(0))
}

pub fn oracle(scan: &LabeledScan) -> Expected {
    let (w, h) = (scan.width(), scan.height());
    let mask = scan.mask(ClassLabel::MacularHole);
    let lab = relax_labels(&mask, w, h);
    // Component label is its smallest raster index, so ties go to the lower label.
    let mut sizes = std::collections::BTreeMap::<usize, usize>::new();
    for l in lab.iter().flatten() {
        *sizes.entry(*l).or_default() += 1;
    }
    let chosen = sizes.iter().fold(None, |best: Option<(usize, usize)>, (&l, &n)| match best {
        Some((_, bn)) if bn >= n => best,
        _ => Some((l, n)),
    });
    let hole = chosen.map(|(id, area_px)| {
        let widths: Vec<(usize, usize)> = (0..h)
            .filter_map(|r| {
                let cols: Vec<usize> = (0..w).filter(|&c| lab[r * w + c] == Some(id)).collect();
                Some((r, cols.last()? - cols.first()? + 1))
            })
            .collect();
        let (top, _) = widths[0];
        let (base, bd_px) = *widths.last().unwrap();
        let mld_px = widths.iter().map(|&(_, wd)| wd).min().unwrap();
        let mld_row = widths.iter().filter(|&&(_, wd)| wd == mld_px).map(|&(r, _)| r).max().unwrap();
        HoleExpect { mld_px, bd_px, e_rows: base - mld_row, height_rows: base - top + 1, area_px }
    });
    Expected {
        hole,
        cyst_px: scan.labels().iter().filter(|&&l| l == ClassLabel::Pseudocysts).count(),
        elm_gap: band_gap(scan, ClassLabel::Elm),
        ez_gap: band_gap(scan, ClassLabel::Ez),
    }
}

/// Library measurements in the same integer form.
pub fn measured(scan: &LabeledScan) -> Expected {
    use octdyn_core::morphometry::{band_gap_columns, hole_pixels, largest_component};
    let hole = largest_component(scan, ClassLabel::MacularHole).as_ref().and_then(hole_pixels).map(|p| {
        HoleExpect {
            mld_px: p.mld_px,
            bd_px: p.bd_px,
            e_rows: p.e_rows(),
            height_rows: p.height_rows(),
            area_px: p.area_px,
        }
    });
    Expected {
        hole,
        cyst_px: scan.count(ClassLabel::Pseudocysts),
        elm_gap: band_gap_columns(scan, ClassLabel::Elm),
        ez_gap: band_gap_columns(scan, ClassLabel::Ez),
    }
}
