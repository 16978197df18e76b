mod common;

use common::SplitMix64;
use octdyn_core::segmetrics::{
    binary_metrics, mean_row, report, roc_auc_class, Aggregation, ClassMetrics, Confusion, SegError,
};
use octdyn_core::{ClassLabel, LabeledScan, Orientation, PixelSpacing};
use proptest::prelude::*;

/// Published per-class rows: class, Dice, IoU, accuracy, F1, ROC AUC.
const TABLE1: [(ClassLabel, [f64; 5]); 9] = [
    (ClassLabel::Elm, [0.8676, 0.7681, 0.9984, 0.8676, 0.9269]),
    (ClassLabel::Ez, [0.8749, 0.7795, 0.9985, 0.8749, 0.9151]),
    (ClassLabel::Rpe, [0.9056, 0.8288, 0.9977, 0.9056, 0.9539]),
    (ClassLabel::MacularHole, [0.9445, 0.9057, 0.9987, 0.9445, 0.9864]),
    (ClassLabel::Pseudocysts, [0.8904, 0.8096, 0.9987, 0.8904, 0.9541]),
    (ClassLabel::Pvd, [0.8528, 0.7577, 0.9974, 0.8528, 0.9618]),
    (ClassLabel::Vmt, [0.8546, 0.7563, 0.9974, 0.8546, 0.9525]),
    (ClassLabel::Space, [0.7595, 0.6617, 0.9971, 0.7595, 0.6666]),
    (ClassLabel::Erm, [0.8048, 0.6958, 0.9989, 0.8048, 0.8907]),
];

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

#[test]
fn published_mean_row_reproduced() {
    let rows: Vec<ClassMetrics> = TABLE1
        .iter()
        .map(|&(class, [dice, iou, accuracy, f1, auc])| ClassMetrics {
            class,
            dice,
            iou,
            accuracy,
            f1,
            roc_auc: Some(auc),
            hard_mask_fallback: false,
            support: 1,
        })
        .collect();
    let m = mean_row(&rows);
    assert_eq!(round4(m.dice), 0.8616);
    assert_eq!(round4(m.iou), 0.7737);
    assert_eq!(round4(m.accuracy), 0.9981);
    assert_eq!(round4(m.f1), 0.8616);
    assert_eq!(round4(m.roc_auc.unwrap()), 0.9120);
}

fn random_pair(rng: &mut SplitMix64) -> (Vec<bool>, Vec<bool>) {
    let n = 1 + rng.below(400);
    let (pp, pt) = (rng.uniform(), rng.uniform());
    let truth: Vec<bool> = (0..n).map(|_| rng.uniform() < pt).collect();
    // Predictions are a noisy copy of the truth so overlaps span the whole range.
    let flip = rng.uniform();
    let pred = truth.iter().map(|&t| if rng.uniform() < flip { rng.uniform() < pp } else { t }).collect();
    (pred, truth)
}

#[test]
fn dice_equals_f1_and_set_oracle() {
    let mut rng = SplitMix64::new(60_000);
    for _ in 0..200 {
        let (pred, truth) = random_pair(&mut rng);
        let m = binary_metrics(&pred, &truth).unwrap();
        assert_eq!(m.dice.to_bits(), m.f1.to_bits());
        let inter = pred.iter().zip(&truth).filter(|(p, t)| **p && **t).count() as f64;
        let (np, nt) = (pred.iter().filter(|&&p| p).count() as f64, truth.iter().filter(|&&t| t).count() as f64);
        let union = np + nt - inter;
        let dice = if np + nt == 0.0 { 1.0 } else { 2.0 * inter / (np + nt) };
        let iou = if union == 0.0 { 1.0 } else { inter / union };
        assert!((m.dice - dice).abs() <= 1e-15);
        assert!((m.iou - iou).abs() <= 1e-15);
        assert!((m.iou - m.dice / (2.0 - m.dice)).abs() <= 1e-12);
        let agree = pred.iter().zip(&truth).filter(|(p, t)| p == t).count() as f64;
        assert!((m.accuracy - agree / pred.len() as f64).abs() <= 1e-15);
        let swapped = binary_metrics(&truth, &pred).unwrap();
        assert_eq!((swapped.dice, swapped.iou, swapped.accuracy), (m.dice, m.iou, m.accuracy));
    }
}

#[test]
fn probability_auc_matches_pair_count() {
    let mut rng = SplitMix64::new(61_000);
    for _ in 0..50 {
        let n = 2 + rng.below(60);
        let truth: Vec<bool> = (0..n).map(|_| rng.uniform() < 0.4).collect();
        let prob: Vec<f64> = truth.iter().map(|&t| ((rng.uniform() + if t { 0.3 } else { 0.0 }) * 8.0).floor() / 8.0).collect();
        let (mut num, mut den) = (0.0, 0.0);
        for i in (0..n).filter(|&i| truth[i]) {
            for j in (0..n).filter(|&j| !truth[j]) {
                den += 1.0;
                num += if prob[i] > prob[j] { 1.0 } else if prob[i] == prob[j] { 0.5 } else { 0.0 };
            }
        }
        match roc_auc_class(&prob, &truth) {
            Ok(auc) => assert_eq!(auc, num / den),
            Err(_) => assert_eq!(den, 0.0),
        }
    }
}

fn scan(codes: Vec<u8>, w: usize) -> LabeledScan {
    let h = codes.len() / w;
    LabeledScan::from_codes(w, h, &codes, Orientation::Horizontal, PixelSpacing::new(1.0, 1.0).unwrap()).unwrap()
}

fn random_scans(rng: &mut SplitMix64, k: usize) -> (Vec<LabeledScan>, Vec<LabeledScan>) {
    let (mut pred, mut truth) = (Vec::new(), Vec::new());
    for _ in 0..k {
        let (w, h) = (8 + rng.below(8), 8 + rng.below(8));
        let t: Vec<u8> = (0..w * h).map(|_| rng.below(10) as u8).collect();
        let p: Vec<u8> = t.iter().map(|&c| if rng.uniform() < 0.3 { rng.below(10) as u8 } else { c }).collect();
        truth.push(scan(t, w));
        pred.push(scan(p, w));
    }
    (pred, truth)
}

#[test]
fn micro_and_macro_aggregation() {
    let mut rng = SplitMix64::new(62_000);
    let (pred, truth) = random_scans(&mut rng, 5);
    let classes = ClassLabel::FOREGROUND;
    let micro = report(&pred, &truth, &classes, Aggregation::Micro).unwrap();
    let macro_ = report(&pred, &truth, &classes, Aggregation::Macro).unwrap();
    for (i, &class) in classes.iter().enumerate() {
        let pairs: Vec<Confusion> = pred
            .iter()
            .zip(&truth)
            .map(|(p, t)| Confusion::from_masks(&p.mask(class), &t.mask(class)).unwrap())
            .collect();
        let pooled = pairs.iter().fold(Confusion::default(), |a, &b| a.merge(b));
        let m = pooled.metrics();
        assert_eq!(micro.per_class[i].dice, m.dice);
        assert_eq!(micro.per_class[i].support, pooled.tp + pooled.fn_);
        let mean_dice = pairs.iter().map(|c| c.metrics().dice).sum::<f64>() / pairs.len() as f64;
        assert!((macro_.per_class[i].dice - mean_dice).abs() < 1e-15);
        assert_eq!(micro.per_class[i].dice, micro.per_class[i].f1);
    }
    for r in [&micro, &macro_] {
        let m = mean_row(&r.per_class);
        assert_eq!(r.mean, m);
        let dice = r.per_class.iter().map(|c| c.dice).sum::<f64>() / classes.len() as f64;
        assert!((r.mean.dice - dice).abs() < 1e-15);
    }
}

#[test]
fn rejects_bad_input() {
    let a = scan(vec![0; 16], 4);
    let b = scan(vec![0; 20], 5);
    assert!(matches!(report(&[a.clone()], &[b], &[ClassLabel::Elm], Aggregation::Micro), Err(SegError::ShapeMismatch(_))));
    assert!(matches!(report(&[], &[], &[ClassLabel::Elm], Aggregation::Micro), Err(SegError::EmptyInput)));
    assert!(matches!(report(&[a.clone()], &[a.clone(), a], &[ClassLabel::Elm], Aggregation::Micro), Err(SegError::ShapeMismatch(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn merge_is_associative(v in proptest::collection::vec((0u64..50, 0u64..50, 0u64..50, 0u64..50), 3)) {
        let c: Vec<Confusion> = v.iter().map(|&(tp, fp, fn_, tn)| Confusion { tp, fp, fn_, tn }).collect();
        prop_assert_eq!(c[0].merge(c[1]).merge(c[2]), c[0].merge(c[1].merge(c[2])));
    }

    #[test]
    fn metrics_bounded(pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..300)) {
        let (p, t): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
        let m = binary_metrics(&p, &t).unwrap();
        for x in [m.dice, m.iou, m.accuracy, m.f1] {
            prop_assert!((0.0..=1.0).contains(&x));
        }
        prop_assert!(m.iou <= m.dice);
        prop_assert_eq!(m.dice.to_bits(), m.f1.to_bits());
    }
}
