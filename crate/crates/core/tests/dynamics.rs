use std::collections::BTreeMap;
use std::f64::consts::PI;

use octdyn_core::dynamics::{
    circularity, derive_dynamics, recovery_rate, resolution_day, shape_weight, DynError, DynamicsParams, Lesion,
    LesionTrajectory, Resolution, DYNAMIC_COLUMNS,
};
use octdyn_core::morphometry::{Component, FeatureVector};
use octdyn_core::{PixelSpacing, Stage, StageDays};
use proptest::prelude::*;

fn unit() -> PixelSpacing {
    PixelSpacing::new(1.0, 1.0).unwrap()
}

fn component(pred: impl Fn(i64, i64) -> bool, n: i64) -> Component {
    let mut pixels = Vec::new();
    for r in 0..n {
        for c in 0..n {
            if pred(r, c) {
                pixels.push((r as usize, c as usize));
            }
        }
    }
    Component { pixels }
}

#[test]
fn circularity_reference_shapes() {
    let square = component(|r, c| (5..25).contains(&r) && (5..25).contains(&c), 30);
    assert!((circularity(&square, unit()).unwrap() - PI / 4.0).abs() < 1e-15);
    // Digital disc of radius 20: 1257 pixels, 164 boundary edges.
    let disc = component(|r, c| (r - 21).pow(2) + (c - 21).pow(2) <= 400, 43);
    assert_eq!(disc.len(), 1257);
    assert!((circularity(&disc, unit()).unwrap() - 0.587_296_544_551_215).abs() < 1e-12);
    // 40 x 10 pixel bar at 2 x 0.5 um: A = 400, P = 170.
    let bar = component(|r, c| r < 10 && c < 40, 40);
    let anisotropic = PixelSpacing::new(2.0, 0.5).unwrap();
    assert!((circularity(&bar, anisotropic).unwrap() - 0.173_929_005_043_033_55).abs() < 1e-12);
    assert_eq!(circularity(&Component::default(), unit()), Err(DynError::EmptyComponent));
}

#[test]
fn interior_holes_do_not_add_perimeter() {
    let ring = component(|r, c| (2..12).contains(&r) && (2..12).contains(&c) && !((5..9).contains(&r) && (5..9).contains(&c)), 14);
    // Outer boundary of the 10 x 10 square only: P = 40, A = 84.
    let want = 4.0 * PI * 84.0 / 1600.0;
    assert!((circularity(&ring, unit()).unwrap() - want).abs() < 1e-15);
    let w = shape_weight(&ring, unit(), 0.5).unwrap();
    assert!((w - (1.0 + 0.5 * (1.0 - want))).abs() < 1e-15);
}

fn stage_features(area: [Option<f64>; 5], ez: [Option<f64>; 5]) -> BTreeMap<Stage, FeatureVector> {
    Stage::ALL
        .iter()
        .enumerate()
        .filter(|&(i, _)| area[i].is_some() || ez[i].is_some())
        .map(|(i, &st)| {
            let fv = FeatureVector {
                eye_id: "E1".into(),
                stage: Some(st),
                hole_area_um2: area[i],
                pseudocyst_area_um2: area[i].map(|_| 0.0),
                elm_defect_um: Some(0.0),
                ez_defect_um: ez[i],
                hole_circularity: (st == Stage::Pre).then_some(0.6),
                ..FeatureVector::default()
            };
            (st, fv)
        })
        .collect()
}

#[test]
fn end_to_end_eye() {
    let features = stage_features(
        [Some(450_000.0), Some(120_000.0), Some(0.0), Some(0.0), Some(0.0)],
        [Some(1400.0), Some(900.0), Some(500.0), Some(0.0), Some(0.0)],
    );
    let params = DynamicsParams { lambda: Some(0.5), ..DynamicsParams::default() };
    let d = derive_dynamics("E1", &features, &params).unwrap();
    let hole = d.rate(Lesion::MacularHoleArea);
    assert_eq!((hole.raw_rate, hole.resolve_day, hole.censored), (5000.0, Some(90), false));
    assert!((hole.shape_weight - 1.2).abs() < 1e-15);
    assert!((hole.weighted_rate - 6000.0).abs() < 1e-9);
    let ez = d.rate(Lesion::EzDefect);
    assert!((ez.raw_rate - 1400.0 / 180.0).abs() < 1e-12);
    assert_eq!(ez.shape_weight, 1.0);
    let cyst = d.rate(Lesion::PseudocystArea);
    assert!(cyst.degenerate && !cyst.censored && cyst.raw_rate == 0.0);
    let cols = d.columns();
    assert_eq!(cols.iter().map(|c| c.0).collect::<Vec<_>>(), DYNAMIC_COLUMNS);

    // The horizon cutoff at 3 months leaves the EZ defect unresolved.
    let cut = DynamicsParams { cutoff: Some(Stage::M3), ..params };
    let d = derive_dynamics("E1", &features, &cut).unwrap();
    assert!(d.rate(Lesion::EzDefect).censored);
    assert_eq!(d.rate(Lesion::MacularHoleArea).resolve_day, Some(90));

    let mut no_pre = features.clone();
    no_pre.remove(&Stage::Pre);
    assert_eq!(
        derive_dynamics("E1", &no_pre, &params),
        Err(DynError::MissingBaselineFeatures("E1".into()))
    );
}

#[test]
fn custom_stage_days() {
    let days = StageDays::new([0, 7, 60, 120, 400]).unwrap();
    let t = LesionTrajectory::new(Lesion::ElmDefect, [(Stage::Pre, Some(300.0)), (Stage::W2, Some(0.0))]);
    assert_eq!(resolution_day(&t, 0.0, &days, None), Ok(Resolution::Resolved { day: 7, degenerate: false }));
    assert!(StageDays::new([0, 90, 14, 180, 365]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rate_is_size_over_day(initial in 1e-3f64..1e7, day in 1u32..2000) {
        let r = recovery_rate(initial, day).unwrap();
        prop_assert_eq!(r, initial / f64::from(day));
        prop_assert!(r > 0.0);
    }

    #[test]
    fn larger_epsilon_never_resolves_later(sizes in proptest::collection::vec(0.0f64..100.0, 4), pre in 1.0f64..200.0, e1 in 0.0f64..50.0, de in 0.0f64..50.0) {
        let post = [Stage::W2, Stage::M3, Stage::M6, Stage::M12];
        let t = LesionTrajectory::new(
            Lesion::MacularHoleArea,
            std::iter::once((Stage::Pre, Some(pre + e1 + de + 1.0))).chain(post.iter().zip(&sizes).map(|(&s, &v)| (s, Some(v)))),
        );
        let days = StageDays::default();
        let day = |eps: f64| match resolution_day(&t, eps, &days, None).unwrap() {
            Resolution::Resolved { day, .. } => day,
            Resolution::Censored { .. } => u32::MAX,
        };
        prop_assert!(day(e1 + de) <= day(e1));
    }

    #[test]
    fn circularity_in_unit_interval(cells in proptest::collection::btree_set((0usize..12, 0usize..12), 1..80), sx in 0.5f64..3.0, sy in 0.5f64..3.0) {
        let c = Component { pixels: cells.into_iter().collect() };
        let v = circularity(&c, PixelSpacing::new(sx, sy).unwrap()).unwrap();
        prop_assert!(v > 0.0 && v <= 1.0);
    }
}
