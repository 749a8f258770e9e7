mod common;

use bbav_core::codec::{decode, encode, gaussian_radius, DecodeParams};
use bbav_core::synth::{generate_scene, SceneSpec};
use proptest::prelude::*;

fn scene(seed: u64) -> SceneSpec {
    SceneSpec {
        image_width: 256,
        image_height: 192,
        seed,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn round_trip_recovers_every_box(seed in any::<u64>()) {
        let spec = scene(seed);
        let gt = generate_scene(&spec).unwrap();
        let (maps, report) = encode(&gt, 192, 256, spec.classes, spec.stride).unwrap();
        prop_assert_eq!(report.encoded, gt.len());
        prop_assert_eq!(maps.object_count(), gt.len());
        let dets = decode(&maps, &DecodeParams { score_thresh: 0.5, ..Default::default() });
        prop_assert_eq!(dets.len(), gt.len());
        for g in &gt {
            let hit = dets.iter().find(|d| (d.center() - g.center()).norm() < 1e-6);
            let d = hit.expect("every box decoded");
            prop_assert_eq!(d.class_id, g.category.index());
            prop_assert!(d.is_rbb);
            prop_assert_eq!(d.score, 1.0);
            prop_assert!(common::quad_error(&d.corners, &g.corners) < 1e-6);
        }
    }

    #[test]
    fn heatmap_stays_in_unit_interval(seed in any::<u64>()) {
        let spec = scene(seed);
        let gt = generate_scene(&spec).unwrap();
        let (maps, _) = encode(&gt, 192, 256, spec.classes, spec.stride).unwrap();
        prop_assert!(maps.heatmap.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(maps.orientation.iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn decoded_centers_inside_image(seed in any::<u64>(), k in 0usize..40) {
        let spec = scene(seed);
        let gt = generate_scene(&spec).unwrap();
        let (mut maps, _) = encode(&gt, 192, 256, spec.classes, spec.stride).unwrap();
        // push every offset far outside its cell
        maps.offset.iter_mut().for_each(|o| *o += 1e3);
        let dets = decode(&maps, &DecodeParams { top_k: k, ..Default::default() });
        prop_assert!(dets.len() <= k);
        for d in &dets {
            // the corner mean carries a few ulps of rounding
            let c = d.center();
            let tol = 1e-9;
            prop_assert!(c.x >= -tol && c.x <= 256.0 + tol && c.y >= -tol && c.y <= 192.0 + tol, "{:?}", c);
        }
        for w in dets.windows(2) {
            prop_assert!(w[0].score >= w[1].score);
        }
    }

    #[test]
    fn radius_grows_with_box(h in 1.0..200.0f64, w in 1.0..200.0f64, f in 1.01..3.0f64) {
        let r = gaussian_radius(h, w, 0.7).unwrap();
        let r2 = gaussian_radius(h * f, w * f, 0.7).unwrap();
        prop_assert!(r > 0.0);
        // all three bounds are homogeneous of degree one
        prop_assert!((r2 - r * f).abs() < 1e-9 * r2.max(1.0));
    }
}
