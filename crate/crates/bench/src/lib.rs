//! Fixtures shared by the benchmarks.

use bbav_core::codec::{encode, TargetMaps};
use bbav_core::geometry::{OrientedBox, Point2};
use bbav_core::synth::{generate_scene, perturb, NoiseSpec, SceneSpec};
use bbav_core::Detection;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 15 × 152 × 152 maps from a 608 × 608 scene, with heatmap noise so the
/// decoder has plenty of local maxima to rank.
pub fn noisy_maps(seed: u64) -> TargetMaps {
    let spec = SceneSpec { seed, ..Default::default() };
    let gt = generate_scene(&spec).expect("default scene spec places objects");
    let (maps, _) = encode(&gt, 608, 608, spec.classes, spec.stride).expect("valid scene encodes");
    perturb(&maps, &NoiseSpec { heatmap_std: 0.05, ..Default::default() }, seed)
}

pub fn random_boxes(n: usize, field: f64, seed: u64) -> Vec<OrientedBox> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            OrientedBox::from_rotated_rect(
                Point2::new(rng.random_range(0.0..field), rng.random_range(0.0..field)),
                rng.random_range(8.0..64.0),
                rng.random_range(8.0..64.0),
                rng.random_range(0.0..180.0),
            )
            .expect("positive sides give a valid box")
        })
        .collect()
}

pub fn random_detections(n: usize, field: f64, classes: usize, seed: u64) -> Vec<Detection> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    random_boxes(n, field, seed)
        .into_iter()
        .map(|b| Detection {
            corners: *b.corners(),
            score: rng.random_range(0.0..1.0),
            class_id: rng.random_range(0..classes),
            is_rbb: true,
        })
        .collect()
}
