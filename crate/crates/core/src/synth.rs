//! Synthetic detector harness.
//!
//! Stands in for a trained network: random oriented-box scenes are encoded
//! into target maps, the maps are corrupted with controlled noise to play the
//! role of predictions, and the result is pushed through decoding, NMS and
//! evaluation.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`), seeded with
//! `seed_from_u64(seed)`. Scene sampling uses stream 0 and map perturbation
//! uses stream 1 of the same seed, so runs reproduce bit-for-bit across
//! platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{decode, encode, CodecError, DecodeParams, Detection, TargetMaps};
use crate::dota_io::{AnnotationRecord, Category};
use crate::geometry::{rotated_iou, OrientedBox, Point2};
use crate::postprocess::{evaluate_map, rotated_nms, MatchResult};

/// Placement attempts per object before giving up.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("could not place object {index} after {MAX_PLACEMENT_ATTEMPTS} attempts")]
    PlacementFailure { index: usize },
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("invalid config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub image_width: u32,
    pub image_height: u32,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Side lengths are drawn independently from `[min_size, max_size]` px.
    pub min_size: f64,
    pub max_size: f64,
    pub min_rotation_deg: f64,
    pub max_rotation_deg: f64,
    /// Minimum Chebyshev distance between center cells, in grid cells.
    pub min_separation: u32,
    /// Largest allowed rotated IOU between any two objects.
    pub max_pairwise_iou: f64,
    pub classes: usize,
    pub stride: usize,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            image_width: 608,
            image_height: 608,
            min_objects: 1,
            max_objects: 20,
            min_size: 16.0,
            max_size: 64.0,
            min_rotation_deg: 5.0,
            max_rotation_deg: 85.0,
            min_separation: 1,
            max_pairwise_iou: 0.1,
            classes: Category::COUNT,
            stride: crate::codec::DEFAULT_STRIDE,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        if self.image_width == 0 || self.image_height == 0 {
            return bad("image size must be positive");
        }
        if self.stride == 0
            || self.image_width as usize % self.stride != 0
            || self.image_height as usize % self.stride != 0
        {
            return bad("image size must be a positive multiple of the stride");
        }
        if self.min_objects > self.max_objects {
            return bad("object count range is empty");
        }
        if !(self.min_size > 0.0 && self.min_size <= self.max_size) {
            return bad("size range is empty or non-positive");
        }
        if !(self.min_rotation_deg <= self.max_rotation_deg) {
            return bad("rotation range is empty");
        }
        if self.min_separation == 0 {
            return bad("min_separation must be at least one grid cell");
        }
        if self.classes == 0 || self.classes > Category::COUNT {
            return bad("classes must be in 1..=15");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Fraction by which the whole heatmap is scaled down.
    pub heatmap_attenuation: f64,
    pub heatmap_std: f64,
    pub offset_std: f64,
    pub box_std: f64,
    pub orientation_std: f64,
    /// Per-cell probability of injecting a spurious peak.
    pub spurious_rate: f64,
}

impl NoiseSpec {
    pub fn is_zero(&self) -> bool {
        *self == NoiseSpec::default()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let vals = [
            self.heatmap_attenuation,
            self.heatmap_std,
            self.offset_std,
            self.box_std,
            self.orientation_std,
            self.spurious_rate,
        ];
        if vals.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(SynthError::InvalidSpec("noise parameters must be finite and non-negative".into()));
        }
        if self.heatmap_attenuation > 1.0 || self.spurious_rate > 1.0 {
            return Err(SynthError::InvalidSpec("attenuation and spurious_rate must be at most 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineParams {
    pub top_k: usize,
    pub score_thresh: f64,
    pub alpha_thresh: f64,
    pub nms_iou: f64,
    pub eval_iou: f64,
}

impl Default for PipelineParams {
    fn default() -> Self {
        let d = DecodeParams::default();
        Self {
            top_k: d.top_k,
            score_thresh: d.score_thresh,
            alpha_thresh: d.alpha_thresh,
            nms_iou: crate::tiling::MERGE_IOU,
            eval_iou: 0.5,
        }
    }
}

impl PipelineParams {
    pub fn decode_params(&self) -> DecodeParams {
        DecodeParams {
            top_k: self.top_k,
            score_thresh: self.score_thresh,
            alpha_thresh: self.alpha_thresh,
        }
    }
}

/// Everything `simulate` needs, as read from a TOML key-value file with
/// optional `[scene]`, `[noise]` and `[pipeline]` tables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub scene: SceneSpec,
    pub noise: NoiseSpec,
    pub pipeline: PipelineParams,
}

pub fn parse_config(text: &str) -> Result<SimulationConfig, SynthError> {
    let cfg: SimulationConfig = toml::from_str(text).map_err(|e| SynthError::Config(e.to_string()))?;
    cfg.scene.validate()?;
    cfg.noise.validate()?;
    Ok(cfg)
}

fn scene_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn noise_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Random rectangles, fully inside the image, with distinct and separated
/// center cells and bounded mutual overlap.
pub fn generate_scene(spec: &SceneSpec) -> Result<Vec<AnnotationRecord>, SynthError> {
    spec.validate()?;
    let mut rng = scene_rng(spec.seed);
    let count = rng.random_range(spec.min_objects..=spec.max_objects);
    let (img_w, img_h) = (spec.image_width as f64, spec.image_height as f64);
    let s = spec.stride as f64;
    let sep = spec.min_separation as i64;

    let mut placed: Vec<(OrientedBox, (i64, i64))> = Vec::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    for index in 0..count {
        let mut success = false;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let w = uniform(&mut rng, spec.min_size, spec.max_size);
            let h = uniform(&mut rng, spec.min_size, spec.max_size);
            let angle = uniform(&mut rng, spec.min_rotation_deg, spec.max_rotation_deg);
            let class_id = rng.random_range(0..spec.classes);
            let (sin, cos) = angle.to_radians().sin_cos();
            let half_w = 0.5 * (w * cos.abs() + h * sin.abs());
            let half_h = 0.5 * (w * sin.abs() + h * cos.abs());
            // keep corners strictly inside [0, W) x [0, H)
            let margin = 1e-6;
            if 2.0 * (half_w + margin) >= img_w || 2.0 * (half_h + margin) >= img_h {
                continue;
            }
            let cx = uniform(&mut rng, half_w + margin, img_w - half_w - margin);
            let cy = uniform(&mut rng, half_h + margin, img_h - half_h - margin);
            let Ok(obb) = OrientedBox::from_rotated_rect(Point2::new(cx, cy), w, h, angle) else {
                continue;
            };
            let c = obb.center();
            let cell = ((c.x / s).floor() as i64, (c.y / s).floor() as i64);
            let clash = placed.iter().any(|(other, oc)| {
                (cell.0 - oc.0).abs().max((cell.1 - oc.1).abs()) < sep
                    || rotated_iou(&obb, other) > spec.max_pairwise_iou
            });
            if clash {
                continue;
            }
            out.push(AnnotationRecord {
                corners: *obb.corners(),
                category: Category::from_index(class_id).expect("class count validated"),
                difficult: false,
            });
            placed.push((obb, cell));
            success = true;
            break;
        }
        if !success {
            return Err(SynthError::PlacementFailure { index });
        }
    }
    Ok(out)
}

/// Corrupt maps to imitate a network's output.
///
/// In order: the heatmap is scaled by `1 - heatmap_attenuation`, Gaussian
/// noise is added to each plane, spurious peaks (height uniform in
/// `[0.5, 1)`, random class) are injected at each cell with probability
/// `spurious_rate`, and the heatmap and orientation planes are clamped back to
/// `[0, 1]`. Zero noise returns an exact copy.
pub fn perturb(maps: &TargetMaps, noise: &NoiseSpec, seed: u64) -> TargetMaps {
    perturb_counted(maps, noise, seed).0
}

/// [`perturb`], also returning the number of spurious peaks injected.
pub fn perturb_counted(maps: &TargetMaps, noise: &NoiseSpec, seed: u64) -> (TargetMaps, usize) {
    let mut out = maps.clone();
    if noise.is_zero() {
        return (out, 0);
    }
    let mut rng = noise_rng(seed);

    if noise.heatmap_attenuation != 0.0 {
        let keep = 1.0 - noise.heatmap_attenuation;
        out.heatmap.iter_mut().for_each(|v| *v *= keep);
    }
    let add_noise = |plane: &mut [f64], std: f64, rng: &mut ChaCha8Rng| {
        if std > 0.0 {
            let dist = Normal::new(0.0, std).expect("std validated non-negative");
            plane.iter_mut().for_each(|v| *v += dist.sample(rng));
        }
    };
    add_noise(&mut out.heatmap, noise.heatmap_std, &mut rng);
    add_noise(&mut out.offset, noise.offset_std, &mut rng);
    add_noise(&mut out.box_params, noise.box_std, &mut rng);
    add_noise(&mut out.orientation, noise.orientation_std, &mut rng);

    let mut injected = 0;
    if noise.spurious_rate > 0.0 {
        let cells = out.cells();
        for cell in 0..cells {
            if rng.random_bool(noise.spurious_rate) {
                let class_id = rng.random_range(0..out.classes());
                let height = rng.random_range(0.5..1.0);
                let slot = &mut out.heatmap[class_id * cells + cell];
                *slot = slot.max(height);
                injected += 1;
            }
        }
    }

    out.heatmap.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    out.orientation.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    (out, injected)
}

/// Detections and ground truth for one synthetic image.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedOutcome {
    pub seed: u64,
    pub ground_truth: Vec<AnnotationRecord>,
    pub detections: Vec<Detection>,
}

pub fn run_seed(
    scene: &SceneSpec,
    noise: &NoiseSpec,
    params: &PipelineParams,
    seed: u64,
) -> Result<SeedOutcome, SynthError> {
    let spec = SceneSpec {
        seed,
        ..scene.clone()
    };
    let ground_truth = generate_scene(&spec)?;
    let (maps, _) = encode(
        &ground_truth,
        spec.image_height as usize,
        spec.image_width as usize,
        spec.classes,
        spec.stride,
    )?;
    let predicted = perturb(&maps, noise, seed);
    let decoded = decode(&predicted, &params.decode_params());
    let detections = rotated_nms(&decoded, params.nms_iou);
    Ok(SeedOutcome {
        seed,
        ground_truth,
        detections,
    })
}

/// generate → encode → perturb → decode → NMS for every seed (in parallel),
/// then one evaluation over all of them in seed order.
pub fn run_pipeline(
    scene: &SceneSpec,
    noise: &NoiseSpec,
    params: &PipelineParams,
    seeds: &[u64],
) -> Result<MatchResult, SynthError> {
    scene.validate()?;
    noise.validate()?;
    let outcomes: Vec<SeedOutcome> = seeds
        .par_iter()
        .map(|&seed| run_seed(scene, noise, params, seed))
        .collect::<Result<_, _>>()?;
    let (dets, gts): (Vec<_>, Vec<_>) = outcomes
        .into_iter()
        .map(|o| (o.detections, o.ground_truth))
        .unzip();
    Ok(evaluate_map(&dets, &gts, params.eval_iou))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_fixed_rotation_box() {
        let spec = SceneSpec {
            min_objects: 1,
            max_objects: 1,
            min_rotation_deg: 45.0,
            max_rotation_deg: 45.0,
            seed: 7,
            ..Default::default()
        };
        let a = generate_scene(&spec).unwrap();
        let b = generate_scene(&spec).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a, b);
    }

    #[test]
    fn impossible_separation_fails() {
        let spec = SceneSpec {
            min_objects: 2,
            max_objects: 2,
            min_separation: 608,
            ..Default::default()
        };
        assert_eq!(generate_scene(&spec), Err(SynthError::PlacementFailure { index: 1 }));
    }

    #[test]
    fn scenes_respect_constraints() {
        for seed in 0..20 {
            let spec = SceneSpec { seed, min_separation: 3, ..Default::default() };
            let scene = generate_scene(&spec).unwrap();
            let cells: Vec<(i64, i64)> = scene
                .iter()
                .map(|a| {
                    let c = a.center();
                    ((c.x / 4.0).floor() as i64, (c.y / 4.0).floor() as i64)
                })
                .collect();
            for (i, a) in scene.iter().enumerate() {
                assert!(a.corners.iter().all(|p| p.x >= 0.0 && p.x < 608.0 && p.y >= 0.0 && p.y < 608.0));
                for j in 0..i {
                    let d = (cells[i].0 - cells[j].0).abs().max((cells[i].1 - cells[j].1).abs());
                    assert!(d >= 3);
                }
            }
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let spec = SceneSpec { seed: 3, ..Default::default() };
        let (maps, _) = encode(&generate_scene(&spec).unwrap(), 608, 608, 15, 4).unwrap();
        assert_eq!(perturb(&maps, &NoiseSpec::default(), 99), maps);
    }

    #[test]
    fn attenuation_scales_peaks() {
        let spec = SceneSpec { seed: 4, ..Default::default() };
        let (maps, _) = encode(&generate_scene(&spec).unwrap(), 608, 608, 15, 4).unwrap();
        let noisy = perturb(&maps, &NoiseSpec { heatmap_attenuation: 0.3, ..Default::default() }, 1);
        for (a, b) in noisy.heatmap.iter().zip(&maps.heatmap) {
            assert!((a - 0.7 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn config_parses_sections() {
        let cfg = parse_config(
            "[scene]\nimage_width = 256\nimage_height = 256\nmax_objects = 5\n[noise]\nheatmap_std = 0.1\n",
        )
        .unwrap();
        assert_eq!(cfg.scene.image_width, 256);
        assert_eq!(cfg.noise.heatmap_std, 0.1);
        assert_eq!(cfg.pipeline, PipelineParams::default());
        assert!(parse_config("[scene]\nbogus = 1\n").is_err());
        assert!(parse_config("[scene]\nimage_width = 250\n").is_err());
    }
}
