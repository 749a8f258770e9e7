//! Reference implementations shared by the integration tests. Everything here
//! is written independently of the library code it checks.

#![allow(dead_code)]

pub mod gradcheck;

use bbav_core::geometry::{canonicalize, rotated_iou, OrientedBox, Point2};
use bbav_core::Detection;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_box<R: Rng>(rng: &mut R, lo: f64, hi: f64, min_side: f64, max_side: f64) -> OrientedBox {
    let c = Point2::new(rng.random_range(lo..hi), rng.random_range(lo..hi));
    let w = rng.random_range(min_side..max_side);
    let h = rng.random_range(min_side..max_side);
    let angle = rng.random_range(0.0..180.0);
    OrientedBox::from_rotated_rect(c, w, h, angle).unwrap()
}

/// Corners as four half-planes `n·p <= d`, built from the corner list with
/// the orientation worked out from the signed area rather than assumed.
fn half_planes(corners: &[Point2; 4]) -> [(f64, f64, f64); 4] {
    let mut signed = 0.0;
    for i in 0..4 {
        let (a, b) = (corners[i], corners[(i + 1) % 4]);
        signed += a.x * b.y - a.y * b.x;
    }
    let s = signed.signum();
    std::array::from_fn(|i| {
        let (a, b) = (corners[i], corners[(i + 1) % 4]);
        // outward normal for orientation s
        let (nx, ny) = ((b.y - a.y) * s, -(b.x - a.x) * s);
        (nx, ny, nx * a.x + ny * a.y)
    })
}

fn inside(planes: &[(f64, f64, f64); 4], x: f64, y: f64) -> bool {
    planes.iter().all(|&(nx, ny, d)| nx * x + ny * y <= d)
}

/// IOU by jittered stratified sampling on an `n × n` grid over the joint
/// bounding rectangle.
pub fn monte_carlo_iou(a: &[Point2; 4], b: &[Point2; 4], n: usize, seed: u64) -> f64 {
    let pa = half_planes(a);
    let pb = half_planes(b);
    let xs = a.iter().chain(b).map(|p| p.x);
    let ys = a.iter().chain(b).map(|p| p.y);
    let (x0, x1) = (xs.clone().fold(f64::INFINITY, f64::min), xs.fold(f64::NEG_INFINITY, f64::max));
    let (y0, y1) = (ys.clone().fold(f64::INFINITY, f64::min), ys.fold(f64::NEG_INFINITY, f64::max));
    let (dx, dy) = ((x1 - x0) / n as f64, (y1 - y0) / n as f64);
    let mut r = rng(seed);
    let (mut both, mut either) = (0u64, 0u64);
    for i in 0..n {
        for j in 0..n {
            let x = x0 + (i as f64 + r.random::<f64>()) * dx;
            let y = y0 + (j as f64 + r.random::<f64>()) * dy;
            let (ia, ib) = (inside(&pa, x, y), inside(&pb, x, y));
            both += (ia && ib) as u64;
            either += (ia || ib) as u64;
        }
    }
    if either == 0 {
        0.0
    } else {
        both as f64 / either as f64
    }
}

/// Textbook greedy NMS: repeatedly take the best remaining detection and drop
/// everything of its class that overlaps it too much.
pub fn brute_force_nms(dets: &[Detection], thresh: f64) -> Vec<Detection> {
    let mut remaining: Vec<usize> = (0..dets.len()).collect();
    let mut kept = Vec::new();
    while !remaining.is_empty() {
        let mut best = 0;
        for k in 1..remaining.len() {
            let (i, j) = (remaining[k], remaining[best]);
            if dets[i].score > dets[j].score || (dets[i].score == dets[j].score && i < j) {
                best = k;
            }
        }
        let top = remaining.remove(best);
        kept.push(dets[top].clone());
        let Ok(tb) = canonicalize(dets[top].corners) else { continue };
        remaining.retain(|&i| {
            if dets[i].class_id != dets[top].class_id {
                return true;
            }
            match canonicalize(dets[i].corners) {
                Ok(b) => rotated_iou(&tb, &b) <= thresh,
                Err(_) => true,
            }
        });
    }
    kept
}

/// Random detections in a small field so that overlaps are common. Scores
/// are quantized to produce ties.
pub fn random_detections<R: Rng>(rng: &mut R, max_len: usize, classes: usize) -> Vec<Detection> {
    let n = rng.random_range(0..=max_len);
    (0..n)
        .map(|_| {
            let b = random_box(rng, 0.0, 120.0, 4.0, 50.0);
            Detection {
                corners: *b.corners(),
                score: (rng.random_range(1..=20) as f64) / 20.0,
                class_id: rng.random_range(0..classes),
                is_rbb: true,
            }
        })
        .collect()
}

/// Largest coordinate difference between two quads, ignoring corner order.
pub fn quad_error(a: &[Point2; 4], b: &[Point2; 4]) -> f64 {
    let ca = canonicalize(*a).unwrap();
    let cb = canonicalize(*b).unwrap();
    ca
        .corners()
        .iter()
        .zip(cb.corners())
        .map(|(p, q)| (p.x - q.x).abs().max((p.y - q.y).abs()))
        .fold(0.0, f64::max)
}
