//! Cropping large images into overlapping square patches at several scales
//! and mapping patch detections back to the full image.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::Detection;
use crate::dota_io::AnnotationRecord;
use crate::geometry::Point2;
use crate::postprocess::rotated_nms;

pub const DEFAULT_PATCH: u32 = 600;
pub const DEFAULT_OVERLAP: u32 = 100;
pub const DEFAULT_SCALES: [f64; 2] = [0.5, 1.0];
pub const MERGE_IOU: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TilingError {
    #[error("overlap {overlap} must be smaller than patch {patch}")]
    InvalidOverlap { patch: u32, overlap: u32 },
    #[error("step must be in 1..=patch, got {step} for patch {patch}")]
    InvalidStep { patch: u32, step: u32 },
    #[error("image dimensions must be positive, got {width}x{height}")]
    EmptyImage { width: u32, height: u32 },
    #[error("scale must be positive and finite, got {0}")]
    InvalidScale(f64),
}

/// One crop window.
///
/// `origin` is in full-resolution pixels. The window covers
/// `[origin, origin + size / scale)` of the original image, which becomes a
/// `size × size` patch after rescaling by `scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileSpec {
    pub origin: Point2,
    pub size: u32,
    pub scale: f64,
}

impl TileSpec {
    pub fn identity(size: u32) -> Self {
        Self {
            origin: Point2::ZERO,
            size,
            scale: 1.0,
        }
    }

    /// Side of the window in full-resolution pixels.
    pub fn extent(&self) -> f64 {
        self.size as f64 / self.scale
    }

    pub fn contains_global(&self, p: Point2) -> bool {
        let e = self.extent();
        p.x >= self.origin.x && p.y >= self.origin.y && p.x < self.origin.x + e && p.y < self.origin.y + e
    }

    pub fn to_local(&self, p: Point2) -> Point2 {
        (p - self.origin) * self.scale
    }

    pub fn to_global_point(&self, p: Point2) -> Point2 {
        p / self.scale + self.origin
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TilingParams {
    pub patch: u32,
    /// Distance between neighbouring tile origins, in scaled pixels.
    pub step: u32,
    pub scales: Vec<f64>,
}

impl TilingParams {
    /// Neighbouring tiles share `overlap` pixels (step = patch - overlap).
    pub fn with_overlap(patch: u32, overlap: u32, scales: Vec<f64>) -> Result<Self, TilingError> {
        if overlap >= patch {
            return Err(TilingError::InvalidOverlap { patch, overlap });
        }
        Ok(Self {
            patch,
            step: patch - overlap,
            scales,
        })
    }

    pub fn with_step(patch: u32, step: u32, scales: Vec<f64>) -> Result<Self, TilingError> {
        if step == 0 || step > patch {
            return Err(TilingError::InvalidStep { patch, step });
        }
        Ok(Self { patch, step, scales })
    }
}

impl Default for TilingParams {
    fn default() -> Self {
        Self {
            patch: DEFAULT_PATCH,
            step: DEFAULT_PATCH - DEFAULT_OVERLAP,
            scales: DEFAULT_SCALES.to_vec(),
        }
    }
}

/// Tile origins along one axis of length `len` (scaled pixels). The last
/// origin is pulled inward so the final tile ends exactly at the border.
pub fn axis_origins(len: f64, patch: u32, step: u32) -> Vec<f64> {
    let (patch, step) = (patch as f64, step as f64);
    if len <= patch {
        return vec![0.0];
    }
    let mut out = Vec::new();
    let mut o = 0.0;
    loop {
        if o + patch >= len {
            out.push(len - patch);
            break;
        }
        out.push(o);
        o += step;
    }
    out
}

/// All tiles for an image, scale by scale, rows then columns.
pub fn make_tiles(image_w: u32, image_h: u32, params: &TilingParams) -> Result<Vec<TileSpec>, TilingError> {
    if image_w == 0 || image_h == 0 {
        return Err(TilingError::EmptyImage {
            width: image_w,
            height: image_h,
        });
    }
    if params.step == 0 || params.step > params.patch {
        return Err(TilingError::InvalidStep {
            patch: params.patch,
            step: params.step,
        });
    }
    let mut tiles = Vec::new();
    for &scale in &params.scales {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(TilingError::InvalidScale(scale));
        }
        let xs = axis_origins(image_w as f64 * scale, params.patch, params.step);
        let ys = axis_origins(image_h as f64 * scale, params.patch, params.step);
        for &y in &ys {
            for &x in &xs {
                tiles.push(TileSpec {
                    origin: Point2::new(x / scale, y / scale),
                    size: params.patch,
                    scale,
                });
            }
        }
    }
    Ok(tiles)
}

/// An annotation expressed in tile pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct TileAnnotation {
    pub record: AnnotationRecord,
    /// Some corner lies outside the patch.
    pub truncated: bool,
}

/// Keep annotations whose center falls inside the tile, in tile pixels.
/// Boxes that cross the patch border are kept whole and flagged.
pub fn crop_annotations(annotations: &[AnnotationRecord], tile: &TileSpec) -> Vec<TileAnnotation> {
    let size = tile.size as f64;
    annotations
        .iter()
        .filter(|a| tile.contains_global(a.center()))
        .map(|a| {
            let corners = a.corners.map(|p| tile.to_local(p));
            let truncated = corners
                .iter()
                .any(|p| p.x < 0.0 || p.y < 0.0 || p.x > size || p.y > size);
            TileAnnotation {
                record: AnnotationRecord {
                    corners,
                    category: a.category,
                    difficult: a.difficult,
                },
                truncated,
            }
        })
        .collect()
}

pub fn to_global(det: &Detection, tile: &TileSpec) -> Detection {
    Detection {
        corners: det.corners.map(|p| tile.to_global_point(p)),
        ..det.clone()
    }
}

/// Class-wise rotated NMS over detections pooled from every tile.
pub fn merge(dets: &[Detection], iou_thresh: f64) -> Vec<Detection> {
    rotated_nms(dets, iou_thresh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dota_io::Category;

    fn origins_x(tiles: &[TileSpec], scale: f64) -> Vec<f64> {
        let mut xs: Vec<f64> = tiles
            .iter()
            .filter(|t| t.scale == scale)
            .map(|t| t.origin.x)
            .collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        xs
    }

    #[test]
    fn single_tile_images() {
        let tiles = make_tiles(600, 600, &TilingParams::default()).unwrap();
        assert_eq!(tiles.len(), 2);
        assert!(tiles.iter().all(|t| t.origin == Point2::ZERO));
    }

    #[test]
    fn step_arithmetic() {
        let p = TilingParams::with_overlap(600, 100, vec![1.0]).unwrap();
        let tiles = make_tiles(1100, 600, &p).unwrap();
        assert_eq!(origins_x(&tiles, 1.0), vec![0.0, 500.0]);
        let tiles = make_tiles(4000, 4000, &p).unwrap();
        assert_eq!(
            origins_x(&tiles, 1.0),
            vec![0.0, 500.0, 1000.0, 1500.0, 2000.0, 2500.0, 3000.0, 3400.0]
        );
        assert_eq!(tiles.len(), 64);
    }

    #[test]
    fn half_scale_origins_are_global() {
        let p = TilingParams::with_overlap(600, 100, vec![0.5]).unwrap();
        let tiles = make_tiles(2200, 1000, &p).unwrap();
        // scaled width 1100 -> scaled origins 0, 500 -> global 0, 1000
        assert_eq!(origins_x(&tiles, 0.5), vec![0.0, 1000.0]);
        assert_eq!(tiles[0].extent(), 1200.0);
    }

    #[test]
    fn invalid_parameters() {
        assert_eq!(
            TilingParams::with_overlap(600, 600, vec![1.0]),
            Err(TilingError::InvalidOverlap { patch: 600, overlap: 600 })
        );
        assert!(TilingParams::with_step(600, 100, vec![1.0]).is_ok());
        assert!(make_tiles(0, 10, &TilingParams::default()).is_err());
    }

    fn ann(x: f64, y: f64, side: f64) -> AnnotationRecord {
        AnnotationRecord {
            corners: [
                Point2::new(x, y),
                Point2::new(x + side, y),
                Point2::new(x + side, y + side),
                Point2::new(x, y + side),
            ],
            category: Category::Ship,
            difficult: false,
        }
    }

    #[test]
    fn crop_rules() {
        let tile = TileSpec {
            origin: Point2::new(500.0, 0.0),
            size: 600,
            scale: 1.0,
        };
        let inside = crop_annotations(&[ann(600.0, 10.0, 20.0)], &tile);
        assert_eq!(inside.len(), 1);
        assert!(!inside[0].truncated);
        assert_eq!(inside[0].record.corners[0], Point2::new(100.0, 10.0));

        assert!(crop_annotations(&[ann(100.0, 10.0, 20.0)], &tile).is_empty());

        let edge = crop_annotations(&[ann(1090.0, 10.0, 16.0)], &tile);
        assert_eq!(edge.len(), 1);
        assert!(edge[0].truncated);
    }

    #[test]
    fn global_mapping() {
        let d = Detection {
            corners: [Point2::new(10.0, 10.0); 4],
            score: 0.4,
            class_id: 3,
            is_rbb: true,
        };
        assert_eq!(to_global(&d, &TileSpec::identity(600)), d);
        let t = TileSpec { origin: Point2::new(500.0, 0.0), size: 600, scale: 1.0 };
        assert_eq!(to_global(&d, &t).corners[0], Point2::new(510.0, 10.0));
        let t = TileSpec { origin: Point2::ZERO, size: 600, scale: 0.5 };
        let g = to_global(&d, &t);
        assert_eq!(g.corners[0], Point2::new(20.0, 20.0));
        assert_eq!((g.score, g.class_id, g.is_rbb), (0.4, 3, true));
    }
}
