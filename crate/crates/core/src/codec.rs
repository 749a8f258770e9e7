//! Dense target maps for center-keypoint oriented detection.
//!
//! An image of size `H × W` at output stride `s` is described on a grid of
//! `H/s × W/s` cells by four planes:
//!
//! * `heatmap`: `K` class channels holding Gaussian bumps whose peaks (value
//!   exactly 1) mark object centers,
//! * `offset`: 2 channels of sub-cell center corrections,
//! * `box_params`: 10 channels `t.x t.y r.x r.y b.x b.y l.x l.y w_e h_e`, in
//!   grid units (input pixels divided by `s`),
//! * `orientation`: 1 channel, 1 for rotated boxes and 0 for near-horizontal
//!   ones.
//!
//! Planes are stored row-major, channel-major: index
//! `(channel * rows + row) * cols + col`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dota_io::AnnotationRecord;
use crate::geometry::{
    bba_vectors, canonicalize, corners_from_vectors, enclosing_hbb, rotated_iou, BbaVectors,
    Point2,
};

pub const DEFAULT_STRIDE: usize = 4;
pub const BOX_CHANNELS: usize = 10;
pub const OFFSET_CHANNELS: usize = 2;
/// Boxes whose IOU with their enclosing horizontal box is below this are
/// labelled rotated.
pub const RBB_IOU_THRESHOLD: f64 = 0.95;
/// Overlap used to size the heatmap Gaussian.
pub const GAUSSIAN_MIN_OVERLAP: f64 = 0.7;
pub const MIN_SIGMA: f64 = 1.0 / 6.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("min_overlap must lie in (0, 1), got {0}")]
    InvalidOverlap(f64),
    #[error("cell ({col}, {row}) is outside the {cols}x{rows} grid")]
    OutOfBounds {
        col: i64,
        row: i64,
        cols: usize,
        rows: usize,
    },
    #[error("image size {height}x{width} is not divisible by stride {stride}")]
    NotDivisible {
        height: usize,
        width: usize,
        stride: usize,
    },
    #[error("stride and grid dimensions must be positive")]
    EmptyGrid,
    #[error("class id {class_id} out of range for {classes} classes")]
    ClassOutOfRange { class_id: usize, classes: usize },
    #[error("map shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
}

/// The four dense planes for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMaps {
    classes: usize,
    rows: usize,
    cols: usize,
    stride: usize,
    pub heatmap: Vec<f64>,
    pub offset: Vec<f64>,
    pub box_params: Vec<f64>,
    pub orientation: Vec<f64>,
}

impl TargetMaps {
    /// All-zero maps on a `rows × cols` grid.
    pub fn zeros(classes: usize, rows: usize, cols: usize, stride: usize) -> Result<Self, CodecError> {
        if classes == 0 || rows == 0 || cols == 0 || stride == 0 {
            return Err(CodecError::EmptyGrid);
        }
        let cells = rows * cols;
        Ok(Self {
            classes,
            rows,
            cols,
            stride,
            heatmap: vec![0.0; classes * cells],
            offset: vec![0.0; OFFSET_CHANNELS * cells],
            box_params: vec![0.0; BOX_CHANNELS * cells],
            orientation: vec![0.0; cells],
        })
    }

    /// All-zero maps for an `image_height × image_width` input.
    pub fn for_image(
        classes: usize,
        image_height: usize,
        image_width: usize,
        stride: usize,
    ) -> Result<Self, CodecError> {
        if stride == 0 {
            return Err(CodecError::EmptyGrid);
        }
        if image_height % stride != 0 || image_width % stride != 0 {
            return Err(CodecError::NotDivisible {
                height: image_height,
                width: image_width,
                stride,
            });
        }
        Self::zeros(classes, image_height / stride, image_width / stride, stride)
    }

    /// Build from raw planes, checking their lengths.
    pub fn from_planes(
        classes: usize,
        rows: usize,
        cols: usize,
        stride: usize,
        heatmap: Vec<f64>,
        offset: Vec<f64>,
        box_params: Vec<f64>,
        orientation: Vec<f64>,
    ) -> Result<Self, CodecError> {
        let mut maps = Self::zeros(classes, rows, cols, stride)?;
        let check = |name: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(CodecError::ShapeMismatch(format!(
                    "{name} plane has {got} values, expected {want}"
                )))
            }
        };
        check("heatmap", heatmap.len(), maps.heatmap.len())?;
        check("offset", offset.len(), maps.offset.len())?;
        check("box", box_params.len(), maps.box_params.len())?;
        check("orientation", orientation.len(), maps.orientation.len())?;
        maps.heatmap = heatmap;
        maps.offset = offset;
        maps.box_params = box_params;
        maps.orientation = orientation;
        Ok(maps)
    }

    #[inline]
    pub fn classes(&self) -> usize {
        self.classes
    }
    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }
    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }
    #[inline]
    pub fn stride(&self) -> usize {
        self.stride
    }
    #[inline]
    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }
    pub fn image_height(&self) -> usize {
        self.rows * self.stride
    }
    pub fn image_width(&self) -> usize {
        self.cols * self.stride
    }

    /// Flat index of `(row, col)` within one plane.
    #[inline]
    pub fn cell_index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    #[inline]
    pub fn heat(&self, class_id: usize, row: usize, col: usize) -> f64 {
        self.heatmap[class_id * self.cells() + self.cell_index(row, col)]
    }

    pub fn class_plane(&self, class_id: usize) -> &[f64] {
        let n = self.cells();
        &self.heatmap[class_id * n..(class_id + 1) * n]
    }

    pub fn class_plane_mut(&mut self, class_id: usize) -> &mut [f64] {
        let n = self.cells();
        &mut self.heatmap[class_id * n..(class_id + 1) * n]
    }

    pub fn offset_at(&self, cell: usize) -> Point2 {
        let n = self.cells();
        Point2::new(self.offset[cell], self.offset[n + cell])
    }

    pub fn set_offset(&mut self, cell: usize, o: Point2) {
        let n = self.cells();
        self.offset[cell] = o.x;
        self.offset[n + cell] = o.y;
    }

    /// The 10 box channels at a cell.
    pub fn box_at(&self, cell: usize) -> [f64; BOX_CHANNELS] {
        let n = self.cells();
        std::array::from_fn(|c| self.box_params[c * n + cell])
    }

    pub fn set_box(&mut self, cell: usize, values: [f64; BOX_CHANNELS]) {
        let n = self.cells();
        for (c, v) in values.into_iter().enumerate() {
            self.box_params[c * n + cell] = v;
        }
    }

    /// Same grid, class count and stride.
    pub fn same_shape(&self, other: &TargetMaps) -> bool {
        self.classes == other.classes
            && self.rows == other.rows
            && self.cols == other.cols
            && self.stride == other.stride
    }

    /// Cells where some class channel is exactly 1, i.e. the annotated
    /// centers of ground-truth maps.
    pub fn center_cells(&self) -> Vec<usize> {
        let n = self.cells();
        (0..n)
            .filter(|&cell| (0..self.classes).any(|k| self.heatmap[k * n + cell] == 1.0))
            .collect()
    }

    /// Number of `(class, cell)` entries equal to 1.
    pub fn object_count(&self) -> usize {
        self.heatmap.iter().filter(|&&v| v == 1.0).count()
    }
}

/// A Gaussian bump on one heatmap channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSpec {
    pub sigma: f64,
    /// `(col, row)` grid cell.
    pub center: (i64, i64),
}

/// A decoded box in input-image pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// `[tl, tr, br, bl]`.
    pub corners: [Point2; 4],
    pub score: f64,
    pub class_id: usize,
    pub is_rbb: bool,
}

impl Detection {
    pub fn center(&self) -> Point2 {
        self.corners.iter().fold(Point2::ZERO, |acc, &p| acc + p) / 4.0
    }
}

/// Largest corner displacement (in the units of `box_h`, `box_w`) that keeps
/// the IOU of the displaced axis-aligned box at or above `min_overlap`.
///
/// The bound is the smallest positive root of three quadratics, one per
/// worst-case displacement pattern: both corners shifted the same way
/// (translation), both moved inward, and both moved outward.
pub fn gaussian_radius(box_h: f64, box_w: f64, min_overlap: f64) -> Result<f64, CodecError> {
    if !(min_overlap > 0.0 && min_overlap < 1.0) {
        return Err(CodecError::InvalidOverlap(min_overlap));
    }
    let (h, w, m) = (box_h.max(0.0), box_w.max(0.0), min_overlap);
    let sum = h + w;
    let area = h * w;

    // translated: (w - r)(h - r) / (2wh - (w - r)(h - r)) = m
    let b1 = sum;
    let c1 = area * (1.0 - m) / (1.0 + m);
    let r1 = (b1 - (b1 * b1 - 4.0 * c1).max(0.0).sqrt()) / 2.0;

    // shrunk: (w - 2r)(h - 2r) / wh = m
    let b2 = 2.0 * sum;
    let c2 = (1.0 - m) * area;
    let r2 = (b2 - (b2 * b2 - 16.0 * c2).max(0.0).sqrt()) / 8.0;

    // grown: wh / ((w + 2r)(h + 2r)) = m
    let a3 = 4.0 * m;
    let b3 = 2.0 * m * sum;
    let c3 = (m - 1.0) * area;
    let r3 = (-b3 + (b3 * b3 - 4.0 * a3 * c3).max(0.0).sqrt()) / (2.0 * a3);

    Ok(r1.min(r2).min(r3).max(0.0))
}

/// Standard deviation of the heatmap bump for a box of the given grid size.
pub fn gaussian_sigma(box_h: f64, box_w: f64) -> f64 {
    let radius = gaussian_radius(box_h, box_w, GAUSSIAN_MIN_OVERLAP).unwrap_or(0.0);
    (radius / 3.0).max(MIN_SIGMA)
}

/// Write a Gaussian bump into one class channel, keeping the cellwise maximum
/// with what is already there. The center cell ends up exactly 1.
pub fn splat_gaussian(
    maps: &mut TargetMaps,
    class_id: usize,
    spec: GaussianSpec,
) -> Result<(), CodecError> {
    let (rows, cols, classes) = (maps.rows(), maps.cols(), maps.classes());
    if class_id >= classes {
        return Err(CodecError::ClassOutOfRange { class_id, classes });
    }
    let (cx, cy) = spec.center;
    if cx < 0 || cy < 0 || cx as usize >= cols || cy as usize >= rows {
        return Err(CodecError::OutOfBounds {
            col: cx,
            row: cy,
            cols,
            rows,
        });
    }
    if !(spec.sigma > 0.0 && spec.sigma.is_finite()) {
        return Err(CodecError::InvalidSigma(spec.sigma));
    }
    let reach = (3.0 * spec.sigma).ceil() as i64;
    let denom = 2.0 * spec.sigma * spec.sigma;
    let plane = maps.class_plane_mut(class_id);
    let y0 = (cy - reach).max(0);
    let y1 = (cy + reach).min(rows as i64 - 1);
    let x0 = (cx - reach).max(0);
    let x1 = (cx + reach).min(cols as i64 - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (dx, dy) = ((x - cx) as f64, (y - cy) as f64);
            let v = (-(dx * dx + dy * dy) / denom).exp();
            let slot = &mut plane[y as usize * cols + x as usize];
            if v > *slot {
                *slot = v;
            }
        }
    }
    Ok(())
}

/// Why an annotation did not make it into the maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    /// Center outside the image.
    OutOfBounds,
    /// Corners do not form a valid convex box.
    Degenerate,
    /// Category index not below the map's class count.
    ClassOutOfRange,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EncodeReport {
    pub encoded: usize,
    /// `(annotation index, reason)` for every skipped object.
    pub skipped: Vec<(usize, SkipReason)>,
}

/// Orientation label: 1 when the box overlaps its enclosing horizontal box
/// with IOU below 0.95.
pub fn orientation_label(obb: &crate::geometry::OrientedBox) -> f64 {
    if rotated_iou(obb, &obb.enclosing_box()) < RBB_IOU_THRESHOLD {
        1.0
    } else {
        0.0
    }
}

/// Rasterize ground truth into target maps.
///
/// Objects whose center falls outside the image, whose corners are
/// degenerate, or whose class is out of range are skipped and reported rather
/// than failing the whole image. Corners outside the image are accepted: only
/// the center cell is supervised. When two objects share a center cell, the
/// later one owns the offset, box and orientation values there.
pub fn encode(
    annotations: &[AnnotationRecord],
    image_height: usize,
    image_width: usize,
    classes: usize,
    stride: usize,
) -> Result<(TargetMaps, EncodeReport), CodecError> {
    let mut maps = TargetMaps::for_image(classes, image_height, image_width, stride)?;
    let mut report = EncodeReport::default();
    let s = stride as f64;

    for (idx, ann) in annotations.iter().enumerate() {
        let class_id = ann.category.index();
        if class_id >= classes {
            report.skipped.push((idx, SkipReason::ClassOutOfRange));
            continue;
        }
        let Ok(obb) = canonicalize(ann.corners) else {
            report.skipped.push((idx, SkipReason::Degenerate));
            continue;
        };
        let center = obb.center();
        if !(center.x >= 0.0
            && center.y >= 0.0
            && center.x < image_width as f64
            && center.y < image_height as f64)
        {
            report.skipped.push((idx, SkipReason::OutOfBounds));
            continue;
        }
        let scaled = center / s;
        let (col, row) = (scaled.x.floor(), scaled.y.floor());
        let cell = maps.cell_index(row as usize, col as usize);
        maps.set_offset(cell, Point2::new(scaled.x - col, scaled.y - row));

        let v = bba_vectors(&obb).scaled(1.0 / s);
        let hbb = enclosing_hbb(&obb);
        let (w_e, h_e) = (hbb.w_e / s, hbb.h_e / s);
        maps.set_box(
            cell,
            [v.t.x, v.t.y, v.r.x, v.r.y, v.b.x, v.b.y, v.l.x, v.l.y, w_e, h_e],
        );
        maps.orientation[cell] = orientation_label(&obb);

        splat_gaussian(
            &mut maps,
            class_id,
            GaussianSpec {
                sigma: gaussian_sigma(h_e, w_e),
                center: (col as i64, row as i64),
            },
        )?;
        report.encoded += 1;
    }
    Ok((maps, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub top_k: usize,
    pub score_thresh: f64,
    pub alpha_thresh: f64,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            top_k: 500,
            score_thresh: 0.1,
            alpha_thresh: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Peak {
    score: f64,
    class_id: usize,
    row: usize,
    col: usize,
}

/// Descending score, then ascending `(class, row, col)`.
fn peak_order(a: &Peak, b: &Peak) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.class_id.cmp(&b.class_id))
        .then(a.row.cmp(&b.row))
        .then(a.col.cmp(&b.col))
}

/// Cells that equal the maximum of their 3×3 neighbourhood.
fn collect_peaks(maps: &TargetMaps, min_score: f64, out: &mut Vec<Peak>) {
    let (rows, cols) = (maps.rows(), maps.cols());
    for class_id in 0..maps.classes() {
        let plane = maps.class_plane(class_id);
        for row in 0..rows {
            let r0 = row.saturating_sub(1);
            let r1 = (row + 1).min(rows - 1);
            for col in 0..cols {
                let v = plane[row * cols + col];
                // NaN fails this comparison too.
                if !(v >= min_score) {
                    continue;
                }
                let c0 = col.saturating_sub(1);
                let c1 = (col + 1).min(cols - 1);
                let is_peak = (r0..=r1)
                    .all(|r| plane[r * cols + c0..=r * cols + c1].iter().all(|&n| !(n > v)));
                if is_peak {
                    out.push(Peak {
                        score: v,
                        class_id,
                        row,
                        col,
                    });
                }
            }
        }
    }
}

/// Turn (activated) predicted maps into detections in input pixels.
///
/// Peaks are ranked by heatmap value and the best `top_k` are kept before
/// thresholding. Filtering by `score_thresh` first selects the same set, so
/// the threshold is applied during the peak scan.
pub fn decode(maps: &TargetMaps, params: &DecodeParams) -> Vec<Detection> {
    if params.top_k == 0 {
        return Vec::new();
    }
    let mut peaks = Vec::new();
    let min_score = if params.score_thresh.is_nan() {
        f64::NEG_INFINITY
    } else {
        params.score_thresh
    };
    collect_peaks(maps, min_score, &mut peaks);
    if peaks.len() > params.top_k {
        peaks.select_nth_unstable_by(params.top_k - 1, peak_order);
        peaks.truncate(params.top_k);
    }
    peaks.sort_unstable_by(peak_order);

    let s = maps.stride() as f64;
    let (img_w, img_h) = (maps.image_width() as f64, maps.image_height() as f64);
    peaks
        .into_iter()
        .map(|pk| {
            let cell = maps.cell_index(pk.row, pk.col);
            let o = maps.offset_at(cell);
            let center = Point2::new(
                (s * (pk.col as f64 + o.x)).clamp(0.0, img_w),
                (s * (pk.row as f64 + o.y)).clamp(0.0, img_h),
            );
            let b = maps.box_at(cell);
            let is_rbb = maps.orientation[cell] > params.alpha_thresh;
            let corners = if is_rbb {
                let v = BbaVectors {
                    t: Point2::new(b[0], b[1]),
                    r: Point2::new(b[2], b[3]),
                    b: Point2::new(b[4], b[5]),
                    l: Point2::new(b[6], b[7]),
                }
                .scaled(s);
                corners_from_vectors(center, &v)
            } else {
                let (hw, hh) = (b[8] * s / 2.0, b[9] * s / 2.0);
                [
                    Point2::new(center.x - hw, center.y - hh),
                    Point2::new(center.x + hw, center.y - hh),
                    Point2::new(center.x + hw, center.y + hh),
                    Point2::new(center.x - hw, center.y + hh),
                ]
            };
            Detection {
                corners,
                score: pk.score.clamp(0.0, 1.0),
                class_id: pk.class_id,
                is_rbb,
            }
        })
        .collect()
}
