//! Training losses on the four output planes and their analytic gradients.
//!
//! All gradients are taken with respect to the predicted (already activated)
//! map values. Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before
//! any logarithm; outside that interval the clamp is flat and the gradient is
//! zero.

use thiserror::Error;

use crate::codec::{TargetMaps, BOX_CHANNELS, OFFSET_CHANNELS};

pub const PROB_EPS: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("no positive (center) cells in the target")]
    NoPositives,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Exponents of the penalty-reduced focal loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 4.0,
        }
    }
}

/// A scalar loss and its gradient with respect to the prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTerm {
    pub value: f64,
    pub grad: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub l_h: f64,
    pub l_o: f64,
    pub l_b: f64,
    pub l_alpha: f64,
    pub total: f64,
}

/// Gradient planes laid out like the corresponding [`TargetMaps`] planes.
#[derive(Debug, Clone, PartialEq)]
pub struct MapGradients {
    pub heatmap: Vec<f64>,
    pub offset: Vec<f64>,
    pub box_params: Vec<f64>,
    pub orientation: Vec<f64>,
}

/// Cells supervised by the regression and orientation terms, and the object
/// count `N` that normalizes every term.
#[derive(Debug, Clone, PartialEq)]
pub struct Supervision {
    pub cells: Vec<usize>,
    pub objects: usize,
}

impl Supervision {
    /// Centers are the cells where the ground-truth heatmap is exactly 1.
    pub fn from_targets(target: &TargetMaps) -> Self {
        Self {
            cells: target.center_cells(),
            objects: target.object_count(),
        }
    }

    /// One object per listed cell.
    pub fn at_cells(cells: Vec<usize>) -> Self {
        let objects = cells.len();
        Self { cells, objects }
    }
}

#[inline]
pub fn smooth_l1(x: f64) -> f64 {
    if x.abs() < 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

#[inline]
pub fn smooth_l1_grad(x: f64) -> f64 {
    if x.abs() < 1.0 {
        x
    } else {
        x.signum()
    }
}

#[inline]
fn clamp_prob(p: f64) -> (f64, bool) {
    if p < PROB_EPS {
        (PROB_EPS, false)
    } else if p > 1.0 - PROB_EPS {
        (1.0 - PROB_EPS, false)
    } else {
        (p, true)
    }
}

fn check_len(name: &str, a: usize, b: usize) -> Result<(), LossError> {
    if a == b {
        Ok(())
    } else {
        Err(LossError::ShapeMismatch(format!(
            "{name}: prediction has {a} values, target has {b}"
        )))
    }
}

/// Penalty-reduced focal loss over a heatmap.
///
/// Cells with target exactly 1 are positives; every other cell, including the
/// Gaussian shoulders, is a negative weighted by `(1 - target)^beta`. The sum
/// is divided by the number of positives.
pub fn heatmap_loss(pred: &[f64], target: &[f64], params: FocalParams) -> Result<LossTerm, LossError> {
    check_len("heatmap", pred.len(), target.len())?;
    let n = target.iter().filter(|&&t| t == 1.0).count();
    if n == 0 {
        return Err(LossError::NoPositives);
    }
    let inv_n = 1.0 / n as f64;
    let (a, b) = (params.alpha, params.beta);
    let mut value = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for ((&raw, &t), g) in pred.iter().zip(target).zip(grad.iter_mut()) {
        let (p, live) = clamp_prob(raw);
        if t == 1.0 {
            let w = (1.0 - p).powf(a);
            value -= w * p.ln();
            if live {
                // d/dp [(1-p)^a ln p]
                let d = -a * (1.0 - p).powf(a - 1.0) * p.ln() + w / p;
                *g = -d * inv_n;
            }
        } else {
            let reduce = (1.0 - t).powf(b);
            let pa = p.powf(a);
            let log_neg = (1.0 - p).ln();
            value -= reduce * pa * log_neg;
            if live {
                // d/dp [p^a ln(1-p)]
                let d = a * p.powf(a - 1.0) * log_neg - pa / (1.0 - p);
                *g = -reduce * d * inv_n;
            }
        }
    }
    Ok(LossTerm {
        value: value * inv_n,
        grad,
    })
}

/// Smooth-L1 regression over `channels` planes of `plane_len` cells each,
/// evaluated only at the supervised cells.
fn regression_loss(
    pred: &[f64],
    target: &[f64],
    channels: usize,
    sup: &Supervision,
) -> Result<LossTerm, LossError> {
    check_len("regression", pred.len(), target.len())?;
    if sup.objects == 0 || sup.cells.is_empty() {
        return Err(LossError::NoPositives);
    }
    if pred.len() % channels != 0 {
        return Err(LossError::ShapeMismatch(format!(
            "{} values is not a multiple of {channels} channels",
            pred.len()
        )));
    }
    let plane = pred.len() / channels;
    let inv_n = 1.0 / sup.objects as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for &cell in &sup.cells {
        if cell >= plane {
            return Err(LossError::ShapeMismatch(format!(
                "supervised cell {cell} outside plane of {plane}"
            )));
        }
        for c in 0..channels {
            let i = c * plane + cell;
            let d = pred[i] - target[i];
            value += smooth_l1(d);
            grad[i] = smooth_l1_grad(d) * inv_n;
        }
    }
    Ok(LossTerm {
        value: value * inv_n,
        grad,
    })
}

/// Offset loss on the 2-channel offset plane.
pub fn offset_loss(pred: &[f64], target: &[f64], sup: &Supervision) -> Result<LossTerm, LossError> {
    regression_loss(pred, target, OFFSET_CHANNELS, sup)
}

/// Box-parameter loss on the 10-channel box plane.
pub fn box_loss(pred: &[f64], target: &[f64], sup: &Supervision) -> Result<LossTerm, LossError> {
    regression_loss(pred, target, BOX_CHANNELS, sup)
}

/// Binary cross-entropy on the orientation plane at supervised cells.
pub fn orientation_loss(pred: &[f64], target: &[f64], sup: &Supervision) -> Result<LossTerm, LossError> {
    check_len("orientation", pred.len(), target.len())?;
    if sup.objects == 0 || sup.cells.is_empty() {
        return Err(LossError::NoPositives);
    }
    let inv_n = 1.0 / sup.objects as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for &cell in &sup.cells {
        let (Some(&raw), Some(&t)) = (pred.get(cell), target.get(cell)) else {
            return Err(LossError::ShapeMismatch(format!(
                "supervised cell {cell} outside orientation plane"
            )));
        };
        let (p, live) = clamp_prob(raw);
        value -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
        if live {
            grad[cell] = -(t / p - (1.0 - t) / (1.0 - p)) * inv_n;
        }
    }
    Ok(LossTerm {
        value: value * inv_n,
        grad,
    })
}

/// Unweighted sum of the four terms, with gradients for every predicted plane.
pub fn total_loss(
    pred: &TargetMaps,
    target: &TargetMaps,
    params: FocalParams,
) -> Result<(LossReport, MapGradients), LossError> {
    if !pred.same_shape(target) {
        return Err(LossError::ShapeMismatch(format!(
            "prediction {}x{}x{} (stride {}) vs target {}x{}x{} (stride {})",
            pred.classes(),
            pred.rows(),
            pred.cols(),
            pred.stride(),
            target.classes(),
            target.rows(),
            target.cols(),
            target.stride()
        )));
    }
    let sup = Supervision::from_targets(target);
    let h = heatmap_loss(&pred.heatmap, &target.heatmap, params)?;
    let o = offset_loss(&pred.offset, &target.offset, &sup)?;
    let b = box_loss(&pred.box_params, &target.box_params, &sup)?;
    let a = orientation_loss(&pred.orientation, &target.orientation, &sup)?;
    let report = LossReport {
        l_h: h.value,
        l_o: o.value,
        l_b: b.value,
        l_alpha: a.value,
        total: h.value + o.value + b.value + a.value,
    };
    Ok((
        report,
        MapGradients {
            heatmap: h.grad,
            offset: o.grad,
            box_params: b.grad,
            orientation: a.grad,
        },
    ))
}
