//! Central finite-difference checks for the loss gradients.

use bbav_core::codec::{encode, TargetMaps};
use bbav_core::losses::{
    box_loss, heatmap_loss, offset_loss, orientation_loss, total_loss, FocalParams, Supervision,
};
use bbav_core::synth::{generate_scene, SceneSpec};
use rand::Rng;

pub const H: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-5;
pub const ABS_TOL: f64 = 1e-8;

pub fn target(seed: u64) -> TargetMaps {
    let spec = SceneSpec {
        image_width: 96,
        image_height: 64,
        min_objects: 3,
        max_objects: 6,
        min_size: 10.0,
        max_size: 30.0,
        classes: 3,
        seed,
        ..Default::default()
    };
    let gt = generate_scene(&spec).unwrap();
    encode(&gt, 64, 96, 3, 4).unwrap().0
}

pub fn close(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= ABS_TOL || diff <= REL_TOL * analytic.abs().max(numeric.abs())
}

/// Probabilities in [0.05, 0.95], regression residuals kept 1e-3 away from
/// the smooth-L1 kink.
pub fn prediction<R: Rng>(t: &TargetMaps, rng: &mut R) -> TargetMaps {
    let mut p = t.clone();
    p.heatmap.iter_mut().for_each(|v| *v = rng.random_range(0.05..0.95));
    p.orientation.iter_mut().for_each(|v| *v = rng.random_range(0.05..0.95));
    for v in p.offset.iter_mut().chain(p.box_params.iter_mut()) {
        loop {
            let d: f64 = rng.random_range(-2.0..2.0);
            if (d.abs() - 1.0).abs() > 1e-3 {
                *v += d;
                break;
            }
        }
    }
    p
}

/// Result of checking one loss at a set of coordinates.
#[derive(Debug, Default)]
pub struct Check {
    pub checked: usize,
    pub failures: Vec<String>,
    pub max_abs_err: f64,
}

impl Check {
    fn record(&mut self, label: String, analytic: f64, numeric: f64) {
        self.checked += 1;
        self.max_abs_err = self.max_abs_err.max((analytic - numeric).abs());
        if !close(analytic, numeric) {
            self.failures.push(format!("{label}: analytic {analytic:e} numeric {numeric:e}"));
        }
    }
}

fn check_slice(pred: &[f64], coords: &[usize], f: impl Fn(&[f64]) -> (f64, Vec<f64>)) -> Check {
    let (_, grad) = f(pred);
    let mut x = pred.to_vec();
    let mut out = Check::default();
    for &i in coords {
        let orig = x[i];
        x[i] = orig + H;
        let up = f(&x).0;
        x[i] = orig - H;
        let down = f(&x).0;
        x[i] = orig;
        out.record(format!("[{i}]"), grad[i], (up - down) / (2.0 * H));
    }
    out
}

/// `n` coordinates, half of them on supervised cells.
fn coords<R: Rng>(rng: &mut R, len: usize, channels: usize, sup: &Supervision, n: usize) -> Vec<usize> {
    let plane = len / channels;
    (0..n)
        .map(|k| {
            if k % 2 == 0 {
                let cell = sup.cells[rng.random_range(0..sup.cells.len())];
                rng.random_range(0..channels) * plane + cell
            } else {
                rng.random_range(0..len)
            }
        })
        .collect()
}

/// Checks for the heatmap, offset, box and orientation terms, in that order.
pub fn check_terms(seed: u64, n: usize) -> [Check; 4] {
    let mut rng = super::rng(seed);
    let t = target(seed);
    let p = prediction(&t, &mut rng);
    let sup = Supervision::from_targets(&t);
    let fp = FocalParams::default();

    let c = (0..n).map(|_| rng.random_range(0..p.heatmap.len())).collect::<Vec<_>>();
    let heat = check_slice(&p.heatmap, &c, |x| {
        let l = heatmap_loss(x, &t.heatmap, fp).unwrap();
        (l.value, l.grad)
    });
    let c = coords(&mut rng, p.offset.len(), 2, &sup, n);
    let off = check_slice(&p.offset, &c, |x| {
        let l = offset_loss(x, &t.offset, &sup).unwrap();
        (l.value, l.grad)
    });
    let c = coords(&mut rng, p.box_params.len(), 10, &sup, n);
    let bx = check_slice(&p.box_params, &c, |x| {
        let l = box_loss(x, &t.box_params, &sup).unwrap();
        (l.value, l.grad)
    });
    let c = coords(&mut rng, p.orientation.len(), 1, &sup, n);
    let ori = check_slice(&p.orientation, &c, |x| {
        let l = orientation_loss(x, &t.orientation, &sup).unwrap();
        (l.value, l.grad)
    });
    [heat, off, bx, ori]
}

fn plane_mut(m: &mut TargetMaps, which: usize) -> &mut Vec<f64> {
    match which {
        0 => &mut m.heatmap,
        1 => &mut m.offset,
        2 => &mut m.box_params,
        _ => &mut m.orientation,
    }
}

/// The summed loss, perturbing coordinates spread over all four planes.
pub fn check_total(seed: u64, n: usize) -> Check {
    let mut rng = super::rng(seed);
    let t = target(seed);
    let p = prediction(&t, &mut rng);
    let fp = FocalParams::default();
    let (_, grads) = total_loss(&p, &t, fp).unwrap();
    let sup = Supervision::from_targets(&t);
    let cells = t.cells();
    let mut out = Check::default();
    for k in 0..n {
        let which = k % 4;
        let channels = [t.classes(), 2, 10, 1][which];
        let i = if k % 8 < 4 {
            rng.random_range(0..channels) * cells + sup.cells[rng.random_range(0..sup.cells.len())]
        } else {
            rng.random_range(0..channels * cells)
        };
        let analytic = [&grads.heatmap, &grads.offset, &grads.box_params, &grads.orientation][which][i];
        let mut m = p.clone();
        let orig = plane_mut(&mut m, which)[i];
        plane_mut(&mut m, which)[i] = orig + H;
        let up = total_loss(&m, &t, fp).unwrap().0.total;
        plane_mut(&mut m, which)[i] = orig - H;
        let down = total_loss(&m, &t, fp).unwrap().0.total;
        out.record(format!("plane {which}[{i}]"), analytic, (up - down) / (2.0 * H));
    }
    out
}
