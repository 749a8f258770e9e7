mod common;

use bbav_core::losses::{offset_loss, Supervision};
use common::gradcheck::{check_terms, check_total, prediction, target};

#[test]
fn every_term_matches_finite_differences() {
    for seed in [3, 17] {
        for (name, check) in ["heatmap", "offset", "box", "orientation"].iter().zip(check_terms(seed, 100)) {
            assert_eq!(check.checked, 100);
            assert!(check.failures.is_empty(), "{name}: {:?}", check.failures);
        }
    }
}

#[test]
fn total_matches_finite_differences() {
    let check = check_total(8, 100);
    assert!(check.failures.is_empty(), "{:?}", check.failures);
}

#[test]
fn gradients_vanish_off_supervised_cells() {
    let mut rng = common::rng(2);
    let t = target(4);
    let p = prediction(&t, &mut rng);
    let sup = Supervision::from_targets(&t);
    let g = offset_loss(&p.offset, &t.offset, &sup).unwrap().grad;
    for cell in 0..t.cells() {
        if !sup.cells.contains(&cell) {
            assert_eq!((g[cell], g[t.cells() + cell]), (0.0, 0.0));
        }
    }
}
