//! Rotated non-maximum suppression and rotated-IOU mean average precision.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::Serialize;

use crate::codec::Detection;
use crate::dota_io::AnnotationRecord;
use crate::geometry::{canonicalize, rotated_iou, OrientedBox};

/// Score-descending order with ties resolved by input position.
fn score_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    order
}

/// Greedy class-wise NMS.
///
/// Detections are visited by descending score (ties: input order). Each kept
/// box suppresses every later box of the same class whose rotated IOU with it
/// exceeds `iou_thresh`. Detections whose corners do not form a valid box
/// never suppress and are never suppressed.
pub fn rotated_nms(dets: &[Detection], iou_thresh: f64) -> Vec<Detection> {
    let order = score_order(dets);
    let boxes: Vec<Option<(OrientedBox, [f64; 4])>> = dets
        .iter()
        .map(|d| {
            canonicalize(d.corners).ok().map(|b| {
                let (lo, hi) = b.bounds();
                (b, [lo.x, lo.y, hi.x, hi.y])
            })
        })
        .collect();
    let mut suppressed = vec![false; dets.len()];
    let mut kept = Vec::new();
    for (rank, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        kept.push(dets[i].clone());
        let Some((bi, ai)) = &boxes[i] else { continue };
        for &j in &order[rank + 1..] {
            if suppressed[j] || dets[j].class_id != dets[i].class_id {
                continue;
            }
            let Some((bj, aj)) = &boxes[j] else { continue };
            let disjoint = ai[2] <= aj[0] || aj[2] <= ai[0] || ai[3] <= aj[1] || aj[3] <= ai[1];
            if !disjoint && rotated_iou(bi, bj) > iou_thresh {
                suppressed[j] = true;
            }
        }
    }
    kept
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchFlag {
    TruePositive,
    FalsePositive,
    /// Matched a difficult ground truth; left out of the tally.
    Ignored,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassResult {
    pub class_id: usize,
    /// Non-difficult ground truths.
    pub num_gt: usize,
    pub num_dets: usize,
    /// Precision/recall after each counted detection in score order.
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchResult {
    /// Per image, per detection (input order).
    pub flags: Vec<Vec<MatchFlag>>,
    /// Classes with at least one non-difficult ground truth, by class id.
    pub classes: Vec<ClassResult>,
    /// Classes that had detections but no ground truth; not part of the mean.
    pub excluded_classes: Vec<usize>,
    pub map: f64,
}

/// VOC07 11-point interpolated average precision.
pub fn eleven_point_ap(precision: &[f64], recall: &[f64]) -> f64 {
    let mut sum = 0.0;
    for i in 0..=10 {
        let t = i as f64 / 10.0;
        let p = precision
            .iter()
            .zip(recall)
            .filter(|(_, &r)| r >= t)
            .map(|(&p, _)| p)
            .fold(0.0, f64::max);
        sum += p;
    }
    sum / 11.0
}

struct GtEntry {
    obb: Option<OrientedBox>,
    difficult: bool,
}

/// Rotated-IOU mAP over a set of images.
///
/// For each class, detections from all images are ranked by score (ties by
/// image, then input position). Each one is matched to the unmatched
/// same-class ground truth of its image with the highest IOU (ties: lower
/// index) when that IOU reaches `iou_thresh`. Hits on difficult ground truths
/// are ignored; everything else unmatched is a false positive.
///
/// `dets` and `gts` are indexed by image and must have the same length.
pub fn evaluate_map(
    dets: &[Vec<Detection>],
    gts: &[Vec<AnnotationRecord>],
    iou_thresh: f64,
) -> MatchResult {
    assert_eq!(dets.len(), gts.len(), "detections and ground truth cover different image counts");

    let mut flags: Vec<Vec<MatchFlag>> = dets
        .iter()
        .map(|d| vec![MatchFlag::FalsePositive; d.len()])
        .collect();

    // class -> per image ground truth list
    let mut gt_by_class: BTreeMap<usize, Vec<Vec<GtEntry>>> = BTreeMap::new();
    for (img, list) in gts.iter().enumerate() {
        for g in list {
            let per_img = gt_by_class
                .entry(g.category.index())
                .or_insert_with(|| (0..gts.len()).map(|_| Vec::new()).collect());
            per_img[img].push(GtEntry {
                obb: canonicalize(g.corners).ok(),
                difficult: g.difficult,
            });
        }
    }

    let mut det_by_class: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for (img, list) in dets.iter().enumerate() {
        for (k, d) in list.iter().enumerate() {
            det_by_class.entry(d.class_id).or_default().push((img, k));
        }
    }

    let mut classes = Vec::new();
    let mut excluded = Vec::new();

    let class_ids: std::collections::BTreeSet<usize> =
        gt_by_class.keys().chain(det_by_class.keys()).copied().collect();
    for class_id in class_ids {
        let empty = Vec::new();
        let class_gts = gt_by_class.get(&class_id);
        let num_gt = class_gts
            .map(|per| per.iter().flatten().filter(|g| !g.difficult).count())
            .unwrap_or(0);
        let mut class_dets = det_by_class.get(&class_id).cloned().unwrap_or_default();
        if num_gt == 0 {
            if !class_dets.is_empty() {
                excluded.push(class_id);
            }
            // Detections of an unevaluated class stay flagged as false positives.
            continue;
        }
        let class_gts = class_gts.unwrap_or(&empty);

        class_dets.sort_by(|&(ia, ka), &(ib, kb)| {
            dets[ib][kb]
                .score
                .total_cmp(&dets[ia][ka].score)
                .then(ia.cmp(&ib))
                .then(ka.cmp(&kb))
        });

        let mut matched: Vec<Vec<bool>> = class_gts.iter().map(|g| vec![false; g.len()]).collect();
        let (mut tp, mut fp) = (0usize, 0usize);
        let mut precision = Vec::new();
        let mut recall = Vec::new();

        for &(img, k) in &class_dets {
            let det_box = canonicalize(dets[img][k].corners).ok();
            let mut best: Option<(usize, f64)> = None;
            if let Some(db) = &det_box {
                for (gi, g) in class_gts[img].iter().enumerate() {
                    if matched[img][gi] {
                        continue;
                    }
                    let Some(gb) = &g.obb else { continue };
                    let iou = rotated_iou(db, gb);
                    let better = match best {
                        None => true,
                        Some((_, b)) => iou.partial_cmp(&b) == Some(Ordering::Greater),
                    };
                    if better {
                        best = Some((gi, iou));
                    }
                }
            }
            let flag = match best {
                Some((gi, iou)) if iou >= iou_thresh => {
                    if class_gts[img][gi].difficult {
                        MatchFlag::Ignored
                    } else {
                        matched[img][gi] = true;
                        MatchFlag::TruePositive
                    }
                }
                _ => MatchFlag::FalsePositive,
            };
            flags[img][k] = flag;
            match flag {
                MatchFlag::TruePositive => tp += 1,
                MatchFlag::FalsePositive => fp += 1,
                MatchFlag::Ignored => continue,
            }
            precision.push(tp as f64 / (tp + fp) as f64);
            recall.push(tp as f64 / num_gt as f64);
        }

        let ap = eleven_point_ap(&precision, &recall);
        classes.push(ClassResult {
            class_id,
            num_gt,
            num_dets: class_dets.len(),
            precision,
            recall,
            ap,
        });
    }

    let map = if classes.is_empty() {
        0.0
    } else {
        classes.iter().map(|c| c.ap).sum::<f64>() / classes.len() as f64
    };
    MatchResult {
        flags,
        classes,
        excluded_classes: excluded,
        map,
    }
}
