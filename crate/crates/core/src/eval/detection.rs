//! Average precision of depiction boxes.

use serde::{Deserialize, Serialize};

use crate::geometry::BBox;
use crate::scalar::Scalar;

/// A predicted box on image `image` (any key shared with gold, such as
/// document and page).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct ScoredBox<T> {
    pub image: String,
    #[serde(rename = "box")]
    pub bbox: BBox<T>,
    pub score: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct ApTable<T> {
    /// (IoU threshold, AP) pairs in threshold order.
    pub per_threshold: Vec<(T, T)>,
    /// Mean over the thresholds.
    pub map: T,
}

/// 0.50, 0.55, ..., 0.95.
pub fn iou_thresholds<T: Scalar>() -> Vec<T> {
    (0..10).map(|i| T::ratio(50 + 5 * i, 100)).collect()
}

/// Whether each prediction, in score order, is a true positive at `threshold`.
/// Each prediction takes the unclaimed gold box on its image with the
/// highest IoU (lowest index on ties) if that IoU reaches the threshold.
fn mark<T: Scalar>(order: &[usize], pred: &[ScoredBox<T>], gold: &[(String, BBox<T>)], threshold: T) -> Vec<bool> {
    let mut claimed = vec![false; gold.len()];
    order
        .iter()
        .map(|&i| {
            let p = &pred[i];
            let mut best: Option<(usize, T)> = None;
            for (j, (image, g)) in gold.iter().enumerate() {
                if claimed[j] || *image != p.image {
                    continue;
                }
                let iou = p.bbox.iou(g);
                if best.is_none_or(|(_, b)| iou > b) {
                    best = Some((j, iou));
                }
            }
            match best {
                Some((j, iou)) if iou >= threshold => {
                    claimed[j] = true;
                    true
                }
                _ => false,
            }
        })
        .collect()
}

/// Area under the precision envelope: the sum over recall steps of the best
/// precision reached at that recall or beyond.
fn all_points_ap<T: Scalar>(hits: &[bool], n_gold: usize) -> T {
    if n_gold == 0 {
        return if hits.is_empty() { T::one() } else { T::zero() };
    }
    let mut tp = 0;
    let mut points: Vec<(T, T)> = Vec::with_capacity(hits.len());
    for (k, &h) in hits.iter().enumerate() {
        tp += h as usize;
        points.push((T::ratio(tp, n_gold), T::ratio(tp, k + 1)));
    }
    let mut envelope = T::zero();
    for p in points.iter_mut().rev() {
        envelope = envelope.max(p.1);
        p.1 = envelope;
    }
    let mut ap = T::zero();
    let mut prev_recall = T::zero();
    for (r, p) in points {
        ap += (r - prev_recall) * p;
        prev_recall = r;
    }
    ap
}

/// AP at each IoU threshold and their mean. Predictions are processed by
/// descending score, input order breaking ties.
pub fn detection_ap<T: Scalar>(pred: &[ScoredBox<T>], gold: &[(String, BBox<T>)], thresholds: &[T]) -> ApTable<T> {
    let mut order: Vec<usize> = (0..pred.len()).collect();
    order.sort_by(|&a, &b| pred[b].score.partial_cmp(&pred[a].score).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let per_threshold: Vec<(T, T)> =
        thresholds.iter().map(|&t| (t, all_points_ap(&mark(&order, pred, gold, t), gold.len()))).collect();
    let map = if per_threshold.is_empty() {
        T::zero()
    } else {
        per_threshold.iter().map(|x| x.1).sum::<T>() / T::from_usize(per_threshold.len()).unwrap_or_else(T::one)
    };
    ApTable { per_threshold, map }
}
