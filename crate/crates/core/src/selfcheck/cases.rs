//! Small constructions with hand-computed metric values.

use crate::error::Result;
use crate::grid::LabelMap;
use crate::metrics::{aji_score, dice_score, pq_score};

fn rect(h: usize, w: usize, id: u32, rows: (usize, usize), cols: (usize, usize)) -> LabelMap {
    LabelMap::from_fn(h, w, |r, c| {
        if (rows.0..=rows.1).contains(&r) && (cols.0..=cols.1).contains(&c) {
            id
        } else {
            0
        }
    })
}

/// `(pred, gt)`: a 3x3 ground truth and a prediction covering 6 of its pixels.
/// Dice = 2*6 / (9 + 6) = 0.8.
pub fn dice_point_eight() -> (LabelMap, LabelMap) {
    (rect(5, 5, 1, (1, 2), (1, 3)), rect(5, 5, 1, (1, 3), (1, 3)))
}

/// `(pred, gt)`: two 2x2 ground-truth squares one column apart and one
/// prediction spanning both plus the gap. Each square picks the same
/// prediction (4 / 10), so AJI = 8 / 20 = 0.4.
pub fn aji_point_four() -> (LabelMap, LabelMap) {
    let mut gt = rect(4, 7, 1, (1, 2), (1, 2));
    for r in 1..=2 {
        for c in 4..=5 {
            gt.set(r, c, 2);
        }
    }
    (rect(4, 7, 1, (1, 2), (1, 5)), gt)
}

/// `(pred, gt)`: a 5x5 ground truth and a 4x5 prediction inside it, IoU 0.8, PQ 0.8.
pub fn pq_point_eight() -> (LabelMap, LabelMap) {
    (rect(5, 5, 7, (0, 3), (0, 4)), rect(5, 5, 1, (0, 4), (0, 4)))
}

/// `(pred, gt)`: IoU 0.4, below the match threshold, PQ 0.
pub fn pq_zero() -> (LabelMap, LabelMap) {
    (rect(5, 5, 3, (0, 1), (0, 4)), rect(5, 5, 1, (0, 4), (0, 4)))
}

/// Names of hand cases whose production value differs from the expected one.
pub fn check_all() -> Result<Vec<&'static str>> {
    let mut bad = Vec::new();
    let (p, g) = dice_point_eight();
    if (dice_score(&p, &g)? - 0.8).abs() > f64::EPSILON {
        bad.push("dice 0.8");
    }
    let (p, g) = aji_point_four();
    if (aji_score(&p, &g)? - 0.4).abs() > f64::EPSILON {
        bad.push("aji 0.4");
    }
    let (p, g) = pq_point_eight();
    if (pq_score(&p, &g)?.0 - 0.8).abs() > f64::EPSILON {
        bad.push("pq 0.8");
    }
    let (p, g) = pq_zero();
    if pq_score(&p, &g)?.0 != 0.0 {
        bad.push("pq 0");
    }
    Ok(bad)
}
