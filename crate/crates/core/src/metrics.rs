//! Dice, aggregated Jaccard index, Hausdorff distance and panoptic quality
//! between a predicted and a ground-truth instance map.
//!
//! Overlap comparisons are done on exact integer ratios, so tie-breaking is
//! independent of floating-point rounding.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Result};
use crate::grid::LabelMap;
use crate::grid_core::is_contour_pixel;

/// Pixel areas per instance and pairwise intersection counts.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OverlapTable {
    pub gt_area: BTreeMap<u32, u64>,
    pub pred_area: BTreeMap<u32, u64>,
    /// Only pairs with a nonzero intersection are stored.
    pub intersection: BTreeMap<(u32, u32), u64>,
}

impl OverlapTable {
    pub fn build(pred: &LabelMap, gt: &LabelMap) -> Result<Self> {
        check_dims("prediction/ground truth", pred.dims(), gt.dims())?;
        let mut t = Self::default();
        for (&p, &g) in pred.as_slice().iter().zip(gt.as_slice()) {
            if g != 0 {
                *t.gt_area.entry(g).or_insert(0) += 1;
            }
            if p != 0 {
                *t.pred_area.entry(p).or_insert(0) += 1;
            }
            if g != 0 && p != 0 {
                *t.intersection.entry((g, p)).or_insert(0) += 1;
            }
        }
        Ok(t)
    }

    pub fn intersection(&self, gt: u32, pred: u32) -> u64 {
        self.intersection.get(&(gt, pred)).copied().unwrap_or(0)
    }

    pub fn union(&self, gt: u32, pred: u32) -> u64 {
        self.gt_area[&gt] + self.pred_area[&pred] - self.intersection(gt, pred)
    }
}

/// `a.0 / a.1` compared with `b.0 / b.1` for non-negative integers, positive denominators.
fn cmp_ratio(a: (u64, u64), b: (u64, u64)) -> Ordering {
    (a.0 as u128 * b.1 as u128).cmp(&(b.0 as u128 * a.1 as u128))
}

/// Binary foreground Dice; two empty maps score 1.
pub fn dice_score(pred: &LabelMap, gt: &LabelMap) -> Result<f64> {
    check_dims("prediction/ground truth", pred.dims(), gt.dims())?;
    let (mut inter, mut p, mut g) = (0u64, 0u64, 0u64);
    for (&a, &b) in pred.as_slice().iter().zip(gt.as_slice()) {
        p += (a != 0) as u64;
        g += (b != 0) as u64;
        inter += (a != 0 && b != 0) as u64;
    }
    if p + g == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (p + g) as f64)
}

/// Aggregated Jaccard index.
///
/// Ground-truth instances are visited in ascending id; each picks the
/// prediction with the highest IoU (lowest id on ties, reuse allowed) and adds
/// the pair's intersection and union. Predictions never picked add their area
/// to the union. Two empty maps score 1.
pub fn aji_score(pred: &LabelMap, gt: &LabelMap) -> Result<f64> {
    Ok(aji_from_table(&OverlapTable::build(pred, gt)?))
}

pub fn aji_from_table(t: &OverlapTable) -> f64 {
    if t.gt_area.is_empty() && t.pred_area.is_empty() {
        return 1.0;
    }
    let (mut c, mut u) = (0u64, 0u64);
    let mut used = std::collections::BTreeSet::new();
    for (&g, &g_area) in &t.gt_area {
        let mut best: Option<(u32, u64, u64)> = None;
        for &p in t.pred_area.keys() {
            let (i, un) = (t.intersection(g, p), t.union(g, p));
            let better = match best {
                None => true,
                Some((_, bi, bu)) => cmp_ratio((i, un), (bi, bu)) == Ordering::Greater,
            };
            if better {
                best = Some((p, i, un));
            }
        }
        match best {
            Some((p, i, un)) => {
                c += i;
                u += un;
                used.insert(p);
            }
            None => u += g_area,
        }
    }
    for (p, &area) in &t.pred_area {
        if !used.contains(p) {
            u += area;
        }
    }
    c as f64 / u as f64
}

/// `(gt_id, pred_id, iou)` triples.
pub type Matches = Vec<(u32, u32, f64)>;

/// One-to-one matches with IoU above one half, sorted by ground-truth id.
pub fn pq_matches(t: &OverlapTable) -> Matches {
    t.intersection
        .iter()
        .filter_map(|(&(g, p), &i)| {
            let un = t.union(g, p);
            (2 * i > un).then(|| (g, p, i as f64 / un as f64))
        })
        .collect()
}

/// Sum in ascending order, so the result does not depend on label numbering.
fn ascending_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

/// Panoptic quality, `sum IoU / (TP + FP/2 + FN/2)`, with the matches used.
pub fn pq_score(pred: &LabelMap, gt: &LabelMap) -> Result<(f64, Matches)> {
    let t = OverlapTable::build(pred, gt)?;
    Ok(pq_from_table(&t))
}

pub fn pq_from_table(t: &OverlapTable) -> (f64, Matches) {
    let matches = pq_matches(t);
    if t.gt_area.is_empty() && t.pred_area.is_empty() {
        return (1.0, matches);
    }
    let tp = matches.len() as f64;
    let fn_ = (t.gt_area.len() - matches.len()) as f64;
    let fp = (t.pred_area.len() - matches.len()) as f64;
    (
        ascending_sum(matches.iter().map(|m| m.2)) / (tp + 0.5 * fp + 0.5 * fn_),
        matches,
    )
}

/// Symmetric Hausdorff distance between two non-empty point sets.
pub fn hausdorff_point_sets(a: &[(usize, usize)], b: &[(usize, usize)]) -> f64 {
    fn directed(a: &[(usize, usize)], b: &[(usize, usize)]) -> u64 {
        a.iter()
            .map(|&(r, c)| {
                b.iter()
                    .map(|&(s, d)| {
                        let dr = r.abs_diff(s) as u64;
                        let dc = c.abs_diff(d) as u64;
                        dr * dr + dc * dc
                    })
                    .min()
                    .unwrap_or(u64::MAX)
            })
            .max()
            .unwrap_or(0)
    }
    (directed(a, b).max(directed(b, a)) as f64).sqrt()
}

fn contour_points(labels: &LabelMap) -> BTreeMap<u32, Vec<(usize, usize)>> {
    let mut out: BTreeMap<u32, Vec<(usize, usize)>> = BTreeMap::new();
    for (r, c, id) in labels.iter_pixels() {
        if id != 0 && is_contour_pixel(labels, r, c) {
            out.entry(id).or_default().push((r, c));
        }
    }
    out
}

/// Greedy one-to-one pairing by descending IoU over overlapping pairs
/// (ties: lower ground-truth id, then lower prediction id).
pub fn greedy_iou_pairs(t: &OverlapTable) -> Vec<(u32, u32)> {
    let mut pairs: Vec<(u32, u32, u64, u64)> = t
        .intersection
        .iter()
        .map(|(&(g, p), &i)| (g, p, i, t.union(g, p)))
        .collect();
    pairs.sort_by(|a, b| {
        cmp_ratio((b.2, b.3), (a.2, a.3))
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });
    let mut used_g = std::collections::BTreeSet::new();
    let mut used_p = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for (g, p, _, _) in pairs {
        if used_g.contains(&g) || used_p.contains(&p) {
            continue;
        }
        used_g.insert(g);
        used_p.insert(p);
        out.push((g, p));
    }
    out.sort_unstable();
    out
}

/// Mean contour Hausdorff distance over IoU-paired instances; every unpaired
/// instance on either side contributes the image diagonal. Two empty maps score 0.
pub fn hausdorff_distance(pred: &LabelMap, gt: &LabelMap) -> Result<f64> {
    let t = OverlapTable::build(pred, gt)?;
    Ok(hausdorff_from_table(pred, gt, &t))
}

fn hausdorff_from_table(pred: &LabelMap, gt: &LabelMap, t: &OverlapTable) -> f64 {
    let pairs = greedy_iou_pairs(t);
    let unmatched = t.gt_area.len() + t.pred_area.len() - 2 * pairs.len();
    let terms = pairs.len() + unmatched;
    if terms == 0 {
        return 0.0;
    }
    let (h, w) = gt.dims();
    let diagonal = ((h.saturating_sub(1).pow(2) + w.saturating_sub(1).pow(2)) as f64).sqrt();
    let gt_contours = contour_points(gt);
    let pred_contours = contour_points(pred);
    let mut total = ascending_sum(
        pairs
            .iter()
            .map(|(g, p)| hausdorff_point_sets(&gt_contours[g], &pred_contours[p])),
    );
    total += unmatched as f64 * diagonal;
    total / terms as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dice: f64,
    pub aji: f64,
    pub hausdorff: f64,
    pub pq: f64,
    /// `(gt_id, pred_id, iou)` for every PQ match.
    pub matches: Matches,
}

pub fn evaluate(pred: &LabelMap, gt: &LabelMap) -> Result<MetricsReport> {
    let t = OverlapTable::build(pred, gt)?;
    let (pq, matches) = pq_from_table(&t);
    Ok(MetricsReport {
        dice: dice_score(pred, gt)?,
        aji: aji_from_table(&t),
        hausdorff: hausdorff_from_table(pred, gt, &t),
        pq,
        matches,
    })
}
