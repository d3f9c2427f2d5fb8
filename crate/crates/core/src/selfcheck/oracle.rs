//! Reference implementations that share no code with the production paths:
//! quadratic scans, per-pair pixel loops and numerical differentiation.

use std::collections::BTreeSet;

use crate::grid::LabelMap;

/// Contour pixels of every instance: instance pixels with an 8-neighbour that
/// lies off the image or carries a different label.
pub fn contour_pixels(labels: &LabelMap) -> Vec<(usize, usize, u32)> {
    let (h, w) = labels.dims();
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let id = labels.get(r, c);
            if id == 0 {
                continue;
            }
            let mut edge = false;
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                    let off_image = rr < 0 || cc < 0 || rr >= h as i64 || cc >= w as i64;
                    if off_image || labels.get(rr as usize, cc as usize) != id {
                        edge = true;
                    }
                }
            }
            if edge {
                out.push((r, c, id));
            }
        }
    }
    out
}

/// Raw signed structure distances by exhaustive nearest-contour search, in
/// row-major order. `None` when the map has no instances.
pub fn structure_distances(labels: &LabelMap) -> Option<Vec<f64>> {
    let contour = contour_pixels(labels);
    if contour.is_empty() {
        return None;
    }
    let (h, w) = labels.dims();
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let id = labels.get(r, c);
            let mut best = u64::MAX;
            let mut on_contour = false;
            for &(cr, cc, cid) in &contour {
                if id != 0 && cid != id {
                    continue;
                }
                let d = (r.abs_diff(cr).pow(2) + c.abs_diff(cc).pow(2)) as u64;
                on_contour |= d == 0;
                best = best.min(d);
            }
            out.push(match (id, on_contour) {
                (_, true) => 0.0,
                (0, _) => -(best as f64).sqrt(),
                _ => (best as f64).sqrt(),
            });
        }
    }
    Some(out)
}

/// Euclidean distance of each instance pixel to its instance's mean position
/// (floating-point centroid); background is 0.
pub fn position_distances(labels: &LabelMap) -> Vec<f64> {
    let (h, w) = labels.dims();
    let ids: BTreeSet<u32> = labels.as_slice().iter().copied().filter(|&v| v != 0).collect();
    let mut out = vec![0.0; h * w];
    for id in ids {
        let (mut n, mut sr, mut sc) = (0.0, 0.0, 0.0);
        for r in 0..h {
            for c in 0..w {
                if labels.get(r, c) == id {
                    n += 1.0;
                    sr += r as f64;
                    sc += c as f64;
                }
            }
        }
        let (mr, mc) = (sr / n, sc / n);
        for r in 0..h {
            for c in 0..w {
                if labels.get(r, c) == id {
                    out[r * w + c] = ((r as f64 - mr).powi(2) + (c as f64 - mc).powi(2)).sqrt();
                }
            }
        }
    }
    out
}

fn ids(labels: &LabelMap) -> Vec<u32> {
    let set: BTreeSet<u32> = labels.as_slice().iter().copied().filter(|&v| v != 0).collect();
    set.into_iter().collect()
}

fn area(labels: &LabelMap, id: u32) -> u64 {
    labels.as_slice().iter().filter(|&&v| v == id).count() as u64
}

/// Intersection and union of one ground-truth and one predicted instance,
/// counted pixel by pixel.
fn pair_counts(pred: &LabelMap, gt: &LabelMap, g: u32, p: u32) -> (u64, u64) {
    let (mut i, mut u) = (0, 0);
    for (&a, &b) in pred.as_slice().iter().zip(gt.as_slice()) {
        let (inp, ing) = (a == p, b == g);
        i += (inp && ing) as u64;
        u += (inp || ing) as u64;
    }
    (i, u)
}

pub fn dice(pred: &LabelMap, gt: &LabelMap) -> f64 {
    let (mut i, mut s) = (0u64, 0u64);
    for (&a, &b) in pred.as_slice().iter().zip(gt.as_slice()) {
        if a != 0 && b != 0 {
            i += 1;
        }
        s += (a != 0) as u64 + (b != 0) as u64;
    }
    if s == 0 {
        1.0
    } else {
        2.0 * i as f64 / s as f64
    }
}

pub fn aji(pred: &LabelMap, gt: &LabelMap) -> f64 {
    let (gids, pids) = (ids(gt), ids(pred));
    if gids.is_empty() && pids.is_empty() {
        return 1.0;
    }
    let (mut c, mut u) = (0u64, 0u64);
    let mut picked = BTreeSet::new();
    for &g in &gids {
        let mut best: Option<(u32, u64, u64)> = None;
        for &p in &pids {
            let (i, un) = pair_counts(pred, gt, g, p);
            // i/un > bi/bu, cross-multiplied.
            if best.is_none_or(|(_, bi, bu)| (i as u128) * (bu as u128) > (bi as u128) * (un as u128)) {
                best = Some((p, i, un));
            }
        }
        match best {
            Some((p, i, un)) => {
                c += i;
                u += un;
                picked.insert(p);
            }
            None => u += area(gt, g),
        }
    }
    for &p in &pids {
        if !picked.contains(&p) {
            u += area(pred, p);
        }
    }
    c as f64 / u as f64
}

/// Panoptic quality and its `(gt, pred, iou)` matches in ground-truth order.
pub fn pq(pred: &LabelMap, gt: &LabelMap) -> (f64, Vec<(u32, u32, f64)>) {
    let (gids, pids) = (ids(gt), ids(pred));
    let mut matches = Vec::new();
    for &g in &gids {
        for &p in &pids {
            let (i, un) = pair_counts(pred, gt, g, p);
            if 2 * i > un {
                matches.push((g, p, i as f64 / un as f64));
            }
        }
    }
    if gids.is_empty() && pids.is_empty() {
        return (1.0, matches);
    }
    let tp = matches.len() as f64;
    let fp = (pids.len() - matches.len()) as f64;
    let fn_ = (gids.len() - matches.len()) as f64;
    let mut ious: Vec<f64> = matches.iter().map(|m| m.2).collect();
    ious.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let sum: f64 = ious.iter().sum();
    (sum / (tp + 0.5 * fp + 0.5 * fn_), matches)
}

/// Central finite-difference gradient of `f` at `x`.
pub fn numeric_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + step;
            let up = f(&probe);
            probe[i] = x[i] - step;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
