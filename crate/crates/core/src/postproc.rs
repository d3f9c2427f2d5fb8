//! Test-time fusion of a predicted structure field with a three-class
//! semantic prediction into an instance label map.
//!
//! The structure field is thresholded into a narrow band around zero (the
//! predicted contours). Band pixels and contour-class pixels separate the
//! nucleus evidence into seeds; the separated pixels are then handed back to
//! the nearest seed by breadth-first growth.

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::grid::{BinaryMask, Field, Grid, LabelMap, SemanticClass, SemanticMask};
use crate::grid_core::{connected_components, Connectivity};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostprocConfig {
    /// Upper (exclusive) edge of the contour band.
    pub t_p: f64,
    /// Lower (exclusive) edge of the contour band.
    pub t_n: f64,
    pub connectivity: Connectivity,
    /// Instances with fewer pixels are removed.
    pub min_instance_area: usize,
}

impl Default for PostprocConfig {
    fn default() -> Self {
        Self {
            t_p: 0.05,
            t_n: -0.05,
            connectivity: Connectivity::Four,
            min_instance_area: 0,
        }
    }
}

impl PostprocConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_n.is_finite() && self.t_p.is_finite() && self.t_n < self.t_p) {
            return Err(Error::InvalidConfig(format!(
                "contour band needs t_n < t_p, got t_n={} t_p={}",
                self.t_n, self.t_p
            )));
        }
        Ok(())
    }
}

/// Pixels whose structure value lies strictly inside `(t_n, t_p)`.
pub fn contour_from_structure<T: Float>(structure: &Field<T>, cfg: &PostprocConfig) -> Result<BinaryMask> {
    cfg.validate()?;
    if structure.channels() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "structure field must have one channel, got {}",
            structure.channels()
        )));
    }
    let (lo, hi) = (cfg.t_n, cfg.t_p);
    let data = structure
        .as_slice()
        .iter()
        .map(|v| {
            let v = v.to_f64().unwrap_or(f64::NAN);
            lo < v && v < hi
        })
        .collect();
    Grid::from_vec(structure.height(), structure.width(), data)
}

/// Multi-source breadth-first growth of `labels` over `allowed` pixels, in
/// 4-connected steps. Pixels reached by several seeds at the same depth take the
/// smallest label.
pub(crate) fn grow_seeds(labels: &mut LabelMap, allowed: &BinaryMask) {
    let (h, w) = labels.dims();
    let mut frontier: Vec<usize> = labels
        .as_slice()
        .iter()
        .enumerate()
        .filter(|(_, &l)| l != 0)
        .map(|(i, _)| i)
        .collect();
    let mut claim = vec![0u32; h * w];
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for &i in &frontier {
            let (r, c) = (i / w, i % w);
            let label = labels.as_slice()[i];
            for &(dr, dc) in Connectivity::Four.offsets() {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nc < 0 || nr as usize >= h || nc as usize >= w {
                    continue;
                }
                let j = nr as usize * w + nc as usize;
                if labels.as_slice()[j] != 0 || !allowed.as_slice()[j] {
                    continue;
                }
                if claim[j] == 0 {
                    next.push(j);
                    claim[j] = label;
                } else {
                    claim[j] = claim[j].min(label);
                }
            }
        }
        for &j in &next {
            labels.as_mut_slice()[j] = claim[j];
        }
        frontier = next;
    }
}

/// Fuses a semantic prediction with a contour map into instances.
///
/// Nucleus evidence is every inside or contour-class pixel. The separator is
/// the contour map united with the contour class. Seeds are the connected
/// components of evidence minus separator; separator pixels on evidence are
/// regrown to the nearest seed, and undersized instances are dropped.
pub fn fuse_and_label(
    semantic: &SemanticMask,
    contour: &BinaryMask,
    cfg: &PostprocConfig,
) -> Result<LabelMap> {
    check_dims("semantic/contour", semantic.dims(), contour.dims())?;
    let (h, w) = semantic.dims();
    let evidence = semantic.map(SemanticClass::is_nucleus);
    let seeds_mask = Grid::from_fn(h, w, |r, c| {
        let separator = contour.get(r, c) || semantic.get(r, c) == SemanticClass::Contour;
        evidence.get(r, c) && !separator
    });
    let mut labels = connected_components(&seeds_mask, cfg.connectivity);
    grow_seeds(&mut labels, &evidence);

    if cfg.min_instance_area > 0 {
        let mut area = vec![0usize; labels.max_label() as usize + 1];
        for &l in labels.as_slice() {
            area[l as usize] += 1;
        }
        for l in labels.as_mut_slice() {
            if area[*l as usize] < cfg.min_instance_area {
                *l = 0;
            }
        }
    }
    Ok(labels.relabel_sequential())
}

/// Contour thresholding followed by fusion.
pub fn run_pipeline<T: Float>(
    semantic: &SemanticMask,
    structure: &Field<T>,
    cfg: &PostprocConfig,
) -> Result<LabelMap> {
    check_dims("semantic/structure", semantic.dims(), structure.dims())?;
    let contour = contour_from_structure(structure, cfg)?;
    fuse_and_label(semantic, &contour, cfg)
}
