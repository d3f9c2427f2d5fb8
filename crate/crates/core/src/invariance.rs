//! Desk-scale checks of encoder equivariance under rigid transforms, the
//! Dice bias of encoder-driven pipelines under augmentation, and the
//! relation between structure-encoding gradients and the centroid-based
//! HV / Dir encodings.

use serde::{Deserialize, Serialize};

use crate::encodings::{
    dir_encoding, direction_class, hv_encoding, position_encoding, structure_encoding, Encoder,
    EncodingConfig,
};
use crate::error::{Error, Result};
use crate::grid::{BinaryMask, DirMap, Field, Grid, LabelMap, SemanticClass, SemanticMask};
use crate::grid_core::{connected_components, semantic_from_labels, Connectivity};
use crate::metrics::dice_score;
use crate::postproc::{fuse_and_label, grow_seeds, run_pipeline, PostprocConfig};
use crate::transform::{RigidTransform, Transformable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabConfig {
    pub encoding: EncodingConfig,
    pub postproc: PostprocConfig,
    /// HV pipeline: inside pixels with divergence above this become markers.
    pub hv_divergence_threshold: f64,
    /// Position pipeline: inside pixels closer to the centroid than this (pixels) become markers.
    pub position_marker_radius: f64,
}

impl Default for LabConfig {
    fn default() -> Self {
        Self {
            encoding: EncodingConfig::default(),
            postproc: PostprocConfig::default(),
            hv_divergence_threshold: 1e-9,
            position_marker_radius: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub encoder: Encoder,
    pub transform: RigidTransform,
    /// Largest `|encode(T(x)) - T(encode(x))|`. For Dir: largest circular class distance.
    pub max_abs_error: f64,
    /// Mean absolute error over all entries. For Dir: fraction of pixels whose class differs.
    pub mean_abs_error: f64,
    pub pipeline_dice_bias: f64,
}

fn field_error(a: &Field<f64>, b: &Field<f64>) -> (f64, f64) {
    let n = a.as_slice().len().max(1) as f64;
    let mut max = 0.0f64;
    let mut sum = 0.0;
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        let d = (x - y).abs();
        max = max.max(d);
        sum += d;
    }
    (max, sum / n)
}

fn dir_error(a: &DirMap, b: &DirMap, k: u16) -> (f64, f64) {
    let k = k as i32;
    let n = a.len().max(1) as f64;
    let mut max = 0i32;
    let mut mismatched = 0usize;
    for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
        if x == y {
            continue;
        }
        mismatched += 1;
        let d = if x == 0 || y == 0 {
            k
        } else {
            let d = (x as i32 - y as i32).rem_euclid(k);
            d.min(k - d)
        };
        max = max.max(d);
    }
    (max as f64, mismatched as f64 / n)
}

/// Encoder output discrepancy `encode(T(labels))` vs `T(encode(labels))`, plus the
/// pipeline Dice bias for the same transform.
pub fn equivariance_error(
    encoder: Encoder,
    labels: &LabelMap,
    t: RigidTransform,
    cfg: &LabConfig,
) -> Result<InvarianceReport> {
    let moved = labels.transformed(t);
    let (max_abs_error, mean_abs_error) = match encoder {
        Encoder::Se => field_error(
            &structure_encoding(&moved, &cfg.encoding)?,
            &structure_encoding::<f64>(labels, &cfg.encoding)?.transformed(t),
        ),
        Encoder::Hv => field_error(&hv_encoding(&moved), &hv_encoding::<f64>(labels).transformed(t)),
        Encoder::Pos => field_error(
            &position_encoding(&moved),
            &position_encoding::<f64>(labels).transformed(t),
        ),
        Encoder::Dir => dir_error(
            &dir_encoding(&moved, &cfg.encoding)?,
            &dir_encoding(labels, &cfg.encoding)?.transformed(t),
            cfg.encoding.dir_classes,
        ),
    };
    Ok(InvarianceReport {
        encoder,
        transform: t,
        max_abs_error,
        mean_abs_error,
        pipeline_dice_bias: pipeline_bias(encoder, labels, t, cfg)?,
    })
}

/// Central-difference divergence of a two-channel (horizontal, vertical) field;
/// values beyond the border read as zero.
fn divergence(hv: &Field<f64>) -> Grid<f64> {
    let (h, w) = hv.dims();
    let at = |r: isize, c: isize, k: usize| {
        if r < 0 || c < 0 || r as usize >= h || c as usize >= w {
            0.0
        } else {
            hv.get(r as usize, c as usize, k)
        }
    };
    Grid::from_fn(h, w, |r, c| {
        let (r, c) = (r as isize, c as isize);
        (at(r, c + 1, 0) - at(r, c - 1, 0)) / 2.0 + (at(r + 1, c, 1) - at(r - 1, c, 1)) / 2.0
    })
}

/// Seeds from a marker mask restricted to inside-class pixels, regrown over the
/// nucleus evidence.
fn marker_pipeline(semantic: &SemanticMask, markers: &BinaryMask, cfg: &PostprocConfig) -> LabelMap {
    let seeds = Grid::from_fn(semantic.height(), semantic.width(), |r, c| {
        markers.get(r, c) && semantic.get(r, c) == SemanticClass::Inside
    });
    let mut labels = connected_components(&seeds, cfg.connectivity);
    grow_seeds(&mut labels, &semantic.map(SemanticClass::is_nucleus));
    labels.relabel_sequential()
}

/// HoverNet-style variant: inside pixels whose HV divergence exceeds the
/// threshold (offsets pointing away from a centre) are markers.
pub fn hv_pipeline(semantic: &SemanticMask, hv: &Field<f64>, cfg: &LabConfig) -> Result<LabelMap> {
    crate::error::check_dims("semantic/hv", semantic.dims(), hv.dims())?;
    let div = divergence(hv);
    let markers = div.map(|d| d > cfg.hv_divergence_threshold);
    Ok(marker_pipeline(semantic, &markers, &cfg.postproc))
}

/// Direction-map variant: evidence pixels where a 4-neighbour's class differs by
/// two or more steps become separators.
pub fn dir_pipeline(semantic: &SemanticMask, dir: &DirMap, cfg: &LabConfig) -> Result<LabelMap> {
    crate::error::check_dims("semantic/dir", semantic.dims(), dir.dims())?;
    let k = cfg.encoding.dir_classes as i32;
    let separator = Grid::from_fn(dir.height(), dir.width(), |r, c| {
        let a = dir.get(r, c);
        if a == 0 {
            return false;
        }
        Connectivity::Four.offsets().iter().any(|&(dr, dc)| {
            match dir.get_signed(r as isize + dr, c as isize + dc) {
                Some(b) if b != 0 => {
                    let d = (a as i32 - b as i32).rem_euclid(k);
                    d.min(k - d) >= 2
                }
                _ => false,
            }
        })
    });
    fuse_and_label(semantic, &separator, &cfg.postproc)
}

/// Centroid-marker variant: inside pixels within `position_marker_radius` of
/// their centroid seed the instances.
pub fn position_pipeline(semantic: &SemanticMask, pos: &Field<f64>, cfg: &LabConfig) -> Result<LabelMap> {
    crate::error::check_dims("semantic/position", semantic.dims(), pos.dims())?;
    let markers = pos.channel(0).map(|d| d <= cfg.position_marker_radius);
    Ok(marker_pipeline(semantic, &markers, &cfg.postproc))
}

fn encoder_pipeline(
    encoder: Encoder,
    semantic: &SemanticMask,
    labels: &LabelMap,
    t: RigidTransform,
    cfg: &LabConfig,
) -> Result<LabelMap> {
    let sem = semantic.transformed(t);
    match encoder {
        Encoder::Se => run_pipeline(
            &sem,
            &structure_encoding::<f64>(labels, &cfg.encoding)?.transformed(t),
            &cfg.postproc,
        ),
        Encoder::Hv => hv_pipeline(&sem, &hv_encoding::<f64>(labels).transformed(t), cfg),
        Encoder::Dir => dir_pipeline(&sem, &dir_encoding(labels, &cfg.encoding)?.transformed(t), cfg),
        Encoder::Pos => position_pipeline(&sem, &position_encoding::<f64>(labels).transformed(t), cfg),
    }
}

/// Dice on transformed inputs minus Dice on the originals, with ground-truth
/// encodings standing in for network predictions. Encodings are computed on
/// the original labels and then moved with the grid, as an augmentation would.
pub fn pipeline_bias(encoder: Encoder, labels: &LabelMap, t: RigidTransform, cfg: &LabConfig) -> Result<f64> {
    cfg.postproc.validate()?;
    let semantic = semantic_from_labels(labels);
    let base = encoder_pipeline(encoder, &semantic, labels, RigidTransform::Identity, cfg)?;
    let moved = encoder_pipeline(encoder, &semantic, labels, t, cfg)?;
    Ok(dice_score(&moved, &labels.transformed(t))? - dice_score(&base, labels)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationReport {
    pub interior_pixels: usize,
    /// Pearson correlation of the horizontal SE gradient with HV's horizontal channel.
    pub grad_h_vs_hv_h: f64,
    pub grad_v_vs_hv_v: f64,
    /// The same correlations against the outward (negated) SE gradient, which
    /// shares HV's centrifugal orientation.
    pub outward_h_vs_hv_h: f64,
    pub outward_v_vs_hv_v: f64,
    /// Fraction of interior pixels whose Dir class equals the quantized angle of
    /// the outward SE gradient (equivalently: centripetal direction vs. gradient).
    pub dir_agreement: f64,
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.is_empty() {
        return 0.0;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Compares central-difference gradients of the structure encoding with the
/// HV and Dir encodings over instance interiors (inside-class pixels, whose
/// 8-neighbours all belong to the same instance).
pub fn relation_check(labels: &LabelMap, cfg: &EncodingConfig) -> Result<RelationReport> {
    let semantic = semantic_from_labels(labels);
    let inside = |r: isize, c: isize| semantic.get_signed(r, c) == Some(SemanticClass::Inside);
    let has_block = semantic.iter_pixels().any(|(r, c, _)| {
        let (r, c) = (r as isize, c as isize);
        (-1..=1).all(|dr| (-1..=1).all(|dc| inside(r + dr, c + dc)))
    });
    if !has_block {
        return Err(Error::TooSmallInstance);
    }

    let se: Field<f64> = structure_encoding(labels, cfg)?;
    let hv: Field<f64> = hv_encoding(labels);
    let dir = dir_encoding(labels, cfg)?;
    let (mut gh, mut gv, mut hh, mut hvv) = (vec![], vec![], vec![], vec![]);
    let mut agree = 0usize;
    for (r, c, class) in semantic.iter_pixels() {
        if class != SemanticClass::Inside {
            continue;
        }
        let d_h = (se.get(r, c + 1, 0) - se.get(r, c - 1, 0)) / 2.0;
        let d_v = (se.get(r + 1, c, 0) - se.get(r - 1, c, 0)) / 2.0;
        gh.push(d_h);
        gv.push(d_v);
        hh.push(hv.get(r, c, 0));
        hvv.push(hv.get(r, c, 1));
        let outward = if d_h == 0.0 && d_v == 0.0 {
            1
        } else {
            direction_class(-d_v, -d_h, cfg.dir_classes)
        };
        agree += (outward == dir.get(r, c)) as usize;
    }
    let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
    Ok(RelationReport {
        interior_pixels: gh.len(),
        grad_h_vs_hv_h: pearson(&gh, &hh),
        grad_v_vs_hv_v: pearson(&gv, &hvv),
        outward_h_vs_hv_h: pearson(&neg(&gh), &hh),
        outward_v_vs_hv_v: pearson(&neg(&gv), &hvv),
        dir_agreement: agree as f64 / gh.len() as f64,
    })
}
