//! Segmentation and regression losses with analytic gradients with respect
//! to the prediction, plus the multi-scale and total aggregators.
//!
//! All per-pixel losses are means over pixels, so values at different
//! pyramid scales are comparable.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::grid::{Field, SemanticMask};
use crate::grid_core::{downsample_field, downsample_semantic};

/// Per-pixel class probabilities, `channels == num_classes`.
pub type ProbField<T> = Field<T>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Lower clamp on the true-class probability inside the log.
    pub epsilon_ce: f64,
    /// Additive smoothing in the Dice numerator and denominator.
    pub epsilon_dice: f64,
    /// Decoder blocks that contribute to the multi-scale losses.
    pub scale_blocks: BTreeSet<u32>,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            epsilon_ce: 1e-12,
            epsilon_dice: 1e-6,
            scale_blocks: [2, 3, 4].into_iter().collect(),
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_ce > 0.0 && self.epsilon_dice > 0.0) {
            return Err(Error::InvalidConfig("loss epsilons must be positive".into()));
        }
        if !(self.lambda1.is_finite() && self.lambda2.is_finite()) {
            return Err(Error::InvalidConfig("loss weights must be finite".into()));
        }
        Ok(())
    }
}

fn constant<T: Float>(v: f64) -> T {
    T::from(v).expect("constant representable in scalar type")
}

fn check_target<T: Float>(pred: &ProbField<T>, target: &SemanticMask) -> Result<()> {
    check_dims("prediction/target", pred.dims(), target.dims())?;
    if let Some(bad) = target.as_slice().iter().find(|c| c.index() >= pred.channels()) {
        return Err(Error::DimensionMismatch(format!(
            "target class {} but prediction has {} channels",
            bad.index(),
            pred.channels()
        )));
    }
    Ok(())
}

/// Mean negative log-likelihood of the target class.
pub fn cross_entropy<T: Float>(
    pred: &ProbField<T>,
    target: &SemanticMask,
    cfg: &LossConfig,
) -> Result<(T, ProbField<T>)> {
    check_target(pred, target)?;
    let eps: T = constant(cfg.epsilon_ce);
    let n = T::from(pred.pixels()).expect("pixel count");
    let mut loss = T::zero();
    let mut grad = Field::zeros(pred.height(), pred.width(), pred.channels());
    for (idx, class) in target.as_slice().iter().enumerate() {
        let k = class.index();
        let p = pred.vector(idx)[k];
        loss = loss - p.max(eps).ln();
        if p > eps {
            grad.vector_mut(idx)[k] = -(n * p).recip();
        }
    }
    Ok((loss / n, grad))
}

/// `1 - mean_c D_c` with `D_c = (2 sum p g + eps) / (sum p + sum g + eps)`,
/// averaged over every channel including background.
pub fn dice_loss<T: Float>(
    pred: &ProbField<T>,
    target: &SemanticMask,
    cfg: &LossConfig,
) -> Result<(T, ProbField<T>)> {
    check_target(pred, target)?;
    let eps: T = constant(cfg.epsilon_dice);
    let two: T = constant(2.0);
    let classes = pred.channels();
    let mut inter = vec![T::zero(); classes];
    let mut psum = vec![T::zero(); classes];
    let mut gsum = vec![T::zero(); classes];
    for (idx, class) in target.as_slice().iter().enumerate() {
        for (c, &p) in pred.vector(idx).iter().enumerate() {
            psum[c] = psum[c] + p;
        }
        let k = class.index();
        inter[k] = inter[k] + pred.vector(idx)[k];
        gsum[k] = gsum[k] + T::one();
    }
    let cn = T::from(classes).expect("class count");
    let mut mean_d = T::zero();
    let mut num = vec![T::zero(); classes];
    let mut den = vec![T::zero(); classes];
    for c in 0..classes {
        num[c] = two * inter[c] + eps;
        den[c] = psum[c] + gsum[c] + eps;
        mean_d = mean_d + num[c] / den[c];
    }
    mean_d = mean_d / cn;

    let mut grad = Field::zeros(pred.height(), pred.width(), classes);
    for (idx, class) in target.as_slice().iter().enumerate() {
        let k = class.index();
        let g = grad.vector_mut(idx);
        for c in 0..classes {
            let gt = if c == k { T::one() } else { T::zero() };
            let dd = (two * gt * den[c] - num[c]) / (den[c] * den[c]);
            g[c] = -dd / cn;
        }
    }
    Ok((T::one() - mean_d, grad))
}

/// Mean squared error over all entries; gradient `2 (pred - target) / N`.
pub fn mse<T: Float>(pred: &Field<T>, target: &Field<T>) -> Result<(T, Field<T>)> {
    check_dims("mse", pred.dims(), target.dims())?;
    if pred.channels() != target.channels() {
        return Err(Error::DimensionMismatch(format!(
            "mse: {} vs {} channels",
            pred.channels(),
            target.channels()
        )));
    }
    let n = T::from(pred.as_slice().len()).expect("entry count");
    let two: T = constant(2.0);
    let mut loss = T::zero();
    let mut grad = Field::zeros(pred.height(), pred.width(), pred.channels());
    for ((g, &p), &t) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(pred.as_slice())
        .zip(target.as_slice())
    {
        let d = p - t;
        loss = loss + d * d;
        *g = two * d / n;
    }
    Ok((loss / n, grad))
}

/// Sum over configured blocks of cross-entropy plus Dice loss.
pub fn semantic_loss<T: Float>(
    preds: &BTreeMap<u32, ProbField<T>>,
    targets: &BTreeMap<u32, SemanticMask>,
    cfg: &LossConfig,
) -> Result<T> {
    let mut total = T::zero();
    for &block in &cfg.scale_blocks {
        let (Some(p), Some(t)) = (preds.get(&block), targets.get(&block)) else {
            return Err(Error::MissingScale(block));
        };
        total = total + cross_entropy(p, t, cfg)?.0 + dice_loss(p, t, cfg)?.0;
    }
    Ok(total)
}

/// Sum over configured blocks of the structure-map MSE.
pub fn structure_loss<T: Float>(
    preds: &BTreeMap<u32, Field<T>>,
    targets: &BTreeMap<u32, Field<T>>,
    cfg: &LossConfig,
) -> Result<T> {
    let mut total = T::zero();
    for &block in &cfg.scale_blocks {
        let (Some(p), Some(t)) = (preds.get(&block), targets.get(&block)) else {
            return Err(Error::MissingScale(block));
        };
        total = total + mse(p, t)?.0;
    }
    Ok(total)
}

/// Position-map loss of the two branch heads against one target.
pub fn position_loss<T: Float>(
    pred_semantic: &Field<T>,
    pred_structure: &Field<T>,
    target: &Field<T>,
) -> Result<T> {
    Ok(mse(pred_semantic, target)?.0 + mse(pred_structure, target)?.0)
}

pub fn total_loss<T: Float>(semantic: T, structure: T, position: T, cfg: &LossConfig) -> T {
    semantic + constant::<T>(cfg.lambda1) * structure + constant::<T>(cfg.lambda2) * position
}

/// Semantic targets for every configured block, halving resolution per block
/// below `finest_block`.
pub fn semantic_pyramid(
    finest: &SemanticMask,
    finest_block: u32,
    cfg: &LossConfig,
) -> Result<BTreeMap<u32, SemanticMask>> {
    let mut out = BTreeMap::new();
    for &block in &cfg.scale_blocks {
        let factor = pyramid_factor(finest_block, block)?;
        let t = if factor == 1 {
            finest.clone()
        } else {
            downsample_semantic(finest, factor)?
        };
        out.insert(block, t);
    }
    Ok(out)
}

/// Block-mean structure targets for every configured block.
pub fn field_pyramid<T: Float>(
    finest: &Field<T>,
    finest_block: u32,
    cfg: &LossConfig,
) -> Result<BTreeMap<u32, Field<T>>> {
    let mut out = BTreeMap::new();
    for &block in &cfg.scale_blocks {
        let factor = pyramid_factor(finest_block, block)?;
        out.insert(block, downsample_field(finest, factor)?);
    }
    Ok(out)
}

fn pyramid_factor(finest_block: u32, block: u32) -> Result<usize> {
    if block > finest_block {
        return Err(Error::InvalidConfig(format!(
            "block {block} is finer than the finest block {finest_block}"
        )));
    }
    Ok(1usize << (finest_block - block))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, SemanticClass};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_probs(rng: &mut ChaCha8Rng, h: usize, w: usize, k: usize) -> ProbField<f64> {
        let mut f = Field::from_fn(h, w, k, |_, _, _| rng.gen_range(0.05..1.0));
        for idx in 0..h * w {
            let v = f.vector_mut(idx);
            let s: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= s);
        }
        f
    }

    fn random_target(rng: &mut ChaCha8Rng, h: usize, w: usize) -> SemanticMask {
        Grid::from_fn(h, w, |_, _| SemanticClass::ALL[rng.gen_range(0..3)])
    }

    fn one_hot(t: &SemanticMask) -> ProbField<f64> {
        Field::from_fn(t.height(), t.width(), 3, |r, c, k| {
            if t.get(r, c).index() == k {
                1.0
            } else {
                0.0
            }
        })
    }

    fn fd_check(f: impl Fn(&Field<f64>) -> f64, x: &Field<f64>, analytic: &Field<f64>) {
        let h = 1e-5;
        for i in 0..x.as_slice().len() {
            let mut xp = x.clone();
            xp.as_mut_slice()[i] += h;
            let mut xm = x.clone();
            xm.as_mut_slice()[i] -= h;
            let numeric = (f(&xp) - f(&xm)) / (2.0 * h);
            let a = analytic.as_slice()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            assert!(rel < 1e-4, "entry {i}: analytic {a}, numeric {numeric}");
        }
    }

    #[test]
    fn ce_examples() {
        let cfg = LossConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = random_target(&mut rng, 4, 4);
        let (l, _) = cross_entropy(&one_hot(&t), &t, &cfg).unwrap();
        assert_eq!(l, 0.0);
        let uni = Field::filled(4, 4, 3, 1.0 / 3.0);
        let (l, _) = cross_entropy(&uni, &t, &cfg).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-12);
        let p = random_probs(&mut rng, 4, 4, 3);
        let (_, g) = cross_entropy(&p, &t, &cfg).unwrap();
        fd_check(|x| cross_entropy(x, &t, &cfg).unwrap().0, &p, &g);
        assert!(cross_entropy(&Field::filled(4, 4, 2, 0.5), &t, &cfg).is_err());
    }

    #[test]
    fn ce_clamps_zero_probability() {
        let cfg = LossConfig::default();
        let t = Grid::filled(1, 1, SemanticClass::Inside);
        let p = Field::from_vec(1, 1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        let (l, g) = cross_entropy(&p, &t, &cfg).unwrap();
        assert!((l + 1e-12f64.ln()).abs() < 1e-9);
        assert!(l.is_finite() && g.is_finite());
    }

    #[test]
    fn dice_examples() {
        let cfg = LossConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_target(&mut rng, 4, 4);
        let (l, _) = dice_loss(&one_hot(&t), &t, &cfg).unwrap();
        assert!(l.abs() < 1e-6);

        // Two classes, GT covers half the pixels, prediction 0.5 everywhere.
        let t = Grid::from_fn(4, 4, |r, _| {
            if r < 2 {
                SemanticClass::Inside
            } else {
                SemanticClass::Background
            }
        });
        let p = Field::filled(4, 4, 2, 0.5);
        let (l, _) = dice_loss(&p, &t, &cfg).unwrap();
        assert!((l - 0.5).abs() < 1e-6);

        let t = random_target(&mut rng, 4, 4);
        let p = random_probs(&mut rng, 4, 4, 3);
        let (l, g) = dice_loss(&p, &t, &cfg).unwrap();
        assert!((0.0..=1.0).contains(&l));
        fd_check(|x| dice_loss(x, &t, &cfg).unwrap().0, &p, &g);
    }

    #[test]
    fn mse_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Field::<f64>::from_fn(4, 4, 2, |_, _, _| rng.gen_range(-1.0..1.0));
        let b = Field::<f64>::from_fn(4, 4, 2, |_, _, _| rng.gen_range(-1.0..1.0));
        assert_eq!(mse(&a, &a).unwrap().0, 0.0);
        assert!((mse(&a.map(|x| x + 1.0), &a).unwrap().0 - 1.0).abs() < 1e-12);
        assert_eq!(mse(&a, &b).unwrap().0, mse(&b, &a).unwrap().0);
        let (_, g) = mse(&a, &b).unwrap();
        fd_check(|x| mse(x, &b).unwrap().0, &a, &g);
        assert!(mse(&a, &Field::zeros(4, 4, 1)).is_err());
    }

    #[test]
    fn multiscale_sums() {
        let cfg = LossConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let finest = random_target(&mut rng, 8, 8);
        let targets = semantic_pyramid(&finest, 4, &cfg).unwrap();
        assert_eq!(targets[&2].dims(), (2, 2));
        let perfect: BTreeMap<u32, _> = targets.iter().map(|(&k, t)| (k, one_hot(t))).collect();
        assert!(semantic_loss(&perfect, &targets, &cfg).unwrap() < 1e-5);

        let mut mixed = perfect.clone();
        let mut expected = 0.0;
        for b in [2, 3] {
            let t = &targets[&b];
            let u = Field::filled(t.height(), t.width(), 3, 1.0 / 3.0);
            expected += 3f64.ln() + dice_loss(&u, t, &cfg).unwrap().0;
            mixed.insert(b, u);
        }
        let got = semantic_loss(&mixed, &targets, &cfg).unwrap();
        assert!((got - expected - dice_loss(&perfect[&4], &targets[&4], &cfg).unwrap().0).abs() < 1e-12);

        let single = LossConfig {
            scale_blocks: [3].into_iter().collect(),
            ..cfg.clone()
        };
        let t = &targets[&3];
        let p = &mixed[&3];
        assert_eq!(
            semantic_loss(&mixed, &targets, &single).unwrap(),
            cross_entropy(p, t, &cfg).unwrap().0 + dice_loss(p, t, &cfg).unwrap().0
        );

        let mut missing = targets.clone();
        missing.remove(&3);
        assert!(matches!(
            semantic_loss(&perfect, &missing, &cfg),
            Err(Error::MissingScale(3))
        ));
    }

    #[test]
    fn structure_and_position_losses() {
        let cfg = LossConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let finest = Field::<f64>::from_fn(8, 8, 1, |_, _, _| rng.gen_range(-1.0..1.0));
        let targets = field_pyramid(&finest, 4, &cfg).unwrap();
        assert_eq!(structure_loss(&targets, &targets, &cfg).unwrap(), 0.0);
        let shifted: BTreeMap<u32, _> = targets.iter().map(|(&k, t)| (k, t.map(|x| x + 1.0))).collect();
        assert!((structure_loss(&shifted, &targets, &cfg).unwrap() - 3.0).abs() < 1e-12);

        let a = finest.map(|x| x * 0.5);
        assert_eq!(position_loss(&finest, &finest, &finest).unwrap(), 0.0);
        assert!((position_loss(&finest.map(|x| x + 1.0), &finest, &finest).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(
            position_loss(&a, &finest, &finest.map(|x| -x)).unwrap(),
            mse(&a, &finest.map(|x| -x)).unwrap().0 + mse(&finest, &finest.map(|x| -x)).unwrap().0
        );
    }

    #[test]
    fn total_loss_weights() {
        let cfg = LossConfig::default();
        assert_eq!(total_loss(1.0, 2.0, 3.0, &cfg), 6.0);
        assert_eq!(total_loss(4.5, 0.0, 0.0, &cfg), 4.5);
        let cfg = LossConfig {
            lambda1: 0.5,
            lambda2: 2.0,
            ..cfg
        };
        assert_eq!(total_loss(1.0f32, 2.0, 3.0, &cfg), 8.0);
    }
}
