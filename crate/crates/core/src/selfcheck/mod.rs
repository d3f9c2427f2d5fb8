//! Built-in verification suites comparing production code against the
//! reference implementations in [`oracle`] on seeded fixtures.

pub mod cases;
pub mod oracle;

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::encodings::{position_encoding, structure_distances, structure_encoding, Encoder, EncodingConfig};
use crate::error::Result;
use crate::fixtures::{random_map, relation_disks, standard_set};
use crate::grid::{Field, LabelMap, SemanticClass, SemanticMask};
use crate::grid_core::{extract_contour, semantic_from_labels};
use crate::invariance::{equivariance_error, relation_check, LabConfig};
use crate::losses::{cross_entropy, dice_loss, mse, LossConfig};
use crate::metrics::{aji_score, dice_score, pq_score};
use crate::network::{
    criss_cross_attention, criss_cross_pass, full_attention, sga_criss_cross, sga_full, ConvWeights,
    QueryKeyProjection,
};
use crate::postproc::{contour_from_structure, run_pipeline, PostprocConfig};
use crate::transform::RigidTransform;

/// Tolerances and sizes used by the suites.
pub const DISTANCE_TOLERANCE: f64 = 1e-9;
pub const FD_STEP: f64 = 1e-5;
pub const FD_RELATIVE_TOLERANCE: f64 = 1e-4;
/// Denominator floor for relative gradient errors. Central differences at
/// `FD_STEP` carry roughly `f64::EPSILON / FD_STEP` (about 2e-11) absolute
/// noise on an O(1) loss, so gradients below about 2e-7 cannot be resolved to
/// 1e-4 relative accuracy; smaller entries are measured against this floor.
pub const FD_FLOOR: f64 = 1e-6;
pub const STOCHASTIC_TOLERANCE: f64 = 1e-6;
pub const MIN_CORRELATION: f64 = 0.9;
pub const MIN_DIR_AGREEMENT: f64 = 0.85;

#[derive(Debug, Clone, Copy, Default)]
pub struct CheckOptions {
    /// Negative control: perturb one production distance before comparison so
    /// the encoding oracle suite must fail.
    pub inject_fault: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

type Outcome = Result<(bool, String)>;

fn timed(id: usize, name: &'static str, f: impl FnOnce() -> Outcome) -> SuiteResult {
    let start = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    SuiteResult {
        id,
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Suite 1: production SE and position distances vs exhaustive search.
pub fn encoding_oracle(fixtures: &[LabelMap], inject_fault: bool) -> Outcome {
    let mut worst = 0.0f64;
    for (n, labels) in fixtures.iter().enumerate() {
        let expect = oracle::structure_distances(labels);
        let got = structure_distances(labels);
        let (Some(expect), Some(got)) = (expect, got) else {
            return Ok((false, format!("fixture {n}: empty-map disagreement")));
        };
        let mut got = got.as_slice().to_vec();
        if inject_fault && n == 0 {
            let mid = got.len() / 2;
            got[mid] += 1.0;
        }
        for (a, b) in got.iter().zip(&expect) {
            worst = worst.max((a - b).abs());
        }
        let pos: Field<f64> = position_encoding(labels);
        for (a, b) in pos.as_slice().iter().zip(oracle::position_distances(labels)) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok((
        worst <= DISTANCE_TOLERANCE,
        format!("{} fixtures, max deviation {worst:.3e}", fixtures.len()),
    ))
}

/// Suite 2: SE and position are exactly equivariant; HV is not.
pub fn equivariance(fixtures: &[LabelMap]) -> Outcome {
    let cfg = LabConfig::default();
    let mut exact_failures = 0;
    let mut hv_failures = 0;
    let mut hv_min = f64::INFINITY;
    for labels in fixtures {
        for t in RigidTransform::STANDARD {
            for e in [Encoder::Se, Encoder::Pos] {
                if equivariance_error(e, labels, t, &cfg)?.max_abs_error != 0.0 {
                    exact_failures += 1;
                }
            }
        }
        let mut hv_best = 0.0f64;
        for t in RigidTransform::STANDARD {
            hv_best = hv_best.max(equivariance_error(Encoder::Hv, labels, t, &cfg)?.max_abs_error);
        }
        hv_min = hv_min.min(hv_best);
        if hv_best <= 0.1 {
            hv_failures += 1;
        }
    }
    Ok((
        exact_failures == 0 && hv_failures == 0,
        format!(
            "{} fixtures x 6 transforms: SE/pos nonzero cells {exact_failures}; \
             HV fixtures without error > 0.1: {hv_failures} (smallest best error {hv_min:.3})",
            fixtures.len()
        ),
    ))
}

/// True when `a` and `b` describe the same partition (bijective relabeling).
pub fn same_up_to_relabel(a: &LabelMap, b: &LabelMap) -> bool {
    let mut fwd = std::collections::HashMap::new();
    let mut back = std::collections::HashMap::new();
    a.dims() == b.dims()
        && a.as_slice().iter().zip(b.as_slice()).all(|(&x, &y)| {
            (x == 0) == (y == 0) && *fwd.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x
        })
}

/// Suite 3: ground truth through encoding and post-processing comes back intact.
pub fn round_trip(fixtures: &[LabelMap]) -> Outcome {
    let mut failures = 0;
    for labels in fixtures {
        let se: Field<f64> = structure_encoding(labels, &EncodingConfig::default())?;
        let out = run_pipeline(&semantic_from_labels(labels), &se, &PostprocConfig::default())?;
        if aji_score(&out, labels)? != 1.0 || !same_up_to_relabel(&out, labels) {
            failures += 1;
        }
    }
    Ok((
        failures == 0,
        format!(
            "{}/{} fixtures reproduced",
            fixtures.len() - failures,
            fixtures.len()
        ),
    ))
}

/// Suite 4: default thresholds recover the contour set from a ground-truth SE field.
pub fn postproc_defaults(fixtures: &[LabelMap]) -> Outcome {
    let mut failures = 0;
    for labels in fixtures {
        let se: Field<f64> = structure_encoding(labels, &EncodingConfig::default())?;
        let got = contour_from_structure(&se, &PostprocConfig::default())?;
        let mut expect = vec![false; labels.len()];
        for id in labels.instance_ids() {
            for (e, &on) in expect.iter_mut().zip(extract_contour(labels, id)?.as_slice()) {
                *e |= on;
            }
        }
        if got.as_slice() != expect.as_slice() {
            failures += 1;
        }
    }
    Ok((
        failures == 0,
        format!("{}/{} fixtures exact", fixtures.len() - failures, fixtures.len()),
    ))
}

fn random_probabilities(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> Field<f64> {
    let mut f = Field::from_fn(h, w, c, |_, _, _| rng.gen_range(-2.0f64..2.0).exp());
    for idx in 0..h * w {
        let v = f.vector_mut(idx);
        let s: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= s);
    }
    f
}

fn random_target(rng: &mut ChaCha8Rng, h: usize, w: usize) -> SemanticMask {
    SemanticMask::from_fn(h, w, |_, _| SemanticClass::ALL[rng.gen_range(0..3)])
}

/// Largest relative error and the number of entries below the floor.
fn gradient_gap(
    analytic: &[f64],
    x: &Field<f64>,
    loss: impl Fn(&Field<f64>) -> Result<f64>,
) -> Result<(f64, usize)> {
    let eval = |v: &[f64]| {
        let f = Field::from_vec(x.height(), x.width(), x.channels(), v.to_vec()).expect("same shape");
        loss(&f).expect("loss evaluates")
    };
    let numeric = oracle::numeric_gradient(eval, x.as_slice(), FD_STEP);
    let tiny = analytic
        .iter()
        .zip(&numeric)
        .filter(|(a, n)| a.abs().max(n.abs()) < FD_FLOOR)
        .count();
    let worst = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| oracle::relative_error(a, n, FD_FLOOR))
        .fold(0.0, f64::max);
    Ok((worst, tiny))
}

/// Suite 5: analytic loss gradients vs central differences, 100 seeds per loss.
pub fn gradients(seeds: u64) -> Outcome {
    let cfg = LossConfig::default();
    let mut worst = [0.0f64; 3];
    let mut tiny = 0;
    let mut track = |k: usize, (e, t): (f64, usize)| {
        worst[k] = worst[k].max(e);
        tiny += t;
    };
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, w) = (rng.gen_range(2..6), rng.gen_range(2..6));
        let p = random_probabilities(&mut rng, h, w, 3);
        let t = random_target(&mut rng, h, w);
        let (_, g) = cross_entropy(&p, &t, &cfg)?;
        track(
            0,
            gradient_gap(g.as_slice(), &p, |x| Ok(cross_entropy(x, &t, &cfg)?.0))?,
        );
        let (_, g) = dice_loss(&p, &t, &cfg)?;
        track(
            1,
            gradient_gap(g.as_slice(), &p, |x| Ok(dice_loss(x, &t, &cfg)?.0))?,
        );
        let c = rng.gen_range(1..4);
        let pred = Field::from_fn(h, w, c, |_, _, _| rng.gen_range(-1.0..1.0));
        let target = Field::from_fn(h, w, c, |_, _, _| rng.gen_range(-1.0..1.0));
        let (_, g) = mse(&pred, &target)?;
        track(2, gradient_gap(g.as_slice(), &pred, |x| Ok(mse(x, &target)?.0))?);
    }
    // Entries that are exactly zero analytically (CE off-target) count as tiny too.
    Ok((
        worst.iter().all(|&e| e < FD_RELATIVE_TOLERANCE),
        format!(
            "{seeds} seeds; max relative error CE {:.2e}, Dice {:.2e}, MSE {:.2e} \
             ({tiny} entries below the {FD_FLOOR:e} floor)",
            worst[0], worst[1], worst[2]
        ),
    ))
}

fn random_field<T: num_traits::Float>(
    rng: &mut ChaCha8Rng,
    h: usize,
    w: usize,
    c: usize,
    scale: f64,
) -> Field<T> {
    Field::from_fn(h, w, c, |_, _, _| {
        T::from(rng.gen_range(-scale..scale)).expect("finite")
    })
}

fn max_row_deviation<T: num_traits::Float>(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (h, w, c) = (rng.gen_range(1..7), rng.gen_range(1..7), rng.gen_range(1..5));
    let q: Field<T> = random_field(rng, h, w, c, 3.0);
    let k: Field<T> = random_field(rng, h, w, c, 3.0);
    let full = full_attention(&q, &k)?;
    let cross = criss_cross_attention(&q, &k)?;
    let mut worst = 0.0f64;
    for m in 0..h * w {
        for row in [full.row(m), cross.weights(m)] {
            let s = row
                .iter()
                .fold(T::zero(), |a, &b| a + b)
                .to_f64()
                .expect("finite");
            worst = worst.max((s - 1.0).abs());
        }
    }
    Ok(worst)
}

/// Suite 6: row-stochastic attention, two-pass reachability, line-grid agreement.
pub fn attention(trials: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xa77e);
    let mut stochastic = 0.0f64;
    for _ in 0..trials {
        stochastic = stochastic.max(max_row_deviation::<f64>(&mut rng)?);
        stochastic = stochastic.max(max_row_deviation::<f32>(&mut rng)?);
    }

    let mut reach_ok = true;
    for _ in 0..trials.min(20) {
        let (h, w) = (rng.gen_range(2..7), rng.gen_range(2..7));
        let q: Field<f64> = random_field(&mut rng, h, w, 2, 1.0);
        let k: Field<f64> = random_field(&mut rng, h, w, 2, 1.0);
        let src = rng.gen_range(0..h * w);
        let mut v = Field::zeros(h, w, 1);
        v.as_mut_slice()[src] = 1.0;
        let proj = QueryKeyProjection {
            query: ConvWeights::pointwise(
                1,
                2,
                (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                vec![0.0; 2],
            )?,
            key: ConvWeights::pointwise(
                1,
                2,
                (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                vec![0.0; 2],
            )?,
        };
        let one = criss_cross_pass(&q, &k, &v)?;
        let (two, _) = sga_criss_cross(&q, &k, &v, &v, 2, &proj)?;
        let (sr, sc) = (src / w, src % w);
        for m in 0..h * w {
            let on_cross = m / w == sr || m % w == sc;
            reach_ok &= (one.as_slice()[m] > 0.0) == on_cross;
            reach_ok &= two.as_slice()[m] > 0.0;
        }
    }

    let mut lines_ok = true;
    for n in 1..=8 {
        for (h, w) in [(1, n), (n, 1)] {
            let q: Field<f64> = random_field(&mut rng, h, w, 3, 2.0);
            let k: Field<f64> = random_field(&mut rng, h, w, 3, 2.0);
            let v: Field<f64> = random_field(&mut rng, h, w, 2, 1.0);
            let (_, g, _) = sga_full(&q, &k, &v, &v)?;
            lines_ok &= g == criss_cross_pass(&q, &k, &v)?;
        }
    }
    Ok((
        stochastic <= STOCHASTIC_TOLERANCE && reach_ok && lines_ok,
        format!(
            "row-sum deviation {stochastic:.2e}; two-pass reachability {}; 1xN/Nx1 agreement {}",
            if reach_ok { "ok" } else { "FAILED" },
            if lines_ok { "exact" } else { "FAILED" }
        ),
    ))
}

/// Prediction for metric comparisons derived from `gt`: shifted, partly
/// merged and partly dropped, or an unrelated map of the same size.
pub fn metric_pair(seed: u64) -> Result<(LabelMap, LabelMap)> {
    let gt = random_map(seed, 64)?;
    let (h, w) = gt.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9));
    let pred = match seed % 3 {
        0 => {
            let (dr, dc) = (rng.gen_range(-1i64..=1), rng.gen_range(-1i64..=1));
            let max = gt.max_label().max(1);
            let remap: Vec<u32> = (0..=max)
                .map(|id| match rng.gen_range(0..6) {
                    _ if id == 0 => 0,
                    0 => 0,
                    1 => rng.gen_range(1..=max),
                    _ => id + 100,
                })
                .collect();
            LabelMap::from_fn(h, w, |r, c| {
                gt.get_signed(r as isize - dr as isize, c as isize - dc as isize)
                    .map_or(0, |id| remap[id as usize])
            })
        }
        1 => {
            let other = random_map(seed + 1_000_000, 64)?;
            LabelMap::from_fn(h, w, |r, c| other.get_signed(r as isize, c as isize).unwrap_or(0))
        }
        _ => gt.map(|id| if id == 0 { 0 } else { 1000 - id }),
    };
    Ok((pred, gt))
}

/// Suite 7: production metrics vs pixel-loop oracles, plus the hand-derived cases.
pub fn metrics_oracle(pairs: u64) -> Outcome {
    let mut mismatches = 0;
    for seed in 0..pairs {
        let (pred, gt) = metric_pair(seed)?;
        let (pq, matches) = pq_score(&pred, &gt)?;
        if dice_score(&pred, &gt)? != oracle::dice(&pred, &gt)
            || aji_score(&pred, &gt)? != oracle::aji(&pred, &gt)
            || (pq, matches) != oracle::pq(&pred, &gt)
        {
            mismatches += 1;
        }
    }
    let hand = cases::check_all()?;
    Ok((
        mismatches == 0 && hand.is_empty(),
        format!(
            "{pairs} random pairs, {mismatches} mismatches; hand cases {}",
            if hand.is_empty() {
                "reproduced".to_string()
            } else {
                hand.join(", ")
            }
        ),
    ))
}

/// Suite 8: SE gradients against HV (outward-aligned correlation, every disk)
/// and Dir (class agreement pooled over all disk interiors).
pub fn relation() -> Outcome {
    let cfg = EncodingConfig::default();
    let (mut min_corr, mut agree, mut total) = (f64::INFINITY, 0.0, 0usize);
    let mut min_disk = (f64::INFINITY, 0, false);
    for (r, half, disk) in relation_disks() {
        let rep = relation_check(&disk, &cfg)?;
        min_corr = min_corr.min(rep.outward_h_vs_hv_h).min(rep.outward_v_vs_hv_v);
        agree += rep.dir_agreement * rep.interior_pixels as f64;
        total += rep.interior_pixels;
        if rep.dir_agreement < min_disk.0 {
            min_disk = (rep.dir_agreement, r, half);
        }
    }
    let pooled = agree / total as f64;
    Ok((
        min_corr >= MIN_CORRELATION && pooled >= MIN_DIR_AGREEMENT,
        format!(
            "min correlation {min_corr:.4}; Dir agreement pooled {pooled:.4} \
             (lowest single disk {:.4} at radius {}{})",
            min_disk.0,
            min_disk.1,
            if min_disk.2 { ", corner-centred" } else { "" }
        ),
    ))
}

/// Runs suites 1 to 8 on the built-in seeds.
pub fn run_all(opts: CheckOptions) -> Vec<SuiteResult> {
    let fixtures = standard_set(200);
    let fixtures = match fixtures {
        Ok(f) => f,
        Err(e) => {
            return vec![SuiteResult {
                id: 0,
                name: "fixtures",
                passed: false,
                detail: format!("error: {e}"),
                seconds: 0.0,
            }]
        }
    };
    vec![
        timed(1, "encoding oracle", || {
            encoding_oracle(&fixtures, opts.inject_fault)
        }),
        timed(2, "equivariance", || equivariance(&fixtures)),
        timed(3, "round trip", || round_trip(&fixtures[..100])),
        timed(4, "post-processing defaults", || postproc_defaults(&fixtures)),
        timed(5, "loss gradients", || gradients(100)),
        timed(6, "attention invariants", || attention(100)),
        timed(7, "metrics oracle", || metrics_oracle(100)),
        timed(8, "gradient relation", relation),
    ]
}

pub fn render_table(results: &[SuiteResult]) -> String {
    let mut out = String::new();
    for r in results {
        let _ = writeln!(
            out,
            "{:>2}  {:<26} {}  {:>7.2}s  {}",
            r.id,
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.seconds,
            r.detail
        );
    }
    out
}
