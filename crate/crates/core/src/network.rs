//! Framework-free forward passes for semantic feature fusion and
//! structure-guided attention, in full and criss-cross form.
//!
//! Feature maps are `H x W x C` [`FeatureMap`]s; positions are flattened in
//! raster order (`m = r * W + c`). Every attention weight vector is a
//! numerically stable softmax over candidate positions, accumulated in
//! ascending candidate index.

use num_traits::Float;

use crate::error::{check_dims, Error, Result};
use crate::grid::{FeatureMap, Field};

/// Convolution weights laid out `[out][in][ky][kx]`, with one bias per output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights<T> {
    kernel: usize,
    in_channels: usize,
    out_channels: usize,
    weights: Vec<T>,
    bias: Vec<T>,
}

impl<T: Float> ConvWeights<T> {
    pub fn new(
        kernel: usize,
        in_channels: usize,
        out_channels: usize,
        weights: Vec<T>,
        bias: Vec<T>,
    ) -> Result<Self> {
        if kernel != 1 && kernel != 3 {
            return Err(Error::InvalidConfig(format!(
                "kernel size must be 1 or 3, got {kernel}"
            )));
        }
        if weights.len() != out_channels * in_channels * kernel * kernel || bias.len() != out_channels {
            return Err(Error::DimensionMismatch(format!(
                "{} weights / {} biases for a {kernel}x{kernel} conv {in_channels}->{out_channels}",
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self {
            kernel,
            in_channels,
            out_channels,
            weights,
            bias,
        })
    }

    pub fn zeros(kernel: usize, in_channels: usize, out_channels: usize) -> Result<Self> {
        Self::new(
            kernel,
            in_channels,
            out_channels,
            vec![T::zero(); out_channels * in_channels * kernel * kernel],
            vec![T::zero(); out_channels],
        )
    }

    /// 1x1 convolution from a dense `out x in` matrix (row-major).
    pub fn pointwise(in_channels: usize, out_channels: usize, matrix: Vec<T>, bias: Vec<T>) -> Result<Self> {
        Self::new(1, in_channels, out_channels, matrix, bias)
    }

    pub fn identity(channels: usize) -> Self {
        let mut w = vec![T::zero(); channels * channels];
        for i in 0..channels {
            w[i * channels + i] = T::one();
        }
        Self::pointwise(channels, channels, w, vec![T::zero(); channels]).expect("square identity")
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    #[inline]
    fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> T {
        let k = self.kernel;
        self.weights[((o * self.in_channels + i) * k + ky) * k + kx]
    }
}

/// Cross-correlation with zero padding that preserves `H x W`.
pub fn conv2d<T: Float>(input: &FeatureMap<T>, w: &ConvWeights<T>) -> Result<FeatureMap<T>> {
    if input.channels() != w.in_channels {
        return Err(Error::DimensionMismatch(format!(
            "conv expects {} input channels, got {}",
            w.in_channels,
            input.channels()
        )));
    }
    let (h, wd) = input.dims();
    let half = (w.kernel / 2) as isize;
    let mut out = Field::zeros(h, wd, w.out_channels);
    for r in 0..h {
        for c in 0..wd {
            for o in 0..w.out_channels {
                let mut acc = w.bias[o];
                for ky in 0..w.kernel {
                    let rr = r as isize + ky as isize - half;
                    if rr < 0 || rr as usize >= h {
                        continue;
                    }
                    for kx in 0..w.kernel {
                        let cc = c as isize + kx as isize - half;
                        if cc < 0 || cc as usize >= wd {
                            continue;
                        }
                        let v = input.vector(rr as usize * wd + cc as usize);
                        for (i, &x) in v.iter().enumerate() {
                            acc = acc + w.weight(o, i, ky, kx) * x;
                        }
                    }
                }
                out.set(r, c, o, acc);
            }
        }
    }
    Ok(out)
}

/// Semantic feature fusion: the semantic stream is convolved on its own, the
/// structure stream is convolved after concatenating the semantic features in
/// front of it. Returns `(semantic, structure)`.
pub fn sff_fuse<T: Float>(
    semantic: &FeatureMap<T>,
    structure: &FeatureMap<T>,
    w_semantic: &ConvWeights<T>,
    w_structure: &ConvWeights<T>,
) -> Result<(FeatureMap<T>, FeatureMap<T>)> {
    check_dims("sff_fuse", semantic.dims(), structure.dims())?;
    let fused = semantic.concat_channels(structure)?;
    Ok((conv2d(semantic, w_semantic)?, conv2d(&fused, w_structure)?))
}

fn dot<T: Float>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// In-place stable softmax.
fn softmax<T: Float>(scores: &mut [T]) {
    let max = scores.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut sum = T::zero();
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        sum = sum + *s;
    }
    for s in scores.iter_mut() {
        *s = *s / sum;
    }
}

fn check_qkv<T: Float>(q: &FeatureMap<T>, k: &FeatureMap<T>, values: &[&FeatureMap<T>]) -> Result<()> {
    check_dims("query/key", q.dims(), k.dims())?;
    if q.channels() != k.channels() {
        return Err(Error::DimensionMismatch(format!(
            "query has {} channels, key has {}",
            q.channels(),
            k.channels()
        )));
    }
    for v in values {
        check_dims("query/value", q.dims(), v.dims())?;
    }
    Ok(())
}

/// Dense `HW x HW` attention matrix, one row per query.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap<T> {
    pub height: usize,
    pub width: usize,
    weights: Vec<T>,
}

impl<T: Float> AttentionMap<T> {
    pub fn positions(&self) -> usize {
        self.height * self.width
    }

    pub fn row(&self, query: usize) -> &[T] {
        let n = self.positions();
        &self.weights[query * n..(query + 1) * n]
    }

    /// Weights of one query reshaped to an `H x W` field, for export.
    pub fn weight_map(&self, query: usize) -> Field<T> {
        Field::from_vec(self.height, self.width, 1, self.row(query).to_vec()).expect("row has HW entries")
    }

    fn apply(&self, v: &FeatureMap<T>) -> FeatureMap<T> {
        let n = self.positions();
        let mut out = Field::zeros(self.height, self.width, v.channels());
        for m in 0..n {
            let row = self.row(m);
            let dst = out.vector_mut(m);
            for (j, &a) in row.iter().enumerate() {
                for (d, &x) in dst.iter_mut().zip(v.vector(j)) {
                    *d = *d + a * x;
                }
            }
        }
        out
    }
}

pub fn full_attention<T: Float>(q: &FeatureMap<T>, k: &FeatureMap<T>) -> Result<AttentionMap<T>> {
    check_qkv(q, k, &[])?;
    let n = q.pixels();
    let scale = T::from(q.channels()).expect("channel count").sqrt().recip();
    let mut weights = Vec::with_capacity(n * n);
    let mut scores = vec![T::zero(); n];
    for m in 0..n {
        let qm = q.vector(m);
        for (j, s) in scores.iter_mut().enumerate() {
            *s = dot(qm, k.vector(j)) * scale;
        }
        softmax(&mut scores);
        weights.extend_from_slice(&scores);
    }
    Ok(AttentionMap {
        height: q.height(),
        width: q.width(),
        weights,
    })
}

/// Full structure-guided attention: one attention map from the structure
/// query/key drives both value streams. Returns `(S, structure_next, semantic_next)`.
pub fn sga_full<T: Float>(
    q: &FeatureMap<T>,
    k: &FeatureMap<T>,
    v_structure: &FeatureMap<T>,
    v_semantic: &FeatureMap<T>,
) -> Result<(AttentionMap<T>, FeatureMap<T>, FeatureMap<T>)> {
    check_qkv(q, k, &[v_structure, v_semantic])?;
    let s = full_attention(q, k)?;
    let g = s.apply(v_structure);
    let f = s.apply(v_semantic);
    Ok((s, g, f))
}

/// Flattened indices sharing `m`'s row or column, ascending, with `m` once.
pub fn cross_candidates(height: usize, width: usize, m: usize) -> Vec<usize> {
    let (r, c) = (m / width, m % width);
    let mut out = Vec::with_capacity(height + width - 1);
    for rr in 0..r {
        out.push(rr * width + c);
    }
    out.extend(r * width..(r + 1) * width);
    for rr in r + 1..height {
        out.push(rr * width + c);
    }
    out
}

/// Per-query criss-cross weights over the `H + W - 1` candidates of
/// [`cross_candidates`].
#[derive(Debug, Clone, PartialEq)]
pub struct CrissCrossMap<T> {
    pub height: usize,
    pub width: usize,
    weights: Vec<Vec<T>>,
}

impl<T: Float> CrissCrossMap<T> {
    pub fn weights(&self, query: usize) -> &[T] {
        &self.weights[query]
    }

    pub fn candidates(&self, query: usize) -> Vec<usize> {
        cross_candidates(self.height, self.width, query)
    }

    /// Weights of one query scattered onto the grid (zero off the cross).
    pub fn weight_map(&self, query: usize) -> Field<T> {
        let mut f = Field::zeros(self.height, self.width, 1);
        for (j, &w) in self.candidates(query).into_iter().zip(&self.weights[query]) {
            f.as_mut_slice()[j] = w;
        }
        f
    }

    fn apply(&self, v: &FeatureMap<T>) -> FeatureMap<T> {
        let mut out = Field::zeros(self.height, self.width, v.channels());
        for m in 0..self.height * self.width {
            let cands = self.candidates(m);
            let dst = out.vector_mut(m);
            for (&j, &a) in cands.iter().zip(&self.weights[m]) {
                for (d, &x) in dst.iter_mut().zip(v.vector(j)) {
                    *d = *d + a * x;
                }
            }
        }
        out
    }
}

pub fn criss_cross_attention<T: Float>(q: &FeatureMap<T>, k: &FeatureMap<T>) -> Result<CrissCrossMap<T>> {
    check_qkv(q, k, &[])?;
    let (h, w) = q.dims();
    let scale = T::from(q.channels()).expect("channel count").sqrt().recip();
    let weights = (0..h * w)
        .map(|m| {
            let qm = q.vector(m);
            let mut scores: Vec<T> = cross_candidates(h, w, m)
                .into_iter()
                .map(|j| dot(qm, k.vector(j)) * scale)
                .collect();
            softmax(&mut scores);
            scores
        })
        .collect();
    Ok(CrissCrossMap {
        height: h,
        width: w,
        weights,
    })
}

/// One criss-cross aggregation of `v`.
pub fn criss_cross_pass<T: Float>(
    q: &FeatureMap<T>,
    k: &FeatureMap<T>,
    v: &FeatureMap<T>,
) -> Result<FeatureMap<T>> {
    check_qkv(q, k, &[v])?;
    Ok(criss_cross_attention(q, k)?.apply(v))
}

/// Projections used to re-derive query and key from the updated structure
/// features between stacked criss-cross passes.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryKeyProjection<T> {
    pub query: ConvWeights<T>,
    pub key: ConvWeights<T>,
}

impl<T: Float> QueryKeyProjection<T> {
    /// Projection mapping everything to zero query/key (uniform attention).
    pub fn zeros(in_channels: usize, qk_channels: usize) -> Self {
        Self {
            query: ConvWeights::zeros(1, in_channels, qk_channels).expect("1x1"),
            key: ConvWeights::zeros(1, in_channels, qk_channels).expect("1x1"),
        }
    }
}

/// Stacked criss-cross structure-guided attention. The first pass uses the
/// supplied query/key; each later pass recomputes them from the updated
/// structure stream with `projection`. Both value streams are aggregated with
/// the same weights at every pass. Returns `(structure_next, semantic_next)`.
pub fn sga_criss_cross<T: Float>(
    q: &FeatureMap<T>,
    k: &FeatureMap<T>,
    v_structure: &FeatureMap<T>,
    v_semantic: &FeatureMap<T>,
    passes: usize,
    projection: &QueryKeyProjection<T>,
) -> Result<(FeatureMap<T>, FeatureMap<T>)> {
    if passes == 0 {
        return Err(Error::InvalidConfig(
            "criss-cross attention needs at least one pass".into(),
        ));
    }
    check_qkv(q, k, &[v_structure, v_semantic])?;
    let mut q = q.clone();
    let mut k = k.clone();
    let mut g = v_structure.clone();
    let mut f = v_semantic.clone();
    for pass in 0..passes {
        if pass > 0 {
            q = conv2d(&g, &projection.query)?;
            k = conv2d(&g, &projection.key)?;
        }
        let att = criss_cross_attention(&q, &k)?;
        g = att.apply(&g);
        f = att.apply(&f);
    }
    Ok((g, f))
}
