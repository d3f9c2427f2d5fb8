//! Dense 2-D containers shared by every module.
//!
//! [`Grid`] holds one value per pixel (labels, masks, classes). [`Field`]
//! holds a row-major, channel-interleaved block of scalars and doubles as
//! the feature-map type for the attention reference code.

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {height}x{width} grid",
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self { height, width, data }
    }

    /// Builds a grid from equal-length rows. Panics on ragged input; meant for literals.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(height * width);
        for row in rows {
            assert_eq!(row.as_ref().len(), width, "ragged rows");
            data.extend_from_slice(row.as_ref());
        }
        Self { height, width, data }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.width + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: T) {
        self.data[r * self.width + c] = value;
    }

    /// Bounds-checked access with signed coordinates.
    #[inline]
    pub fn get_signed(&self, r: isize, c: isize) -> Option<T> {
        if r < 0 || c < 0 || r as usize >= self.height || c as usize >= self.width {
            None
        } else {
            Some(self.get(r as usize, c as usize))
        }
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U: Copy>(&self, mut f: impl FnMut(T) -> U) -> Grid<U> {
        Grid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `(row, col, value)` in raster order.
    pub fn iter_pixels(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        let w = self.width.max(1);
        self.data.iter().enumerate().map(move |(i, &v)| (i / w, i % w, v))
    }
}

/// Instance identifiers; 0 is background.
pub type LabelMap = Grid<u32>;

pub type BinaryMask = Grid<bool>;

/// Per-pixel direction classes, 0 = background, `1..=K` otherwise.
pub type DirMap = Grid<u16>;

pub type SemanticMask = Grid<SemanticClass>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[repr(u8)]
pub enum SemanticClass {
    #[default]
    Background = 0,
    Inside = 1,
    Contour = 2,
}

impl SemanticClass {
    pub const ALL: [SemanticClass; 3] = [Self::Background, Self::Inside, Self::Contour];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(v: u32) -> Option<Self> {
        match v {
            0 => Some(Self::Background),
            1 => Some(Self::Inside),
            2 => Some(Self::Contour),
            _ => None,
        }
    }

    /// Inside or contour.
    #[inline]
    pub fn is_nucleus(self) -> bool {
        self != Self::Background
    }
}

impl LabelMap {
    /// Sorted, de-duplicated nonzero labels.
    pub fn instance_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.data.iter().copied().filter(|&l| l != 0).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn max_label(&self) -> u32 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    pub fn foreground(&self) -> BinaryMask {
        self.map(|l| l != 0)
    }

    pub fn instance_mask(&self, id: u32) -> BinaryMask {
        self.map(|l| l == id)
    }

    /// Renumbers instances to `1..=N` in raster order of their first pixel.
    pub fn relabel_sequential(&self) -> LabelMap {
        let mut remap = std::collections::HashMap::new();
        let mut next = 0u32;
        self.map(|l| {
            if l == 0 {
                0
            } else {
                *remap.entry(l).or_insert_with(|| {
                    next += 1;
                    next
                })
            }
        })
    }
}

impl BinaryMask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Row-major, channel-interleaved scalar field of shape `height x width x channels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

/// Attention feature maps share the field layout (H x W x C).
pub type FeatureMap<T> = Field<T>;

impl<T: Float> Field<T> {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, T::zero())
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: T) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidConfig("field needs at least one channel".into()));
        }
        if data.len() != height * width * channels {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {height}x{width}x{channels} field",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for k in 0..channels {
                    data.push(f(r, c, k));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    /// Single-channel field from a grid of values.
    pub fn from_grid(grid: &Grid<T>) -> Self {
        Self {
            height: grid.height(),
            width: grid.width(),
            channels: 1,
            data: grid.as_slice().to_vec(),
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize, k: usize) -> T {
        self.data[(r * self.width + c) * self.channels + k]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, k: usize, value: T) {
        self.data[(r * self.width + c) * self.channels + k] = value;
    }

    /// Channel vector at flattened position `idx = r * width + c`.
    #[inline]
    pub fn vector(&self, idx: usize) -> &[T] {
        &self.data[idx * self.channels..(idx + 1) * self.channels]
    }

    #[inline]
    pub fn vector_mut(&mut self, idx: usize) -> &mut [T] {
        &mut self.data[idx * self.channels..(idx + 1) * self.channels]
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn channel(&self, k: usize) -> Grid<T> {
        Grid::from_fn(self.height, self.width, |r, c| self.get(r, c, k))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, mut f: impl FnMut(T) -> T) -> Self {
        Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Float>(&self) -> Field<U> {
        Field {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self
                .data
                .iter()
                .map(|&v| U::from(v).unwrap_or_else(U::nan))
                .collect(),
        }
    }

    /// Concatenates channel blocks pixel by pixel (`self` first).
    pub fn concat_channels(&self, other: &Self) -> Result<Self> {
        crate::error::check_dims("concat_channels", self.dims(), other.dims())?;
        let channels = self.channels + other.channels;
        let mut data = Vec::with_capacity(self.pixels() * channels);
        for idx in 0..self.pixels() {
            data.extend_from_slice(self.vector(idx));
            data.extend_from_slice(other.vector(idx));
        }
        Ok(Self {
            height: self.height,
            width: self.width,
            channels,
            data,
        })
    }
}
