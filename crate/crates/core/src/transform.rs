//! Exact rigid transforms of the pixel grid (the dihedral group of the square).
//!
//! Only the grid moves: multi-channel values such as HV offsets are copied
//! unchanged, which is what exposes encoders that are not equivariant.

use std::fmt;
use std::str::FromStr;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::grid::{Field, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RigidTransform {
    Identity,
    /// Clockwise quarter turn: `(r, c) -> (c, H - 1 - r)`.
    Rot90,
    Rot180,
    Rot270,
    /// Mirror left-right: `(r, c) -> (r, W - 1 - c)`.
    FlipH,
    /// Mirror top-bottom: `(r, c) -> (H - 1 - r, c)`.
    FlipV,
    Transpose,
    AntiTranspose,
}

impl RigidTransform {
    /// The identity plus the four augmentations and the remaining quarter turn.
    pub const STANDARD: [RigidTransform; 6] = [
        Self::Identity,
        Self::Rot90,
        Self::Rot180,
        Self::Rot270,
        Self::FlipH,
        Self::FlipV,
    ];

    pub const ALL: [RigidTransform; 8] = [
        Self::Identity,
        Self::Rot90,
        Self::Rot180,
        Self::Rot270,
        Self::FlipH,
        Self::FlipV,
        Self::Transpose,
        Self::AntiTranspose,
    ];

    /// `(transpose first, then flip rows, then flip columns)`.
    fn parts(self) -> (bool, bool, bool) {
        match self {
            Self::Identity => (false, false, false),
            Self::Rot90 => (true, false, true),
            Self::Rot180 => (false, true, true),
            Self::Rot270 => (true, true, false),
            Self::FlipH => (false, false, true),
            Self::FlipV => (false, true, false),
            Self::Transpose => (true, false, false),
            Self::AntiTranspose => (true, true, true),
        }
    }

    pub fn output_dims(self, height: usize, width: usize) -> (usize, usize) {
        if self.parts().0 {
            (width, height)
        } else {
            (height, width)
        }
    }

    /// Destination of source pixel `(r, c)` in an `height x width` grid.
    #[inline]
    pub fn map(self, height: usize, width: usize, r: usize, c: usize) -> (usize, usize) {
        let (swap, flip_r, flip_c) = self.parts();
        let (mut r, mut c, h, w) = if swap {
            (c, r, width, height)
        } else {
            (r, c, height, width)
        };
        if flip_r {
            r = h - 1 - r;
        }
        if flip_c {
            c = w - 1 - c;
        }
        (r, c)
    }

    /// `self` applied after `first`.
    pub fn after(self, first: RigidTransform) -> RigidTransform {
        let probe = Grid::from_fn(2, 3, |r, c| (r * 3 + c) as u8);
        let target = probe.transformed(first).transformed(self);
        *Self::ALL
            .iter()
            .find(|t| probe.transformed(**t) == target)
            .expect("dihedral group is closed")
    }

    pub fn inverse(self) -> RigidTransform {
        *Self::ALL
            .iter()
            .find(|t| t.after(self) == Self::Identity)
            .expect("every element has an inverse")
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Rot90 => "rot90",
            Self::Rot180 => "rot180",
            Self::Rot270 => "rot270",
            Self::FlipH => "fliph",
            Self::FlipV => "flipv",
            Self::Transpose => "transpose",
            Self::AntiTranspose => "antitranspose",
        }
    }
}

impl fmt::Display for RigidTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RigidTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Self::ALL
            .iter()
            .copied()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown transform {s:?}")))
    }
}

pub trait Transformable: Sized {
    fn transformed(&self, t: RigidTransform) -> Self;
}

impl<T: Copy + Default> Transformable for Grid<T> {
    fn transformed(&self, t: RigidTransform) -> Self {
        let (h, w) = self.dims();
        let (oh, ow) = t.output_dims(h, w);
        let mut out = Grid::filled(oh, ow, T::default());
        for (r, c, v) in self.iter_pixels() {
            let (nr, nc) = t.map(h, w, r, c);
            out.set(nr, nc, v);
        }
        out
    }
}

impl<T: Float> Transformable for Field<T> {
    fn transformed(&self, t: RigidTransform) -> Self {
        let (h, w) = self.dims();
        let (oh, ow) = t.output_dims(h, w);
        let mut out = Field::zeros(oh, ow, self.channels());
        for r in 0..h {
            for c in 0..w {
                let (nr, nc) = t.map(h, w, r, c);
                out.vector_mut(nr * ow + nc)
                    .copy_from_slice(self.vector(r * w + c));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use RigidTransform::*;

    fn probe() -> Grid<u32> {
        Grid::from_fn(2, 3, |r, c| (r * 3 + c) as u32)
    }

    #[test]
    fn rot90_coordinate_map() {
        let g = probe();
        let t = g.transformed(Rot90);
        assert_eq!(t.dims(), (3, 2));
        for (r, c, v) in g.iter_pixels() {
            assert_eq!(t.get(c, 2 - 1 - r), v);
        }
        // Visual check: clockwise turn of [[0,1,2],[3,4,5]].
        assert_eq!(t.as_slice(), &[3, 0, 4, 1, 5, 2]);
    }

    #[test]
    fn group_laws() {
        let g = probe();
        let mut x = g.clone();
        for _ in 0..4 {
            x = x.transformed(Rot90);
        }
        assert_eq!(x, g);
        assert_eq!(g.transformed(FlipH).transformed(FlipH), g);
        assert_eq!(Rot90.after(Rot90), Rot180);
        assert_eq!(Rot90.after(Rot180), Rot270);
        assert_eq!(FlipH.after(FlipV), Rot180);
        for t in RigidTransform::ALL {
            assert_eq!(g.transformed(t).transformed(t.inverse()), g);
            for u in RigidTransform::ALL {
                assert_eq!(g.transformed(t).transformed(u), g.transformed(u.after(t)));
            }
        }
    }

    #[test]
    fn field_moves_whole_vectors() {
        let f = Field::<f32>::from_fn(2, 3, 2, |r, c, k| (r * 10 + c) as f32 + k as f32 * 0.5);
        let t = f.transformed(FlipH);
        assert_eq!(t.vector(0), f.vector(2));
        assert_eq!(t.vector(5), f.vector(3));
    }

    #[test]
    fn names_round_trip() {
        for t in RigidTransform::ALL {
            assert_eq!(t.name().parse::<RigidTransform>().unwrap(), t);
        }
    }
}
