//! Ground-truth target fields derived from a label map: the contour-based
//! signed structure encoding, the centroid-offset (HV) and centrifugal
//! direction (Dir) comparison encodings, and the centroid position map.

use std::fmt;
use std::str::FromStr;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::distance::squared_edt;
use crate::error::{Error, Result};
use crate::grid::{DirMap, Field, Grid, LabelMap};
use crate::grid_core::{centroid_table, is_contour_pixel};

/// How negative (background) distances are scaled into `[-1, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum BackgroundNorm {
    /// Divide by the largest background distance in the image.
    #[default]
    GlobalMax,
    /// Divide by a fixed distance; farther pixels saturate at -1.
    Cap(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodingConfig {
    /// Number of direction classes `K` for [`dir_encoding`].
    pub dir_classes: u16,
    pub background_norm: BackgroundNorm,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self {
            dir_classes: 8,
            background_norm: BackgroundNorm::GlobalMax,
        }
    }
}

impl EncodingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dir_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "direction class count must be >= 2, got {}",
                self.dir_classes
            )));
        }
        if let BackgroundNorm::Cap(c) = self.background_norm {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "background cap must be > 0, got {c}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoder {
    Se,
    Hv,
    Dir,
    Pos,
}

impl Encoder {
    pub const ALL: [Encoder; 4] = [Self::Se, Self::Hv, Self::Dir, Self::Pos];

    pub fn name(self) -> &'static str {
        match self {
            Self::Se => "se",
            Self::Hv => "hv",
            Self::Dir => "dir",
            Self::Pos => "pos",
        }
    }
}

impl fmt::Display for Encoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Encoder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "se" => Ok(Self::Se),
            "hv" => Ok(Self::Hv),
            "dir" => Ok(Self::Dir),
            "pos" => Ok(Self::Pos),
            other => Err(Error::InvalidConfig(format!("unknown encoding method {other:?}"))),
        }
    }
}

/// Unnormalized signed distances: positive inside (to the pixel's own instance
/// contour), zero on contours, negative outside (to the nearest contour of any
/// instance). `None` when the map has no instances.
pub fn structure_distances(labels: &LabelMap) -> Option<Field<f64>> {
    let (h, w) = labels.dims();
    let contour = Grid::from_fn(h, w, |r, c| is_contour_pixel(labels, r, c));
    let outside = squared_edt(h, w, |r, c| contour.get(r, c))?;
    let mut out = Field::<f64>::zeros(h, w, 1);
    for (i, &d2) in outside.iter().enumerate() {
        if labels.as_slice()[i] == 0 {
            out.as_mut_slice()[i] = -(d2 as f64).sqrt();
        }
    }
    for cen in centroid_table(labels).values() {
        let (r0, c0) = (cen.min_row, cen.min_col);
        let bh = cen.max_row - r0 + 1;
        let bw = cen.max_col - c0 + 1;
        let id = cen.instance_id;
        let own = squared_edt(bh, bw, |r, c| {
            labels.get(r0 + r, c0 + c) == id && contour.get(r0 + r, c0 + c)
        })
        .expect("every instance has at least one contour pixel");
        for r in 0..bh {
            for c in 0..bw {
                let (gr, gc) = (r0 + r, c0 + c);
                if labels.get(gr, gc) == id && !contour.get(gr, gc) {
                    out.set(gr, gc, 0, (own[r * bw + c] as f64).sqrt());
                }
            }
        }
    }
    Some(out)
}

/// Signed structure encoding normalized into `[-1, 1]`.
///
/// Interior values are divided by their instance's largest interior distance;
/// background values by the background normalizer from `cfg`. A map without
/// instances encodes as all `-1`.
pub fn structure_encoding<T: Float>(labels: &LabelMap, cfg: &EncodingConfig) -> Result<Field<T>> {
    cfg.validate()?;
    let (h, w) = labels.dims();
    let Some(raw) = structure_distances(labels) else {
        return Ok(Field::filled(h, w, 1, -T::one()));
    };

    let mut interior_max: std::collections::HashMap<u32, f64> = Default::default();
    let mut background_max = 0.0f64;
    for (i, &v) in raw.as_slice().iter().enumerate() {
        let id = labels.as_slice()[i];
        if id == 0 {
            background_max = background_max.max(-v);
        } else if v > 0.0 {
            let m = interior_max.entry(id).or_insert(0.0);
            *m = m.max(v);
        }
    }
    let bg_scale = match cfg.background_norm {
        BackgroundNorm::GlobalMax => background_max,
        BackgroundNorm::Cap(cap) => cap,
    };

    let data = raw
        .as_slice()
        .iter()
        .zip(labels.as_slice())
        .map(|(&v, &id)| {
            let n = if id == 0 {
                -((-v).min(bg_scale)) / bg_scale
            } else if v > 0.0 {
                v / interior_max[&id]
            } else {
                0.0
            };
            T::from(n).expect("normalized value is representable")
        })
        .collect();
    Field::from_vec(h, w, 1, data)
}

/// Horizontal/vertical centroid offsets (channels 0 and 1), each normalized by the
/// instance's largest absolute offset along that axis. Background is `(0, 0)`.
pub fn hv_encoding<T: Float>(labels: &LabelMap) -> Field<T> {
    let (h, w) = labels.dims();
    let table = centroid_table(labels);
    let mut extent: std::collections::HashMap<u32, (i64, i64)> = Default::default();
    for (r, c, id) in labels.iter_pixels() {
        if id == 0 {
            continue;
        }
        let (dr, dc) = table[&id].scaled_offset(r, c);
        let e = extent.entry(id).or_insert((0, 0));
        e.0 = e.0.max(dc.abs());
        e.1 = e.1.max(dr.abs());
    }
    let ratio = |num: i64, den: i64| -> T {
        if den == 0 {
            T::zero()
        } else {
            T::from(num as f64 / den as f64).expect("ratio in [-1, 1]")
        }
    };
    Field::from_fn(h, w, 2, |r, c, k| {
        let id = labels.get(r, c);
        if id == 0 {
            return T::zero();
        }
        let (dr, dc) = table[&id].scaled_offset(r, c);
        let (ext_h, ext_v) = extent[&id];
        if k == 0 {
            ratio(dc, ext_h)
        } else {
            ratio(dr, ext_v)
        }
    })
}

/// Quantizes the angle of `(dr, dc)` (row down, column right) into classes `1..=k`.
pub fn direction_class(dr: f64, dc: f64, k: u16) -> u16 {
    let tau = std::f64::consts::TAU;
    let theta = dr.atan2(dc).rem_euclid(tau);
    let bin = (theta / (tau / k as f64)).floor() as i64;
    1 + bin.clamp(0, k as i64 - 1) as u16
}

/// Quantized centrifugal direction from each instance's centroid; the centroid
/// pixel itself (zero vector) is class 1, background is 0.
pub fn dir_encoding(labels: &LabelMap, cfg: &EncodingConfig) -> Result<DirMap> {
    cfg.validate()?;
    let table = centroid_table(labels);
    Ok(Grid::from_fn(labels.height(), labels.width(), |r, c| {
        let id = labels.get(r, c);
        if id == 0 {
            return 0;
        }
        let (dr, dc) = table[&id].scaled_offset(r, c);
        direction_class(dr as f64, dc as f64, cfg.dir_classes)
    }))
}

/// Euclidean distance (pixels) from each instance pixel to its instance centroid;
/// background is 0.
pub fn position_encoding<T: Float>(labels: &LabelMap) -> Field<T> {
    let table = centroid_table(labels);
    Field::from_fn(labels.height(), labels.width(), 1, |r, c, _| {
        let id = labels.get(r, c);
        if id == 0 {
            return T::zero();
        }
        let cen = &table[&id];
        let (dr, dc) = cen.scaled_offset(r, c);
        // Exact integer numerator keeps the map bitwise equivariant under rigid transforms.
        let d = ((dr * dr + dc * dc) as f64).sqrt() / cen.count as f64;
        T::from(d).expect("finite distance")
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    fn square5() -> LabelMap {
        LabelMap::from_fn(5, 5, |r, c| {
            u32::from((1..=3).contains(&r) && (1..=3).contains(&c))
        })
    }

    /// Nearest-contour scan over every contour pixel, normalized the same way.
    fn brute_se(labels: &LabelMap) -> Vec<f64> {
        let contour = crate::grid_core::contour_union(labels);
        let pts: Vec<(usize, usize, u32)> = contour
            .iter_pixels()
            .filter(|p| p.2)
            .map(|(r, c, _)| (r, c, labels.get(r, c)))
            .collect();
        let d = |r: usize, c: usize, a: usize, b: usize| {
            (((r as f64 - a as f64).powi(2)) + ((c as f64 - b as f64).powi(2))).sqrt()
        };
        let raw: Vec<f64> = labels
            .iter_pixels()
            .map(|(r, c, id)| {
                if contour.get(r, c) {
                    0.0
                } else if id == 0 {
                    -pts.iter()
                        .map(|&(a, b, _)| d(r, c, a, b))
                        .fold(f64::INFINITY, f64::min)
                } else {
                    pts.iter()
                        .filter(|p| p.2 == id)
                        .map(|&(a, b, _)| d(r, c, a, b))
                        .fold(f64::INFINITY, f64::min)
                }
            })
            .collect();
        let bg = raw.iter().fold(0.0f64, |m, &v| m.max(-v));
        raw.iter()
            .zip(labels.as_slice())
            .map(|(&v, &id)| {
                if v < 0.0 {
                    v / bg
                } else if v > 0.0 {
                    let m = raw
                        .iter()
                        .zip(labels.as_slice())
                        .filter(|p| *p.1 == id)
                        .fold(0.0f64, |m, p| m.max(*p.0));
                    v / m
                } else {
                    0.0
                }
            })
            .collect()
    }

    #[test]
    fn se_square_example() {
        let se: Field<f64> = structure_encoding(&square5(), &EncodingConfig::default()).unwrap();
        assert_eq!(se.get(2, 2, 0), 1.0);
        assert_eq!(se.get(1, 1, 0), 0.0);
        assert_eq!(se.get(3, 2, 0), 0.0);
        assert!((se.get(0, 2, 0) + 1.0 / SQRT_2).abs() < 1e-15);
        assert_eq!(se.get(0, 0, 0), -1.0);
        let brute = brute_se(&square5());
        assert_eq!(se.as_slice(), &brute[..]);
    }

    #[test]
    fn se_empty_and_single_pixel() {
        let se: Field<f32> =
            structure_encoding(&LabelMap::filled(4, 3, 0), &EncodingConfig::default()).unwrap();
        assert!(se.as_slice().iter().all(|&v| v == -1.0));
        let mut l = LabelMap::filled(4, 4, 0);
        l.set(1, 2, 1);
        let se: Field<f64> = structure_encoding(&l, &EncodingConfig::default()).unwrap();
        assert_eq!(se.get(1, 2, 0), 0.0);
        assert!(se.as_slice().iter().all(|&v| v <= 0.0));
    }

    #[test]
    fn se_background_cap_saturates() {
        let cfg = EncodingConfig {
            background_norm: BackgroundNorm::Cap(0.5),
            ..Default::default()
        };
        let se: Field<f64> = structure_encoding(&square5(), &cfg).unwrap();
        assert_eq!(se.get(0, 2, 0), -1.0);
        assert!(structure_encoding::<f64>(
            &square5(),
            &EncodingConfig {
                background_norm: BackgroundNorm::Cap(0.0),
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn se_inside_uses_own_instance_only() {
        // A wide instance next to a thin one: the wide one's interior must ignore the
        // neighbour's contour even when it is nearer.
        let l = LabelMap::from_fn(7, 12, |r, c| {
            if (1..=5).contains(&r) && (1..=5).contains(&c) {
                1
            } else if (1..=5).contains(&r) && (7..=10).contains(&c) {
                2
            } else {
                0
            }
        });
        let se: Field<f64> = structure_encoding(&l, &EncodingConfig::default()).unwrap();
        assert_eq!(se.as_slice(), &brute_se(&l)[..]);
    }

    #[test]
    fn hv_square_example() {
        let hv: Field<f64> = hv_encoding(&square5());
        assert_eq!((hv.get(2, 1, 0), hv.get(2, 1, 1)), (-1.0, 0.0));
        assert_eq!((hv.get(2, 3, 0), hv.get(2, 3, 1)), (1.0, 0.0));
        assert_eq!((hv.get(2, 2, 0), hv.get(2, 2, 1)), (0.0, 0.0));
        assert_eq!((hv.get(0, 0, 0), hv.get(0, 0, 1)), (0.0, 0.0));
        let mut l = LabelMap::filled(3, 3, 0);
        l.set(1, 1, 2);
        let hv: Field<f64> = hv_encoding(&l);
        assert!(hv.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dir_square_example() {
        let d = dir_encoding(&square5(), &EncodingConfig::default()).unwrap();
        assert_eq!(d.get(2, 3), 1);
        assert_eq!(d.get(3, 2), 3);
        assert_eq!(d.get(2, 2), 1);
        assert_eq!(d.get(0, 0), 0);
        assert_eq!(d.get(2, 1), 5);
        assert_eq!(d.get(1, 2), 7);
        assert!(dir_encoding(
            &square5(),
            &EncodingConfig {
                dir_classes: 1,
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn position_square_example() {
        let p: Field<f64> = position_encoding(&square5());
        assert_eq!(p.get(2, 2, 0), 0.0);
        assert!((p.get(1, 1, 0) - SQRT_2).abs() < 1e-15);
        assert_eq!(p.get(0, 4, 0), 0.0);
        let p: Field<f64> = position_encoding(&LabelMap::filled(3, 3, 0));
        assert!(p.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn se_disk_is_isotropic() {
        let l = LabelMap::from_fn(25, 25, |r, c| {
            let (dr, dc) = (r as i64 - 12, c as i64 - 12);
            u32::from(dr * dr + dc * dc <= 81)
        });
        let raw = structure_distances(&l).unwrap();
        let se: Field<f64> = structure_encoding(&l, &EncodingConfig::default()).unwrap();
        let mut by_raw: std::collections::BTreeMap<u64, f64> = Default::default();
        for i in 0..l.len() {
            let v = raw.as_slice()[i];
            if v > 0.0 {
                let prev = by_raw.insert(v.to_bits(), se.as_slice()[i]);
                if let Some(p) = prev {
                    assert_eq!(p, se.as_slice()[i]);
                }
            }
        }
        assert!(by_raw.len() > 3);
    }

    #[test]
    fn encoder_names_parse() {
        for e in Encoder::ALL {
            assert_eq!(e.name().parse::<Encoder>().unwrap(), e);
        }
        assert!("foo".parse::<Encoder>().is_err());
    }
}
