//! Masks, square-element morphology, contours, connected components,
//! centroids and pyramid downsampling.

use std::collections::BTreeMap;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Field, Grid, LabelMap, SemanticClass, SemanticMask};

/// Pixel adjacency for component labeling and region growing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    #[default]
    Four,
    Eight,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Result<Self> {
        match n {
            4 => Ok(Self::Four),
            8 => Ok(Self::Eight),
            _ => Err(Error::InvalidConfig(format!(
                "connectivity must be 4 or 8, got {n}"
            ))),
        }
    }

    pub fn offsets(self) -> &'static [(isize, isize)] {
        const FOUR: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
        const EIGHT: [(isize, isize); 8] = [
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ];
        match self {
            Self::Four => &FOUR,
            Self::Eight => &EIGHT,
        }
    }
}

/// Counts of set pixels in the clipped window `[i - radius, i + radius]` along one line,
/// plus whether the window was clipped by the border.
fn line_window(line: &[bool], radius: usize, out: &mut Vec<(usize, bool)>) {
    let n = line.len();
    let mut prefix = vec![0usize; n + 1];
    for (i, &b) in line.iter().enumerate() {
        prefix[i + 1] = prefix[i] + b as usize;
    }
    out.clear();
    for i in 0..n {
        let lo = i.saturating_sub(radius);
        let hi = (i + radius + 1).min(n);
        let clipped = i < radius || i + radius >= n;
        out.push((prefix[hi] - prefix[lo], clipped));
    }
}

fn separable(mask: &BinaryMask, radius: usize, keep: impl Fn(usize, bool) -> bool) -> BinaryMask {
    let (h, w) = mask.dims();
    let mut tmp = Grid::filled(h, w, false);
    let mut line = Vec::with_capacity(h.max(w));
    let mut counts = Vec::with_capacity(h.max(w));
    for r in 0..h {
        line.clear();
        line.extend((0..w).map(|c| mask.get(r, c)));
        line_window(&line, radius, &mut counts);
        for (c, &(n, clipped)) in counts.iter().enumerate() {
            tmp.set(r, c, keep(n, clipped));
        }
    }
    let mut out = Grid::filled(h, w, false);
    for c in 0..w {
        line.clear();
        line.extend((0..h).map(|r| tmp.get(r, c)));
        line_window(&line, radius, &mut counts);
        for (r, &(n, clipped)) in counts.iter().enumerate() {
            out.set(r, c, keep(n, clipped));
        }
    }
    out
}

/// Square dilation: a pixel is set iff some set pixel lies within Chebyshev distance `radius`.
pub fn dilate(mask: &BinaryMask, radius: usize) -> Result<BinaryMask> {
    if radius == 0 {
        return Err(Error::InvalidConfig("dilation radius must be >= 1".into()));
    }
    Ok(separable(mask, radius, |n, _| n > 0))
}

/// Square erosion. Pixels outside the image count as unset, so objects touching
/// the border lose their border row/column.
pub fn erode(mask: &BinaryMask, radius: usize) -> Result<BinaryMask> {
    if radius == 0 {
        return Err(Error::InvalidConfig("erosion radius must be >= 1".into()));
    }
    let full = 2 * radius + 1;
    Ok(separable(mask, radius, |n, clipped| !clipped && n == full))
}

/// Inner boundary of one instance: its mask minus the radius-1 erosion.
pub fn extract_contour(labels: &LabelMap, instance_id: u32) -> Result<BinaryMask> {
    extract_contour_with_radius(labels, instance_id, 1)
}

pub fn extract_contour_with_radius(labels: &LabelMap, instance_id: u32, radius: usize) -> Result<BinaryMask> {
    if instance_id == 0 || !labels.as_slice().contains(&instance_id) {
        return Err(Error::UnknownInstance(instance_id));
    }
    let mask = labels.instance_mask(instance_id);
    let eroded = erode(&mask, radius)?;
    Ok(Grid::from_fn(labels.height(), labels.width(), |r, c| {
        mask.get(r, c) && !eroded.get(r, c)
    }))
}

/// Union of all instance contours in one scan: an instance pixel is on its contour
/// iff one of its 8 neighbours is outside the image or carries a different label.
pub fn contour_union(labels: &LabelMap) -> BinaryMask {
    Grid::from_fn(labels.height(), labels.width(), |r, c| {
        is_contour_pixel(labels, r, c)
    })
}

#[inline]
pub(crate) fn is_contour_pixel(labels: &LabelMap, r: usize, c: usize) -> bool {
    let id = labels.get(r, c);
    if id == 0 {
        return false;
    }
    Connectivity::Eight
        .offsets()
        .iter()
        .any(|&(dr, dc)| labels.get_signed(r as isize + dr, c as isize + dc) != Some(id))
}

/// Three-class target: contour pixels of any instance, remaining instance pixels, background.
pub fn semantic_from_labels(labels: &LabelMap) -> SemanticMask {
    Grid::from_fn(labels.height(), labels.width(), |r, c| {
        if labels.get(r, c) == 0 {
            SemanticClass::Background
        } else if is_contour_pixel(labels, r, c) {
            SemanticClass::Contour
        } else {
            SemanticClass::Inside
        }
    })
}

struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new() -> Self {
        Self {
            parent: Vec::new(),
            rank: Vec::new(),
        }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        self.rank.push(0);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra as usize].cmp(&self.rank[rb as usize]) {
            std::cmp::Ordering::Less => self.parent[ra as usize] = rb,
            std::cmp::Ordering::Greater => self.parent[rb as usize] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb as usize] = ra;
                self.rank[ra as usize] += 1;
            }
        }
    }
}

/// Two-pass union-find labeling. Components are numbered `1..=N` in raster order
/// of their first pixel.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> LabelMap {
    let (h, w) = mask.dims();
    let mut provisional = vec![u32::MAX; h * w];
    let mut uf = UnionFind::new();
    // Neighbours already visited in raster order.
    let back: &[(isize, isize)] = match connectivity {
        Connectivity::Four => &[(-1, 0), (0, -1)],
        Connectivity::Eight => &[(-1, -1), (-1, 0), (-1, 1), (0, -1)],
    };
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            let mut current: Option<u32> = None;
            for &(dr, dc) in back {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nc < 0 || nc as usize >= w {
                    continue;
                }
                let p = provisional[nr as usize * w + nc as usize];
                if p == u32::MAX {
                    continue;
                }
                match current {
                    None => current = Some(p),
                    Some(q) => uf.union(p, q),
                }
            }
            provisional[r * w + c] = current.unwrap_or_else(|| uf.make());
        }
    }
    let mut final_of_root = vec![0u32; uf.parent.len()];
    let mut next = 0u32;
    let mut out = vec![0u32; h * w];
    for (i, &p) in provisional.iter().enumerate() {
        if p == u32::MAX {
            continue;
        }
        let root = uf.find(p) as usize;
        if final_of_root[root] == 0 {
            next += 1;
            final_of_root[root] = next;
        }
        out[i] = final_of_root[root];
    }
    Grid::from_vec(h, w, out).expect("shape preserved")
}

/// Centroid of one instance. Integer coordinate sums are kept so encoders can form
/// exact offsets `count * coord - sum`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Centroid {
    pub instance_id: u32,
    pub row: f64,
    pub col: f64,
    pub count: u64,
    pub row_sum: u64,
    pub col_sum: u64,
    pub min_row: usize,
    pub max_row: usize,
    pub min_col: usize,
    pub max_col: usize,
}

impl Centroid {
    /// `count * (r - centroid_row)` and `count * (c - centroid_col)` as exact integers.
    #[inline]
    pub fn scaled_offset(&self, r: usize, c: usize) -> (i64, i64) {
        let n = self.count as i64;
        (
            n * r as i64 - self.row_sum as i64,
            n * c as i64 - self.col_sum as i64,
        )
    }
}

/// Mean pixel coordinate of every instance, sorted by instance id.
pub fn instance_centroids(labels: &LabelMap) -> Vec<Centroid> {
    centroid_table(labels).into_values().collect()
}

pub(crate) fn centroid_table(labels: &LabelMap) -> BTreeMap<u32, Centroid> {
    let mut table: BTreeMap<u32, Centroid> = BTreeMap::new();
    for (r, c, id) in labels.iter_pixels() {
        if id == 0 {
            continue;
        }
        let e = table.entry(id).or_insert(Centroid {
            instance_id: id,
            row: 0.0,
            col: 0.0,
            count: 0,
            row_sum: 0,
            col_sum: 0,
            min_row: r,
            max_row: r,
            min_col: c,
            max_col: c,
        });
        e.count += 1;
        e.row_sum += r as u64;
        e.col_sum += c as u64;
        e.min_row = e.min_row.min(r);
        e.max_row = e.max_row.max(r);
        e.min_col = e.min_col.min(c);
        e.max_col = e.max_col.max(c);
    }
    for e in table.values_mut() {
        e.row = e.row_sum as f64 / e.count as f64;
        e.col = e.col_sum as f64 / e.count as f64;
    }
    table
}

fn check_factor(h: usize, w: usize, factor: usize) -> Result<()> {
    if factor == 0 || !h.is_multiple_of(factor) || !w.is_multiple_of(factor) {
        return Err(Error::DimensionMismatch(format!(
            "factor {factor} does not divide {h}x{w}"
        )));
    }
    Ok(())
}

/// Block-mean pooling over `factor x factor` blocks, per channel.
pub fn downsample_field<T: Float>(field: &Field<T>, factor: usize) -> Result<Field<T>> {
    let (h, w) = field.dims();
    check_factor(h, w, factor)?;
    let area = T::from(factor * factor).expect("representable block area");
    Ok(Field::from_fn(
        h / factor,
        w / factor,
        field.channels(),
        |r, c, k| {
            let mut sum = T::zero();
            for dr in 0..factor {
                for dc in 0..factor {
                    sum = sum + field.get(r * factor + dr, c * factor + dc, k);
                }
            }
            sum / area
        },
    ))
}

/// Majority vote over `factor x factor` blocks; ties go to the lowest class id.
pub fn downsample_semantic(mask: &SemanticMask, factor: usize) -> Result<SemanticMask> {
    let (h, w) = mask.dims();
    check_factor(h, w, factor)?;
    Ok(Grid::from_fn(h / factor, w / factor, |r, c| {
        let mut votes = [0usize; 3];
        for dr in 0..factor {
            for dc in 0..factor {
                votes[mask.get(r * factor + dr, c * factor + dc).index()] += 1;
            }
        }
        let mut best = SemanticClass::Background;
        for class in SemanticClass::ALL {
            if votes[class.index()] > votes[best.index()] {
                best = class;
            }
        }
        best
    }))
}

/// Nearest-neighbour (constant block) upsampling.
pub fn upsample_nearest<T: Float>(field: &Field<T>, factor: usize) -> Field<T> {
    Field::from_fn(
        field.height() * factor,
        field.width() * factor,
        field.channels(),
        |r, c, k| field.get(r / factor, c / factor, k),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_labels() -> LabelMap {
        LabelMap::from_fn(5, 5, |r, c| {
            u32::from((1..=3).contains(&r) && (1..=3).contains(&c))
        })
    }

    fn bits(rows: &[&str]) -> BinaryMask {
        let v: Vec<Vec<bool>> = rows
            .iter()
            .map(|r| r.chars().map(|ch| ch == '#').collect())
            .collect();
        Grid::from_rows(&v)
    }

    #[test]
    fn dilate_single_pixel() {
        let mut m = Grid::filled(5, 5, false);
        m.set(2, 2, true);
        let d = dilate(&m, 1).unwrap();
        for (r, c, v) in d.iter_pixels() {
            assert_eq!(v, (1..=3).contains(&r) && (1..=3).contains(&c));
        }
        assert_eq!(dilate(&Grid::filled(4, 4, false), 2).unwrap().count(), 0);
        assert_eq!(dilate(&Grid::filled(4, 4, true), 1).unwrap().count(), 16);
        assert!(dilate(&m, 0).is_err());
    }

    #[test]
    fn erode_cases() {
        let sq = square_labels().foreground();
        let e = erode(&sq, 1).unwrap();
        assert_eq!(e.count(), 1);
        assert!(e.get(2, 2));

        let full = Grid::filled(6, 7, true);
        let e = erode(&full, 1).unwrap();
        for (r, c, v) in e.iter_pixels() {
            assert_eq!(v, (1..5).contains(&r) && (1..6).contains(&c));
        }

        let mut single = Grid::filled(5, 5, false);
        single.set(2, 2, true);
        assert_eq!(erode(&single, 1).unwrap().count(), 0);
    }

    #[test]
    fn contour_of_square_is_ring() {
        let c = extract_contour(&square_labels(), 1).unwrap();
        assert_eq!(c.count(), 8);
        assert!(!c.get(2, 2));
        assert!(c.get(1, 1) && c.get(3, 2));
    }

    #[test]
    fn contour_degenerate_instances() {
        let mut l = LabelMap::filled(4, 4, 0);
        l.set(0, 3, 5);
        assert_eq!(extract_contour(&l, 5).unwrap().count(), 1);
        let l2 = LabelMap::from_fn(4, 4, |r, c| u32::from(r < 2 && c < 2));
        assert_eq!(extract_contour(&l2, 1).unwrap().count(), 4);
        assert!(matches!(extract_contour(&l2, 9), Err(Error::UnknownInstance(9))));
    }

    #[test]
    fn semantic_of_square() {
        let s = semantic_from_labels(&square_labels());
        assert_eq!(s.get(2, 2), SemanticClass::Inside);
        assert_eq!(s.get(1, 3), SemanticClass::Contour);
        assert_eq!(s.get(0, 0), SemanticClass::Background);
        let counts = SemanticClass::ALL.map(|k| s.as_slice().iter().filter(|&&v| v == k).count());
        assert_eq!(counts, [16, 1, 8]);

        let blank = semantic_from_labels(&LabelMap::filled(3, 3, 0));
        assert!(blank.as_slice().iter().all(|&v| v == SemanticClass::Background));

        let mut one = LabelMap::filled(3, 3, 0);
        one.set(1, 1, 4);
        let s = semantic_from_labels(&one);
        assert_eq!(s.get(1, 1), SemanticClass::Contour);
        assert!(!s.as_slice().contains(&SemanticClass::Inside));
    }

    #[test]
    fn touching_instances_both_get_contours() {
        // Adjacent instances split a column: each side of the seam is contour.
        let l = LabelMap::from_fn(5, 8, |_, c| if c < 4 { 1 } else { 2 });
        let s = semantic_from_labels(&l);
        assert_eq!(s.get(2, 3), SemanticClass::Contour);
        assert_eq!(s.get(2, 4), SemanticClass::Contour);
        assert_eq!(s.get(2, 2), SemanticClass::Inside);
    }

    #[test]
    fn components_raster_order() {
        let m = bits(&["##..##", "##..##", "......"]);
        let l = connected_components(&m, Connectivity::Four);
        assert_eq!(l.get(0, 0), 1);
        assert_eq!(l.get(1, 5), 2);
        assert_eq!(l.max_label(), 2);
    }

    #[test]
    fn components_connectivity() {
        let m = bits(&["#.", ".#"]);
        assert_eq!(connected_components(&m, Connectivity::Four).max_label(), 2);
        assert_eq!(connected_components(&m, Connectivity::Eight).max_label(), 1);
        let empty = connected_components(&Grid::filled(3, 3, false), Connectivity::Eight);
        assert!(empty.as_slice().iter().all(|&v| v == 0));
    }

    #[test]
    fn components_merge_u_shape() {
        // Two arms meet only at the bottom; the second arm is labeled provisionally first.
        let m = bits(&["#.#", "#.#", "###"]);
        let l = connected_components(&m, Connectivity::Four);
        assert_eq!(l.max_label(), 1);
        let m = bits(&["..#", ".#.", "#.."]);
        assert_eq!(connected_components(&m, Connectivity::Eight).max_label(), 1);
    }

    #[test]
    fn centroid_examples() {
        let c = instance_centroids(&square_labels());
        assert_eq!((c[0].row, c[0].col), (2.0, 2.0));

        let mut l = LabelMap::filled(5, 5, 0);
        l.set(0, 4, 3);
        let c = instance_centroids(&l);
        assert_eq!((c[0].instance_id, c[0].row, c[0].col), (3, 0.0, 4.0));

        let l = LabelMap::from_rows(&[[1, 0], [1, 1]]);
        let c = instance_centroids(&l);
        assert_eq!(c[0].row, 2.0 / 3.0);
        assert_eq!(c[0].col, 1.0 / 3.0);
    }

    #[test]
    fn downsample_examples() {
        let f = Field::<f64>::filled(4, 6, 1, 3.5);
        let d = downsample_field(&f, 2).unwrap();
        assert_eq!(d.dims(), (2, 3));
        assert!(d.as_slice().iter().all(|&v| v == 3.5));

        let f = Field::from_vec(2, 2, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(downsample_field(&f, 2).unwrap().as_slice(), &[1.5]);

        let f = Field::<f64>::from_fn(4, 4, 1, |r, c, _| ((r + c) % 2) as f64);
        assert!(downsample_field(&f, 2)
            .unwrap()
            .as_slice()
            .iter()
            .all(|&v| v == 0.5));

        assert!(downsample_field(&f, 3).is_err());
    }

    #[test]
    fn semantic_majority_ties_to_lowest() {
        use SemanticClass::*;
        let m = Grid::from_rows(&[[Inside, Contour], [Inside, Contour]]);
        assert_eq!(downsample_semantic(&m, 2).unwrap().as_slice(), &[Inside]);
        let m = Grid::from_rows(&[[Contour, Contour], [Inside, Background]]);
        assert_eq!(downsample_semantic(&m, 2).unwrap().as_slice(), &[Contour]);
    }
}
