//! Exact Euclidean distance transform.
//!
//! Two separable passes: a column scan finds the nearest source in each
//! column, then a lower-envelope-of-parabolas scan along each row combines
//! them. All arithmetic is integer, so distances are exact and equal-distance
//! ties can be resolved toward the lexicographically smallest `(row, col)`
//! source.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::imagecore::{Grid, Mask};

use super::contours::ContourSet;

/// Per-pixel Euclidean distance to a source set, in pixel units.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField(Grid<f64>);

impl DistanceField {
    pub fn values(&self) -> &Grid<f64> {
        &self.0
    }

    pub fn into_grid(self) -> Grid<f64> {
        self.0
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        *self.0.get(row, col)
    }
}

/// Squared distance and offset of the nearest source for every pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NearestSource {
    sq_dist: Grid<u64>,
    source: Grid<u32>,
}

impl NearestSource {
    pub fn sq_distances(&self) -> &Grid<u64> {
        &self.sq_dist
    }

    /// Linear offset of the chosen source.
    pub fn sources(&self) -> &Grid<u32> {
        &self.source
    }

    pub fn distance_field(&self) -> DistanceField {
        DistanceField(self.sq_dist.map(|&d| (d as f64).sqrt()))
    }
}

/// Exact Euclidean distance to the nearest `true` pixel of `source`.
pub fn distance_transform(source: &Mask) -> Result<DistanceField> {
    Ok(nearest_source(source)?.distance_field())
}

/// For each pixel the closest contour pixel, with ties broken toward the
/// smallest `(row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NearestContourIndex {
    nearest: NearestSource,
}

impl NearestContourIndex {
    /// `(row, col)` of the contour pixel closest to `(row, col)`.
    pub fn nearest(&self, row: usize, col: usize) -> (usize, usize) {
        let grid = &self.nearest.source;
        grid.coords(*grid.get(row, col) as usize)
    }

    /// Linear offset of the closest contour pixel.
    pub fn nearest_offset(&self, offset: usize) -> usize {
        self.nearest.source.data()[offset] as usize
    }

    pub fn distance(&self, row: usize, col: usize) -> f64 {
        (*self.nearest.sq_dist.get(row, col) as f64).sqrt()
    }

    pub fn distance_field(&self) -> DistanceField {
        self.nearest.distance_field()
    }

    pub fn inner(&self) -> &NearestSource {
        &self.nearest
    }
}

pub fn nearest_contour_map(contours: &ContourSet) -> Result<NearestContourIndex> {
    if contours.is_empty() {
        return Err(Error::Empty("contour set"));
    }
    Ok(NearestContourIndex { nearest: nearest_source(contours.mask())? })
}

/// Nearest source pixel of every pixel. Errors on an empty source set.
pub fn nearest_source(source: &Mask) -> Result<NearestSource> {
    let (height, width) = source.shape();
    if !source.data().iter().any(|&b| b) {
        return Err(Error::Empty("distance transform source set"));
    }

    // Column pass: nearest source row within each column, ties to the smaller row.
    let mut col_row: Vec<Option<u32>> = vec![None; source.len()];
    let mut above: Vec<Option<usize>> = vec![None; height];
    for col in 0..width {
        let mut last = None;
        for (row, slot) in above.iter_mut().enumerate() {
            if *source.get(row, col) {
                last = Some(row);
            }
            *slot = last;
        }
        let mut below = None;
        for row in (0..height).rev() {
            if *source.get(row, col) {
                below = Some(row);
            }
            let best = match (above[row], below) {
                (Some(a), Some(b)) => Some(if row - a <= b - row { a } else { b }),
                (a, b) => a.or(b),
            };
            col_row[row * width + col] = best.map(|r| r as u32);
        }
    }

    let mut sq_dist = vec![0u64; source.len()];
    let mut nearest = vec![0u32; source.len()];
    let mut env = Envelope::with_capacity(width);
    for row in 0..height {
        env.clear();
        for col in 0..width {
            if let Some(src_row) = col_row[row * width + col] {
                let dy = row as i64 - src_row as i64;
                env.push(col as i64, dy * dy, src_row);
            }
        }
        let mut k = 0;
        for col in 0..width {
            let x = col as i64;
            while k + 1 < env.len() && env.starts_at_or_before(k + 1, x) {
                k += 1;
            }
            let mut best = k;
            let mut best_val = env.value(k, x);
            let mut j = k;
            while j > 0 && env.starts_exactly_at(j, x) {
                j -= 1;
                let v = env.value(j, x);
                debug_assert_eq!(v, best_val);
                if v < best_val || (v == best_val && env.key(j) < env.key(best)) {
                    best = j;
                    best_val = v;
                }
            }
            let (src_row, src_col) = env.key(best);
            sq_dist[row * width + col] = best_val as u64;
            nearest[row * width + col] = (src_row as usize * width + src_col as usize) as u32;
        }
    }

    Ok(NearestSource {
        sq_dist: Grid::new(width, height, sq_dist).expect("shape"),
        source: Grid::new(width, height, nearest).expect("shape"),
    })
}

/// Rational `num / den` with `den > 0`.
#[derive(Debug, Clone, Copy)]
struct Ratio {
    num: i64,
    den: i64,
}

impl Ratio {
    fn cmp(self, other: Ratio) -> Ordering {
        (self.num as i128 * other.den as i128).cmp(&(other.num as i128 * self.den as i128))
    }

    fn cmp_int(self, x: i64) -> Ordering {
        (self.num as i128).cmp(&(x as i128 * self.den as i128))
    }
}

/// Lower envelope of parabolas `(x - col)^2 + f` over one row. A parabola
/// that touches the envelope at a single point is kept so that ties there
/// can be resolved by key.
struct Envelope {
    cols: Vec<i64>,
    f: Vec<i64>,
    src_rows: Vec<u32>,
    // starts[k] is where parabola k begins to be minimal; starts[0] is -inf
    starts: Vec<Ratio>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Envelope {
            cols: Vec::with_capacity(n),
            f: Vec::with_capacity(n),
            src_rows: Vec::with_capacity(n),
            starts: Vec::with_capacity(n),
        }
    }

    fn clear(&mut self) {
        self.cols.clear();
        self.f.clear();
        self.src_rows.clear();
        self.starts.clear();
    }

    fn len(&self) -> usize {
        self.cols.len()
    }

    fn push(&mut self, col: i64, f: i64, src_row: u32) {
        loop {
            let Some(top) = self.cols.len().checked_sub(1) else {
                self.starts.push(Ratio { num: 0, den: 1 });
                break;
            };
            let p = self.cols[top];
            let s = Ratio {
                num: (f + col * col) - (self.f[top] + p * p),
                den: 2 * (col - p),
            };
            if top > 0 && s.cmp(self.starts[top]) == Ordering::Less {
                self.cols.pop();
                self.f.pop();
                self.src_rows.pop();
                self.starts.pop();
                continue;
            }
            self.starts.push(s);
            break;
        }
        self.cols.push(col);
        self.f.push(f);
        self.src_rows.push(src_row);
    }

    fn starts_at_or_before(&self, k: usize, x: i64) -> bool {
        k > 0 && self.starts[k].cmp_int(x) != Ordering::Greater
    }

    fn starts_exactly_at(&self, k: usize, x: i64) -> bool {
        k > 0 && self.starts[k].cmp_int(x) == Ordering::Equal
    }

    fn value(&self, k: usize, x: i64) -> i64 {
        let d = x - self.cols[k];
        d * d + self.f[k]
    }

    fn key(&self, k: usize) -> (u32, i64) {
        (self.src_rows[k], self.cols[k])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// O(N^2) scan: smallest squared distance, ties to smallest (row, col).
    fn brute(mask: &Mask) -> (Vec<u64>, Vec<u32>) {
        let (h, w) = mask.shape();
        let sources: Vec<(usize, usize)> = (0..h)
            .flat_map(|r| (0..w).map(move |c| (r, c)))
            .filter(|&(r, c)| *mask.get(r, c))
            .collect();
        let mut d = Vec::new();
        let mut s = Vec::new();
        for r in 0..h {
            for c in 0..w {
                let mut best = (u64::MAX, 0usize, 0usize);
                for &(sr, sc) in &sources {
                    let dr = r as i64 - sr as i64;
                    let dc = c as i64 - sc as i64;
                    let cand = ((dr * dr + dc * dc) as u64, sr, sc);
                    if cand < best {
                        best = cand;
                    }
                }
                d.push(best.0);
                s.push((best.1 * w + best.2) as u32);
            }
        }
        (d, s)
    }

    #[test]
    fn three_four_five() {
        let mut m = Grid::filled(6, 6, false);
        m[(0, 0)] = true;
        let d = distance_transform(&m).unwrap();
        assert_eq!(d.at(3, 4), 5.0);
        assert_eq!(d.at(0, 0), 0.0);
    }

    #[test]
    fn empty_source_is_error() {
        let m = Grid::filled(3, 3, false);
        assert!(matches!(distance_transform(&m), Err(Error::Empty(_))));
    }

    #[test]
    fn lexicographic_tie() {
        let mut m = Grid::filled(3, 3, false);
        m[(0, 2)] = true;
        m[(2, 0)] = true;
        let n = nearest_source(&m).unwrap();
        // (1,1) and (0,0), (2,2) are equidistant to both sources
        for (r, c) in [(1, 1), (0, 0), (2, 2)] {
            assert_eq!(n.sources().coords(*n.sources().get(r, c) as usize), (0, 2));
        }
    }

    #[test]
    fn cocircular_sources_pick_smallest() {
        // four sources at distance 5 from (5,5) plus the dropped-middle case
        let mut m = Grid::filled(11, 11, false);
        for (r, c) in [(0, 5), (5, 0), (5, 10), (10, 5), (1, 2), (2, 1), (1, 8)] {
            m[(r, c)] = true;
        }
        let n = nearest_source(&m).unwrap();
        let (d, s) = brute(&m);
        assert_eq!(n.sq_distances().data(), &d[..]);
        assert_eq!(n.sources().data(), &s[..]);
    }

    fn mask_strategy(w: usize, h: usize) -> impl Strategy<Value = Mask> {
        (proptest::collection::vec(0u32..100, w * h), 1u32..30).prop_map(move |(bits, density)| {
            let mut data: Vec<bool> = bits.iter().map(|&b| b < density).collect();
            if !data.iter().any(|&b| b) {
                data[0] = true;
            }
            Grid::new(w, h, data).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn matches_brute_force(m in mask_strategy(23, 17)) {
            let n = nearest_source(&m).unwrap();
            let (d, s) = brute(&m);
            prop_assert_eq!(n.sq_distances().data(), &d[..]);
            prop_assert_eq!(n.sources().data(), &s[..]);
        }

        #[test]
        fn one_lipschitz(m in mask_strategy(20, 20)) {
            let d = distance_transform(&m).unwrap();
            let v = d.values();
            for r in 0..20 {
                for c in 0..20 {
                    if c + 1 < 20 {
                        prop_assert!((v[(r, c)] - v[(r, c + 1)]).abs() <= 1.0);
                    }
                    if r + 1 < 20 {
                        prop_assert!((v[(r, c)] - v[(r + 1, c)]).abs() <= 1.0);
                    }
                }
            }
        }
    }

    #[test]
    fn sparse_grid_ties() {
        // regular lattice sources create many equal-distance ties
        let m = Grid::from_fn(25, 19, |r, c| r % 4 == 1 && c % 4 == 2);
        let n = nearest_source(&m).unwrap();
        let (d, s) = brute(&m);
        assert_eq!(n.sq_distances().data(), &d[..]);
        assert_eq!(n.sources().data(), &s[..]);
    }
}
