use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Row-major 2-D raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Binary raster.
pub type Mask = Grid<bool>;

impl<T> Grid<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {width}x{height} raster",
                data.len()
            )));
        }
        Ok(Grid { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Grid { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `(height, width)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn offset(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.height && col < self.width);
        row * self.width + col
    }

    /// `(row, col)` of a linear offset.
    #[inline]
    pub fn coords(&self, offset: usize) -> (usize, usize) {
        (offset / self.width, offset % self.width)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.data[row * self.width + col]
    }

    /// Bounds-checked access with signed coordinates.
    #[inline]
    pub fn get_signed(&self, row: isize, col: isize) -> Option<&T> {
        if row < 0 || col < 0 || row as usize >= self.height || col as usize >= self.width {
            None
        } else {
            Some(&self.data[row as usize * self.width + col as usize])
        }
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// Offsets of the in-bounds 8-neighbours of `offset`, in a fixed order
    /// (north-west first, row-major around the centre).
    pub fn neighbors8(&self, offset: usize) -> impl Iterator<Item = usize> + '_ {
        let (row, col) = self.coords(offset);
        NEIGHBORS8.iter().filter_map(move |&(dr, dc)| {
            let r = row as isize + dr;
            let c = col as isize + dc;
            if r < 0 || c < 0 || r as usize >= self.height || c as usize >= self.width {
                None
            } else {
                Some(r as usize * self.width + c as usize)
            }
        })
    }

    /// Offsets of the in-bounds 4-neighbours of `offset` (N, W, E, S).
    pub fn neighbors4(&self, offset: usize) -> impl Iterator<Item = usize> + '_ {
        let (row, col) = self.coords(offset);
        NEIGHBORS4.iter().filter_map(move |&(dr, dc)| {
            let r = row as isize + dr;
            let c = col as isize + dc;
            if r < 0 || c < 0 || r as usize >= self.height || c as usize >= self.width {
                None
            } else {
                Some(r as usize * self.width + c as usize)
            }
        })
    }
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Grid {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Rows become columns: output `(r, c)` = input `(c, r)`.
    pub fn transposed(&self) -> Self {
        Grid::from_fn(self.height, self.width, |r, c| self.get(c, r).clone())
    }
}

pub(crate) const NEIGHBORS8: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

pub(crate) const NEIGHBORS4: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];

impl<T> Index<(usize, usize)> for Grid<T> {
    type Output = T;

    fn index(&self, (row, col): (usize, usize)) -> &T {
        assert!(row < self.height && col < self.width, "({row}, {col}) out of bounds");
        &self.data[row * self.width + col]
    }
}

impl<T> IndexMut<(usize, usize)> for Grid<T> {
    fn index_mut(&mut self, (row, col): (usize, usize)) -> &mut T {
        assert!(row < self.height && col < self.width, "({row}, {col}) out of bounds");
        &mut self.data[row * self.width + col]
    }
}

pub(crate) fn check_same_shape<A, B>(a: &Grid<A>, b: &Grid<B>, what: &str) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!(
            "{what}: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )))
    }
}
