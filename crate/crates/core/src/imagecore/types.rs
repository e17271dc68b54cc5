use std::ops::Deref;

use crate::error::{Error, Result};

use super::grid::{check_same_shape, Grid};

/// Largest deviation of a pixel's channel sum from 1 that a probability map
/// may carry.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-5;

/// Single-channel intensity image. Values are finite and non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage(Grid<f64>);

impl GrayImage {
    pub fn new(grid: Grid<f64>) -> Result<Self> {
        if let Some(v) = grid.data().iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidRaster(format!(
                "intensity {v} is not a finite non-negative value"
            )));
        }
        Ok(GrayImage(grid))
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(Grid::new(width, height, data)?)
    }

    pub fn grid(&self) -> &Grid<f64> {
        &self.0
    }

    pub fn into_grid(self) -> Grid<f64> {
        self.0
    }
}

impl Deref for GrayImage {
    type Target = Grid<f64>;

    fn deref(&self) -> &Grid<f64> {
        &self.0
    }
}

/// Instance labels. `0` is background; positive labels need not be contiguous.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMap(Grid<u32>);

impl InstanceMap {
    pub fn new(grid: Grid<u32>) -> Self {
        InstanceMap(grid)
    }

    pub fn from_vec(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        Ok(InstanceMap(Grid::new(width, height, labels)?))
    }

    pub fn background(width: usize, height: usize) -> Self {
        InstanceMap(Grid::filled(width, height, 0))
    }

    pub fn grid(&self) -> &Grid<u32> {
        &self.0
    }

    pub fn grid_mut(&mut self) -> &mut Grid<u32> {
        &mut self.0
    }

    pub fn into_grid(self) -> Grid<u32> {
        self.0
    }

    /// Distinct positive labels, ascending.
    pub fn labels(&self) -> Vec<u32> {
        let mut labels: Vec<u32> = self.0.data().iter().copied().filter(|&l| l != 0).collect();
        labels.sort_unstable();
        labels.dedup();
        labels
    }

    pub fn max_label(&self) -> u32 {
        self.0.data().iter().copied().max().unwrap_or(0)
    }
}

impl Deref for InstanceMap {
    type Target = Grid<u32>;

    fn deref(&self) -> &Grid<u32> {
        &self.0
    }
}

/// The three semantic classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Class {
    Background = 0,
    Cell = 1,
    Touching = 2,
}

impl Class {
    pub const ALL: [Class; 3] = [Class::Background, Class::Cell, Class::Touching];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: u64) -> Option<Class> {
        match id {
            0 => Some(Class::Background),
            1 => Some(Class::Cell),
            2 => Some(Class::Touching),
            _ => None,
        }
    }
}

/// Per-pixel semantic class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticMap(Grid<Class>);

impl SemanticMap {
    pub fn new(grid: Grid<Class>) -> Self {
        SemanticMap(grid)
    }

    /// Builds a map from raw class ids, rejecting anything outside `{0, 1, 2}`.
    pub fn from_ids(width: usize, height: usize, ids: &[u32]) -> Result<Self> {
        let classes = ids
            .iter()
            .map(|&id| {
                Class::from_id(id as u64)
                    .ok_or_else(|| Error::InvalidRaster(format!("class id {id} not in {{0,1,2}}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SemanticMap(Grid::new(width, height, classes)?))
    }

    pub fn grid(&self) -> &Grid<Class> {
        &self.0
    }

    pub fn into_grid(self) -> Grid<Class> {
        self.0
    }

    pub fn ids(&self) -> Vec<u32> {
        self.0.data().iter().map(|&c| c as u32).collect()
    }
}

impl Deref for SemanticMap {
    type Target = Grid<Class>;

    fn deref(&self) -> &Grid<Class> {
        &self.0
    }
}

/// Non-negative per-pixel loss weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap(Grid<f64>);

impl WeightMap {
    pub fn new(grid: Grid<f64>) -> Result<Self> {
        if let Some(v) = grid.data().iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidRaster(format!("weight {v} is not finite and non-negative")));
        }
        Ok(WeightMap(grid))
    }

    pub fn grid(&self) -> &Grid<f64> {
        &self.0
    }

    pub fn into_grid(self) -> Grid<f64> {
        self.0
    }

    pub fn scaled(&self, factor: f64) -> Result<WeightMap> {
        WeightMap::new(self.0.map(|w| w * factor))
    }
}

impl Deref for WeightMap {
    type Target = Grid<f64>;

    fn deref(&self) -> &Grid<f64> {
        &self.0
    }
}

/// Per-class probability planes. At every pixel the channels lie in `[0, 1]`
/// and sum to one within [`PROBABILITY_SUM_TOLERANCE`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    planes: Vec<Grid<f64>>,
}

impl ProbabilityMap {
    pub fn new(planes: Vec<Grid<f64>>) -> Result<Self> {
        let first = planes.first().ok_or(Error::Empty("probability map without channels"))?;
        for plane in &planes[1..] {
            check_same_shape(first, plane, "probability channels")?;
        }
        for i in 0..first.len() {
            let mut sum = 0.0;
            for plane in &planes {
                let v = plane.data()[i];
                if !(0.0..=1.0).contains(&v) {
                    let (r, c) = first.coords(i);
                    return Err(Error::InvalidRaster(format!(
                        "probability {v} outside [0, 1] at ({r}, {c})"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
                let (r, c) = first.coords(i);
                return Err(Error::InvalidRaster(format!(
                    "channel sum {sum} deviates from 1 at ({r}, {c})"
                )));
            }
        }
        Ok(ProbabilityMap { planes })
    }

    /// Exact one-hot probabilities of a semantic map.
    pub fn from_semantic(h: &SemanticMap) -> Self {
        let planes = Class::ALL
            .iter()
            .map(|&class| h.map(|&c| if c == class { 1.0 } else { 0.0 }))
            .collect();
        ProbabilityMap { planes }
    }

    pub fn channels(&self) -> usize {
        self.planes.len()
    }

    pub fn width(&self) -> usize {
        self.planes[0].width()
    }

    pub fn height(&self) -> usize {
        self.planes[0].height()
    }

    pub fn pixel_count(&self) -> usize {
        self.planes[0].len()
    }

    pub fn plane(&self, channel: usize) -> &Grid<f64> {
        &self.planes[channel]
    }

    pub fn planes(&self) -> &[Grid<f64>] {
        &self.planes
    }

    pub fn into_planes(self) -> Vec<Grid<f64>> {
        self.planes
    }

    /// Probability of `channel` at a linear pixel offset.
    #[inline]
    pub fn at(&self, channel: usize, offset: usize) -> f64 {
        self.planes[channel].data()[offset]
    }

    pub(crate) fn require_channels(&self, expected: usize) -> Result<()> {
        if self.planes.len() == expected {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "expected {expected} probability channels, found {}",
                self.planes.len()
            )))
        }
    }
}

/// One binary plane per class; exactly one plane is set at each pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneHotMap {
    planes: Vec<Grid<bool>>,
}

impl OneHotMap {
    pub fn new(planes: Vec<Grid<bool>>) -> Result<Self> {
        let first = planes.first().ok_or(Error::Empty("one-hot map without channels"))?;
        for plane in &planes[1..] {
            check_same_shape(first, plane, "one-hot channels")?;
        }
        for i in 0..first.len() {
            let set = planes.iter().filter(|p| p.data()[i]).count();
            if set != 1 {
                let (r, c) = first.coords(i);
                return Err(Error::InvalidRaster(format!(
                    "{set} channels set at ({r}, {c}), expected exactly one"
                )));
            }
        }
        Ok(OneHotMap { planes })
    }

    pub(crate) fn from_planes_unchecked(planes: Vec<Grid<bool>>) -> Self {
        OneHotMap { planes }
    }

    pub fn channels(&self) -> usize {
        self.planes.len()
    }

    pub fn width(&self) -> usize {
        self.planes[0].width()
    }

    pub fn height(&self) -> usize {
        self.planes[0].height()
    }

    pub fn plane(&self, channel: usize) -> &Grid<bool> {
        &self.planes[channel]
    }

    pub fn planes(&self) -> &[Grid<bool>] {
        &self.planes
    }

    /// The set channel at a linear pixel offset.
    pub fn class_at(&self, offset: usize) -> usize {
        self.planes
            .iter()
            .position(|p| p.data()[offset])
            .expect("one-hot invariant")
    }
}
