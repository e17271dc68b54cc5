//! Three-class semantic ground truth from instance labels.
//!
//! Background stays class 0. A labeled pixel becomes touching (class 2) when
//! its `(2k+1) x (2k+1)` neighbourhood, clipped to the image, holds more than
//! one pixel of a *different* nonzero label; every other labeled pixel is a
//! cell (class 1).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{Class, Grid, InstanceMap, OneHotMap, SemanticMap};

/// Neighbourhood radius `k`; the window side is `2k + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct NeighborhoodSpec(usize);

impl NeighborhoodSpec {
    pub const DEFAULT_RADIUS: usize = 2;

    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("neighbourhood radius k must be >= 1".into()));
        }
        Ok(NeighborhoodSpec(k))
    }

    pub fn radius(self) -> usize {
        self.0
    }
}

impl Default for NeighborhoodSpec {
    fn default() -> Self {
        NeighborhoodSpec(Self::DEFAULT_RADIUS)
    }
}

impl TryFrom<usize> for NeighborhoodSpec {
    type Error = Error;

    fn try_from(k: usize) -> Result<Self> {
        NeighborhoodSpec::new(k)
    }
}

impl From<NeighborhoodSpec> for usize {
    fn from(k: NeighborhoodSpec) -> usize {
        k.0
    }
}

/// Pixel count per semantic class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub n0: usize,
    pub n1: usize,
    pub n2: usize,
}

impl ClassCounts {
    pub fn get(&self, class: Class) -> usize {
        match class {
            Class::Background => self.n0,
            Class::Cell => self.n1,
            Class::Touching => self.n2,
        }
    }

    pub fn total(&self) -> usize {
        self.n0 + self.n1 + self.n2
    }
}

pub fn instance_to_semantic(g: &InstanceMap, k: NeighborhoodSpec) -> SemanticMap {
    let (height, width) = g.shape();
    let k = k.radius();
    let labels = g.data();
    let mut classes = vec![Class::Background; g.len()];
    classes
        .par_chunks_mut(width.max(1))
        .enumerate()
        .for_each(|(row, out)| {
            let r0 = row.saturating_sub(k);
            let r1 = (row + k).min(height - 1);
            for (col, slot) in out.iter_mut().enumerate() {
                let label = labels[row * width + col];
                if label == 0 {
                    continue;
                }
                let c0 = col.saturating_sub(k);
                let c1 = (col + k).min(width - 1);
                let mut foreign = 0;
                'window: for r in r0..=r1 {
                    for &other in &labels[r * width + c0..=r * width + c1] {
                        if other != 0 && other != label {
                            foreign += 1;
                            if foreign > 1 {
                                break 'window;
                            }
                        }
                    }
                }
                *slot = if foreign > 1 { Class::Touching } else { Class::Cell };
            }
        });
    SemanticMap::new(Grid::new(width, height, classes).expect("shape preserved"))
}

pub fn one_hot(h: &SemanticMap) -> OneHotMap {
    let planes = Class::ALL.iter().map(|&class| h.map(|&c| c == class)).collect();
    OneHotMap::from_planes_unchecked(planes)
}

pub fn class_counts(h: &SemanticMap) -> ClassCounts {
    let mut counts = ClassCounts::default();
    for &c in h.data() {
        match c {
            Class::Background => counts.n0 += 1,
            Class::Cell => counts.n1 += 1,
            Class::Touching => counts.n2 += 1,
        }
    }
    counts
}
