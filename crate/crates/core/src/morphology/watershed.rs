//! Marker-controlled watershed by priority flood.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::imagecore::{check_same_shape, Grid, InstanceMap};

#[derive(Debug, Clone, Copy)]
struct Entry {
    value: f64,
    seq: u64,
    offset: u32,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // reversed: BinaryHeap pops the lowest value, then the oldest entry
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .value
            .total_cmp(&self.value)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Floods `topography` from the positive labels of `markers`.
///
/// Marker pixels enter the queue in row-major order. The lowest queued pixel
/// is expanded first (FIFO among equal values) and labels each unlabeled
/// 8-neighbour with its own label. Marker pixels keep their labels and every
/// pixel reachable from a marker is labeled.
pub fn watershed(topography: &Grid<f64>, markers: &InstanceMap) -> Result<InstanceMap> {
    watershed_with(topography, markers, |_, _| true)
}

/// As [`watershed`], but a label only spreads into pixel `offset` when
/// `admit(label, offset)` holds. Pixels no label may enter stay `0`.
pub fn watershed_with(
    topography: &Grid<f64>,
    markers: &InstanceMap,
    mut admit: impl FnMut(u32, usize) -> bool,
) -> Result<InstanceMap> {
    check_same_shape(topography, markers.grid(), "watershed topography and markers")?;
    if let Some(v) = topography.data().iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidRaster(format!("non-finite topography value {v}")));
    }
    let mut labels = markers.grid().clone();
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    for (offset, &label) in labels.data().iter().enumerate() {
        if label != 0 {
            heap.push(Entry { value: topography.data()[offset], seq, offset: offset as u32 });
            seq += 1;
        }
    }
    if heap.is_empty() {
        return Err(Error::Empty("watershed markers"));
    }
    let mut queued = labels.map(|&l| l != 0);
    while let Some(Entry { offset, .. }) = heap.pop() {
        let offset = offset as usize;
        let label = labels.data()[offset];
        let neighbors: Vec<usize> = labels.neighbors8(offset).collect();
        for q in neighbors {
            if queued.data()[q] || !admit(label, q) {
                continue;
            }
            queued.data_mut()[q] = true;
            labels.data_mut()[q] = label;
            heap.push(Entry { value: topography.data()[q], seq, offset: q as u32 });
            seq += 1;
        }
    }
    Ok(InstanceMap::new(labels))
}
