//! Raster types and file I/O shared by every stage.

mod grid;
mod io;
mod npy;
mod types;

pub use grid::{Grid, Mask};
pub(crate) use grid::{check_same_shape, NEIGHBORS8};
pub use io::{
    read_gray_image, read_label_map, read_probability_map, read_semantic_map, read_weight_map,
    write_gray_image, write_label_map, write_probability_map, write_semantic_map, write_weight_map,
};
pub use io::write_atomic;
pub use npy::{read_array, write_array, FloatArray};
pub use types::{
    Class, GrayImage, InstanceMap, OneHotMap, ProbabilityMap, SemanticMap, WeightMap,
    PROBABILITY_SUM_TOLERANCE,
};
