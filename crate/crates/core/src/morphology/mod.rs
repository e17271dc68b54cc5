//! Geometry kernels: connected components, contours, exact distance
//! transforms, skeletons, median filtering and watershed.

mod components;
mod contours;
mod edt;
mod median;
mod skeleton;
mod watershed;

pub use components::{connected_components, Connectivity};
pub use contours::{extract_contours, ContourSet};
pub use edt::{
    distance_transform, nearest_contour_map, nearest_source, DistanceField, NearestContourIndex,
    NearestSource,
};
pub use median::median_filter;
pub use skeleton::skeletonize;
pub use watershed::{watershed, watershed_with};
