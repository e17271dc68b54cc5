//! From probability maps back to instances.
//!
//! MAP and threshold decoding produce a semantic map, which
//! [`semantic_to_instances`] turns into instances: connected cell regions get
//! their own label and each touching pixel joins the cell region whose
//! nearest pixel is closest to it. Watershed decoding floods `z2 - z1` from
//! confident background and cell markers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{Class, Grid, InstanceMap, ProbabilityMap, SemanticMap};
use crate::morphology::{
    connected_components, extract_contours, nearest_contour_map, watershed_with, Connectivity,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdParams {
    /// Cell threshold.
    pub gamma1: f64,
    /// Touching threshold.
    pub gamma2: f64,
}

impl ThresholdParams {
    pub fn new(gamma1: f64, gamma2: f64) -> Result<Self> {
        let params = ThresholdParams { gamma1, gamma2 };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        unit_interval("gamma1", self.gamma1)?;
        unit_interval("gamma2", self.gamma2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WatershedParams {
    /// Background marker threshold.
    pub tau0: f64,
    /// Cell marker threshold.
    pub tau1: f64,
}

impl Default for WatershedParams {
    fn default() -> Self {
        WatershedParams { tau0: 0.8, tau1: 0.8 }
    }
}

impl WatershedParams {
    pub fn validate(&self) -> Result<()> {
        unit_interval("tau0", self.tau0)?;
        unit_interval("tau1", self.tau1)
    }
}

fn unit_interval(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must lie in [0, 1], got {v}")))
    }
}

/// Per-pixel argmax; ties go to the larger class id.
pub fn decode_map(z: &ProbabilityMap) -> Result<SemanticMap> {
    z.require_channels(3)?;
    let classes = (0..z.pixel_count())
        .map(|i| {
            let mut best = Class::Background;
            let mut best_p = z.at(0, i);
            for class in [Class::Cell, Class::Touching] {
                let p = z.at(class.id(), i);
                if p >= best_p {
                    best = class;
                    best_p = p;
                }
            }
            best
        })
        .collect();
    Ok(SemanticMap::new(Grid::new(z.width(), z.height(), classes)?))
}

/// Touching where `z2 >= gamma2`, else cell where `z1 >= gamma1`, else
/// background.
pub fn decode_threshold(z: &ProbabilityMap, params: &ThresholdParams) -> Result<SemanticMap> {
    z.require_channels(3)?;
    params.validate()?;
    let classes = (0..z.pixel_count())
        .map(|i| {
            if z.at(2, i) >= params.gamma2 {
                Class::Touching
            } else if z.at(1, i) >= params.gamma1 {
                Class::Cell
            } else {
                Class::Background
            }
        })
        .collect();
    Ok(SemanticMap::new(Grid::new(z.width(), z.height(), classes)?))
}

/// Labels 8-connected cell regions and hands every touching pixel the label
/// of the nearest cell pixel (ties to the smallest `(row, col)`).
pub fn semantic_to_instances(hhat: &SemanticMap) -> Result<InstanceMap> {
    let cells = hhat.map(|&c| c == Class::Cell);
    let mut labels = connected_components(&cells, Connectivity::Eight);
    if !hhat.data().contains(&Class::Touching) {
        return Ok(labels);
    }
    let contours = extract_contours(&labels);
    if contours.is_empty() {
        return Err(Error::InvalidRaster("touching pixels present but no cell pixels".into()));
    }
    let nearest = nearest_contour_map(&contours)?;
    let source = labels.grid().clone();
    for (i, &class) in hhat.data().iter().enumerate() {
        if class == Class::Touching {
            labels.grid_mut().data_mut()[i] = source.data()[nearest.nearest_offset(i)];
        }
    }
    Ok(labels)
}

/// Marker-controlled watershed on `z2 - z1`.
///
/// A pixel is a background marker when `z0 >= tau0`, unless it also passes
/// the cell threshold with `z1 > z0`; it is a cell marker when `z1 >= tau1`
/// and not a background marker. Background and cell markers are grouped
/// into 8-connected components separately; a component whose mean `z0`
/// exceeds its mean `z1` floods as background. Background never spreads into
/// pixels where `z2 > z0`, and cells never spread into pixels where `z0`
/// beats both `z1` and `z2`. Background basins (and pixels no marker
/// reaches) end up as `0`.
pub fn decode_watershed(z: &ProbabilityMap, params: &WatershedParams) -> Result<InstanceMap> {
    z.require_channels(3)?;
    params.validate()?;
    let (width, height) = (z.width(), z.height());
    let n = z.pixel_count();
    let is_bg = |i: usize| {
        let (z0, z1) = (z.at(0, i), z.at(1, i));
        z0 >= params.tau0 && !(z1 >= params.tau1 && z1 > z0)
    };
    let bg_mask = Grid::new(width, height, (0..n).map(is_bg).collect())?;
    let cell_mask = Grid::new(
        width,
        height,
        (0..n).map(|i| z.at(1, i) >= params.tau1 && !is_bg(i)).collect(),
    )?;
    let cell_components = connected_components(&cell_mask, Connectivity::Eight);
    let bg_components = connected_components(&bg_mask, Connectivity::Eight);
    let cell_count = cell_components.max_label();
    let total = cell_count + bg_components.max_label();
    if total == 0 {
        return Err(Error::Empty("watershed markers"));
    }

    let mut markers = cell_components.grid().clone();
    for (i, &l) in bg_components.data().iter().enumerate() {
        if l != 0 {
            markers.data_mut()[i] = cell_count + l;
        }
    }
    let mut sums = vec![(0.0f64, 0.0f64); total as usize + 1];
    for (i, &l) in markers.data().iter().enumerate() {
        if l != 0 {
            sums[l as usize].0 += z.at(0, i);
            sums[l as usize].1 += z.at(1, i);
        }
    }
    let background: Vec<bool> = sums.iter().map(|&(s0, s1)| s0 > s1).collect();

    let topography = Grid::new(width, height, (0..n).map(|i| z.at(2, i) - z.at(1, i)).collect())?;
    let flooded = watershed_with(&topography, &InstanceMap::new(markers), |label, q| {
        let (z0, z1, z2) = (z.at(0, q), z.at(1, q), z.at(2, q));
        if background[label as usize] { z2 <= z0 } else { z1.max(z2) >= z0 }
    })?;
    let labels = flooded.map(|&l| if background[l as usize] { 0 } else { l });
    Ok(InstanceMap::new(labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Map,
    Th,
    Wt,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "map" => Ok(Strategy::Map),
            "th" => Ok(Strategy::Th),
            "wt" => Ok(Strategy::Wt),
            other => Err(Error::InvalidParameter(format!("unknown strategy '{other}'"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Map => "map",
            Strategy::Th => "th",
            Strategy::Wt => "wt",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeParams {
    pub strategy: Strategy,
    pub gamma1: Option<f64>,
    pub gamma2: Option<f64>,
    pub tau0: Option<f64>,
    pub tau1: Option<f64>,
    /// Instances with fewer pixels are dropped to background.
    pub min_instance_area: usize,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            strategy: Strategy::Wt,
            gamma1: None,
            gamma2: None,
            tau0: None,
            tau1: None,
            min_instance_area: 0,
        }
    }
}

impl DecodeParams {
    pub fn threshold(&self) -> Result<ThresholdParams> {
        match (self.gamma1, self.gamma2) {
            (Some(g1), Some(g2)) => ThresholdParams::new(g1, g2),
            _ => Err(Error::InvalidParameter("missing thresholds gamma1/gamma2".into())),
        }
    }

    pub fn watershed(&self) -> WatershedParams {
        let defaults = WatershedParams::default();
        WatershedParams {
            tau0: self.tau0.unwrap_or(defaults.tau0),
            tau1: self.tau1.unwrap_or(defaults.tau1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.strategy {
            Strategy::Th => self.threshold().map(|_| ()),
            Strategy::Wt => self.watershed().validate(),
            Strategy::Map => Ok(()),
        }
    }
}

pub fn decode(z: &ProbabilityMap, params: &DecodeParams) -> Result<InstanceMap> {
    let mut labels = match params.strategy {
        Strategy::Map => semantic_to_instances(&decode_map(z)?)?,
        Strategy::Th => semantic_to_instances(&decode_threshold(z, &params.threshold()?)?)?,
        Strategy::Wt => decode_watershed(z, &params.watershed())?,
    };
    if params.min_instance_area > 0 {
        remove_small_instances(&mut labels, params.min_instance_area);
    }
    Ok(labels)
}

fn remove_small_instances(labels: &mut InstanceMap, min_area: usize) {
    let mut area = std::collections::HashMap::<u32, usize>::new();
    for &l in labels.data() {
        if l != 0 {
            *area.entry(l).or_default() += 1;
        }
    }
    for l in labels.grid_mut().data_mut() {
        if *l != 0 && area[l] < min_area {
            *l = 0;
        }
    }
}
