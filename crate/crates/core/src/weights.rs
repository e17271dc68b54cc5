//! Per-pixel loss weight maps.
//!
//! [`w3_weight_map`] builds the contour-aware triplex weights:
//!
//! * background: `nu/n0 + nu * phi_beta(d_fg) / n1`, where `d_fg` is the
//!   distance to the nearest non-background pixel;
//! * cell contour: `nu/n1 + nu * phi_beta(d_skel)`, where `d_skel` is the
//!   distance to the union of instance skeletons;
//! * cell interior: `nu/n1 + w(c) * exp(-d_c^2 / sigma^2)`, where `c` is the
//!   nearest contour pixel, `d_c` the distance to it and `w(c)` its weight;
//! * touching: `nu/n2`.
//!
//! `phi_beta(u) = max(0, 1 - u/beta)`. Reciprocal terms of absent classes
//! are dropped, except that a map without cell pixels is rejected.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gtprep::class_counts;
use crate::imagecore::{check_same_shape, Class, Grid, InstanceMap, SemanticMap, WeightMap};
use crate::morphology::{extract_contours, nearest_contour_map, nearest_source, skeletonize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct W3Params {
    /// Saturation distance in pixels.
    pub beta: f64,
    /// Amplitude.
    pub nu: f64,
    /// Gaussian width in pixels.
    pub sigma: f64,
}

impl Default for W3Params {
    fn default() -> Self {
        W3Params { beta: 30.0, nu: 1.0, sigma: 5.0 }
    }
}

impl W3Params {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("beta", self.beta), ("nu", self.nu), ("sigma", self.sigma)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Rectified inverse ramp saturating at `beta`.
#[inline]
pub fn phi_beta(u: f64, beta: f64) -> f64 {
    (1.0 - u / beta).max(0.0)
}

pub fn w3_weight_map(g: &InstanceMap, h: &SemanticMap, params: &W3Params) -> Result<WeightMap> {
    params.validate()?;
    check_same_shape(g.grid(), h.grid(), "instance and semantic maps")?;
    let counts = class_counts(h);
    if counts.n1 == 0 {
        return Err(Error::InvalidParameter("weight map needs at least one cell pixel".into()));
    }
    let nu = params.nu;
    let recip = |n: usize| if n > 0 { nu / n as f64 } else { 0.0 };
    let (base0, base1, base2) = (recip(counts.n0), recip(counts.n1), recip(counts.n2));

    let contours = extract_contours(g);
    let to_contour = nearest_contour_map(&contours)?;
    let to_skeleton = nearest_source(&skeletonize(g))?;
    let foreground = h.map(|&c| c != Class::Background);
    let to_foreground = nearest_source(&foreground)?;

    let on_contour = contours.mask().data();
    let classes = h.data();
    let dist = |grid: &Grid<u64>, i: usize| (grid.data()[i] as f64).sqrt();

    let direct = |i: usize| -> f64 {
        match classes[i] {
            Class::Background => {
                base0 + nu * phi_beta(dist(to_foreground.sq_distances(), i), params.beta) / counts.n1 as f64
            }
            Class::Cell => base1 + nu * phi_beta(dist(to_skeleton.sq_distances(), i), params.beta),
            Class::Touching => base2,
        }
    };

    let mut weights = vec![0.0; h.len()];
    for i in 0..h.len() {
        if on_contour[i] {
            weights[i] = direct(i);
        }
    }
    let contour_sq = to_contour.inner().sq_distances();
    let sigma_sq = params.sigma * params.sigma;
    for i in 0..h.len() {
        if on_contour[i] {
            continue;
        }
        weights[i] = match classes[i] {
            Class::Cell => {
                let anchor = weights[to_contour.nearest_offset(i)];
                let d_sq = contour_sq.data()[i] as f64;
                base1 + anchor * (-d_sq / sigma_sq).exp()
            }
            _ => direct(i),
        };
    }
    WeightMap::new(Grid::new(h.width(), h.height(), weights)?)
}

/// Class-balance weights: `1 / n_l` at every pixel of class `l`.
pub fn balanced_weight_map(h: &SemanticMap) -> WeightMap {
    let counts = class_counts(h);
    let grid = h.map(|&c| 1.0 / counts.get(c) as f64);
    WeightMap::new(grid).expect("reciprocal counts are positive")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gtprep::{instance_to_semantic, NeighborhoodSpec};

    #[test]
    fn phi_beta_values() {
        assert_eq!(phi_beta(0.0, 30.0), 1.0);
        assert_eq!(phi_beta(30.0, 30.0), 0.0);
        assert_eq!(phi_beta(45.0, 30.0), 0.0);
        assert_eq!(phi_beta(15.0, 30.0), 0.5);
    }

    #[test]
    fn params_validated() {
        assert!(W3Params { beta: -1.0, ..Default::default() }.validate().is_err());
        assert!(W3Params { sigma: 0.0, ..Default::default() }.validate().is_err());
        assert!(W3Params { nu: f64::NAN, ..Default::default() }.validate().is_err());
        assert!(W3Params::default().validate().is_ok());
    }

    fn two_squares() -> (InstanceMap, SemanticMap) {
        let g = InstanceMap::new(Grid::from_fn(40, 24, |r, c| match (r, c) {
            (6..=15, 6..=15) => 1,
            (6..=15, 16..=25) => 2,
            _ => 0,
        }));
        let h = instance_to_semantic(&g, NeighborhoodSpec::default());
        (g, h)
    }

    #[test]
    fn no_cells_rejected() {
        let g = InstanceMap::background(5, 5);
        let h = instance_to_semantic(&g, NeighborhoodSpec::default());
        assert!(w3_weight_map(&g, &h, &W3Params::default()).is_err());
    }

    #[test]
    fn case_spot_checks() {
        let (g, h) = two_squares();
        let params = W3Params { beta: 5.0, nu: 2.0, sigma: 3.0 };
        let w = w3_weight_map(&g, &h, &params).unwrap();
        let counts = class_counts(&h);
        for (i, &c) in h.data().iter().enumerate() {
            if c == Class::Touching {
                assert_eq!(w.data()[i], params.nu / counts.n2 as f64);
            }
        }
        // (0,39) is far from every cell
        assert_eq!(w[(0, 39)], params.nu / counts.n0 as f64);
        // background weights exceed the floor close to cells
        assert!(w[(5, 10)] > params.nu / counts.n0 as f64);
    }

    #[test]
    fn thin_bar_contour_weight() {
        let g = InstanceMap::new(Grid::from_fn(12, 5, |r, c| (r == 2 && (2..10).contains(&c)) as u32));
        let h = instance_to_semantic(&g, NeighborhoodSpec::default());
        let params = W3Params::default();
        let w = w3_weight_map(&g, &h, &params).unwrap();
        let n1 = class_counts(&h).n1 as f64;
        for c in 2..10 {
            assert_eq!(w[(2, c)], params.nu / n1 + params.nu);
        }
    }

    #[test]
    fn scales_linearly_in_nu() {
        let (g, h) = two_squares();
        let w1 = w3_weight_map(&g, &h, &W3Params { nu: 1.0, ..Default::default() }).unwrap();
        let w3 = w3_weight_map(&g, &h, &W3Params { nu: 3.0, ..Default::default() }).unwrap();
        for (a, b) in w1.data().iter().zip(w3.data()) {
            assert!((3.0 * a - b).abs() <= 1e-12 * b.abs());
        }
    }

    #[test]
    fn balanced_counts() {
        let h = SemanticMap::from_ids(4, 1, &[0, 0, 1, 2]).unwrap();
        assert_eq!(balanced_weight_map(&h).data(), &[0.5, 0.5, 1.0, 1.0]);
        let h = SemanticMap::from_ids(4, 1, &[1; 4]).unwrap();
        assert_eq!(balanced_weight_map(&h).data(), &[0.25; 4]);
    }
}
