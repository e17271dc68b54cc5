//! Training-time augmentation.
//!
//! [`touching_modulation`] blends touching pixels with their 7x7 median:
//! `x_a = (1 - a) * x + a * median(x)`. Negative `a` pushes touching pixels
//! away from their surroundings (more contrast), positive `a` pulls them in.
//!
//! [`sample_augmentation`] draws one random geometric/photometric transform
//! and applies it consistently to image, instances, classes and weights.
//! Random draws come from ChaCha8 with the draw index as stream id, in this
//! order: mirror (two fair coins: horizontal, vertical), rotation (uniform
//! over the allowed quarter turns), warp displacement grid (row-major nodes,
//! `dy` then `dx`, uniform in `[-amplitude, amplitude]`), gamma (uniform in
//! `gamma_range`), modulation factor `a` (uniform in `a_range`). Disabled
//! transforms consume no draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gtprep::NeighborhoodSpec;
use crate::imagecore::{check_same_shape, Class, Grid, GrayImage, InstanceMap, SemanticMap, WeightMap};
use crate::morphology::median_filter;
use crate::weights::{w3_weight_map, W3Params};

/// Median window used by touching modulation.
pub const MODULATION_WINDOW: usize = 7;

pub fn touching_modulation(x: &GrayImage, h: &SemanticMap, a: f64) -> Result<GrayImage> {
    check_same_shape(x.grid(), h.grid(), "image and semantic map")?;
    if !(-1.0..=1.0).contains(&a) {
        return Err(Error::InvalidParameter(format!("modulation factor {a} outside [-1, 1]")));
    }
    let median = median_filter(x, MODULATION_WINDOW)?;
    let data = x
        .data()
        .iter()
        .zip(median.data())
        .zip(h.data())
        .map(|((&v, &m), &class)| {
            if class == Class::Touching {
                ((1.0 - a) * v + a * m).max(0.0)
            } else {
                v
            }
        })
        .collect();
    GrayImage::from_vec(x.width(), x.height(), data)
}

/// Divides by the maximum intensity; an all-zero image is returned as is.
pub fn normalize_intensity(x: &GrayImage) -> GrayImage {
    let max = x.data().iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return x.clone();
    }
    GrayImage::new(x.map(|&v| v / max)).expect("scaled intensities stay valid")
}

/// `max * (x / max)^gamma`: gamma applied on the normalized image, then put
/// back on the original intensity scale.
pub fn gamma_correction(x: &GrayImage, gamma: f64) -> Result<GrayImage> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    let max = x.data().iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Ok(x.clone());
    }
    GrayImage::new(x.map(|&v| max * (v / max).powf(gamma)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarpSpec {
    /// Maximum displacement in pixels.
    pub amplitude: f64,
    /// Spacing of the coarse displacement grid in pixels.
    pub cell_size: usize,
}

impl Default for WarpSpec {
    fn default() -> Self {
        WarpSpec { amplitude: 10.0, cell_size: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSpec {
    pub seed: u64,
    pub a_range: (f64, f64),
    pub gamma_range: (f64, f64),
    /// Allowed counter-clockwise quarter turns, each in `0..4`.
    pub rotations: Vec<u8>,
    pub warp: WarpSpec,
    pub mirror: bool,
    pub rotate: bool,
    pub elastic: bool,
    pub gamma: bool,
    pub touching: bool,
    /// Rebuild the weight map from the transformed labels instead of
    /// resampling it.
    pub recompute_weights: bool,
    pub weight_params: W3Params,
    pub k: NeighborhoodSpec,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        AugmentSpec {
            seed: 0,
            a_range: (-1.0, 1.0),
            gamma_range: (0.7, 1.5),
            rotations: vec![0, 1, 2, 3],
            warp: WarpSpec::default(),
            mirror: true,
            rotate: true,
            elastic: true,
            gamma: true,
            touching: true,
            recompute_weights: false,
            weight_params: W3Params::default(),
            k: NeighborhoodSpec::default(),
        }
    }
}

impl AugmentSpec {
    /// Every transform switched off.
    pub fn identity() -> Self {
        AugmentSpec {
            mirror: false,
            rotate: false,
            elastic: false,
            gamma: false,
            touching: false,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.a_range;
        if !(-1.0..=1.0).contains(&lo) || !(-1.0..=1.0).contains(&hi) || lo > hi {
            return Err(Error::InvalidParameter(format!(
                "a_range ({lo}, {hi}) must be an interval inside [-1, 1]"
            )));
        }
        let (glo, ghi) = self.gamma_range;
        if !(glo > 0.0 && ghi >= glo && ghi.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma_range ({glo}, {ghi}) must be a positive interval"
            )));
        }
        if self.rotate && (self.rotations.is_empty() || self.rotations.iter().any(|&r| r > 3)) {
            return Err(Error::InvalidParameter("rotations must be non-empty quarter turns in 0..4".into()));
        }
        if self.elastic && (self.warp.cell_size == 0 || !(self.warp.amplitude >= 0.0)) {
            return Err(Error::InvalidParameter("warp needs cell_size > 0 and amplitude >= 0".into()));
        }
        self.weight_params.validate()
    }
}

/// PRNG for draw number `index` of a seeded augmentation run.
pub fn draw_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// The random choices made for one augmented sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AugmentDraw {
    pub flip_horizontal: bool,
    pub flip_vertical: bool,
    pub quarter_turns: u8,
    pub warped: bool,
    pub gamma: Option<f64>,
    pub a: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSample {
    pub image: GrayImage,
    pub instances: InstanceMap,
    pub classes: SemanticMap,
    pub weights: WeightMap,
    pub draw: AugmentDraw,
}

pub fn sample_augmentation(
    x: &GrayImage,
    g: &InstanceMap,
    h: &SemanticMap,
    w: &WeightMap,
    spec: &AugmentSpec,
    rng: &mut impl Rng,
) -> Result<AugmentedSample> {
    spec.validate()?;
    check_same_shape(x.grid(), g.grid(), "image and instance map")?;
    check_same_shape(x.grid(), h.grid(), "image and semantic map")?;
    check_same_shape(x.grid(), w.grid(), "image and weight map")?;

    let mut image = x.grid().clone();
    let mut labels = g.grid().clone();
    let mut classes = h.grid().clone();
    let mut weights = w.grid().clone();
    let mut draw = AugmentDraw {
        flip_horizontal: false,
        flip_vertical: false,
        quarter_turns: 0,
        warped: false,
        gamma: None,
        a: None,
    };

    if spec.mirror {
        draw.flip_horizontal = rng.random_bool(0.5);
        draw.flip_vertical = rng.random_bool(0.5);
        let (fh, fv) = (draw.flip_horizontal, draw.flip_vertical);
        image = flip(&image, fh, fv);
        labels = flip(&labels, fh, fv);
        classes = flip(&classes, fh, fv);
        weights = flip(&weights, fh, fv);
    }
    if spec.rotate {
        let turns = spec.rotations[rng.random_range(0..spec.rotations.len())];
        draw.quarter_turns = turns;
        image = rotate(&image, turns);
        labels = rotate(&labels, turns);
        classes = rotate(&classes, turns);
        weights = rotate(&weights, turns);
    }
    if spec.elastic {
        let field = DisplacementField::sample(image.height(), image.width(), &spec.warp, rng);
        draw.warped = true;
        image = field.warp_bilinear(&image);
        labels = field.warp_nearest(&labels);
        classes = field.warp_nearest(&classes);
        weights = field.warp_nearest(&weights);
    }

    let mut image = GrayImage::new(image)?;
    if spec.gamma {
        let gamma = rng.random_range(spec.gamma_range.0..=spec.gamma_range.1);
        draw.gamma = Some(gamma);
        image = gamma_correction(&image, gamma)?;
    }
    let instances = InstanceMap::new(labels);
    let classes = SemanticMap::new(classes);
    if spec.touching {
        let a = rng.random_range(spec.a_range.0..=spec.a_range.1);
        draw.a = Some(a);
        image = touching_modulation(&image, &classes, a)?;
    }
    let weights = if spec.recompute_weights {
        w3_weight_map(&instances, &classes, &spec.weight_params)?
    } else {
        WeightMap::new(weights)?
    };
    Ok(AugmentedSample { image, instances, classes, weights, draw })
}

fn flip<T: Clone>(grid: &Grid<T>, horizontal: bool, vertical: bool) -> Grid<T> {
    let (h, w) = grid.shape();
    Grid::from_fn(w, h, |r, c| {
        let sr = if vertical { h - 1 - r } else { r };
        let sc = if horizontal { w - 1 - c } else { c };
        grid.get(sr, sc).clone()
    })
}

/// Counter-clockwise rotation by `turns` quarter turns.
fn rotate<T: Clone>(grid: &Grid<T>, turns: u8) -> Grid<T> {
    let (h, w) = grid.shape();
    match turns % 4 {
        0 => grid.clone(),
        1 => Grid::from_fn(h, w, |r, c| grid.get(c, w - 1 - r).clone()),
        2 => Grid::from_fn(w, h, |r, c| grid.get(h - 1 - r, w - 1 - c).clone()),
        _ => Grid::from_fn(h, w, |r, c| grid.get(h - 1 - c, r).clone()),
    }
}

/// Dense displacement field upsampled from a coarse random grid.
struct DisplacementField {
    dy: Grid<f64>,
    dx: Grid<f64>,
}

impl DisplacementField {
    fn sample(height: usize, width: usize, spec: &WarpSpec, rng: &mut impl Rng) -> Self {
        let cell = spec.cell_size as f64;
        let rows = height.saturating_sub(1).div_ceil(spec.cell_size) + 1;
        let cols = width.saturating_sub(1).div_ceil(spec.cell_size) + 1;
        let amp = spec.amplitude;
        let mut coarse_dy = Vec::with_capacity(rows * cols);
        let mut coarse_dx = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            coarse_dy.push(rng.random_range(-amp..=amp));
            coarse_dx.push(rng.random_range(-amp..=amp));
        }
        let coarse_dy = Grid::new(cols, rows, coarse_dy).expect("shape");
        let coarse_dx = Grid::new(cols, rows, coarse_dx).expect("shape");
        let dy = Grid::from_fn(width, height, |r, c| bicubic(&coarse_dy, r as f64 / cell, c as f64 / cell));
        let dx = Grid::from_fn(width, height, |r, c| bicubic(&coarse_dx, r as f64 / cell, c as f64 / cell));
        DisplacementField { dy, dx }
    }

    fn source(&self, r: usize, c: usize) -> (f64, f64) {
        (r as f64 + self.dy[(r, c)], c as f64 + self.dx[(r, c)])
    }

    fn warp_nearest<T: Clone>(&self, grid: &Grid<T>) -> Grid<T> {
        let (h, w) = grid.shape();
        Grid::from_fn(w, h, |r, c| {
            let (sr, sc) = self.source(r, c);
            let sr = (sr.round().max(0.0) as usize).min(h - 1);
            let sc = (sc.round().max(0.0) as usize).min(w - 1);
            grid.get(sr, sc).clone()
        })
    }

    fn warp_bilinear(&self, grid: &Grid<f64>) -> Grid<f64> {
        let (h, w) = grid.shape();
        Grid::from_fn(w, h, |r, c| {
            let (sr, sc) = self.source(r, c);
            let sr = sr.clamp(0.0, (h - 1) as f64);
            let sc = sc.clamp(0.0, (w - 1) as f64);
            let (r0, c0) = (sr.floor() as usize, sc.floor() as usize);
            let (r1, c1) = ((r0 + 1).min(h - 1), (c0 + 1).min(w - 1));
            let (fr, fc) = (sr - r0 as f64, sc - c0 as f64);
            let top = grid[(r0, c0)] * (1.0 - fc) + grid[(r0, c1)] * fc;
            let bottom = grid[(r1, c0)] * (1.0 - fc) + grid[(r1, c1)] * fc;
            (top * (1.0 - fr) + bottom * fr).max(0.0)
        })
    }
}

/// Catmull-Rom interpolation of a coarse grid at fractional node position.
fn bicubic(coarse: &Grid<f64>, y: f64, x: f64) -> f64 {
    let (rows, cols) = coarse.shape();
    let (iy, ix) = (y.floor() as isize, x.floor() as isize);
    let (fy, fx) = (y - iy as f64, x - ix as f64);
    let at = |r: isize, c: isize| {
        let r = r.clamp(0, rows as isize - 1) as usize;
        let c = c.clamp(0, cols as isize - 1) as usize;
        coarse[(r, c)]
    };
    let mut col_vals = [0.0; 4];
    for (k, slot) in col_vals.iter_mut().enumerate() {
        let r = iy - 1 + k as isize;
        *slot = catmull_rom(at(r, ix - 1), at(r, ix), at(r, ix + 1), at(r, ix + 2), fx);
    }
    catmull_rom(col_vals[0], col_vals[1], col_vals[2], col_vals[3], fy)
}

fn catmull_rom(p0: f64, p1: f64, p2: f64, p3: f64, t: f64) -> f64 {
    0.5 * (2.0 * p1
        + (p2 - p0) * t
        + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t * t
        + (3.0 * p1 - p0 - 3.0 * p2 + p3) * t * t * t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ridge_scene() -> (GrayImage, SemanticMap) {
        // bright vertical ridge at column 5 on a flat field
        let x = GrayImage::new(Grid::from_fn(11, 9, |_, c| if c == 5 { 100.0 } else { 20.0 })).unwrap();
        let h = SemanticMap::new(Grid::from_fn(11, 9, |_, c| if c == 5 { Class::Touching } else { Class::Cell }));
        (x, h)
    }

    #[test]
    fn zero_is_identity() {
        let (x, h) = ridge_scene();
        assert_eq!(touching_modulation(&x, &h, 0.0).unwrap(), x);
    }

    #[test]
    fn one_gives_median() {
        let (x, h) = ridge_scene();
        let m = median_filter(&x, 7).unwrap();
        let out = touching_modulation(&x, &h, 1.0).unwrap();
        for r in 0..9 {
            assert_eq!(out[(r, 5)], m[(r, 5)]);
            assert_eq!(out[(r, 5)], 20.0);
            assert_eq!(out[(r, 4)], 20.0);
        }
    }

    #[test]
    fn negative_a_raises_contrast() {
        let (x, h) = ridge_scene();
        // 7x7 window holds 7 ridge pixels and 42 flat ones: median 20
        let out = touching_modulation(&x, &h, -1.0).unwrap();
        for r in 0..9 {
            assert_eq!(out[(r, 5)], 180.0);
        }
    }

    #[test]
    fn clamps_at_zero() {
        // dark touching line on a bright field, a = -1 gives 2*x - median < 0
        let x = GrayImage::new(Grid::from_fn(9, 9, |_, c| if c == 4 { 10.0 } else { 100.0 })).unwrap();
        let h = SemanticMap::new(Grid::from_fn(9, 9, |_, c| if c == 4 { Class::Touching } else { Class::Background }));
        let out = touching_modulation(&x, &h, -1.0).unwrap();
        assert_eq!(out[(4, 4)], 0.0);
    }

    #[test]
    fn a_out_of_range() {
        let (x, h) = ridge_scene();
        assert!(touching_modulation(&x, &h, 1.5).is_err());
        let small = SemanticMap::new(Grid::filled(2, 2, Class::Cell));
        assert!(matches!(touching_modulation(&x, &small, 0.5), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn rotations_compose() {
        let g = Grid::from_fn(5, 3, |r, c| (r * 5 + c) as u32);
        assert_eq!(rotate(&rotate(&g, 1), 3), g);
        assert_eq!(rotate(&rotate(&g, 2), 2), g);
        assert_eq!(rotate(&g, 1).shape(), (5, 3));
        // counter-clockwise: the top-right corner moves to the top-left
        assert_eq!(rotate(&g, 1)[(0, 0)], g[(0, 4)]);
    }

    #[test]
    fn catmull_rom_interpolates_nodes() {
        let coarse = Grid::from_fn(4, 3, |r, c| (r * 10 + c) as f64);
        for r in 0..3 {
            for c in 0..4 {
                assert!((bicubic(&coarse, r as f64, c as f64) - coarse[(r, c)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spec_validation() {
        assert!(AugmentSpec::default().validate().is_ok());
        assert!(AugmentSpec { a_range: (-2.0, 1.0), ..Default::default() }.validate().is_err());
        assert!(AugmentSpec { gamma_range: (0.0, 1.0), ..Default::default() }.validate().is_err());
        assert!(AugmentSpec { rotations: vec![4], ..Default::default() }.validate().is_err());
    }

    #[test]
    fn gamma_keeps_scale() {
        let x = GrayImage::from_vec(3, 1, vec![0.0, 50.0, 200.0]).unwrap();
        let y = gamma_correction(&x, 2.0).unwrap();
        assert_eq!(y.data(), &[0.0, 12.5, 200.0]);
        assert_eq!(normalize_intensity(&x).data(), &[0.0, 0.25, 1.0]);
    }
}
