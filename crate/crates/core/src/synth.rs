//! Synthetic scenes with known ground truth.
//!
//! Cells are random ellipses placed in clusters so that neighbours overlap;
//! contested pixels go to the ellipse whose normalized radius is smallest.
//! The matching "network output" is the one-hot encoding of the semantic
//! map, optionally blurred with a Gaussian.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gtprep::{instance_to_semantic, NeighborhoodSpec};
use crate::imagecore::{Class, Grid, GrayImage, InstanceMap, ProbabilityMap, SemanticMap};
use crate::morphology::{connected_components, extract_contours, Connectivity};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub clusters: usize,
    /// Inclusive range of cells per cluster.
    pub cells_per_cluster: (usize, usize),
    /// Range of ellipse semi-axes in pixels.
    pub radius: (f64, f64),
    /// Cells left with fewer pixels after cropping are removed.
    pub min_area: usize,
    /// Standard deviation of additive image noise.
    pub noise: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            width: 128,
            height: 128,
            clusters: 3,
            cells_per_cluster: (2, 4),
            radius: (7.0, 12.0),
            min_area: 30,
            noise: 0.03,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.cells_per_cluster;
        let (rlo, rhi) = self.radius;
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParameter("scene must not be empty".into()));
        }
        if lo == 0 || lo > hi {
            return Err(Error::InvalidParameter(format!("bad cells_per_cluster ({lo}, {hi})")));
        }
        if !(rlo >= 1.0 && rlo <= rhi && rhi.is_finite()) {
            return Err(Error::InvalidParameter(format!("bad radius range ({rlo}, {rhi})")));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidParameter(format!("bad noise level {}", self.noise)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image: GrayImage,
    pub instances: InstanceMap,
}

#[derive(Debug, Clone, Copy)]
struct Ellipse {
    cy: f64,
    cx: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
}

impl Ellipse {
    /// Squared normalized radius; `<= 1` inside.
    fn level(&self, r: f64, c: f64) -> f64 {
        let (dy, dx) = (r - self.cy, c - self.cx);
        let u = dx * self.cos + dy * self.sin;
        let v = -dx * self.sin + dy * self.cos;
        (u / self.a).powi(2) + (v / self.b).powi(2)
    }
}

pub fn generate_scene(spec: &SceneSpec, rng: &mut impl Rng) -> Result<Scene> {
    spec.validate()?;
    let (w, h) = (spec.width as f64, spec.height as f64);
    let mut ellipses = Vec::new();
    for _ in 0..spec.clusters {
        let n = rng.random_range(spec.cells_per_cluster.0..=spec.cells_per_cluster.1);
        let cluster_start = ellipses.len();
        let margin = spec.radius.1;
        let cy = rng.random_range(margin.min(h / 2.0)..=(h - margin).max(h / 2.0));
        let cx = rng.random_range(margin.min(w / 2.0)..=(w - margin).max(w / 2.0));
        for i in 0..n {
            let a = rng.random_range(spec.radius.0..=spec.radius.1);
            let b = rng.random_range(spec.radius.0..=spec.radius.1);
            let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let (ey, ex) = if i == 0 {
                (cy, cx)
            } else {
                let anchor: Ellipse = ellipses[rng.random_range(cluster_start..ellipses.len())];
                let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let reach = rng.random_range(0.75..1.0) * (a.max(b) + anchor.a.max(anchor.b));
                (anchor.cy + reach * phi.sin(), anchor.cx + reach * phi.cos())
            };
            ellipses.push(Ellipse { cy: ey, cx: ex, a, b, cos: theta.cos(), sin: theta.sin() });
        }
    }

    let raw = Grid::from_fn(spec.width, spec.height, |r, c| {
        let mut best = (0u32, f64::INFINITY);
        for (i, e) in ellipses.iter().enumerate() {
            let level = e.level(r as f64, c as f64);
            if level <= 1.0 && level < best.1 {
                best = (i as u32 + 1, level);
            }
        }
        best.0
    });
    let instances = clean_labels(&raw, spec.min_area);
    let image = render(&instances, spec.noise, rng)?;
    Ok(Scene { image, instances })
}

/// Keeps the largest 8-connected piece of every label, drops labels below
/// `min_area` and renumbers the rest `1..` in row-major order.
fn clean_labels(raw: &Grid<u32>, min_area: usize) -> InstanceMap {
    let mut out = Grid::filled(raw.width(), raw.height(), 0u32);
    let mut next = 0u32;
    let labels = InstanceMap::new(raw.clone()).labels();
    let mut kept = Vec::new();
    for l in labels {
        let pieces = connected_components(&raw.map(|&v| v == l), Connectivity::Eight);
        let mut area = vec![0usize; pieces.max_label() as usize + 1];
        for &p in pieces.data() {
            area[p as usize] += 1;
        }
        area[0] = 0;
        let (best, &size) = area.iter().enumerate().max_by_key(|&(i, a)| (a, std::cmp::Reverse(i))).unwrap();
        if size >= min_area {
            kept.push((pieces, best as u32));
        }
    }
    let mut owner = Grid::filled(raw.width(), raw.height(), 0usize);
    for (k, (pieces, best)) in kept.iter().enumerate() {
        for (i, &p) in pieces.data().iter().enumerate() {
            if p == *best {
                owner.data_mut()[i] = k + 1;
            }
        }
    }
    let mut renumber = vec![0u32; kept.len() + 1];
    for (i, &k) in owner.data().iter().enumerate() {
        if k != 0 {
            if renumber[k] == 0 {
                next += 1;
                renumber[k] = next;
            }
            out.data_mut()[i] = renumber[k];
        }
    }
    InstanceMap::new(out)
}

fn render(g: &InstanceMap, noise: f64, rng: &mut impl Rng) -> Result<GrayImage> {
    let contours = extract_contours(g);
    let brightness: Vec<f64> =
        (0..=g.max_label()).map(|_| rng.random_range(0.5..0.8)).collect();
    let normal = Normal::new(0.0, noise).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let data = g
        .data()
        .iter()
        .zip(contours.mask().data())
        .map(|(&l, &edge)| {
            let base = match (l, edge) {
                (0, _) => 0.1,
                (_, true) => 0.3,
                (l, false) => brightness[l as usize],
            };
            (base + normal.sample(rng)).max(0.0)
        })
        .collect();
    GrayImage::from_vec(g.width(), g.height(), data)
}

/// True when every cell's non-touching pixels form one 8-connected region
/// that no other cell shares, so decoding a perfect semantic map recovers
/// the instances.
pub fn separated_by_bands(g: &InstanceMap, k: NeighborhoodSpec) -> bool {
    let h = instance_to_semantic(g, k);
    let cells = connected_components(&h.map(|&c| c == Class::Cell), Connectivity::Eight);
    let mut owner = vec![0u32; cells.max_label() as usize + 1];
    let mut component_of = vec![0u32; g.max_label() as usize + 1];
    for (&component, &label) in cells.data().iter().zip(g.data()) {
        if component == 0 {
            continue;
        }
        let c = component as usize;
        if owner[c] == 0 {
            owner[c] = label;
        } else if owner[c] != label {
            return false;
        }
        let l = label as usize;
        if component_of[l] == 0 {
            component_of[l] = component;
        } else if component_of[l] != component {
            return false;
        }
    }
    g.labels().iter().all(|&l| component_of[l as usize] != 0)
}

/// Scenes drawn from `seed`; when `require_separated` is set, draws that fail
/// [`separated_by_bands`] are skipped.
pub fn generate_suite(
    spec: &SceneSpec,
    count: usize,
    seed: u64,
    require_separated: Option<NeighborhoodSpec>,
) -> Result<Vec<Scene>> {
    const MAX_ATTEMPTS: usize = 1000;
    let mut out = Vec::with_capacity(count);
    for index in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        let mut accepted = None;
        for _ in 0..MAX_ATTEMPTS {
            let scene = generate_scene(spec, &mut rng)?;
            if scene.instances.max_label() == 0 {
                continue;
            }
            if require_separated.is_none_or(|k| separated_by_bands(&scene.instances, k)) {
                accepted = Some(scene);
                break;
            }
        }
        out.push(accepted.ok_or_else(|| {
            Error::InvalidParameter(format!("no acceptable scene after {MAX_ATTEMPTS} draws"))
        })?);
    }
    Ok(out)
}

/// Gaussian blur with `sigma`, mirrored borders, truncated at 4 sigma.
pub fn gaussian_blur(x: &Grid<f64>, sigma: f64) -> Result<Grid<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("blur sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    let radius = (4.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> =
        (-radius..=radius).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|v| *v /= total);

    let blur_rows = |g: &Grid<f64>| {
        Grid::from_fn(g.width(), g.height(), |r, c| {
            kernel
                .iter()
                .enumerate()
                .map(|(j, &kv)| kv * g[(r, reflect(c as isize + j as isize - radius, g.width()))])
                .sum()
        })
    };
    Ok(blur_rows(&blur_rows(x).transposed()).transposed())
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// One-hot probabilities of `h`, blurred per channel when `sigma > 0` and
/// renormalized.
pub fn oracle_probabilities(h: &SemanticMap, sigma: f64) -> Result<ProbabilityMap> {
    let onehot = ProbabilityMap::from_semantic(h);
    if sigma == 0.0 {
        return Ok(onehot);
    }
    let blurred = onehot
        .planes()
        .iter()
        .map(|p| gaussian_blur(p, sigma))
        .collect::<Result<Vec<_>>>()?;
    let n = h.len();
    let sums: Vec<f64> = (0..n).map(|i| blurred.iter().map(|p| p.data()[i]).sum()).collect();
    let planes = blurred
        .into_iter()
        .map(|p| {
            let data = p.data().iter().zip(&sums).map(|(&v, &s)| (v / s).clamp(0.0, 1.0)).collect();
            Grid::new(h.width(), h.height(), data)
        })
        .collect::<Result<Vec<_>>>()?;
    ProbabilityMap::new(planes)
}
