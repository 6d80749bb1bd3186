//! Stochastic layered geologies with von Kármán heterogeneity.
//!
//! A geology is a shear-wave velocity volume on a regular grid. Axis order is
//! `(x, y, z)` with `z` index 0 at the free surface and increasing with depth.
//! The deepest part of the column is a homogeneous bottom layer; above it, a
//! random number of layers partition the remaining column. Each layer gets a
//! random mean velocity and an independent von Kármán perturbation, and the
//! final volume is clipped to the admissible velocity range.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng as SeededRng};
use crate::scalar::Scalar;
use crate::tensorcore::fft::fft3_inplace;
use crate::tensorcore::Tensor;

/// Parameters of the geology distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeologyConfig {
    /// Grid extents `(nx, ny, nz)`.
    pub grid: [usize; 3],
    /// Physical edge lengths in metres.
    pub domain_size_m: [f64; 3],
    /// Inclusive range for the number of layers above the bottom layer.
    pub n_layers_range: [usize; 2],
    pub mean_vs_low: f64,
    pub mean_vs_high: f64,
    pub corr_len_range_m: [f64; 2],
    pub cv_mean: f64,
    pub cv_std: f64,
    pub clip_low: f64,
    pub clip_high: f64,
    pub bottom_vs: f64,
    /// Hurst exponent of the von Kármán spectrum.
    pub hurst: f64,
    /// Fraction of the column (from the bottom) occupied by the homogeneous layer.
    pub bottom_fraction: f64,
    pub seed: u64,
}

impl Default for GeologyConfig {
    fn default() -> Self {
        Self {
            grid: [64, 64, 64],
            domain_size_m: [9600.0; 3],
            n_layers_range: [1, 6],
            mean_vs_low: 1785.0,
            mean_vs_high: 3214.0,
            corr_len_range_m: [1500.0, 6000.0],
            cv_mean: 0.2,
            cv_std: 0.1,
            clip_low: 1071.0,
            clip_high: 4500.0,
            bottom_vs: 4500.0,
            hurst: 0.3,
            bottom_fraction: 0.125,
            seed: 0,
        }
    }
}

impl GeologyConfig {
    /// Desk-scale variant: same physics, `n³` grid over the same 9.6 km cube.
    pub fn desk(n: usize) -> Self {
        Self { grid: [n; 3], ..Self::default() }
    }

    pub fn spacing_m(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| self.domain_size_m[a] / self.grid[a] as f64)
    }

    /// Number of cells in the homogeneous bottom layer.
    pub fn bottom_cells(&self) -> usize {
        let nz = self.grid[2];
        ((nz as f64 * self.bottom_fraction).round() as usize).clamp(1, nz)
    }

    /// First z index of the bottom layer.
    pub fn bottom_start(&self) -> usize {
        self.grid[2] - self.bottom_cells()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.grid.iter().any(|&n| n < 2) {
            return bad(format!("grid extents must be >= 2, got {:?}", self.grid));
        }
        if self.domain_size_m.iter().any(|&l| !(l > 0.0)) {
            return bad(format!("domain_size_m must be positive, got {:?}", self.domain_size_m));
        }
        let [lo, hi] = self.n_layers_range;
        if !(1 <= lo && lo <= hi && hi <= 6) {
            return bad(format!("n_layers_range must satisfy 1 <= lo <= hi <= 6, got {:?}", self.n_layers_range));
        }
        if !(self.clip_low < self.mean_vs_low
            && self.mean_vs_low <= self.mean_vs_high
            && self.mean_vs_high < self.clip_high
            && self.clip_high <= self.bottom_vs)
        {
            return bad(format!(
                "need clip_low < mean_vs_low <= mean_vs_high < clip_high <= bottom_vs, got {} {} {} {} {}",
                self.clip_low, self.mean_vs_low, self.mean_vs_high, self.clip_high, self.bottom_vs
            ));
        }
        let [c0, c1] = self.corr_len_range_m;
        if !(c0 > 0.0 && c0 <= c1) {
            return bad(format!("corr_len_range_m must be positive and ordered, got {:?}", self.corr_len_range_m));
        }
        if !(self.cv_std >= 0.0 && self.cv_mean.is_finite()) {
            return bad(format!("cv_std must be >= 0, got {}", self.cv_std));
        }
        if !(self.hurst > 0.0 && self.hurst < 1.0) {
            return bad(format!("hurst must lie in (0, 1), got {}", self.hurst));
        }
        if !(self.bottom_fraction > 0.0 && self.bottom_fraction < 1.0) {
            return bad(format!("bottom_fraction must lie in (0, 1), got {}", self.bottom_fraction));
        }
        if self.bottom_start() < 1 {
            return bad("no room above the bottom layer".into());
        }
        Ok(())
    }
}

/// One layer of the random column; `top_index..bottom_index` are z indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub top_index: usize,
    pub bottom_index: usize,
    pub mean_vs: f64,
    pub corr_len_m: f64,
    pub cv: f64,
}

impl LayerSpec {
    pub fn thickness(&self) -> usize {
        self.bottom_index - self.top_index
    }
}

/// Shear-wave velocity volume (m/s) with its generation record.
#[derive(Clone, Debug)]
pub struct GeologyField<T> {
    pub vs: Tensor<T>,
    pub layers: Vec<LayerSpec>,
    /// First z index of the homogeneous bottom layer.
    pub bottom_start: usize,
    pub seed: u64,
}

impl<T: Scalar> GeologyField<T> {
    /// Operator input `a = V_S²`.
    pub fn squared_velocity(&self) -> Tensor<T> {
        self.vs.map(|v| v * v)
    }

    pub fn homogeneous(grid: [usize; 3], vs: f64) -> Self {
        Self { vs: Tensor::full(&grid, T::lit(vs)), layers: Vec::new(), bottom_start: grid[2], seed: 0 }
    }
}

/// Draws the layer partition and per-layer parameters.
///
/// Thicknesses come from uniform stick-breaking: `N - 1` distinct cut points
/// drawn uniformly among the interior z indices above the bottom layer.
pub fn sample_layer_specs(rng: &mut impl Rng, config: &GeologyConfig) -> Result<Vec<LayerSpec>> {
    let column = config.bottom_start();
    let [lo, hi] = config.n_layers_range;
    let n = rng.random_range(lo..=hi);
    if column < n {
        return Err(Error::InvalidConfig(format!(
            "{column} cells above the bottom layer cannot host {n} layers"
        )));
    }
    let interior: Vec<usize> = (1..column).collect();
    let mut cuts: Vec<usize> = rand::seq::index::sample(rng, interior.len(), n - 1)
        .into_iter()
        .map(|i| interior[i])
        .collect();
    cuts.sort_unstable();

    let mut bounds = vec![0];
    bounds.extend(cuts);
    bounds.push(column);
    let cv_law = Normal::new(config.cv_mean, config.cv_std)
        .map_err(|e| Error::InvalidConfig(format!("cv law: {e}")))?;
    let layers = bounds
        .windows(2)
        .map(|w| {
            let mean_vs = rng.random_range(config.mean_vs_low..=config.mean_vs_high);
            let [c0, c1] = config.corr_len_range_m;
            let corr_len_m = if c0 < c1 { rng.random_range(c0..=c1) } else { c0 };
            LayerSpec { top_index: w[0], bottom_index: w[1], mean_vs, corr_len_m, cv: truncated_cv(rng, &cv_law) }
        })
        .collect();
    Ok(layers)
}

/// Normal draw conditioned on being non-negative.
fn truncated_cv(rng: &mut impl Rng, law: &Normal<f64>) -> f64 {
    if law.std_dev() == 0.0 {
        return law.mean().max(0.0);
    }
    loop {
        let v = law.sample(rng);
        if v >= 0.0 {
            return v;
        }
    }
}

/// Angular wavenumber (rad/m) of DFT index `j` on an axis of `n` cells spanning `length` metres.
fn wavenumber(j: usize, n: usize, length: f64) -> f64 {
    let f = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
    std::f64::consts::TAU * f / length
}

/// Zero-mean, unit-variance von Kármán random field by spectral synthesis.
///
/// Gaussian white noise is filtered by the square root of the 3D power
/// spectrum `P(k) ∝ (1 + k²a²)^-(H + 3/2)` and standardized with its own sample
/// statistics.
pub fn von_karman_field<T: Scalar>(
    grid: [usize; 3],
    spacing_m: [f64; 3],
    corr_len_m: f64,
    hurst: f64,
    rng: &mut impl Rng,
) -> Result<Tensor<T>> {
    if grid.iter().any(|&n| n < 2) {
        return Err(Error::DegenerateExtent { context: "von Karman grid", extents: grid.to_vec() });
    }
    if !(corr_len_m > 0.0) {
        return Err(Error::InvalidConfig(format!("correlation length must be positive, got {corr_len_m}")));
    }
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::InvalidConfig(format!("hurst must lie in (0, 1), got {hurst}")));
    }
    let lengths = [0, 1, 2].map(|a| grid[a] as f64 * spacing_m[a]);
    let mut noise = Tensor::<num_complex::Complex<f64>>::from_fn(&grid, |_| {
        num_complex::Complex::new(StandardNormal.sample(rng), 0.0)
    });
    fft3_inplace(&mut noise, [0, 1, 2], FftDirection::Forward);
    let exponent = -(hurst + 1.5) / 2.0;
    let a2 = corr_len_m * corr_len_m;
    let kx: Vec<f64> = (0..grid[0]).map(|j| wavenumber(j, grid[0], lengths[0])).collect();
    let ky: Vec<f64> = (0..grid[1]).map(|j| wavenumber(j, grid[1], lengths[1])).collect();
    let kz: Vec<f64> = (0..grid[2]).map(|j| wavenumber(j, grid[2], lengths[2])).collect();
    let mut off = 0;
    for &x in &kx {
        for &y in &ky {
            for &z in &kz {
                let k2 = x * x + y * y + z * z;
                let amp = (1.0 + k2 * a2).powf(exponent);
                noise.data_mut()[off] *= amp;
                off += 1;
            }
        }
    }
    fft3_inplace(&mut noise, [0, 1, 2], FftDirection::Inverse);
    let mut field: Vec<f64> = noise.data().iter().map(|z| z.re).collect();
    standardize(&mut field);
    Tensor::new(grid.to_vec(), field.into_iter().map(T::lit).collect())
}

/// Shifts and scales to exactly zero sample mean and unit population variance.
fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter_mut().for_each(|x| *x -= mean);
    let std = (v.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
    if std > 0.0 {
        v.iter_mut().for_each(|x| *x /= std);
    }
}

/// Velocities of one layer before clipping, shape `(nx, ny, thickness)`.
///
/// The perturbation is synthesized on the full grid (so its correlation
/// structure is not wrapped over the layer thickness), cut to the layer and
/// re-standardized over the layer's own voxels.
pub fn layer_velocities(
    layer: &LayerSpec,
    config: &GeologyConfig,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let [nx, ny, nz] = config.grid;
    let field = von_karman_field::<f64>(config.grid, config.spacing_m(), layer.corr_len_m, config.hurst, rng)?;
    let th = layer.thickness();
    let mut slab = Vec::with_capacity(nx * ny * th);
    for ix in 0..nx {
        for iy in 0..ny {
            let base = (ix * ny + iy) * nz;
            slab.extend_from_slice(&field.data()[base + layer.top_index..base + layer.bottom_index]);
        }
    }
    standardize(&mut slab);
    Ok(slab.into_iter().map(|f| layer.mean_vs * (1.0 + layer.cv * f)).collect())
}

/// Assembles the clipped velocity volume from a layer partition.
///
/// Layer `l` draws its perturbation from stream `1 + l` of `seed`.
pub fn assemble_geology<T: Scalar>(
    layers: &[LayerSpec],
    config: &GeologyConfig,
    seed: u64,
) -> Result<GeologyField<T>> {
    let [nx, ny, nz] = config.grid;
    let bottom_start = config.bottom_start();
    let mut expected_top = 0;
    for l in layers {
        if l.top_index != expected_top || l.bottom_index <= l.top_index {
            return Err(Error::InvalidConfig(format!("layers do not partition the column: {layers:?}")));
        }
        expected_top = l.bottom_index;
    }
    if expected_top != bottom_start {
        return Err(Error::InvalidConfig(format!(
            "layers end at z={expected_top}, bottom layer starts at z={bottom_start}"
        )));
    }

    let mut vs = vec![config.bottom_vs; nx * ny * nz];
    for (l, layer) in layers.iter().enumerate() {
        let mut rng = rng::stream(seed, 1 + l as u64);
        let slab = layer_velocities(layer, config, &mut rng)?;
        let th = layer.thickness();
        for ix in 0..nx {
            for iy in 0..ny {
                let dst = (ix * ny + iy) * nz + layer.top_index;
                let src = (ix * ny + iy) * th;
                vs[dst..dst + th].copy_from_slice(&slab[src..src + th]);
            }
        }
    }
    let vs = vs.into_iter().map(|v| T::lit(v.clamp(config.clip_low, config.clip_high))).collect();
    Ok(GeologyField { vs: Tensor::new(config.grid.to_vec(), vs)?, layers: layers.to_vec(), bottom_start, seed })
}

/// Draws one complete geology. Stream 0 of `seed` drives the layer layout.
pub fn generate<T: Scalar>(config: &GeologyConfig, seed: u64) -> Result<GeologyField<T>> {
    config.validate()?;
    let mut rng: SeededRng = rng::stream(seed, 0);
    let layers = sample_layer_specs(&mut rng, config)?;
    assemble_geology(&layers, config, seed)
}
