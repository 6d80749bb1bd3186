//! Surface recording and the simulation driver.

use super::solver::{PointSource, SimConfig, Solver};
use super::source::SourceSpec;
use crate::error::{Error, Result};
use crate::geology::GeologyField;
use crate::scalar::Scalar;
use crate::tensorcore::Tensor;

/// Three-component surface velocities on the sensor grid.
#[derive(Clone, Debug)]
pub struct SurfaceRecord<T> {
    /// `(3, nx, ny, nt)`, components (east, north, up), m/s.
    pub data: Tensor<T>,
    pub times_s: Vec<f64>,
    /// Sensor coordinates along x (east) and y (north), metres.
    pub sensor_x_m: Vec<f64>,
    pub sensor_y_m: Vec<f64>,
}

impl<T: Scalar> SurfaceRecord<T> {
    /// Separable bicubic interpolation onto an `m × m` lateral grid with
    /// points at `j·L/m`, clamped at the sensor array edges.
    pub fn interpolate(&self, target: [usize; 2], domain_m: [f64; 2]) -> Result<Tensor<T>> {
        let shape = self.data.shape();
        let (nx, ny, nt) = (shape[1], shape[2], shape[3]);
        let wx = interpolation_weights(&self.sensor_x_m, target[0], domain_m[0])?;
        let wy = interpolation_weights(&self.sensor_y_m, target[1], domain_m[1])?;
        let src = self.data.data();
        // x pass: (3, nx, ny, nt) → (3, mx, ny, nt)
        let mut mid = vec![T::zero(); 3 * target[0] * ny * nt];
        for c in 0..3 {
            for (a, taps) in wx.iter().enumerate() {
                for &(i, w) in taps {
                    let w = T::lit(w);
                    let from = ((c * nx + i) * ny) * nt;
                    let to = ((c * target[0] + a) * ny) * nt;
                    for q in 0..ny * nt {
                        mid[to + q] += w * src[from + q];
                    }
                }
            }
        }
        let mut out = vec![T::zero(); 3 * target[0] * target[1] * nt];
        for ca in 0..3 * target[0] {
            for (b, taps) in wy.iter().enumerate() {
                for &(j, w) in taps {
                    let w = T::lit(w);
                    let from = (ca * ny + j) * nt;
                    let to = (ca * target[1] + b) * nt;
                    for t in 0..nt {
                        out[to + t] += w * mid[from + t];
                    }
                }
            }
        }
        Tensor::new(vec![3, target[0], target[1], nt], out)
    }
}

/// Keys cubic convolution kernel with `a = −0.5`.
fn keys(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        (A + 2.0) * x.powi(3) - (A + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        A * x.powi(3) - 5.0 * A * x * x + 8.0 * A * x - 4.0 * A
    } else {
        0.0
    }
}

/// Per target point, the (sensor index, weight) taps along one axis.
fn interpolation_weights(sensors: &[f64], m: usize, length: f64) -> Result<Vec<Vec<(usize, f64)>>> {
    let n = sensors.len();
    if n == 0 || m == 0 {
        return Err(Error::DegenerateExtent { context: "sensor interpolation", extents: vec![n, m] });
    }
    if n == 1 {
        return Ok(vec![vec![(0, 1.0)]; m]);
    }
    let step = (sensors[n - 1] - sensors[0]) / (n - 1) as f64;
    Ok((0..m)
        .map(|j| {
            let u = ((j as f64 * length / m as f64 - sensors[0]) / step).clamp(0.0, (n - 1) as f64);
            let base = u.floor();
            let frac = u - base;
            let base = base as isize;
            (-1..=2)
                .map(|o| {
                    let idx = (base + o).clamp(0, n as isize - 1) as usize;
                    (idx, keys(frac - o as f64))
                })
                .filter(|&(_, w)| w != 0.0)
                .collect()
        })
        .collect())
}

/// Sensor node indices and coordinates along one axis: `n` sensors centred in
/// a domain of `cells · h` metres, snapped to the nearest node (ties go down).
pub fn sensor_nodes(n: usize, spacing_m: f64, cells: usize, h: f64) -> Result<(Vec<usize>, Vec<f64>)> {
    let length = cells as f64 * h;
    let start = (length - (n as f64 - 1.0) * spacing_m) / 2.0;
    let mut idx = Vec::with_capacity(n);
    let mut pos = Vec::with_capacity(n);
    for s in 0..n {
        let x = start + s as f64 * spacing_m;
        let node = (x / h - 1e-9).round();
        if node < 0.0 || node > (cells - 1) as f64 {
            return Err(Error::OutsideDomain { what: "sensor", position: [x, 0.0, 0.0] });
        }
        idx.push(node as usize);
        pos.push(node * h);
    }
    Ok((idx, pos))
}

/// Grid node of a source position (metres, z ≤ 0 below the surface).
pub fn source_node(position_m: [f64; 3], grid: [usize; 3], h: f64) -> Result<[usize; 3]> {
    let coords = [position_m[0] / h, position_m[1] / h, -position_m[2] / h];
    let mut node = [0usize; 3];
    for a in 0..3 {
        let c = coords[a].round();
        if !(c >= 0.0 && c <= (grid[a] - 1) as f64) || (a == 2 && c < 2.0) {
            return Err(Error::OutsideDomain { what: "source", position: position_m });
        }
        node[a] = c as usize;
    }
    Ok(node)
}

/// Simulates one event and records the surface sensors.
pub fn run_simulation<T: Scalar>(
    geology: &GeologyField<T>,
    source: &SourceSpec,
    config: &SimConfig,
) -> Result<SurfaceRecord<T>> {
    source.validate()?;
    config.validate()?;
    let shape = geology.vs.shape();
    let grid = [shape[0], shape[1], shape[2]];
    let h = config.spacing_m;
    let node = source_node(source.position_m, grid, h)?;
    let point = PointSource { node, tensor: source.moment_tensor(), tau_s: source.tau_s };
    let solver = Solver::new(geology, config, Some(point))?;
    run_with_solver(&solver, config)
}

/// Drives a prepared solver and samples the sensors.
pub fn run_with_solver<T: Scalar>(solver: &Solver<T>, config: &SimConfig) -> Result<SurfaceRecord<T>> {
    let grid = solver.layout.physical;
    let h = config.spacing_m;
    let (ix, xs) = sensor_nodes(config.sensor_grid[0], config.sensor_spacing_m, grid[0], h)?;
    let (iy, ys) = sensor_nodes(config.sensor_grid[1], config.sensor_spacing_m, grid[1], h)?;
    let times = config.record_times();
    let nt = times.len();
    let (nx, ny) = (ix.len(), iy.len());
    let record_steps: Vec<usize> = times.iter().map(|t| (t / config.dt_s).round() as usize).collect();
    let last = *record_steps.last().unwrap_or(&0);
    let total = config.total_steps().max(last + 1);

    let mut data = vec![T::zero(); 3 * nx * ny * nt];
    let mut previous = vec![[T::zero(); 3]; nx * ny];
    let mut state = solver.new_state();
    let mut next = 0;
    let half = T::lit(0.5);
    for n in 0..total {
        // after this step, velocities live at (n+½)·dt
        solver.step(&mut state)?;
        let recording = next < nt && record_steps[next] == n;
        for (a, &i) in ix.iter().enumerate() {
            for (b, &j) in iy.iter().enumerate() {
                let now = solver.surface_sample(&state, i, j);
                let s = a * ny + b;
                if recording {
                    for c in 0..3 {
                        data[((c * nx + a) * ny + b) * nt + next] = half * (previous[s][c] + now[c]);
                    }
                }
                previous[s] = now;
            }
        }
        if recording {
            next += 1;
        }
    }
    Ok(SurfaceRecord {
        data: Tensor::new(vec![3, nx, ny, nt], data)?,
        times_s: times,
        sensor_x_m: xs,
        sensor_y_m: ys,
    })
}
