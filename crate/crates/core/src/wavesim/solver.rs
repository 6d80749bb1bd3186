//! Staggered-grid velocity-stress finite differences.
//!
//! Fourth order in space, leapfrog in time. Node `(i, j, k)` sits at
//! `(i·h, j·h, k·h)` with `k = 0` on the free surface and `z` pointing down;
//! `x` is east and `y` is north. Staggered positions:
//!
//! | field | position |
//! |-------|----------|
//! | σxx σyy σzz | `(i, j, k)` |
//! | vx | `(i+½, j, k)` |
//! | vy | `(i, j+½, k)` |
//! | vz | `(i, j, k+½)` |
//! | σxy | `(i+½, j+½, k)` |
//! | σxz | `(i+½, j, k+½)` |
//! | σyz | `(i, j+½, k+½)` |
//!
//! The physical grid is padded with an absorbing sponge on the four lateral
//! sides and at the bottom. Every array carries two ghost layers per side; the
//! ghosts above the surface hold stress images, all other ghosts stay zero.

use serde::{Deserialize, Serialize};

use super::source::source_time_derivative;
use crate::error::{Error, Result};
use crate::geology::GeologyField;
use crate::scalar::Scalar;

const GHOST: usize = 2;
const C1: f64 = 9.0 / 8.0;
const C2: f64 = -1.0 / 24.0;
/// Courant limit for the (4th-order space, 2nd-order time) stencil in 3D.
pub const CFL_LIMIT: f64 = 0.49;

/// Numerical and acquisition parameters of one simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub spacing_m: f64,
    pub dt_s: f64,
    pub duration_s: f64,
    pub vp_vs_ratio: f64,
    pub density: f64,
    /// Sponge thickness in cells on the lateral and bottom sides.
    pub sponge_width: usize,
    /// Damping factor applied per step in the outermost sponge cell.
    pub sponge_edge_factor: f64,
    pub sensor_grid: [usize; 2],
    pub sensor_spacing_m: f64,
    pub record_rate_hz: f64,
    pub record_window_s: [f64; 2],
}

impl Default for SimConfig {
    /// Full-scale setup: 64³ cells of 150 m.
    fn default() -> Self {
        Self {
            spacing_m: 150.0,
            dt_s: 1.0 / 160.0,
            duration_s: 7.4,
            vp_vs_ratio: 1.7,
            density: 2700.0,
            sponge_width: 20,
            sponge_edge_factor: 0.92,
            sensor_grid: [16, 16],
            sensor_spacing_m: 600.0,
            record_rate_hz: 20.0,
            record_window_s: [1.0, 7.4],
        }
    }
}

impl SimConfig {
    /// Picks the spacing from the geology grid and the largest time step that
    /// divides the recording interval while honouring the Courant limit.
    pub fn for_domain(grid_n: usize, domain_m: f64, max_vs: f64, record_rate_hz: f64, window: [f64; 2]) -> Self {
        let base = Self::default();
        let spacing_m = domain_m / grid_n as f64;
        let dt_max = 0.9 * CFL_LIMIT * spacing_m / (base.vp_vs_ratio * max_vs);
        let interval = 1.0 / record_rate_hz;
        let substeps = (interval / dt_max).ceil().max(1.0);
        Self {
            spacing_m,
            dt_s: interval / substeps,
            duration_s: window[1],
            record_rate_hz,
            record_window_s: window,
            sponge_width: 12,
            ..base
        }
    }

    /// Number of samples in the recording window.
    pub fn record_len(&self) -> usize {
        ((self.record_window_s[1] - self.record_window_s[0]) * self.record_rate_hz).round() as usize
    }

    /// Sample times of the recording window.
    pub fn record_times(&self) -> Vec<f64> {
        (0..self.record_len()).map(|i| self.record_window_s[0] + i as f64 / self.record_rate_hz).collect()
    }

    pub fn total_steps(&self) -> usize {
        (self.duration_s / self.dt_s).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        for (name, v) in [
            ("spacing_m", self.spacing_m),
            ("dt_s", self.dt_s),
            ("duration_s", self.duration_s),
            ("density", self.density),
            ("sensor_spacing_m", self.sensor_spacing_m),
            ("record_rate_hz", self.record_rate_hz),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.vp_vs_ratio > 2f64.sqrt()) {
            return bad(format!("vp_vs_ratio must exceed sqrt(2) for a positive Lamé λ, got {}", self.vp_vs_ratio));
        }
        if !(self.sponge_edge_factor > 0.0 && self.sponge_edge_factor <= 1.0) {
            return bad(format!("sponge_edge_factor must lie in (0, 1], got {}", self.sponge_edge_factor));
        }
        if self.sensor_grid.iter().any(|&n| n == 0) {
            return bad("sensor_grid must be non-empty".into());
        }
        let [start, end] = self.record_window_s;
        if !(0.0 < start && start < end && end <= self.duration_s + 1e-9) {
            return bad(format!("record window {:?} must lie within (0, {}]", self.record_window_s, self.duration_s));
        }
        let points = (end - start) * self.record_rate_hz;
        if (points - points.round()).abs() > 1e-6 {
            return bad(format!("record window times rate must be an integer point count, got {points}"));
        }
        let per_sample = 1.0 / (self.record_rate_hz * self.dt_s);
        let offset = start / self.dt_s;
        if (per_sample - per_sample.round()).abs() > 1e-6 || (offset - offset.round()).abs() > 1e-6 {
            return bad(format!(
                "dt {} must divide the sampling interval {} and the window start {}",
                self.dt_s,
                1.0 / self.record_rate_hz,
                start
            ));
        }
        Ok(())
    }

    /// Courant check against the fastest shear velocity of the medium.
    pub fn check_cfl(&self, max_vs: f64) -> Result<()> {
        let limit = CFL_LIMIT * self.spacing_m / (self.vp_vs_ratio * max_vs);
        if self.dt_s > limit {
            return Err(Error::InvalidConfig(format!(
                "dt {} violates the Courant limit {limit:.6} (h = {}, max Vs = {max_vs})",
                self.dt_s, self.spacing_m
            )));
        }
        Ok(())
    }
}

/// Index arithmetic for the padded computational grid.
#[derive(Clone, Copy, Debug)]
pub struct Layout {
    /// Physical grid extents.
    pub physical: [usize; 3],
    pub sponge: usize,
    /// Computational extents (physical plus sponge, without ghosts).
    pub comp: [usize; 3],
    sx: usize,
    sy: usize,
    len: usize,
}

impl Layout {
    fn new(physical: [usize; 3], sponge: usize) -> Self {
        let comp = [physical[0] + 2 * sponge, physical[1] + 2 * sponge, physical[2] + sponge];
        let pz = comp[2] + 2 * GHOST;
        let py = comp[1] + 2 * GHOST;
        let px = comp[0] + 2 * GHOST;
        Self { physical, sponge, comp, sx: py * pz, sy: pz, len: px * py * pz }
    }

    /// Flat index of computational cell `(i, j, k)`.
    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> usize {
        (i + GHOST) * self.sx + (j + GHOST) * self.sy + k + GHOST
    }

    /// Computational cell of physical node `(i, j, k)`.
    pub fn physical_at(&self, i: usize, j: usize, k: usize) -> usize {
        self.at(i + self.sponge, j + self.sponge, k)
    }
}

/// Velocities (m/s) and stresses (Pa) on the staggered grid.
#[derive(Clone, Debug, PartialEq)]
pub struct WavefieldState<T> {
    pub vx: Vec<T>,
    pub vy: Vec<T>,
    pub vz: Vec<T>,
    pub sxx: Vec<T>,
    pub syy: Vec<T>,
    pub szz: Vec<T>,
    pub sxy: Vec<T>,
    pub sxz: Vec<T>,
    pub syz: Vec<T>,
    /// Completed steps; stresses live at `step·dt`, velocities half a step earlier.
    pub step: usize,
    pub time_s: f64,
}

impl<T: Scalar> WavefieldState<T> {
    fn zeros(len: usize) -> Self {
        let z = vec![T::zero(); len];
        Self {
            vx: z.clone(),
            vy: z.clone(),
            vz: z.clone(),
            sxx: z.clone(),
            syy: z.clone(),
            szz: z.clone(),
            sxy: z.clone(),
            sxz: z.clone(),
            syz: z,
            step: 0,
            time_s: 0.0,
        }
    }

    pub fn fields(&self) -> [&[T]; 9] {
        [&self.vx, &self.vy, &self.vz, &self.sxx, &self.syy, &self.szz, &self.sxy, &self.sxz, &self.syz]
    }

    fn fields_mut(&mut self) -> [&mut Vec<T>; 9] {
        [
            &mut self.vx,
            &mut self.vy,
            &mut self.vz,
            &mut self.sxx,
            &mut self.syy,
            &mut self.szz,
            &mut self.sxy,
            &mut self.sxz,
            &mut self.syz,
        ]
    }

    pub fn is_zero(&self) -> bool {
        self.fields().iter().all(|f| f.iter().all(|v| *v == T::zero()))
    }
}

/// Point moment-tensor source on a grid node.
#[derive(Clone, Debug)]
pub struct PointSource {
    /// Physical node `(i, j, k)`.
    pub node: [usize; 3],
    /// Moment tensor in solver axes, N·m.
    pub tensor: [[f64; 3]; 3],
    pub tau_s: f64,
}

/// Elastic moduli on the computational grid.
struct Moduli<T> {
    lam2mu: Vec<T>,
    lam: Vec<T>,
    /// λ / (λ + 2μ), for the free-surface condition.
    surface_ratio: Vec<T>,
    mu_xy: Vec<T>,
    mu_xz: Vec<T>,
    mu_yz: Vec<T>,
}

/// A configured solver: grid, material, sponge and source.
pub struct Solver<T> {
    pub layout: Layout,
    pub config: SimConfig,
    moduli: Moduli<T>,
    damp_x: Vec<f64>,
    damp_y: Vec<f64>,
    damp_z: Vec<f64>,
    source: Option<PointSource>,
}

/// Cerjan taper: `exp(−(a·m)²)` at depth `m` cells into the sponge, with `a`
/// chosen so the outermost cell gets `edge`.
fn sponge_profile(n_phys: usize, sponge: usize, edge: f64, both_sides: bool) -> Vec<f64> {
    let lead = if both_sides { sponge } else { 0 };
    let n = n_phys + lead + sponge;
    if sponge == 0 {
        return vec![1.0; n];
    }
    let a = (-edge.ln()).sqrt() / sponge as f64;
    (0..n)
        .map(|c| {
            let m = if c < lead {
                lead - c
            } else if c >= lead + n_phys {
                c + 1 - lead - n_phys
            } else {
                0
            };
            (-(a * m as f64).powi(2)).exp()
        })
        .collect()
}

impl<T: Scalar> Solver<T> {
    pub fn new(geology: &GeologyField<T>, config: &SimConfig, source: Option<PointSource>) -> Result<Self> {
        config.validate()?;
        let shape = geology.vs.shape();
        if shape.len() != 3 {
            return Err(Error::ShapeMismatch { context: "geology", expected: vec![0; 3], got: shape.to_vec() });
        }
        let physical = [shape[0], shape[1], shape[2]];
        let max_vs = geology.vs.max().to_f64_lossy();
        if !(geology.vs.min().to_f64_lossy() > 0.0) || !max_vs.is_finite() {
            return Err(Error::InvalidConfig("shear velocities must be positive and finite".into()));
        }
        config.check_cfl(max_vs)?;
        if let Some(src) = &source {
            let [i, j, k] = src.node;
            if i >= physical[0] || j >= physical[1] || k >= physical[2] || k < 2 {
                return Err(Error::OutsideDomain {
                    what: "source",
                    position: src.node.map(|n| n as f64 * config.spacing_m),
                });
            }
        }
        let layout = Layout::new(physical, config.sponge_width);
        let moduli = Self::moduli(geology, config, &layout);
        let s = config.sponge_width;
        let edge = config.sponge_edge_factor;
        Ok(Self {
            layout,
            config: config.clone(),
            moduli,
            damp_x: sponge_profile(physical[0], s, edge, true),
            damp_y: sponge_profile(physical[1], s, edge, true),
            damp_z: sponge_profile(physical[2], s, edge, false),
            source,
        })
    }

    fn moduli(geology: &GeologyField<T>, config: &SimConfig, layout: &Layout) -> Moduli<T> {
        let [nx, ny, nz] = layout.comp;
        let [px, py, pz] = layout.physical;
        let s = layout.sponge;
        let rho = config.density;
        let lam_factor = config.vp_vs_ratio.powi(2) - 2.0;
        // shear modulus on the computational grid, material edge-extended into the sponge
        let mu_at = |i: usize, j: usize, k: usize| -> f64 {
            let pi = i.saturating_sub(s).min(px - 1);
            let pj = j.saturating_sub(s).min(py - 1);
            let pk = k.min(pz - 1);
            let vs = geology.vs.get(&[pi, pj, pk]).to_f64_lossy();
            rho * vs * vs
        };
        let mut mu = vec![0.0; nx * ny * nz];
        let flat = |i: usize, j: usize, k: usize| (i * ny + j) * nz + k;
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    mu[flat(i, j, k)] = mu_at(i, j, k);
                }
            }
        }
        let harmonic = |a: [usize; 3], b: [usize; 3], c: [usize; 3], d: [usize; 3]| -> f64 {
            let inv: f64 = [a, b, c, d].iter().map(|p| 1.0 / mu[flat(p[0], p[1], p[2])]).sum();
            4.0 / inv
        };
        let len = layout.len;
        let mut m = Moduli {
            lam2mu: vec![T::zero(); len],
            lam: vec![T::zero(); len],
            surface_ratio: vec![T::zero(); len],
            mu_xy: vec![T::zero(); len],
            mu_xz: vec![T::zero(); len],
            mu_yz: vec![T::zero(); len],
        };
        for i in 0..nx {
            let i1 = (i + 1).min(nx - 1);
            for j in 0..ny {
                let j1 = (j + 1).min(ny - 1);
                for k in 0..nz {
                    let k1 = (k + 1).min(nz - 1);
                    let c = layout.at(i, j, k);
                    let mu0 = mu[flat(i, j, k)];
                    let lam = lam_factor * mu0;
                    m.lam2mu[c] = T::lit(lam + 2.0 * mu0);
                    m.lam[c] = T::lit(lam);
                    m.surface_ratio[c] = T::lit(lam / (lam + 2.0 * mu0));
                    m.mu_xy[c] = T::lit(harmonic([i, j, k], [i1, j, k], [i, j1, k], [i1, j1, k]));
                    m.mu_xz[c] = T::lit(harmonic([i, j, k], [i1, j, k], [i, j, k1], [i1, j, k1]));
                    m.mu_yz[c] = T::lit(harmonic([i, j, k], [i, j1, k], [i, j, k1], [i, j1, k1]));
                }
            }
        }
        m
    }

    pub fn new_state(&self) -> WavefieldState<T> {
        WavefieldState::zeros(self.layout.len)
    }

    /// Advances velocities to `(n+½)·dt` and stresses to `(n+1)·dt`.
    pub fn step(&self, state: &mut WavefieldState<T>) -> Result<()> {
        self.image_surface(state);
        let guard = self.update_velocity(state);
        if !guard.is_finite() {
            return Err(Error::BlowUp { step: state.step, time_s: state.time_s });
        }
        self.update_stress(state);
        self.inject_source(state);
        self.apply_sponge(state);
        state.step += 1;
        state.time_s = state.step as f64 * self.config.dt_s;
        Ok(())
    }

    /// Antisymmetric stress images above the free surface.
    fn image_surface(&self, st: &mut WavefieldState<T>) {
        let [nx, ny, _] = self.layout.comp;
        for i in 0..nx {
            for j in 0..ny {
                let c = self.layout.at(i, j, 0);
                st.szz[c] = T::zero();
                st.szz[c - 1] = -st.szz[c + 1];
                st.szz[c - 2] = -st.szz[c + 2];
                for f in [&mut st.sxz, &mut st.syz] {
                    f[c - 1] = -f[c];
                    f[c - 2] = -f[c + 1];
                }
            }
        }
    }

    /// Returns a sum of squares that is non-finite iff some velocity is.
    fn update_velocity(&self, st: &mut WavefieldState<T>) -> T {
        let l = &self.layout;
        let (sx, sy) = (l.sx, l.sy);
        let [nx, ny, nz] = l.comp;
        let (c1, c2) = (T::lit(C1), T::lit(C2));
        let k_dt = T::lit(self.config.dt_s / (self.config.density * self.config.spacing_m));
        let WavefieldState { vx, vy, vz, sxx, syy, szz, sxy, sxz, syz, .. } = st;
        let mut guard = T::zero();
        for i in 0..nx {
            for j in 0..ny {
                let base = l.at(i, j, 0);
                for c in base..base + nz {
                    // vx at (i+½, j, k)
                    let dxx = c1 * (sxx[c + sx] - sxx[c]) + c2 * (sxx[c + 2 * sx] - sxx[c - sx]);
                    let dxy = c1 * (sxy[c] - sxy[c - sy]) + c2 * (sxy[c + sy] - sxy[c - 2 * sy]);
                    let dxz = c1 * (sxz[c] - sxz[c - 1]) + c2 * (sxz[c + 1] - sxz[c - 2]);
                    vx[c] += k_dt * (dxx + dxy + dxz);
                    // vy at (i, j+½, k)
                    let dyx = c1 * (sxy[c] - sxy[c - sx]) + c2 * (sxy[c + sx] - sxy[c - 2 * sx]);
                    let dyy = c1 * (syy[c + sy] - syy[c]) + c2 * (syy[c + 2 * sy] - syy[c - sy]);
                    let dyz = c1 * (syz[c] - syz[c - 1]) + c2 * (syz[c + 1] - syz[c - 2]);
                    vy[c] += k_dt * (dyx + dyy + dyz);
                    // vz at (i, j, k+½)
                    let dzx = c1 * (sxz[c] - sxz[c - sx]) + c2 * (sxz[c + sx] - sxz[c - 2 * sx]);
                    let dzy = c1 * (syz[c] - syz[c - sy]) + c2 * (syz[c + sy] - syz[c - 2 * sy]);
                    let dzz = c1 * (szz[c + 1] - szz[c]) + c2 * (szz[c + 2] - szz[c - 1]);
                    vz[c] += k_dt * (dzx + dzy + dzz);
                    guard += vx[c] * vx[c] + vy[c] * vy[c] + vz[c] * vz[c];
                }
            }
        }
        guard
    }

    fn update_stress(&self, st: &mut WavefieldState<T>) {
        let l = &self.layout;
        let (sx, sy) = (l.sx, l.sy);
        let [nx, ny, nz] = l.comp;
        let (c1, c2) = (T::lit(C1), T::lit(C2));
        let k_dt = T::lit(self.config.dt_s / self.config.spacing_m);
        let m = &self.moduli;
        let WavefieldState { vx, vy, vz, sxx, syy, szz, sxy, sxz, syz, .. } = st;
        for i in 0..nx {
            for j in 0..ny {
                let base = l.at(i, j, 0);
                for k in 0..nz {
                    let c = base + k;
                    let exx = c1 * (vx[c] - vx[c - sx]) + c2 * (vx[c + sx] - vx[c - 2 * sx]);
                    let eyy = c1 * (vy[c] - vy[c - sy]) + c2 * (vy[c + sy] - vy[c - 2 * sy]);
                    let lam = m.lam[c];
                    let l2m = m.lam2mu[c];
                    if k == 0 {
                        // traction-free: ∂z vz follows from σzz = 0
                        let ezz = -m.surface_ratio[c] * (exx + eyy);
                        sxx[c] += k_dt * (l2m * exx + lam * (eyy + ezz));
                        syy[c] += k_dt * (l2m * eyy + lam * (exx + ezz));
                        szz[c] = T::zero();
                    } else {
                        let ezz = if k == 1 {
                            vz[c] - vz[c - 1]
                        } else {
                            c1 * (vz[c] - vz[c - 1]) + c2 * (vz[c + 1] - vz[c - 2])
                        };
                        sxx[c] += k_dt * (l2m * exx + lam * (eyy + ezz));
                        syy[c] += k_dt * (l2m * eyy + lam * (exx + ezz));
                        szz[c] += k_dt * (l2m * ezz + lam * (exx + eyy));
                    }

                    let vx_y = c1 * (vx[c + sy] - vx[c]) + c2 * (vx[c + 2 * sy] - vx[c - sy]);
                    let vy_x = c1 * (vy[c + sx] - vy[c]) + c2 * (vy[c + 2 * sx] - vy[c - sx]);
                    sxy[c] += k_dt * m.mu_xy[c] * (vx_y + vy_x);

                    let (vx_z, vy_z) = if k == 0 {
                        (vx[c + 1] - vx[c], vy[c + 1] - vy[c])
                    } else {
                        (
                            c1 * (vx[c + 1] - vx[c]) + c2 * (vx[c + 2] - vx[c - 1]),
                            c1 * (vy[c + 1] - vy[c]) + c2 * (vy[c + 2] - vy[c - 1]),
                        )
                    };
                    let vz_x = c1 * (vz[c + sx] - vz[c]) + c2 * (vz[c + 2 * sx] - vz[c - sx]);
                    let vz_y = c1 * (vz[c + sy] - vz[c]) + c2 * (vz[c + 2 * sy] - vz[c - sy]);
                    sxz[c] += k_dt * m.mu_xz[c] * (vx_z + vz_x);
                    syz[c] += k_dt * m.mu_yz[c] * (vy_z + vz_y);
                }
            }
        }
    }

    /// Adds `−M·ṡ(t)·dt/h³` to the stresses around the source node, with `t`
    /// the midpoint of the stress update.
    fn inject_source(&self, st: &mut WavefieldState<T>) {
        let Some(src) = &self.source else { return };
        let dt = self.config.dt_s;
        let h = self.config.spacing_m;
        let t_mid = (st.step as f64 + 0.5) * dt;
        let w = source_time_derivative(t_mid, src.tau_s) * dt / (h * h * h);
        if w == 0.0 {
            return;
        }
        let l = &self.layout;
        let [i, j, k] = src.node;
        let c = l.physical_at(i, j, k);
        let m = src.tensor;
        st.sxx[c] -= T::lit(m[0][0] * w);
        st.syy[c] -= T::lit(m[1][1] * w);
        st.szz[c] -= T::lit(m[2][2] * w);
        let q = 0.25 * w;
        for c in [c, c - l.sx, c - l.sy, c - l.sx - l.sy] {
            st.sxy[c] -= T::lit(m[0][1] * q);
        }
        for c in [c, c - l.sx, c - 1, c - l.sx - 1] {
            st.sxz[c] -= T::lit(m[0][2] * q);
        }
        for c in [c, c - l.sy, c - 1, c - l.sy - 1] {
            st.syz[c] -= T::lit(m[1][2] * q);
        }
    }

    fn apply_sponge(&self, st: &mut WavefieldState<T>) {
        if self.layout.sponge == 0 {
            return;
        }
        let l = &self.layout;
        let [nx, ny, nz] = l.comp;
        let first_bottom = l.physical[2];
        for i in 0..nx {
            for j in 0..ny {
                let gxy = self.damp_x[i] * self.damp_y[j];
                let k0 = if gxy < 1.0 { 0 } else { first_bottom };
                let base = l.at(i, j, 0);
                for k in k0..nz {
                    let g = T::lit(gxy * self.damp_z[k]);
                    let c = base + k;
                    for f in st.fields_mut() {
                        f[c] *= g;
                    }
                }
            }
        }
    }

    /// Discrete elastic energy (J) of the stresses plus kinetic energy of the
    /// velocities, summed over the physical and sponge cells.
    ///
    /// With `previous` velocities from the step before, the kinetic term uses
    /// the product of the two half-step velocities, which makes the sum the
    /// quantity the leapfrog conserves exactly in a closed box.
    pub fn energy(&self, state: &WavefieldState<T>, previous: Option<&WavefieldState<T>>) -> f64 {
        let l = &self.layout;
        let [nx, ny, nz] = l.comp;
        let m = &self.moduli;
        let rho = self.config.density;
        let vol = self.config.spacing_m.powi(3);
        let mut kinetic = 0.0;
        let mut strain = 0.0;
        let f = |v: T| v.to_f64_lossy();
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    let c = l.at(i, j, k);
                    let prev = previous.unwrap_or(state);
                    kinetic += f(state.vx[c]) * f(prev.vx[c])
                        + f(state.vy[c]) * f(prev.vy[c])
                        + f(state.vz[c]) * f(prev.vz[c]);
                    let l2m = f(m.lam2mu[c]);
                    let lam = f(m.lam[c]);
                    let mu = 0.5 * (l2m - lam);
                    let (a, b, cz) = (f(state.sxx[c]), f(state.syy[c]), f(state.szz[c]));
                    let tr = a + b + cz;
                    strain += ((a * a + b * b + cz * cz) - lam / (3.0 * lam + 2.0 * mu) * tr * tr) / (4.0 * mu);
                    strain += f(state.sxy[c]).powi(2) / (2.0 * f(m.mu_xy[c]))
                        + f(state.sxz[c]).powi(2) / (2.0 * f(m.mu_xz[c]))
                        + f(state.syz[c]).powi(2) / (2.0 * f(m.mu_yz[c]));
                }
            }
        }
        (0.5 * rho * kinetic + strain) * vol
    }

    /// Half-step velocity at physical surface node `(i, j)`, collocated at the
    /// node, as (east, north, up).
    pub fn surface_sample(&self, state: &WavefieldState<T>, i: usize, j: usize) -> [T; 3] {
        let l = &self.layout;
        let c = l.physical_at(i, j, 0);
        let half = T::lit(0.5);
        [half * (state.vx[c] + state.vx[c - l.sx]), half * (state.vy[c] + state.vy[c - l.sy]), -state.vz[c]]
    }
}
