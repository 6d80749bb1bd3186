//! Double-couple point source and its moment-release history.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Point source description. Positions are metres; `z <= 0` is below the free surface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSpec {
    pub position_m: [f64; 3],
    pub strike_deg: f64,
    pub dip_deg: f64,
    pub rake_deg: f64,
    /// Rise-time parameter of the moment ramp, seconds.
    pub tau_s: f64,
    /// Scalar moment, N·m.
    pub moment_scale: f64,
}

impl Default for SourceSpec {
    fn default() -> Self {
        Self {
            position_m: [4800.0, 4800.0, -8400.0],
            strike_deg: 50.0,
            dip_deg: 45.0,
            rake_deg: 88.0,
            tau_s: 0.127,
            moment_scale: 1e16,
        }
    }
}

impl SourceSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(0.0..360.0).contains(&self.strike_deg) {
            return bad(format!("strike must lie in [0, 360), got {}", self.strike_deg));
        }
        if !(0.0..=90.0).contains(&self.dip_deg) {
            return bad(format!("dip must lie in [0, 90], got {}", self.dip_deg));
        }
        if !(-180.0..=180.0).contains(&self.rake_deg) {
            return bad(format!("rake must lie in [-180, 180], got {}", self.rake_deg));
        }
        if !(self.tau_s > 0.0) {
            return bad(format!("tau_s must be positive, got {}", self.tau_s));
        }
        if self.position_m[2] > 0.0 {
            return bad(format!("source z must be <= 0 (below the surface), got {}", self.position_m[2]));
        }
        Ok(())
    }

    /// Moment tensor in solver axes (x = east, y = north, z = down).
    pub fn moment_tensor(&self) -> [[f64; 3]; 3] {
        ned_to_solver(moment_tensor_from_angles(self.strike_deg, self.dip_deg, self.rake_deg, self.moment_scale))
    }
}

/// Double-couple moment tensor, Aki & Richards convention (x = north, y = east, z = down).
pub fn moment_tensor_from_angles(strike_deg: f64, dip_deg: f64, rake_deg: f64, m0: f64) -> [[f64; 3]; 3] {
    let (phi, delta, lambda) = (strike_deg.to_radians(), dip_deg.to_radians(), rake_deg.to_radians());
    let (sd, cd) = delta.sin_cos();
    let (s2d, c2d) = (2.0 * delta).sin_cos();
    let (sl, cl) = lambda.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let (s2p, c2p) = (2.0 * phi).sin_cos();

    let mxx = -m0 * (sd * cl * s2p + s2d * sl * sp * sp);
    let mxy = m0 * (sd * cl * c2p + 0.5 * s2d * sl * s2p);
    let mxz = -m0 * (cd * cl * cp + c2d * sl * sp);
    let myy = m0 * (sd * cl * s2p - s2d * sl * cp * cp);
    let myz = -m0 * (cd * cl * sp - c2d * sl * cp);
    let mzz = m0 * s2d * sl;
    [[mxx, mxy, mxz], [mxy, myy, myz], [mxz, myz, mzz]]
}

/// Reorders a north-east-down tensor into east-north-down solver axes.
pub fn ned_to_solver(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    const P: [usize; 3] = [1, 0, 2];
    let mut out = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            out[a][b] = m[P[a]][P[b]];
        }
    }
    out
}

/// Moment ramp `1 − (1 + t/τ)·exp(−t/τ)`; zero before the origin time.
pub fn source_time_function(t: f64, tau: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let x = t / tau;
    // -expm1 keeps full relative precision for small x
    -(-x).exp_m1() - x * (-x).exp()
}

/// Moment rate `(t/τ²)·exp(−t/τ)`, the derivative of [`source_time_function`].
pub fn source_time_derivative(t: f64, tau: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    t / (tau * tau) * (-t / tau).exp()
}
