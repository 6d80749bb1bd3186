//! Evaluation: mean absolute errors, peak ground velocity, wavelet-based
//! goodness-of-fit scores and Fourier amplitude spectra.
//!
//! Records are `(3, X, Y, T)` tensors with components E, N, Z.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensorcore::Tensor;

/// Centre-frequency parameter of the Morlet wavelet.
pub const MORLET_OMEGA0: f64 = 6.0;

pub const COMPONENTS: [&str; 3] = ["E", "N", "Z"];

fn check_pair<T: Scalar>(pred: &Tensor<T>, reference: &Tensor<T>) -> Result<()> {
    if pred.shape() != reference.shape() || pred.rank() != 4 || pred.shape()[0] != 3 {
        return Err(Error::ShapeMismatch {
            context: "record pair (3, X, Y, T)",
            expected: reference.shape().to_vec(),
            got: pred.shape().to_vec(),
        });
    }
    Ok(())
}

/// Mean of `|pred − ref|` over sensors and time, per component.
pub fn mae_per_component<T: Scalar>(pred: &Tensor<T>, reference: &Tensor<T>) -> Result<[f64; 3]> {
    check_pair(pred, reference)?;
    let per = (pred.len() / 3) as f64;
    Ok([0, 1, 2].map(|c| {
        pred.outer(c)
            .iter()
            .zip(reference.outer(c))
            .map(|(&p, &r)| (p - r).abs().to_f64_lossy())
            .sum::<f64>()
            / per
    }))
}

/// Peak `|v|` over time per component and sensor: `(3, X, Y)`.
pub fn pgv<T: Scalar>(record: &Tensor<T>) -> Result<Tensor<f64>> {
    let [c, x, y, t] = record_shape(record)?;
    Ok(Tensor::from_fn(&[c, x, y], |i| {
        let start = ((i[0] * x + i[1]) * y + i[2]) * t;
        record.data()[start..start + t].iter().fold(0.0f64, |m, v| m.max(v.abs().to_f64_lossy()))
    }))
}

/// Peak of the three-component Euclidean norm per sensor: `(X, Y)`.
pub fn pgv_euclidean<T: Scalar>(record: &Tensor<T>) -> Result<Tensor<f64>> {
    let [_, x, y, t] = record_shape(record)?;
    let d = record.data();
    Ok(Tensor::from_fn(&[x, y], |i| {
        let s = (i[0] * y + i[1]) * t;
        (0..t)
            .map(|k| (0..3).map(|c| d[c * x * y * t + s + k].to_f64_lossy().powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }))
}

fn record_shape<T: Scalar>(record: &Tensor<T>) -> Result<[usize; 4]> {
    match record.shape() {
        &[3, x, y, t] if x * y * t > 0 => Ok([3, x, y, t]),
        s => Err(Error::ShapeMismatch { context: "record (3, X, Y, T)", expected: vec![3, 0, 0, 0], got: s.to_vec() }),
    }
}

/// Trace of component `c` at sensor `(i, j)`.
pub fn trace<T: Scalar>(record: &Tensor<T>, c: usize, i: usize, j: usize) -> Vec<f64> {
    let s = record.shape();
    let (x, y, t) = (s[1], s[2], s[3]);
    let start = ((c * x + i) * y + j) * t;
    record.data()[start..start + t].iter().map(|v| v.to_f64_lossy()).collect()
}

/// `n` logarithmically spaced frequencies from `lo` to `hi` inclusive.
pub fn log_frequencies(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect(),
    }
}

/// Continuous wavelet transform with the analytic Morlet wavelet, one row per
/// frequency. The wavelet is normalized in the frequency domain to a peak of
/// 2, so a cosine of amplitude `A` at frequency `f` has `|W| ≈ A` on its ridge.
pub fn cwt_morlet(signal: &[f64], sample_rate: f64, freqs: &[f64]) -> Result<Vec<Vec<Complex64>>> {
    let nyquist = sample_rate / 2.0;
    if let Some(&f) = freqs.iter().find(|&&f| !(f > 0.0 && f < nyquist)) {
        return Err(Error::InvalidConfig(format!("wavelet frequency {f} Hz outside (0, {nyquist}) Hz")));
    }
    let n = signal.len();
    if n == 0 {
        return Ok(vec![Vec::new(); freqs.len()]);
    }
    // zero padding keeps the circular wrap-around out of the record
    let len = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut spec: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    spec.resize(len, Complex64::new(0.0, 0.0));
    fwd.process(&mut spec);

    Ok(freqs
        .iter()
        .map(|&f| {
            let scale = MORLET_OMEGA0 / (2.0 * PI * f);
            let mut row: Vec<Complex64> = (0..len)
                .map(|k| {
                    // positive frequencies only: analytic wavelet
                    if k == 0 || k > len / 2 {
                        return Complex64::new(0.0, 0.0);
                    }
                    let omega = 2.0 * PI * k as f64 * sample_rate / len as f64;
                    let w = 2.0 * (-0.5 * (scale * omega - MORLET_OMEGA0).powi(2)).exp();
                    spec[k] * w / len as f64
                })
                .collect();
            inv.process(&mut row);
            row.truncate(n);
            row
        })
        .collect())
}

/// Single-valued envelope and phase goodness of fit of a trace pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Gof {
    Scores { envelope: f64, phase: f64 },
    /// The reference has no energy in the band; the misfits are undefined.
    SilentReference,
}

impl Gof {
    pub fn scores(self) -> Option<(f64, f64)> {
        match self {
            Gof::Scores { envelope, phase } => Some((envelope, phase)),
            Gof::SilentReference => None,
        }
    }
}

/// Frequency band and sampling of the time-frequency plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GofBand {
    pub low_hz: f64,
    pub high_hz: f64,
    pub n_freqs: usize,
}

impl GofBand {
    /// From 0.2 Hz to `validity_hz`, capped below the Nyquist frequency.
    pub fn up_to(validity_hz: f64, sample_rate: f64) -> Self {
        let high = validity_hz.min(0.95 * sample_rate / 2.0);
        Self { low_hz: 0.2f64.min(high / 2.0), high_hz: high, n_freqs: 32 }
    }

    pub fn frequencies(&self) -> Vec<f64> {
        log_frequencies(self.low_hz, self.high_hz, self.n_freqs)
    }
}

/// Envelope misfit `Σ| |W_p| − |W_r| | / Σ|W_r|` and phase misfit
/// `Σ |W_r|·|arg(W_p·conj W_r)|/π / Σ|W_r|` over the time-frequency plane;
/// each score is `10·exp(−misfit)`.
pub fn gof_envelope_phase(pred: &[f64], reference: &[f64], sample_rate: f64, band: &GofBand) -> Result<Gof> {
    if pred.len() != reference.len() {
        return Err(Error::ShapeMismatch { context: "gof trace pair", expected: vec![reference.len()], got: vec![pred.len()] });
    }
    let freqs = band.frequencies();
    let wp = cwt_morlet(pred, sample_rate, &freqs)?;
    let wr = cwt_morlet(reference, sample_rate, &freqs)?;
    let (mut env, mut phase, mut norm) = (0.0, 0.0, 0.0);
    for (rp, rr) in wp.iter().zip(&wr) {
        for (p, r) in rp.iter().zip(rr) {
            let (ap, ar) = (p.norm(), r.norm());
            env += (ap - ar).abs();
            phase += ar * (p * r.conj()).arg().abs() / PI;
            norm += ar;
        }
    }
    let peak = wr.iter().flatten().fold(0.0f64, |m, w| m.max(w.norm()));
    if !(norm > 0.0) || peak == 0.0 {
        return Ok(Gof::SilentReference);
    }
    let score = |m: f64| (10.0 * (-m.abs()).exp()).clamp(0.0, 10.0);
    Ok(Gof::Scores { envelope: score(env / norm), phase: score(phase / norm) })
}

/// Goodness of fit at every sensor of a record pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    /// Sensor grid `(X, Y)`.
    pub sensors: [usize; 2],
    /// Row-major `(3, X, Y)`; `None` where the reference is silent.
    pub envelope: Vec<Option<f64>>,
    pub phase: Vec<Option<f64>>,
    pub silent_reference: usize,
    /// Share of scored points with envelope GOF above 6.
    pub envelope_above_6: f64,
    /// Share of scored points with phase GOF above 8.
    pub phase_above_8: f64,
    pub band: GofBand,
    pub formula: String,
}

pub const GOF_FORMULA: &str = "single-valued time-frequency misfits on an analytic Morlet (omega0=6) CWT, \
globally normalized by sum |W_ref|; score = 10*exp(-|misfit|)";

pub fn gof_report<T: Scalar>(pred: &Tensor<T>, reference: &Tensor<T>, sample_rate: f64, band: &GofBand) -> Result<GofReport> {
    check_pair(pred, reference)?;
    let [_, x, y, _] = record_shape(reference)?;
    let cells: Vec<(usize, usize, usize)> =
        (0..3).flat_map(|c| (0..x).flat_map(move |i| (0..y).map(move |j| (c, i, j)))).collect();
    let scores = cells
        .par_iter()
        .map(|&(c, i, j)| gof_envelope_phase(&trace(pred, c, i, j), &trace(reference, c, i, j), sample_rate, band))
        .collect::<Result<Vec<Gof>>>()?;
    let pick = |f: fn((f64, f64)) -> f64| scores.iter().map(|g| g.scores().map(f)).collect();
    let scored: Vec<(f64, f64)> = scores.iter().filter_map(|g| g.scores()).collect();
    let share = |pred: &dyn Fn(&(f64, f64)) -> bool| {
        if scored.is_empty() {
            f64::NAN
        } else {
            scored.iter().filter(|s| pred(s)).count() as f64 / scored.len() as f64
        }
    };
    Ok(GofReport {
        sensors: [x, y],
        envelope: pick(|s| s.0),
        phase: pick(|s| s.1),
        silent_reference: scores.len() - scored.len(),
        envelope_above_6: share(&|s| s.0 > 6.0),
        phase_above_8: share(&|s| s.1 > 8.0),
        band: *band,
        formula: GOF_FORMULA.into(),
    })
}

impl GofReport {
    /// One row per component and sensor.
    pub fn to_csv(&self) -> String {
        let [x, y] = self.sensors;
        let fmt = |v: Option<f64>| v.map_or_else(|| "silent".to_string(), |v| format!("{v:.6}"));
        let mut out = String::from("component,ix,iy,envelope_gof,phase_gof\n");
        for c in 0..3 {
            for i in 0..x {
                for j in 0..y {
                    let k = (c * x + i) * y + j;
                    out.push_str(&format!("{},{i},{j},{},{}\n", COMPONENTS[c], fmt(self.envelope[k]), fmt(self.phase[k])));
                }
            }
        }
        out
    }
}

/// One-sided amplitude spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeSpectrum {
    pub freqs_hz: Vec<f64>,
    /// `|X_k|` of the unnormalized DFT for `k = 0..=N/2`.
    pub amplitudes: Vec<f64>,
    pub tapered: bool,
}

/// Amplitude spectrum of a raw trace; `taper` applies a Hann window first.
pub fn fourier_amplitude_spectrum(trace: &[f64], sample_rate: f64, taper: bool) -> AmplitudeSpectrum {
    let n = trace.len();
    if n == 0 {
        return AmplitudeSpectrum { freqs_hz: Vec::new(), amplitudes: Vec::new(), tapered: taper };
    }
    let mut buf: Vec<Complex64> = trace
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let w = if taper && n > 1 { 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos() } else { 1.0 };
            Complex64::new(x * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    AmplitudeSpectrum {
        freqs_hz: (0..=half).map(|k| k as f64 * sample_rate / n as f64).collect(),
        amplitudes: buf[..=half].iter().map(|z| z.norm()).collect(),
        tapered: taper,
    }
}

/// Rows `sample,mae_E,mae_N,mae_Z`.
pub fn mae_csv(rows: &[(String, [f64; 3])]) -> String {
    let mut s = String::from("sample,mae_E,mae_N,mae_Z\n");
    for (name, m) in rows {
        s.push_str(&format!("{name},{:e},{:e},{:e}\n", m[0], m[1], m[2]));
    }
    s
}

/// Predicted and reference traces of one sensor, all components.
pub fn trace_csv<T: Scalar>(pred: &Tensor<T>, reference: &Tensor<T>, times_s: &[f64], sensor: (usize, usize)) -> Result<String> {
    check_pair(pred, reference)?;
    let (i, j) = sensor;
    let s = reference.shape();
    if i >= s[1] || j >= s[2] || times_s.len() != s[3] {
        return Err(Error::ShapeMismatch { context: "trace export", expected: s[1..].to_vec(), got: vec![i, j, times_s.len()] });
    }
    let cols: Vec<(Vec<f64>, Vec<f64>)> = (0..3).map(|c| (trace(pred, c, i, j), trace(reference, c, i, j))).collect();
    let mut out = String::from("time_s,pred_E,ref_E,pred_N,ref_N,pred_Z,ref_Z\n");
    for (k, t) in times_s.iter().enumerate() {
        out.push_str(&format!("{t:.6}"));
        for (p, r) in &cols {
            out.push_str(&format!(",{:e},{:e}", p[k], r[k]));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Predicted and reference amplitude spectra of one sensor, all components.
pub fn spectra_csv<T: Scalar>(pred: &Tensor<T>, reference: &Tensor<T>, sample_rate: f64, sensor: (usize, usize)) -> Result<String> {
    check_pair(pred, reference)?;
    let (i, j) = sensor;
    let spectra: Vec<(AmplitudeSpectrum, AmplitudeSpectrum)> = (0..3)
        .map(|c| {
            (
                fourier_amplitude_spectrum(&trace(pred, c, i, j), sample_rate, false),
                fourier_amplitude_spectrum(&trace(reference, c, i, j), sample_rate, false),
            )
        })
        .collect();
    let mut out = String::from("freq_hz,pred_E,ref_E,pred_N,ref_N,pred_Z,ref_Z\n");
    for (k, f) in spectra[0].1.freqs_hz.iter().enumerate() {
        out.push_str(&format!("{f:.6}"));
        for (p, r) in &spectra {
            out.push_str(&format!(",{:e},{:e}", p.amplitudes[k], r.amplitudes[k]));
        }
        out.push('\n');
    }
    Ok(out)
}
