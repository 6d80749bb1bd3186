//! Multi-dimensional discrete Fourier transforms and spectral resampling.
//!
//! Convention: the forward transform is unnormalized, the inverse carries the
//! `1/N` factor, so `ifft(fft(x)) == x`. All transforms are full complex
//! transforms; real inputs are promoted.
//!
//! Spectral resampling between grids of `N` and `M` points per axis follows
//! the usual trigonometric-interpolation rules: frequencies common to both
//! grids are copied, an even-length Nyquist bin is split in half when
//! upsampling and folded together when downsampling, and the spectrum is
//! scaled by `M/N` so that band-limited function *values* are preserved.

use std::any::{Any, TypeId};
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftDirection, FftPlanner};

use super::tensor::{ComplexTensor, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest imaginary residue (relative to the real part) an inverse transform
/// may discard when a real result is requested.
pub fn real_residue_tolerance<T: Scalar>() -> f64 {
    (1e3 * T::epsilon().to_f64_lossy()).max(1e-10)
}

pub fn check_axes(shape: &[usize], axes: [usize; 3]) -> Result<()> {
    for &ax in &axes {
        if ax >= shape.len() {
            return Err(Error::AxisOutOfRange { axis: ax, rank: shape.len() });
        }
        if shape[ax] == 0 {
            return Err(Error::DegenerateExtent { context: "fft axis", extents: shape.to_vec() });
        }
    }
    if axes[0] == axes[1] || axes[1] == axes[2] || axes[0] == axes[2] {
        return Err(Error::InvalidConfig(format!("transform axes must be distinct, got {axes:?}")));
    }
    Ok(())
}

thread_local! {
    static PLANS: RefCell<HashMap<(TypeId, usize, bool), Box<dyn Any>>> = RefCell::new(HashMap::new());
}

/// Per-thread cache of FFT plans; planning dominates small transforms otherwise.
fn plan<T: Scalar>(n: usize, direction: FftDirection) -> Arc<dyn Fft<T>> {
    let key = (TypeId::of::<T>(), n, direction == FftDirection::Forward);
    PLANS.with(|cell| {
        let mut plans = cell.borrow_mut();
        plans
            .entry(key)
            .or_insert_with(|| Box::new(FftPlanner::<T>::new().plan_fft(n, direction)))
            .downcast_ref::<Arc<dyn Fft<T>>>()
            .expect("plan cache keyed by scalar type")
            .clone()
    })
}

/// In-place unnormalized 1D DFT along `axis` of a row-major array.
pub fn fft_axis<T: Scalar>(
    data: &mut [Complex<T>],
    shape: &[usize],
    axis: usize,
    direction: FftDirection,
) {
    let n = shape[axis];
    if n <= 1 || data.is_empty() {
        return;
    }
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let fft = plan::<T>(n, direction);
    let mut scratch = vec![Complex::new(T::zero(), T::zero()); fft.get_inplace_scratch_len()];

    if inner == 1 {
        fft.process_with_scratch(data, &mut scratch);
        return;
    }
    // Strided axis: transpose each (n × inner) slab so lines become contiguous.
    let slab = n * inner;
    let mut buf = vec![Complex::new(T::zero(), T::zero()); slab];
    for o in 0..outer {
        let block = &mut data[o * slab..(o + 1) * slab];
        for k in 0..n {
            for i in 0..inner {
                buf[i * n + k] = block[k * inner + i];
            }
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for k in 0..n {
            for i in 0..inner {
                block[k * inner + i] = buf[i * n + k];
            }
        }
    }
}

/// Unnormalized transform over three axes, in place.
pub fn fft3_inplace<T: Scalar>(t: &mut ComplexTensor<T>, axes: [usize; 3], direction: FftDirection) {
    let shape = t.shape().to_vec();
    for &ax in &axes {
        fft_axis(t.data_mut(), &shape, ax, direction);
    }
}

/// Full complex DFT of a real tensor over `axes`; remaining axes are batch axes.
pub fn fft3<T: Scalar>(t: &Tensor<T>, axes: [usize; 3]) -> Result<ComplexTensor<T>> {
    check_axes(t.shape(), axes)?;
    let mut c = t.to_complex();
    fft3_inplace(&mut c, axes, FftDirection::Forward);
    Ok(c)
}

/// Complex-to-complex inverse over `axes` at the spectrum's own extents, with `1/N` scaling.
pub fn ifft3_complex<T: Scalar>(spec: &ComplexTensor<T>, axes: [usize; 3]) -> Result<ComplexTensor<T>> {
    check_axes(spec.shape(), axes)?;
    let mut c = spec.clone();
    fft3_inplace(&mut c, axes, FftDirection::Inverse);
    let n: usize = axes.iter().map(|&a| spec.shape()[a]).product();
    let inv = T::one() / T::from_usize_lossy(n);
    for z in c.data_mut() {
        *z = *z * inv;
    }
    Ok(c)
}

/// Inverse DFT evaluated on a grid of `out_extents` along `axes`.
///
/// When the extents differ from the spectrum's, the spectrum is first
/// resampled (zero-padded or truncated) and scaled so band-limited values are
/// preserved. Fails if the result is not real within
/// [`real_residue_tolerance`].
pub fn ifft3<T: Scalar>(
    spec: &ComplexTensor<T>,
    axes: [usize; 3],
    out_extents: [usize; 3],
) -> Result<Tensor<T>> {
    check_axes(spec.shape(), axes)?;
    if out_extents.iter().any(|&e| e == 0) {
        return Err(Error::DegenerateExtent {
            context: "ifft3 output",
            extents: out_extents.to_vec(),
        });
    }
    let resampled = resample_spectrum(spec, axes, out_extents)?;
    let full = ifft3_complex(&resampled, axes)?;
    let re_max = full.max_abs_re().to_f64_lossy();
    let im_max = full.max_abs_im().to_f64_lossy();
    let residue = if re_max > 0.0 { im_max / re_max } else { im_max };
    if residue > real_residue_tolerance::<T>() {
        return Err(Error::NotConjugateSymmetric { residue });
    }
    Ok(full.re())
}

/// Resamples a real field to `out_extents` along `axes` by spectral interpolation.
pub fn resample3<T: Scalar>(t: &Tensor<T>, axes: [usize; 3], out_extents: [usize; 3]) -> Result<Tensor<T>> {
    if axes.iter().zip(out_extents).all(|(&a, m)| t.shape()[a] == m) {
        return Ok(t.clone());
    }
    ifft3(&fft3(t, axes)?, axes, out_extents)
}

/// One-axis resampling plan: `out[j] += w · in[k]` for each `(j, k, w)` entry.
#[derive(Clone, Debug)]
pub struct ResampleAxis {
    pub n_in: usize,
    pub n_out: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl ResampleAxis {
    pub fn new(n_in: usize, n_out: usize) -> Self {
        let n = n_in.min(n_out);
        let nyq = n / 2 + 1;
        let mut entries = Vec::with_capacity(n + 1);
        for k in 0..nyq.min(n) {
            entries.push((k, k, 1.0));
        }
        let neg = n.saturating_sub(nyq);
        for q in 1..=neg {
            entries.push((n_out - q, n_in - q, 1.0));
        }
        if n % 2 == 0 && n_in != n_out {
            let h = n / 2;
            if n_out < n_in {
                // fold the −N/2 bin of the finer grid onto the output Nyquist bin
                entries.push((h, n_in - h, 1.0));
            } else {
                for e in entries.iter_mut() {
                    if e.0 == h && e.1 == h {
                        e.2 = 0.5;
                    }
                }
                entries.push((n_out - h, h, 0.5));
            }
        }
        Self { n_in, n_out, entries }
    }

    pub fn is_identity(&self) -> bool {
        self.n_in == self.n_out
    }

    /// Applies the map along `axis` of `data` (shape `shape`, extent `n_in` on `axis`).
    pub fn apply<T: Scalar>(&self, data: &[Complex<T>], shape: &[usize], axis: usize) -> Vec<Complex<T>> {
        self.run(data, shape, axis, false)
    }

    /// Applies the transpose of the map (extent `n_out` on `axis` → `n_in`).
    pub fn apply_transpose<T: Scalar>(
        &self,
        data: &[Complex<T>],
        shape: &[usize],
        axis: usize,
    ) -> Vec<Complex<T>> {
        self.run(data, shape, axis, true)
    }

    fn run<T: Scalar>(&self, data: &[Complex<T>], shape: &[usize], axis: usize, transpose: bool) -> Vec<Complex<T>> {
        let (src_n, dst_n) = if transpose { (self.n_out, self.n_in) } else { (self.n_in, self.n_out) };
        debug_assert_eq!(shape[axis], src_n);
        let inner: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        let zero = Complex::new(T::zero(), T::zero());
        let mut out = vec![zero; outer * dst_n * inner];
        for o in 0..outer {
            let src = &data[o * src_n * inner..(o + 1) * src_n * inner];
            let dst = &mut out[o * dst_n * inner..(o + 1) * dst_n * inner];
            for &(j, k, w) in &self.entries {
                let (d, s) = if transpose { (k, j) } else { (j, k) };
                let w = T::lit(w);
                let s_line = &src[s * inner..(s + 1) * inner];
                let d_line = &mut dst[d * inner..(d + 1) * inner];
                for (a, b) in d_line.iter_mut().zip(s_line) {
                    *a = *a + *b * w;
                }
            }
        }
        out
    }
}

/// Resamples a spectrum to `out_extents` along `axes`, including the `M/N`
/// factor that keeps band-limited function values unchanged.
pub fn resample_spectrum<T: Scalar>(
    spec: &ComplexTensor<T>,
    axes: [usize; 3],
    out_extents: [usize; 3],
) -> Result<ComplexTensor<T>> {
    let mut shape = spec.shape().to_vec();
    let mut data = spec.data().to_vec();
    let mut scale = 1.0f64;
    for (&ax, &m) in axes.iter().zip(&out_extents) {
        let n = shape[ax];
        if n == m {
            continue;
        }
        let plan = ResampleAxis::new(n, m);
        data = plan.apply(&data, &shape, ax);
        shape[ax] = m;
        scale *= m as f64 / n as f64;
    }
    if scale != 1.0 {
        let s = T::lit(scale);
        for z in &mut data {
            *z = *z * s;
        }
    }
    Tensor::new(shape, data)
}

/// Adjoint of [`resample_spectrum`]: maps a spectrum on `out_extents` back to
/// `in_extents` along `axes`.
pub fn resample_spectrum_transpose<T: Scalar>(
    spec: &ComplexTensor<T>,
    axes: [usize; 3],
    in_extents: [usize; 3],
) -> Result<ComplexTensor<T>> {
    let mut shape = spec.shape().to_vec();
    let mut data = spec.data().to_vec();
    let mut scale = 1.0f64;
    for (&ax, &n) in axes.iter().zip(&in_extents) {
        let m = shape[ax];
        if n == m {
            continue;
        }
        let plan = ResampleAxis::new(n, m);
        data = plan.apply_transpose(&data, &shape, ax);
        shape[ax] = n;
        scale *= m as f64 / n as f64;
    }
    if scale != 1.0 {
        let s = T::lit(scale);
        for z in &mut data {
            *z = *z * s;
        }
    }
    Tensor::new(shape, data)
}
