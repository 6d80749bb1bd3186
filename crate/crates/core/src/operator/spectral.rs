//! Fourier layers as differentiable tape operations.
//!
//! A layer maps `v` of shape `(C_in, N1, N2, N3)` to `(C_out, M1, M2, M3)`:
//!
//! ```text
//! X = FFT_N(v)
//! B = Sym(mask · R · X) + W · X
//! out = Re(IFFT_M((M/N) · S(B))) + b
//! ```
//!
//! `S` copies the common frequencies between the two grids (spectral zero
//! padding or truncation), `Sym(Y)(k) = (Y(k) + conj(Y(−k)))/2` makes the
//! retained block Hermitian so the output is real, and `mask` keeps the
//! frequencies `−m..m−1` per axis. Because the point-wise path `W` is applied
//! in the spectral domain before resampling, both addends are resampled
//! identically and the whole layer costs one forward and one inverse
//! transform.

use num_complex::Complex;
use rustfft::FftDirection;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensorcore::fft::{fft3_inplace, real_residue_tolerance, resample_spectrum, resample_spectrum_transpose};
use crate::tensorcore::{ComplexTensor, DiffTensor, Operation, Tape, Tensor};

const AXES: [usize; 3] = [1, 2, 3];

/// Frequency index of position `p` of a retained block of `2m` modes on an
/// axis of `n` points: `0..m` then `n−m..n`.
#[inline]
pub fn block_frequency(p: usize, m: usize, n: usize) -> usize {
    if p < m {
        p
    } else {
        n + p - 2 * m
    }
}

/// Checks that `modes` fit a layer going from `input` to `output` resolution.
pub fn check_modes(modes: [usize; 3], input: [usize; 3], output: [usize; 3]) -> Result<()> {
    for a in 0..3 {
        if modes[a] == 0 || 2 * modes[a] > input[a] {
            return Err(Error::ModeOverflow { modes, resolution: input });
        }
        if 2 * modes[a] > output[a] {
            return Err(Error::ModeOverflow { modes, resolution: output });
        }
    }
    Ok(())
}

/// Shape of the stored spectral weights: `(C_in, C_out, 2m1, 2m2, 2m3, 2)`,
/// the last axis holding real and imaginary parts.
pub fn spectral_weight_shape(c_in: usize, c_out: usize, modes: [usize; 3]) -> Vec<usize> {
    vec![c_in, c_out, 2 * modes[0], 2 * modes[1], 2 * modes[2], 2]
}

fn spatial(shape: &[usize]) -> [usize; 3] {
    [shape[1], shape[2], shape[3]]
}

fn complex_zeros<T: Scalar>(shape: &[usize]) -> ComplexTensor<T> {
    Tensor::full(shape, Complex::new(T::zero(), T::zero()))
}

/// Flat offsets of every retained mode: `(block position, spectrum offset,
/// offset of the mirrored frequency −k)`.
fn mode_table(modes: [usize; 3], n: [usize; 3]) -> Vec<(usize, usize, usize)> {
    let [m1, m2, m3] = modes;
    let mut table = Vec::with_capacity(8 * m1 * m2 * m3);
    for p1 in 0..2 * m1 {
        let k1 = block_frequency(p1, m1, n[0]);
        let r1 = (n[0] - k1) % n[0];
        for p2 in 0..2 * m2 {
            let k2 = block_frequency(p2, m2, n[1]);
            let r2 = (n[1] - k2) % n[1];
            for p3 in 0..2 * m3 {
                let k3 = block_frequency(p3, m3, n[2]);
                let r3 = (n[2] - k3) % n[2];
                let p = (p1 * 2 * m2 + p2) * 2 * m3 + p3;
                table.push((p, (k1 * n[1] + k2) * n[2] + k3, (r1 * n[1] + r2) * n[2] + r3));
            }
        }
    }
    table
}

/// Everything the backward pass needs from the forward pass.
struct LayerCache<T> {
    spectrum: ComplexTensor<T>,
    modes: [usize; 3],
    input_res: [usize; 3],
    output_res: [usize; 3],
    has_pointwise: bool,
    has_bias: bool,
}

/// Forward evaluation; returns the output and the input spectrum.
fn layer_forward<T: Scalar>(
    v: &Tensor<T>,
    r: &Tensor<T>,
    w: Option<&Tensor<T>>,
    b: Option<&Tensor<T>>,
    modes: [usize; 3],
    output_res: [usize; 3],
) -> Result<(Tensor<T>, ComplexTensor<T>)> {
    if v.rank() != 4 {
        return Err(Error::ShapeMismatch { context: "fourier layer input", expected: vec![0; 4], got: v.shape().to_vec() });
    }
    let c_in = v.shape()[0];
    let n = spatial(v.shape());
    let c_out = r.shape().get(1).copied().unwrap_or(0);
    r.expect_shape("spectral weights", &spectral_weight_shape(c_in, c_out, modes))?;
    if let Some(w) = w {
        w.expect_shape("pointwise weights", &[c_in, c_out])?;
    }
    if let Some(b) = b {
        b.expect_shape("layer bias", &[c_out])?;
    }
    check_modes(modes, n, output_res)?;

    let mut x = v.to_complex();
    fft3_inplace(&mut x, AXES, FftDirection::Forward);

    let vol: usize = n.iter().product();
    let mut mix = complex_zeros::<T>(&[c_out, n[0], n[1], n[2]]);
    if let Some(w) = w {
        for o in 0..c_out {
            let bo = mix.outer_mut(o);
            for i in 0..c_in {
                let wio = w.data()[i * c_out + o];
                for (acc, xv) in bo.iter_mut().zip(&x.data()[i * vol..(i + 1) * vol]) {
                    *acc = *acc + *xv * wio;
                }
            }
        }
    }
    let half = T::lit(0.5);
    let block = r.shape()[2] * r.shape()[3] * r.shape()[4];
    let rd = r.data();
    for (p, k, mirror) in mode_table(modes, n) {
        for o in 0..c_out {
            let mut acc = Complex::new(T::zero(), T::zero());
            for i in 0..c_in {
                let off = ((i * c_out + o) * block + p) * 2;
                acc = acc + Complex::new(rd[off], rd[off + 1]) * x.data()[i * vol + k];
            }
            let bo = mix.outer_mut(o);
            bo[k] = bo[k] + acc * half;
            bo[mirror] = bo[mirror] + acc.conj() * half;
        }
    }

    let mut z = resample_spectrum(&mix, AXES, output_res)?;
    fft3_inplace(&mut z, AXES, FftDirection::Inverse);
    let inv = T::one() / T::from_usize_lossy(output_res.iter().product());
    let re_max = z.max_abs_re().to_f64_lossy();
    let im_max = z.max_abs_im().to_f64_lossy();
    if im_max > real_residue_tolerance::<T>() * re_max {
        return Err(Error::NotConjugateSymmetric { residue: im_max / re_max });
    }
    let out_vol: usize = output_res.iter().product();
    let mut out = Tensor::new(
        vec![c_out, output_res[0], output_res[1], output_res[2]],
        z.data().iter().map(|c| c.re * inv).collect(),
    )?;
    if let Some(b) = b {
        for o in 0..c_out {
            let bo = b.data()[o];
            out.data_mut()[o * out_vol..(o + 1) * out_vol].iter_mut().for_each(|y| *y += bo);
        }
    }
    Ok((out, x))
}

/// Spectral convolution `F⁻¹(R · F(v))` evaluated at `output_res`.
pub fn spectral_conv<T: Scalar>(v: &Tensor<T>, r: &Tensor<T>, modes: [usize; 3], output_res: [usize; 3]) -> Result<Tensor<T>> {
    layer_forward(v, r, None, None, modes, output_res).map(|(out, _)| out)
}

/// Fourier layer without activation: spectral path plus point-wise path `W·v + b`,
/// both at `output_res`.
pub fn fourier_layer_linear<T: Scalar>(
    v: &Tensor<T>,
    r: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    modes: [usize; 3],
    output_res: [usize; 3],
) -> Result<Tensor<T>> {
    layer_forward(v, r, Some(w), Some(b), modes, output_res).map(|(out, _)| out)
}

struct FourierLayerOp<T>(LayerCache<T>);

impl<T: Scalar> Operation<T> for FourierLayerOp<T> {
    fn name(&self) -> &'static str {
        "fourier_layer"
    }

    fn backward(
        &self,
        grad: &Tensor<T>,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>> {
        let c = &self.0;
        let r = inputs[1];
        let w = if c.has_pointwise { Some(inputs[2]) } else { None };
        let (c_in, c_out) = (r.shape()[0], r.shape()[1]);
        let n = c.input_res;
        let vol: usize = n.iter().product();
        let out_vol: usize = c.output_res.iter().product();

        // gradient w.r.t. the resampled spectrum, then pulled back to the input grid
        let mut gz = grad.to_complex();
        fft3_inplace(&mut gz, AXES, FftDirection::Forward);
        let inv_m = T::one() / T::from_usize_lossy(out_vol);
        gz.data_mut().iter_mut().for_each(|z| *z = *z * inv_m);
        let gb = resample_spectrum_transpose(&gz, AXES, n)?;

        let x = &c.spectrum;
        let half = T::lit(0.5);
        let block = r.shape()[2] * r.shape()[3] * r.shape()[4];
        let table = mode_table(c.modes, n);
        let need_v = needs[0];
        let mut gx = if need_v { Some(complex_zeros::<T>(x.shape())) } else { None };
        let mut gr = if needs[1] { Some(Tensor::zeros(r.shape())) } else { None };
        let rd = r.data();
        for &(p, k, mirror) in &table {
            for o in 0..c_out {
                let gp = (gb.data()[o * vol + k] + gb.data()[o * vol + mirror].conj()) * half;
                for i in 0..c_in {
                    let off = ((i * c_out + o) * block + p) * 2;
                    let xv = x.data()[i * vol + k];
                    if let Some(gr) = gr.as_mut() {
                        let g = gp * xv.conj();
                        gr.data_mut()[off] += g.re;
                        gr.data_mut()[off + 1] += g.im;
                    }
                    if let Some(gx) = gx.as_mut() {
                        let rv = Complex::new(rd[off], rd[off + 1]);
                        gx.data_mut()[i * vol + k] = gx.data_mut()[i * vol + k] + rv.conj() * gp;
                    }
                }
            }
        }

        let mut out: Vec<Option<Tensor<T>>> = vec![None, gr];
        if let Some(w) = w {
            let mut gw = Tensor::zeros(w.shape());
            for i in 0..c_in {
                let xi = &x.data()[i * vol..(i + 1) * vol];
                for o in 0..c_out {
                    let go = &gb.data()[o * vol..(o + 1) * vol];
                    if needs[2] {
                        let s: T = xi.iter().zip(go).map(|(a, b)| a.re * b.re + a.im * b.im).sum();
                        gw.data_mut()[i * c_out + o] = s;
                    }
                    if let Some(gx) = gx.as_mut() {
                        let wio = w.data()[i * c_out + o];
                        for (acc, g) in gx.data_mut()[i * vol..(i + 1) * vol].iter_mut().zip(go) {
                            *acc = *acc + *g * wio;
                        }
                    }
                }
            }
            out.push(if needs[2] { Some(gw) } else { None });
        }
        if c.has_bias {
            let gb_sum: Vec<T> = (0..c_out).map(|o| grad.data()[o * out_vol..(o + 1) * out_vol].iter().copied().sum()).collect();
            out.push(Some(Tensor::new(vec![c_out], gb_sum)?));
        }
        if let Some(mut gx) = gx {
            // adjoint of the unnormalized forward DFT is the unnormalized inverse
            fft3_inplace(&mut gx, AXES, FftDirection::Inverse);
            out[0] = Some(gx.re());
        }
        Ok(out)
    }
}

/// Records a Fourier layer (without activation) on the tape.
pub fn fourier_layer<T: Scalar>(
    tape: &mut Tape<T>,
    v: DiffTensor,
    r: DiffTensor,
    w: Option<DiffTensor>,
    b: Option<DiffTensor>,
    modes: [usize; 3],
    output_res: [usize; 3],
) -> Result<DiffTensor> {
    let (out, spectrum) = layer_forward(
        tape.value(v),
        tape.value(r),
        w.map(|w| tape.value(w)),
        b.map(|b| tape.value(b)),
        modes,
        output_res,
    )?;
    let input_res = spatial(tape.shape(v));
    let cache = LayerCache { spectrum, modes, input_res, output_res, has_pointwise: w.is_some(), has_bias: b.is_some() };
    let mut inputs = vec![v, r];
    inputs.extend(w);
    inputs.extend(b);
    Ok(tape.record(out, &inputs, Box::new(FourierLayerOp(cache))))
}

struct ResampleOp {
    input_res: [usize; 3],
}

impl<T: Scalar> Operation<T> for ResampleOp {
    fn name(&self) -> &'static str {
        "spectral_resample"
    }

    fn backward(
        &self,
        grad: &Tensor<T>,
        _inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        _needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>> {
        let out_vol: usize = spatial(output.shape()).iter().product();
        let mut gz = grad.to_complex();
        fft3_inplace(&mut gz, AXES, FftDirection::Forward);
        let inv_m = T::one() / T::from_usize_lossy(out_vol);
        gz.data_mut().iter_mut().for_each(|z| *z = *z * inv_m);
        let mut gx = resample_spectrum_transpose(&gz, AXES, self.input_res)?;
        fft3_inplace(&mut gx, AXES, FftDirection::Inverse);
        Ok(vec![Some(gx.re())])
    }
}

/// Spectral resampling of a `(C, N1, N2, N3)` field to `output_res`.
pub fn resample<T: Scalar>(tape: &mut Tape<T>, v: DiffTensor, output_res: [usize; 3]) -> Result<DiffTensor> {
    let input_res = spatial(tape.shape(v));
    if input_res == output_res {
        return Ok(v);
    }
    let out = crate::tensorcore::resample3(tape.value(v), AXES, output_res)?;
    Ok(tape.record(out, &[v], Box::new(ResampleOp { input_res })))
}
