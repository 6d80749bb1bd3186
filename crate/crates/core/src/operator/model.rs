//! The U-shaped neural operator.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::schedule::UnoSchedule;
use super::spectral::{fourier_layer, resample, spectral_weight_shape};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;
use crate::tensorcore::{DiffTensor, Tape, Tensor};
use crate::training::NormStats;

/// Normalized voxel-centre coordinates, one channel per axis: `(3, N1, N2, N3)`.
pub fn positional_encoding<T: Scalar>(extents: [usize; 3]) -> Tensor<T> {
    let [n1, n2, n3] = extents;
    Tensor::from_fn(&[3, n1, n2, n3], |i| {
        let axis = i[0];
        T::lit((i[axis + 1] as f64 + 0.5) / extents[axis] as f64)
    })
}

/// Names and shapes of every stored tensor, in storage order.
pub fn parameter_layout(schedule: &UnoSchedule) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    let mut mlp = |prefix: &str, i: usize, h: usize, o: usize| {
        out.push((format!("{prefix}.0.weight"), vec![i, h]));
        out.push((format!("{prefix}.0.bias"), vec![h]));
        out.push((format!("{prefix}.1.weight"), vec![h, o]));
        out.push((format!("{prefix}.1.bias"), vec![o]));
    };
    mlp("lift", 4, schedule.lift_hidden, schedule.lifted_width);
    let mut layers = Vec::new();
    for (l, plan) in schedule.layers.iter().enumerate() {
        let ci = schedule.input_width(l);
        layers.push((format!("fourier{}.spectral", l + 1), spectral_weight_shape(ci, plan.width, plan.modes)));
        layers.push((format!("fourier{}.pointwise", l + 1), vec![ci, plan.width]));
        layers.push((format!("fourier{}.bias", l + 1), vec![plan.width]));
    }
    let last = schedule.layers.last().map_or(0, |p| p.width);
    let mut heads = Vec::new();
    for name in ["head_e", "head_n", "head_z"] {
        heads.push((format!("{name}.0.weight"), vec![last, schedule.head_hidden]));
        heads.push((format!("{name}.0.bias"), vec![schedule.head_hidden]));
        heads.push((format!("{name}.1.weight"), vec![schedule.head_hidden, 1]));
        heads.push((format!("{name}.1.bias"), vec![1]));
    }
    out.extend(layers);
    out.extend(heads);
    out
}

/// Model parameters, their schedule and the input normalization.
#[derive(Clone, Debug)]
pub struct UnoModel<T> {
    pub schedule: UnoSchedule,
    pub params: Vec<Tensor<T>>,
    pub norm: Option<NormStats>,
    pub seed: u64,
}

impl<T: Scalar> UnoModel<T> {
    /// Random initialization: spectral weights uniform in `[0, 1)/(C_in·C_out)`,
    /// point-wise weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn new(schedule: UnoSchedule, seed: u64) -> Result<Self> {
        schedule.validate()?;
        let mut rng = rng::stream(seed, 0);
        let params = parameter_layout(&schedule)
            .into_iter()
            .map(|(name, shape)| {
                let fan_in = shape[0] as f64;
                let dist = if name.ends_with("spectral") {
                    Uniform::new(0.0, 1.0 / (shape[0] * shape[1]) as f64)
                } else {
                    let bound = if name.contains("bias") {
                        // fan-in of a bias is its layer's input width, stored on the weight before it
                        1.0
                    } else {
                        1.0 / fan_in.sqrt()
                    };
                    Uniform::new(-bound, bound)
                }
                .map_err(|e| Error::InvalidConfig(e.to_string()))?;
                Ok(Tensor::from_fn(&shape, |_| T::lit(dist.sample(&mut rng))))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut model = Self { schedule, params, norm: None, seed };
        model.rescale_biases();
        Ok(model)
    }

    /// Biases follow the fan-in bound of the weight stored just before them.
    fn rescale_biases(&mut self) {
        let layout = parameter_layout(&self.schedule);
        for k in 1..layout.len() {
            let (name, _) = &layout[k];
            if !name.contains("bias") {
                continue;
            }
            let fan_in = layout[k - 1].1[0] as f64;
            let s = T::lit(1.0 / fan_in.sqrt());
            self.params[k].data_mut().iter_mut().for_each(|b| *b = *b * s);
        }
    }

    /// All parameters zero.
    pub fn zeros(schedule: UnoSchedule) -> Result<Self> {
        schedule.validate()?;
        let params = parameter_layout(&schedule).into_iter().map(|(_, s)| Tensor::zeros(&s)).collect();
        Ok(Self { schedule, params, norm: None, seed: 0 })
    }

    /// Number of stored scalars, by enumeration.
    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    pub fn named_parameters(&self) -> Vec<(String, &Tensor<T>)> {
        parameter_layout(&self.schedule).into_iter().map(|(n, _)| n).zip(self.params.iter()).collect()
    }

    /// Normalized operator input `(1, N1, N2, N3)` from `V_S²`.
    pub fn prepare_input(&self, squared_velocity: &Tensor<T>) -> Result<Tensor<T>> {
        let normalized = match &self.norm {
            Some(stats) => stats.apply(squared_velocity)?,
            None => squared_velocity.clone(),
        };
        let mut shape = vec![1];
        shape.extend_from_slice(squared_velocity.shape());
        normalized.reshape(&shape)
    }

    /// Prediction `(3, X, Y, T)` for a raw `V_S²` volume.
    pub fn forward(&self, squared_velocity: &Tensor<T>) -> Result<Tensor<T>> {
        let input = self.prepare_input(squared_velocity)?;
        self.forward_normalized(&input)
    }

    /// Prediction for an already normalized `(1, N1, N2, N3)` input.
    pub fn forward_normalized(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let params: Vec<DiffTensor> = self.params.iter().map(|p| tape.constant(p.clone())).collect();
        let x = tape.constant(input.clone());
        let y = self.forward_on_tape(&mut tape, &params, x)?;
        let out = tape.value(y).clone();
        if !out.all_finite() {
            return Err(Error::NonFinite { context: "operator output".into() });
        }
        Ok(out)
    }

    /// Records the forward pass; `params` are handles to this model's
    /// parameters in storage order, `input` is the normalized `(1, N1, N2, N3)` field.
    pub fn forward_on_tape(&self, tape: &mut Tape<T>, params: &[DiffTensor], input: DiffTensor) -> Result<DiffTensor> {
        let s = &self.schedule;
        if params.len() != self.params.len() {
            return Err(Error::ShapeMismatch {
                context: "parameter handles",
                expected: vec![self.params.len()],
                got: vec![params.len()],
            });
        }
        let shape = tape.shape(input).to_vec();
        if shape.len() != 4 || shape[0] != 1 {
            return Err(Error::ShapeMismatch { context: "operator input", expected: vec![1, 0, 0, 0], got: shape });
        }
        let grid = [shape[1], shape[2], shape[3]];
        let res = s.resolutions(grid)?;

        let coords = tape.constant(positional_encoding(grid));
        let x = tape.concat(&[input, coords])?;
        let mut next = params.iter().copied();
        let mut take = || next.next().expect("parameter count checked above");

        let h = tape.channel_linear(x, take(), Some(take()))?;
        let h = tape.relu(h);
        let mut v = tape.channel_linear(h, take(), Some(take()))?;

        let mut outputs: Vec<DiffTensor> = Vec::with_capacity(s.layers.len());
        for (l, plan) in s.layers.iter().enumerate() {
            let here = if l == 0 { grid } else { res[l - 1] };
            let inp = match plan.skip_from {
                Some(src) => {
                    let skip = resample(tape, outputs[src], here)?;
                    tape.concat(&[v, skip])?
                }
                None => v,
            };
            let (r, w, b) = (take(), take(), take());
            let y = fourier_layer(tape, inp, r, Some(w), Some(b), plan.modes, res[l])?;
            v = if plan.activation { tape.relu(y) } else { y };
            outputs.push(v);
        }

        let mut heads = Vec::with_capacity(3);
        for _ in 0..3 {
            let h = tape.channel_linear(v, take(), Some(take()))?;
            let h = tape.relu(h);
            heads.push(tape.channel_linear(h, take(), Some(take()))?);
        }
        tape.concat(&heads)
    }
}

/// Uniform random tensor in `[lo, hi)`; used for synthetic inputs.
pub fn random_tensor<T: Scalar>(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::lit(rng.random_range(lo..hi)))
}
