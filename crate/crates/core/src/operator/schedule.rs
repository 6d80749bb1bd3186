//! Resolution, width and mode tables of the U-shaped operator.

use serde::{Deserialize, Serialize};

use super::spectral::check_modes;
use crate::error::{Error, Result};

/// One Fourier layer of the schedule. Resolutions are given for the
/// schedule's reference input and scale with the actual input.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerPlan {
    /// Output channels.
    pub width: usize,
    /// Output grid at the reference input resolution.
    pub resolution: [usize; 3],
    pub modes: [usize; 3],
    pub activation: bool,
    /// Earlier layer whose output is concatenated to this layer's input.
    #[serde(default)]
    pub skip_from: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnoSchedule {
    pub reference_input: [usize; 3],
    /// Hidden width of the uplift `P`.
    pub lift_hidden: usize,
    /// Channels of `v0`.
    pub lifted_width: usize,
    pub layers: Vec<LayerPlan>,
    /// Hidden width of each projection head.
    pub head_hidden: usize,
}

/// Skip plan shared by the presets: decoder layer `9−i` receives encoder layer
/// `i` (1-based); layer 5 already consumes layer 4 directly.
const SKIPS: [Option<usize>; 8] = [None, None, None, None, None, Some(2), Some(1), Some(0)];

fn plans(widths: [usize; 8], res: [[usize; 3]; 8], modes: [[usize; 3]; 8]) -> Vec<LayerPlan> {
    (0..8)
        .map(|l| LayerPlan {
            width: widths[l],
            resolution: res[l],
            modes: modes[l],
            activation: l < 7,
            skip_from: SKIPS[l],
        })
        .collect()
}

impl UnoSchedule {
    /// Full-scale layout: 64³ → bottleneck 8³ → 64×64×128. Widths and modes
    /// are our choice (about 85M parameters).
    pub fn full() -> Self {
        let c = |n: usize| [n; 3];
        Self {
            reference_input: [64; 3],
            lift_hidden: 64,
            lifted_width: 16,
            layers: plans(
                [24, 32, 64, 64, 64, 32, 24, 24],
                [c(32), c(16), c(8), c(8), c(16), c(32), c(64), [64, 64, 128]],
                [c(8), c(8), c(4), c(4), c(4), c(8), c(8), [8, 8, 16]],
            ),
            head_hidden: 128,
        }
    }

    /// Desk layout: the full schedule scaled by 1/4 (16³ → 16×16×32), about 87K parameters.
    pub fn desk() -> Self {
        let c = |n: usize| [n; 3];
        Self {
            reference_input: [16; 3],
            lift_hidden: 32,
            lifted_width: 16,
            layers: plans(
                [8; 8],
                [c(8), c(4), c(2), c(2), c(4), c(8), c(16), [16, 16, 32]],
                [c(2), c(2), c(1), c(1), c(1), c(2), c(2), [2, 2, 3]],
            ),
            head_hidden: 32,
        }
    }

    /// Minimal layout on 4³ inputs for exhaustive gradient checks.
    pub fn tiny() -> Self {
        let c = |n: usize| [n; 3];
        Self {
            reference_input: [4; 3],
            lift_hidden: 3,
            lifted_width: 3,
            layers: plans(
                [2; 8],
                [c(2), c(2), c(2), c(2), c(2), c(2), c(4), [4, 4, 8]],
                [c(1); 8],
            ),
            head_hidden: 3,
        }
    }

    /// Input channels of layer `l`.
    pub fn input_width(&self, l: usize) -> usize {
        let base = if l == 0 { self.lifted_width } else { self.layers[l - 1].width };
        base + self.layers[l].skip_from.map_or(0, |s| self.layers[s].width)
    }

    /// Output grids of every layer for an input grid `input`.
    pub fn resolutions(&self, input: [usize; 3]) -> Result<Vec<[usize; 3]>> {
        let mut out = Vec::with_capacity(self.layers.len());
        for plan in &self.layers {
            let mut r = [0; 3];
            for a in 0..3 {
                let scaled = plan.resolution[a] * input[a];
                if scaled % self.reference_input[a] != 0 {
                    return Err(Error::InvalidConfig(format!(
                        "input {input:?} is not a whole multiple of the schedule's reference {:?}",
                        self.reference_input
                    )));
                }
                r[a] = scaled / self.reference_input[a];
            }
            out.push(r);
        }
        Ok(out)
    }

    /// Output tensor shape `(3, X, Y, T)` for an input grid.
    pub fn output_shape(&self, input: [usize; 3]) -> Result<[usize; 4]> {
        let last = *self.resolutions(input)?.last().ok_or_else(|| Error::InvalidConfig("empty schedule".into()))?;
        Ok([3, last[0], last[1], last[2]])
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidConfig("schedule has no layers".into()));
        }
        if self.lift_hidden == 0 || self.lifted_width == 0 || self.head_hidden == 0 {
            return Err(Error::InvalidConfig("widths must be positive".into()));
        }
        for (l, plan) in self.layers.iter().enumerate() {
            if plan.width == 0 {
                return Err(Error::InvalidConfig(format!("layer {l} has zero width")));
            }
            if let Some(s) = plan.skip_from {
                if s + 1 >= l {
                    return Err(Error::InvalidConfig(format!("layer {l} skips from {s}, which is not an earlier encoder layer")));
                }
            }
        }
        let res = self.resolutions(self.reference_input)?;
        for (l, plan) in self.layers.iter().enumerate() {
            let input = if l == 0 { self.reference_input } else { res[l - 1] };
            check_modes(plan.modes, input, res[l])?;
        }
        Ok(())
    }

    /// Number of trainable scalars, from the schedule alone.
    pub fn parameter_count(&self) -> usize {
        let mlp = |i: usize, h: usize, o: usize| i * h + h + h * o + o;
        let mut total = mlp(4, self.lift_hidden, self.lifted_width);
        for (l, plan) in self.layers.iter().enumerate() {
            let (ci, co) = (self.input_width(l), plan.width);
            let modes = 8 * plan.modes.iter().product::<usize>();
            total += 2 * ci * co * modes + ci * co + co;
        }
        let last = self.layers.last().map_or(0, |p| p.width);
        total + 3 * mlp(last, self.head_hidden, 1)
    }
}
