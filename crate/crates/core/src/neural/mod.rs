//! Causal dilated convolutional autoencoders on float64 with hand-written
//! reverse-mode gradients.
//!
//! Public tensors use the logical layout (batch, time, channels). Internally a
//! single sample is held channel-major (`[channel][time]`) so that every
//! convolution tap is a contiguous axpy over time.

mod checkpoint;
mod layers;
mod loss;
mod model;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use layers::{
    conv1d, conv1d_causal, encoder_block, max_pool, swish, upsample, BlockWeights, ConvWeights,
};
pub use loss::{huber_grad, huber_loss, kl_grad, kl_loss};
pub use model::{
    build_autoencoder, build_cnn_baseline, build_model, draw_noise, Forward, Gradients, LossParts, Mode,
    ModelState, ParamEntry, Recorded,
};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Dense rank-3 tensor stored row-major as (batch, time, channels).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    batch: usize,
    time: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn new(batch: usize, time: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if batch == 0 || time == 0 || channels == 0 {
            return Err(Error::Shape(format!(
                "tensor dimensions must be positive, got ({batch}, {time}, {channels})"
            )));
        }
        if data.len() != batch * time * channels {
            return Err(Error::Shape(format!(
                "{} values cannot fill a ({batch}, {time}, {channels}) tensor",
                data.len()
            )));
        }
        Ok(Tensor3 {
            batch,
            time,
            channels,
            data,
        })
    }

    pub fn zeros(batch: usize, time: usize, channels: usize) -> Result<Self> {
        Self::new(batch, time, channels, vec![0.0; batch * time * channels])
    }

    /// Stacks equal-length series into a (batch, time, 1) tensor.
    pub fn from_series<S: AsRef<[f64]>>(series: &[S]) -> Result<Self> {
        let time = series.first().map_or(0, |s| s.as_ref().len());
        let mut data = Vec::with_capacity(series.len() * time);
        for s in series {
            let s = s.as_ref();
            if s.len() != time {
                return Err(Error::Shape(format!(
                    "series lengths differ ({} vs {time})",
                    s.len()
                )));
            }
            data.extend_from_slice(s);
        }
        Self::new(series.len(), time, 1, data)
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.batch, self.time, self.channels)
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, b: usize, t: usize, c: usize) -> f64 {
        self.data[(b * self.time + t) * self.channels + c]
    }

    /// The (time, channels) block of one batch entry.
    pub fn sample(&self, b: usize) -> &[f64] {
        let n = self.time * self.channels;
        &self.data[b * n..(b + 1) * n]
    }

    pub(crate) fn sample_channel_major(&self, b: usize) -> Vec<f64> {
        to_channel_major(self.sample(b), self.time, self.channels)
    }

    pub(crate) fn from_channel_major(
        samples: &[Vec<f64>],
        time: usize,
        channels: usize,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(samples.len() * time * channels);
        for s in samples {
            data.extend(to_time_major(s, time, channels));
        }
        Self::new(samples.len(), time, channels, data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn to_channel_major(x: &[f64], time: usize, channels: usize) -> Vec<f64> {
    if channels == 1 {
        return x.to_vec();
    }
    let mut out = vec![0.0; x.len()];
    for t in 0..time {
        for c in 0..channels {
            out[c * time + t] = x[t * channels + c];
        }
    }
    out
}

pub(crate) fn to_time_major(x: &[f64], time: usize, channels: usize) -> Vec<f64> {
    if channels == 1 {
        return x.to_vec();
    }
    let mut out = vec![0.0; x.len()];
    for c in 0..channels {
        for t in 0..time {
            out[t * channels + c] = x[c * time + t];
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Three dilated causal convolutions per level.
    Tcn,
    /// One undilated, symmetrically padded convolution per level.
    CnnBaseline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Encoder widths; the last entry is the latent width.
    pub widths: Vec<usize>,
    pub kernel: usize,
    pub dilations: Vec<usize>,
    pub variational: bool,
    pub input_length: usize,
    pub kl_weight: f64,
    pub architecture: Architecture,
}

pub const DEFAULT_KERNEL: usize = 3;
pub const DEFAULT_DILATIONS: [usize; 3] = [2, 4, 8];
pub const DEFAULT_KL_WEIGHT: f64 = 1e-3;

impl ModelSpec {
    pub fn tcn(widths: &[usize], input_length: usize) -> Self {
        ModelSpec {
            widths: widths.to_vec(),
            kernel: DEFAULT_KERNEL,
            dilations: DEFAULT_DILATIONS.to_vec(),
            variational: false,
            input_length,
            kl_weight: DEFAULT_KL_WEIGHT,
            architecture: Architecture::Tcn,
        }
    }

    pub fn vae(widths: &[usize], input_length: usize) -> Self {
        ModelSpec {
            variational: true,
            ..Self::tcn(widths, input_length)
        }
    }

    pub fn cnn_baseline(widths: &[usize], input_length: usize) -> Self {
        ModelSpec {
            dilations: vec![1],
            architecture: Architecture::CnnBaseline,
            ..Self::tcn(widths, input_length)
        }
    }

    /// Parses the dash notation, e.g. `"5-5-3"` or `"(12-12-10-10)"`.
    pub fn parse_widths(text: &str) -> Result<Vec<usize>> {
        let inner = text.trim().trim_start_matches('(').trim_end_matches(')');
        inner
            .split('-')
            .map(|w| {
                w.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidConfig(format!("bad width {w:?} in {text:?}")))
            })
            .collect()
    }

    /// Dash notation of the widths, e.g. `(5-5-3)`.
    pub fn label(&self) -> String {
        let parts: Vec<String> = self.widths.iter().map(|w| w.to_string()).collect();
        format!("({})", parts.join("-"))
    }

    /// Number of encoder levels, each ending in a pooling layer.
    pub fn levels(&self) -> usize {
        self.widths.len().saturating_sub(1)
    }

    pub fn latent_length(&self) -> usize {
        self.input_length >> self.levels()
    }

    pub fn latent_width(&self) -> usize {
        *self.widths.last().unwrap_or(&0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.widths.len() < 2 {
            return bad(format!(
                "need at least one encoder level and a latent width, got {}",
                self.label()
            ));
        }
        if self.widths.contains(&0) {
            return bad(format!("widths must be at least 1, got {}", self.label()));
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return bad(format!("kernel must be odd and positive, got {}", self.kernel));
        }
        if self.dilations.is_empty()
            || self.dilations[0] == 0
            || self.dilations.windows(2).any(|w| w[0] >= w[1])
        {
            return bad(format!(
                "dilations must be positive and strictly increasing, got {:?}",
                self.dilations
            ));
        }
        let depth = 1usize << self.levels();
        if self.input_length == 0 || self.input_length % depth != 0 {
            return bad(format!(
                "input length {} is not divisible by 2^{} for spec {}",
                self.input_length,
                self.levels(),
                self.label()
            ));
        }
        if !(self.kl_weight.is_finite() && self.kl_weight >= 0.0) {
            return bad(format!("kl_weight must be finite and non-negative, got {}", self.kl_weight));
        }
        Ok(())
    }
}

/// Bottleneck statistics of a batch, each with shape (batch, latent time,
/// latent width).
#[derive(Clone, Debug, PartialEq)]
pub struct LatentSample {
    pub mean: Tensor3,
    pub log_variance: Tensor3,
    pub draw: Tensor3,
    pub noise: Tensor3,
}
