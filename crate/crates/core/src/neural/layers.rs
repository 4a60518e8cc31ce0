//! Layer kernels on channel-major single samples, plus tensor-level wrappers.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Architecture, ModelSpec, Tensor3};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub pad_left: usize,
}

impl ConvGeom {
    pub fn causal(cin: usize, cout: usize, kernel: usize, dilation: usize) -> Self {
        ConvGeom {
            cin,
            cout,
            kernel,
            dilation,
            pad_left: dilation * (kernel - 1),
        }
    }

    pub fn symmetric(cin: usize, cout: usize, kernel: usize) -> Self {
        ConvGeom {
            cin,
            cout,
            kernel,
            dilation: 1,
            pad_left: (kernel - 1) / 2,
        }
    }

    pub fn weight_len(&self) -> usize {
        self.cout * self.cin * self.kernel
    }

    pub fn fan_in(&self) -> usize {
        self.cin * self.kernel
    }

    /// Output range `t0..t1` whose tap `k` reads inside the input, and the
    /// signed input offset of that tap.
    #[inline]
    fn tap(&self, k: usize, len: usize) -> (usize, usize, isize) {
        let off = (k * self.dilation) as isize - self.pad_left as isize;
        let t0 = (-off).max(0) as usize;
        let t1 = (len as isize - off).clamp(0, len as isize) as usize;
        (t0, t1.max(t0), off)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

pub(crate) fn conv_forward(g: &ConvGeom, w: &[f64], b: &[f64], x: &[f64], len: usize) -> Vec<f64> {
    let mut y = vec![0.0; g.cout * len];
    for o in 0..g.cout {
        let yo = &mut y[o * len..(o + 1) * len];
        yo.fill(b[o]);
        for i in 0..g.cin {
            let xi = &x[i * len..(i + 1) * len];
            for k in 0..g.kernel {
                let (t0, t1, off) = g.tap(k, len);
                if t0 == t1 {
                    continue;
                }
                let s0 = (t0 as isize + off) as usize;
                let wv = w[(o * g.cin + i) * g.kernel + k];
                axpy(wv, &xi[s0..s0 + (t1 - t0)], &mut yo[t0..t1]);
            }
        }
    }
    y
}

/// Accumulates parameter gradients into `dw`, `db` and returns dL/dx.
pub(crate) fn conv_backward(
    g: &ConvGeom,
    w: &[f64],
    x: &[f64],
    dy: &[f64],
    len: usize,
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let mut dx = vec![0.0; g.cin * len];
    for o in 0..g.cout {
        let dyo = &dy[o * len..(o + 1) * len];
        db[o] += dyo.iter().sum::<f64>();
        for i in 0..g.cin {
            let xi = &x[i * len..(i + 1) * len];
            let dxi = &mut dx[i * len..(i + 1) * len];
            for k in 0..g.kernel {
                let (t0, t1, off) = g.tap(k, len);
                if t0 == t1 {
                    continue;
                }
                let s0 = (t0 as isize + off) as usize;
                let n = t1 - t0;
                let widx = (o * g.cin + i) * g.kernel + k;
                dw[widx] += dot(&xi[s0..s0 + n], &dyo[t0..t1]);
                axpy(w[widx], &dyo[t0..t1], &mut dxi[s0..s0 + n]);
            }
        }
    }
    dx
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Returns (swish(x), σ(x)).
pub(crate) fn swish_forward(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let s: Vec<f64> = x.iter().map(|&v| sigmoid(v)).collect();
    let y = x.iter().zip(&s).map(|(v, s)| v * s).collect();
    (y, s)
}

pub(crate) fn swish_backward(x: &[f64], s: &[f64], dy: &[f64]) -> Vec<f64> {
    dy.iter()
        .zip(x.iter().zip(s))
        .map(|(d, (x, s))| d * (s + x * s * (1.0 - s)))
        .collect()
}

/// Window-2, stride-2 max pool per channel. The second output records whether
/// the later element of each window won (ties go to the earlier one).
pub(crate) fn pool_forward(x: &[f64], channels: usize, len: usize) -> (Vec<f64>, Vec<bool>) {
    let half = len / 2;
    let mut y = Vec::with_capacity(channels * half);
    let mut later = Vec::with_capacity(channels * half);
    for c in 0..channels {
        let xc = &x[c * len..(c + 1) * len];
        for pair in xc.chunks_exact(2) {
            let second = pair[1] > pair[0];
            later.push(second);
            y.push(if second { pair[1] } else { pair[0] });
        }
    }
    (y, later)
}

pub(crate) fn pool_backward(later: &[bool], dy: &[f64], channels: usize, len: usize) -> Vec<f64> {
    let half = len / 2;
    let mut dx = vec![0.0; channels * len];
    for c in 0..channels {
        for s in 0..half {
            let j = c * half + s;
            dx[c * len + 2 * s + usize::from(later[j])] = dy[j];
        }
    }
    dx
}

/// Doubles the time axis. The causal variant delays by one step,
/// y[0] = 0 and y[2s+1] = y[2s+2] = x[s], so that an output never sees a
/// pooled value whose window extends past it.
pub(crate) fn upsample_forward(x: &[f64], channels: usize, len: usize, causal: bool) -> Vec<f64> {
    let out = 2 * len;
    let mut y = vec![0.0; channels * out];
    for c in 0..channels {
        let yc = &mut y[c * out..(c + 1) * out];
        for (s, &v) in x[c * len..(c + 1) * len].iter().enumerate() {
            if causal {
                yc[2 * s + 1] = v;
                if 2 * s + 2 < out {
                    yc[2 * s + 2] = v;
                }
            } else {
                yc[2 * s] = v;
                yc[2 * s + 1] = v;
            }
        }
    }
    y
}

pub(crate) fn upsample_backward(dy: &[f64], channels: usize, len: usize, causal: bool) -> Vec<f64> {
    let out = 2 * len;
    let mut dx = vec![0.0; channels * len];
    for c in 0..channels {
        let dyc = &dy[c * out..(c + 1) * out];
        for s in 0..len {
            dx[c * len + s] = if causal {
                dyc[2 * s + 1] + if 2 * s + 2 < out { dyc[2 * s + 2] } else { 0.0 }
            } else {
                dyc[2 * s] + dyc[2 * s + 1]
            };
        }
    }
    dx
}

/// Scaled uniform fan-in initialisation: U(−√(3/fan_in), √(3/fan_in)).
pub(crate) fn init_uniform(rng: &mut ChaCha8Rng, fan_in: usize, out: &mut [f64]) {
    let limit = (3.0 / fan_in as f64).sqrt();
    for v in out {
        *v = rng.random_range(-limit..limit);
    }
}

/// Weights of one convolution with shape (out, in, kernel) plus one bias per
/// output channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvWeights {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvWeights {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        ConvWeights {
            in_channels,
            out_channels,
            kernel,
            weights: vec![0.0; out_channels * in_channels * kernel],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn random(in_channels: usize, out_channels: usize, kernel: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut w = Self::zeros(in_channels, out_channels, kernel);
        init_uniform(rng, in_channels * kernel, &mut w.weights);
        w
    }

    pub fn get(&self, o: usize, i: usize, k: usize) -> f64 {
        self.weights[(o * self.in_channels + i) * self.kernel + k]
    }

    pub fn set(&mut self, o: usize, i: usize, k: usize, v: f64) {
        self.weights[(o * self.in_channels + i) * self.kernel + k] = v;
    }

    fn check(&self, x: &Tensor3) -> Result<()> {
        if self.kernel == 0
            || x.channels() != self.in_channels
            || self.weights.len() != self.out_channels * self.in_channels * self.kernel
            || self.bias.len() != self.out_channels
        {
            return Err(Error::Shape(format!(
                "convolution {}→{} (kernel {}) applied to {} channels",
                self.in_channels,
                self.out_channels,
                self.kernel,
                x.channels()
            )));
        }
        Ok(())
    }
}

fn map_samples(
    x: &Tensor3,
    out_time: usize,
    out_channels: usize,
    f: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<Tensor3> {
    let outs: Vec<Vec<f64>> = (0..x.batch())
        .map(|b| f(&x.sample_channel_major(b)))
        .collect();
    Tensor3::from_channel_major(&outs, out_time, out_channels)
}

fn conv_with(x: &Tensor3, w: &ConvWeights, g: ConvGeom) -> Result<Tensor3> {
    w.check(x)?;
    let len = x.time();
    map_samples(x, len, g.cout, |s| conv_forward(&g, &w.weights, &w.bias, s, len))
}

/// Zero-left-padded causal convolution: output t reads inputs
/// t − d(K−1), …, t − d, t.
pub fn conv1d_causal(x: &Tensor3, w: &ConvWeights, dilation: usize) -> Result<Tensor3> {
    if dilation == 0 {
        return Err(Error::Shape("dilation must be at least 1".into()));
    }
    conv_with(
        x,
        w,
        ConvGeom::causal(w.in_channels, w.out_channels, w.kernel, dilation),
    )
}

/// Undilated convolution with symmetric zero padding (odd kernels).
pub fn conv1d(x: &Tensor3, w: &ConvWeights) -> Result<Tensor3> {
    if w.kernel % 2 == 0 {
        return Err(Error::Shape("symmetric padding needs an odd kernel".into()));
    }
    conv_with(x, w, ConvGeom::symmetric(w.in_channels, w.out_channels, w.kernel))
}

pub fn swish(x: &Tensor3) -> Result<Tensor3> {
    let (b, t, c) = x.shape();
    Tensor3::new(b, t, c, swish_forward(x.data()).0)
}

pub fn max_pool(x: &Tensor3) -> Result<Tensor3> {
    let (_, t, c) = x.shape();
    if t % 2 != 0 {
        return Err(Error::Shape(format!("cannot pool odd time length {t}")));
    }
    map_samples(x, t / 2, c, |s| pool_forward(s, c, t).0)
}

pub fn upsample(x: &Tensor3, causal: bool) -> Result<Tensor3> {
    let (_, t, c) = x.shape();
    map_samples(x, 2 * t, c, |s| upsample_forward(s, c, t, causal))
}

/// The convolutions of one encoder level.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockWeights {
    pub convs: Vec<ConvWeights>,
}

impl BlockWeights {
    pub fn random(in_channels: usize, width: usize, spec: &ModelSpec, rng: &mut ChaCha8Rng) -> Self {
        let count = match spec.architecture {
            Architecture::Tcn => spec.dilations.len(),
            Architecture::CnnBaseline => 1,
        };
        let convs = (0..count)
            .map(|j| {
                let cin = if j == 0 { in_channels } else { width };
                ConvWeights::random(cin, width, spec.kernel, rng)
            })
            .collect();
        BlockWeights { convs }
    }
}

/// One encoder level: convolutions with swish after each, then max-pool.
pub fn encoder_block(x: &Tensor3, block: &BlockWeights, spec: &ModelSpec) -> Result<Tensor3> {
    if x.time() % 2 != 0 {
        return Err(Error::Shape(format!(
            "encoder level needs an even time length, got {}",
            x.time()
        )));
    }
    let mut h = x.clone();
    for (j, w) in block.convs.iter().enumerate() {
        h = match spec.architecture {
            Architecture::Tcn => conv1d_causal(&h, w, spec.dilations[j])?,
            Architecture::CnnBaseline => conv1d(&h, w)?,
        };
        h = swish(&h)?;
    }
    max_pool(&h)
}
