//! Autoencoder graphs, their forward pass and reverse-mode gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::layers::{
    conv_backward, conv_forward, init_uniform, pool_backward, pool_forward, swish_backward,
    swish_forward, upsample_backward, upsample_forward, ConvGeom,
};
use super::loss::{huber_slope, huber_term, kl_sum};
use super::{to_channel_major, Architecture, LatentSample, ModelSpec, Tensor3};
use crate::{parallel, Error, Result};

/// One named parameter tensor; `offset` counts elements into the flat store.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug)]
struct ConvLayer {
    geom: ConvGeom,
    /// Offset of the weights; the bias follows immediately.
    w: usize,
}

impl ConvLayer {
    fn b(&self) -> usize {
        self.w + self.geom.weight_len()
    }

    fn forward(&self, params: &[f64], x: &[f64], len: usize) -> Vec<f64> {
        let wl = self.geom.weight_len();
        conv_forward(
            &self.geom,
            &params[self.w..self.w + wl],
            &params[self.b()..self.b() + self.geom.cout],
            x,
            len,
        )
    }

    fn backward(&self, params: &[f64], x: &[f64], dy: &[f64], len: usize, grad: &mut [f64]) -> Vec<f64> {
        let wl = self.geom.weight_len();
        let (dw, rest) = grad[self.w..].split_at_mut(wl);
        conv_backward(
            &self.geom,
            &params[self.w..self.w + wl],
            x,
            dy,
            len,
            dw,
            &mut rest[..self.geom.cout],
        )
    }
}

#[derive(Clone, Debug)]
enum Op {
    Conv(ConvLayer),
    Swish,
    Pool,
    Upsample { causal: bool },
    /// Deterministic bottleneck projection.
    Latent(ConvLayer),
    /// Mean and log-variance heads followed by reparameterised sampling.
    Sample { mean: ConvLayer, log_var: ConvLayer },
}

#[derive(Clone, Debug)]
struct Node {
    name: String,
    op: Op,
}

struct Builder {
    entries: Vec<ParamEntry>,
    fan_in: Vec<usize>,
    nodes: Vec<Node>,
    size: usize,
}

impl Builder {
    fn conv_layer(&mut self, name: &str, geom: ConvGeom) -> ConvLayer {
        let w = self.size;
        self.entries.push(ParamEntry {
            name: format!("{name}.weight"),
            shape: vec![geom.cout, geom.cin, geom.kernel],
            offset: w,
        });
        self.fan_in.push(geom.fan_in());
        self.entries.push(ParamEntry {
            name: format!("{name}.bias"),
            shape: vec![geom.cout],
            offset: w + geom.weight_len(),
        });
        self.fan_in.push(0);
        self.size += geom.weight_len() + geom.cout;
        ConvLayer { geom, w }
    }

    fn push(&mut self, name: String, op: Op) {
        self.nodes.push(Node { name, op });
    }

    fn conv(&mut self, name: String, geom: ConvGeom) {
        let layer = self.conv_layer(&name, geom);
        self.push(name, Op::Conv(layer));
    }

    /// Convolutions of one level, each followed by swish; returns the width.
    fn level(&mut self, spec: &ModelSpec, prefix: &str, mut cin: usize, width: usize) -> usize {
        match spec.architecture {
            Architecture::Tcn => {
                for (j, &d) in spec.dilations.iter().enumerate() {
                    let name = format!("{prefix}.conv{}", j + 1);
                    self.conv(name.clone(), ConvGeom::causal(cin, width, spec.kernel, d));
                    self.push(format!("{name}.swish"), Op::Swish);
                    cin = width;
                }
            }
            Architecture::CnnBaseline => {
                let name = format!("{prefix}.conv1");
                self.conv(name.clone(), ConvGeom::symmetric(cin, width, spec.kernel));
                self.push(format!("{name}.swish"), Op::Swish);
            }
        }
        width
    }
}

fn plan(spec: &ModelSpec) -> Result<Builder> {
    spec.validate()?;
    let mut b = Builder {
        entries: Vec::new(),
        fan_in: Vec::new(),
        nodes: Vec::new(),
        size: 0,
    };
    let levels = spec.levels();
    let latent = spec.latent_width();
    let causal = spec.architecture == Architecture::Tcn;

    let mut c = 1;
    for (l, &w) in spec.widths[..levels].iter().enumerate() {
        let prefix = format!("enc{}", l + 1);
        c = b.level(spec, &prefix, c, w);
        b.push(format!("{prefix}.pool"), Op::Pool);
    }

    let point = |cin, cout| ConvGeom::causal(cin, cout, 1, 1);
    if spec.variational {
        let mean = b.conv_layer("latent.mean", point(c, latent));
        let log_var = b.conv_layer("latent.log_var", point(c, latent));
        b.push("latent.sample".into(), Op::Sample { mean, log_var });
    } else {
        let proj = b.conv_layer("latent.proj", point(c, latent));
        b.push("latent.proj".into(), Op::Latent(proj));
    }

    c = spec.widths[levels - 1];
    b.conv("dec.proj".into(), point(latent, c));
    for level in (1..=levels).rev() {
        let prefix = format!("dec{level}");
        b.push(format!("{prefix}.up"), Op::Upsample { causal });
        c = b.level(spec, &prefix, c, spec.widths[level - 1]);
    }
    b.conv("output".into(), point(c, 1));
    Ok(b)
}

/// Parameters plus the graph they feed.
#[derive(Clone, Debug)]
pub struct ModelState {
    spec: ModelSpec,
    init_seed: u64,
    entries: Vec<ParamEntry>,
    params: Vec<f64>,
    nodes: Vec<Node>,
}

impl PartialEq for ModelState {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.init_seed == other.init_seed
            && self.entries == other.entries
            && self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Builds the model named by `spec.architecture`.
pub fn build_model(spec: &ModelSpec, seed: u64) -> Result<ModelState> {
    let b = plan(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = vec![0.0; b.size];
    for (e, &fan_in) in b.entries.iter().zip(&b.fan_in) {
        if fan_in > 0 {
            init_uniform(&mut rng, fan_in, &mut params[e.offset..e.offset + e.len()]);
        }
    }
    Ok(ModelState {
        spec: spec.clone(),
        init_seed: seed,
        entries: b.entries,
        params,
        nodes: b.nodes,
    })
}

/// Causal dilated autoencoder (plain or variational per `spec.variational`).
pub fn build_autoencoder(spec: &ModelSpec, seed: u64) -> Result<ModelState> {
    if spec.architecture != Architecture::Tcn {
        return Err(Error::InvalidConfig(
            "build_autoencoder expects a TCN spec".into(),
        ));
    }
    build_model(spec, seed)
}

/// Same skeleton with one symmetric, undilated convolution per level.
pub fn build_cnn_baseline(spec: &ModelSpec, seed: u64) -> Result<ModelState> {
    let spec = ModelSpec {
        architecture: Architecture::CnnBaseline,
        ..spec.clone()
    };
    build_model(&spec, seed)
}

/// Standard normal noise from stream `stream` of `seed`.
pub fn draw_noise(seed: u64, stream: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}

#[derive(Clone, Copy, Debug)]
pub enum Mode<'a> {
    /// Deterministic; a variational bottleneck emits its mean.
    Infer,
    /// Variational bottlenecks draw `mean + exp(½ log_var) · noise`, with
    /// noise shaped (batch, latent time, latent width). Ignored by plain models.
    Train { noise: &'a Tensor3 },
}

pub struct Forward {
    pub output: Tensor3,
    /// Present for variational models.
    pub latent: Option<LatentSample>,
}

enum Saved {
    Nothing,
    Sigmoid(Vec<f64>),
    Pool(Vec<bool>),
    Sample {
        mean: Vec<f64>,
        log_var: Vec<f64>,
        noise: Vec<f64>,
        sigma: Vec<f64>,
    },
}

struct Step {
    input: Vec<f64>,
    channels: usize,
    len: usize,
    saved: Saved,
}

/// Channel-major bottleneck values of one sample.
struct SampleLatent {
    mean: Vec<f64>,
    log_var: Vec<f64>,
    draw: Vec<f64>,
    noise: Vec<f64>,
}

pub(crate) struct SampleTape {
    steps: Vec<Step>,
    output: Vec<f64>,
    latent: SampleLatent,
}

/// Forward pass with every intermediate kept for [`ModelState::backward`].
pub struct Recorded {
    tapes: Vec<SampleTape>,
    pub output: Tensor3,
    pub latent: Option<LatentSample>,
}

pub struct Gradients {
    /// Flat gradient aligned with [`ModelState::params`].
    pub params: Vec<f64>,
    /// Gradient with respect to the input tensor.
    pub input: Tensor3,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub huber: f64,
    pub kl: f64,
    pub total: f64,
}

impl ModelState {
    /// Rebuilds a model from stored parameters.
    pub fn from_parts(spec: &ModelSpec, init_seed: u64, params: Vec<f64>) -> Result<Self> {
        let b = plan(spec)?;
        if params.len() != b.size {
            return Err(Error::Shape(format!(
                "{} parameters supplied, spec {} needs {}",
                params.len(),
                spec.label(),
                b.size
            )));
        }
        Ok(ModelState {
            spec: spec.clone(),
            init_seed,
            entries: b.entries,
            params,
            nodes: b.nodes,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Names of the layers in execution order.
    pub fn layer_names(&self) -> Vec<&str> {
        self.nodes.iter().map(|n| n.name.as_str()).collect()
    }

    fn check_input(&self, x: &Tensor3) -> Result<()> {
        if x.time() != self.spec.input_length || x.channels() != 1 {
            return Err(Error::Shape(format!(
                "model {} expects (batch, {}, 1), got {:?}",
                self.spec.label(),
                self.spec.input_length,
                x.shape()
            )));
        }
        Ok(())
    }

    fn batch_noise(&self, x: &Tensor3, mode: Mode<'_>) -> Result<Option<Vec<Vec<f64>>>> {
        match mode {
            Mode::Train { noise } if self.spec.variational => {
                let want = (x.batch(), self.spec.latent_length(), self.spec.latent_width());
                if noise.shape() != want {
                    return Err(Error::Shape(format!(
                        "noise {:?} does not match latent {want:?}",
                        noise.shape()
                    )));
                }
                Ok(Some(
                    (0..x.batch())
                        .map(|b| noise.sample_channel_major(b))
                        .collect(),
                ))
            }
            _ => Ok(None),
        }
    }

    /// Runs one channel-major sample; `noise` is channel-major too.
    pub(crate) fn run_sample(&self, x: &[f64], noise: Option<&[f64]>, record: bool) -> Result<SampleTape> {
        let p = &self.params;
        let mut h = x.to_vec();
        let mut c = 1;
        let mut len = self.spec.input_length;
        let mut steps = Vec::with_capacity(if record { self.nodes.len() } else { 0 });
        let mut latent = None;
        for node in &self.nodes {
            let (next, nc, nlen, saved) = match &node.op {
                Op::Conv(l) => (l.forward(p, &h, len), l.geom.cout, len, Saved::Nothing),
                Op::Swish => {
                    let (y, s) = swish_forward(&h);
                    (y, c, len, if record { Saved::Sigmoid(s) } else { Saved::Nothing })
                }
                Op::Pool => {
                    let (y, later) = pool_forward(&h, c, len);
                    (y, c, len / 2, Saved::Pool(later))
                }
                Op::Upsample { causal } => {
                    (upsample_forward(&h, c, len, *causal), c, 2 * len, Saved::Nothing)
                }
                Op::Latent(l) => {
                    let z = l.forward(p, &h, len);
                    latent = Some(SampleLatent {
                        mean: z.clone(),
                        log_var: vec![0.0; z.len()],
                        draw: z.clone(),
                        noise: vec![0.0; z.len()],
                    });
                    (z, l.geom.cout, len, Saved::Nothing)
                }
                Op::Sample { mean, log_var } => {
                    let mu = mean.forward(p, &h, len);
                    let lv = log_var.forward(p, &h, len);
                    let eps = noise.map_or_else(|| vec![0.0; mu.len()], <[f64]>::to_vec);
                    let sigma: Vec<f64> = lv.iter().map(|v| (0.5 * v).exp()).collect();
                    let z: Vec<f64> = mu
                        .iter()
                        .zip(sigma.iter().zip(&eps))
                        .map(|(m, (s, e))| m + s * e)
                        .collect();
                    latent = Some(SampleLatent {
                        mean: mu.clone(),
                        log_var: lv.clone(),
                        draw: z.clone(),
                        noise: eps.clone(),
                    });
                    let saved = Saved::Sample {
                        mean: mu,
                        log_var: lv,
                        noise: eps,
                        sigma,
                    };
                    (z, mean.geom.cout, len, saved)
                }
            };
            if !next.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("activation of layer {}", node.name)));
            }
            if record {
                steps.push(Step {
                    input: std::mem::replace(&mut h, next),
                    channels: c,
                    len,
                    saved,
                });
            } else {
                h = next;
            }
            c = nc;
            len = nlen;
        }
        Ok(SampleTape {
            steps,
            output: h,
            latent: latent.expect("every graph has a bottleneck"),
        })
    }

    /// Accumulates parameter gradients of one sample into `grad` and returns
    /// the input gradient. `kl_scale` multiplies the sample's KL sum.
    pub(crate) fn backward_sample(
        &self,
        tape: &SampleTape,
        d_output: &[f64],
        kl_scale: f64,
        grad: &mut [f64],
    ) -> Vec<f64> {
        let p = &self.params;
        let mut d = d_output.to_vec();
        for (node, step) in self.nodes.iter().zip(&tape.steps).rev() {
            d = match (&node.op, &step.saved) {
                (Op::Conv(l) | Op::Latent(l), _) => l.backward(p, &step.input, &d, step.len, grad),
                (Op::Swish, Saved::Sigmoid(s)) => swish_backward(&step.input, s, &d),
                (Op::Pool, Saved::Pool(later)) => pool_backward(later, &d, step.channels, step.len),
                (Op::Upsample { causal }, _) => {
                    upsample_backward(&d, step.channels, step.len, *causal)
                }
                (
                    Op::Sample { mean, log_var },
                    Saved::Sample {
                        mean: mu,
                        log_var: lv,
                        noise,
                        sigma,
                    },
                ) => {
                    let dmu: Vec<f64> = d.iter().zip(mu).map(|(g, m)| g + kl_scale * m).collect();
                    let dlv: Vec<f64> = d
                        .iter()
                        .zip(lv)
                        .zip(sigma.iter().zip(noise))
                        .map(|((g, l), (s, e))| g * 0.5 * s * e + kl_scale * 0.5 * (l.exp() - 1.0))
                        .collect();
                    let mut dx = mean.backward(p, &step.input, &dmu, step.len, grad);
                    let dx2 = log_var.backward(p, &step.input, &dlv, step.len, grad);
                    for (a, b) in dx.iter_mut().zip(dx2) {
                        *a += b;
                    }
                    dx
                }
                _ => unreachable!("tape does not match graph"),
            };
        }
        d
    }

    fn check_gradient(&self, grad: &[f64]) -> Result<()> {
        for e in &self.entries {
            if !grad[e.offset..e.offset + e.len()].iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {}", e.name)));
            }
        }
        Ok(())
    }

    fn run_batch(&self, x: &Tensor3, mode: Mode<'_>, record: bool) -> Result<Vec<SampleTape>> {
        self.check_input(x)?;
        let noise = self.batch_noise(x, mode)?;
        parallel::try_map_indexed(x.batch(), |b| {
            self.run_sample(
                x.sample(b),
                noise.as_ref().map(|n| n[b].as_slice()),
                record,
            )
        })
    }

    fn assemble(&self, tapes: &[SampleTape]) -> Result<(Tensor3, Option<LatentSample>)> {
        let t = self.spec.input_length;
        let outs: Vec<Vec<f64>> = tapes.iter().map(|tp| tp.output.clone()).collect();
        let output = Tensor3::from_channel_major(&outs, t, 1)?;
        let latent = if self.spec.variational {
            let (lt, lw) = (self.spec.latent_length(), self.spec.latent_width());
            let pick = |f: fn(&SampleLatent) -> &Vec<f64>| {
                let v: Vec<Vec<f64>> = tapes.iter().map(|tp| f(&tp.latent).clone()).collect();
                Tensor3::from_channel_major(&v, lt, lw)
            };
            Some(LatentSample {
                mean: pick(|l| &l.mean)?,
                log_variance: pick(|l| &l.log_var)?,
                draw: pick(|l| &l.draw)?,
                noise: pick(|l| &l.noise)?,
            })
        } else {
            None
        };
        Ok((output, latent))
    }

    pub fn forward(&self, x: &Tensor3, mode: Mode<'_>) -> Result<Forward> {
        let tapes = self.run_batch(x, mode, false)?;
        let (output, latent) = self.assemble(&tapes)?;
        Ok(Forward { output, latent })
    }

    /// Bottleneck activations (the mean for variational models) with shape
    /// (batch, latent time, latent width).
    pub fn encode(&self, x: &Tensor3) -> Result<Tensor3> {
        let tapes = self.run_batch(x, Mode::Infer, false)?;
        let v: Vec<Vec<f64>> = tapes.into_iter().map(|tp| tp.latent.mean).collect();
        Tensor3::from_channel_major(&v, self.spec.latent_length(), self.spec.latent_width())
    }

    pub fn record(&self, x: &Tensor3, mode: Mode<'_>) -> Result<Recorded> {
        let tapes = self.run_batch(x, mode, true)?;
        let (output, latent) = self.assemble(&tapes)?;
        Ok(Recorded {
            tapes,
            output,
            latent,
        })
    }

    /// Reverse pass for the loss `⟨d_output, output⟩ + kl_weight · KL`, where KL
    /// is the batch-mean divergence of a variational bottleneck.
    pub fn backward(&self, rec: &Recorded, d_output: &Tensor3, kl_weight: f64) -> Result<Gradients> {
        if d_output.shape() != rec.output.shape() {
            return Err(Error::Shape(format!(
                "output gradient {:?} vs output {:?}",
                d_output.shape(),
                rec.output.shape()
            )));
        }
        let kl_scale = if self.spec.variational {
            kl_weight / rec.tapes.len() as f64
        } else {
            0.0
        };
        let parts = parallel::map_indexed(rec.tapes.len(), |b| {
            let mut g = vec![0.0; self.params.len()];
            let dx = self.backward_sample(&rec.tapes[b], d_output.sample(b), kl_scale, &mut g);
            (g, dx)
        });
        let mut params = vec![0.0; self.params.len()];
        let mut inputs = Vec::with_capacity(parts.len());
        for (g, dx) in parts {
            for (a, b) in params.iter_mut().zip(&g) {
                *a += b;
            }
            inputs.push(dx);
        }
        self.check_gradient(&params)?;
        let input = Tensor3::from_channel_major(&inputs, self.spec.input_length, 1)?;
        Ok(Gradients { params, input })
    }

    /// Huber (+ β·KL for variational models) loss and its gradient.
    pub fn loss_and_gradient(
        &self,
        x: &Tensor3,
        y: &Tensor3,
        mode: Mode<'_>,
        huber_delta: f64,
    ) -> Result<(LossParts, Gradients)> {
        if y.shape() != (x.batch(), self.spec.input_length, 1) {
            return Err(Error::Shape(format!("target shape {:?}", y.shape())));
        }
        let rec = self.record(x, mode)?;
        let (huber, dy) = super::huber_grad(&rec.output, y, huber_delta)?;
        let kl = rec.latent.as_ref().map_or(0.0, super::kl_loss);
        let beta = if self.spec.variational { self.spec.kl_weight } else { 0.0 };
        let grads = self.backward(&rec, &dy, beta)?;
        Ok((
            LossParts {
                huber,
                kl,
                total: huber + beta * kl,
            },
            grads,
        ))
    }

    /// Loss and summed parameter gradient over a batch of single-channel
    /// series, with optional per-sample time-major noise; β·KL is added for
    /// variational models. Per-sample work may run in parallel and the
    /// reduction is in batch order.
    pub(crate) fn batch_gradient(
        &self,
        inputs: &[&[f64]],
        targets: &[&[f64]],
        noises: Option<&[Vec<f64>]>,
        huber_delta: f64,
        kl_weight: f64,
    ) -> Result<(LossParts, Vec<f64>)> {
        let batch = inputs.len();
        let t = self.spec.input_length;
        let inv = 1.0 / (batch * t) as f64;
        let beta = if self.spec.variational { kl_weight } else { 0.0 };
        let kl_scale = beta / batch as f64;
        let (lt, lw) = (self.spec.latent_length(), self.spec.latent_width());
        let parts = parallel::try_map_indexed(batch, |b| -> Result<_> {
            let noise = noises.map(|n| to_channel_major(&n[b], lt, lw));
            let tape = self.run_sample(inputs[b], noise.as_deref(), true)?;
            let mut hsum = 0.0;
            let dy: Vec<f64> = tape
                .output
                .iter()
                .zip(targets[b])
                .map(|(p, y)| {
                    hsum += huber_term(p - y, huber_delta);
                    inv * huber_slope(p - y, huber_delta)
                })
                .collect();
            let kl = if self.spec.variational {
                kl_sum(&tape.latent.mean, &tape.latent.log_var)
            } else {
                0.0
            };
            let mut g = vec![0.0; self.params.len()];
            self.backward_sample(&tape, &dy, kl_scale, &mut g);
            Ok((hsum, kl, g))
        })?;
        let mut grad = vec![0.0; self.params.len()];
        let (mut hsum, mut ksum) = (0.0, 0.0);
        for (h, k, g) in parts {
            hsum += h;
            ksum += k;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        self.check_gradient(&grad)?;
        let huber = hsum * inv;
        let kl = ksum / batch as f64;
        Ok((
            LossParts {
                huber,
                kl,
                total: huber + beta * kl,
            },
            grad,
        ))
    }

    /// Infer-mode predictions for single-channel series, in order.
    pub fn predict_series(&self, inputs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        for s in inputs {
            if s.len() != self.spec.input_length {
                return Err(Error::Shape(format!(
                    "series of length {} for model input length {}",
                    s.len(),
                    self.spec.input_length
                )));
            }
        }
        parallel::try_map_indexed(inputs.len(), |b| {
            self.run_sample(inputs[b], None, false).map(|tp| tp.output)
        })
    }
}
