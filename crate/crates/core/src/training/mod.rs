//! Seeded Adam training with a growing batch-size schedule.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{ScaledDataset, Split};
use crate::neural::{build_model, draw_noise, save_checkpoint, ModelSpec, ModelState};
use crate::payload::{ensure_dir, write_json};
use crate::{parallel, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Huber,
    HuberPlusKl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPhase {
    /// First epoch (1-based) using `batch_size`.
    pub start_epoch: usize,
    pub batch_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_schedule: Vec<BatchPhase>,
    pub adam_betas: (f64, f64),
    pub adam_epsilon: f64,
    pub seed: u64,
    pub loss: LossKind,
    pub huber_delta: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 250,
            batch_schedule: vec![
                BatchPhase { start_epoch: 1, batch_size: 32 },
                BatchPhase { start_epoch: 100, batch_size: 64 },
                BatchPhase { start_epoch: 200, batch_size: 128 },
            ],
            adam_betas: (0.9, 0.999),
            adam_epsilon: 1e-8,
            seed: 0,
            loss: LossKind::Huber,
            huber_delta: 1.0,
        }
    }
}

impl TrainConfig {
    /// Defaults with the loss matched to the model family.
    pub fn for_spec(spec: &ModelSpec) -> Self {
        TrainConfig {
            loss: if spec.variational {
                LossKind::HuberPlusKl
            } else {
                LossKind::Huber
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        let s = &self.batch_schedule;
        if s.first().map(|p| p.start_epoch) != Some(1) {
            return bad("batch schedule must start at epoch 1".into());
        }
        if s.iter().any(|p| p.batch_size == 0)
            || s.windows(2)
                .any(|w| w[1].start_epoch <= w[0].start_epoch || w[1].batch_size < w[0].batch_size)
        {
            return bad(format!(
                "batch schedule needs strictly increasing epochs and non-decreasing positive sizes: {s:?}"
            ));
        }
        let (b1, b2) = self.adam_betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return bad(format!("adam betas must lie in [0, 1), got {:?}", self.adam_betas));
        }
        if !(self.adam_epsilon > 0.0) || !(self.huber_delta > 0.0) {
            return bad("adam_epsilon and huber_delta must be positive".into());
        }
        Ok(())
    }

    pub fn batch_size(&self, epoch: usize) -> usize {
        self.batch_schedule
            .iter()
            .rev()
            .find(|p| p.start_epoch <= epoch)
            .map_or(self.batch_schedule[0].batch_size, |p| p.batch_size)
    }
}

/// First and second Adam moments plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamMoments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamMoments {
    pub fn new(n: usize) -> Self {
        AdamMoments {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    moments: &mut AdamMoments,
    cfg: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() || moments.m.len() != params.len() {
        return Err(Error::Shape(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            moments.m.len()
        )));
    }
    moments.t += 1;
    let (b1, b2) = cfg.adam_betas;
    let c1 = 1.0 - b1.powf(moments.t as f64);
    let c2 = 1.0 - b2.powf(moments.t as f64);
    for j in 0..params.len() {
        let g = grads[j];
        moments.m[j] = b1 * moments.m[j] + (1.0 - b1) * g;
        moments.v[j] = b2 * moments.v[j] + (1.0 - b2) * g * g;
        let step = cfg.learning_rate * (moments.m[j] / c1) / ((moments.v[j] / c2).sqrt() + cfg.adam_epsilon);
        if !step.is_finite() {
            return Err(Error::NonFinite(format!("adam update of parameter {j}")));
        }
        params[j] -= step;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub batch_size: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
}

impl TrainTrace {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        for e in &self.epochs {
            w.serialize(e).map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

const NOISE_SALT: u64 = 0x5eed_0f_4015e;

/// Noise stream of training sample `index` in `epoch`.
pub fn noise_stream(epoch: usize, index: usize) -> u64 {
    ((epoch as u64) << 32) | index as u64
}

/// Trains on the listed samples only. `samples` indexes into `inputs` and
/// `targets`, which may hold other (e.g. test) series that are never read.
pub fn train_on(
    mut model: ModelState,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    samples: &[usize],
    cfg: &TrainConfig,
) -> Result<(ModelState, TrainTrace)> {
    cfg.validate()?;
    let spec = model.spec().clone();
    if cfg.loss == LossKind::HuberPlusKl && !spec.variational {
        return Err(Error::InvalidConfig(
            "the KL term needs a variational model".into(),
        ));
    }
    if samples.is_empty() {
        return Err(Error::InvalidConfig("no training samples".into()));
    }
    for &i in samples {
        let ok = i < inputs.len()
            && i < targets.len()
            && inputs[i].len() == spec.input_length
            && targets[i].len() == spec.input_length;
        if !ok {
            return Err(Error::Shape(format!(
                "training sample {i} missing or not of length {}",
                spec.input_length
            )));
        }
    }
    let kl_weight = match cfg.loss {
        LossKind::Huber => 0.0,
        LossKind::HuberPlusKl => spec.kl_weight,
    };
    let latent_len = spec.latent_length() * spec.latent_width();
    let noise_seed = cfg.seed ^ NOISE_SALT;

    let mut moments = AdamMoments::new(model.parameter_count());
    let mut order = samples.to_vec();
    let mut trace = TrainTrace::default();
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        let batch_size = cfg.batch_size(epoch);
        let mut weighted = 0.0;
        for (b, chunk) in order.chunks(batch_size).enumerate() {
            let xs: Vec<&[f64]> = chunk.iter().map(|&i| inputs[i].as_slice()).collect();
            let ys: Vec<&[f64]> = chunk.iter().map(|&i| targets[i].as_slice()).collect();
            let noises: Option<Vec<Vec<f64>>> = spec.variational.then(|| {
                parallel::map_slice(chunk, |&i| {
                    draw_noise(noise_seed, noise_stream(epoch, i), latent_len)
                })
            });
            let (loss, mut grad) = model
                .batch_gradient(&xs, &ys, noises.as_deref(), cfg.huber_delta, kl_weight)
                .map_err(|e| match e {
                    Error::NonFinite(_) => Error::Diverged {
                        epoch,
                        batch: b,
                        loss: f64::NAN,
                    },
                    other => other,
                })?;
            if !loss.total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    loss: loss.total,
                });
            }
            let inv = 1.0 / chunk.len() as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
            adam_step(model.params_mut(), &grad, &mut moments, cfg)?;
            weighted += loss.total * chunk.len() as f64;
        }
        trace.epochs.push(EpochRecord {
            epoch,
            loss: weighted / order.len() as f64,
            batch_size,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok((model, trace))
}

/// Trains `model` on the training part of a scaled data set.
pub fn train(
    model: ModelState,
    ds: &ScaledDataset,
    split: &Split,
    cfg: &TrainConfig,
) -> Result<(ModelState, TrainTrace)> {
    train_on(model, &ds.inputs, &ds.outputs, &split.train, cfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub init: u64,
    pub train: u64,
}

/// Per-run seeds drawn from a master seed.
pub fn derive_seeds(master: u64, runs: usize) -> Vec<RunSeeds> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..runs)
        .map(|_| RunSeeds {
            init: rng.next_u64(),
            train: rng.next_u64(),
        })
        .collect()
}

#[derive(Debug)]
pub struct EnsembleRun {
    pub seeds: RunSeeds,
    pub outcome: Result<(ModelState, TrainTrace)>,
}

impl EnsembleRun {
    pub fn model(&self) -> Option<&ModelState> {
        self.outcome.as_ref().ok().map(|(m, _)| m)
    }
}

/// Trains `runs` models that differ only in their seeds. A failing run is
/// kept as an error entry and does not stop the others.
pub fn train_ensemble(
    spec: &ModelSpec,
    ds: &ScaledDataset,
    split: &Split,
    cfg: &TrainConfig,
    runs: usize,
    master_seed: u64,
) -> Result<Vec<EnsembleRun>> {
    if runs == 0 {
        return Err(Error::InvalidConfig("an ensemble needs at least one run".into()));
    }
    spec.validate()?;
    cfg.validate()?;
    let seeds = derive_seeds(master_seed, runs);
    Ok(parallel::map_slice(&seeds, |s| {
        let cfg = TrainConfig {
            seed: s.train,
            ..cfg.clone()
        };
        let outcome = build_model(spec, s.init).and_then(|m| train(m, ds, split, &cfg));
        EnsembleRun {
            seeds: *s,
            outcome,
        }
    }))
}

/// Writes `train_config.json`, `trace.csv` and the checkpoint into `dir`.
pub fn save_run(dir: &Path, model: &ModelState, trace: &TrainTrace, cfg: &TrainConfig) -> Result<()> {
    ensure_dir(dir)?;
    write_json(&dir.join("train_config.json"), cfg)?;
    trace.write_csv(&dir.join("trace.csv"))?;
    save_checkpoint(model, dir)
}
