//! Time propagation of i dψ/dt = H(t) ψ with
//! H(t) = H_zz + H_z − ½ (h1 + h(t)) Σ σ_x(n).
//!
//! The σ_x part is a product of single-site rotations and the rest is
//! diagonal in the computational basis, so both exponentials are applied
//! exactly. They are combined with a Strang splitting in which time advances
//! with the diagonal flow and the drive is frozen at the stage midpoint, and
//! the Strang step is lifted to fourth order by Suzuki's five-stage symmetric
//! composition. Every factor is unitary, so the norm is conserved up to
//! rounding.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{static_diagonal, x_magnetization, QuantumState, SpinChainConfig, TimeGrid};
use crate::dataset::{PulseSeries, ResponseSeries};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Drive {
    /// h(t) = amplitude · sin(omega · t), evaluated analytically.
    Sinusoid { amplitude: f64, omega: f64 },
    /// Samples `values[i]` at times `t0 + i·dt`, linearly interpolated and held
    /// constant outside the sampled range.
    Sampled { t0: f64, dt: f64, values: Vec<f64> },
    Constant(f64),
}

impl Drive {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            Drive::Sinusoid { amplitude, omega } => amplitude * (omega * t).sin(),
            Drive::Constant(c) => *c,
            Drive::Sampled { t0, dt, values } => {
                let x = (t - t0) / dt;
                if x <= 0.0 {
                    return values[0];
                }
                let i = x.floor() as usize;
                if i + 1 >= values.len() {
                    return values[values.len() - 1];
                }
                let frac = x - i as f64;
                values[i] * (1.0 - frac) + values[i + 1] * frac
            }
        }
    }

    /// Upper bound of |h(t)|.
    pub fn peak(&self) -> f64 {
        match self {
            Drive::Sinusoid { amplitude, .. } => amplitude.abs(),
            Drive::Constant(c) => c.abs(),
            Drive::Sampled { values, .. } => values.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Drive::Sinusoid { amplitude, omega } => amplitude.is_finite() && omega.is_finite(),
            Drive::Constant(c) => c.is_finite(),
            Drive::Sampled { t0, dt, values } => {
                !values.is_empty()
                    && t0.is_finite()
                    && *dt > 0.0
                    && values.iter().all(|v| v.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid drive {self:?}")))
        }
    }
}

impl From<&PulseSeries> for Drive {
    fn from(p: &PulseSeries) -> Self {
        Drive::Sinusoid {
            amplitude: p.amplitude,
            omega: p.omega,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagatorOptions {
    /// Largest local phase (energy scale × substep) accumulated per substep.
    pub max_substep_phase: f64,
    /// Allowed |‖ψ(T)‖ − 1|.
    pub norm_tolerance: f64,
    /// Lower bound on substeps per output interval.
    pub min_substeps: usize,
}

impl Default for PropagatorOptions {
    fn default() -> Self {
        PropagatorOptions {
            max_substep_phase: 0.05,
            norm_tolerance: 1e-6,
            min_substeps: 4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Propagation {
    pub response: ResponseSeries,
    pub final_state: QuantumState,
    pub norm_drift: f64,
    pub substeps_per_sample: usize,
}

/// Propagates `psi0` across `grid` and returns Y_k = Σ_n ⟨σ_x(n)⟩ at every
/// sample time, starting with Y(0).
pub fn propagate(
    cfg: &SpinChainConfig,
    grid: &TimeGrid,
    drive: &Drive,
    psi0: &QuantumState,
) -> Result<ResponseSeries> {
    propagate_with(cfg, grid, drive, psi0, &PropagatorOptions::default()).map(|p| p.response)
}

pub fn propagate_with(
    cfg: &SpinChainConfig,
    grid: &TimeGrid,
    drive: &Drive,
    psi0: &QuantumState,
    opts: &PropagatorOptions,
) -> Result<Propagation> {
    cfg.validate()?;
    grid.validate()?;
    drive.validate()?;
    if psi0.amplitudes.len() != cfg.dim() {
        return Err(Error::Shape(format!(
            "state has {} amplitudes, chain needs {}",
            psi0.amplitudes.len(),
            cfg.dim()
        )));
    }
    if let Drive::Sampled { values, .. } = drive {
        if values.len() != grid.t_steps {
            return Err(Error::Shape(format!(
                "drive has {} samples, grid has {}",
                values.len(),
                grid.t_steps
            )));
        }
    }
    if (psi0.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig("initial state is not normalised".into()));
    }

    let substeps = substep_count(cfg, grid.dt, drive, opts);
    let stepper = Stepper::new(cfg, grid.dt / substeps as f64);
    let mut psi = psi0.amplitudes.clone();
    let mut values = Vec::with_capacity(grid.t_steps);
    values.push(x_magnetization(&psi));
    for k in 1..grid.t_steps {
        stepper.advance(&mut psi, grid.time(k - 1), substeps, drive);
        values.push(x_magnetization(&psi));
    }

    let norm = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    let norm_drift = (norm - 1.0).abs();
    if !(norm_drift <= opts.norm_tolerance) || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NormDrift {
            drift: norm_drift,
            tolerance: opts.norm_tolerance,
            substep: stepper.tau,
        });
    }
    Ok(Propagation {
        response: ResponseSeries { values },
        final_state: QuantumState { amplitudes: psi },
        norm_drift,
        substeps_per_sample: substeps,
    })
}

fn substep_count(cfg: &SpinChainConfig, dt: f64, drive: &Drive, opts: &PropagatorOptions) -> usize {
    let n = cfg.n_sites;
    let bond = (0..n)
        .map(|i| 0.5 * (cfg.couplings[i].abs() + cfg.couplings[(i + n - 1) % n].abs()))
        .fold(0.0f64, f64::max);
    let local = bond + 0.5 * cfg.hz.abs() + 0.5 * (cfg.h1.abs() + drive.peak());
    let m = (dt * local / opts.max_substep_phase).ceil() as usize;
    m.max(opts.min_substeps).max(1)
}

/// Suzuki's fourth-order five-stage weights (p, p, 1 − 4p, p, p).
fn suzuki_weights() -> [f64; 5] {
    let p = 1.0 / (4.0 - 4f64.powf(1.0 / 3.0));
    [p, p, 1.0 - 4.0 * p, p, p]
}

struct Stepper {
    tau: f64,
    h1: f64,
    weights: [f64; 5],
    /// exp(−i E_s τ a) for a in {p/2, p, (1 − 3p)/2}.
    half_p: Vec<Complex64>,
    full_p: Vec<Complex64>,
    middle: Vec<Complex64>,
}

impl Stepper {
    fn new(cfg: &SpinChainConfig, tau: f64) -> Self {
        let diag = static_diagonal(cfg);
        let weights = suzuki_weights();
        let p = weights[0];
        let table = |a: f64| -> Vec<Complex64> {
            diag.iter()
                .map(|e| Complex64::from_polar(1.0, -e * tau * a))
                .collect()
        };
        Stepper {
            tau,
            h1: cfg.h1,
            weights,
            half_p: table(0.5 * p),
            full_p: table(p),
            middle: table(0.5 * (1.0 - 3.0 * p)),
        }
    }

    /// Advances by `substeps · tau` starting at `t0`.
    fn advance(&self, psi: &mut [Complex64], t0: f64, substeps: usize, drive: &Drive) {
        let w = &self.weights;
        // Diagonal factors between the x-rotations; the trailing half step of
        // one substep is merged with the leading half step of the next.
        let inner = [&self.full_p, &self.middle, &self.middle, &self.full_p];
        apply_phases(psi, &self.half_p);
        let mut t = t0;
        for s in 0..substeps {
            for (stage, &c) in w.iter().enumerate() {
                let mid = t + 0.5 * c * self.tau;
                let theta = 0.5 * (self.h1 + drive.at(mid)) * c * self.tau;
                rotate_x_all(psi, theta);
                t += c * self.tau;
                if stage < 4 {
                    apply_phases(psi, inner[stage]);
                }
            }
            if s + 1 < substeps {
                apply_phases(psi, &self.full_p);
            }
        }
        apply_phases(psi, &self.half_p);
    }
}

#[inline]
fn apply_phases(psi: &mut [Complex64], phases: &[Complex64]) {
    for (a, p) in psi.iter_mut().zip(phases) {
        *a *= p;
    }
}

/// ψ ← Π_n exp(iθ σ_x(n)) ψ.
fn rotate_x_all(psi: &mut [Complex64], theta: f64) {
    let (s, c) = theta.sin_cos();
    let dim = psi.len();
    let mut mask = 1;
    while mask < dim {
        for block in psi.chunks_exact_mut(2 * mask) {
            let (lo, hi) = block.split_at_mut(mask);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                // (c·x + i s·y, i s·x + c·y)
                *a = Complex64::new(c * x.re - s * y.im, c * x.im + s * y.re);
                *b = Complex64::new(c * y.re - s * x.im, c * y.im + s * x.re);
            }
        }
        mask <<= 1;
    }
}
