//! Monochromatic-drive input→output corpora.
//!
//! A flat data set holds `n` pairs driven at one amplitude and `n`
//! frequencies; an amplitude grid holds `m · n` pairs ordered amplitude-major
//! (pair `j·n + i` has amplitude `A_j` and frequency `ω_i`).

mod io;
mod scaler;
mod split;

pub use io::{export_csv, load_dataset, save_dataset, ManifestDocument, PayloadFile, FORMAT_TAG, FORMAT_VERSION};
pub use scaler::{apply_scaler, fit_scaler, Channel, ScaledDataset, ScalerState};
pub use split::{split_indices, Split, SplitSpec};

use serde::{Deserialize, Serialize};

use crate::parallel;
use crate::spin::{
    ground_state, propagate_with, Drive, PropagatorOptions, SpinChainConfig, TimeGrid,
};
use crate::{Error, Result, CODE_VERSION};

/// Sampled drive h_k = A sin(ω k δt) for k = 1..T.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSeries {
    pub values: Vec<f64>,
    pub amplitude: f64,
    pub omega: f64,
}

impl PulseSeries {
    pub fn sinusoid(amplitude: f64, omega: f64, grid: &TimeGrid) -> Self {
        let values = (1..=grid.t_steps)
            .map(|k| amplitude * (omega * k as f64 * grid.dt).sin())
            .collect();
        PulseSeries {
            values,
            amplitude,
            omega,
        }
    }
}

/// Magnetization samples Y_k = Y((k − 1) δt).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseSeries {
    pub values: Vec<f64>,
}

impl ResponseSeries {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    Flat { n: usize, t: usize },
    AmplitudeGrid { m: usize, n: usize, t: usize },
}

impl Layout {
    pub fn len(&self) -> usize {
        match *self {
            Layout::Flat { n, .. } => n,
            Layout::AmplitudeGrid { m, n, .. } => m * n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn t_steps(&self) -> usize {
        match *self {
            Layout::Flat { t, .. } | Layout::AmplitudeGrid { t, .. } => t,
        }
    }

    /// Logical payload shape: (n, T) or (m, n, T).
    pub fn shape(&self) -> Vec<usize> {
        match *self {
            Layout::Flat { n, t } => vec![n, t],
            Layout::AmplitudeGrid { m, n, t } => vec![m, n, t],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGridSpec {
    pub omega_min: f64,
    pub omega_max: f64,
    pub n: usize,
}

/// Provenance of a generated data set. Everything needed to regenerate the
/// payload bit for bit is here.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub code_version: String,
    pub chain: SpinChainConfig,
    pub grid: TimeGrid,
    pub frequency_grid: Option<FrequencyGridSpec>,
    pub omegas: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub seed: u64,
    pub propagator: PropagatorOptions,
    pub initial_state: String,
    pub case: Option<String>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IoDataset {
    pub pairs: Vec<(PulseSeries, ResponseSeries)>,
    pub layout: Layout,
    pub scaler: Option<ScalerState>,
    pub manifest: DatasetManifest,
}

impl IoDataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn t_steps(&self) -> usize {
        self.layout.t_steps()
    }

    pub fn split(&self, spec: &SplitSpec) -> Result<Split> {
        split_indices(self.len(), spec)
    }

    /// Pairs with amplitude index `j` of an amplitude grid.
    pub fn amplitude_row(&self, j: usize) -> Result<&[(PulseSeries, ResponseSeries)]> {
        match self.layout {
            Layout::AmplitudeGrid { m, n, .. } if j < m => Ok(&self.pairs[j * n..(j + 1) * n]),
            Layout::AmplitudeGrid { m, .. } => Err(Error::Shape(format!(
                "amplitude index {j} out of range for m = {m}"
            ))),
            Layout::Flat { .. } => Err(Error::Shape(
                "data set is flat, expected an amplitude grid".into(),
            )),
        }
    }
}

/// `n` evenly spaced frequencies from `omega_min` to `omega_max` inclusive.
pub fn make_frequency_grid(omega_min: f64, omega_max: f64, n: usize) -> Result<Vec<f64>> {
    if !(omega_min > 0.0 && omega_min < omega_max && omega_max.is_finite()) || n < 2 {
        return Err(Error::InvalidConfig(format!(
            "degenerate frequency range [{omega_min}, {omega_max}] with n = {n}"
        )));
    }
    Ok(linspace(omega_min, omega_max, n))
}

/// A_j = A_1 + (j − 1)(A_m − A_1)/(m − 1), j = 1..m.
pub fn amplitude_levels(a1: f64, am: f64, m: usize) -> Result<Vec<f64>> {
    if m < 2 || !(a1 < am) || !a1.is_finite() || !am.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "amplitude grid needs m >= 2 and A1 < Am, got m = {m}, A1 = {a1}, Am = {am}"
        )));
    }
    Ok(linspace(a1, am, m))
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let step = (b - a) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { b } else { a + i as f64 * step })
        .collect()
}

/// Propagates every (amplitude, ω) drive from the shared initial state.
fn simulate(
    cfg: &SpinChainConfig,
    grid: &TimeGrid,
    drives: &[(f64, f64)],
    opts: &PropagatorOptions,
) -> Result<Vec<(PulseSeries, ResponseSeries)>> {
    cfg.validate()?;
    grid.validate()?;
    let psi0 = ground_state(cfg)?;
    parallel::try_map_indexed(drives.len(), |index| {
        let (amplitude, omega) = drives[index];
        let pulse = PulseSeries::sinusoid(amplitude, omega, grid);
        propagate_with(cfg, grid, &Drive::from(&pulse), &psi0, opts)
            .map(|p| (pulse, p.response))
            .map_err(|e| Error::Sample {
                index,
                source: Box::new(e),
            })
    })
}

fn manifest(
    cfg: &SpinChainConfig,
    grid: &TimeGrid,
    omegas: &[f64],
    amplitudes: Vec<f64>,
    opts: &PropagatorOptions,
) -> DatasetManifest {
    DatasetManifest {
        code_version: CODE_VERSION.to_string(),
        chain: cfg.clone(),
        grid: *grid,
        frequency_grid: None,
        omegas: omegas.to_vec(),
        amplitudes,
        seed: 0,
        propagator: *opts,
        initial_state: format!(
            "ground state of H_static - eps * sum_n sigma_x(n), eps = {:e}",
            cfg.tie_break_epsilon
        ),
        case: None,
        notes: vec![format!(
            "periodic coupling J_z^(N) = {}; dt = {} is a chosen default",
            cfg.couplings[cfg.n_sites - 1],
            grid.dt
        )],
    }
}

/// Data set driven at a single amplitude, one pair per frequency.
pub fn generate_flat(
    cfg: &SpinChainConfig,
    grid: &TimeGrid,
    amplitude: f64,
    omegas: &[f64],
) -> Result<IoDataset> {
    generate_flat_with(cfg, grid, amplitude, omegas, &PropagatorOptions::default())
}

pub fn generate_flat_with(
    cfg: &SpinChainConfig,
    grid: &TimeGrid,
    amplitude: f64,
    omegas: &[f64],
    opts: &PropagatorOptions,
) -> Result<IoDataset> {
    if omegas.is_empty() {
        return Err(Error::InvalidConfig("no frequencies given".into()));
    }
    let drives: Vec<_> = omegas.iter().map(|&w| (amplitude, w)).collect();
    let pairs = simulate(cfg, grid, &drives, opts)?;
    Ok(IoDataset {
        pairs,
        layout: Layout::Flat {
            n: omegas.len(),
            t: grid.t_steps,
        },
        scaler: None,
        manifest: manifest(cfg, grid, omegas, vec![amplitude], opts),
    })
}

/// Data set over `m` evenly spaced amplitudes and the given frequencies.
pub fn generate_amplitude_grid(
    cfg: &SpinChainConfig,
    grid: &TimeGrid,
    a1: f64,
    am: f64,
    m: usize,
    omegas: &[f64],
) -> Result<IoDataset> {
    generate_amplitude_grid_with(cfg, grid, a1, am, m, omegas, &PropagatorOptions::default())
}

pub fn generate_amplitude_grid_with(
    cfg: &SpinChainConfig,
    grid: &TimeGrid,
    a1: f64,
    am: f64,
    m: usize,
    omegas: &[f64],
    opts: &PropagatorOptions,
) -> Result<IoDataset> {
    let amplitudes = amplitude_levels(a1, am, m)?;
    generate_amplitude_levels_with(cfg, grid, &amplitudes, omegas, opts)
}

/// Amplitude grid over explicit levels (used to regenerate from a manifest).
pub fn generate_amplitude_levels_with(
    cfg: &SpinChainConfig,
    grid: &TimeGrid,
    amplitudes: &[f64],
    omegas: &[f64],
    opts: &PropagatorOptions,
) -> Result<IoDataset> {
    if omegas.is_empty() || amplitudes.is_empty() {
        return Err(Error::InvalidConfig("empty amplitude or frequency list".into()));
    }
    let drives: Vec<_> = amplitudes
        .iter()
        .flat_map(|&a| omegas.iter().map(move |&w| (a, w)))
        .collect();
    let pairs = simulate(cfg, grid, &drives, opts)?;
    Ok(IoDataset {
        pairs,
        layout: Layout::AmplitudeGrid {
            m: amplitudes.len(),
            n: omegas.len(),
            t: grid.t_steps,
        },
        scaler: None,
        manifest: manifest(cfg, grid, omegas, amplitudes.to_vec(), opts),
    })
}

/// Rebuilds a data set from its manifest alone.
pub fn regenerate(manifest: &DatasetManifest, layout: Layout) -> Result<IoDataset> {
    let mut ds = match layout {
        Layout::Flat { .. } => {
            let a = *manifest
                .amplitudes
                .first()
                .ok_or_else(|| Error::InvalidConfig("manifest lists no amplitude".into()))?;
            generate_flat_with(
                &manifest.chain,
                &manifest.grid,
                a,
                &manifest.omegas,
                &manifest.propagator,
            )?
        }
        Layout::AmplitudeGrid { .. } => generate_amplitude_levels_with(
            &manifest.chain,
            &manifest.grid,
            &manifest.amplitudes,
            &manifest.omegas,
            &manifest.propagator,
        )?,
    };
    if ds.layout != layout {
        return Err(Error::Shape(format!(
            "manifest describes {:?}, regeneration produced {:?}",
            layout, ds.layout
        )));
    }
    ds.manifest = manifest.clone();
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_grid_endpoints() {
        assert_eq!(make_frequency_grid(1.0, 2.0, 3).unwrap(), vec![1.0, 1.5, 2.0]);
        let g = make_frequency_grid(0.2, 5.0, 3700).unwrap();
        assert_eq!(g.len(), 3700);
        assert_eq!(g[0], 0.2);
        assert_eq!(g[3699], 5.0);
        assert!((g[1] - g[0] - 4.8 / 3699.0).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn frequency_grid_rejects_degenerate_ranges() {
        assert!(make_frequency_grid(2.0, 1.0, 5).is_err());
        assert!(make_frequency_grid(0.0, 1.0, 5).is_err());
        assert!(make_frequency_grid(1.0, 2.0, 1).is_err());
    }

    #[test]
    fn amplitude_levels_match_reference_sweeps() {
        let a = amplitude_levels(0.5, 1.7, 7).unwrap();
        let expected = [0.5, 0.7, 0.9, 1.1, 1.3, 1.5, 1.7];
        for (x, e) in a.iter().zip(expected) {
            assert!((x - e).abs() < 1e-12);
        }
        let a = amplitude_levels(1.0, 10.0, 19).unwrap();
        assert_eq!(a.len(), 19);
        for (j, x) in a.iter().enumerate() {
            assert!((x - (1.0 + 0.5 * j as f64)).abs() < 1e-12);
        }
        let steps: Vec<f64> = a.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(steps.iter().all(|s| (s - steps[0]).abs() < 1e-12));
        assert_eq!(amplitude_levels(0.3, 0.9, 2).unwrap(), vec![0.3, 0.9]);
        assert!(amplitude_levels(1.0, 1.0, 3).is_err());
    }

    #[test]
    fn pulse_indexing_starts_at_one() {
        let grid = TimeGrid::new(5, 0.1).unwrap();
        let p = PulseSeries::sinusoid(2.0, 1.3, &grid);
        for (k, v) in p.values.iter().enumerate() {
            assert!((v - 2.0 * (1.3 * (k + 1) as f64 * 0.1).sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_amplitude_gives_stationary_outputs() {
        let cfg = SpinChainConfig::transverse(vec![0.8, 0.9, 0.85]).unwrap();
        let grid = TimeGrid::new(32, 0.1).unwrap();
        let ds = generate_flat(&cfg, &grid, 0.0, &[0.5, 1.0, 2.0]).unwrap();
        for (_, y) in &ds.pairs {
            assert!(y.values.iter().all(|v| (v - y.values[0]).abs() < 1e-6));
        }
    }

    #[test]
    fn grid_layout_orders_amplitude_major() {
        let cfg = SpinChainConfig::transverse(vec![0.8, 0.9, 0.85]).unwrap();
        let grid = TimeGrid::new(16, 0.1).unwrap();
        let ds = generate_amplitude_grid(&cfg, &grid, 0.5, 1.5, 3, &[1.0, 2.0]).unwrap();
        assert_eq!(ds.layout, Layout::AmplitudeGrid { m: 3, n: 2, t: 16 });
        assert_eq!(ds.len(), 6);
        let row = ds.amplitude_row(1).unwrap();
        assert!(row.iter().all(|(p, _)| p.amplitude == 1.0));
        assert_eq!(row[1].0.omega, 2.0);
        assert!(ds.amplitude_row(3).is_err());
    }

    #[test]
    fn failing_sample_reports_its_index() {
        let cfg = SpinChainConfig::transverse(vec![0.8, 0.9]).unwrap();
        let grid = TimeGrid::new(16, 0.1).unwrap();
        let opts = PropagatorOptions {
            norm_tolerance: -1.0,
            ..Default::default()
        };
        let err = generate_flat_with(&cfg, &grid, 1.0, &[1.0, 2.0], &opts).unwrap_err();
        assert!(matches!(err, Error::Sample { index: 0, .. }));
    }
}
