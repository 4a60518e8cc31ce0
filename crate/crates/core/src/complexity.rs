//! Amplitude-aware permutation entropy and the complexity-versus-amplitude
//! sweep over an amplitude grid.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{IoDataset, Layout};
use crate::parallel::map_slice;
use crate::payload::write_json;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AapeConfig {
    pub embedding_dim: usize,
    pub delay: usize,
    /// Mixing between the window amplitude and its successive differences.
    pub alpha_adjust: f64,
}

impl Default for AapeConfig {
    fn default() -> Self {
        AapeConfig {
            embedding_dim: 4,
            delay: 1,
            alpha_adjust: 0.5,
        }
    }
}

impl AapeConfig {
    pub fn validate(&self, len: usize) -> Result<()> {
        if self.embedding_dim < 2 || self.delay < 1 {
            return Err(Error::InvalidConfig(format!(
                "embedding dimension must be >= 2 and delay >= 1, got {} and {}",
                self.embedding_dim, self.delay
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha_adjust) {
            return Err(Error::InvalidConfig(format!(
                "alpha_adjust must lie in [0, 1], got {}",
                self.alpha_adjust
            )));
        }
        if len <= (self.embedding_dim - 1) * self.delay {
            return Err(Error::InvalidConfig(format!(
                "series of length {len} is too short for embedding {} with delay {}",
                self.embedding_dim, self.delay
            )));
        }
        Ok(())
    }

    fn windows(&self, len: usize) -> usize {
        len - (self.embedding_dim - 1) * self.delay
    }
}

/// Full result of one entropy evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Aape {
    /// Entropy normalised by ln(m_emb!).
    pub pnorm: f64,
    /// Weight-normalised probability of each observed ordinal pattern. A
    /// pattern lists window positions from the smallest value upwards.
    pub probabilities: BTreeMap<Vec<usize>, f64>,
    /// Sum of all window weights before normalisation.
    pub total_weight: f64,
    /// Set when every window weight is zero; `pnorm` is then 0.
    pub degenerate: bool,
}

/// Stable argsort of one embedding window.
fn ordinal_pattern(window: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..window.len()).collect();
    idx.sort_by(|&a, &b| window[a].total_cmp(&window[b]));
    idx
}

fn ln_factorial(m: usize) -> f64 {
    (2..=m).map(|k| (k as f64).ln()).sum()
}

pub fn aape_detailed(series: &[f64], cfg: &AapeConfig) -> Result<Aape> {
    cfg.validate(series.len())?;
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("series passed to the permutation entropy".into()));
    }
    let m = cfg.embedding_dim;
    let a = cfg.alpha_adjust;
    let mut mass: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let mut window = vec![0.0; m];
    for start in 0..cfg.windows(series.len()) {
        for (k, w) in window.iter_mut().enumerate() {
            *w = series[start + k * cfg.delay];
        }
        let level: f64 = window.iter().map(|v| v.abs()).sum();
        let spread: f64 = window.windows(2).map(|p| (p[1] - p[0]).abs()).sum();
        let weight = a / m as f64 * level + (1.0 - a) / (m - 1) as f64 * spread;
        *mass.entry(ordinal_pattern(&window)).or_insert(0.0) += weight;
    }
    let total_weight: f64 = mass.values().sum();
    if total_weight == 0.0 {
        return Ok(Aape {
            pnorm: 0.0,
            probabilities: mass,
            total_weight,
            degenerate: true,
        });
    }
    let probabilities: BTreeMap<Vec<usize>, f64> =
        mass.into_iter().map(|(k, w)| (k, w / total_weight)).collect();
    let h: f64 = probabilities
        .values()
        .filter(|&&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    Ok(Aape {
        pnorm: (h / ln_factorial(m)).clamp(0.0, 1.0),
        probabilities,
        total_weight,
        degenerate: false,
    })
}

/// Normalised amplitude-aware permutation entropy (Pnorm) of one series.
pub fn aape(series: &[f64], cfg: &AapeConfig) -> Result<f64> {
    aape_detailed(series, cfg).map(|r| r.pnorm)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub amplitude: f64,
    pub mean_pnorm: f64,
    pub pnorms: Vec<f64>,
    /// Series whose window weights were all zero.
    pub degenerate: usize,
}

impl CurvePoint {
    fn from_outputs<S: AsRef<[f64]> + Sync>(
        amplitude: f64,
        outputs: &[S],
        cfg: &AapeConfig,
    ) -> Result<Self> {
        let results = map_slice(outputs, |s| aape_detailed(s.as_ref(), cfg));
        let results = results.into_iter().collect::<Result<Vec<_>>>()?;
        let pnorms: Vec<f64> = results.iter().map(|r| r.pnorm).collect();
        Ok(CurvePoint {
            amplitude,
            mean_pnorm: pnorms.iter().sum::<f64>() / pnorms.len() as f64,
            degenerate: results.iter().filter(|r| r.degenerate).count(),
            pnorms,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityCurve {
    pub config: AapeConfig,
    pub points: Vec<CurvePoint>,
    /// Single-amplitude evaluations of other data sets, keyed by label.
    pub extra_points: Vec<(String, CurvePoint)>,
}

impl ComplexityCurve {
    pub fn amplitudes(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.amplitude).collect()
    }

    pub fn means(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean_pnorm).collect()
    }

    /// `complexity.csv` with columns amplitude, mean_pnorm, n_samples, label.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(["amplitude", "mean_pnorm", "n_samples", "label"])
            .map_err(|e| Error::csv(path, e))?;
        let rows = self
            .points
            .iter()
            .map(|p| ("sweep", p))
            .chain(self.extra_points.iter().map(|(l, p)| (l.as_str(), p)));
        for (label, p) in rows {
            w.write_record([
                p.amplitude.to_string(),
                p.mean_pnorm.to_string(),
                p.pnorms.len().to_string(),
                label.to_string(),
            ])
            .map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// `pnorm_samples.csv`: one row per series.
    pub fn write_samples_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(["label", "amplitude", "sample", "pnorm"])
            .map_err(|e| Error::csv(path, e))?;
        let rows = self
            .points
            .iter()
            .map(|p| ("sweep", p))
            .chain(self.extra_points.iter().map(|(l, p)| (l.as_str(), p)));
        for (label, p) in rows {
            for (i, v) in p.pnorms.iter().enumerate() {
                w.write_record([label.to_string(), p.amplitude.to_string(), i.to_string(), v.to_string()])
                    .map_err(|e| Error::csv(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

/// Mean Pnorm of the raw outputs at every amplitude of an amplitude grid.
pub fn complexity_sweep(ds: &IoDataset, cfg: &AapeConfig) -> Result<ComplexityCurve> {
    let Layout::AmplitudeGrid { m, .. } = ds.layout else {
        return Err(Error::Shape("complexity sweep needs an amplitude-grid data set".into()));
    };
    let mut points = Vec::with_capacity(m);
    for j in 0..m {
        let row = ds.amplitude_row(j)?;
        let outputs: Vec<&[f64]> = row.iter().map(|(_, y)| y.values.as_slice()).collect();
        points.push(CurvePoint::from_outputs(row[0].0.amplitude, &outputs, cfg)?);
    }
    Ok(ComplexityCurve {
        config: *cfg,
        points,
        extra_points: Vec::new(),
    })
}

/// Mean Pnorm over all raw outputs of a single-amplitude data set.
pub fn complexity_point(ds: &IoDataset, cfg: &AapeConfig) -> Result<CurvePoint> {
    let Some((first, _)) = ds.pairs.first() else {
        return Err(Error::Shape("data set is empty".into()));
    };
    if ds.pairs.iter().any(|(x, _)| x.amplitude != first.amplitude) {
        return Err(Error::Shape("data set mixes several drive amplitudes".into()));
    }
    let outputs: Vec<&[f64]> = ds.pairs.iter().map(|(_, y)| y.values.as_slice()).collect();
    CurvePoint::from_outputs(first.amplitude, &outputs, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_dim_hand_example() {
        let cfg = AapeConfig {
            embedding_dim: 2,
            ..AapeConfig::default()
        };
        let r = aape_detailed(&[1.0, 3.0, 2.0, 4.0], &cfg).unwrap();
        assert!((r.probabilities[&vec![0, 1]] - 0.72).abs() < 1e-15);
        assert!((r.total_weight - 6.25).abs() < 1e-15);
    }

    #[test]
    fn ties_rank_earlier_first() {
        assert_eq!(ordinal_pattern(&[2.0, 1.0, 2.0, 1.0]), vec![1, 3, 0, 2]);
    }

    #[test]
    fn zero_series_is_degenerate() {
        let r = aape_detailed(&[0.0; 16], &AapeConfig::default()).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.pnorm, 0.0);
    }

    #[test]
    fn short_or_bad_configs_fail() {
        let cfg = AapeConfig::default();
        assert!(aape(&[1.0, 2.0, 3.0], &cfg).is_err());
        assert!(aape(&[1.0, 2.0, 3.0, 4.0], &cfg).is_ok());
        let bad = AapeConfig {
            delay: 0,
            ..cfg
        };
        assert!(aape(&[0.0; 10], &bad).is_err());
        assert!(aape(&[1.0, f64::NAN, 0.0, 2.0, 3.0], &cfg).is_err());
    }
}
