//! Per-series R², threshold tables, the multi-run stability protocol and
//! model-family comparisons.

mod stats;

pub use stats::{quantile, spearman, BoxStats};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{apply_scaler, IoDataset, ScaledDataset, Split};
use crate::neural::{ModelSpec, ModelState};
use crate::payload::write_json;
use crate::training::{train_ensemble, RunSeeds, TrainConfig};
use crate::{Error, Result};

/// Thresholds reported in every table, lowest first.
pub const REPORT_THRESHOLDS: [f64; 4] = [0.85, 0.90, 0.95, 0.98];

/// Columns of the per-run stability tables, as printed (highest first).
pub const TABLE_THRESHOLDS: [f64; 3] = [0.98, 0.95, 0.90];

/// Marker recorded in reports: R² is taken on min-max scaled series.
pub const SCALED_REPRESENTATION: &str = "min_max_scaled";

/// 1 − SS_res/SS_tot with the time mean of `y`. `None` when `y` is constant.
pub fn r2(y: &[f64], y_hat: &[f64]) -> Result<Option<f64>> {
    if y.len() != y_hat.len() || y.is_empty() {
        return Err(Error::Shape(format!(
            "R² needs equal non-empty lengths, got {} and {}",
            y.len(),
            y_hat.len()
        )));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Ok(None);
    }
    let ss_res: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(Some(1.0 - ss_res / ss_tot))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct R2Sample {
    pub sample_id: usize,
    pub omega: f64,
    pub amplitude: f64,
    /// `None` for a constant target.
    pub r2: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdShare {
    pub threshold: f64,
    pub percent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct R2Report {
    pub samples: Vec<R2Sample>,
    pub thresholds: Vec<ThresholdShare>,
    /// Constant-target samples left out of every percentage.
    pub flagged: usize,
    pub representation: String,
}

/// Percentage of `values` strictly above `threshold`.
pub fn percent_above(values: &[f64], threshold: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    100.0 * values.iter().filter(|&&v| v > threshold).count() as f64 / values.len() as f64
}

impl R2Report {
    pub fn from_samples(samples: Vec<R2Sample>) -> Self {
        let flagged = samples.iter().filter(|s| s.r2.is_none()).count();
        let mut report = R2Report {
            samples,
            thresholds: Vec::new(),
            flagged,
            representation: SCALED_REPRESENTATION.into(),
        };
        let values = report.values();
        report.thresholds = REPORT_THRESHOLDS
            .iter()
            .map(|&threshold| ThresholdShare {
                threshold,
                percent: percent_above(&values, threshold),
            })
            .collect();
        report
    }

    /// R² of the scored (non-flagged) samples.
    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().filter_map(|s| s.r2).collect()
    }

    pub fn percent_above(&self, threshold: f64) -> f64 {
        percent_above(&self.values(), threshold)
    }

    pub fn median(&self) -> f64 {
        quantile(&self.values(), 0.5)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        for s in &self.samples {
            w.serialize(s).map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Scores `model` on the test split of an already scaled data set.
pub fn evaluate_scaled(
    model: &ModelState,
    ds: &IoDataset,
    scaled: &ScaledDataset,
    split: &Split,
) -> Result<R2Report> {
    if model.spec().input_length != ds.t_steps() {
        return Err(Error::Shape(format!(
            "model input length {} vs series length {}",
            model.spec().input_length,
            ds.t_steps()
        )));
    }
    let inputs: Vec<&[f64]> = split.test.iter().map(|&i| scaled.inputs[i].as_slice()).collect();
    let preds = model.predict_series(&inputs)?;
    let samples = split
        .test
        .iter()
        .zip(&preds)
        .map(|(&i, p)| {
            Ok(R2Sample {
                sample_id: i,
                omega: ds.pairs[i].0.omega,
                amplitude: ds.pairs[i].0.amplitude,
                r2: r2(&scaled.outputs[i], p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(R2Report::from_samples(samples))
}

/// Scores `model` on the test split using the data set's fitted scaler.
pub fn evaluate_model(model: &ModelState, ds: &IoDataset, split: &Split) -> Result<R2Report> {
    let scaler = ds
        .scaler
        .ok_or_else(|| Error::InvalidConfig("data set has no fitted scaler".into()))?;
    evaluate_scaled(model, ds, &apply_scaler(ds, &scaler), split)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityCriterion {
    /// A run passes when strictly more than this fraction of its R² values
    /// exceed `threshold`.
    pub fraction: f64,
    pub threshold: f64,
}

impl Default for StabilityCriterion {
    fn default() -> Self {
        StabilityCriterion {
            fraction: 0.85,
            threshold: 0.85,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub runs: usize,
    pub criterion: StabilityCriterion,
    /// Percentage of R² above the criterion threshold, per run.
    pub per_run_percent: Vec<f64>,
    pub per_run_pass: Vec<bool>,
    pub stable: bool,
}

impl StabilityVerdict {
    /// Applies `criterion` to per-run percentages above its threshold.
    pub fn from_percentages(percentages: &[f64], criterion: StabilityCriterion) -> Self {
        let per_run_pass: Vec<bool> = percentages
            .iter()
            .map(|&p| p > 100.0 * criterion.fraction)
            .collect();
        StabilityVerdict {
            runs: percentages.len(),
            criterion,
            per_run_percent: percentages.to_vec(),
            stable: !per_run_pass.is_empty() && per_run_pass.iter().all(|&p| p),
            per_run_pass,
        }
    }

    pub fn from_reports(reports: &[R2Report], criterion: StabilityCriterion) -> Self {
        let p: Vec<f64> = reports
            .iter()
            .map(|r| r.percent_above(criterion.threshold))
            .collect();
        Self::from_percentages(&p, criterion)
    }
}

/// Per-run percentages above 0.98 / 0.95 / 0.90 with column averages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityTable {
    pub label: String,
    pub parameter_count: usize,
    pub thresholds: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl StabilityTable {
    pub fn from_reports(label: &str, parameter_count: usize, reports: &[R2Report]) -> Self {
        StabilityTable {
            label: label.into(),
            parameter_count,
            thresholds: TABLE_THRESHOLDS.to_vec(),
            rows: reports
                .iter()
                .map(|r| TABLE_THRESHOLDS.iter().map(|&t| r.percent_above(t)).collect())
                .collect(),
        }
    }

    pub fn column(&self, threshold: f64) -> Option<Vec<f64>> {
        let j = self.thresholds.iter().position(|&t| t == threshold)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn averages(&self) -> Vec<f64> {
        (0..self.thresholds.len())
            .map(|j| self.rows.iter().map(|r| r[j]).sum::<f64>() / self.rows.len() as f64)
            .collect()
    }

    /// Text rendering with one row per run and an average row.
    pub fn render(&self) -> String {
        let mut out = format!(
            "{} with {} trainable parameters\n{:>9}",
            self.label, self.parameter_count, "run"
        );
        for t in &self.thresholds {
            out += &format!(" {:>11}", format!("above {t:.2}"));
        }
        out.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            out += &format!("{:>9}", i + 1);
            for v in row {
                out += &format!(" {v:>11.1}");
            }
            out.push('\n');
        }
        out += &format!("{:>9}", "average");
        for v in self.averages() {
            out += &format!(" {v:>11.1}");
        }
        out.push('\n');
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityOutcome {
    pub spec: ModelSpec,
    pub table: StabilityTable,
    pub verdict: StabilityVerdict,
    pub seeds: Vec<RunSeeds>,
    /// Messages of runs that failed to train; they are not in the table.
    pub failures: Vec<String>,
    #[serde(skip)]
    pub reports: Vec<R2Report>,
    #[serde(skip)]
    pub models: Vec<ModelState>,
}

impl StabilityOutcome {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

/// Trains `runs` seeded models of `spec`, scores each on the test split and
/// applies `criterion`.
#[allow(clippy::too_many_arguments)]
pub fn stability_protocol(
    spec: &ModelSpec,
    ds: &IoDataset,
    scaled: &ScaledDataset,
    split: &Split,
    cfg: &TrainConfig,
    runs: usize,
    master_seed: u64,
    criterion: StabilityCriterion,
) -> Result<StabilityOutcome> {
    if runs < 2 {
        return Err(Error::InvalidConfig(format!(
            "the stability protocol needs at least two runs, got {runs}"
        )));
    }
    let ensemble = train_ensemble(spec, scaled, split, cfg, runs, master_seed)?;
    let mut reports = Vec::new();
    let mut models = Vec::new();
    let mut failures = Vec::new();
    let seeds = ensemble.iter().map(|r| r.seeds).collect();
    for (i, run) in ensemble.into_iter().enumerate() {
        match run.outcome {
            Ok((model, _)) => {
                reports.push(evaluate_scaled(&model, ds, scaled, split)?);
                models.push(model);
            }
            Err(e) => failures.push(format!("run {}: {e}", i + 1)),
        }
    }
    let count = crate::neural::build_model(spec, 0)?.parameter_count();
    let table = StabilityTable::from_reports(&spec.label(), count, &reports);
    let mut verdict = StabilityVerdict::from_reports(&reports, criterion);
    if !failures.is_empty() {
        verdict.stable = false;
    }
    Ok(StabilityOutcome {
        spec: spec.clone(),
        table,
        verdict,
        seeds,
        failures,
        reports,
        models,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchEntry {
    pub label: String,
    pub parameter_count: usize,
    pub table: StabilityTable,
    pub verdict: StabilityVerdict,
    /// Spread of the per-run percentages above `box_threshold`.
    pub boxplot: BoxStats,
    /// Checkpoint directories backing the rows, when stored.
    pub checkpoints: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchSearchResult {
    pub entries: Vec<ArchEntry>,
    pub box_threshold: f64,
    /// Smallest stable entry by parameter count, if any is stable.
    pub minimum_stable: Option<String>,
}

impl ArchSearchResult {
    /// Orders entries by parameter count and picks the minimum stable one.
    pub fn from_entries(mut entries: Vec<ArchEntry>, box_threshold: f64) -> Self {
        entries.sort_by(|a, b| {
            a.parameter_count
                .cmp(&b.parameter_count)
                .then_with(|| a.label.cmp(&b.label))
        });
        let minimum_stable = entries
            .iter()
            .find(|e| e.verdict.stable)
            .map(|e| e.label.clone());
        ArchSearchResult {
            entries,
            box_threshold,
            minimum_stable,
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// `boxplot.csv`: spec, min, q1, median, q3, max, mean.
    pub fn write_boxplot_csv(&self, path: &Path) -> Result<()> {
        let rows: Vec<(String, BoxStats)> = self
            .entries
            .iter()
            .map(|e| (e.label.clone(), e.boxplot))
            .collect();
        write_boxplot_csv(path, &rows)
    }
}

pub fn write_boxplot_csv(path: &Path, rows: &[(String, BoxStats)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["spec", "min", "q1", "median", "q3", "max", "mean"])
        .map_err(|e| Error::csv(path, e))?;
    for (label, b) in rows {
        let mut rec = vec![label.clone()];
        rec.extend([b.min, b.q1, b.median, b.q3, b.max, b.mean].iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Builds an entry from per-run results of one spec.
pub fn arch_entry(
    table: StabilityTable,
    verdict: StabilityVerdict,
    box_threshold: f64,
    checkpoints: Vec<String>,
) -> Result<ArchEntry> {
    let column = table.column(box_threshold).ok_or_else(|| {
        Error::InvalidConfig(format!("no table column for threshold {box_threshold}"))
    })?;
    Ok(ArchEntry {
        label: table.label.clone(),
        parameter_count: table.parameter_count,
        boxplot: BoxStats::of(&column),
        table,
        verdict,
        checkpoints,
    })
}

/// Runs the stability protocol for every spec and returns the entries
/// ordered by parameter count, together with each spec's outcome.
#[allow(clippy::too_many_arguments)]
pub fn arch_search(
    specs: &[ModelSpec],
    ds: &IoDataset,
    scaled: &ScaledDataset,
    split: &Split,
    cfg: &TrainConfig,
    runs: usize,
    master_seed: u64,
    criterion: StabilityCriterion,
    box_threshold: f64,
) -> Result<(ArchSearchResult, Vec<StabilityOutcome>)> {
    if specs.is_empty() {
        return Err(Error::InvalidConfig("architecture grid is empty".into()));
    }
    let mut entries = Vec::new();
    let mut outcomes = Vec::new();
    for spec in specs {
        let out = stability_protocol(spec, ds, scaled, split, cfg, runs, master_seed, criterion)?;
        entries.push(arch_entry(
            out.table.clone(),
            out.verdict.clone(),
            box_threshold,
            Vec::new(),
        )?);
        outcomes.push(out);
    }
    Ok((ArchSearchResult::from_entries(entries, box_threshold), outcomes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub per_run: Vec<f64>,
    pub mean: f64,
    pub boxplot: BoxStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub threshold: f64,
    pub rows: Vec<ComparisonRow>,
    /// Set when the labelled sets have different run counts.
    pub mismatched_runs: bool,
}

impl Comparison {
    /// Rows by decreasing mean; ties keep label order.
    pub fn ranked(&self) -> Vec<&ComparisonRow> {
        let mut rows: Vec<&ComparisonRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| b.mean.total_cmp(&a.mean).then_with(|| a.label.cmp(&b.label)));
        rows
    }

    pub fn row(&self, label: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

/// Compares labelled per-run percentages above `threshold`.
pub fn compare_percentages(sets: &[(String, Vec<f64>)], threshold: f64) -> Result<Comparison> {
    if sets.len() < 2 {
        return Err(Error::InvalidConfig("comparison needs at least two labelled sets".into()));
    }
    if let Some((label, _)) = sets.iter().find(|(_, v)| v.is_empty()) {
        return Err(Error::InvalidConfig(format!("set {label:?} has no runs")));
    }
    let n0 = sets[0].1.len();
    Ok(Comparison {
        threshold,
        mismatched_runs: sets.iter().any(|(_, v)| v.len() != n0),
        rows: sets
            .iter()
            .map(|(label, v)| ComparisonRow {
                label: label.clone(),
                per_run: v.clone(),
                mean: v.iter().sum::<f64>() / v.len() as f64,
                boxplot: BoxStats::of(v),
            })
            .collect(),
    })
}

/// Compares labelled report sets by their per-run percentage above
/// `threshold`.
pub fn compare_models(sets: &[(String, Vec<R2Report>)], threshold: f64) -> Result<Comparison> {
    let p: Vec<(String, Vec<f64>)> = sets
        .iter()
        .map(|(l, rs)| (l.clone(), rs.iter().map(|r| r.percent_above(threshold)).collect()))
        .collect();
    compare_percentages(&p, threshold)
}
