//! Plot-ready CSV files derived from run directories.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use optics_tcn::complexity::ComplexityCurve;
use optics_tcn::dataset::{ManifestDocument, Channel};
use optics_tcn::evaluation::{ArchSearchResult, R2Sample};
use optics_tcn::spin::transition_spectrum;

use crate::commands::{create_dir, load_data, load_run, read_json, require, CommandRecord, COMMAND_FILE};
use crate::config::RunConfig;
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    R2VsOmega,
    PredVsTarget,
    Boxplot,
    ComplexityCurve,
}

impl FromStr for PlotKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.replace('-', "_").as_str() {
            "r2_vs_omega" => Ok(PlotKind::R2VsOmega),
            "pred_vs_target" => Ok(PlotKind::PredVsTarget),
            "boxplot" => Ok(PlotKind::Boxplot),
            "complexity_curve" => Ok(PlotKind::ComplexityCurve),
            _ => Err(CliError::Config(format!(
                "unknown plot kind {s:?}; expected r2_vs_omega, pred_vs_target, boxplot or complexity_curve"
            ))),
        }
    }
}

/// Energies closer than this count as one level.
const LEVEL_TOLERANCE: f64 = 1e-9;

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| CliError::Compute(format!("{}: {e}", path.display())))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Compute(e.to_string())
}

fn flush(mut w: csv::Writer<std::fs::File>) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::Compute(e.to_string()))
}

fn command_input(run: &Path, key: &str) -> Result<PathBuf, CliError> {
    let rec: CommandRecord = read_json(&run.join(COMMAND_FILE))?;
    rec.inputs
        .get(key)
        .cloned()
        .ok_or_else(|| CliError::MissingInput(format!("{} records no {key} input", run.display())))
}

pub fn emit(cfg: &RunConfig, out: &Path, kind: PlotKind, run: Option<&Path>) -> Result<(), CliError> {
    let default_run = match kind {
        PlotKind::R2VsOmega | PlotKind::PredVsTarget => "evaluate",
        PlotKind::Boxplot => "arch_search",
        PlotKind::ComplexityCurve => "complexity",
    };
    let run = run.map_or_else(|| out.join(default_run), Path::to_path_buf);
    require(&run, "run directory")?;
    let dir = out.join("plots");
    create_dir(&dir)?;
    match kind {
        PlotKind::R2VsOmega => r2_vs_omega(&run, &dir),
        PlotKind::PredVsTarget => pred_vs_target(cfg, &run, &dir),
        PlotKind::Boxplot => {
            let res: ArchSearchResult = read_json(&run.join("arch_search.json"))?;
            res.write_boxplot_csv(&dir.join("boxplot.csv"))?;
            println!("wrote {} box summaries", res.entries.len());
            Ok(())
        }
        PlotKind::ComplexityCurve => {
            let curve: ComplexityCurve = read_json(&run.join("complexity.json"))?;
            curve.write_csv(&dir.join("complexity_curve.csv"))?;
            println!("wrote {} curve points", curve.points.len() + curve.extra_points.len());
            Ok(())
        }
    }
}

/// R² against drive frequency plus the transition frequencies out of the
/// ground level inside the plotted frequency range.
fn r2_vs_omega(run: &Path, dir: &Path) -> Result<(), CliError> {
    let report = run.join("r2_report.csv");
    require(&report, "R² report")?;
    let mut rd = csv::Reader::from_path(&report).map_err(csv_err)?;
    let samples: Vec<R2Sample> = rd.deserialize().collect::<Result<_, _>>().map_err(csv_err)?;
    let mut w = csv_writer(&dir.join("r2_vs_omega.csv"))?;
    w.write_record(["sample_id", "omega", "r2"]).map_err(csv_err)?;
    for s in &samples {
        let r2 = s.r2.map_or_else(String::new, |v| v.to_string());
        w.write_record([s.sample_id.to_string(), s.omega.to_string(), r2]).map_err(csv_err)?;
    }
    flush(w)?;

    let data = command_input(run, "data")?;
    let doc = ManifestDocument::read(&data)?;
    let (lo, hi) = doc.provenance.omegas.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &w| {
        (a.min(w), b.max(w))
    });
    let spectrum = transition_spectrum(&doc.provenance.chain)?;
    let e0 = spectrum.eigenvalues[0];
    let mut lines: Vec<f64> = spectrum
        .eigenvalues
        .iter()
        .map(|e| e - e0)
        .filter(|&w| w > LEVEL_TOLERANCE && (lo..=hi).contains(&w))
        .collect();
    lines.dedup_by(|a, b| (*a - *b).abs() < LEVEL_TOLERANCE);
    let mut w = csv_writer(&dir.join("transitions.csv"))?;
    w.write_record(["omega"]).map_err(csv_err)?;
    for l in &lines {
        w.write_record([l.to_string()]).map_err(csv_err)?;
    }
    flush(w)?;
    println!("wrote {} R² rows and {} transition lines", samples.len(), lines.len());
    Ok(())
}

/// Input, target and prediction of the test samples nearest to each
/// requested frequency, in the scaled representation.
fn pred_vs_target(cfg: &RunConfig, run: &Path, dir: &Path) -> Result<(), CliError> {
    let data = command_input(run, "data")?;
    let ckpt = command_input(run, "checkpoint")?;
    let (model, scaler) = load_run(&ckpt)?;
    let mut ds = load_data(&data)?;
    let run_cfg: RunConfig = read_json(&run.join(crate::commands::RUN_CONFIG)).unwrap_or_else(|_| cfg.clone());
    let split = ds.split(&run_cfg.data.split)?;
    let scaler = match scaler.or(ds.scaler) {
        Some(s) => s,
        None => optics_tcn::dataset::fit_scaler(&ds, &split.train)?,
    };
    ds.scaler = Some(scaler);
    if split.test.is_empty() {
        return Err(CliError::Config("the test split is empty".into()));
    }
    for (i, &target_omega) in cfg.evaluation.plot_frequencies.iter().enumerate() {
        let &idx = split
            .test
            .iter()
            .min_by(|&&a, &&b| {
                let da = (ds.pairs[a].0.omega - target_omega).abs();
                let db = (ds.pairs[b].0.omega - target_omega).abs();
                da.total_cmp(&db)
            })
            .expect("test split is not empty");
        let (x, y) = &ds.pairs[idx];
        let xs = scaler.transform(Channel::Input, &x.values);
        let ys = scaler.transform(Channel::Output, &y.values);
        let pred = model.predict_series(&[xs.as_slice()])?.remove(0);
        let name = format!("pred_vs_target_{}_omega_{:.4}.csv", i + 1, x.omega);
        let mut w = csv_writer(&dir.join(&name))?;
        w.write_record(["k", "input", "target", "pred"]).map_err(csv_err)?;
        for k in 0..xs.len() {
            w.write_record([(k + 1).to_string(), xs[k].to_string(), ys[k].to_string(), pred[k].to_string()])
                .map_err(csv_err)?;
        }
        flush(w)?;
        println!("requested omega {target_omega}: sample {idx} at omega {} -> {name}", x.omega);
    }
    Ok(())
}
