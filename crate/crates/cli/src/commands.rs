use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use optics_tcn::complexity::{complexity_point, complexity_sweep, ComplexityCurve};
use optics_tcn::dataset::{
    apply_scaler, fit_scaler, generate_amplitude_grid_with, generate_flat_with, load_dataset,
    make_frequency_grid, save_dataset, FrequencyGridSpec, IoDataset, Layout, ScaledDataset, ScalerState,
    Split,
};
use optics_tcn::evaluation::{
    arch_entry, evaluate_model, spearman, ArchSearchResult, R2Report, StabilityOutcome,
};
use optics_tcn::neural::{build_model, load_checkpoint, save_checkpoint, ModelSpec, ModelState};
use optics_tcn::training::{derive_seeds, save_run, train as fit, LossKind, TrainConfig};
use optics_tcn::CODE_VERSION;

use crate::config::{CasePreset, RunConfig};
use crate::CliError;

pub(crate) const RUN_CONFIG: &str = "run_config.json";
pub(crate) const COMMAND_FILE: &str = "command.json";
pub(crate) const SCALER_FILE: &str = "scaler.json";

/// Inputs and version of the command that produced a directory.
#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct CommandRecord {
    pub command: String,
    pub code_version: String,
    pub inputs: BTreeMap<String, PathBuf>,
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Compute(e.to_string()))?;
    std::fs::write(path, text + "\n")
        .map_err(|e| CliError::Compute(format!("cannot write {}: {e}", path.display())))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::MissingInput(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Compute(format!("{}: {e}", path.display())))
}

pub(crate) fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Compute(format!("cannot create {}: {e}", dir.display())))
}

fn record(dir: &Path, cfg: &RunConfig, command: &str, inputs: &[(&str, &Path)]) -> Result<(), CliError> {
    write_json(&dir.join(RUN_CONFIG), cfg)?;
    write_json(
        &dir.join(COMMAND_FILE),
        &CommandRecord {
            command: command.into(),
            code_version: CODE_VERSION.into(),
            inputs: inputs.iter().map(|(k, v)| (k.to_string(), v.to_path_buf())).collect(),
        },
    )
}

pub(crate) fn require(path: &Path, what: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingInput(format!("{what} not found at {}", path.display())))
    }
}

pub(crate) fn load_data(dir: &Path) -> Result<IoDataset, CliError> {
    require(&dir.join("manifest.json"), "data set")?;
    Ok(load_dataset(dir)?)
}

pub(crate) fn data_dir(out: &Path, data: Option<&Path>) -> PathBuf {
    data.map_or_else(|| out.join("dataset"), Path::to_path_buf)
}

/// Split, scaler fitted on the training part, and the scaled series.
fn prepare(ds: &mut IoDataset, cfg: &RunConfig) -> Result<(Split, ScaledDataset), CliError> {
    let split = ds.split(&cfg.data.split)?;
    let scaler = fit_scaler(ds, &split.train)?;
    ds.scaler = Some(scaler);
    let scaled = apply_scaler(ds, &scaler);
    Ok((split, scaled))
}

fn spec_for(cfg: &RunConfig, widths: &str, ds: &IoDataset) -> Result<ModelSpec, CliError> {
    if cfg.time.t_steps != ds.t_steps() {
        return Err(CliError::Config(format!(
            "configured series length {} differs from the data set's {}",
            cfg.time.t_steps,
            ds.t_steps()
        )));
    }
    Ok(cfg.model.spec_for(widths, ds.t_steps())?)
}

fn train_config(cfg: &RunConfig, spec: &ModelSpec) -> TrainConfig {
    TrainConfig {
        loss: if spec.variational { LossKind::HuberPlusKl } else { LossKind::Huber },
        ..cfg.train.clone()
    }
}

fn simulate(
    cfg: &RunConfig,
    chain: &optics_tcn::spin::SpinChainConfig,
    amplitude: f64,
    n: usize,
    grid_cfg: Option<(f64, f64, usize)>,
    case: Option<CasePreset>,
) -> Result<IoDataset, CliError> {
    let grid = cfg.grid()?;
    let omegas = make_frequency_grid(cfg.data.omega_min, cfg.data.omega_max, n)?;
    let mut ds = match grid_cfg {
        Some((a1, am, m)) => generate_amplitude_grid_with(chain, &grid, a1, am, m, &omegas, &cfg.propagator)?,
        None => generate_flat_with(chain, &grid, amplitude, &omegas, &cfg.propagator)?,
    };
    let m = &mut ds.manifest;
    m.frequency_grid = Some(FrequencyGridSpec {
        omega_min: cfg.data.omega_min,
        omega_max: cfg.data.omega_max,
        n,
    });
    m.seed = cfg.seed;
    m.case = case.map(|c| c.name().to_string());
    m.notes.push(format!(
        "frequency grid: {n} evenly spaced values in [{}, {}]",
        cfg.data.omega_min, cfg.data.omega_max
    ));
    m.notes.push(format!(
        "run configuration: {}",
        serde_json::to_string(cfg).expect("config serialises")
    ));
    Ok(ds)
}

pub fn generate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let chain = cfg.chain()?;
    let grid = cfg.data.amplitude_grid.map(|g| (g.a1, g.am, g.m));
    let ds = simulate(cfg, &chain, cfg.data.amplitude, cfg.data.n, grid, cfg.case_preset)?;
    let dir = out.join("dataset");
    save_dataset(&ds, &dir)?;
    record(&dir, cfg, "generate", &[])?;
    println!(
        "{} data set: {} pairs, shape {:?}, {} sites, amplitudes {:?} -> {}",
        cfg.case_preset.map_or("custom", CasePreset::name),
        ds.len(),
        ds.layout.shape(),
        chain.n_sites,
        ds.manifest.amplitudes,
        dir.display()
    );
    Ok(())
}

pub fn train(cfg: &RunConfig, out: &Path, data: Option<&Path>) -> Result<(), CliError> {
    let data = data_dir(out, data);
    let mut ds = load_data(&data)?;
    let (split, scaled) = prepare(&mut ds, cfg)?;
    let spec = spec_for(cfg, &cfg.model.widths, &ds)?;
    let seeds = derive_seeds(cfg.seed, 1)[0];
    let tcfg = TrainConfig { seed: seeds.train, ..train_config(cfg, &spec) };
    let model = build_model(&spec, seeds.init)?;
    let (model, trace) = fit(model, &scaled, &split, &tcfg)?;
    let dir = out.join("train");
    save_run(&dir, &model, &trace, &tcfg)?;
    write_json(&dir.join(SCALER_FILE), &ds.scaler)?;
    record(&dir, cfg, "train", &[("data", &data)])?;
    println!(
        "trained {} ({} parameters) for {} epochs, final loss {:.6e} -> {}",
        spec.label(),
        model.parameter_count(),
        trace.epochs.len(),
        trace.final_loss().unwrap_or(f64::NAN),
        dir.display()
    );
    Ok(())
}

/// Loads a training run directory and its scaler.
pub(crate) fn load_run(dir: &Path) -> Result<(ModelState, Option<ScalerState>), CliError> {
    require(&dir.join("model.json"), "checkpoint")?;
    let model = load_checkpoint(dir)?;
    let scaler_path = dir.join(SCALER_FILE);
    let scaler = if scaler_path.exists() { read_json(&scaler_path)? } else { None };
    Ok((model, scaler))
}

pub(crate) fn print_thresholds(report: &R2Report) {
    for t in &report.thresholds {
        println!("  above {:.2}: {:6.2}%", t.threshold, t.percent);
    }
    if report.flagged > 0 {
        println!("  {} constant-target samples excluded", report.flagged);
    }
}

#[derive(Serialize)]
struct EvaluationSummary<'a> {
    test_size: usize,
    flagged: usize,
    representation: &'a str,
    median_r2: f64,
    thresholds: &'a [optics_tcn::evaluation::ThresholdShare],
}

pub fn evaluate(
    cfg: &RunConfig,
    out: &Path,
    data: Option<&Path>,
    checkpoint: Option<&Path>,
) -> Result<(), CliError> {
    let ckpt = checkpoint.map_or_else(|| out.join("train"), Path::to_path_buf);
    let (model, scaler) = load_run(&ckpt)?;
    let data = data_dir(out, data);
    let mut ds = load_data(&data)?;
    let split = ds.split(&cfg.data.split)?;
    ds.scaler = match (scaler, ds.scaler) {
        (Some(s), _) | (None, Some(s)) => Some(s),
        (None, None) => Some(fit_scaler(&ds, &split.train)?),
    };
    let report = evaluate_model(&model, &ds, &split)?;
    let dir = out.join("evaluate");
    create_dir(&dir)?;
    report.write_csv(&dir.join("r2_report.csv"))?;
    write_json(
        &dir.join("r2_summary.json"),
        &EvaluationSummary {
            test_size: report.samples.len(),
            flagged: report.flagged,
            representation: &report.representation,
            median_r2: report.median(),
            thresholds: &report.thresholds,
        },
    )?;
    record(&dir, cfg, "evaluate", &[("data", &data), ("checkpoint", &ckpt)])?;
    println!("{} on {} test samples:", model.spec().label(), report.samples.len());
    print_thresholds(&report);
    Ok(())
}

/// Writes one stability outcome with per-run checkpoints and reports.
fn store_outcome(dir: &Path, outcome: &StabilityOutcome) -> Result<Vec<String>, CliError> {
    create_dir(dir)?;
    let mut refs = Vec::new();
    for (i, (model, report)) in outcome.models.iter().zip(&outcome.reports).enumerate() {
        let name = format!("run_{:02}", i + 1);
        let run_dir = dir.join(&name);
        save_checkpoint(model, &run_dir)?;
        report.write_csv(&run_dir.join("r2_report.csv"))?;
        refs.push(name);
    }
    outcome.write_json(&dir.join("stability.json"))?;
    std::fs::write(dir.join("table.txt"), outcome.table.render())
        .map_err(|e| CliError::Compute(e.to_string()))?;
    Ok(refs)
}

fn print_outcome(outcome: &StabilityOutcome) {
    print!("{}", outcome.table.render());
    let c = outcome.verdict.criterion;
    println!(
        "criterion: more than {:.0}% of R² above {:.2} in every run -> {}",
        100.0 * c.fraction,
        c.threshold,
        if outcome.verdict.stable { "stable" } else { "unstable" }
    );
    for f in &outcome.failures {
        println!("  failed {f}");
    }
}

fn run_protocol(
    cfg: &RunConfig,
    spec: &ModelSpec,
    ds: &IoDataset,
    scaled: &ScaledDataset,
    split: &Split,
) -> Result<StabilityOutcome, CliError> {
    Ok(optics_tcn::evaluation::stability_protocol(
        spec,
        ds,
        scaled,
        split,
        &train_config(cfg, spec),
        cfg.evaluation.runs,
        cfg.seed,
        cfg.evaluation.criterion,
    )?)
}

pub fn stability(cfg: &RunConfig, out: &Path, data: Option<&Path>) -> Result<(), CliError> {
    let data = data_dir(out, data);
    let mut ds = load_data(&data)?;
    let (split, scaled) = prepare(&mut ds, cfg)?;
    let spec = spec_for(cfg, &cfg.model.widths, &ds)?;
    let outcome = run_protocol(cfg, &spec, &ds, &scaled, &split)?;
    let dir = out.join("stability");
    store_outcome(&dir, &outcome)?;
    write_json(&dir.join(SCALER_FILE), &ds.scaler)?;
    record(&dir, cfg, "stability", &[("data", &data)])?;
    print_outcome(&outcome);
    Ok(())
}

pub fn arch_search(
    cfg: &RunConfig,
    out: &Path,
    data: Option<&Path>,
    specs: Option<&str>,
) -> Result<(), CliError> {
    let grid: Vec<String> = match specs {
        Some(s) => s.split(',').map(|w| w.trim().to_string()).filter(|w| !w.is_empty()).collect(),
        None => cfg.evaluation.arch_grid.clone(),
    };
    if grid.is_empty() {
        return Err(CliError::Config("architecture grid is empty".into()));
    }
    let mut cfg = cfg.clone();
    cfg.evaluation.arch_grid = grid.clone();
    let data = data_dir(out, data);
    let mut ds = load_data(&data)?;
    let (split, scaled) = prepare(&mut ds, &cfg)?;
    let specs = grid
        .iter()
        .map(|w| spec_for(&cfg, w, &ds))
        .collect::<Result<Vec<_>, _>>()?;
    let dir = out.join("arch_search");
    create_dir(&dir)?;
    let mut entries = Vec::new();
    for spec in &specs {
        let outcome = run_protocol(&cfg, spec, &ds, &scaled, &split)?;
        let name = spec.widths.iter().map(|w| w.to_string()).collect::<Vec<_>>().join("-");
        let refs = store_outcome(&dir.join(&name), &outcome)?;
        print_outcome(&outcome);
        entries.push(arch_entry(
            outcome.table,
            outcome.verdict,
            cfg.evaluation.box_threshold,
            refs.into_iter().map(|r| format!("{name}/{r}")).collect(),
        )?);
    }
    let result = ArchSearchResult::from_entries(entries, cfg.evaluation.box_threshold);
    result.write_json(&dir.join("arch_search.json"))?;
    result.write_boxplot_csv(&dir.join("boxplot.csv"))?;
    write_json(&dir.join(SCALER_FILE), &ds.scaler)?;
    record(&dir, &cfg, "arch-search", &[("data", &data)])?;
    match &result.minimum_stable {
        Some(l) => println!("minimum stable architecture: {l}"),
        None => println!("no architecture in the grid is stable"),
    }
    Ok(())
}

pub fn complexity(cfg: &RunConfig, out: &Path, data: Option<&Path>, extra: &[String]) -> Result<(), CliError> {
    let dir = out.join("complexity");
    create_dir(&dir)?;
    let mut inputs: Vec<(String, PathBuf)> = Vec::new();
    let ds = match data {
        Some(d) => {
            inputs.push(("data".into(), d.to_path_buf()));
            load_data(d)?
        }
        None => {
            let c = &cfg.complexity;
            let ds = simulate(cfg, &cfg.chain()?, c.a1, c.n, Some((c.a1, c.am, c.m)), None)?;
            save_dataset(&ds, &dir.join("sweep_data"))?;
            ds
        }
    };
    if !matches!(ds.layout, Layout::AmplitudeGrid { .. }) {
        return Err(CliError::Config("the complexity sweep needs an amplitude-grid data set".into()));
    }
    let mut curve: ComplexityCurve = complexity_sweep(&ds, &cfg.complexity.aape)?;
    for case in &cfg.complexity.extra_cases {
        let preset = RunConfig::preset(*case);
        let mut chain = cfg.chain.clone();
        chain.model_kind = preset.chain.model_kind;
        chain.h1 = preset.chain.h1;
        chain.hz = preset.chain.hz;
        let single = simulate(cfg, &chain.build()?, preset.data.amplitude, cfg.complexity.n, None, Some(*case))?;
        save_dataset(&single, &dir.join(format!("{}_data", case.name())))?;
        curve.extra_points.push((case.name().into(), complexity_point(&single, &cfg.complexity.aape)?));
    }
    for item in extra {
        let (label, path) = item
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--extra expects LABEL=DIR, got {item:?}")))?;
        let single = load_data(Path::new(path))?;
        curve.extra_points.push((label.into(), complexity_point(&single, &cfg.complexity.aape)?));
        inputs.push((format!("extra:{label}"), PathBuf::from(path)));
    }
    curve.write_csv(&dir.join("complexity.csv"))?;
    curve.write_samples_csv(&dir.join("pnorm_samples.csv"))?;
    curve.write_json(&dir.join("complexity.json"))?;
    let refs: Vec<(&str, &Path)> = inputs.iter().map(|(k, v)| (k.as_str(), v.as_path())).collect();
    record(&dir, cfg, "complexity", &refs)?;
    for p in &curve.points {
        println!("A = {:7.4}  mean Pnorm = {:.6}", p.amplitude, p.mean_pnorm);
    }
    for (label, p) in &curve.extra_points {
        println!("{label} (A = {}): mean Pnorm = {:.6}", p.amplitude, p.mean_pnorm);
    }
    if curve.points.len() > 1 {
        println!("Spearman(A, mean Pnorm) = {:.4}", spearman(&curve.amplitudes(), &curve.means()));
    }
    Ok(())
}
