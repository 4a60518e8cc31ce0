//! Run configuration: defaults, case presets, JSON files and flag overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use optics_tcn::complexity::AapeConfig;
use optics_tcn::dataset::SplitSpec;
use optics_tcn::evaluation::StabilityCriterion;
use optics_tcn::neural::{Architecture, ModelSpec, DEFAULT_DILATIONS, DEFAULT_KERNEL, DEFAULT_KL_WEIGHT};
use optics_tcn::spin::{
    ModelKind, PropagatorOptions, SpinChainConfig, TimeGrid, DEFAULT_BOUNDARY_COUPLING,
    DEFAULT_TIE_BREAK_EPSILON, REFERENCE_COUPLINGS,
};
use optics_tcn::training::TrainConfig;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CasePreset {
    Case1,
    Case2,
    Case3,
    Case4,
    Case5,
}

impl CasePreset {
    pub fn name(self) -> &'static str {
        match self {
            CasePreset::Case1 => "case1",
            CasePreset::Case2 => "case2",
            CasePreset::Case3 => "case3",
            CasePreset::Case4 => "case4",
            CasePreset::Case5 => "case5",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub model_kind: ModelKind,
    /// One coupling per bond; the last closes the ring.
    pub couplings: Vec<f64>,
    pub h1: f64,
    pub hz: f64,
    pub tie_break_epsilon: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            model_kind: ModelKind::Transverse,
            couplings: SpinChainConfig::reference_couplings(DEFAULT_BOUNDARY_COUPLING),
            h1: 0.0,
            hz: 0.0,
            tie_break_epsilon: DEFAULT_TIE_BREAK_EPSILON,
        }
    }
}

impl ChainConfig {
    pub fn build(&self) -> optics_tcn::Result<SpinChainConfig> {
        let cfg = SpinChainConfig {
            n_sites: self.couplings.len(),
            couplings: self.couplings.clone(),
            h1: self.h1,
            hz: self.hz,
            model_kind: self.model_kind,
            tie_break_epsilon: self.tie_break_epsilon,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reference chain cut to `n` sites: the first n − 1 bonds plus the
    /// closing coupling.
    pub fn truncate_reference(&mut self, n: usize) -> Result<(), CliError> {
        if n > REFERENCE_COUPLINGS.len() + 1 {
            return Err(CliError::Config(format!(
                "the reference chain has {} sites; give explicit couplings for {n} sites in the config file",
                REFERENCE_COUPLINGS.len() + 1
            )));
        }
        let mut j: Vec<f64> = REFERENCE_COUPLINGS[..n.saturating_sub(1)].to_vec();
        j.push(DEFAULT_BOUNDARY_COUPLING);
        self.couplings = j;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeGridConfig {
    pub a1: f64,
    pub am: f64,
    pub m: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    /// Number of frequencies.
    pub n: usize,
    pub omega_min: f64,
    pub omega_max: f64,
    pub amplitude: f64,
    /// When set, the data set spans these amplitudes instead of `amplitude`.
    pub amplitude_grid: Option<AmplitudeGridConfig>,
    pub split: SplitSpec,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            n: 3700,
            omega_min: 0.2,
            omega_max: 5.0,
            amplitude: 1.0,
            amplitude_grid: None,
            split: SplitSpec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Dash notation, e.g. `(5-5-3)`.
    pub widths: String,
    pub variational: bool,
    pub architecture: Architecture,
    pub kernel: usize,
    pub dilations: Vec<usize>,
    pub kl_weight: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            widths: "(5-5-3)".into(),
            variational: false,
            architecture: Architecture::Tcn,
            kernel: DEFAULT_KERNEL,
            dilations: DEFAULT_DILATIONS.to_vec(),
            kl_weight: DEFAULT_KL_WEIGHT,
        }
    }
}

impl ModelConfig {
    pub fn spec_for(&self, widths: &str, input_length: usize) -> optics_tcn::Result<ModelSpec> {
        let spec = ModelSpec {
            widths: ModelSpec::parse_widths(widths)?,
            kernel: self.kernel,
            dilations: self.dilations.clone(),
            variational: self.variational,
            input_length,
            kl_weight: self.kl_weight,
            architecture: self.architecture,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    pub runs: usize,
    pub criterion: StabilityCriterion,
    pub arch_grid: Vec<String>,
    /// Table column summarised by the architecture-search box plots.
    pub box_threshold: f64,
    pub plot_frequencies: Vec<f64>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            runs: 10,
            criterion: StabilityCriterion::default(),
            arch_grid: ["(3-3-2)", "(4-4-3)", "(5-5-2)", "(5-5-3)"].map(String::from).to_vec(),
            box_threshold: 0.98,
            plot_frequencies: vec![0.86, 1.78, 2.45, 3.45],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityConfig {
    pub aape: AapeConfig,
    pub a1: f64,
    pub am: f64,
    pub m: usize,
    /// Frequencies per amplitude.
    pub n: usize,
    /// Presets evaluated as single points next to the sweep.
    pub extra_cases: Vec<CasePreset>,
}

impl Default for ComplexityConfig {
    fn default() -> Self {
        ComplexityConfig {
            aape: AapeConfig::default(),
            a1: 1.0,
            am: 10.0,
            m: 19,
            n: 200,
            extra_cases: vec![CasePreset::Case3, CasePreset::Case4],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub case_preset: Option<CasePreset>,
    pub chain: ChainConfig,
    pub time: TimeGrid,
    pub propagator: PropagatorOptions,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub evaluation: EvaluationConfig,
    pub complexity: ComplexityConfig,
    pub seed: u64,
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            case_preset: None,
            chain: ChainConfig::default(),
            time: TimeGrid { t_steps: 512, dt: 0.1 },
            propagator: PropagatorOptions::default(),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            evaluation: EvaluationConfig::default(),
            complexity: ComplexityConfig::default(),
            seed: 0,
            jobs: None,
        }
    }
}

impl RunConfig {
    /// Defaults with a case preset applied.
    pub fn preset(case: CasePreset) -> Self {
        let mut c = RunConfig { case_preset: Some(case), ..RunConfig::default() };
        let (kind, amplitude, h1, hz, widths) = match case {
            CasePreset::Case1 => (ModelKind::Transverse, 1.0, 0.0, 0.0, "(5-5-3)"),
            CasePreset::Case2 => (ModelKind::Transverse, 10.0, 0.0, 0.0, "(12-12-10-10)"),
            CasePreset::Case3 => (ModelKind::NonIntegrable, 1.5, -0.8 * 1.05 / 2.0, 0.8 * 0.5 / 2.0, "(5-5-4)"),
            CasePreset::Case4 => (ModelKind::NonIntegrable, 2.5, -0.8 * 1.05, 0.8 * 0.5, "(8-8-6)"),
            CasePreset::Case5 => (ModelKind::Transverse, 0.5, 0.0, 0.0, "(8-8-4)"),
        };
        c.chain.model_kind = kind;
        c.chain.h1 = h1;
        c.chain.hz = hz;
        c.data.amplitude = amplitude;
        c.model.widths = widths.into();
        if case == CasePreset::Case5 {
            c.data.amplitude_grid = Some(AmplitudeGridConfig { a1: 0.5, am: 1.7, m: 7 });
        }
        c
    }

    /// Builds the effective configuration: defaults, then the preset (flag
    /// first, else the file's), then the file's values, then `overrides`.
    pub fn resolve(
        file: Option<&Path>,
        preset_flag: Option<CasePreset>,
        overrides: impl FnOnce(&mut RunConfig) -> Result<(), CliError>,
    ) -> Result<RunConfig, CliError> {
        let file_value = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    if e.kind() == std::io::ErrorKind::NotFound {
                        CliError::MissingInput(format!("config file {} does not exist", p.display()))
                    } else {
                        CliError::Config(format!("cannot read {}: {e}", p.display()))
                    }
                })?;
                let v: Value = serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                if !v.is_object() {
                    return Err(CliError::Config(format!("{} must hold a JSON object", p.display())));
                }
                Some(v)
            }
            None => None,
        };
        let file_preset = match file_value.as_ref().and_then(|v| v.get("case_preset")) {
            Some(Value::Null) | None => None,
            Some(v) => Some(
                serde_json::from_value::<CasePreset>(v.clone())
                    .map_err(|e| CliError::Config(format!("case_preset: {e}")))?,
            ),
        };
        let base = match preset_flag.or(file_preset) {
            Some(p) => RunConfig::preset(p),
            None => RunConfig::default(),
        };
        let mut merged = serde_json::to_value(&base).expect("config serialises");
        if let Some(v) = file_value {
            merge(&mut merged, v);
        }
        if let Some(p) = preset_flag {
            merged["case_preset"] = serde_json::to_value(p).expect("preset serialises");
        }
        let mut cfg: RunConfig =
            serde_json::from_value(merged).map_err(|e| CliError::Config(format!("config: {e}")))?;
        overrides(&mut cfg)?;
        cfg.train.seed = cfg.seed;
        Ok(cfg)
    }

    pub fn chain(&self) -> Result<SpinChainConfig, CliError> {
        Ok(self.chain.build()?)
    }

    pub fn grid(&self) -> Result<TimeGrid, CliError> {
        self.time.validate()?;
        Ok(self.time)
    }

    pub fn model_spec(&self) -> Result<ModelSpec, CliError> {
        Ok(self.model.spec_for(&self.model.widths, self.time.t_steps)?)
    }
}

/// Recursive object merge; values from `over` replace those in `base`.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}
