//! Experiment configuration: a JSON object whose keys carry unit suffixes.
//! Every section is checked and all problems are reported together.

use std::path::Path;

use ddsim::bloch::{BlochState, RelaxationParams};
use ddsim::ensemble::{EnsembleSpec, NoiseKind, NoiseModel, SimContext, SimOptions};
use ddsim::hamiltonian::{CriticalPointOptions, SpinSystem, LEVELS};
use ddsim::sequence::{
    build_bangbang, build_hahn_echo, build_inversion_recovery, parse, validate_bangbang, BangBangParams, BathCutoff,
    PulseProgram, PulseSpec,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

/// How the pulse program is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "template", rename_all = "snake_case", deny_unknown_fields)]
pub enum SequenceConfig {
    /// Program text in the pulse language.
    Dsl { text: String },
    HahnEcho {
        #[serde(rename = "tau_s")]
        tau: f64,
    },
    InversionRecovery {
        #[serde(rename = "delay_s")]
        delay: f64,
    },
    Bangbang(BangBangParams),
}

impl SequenceConfig {
    pub fn build(&self, pulses: PulseSpec) -> ddsim::Result<PulseProgram> {
        match self {
            SequenceConfig::Dsl { text } => parse(text),
            SequenceConfig::HahnEcho { tau } => build_hahn_echo(*tau, pulses),
            SequenceConfig::InversionRecovery { delay } => build_inversion_recovery(*delay, pulses),
            SequenceConfig::Bangbang(p) => build_bangbang(p, pulses),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographySection {
    pub n_cycles: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(rename = "tau1_s")]
    pub tau1: f64,
    #[serde(rename = "total_time_s")]
    pub total_time: f64,
    #[serde(rename = "tau_c_list_s")]
    pub tau_c_list: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCheck {
    #[serde(rename = "half_width_g")]
    pub half_width: f64,
    #[serde(rename = "step_g")]
    pub step: f64,
    /// Defaults to `b_init_g`.
    #[serde(default, rename = "center_g")]
    pub center: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticalPointSection {
    pub system: SpinSystem,
    /// Level indices (0-based, ascending energy).
    pub transition: [usize; 2],
    #[serde(rename = "b_init_g")]
    pub b_init: [f64; 3],
    #[serde(default)]
    pub options: CriticalPointOptions,
    #[serde(default)]
    pub grid_check: Option<GridCheck>,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentConfig {
    pub sequence: Option<SequenceConfig>,
    pub pulses: PulseSpec,
    pub ensemble: Option<EnsembleSpec>,
    pub noise: NoiseModel,
    pub relaxation: RelaxationParams,
    pub seed: u64,
    pub initial_state: Option<[f64; 3]>,
    pub budget: Option<u128>,
    pub bath_cutoff: Option<BathCutoff>,
    pub tomography: Option<TomographySection>,
    pub sweep: Option<SweepSection>,
    pub critical_point: Option<CriticalPointSection>,
}

/// Sections a command cannot do without.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Need {
    Sequence,
    Ensemble,
    Sweep,
    CriticalPoint,
}

pub struct Loaded {
    /// The document as read, with command-line overrides applied.
    pub raw: Value,
    pub config: ExperimentConfig,
    pub warnings: Vec<String>,
}

const KEYS: &[&str] = &[
    "description",
    "sequence",
    "pulses",
    "ensemble",
    "noise",
    "relaxation",
    "seed",
    "initial_state",
    "budget",
    "bath_cutoff",
    "tomography",
    "sweep",
    "critical_point",
];

fn section<T: DeserializeOwned>(obj: &Map<String, Value>, key: &str, errors: &mut Vec<String>) -> Option<T> {
    let v = obj.get(key)?;
    match serde_json::from_value(v.clone()) {
        Ok(t) => Some(t),
        Err(e) => {
            errors.push(format!("{key}: {e}"));
            None
        }
    }
}

impl ExperimentConfig {
    pub fn initial(&self) -> BlochState {
        self.initial_state.map(BlochState::from).unwrap_or(BlochState::PLUS_Z)
    }

    /// Simulation context; panics if the ensemble is missing, which
    /// validation rules out for commands that need it.
    pub fn context(&self) -> SimContext {
        let mut options = SimOptions::default();
        if let Some(b) = self.budget {
            options.budget = b;
        }
        SimContext {
            ensemble: self.ensemble.clone().expect("validated ensemble"),
            noise: self.noise.clone(),
            relax: self.relaxation,
            seed: self.seed,
            options,
        }
    }

    pub fn program(&self) -> ddsim::Result<PulseProgram> {
        self.sequence.as_ref().expect("validated sequence").build(self.pulses)
    }

    /// Bath cutoff given explicitly, else `1/τ_b` of the fastest
    /// Ornstein–Uhlenbeck component.
    pub fn cutoff(&self) -> Option<BathCutoff> {
        self.bath_cutoff.or_else(|| {
            self.noise
                .components
                .iter()
                .filter_map(|c| match *c {
                    NoiseKind::OrnsteinUhlenbeck { tau_b, .. } => Some(tau_b),
                    NoiseKind::Telegraph { .. } => None,
                })
                .reduce(f64::min)
                .and_then(|t| BathCutoff::from_correlation_time(t).ok())
        })
    }
}

pub fn load(path: &Path, seed: Option<u64>, needs: &[Need]) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
    from_text(&text, seed, needs).map_err(|e| match e {
        CliError::Config(list) => {
            CliError::Config(list.into_iter().map(|m| format!("{}: {m}", path.display())).collect())
        }
        other => other,
    })
}

pub fn from_text(text: &str, seed: Option<u64>, needs: &[Need]) -> Result<Loaded, CliError> {
    let mut raw: Value = serde_json::from_str(text).map_err(|e| CliError::config(format!("invalid JSON: {e}")))?;
    let Some(obj) = raw.as_object_mut() else {
        return Err(CliError::config("top level must be a JSON object".to_string()));
    };
    let mut errors = Vec::new();
    for key in obj.keys() {
        if !KEYS.contains(&key.as_str()) {
            errors.push(format!("unknown key `{key}` (expected one of {})", KEYS.join(", ")));
        }
    }
    if let Some(s) = seed {
        obj.insert("seed".into(), Value::from(s));
        if let Some(cp) = obj.get_mut("critical_point").and_then(Value::as_object_mut) {
            let opts = cp.entry("options").or_insert_with(|| Value::Object(Map::new()));
            if let Some(o) = opts.as_object_mut() {
                o.insert("seed".into(), Value::from(s));
            }
        }
    }
    let obj = &*obj;
    if let Some(d) = obj.get("description") {
        if !d.is_string() {
            errors.push("description: expected a string".into());
        }
    }
    let mut cfg = ExperimentConfig {
        sequence: section(obj, "sequence", &mut errors),
        pulses: section(obj, "pulses", &mut errors).unwrap_or_default(),
        ensemble: section(obj, "ensemble", &mut errors),
        noise: section(obj, "noise", &mut errors).unwrap_or_default(),
        relaxation: section(obj, "relaxation", &mut errors).unwrap_or_default(),
        seed: section(obj, "seed", &mut errors).unwrap_or(0),
        initial_state: section(obj, "initial_state", &mut errors),
        budget: section(obj, "budget", &mut errors),
        bath_cutoff: section(obj, "bath_cutoff", &mut errors),
        tomography: section(obj, "tomography", &mut errors),
        sweep: section(obj, "sweep", &mut errors),
        critical_point: section(obj, "critical_point", &mut errors),
    };
    let mut warnings = Vec::new();
    check(&mut cfg, needs, &mut errors, &mut warnings);
    if errors.is_empty() {
        Ok(Loaded {
            raw,
            config: cfg,
            warnings,
        })
    } else {
        Err(CliError::Config(errors))
    }
}

fn check(cfg: &mut ExperimentConfig, needs: &[Need], errors: &mut Vec<String>, warnings: &mut Vec<String>) {
    let mut push = |key: &str, r: ddsim::Result<()>| {
        if let Err(e) = r {
            errors.push(format!("{key}: {e}"));
        }
    };
    push("pulses", cfg.pulses.validate());
    push("noise", cfg.noise.validate());
    push("relaxation", cfg.relaxation.validate());
    if let Some(e) = &cfg.ensemble {
        push("ensemble", e.validate());
    }
    if let Some(s) = &cfg.initial_state {
        let n = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(n <= 1.0 + 1e-9) {
            push("initial_state", Err(ddsim::Error::InvalidParameter(format!("norm {n} exceeds 1"))));
        }
    }
    if let Some(c) = &cfg.bath_cutoff {
        push("bath_cutoff", BathCutoff::new(c.omega_c).map(|_| ()));
    }
    if let Some(seq) = &cfg.sequence {
        push("sequence", seq.build(cfg.pulses).map(|_| ()));
    }
    if let Some(t) = &cfg.tomography {
        push("tomography", check_n_list(&t.n_cycles));
    }
    if let Some(s) = &cfg.sweep {
        for (name, v) in [("tau1_s", s.tau1), ("total_time_s", s.total_time)] {
            if !(v > 0.0 && v.is_finite()) {
                push("sweep", Err(ddsim::Error::InvalidParameter(format!("{name} must be > 0, got {v}"))));
            }
        }
        if s.tau_c_list.is_empty() {
            push("sweep", Err(ddsim::Error::InvalidParameter("tau_c_list_s is empty".into())));
        }
        for &t in &s.tau_c_list {
            if !(t > 0.0 && t.is_finite()) {
                push("sweep", Err(ddsim::Error::InvalidParameter(format!("tau_c must be > 0, got {t}"))));
            }
        }
    }
    if let Some(cp) = &cfg.critical_point {
        push("critical_point.system", cp.system.validate());
        push("critical_point.options", cp.options.validate());
        let [i, j] = cp.transition;
        if !(i < j && j < LEVELS) {
            push(
                "critical_point.transition",
                Err(ddsim::Error::InvalidParameter(format!("need 0 <= i < j < {LEVELS}, got [{i}, {j}]"))),
            );
        }
        if cp.b_init.iter().any(|v| !v.is_finite()) {
            push("critical_point.b_init_g", Err(ddsim::Error::InvalidParameter("must be finite".into())));
        }
        if let Some(g) = &cp.grid_check {
            if !(g.step > 0.0 && g.half_width >= g.step) {
                push(
                    "critical_point.grid_check",
                    Err(ddsim::Error::InvalidParameter("need step_g > 0 and half_width_g >= step_g".into())),
                );
            }
        }
    }
    for need in needs {
        let (present, key) = match need {
            Need::Sequence => (cfg.sequence.is_some(), "sequence"),
            Need::Ensemble => (cfg.ensemble.is_some(), "ensemble"),
            Need::Sweep => (cfg.sweep.is_some(), "sweep"),
            Need::CriticalPoint => (cfg.critical_point.is_some(), "critical_point"),
        };
        if !present {
            errors.push(format!("missing required section `{key}`"));
        }
    }

    let mut tau_cs = Vec::new();
    if let Some(SequenceConfig::Bangbang(p)) = &cfg.sequence {
        tau_cs.push(p.tau_c);
    }
    if let Some(s) = &cfg.sweep {
        tau_cs.extend(&s.tau_c_list);
    }
    if let Some(cutoff) = cfg.cutoff() {
        for tau_c in tau_cs {
            let c = validate_bangbang(cutoff, tau_c);
            if !c.passed() {
                warnings.push(format!(
                    "tau_c = {tau_c} s: omega_c*tau_c = {:.3} > 1, decoupling will be ineffective",
                    c.product()
                ));
            }
        }
    }
}

pub fn check_n_list(n: &[u32]) -> ddsim::Result<()> {
    if n.is_empty() {
        return Err(ddsim::Error::InvalidParameter("cycle list is empty".into()));
    }
    if n.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ddsim::Error::InvalidParameter(format!("cycle list must be strictly ascending, got {n:?}")));
    }
    Ok(())
}

/// Parses `1,10,100`.
pub fn parse_n_list(s: &str) -> Result<Vec<u32>, CliError> {
    let list = s
        .split(',')
        .map(|t| t.trim().parse::<u32>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::config(format!("--n-list `{s}`: {e}")))?;
    check_n_list(&list).map_err(|e| CliError::config(format!("--n-list: {e}")))?;
    Ok(list)
}
