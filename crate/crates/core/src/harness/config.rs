//! TOML experiment configuration.
//!
//! ```toml
//! [experiment]
//! mode = "offline"              # online | offline | ingest
//! repetitions = 1000
//! length = 10000                # online horizon T, or logged stream length L
//! deltas = [0.01, 0.05, 0.1, 0.2, 0.5]
//! seed = 42
//! t_eval = 1750
//! range = [0.0, 1.0]
//! output = "results/study1"
//! # stream = "field.csv"        # ingest only, relative to this file
//! # realized_regret = false
//! # save_streams = false
//! # workers = 0                 # 0 = all cores
//!
//! [model]                       # online / offline only
//! family = "parabola"           # parabola | bimodal
//! noise_var = 0.01
//! scale = 5.0                   # parabola only
//! # max_drop = 3.0              # bimodal only
//!
//! [policies]
//! use = ["TBL", "LiF", "EF", "UR"]
//!
//! [policies.EF]
//! exploration = 2000            # default 2000, or 100 in ingest mode
//!
//! [policies.TBL]
//! prior_j = [0.0, 0.05, -0.05]
//! prior_p = [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 5.0]]
//! sigma2 = 1.0
//!
//! [policies.LiF]
//! amplitude = 0.05
//! window = 50
//! gamma = 0.1
//! omega = 1.0
//! # a0 = 0.5                   # default: uniform on the range per run
//! ```
//!
//! Every key is optional. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policies::PolicySpec;
use crate::reward_models::{ActionRange, ModelFamily, NoiseSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Online,
    Offline,
    Ingest,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Online => "online",
            Mode::Offline => "offline",
            Mode::Ingest => "ingest",
        }
    }

    pub(crate) fn tag(&self) -> u64 {
        match self {
            Mode::Online => 0x0_1,
            Mode::Offline => 0x0_2,
            Mode::Ingest => 0x0_3,
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "online" => Ok(Mode::Online),
            "offline" => Ok(Mode::Offline),
            "ingest" => Ok(Mode::Ingest),
            other => Err(Error::config("experiment.mode", format!("expected online|offline|ingest, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub family: ModelFamily,
    pub noise_var: f64,
}

/// A validated experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub repetitions: usize,
    pub length: usize,
    pub deltas: Vec<f64>,
    pub seed: u64,
    pub t_eval: usize,
    pub range: ActionRange,
    pub realized_regret: bool,
    pub save_streams: bool,
    pub model: Option<ModelConfig>,
    pub stream: Option<PathBuf>,
    pub policies: Vec<PolicySpec>,
    #[serde(skip)]
    pub output: PathBuf,
    #[serde(skip)]
    pub workers: usize,
}

impl ExperimentConfig {
    pub const DEFAULT_REPETITIONS: usize = 1000;
    pub const DEFAULT_LENGTH: usize = 10_000;
    pub const DEFAULT_DELTAS: [f64; 5] = [0.01, 0.05, 0.1, 0.2, 0.5];
    pub const DEFAULT_T_EVAL: usize = 1750;

    /// Study defaults for the given mode: four policies, parabola family.
    pub fn defaults(mode: Mode) -> Self {
        resolve(RawConfig::default(), &Overrides { mode: Some(mode), ..Default::default() }, None)
            .expect("defaults are valid")
    }

    pub fn policy_names(&self) -> Vec<&'static str> {
        self.policies.iter().map(PolicySpec::label).collect()
    }

    /// Re-runs the cross-field checks after programmatic edits.
    pub fn validate(&self) -> Result<()> {
        if self.repetitions < 1 {
            return Err(Error::config("experiment.repetitions", "must be at least 1"));
        }
        if self.length < 1 {
            return Err(Error::config("experiment.length", "must be at least 1"));
        }
        if self.t_eval < 1 {
            return Err(Error::config("experiment.t_eval", "must be at least 1"));
        }
        if self.mode != Mode::Online && self.deltas.is_empty() {
            return Err(Error::config("experiment.deltas", "offline and ingest modes need at least one delta"));
        }
        for (i, &d) in self.deltas.iter().enumerate() {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::config(format!("experiment.deltas[{i}]"), format!("must be > 0, got {d}")));
            }
        }
        match self.mode {
            Mode::Ingest => {
                if self.stream.is_none() {
                    return Err(Error::config("experiment.stream", "ingest mode needs a stream file"));
                }
                if self.model.is_some() {
                    return Err(Error::config("model", "ingest mode has no ground-truth model"));
                }
                if self.realized_regret {
                    return Err(Error::config("experiment.realized_regret", "regret is unavailable in ingest mode"));
                }
            }
            Mode::Online | Mode::Offline => {
                if self.model.is_none() {
                    return Err(Error::config("model", "online and offline modes need a model"));
                }
            }
        }
        if self.policies.is_empty() {
            return Err(Error::config("policies.use", "at least one policy is required"));
        }
        let mut names = self.policy_names();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("policies.use", "policy names must be unique"));
        }
        Ok(())
    }
}

/// Command-line overrides applied before defaults are resolved.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub workers: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Option<RawExperiment>,
    model: Option<RawModel>,
    policies: Option<RawPolicies>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    mode: Option<String>,
    repetitions: Option<i64>,
    length: Option<i64>,
    deltas: Option<Vec<f64>>,
    seed: Option<u64>,
    t_eval: Option<i64>,
    range: Option<[f64; 2]>,
    output: Option<PathBuf>,
    stream: Option<PathBuf>,
    realized_regret: Option<bool>,
    save_streams: Option<bool>,
    workers: Option<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    family: Option<String>,
    noise_var: Option<f64>,
    scale: Option<f64>,
    max_drop: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicies {
    #[serde(rename = "use")]
    enabled: Option<Vec<String>>,
    #[serde(rename = "UR")]
    _uniform: Option<RawUniform>,
    #[serde(rename = "EF")]
    epsilon_first: Option<RawEpsilonFirst>,
    #[serde(rename = "TBL")]
    thompson: Option<RawThompson>,
    #[serde(rename = "LiF")]
    lock_in: Option<RawLockIn>,
    #[serde(rename = "FIXED")]
    fixed: Option<RawFixed>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUniform {}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEpsilonFirst {
    exploration: Option<i64>,
    unclamped_vertex: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawThompson {
    prior_j: Option<[f64; 3]>,
    prior_p: Option<[[f64; 3]; 3]>,
    sigma2: Option<f64>,
    unclamped_vertex: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLockIn {
    a0: Option<f64>,
    amplitude: Option<f64>,
    window: Option<i64>,
    gamma: Option<f64>,
    omega: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFixed {
    action: Option<f64>,
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    parse_config_with(path, &Overrides::default())
}

pub fn parse_config_with(path: impl AsRef<Path>, overrides: &Overrides) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text, path.parent(), overrides)
}

/// Parses config text. Relative stream paths are resolved against `base_dir`.
pub fn parse_config_str(text: &str, base_dir: Option<&Path>, overrides: &Overrides) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::ConfigSyntax(e.to_string()))?;
    resolve(raw, overrides, base_dir)
}

fn positive_int(key: &str, v: Option<i64>, default: usize) -> Result<usize> {
    match v {
        None => Ok(default),
        Some(x) if x >= 1 => Ok(x as usize),
        Some(x) => Err(Error::config(key, format!("must be at least 1, got {x}"))),
    }
}

fn positive_real(key: &str, v: Option<f64>, default: f64) -> Result<f64> {
    match v {
        None => Ok(default),
        Some(x) if x.is_finite() && x > 0.0 => Ok(x),
        Some(x) => Err(Error::config(key, format!("must be > 0, got {x}"))),
    }
}

fn resolve(raw: RawConfig, ov: &Overrides, base_dir: Option<&Path>) -> Result<ExperimentConfig> {
    let exp = raw.experiment.unwrap_or_default();
    let mode = match (ov.mode, exp.mode.as_deref()) {
        (Some(m), _) => m,
        (None, Some(s)) => s.parse()?,
        (None, None) => Mode::Online,
    };

    let range = match exp.range {
        Some([lo, hi]) => ActionRange::new(lo, hi).map_err(|e| Error::config("experiment.range", e.to_string()))?,
        None => ActionRange::unit(),
    };
    let deltas = exp.deltas.unwrap_or_else(|| ExperimentConfig::DEFAULT_DELTAS.to_vec());
    for (i, &d) in deltas.iter().enumerate() {
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::config(format!("experiment.deltas[{i}]"), format!("must be > 0, got {d}")));
        }
    }
    let workers = match (ov.workers, exp.workers) {
        (Some(w), _) => w,
        (None, Some(w)) if w >= 0 => w as usize,
        (None, Some(w)) => return Err(Error::config("experiment.workers", format!("must be >= 0, got {w}"))),
        (None, None) => 0,
    };

    let model = match (mode, raw.model) {
        (Mode::Ingest, Some(_)) => return Err(Error::config("model", "ingest mode has no ground-truth model")),
        (Mode::Ingest, None) => None,
        (_, m) => Some(resolve_model(m.unwrap_or_default())?),
    };
    let stream = exp.stream.map(|p| match base_dir {
        Some(dir) if p.is_relative() && !dir.as_os_str().is_empty() => dir.join(p),
        _ => p,
    });

    let cfg = ExperimentConfig {
        mode,
        repetitions: positive_int("experiment.repetitions", exp.repetitions, ExperimentConfig::DEFAULT_REPETITIONS)?,
        length: positive_int("experiment.length", exp.length, ExperimentConfig::DEFAULT_LENGTH)?,
        deltas,
        seed: ov.seed.or(exp.seed).unwrap_or(0),
        t_eval: positive_int("experiment.t_eval", exp.t_eval, ExperimentConfig::DEFAULT_T_EVAL)?,
        range,
        realized_regret: exp.realized_regret.unwrap_or(false),
        save_streams: exp.save_streams.unwrap_or(false),
        model,
        stream,
        policies: resolve_policies(raw.policies.unwrap_or_default(), mode, range)?,
        output: ov.output.clone().or(exp.output).unwrap_or_else(|| PathBuf::from("results")),
        workers,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn resolve_model(m: RawModel) -> Result<ModelConfig> {
    let noise_var = m.noise_var.unwrap_or(NoiseSpec::SIMULATION_DEFAULT.variance);
    NoiseSpec::new(noise_var).map_err(|e| Error::config("model.noise_var", e.to_string()))?;
    let family = match m.family.as_deref().unwrap_or("parabola") {
        "parabola" => {
            if m.max_drop.is_some() {
                return Err(Error::config("model.max_drop", "only valid for the bimodal family"));
            }
            ModelFamily::Parabola { scale: positive_real("model.scale", m.scale, ModelFamily::DEFAULT_PARABOLA_SCALE)? }
        }
        "bimodal" => {
            if m.scale.is_some() {
                return Err(Error::config("model.scale", "only valid for the parabola family"));
            }
            ModelFamily::Bimodal {
                max_drop: positive_real("model.max_drop", m.max_drop, ModelFamily::DEFAULT_BIMODAL_MAX_DROP)?,
            }
        }
        other => return Err(Error::config("model.family", format!("expected parabola|bimodal, got `{other}`"))),
    };
    Ok(ModelConfig { family, noise_var })
}

fn resolve_policies(p: RawPolicies, mode: Mode, range: ActionRange) -> Result<Vec<PolicySpec>> {
    let names = p
        .enabled
        .unwrap_or_else(|| ["TBL", "LiF", "EF", "UR"].map(String::from).to_vec());
    let mut out = Vec::with_capacity(names.len());
    for (i, name) in names.iter().enumerate() {
        let spec = match name.as_str() {
            "UR" => PolicySpec::UniformRandom,
            "EF" => {
                let ef = p.epsilon_first.as_ref();
                let default_n = if mode == Mode::Ingest {
                    PolicySpec::FIELD_EXPLORATION
                } else {
                    PolicySpec::SIMULATION_EXPLORATION
                };
                PolicySpec::EpsilonFirst {
                    exploration: positive_int("policies.EF.exploration", ef.and_then(|e| e.exploration), default_n)?,
                    unclamped_vertex: ef.and_then(|e| e.unclamped_vertex).unwrap_or(false),
                }
            }
            "TBL" => {
                let tbl = p.thompson.as_ref();
                let prior_p = tbl.and_then(|t| t.prior_p).unwrap_or(PolicySpec::PRIOR_P);
                if (0..3).any(|r| (0..3).any(|c| prior_p[r][c] != prior_p[c][r])) {
                    return Err(Error::config("policies.TBL.prior_p", "must be symmetric"));
                }
                PolicySpec::Thompson {
                    prior_j: tbl.and_then(|t| t.prior_j).unwrap_or(PolicySpec::PRIOR_J),
                    prior_p,
                    sigma2: positive_real("policies.TBL.sigma2", tbl.and_then(|t| t.sigma2), 1.0)?,
                    unclamped_vertex: tbl.and_then(|t| t.unclamped_vertex).unwrap_or(false),
                }
            }
            "LiF" => {
                let lif = p.lock_in.as_ref();
                let a0 = lif.and_then(|l| l.a0);
                if let Some(a) = a0 {
                    if !a.is_finite() {
                        return Err(Error::config("policies.LiF.a0", "must be finite"));
                    }
                }
                PolicySpec::LockIn {
                    a0,
                    amplitude: positive_real("policies.LiF.amplitude", lif.and_then(|l| l.amplitude), 0.05)?,
                    window: positive_int("policies.LiF.window", lif.and_then(|l| l.window), 50)?,
                    gamma: positive_real("policies.LiF.gamma", lif.and_then(|l| l.gamma), 0.1)?,
                    omega: positive_real("policies.LiF.omega", lif.and_then(|l| l.omega), 1.0)?,
                }
            }
            "FIXED" => {
                let action = p
                    .fixed
                    .as_ref()
                    .and_then(|f| f.action)
                    .unwrap_or(0.5 * (range.lo() + range.hi()));
                if !action.is_finite() {
                    return Err(Error::config("policies.FIXED.action", "must be finite"));
                }
                PolicySpec::Fixed { action }
            }
            other => {
                return Err(Error::config(
                    format!("policies.use[{i}]"),
                    format!("unknown policy `{other}` (expected UR, EF, TBL, LiF or FIXED)"),
                ))
            }
        };
        out.push(spec);
    }
    Ok(out)
}
