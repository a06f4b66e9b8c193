//! Experiment runners: online simulation, offline δ-sweep replay over
//! simulated logs, and replay over an ingested field stream.
//!
//! Each runner returns a [`ResultSet`] in memory; [`write_results`] turns it
//! into files. Repetitions run on a rayon pool in fixed-size chunks and are
//! folded into the aggregates in repetition order, so the output does not
//! depend on the number of workers.
//!
//! # Seeds
//!
//! Every random stream is derived from the master seed by
//! [`derive_seed`](crate::rng::derive_seed) over a path:
//!
//! | stream                      | path                                          |
//! |-----------------------------|-----------------------------------------------|
//! | reward model of rep `r`     | `[mode, r, MODEL]`                            |
//! | logged stream of rep `r`    | `[mode, r, STREAM]`                           |
//! | policy initial state        | `[mode, r, id(policy), bits(δ), POLICY_INIT]` |
//! | policy proposals            | `[mode, r, id(policy), bits(δ), PROPOSAL]`    |
//! | online reward noise         | `[mode, r, id(policy), 0, NOISE]`             |
//!
//! `id` is the FNV-1a hash of the policy label, so adding or reordering
//! policies leaves the other policies' streams untouched. Online runs use
//! `bits(δ) = 0`.

mod config;
mod output;

pub use config::{parse_config, parse_config_str, parse_config_with, ExperimentConfig, Mode, ModelConfig, Overrides};
pub use output::{aggregate_file_name, rank_file_name, write_results, Manifest};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{
    cumulative_regret, cumulative_regret_realized, cumulative_reward, rank_at, Metric, RankTable, RunAccumulator,
    RunAggregate,
};
use crate::policies::{Policy, PolicySpec};
use crate::replay::{acceptance_probability, generate_logged_stream, load_stream, replay_cab, LoggedStream, ReplayConfig, Trace};
use crate::reward_models::RewardModel;
use crate::rng::{rng_for, stable_id, Role, SimRng};

/// Repetitions handed to the pool at a time. Bounds memory to one chunk of
/// curves per series while keeping all workers busy.
const CHUNK: usize = 32;

/// Human-readable description of the seed derivation, echoed in the manifest.
pub const SEED_SCHEME: &str = "ChaCha8Rng seeded with derive_seed(master, path): SplitMix64 fold over \
    path; model [mode, rep, 1]; stream [mode, rep, 2]; policy init [mode, rep, fnv1a(policy), f64_bits(delta), 3]; \
    proposals [mode, rep, fnv1a(policy), f64_bits(delta), 4]; online noise [mode, rep, fnv1a(policy), 0, 5]; \
    mode tags online=1 offline=2 ingest=3";

/// One aggregated curve: a policy at one δ (or online).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub policy: String,
    pub delta: Option<f64>,
    pub metric: Metric,
    pub aggregate: RunAggregate,
    /// Accepted interactions per repetition; `None` for failed runs.
    pub t_values: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunError {
    pub repetition: usize,
    /// `None` when the failure is shared by every policy of the repetition
    /// (e.g. the reward model could not be drawn).
    pub policy: Option<String>,
    pub delta: Option<f64>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankResult {
    pub delta: Option<f64>,
    pub table: RankTable,
}

/// Everything an experiment produced, before serialisation.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultSet {
    pub config: ExperimentConfig,
    /// Ordered by policy (config order), then δ (config order).
    pub series: Vec<Series>,
    /// One per δ (offline, ingest) or a single table (online).
    pub ranks: Vec<RankResult>,
    pub errors: Vec<RunError>,
    pub warnings: Vec<String>,
    /// Ground-truth model of each repetition (`None` where drawing failed).
    /// Empty in ingest mode.
    pub models: Vec<Option<RewardModel>>,
}

impl ResultSet {
    pub fn series(&self, policy: &str, delta: Option<f64>) -> Option<&Series> {
        self.series.iter().find(|s| s.policy == policy && s.delta == delta)
    }

    pub fn rank_table(&self, delta: Option<f64>) -> Option<&RankTable> {
        self.ranks.iter().find(|r| r.delta == delta).map(|r| &r.table)
    }

    /// Mean accepted length over successful runs of one series.
    pub fn mean_t(&self, policy: &str, delta: Option<f64>) -> Option<f64> {
        let s = self.series(policy, delta)?;
        let ts: Vec<usize> = s.t_values.iter().flatten().copied().collect();
        (!ts.is_empty()).then(|| ts.iter().sum::<usize>() as f64 / ts.len() as f64)
    }
}

/// Dispatches on `config.mode`.
pub fn run(config: &ExperimentConfig) -> Result<ResultSet> {
    match config.mode {
        Mode::Online => run_online(config),
        Mode::Offline => run_offline(config),
        Mode::Ingest => run_ingest(config),
    }
}

/// Plays `policy` against `model` for `horizon` steps.
pub fn simulate_online<P: Policy + ?Sized>(
    policy: &mut P,
    model: &RewardModel,
    horizon: usize,
    proposal_rng: &mut SimRng,
    noise_rng: &mut SimRng,
) -> Result<Trace> {
    let mut trace = Trace::with_capacity(horizon);
    for t in 0..horizon as u64 {
        let a = policy.propose(proposal_rng)?;
        let r = model.sample_reward(a, noise_rng);
        policy.update(a, r)?;
        trace.push(t, a, r);
    }
    Ok(trace)
}

/// Draws the reward model of repetition `rep`.
pub fn model_for(config: &ExperimentConfig, rep: usize) -> Result<RewardModel> {
    let m = config
        .model
        .as_ref()
        .ok_or_else(|| Error::config("model", "this mode needs a model"))?;
    let mut rng = rng_for(config.seed, &[config.mode.tag(), rep as u64, Role::Model as u64]);
    m.family.draw(&mut rng, config.range, m.noise_var)
}

/// Regenerates the logged stream of offline repetition `rep`.
pub fn stream_for(config: &ExperimentConfig, rep: usize, model: &RewardModel) -> Result<LoggedStream> {
    let mut rng = rng_for(config.seed, &[config.mode.tag(), rep as u64, Role::Stream as u64]);
    generate_logged_stream(model, config.length, &mut rng)
}

fn policy_rngs(config: &ExperimentConfig, rep: usize, spec: &PolicySpec, delta: Option<f64>) -> (SimRng, SimRng) {
    let base = [
        config.mode.tag(),
        rep as u64,
        stable_id(spec.label()),
        delta.map_or(0, f64::to_bits),
    ];
    let with = |role: Role| {
        let mut p = base.to_vec();
        p.push(role as u64);
        rng_for(config.seed, &p)
    };
    (with(Role::PolicyInit), with(Role::Proposal))
}

/// Outcome of one (rep, series) cell.
type Cell = std::result::Result<Vec<f64>, String>;

/// Per-repetition output: one cell per series, or a shared failure.
type RepOutcome = std::result::Result<Vec<Cell>, String>;

struct SeriesKey {
    spec: PolicySpec,
    delta: Option<f64>,
}

fn series_keys(config: &ExperimentConfig, with_delta: bool) -> Vec<SeriesKey> {
    let mut keys = Vec::new();
    for spec in &config.policies {
        if with_delta {
            for &d in &config.deltas {
                keys.push(SeriesKey { spec: spec.clone(), delta: Some(d) });
            }
        } else {
            keys.push(SeriesKey { spec: spec.clone(), delta: None });
        }
    }
    keys
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))
}

/// Runs `rep_fn` for every repetition and folds the results in order.
fn execute<F>(
    config: &ExperimentConfig,
    keys: &[SeriesKey],
    metric: Metric,
    rep_fn: F,
) -> Result<(Vec<Series>, Vec<RunError>)>
where
    F: Fn(usize) -> RepOutcome + Sync,
{
    let pool = build_pool(config.workers)?;
    let mut accs: Vec<RunAccumulator> = keys.iter().map(|_| RunAccumulator::new()).collect();
    let mut t_values: Vec<Vec<Option<usize>>> = keys.iter().map(|_| Vec::with_capacity(config.repetitions)).collect();
    let mut errors = Vec::new();

    for start in (0..config.repetitions).step_by(CHUNK) {
        let end = (start + CHUNK).min(config.repetitions);
        let outcomes: Vec<RepOutcome> = pool.install(|| (start..end).into_par_iter().map(&rep_fn).collect());
        for (rep, outcome) in (start..end).zip(outcomes) {
            match outcome {
                Err(message) => {
                    log::warn!("repetition {rep} failed: {message}");
                    errors.push(RunError { repetition: rep, policy: None, delta: None, message });
                    t_values.iter_mut().for_each(|t| t.push(None));
                }
                Ok(cells) => {
                    for (k, cell) in cells.into_iter().enumerate() {
                        match cell {
                            Ok(curve) => {
                                t_values[k].push(Some(curve.len()));
                                if curve.is_empty() {
                                    accs[k].push_empty();
                                } else {
                                    accs[k].push(&curve);
                                }
                            }
                            Err(message) => {
                                log::warn!(
                                    "repetition {rep}, policy {}, delta {:?}: {message}",
                                    keys[k].spec.label(),
                                    keys[k].delta
                                );
                                errors.push(RunError {
                                    repetition: rep,
                                    policy: Some(keys[k].spec.label().to_string()),
                                    delta: keys[k].delta,
                                    message,
                                });
                                t_values[k].push(None);
                            }
                        }
                    }
                }
            }
        }
    }

    let series = keys
        .iter()
        .zip(accs)
        .zip(t_values)
        .map(|((key, acc), t_values)| Series {
            policy: key.spec.label().to_string(),
            delta: key.delta,
            metric,
            aggregate: acc.finish(),
            t_values,
        })
        .collect();
    Ok((series, errors))
}

fn rank_tables(config: &ExperimentConfig, series: &[Series], metric: Metric, deltas: &[Option<f64>]) -> Vec<RankResult> {
    deltas
        .iter()
        .map(|&delta| {
            let aggs: Vec<(&str, RunAggregate)> = series
                .iter()
                .filter(|s| s.delta == delta)
                .map(|s| (s.policy.as_str(), s.aggregate.clone()))
                .collect();
            RankResult { delta, table: rank_at(&aggs, config.t_eval, metric) }
        })
        .collect()
}

fn regret_curve(config: &ExperimentConfig, trace: &Trace, model: &RewardModel) -> Vec<f64> {
    if config.realized_regret {
        cumulative_regret_realized(trace, model).into_inner()
    } else {
        cumulative_regret(trace, model).into_inner()
    }
}

fn require_mode(config: &ExperimentConfig, mode: Mode) -> Result<()> {
    config.validate()?;
    if config.mode != mode {
        return Err(Error::config(
            "experiment.mode",
            format!("expected {}, got {}", mode.as_str(), config.mode.as_str()),
        ));
    }
    Ok(())
}

fn models(config: &ExperimentConfig) -> Vec<Option<RewardModel>> {
    (0..config.repetitions).map(|rep| model_for(config, rep).ok()).collect()
}

/// Online benchmark: each repetition draws a fresh model and plays every
/// policy against it for `length` steps. Curves are cumulative regret.
pub fn run_online(config: &ExperimentConfig) -> Result<ResultSet> {
    require_mode(config, Mode::Online)?;
    let keys = series_keys(config, false);
    let (series, errors) = execute(config, &keys, Metric::Regret, |rep| {
        let model = model_for(config, rep).map_err(|e| e.to_string())?;
        Ok(keys
            .iter()
            .map(|key| {
                let (mut init, mut proposal) = policy_rngs(config, rep, &key.spec, None);
                let mut noise = rng_for(
                    config.seed,
                    &[config.mode.tag(), rep as u64, stable_id(key.spec.label()), 0, Role::Noise as u64],
                );
                let mut policy = key.spec.build(config.range, &mut init).map_err(|e| e.to_string())?;
                let trace = simulate_online(&mut policy, &model, config.length, &mut proposal, &mut noise)
                    .map_err(|e| e.to_string())?;
                Ok(regret_curve(config, &trace, &model))
            })
            .collect())
    })?;
    let ranks = rank_tables(config, &series, Metric::Regret, &[None]);
    Ok(ResultSet { config: config.clone(), series, ranks, errors, warnings: Vec::new(), models: models(config) })
}

/// Offline δ sweep: each repetition draws a fresh model and a uniformly
/// logged stream of length `length`; every (policy, δ) pair replays that
/// stream with a fresh policy. Curves are cumulative regret over the accepted
/// steps, so their lengths vary and aggregates carry survivor counts.
pub fn run_offline(config: &ExperimentConfig) -> Result<ResultSet> {
    require_mode(config, Mode::Offline)?;
    let keys = series_keys(config, true);
    let (series, errors) = execute(config, &keys, Metric::Regret, |rep| {
        let model = model_for(config, rep).map_err(|e| e.to_string())?;
        let stream = stream_for(config, rep, &model).map_err(|e| e.to_string())?;
        Ok(keys
            .iter()
            .map(|key| {
                let (mut init, mut proposal) = policy_rngs(config, rep, &key.spec, key.delta);
                let mut policy = key.spec.build(config.range, &mut init).map_err(|e| e.to_string())?;
                let cfg = ReplayConfig::unchecked(key.delta.expect("offline series carry a delta"));
                let trace = replay_cab(&mut policy, &stream, &cfg, &mut proposal).map_err(|e| e.to_string())?;
                Ok(regret_curve(config, &trace, &model))
            })
            .collect())
    })?;
    let deltas: Vec<Option<f64>> = config.deltas.iter().copied().map(Some).collect();
    let ranks = rank_tables(config, &series, Metric::Regret, &deltas);
    let warnings = short_log_warnings(config, config.length);
    Ok(ResultSet { config: config.clone(), series, ranks, errors, warnings, models: models(config) })
}

/// Replays a fixed field stream `repetitions` times per (policy, δ), varying
/// only the policies' randomness. Only cumulative reward is reported: there is
/// no ground-truth model, so regret is undefined.
pub fn run_ingest(config: &ExperimentConfig) -> Result<ResultSet> {
    require_mode(config, Mode::Ingest)?;
    let path = config.stream.as_ref().ok_or_else(|| Error::config("experiment.stream", "missing"))?;
    let stream = load_stream(path, config.range)?;
    run_ingest_stream(config, &stream)
}

/// [`run_ingest`] over an already-loaded stream.
pub fn run_ingest_stream(config: &ExperimentConfig, stream: &LoggedStream) -> Result<ResultSet> {
    require_mode(config, Mode::Ingest)?;
    let keys = series_keys(config, true);
    let (series, errors) = execute(config, &keys, Metric::Reward, |rep| {
        Ok(keys
            .iter()
            .map(|key| {
                let (mut init, mut proposal) = policy_rngs(config, rep, &key.spec, key.delta);
                let mut policy = key.spec.build(config.range, &mut init).map_err(|e| e.to_string())?;
                let cfg = ReplayConfig::unchecked(key.delta.expect("ingest series carry a delta"));
                let trace = replay_cab(&mut policy, stream, &cfg, &mut proposal).map_err(|e| e.to_string())?;
                Ok(cumulative_reward(&trace))
            })
            .collect())
    })?;
    let deltas: Vec<Option<f64>> = config.deltas.iter().copied().map(Some).collect();
    let ranks = rank_tables(config, &series, Metric::Reward, &deltas);
    let warnings = short_log_warnings(config, stream.len());
    Ok(ResultSet { config: config.clone(), series, ranks, errors, warnings, models: Vec::new() })
}

fn short_log_warnings(config: &ExperimentConfig, log_length: usize) -> Vec<String> {
    config
        .deltas
        .iter()
        .filter_map(|&d| {
            let expected = acceptance_probability(d, config.range) * log_length as f64;
            (expected < config.t_eval as f64).then(|| {
                let msg = format!(
                    "delta {d}: expected accepted length {expected:.1} is below t_eval {}; rank table will likely be n/a",
                    config.t_eval
                );
                log::warn!("{msg}");
                msg
            })
        })
        .collect()
}
