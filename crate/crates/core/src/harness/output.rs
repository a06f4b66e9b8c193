use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{stream_for, ExperimentConfig, Mode, ResultSet, RunError, SEED_SCHEME};
use crate::error::Result;
use crate::replay::save_stream;
use crate::reward_models::RewardModel;

/// `online_<policy>.csv` or `<mode>_delta<δ>_<policy>.csv`.
pub fn aggregate_file_name(mode: Mode, policy: &str, delta: Option<f64>) -> String {
    match delta {
        None => format!("{}_{policy}.csv", mode.as_str()),
        Some(d) => format!("{}_delta{}_{policy}.csv", mode.as_str(), d),
    }
}

/// `rank_online.csv` or `rank_<mode>_delta<δ>.csv`.
pub fn rank_file_name(mode: Mode, delta: Option<f64>) -> String {
    match delta {
        None => format!("rank_{}.csv", mode.as_str()),
        Some(d) => format!("rank_{}_delta{}.csv", mode.as_str(), d),
    }
}

#[derive(Debug, Serialize)]
struct SeriesManifest<'a> {
    policy: &'a str,
    delta: Option<f64>,
    metric: &'a str,
    file: String,
    runs: usize,
    failed: usize,
    t_values: &'a [Option<usize>],
}

/// Contents of `manifest.json`.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a ExperimentConfig,
    master_seed: u64,
    seed_scheme: &'static str,
    policy_ids: Vec<(&'static str, String)>,
    series: Vec<SeriesManifest<'a>>,
    rank_tables: Vec<String>,
    models: &'a [Option<RewardModel>],
    errors: &'a [RunError],
    warnings: &'a [String],
}

impl<'a> Manifest<'a> {
    pub fn new(results: &'a ResultSet) -> Self {
        let cfg = &results.config;
        Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            config: cfg,
            master_seed: cfg.seed,
            seed_scheme: SEED_SCHEME,
            policy_ids: cfg
                .policies
                .iter()
                .map(|p| (p.label(), format!("{:#018x}", crate::rng::stable_id(p.label()))))
                .collect(),
            series: results
                .series
                .iter()
                .map(|s| SeriesManifest {
                    policy: &s.policy,
                    delta: s.delta,
                    metric: match s.metric {
                        crate::metrics::Metric::Regret => "cumulative_regret",
                        crate::metrics::Metric::Reward => "cumulative_reward",
                    },
                    file: aggregate_file_name(cfg.mode, &s.policy, s.delta),
                    runs: s.aggregate.runs,
                    failed: s.t_values.iter().filter(|t| t.is_none()).count(),
                    t_values: &s.t_values,
                })
                .collect(),
            rank_tables: results.ranks.iter().map(|r| rank_file_name(cfg.mode, r.delta)).collect(),
            models: &results.models,
            errors: &results.errors,
            warnings: &results.warnings,
        }
    }
}

/// Writes every artifact of `results` into `dir` (created if missing) and
/// returns the paths written, in order.
pub fn write_results(results: &ResultSet, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mode = results.config.mode;
    let mut written = Vec::new();

    for s in &results.series {
        let path = dir.join(aggregate_file_name(mode, &s.policy, s.delta));
        s.aggregate.write_csv(&path)?;
        written.push(path);
    }
    for r in &results.ranks {
        let path = dir.join(rank_file_name(mode, r.delta));
        r.table.write_csv(&path)?;
        written.push(path);
    }

    if results.config.save_streams && mode == Mode::Offline {
        let sdir = dir.join("streams");
        fs::create_dir_all(&sdir)?;
        for (rep, model) in results.models.iter().enumerate() {
            if let Some(model) = model {
                let path = sdir.join(format!("stream_rep{rep:05}.csv"));
                save_stream(&stream_for(&results.config, rep, model)?, &path)?;
                written.push(path);
            }
        }
    }

    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&Manifest::new(results))?;
    text.push('\n');
    fs::write(&path, text)?;
    written.push(path);
    Ok(written)
}
