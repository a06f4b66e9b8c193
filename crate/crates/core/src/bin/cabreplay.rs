use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cabreplay::harness::{self, Mode, Overrides};
use cabreplay::replay::{acceptance_probability, generate_logged_stream, required_log_length, save_stream};
use cabreplay::reward_models::{ActionRange, ModelFamily};
use cabreplay::rng::rng_for;

#[derive(Parser)]
#[command(name = "cabreplay", version, about = "Offline replay evaluation of continuous-armed bandit policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Online,
    Offline,
    Ingest,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Online => Mode::Online,
            ModeArg::Offline => Mode::Offline,
            ModeArg::Ingest => Mode::Ingest,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Parabola,
    Bimodal,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write aggregates, rank tables and a manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; 0 uses all cores. Does not affect results.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Parse and validate a config, then print the resolved settings.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Log length needed for an expected number of accepted events.
    Sizing {
        #[arg(long = "t-prime")]
        t_prime: u64,
        #[arg(long)]
        delta: f64,
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
        range: Vec<f64>,
    },
    /// Write a synthetic uniformly-logged stream drawn from a random model.
    Generate {
        #[arg(long)]
        length: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "parabola")]
        family: FamilyArg,
        #[arg(long, default_value_t = 0.01)]
        noise_var: f64,
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true, default_values_t = [0.0, 1.0])]
        range: Vec<f64>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> cabreplay::Result<()> {
    match cmd {
        Command::Run { config, mode, seed, out, workers } => {
            let ov = Overrides { mode: mode.map(Mode::from), seed, output: out, workers };
            let cfg = harness::parse_config_with(&config, &ov)?;
            let results = harness::run(&cfg)?;
            let written = harness::write_results(&results, &cfg.output)?;
            for r in &results.ranks {
                match r.delta {
                    Some(d) => println!("{} delta={d} t={}:", cfg.mode.as_str(), r.table.t_eval),
                    None => println!("{} t={}:", cfg.mode.as_str(), r.table.t_eval),
                }
                print!("{}", r.table);
            }
            if !results.errors.is_empty() {
                println!("{} failed run(s); see manifest.json", results.errors.len());
            }
            println!("wrote {} files to {}", written.len(), cfg.output.display());
        }
        Command::Validate { config } => {
            let cfg = harness::parse_config(&config)?;
            println!("{}: ok", config.display());
            println!("  mode         {}", cfg.mode.as_str());
            println!("  repetitions  {}", cfg.repetitions);
            println!("  length       {}", cfg.length);
            if cfg.mode != Mode::Online {
                println!("  deltas       {:?}", cfg.deltas);
            }
            println!("  seed         {}", cfg.seed);
            println!("  t_eval       {}", cfg.t_eval);
            println!("  range        [{}, {}]", cfg.range.lo(), cfg.range.hi());
            if let Some(m) = &cfg.model {
                println!("  model        {:?}, noise_var {}", m.family, m.noise_var);
            }
            if let Some(s) = &cfg.stream {
                println!("  stream       {}", s.display());
            }
            for p in &cfg.policies {
                println!("  policy       {p:?}");
            }
        }
        Command::Sizing { t_prime, delta, range } => {
            let range = ActionRange::new(range[0], range[1])?;
            let l = required_log_length(t_prime, delta, range)?;
            println!("{l}");
            log::info!("acceptance probability {}", acceptance_probability(delta, range));
        }
        Command::Generate { length, out, seed, family, noise_var, range } => {
            let range = ActionRange::new(range[0], range[1])?;
            let family = match family {
                FamilyArg::Parabola => ModelFamily::Parabola { scale: ModelFamily::DEFAULT_PARABOLA_SCALE },
                FamilyArg::Bimodal => ModelFamily::Bimodal { max_drop: ModelFamily::DEFAULT_BIMODAL_MAX_DROP },
            };
            let model = family.draw(&mut rng_for(seed, &[1]), range, noise_var)?;
            let stream = generate_logged_stream(&model, length, &mut rng_for(seed, &[2]))?;
            save_stream(&stream, &out)?;
            let (a_star, r_star) = model.optimum();
            println!("wrote {length} events to {} (optimum a*={a_star:.4}, f(a*)={r_star:.4})", out.display());
        }
    }
    Ok(())
}
