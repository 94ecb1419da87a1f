use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use modrl_ta::dfm::WeightsManifest;
use modrl_ta::error::{Error, Result, Stage, StageExt};
use modrl_ta::harness::artifacts::{self, *};
use modrl_ta::harness::{self, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "modrl",
    about = "Multi-objective traffic allocation experiments"
)]
struct Cli {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(short, long, global = true)]
    seed: Option<u64>,
    /// Directory for artifacts.
    #[arg(short, long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Log production traffic and write the position CTR table.
    BuildTable,
    /// Write cold-start transitions simulated from the logs.
    Simulate,
    /// Train and write a checkpoint plus the collected transitions.
    Train,
    /// Search fusion weights for the checkpoint in the output directory.
    Cem,
    /// Evaluate the checkpoint with the saved (or equal) weights.
    Evaluate,
    /// Run the full pipeline and write every artifact.
    Run,
    /// Run the five-row ablation table on one or more seeds.
    Ablation {
        /// Number of consecutive seeds starting at the configured one.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(out: &Path, rows: &[harness::MetricsRow]) -> Result<()> {
    write_metrics(&out.join(METRICS), rows)?;
    print!("{}", summary(rows));
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli).stage(Stage::Config)?;
    let out = cli.out.as_path();
    std::fs::create_dir_all(out)
        .map_err(|e| Error::io(out, e))
        .stage(Stage::Artifacts)?;
    let env = harness::make_env(&cfg).stage(Stage::Config)?;
    match &cli.command {
        Command::BuildTable => {
            let data = harness::log_traffic(&cfg, &env).stage(Stage::Logging)?;
            write_table(&out.join(CTR_TABLE), &data.table).stage(Stage::Artifacts)?;
            write_clicks(&out.join(CLICK_LOG), &data.log.clicks).stage(Stage::Artifacts)?;
            for (p, c) in data.table.as_slice().iter().enumerate() {
                println!(
                    "position {p}: ctr {c:.5} ({} impressions)",
                    data.table.impressions(p)
                );
            }
        }
        Command::Simulate => {
            let data = harness::log_traffic(&cfg, &env).stage(Stage::Logging)?;
            let sim = harness::simulate(&cfg, &data).stage(Stage::Simulation)?;
            write_transitions(&out.join(SIM_TRANSITIONS), &cfg, &sim).stage(Stage::Artifacts)?;
            println!("{} simulated transitions", sim.len());
        }
        Command::Train => {
            let data = harness::log_traffic(&cfg, &env).stage(Stage::Logging)?;
            let sim = harness::simulate(&cfg, &data).stage(Stage::Simulation)?;
            let trained = harness::train(&cfg, &env, &sim).stage(Stage::Training)?;
            write_config(&out.join(CONFIG), &cfg).stage(Stage::Artifacts)?;
            write_learner(&out.join(CHECKPOINT), &trained.learner).stage(Stage::Artifacts)?;
            write_transitions(&out.join(SIM_TRANSITIONS), &cfg, &sim).stage(Stage::Artifacts)?;
            write_transitions(&out.join(REAL_TRANSITIONS), &cfg, &trained.real)
                .stage(Stage::Artifacts)?;
            println!(
                "trained on {} simulated and {} real transitions",
                sim.len(),
                trained.real.len()
            );
        }
        Command::Cem => {
            let learner = read_learner(&out.join(CHECKPOINT), &cfg).stage(Stage::Artifacts)?;
            let mut search_cfg = cfg.clone();
            search_cfg.ablation.use_cem = true;
            let outcome = harness::search_weights(&search_cfg, &env, &learner)
                .stage(Stage::Fusion)?
                .ok_or_else(|| {
                    Error::InvalidConfig("weight search needs a per-objective ensemble".into())
                })
                .stage(Stage::Fusion)?;
            write_history(&out.join(CEM_HISTORY), &outcome.history).stage(Stage::Artifacts)?;
            let manifest = WeightsManifest {
                objectives: cfg.objective_ids(),
                weights: outcome.best.weights.clone(),
                score: outcome.best.score,
                fitness: format!("{:?}", cfg.cem.fitness),
            };
            write_weights(&out.join(WEIGHTS), &manifest).stage(Stage::Artifacts)?;
            for g in &outcome.history {
                println!(
                    "generation {:>3}: best {:.4} mean {:.4} mu {:?}",
                    g.generation, g.best_score, g.mean_score, g.mu
                );
            }
            println!(
                "best weights {:?} score {:.4}",
                outcome.best.weights.as_slice(),
                outcome.best.score
            );
        }
        Command::Evaluate => {
            let started = std::time::Instant::now();
            let learner = read_learner(&out.join(CHECKPOINT), &cfg).stage(Stage::Artifacts)?;
            let weights_path = out.join(WEIGHTS);
            let weights = if weights_path.exists() {
                read_weights(&weights_path).stage(Stage::Artifacts)?.weights
            } else {
                learner.default_weights()
            };
            let (returns, aucs) =
                harness::evaluate(&cfg, &env, &learner, &weights).stage(Stage::Evaluation)?;
            let row = harness::metrics_row(
                &cfg,
                &returns,
                &aucs,
                &weights,
                started.elapsed().as_secs_f64(),
            )
            .stage(Stage::Evaluation)?;
            emit(out, &[row]).stage(Stage::Artifacts)?;
        }
        Command::Run => {
            let result = harness::run_experiment(&cfg)?;
            artifacts::write_run(out, &cfg, &result).stage(Stage::Artifacts)?;
            print!("{}", summary(std::slice::from_ref(&result.metrics)));
        }
        Command::Ablation { seeds } => {
            let mut rows = Vec::new();
            for k in 0..*seeds {
                let mut c = cfg.clone();
                c.seed = cfg.seed.wrapping_add(k);
                info!("ablation seed {}", c.seed);
                rows.extend(harness::ablation_matrix(&c)?.into_iter().map(|r| r.metrics));
            }
            emit(out, &rows).stage(Stage::Artifacts)?;
            if *seeds > 1 {
                println!();
                for (label, median) in harness::median_combined(&rows) {
                    println!("median combined {label:<32} {median:.4}");
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = e.stage().map_or(1, Stage::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
