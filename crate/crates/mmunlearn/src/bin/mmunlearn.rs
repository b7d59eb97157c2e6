use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mmunlearn::baselines::BaselineConfig;
use mmunlearn::error::Error;
use mmunlearn::harness::{
    self, bundle_for, original_model_for, run_experiment_config, ExperimentConfig,
};
use mmunlearn::model::save_checkpoint;
use mmunlearn::synthdata::sample_deletion_set;
use mmunlearn::unlearn::{multidelete_unlearn, UnlearnConfig};

#[derive(Parser)]
#[command(name = "mmunlearn", version, about = "Multimodal unlearning experiments on synthetic data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config JSON (defaults to the built-in config).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the first configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset bundle.
    Gen(Common),
    /// Train the original model f on the full train split.
    Train(Common),
    /// Run MultiDelete unlearning; writes checkpoint and trace.
    Unlearn(Common),
    /// Run one baseline method.
    Baseline {
        #[command(flatten)]
        common: Common,
        /// retrain | finetune | neggrad | dtd
        #[arg(long)]
        method: String,
    },
    /// Run the full experiment grid and evaluate every cell.
    Eval(Common),
    /// Membership-inference ratio of MultiDelete against the original model.
    Mi(Common),
    /// Ablation grid over the unlearning objective terms.
    Ablate(Common),
    /// Timing sweep over deletion sizes.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated deletion sizes (strictly increasing).
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
    },
    /// Render tables from a results CSV.
    Report {
        #[command(flatten)]
        common: Common,
        /// Path to results.csv (defaults to <output_dir>/results.csv).
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Print the default experiment config JSON.
    DefaultConfig,
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        if cfg.seeds.is_empty() {
            cfg.seeds = vec![seed];
        } else {
            cfg.seeds[0] = seed;
        }
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn mask_seed(seed: u64, size: usize) -> u64 {
    seed ^ (size as u64).wrapping_mul(0x9e3779b97f4a7c15)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Gen(common) => {
            let cfg = load_config(&common)?;
            let (bundle, path) = bundle_for(&cfg)?;
            println!("bundle: {} pairs, cached at {}", bundle.pairs.len(), path.display());
        }
        Command::Train(common) => {
            let cfg = load_config(&common)?;
            let (bundle, _) = bundle_for(&cfg)?;
            let (_, path) = original_model_for(&cfg, &bundle)?;
            println!("original model checkpoint: {}", path.display());
        }
        Command::Unlearn(common) => {
            let cfg = load_config(&common)?;
            let (mut bundle, _) = bundle_for(&cfg)?;
            let (f, _) = original_model_for(&cfg, &bundle)?;
            let seed = cfg.seeds[0];
            let size = cfg.deletion_sizes.first().copied().unwrap_or(200);
            bundle.deletion_mask = sample_deletion_set(&bundle, size, mask_seed(seed, size))?;
            let ucfg = UnlearnConfig { seed, ..cfg.unlearn.clone().unwrap_or_default() };
            let (f_prime, trace) = multidelete_unlearn(&f, &bundle, &ucfg)?;
            fs::create_dir_all(&cfg.output_dir)?;
            let ckpt = cfg.output_dir.join("multidelete.json");
            fs::write(&ckpt, save_checkpoint(&f_prime)?)?;
            let trace_path = cfg.output_dir.join("multidelete_trace.csv");
            fs::write(&trace_path, trace.to_csv()?)?;
            println!(
                "unlearned in {:.2}s over {} steps (selected step {}); checkpoint {}",
                trace.wall_time_s,
                trace.rows.len(),
                trace.selected_step,
                ckpt.display()
            );
        }
        Command::Baseline { common, method } => {
            let cfg = load_config(&common)?;
            let (mut bundle, _) = bundle_for(&cfg)?;
            let (f, _) = original_model_for(&cfg, &bundle)?;
            let seed = cfg.seeds[0];
            let size = cfg.deletion_sizes.first().copied().unwrap_or(200);
            bundle.deletion_mask = sample_deletion_set(&bundle, size, mask_seed(seed, size))?;
            let bcfg: BaselineConfig = cfg
                .baselines
                .iter()
                .find(|b| b.method.name() == method)
                .cloned()
                .ok_or_else(|| Error::Config(format!("no baseline config for method {method}")))?;
            let bcfg = BaselineConfig { seed, ..bcfg };
            let m = mmunlearn::baselines::run_baseline(&f, &bundle, &cfg.train, &bcfg)?;
            fs::create_dir_all(&cfg.output_dir)?;
            let ckpt = cfg.output_dir.join(format!("{method}.json"));
            fs::write(&ckpt, save_checkpoint(&m)?)?;
            println!("baseline {method} checkpoint: {}", ckpt.display());
        }
        Command::Eval(common) => {
            let cfg = load_config(&common)?;
            let manifest = run_experiment_config(&cfg)?;
            let failed: Vec<_> =
                manifest.cells.iter().filter(|c| c.status == "failed").collect();
            if let Some(csv) = &manifest.results_csv {
                println!("results: {}", csv.display());
            }
            println!(
                "manifest: {} ({} cells, {} failed)",
                cfg.output_dir.join("manifest.json").display(),
                manifest.cells.len(),
                failed.len()
            );
            if !failed.is_empty() {
                for c in failed {
                    eprintln!(
                        "cell {}/{} size {} seed {} failed: {}",
                        c.method,
                        c.variant,
                        c.size,
                        c.seed,
                        c.error.as_deref().unwrap_or("unknown")
                    );
                }
                return Err(Error::TrainingFailure("one or more cells failed".into()));
            }
        }
        Command::Mi(common) => {
            let cfg = load_config(&common)?;
            let (mut bundle, _) = bundle_for(&cfg)?;
            let (f, _) = original_model_for(&cfg, &bundle)?;
            let seed = cfg.seeds[0];
            let size = cfg.deletion_sizes.first().copied().unwrap_or(200);
            bundle.deletion_mask = sample_deletion_set(&bundle, size, mask_seed(seed, size))?;
            let ucfg = UnlearnConfig { seed, ..cfg.unlearn.clone().unwrap_or_default() };
            let (f_prime, _) = multidelete_unlearn(&f, &bundle, &ucfg)?;
            let ratio = mmunlearn::eval::mi_ratio(&f, &f_prime, &bundle, seed)?;
            let self_ratio = mmunlearn::eval::mi_ratio(&f, &f, &bundle, seed)?;
            println!("mi_ratio(multidelete) = {ratio:.4}");
            println!("mi_ratio(f, f) = {self_ratio:.4}");
        }
        Command::Ablate(common) => {
            let cfg = load_config(&common)?;
            let out = cfg.output_dir.join("ablation.csv");
            let reports = harness::run_ablation_for(&cfg, &out)?;
            println!("{:<8}{:>8}{:>8}", "variant", "D_Test", "D_f");
            for r in &reports {
                println!("{:<8}{:>8.1}{:>8.1}", r.variant, r.d_test_perf, r.d_f_perf);
            }
            println!("written to {}", out.display());
        }
        Command::Sweep { common, sizes } => {
            let cfg = load_config(&common)?;
            let sizes = sizes.unwrap_or_else(|| vec![50, 100, 150, 200, 250]);
            let rows = harness::timing_sweep(&cfg, &sizes)?;
            harness::write_sweep_outputs(&rows, &cfg.output_dir)?;
            for r in &rows {
                println!("{:<12}{:>6}{:>10.3}s", r.method, r.size, r.seconds);
            }
            println!("sweep artifacts in {}", cfg.output_dir.display());
        }
        Command::Report { common, results } => {
            let cfg = load_config(&common)?;
            let path = results.unwrap_or_else(|| cfg.output_dir.join("results.csv"));
            let (text, csv) = harness::report(&path)?;
            print!("{text}");
            fs::create_dir_all(&cfg.output_dir)?;
            fs::write(cfg.output_dir.join("report.txt"), &text)?;
            fs::write(cfg.output_dir.join("report.csv"), &csv)?;
        }
        Command::DefaultConfig => {
            println!("{}", serde_json::to_string_pretty(&ExperimentConfig::default())?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidInput(_) | Error::SchemaVersion { .. } => {
                    ExitCode::from(1)
                }
                _ => ExitCode::from(2),
            }
        }
    }
}
