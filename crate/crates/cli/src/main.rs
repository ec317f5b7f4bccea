use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cranbnb::bench::{
    check_config, cmd_eval, cmd_gen, cmd_label, cmd_report, cmd_train, DatasetLayout, EvalOptions, ExperimentConfig,
};
use cranbnb::policy::load_policy;

#[derive(Parser)]
#[command(name = "cranbnb", version, about = "Learned-pruning branch-and-bound for Cloud-RAN power minimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON). Defaults to the dataset's own config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset / working directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Node budget per branch-and-bound run.
    #[arg(long)]
    budget_nodes: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train / validation / test realizations.
    Gen(Common),
    /// Solve training and validation instances exactly and store traces.
    Label(Common),
    /// Train the pruning policy.
    Train(Common),
    /// Evaluate all methods on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Policy file; defaults to `<out>/policy.json`.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Skip the exact reference (no gaps or speedups).
        #[arg(long)]
        no_exact: bool,
    },
    /// Aggregate a results CSV into per-TSINR tables.
    Report {
        #[arg(long)]
        out: PathBuf,
        /// Results CSV; defaults to `<out>/results.csv`.
        #[arg(long)]
        results: Option<PathBuf>,
    },
}

fn read_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

/// The dataset's config, or the given one after checking it matches.
fn dataset_config(common: &Common, layout: &DatasetLayout) -> Result<ExperimentConfig> {
    let manifest = layout
        .load_manifest()
        .with_context(|| format!("no dataset in {}; run `gen` first", layout.root.display()))?;
    match &common.config {
        Some(p) => {
            let cfg = read_config(Some(p))?;
            check_config(&manifest, &cfg)?;
            Ok(cfg)
        }
        None => Ok(manifest.config),
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Gen(common) => {
            let mut cfg = read_config(common.config.as_deref())?;
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            let m = cmd_gen(&cfg, &common.out)?;
            log::info!(
                "dataset {}: {} train / {} validation / {} test, {} discarded, config {}",
                common.out.display(),
                m.train.len(),
                m.validation.len(),
                m.test.len(),
                m.discarded.len(),
                m.config_hash
            );
        }
        Command::Label(common) => {
            let layout = DatasetLayout::new(&common.out);
            let cfg = dataset_config(&common, &layout)?;
            let mut limits = cfg.limits;
            if let Some(n) = common.budget_nodes {
                limits.max_nodes = Some(n);
            }
            let report = cmd_label(&layout, &limits, cfg.execution)?;
            let labeled = report.entries.iter().filter(|e| e.optimal_objective.is_some()).count();
            log::info!("labeled {labeled} of {} instances", report.entries.len());
        }
        Command::Train(common) => {
            let layout = DatasetLayout::new(&common.out);
            let cfg = dataset_config(&common, &layout)?;
            let mut run = cfg.train_run_config();
            if let Some(seed) = common.seed {
                run.seed = seed;
            }
            if let Some(n) = common.budget_nodes {
                run.limits.max_nodes = Some(n);
            }
            let (model, report) = cmd_train(&layout, &run)?;
            log::info!(
                "chosen policy k={} C={} gamma={} ({} support vectors, {} samples)",
                report.chosen_k,
                report.chosen_hyper.c,
                report.chosen_hyper.gamma,
                model.support_vectors.len(),
                report.total_samples
            );
        }
        Command::Eval {
            common,
            policy,
            no_exact,
        } => {
            let layout = DatasetLayout::new(&common.out);
            let cfg = dataset_config(&common, &layout)?;
            if common.seed.is_some() {
                bail!("--seed has no effect on eval");
            }
            let policy_path = policy.unwrap_or_else(|| layout.policy());
            let model = if cfg.methods.contains(&cranbnb::bench::Method::Learned) {
                Some(load_policy(&policy_path)?)
            } else {
                None
            };
            let opts = EvalOptions {
                no_exact,
                budget_nodes: common.budget_nodes,
            };
            let (rows, summary) = cmd_eval(&layout, &cfg, model.as_ref(), &opts)?;
            log::info!("wrote {} rows to {}", rows.len(), layout.results().display());
            for s in &summary.overall {
                log::info!(
                    "{:>8}: power {:.3} W, socp {:.1}, gap {}, speedup {}",
                    s.method.name(),
                    s.mean_power_w.unwrap_or(f64::NAN),
                    s.mean_socp_solves,
                    s.mean_gap.map_or("-".into(), |g| format!("{:.4}", g)),
                    s.mean_speedup.map_or("-".into(), |v| format!("{v:.2}")),
                );
            }
        }
        Command::Report { out, results } => {
            let layout = DatasetLayout::new(&out);
            let results = results.unwrap_or_else(|| layout.results());
            let table = cmd_report(&results, &layout.report())?;
            log::info!("wrote {} aggregate rows to {}", table.len(), layout.report().display());
        }
    }
    Ok(())
}
