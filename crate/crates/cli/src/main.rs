//! `ccs`: train, ablate, probe, replay and plot cycle-consistent search runs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ccs_core::bottleneck::BottleneckMode;
use ccs_core::harness::{
    emit_plots, replay, run_ablation, run_experiment, run_leakage_probe, write_replay_csv, ExperimentConfig,
};
use ccs_core::reconstruct::ReconstructorKind;
use ccs_core::reward::RewardChannel;

#[derive(Parser)]
#[command(name = "ccs", version, about = "Cycle-consistent search experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one policy and write its run directory.
    Train(RunArgs),
    /// Train one policy per bottleneck mode on the same world and seed.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated modes; all four when omitted.
        #[arg(long, value_delimiter = ',')]
        modes: Vec<BottleneckMode>,
    },
    /// Score the question-copying policy with and without masking.
    ProbeLeakage(RunArgs),
    /// Recompute rewards for a saved run under another mode or reconstructor.
    Replay {
        /// Run directory written by `train`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        mode: Option<BottleneckMode>,
        /// oracle | lexical | remote:<url>
        #[arg(long, value_parser = parse_reconstructor)]
        reconstructor: Option<ReconstructorKind>,
        /// Output CSV; defaults to `<run>/replay.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split a metrics CSV into per-series CSVs.
    Plots {
        #[arg(long)]
        metrics: PathBuf,
        /// Output directory; defaults to the metrics file's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Flags shared by the training commands. Each overrides the config file.
#[derive(Args)]
struct RunArgs {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    mode: Option<BottleneckMode>,
    /// oracle | lexical | remote:<url>
    #[arg(long, value_parser = parse_reconstructor)]
    reconstructor: Option<ReconstructorKind>,
    /// cycle | gold-em | majority-vote
    #[arg(long)]
    channel: Option<RewardChannel>,
    #[arg(long)]
    steps: Option<usize>,
}

fn parse_reconstructor(s: &str) -> Result<ReconstructorKind, String> {
    ReconstructorKind::parse(s).map_err(|e| e.to_string())
}

impl RunArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(mode) = self.mode {
            cfg.reward.mode = mode;
        }
        if let Some(r) = &self.reconstructor {
            cfg.reward.reconstructor = r.clone();
        }
        if let Some(c) = self.channel {
            cfg.reward.channel = c;
        }
        if let Some(steps) = self.steps {
            cfg.grpo.steps = steps;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.resolve()?;
            let run = run_experiment(&cfg)?;
            let s = &run.summary;
            println!("run written to {}", run.output_dir.display());
            println!("config_hash {}", run.config_hash);
            println!(
                "reward first/last window {} -> {}",
                fmt_opt(s.first_window_reward),
                fmt_opt(s.last_window_reward)
            );
            println!(
                "held-out accuracy {} -> {}",
                fmt_opt(s.initial_eval_accuracy),
                fmt_opt(s.final_eval_accuracy)
            );
            println!("gold reads in training {}", s.gold_reads_training);
        }
        Command::Ablate { run, modes } => {
            let cfg = run.resolve()?;
            let modes = if modes.is_empty() {
                BottleneckMode::ALL.to_vec()
            } else {
                modes
            };
            let table = run_ablation(&cfg, &modes)?;
            println!("{:<20} {:>10} {:>10} {:>12}", "mode", "acc0", "acc", "mean_reward");
            for r in &table.rows {
                println!(
                    "{:<20} {:>10} {:>10} {:>12}",
                    r.mode.as_str(),
                    fmt_opt(r.initial_eval_accuracy),
                    fmt_opt(r.final_eval_accuracy),
                    fmt_opt(r.mean_reward)
                );
            }
        }
        Command::ProbeLeakage(args) => {
            let cfg = args.resolve()?;
            let report = run_leakage_probe(&cfg)?;
            let json = serde_json::to_string_pretty(&report)?;
            if args.out.is_some() {
                std::fs::create_dir_all(&cfg.output_dir)?;
                std::fs::write(cfg.output_dir.join("leakage.json"), format!("{json}\n"))?;
            }
            println!("{json}");
        }
        Command::Replay {
            run,
            mode,
            reconstructor,
            out,
        } => {
            let (cfg, records) = replay(&run, mode, reconstructor)?;
            let path = out.unwrap_or_else(|| run.join("replay.csv"));
            write_replay_csv(&path, &cfg.hash(), &records)?;
            let mean = records.iter().map(|r| r.reward).sum::<f64>() / records.len().max(1) as f64;
            println!(
                "{} trajectories replayed under {} / {}; mean reward {mean:.4}; written to {}",
                records.len(),
                cfg.reward.mode,
                cfg.reward.reconstructor.label(),
                path.display()
            );
        }
        Command::Plots { metrics, out } => {
            if !metrics.exists() {
                bail!("metrics file {} not found", metrics.display());
            }
            let dir = out.unwrap_or_else(|| metrics.parent().unwrap_or(Path::new(".")).to_path_buf());
            let files = emit_plots(&metrics, &dir)
                .with_context(|| format!("emitting plot series from {}", metrics.display()))?;
            println!("{}", files.reward.display());
            println!("{}", files.num_search.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
