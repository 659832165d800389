use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use oimsearch::experiment::{
    cmd_eval, cmd_gen, cmd_sweep, parse_sweep_values, ExperimentConfig, SweepAxis,
};
use oimsearch::gradcheck::{run_gradcheck, GradcheckOptions};
use oimsearch::trainer::LossKind;

#[derive(Parser)]
#[command(
    name = "oimsearch",
    version,
    about = "Online instance matching on synthetic person search"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config file).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)
                .with_context(|| format!("reading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compare analytic gradients with finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        cases: usize,
        /// Perturb the analytic gradients; the check must then fail.
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
    /// Generate a synthetic world and its detections.
    Gen {
        #[command(flatten)]
        common: Common,
    },
    /// Train an embedder and write a checkpoint plus metrics.
    Train {
        #[command(flatten)]
        common: Common,
        /// oim, softmax or softmax_pretrained.
        #[arg(long)]
        loss: Option<LossKind>,
    },
    /// Evaluate a checkpoint with CMC top-K and mAP.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Defaults to <out>/checkpoint.json.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// World written by `gen`; regenerated from the config when omitted.
        #[arg(long)]
        world: Option<PathBuf>,
        /// Comma-separated gallery sizes.
        #[arg(long, value_delimiter = ',')]
        gallery_sizes: Option<Vec<usize>>,
        /// Number of protocol replicates.
        #[arg(long, default_value_t = 5)]
        seeds: usize,
    },
    /// Sweep one axis over several seeds.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// subsample, dimension, gallery or recall.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values; `full` disables sub-sampling.
        #[arg(long)]
        values: String,
        /// Comma-separated master seeds.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long)]
        loss: Option<LossKind>,
        /// Gallery size used by the non-gallery axes.
        #[arg(long, value_delimiter = ',')]
        gallery_sizes: Option<Vec<usize>>,
    },
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Gradcheck {
            seed,
            cases,
            corrupt_gradient,
        } => {
            let opts = GradcheckOptions {
                seed,
                oim_cases: cases,
                corrupt: corrupt_gradient,
                ..GradcheckOptions::default()
            };
            let report = run_gradcheck(&opts)?;
            print_json(&report)?;
            for c in &report.checks {
                eprintln!(
                    "{} {}: max rel error {:.3e} (tol {:.0e}, {} cases)",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.max_rel_error,
                    c.tolerance,
                    c.cases
                );
            }
            Ok(report.passed)
        }
        Command::Gen { common } => {
            print_json(&cmd_gen(&common.load()?)?)?;
            Ok(true)
        }
        Command::Train { common, loss } => {
            let mut cfg = common.load()?;
            if let Some(l) = loss {
                cfg.train.loss_kind = l;
            }
            let (report, _) = oimsearch::experiment::cmd_train(&cfg)?;
            print_json(&report)?;
            Ok(true)
        }
        Command::Eval {
            common,
            checkpoint,
            world,
            gallery_sizes,
            seeds,
        } => {
            let mut cfg = common.load()?;
            if let Some(g) = gallery_sizes {
                cfg.eval.gallery_sizes = g;
            }
            let checkpoint = checkpoint.unwrap_or_else(|| cfg.out_dir.join("checkpoint.json"));
            print_json(&cmd_eval(
                &cfg,
                &checkpoint,
                world.as_deref().map(Path::new),
                seeds,
            )?)?;
            Ok(true)
        }
        Command::Sweep {
            common,
            axis,
            values,
            seeds,
            loss,
            gallery_sizes,
        } => {
            let mut cfg = common.load()?;
            if let Some(l) = loss {
                cfg.train.loss_kind = l;
            }
            if let Some(g) = gallery_sizes {
                cfg.eval.gallery_sizes = g;
            }
            if seeds.is_empty() {
                bail!("--seeds must name at least one seed");
            }
            let values = parse_sweep_values(axis, &values)?;
            print_json(&cmd_sweep(&cfg, axis, &values, &seeds)?)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
