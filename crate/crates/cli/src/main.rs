use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tada::config::{ExperimentConfig, Preset};
use tada::data::SubsetSize;
use tada::experiment::{self, Baseline, Context, EvalRefs};
use tada::{Error, Result};

/// Task-aware sim-to-real domain adaptation: train a synthetic expert,
/// translate real images into the synthetic domain, and fine-tune the
/// translator with the expert's task loss.
#[derive(Parser, Debug)]
#[command(name = "tada", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in config: toy-seg or toy-cls (default toy-seg).
    #[arg(long)]
    preset: Option<String>,
    /// Override the base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output root (the dataset root for generate-toy).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the run id.
    #[arg(long)]
    run_id: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stage A: train the synthetic-domain expert and freeze it.
    TrainExpert {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Stage B: task-agnostic unpaired translation.
    TrainI2i {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Stage C: task-aware fine-tuning of the real-to-synthetic generator.
    Finetune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        /// Labeled real subset: a fraction (0.05) or a count (10).
        #[arg(long)]
        labeled: Option<String>,
        /// Replicate index; selects the labeled subset and training seed.
        #[arg(long, default_value_t = 0)]
        replicate: u64,
    },
    /// Baseline table, per-class IoU, domain gap and resolution sweep.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        expert: Option<PathBuf>,
        /// Generator used for M1 and the resolution sweep.
        #[arg(long)]
        generator: Option<PathBuf>,
        #[arg(long)]
        m3: Option<PathBuf>,
        /// Comma-separated subset of m1,m2,m3.
        #[arg(long, value_delimiter = ',')]
        baselines: Option<Vec<String>>,
    },
    /// Stage C for several alphas from one stage B state.
    SweepAlpha {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
    },
    /// Stage C and the supervised baseline for several labeled amounts.
    SweepGt {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
    },
    /// Render the configured toy world into the dataset directory layout.
    GenerateToy {
        #[command(flatten)]
        common: Common,
    },
}

fn resolve(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match (&common.config, &common.preset) {
        (Some(path), _) => {
            if !path.exists() {
                return Err(Error::usage(format!("config file {} does not exist", path.display())));
            }
            ExperimentConfig::load(path)?
        }
        (None, Some(p)) => ExperimentConfig::preset(p.parse::<Preset>()?),
        (None, None) => ExperimentConfig::preset(Preset::ToySeg),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(id) = &common.run_id {
        cfg.run_id = id.clone();
    }
    Ok(cfg)
}

fn with_out(mut cfg: ExperimentConfig, common: &Common) -> Result<ExperimentConfig> {
    if let Some(out) = &common.out {
        cfg.output_root = out.clone();
    }
    cfg.check()?;
    Ok(cfg)
}

fn parse_labeled(s: &str) -> Result<SubsetSize> {
    let bad = || Error::usage(format!("--labeled {s:?} is neither a fraction nor a count"));
    if s.contains(['.', 'e', 'E']) {
        s.parse::<f64>().map(SubsetSize::Fraction).map_err(|_| bad())
    } else {
        s.parse::<usize>().map(SubsetSize::Count).map_err(|_| bad())
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainExpert { common, epochs } => {
            let mut cfg = resolve(&common)?;
            if let Some(e) = epochs {
                cfg.stage_a.epochs = e;
            }
            let ctx = Context::open(with_out(cfg, &common)?, "train-expert")?;
            let r = experiment::train_expert(&ctx)?;
            let seg = ctx.segmentation();
            println!(
                "expert: best epoch {}, in-domain {:.4}, untranslated real {:.4}",
                r.best_epoch,
                r.in_domain.headline(seg),
                r.m2.headline(seg)
            );
        }
        Command::TrainI2i { common, epochs } => {
            let mut cfg = resolve(&common)?;
            if let Some(e) = epochs {
                cfg.stage_b.epochs = e;
                cfg.stage_b.decay_epochs = cfg.stage_b.decay_epochs.min(e);
            }
            let ctx = Context::open(with_out(cfg, &common)?, "train-i2i")?;
            let r = experiment::train_i2i(&ctx)?;
            println!(
                "stage B: best f∘G {:.4} at epoch {} (untranslated {:.4})",
                r.best_metric, r.best_epoch, r.m2
            );
        }
        Command::Finetune {
            common,
            alpha,
            gamma,
            labeled,
            replicate,
        } => {
            let mut cfg = resolve(&common)?;
            if let Some(a) = alpha {
                cfg.stage_c.alpha = a;
            }
            if let Some(g) = gamma {
                cfg.stage_c.gamma = g;
            }
            if let Some(l) = &labeled {
                cfg.stage_c.labeled = parse_labeled(l)?;
            }
            let cfg = with_out(cfg, &common)?;
            let c = cfg.stage_c.clone();
            let ctx = Context::open(cfg, "finetune")?;
            let r = experiment::finetune(&ctx, c.alpha, c.gamma, c.labeled, replicate)?;
            let m3 = experiment::train_m3(&ctx, c.labeled, replicate)?;
            print!("{}", r.text());
            println!("M3 on the same {} labeled samples: {:.4}", m3.n_labeled, m3.best_metric);
        }
        Command::Evaluate {
            common,
            expert,
            generator,
            m3,
            baselines,
        } => {
            let cfg = with_out(resolve(&common)?, &common)?;
            let mut refs = EvalRefs {
                expert,
                generator,
                m3,
                ..EvalRefs::default()
            };
            if let Some(list) = baselines {
                refs.baselines = list
                    .iter()
                    .map(|s| s.trim().parse::<Baseline>())
                    .collect::<Result<_>>()?;
            }
            let ctx = Context::open(cfg, "evaluate")?;
            print!("{}", experiment::evaluate_run(&ctx, &refs)?.text());
        }
        Command::SweepAlpha { common, alphas } => {
            let mut cfg = resolve(&common)?;
            if let Some(a) = alphas {
                cfg.sweep.alphas = a;
            }
            let cfg = with_out(cfg, &common)?;
            let alphas = cfg.sweep.alphas.clone();
            let ctx = Context::open(cfg, "sweep-alpha")?;
            print!("{}", experiment::sweep_alpha(&ctx, &alphas)?.text());
        }
        Command::SweepGt { common, fractions } => {
            let mut cfg = resolve(&common)?;
            if let Some(f) = fractions {
                cfg.sweep.fractions = f;
            }
            let cfg = with_out(cfg, &common)?;
            let fractions = cfg.sweep.fractions.clone();
            let ctx = Context::open(cfg, "sweep-gt")?;
            print!("{}", experiment::sweep_gt(&ctx, &fractions)?.text());
        }
        Command::GenerateToy { common } => {
            let cfg = resolve(&common)?;
            cfg.check()?;
            let root = common.out.clone().unwrap_or_else(|| PathBuf::from("toy-data"));
            let d = experiment::generate_toy(&cfg, &root)?;
            println!(
                "wrote {} synthetic and {} real images to {}",
                d.synthetic_train.len() + d.synthetic_val.len(),
                d.real_train.len() + d.real_val.len(),
                root.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_secs()
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
