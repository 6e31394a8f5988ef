use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use cdee_core::color::ColorShaping;
use cdee_core::dataio::config::{parse_list, KeyValues};
use cdee_core::dataio::synth::SyntheticSpec;
use cdee_core::pipeline::{self, PipelineConfig, TRAIN_KEYS};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "cdee",
    version,
    about = "Duodenal biopsy patch classification pipeline"
)]
struct Cli {
    /// Seed for every stochastic stage.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic slide corpus.
    Synth(SynthArgs),
    /// Tile slides into patches and split slides into train/test.
    Patch(PatchArgs),
    /// Label patches useful / not useful with autoencoder + k-means.
    Cluster(ClusterArgs),
    /// Expand useful patches under the colour-balance sweeps.
    Balance(BalanceArgs),
    /// Train the classifier.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test split.
    Eval(EvalArgs),
    /// Run every out-of-date stage from a key = value config.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 6)]
    slides_per_class: usize,
    #[arg(long, default_value_t = 4)]
    grid_cols: usize,
    #[arg(long, default_value_t = 4)]
    grid_rows: usize,
    #[arg(long, default_value_t = 64)]
    patch_size: usize,
    #[arg(long, default_value_t = 0.6)]
    tissue_fraction: f64,
    #[arg(long, default_value_t = 0.04)]
    noise: f64,
}

#[derive(Args)]
struct PatchArgs {
    /// Directory holding `<CLASS>/<slide>.ppm`.
    #[arg(long)]
    slides: PathBuf,
    /// Output patch directory.
    #[arg(long)]
    patches: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 64)]
    patch_size: usize,
    #[arg(long, default_value_t = 0.34)]
    test_fraction: f64,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    patches: PathBuf,
    /// Manifest with the cluster column filled in.
    #[arg(long)]
    out: PathBuf,
    /// Per-class useful / not-useful table (CSV).
    #[arg(long)]
    summary: PathBuf,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    /// Patches are area-downscaled to this side before encoding.
    #[arg(long, default_value_t = 64)]
    input_size: usize,
}

#[derive(Args)]
struct BalanceArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    patches: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated percentages for training and same-balance testing.
    #[arg(long)]
    train_percentages: Option<String>,
    /// Comma-separated percentages for shifted-balance testing.
    #[arg(long)]
    test_percentages: Option<String>,
    /// Gamma applied after the stretch.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Nine comma-separated values, row-major, mixing channels after the
    /// white balance.
    #[arg(long)]
    color_matrix: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    patches: PathBuf,
    /// key = value file: patch_size, pools, epochs, batch_size,
    /// learning_rate, beta1, beta2, epsilon.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch loss/accuracy CSV; defaults to `<out>.log.csv`.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    patches: PathBuf,
    /// Report directory (report.txt, roc.csv, metrics.json).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
}

fn defaults(seed: Option<u64>) -> PipelineConfig {
    PipelineConfig::desk(Path::new("."), seed.unwrap_or(0))
}

fn run(cli: Cli) -> Result<()> {
    let base = defaults(cli.seed);
    match cli.command {
        Command::Synth(a) => {
            let spec = SyntheticSpec {
                seed: base.synth.seed,
                slides_per_class: a.slides_per_class,
                grid: (a.grid_cols, a.grid_rows),
                patch_size: a.patch_size,
                tissue_fraction: a.tissue_fraction,
                noise: a.noise,
            };
            pipeline::run_synth(&spec, &a.out)?;
            println!(
                "wrote {} slides to {}",
                spec.slides_per_class * 3,
                a.out.display()
            );
        }
        Command::Patch(a) => {
            let m = pipeline::run_patch(
                &a.slides,
                a.patch_size,
                a.test_fraction,
                base.split_seed(),
                &a.patches,
                &a.manifest,
            )?;
            println!(
                "wrote {} patches, manifest {}",
                m.records.len(),
                a.manifest.display()
            );
        }
        Command::Cluster(a) => {
            let cfg = cdee_core::filter::AutoencoderConfig {
                epochs: a.epochs,
                input_size: a.input_size,
                ..base.autoencoder.clone()
            };
            pipeline::run_cluster(&a.manifest, &a.patches, &cfg, &a.out, &a.summary)?;
            print!("{}", std::fs::read_to_string(&a.summary)?);
        }
        Command::Balance(a) => {
            let train = match a.train_percentages {
                Some(s) => parse_list(&s)?,
                None => base.train_percentages.clone(),
            };
            let test = match a.test_percentages {
                Some(s) => parse_list(&s)?,
                None => base.test_percentages.clone(),
            };
            let mut shaping = ColorShaping {
                gamma: a.gamma,
                ..ColorShaping::default()
            };
            if let Some(m) = a.color_matrix {
                shaping.color_matrix = ColorShaping::matrix_from_slice(&parse_list(&m)?)?;
            }
            pipeline::run_balance(&a.manifest, &a.patches, &train, &test, &shaping, &a.out)?;
            println!("wrote balanced sets to {}", a.out.display());
        }
        Command::Train(a) => {
            let kv = match &a.config {
                Some(p) => KeyValues::read(p)?,
                None => KeyValues::default(),
            };
            if let Some(bad) = kv.keys().find(|k| !TRAIN_KEYS.contains(k)) {
                bail!("unknown training config key `{bad}`");
            }
            let (spec, train) =
                pipeline::train_settings(&kv, base.classifier.clone(), base.train.clone())?;
            let log = a.log.unwrap_or_else(|| {
                let mut s = a.out.clone().into_os_string();
                s.push(".log.csv");
                s.into()
            });
            let history = pipeline::run_train(
                &a.manifest,
                &a.patches,
                &spec,
                &train,
                base.init_seed(),
                &a.out,
                &log,
            )?;
            for h in history {
                println!(
                    "epoch {:>3}  loss {:.4}  accuracy {:.4}",
                    h.epoch, h.loss, h.accuracy
                );
            }
        }
        Command::Eval(a) => {
            let report = pipeline::run_eval(&a.model, &a.manifest, &a.patches, &a.out)?;
            print!("{}", report.render());
        }
        Command::Pipeline(a) => {
            let mut cfg = PipelineConfig::read(&a.config)?;
            if let Some(seed) = cli.seed {
                cfg.set_seed(seed);
            }
            let run = pipeline::run_pipeline(&cfg)?;
            for s in &run.stages {
                println!(
                    "{:<8} {}",
                    s.stage,
                    if s.ran { "ran" } else { "up to date" }
                );
            }
            let sum = &run.summary;
            println!(
                "same-balance accuracy {:.4} macro-F1 {:.4}; shifted accuracy {:.4} macro-F1 {:.4}",
                sum.same.accuracy, sum.same.macro_f1, sum.shifted.accuracy, sum.shifted.macro_f1
            );
            println!("summary: {}", cfg.paths.summary.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
