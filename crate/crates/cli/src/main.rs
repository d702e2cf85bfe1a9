use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use empathy_core::lexicon::TrainConfig;
use empathy_core::pipeline::{Pipeline, RunManifest};
use empathy_core::Error;
use tracing_subscriber::EnvFilter;

/// Persona-conditioned empathy audit.
///
/// Every stage reads its inputs from the manifest's output directory, so
/// stages can be re-run one at a time after the first `all`.
#[derive(Parser)]
#[command(name = "empathy", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ManifestArg {
    /// Run manifest (TOML).
    #[arg(long, short)]
    manifest: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest the corpus and draw the diverse sample.
    Sample(ManifestArg),
    /// Mask self-disclosed emotion words.
    Mask(ManifestArg),
    /// Write the persona list for the configured mode.
    Grid(ManifestArg),
    /// Query every configured model (cached).
    Run(ManifestArg),
    /// Parse outputs, map to intensities, score responses.
    Score(ManifestArg),
    /// Treatment effects, alignment, log-odds and TAV.
    Analyze(ManifestArg),
    /// Shift tables, summary and completion report.
    Report(ManifestArg),
    /// All stages in order.
    All(ManifestArg),
    /// Check a manifest and print its digest.
    Validate(ManifestArg),
    /// Fit the out-of-vocabulary regressor on the manifest's lexicon.
    TrainOov {
        #[command(flatten)]
        manifest: ManifestArg,
        /// Where to save the model.
        #[arg(long)]
        out: PathBuf,
        /// Hidden layer widths, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "512,256,128")]
        hidden: Vec<usize>,
        #[arg(long, default_value_t = 1000)]
        max_epochs: usize,
    },
}

fn load(path: &Path) -> anyhow::Result<RunManifest> {
    match RunManifest::load(path) {
        Ok(m) => Ok(m),
        Err(Error::Manifest(problems)) => {
            let mut msg = format!("invalid manifest {}:", path.display());
            for p in problems {
                msg.push_str("\n  - ");
                msg.push_str(&p);
            }
            anyhow::bail!(msg)
        }
        Err(e) => Err(e).with_context(|| format!("reading manifest {}", path.display())),
    }
}

fn pipeline(arg: &ManifestArg) -> anyhow::Result<Pipeline> {
    Ok(Pipeline::new(load(&arg.manifest)?)?)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Sample(m) => {
            let s = pipeline(&m)?.sample()?;
            println!(
                "sampled {} of {} eligible records (FRE {:.1}, FK grade {:.2})",
                s.selected, s.eligible, s.stats.flesch_reading_ease, s.stats.flesch_kincaid_grade
            );
        }
        Command::Mask(m) => println!("masked {} records", pipeline(&m)?.mask()?),
        Command::Grid(m) => println!("{} personas", pipeline(&m)?.grid()?.len()),
        Command::Run(m) => {
            let r = pipeline(&m)?.run_models()?;
            println!("{} requests, {} cache hits, {} failed", r.planned, r.cache_hits, r.failed);
        }
        Command::Score(m) => {
            let s = pipeline(&m)?.score()?;
            println!("{} parsed, {} rejected", s.parsed, s.rejected);
        }
        Command::Analyze(m) => println!("{} estimates", pipeline(&m)?.analyze()?),
        Command::Report(m) => {
            let p = pipeline(&m)?;
            p.report()?;
            println!("report written to {}", p.output_dir().join("report").display());
        }
        Command::All(m) => {
            let p = pipeline(&m)?;
            let o = p.run_all()?;
            println!(
                "{} records, {} personas, {} requests ({} cache hits, {} failed), {} rejected, {} estimates",
                o.sample.selected,
                o.personas,
                o.run.planned,
                o.run.cache_hits,
                o.run.failed,
                o.score.rejected,
                o.estimates
            );
            println!("report written to {}", p.output_dir().join("report").display());
        }
        Command::Validate(m) => {
            let manifest = load(&m.manifest)?;
            println!("ok {}", manifest.digest());
        }
        Command::TrainOov {
            manifest,
            out,
            hidden,
            max_epochs,
        } => {
            let config = TrainConfig {
                hidden,
                max_epochs,
                ..TrainConfig::default()
            };
            let metrics = pipeline(&manifest)?.train_oov(&out, &config)?;
            for m in metrics {
                println!("{:<12} mse {:.4} r2 {:.3}", m.emotion.as_str(), m.mse, m.r2);
            }
            println!("model saved to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
