use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use quotereel::embedding::RetrievalVariant;
use quotereel::pipeline::{self, PipelineConfig};
use quotereel::synthetic::DemoConfig;
use quotereel::Error;

#[derive(Parser)]
#[command(
    name = "quotereel",
    version,
    about = "Quote-aware teaser assembly from documentary transcripts"
)]
struct Cli {
    /// Pipeline config file.
    #[arg(long, global = true, default_value = "quotereel.toml")]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the retrieval variant (T or TV).
    #[arg(long, global = true)]
    variant: Option<RetrievalVariant>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse transcripts into clip, sample and embedding files.
    Ingest,
    /// Train the retriever; also runs the configured alpha sweep.
    Train,
    /// Fill the quotes of scripts (default: every script under paths.scripts).
    Retrieve { scripts: Vec<PathBuf> },
    /// Build EDLs for fulfilled scripts (default: everything retrieved).
    Assemble { fulfilled: Vec<PathBuf> },
    /// Score the EDLs against the references.
    Evaluate,
    /// Every stage in order.
    Run {
        /// Train even for the text-only variant.
        #[arg(long)]
        train_text_only: bool,
    },
    /// Write a small synthetic corpus with a ready config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        docs: usize,
        #[arg(long, default_value_t = 8)]
        clips_per_doc: usize,
    },
}

fn load(cli: &Cli) -> quotereel::Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(v) = cli.variant {
        cfg.variant = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn show(path: &Path) -> String {
    path.display().to_string()
}

fn run(cli: &Cli) -> quotereel::Result<()> {
    if let Command::Synth {
        out,
        docs,
        clips_per_doc,
    } = &cli.command
    {
        let demo = DemoConfig {
            n_docs: *docs,
            clips_per_doc: *clips_per_doc,
            seed: cli.seed.unwrap_or(DemoConfig::default().seed),
            ..DemoConfig::default()
        };
        let cfg = pipeline::write_demo_corpus(out, &demo)?;
        eprintln!("wrote synthetic corpus; config at {}", show(&cfg));
        return Ok(());
    }
    let cfg = load(cli)?;
    match &cli.command {
        Command::Ingest => {
            let s = pipeline::ingest(&cfg)?;
            eprintln!(
                "ingested {} documentaries: {} clips, {} training samples",
                s.documentaries, s.clips, s.samples
            );
        }
        Command::Train => {
            let s = pipeline::train_model(&cfg)?;
            eprintln!(
                "trained {} epochs, best validation loss {:.4}",
                s.epochs, s.best_val_loss
            );
            for f in &s.sweep_files {
                eprintln!("sweep history {}", show(f));
            }
        }
        Command::Retrieve { scripts } => {
            let scripts = if scripts.is_empty() {
                pipeline::configured_scripts(&cfg)?
            } else {
                scripts.clone()
            };
            for s in &scripts {
                eprintln!("{} -> {}", show(s), show(&pipeline::retrieve(&cfg, s)?));
            }
        }
        Command::Assemble { fulfilled } => {
            let files = if fulfilled.is_empty() {
                pipeline::fulfilled_scripts(&cfg)?
            } else {
                fulfilled.clone()
            };
            for f in &files {
                eprintln!("{} -> {}", show(f), show(&pipeline::assemble(&cfg, f)?));
            }
        }
        Command::Evaluate => {
            eprintln!("report at {}", show(&pipeline::evaluate(&cfg)?));
        }
        Command::Run { train_text_only } => {
            let s = pipeline::run_all(&cfg, *train_text_only)?;
            eprintln!(
                "{} clips, {} EDLs{}",
                s.ingest.clips,
                s.edls.len(),
                s.report
                    .map(|r| format!(", report at {}", show(&r)))
                    .unwrap_or_default()
            );
        }
        Command::Synth { .. } => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
