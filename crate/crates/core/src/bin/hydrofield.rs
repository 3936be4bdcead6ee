use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hydrofield::config::ExperimentConfig;
use hydrofield::runner::{
    cmd_bronze, cmd_chunk, cmd_dump_prompt, cmd_evaluate, cmd_run_matrix, HarnessError,
};

#[derive(Parser)]
#[command(
    name = "hydrofield",
    version,
    about = "Batch harness for structured field extraction from hydropower licensing documents"
)]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true, default_value = "config.json")]
    config: PathBuf,
    /// Override the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the configured response-cache directory.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Override chunk-level worker count.
    #[arg(long, global = true)]
    concurrency: Option<usize>,
    /// Fail pairs on unparseable model output instead of recording
    /// all-absent records.
    #[arg(long, global = true)]
    strict_parse: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load documents and write the chunked corpus manifest.
    Chunk,
    /// Generate the reference standard with the configured judge.
    Bronze,
    /// Run every configured (model, method) pair; resumable.
    RunMatrix {
        /// Attempt at most N incomplete pairs (testing aid).
        #[arg(long)]
        max_pairs: Option<usize>,
    },
    /// Score result files against the reference and render tables.
    Evaluate,
    /// Print the exact prompt a method would issue for one chunk.
    DumpPrompt {
        /// Prompt kind: single_step, two_step_presence, two_step_extract,
        /// categorical, chain_of_thought, validate_lenient,
        /// validate_moderate, validate_stringent, bronze_judge.
        #[arg(long)]
        method: String,
        #[arg(long)]
        chunk_id: String,
        #[arg(long)]
        field: Option<String>,
        /// Candidate value for validation prompts.
        #[arg(long)]
        value: Option<String>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let mut config = ExperimentConfig::load(&cli.config)?;
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    if let Some(cache) = &cli.cache_dir {
        config.cache_dir = Some(cache.clone());
    }
    if let Some(concurrency) = cli.concurrency {
        config.concurrency = concurrency.max(1);
    }
    if cli.strict_parse {
        config.strict_parse = true;
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<(), HarnessError> {
    let config = load_config(cli)?;
    match &cli.command {
        Command::Chunk => {
            let manifest = cmd_chunk(&config)?;
            for doc in &manifest.documents {
                let chunks =
                    manifest.chunks.iter().filter(|c| c.doc_id == doc.doc_id).count();
                println!("{}: {} words, {} chunks", doc.doc_id, doc.word_count, chunks);
            }
            for warning in &manifest.warnings {
                eprintln!("warning: {warning}");
            }
            println!(
                "wrote {} ({} chunks total)",
                hydrofield::runner::corpus_manifest_path(&config).display(),
                manifest.chunks.len()
            );
            Ok(())
        }
        Command::Bronze => {
            let (standard, coverage) = cmd_bronze(&config)?;
            println!(
                "wrote {} ({} annotations, judge {})",
                hydrofield::runner::bronze_path(&config).display(),
                standard.annotations.len(),
                standard.judge_model
            );
            eprintln!("coverage (non-null rate per field):");
            for (field, rate) in &coverage.per_field {
                let rate = rate.map(|r| format!("{r:.3}")).unwrap_or_else(|| "—".into());
                eprintln!("  {field}: {rate}");
            }
            if !coverage.zero_coverage_fields.is_empty() {
                eprintln!(
                    "warning: zero coverage (comparison impossible) for: {}",
                    coverage.zero_coverage_fields.join(", ")
                );
            }
            Ok(())
        }
        Command::RunMatrix { max_pairs } => {
            let outcome = cmd_run_matrix(&config, *max_pairs)?;
            println!(
                "matrix: {} completed ({} resumed), {} failed",
                outcome.completed, outcome.resumed, outcome.failed
            );
            for pair in &outcome.manifest.pairs {
                if let Some(detail) = &pair.detail {
                    eprintln!("  {} / {}: {detail}", pair.model, pair.method);
                }
            }
            if outcome.failed > 0 {
                return Err(HarnessError::PartialFailure {
                    failed: outcome.failed,
                    total: outcome.manifest.pairs.len(),
                });
            }
            Ok(())
        }
        Command::Evaluate => {
            let evaluation = cmd_evaluate(&config)?;
            for warning in &evaluation.warnings {
                eprintln!("warning: {warning}");
            }
            print!("{}", evaluation.tables);
            println!(
                "wrote eval_report.json, eval_report.csv, tables.txt under {}",
                config.out_dir.display()
            );
            Ok(())
        }
        Command::DumpPrompt { method, chunk_id, field, value } => {
            let rendered =
                cmd_dump_prompt(&config, method, chunk_id, field.as_deref(), value.as_deref())?;
            print!("{rendered}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(err.exit_code())
        }
    }
}
