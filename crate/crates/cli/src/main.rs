//! `pgdta`: command-line front end for the binding-affinity engine.
//!
//! Exit codes: 0 success, 1 configuration error, 2 input or data error,
//! 3 internal invariant violation. Summaries go to stdout as one line;
//! diagnostics go to stderr.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pgdta_core::gnn::PoolMode;

use commands::{ContactMode, PredictArgs};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "pgdta", version, about = "Drug-target binding affinity prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum Pool {
    Mean,
    Max,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse SMILES and report graph counts.
    ParseSmiles {
        smiles: Option<String>,
        /// File with one SMILES per line (first whitespace-separated field).
        #[arg(long, conflicts_with = "smiles")]
        file: Option<PathBuf>,
    },
    /// Build a binary contact map from coordinates, probabilities or distances.
    ContactMap {
        input: PathBuf,
        #[arg(long, value_enum)]
        mode: ContactMode,
        /// Defaults: 8 Å (coords), 0.5 (probs), 10 Å (distances).
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Train a model; trailing `--section.key value` pairs override the config.
    Train {
        config: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Print the MSE of a checkpoint on the configured dataset.
    Eval {
        checkpoint: PathBuf,
        config: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Predict the affinity of one drug-protein pair.
    Predict {
        checkpoint: PathBuf,
        #[arg(long)]
        smiles: String,
        #[arg(long)]
        protein_id: String,
        #[arg(long, default_value = "query")]
        drug_id: String,
        /// FASTA file holding the protein.
        #[arg(long)]
        sequences: PathBuf,
        /// Directory of sidecar files (defaults to the FASTA file's directory).
        #[arg(long)]
        sidecar_dir: Option<PathBuf>,
        #[arg(long)]
        pseudo_embeddings: bool,
        #[arg(long, value_enum, default_value = "mean")]
        embedding_pool: Pool,
    },
    /// Print record count and dimensions of an embedding file.
    InspectEmbeddings { path: PathBuf },
    /// Write deterministic sequence-seeded embedding files, one per protein.
    PseudoEmbed {
        #[arg(long)]
        sequences: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1024)]
        dim: usize,
        #[arg(long)]
        per_residue: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::ParseSmiles { smiles, file } => commands::parse_smiles_cmd(smiles.as_deref(), file.as_deref()),
        Command::ContactMap {
            input,
            mode,
            threshold,
            output,
        } => commands::contact_map_cmd(&input, mode, threshold, &output),
        Command::Train { config, overrides } => commands::train_cmd(&config, &overrides),
        Command::Eval {
            checkpoint,
            config,
            overrides,
        } => commands::eval_cmd(&checkpoint, &config, &overrides),
        Command::Predict {
            checkpoint,
            smiles,
            protein_id,
            drug_id,
            sequences,
            sidecar_dir,
            pseudo_embeddings,
            embedding_pool,
        } => commands::predict_cmd(&PredictArgs {
            checkpoint: &checkpoint,
            smiles: &smiles,
            protein_id: &protein_id,
            drug_id: &drug_id,
            sequences: &sequences,
            sidecar_dir: sidecar_dir.as_deref(),
            pseudo_embeddings,
            embedding_pool: match embedding_pool {
                Pool::Mean => PoolMode::Mean,
                Pool::Max => PoolMode::Max,
            },
        }),
        Command::InspectEmbeddings { path } => commands::inspect_embeddings_cmd(&path),
        Command::PseudoEmbed {
            sequences,
            out_dir,
            dim,
            per_residue,
        } => commands::pseudo_embed_cmd(&sequences, &out_dir, dim, per_residue),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
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
            e.exit_code()
        }
    }
}
