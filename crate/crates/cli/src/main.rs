//! `genre1d`: train and run music-genre classifiers on raw waveforms.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::CliError;
use config::FileConfig;
use genre1d::models::ArchName;
use genre1d::train::TrainConfig;

/// Environment variable consulted when `prepare` is run without
/// `--data-dir`.
const DATA_ROOT_VAR: &str = "GENRE1D_DATA_ROOT";

#[derive(Parser)]
#[command(
    name = "genre1d",
    version,
    about = "Music genre classification on raw audio waveforms",
    after_help = "Exit codes: 0 success, 2 data error, 64 usage error, 70 numeric failure."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan a genre-per-directory WAV tree into a dataset manifest.
    Prepare {
        /// Corpus root holding one subdirectory per genre. Falls back to
        /// the GENRE1D_DATA_ROOT environment variable.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Manifest file to write (JSON lines).
        #[arg(long)]
        out: PathBuf,
        /// Accept corpora that do not have exactly 100 tracks per genre.
        #[arg(long)]
        lenient: bool,
    },
    /// Write the five augmented variants of every clip plus a 6x manifest.
    Augment {
        /// Manifest produced by `prepare`.
        #[arg(long)]
        manifest: PathBuf,
        /// Directory for the augmented WAV files.
        #[arg(long)]
        out_dir: PathBuf,
        /// Augmented manifest path (default: <out-dir>/manifest.jsonl).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Corpus seed driving every parameter draw.
        #[arg(long)]
        seed: Option<u64>,
        /// JSON config file; flags override its values.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train an architecture over the 3-round fold rotation.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// One of: resnet1d, sample_cnn, pons_scale, dieleman, abdoli_esc,
        /// koerich.
        #[arg(long)]
        arch: Option<String>,
        /// Train on the 6x augmented pool (train folds only).
        #[arg(long)]
        augment: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Rounds to run (1 to 3).
        #[arg(long, default_value_t = 3)]
        rounds: usize,
        /// Early-stopping patience in epochs.
        #[arg(long)]
        patience: Option<usize>,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Directory for checkpoints and metrics.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// JSON config file; flags override its values.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Re-evaluate saved checkpoints on their test folds.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        /// Checkpoints in round order (repeat the flag, up to 3).
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        /// Fold seed override (default: the seed stored in the checkpoints).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Classify one WAV file with a saved checkpoint.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        wav: PathBuf,
    },
    /// Print the layer table and parameter counts of an architecture.
    ArchInfo {
        /// Architecture name; omit for all six.
        #[arg(long)]
        arch: Option<String>,
    },
}

fn effective_train_config(
    arch: Option<String>,
    augment: bool,
    seed: Option<u64>,
    patience: Option<usize>,
    max_epochs: Option<usize>,
    batch_size: Option<usize>,
    file: &FileConfig,
) -> Result<TrainConfig, CliError> {
    let arch_name = arch
        .or_else(|| file.arch.clone())
        .ok_or_else(|| CliError::Usage("--arch is required (or set \"arch\" in --config)".into()))?;
    let arch = ArchName::from_cli_name(&arch_name)?;
    let mut cfg = TrainConfig::new(arch);
    cfg.seed = seed.or(file.seed).unwrap_or(0);
    cfg.augment = augment || file.augment.unwrap_or(false);
    if let Some(p) = patience.or(file.patience) {
        cfg.patience = p;
    }
    if let Some(e) = max_epochs.or(file.max_epochs) {
        cfg.max_epochs = e;
    }
    if let Some(b) = batch_size.or(file.batch_size) {
        cfg.batch_size = b;
    }
    if cfg.max_epochs == 0 || cfg.batch_size == 0 {
        return Err(CliError::Usage(
            "--max-epochs and --batch-size must be at least 1".into(),
        ));
    }
    Ok(cfg)
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Prepare {
            data_dir,
            out,
            lenient,
        } => {
            let data_dir = data_dir
                .or_else(|| std::env::var_os(DATA_ROOT_VAR).map(PathBuf::from))
                .ok_or_else(|| {
                    CliError::Usage(format!(
                        "--data-dir is required (or set {DATA_ROOT_VAR})"
                    ))
                })?;
            commands::prepare(&data_dir, &out, lenient)
        }
        Command::Augment {
            manifest,
            out_dir,
            out,
            seed,
            config,
        } => {
            let file = FileConfig::load(config.as_deref())?;
            let seed = seed.or(file.seed).unwrap_or(0);
            commands::augment(&manifest, &out_dir, out.as_deref(), file.augmentation(seed))
        }
        Command::Train {
            manifest,
            arch,
            augment,
            seed,
            rounds,
            patience,
            max_epochs,
            batch_size,
            out_dir,
            config,
        } => {
            let file = FileConfig::load(config.as_deref())?;
            let cfg = effective_train_config(
                arch, augment, seed, patience, max_epochs, batch_size, &file,
            )?;
            commands::train(&manifest, cfg, rounds, &out_dir)
        }
        Command::Evaluate {
            manifest,
            checkpoints,
            seed,
            out_dir,
        } => commands::evaluate(&manifest, &checkpoints, seed, &out_dir),
        Command::Predict { checkpoint, wav } => commands::predict(&checkpoint, &wav),
        Command::ArchInfo { arch } => commands::arch_info(arch.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
