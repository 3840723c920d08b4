//! `clc`: enhance, mix, eval and bench over 16 kHz mono WAV files.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O, 3 data or format, 4 real-time
//! budget missed (bench only).

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

mod bench;
mod enhance;
mod eval;

pub use bench::{measure as bench_measure, BenchArgs};
pub use enhance::{stream, EnhanceArgs};
pub use eval::{EvalArgs, EvalRow};

#[derive(Debug, Parser)]
#[command(name = "clc", version, about = "Streaming complex linear coding speech enhancement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enhance a WAV file or every WAV file in a directory.
    Enhance(EnhanceArgs),
    /// Build noisy/clean pairs from a JSON-lines manifest of mixture recipes.
    Mix(MixArgs),
    /// Score enhanced clips against references with SI-SDR and RMSE.
    Eval(EvalArgs),
    /// Time the streaming pipeline on seeded noise.
    Bench(BenchArgs),
    /// Write a default-size model with random or zero weights.
    InitModel(InitModelArgs),
}

#[derive(Debug, Args)]
pub struct MixArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub speech_dir: PathBuf,
    #[arg(long)]
    pub noise_dir: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Base seed for manifest lines that carry no seed of their own.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct InitModelArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// All weights zero: the model outputs silence.
    #[arg(long)]
    pub zero: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    Usage = 1,
    Io = 2,
    Data = 3,
    Budget = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub code: ExitCode,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: ExitCode::Usage,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: ExitCode::Data,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self {
            code: ExitCode::Io,
            message: format!("{}: {err}", path.display()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<clc_core::Error> for CliError {
    fn from(err: clc_core::Error) -> Self {
        use clc_core::Error as E;
        let code = match &err {
            E::Io { .. } | E::MissingFiles(_) => ExitCode::Io,
            E::Wav {
                source: hound::Error::IoError(_),
                ..
            } => ExitCode::Io,
            _ => ExitCode::Data,
        };
        Self {
            code,
            message: err.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::Usage as i32 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("clc: {e}");
            e.code as i32
        }
    }
}

pub fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Enhance(a) => with_pool(|| enhance::run(&a)),
        Command::Mix(a) => with_pool(|| mix(&a)),
        Command::Eval(a) => with_pool(|| eval::run(&a)),
        Command::Bench(a) => bench::run(&a),
        Command::InitModel(a) => init_model(&a),
    }
}

/// Runs `f` on a rayon pool capped by `CLC_NUM_THREADS` (default: all cores).
fn with_pool<T: Send>(f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
    let threads = match std::env::var("CLC_NUM_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::usage(format!("CLC_NUM_THREADS must be a non-negative integer, got {v:?}")))?,
        Err(_) => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    pool.install(f)
}

fn mix(args: &MixArgs) -> CliResult<()> {
    let specs = clc_core::mixer::read_manifest(&args.manifest, args.seed)?;
    if specs.is_empty() {
        return Err(CliError::data(format!(
            "{}: no mixtures listed",
            args.manifest.display()
        )));
    }
    let rows = clc_core::mixer::build_testset(&specs, &args.speech_dir, &args.noise_dir, &args.out_dir)?;
    let worst = rows
        .iter()
        .map(|r| (r.achieved_snr_db - r.spec.snr_db).abs())
        .fold(0.0, f64::max);
    println!(
        "wrote {} pairs to {} (largest SNR deviation {worst:.4} dB)",
        rows.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn init_model(args: &InitModelArgs) -> CliResult<()> {
    let config = clc_core::ModelConfig::default();
    let weights = if args.zero {
        clc_core::ModelWeights::zeros(config)
    } else {
        clc_core::ModelWeights::random(config, args.seed)
    };
    weights.save(&args.out)?;
    println!("wrote {} ({} parameters)", args.out.display(), weights.param_count());
    Ok(())
}

/// `*.wav` files directly inside `dir`, sorted by name.
pub(crate) fn wav_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let is_wav = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if is_wav && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}
