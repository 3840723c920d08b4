use std::path::PathBuf;
use std::sync::Arc;

use clap::Args;
use clc_core::{Enhancer, LatencyReport, ModelWeights};

use crate::{CliError, CliResult, ExitCode};

/// Published reference: 1.0 ms of compute per 20 ms frame.
pub const REFERENCE_MS: f64 = 1.0;
pub const REFERENCE_FRAME_MS: f64 = 20.0;

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Seconds of audio to stream (at least 1).
    #[arg(long, default_value_t = 30.0)]
    pub seconds: f64,
}

pub fn measure(args: &BenchArgs) -> CliResult<LatencyReport> {
    if args.seconds.is_nan() || args.seconds < 1.0 {
        return Err(CliError::usage(format!(
            "--seconds must be at least 1, got {}",
            args.seconds
        )));
    }
    let weights = Arc::new(ModelWeights::load(&args.model)?);
    let mut enhancer = Enhancer::new(weights)?;
    Ok(enhancer.benchmark(args.seconds)?)
}

pub fn run(args: &BenchArgs) -> CliResult<()> {
    let report = measure(args)?;
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    println!(
        "reference: {REFERENCE_MS:.1} ms per {REFERENCE_FRAME_MS:.0} ms frame (RTF {:.3}); measured {:.3} ms per {:.0} ms hop (RTF {:.4})",
        REFERENCE_MS / REFERENCE_FRAME_MS,
        report.mean_us / 1e3,
        report.hop_ms,
        report.rtf
    );
    if report.rtf >= 1.0 {
        return Err(CliError {
            code: ExitCode::Budget,
            message: format!("real-time budget missed: RTF {:.3}", report.rtf),
        });
    }
    Ok(())
}
