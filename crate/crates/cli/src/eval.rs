use std::collections::BTreeSet;
use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use clc_core::{metrics, wav};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{wav_files, CliError, CliResult};

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub enhanced: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    /// Leading samples of each enhanced clip to drop before scoring.
    #[arg(long, default_value_t = 320)]
    pub delay_samples: usize,
    /// JSON-lines report: one line per file, then a mean line.
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    /// File name, or `"mean"` for the summary line.
    pub file: String,
    pub si_sdr_db: f64,
    pub rmse: f64,
    /// Per file: residual vanished. Mean line: every file matched exactly.
    pub exact_match: bool,
    pub delay_applied: usize,
}

fn names(dir: &std::path::Path) -> CliResult<BTreeSet<String>> {
    Ok(wav_files(dir)?
        .iter()
        .filter_map(|p| p.file_name()?.to_str().map(str::to_owned))
        .collect())
}

pub fn run(args: &EvalArgs) -> CliResult<()> {
    let enhanced = names(&args.enhanced)?;
    let reference = names(&args.reference)?;
    let unmatched: Vec<&String> = enhanced.symmetric_difference(&reference).collect();
    for name in &unmatched {
        let side = if enhanced.contains(*name) {
            "reference"
        } else {
            "enhanced"
        };
        eprintln!("unmatched: {name} (no {side} file)");
    }
    let common: Vec<&String> = enhanced.intersection(&reference).collect();
    if common.is_empty() {
        return Err(CliError::data("no file names in common between the two directories"));
    }

    let rows = common
        .par_iter()
        .map(|name| {
            let est = wav::read_wav(args.enhanced.join(name))?;
            let cln = wav::read_wav(args.reference.join(name))?;
            let r = metrics::align_and_eval(&est.samples, &cln.samples, args.delay_samples)
                .map_err(|e| CliError::data(format!("{name}: {e}")))?;
            Ok(EvalRow {
                file: (*name).clone(),
                si_sdr_db: r.si_sdr_db,
                rmse: r.rmse,
                exact_match: r.exact_match,
                delay_applied: r.delay_applied,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;

    let n = rows.len() as f64;
    let mean = EvalRow {
        file: "mean".into(),
        si_sdr_db: rows.iter().map(|r| r.si_sdr_db).sum::<f64>() / n,
        rmse: rows.iter().map(|r| r.rmse).sum::<f64>() / n,
        exact_match: rows.iter().all(|r| r.exact_match),
        delay_applied: args.delay_samples,
    };

    let mut text = Vec::new();
    for row in rows.iter().chain([&mean]) {
        serde_json::to_writer(&mut text, row).expect("rows serialize");
        text.push(b'\n');
    }
    std::fs::File::create(&args.report)
        .and_then(|mut f| f.write_all(&text))
        .map_err(|e| CliError::io(&args.report, e))?;

    println!(
        "{} files: mean SI-SDR {:.2} dB, mean RMSE {:.6}",
        rows.len(),
        mean.si_sdr_db,
        mean.rmse
    );
    if !unmatched.is_empty() {
        return Err(CliError::data(format!(
            "{} file(s) without a counterpart were skipped",
            unmatched.len()
        )));
    }
    Ok(())
}
