//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::alloc::{GlobalAlloc, Layout, System};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use clc_core::clc::{ls_optimal, ls_residual, regression_rows, LS_DAMPING};
use clc_core::metrics::si_sdr;
use clc_core::mixer::{build_testset, MixSpec};
use clc_core::nn::{gru_cell, GruLayer, Network};
use clc_core::{
    wav, AnalysisState, AudioChunk, ClcConfig, Complex, Enhancer, LatencyReport, ModelConfig, ModelWeights, StftConfig,
    SynthesisState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct CountingAlloc;

static ALLOCATIONS: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for CountingAlloc {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        ALLOCATIONS.fetch_add(1, Ordering::Relaxed);
        System.alloc(layout)
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout)
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        ALLOCATIONS.fetch_add(1, Ordering::Relaxed);
        System.realloc(ptr, layout, new_size)
    }
}

#[global_allocator]
static GLOBAL: CountingAlloc = CountingAlloc;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn noise(len: usize, seed: u64, amp: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-amp..amp)).collect()
}

fn peak(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn stft_round_trip() -> Outcome {
    let x = noise(16_000, 101, 0.8);
    let cfg = StftConfig::default();
    let start = Instant::now();
    let mut ana = AnalysisState::new(&cfg);
    let mut syn = SynthesisState::new(&cfg);
    let mut seg = vec![0.0; cfg.hop];
    let mut y = Vec::with_capacity(x.len());
    ana.push(&x, |frame| {
        syn.synthesize_into(frame, &mut seg).unwrap();
        y.extend_from_slice(&seg);
    })
    .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    // The first window of output is still filling the overlap-add.
    let interior = cfg.window_len..y.len();
    let err = peak(
        &x[interior.clone()]
            .iter()
            .zip(&y[interior])
            .map(|(a, b)| a - b)
            .collect::<Vec<_>>(),
    );
    let rel = err / peak(&x);
    check(
        rel <= 1e-6 && elapsed < 1.0,
        format!("max error {rel:.2e} x peak (<= 1e-6), {elapsed:.3} s (< 1 s)"),
    )
}

fn run_chunked(enh: &mut Enhancer, x: &[f64], chunk: usize) -> Vec<f64> {
    enh.reset();
    let mut out = Vec::with_capacity(x.len());
    for piece in x.chunks(chunk) {
        enh.process_into(piece, &mut out).unwrap();
    }
    out
}

fn streaming_equivalence() -> Outcome {
    let weights = Arc::new(ModelWeights::random(ModelConfig::default(), 202));
    let mut enh = Enhancer::new(weights).map_err(|e| e.to_string())?;
    let x = noise(5 * 16_000, 203, 0.5);
    let outputs: Vec<Vec<f64>> = [1, 80, 160, 1000, x.len()]
        .iter()
        .map(|&c| run_chunked(&mut enh, &x, c))
        .collect();
    let mut worst = 0.0f64;
    for a in &outputs {
        for b in &outputs {
            if a.len() != b.len() {
                return Err(format!("output lengths differ: {} vs {}", a.len(), b.len()));
            }
            worst = a.iter().zip(b).fold(worst, |m, (p, q)| m.max((p - q).abs()));
        }
    }
    check(
        worst <= 1e-6,
        format!("chunks {{1, 80, 160, 1000, whole}}: max pairwise difference {worst:.2e} (<= 1e-6)"),
    )
}

fn identity_passthrough() -> Outcome {
    let mut enh = Enhancer::identity(ClcConfig::default()).map_err(|e| e.to_string())?;
    let x = noise(16_000, 303, 0.5);
    let y = run_chunked(&mut enh, &x, 80);
    // Delay from the peak of the cross-correlation.
    let measured = (0..1000)
        .max_by(|&a, &b| {
            let c = |lag: usize| x.iter().zip(&y[lag..]).map(|(p, q)| p * q).sum::<f64>();
            c(a).total_cmp(&c(b))
        })
        .unwrap();
    let err = (measured..y.len()).fold(0.0f64, |m, n| m.max((y[n] - x[n - measured]).abs()));
    check(
        measured == 320 && err <= 1e-6,
        format!("measured delay {measured} samples (== 320), max error {err:.2e} (<= 1e-6)"),
    )
}

/// One STFT bin of a harmonic plus an interferer a fraction of a bin away.
fn in_band_case(rng: &mut ChaCha8Rng) -> (Vec<Complex>, Vec<Complex>) {
    let cfg = StftConfig::default();
    let bin = rng.gen_range(4..157);
    let hz = |offset: f64| (bin as f64 + offset) * cfg.bin_hz(16_000);
    let (fs, fi) = (hz(rng.gen_range(-0.4..0.4)), hz(rng.gen_range(-0.4..0.4)));
    let (ps, pi) = (rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI));
    let gain = rng.gen_range(0.3..1.5);
    let len = 8000;
    let clean: Vec<f64> = (0..len)
        .map(|n| 0.4 * (2.0 * PI * fs * n as f64 / 16e3 + ps).sin())
        .collect();
    let noisy: Vec<f64> = clean
        .iter()
        .enumerate()
        .map(|(n, s)| s + 0.4 * gain * (2.0 * PI * fi * n as f64 / 16e3 + pi).sin())
        .collect();
    let column = |x: Vec<f64>| -> Vec<Complex> {
        AnalysisState::new(&cfg)
            .analyze(&AudioChunk::mono16k(x))
            .unwrap()
            .iter()
            .map(|f| f.bins[bin])
            .collect()
    };
    (column(noisy), column(clean))
}

fn mask_subsumption() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut strict = 0;
    let mut worse = 0;
    let mut chain_breaks = 0;
    for _ in 0..100 {
        let (noisy, clean) = in_band_case(&mut rng);
        let fits: Vec<(f64, f64)> = (1..=5)
            .map(|order| {
                // Drop the rows that reach before the first frame.
                let rows = regression_rows(&noisy, order, 0)[4..].to_vec();
                let targets = &clean[4..];
                let a = ls_optimal(&rows, targets);
                let norm_sq: f64 = a.iter().map(|c| c.norm_sqr()).sum();
                (ls_residual(&rows, targets, &a), norm_sq)
            })
            .collect();
        let (r1, r5) = (fits[0].0, fits[4].0);
        if r5 > r1 + 1e-9 {
            worse += 1;
        }
        if r5 < r1 - 1e-9 {
            strict += 1;
        }
        // Nested damped problems: r(N+1) <= r(N) + damping * |a(N)|^2.
        chain_breaks += fits
            .windows(2)
            .filter(|w| w[1].0 > w[0].0 + LS_DAMPING * w[0].1 + 1e-9)
            .count();
    }
    check(
        worse == 0 && strict >= 90 && chain_breaks == 0,
        format!(
            "N=5 worse than N=1 + 1e-9 in {worse}/100 (== 0), strictly better in {strict}/100 (>= 90); order chain within damping bound, {chain_breaks} breaks"
        ),
    )
}

fn si_sdr_oracle() -> Outcome {
    let center = |mut v: Vec<f64>| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter_mut().for_each(|x| *x -= m);
        v
    };
    let s = center(noise(16_000, 505, 0.5));
    let ss: f64 = s.iter().map(|v| v * v).sum();
    let mut worst = 0.0f64;
    let mut scores = Vec::new();
    for (i, k) in [0.0, 5.0, 10.0, 20.0].into_iter().enumerate() {
        let mut n = center(noise(16_000, 506 + i as u64, 0.5));
        let ns: f64 = n.iter().zip(&s).map(|(a, b)| a * b).sum();
        n.iter_mut().zip(&s).for_each(|(a, b)| *a -= ns / ss * b);
        let nn: f64 = n.iter().map(|v| v * v).sum();
        let g = (ss / nn / 10f64.powf(k / 10.0)).sqrt();
        let est: Vec<f64> = s.iter().zip(&n).map(|(a, b)| a + g * b).collect();
        let score = si_sdr(&est, &s).map_err(|e| e.to_string())?;
        worst = worst.max((score - k).abs());
        scores.push(score);

        for scale in [1e-3, 0.5, 7.0, 1e3] {
            let scaled: Vec<f64> = est.iter().map(|v| v * scale).collect();
            let drift = (si_sdr(&scaled, &s).map_err(|e| e.to_string())? - score).abs();
            if drift > 1e-9 {
                return Err(format!("scale {scale} moved SI-SDR by {drift:.2e} (> 1e-9)"));
            }
        }
    }
    let listed: Vec<String> = scores.iter().map(|v| format!("{v:.4}")).collect();
    check(
        worst <= 0.01,
        format!(
            "k = 0/5/10/20 dB scored {} (max error {worst:.1e} <= 0.01); scale invariant to 1e-9",
            listed.join("/")
        ),
    )
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn mixer_accuracy() -> Outcome {
    let tmp = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let (speech_dir, noise_dir) = (tmp.path().join("speech"), tmp.path().join("noise"));
    std::fs::create_dir_all(&speech_dir).unwrap();
    std::fs::create_dir_all(&noise_dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut speech_ids = Vec::new();
    let mut noise_ids = Vec::new();
    for i in 0..4 {
        // Voiced-like: a few harmonics under a slow envelope.
        let f0 = rng.gen_range(90.0..250.0);
        let s: Vec<f64> = (0..16_000)
            .map(|n| {
                let t = n as f64 / 16e3;
                let env = 0.5 + 0.5 * (2.0 * PI * 3.0 * t).sin();
                0.25 * env
                    * (1..6)
                        .map(|h| (2.0 * PI * f0 * h as f64 * t).sin() / h as f64)
                        .sum::<f64>()
            })
            .collect();
        wav::write_pcm16(speech_dir.join(format!("s{i}.wav")), &AudioChunk::mono16k(s)).unwrap();
        wav::write_pcm16(
            noise_dir.join(format!("n{i}.wav")),
            &AudioChunk::mono16k(noise(5000 + 3000 * i, 607 + i as u64, 0.6)),
        )
        .unwrap();
        speech_ids.push(format!("s{i}"));
        noise_ids.push(format!("n{i}"));
    }
    let specs: Vec<MixSpec> = (0..24)
        .map(|i| MixSpec::sample(&mut rng, format!("mix{i:02}"), &speech_ids, &noise_ids).unwrap())
        .collect();

    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let rows = build_testset(&specs, &speech_dir, &noise_dir, &a).map_err(|e| e.to_string())?;
    build_testset(&specs, &speech_dir, &noise_dir, &b).map_err(|e| e.to_string())?;

    // Re-measure from the files on disk: noise = noisy - clean.
    let mut worst = 0.0f64;
    for spec in &specs {
        let noisy = wav::read_wav(a.join("noisy").join(format!("{}.wav", spec.id))).unwrap();
        let clean = wav::read_wav(a.join("clean").join(format!("{}.wav", spec.id))).unwrap();
        let ps: f64 = clean.samples.iter().map(|v| v * v).sum();
        let pn: f64 = noisy
            .samples
            .iter()
            .zip(&clean.samples)
            .map(|(y, s)| (y - s) * (y - s))
            .sum();
        worst = worst.max((10.0 * (ps / pn).log10() - spec.snr_db).abs());
    }
    let reported = rows
        .iter()
        .fold(0.0f64, |m, r| m.max((r.achieved_snr_db - r.spec.snr_db).abs()));
    let identical = tree(&a) == tree(&b);
    check(
        worst <= 0.1 && reported <= 0.1 && identical,
        format!(
            "24 pairs: max SNR error {worst:.4} dB on disk, {reported:.4} dB in manifest (<= 0.1); regeneration byte-identical: {identical}"
        ),
    )
}

fn golden_row<'a>(data: &'a [f32], index: &serde_json::Value, name: &str, frame: usize) -> &'a [f32] {
    let entry = index["arrays"]
        .as_array()
        .unwrap()
        .iter()
        .find(|a| a["name"] == name)
        .unwrap();
    let dim = entry["shape"][1].as_u64().unwrap() as usize;
    let offset = entry["offset"].as_u64().unwrap() as usize + frame * dim;
    &data[offset..offset + dim]
}

fn golden_vectors() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/golden");
    let weights = ModelWeights::load(dir.join("tiny.clcw")).map_err(|e| e.to_string())?;
    let raw = std::fs::read(dir.join("golden.f32")).map_err(|e| e.to_string())?;
    let data: Vec<f32> = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let index: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("golden.json")).unwrap()).unwrap();
    let frames = index["config"]["frames"].as_u64().unwrap() as usize;

    let mut net = Network::new(&weights);
    let mut worst = 0.0f32;
    let mut count = 0;
    for t in 0..frames {
        net.forward_features_from(&weights, golden_row(&data, &index, "input", t));
        let act = net.activations();
        let stages: [(&str, &[f32]); 7] = [
            ("fc_in", act.fc_in),
            ("bn", act.bn),
            ("relu", act.relu),
            ("gru1", &act.gru[0]),
            ("gru2", &act.gru[1]),
            ("pre_tanh", act.pre_tanh),
            ("coeffs", act.coeffs),
        ];
        for (name, got) in stages {
            for (g, w) in got.iter().zip(golden_row(&data, &index, name, t)) {
                worst = worst.max((g - w).abs());
                count += 1;
            }
        }
    }

    let layer = GruLayer {
        input_dim: 2,
        hidden: 2,
        w_ih: vec![0.5, -0.25, 0.125, 0.75, -0.5, 0.25, 1.0, -1.0, 0.25, 0.5, -0.75, 0.125],
        w_hh: vec![0.3, -0.2, 0.1, 0.4, -0.6, 0.5, 0.2, 0.2, 0.7, -0.3, -0.4, 0.9],
        b_ih: vec![0.1, -0.1, 0.05, 0.0, -0.2, 0.3],
        b_hh: vec![0.0, 0.2, -0.05, 0.1, 0.15, -0.1],
    };
    let h = gru_cell(&[1.0f64, 0.0], &[0.5, -0.25], &layer);
    let hand = [0.442_150_780_902_390_9, -0.340_511_473_862_162_9];
    let gru_err = h.iter().zip(hand).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    check(
        worst <= 1e-5 && gru_err <= 1e-9,
        format!("{count} tiny-model values, max error {worst:.2e} (<= 1e-5); 2-unit GRU error {gru_err:.2e} (<= 1e-9)"),
    )
}

fn real_time_budget() -> Outcome {
    let tmp = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let model = tmp.path().join("default.clcw");
    let weights = ModelWeights::random(ModelConfig::default(), 707);
    weights.save(&model).map_err(|e| e.to_string())?;

    let out = Command::new(env!("CARGO_BIN_EXE_clc"))
        .args(["bench", "--model"])
        .arg(&model)
        .args(["--seconds", "10"])
        .output()
        .map_err(|e| e.to_string())?;
    let stdout = String::from_utf8_lossy(&out.stdout);
    let report: LatencyReport = stdout
        .lines()
        .next()
        .and_then(|l| serde_json::from_str(l).ok())
        .ok_or_else(|| format!("bench printed no report (exit {:?})", out.status.code()))?;

    let mut enh = Enhancer::new(Arc::new(weights)).map_err(|e| e.to_string())?;
    let x = noise(16_000, 708, 0.5);
    let mut buf = Vec::with_capacity(16_000);
    enh.process_into(&x[..4000], &mut buf).unwrap();
    let before = ALLOCATIONS.load(Ordering::SeqCst);
    let mut hops = 0;
    for piece in x[4000..].chunks(80) {
        buf.clear();
        enh.process_into(piece, &mut buf).unwrap();
        hops += 1;
    }
    let allocs = ALLOCATIONS.load(Ordering::SeqCst) - before;
    check(
        report.rtf < 1.0 && out.status.success() && allocs == 0,
        format!(
            "bench RTF {:.4} (< 1; {:.1} us mean, {:.1} us p95 per {} ms hop); {allocs} allocations over {hops} warm hops (== 0)",
            report.rtf, report.mean_us, report.p95_us, report.hop_ms
        ),
    )
}

fn parameter_count() -> Outcome {
    let config = ModelConfig::default();
    let counted = config.param_count();
    let stored = ModelWeights::zeros(config).param_count();
    check(
        counted == stored && (1_200_000..=1_500_000).contains(&counted),
        format!("default model has {counted} parameters (in [1.2M, 1.5M])"),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("STFT round trip", stft_round_trip),
        ("streaming equivalence", streaming_equivalence),
        ("CLC identity passthrough", identity_passthrough),
        ("mask subsumption + order monotonicity", mask_subsumption),
        ("SI-SDR oracle", si_sdr_oracle),
        ("mixer SNR accuracy", mixer_accuracy),
        ("inference golden vectors", golden_vectors),
        ("real-time budget", real_time_budget),
        ("parameter count", parameter_count),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
