//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use spike_tbr::metrics::{robustness_curve, suppression_rate};
use spike_tbr::noise::{noise_only_stream, NoiseConfig};
use spike_tbr::synth::SynthScene;
use spike_tbr::{
    count_acs, decode_tbr, encode_stream, encode_tbr, BinarySliceStack, BitFrame, EncodedFrame, Encoder, EncoderConfig,
    Event, EventStream, NeuronConfig, NeuronGrid, NeuronVariant, SensorGeometry, SlicingConfig, StepInput,
};

/// sha256 over every output file of the golden pipeline, in path order.
const GOLDEN_DIGEST: &str = "da991c4fdab6c582663ce514085404ca839602fee0f9ef9097ca3780180ac6fa";

const BETAS: [f64; 4] = [0.3, 0.5, 0.7, 0.9];

type Check = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn geometry(w: u16, h: u16) -> SensorGeometry {
    SensorGeometry::new(w, h).unwrap()
}

fn slicing(bits: u32) -> SlicingConfig {
    SlicingConfig::new(2500, bits).unwrap()
}

fn random_stack(rng: &mut ChaCha8Rng, g: SensorGeometry, bits: u32) -> BinarySliceStack {
    let slices = (0..bits)
        .map(|_| {
            let mut f = BitFrame::zeros(g);
            for v in f.as_mut_slice() {
                *v = rng.random_bool(0.5);
            }
            f
        })
        .collect();
    BinarySliceStack::from_slices(slices, 0)
}

fn random_stream(rng: &mut ChaCha8Rng, g: SensorGeometry, span_us: u64) -> EventStream {
    let n = rng.random_range(0..400);
    let mut events: Vec<Event> = (0..n)
        .map(|_| {
            let p = if rng.random_bool(0.5) { 1 } else { -1 };
            Event::new(rng.random_range(0..span_us), rng.random_range(0..g.width()), rng.random_range(0..g.height()), p)
        })
        .collect();
    events.sort_by_key(|e| e.t);
    EventStream::new(g, events).unwrap()
}

fn c1_tbr_lossless() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = geometry(32, 32);
    let mut bad = 0;
    for _ in 0..1000 {
        let stack = random_stack(&mut rng, g, 8);
        if decode_tbr(&encode_tbr(&stack)).unwrap() != stack {
            bad += 1;
        }
    }
    let elapsed = started.elapsed();
    outcome(
        bad == 0 && elapsed < Duration::from_secs(1),
        format!("1000 stacks 32x32x8, {bad} mismatches, {elapsed:.2?}"),
    )
}

fn c2_msb_sensitivity() -> Outcome {
    let g = geometry(1, 1);
    let mut bad = 0;
    for base in 0u32..256 {
        let frame = EncodedFrame::from_codes(g, 8, vec![base], 0).unwrap();
        let mut stack = decode_tbr(&frame).unwrap();
        stack.slice_mut(7).set(0, 0, true);
        let bumped = encode_tbr(&stack).code(0, 0);
        let expected = if base & 0x80 == 0 { base + 128 } else { base };
        if bumped != expected {
            bad += 1;
        }
    }
    let zero = EncodedFrame::from_codes(g, 8, vec![128], 0).unwrap().normalized(0, 0);
    outcome(bad == 0 && zero >= 0.5, format!("256 base codes, {bad} wrong deltas, 0 -> {zero:.4}"))
}

fn c3_equivalence_lever() -> Outcome {
    let g = geometry(16, 16);
    let tbr = EncoderConfig::tbr(slicing(8));
    let mut bad = 0;
    for &beta in &BETAS {
        let neuron = NeuronConfig::lif(beta).unwrap().with_threshold(1.0).unwrap();
        let spike = EncoderConfig::spike_tbr(slicing(8), neuron);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let stream = random_stream(&mut rng, g, 3 * slicing(8).window_us());
            if encode_stream(&stream, &spike).unwrap() != encode_stream(&stream, &tbr).unwrap() {
                bad += 1;
            }
        }
    }
    outcome(bad == 0, format!("200 streams x 4 betas, {bad} differing"))
}

fn c4_decay_law() -> Outcome {
    let g = geometry(1, 1);
    let mut worst = 0.0f64;
    for &beta in &BETAS {
        let mut grid = NeuronGrid::new(g, NeuronConfig::lif(beta).unwrap());
        let v0 = 1.0;
        grid.set_potential(0, 0, v0);
        let zero = StepInput::zeros(g);
        for k in 1..=60 {
            grid.step(&zero).unwrap();
            let err = (grid.potential(0, 0) - beta.powi(k) * v0).abs() / v0;
            worst = worst.max(err);
        }
    }
    outcome(worst <= 1e-12, format!("k <= 60, 4 betas, worst relative error {worst:.3e}"))
}

fn c5_two_event_window() -> Outcome {
    let g = geometry(1, 1);
    let neuron = NeuronConfig::lif(0.5).unwrap();
    let cfg = EncoderConfig::spike_tbr(slicing(16), neuron);
    let mut wrong = Vec::new();
    for k in 1u64..=8 {
        let events = vec![Event::new(100, 0, 0, 1), Event::new(k * 2500 + 100, 0, 0, 1)];
        let stream = EventStream::new(g, events).unwrap();
        let frames = encode_stream(&stream, &cfg).unwrap();
        let spiked = frames.iter().any(|f| f.code(0, 0) != 0);
        if spiked != (k <= 3) {
            wrong.push(k);
        }
    }
    outcome(wrong.is_empty(), format!("k in 1..=8, spike iff k <= 3, wrong at {wrong:?}"))
}

fn c6_soft_vs_hard_reset() -> Outcome {
    let g = geometry(40, 25);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_soft = 0.0f64;
    let mut worst_hard = 0.0f64;
    let mut missed = 0;
    for (variant, v_rest) in [(NeuronVariant::LrLif, 0.0), (NeuronVariant::Lif, 0.0), (NeuronVariant::Lif, -0.25)] {
        let cfg = NeuronConfig::new(variant, 0.5).unwrap().with_rest(v_rest).unwrap();
        let v_th = cfg.v_th;
        let before: Vec<f64> = (0..g.pixel_count()).map(|_| rng.random_range(v_th..=3.0 * v_th)).collect();
        let mut grid = NeuronGrid::new(g, cfg);
        // From rest the decay term vanishes, so the pre-reset potential is
        // v_rest + x.
        let input = StepInput::from_values(g, before.iter().map(|v| v - v_rest).collect());
        let spikes = grid.step(&input).unwrap();
        missed += spikes.as_slice().iter().filter(|s| !**s).count();
        for (i, &vb) in before.iter().enumerate() {
            let v = grid.potentials()[i];
            if variant.soft_reset() {
                worst_soft = worst_soft.max((v - (vb - v_th)).abs());
            } else {
                worst_hard = worst_hard.max((v - v_rest).abs());
            }
        }
    }
    outcome(
        missed == 0 && worst_soft <= 1e-12 && worst_hard == 0.0,
        format!("1000 potentials, soft err {worst_soft:.2e}, hard err {worst_hard:.2e}, {missed} missed spikes"),
    )
}

fn mean_suppression(beta: f64) -> f64 {
    let g = geometry(128, 128);
    let neuron = NeuronConfig::lif(beta).unwrap();
    let cfg = EncoderConfig::spike_tbr(slicing(8), neuron);
    let seeds = 20;
    (0..seeds)
        .map(|seed| {
            let noise = NoiseConfig::new(0.01, 2500, seed).unwrap();
            let stream = noise_only_stream(&noise, g, 0..200 * 2500).unwrap();
            suppression_rate(&stream, &cfg).unwrap().suppression_factor()
        })
        .sum::<f64>()
        / seeds as f64
}

fn c7_noise_suppression() -> Outcome {
    let started = Instant::now();
    let factor = mean_suppression(0.5);
    let elapsed = started.elapsed();
    outcome(
        factor >= 10.0 && elapsed < Duration::from_secs(10),
        format!("128x128 p=0.01 200 slices 20 seeds, factor {factor:.2}, {elapsed:.2?}"),
    )
}

fn c8_robustness() -> Outcome {
    let started = Instant::now();
    let scene = SynthScene::moving_bar(geometry(64, 64), 1_000_000, 0);
    let levels = [0.005, 0.01, 0.03];
    let tbr = robustness_curve(&scene, &EncoderConfig::tbr(slicing(8)), &levels, 20, 8).unwrap();
    let spike_cfg = EncoderConfig::spike_tbr(slicing(8), NeuronConfig::lif(0.5).unwrap());
    let spike = robustness_curve(&scene, &spike_cfg, &levels, 20, 8).unwrap();
    let elapsed = started.elapsed();
    let ratios: Vec<f64> = tbr.iter().zip(&spike).map(|(t, s)| s.l1_mean / t.l1_mean).collect();
    let below = tbr.iter().zip(&spike).all(|(t, s)| s.l1_mean < t.l1_mean);
    outcome(
        below && ratios[1] <= 0.5 && elapsed < Duration::from_secs(60),
        format!(
            "spike/tbr l1 ratio at p=0.005,0.01,0.03: {:.3},{:.3},{:.3}, {elapsed:.2?}",
            ratios[0], ratios[1], ratios[2]
        ),
    )
}

fn c9_beta_direction() -> Outcome {
    let factors: Vec<f64> = BETAS.iter().map(|&b| mean_suppression(b)).collect();
    let monotone = factors.windows(2).all(|w| w[1] <= w[0]);
    let shown: Vec<String> = factors.iter().map(|f| format!("{f:.1}")).collect();
    outcome(monotone, format!("factor at beta 0.3,0.5,0.7,0.9: {}", shown.join(",")))
}

fn c10_ac_counting() -> Outcome {
    // Hand script on one RecLIF pixel, beta 0.5, threshold 1.1:
    // step 0 event -> 1.0; step 1 event -> 1.5 spike; step 2 feedback -> 1.0;
    // steps 3, 4 events -> 1.5 spike at step 3, then 0 + 1 + 1 = 2.0 spike at
    // step 4; step 5 feedback -> 1.0. Four events, three feedback inputs.
    let g = geometry(1, 1);
    let cfg = NeuronConfig::new(NeuronVariant::RecLif, 0.5).unwrap();
    let mut grid = NeuronGrid::new(g, cfg);
    let mut expected_spikes = Vec::new();
    for (step, event) in [true, true, false, true, true, false].into_iter().enumerate() {
        let mut input = StepInput::zeros(g);
        if event {
            input.add_event(0, 0, 1, &cfg);
        }
        if grid.step(&input).unwrap().get(0, 0) {
            expected_spikes.push(step);
        }
    }
    let acs = count_acs(&grid.stats());
    let scripted = acs.total() == 4 + 3 && expected_spikes == [1, 3, 4];

    // Random drive against a scalar replay that counts feedback on its own.
    let g = geometry(8, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut grid = NeuronGrid::new(g, cfg);
    let mut v = vec![0.0f64; g.pixel_count()];
    let mut fb = vec![false; g.pixel_count()];
    let (mut e, mut f) = (0u64, 0u64);
    for _ in 0..500 {
        let mut input = StepInput::zeros(g);
        let mut x = vec![0.0f64; g.pixel_count()];
        for (i, xi) in x.iter_mut().enumerate() {
            if rng.random_bool(0.3) {
                let (px, py) = g.coords(i);
                input.add_event(px, py, 1, &cfg);
                *xi = 1.0;
                e += 1;
            }
        }
        grid.step(&input).unwrap();
        for i in 0..v.len() {
            let mut u = 0.5 * v[i] + x[i];
            if fb[i] {
                u += 1.0;
                f += 1;
            }
            fb[i] = u >= 1.1;
            v[i] = if fb[i] { 0.0 } else { u };
        }
    }
    let random = count_acs(&grid.stats()).total() == e + f;
    outcome(
        scripted && random,
        format!(
            "scripted 4 events + 3 feedback = {}, random run E+F = {} vs {}",
            acs.total(),
            e + f,
            count_acs(&grid.stats()).total()
        ),
    )
}

fn spiketbr(dir: &Path, args: &[&str]) -> Result<Vec<u8>, String> {
    let out =
        Command::new(env!("CARGO_BIN_EXE_spiketbr")).current_dir(dir).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn golden_run() -> Result<Vec<u8>, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = tmp.path();
    spiketbr(
        d,
        &[
            "synth",
            "--kind",
            "moving-bar",
            "--size",
            "64x64",
            "--duration-ms",
            "200",
            "--seed",
            "7",
            "--out",
            "clean.evs",
        ],
    )?;
    spiketbr(d, &["noise", "--in", "clean.evs", "--out", "noisy.evs", "--p", "0.01", "--seed", "1"])?;
    let enc = ["--mode", "spike-tbr", "--neuron", "lif", "--beta", "0.5"];
    spiketbr(d, &[&["encode", "--in", "clean.evs", "--out-dir", "clean"][..], &enc].concat())?;
    spiketbr(d, &[&["encode", "--in", "noisy.evs", "--out-dir", "noisy"][..], &enc].concat())?;
    let csv = spiketbr(d, &["compare", "--a", "noisy", "--b", "clean"])?;
    fs::write(d.join("compare.csv"), csv).map_err(|e| e.to_string())?;

    let mut files = Vec::new();
    for sub in ["clean", "noisy"] {
        for entry in fs::read_dir(d.join(sub)).map_err(|e| e.to_string())? {
            files.push(entry.map_err(|e| e.to_string())?.path());
        }
    }
    files.extend(["clean.evs", "noisy.evs", "compare.csv"].map(|f| d.join(f)));
    files.sort();
    let mut blob = Vec::new();
    for f in files {
        blob.extend_from_slice(f.strip_prefix(d).unwrap().to_string_lossy().as_bytes());
        blob.push(0);
        blob.extend(fs::read(&f).map_err(|e| e.to_string())?);
    }
    Ok(blob)
}

fn c11_golden_pipeline() -> Outcome {
    let (a, b) = match (golden_run(), golden_run()) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return outcome(false, format!("pipeline failed: {e}")),
    };
    let digest: String = Sha256::digest(&a).iter().map(|b| format!("{b:02x}")).collect();
    outcome(a == b && digest == GOLDEN_DIGEST, format!("two runs identical: {}, sha256 {digest}", a == b))
}

fn c12_throughput() -> Outcome {
    let g = geometry(128, 128);
    let mut scene = SynthScene::moving_bar(g, 500_000, 12);
    scene.rate = 2.0;
    let clean = spike_tbr::synth::generate(&scene).unwrap();
    let noise = NoiseConfig::new(0.05, 2500, 12).unwrap();
    let stream = spike_tbr::noise::inject_noise(&clean, &noise, 0..500_000).unwrap();
    let cfg = EncoderConfig::spike_tbr(slicing(8), NeuronConfig::lif(0.5).unwrap());
    let mut best = Duration::MAX;
    for _ in 0..5 {
        let started = Instant::now();
        let mut encoder = Encoder::new(cfg, g);
        std::hint::black_box(encoder.encode_span(&stream, 500_000).unwrap());
        best = best.min(started.elapsed());
    }
    let rate = stream.len() as f64 / best.as_secs_f64();
    outcome(rate >= 1e6, format!("{} events in {best:.2?}, {:.2}M events/s", stream.len(), rate / 1e6))
}

fn main() {
    let criteria: [(&str, Check); 12] = [
        ("tbr losslessness", c1_tbr_lossless),
        ("msb sensitivity", c2_msb_sensitivity),
        ("spike-tbr/tbr equivalence lever", c3_equivalence_lever),
        ("decay law", c4_decay_law),
        ("two-event firing window", c5_two_event_window),
        ("soft vs hard reset", c6_soft_vs_hard_reset),
        ("noise suppression", c7_noise_suppression),
        ("representation robustness", c8_robustness),
        ("beta direction of effect", c9_beta_direction),
        ("ac counting", c10_ac_counting),
        ("golden pipeline", c11_golden_pipeline),
        ("throughput floor", c12_throughput),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("criterion {:>2} {} {name}: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
