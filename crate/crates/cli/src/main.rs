//! `spiketbr`: synthesize, corrupt, encode and compare event streams.
//!
//! Exit codes: 0 on success, 1 for runtime or data errors, 2 for usage errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use spike_tbr::encoder::active_slices;
use spike_tbr::io::{read_events, read_frame, stream_info, write_events, write_frame, EventFileFormat};
use spike_tbr::metrics::{curve_csv, fmt_sig9, mean_distance, robustness_curve, sequence_distance, FrameDistance};
use spike_tbr::noise::{inject_noise, merge_noise_recording, NoiseConfig, NoiseMerge, NoisePolarity};
use spike_tbr::synth::{generate, SceneKind, SynthScene};
use spike_tbr::{
    count_acs, EncodedFrame, Encoder, EncoderConfig, EventStream, NeuronConfig, NeuronVariant, SensorGeometry,
    SlicingConfig,
};

/// Flag combinations that are invalid independent of any file contents.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser)]
#[command(name = "spiketbr", version, about = "TBR / Spike-TBR event-camera encoding toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic event stream.
    Synth(SynthArgs),
    /// Inject Bernoulli noise, or merge a recorded noise file.
    Noise(NoiseArgs),
    /// Encode a stream into a directory of PGM frames.
    Encode(EncodeArgs),
    /// Print the active slices of each pixel of a frame.
    Decode(DecodeArgs),
    /// Frame-by-frame distance between two frame directories, as CSV.
    Compare(CompareArgs),
    /// Noise robustness curve for a synthetic scene, as CSV.
    Curve(CurveArgs),
    /// Print stream statistics.
    Info(InfoArgs),
}

fn parse_geometry(s: &str) -> Result<SensorGeometry, String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let w: u16 = w.parse().map_err(|_| format!("bad width in {s:?}"))?;
    let h: u16 = h.parse().map_err(|_| format!("bad height in {s:?}"))?;
    SensorGeometry::new(w, h).map_err(|e| e.to_string())
}

#[derive(Args)]
struct InputArgs {
    /// Event file (.csv for text, anything else for binary).
    #[arg(long = "in")]
    input: PathBuf,
    /// Sensor geometry for CSV input, e.g. 128x128.
    #[arg(long, value_parser = parse_geometry)]
    geometry: Option<SensorGeometry>,
}

impl InputArgs {
    fn check(&self) -> Result<()> {
        if EventFileFormat::from_path(&self.input) == EventFileFormat::TextCsv && self.geometry.is_none() {
            return Err(usage("--geometry is required for CSV input"));
        }
        Ok(())
    }

    fn read(&self) -> Result<EventStream> {
        read_events(&self.input, EventFileFormat::from_path(&self.input), self.geometry)
            .with_context(|| format!("reading {}", self.input.display()))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    MovingBar,
    MovingDot,
    BlinkingGrid,
}

impl From<KindArg> for SceneKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::MovingBar => SceneKind::MovingBar,
            KindArg::MovingDot => SceneKind::MovingDot,
            KindArg::BlinkingGrid => SceneKind::BlinkingGrid,
        }
    }
}

#[derive(Args)]
struct SceneArgs {
    #[arg(long, value_enum, default_value = "moving-bar")]
    kind: KindArg,
    #[arg(long, value_parser = parse_geometry, default_value = "64x64")]
    size: SensorGeometry,
    #[arg(long, default_value_t = 1000)]
    duration_ms: u64,
    /// Pixels per second (toggles per second for blinking-grid).
    #[arg(long, default_value_t = 64.0)]
    velocity: f64,
    /// Mean events per edge pixel per slice.
    #[arg(long, default_value_t = 1.0)]
    rate: f64,
    /// Bar width, dot side or lattice spacing in pixels.
    #[arg(long, default_value_t = 4)]
    object_size: u16,
    /// Slice length the rate refers to, in microseconds.
    #[arg(long = "scene-dt-us", default_value_t = 2500)]
    scene_dt_us: u64,
}

impl SceneArgs {
    fn scene(&self, seed: u64) -> Result<SynthScene> {
        let duration_us = self.duration_ms.checked_mul(1000).ok_or_else(|| usage("--duration-ms is too large"))?;
        let scene = SynthScene {
            kind: self.kind.into(),
            geometry: self.size,
            velocity: self.velocity,
            rate: self.rate,
            slice_us: self.scene_dt_us,
            object_size: self.object_size,
            duration_us,
            seed,
        };
        scene.validate().map_err(|e| usage(e.to_string()))?;
        Ok(scene)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolarityArg {
    Random,
    Positive,
}

#[derive(Args)]
struct NoiseArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    out: PathBuf,
    /// Per-pixel, per-slice noise probability.
    #[arg(long, default_value_t = 0.0)]
    p: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2500)]
    dt_us: u64,
    /// Span to corrupt, from t = 0. Defaults to the input's last event,
    /// rounded up to a whole slice.
    #[arg(long)]
    duration_us: Option<u64>,
    #[arg(long, value_enum, default_value = "random")]
    polarity: PolarityArg,
    /// Merge this recorded noise stream instead of synthetic noise.
    #[arg(long)]
    noise_file: Option<PathBuf>,
    /// Geometry of a CSV noise file.
    #[arg(long, value_parser = parse_geometry)]
    noise_geometry: Option<SensorGeometry>,
    /// With --noise-file: inject this many microseconds of the recording
    /// into every --dt-us slice instead of overlaying it in real time.
    #[arg(long)]
    noise_per_slice_us: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Tbr,
    SpikeTbr,
}

#[derive(Clone, Copy, ValueEnum)]
enum NeuronArg {
    Lif,
    Reclif,
    Lrlif,
    Plif,
}

impl From<NeuronArg> for NeuronVariant {
    fn from(n: NeuronArg) -> Self {
        match n {
            NeuronArg::Lif => NeuronVariant::Lif,
            NeuronArg::Reclif => NeuronVariant::RecLif,
            NeuronArg::Lrlif => NeuronVariant::LrLif,
            NeuronArg::Plif => NeuronVariant::Plif,
        }
    }
}

#[derive(Args)]
struct EncoderArgs {
    #[arg(long, value_enum, default_value = "tbr")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "lif")]
    neuron: NeuronArg,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    /// PLIF membrane time constant in steps; overrides --beta.
    #[arg(long)]
    tau_m: Option<f64>,
    #[arg(long, default_value_t = NeuronConfig::DEFAULT_V_TH)]
    vth: f64,
    #[arg(long, default_value_t = 0.0)]
    vrest: f64,
    #[arg(long, default_value_t = 1.0)]
    w_pos: f64,
    #[arg(long, default_value_t = 1.0)]
    w_neg: f64,
    /// Slice length in microseconds.
    #[arg(long, default_value_t = 2500)]
    dt_us: u64,
    /// Slices (bits) per frame.
    #[arg(long, default_value_t = 8)]
    bits: u32,
    /// Neuron updates per slice.
    #[arg(long, default_value_t = 1)]
    k: u32,
    /// Reset the membrane at every window instead of carrying it over.
    #[arg(long)]
    reset_each_window: bool,
}

impl EncoderArgs {
    fn config(&self) -> Result<EncoderConfig> {
        let slicing = SlicingConfig::new(self.dt_us, self.bits).map_err(|e| usage(e.to_string()))?;
        let neuron = self.neuron()?;
        let cfg = match self.mode {
            ModeArg::Tbr => EncoderConfig::tbr(slicing),
            ModeArg::SpikeTbr => EncoderConfig::spike_tbr(slicing, neuron),
        };
        let mut cfg = cfg.with_micro_steps(self.k).map_err(|e| usage(e.to_string()))?;
        cfg.reset_each_window = self.reset_each_window;
        Ok(cfg)
    }

    fn neuron(&self) -> Result<NeuronConfig> {
        let variant: NeuronVariant = self.neuron.into();
        let base = match (variant, self.tau_m) {
            (NeuronVariant::Plif, Some(tau)) => NeuronConfig::plif(tau),
            (_, Some(_)) => return Err(usage("--tau-m only applies to --neuron plif")),
            (_, None) => NeuronConfig::new(variant, self.beta),
        };
        base.and_then(|c| c.with_threshold(self.vth))
            .and_then(|c| c.with_rest(self.vrest))
            .and_then(|c| c.with_weights(self.w_pos, self.w_neg))
            .map_err(|e| usage(e.to_string()))
    }
}

#[derive(Args)]
struct EncodeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    encoder: EncoderArgs,
    /// Encode [0, duration) instead of up to the last event.
    #[arg(long)]
    duration_us: Option<u64>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    frame: PathBuf,
    /// Region as x,y,w,h; defaults to the whole frame.
    #[arg(long)]
    region: Option<String>,
    /// Also list pixels with no active slice.
    #[arg(long)]
    all: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
}

#[derive(Args)]
struct CurveArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[arg(long, default_value_t = 0)]
    scene_seed: u64,
    #[command(flatten)]
    encoder: EncoderArgs,
    /// Comma-separated noise probabilities.
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.005,0.01,0.02,0.03,0.05")]
    p_list: Vec<f64>,
    /// Noise seeds per level.
    #[arg(long, default_value_t = spike_tbr::metrics::DEFAULT_CURVE_SEEDS)]
    seeds: usize,
    /// Base seed the per-run noise seeds derive from.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also emit TBR rows for the same noise draws.
    #[arg(long)]
    baseline: bool,
    /// Write CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InfoArgs {
    #[command(flatten)]
    input: InputArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) if is_broken_pipe(&err) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.downcast_ref::<std::io::Error>().is_some_and(|e| e.kind() == std::io::ErrorKind::BrokenPipe)
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth(a) => cmd_synth(a),
        Command::Noise(a) => cmd_noise(a),
        Command::Encode(a) => cmd_encode(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Curve(a) => cmd_curve(a),
        Command::Info(a) => cmd_info(a),
    }
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let scene = a.scene.scene(a.seed)?;
    let stream = generate(&scene)?;
    write_events(&stream, &a.out, EventFileFormat::from_path(&a.out))
        .with_context(|| format!("writing {}", a.out.display()))?;
    println!("{}", stream_info(&stream));
    Ok(())
}

fn cmd_noise(a: NoiseArgs) -> Result<()> {
    a.input.check()?;
    let noise_cfg = NoiseConfig::new(a.p, a.dt_us, a.seed).map_err(|e| usage(e.to_string()))?;
    let noise_cfg = noise_cfg.with_polarity(match a.polarity {
        PolarityArg::Random => NoisePolarity::RandomUniform,
        PolarityArg::Positive => NoisePolarity::FixedPositive,
    });
    if a.noise_per_slice_us.is_some() && a.noise_file.is_none() {
        return Err(usage("--noise-per-slice-us requires --noise-file"));
    }
    if a.noise_per_slice_us == Some(0) {
        return Err(usage("--noise-per-slice-us must be positive"));
    }
    if let Some(path) = &a.noise_file {
        if EventFileFormat::from_path(path) == EventFileFormat::TextCsv && a.noise_geometry.is_none() {
            return Err(usage("--noise-geometry is required for a CSV noise file"));
        }
    }

    let signal = a.input.read()?;
    let out = match &a.noise_file {
        Some(path) => {
            let noise = read_events(path, EventFileFormat::from_path(path), a.noise_geometry)
                .with_context(|| format!("reading {}", path.display()))?;
            let mode = match a.noise_per_slice_us {
                Some(len) => NoiseMerge::PerSlice { slice_us: a.dt_us, noise_per_slice_us: len },
                None => NoiseMerge::Continuous,
            };
            merge_noise_recording(&signal, &noise, signal.geometry(), mode)?
        }
        None => {
            let end =
                a.duration_us.unwrap_or_else(|| signal.last_t().map_or(0, |t| (t + 1).div_ceil(a.dt_us) * a.dt_us));
            if end == 0 {
                signal
            } else {
                inject_noise(&signal, &noise_cfg, 0..end)?
            }
        }
    };
    write_events(&out, &a.out, EventFileFormat::from_path(&a.out))
        .with_context(|| format!("writing {}", a.out.display()))?;
    println!("{}", stream_info(&out));
    Ok(())
}

fn cmd_encode(a: EncodeArgs) -> Result<()> {
    a.input.check()?;
    let cfg = a.encoder.config()?;
    if cfg.slicing.bits() > 16 {
        return Err(usage(format!("--bits {} cannot be stored as PGM (at most 16)", cfg.slicing.bits())));
    }
    let stream = a.input.read()?;
    let span_end = a.duration_us.unwrap_or_else(|| stream.last_t().map_or(0, |t| t + 1));
    let mut encoder = Encoder::new(cfg, stream.geometry());
    let frames = encoder.encode_span(&stream, span_end)?;

    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let mut manifest = String::new();
    for (i, frame) in frames.iter().enumerate() {
        let path = a.out_dir.join(format!("{i:05}.pgm"));
        write_frame(frame, &path).with_context(|| format!("writing {}", path.display()))?;
        let line = serde_json::json!({
            "index": i,
            "window_start_us": frame.window_start,
            "nonzero_pixels": frame.nonzero_pixels(),
        });
        manifest.push_str(&line.to_string());
        manifest.push('\n');
    }
    fs::write(a.out_dir.join("manifest.jsonl"), manifest)?;

    println!("encoder: {}", cfg.label());
    println!("frames: {}", frames.len());
    println!("events: {}", stream.len());
    if let Some(grid) = encoder.grid() {
        let stats = grid.stats();
        println!("spikes: {}", stats.spikes);
        println!("acs: {}", count_acs(&stats).total());
    }
    Ok(())
}

fn parse_region(s: &str) -> Result<[u16; 4]> {
    let parts: Vec<&str> = s.split(',').collect();
    let nums: Result<Vec<u16>, _> = parts.iter().map(|p| p.trim().parse::<u16>()).collect();
    match nums {
        Ok(v) if v.len() == 4 => Ok([v[0], v[1], v[2], v[3]]),
        _ => Err(usage(format!("--region expects x,y,w,h, got {s:?}"))),
    }
}

fn cmd_decode(a: DecodeArgs) -> Result<()> {
    let region = a.region.as_deref().map(parse_region).transpose()?;
    let frame = read_frame(&a.frame).with_context(|| format!("reading {}", a.frame.display()))?;
    let g = frame.geometry();
    let [x0, y0, w, h] = region.unwrap_or([0, 0, g.width(), g.height()]);
    let x1 = x0.saturating_add(w).min(g.width());
    let y1 = y0.saturating_add(h).min(g.height());
    let mut out = std::io::stdout().lock();
    for y in y0..y1 {
        for x in x0..x1 {
            let code = frame.code(x, y);
            if code == 0 && !a.all {
                continue;
            }
            let slices: Vec<String> = active_slices(code, frame.bits()).iter().map(u32::to_string).collect();
            writeln!(out, "{x},{y} code {code} slices: {}", slices.join(","))?;
        }
    }
    Ok(())
}

fn read_frame_dir(dir: &Path) -> Result<Vec<EncodedFrame>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "pgm"));
    paths.sort();
    paths.iter().map(|p| read_frame(p).with_context(|| format!("reading {}", p.display()))).collect()
}

fn cmd_compare(a: CompareArgs) -> Result<()> {
    let fa = read_frame_dir(&a.a)?;
    let fb = read_frame_dir(&a.b)?;
    if fa.len() != fb.len() {
        bail!("frame count mismatch: {} has {}, {} has {}", a.a.display(), fa.len(), a.b.display(), fb.len());
    }
    let dists = sequence_distance(&fa, &fb)?;
    print!("{}", compare_csv(&dists));
    Ok(())
}

fn compare_csv(dists: &[FrameDistance]) -> String {
    let mut out = String::from("frame,l1_mean,hamming_bits,changed_pixels\n");
    for (i, d) in dists.iter().enumerate() {
        out.push_str(&format!("{i},{},{},{}\n", fmt_sig9(d.l1_mean), d.hamming_bits, d.changed_pixels));
    }
    let m = mean_distance(dists);
    out.push_str(&format!(
        "mean,{},{},{}\n",
        fmt_sig9(m.l1_mean),
        fmt_sig9(m.hamming_mean),
        fmt_sig9(m.changed_pixels_mean)
    ));
    out
}

fn cmd_curve(a: CurveArgs) -> Result<()> {
    let scene = a.scene.scene(a.scene_seed)?;
    let cfg = a.encoder.config()?;
    if a.seeds == 0 {
        return Err(usage("--seeds must be positive"));
    }
    if let Some(p) = a.p_list.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(usage(format!("noise level {p} is outside [0, 1]")));
    }
    let mut rows = Vec::new();
    if a.baseline && cfg.mode != spike_tbr::EncoderMode::Tbr {
        rows.extend(robustness_curve(&scene, &EncoderConfig::tbr(cfg.slicing), &a.p_list, a.seeds, a.seed)?);
    }
    rows.extend(robustness_curve(&scene, &cfg, &a.p_list, a.seeds, a.seed)?);
    eprintln!(
        "note: distances measure frame drift against the clean encoding; they stand in for classification accuracy"
    );
    let csv = curve_csv(&rows);
    match &a.out {
        Some(path) => fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_info(a: InfoArgs) -> Result<()> {
    a.input.check()?;
    let stream = a.input.read()?;
    println!("geometry: {}", stream.geometry());
    println!("{}", stream_info(&stream));
    Ok(())
}
