//! Frame distances and noise-filtering measurements.
//!
//! Classification accuracy is not measured here. Robustness is reported as
//! drift of the encoded frames under noise relative to the clean encoding of
//! the same scene; less drift is the mechanism by which a downstream
//! classifier keeps its accuracy.

use rayon::prelude::*;
use thiserror::Error;

use crate::encoder::{encode_span, EncodeError, EncodedFrame, Encoder, EncoderConfig, EncoderMode};
use crate::events::{EventStream, SensorGeometry};
use crate::noise::{inject_noise, NoiseConfig, NoiseError};
use crate::rng::derive_seed;
use crate::synth::{generate, ReferenceError, SynthScene};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("frames differ in shape: {a} with {a_bits} bits vs {b} with {b_bits} bits")]
    ShapeMismatch { a: SensorGeometry, a_bits: u32, b: SensorGeometry, b_bits: u32 },
    #[error("frame sequences differ in length: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("suppression rate needs a Spike-TBR configuration")]
    NotSpiking,
    #[error("noise level {0} is outside [0, 1]")]
    BadNoiseLevel(f64),
    #[error("at least one seed is required")]
    NoSeeds,
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Reference(#[from] ReferenceError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FrameDistance {
    /// Mean over pixels of `|a − b| / (2^N − 1)`.
    pub l1_mean: f64,
    /// Differing bits across the two slice stacks.
    pub hamming_bits: u64,
    pub changed_pixels: u64,
}

pub fn frame_distance(a: &EncodedFrame, b: &EncodedFrame) -> Result<FrameDistance, MetricsError> {
    if a.geometry() != b.geometry() || a.bits() != b.bits() {
        return Err(MetricsError::ShapeMismatch {
            a: a.geometry(),
            a_bits: a.bits(),
            b: b.geometry(),
            b_bits: b.bits(),
        });
    }
    let mut abs_sum = 0u64;
    let mut hamming_bits = 0u64;
    let mut changed_pixels = 0u64;
    for (&x, &y) in a.codes().iter().zip(b.codes()) {
        abs_sum += x.abs_diff(y) as u64;
        hamming_bits += (x ^ y).count_ones() as u64;
        changed_pixels += u64::from(x != y);
    }
    let l1_mean = abs_sum as f64 / a.max_code() as f64 / a.codes().len() as f64;
    Ok(FrameDistance { l1_mean, hamming_bits, changed_pixels })
}

/// Per-frame distances between two equally long frame sequences.
pub fn sequence_distance(a: &[EncodedFrame], b: &[EncodedFrame]) -> Result<Vec<FrameDistance>, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch { a: a.len(), b: b.len() });
    }
    a.iter().zip(b).map(|(x, y)| frame_distance(x, y)).collect()
}

/// Field-wise mean of a set of distances.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanDistance {
    pub l1_mean: f64,
    pub hamming_mean: f64,
    pub changed_pixels_mean: f64,
}

pub fn mean_distance(ds: &[FrameDistance]) -> MeanDistance {
    if ds.is_empty() {
        return MeanDistance::default();
    }
    let n = ds.len() as f64;
    MeanDistance {
        l1_mean: ds.iter().map(|d| d.l1_mean).sum::<f64>() / n,
        hamming_mean: ds.iter().map(|d| d.hamming_bits as f64).sum::<f64>() / n,
        changed_pixels_mean: ds.iter().map(|d| d.changed_pixels as f64).sum::<f64>() / n,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FilterStats {
    pub input_events: u64,
    pub output_spikes: u64,
}

impl FilterStats {
    /// `input / output`; infinite when nothing fired, 1 when both are zero.
    pub fn suppression_factor(&self) -> f64 {
        match (self.input_events, self.output_spikes) {
            (0, 0) => 1.0,
            (_, 0) => f64::INFINITY,
            (i, o) => i as f64 / o as f64,
        }
    }
}

/// Encodes `stream` with a Spike-TBR configuration and counts events in
/// against spikes out.
pub fn suppression_rate(stream: &EventStream, cfg: &EncoderConfig) -> Result<FilterStats, MetricsError> {
    if cfg.mode != EncoderMode::SpikeTbr {
        return Err(MetricsError::NotSpiking);
    }
    let mut encoder = Encoder::new(*cfg, stream.geometry());
    let span_end = stream.last_t().map_or(0, |t| t + 1);
    encoder.encode_span(stream, span_end)?;
    let stats = encoder.stats();
    Ok(FilterStats { input_events: stats.events_integrated, output_spikes: stats.spikes })
}

/// One row of a robustness curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub p: f64,
    pub encoder: String,
    pub l1_mean: f64,
    /// Sample standard deviation of the per-seed `l1_mean` (0 for one seed).
    pub l1_std: f64,
    pub hamming_mean: f64,
    pub changed_pixels_mean: f64,
}

pub const CURVE_CSV_HEADER: &str = "p,encoder,l1_mean,l1_std,hamming_mean,changed_pixels_mean";
pub const DEFAULT_CURVE_SEEDS: usize = 20;

/// For every noise level, injects seeded noise into the scene, encodes it and
/// compares frame by frame with the clean encoding under the same encoder.
/// The noise seed of run `i` at level index `j` is derived from
/// `(base_seed, j·seeds + i)`.
pub fn robustness_curve(
    scene: &SynthScene,
    cfg: &EncoderConfig,
    noise_levels: &[f64],
    seeds: usize,
    base_seed: u64,
) -> Result<Vec<CurveRow>, MetricsError> {
    if seeds == 0 {
        return Err(MetricsError::NoSeeds);
    }
    if let Some(&p) = noise_levels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(MetricsError::BadNoiseLevel(p));
    }
    let clean = generate(scene).map_err(ReferenceError::from)?;
    let reference = encode_span(&clean, cfg, scene.duration_us)?;
    let span = 0..scene.duration_us.max(1);

    let runs: Vec<(usize, usize)> = (0..noise_levels.len()).flat_map(|j| (0..seeds).map(move |i| (j, i))).collect();
    let per_run: Vec<MeanDistance> = runs
        .par_iter()
        .map(|&(j, i)| -> Result<MeanDistance, MetricsError> {
            let seed = derive_seed(base_seed, (j * seeds + i) as u64);
            let noise = NoiseConfig::new(noise_levels[j], cfg.slicing.slice_us(), seed)?;
            let noisy = inject_noise(&clean, &noise, span.clone())?;
            let frames = encode_span(&noisy, cfg, scene.duration_us)?;
            Ok(mean_distance(&sequence_distance(&frames, &reference)?))
        })
        .collect::<Result<_, _>>()?;

    let label = cfg.label();
    Ok(noise_levels
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            let runs = &per_run[j * seeds..(j + 1) * seeds];
            let n = seeds as f64;
            let l1_mean = runs.iter().map(|r| r.l1_mean).sum::<f64>() / n;
            let l1_std = if seeds > 1 {
                (runs.iter().map(|r| (r.l1_mean - l1_mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            CurveRow {
                p,
                encoder: label.clone(),
                l1_mean,
                l1_std,
                hamming_mean: runs.iter().map(|r| r.hamming_mean).sum::<f64>() / n,
                changed_pixels_mean: runs.iter().map(|r| r.changed_pixels_mean).sum::<f64>() / n,
            }
        })
        .collect())
}

/// CSV rows (with header), LF line endings.
pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from(CURVE_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_sig9(r.p),
            r.encoder,
            fmt_sig9(r.l1_mean),
            fmt_sig9(r.l1_std),
            fmt_sig9(r.hamming_mean),
            fmt_sig9(r.changed_pixels_mean)
        ));
    }
    out
}

/// Formats like C's `%.9g`: 9 significant digits, trailing zeros dropped,
/// exponent form outside `[1e-4, 1e9)`.
pub fn fmt_sig9(v: f64) -> String {
    const P: i32 = 9;
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..P).contains(&exp) {
        let decimals = (P - 1 - exp) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa.to_owned()), exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_owned()
}
