//! Synthetic and recorded noise injection.
//!
//! Synthetic noise adds, for every pixel and every `Δt` slice of a span, one
//! event with probability `p` at a uniform time inside the slice. Each
//! `(pixel, slice)` decision draws from its own keyed generator, so results
//! do not depend on iteration order or thread count.

use rayon::prelude::*;
use thiserror::Error;

use crate::events::{Event, EventStream, Micros, SensorGeometry, NEGATIVE, POSITIVE};
use crate::rng::{domain, CellRng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("noise probability must be in [0, 1], got {0}")]
    ProbabilityOutOfRange(f64),
    #[error("slice duration must be positive")]
    ZeroSliceDuration,
    #[error("noise recording is empty")]
    EmptyNoiseRecording,
    #[error("span [{start}, {end}) is empty")]
    EmptySpan { start: Micros, end: Micros },
    #[error("signal geometry {signal} does not match target geometry {target}")]
    GeometryMismatch { signal: SensorGeometry, target: SensorGeometry },
    #[error("per-slice noise length must be positive")]
    ZeroNoisePerSlice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoisePolarity {
    #[default]
    RandomUniform,
    FixedPositive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    probability: f64,
    slice_us: Micros,
    pub seed: u64,
    pub polarity: NoisePolarity,
}

impl NoiseConfig {
    pub fn new(probability: f64, slice_us: Micros, seed: u64) -> Result<Self, NoiseError> {
        if !(0.0..=1.0).contains(&probability) {
            return Err(NoiseError::ProbabilityOutOfRange(probability));
        }
        if slice_us == 0 {
            return Err(NoiseError::ZeroSliceDuration);
        }
        Ok(NoiseConfig { probability, slice_us, seed, polarity: NoisePolarity::default() })
    }

    pub fn with_polarity(mut self, polarity: NoisePolarity) -> Self {
        self.polarity = polarity;
        self
    }

    pub fn probability(&self) -> f64 {
        self.probability
    }

    pub fn slice_us(&self) -> Micros {
        self.slice_us
    }
}

/// Noise events for `[start, end)`, sorted by time (pixel index breaks ties).
/// Slice `k` is `[start + k·Δt, start + (k+1)·Δt)`, clipped to `end`.
fn generate_noise(cfg: &NoiseConfig, geometry: SensorGeometry, start: Micros, end: Micros) -> Vec<Event> {
    if cfg.probability == 0.0 || end <= start {
        return Vec::new();
    }
    let slices = (end - start).div_ceil(cfg.slice_us);
    let pixels = geometry.pixel_count();
    let per_slice: Vec<Vec<Event>> = (0..slices)
        .into_par_iter()
        .map(|k| {
            let s0 = start + k * cfg.slice_us;
            let len = cfg.slice_us.min(end - s0);
            let mut out = Vec::new();
            for idx in 0..pixels {
                let mut rng = CellRng::new(cfg.seed, domain::NOISE, idx as u64, k);
                if !rng.bernoulli(cfg.probability) {
                    continue;
                }
                let t = s0 + rng.below(len);
                let p = match cfg.polarity {
                    NoisePolarity::FixedPositive => POSITIVE,
                    NoisePolarity::RandomUniform if rng.next_u64() >> 63 == 0 => NEGATIVE,
                    NoisePolarity::RandomUniform => POSITIVE,
                };
                let (x, y) = geometry.coords(idx);
                out.push(Event::new(t, x, y, p));
            }
            out.sort_by_key(|e| e.t);
            out
        })
        .collect();
    per_slice.into_iter().flatten().collect()
}

/// Merges two time-sorted event lists; on equal timestamps `a` comes first.
fn merge_sorted(a: &[Event], b: &[Event]) -> Vec<Event> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if b[j].t < a[i].t {
            out.push(b[j]);
            j += 1;
        } else {
            out.push(a[i]);
            i += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Adds Bernoulli noise over `span` to `stream`. Every original event is
/// kept; at equal timestamps originals precede noise.
pub fn inject_noise(
    stream: &EventStream,
    cfg: &NoiseConfig,
    span: std::ops::Range<Micros>,
) -> Result<EventStream, NoiseError> {
    if span.start >= span.end {
        return Err(NoiseError::EmptySpan { start: span.start, end: span.end });
    }
    let noise = generate_noise(cfg, stream.geometry(), span.start, span.end);
    Ok(EventStream::new_unchecked(stream.geometry(), merge_sorted(stream.events(), &noise)))
}

/// Noise alone over `span`.
pub fn noise_only_stream(
    cfg: &NoiseConfig,
    geometry: SensorGeometry,
    span: std::ops::Range<Micros>,
) -> Result<EventStream, NoiseError> {
    inject_noise(&EventStream::empty(geometry), cfg, span)
}

/// How a recorded noise stream is laid over a signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMerge {
    /// Noise time `0` is aligned to the signal's first event and the
    /// recording is repeated until it covers the signal.
    Continuous,
    /// Each signal slice of `slice_us` receives the noise of a consecutive
    /// `noise_per_slice_us` stretch of the recording, time-scaled into the
    /// slice. Slices are aligned to the signal's first event.
    PerSlice { slice_us: Micros, noise_per_slice_us: Micros },
}

/// A noise recording rescaled to the target sensor and re-based to `t = 0`,
/// viewed as an infinite periodic timeline.
struct TiledNoise {
    period: Micros,
    events: Vec<Event>,
}

impl TiledNoise {
    fn new(noise: &EventStream, target: SensorGeometry) -> Result<Self, NoiseError> {
        let (Some(first), Some(last)) = (noise.first_t(), noise.last_t()) else {
            return Err(NoiseError::EmptyNoiseRecording);
        };
        let src = noise.geometry();
        let scale = |v: u16, from: u16, to: u16| (v as u64 * to as u64 / from as u64) as u16;
        let events = noise
            .events()
            .iter()
            .map(|e| Event {
                t: e.t - first,
                x: scale(e.x, src.width(), target.width()),
                y: scale(e.y, src.height(), target.height()),
                p: e.p,
            })
            .collect();
        Ok(TiledNoise { period: last - first + 1, events })
    }

    /// Events of the tiled timeline in `[from, from + len)`, with their
    /// tiled timestamps.
    fn window(&self, from: Micros, len: Micros, mut emit: impl FnMut(Micros, &Event)) {
        if len == 0 {
            return;
        }
        let end = from + len;
        let mut tile = from / self.period;
        loop {
            let base = tile * self.period;
            if base >= end {
                break;
            }
            let lo = from.saturating_sub(base);
            let hi = (end - base).min(self.period);
            let a = self.events.partition_point(|e| e.t < lo);
            let b = self.events.partition_point(|e| e.t < hi);
            for e in &self.events[a..b] {
                emit(base + e.t, e);
            }
            tile += 1;
        }
    }
}

/// Lays a recorded noise stream over `signal`.
///
/// Noise coordinates are mapped to the target sensor with
/// `x' = ⌊x·W_t / W_n⌋` (likewise for `y`). The recording is treated as
/// periodic with period `last − first + 1` µs. Only the signal's own span
/// `[first, last]` receives noise.
pub fn merge_noise_recording(
    signal: &EventStream,
    noise: &EventStream,
    target: SensorGeometry,
    mode: NoiseMerge,
) -> Result<EventStream, NoiseError> {
    if signal.geometry() != target {
        return Err(NoiseError::GeometryMismatch { signal: signal.geometry(), target });
    }
    let tiled = TiledNoise::new(noise, target)?;
    let (Some(first), Some(last)) = (signal.first_t(), signal.last_t()) else {
        return Ok(signal.clone());
    };
    let span = last - first + 1;
    let mut injected = Vec::new();
    match mode {
        NoiseMerge::Continuous => {
            tiled.window(0, span, |t, e| injected.push(Event { t: first + t, ..*e }));
        }
        NoiseMerge::PerSlice { slice_us, noise_per_slice_us } => {
            if slice_us == 0 {
                return Err(NoiseError::ZeroSliceDuration);
            }
            if noise_per_slice_us == 0 {
                return Err(NoiseError::ZeroNoisePerSlice);
            }
            for k in 0..span.div_ceil(slice_us) {
                let slice_start = first + k * slice_us;
                let src = k * noise_per_slice_us;
                let before = injected.len();
                tiled.window(src, noise_per_slice_us, |t, e| {
                    let offset = ((t - src) as u128 * slice_us as u128 / noise_per_slice_us as u128) as Micros;
                    injected.push(Event { t: slice_start + offset, ..*e });
                });
                injected[before..].sort_by_key(|e| e.t);
            }
            // a final partial slice may push noise past the signal's end
            injected.retain(|e| e.t <= last);
        }
    }
    Ok(EventStream::new_unchecked(target, merge_sorted(signal.events(), &injected)))
}
