//! TBR and Spike-TBR encoders.
//!
//! Both read a window of `N` slices as an `N`-digit binary number per pixel,
//! slice `N−1` (the most recent) being the most significant digit. TBR sets a
//! digit when any event hit the pixel during the slice; Spike-TBR sets it when
//! the pixel's neuron fired during the slice.

use std::fmt;

use thiserror::Error;

use crate::events::{slice_stream, BinarySliceStack, EventStream, Micros, SensorGeometry, SliceError, SlicingConfig};
use crate::neurons::{NeuronConfig, NeuronError, NeuronGrid, RunStats, StepInput};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodeError {
    #[error(transparent)]
    Slice(#[from] SliceError),
    #[error(transparent)]
    Neuron(#[from] NeuronError),
    #[error("micro steps per slice must be >= 1")]
    ZeroMicroSteps,
    #[error("slice duration {slice_us} us is not divisible by {micro_steps} micro steps")]
    IndivisibleMicroSteps { slice_us: Micros, micro_steps: u32 },
    #[error("code {code} at pixel ({x}, {y}) exceeds {max} for {bits}-bit frames")]
    CodeOutOfRange { x: u16, y: u16, code: u32, max: u32, bits: u32 },
    #[error("stream geometry {stream} does not match encoder geometry {encoder}")]
    GeometryMismatch { encoder: SensorGeometry, stream: SensorGeometry },
    #[error("encoder is configured for {expected}, not {actual}")]
    WrongMode { expected: EncoderMode, actual: EncoderMode },
    #[error("bits must be 1..=32, got {0}")]
    BitsOutOfRange(u32),
}

/// One encoded window: an `H×W` grid of integer codes in `[0, 2^N − 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedFrame {
    geometry: SensorGeometry,
    bits: u32,
    codes: Vec<u32>,
    pub window_start: Micros,
}

impl EncodedFrame {
    pub fn zeros(geometry: SensorGeometry, bits: u32, window_start: Micros) -> Result<Self, EncodeError> {
        if bits == 0 || bits > SlicingConfig::MAX_BITS {
            return Err(EncodeError::BitsOutOfRange(bits));
        }
        Ok(EncodedFrame { geometry, bits, codes: vec![0; geometry.pixel_count()], window_start })
    }

    /// Builds a frame from row-major codes, checking each against `2^N − 1`.
    pub fn from_codes(
        geometry: SensorGeometry,
        bits: u32,
        codes: Vec<u32>,
        window_start: Micros,
    ) -> Result<Self, EncodeError> {
        let mut frame = Self::zeros(geometry, bits, window_start)?;
        assert_eq!(codes.len(), geometry.pixel_count(), "code count does not match geometry");
        frame.codes = codes;
        frame.check_codes()?;
        Ok(frame)
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn max_code(&self) -> u32 {
        max_code(self.bits)
    }

    pub fn code(&self, x: u16, y: u16) -> u32 {
        self.codes[self.geometry.index(x, y)]
    }

    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    /// `code / (2^N − 1)`.
    pub fn normalized(&self, x: u16, y: u16) -> f64 {
        self.code(x, y) as f64 / self.max_code() as f64
    }

    pub fn nonzero_pixels(&self) -> usize {
        self.codes.iter().filter(|&&c| c != 0).count()
    }

    fn check_codes(&self) -> Result<(), EncodeError> {
        let max = self.max_code();
        match self.codes.iter().position(|&c| c > max) {
            None => Ok(()),
            Some(i) => {
                let (x, y) = self.geometry.coords(i);
                Err(EncodeError::CodeOutOfRange { x, y, code: self.codes[i], max, bits: self.bits })
            }
        }
    }
}

/// `2^bits − 1` for `bits` in `1..=32`.
pub fn max_code(bits: u32) -> u32 {
    debug_assert!((1..=32).contains(&bits));
    u32::MAX >> (32 - bits)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EncoderMode {
    Tbr,
    SpikeTbr,
}

impl fmt::Display for EncoderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderMode::Tbr => "tbr",
            EncoderMode::SpikeTbr => "spike-tbr",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub slicing: SlicingConfig,
    pub mode: EncoderMode,
    /// Used only in Spike-TBR mode.
    pub neuron: NeuronConfig,
    micro_steps: u32,
    /// Reset the membrane at the start of every window instead of carrying
    /// it across windows of one recording.
    pub reset_each_window: bool,
}

impl EncoderConfig {
    pub fn tbr(slicing: SlicingConfig) -> Self {
        EncoderConfig {
            slicing,
            mode: EncoderMode::Tbr,
            neuron: NeuronConfig::lif(0.5).expect("0.5 is a valid beta"),
            micro_steps: 1,
            reset_each_window: false,
        }
    }

    pub fn spike_tbr(slicing: SlicingConfig, neuron: NeuronConfig) -> Self {
        EncoderConfig { mode: EncoderMode::SpikeTbr, neuron, ..Self::tbr(slicing) }
    }

    /// Sets `K`, the number of neuron updates per slice. `Δt` must divide by `K`.
    pub fn with_micro_steps(mut self, micro_steps: u32) -> Result<Self, EncodeError> {
        if micro_steps == 0 {
            return Err(EncodeError::ZeroMicroSteps);
        }
        let slice_us = self.slicing.slice_us();
        if !slice_us.is_multiple_of(micro_steps as u64) {
            return Err(EncodeError::IndivisibleMicroSteps { slice_us, micro_steps });
        }
        self.micro_steps = micro_steps;
        Ok(self)
    }

    pub fn micro_steps(&self) -> u32 {
        self.micro_steps
    }

    pub fn micro_step_us(&self) -> Micros {
        self.slicing.slice_us() / self.micro_steps as u64
    }

    /// Short label used in reports, e.g. `tbr` or `spike-tbr-lif`.
    pub fn label(&self) -> String {
        match self.mode {
            EncoderMode::Tbr => "tbr".to_owned(),
            EncoderMode::SpikeTbr => format!("spike-tbr-{}", self.neuron.variant),
        }
    }
}

/// Binary-to-decimal conversion, bit `i` taken from slice `i`.
pub fn encode_tbr(stack: &BinarySliceStack) -> EncodedFrame {
    let geometry = stack.geometry();
    let mut codes = vec![0u32; geometry.pixel_count()];
    for (i, slice) in stack.slices().iter().enumerate() {
        let bit = 1u32 << i;
        for (code, &on) in codes.iter_mut().zip(slice.as_slice()) {
            if on {
                *code |= bit;
            }
        }
    }
    EncodedFrame { geometry, bits: stack.bits(), codes, window_start: stack.window_start }
}

/// Exact inverse of [`encode_tbr`].
pub fn decode_tbr(frame: &EncodedFrame) -> Result<BinarySliceStack, EncodeError> {
    frame.check_codes()?;
    let mut stack = BinarySliceStack::zeros(frame.geometry, frame.bits, frame.window_start);
    for i in 0..frame.bits as usize {
        let slice = stack.slice_mut(i).as_mut_slice();
        for (on, &code) in slice.iter_mut().zip(&frame.codes) {
            *on = (code >> i) & 1 == 1;
        }
    }
    Ok(stack)
}

/// Slice indices set in `code`, ascending.
pub fn active_slices(code: u32, bits: u32) -> Vec<u32> {
    (0..bits).filter(|i| (code >> i) & 1 == 1).collect()
}

pub fn encode_window_tbr(
    stream: &EventStream,
    cfg: &EncoderConfig,
    window_start: Micros,
) -> Result<EncodedFrame, EncodeError> {
    expect_mode(cfg, EncoderMode::Tbr)?;
    Ok(encode_tbr(&slice_stream(stream, &cfg.slicing, window_start)?))
}

/// Encodes one window through `grid`, leaving the membrane state in `grid`
/// for the next window.
pub fn encode_window_spike_tbr(
    stream: &EventStream,
    cfg: &EncoderConfig,
    grid: &mut NeuronGrid,
    window_start: Micros,
) -> Result<EncodedFrame, EncodeError> {
    expect_mode(cfg, EncoderMode::SpikeTbr)?;
    if grid.geometry() != stream.geometry() {
        return Err(EncodeError::GeometryMismatch { encoder: grid.geometry(), stream: stream.geometry() });
    }
    let end = cfg.slicing.window_end(window_start)?;
    let mut scratch = SpikeScratch::new(stream.geometry());
    spike_window_into(stream.range(window_start, end), cfg, grid, window_start, &mut scratch)
}

/// Number of `ΔT` windows needed to cover `[0, span_end)`.
pub fn window_count(cfg: &EncoderConfig, span_end: Micros) -> u64 {
    span_end.div_ceil(cfg.slicing.window_us())
}

/// Tiles the stream into windows `[k·ΔT, (k+1)·ΔT)` from `t = 0` through the
/// window holding the last event, and encodes each.
pub fn encode_stream(stream: &EventStream, cfg: &EncoderConfig) -> Result<Vec<EncodedFrame>, EncodeError> {
    let span_end = stream.last_t().map_or(0, |t| t + 1);
    encode_span(stream, cfg, span_end)
}

/// Like [`encode_stream`] but covering `[0, span_end)` regardless of where
/// the last event falls.
pub fn encode_span(
    stream: &EventStream,
    cfg: &EncoderConfig,
    span_end: Micros,
) -> Result<Vec<EncodedFrame>, EncodeError> {
    let mut encoder = Encoder::new(*cfg, stream.geometry());
    encoder.encode_span(stream, span_end)
}

/// A stateful encoder for one recording. In Spike-TBR mode it owns the
/// neuron grid, so consecutive windows share membrane state.
#[derive(Debug, Clone)]
pub struct Encoder {
    cfg: EncoderConfig,
    geometry: SensorGeometry,
    grid: Option<NeuronGrid>,
    scratch: SpikeScratch,
}

impl Encoder {
    pub fn new(cfg: EncoderConfig, geometry: SensorGeometry) -> Self {
        let grid = (cfg.mode == EncoderMode::SpikeTbr).then(|| NeuronGrid::new(geometry, cfg.neuron));
        Encoder { cfg, geometry, grid, scratch: SpikeScratch::new(geometry) }
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn grid(&self) -> Option<&NeuronGrid> {
        self.grid.as_ref()
    }

    /// Neuron counters so far; all zero in TBR mode.
    pub fn stats(&self) -> RunStats {
        self.grid.as_ref().map(NeuronGrid::stats).unwrap_or_default()
    }

    /// Clears membrane state, e.g. at a recording or chunk boundary.
    pub fn reset(&mut self) {
        if let Some(grid) = &mut self.grid {
            grid.reset();
        }
    }

    pub fn encode_window(&mut self, stream: &EventStream, window_start: Micros) -> Result<EncodedFrame, EncodeError> {
        self.check_stream(stream)?;
        let end = self.cfg.slicing.window_end(window_start)?;
        self.encode_events(stream.range(window_start, end), stream, window_start)
    }

    pub fn encode_span(&mut self, stream: &EventStream, span_end: Micros) -> Result<Vec<EncodedFrame>, EncodeError> {
        self.check_stream(stream)?;
        let window = self.cfg.slicing.window_us();
        let count = window_count(&self.cfg, span_end);
        let mut frames = Vec::with_capacity(count as usize);
        let mut rest = stream.events();
        for k in 0..count {
            let start = k * window;
            let end = self.cfg.slicing.window_end(start)?;
            let lo = rest.partition_point(|e| e.t < start);
            let n = rest[lo..].partition_point(|e| e.t < end);
            frames.push(self.encode_events(&rest[lo..lo + n], stream, start)?);
            rest = &rest[lo + n..];
        }
        Ok(frames)
    }

    fn check_stream(&self, stream: &EventStream) -> Result<(), EncodeError> {
        if stream.geometry() == self.geometry {
            Ok(())
        } else {
            Err(EncodeError::GeometryMismatch { encoder: self.geometry, stream: stream.geometry() })
        }
    }

    fn encode_events(
        &mut self,
        window: &[crate::events::Event],
        stream: &EventStream,
        window_start: Micros,
    ) -> Result<EncodedFrame, EncodeError> {
        match &mut self.grid {
            None => {
                let sub = EventStream::new_unchecked(stream.geometry(), window.to_vec());
                Ok(encode_tbr(&slice_stream(&sub, &self.cfg.slicing, window_start)?))
            }
            Some(grid) => {
                if self.cfg.reset_each_window {
                    grid.reset();
                }
                spike_window_into(window, &self.cfg, grid, window_start, &mut self.scratch)
            }
        }
    }
}

#[derive(Debug, Clone)]
struct SpikeScratch {
    input: StepInput,
    fired: Vec<bool>,
}

impl SpikeScratch {
    fn new(geometry: SensorGeometry) -> Self {
        SpikeScratch { input: StepInput::zeros(geometry), fired: vec![false; geometry.pixel_count()] }
    }
}

/// Runs the neuron grid over the `N·K` micro steps of one window. `events`
/// must already be restricted to the window.
fn spike_window_into(
    events: &[crate::events::Event],
    cfg: &EncoderConfig,
    grid: &mut NeuronGrid,
    window_start: Micros,
    scratch: &mut SpikeScratch,
) -> Result<EncodedFrame, EncodeError> {
    let geometry = grid.geometry();
    let mut frame = EncodedFrame::zeros(geometry, cfg.slicing.bits(), window_start)?;
    let micro_us = cfg.micro_step_us();
    let neuron = *grid.config();
    let mut rest = events;
    for slice in 0..cfg.slicing.bits() {
        scratch.fired.fill(false);
        let slice_start = window_start + slice as u64 * cfg.slicing.slice_us();
        for m in 0..cfg.micro_steps() as u64 {
            let micro_end = slice_start + (m + 1) * micro_us;
            let n = rest.partition_point(|e| e.t < micro_end);
            scratch.input.clear();
            for e in &rest[..n] {
                scratch.input.add_event(e.x, e.y, e.p, &neuron);
            }
            rest = &rest[n..];
            grid.step_or_into(&scratch.input, &mut scratch.fired);
        }
        let bit = 1u32 << slice;
        for (code, &f) in frame.codes.iter_mut().zip(&scratch.fired) {
            if f {
                *code |= bit;
            }
        }
    }
    Ok(frame)
}

fn expect_mode(cfg: &EncoderConfig, expected: EncoderMode) -> Result<(), EncodeError> {
    if cfg.mode == expected {
        Ok(())
    } else {
        Err(EncodeError::WrongMode { expected, actual: cfg.mode })
    }
}
