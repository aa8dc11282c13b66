//! Event and stream types, plus temporal slicing into `Δt` slices and
//! `N·Δt` accumulation windows.

use std::fmt;

use thiserror::Error;

/// Timestamps are integer microseconds throughout the crate.
pub type Micros = u64;

/// Positive (brightness increase) polarity.
pub const POSITIVE: i8 = 1;
/// Negative (brightness decrease) polarity.
pub const NEGATIVE: i8 = -1;

/// A single sensor event.
///
/// `p` is kept as a raw signed byte so that malformed input can be held in
/// memory and reported by [`validate_stream`]; valid values are `-1` and `+1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub t: Micros,
    pub x: u16,
    pub y: u16,
    pub p: i8,
}

impl Event {
    pub const fn new(t: Micros, x: u16, y: u16, p: i8) -> Self {
        Event { t, x, y, p }
    }

    pub fn has_valid_polarity(&self) -> bool {
        self.p == POSITIVE || self.p == NEGATIVE
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeometryError {
    #[error("sensor geometry must be at least 1x1, got {width}x{height}")]
    Empty { width: u16, height: u16 },
}

/// Sensor size in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SensorGeometry {
    width: u16,
    height: u16,
}

impl SensorGeometry {
    pub fn new(width: u16, height: u16) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::Empty { width, height });
        }
        Ok(SensorGeometry { width, height })
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn contains(&self, x: u16, y: u16) -> bool {
        x < self.width && y < self.height
    }

    /// Row-major pixel index. Caller guarantees `contains(x, y)`.
    #[inline]
    pub fn index(&self, x: u16, y: u16) -> usize {
        y as usize * self.width as usize + x as usize
    }

    /// Inverse of [`index`](Self::index).
    #[inline]
    pub fn coords(&self, index: usize) -> (u16, u16) {
        let w = self.width as usize;
        ((index % w) as u16, (index / w) as u16)
    }
}

impl fmt::Display for SensorGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Counts of invariant violations found in a stream.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub out_of_bounds: usize,
    pub out_of_order: usize,
    pub bad_polarity: usize,
    /// Index of the first offending event, if any.
    pub first_violation: Option<usize>,
}

impl ValidationReport {
    pub fn violations(&self) -> usize {
        self.out_of_bounds + self.out_of_order + self.bad_polarity
    }

    pub fn is_clean(&self) -> bool {
        self.violations() == 0
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} out-of-bounds, {} out-of-order, {} bad-polarity",
            self.out_of_bounds, self.out_of_order, self.bad_polarity
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StreamError {
    #[error("invalid event stream: {0}")]
    Invalid(ValidationReport),
}

/// A time-ordered event sequence together with the sensor it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    geometry: SensorGeometry,
    events: Vec<Event>,
}

impl EventStream {
    /// Builds a stream, rejecting anything [`validate_stream`] would flag.
    pub fn new(geometry: SensorGeometry, events: Vec<Event>) -> Result<Self, StreamError> {
        let stream = EventStream { geometry, events };
        let report = validate_stream(&stream);
        if report.is_clean() {
            Ok(stream)
        } else {
            Err(StreamError::Invalid(report))
        }
    }

    /// Builds a stream without checking ordering, bounds or polarity.
    ///
    /// Slicing and encoding assume a valid stream; use this only when the
    /// events are known-good or when the goal is to inspect them with
    /// [`validate_stream`].
    pub fn new_unchecked(geometry: SensorGeometry, events: Vec<Event>) -> Self {
        EventStream { geometry, events }
    }

    pub fn empty(geometry: SensorGeometry) -> Self {
        EventStream { geometry, events: Vec::new() }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn first_t(&self) -> Option<Micros> {
        self.events.first().map(|e| e.t)
    }

    pub fn last_t(&self) -> Option<Micros> {
        self.events.last().map(|e| e.t)
    }

    /// Events with `start <= t < end`. Relies on the stream being sorted.
    pub fn range(&self, start: Micros, end: Micros) -> &[Event] {
        let lo = self.events.partition_point(|e| e.t < start);
        let hi = self.events.partition_point(|e| e.t < end);
        &self.events[lo..hi.max(lo)]
    }

    /// Same stream with every polarity negated.
    pub fn flip_polarity(&self) -> EventStream {
        let events = self.events.iter().map(|e| Event { p: -e.p, ..*e }).collect();
        EventStream { geometry: self.geometry, events }
    }
}

/// Scans a stream for bound, ordering and polarity violations.
pub fn validate_stream(stream: &EventStream) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut prev_t: Option<Micros> = None;
    for (i, e) in stream.events.iter().enumerate() {
        let mut bad = false;
        if !stream.geometry.contains(e.x, e.y) {
            report.out_of_bounds += 1;
            bad = true;
        }
        if let Some(prev) = prev_t {
            if e.t < prev {
                report.out_of_order += 1;
                bad = true;
            }
        }
        if !e.has_valid_polarity() {
            report.bad_polarity += 1;
            bad = true;
        }
        if bad && report.first_violation.is_none() {
            report.first_violation = Some(i);
        }
        prev_t = Some(e.t);
    }
    report
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SliceError {
    #[error("slice duration must be positive")]
    ZeroSliceDuration,
    #[error("bits per frame must be in 1..=32, got {0}")]
    BitsOutOfRange(u32),
    #[error("window length {bits} x {slice_us} us overflows")]
    WindowOverflow { bits: u32, slice_us: Micros },
    #[error("window starting at {start} us overflows the timestamp range")]
    WindowEndOverflow { start: Micros },
}

/// `N` slices of `Δt` microseconds each; the window is `ΔT = N·Δt`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlicingConfig {
    slice_us: Micros,
    bits: u32,
    window_us: Micros,
}

impl SlicingConfig {
    pub const MAX_BITS: u32 = 32;

    pub fn new(slice_us: Micros, bits: u32) -> Result<Self, SliceError> {
        if slice_us == 0 {
            return Err(SliceError::ZeroSliceDuration);
        }
        if bits == 0 || bits > Self::MAX_BITS {
            return Err(SliceError::BitsOutOfRange(bits));
        }
        let window_us = slice_us.checked_mul(bits as u64).ok_or(SliceError::WindowOverflow { bits, slice_us })?;
        Ok(SlicingConfig { slice_us, bits, window_us })
    }

    pub fn slice_us(&self) -> Micros {
        self.slice_us
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn window_us(&self) -> Micros {
        self.window_us
    }

    /// Slice index of `t` inside the window starting at `window_start`, if any.
    pub fn slice_index(&self, window_start: Micros, t: Micros) -> Option<u32> {
        if t < window_start {
            return None;
        }
        let i = (t - window_start) / self.slice_us;
        (i < self.bits as u64).then_some(i as u32)
    }

    pub(crate) fn window_end(&self, window_start: Micros) -> Result<Micros, SliceError> {
        window_start.checked_add(self.window_us).ok_or(SliceError::WindowEndOverflow { start: window_start })
    }
}

/// An `H×W` grid of binary pixels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitFrame {
    geometry: SensorGeometry,
    bits: Vec<bool>,
}

impl BitFrame {
    pub fn zeros(geometry: SensorGeometry) -> Self {
        BitFrame { geometry, bits: vec![false; geometry.pixel_count()] }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn get(&self, x: u16, y: u16) -> bool {
        self.bits[self.geometry.index(x, y)]
    }

    pub fn set(&mut self, x: u16, y: u16, value: bool) {
        let i = self.geometry.index(x, y);
        self.bits[i] = value;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    pub fn as_mut_slice(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn clear(&mut self) {
        self.bits.fill(false);
    }

    /// Pixel-wise OR of `other` into `self`.
    pub fn or_assign(&mut self, other: &BitFrame) {
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
    }
}

/// The binary frames `b⁰..b^{N−1}` of one accumulation window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinarySliceStack {
    pub window_start: Micros,
    slices: Vec<BitFrame>,
}

impl BinarySliceStack {
    pub fn zeros(geometry: SensorGeometry, bits: u32, window_start: Micros) -> Self {
        BinarySliceStack { window_start, slices: (0..bits).map(|_| BitFrame::zeros(geometry)).collect() }
    }

    /// Panics if `slices` is empty, has more than 32 entries or mixes geometries.
    pub fn from_slices(slices: Vec<BitFrame>, window_start: Micros) -> Self {
        assert!(!slices.is_empty() && slices.len() <= SlicingConfig::MAX_BITS as usize);
        let g = slices[0].geometry;
        assert!(slices.iter().all(|s| s.geometry == g), "slice geometries differ");
        BinarySliceStack { window_start, slices }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.slices[0].geometry
    }

    pub fn bits(&self) -> u32 {
        self.slices.len() as u32
    }

    pub fn slice(&self, i: usize) -> &BitFrame {
        &self.slices[i]
    }

    pub fn slice_mut(&mut self, i: usize) -> &mut BitFrame {
        &mut self.slices[i]
    }

    pub fn slices(&self) -> &[BitFrame] {
        &self.slices
    }

    /// Total number of set bits across all slices.
    pub fn popcount(&self) -> usize {
        self.slices.iter().map(BitFrame::count_ones).sum()
    }
}

/// Bins the events of `[window_start, window_start + ΔT)` into `N` binary
/// frames. Polarity is ignored and repeated events at a pixel collapse to a
/// single bit. Slice intervals are half-open.
pub fn slice_stream(
    stream: &EventStream,
    cfg: &SlicingConfig,
    window_start: Micros,
) -> Result<BinarySliceStack, SliceError> {
    let end = cfg.window_end(window_start)?;
    let geometry = stream.geometry();
    let mut stack = BinarySliceStack::zeros(geometry, cfg.bits(), window_start);
    for e in stream.range(window_start, end) {
        let i = ((e.t - window_start) / cfg.slice_us()) as usize;
        let idx = geometry.index(e.x, e.y);
        stack.slices[i].bits[idx] = true;
    }
    Ok(stack)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChunkError {
    #[error("chunk length must be positive")]
    ZeroLength,
}

/// Splits a stream into consecutive chunks `[k·L, (k+1)·L)` anchored at
/// `t = 0`, re-basing each chunk's timestamps to its own start.
///
/// Every chunk from `k = 0` up to the one holding the last event is returned,
/// including empty ones, so chunk `k` always starts at `k·L` in the original
/// timeline.
pub fn chunk_stream(stream: &EventStream, chunk_len: Micros) -> Result<Vec<EventStream>, ChunkError> {
    if chunk_len == 0 {
        return Err(ChunkError::ZeroLength);
    }
    let Some(last) = stream.last_t() else {
        return Ok(Vec::new());
    };
    let count = last / chunk_len + 1;
    let mut chunks = Vec::with_capacity(count as usize);
    let mut rest = stream.events();
    for k in 0..count {
        let start = k * chunk_len;
        let end = start.saturating_add(chunk_len);
        let n = rest.partition_point(|e| e.t < end);
        let events = rest[..n].iter().map(|e| Event { t: e.t - start, ..*e }).collect();
        chunks.push(EventStream::new_unchecked(stream.geometry(), events));
        rest = &rest[n..];
    }
    Ok(chunks)
}
