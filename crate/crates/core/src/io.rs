//! Event and frame files.
//!
//! Event files:
//!
//! * `TextCsv`: header `t_us,x,y,p`, then one `t,x,y,p` line per event in
//!   decimal, `p` being `-1` or `1`, LF line endings. Geometry is supplied by
//!   the caller.
//! * `BinaryV1`: `EVS1`, little-endian `u16` width and height, then 13-byte
//!   records of little-endian `u64 t_us`, `u16 x`, `u16 y`, `i8 p`.
//!
//! Frames are binary PGM (`P5`) holding the integer codes, with
//! `maxval = 2^N − 1`; one byte per pixel up to 8 bits, two big-endian bytes
//! up to 16 bits.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::encoder::{max_code, EncodedFrame};
use crate::events::{Event, EventStream, Micros, SensorGeometry, NEGATIVE, POSITIVE};

pub const CSV_HEADER: &str = "t_us,x,y,p";
pub const BINARY_MAGIC: &[u8; 4] = b"EVS1";
pub const BINARY_HEADER_LEN: usize = 8;
pub const BINARY_RECORD_LEN: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFileFormat {
    TextCsv,
    BinaryV1,
}

impl EventFileFormat {
    /// `.csv` selects `TextCsv`; anything else is `BinaryV1`.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => EventFileFormat::TextCsv,
            _ => EventFileFormat::BinaryV1,
        }
    }
}

/// Where in a file a problem was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    /// 1-based line number.
    Line(usize),
    /// 0-based byte offset.
    Byte(usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(n) => write!(f, "line {n}"),
            Location::Byte(n) => write!(f, "byte {n}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed header at {at}: {reason}")]
    MalformedHeader { at: Location, reason: String },
    #[error("malformed record at {at}: {reason}")]
    MalformedRecord { at: Location, reason: String },
    #[error("truncated record at {at}: {remaining} trailing bytes")]
    TruncatedRecord { at: Location, remaining: usize },
    #[error("polarity {value} at {at} is not -1 or 1")]
    InvalidPolarity { at: Location, value: i64 },
    #[error("event ({x}, {y}) at {at} lies outside the {geometry} sensor")]
    GeometryViolation { at: Location, x: u16, y: u16, geometry: SensorGeometry },
    #[error("timestamp {t} at {at} is earlier than the previous event ({prev})")]
    OutOfOrder { at: Location, t: Micros, prev: Micros },
    #[error("CSV event files need an explicit sensor geometry")]
    MissingGeometry,
    #[error("malformed PGM: {0}")]
    MalformedPgm(String),
    #[error("PGM maxval {0} is not of the form 2^N - 1")]
    BadMaxval(u32),
    #[error("{bits}-bit frames cannot be stored as PGM (at most 16 bits)")]
    FrameTooDeep { bits: u32 },
    #[error("code {code} at pixel ({x}, {y}) exceeds maxval {max}")]
    CodeExceedsMaxval { x: u16, y: u16, code: u32, max: u32 },
}

pub fn read_events(
    path: &Path,
    format: EventFileFormat,
    geometry: Option<SensorGeometry>,
) -> Result<EventStream, FormatError> {
    let bytes = fs::read(path)?;
    match format {
        EventFileFormat::TextCsv => parse_csv(&bytes, geometry.ok_or(FormatError::MissingGeometry)?),
        EventFileFormat::BinaryV1 => decode_binary(&bytes),
    }
}

pub fn write_events(stream: &EventStream, path: &Path, format: EventFileFormat) -> Result<(), FormatError> {
    let bytes = match format {
        EventFileFormat::TextCsv => format_csv(stream).into_bytes(),
        EventFileFormat::BinaryV1 => encode_binary(stream),
    };
    let mut out = BufWriter::new(fs::File::create(path)?);
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

/// Checks one parsed event against geometry, polarity and ordering.
fn admit(at: Location, e: Event, geometry: SensorGeometry, prev: Option<Micros>) -> Result<Event, FormatError> {
    if !e.has_valid_polarity() {
        return Err(FormatError::InvalidPolarity { at, value: e.p as i64 });
    }
    if !geometry.contains(e.x, e.y) {
        return Err(FormatError::GeometryViolation { at, x: e.x, y: e.y, geometry });
    }
    if let Some(prev) = prev {
        if e.t < prev {
            return Err(FormatError::OutOfOrder { at, t: e.t, prev });
        }
    }
    Ok(e)
}

pub fn parse_csv(bytes: &[u8], geometry: SensorGeometry) -> Result<EventStream, FormatError> {
    let text = std::str::from_utf8(bytes).map_err(|e| FormatError::MalformedRecord {
        at: Location::Byte(e.valid_up_to()),
        reason: "not valid UTF-8".into(),
    })?;
    let mut lines = text.split('\n');
    match lines.next() {
        Some(CSV_HEADER) => {}
        other => {
            return Err(FormatError::MalformedHeader {
                at: Location::Line(1),
                reason: format!("expected {CSV_HEADER:?}, found {:?}", other.unwrap_or("")),
            })
        }
    }
    let mut events = Vec::new();
    let mut prev = None;
    let mut lines = lines.enumerate().peekable();
    while let Some((i, line)) = lines.next() {
        let at = Location::Line(i + 2);
        if line.is_empty() && lines.peek().is_none() {
            break;
        }
        let e = parse_csv_line(line, at)?;
        let e = admit(at, e, geometry, prev)?;
        prev = Some(e.t);
        events.push(e);
    }
    Ok(EventStream::new_unchecked(geometry, events))
}

fn parse_csv_line(line: &str, at: Location) -> Result<Event, FormatError> {
    let bad = |reason: String| FormatError::MalformedRecord { at, reason };
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 4 {
        return Err(bad(format!("expected 4 fields, found {}", fields.len())));
    }
    let t: u64 = fields[0].parse().map_err(|_| bad(format!("bad timestamp {:?}", fields[0])))?;
    let x: u16 = fields[1].parse().map_err(|_| bad(format!("bad x {:?}", fields[1])))?;
    let y: u16 = fields[2].parse().map_err(|_| bad(format!("bad y {:?}", fields[2])))?;
    let p: i64 = fields[3].parse().map_err(|_| bad(format!("bad polarity {:?}", fields[3])))?;
    if p != POSITIVE as i64 && p != NEGATIVE as i64 {
        return Err(FormatError::InvalidPolarity { at, value: p });
    }
    Ok(Event::new(t, x, y, p as i8))
}

pub fn format_csv(stream: &EventStream) -> String {
    let mut out = String::with_capacity(16 + stream.len() * 20);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for e in stream.events() {
        use fmt::Write as _;
        let _ = writeln!(out, "{},{},{},{}", e.t, e.x, e.y, e.p);
    }
    out
}

pub fn encode_binary(stream: &EventStream) -> Vec<u8> {
    let g = stream.geometry();
    let mut out = Vec::with_capacity(BINARY_HEADER_LEN + stream.len() * BINARY_RECORD_LEN);
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&g.width().to_le_bytes());
    out.extend_from_slice(&g.height().to_le_bytes());
    for e in stream.events() {
        out.extend_from_slice(&e.t.to_le_bytes());
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.push(e.p as u8);
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<EventStream, FormatError> {
    if bytes.len() < BINARY_HEADER_LEN {
        return Err(FormatError::MalformedHeader {
            at: Location::Byte(bytes.len()),
            reason: format!("file is {} bytes, header needs {BINARY_HEADER_LEN}", bytes.len()),
        });
    }
    if &bytes[..4] != BINARY_MAGIC {
        return Err(FormatError::MalformedHeader { at: Location::Byte(0), reason: "bad magic, expected EVS1".into() });
    }
    let width = u16::from_le_bytes([bytes[4], bytes[5]]);
    let height = u16::from_le_bytes([bytes[6], bytes[7]]);
    let geometry = SensorGeometry::new(width, height)
        .map_err(|e| FormatError::MalformedHeader { at: Location::Byte(4), reason: e.to_string() })?;

    let body = &bytes[BINARY_HEADER_LEN..];
    let whole = body.len() / BINARY_RECORD_LEN * BINARY_RECORD_LEN;
    if whole != body.len() {
        return Err(FormatError::TruncatedRecord {
            at: Location::Byte(BINARY_HEADER_LEN + whole),
            remaining: body.len() - whole,
        });
    }
    let mut events = Vec::with_capacity(body.len() / BINARY_RECORD_LEN);
    let mut prev = None;
    for (k, r) in body.chunks_exact(BINARY_RECORD_LEN).enumerate() {
        let at = Location::Byte(BINARY_HEADER_LEN + k * BINARY_RECORD_LEN);
        let t = u64::from_le_bytes(r[0..8].try_into().expect("8-byte slice"));
        let x = u16::from_le_bytes([r[8], r[9]]);
        let y = u16::from_le_bytes([r[10], r[11]]);
        let e = admit(at, Event::new(t, x, y, r[12] as i8), geometry, prev)?;
        prev = Some(e.t);
        events.push(e);
    }
    Ok(EventStream::new_unchecked(geometry, events))
}

pub fn write_frame(frame: &EncodedFrame, path: &Path) -> Result<(), FormatError> {
    let bytes = encode_pgm(frame)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_frame(path: &Path) -> Result<EncodedFrame, FormatError> {
    decode_pgm(&fs::read(path)?)
}

/// `P5\n<W> <H>\n<maxval>\n` followed by the pixel payload.
pub fn encode_pgm(frame: &EncodedFrame) -> Result<Vec<u8>, FormatError> {
    let bits = frame.bits();
    if bits > 16 {
        return Err(FormatError::FrameTooDeep { bits });
    }
    let g = frame.geometry();
    let max = frame.max_code();
    let wide = bits > 8;
    let header = format!("P5\n{} {}\n{}\n", g.width(), g.height(), max);
    let mut out = Vec::with_capacity(header.len() + g.pixel_count() * if wide { 2 } else { 1 });
    out.extend_from_slice(header.as_bytes());
    for (i, &code) in frame.codes().iter().enumerate() {
        if code > max {
            let (x, y) = g.coords(i);
            return Err(FormatError::CodeExceedsMaxval { x, y, code, max });
        }
        if wide {
            out.extend_from_slice(&(code as u16).to_be_bytes());
        } else {
            out.push(code as u8);
        }
    }
    Ok(out)
}

struct PgmHeader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl PgmHeader<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32, FormatError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| FormatError::MalformedPgm(format!("bad {what} at byte {start}")))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<EncodedFrame, FormatError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(FormatError::MalformedPgm("missing P5 magic".into()));
    }
    let mut h = PgmHeader { bytes, pos: 2 };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    match bytes.get(h.pos) {
        Some(b) if b.is_ascii_whitespace() => h.pos += 1,
        _ => return Err(FormatError::MalformedPgm(format!("expected whitespace after maxval at byte {}", h.pos))),
    }
    let (Ok(w), Ok(hgt)) = (u16::try_from(width), u16::try_from(height)) else {
        return Err(FormatError::MalformedPgm(format!("{width}x{height} exceeds 65535x65535")));
    };
    let geometry = SensorGeometry::new(w, hgt).map_err(|e| FormatError::MalformedPgm(e.to_string()))?;
    if maxval == 0 || maxval > 0xFFFF || !(maxval + 1).is_power_of_two() {
        return Err(FormatError::BadMaxval(maxval));
    }
    let bits = (maxval + 1).trailing_zeros();
    debug_assert_eq!(max_code(bits), maxval);

    let payload = &bytes[h.pos..];
    let per = if bits > 8 { 2 } else { 1 };
    let need = geometry.pixel_count() * per;
    if payload.len() != need {
        return Err(FormatError::MalformedPgm(format!("payload is {} bytes, expected {need}", payload.len())));
    }
    let codes: Vec<u32> = if per == 2 {
        payload.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as u32).collect()
    } else {
        payload.iter().map(|&b| b as u32).collect()
    };
    if let Some(i) = codes.iter().position(|&c| c > maxval) {
        let (x, y) = geometry.coords(i);
        return Err(FormatError::CodeExceedsMaxval { x, y, code: codes[i], max: maxval });
    }
    EncodedFrame::from_codes(geometry, bits, codes, 0).map_err(|e| FormatError::MalformedPgm(e.to_string()))
}

/// Summary figures of a stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamStats {
    pub event_count: usize,
    /// `last.t − first.t`, zero for fewer than two distinct timestamps.
    pub duration_us: Micros,
    /// Events per second over `duration_us`; zero when the duration is zero.
    pub rate_eps: f64,
    pub positive: usize,
    pub negative: usize,
    /// Pixels that received at least one event.
    pub active_pixels: usize,
}

pub fn stream_info(stream: &EventStream) -> StreamStats {
    let duration_us = match (stream.first_t(), stream.last_t()) {
        (Some(a), Some(b)) => b - a,
        _ => 0,
    };
    let rate_eps = if duration_us == 0 { 0.0 } else { stream.len() as f64 / (duration_us as f64 * 1e-6) };
    let positive = stream.events().iter().filter(|e| e.p > 0).count();
    let mut seen = vec![false; stream.geometry().pixel_count()];
    let mut active_pixels = 0;
    for e in stream.events() {
        let i = stream.geometry().index(e.x, e.y);
        if !seen[i] {
            seen[i] = true;
            active_pixels += 1;
        }
    }
    StreamStats {
        event_count: stream.len(),
        duration_us,
        rate_eps,
        positive,
        negative: stream.len() - positive,
        active_pixels,
    }
}

impl fmt::Display for StreamStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "events: {}", self.event_count)?;
        writeln!(f, "duration_us: {}", self.duration_us)?;
        writeln!(f, "rate_eps: {}", self.rate_eps)?;
        writeln!(f, "positive: {}", self.positive)?;
        writeln!(f, "negative: {}", self.negative)?;
        write!(f, "active_pixels: {}", self.active_pixels)
    }
}
