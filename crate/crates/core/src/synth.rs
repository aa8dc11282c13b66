//! Deterministic synthetic scenes.
//!
//! Events are emitted only at the edge pixels of a moving (or blinking)
//! object: the leading edge with `p = +1`, the trailing edge with `p = −1`.
//! Time is cut into segments over which the edge set is constant; each edge
//! pixel of a segment receives a Poisson number of events at uniform times,
//! with mean `rate × segment_length / Δt`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::encoder::{encode_span, EncodeError, EncodedFrame, EncoderConfig};
use crate::events::{Event, EventStream, Micros, SensorGeometry, NEGATIVE, POSITIVE};
use crate::rng::{domain, CellRng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("object size {size} does not fit the {geometry} sensor")]
    ObjectTooLarge { size: u16, geometry: SensorGeometry },
    #[error("object size must be positive")]
    ZeroObjectSize,
    #[error("velocity must be finite and non-negative, got {0}")]
    BadVelocity(f64),
    #[error("event rate must be finite and non-negative, got {0}")]
    BadRate(f64),
    #[error("slice duration must be positive")]
    ZeroSliceDuration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SceneKind {
    /// Full-height vertical bar moving right, wrapping at the sensor edge.
    MovingBar,
    /// Square dot on the middle rows moving right, wrapping.
    MovingDot,
    /// Lattice of single pixels (spacing = object size) toggling on and off;
    /// `velocity` is read as toggles per second.
    BlinkingGrid,
}

impl fmt::Display for SceneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SceneKind::MovingBar => "moving-bar",
            SceneKind::MovingDot => "moving-dot",
            SceneKind::BlinkingGrid => "blinking-grid",
        })
    }
}

impl FromStr for SceneKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "moving-bar" => Ok(SceneKind::MovingBar),
            "moving-dot" => Ok(SceneKind::MovingDot),
            "blinking-grid" => Ok(SceneKind::BlinkingGrid),
            other => Err(format!("unknown scene kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthScene {
    pub kind: SceneKind,
    pub geometry: SensorGeometry,
    /// Pixels per second (toggles per second for `BlinkingGrid`).
    pub velocity: f64,
    /// Mean events per edge pixel per slice.
    pub rate: f64,
    pub slice_us: Micros,
    /// Bar width, dot side or lattice spacing, in pixels.
    pub object_size: u16,
    pub duration_us: Micros,
    pub seed: u64,
}

impl SynthScene {
    /// A 4-pixel-wide bar at 64 px/s, one event per edge pixel per 2.5 ms slice.
    pub fn moving_bar(geometry: SensorGeometry, duration_us: Micros, seed: u64) -> Self {
        SynthScene {
            kind: SceneKind::MovingBar,
            geometry,
            velocity: 64.0,
            rate: 1.0,
            slice_us: 2500,
            object_size: 4,
            duration_us,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.velocity.is_finite() && self.velocity >= 0.0) {
            return Err(SynthError::BadVelocity(self.velocity));
        }
        if !(self.rate.is_finite() && self.rate >= 0.0) {
            return Err(SynthError::BadRate(self.rate));
        }
        if self.slice_us == 0 {
            return Err(SynthError::ZeroSliceDuration);
        }
        if self.object_size == 0 {
            return Err(SynthError::ZeroObjectSize);
        }
        let g = self.geometry;
        let fits = match self.kind {
            SceneKind::MovingBar => self.object_size <= g.width(),
            SceneKind::MovingDot => self.object_size <= g.width() && self.object_size <= g.height(),
            SceneKind::BlinkingGrid => true,
        };
        if !fits {
            return Err(SynthError::ObjectTooLarge { size: self.object_size, geometry: g });
        }
        Ok(())
    }

    /// Integer motion phase at `t`: leading-edge column offset or toggle count.
    fn phase(&self, t: Micros) -> u64 {
        (self.velocity * t as f64 / 1e6).floor() as u64
    }

    /// First timestamp after `t` at which the phase changes, if before `limit`.
    fn next_change(&self, t: Micros, limit: Micros) -> Micros {
        if self.velocity == 0.0 {
            return limit;
        }
        let ph = self.phase(t);
        let guess = ((ph + 1) as f64 * 1e6 / self.velocity).ceil();
        let mut c = if guess < limit as f64 { (guess as Micros).max(t + 1) } else { limit };
        // float rounding can put the guess one step off either way
        while c > t + 1 && self.phase(c - 1) > ph {
            c -= 1;
        }
        while c < limit && self.phase(c) == ph {
            c += 1;
        }
        c
    }

    /// Edge pixels and their polarities at time `t`.
    pub fn edges_at(&self, t: Micros) -> Vec<(u16, u16, i8)> {
        let g = self.geometry;
        let size = self.object_size;
        let phase = self.phase(t);
        let mut out = Vec::new();
        match self.kind {
            SceneKind::MovingBar | SceneKind::MovingDot => {
                let w = g.width() as u64;
                let lead = (phase % w) as u16;
                let trail = ((phase + w - (size as u64 - 1)) % w) as u16;
                let rows = if self.kind == SceneKind::MovingBar {
                    0..g.height()
                } else {
                    let top = (g.height() - size) / 2;
                    top..top + size
                };
                for y in rows {
                    out.push((lead, y, POSITIVE));
                    if trail != lead {
                        out.push((trail, y, NEGATIVE));
                    }
                }
            }
            SceneKind::BlinkingGrid => {
                let p = if phase.is_multiple_of(2) { POSITIVE } else { NEGATIVE };
                for y in (0..g.height()).step_by(size as usize) {
                    for x in (0..g.width()).step_by(size as usize) {
                        out.push((x, y, p));
                    }
                }
            }
        }
        out
    }

    /// Polarity of the edge at `(x, y)` at time `t`, if that pixel is an edge.
    pub fn edge_polarity(&self, t: Micros, x: u16, y: u16) -> Option<i8> {
        self.edges_at(t).into_iter().find(|&(ex, ey, _)| ex == x && ey == y).map(|(_, _, p)| p)
    }
}

/// Renders the scene into an event stream.
pub fn generate(scene: &SynthScene) -> Result<EventStream, SynthError> {
    scene.validate()?;
    let g = scene.geometry;
    let mut events = Vec::new();
    let mut seg_start = 0;
    while seg_start < scene.duration_us {
        let slice_end = (seg_start / scene.slice_us + 1) * scene.slice_us;
        let limit = slice_end.min(scene.duration_us);
        let seg_end = scene.next_change(seg_start, limit);
        let len = seg_end - seg_start;
        let mean = scene.rate * len as f64 / scene.slice_us as f64;
        let first = events.len();
        for (x, y, p) in scene.edges_at(seg_start) {
            let mut rng = CellRng::new(scene.seed, domain::SYNTH, g.index(x, y) as u64, seg_start);
            for _ in 0..rng.poisson(mean) {
                events.push(Event::new(seg_start + rng.below(len), x, y, p));
            }
        }
        events[first..].sort_by_key(|e| e.t);
        seg_start = seg_end;
    }
    Ok(EventStream::new_unchecked(g, events))
}

/// Clean reference encoding of a scene over its whole duration.
pub fn ideal_tbr(scene: &SynthScene, cfg: &EncoderConfig) -> Result<Vec<EncodedFrame>, ReferenceError> {
    let stream = generate(scene)?;
    Ok(encode_span(&stream, cfg, scene.duration_us)?)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReferenceError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
}
