//! Per-pixel spiking neuron grids.
//!
//! One neuron per pixel, no lateral connectivity. Each discrete step runs,
//! per pixel and in this order:
//!
//! 1. leak: `V ← β·(V − V_rest) + V_rest`
//! 2. integrate: `V ← V + X` (plus the previous step's own spike for RecLIF)
//! 3. fire: `S = [V ≥ V_th]`
//! 4. reset on fire: `V ← V_rest` (hard) or `V ← V − V_th` (soft, LRLIF)
//!
//! Input arriving in a step is not leaked in that same step.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::events::{BitFrame, SensorGeometry};

/// Binary spike indicators for one step.
pub type SpikeFrame = BitFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NeuronVariant {
    /// Leaky integrate-and-fire with hard reset.
    Lif,
    /// LIF whose own output spike is added to its next input.
    RecLif,
    /// LIF with soft reset (threshold subtracted).
    LrLif,
    /// LIF parameterised by its membrane time constant.
    Plif,
}

impl NeuronVariant {
    pub const ALL: [NeuronVariant; 4] = [Self::Lif, Self::RecLif, Self::LrLif, Self::Plif];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Lif => "lif",
            Self::RecLif => "reclif",
            Self::LrLif => "lrlif",
            Self::Plif => "plif",
        }
    }

    pub fn soft_reset(&self) -> bool {
        matches!(self, Self::LrLif)
    }

    pub fn recurrent(&self) -> bool {
        matches!(self, Self::RecLif)
    }
}

impl fmt::Display for NeuronVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NeuronVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lif" => Ok(Self::Lif),
            "reclif" => Ok(Self::RecLif),
            "lrlif" => Ok(Self::LrLif),
            "plif" => Ok(Self::Plif),
            other => Err(format!("unknown neuron variant {other:?}")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuronError {
    #[error("beta must be in (0, 1], got {0}")]
    BetaOutOfRange(f64),
    #[error("membrane time constant must be finite and > 1, got {0}")]
    TauOutOfRange(f64),
    #[error("threshold must be finite and positive, got {0}")]
    ThresholdNotPositive(f64),
    #[error("{name} must be finite, got {value}")]
    NotFinite { name: &'static str, value: f64 },
    #[error("input geometry {input} does not match grid geometry {grid}")]
    GeometryMismatch { grid: SensorGeometry, input: SensorGeometry },
    #[error("spike window needs at least one micro step")]
    EmptyWindow,
}

/// Neuron parameters shared by every pixel of a grid.
///
/// Defaults follow the encoder's reference setting: `V_th = 1.1`,
/// `V_rest = 0`, unit weight for both polarities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronConfig {
    pub variant: NeuronVariant,
    beta: f64,
    tau_m: Option<f64>,
    pub v_th: f64,
    pub v_rest: f64,
    pub weight_pos: f64,
    pub weight_neg: f64,
}

impl NeuronConfig {
    pub const DEFAULT_V_TH: f64 = 1.1;

    /// A neuron of `variant` with decay rate `beta`. For PLIF the time
    /// constant is recorded as `1 / (1 − β)` (infinite when `β = 1`).
    pub fn new(variant: NeuronVariant, beta: f64) -> Result<Self, NeuronError> {
        check_beta(beta)?;
        Ok(NeuronConfig {
            variant,
            beta,
            tau_m: None,
            v_th: Self::DEFAULT_V_TH,
            v_rest: 0.0,
            weight_pos: 1.0,
            weight_neg: 1.0,
        })
    }

    pub fn lif(beta: f64) -> Result<Self, NeuronError> {
        Self::new(NeuronVariant::Lif, beta)
    }

    /// PLIF with membrane time constant `tau_m` (in steps); `β = 1 − 1/τ_m`.
    pub fn plif(tau_m: f64) -> Result<Self, NeuronError> {
        let beta = beta_from_tau(tau_m)?;
        let mut cfg = Self::new(NeuronVariant::Plif, beta)?;
        cfg.tau_m = Some(tau_m);
        Ok(cfg)
    }

    pub fn with_threshold(mut self, v_th: f64) -> Result<Self, NeuronError> {
        if !(v_th.is_finite() && v_th > 0.0) {
            return Err(NeuronError::ThresholdNotPositive(v_th));
        }
        self.v_th = v_th;
        Ok(self)
    }

    pub fn with_rest(mut self, v_rest: f64) -> Result<Self, NeuronError> {
        check_finite("v_rest", v_rest)?;
        self.v_rest = v_rest;
        Ok(self)
    }

    pub fn with_weights(mut self, weight_pos: f64, weight_neg: f64) -> Result<Self, NeuronError> {
        check_finite("weight_pos", weight_pos)?;
        check_finite("weight_neg", weight_neg)?;
        self.weight_pos = weight_pos;
        self.weight_neg = weight_neg;
        Ok(self)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Membrane time constant in steps; derived from `β` unless set explicitly.
    pub fn tau_m(&self) -> f64 {
        self.tau_m.unwrap_or(1.0 / (1.0 - self.beta))
    }

    #[inline]
    pub fn weight(&self, polarity: i8) -> f64 {
        if polarity < 0 {
            self.weight_neg
        } else {
            self.weight_pos
        }
    }
}

fn check_beta(beta: f64) -> Result<(), NeuronError> {
    if beta > 0.0 && beta <= 1.0 {
        Ok(())
    } else {
        Err(NeuronError::BetaOutOfRange(beta))
    }
}

fn check_finite(name: &'static str, value: f64) -> Result<(), NeuronError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(NeuronError::NotFinite { name, value })
    }
}

/// `β = 1 − 1/τ_m`, the per-step decay of the discretised membrane equation.
pub fn beta_from_tau(tau_m: f64) -> Result<f64, NeuronError> {
    if !(tau_m.is_finite() && tau_m > 1.0) {
        return Err(NeuronError::TauOutOfRange(tau_m));
    }
    Ok(1.0 - 1.0 / tau_m)
}

/// Accumulated input of one step, in membrane units.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInput {
    geometry: SensorGeometry,
    values: Vec<f64>,
    events: u64,
}

impl StepInput {
    pub fn zeros(geometry: SensorGeometry) -> Self {
        StepInput { geometry, values: vec![0.0; geometry.pixel_count()], events: 0 }
    }

    /// Raw per-pixel input; counts as zero events for AC accounting.
    pub fn from_values(geometry: SensorGeometry, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), geometry.pixel_count(), "value count does not match geometry");
        StepInput { geometry, values, events: 0 }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    /// Adds one event's weight at `(x, y)`.
    #[inline]
    pub fn add_event(&mut self, x: u16, y: u16, polarity: i8, cfg: &NeuronConfig) {
        let i = self.geometry.index(x, y);
        self.values[i] += cfg.weight(polarity);
        self.events += 1;
    }

    pub fn set(&mut self, x: u16, y: u16, value: f64) {
        let i = self.geometry.index(x, y);
        self.values[i] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of events folded into this input.
    pub fn event_count(&self) -> u64 {
        self.events
    }

    pub fn clear(&mut self) {
        self.values.fill(0.0);
        self.events = 0;
    }
}

/// Counters accumulated by a grid since creation or the last
/// [`NeuronGrid::reset_stats`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunStats {
    pub steps: u64,
    pub events_integrated: u64,
    pub feedback_applied: u64,
    pub spikes: u64,
}

/// Accumulate operations performed by the spiking layer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AcCount {
    pub event_acs: u64,
    pub feedback_acs: u64,
}

impl AcCount {
    pub fn total(&self) -> u64 {
        self.event_acs + self.feedback_acs
    }
}

/// One AC per integrated event plus one per applied RecLIF feedback spike.
pub fn count_acs(stats: &RunStats) -> AcCount {
    AcCount { event_acs: stats.events_integrated, feedback_acs: stats.feedback_applied }
}

/// Membrane state of one neuron per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronGrid {
    geometry: SensorGeometry,
    config: NeuronConfig,
    potential: Vec<f64>,
    feedback: Vec<bool>,
    stats: RunStats,
}

impl NeuronGrid {
    pub fn new(geometry: SensorGeometry, config: NeuronConfig) -> Self {
        let n = geometry.pixel_count();
        NeuronGrid {
            geometry,
            config,
            potential: vec![config.v_rest; n],
            feedback: vec![false; n],
            stats: RunStats::default(),
        }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn config(&self) -> &NeuronConfig {
        &self.config
    }

    pub fn potential(&self, x: u16, y: u16) -> f64 {
        self.potential[self.geometry.index(x, y)]
    }

    pub fn set_potential(&mut self, x: u16, y: u16, v: f64) {
        let i = self.geometry.index(x, y);
        self.potential[i] = v;
    }

    pub fn potentials(&self) -> &[f64] {
        &self.potential
    }

    /// Pending RecLIF feedback (spikes of the previous step).
    pub fn feedback(&self) -> &[bool] {
        &self.feedback
    }

    pub fn stats(&self) -> RunStats {
        self.stats
    }

    pub fn reset_stats(&mut self) {
        self.stats = RunStats::default();
    }

    /// Membrane back to `V_rest`, feedback cleared. Counters are kept.
    pub fn reset(&mut self) {
        self.potential.fill(self.config.v_rest);
        self.feedback.fill(false);
    }

    /// Leak only, `steps` times: no input, no threshold, no feedback.
    pub fn decay(&mut self, steps: u32) {
        let beta = self.config.beta;
        let rest = self.config.v_rest;
        for _ in 0..steps {
            for v in &mut self.potential {
                *v = beta * (*v - rest) + rest;
            }
        }
    }

    /// Advances every neuron by one step and returns the emitted spikes.
    pub fn step(&mut self, input: &StepInput) -> Result<SpikeFrame, NeuronError> {
        let mut out = SpikeFrame::zeros(self.geometry);
        self.step_into(input, &mut out)?;
        Ok(out)
    }

    /// [`step`](Self::step) writing into a caller-owned frame.
    pub fn step_into(&mut self, input: &StepInput, out: &mut SpikeFrame) -> Result<(), NeuronError> {
        self.check_geometry(input.geometry)?;
        self.check_geometry(out.geometry())?;
        self.advance(input, out.as_mut_slice(), false);
        Ok(())
    }

    /// Runs one step per micro input and ORs the spikes: a pixel is set iff
    /// its neuron fired at least once.
    pub fn spike_window(&mut self, micro_inputs: &[StepInput]) -> Result<SpikeFrame, NeuronError> {
        if micro_inputs.is_empty() {
            return Err(NeuronError::EmptyWindow);
        }
        let mut out = SpikeFrame::zeros(self.geometry);
        for input in micro_inputs {
            self.check_geometry(input.geometry)?;
        }
        for input in micro_inputs {
            self.advance(input, out.as_mut_slice(), true);
        }
        Ok(out)
    }

    /// Like `step_into`, but ORs spikes into `acc` instead of overwriting.
    pub(crate) fn step_or_into(&mut self, input: &StepInput, acc: &mut [bool]) {
        debug_assert_eq!(input.geometry, self.geometry);
        self.advance(input, acc, true);
    }

    fn check_geometry(&self, other: SensorGeometry) -> Result<(), NeuronError> {
        if other == self.geometry {
            Ok(())
        } else {
            Err(NeuronError::GeometryMismatch { grid: self.geometry, input: other })
        }
    }

    fn advance(&mut self, input: &StepInput, out: &mut [bool], accumulate: bool) {
        let NeuronConfig { variant, beta, v_th, v_rest, .. } = self.config;
        let soft = variant.soft_reset();
        let recurrent = variant.recurrent();
        let mut spikes = 0u64;
        let mut feedback_applied = 0u64;

        let cells = self.potential.iter_mut().zip(self.feedback.iter_mut()).zip(&input.values).zip(out.iter_mut());
        for (((v, fb), &x), o) in cells {
            let mut u = beta * (*v - v_rest) + v_rest + x;
            if recurrent && *fb {
                u += 1.0;
                feedback_applied += 1;
            }
            let fired = u >= v_th;
            if fired {
                u = if soft { u - v_th } else { v_rest };
                spikes += 1;
            }
            *v = u;
            if recurrent {
                *fb = fired;
            }
            if accumulate {
                *o |= fired;
            } else {
                *o = fired;
            }
        }

        self.stats.steps += 1;
        self.stats.events_integrated += input.events;
        self.stats.feedback_applied += feedback_applied;
        self.stats.spikes += spikes;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(w: u16, h: u16) -> SensorGeometry {
        SensorGeometry::new(w, h).unwrap()
    }

    fn single(g: SensorGeometry, x: u16, y: u16, value: f64) -> StepInput {
        let mut input = StepInput::zeros(g);
        input.set(x, y, value);
        input
    }

    #[test]
    fn config_validation() {
        assert!(NeuronConfig::lif(0.0).is_err());
        assert!(NeuronConfig::lif(1.01).is_err());
        assert!(NeuronConfig::lif(f64::NAN).is_err());
        assert!(NeuronConfig::lif(1.0).is_ok());
        assert!(NeuronConfig::plif(1.0).is_err());
        assert!(NeuronConfig::plif(f64::INFINITY).is_err());
        assert!(NeuronConfig::lif(0.5).unwrap().with_threshold(0.0).is_err());
        assert!(NeuronConfig::lif(0.5).unwrap().with_weights(f64::NAN, 1.0).is_err());
        let c = NeuronConfig::lif(0.5).unwrap();
        assert_eq!((c.v_th, c.v_rest, c.weight_pos, c.weight_neg), (1.1, 0.0, 1.0, 1.0));
    }

    #[test]
    fn beta_tau_link() {
        let c = NeuronConfig::plif(2.0).unwrap();
        assert_eq!(c.beta(), 0.5);
        assert_eq!(c.tau_m(), 2.0);
        assert_eq!(NeuronConfig::lif(0.75).unwrap().tau_m(), 4.0);
        assert_eq!(beta_from_tau(10.0).unwrap(), 0.9);
    }

    #[test]
    fn lif_two_steps_to_spike() {
        let g = geom(3, 3);
        let mut grid = NeuronGrid::new(g, NeuronConfig::lif(0.5).unwrap());
        let s = grid.step(&single(g, 1, 1, 1.0)).unwrap();
        assert_eq!(s.count_ones(), 0);
        assert_eq!(grid.potential(1, 1), 1.0);
        let s = grid.step(&single(g, 1, 1, 1.0)).unwrap();
        assert!(s.get(1, 1));
        assert_eq!(s.count_ones(), 1);
        assert_eq!(grid.potential(1, 1), 0.0);
    }

    #[test]
    fn lrlif_soft_reset_keeps_residual() {
        let g = geom(3, 3);
        let cfg = NeuronConfig::new(NeuronVariant::LrLif, 0.5).unwrap();
        let mut grid = NeuronGrid::new(g, cfg);
        grid.step(&single(g, 1, 1, 1.0)).unwrap();
        let s = grid.step(&single(g, 1, 1, 1.0)).unwrap();
        assert!(s.get(1, 1));
        assert!((grid.potential(1, 1) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn lrlif_fires_once_per_step_even_far_above_threshold() {
        let g = geom(1, 1);
        let mut grid = NeuronGrid::new(g, NeuronConfig::new(NeuronVariant::LrLif, 1.0).unwrap());
        grid.step(&single(g, 0, 0, 5.0)).unwrap();
        assert_eq!(grid.stats().spikes, 1);
        assert!((grid.potential(0, 0) - 3.9).abs() < 1e-12);
    }

    #[test]
    fn reclif_feedback_adds_one_unit_next_step() {
        let g = geom(2, 1);
        let mut rec = NeuronGrid::new(g, NeuronConfig::new(NeuronVariant::RecLif, 0.5).unwrap());
        let mut lif = NeuronGrid::new(g, NeuronConfig::lif(0.5).unwrap());
        let kick = single(g, 0, 0, 2.0);
        assert!(rec.step(&kick).unwrap().get(0, 0));
        assert!(lif.step(&kick).unwrap().get(0, 0));
        assert_eq!(rec.feedback(), &[true, false]);
        let quiet = StepInput::zeros(g);
        rec.step(&quiet).unwrap();
        lif.step(&quiet).unwrap();
        assert_eq!(rec.potential(0, 0) - lif.potential(0, 0), 1.0);
        assert_eq!(rec.stats().feedback_applied, 1);
        assert_eq!(lif.stats().feedback_applied, 0);
        assert!(lif.feedback().iter().all(|&f| !f));
    }

    #[test]
    fn decay_examples() {
        let g = geom(1, 1);
        let mut grid = NeuronGrid::new(g, NeuronConfig::lif(0.5).unwrap());
        grid.set_potential(0, 0, 1.0);
        grid.decay(3);
        assert_eq!(grid.potential(0, 0), 0.125);

        let mut grid = NeuronGrid::new(g, NeuronConfig::lif(1.0).unwrap());
        grid.set_potential(0, 0, 0.7);
        grid.decay(17);
        assert_eq!(grid.potential(0, 0), 0.7);

        let mut grid = NeuronGrid::new(g, NeuronConfig::lif(0.9).unwrap());
        grid.set_potential(0, 0, 1.0);
        grid.decay(1);
        assert_eq!(grid.potential(0, 0), 0.9);
    }

    #[test]
    fn decay_relaxes_towards_rest() {
        let g = geom(1, 1);
        let cfg = NeuronConfig::lif(0.5).unwrap().with_rest(-1.0).unwrap();
        let mut grid = NeuronGrid::new(g, cfg);
        grid.set_potential(0, 0, 1.0);
        grid.decay(1);
        assert_eq!(grid.potential(0, 0), 0.0);
    }

    #[test]
    fn reset_clears_state_and_is_idempotent() {
        let g = geom(2, 2);
        let cfg = NeuronConfig::new(NeuronVariant::RecLif, 0.5).unwrap().with_rest(0.25).unwrap();
        let mut grid = NeuronGrid::new(g, cfg);
        grid.step(&single(g, 1, 0, 3.0)).unwrap();
        grid.set_potential(0, 1, 0.8);
        assert!(grid.feedback().iter().any(|&f| f));
        grid.reset();
        let once = grid.clone();
        assert!(grid.potentials().iter().all(|&v| v == 0.25));
        assert!(grid.feedback().iter().all(|&f| !f));
        grid.reset();
        assert_eq!(grid, once);
    }

    #[test]
    fn spike_window_examples() {
        let g = geom(3, 3);
        let mut grid = NeuronGrid::new(g, NeuronConfig::lif(0.5).unwrap());
        let zeros = vec![StepInput::zeros(g); 4];
        assert_eq!(grid.spike_window(&zeros).unwrap().count_ones(), 0);

        let frame = grid.spike_window(&[single(g, 1, 1, 2.0)]).unwrap();
        assert!(frame.get(1, 1));
        assert_eq!(frame.count_ones(), 1);

        assert_eq!(grid.spike_window(&[]), Err(NeuronError::EmptyWindow));
    }

    #[test]
    fn spike_window_two_event_gap() {
        let g = geom(1, 1);
        for (gap, expect) in [(3usize, true), (4, false)] {
            let mut grid = NeuronGrid::new(g, NeuronConfig::lif(0.5).unwrap());
            let mut inputs = vec![StepInput::zeros(g); gap + 1];
            inputs[0].set(0, 0, 1.0);
            inputs[gap].set(0, 0, 1.0);
            assert_eq!(grid.spike_window(&inputs).unwrap().get(0, 0), expect, "gap {gap}");
        }
    }

    #[test]
    fn geometry_mismatch_is_rejected() {
        let mut grid = NeuronGrid::new(geom(2, 2), NeuronConfig::lif(0.5).unwrap());
        let err = grid.step(&StepInput::zeros(geom(3, 2))).unwrap_err();
        assert!(matches!(err, NeuronError::GeometryMismatch { .. }));
        assert_eq!(grid.stats().steps, 0);
    }

    #[test]
    fn weights_follow_polarity() {
        let g = geom(2, 1);
        let cfg = NeuronConfig::lif(0.5).unwrap().with_weights(1.0, 0.25).unwrap();
        let mut input = StepInput::zeros(g);
        input.add_event(0, 0, 1, &cfg);
        input.add_event(1, 0, -1, &cfg);
        input.add_event(1, 0, -1, &cfg);
        assert_eq!(input.values(), &[1.0, 0.5]);
        assert_eq!(input.event_count(), 3);
    }

    #[test]
    fn ac_counts() {
        assert_eq!(count_acs(&RunStats::default()).total(), 0);
        let g = geom(4, 4);
        let cfg = NeuronConfig::lif(0.5).unwrap();
        let mut grid = NeuronGrid::new(g, cfg);
        let mut input = StepInput::zeros(g);
        for i in 0..1000u32 {
            input.add_event((i % 4) as u16, ((i / 4) % 4) as u16, 1, &cfg);
        }
        grid.step(&input).unwrap();
        assert_eq!(count_acs(&grid.stats()).total(), 1000);
    }
}
