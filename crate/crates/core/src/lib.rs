//! Event-camera frame encoders: Temporal Binary Representation (TBR) and its
//! spiking variant, Spike-TBR, where a per-pixel neuron layer sits between
//! the raw events and the binary slices.
//!
//! The crate also carries what is needed to measure noise robustness at the
//! representation level: seeded noise injection, synthetic scenes, and frame
//! distances.

pub mod encoder;
pub mod events;
pub mod io;
pub mod metrics;
pub mod neurons;
pub mod noise;
mod rng;
pub mod synth;

pub use encoder::{
    decode_tbr, encode_span, encode_stream, encode_tbr, encode_window_spike_tbr, encode_window_tbr, EncodeError,
    EncodedFrame, Encoder, EncoderConfig, EncoderMode,
};
pub use events::{
    chunk_stream, slice_stream, validate_stream, BinarySliceStack, BitFrame, Event, EventStream, Micros,
    SensorGeometry, SlicingConfig, ValidationReport,
};
pub use neurons::{count_acs, AcCount, NeuronConfig, NeuronGrid, NeuronVariant, RunStats, SpikeFrame, StepInput};
pub use rng::derive_seed;
