//! Subcarrier allocation for interleaved FDMA.
//!
//! Subcarriers are reached through bins: bin `k` carries subcarrier
//! `digit_reverse(k)`, so a node-aligned run of bins is always an evenly
//! spaced subcarrier set. On top of that mapping the crate provides the
//! bin-filling policies, closed-form admission predicates, Markov-chain state
//! counting, the time-domain stream construction and a blocking-probability
//! simulator.

pub mod allocator;
pub mod cli;
pub mod error;
pub mod mapping;
pub mod nonblocking;
pub mod sim;
pub mod statespace;
pub mod waveform;

pub use allocator::{
    allocate_batch_sync, dcr_state, partition_multistream, AdmissionOutcome, Allocation,
    BatchPolicy, BinState, FillPolicy, Request,
};
pub use error::{Error, Result};
pub use mapping::{
    allowed_sizes, bit_reverse, digit_reverse, inverse_digit_reverse, range_to_subcarriers,
    AlignedRange, RadixScheme,
};
pub use nonblocking::{dcr_load_ok, full_load_ok, strict_ok, strict_threshold, LoadVector};
pub use sim::{offered_load, run, sweep, SimConfig, SimMetrics, SimPolicy, SweepConfig, TrafficMix, TrafficModel};
pub use statespace::{f_rec, g_rec, reachable_states, StateTree};
pub use waveform::{multistream_time, stream_freq_oracle, stream_time, StreamSpec};
