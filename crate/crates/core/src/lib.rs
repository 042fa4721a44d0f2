//! Core library for a predictable data-center network: a forwarding pipeline
//! that routes purely on packet headers and versioned configuration state, a
//! state-dissemination service, end-host path prediction and header crafting,
//! drop-statistics fault localization, end-host flowlet load balancing, and a
//! deterministic packet-level discrete-event simulator tying them together.
//!
//! With the default `parallel` feature, batch-style entry points (candidate
//! evaluation in the localizer, header batches in the predictor, seed sweeps
//! in callers) use rayon; without it every code path is sequential and
//! produces identical results.

pub mod lb;
pub mod localize;
pub mod net;
pub mod pipeline;
pub mod predict;
pub mod sim;
pub mod state;

pub use net::{ComponentId, HostId, LinkId, RackId, SwitchId, Topology};
pub use pipeline::{HashConfig, MultipathGroup, PacketHeader, SwitchState};
