//! The predictable switch pipeline: L2 check, longest-prefix L3 lookup, ECMP
//! hash member selection, failover remapping, and egress rewrite.
//!
//! Everything here is a pure function of `(SwitchState, PacketHeader)`. A
//! switch state never references queue occupancy or counters; that is the
//! predictability contract the rest of the system builds on.

mod group;
mod hash;
mod header;
mod switch;

pub use group::{FailoverPolicy, MultipathGroup, SLOTS_PER_MEMBER};
pub use hash::{ecmp_hash, HashConfig, HashFunction, HeaderField};
pub use header::{IpAddrs, PacketHeader, BROADCAST_MAC, PROTO_TCP, PROTO_UDP};
pub use switch::{
    build_switch_states, forward, l2_process, select_member, ForwardDecision, HashFnKind,
    HashProfile, L2Decision, RouteAction, RouteEntry, SwitchState,
};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PipelineError {
    #[error("selected hash field {0:?} absent from header")]
    MissingField(HeaderField),
    #[error("multipath group has no members")]
    EmptyGroup,
    #[error("removal would empty the multipath group")]
    LastMember,
    #[error("member not present in group")]
    UnknownMember,
    #[error("invalid hash config: {0}")]
    InvalidHashConfig(String),
}
