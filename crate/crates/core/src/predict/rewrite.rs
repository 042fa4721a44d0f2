//! Mid-connection port rewriting: steer a live connection onto a new path
//! while both applications keep seeing the original 5-tuple.

use super::PredictError;
use crate::pipeline::PacketHeader;
use serde::{Deserialize, Serialize};

/// Application-visible connection identity, from the initiator's viewpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConnKey {
    pub src_ip: u32,
    pub dst_ip: u32,
    pub proto: u8,
    pub src_port: u16,
    pub dst_port: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RewriteAction {
    OverwriteSrcPort(u16),
    OverwriteDstPort(u16),
    RestoreSrcPort(u16),
    RestoreDstPort(u16),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteRule {
    /// Connection the rule matches, in the direction it applies.
    pub matches: ConnKey,
    pub action: RewriteAction,
}

impl RewriteRule {
    pub fn apply(&self, h: &PacketHeader) -> PacketHeader {
        let mut out = *h;
        if let Some((s, d)) = out.ports {
            out.ports = Some(match self.action {
                RewriteAction::OverwriteSrcPort(p) | RewriteAction::RestoreSrcPort(p) => (p, d),
                RewriteAction::OverwriteDstPort(p) | RewriteAction::RestoreDstPort(p) => (s, p),
            });
        }
        out
    }
}

/// The four rules steering one connection: initiator (who called connect)
/// rewrites its source port on egress and restores it on ingress; the
/// acceptor mirrors with the destination port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewritePlan {
    pub initiator_egress: RewriteRule,
    pub initiator_ingress: RewriteRule,
    pub acceptor_egress: RewriteRule,
    pub acceptor_ingress: RewriteRule,
    /// On-wire source port after the change.
    pub wire_src_port: u16,
}

/// Build the rewrite plan moving `conn` onto wire source port `s`. The
/// out-of-band agreement is the caller's job (it is a control exchange in
/// the simulator); this validates and lays out the rules.
pub fn plan_rewrite(conn: &ConnKey, s: u16) -> Result<RewritePlan, PredictError> {
    if s < 1024 {
        return Err(PredictError::ReservedPort);
    }
    let reverse = ConnKey {
        src_ip: conn.dst_ip,
        dst_ip: conn.src_ip,
        proto: conn.proto,
        src_port: conn.dst_port,
        dst_port: conn.src_port,
    };
    // On-wire identities after the change, used as ingress match keys.
    let wire_fwd = ConnKey {
        src_port: s,
        ..*conn
    };
    let wire_rev = ConnKey {
        dst_port: s,
        ..reverse
    };
    Ok(RewritePlan {
        initiator_egress: RewriteRule {
            matches: *conn,
            action: RewriteAction::OverwriteSrcPort(s),
        },
        initiator_ingress: RewriteRule {
            matches: wire_rev,
            action: RewriteAction::RestoreDstPort(conn.src_port),
        },
        acceptor_egress: RewriteRule {
            matches: reverse,
            action: RewriteAction::OverwriteDstPort(s),
        },
        acceptor_ingress: RewriteRule {
            matches: wire_fwd,
            action: RewriteAction::RestoreSrcPort(conn.src_port),
        },
        wire_src_port: s,
    })
}
