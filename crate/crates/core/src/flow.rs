//! Shared flow-domain types: packets, flow identifiers, flow rules and
//! topology node handles. These are the vocabulary common to the policy
//! checker, the transaction protocol and the simulator.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of a switch or hub in the network topology.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_owned())
    }
}

/// Undirected link between two nodes, stored with endpoints in sorted order
/// so that `(a, b)` and `(b, a)` compare equal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(NodeId, NodeId)", into = "(NodeId, NodeId)")]
pub struct Link {
    a: NodeId,
    b: NodeId,
}

impl Link {
    pub fn new(x: impl Into<NodeId>, y: impl Into<NodeId>) -> Self {
        let (x, y) = (x.into(), y.into());
        if x <= y {
            Link { a: x, b: y }
        } else {
            Link { a: y, b: x }
        }
    }

    pub fn endpoints(&self) -> (&NodeId, &NodeId) {
        (&self.a, &self.b)
    }

    pub fn is_self_loop(&self) -> bool {
        self.a == self.b
    }

    pub fn touches(&self, n: &NodeId) -> bool {
        &self.a == n || &self.b == n
    }
}

impl From<(NodeId, NodeId)> for Link {
    fn from((x, y): (NodeId, NodeId)) -> Self {
        Link::new(x, y)
    }
}

impl From<Link> for (NodeId, NodeId) {
    fn from(l: Link) -> Self {
        (l.a, l.b)
    }
}

/// Transport protocol carried in the five-tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportProtocol {
    Tcp,
    Udp,
    Icmp,
    Other(u8),
}

impl TransportProtocol {
    /// Numeric protocol id used by the canonical wire encoding.
    pub fn id(self) -> u8 {
        match self {
            TransportProtocol::Tcp => 6,
            TransportProtocol::Udp => 17,
            TransportProtocol::Icmp => 1,
            TransportProtocol::Other(n) => n,
        }
    }
}

impl fmt::Display for TransportProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransportProtocol::Tcp => f.write_str("tcp"),
            TransportProtocol::Udp => f.write_str("udp"),
            TransportProtocol::Icmp => f.write_str("icmp"),
            TransportProtocol::Other(n) => write!(f, "proto-{n}"),
        }
    }
}

/// Optional layer-2 address pair attached to a packet record.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MacPair {
    pub sou_mac: String,
    pub des_mac: String,
}

/// The five-tuple announcing a new flow, plus an optional MAC pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Packet {
    pub sou_ip: String,
    pub des_ip: String,
    pub sou_port: u16,
    pub des_port: u16,
    pub protocol: TransportProtocol,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mac: Option<MacPair>,
}

impl Packet {
    pub fn validate(&self) -> Result<(), FlowError> {
        if self.sou_ip.is_empty() || self.des_ip.is_empty() {
            return Err(FlowError::EmptyAddress);
        }
        if let Some(mac) = &self.mac {
            if mac.sou_mac.is_empty() || mac.des_mac.is_empty() {
                return Err(FlowError::EmptyAddress);
            }
        }
        Ok(())
    }
}

/// 256-bit flow identifier: the digest of the canonical packet encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowId(pub [u8; 32]);

impl FlowId {
    pub const ZERO: FlowId = FlowId([0u8; 32]);

    pub fn to_hex(self) -> String {
        let mut s = String::with_capacity(64);
        for byte in self.0 {
            s.push_str(&format!("{byte:02x}"));
        }
        s
    }

    /// First eight hex characters, used in event-log lines.
    pub fn prefix8(self) -> String {
        self.to_hex()[..8].to_owned()
    }
}

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Packet-derived match fields installed into a switch flow table.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MatchFields {
    pub sou_ip: String,
    pub des_ip: String,
    pub sou_port: u16,
    pub des_port: u16,
    pub protocol: TransportProtocol,
}

impl MatchFields {
    pub fn from_packet(p: &Packet) -> Self {
        MatchFields {
            sou_ip: p.sou_ip.clone(),
            des_ip: p.des_ip.clone(),
            sou_port: p.sou_port,
            des_port: p.des_port,
            protocol: p.protocol,
        }
    }
}

/// What a switch does with a matched packet.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleAction {
    /// Hand the packet to the next switch on the path.
    Forward(NodeId),
    /// Deliver to the locally attached destination host.
    Deliver,
}

/// One forwarding rule for one switch.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FlowRule {
    pub switch: NodeId,
    pub matches: MatchFields,
    pub action: RuleAction,
    pub priority: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FlowError {
    #[error("packet carries an empty address field")]
    EmptyAddress,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn packet() -> Packet {
        Packet {
            sou_ip: "10.0.0.1".into(),
            des_ip: "10.0.0.2".into(),
            sou_port: 5000,
            des_port: 80,
            protocol: TransportProtocol::Tcp,
            mac: None,
        }
    }

    #[test]
    fn link_endpoints_are_normalized() {
        assert_eq!(Link::new("s2", "s1"), Link::new("s1", "s2"));
    }

    #[test]
    fn packet_validation_rejects_empty_addresses() {
        let mut p = packet();
        p.des_ip.clear();
        assert_eq!(p.validate(), Err(FlowError::EmptyAddress));
        assert!(packet().validate().is_ok());
    }

    #[test]
    fn protocol_ids_follow_iana_numbers() {
        assert_eq!(TransportProtocol::Tcp.id(), 6);
        assert_eq!(TransportProtocol::Udp.id(), 17);
        assert_eq!(TransportProtocol::Icmp.id(), 1);
        assert_eq!(TransportProtocol::Other(89).id(), 89);
    }

    #[test]
    fn flow_id_hex_prefix() {
        let mut raw = [0u8; 32];
        raw[0] = 0xab;
        raw[1] = 0x01;
        let fid = FlowId(raw);
        assert_eq!(fid.prefix8(), "ab010000");
        assert_eq!(fid.to_hex().len(), 64);
    }
}
