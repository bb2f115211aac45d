//! Canonical byte encoding used for every hashed or signed structure.
//!
//! The encoding is deliberately rigid so that two parties always derive the
//! same bytes for the same value:
//!
//! * integers are big-endian and fixed width,
//! * strings are a `u32` byte length followed by UTF-8 bytes,
//! * `Option<T>` is a `0x00`/`0x01` presence byte, then the value if present,
//! * sequences are a `u32` element count followed by the elements,
//! * structs and enums start with a one-byte type tag, then their fields in
//!   declaration order.
//!
//! Hashes over these bytes are SHA-256. The digest of a packet doubles as the
//! flow identifier, and block chaining digests use the same construction.

use sha2::{Digest as _, Sha256};

use crate::flow::{FlowId, FlowRule, Link, MacPair, MatchFields, NodeId, Packet, RuleAction};

/// 256-bit SHA-256 output.
pub type Digest = [u8; 32];

/// Type tags, one per hashed structure. Tags keep encodings of different
/// types from colliding even when their field bytes happen to match.
pub mod tag {
    pub const PACKET: u8 = 0x01;
    pub const MATCH_FIELDS: u8 = 0x02;
    pub const FLOW_RULE: u8 = 0x03;
    pub const TX: u8 = 0x04;
    pub const ENDORSEMENT: u8 = 0x05;
    pub const RESPONSE: u8 = 0x06;
    pub const BLOCK: u8 = 0x07;
    pub const READ_SET: u8 = 0x08;
    pub const WRITE_SET: u8 = 0x09;
    pub const REQUEST: u8 = 0x0a;
}

/// Serializes a value into the canonical byte form.
pub trait CanonicalEncode {
    fn encode_into(&self, out: &mut Vec<u8>);

    fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(&mut out);
        out
    }
}

/// SHA-256 over the canonical encoding of `value`.
pub fn canonical_hash<T: CanonicalEncode + ?Sized>(value: &T) -> Digest {
    let mut hasher = Sha256::new();
    hasher.update(value.canonical_bytes());
    hasher.finalize().into()
}

/// The flow identifier is the canonical packet digest.
pub fn flow_id(packet: &Packet) -> FlowId {
    FlowId(canonical_hash(packet))
}

pub fn hex(digest: &Digest) -> String {
    let mut s = String::with_capacity(64);
    for byte in digest {
        s.push_str(&format!("{byte:02x}"));
    }
    s
}

impl CanonicalEncode for u8 {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(*self);
    }
}

impl CanonicalEncode for u16 {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_be_bytes());
    }
}

impl CanonicalEncode for u32 {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_be_bytes());
    }
}

impl CanonicalEncode for u64 {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_be_bytes());
    }
}

impl CanonicalEncode for str {
    fn encode_into(&self, out: &mut Vec<u8>) {
        (self.len() as u32).encode_into(out);
        out.extend_from_slice(self.as_bytes());
    }
}

impl CanonicalEncode for String {
    fn encode_into(&self, out: &mut Vec<u8>) {
        self.as_str().encode_into(out);
    }
}

impl<T: CanonicalEncode> CanonicalEncode for Option<T> {
    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            None => out.push(0x00),
            Some(v) => {
                out.push(0x01);
                v.encode_into(out);
            }
        }
    }
}

impl<T: CanonicalEncode> CanonicalEncode for [T] {
    fn encode_into(&self, out: &mut Vec<u8>) {
        (self.len() as u32).encode_into(out);
        for item in self {
            item.encode_into(out);
        }
    }
}

impl<T: CanonicalEncode> CanonicalEncode for Vec<T> {
    fn encode_into(&self, out: &mut Vec<u8>) {
        self.as_slice().encode_into(out);
    }
}

impl CanonicalEncode for Digest {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(self);
    }
}

impl CanonicalEncode for NodeId {
    fn encode_into(&self, out: &mut Vec<u8>) {
        self.0.encode_into(out);
    }
}

impl CanonicalEncode for Link {
    fn encode_into(&self, out: &mut Vec<u8>) {
        let (a, b) = self.endpoints();
        a.encode_into(out);
        b.encode_into(out);
    }
}

impl CanonicalEncode for MacPair {
    fn encode_into(&self, out: &mut Vec<u8>) {
        self.sou_mac.encode_into(out);
        self.des_mac.encode_into(out);
    }
}

impl CanonicalEncode for Packet {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(tag::PACKET);
        self.sou_ip.encode_into(out);
        self.des_ip.encode_into(out);
        self.sou_port.encode_into(out);
        self.des_port.encode_into(out);
        self.protocol.id().encode_into(out);
        self.mac.encode_into(out);
    }
}

impl CanonicalEncode for FlowId {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.0);
    }
}

impl CanonicalEncode for MatchFields {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(tag::MATCH_FIELDS);
        self.sou_ip.encode_into(out);
        self.des_ip.encode_into(out);
        self.sou_port.encode_into(out);
        self.des_port.encode_into(out);
        self.protocol.id().encode_into(out);
    }
}

impl CanonicalEncode for RuleAction {
    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            RuleAction::Forward(next) => {
                out.push(0x01);
                next.encode_into(out);
            }
            RuleAction::Deliver => out.push(0x02),
        }
    }
}

impl CanonicalEncode for FlowRule {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(tag::FLOW_RULE);
        self.switch.encode_into(out);
        self.matches.encode_into(out);
        self.action.encode_into(out);
        self.priority.encode_into(out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::TransportProtocol;

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
    fn packet_encoding_is_byte_stable() {
        let bytes = packet().canonical_bytes();
        let expected: Vec<u8> = {
            let mut v = vec![tag::PACKET];
            v.extend_from_slice(&8u32.to_be_bytes());
            v.extend_from_slice(b"10.0.0.1");
            v.extend_from_slice(&8u32.to_be_bytes());
            v.extend_from_slice(b"10.0.0.2");
            v.extend_from_slice(&5000u16.to_be_bytes());
            v.extend_from_slice(&80u16.to_be_bytes());
            v.push(6);
            v.push(0x00);
            v
        };
        assert_eq!(bytes, expected);
    }

    #[test]
    fn flow_id_changes_with_any_field() {
        let base = flow_id(&packet());
        let mut p = packet();
        p.des_port = 81;
        assert_ne!(flow_id(&p), base);
        let mut p = packet();
        p.protocol = TransportProtocol::Udp;
        assert_ne!(flow_id(&p), base);
        assert_eq!(flow_id(&packet()), base);
    }

    #[test]
    fn option_and_list_encodings_are_prefixed() {
        let mut out = Vec::new();
        Option::<u8>::None.encode_into(&mut out);
        assert_eq!(out, [0x00]);
        out.clear();
        Some(7u8).encode_into(&mut out);
        assert_eq!(out, [0x01, 0x07]);
        out.clear();
        vec![1u16, 2u16].encode_into(&mut out);
        assert_eq!(out, [0, 0, 0, 2, 0, 1, 0, 2]);
    }
}
