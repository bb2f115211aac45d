//! Transaction, endorsement and block structures.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::conformance::{ConformancePolicy, NetworkTopology, RejectCause, Verdict};
use crate::flow::{FlowId, FlowRule, NodeId, Packet};
use crate::wire::{canonical_hash, tag, CanonicalEncode, Digest};

use super::keys::{ActorId, Sig};

/// A read set entry: state key and the version it was read at.
pub type ReadEntry = (String, u64);
/// A write set entry: state key and the value to store.
pub type WriteEntry = (String, String);

/// The controller's flow insertion request, handed to a VI. The signature
/// covers the packet, rules, topology version and timestamp, standing in for
/// the secured channel between controller and VI.
#[derive(Debug, Clone, PartialEq)]
pub struct TranProposal {
    pub packet: Packet,
    pub rules: Vec<FlowRule>,
    pub topology_version: u64,
    pub requested_at: u64,
    pub controller: ActorId,
    pub sig: Sig,
}

impl TranProposal {
    pub fn signed_bytes(&self) -> Vec<u8> {
        let mut out = vec![tag::REQUEST];
        self.packet.encode_into(&mut out);
        self.rules.encode_into(&mut out);
        self.topology_version.encode_into(&mut out);
        self.requested_at.encode_into(&mut out);
        self.controller.as_str().encode_into(&mut out);
        out
    }
}

/// The transaction body a VI derives from a request. `fid` is the canonical
/// packet digest and must match the packet, which makes the body
/// self-authenticating down to the announced flow.
#[derive(Debug, Clone, PartialEq)]
pub struct Tx {
    pub fid: FlowId,
    pub packet: Packet,
    pub rules: Vec<FlowRule>,
    pub topology_version: u64,
    pub vi: ActorId,
    pub timestamp: u64,
}

impl CanonicalEncode for Tx {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(tag::TX);
        self.fid.encode_into(out);
        self.packet.encode_into(out);
        self.rules.encode_into(out);
        self.topology_version.encode_into(out);
        self.vi.as_str().encode_into(out);
        self.timestamp.encode_into(out);
    }
}

/// A transaction proposal: the body plus the VI's signature over it.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowProposal {
    pub tx: Tx,
    pub sig: Sig,
}

/// Why an endorsing peer refused to even execute a proposal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    /// Packet invalid or flow id inconsistent with the packet.
    Malformed,
    /// The flow id was already proposed to this peer.
    Replay,
    /// The VI signature does not verify over the body.
    BadSignature,
    /// The submitting VI is not an authorized client.
    Unauthorized,
}

/// A peer's signed verdict on one proposal. The signature covers the fid,
/// verdict, both state sets and the endorser name.
#[derive(Debug, Clone, PartialEq)]
pub struct Endorsement {
    pub fid: FlowId,
    pub verdict: Verdict,
    pub read_set: Vec<ReadEntry>,
    pub write_set: Vec<WriteEntry>,
    pub endorser: ActorId,
    pub sig: Sig,
}

impl Endorsement {
    /// Bytes covered by the endorsement signature.
    pub fn signed_bytes(&self) -> Vec<u8> {
        let mut out = self.content_bytes();
        self.endorser.as_str().encode_into(&mut out);
        out
    }

    /// Canonical encoding of the verdict and state sets, without the
    /// endorser. Two endorsements "match" when these bytes are equal.
    pub fn content_bytes(&self) -> Vec<u8> {
        let mut out = vec![tag::ENDORSEMENT];
        self.fid.encode_into(&mut out);
        self.verdict.encode_into(&mut out);
        encode_read_set(&self.read_set, &mut out);
        encode_write_set(&self.write_set, &mut out);
        out
    }

    pub fn content_digest(&self) -> Digest {
        canonical_hash(&RawBytes(&self.content_bytes()))
    }
}

/// Helper wrapper hashing bytes that are already canonical.
struct RawBytes<'a>(&'a [u8]);

impl CanonicalEncode for RawBytes<'_> {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(self.0);
    }
}

pub(crate) fn encode_read_set(read_set: &[ReadEntry], out: &mut Vec<u8>) {
    out.push(tag::READ_SET);
    (read_set.len() as u32).encode_into(out);
    for (key, version) in read_set {
        key.encode_into(out);
        version.encode_into(out);
    }
}

pub(crate) fn encode_write_set(write_set: &[WriteEntry], out: &mut Vec<u8>) {
    out.push(tag::WRITE_SET);
    (write_set.len() as u32).encode_into(out);
    for (key, value) in write_set {
        key.encode_into(out);
        value.encode_into(out);
    }
}

impl CanonicalEncode for Verdict {
    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            Verdict::Conformant => out.push(0x00),
            Verdict::Rejected(cause) => {
                out.push(0x01);
                cause.encode_into(out);
            }
        }
    }
}

impl CanonicalEncode for RejectCause {
    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            RejectCause::Malformed => out.push(0x01),
            RejectCause::DeniedEndpoint { endpoint } => {
                out.push(0x02);
                endpoint.encode_into(out);
            }
            RejectCause::NotAllowed => out.push(0x03),
            RejectCause::RuleMismatch => out.push(0x04),
            RejectCause::UnknownNode { node } => {
                out.push(0x05);
                node.encode_into(out);
            }
            RejectCause::MissingLink { from, to } => {
                out.push(0x06);
                from.encode_into(out);
                to.encode_into(out);
            }
            RejectCause::ForbiddenLink { from, to } => {
                out.push(0x07);
                from.encode_into(out);
                to.encode_into(out);
            }
            RejectCause::UnknownHost { host } => {
                out.push(0x08);
                host.encode_into(out);
            }
            RejectCause::BrokenChain => out.push(0x09),
            RejectCause::PathLoop { node } => {
                out.push(0x0a);
                node.encode_into(out);
            }
            RejectCause::WrongEndpoint { node } => {
                out.push(0x0b);
                node.encode_into(out);
            }
            RejectCause::PathTooLong { len, max } => {
                out.push(0x0c);
                len.encode_into(out);
                max.encode_into(out);
            }
        }
    }
}

/// A peer's reply to a proposal.
#[derive(Debug, Clone, PartialEq)]
pub enum ProposalResponse {
    Endorsed(Endorsement),
    Rejected {
        fid: FlowId,
        endorser: ActorId,
        reason: RejectReason,
    },
}

/// Which peers may endorse, how many matching endorsements a transaction
/// needs, and which VIs may submit proposals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndorsementPolicy {
    /// Minimum count of matching endorsements from distinct eligible peers.
    pub required: usize,
    pub endorsers: BTreeSet<ActorId>,
    pub authorized_clients: BTreeSet<ActorId>,
}

/// A fully endorsed transaction, ready for ordering. The state sets are the
/// ones from the matching endorsement group; committers check that the
/// attached endorsements really cover them.
#[derive(Debug, Clone, PartialEq)]
pub struct EndorsedTx {
    pub tx: Tx,
    pub sig: Sig,
    pub read_set: Vec<ReadEntry>,
    pub write_set: Vec<WriteEntry>,
    pub endorsements: Vec<Endorsement>,
}

impl CanonicalEncode for EndorsedTx {
    fn encode_into(&self, out: &mut Vec<u8>) {
        self.tx.encode_into(out);
        out.extend_from_slice(&self.sig.0);
        encode_read_set(&self.read_set, out);
        encode_write_set(&self.write_set, out);
        (self.endorsements.len() as u32).encode_into(out);
        for endorsement in &self.endorsements {
            let bytes = endorsement.signed_bytes();
            out.extend_from_slice(&bytes);
            out.extend_from_slice(&endorsement.sig.0);
        }
    }
}

/// One block of ordered transactions. `digest` covers the height, previous
/// digest, cut timestamp and every transaction including its endorsements.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub height: u64,
    pub prev_digest: Digest,
    pub timestamp: u64,
    pub txs: Vec<EndorsedTx>,
    pub digest: Digest,
}

impl Block {
    pub fn compute_digest(height: u64, prev_digest: &Digest, timestamp: u64, txs: &[EndorsedTx]) -> Digest {
        let mut out = vec![tag::BLOCK];
        height.encode_into(&mut out);
        out.extend_from_slice(prev_digest);
        timestamp.encode_into(&mut out);
        txs.encode_into(&mut out);
        canonical_hash(&RawBytes(&out))
    }
}

/// Validation outcome for one transaction inside a committed block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InvalidReason {
    /// The VI signature over the body fails or the VI is not authorized.
    BadClient,
    /// Too few matching valid endorsements for the carried state sets.
    PolicyUnsatisfied,
    /// A read version no longer matches the committed state.
    StaleRead { key: String },
}

/// A block as stored by a committing peer: the raw block plus the per-tx
/// validity mask it computed.
#[derive(Debug, Clone, PartialEq)]
pub struct CommittedBlock {
    pub block: Block,
    /// `Ok` for valid transactions, the reason otherwise; same order as
    /// `block.txs`.
    pub validity: Vec<Result<(), InvalidReason>>,
}

/// Versioned key-value state. Values are only ever the literal strings from
/// write sets; versions are the heights of the blocks that wrote them.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StatusDb {
    entries: BTreeMap<String, (String, u64)>,
}

impl StatusDb {
    pub fn seed(policy_version: u64, topology_version: u64) -> Self {
        let mut db = StatusDb::default();
        db.entries
            .insert("policy".to_owned(), ("active".to_owned(), policy_version));
        db.entries
            .insert("topology".to_owned(), ("active".to_owned(), topology_version));
        db
    }

    pub fn version(&self, key: &str) -> Option<u64> {
        self.entries.get(key).map(|(_, v)| *v)
    }

    pub fn value(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn put(&mut self, key: &str, value: &str, version: u64) {
        self.entries
            .insert(key.to_owned(), (value.to_owned(), version));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Full state of one committing peer.
#[derive(Debug, Clone)]
pub struct PeerLedger {
    pub peer: ActorId,
    pub policy: ConformancePolicy,
    pub topology: NetworkTopology,
    pub status: StatusDb,
    pub blocks: Vec<CommittedBlock>,
    /// Flow ids whose insertion committed as valid.
    pub installed: BTreeSet<FlowId>,
    /// Replay memory for the endorsement role of this peer.
    pub seen: BTreeSet<FlowId>,
}

impl PeerLedger {
    pub fn new(peer: ActorId, policy: ConformancePolicy, topology: NetworkTopology) -> Self {
        let status = StatusDb::seed(policy.version, topology.version);
        PeerLedger {
            peer,
            policy,
            topology,
            status,
            blocks: Vec::new(),
            installed: BTreeSet::new(),
            seen: BTreeSet::new(),
        }
    }

    pub fn height(&self) -> u64 {
        self.blocks.len() as u64
    }

    /// Digest of the last committed block, or all zeroes at height 0.
    pub fn tip_digest(&self) -> Digest {
        self.blocks
            .last()
            .map(|b| b.block.digest)
            .unwrap_or([0u8; 32])
    }
}

/// Switch-side view used by the simulator after commit: which rules ended up
/// installed on which switch.
#[derive(Debug, Clone, Default)]
pub struct FlowTables {
    pub rules: BTreeMap<NodeId, Vec<FlowRule>>,
}

impl FlowTables {
    pub fn install(&mut self, rule: &FlowRule) {
        self.rules
            .entry(rule.switch.clone())
            .or_default()
            .push(rule.clone());
    }

    pub fn total_rules(&self) -> usize {
        self.rules.values().map(|v| v.len()).sum()
    }
}
