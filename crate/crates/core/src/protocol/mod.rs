//! The flow insertion protocol: propose, endorse, order, validate, commit.
//!
//! The lifecycle of one flow announcement:
//!
//! 1. the controller signs a [`TranProposal`] and hands it to a VI,
//! 2. the VI derives the transaction body and signs a [`FlowProposal`]
//!    ([`build_proposal`]),
//! 3. endorsing peers gate the proposal (well-formed, fresh, signed,
//!    authorized), execute the conformance chaincode and sign the result
//!    ([`endorse`]),
//! 4. the VI gathers matching endorsements against the n-of-m policy
//!    ([`collect_endorsements`]),
//! 5. the ordering service batches endorsed transactions into a hash-chained
//!    block ([`OrderingService`]),
//! 6. every committing peer validates each transaction (client signature,
//!    endorsement policy, read versions) and applies the valid write sets
//!    ([`validate_and_commit`]).
//!
//! All digests and signatures run over the canonical encoding from
//! [`crate::wire`], so two implementations of this protocol agree byte for
//! byte on what was signed.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::conformance::{invoke_chaincode, Verdict, VerificationPlan};
use crate::flow::{FlowError, FlowId};
use crate::wire::{self, CanonicalEncode, Digest};

pub mod keys;
pub mod types;

pub use keys::{ActorId, KeyRegistry, Sig};
pub use types::{
    Block, CommittedBlock, EndorsedTx, Endorsement, EndorsementPolicy, FlowProposal,
    FlowTables, InvalidReason, PeerLedger, ProposalResponse, ReadEntry, RejectReason, StatusDb,
    TranProposal, Tx, WriteEntry,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("actor {0} is not enrolled")]
    UnknownActor(ActorId),
    #[error("request signature does not verify; dropping tampered request")]
    TamperedRequest,
    #[error("request carries an invalid packet: {0}")]
    MalformedRequest(#[from] FlowError),
}

/// Derives and signs a transaction proposal from a controller request.
///
/// The controller signature is checked first: a request altered between the
/// controller and the VI dies here instead of wasting endorsement work.
pub fn build_proposal(
    registry: &KeyRegistry,
    vi: &ActorId,
    request: &TranProposal,
    now: u64,
) -> Result<FlowProposal, ProtocolError> {
    if !registry.verify(&request.controller, &request.signed_bytes(), &request.sig) {
        return Err(ProtocolError::TamperedRequest);
    }
    request.packet.validate()?;
    let tx = Tx {
        fid: wire::flow_id(&request.packet),
        packet: request.packet.clone(),
        rules: request.rules.clone(),
        topology_version: request.topology_version,
        vi: vi.clone(),
        timestamp: now,
    };
    let sig = registry
        .sign(vi, &tx.canonical_bytes())
        .ok_or_else(|| ProtocolError::UnknownActor(vi.clone()))?;
    Ok(FlowProposal { tx, sig })
}

/// Runs one endorsing peer over a proposal.
///
/// The gate checks run in a fixed order and the first failure is final:
/// well-formedness (packet valid, fid matches the packet), replay (the fid
/// enters the peer's seen set the moment it is inspected), the VI signature
/// over the body, and client authorization. Only then does the chaincode
/// execute under `plan`, and the peer signs whatever verdict it produced.
pub fn endorse(
    ledger: &mut PeerLedger,
    registry: &KeyRegistry,
    policy: &EndorsementPolicy,
    proposal: &FlowProposal,
    plan: VerificationPlan,
) -> ProposalResponse {
    let tx = &proposal.tx;
    let reject = |reason| ProposalResponse::Rejected {
        fid: tx.fid,
        endorser: ledger.peer.clone(),
        reason,
    };

    if tx.packet.validate().is_err() || tx.fid != wire::flow_id(&tx.packet) {
        return reject(RejectReason::Malformed);
    }
    if !ledger.seen.insert(tx.fid) {
        return reject(RejectReason::Replay);
    }
    if !registry.verify(&tx.vi, &tx.canonical_bytes(), &proposal.sig) {
        return reject(RejectReason::BadSignature);
    }
    if !policy.authorized_clients.contains(&tx.vi) {
        return reject(RejectReason::Unauthorized);
    }

    let result = invoke_chaincode(&ledger.policy, &ledger.topology, plan, &tx.packet, &tx.rules);
    let mut endorsement = Endorsement {
        fid: tx.fid,
        verdict: result.verdict,
        read_set: result.read_set,
        write_set: result.write_set,
        endorser: ledger.peer.clone(),
        sig: Sig([0u8; 32]),
    };
    endorsement.sig = registry
        .sign(&ledger.peer, &endorsement.signed_bytes())
        .expect("endorsing peer is enrolled");
    ProposalResponse::Endorsed(endorsement)
}

/// What collecting responses against the endorsement policy produced.
#[derive(Debug, Clone, PartialEq)]
pub enum CollectOutcome {
    /// Enough matching conformant endorsements: ready for ordering.
    Ready(EndorsedTx),
    /// Enough matching endorsements, but they assert a rejection; the flow
    /// is refused without touching the ledger.
    VerifiedReject { verdict: Verdict, supporters: usize },
    /// No content group reached the required count.
    Failed { gathered: usize, required: usize },
}

/// Checks gathered responses against the n-of-m policy.
///
/// Only signed endorsements from distinct eligible peers count, and they
/// count together only when their content (fid, verdict, read set, write
/// set) is byte-identical. The largest such group decides; ties break
/// toward the smaller content digest.
pub fn collect_endorsements(
    registry: &KeyRegistry,
    policy: &EndorsementPolicy,
    proposal: &FlowProposal,
    responses: &[ProposalResponse],
) -> CollectOutcome {
    let mut voted: BTreeSet<&ActorId> = BTreeSet::new();
    let mut groups: BTreeMap<Digest, Vec<&Endorsement>> = BTreeMap::new();
    for response in responses {
        let ProposalResponse::Endorsed(endorsement) = response else {
            continue;
        };
        if endorsement.fid != proposal.tx.fid
            || !policy.endorsers.contains(&endorsement.endorser)
            || !registry.verify(
                &endorsement.endorser,
                &endorsement.signed_bytes(),
                &endorsement.sig,
            )
            || !voted.insert(&endorsement.endorser)
        {
            continue;
        }
        groups
            .entry(endorsement.content_digest())
            .or_default()
            .push(endorsement);
    }

    // Strictly-greater comparison over ascending digests: the first group
    // of maximal size, hence the smallest digest, wins ties.
    let mut best: Option<&Vec<&Endorsement>> = None;
    for group in groups.values() {
        if best.map_or(true, |b| group.len() > b.len()) {
            best = Some(group);
        }
    }
    let Some(best) = best else {
        return CollectOutcome::Failed {
            gathered: 0,
            required: policy.required,
        };
    };
    if best.len() < policy.required {
        return CollectOutcome::Failed {
            gathered: best.len(),
            required: policy.required,
        };
    }
    let leader = best[0];
    if !leader.verdict.is_conformant() {
        return CollectOutcome::VerifiedReject {
            verdict: leader.verdict.clone(),
            supporters: best.len(),
        };
    }
    CollectOutcome::Ready(EndorsedTx {
        tx: proposal.tx.clone(),
        sig: proposal.sig,
        read_set: leader.read_set.clone(),
        write_set: leader.write_set.clone(),
        endorsements: best.iter().map(|e| (*e).clone()).collect(),
    })
}

/// Batches endorsed transactions into blocks.
///
/// A block is cut as soon as the pending set reaches the batch size, or on
/// the first poll after the oldest pending transaction has waited out the
/// batch timeout. Within a block, transactions sort by proposal timestamp
/// and then by flow id, so the block content does not depend on arrival
/// interleavings.
#[derive(Debug, Clone)]
pub struct OrderingService {
    batch_size: usize,
    batch_timeout: u64,
    pending: Vec<(u64, EndorsedTx)>,
    next_height: u64,
    prev_digest: Digest,
}

impl OrderingService {
    pub fn new(batch_size: usize, batch_timeout: u64) -> Self {
        assert!(batch_size > 0, "batch size must be positive");
        OrderingService {
            batch_size,
            batch_timeout,
            pending: Vec::new(),
            next_height: 1,
            prev_digest: [0u8; 32],
        }
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn next_height(&self) -> u64 {
        self.next_height
    }

    /// Accepts one endorsed transaction; returns a block when the batch
    /// size fills.
    pub fn submit(&mut self, tx: EndorsedTx, now: u64) -> Option<Block> {
        self.pending.push((now, tx));
        (self.pending.len() >= self.batch_size).then(|| self.cut(now))
    }

    /// Cuts a block when the oldest pending transaction has timed out.
    pub fn flush_due(&mut self, now: u64) -> Option<Block> {
        let oldest = self.pending.iter().map(|(at, _)| *at).min()?;
        (now.saturating_sub(oldest) >= self.batch_timeout).then(|| self.cut(now))
    }

    /// Cuts whatever is pending, due or not. Used to drain at shutdown.
    pub fn force_cut(&mut self, now: u64) -> Option<Block> {
        (!self.pending.is_empty()).then(|| self.cut(now))
    }

    fn cut(&mut self, now: u64) -> Block {
        let mut txs: Vec<EndorsedTx> = self.pending.drain(..).map(|(_, tx)| tx).collect();
        txs.sort_by(|a, b| {
            (a.tx.timestamp, a.tx.fid).cmp(&(b.tx.timestamp, b.tx.fid))
        });
        let digest = Block::compute_digest(self.next_height, &self.prev_digest, now, &txs);
        let block = Block {
            height: self.next_height,
            prev_digest: self.prev_digest,
            timestamp: now,
            txs,
            digest,
        };
        self.next_height += 1;
        self.prev_digest = digest;
        block
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CommitError {
    #[error("expected block height {expected}, got {got}")]
    HeightMismatch { expected: u64, got: u64 },
    #[error("block {height} does not extend this ledger's tip")]
    ChainMismatch { height: u64 },
    #[error("block {height} digest does not match its content")]
    BadDigest { height: u64 },
}

/// Per-block commit report.
#[derive(Debug, Clone, PartialEq)]
pub struct CommitSummary {
    pub height: u64,
    pub valid: Vec<FlowId>,
    pub invalid: Vec<(FlowId, InvalidReason)>,
}

fn expected_content_bytes(tx: &EndorsedTx) -> Vec<u8> {
    let probe = Endorsement {
        fid: tx.tx.fid,
        verdict: Verdict::Conformant,
        read_set: tx.read_set.clone(),
        write_set: tx.write_set.clone(),
        endorser: ActorId::new(""),
        sig: Sig([0u8; 32]),
    };
    probe.content_bytes()
}

/// Validates one transaction against the committing peer's current state.
fn validate_tx(
    ledger: &PeerLedger,
    registry: &KeyRegistry,
    policy: &EndorsementPolicy,
    tx: &EndorsedTx,
) -> Result<(), InvalidReason> {
    let body = tx.tx.canonical_bytes();
    if !policy.authorized_clients.contains(&tx.tx.vi)
        || !registry.verify(&tx.tx.vi, &body, &tx.sig)
    {
        return Err(InvalidReason::BadClient);
    }

    let expected = expected_content_bytes(tx);
    let mut supporters: BTreeSet<&ActorId> = BTreeSet::new();
    for endorsement in &tx.endorsements {
        if endorsement.content_bytes() == expected
            && policy.endorsers.contains(&endorsement.endorser)
            && registry.verify(
                &endorsement.endorser,
                &endorsement.signed_bytes(),
                &endorsement.sig,
            )
        {
            supporters.insert(&endorsement.endorser);
        }
    }
    if supporters.len() < policy.required {
        return Err(InvalidReason::PolicyUnsatisfied);
    }

    for (key, version) in &tx.read_set {
        if ledger.status.version(key) != Some(*version) {
            return Err(InvalidReason::StaleRead { key: key.clone() });
        }
    }
    Ok(())
}

/// Validates and commits one block on a peer.
///
/// Transactions are checked in block order against the live state, so an
/// earlier valid write in the same block can stale a later read. Valid
/// write sets apply at the block's height; invalid transactions stay in the
/// block but touch nothing.
pub fn validate_and_commit(
    ledger: &mut PeerLedger,
    registry: &KeyRegistry,
    policy: &EndorsementPolicy,
    block: &Block,
) -> Result<CommitSummary, CommitError> {
    let expected = ledger.height() + 1;
    if block.height != expected {
        return Err(CommitError::HeightMismatch {
            expected,
            got: block.height,
        });
    }
    if block.prev_digest != ledger.tip_digest() {
        return Err(CommitError::ChainMismatch {
            height: block.height,
        });
    }
    let recomputed =
        Block::compute_digest(block.height, &block.prev_digest, block.timestamp, &block.txs);
    if recomputed != block.digest {
        return Err(CommitError::BadDigest {
            height: block.height,
        });
    }

    let mut summary = CommitSummary {
        height: block.height,
        valid: Vec::new(),
        invalid: Vec::new(),
    };
    let mut validity = Vec::with_capacity(block.txs.len());
    for tx in &block.txs {
        match validate_tx(ledger, registry, policy, tx) {
            Ok(()) => {
                for (key, value) in &tx.write_set {
                    ledger.status.put(key, value, block.height);
                    if key.starts_with("flow/") {
                        ledger.installed.insert(tx.tx.fid);
                    }
                }
                summary.valid.push(tx.tx.fid);
                validity.push(Ok(()));
            }
            Err(reason) => {
                summary.invalid.push((tx.tx.fid, reason.clone()));
                validity.push(Err(reason));
            }
        }
    }
    ledger.blocks.push(CommittedBlock {
        block: block.clone(),
        validity,
    });
    Ok(summary)
}

/// The valid transactions of a committed block, in block order.
pub fn purge_invalid(committed: &CommittedBlock) -> Vec<&EndorsedTx> {
    committed
        .block
        .txs
        .iter()
        .zip(&committed.validity)
        .filter_map(|(tx, validity)| validity.is_ok().then_some(tx))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChainError {
    #[error("block {height} recomputes to a different digest")]
    Forged { height: u64 },
    #[error("block {height} does not link to its predecessor")]
    BrokenLink { height: u64 },
    #[error("block heights are not consecutive from 1 (found {got} at index {index})")]
    BadHeight { index: usize, got: u64 },
}

/// Recomputes every digest and link of a committed chain.
pub fn verify_chain(blocks: &[CommittedBlock]) -> Result<(), ChainError> {
    let mut prev = [0u8; 32];
    for (index, committed) in blocks.iter().enumerate() {
        let block = &committed.block;
        if block.height != index as u64 + 1 {
            return Err(ChainError::BadHeight {
                index,
                got: block.height,
            });
        }
        if block.prev_digest != prev {
            return Err(ChainError::BrokenLink {
                height: block.height,
            });
        }
        let recomputed =
            Block::compute_digest(block.height, &block.prev_digest, block.timestamp, &block.txs);
        if recomputed != block.digest {
            return Err(ChainError::Forged {
                height: block.height,
            });
        }
        prev = block.digest;
    }
    Ok(())
}
