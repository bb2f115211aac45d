//! Deterministic discrete-event simulation of the whole pipeline.
//!
//! A scenario wires the three layers together: flows arrive at a controller,
//! a VI turns them into proposals, endorsing peers verify them under the
//! contract's induced effort, an ordering service batches them into blocks
//! and every peer commits. Time is a bare `u64` tick counter; every delay is
//! fixed by the scenario, every random draw comes from a named
//! [`rng::StreamRng`] stream, and every observable step lands in the event
//! log, so a scenario and a seed pin down the entire run byte for byte.
//!
//! Economic accounting mirrors the model in [`crate::economics`]: the
//! endorsing peer set acts as one verifier organization, so each
//! verification task consumes the contract effort once (scaled down for
//! shallow tasks), earns the reward rate once, and the peer fan-out only
//! affects message timing, not payoffs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformance::{
    AllowRule, ConformancePolicy, NetworkTopology, Pattern, RejectCause, TopologyError,
    VerificationPlan,
};
use crate::economics::{EconError, EconParams, Mechanism};
use crate::flow::{Link, NodeId};
use crate::protocol::{InvalidReason, RejectReason};

mod engine;
pub mod events;
pub mod rng;

pub use events::{digest_lines, Event, EventKind, EventLog};
pub use rng::StreamRng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use std::collections::BTreeMap;

/// How many flows arrive and how far apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workload {
    pub flows: u32,
    /// Ticks between consecutive arrivals; the first flow arrives at tick 1.
    pub interarrival: u64,
}

impl Default for Workload {
    fn default() -> Self {
        Workload {
            flows: 20,
            interarrival: 40,
        }
    }
}

/// How the verifier organization executes verification tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerifierBehavior {
    /// Runs the plan each task requires.
    Honest,
    /// Always runs the shallow plan, whatever the task requires.
    Greedy,
}

/// Where an in-flight message gets corrupted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TamperHop {
    /// Between the controller and the VI.
    ControllerVi,
    /// Between the VI and the endorsing peers.
    ViPeer,
}

/// The scenario's adversary, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Adversary {
    None,
    /// Rewrites roughly half the workload to target a denied endpoint.
    MaliciousFlow,
    /// Flips a transaction byte on the given hop for roughly half the
    /// workload.
    Tamper { hop: TamperHop },
    /// Forces the greedy verifier behavior regardless of the scenario
    /// setting.
    GreedyVerifier,
}

/// Full description of one reproducible run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimScenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Hard horizon; events past it are dropped and their flows stay
    /// unresolved.
    #[serde(default = "d_ticks")]
    pub ticks: u64,
    #[serde(default)]
    pub econ: EconParams,
    #[serde(default = "d_mechanism")]
    pub mechanism: Mechanism,
    #[serde(default = "d_behavior")]
    pub verifier_behavior: VerifierBehavior,
    #[serde(default = "d_adversary")]
    pub adversary: Adversary,
    #[serde(default = "d_peers")]
    pub peers: usize,
    #[serde(default = "d_required")]
    pub required_endorsements: usize,
    #[serde(default = "d_delay")]
    pub link_delay: u64,
    #[serde(default = "d_batch_size")]
    pub batch_size: usize,
    #[serde(default = "d_batch_timeout")]
    pub batch_timeout: u64,
    #[serde(default)]
    pub workload: Workload,
    #[serde(default = "default_policy")]
    pub policy: ConformancePolicy,
    #[serde(default = "default_topology")]
    pub topology: NetworkTopology,
}

fn d_ticks() -> u64 {
    100_000
}
fn d_mechanism() -> Mechanism {
    Mechanism::Contract
}
fn d_behavior() -> VerifierBehavior {
    VerifierBehavior::Honest
}
fn d_adversary() -> Adversary {
    Adversary::None
}
fn d_peers() -> usize {
    4
}
fn d_required() -> usize {
    3
}
fn d_delay() -> u64 {
    1
}
fn d_batch_size() -> usize {
    1
}
fn d_batch_timeout() -> u64 {
    50
}

/// The four-switch reference topology: a line `s1-s2-s3-s4` with a chord
/// `s1-s3`, three ordinary hosts and one host that the reference policy
/// denies.
pub fn default_topology() -> NetworkTopology {
    NetworkTopology {
        version: 1,
        nodes: ["s1", "s2", "s3", "s4"].map(NodeId::from).to_vec(),
        links: vec![
            Link::new("s1", "s2"),
            Link::new("s2", "s3"),
            Link::new("s3", "s4"),
            Link::new("s1", "s3"),
        ],
        hosts: BTreeMap::from([
            ("10.0.0.1".to_owned(), NodeId::from("s1")),
            ("10.0.0.2".to_owned(), NodeId::from("s4")),
            ("10.0.0.3".to_owned(), NodeId::from("s2")),
            ("10.0.0.66".to_owned(), NodeId::from("s3")),
        ]),
    }
}

/// The reference policy: deny `10.0.0.66`, allow the `10.0.0.*` subnet on
/// any port, paths up to four switches, no forbidden links.
pub fn default_policy() -> ConformancePolicy {
    ConformancePolicy {
        version: 1,
        denied_endpoints: vec![Pattern::parse("10.0.0.66")],
        allow: vec![AllowRule {
            src: Pattern::parse("10.0.0.*"),
            dst: Pattern::parse("10.0.0.*"),
            port_lo: 0,
            port_hi: u16::MAX,
        }],
        max_path_len: 4,
        forbidden_links: vec![],
    }
}

impl SimScenario {
    /// A ready-to-run scenario on the reference policy and topology.
    pub fn reference(name: &str, seed: u64) -> Self {
        SimScenario {
            name: name.to_owned(),
            seed,
            ticks: d_ticks(),
            econ: EconParams::default(),
            mechanism: d_mechanism(),
            verifier_behavior: d_behavior(),
            adversary: d_adversary(),
            peers: d_peers(),
            required_endorsements: d_required(),
            link_delay: d_delay(),
            batch_size: d_batch_size(),
            batch_timeout: d_batch_timeout(),
            workload: Workload::default(),
            policy: default_policy(),
            topology: default_topology(),
        }
    }

    /// The behavior actually in force, after the adversary has its say.
    pub fn effective_behavior(&self) -> VerifierBehavior {
        if matches!(self.adversary, Adversary::GreedyVerifier) {
            VerifierBehavior::Greedy
        } else {
            self.verifier_behavior
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.econ.validate()?;
        self.topology.validate()?;
        let bad = |msg: String| Err(SimError::InvalidScenario(msg));
        if self.required_endorsements == 0 || self.required_endorsements > self.peers {
            return bad(format!(
                "required endorsements {} must be between 1 and the peer count {}",
                self.required_endorsements, self.peers
            ));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.ticks == 0 {
            return bad("tick horizon must be positive".into());
        }
        if self.workload.flows == 0 {
            return bad("workload must contain at least one flow".into());
        }
        if clean_hosts(&self.policy, &self.topology).len() < 2 {
            return bad("topology needs at least two hosts outside the deny list".into());
        }
        if matches!(self.adversary, Adversary::MaliciousFlow)
            && denied_hosts(&self.policy, &self.topology).is_empty()
        {
            return bad("the malicious-flow adversary needs a denied host in the topology".into());
        }
        Ok(())
    }
}

/// Hosts that no deny pattern matches, in address order.
pub fn clean_hosts(policy: &ConformancePolicy, topology: &NetworkTopology) -> Vec<String> {
    topology
        .hosts
        .keys()
        .filter(|host| !policy.denied_endpoints.iter().any(|p| p.matches(host)))
        .cloned()
        .collect()
}

/// Hosts the deny list matches, in address order.
pub fn denied_hosts(policy: &ConformancePolicy, topology: &NetworkTopology) -> Vec<String> {
    topology
        .hosts
        .keys()
        .filter(|host| policy.denied_endpoints.iter().any(|p| p.matches(host)))
        .cloned()
        .collect()
}

/// Draws the depth a verification task requires: complex with probability
/// `p`, shallow otherwise.
pub fn draw_plan(rng: &mut StreamRng, p: f64) -> VerificationPlan {
    if rng.chance(p) {
        VerificationPlan::Complex
    } else {
        VerificationPlan::Simple
    }
}

/// Effort a task actually consumes when the verifier chose effort `s` and
/// ran `plan`: the full `s` for a complex run, `epsilon * s` for a shallow
/// one.
pub fn realized_effort(econ: &EconParams, plan: VerificationPlan, s: f64) -> f64 {
    match plan {
        VerificationPlan::Complex => s,
        VerificationPlan::Simple => econ.epsilon * s,
    }
}

/// Realized social welfare of one task: verification value minus effort
/// cost at the realized effort.
pub fn realized_welfare(econ: &EconParams, plan: VerificationPlan, s: f64) -> f64 {
    let e = realized_effort(econ, plan, s);
    econ.beta * e - 0.5 * econ.alpha * e * e
}

/// Realized verifier utility of one task at reward rate `r`.
pub fn realized_verifier_utility(
    econ: &EconParams,
    r: f64,
    plan: VerificationPlan,
    s: f64,
) -> f64 {
    let e = realized_effort(econ, plan, s);
    r * e - 0.5 * econ.alpha * e * e
}

/// Realized VI utility of one task at reward rate `r`.
pub fn realized_vi_utility(econ: &EconParams, r: f64, plan: VerificationPlan, s: f64) -> f64 {
    let e = realized_effort(econ, plan, s);
    (econ.beta - r) * e
}

/// Terminal state of one flow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlowOutcome {
    /// Rules installed on the switches.
    Committed,
    /// Enough matching endorsements, and they assert this rejection.
    VerifiedReject(RejectCause),
    /// Every peer refused at the endorsement gate for this reason.
    GateRejected(RejectReason),
    /// No matching endorsement group reached the policy threshold.
    EndorseFailed,
    /// The VI refused the controller request (tampered or malformed).
    DroppedAtVi,
    /// Ordered, but invalidated during commit validation.
    InvalidAtCommit(InvalidReason),
    /// Still in flight when the tick horizon closed.
    Unresolved,
}

impl FlowOutcome {
    pub fn label(&self) -> String {
        match self {
            FlowOutcome::Committed => "committed".into(),
            FlowOutcome::VerifiedReject(cause) => {
                format!("verified-reject:{}", cause_slug(cause))
            }
            FlowOutcome::GateRejected(reason) => {
                format!("gate-rejected:{}", reason_slug(*reason))
            }
            FlowOutcome::EndorseFailed => "endorse-failed".into(),
            FlowOutcome::DroppedAtVi => "dropped-at-vi".into(),
            FlowOutcome::InvalidAtCommit(reason) => {
                format!("invalid-at-commit:{}", invalid_slug(reason))
            }
            FlowOutcome::Unresolved => "unresolved".into(),
        }
    }

    pub fn is_committed(&self) -> bool {
        matches!(self, FlowOutcome::Committed)
    }
}

impl Serialize for FlowOutcome {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.label())
    }
}

/// Stable kebab-case slug of a conformance rejection cause.
pub fn cause_slug(cause: &RejectCause) -> &'static str {
    match cause {
        RejectCause::Malformed => "malformed",
        RejectCause::DeniedEndpoint { .. } => "denied-endpoint",
        RejectCause::NotAllowed => "not-allowed",
        RejectCause::RuleMismatch => "rule-mismatch",
        RejectCause::UnknownNode { .. } => "unknown-node",
        RejectCause::MissingLink { .. } => "missing-link",
        RejectCause::ForbiddenLink { .. } => "forbidden-link",
        RejectCause::UnknownHost { .. } => "unknown-host",
        RejectCause::BrokenChain => "broken-chain",
        RejectCause::PathLoop { .. } => "path-loop",
        RejectCause::WrongEndpoint { .. } => "wrong-endpoint",
        RejectCause::PathTooLong { .. } => "path-too-long",
    }
}

/// Stable kebab-case slug of an endorsement gate rejection.
pub fn reason_slug(reason: RejectReason) -> &'static str {
    match reason {
        RejectReason::Malformed => "malformed",
        RejectReason::Replay => "replay",
        RejectReason::BadSignature => "bad-signature",
        RejectReason::Unauthorized => "unauthorized",
    }
}

/// Stable kebab-case slug of a commit-time invalidation.
pub fn invalid_slug(reason: &InvalidReason) -> &'static str {
    match reason {
        InvalidReason::BadClient => "bad-client",
        InvalidReason::PolicyUnsatisfied => "policy-unsatisfied",
        InvalidReason::StaleRead { .. } => "stale-read",
    }
}

/// Per-flow summary row.
#[derive(Debug, Clone, Serialize)]
pub struct FlowRecord {
    pub fid: String,
    pub src: String,
    pub dst: String,
    pub malicious: bool,
    /// The adversary corrupted this flow's bytes in flight.
    pub tampered: bool,
    pub outcome: FlowOutcome,
    pub latency: Option<u64>,
    pub required_plan: Option<VerificationPlan>,
    pub run_plan: Option<VerificationPlan>,
    pub effort: f64,
    pub reward: f64,
}

/// Aggregated result of a run. The utility identities hold exactly:
/// `verifier_utility = total_reward - verifier_cost` and
/// `vi_utility = vi_value - total_reward`, so
/// `welfare = verifier_utility + vi_utility`.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsRecord {
    pub scenario: String,
    pub seed: u64,
    pub flows_submitted: u64,
    pub flows_committed: u64,
    pub flows_rejected: u64,
    pub flows_failed: u64,
    pub flows_unresolved: u64,
    pub malicious_submitted: u64,
    pub malicious_committed: u64,
    pub tasks_verified: u64,
    pub total_effort: f64,
    pub total_reward: f64,
    pub verifier_cost: f64,
    pub verifier_utility: f64,
    pub vi_value: f64,
    pub vi_utility: f64,
    pub welfare: f64,
    pub mean_latency: f64,
    pub blocks_committed: u64,
    pub chain_tip: String,
    pub peers_agree: bool,
    /// Every ledger's block chain passes [`crate::protocol::verify_chain`].
    pub chain_valid: bool,
    pub event_digest: String,
    pub final_tick: u64,
}

/// Everything one run produced.
#[derive(Debug, Clone, Serialize)]
pub struct SimReport {
    pub metrics: MetricsRecord,
    pub flows: Vec<FlowRecord>,
    /// JSON event log lines, in order.
    pub events: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Econ(#[from] EconError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// Runs one scenario to completion.
pub fn run(scenario: &SimScenario) -> Result<SimReport, SimError> {
    engine::Engine::new(scenario)?.run()
}

/// Runs a batch sequentially, preserving order.
pub fn run_batch_seq(scenarios: &[SimScenario]) -> Result<Vec<SimReport>, SimError> {
    scenarios.iter().map(run).collect()
}

/// Runs a batch on the rayon thread pool, preserving order.
#[cfg(feature = "parallel")]
pub fn run_batch_par(scenarios: &[SimScenario]) -> Result<Vec<SimReport>, SimError> {
    scenarios.par_iter().map(run).collect()
}

/// Runs a batch with the best implementation the build carries.
pub fn run_batch(scenarios: &[SimScenario]) -> Result<Vec<SimReport>, SimError> {
    #[cfg(feature = "parallel")]
    {
        run_batch_par(scenarios)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_batch_seq(scenarios)
    }
}
