//! Flow conformance checking against a network policy and topology.
//!
//! Verification comes in two depths. The simple plan screens only the
//! endpoints of the announced flow against the deny and allow lists. The
//! complex plan additionally replays the proposed forwarding rules across
//! the topology: the rules must form a loop-free chain of existing,
//! permitted links from the source host's switch to the destination host's
//! switch, matching the announced five-tuple and respecting the length cap.
//! A flow whose endpoints look clean but whose rules sneak through a
//! forbidden link therefore passes the simple plan and fails the complex
//! one; that gap is exactly what the incentive layer prices.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{FlowRule, Link, MatchFields, NodeId, Packet, RuleAction};
use crate::wire;

/// Endpoint pattern: `*` matches anything, a trailing `*` matches a prefix,
/// anything else matches exactly. Serialized as the pattern string.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Pattern {
    Any,
    Prefix(String),
    Exact(String),
}

impl Pattern {
    pub fn parse(s: &str) -> Pattern {
        if s == "*" {
            Pattern::Any
        } else if let Some(prefix) = s.strip_suffix('*') {
            Pattern::Prefix(prefix.to_owned())
        } else {
            Pattern::Exact(s.to_owned())
        }
    }

    pub fn matches(&self, value: &str) -> bool {
        match self {
            Pattern::Any => true,
            Pattern::Prefix(p) => value.starts_with(p.as_str()),
            Pattern::Exact(e) => value == e,
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Any => f.write_str("*"),
            Pattern::Prefix(p) => write!(f, "{p}*"),
            Pattern::Exact(e) => f.write_str(e),
        }
    }
}

impl Serialize for Pattern {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Pattern {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(Pattern::parse(&s))
    }
}

/// One entry of the allow list. A packet is admissible when its source and
/// destination match the patterns and its destination port falls in the
/// inclusive range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllowRule {
    pub src: Pattern,
    pub dst: Pattern,
    #[serde(default)]
    pub port_lo: u16,
    #[serde(default = "port_max")]
    pub port_hi: u16,
}

fn port_max() -> u16 {
    u16::MAX
}

impl AllowRule {
    pub fn admits(&self, packet: &Packet) -> bool {
        self.src.matches(&packet.sou_ip)
            && self.dst.matches(&packet.des_ip)
            && (self.port_lo..=self.port_hi).contains(&packet.des_port)
    }
}

/// The network policy a flow must conform to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformancePolicy {
    /// Version recorded in chaincode read sets.
    pub version: u64,
    /// Endpoints no flow may touch, in either direction.
    pub denied_endpoints: Vec<Pattern>,
    /// At least one entry must admit the packet.
    pub allow: Vec<AllowRule>,
    /// Maximum number of switches a rule chain may span.
    pub max_path_len: u32,
    /// Links no rule chain may traverse even though they exist.
    pub forbidden_links: Vec<Link>,
}

/// Switch graph with host attachment points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkTopology {
    /// Version recorded in chaincode read sets.
    pub version: u64,
    pub nodes: Vec<NodeId>,
    pub links: Vec<Link>,
    /// Host address to the switch it hangs off.
    pub hosts: BTreeMap<String, NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("link {0:?} references an unknown node")]
    DanglingLink(Link),
    #[error("link {0:?} connects a node to itself")]
    SelfLoop(Link),
    #[error("host {0} attaches to unknown node {1}")]
    DanglingHost(String, NodeId),
}

impl NetworkTopology {
    pub fn validate(&self) -> Result<(), TopologyError> {
        let nodes: BTreeSet<&NodeId> = self.nodes.iter().collect();
        for link in &self.links {
            if link.is_self_loop() {
                return Err(TopologyError::SelfLoop(link.clone()));
            }
            let (a, b) = link.endpoints();
            if !nodes.contains(a) || !nodes.contains(b) {
                return Err(TopologyError::DanglingLink(link.clone()));
            }
        }
        for (host, node) in &self.hosts {
            if !nodes.contains(node) {
                return Err(TopologyError::DanglingHost(host.clone(), node.clone()));
            }
        }
        Ok(())
    }

    pub fn has_node(&self, n: &NodeId) -> bool {
        self.nodes.contains(n)
    }

    pub fn has_link(&self, a: &NodeId, b: &NodeId) -> bool {
        let probe = Link::new(a.clone(), b.clone());
        self.links.contains(&probe)
    }

    pub fn attachment(&self, host: &str) -> Option<&NodeId> {
        self.hosts.get(host)
    }

    /// Breadth-first shortest path between two switches. Neighbors are
    /// visited in sorted order, so the result is deterministic.
    pub fn shortest_path(&self, from: &NodeId, to: &NodeId) -> Option<Vec<NodeId>> {
        if !self.has_node(from) || !self.has_node(to) {
            return None;
        }
        if from == to {
            return Some(vec![from.clone()]);
        }
        let mut adjacency: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
        for link in &self.links {
            let (a, b) = link.endpoints();
            adjacency.entry(a).or_default().push(b);
            adjacency.entry(b).or_default().push(a);
        }
        for neighbors in adjacency.values_mut() {
            neighbors.sort();
        }
        let mut prev: BTreeMap<&NodeId, &NodeId> = BTreeMap::new();
        let mut queue = VecDeque::from([from]);
        'search: while let Some(cur) = queue.pop_front() {
            for &next in adjacency.get(cur).into_iter().flatten() {
                if next != from && !prev.contains_key(next) {
                    prev.insert(next, cur);
                    if next == to {
                        break 'search;
                    }
                    queue.push_back(next);
                }
            }
        }
        prev.contains_key(to).then(|| {
            let mut path = vec![to.clone()];
            let mut cur = to;
            while let Some(&p) = prev.get(cur) {
                path.push(p.clone());
                cur = p;
            }
            path.reverse();
            path
        })
    }
}

/// Outcome of a conformance check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Conformant,
    Rejected(RejectCause),
}

impl Verdict {
    pub fn is_conformant(&self) -> bool {
        matches!(self, Verdict::Conformant)
    }
}

/// Why a flow failed its conformance check. Checks run in a fixed order, so
/// a flow violating several clauses always reports the same cause.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectCause {
    /// The packet itself is ill-formed (empty address fields).
    Malformed,
    /// An endpoint matches the deny list.
    DeniedEndpoint { endpoint: String },
    /// No allow-list entry admits the flow.
    NotAllowed,
    /// A rule's match fields differ from the announced five-tuple, or a
    /// switch carries more than one rule.
    RuleMismatch,
    /// A rule names a switch absent from the topology.
    UnknownNode { node: NodeId },
    /// The chain hops across a link the topology does not contain.
    MissingLink { from: NodeId, to: NodeId },
    /// The chain traverses a link the policy forbids.
    ForbiddenLink { from: NodeId, to: NodeId },
    /// A host has no attachment point in the topology.
    UnknownHost { host: String },
    /// The rules do not form one contiguous chain covering every rule.
    BrokenChain,
    /// The chain revisits a switch.
    PathLoop { node: NodeId },
    /// Delivery happens somewhere other than the destination's switch.
    WrongEndpoint { node: NodeId },
    /// The chain spans more switches than the policy allows.
    PathTooLong { len: u32, max: u32 },
}

/// Endpoint-only screening: deny list, then allow list.
pub fn verify_simple(packet: &Packet, policy: &ConformancePolicy) -> Verdict {
    if packet.validate().is_err() {
        return Verdict::Rejected(RejectCause::Malformed);
    }
    for pattern in &policy.denied_endpoints {
        for endpoint in [&packet.sou_ip, &packet.des_ip] {
            if pattern.matches(endpoint) {
                return Verdict::Rejected(RejectCause::DeniedEndpoint {
                    endpoint: endpoint.clone(),
                });
            }
        }
    }
    if !policy.allow.iter().any(|rule| rule.admits(packet)) {
        return Verdict::Rejected(RejectCause::NotAllowed);
    }
    Verdict::Conformant
}

/// Full-depth verification: endpoint screening plus a replay of the rule
/// chain over the topology.
///
/// Order of checks after the endpoint screen: per-rule match fields and
/// switch existence, then the chain walk from the source's switch (missing
/// or duplicate rules, link existence, forbidden links, loops, delivery
/// switch), then the path length cap.
pub fn verify_complex(
    packet: &Packet,
    rules: &[FlowRule],
    topology: &NetworkTopology,
    policy: &ConformancePolicy,
) -> Verdict {
    let screened = verify_simple(packet, policy);
    if !screened.is_conformant() {
        return screened;
    }

    let expected = MatchFields::from_packet(packet);
    let mut by_switch: BTreeMap<&NodeId, &FlowRule> = BTreeMap::new();
    for rule in rules {
        if rule.matches != expected {
            return Verdict::Rejected(RejectCause::RuleMismatch);
        }
        if !topology.has_node(&rule.switch) {
            return Verdict::Rejected(RejectCause::UnknownNode {
                node: rule.switch.clone(),
            });
        }
        if by_switch.insert(&rule.switch, rule).is_some() {
            return Verdict::Rejected(RejectCause::RuleMismatch);
        }
    }

    let Some(start) = topology.attachment(&packet.sou_ip) else {
        return Verdict::Rejected(RejectCause::UnknownHost {
            host: packet.sou_ip.clone(),
        });
    };
    let Some(goal) = topology.attachment(&packet.des_ip) else {
        return Verdict::Rejected(RejectCause::UnknownHost {
            host: packet.des_ip.clone(),
        });
    };

    let mut visited: BTreeSet<&NodeId> = BTreeSet::new();
    let mut current = start;
    let mut used = 0usize;
    loop {
        visited.insert(current);
        let Some(rule) = by_switch.get(current) else {
            return Verdict::Rejected(RejectCause::BrokenChain);
        };
        used += 1;
        match &rule.action {
            RuleAction::Deliver => {
                if current != goal {
                    return Verdict::Rejected(RejectCause::WrongEndpoint {
                        node: current.clone(),
                    });
                }
                break;
            }
            RuleAction::Forward(next) => {
                if !topology.has_node(next) {
                    return Verdict::Rejected(RejectCause::UnknownNode { node: next.clone() });
                }
                if !topology.has_link(current, next) {
                    return Verdict::Rejected(RejectCause::MissingLink {
                        from: current.clone(),
                        to: next.clone(),
                    });
                }
                let hop = Link::new(current.clone(), next.clone());
                if policy.forbidden_links.contains(&hop) {
                    return Verdict::Rejected(RejectCause::ForbiddenLink {
                        from: current.clone(),
                        to: next.clone(),
                    });
                }
                if visited.contains(next) {
                    return Verdict::Rejected(RejectCause::PathLoop { node: next.clone() });
                }
                current = next;
            }
        }
    }
    if used != rules.len() {
        return Verdict::Rejected(RejectCause::BrokenChain);
    }
    let len = visited.len() as u32;
    if len > policy.max_path_len {
        return Verdict::Rejected(RejectCause::PathTooLong {
            len,
            max: policy.max_path_len,
        });
    }
    Verdict::Conformant
}

/// Which verification depth an endorsing peer runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerificationPlan {
    Simple,
    Complex,
}

impl fmt::Display for VerificationPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VerificationPlan::Simple => f.write_str("simple"),
            VerificationPlan::Complex => f.write_str("complex"),
        }
    }
}

/// What a chaincode invocation produced: the verdict plus the read and write
/// sets the endorsement will carry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChaincodeResult {
    pub verdict: Verdict,
    /// Key and the committed version it was read at.
    pub read_set: Vec<(String, u64)>,
    pub write_set: Vec<(String, String)>,
}

/// Deterministic chaincode for flow conformance.
///
/// The read set always names both the policy and the topology at their
/// current versions, whichever plan ran: the plan decides how thoroughly the
/// state is inspected, not which state the transaction depends on, and
/// identical read sets keep endorsements from honest peers byte-compatible.
/// A conformant flow writes its own flow key; a rejected one writes nothing.
pub fn invoke_chaincode(
    policy: &ConformancePolicy,
    topology: &NetworkTopology,
    plan: VerificationPlan,
    packet: &Packet,
    rules: &[FlowRule],
) -> ChaincodeResult {
    let verdict = match plan {
        VerificationPlan::Simple => verify_simple(packet, policy),
        VerificationPlan::Complex => verify_complex(packet, rules, topology, policy),
    };
    let read_set = vec![
        ("policy".to_owned(), policy.version),
        ("topology".to_owned(), topology.version),
    ];
    let write_set = if verdict.is_conformant() {
        let fid = wire::flow_id(packet);
        vec![(format!("flow/{}", fid.to_hex()), "true".to_owned())]
    } else {
        Vec::new()
    };
    ChaincodeResult {
        verdict,
        read_set,
        write_set,
    }
}

/// Plans a rule chain for the packet along the shortest admissible-looking
/// path. This is the honest controller's rule synthesis; it consults the
/// topology but not the policy, so a policy-violating plan can still be
/// produced and must be caught by verification.
pub fn plan_rules(packet: &Packet, topology: &NetworkTopology) -> Option<Vec<FlowRule>> {
    let start = topology.attachment(&packet.sou_ip)?;
    let goal = topology.attachment(&packet.des_ip)?;
    let path = topology.shortest_path(start, goal)?;
    let matches = MatchFields::from_packet(packet);
    let mut rules = Vec::with_capacity(path.len());
    for pair in path.windows(2) {
        rules.push(FlowRule {
            switch: pair[0].clone(),
            matches: matches.clone(),
            action: RuleAction::Forward(pair[1].clone()),
            priority: 10,
        });
    }
    rules.push(FlowRule {
        switch: path.last()?.clone(),
        matches,
        action: RuleAction::Deliver,
        priority: 10,
    });
    Some(rules)
}
