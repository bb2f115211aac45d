//! The event loop behind [`super::run`].
//!
//! Message timing: every hop (controller to VI, VI to peers, peers back to
//! VI, VI to orderer, orderer to peers, committer to switches) costs
//! `link_delay` ticks. A peer that actually executes chaincode holds the
//! proposal for the ceiling of the realized effort in ticks; a gate
//! rejection replies immediately. The VI collects once all peer responses
//! are in. With a batch size of one and a single-hop delay, a complex task
//! therefore commits `6 * link_delay + ceil(effort)` ticks after arrival.
//!
//! The endorsing peers act as one verifier organization: the task's effort
//! and reward are booked once per task when the VI finishes collecting,
//! never per peer.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use crate::conformance::{plan_rules, VerificationPlan, Verdict};
use crate::economics::{
    contract_for_reward, optimal_contract, stackelberg, EconParams, Mechanism,
};
use crate::flow::{FlowId, Packet, TransportProtocol};
use crate::protocol::{
    build_proposal, collect_endorsements, endorse, validate_and_commit, verify_chain, ActorId,
    Block, CollectOutcome, EndorsedTx, EndorsementPolicy, FlowProposal, FlowTables, KeyRegistry,
    OrderingService, PeerLedger, ProposalResponse, ProtocolError, Sig, TranProposal,
};
use crate::wire;

use super::events::{EventKind, EventLog};
use super::rng::StreamRng;
use super::{
    cause_slug, clean_hosts, denied_hosts, draw_plan, realized_effort, reason_slug, Adversary,
    FlowOutcome, FlowRecord, MetricsRecord, SimError, SimReport, SimScenario, TamperHop,
    VerifierBehavior,
};

/// The reward rate and chosen effort in force for the whole run.
struct Terms {
    reward: f64,
    effort: f64,
    participating: bool,
}

fn resolve_terms(econ: &EconParams, mechanism: Mechanism) -> Result<Terms, SimError> {
    let terms = match mechanism {
        Mechanism::Contract => {
            let c = optimal_contract(econ)?;
            Terms {
                reward: c.reward,
                effort: c.effort,
                participating: true,
            }
        }
        Mechanism::Stackelberg => {
            let sb = stackelberg(econ)?;
            let participating = sb.verifier_utility >= econ.sigma;
            Terms {
                reward: sb.reward,
                effort: if participating { sb.effort } else { 0.0 },
                participating,
            }
        }
        Mechanism::FixedReward(r) => {
            let c = contract_for_reward(econ, r)?;
            Terms {
                reward: c.reward,
                effort: c.effort,
                participating: c.participating,
            }
        }
    };
    Ok(terms)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Ev {
    Arrival { flow: usize },
    ViReceive { flow: usize },
    PeerWork { flow: usize, peer: usize },
    Response { flow: usize, peer: usize },
    OrdererReceive { flow: usize },
    OrdererFlush,
    Deliver { block: usize },
    Install { flow: usize },
}

struct Task {
    fid: FlowId,
    src: String,
    dst: String,
    malicious: bool,
    tampered: bool,
    arrival: u64,
    request: Option<TranProposal>,
    proposal: Option<FlowProposal>,
    required_plan: Option<VerificationPlan>,
    run_plan: Option<VerificationPlan>,
    effort: f64,
    reward: f64,
    responses: Vec<(usize, ProposalResponse)>,
    responses_due: usize,
    endorsed: Option<EndorsedTx>,
    outcome: Option<FlowOutcome>,
    latency: Option<u64>,
}

pub(super) struct Engine {
    scenario: SimScenario,
    terms: Terms,
    behavior: VerifierBehavior,
    vi: ActorId,
    registry: KeyRegistry,
    epolicy: EndorsementPolicy,
    peers: Vec<PeerLedger>,
    vi_ledger: PeerLedger,
    ordering: OrderingService,
    tables: FlowTables,
    tasks: Vec<Task>,
    fid_to_flow: BTreeMap<FlowId, usize>,
    blocks: Vec<Block>,
    queue: BinaryHeap<Reverse<(u64, u64, Ev)>>,
    next_seq: u64,
    log: EventLog,
    plan_rng: StreamRng,
    now: u64,
    // Running economic totals, booked once per verified task.
    tasks_verified: u64,
    total_effort: f64,
    total_reward: f64,
    verifier_cost: f64,
    vi_value: f64,
}

impl Engine {
    pub(super) fn new(scenario: &SimScenario) -> Result<Engine, SimError> {
        scenario.validate()?;
        let terms = resolve_terms(&scenario.econ, scenario.mechanism)?;
        let behavior = scenario.effective_behavior();

        let controller = ActorId::from("controller");
        let vi = ActorId::from("vi-1");
        let peer_ids: Vec<ActorId> = (1..=scenario.peers)
            .map(|i| ActorId::new(format!("peer-{i}")))
            .collect();
        let mut actors = vec![controller.clone(), vi.clone()];
        actors.extend(peer_ids.iter().cloned());
        let registry = KeyRegistry::with_actors(scenario.seed, &actors);
        let epolicy = EndorsementPolicy {
            required: scenario.required_endorsements,
            endorsers: peer_ids.iter().cloned().collect(),
            authorized_clients: [vi.clone()].into(),
        };
        let peers: Vec<PeerLedger> = peer_ids
            .iter()
            .map(|id| PeerLedger::new(id.clone(), scenario.policy.clone(), scenario.topology.clone()))
            .collect();
        let vi_ledger =
            PeerLedger::new(vi.clone(), scenario.policy.clone(), scenario.topology.clone());

        let mut engine = Engine {
            scenario: scenario.clone(),
            terms,
            behavior,
            vi,
            registry,
            epolicy,
            peers,
            vi_ledger,
            ordering: OrderingService::new(scenario.batch_size, scenario.batch_timeout),
            tables: FlowTables::default(),
            tasks: Vec::new(),
            fid_to_flow: BTreeMap::new(),
            blocks: Vec::new(),
            queue: BinaryHeap::new(),
            next_seq: 0,
            log: EventLog::default(),
            plan_rng: StreamRng::new(scenario.seed, "plan"),
            now: 0,
            tasks_verified: 0,
            total_effort: 0.0,
            total_reward: 0.0,
            verifier_cost: 0.0,
            vi_value: 0.0,
        };
        engine.generate_workload(&controller);
        Ok(engine)
    }

    fn generate_workload(&mut self, controller: &ActorId) {
        let scenario = self.scenario.clone();
        let clean = clean_hosts(&scenario.policy, &scenario.topology);
        let denied = denied_hosts(&scenario.policy, &scenario.topology);
        let mut wl = StreamRng::new(scenario.seed, "workload");
        let mut adv = StreamRng::new(scenario.seed, "adversary");
        let des_ports: [u16; 4] = [22, 80, 443, 8080];

        for i in 0..scenario.workload.flows {
            let arrival = 1 + u64::from(i) * scenario.workload.interarrival;
            let src = clean[wl.pick(clean.len())].clone();
            let mut dst_index = wl.pick(clean.len() - 1);
            if clean[dst_index] == src {
                dst_index = clean.len() - 1;
            }
            let mut dst = clean[dst_index].clone();
            let des_port = des_ports[wl.pick(des_ports.len())];

            let mut malicious = false;
            let mut tampered = false;
            match scenario.adversary {
                Adversary::MaliciousFlow => {
                    if adv.chance(0.5) {
                        malicious = true;
                        dst = denied[adv.pick(denied.len())].clone();
                    }
                }
                Adversary::Tamper { .. } => tampered = adv.chance(0.5),
                Adversary::None | Adversary::GreedyVerifier => {}
            }

            let packet = Packet {
                sou_ip: src.clone(),
                des_ip: dst.clone(),
                sou_port: 1024 + (i % 60_000) as u16,
                des_port,
                protocol: TransportProtocol::Tcp,
                mac: None,
            };
            let rules = plan_rules(&packet, &scenario.topology).unwrap_or_default();
            let mut request = TranProposal {
                packet: packet.clone(),
                rules,
                topology_version: scenario.topology.version,
                requested_at: arrival,
                controller: controller.clone(),
                sig: Sig([0u8; 32]),
            };
            request.sig = self
                .registry
                .sign(controller, &request.signed_bytes())
                .expect("controller is enrolled");

            let fid = wire::flow_id(&packet);
            let flow = self.tasks.len();
            self.fid_to_flow.insert(fid, flow);
            self.tasks.push(Task {
                fid,
                src,
                dst,
                malicious,
                tampered,
                arrival,
                request: Some(request),
                proposal: None,
                required_plan: None,
                run_plan: None,
                effort: 0.0,
                reward: 0.0,
                responses: Vec::new(),
                responses_due: 0,
                endorsed: None,
                outcome: None,
                latency: None,
            });
            self.schedule(arrival, Ev::Arrival { flow });
        }
    }

    fn schedule(&mut self, tick: u64, ev: Ev) {
        self.queue.push(Reverse((tick, self.next_seq, ev)));
        self.next_seq += 1;
    }

    pub(super) fn run(mut self) -> Result<SimReport, SimError> {
        while let Some(Reverse((tick, _, ev))) = self.queue.pop() {
            if tick > self.scenario.ticks {
                break;
            }
            self.now = tick;
            match ev {
                Ev::Arrival { flow } => self.on_arrival(flow),
                Ev::ViReceive { flow } => self.on_vi_receive(flow),
                Ev::PeerWork { flow, peer } => self.on_peer_work(flow, peer),
                Ev::Response { flow, peer } => self.on_response(flow, peer),
                Ev::OrdererReceive { flow } => self.on_orderer_receive(flow),
                Ev::OrdererFlush => self.on_orderer_flush(),
                Ev::Deliver { block } => self.on_deliver(block),
                Ev::Install { flow } => self.on_install(flow),
            }
        }
        Ok(self.finalize())
    }

    fn on_arrival(&mut self, flow: usize) {
        let task = &self.tasks[flow];
        self.log.push(
            self.now,
            EventKind::FlowArrival {
                fid: task.fid.prefix8(),
                src: task.src.clone(),
                dst: task.dst.clone(),
                malicious: task.malicious,
            },
        );
        self.schedule(self.now + self.scenario.link_delay, Ev::ViReceive { flow });
    }

    fn on_vi_receive(&mut self, flow: usize) {
        let tamper_hop = match self.scenario.adversary {
            Adversary::Tamper { hop } => Some(hop),
            _ => None,
        };
        let task = &mut self.tasks[flow];
        let fid8 = task.fid.prefix8();
        let mut request = task.request.take().expect("request delivered once");

        if task.tampered && tamper_hop == Some(TamperHop::ControllerVi) {
            self.log.push(
                self.now,
                EventKind::RequestTampered {
                    fid: fid8.clone(),
                    hop: "controller-vi".into(),
                },
            );
            request.rules[0].priority += 1;
        }

        let mut proposal = match build_proposal(&self.registry, &self.vi, &request, self.now) {
            Ok(proposal) => proposal,
            Err(err) => {
                let reason = match err {
                    ProtocolError::TamperedRequest => "tampered-request",
                    ProtocolError::MalformedRequest(_) => "malformed-request",
                    ProtocolError::UnknownActor(_) => "unknown-actor",
                };
                self.log.push(
                    self.now,
                    EventKind::ProposalDropped {
                        fid: fid8,
                        reason: reason.into(),
                    },
                );
                self.tasks[flow].outcome = Some(FlowOutcome::DroppedAtVi);
                return;
            }
        };

        if self.tasks[flow].tampered && tamper_hop == Some(TamperHop::ViPeer) {
            self.log.push(
                self.now,
                EventKind::RequestTampered {
                    fid: fid8.clone(),
                    hop: "vi-peer".into(),
                },
            );
            proposal.tx.rules[0].priority += 1;
        }

        // The task's required depth is drawn regardless of mechanism or
        // behavior so the plan stream stays aligned across scenarios; the
        // benchmark then verifies everything at full depth and the greedy
        // verifier skimps to the shallow plan.
        let drawn = draw_plan(&mut self.plan_rng, self.scenario.econ.p);
        let required = match self.scenario.mechanism {
            Mechanism::Stackelberg => VerificationPlan::Complex,
            _ => drawn,
        };
        let run = match self.behavior {
            VerifierBehavior::Honest => required,
            VerifierBehavior::Greedy => VerificationPlan::Simple,
        };
        let effort = realized_effort(&self.scenario.econ, run, self.terms.effort);
        self.log.push(
            self.now,
            EventKind::PlanDrawn {
                fid: fid8,
                required,
                run,
                effort,
            },
        );

        let task = &mut self.tasks[flow];
        task.proposal = Some(proposal);
        task.required_plan = Some(required);
        task.run_plan = Some(run);
        task.effort = effort;

        if !self.terms.participating {
            // The verifier declined the contract: proposals go out and
            // nothing ever comes back.
            self.log.push(
                self.now,
                EventKind::CollectFailed {
                    fid: self.tasks[flow].fid.prefix8(),
                    gathered: 0,
                    required: self.epolicy.required,
                },
            );
            self.tasks[flow].outcome = Some(FlowOutcome::EndorseFailed);
            return;
        }

        self.tasks[flow].responses_due = self.peers.len();
        for peer in 0..self.peers.len() {
            self.schedule(
                self.now + self.scenario.link_delay,
                Ev::PeerWork { flow, peer },
            );
        }
    }

    fn on_peer_work(&mut self, flow: usize, peer: usize) {
        let run = self.tasks[flow].run_plan.expect("plan fixed at the VI");
        let proposal = self.tasks[flow]
            .proposal
            .clone()
            .expect("proposal fixed at the VI");
        let response = endorse(
            &mut self.peers[peer],
            &self.registry,
            &self.epolicy,
            &proposal,
            run,
        );
        let work = match response {
            ProposalResponse::Endorsed(_) => self.tasks[flow].effort.ceil() as u64,
            ProposalResponse::Rejected { .. } => 0,
        };
        self.tasks[flow].responses.push((peer, response));
        self.schedule(
            self.now + work + self.scenario.link_delay,
            Ev::Response { flow, peer },
        );
    }

    fn on_response(&mut self, flow: usize, peer: usize) {
        let fid8 = self.tasks[flow].fid.prefix8();
        let peer_name = self.peers[peer].peer.to_string();
        let response = self.tasks[flow]
            .responses
            .iter()
            .find(|(p, _)| *p == peer)
            .map(|(_, r)| r.clone())
            .expect("response recorded at peer work");
        match &response {
            ProposalResponse::Endorsed(endorsement) => self.log.push(
                self.now,
                EventKind::Endorsed {
                    fid: fid8,
                    peer: peer_name,
                    conformant: endorsement.verdict.is_conformant(),
                },
            ),
            ProposalResponse::Rejected { reason, .. } => self.log.push(
                self.now,
                EventKind::ResponseRejected {
                    fid: fid8,
                    peer: peer_name,
                    reason: reason_slug(*reason).into(),
                },
            ),
        }

        self.tasks[flow].responses_due -= 1;
        if self.tasks[flow].responses_due == 0 {
            self.collect(flow);
        }
    }

    fn collect(&mut self, flow: usize) {
        let fid8 = self.tasks[flow].fid.prefix8();
        let responses: Vec<ProposalResponse> = self.tasks[flow]
            .responses
            .iter()
            .map(|(_, r)| r.clone())
            .collect();

        // Chaincode ran iff at least one peer endorsed; that is when the
        // verifier organization spent the effort and earns the reward.
        if responses
            .iter()
            .any(|r| matches!(r, ProposalResponse::Endorsed(_)))
        {
            let effort = self.tasks[flow].effort;
            let reward = self.terms.reward * effort;
            let econ = &self.scenario.econ;
            self.tasks_verified += 1;
            self.total_effort += effort;
            self.total_reward += reward;
            self.verifier_cost += 0.5 * econ.alpha * effort * effort;
            self.vi_value += econ.beta * effort;
            self.tasks[flow].reward = reward;
            self.log.push(
                self.now,
                EventKind::TaskComplete {
                    fid: fid8.clone(),
                    effort,
                    reward,
                },
            );
        }

        let proposal = self.tasks[flow].proposal.as_ref().expect("proposal kept");
        match collect_endorsements(&self.registry, &self.epolicy, proposal, &responses) {
            CollectOutcome::Ready(endorsed) => {
                self.log.push(
                    self.now,
                    EventKind::CollectReady {
                        fid: fid8,
                        endorsements: endorsed.endorsements.len(),
                    },
                );
                self.tasks[flow].endorsed = Some(endorsed);
                self.schedule(
                    self.now + self.scenario.link_delay,
                    Ev::OrdererReceive { flow },
                );
            }
            CollectOutcome::VerifiedReject { verdict, supporters } => {
                let Verdict::Rejected(cause) = verdict else {
                    unreachable!("a verified reject carries a rejection");
                };
                self.log.push(
                    self.now,
                    EventKind::CollectRejected {
                        fid: fid8,
                        cause: cause_slug(&cause).into(),
                        supporters,
                    },
                );
                self.tasks[flow].outcome = Some(FlowOutcome::VerifiedReject(cause));
            }
            CollectOutcome::Failed { gathered, required } => {
                self.log.push(
                    self.now,
                    EventKind::CollectFailed {
                        fid: fid8,
                        gathered,
                        required,
                    },
                );
                self.tasks[flow].outcome = Some(gate_outcome(&responses));
            }
        }
    }

    fn on_orderer_receive(&mut self, flow: usize) {
        let endorsed = self.tasks[flow].endorsed.take().expect("ready transaction");
        match self.ordering.submit(endorsed, self.now) {
            Some(block) => self.cut_block(block),
            None => {
                let due = self.now + self.scenario.batch_timeout;
                self.schedule(due, Ev::OrdererFlush);
            }
        }
    }

    fn on_orderer_flush(&mut self) {
        if let Some(block) = self.ordering.flush_due(self.now) {
            self.cut_block(block);
        }
    }

    fn cut_block(&mut self, block: Block) {
        self.log.push(
            self.now,
            EventKind::BlockCut {
                height: block.height,
                txs: block.txs.len(),
            },
        );
        let index = self.blocks.len();
        self.blocks.push(block);
        self.schedule(self.now + self.scenario.link_delay, Ev::Deliver { block: index });
    }

    fn on_deliver(&mut self, block: usize) {
        let block = self.blocks[block].clone();
        for peer in &mut self.peers {
            let summary = validate_and_commit(peer, &self.registry, &self.epolicy, &block)
                .expect("ordered blocks commit in sequence");
            self.log.push(
                self.now,
                EventKind::BlockCommitted {
                    peer: peer.peer.to_string(),
                    height: summary.height,
                    valid: summary.valid.len(),
                    invalid: summary.invalid.len(),
                },
            );
        }
        let summary =
            validate_and_commit(&mut self.vi_ledger, &self.registry, &self.epolicy, &block)
                .expect("ordered blocks commit in sequence");
        self.log.push(
            self.now,
            EventKind::BlockCommitted {
                peer: self.vi.to_string(),
                height: summary.height,
                valid: summary.valid.len(),
                invalid: summary.invalid.len(),
            },
        );

        for fid in &summary.valid {
            let flow = self.fid_to_flow[fid];
            self.schedule(self.now + self.scenario.link_delay, Ev::Install { flow });
        }
        for (fid, reason) in &summary.invalid {
            let flow = self.fid_to_flow[fid];
            self.tasks[flow].outcome = Some(FlowOutcome::InvalidAtCommit(reason.clone()));
        }
    }

    fn on_install(&mut self, flow: usize) {
        let fid8 = self.tasks[flow].fid.prefix8();
        let rules = self.tasks[flow]
            .proposal
            .as_ref()
            .expect("proposal kept")
            .tx
            .rules
            .clone();
        for rule in &rules {
            self.tables.install(rule);
            self.log.push(
                self.now,
                EventKind::RuleInstalled {
                    fid: fid8.clone(),
                    switch: rule.switch.to_string(),
                },
            );
        }
        let task = &mut self.tasks[flow];
        let latency = self.now - task.arrival;
        task.latency = Some(latency);
        task.outcome = Some(FlowOutcome::Committed);
        self.log.push(
            self.now,
            EventKind::FlowCommitted {
                fid: fid8,
                latency,
            },
        );
    }

    fn finalize(mut self) -> SimReport {
        for task in &mut self.tasks {
            if task.outcome.is_none() {
                task.outcome = Some(FlowOutcome::Unresolved);
            }
        }
        self.log.push(
            self.now,
            EventKind::SimEnd {
                tick: self.now,
                flows: self.tasks.len() as u64,
            },
        );

        let flows: Vec<FlowRecord> = self
            .tasks
            .iter()
            .map(|task| FlowRecord {
                fid: task.fid.to_hex(),
                src: task.src.clone(),
                dst: task.dst.clone(),
                malicious: task.malicious,
                tampered: task.tampered,
                outcome: task.outcome.clone().expect("finalized"),
                latency: task.latency,
                required_plan: task.required_plan,
                run_plan: task.run_plan,
                effort: task.effort,
                reward: task.reward,
            })
            .collect();

        let committed: Vec<&FlowRecord> = flows.iter().filter(|f| f.outcome.is_committed()).collect();
        let mean_latency = if committed.is_empty() {
            0.0
        } else {
            committed
                .iter()
                .filter_map(|f| f.latency)
                .sum::<u64>() as f64
                / committed.len() as f64
        };
        let count = |pred: &dyn Fn(&FlowRecord) -> bool| flows.iter().filter(|f| pred(f)).count() as u64;

        let tip = self.vi_ledger.tip_digest();
        let peers_agree = self.peers.iter().all(|p| p.tip_digest() == tip);
        let chain_valid = verify_chain(&self.vi_ledger.blocks).is_ok()
            && self
                .peers
                .iter()
                .all(|p| verify_chain(&p.blocks).is_ok());

        let verifier_utility = self.total_reward - self.verifier_cost;
        let vi_utility = self.vi_value - self.total_reward;
        let metrics = MetricsRecord {
            scenario: self.scenario.name.clone(),
            seed: self.scenario.seed,
            flows_submitted: flows.len() as u64,
            flows_committed: committed.len() as u64,
            flows_rejected: count(&|f| matches!(f.outcome, FlowOutcome::VerifiedReject(_))),
            flows_failed: count(&|f| {
                matches!(
                    f.outcome,
                    FlowOutcome::GateRejected(_)
                        | FlowOutcome::EndorseFailed
                        | FlowOutcome::DroppedAtVi
                        | FlowOutcome::InvalidAtCommit(_)
                )
            }),
            flows_unresolved: count(&|f| matches!(f.outcome, FlowOutcome::Unresolved)),
            malicious_submitted: count(&|f| f.malicious),
            malicious_committed: count(&|f| f.malicious && f.outcome.is_committed()),
            tasks_verified: self.tasks_verified,
            total_effort: self.total_effort,
            total_reward: self.total_reward,
            verifier_cost: self.verifier_cost,
            verifier_utility,
            vi_value: self.vi_value,
            vi_utility,
            welfare: verifier_utility + vi_utility,
            mean_latency,
            blocks_committed: self.vi_ledger.height(),
            chain_tip: wire::hex(&tip),
            peers_agree,
            chain_valid,
            event_digest: self.log.digest(),
            final_tick: self.now,
        };
        SimReport {
            metrics,
            flows,
            events: self.log.into_lines(),
        }
    }
}

/// When collection fails, the flow outcome is the gate reason if every peer
/// rejected for the same one, otherwise a bare endorsement failure.
fn gate_outcome(responses: &[ProposalResponse]) -> FlowOutcome {
    let mut reasons = responses.iter().map(|r| match r {
        ProposalResponse::Rejected { reason, .. } => Some(*reason),
        ProposalResponse::Endorsed(_) => None,
    });
    match reasons.next().flatten() {
        Some(first) if reasons.all(|r| r == Some(first)) => FlowOutcome::GateRejected(first),
        _ => FlowOutcome::EndorseFailed,
    }
}
