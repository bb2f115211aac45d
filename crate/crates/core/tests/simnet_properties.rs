//! End-to-end properties of the simulator: determinism, safety against the
//! built-in adversaries, liveness without them, exact economic accounting
//! and agreement between the sequential and parallel batch runners.

use flowchain::economics::{EconParams, Mechanism};
use flowchain::simnet::{
    self, Adversary, SimScenario, TamperHop, VerifierBehavior, Workload,
};

fn scenarios_with(adversary: Adversary, seeds: std::ops::Range<u64>) -> Vec<SimScenario> {
    seeds
        .map(|seed| {
            let mut scenario = SimScenario::reference("prop", seed);
            scenario.adversary = adversary;
            scenario
        })
        .collect()
}

#[test]
fn reruns_reproduce_the_event_digest_across_seeds() {
    for seed in 0..20 {
        let scenario = SimScenario::reference("determinism", seed);
        let a = simnet::run(&scenario).unwrap();
        let b = simnet::run(&scenario).unwrap();
        assert_eq!(
            a.metrics.event_digest, b.metrics.event_digest,
            "seed {seed}"
        );
        assert_eq!(a.events, b.events, "seed {seed}");
        assert_eq!(
            simnet::digest_lines(&a.events),
            a.metrics.event_digest,
            "seed {seed}: digest must cover exactly the emitted lines"
        );
    }
}

#[test]
fn no_adversarial_scenario_ever_commits_a_malicious_flow() {
    let mut scenarios = scenarios_with(Adversary::MaliciousFlow, 0..50);
    // Malicious flows against a shirking verifier are the interesting half:
    // the shallow plan must still catch endpoint violations.
    let mut greedy = scenarios_with(Adversary::MaliciousFlow, 50..100);
    for scenario in &mut greedy {
        scenario.verifier_behavior = VerifierBehavior::Greedy;
    }
    scenarios.append(&mut greedy);

    let mut malicious_seen = 0;
    for scenario in &scenarios {
        let report = simnet::run(scenario).unwrap();
        let m = &report.metrics;
        malicious_seen += m.malicious_submitted;
        assert_eq!(
            m.malicious_committed, 0,
            "seed {} let a malicious flow through",
            scenario.seed
        );
        assert!(m.peers_agree, "seed {}", scenario.seed);
        assert!(m.chain_valid, "seed {}", scenario.seed);
        for flow in report.flows.iter().filter(|f| f.malicious) {
            assert_eq!(
                flow.outcome.label(),
                "verified-reject:denied-endpoint",
                "seed {}",
                scenario.seed
            );
        }
    }
    assert!(malicious_seen > 100, "adversary barely showed up");
}

#[test]
fn adversary_free_scenarios_commit_every_flow() {
    for scenario in scenarios_with(Adversary::None, 0..25) {
        let report = simnet::run(&scenario).unwrap();
        let m = &report.metrics;
        assert_eq!(
            m.flows_committed, m.flows_submitted,
            "seed {}",
            scenario.seed
        );
        assert_eq!(m.flows_unresolved, 0, "seed {}", scenario.seed);
        assert!(m.peers_agree && m.chain_valid, "seed {}", scenario.seed);
    }
}

#[test]
fn utility_identities_hold_exactly_in_every_regime() {
    let mut scenarios = vec![
        SimScenario::reference("ids", 1),
        SimScenario::reference("ids", 2),
    ];
    scenarios[1].mechanism = Mechanism::Stackelberg;
    let mut fixed = SimScenario::reference("ids", 3);
    fixed.mechanism = Mechanism::FixedReward(4.0);
    scenarios.push(fixed);
    let mut greedy = SimScenario::reference("ids", 4);
    greedy.adversary = Adversary::GreedyVerifier;
    scenarios.push(greedy);
    let mut malice = SimScenario::reference("ids", 5);
    malice.adversary = Adversary::MaliciousFlow;
    scenarios.push(malice);
    let mut skew = SimScenario::reference("ids", 6);
    skew.econ = EconParams {
        p: 0.3,
        epsilon: 0.7,
        alpha: 1.1,
        beta: 6.0,
        sigma: 0.0,
        s_max: 1e6,
    };
    scenarios.push(skew);

    for scenario in &scenarios {
        let m = simnet::run(scenario).unwrap().metrics;
        assert_eq!(
            m.verifier_utility,
            m.total_reward - m.verifier_cost,
            "seed {}",
            scenario.seed
        );
        assert_eq!(m.vi_utility, m.vi_value - m.total_reward, "seed {}", scenario.seed);
        assert_eq!(
            m.welfare,
            m.verifier_utility + m.vi_utility,
            "seed {}",
            scenario.seed
        );
    }
}

#[test]
fn mean_realized_welfare_approaches_the_contract_expectation() {
    let mut scenario = SimScenario::reference("lln", 2024);
    scenario.workload = Workload {
        flows: 2000,
        interarrival: 1,
    };
    scenario.ticks = 10_000;
    let m = simnet::run(&scenario).unwrap().metrics;
    assert_eq!(m.flows_committed, 2000);

    let contract = flowchain::economics::optimal_contract(&scenario.econ).unwrap();
    let per_task = m.welfare / m.tasks_verified as f64;
    let expected = scenario.econ.expected_welfare(contract.effort);
    assert!(
        (per_task - expected).abs() < 1.5,
        "mean realized welfare {per_task} strays from expectation {expected}"
    );
}

#[test]
fn shirking_hurts_the_verifier_across_seeds() {
    for seed in 0..10 {
        let honest = simnet::run(&SimScenario::reference("h", seed)).unwrap();
        let mut scenario = SimScenario::reference("g", seed);
        scenario.adversary = Adversary::GreedyVerifier;
        let greedy = simnet::run(&scenario).unwrap();
        if honest
            .flows
            .iter()
            .any(|f| f.required_plan.map(|p| p.to_string()) == Some("complex".into()))
        {
            assert!(
                greedy.metrics.verifier_utility < honest.metrics.verifier_utility,
                "seed {seed}"
            );
            assert!(greedy.metrics.welfare < honest.metrics.welfare, "seed {seed}");
        }
    }
}

#[test]
fn tampered_hops_fail_closed() {
    let mut scenario = SimScenario::reference("tamper", 77);
    scenario.adversary = Adversary::Tamper {
        hop: TamperHop::ViPeer,
    };
    let report = simnet::run(&scenario).unwrap();
    let mut hit = 0;
    for flow in &report.flows {
        match flow.outcome.label().as_str() {
            "committed" => {}
            "gate-rejected:bad-signature" => hit += 1,
            other => panic!("unexpected outcome {other}"),
        }
    }
    assert!(hit > 0);

    scenario.adversary = Adversary::Tamper {
        hop: TamperHop::ControllerVi,
    };
    let report = simnet::run(&scenario).unwrap();
    for flow in &report.flows {
        assert!(
            matches!(
                flow.outcome.label().as_str(),
                "committed" | "dropped-at-vi"
            ),
            "unexpected outcome {}",
            flow.outcome.label()
        );
    }
}

#[test]
fn event_logs_are_valid_json_with_monotone_ticks() {
    let report = simnet::run(&SimScenario::reference("log", 31)).unwrap();
    let mut last_tick = 0u64;
    let mut last_seq = None::<u64>;
    for line in &report.events {
        let value: serde_json::Value = serde_json::from_str(line).unwrap();
        let tick = value["tick"].as_u64().unwrap();
        let seq = value["seq"].as_u64().unwrap();
        assert!(tick >= last_tick, "ticks went backwards at {line}");
        assert!(value["event"].is_string(), "missing event tag in {line}");
        if let Some(prev) = last_seq {
            assert_eq!(seq, prev + 1, "seq must be dense");
        }
        last_tick = tick;
        last_seq = Some(seq);
    }
    assert_eq!(
        serde_json::from_str::<serde_json::Value>(report.events.last().unwrap()).unwrap()
            ["event"],
        "sim-end"
    );
}

#[test]
fn batch_runners_agree_and_preserve_order() {
    let scenarios: Vec<SimScenario> = (0..8)
        .map(|seed| {
            let mut s = SimScenario::reference("batch", seed);
            if seed % 2 == 1 {
                s.adversary = Adversary::MaliciousFlow;
            }
            s
        })
        .collect();
    let seq = simnet::run_batch_seq(&scenarios).unwrap();
    let auto = simnet::run_batch(&scenarios).unwrap();
    assert_eq!(seq.len(), auto.len());
    for (a, b) in seq.iter().zip(&auto) {
        assert_eq!(a.metrics.seed, b.metrics.seed);
        assert_eq!(a.metrics.event_digest, b.metrics.event_digest);
        assert_eq!(a.events, b.events);
    }

    #[cfg(feature = "parallel")]
    {
        let par = simnet::run_batch_par(&scenarios).unwrap();
        for (a, b) in seq.iter().zip(&par) {
            assert_eq!(a.metrics.event_digest, b.metrics.event_digest);
        }
    }
}
