//! `flowchain`: solve verification contracts, sweep parameters, run
//! simulation scenarios and verify single flow requests.
//!
//! Exit codes: 0 on success, 1 when `verify` rejects the flow, 2 on usage or
//! input errors, 3 on internal failures such as unwritable output paths.

mod chart;
mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use flowchain::conformance::{
    invoke_chaincode, ConformancePolicy, NetworkTopology, VerificationPlan,
};
use flowchain::economics::{
    optimal_contract, stackelberg, sweep, welfare_ratio, DerivedContract, EconParams, Mechanism,
    StackelbergOutcome, VaryParam,
};
use flowchain::flow::{FlowRule, Packet};
use flowchain::simnet::{self, Adversary, SimScenario, TamperHop, VerifierBehavior};

use chart::{line_chart, Series};
use output::{emit, fmt_sig, print_kv};

#[derive(Parser)]
#[command(
    name = "flowchain",
    version,
    about = "Contract-backed SDN flow verification: solver, sweeps, simulator"
)]
struct Cli {
    /// Significant digits for printed numbers.
    #[arg(long, global = true, default_value_t = 6)]
    precision: usize,
    #[command(subcommand)]
    command: Command,
}

/// Model parameters; every omitted flag keeps its reference default
/// (p 0.5, eps 0.5, alpha 0.5, beta 10, sigma 0, smax 1e6).
#[derive(Args, Clone, Copy, Default)]
struct EconArgs {
    /// Probability that a task requires full-depth verification.
    #[arg(long)]
    p: Option<f64>,
    /// Effort fraction a shallow task consumes.
    #[arg(long = "eps")]
    epsilon: Option<f64>,
    /// Verifier cost curvature.
    #[arg(long)]
    alpha: Option<f64>,
    /// VI value per unit of realized effort.
    #[arg(long)]
    beta: Option<f64>,
    /// Verifier participation floor.
    #[arg(long)]
    sigma: Option<f64>,
    /// Hard cap on chosen effort.
    #[arg(long = "smax")]
    s_max: Option<f64>,
}

impl EconArgs {
    fn any(&self) -> bool {
        self.p.is_some()
            || self.epsilon.is_some()
            || self.alpha.is_some()
            || self.beta.is_some()
            || self.sigma.is_some()
            || self.s_max.is_some()
    }

    fn apply(&self, mut params: EconParams) -> EconParams {
        if let Some(p) = self.p {
            params.p = p;
        }
        if let Some(epsilon) = self.epsilon {
            params.epsilon = epsilon;
        }
        if let Some(alpha) = self.alpha {
            params.alpha = alpha;
        }
        if let Some(beta) = self.beta {
            params.beta = beta;
        }
        if let Some(sigma) = self.sigma {
            params.sigma = sigma;
        }
        if let Some(s_max) = self.s_max {
            params.s_max = s_max;
        }
        params
    }

    fn params(&self) -> EconParams {
        self.apply(EconParams::default())
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VaryArg {
    P,
    Epsilon,
    Alpha,
    Beta,
}

impl From<VaryArg> for VaryParam {
    fn from(arg: VaryArg) -> Self {
        match arg {
            VaryArg::P => VaryParam::P,
            VaryArg::Epsilon => VaryParam::Epsilon,
            VaryArg::Alpha => VaryParam::Alpha,
            VaryArg::Beta => VaryParam::Beta,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PlanArg {
    Simple,
    Complex,
}

impl From<PlanArg> for VerificationPlan {
    fn from(arg: PlanArg) -> Self {
        match arg {
            PlanArg::Simple => VerificationPlan::Simple,
            PlanArg::Complex => VerificationPlan::Complex,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the welfare-optimal contract and its full-information
    /// benchmark for one parameter set.
    Optimal {
        #[command(flatten)]
        econ: EconArgs,
        /// Print one JSON object instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// Evaluate contract and benchmark across a grid of one parameter.
    Sweep {
        #[command(flatten)]
        econ: EconArgs,
        /// Which parameter the grid varies.
        #[arg(long, value_enum)]
        vary: VaryArg,
        /// Grid points: `start:step:end` or a comma-separated list.
        #[arg(long)]
        grid: String,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also render the welfare curves as an SVG chart here.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Run one simulation scenario and print its metrics as JSON.
    Simulate {
        /// Scenario JSON file; omit to run the built-in reference scenario.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Seed override, applied after loading the scenario.
        #[arg(long)]
        seed: Option<u64>,
        /// Name of the built-in scenario run.
        #[arg(long)]
        name: Option<String>,
        /// Flow count for the built-in scenario.
        #[arg(long)]
        flows: Option<u32>,
        /// Ticks between arrivals for the built-in scenario.
        #[arg(long)]
        interarrival: Option<u64>,
        /// Reward mechanism: `contract`, `stackelberg` or `fixed:<rate>`.
        #[arg(long, value_parser = parse_mechanism)]
        mechanism: Option<Mechanism>,
        /// Adversary: `none`, `malicious-flow`, `greedy-verifier`,
        /// `tamper:controller-vi` or `tamper:vi-peer`.
        #[arg(long, value_parser = parse_adversary)]
        adversary: Option<Adversary>,
        /// Verifier behavior: `honest` or `greedy`.
        #[arg(long, value_parser = parse_behavior)]
        behavior: Option<VerifierBehavior>,
        #[command(flatten)]
        econ: EconArgs,
        /// Write one CSV row per flow here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the JSON event log here, one line per event.
        #[arg(long)]
        events: Option<PathBuf>,
        /// Write the full report (metrics, flows, events) as JSON here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Verify one flow request against a policy and topology; exits 1 on a
    /// rejection.
    Verify {
        /// Flow request JSON: `{ "packet": ..., "rules": [...] }`.
        #[arg(long)]
        request: PathBuf,
        /// Conformance policy JSON.
        #[arg(long)]
        policy: PathBuf,
        /// Network topology JSON.
        #[arg(long)]
        topology: PathBuf,
        /// Verification depth to run.
        #[arg(long, value_enum, default_value_t = PlanArg::Complex)]
        plan: PlanArg,
    },
}

enum CliError {
    /// Bad flags, unreadable or unparsable input: exit 2.
    Input(String),
    /// Failures past validation, such as unwritable outputs: exit 3.
    Internal(String),
}

fn input(err: impl std::fmt::Display) -> CliError {
    CliError::Input(err.to_string())
}

fn parse_mechanism(s: &str) -> Result<Mechanism, String> {
    match s {
        "contract" => Ok(Mechanism::Contract),
        "stackelberg" => Ok(Mechanism::Stackelberg),
        _ => s
            .strip_prefix("fixed:")
            .and_then(|rate| rate.parse().ok())
            .map(Mechanism::FixedReward)
            .ok_or_else(|| format!("expected contract, stackelberg or fixed:<rate>, got {s:?}")),
    }
}

fn parse_adversary(s: &str) -> Result<Adversary, String> {
    match s {
        "none" => Ok(Adversary::None),
        "malicious-flow" => Ok(Adversary::MaliciousFlow),
        "greedy-verifier" => Ok(Adversary::GreedyVerifier),
        "tamper:controller-vi" => Ok(Adversary::Tamper {
            hop: TamperHop::ControllerVi,
        }),
        "tamper:vi-peer" => Ok(Adversary::Tamper {
            hop: TamperHop::ViPeer,
        }),
        _ => Err(format!(
            "expected none, malicious-flow, greedy-verifier, tamper:controller-vi or \
             tamper:vi-peer, got {s:?}"
        )),
    }
}

fn parse_behavior(s: &str) -> Result<VerifierBehavior, String> {
    match s {
        "honest" => Ok(VerifierBehavior::Honest),
        "greedy" => Ok(VerifierBehavior::Greedy),
        _ => Err(format!("expected honest or greedy, got {s:?}")),
    }
}

/// Parses `start:step:end` (inclusive) or a comma-separated value list.
fn parse_grid(spec: &str) -> Result<Vec<f64>, String> {
    let number = |token: &str| {
        token
            .trim()
            .parse::<f64>()
            .map_err(|_| format!("bad number {token:?} in grid"))
    };
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("grid range must be start:step:end, got {spec:?}"));
        }
        let (start, step, end) = (number(parts[0])?, number(parts[1])?, number(parts[2])?);
        if !(step > 0.0) || !start.is_finite() || !end.is_finite() {
            return Err("grid needs finite bounds and a positive step".into());
        }
        if end < start {
            return Err("grid end lies below its start".into());
        }
        let mut grid = Vec::new();
        for i in 0..u64::MAX {
            let x = start + i as f64 * step;
            if x > end + step * 1e-9 {
                break;
            }
            grid.push(x.min(end));
        }
        Ok(grid)
    } else {
        spec.split(',').map(number).collect()
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|err| CliError::Input(format!("{}: {err}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|err| CliError::Input(format!("{}: {err}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|err| CliError::Internal(format!("{}: {err}", path.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, CliError> {
    let precision = cli.precision;
    match cli.command {
        Command::Optimal { econ, json } => cmd_optimal(&econ, json, precision),
        Command::Sweep {
            econ,
            vary,
            grid,
            out,
            svg,
        } => cmd_sweep(&econ, vary.into(), &grid, out.as_deref(), svg.as_deref(), precision),
        Command::Simulate {
            scenario,
            seed,
            name,
            flows,
            interarrival,
            mechanism,
            adversary,
            behavior,
            econ,
            out,
            events,
            report,
        } => {
            let scenario = build_scenario(
                scenario.as_deref(),
                seed,
                name,
                flows,
                interarrival,
                mechanism,
                adversary,
                behavior,
                &econ,
            )?;
            cmd_simulate(
                &scenario,
                out.as_deref(),
                events.as_deref(),
                report.as_deref(),
                precision,
            )
        }
        Command::Verify {
            request,
            policy,
            topology,
            plan,
        } => cmd_verify(&request, &policy, &topology, plan.into()),
    }
}

#[derive(Serialize)]
struct OptimalOutput {
    params: EconParams,
    contract: DerivedContract,
    benchmark: StackelbergOutcome,
    /// Contract welfare over benchmark welfare; depends only on `(p, eps)`.
    welfare_ratio: f64,
}

fn cmd_optimal(econ: &EconArgs, json: bool, precision: usize) -> Result<ExitCode, CliError> {
    let params = econ.params();
    let contract = optimal_contract(&params).map_err(input)?;
    let benchmark = stackelberg(&params).map_err(input)?;
    let ratio = welfare_ratio(&params).map_err(input)?;
    if json {
        let out = OptimalOutput {
            params,
            contract,
            benchmark,
            welfare_ratio: ratio,
        };
        let json = serde_json::to_string_pretty(&out).expect("output serializes");
        emit(&format!("{json}\n"));
    } else {
        let sig = |x: f64| fmt_sig(x, precision);
        print_kv(&[
            ("reward rate", sig(contract.reward)),
            ("effort", sig(contract.effort)),
            ("clamped", contract.clamped.to_string()),
            ("participating", contract.participating.to_string()),
            ("verifier utility", sig(contract.verifier_utility)),
            ("vi utility", sig(contract.vi_utility)),
            ("welfare", sig(contract.welfare)),
            ("benchmark reward rate", sig(benchmark.reward)),
            ("benchmark effort", sig(benchmark.effort)),
            ("benchmark welfare", sig(benchmark.welfare)),
            ("welfare ratio", sig(ratio)),
        ]);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(
    econ: &EconArgs,
    vary: VaryParam,
    grid_spec: &str,
    out: Option<&Path>,
    svg: Option<&Path>,
    precision: usize,
) -> Result<ExitCode, CliError> {
    let params = econ.params();
    let grid = parse_grid(grid_spec).map_err(CliError::Input)?;
    if grid.is_empty() {
        return Err(CliError::Input("grid is empty".into()));
    }
    let points = sweep(&params, vary, &grid).map_err(input)?;

    let sig = |x: f64| fmt_sig(x, precision);
    let mut csv = String::from("value,mechanism,r,s,welfare\n");
    for point in &points {
        csv.push_str(&format!(
            "{},contract,{},{},{}\n",
            sig(point.value),
            sig(point.contract.reward),
            sig(point.contract.effort),
            sig(point.contract.welfare),
        ));
        csv.push_str(&format!(
            "{},stackelberg,{},{},{}\n",
            sig(point.value),
            sig(point.stackelberg.reward),
            sig(point.stackelberg.effort),
            sig(point.stackelberg.welfare),
        ));
    }
    match out {
        Some(path) => write_text(path, &csv)?,
        None => emit(&csv),
    }

    if let Some(path) = svg {
        let series = [
            Series {
                name: "contract".into(),
                points: points.iter().map(|p| (p.value, p.contract.welfare)).collect(),
            },
            Series {
                name: "stackelberg".into(),
                points: points
                    .iter()
                    .map(|p| (p.value, p.stackelberg.welfare))
                    .collect(),
            },
        ];
        let title = format!("expected welfare vs {}", vary.name());
        let chart = line_chart(&title, vary.name(), "welfare", &series)
            .expect("a non-empty grid yields a chart");
        write_text(path, &chart)?;
    }
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn build_scenario(
    file: Option<&Path>,
    seed: Option<u64>,
    name: Option<String>,
    flows: Option<u32>,
    interarrival: Option<u64>,
    mechanism: Option<Mechanism>,
    adversary: Option<Adversary>,
    behavior: Option<VerifierBehavior>,
    econ: &EconArgs,
) -> Result<SimScenario, CliError> {
    let mut scenario = match file {
        Some(path) => {
            let builder_flags_set = name.is_some()
                || flows.is_some()
                || interarrival.is_some()
                || mechanism.is_some()
                || adversary.is_some()
                || behavior.is_some()
                || econ.any();
            if builder_flags_set {
                return Err(CliError::Input(
                    "--scenario provides the whole configuration; only --seed may \
                     accompany it"
                        .into(),
                ));
            }
            read_json::<SimScenario>(path)?
        }
        None => {
            let mut scenario =
                SimScenario::reference(name.as_deref().unwrap_or("reference"), 0);
            if let Some(flows) = flows {
                scenario.workload.flows = flows;
            }
            if let Some(interarrival) = interarrival {
                scenario.workload.interarrival = interarrival;
            }
            if let Some(mechanism) = mechanism {
                scenario.mechanism = mechanism;
            }
            if let Some(adversary) = adversary {
                scenario.adversary = adversary;
            }
            if let Some(behavior) = behavior {
                scenario.verifier_behavior = behavior;
            }
            scenario.econ = econ.apply(scenario.econ);
            scenario
        }
    };
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    Ok(scenario)
}

fn cmd_simulate(
    scenario: &SimScenario,
    out: Option<&Path>,
    events: Option<&Path>,
    report_path: Option<&Path>,
    precision: usize,
) -> Result<ExitCode, CliError> {
    let report = simnet::run(scenario).map_err(input)?;
    let metrics = serde_json::to_string_pretty(&report.metrics).expect("metrics serialize");
    emit(&format!("{metrics}\n"));

    if let Some(path) = out {
        let mut csv = String::from("fid,outcome,latency,plan,reward\n");
        for flow in &report.flows {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                flow.fid,
                flow.outcome.label(),
                flow.latency.map(|l| l.to_string()).unwrap_or_default(),
                flow.run_plan.map(|p| p.to_string()).unwrap_or_default(),
                fmt_sig(flow.reward, precision),
            ));
        }
        write_text(path, &csv)?;
    }
    if let Some(path) = events {
        let mut text = report.events.join("\n");
        text.push('\n');
        write_text(path, &text)?;
    }
    if let Some(path) = report_path {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        write_text(path, &json)?;
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(serde::Deserialize)]
struct FlowRequest {
    packet: Packet,
    #[serde(default)]
    rules: Vec<FlowRule>,
}

#[derive(Serialize)]
struct VerifyOutput<'a> {
    plan: VerificationPlan,
    verdict: &'a flowchain::conformance::Verdict,
    read_set: &'a [(String, u64)],
    write_set: &'a [(String, String)],
}

fn cmd_verify(
    request: &Path,
    policy: &Path,
    topology: &Path,
    plan: VerificationPlan,
) -> Result<ExitCode, CliError> {
    let request: FlowRequest = read_json(request)?;
    let policy: ConformancePolicy = read_json(policy)?;
    let topology: NetworkTopology = read_json(topology)?;
    topology.validate().map_err(input)?;

    let result = invoke_chaincode(&policy, &topology, plan, &request.packet, &request.rules);
    let out = VerifyOutput {
        plan,
        verdict: &result.verdict,
        read_set: &result.read_set,
        write_set: &result.write_set,
    };
    let json = serde_json::to_string_pretty(&out).expect("verdict serializes");
    emit(&format!("{json}\n"));
    Ok(if result.verdict.is_conformant() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
