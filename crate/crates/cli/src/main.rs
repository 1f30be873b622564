//! `echelon` — command-line front end for the benchmark engine.
//!
//! Subcommands: `run` (experiments), `solve` (centralized optimum, LP
//! export, certificate evaluation), `eval` (re-derive metrics from a run
//! directory), `mklog` (record a rollout log for memory seeding).
//!
//! Exit codes: 0 success, 2 configuration, 3 protocol, 4 backend, 5 I/O.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use echelon_core::agents::{Backend, RemoteConfig, ScriptedPolicy};
use echelon_core::harness::{self, AgentKind, RunConfig, ScenarioRef};
use echelon_core::optimal::{self, SolveBudget, SolveStatus, SolverConfig};
use echelon_core::policies::{CapRule, SafetyStockParams};
use echelon_core::{Error, ErrorKind};

#[derive(Parser)]
#[command(name = "echelon", version, about = "Serial supply-chain benchmark engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment: N episodes of one agent on one scenario.
    Run(RunArgs),
    /// Compute the centralized optimum (or export/evaluate certificates).
    Solve(SolveArgs),
    /// Re-derive metrics from a persisted run directory and cross-check.
    Eval(EvalArgs),
    /// Roll out a scripted policy and record a memory log.
    Mklog(MklogArgs),
}

#[derive(Args)]
struct ScenarioArg {
    /// Scenario: a registry name (const-uni, inc-uni, dec-uni, inc-div,
    /// dec-div) or a TOML file path.
    #[arg(long)]
    scenario: String,
}

#[derive(Args)]
struct RemoteArgs {
    /// Chat-completion endpoint URL.
    #[arg(long, default_value = "https://api.openai.com/v1/chat/completions")]
    endpoint: String,
    /// Model identifier sent with each request.
    #[arg(long, default_value = "o4-mini")]
    model: String,
    /// Reasoning effort: medium or high.
    #[arg(long, default_value = "medium")]
    effort: String,
    /// Environment variable holding the API credential (never a file).
    #[arg(long, default_value = "OPENAI_API_KEY")]
    api_key_env: String,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 120)]
    timeout: u64,
    /// Total attempts per decision before the scripted fallback.
    #[arg(long, default_value_t = 3)]
    retries: u32,
    /// Linear backoff unit between attempts, in milliseconds.
    #[arg(long, default_value_t = 200)]
    backoff_ms: u64,
}

impl RemoteArgs {
    fn to_config(&self) -> Result<RemoteConfig, Error> {
        Ok(RemoteConfig {
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            effort: self.effort.parse()?,
            timeout_secs: self.timeout,
            max_retries: self.retries,
            backoff_ms: self.backoff_ms,
            api_key_env: self.api_key_env.clone(),
        })
    }
}

#[derive(Args)]
struct PolicyArgs {
    /// Safety factor z for the safety-stock policy.
    #[arg(long, default_value_t = 0.0)]
    z: f64,
    /// Order cap for the safety-stock policy: supplier, own, or unbounded.
    #[arg(long, default_value = "supplier", value_parser = parse_cap_rule)]
    cap_rule: CapRule,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Agent kind: base-stock, tracking-demand, safety-stock,
    /// optimal-replay, invagent-step, invagent-step-ss, aim-rm, aim-rm-log.
    #[arg(long, value_parser = parse_agent)]
    agent: AgentKind,
    /// Episodes to run (deterministic runs short-circuit to one).
    #[arg(long, default_value_t = 5)]
    episodes: usize,
    /// Run the full episode count even when deterministic.
    #[arg(long)]
    force_episodes: bool,
    /// Neighbours retrieved per decision when memory is enabled.
    #[arg(long, default_value_t = 6)]
    k: usize,
    /// Retrieval distance threshold.
    #[arg(long, default_value_t = 2.0)]
    tau: f64,
    /// Rollout log imported into memory before the first episode.
    #[arg(long)]
    memory: Option<PathBuf>,
    /// Decision backend override: remote, scripted:base-stock,
    /// scripted:tracking-demand, scripted:safety-stock, or scripted:zero.
    /// Defaults to the agent kind's own backend.
    #[arg(long)]
    backend: Option<String>,
    #[command(flatten)]
    remote: RemoteArgs,
    #[command(flatten)]
    policy: PolicyArgs,
    /// Maximum episodes in flight (memory-enabled runs stay sequential).
    #[arg(long, default_value_t = 1)]
    width: usize,
    /// Directory for report.json, episode CSVs, transcripts, and series.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed (recorded; reserved for stochastic extensions).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print the full report as JSON instead of the summary lines.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Search budget: `nodes:<count>` or `seconds:<float>`.
    #[arg(long, value_parser = parse_budget)]
    budget: Option<SolveBudget>,
    /// Skip the min-cost-flow root relaxation (pure branch-and-bound).
    #[arg(long)]
    no_relaxation: bool,
    /// Write the exact integer program in LP format and exit.
    #[arg(long)]
    export_ip: Option<PathBuf>,
    /// Evaluate an external solution (one whitespace-separated order row
    /// per stage) as a certificate and exit.
    #[arg(long)]
    import: Option<PathBuf>,
    /// Write the solved order schedule in the certificate format.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Run directory produced by `run --out`.
    #[arg(long)]
    traces: PathBuf,
    /// Print the summary as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct MklogArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Scripted policy to roll out: base-stock, tracking-demand,
    /// safety-stock, zero, or optimal-replay.
    #[arg(long)]
    policy: String,
    #[command(flatten)]
    policy_params: PolicyArgs,
    /// Memory log destination (JSON Lines).
    #[arg(long)]
    out: PathBuf,
}

fn parse_agent(s: &str) -> Result<AgentKind, Error> {
    s.parse()
}

fn parse_cap_rule(s: &str) -> Result<CapRule, String> {
    match s {
        "supplier" => Ok(CapRule::Supplier),
        "own" => Ok(CapRule::Own),
        "unbounded" => Ok(CapRule::Unbounded),
        other => Err(format!("unknown cap rule {other:?} (expected supplier, own, or unbounded)")),
    }
}

fn parse_budget(s: &str) -> Result<SolveBudget, String> {
    let (kind, value) = s
        .split_once(':')
        .ok_or_else(|| format!("expected nodes:<count> or seconds:<float>, got {s:?}"))?;
    match kind {
        "nodes" => value
            .parse()
            .map(SolveBudget::Nodes)
            .map_err(|_| format!("`{value}` is not a node count")),
        "seconds" => value
            .parse()
            .map(SolveBudget::Seconds)
            .map_err(|_| format!("`{value}` is not a duration in seconds")),
        other => Err(format!("unknown budget kind {other:?} (expected nodes or seconds)")),
    }
}

fn parse_policy(name: &str, params: &PolicyArgs) -> Result<Option<ScriptedPolicy>, Error> {
    let policy = match name {
        "base-stock" => ScriptedPolicy::BaseStock,
        "tracking-demand" => ScriptedPolicy::TrackingDemand,
        "safety-stock" => ScriptedPolicy::SafetyStock(SafetyStockParams {
            z: params.z,
            cap_rule: params.cap_rule,
        }),
        "zero" => ScriptedPolicy::Zero,
        _ => return Ok(None),
    };
    Ok(Some(policy))
}

fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Protocol => 3,
        ErrorKind::Backend => 4,
        ErrorKind::Io => 5,
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Mklog(args) => cmd_mklog(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(exit_code(e.kind()));
    }
}

fn cmd_run(args: RunArgs) -> Result<(), Error> {
    let backend = match args.backend.as_deref() {
        None => {
            // LLM-backed agents honor the remote flags even without an
            // explicit --backend.
            if args.agent.memory_enabled()
                || matches!(args.agent, AgentKind::InvAgentStep | AgentKind::InvAgentStepSs)
            {
                Some(Backend::Remote(args.remote.to_config()?))
            } else {
                None
            }
        }
        Some("remote") => Some(Backend::Remote(args.remote.to_config()?)),
        Some(spec) => match spec.strip_prefix("scripted:") {
            Some(name) => match parse_policy(name, &args.policy)? {
                Some(policy) => Some(Backend::Scripted(policy)),
                None => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown scripted policy {name:?}"
                    )))
                }
            },
            None => {
                return Err(Error::InvalidConfig(format!(
                    "unknown backend {spec:?} (expected remote or scripted:<policy>)"
                )))
            }
        },
    };

    let cfg = RunConfig {
        scenario: ScenarioRef::parse(&args.scenario.scenario),
        agent: args.agent,
        episodes: args.episodes,
        force_episodes: args.force_episodes,
        k: args.k,
        tau: args.tau,
        backend,
        memory_log: args.memory,
        out_dir: args.out.clone(),
        seed: args.seed,
        parallel_width: args.width,
        z: args.policy.z,
        cap_rule: args.policy.cap_rule,
    };
    let report = harness::run_experiment(&cfg)?;

    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(render_json_err)?);
        return Ok(());
    }
    println!("scenario          {}", report.scenario);
    println!("agent             {} ({})", report.agent, report.backend);
    let short_circuit_note = if report.short_circuited { " (deterministic short-circuit)" } else { "" };
    println!(
        "episodes          {} of {} requested{}",
        report.episodes_run, report.requested_episodes, short_circuit_note
    );
    println!("per-episode       {:?}", report.per_episode_totals);
    println!("mean reward       {:.2}", report.mean);
    println!("std dev           {:.2}", report.std_dev);
    println!("optimum           {:.2}", report.opt);
    println!("relative gap      {:.2}%", report.delta_percent);
    if let Some(reference) = report.reference_delta_percent {
        println!("reference gap     {reference:.2}%");
    }
    if report.fallback_count > 0 {
        println!("fallbacks         {}", report.fallback_count);
    }
    for issue in &report.open_issues {
        println!("open issue        {issue}");
    }
    if let Some(dir) = &args.out {
        println!("artifacts         {}", dir.display());
    }
    Ok(())
}

fn cmd_solve(args: SolveArgs) -> Result<(), Error> {
    let spec = ScenarioRef::parse(&args.scenario.scenario).load()?;

    if let Some(path) = &args.export_ip {
        optimal::export_ip(&spec, path)?;
        println!("wrote integer program for {} to {}", spec.name, path.display());
        return Ok(());
    }
    if let Some(path) = &args.import {
        let schedule = optimal::import_solution(path)?;
        let objective = optimal::evaluate_schedule(&spec, &schedule)?;
        println!("certificate objective {objective} on {}", spec.name);
        return Ok(());
    }

    let budget = args.budget.unwrap_or(SolveBudget::Unlimited);
    let cfg = SolverConfig { use_root_relaxation: !args.no_relaxation, ..Default::default() };
    let solved = optimal::solve_with(&spec, budget, &cfg)?;
    match solved.status {
        SolveStatus::Optimal => {
            println!("optimum {} on {} ({} nodes)", solved.objective, spec.name, solved.nodes)
        }
        SolveStatus::BoundOnly { upper } => println!(
            "best found {} (upper bound {upper}) on {} — budget exhausted after {} nodes",
            solved.objective, spec.name, solved.nodes
        ),
    }
    if let Some(path) = &args.out {
        let mut text = format!("# optimal orders for {}: one row per stage\n", spec.name);
        for row in solved.schedule.rows() {
            let cells: Vec<String> = row.iter().map(u32::to_string).collect();
            text.push_str(&cells.join(" "));
            text.push('\n');
        }
        std::fs::write(path, text).map_err(|e| Error::io(path.display(), e))?;
        println!("wrote schedule to {}", path.display());
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), Error> {
    let summary = harness::evaluate_run_dir(&args.traces)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&summary).map_err(render_json_err)?);
    } else {
        println!("episodes          {}", summary.episodes);
        println!("mean reward       {:.2}", summary.mean);
        println!("std dev           {:.2}", summary.std_dev);
        println!("relative gap      {:.2}%", summary.delta_percent);
        for issue in &summary.issues {
            println!("MISMATCH          {issue}");
        }
    }
    if summary.issues.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "report disagrees with the persisted episodes ({} issue(s) above)",
            summary.issues.len()
        )))
    }
}

fn cmd_mklog(args: MklogArgs) -> Result<(), Error> {
    let spec = ScenarioRef::parse(&args.scenario.scenario).load()?;
    let policy = match args.policy.as_str() {
        "optimal-replay" => {
            ScriptedPolicy::Replay(optimal::solve(&spec)?.schedule)
        }
        name => parse_policy(name, &args.policy_params)?.ok_or_else(|| {
            Error::InvalidConfig(format!(
                "unknown policy {name:?} (expected base-stock, tracking-demand, safety-stock, \
                 zero, or optimal-replay)"
            ))
        })?,
    };
    let count = harness::record_rollout_log(&spec, policy, &args.out)?;
    println!("wrote {count} records to {}", args.out.display());
    Ok(())
}

fn render_json_err(e: serde_json::Error) -> Error {
    Error::parse("stdout", e)
}
