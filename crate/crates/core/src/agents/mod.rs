//! The per-stage decision loop: observe, retrieve, prompt, decide, order.
//!
//! One round (period) walks the stages bottom-up — retailer first — so each
//! stage knows the order its downstream neighbour just placed. Decisions
//! come from a [`Backend`]: either a scripted policy evaluated in-process
//! or a remote chat-completion endpoint. With memory enabled, every stage
//! retrieves its nearest stored cases before deciding and stores one
//! `(state, action, reward)` record after the period commits.

pub mod prompt;
pub mod remote;

pub use prompt::{render_demand_description, DecisionContext, PromptBundle};
pub use remote::{Effort, RemoteClient, RemoteConfig, RemoteReply};

use serde::{Deserialize, Serialize};

use crate::env::{self, EnvState, Observation, ScenarioSpec, StepOutcome, TraceRow};
use crate::error::{Error, Result};
use crate::memory::{MemoryRecord, MemoryStore, RecordSource, SimilarCase};
use crate::optimal::OrderSchedule;
use crate::policies::{self, ForecastModel, SafetyStockParams};

/// A policy evaluated in-process, with no language model involved.
#[derive(Debug, Clone)]
pub enum ScriptedPolicy {
    /// Order up to the stage's production capacity.
    BaseStock,
    /// Track average sales over the longest lead time.
    TrackingDemand,
    /// Lead-time-safe order-up-to on the inventory position.
    SafetyStock(SafetyStockParams),
    /// Never order (the do-nothing reference).
    Zero,
    /// Replay a precomputed order schedule (for example the optimum).
    Replay(OrderSchedule),
}

impl ScriptedPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            ScriptedPolicy::BaseStock => "base-stock",
            ScriptedPolicy::TrackingDemand => "tracking-demand",
            ScriptedPolicy::SafetyStock(_) => "safety-stock",
            ScriptedPolicy::Zero => "zero",
            ScriptedPolicy::Replay(_) => "replay",
        }
    }

    /// Evaluate the policy on one observation.
    pub fn order(
        &self,
        obs: &Observation,
        spec: &ScenarioSpec,
        forecast: &ForecastModel,
    ) -> u32 {
        let params = &spec.stages[obs.stage];
        match self {
            ScriptedPolicy::BaseStock => policies::base_stock_order(obs, params),
            ScriptedPolicy::TrackingDemand => {
                policies::tracking_demand_order(obs, params, spec.max_lead_time())
            }
            ScriptedPolicy::SafetyStock(ss) => policies::safety_stock_order(
                obs,
                params,
                supplier_capacity(spec, obs.stage),
                forecast,
                ss,
            ),
            ScriptedPolicy::Zero => 0,
            ScriptedPolicy::Replay(schedule) => {
                if obs.stage < schedule.num_stages() && obs.period <= schedule.horizon() {
                    schedule.get(obs.stage, obs.period)
                } else {
                    0
                }
            }
        }
    }
}

/// The upstream stage's capacity, `None` at the top of the chain.
fn supplier_capacity(spec: &ScenarioSpec, stage: usize) -> Option<u32> {
    spec.stages.get(stage + 1).map(|s| s.capacity)
}

/// Where decisions come from.
#[derive(Debug, Clone)]
pub enum Backend {
    Scripted(ScriptedPolicy),
    Remote(RemoteConfig),
}

impl Backend {
    pub fn name(&self) -> String {
        match self {
            Backend::Scripted(p) => format!("scripted:{}", p.name()),
            Backend::Remote(cfg) => format!("remote:{}", cfg.model),
        }
    }
}

/// Nearest-neighbour retrieval settings (defaults K = 6, tau = 2.0).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RetrievalConfig {
    /// Whether memory is consulted and updated at all.
    pub enabled: bool,
    /// Neighbours requested per decision.
    pub k: usize,
    /// Strict distance threshold.
    pub tau: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { enabled: false, k: 6, tau: 2.0 }
    }
}

impl RetrievalConfig {
    pub fn enabled() -> Self {
        Self { enabled: true, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau < 0.0 || !self.tau.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "retrieval threshold tau must be a finite non-negative number, got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// One resolved decision.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Decision {
    pub order: u32,
    pub reason: String,
    /// True when the scripted fallback replaced a failed remote decision.
    pub fallback: bool,
}

/// Audit record of one decision: the exact prompts, the raw reply (remote
/// backends only), and the outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Transcript {
    pub period: usize,
    pub stage: usize,
    pub system: String,
    pub user: String,
    pub raw_reply: String,
    pub order: u32,
    pub reason: String,
    pub fallback: bool,
    pub attempts: u32,
}

/// Instrumentation record: exactly which cases a decision received.
#[derive(Debug, Clone, Serialize)]
pub struct RetrievalEvent {
    pub period: usize,
    pub stage: usize,
    /// The query vector `phi(s)` the store was searched with.
    pub query: Vec<f64>,
    pub cases: Vec<SimilarCase>,
}

/// Everything needed to run episodes of one configuration.
#[derive(Debug, Clone)]
pub struct EpisodeConfig<'a> {
    pub spec: &'a ScenarioSpec,
    pub backend: &'a Backend,
    pub bundle: &'a PromptBundle,
    pub retrieval: RetrievalConfig,
    /// Episode number recorded into memory (1-based within a run).
    pub episode: u64,
}

/// The full outcome of one episode.
#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub total_reward: f64,
    pub stage_totals: Vec<f64>,
    /// Orders submitted, indexed `[t-1][m]`.
    pub actions: Vec<Vec<u32>>,
    pub trace: Vec<TraceRow>,
    pub fallback_count: usize,
    pub transcripts: Vec<Transcript>,
    pub retrieval_events: Vec<RetrievalEvent>,
    /// Final environment state, for series extraction.
    pub env: EnvState,
}

/// Outcome of a single committed round.
#[derive(Debug, Clone)]
pub struct RoundOutcome {
    /// Orders by stage, `actions[m] = O[m][t]`.
    pub actions: Vec<u32>,
    pub step: StepOutcome,
    pub transcripts: Vec<Transcript>,
    pub retrieval_events: Vec<RetrievalEvent>,
    pub fallbacks: usize,
}

/// Run one round: every stage observes, optionally retrieves, gets a
/// prompt-driven decision, and submits its order; the period then commits
/// and (with memory enabled) one record per stage is stored.
pub fn run_round(
    env: &mut EnvState,
    stores: Option<&mut [MemoryStore]>,
    cfg: &EpisodeConfig,
    client: Option<&RemoteClient>,
    demand_description: &str,
    forecast: &ForecastModel,
) -> Result<RoundOutcome> {
    let spec = cfg.spec;
    let stages = spec.num_stages();
    let t = env.period() + 1;
    let mut actions = Vec::with_capacity(stages);
    let mut observations = Vec::with_capacity(stages);
    let mut transcripts = Vec::with_capacity(stages);
    let mut retrieval_events = Vec::new();
    let mut fallbacks = 0;

    for m in 0..stages {
        let obs = env.observe(m)?;
        let cases = match (&stores, cfg.retrieval.enabled) {
            (Some(stores), true) => {
                let query = obs.state_vec();
                let cases = stores[m].retrieve(&query, cfg.retrieval.k, cfg.retrieval.tau)?;
                retrieval_events.push(RetrievalEvent {
                    period: t,
                    stage: m,
                    query,
                    cases: cases.clone(),
                });
                cases
            }
            _ => Vec::new(),
        };
        let (downstream_name, downstream_order) = if m == 0 {
            ("the customer".to_string(), spec.demand.demand_at(t, spec.horizon)?)
        } else {
            (format!("the stage {}", m - 1), actions[m - 1])
        };
        let ctx = DecisionContext {
            observation: &obs,
            num_stages: stages,
            prod_capacity: supplier_capacity(spec, m).unwrap_or(spec.stages[m].capacity),
            similar_cases: cases,
            memory_enabled: cfg.retrieval.enabled,
            downstream_name,
            downstream_order,
            demand_description,
        };
        let user = cfg.bundle.build_prompt(&ctx)?;
        let system = cfg.bundle.system_prompt(&ctx)?;
        let (decision, raw_reply, attempts) =
            decide(cfg.backend, client, &system, &user, &obs, spec, forecast)?;
        if decision.fallback {
            fallbacks += 1;
        }
        env.submit_order(m, decision.order)?;
        transcripts.push(Transcript {
            period: t,
            stage: m,
            system,
            user,
            raw_reply,
            order: decision.order,
            reason: decision.reason,
            fallback: decision.fallback,
            attempts,
        });
        actions.push(decision.order);
        observations.push(obs);
    }

    let step = env.advance_period()?;
    if let (Some(stores), true) = (stores, cfg.retrieval.enabled) {
        for m in 0..stages {
            stores[m].insert(MemoryRecord {
                state_vec: observations[m].state_vec(),
                action: actions[m],
                reward: step.rewards[m],
                episode: cfg.episode,
                period: step.period,
                source: RecordSource::Live,
            })?;
        }
    }
    Ok(RoundOutcome { actions, step, transcripts, retrieval_events, fallbacks })
}

/// Resolve one decision through the configured backend. Returns the
/// decision plus the raw reply text and attempt count for the transcript.
fn decide(
    backend: &Backend,
    client: Option<&RemoteClient>,
    system: &str,
    user: &str,
    obs: &Observation,
    spec: &ScenarioSpec,
    forecast: &ForecastModel,
) -> Result<(Decision, String, u32)> {
    match backend {
        Backend::Scripted(policy) => {
            let order = policy.order(obs, spec, forecast);
            let decision =
                Decision { order, reason: policy.name().to_string(), fallback: false };
            Ok((decision, String::new(), 0))
        }
        Backend::Remote(cfg) => {
            let client = client.ok_or_else(|| {
                Error::Protocol("remote backend invoked without a client".to_string())
            })?;
            match client.decide(cfg, system, user) {
                Ok(reply) => {
                    let decision =
                        Decision { order: reply.order, reason: reply.reason, fallback: false };
                    Ok((decision, reply.raw, reply.attempts))
                }
                Err(err) => {
                    // Persistent failure: scripted safety-stock fallback
                    // (z = 0) keeps the episode alive, flagged for audit.
                    let fallback = ScriptedPolicy::SafetyStock(SafetyStockParams::default());
                    let order = fallback.order(obs, spec, forecast);
                    let decision = Decision {
                        order,
                        reason: format!("fallback safety-stock after backend failure: {err}"),
                        fallback: true,
                    };
                    Ok((decision, String::new(), cfg.max_retries))
                }
            }
        }
    }
}

/// Run a full episode: reset, one round per period, aggregate the results.
pub fn run_episode(
    cfg: &EpisodeConfig,
    mut stores: Option<&mut [MemoryStore]>,
) -> Result<EpisodeResult> {
    cfg.retrieval.validate()?;
    if cfg.retrieval.enabled && stores.is_none() {
        return Err(Error::InvalidConfig(
            "memory retrieval enabled but no stores supplied".to_string(),
        ));
    }
    let client = match cfg.backend {
        Backend::Remote(remote_cfg) => Some(RemoteClient::new(remote_cfg)?),
        Backend::Scripted(_) => None,
    };
    let demand_description = render_demand_description(&cfg.spec.demand, cfg.spec.horizon)?;
    let forecast = ForecastModel::new(cfg.spec.demand.clone(), cfg.spec.horizon);

    let mut env = env::reset(cfg.spec)?;
    let mut actions = Vec::with_capacity(cfg.spec.horizon);
    let mut transcripts = Vec::new();
    let mut retrieval_events = Vec::new();
    let mut fallback_count = 0;
    for _ in 1..=cfg.spec.horizon {
        let round = run_round(
            &mut env,
            stores.as_deref_mut(),
            cfg,
            client.as_ref(),
            &demand_description,
            &forecast,
        )?;
        actions.push(round.actions);
        transcripts.extend(round.transcripts);
        retrieval_events.extend(round.retrieval_events);
        fallback_count += round.fallbacks;
    }
    Ok(EpisodeResult {
        total_reward: env.total_reward()?,
        stage_totals: env.stage_totals(),
        actions,
        trace: env.trace_rows(),
        fallback_count,
        transcripts,
        retrieval_events,
        env,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::tests::uniform_spec;

    fn scripted_episode(policy: ScriptedPolicy, spec: &ScenarioSpec) -> EpisodeResult {
        let backend = Backend::Scripted(policy);
        let bundle = PromptBundle::with_step_description();
        let cfg = EpisodeConfig {
            spec,
            backend: &backend,
            bundle: &bundle,
            retrieval: RetrievalConfig::default(),
            episode: 1,
        };
        run_episode(&cfg, None).unwrap()
    }

    #[test]
    fn scripted_backend_matches_direct_rollout() {
        let spec = uniform_spec();
        let result = scripted_episode(ScriptedPolicy::BaseStock, &spec);

        let forecast = ForecastModel::new(spec.demand.clone(), spec.horizon);
        let mut env = env::reset(&spec).unwrap();
        for _ in 1..=spec.horizon {
            for m in 0..spec.num_stages() {
                let obs = env.observe(m).unwrap();
                let order = ScriptedPolicy::BaseStock.order(&obs, &spec, &forecast);
                env.submit_order(m, order).unwrap();
            }
            env.advance_period().unwrap();
        }
        assert_eq!(result.total_reward, env.total_reward().unwrap());
        assert_eq!(result.trace, env.trace_rows());
    }

    #[test]
    fn safety_stock_reaches_the_const_uni_optimum() {
        let spec = uniform_spec();
        let result =
            scripted_episode(ScriptedPolicy::SafetyStock(SafetyStockParams::default()), &spec);
        assert_eq!(result.total_reward, -120.0);
        // Retailer inventory and backlog settle at zero and stay there.
        for t in 3..=spec.horizon {
            let row = &result.trace[(t - 1) * spec.num_stages()];
            assert_eq!((row.stage, row.period), (0, t));
            assert_eq!(row.inventory, 0, "period {t}");
            assert_eq!(row.backlog, 0, "period {t}");
        }
    }

    #[test]
    fn episodes_are_deterministic() {
        let spec = uniform_spec();
        let a = scripted_episode(ScriptedPolicy::TrackingDemand, &spec);
        let b = scripted_episode(ScriptedPolicy::TrackingDemand, &spec);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.total_reward, b.total_reward);
    }

    #[test]
    fn one_period_episode_makes_one_decision_per_stage() {
        let mut spec = uniform_spec();
        spec.horizon = 1;
        let result = scripted_episode(ScriptedPolicy::Zero, &spec);
        assert_eq!(result.transcripts.len(), spec.num_stages());
        assert_eq!(result.actions, vec![vec![0; spec.num_stages()]]);
    }

    #[test]
    fn memory_stores_grow_by_horizon_records_per_episode() {
        let spec = uniform_spec();
        let backend = Backend::Scripted(ScriptedPolicy::SafetyStock(Default::default()));
        let bundle = PromptBundle::with_memory();
        let mut stores: Vec<MemoryStore> = (0..spec.num_stages())
            .map(|m| MemoryStore::new(m, 4 + 2 * spec.stages[m].lead_time))
            .collect();
        for episode in 1..=2u64 {
            let cfg = EpisodeConfig {
                spec: &spec,
                backend: &backend,
                bundle: &bundle,
                retrieval: RetrievalConfig::enabled(),
                episode,
            };
            let result = run_episode(&cfg, Some(&mut stores)).unwrap();
            assert_eq!(result.retrieval_events.len(), spec.horizon * spec.num_stages());
            for store in &stores {
                assert_eq!(store.len(), spec.horizon * episode as usize);
            }
        }
    }

    #[test]
    fn retrieval_requires_stores() {
        let spec = uniform_spec();
        let backend = Backend::Scripted(ScriptedPolicy::Zero);
        let bundle = PromptBundle::with_memory();
        let cfg = EpisodeConfig {
            spec: &spec,
            backend: &backend,
            bundle: &bundle,
            retrieval: RetrievalConfig::enabled(),
            episode: 1,
        };
        assert!(matches!(run_episode(&cfg, None), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn delivered_cases_match_a_fresh_retrieve() {
        let spec = uniform_spec();
        let backend = Backend::Scripted(ScriptedPolicy::SafetyStock(Default::default()));
        let bundle = PromptBundle::with_memory();
        let mut stores: Vec<MemoryStore> = (0..spec.num_stages())
            .map(|m| MemoryStore::new(m, 4 + 2 * spec.stages[m].lead_time))
            .collect();

        // Episode 1 fills the stores; episode 2's deliveries must equal an
        // independent retrieve against a replica built from episode 1.
        let cfg = EpisodeConfig {
            spec: &spec,
            backend: &backend,
            bundle: &bundle,
            retrieval: RetrievalConfig::enabled(),
            episode: 1,
        };
        run_episode(&cfg, Some(&mut stores)).unwrap();
        let replica = stores.clone();
        let cfg = EpisodeConfig { episode: 2, ..cfg };
        let result = run_episode(&cfg, Some(&mut stores)).unwrap();

        // Rebuild the store contents round by round to mirror the live run.
        let mut shadow = replica;
        let per_round = spec.num_stages();
        for (i, event) in result.retrieval_events.iter().enumerate() {
            let expected = shadow[event.stage]
                .retrieve(&event.query, cfg.retrieval.k, cfg.retrieval.tau)
                .unwrap();
            assert_eq!(event.cases, expected, "event {i}");
            if event.stage == per_round - 1 {
                let t = event.period;
                for m in 0..per_round {
                    let row = &result.trace[(t - 1) * per_round + m];
                    shadow[m]
                        .insert(MemoryRecord {
                            state_vec: result.retrieval_events[(t - 1) * per_round + m]
                                .query
                                .clone(),
                            action: row.order,
                            reward: row.profit,
                            episode: 2,
                            period: t,
                            source: RecordSource::Live,
                        })
                        .unwrap();
                }
            }
        }
    }

    #[test]
    fn downstream_order_flows_into_the_next_prompt() {
        let spec = uniform_spec();
        let result = scripted_episode(ScriptedPolicy::BaseStock, &spec);
        // Stage 1's first-round prompt reports stage 0's first-round order.
        let stage0_order = result.actions[0][0];
        let stage1 = &result.transcripts[1];
        assert_eq!((stage1.period, stage1.stage), (1, 1));
        assert!(stage1
            .user
            .contains(&format!("from the stage 0 for this round is {stage0_order} unit(s)")));
        // The retailer's prompt reports customer demand instead.
        assert!(result.transcripts[0].user.contains("from the customer for this round is 4"));
    }
}
