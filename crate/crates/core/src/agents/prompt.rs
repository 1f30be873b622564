//! Prompt assembly from editable text templates.
//!
//! The five templates (decision, step description, safety stock, memory
//! usage, system) ship as plain-text assets compiled into the binary; any of
//! them can be swapped at runtime by loading a directory of `.txt` files.
//! Substitution is a single pass over `{identifier}` placeholders — values
//! are never re-scanned, and braces that do not wrap an identifier (such as
//! JSON examples) pass through untouched. An enabled template that references
//! an identifier with no binding is a hard [`Error::Template`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::env::Observation;
use crate::error::{Error, Result};
use crate::memory::SimilarCase;

/// Everything a backend needs to decide one order: the pre-decision
/// observation plus round context that is not part of the stage state.
#[derive(Debug, Clone)]
pub struct DecisionContext<'a> {
    /// Pre-decision observation for this stage (carries period and stage).
    pub observation: &'a Observation,
    /// Number of stages in the chain.
    pub num_stages: usize,
    /// Capacity the order is clamped against in the prompts: the upstream
    /// supplier's capacity, or the stage's own at the top of the chain.
    pub prod_capacity: u32,
    /// Retrieved neighbours; populated only when memory is enabled.
    pub similar_cases: Vec<SimilarCase>,
    /// Whether the memory-usage section is active for this run.
    pub memory_enabled: bool,
    /// Who placed this round's downstream order ("the customer" at stage 0).
    pub downstream_name: String,
    /// The downstream order quantity for this round (customer demand at
    /// stage 0; the order stage `m-1` just placed otherwise).
    pub downstream_order: u32,
    /// Scenario-wide demand description text.
    pub demand_description: &'a str,
}

/// The prompt templates plus inclusion flags for the optional sections.
///
/// Composition order when enabled: decision, then step description, then
/// safety stock, then memory usage.
#[derive(Debug, Clone)]
pub struct PromptBundle {
    pub decision: String,
    pub step_description: String,
    pub safety_stock: String,
    pub memory_usage: String,
    pub system: String,
    pub include_step_description: bool,
    pub include_safety_stock: bool,
    pub include_memory_usage: bool,
}

impl Default for PromptBundle {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptBundle {
    /// The compiled-in templates with every optional section disabled.
    pub fn builtin() -> Self {
        Self {
            decision: include_str!("../../assets/prompts/decision.txt").to_string(),
            step_description: include_str!("../../assets/prompts/step_description.txt")
                .to_string(),
            safety_stock: include_str!("../../assets/prompts/safety_stock.txt").to_string(),
            memory_usage: include_str!("../../assets/prompts/memory_usage.txt").to_string(),
            system: include_str!("../../assets/prompts/system.txt").to_string(),
            include_step_description: false,
            include_safety_stock: false,
            include_memory_usage: false,
        }
    }

    /// Builtin templates with the step-description section enabled.
    pub fn with_step_description() -> Self {
        Self { include_step_description: true, ..Self::builtin() }
    }

    /// Builtin templates with step-description and safety-stock sections.
    pub fn with_safety_stock() -> Self {
        Self { include_step_description: true, include_safety_stock: true, ..Self::builtin() }
    }

    /// Builtin templates with step-description and memory-usage sections
    /// (the retrieval-augmented configuration).
    pub fn with_memory() -> Self {
        Self { include_step_description: true, include_memory_usage: true, ..Self::builtin() }
    }

    /// Load all five templates from `<dir>/{decision,step_description,
    /// safety_stock,memory_usage,system}.txt`, keeping the current flags.
    pub fn from_dir(&self, dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let read = |stem: &str| -> Result<String> {
            let path = dir.join(format!("{stem}.txt"));
            std::fs::read_to_string(&path).map_err(|e| Error::io(path.display(), e))
        };
        Ok(Self {
            decision: read("decision")?,
            step_description: read("step_description")?,
            safety_stock: read("safety_stock")?,
            memory_usage: read("memory_usage")?,
            system: read("system")?,
            ..self.clone()
        })
    }

    /// Render the user prompt for one decision: the decision section plus
    /// whichever optional sections are enabled, joined by blank lines.
    pub fn build_prompt(&self, ctx: &DecisionContext) -> Result<String> {
        let binds = bindings(ctx);
        let mut parts = vec![substitute(&self.decision, &binds)?];
        if self.include_step_description {
            parts.push(substitute(&self.step_description, &binds)?);
        }
        if self.include_safety_stock {
            parts.push(substitute(&self.safety_stock, &binds)?);
        }
        if self.include_memory_usage {
            parts.push(substitute(&self.memory_usage, &binds)?);
        }
        Ok(parts.join("\n\n"))
    }

    /// Render the system prompt for one decision.
    pub fn system_prompt(&self, ctx: &DecisionContext) -> Result<String> {
        substitute(&self.system, &bindings(ctx))
    }
}

/// The placeholder bindings derived from a decision context.
fn bindings(ctx: &DecisionContext) -> BTreeMap<&'static str, String> {
    let obs = ctx.observation;
    let mut b = BTreeMap::new();
    b.insert("period", obs.period.to_string());
    b.insert("stage", obs.stage.to_string());
    b.insert("num_stages", ctx.num_stages.to_string());
    b.insert("lead_time", obs.lead_time.to_string());
    b.insert("inventory", obs.inventory.to_string());
    b.insert("backlog", obs.backlog.to_string());
    b.insert("upstream_backlog", obs.upstream_backlog.to_string());
    b.insert("sales", render_units(&obs.sales_history));
    b.insert("deliveries", render_units(&obs.deliveries));
    b.insert("demand_description", ctx.demand_description.to_string());
    b.insert("similar_cases", render_similar_cases(&ctx.similar_cases));
    b.insert("prod_capacity", ctx.prod_capacity.to_string());
    b.insert("downstream_name", ctx.downstream_name.clone());
    b.insert("downstream_order", ctx.downstream_order.to_string());
    b
}

/// Render `[4, 4]`-style unit lists.
fn render_units(units: &[u32]) -> String {
    let inner: Vec<String> = units.iter().map(|u| u.to_string()).collect();
    format!("[{}]", inner.join(", "))
}

/// Render retrieved cases as an explicit list of
/// `{state_vec, action, reward, distance}` entries, `(none)` when empty.
fn render_similar_cases(cases: &[SimilarCase]) -> String {
    if cases.is_empty() {
        return "(none)".to_string();
    }
    let mut out = String::new();
    for case in cases {
        let state: Vec<String> = case.state_vec.iter().map(|v| render_num(*v)).collect();
        let _ = writeln!(
            out,
            "- {{\"state_vec\": [{}], \"action\": {}, \"reward\": {}, \"distance\": {}}}",
            state.join(", "),
            case.action,
            render_num(case.reward),
            render_num(case.distance),
        );
    }
    out.trim_end().to_string()
}

/// Numbers without float noise: integers stay bare.
fn render_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Single-pass `{identifier}` substitution. Unbound identifiers error;
/// non-identifier braces (for example JSON examples) pass through.
fn substitute(template: &str, binds: &BTreeMap<&'static str, String>) -> Result<String> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open + 1..];
        match tail.find('}') {
            Some(close) if is_identifier(&tail[..close]) => {
                let name = &tail[..close];
                match binds.get(name) {
                    Some(value) => out.push_str(value),
                    None => {
                        return Err(Error::Template(format!("unbound placeholder {{{name}}}")))
                    }
                }
                rest = &tail[close + 1..];
            }
            _ => {
                out.push('{');
                rest = tail;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Human-readable description of the deterministic demand process,
/// segment-by-segment (three-round steps for the ramp profiles, a single
/// segment for constant demand).
pub fn render_demand_description(
    demand: &crate::env::DemandModel,
    horizon: usize,
) -> Result<String> {
    use crate::env::DemandModel;
    let lead_in = match demand {
        DemandModel::Constant { value } => format!(
            "Customer demand at the retailer (stage 0) is fixed at {value} unit(s) in every \
             round t = 1,...,{horizon}."
        ),
        DemandModel::Increasing => format!(
            "Customer demand at the retailer (stage 0) is (2 + ceil(t / 3)) unit(s) in each \
             round t = 1,...,{horizon}. Hence, demand progresses in three-round steps: {}.",
            render_segments(demand, horizon)?
        ),
        DemandModel::Decreasing => format!(
            "Customer demand at the retailer (stage 0) is (2 + ceil((12 - (t - 1)) / 3)) \
             unit(s) in each round t = 1,...,{horizon}. Accordingly, demand declines in \
             three-round steps: {}.",
            render_segments(demand, horizon)?
        ),
        DemandModel::Explicit { .. } => format!(
            "Customer demand at the retailer (stage 0) over rounds t = 1,...,{horizon} is: {}.",
            render_segments(demand, horizon)?
        ),
    };
    Ok(format!("{lead_in} The demand is deterministic and will certainly appear."))
}

/// Run-length encode the demand series: "3 units in rounds 1-3, 4 units in
/// rounds 4-6, ...".
fn render_segments(demand: &crate::env::DemandModel, horizon: usize) -> Result<String> {
    let mut segments: Vec<(u32, usize, usize)> = Vec::new();
    for t in 1..=horizon {
        let d = demand.demand_at(t, horizon)?;
        match segments.last_mut() {
            Some((value, _, end)) if *value == d && *end == t - 1 => *end = t,
            _ => segments.push((d, t, t)),
        }
    }
    let rendered: Vec<String> = segments
        .iter()
        .map(|(value, from, to)| {
            if from == to {
                format!("{value} units in round {from}")
            } else {
                format!("{value} units in rounds {from}-{to}")
            }
        })
        .collect();
    Ok(rendered.join(", "))
}
