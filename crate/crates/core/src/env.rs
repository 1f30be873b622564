//! Serial supply-chain environment.
//!
//! Stages are indexed `0..M` with stage `0` the retailer (faces customer
//! demand) and stage `M-1` the top manufacturer (draws from an unlimited raw
//! supplier). Time runs over discrete periods `1..=T`.
//!
//! A period advances in two phases: every stage first submits its order for
//! the period ([`EnvState::submit_order`]), then [`EnvState::advance_period`]
//! commits the dynamics atomically in this order:
//!
//! 1. shipments toward each stage, top stage first:
//!    `R[m][t] = min(B[m+1][t-1] + O[m][t], c[m+1], I[m+1][t-1] + R[m+1][t-L[m+1]])`
//!    for `m < M-1`, and `R[M-1][t] = O[M-1][t]` (raw supplier always ships);
//! 2. sales: `S[m][t] = R[m-1][t]` for `m >= 1`, and the retailer sells
//!    `S[0][t] = min(B[0][t-1] + D[t], c[0], I[0][t-1] + R[0][t-L[0]])`;
//! 3. backlogs: `B[0][t] = B[0][t-1] + D[t] - S[0][t]` and
//!    `B[m][t] = B[m][t-1] + O[m-1][t] - S[m][t]` for `m >= 1`;
//! 4. inventories: `I[m][t] = I[m][t-1] + R[m][t-L[m]] - S[m][t]`;
//! 5. per-stage profit:
//!    `P[m][t] = p[m]*S[m][t] - r[m]*R[m][t] - k[m]*B[m][t] - h[m]*I[m][t]`.
//!
//! A shipment `R[m][tau]` departs the upstream stage in period `tau` and
//! arrives into stage `m`'s on-hand inventory in period `tau + L[m]`; the
//! availability term in step 1 and the retailer sales bound in step 2 both
//! read the arrival `R[.][t-L]`, so goods that arrive in `t` can be shipped
//! or sold in `t`. All quantities with period index `<= 0` are zero
//! (pre-episode history is empty).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// ===== Scenario specification =====

/// Per-stage parameters of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageParams {
    /// Transportation lead time `L[m] >= 1`, in periods.
    pub lead_time: usize,
    /// Maximum units the stage can produce (ship downstream) per period.
    pub capacity: u32,
    /// On-hand inventory at the start of the episode, `I[m][0]`.
    pub init_inventory: u32,
    /// Unit sale price `p[m]` earned on the stage's own sales.
    pub sale_price: f64,
    /// Unit order cost `r[m]` paid on shipments toward this stage.
    pub order_cost: f64,
    /// Unit backlog penalty `k[m]` per period.
    pub backlog_cost: f64,
    /// Unit holding cost `h[m]` per period.
    pub holding_cost: f64,
}

/// Customer demand process at the retailer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DemandModel {
    /// `D[t] = value` for every period.
    Constant { value: u32 },
    /// `D[t] = 2 + ceil(t/3)`: three-period steps 3, 4, 5, 6, ...
    Increasing,
    /// `D[t] = 2 + ceil((12 - (t-1))/3)`: three-period steps 6, 5, 4, 3
    /// (defined around the standard 12-period horizon).
    Decreasing,
    /// Explicit per-period values, `values[t-1]` for period `t`.
    Explicit { values: Vec<u32> },
}

impl DemandModel {
    /// Customer demand in period `t` (1-based). `t` must lie in `1..=horizon`.
    pub fn demand_at(&self, t: usize, horizon: usize) -> Result<u32> {
        if t == 0 || t > horizon {
            return Err(Error::PeriodOutOfRange { period: t, horizon });
        }
        Ok(self.demand_unchecked(t))
    }

    fn demand_unchecked(&self, t: usize) -> u32 {
        match self {
            DemandModel::Constant { value } => *value,
            DemandModel::Increasing => 2 + ceil_div(t as i64, 3) as u32,
            DemandModel::Decreasing => {
                let v = 2 + ceil_div(12 - (t as i64 - 1), 3);
                v.max(0) as u32
            }
            DemandModel::Explicit { values } => values.get(t - 1).copied().unwrap_or(0),
        }
    }

    /// Cumulative demand over periods `from..=to` (saturating at the ends).
    pub fn cumulative(&self, from: usize, to: usize) -> u64 {
        (from.max(1)..=to).map(|t| self.demand_unchecked(t) as u64).sum()
    }
}

/// Ceiling division for positive divisors (numerator may be negative).
fn ceil_div(a: i64, b: i64) -> i64 {
    (a + b - 1).div_euclid(b)
}

/// A complete scenario: stage parameters, horizon, and demand process.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    /// Scenario name (registry key or file stem); informational.
    pub name: String,
    /// Number of periods `T` in an episode.
    pub horizon: usize,
    /// Stage parameters, index 0 = retailer, last = top manufacturer.
    pub stages: Vec<StageParams>,
    /// Customer demand process at the retailer.
    pub demand: DemandModel,
}

impl ScenarioSpec {
    /// Number of stages `M`.
    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    /// Largest lead time across stages (used by the tracking-demand policy).
    pub fn max_lead_time(&self) -> usize {
        self.stages.iter().map(|s| s.lead_time).max().unwrap_or(0)
    }

    /// Validate structural invariants. Called by [`reset`] and the loaders.
    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::InvalidScenario("at least one stage is required".into()));
        }
        for (m, s) in self.stages.iter().enumerate() {
            if s.lead_time == 0 {
                return Err(Error::InvalidScenario(format!("stage {m}: lead time must be >= 1")));
            }
            for (name, v) in [
                ("sale_price", s.sale_price),
                ("order_cost", s.order_cost),
                ("backlog_cost", s.backlog_cost),
                ("holding_cost", s.holding_cost),
            ] {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidScenario(format!(
                        "stage {m}: {name} must be a non-negative finite number"
                    )));
                }
            }
        }
        if let DemandModel::Explicit { values } = &self.demand {
            if values.len() < self.horizon {
                return Err(Error::InvalidScenario(format!(
                    "explicit demand lists {} values but the horizon is {}",
                    values.len(),
                    self.horizon
                )));
            }
        }
        Ok(())
    }
}

// ===== Observations =====

/// What stage `m` sees when deciding its order for period `t`.
///
/// All quantities are end-of-`t-1` values; the two history windows cover the
/// last `L[m]` periods, with zeros for periods before the episode start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Stage index `m`.
    pub stage: usize,
    /// The period `t` this observation feeds (the next one to be decided).
    pub period: usize,
    /// On-hand inventory `I[m][t-1]`.
    pub inventory: u32,
    /// Own backlog `B[m][t-1]` (owed to the downstream stage or customer).
    pub backlog: u32,
    /// Upstream backlog `B[m+1][t-1]` (owed to this stage); 0 at the top.
    pub upstream_backlog: u32,
    /// Lead time `L[m]`.
    pub lead_time: usize,
    /// Own sales `S[m][t-L[m]] ..= S[m][t-1]`, oldest first.
    pub sales_history: Vec<u32>,
    /// Pipeline `R[m][t-L[m]] ..= R[m][t-1]`: deliveries arriving in this
    /// and the next `L[m]-1` periods, nearest arrival first.
    pub deliveries: Vec<u32>,
}

impl Observation {
    /// Flatten to the retrieval feature vector
    /// `[inventory, backlog, upstream_backlog, lead_time, sales..., deliveries...]`
    /// of dimension `4 + 2*L[m]`.
    pub fn state_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(4 + 2 * self.lead_time);
        v.push(self.inventory as f64);
        v.push(self.backlog as f64);
        v.push(self.upstream_backlog as f64);
        v.push(self.lead_time as f64);
        v.extend(self.sales_history.iter().map(|&x| x as f64));
        v.extend(self.deliveries.iter().map(|&x| x as f64));
        v
    }
}

/// Result of committing one period.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// The period that was just committed.
    pub period: usize,
    /// Per-stage profit `P[m][t]` realized in that period.
    pub rewards: Vec<f64>,
    /// Per-stage observations for the next period's decisions.
    pub observations: Vec<Observation>,
    /// True once `t == T`.
    pub done: bool,
}

// ===== Environment state =====

/// Full simulation state plus the complete trace of a running episode.
///
/// All series are indexed `[m][tau]` with `tau` in `0..=T`; index 0 holds the
/// initial state (inventories) and zeros elsewhere. Entries above the current
/// period are zero until written.
#[derive(Debug, Clone)]
pub struct EnvState {
    spec: ScenarioSpec,
    /// Completed periods so far (0 right after reset).
    t: usize,
    demand: Vec<u32>,
    inventory: Vec<Vec<u32>>,
    backlog: Vec<Vec<u32>>,
    sales: Vec<Vec<u32>>,
    shipments: Vec<Vec<u32>>,
    orders: Vec<Vec<u32>>,
    profit: Vec<Vec<f64>>,
    pending: Vec<Option<u32>>,
}

/// Start a fresh episode for `spec`.
pub fn reset(spec: &ScenarioSpec) -> Result<EnvState> {
    spec.validate()?;
    if spec.horizon == 0 {
        return Err(Error::InvalidScenario("horizon must be >= 1 to run an episode".into()));
    }
    let m = spec.num_stages();
    let w = spec.horizon + 1;
    let mut demand = vec![0u32; w];
    for t in 1..=spec.horizon {
        demand[t] = spec.demand.demand_at(t, spec.horizon)?;
    }
    let mut inventory = vec![vec![0u32; w]; m];
    for (s, inv) in spec.stages.iter().zip(inventory.iter_mut()) {
        inv[0] = s.init_inventory;
    }
    Ok(EnvState {
        spec: spec.clone(),
        t: 0,
        demand,
        inventory,
        backlog: vec![vec![0; w]; m],
        sales: vec![vec![0; w]; m],
        shipments: vec![vec![0; w]; m],
        orders: vec![vec![0; w]; m],
        profit: vec![vec![0.0; w]; m],
        pending: vec![None; m],
    })
}

impl EnvState {
    /// The scenario this episode runs under.
    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    /// Completed periods (0 after reset, `T` when done).
    pub fn period(&self) -> usize {
        self.t
    }

    /// True once all `T` periods have been committed.
    pub fn is_done(&self) -> bool {
        self.t == self.spec.horizon
    }

    fn check_stage(&self, stage: usize) -> Result<()> {
        if stage >= self.spec.num_stages() {
            return Err(Error::StageOutOfRange { stage, stages: self.spec.num_stages() });
        }
        Ok(())
    }

    /// Shipment toward stage `m` in period `tau`, with `tau <= 0` reading 0.
    fn shipment_at(&self, m: usize, tau: i64) -> u32 {
        if tau < 1 {
            0
        } else {
            self.shipments[m][tau as usize]
        }
    }

    /// Buffer stage `m`'s order for the upcoming period.
    ///
    /// Each stage must submit exactly once per period; a second submission
    /// before [`advance_period`] is a protocol violation.
    pub fn submit_order(&mut self, stage: usize, units: u32) -> Result<()> {
        self.check_stage(stage)?;
        if self.is_done() {
            return Err(Error::Protocol("episode is complete; no further orders".into()));
        }
        if self.pending[stage].is_some() {
            return Err(Error::Protocol(format!(
                "stage {stage} already submitted an order for period {}",
                self.t + 1
            )));
        }
        self.pending[stage] = Some(units);
        Ok(())
    }

    /// Commit the period once every stage has submitted its order.
    pub fn advance_period(&mut self) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::Protocol("episode is complete".into()));
        }
        if let Some(m) = self.pending.iter().position(Option::is_none) {
            return Err(Error::Protocol(format!(
                "stage {m} has not submitted an order for period {}",
                self.t + 1
            )));
        }
        let big_m = self.spec.num_stages();
        let t = self.t + 1;
        let orders: Vec<u32> = self.pending.iter_mut().map(|p| p.take().unwrap()).collect();

        // Shipments, top stage first: the availability term for stage m reads
        // the upstream stage's end-of-(t-1) inventory plus its arrival in t.
        let mut ship = vec![0u32; big_m];
        for m in (0..big_m).rev() {
            ship[m] = if m == big_m - 1 {
                orders[m]
            } else {
                let up = m + 1;
                let avail = self.inventory[up][t - 1] as u64
                    + self.shipment_at(up, t as i64 - self.spec.stages[up].lead_time as i64)
                        as u64;
                let demand_side = self.backlog[up][t - 1] as u64 + orders[m] as u64;
                demand_side.min(self.spec.stages[up].capacity as u64).min(avail) as u32
            };
        }

        // Sales: each non-retail stage sells exactly what it ships downstream.
        let mut sales = vec![0u32; big_m];
        let retail_avail = self.inventory[0][t - 1] as u64
            + self.shipment_at(0, t as i64 - self.spec.stages[0].lead_time as i64) as u64;
        sales[0] = (self.backlog[0][t - 1] as u64 + self.demand[t] as u64)
            .min(self.spec.stages[0].capacity as u64)
            .min(retail_avail) as u32;
        sales[1..big_m].copy_from_slice(&ship[..big_m - 1]);

        // Backlogs, inventories, profit.
        for m in 0..big_m {
            let owed = if m == 0 {
                self.backlog[0][t - 1] as i64 + self.demand[t] as i64
            } else {
                self.backlog[m][t - 1] as i64 + orders[m - 1] as i64
            };
            let b = owed - sales[m] as i64;
            debug_assert!(b >= 0, "backlog must stay non-negative");
            self.backlog[m][t] = b as u32;

            let arrival = self.shipment_at(m, t as i64 - self.spec.stages[m].lead_time as i64);
            let i = self.inventory[m][t - 1] as i64 + arrival as i64 - sales[m] as i64;
            debug_assert!(i >= 0, "inventory must stay non-negative");
            self.inventory[m][t] = i as u32;

            let p = &self.spec.stages[m];
            self.profit[m][t] = p.sale_price * sales[m] as f64
                - p.order_cost * ship[m] as f64
                - p.backlog_cost * self.backlog[m][t] as f64
                - p.holding_cost * self.inventory[m][t] as f64;
            self.sales[m][t] = sales[m];
            self.shipments[m][t] = ship[m];
            self.orders[m][t] = orders[m];
        }
        self.t = t;

        let observations =
            (0..big_m).map(|m| self.observe(m).expect("stage index in range")).collect();
        Ok(StepOutcome {
            period: t,
            rewards: (0..big_m).map(|m| self.profit[m][t]).collect(),
            observations,
            done: self.is_done(),
        })
    }

    /// Observation for stage `m`'s next decision (period `t+1`).
    pub fn observe(&self, stage: usize) -> Result<Observation> {
        self.check_stage(stage)?;
        let lead = self.spec.stages[stage].lead_time;
        let next = self.t + 1;
        let window = |series: &Vec<u32>| -> Vec<u32> {
            (0..lead)
                .map(|off| {
                    let tau = next as i64 - lead as i64 + off as i64;
                    if tau < 1 {
                        0
                    } else {
                        series[tau as usize]
                    }
                })
                .collect()
        };
        Ok(Observation {
            stage,
            period: next,
            inventory: self.inventory[stage][self.t],
            backlog: self.backlog[stage][self.t],
            upstream_backlog: if stage + 1 < self.spec.num_stages() {
                self.backlog[stage + 1][self.t]
            } else {
                0
            },
            lead_time: lead,
            sales_history: window(&self.sales[stage]),
            deliveries: window(&self.shipments[stage]),
        })
    }

    /// Total system reward over the whole episode. Errors before completion.
    pub fn total_reward(&self) -> Result<f64> {
        if !self.is_done() {
            return Err(Error::Protocol(format!(
                "episode has {} of {} periods committed",
                self.t, self.spec.horizon
            )));
        }
        Ok(self.profit.iter().flatten().sum())
    }

    /// Per-stage total reward over the committed periods.
    pub fn stage_totals(&self) -> Vec<f64> {
        self.profit.iter().map(|row| row.iter().sum()).collect()
    }

    // --- trace accessors (committed periods only) ---

    pub fn demand_in(&self, t: usize) -> u32 {
        self.demand[t]
    }
    pub fn inventory_at(&self, m: usize, t: usize) -> u32 {
        self.inventory[m][t]
    }
    pub fn backlog_at(&self, m: usize, t: usize) -> u32 {
        self.backlog[m][t]
    }
    pub fn sales_at(&self, m: usize, t: usize) -> u32 {
        self.sales[m][t]
    }
    pub fn shipments_at(&self, m: usize, t: usize) -> u32 {
        self.shipments[m][t]
    }
    pub fn orders_at(&self, m: usize, t: usize) -> u32 {
        self.orders[m][t]
    }
    pub fn profit_at(&self, m: usize, t: usize) -> f64 {
        self.profit[m][t]
    }

    /// Rows of the episode trace, period-major then stage, for CSV export.
    pub fn trace_rows(&self) -> Vec<TraceRow> {
        let mut rows = Vec::with_capacity(self.t * self.spec.num_stages());
        for t in 1..=self.t {
            for m in 0..self.spec.num_stages() {
                rows.push(TraceRow {
                    period: t,
                    stage: m,
                    demand: self.demand[t],
                    order: self.orders[m][t],
                    shipment: self.shipments[m][t],
                    sales: self.sales[m][t],
                    backlog: self.backlog[m][t],
                    inventory: self.inventory[m][t],
                    profit: self.profit[m][t],
                })
            }
        }
        rows
    }

    /// Write the trace as CSV with columns `t,m,D,O,R,S,B,I,P`.
    pub fn write_trace_csv<W: std::io::Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "m", "D", "O", "R", "S", "B", "I", "P"])?;
        for r in self.trace_rows() {
            out.write_record([
                r.period.to_string(),
                r.stage.to_string(),
                r.demand.to_string(),
                r.order.to_string(),
                r.shipment.to_string(),
                r.sales.to_string(),
                r.backlog.to_string(),
                r.inventory.to_string(),
                format_currency(r.profit),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// One `(period, stage)` row of an episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub period: usize,
    pub stage: usize,
    pub demand: u32,
    pub order: u32,
    pub shipment: u32,
    pub sales: u32,
    pub backlog: u32,
    pub inventory: u32,
    pub profit: f64,
}

/// Render a currency value without trailing float noise (integers stay bare).
pub(crate) fn format_currency(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}
