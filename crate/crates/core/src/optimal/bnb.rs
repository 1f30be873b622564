//! Depth-first branch-and-bound over complete order schedules.
//!
//! Periods are assigned chronologically; within a period stages choose in
//! top-down order, and candidate orders are tried descending from a
//! dominance ceiling. Partial schedules are scored by simulating the real
//! environment, so the search shares one dynamics implementation with every
//! other consumer. The optimistic bound is admissible: committed reward,
//! plus capped future revenue, minus backlog and holding costs that no
//! completion can avoid. It is cheap but loose, so the search closes small
//! instances and produces sound `BoundOnly` pairs under a budget; at
//! benchmark scale the flow relaxation is what proves optimality.

use std::time::Instant;

use super::{OrderSchedule, SolveBudget, SolveResult, SolveStatus, SolverConfig};
use crate::env::{self, EnvState, ScenarioSpec};
use crate::error::Result;

const LARGE: u64 = u64::MAX / 4;

pub(super) fn search(
    spec: &ScenarioSpec,
    budget: SolveBudget,
    cfg: &SolverConfig,
    seed: Option<(f64, OrderSchedule)>,
) -> Result<SolveResult> {
    let (node_cap, time_cap) = match budget {
        SolveBudget::Unlimited => (u64::MAX, None),
        SolveBudget::Nodes(n) => (n, None),
        SolveBudget::Seconds(s) => (u64::MAX, Some(s)),
    };
    let mut cum_demand = vec![0u64; spec.horizon + 1];
    for t in 1..=spec.horizon {
        cum_demand[t] = cum_demand[t - 1] + u64::from(spec.demand.demand_at(t, spec.horizon)?);
    }
    // Over-ordering dominance needs two structural margins: no shipment hop
    // may be profitable on its own (otherwise units can be churned for cash
    // and the top ceiling widens by shipping capacity), and holding costs
    // must not fall downstream (otherwise excess stock could be parked more
    // cheaply below, and only the hard capacity ceiling applies).
    let stages = spec.num_stages();
    let churn = (1..stages)
        .any(|m| spec.stages[m].sale_price > spec.stages[m - 1].order_cost);
    let pull_tight = (0..stages - 1).all(|m| {
        spec.stages[m].holding_cost >= spec.stages[m + 1].holding_cost
    });

    let (seed_value, seed_schedule) = match seed {
        Some(s) => s,
        None => {
            let zeros = OrderSchedule::zeros(stages, spec.horizon);
            (super::evaluate_schedule(spec, &zeros)?, zeros)
        }
    };

    let mut ctx = Ctx {
        spec,
        cfg,
        started: Instant::now(),
        node_cap,
        time_cap,
        nodes: 0,
        best_value: seed_value,
        best: seed_schedule,
        open_upper: f64::NEG_INFINITY,
        exhausted: false,
        cum_demand,
        churn,
        pull_tight,
    };

    let env = env::reset(spec)?;
    let mut partial = OrderSchedule::zeros(stages, spec.horizon);
    ctx.dfs_period(&env, &mut partial)?;

    let status = if ctx.exhausted {
        SolveStatus::BoundOnly { upper: ctx.best_value.max(ctx.open_upper) }
    } else {
        SolveStatus::Optimal
    };
    Ok(SolveResult { objective: ctx.best_value, schedule: ctx.best, nodes: ctx.nodes, status })
}

struct Ctx<'a> {
    spec: &'a ScenarioSpec,
    cfg: &'a SolverConfig,
    started: Instant,
    node_cap: u64,
    time_cap: Option<f64>,
    nodes: u64,
    best_value: f64,
    best: OrderSchedule,
    /// Max optimistic bound over subtrees abandoned to the budget.
    open_upper: f64,
    exhausted: bool,
    /// `cum_demand[t]` = total demand over periods `1..=t`.
    cum_demand: Vec<u64>,
    churn: bool,
    pull_tight: bool,
}

impl Ctx<'_> {
    fn budget_spent(&self) -> bool {
        self.nodes >= self.node_cap
            || self.time_cap.is_some_and(|s| self.started.elapsed().as_secs_f64() >= s)
    }

    /// Record the bound of a subtree we abandon unexplored.
    fn abandon(&mut self, env: &EnvState) {
        self.exhausted = true;
        let b = self.bound(env);
        if b > self.open_upper {
            self.open_upper = b;
        }
    }

    /// Demand still to arrive in periods `t..=T`.
    fn remaining_demand(&self, t: usize) -> u64 {
        self.cum_demand[self.spec.horizon] - self.cum_demand[t - 1]
    }

    /// Branching ceiling for stage `m` ordering in period `t`.
    fn ceiling(&self, env: &EnvState, t: usize, m: usize) -> u32 {
        if let Some(c) = self.cfg.ceiling_override {
            return c;
        }
        let stages = self.spec.num_stages();
        let backlog_sum: u64 =
            (0..stages).map(|j| u64::from(env.backlog_at(j, t - 1))).sum();
        let mut demand_side = self.remaining_demand(t) + backlog_sum;
        let cap = if m + 1 < stages {
            let c_up = u64::from(self.spec.stages[m + 1].capacity);
            if self.pull_tight { demand_side.min(c_up) } else { c_up }
        } else {
            if self.churn {
                let c_top = u64::from(self.spec.stages[m].capacity);
                demand_side += c_top * (self.spec.horizon - t + 1) as u64;
            }
            demand_side
        };
        cap.min(u64::from(u32::MAX)) as u32
    }

    /// Admissible upper bound on the total reward of any completion of `env`.
    fn bound(&self, env: &EnvState) -> f64 {
        let committed: f64 = env.stage_totals().iter().sum();
        if env.is_done() {
            return committed;
        }
        let t0 = env.period();
        let rest = (self.spec.horizon - t0) as u64;
        let retail = &self.spec.stages[0];
        let sellable = (u64::from(env.backlog_at(0, t0)) + self.remaining_demand(t0 + 1))
            .min(u64::from(retail.capacity) * rest);
        let mut optimistic = retail.sale_price * sellable as f64;
        for stage in &self.spec.stages[1..] {
            optimistic += stage.sale_price * (u64::from(stage.capacity) * rest) as f64;
        }
        committed + optimistic - self.retail_backlog_lb(env) - self.holding_lb(env)
    }

    /// Backlog cost the retailer cannot avoid: owed demand minus the best
    /// possible cumulative sales under capacity and supply-pipeline limits.
    fn retail_backlog_lb(&self, env: &EnvState) -> f64 {
        let retail = &self.spec.stages[0];
        if retail.backlog_cost == 0.0 {
            return 0.0;
        }
        let t0 = env.period();
        let lead = retail.lead_time as i64;
        let up_cap = if self.spec.num_stages() > 1 {
            u64::from(self.spec.stages[1].capacity)
        } else {
            LARGE
        };
        let mut lb = 0.0;
        let mut cum_supply = u64::from(env.inventory_at(0, t0));
        let mut cum_sales_cap = 0u64;
        let mut owed = u64::from(env.backlog_at(0, t0));
        for tau in t0 + 1..=self.spec.horizon {
            let dep = tau as i64 - lead;
            let arrival = if dep < 1 {
                0
            } else if dep as usize <= t0 {
                u64::from(env.shipments_at(0, dep as usize))
            } else {
                up_cap
            };
            cum_supply = cum_supply.saturating_add(arrival);
            cum_sales_cap = (cum_sales_cap + u64::from(retail.capacity)).min(cum_supply);
            owed += u64::from(env.demand_in(tau));
            lb += retail.backlog_cost * owed.saturating_sub(cum_sales_cap) as f64;
        }
        lb
    }

    /// Holding cost no completion avoids: stock already on hand or committed
    /// to arrive drains at most one capacity's worth per period.
    fn holding_lb(&self, env: &EnvState) -> f64 {
        let t0 = env.period();
        let mut lb = 0.0;
        for (m, stage) in self.spec.stages.iter().enumerate() {
            if stage.holding_cost == 0.0 {
                continue;
            }
            let lead = stage.lead_time as i64;
            let on_hand = u64::from(env.inventory_at(m, t0));
            let mut cum_in = 0u64;
            let mut cum_drain = 0u64;
            // The retailer's outflow is also demand-limited.
            let mut retail_owed = u64::from(env.backlog_at(0, t0));
            for tau in t0 + 1..=self.spec.horizon {
                let dep = tau as i64 - lead;
                if dep >= 1 && dep as usize <= t0 {
                    cum_in += u64::from(env.shipments_at(m, dep as usize));
                }
                cum_drain += u64::from(stage.capacity);
                if m == 0 {
                    retail_owed += u64::from(env.demand_in(tau));
                    cum_drain = cum_drain.min(retail_owed);
                }
                lb += stage.holding_cost * (on_hand + cum_in).saturating_sub(cum_drain) as f64;
            }
        }
        lb
    }

    fn dfs_period(&mut self, env: &EnvState, partial: &mut OrderSchedule) -> Result<()> {
        if env.is_done() {
            let value = env.total_reward()?;
            if value > self.best_value {
                self.best_value = value;
                self.best = partial.clone();
            }
            return Ok(());
        }
        if self.bound(env) <= self.best_value {
            return Ok(());
        }
        // Each period owns its pending-order buffer: the recursion below
        // commits deeper periods that would otherwise clobber the entries
        // this period's outer stages have already fixed.
        let mut pending = vec![0u32; self.spec.num_stages()];
        self.dfs_assign(env, partial, 0, &mut pending)
    }

    /// Assign the order of the `k`-th stage from the top for the next period.
    fn dfs_assign(
        &mut self,
        env: &EnvState,
        partial: &mut OrderSchedule,
        k: usize,
        pending: &mut Vec<u32>,
    ) -> Result<()> {
        let stages = self.spec.num_stages();
        if k == stages {
            let mut next = env.clone();
            for (m, &units) in pending.iter().enumerate() {
                next.submit_order(m, units)?;
            }
            next.advance_period()?;
            let t = next.period();
            for m in 0..stages {
                partial.set(m, t, pending[m]);
            }
            return self.dfs_period(&next, partial);
        }
        let m = stages - 1 - k;
        let ceiling = self.ceiling(env, env.period() + 1, m);
        for units in (0..=ceiling).rev() {
            self.nodes += 1;
            if self.budget_spent() {
                self.abandon(env);
                return Ok(());
            }
            pending[m] = units;
            self.dfs_assign(env, partial, k + 1, pending)?;
            if self.exhausted {
                self.abandon(env);
                return Ok(());
            }
        }
        Ok(())
    }
}
