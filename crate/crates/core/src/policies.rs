//! Scripted ordering heuristics.
//!
//! All three policies map an [`Observation`] to a non-negative integer order:
//!
//! - **base-stock**: order up to the stage's capacity, `max(0, c - I)`;
//! - **tracking-demand**: average own sales over the last `L_max` periods
//!   (the chain-wide maximum lead time), target `S_bar * L + B`, and order
//!   the gap to current inventory;
//! - **safety-stock**: an order-up-to rule on the inventory position
//!   (on-hand plus pipeline minus backlog) with target `(L+1) * mu_hat`
//!   plus an optional `z * sigma_hat * sqrt(L+1)` safety term, clamped by
//!   a configurable capacity rule.
//!
//! Fractional targets are rounded half-up before the non-negativity clamp.

use crate::env::{DemandModel, Observation, StageParams};

/// Deterministic demand forecast over the remaining horizon.
///
/// `mu_hat` is the mean demand over the window `t ..= min(t+lead, T)`; with a
/// deterministic demand model the forecast has zero spread, so `sigma_hat`
/// is 0.
#[derive(Debug, Clone)]
pub struct ForecastModel {
    demand: DemandModel,
    horizon: usize,
}

impl ForecastModel {
    pub fn new(demand: DemandModel, horizon: usize) -> Self {
        Self { demand, horizon }
    }

    /// `(mu_hat, sigma_hat)` for a decision in period `t` at lead time `lead`.
    pub fn forecast(&self, t: usize, lead: usize) -> (f64, f64) {
        if t == 0 || t > self.horizon {
            return (0.0, 0.0);
        }
        let hi = (t + lead).min(self.horizon);
        let window = (hi - t + 1) as f64;
        let sum = self.demand.cumulative(t, hi) as f64;
        (sum / window, 0.0)
    }
}

/// Capacity clamp applied to the safety-stock order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CapRule {
    /// Clamp by the upstream supplier's capacity `c[m+1]`; the top stage,
    /// which draws from the unlimited raw supplier, is left unclamped.
    #[default]
    Supplier,
    /// Clamp by the stage's own capacity `c[m]`.
    Own,
    /// No clamp.
    Unbounded,
}

/// Safety-stock policy parameters.
#[derive(Debug, Clone)]
pub struct SafetyStockParams {
    /// Safety factor `z` (0 disables the safety term).
    pub z: f64,
    /// Capacity clamp rule.
    pub cap_rule: CapRule,
}

impl Default for SafetyStockParams {
    fn default() -> Self {
        Self { z: 0.0, cap_rule: CapRule::Supplier }
    }
}

/// Round half-up: 2.5 -> 3, 2.4 -> 2, -0.5 -> 0.
fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

/// Base-stock: order the gap between capacity and current inventory.
pub fn base_stock_order(obs: &Observation, params: &StageParams) -> u32 {
    (params.capacity as i64 - obs.inventory as i64).max(0) as u32
}

/// Tracking-demand: order toward `S_bar * L + B` where `S_bar` averages own
/// sales over the last `l_max` periods (periods before the episode count as
/// zero sales, as does history beyond the observation's own window).
pub fn tracking_demand_order(obs: &Observation, params: &StageParams, l_max: usize) -> u32 {
    debug_assert!(l_max >= obs.sales_history.len());
    if l_max == 0 {
        return 0;
    }
    let recent: u64 = obs.sales_history.iter().map(|&s| s as u64).sum();
    let s_bar = recent as f64 / l_max as f64;
    let target = s_bar * params.lead_time as f64 + obs.backlog as f64;
    round_half_up(target - obs.inventory as f64).max(0) as u32
}

/// Safety-stock: order-up-to on the inventory position.
///
/// `supplier_capacity` is the upstream stage's capacity (`None` at the top of
/// the chain); it is only consulted under [`CapRule::Supplier`].
pub fn safety_stock_order(
    obs: &Observation,
    params: &StageParams,
    supplier_capacity: Option<u32>,
    forecast: &ForecastModel,
    ss: &SafetyStockParams,
) -> u32 {
    let pipeline: u64 = obs.deliveries.iter().map(|&d| d as u64).sum();
    let position = obs.inventory as i64 + pipeline as i64 - obs.backlog as i64;
    let (mu, sigma) = forecast.forecast(obs.period, params.lead_time);
    let periods = (params.lead_time + 1) as f64;
    let target = periods * mu + ss.z * sigma * periods.sqrt();
    let order = round_half_up(target - position as f64).max(0) as u32;
    let cap = match ss.cap_rule {
        CapRule::Supplier => supplier_capacity,
        CapRule::Own => Some(params.capacity),
        CapRule::Unbounded => None,
    };
    match cap {
        Some(c) => order.min(c),
        None => order,
    }
}
