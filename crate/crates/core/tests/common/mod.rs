//! Shared test infrastructure, deliberately independent of the crate's
//! internals: a straight-line re-implementation of the period recurrences,
//! random instance generators, a brute-force retrieval scan, exhaustive
//! schedule enumeration, and a mock chat-completion HTTP server.

#![allow(dead_code)]
// Oracle loops mirror the recurrences index-for-index on purpose.
#![allow(clippy::needless_range_loop)]

use std::collections::HashMap;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use echelon_core::env::TraceRow;
use echelon_core::{DemandModel, MemoryRecord, ScenarioSpec, SimilarCase, StageParams};
use rand::Rng;

// ===== Straight-line dynamics oracle =====

/// One stage-period cell of the oracle trajectory, in the same shape as
/// [`TraceRow`] so the two can be compared field-by-field.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub period: usize,
    pub stage: usize,
    pub demand: i64,
    pub order: i64,
    pub shipment: i64,
    pub sales: i64,
    pub backlog: i64,
    pub inventory: i64,
    pub profit: f64,
}

/// Simulate the whole episode directly from the recurrences, using signed
/// arithmetic over plain arrays. `orders[m][t-1]` is stage `m`'s order in
/// period `t`. Returns rows in period-major order, `(t, m)`.
///
/// Conventions under test: any quantity indexed at `t <= 0` reads zero
/// (initial inventory aside); a shipment departing toward stage `m` in
/// period `tau` arrives in period `tau + L_m`.
pub fn oracle_simulate(spec: &ScenarioSpec, orders: &[Vec<u32>]) -> Vec<OracleRow> {
    let ms = spec.num_stages();
    let horizon = spec.horizon;
    let d: Vec<i64> = (1..=horizon)
        .map(|t| i64::from(spec.demand.demand_at(t, horizon).unwrap()))
        .collect();
    let o = |m: usize, t: usize| i64::from(orders[m][t - 1]);
    // Indexed [m][t] with t = 0 holding the initial state.
    let mut r = vec![vec![0i64; horizon + 1]; ms];
    let mut s = vec![vec![0i64; horizon + 1]; ms];
    let mut b = vec![vec![0i64; horizon + 1]; ms];
    let mut inv = vec![vec![0i64; horizon + 1]; ms];
    for m in 0..ms {
        inv[m][0] = i64::from(spec.stages[m].init_inventory);
    }
    // A shipment toward `m` that departed in t - L_m, or zero when that
    // period precedes the episode.
    let arrival = |r: &Vec<Vec<i64>>, m: usize, t: usize| -> i64 {
        let lead = spec.stages[m].lead_time;
        if t > lead {
            r[m][t - lead]
        } else {
            0
        }
    };
    for t in 1..=horizon {
        for m in (0..ms).rev() {
            r[m][t] = if m == ms - 1 {
                o(m, t)
            } else {
                let up = m + 1;
                (b[up][t - 1] + o(m, t))
                    .min(i64::from(spec.stages[up].capacity))
                    .min(inv[up][t - 1] + arrival(&r, up, t))
            };
        }
        for m in 0..ms {
            s[m][t] = if m == 0 {
                (b[0][t - 1] + d[t - 1])
                    .min(i64::from(spec.stages[0].capacity))
                    .min(inv[0][t - 1] + arrival(&r, 0, t))
            } else {
                r[m - 1][t]
            };
        }
        for m in 0..ms {
            let inflow = if m == 0 { d[t - 1] } else { o(m - 1, t) };
            b[m][t] = b[m][t - 1] + inflow - s[m][t];
            inv[m][t] = inv[m][t - 1] + arrival(&r, m, t) - s[m][t];
        }
    }
    let mut rows = Vec::with_capacity(horizon * ms);
    for t in 1..=horizon {
        for m in 0..ms {
            let p = &spec.stages[m];
            rows.push(OracleRow {
                period: t,
                stage: m,
                demand: d[t - 1],
                order: o(m, t),
                shipment: r[m][t],
                sales: s[m][t],
                backlog: b[m][t],
                inventory: inv[m][t],
                profit: p.sale_price * s[m][t] as f64
                    - p.order_cost * r[m][t] as f64
                    - p.backlog_cost * b[m][t] as f64
                    - p.holding_cost * inv[m][t] as f64,
            });
        }
    }
    rows
}

/// Total reward of the oracle trajectory.
pub fn oracle_total(spec: &ScenarioSpec, orders: &[Vec<u32>]) -> f64 {
    oracle_simulate(spec, orders).iter().map(|row| row.profit).sum()
}

/// Drive the environment with a fixed order matrix and return its trace.
pub fn env_trace(spec: &ScenarioSpec, orders: &[Vec<u32>]) -> Vec<TraceRow> {
    let mut env = echelon_core::env::reset(spec).unwrap();
    for t in 1..=spec.horizon {
        for (m, row) in orders.iter().enumerate() {
            env.submit_order(m, row[t - 1]).unwrap();
        }
        env.advance_period().unwrap();
    }
    env.trace_rows()
}

/// Compare an environment trace against the oracle bit-exactly and check
/// the structural invariants. Panics with context on the first violation.
pub fn check_against_oracle(spec: &ScenarioSpec, orders: &[Vec<u32>], label: &str) {
    let trace = env_trace(spec, orders);
    let oracle = oracle_simulate(spec, orders);
    assert_eq!(trace.len(), oracle.len(), "{label}: row counts differ");
    for (got, want) in trace.iter().zip(&oracle) {
        let at = format!("{label}: t={} m={}", want.period, want.stage);
        // Non-negativity: the recurrences must never go below zero even in
        // signed arithmetic.
        for (name, v) in [
            ("shipment", want.shipment),
            ("sales", want.sales),
            ("backlog", want.backlog),
            ("inventory", want.inventory),
        ] {
            assert!(v >= 0, "{at}: oracle {name} is negative ({v})");
        }
        assert_eq!(got.period, want.period, "{at}: period");
        assert_eq!(got.stage, want.stage, "{at}: stage");
        assert_eq!(i64::from(got.demand), want.demand, "{at}: demand");
        assert_eq!(i64::from(got.order), want.order, "{at}: order");
        assert_eq!(i64::from(got.shipment), want.shipment, "{at}: shipment");
        assert_eq!(i64::from(got.sales), want.sales, "{at}: sales");
        assert_eq!(i64::from(got.backlog), want.backlog, "{at}: backlog");
        assert_eq!(i64::from(got.inventory), want.inventory, "{at}: inventory");
        assert_eq!(got.profit.to_bits(), want.profit.to_bits(), "{at}: profit bits");
    }
    check_invariants(spec, orders, &trace, label);
}

/// Structural invariants checked directly on the environment trace:
/// capacity caps, backlog accounting, inventory flow conservation, and the
/// profit identity.
pub fn check_invariants(spec: &ScenarioSpec, orders: &[Vec<u32>], trace: &[TraceRow], label: &str) {
    let ms = spec.num_stages();
    let cell = |t: usize, m: usize| -> &TraceRow {
        let row = &trace[(t - 1) * ms + m];
        assert_eq!((row.period, row.stage), (t, m), "{label}: trace ordering");
        row
    };
    let mut total = 0.0f64;
    for t in 1..=spec.horizon {
        for m in 0..ms {
            let row = cell(t, m);
            // Capacity: retailer sales are capped by its own capacity; a
            // shipment toward m is capped by the upstream capacity. The top
            // stage draws from an uncapacitated source.
            if m == 0 {
                assert!(
                    row.sales <= spec.stages[0].capacity,
                    "{label}: t={t} retailer sales exceed capacity"
                );
            }
            if m + 1 < ms {
                assert!(
                    row.shipment <= spec.stages[m + 1].capacity,
                    "{label}: t={t} m={m} shipment exceeds upstream capacity"
                );
            }
            // Backlog accounting: carried backlog plus new requests minus
            // what was served.
            let prev_backlog = if t > 1 { i64::from(cell(t - 1, m).backlog) } else { 0 };
            let inflow = if m == 0 {
                i64::from(row.demand)
            } else {
                i64::from(orders[m - 1][t - 1])
            };
            assert_eq!(
                i64::from(row.backlog),
                prev_backlog + inflow - i64::from(row.sales),
                "{label}: t={t} m={m} backlog accounting"
            );
            // Flow conservation: on-hand inventory changes only by arrivals
            // and sales.
            let lead = spec.stages[m].lead_time;
            let prev_inventory = if t > 1 {
                i64::from(cell(t - 1, m).inventory)
            } else {
                i64::from(spec.stages[m].init_inventory)
            };
            let arrived = if t > lead { i64::from(cell(t - lead, m).shipment) } else { 0 };
            assert_eq!(
                i64::from(row.inventory),
                prev_inventory + arrived - i64::from(row.sales),
                "{label}: t={t} m={m} inventory flow conservation"
            );
            // Profit identity, recomputed from the row's own quantities.
            let p = &spec.stages[m];
            let profit = p.sale_price * f64::from(row.sales)
                - p.order_cost * f64::from(row.shipment)
                - p.backlog_cost * f64::from(row.backlog)
                - p.holding_cost * f64::from(row.inventory);
            assert_eq!(row.profit.to_bits(), profit.to_bits(), "{label}: t={t} m={m} profit");
            total += row.profit;
        }
    }
    let mut env = echelon_core::env::reset(spec).unwrap();
    for t in 1..=spec.horizon {
        for (m, row) in orders.iter().enumerate() {
            env.submit_order(m, row[t - 1]).unwrap();
        }
        env.advance_period().unwrap();
    }
    assert_eq!(
        env.total_reward().unwrap().to_bits(),
        total.to_bits(),
        "{label}: total reward equals the sum of per-cell profits"
    );
}

// ===== Random instance generators =====

/// A random small scenario (M <= 3, T <= 4, every parameter <= 5) plus a
/// random order matrix over the same menu.
pub fn gen_small_instance(rng: &mut impl Rng) -> (ScenarioSpec, Vec<Vec<u32>>) {
    let ms = rng.gen_range(1..=3);
    let horizon = rng.gen_range(1..=4);
    let spec = gen_spec(rng, ms, horizon, "prop-small");
    let orders =
        (0..ms).map(|_| (0..horizon).map(|_| rng.gen_range(0..=5)).collect()).collect();
    (spec, orders)
}

/// A random tiny scenario for solver cross-checks (M = 2, T = 3).
pub fn gen_tiny_solver_instance(rng: &mut impl Rng) -> ScenarioSpec {
    gen_spec(rng, 2, 3, "prop-tiny")
}

fn gen_spec(rng: &mut impl Rng, ms: usize, horizon: usize, name: &str) -> ScenarioSpec {
    let demand = match rng.gen_range(0..6) {
        0 => DemandModel::Constant { value: rng.gen_range(0..=5) },
        1 => DemandModel::Increasing,
        2 => DemandModel::Decreasing,
        _ => DemandModel::Explicit {
            values: (0..horizon).map(|_| rng.gen_range(0..=5)).collect(),
        },
    };
    let spec = ScenarioSpec {
        name: name.to_string(),
        horizon,
        stages: (0..ms)
            .map(|_| StageParams {
                lead_time: rng.gen_range(1..=5),
                capacity: rng.gen_range(0..=5),
                init_inventory: rng.gen_range(0..=5),
                sale_price: f64::from(rng.gen_range(0..=5u32)),
                order_cost: f64::from(rng.gen_range(0..=5u32)),
                backlog_cost: f64::from(rng.gen_range(0..=5u32)),
                holding_cost: f64::from(rng.gen_range(0..=5u32)),
            })
            .collect(),
        demand,
    };
    spec.validate().unwrap();
    spec
}

// ===== Brute-force retrieval scan =====

/// Independent nearest-neighbour selection: score every record, repeatedly
/// pick the unchosen minimum (first index wins ties), stop at `k`, then
/// drop anything at distance `>= tau`.
pub fn brute_force_retrieve(
    records: &[MemoryRecord],
    query: &[f64],
    k: usize,
    tau: f64,
) -> Vec<SimilarCase> {
    let dist = |v: &[f64]| -> f64 {
        query.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    };
    let scores: Vec<f64> = records.iter().map(|r| dist(&r.state_vec)).collect();
    let mut chosen: Vec<usize> = Vec::new();
    while chosen.len() < k.min(records.len()) {
        let mut best: Option<usize> = None;
        for i in 0..records.len() {
            if chosen.contains(&i) {
                continue;
            }
            if best.is_none_or(|b| scores[i] < scores[b]) {
                best = Some(i);
            }
        }
        chosen.push(best.unwrap());
    }
    chosen
        .into_iter()
        .filter(|&i| scores[i] < tau)
        .map(|i| SimilarCase {
            state_vec: records[i].state_vec.clone(),
            action: records[i].action,
            reward: records[i].reward,
            distance: scores[i],
        })
        .collect()
}

// ===== Exhaustive schedule enumeration =====

/// Best total reward over every order matrix with entries in `0..=ceiling`,
/// scored by the straight-line oracle (independent of both the environment
/// and the solver).
pub fn exhaustive_best(spec: &ScenarioSpec, ceiling: u32) -> f64 {
    let ms = spec.num_stages();
    let horizon = spec.horizon;
    let cells = ms * horizon;
    let base = u64::from(ceiling) + 1;
    let combos = base.pow(cells as u32);
    let mut orders = vec![vec![0u32; horizon]; ms];
    let mut best = f64::NEG_INFINITY;
    for code in 0..combos {
        let mut rest = code;
        for m in 0..ms {
            for t in 0..horizon {
                orders[m][t] = (rest % base) as u32;
                rest /= base;
            }
        }
        let total = oracle_total(spec, &orders);
        if total > best {
            best = total;
        }
    }
    best
}

// ===== Mock chat-completion server =====

/// Per-call behavior of the mock backend, keyed by `(period, stage)` parsed
/// from the user prompt.
#[derive(Debug, Clone, Default)]
pub struct MockScript {
    /// The order echoed for each `(period, stage)`.
    pub orders: HashMap<(usize, usize), u32>,
    /// How many initial attempts per `(period, stage)` receive an unusable
    /// reply before the real one.
    pub garbage_attempts: HashMap<(usize, usize), u32>,
    /// Reply with free text containing the order instead of JSON for these
    /// cells, to exercise the salvage parser.
    pub freetext_cells: Vec<(usize, usize)>,
}

/// A minimal blocking HTTP server that speaks just enough of the
/// chat-completion protocol for the remote backend: one POST per decision,
/// body `{model, reasoning_effort, messages}`, reply
/// `{"choices":[{"message":{"content": ...}}]}`.
pub struct MockLlm {
    addr: std::net::SocketAddr,
    stop: Arc<AtomicBool>,
    hits: Arc<Mutex<HashMap<(usize, usize), u32>>>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl MockLlm {
    pub fn start(script: MockScript) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind mock server");
        let addr = listener.local_addr().unwrap();
        let stop = Arc::new(AtomicBool::new(false));
        let hits: Arc<Mutex<HashMap<(usize, usize), u32>>> = Arc::default();
        let thread_stop = stop.clone();
        let thread_hits = hits.clone();
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if thread_stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { break };
                handle_connection(stream, &script, &thread_hits);
            }
        });
        Self { addr, stop, hits, handle: Some(handle) }
    }

    /// Endpoint URL for [`echelon_core::agents::RemoteConfig`].
    pub fn endpoint(&self) -> String {
        format!("http://{}/v1/chat/completions", self.addr)
    }

    /// Total requests served for one `(period, stage)` cell.
    pub fn attempts(&self, period: usize, stage: usize) -> u32 {
        *self.hits.lock().unwrap().get(&(period, stage)).unwrap_or(&0)
    }
}

impl Drop for MockLlm {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the accept loop.
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn handle_connection(
    mut stream: TcpStream,
    script: &MockScript,
    hits: &Mutex<HashMap<(usize, usize), u32>>,
) {
    stream.set_read_timeout(Some(std::time::Duration::from_secs(5))).ok();
    let Some(body) = read_request_body(&mut stream) else { return };
    let content = match decision_content(&body, script, hits) {
        Some(content) => content,
        None => {
            let _ = stream.write_all(
                b"HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\nConnection: close\r\n\r\n",
            );
            return;
        }
    };
    let reply =
        serde_json::json!({"choices": [{"message": {"content": content}}]}).to_string();
    let response = format!(
        "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        reply.len(),
        reply
    );
    let _ = stream.write_all(response.as_bytes());
}

/// Read one HTTP request and return its body (per Content-Length).
fn read_request_body(stream: &mut TcpStream) -> Option<String> {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    let header_end = loop {
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            return None;
        }
        buf.extend_from_slice(&chunk[..n]);
        if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
            break pos + 4;
        }
        if buf.len() > 1 << 20 {
            return None;
        }
    };
    let headers = String::from_utf8_lossy(&buf[..header_end]).to_string();
    let content_length: usize = headers
        .lines()
        .find_map(|line| {
            let (name, value) = line.split_once(':')?;
            name.eq_ignore_ascii_case("content-length").then(|| value.trim().parse().ok())?
        })
        .unwrap_or(0);
    while buf.len() < header_end + content_length {
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            break;
        }
        buf.extend_from_slice(&chunk[..n]);
    }
    Some(String::from_utf8_lossy(&buf[header_end..]).to_string())
}

/// Build the reply content for one request, or `None` when the request is
/// not a well-formed decision prompt.
fn decision_content(
    body: &str,
    script: &MockScript,
    hits: &Mutex<HashMap<(usize, usize), u32>>,
) -> Option<String> {
    let parsed: serde_json::Value = serde_json::from_str(body).ok()?;
    let user = parsed["messages"]
        .as_array()?
        .iter()
        .find(|m| m["role"] == "user")?
        .get("content")?
        .as_str()?
        .to_string();
    let period = int_after(&user, "the round ")?;
    let stage = int_after(&user, "the stage ")?;
    let attempt = {
        let mut hits = hits.lock().unwrap();
        let count = hits.entry((period, stage)).or_insert(0);
        *count += 1;
        *count
    };
    if attempt <= script.garbage_attempts.get(&(period, stage)).copied().unwrap_or(0) {
        return Some("Apologies — unable to commit to a decision right now.".to_string());
    }
    let order = *script.orders.get(&(period, stage))?;
    if script.freetext_cells.contains(&(period, stage)) {
        Some(format!("After weighing the pipeline, my order is {order} units for this round."))
    } else {
        Some(
            serde_json::json!({"order": order, "reason": "mock echo of the scripted policy"})
                .to_string(),
        )
    }
}

/// First integer following `marker` in `text`.
fn int_after(text: &str, marker: &str) -> Option<usize> {
    let rest = &text[text.find(marker)? + marker.len()..];
    let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
    digits.parse().ok()
}
