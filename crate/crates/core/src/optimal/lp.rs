//! Exact mixed-integer model of an episode in CPLEX LP file format, plus a
//! plain-text order-matrix importer for round-tripping third-party results.
//!
//! The file encodes the *forced* dynamics, not a relaxation: every
//! three-way shipment/sales `min` becomes three `<=` constraints together
//! with big-M lower bounds selected by binary indicators (at least one of
//! which must bind), so any feasible point reproduces the simulator's
//! trajectory for its order matrix. Orders are the only free integers; all
//! other columns follow from the equalities once the indicators pick the
//! binding term.

use std::fmt::Write as _;
use std::path::Path;

use super::OrderSchedule;
use crate::env::ScenarioSpec;
use crate::error::{Error, Result};

/// Render the episode MIP in LP format.
pub fn render_ip(spec: &ScenarioSpec) -> Result<String> {
    spec.validate()?;
    if spec.horizon == 0 {
        return Err(Error::InvalidConfig("a zero-horizon scenario has nothing to export".into()));
    }
    let horizon = spec.horizon;
    let stages = spec.num_stages();
    let top = stages - 1;
    let demand = (1..=horizon)
        .map(|t| spec.demand.demand_at(t, horizon).map(u64::from))
        .collect::<Result<Vec<_>>>()?;

    // A generous but finite order bound keeps the big-M constants honest:
    // ordering beyond total demand plus all stock plus a horizon of churn
    // capacity can only inflate internal backlog.
    let total_demand: u64 = demand.iter().sum();
    let total_init: u64 = spec.stages.iter().map(|s| u64::from(s.init_inventory)).sum();
    let max_cap: u64 = spec.stages.iter().map(|s| u64::from(s.capacity)).max().unwrap_or(0);
    let ub_o = total_demand + total_init + horizon as u64 * max_cap;
    let big_m = (ub_o * (horizon as u64 + 2) + total_demand + total_init + max_cap) as f64;

    let o = |m: usize, t: usize| format!("O_{m}_{t}");
    let r = |m: usize, t: usize| format!("R_{m}_{t}");
    let s = |m: usize, t: usize| format!("S_{m}_{t}");
    let b = |m: usize, t: usize| format!("B_{m}_{t}");
    let i = |m: usize, t: usize| format!("I_{m}_{t}");

    let mut out = String::new();
    let _ = writeln!(out, "\\ {}: exact order-schedule MIP, {} stages x {} periods", spec.name, stages, horizon);
    out.push_str("\\ maximize total profit; orders are the only free integers\n");

    // --- objective ---
    out.push_str("Maximize\n obj:");
    let mut first = true;
    for (m, stage) in spec.stages.iter().enumerate() {
        for t in 1..=horizon {
            let mut line = String::new();
            push_term(&mut line, stage.sale_price, &s(m, t), &mut first);
            push_term(&mut line, -stage.order_cost, &r(m, t), &mut first);
            push_term(&mut line, -stage.backlog_cost, &b(m, t), &mut first);
            push_term(&mut line, -stage.holding_cost, &i(m, t), &mut first);
            if !line.is_empty() {
                let _ = writeln!(out, "{line}");
                out.push(' ');
            }
        }
    }
    if first {
        // Degenerate all-zero objective still needs one term.
        let _ = writeln!(out, " 0 {}", o(0, 1));
    } else if out.ends_with(' ') {
        out.pop();
    }

    // --- constraints ---
    out.push_str("Subject To\n");
    let mut cons = |name: String, terms: &[(f64, String)], op: &str, rhs: f64| {
        let mut line = String::new();
        let mut lead = true;
        for (coef, var) in terms {
            push_term(&mut line, *coef, var, &mut lead);
        }
        let _ = writeln!(&mut out, " {name}:{line} {op} {}", num(rhs));
    };

    for t in 1..=horizon {
        // Shipment mins for every stage below the top.
        for m in 0..top {
            let up = m + 1;
            let upar = &spec.stages[up];
            let dep = t as i64 - upar.lead_time as i64;

            // Waiting-demand term: B[up][t-1] + O[m][t].
            let mut a1: Vec<(f64, String)> = vec![(1.0, r(m, t)), (-1.0, o(m, t))];
            if t >= 2 {
                a1.push((-1.0, b(up, t - 1)));
            }
            cons(format!("su1_{m}_{t}"), &a1, "<=", 0.0);
            cons(format!("su2_{m}_{t}"), &[(1.0, r(m, t))], "<=", f64::from(upar.capacity));
            // Availability term: I[up][t-1] + R[up][t-L_up].
            let mut a3: Vec<(f64, String)> = vec![(1.0, r(m, t))];
            let mut a3_rhs = 0.0;
            if t >= 2 {
                a3.push((-1.0, i(up, t - 1)));
            } else {
                a3_rhs += f64::from(upar.init_inventory);
            }
            if dep >= 1 {
                a3.push((-1.0, r(up, dep as usize)));
            }
            cons(format!("su3_{m}_{t}"), &a3, "<=", a3_rhs);

            let mut l1 = a1.clone();
            l1.push((-big_m, format!("yR1_{m}_{t}")));
            cons(format!("sl1_{m}_{t}"), &l1, ">=", -big_m);
            cons(
                format!("sl2_{m}_{t}"),
                &[(1.0, r(m, t)), (-big_m, format!("yR2_{m}_{t}"))],
                ">=",
                f64::from(upar.capacity) - big_m,
            );
            let mut l3 = a3.clone();
            l3.push((-big_m, format!("yR3_{m}_{t}")));
            cons(format!("sl3_{m}_{t}"), &l3, ">=", a3_rhs - big_m);
            cons(
                format!("spick_{m}_{t}"),
                &[
                    (1.0, format!("yR1_{m}_{t}")),
                    (1.0, format!("yR2_{m}_{t}")),
                    (1.0, format!("yR3_{m}_{t}")),
                ],
                ">=",
                1.0,
            );
        }

        // Top stage receives its order in full.
        cons(format!("top_{t}"), &[(1.0, r(top, t)), (-1.0, o(top, t))], "=", 0.0);

        // Retailer sales min: backlog + demand, capacity, availability.
        let retail = &spec.stages[0];
        let dep = t as i64 - retail.lead_time as i64;
        let d_t = demand[t - 1] as f64;
        let mut a1: Vec<(f64, String)> = vec![(1.0, s(0, t))];
        if t >= 2 {
            a1.push((-1.0, b(0, t - 1)));
        }
        cons(format!("du1_{t}"), &a1, "<=", d_t);
        cons(format!("du2_{t}"), &[(1.0, s(0, t))], "<=", f64::from(retail.capacity));
        let mut a3: Vec<(f64, String)> = vec![(1.0, s(0, t))];
        let mut a3_rhs = 0.0;
        if t >= 2 {
            a3.push((-1.0, i(0, t - 1)));
        } else {
            a3_rhs += f64::from(retail.init_inventory);
        }
        if dep >= 1 {
            a3.push((-1.0, r(0, dep as usize)));
        }
        cons(format!("du3_{t}"), &a3, "<=", a3_rhs);

        let mut l1 = a1.clone();
        l1.push((-big_m, format!("yS1_{t}")));
        cons(format!("dl1_{t}"), &l1, ">=", d_t - big_m);
        cons(
            format!("dl2_{t}"),
            &[(1.0, s(0, t)), (-big_m, format!("yS2_{t}"))],
            ">=",
            f64::from(retail.capacity) - big_m,
        );
        let mut l3 = a3.clone();
        l3.push((-big_m, format!("yS3_{t}")));
        cons(format!("dl3_{t}"), &l3, ">=", a3_rhs - big_m);
        cons(
            format!("dpick_{t}"),
            &[
                (1.0, format!("yS1_{t}")),
                (1.0, format!("yS2_{t}")),
                (1.0, format!("yS3_{t}")),
            ],
            ">=",
            1.0,
        );

        // Non-retail stages sell exactly what ships downstream.
        for m in 1..stages {
            cons(format!("sale_{m}_{t}"), &[(1.0, s(m, t)), (-1.0, r(m - 1, t))], "=", 0.0);
        }

        // Backlog recursions.
        let mut blog0: Vec<(f64, String)> = vec![(1.0, b(0, t)), (1.0, s(0, t))];
        if t >= 2 {
            blog0.push((-1.0, b(0, t - 1)));
        }
        cons(format!("blog_0_{t}"), &blog0, "=", d_t);
        for m in 1..stages {
            let mut row: Vec<(f64, String)> =
                vec![(1.0, b(m, t)), (1.0, s(m, t)), (-1.0, o(m - 1, t))];
            if t >= 2 {
                row.push((-1.0, b(m, t - 1)));
            }
            cons(format!("blog_{m}_{t}"), &row, "=", 0.0);
        }

        // Inventory recursions.
        for (m, stage) in spec.stages.iter().enumerate() {
            let dep = t as i64 - stage.lead_time as i64;
            let mut row: Vec<(f64, String)> = vec![(1.0, i(m, t)), (1.0, s(m, t))];
            let mut rhs = 0.0;
            if t >= 2 {
                row.push((-1.0, i(m, t - 1)));
            } else {
                rhs += f64::from(stage.init_inventory);
            }
            if dep >= 1 {
                row.push((-1.0, r(m, dep as usize)));
            }
            cons(format!("inv_{m}_{t}"), &row, "=", rhs);
        }
    }

    // --- bounds and integrality ---
    out.push_str("Bounds\n");
    for m in 0..stages {
        for t in 1..=horizon {
            let _ = writeln!(out, " {} <= {ub_o}", o(m, t));
        }
    }
    out.push_str("General\n");
    for m in 0..stages {
        for t in 1..=horizon {
            let _ = writeln!(out, " {}", o(m, t));
        }
    }
    out.push_str("Binary\n");
    for t in 1..=horizon {
        for m in 0..top {
            let _ = writeln!(out, " yR1_{m}_{t} yR2_{m}_{t} yR3_{m}_{t}");
        }
        let _ = writeln!(out, " yS1_{t} yS2_{t} yS3_{t}");
    }
    out.push_str("End\n");
    Ok(out)
}

/// Write the episode MIP to `path`.
pub fn export_ip(spec: &ScenarioSpec, path: &Path) -> Result<()> {
    let text = render_ip(spec)?;
    std::fs::write(path, text).map_err(|e| Error::io(path.display(), e))
}

/// Read an order matrix: one whitespace-separated integer row per stage
/// (stage 0 first), `#`/`\` comment lines and blank lines ignored.
pub fn import_solution(path: &Path) -> Result<OrderSchedule> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
    let mut rows: Vec<Vec<u32>> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('\\') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<u32>().map_err(|_| {
                    Error::parse(path.display(), format!("line {}: `{tok}` is not an order count", ln + 1))
                })
            })
            .collect::<Result<Vec<u32>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(path.display(), "no order rows found"));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::parse(path.display(), "order rows have unequal lengths"));
    }
    OrderSchedule::from_rows(rows)
}

/// Append one objective/constraint term, eliding zero coefficients and
/// unit magnitudes.
fn push_term(line: &mut String, coef: f64, var: &str, first: &mut bool) {
    if coef == 0.0 {
        return;
    }
    if *first {
        if coef < 0.0 {
            let _ = write!(line, " -");
        }
        *first = false;
    } else {
        let _ = if coef < 0.0 { write!(line, " -") } else { write!(line, " +") };
    }
    let mag = coef.abs();
    if mag == 1.0 {
        let _ = write!(line, " {var}");
    } else {
        let _ = write!(line, " {} {var}", num(mag));
    }
}

/// Plain decimal rendering (integers without a trailing `.0`).
fn num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}
