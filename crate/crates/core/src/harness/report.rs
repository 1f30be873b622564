//! Run reports: aggregate metrics, per-period series, and the on-disk
//! artifact set (`report.json`, per-episode trace CSVs, series CSVs,
//! decision transcripts).
//!
//! Everything written here is re-derivable: `evaluate_run_dir` reloads a
//! run directory, recomputes the totals from the persisted traces alone,
//! and cross-checks every aggregate in `report.json`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{EpisodeResult, RetrievalConfig, Transcript};
use crate::env::{EnvState, TraceRow};
use crate::error::{Error, Result};

/// Per-(stage, period) series extracted from one episode, with a leading
/// period-0 row carrying the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesBlock {
    /// Periods `0..=T`; index 0 is the pre-episode state.
    pub periods: Vec<usize>,
    /// Customer demand per period (0 in period 0).
    pub demand: Vec<u32>,
    /// End-of-period on-hand inventory, `[stage][period]`.
    pub inventory: Vec<Vec<u32>>,
    /// End-of-period backlog, `[stage][period]`.
    pub backlog: Vec<Vec<u32>>,
    /// Orders placed, `[stage][period]`.
    pub orders: Vec<Vec<u32>>,
    /// Running per-stage reward divided by the optimum; the stage columns
    /// sum to `r/Opt` at the horizon.
    pub cumulative_relative_reward: Vec<Vec<f64>>,
}

impl SeriesBlock {
    /// Extract the four panels from a finished episode.
    pub fn from_env(env: &EnvState, opt: f64) -> Self {
        let spec = env.spec();
        let stages = spec.num_stages();
        let horizon = spec.horizon;
        let periods: Vec<usize> = (0..=horizon).collect();
        let demand: Vec<u32> = periods.iter().map(|&t| env.demand_in(t)).collect();
        let per_stage = |f: &dyn Fn(usize, usize) -> u32| -> Vec<Vec<u32>> {
            (0..stages).map(|m| periods.iter().map(|&t| f(m, t)).collect()).collect()
        };
        let cumulative_relative_reward = (0..stages)
            .map(|m| {
                let mut cum = 0.0;
                periods
                    .iter()
                    .map(|&t| {
                        cum += env.profit_at(m, t);
                        cum / opt
                    })
                    .collect()
            })
            .collect();
        let inventory = per_stage(&|m, t| env.inventory_at(m, t));
        let backlog = per_stage(&|m, t| env.backlog_at(m, t));
        let orders = per_stage(&|m, t| env.orders_at(m, t));
        Self { periods, demand, inventory, backlog, orders, cumulative_relative_reward }
    }

    fn stages(&self) -> usize {
        self.inventory.len()
    }
}

/// The aggregate result of one experiment run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub agent: String,
    pub backend: String,
    /// "ok" for completed runs; failed runs persist a minimal marker
    /// object instead of this full report.
    pub status: String,
    pub requested_episodes: usize,
    pub episodes_run: usize,
    /// True when a deterministic configuration collapsed to one episode.
    pub short_circuited: bool,
    pub retrieval: RetrievalConfig,
    pub per_episode_totals: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation of the episode totals.
    pub std_dev: f64,
    /// The centralized optimum used as the gap reference.
    pub opt: f64,
    /// `|(Opt - mean)/Opt| * 100`, rounded to two decimals.
    pub delta_percent: f64,
    /// Published reference gap for this (scenario, agent), when one exists.
    pub reference_delta_percent: Option<f64>,
    /// Reproduction problems detected during the run; non-empty means the
    /// full first-episode trace is embedded below.
    pub open_issues: Vec<String>,
    pub fallback_count: usize,
    /// Which episode the series block was extracted from (1-based).
    pub series_episode: usize,
    pub series: SeriesBlock,
    /// Full `(period, stage)` trace, embedded when `open_issues` is
    /// non-empty so the report alone documents the deviation.
    pub trace: Option<Vec<TraceRow>>,
}

/// Write `report.json` into `dir`.
pub fn write_report(report: &MetricsReport, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let path = dir.as_ref().join("report.json");
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| Error::parse(path.display(), e))?;
    std::fs::write(&path, text).map_err(|e| Error::io(path.display(), e))?;
    Ok(path)
}

/// Write a failure marker (`report.json` with `status: "failed"`) carrying
/// whatever episodes completed before the error.
pub fn write_failure_marker(
    dir: impl AsRef<Path>,
    error: &Error,
    completed_totals: &[f64],
) -> Result<PathBuf> {
    let path = dir.as_ref().join("report.json");
    let body = serde_json::json!({
        "status": "failed",
        "error": error.to_string(),
        "completed_episode_totals": completed_totals,
    });
    let text = serde_json::to_string_pretty(&body)
        .map_err(|e| Error::parse(path.display(), e))?;
    std::fs::write(&path, text).map_err(|e| Error::io(path.display(), e))?;
    Ok(path)
}

/// Write `episode_NNN.csv` (1-based) for every completed episode.
pub fn write_episode_csvs(episodes: &[EpisodeResult], dir: impl AsRef<Path>) -> Result<()> {
    for (i, episode) in episodes.iter().enumerate() {
        let path = dir.as_ref().join(format!("episode_{:03}.csv", i + 1));
        let file = std::fs::File::create(&path).map_err(|e| Error::io(path.display(), e))?;
        episode
            .env
            .write_trace_csv(std::io::BufWriter::new(file))
            .map_err(|e| Error::parse(path.display(), e))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TranscriptLine<'a> {
    episode: usize,
    #[serde(flatten)]
    transcript: &'a Transcript,
}

/// Write every decision transcript as one JSON line in `transcripts.jsonl`.
pub fn write_transcripts(episodes: &[EpisodeResult], dir: impl AsRef<Path>) -> Result<()> {
    use std::io::Write as _;
    let path = dir.as_ref().join("transcripts.jsonl");
    let file = std::fs::File::create(&path).map_err(|e| Error::io(path.display(), e))?;
    let mut out = std::io::BufWriter::new(file);
    for (i, episode) in episodes.iter().enumerate() {
        for transcript in &episode.transcripts {
            let line = serde_json::to_string(&TranscriptLine { episode: i + 1, transcript })
                .map_err(|e| Error::parse(path.display(), e))?;
            writeln!(out, "{line}").map_err(|e| Error::io(path.display(), e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path.display(), e))
}

/// Write the four series panels as CSVs (`inventory.csv`, `backlog.csv`,
/// `orders.csv`, `cumulative_relative_reward.csv`), each with columns
/// `period, stage_0.., demand`.
pub fn emit_series(series: &SeriesBlock, dir: impl AsRef<Path>) -> Result<()> {
    emit_panel(&series_u32(series, |s| &s.inventory), series, "inventory.csv", &dir)?;
    emit_panel(&series_u32(series, |s| &s.backlog), series, "backlog.csv", &dir)?;
    emit_panel(&series_u32(series, |s| &s.orders), series, "orders.csv", &dir)?;
    let relative: Vec<Vec<String>> = series
        .cumulative_relative_reward
        .iter()
        .map(|col| col.iter().map(|v| format!("{v:.6}")).collect())
        .collect();
    emit_panel(&relative, series, "cumulative_relative_reward.csv", &dir)
}

fn series_u32(series: &SeriesBlock, pick: fn(&SeriesBlock) -> &Vec<Vec<u32>>) -> Vec<Vec<String>> {
    pick(series).iter().map(|col| col.iter().map(|v| v.to_string()).collect()).collect()
}

fn emit_panel(
    columns: &[Vec<String>],
    series: &SeriesBlock,
    file: &str,
    dir: impl AsRef<Path>,
) -> Result<()> {
    let path = dir.as_ref().join(file);
    let out = std::fs::File::create(&path).map_err(|e| Error::io(path.display(), e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(out));
    let mut header = vec!["period".to_string()];
    header.extend((0..series.stages()).map(|m| format!("stage_{m}")));
    header.push("demand".to_string());
    w.write_record(&header).map_err(|e| Error::parse(path.display(), e))?;
    for (row, &period) in series.periods.iter().enumerate() {
        let mut record = vec![period.to_string()];
        record.extend(columns.iter().map(|col| col[row].clone()));
        record.push(series.demand[row].to_string());
        w.write_record(&record).map_err(|e| Error::parse(path.display(), e))?;
    }
    w.flush().map_err(|e| Error::io(path.display(), e))
}

/// Outcome of re-deriving a run directory's aggregates from its traces.
#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub delta_percent: f64,
    /// Discrepancies between `report.json` and the re-derived values;
    /// empty means the report is internally consistent.
    pub issues: Vec<String>,
}

/// Reload a run directory and cross-check `report.json` against totals
/// recomputed from the persisted episode traces alone.
pub fn evaluate_run_dir(dir: impl AsRef<Path>) -> Result<EvalSummary> {
    let dir = dir.as_ref();
    let report_path = dir.join("report.json");
    let text = std::fs::read_to_string(&report_path)
        .map_err(|e| Error::io(report_path.display(), e))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::parse(report_path.display(), e))?;
    if value.get("status").and_then(|s| s.as_str()) == Some("failed") {
        let why = value.get("error").and_then(|e| e.as_str()).unwrap_or("unknown");
        return Err(Error::parse(report_path.display(), format!("run marked failed: {why}")));
    }
    let report: MetricsReport = serde_json::from_value(value)
        .map_err(|e| Error::parse(report_path.display(), e))?;

    let mut totals = Vec::new();
    for i in 1.. {
        let path = dir.join(format!("episode_{i:03}.csv"));
        if !path.exists() {
            break;
        }
        totals.push(episode_total(&path)?);
    }
    if totals.is_empty() {
        return Err(Error::parse(dir.display(), "no episode_NNN.csv traces found"));
    }

    let mean = totals.iter().sum::<f64>() / totals.len() as f64;
    let std_dev = (totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>()
        / totals.len() as f64)
        .sqrt();
    let delta_percent = super::relative_gap(report.opt, mean)?;

    let mut issues = Vec::new();
    if totals.len() != report.per_episode_totals.len() {
        issues.push(format!(
            "report lists {} episode totals but {} traces were found",
            report.per_episode_totals.len(),
            totals.len()
        ));
    }
    for (i, (a, b)) in totals.iter().zip(&report.per_episode_totals).enumerate() {
        if (a - b).abs() > 1e-6 {
            issues.push(format!("episode {} total {} does not match the report's {}", i + 1, a, b));
        }
    }
    if (mean - report.mean).abs() > 1e-6 {
        issues.push(format!("re-derived mean {mean} does not match the report's {}", report.mean));
    }
    if (std_dev - report.std_dev).abs() > 1e-6 {
        issues.push(format!(
            "re-derived std dev {std_dev} does not match the report's {}",
            report.std_dev
        ));
    }
    if (delta_percent - report.delta_percent).abs() > 1e-9 {
        issues.push(format!(
            "re-derived gap {delta_percent} does not match the report's {}",
            report.delta_percent
        ));
    }
    Ok(EvalSummary { episodes: totals.len(), mean, std_dev, delta_percent, issues })
}

/// Sum the profit column of one episode trace CSV.
fn episode_total(path: &Path) -> Result<f64> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display(), e))?;
    let mut reader = csv::Reader::from_reader(std::io::BufReader::new(file));
    let headers = reader.headers().map_err(|e| Error::parse(path.display(), e))?;
    let profit_col = headers
        .iter()
        .position(|h| h == "P")
        .ok_or_else(|| Error::parse(path.display(), "trace is missing the P column"))?;
    let mut total = 0.0;
    for row in reader.records() {
        let row = row.map_err(|e| Error::parse(path.display(), e))?;
        let cell = row
            .get(profit_col)
            .ok_or_else(|| Error::parse(path.display(), "short row in trace"))?;
        total += cell
            .parse::<f64>()
            .map_err(|e| Error::parse(path.display(), format!("bad profit cell {cell:?}: {e}")))?;
    }
    Ok(total)
}
