//! Per-stage episodic memory with exact nearest-neighbour retrieval.
//!
//! Each stage owns one [`MemoryStore`] of `(state_vec, action, reward)`
//! records. Retrieval embeds the query with the identity map (no
//! normalization), scans every record, takes the `K` nearest by Euclidean
//! distance, and then keeps only those strictly inside the threshold
//! (`d < tau`). Results come back sorted by ascending distance; exact ties
//! resolve by insertion order. The scan is linear in the store size, which
//! keeps retrieval exact and dependency-free at benchmark scale.
//!
//! Stores round-trip through a JSON Lines format, one record per line:
//!
//! ```json
//! {"stage":0,"episode":1,"period":3,"state_vec":[8.0,0.0,0.0,2.0,0.0,4.0,0.0,4.0],"action":4,"reward":-4.0,"source":"rl_log"}
//! ```
//!
//! Import is partial: malformed lines (bad JSON, unknown stage, wrong vector
//! dimension) are reported with their line numbers while every valid line is
//! kept.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where a record came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordSource {
    /// Pre-loaded from a recorded rollout log.
    RlLog,
    /// Stored live during the current run.
    Live,
}

/// One stored decision: pre-decision state, action taken, realized reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryRecord {
    pub state_vec: Vec<f64>,
    pub action: u32,
    pub reward: f64,
    pub episode: u64,
    pub period: usize,
    pub source: RecordSource,
}

/// A retrieved neighbour: the record plus its distance to the query.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarCase {
    pub state_vec: Vec<f64>,
    pub action: u32,
    pub reward: f64,
    pub distance: f64,
}

/// Append-only store of records for a single stage.
#[derive(Debug, Clone)]
pub struct MemoryStore {
    stage: usize,
    dim: usize,
    records: Vec<MemoryRecord>,
}

impl MemoryStore {
    /// Empty store for `stage` with feature dimension `dim` (= `4 + 2*L`).
    pub fn new(stage: usize, dim: usize) -> Self {
        Self { stage, dim, records: Vec::new() }
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[MemoryRecord] {
        &self.records
    }

    /// Append a record; its vector must match the store dimension.
    pub fn insert(&mut self, record: MemoryRecord) -> Result<()> {
        if record.state_vec.len() != self.dim {
            return Err(Error::Protocol(format!(
                "stage {} store expects dimension {}, got {}",
                self.stage,
                self.dim,
                record.state_vec.len()
            )));
        }
        self.records.push(record);
        Ok(())
    }

    /// K-nearest retrieval with a strict distance threshold.
    ///
    /// Returns at most `k` cases with `distance < tau`, ascending by
    /// distance, ties by insertion order. `k = 0` or an empty store yield an
    /// empty list.
    pub fn retrieve(&self, query: &[f64], k: usize, tau: f64) -> Result<Vec<SimilarCase>> {
        if query.len() != self.dim {
            return Err(Error::Protocol(format!(
                "stage {} store expects query dimension {}, got {}",
                self.stage,
                self.dim,
                query.len()
            )));
        }
        let mut scored: Vec<(f64, usize)> = self
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (euclidean(query, &r.state_vec), i))
            .collect();
        // Stable sort by distance keeps insertion order on exact ties.
        scored.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite distances"));
        Ok(scored
            .into_iter()
            .take(k)
            .filter(|&(d, _)| d < tau)
            .map(|(d, i)| {
                let r = &self.records[i];
                SimilarCase {
                    state_vec: r.state_vec.clone(),
                    action: r.action,
                    reward: r.reward,
                    distance: d,
                }
            })
            .collect())
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

// ===== JSON Lines persistence =====

/// Serialized form of one log line (store stage + record fields).
#[derive(Debug, Serialize, Deserialize)]
struct LogLine {
    stage: usize,
    episode: u64,
    period: usize,
    state_vec: Vec<f64>,
    action: u32,
    reward: f64,
    source: RecordSource,
}

/// One rejected input line.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectedLine {
    /// 1-based line number in the input file.
    pub line: usize,
    pub reason: String,
}

/// Outcome of a (possibly partial) import.
#[derive(Debug, Clone, Default)]
pub struct ImportReport {
    /// Records accepted per stage index.
    pub accepted: Vec<usize>,
    /// Lines rejected, with reasons.
    pub rejected: Vec<RejectedLine>,
}

/// Import a JSON Lines log into the per-stage stores.
///
/// Valid lines are inserted into the store matching their `stage`; malformed
/// lines are collected in the report. Only an unreadable file is an error.
pub fn import_log(stores: &mut [MemoryStore], path: impl AsRef<Path>) -> Result<ImportReport> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display(), e))?;
    let mut report = ImportReport { accepted: vec![0; stores.len()], ..Default::default() };
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path.display(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LogLine = match serde_json::from_str(&line) {
            Ok(p) => p,
            Err(e) => {
                report.rejected.push(RejectedLine { line: line_no, reason: format!("bad JSON: {e}") });
                continue;
            }
        };
        let Some(store) = stores.iter_mut().find(|s| s.stage() == parsed.stage) else {
            report.rejected.push(RejectedLine {
                line: line_no,
                reason: format!("unknown stage {}", parsed.stage),
            });
            continue;
        };
        if parsed.state_vec.len() != store.dim() {
            report.rejected.push(RejectedLine {
                line: line_no,
                reason: format!(
                    "stage {} expects dimension {}, got {}",
                    parsed.stage,
                    store.dim(),
                    parsed.state_vec.len()
                ),
            });
            continue;
        }
        let stage = parsed.stage;
        store
            .insert(MemoryRecord {
                state_vec: parsed.state_vec,
                action: parsed.action,
                reward: parsed.reward,
                episode: parsed.episode,
                period: parsed.period,
                source: parsed.source,
            })
            .expect("dimension already checked");
        report.accepted[stage] += 1;
    }
    Ok(report)
}

/// Export all stores to a JSON Lines log. Returns the number of lines written.
pub fn export_log(stores: &[MemoryStore], path: impl AsRef<Path>) -> Result<usize> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display(), e))?;
    let mut out = std::io::BufWriter::new(file);
    let mut count = 0;
    for store in stores {
        for r in store.records() {
            let line = LogLine {
                stage: store.stage(),
                episode: r.episode,
                period: r.period,
                state_vec: r.state_vec.clone(),
                action: r.action,
                reward: r.reward,
                source: r.source,
            };
            serde_json::to_writer(&mut out, &line).map_err(|e| Error::parse(path.display(), e))?;
            out.write_all(b"\n").map_err(|e| Error::io(path.display(), e))?;
            count += 1;
        }
    }
    out.flush().map_err(|e| Error::io(path.display(), e))?;
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(v: Vec<f64>, action: u32, reward: f64) -> MemoryRecord {
        MemoryRecord { state_vec: v, action, reward, episode: 1, period: 1, source: RecordSource::Live }
    }

    #[test]
    fn exact_match_returns_distance_zero() {
        let mut s = MemoryStore::new(0, 3);
        s.insert(rec(vec![1.0, 2.0, 3.0], 4, -8.0)).unwrap();
        let got = s.retrieve(&[1.0, 2.0, 3.0], 1, 2.0).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].distance, 0.0);
        assert_eq!(got[0].action, 4);
    }

    #[test]
    fn threshold_is_strict() {
        // A record at distance exactly tau is excluded: |(0,0)-(0,2)| = 2.
        let mut s = MemoryStore::new(0, 2);
        s.insert(rec(vec![0.0, 2.0], 1, 0.0)).unwrap();
        s.insert(rec(vec![0.0, 1.0], 2, 0.0)).unwrap();
        let got = s.retrieve(&[0.0, 0.0], 5, 2.0).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].action, 2);
    }

    #[test]
    fn ties_resolve_by_insertion_order() {
        let mut s = MemoryStore::new(0, 1);
        s.insert(rec(vec![1.0], 10, 0.0)).unwrap();
        s.insert(rec(vec![-1.0], 20, 0.0)).unwrap();
        s.insert(rec(vec![1.0], 30, 0.0)).unwrap();
        let got = s.retrieve(&[0.0], 2, 5.0).unwrap();
        assert_eq!(got.iter().map(|c| c.action).collect::<Vec<_>>(), vec![10, 20]);
    }

    #[test]
    fn k_limits_before_threshold_filters() {
        // Nearest K are taken first, then filtered: a far query with small K
        // returns fewer than K cases even if later records would pass.
        let mut s = MemoryStore::new(0, 1);
        s.insert(rec(vec![10.0], 1, 0.0)).unwrap();
        s.insert(rec(vec![0.5], 2, 0.0)).unwrap();
        let got = s.retrieve(&[0.0], 1, 2.0).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].action, 2);
        assert_eq!(s.retrieve(&[0.0], 0, 2.0).unwrap().len(), 0);
    }

    #[test]
    fn empty_store_returns_empty() {
        let s = MemoryStore::new(2, 8);
        assert!(s.retrieve(&[0.0; 8], 6, 2.0).unwrap().is_empty());
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let mut s = MemoryStore::new(0, 2);
        assert!(matches!(s.insert(rec(vec![1.0], 0, 0.0)), Err(Error::Protocol(_))));
        assert!(matches!(s.retrieve(&[1.0], 1, 1.0), Err(Error::Protocol(_))));
    }

    #[test]
    fn results_sorted_ascending_by_distance() {
        let mut s = MemoryStore::new(0, 1);
        for x in [5.0, 1.0, 3.0, 0.5, 4.0] {
            s.insert(rec(vec![x], x as u32, 0.0)).unwrap();
        }
        let got = s.retrieve(&[0.0], 4, 4.5).unwrap();
        let dists: Vec<f64> = got.iter().map(|c| c.distance).collect();
        assert_eq!(dists, vec![0.5, 1.0, 3.0, 4.0]);
    }

    #[test]
    fn jsonl_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let mut stores = vec![MemoryStore::new(0, 2), MemoryStore::new(1, 2)];
        stores[0].insert(rec(vec![0.125, -3.5], 4, -8.25)).unwrap();
        stores[1]
            .insert(MemoryRecord {
                state_vec: vec![1.0, 2.0],
                action: 7,
                reward: 0.1,
                episode: 3,
                period: 9,
                source: RecordSource::RlLog,
            })
            .unwrap();
        let written = export_log(&stores, &path).unwrap();
        assert_eq!(written, 2);

        let mut fresh = vec![MemoryStore::new(0, 2), MemoryStore::new(1, 2)];
        let report = import_log(&mut fresh, &path).unwrap();
        assert_eq!(report.accepted, vec![1, 1]);
        assert!(report.rejected.is_empty());
        assert_eq!(fresh[0].records(), stores[0].records());
        assert_eq!(fresh[1].records(), stores[1].records());
    }

    #[test]
    fn import_keeps_valid_lines_and_reports_bad_ones() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let good = r#"{"stage":0,"episode":1,"period":1,"state_vec":[1.0,2.0],"action":3,"reward":-1.0,"source":"live"}"#;
        let bad_json = "{not json";
        let bad_dim = r#"{"stage":0,"episode":1,"period":2,"state_vec":[1.0],"action":3,"reward":-1.0,"source":"live"}"#;
        let bad_stage = r#"{"stage":9,"episode":1,"period":3,"state_vec":[1.0,2.0],"action":3,"reward":-1.0,"source":"rl_log"}"#;
        std::fs::write(&path, format!("{good}\n{bad_json}\n{bad_dim}\n{bad_stage}\n{good}\n")).unwrap();

        let mut stores = vec![MemoryStore::new(0, 2)];
        let report = import_log(&mut stores, &path).unwrap();
        assert_eq!(report.accepted, vec![2]);
        assert_eq!(
            report.rejected.iter().map(|r| r.line).collect::<Vec<_>>(),
            vec![2, 3, 4]
        );
        assert_eq!(stores[0].len(), 2);
    }

    #[test]
    fn import_missing_file_is_an_error() {
        let mut stores = vec![MemoryStore::new(0, 2)];
        assert!(matches!(import_log(&mut stores, "/nonexistent/log.jsonl"), Err(Error::Io { .. })));
    }
}
