//! Machine-readable outputs of `organise` and `eval`.
//!
//! Every JSON report carries `schema_version`; readers reject any other
//! version. Offsets follow the graph convention: for an edge `a,b` with `a`
//! inserted first, `offset_s = position(b) - position(a)`.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::filtering::Reason;
use crate::pipeline::Error;

pub const SCHEMA_VERSION: u32 = 1;

pub const CLUSTERS_FILE: &str = "clusters.json";
pub const RANKINGS_FILE: &str = "rankings.json";
pub const RANKINGS_CSV_FILE: &str = "rankings.csv";
pub const GRAPH_FILE: &str = "graph.csv";
pub const DECISIONS_FILE: &str = "filter_decisions.json";
pub const EVAL_FILE: &str = "eval.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMember {
    pub sample_id: String,
    pub timeline_position_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterEntry {
    pub cluster: usize,
    pub members: Vec<ClusterMember>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub schema_version: u32,
    pub filtered: bool,
    pub frame_duration_s: f64,
    pub clusters: Vec<ClusterEntry>,
    pub unmatched: Vec<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingEntry {
    pub sample_id: String,
    pub proposed_score: u64,
    pub rank_proposed: usize,
    pub proposed_tied: bool,
    pub km_score: usize,
    pub km_rank_lo: usize,
    pub km_rank_hi: usize,
    /// Present when a ground-truth manifest was supplied.
    pub is_reference: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRanking {
    pub cluster: usize,
    pub entries: Vec<RankingEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub schema_version: u32,
    pub clusters: Vec<ClusterRanking>,
}

impl RankingReport {
    /// CSV mirror, one row per clip, in report order.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "cluster,sample_id,proposed_score,rank_proposed,proposed_tied,km_score,km_rank_lo,km_rank_hi,is_reference\n",
        );
        for c in &self.clusters {
            for e in &c.entries {
                let is_ref = e.is_reference.map(|b| b.to_string()).unwrap_or_default();
                s.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    c.cluster,
                    e.sample_id,
                    e.proposed_score,
                    e.rank_proposed,
                    e.proposed_tied,
                    e.km_score,
                    e.km_rank_lo,
                    e.km_rank_hi,
                    is_ref
                ));
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionEntry {
    pub candidate_id: String,
    pub l: u32,
    pub t: usize,
    pub p: f64,
    pub offset_frames: i64,
    pub offset_s: f64,
    pub accepted: bool,
    pub reason: Reason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryDecisions {
    pub query_id: String,
    pub decisions: Vec<DecisionEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionReport {
    pub schema_version: u32,
    pub filtered: bool,
    pub t_l: u32,
    pub t_d: f64,
    pub queries: Vec<QueryDecisions>,
}

/// Anything carrying a schema version.
pub trait Versioned {
    fn schema_version(&self) -> u32;
}

macro_rules! versioned {
    ($($t:ty),*) => {
        $(impl Versioned for $t {
            fn schema_version(&self) -> u32 {
                self.schema_version
            }
        })*
    };
}
versioned!(ClusterReport, RankingReport, DecisionReport, crate::eval::EvalReport);

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Read a report and check its schema version.
pub fn read_report<T: DeserializeOwned + Versioned>(path: &Path) -> Result<T, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: T = serde_json::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    if value.schema_version() != SCHEMA_VERSION {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            found: value.schema_version(),
            expected: SCHEMA_VERSION,
        });
    }
    Ok(value)
}
