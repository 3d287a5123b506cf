//! JSON run reports.

use serde::{Deserialize, Serialize};
use simdps_core::baselines::GapMetrics;
use simdps_core::diffusion::StepRecord;
use simdps_core::simsearch::CandidateMatch;

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSummary {
    pub sample_rate: u32,
    pub samples: usize,
    /// Excerpt start within the input, in working-rate samples.
    pub excerpt_offset: usize,
    pub gap_start: usize,
    /// Last missing sample (inclusive).
    pub gap_end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub source_id: usize,
    /// Coarse start at the search rate.
    pub coarse_start: i64,
    /// Boundary refinement at the search rate.
    pub offset: i64,
    /// Final start in the source at the working rate.
    pub start: i64,
    pub cost: f64,
}

impl From<&CandidateMatch> for SearchSummary {
    fn from(m: &CandidateMatch) -> Self {
        Self {
            source_id: m.source_id,
            coarse_start: m.coarse_start,
            offset: m.offset,
            start: m.start,
            cost: m.cost,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub search_ms: f64,
    pub method_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    /// The resolved configuration; re-running it reproduces the output.
    pub config: RunConfig,
    pub input: InputSummary,
    pub denoiser: Option<String>,
    pub search: Option<SearchSummary>,
    pub sigma_trace: Vec<StepRecord>,
    pub metrics: Option<GapMetrics>,
    /// Wall-clock timings; the only field that differs between repeated runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> simdps_core::Result<Self> {
        serde_json::from_str(text).map_err(|e| simdps_core::Error::Parameter(format!("report: {e}")))
    }

    pub fn without_timing(&self) -> Self {
        Self {
            timing: None,
            ..self.clone()
        }
    }
}
