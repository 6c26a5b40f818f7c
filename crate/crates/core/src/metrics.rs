//! Per-job traces and the aggregates reported from them: response and
//! processing time statistics, rejection percentage and starvation.

use serde::Serialize;
use thiserror::Error;

use crate::engine::{SimTime, TraceEntry};
use crate::model::{JobId, RejectReason, VmId};
use crate::scenario::TimeUnit;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no samples to summarize")]
    EmptyInput,
    #[error("job {0} never started")]
    NeverStarted(JobId),
    #[error("no jobs were submitted")]
    NoSubmissions,
    #[error("{rejected} rejected out of {submitted} submitted")]
    InvalidCounts { submitted: u64, rejected: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TerminalState {
    Completed,
    Rejected,
}

impl TerminalState {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminalState::Completed => "completed",
            TerminalState::Rejected => "rejected",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JobTrace {
    pub id: JobId,
    /// User base that emitted the job; `None` for explicitly listed jobs.
    pub origin: Option<String>,
    pub datacenter: String,
    pub arrival: SimTime,
    pub start: Option<SimTime>,
    pub finish: Option<SimTime>,
    pub rejected_at: Option<SimTime>,
    pub reject_reason: Option<RejectReason>,
    /// VMs the job was queued on, ending with the one that ran it. Empty
    /// unless the job started.
    pub vm_history: Vec<VmId>,
    pub state: TerminalState,
    pub requests: u64,
    /// Service duration on the VM that ran it.
    pub service_ms: Option<f64>,
    pub transfer_ms: f64,
}

impl JobTrace {
    pub fn migrations(&self) -> usize {
        self.vm_history.len().saturating_sub(1)
    }

    /// Completion minus arrival, plus data transfer.
    pub fn network_response_time(&self) -> Option<f64> {
        self.finish.map(|f| f.since(self.arrival) + self.transfer_ms)
    }

    /// Service time attributed to each request in the job.
    pub fn dc_processing_time(&self) -> Option<f64> {
        match (self.state, self.service_ms) {
            (TerminalState::Completed, Some(s)) => Some(s / self.requests.max(1) as f64),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StatSummary {
    pub avg: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

pub fn summarize(samples: &[f64]) -> Result<StatSummary, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    // Neumaier summation keeps the mean exact for the sample sizes we see.
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &x in samples {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
        min = min.min(x);
        max = max.max(x);
    }
    let avg = ((sum + comp) / samples.len() as f64).clamp(min, max);
    Ok(StatSummary {
        avg,
        min,
        max,
        count: samples.len(),
    })
}

/// Start minus arrival.
pub fn queue_wait(trace: &JobTrace) -> Result<f64, MetricsError> {
    trace
        .start
        .map(|s| s.since(trace.arrival))
        .ok_or(MetricsError::NeverStarted(trace.id))
}

/// `100 * rejected / submitted`, rounded half up.
pub fn rejection_percentage(submitted: u64, rejected: u64) -> Result<u64, MetricsError> {
    if submitted == 0 {
        return Err(MetricsError::NoSubmissions);
    }
    if rejected > submitted {
        return Err(MetricsError::InvalidCounts { submitted, rejected });
    }
    Ok((200 * rejected + submitted) / (2 * submitted))
}

/// Jobs that waited at least `threshold` ms, plus every job rejected by
/// deadline expiry, longest wait first.
pub fn starvation_report(traces: &[JobTrace], threshold: f64) -> Vec<(JobId, f64)> {
    debug_assert!(threshold > 0.0);
    let mut out: Vec<(JobId, f64)> = traces
        .iter()
        .filter_map(|t| {
            if t.reject_reason == Some(RejectReason::DeadlineExpired) {
                return t.rejected_at.map(|r| (t.id, r.since(t.arrival)));
            }
            let w = queue_wait(t).ok()?;
            (w >= threshold).then_some((t.id, w))
        })
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MigrationRecord {
    pub job: JobId,
    pub datacenter: String,
    pub from: VmId,
    pub to: VmId,
    pub at: SimTime,
    pub stay_wait: f64,
    pub move_wait: f64,
}

/// Everything a run produces. Durations are in ms; `time_unit` is the unit
/// the scenario was written in and is used when reporting.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunMetrics {
    pub scenario: String,
    pub time_unit: TimeUnit,
    pub submitted: u64,
    pub completed: u64,
    pub rejected: u64,
    /// Sorted by job id.
    pub traces: Vec<JobTrace>,
    pub service_order: Vec<JobId>,
    pub migrations: Vec<MigrationRecord>,
    pub events_processed: u64,
    pub event_trace: Option<Vec<TraceEntry>>,
}

/// Rows of the summary table, in reporting order.
pub const SUMMARY_METRICS: [&str; 3] = ["response_time", "queue_wait", "dc_processing_time"];

impl RunMetrics {
    pub fn empty(scenario: impl Into<String>, time_unit: TimeUnit) -> Self {
        RunMetrics {
            scenario: scenario.into(),
            time_unit,
            submitted: 0,
            completed: 0,
            rejected: 0,
            traces: Vec::new(),
            service_order: Vec::new(),
            migrations: Vec::new(),
            events_processed: 0,
            event_trace: None,
        }
    }

    pub fn rejection_percentage(&self) -> Option<u64> {
        rejection_percentage(self.submitted, self.rejected).ok()
    }

    pub fn samples(&self, metric: &str) -> Vec<f64> {
        let f: fn(&JobTrace) -> Option<f64> = match metric {
            "response_time" => JobTrace::network_response_time,
            "queue_wait" => |t| queue_wait(t).ok(),
            "dc_processing_time" => JobTrace::dc_processing_time,
            _ => return Vec::new(),
        };
        self.traces.iter().filter_map(f).collect()
    }

    /// Summaries for every metric that has at least one sample.
    pub fn summaries(&self) -> Vec<(&'static str, StatSummary)> {
        SUMMARY_METRICS
            .iter()
            .filter_map(|m| summarize(&self.samples(m)).ok().map(|s| (*m, s)))
            .collect()
    }

    pub fn trace(&self, id: JobId) -> Option<&JobTrace> {
        self.traces
            .binary_search_by_key(&id, |t| t.id)
            .ok()
            .map(|i| &self.traces[i])
    }
}
