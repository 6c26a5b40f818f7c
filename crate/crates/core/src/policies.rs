//! Dispatch decisions: round-robin VM selection, non-preemptive
//! shortest-job-first, and wait-versus-hop migration.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::engine::SimTime;
use crate::model::{Datacenter, JobId, VmId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("datacenter has no VMs")]
    EmptyDatacenter,
    #[error("ready queue is empty")]
    EmptyQueue,
    #[error("duplicate job id {0}")]
    DuplicateJobId(JobId),
    #[error("unknown VM {0}")]
    UnknownVm(VmId),
    #[error("job {job} is not queued on VM {vm}")]
    NotQueued { job: JobId, vm: VmId },
    #[error("invalid hop time {0}")]
    InvalidHop(f64),
}

/// Round-robin wheel position for one datacenter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RrState {
    pub pointer: usize,
}

/// Next VM in cyclic order, regardless of load.
pub fn rr_next_vm(state: &mut RrState, dc: &Datacenter) -> Result<VmId, PolicyError> {
    let n = dc.vms.len();
    if n == 0 {
        return Err(PolicyError::EmptyDatacenter);
    }
    let idx = state.pointer % n;
    state.pointer = (idx + 1) % n;
    Ok(dc.vms[idx].id)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct ReadyKey {
    burst: SimTime,
    arrival: SimTime,
    id: JobId,
}

/// Jobs waiting for any server, ordered by (burst, arrival, id).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReadyQueue {
    order: BTreeSet<ReadyKey>,
    keys: HashMap<JobId, ReadyKey>,
}

impl ReadyQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, id: JobId, arrival: SimTime, burst_ms: f64) -> Result<(), PolicyError> {
        if self.keys.contains_key(&id) {
            return Err(PolicyError::DuplicateJobId(id));
        }
        let key = ReadyKey {
            burst: SimTime::from_ms(burst_ms),
            arrival,
            id,
        };
        self.order.insert(key);
        self.keys.insert(id, key);
        Ok(())
    }

    pub fn remove(&mut self, id: JobId) -> bool {
        match self.keys.remove(&id) {
            Some(key) => self.order.remove(&key),
            None => false,
        }
    }

    pub fn contains(&self, id: JobId) -> bool {
        self.keys.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Entries in selection order as `(id, arrival, burst_ms)`.
    pub fn iter(&self) -> impl Iterator<Item = (JobId, SimTime, f64)> + '_ {
        self.order.iter().map(|k| (k.id, k.arrival, k.burst.as_ms()))
    }
}

/// Shortest burst among jobs that have arrived by `now`; ties go to the
/// earlier arrival, then the smaller id.
pub fn sjf_select(rq: &ReadyQueue, now: SimTime) -> Result<JobId, PolicyError> {
    rq.order
        .iter()
        .find(|k| k.arrival <= now)
        .map(|k| k.id)
        .ok_or(PolicyError::EmptyQueue)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SjfJob {
    pub id: JobId,
    pub arrival: f64,
    pub burst: f64,
}

impl SjfJob {
    pub fn new(id: u64, arrival: f64, burst: f64) -> Self {
        SjfJob {
            id: JobId(id),
            arrival,
            burst,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScheduledJob {
    pub id: JobId,
    pub arrival: f64,
    pub burst: f64,
    pub start: f64,
    pub wait: f64,
}

/// A single-server non-preemptive schedule, in service order.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Schedule {
    pub entries: Vec<ScheduledJob>,
}

impl Schedule {
    pub fn order(&self) -> Vec<JobId> {
        self.entries.iter().map(|e| e.id).collect()
    }

    pub fn wait(&self, id: JobId) -> Option<f64> {
        self.entries.iter().find(|e| e.id == id).map(|e| e.wait)
    }

    pub fn makespan(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.start + e.burst)
    }

    /// Time the server sat idle between the first arrival and the makespan.
    pub fn idle_time(&self) -> f64 {
        let first = self.entries.iter().map(|e| e.arrival).fold(f64::INFINITY, f64::min);
        if !first.is_finite() {
            return 0.0;
        }
        let busy: f64 = self.entries.iter().map(|e| e.burst).sum();
        self.makespan() - first - busy
    }

    pub fn mean_wait(&self) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        self.entries.iter().map(|e| e.wait).sum::<f64>() / self.entries.len() as f64
    }
}

/// Work-conserving non-preemptive SJF on one server.
pub fn sjf_schedule(jobs: &[SjfJob]) -> Result<Schedule, PolicyError> {
    let mut pending: Vec<SjfJob> = jobs.to_vec();
    pending.sort_by(|a, b| a.arrival.total_cmp(&b.arrival).then(a.id.cmp(&b.id)));
    let by_id: HashMap<JobId, SjfJob> = {
        let mut m = HashMap::with_capacity(jobs.len());
        for j in jobs {
            if m.insert(j.id, *j).is_some() {
                return Err(PolicyError::DuplicateJobId(j.id));
            }
        }
        m
    };

    let mut ready = ReadyQueue::new();
    let mut next = 0;
    let mut clock = pending.first().map_or(0.0, |j| j.arrival);
    let mut entries = Vec::with_capacity(jobs.len());

    while entries.len() < jobs.len() {
        while next < pending.len() && pending[next].arrival <= clock {
            let j = pending[next];
            ready.push(j.id, SimTime::from_ms(j.arrival), j.burst)?;
            next += 1;
        }
        if ready.is_empty() {
            clock = pending[next].arrival;
            continue;
        }
        let id = sjf_select(&ready, SimTime::from_ms(clock))?;
        ready.remove(id);
        let j = by_id[&id];
        entries.push(ScheduledJob {
            id,
            arrival: j.arrival,
            burst: j.burst,
            start: clock,
            wait: clock - j.arrival,
        });
        clock += j.burst;
    }
    Ok(Schedule { entries })
}

/// Cost of moving a queued job between VMs of one datacenter.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HopTable {
    default_ms: f64,
    overrides: BTreeMap<(usize, usize), f64>,
}

impl HopTable {
    /// Every off-diagonal pair costs `default_ms`.
    pub fn uniform(default_ms: f64) -> Result<Self, PolicyError> {
        if !(default_ms >= 0.0 && default_ms.is_finite()) {
            return Err(PolicyError::InvalidHop(default_ms));
        }
        Ok(HopTable {
            default_ms,
            overrides: BTreeMap::new(),
        })
    }

    pub fn set(&mut self, from: VmId, to: VmId, ms: f64) -> Result<(), PolicyError> {
        if !(ms >= 0.0 && ms.is_finite()) {
            return Err(PolicyError::InvalidHop(ms));
        }
        if from != to {
            self.overrides.insert((from.0, to.0), ms);
        }
        Ok(())
    }

    pub fn hop(&self, from: VmId, to: VmId) -> f64 {
        if from == to {
            return 0.0;
        }
        self.overrides.get(&(from.0, to.0)).copied().unwrap_or(self.default_ms)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum MigrationDecision {
    Stay,
    /// `stay_wait` is the predicted wait on the current VM, `move_wait` the
    /// predicted wait on `target` including the hop.
    Migrate { target: VmId, stay_wait: f64, move_wait: f64 },
}

fn mean_queue_len(dc: &Datacenter) -> f64 {
    if dc.vms.is_empty() {
        return 0.0;
    }
    dc.vms.iter().map(|v| v.queue.len()).sum::<usize>() as f64 / dc.vms.len() as f64
}

/// VMs whose run queue is strictly shorter than the datacenter mean.
pub fn underutilized_vms(dc: &Datacenter) -> Vec<VmId> {
    let mean = mean_queue_len(dc);
    dc.vms.iter().filter(|v| (v.queue.len() as f64) < mean).map(|v| v.id).collect()
}

/// VMs whose run queue is strictly longer than the datacenter mean.
pub fn overloaded_vms(dc: &Datacenter) -> Vec<VmId> {
    let mean = mean_queue_len(dc);
    dc.vms.iter().filter(|v| (v.queue.len() as f64) > mean).map(|v| v.id).collect()
}

/// Move `job` off `current` only if some candidate's predicted wait plus the
/// hop is strictly smaller than its wait where it is.
pub fn migration_decision(
    job: JobId,
    current: VmId,
    candidates: &[VmId],
    now: SimTime,
    dc: &Datacenter,
    hops: &HopTable,
) -> Result<MigrationDecision, PolicyError> {
    let vm = dc.vms.get(current.0).ok_or(PolicyError::UnknownVm(current))?;
    let stay_wait = vm.wait_of(job, now).ok_or(PolicyError::NotQueued { job, vm: current })?;

    let mut best: Option<(f64, VmId)> = None;
    for &cand in candidates {
        let target = dc.vms.get(cand.0).ok_or(PolicyError::UnknownVm(cand))?;
        if cand == current {
            continue;
        }
        let move_wait = target.expected_wait(now) + hops.hop(current, cand);
        let better = match best {
            None => true,
            Some((w, id)) => move_wait < w || (move_wait == w && cand < id),
        };
        if better {
            best = Some((move_wait, cand));
        }
    }

    Ok(match best {
        Some((move_wait, target)) if move_wait < stay_wait => MigrationDecision::Migrate {
            target,
            stay_wait,
            move_wait,
        },
        _ => MigrationDecision::Stay,
    })
}
