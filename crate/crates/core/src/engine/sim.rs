use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::Serialize;

use super::{EngineError, EventCalendar, EventKind, SimTime};
use crate::metrics::{JobTrace, MigrationRecord, RunMetrics, TerminalState};
use crate::model::{
    admit, generate_batches, transfer_time, Admission, AdmissionPolicy, Datacenter, Job, JobId, JobState,
    QueuedJob, RejectReason, UserBase, VmId, VmInstance,
};
use crate::policies::{
    migration_decision, overloaded_vms, rr_next_vm, sjf_select, underutilized_vms, HopTable, MigrationDecision,
    RrState,
};
use crate::scenario::{ScenarioConfig, Scheduler};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Keep every popped event in `RunMetrics::event_trace`.
    pub record_trace: bool,
    /// Replace the scenario's traffic volume with exactly this many jobs.
    pub submitted: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceEntry {
    pub at: SimTime,
    pub seq: u64,
    pub kind: EventKind,
}

pub fn run(cfg: &ScenarioConfig) -> Result<RunMetrics, EngineError> {
    run_with(cfg, RunOptions::default())
}

/// One sweep point: the scenario's traffic mix scaled to `submitted` jobs.
pub fn run_level(cfg: &ScenarioConfig, submitted: u64) -> Result<RunMetrics, EngineError> {
    run_with(
        cfg,
        RunOptions {
            submitted: Some(submitted),
            ..RunOptions::default()
        },
    )
}

/// Independent runs, one per level, evaluated in parallel and returned in level order.
pub fn run_sweep(cfg: &ScenarioConfig, levels: &[u64]) -> Result<Vec<RunMetrics>, EngineError> {
    levels.par_iter().map(|&n| run_level(cfg, n)).collect()
}

pub fn run_with(cfg: &ScenarioConfig, opts: RunOptions) -> Result<RunMetrics, EngineError> {
    let workload = build_workload(cfg, opts.submitted)?;
    let mut sim = Sim::new(cfg, workload, opts.record_trace)?;
    sim.run()?;
    Ok(sim.into_metrics(cfg))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn user_bases(cfg: &ScenarioConfig) -> Vec<UserBase> {
    cfg.user_bases
        .iter()
        .map(|u| UserBase {
            id: u.id.clone(),
            requests_per_user_per_hour: u.requests_per_user_per_hour,
            data_size_per_request: u.data_size_per_request,
            target_dc: u.datacenter.clone(),
            user_grouping: cfg.advanced.user_grouping,
            request_grouping: cfg.advanced.request_grouping,
            instruction_length: u.instruction_length.unwrap_or(cfg.advanced.instruction_length),
        })
        .collect()
}

/// Split `total` across weights by largest remainder; ties go to the lower index.
fn apportion(total: u64, weights: &[u64]) -> Vec<u64> {
    let sum: u128 = weights.iter().map(|&w| w as u128).sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let mut shares: Vec<u64> = Vec::with_capacity(weights.len());
    let mut rems: Vec<(u128, usize)> = Vec::with_capacity(weights.len());
    for (i, &w) in weights.iter().enumerate() {
        let q = total as u128 * w as u128;
        shares.push((q / sum) as u64);
        rems.push((q % sum, i));
    }
    let left = total - shares.iter().sum::<u64>();
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in rems.iter().take(left as usize) {
        shares[i] += 1;
    }
    shares
}

fn build_workload(cfg: &ScenarioConfig, submitted: Option<u64>) -> Result<Vec<(Job, usize)>, EngineError> {
    let mut out = Vec::new();
    let mut next_id = 1;
    if let Some(spec) = &cfg.jobs {
        let dc = cfg.datacenter_index(&spec.datacenter).expect("validated");
        for j in &spec.jobs {
            out.push((Job::with_burst(j.id, SimTime::from_ms(j.arrival_ms), j.burst_ms), dc));
            next_id = next_id.max(j.id + 1);
        }
    }

    let ubs = user_bases(cfg);
    let horizon = SimTime::from_ms(cfg.horizon_ms);
    let volumes: Vec<u64> = match submitted {
        None => ubs.iter().map(|u| u.nominal_requests(horizon)).collect(),
        Some(n) => {
            if ubs.is_empty() {
                return Err(EngineError::NoTraffic);
            }
            let weights: Vec<u64> = ubs.iter().map(|u| u.nominal_batches(horizon)).collect();
            apportion(n, &weights)
                .into_iter()
                .zip(&ubs)
                .map(|(batches, u)| batches * u.request_grouping)
                .collect()
        }
    };

    let mut generated = Vec::new();
    for (i, (ub, requests)) in ubs.iter().zip(volumes).enumerate() {
        let dc = cfg.datacenter_index(&ub.target_dc).expect("validated");
        let seed = splitmix64(cfg.seed ^ splitmix64(i as u64));
        for job in generate_batches(ub, horizon, seed, requests) {
            generated.push((job, dc, i));
        }
    }
    generated.sort_by(|a, b| a.0.arrival.cmp(&b.0.arrival).then(a.2.cmp(&b.2)).then(a.0.id.cmp(&b.0.id)));
    for (mut job, dc, _) in generated {
        job.id = JobId(next_id);
        next_id += 1;
        out.push((job, dc));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Location {
    Nowhere,
    Vm(VmId),
    Pool,
}

struct Slot {
    job: Job,
    dc: usize,
    location: Location,
    placements: Vec<VmId>,
    migrations: u32,
    deadline: Option<SimTime>,
    rejected_at: Option<SimTime>,
    reason: Option<RejectReason>,
    service_ms: Option<f64>,
}

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    cal: EventCalendar,
    dcs: Vec<Datacenter>,
    rr: Vec<RrState>,
    hops: Vec<HopTable>,
    slots: Vec<Slot>,
    index: HashMap<JobId, usize>,
    unfinished: usize,
    tick_pending: bool,
    service_order: Vec<JobId>,
    migrations: Vec<MigrationRecord>,
    trace: Option<Vec<TraceEntry>>,
    events: u64,
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a ScenarioConfig, workload: Vec<(Job, usize)>, record_trace: bool) -> Result<Self, EngineError> {
        let mut dcs = Vec::with_capacity(cfg.datacenters.len());
        let mut hops = Vec::with_capacity(cfg.datacenters.len());
        for spec in &cfg.datacenters {
            let bw = cfg.bandwidth_unit.bytes_per_ms(spec.bandwidth);
            let vms = (0..spec.vms)
                .map(|i| VmInstance::new(VmId(i), spec.rate, spec.memory, bw))
                .collect::<Result<Vec<_>, _>>()?;
            dcs.push(Datacenter::new(spec.id.clone(), vms, cfg.policy.admission));
            let mut table = HopTable::uniform(cfg.policy.hop_time_ms)?;
            for h in cfg.hops.iter().filter(|h| h.datacenter == spec.id) {
                table.set(VmId(h.from), VmId(h.to), h.ms)?;
            }
            hops.push(table);
        }

        let mut slots: Vec<Slot> = workload
            .into_iter()
            .map(|(job, dc)| Slot {
                job,
                dc,
                location: Location::Nowhere,
                placements: Vec::new(),
                migrations: 0,
                deadline: None,
                rejected_at: None,
                reason: None,
                service_ms: None,
            })
            .collect();
        slots.sort_by(|a, b| a.job.arrival.cmp(&b.job.arrival).then(a.job.id.cmp(&b.job.id)));
        let index = slots.iter().enumerate().map(|(i, s)| (s.job.id, i)).collect();

        let mut cal = EventCalendar::new();
        for s in &slots {
            cal.schedule(s.job.arrival, EventKind::JobArrival { job: s.job.id })?;
        }

        Ok(Sim {
            cfg,
            cal,
            rr: vec![RrState::default(); dcs.len()],
            dcs,
            hops,
            unfinished: slots.len(),
            slots,
            index,
            tick_pending: false,
            service_order: Vec::new(),
            migrations: Vec::new(),
            trace: record_trace.then(Vec::new),
            events: 0,
        })
    }

    fn migration_enabled(&self) -> bool {
        self.cfg.policy.migration && self.cfg.policy.scheduler == Scheduler::RoundRobin
    }

    fn run(&mut self) -> Result<(), EngineError> {
        let cap = self.cfg.policy.max_events;
        while let Some(ev) = self.cal.pop() {
            self.events += 1;
            if self.events > cap {
                return Err(EngineError::HorizonExceeded { cap });
            }
            if let Some(t) = self.trace.as_mut() {
                t.push(TraceEntry {
                    at: ev.fire_at,
                    seq: ev.seq,
                    kind: ev.kind.clone(),
                });
            }
            let now = ev.fire_at;
            match ev.kind {
                EventKind::JobArrival { job } => self.on_arrival(job, now)?,
                EventKind::JobStart { dc, vm } => self.on_start(dc, vm, now)?,
                EventKind::JobFinish { dc, vm, job } => self.on_finish(dc, vm, job, now)?,
                EventKind::MigrationCheck { dc } => self.on_check(dc, now)?,
                EventKind::DeadlineExpiry { job } => self.on_expiry(job, now),
            }
        }
        if self.unfinished > 0 {
            return Err(EngineError::Unfinished(self.unfinished));
        }
        Ok(())
    }

    fn slot_of(&self, job: JobId) -> usize {
        self.index[&job]
    }

    fn request_start(&mut self, dc: usize, vm: VmId, at: SimTime) -> Result<(), EngineError> {
        let v = &mut self.dcs[dc].vms[vm.0];
        if v.is_idle() && !v.start_pending {
            v.start_pending = true;
            self.cal.schedule(at, EventKind::JobStart { dc, vm })?;
        }
        Ok(())
    }

    fn ensure_tick(&mut self, now: SimTime) -> Result<(), EngineError> {
        if self.migration_enabled() && !self.tick_pending {
            self.tick_pending = true;
            self.cal.schedule(
                now.after(self.cfg.policy.migration_interval_ms),
                EventKind::MigrationCheck { dc: None },
            )?;
        }
        Ok(())
    }

    fn reject(&mut self, idx: usize, reason: RejectReason, at: SimTime) {
        let s = &mut self.slots[idx];
        s.job.state = JobState::Rejected;
        s.location = Location::Nowhere;
        s.rejected_at = Some(at);
        s.reason = Some(reason);
        self.unfinished -= 1;
    }

    fn on_arrival(&mut self, job: JobId, now: SimTime) -> Result<(), EngineError> {
        let idx = self.slot_of(job);
        let d = self.slots[idx].dc;
        match admit(&self.slots[idx].job, &self.dcs[d], now) {
            Admission::Rejected(reason) => {
                self.reject(idx, reason, now);
                Ok(())
            }
            Admission::Admitted { expires_at } => {
                if let Some(t) = expires_at {
                    self.slots[idx].deadline = Some(t);
                    self.cal.schedule(t, EventKind::DeadlineExpiry { job })?;
                }
                self.dispatch(idx, now)
            }
        }
    }

    fn dispatch(&mut self, idx: usize, now: SimTime) -> Result<(), EngineError> {
        let d = self.slots[idx].dc;
        let (id, arrival, work) = {
            let j = &self.slots[idx].job;
            (j.id, j.arrival, j.work)
        };
        match self.cfg.policy.scheduler {
            Scheduler::RoundRobin => {
                let dc = &self.dcs[d];
                let mut vm = rr_next_vm(&mut self.rr[d], dc)?;
                if let AdmissionPolicy::QueueCap { capacity } = dc.admission {
                    // Admission guarantees at least one VM has room.
                    while dc.vms[vm.0].queue.len() >= capacity {
                        vm = rr_next_vm(&mut self.rr[d], dc)?;
                    }
                }
                self.dcs[d].vms[vm.0].queue.push_back(QueuedJob {
                    job: id,
                    arrival,
                    work,
                    available_at: now,
                });
                let s = &mut self.slots[idx];
                s.location = Location::Vm(vm);
                s.placements.push(vm);
                if self.dcs[d].vms[vm.0].is_idle() {
                    self.request_start(d, vm, now)
                } else {
                    self.ensure_tick(now)
                }
            }
            Scheduler::ShortestJobFirst => {
                let dc = &mut self.dcs[d];
                let burst = dc.vms[0].service_time(work);
                dc.ready.push(id, arrival, burst)?;
                self.slots[idx].location = Location::Pool;
                if let Some(vm) = dc.vms.iter().find(|v| v.is_idle() && !v.start_pending).map(|v| v.id) {
                    self.request_start(d, vm, now)?;
                }
                Ok(())
            }
        }
    }

    fn on_start(&mut self, d: usize, vm: VmId, now: SimTime) -> Result<(), EngineError> {
        self.dcs[d].vms[vm.0].start_pending = false;
        if !self.dcs[d].vms[vm.0].is_idle() {
            return Ok(());
        }
        loop {
            let next = match self.cfg.policy.scheduler {
                Scheduler::RoundRobin => {
                    let v = &mut self.dcs[d].vms[vm.0];
                    let Some(head) = v.queue.front() else {
                        return Ok(());
                    };
                    if head.available_at > now {
                        let at = head.available_at;
                        return self.request_start(d, vm, at);
                    }
                    v.queue.pop_front().map(|q| q.job).expect("non-empty")
                }
                Scheduler::ShortestJobFirst => {
                    let dc = &mut self.dcs[d];
                    let Ok(id) = sjf_select(&dc.ready, now) else {
                        return Ok(());
                    };
                    dc.ready.remove(id);
                    id
                }
            };
            let idx = self.slot_of(next);
            match self.slots[idx].deadline {
                // Expiry wins ties: a job may only start strictly before its deadline.
                Some(t) if now >= t => self.reject(idx, RejectReason::DeadlineExpired, t),
                _ => return self.start(idx, d, vm, now),
            }
        }
    }

    fn start(&mut self, idx: usize, d: usize, vm: VmId, now: SimTime) -> Result<(), EngineError> {
        let v = &mut self.dcs[d].vms[vm.0];
        let s = &mut self.slots[idx];
        let service = v.service_time(s.job.work);
        v.running = Some(s.job.id);
        v.busy_until = now.after(service);
        s.job.state = JobState::Running;
        s.job.start_time = Some(now);
        s.service_ms = Some(service);
        s.location = Location::Nowhere;
        if s.placements.last() != Some(&vm) {
            s.placements.push(vm);
        }
        self.service_order.push(s.job.id);
        let job = s.job.id;
        let finish = v.busy_until;
        self.cal.schedule(finish, EventKind::JobFinish { dc: d, vm, job })?;
        Ok(())
    }

    fn on_finish(&mut self, d: usize, vm: VmId, job: JobId, now: SimTime) -> Result<(), EngineError> {
        let idx = self.slot_of(job);
        let s = &mut self.slots[idx];
        s.job.state = JobState::Completed;
        s.job.finish_time = Some(now);
        self.unfinished -= 1;
        self.dcs[d].vms[vm.0].running = None;
        if self.migration_enabled() {
            self.cal.schedule(now, EventKind::MigrationCheck { dc: Some(d) })?;
        }
        self.request_start(d, vm, now)
    }

    fn on_expiry(&mut self, job: JobId, now: SimTime) {
        let idx = self.slot_of(job);
        if self.slots[idx].job.state != JobState::Queued {
            return;
        }
        let d = self.slots[idx].dc;
        match self.slots[idx].location {
            Location::Vm(vm) => {
                self.dcs[d].vms[vm.0].remove_queued(job);
            }
            Location::Pool => {
                self.dcs[d].ready.remove(job);
            }
            Location::Nowhere => {}
        }
        self.reject(idx, RejectReason::DeadlineExpired, now);
    }

    fn on_check(&mut self, dc: Option<usize>, now: SimTime) -> Result<(), EngineError> {
        if !self.migration_enabled() {
            return Ok(());
        }
        match dc {
            Some(d) => self.rebalance(d, now),
            None => {
                self.tick_pending = false;
                for d in 0..self.dcs.len() {
                    self.rebalance(d, now)?;
                }
                let waiting = self.dcs.iter().any(|dc| dc.vms.iter().any(|v| !v.queue.is_empty()));
                if waiting {
                    self.ensure_tick(now)?;
                }
                Ok(())
            }
        }
    }

    /// One migration pass over a datacenter: from each overloaded VM, move
    /// queued jobs from the tail while the wait/hop rule says so.
    fn rebalance(&mut self, d: usize, now: SimTime) -> Result<(), EngineError> {
        let cap = self.cfg.policy.migration_cap;
        let mut moved: HashSet<JobId> = HashSet::new();
        for src in overloaded_vms(&self.dcs[d]) {
            loop {
                let dc = &self.dcs[d];
                let mean = dc.vms.iter().map(|v| v.queue.len()).sum::<usize>() as f64 / dc.vms.len() as f64;
                if dc.vms[src.0].queue.len() as f64 <= mean {
                    break;
                }
                let pick = dc.vms[src.0].queue.iter().rev().find(|q| {
                    q.available_at <= now && !moved.contains(&q.job) && self.slots[self.index[&q.job]].migrations < cap
                });
                let Some(job) = pick.map(|q| q.job) else {
                    break;
                };
                let mut candidates = underutilized_vms(dc);
                if let AdmissionPolicy::QueueCap { capacity } = dc.admission {
                    candidates.retain(|v| dc.vms[v.0].queue.len() < capacity);
                }
                let decision = migration_decision(job, src, &candidates, now, dc, &self.hops[d])?;
                let MigrationDecision::Migrate {
                    target,
                    stay_wait,
                    move_wait,
                } = decision
                else {
                    // The candidate side of the rule does not depend on the job, and
                    // jobs further ahead wait less, so none of them would move either.
                    break;
                };
                let hop = self.hops[d].hop(src, target);
                let mut q = self.dcs[d].vms[src.0].remove_queued(job).expect("queued on source");
                q.available_at = now.after(hop);
                let ready_at = q.available_at;
                self.dcs[d].vms[target.0].queue.push_back(q);

                let idx = self.slot_of(job);
                let s = &mut self.slots[idx];
                s.location = Location::Vm(target);
                s.placements.push(target);
                s.migrations += 1;
                moved.insert(job);
                self.migrations.push(MigrationRecord {
                    job,
                    datacenter: self.dcs[d].id.clone(),
                    from: src,
                    to: target,
                    at: now,
                    stay_wait,
                    move_wait,
                });
                self.request_start(d, target, ready_at)?;
            }
        }
        Ok(())
    }

    fn into_metrics(self, cfg: &ScenarioConfig) -> RunMetrics {
        let mut traces: Vec<JobTrace> = self
            .slots
            .into_iter()
            .map(|s| {
                let dc = &self.dcs[s.dc];
                let started = s.job.start_time.is_some();
                JobTrace {
                    id: s.job.id,
                    origin: s.job.origin_ub.clone(),
                    datacenter: dc.id.clone(),
                    arrival: s.job.arrival,
                    start: s.job.start_time,
                    finish: s.job.finish_time,
                    rejected_at: s.rejected_at,
                    reject_reason: s.reason,
                    vm_history: if started { s.placements } else { Vec::new() },
                    state: if s.job.state == JobState::Completed {
                        TerminalState::Completed
                    } else {
                        TerminalState::Rejected
                    },
                    requests: s.job.requests,
                    service_ms: s.service_ms,
                    transfer_ms: transfer_time(s.job.data_size, dc.vms[0].bandwidth).unwrap_or(0.0),
                }
            })
            .collect();
        traces.sort_by_key(|t| t.id);
        let completed = traces.iter().filter(|t| t.state == TerminalState::Completed).count() as u64;
        let submitted = traces.len() as u64;
        RunMetrics {
            scenario: cfg.name.clone(),
            time_unit: cfg.time_unit,
            submitted,
            completed,
            rejected: submitted - completed,
            traces,
            service_order: self.service_order,
            migrations: self.migrations,
            events_processed: self.events,
            event_trace: self.trace,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apportion_by_largest_remainder() {
        assert_eq!(apportion(5, &[1, 1, 1, 1, 1]), vec![1, 1, 1, 1, 1]);
        assert_eq!(apportion(7, &[1, 1, 1, 1, 1]), vec![2, 2, 1, 1, 1]);
        assert_eq!(apportion(10, &[3, 1]), vec![8, 2]);
        assert_eq!(apportion(0, &[3, 1]), vec![0, 0]);
        assert_eq!(apportion(4, &[0, 0]), vec![0, 0]);
    }
}
