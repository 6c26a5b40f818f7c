//! Jobs, VMs, datacenters and user bases, plus the arithmetic that turns
//! configuration into service and transfer durations.

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{SimTime, MS_PER_HOUR};
use crate::policies::ReadyQueue;

/// Service rate assumed when a datacenter does not declare one, in instructions per ms.
pub const DEFAULT_VM_RATE: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("VM service rate must be positive")]
    ZeroRate,
    #[error("bandwidth must be positive")]
    ZeroBandwidth,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct JobId(pub u64);

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index of a VM inside its datacenter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct VmId(pub usize);

impl fmt::Display for VmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Service demand of a job.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Work {
    /// A fixed duration in ms, independent of the VM.
    Burst(f64),
    /// Instruction count, served at the VM's rate.
    Instructions(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum JobState {
    Queued,
    Running,
    Completed,
    Rejected,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Job {
    pub id: JobId,
    pub arrival: SimTime,
    pub work: Work,
    /// Bytes carried by the whole job.
    pub data_size: f64,
    /// Number of user requests folded into this job.
    pub requests: u64,
    pub origin_ub: Option<String>,
    pub state: JobState,
    pub start_time: Option<SimTime>,
    pub finish_time: Option<SimTime>,
}

impl Job {
    pub fn with_burst(id: u64, arrival: SimTime, burst_ms: f64) -> Self {
        Job {
            id: JobId(id),
            arrival,
            work: Work::Burst(burst_ms),
            data_size: 0.0,
            requests: 1,
            origin_ub: None,
            state: JobState::Queued,
            start_time: None,
            finish_time: None,
        }
    }
}

pub fn processing_time(instruction_length: f64, rate: f64) -> Result<f64, ModelError> {
    if rate.is_nan() || rate <= 0.0 {
        return Err(ModelError::ZeroRate);
    }
    Ok(instruction_length / rate)
}

pub fn transfer_time(data_size: f64, bandwidth: f64) -> Result<f64, ModelError> {
    if bandwidth.is_nan() || bandwidth <= 0.0 {
        return Err(ModelError::ZeroBandwidth);
    }
    Ok(data_size / bandwidth)
}

/// A job waiting in a VM's run queue.
#[derive(Clone, Debug, PartialEq)]
pub struct QueuedJob {
    pub job: JobId,
    pub arrival: SimTime,
    pub work: Work,
    /// Earliest instant the VM may start it; later than enqueue time only for
    /// jobs still in flight after a migration.
    pub available_at: SimTime,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VmInstance {
    pub id: VmId,
    /// Instructions per ms.
    pub rate: f64,
    pub memory_mb: f64,
    /// Bytes per ms.
    pub bandwidth: f64,
    pub queue: VecDeque<QueuedJob>,
    pub running: Option<JobId>,
    pub busy_until: SimTime,
    /// A `JobStart` for this VM is already on the calendar.
    pub start_pending: bool,
}

impl VmInstance {
    pub fn new(id: VmId, rate: f64, memory_mb: f64, bandwidth: f64) -> Result<Self, ModelError> {
        if rate.is_nan() || rate <= 0.0 {
            return Err(ModelError::ZeroRate);
        }
        if bandwidth.is_nan() || bandwidth <= 0.0 {
            return Err(ModelError::ZeroBandwidth);
        }
        Ok(VmInstance {
            id,
            rate,
            memory_mb,
            bandwidth,
            queue: VecDeque::new(),
            running: None,
            busy_until: SimTime::ZERO,
            start_pending: false,
        })
    }

    pub fn service_time(&self, work: Work) -> f64 {
        match work {
            Work::Burst(ms) => ms,
            Work::Instructions(n) => n / self.rate,
        }
    }

    pub fn is_idle(&self) -> bool {
        self.running.is_none()
    }

    /// Time left on the job in service.
    pub fn residual(&self, now: SimTime) -> f64 {
        if self.running.is_some() {
            self.busy_until.since(now)
        } else {
            0.0
        }
    }

    /// Predicted wait for a job appended to the tail of this queue now.
    pub fn expected_wait(&self, now: SimTime) -> f64 {
        self.residual(now) + self.queue.iter().map(|q| self.service_time(q.work)).sum::<f64>()
    }

    /// Predicted remaining wait of a queued job: residual of the running job
    /// plus service of everything ahead of it.
    pub fn wait_of(&self, job: JobId, now: SimTime) -> Option<f64> {
        let pos = self.queue.iter().position(|q| q.job == job)?;
        let ahead: f64 = self.queue.iter().take(pos).map(|q| self.service_time(q.work)).sum();
        Some(self.residual(now) + ahead)
    }

    pub fn remove_queued(&mut self, job: JobId) -> Option<QueuedJob> {
        let pos = self.queue.iter().position(|q| q.job == job)?;
        self.queue.remove(pos)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum AdmissionPolicy {
    /// Reject a job that has not started within `deadline_ms` of arriving.
    Deadline { deadline_ms: f64 },
    /// Reject on arrival when every VM already holds `capacity` waiting jobs.
    QueueCap { capacity: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum RejectReason {
    QueueFull,
    DeadlineExpired,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::QueueFull => "queue_full",
            RejectReason::DeadlineExpired => "deadline_expired",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Admission {
    /// `expires_at` is when a still-queued job must be rejected.
    Admitted { expires_at: Option<SimTime> },
    Rejected(RejectReason),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Datacenter {
    pub id: String,
    pub vms: Vec<VmInstance>,
    pub admission: AdmissionPolicy,
    /// Shared ready queue used by shortest-job-first dispatch.
    pub ready: ReadyQueue,
}

impl Datacenter {
    pub fn new(id: impl Into<String>, vms: Vec<VmInstance>, admission: AdmissionPolicy) -> Self {
        Datacenter {
            id: id.into(),
            vms,
            admission,
            ready: ReadyQueue::default(),
        }
    }

    /// Jobs admitted but not yet started, across VM queues and the shared queue.
    pub fn waiting(&self) -> usize {
        self.ready.len() + self.vms.iter().map(|v| v.queue.len()).sum::<usize>()
    }
}

/// Decide whether `job` may enter `dc` at `now`.
pub fn admit(job: &Job, dc: &Datacenter, now: SimTime) -> Admission {
    debug_assert_eq!(job.state, JobState::Queued);
    match dc.admission {
        AdmissionPolicy::Deadline { deadline_ms } => Admission::Admitted {
            expires_at: Some(now.after(deadline_ms)),
        },
        AdmissionPolicy::QueueCap { capacity } => {
            // Per-VM queues never exceed `capacity`, so a full total means every queue is full.
            if dc.waiting() >= capacity * dc.vms.len() {
                Admission::Rejected(RejectReason::QueueFull)
            } else {
                Admission::Admitted { expires_at: None }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserBase {
    pub id: String,
    pub requests_per_user_per_hour: u64,
    pub data_size_per_request: f64,
    pub target_dc: String,
    /// Simulated users behind this base.
    pub user_grouping: u64,
    /// Requests folded into one dispatched job.
    pub request_grouping: u64,
    /// Instructions per request.
    pub instruction_length: f64,
}

impl UserBase {
    /// Requests emitted over `horizon`, rounded up to a whole request.
    pub fn nominal_requests(&self, horizon: SimTime) -> u64 {
        let exact = (self.user_grouping * self.requests_per_user_per_hour) as f64 * horizon.as_ms() / MS_PER_HOUR;
        // Absorb representation noise so that exact products are not bumped up by one.
        (exact - 1e-9).ceil().max(0.0) as u64
    }

    pub fn nominal_batches(&self, horizon: SimTime) -> u64 {
        self.nominal_requests(horizon).div_ceil(self.request_grouping)
    }
}

/// Batched jobs for one user base over `[0, horizon)`.
///
/// Request arrivals are uniform over the horizon; sorted requests are grouped
/// into batches of `request_grouping`, each batch arriving with its earliest
/// member. Job ids are `1..=n` in arrival order.
pub fn generate_arrivals(ub: &UserBase, horizon: SimTime, seed: u64) -> Vec<Job> {
    generate_batches(ub, horizon, seed, ub.nominal_requests(horizon))
}

/// Like [`generate_arrivals`] but with an explicit request volume.
pub fn generate_batches(ub: &UserBase, horizon: SimTime, seed: u64, requests: u64) -> Vec<Job> {
    if horizon.as_ms() <= 0.0 || requests == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut arrivals: Vec<f64> = (0..requests).map(|_| rng.gen_range(0.0..horizon.as_ms())).collect();
    arrivals.sort_by(f64::total_cmp);

    let group = ub.request_grouping.max(1) as usize;
    arrivals
        .chunks(group)
        .enumerate()
        .map(|(i, members)| {
            let n = members.len() as u64;
            Job {
                id: JobId(i as u64 + 1),
                arrival: SimTime::from_ms(members[0]),
                work: Work::Instructions(ub.instruction_length * n as f64),
                data_size: ub.data_size_per_request * n as f64,
                requests: n,
                origin_ub: Some(ub.id.clone()),
                state: JobState::Queued,
                start_time: None,
                finish_time: None,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ub1() -> UserBase {
        UserBase {
            id: "UB1".into(),
            requests_per_user_per_hour: 12,
            data_size_per_request: 100.0,
            target_dc: "DC4".into(),
            user_grouping: 1000,
            request_grouping: 100,
            instruction_length: 250.0,
        }
    }

    #[test]
    fn processing_time_examples() {
        assert_eq!(processing_time(250.0, 100.0), Ok(2.5));
        assert_eq!(processing_time(0.0, 100.0), Ok(0.0));
        assert_eq!(processing_time(250.0, 50.0), Ok(5.0));
        assert_eq!(processing_time(250.0, 0.0), Err(ModelError::ZeroRate));
    }

    #[test]
    fn transfer_time_examples() {
        assert_eq!(transfer_time(100_000.0, 1000.0), Ok(100.0));
        assert_eq!(transfer_time(0.0, 1000.0), Ok(0.0));
        assert_eq!(transfer_time(10_000.0, 10_000.0), Ok(1.0));
        assert_eq!(transfer_time(1.0, 0.0), Err(ModelError::ZeroBandwidth));
    }

    #[test]
    fn one_hour_of_ub1_is_120_batches() {
        let jobs = generate_arrivals(&ub1(), SimTime::from_ms(MS_PER_HOUR), 7);
        // 12 requests/user/hour * 1000 users / 100 per batch
        assert_eq!(jobs.len(), 12 * 1000 / 100);
        assert!(jobs.iter().all(|j| j.requests == 100));
        assert!(jobs.iter().all(|j| j.work == Work::Instructions(25_000.0)));
        assert!(jobs.iter().all(|j| j.data_size == 10_000.0));
        assert!(jobs.windows(2).all(|w| w[0].arrival <= w[1].arrival));
    }

    #[test]
    fn zero_horizon_generates_nothing() {
        assert!(generate_arrivals(&ub1(), SimTime::ZERO, 7).is_empty());
    }

    #[test]
    fn arrivals_are_seeded() {
        let h = SimTime::from_ms(MS_PER_HOUR);
        assert_eq!(generate_arrivals(&ub1(), h, 42), generate_arrivals(&ub1(), h, 42));
        assert_ne!(generate_arrivals(&ub1(), h, 42), generate_arrivals(&ub1(), h, 43));
    }

    #[test]
    fn queue_cap_rejects_when_every_queue_is_full() {
        let vms = (0..2)
            .map(|i| VmInstance::new(VmId(i), 100.0, 512.0, 100.0).unwrap())
            .collect();
        let mut dc = Datacenter::new("DC", vms, AdmissionPolicy::QueueCap { capacity: 1 });
        let job = Job::with_burst(9, SimTime::ZERO, 1.0);
        let q = |id| QueuedJob {
            job: JobId(id),
            arrival: SimTime::ZERO,
            work: Work::Burst(1.0),
            available_at: SimTime::ZERO,
        };
        dc.vms[0].queue.push_back(q(1));
        assert!(matches!(admit(&job, &dc, SimTime::ZERO), Admission::Admitted { expires_at: None }));
        dc.vms[1].queue.push_back(q(2));
        assert_eq!(admit(&job, &dc, SimTime::ZERO), Admission::Rejected(RejectReason::QueueFull));
    }

    #[test]
    fn deadline_mode_admits_with_expiry() {
        let vm = VmInstance::new(VmId(0), 100.0, 512.0, 100.0).unwrap();
        let dc = Datacenter::new("DC", vec![vm], AdmissionPolicy::Deadline { deadline_ms: 10.0 });
        let job = Job::with_burst(1, SimTime::from_ms(3.0), 1.0);
        assert_eq!(
            admit(&job, &dc, SimTime::from_ms(3.0)),
            Admission::Admitted {
                expires_at: Some(SimTime::from_ms(13.0))
            }
        );
    }

    #[test]
    fn wait_of_counts_residual_and_jobs_ahead() {
        let mut vm = VmInstance::new(VmId(0), 10.0, 512.0, 100.0).unwrap();
        vm.running = Some(JobId(1));
        vm.busy_until = SimTime::from_ms(7.0);
        for (id, work) in [(2, Work::Burst(3.0)), (3, Work::Instructions(50.0)), (4, Work::Burst(1.0))] {
            vm.queue.push_back(QueuedJob {
                job: JobId(id),
                arrival: SimTime::ZERO,
                work,
                available_at: SimTime::ZERO,
            });
        }
        let now = SimTime::from_ms(2.0);
        assert_eq!(vm.wait_of(JobId(2), now), Some(5.0));
        assert_eq!(vm.wait_of(JobId(4), now), Some(5.0 + 3.0 + 5.0));
        assert_eq!(vm.expected_wait(now), 14.0);
        assert_eq!(vm.wait_of(JobId(99), now), None);
    }

    proptest! {
        #[test]
        fn durations_are_linear(x in 0u32..1_000_000, k in 0u32..1000, r in 1u32..10_000) {
            let (x, k, r) = (x as f64, k as f64, r as f64);
            let lhs = processing_time(k * x, r).unwrap();
            let rhs = k * processing_time(x, r).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
            let lhs = transfer_time(k * x, r).unwrap();
            let rhs = k * transfer_time(x, r).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
        }

        #[test]
        fn batch_count_matches_enumeration(
            rate in 1u64..30,
            users in 1u64..500,
            grouping in 1u64..200,
            minutes in 1u64..240,
        ) {
            let ub = UserBase {
                requests_per_user_per_hour: rate,
                user_grouping: users,
                request_grouping: grouping,
                ..ub1()
            };
            let horizon = SimTime::from_ms(minutes as f64 * 60_000.0);
            let jobs = generate_arrivals(&ub, horizon, 3);
            // Enumerate requests minute by minute in integer arithmetic (units of 1/60 request).
            let sixtieths = users * rate * minutes;
            let requests = sixtieths.div_ceil(60);
            let mut batches = 0;
            let mut left = requests;
            while left > 0 {
                left = left.saturating_sub(grouping);
                batches += 1;
            }
            prop_assert_eq!(jobs.len() as u64, batches);
            prop_assert_eq!(jobs.iter().map(|j| j.requests).sum::<u64>(), requests);
        }
    }
}
