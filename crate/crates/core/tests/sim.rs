use std::collections::BTreeMap;

use dispatch_sim::engine::{run_with, EngineError, RunOptions};
use dispatch_sim::metrics::{queue_wait, starvation_report, TerminalState};
use dispatch_sim::model::{AdmissionPolicy, JobId, RejectReason};
use dispatch_sim::policies::{sjf_schedule, SjfJob};
use dispatch_sim::scenario::{builtin, load_scenario, Scheduler};
use dispatch_sim::{run, run_level, ScenarioConfig};
use proptest::prelude::*;

fn bundled(name: &str) -> ScenarioConfig {
    load_scenario(builtin(name).unwrap()).unwrap()
}

fn jobs_scenario(vms: usize, scheduler: &str, admission: &str, jobs: &[(u64, f64, f64)]) -> ScenarioConfig {
    let mut s = format!(
        "[scenario]\nname = t\ntime_unit = ms\nhorizon = 100\nseed = 1\nbandwidth_unit = bytes_per_ms\n\
         [datacenter.DC1]\nvms = {vms}\nmemory = 512\nbandwidth = 1000\n\
         [policy]\nscheduler = {scheduler}\nmigration = off\n{admission}\n\
         [jobs]\ndatacenter = DC1\n"
    );
    for (id, arrival, burst) in jobs {
        s.push_str(&format!("{id} {arrival} {burst}\n"));
    }
    load_scenario(&s).unwrap()
}

const NO_DEADLINE: &str = "admission = deadline\ndeadline = 1000000000";

#[test]
fn five_job_example_through_the_engine() {
    let cfg = bundled("table6_demo.scn");
    let m = run(&cfg).unwrap();
    let order: Vec<u64> = m.service_order.iter().map(|j| j.0).collect();
    assert_eq!(order, vec![1, 4, 2, 5, 3]);
    let waits: BTreeMap<u64, f64> = m
        .traces
        .iter()
        .map(|t| (t.id.0, cfg.time_unit.from_ms(queue_wait(t).unwrap())))
        .collect();
    let expected: BTreeMap<u64, f64> = [(1, 0.0), (2, 9.0), (3, 16.0), (4, 3.0), (5, 8.0)].into_iter().collect();
    assert_eq!(waits, expected);
    assert_eq!(m.rejected, 0);
}

#[test]
fn empty_scenario_submits_nothing() {
    let cfg = load_scenario(
        "[scenario]\nname = e\ntime_unit = ms\nhorizon = 10\nseed = 1\nbandwidth_unit = bytes_per_ms\n\
         [datacenter.DC1]\nvms = 1\nmemory = 512\nbandwidth = 1000\n\
         [policy]\nscheduler = rr\nmigration = off\nadmission = deadline\ndeadline = 5\n",
    )
    .unwrap();
    let m = run(&cfg).unwrap();
    assert_eq!((m.submitted, m.completed, m.rejected), (0, 0, 0));
    assert_eq!(m.rejection_percentage(), None);
    assert!(matches!(run_level(&cfg, 5), Err(EngineError::NoTraffic)));
}

#[test]
fn same_seed_gives_the_same_event_trace() {
    let cfg = bundled("imbalance.scn");
    let opts = RunOptions {
        record_trace: true,
        ..RunOptions::default()
    };
    let a = run_with(&cfg, opts).unwrap();
    let b = run_with(&cfg, opts).unwrap();
    let ta = a.event_trace.as_ref().unwrap();
    assert_eq!(ta, b.event_trace.as_ref().unwrap());
    assert_eq!(a.traces, b.traces);
    assert!(ta.windows(2).all(|w| w[0].at <= w[1].at));
    assert_eq!(ta.len() as u64, a.events_processed);
}

#[test]
fn every_job_ends_completed_or_rejected() {
    for name in ["paper_tables.scn", "imbalance.scn", "table6_demo.scn"] {
        let m = run(&bundled(name)).unwrap();
        assert_eq!(m.completed + m.rejected, m.submitted, "{name}");
        assert_eq!(m.traces.len() as u64, m.submitted, "{name}");
    }
    for n in [5, 17, 30] {
        let m = run_level(&bundled("peak_sweep.scn"), n).unwrap();
        assert_eq!(m.submitted, n);
        assert_eq!(m.completed + m.rejected, n);
    }
}

#[test]
fn job_waiting_past_its_deadline_is_rejected() {
    let cfg = jobs_scenario(1, "rr", "admission = deadline\ndeadline = 10", &[(1, 0.0, 20.0), (2, 0.0, 5.0)]);
    let m = run(&cfg).unwrap();
    let j1 = m.trace(JobId(1)).unwrap();
    assert_eq!(j1.state, TerminalState::Completed);
    assert_eq!(j1.finish.unwrap().as_ms(), 20.0);
    let j2 = m.trace(JobId(2)).unwrap();
    assert_eq!(j2.state, TerminalState::Rejected);
    assert_eq!(j2.reject_reason, Some(RejectReason::DeadlineExpired));
    assert_eq!(j2.rejected_at.unwrap().as_ms(), 10.0);
    assert!(j2.start.is_none());
}

#[test]
fn job_starting_exactly_at_its_deadline_is_rejected() {
    let cfg = jobs_scenario(1, "rr", "admission = deadline\ndeadline = 10", &[(1, 0.0, 10.0), (2, 0.0, 5.0)]);
    let m = run(&cfg).unwrap();
    assert_eq!(m.trace(JobId(2)).unwrap().state, TerminalState::Rejected);
}

#[test]
fn deadline_separates_started_and_rejected_waits() {
    for sched in [Scheduler::RoundRobin, Scheduler::ShortestJobFirst] {
        let mut cfg = bundled("peak_sweep.scn");
        cfg.policy.scheduler = sched;
        let deadline = match cfg.policy.admission {
            AdmissionPolicy::Deadline { deadline_ms } => deadline_ms,
            _ => unreachable!(),
        };
        let m = run_level(&cfg, 30).unwrap();
        assert!(m.rejected > 0);
        for t in &m.traces {
            match t.state {
                TerminalState::Completed => assert!(queue_wait(t).unwrap() < deadline),
                TerminalState::Rejected => {
                    assert!(t.rejected_at.unwrap().since(t.arrival) >= deadline)
                }
            }
        }
    }
}

#[test]
fn queue_cap_rejects_on_arrival() {
    let cfg = jobs_scenario(
        1,
        "rr",
        "admission = queue_cap\nqueue_capacity = 1",
        &[(1, 0.0, 10.0), (2, 1.0, 10.0), (3, 2.0, 10.0), (4, 12.0, 1.0)],
    );
    let m = run(&cfg).unwrap();
    let states: Vec<TerminalState> = m.traces.iter().map(|t| t.state).collect();
    assert_eq!(
        states,
        vec![
            TerminalState::Completed,
            TerminalState::Completed,
            TerminalState::Rejected,
            TerminalState::Completed
        ]
    );
    let j3 = m.trace(JobId(3)).unwrap();
    assert_eq!(j3.reject_reason, Some(RejectReason::QueueFull));
    assert_eq!(j3.rejected_at.unwrap().as_ms(), 2.0);
}

#[test]
fn migrations_only_shorten_waits_and_respect_the_cap() {
    let cfg = bundled("imbalance.scn");
    let m = run(&cfg).unwrap();
    assert!(!m.migrations.is_empty());
    for r in &m.migrations {
        assert!(r.move_wait < r.stay_wait, "{r:?}");
        assert_ne!(r.from, r.to);
    }
    let mut per_job: BTreeMap<JobId, u32> = BTreeMap::new();
    for r in &m.migrations {
        *per_job.entry(r.job).or_default() += 1;
    }
    assert!(per_job.values().all(|&n| n <= cfg.policy.migration_cap));
    for t in &m.traces {
        assert!(t.vm_history.windows(2).all(|w| w[0] != w[1]));
    }
}

#[test]
fn migration_removes_starvation_in_the_imbalanced_case() {
    let mut cfg = bundled("imbalance.scn");
    let on = run(&cfg).unwrap();
    cfg.policy.migration = false;
    let off = run(&cfg).unwrap();
    assert!(on.rejection_percentage().unwrap() <= off.rejection_percentage().unwrap());
    assert!(!starvation_report(&off.traces, 60.0).is_empty());
    assert!(starvation_report(&on.traces, 60.0).is_empty());
    assert!(off.migrations.is_empty());
}

#[test]
fn event_cap_stops_a_runaway_run() {
    let mut cfg = bundled("imbalance.scn");
    cfg.policy.max_events = 5;
    assert!(matches!(run(&cfg), Err(EngineError::HorizonExceeded { cap: 5 })));
}

#[test]
fn round_robin_spreads_simultaneous_jobs_evenly() {
    for vms in [1usize, 3, 7] {
        for k in [1u64, 4] {
            let jobs: Vec<(u64, f64, f64)> = (1..=k * vms as u64).map(|id| (id, 0.0, 1.0)).collect();
            let m = run(&jobs_scenario(vms, "rr", NO_DEADLINE, &jobs)).unwrap();
            let mut counts = vec![0u64; vms];
            for t in &m.traces {
                counts[t.vm_history.last().unwrap().0] += 1;
            }
            assert!(counts.iter().all(|&c| c == k), "{vms} vms, {k}: {counts:?}");
        }
    }
}

#[test]
fn reference_tables_give_a_small_processing_time() {
    let m = run(&bundled("paper_tables.scn")).unwrap();
    let summaries: BTreeMap<_, _> = m.summaries().into_iter().collect();
    let pt = summaries["dc_processing_time"];
    assert!((2.0..=3.0).contains(&pt.avg), "{pt:?}");
    for s in summaries.values() {
        assert!(s.min <= s.avg && s.avg <= s.max);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn single_vm_sjf_matches_the_reference_schedule(
        raw in proptest::collection::vec((0u32..30, 1u32..10), 1..12)
    ) {
        let jobs: Vec<(u64, f64, f64)> = raw
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| (i as u64 + 1, a as f64, b as f64))
            .collect();
        let m = run(&jobs_scenario(1, "sjf", NO_DEADLINE, &jobs)).unwrap();
        let reference = sjf_schedule(
            &jobs.iter().map(|&(id, a, b)| SjfJob::new(id, a, b)).collect::<Vec<_>>(),
        )
        .unwrap();
        prop_assert_eq!(m.service_order.clone(), reference.order());
        for t in &m.traces {
            prop_assert_eq!(Some(queue_wait(t).unwrap()), reference.wait(t.id));
        }
    }
}
