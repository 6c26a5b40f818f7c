//! Deterministic discrete-event simulation of cloud job dispatch.
//!
//! Jobs from user bases (or an explicit job list) arrive at datacenters and
//! are dispatched to VMs either round-robin or through a shared
//! shortest-job-first queue. Queued jobs can migrate between VMs when the
//! wait they would save exceeds the hop cost. Runs report response time,
//! processing time, rejection percentage and starvation.

pub mod demo;
pub mod engine;
pub mod metrics;
pub mod model;
pub mod output;
pub mod policies;
pub mod scenario;

pub use engine::{run, run_level, run_sweep, run_with, EngineError, RunOptions, SimTime};
pub use metrics::RunMetrics;
pub use scenario::{load_scenario, ScenarioConfig, ScenarioError};
