//! Scenario files: loading, validation and serialization.
//!
//! A scenario is a line-oriented text file made of sections. Lines inside a
//! section are either `key = value` pairs or whitespace-separated table rows
//! (only in `[jobs]` and `[hops.<dc>]`). `#` starts a comment.
//!
//! ```text
//! [scenario]            name, time_unit (ms|hours), horizon, seed, bandwidth_unit (bytes_per_ms|mbps)
//! [advanced]            user_grouping, request_grouping, instruction_length
//! [userbase.<id>]       requests_per_user_per_hour, data_size_per_request, datacenter,
//!                       instruction_length (optional per-base override)
//! [datacenter.<id>]     vms, memory, bandwidth, rate (instructions/ms, default 100)
//! [policy]              scheduler (rr|sjf), migration (on|off), admission (deadline|queue_cap),
//!                       deadline, queue_capacity, hop_time, migration_interval,
//!                       migration_cap, max_events
//! [hops.<dc>]           rows: <from_vm> <to_vm> <hop_time>
//! [jobs]                datacenter = <id>; rows: <id> <arrival> <burst>
//! ```
//!
//! Durations are written in `time_unit` and held in milliseconds once loaded.
//! Unknown sections and keys are errors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::engine::{DEFAULT_MAX_EVENTS, MS_PER_HOUR};
use crate::model::{AdmissionPolicy, DEFAULT_VM_RATE};

pub const DEFAULT_HOP_MS: f64 = 1.0;
pub const DEFAULT_MIGRATION_INTERVAL_MS: f64 = 10.0;
pub const DEFAULT_MIGRATION_CAP: u32 = 3;
pub const DEFAULT_USER_GROUPING: u64 = 1000;
pub const DEFAULT_REQUEST_GROUPING: u64 = 100;
pub const DEFAULT_INSTRUCTION_LENGTH: f64 = 250.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{line}:{col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: unknown key `{key}`")]
    UnknownKey { line: usize, col: usize, key: String },
    #[error("{}", match line { Some(l) => format!("line {l}: {msg}"), None => msg.clone() })]
    Validation { line: Option<usize>, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(line: Option<usize>, msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation { line, msg: msg.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TimeUnit {
    Ms,
    Hours,
}

impl TimeUnit {
    pub fn ms_per_unit(self) -> f64 {
        match self {
            TimeUnit::Ms => 1.0,
            TimeUnit::Hours => MS_PER_HOUR,
        }
    }

    pub fn to_ms(self, v: f64) -> f64 {
        v * self.ms_per_unit()
    }

    pub fn from_ms(self, ms: f64) -> f64 {
        ms / self.ms_per_unit()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TimeUnit::Ms => "ms",
            TimeUnit::Hours => "hours",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BandwidthUnit {
    BytesPerMs,
    /// Megabits per second; 1 Mbps moves 125 bytes per ms.
    Mbps,
}

impl BandwidthUnit {
    pub fn bytes_per_ms(self, v: f64) -> f64 {
        match self {
            BandwidthUnit::BytesPerMs => v,
            BandwidthUnit::Mbps => v * 125.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BandwidthUnit::BytesPerMs => "bytes_per_ms",
            BandwidthUnit::Mbps => "mbps",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Scheduler {
    RoundRobin,
    ShortestJobFirst,
}

impl Scheduler {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheduler::RoundRobin => "rr",
            Scheduler::ShortestJobFirst => "sjf",
        }
    }
}

impl std::str::FromStr for Scheduler {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rr" => Ok(Scheduler::RoundRobin),
            "sjf" => Ok(Scheduler::ShortestJobFirst),
            _ => Err(format!("expected `rr` or `sjf`, got `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UserBaseSpec {
    pub id: String,
    pub requests_per_user_per_hour: u64,
    pub data_size_per_request: f64,
    pub datacenter: String,
    pub instruction_length: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatacenterSpec {
    pub id: String,
    pub vms: usize,
    pub memory: f64,
    /// In the scenario's `bandwidth_unit`.
    pub bandwidth: f64,
    /// Instructions per ms.
    pub rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Advanced {
    pub user_grouping: u64,
    pub request_grouping: u64,
    pub instruction_length: f64,
}

impl Default for Advanced {
    fn default() -> Self {
        Advanced {
            user_grouping: DEFAULT_USER_GROUPING,
            request_grouping: DEFAULT_REQUEST_GROUPING,
            instruction_length: DEFAULT_INSTRUCTION_LENGTH,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolicyConfig {
    pub scheduler: Scheduler,
    pub migration: bool,
    pub admission: AdmissionPolicy,
    pub hop_time_ms: f64,
    pub migration_interval_ms: f64,
    pub migration_cap: u32,
    pub max_events: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HopSpec {
    pub datacenter: String,
    pub from: usize,
    pub to: usize,
    pub ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExplicitJob {
    pub id: u64,
    pub arrival_ms: f64,
    pub burst_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JobsSpec {
    pub datacenter: String,
    pub jobs: Vec<ExplicitJob>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub time_unit: TimeUnit,
    pub horizon_ms: f64,
    pub seed: u64,
    pub bandwidth_unit: BandwidthUnit,
    pub advanced: Advanced,
    pub user_bases: Vec<UserBaseSpec>,
    pub datacenters: Vec<DatacenterSpec>,
    pub policy: PolicyConfig,
    pub hops: Vec<HopSpec>,
    pub jobs: Option<JobsSpec>,
}

impl ScenarioConfig {
    pub fn datacenter_index(&self, id: &str) -> Option<usize> {
        self.datacenters.iter().position(|d| d.id == id)
    }
}

// ---------------------------------------------------------------------------
// Lexing

struct Entry {
    key: String,
    value: String,
    line: usize,
    col: usize,
    vcol: usize,
}

struct Row {
    fields: Vec<(String, usize)>,
    line: usize,
}

struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
    rows: Vec<Row>,
}

fn lex(source: &str) -> Result<Vec<Section>, ScenarioError> {
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw) in source.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        let indent = content.len() - content.trim_start().len();
        let col = indent + 1;

        if let Some(rest) = trimmed.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| ScenarioError::Parse {
                line,
                col,
                msg: "unterminated section header".into(),
            })?;
            let name = name.trim();
            if name.is_empty() {
                return Err(ScenarioError::Parse {
                    line,
                    col,
                    msg: "empty section name".into(),
                });
            }
            sections.push(Section {
                name: name.to_string(),
                line,
                entries: Vec::new(),
                rows: Vec::new(),
            });
            continue;
        }

        let section = sections.last_mut().ok_or_else(|| ScenarioError::Parse {
            line,
            col,
            msg: "content before the first section header".into(),
        })?;

        if let Some(eq) = trimmed.find('=') {
            let key = trimmed[..eq].trim();
            let value = trimmed[eq + 1..].trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(ScenarioError::Parse {
                    line,
                    col,
                    msg: format!("malformed key `{key}`"),
                });
            }
            if value.is_empty() {
                return Err(ScenarioError::Parse {
                    line,
                    col: indent + eq + 2,
                    msg: format!("missing value for `{key}`"),
                });
            }
            let vcol = indent + eq + 1 + (trimmed[eq + 1..].len() - trimmed[eq + 1..].trim_start().len()) + 1;
            section.entries.push(Entry {
                key: key.to_string(),
                value: value.to_string(),
                line,
                col,
                vcol,
            });
        } else {
            let mut fields = Vec::new();
            let mut pos = 0;
            for tok in content.split_whitespace() {
                let at = content[pos..].find(tok).map_or(pos, |o| pos + o);
                fields.push((tok.to_string(), at + 1));
                pos = at + tok.len();
            }
            section.rows.push(Row { fields, line });
        }
    }
    Ok(sections)
}

// ---------------------------------------------------------------------------
// Typed access to a section

struct Fields<'a> {
    section: &'a Section,
    taken: BTreeMap<&'a str, &'a Entry>,
}

impl<'a> Fields<'a> {
    fn new(section: &'a Section, allowed: &[&str], allow_rows: bool) -> Result<Self, ScenarioError> {
        let mut taken = BTreeMap::new();
        for e in &section.entries {
            if !allowed.contains(&e.key.as_str()) {
                return Err(ScenarioError::UnknownKey {
                    line: e.line,
                    col: e.col,
                    key: format!("{}.{}", section.name, e.key),
                });
            }
            if taken.insert(e.key.as_str(), e).is_some() {
                return Err(invalid(Some(e.line), format!("duplicate key `{}`", e.key)));
            }
        }
        if !allow_rows {
            if let Some(r) = section.rows.first() {
                return Err(ScenarioError::Parse {
                    line: r.line,
                    col: r.fields[0].1,
                    msg: format!("expected `key = value` in [{}]", section.name),
                });
            }
        }
        Ok(Fields { section, taken })
    }

    fn raw(&self, key: &str) -> Option<&'a Entry> {
        self.taken.get(key).copied()
    }

    fn required(&self, key: &str) -> Result<&'a Entry, ScenarioError> {
        self.raw(key).ok_or_else(|| {
            invalid(
                Some(self.section.line),
                format!("[{}] is missing `{key}`", self.section.name),
            )
        })
    }

    fn parsed<T>(&self, key: &str, f: impl Fn(&str) -> Result<T, String>) -> Result<Option<T>, ScenarioError> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => f(&e.value).map(Some).map_err(|msg| ScenarioError::Parse {
                line: e.line,
                col: e.vcol,
                msg: format!("`{key}`: {msg}"),
            }),
        }
    }

    fn req<T>(&self, key: &str, f: impl Fn(&str) -> Result<T, String>) -> Result<T, ScenarioError> {
        self.required(key)?;
        Ok(self.parsed(key, f)?.expect("checked above"))
    }

    fn line_of(&self, key: &str) -> Option<usize> {
        self.raw(key).map(|e| e.line)
    }
}

fn parse_u64(s: &str) -> Result<u64, String> {
    s.parse::<u64>().map_err(|_| format!("expected a non-negative integer, got `{s}`"))
}

fn parse_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("expected a number, got `{s}`")),
    }
}

fn parse_on_off(s: &str) -> Result<bool, String> {
    match s {
        "on" => Ok(true),
        "off" => Ok(false),
        _ => Err(format!("expected `on` or `off`, got `{s}`")),
    }
}

fn parse_ident(s: &str) -> Result<String, String> {
    if is_ident(s) {
        Ok(s.to_string())
    } else {
        Err(format!("`{s}` is not a valid identifier (letters, digits, `_`, `-`)"))
    }
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn row_field<T>(row: &Row, i: usize, what: &str, f: impl Fn(&str) -> Result<T, String>) -> Result<T, ScenarioError> {
    let (tok, col) = &row.fields[i];
    f(tok).map_err(|msg| ScenarioError::Parse {
        line: row.line,
        col: *col,
        msg: format!("{what}: {msg}"),
    })
}

// ---------------------------------------------------------------------------
// Loading

pub fn load_scenario(source: &str) -> Result<ScenarioConfig, ScenarioError> {
    let sections = lex(source)?;

    let mut seen = BTreeSet::new();
    for s in &sections {
        if !seen.insert(s.name.as_str()) {
            return Err(invalid(Some(s.line), format!("duplicate section [{}]", s.name)));
        }
    }

    let mut scenario = None;
    let mut advanced_sec = None;
    let mut policy_sec = None;
    let mut jobs_sec = None;
    let mut ub_secs = Vec::new();
    let mut dc_secs = Vec::new();
    let mut hop_secs = Vec::new();
    for s in &sections {
        match s.name.split_once('.') {
            None if s.name == "scenario" => scenario = Some(s),
            None if s.name == "advanced" => advanced_sec = Some(s),
            None if s.name == "policy" => policy_sec = Some(s),
            None if s.name == "jobs" => jobs_sec = Some(s),
            Some(("userbase", id)) if is_ident(id) => ub_secs.push((id, s)),
            Some(("datacenter", id)) if is_ident(id) => dc_secs.push((id, s)),
            Some(("hops", id)) if is_ident(id) => hop_secs.push((id, s)),
            _ => {
                return Err(ScenarioError::UnknownKey {
                    line: s.line,
                    col: 1,
                    key: format!("[{}]", s.name),
                })
            }
        }
    }

    let scenario = scenario.ok_or_else(|| invalid(None, "missing [scenario] section"))?;
    let f = Fields::new(
        scenario,
        &["name", "time_unit", "horizon", "seed", "bandwidth_unit"],
        false,
    )?;
    let name = f.req("name", parse_ident)?;
    let time_unit = f.req("time_unit", |s| match s {
        "ms" => Ok(TimeUnit::Ms),
        "hours" => Ok(TimeUnit::Hours),
        _ => Err(format!("expected `ms` or `hours`, got `{s}`")),
    })?;
    let horizon = f.req("horizon", parse_f64)?;
    if horizon <= 0.0 {
        return Err(invalid(f.line_of("horizon"), "horizon must be positive"));
    }
    let seed = f.parsed("seed", parse_u64)?.unwrap_or(0);
    let bandwidth_unit = f.req("bandwidth_unit", |s| match s {
        "bytes_per_ms" => Ok(BandwidthUnit::BytesPerMs),
        "mbps" => Ok(BandwidthUnit::Mbps),
        _ => Err(format!("expected `bytes_per_ms` or `mbps`, got `{s}`")),
    })?;
    let ms = |v: f64| time_unit.to_ms(v);

    let advanced = match advanced_sec {
        None => Advanced::default(),
        Some(s) => {
            let f = Fields::new(s, &["user_grouping", "request_grouping", "instruction_length"], false)?;
            let d = Advanced::default();
            let a = Advanced {
                user_grouping: f.parsed("user_grouping", parse_u64)?.unwrap_or(d.user_grouping),
                request_grouping: f.parsed("request_grouping", parse_u64)?.unwrap_or(d.request_grouping),
                instruction_length: f.parsed("instruction_length", parse_f64)?.unwrap_or(d.instruction_length),
            };
            if a.user_grouping == 0 || a.request_grouping == 0 {
                return Err(invalid(Some(s.line), "grouping factors must be positive"));
            }
            if a.instruction_length <= 0.0 {
                return Err(invalid(f.line_of("instruction_length"), "instruction_length must be positive"));
            }
            a
        }
    };

    let mut datacenters = Vec::new();
    for (id, s) in &dc_secs {
        let f = Fields::new(s, &["vms", "memory", "bandwidth", "rate"], false)?;
        let dc = DatacenterSpec {
            id: id.to_string(),
            vms: f.req("vms", parse_u64)? as usize,
            memory: f.req("memory", parse_f64)?,
            bandwidth: f.req("bandwidth", parse_f64)?,
            rate: f.parsed("rate", parse_f64)?.unwrap_or(DEFAULT_VM_RATE),
        };
        if dc.vms == 0 {
            return Err(invalid(f.line_of("vms"), format!("datacenter {id} needs at least one VM")));
        }
        for (key, v) in [("memory", dc.memory), ("bandwidth", dc.bandwidth), ("rate", dc.rate)] {
            if v <= 0.0 {
                return Err(invalid(
                    f.line_of(key).or(Some(s.line)),
                    format!("datacenter {id}: {key} must be positive"),
                ));
            }
        }
        datacenters.push(dc);
    }
    if datacenters.is_empty() {
        return Err(invalid(None, "at least one [datacenter.<id>] section is required"));
    }
    let dc_exists = |id: &str| datacenters.iter().any(|d| d.id == id);

    let mut user_bases = Vec::new();
    for (id, s) in &ub_secs {
        let f = Fields::new(
            s,
            &[
                "requests_per_user_per_hour",
                "data_size_per_request",
                "datacenter",
                "instruction_length",
            ],
            false,
        )?;
        let ub = UserBaseSpec {
            id: id.to_string(),
            requests_per_user_per_hour: f.req("requests_per_user_per_hour", parse_u64)?,
            data_size_per_request: f.req("data_size_per_request", parse_f64)?,
            datacenter: f.req("datacenter", parse_ident)?,
            instruction_length: f.parsed("instruction_length", parse_f64)?,
        };
        if ub.requests_per_user_per_hour == 0 {
            return Err(invalid(
                f.line_of("requests_per_user_per_hour"),
                format!("user base {id}: request rate must be positive"),
            ));
        }
        if ub.data_size_per_request < 0.0 {
            return Err(invalid(
                f.line_of("data_size_per_request"),
                format!("user base {id}: data size must not be negative"),
            ));
        }
        if matches!(ub.instruction_length, Some(l) if l <= 0.0) {
            return Err(invalid(
                f.line_of("instruction_length"),
                format!("user base {id}: instruction_length must be positive"),
            ));
        }
        if !dc_exists(&ub.datacenter) {
            return Err(invalid(
                f.line_of("datacenter"),
                format!("user base {id} targets unknown datacenter {}", ub.datacenter),
            ));
        }
        user_bases.push(ub);
    }

    let policy_sec = policy_sec.ok_or_else(|| invalid(None, "missing [policy] section"))?;
    let policy = {
        let f = Fields::new(
            policy_sec,
            &[
                "scheduler",
                "migration",
                "admission",
                "deadline",
                "queue_capacity",
                "hop_time",
                "migration_interval",
                "migration_cap",
                "max_events",
            ],
            false,
        )?;
        let scheduler = f.parsed("scheduler", |s| s.parse())?.unwrap_or(Scheduler::RoundRobin);
        let migration = f.parsed("migration", parse_on_off)?.unwrap_or(false);
        let mode = f.parsed("admission", |s| match s {
            "deadline" | "queue_cap" => Ok(s.to_string()),
            _ => Err(format!("expected `deadline` or `queue_cap`, got `{s}`")),
        })?;
        let admission = match mode.as_deref().unwrap_or("deadline") {
            "deadline" => {
                if let Some(l) = f.line_of("queue_capacity") {
                    return Err(invalid(Some(l), "queue_capacity requires admission = queue_cap"));
                }
                let d = f.req("deadline", parse_f64)?;
                if d <= 0.0 {
                    return Err(invalid(f.line_of("deadline"), "deadline must be positive"));
                }
                AdmissionPolicy::Deadline { deadline_ms: ms(d) }
            }
            _ => {
                if let Some(l) = f.line_of("deadline") {
                    return Err(invalid(Some(l), "deadline requires admission = deadline"));
                }
                let c = f.req("queue_capacity", parse_u64)?;
                if c == 0 {
                    return Err(invalid(f.line_of("queue_capacity"), "queue_capacity must be at least 1"));
                }
                AdmissionPolicy::QueueCap { capacity: c as usize }
            }
        };
        let hop = f.parsed("hop_time", parse_f64)?.map(ms).unwrap_or(DEFAULT_HOP_MS);
        if hop < 0.0 {
            return Err(invalid(f.line_of("hop_time"), "hop_time must not be negative"));
        }
        let interval = f
            .parsed("migration_interval", parse_f64)?
            .map(ms)
            .unwrap_or(DEFAULT_MIGRATION_INTERVAL_MS);
        if interval <= 0.0 {
            return Err(invalid(f.line_of("migration_interval"), "migration_interval must be positive"));
        }
        let max_events = f.parsed("max_events", parse_u64)?.unwrap_or(DEFAULT_MAX_EVENTS);
        if max_events == 0 {
            return Err(invalid(f.line_of("max_events"), "max_events must be positive"));
        }
        PolicyConfig {
            scheduler,
            migration,
            admission,
            hop_time_ms: hop,
            migration_interval_ms: interval,
            migration_cap: f
                .parsed("migration_cap", parse_u64)?
                .map(|c| c.min(u32::MAX as u64) as u32)
                .unwrap_or(DEFAULT_MIGRATION_CAP),
            max_events,
        }
    };

    let mut hops = Vec::new();
    for (dc, s) in &hop_secs {
        Fields::new(s, &[], true)?;
        let spec = datacenters
            .iter()
            .find(|d| d.id == *dc)
            .ok_or_else(|| invalid(Some(s.line), format!("[hops.{dc}] names an unknown datacenter")))?;
        for row in &s.rows {
            if row.fields.len() != 3 {
                return Err(ScenarioError::Parse {
                    line: row.line,
                    col: row.fields[0].1,
                    msg: "hop rows are `<from_vm> <to_vm> <hop_time>`".into(),
                });
            }
            let from = row_field(row, 0, "from_vm", parse_u64)? as usize;
            let to = row_field(row, 1, "to_vm", parse_u64)? as usize;
            let t = row_field(row, 2, "hop_time", parse_f64)?;
            if from >= spec.vms || to >= spec.vms {
                return Err(invalid(Some(row.line), format!("VM index out of range for {dc}")));
            }
            if from == to {
                return Err(invalid(Some(row.line), "hop time from a VM to itself is always 0"));
            }
            if t < 0.0 {
                return Err(invalid(Some(row.line), "hop time must not be negative"));
            }
            hops.push(HopSpec {
                datacenter: dc.to_string(),
                from,
                to,
                ms: ms(t),
            });
        }
    }

    let jobs = match jobs_sec {
        None => None,
        Some(s) => {
            let f = Fields::new(s, &["datacenter"], true)?;
            let datacenter = f.parsed("datacenter", parse_ident)?.unwrap_or_else(|| datacenters[0].id.clone());
            if !dc_exists(&datacenter) {
                return Err(invalid(
                    f.line_of("datacenter"),
                    format!("[jobs] targets unknown datacenter {datacenter}"),
                ));
            }
            let mut ids = BTreeSet::new();
            let mut jobs = Vec::new();
            for row in &s.rows {
                if row.fields.len() != 3 {
                    return Err(ScenarioError::Parse {
                        line: row.line,
                        col: row.fields[0].1,
                        msg: "job rows are `<id> <arrival> <burst>`".into(),
                    });
                }
                let id = row_field(row, 0, "id", parse_u64)?;
                let arrival = row_field(row, 1, "arrival", parse_f64)?;
                let burst = row_field(row, 2, "burst", parse_f64)?;
                if id == 0 {
                    return Err(invalid(Some(row.line), "job ids must be positive"));
                }
                if !ids.insert(id) {
                    return Err(invalid(Some(row.line), format!("duplicate job id {id}")));
                }
                if arrival < 0.0 || burst <= 0.0 {
                    return Err(invalid(
                        Some(row.line),
                        "arrival must be non-negative and burst positive",
                    ));
                }
                jobs.push(ExplicitJob {
                    id,
                    arrival_ms: ms(arrival),
                    burst_ms: ms(burst),
                });
            }
            Some(JobsSpec { datacenter, jobs })
        }
    };

    Ok(ScenarioConfig {
        name,
        time_unit,
        horizon_ms: ms(horizon),
        seed,
        bandwidth_unit,
        advanced,
        user_bases,
        datacenters,
        policy,
        hops,
        jobs,
    })
}

pub fn load_scenario_file(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_scenario(&text)
}

// ---------------------------------------------------------------------------
// Serialization

struct Num(f64);

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // `{}` on f64 prints the shortest string that parses back to the same value.
        write!(f, "{}", self.0)
    }
}

/// Writes `cfg` back in its declared time unit.
pub fn serialize(cfg: &ScenarioConfig) -> String {
    render(cfg, cfg.time_unit)
}

/// Writes `cfg` with every duration expressed in milliseconds.
pub fn serialize_normalized(cfg: &ScenarioConfig) -> String {
    render(cfg, TimeUnit::Ms)
}

fn render(cfg: &ScenarioConfig, unit: TimeUnit) -> String {
    let d = |ms: f64| Num(unit.from_ms(ms));
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "[scenario]");
    let _ = writeln!(w, "name = {}", cfg.name);
    let _ = writeln!(w, "time_unit = {}", unit.as_str());
    let _ = writeln!(w, "horizon = {}", d(cfg.horizon_ms));
    let _ = writeln!(w, "seed = {}", cfg.seed);
    let _ = writeln!(w, "bandwidth_unit = {}", cfg.bandwidth_unit.as_str());

    let a = &cfg.advanced;
    let _ = writeln!(w, "\n[advanced]");
    let _ = writeln!(w, "user_grouping = {}", a.user_grouping);
    let _ = writeln!(w, "request_grouping = {}", a.request_grouping);
    let _ = writeln!(w, "instruction_length = {}", Num(a.instruction_length));

    for ub in &cfg.user_bases {
        let _ = writeln!(w, "\n[userbase.{}]", ub.id);
        let _ = writeln!(w, "requests_per_user_per_hour = {}", ub.requests_per_user_per_hour);
        let _ = writeln!(w, "data_size_per_request = {}", Num(ub.data_size_per_request));
        let _ = writeln!(w, "datacenter = {}", ub.datacenter);
        if let Some(l) = ub.instruction_length {
            let _ = writeln!(w, "instruction_length = {}", Num(l));
        }
    }

    for dc in &cfg.datacenters {
        let _ = writeln!(w, "\n[datacenter.{}]", dc.id);
        let _ = writeln!(w, "vms = {}", dc.vms);
        let _ = writeln!(w, "memory = {}", Num(dc.memory));
        let _ = writeln!(w, "bandwidth = {}", Num(dc.bandwidth));
        let _ = writeln!(w, "rate = {}", Num(dc.rate));
    }

    let p = &cfg.policy;
    let _ = writeln!(w, "\n[policy]");
    let _ = writeln!(w, "scheduler = {}", p.scheduler.as_str());
    let _ = writeln!(w, "migration = {}", if p.migration { "on" } else { "off" });
    match p.admission {
        AdmissionPolicy::Deadline { deadline_ms } => {
            let _ = writeln!(w, "admission = deadline");
            let _ = writeln!(w, "deadline = {}", d(deadline_ms));
        }
        AdmissionPolicy::QueueCap { capacity } => {
            let _ = writeln!(w, "admission = queue_cap");
            let _ = writeln!(w, "queue_capacity = {capacity}");
        }
    }
    // Defaults are left implicit so they survive a unit round trip untouched.
    if p.hop_time_ms != DEFAULT_HOP_MS {
        let _ = writeln!(w, "hop_time = {}", d(p.hop_time_ms));
    }
    if p.migration_interval_ms != DEFAULT_MIGRATION_INTERVAL_MS {
        let _ = writeln!(w, "migration_interval = {}", d(p.migration_interval_ms));
    }
    if p.migration_cap != DEFAULT_MIGRATION_CAP {
        let _ = writeln!(w, "migration_cap = {}", p.migration_cap);
    }
    if p.max_events != DEFAULT_MAX_EVENTS {
        let _ = writeln!(w, "max_events = {}", p.max_events);
    }

    let mut by_dc: BTreeMap<&str, Vec<&HopSpec>> = BTreeMap::new();
    for h in &cfg.hops {
        by_dc.entry(h.datacenter.as_str()).or_default().push(h);
    }
    // Keep datacenter declaration order so the hop list round-trips in order.
    for dc in &cfg.datacenters {
        if let Some(rows) = by_dc.get(dc.id.as_str()) {
            let _ = writeln!(w, "\n[hops.{}]", dc.id);
            for h in rows {
                let _ = writeln!(w, "{} {} {}", h.from, h.to, d(h.ms));
            }
        }
    }

    if let Some(jobs) = &cfg.jobs {
        let _ = writeln!(w, "\n[jobs]");
        let _ = writeln!(w, "datacenter = {}", jobs.datacenter);
        let _ = writeln!(w, "# id arrival burst");
        for j in &jobs.jobs {
            let _ = writeln!(w, "{} {} {}", j.id, d(j.arrival_ms), d(j.burst_ms));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Bundled scenarios

pub const TABLE6_DEMO: &str = include_str!("../scenarios/table6_demo.scn");
pub const PAPER_TABLES: &str = include_str!("../scenarios/paper_tables.scn");
pub const PEAK_SWEEP: &str = include_str!("../scenarios/peak_sweep.scn");
pub const IMBALANCE: &str = include_str!("../scenarios/imbalance.scn");

/// Scenario text shipped with the binary, looked up by file name.
pub fn builtin(name: &str) -> Option<&'static str> {
    match name {
        "table6_demo.scn" => Some(TABLE6_DEMO),
        "paper_tables.scn" => Some(PAPER_TABLES),
        "peak_sweep.scn" => Some(PEAK_SWEEP),
        "imbalance.scn" => Some(IMBALANCE),
        _ => None,
    }
}

pub fn builtin_names() -> [&'static str; 4] {
    ["table6_demo.scn", "paper_tables.scn", "peak_sweep.scn", "imbalance.scn"]
}
