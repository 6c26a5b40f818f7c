//! The five-job shortest-job-first example, run through the full simulator
//! and checked against its known schedule.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::engine::{run, EngineError};
use crate::metrics::queue_wait;
use crate::scenario::{load_scenario, TABLE6_DEMO};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DemoExpectation {
    pub order: Vec<u64>,
    /// Job id to wait, in the scenario's time unit.
    pub waits: BTreeMap<u64, f64>,
}

impl Default for DemoExpectation {
    fn default() -> Self {
        DemoExpectation {
            order: vec![1, 4, 2, 5, 3],
            waits: [(1, 0.0), (4, 3.0), (2, 9.0), (5, 8.0), (3, 16.0)].into_iter().collect(),
        }
    }
}

impl DemoExpectation {
    /// Parses
    ///
    /// ```text
    /// order = 1 4 2 5 3
    /// waits = 1:0 4:3 2:9 5:8 3:16
    /// ```
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut order = None;
        let mut waits = None;
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", n + 1))?;
            match key.trim() {
                "order" => {
                    let ids = value
                        .split_whitespace()
                        .map(|t| t.parse::<u64>().map_err(|_| format!("line {}: bad job id `{t}`", n + 1)))
                        .collect::<Result<Vec<_>, _>>()?;
                    order = Some(ids);
                }
                "waits" => {
                    let mut m = BTreeMap::new();
                    for t in value.split_whitespace() {
                        let parsed = t
                            .split_once(':')
                            .and_then(|(id, w)| Some((id.parse::<u64>().ok()?, w.parse::<f64>().ok()?)));
                        let (id, w) = parsed.ok_or_else(|| format!("line {}: bad wait `{t}`", n + 1))?;
                        m.insert(id, w);
                    }
                    waits = Some(m);
                }
                other => return Err(format!("line {}: unknown key `{other}`", n + 1)),
            }
        }
        Ok(DemoExpectation {
            order: order.ok_or("missing `order`")?,
            waits: waits.ok_or("missing `waits`")?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DemoResult {
    pub scenario: String,
    pub time_unit: &'static str,
    pub order: Vec<u64>,
    pub waits: BTreeMap<u64, f64>,
    pub expected: DemoExpectation,
    pub pass: bool,
}

pub fn run_demo(expected: DemoExpectation) -> Result<DemoResult, EngineError> {
    let cfg = load_scenario(TABLE6_DEMO).expect("bundled demo scenario is valid");
    let m = run(&cfg)?;
    let order: Vec<u64> = m.service_order.iter().map(|j| j.0).collect();
    let waits: BTreeMap<u64, f64> = m
        .traces
        .iter()
        .filter_map(|t| queue_wait(t).ok().map(|w| (t.id.0, cfg.time_unit.from_ms(w))))
        .collect();
    let pass = order == expected.order && waits == expected.waits;
    Ok(DemoResult {
        scenario: cfg.name,
        time_unit: cfg.time_unit.as_str(),
        order,
        waits,
        expected,
        pass,
    })
}

impl DemoResult {
    /// Human-readable report: the service order, then one wait per job in service order.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let order: Vec<String> = self.order.iter().map(|id| id.to_string()).collect();
        out.push_str(&format!("order: {}\n", order.join(" ")));
        out.push_str(&format!("job  wait ({})\n", self.time_unit));
        for id in &self.order {
            if let Some(w) = self.waits.get(id) {
                out.push_str(&format!("{id:>3}  {w}\n"));
            }
        }
        out.push_str(if self.pass { "check: ok\n" } else { "check: MISMATCH\n" });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_matches_known_schedule() {
        let r = run_demo(DemoExpectation::default()).unwrap();
        assert_eq!(r.order, vec![1, 4, 2, 5, 3]);
        assert!(r.pass, "{}", r.render());
    }

    #[test]
    fn tampered_expectation_fails() {
        let mut bad = DemoExpectation::default();
        bad.waits.insert(3, 15.0);
        assert!(!run_demo(bad).unwrap().pass);
    }

    #[test]
    fn expectation_parsing() {
        let e = DemoExpectation::parse("order = 1 4 2 5 3\nwaits = 1:0 4:3 2:9 5:8 3:16\n").unwrap();
        assert_eq!(e, DemoExpectation::default());
        assert!(DemoExpectation::parse("order = 1 x").is_err());
        assert!(DemoExpectation::parse("order = 1").is_err());
    }
}
