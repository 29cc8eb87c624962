//! Machine-readable check reports.

use std::fmt::Write as _;

use serde::Serialize;

/// How a check value is compared with its tolerance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    /// Defect-type: passes when `value <= tolerance`.
    AtMost,
    /// Rate-type: passes when `value >= tolerance`.
    AtLeast,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub check_id: String,
    pub value: f64,
    pub tolerance: f64,
    pub bound: Bound,
    pub pass: bool,
}

impl Check {
    pub fn at_most(id: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check { check_id: id.into(), value, tolerance, bound: Bound::AtMost, pass: value <= tolerance }
    }

    pub fn at_least(id: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check { check_id: id.into(), value, tolerance, bound: Bound::AtLeast, pass: value >= tolerance }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metadata {
    pub command: String,
    pub grid_sizes: Vec<usize>,
    pub grid_lengths: Vec<f64>,
    pub algebra: String,
    pub kappa: f64,
    pub scenario: String,
    pub seed: u64,
    pub eymlab_version: String,
    pub cli_version: String,
    /// Only filled in with `--timing`, so that default reports are reproducible byte for byte.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub checks: Vec<Check>,
    pub pass: bool,
    pub metadata: Metadata,
}

impl CheckReport {
    pub fn new(checks: Vec<Check>, metadata: Metadata) -> Self {
        let pass = checks.iter().all(|c| c.pass);
        CheckReport { checks, pass, metadata }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One row per check; metadata goes into leading `#` comment lines.
    pub fn to_csv(&self) -> String {
        let m = &self.metadata;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# command={} scenario={} algebra={} kappa={} seed={} grid={:?}",
            m.command, m.scenario, m.algebra, m.kappa, m.seed, m.grid_sizes
        );
        if let Some(t) = m.wall_time_s {
            let _ = writeln!(s, "# wall_time_s={t}");
        }
        s.push_str("check_id,value,tolerance,bound,pass\n");
        for c in &self.checks {
            let bound = match c.bound {
                Bound::AtMost => "at_most",
                Bound::AtLeast => "at_least",
            };
            let _ = writeln!(s, "{},{:e},{:e},{},{}", c.check_id, c.value, c.tolerance, bound, c.pass);
        }
        s
    }
}
