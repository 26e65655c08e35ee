//! Certification experiments and their reports.
//!
//! Each experiment reads a [`Config`], runs its ensembles through
//! [`Execution`] and returns a [`Report`]: named pass/fail rules with the
//! numbers behind them, scalar results and CSV tables. Reports contain no
//! timestamps, so a rerun with the same config and seed reproduces them byte
//! for byte.

mod checks;
mod clt;
mod continuum;
mod lln;

use std::fmt::Write as _;
use std::path::Path;

use crate::config::Config;
use crate::ensemble::Execution;
use crate::error::Result;
use crate::table::{fmt_f64, Table};

pub use checks::{dispersion_checks, ito_check, noise_checks, run_wave};
pub use clt::run_clt;
pub use continuum::{error_budget, run_continuum, ContinuumOutcome};
pub use lln::run_lln;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Wave,
    Lln,
    Clt,
    Continuum,
    NoiseChecks,
    Dispersion,
    Ito,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Wave => "wave",
            Self::Lln => "lln",
            Self::Clt => "clt",
            Self::Continuum => "continuum",
            Self::NoiseChecks => "noise_checks",
            Self::Dispersion => "dispersion",
            Self::Ito => "ito",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Wave, Self::Lln, Self::Clt, Self::Continuum, Self::NoiseChecks, Self::Dispersion, Self::Ito]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub parallel: bool,
}

impl Provenance {
    pub fn of(config: &Config, exec: Execution) -> Self {
        Self {
            config_hash: config.hash(),
            seed: config.harness.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            parallel: exec == Execution::Parallel && Execution::is_parallel_available(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub kind: ExperimentKind,
    pub rules: Vec<Rule>,
    pub scalars: Vec<(String, f64)>,
    pub tables: Vec<(String, Table)>,
    /// Set when the replica budget is too small for a statistical verdict.
    pub inconclusive: bool,
    pub provenance: Provenance,
}

impl Report {
    pub fn new(kind: ExperimentKind, provenance: Provenance) -> Self {
        Self { kind, rules: vec![], scalars: vec![], tables: vec![], inconclusive: false, provenance }
    }

    pub fn rule(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.rules.push(Rule { name: name.into(), passed, detail: detail.into() });
    }

    pub fn scalar(&mut self, name: &str, value: f64) {
        self.scalars.push((name.into(), value));
    }

    pub fn table(&mut self, name: &str, table: Table) {
        self.tables.push((name.into(), table));
    }

    pub fn get_rule(&self, name: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.name == name)
    }

    pub fn get_scalar(&self, name: &str) -> Option<f64> {
        self.scalars.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn get_table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn passed(&self) -> bool {
        !self.inconclusive && self.rules.iter().all(|r| r.passed)
    }

    /// Absorbs another report's rules, scalars and tables under a name prefix.
    pub fn merge(&mut self, prefix: &str, other: Report) {
        self.inconclusive |= other.inconclusive;
        for r in other.rules {
            self.rules.push(Rule { name: format!("{prefix}.{}", r.name), ..r });
        }
        for (n, v) in other.scalars {
            self.scalars.push((format!("{prefix}.{n}"), v));
        }
        for (n, t) in other.tables {
            self.tables.push((format!("{prefix}_{n}"), t));
        }
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let status = if self.inconclusive {
            "INCONCLUSIVE"
        } else if self.passed() {
            "PASS"
        } else {
            "FAIL"
        };
        let _ = writeln!(s, "experiment: {}", self.kind.name());
        let _ = writeln!(s, "status: {status}");
        let p = &self.provenance;
        let _ = writeln!(s, "config_hash: {}", p.config_hash);
        let _ = writeln!(s, "seed: {}", p.seed);
        let _ = writeln!(s, "version: {}", p.version);
        let _ = writeln!(s, "\n[rules]");
        for r in &self.rules {
            let _ = writeln!(s, "{} {}: {}", if r.passed { "pass" } else { "FAIL" }, r.name, r.detail);
        }
        let _ = writeln!(s, "\n[scalars]");
        for (n, v) in &self.scalars {
            let _ = writeln!(s, "{n} = {}", fmt_f64(*v));
        }
        s
    }

    /// `summary.txt`, `rules.csv` and one CSV per table.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("summary.txt"), self.summary())?;
        let mut w = csv::Writer::from_path(dir.join("rules.csv")).map_err(csv_error)?;
        w.write_record(["rule", "passed", "detail"]).map_err(csv_error)?;
        for r in &self.rules {
            w.write_record([r.name.as_str(), if r.passed { "true" } else { "false" }, r.detail.as_str()])
                .map_err(csv_error)?;
        }
        w.flush()?;
        for (name, table) in &self.tables {
            table.save(&dir.join(format!("{name}.csv")))?;
        }
        Ok(())
    }
}

/// `[a, b, ...]` in compact scientific notation, for rule details.
fn list(xs: &[f64]) -> String {
    let items: Vec<String> = xs.iter().map(|x| format!("{x:.4e}")).collect();
    format!("[{}]", items.join(", "))
}

fn csv_error(e: csv::Error) -> crate::error::Error {
    crate::error::Error::Parse(e.to_string())
}

/// Dispatch by kind.
pub fn run(kind: ExperimentKind, config: &Config, exec: Execution) -> Result<Report> {
    match kind {
        ExperimentKind::Wave => run_wave(config, exec),
        ExperimentKind::Lln => run_lln(config, exec),
        ExperimentKind::Clt => run_clt(config, exec),
        ExperimentKind::Continuum => run_continuum(config, exec).map(|o| o.report),
        ExperimentKind::NoiseChecks => noise_checks(config, exec),
        ExperimentKind::Dispersion => dispersion_checks(config, exec),
        ExperimentKind::Ito => ito_check(config, exec),
    }
}
