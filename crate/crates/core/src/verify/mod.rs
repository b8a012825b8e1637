//! Verification suites: every analytic formula is paired with an algebraic
//! residual or an independent Monte Carlo estimate, and the outcome is
//! collected in a [`CheckReport`].
//!
//! Monte Carlo comparisons use z-scores against a threshold (4 by default);
//! two-sample comparisons combine both standard errors. Reports carry no
//! timing information, so identical inputs give byte-identical output.

mod analytic;
mod init_law;
mod montecarlo;
mod reversal;
mod splitting;

use std::fmt::Write as _;

use rand::Rng;
use serde::Serialize;

pub use analytic::{fg_residual, verify_factorization, verify_identities, verify_sigma_routes};
pub use init_law::verify_init_law;
pub use montecarlo::{verify_mc, McGrid, McTarget};
pub use reversal::{verify_reversal, verify_timerev, ReversalKind, TimerevParams};
pub use splitting::verify_splitting;

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::model::MapModel;
use crate::simulate::{McConfig, Path, Simulator};

/// Default z-score threshold.
pub const Z_MAX: f64 = 4.0;
/// Conditioning events rarer than this many paths abort a suite.
pub const MIN_CONDITIONED: usize = 1000;
/// Above this many checks a multiple-comparison note is attached.
const MANY_CHECKS: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    /// Closed-form value, or the left side of a two-sample comparison.
    pub analytic: Option<f64>,
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    pub z: Option<f64>,
    pub residual: Option<f64>,
    /// z threshold or residual tolerance.
    pub tol: f64,
    pub pass: bool,
    /// Reported but never gating.
    pub informational: bool,
}

fn z_score(diff: f64, se: f64) -> f64 {
    // a degenerate estimate that agrees to rounding is a match
    if diff == 0.0 || (se == 0.0 && diff.abs() < 1e-12) {
        0.0
    } else {
        diff / se
    }
}

impl Check {
    pub fn residual(name: impl Into<String>, residual: f64, tol: f64) -> Self {
        Check {
            name: name.into(),
            analytic: None,
            estimate: None,
            se: None,
            z: None,
            residual: Some(residual),
            tol,
            pass: residual <= tol,
            informational: false,
        }
    }

    /// Monte Carlo estimate against a closed-form value.
    pub fn z(name: impl Into<String>, analytic: f64, estimate: f64, se: f64, limit: f64) -> Self {
        let z = z_score(estimate - analytic, se);
        Check {
            name: name.into(),
            analytic: Some(analytic),
            estimate: Some(estimate),
            se: Some(se),
            z: Some(z),
            residual: None,
            tol: limit,
            pass: z.abs() <= limit,
            informational: false,
        }
    }

    /// Two independent estimates of the same quantity, each `(value, se)`.
    pub fn two_sample(
        name: impl Into<String>,
        left: (f64, f64),
        right: (f64, f64),
        limit: f64,
    ) -> Self {
        let se = left.1.hypot(right.1);
        let z = z_score(left.0 - right.0, se);
        Check {
            name: name.into(),
            analytic: Some(left.0),
            estimate: Some(right.0),
            se: Some(se),
            z: Some(z),
            residual: None,
            tol: limit,
            pass: z.abs() <= limit,
            informational: false,
        }
    }

    /// A goodness-of-fit p-value that must exceed `level`.
    pub fn p_value(name: impl Into<String>, p: f64, level: f64) -> Self {
        Check {
            name: name.into(),
            analytic: None,
            estimate: Some(p),
            se: None,
            z: None,
            residual: None,
            tol: level,
            pass: p > level,
            informational: false,
        }
    }

    pub fn info(name: impl Into<String>, value: f64) -> Self {
        Check {
            name: name.into(),
            analytic: None,
            estimate: Some(value),
            se: None,
            z: None,
            residual: None,
            tol: 0.0,
            pass: true,
            informational: true,
        }
    }

    /// A check that holds by construction, reported with a reason.
    fn vacuous(name: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            analytic: None,
            estimate: None,
            se: None,
            z: None,
            residual: Some(0.0),
            tol: 0.0,
            pass: true,
            informational: false,
        }
    }

    pub fn informational(mut self) -> Self {
        self.informational = true;
        self.pass = true;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub suite: String,
    pub pass: bool,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub z_max: f64,
    pub max_abs_z: Option<f64>,
    pub notes: Vec<String>,
    pub checks: Vec<Check>,
}

impl CheckReport {
    pub fn new(suite: impl Into<String>) -> Self {
        CheckReport {
            suite: suite.into(),
            pass: true,
            seed: None,
            n: None,
            z_max: Z_MAX,
            max_abs_z: None,
            notes: Vec::new(),
            checks: Vec::new(),
        }
    }

    pub fn with_mc(mut self, cfg: &McConfig) -> Self {
        self.seed = Some(cfg.seed);
        self.n = Some(cfg.n);
        self
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    /// Appends the checks and notes of another report under a prefix.
    pub fn absorb(&mut self, prefix: &str, other: CheckReport) {
        for mut c in other.checks {
            c.name = format!("{prefix}{}", c.name);
            self.checks.push(c);
        }
        self.notes.extend(other.notes);
    }

    /// Computes the global flag and summary fields.
    pub fn finish(mut self) -> Self {
        self.pass = self.checks.iter().all(|c| c.pass || c.informational);
        self.max_abs_z = self
            .checks
            .iter()
            .filter(|c| !c.informational)
            .filter_map(|c| c.z)
            .map(f64::abs)
            .reduce(f64::max);
        let gating = self.checks.iter().filter(|c| !c.informational).count();
        let with_z = self
            .checks
            .iter()
            .filter(|c| !c.informational && c.z.is_some())
            .count();
        if with_z > MANY_CHECKS {
            self.notes.push(format!(
                "{with_z} z-tests at |z| <= {}: about {:.2} false alarms expected under correctness",
                self.z_max,
                with_z as f64 * two_sided_tail(self.z_max)
            ));
        }
        if gating == 0 {
            self.notes.push("no gating checks".into());
        }
        self
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass && !c.informational)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Fixed-width text table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "suite {}: {}{}",
            self.suite,
            if self.pass { "PASS" } else { "FAIL" },
            match (self.seed, self.n) {
                (Some(s), Some(n)) => format!(" (seed {s}, n {n})"),
                _ => String::new(),
            }
        );
        let width = self
            .checks
            .iter()
            .map(|c| c.name.len())
            .max()
            .unwrap_or(4)
            .max(4);
        let _ = writeln!(
            out,
            "{:<width$}  {:>14}  {:>14}  {:>10}  {:>10}  {:>10}  result",
            "name", "analytic", "estimate", "se", "z/resid", "tol"
        );
        let num = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6e}"));
        for c in &self.checks {
            let stat = c.z.or(c.residual);
            let result = if c.informational {
                "info"
            } else if c.pass {
                "ok"
            } else {
                "FAIL"
            };
            let _ = writeln!(
                out,
                "{:<width$}  {:>14}  {:>14}  {:>10}  {:>10}  {:>10}  {result}",
                c.name,
                num(c.analytic),
                num(c.estimate),
                c.se.map_or_else(|| "-".into(), |x| format!("{x:.3e}")),
                stat.map_or_else(|| "-".into(), |x| format!("{x:.3e}")),
                format!("{:.1e}", c.tol),
            );
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}

/// `P(|Z| > z)` for a standard normal.
fn two_sided_tail(z: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    2.0 * (1.0 - n.cdf(z))
}

/// Suites selectable from the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Identities,
    Factorization,
    Routes,
    Mc,
    Splitting,
    Timerev,
    Reversal,
    InitLaw,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::Identities,
        Suite::Factorization,
        Suite::Routes,
        Suite::Mc,
        Suite::Splitting,
        Suite::Timerev,
        Suite::Reversal,
        Suite::InitLaw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Identities => "identities",
            Suite::Factorization => "factorization",
            Suite::Routes => "routes",
            Suite::Mc => "mc",
            Suite::Splitting => "splitting",
            Suite::Timerev => "timerev",
            Suite::Reversal => "reversal",
            Suite::InitLaw => "init-law",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|k| k.name() == s || k.name().replace('-', "_") == s)
            .ok_or_else(|| Error::Parse(format!("unknown suite {s:?}")))
    }

    /// Analytic suites need no random numbers.
    pub fn is_stochastic(self) -> bool {
        !matches!(
            self,
            Suite::Identities | Suite::Factorization | Suite::Routes
        )
    }
}

/// `β = (0.2, 0.1, 0.2, ...)`: distinct rates so that occupation vectors
/// matter entrywise.
pub fn default_beta(n: usize) -> Vec<f64> {
    (0..n).map(|i| if i % 2 == 0 { 0.2 } else { 0.1 }).collect()
}

/// Runs a suite with default parameters.
pub fn run_suite(suite: Suite, model: &MapModel, cfg: &McConfig) -> Result<CheckReport> {
    let n = model.n();
    let zero = vec![0.0; n];
    match suite {
        Suite::Identities => verify_identities(model, &[zero, default_beta(n)]),
        Suite::Factorization => {
            verify_factorization(model, &analytic::default_alphas(), &[zero, vec![0.2; n]])
        }
        Suite::Routes => verify_sigma_routes(model, &[vec![0.3; n], default_beta(n)]),
        Suite::Mc => verify_mc(model, &McGrid::defaults(n), cfg),
        Suite::Splitting => verify_splitting(model, cfg),
        Suite::Timerev => verify_timerev(model, &TimerevParams::defaults(n), cfg),
        Suite::Reversal => {
            let mut report = CheckReport::new("reversal").with_mc(cfg);
            for kind in [
                ReversalKind::Infimum,
                ReversalKind::LastExit(0.0),
                ReversalKind::FirstPassage(1.0),
            ] {
                let r = verify_reversal(model, kind, cfg)?;
                report.absorb(&format!("{} ", kind.name()), r);
            }
            Ok(report.finish())
        }
        Suite::InitLaw => verify_init_law(model, cfg),
    }
}

/// Cumulative weights for drawing a start phase.
pub(crate) struct PhaseDraw(Vec<f64>);

impl PhaseDraw {
    pub fn new(weights: &[f64]) -> Self {
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        PhaseDraw(
            weights
                .iter()
                .map(|w| {
                    acc += w / total;
                    acc
                })
                .collect(),
        )
    }

    pub fn uniform(n: usize) -> Self {
        PhaseDraw::new(&vec![1.0; n])
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.0
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.0.len() - 1)
    }

    /// A path from level 0 in a drawn phase.
    pub fn path<R: Rng + ?Sized>(&self, sim: &Simulator, rng: &mut R) -> Result<Path> {
        let j0 = self.draw(rng);
        sim.sample(rng, 0.0, j0)
    }
}

pub(crate) fn require_count(what: impl Into<String>, got: f64) -> Result<()> {
    let got = got.round() as usize;
    if got < MIN_CONDITIONED {
        return Err(Error::InsufficientSamples {
            what: what.into(),
            got,
            needed: MIN_CONDITIONED,
        });
    }
    Ok(())
}

/// `re+imi` with the shortest round-trip digits.
pub(crate) fn fmt_c(z: C64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else if z.im < 0.0 {
        format!("{}{}i", z.re, z.im)
    } else {
        format!("{}+{}i", z.re, z.im)
    }
}

pub(crate) fn fmt_v(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("({})", parts.join(","))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z_conventions() {
        assert_eq!(Check::z("a", 1.0, 1.0, 0.0, 4.0).z, Some(0.0));
        assert!(!Check::z("a", 1.0, 1.5, 0.0, 4.0).pass);
        let c = Check::two_sample("b", (1.0, 0.3), (0.0, 0.4), 4.0);
        assert!((c.z.unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn report_flags_and_notes() {
        let mut r = CheckReport::new("t");
        for k in 0..60 {
            r.push(Check::z(format!("c{k}"), 0.0, 0.1, 1.0, 4.0));
        }
        r.push(Check::info("naive", 5.0));
        let r = r.finish();
        assert!(r.pass);
        assert_eq!(r.notes.len(), 1);
        let mut bad = CheckReport::new("t");
        bad.push(Check::residual("r", 1e-3, 1e-8));
        assert!(!bad.finish().pass);
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(Suite::parse(s.name()).unwrap(), s);
        }
        assert!(Suite::parse("nope").is_err());
    }
}
