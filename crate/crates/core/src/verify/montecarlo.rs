//! Simulated transforms against the closed-form Wiener-Hopf factors and the
//! last-exit transform, entry by entry.

use serde::Serialize;

use super::{fmt_c, fmt_v, Check, CheckReport, Z_MAX};
use crate::error::{Error, Result};
use crate::fluctuation::{FactorKind, WienerHopf};
use crate::linalg::{CMatrix, C64};
use crate::model::MapModel;
use crate::simulate::{run_blocks, McConfig, Simulator, Target, MIN_PATHS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum McTarget {
    Killing,
    Sup,
    Inf,
    /// Last exit from `(-∞, 0]`; `α` is ignored.
    Sigma,
}

impl McTarget {
    pub fn name(self) -> &'static str {
        match self {
            McTarget::Killing => "killing",
            McTarget::Sup => "sup",
            McTarget::Inf => "inf",
            McTarget::Sigma => "sigma",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [
            McTarget::Killing,
            McTarget::Sup,
            McTarget::Inf,
            McTarget::Sigma,
        ]
        .into_iter()
        .find(|t| t.name() == s)
        .ok_or_else(|| Error::Parse(format!("unknown target {s:?}")))
    }

    fn path_target(self) -> Target {
        match self {
            McTarget::Killing => Target::Killing,
            McTarget::Sup => Target::Sup,
            McTarget::Inf => Target::Inf,
            McTarget::Sigma => Target::LastExit(0.0),
        }
    }

    fn analytic(self, wh: &WienerHopf, alpha: C64) -> Result<CMatrix> {
        match self {
            McTarget::Killing => wh.factor(FactorKind::Killing, alpha),
            McTarget::Sup => wh.factor(FactorKind::Sup, alpha),
            McTarget::Inf => wh.factor(FactorKind::Inf, alpha),
            McTarget::Sigma => Ok(crate::linalg::complexify(&wh.last_exit()?)),
        }
    }
}

/// Targets with their `α` and `β` grids.
#[derive(Clone, Debug)]
pub struct McGrid {
    pub entries: Vec<(McTarget, Vec<C64>, Vec<Vec<f64>>)>,
}

impl McGrid {
    pub fn defaults(n: usize) -> Self {
        let c = C64::new;
        let mixed = |a: f64, b: f64| {
            (0..n)
                .map(|i| if i % 2 == 0 { a } else { b })
                .collect::<Vec<_>>()
        };
        let betas = vec![vec![0.0; n], mixed(0.3, 0.7)];
        McGrid {
            entries: vec![
                (
                    McTarget::Killing,
                    vec![c(0.0, 0.0), c(0.0, 1.0), c(0.0, 2.0)],
                    betas.clone(),
                ),
                (
                    McTarget::Sup,
                    vec![c(0.0, 0.0), c(0.0, 1.0), c(-0.2, 0.5), c(-1.0, 0.0)],
                    betas.clone(),
                ),
                (
                    McTarget::Inf,
                    vec![c(0.0, 0.0), c(0.0, 1.0), c(0.5, 0.5), c(1.0, 0.0)],
                    betas,
                ),
                (
                    McTarget::Sigma,
                    vec![c(0.0, 0.0)],
                    vec![mixed(0.3, 0.7), mixed(0.5, 0.2)],
                ),
            ],
        }
    }

    /// Restricts the default grid to the listed targets.
    pub fn only(n: usize, targets: &[McTarget]) -> Self {
        let mut g = McGrid::defaults(n);
        g.entries.retain(|(t, _, _)| targets.contains(t));
        g
    }

    fn points(&self) -> Vec<(McTarget, C64, &[f64])> {
        let mut out = Vec::new();
        for (t, alphas, betas) in &self.entries {
            for beta in betas {
                for &a in alphas {
                    out.push((*t, a, beta.as_slice()));
                }
            }
        }
        out
    }
}

/// Compares every grid point entrywise; one simulation per start phase
/// serves all targets.
pub fn verify_mc(model: &MapModel, grid: &McGrid, cfg: &McConfig) -> Result<CheckReport> {
    model.require_spectrally_negative()?;
    if model.kill().iter().any(|&q| q <= 0.0) {
        return Err(Error::Domain(
            "Monte Carlo suite needs q > 0 in every phase".into(),
        ));
    }
    if cfg.n < MIN_PATHS {
        return Err(Error::InsufficientSamples {
            what: "transform paths".into(),
            got: cfg.n,
            needed: MIN_PATHS,
        });
    }
    let n = model.n();
    let points = grid.points();
    let mut analytic = Vec::with_capacity(points.len());
    for &(t, alpha, beta) in &points {
        let wh = WienerHopf::new(model, beta)?;
        analytic.push(t.analytic(&wh, alpha)?);
    }
    let sim = Simulator::new(model)?;
    let dim = points.len() * n * 2;
    let mut report = CheckReport::new("mc").with_mc(cfg);
    for i in 0..n {
        let bm = run_blocks(cfg, &format!("verify-mc/{i}"), dim, |_, rng, obs| {
            let s = sim.sample(rng, 0.0, i)?.summary(0.0, 0.0);
            for (g, &(t, alpha, beta)) in points.iter().enumerate() {
                if let Some((level, occ, j)) = t.path_target().read(&s) {
                    let disc: f64 = beta.iter().zip(occ).map(|(b, o)| b * o).sum();
                    let alpha = if t == McTarget::Sigma {
                        C64::new(0.0, 0.0)
                    } else {
                        alpha
                    };
                    let v = (alpha * level - disc).exp();
                    obs[(g * n + j) * 2] = v.re;
                    obs[(g * n + j) * 2 + 1] = v.im;
                }
            }
            Ok(())
        })?;
        for (g, &(t, alpha, beta)) in points.iter().enumerate() {
            let label = match t {
                McTarget::Sigma => format!("{} beta={}", t.name(), fmt_v(beta)),
                _ => format!("{} alpha={} beta={}", t.name(), fmt_c(alpha), fmt_v(beta)),
            };
            for j in 0..n {
                let exact = analytic[g][(i, j)];
                let (re, se) = bm.mean_se((g * n + j) * 2);
                let entry = format!("{label} [{},{}]", model.names()[i], model.names()[j]);
                report.push(Check::z(format!("{entry} re"), exact.re, re, se, Z_MAX));
                if alpha.im != 0.0 && t != McTarget::Sigma {
                    let (im, se) = bm.mean_se((g * n + j) * 2 + 1);
                    report.push(Check::z(format!("{entry} im"), exact.im, im, se, Z_MAX));
                }
            }
        }
    }
    Ok(report.finish())
}
