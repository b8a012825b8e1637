//! Time-reversal identities. Each side is estimated from its own sample:
//! the left side from the model, the right side from the dual model.
//! Weights such as `π_i` and `u_i` are folded in by starting from `J_0 ~ π`
//! and multiplying by a function of `J_0`.

use super::{default_beta, fmt_v, require_count, Check, CheckReport, PhaseDraw, Z_MAX};
use crate::error::{Error, Result};
use crate::fluctuation::reversal_constants;
use crate::linalg::C64;
use crate::model::{MapModel, PhaseClass};
use crate::simulate::{run_blocks, BlockMeans, Functional, McConfig, Path, ReverseAt, Simulator};

/// Agreement of the Monte Carlo `c` with its closed form, in standard errors.
const CONSTANT_Z: f64 = 3.0;

#[derive(Clone, Debug, PartialEq)]
pub struct TimerevParams {
    pub t: f64,
    pub alpha: f64,
    pub beta: Vec<f64>,
    /// Weights of the running supremum; one set of checks per value.
    pub gammas: Vec<f64>,
}

impl TimerevParams {
    pub fn defaults(n: usize) -> Self {
        TimerevParams {
            t: 1.0,
            alpha: -0.5,
            beta: default_beta(n),
            gammas: vec![0.0, -0.5],
        }
    }
}

fn functional(alpha: f64, gamma: f64, beta: &[f64]) -> Functional {
    Functional::new(C64::new(alpha, 0.0), gamma, beta)
}

fn value(f: &Functional, p: &Path) -> f64 {
    f.eval(p).re
}

/// Reversal at a fixed time and at the killing time.
pub fn verify_timerev(
    model: &MapModel,
    params: &TimerevParams,
    cfg: &McConfig,
) -> Result<CheckReport> {
    let n = model.n();
    if params.beta.len() != n {
        return Err(Error::Validation(
            "beta length must equal the number of phases".into(),
        ));
    }
    if !(params.t > 0.0) {
        return Err(Error::Domain(format!(
            "reversal time must be positive, got {}",
            params.t
        )));
    }
    let dual = model.dual()?;
    let pi = model.stationary(true)?;
    let q = model.kill();
    let start = PhaseDraw::new(pi.as_slice());
    let fs: Vec<Functional> = params
        .gammas
        .iter()
        .map(|&g| functional(params.alpha, g, &params.beta))
        .collect();
    let t = params.t;
    // layout: [identity][gamma][i][j], always indexed as in the left side
    let block = n * n;
    let per_identity = fs.len() * block;
    let slot = |id: usize, g: usize, i: usize, j: usize| id * per_identity + g * block + i * n + j;

    let sim = Simulator::new(model)?;
    let lhs = run_blocks(cfg, "timerev/model", 2 * per_identity, |_, rng, out| {
        let path = start.path(&sim, rng)?;
        let i = path.start_phase();
        let at_t = path.killed_at(t);
        let at_zeta = path.reverse(ReverseAt::ZetaMinus);
        for (g, f) in fs.iter().enumerate() {
            if let Some(k) = &at_t {
                out[slot(0, g, i, k.end_phase())] = value(f, &k.reverse(ReverseAt::ZetaMinus));
            }
            out[slot(1, g, i, path.end_phase())] = q[i] * value(f, &at_zeta);
        }
        Ok(())
    })?;
    let dual_sim = Simulator::new(&dual)?;
    let rhs = run_blocks(cfg, "timerev/dual", 2 * per_identity, |_, rng, out| {
        let path = start.path(&dual_sim, rng)?;
        let j = path.start_phase();
        let at_t = path.killed_at(t);
        for (g, f) in fs.iter().enumerate() {
            if let Some(k) = &at_t {
                out[slot(0, g, k.end_phase(), j)] = value(f, k);
            }
            out[slot(1, g, path.end_phase(), j)] = q[j] * value(f, &path);
        }
        Ok(())
    })?;

    let mut report = CheckReport::new("timerev").with_mc(cfg);
    let names = model.names();
    for (id, label) in [
        (0, format!("fixed time t={t}")),
        (1, "killing time".to_string()),
    ] {
        for (g, gamma) in params.gammas.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    let k = slot(id, g, i, j);
                    report.push(Check::two_sample(
                        format!("{label} gamma={gamma} [{},{}]", names[i], names[j]),
                        lhs.mean_se(k),
                        rhs.mean_se(k),
                        Z_MAX,
                    ));
                }
            }
        }
    }
    report.note(format!(
        "F = exp(alpha X_end + gamma X_sup - <beta, occupation>) with alpha = {}, beta = {}",
        params.alpha,
        fmt_v(&params.beta)
    ));
    Ok(report.finish())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReversalKind {
    Infimum,
    /// Last exit from `(-∞, a]`.
    LastExit(f64),
    /// First passage over `x > 0`.
    FirstPassage(f64),
}

impl ReversalKind {
    pub fn name(self) -> String {
        match self {
            ReversalKind::Infimum => "inf".into(),
            ReversalKind::LastExit(a) => format!("last a={a}"),
            ReversalKind::FirstPassage(x) => format!("first x={x}"),
        }
    }

    pub fn parse(kind: &str, level: Option<f64>) -> Result<Self> {
        match kind {
            "inf" => Ok(ReversalKind::Infimum),
            "last" => Ok(ReversalKind::LastExit(level.unwrap_or(0.0))),
            "first" => Ok(ReversalKind::FirstPassage(level.unwrap_or(1.0))),
            _ => Err(Error::Parse(format!("unknown reversal kind {kind:?}"))),
        }
    }

    /// The test functional: the end level is pinned for the passage
    /// identities, so the supremum carries the information there.
    fn functional(self, n: usize) -> Functional {
        match self {
            ReversalKind::Infimum => functional(0.5, 1.0, &default_beta(n)),
            _ => functional(0.0, -0.5, &default_beta(n)),
        }
    }
}

/// Right side given per conditioning phase `j`: `weight_j · m[i|j] / m[j]`.
struct ConditionedSide {
    bm: BlockMeans,
    n: usize,
}

impl ConditionedSide {
    /// Layout per `j`: `[1{cond=j}, F 1{cond=j, end=0}, ..., F 1{cond=j, end=n-1}]`.
    fn slot(n: usize, j: usize, i: Option<usize>) -> usize {
        j * (n + 1) + i.map_or(0, |i| i + 1)
    }

    fn estimate(&self, i: usize, j: usize, weight: f64) -> (f64, f64) {
        let (a, b) = (Self::slot(self.n, j, None), Self::slot(self.n, j, Some(i)));
        let (v, se) = self.bm.statistic(|m| m[b] / m[a]);
        (weight * v, weight * se)
    }

    fn count(&self, j: usize) -> f64 {
        self.bm.sum(Self::slot(self.n, j, None))
    }
}

/// Reversal at the infimum, at the last exit from `(-∞, a]` or at the first
/// passage over `x`, against the dual model.
pub fn verify_reversal(
    model: &MapModel,
    kind: ReversalKind,
    cfg: &McConfig,
) -> Result<CheckReport> {
    model.require_spectrally_negative()?;
    let n = model.n();
    let names = model.names();
    let consts = reversal_constants(model)?;
    let dual = model.dual()?;
    let pi = model.stationary(true)?;
    let q = model.kill();
    let start = PhaseDraw::new(pi.as_slice());
    let f = kind.functional(n);
    let sim = Simulator::new(model)?;
    let dual_sim = Simulator::new(&dual)?;
    let tag = kind.name();
    let mut report = CheckReport::new(format!("reversal {tag}")).with_mc(cfg);

    // left-side weight of start phase i and right-side weight of phase j
    let (left_weight, right_weight): (Vec<f64>, Vec<f64>) = match kind {
        ReversalKind::Infimum => ((0..n).map(|i| q[i]).collect(), consts.c.clone()),
        ReversalKind::LastExit(_) => (
            (0..n).map(|i| consts.u[i] / pi[i]).collect(),
            (0..n).map(|j| consts.u_hat[j] / pi[j]).collect(),
        ),
        ReversalKind::FirstPassage(x) => {
            if !(x > 0.0) {
                return Err(Error::Domain(format!(
                    "first-passage level must be positive, got {x}"
                )));
            }
            (
                (0..n).map(|i| consts.u[i] / pi[i]).collect(),
                consts.u.clone(),
            )
        }
    };

    // left side, plus Σ_i π_i q_i 1{J̲ = j} for the constant c
    let lhs = run_blocks(
        cfg,
        &format!("reversal/{tag}/model"),
        n * n + 2 * n,
        |_, rng, out| {
            let path = start.path(&sim, rng)?;
            let i = path.start_phase();
            match kind {
                ReversalKind::Infimum => {
                    let inf = path.summary(0.0, 0.0).inf;
                    let r = path.reverse_at(inf.mark, inf.attained);
                    out[i * n + inf.phase] = left_weight[i] * value(&f, &r);
                    out[n * n + inf.phase] = q[i];
                }
                ReversalKind::LastExit(a) => {
                    let s = path.summary(a, 0.0);
                    let le = s.last_exit;
                    if let (true, Some(j)) = (le.continuous, le.phase) {
                        out[i * n + j] =
                            left_weight[i] * value(&f, &path.reverse_at(le.mark, true));
                    }
                    out[n * n + i] = 1.0;
                    if s.inf.value >= 0.0 {
                        out[n * n + n + i] = 1.0;
                    }
                }
                ReversalKind::FirstPassage(x) => {
                    if let Some(fp) = path.summary(0.0, x).first_passage {
                        if fp.creep {
                            out[i * n + fp.phase] =
                                left_weight[i] * value(&f, &path.reverse_at(fp.mark, true));
                        }
                    }
                }
            }
            Ok(())
        },
    )?;

    let rhs: Box<dyn Fn(usize, usize) -> (f64, f64)> = match kind {
        ReversalKind::LastExit(a) => {
            let bm = run_blocks(
                cfg,
                &format!("reversal/{tag}/dual"),
                n * n,
                |_, rng, out| {
                    let path = start.path(&dual_sim, rng)?;
                    let j = path.start_phase();
                    let le = path.summary(a, 0.0).last_exit;
                    if let (true, Some(i)) = (le.continuous, le.phase) {
                        if let Some(k) = path.killed_at(le.time) {
                            out[i * n + j] = right_weight[j] * value(&f, &k);
                        } else {
                            return Err(Error::Convergence(
                                "last exit at or after the killing time".into(),
                            ));
                        }
                    }
                    Ok(())
                },
            )?;
            Box::new(move |i, j| bm.mean_se(i * n + j))
        }
        ReversalKind::Infimum | ReversalKind::FirstPassage(_) => {
            let dim = n * (n + 1);
            let bm = run_blocks(cfg, &format!("reversal/{tag}/dual"), dim, |_, rng, out| {
                let path = start.path(&dual_sim, rng)?;
                let s = path.summary(0.0, 0.0);
                match kind {
                    ReversalKind::Infimum => {
                        // law conditioned to stay non-positive, from phase J̄
                        let j = s.sup.phase;
                        let post = path.after(s.sup.mark, s.sup.value);
                        out[ConditionedSide::slot(n, j, None)] = 1.0;
                        out[ConditionedSide::slot(n, j, Some(post.end_phase()))] = value(&f, &post);
                    }
                    ReversalKind::FirstPassage(x) => {
                        // law conditioned to stay positive, from phase J̲
                        let j = s.inf.phase;
                        out[ConditionedSide::slot(n, j, None)] = 1.0;
                        let post = path.after(s.inf.mark, s.inf.value);
                        let le = post.summary(x, 0.0).last_exit;
                        if let (true, Some(i)) = (le.continuous, le.phase) {
                            if let Some(k) = post.killed_at(le.time) {
                                out[ConditionedSide::slot(n, j, Some(i))] = value(&f, &k);
                            }
                        }
                    }
                    ReversalKind::LastExit(_) => unreachable!(),
                }
                Ok(())
            })?;
            let side = ConditionedSide { bm, n };
            let dual_classes = dual.phase_partition()?;
            for j in 0..n {
                let relevant = match kind {
                    ReversalKind::Infimum => right_weight[j] > 0.0,
                    _ => right_weight[j] > 0.0 && dual_classes[j] != PhaseClass::Down,
                };
                if relevant {
                    require_count(
                        format!("dual paths conditioned on phase {}", names[j]),
                        side.count(j),
                    )?;
                }
            }
            let weights = right_weight.clone();
            Box::new(move |i, j| {
                if weights[j] == 0.0 {
                    (0.0, 0.0)
                } else {
                    side.estimate(i, j, weights[j])
                }
            })
        }
    };

    for i in 0..n {
        for j in 0..n {
            report.push(Check::two_sample(
                format!("[{},{}]", names[i], names[j]),
                lhs.mean_se(i * n + j),
                rhs(i, j),
                Z_MAX,
            ));
        }
    }
    if kind == ReversalKind::Infimum {
        for j in 0..n {
            let (est, se) = lhs.mean_se(n * n + j);
            report.push(Check::z(
                format!("constant c [{}]", names[j]),
                consts.c[j],
                est,
                se,
                CONSTANT_Z,
            ));
        }
    }
    if let ReversalKind::LastExit(_) = kind {
        // P_j(X̲ >= 0) = û_j / (π_j d_j) for drifting-up phases; reported only
        for j in 0..n {
            let d = model.levy()[j].drift;
            if d > 0.0 && model.levy()[j].sigma2 == 0.0 {
                let (est, se) = lhs.statistic(|m| m[n * n + n + j] / m[n * n + j]);
                report.push(
                    Check::z(
                        format!("P(stay above start) = u_hat/(pi d) [{}]", names[j]),
                        consts.u_hat[j] / (pi[j] * d),
                        est,
                        se,
                        Z_MAX,
                    )
                    .informational(),
                );
            }
        }
    }
    if let ReversalKind::FirstPassage(_) = kind {
        report.note(
            "creep at the passage time is sure for this class, so conditioning on it is vacuous",
        );
    }
    report.note(format!(
        "F = exp(alpha X_end + gamma X_sup - <beta, occupation>) with alpha = {}, gamma = {}, beta = {}",
        f.alpha.re,
        f.gamma,
        fmt_v(&f.beta)
    ));
    Ok(report.finish())
}
