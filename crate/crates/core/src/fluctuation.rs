//! Wiener-Hopf factors, reversal constants, last-exit transform and the
//! initial law of the process conditioned to stay non-positive, all for
//! spectrally negative models.
//!
//! Sign convention for the supremum factor: it is evaluated as
//! `-(αI + G^β)⁻¹ Δ_g` with `g = -G1`, which equals `(αI + G^β)⁻¹ Δ_{G1}`.
//! `G` and `R` inside `Δ_g` and `Δ_{R⁻¹q}` are taken without the extra
//! killing `β`: they describe where the untouched process attains its
//! extrema, while `β` only discounts occupation times.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{cdiag, complexify, inverse, rel_diff, CMatrix, C64};
use crate::model::{JumpLaw, MapModel, PhaseClass};
use crate::spectral::{fundamental, r_vector, FundamentalSet};

/// Exclusion radius around determinant roots and factor poles.
pub const ROOT_EXCLUSION: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactorKind {
    /// `E[e^{αX_{ζ-} - ⟨β,ζ⟩}; J_{ζ-}]`
    Killing,
    /// `E[e^{αX̄ - ⟨β,Ḡ⟩}; J̄]`
    Sup,
    /// `E[e^{αX̲ - ⟨β,G̲⟩}; J̲]`
    Inf,
    /// Killing-time transform of the process conditioned to stay positive.
    CondUp,
    /// Killing-time transform of the process conditioned to stay non-positive.
    CondDown,
}

impl FactorKind {
    pub const ALL: [FactorKind; 5] = [
        FactorKind::Killing,
        FactorKind::Sup,
        FactorKind::Inf,
        FactorKind::CondUp,
        FactorKind::CondDown,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FactorKind::Killing => "killing",
            FactorKind::Sup => "sup",
            FactorKind::Inf => "inf",
            FactorKind::CondUp => "cond-up",
            FactorKind::CondDown => "cond-down",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        FactorKind::ALL
            .into_iter()
            .find(|k| k.name() == s || k.name().replace('-', "_") == s)
            .ok_or_else(|| Error::Parse(format!("unknown factor kind {s:?}")))
    }

    /// Factors defined on the closed left half-plane.
    pub fn left_half_plane(self) -> bool {
        matches!(self, FactorKind::Sup | FactorKind::CondUp)
    }
}

/// Fundamental data of one model at extra killing `β` and at `β = 0`.
#[derive(Clone, Debug)]
pub struct WienerHopf {
    model: MapModel,
    beta: Vec<f64>,
    base: FundamentalSet,
    fund: FundamentalSet,
}

impl WienerHopf {
    pub fn new(model: &MapModel, beta: &[f64]) -> Result<Self> {
        let n = model.n();
        let base = fundamental(model, &vec![0.0; n])?;
        let fund = if beta.iter().all(|&b| b == 0.0) {
            base.clone()
        } else {
            fundamental(model, beta)?
        };
        Ok(WienerHopf {
            model: model.clone(),
            beta: beta.to_vec(),
            base,
            fund,
        })
    }

    pub fn model(&self) -> &MapModel {
        &self.model
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Fundamental set at `β`.
    pub fn fund(&self) -> &FundamentalSet {
        &self.fund
    }

    /// Fundamental set at `β = 0`.
    pub fn base(&self) -> &FundamentalSet {
        &self.base
    }

    /// The same construction for the time-reversed model.
    pub fn dual(&self) -> Result<WienerHopf> {
        WienerHopf::new(&self.model.dual()?, &self.beta)
    }

    fn n(&self) -> usize {
        self.model.n()
    }

    fn q(&self) -> &[f64] {
        self.model.kill()
    }

    /// `-G1` at `β = 0`.
    pub fn g_vec(&self) -> DVector<f64> {
        self.base.g_killing()
    }

    /// `R⁻¹q` at `β = 0`.
    pub fn r_inv_q(&self) -> Result<DVector<f64>> {
        let q = DVector::from_column_slice(self.q());
        self.base
            .r
            .clone()
            .lu()
            .solve(&q)
            .ok_or_else(|| Error::Singular("R at beta = 0".into()))
    }

    fn require_positive_kill(&self, what: &str) -> Result<()> {
        if self.q().iter().all(|&q| q > 0.0) {
            Ok(())
        } else {
            Err(Error::Domain(format!("{what} needs q > 0 in every phase")))
        }
    }

    fn check_away_from_roots(&self, alpha: C64) -> Result<()> {
        for z in &self.fund.root_data.roots {
            if (alpha - z).norm() < ROOT_EXCLUSION {
                return Err(Error::NearSingular(format!(
                    "alpha = {alpha} is within {ROOT_EXCLUSION} of determinant root {z}"
                )));
            }
        }
        Ok(())
    }

    fn psi_inv(&self, alpha: C64) -> Result<CMatrix> {
        inverse(&self.model.psi(alpha, &self.beta)?, "Psi^beta(alpha)")
    }

    fn shifted(&self, alpha: C64, m: &DMatrix<f64>) -> CMatrix {
        complexify(m) + CMatrix::identity(self.n(), self.n()) * alpha
    }

    /// Evaluates a factor after checking the half-plane and distance to
    /// singularities.
    pub fn factor(&self, kind: FactorKind, alpha: C64) -> Result<CMatrix> {
        if kind.left_half_plane() {
            if alpha.re > 0.0 {
                return Err(Error::Domain(format!(
                    "{} factor needs Re(alpha) <= 0, got {alpha}",
                    kind.name()
                )));
            }
        } else {
            if alpha.re < 0.0 {
                return Err(Error::Domain(format!(
                    "{} factor needs Re(alpha) >= 0, got {alpha}",
                    kind.name()
                )));
            }
            self.check_away_from_roots(alpha)?;
        }
        if matches!(kind, FactorKind::CondUp)
            || (kind == FactorKind::Inf && self.model.has_killing())
        {
            self.require_positive_kill(kind.name())?;
        }
        self.factor_unchecked(kind, alpha)
    }

    /// The closed-form rational expression, without domain checks. Used for
    /// analytic continuation in cross-checks.
    pub fn factor_unchecked(&self, kind: FactorKind, alpha: C64) -> Result<CMatrix> {
        let dq = cdiag(self.q());
        match kind {
            FactorKind::Killing => Ok(-(self.psi_inv(alpha)? * dq)),
            FactorKind::Sup => {
                let g = self.g_vec();
                let m = inverse(&self.shifted(alpha, &self.fund.g), "alpha I + G")
                    .map_err(|_| near_pole(alpha, "G"))?;
                Ok(-(m * cdiag(g.as_slice())))
            }
            FactorKind::CondDown => {
                let g = self.g_vec();
                let inv_g = cdiag(&g.iter().map(|x| 1.0 / x).collect::<Vec<_>>());
                Ok(inv_g * self.shifted(alpha, &self.fund.g) * self.psi_inv(alpha)? * dq)
            }
            FactorKind::Inf => {
                let right = self.inf_right_diag()?;
                Ok(-(self.psi_inv(alpha)?
                    * self.shifted(alpha, &self.fund.r)
                    * cdiag(right.as_slice())))
            }
            FactorKind::CondUp => {
                let riq = self.r_inv_q()?;
                let inv = cdiag(&riq.iter().map(|x| 1.0 / x).collect::<Vec<_>>());
                let m = inverse(&self.shifted(alpha, &self.fund.r), "alpha I + R")
                    .map_err(|_| near_pole(alpha, "R"))?;
                Ok(inv * m * dq)
            }
        }
    }

    /// Diagonal on the right of the infimum factor: `R⁻¹q`, or `-μr` without
    /// killing.
    fn inf_right_diag(&self) -> Result<DVector<f64>> {
        if self.model.has_killing() {
            self.r_inv_q()
        } else {
            let mu = self.model.stationary_drift()?;
            Ok(-(r_vector(&self.model)? * mu))
        }
    }

    /// `P[J̲]`: the infimum factor at `α = 0, β = 0`.
    pub fn prob_inf_phase(&self) -> Result<DMatrix<f64>> {
        let wh0 = self.at_zero_beta();
        Ok(wh0
            .factor(FactorKind::Inf, C64::new(0.0, 0.0))?
            .map(|z| z.re))
    }

    /// `P[J̄] = -G⁻¹Δ_g` at `β = 0`.
    pub fn prob_sup_phase(&self) -> Result<DMatrix<f64>> {
        let g = self.g_vec();
        let inv = crate::linalg::inverse_real(&self.base.g, "G")?;
        Ok(-(inv * DMatrix::from_diagonal(&g)))
    }

    fn at_zero_beta(&self) -> WienerHopf {
        WienerHopf {
            model: self.model.clone(),
            beta: vec![0.0; self.n()],
            base: self.base.clone(),
            fund: self.base.clone(),
        }
    }

    /// `E[e^{-⟨β,σ⟩}; J_σ]` for the last exit `σ` from `(-∞, 0]`.
    pub fn last_exit(&self) -> Result<DMatrix<f64>> {
        let q = self.q();
        if q.iter().all(|&x| x == 0.0) {
            let mu = self.model.stationary_drift()?;
            if mu <= 0.0 {
                return Err(Error::Drift(format!(
                    "stationary drift {mu} is not positive"
                )));
            }
            let r = r_vector(&self.model)?;
            return Ok(&self.fund.h * DMatrix::from_diagonal(&r) * mu);
        }
        self.require_positive_kill("last-exit transform")?;
        if self.beta.iter().any(|&b| b <= 0.0) {
            return Err(Error::Domain("last-exit transform needs beta > 0".into()));
        }
        let d = -self.r_inv_q()?;
        Ok(&self.fund.h * DMatrix::from_diagonal(&d))
    }
}

fn near_pole(alpha: C64, which: &str) -> Error {
    Error::NearSingular(format!("alpha = {alpha} is an eigenvalue of -{which}"))
}

#[derive(Clone, Debug, Serialize)]
pub struct ReversalConstants {
    /// `c_j = Σ_i π_i q_i P_i(J̲ = j)`.
    pub c: Vec<f64>,
    /// `c̄ = P̂[J̄]ᵀ Δ_π q`.
    pub c_bar: Vec<f64>,
    /// `c̲ = P̂[J̲]ᵀ Δ_π q`.
    pub c_under: Vec<f64>,
    /// `uᵀ = -(π∘q)ᵀ G⁻¹`.
    pub u: Vec<f64>,
    /// `û_j = -π_j (R⁻¹q)_j`.
    pub u_hat: Vec<f64>,
    /// `π·q`.
    pub total: f64,
}

/// Constants linking the model with its time reversal.
pub fn reversal_constants(model: &MapModel) -> Result<ReversalConstants> {
    let n = model.n();
    if model.kill().iter().any(|&q| q <= 0.0) {
        return Err(Error::Domain(
            "reversal constants need q > 0 in every phase".into(),
        ));
    }
    let zero = vec![0.0; n];
    let wh = WienerHopf::new(model, &zero)?;
    let dual = wh.dual()?;
    let pi = &wh.base.pi;
    let pq = DVector::from_iterator(n, (0..n).map(|i| pi[i] * model.kill()[i]));
    let weighted =
        |p: DMatrix<f64>| -> Vec<f64> { (p.transpose() * &pq).iter().copied().collect() };
    let c = weighted(wh.prob_inf_phase()?);
    let c_bar = weighted(dual.prob_sup_phase()?);
    let c_under = weighted(dual.prob_inf_phase()?);
    let g_inv = crate::linalg::inverse_real(&wh.base.g, "G")?;
    let u = (-(g_inv.transpose() * &pq)).iter().copied().collect();
    let riq = wh.r_inv_q()?;
    let u_hat = (0..n).map(|j| -pi[j] * riq[j]).collect();
    Ok(ReversalConstants {
        c,
        c_bar,
        c_under,
        u,
        u_hat,
        total: pq.sum(),
    })
}

/// Largest relative residuals of the factorization identities over a grid.
#[derive(Clone, Debug, Default, Serialize)]
pub struct WhResiduals {
    /// killing = inf × cond_up
    pub inf_up: f64,
    /// killing = sup × cond_down
    pub sup_down: f64,
    /// killing = inf × Δ_{c̄}⁻¹ × (dual sup)ᵀ Δ_π Δ_q
    pub full: f64,
    /// Δ_{c̄} cond_up = (dual sup)ᵀ Δ_π Δ_q
    pub up: f64,
    /// Δ_{c̲} cond_down = (dual inf)ᵀ Δ_π Δ_q
    pub down: f64,
    /// Same as `full` with Δ_{π∘q}⁻¹ in place of Δ_{c̄}⁻¹.
    pub naive_full: f64,
    pub points: usize,
}

impl WhResiduals {
    pub fn max_exact(&self) -> f64 {
        [self.inf_up, self.sup_down, self.full, self.up, self.down]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Evaluates every factorization identity at each `(α, β)` pair; `α` must lie
/// on the imaginary axis so that all factors are defined.
pub fn wh_residuals(model: &MapModel, alphas: &[C64], betas: &[Vec<f64>]) -> Result<WhResiduals> {
    let n = model.n();
    let consts = reversal_constants(model)?;
    let pi = model.stationary(true)?;
    let dpq = cdiag(&(0..n).map(|i| pi[i] * model.kill()[i]).collect::<Vec<_>>());
    let inv_diag = |v: &[f64]| cdiag(&v.iter().map(|x| 1.0 / x).collect::<Vec<_>>());
    let c_bar_inv = inv_diag(&consts.c_bar);
    let naive_inv = inv_diag(&(0..n).map(|i| pi[i] * model.kill()[i]).collect::<Vec<_>>());
    let c_bar = cdiag(&consts.c_bar);
    let c_under = cdiag(&consts.c_under);
    let mut out = WhResiduals::default();
    for beta in betas {
        let wh = WienerHopf::new(model, beta)?;
        let dual = wh.dual()?;
        for &alpha in alphas {
            if alpha.re != 0.0 {
                return Err(Error::Domain(format!(
                    "factorization grid needs imaginary alpha, got {alpha}"
                )));
            }
            let kill = wh.factor(FactorKind::Killing, alpha)?;
            let inf = wh.factor(FactorKind::Inf, alpha)?;
            let sup = wh.factor(FactorKind::Sup, alpha)?;
            let up = wh.factor(FactorKind::CondUp, alpha)?;
            let down = wh.factor(FactorKind::CondDown, alpha)?;
            let dsup = dual.factor(FactorKind::Sup, alpha)?;
            let dinf = dual.factor(FactorKind::Inf, alpha)?;
            let rev_sup = dsup.transpose() * &dpq;
            let rev_inf = dinf.transpose() * &dpq;
            out.inf_up = out.inf_up.max(rel_diff(&kill, &(&inf * &up)));
            out.sup_down = out.sup_down.max(rel_diff(&kill, &(&sup * &down)));
            out.full = out
                .full
                .max(rel_diff(&kill, &(&inf * &c_bar_inv * &rev_sup)));
            out.naive_full = out
                .naive_full
                .max(rel_diff(&kill, &(&inf * &naive_inv * &rev_sup)));
            out.up = out.up.max(rel_diff(&(&c_bar * &up), &rev_sup));
            out.down = out.down.max(rel_diff(&(&c_under * &down), &rev_inf));
            out.points += 1;
        }
    }
    Ok(out)
}

/// The last-exit transform `E[e^{-⟨β,σ⟩}; J_σ]` computed three independent
/// ways.
#[derive(Clone, Debug, Serialize)]
pub struct SigmaRoutes {
    /// Splitting at `σ`: `-H^β(R^β)⁻¹Δ_q` times the inverse of the
    /// conditioned-up killing transform at `α = 0`.
    pub splitting: Vec<Vec<f64>>,
    /// Reversal at `σ`: `û_j Ĥ^β_ji / π_i` from the dual model.
    pub reversal: Vec<Vec<f64>>,
    /// Splitting at the infimum: `H^β` rebuilt from the infimum factor on
    /// eigenvectors of `R^β`, times `Δ_{-R⁻¹q}`.
    pub infimum: Vec<Vec<f64>>,
    /// Largest pairwise relative difference.
    pub max_diff: f64,
}

/// Nodes on each circle used to evaluate the infimum factor at a root.
const CONTOUR_NODES: usize = 64;

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn sigma_routes(model: &MapModel, beta: &[f64]) -> Result<SigmaRoutes> {
    let n = model.n();
    let wh = WienerHopf::new(model, beta)?;
    wh.require_positive_kill("last-exit routes")?;
    if beta.iter().any(|&b| b <= 0.0) {
        return Err(Error::Domain("last-exit routes need beta > 0".into()));
    }
    let q = model.kill();
    let fund = wh.fund();

    let r_beta_inv = crate::linalg::inverse_real(&fund.r, "R^beta")?;
    let killed_positive = -(&fund.h * r_beta_inv * crate::linalg::diag(q));
    let up = wh
        .factor_unchecked(FactorKind::CondUp, C64::new(0.0, 0.0))?
        .map(|z| z.re);
    let up_inv = crate::linalg::inverse_real(&up, "conditioned-up transform at 0")?;
    let splitting = killed_positive * up_inv;

    let consts = reversal_constants(model)?;
    let dual = wh.dual()?;
    let pi = &fund.pi;
    let reversal = DMatrix::from_fn(n, n, |i, j| consts.u_hat[j] * dual.fund().h[(j, i)] / pi[i]);

    let d = -wh.r_inv_q()?;
    let h = local_time_from_infimum(&wh, &d)?;
    let infimum = h * DMatrix::from_diagonal(&d);

    let max_diff = [
        crate::linalg::rel_diff_real(&splitting, &reversal),
        crate::linalg::rel_diff_real(&splitting, &infimum),
        crate::linalg::rel_diff_real(&reversal, &infimum),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Ok(SigmaRoutes {
        splitting: rows(&splitting),
        reversal: rows(&reversal),
        infimum: rows(&infimum),
        max_diff,
    })
}

/// `H^β v_k = inf(λ_k) Δ_d⁻¹ v_k` for right eigenvectors `R^β v_k = -λ_k v_k`.
/// The infimum factor has a removable singularity at each root, so it is
/// evaluated as its mean over a small circle around the root.
fn local_time_from_infimum(wh: &WienerHopf, d: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = wh.n();
    let rd = &wh.fund().root_data;
    let w = CMatrix::from_rows(&rd.left.iter().map(|v| v.transpose()).collect::<Vec<_>>());
    let v = inverse(&w, "left eigenvector basis")?;
    let d_inv = cdiag(&d.iter().map(|x| 1.0 / x).collect::<Vec<_>>());
    let mut f = CMatrix::zeros(n, n);
    for (k, &lambda) in rd.roots.iter().enumerate() {
        let gap = rd
            .roots
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .map(|(_, z)| (z - lambda).norm())
            .fold(lambda.re, f64::min);
        let radius = 0.3 * gap;
        let mut mean = CMatrix::zeros(n, n);
        for m in 0..CONTOUR_NODES {
            let theta = 2.0 * std::f64::consts::PI * m as f64 / CONTOUR_NODES as f64;
            let alpha = lambda + C64::from_polar(radius, theta);
            mean += wh.factor_unchecked(FactorKind::Inf, alpha)?;
        }
        mean /= C64::new(CONTOUR_NODES as f64, 0.0);
        f.set_column(k, &(mean * &d_inv * v.column(k)));
    }
    let h = f * inverse(&v, "eigenvector basis of R")?;
    crate::linalg::real_part(&h, 1e-8, "H from the infimum route")
}

/// Law of the starting point of the process conditioned to stay
/// non-positive, from an UP phase `i`.
#[derive(Clone, Debug)]
pub struct InitialLaw {
    pub phase: usize,
    /// `c_i = -d_i e_iᵀG1 - q_i`.
    pub c: f64,
    /// Killing atom `q_i / (c_i + q_i)`.
    pub atom: f64,
    g: DMatrix<f64>,
    model: MapModel,
}

impl InitialLaw {
    pub fn new(model: &MapModel, fund: &FundamentalSet, phase: usize) -> Result<Self> {
        model.require_spectrally_negative()?;
        let classes = model.phase_partition()?;
        if classes[phase] != PhaseClass::Up {
            return Err(Error::Class {
                phase: phase + 1,
                class: classes[phase].name(),
                expected: "UP",
            });
        }
        let d = model.levy()[phase].drift;
        let total = d * fund.g_killing()[phase];
        let q = model.kill()[phase];
        Ok(InitialLaw {
            phase,
            c: total - q,
            atom: q / total,
            g: fund.g.clone(),
            model: model.clone(),
        })
    }

    fn normalizer(&self) -> f64 {
        self.c + self.model.kill()[self.phase]
    }

    /// `(1 - e_jᵀ e^{-Gx} 1) / (-d_i e_iᵀG1)` for `x < 0`: density against
    /// the jump measure `U_ij(dx)`.
    pub fn density_factor(&self, j: usize, x: f64) -> f64 {
        let e = (&self.g * -x).exp();
        (1.0 - e.row(j).sum()) / self.normalizer()
    }

    /// Total rate and law of jumps from phase `i` landing in phase `j`.
    fn jump_measure(&self, j: usize) -> Option<(f64, &JumpLaw)> {
        let i = self.phase;
        if i == j {
            let c = &self.model.levy()[i];
            c.jump_law.as_ref().map(|l| (c.jump_rate, l))
        } else {
            let r = self.model.switch_rate()[(i, j)];
            (r > 0.0).then(|| (r, self.model.switch_jump(i, j)))
        }
    }

    /// Probability that the conditioned process starts in `[a, b)` (with
    /// `a < b <= 0`) in phase `j`.
    pub fn bin_mass(&self, j: usize, a: f64, b: f64) -> Result<f64> {
        let Some((rate, law)) = self.jump_measure(j) else {
            return Ok(0.0);
        };
        let n = self.model.n();
        let one = DVector::from_element(n, 1.0);
        let mut mass = 0.0;
        for (w, atom) in law.atoms() {
            match atom {
                JumpLaw::Point { value } => {
                    let v = *value;
                    if v >= a && v < b && v < 0.0 {
                        mass += w * (1.0 - ((&self.g * -v).exp() * &one)[j]);
                    }
                }
                JumpLaw::ExpNeg { rate: rho } => {
                    // ∫_a^b (1 - e_jᵀ e^{-Gx} 1) ρ e^{ρx} dx
                    let id = DMatrix::<f64>::identity(n, n);
                    let shifted = &id * *rho - &self.g;
                    let inv = crate::linalg::inverse_real(&shifted, "rho I - G")?;
                    let ends = (&shifted * b).exp() - (&shifted * a).exp();
                    let matrix_part = (inv * ends * &one)[j] * rho;
                    let scalar_part = (rho * b).exp() - (rho * a).exp();
                    mass += w * (scalar_part - matrix_part);
                }
                JumpLaw::ExpPos { .. } => {}
                JumpLaw::Mixture { .. } => unreachable!("mixtures are flat"),
            }
        }
        Ok(rate * mass / self.normalizer())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::canonical::*;

    fn phi_m1() -> f64 {
        (-0.5 + 4.25f64.sqrt()) / 4.0
    }

    #[test]
    fn m1_extrema_factors_at_zero() {
        let wh = WienerHopf::new(&m1(), &[0.0]).unwrap();
        let z = C64::new(0.0, 0.0);
        assert!((wh.factor(FactorKind::Sup, z).unwrap()[(0, 0)] - 1.0).norm() < 1e-14);
        assert!((wh.factor(FactorKind::Inf, z).unwrap()[(0, 0)] - 1.0).norm() < 1e-14);
    }

    #[test]
    fn m1_killing_matches_scalar_formula() {
        let m = m1();
        let b = 0.3;
        let wh = WienerHopf::new(&m, &[b]).unwrap();
        for theta in [0.1, 0.7, 2.0] {
            let a = C64::new(0.0, theta);
            let psi = m.levy()[0].exponent(a).unwrap();
            let expect = -0.5 / (psi - 0.5 - b);
            assert!((wh.factor(FactorKind::Killing, a).unwrap()[(0, 0)] - expect).norm() < 1e-14);
        }
    }

    #[test]
    fn domain_errors() {
        let wh = WienerHopf::new(&m2(), &[0.0, 0.0]).unwrap();
        assert!(matches!(
            wh.factor(FactorKind::Sup, C64::new(0.5, 0.0)),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            wh.factor(FactorKind::Inf, C64::new(-0.5, 0.0)),
            Err(Error::Domain(_))
        ));
        let root = wh.fund().root_data.roots[0];
        assert!(matches!(
            wh.factor(FactorKind::Inf, root + 1e-8),
            Err(Error::NearSingular(_))
        ));
    }

    #[test]
    fn m1_constants() {
        let c = reversal_constants(&m1()).unwrap();
        assert!((c.c[0] - 0.5).abs() < 1e-12);
        assert!((c.u[0] - 0.5 / phi_m1()).abs() < 1e-12);
        assert!((c.c_bar[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn last_exit_scalar() {
        let m = m1();
        let b = 0.4;
        let wh = WienerHopf::new(&m, &[b]).unwrap();
        let s = crate::spectral::phi_scalar(&m.levy()[0], 0.5, b).unwrap();
        let expect = s.phi_prime * 0.5 / phi_m1();
        assert!((wh.last_exit().unwrap()[(0, 0)] - expect).abs() < 1e-12);
    }

    #[test]
    fn initial_law_vanishes_at_zero_and_needs_up_phase() {
        let m = m2();
        let f = fundamental(&m, &[0.0, 0.0]).unwrap();
        let law = InitialLaw::new(&m, &f, 0).unwrap();
        assert!(law.density_factor(0, -1e-12).abs() < 1e-10);
        assert!(law.c > 0.0 && law.atom > 0.0 && law.atom < 1.0);
        let total: f64 = (0..2).map(|j| law.bin_mass(j, -60.0, 0.0).unwrap()).sum();
        assert!(
            (total + law.atom - 1.0).abs() < 1e-10,
            "{total} + {}",
            law.atom
        );
    }

    #[test]
    fn last_exit_routes_agree() {
        for (m, b) in [(m1(), vec![0.4]), (m2(), vec![0.3, 0.7])] {
            let r = sigma_routes(&m, &b).unwrap();
            assert!(r.max_diff < 1e-8, "{r:?}");
            let direct = WienerHopf::new(&m, &b).unwrap().last_exit().unwrap();
            assert!((direct[(0, 0)] - r.infimum[0][0]).abs() < 1e-8);
        }
    }
}
