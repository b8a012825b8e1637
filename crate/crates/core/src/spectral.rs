//! Right half-plane roots of `det Ψ^β(λ)` and the fundamental matrices
//! `G`, `R`, `H` of a spectrally negative model.
//!
//! Every admissible jump law has a rational transform with poles on the
//! negative real axis, so clearing denominators row by row turns the
//! determinant into a polynomial whose extra roots all sit at those poles.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{
    condition_number, inverse, inverse_real, normalize_phase, null_directions, real_part, CMatrix,
    CVector, C64,
};
use crate::model::{JumpLaw, LevyComponent, MapModel};
use crate::poly::Poly;

/// Roots closer than this are treated as a collision.
pub const MULTIPLICITY_TOL: f64 = 1e-6;
/// Reject eigenvector bases worse than this.
pub const COND_LIMIT: f64 = 1e10;
const RATE_MERGE_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct RootData {
    /// Sorted by real part, then imaginary part.
    pub roots: Vec<C64>,
    /// Right null vectors `Ψ^β(λ_k) u_k = 0`, unit norm.
    pub right: Vec<CVector>,
    /// Left null vectors `w_kᵀ Ψ^β(λ_k) = 0`, unit norm.
    pub left: Vec<CVector>,
    pub semi_simple: bool,
    /// A root at zero was inserted analytically (no killing, positive drift).
    pub zero_pinned: bool,
    /// `max_k ‖Ψ^β(λ_k) u_k‖`.
    pub right_residual: f64,
    /// `max_k ‖w_kᵀ Ψ^β(λ_k)‖`.
    pub left_residual: f64,
}

#[derive(Clone, Debug)]
pub struct FundamentalSet {
    pub g: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub pi: DVector<f64>,
    pub beta: Vec<f64>,
    pub root_data: RootData,
}

/// Transform of a jump law as `constant + Σ coef / (α + rate)`.
struct PartialFractions {
    constant: f64,
    terms: Vec<(f64, f64)>,
}

fn partial_fractions(law: &JumpLaw) -> Result<PartialFractions> {
    match law {
        JumpLaw::Point { value } if *value == 0.0 => Ok(PartialFractions {
            constant: 1.0,
            terms: Vec::new(),
        }),
        JumpLaw::Point { value } => Err(Error::Unsupported(format!(
            "point mass at {value} makes the exponent transcendental"
        ))),
        JumpLaw::ExpNeg { rate } => Ok(PartialFractions {
            constant: 0.0,
            terms: vec![(*rate, *rate)],
        }),
        JumpLaw::ExpPos { .. } => Err(Error::Unsupported("upward exponential jumps".into())),
        JumpLaw::Mixture {
            weights,
            components,
        } => {
            let mut out = PartialFractions {
                constant: 0.0,
                terms: Vec::new(),
            };
            for (w, comp) in weights.iter().zip(components) {
                let pf = partial_fractions(comp)?;
                out.constant += w * pf.constant;
                out.terms
                    .extend(pf.terms.into_iter().map(|(c, r)| (w * c, r)));
            }
            Ok(out)
        }
    }
}

/// Row entry as `poly + Σ coef / (α + rate)`.
#[derive(Default)]
struct RationalEntry {
    poly: Vec<f64>,
    terms: Vec<(f64, f64)>,
}

impl RationalEntry {
    fn add_poly(&mut self, p: &[f64]) {
        if self.poly.len() < p.len() {
            self.poly.resize(p.len(), 0.0);
        }
        for (a, b) in self.poly.iter_mut().zip(p) {
            *a += b;
        }
    }

    fn add_law(&mut self, scale: f64, law: &JumpLaw) -> Result<()> {
        let pf = partial_fractions(law)?;
        self.add_poly(&[scale * pf.constant]);
        self.terms
            .extend(pf.terms.into_iter().map(|(c, r)| (scale * c, r)));
        Ok(())
    }
}

fn same_rate(a: f64, b: f64) -> bool {
    (a - b).abs() <= RATE_MERGE_TOL * a.abs().max(b.abs())
}

/// Entries of `D_i(α) Ψ^β(α)` where `D_i` is the product of the distinct
/// pole factors of row `i`.
fn cleared_matrix(model: &MapModel, beta: &[f64]) -> Result<Vec<Vec<Poly>>> {
    let n = model.n();
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut entries: Vec<RationalEntry> = (0..n).map(|_| RationalEntry::default()).collect();
        let c = &model.levy()[i];
        let total = model.total_switch_rate(i) + model.kill()[i] + beta[i];
        entries[i].add_poly(&[-c.jump_rate - total, c.drift, 0.5 * c.sigma2]);
        if let Some(law) = &c.jump_law {
            entries[i].add_law(c.jump_rate, law)?;
        }
        for (j, entry) in entries.iter_mut().enumerate() {
            let q = model.switch_rate()[(i, j)];
            if j != i && q > 0.0 {
                entry.add_law(q, model.switch_jump(i, j))?;
            }
        }
        let mut rates: Vec<f64> = Vec::new();
        for e in &entries {
            for &(_, r) in &e.terms {
                if !rates.iter().any(|&x| same_rate(x, r)) {
                    rates.push(r);
                }
            }
        }
        let factor = |skip: Option<usize>| {
            rates
                .iter()
                .enumerate()
                .filter(|(k, _)| Some(*k) != skip)
                .fold(Poly::constant(1.0), |acc, (_, &r)| {
                    acc.mul(&Poly::linear(r, 1.0))
                })
        };
        let d_full = factor(None);
        let row = entries
            .iter()
            .map(|e| {
                let mut p = Poly(e.poly.clone()).mul(&d_full);
                for &(coef, r) in &e.terms {
                    let k = rates
                        .iter()
                        .position(|&x| same_rate(x, r))
                        .expect("rate collected above");
                    p = p.add(&factor(Some(k)).scale(coef));
                }
                p
            })
            .collect();
        rows.push(row);
    }
    Ok(rows)
}

/// Determinant of a polynomial matrix by cofactor expansion along rows,
/// memoized on the set of remaining columns.
fn poly_det(m: &[Vec<Poly>]) -> Poly {
    fn rec(m: &[Vec<Poly>], cols: usize, memo: &mut HashMap<usize, Poly>) -> Poly {
        let n = m.len();
        let row = n - cols.count_ones() as usize;
        if row == n {
            return Poly::constant(1.0);
        }
        if let Some(p) = memo.get(&cols) {
            return p.clone();
        }
        let mut acc = Poly::zero();
        let mut sign = 1.0;
        for j in 0..n {
            if cols & (1 << j) == 0 {
                continue;
            }
            let entry = &m[row][j];
            if entry.0.iter().any(|&c| c != 0.0) {
                let minor = rec(m, cols & !(1 << j), memo);
                acc = acc.add(&entry.mul(&minor).scale(sign));
            }
            sign = -sign;
        }
        memo.insert(cols, acc.clone());
        acc
    }
    let n = m.len();
    rec(m, (1 << n) - 1, &mut HashMap::new())
}

/// Cleared-denominator polynomial whose right half-plane roots are those of
/// `det Ψ^β`.
pub fn determinant_polynomial(model: &MapModel, beta: &[f64]) -> Result<Poly> {
    Ok(poly_det(&cleared_matrix(model, beta)?).trimmed())
}

fn check_admissible(model: &MapModel, beta: &[f64]) -> Result<()> {
    model.require_spectrally_negative()?;
    if beta.len() != model.n() || beta.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
        return Err(Error::Domain(
            "beta must be a nonnegative vector of length n".into(),
        ));
    }
    Ok(())
}

fn killing_present(model: &MapModel, beta: &[f64]) -> bool {
    model.has_killing() || beta.iter().any(|&b| b > 0.0)
}

/// Newton refinement of a root of `det Ψ^β` using
/// `(det Ψ)'/det Ψ = tr(Ψ⁻¹ Ψ')`, limited to steps well inside the gap to
/// the nearest other root.
fn polish(model: &MapModel, beta: &[f64], z: C64, gap: f64) -> C64 {
    let mut z = z;
    for _ in 0..3 {
        let Ok(psi) = model.psi(z, beta) else { break };
        let Ok(dpsi) = model.psi_deriv(z) else { break };
        let Some(inv) = psi.lu().try_inverse() else {
            break;
        };
        let tr = (inv * dpsi).trace();
        if !(tr.re.is_finite() && tr.im.is_finite()) || tr.norm() == 0.0 {
            break;
        }
        let step = C64::new(1.0, 0.0) / tr;
        if !(step.norm() < 0.1 * gap) {
            break;
        }
        z -= step;
        if step.norm() < 1e-15 * (1.0 + z.norm()) {
            break;
        }
    }
    z
}

/// Makes near-real roots exactly real and complex roots exact conjugate pairs.
fn symmetrize(roots: &mut Vec<C64>) -> Result<()> {
    for z in roots.iter_mut() {
        if z.im.abs() <= 1e-9 * (1.0 + z.re.abs()) {
            z.im = 0.0;
        }
    }
    let upper: Vec<C64> = roots.iter().copied().filter(|z| z.im > 0.0).collect();
    let mut lower: Vec<C64> = roots.iter().copied().filter(|z| z.im < 0.0).collect();
    if upper.len() != lower.len() {
        return Err(Error::Singular("complex roots do not pair up".into()));
    }
    let mut out: Vec<C64> = roots.iter().copied().filter(|z| z.im == 0.0).collect();
    for z in upper {
        let k = (0..lower.len())
            .min_by(|&a, &b| {
                (lower[a] - z.conj())
                    .norm()
                    .total_cmp(&(lower[b] - z.conj()).norm())
            })
            .expect("lower non-empty");
        lower.swap_remove(k);
        out.push(z);
        out.push(z.conj());
    }
    *roots = out;
    Ok(())
}

fn sort_roots(roots: &mut [C64]) {
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

fn check_multiplicity(roots: &[C64]) -> Result<()> {
    for (k, a) in roots.iter().enumerate() {
        for b in &roots[k + 1..] {
            if (a - b).norm() < MULTIPLICITY_TOL {
                return Err(Error::Multiplicity(*a, *b));
            }
        }
    }
    Ok(())
}

/// Roots of `det Ψ^β` in the right half-plane with their null vectors.
pub fn det_roots(model: &MapModel, beta: &[f64]) -> Result<RootData> {
    check_admissible(model, beta)?;
    let n = model.n();
    let killed = killing_present(model, beta);
    let zero_pinned = !killed;
    if zero_pinned {
        let mu = model.stationary_drift()?;
        if mu <= 0.0 {
            return Err(Error::Unsupported(format!(
                "no killing and stationary drift {mu} <= 0"
            )));
        }
    }
    let poly = determinant_polynomial(model, beta)?;
    let all = poly.roots();
    let threshold = 1e-9;
    let mut kept: Vec<C64> = all
        .iter()
        .copied()
        .filter(|z| z.re > threshold && !(zero_pinned && z.norm() < 1e-7))
        .collect();
    let expected = if zero_pinned { n - 1 } else { n };
    if kept.len() != expected {
        return Err(Error::Count {
            expected: n,
            found: kept.len() + usize::from(zero_pinned),
        });
    }
    if zero_pinned {
        kept.push(C64::new(0.0, 0.0));
    }
    sort_roots(&mut kept);
    check_multiplicity(&kept)?;
    let polished: Vec<C64> = kept
        .iter()
        .enumerate()
        .map(|(k, &z)| {
            if z.norm() == 0.0 && zero_pinned {
                return z;
            }
            let gap = all
                .iter()
                .enumerate()
                .filter(|(_, w)| (**w - z).norm() > 0.0)
                .map(|(_, w)| (w - z).norm())
                .chain(
                    kept.iter()
                        .enumerate()
                        .filter(|(j, _)| *j != k)
                        .map(|(_, w)| (w - z).norm()),
                )
                .fold(f64::INFINITY, f64::min);
            polish(model, beta, z, gap.max(1e-300))
        })
        .collect();
    let mut roots = polished;
    symmetrize(&mut roots)?;
    sort_roots(&mut roots);
    check_multiplicity(&roots)?;

    let pi = model.stationary(true)?;
    let mut right: Vec<CVector> = Vec::with_capacity(n);
    let mut left: Vec<CVector> = Vec::with_capacity(n);
    let mut right_residual = 0.0f64;
    let mut left_residual = 0.0f64;
    for (k, &z) in roots.iter().enumerate() {
        let psi = model.psi(z, beta)?;
        let (u, w) = if zero_pinned && z.norm() == 0.0 {
            (
                normalize_phase(&CVector::from_element(n, C64::new(1.0, 0.0))),
                normalize_phase(&CVector::from_iterator(
                    n,
                    pi.iter().map(|&p| C64::new(p, 0.0)),
                )),
            )
        } else if z.im < 0.0 && k > 0 && roots[k - 1] == z.conj() {
            (
                right[k - 1].map(|c| c.conj()),
                left[k - 1].map(|c| c.conj()),
            )
        } else {
            let (u, w) = null_directions(&psi);
            let (mut u, mut w) = (normalize_phase(&u), normalize_phase(&w));
            if z.im == 0.0 {
                u.iter_mut().for_each(|c| c.im = 0.0);
                w.iter_mut().for_each(|c| c.im = 0.0);
                u /= C64::new(u.norm(), 0.0);
                w /= C64::new(w.norm(), 0.0);
            }
            (u, w)
        };
        right_residual = right_residual.max((&psi * &u).norm());
        left_residual = left_residual.max((w.transpose() * &psi).norm());
        right.push(u);
        left.push(w);
    }
    Ok(RootData {
        roots,
        right,
        left,
        semi_simple: true,
        zero_pinned,
        right_residual,
        left_residual,
    })
}

impl FundamentalSet {
    pub fn n(&self) -> usize {
        self.g.nrows()
    }

    /// `e^{Gx}`: phase at first passage over `x >= 0`.
    pub fn first_passage(&self, x: f64) -> DMatrix<f64> {
        (&self.g * x).exp()
    }

    /// `-G 1`, the rate at which the first-passage chain is absorbed.
    pub fn g_killing(&self) -> DVector<f64> {
        -(&self.g * DVector::from_element(self.n(), 1.0))
    }

    /// Index of the pinned zero root, if any.
    pub fn zero_root(&self) -> Option<usize> {
        if self.root_data.zero_pinned {
            self.root_data.roots.iter().position(|z| z.norm() == 0.0)
        } else {
            None
        }
    }
}

/// `G`, `R`, `H` from the spectral data of `Ψ^β`.
pub fn fundamental(model: &MapModel, beta: &[f64]) -> Result<FundamentalSet> {
    let rd = det_roots(model, beta)?;
    let n = model.n();
    let u = CMatrix::from_columns(&rd.right);
    let w = CMatrix::from_rows(&rd.left.iter().map(|v| v.transpose()).collect::<Vec<_>>());
    let cu = condition_number(&u);
    let cw = condition_number(&w);
    if cu > COND_LIMIT || cw > COND_LIMIT {
        return Err(Error::IllConditioned(cu.max(cw)));
    }
    let lambda = CMatrix::from_diagonal(&CVector::from_column_slice(&rd.roots));
    let g = -(&u * &lambda * inverse(&u, "right eigenvector basis")?);
    let r = -(inverse(&w, "left eigenvector basis")? * &lambda * &w);
    let mut h = CMatrix::zeros(n, n);
    for k in 0..n {
        let d = model.psi_deriv(rd.roots[k])?;
        let denom = (rd.left[k].transpose() * &d * &rd.right[k])[(0, 0)];
        if denom.norm() == 0.0 {
            return Err(Error::Singular(
                "zero normalization in local-time matrix".into(),
            ));
        }
        h += &rd.right[k] * rd.left[k].transpose() / denom;
    }
    Ok(FundamentalSet {
        g: real_part(&g, 1e-10, "G")?,
        r: real_part(&r, 1e-10, "R")?,
        h: real_part(&h, 1e-10, "H")?,
        pi: model.stationary(true)?,
        beta: beta.to_vec(),
        root_data: rd,
    })
}

/// Evaluates `Ψ^β` at the matrix argument `-G` row by row, using closed
/// forms of the jump transforms: `E e^{-GU} = ρ(ρI - G)⁻¹` for `U ~ -Exp(ρ)`
/// and `e^{-Gv}` for a point mass. Vanishes when `G` is the first-passage
/// generator.
pub fn psi_at_minus(model: &MapModel, beta: &[f64], g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = model.n();
    let id = DMatrix::<f64>::identity(n, n);
    let transform = |law: &JumpLaw| -> Result<DMatrix<f64>> {
        let mut acc = DMatrix::zeros(n, n);
        for (w, atom) in law.atoms() {
            let m = match atom {
                JumpLaw::Point { value } => (g * -*value).exp(),
                JumpLaw::ExpNeg { rate } => inverse_real(&(&id * *rate - g), "rho I - G")? * *rate,
                JumpLaw::ExpPos { .. } => {
                    return Err(Error::Unsupported("upward exponential jumps".into()))
                }
                JumpLaw::Mixture { .. } => unreachable!("mixtures are flat"),
            };
            acc += m * w;
        }
        Ok(acc)
    };
    let g2 = g * g;
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        let c = &model.levy()[i];
        let total = model.total_switch_rate(i) + model.kill()[i] + beta[i];
        let mut row = g.row(i) * -c.drift + g2.row(i) * (0.5 * c.sigma2) - id.row(i) * total;
        if let Some(law) = &c.jump_law {
            row += (transform(law)? - &id).row(i) * c.jump_rate;
        }
        for j in 0..n {
            let q = model.switch_rate()[(i, j)];
            if j != i && q > 0.0 {
                row += transform(model.switch_jump(i, j))?.row(j) * q;
            }
        }
        out.set_row(i, &row);
    }
    Ok(out)
}

/// Largest relative residual among `Ĝ = Δ_π⁻¹RᵀΔ_π`, `R̂ = Δ_π⁻¹GᵀΔ_π`,
/// `Ĥ = Δ_π⁻¹HᵀΔ_π`.
pub fn dual_relation_residual(fund: &FundamentalSet, dual: &FundamentalSet) -> f64 {
    let pi = &fund.pi;
    let conj = |m: &DMatrix<f64>| {
        let mut out = m.transpose();
        for i in 0..out.nrows() {
            for j in 0..out.ncols() {
                out[(i, j)] *= pi[j] / pi[i];
            }
        }
        out
    };
    [
        crate::linalg::rel_diff_real(&dual.g, &conj(&fund.r)),
        crate::linalg::rel_diff_real(&dual.r, &conj(&fund.g)),
        crate::linalg::rel_diff_real(&dual.h, &conj(&fund.h)),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Relative residual of `HR = GH`.
pub fn hr_gh_residual(fund: &FundamentalSet) -> f64 {
    crate::linalg::rel_diff_real(&(&fund.h * &fund.r), &(&fund.g * &fund.h))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarRoot {
    /// Largest nonnegative root of `ψ(Φ) = q + β`.
    pub phi: f64,
    /// `Φ'(q + β) = 1/ψ'(Φ)`.
    pub phi_prime: f64,
}

/// Right inverse of a single-phase Laplace exponent by Newton's method from
/// the right, where convexity makes the iterates decrease monotonically.
pub fn phi_scalar(levy: &LevyComponent, q: f64, beta: f64) -> Result<ScalarRoot> {
    let target = q + beta;
    if levy.is_non_increasing() {
        return Err(Error::Validation(
            "non-increasing component has no right inverse".into(),
        ));
    }
    let f = |a: f64| -> Result<f64> { Ok(levy.exponent(C64::new(a, 0.0))?.re - target) };
    let df = |a: f64| -> Result<f64> { Ok(levy.exponent_deriv(C64::new(a, 0.0))?.re) };
    if target == 0.0 && levy.mean() >= 0.0 {
        let d = df(0.0)?;
        return Ok(ScalarRoot {
            phi: 0.0,
            phi_prime: 1.0 / d,
        });
    }
    let mut hi = 1.0;
    let mut guard = 0;
    while f(hi)? <= 0.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::Convergence(
                "no upper bracket for the scalar root".into(),
            ));
        }
    }
    let mut x = hi;
    for _ in 0..100 {
        let fx = f(x)?;
        let dx = df(x)?;
        if fx == 0.0 {
            return Ok(ScalarRoot {
                phi: x,
                phi_prime: 1.0 / dx,
            });
        }
        let next = x - fx / dx;
        if !next.is_finite() {
            x *= 0.5;
            continue;
        }
        // Iterates decrease monotonically; a non-decreasing step means the
        // root is resolved to rounding.
        if next >= x {
            return Ok(ScalarRoot {
                phi: x,
                phi_prime: 1.0 / dx,
            });
        }
        x = next.max(0.0);
    }
    Err(Error::Convergence(
        "scalar Newton iteration after 100 steps".into(),
    ))
}

/// Non-negative `r` with `R r = 0`, `π r = 1` for a model without killing and
/// positive stationary drift.
pub fn r_vector(model: &MapModel) -> Result<DVector<f64>> {
    if model.has_killing() {
        return Err(Error::Domain(
            "r is defined for models without killing".into(),
        ));
    }
    let mu = model.stationary_drift()?;
    if mu <= 0.0 {
        return Err(Error::Drift(format!(
            "stationary drift {mu} is not positive"
        )));
    }
    let n = model.n();
    let fund = fundamental(model, &vec![0.0; n])?;
    let k = fund.zero_root().expect("zero root pinned without killing");
    let w = CMatrix::from_rows(
        &fund
            .root_data
            .left
            .iter()
            .map(|v| v.transpose())
            .collect::<Vec<_>>(),
    );
    let col = inverse(&w, "left eigenvector basis")?
        .column(k)
        .into_owned();
    let col = real_part(
        &CMatrix::from_column_slice(n, 1, col.as_slice()),
        1e-10,
        "r",
    )?;
    let scale = (fund.pi.transpose() * &col)[(0, 0)];
    Ok(col.column(0) / scale)
}
