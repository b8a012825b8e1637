//! Algebraic suites: residuals that vanish exactly when the analytic
//! objects are correct.

use nalgebra::DMatrix;

use super::{fmt_c, fmt_v, Check, CheckReport};
use crate::error::Result;
use crate::fluctuation::{reversal_constants, sigma_routes, wh_residuals};
use crate::linalg::{inverse_real, max_abs_real, C64};
use crate::model::{JumpLaw, MapModel, PhaseClass};
use crate::spectral::{
    dual_relation_residual, fundamental, hr_gh_residual, psi_at_minus, FundamentalSet,
};

/// Tolerance for identity residuals.
pub const IDENTITY_TOL: f64 = 1e-8;
/// Tolerance for sums of constants that are equal by construction.
const SUM_TOL: f64 = 1e-12;

pub(crate) fn default_alphas() -> Vec<C64> {
    [0.0, 0.3, 1.0, -2.0, 5.0]
        .iter()
        .map(|&t| C64::new(0.0, t))
        .collect()
}

/// `∫ law(dx) e^{-Gx}` for a nonpositive jump law.
fn law_at_minus_g(law: &JumpLaw, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = g.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let mut acc = DMatrix::zeros(n, n);
    for (w, atom) in law.atoms() {
        acc += match atom {
            JumpLaw::Point { value } => (g * -*value).exp(),
            // E e^{G E} for E ~ Exp(ρ)
            JumpLaw::ExpNeg { rate } => inverse_real(&(&id * *rate - g), "rho I - G")? * *rate,
            JumpLaw::ExpPos { .. } | JumpLaw::Mixture { .. } => {
                unreachable!("spectrally negative, flat")
            }
        } * w;
    }
    Ok(acc)
}

/// Residual of the first-passage integral equation for an UP phase `i`:
/// `∫U_{i·}(dx)(e^{-Gx} - I) + Ψ^β_{i·}(0) - d_i e_iᵀG`, where `U` is the
/// jump measure (own jumps on the diagonal, switch rate times switch-jump
/// law off it).
pub fn fg_residual(model: &MapModel, fund: &FundamentalSet, i: usize) -> Result<f64> {
    let n = model.n();
    let g = &fund.g;
    let id = DMatrix::<f64>::identity(n, n);
    let mut psi0 = model.generator();
    for (k, b) in fund.beta.iter().enumerate() {
        psi0[(k, k)] -= b;
    }
    let levy = &model.levy()[i];
    let mut row = psi0.row(i) - g.row(i) * levy.drift;
    if let (Some(law), true) = (&levy.jump_law, levy.jump_rate > 0.0) {
        row += (law_at_minus_g(law, g)? - &id).row(i) * levy.jump_rate;
    }
    for j in 0..n {
        let rate = model.switch_rate()[(i, j)];
        if j != i && rate > 0.0 {
            row += (law_at_minus_g(model.switch_jump(i, j), g)? - &id).row(j) * rate;
        }
    }
    let scale = max_abs_real(&psi0).max(1.0);
    Ok(row.iter().map(|x| x.abs()).fold(0.0, f64::max) / scale)
}

/// Root residuals, `Ψ(-G) = 0`, `HR = GH`, dual relations and the
/// first-passage equation of every UP phase, for each `β`.
pub fn verify_identities(model: &MapModel, betas: &[Vec<f64>]) -> Result<CheckReport> {
    model.require_spectrally_negative()?;
    let classes = model.phase_partition()?;
    let dual = model.dual()?;
    let mut report = CheckReport::new("identities");
    for beta in betas {
        let tag = fmt_v(beta);
        let fund = fundamental(model, beta)?;
        let dual_fund = fundamental(&dual, beta)?;
        let rd = &fund.root_data;
        report.push(Check::residual(
            format!("root right null vectors beta={tag}"),
            rd.right_residual,
            IDENTITY_TOL,
        ));
        report.push(Check::residual(
            format!("root left null vectors beta={tag}"),
            rd.left_residual,
            IDENTITY_TOL,
        ));
        let psi_g = psi_at_minus(model, beta, &fund.g)?;
        let scale = max_abs_real(&model.generator()).max(1.0);
        report.push(Check::residual(
            format!("Psi(-G) = 0 beta={tag}"),
            max_abs_real(&psi_g) / scale,
            IDENTITY_TOL,
        ));
        report.push(Check::residual(
            format!("HR = GH beta={tag}"),
            hr_gh_residual(&fund),
            IDENTITY_TOL,
        ));
        report.push(Check::residual(
            format!("dual relations beta={tag}"),
            dual_relation_residual(&fund, &dual_fund),
            IDENTITY_TOL,
        ));
        for (i, class) in classes.iter().enumerate() {
            if *class == PhaseClass::Up {
                report.push(Check::residual(
                    format!("first-passage equation row {} beta={tag}", model.names()[i]),
                    fg_residual(model, &fund, i)?,
                    IDENTITY_TOL,
                ));
            }
        }
    }
    Ok(report.finish())
}

/// Factorization residuals over an imaginary `α` grid, the necessity of the
/// `Δ_{c̄}⁻¹` correction, and the sums of the reversal constants.
pub fn verify_factorization(
    model: &MapModel,
    alphas: &[C64],
    betas: &[Vec<f64>],
) -> Result<CheckReport> {
    model.require_spectrally_negative()?;
    let res = wh_residuals(model, alphas, betas)?;
    let mut report = CheckReport::new("factorization");
    for (name, value) in [
        ("killing = inf x cond-up", res.inf_up),
        ("killing = sup x cond-down", res.sup_down),
        ("killing = inf x diag(c_bar)^-1 x dual sup", res.full),
        ("diag(c_bar) cond-up = dual sup", res.up),
        ("diag(c_under) cond-down = dual inf", res.down),
    ] {
        report.push(Check::residual(name, value, IDENTITY_TOL));
    }
    report.push(Check::info(
        "naive correction diag(pi q)^-1 residual",
        res.naive_full,
    ));
    let consts = reversal_constants(model)?;
    let total = consts.total;
    for (name, v) in [
        ("c", &consts.c),
        ("c_bar", &consts.c_bar),
        ("c_under", &consts.c_under),
    ] {
        let s: f64 = v.iter().sum();
        report.push(Check::residual(
            format!("sum {name} = pi q"),
            (s - total).abs() / total,
            SUM_TOL,
        ));
    }
    let pi = model.stationary(true)?;
    let dev = consts
        .c_bar
        .iter()
        .enumerate()
        .map(|(i, c)| (c - pi[i] * model.kill()[i]).abs())
        .fold(0.0, f64::max);
    report.push(Check::info("max |c_bar - pi q| entrywise", dev));
    let grid: Vec<String> = alphas.iter().map(|a| fmt_c(*a)).collect();
    report.note(format!(
        "{} grid points: alpha in {{{}}}, {} beta vectors",
        res.points,
        grid.join(", "),
        betas.len()
    ));
    Ok(report.finish())
}

/// The last-exit transform by splitting at `σ`, by reversal at `σ` and by
/// splitting at the infimum.
pub fn verify_sigma_routes(model: &MapModel, betas: &[Vec<f64>]) -> Result<CheckReport> {
    let mut report = CheckReport::new("routes");
    for beta in betas {
        let routes = sigma_routes(model, beta)?;
        report.push(Check::residual(
            format!("three last-exit routes agree beta={}", fmt_v(beta)),
            routes.max_diff,
            IDENTITY_TOL,
        ));
    }
    Ok(report.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::canonical::{m1, m2};

    #[test]
    fn first_passage_equation_detects_a_wrong_g() {
        let m = m2();
        let mut fund = fundamental(&m, &[0.0, 0.0]).unwrap();
        assert!(fg_residual(&m, &fund, 0).unwrap() < 1e-10);
        fund.g[(0, 1)] += 1e-3;
        assert!(fg_residual(&m, &fund, 0).unwrap() > 1e-5);
    }

    #[test]
    fn scalar_identities_are_tight() {
        let r = verify_identities(&m1(), &[vec![0.0], vec![0.7]]).unwrap();
        assert!(r.pass);
        for c in &r.checks {
            assert!(c.residual.unwrap() < 1e-10, "{}", c.name);
        }
    }
}
