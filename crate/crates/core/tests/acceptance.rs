//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the lines are printed by a plain
//! `cargo test`; the process exits nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use mapfluct::canonical::{m1, m2, m2_with_kill, m3, random_spectrally_negative};
use mapfluct::fluctuation::{FactorKind, WienerHopf};
use mapfluct::simulate::McConfig;
use mapfluct::spectral::{fundamental, phi_scalar};
use mapfluct::verify::{
    run_suite, verify_factorization, verify_identities, verify_init_law, verify_mc,
    verify_reversal, verify_sigma_routes, verify_splitting, verify_timerev, CheckReport, McGrid,
    ReversalKind, Suite, TimerevParams,
};
use mapfluct::{JumpLaw, LevyComponent, MapModel, C64};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const N: usize = 1_000_000;
const SEED: u64 = 20_240_601;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn gate(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn failures(r: &CheckReport) -> String {
    let bad: Vec<String> = r
        .failures()
        .take(5)
        .map(|c| format!("{} (z {:?}, residual {:?})", c.name, c.z, c.residual))
        .collect();
    bad.join("; ")
}

/// Every report passes; summarises the largest |z| and residual.
fn all_pass(reports: &[CheckReport]) -> Outcome {
    let checks: usize = reports.iter().map(|r| r.checks.len()).sum();
    let mut summary = format!("{checks} checks");
    if let Some(z) = reports.iter().filter_map(|r| r.max_abs_z).reduce(f64::max) {
        summary += &format!(", max |z| {z:.2}");
    }
    let residual = reports
        .iter()
        .flat_map(|r| r.checks.iter())
        .filter(|c| !c.informational)
        .filter_map(|c| c.residual)
        .reduce(f64::max);
    if let Some(r) = residual {
        summary += &format!(", max residual {r:.1e}");
    }
    let bad: Vec<String> = reports
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("{}: {}", r.suite, failures(r)))
        .collect();
    gate(
        bad.is_empty(),
        if bad.is_empty() {
            summary
        } else {
            bad.join(" | ")
        },
    )
}

fn timed(limit: Duration, start: Instant, outcome: Outcome) -> Outcome {
    let took = start.elapsed();
    match outcome {
        Ok(d) if took < limit => Ok(format!("{d}, {:.2}s", took.as_secs_f64())),
        Ok(d) => Err(format!(
            "{d}, took {:.2}s (limit {:?})",
            took.as_secs_f64(),
            limit
        )),
        Err(d) => Err(d),
    }
}

fn lift<T>(r: mapfluct::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn fundamental_residuals() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut models = vec![m1(), m2()];
    models.extend((0..20).map(|k| random_spectrally_negative(&mut rng, 2 + k % 3)));
    let mut reports = Vec::new();
    for m in &models {
        let n = m.n();
        let beta: Vec<f64> = (0..n).map(|i| 0.1 + 0.2 * i as f64).collect();
        reports.push(lift(verify_identities(m, &[vec![0.0; n], beta]))?);
    }
    timed(Duration::from_secs(5), start, all_pass(&reports))
}

/// Root of `ψ(a) = target` for a single phase by bisection on the closed form
/// of its exponent with `ExpNeg` jumps, together with `1/ψ'(root)`.
fn bisect_root(d: f64, s2: f64, lambda: f64, rho: f64, target: f64) -> (f64, f64) {
    let psi = |a: f64| d * a + 0.5 * s2 * a * a + lambda * (rho / (rho + a) - 1.0) - target;
    let dpsi = |a: f64| d + s2 * a - lambda * rho / (rho + a).powi(2);
    let (mut lo, mut hi) = (1e-12, 1.0);
    while psi(hi) <= 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if psi(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let phi = 0.5 * (lo + hi);
    (phi, 1.0 / dpsi(phi))
}

fn levy_reduction() -> Outcome {
    // (drift, sigma2, jump rate, exponential rate, killing)
    let cases = [
        (2.0, 0.0, 1.0, 1.0, 0.5),
        (1.0, 0.5, 2.0, 2.0, 0.3),
        (0.5, 1.0, 0.0, 1.0, 1.0),
        (3.0, 0.0, 4.0, 0.8, 0.1),
    ];
    let mut worst_fund: f64 = 0.0;
    let mut worst_wh: f64 = 0.0;
    let mut points = 0;
    for &(d, s2, lambda, rho, q) in &cases {
        let levy = LevyComponent {
            drift: d,
            sigma2: s2,
            jump_rate: lambda,
            jump_law: (lambda > 0.0).then_some(JumpLaw::ExpNeg { rate: rho }),
        };
        let model = lift(MapModel::unnamed(
            vec![levy.clone()],
            DMatrix::zeros(1, 1),
            vec![vec![JumpLaw::zero()]],
            vec![q],
        ))?;
        let (phi, phi_prime) = bisect_root(d, s2, lambda, rho, q);
        let newton = lift(phi_scalar(&levy, q, 0.0))?;
        let f = lift(fundamental(&model, &[0.0]))?;
        for got in [f.g[(0, 0)], f.r[(0, 0)]] {
            worst_fund = worst_fund.max((got + phi).abs() / phi);
        }
        worst_fund = worst_fund.max((f.h[(0, 0)] - phi_prime).abs() / phi_prime);
        worst_fund = worst_fund.max((newton.phi - phi).abs() / phi);
        worst_fund = worst_fund.max((newton.phi_prime - phi_prime).abs() / phi_prime);

        for beta in [0.0, 0.4] {
            let (phi_b, _) = bisect_root(d, s2, lambda, rho, q + beta);
            let wh = lift(WienerHopf::new(&model, &[beta]))?;
            let psi_b = |a: C64| {
                a * d + a * a * (0.5 * s2) + (C64::new(rho, 0.0) / (a + rho) - 1.0) * lambda
                    - q
                    - beta
            };
            for re in 0..5 {
                for im in 0..5 {
                    let y = [0.1, 0.5, 1.0, 2.0, 5.0][im];
                    let x = [0.0, 0.25, 0.5, 1.0, 2.0][re];
                    let a_sup = C64::new(-x, y);
                    let a_inf = C64::new(x, y);
                    let sup = -phi / (a_sup - phi_b);
                    let inf = (a_inf - phi_b) * q / (psi_b(a_inf) * phi);
                    let killing = -q / psi_b(a_inf);
                    let got_sup = lift(wh.factor(FactorKind::Sup, a_sup))?[(0, 0)];
                    let got_inf = lift(wh.factor(FactorKind::Inf, a_inf))?[(0, 0)];
                    let got_kill = lift(wh.factor(FactorKind::Killing, a_inf))?[(0, 0)];
                    worst_wh = worst_wh
                        .max((got_sup - sup).norm() / sup.norm().max(1.0))
                        .max((got_inf - inf).norm() / inf.norm().max(1.0))
                        .max((got_kill - killing).norm() / killing.norm().max(1.0));
                    points += 1;
                }
            }
        }
    }
    gate(
        worst_fund < 1e-8 && worst_wh < 1e-10,
        format!(
            "G, R, H relative error {worst_fund:.1e} (limit 1e-8); scalar factors {worst_wh:.1e} over {points} points (limit 1e-10)"
        ),
    )
}

fn factorization() -> Outcome {
    let start = Instant::now();
    let alphas: Vec<C64> = (0..25)
        .map(|k| C64::new(0.0, -6.0 + 0.5 * k as f64))
        .collect();
    let mut reports = vec![
        lift(verify_factorization(
            &m1(),
            &alphas,
            &[vec![0.0], vec![0.3], vec![1.5]],
        ))?,
        lift(verify_factorization(
            &m2(),
            &alphas,
            &[vec![0.0, 0.0], vec![0.3, 0.7], vec![1.0, 0.1]],
        ))?,
    ];
    let varied = lift(verify_factorization(
        &m2_with_kill(vec![0.2, 1.0]),
        &alphas,
        &[vec![0.0, 0.0], vec![0.3, 0.7]],
    ))?;
    let naive = varied
        .checks
        .iter()
        .find(|c| c.name.starts_with("naive"))
        .and_then(|c| c.estimate)
        .ok_or("no naive-correction check in the report")?;
    reports.push(varied);
    let base = all_pass(&reports);
    let outcome = match base {
        Ok(d) if naive > 1e-3 => Ok(format!("{d}; naive correction residual {naive:.2e} > 1e-3")),
        Ok(d) => Err(format!("{d}; naive correction residual only {naive:.2e}")),
        Err(d) => Err(d),
    };
    timed(Duration::from_secs(5), start, outcome)
}

fn sigma_routes() -> Outcome {
    all_pass(&[
        lift(verify_sigma_routes(
            &m1(),
            &[vec![0.3], vec![1.0], vec![0.05]],
        ))?,
        lift(verify_sigma_routes(
            &m2(),
            &[vec![0.3, 0.7], vec![0.5, 0.2], vec![1.0, 1.0]],
        ))?,
    ])
}

fn monte_carlo() -> Outcome {
    let start = Instant::now();
    let r = lift(verify_mc(
        &m2(),
        &McGrid::defaults(2),
        &McConfig::new(N, SEED),
    ))?;
    timed(Duration::from_secs(180), start, all_pass(&[r]))
}

fn splitting() -> Outcome {
    let cfg = McConfig::new(N, SEED);
    let r2 = lift(verify_splitting(&m2(), &cfg))?;
    let r3 = lift(verify_splitting(&m3(), &cfg))?;
    if !r3.checks.iter().any(|c| c.name.contains("(DOWN)")) {
        return Err("no checks conditioned on a decreasing phase at the infimum".into());
    }
    all_pass(&[r2, r3])
}

fn time_reversal() -> Outcome {
    let cfg = McConfig::new(N, SEED);
    let mut reports = vec![
        lift(verify_timerev(&m2(), &TimerevParams::defaults(2), &cfg))?,
        lift(verify_timerev(&m3(), &TimerevParams::defaults(2), &cfg))?,
    ];
    for kind in [
        ReversalKind::Infimum,
        ReversalKind::LastExit(0.0),
        ReversalKind::FirstPassage(1.0),
    ] {
        reports.push(lift(verify_reversal(&m2(), kind, &cfg))?);
    }
    all_pass(&reports)
}

fn initial_law() -> Outcome {
    let cfg = McConfig::new(N, SEED);
    let r3 = lift(verify_init_law(&m3(), &cfg))?;
    let r2 = lift(verify_init_law(&m2(), &cfg))?;
    let p: Vec<String> = r3
        .checks
        .iter()
        .filter(|c| c.name.contains("chi-square"))
        .map(|c| format!("p = {:.3}", c.estimate.unwrap_or(f64::NAN)))
        .collect();
    if p.is_empty() {
        return Err("no goodness-of-fit check on the decreasing phase".into());
    }
    all_pass(&[r3, r2]).map(|d| format!("{d}; M3 {}", p.join(", ")))
}

fn determinism() -> Outcome {
    let mut compared = 0;
    for suite in Suite::ALL {
        let models = if suite == Suite::Mc || suite == Suite::Reversal {
            vec![m2()]
        } else {
            vec![m2(), m3()]
        };
        for m in models {
            let run = |t: usize| -> Result<String, String> {
                let cfg = McConfig::new(20_000, SEED).with_threads(Some(t));
                run_suite(suite, &m, &cfg)
                    .map(|r| r.to_json())
                    .map_err(|e| e.to_string())
            };
            let one = match run(1) {
                Ok(s) => s,
                // analytic suites do not apply to models with upward jumps
                Err(_) if !m.spectrally_negative() => continue,
                Err(e) => return Err(format!("{}: {e}", suite.name())),
            };
            for t in [4, 8] {
                if run(t)? != one {
                    return Err(format!(
                        "{} differs between 1 and {t} threads",
                        suite.name()
                    ));
                }
            }
            if run(1)? != one {
                return Err(format!("{} differs between reruns", suite.name()));
            }
            compared += 1;
        }
    }
    Ok(format!(
        "{compared} suite/model pairs byte-identical across 1, 4, 8 threads"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("fundamental residuals", fundamental_residuals),
        ("single-phase reduction", levy_reduction),
        ("factorization", factorization),
        ("last-exit routes", sigma_routes),
        ("Monte Carlo concordance", monte_carlo),
        ("splitting", splitting),
        ("time reversal", time_reversal),
        ("initial law", initial_law),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(d) => println!("criterion {}: PASS  {name}: {d}", k + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {d}", k + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
