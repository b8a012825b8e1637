//! Splitting at the infimum: independence of the pre- and post-infimum
//! pieces given `J̲`, and equality of the post-infimum law with the law
//! after a continuous last exit from `(-∞, 0]`.

use super::{require_count, Check, CheckReport, PhaseDraw, MIN_CONDITIONED, Z_MAX};
use crate::error::Result;
use crate::model::{MapModel, PhaseClass};
use crate::simulate::{
    run_blocks, BlockMeans, McConfig, Path, PathSummary, SegmentStart, Simulator,
};

/// `1, A1, A2, B1, B2, A1B1, A1B2, A2B1, A2B2`.
const COV_DIM: usize = 9;
const A_NAMES: [&str; 2] = ["exp(-G_inf)", "exp(X_inf)"];
const B_NAMES: [&str; 2] = ["exp(-zeta_post)", "exp(-0.5 X_end_post)"];

fn pre_functionals(s: &PathSummary) -> [f64; 2] {
    [(-s.inf.time).exp(), s.inf.value.exp()]
}

fn post_functionals(post: &Path) -> [f64; 2] {
    [(-post.zeta()).exp(), (-0.5 * post.end_value()).exp()]
}

fn write_cov(out: &mut [f64], a: [f64; 2], b: [f64; 2]) {
    out[0] = 1.0;
    out[1] = a[0];
    out[2] = a[1];
    out[3] = b[0];
    out[4] = b[1];
    out[5] = a[0] * b[0];
    out[6] = a[0] * b[1];
    out[7] = a[1] * b[0];
    out[8] = a[1] * b[1];
}

/// Conditional covariance checks for one phase block of observables.
fn covariance_checks(report: &mut CheckReport, bm: &BlockMeans, base: usize, label: &str) {
    for (ka, an) in A_NAMES.iter().enumerate() {
        for (kb, bn) in B_NAMES.iter().enumerate() {
            let (cov, se) = bm.statistic(|m| {
                let p = m[base];
                m[base + 5 + 2 * ka + kb] / p - m[base + 1 + ka] * m[base + 3 + kb] / (p * p)
            });
            report.push(Check::z(
                format!("{label} cov({an}, {bn})"),
                0.0,
                cov,
                se,
                Z_MAX,
            ));
        }
    }
}

/// Checks that a conditioning event is common enough, or absent.
fn usable(report: &mut CheckReport, bm: &BlockMeans, k: usize, what: String) -> Result<bool> {
    let count = bm.sum(k);
    if count == 0.0 {
        report.note(format!("{what}: event never observed, skipped"));
        return Ok(false);
    }
    require_count(what, count)?;
    Ok(true)
}

pub fn verify_splitting(model: &MapModel, cfg: &McConfig) -> Result<CheckReport> {
    let n = model.n();
    let names = model.names();
    let classes = model.phase_partition()?;
    let sim = Simulator::new(model)?;
    let start = PhaseDraw::uniform(n);
    let mut report = CheckReport::new("splitting").with_mc(cfg);

    // independence given J̲ = j
    let bm = run_blocks(cfg, "splitting/independence", n * COV_DIM, |_, rng, out| {
        let path = start.path(&sim, rng)?;
        let s = path.summary(0.0, 0.0);
        let post = path.after(s.inf.mark, s.inf.value);
        let j = s.inf.phase;
        write_cov(
            &mut out[j * COV_DIM..(j + 1) * COV_DIM],
            pre_functionals(&s),
            post_functionals(&post),
        );
        Ok(())
    })?;
    for j in 0..n {
        let label = format!("J_inf={} ({})", names[j], classes[j].name());
        if usable(&mut report, &bm, j * COV_DIM, format!("paths with {label}"))? {
            covariance_checks(&mut report, &bm, j * COV_DIM, &label);
        }
    }

    // control: the post piece comes from an independent path
    let control_cfg = cfg.scaled((cfg.n / 4).max(MIN_CONDITIONED * n));
    let bm = run_blocks(
        &control_cfg,
        "splitting/control",
        n * COV_DIM,
        |_, rng, out| {
            let first = start.path(&sim, rng)?.summary(0.0, 0.0);
            let second = start.path(&sim, rng)?.extract(SegmentStart::PostInfimum);
            let j = first.inf.phase;
            write_cov(
                &mut out[j * COV_DIM..(j + 1) * COV_DIM],
                pre_functionals(&first),
                post_functionals(&second),
            );
            Ok(())
        },
    )?;
    for j in 0..n {
        let label = format!("control J_inf={}", names[j]);
        if bm.sum(j * COV_DIM) >= MIN_CONDITIONED as f64 {
            covariance_checks(&mut report, &bm, j * COV_DIM, &label);
        }
    }

    // law equality: post-infimum given J̲ = j against post-σ_0 given a
    // continuous exit in phase j
    let law_dim = 3 + n;
    let law_obs = |post: &Path, out: &mut [f64]| {
        let [z, x] = post_functionals(post);
        out[0] = 1.0;
        out[1] = z;
        out[2] = x;
        out[3 + post.end_phase()] = 1.0;
    };
    let by_inf = run_blocks(cfg, "splitting/post-infimum", n * law_dim, |_, rng, out| {
        let path = start.path(&sim, rng)?;
        let s = path.summary(0.0, 0.0);
        let j = s.inf.phase;
        if classes[j] != PhaseClass::Down {
            law_obs(
                &path.after(s.inf.mark, s.inf.value),
                &mut out[j * law_dim..(j + 1) * law_dim],
            );
        }
        Ok(())
    })?;
    let by_sigma = run_blocks(
        cfg,
        "splitting/post-last-exit",
        n * law_dim,
        |_, rng, out| {
            let path = start.path(&sim, rng)?;
            let le = path.summary(0.0, 0.0).last_exit;
            if let (true, Some(j)) = (le.continuous, le.phase) {
                law_obs(
                    &path.after(le.mark, 0.0),
                    &mut out[j * law_dim..(j + 1) * law_dim],
                );
            }
            Ok(())
        },
    )?;
    let mut functionals: Vec<String> = B_NAMES.iter().map(|s| s.to_string()).collect();
    functionals.extend(names.iter().map(|k| format!("1{{J_end={k}}}")));
    for j in 0..n {
        if classes[j] == PhaseClass::Down {
            continue;
        }
        let base = j * law_dim;
        let a = usable(
            &mut report,
            &by_inf,
            base,
            format!("post-infimum paths with J_inf={}", names[j]),
        )?;
        let b = usable(
            &mut report,
            &by_sigma,
            base,
            format!("post-exit paths with J_sigma={}", names[j]),
        )?;
        if !(a && b) {
            continue;
        }
        for (k, f) in functionals.iter().enumerate() {
            let ratio = |m: &[f64]| m[base + 1 + k] / m[base];
            report.push(Check::two_sample(
                format!(
                    "law after infimum = law after exit, phase {}: {f}",
                    names[j]
                ),
                by_inf.statistic(ratio),
                by_sigma.statistic(ratio),
                Z_MAX,
            ));
        }
    }
    Ok(report.finish())
}
