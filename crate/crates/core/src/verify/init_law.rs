//! Starting law of the conditioned processes.
//!
//! For a DOWN phase `i` the post-infimum process given `J̲ = i` starts with
//! an upward jump, or is killed. Its law is compared with an exact
//! rejection sampler: propose from the upward jump measure of phase `i`
//! together with killing, and accept a jump of size `x` into phase `j` when
//! an independent path from `(0, j)` keeps `X̲ > -x`.
//!
//! For an UP phase of a spectrally negative model the post-supremum process
//! given `J̄ = i` starts with a downward jump, and its law has a closed form
//! in terms of `G`; binned frequencies are compared with it.

use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{require_count, Check, CheckReport, Z_MAX};
use crate::error::Result;
use crate::fluctuation::InitialLaw;
use crate::model::{JumpLaw, MapModel, PhaseClass};
use crate::simulate::{run_blocks, BlockMeans, McConfig, Path, Simulator};
use crate::spectral::fundamental;

/// Significance level of the goodness-of-fit test.
pub const CHI2_LEVEL: f64 = 1e-3;
/// Agreement of the killing atom with its formula, in standard errors.
const ATOM_Z: f64 = 3.0;
/// Bin edges in units of the typical jump size.
const EDGES: [f64; 8] = [0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0];
/// Categories with fewer pooled counts are left out of the test.
const MIN_CELL: f64 = 5.0;

fn bin_of(x: f64, scale: f64) -> usize {
    EDGES
        .iter()
        .position(|&e| x < e * scale)
        .unwrap_or(EDGES.len())
}

const BINS: usize = EDGES.len() + 1;

/// Jump sources of phase `i`: `(rate, target phase, law)`.
fn jump_sources(model: &MapModel, i: usize) -> Vec<(f64, usize, &JumpLaw)> {
    let mut out = Vec::new();
    let own = &model.levy()[i];
    if let (Some(law), true) = (&own.jump_law, own.jump_rate > 0.0) {
        out.push((own.jump_rate, i, law));
    }
    for j in 0..model.n() {
        let r = model.switch_rate()[(i, j)];
        if j != i && r > 0.0 {
            out.push((r, j, model.switch_jump(i, j)));
        }
    }
    out
}

/// Two-sample χ² homogeneity test; returns `(statistic, degrees of freedom, p)`.
pub fn chi2_homogeneity(a: &[f64], b: &[f64]) -> (f64, usize, f64) {
    let cells: Vec<(f64, f64)> = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x, y))
        .filter(|(x, y)| x + y >= MIN_CELL)
        .collect();
    let (na, nb) = cells
        .iter()
        .fold((0.0, 0.0), |(s, t), (x, y)| (s + x, t + y));
    let total = na + nb;
    let mut stat = 0.0;
    for (x, y) in &cells {
        let col = x + y;
        let (ea, eb) = (na * col / total, nb * col / total);
        stat += (x - ea).powi(2) / ea + (y - eb).powi(2) / eb;
    }
    let df = cells.len().saturating_sub(1);
    if df == 0 {
        return (stat, 0, 1.0);
    }
    let p = 1.0 - ChiSquared::new(df as f64).expect("positive df").cdf(stat);
    (stat, df, p)
}

pub fn verify_init_law(model: &MapModel, cfg: &McConfig) -> Result<CheckReport> {
    let classes = model.phase_partition()?;
    let mut report = CheckReport::new("init-law").with_mc(cfg);
    let sim = Simulator::new(model)?;
    let mut applicable = false;
    for i in 0..model.n() {
        if classes[i] == PhaseClass::Down {
            applicable = true;
            down_phase(model, &sim, i, cfg, &mut report)?;
        }
    }
    // the closed form needs the analytic fundamental matrices, which exclude
    // decreasing phases
    let analytic = model.spectrally_negative()
        && model.kill().iter().all(|&q| q > 0.0)
        && !classes.contains(&PhaseClass::Down);
    if analytic {
        let fund = fundamental(model, &vec![0.0; model.n()])?;
        for i in 0..model.n() {
            if classes[i] == PhaseClass::Up {
                applicable = true;
                let law = InitialLaw::new(model, &fund, i)?;
                up_phase(model, &sim, &law, cfg, &mut report)?;
            }
        }
    }
    if !applicable {
        report.note("no DOWN phase and no spectrally negative UP phase: nothing to check");
    }
    Ok(report.finish())
}

fn down_phase(
    model: &MapModel,
    sim: &Simulator,
    i: usize,
    cfg: &McConfig,
    report: &mut CheckReport,
) -> Result<()> {
    let n = model.n();
    let name = &model.names()[i];
    let sources = jump_sources(model, i);
    let up: Vec<_> = sources
        .iter()
        .filter(|(_, _, law)| law.has_positive_mass())
        .collect();
    if up.is_empty() {
        report.push(Check::vacuous(format!(
            "phase {name}: starts at the killing atom"
        )));
        report.note(format!(
            "phase {name}: no jumps up are possible, so c = 0 and the conditioned process is killed at once"
        ));
        return Ok(());
    }
    let q = model.kill()[i];
    let rate: f64 = sources.iter().map(|(r, _, _)| r).sum();
    let scale = up.iter().map(|(r, _, l)| r * l.mean().abs()).sum::<f64>()
        / up.iter().map(|(r, _, _)| r).sum::<f64>();
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let cells = 1 + n * BINS;
    let cell = |j: usize, x: f64| 1 + j * BINS + bin_of(x, scale);

    // observed: [1{J̲=i}, cells...]
    let observed = run_blocks(
        cfg,
        &format!("init-law/observed/{i}"),
        1 + cells,
        |_, rng, out| {
            let path = sim.sample(rng, 0.0, i)?;
            let inf = path.summary(0.0, 0.0).inf;
            if inf.phase == i {
                out[0] = 1.0;
                let post = path.after(inf.mark, inf.value);
                if post.is_dead() {
                    out[1] = 1.0;
                } else {
                    out[1 + cell(post.start_phase(), post.x0)] = 1.0;
                }
            }
            Ok(())
        },
    )?;
    require_count(format!("paths with J_inf={name}"), observed.sum(0))?;

    // rejection sampler: [cells..., jump draws, accepted jumps]
    let reference = run_blocks(
        &cfg.scaled(cfg.n / 2),
        &format!("init-law/reference/{i}"),
        cells + 2,
        |_, rng, out| loop {
            let u = rng.random::<f64>() * (rate + q);
            if u >= rate {
                out[0] = 1.0;
                return Ok(());
            }
            let mut acc = 0.0;
            let &(_, j, law) = sources
                .iter()
                .find(|(r, _, _)| {
                    acc += r;
                    u < acc
                })
                .unwrap_or_else(|| sources.last().expect("non-empty"));
            out[cells] += 1.0;
            let x = law.sample(rng);
            if x <= 0.0 {
                continue;
            }
            let probe = sim.sample(rng, 0.0, j)?;
            if probe.summary(0.0, 0.0).inf.value > -x {
                out[cells + 1] += 1.0;
                out[cell(j, x)] = 1.0;
                return Ok(());
            }
        },
    )?;

    let obs_counts: Vec<f64> = (0..cells).map(|k| observed.sum(1 + k)).collect();
    let ref_counts: Vec<f64> = (0..cells).map(|k| reference.sum(k)).collect();
    let (stat, df, p) = chi2_homogeneity(&obs_counts, &ref_counts);
    report.push(Check::p_value(
        format!("phase {name}: start law after infimum, chi-square on {df} df (stat {stat:.3})"),
        p,
        CHI2_LEVEL,
    ));
    let atom_obs = observed.statistic(|m| m[1] / m[0]);
    let atom_ref = reference.statistic(|m| q / (rate * m[cells + 1] / m[cells] + q));
    let (c_hat, c_se) = reference.statistic(|m| rate * m[cells + 1] / m[cells]);
    report.push(Check::two_sample(
        format!("phase {name}: killing atom = q/(c+q)"),
        atom_obs,
        atom_ref,
        ATOM_Z,
    ));
    report.push(Check::info(format!("phase {name}: c estimate"), c_hat));
    report.note(format!(
        "phase {name}: c = {c_hat:.6} (se {c_se:.2e}) from the rejection sampler"
    ));
    Ok(())
}

fn up_phase(
    model: &MapModel,
    sim: &Simulator,
    law: &InitialLaw,
    cfg: &McConfig,
    report: &mut CheckReport,
) -> Result<()> {
    let n = model.n();
    let i = law.phase;
    let name = &model.names()[i];
    let sources = jump_sources(model, i);
    let scale = {
        let (w, s) = sources.iter().fold((0.0, 0.0), |(w, s), (r, _, l)| {
            (w + r, s + r * l.mean().abs())
        });
        if s > 0.0 {
            s / w
        } else {
            1.0
        }
    };
    let cells = 1 + n * BINS;
    // [1{J̄=i}, atom, (phase, bin)...] with bins over -x
    let bm: BlockMeans = run_blocks(
        cfg,
        &format!("init-law/post-sup/{i}"),
        1 + cells,
        |_, rng, out| {
            let path: Path = sim.sample(rng, 0.0, i)?;
            let sup = path.summary(0.0, 0.0).sup;
            if sup.phase == i {
                out[0] = 1.0;
                let post = path.after(sup.mark, sup.value);
                if post.is_dead() {
                    out[1] = 1.0;
                } else {
                    out[2 + post.start_phase() * BINS + bin_of(-post.x0, scale)] = 1.0;
                }
            }
            Ok(())
        },
    )?;
    require_count(format!("paths with J_sup={name}"), bm.sum(0))?;
    let (a, se) = bm.statistic(|m| m[1] / m[0]);
    report.push(Check::z(
        format!("phase {name}: post-supremum killing atom"),
        law.atom,
        a,
        se,
        Z_MAX,
    ));
    let far = -1e3 * scale;
    for j in 0..n {
        for b in 0..BINS {
            let hi = if b == 0 { 0.0 } else { -EDGES[b - 1] * scale };
            let lo = if b == EDGES.len() {
                far
            } else {
                -EDGES[b] * scale
            };
            let mass = law.bin_mass(j, lo, hi)?;
            let k = 2 + j * BINS + b;
            let (est, se) = bm.statistic(|m| m[k] / m[0]);
            if mass == 0.0 && est == 0.0 {
                continue;
            }
            report.push(Check::z(
                format!(
                    "phase {name}: post-supremum start in phase {} level [{lo:.3}, {hi:.3})",
                    model.names()[j]
                ),
                mass,
                est,
                se,
                Z_MAX,
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn homogeneity_of_identical_tables() {
        let (stat, df, p) = chi2_homogeneity(&[100.0, 200.0, 50.0], &[100.0, 200.0, 50.0]);
        assert_eq!(stat, 0.0);
        assert_eq!(df, 2);
        assert!((p - 1.0).abs() < 1e-12);
        let (_, _, p) = chi2_homogeneity(&[100.0, 200.0], &[200.0, 100.0]);
        assert!(p < 1e-6);
    }

    #[test]
    fn bins_cover_the_half_line() {
        assert_eq!(bin_of(0.0, 1.0), 0);
        assert_eq!(bin_of(0.3, 1.0), 2);
        assert_eq!(bin_of(1e9, 1.0), EDGES.len());
    }
}
