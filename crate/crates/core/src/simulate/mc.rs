//! Block-parallel Monte Carlo whose output does not depend on the number of
//! threads: paths are split into fixed blocks, each block is summed
//! sequentially from its own streams, and blocks are combined in index order.
//! Standard errors come from the delete-a-block jackknife, which also covers
//! ratios and covariances of block means.

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::rng::Streams;
use super::{PathSummary, Simulator};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};
use crate::model::MapModel;

pub const DEFAULT_BLOCKS: usize = 200;
pub const MIN_PATHS: usize = 1000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct McConfig {
    pub n: usize,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    #[serde(skip)]
    pub threads: Option<usize>,
    pub blocks: usize,
}

impl McConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        McConfig {
            n,
            seed,
            threads: None,
            blocks: DEFAULT_BLOCKS,
        }
    }

    pub fn with_threads(mut self, threads: Option<usize>) -> Self {
        self.threads = threads;
        self
    }

    pub fn scaled(&self, n: usize) -> Self {
        McConfig { n, ..self.clone() }
    }
}

/// Per-block sums of a vector of path observables.
#[derive(Clone, Debug)]
pub struct BlockMeans {
    pub n: usize,
    counts: Vec<usize>,
    sums: Vec<Vec<f64>>,
    total: Vec<f64>,
}

impl BlockMeans {
    pub fn dim(&self) -> usize {
        self.total.len()
    }

    pub fn mean(&self, k: usize) -> f64 {
        self.total[k] / self.n as f64
    }

    pub fn means(&self) -> Vec<f64> {
        self.total.iter().map(|s| s / self.n as f64).collect()
    }

    /// Sum of observable `k` over all paths.
    pub fn sum(&self, k: usize) -> f64 {
        self.total[k]
    }

    /// Plug-in estimate of `f(means)` and its jackknife standard error.
    pub fn statistic<F: Fn(&[f64]) -> f64>(&self, f: F) -> (f64, f64) {
        let est = f(&self.means());
        let b = self.counts.len();
        if b < 2 {
            return (est, f64::NAN);
        }
        let mut loo = vec![0.0; self.dim()];
        let values: Vec<f64> = (0..b)
            .map(|k| {
                let m = (self.n - self.counts[k]) as f64;
                for (d, slot) in loo.iter_mut().enumerate() {
                    *slot = (self.total[d] - self.sums[k][d]) / m;
                }
                f(&loo)
            })
            .collect();
        let avg = values.iter().sum::<f64>() / b as f64;
        let var = values.iter().map(|v| (v - avg).powi(2)).sum::<f64>() * (b - 1) as f64 / b as f64;
        (est, var.sqrt())
    }

    /// Mean of observable `k` with its standard error.
    pub fn mean_se(&self, k: usize) -> (f64, f64) {
        self.statistic(|m| m[k])
    }
}

/// Runs `f(path_index, rng, out)` for every path and sums the observables it
/// writes into `out` (zeroed before each call).
pub fn run_blocks<F>(cfg: &McConfig, tag: &str, dim: usize, f: F) -> Result<BlockMeans>
where
    F: Fn(u64, &mut ChaCha8Rng, &mut [f64]) -> Result<()> + Sync,
{
    if cfg.n < 2 {
        return Err(Error::InsufficientSamples {
            what: format!("{tag} paths"),
            got: cfg.n,
            needed: 2,
        });
    }
    let streams = Streams::new(cfg.seed, tag);
    let blocks = cfg.blocks.clamp(2, cfg.n);
    let bounds = |b: usize| (b * cfg.n / blocks) as u64;
    let work = || -> Result<Vec<(usize, Vec<f64>)>> {
        (0..blocks)
            .into_par_iter()
            .map(|b| {
                let mut acc = vec![0.0; dim];
                let mut out = vec![0.0; dim];
                let (lo, hi) = (bounds(b), bounds(b + 1));
                for idx in lo..hi {
                    out.iter_mut().for_each(|x| *x = 0.0);
                    f(idx, &mut streams.path(idx), &mut out)?;
                    for (a, x) in acc.iter_mut().zip(&out) {
                        *a += x;
                    }
                }
                Ok(((hi - lo) as usize, acc))
            })
            .collect()
    };
    let parts = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Validation(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let mut total = vec![0.0; dim];
    for (_, s) in &parts {
        for (t, x) in total.iter_mut().zip(s) {
            *t += x;
        }
    }
    let (counts, sums) = parts.into_iter().unzip();
    Ok(BlockMeans {
        n: cfg.n,
        counts,
        sums,
        total,
    })
}

/// Path functional whose transform is estimated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    /// `(X_{ζ-}, ζ, J_{ζ-})`.
    Killing,
    /// `(X̄, Ḡ, J̄)`.
    Sup,
    /// `(X̲, G̲, J̲)`.
    Inf,
    /// `(X_σ, σ, J_σ)` on `{σ_a < ζ}`.
    LastExit(f64),
    /// `(X_τ, τ, J_τ)` on `{τ_x < ζ}`.
    FirstPassage(f64),
}

impl Target {
    fn levels(self) -> (f64, f64) {
        match self {
            Target::LastExit(a) => (a, 0.0),
            Target::FirstPassage(x) => (0.0, x),
            _ => (0.0, 0.0),
        }
    }

    /// Level, occupation vector and phase at the target time.
    pub fn read(self, s: &PathSummary) -> Option<(f64, &[f64], usize)> {
        match self {
            Target::Killing => Some((s.x_end, &s.occ_zeta, s.j_end)),
            Target::Sup => Some((s.sup.value, &s.sup.occ, s.sup.phase)),
            Target::Inf => Some((s.inf.value, &s.inf.occ, s.inf.phase)),
            Target::LastExit(_) => {
                let l = &s.last_exit;
                Some((l.value?, &l.occ, l.phase?))
            }
            Target::FirstPassage(_) => s
                .first_passage
                .as_ref()
                .map(|f| (f.value, f.occ.as_slice(), f.phase)),
        }
    }
}

/// Entrywise estimate of `E_i[e^{αX_⋆ - ⟨β, occ_⋆⟩}; J_⋆ = j]`.
#[derive(Clone, Debug)]
pub struct McEstimate {
    pub alpha: C64,
    pub beta: Vec<f64>,
    pub estimate: CMatrix,
    pub se_re: DMatrix<f64>,
    pub se_im: DMatrix<f64>,
    pub n: usize,
}

/// Estimates one transform matrix; rows are start phases (level 0).
pub fn mc_transform(
    model: &MapModel,
    target: Target,
    alpha: C64,
    beta: &[f64],
    cfg: &McConfig,
) -> Result<McEstimate> {
    let mut out = mc_transform_many(model, target, &[(alpha, beta.to_vec())], cfg)?;
    Ok(out.remove(0))
}

/// Several transforms from the same simulated paths.
pub fn mc_transform_many(
    model: &MapModel,
    target: Target,
    grid: &[(C64, Vec<f64>)],
    cfg: &McConfig,
) -> Result<Vec<McEstimate>> {
    if cfg.n < MIN_PATHS {
        return Err(Error::InsufficientSamples {
            what: "transform paths".into(),
            got: cfg.n,
            needed: MIN_PATHS,
        });
    }
    let n = model.n();
    if grid.iter().any(|(_, b)| b.len() != n) {
        return Err(Error::Validation(
            "beta length must equal the number of phases".into(),
        ));
    }
    let sim = Simulator::new(model)?;
    let (a, x) = target.levels();
    let dim = grid.len() * n * 2;
    let mut out: Vec<McEstimate> = grid
        .iter()
        .map(|(alpha, beta)| McEstimate {
            alpha: *alpha,
            beta: beta.clone(),
            estimate: CMatrix::zeros(n, n),
            se_re: DMatrix::zeros(n, n),
            se_im: DMatrix::zeros(n, n),
            n: cfg.n,
        })
        .collect();
    for i in 0..n {
        let tag = format!("transform/{target:?}/{i}");
        let bm = run_blocks(cfg, &tag, dim, |_, rng, obs| {
            let path = sim.sample(rng, 0.0, i)?;
            let s = path.summary(a, x);
            if let Some((level, occ, j)) = target.read(&s) {
                for (g, (alpha, beta)) in grid.iter().enumerate() {
                    let disc: f64 = beta.iter().zip(occ).map(|(b, o)| b * o).sum();
                    let v = (alpha * level - disc).exp();
                    obs[(g * n + j) * 2] = v.re;
                    obs[(g * n + j) * 2 + 1] = v.im;
                }
            }
            Ok(())
        })?;
        for (g, est) in out.iter_mut().enumerate() {
            for j in 0..n {
                let (re, se_re) = bm.mean_se((g * n + j) * 2);
                let (im, se_im) = bm.mean_se((g * n + j) * 2 + 1);
                est.estimate[(i, j)] = C64::new(re, im);
                est.se_re[(i, j)] = se_re;
                est.se_im[(i, j)] = se_im;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::canonical::m2;

    #[test]
    fn jackknife_matches_binomial_error() {
        let cfg = McConfig::new(20_000, 3);
        let bm = run_blocks(&cfg, "coin", 1, |_, rng, out| {
            out[0] = if rand::Rng::random_bool(rng, 0.3) {
                1.0
            } else {
                0.0
            };
            Ok(())
        })
        .unwrap();
        let (p, se) = bm.mean_se(0);
        let exact = (0.3f64 * 0.7 / 20_000.0).sqrt();
        assert!((p - 0.3).abs() < 4.0 * exact);
        assert!((se / exact - 1.0).abs() < 0.25, "{se} vs {exact}");
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let m = m2();
        let run = |t| {
            let cfg = McConfig::new(2000, 9).with_threads(Some(t));
            mc_transform(&m, Target::Sup, C64::new(-0.5, 0.0), &[0.1, 0.2], &cfg).unwrap()
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a.estimate, b.estimate);
        assert_eq!(a.se_re, b.se_re);
    }

    #[test]
    fn supremum_phase_law_sums_to_one() {
        let cfg = McConfig::new(2000, 1);
        let e = mc_transform(&m2(), Target::Sup, C64::new(0.0, 0.0), &[0.0, 0.0], &cfg).unwrap();
        for i in 0..2 {
            let s: f64 = (0..2).map(|j| e.estimate[(i, j)].re).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn small_samples_are_rejected() {
        let cfg = McConfig::new(10, 1);
        assert!(matches!(
            mc_transform(
                &m2(),
                Target::Killing,
                C64::new(0.0, 0.0),
                &[0.0, 0.0],
                &cfg
            ),
            Err(Error::InsufficientSamples { .. })
        ));
    }
}
