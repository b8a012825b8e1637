use mapfluct::canonical::{m1, m2, m2_with_kill, m3};
use mapfluct::simulate::{
    mc_transform, McConfig, Path, ReverseAt, Segment, SegmentStart, Simulator, Streams, Target,
};
use mapfluct::{PhaseClass, C64};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Asymptotic Kolmogorov tail `P(K > x)`.
fn kolmogorov_tail(x: f64) -> f64 {
    let mut s = 0.0;
    for k in 1..100 {
        let k = k as f64;
        s += 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * x * x).exp();
    }
    s.clamp(0.0, 1.0)
}

#[test]
fn equal_killing_gives_exponential_lifetime() {
    let m = m2_with_kill(vec![0.7, 0.7]);
    let sim = Simulator::new(&m).unwrap();
    let streams = Streams::new(2024, "ks");
    let n = 100_000;
    let mut z: Vec<f64> = (0..n)
        .map(|k| {
            sim.sample(&mut streams.path(k), 0.0, (k % 2) as usize)
                .unwrap()
                .zeta()
        })
        .collect();
    z.sort_by(f64::total_cmp);
    let d = z
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let f = 1.0 - (-0.7 * t).exp();
            (f - k as f64 / n as f64)
                .abs()
                .max(((k + 1) as f64 / n as f64 - f).abs())
        })
        .fold(0.0, f64::max);
    let p = kolmogorov_tail((n as f64).sqrt() * d);
    assert!(p > 1e-3, "KS p-value {p}");
}

#[test]
fn lifetime_mean_is_phase_type() {
    let m = m2();
    let sim = Simulator::new(&m).unwrap();
    let cfg = McConfig::new(50_000, 5);
    let bm = mapfluct::simulate::run_blocks(&cfg, "life", 2, |_, rng, out| {
        let p = sim.sample(rng, 0.0, 0)?;
        out[0] = p.zeta();
        out[1] = p.segments.len() as f64;
        Ok(())
    })
    .unwrap();
    let inv = (-m.generator()).try_inverse().unwrap();
    let expect = (inv * DVector::from_element(2, 1.0))[0];
    let (mean, se) = bm.mean_se(0);
    assert!(
        ((mean - expect) / se).abs() < 3.0,
        "{mean} vs {expect} (se {se})"
    );
    assert!(bm.mean(1).is_finite());
}

#[test]
fn occupation_fractions_approach_stationary_law() {
    let m = m2_with_kill(vec![1e-3, 1e-3]);
    let sim = Simulator::new(&m).unwrap();
    let streams = Streams::new(8, "occupation");
    let mut occ = [0.0; 2];
    for k in 0..100 {
        let p = sim.sample(&mut streams.path(k), 0.0, 0).unwrap();
        let o = p.occupation();
        occ[0] += o[0];
        occ[1] += o[1];
    }
    let f = occ[0] / (occ[0] + occ[1]);
    assert!((f - 2.0 / 3.0).abs() < 0.02, "{f}");
}

#[test]
fn occupation_laplace_transform_is_phase_type() {
    let m = m2();
    let sim = Simulator::new(&m).unwrap();
    let cfg = McConfig::new(40_000, 13);
    let betas = [[0.0, 0.0], [0.3, 0.7], [1.0, 0.1]];
    let bm = mapfluct::simulate::run_blocks(&cfg, "occ-lt", 3, |_, rng, out| {
        let o = sim.sample(rng, 0.0, 1)?.occupation();
        for (g, b) in betas.iter().enumerate() {
            out[g] = (-(b[0] * o[0] + b[1] * o[1])).exp();
        }
        Ok(())
    })
    .unwrap();
    for (g, b) in betas.iter().enumerate() {
        let psi = m.generator() - DMatrix::from_diagonal(&DVector::from_column_slice(b));
        let q = DVector::from_column_slice(m.kill());
        let expect = ((-psi).try_inverse().unwrap() * q)[1];
        let (mean, se) = bm.mean_se(g);
        if g == 0 {
            assert!((mean - 1.0).abs() < 1e-12);
        } else {
            assert!(
                ((mean - expect) / se).abs() < 3.0,
                "beta {b:?}: {mean} vs {expect}"
            );
        }
    }
}

#[test]
fn scalar_killing_transform_matches_closed_form() {
    let m = m1();
    let cfg = McConfig::new(40_000, 3);
    for theta in [0.5, 2.0] {
        let a = C64::new(0.0, theta);
        let e = mc_transform(&m, Target::Killing, a, &[0.0], &cfg).unwrap();
        let expect = -0.5 / (m.levy()[0].exponent(a).unwrap() - 0.5);
        let est = e.estimate[(0, 0)];
        assert!(((est.re - expect.re) / e.se_re[(0, 0)]).abs() < 3.0);
        assert!(((est.im - expect.im) / e.se_im[(0, 0)]).abs() < 3.0);
    }
}

#[test]
fn standard_error_follows_square_root_law() {
    let m = m2();
    let se = |n| {
        let e = mc_transform(
            &m,
            Target::Killing,
            C64::new(0.0, 1.0),
            &[0.2, 0.2],
            &McConfig::new(n, 17),
        )
        .unwrap();
        e.se_re[(0, 0)]
    };
    let ratio = se(10_000) / se(40_000);
    assert!((ratio / 2.0 - 1.0).abs() < 0.2, "ratio {ratio}");
}

/// Level of the path on a fine grid, for comparison with the exact values.
fn grid_extrema(p: &Path, h: f64) -> (f64, f64) {
    let (mut lo, mut hi) = (p.x0, p.x0);
    let mut x = p.x0;
    let mut t0 = 0.0;
    let mut next_grid = 0.0;
    for s in &p.segments {
        let t1 = t0 + s.duration;
        while next_grid < t1 {
            let v = x + s.slope * (next_grid - t0);
            lo = lo.min(v);
            hi = hi.max(v);
            next_grid += h;
        }
        x += s.slope * s.duration + s.jump;
        t0 = t1;
    }
    (lo, hi)
}

#[test]
fn exact_extrema_dominate_grid_evaluation() {
    let h = 1e-6;
    for (m, j0) in [(m2(), 0), (m3(), 1)] {
        let sim = Simulator::new(&m).unwrap();
        let slope = m.levy().iter().map(|c| c.drift.abs()).fold(0.0, f64::max);
        let streams = Streams::new(99, "grid");
        for k in 0..50 {
            let p = sim.sample(&mut streams.path(k), 0.0, j0).unwrap();
            let s = p.summary(0.0, 1.0);
            let (lo, hi) = grid_extrema(&p, h);
            assert!(lo >= s.inf.value - 1e-12 && lo - s.inf.value <= slope * h + 1e-12);
            assert!(hi <= s.sup.value + 1e-12 && s.sup.value - hi <= slope * h + 1e-12);
        }
    }
}

#[test]
fn creeping_is_sure_without_upward_jumps() {
    let m = m2();
    let sim = Simulator::new(&m).unwrap();
    let streams = Streams::new(4, "creep");
    for k in 0..2000 {
        let p = sim
            .sample(&mut streams.path(k), 0.0, (k % 2) as usize)
            .unwrap();
        let s = p.summary(0.0, 0.8);
        if let Some(fp) = s.first_passage {
            assert!(fp.creep);
        }
        if s.last_exit.phase.is_some() {
            assert!(s.last_exit.continuous);
        }
    }
}

fn arb_path() -> impl Strategy<Value = Path> {
    let seg = (0usize..3, -2.0f64..2.0, 0.01f64..2.0, -1.5f64..1.5);
    (proptest::collection::vec(seg, 1..12), -1.0f64..1.0).prop_map(|(raw, x0)| {
        let k = raw.len();
        let segments = raw
            .iter()
            .enumerate()
            .map(|(i, &(phase, slope, duration, jump))| Segment {
                phase,
                slope,
                duration,
                jump: if i + 1 < k { jump } else { 0.0 },
                next: if i + 1 < k { Some(raw[i + 1].0) } else { None },
            })
            .collect();
        Path::new(x0, segments, 3).unwrap()
    })
}

proptest! {
    #[test]
    fn reversal_is_an_involution(p in arb_path()) {
        let mut p = p;
        p.x0 = 0.0;
        let r = p.reverse(ReverseAt::ZetaMinus);
        prop_assert_eq!(r.reverse(ReverseAt::ZetaMinus), p.clone());
        for (a, b) in r.occupation().iter().zip(p.occupation()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn reflection_identity(p in arb_path()) {
        let s = p.summary(0.0, 1.0);
        let r = p.reverse(ReverseAt::ZetaMinus);
        prop_assert!((r.totals().sup - (s.x_end - s.inf.value)).abs() < 1e-9);
    }

    #[test]
    fn summary_invariants(p in arb_path(), a in -1.0f64..1.0) {
        let s = p.summary(a, 0.5);
        prop_assert!(s.inf.value <= p.x0.min(s.x_end));
        prop_assert!(s.sup.value >= p.x0.max(s.x_end));
        for occ in [&s.inf.occ, &s.sup.occ, &s.last_exit.occ] {
            for (o, z) in occ.iter().zip(&s.occ_zeta) {
                prop_assert!(*o <= *z + 1e-12);
            }
        }
        prop_assert!((s.inf.occ.iter().sum::<f64>() - s.inf.time).abs() < 1e-9);
        let post = p.extract(SegmentStart::PostInfimum);
        let ps = post.summary(0.0, 0.0);
        prop_assert!(ps.inf.value >= -1e-12);
        // splicing: post-infimum supremum plus the infimum recovers the later supremum
        prop_assert!((post.end_value() + s.inf.value - s.x_end).abs() < 1e-9);
        let exit = p.extract(SegmentStart::PostLastExit(a));
        if s.last_exit.continuous && !exit.is_dead() {
            prop_assert!(exit.summary(0.0, 0.0).inf.value >= -1e-12);
        }
    }

    #[test]
    fn infimum_phase_dichotomy_on_decreasing_phase_model(seed in 0u64..1000) {
        let m = m3();
        let classes = m.phase_partition().unwrap();
        let sim = Simulator::new(&m).unwrap();
        let streams = Streams::new(seed, "dichotomy");
        for k in 0..20 {
            let p = sim.sample(&mut streams.path(k), 0.0, (k % 2) as usize).unwrap();
            let s = p.summary(0.0, 1.0);
            match classes[s.inf.phase] {
                PhaseClass::Down => prop_assert!(!s.inf.attained),
                _ => prop_assert!(s.inf.attained),
            }
        }
    }
}
