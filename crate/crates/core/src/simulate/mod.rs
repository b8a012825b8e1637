//! Exact event-driven simulation of bounded-variation models.
//!
//! Between events the additive component moves linearly with the drift of
//! the current phase; events (own jumps, phase switches, killing) arrive as
//! competing exponential clocks. Nothing is discretized, so extrema, last
//! exits and first passages are read off the path exactly.

mod mc;
mod path;
mod rng;

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::model::{JumpLaw, MapModel};

pub use mc::{
    mc_transform, mc_transform_many, run_blocks, BlockMeans, McConfig, McEstimate, Target,
    MIN_PATHS,
};
pub use path::{
    extract_segment, path_summary, reverse_path, Event, EventKind, Extremum, FirstPassage,
    Functional, LastExit, Mark, Path, PathSummary, ReverseAt, Segment, SegmentStart, Totals,
};
pub use rng::Streams;

/// Guard against runaway paths (a model with almost no killing).
const MAX_EVENTS: usize = 10_000_000;

#[derive(Clone, Debug)]
struct PhaseClock {
    slope: f64,
    total: f64,
    /// Cumulative rates and the outcome they select, killing last.
    outcomes: Vec<(f64, Outcome)>,
}

#[derive(Clone, Debug)]
enum Outcome {
    Own(JumpLaw),
    Switch(usize, JumpLaw),
    Kill,
}

/// Precomputed event clocks of a model.
#[derive(Clone, Debug)]
pub struct Simulator {
    phases: usize,
    clocks: Vec<PhaseClock>,
}

impl Simulator {
    pub fn new(model: &MapModel) -> Result<Self> {
        if !model.bounded_variation() {
            return Err(Error::Unsupported(
                "exact simulation needs sigma2 = 0 in every phase".into(),
            ));
        }
        let n = model.n();
        let mut clocks = Vec::with_capacity(n);
        for i in 0..n {
            let c = &model.levy()[i];
            let mut acc = 0.0;
            let mut outcomes = Vec::new();
            if let Some(law) = &c.jump_law {
                if c.jump_rate > 0.0 {
                    acc += c.jump_rate;
                    outcomes.push((acc, Outcome::Own(law.clone())));
                }
            }
            for j in 0..n {
                let q = model.switch_rate()[(i, j)];
                if j != i && q > 0.0 {
                    acc += q;
                    outcomes.push((acc, Outcome::Switch(j, model.switch_jump(i, j).clone())));
                }
            }
            if model.kill()[i] > 0.0 {
                acc += model.kill()[i];
                outcomes.push((acc, Outcome::Kill));
            }
            if acc == 0.0 {
                return Err(Error::Validation(format!(
                    "phase {} has no events, paths would never end",
                    i + 1
                )));
            }
            clocks.push(PhaseClock {
                slope: c.drift,
                total: acc,
                outcomes,
            });
        }
        Ok(Simulator { phases: n, clocks })
    }

    pub fn phases(&self) -> usize {
        self.phases
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, x0: f64, j0: usize) -> Result<Path> {
        if j0 >= self.phases {
            return Err(Error::Validation(format!(
                "start phase {} out of range",
                j0 + 1
            )));
        }
        let mut segments = Vec::new();
        let mut phase = j0;
        loop {
            let clock = &self.clocks[phase];
            let e: f64 = Exp1.sample(rng);
            let duration = e / clock.total;
            let u = rng.random::<f64>() * clock.total;
            let idx = clock
                .outcomes
                .iter()
                .position(|(c, _)| u < *c)
                .unwrap_or(clock.outcomes.len() - 1);
            let (jump, next) = match &clock.outcomes[idx].1 {
                Outcome::Own(law) => (law.sample(rng), Some(phase)),
                Outcome::Switch(j, law) => (law.sample(rng), Some(*j)),
                Outcome::Kill => (0.0, None),
            };
            segments.push(Segment {
                phase,
                slope: clock.slope,
                duration,
                jump,
                next,
            });
            match next {
                Some(j) => phase = j,
                None => return Ok(Path::from_parts(x0, segments, self.phases)),
            }
            if segments.len() >= MAX_EVENTS {
                return Err(Error::Convergence(format!(
                    "path exceeded {MAX_EVENTS} events before killing"
                )));
            }
        }
    }
}

/// One path from `(x0, j0)`.
pub fn simulate_path<R: Rng + ?Sized>(
    model: &MapModel,
    rng: &mut R,
    x0: f64,
    j0: usize,
) -> Result<Path> {
    Simulator::new(model)?.sample(rng, x0, j0)
}

/// CSV dump with columns `path_id,time,phase,value,event_kind`: one start row
/// per path and one row per event, carrying the phase and level right after
/// the event (right before it for killing).
pub fn write_paths_csv<W: Write>(out: W, names: &[String], paths: &[Path]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Validation(format!("writing path dump: {e}"));
    w.write_record(["path_id", "time", "phase", "value", "event_kind"])
        .map_err(io)?;
    for (id, p) in paths.iter().enumerate() {
        let id = id.to_string();
        let mut t = 0.0;
        let mut x = p.x0;
        w.write_record([
            id.as_str(),
            "0",
            names[p.start_phase()].as_str(),
            &x.to_string(),
            "start",
        ])
        .map_err(io)?;
        for s in &p.segments {
            t += s.duration;
            x += s.slope * s.duration;
            let phase = match s.next {
                Some(j) => {
                    x += s.jump;
                    j
                }
                None => s.phase,
            };
            w.write_record([
                id.as_str(),
                &t.to_string(),
                names[phase].as_str(),
                &x.to_string(),
                s.kind().name(),
            ])
            .map_err(io)?;
        }
    }
    w.flush()
        .map_err(|e| Error::Validation(format!("writing path dump: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::canonical::{m1, m2, m3};
    use crate::model::{LevyComponent, MapModel};
    use nalgebra::DMatrix;

    #[test]
    fn brownian_phases_are_rejected() {
        let m = MapModel::unnamed(
            vec![LevyComponent {
                drift: 1.0,
                sigma2: 0.5,
                jump_rate: 0.0,
                jump_law: None,
            }],
            DMatrix::zeros(1, 1),
            vec![vec![JumpLaw::zero()]],
            vec![1.0],
        )
        .unwrap();
        assert!(matches!(Simulator::new(&m), Err(Error::Unsupported(_))));
    }

    #[test]
    fn paths_respect_model_signs() {
        let s = Streams::new(1, "signs");
        for m in [m1(), m2()] {
            let sim = Simulator::new(&m).unwrap();
            for k in 0..200 {
                let p = sim.sample(&mut s.path(k), 0.0, 0).unwrap();
                assert!(p.segments.iter().all(|seg| seg.jump <= 0.0));
                assert_eq!(p.segments.last().unwrap().kind(), EventKind::Kill);
                let times: Vec<f64> = p.events().iter().map(|e| e.time).collect();
                assert!(times.windows(2).all(|w| w[0] < w[1]));
            }
        }
        let sim = Simulator::new(&m3()).unwrap();
        for k in 0..200 {
            let p = sim.sample(&mut s.path(k), 0.0, 1).unwrap();
            for seg in &p.segments {
                if seg.kind() == EventKind::Switch && seg.phase == 0 {
                    assert!(seg.jump > 0.0);
                }
            }
        }
    }

    #[test]
    fn dump_is_reproducible() {
        let m = m2();
        let sim = Simulator::new(&m).unwrap();
        let s = Streams::new(7, "dump");
        let paths: Vec<Path> = (0..5)
            .map(|k| sim.sample(&mut s.path(k), 0.0, 0).unwrap())
            .collect();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_paths_csv(&mut a, m.names(), &paths).unwrap();
        write_paths_csv(&mut b, m.names(), &paths).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("path_id,time,phase,value,event_kind\n0,0,1,0,start\n"));
    }
}
