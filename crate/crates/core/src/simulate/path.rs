//! Piecewise-linear paths of bounded-variation models and the functionals
//! read off them: extrema with their phases, last exit, first passage,
//! occupation times, time reversal and post-time segments.
//!
//! A path is a list of segments. Segment `k` starts at the level left by the
//! previous event, moves with constant slope for `duration`, and ends with an
//! event: a jump of size `jump` into phase `next`, or killing when `next` is
//! `None`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Jump,
    Switch,
    Kill,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Jump => "jump",
            EventKind::Switch => "switch",
            EventKind::Kill => "kill",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub phase: usize,
    pub slope: f64,
    pub duration: f64,
    /// Jump of `X` at the closing event.
    pub jump: f64,
    /// Phase after the closing event; `None` when the path is killed.
    pub next: Option<usize>,
}

impl Segment {
    pub fn kind(&self) -> EventKind {
        match self.next {
            None => EventKind::Kill,
            Some(j) if j == self.phase => EventKind::Jump,
            Some(_) => EventKind::Switch,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    pub before: usize,
    pub after: Option<usize>,
    pub jump: f64,
}

/// Position on a path, `offset` time units into segment `seg`. An offset
/// equal to the segment duration sits on the closing event; a position on an
/// event is always expressed through the segment it closes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mark {
    pub seg: usize,
    pub offset: f64,
    pub time: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    pub x0: f64,
    pub segments: Vec<Segment>,
    phases: usize,
}

/// End value, supremum and occupation vector in one pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Totals {
    pub end: f64,
    pub sup: f64,
    pub occ: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Extremum {
    pub value: f64,
    pub time: f64,
    pub occ: Vec<f64>,
    /// `J̲` or `J̄`.
    pub phase: usize,
    /// For the infimum `X_{G̲} = X̲`; for the supremum `X_{Ḡ-} = X̄`.
    pub attained: bool,
    #[serde(skip)]
    pub mark: Mark,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LastExit {
    pub level: f64,
    pub time: f64,
    pub occ: Vec<f64>,
    /// `J_σ`, or `None` when `σ = ζ`.
    pub phase: Option<usize>,
    /// `X_σ`, or `None` when `σ = ζ`.
    pub value: Option<f64>,
    /// `X_σ = a`.
    pub continuous: bool,
    #[serde(skip)]
    pub mark: Mark,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FirstPassage {
    pub level: f64,
    pub time: f64,
    pub occ: Vec<f64>,
    pub phase: usize,
    pub value: f64,
    /// `X_τ = x`: no overshoot.
    pub creep: bool,
    #[serde(skip)]
    pub mark: Mark,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathSummary {
    pub x_end: f64,
    pub j_end: usize,
    pub zeta: f64,
    pub occ_zeta: Vec<f64>,
    pub inf: Extremum,
    pub sup: Extremum,
    pub last_exit: LastExit,
    /// `None` when the level is never passed before killing.
    pub first_passage: Option<FirstPassage>,
}

/// Times at which a path can be reversed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReverseAt {
    /// `r_{ζ-}`: the whole path, ignoring nothing but the killing.
    ZetaMinus,
    /// `r_{G̲}` if the infimum is attained, `r_{G̲-}` otherwise.
    Infimum,
    /// `r_{σ_a}`.
    LastExit(f64),
    /// `r_{τ_x}`.
    FirstPassage(f64),
    /// `r_t` at a deterministic time.
    Time(f64),
}

/// Starting points of post-time segments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SegmentStart {
    /// `(X_{G̲+t} - X̲, J_{G̲+t})`.
    PostInfimum,
    /// `(X_{Ḡ+t} - X̄, J_{Ḡ+t})`.
    PostSupremum,
    /// `(X_{σ_a+t} - a, J_{σ_a+t})`.
    PostLastExit(f64),
}

impl Path {
    pub fn new(x0: f64, segments: Vec<Segment>, phases: usize) -> Result<Self> {
        let Some(last) = segments.last() else {
            return Err(Error::Validation(
                "a path needs at least one segment".into(),
            ));
        };
        if last.next.is_some()
            || segments[..segments.len() - 1]
                .iter()
                .any(|s| s.next.is_none())
        {
            return Err(Error::Validation(
                "only the final event may kill the path".into(),
            ));
        }
        if segments.iter().any(|s| {
            !(s.duration >= 0.0) || s.phase >= phases || s.next.is_some_and(|j| j >= phases)
        }) {
            return Err(Error::Validation(
                "segment with bad duration or phase".into(),
            ));
        }
        Ok(Path {
            x0,
            segments,
            phases,
        })
    }

    /// A path killed at time zero.
    pub fn dead(x0: f64, phase: usize, phases: usize) -> Self {
        Path {
            x0,
            segments: vec![Segment {
                phase,
                slope: 0.0,
                duration: 0.0,
                jump: 0.0,
                next: None,
            }],
            phases,
        }
    }

    pub(crate) fn from_parts(x0: f64, segments: Vec<Segment>, phases: usize) -> Self {
        Path {
            x0,
            segments,
            phases,
        }
    }

    pub fn phases(&self) -> usize {
        self.phases
    }

    pub fn start_phase(&self) -> usize {
        self.segments[0].phase
    }

    /// Phase just before killing, `J_{ζ-}`.
    pub fn end_phase(&self) -> usize {
        self.segments.last().expect("non-empty").phase
    }

    pub fn is_dead(&self) -> bool {
        self.segments.len() == 1 && self.segments[0].duration == 0.0
    }

    pub fn zeta(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn events(&self) -> Vec<Event> {
        let mut t = 0.0;
        self.segments
            .iter()
            .map(|s| {
                t += s.duration;
                Event {
                    time: t,
                    before: s.phase,
                    after: s.next,
                    jump: s.jump,
                }
            })
            .collect()
    }

    pub fn totals(&self) -> Totals {
        let mut occ = vec![0.0; self.phases];
        let mut x = self.x0;
        let mut sup = x;
        for s in &self.segments {
            occ[s.phase] += s.duration;
            x += s.slope * s.duration;
            sup = sup.max(x);
            if s.next.is_some() {
                x += s.jump;
                sup = sup.max(x);
            }
        }
        Totals { end: x, sup, occ }
    }

    pub fn occupation(&self) -> Vec<f64> {
        let mut occ = vec![0.0; self.phases];
        for s in &self.segments {
            occ[s.phase] += s.duration;
        }
        occ
    }

    /// `X_{ζ-}`.
    pub fn end_value(&self) -> f64 {
        self.totals().end
    }

    fn occupation_until(&self, mark: Mark) -> Vec<f64> {
        let mut occ = vec![0.0; self.phases];
        for s in &self.segments[..mark.seg] {
            occ[s.phase] += s.duration;
        }
        occ[self.segments[mark.seg].phase] += mark.offset;
        occ
    }

    /// Levels at the start of every segment.
    fn start_levels(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.segments.len());
        let mut x = self.x0;
        for s in &self.segments {
            out.push(x);
            x += s.slope * s.duration + s.jump;
        }
        out
    }

    /// Mark for the start of segment `k`.
    fn start_mark(&self, k: usize, time: f64) -> Mark {
        if k == 0 {
            Mark {
                seg: 0,
                offset: 0.0,
                time: 0.0,
            }
        } else {
            Mark {
                seg: k - 1,
                offset: self.segments[k - 1].duration,
                time,
            }
        }
    }

    /// Extrema, last exit from `(-∞, a]` and first passage over `x`.
    pub fn summary(&self, a: f64, x: f64) -> PathSummary {
        let origin = self.start_mark(0, 0.0);
        let j0 = self.start_phase();
        let (mut inf_v, mut inf_mark, mut inf_att, mut inf_phase) = (self.x0, origin, true, j0);
        let (mut sup_v, mut sup_mark, mut sup_att, mut sup_phase) = (self.x0, origin, true, j0);
        // (mark, X_σ, J_σ)
        let mut sigma: Option<(Mark, Option<f64>, Option<usize>)> = None;
        // (mark, X_τ, J_τ)
        let mut tau: Option<(Mark, f64, usize)> = None;
        let mut t = 0.0;
        let mut s = self.x0;
        for (k, seg) in self.segments.iter().enumerate() {
            let e = s + seg.slope * seg.duration;
            if tau.is_none() {
                if s > x {
                    tau = Some((self.start_mark(k, t), s, seg.phase));
                } else if seg.slope > 0.0 && e > x {
                    let off = (x - s) / seg.slope;
                    let m = Mark {
                        seg: k,
                        offset: off,
                        time: t + off,
                    };
                    tau = Some((m, x, seg.phase));
                }
            }
            let touches = if seg.slope < 0.0 {
                e < a || s <= a
            } else {
                s <= a
            };
            let end = Mark {
                seg: k,
                offset: seg.duration,
                time: t + seg.duration,
            };
            let right = seg.next.map(|_| e + seg.jump);
            if touches {
                sigma = if seg.slope > 0.0 && e > a {
                    let off = (a - s) / seg.slope;
                    let m = if off == 0.0 {
                        self.start_mark(k, t)
                    } else {
                        Mark {
                            seg: k,
                            offset: off,
                            time: t + off,
                        }
                    };
                    Some((m, Some(a), Some(seg.phase)))
                } else {
                    Some((end, right, seg.next))
                };
            }
            t += seg.duration;
            let lo = right.map_or(e, |r| r.min(e));
            if lo <= inf_v {
                inf_v = lo;
                inf_mark = end;
                inf_att = right == Some(lo);
                inf_phase = match (inf_att, seg.next) {
                    (true, Some(j)) => j,
                    _ => seg.phase,
                };
            }
            let hi = right.map_or(e, |r| r.max(e));
            if hi > sup_v {
                sup_v = hi;
                sup_mark = end;
                sup_att = e >= hi;
                sup_phase = match (sup_att, seg.next) {
                    (false, Some(j)) => j,
                    _ => seg.phase,
                };
            }
            s = right.unwrap_or(e);
        }
        let x_end = s;
        let occ_zeta = self.occupation();
        let last_exit = match sigma {
            Some((mark, value, phase)) => LastExit {
                level: a,
                time: mark.time,
                occ: self.occupation_until(mark),
                phase,
                value,
                continuous: value == Some(a),
                mark,
            },
            None => LastExit {
                level: a,
                time: 0.0,
                occ: vec![0.0; self.phases],
                phase: Some(j0),
                value: Some(self.x0),
                continuous: self.x0 == a,
                mark: origin,
            },
        };
        let first_passage = tau.map(|(mark, value, phase)| FirstPassage {
            level: x,
            time: mark.time,
            occ: self.occupation_until(mark),
            phase,
            value,
            creep: value == x,
            mark,
        });
        PathSummary {
            x_end,
            j_end: self.end_phase(),
            zeta: t,
            occ_zeta,
            inf: Extremum {
                value: inf_v,
                time: inf_mark.time,
                occ: self.occupation_until(inf_mark),
                phase: inf_phase,
                attained: inf_att,
                mark: inf_mark,
            },
            sup: Extremum {
                value: sup_v,
                time: sup_mark.time,
                occ: self.occupation_until(sup_mark),
                phase: sup_phase,
                attained: sup_att,
                mark: sup_mark,
            },
            last_exit,
            first_passage,
        }
    }

    fn at_event(&self, mark: Mark) -> bool {
        mark.offset >= self.segments[mark.seg].duration
    }

    /// `r_T` (with the jump at `T`) or `r_{T-}` (without it) at a mark.
    pub fn reverse_at(&self, mark: Mark, include_jump: bool) -> Path {
        let seg = &self.segments[mark.seg];
        let at_event = self.at_event(mark);
        if at_event && seg.next.is_none() && include_jump {
            // T = ζ
            return Path::dead(0.0, seg.phase, self.phases);
        }
        if mark.seg == 0 && mark.offset == 0.0 {
            return Path::dead(0.0, seg.phase, self.phases);
        }
        let x0 = if at_event && include_jump {
            seg.jump
        } else {
            0.0
        };
        let link = |k: usize| -> (f64, Option<usize>) {
            if k == 0 {
                (0.0, None)
            } else {
                let prev = &self.segments[k - 1];
                (prev.jump, Some(prev.phase))
            }
        };
        let mut out = Vec::with_capacity(mark.seg + 1);
        let (jump, next) = link(mark.seg);
        out.push(Segment {
            phase: seg.phase,
            slope: seg.slope,
            duration: mark.offset,
            jump,
            next,
        });
        for k in (0..mark.seg).rev() {
            let s = &self.segments[k];
            let (jump, next) = link(k);
            out.push(Segment {
                phase: s.phase,
                slope: s.slope,
                duration: s.duration,
                jump,
                next,
            });
        }
        Path::from_parts(x0, out, self.phases)
    }

    /// `(X_{T+t} - reference, J_{T+t})`, killed with the original path.
    pub fn after(&self, mark: Mark, reference: f64) -> Path {
        let starts = self.start_levels();
        let seg = &self.segments[mark.seg];
        let level = starts[mark.seg] + seg.slope * mark.offset;
        if self.at_event(mark) {
            match seg.next {
                None => Path::dead(level - reference, seg.phase, self.phases),
                Some(_) => Path::from_parts(
                    level + seg.jump - reference,
                    self.segments[mark.seg + 1..].to_vec(),
                    self.phases,
                ),
            }
        } else {
            let mut out = Vec::with_capacity(self.segments.len() - mark.seg);
            out.push(Segment {
                duration: seg.duration - mark.offset,
                ..seg.clone()
            });
            out.extend_from_slice(&self.segments[mark.seg + 1..]);
            Path::from_parts(level - reference, out, self.phases)
        }
    }

    /// The path killed at a deterministic time `t` (`k_t`), or `None` when
    /// it is killed before.
    pub fn killed_at(&self, t: f64) -> Option<Path> {
        let mut start = 0.0;
        for (k, seg) in self.segments.iter().enumerate() {
            if start + seg.duration > t {
                let mut out = self.segments[..k].to_vec();
                out.push(Segment {
                    duration: t - start,
                    jump: 0.0,
                    next: None,
                    ..seg.clone()
                });
                return Some(Path::from_parts(self.x0, out, self.phases));
            }
            start += seg.duration;
        }
        None
    }

    pub fn reverse(&self, at: ReverseAt) -> Path {
        match at {
            ReverseAt::ZetaMinus => {
                let k = self.segments.len() - 1;
                let mark = Mark {
                    seg: k,
                    offset: self.segments[k].duration,
                    time: self.zeta(),
                };
                self.reverse_at(mark, false)
            }
            ReverseAt::Infimum => {
                let inf = self.summary(0.0, 0.0).inf;
                self.reverse_at(inf.mark, inf.attained)
            }
            ReverseAt::LastExit(a) => {
                let s = self.summary(a, 0.0).last_exit;
                self.reverse_at(s.mark, true)
            }
            ReverseAt::FirstPassage(x) => match self.summary(0.0, x).first_passage {
                Some(fp) => self.reverse_at(fp.mark, true),
                None => Path::dead(0.0, self.end_phase(), self.phases),
            },
            ReverseAt::Time(t) => match self.killed_at(t) {
                Some(p) => p.reverse(ReverseAt::ZetaMinus),
                None => Path::dead(0.0, self.end_phase(), self.phases),
            },
        }
    }

    pub fn extract(&self, from: SegmentStart) -> Path {
        match from {
            SegmentStart::PostInfimum => {
                let inf = self.summary(0.0, 0.0).inf;
                self.after(inf.mark, inf.value)
            }
            SegmentStart::PostSupremum => {
                let sup = self.summary(0.0, 0.0).sup;
                self.after(sup.mark, sup.value)
            }
            SegmentStart::PostLastExit(a) => {
                let s = self.summary(a, 0.0).last_exit;
                self.after(s.mark, a)
            }
        }
    }
}

/// `r_T` for the listed choices of `T`.
pub fn reverse_path(path: &Path, at: ReverseAt) -> Path {
    path.reverse(at)
}

pub fn extract_segment(path: &Path, from: SegmentStart) -> Path {
    path.extract(from)
}

pub fn path_summary(path: &Path, a: f64, x: f64) -> PathSummary {
    path.summary(a, x)
}

/// `exp(α X_{ζ-} + γ X̄ - ⟨β, ζ⟩)`: the functional family used by every
/// Monte Carlo check. `γ` weights the running supremum, which keeps
/// reversal identities informative where the end value is pinned.
#[derive(Clone, Debug, PartialEq)]
pub struct Functional {
    pub alpha: C64,
    pub gamma: f64,
    pub beta: Vec<f64>,
}

impl Functional {
    pub fn new(alpha: C64, gamma: f64, beta: &[f64]) -> Self {
        Functional {
            alpha,
            gamma,
            beta: beta.to_vec(),
        }
    }

    pub fn eval(&self, path: &Path) -> C64 {
        let t = path.totals();
        let disc: f64 = self.beta.iter().zip(&t.occ).map(|(b, o)| b * o).sum();
        (self.alpha * t.end + self.gamma * t.sup - disc).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(phase: usize, slope: f64, duration: f64, jump: f64, next: Option<usize>) -> Segment {
        Segment {
            phase,
            slope,
            duration,
            jump,
            next,
        }
    }

    #[test]
    fn monotone_path_exits_and_creeps() {
        let p = Path::new(0.0, vec![seg(0, 1.0, 5.0, 0.0, None)], 1).unwrap();
        let s = p.summary(0.0, 2.0);
        assert_eq!(s.last_exit.time, 0.0);
        assert!(s.last_exit.continuous);
        let fp = s.first_passage.unwrap();
        assert_eq!(fp.time, 2.0);
        assert!(fp.creep);
        assert_eq!(s.inf.value, 0.0);
        assert_eq!(s.sup.value, 5.0);
        assert_eq!(s.sup.time, 5.0);
        assert_eq!(s.sup.phase, 0);
    }

    #[test]
    fn upward_switch_jump_off_the_minimum() {
        let p = Path::new(
            0.0,
            vec![seg(0, -1.0, 1.0, 0.5, Some(1)), seg(1, 2.0, 1.0, 0.0, None)],
            2,
        )
        .unwrap();
        let s = p.summary(0.0, 10.0);
        assert_eq!(s.inf.value, -1.0);
        assert_eq!(s.inf.time, 1.0);
        assert!(!s.inf.attained);
        assert_eq!(s.inf.phase, 0);
        assert!(s.first_passage.is_none());
        // σ_0: crossing of zero inside the second segment
        assert!(s.last_exit.continuous);
        assert_eq!(s.last_exit.phase, Some(1));
        assert!((s.last_exit.time - 1.25).abs() < 1e-15);
        let post = p.extract(SegmentStart::PostInfimum);
        assert_eq!(post.x0, 0.5);
        assert_eq!(post.start_phase(), 1);
    }

    #[test]
    fn killing_during_descent_puts_infimum_at_zeta() {
        let p = Path::new(
            0.0,
            vec![seg(1, 1.0, 1.0, 0.0, Some(0)), seg(0, -1.0, 3.0, 0.0, None)],
            2,
        )
        .unwrap();
        let s = p.summary(0.0, 0.5);
        assert_eq!(s.inf.time, 4.0);
        assert_eq!(s.inf.value, -2.0);
        assert!(!s.inf.attained);
        assert_eq!(s.inf.phase, 0);
        assert!(p.extract(SegmentStart::PostInfimum).is_dead());
        assert_eq!(s.last_exit.time, 4.0);
        assert_eq!(s.last_exit.phase, None);
        assert_eq!(s.sup.time, 1.0);
        assert_eq!(s.sup.phase, 1);
    }

    #[test]
    fn reversal_at_zeta_is_an_involution() {
        let p = Path::new(
            0.0,
            vec![
                seg(0, 2.0, 0.7, -1.3, Some(0)),
                seg(0, 2.0, 0.2, 0.0, Some(1)),
                seg(1, 1.0, 1.1, -0.4, Some(0)),
                seg(0, 2.0, 0.3, 0.0, None),
            ],
            2,
        )
        .unwrap();
        let r = p.reverse(ReverseAt::ZetaMinus);
        assert_eq!(r.reverse(ReverseAt::ZetaMinus), p);
        assert_eq!(r.occupation(), p.occupation());
        let s = p.summary(0.0, 1.0);
        assert!((r.totals().sup - (s.x_end - s.inf.value)).abs() < 1e-12);
        assert_eq!(r.start_phase(), p.end_phase());
    }

    #[test]
    fn reversal_at_attained_infimum_starts_with_the_jump() {
        let p = Path::new(
            0.0,
            vec![seg(0, 1.0, 1.0, -3.0, Some(1)), seg(1, 1.0, 2.0, 0.0, None)],
            2,
        )
        .unwrap();
        let s = p.summary(0.0, 5.0);
        assert!(s.inf.attained);
        assert_eq!(s.inf.phase, 1);
        let r = p.reverse(ReverseAt::Infimum);
        assert_eq!(r.x0, -3.0);
        assert_eq!(r.start_phase(), 0);
        assert_eq!(r.zeta(), 1.0);
        assert!((r.end_value() - (s.inf.value - 0.0)).abs() < 1e-15);
    }

    #[test]
    fn truncation_and_fixed_time_reversal() {
        let p = Path::new(
            0.0,
            vec![seg(0, 1.0, 1.0, -0.5, Some(1)), seg(1, 3.0, 2.0, 0.0, None)],
            2,
        )
        .unwrap();
        let k = p.killed_at(2.0).unwrap();
        assert_eq!(k.zeta(), 2.0);
        assert!((k.end_value() - 3.5).abs() < 1e-15);
        assert!(p.killed_at(3.0).is_none());
        let r = p.reverse(ReverseAt::Time(2.0));
        assert_eq!(r.start_phase(), 1);
        assert!((r.end_value() - 3.5).abs() < 1e-15);
    }
}
