//! Parametric Markov additive processes with rational matrix exponents.
//!
//! A model is a finite set of phases, each carrying a bounded-variation or
//! Brownian Lévy component with compound Poisson jumps, together with switch
//! rates, switch jumps and per-phase killing rates.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{diag, CMatrix, C64};

const POLE_TOL: f64 = 1e-12;
const WEIGHT_TOL: f64 = 1e-12;

/// Jump size distribution with closed-form moment transform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum JumpLaw {
    Point {
        value: f64,
    },
    /// `-Exp(rate)`, supported on `(-inf, 0)`.
    ExpNeg {
        rate: f64,
    },
    /// `Exp(rate)`, supported on `(0, inf)`.
    ExpPos {
        rate: f64,
    },
    Mixture {
        weights: Vec<f64>,
        components: Vec<JumpLaw>,
    },
}

impl JumpLaw {
    pub fn zero() -> Self {
        JumpLaw::Point { value: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            JumpLaw::Point { value } => {
                if !value.is_finite() {
                    return Err(Error::Validation("point mass must be finite".into()));
                }
            }
            JumpLaw::ExpNeg { rate } | JumpLaw::ExpPos { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return Err(Error::Validation(format!(
                        "exponential rate must be positive, got {rate}"
                    )));
                }
            }
            JumpLaw::Mixture {
                weights,
                components,
            } => {
                if weights.len() != components.len() || weights.is_empty() {
                    return Err(Error::Validation(
                        "mixture needs one weight per component".into(),
                    ));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                    return Err(Error::Validation(
                        "mixture weights must be nonnegative".into(),
                    ));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > WEIGHT_TOL {
                    return Err(Error::Validation(format!(
                        "mixture weights sum to {total}, expected 1"
                    )));
                }
                for comp in components {
                    if matches!(comp, JumpLaw::Mixture { .. }) {
                        return Err(Error::Validation("nested mixtures are not allowed".into()));
                    }
                    comp.validate()?;
                }
            }
        }
        Ok(())
    }

    /// Moment transform `E e^{αU}`.
    pub fn mgf(&self, alpha: C64) -> Result<C64> {
        match self {
            JumpLaw::Point { value } => Ok((alpha * value).exp()),
            JumpLaw::ExpNeg { rate } => {
                let den = alpha + rate;
                if den.norm() < POLE_TOL {
                    return Err(Error::Pole(alpha));
                }
                Ok(C64::new(*rate, 0.0) / den)
            }
            JumpLaw::ExpPos { rate } => {
                let den = C64::new(*rate, 0.0) - alpha;
                if den.norm() < POLE_TOL {
                    return Err(Error::Pole(alpha));
                }
                if alpha.re >= *rate {
                    return Err(Error::Domain(format!(
                        "Re(alpha) = {} is not below the exp-pos rate {rate}",
                        alpha.re
                    )));
                }
                Ok(C64::new(*rate, 0.0) / den)
            }
            JumpLaw::Mixture {
                weights,
                components,
            } => {
                let mut acc = C64::new(0.0, 0.0);
                for (w, comp) in weights.iter().zip(components) {
                    acc += comp.mgf(alpha)? * w;
                }
                Ok(acc)
            }
        }
    }

    /// `d/dα E e^{αU}`.
    pub fn mgf_deriv(&self, alpha: C64) -> Result<C64> {
        match self {
            JumpLaw::Point { value } => Ok((alpha * value).exp() * value),
            JumpLaw::ExpNeg { rate } => {
                let den = alpha + rate;
                if den.norm() < POLE_TOL {
                    return Err(Error::Pole(alpha));
                }
                Ok(-C64::new(*rate, 0.0) / (den * den))
            }
            JumpLaw::ExpPos { rate } => {
                let den = C64::new(*rate, 0.0) - alpha;
                if den.norm() < POLE_TOL {
                    return Err(Error::Pole(alpha));
                }
                if alpha.re >= *rate {
                    return Err(Error::Domain(format!(
                        "Re(alpha) = {} is not below the exp-pos rate {rate}",
                        alpha.re
                    )));
                }
                Ok(C64::new(*rate, 0.0) / (den * den))
            }
            JumpLaw::Mixture {
                weights,
                components,
            } => {
                let mut acc = C64::new(0.0, 0.0);
                for (w, comp) in weights.iter().zip(components) {
                    acc += comp.mgf_deriv(alpha)? * w;
                }
                Ok(acc)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            JumpLaw::Point { value } => *value,
            JumpLaw::ExpNeg { rate } => -1.0 / rate,
            JumpLaw::ExpPos { rate } => 1.0 / rate,
            JumpLaw::Mixture {
                weights,
                components,
            } => weights
                .iter()
                .zip(components)
                .map(|(w, c)| w * c.mean())
                .sum(),
        }
    }

    /// Support contained in `(-inf, 0]`.
    pub fn is_nonpositive(&self) -> bool {
        match self {
            JumpLaw::Point { value } => *value <= 0.0,
            JumpLaw::ExpNeg { .. } => true,
            JumpLaw::ExpPos { .. } => false,
            JumpLaw::Mixture {
                weights,
                components,
            } => weights
                .iter()
                .zip(components)
                .all(|(w, c)| *w == 0.0 || c.is_nonpositive()),
        }
    }

    /// Puts positive probability on `(0, inf)`.
    pub fn has_positive_mass(&self) -> bool {
        match self {
            JumpLaw::Point { value } => *value > 0.0,
            JumpLaw::ExpNeg { .. } => false,
            JumpLaw::ExpPos { .. } => true,
            JumpLaw::Mixture {
                weights,
                components,
            } => weights
                .iter()
                .zip(components)
                .any(|(w, c)| *w > 0.0 && c.has_positive_mass()),
        }
    }

    /// Non-mixture components with their weights.
    pub fn atoms(&self) -> Vec<(f64, &JumpLaw)> {
        match self {
            JumpLaw::Mixture {
                weights,
                components,
            } => weights.iter().copied().zip(components.iter()).collect(),
            other => vec![(1.0, other)],
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            JumpLaw::Point { value } => *value,
            JumpLaw::ExpNeg { rate } => -Exp::new(*rate).expect("validated rate").sample(rng),
            JumpLaw::ExpPos { rate } => Exp::new(*rate).expect("validated rate").sample(rng),
            JumpLaw::Mixture {
                weights,
                components,
            } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (w, comp) in weights.iter().zip(components) {
                    acc += w;
                    if u < acc {
                        return comp.sample(rng);
                    }
                }
                components.last().expect("non-empty mixture").sample(rng)
            }
        }
    }
}

/// Lévy component of one phase.
#[derive(Clone, Debug, PartialEq)]
pub struct LevyComponent {
    pub drift: f64,
    pub sigma2: f64,
    pub jump_rate: f64,
    pub jump_law: Option<JumpLaw>,
}

impl LevyComponent {
    pub fn drift_only(drift: f64) -> Self {
        LevyComponent {
            drift,
            sigma2: 0.0,
            jump_rate: 0.0,
            jump_law: None,
        }
    }

    pub fn with_jumps(drift: f64, jump_rate: f64, law: JumpLaw) -> Self {
        LevyComponent {
            drift,
            sigma2: 0.0,
            jump_rate,
            jump_law: Some(law),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.drift.is_finite() {
            return Err(Error::Validation("drift must be finite".into()));
        }
        if !(self.sigma2.is_finite() && self.sigma2 >= 0.0) {
            return Err(Error::Validation("sigma2 must be nonnegative".into()));
        }
        if !(self.jump_rate.is_finite() && self.jump_rate >= 0.0) {
            return Err(Error::Validation("jump rate must be nonnegative".into()));
        }
        match (&self.jump_law, self.jump_rate > 0.0) {
            (Some(law), true) => law.validate(),
            (None, false) => Ok(()),
            (Some(_), false) => Err(Error::Validation(
                "jump law given for a phase with zero jump rate".into(),
            )),
            (None, true) => Err(Error::Validation(
                "positive jump rate requires a jump law".into(),
            )),
        }
    }

    /// The Laplace exponent `ψ(α) = dα + σ²α²/2 + λ(E e^{αY} − 1)`.
    pub fn exponent(&self, alpha: C64) -> Result<C64> {
        let mut v = alpha * self.drift + alpha * alpha * (0.5 * self.sigma2);
        if let Some(law) = &self.jump_law {
            v += (law.mgf(alpha)? - 1.0) * self.jump_rate;
        }
        Ok(v)
    }

    pub fn exponent_deriv(&self, alpha: C64) -> Result<C64> {
        let mut v = C64::new(self.drift, 0.0) + alpha * self.sigma2;
        if let Some(law) = &self.jump_law {
            v += law.mgf_deriv(alpha)? * self.jump_rate;
        }
        Ok(v)
    }

    pub fn mean(&self) -> f64 {
        self.drift
            + self
                .jump_law
                .as_ref()
                .map_or(0.0, |l| self.jump_rate * l.mean())
    }

    /// Paths never increase: no Brownian part, no positive drift, no upward jumps.
    pub fn is_non_increasing(&self) -> bool {
        self.sigma2 == 0.0
            && self.drift <= 0.0
            && !(self.jump_rate > 0.0
                && self
                    .jump_law
                    .as_ref()
                    .is_some_and(|l| l.has_positive_mass()))
    }

    pub fn class(&self) -> Option<PhaseClass> {
        if self.sigma2 > 0.0 {
            Some(PhaseClass::Osc)
        } else if self.drift > 0.0 {
            Some(PhaseClass::Up)
        } else if self.drift < 0.0 || self.jump_rate > 0.0 {
            Some(PhaseClass::Down)
        } else {
            None
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PhaseClass {
    Up,
    Down,
    Osc,
}

impl PhaseClass {
    pub fn name(self) -> &'static str {
        match self {
            PhaseClass::Up => "UP",
            PhaseClass::Down => "DOWN",
            PhaseClass::Osc => "OSC",
        }
    }
}

/// A validated Markov additive process with killing.
#[derive(Clone, Debug, PartialEq)]
pub struct MapModel {
    names: Vec<String>,
    levy: Vec<LevyComponent>,
    switch_rate: DMatrix<f64>,
    switch_jump: Vec<Vec<JumpLaw>>,
    kill: Vec<f64>,
}

impl MapModel {
    /// Builds and validates a model. `switch_jump[i][j]` is ignored on the
    /// diagonal; a zero kill vector is accepted here and rejected by the
    /// operations that need killing.
    pub fn new(
        names: Vec<String>,
        levy: Vec<LevyComponent>,
        switch_rate: DMatrix<f64>,
        switch_jump: Vec<Vec<JumpLaw>>,
        kill: Vec<f64>,
    ) -> Result<Self> {
        let n = levy.len();
        if n == 0 {
            return Err(Error::Validation("model needs at least one phase".into()));
        }
        if names.len() != n || kill.len() != n {
            return Err(Error::Validation(format!(
                "expected {n} names and kill rates, got {} and {}",
                names.len(),
                kill.len()
            )));
        }
        if switch_rate.shape() != (n, n)
            || switch_jump.len() != n
            || switch_jump.iter().any(|row| row.len() != n)
        {
            return Err(Error::Validation("switch tables must be n x n".into()));
        }
        for (i, comp) in levy.iter().enumerate() {
            comp.validate()
                .map_err(|e| Error::Validation(format!("phase {}: {e}", i + 1)))?;
        }
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let r = switch_rate[(i, j)];
                if !(r.is_finite() && r >= 0.0) {
                    return Err(Error::Validation(format!(
                        "switch rate {}->{} must be nonnegative",
                        i + 1,
                        j + 1
                    )));
                }
                switch_jump[i][j].validate()?;
            }
        }
        if kill.iter().any(|q| !(q.is_finite() && *q >= 0.0)) {
            return Err(Error::Validation("kill rates must be nonnegative".into()));
        }
        let mut sr = switch_rate;
        let mut sj = switch_jump;
        for i in 0..n {
            sr[(i, i)] = 0.0;
            sj[i][i] = JumpLaw::zero();
        }
        let model = MapModel {
            names,
            levy,
            switch_rate: sr,
            switch_jump: sj,
            kill,
        };
        if !model.is_irreducible() {
            return Err(Error::Validation("phase chain is not irreducible".into()));
        }
        Ok(model)
    }

    /// Convenience constructor with phases named `1..n`.
    pub fn unnamed(
        levy: Vec<LevyComponent>,
        switch_rate: DMatrix<f64>,
        switch_jump: Vec<Vec<JumpLaw>>,
        kill: Vec<f64>,
    ) -> Result<Self> {
        let names = (1..=levy.len()).map(|i| i.to_string()).collect();
        Self::new(names, levy, switch_rate, switch_jump, kill)
    }

    pub fn n(&self) -> usize {
        self.levy.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn levy(&self) -> &[LevyComponent] {
        &self.levy
    }

    pub fn switch_rate(&self) -> &DMatrix<f64> {
        &self.switch_rate
    }

    pub fn switch_jump(&self, i: usize, j: usize) -> &JumpLaw {
        &self.switch_jump[i][j]
    }

    pub fn kill(&self) -> &[f64] {
        &self.kill
    }

    pub fn has_killing(&self) -> bool {
        self.kill.iter().any(|&q| q > 0.0)
    }

    /// Same dynamics with a different kill vector.
    pub fn with_kill(&self, kill: Vec<f64>) -> Result<Self> {
        Self::new(
            self.names.clone(),
            self.levy.clone(),
            self.switch_rate.clone(),
            self.switch_jump.clone(),
            kill,
        )
    }

    pub fn total_switch_rate(&self, i: usize) -> f64 {
        self.switch_rate.row(i).sum()
    }

    pub fn spectrally_negative(&self) -> bool {
        let n = self.n();
        self.levy
            .iter()
            .all(|c| c.jump_law.as_ref().is_none_or(|l| l.is_nonpositive()))
            && (0..n).all(|i| {
                (0..n).all(|j| {
                    i == j
                        || self.switch_rate[(i, j)] == 0.0
                        || self.switch_jump[i][j].is_nonpositive()
                })
            })
    }

    pub fn bounded_variation(&self) -> bool {
        self.levy.iter().all(|c| c.sigma2 == 0.0)
    }

    fn is_irreducible(&self) -> bool {
        let n = self.n();
        let reach = |forward: bool| {
            let mut seen = vec![false; n];
            let mut stack = vec![0];
            seen[0] = true;
            while let Some(i) = stack.pop() {
                for j in 0..n {
                    let r = if forward {
                        self.switch_rate[(i, j)]
                    } else {
                        self.switch_rate[(j, i)]
                    };
                    if r > 0.0 && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }

    /// `Ψ^β(α) = Ψ(α) − Δ_β`.
    pub fn psi(&self, alpha: C64, beta: &[f64]) -> Result<CMatrix> {
        let n = self.n();
        check_beta(beta, n)?;
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] =
                self.levy[i].exponent(alpha)? - self.total_switch_rate(i) - self.kill[i] - beta[i];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let rate = self.switch_rate[(i, j)];
                if rate > 0.0 {
                    m[(i, j)] = self.switch_jump[i][j].mgf(alpha)? * rate;
                }
            }
        }
        Ok(m)
    }

    /// Entrywise `dΨ/dα`.
    pub fn psi_deriv(&self, alpha: C64) -> Result<CMatrix> {
        let n = self.n();
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.levy[i].exponent_deriv(alpha)?;
            for j in 0..n {
                let rate = self.switch_rate[(i, j)];
                if i != j && rate > 0.0 {
                    m[(i, j)] = self.switch_jump[i][j].mgf_deriv(alpha)? * rate;
                }
            }
        }
        Ok(m)
    }

    /// `Ψ(0)`: sub-generator of the phase chain including killing.
    pub fn generator(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = self.switch_rate.clone();
        for i in 0..n {
            m[(i, i)] = -self.total_switch_rate(i) - self.kill[i];
        }
        m
    }

    /// `Ψ(0) + Δ_q`: generator of the phase chain without killing.
    pub fn conservative_generator(&self) -> DMatrix<f64> {
        self.generator() + diag(&self.kill)
    }

    pub fn phase_partition(&self) -> Result<Vec<PhaseClass>> {
        self.levy
            .iter()
            .enumerate()
            .map(|(i, c)| c.class().ok_or(Error::Degenerate { phase: i + 1 }))
            .collect()
    }

    /// Stationary law of the phase chain.
    ///
    /// Killing is implicit in the model, so `π(Ψ(0) + Δ_q) = 0` already refers
    /// to the conservative chain and both flag values give the same vector.
    pub fn stationary(&self, _strip_killing: bool) -> Result<DVector<f64>> {
        let n = self.n();
        if n == 1 {
            return Ok(DVector::from_element(1, 1.0));
        }
        let a = self.conservative_generator();
        // Solve πA = 0, π1 = 1 by replacing one equation with the normalization.
        let mut m = a.transpose();
        for j in 0..n {
            m[(n - 1, j)] = 1.0;
        }
        let mut rhs = DVector::zeros(n);
        rhs[n - 1] = 1.0;
        let pi = m
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("stationary equations".into()))?;
        let scale = a.iter().fold(1.0f64, |acc, x| acc.max(x.abs()));
        let resid = (pi.transpose() * &a).amax();
        if resid > 1e-10 * scale || pi.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::Singular(format!(
                "stationary vector residual {resid:.3e}"
            )));
        }
        Ok(pi)
    }

    /// Stationary drift `E_π X_1` of the killing-free process.
    pub fn stationary_drift(&self) -> Result<f64> {
        let pi = self.stationary(true)?;
        let d = self.psi_deriv(C64::new(0.0, 0.0))?.map(|z| z.re);
        Ok((pi.transpose() * d * DVector::from_element(self.n(), 1.0))[(0, 0)])
    }

    /// Time-reversed model with exponent `Δ_π⁻¹ Ψ(α)ᵀ Δ_π`.
    pub fn dual(&self) -> Result<MapModel> {
        let pi = self.stationary(true)?;
        let n = self.n();
        let mut rate = DMatrix::zeros(n, n);
        let mut jump = vec![vec![JumpLaw::zero(); n]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    rate[(i, j)] = pi[j] * self.switch_rate[(j, i)] / pi[i];
                    jump[i][j] = self.switch_jump[j][i].clone();
                }
            }
        }
        MapModel::new(
            self.names.clone(),
            self.levy.clone(),
            rate,
            jump,
            self.kill.clone(),
        )
    }

    /// Rejects models outside the spectrally negative class with no
    /// non-increasing phase.
    pub fn require_spectrally_negative(&self) -> Result<()> {
        if !self.spectrally_negative() {
            return Err(Error::Unsupported("model has upward jumps".into()));
        }
        if let Some(i) = self.levy.iter().position(|c| c.is_non_increasing()) {
            return Err(Error::Validation(format!(
                "phase {} has a non-increasing component",
                i + 1
            )));
        }
        Ok(())
    }

    pub fn require_bounded_variation(&self) -> Result<()> {
        if self.bounded_variation() {
            Ok(())
        } else {
            Err(Error::Unsupported(
                "simulation requires sigma2 = 0 in every phase".into(),
            ))
        }
    }

    pub fn to_json(&self) -> ModelFile {
        let n = self.n();
        let phases = (0..n)
            .map(|i| {
                let c = &self.levy[i];
                PhaseSpec {
                    name: Some(self.names[i].clone()),
                    drift: c.drift,
                    sigma2: c.sigma2,
                    jump: c.jump_law.as_ref().map(|law| PhaseJumpSpec {
                        rate: c.jump_rate,
                        law: law.clone(),
                    }),
                }
            })
            .collect();
        let mut switch = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && self.switch_rate[(i, j)] > 0.0 {
                    switch.push(SwitchSpec {
                        from: PhaseRef::Name(self.names[i].clone()),
                        to: PhaseRef::Name(self.names[j].clone()),
                        rate: self.switch_rate[(i, j)],
                        jump: Some(self.switch_jump[i][j].clone()),
                    });
                }
            }
        }
        ModelFile {
            phases,
            switch,
            kill: self.kill.clone(),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        file.build()
    }
}

fn check_beta(beta: &[f64], n: usize) -> Result<()> {
    if beta.len() != n {
        return Err(Error::Domain(format!(
            "beta has {} entries for {n} phases",
            beta.len()
        )));
    }
    if beta.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
        return Err(Error::Domain("beta must be nonnegative".into()));
    }
    Ok(())
}

/// On-disk model description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub phases: Vec<PhaseSpec>,
    #[serde(default)]
    pub switch: Vec<SwitchSpec>,
    pub kill: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub drift: f64,
    #[serde(default)]
    pub sigma2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump: Option<PhaseJumpSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseJumpSpec {
    pub rate: f64,
    pub law: JumpLaw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchSpec {
    pub from: PhaseRef,
    pub to: PhaseRef,
    pub rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump: Option<JumpLaw>,
}

/// A phase given either by zero-based index or by name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PhaseRef {
    Index(usize),
    Name(String),
}

impl ModelFile {
    pub fn build(&self) -> Result<MapModel> {
        let n = self.phases.len();
        let names: Vec<String> = self
            .phases
            .iter()
            .enumerate()
            .map(|(i, p)| p.name.clone().unwrap_or_else(|| (i + 1).to_string()))
            .collect();
        for (i, a) in names.iter().enumerate() {
            if names[..i].contains(a) {
                return Err(Error::Validation(format!("duplicate phase name {a:?}")));
            }
        }
        let resolve = |r: &PhaseRef| -> Result<usize> {
            match r {
                PhaseRef::Index(i) if *i < n => Ok(*i),
                PhaseRef::Index(i) => {
                    Err(Error::Validation(format!("phase index {i} out of range")))
                }
                PhaseRef::Name(s) => names
                    .iter()
                    .position(|x| x == s)
                    .ok_or_else(|| Error::Validation(format!("unknown phase {s:?}"))),
            }
        };
        let levy = self
            .phases
            .iter()
            .map(|p| LevyComponent {
                drift: p.drift,
                sigma2: p.sigma2,
                jump_rate: p.jump.as_ref().map_or(0.0, |j| j.rate),
                jump_law: p
                    .jump
                    .as_ref()
                    .filter(|j| j.rate > 0.0)
                    .map(|j| j.law.clone()),
            })
            .collect();
        let mut rate = DMatrix::zeros(n, n);
        let mut jump = vec![vec![JumpLaw::zero(); n]; n];
        for s in &self.switch {
            let (i, j) = (resolve(&s.from)?, resolve(&s.to)?);
            if i == j {
                return Err(Error::Validation("switch from a phase to itself".into()));
            }
            if rate[(i, j)] != 0.0 {
                return Err(Error::Validation(format!(
                    "duplicate switch {}->{}",
                    names[i], names[j]
                )));
            }
            rate[(i, j)] = s.rate;
            jump[i][j] = s.jump.clone().unwrap_or_else(JumpLaw::zero);
        }
        MapModel::new(names, levy, rate, jump, self.kill.clone())
    }
}

/// Reference models used throughout the tests and the CLI examples.
pub mod canonical {
    use super::*;

    /// Single phase, `d = 2`, unit-rate `-Exp(1)` jumps, `q = 0.5`.
    pub fn m1() -> MapModel {
        MapModel::unnamed(
            vec![LevyComponent::with_jumps(
                2.0,
                1.0,
                JumpLaw::ExpNeg { rate: 1.0 },
            )],
            DMatrix::zeros(1, 1),
            vec![vec![JumpLaw::zero()]],
            vec![0.5],
        )
        .expect("valid model")
    }

    /// Two upward-drifting phases with negative jumps.
    pub fn m2() -> MapModel {
        m2_with_kill(vec![0.5, 0.5])
    }

    pub fn m2_with_kill(kill: Vec<f64>) -> MapModel {
        MapModel::unnamed(
            vec![
                LevyComponent::with_jumps(2.0, 1.0, JumpLaw::ExpNeg { rate: 1.0 }),
                LevyComponent::drift_only(1.0),
            ],
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]),
            vec![
                vec![JumpLaw::zero(), JumpLaw::zero()],
                vec![JumpLaw::ExpNeg { rate: 3.0 }, JumpLaw::zero()],
            ],
            kill,
        )
        .expect("valid model")
    }

    /// A decreasing phase and an upward phase joined by an upward switch jump.
    pub fn m3() -> MapModel {
        MapModel::unnamed(
            vec![
                LevyComponent::drift_only(-1.0),
                LevyComponent::with_jumps(2.0, 1.0, JumpLaw::ExpNeg { rate: 1.0 }),
            ],
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            vec![
                vec![JumpLaw::zero(), JumpLaw::ExpPos { rate: 1.0 }],
                vec![JumpLaw::zero(), JumpLaw::zero()],
            ],
            vec![0.25, 0.25],
        )
        .expect("valid model")
    }

    /// Random spectrally negative model with every phase UP or OSC, all jump
    /// laws from the exponential/zero-point family, strictly positive killing.
    pub fn random_spectrally_negative<R: Rng + ?Sized>(rng: &mut R, n: usize) -> MapModel {
        random_model(rng, n, 0.3)
    }

    /// Same family without Brownian parts, so that paths can be simulated.
    pub fn random_bounded_variation<R: Rng + ?Sized>(rng: &mut R, n: usize) -> MapModel {
        random_model(rng, n, 0.0)
    }

    fn random_model<R: Rng + ?Sized>(rng: &mut R, n: usize, brownian: f64) -> MapModel {
        loop {
            let levy = (0..n)
                .map(|_| {
                    let drift = rng.random_range(0.2..3.0);
                    let sigma2 = if rng.random_bool(brownian) {
                        rng.random_range(0.1..1.0)
                    } else {
                        0.0
                    };
                    let (jump_rate, jump_law) = if rng.random_bool(0.7) {
                        let law = if rng.random_bool(0.3) {
                            let w = rng.random_range(0.2..0.8);
                            JumpLaw::Mixture {
                                weights: vec![w, 1.0 - w],
                                components: vec![
                                    JumpLaw::ExpNeg {
                                        rate: rng.random_range(0.5..1.5),
                                    },
                                    JumpLaw::ExpNeg {
                                        rate: rng.random_range(2.0..4.0),
                                    },
                                ],
                            }
                        } else {
                            JumpLaw::ExpNeg {
                                rate: rng.random_range(0.5..4.0),
                            }
                        };
                        (rng.random_range(0.2..2.0), Some(law))
                    } else {
                        (0.0, None)
                    };
                    LevyComponent {
                        drift,
                        sigma2,
                        jump_rate,
                        jump_law,
                    }
                })
                .collect();
            let mut rate = DMatrix::zeros(n, n);
            let mut jump = vec![vec![JumpLaw::zero(); n]; n];
            for i in 0..n {
                for j in 0..n {
                    if i != j && (n == 2 || rng.random_bool(0.7)) {
                        rate[(i, j)] = rng.random_range(0.2..2.0);
                        if rng.random_bool(0.4) {
                            jump[i][j] = JumpLaw::ExpNeg {
                                rate: rng.random_range(0.5..4.0),
                            };
                        }
                    }
                }
            }
            let kill = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            if let Ok(m) = MapModel::unnamed(levy, rate, jump, kill) {
                return m;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::canonical::*;
    use super::*;
    use crate::linalg::c;

    #[test]
    fn mgf_examples() {
        assert_eq!(JumpLaw::zero().mgf(c(3.7, 0.0)).unwrap(), c(1.0, 0.0));
        assert_eq!(
            JumpLaw::ExpNeg { rate: 1.0 }.mgf(c(1.0, 0.0)).unwrap(),
            c(0.5, 0.0)
        );
        let mix = JumpLaw::Mixture {
            weights: vec![0.5, 0.5],
            components: vec![
                JumpLaw::Point { value: -1.0 },
                JumpLaw::ExpNeg { rate: 2.0 },
            ],
        };
        assert_eq!(mix.mgf(c(0.0, 0.0)).unwrap(), c(1.0, 0.0));
    }

    #[test]
    fn mgf_poles_and_domain() {
        assert!(matches!(
            JumpLaw::ExpNeg { rate: 2.0 }.mgf(c(-2.0, 0.0)),
            Err(Error::Pole(_))
        ));
        assert!(matches!(
            JumpLaw::ExpPos { rate: 1.0 }.mgf(c(1.5, 0.0)),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            JumpLaw::ExpPos { rate: 1.0 }.mgf(c(1.0, 0.0)),
            Err(Error::Pole(_))
        ));
    }

    #[test]
    fn invalid_laws_rejected() {
        let bad = JumpLaw::Mixture {
            weights: vec![0.5, 0.4],
            components: vec![JumpLaw::zero(), JumpLaw::zero()],
        };
        assert!(bad.validate().is_err());
        assert!(JumpLaw::ExpNeg { rate: 0.0 }.validate().is_err());
        let nested = JumpLaw::Mixture {
            weights: vec![1.0],
            components: vec![JumpLaw::Mixture {
                weights: vec![1.0],
                components: vec![JumpLaw::zero()],
            }],
        };
        assert!(nested.validate().is_err());
    }

    #[test]
    fn psi_at_zero_for_m2() {
        let p = m2().psi(c(0.0, 0.0), &[0.0, 0.0]).unwrap();
        let expect = [[-1.5, 1.0], [2.0, -2.5]];
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(p[(i, j)], c(expect[i][j], 0.0));
            }
        }
    }

    #[test]
    fn psi_scalar_m1() {
        let p = m1().psi(c(1.0, 0.0), &[0.0]).unwrap();
        assert!((p[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn beta_shifts_diagonal() {
        let m = m2();
        let a = c(0.3, 1.2);
        let d = m.psi(a, &[0.7, 0.7]).unwrap() - m.psi(a, &[0.0, 0.0]).unwrap();
        assert!((d - CMatrix::identity(2, 2) * c(-0.7, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn partition_examples() {
        assert_eq!(
            m2().phase_partition().unwrap(),
            vec![PhaseClass::Up, PhaseClass::Up]
        );
        assert_eq!(m3().phase_partition().unwrap()[0], PhaseClass::Down);
        let osc = LevyComponent {
            drift: 0.0,
            sigma2: 1.0,
            jump_rate: 0.0,
            jump_law: None,
        };
        assert_eq!(osc.class(), Some(PhaseClass::Osc));
        let flat = MapModel::unnamed(
            vec![LevyComponent::drift_only(0.0)],
            DMatrix::zeros(1, 1),
            vec![vec![JumpLaw::zero()]],
            vec![1.0],
        )
        .unwrap();
        assert_eq!(flat.phase_partition(), Err(Error::Degenerate { phase: 1 }));
    }

    #[test]
    fn stationary_m2() {
        let pi = m2().stationary(false).unwrap();
        assert!((pi[0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((pi[1] - 1.0 / 3.0).abs() < 1e-14);
        assert_eq!(m1().stationary(true).unwrap()[0], 1.0);
    }

    #[test]
    fn dual_m2() {
        let d = m2().dual().unwrap();
        assert!((d.switch_rate()[(0, 1)] - 1.0).abs() < 1e-14);
        assert!((d.switch_rate()[(1, 0)] - 2.0).abs() < 1e-14);
        assert_eq!(d.switch_jump(0, 1), &JumpLaw::ExpNeg { rate: 3.0 });
        assert_eq!(d.switch_jump(1, 0), &JumpLaw::zero());
        assert_eq!(d.kill(), m2().kill());
    }

    #[test]
    fn stationary_drift_examples() {
        assert!((m2().stationary_drift().unwrap() - 7.0 / 9.0).abs() < 1e-14);
        assert!((m1().stationary_drift().unwrap() - 1.0).abs() < 1e-14);
        let sym = MapModel::unnamed(
            vec![LevyComponent::with_jumps(
                0.0,
                1.0,
                JumpLaw::Mixture {
                    weights: vec![0.5, 0.5],
                    components: vec![
                        JumpLaw::Point { value: -1.0 },
                        JumpLaw::Point { value: 1.0 },
                    ],
                },
            )],
            DMatrix::zeros(1, 1),
            vec![vec![JumpLaw::zero()]],
            vec![0.0],
        )
        .unwrap();
        assert_eq!(sym.stationary_drift().unwrap(), 0.0);
    }

    #[test]
    fn reducible_chain_rejected() {
        let r = MapModel::unnamed(
            vec![
                LevyComponent::drift_only(1.0),
                LevyComponent::drift_only(1.0),
            ],
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            vec![vec![JumpLaw::zero(); 2]; 2],
            vec![1.0, 1.0],
        );
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn json_round_trip() {
        for m in [m1(), m2(), m3()] {
            let text = serde_json::to_string(&m.to_json()).unwrap();
            assert_eq!(MapModel::from_json_str(&text).unwrap(), m);
        }
    }

    #[test]
    fn json_rejects_unknown_keys() {
        let text = r#"{"phases":[{"drift":1.0,"colour":"red"}],"kill":[1.0]}"#;
        assert!(matches!(
            MapModel::from_json_str(text),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn json_by_index() {
        let text = r#"{
            "phases": [{"drift": 2.0, "jump": {"rate": 1.0, "law": {"type": "exp-neg", "rate": 1.0}}},
                       {"drift": 1.0}],
            "switch": [{"from": 0, "to": 1, "rate": 1.0},
                       {"from": 1, "to": 0, "rate": 2.0, "jump": {"type": "exp-neg", "rate": 3.0}}],
            "kill": [0.5, 0.5]
        }"#;
        assert_eq!(MapModel::from_json_str(text).unwrap(), m2());
    }
}
