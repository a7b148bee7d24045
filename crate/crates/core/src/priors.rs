//! Parameter vector, prior, business-rule constraints and exact rejection
//! sampling from the constrained ("governed") prior.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::compare::Comparison;
use crate::deal_model::Lever;
use crate::error::{Error, Result};

/// Default cap on consecutive rejections for one governed draw.
pub const DEFAULT_MAX_ATTEMPTS: u64 = 10_000;

/// One pricing world: log-baseline, five elasticities and residual log-scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub alpha: f64,
    pub beta: [f64; 5],
    pub sigma: f64,
}

impl ParameterVector {
    pub fn component(&self, component: Component) -> f64 {
        match component {
            Component::Alpha => self.alpha,
            Component::Sigma => self.sigma,
            Component::Beta(lever) => self.beta[lever.index()],
        }
    }
}

/// Independent normal priors on alpha and the betas, half-normal on sigma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    /// Baseline anchor in USD/MB; alpha is centred on `ln(b0)`.
    pub b0: f64,
    pub s_alpha: f64,
    pub mu: [f64; 5],
    pub s: [f64; 5],
    /// Half-normal scale. Zero switches off residual noise (point-estimate mode).
    pub s_sigma: f64,
}

impl PriorSpec {
    /// Elasticity beliefs of the semiconductor worked example.
    pub fn case_study(b0: f64) -> Self {
        Self {
            b0,
            s_alpha: 0.25,
            mu: [1.17, 0.86, 0.97, 1.39, 1.16],
            s: [0.15, 0.12, 0.10, 0.18, 0.14],
            s_sigma: 0.35,
        }
    }

    /// Every spread zero: each draw is `(ln b0, mu, 0)`.
    pub fn degenerate(b0: f64, mu: [f64; 5]) -> Self {
        Self {
            b0,
            s_alpha: 0.0,
            mu,
            s: [0.0; 5],
            s_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b0 > 0.0 && self.b0.is_finite()) {
            return Err(Error::invalid("prior.b0", format!("must be > 0, got {}", self.b0)));
        }
        if !(self.s_alpha >= 0.0 && self.s_alpha.is_finite()) {
            return Err(Error::invalid("prior.s_alpha", "must be >= 0"));
        }
        if !(self.s_sigma >= 0.0 && self.s_sigma.is_finite()) {
            return Err(Error::invalid("prior.s_sigma", "must be >= 0"));
        }
        for lever in Lever::ALL {
            let i = lever.index();
            if !self.mu[i].is_finite() {
                return Err(Error::invalid(format!("prior.mu.{lever}"), "must be finite"));
            }
            if !(self.s[i] >= 0.0 && self.s[i].is_finite()) {
                return Err(Error::invalid(format!("prior.s.{lever}"), "must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn alpha_mean(&self) -> f64 {
        self.b0.ln()
    }

    pub fn is_noise_free(&self) -> bool {
        self.s_sigma == 0.0
    }
}

/// Open interval `(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub lo: f64,
    pub hi: f64,
}

impl Bound {
    pub const UNBOUNDED: Bound = Bound {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lo < value && value < self.hi
    }
}

// Infinite ends are written as the strings "inf" / "-inf" so that JSON
// reports (which have no infinity literal) keep them.
impl Serialize for Bound {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        [BoundEnd(self.lo), BoundEnd(self.hi)].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Bound {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let [lo, hi] = <[BoundEnd; 2]>::deserialize(deserializer)?;
        Ok(Bound { lo: lo.0, hi: hi.0 })
    }
}

struct BoundEnd(f64);

impl Serialize for BoundEnd {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            v if v == f64::INFINITY => serializer.serialize_str("inf"),
            v if v == f64::NEG_INFINITY => serializer.serialize_str("-inf"),
            v => serializer.serialize_f64(v),
        }
    }
}

impl<'de> Deserialize<'de> for BoundEnd {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Number(v) => Ok(BoundEnd(v)),
            Raw::Text(t) => match t.trim() {
                "inf" | "+inf" => Ok(BoundEnd(f64::INFINITY)),
                "-inf" => Ok(BoundEnd(f64::NEG_INFINITY)),
                other => Err(serde::de::Error::custom(format!("bad bound '{other}'"))),
            },
        }
    }
}

/// A scalar component of the parameter vector: `alpha`, `sigma` or `beta.<LEVER>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Alpha,
    Sigma,
    Beta(Lever),
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Component::Alpha => f.write_str("alpha"),
            Component::Sigma => f.write_str("sigma"),
            Component::Beta(lever) => write!(f, "beta.{lever}"),
        }
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "alpha" => return Ok(Component::Alpha),
            "sigma" => return Ok(Component::Sigma),
            _ => {}
        }
        s.strip_prefix("beta.")
            .and_then(Lever::from_code)
            .map(Component::Beta)
            .ok_or_else(|| Error::invalid("constraints.predicates", format!("unknown component '{s}'")))
    }
}

impl Serialize for Component {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Component {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Right-hand side of a predicate: a constant or another component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Operand {
    Value(f64),
    Component(Component),
}

/// Named inequality over the parameter vector, e.g. `beta.UTIL > beta.COV`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Predicate {
    pub label: String,
    pub lhs: Component,
    pub op: Comparison,
    pub rhs: Operand,
}

impl Predicate {
    pub fn holds(&self, theta: &ParameterVector) -> bool {
        let rhs = match self.rhs {
            Operand::Value(value) => value,
            Operand::Component(component) => theta.component(component),
        };
        self.op.holds(theta.component(self.lhs), rhs)
    }
}

/// The admissible region: open bounds on each beta and on sigma, plus named predicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintSet {
    pub beta_bounds: [Bound; 5],
    pub sigma_bounds: Bound,
    pub predicates: Vec<Predicate>,
}

impl Default for ConstraintSet {
    fn default() -> Self {
        Self::unconstrained()
    }
}

/// Which part of a [`ConstraintSet`] rejected a draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Violation {
    Beta(Lever),
    Sigma,
    Predicate(usize),
}

impl ConstraintSet {
    /// No business rules at all: the governed prior equals the prior.
    pub fn unconstrained() -> Self {
        Self {
            beta_bounds: [Bound::UNBOUNDED; 5],
            sigma_bounds: Bound::new(0.0, f64::INFINITY),
            predicates: Vec::new(),
        }
    }

    /// `0 < beta_j < 3` and `0 < sigma < 1`.
    pub fn case_study() -> Self {
        Self {
            beta_bounds: [Bound::new(0.0, 3.0); 5],
            sigma_bounds: Bound::new(0.0, 1.0),
            predicates: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for lever in Lever::ALL {
            let bound = self.beta_bounds[lever.index()];
            if !(bound.lo < bound.hi) {
                return Err(Error::invalid(
                    format!("constraints.beta_bounds.{lever}"),
                    format!("need lo < hi, got ({}, {})", bound.lo, bound.hi),
                ));
            }
        }
        if !(self.sigma_bounds.lo < self.sigma_bounds.hi) {
            return Err(Error::invalid("constraints.sigma_bounds", "need lo < hi"));
        }
        for predicate in &self.predicates {
            if let Operand::Value(value) = predicate.rhs {
                if value.is_nan() {
                    return Err(Error::invalid(
                        format!("constraints.predicates.{}", predicate.label),
                        "bound is NaN",
                    ));
                }
            }
        }
        Ok(())
    }

    /// First failing rule, if any. `check_sigma = false` skips the sigma bound.
    pub fn first_violation(&self, theta: &ParameterVector, check_sigma: bool) -> Option<Violation> {
        for lever in Lever::ALL {
            if !self.beta_bounds[lever.index()].contains(theta.beta[lever.index()]) {
                return Some(Violation::Beta(lever));
            }
        }
        if check_sigma && !self.sigma_bounds.contains(theta.sigma) {
            return Some(Violation::Sigma);
        }
        self.predicates
            .iter()
            .position(|p| !p.holds(theta))
            .map(Violation::Predicate)
    }

    pub fn describe(&self, violation: Violation) -> String {
        match violation {
            Violation::Beta(lever) => {
                let b = self.beta_bounds[lever.index()];
                format!("beta.{lever} in ({}, {})", b.lo, b.hi)
            }
            Violation::Sigma => format!("sigma in ({}, {})", self.sigma_bounds.lo, self.sigma_bounds.hi),
            Violation::Predicate(i) => {
                let p = &self.predicates[i];
                let rhs = match p.rhs {
                    Operand::Value(v) => v.to_string(),
                    Operand::Component(c) => c.to_string(),
                };
                format!("{} ({} {} {})", p.label, p.lhs, p.op, rhs)
            }
        }
    }
}

/// Draws one parameter vector from the unconstrained prior.
///
/// Draw order is fixed (alpha, beta in lever order, sigma) so a stream always
/// yields the same sequence of worlds.
pub fn draw_raw<R: Rng + ?Sized>(prior: &PriorSpec, rng: &mut R) -> ParameterVector {
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let alpha = prior.alpha_mean() + prior.s_alpha * normal();
    let mut beta = [0.0; 5];
    for (j, b) in beta.iter_mut().enumerate() {
        *b = prior.mu[j] + prior.s[j] * normal();
    }
    let sigma = (prior.s_sigma * normal()).abs();
    ParameterVector { alpha, beta, sigma }
}

/// `theta` lies in the admissible region.
pub fn admissible(theta: &ParameterVector, constraints: &ConstraintSet) -> bool {
    theta.sigma >= 0.0 && constraints.first_violation(theta, true).is_none()
}

/// An accepted draw from the governed prior and how many raw draws it took.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GovernedDraw {
    pub theta: ParameterVector,
    pub attempts: u64,
}

/// Rejection sampling from the prior restricted to the admissible region.
///
/// Accepted draws are exact i.i.d. samples from the conditional law. In
/// point-estimate mode (`s_sigma == 0`) sigma is identically zero and the sigma
/// bounds are not applied.
pub fn sample_governed<R: Rng + ?Sized>(
    prior: &PriorSpec,
    constraints: &ConstraintSet,
    rng: &mut R,
    max_attempts: u64,
) -> Result<GovernedDraw> {
    let check_sigma = !prior.is_noise_free();
    let mut tally = ViolationTally::default();
    for attempt in 1..=max_attempts.max(1) {
        let theta = draw_raw(prior, rng);
        match constraints.first_violation(&theta, check_sigma) {
            None => {
                return Ok(GovernedDraw {
                    theta,
                    attempts: attempt,
                })
            }
            Some(violation) => tally.record(violation),
        }
    }
    let attempts = max_attempts.max(1);
    Err(Error::PriorConstraintConflict {
        attempts,
        acceptance: 0.0,
        most_violated: tally.most_frequent(constraints),
    })
}

/// Result of probing the acceptance rate of a prior/constraint pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcceptanceProbe {
    pub draws: u64,
    pub accepted: u64,
    pub rate: f64,
    pub most_violated: Option<String>,
}

/// Estimates `pi(Theta_C)` from `draws` raw prior draws.
pub fn acceptance_probe<R: Rng + ?Sized>(
    prior: &PriorSpec,
    constraints: &ConstraintSet,
    rng: &mut R,
    draws: u64,
) -> AcceptanceProbe {
    let check_sigma = !prior.is_noise_free();
    let mut tally = ViolationTally::default();
    let mut accepted = 0;
    for _ in 0..draws {
        let theta = draw_raw(prior, rng);
        match constraints.first_violation(&theta, check_sigma) {
            None => accepted += 1,
            Some(violation) => tally.record(violation),
        }
    }
    AcceptanceProbe {
        draws,
        accepted,
        rate: if draws == 0 { 0.0 } else { accepted as f64 / draws as f64 },
        most_violated: (accepted < draws).then(|| tally.most_frequent(constraints)),
    }
}

#[derive(Default)]
struct ViolationTally {
    counts: Vec<(Violation, u64)>,
}

impl ViolationTally {
    fn record(&mut self, violation: Violation) {
        match self.counts.iter_mut().find(|(v, _)| *v == violation) {
            Some((_, n)) => *n += 1,
            None => self.counts.push((violation, 1)),
        }
    }

    fn most_frequent(&self, constraints: &ConstraintSet) -> String {
        self.counts
            .iter()
            .max_by_key(|(_, n)| *n)
            .map(|(v, _)| constraints.describe(*v))
            .unwrap_or_else(|| "none".to_owned())
    }
}
