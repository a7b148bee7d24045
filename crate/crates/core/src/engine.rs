//! The simulation engine: T parameter worlds times N deal/noise draws, the
//! lognormal price kernel, and the Monte Carlo estimators built on the samples.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::deal_mix::{sample_conditional, sample_deal, ConfigurationClass, DealMix};
use crate::deal_model::{map_attributes, FormulaParams, MultiplierVector, NodeTable};
use crate::error::{Error, Result};
use crate::priors::{
    acceptance_probe, sample_governed, ConstraintSet, ParameterVector, PriorSpec, DEFAULT_MAX_ATTEMPTS,
};
use crate::rng::{substream, StreamRole};

/// What happens when a world produces a price outside `(0, inf)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonFinitePolicy {
    #[default]
    Abort,
    /// Drop the whole world and record its index.
    DropWorld,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationPlan {
    /// Parameter worlds (T).
    pub worlds: usize,
    /// Deal/noise draws per world (N).
    pub draws_per_world: usize,
    pub seed: u64,
    #[serde(default = "default_quantiles")]
    pub quantiles: Vec<f64>,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u64,
    #[serde(default)]
    pub on_non_finite: NonFinitePolicy,
}

fn default_quantiles() -> Vec<f64> {
    vec![0.05, 0.5, 0.95]
}

fn default_max_attempts() -> u64 {
    DEFAULT_MAX_ATTEMPTS
}

impl SimulationPlan {
    pub fn new(worlds: usize, draws_per_world: usize, seed: u64) -> Self {
        Self {
            worlds,
            draws_per_world,
            seed,
            quantiles: default_quantiles(),
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            on_non_finite: NonFinitePolicy::Abort,
        }
    }

    /// T = 5000 worlds, N = 10 draws each.
    pub fn case_study(seed: u64) -> Self {
        Self::new(5000, 10, seed)
    }

    pub fn with_quantiles(mut self, quantiles: Vec<f64>) -> Self {
        self.quantiles = quantiles;
        self
    }

    pub fn samples(&self) -> usize {
        self.worlds * self.draws_per_world
    }

    pub fn validate(&self) -> Result<()> {
        if self.worlds == 0 {
            return Err(Error::invalid("plan.worlds", "must be >= 1"));
        }
        if self.draws_per_world == 0 {
            return Err(Error::invalid("plan.draws_per_world", "must be >= 1"));
        }
        if self.max_attempts == 0 {
            return Err(Error::invalid("plan.max_attempts", "must be >= 1"));
        }
        validate_quantiles(&self.quantiles)
    }
}

fn validate_quantiles(qs: &[f64]) -> Result<()> {
    if qs.is_empty() {
        return Err(Error::invalid("plan.quantiles", "empty"));
    }
    if let Some(q) = qs.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
        return Err(Error::invalid("plan.quantiles", format!("{q} is not inside (0, 1)")));
    }
    if qs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("plan.quantiles", "must be strictly increasing"));
    }
    Ok(())
}

/// Log-linear price kernel: `exp(alpha + beta . ln x + eta)`.
pub fn price_one(theta: &ParameterVector, x: &MultiplierVector, eta: f64) -> Result<f64> {
    let log_price = theta.alpha
        + theta
            .beta
            .iter()
            .zip(x.logs())
            .map(|(b, z)| b * z)
            .sum::<f64>()
        + eta;
    checked_price(log_price.exp(), theta, eta)
}

/// The same price evaluated multiplicatively: `e^alpha * prod(x_j ^ beta_j) * e^eta`.
pub fn price_one_multiplicative(theta: &ParameterVector, x: &MultiplierVector, eta: f64) -> Result<f64> {
    let levers: f64 = x
        .values()
        .iter()
        .zip(theta.beta)
        .map(|(x, b)| x.powf(b))
        .product();
    checked_price(theta.alpha.exp() * levers * eta.exp(), theta, eta)
}

fn checked_price(price: f64, theta: &ParameterVector, eta: f64) -> Result<f64> {
    if price > 0.0 && price.is_finite() {
        Ok(price)
    } else {
        Err(Error::PriceOutOfRange {
            alpha: theta.alpha,
            beta: theta.beta,
            sigma: theta.sigma,
            eta,
        })
    }
}

/// Where the deal for each draw comes from.
#[derive(Debug, Clone, Copy)]
pub enum DealSource<'a> {
    /// Single-deal mode: every draw prices the same multipliers.
    Fixed(MultiplierVector),
    /// Pipeline mode: each draw samples attributes from a mix.
    Mix(MixSource<'a>),
}

#[derive(Debug, Clone, Copy)]
pub struct MixSource<'a> {
    pub mix: &'a DealMix,
    /// Restrict draws to a configuration class.
    pub class: Option<&'a ConfigurationClass>,
    pub table: &'a NodeTable,
    pub params: &'a FormulaParams,
    pub max_attempts: u64,
}

impl DealSource<'_> {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(MultiplierVector, u64)> {
        match self {
            DealSource::Fixed(x) => Ok((*x, 0)),
            DealSource::Mix(source) => {
                let (attrs, attempts) = match source.class {
                    Some(class) => sample_conditional(source.mix, class, rng, source.max_attempts)?,
                    None => (sample_deal(source.mix, rng), 1),
                };
                Ok((map_attributes(&attrs, source.table, source.params)?, attempts))
            }
        }
    }
}

/// Audit record of one world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorldRecord {
    pub index: usize,
    pub theta: ParameterVector,
    /// Raw prior draws spent to get an admissible theta.
    pub attempts: u64,
    /// Raw deal draws spent (pipeline mode with a class; 0 in single-deal mode).
    pub deal_attempts: u64,
}

/// The T x N array of simulated prices, world-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSampleSet {
    plan: SimulationPlan,
    prices: Vec<f64>,
    worlds: Vec<WorldRecord>,
    dropped: Vec<usize>,
}

impl PriceSampleSet {
    pub fn plan(&self) -> &SimulationPlan {
        &self.plan
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn worlds(&self) -> &[WorldRecord] {
        &self.worlds
    }

    pub fn dropped_worlds(&self) -> &[usize] {
        &self.dropped
    }

    /// Prices of the `k`-th retained world.
    pub fn world_prices(&self, k: usize) -> &[f64] {
        let n = self.plan.draws_per_world;
        &self.prices[k * n..(k + 1) * n]
    }

    pub fn telemetry(&self) -> SimulationTelemetry {
        let parameter_attempts: u64 = self.worlds.iter().map(|w| w.attempts).sum();
        let deal_attempts: u64 = self.worlds.iter().map(|w| w.deal_attempts).sum();
        let deals = (self.worlds.len() * self.plan.draws_per_world) as f64;
        SimulationTelemetry {
            worlds: self.worlds.len(),
            samples: self.prices.len(),
            parameter_attempts,
            acceptance_rate: self.worlds.len() as f64 / parameter_attempts.max(1) as f64,
            deal_acceptance_rate: (deal_attempts > 0).then(|| deals / deal_attempts as f64),
            dropped_worlds: self.dropped.len(),
        }
    }

    pub fn bands(&self) -> Result<PriceBands> {
        PriceBands::from_samples(&self.prices, &self.plan.quantiles)
    }
}

/// Run statistics reported alongside bands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulationTelemetry {
    pub worlds: usize,
    pub samples: usize,
    pub parameter_attempts: u64,
    pub acceptance_rate: f64,
    pub deal_acceptance_rate: Option<f64>,
    pub dropped_worlds: usize,
}

struct WorldOutcome {
    record: WorldRecord,
    prices: std::result::Result<Vec<f64>, Error>,
}

fn simulate_world(
    world: usize,
    plan: &SimulationPlan,
    prior: &PriorSpec,
    constraints: &ConstraintSet,
    source: &DealSource<'_>,
) -> Result<WorldOutcome> {
    let t = world as u64;
    let mut parameter_rng = substream(plan.seed, t, StreamRole::Parameters);
    let mut deal_rng = substream(plan.seed, t, StreamRole::Deals);
    let mut noise_rng = substream(plan.seed, t, StreamRole::Noise);

    let draw = sample_governed(prior, constraints, &mut parameter_rng, plan.max_attempts)?;
    let theta = draw.theta;
    let mut deal_attempts = 0;
    let mut prices = Vec::with_capacity(plan.draws_per_world);
    let mut failure = None;
    for _ in 0..plan.draws_per_world {
        let (x, attempts) = source.draw(&mut deal_rng)?;
        deal_attempts += attempts;
        let eta = theta.sigma * noise_rng.sample::<f64, _>(StandardNormal);
        match price_one(&theta, &x, eta) {
            Ok(price) => prices.push(price),
            Err(_) => {
                failure = Some(Error::NonFinitePrice {
                    world,
                    alpha: theta.alpha,
                    beta: theta.beta,
                    sigma: theta.sigma,
                });
                break;
            }
        }
    }
    let record = WorldRecord {
        index: world,
        theta,
        attempts: draw.attempts,
        deal_attempts: if matches!(source, DealSource::Mix(MixSource { class: Some(_), .. })) {
            deal_attempts
        } else {
            0
        },
    };
    Ok(WorldOutcome {
        record,
        prices: failure.map_or(Ok(prices), Err),
    })
}

/// Runs the full prior-predictive simulation.
///
/// For each world t: one governed theta, then N pairs of (deal, noise) draws,
/// each priced with [`price_one`]. Every world reads only its own substreams,
/// so the result depends on `(plan, prior, constraints, source)` alone, not on
/// how many threads evaluated it.
pub fn simulate(
    plan: &SimulationPlan,
    prior: &PriorSpec,
    constraints: &ConstraintSet,
    source: DealSource<'_>,
) -> Result<PriceSampleSet> {
    plan.validate()?;
    prior.validate()?;
    constraints.validate()?;

    let run = |world| simulate_world(world, plan, prior, constraints, &source);

    #[cfg(feature = "parallel")]
    let outcomes: Vec<Result<WorldOutcome>> = {
        use rayon::prelude::*;
        (0..plan.worlds).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<Result<WorldOutcome>> = (0..plan.worlds).map(run).collect();

    let mut prices = Vec::with_capacity(plan.samples());
    let mut worlds = Vec::with_capacity(plan.worlds);
    let mut dropped = Vec::new();
    for outcome in outcomes {
        let outcome = outcome?;
        match outcome.prices {
            Ok(world_prices) => {
                prices.extend_from_slice(&world_prices);
                worlds.push(outcome.record);
            }
            Err(err) => match plan.on_non_finite {
                NonFinitePolicy::Abort => return Err(err),
                NonFinitePolicy::DropWorld => dropped.push(outcome.record.index),
            },
        }
    }
    if prices.is_empty() {
        return Err(Error::EmptySamples);
    }
    Ok(PriceSampleSet {
        plan: plan.clone(),
        prices,
        worlds,
        dropped,
    })
}

/// Function of the price whose expectation is estimated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    Identity,
    Log,
    /// Indicator of `P > threshold`.
    Exceeds(f64),
}

impl Transform {
    fn apply(self, price: f64) -> f64 {
        match self {
            Transform::Identity => price,
            Transform::Log => price.ln(),
            Transform::Exceeds(threshold) => f64::from(u8::from(price > threshold)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub estimate: f64,
    /// `s / sqrt(n)`; zero for a single sample.
    pub standard_error: f64,
    pub count: usize,
}

/// Sample mean of `h(P)` with its standard error.
pub fn estimate_mean(samples: &[f64], h: Transform) -> Result<MeanEstimate> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let n = samples.len() as f64;
    // Welford, for stability on large runs
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (k, &p) in samples.iter().enumerate() {
        let value = h.apply(p);
        let delta = value - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (value - mean);
    }
    let standard_error = if samples.len() > 1 {
        (m2 / (n - 1.0)).sqrt() / n.sqrt()
    } else {
        0.0
    };
    Ok(MeanEstimate {
        estimate: mean,
        standard_error,
        count: samples.len(),
    })
}

/// 1-based rank `k` of the order statistic reported as the `q`-quantile of
/// `n` samples: the smallest `k` with `k / n >= q`.
pub fn order_statistic_rank(q: f64, n: usize) -> usize {
    let nf = n as f64;
    let mut k = ((q * nf).ceil() as usize).clamp(1, n);
    // ceil(q*n) can be off by one when q*n rounds across an integer
    while k > 1 && (k - 1) as f64 / nf >= q {
        k -= 1;
    }
    while k < n && (k as f64) / nf < q {
        k += 1;
    }
    k
}

/// Empirical quantiles `inf{p : F_n(p) >= q}` without interpolation.
pub fn estimate_quantiles(samples: &[f64], qs: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    validate_quantiles(qs)?;
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(qs
        .iter()
        .map(|&q| sorted[order_statistic_rank(q, sorted.len()) - 1])
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandPoint {
    pub q: f64,
    pub usd_per_mb: f64,
}

/// Quantile bands plus the mean of the simulated prices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceBands {
    pub count: usize,
    pub mean: f64,
    pub mean_standard_error: f64,
    pub quantiles: Vec<BandPoint>,
}

pub const MB_PER_GB: f64 = 1024.0;

impl PriceBands {
    pub fn from_samples(samples: &[f64], qs: &[f64]) -> Result<Self> {
        let values = estimate_quantiles(samples, qs)?;
        let mean = estimate_mean(samples, Transform::Identity)?;
        Ok(Self {
            count: samples.len(),
            mean: mean.estimate,
            mean_standard_error: mean.standard_error,
            quantiles: qs
                .iter()
                .zip(values)
                .map(|(&q, usd_per_mb)| BandPoint { q, usd_per_mb })
                .collect(),
        })
    }

    /// Price at quantile `q`, if it was estimated.
    pub fn at(&self, q: f64) -> Option<f64> {
        self.quantiles
            .iter()
            .find(|b| (b.q - q).abs() < 1e-12)
            .map(|b| b.usd_per_mb)
    }

    pub fn usd_per_gb(&self) -> Vec<f64> {
        self.quantiles.iter().map(|b| b.usd_per_mb * MB_PER_GB).collect()
    }

    pub fn contract_totals(&self, volume_mb: f64) -> Vec<f64> {
        self.quantiles.iter().map(|b| b.usd_per_mb * volume_mb).collect()
    }
}

/// Acceptance rate below which the closed-form median is refused.
pub const MEDIAN_ACCEPTANCE_FLOOR: f64 = 0.999;
const MEDIAN_PROBE_DRAWS: u64 = 10_000;
const MEDIAN_PROBE_SEED: u64 = 0x05ee_d0f3_ed1a;

/// Closed-form median of the single-deal price law: `exp(ln b0 + mu . ln x)`.
///
/// `ln P` is a sum of independent symmetric terms centred there, so this is
/// exact as long as the rules on alpha and beta do not cut into the prior.
/// Bounds on sigma keep the noise symmetric and are ignored by the check.
pub fn semi_analytic_median(
    prior: &PriorSpec,
    constraints: &ConstraintSet,
    x: &MultiplierVector,
) -> Result<f64> {
    prior.validate()?;
    let mut probe_prior = *prior;
    probe_prior.s_sigma = 0.0;
    let mut rng = substream(MEDIAN_PROBE_SEED, 0, StreamRole::Probe);
    let probe = acceptance_probe(&probe_prior, constraints, &mut rng, MEDIAN_PROBE_DRAWS);
    if probe.rate < MEDIAN_ACCEPTANCE_FLOOR {
        return Err(Error::MaterialTruncation(format!(
            "constraints keep only {:.4} of the prior mass (need >= {MEDIAN_ACCEPTANCE_FLOOR}); most violated: {}",
            probe.rate,
            probe.most_violated.unwrap_or_default()
        )));
    }
    let log_median = prior.alpha_mean()
        + prior
            .mu
            .iter()
            .zip(x.logs())
            .map(|(m, z)| m * z)
            .sum::<f64>();
    Ok(log_median.exp())
}
