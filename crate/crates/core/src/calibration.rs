//! Fitting elasticities to observed deals and folding the fit back into the prior.
//!
//! The fit is ordinary least squares of `ln p` on `[1, ln x_TN, .., ln x_RIGHTS]`.
//! Columns are scaled to unit norm before the SVD so the condition number
//! reflects collinearity rather than units.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::deal_model::{Lever, LeverValues, MultiplierVector};
use crate::error::{Error, Result};
use crate::priors::PriorSpec;

/// Intercept plus one slope per lever.
pub const COEFFICIENTS: usize = 6;
pub const MIN_DEALS: usize = COEFFICIENTS + 1;
pub const DEFAULT_MAX_CONDITION: f64 = 1e10;

/// `sqrt(2 / pi)`: mean of a unit half-normal.
const HALF_NORMAL_MEAN: f64 = 0.797_884_560_802_865_4;

#[derive(Debug, Clone, PartialEq)]
pub struct ObservedDeal {
    pub label: Option<String>,
    pub multipliers: MultiplierVector,
    pub price_usd_per_mb: f64,
}

impl ObservedDeal {
    pub fn new(multipliers: MultiplierVector, price_usd_per_mb: f64) -> Result<Self> {
        if !(price_usd_per_mb > 0.0 && price_usd_per_mb.is_finite()) {
            return Err(Error::invalid("price_usd_per_mb", format!("must be > 0, got {price_usd_per_mb}")));
        }
        Ok(Self {
            label: None,
            multipliers,
            price_usd_per_mb,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DealRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    price_usd_per_mb: f64,
    multipliers: LeverValues,
}

#[derive(Debug, Serialize, Deserialize)]
struct DealFile {
    #[serde(rename = "deal", default)]
    deals: Vec<DealRecord>,
}

/// Reads an observed-deals file: one `[[deal]]` table per transaction.
pub fn parse_observed_deals(text: &str) -> Result<Vec<ObservedDeal>> {
    let file: DealFile = toml::from_str(text)?;
    file.deals
        .into_iter()
        .enumerate()
        .map(|(i, record)| {
            let multipliers = MultiplierVector::new(record.multipliers.into())
                .map_err(|err| Error::invalid(format!("deal[{i}].multipliers"), err.to_string()))?;
            let mut deal = ObservedDeal::new(multipliers, record.price_usd_per_mb)
                .map_err(|err| Error::invalid(format!("deal[{i}]"), err.to_string()))?;
            deal.label = record.label;
            Ok(deal)
        })
        .collect()
}

/// Writes deals in the format [`parse_observed_deals`] reads.
pub fn write_observed_deals(deals: &[ObservedDeal]) -> String {
    let file = DealFile {
        deals: deals
            .iter()
            .map(|d| DealRecord {
                label: d.label.clone(),
                price_usd_per_mb: d.price_usd_per_mb,
                multipliers: (*d.multipliers.values()).into(),
            })
            .collect(),
    };
    toml::to_string(&file).expect("deal records serialize")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub alpha_hat: f64,
    pub beta_hat: [f64; 5],
    /// Residual standard deviation with `n - 6` degrees of freedom.
    pub sigma_hat: f64,
    pub alpha_se: f64,
    pub beta_se: [f64; 5],
    pub n: usize,
    pub residual_sum_squares: f64,
    /// Condition number of the column-scaled design matrix.
    pub condition_number: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_condition: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_condition: DEFAULT_MAX_CONDITION,
        }
    }
}

pub fn fit_ols(deals: &[ObservedDeal]) -> Result<FitResult> {
    fit_ols_with(deals, FitOptions::default())
}

pub fn fit_ols_with(deals: &[ObservedDeal], options: FitOptions) -> Result<FitResult> {
    let n = deals.len();
    if n < MIN_DEALS {
        return Err(Error::TooFewDeals {
            required: MIN_DEALS,
            got: n,
        });
    }

    let design = DMatrix::from_fn(n, COEFFICIENTS, |i, j| {
        if j == 0 {
            1.0
        } else {
            deals[i].multipliers.logs()[j - 1]
        }
    });
    let response = DVector::from_iterator(n, deals.iter().map(|d| d.price_usd_per_mb.ln()));

    // A lever that never varies is collinear with the intercept.
    let constant: Vec<&str> = Lever::ALL
        .into_iter()
        .filter(|lever| {
            let column = design.column(lever.index() + 1);
            let first = column[0];
            column.iter().all(|&z| z == first)
        })
        .map(Lever::code)
        .collect();
    if !constant.is_empty() {
        return Err(Error::RankDeficient {
            condition: f64::INFINITY,
            levers: constant.join(", "),
        });
    }

    let scales: Vec<f64> = (0..COEFFICIENTS).map(|j| design.column(j).norm()).collect();
    let mut scaled = design.clone();
    for (j, scale) in scales.iter().enumerate() {
        scaled.column_mut(j).unscale_mut(*scale);
    }
    let svd = scaled.svd(true, true);
    let singular = &svd.singular_values;
    let s_max = singular.max();
    let s_min = singular.min();
    let condition = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
    if !(condition <= options.max_condition) {
        let v_t = svd.v_t.as_ref().expect("requested V^T");
        let weakest = singular.imin();
        let direction = v_t.row(weakest);
        let involved: Vec<&str> = Lever::ALL
            .into_iter()
            .filter(|lever| direction[lever.index() + 1].abs() > 0.1)
            .map(Lever::code)
            .collect();
        return Err(Error::RankDeficient {
            condition,
            levers: if involved.is_empty() {
                "intercept".to_owned()
            } else {
                involved.join(", ")
            },
        });
    }

    let scaled_coef = svd
        .solve(&response, 0.0)
        .map_err(|msg| Error::invalid("calibration", msg))?;
    let coef: Vec<f64> = (0..COEFFICIENTS).map(|j| scaled_coef[j] / scales[j]).collect();

    let fitted = &design * DVector::from_column_slice(&coef);
    let residual_sum_squares = (&response - fitted).norm_squared();
    let dof = (n - COEFFICIENTS) as f64;
    let sigma2 = residual_sum_squares / dof;

    // (X^T X)^-1 in scaled coordinates is V diag(1/s^2) V^T.
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let variance = |j: usize| -> f64 {
        let scaled_var: f64 = (0..COEFFICIENTS)
            .map(|k| (v_t[(k, j)] / singular[k]).powi(2))
            .sum();
        sigma2 * scaled_var / (scales[j] * scales[j])
    };

    let mut beta_hat = [0.0; 5];
    let mut beta_se = [0.0; 5];
    for lever in Lever::ALL {
        let j = lever.index() + 1;
        beta_hat[lever.index()] = coef[j];
        beta_se[lever.index()] = variance(j).sqrt();
    }
    Ok(FitResult {
        alpha_hat: coef[0],
        beta_hat,
        sigma_hat: sigma2.sqrt(),
        alpha_se: variance(0).sqrt(),
        beta_se,
        n,
        residual_sum_squares,
        condition_number: condition,
    })
}

/// Default weight given to the fit: `n / (n + 20)`.
pub fn default_blend_weight(n: usize) -> f64 {
    n as f64 / (n as f64 + 20.0)
}

/// Moves the prior toward the fit by `weight` in `[0, 1]`.
///
/// Means move to `(1 - w) * old + w * estimate`, spreads to
/// `(1 - w) * old + w * standard_error`; the log-baseline moves the same way.
/// The half-normal scale is chosen so that its mean equals the blend of the
/// old prior mean of sigma and `sigma_hat`.
pub fn refresh_prior(old: &PriorSpec, fit: &FitResult, weight: f64) -> Result<PriorSpec> {
    if !(0.0..=1.0).contains(&weight) {
        return Err(Error::invalid("blend_weight", format!("must lie in [0, 1], got {weight}")));
    }
    if weight == 0.0 {
        return Ok(*old);
    }
    let blend = |old: f64, new: f64| (1.0 - weight) * old + weight * new;
    let mut mu = [0.0; 5];
    let mut s = [0.0; 5];
    for j in 0..5 {
        mu[j] = blend(old.mu[j], fit.beta_hat[j]);
        s[j] = blend(old.s[j], fit.beta_se[j]);
    }
    let sigma_mean = blend(old.s_sigma * HALF_NORMAL_MEAN, fit.sigma_hat);
    let refreshed = PriorSpec {
        b0: blend(old.alpha_mean(), fit.alpha_hat).exp(),
        s_alpha: blend(old.s_alpha, fit.alpha_se),
        mu,
        s,
        s_sigma: sigma_mean / HALF_NORMAL_MEAN,
    };
    refreshed.validate()?;
    Ok(refreshed)
}
