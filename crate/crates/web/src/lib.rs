//! Browser bindings for the demo page in `www/`.
//!
//! Each operation has a plain Rust form returning a JSON string (tested
//! natively) and a thin `wasm_bindgen` wrapper that turns errors into JS
//! exceptions.

use dataprice::anchor::AnchorDataset;
use dataprice::deal_model::{DealAttributes, LeverValues, RightsFactor};
use dataprice::engine::{estimate_quantiles, semi_analytic_median, MB_PER_GB};
use dataprice::report::run_price;
use dataprice::scenario::CASE_STUDY_B0;
use dataprice::{map_attributes, FormulaParams, NodeTable, PriorSpec, Scenario};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest run the page will start (worlds x draws).
pub const MAX_SAMPLES: usize = 2_000_000;
const HISTOGRAM_BINS: usize = 48;

#[derive(Serialize)]
struct Band {
    label: &'static str,
    usd_per_mb: f64,
    usd_per_gb: f64,
    total_usd: f64,
}

#[derive(Serialize)]
struct Histogram {
    /// Bin edges in USD/MB, log-spaced; `counts.len() + 1` of them.
    edges: Vec<f64>,
    counts: Vec<u32>,
    /// Samples outside the plotted range.
    clipped: usize,
}

#[derive(Serialize)]
struct BandsResult {
    samples: usize,
    acceptance_rate: f64,
    closed_form_median: Option<f64>,
    mean_usd_per_mb: f64,
    bands: Vec<Band>,
    histogram: Histogram,
}

/// Case-study bands with adjustable prior spreads and run size.
pub fn case_study_bands(s_alpha: f64, s_sigma: f64, worlds: usize, draws: usize, seed: u64) -> Result<String, String> {
    if worlds.saturating_mul(draws) > MAX_SAMPLES {
        return Err(format!("at most {MAX_SAMPLES} samples in the browser"));
    }
    let mut scenario = Scenario::case_study(seed);
    scenario.prior.s_alpha = s_alpha;
    scenario.prior.s_sigma = s_sigma;
    scenario.plan.worlds = worlds;
    scenario.plan.draws_per_world = draws;
    let run = run_price(&scenario).map_err(|e| e.to_string())?;
    let report = &run.report;
    let labels = ["P5", "P50", "P95"];
    let bands = report
        .result
        .bands
        .iter()
        .zip(labels)
        .map(|(row, label)| Band {
            label,
            usd_per_mb: row.usd_per_mb,
            usd_per_gb: row.usd_per_gb,
            total_usd: row.total_usd.unwrap_or(f64::NAN),
        })
        .collect();
    let result = BandsResult {
        samples: report.result.count,
        acceptance_rate: report.telemetry.acceptance_rate,
        closed_form_median: report.inputs.semi_analytic_median,
        mean_usd_per_mb: report.result.mean_usd_per_mb,
        bands,
        histogram: histogram(run.samples.prices())?,
    };
    Ok(serde_json::to_string(&result).expect("bands serialize"))
}

fn histogram(prices: &[f64]) -> Result<Histogram, String> {
    let range = estimate_quantiles(prices, &[0.005, 0.995]).map_err(|e| e.to_string())?;
    let (lo, hi) = (range[0].ln(), range[1].ln());
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let mut counts = vec![0u32; HISTOGRAM_BINS];
    let mut clipped = 0;
    for p in prices {
        let k = ((p.ln() - lo) / width).floor();
        if width > 0.0 && k >= 0.0 && (k as usize) < HISTOGRAM_BINS {
            counts[k as usize] += 1;
        } else if width == 0.0 {
            counts[0] += 1;
        } else {
            clipped += 1;
        }
    }
    let edges = (0..=HISTOGRAM_BINS).map(|i| (lo + i as f64 * width).exp()).collect();
    Ok(Histogram { edges, counts, clipped })
}

#[derive(Serialize)]
struct DealResult {
    multipliers: LeverValues,
    ln_multipliers: LeverValues,
    /// `exp(ln b0 + mu . ln x)` under the case-study priors.
    point_estimate_usd_per_mb: f64,
    point_estimate_usd_per_gb: f64,
    contract_total_usd: f64,
}

/// Multipliers and the prior-mean price of a deal built from form inputs.
///
/// `rights` lists factors such as `[1.3, 1.1]`; an empty list is neutral.
#[allow(clippy::too_many_arguments)]
pub fn deal_quote(
    technology_node: &str,
    process_count: u32,
    quality_score: f64,
    completeness_score: f64,
    age_months: f64,
    utility_value_usd: f64,
    rights: &[f64],
    volume_mb: f64,
) -> Result<String, String> {
    let attrs = DealAttributes {
        technology_node: technology_node.to_owned(),
        process_count,
        quality_score,
        completeness_score,
        age_months,
        utility_value_usd,
        rights_factors: rights
            .iter()
            .enumerate()
            .map(|(i, f)| RightsFactor::new(format!("right-{}", i + 1), *f))
            .collect(),
        volume_mb,
    };
    let x = map_attributes(&attrs, &NodeTable::reference(), &FormulaParams::default()).map_err(|e| e.to_string())?;
    let prior = PriorSpec::case_study(CASE_STUDY_B0);
    let point = semi_analytic_median(&PriorSpec { s_sigma: 0.0, ..prior }, &Default::default(), &x)
        .map_err(|e| e.to_string())?;
    let result = DealResult {
        multipliers: (*x.values()).into(),
        ln_multipliers: (*x.logs()).into(),
        point_estimate_usd_per_mb: point,
        point_estimate_usd_per_gb: point * MB_PER_GB,
        contract_total_usd: point * volume_mb,
    };
    Ok(serde_json::to_string(&result).expect("deal serializes"))
}

#[derive(Serialize)]
struct AnchorPoint {
    year: i32,
    b0: f64,
    is_projection: bool,
}

/// Yearly `b0` from the built-in anchor table.
pub fn anchor_series() -> Result<String, String> {
    let data = AnchorDataset::embedded();
    let points = data
        .rows
        .iter()
        .map(|row| {
            Ok(AnchorPoint {
                year: row.year,
                b0: row.b0().map_err(|e| e.to_string())?,
                is_projection: row.is_projection,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(serde_json::to_string(&points).expect("anchors serialize"))
}

/// Labels accepted by [`deal_quote`], largest node first.
pub fn node_labels() -> Vec<String> {
    let mut labels: Vec<String> = NodeTable::reference().entries().keys().cloned().collect();
    let size = |label: &str| label.trim_end_matches("nm").parse::<f64>().unwrap_or(f64::INFINITY);
    labels.sort_by(|a, b| size(b).total_cmp(&size(a)));
    labels
}

#[wasm_bindgen(js_name = caseStudyBands)]
pub fn case_study_bands_js(s_alpha: f64, s_sigma: f64, worlds: u32, draws: u32, seed: u32) -> Result<String, JsValue> {
    case_study_bands(s_alpha, s_sigma, worlds as usize, draws as usize, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[allow(clippy::too_many_arguments)]
#[wasm_bindgen(js_name = dealQuote)]
pub fn deal_quote_js(
    technology_node: &str,
    process_count: u32,
    quality_score: f64,
    completeness_score: f64,
    age_months: f64,
    utility_value_usd: f64,
    rights: Vec<f64>,
    volume_mb: f64,
) -> Result<String, JsValue> {
    deal_quote(
        technology_node,
        process_count,
        quality_score,
        completeness_score,
        age_months,
        utility_value_usd,
        &rights,
        volume_mb,
    )
    .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = anchorSeries)]
pub fn anchor_series_js() -> Result<String, JsValue> {
    anchor_series().map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = nodeLabels)]
pub fn node_labels_js() -> Vec<String> {
    node_labels()
}
