//! Running scenarios end to end and rendering the results.

use std::fmt::Write as _;
use std::io::{self, Write};

use serde::Serialize;

use crate::deal_mix::class_hit_rate;
use crate::deal_model::{DealAttributes, LeverValues};
use crate::engine::{
    semi_analytic_median, simulate, DealSource, MixSource, PriceBands, PriceSampleSet, SimulationPlan,
    SimulationTelemetry, MB_PER_GB,
};
use crate::error::{Error, Result};
use crate::priors::{acceptance_probe, AcceptanceProbe, ConstraintSet, PriorSpec};
use crate::rng::{substream, StreamRole};
use crate::scenario::{AnchorSource, ResolvedScenario, Scenario};

/// Prior draws used by the validation acceptance probe.
pub const VALIDATION_PROBE_DRAWS: u64 = 1000;
/// Probe acceptance below which validation warns of a prior-constraint conflict.
pub const CONFLICT_WARNING_RATE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Price,
    Pipeline,
}

impl RunMode {
    pub fn name(self) -> &'static str {
        match self {
            RunMode::Price => "price",
            RunMode::Pipeline => "pipeline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputEcho {
    pub b0: f64,
    pub anchor: AnchorSource,
    pub prior: PriorSpec,
    pub constraints: ConstraintSet,
    pub plan: SimulationPlan,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deal: Option<DealAttributes>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multipliers: Option<LeverValues>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ln_multipliers: Option<LeverValues>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub volume_mb: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub semi_analytic_median: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandRow {
    pub label: String,
    pub q: f64,
    pub usd_per_mb: f64,
    pub usd_per_gb: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_usd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandReport {
    pub count: usize,
    pub mean_usd_per_mb: f64,
    pub mean_standard_error: f64,
    pub bands: Vec<BandRow>,
}

impl BandReport {
    pub fn new(bands: &PriceBands, volume_mb: Option<f64>) -> Self {
        Self {
            count: bands.count,
            mean_usd_per_mb: bands.mean,
            mean_standard_error: bands.mean_standard_error,
            bands: bands
                .quantiles
                .iter()
                .map(|b| BandRow {
                    label: quantile_label(b.q),
                    q: b.q,
                    usd_per_mb: b.usd_per_mb,
                    usd_per_gb: b.usd_per_mb * MB_PER_GB,
                    total_usd: volume_mb.map(|v| b.usd_per_mb * v),
                })
                .collect(),
        }
    }

    pub fn get(&self, label: &str) -> Option<&BandRow> {
        self.bands.iter().find(|b| b.label == label)
    }
}

/// `0.05 -> "P5"`, `0.5 -> "P50"`, `0.975 -> "P97.5"`.
pub fn quantile_label(q: f64) -> String {
    let pct = (q * 100.0 * 1e6).round() / 1e6;
    format!("P{pct}")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassReport {
    pub label: String,
    /// Fraction of mix draws that fell in the class.
    pub hit_rate: f64,
    pub bands: BandReport,
    pub telemetry: SimulationTelemetry,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Timing {
    pub elapsed_ms: f64,
    pub worlds_per_second: f64,
}

/// Everything needed to audit a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub artifact_version: String,
    pub mode: RunMode,
    pub scenario: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at_unix: Option<u64>,
    pub inputs: InputEcho,
    pub result: BandReport,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub classes: Vec<ClassReport>,
    pub telemetry: SimulationTelemetry,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let w = &mut out;
        let _ = writeln!(w, "scenario: {}", self.scenario);
        let _ = writeln!(w, "mode:     {}", self.mode.name());
        let _ = writeln!(w, "seed:     {}", self.seed);
        let _ = writeln!(w, "b0:       {} USD/MB ({})", sig(self.inputs.b0, 5), describe_anchor(&self.inputs.anchor));
        if let (Some(x), Some(z)) = (&self.inputs.multipliers, &self.inputs.ln_multipliers) {
            let x: [f64; 5] = (*x).into();
            let z: [f64; 5] = (*z).into();
            let _ = writeln!(w, "x:        ({})", join(&x, 6));
            let _ = writeln!(w, "ln x:     ({})", join(&z, 4));
        }
        if let Some(median) = self.inputs.semi_analytic_median {
            let _ = writeln!(w, "closed-form median: {} USD/MB", sig(median, 5));
        }
        let _ = writeln!(
            w,
            "worlds:   {} x {} draws = {} samples",
            self.inputs.plan.worlds, self.inputs.plan.draws_per_world, self.result.count
        );
        let _ = writeln!(w, "acceptance rate: {:.4}", self.telemetry.acceptance_rate);
        if self.telemetry.dropped_worlds > 0 {
            let _ = writeln!(w, "dropped worlds:  {}", self.telemetry.dropped_worlds);
        }
        let _ = writeln!(w);
        write_bands(w, &self.result);
        for class in &self.classes {
            let _ = writeln!(w);
            let _ = writeln!(w, "class '{}' (hit rate {:.4})", class.label, class.hit_rate);
            write_bands(w, &class.bands);
        }
        if let Some(timing) = self.timing {
            let _ = writeln!(w);
            let _ = writeln!(
                w,
                "runtime: {:.1} ms ({:.0} worlds/s)",
                timing.elapsed_ms, timing.worlds_per_second
            );
        }
        out
    }
}

fn write_bands(w: &mut String, report: &BandReport) {
    for row in &report.bands {
        let _ = writeln!(w, "{:<6} {} USD/MB", format!("{}:", row.label), sig(row.usd_per_mb, 5));
    }
    let _ = writeln!(
        w,
        "mean:  {} USD/MB (s.e. {})",
        sig(report.mean_usd_per_mb, 5),
        sig(report.mean_standard_error, 2)
    );
    for row in &report.bands {
        let _ = writeln!(w, "{:<6} ${} / GB", format!("{}:", row.label), fixed_sig(row.usd_per_gb, 3));
    }
    for row in &report.bands {
        if let Some(total) = row.total_usd {
            let _ = writeln!(
                w,
                "{:<6} ${}M total",
                format!("{}:", row.label),
                fixed_sig(total / 1e6, 4)
            );
        }
    }
}

fn describe_anchor(source: &AnchorSource) -> String {
    match source {
        AnchorSource::Explicit => "explicit".to_owned(),
        AnchorSource::Table {
            year,
            is_projection,
            dataset,
        } => format!(
            "{year} {} from {dataset} dataset",
            if *is_projection { "projection" } else { "estimate" }
        ),
    }
}

fn join(values: &[f64], digits: usize) -> String {
    values
        .iter()
        .map(|v| fixed_sig(*v, digits))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Scientific notation with `digits` significant figures: `1.6926e-4`.
pub fn sig(value: f64, digits: usize) -> String {
    format!("{:.*e}", digits.saturating_sub(1), value)
}

/// Positional notation with `digits` significant figures: `0.173`, `1.86`.
pub fn fixed_sig(value: f64, digits: usize) -> String {
    if value == 0.0 || !value.is_finite() {
        return format!("{value}");
    }
    let magnitude = value.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - magnitude).max(0) as usize;
    format!("{value:.decimals$}")
}

/// A finished run: the report and the samples it was computed from.
#[derive(Debug, Clone)]
pub struct Run {
    pub report: RunReport,
    pub samples: PriceSampleSet,
}

/// Single-deal pricing: map the deal, simulate, and summarize.
pub fn run_price(scenario: &Scenario) -> Result<Run> {
    let resolved = scenario.resolve()?;
    let (deal, x) = resolved
        .deal
        .clone()
        .ok_or_else(|| Error::invalid("deal", "price needs a [deal] section"))?;
    let samples = simulate(&resolved.plan, &resolved.prior, &resolved.constraints, DealSource::Fixed(x))?;
    let bands = samples.bands()?;
    let median = semi_analytic_median(&resolved.prior, &resolved.constraints, &x).ok();
    let inputs = InputEcho {
        b0: resolved.b0,
        anchor: resolved.anchor_source.clone(),
        prior: resolved.prior,
        constraints: resolved.constraints.clone(),
        plan: resolved.plan.clone(),
        volume_mb: Some(deal.volume_mb),
        deal: Some(deal.clone()),
        multipliers: Some((*x.values()).into()),
        ln_multipliers: Some((*x.logs()).into()),
        semi_analytic_median: median,
    };
    let report = RunReport {
        artifact_version: crate::VERSION.to_owned(),
        mode: RunMode::Price,
        scenario: resolved.name.clone(),
        seed: resolved.plan.seed,
        generated_at_unix: None,
        inputs,
        result: BandReport::new(&bands, Some(deal.volume_mb)),
        classes: Vec::new(),
        telemetry: samples.telemetry(),
        timing: None,
    };
    Ok(Run { report, samples })
}

/// Pipeline pricing: sample deals from the mix for every draw, and price each
/// declared configuration class conditionally.
pub fn run_pipeline(scenario: &Scenario) -> Result<Run> {
    let resolved = scenario.resolve()?;
    let pipeline = resolved
        .pipeline
        .as_ref()
        .ok_or_else(|| Error::invalid("pipeline", "pipeline needs a [pipeline] section"))?;
    let source = |class| {
        DealSource::Mix(MixSource {
            mix: &pipeline.mix,
            class,
            table: &resolved.table,
            params: &resolved.formulas,
            max_attempts: pipeline.max_attempts,
        })
    };
    let volume = pipeline.mix.common_volume();
    let samples = simulate(&resolved.plan, &resolved.prior, &resolved.constraints, source(None))?;
    let bands = samples.bands()?;

    let mut classes = Vec::with_capacity(pipeline.classes.len());
    for class in &pipeline.classes {
        let class_samples = simulate(&resolved.plan, &resolved.prior, &resolved.constraints, source(Some(class)))?;
        let telemetry = class_samples.telemetry();
        classes.push(ClassReport {
            label: class.label.clone(),
            hit_rate: telemetry.deal_acceptance_rate.unwrap_or(1.0),
            bands: BandReport::new(&class_samples.bands()?, volume),
            telemetry,
        });
    }

    let inputs = InputEcho {
        b0: resolved.b0,
        anchor: resolved.anchor_source.clone(),
        prior: resolved.prior,
        constraints: resolved.constraints.clone(),
        plan: resolved.plan.clone(),
        deal: None,
        multipliers: None,
        ln_multipliers: None,
        volume_mb: volume,
        semi_analytic_median: None,
    };
    let report = RunReport {
        artifact_version: crate::VERSION.to_owned(),
        mode: RunMode::Pipeline,
        scenario: resolved.name.clone(),
        seed: resolved.plan.seed,
        generated_at_unix: None,
        inputs,
        result: BandReport::new(&bands, volume),
        classes,
        telemetry: samples.telemetry(),
        timing: None,
    };
    Ok(Run { report, samples })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassProbe {
    pub label: String,
    pub hit_rate: f64,
}

/// Dry-run diagnostics: everything but the simulation itself.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub scenario: String,
    pub b0: f64,
    pub anchor: AnchorSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multipliers: Option<LeverValues>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ln_multipliers: Option<LeverValues>,
    pub acceptance: AcceptanceProbe,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub semi_analytic_median: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median_refusal: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub classes: Vec<ClassProbe>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let w = &mut out;
        let _ = writeln!(w, "scenario: {} (valid)", self.scenario);
        let _ = writeln!(w, "b0:       {} USD/MB ({})", sig(self.b0, 5), describe_anchor(&self.anchor));
        if let (Some(x), Some(z)) = (&self.multipliers, &self.ln_multipliers) {
            let x: [f64; 5] = (*x).into();
            let z: [f64; 5] = (*z).into();
            let _ = writeln!(w, "x:        ({})", join(&x, 6));
            let _ = writeln!(w, "ln x:     ({})", join(&z, 4));
        }
        let _ = writeln!(
            w,
            "acceptance probe: {}/{} = {:.4}{}",
            self.acceptance.accepted,
            self.acceptance.draws,
            self.acceptance.rate,
            self.acceptance
                .most_violated
                .as_ref()
                .map(|m| format!(" (most violated: {m})"))
                .unwrap_or_default()
        );
        match (&self.semi_analytic_median, &self.median_refusal) {
            (Some(m), _) => {
                let _ = writeln!(w, "closed-form median: {} USD/MB", sig(*m, 5));
            }
            (None, Some(reason)) => {
                let _ = writeln!(w, "closed-form median: n/a ({reason})");
            }
            _ => {}
        }
        for class in &self.classes {
            let _ = writeln!(w, "class '{}': hit rate {:.4}", class.label, class.hit_rate);
        }
        for warning in &self.warnings {
            let _ = writeln!(w, "warning: {warning}");
        }
        out
    }
}

pub fn run_validate(scenario: &Scenario) -> Result<ValidationReport> {
    let resolved: ResolvedScenario = scenario.resolve()?;
    let seed = resolved.plan.seed;
    let mut rng = substream(seed, 0, StreamRole::Probe);
    let acceptance = acceptance_probe(&resolved.prior, &resolved.constraints, &mut rng, VALIDATION_PROBE_DRAWS);
    let mut warnings = Vec::new();
    if acceptance.rate < CONFLICT_WARNING_RATE {
        warnings.push(format!(
            "prior-constraint conflict: only {} of {} prior draws are admissible; sampling will likely fail",
            acceptance.accepted, acceptance.draws
        ));
    }

    let (mut median, mut refusal) = (None, None);
    if let Some((_, x)) = &resolved.deal {
        match semi_analytic_median(&resolved.prior, &resolved.constraints, x) {
            Ok(m) => median = Some(m),
            Err(err) => refusal = Some(err.to_string()),
        }
    }

    let mut classes = Vec::new();
    if let Some(pipeline) = &resolved.pipeline {
        for (k, class) in pipeline.classes.iter().enumerate() {
            let mut rng = substream(seed, k as u64 + 1, StreamRole::Probe);
            let hit_rate = class_hit_rate(&pipeline.mix, class, &mut rng, VALIDATION_PROBE_DRAWS);
            if hit_rate == 0.0 {
                warnings.push(format!(
                    "configuration class '{}' matched none of {} probe draws",
                    class.label, VALIDATION_PROBE_DRAWS
                ));
            }
            classes.push(ClassProbe {
                label: class.label.clone(),
                hit_rate,
            });
        }
    }

    Ok(ValidationReport {
        scenario: resolved.name.clone(),
        b0: resolved.b0,
        anchor: resolved.anchor_source.clone(),
        multipliers: resolved.deal.as_ref().map(|(_, x)| (*x.values()).into()),
        ln_multipliers: resolved.deal.as_ref().map(|(_, x)| (*x.logs()).into()),
        acceptance,
        semi_analytic_median: median,
        median_refusal: refusal,
        classes,
        warnings,
    })
}

/// Raw samples as CSV: world, draw, price, then the world's parameters.
pub fn write_samples_csv<W: Write>(samples: &PriceSampleSet, mut out: W) -> io::Result<()> {
    writeln!(
        out,
        "world,draw,price_usd_per_mb,alpha,beta_TN,beta_COV,beta_QF,beta_UTIL,beta_RIGHTS,sigma"
    )?;
    for (k, world) in samples.worlds().iter().enumerate() {
        let t = &world.theta;
        for (i, price) in samples.world_prices(k).iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                world.index, i, price, t.alpha, t.beta[0], t.beta[1], t.beta[2], t.beta[3], t.beta[4], t.sigma
            )?;
        }
    }
    Ok(())
}
