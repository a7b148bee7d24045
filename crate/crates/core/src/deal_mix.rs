//! The "mix of deals": a weighted mixture of deal templates whose fields are
//! sampled independently, plus configuration classes for conditional pricing.

use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::Triangular;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::compare::Comparison;
use crate::deal_model::{DealAttributes, NodeTable, RightsFactor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NumericSampler {
    Fixed(f64),
    Choice { choice: Vec<f64> },
    Uniform { uniform: [f64; 2] },
    Triangular { triangular: [f64; 3] },
}

impl NumericSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            NumericSampler::Fixed(value) => *value,
            NumericSampler::Choice { choice } => choice[rng.gen_range(0..choice.len())],
            NumericSampler::Uniform { uniform: [lo, hi] } => rng.gen_range(*lo..*hi),
            NumericSampler::Triangular {
                triangular: [min, mode, max],
            } => Triangular::new(*min, *max, *mode)
                .expect("validated triangular parameters")
                .sample(rng),
        }
    }

    /// Closed range covering every value the sampler can return.
    pub fn support(&self) -> (f64, f64) {
        match self {
            NumericSampler::Fixed(value) => (*value, *value),
            NumericSampler::Choice { choice } => choice
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v))),
            NumericSampler::Uniform { uniform: [lo, hi] } => (*lo, *hi),
            NumericSampler::Triangular {
                triangular: [min, _, max],
            } => (*min, *max),
        }
    }

    fn validate(&self, field: &str, lo: f64, hi: f64) -> Result<()> {
        let shape_ok = match self {
            NumericSampler::Fixed(v) => v.is_finite(),
            NumericSampler::Choice { choice } => !choice.is_empty() && choice.iter().all(|v| v.is_finite()),
            NumericSampler::Uniform { uniform: [a, b] } => a.is_finite() && b.is_finite() && a < b,
            NumericSampler::Triangular {
                triangular: [min, mode, max],
            } => min.is_finite() && max.is_finite() && min <= mode && mode <= max && min < max,
        };
        if !shape_ok {
            return Err(Error::invalid(field, format!("malformed sampler {self:?}")));
        }
        let (s_lo, s_hi) = self.support();
        let inside = |v: f64| v >= lo && v <= hi;
        if !(inside(s_lo) && inside(s_hi)) {
            return Err(Error::invalid(
                field,
                format!("sampler support [{s_lo}, {s_hi}] leaves the valid range [{lo}, {hi}]"),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CountSampler {
    Fixed(u32),
    Choice { choice: Vec<u32> },
    /// Inclusive integer range.
    Range { range: [u32; 2] },
}

impl CountSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match self {
            CountSampler::Fixed(value) => *value,
            CountSampler::Choice { choice } => choice[rng.gen_range(0..choice.len())],
            CountSampler::Range { range: [lo, hi] } => rng.gen_range(*lo..=*hi),
        }
    }

    fn validate(&self, field: &str) -> Result<()> {
        let ok = match self {
            CountSampler::Fixed(_) => true,
            CountSampler::Choice { choice } => !choice.is_empty(),
            CountSampler::Range { range: [lo, hi] } => lo <= hi,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(field, format!("malformed sampler {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelSampler {
    Fixed(String),
    Choice { choice: Vec<String> },
}

impl LabelSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> String {
        match self {
            LabelSampler::Fixed(label) => label.clone(),
            LabelSampler::Choice { choice } => choice[rng.gen_range(0..choice.len())].clone(),
        }
    }

    fn labels(&self) -> &[String] {
        match self {
            LabelSampler::Fixed(label) => std::slice::from_ref(label),
            LabelSampler::Choice { choice } => choice,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RightsSampler {
    pub label: String,
    pub factor: NumericSampler,
}

/// A deal template: one sampler per attribute field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DealTemplate {
    pub technology_node: LabelSampler,
    pub process_count: CountSampler,
    pub quality_score: NumericSampler,
    pub completeness_score: NumericSampler,
    pub age_months: NumericSampler,
    pub utility_value_usd: NumericSampler,
    #[serde(default)]
    pub rights: Vec<RightsSampler>,
    pub volume_mb: NumericSampler,
}

impl DealTemplate {
    /// A template that always yields `attrs`.
    pub fn fixed(attrs: &DealAttributes) -> Self {
        Self {
            technology_node: LabelSampler::Fixed(attrs.technology_node.clone()),
            process_count: CountSampler::Fixed(attrs.process_count),
            quality_score: NumericSampler::Fixed(attrs.quality_score),
            completeness_score: NumericSampler::Fixed(attrs.completeness_score),
            age_months: NumericSampler::Fixed(attrs.age_months),
            utility_value_usd: NumericSampler::Fixed(attrs.utility_value_usd),
            rights: attrs
                .rights_factors
                .iter()
                .map(|r| RightsSampler {
                    label: r.label.clone(),
                    factor: NumericSampler::Fixed(r.factor),
                })
                .collect(),
            volume_mb: NumericSampler::Fixed(attrs.volume_mb),
        }
    }

    /// Fields are sampled in declaration order, each independently.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DealAttributes {
        DealAttributes {
            technology_node: self.technology_node.sample(rng),
            process_count: self.process_count.sample(rng),
            quality_score: self.quality_score.sample(rng),
            completeness_score: self.completeness_score.sample(rng),
            age_months: self.age_months.sample(rng),
            utility_value_usd: self.utility_value_usd.sample(rng),
            rights_factors: self
                .rights
                .iter()
                .map(|r| RightsFactor::new(r.label.clone(), r.factor.sample(rng)))
                .collect(),
            volume_mb: self.volume_mb.sample(rng),
        }
    }

    pub fn validate(&self, prefix: &str, table: &NodeTable) -> Result<()> {
        let field = |name: &str| format!("{prefix}.{name}");
        for label in self.technology_node.labels() {
            if !table.contains(label) {
                return Err(Error::invalid(
                    field("technology_node"),
                    format!("unknown technology_node '{label}'"),
                ));
            }
        }
        if self.technology_node.labels().is_empty() {
            return Err(Error::invalid(field("technology_node"), "empty choice"));
        }
        self.process_count.validate(&field("process_count"))?;
        self.quality_score.validate(&field("quality_score"), 0.0, 1.0)?;
        self.completeness_score
            .validate(&field("completeness_score"), 0.0, 1.0)?;
        self.age_months.validate(&field("age_months"), 0.0, f64::MAX)?;
        self.utility_value_usd
            .validate(&field("utility_value_usd"), 0.0, f64::MAX)?;
        self.volume_mb.validate(&field("volume_mb"), f64::MIN_POSITIVE, f64::MAX)?;
        for r in &self.rights {
            r.factor
                .validate(&field(&format!("rights.{}", r.label)), f64::MIN_POSITIVE, f64::MAX)?;
        }
        Ok(())
    }

    /// The single volume every draw will have, if the template fixes it.
    pub fn fixed_volume(&self) -> Option<f64> {
        match self.volume_mb {
            NumericSampler::Fixed(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixComponent {
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub template: DealTemplate,
}

/// Finite mixture of deal templates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DealMix {
    components: Vec<MixComponent>,
}

impl DealMix {
    pub fn new(components: Vec<MixComponent>) -> Result<Self> {
        let mix = Self { components };
        mix.validate_weights()?;
        Ok(mix)
    }

    /// One component that always yields `attrs`.
    pub fn single(attrs: &DealAttributes) -> Self {
        Self {
            components: vec![MixComponent {
                weight: 1.0,
                label: None,
                template: DealTemplate::fixed(attrs),
            }],
        }
    }

    pub fn components(&self) -> &[MixComponent] {
        &self.components
    }

    /// Normalized weights.
    pub fn probabilities(&self) -> Vec<f64> {
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        self.components.iter().map(|c| c.weight / total).collect()
    }

    fn validate_weights(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::invalid("pipeline.mix", "no components"));
        }
        for (i, c) in self.components.iter().enumerate() {
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(Error::invalid(
                    format!("pipeline.mix[{i}].weight"),
                    format!("must be > 0, got {}", c.weight),
                ));
            }
        }
        Ok(())
    }

    pub fn validate(&self, table: &NodeTable) -> Result<()> {
        self.validate_weights()?;
        for (i, c) in self.components.iter().enumerate() {
            c.template.validate(&format!("pipeline.mix[{i}]"), table)?;
        }
        Ok(())
    }

    /// Picks a component by weight (no randomness consumed for a single component).
    pub fn sample_component<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.components.len() == 1 {
            return 0;
        }
        let weights = WeightedIndex::new(self.components.iter().map(|c| c.weight))
            .expect("validated positive weights");
        weights.sample(rng)
    }

    /// The volume shared by every possible draw, if there is one.
    pub fn common_volume(&self) -> Option<f64> {
        let first = self.components.first()?.template.fixed_volume()?;
        self.components
            .iter()
            .all(|c| c.template.fixed_volume() == Some(first))
            .then_some(first)
    }
}

/// Draws deal attributes from the mix.
pub fn sample_deal<R: Rng + ?Sized>(mix: &DealMix, rng: &mut R) -> DealAttributes {
    let index = mix.sample_component(rng);
    mix.components[index].template.sample(rng)
}

/// Attribute addressed by a class condition: a field name or `rights.<label>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttributeField {
    TechnologyNode,
    ProcessCount,
    QualityScore,
    CompletenessScore,
    AgeMonths,
    UtilityValueUsd,
    VolumeMb,
    Rights(String),
}

impl AttributeField {
    fn numeric(&self, attrs: &DealAttributes) -> Option<f64> {
        match self {
            AttributeField::TechnologyNode => None,
            AttributeField::ProcessCount => Some(f64::from(attrs.process_count)),
            AttributeField::QualityScore => Some(attrs.quality_score),
            AttributeField::CompletenessScore => Some(attrs.completeness_score),
            AttributeField::AgeMonths => Some(attrs.age_months),
            AttributeField::UtilityValueUsd => Some(attrs.utility_value_usd),
            AttributeField::VolumeMb => Some(attrs.volume_mb),
            AttributeField::Rights(label) => attrs.rights_factor(label),
        }
    }
}

impl fmt::Display for AttributeField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttributeField::TechnologyNode => f.write_str("technology_node"),
            AttributeField::ProcessCount => f.write_str("process_count"),
            AttributeField::QualityScore => f.write_str("quality_score"),
            AttributeField::CompletenessScore => f.write_str("completeness_score"),
            AttributeField::AgeMonths => f.write_str("age_months"),
            AttributeField::UtilityValueUsd => f.write_str("utility_value_usd"),
            AttributeField::VolumeMb => f.write_str("volume_mb"),
            AttributeField::Rights(label) => write!(f, "rights.{label}"),
        }
    }
}

impl FromStr for AttributeField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "technology_node" => AttributeField::TechnologyNode,
            "process_count" => AttributeField::ProcessCount,
            "quality_score" => AttributeField::QualityScore,
            "completeness_score" => AttributeField::CompletenessScore,
            "age_months" => AttributeField::AgeMonths,
            "utility_value_usd" => AttributeField::UtilityValueUsd,
            "volume_mb" => AttributeField::VolumeMb,
            other => match other.strip_prefix("rights.") {
                Some(label) if !label.is_empty() => AttributeField::Rights(label.to_owned()),
                _ => return Err(Error::invalid("pipeline.classes", format!("unknown field '{other}'"))),
            },
        })
    }
}

impl Serialize for AttributeField {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AttributeField {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConditionValue {
    Number(f64),
    Label(String),
}

/// `field op value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Condition {
    pub field: AttributeField,
    pub op: Comparison,
    pub value: ConditionValue,
}

impl Condition {
    pub fn holds(&self, attrs: &DealAttributes) -> bool {
        match (&self.field, &self.value) {
            (AttributeField::TechnologyNode, ConditionValue::Label(label)) => match self.op {
                Comparison::Eq => attrs.technology_node == *label,
                Comparison::Ne => attrs.technology_node != *label,
                _ => false,
            },
            (field, ConditionValue::Number(value)) => field
                .numeric(attrs)
                .is_some_and(|actual| self.op.holds(actual, *value)),
            _ => false,
        }
    }

    fn validate(&self, class: &str) -> Result<()> {
        let field = format!("pipeline.classes.{class}.{}", self.field);
        match (&self.field, &self.value) {
            (AttributeField::TechnologyNode, ConditionValue::Label(_)) => {
                if matches!(self.op, Comparison::Eq | Comparison::Ne) {
                    Ok(())
                } else {
                    Err(Error::invalid(field, "technology_node supports only == and !="))
                }
            }
            (AttributeField::TechnologyNode, ConditionValue::Number(_)) => {
                Err(Error::invalid(field, "technology_node compares against a label"))
            }
            (_, ConditionValue::Label(_)) => Err(Error::invalid(field, "numeric field compared to a label")),
            (_, ConditionValue::Number(v)) if v.is_nan() => Err(Error::invalid(field, "NaN bound")),
            _ => Ok(()),
        }
    }
}

/// A labelled conjunction of conditions (a family of deals, e.g. "5 nm, 24 months").
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigurationClass {
    pub label: String,
    #[serde(default)]
    pub conditions: Vec<Condition>,
}

impl ConfigurationClass {
    pub fn everything(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            conditions: Vec::new(),
        }
    }

    pub fn matches(&self, attrs: &DealAttributes) -> bool {
        self.conditions.iter().all(|c| c.holds(attrs))
    }

    pub fn validate(&self) -> Result<()> {
        self.conditions.iter().try_for_each(|c| c.validate(&self.label))
    }
}

/// Draws from the mix conditioned on membership in `class`, by rejection.
///
/// Returns the accepted attributes and the number of draws it took.
pub fn sample_conditional<R: Rng + ?Sized>(
    mix: &DealMix,
    class: &ConfigurationClass,
    rng: &mut R,
    max_attempts: u64,
) -> Result<(DealAttributes, u64)> {
    let max_attempts = max_attempts.max(1);
    for attempt in 1..=max_attempts {
        let attrs = sample_deal(mix, rng);
        if class.matches(&attrs) {
            return Ok((attrs, attempt));
        }
    }
    Err(Error::EmptyConfigurationClass {
        class: class.label.clone(),
        attempts: max_attempts,
        hit_rate: 0.0,
    })
}

/// Fraction of `draws` unconditional draws that fall in `class`.
pub fn class_hit_rate<R: Rng + ?Sized>(
    mix: &DealMix,
    class: &ConfigurationClass,
    rng: &mut R,
    draws: u64,
) -> f64 {
    if draws == 0 {
        return 0.0;
    }
    let hits = (0..draws)
        .filter(|_| class.matches(&sample_deal(mix, rng)))
        .count();
    hits as f64 / draws as f64
}
