//! Scenario files: every input of a run in one TOML document.
//!
//! ```toml
//! [metadata]
//! name = "3nm foundry dataset"
//!
//! [anchor]
//! b0 = 3.90e-5            # or: year = 2026 (optionally dataset = "path.toml")
//!
//! [deal]
//! technology_node = "3nm"
//! process_count = 6
//! quality_score = 0.95
//! completeness_score = 0.95
//! age_months = 6
//! utility_value_usd = 25e6
//! volume_mb = "5 PB"
//! rights = [{ label = "derivatives", factor = 1.3 }]
//!
//! [prior]
//! s_alpha = 0.25
//! mu = [1.17, 0.86, 0.97, 1.39, 1.16]
//! s = [0.15, 0.12, 0.10, 0.18, 0.14]
//! s_sigma = 0.35
//!
//! [constraints]
//! beta_bounds = [[0, 3], [0, 3], [0, 3], [0, 3], [0, 3]]
//! sigma_bounds = [0, 1]
//!
//! [plan]
//! worlds = 5000
//! draws_per_world = 10
//! seed = 20260101
//! ```
//!
//! Optional sections: `[node_table]` (preset and/or explicit entries),
//! `[formulas]` (multiplier coefficients), `[pipeline]` (deal mix and
//! configuration classes).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::anchor::{anchor_for_year, AnchorDataset};
use crate::deal_mix::{ConfigurationClass, DealMix, MixComponent};
use crate::deal_model::{map_attributes, DealAttributes, FormulaParams, MultiplierVector, NodeTable};
use crate::engine::SimulationPlan;
use crate::error::{Error, Result};
use crate::priors::{ConstraintSet, PriorSpec, DEFAULT_MAX_ATTEMPTS};

/// Baseline anchor used by the semiconductor worked example (USD/MB).
pub const CASE_STUDY_B0: f64 = 3.90e-5;
pub const CASE_STUDY_SEED: u64 = 20_260_101;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub metadata: Metadata,
    pub anchor: AnchorSection,
    #[serde(default)]
    pub node_table: NodeTableSection,
    #[serde(default)]
    pub formulas: FormulaParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deal: Option<DealAttributes>,
    pub prior: PriorSection,
    #[serde(default)]
    pub constraints: ConstraintSet,
    pub plan: SimulationPlan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pipeline: Option<PipelineSection>,
    /// Directory relative paths inside the file resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Metadata {
    pub name: String,
    pub currency: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
}

impl Default for Metadata {
    fn default() -> Self {
        Self {
            name: "unnamed".to_owned(),
            currency: "USD".to_owned(),
            year: None,
        }
    }
}

/// Either an explicit `b0` or a year looked up in the anchor dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    /// Anchor dataset file; the embedded table is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodeTableSection {
    /// Named built-in table; `"reference"` is the 10 nm .. 2 nm table.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Entries added to (or overriding) the preset.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub entries: BTreeMap<String, f64>,
    pub require_monotone: bool,
}

impl NodeTableSection {
    pub fn resolve(&self) -> Result<NodeTable> {
        let mut entries = match (&self.preset, self.entries.is_empty()) {
            (Some(name), _) => NodeTable::preset(name)
                .ok_or_else(|| Error::invalid("node_table.preset", format!("unknown preset '{name}'")))?
                .entries()
                .clone(),
            (None, true) => NodeTable::reference().entries().clone(),
            (None, false) => BTreeMap::new(),
        };
        entries.extend(self.entries.iter().map(|(k, v)| (k.clone(), *v)));
        let table = NodeTable::new(entries)?;
        if self.require_monotone {
            table.check_monotone()?;
        }
        Ok(table)
    }
}

/// Prior hyperparameters; the alpha centre comes from the anchor section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    pub s_alpha: f64,
    pub mu: [f64; 5],
    pub s: [f64; 5],
    pub s_sigma: f64,
}

impl PriorSection {
    pub fn with_b0(&self, b0: f64) -> PriorSpec {
        PriorSpec {
            b0,
            s_alpha: self.s_alpha,
            mu: self.mu,
            s: self.s,
            s_sigma: self.s_sigma,
        }
    }
}

impl From<&PriorSpec> for PriorSection {
    fn from(prior: &PriorSpec) -> Self {
        Self {
            s_alpha: prior.s_alpha,
            mu: prior.mu,
            s: prior.s,
            s_sigma: prior.s_sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    pub mix: Vec<MixComponent>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub classes: Vec<ConfigurationClass>,
    #[serde(default = "default_class_attempts")]
    pub max_attempts: u64,
}

fn default_class_attempts() -> u64 {
    DEFAULT_MAX_ATTEMPTS
}

/// Where the run's `b0` came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnchorSource {
    Explicit,
    Table {
        year: i32,
        is_projection: bool,
        dataset: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedPipeline {
    pub mix: DealMix,
    pub classes: Vec<ConfigurationClass>,
    pub max_attempts: u64,
}

/// A scenario after validation, with every derived input computed.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedScenario {
    pub name: String,
    pub b0: f64,
    pub anchor_source: AnchorSource,
    pub table: NodeTable,
    pub formulas: FormulaParams,
    pub prior: PriorSpec,
    pub constraints: ConstraintSet,
    pub plan: SimulationPlan,
    pub deal: Option<(DealAttributes, MultiplierVector)>,
    pub pipeline: Option<ResolvedPipeline>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|err| Error::io(path, &err))?;
        let mut scenario = Self::parse(&text)?;
        scenario.base_dir = path.parent().map(Path::to_path_buf);
        Ok(scenario)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    /// The semiconductor worked example: 3 nm deal, published priors and rules,
    /// T = 5000, N = 10.
    pub fn case_study(seed: u64) -> Self {
        let prior = PriorSpec::case_study(CASE_STUDY_B0);
        Self {
            metadata: Metadata {
                name: "3nm foundry-to-fabless dataset".to_owned(),
                currency: "USD".to_owned(),
                year: Some(2026),
            },
            anchor: AnchorSection {
                b0: Some(CASE_STUDY_B0),
                ..AnchorSection::default()
            },
            node_table: NodeTableSection {
                preset: Some("reference".to_owned()),
                entries: BTreeMap::new(),
                require_monotone: true,
            },
            formulas: FormulaParams::default(),
            deal: Some(DealAttributes::case_study()),
            prior: PriorSection::from(&prior),
            constraints: ConstraintSet::case_study(),
            plan: SimulationPlan::case_study(seed),
            pipeline: None,
            base_dir: None,
        }
    }

    pub fn resolve(&self) -> Result<ResolvedScenario> {
        if self.metadata.currency != "USD" {
            return Err(Error::invalid("metadata.currency", "only USD is supported"));
        }
        let (b0, anchor_source) = self.resolve_anchor()?;
        let table = self.node_table.resolve()?;
        self.formulas.validate()?;
        let prior = self.prior.with_b0(b0);
        prior.validate()?;
        self.constraints.validate()?;
        self.plan.validate()?;

        let deal = match &self.deal {
            Some(attrs) => {
                let x = map_attributes(attrs, &table, &self.formulas).map_err(|err| in_section("deal", err))?;
                Some((attrs.clone(), x))
            }
            None => None,
        };
        let pipeline = match &self.pipeline {
            Some(section) => {
                let mix = DealMix::new(section.mix.clone())?;
                mix.validate(&table)?;
                for class in &section.classes {
                    class.validate()?;
                }
                if section.max_attempts == 0 {
                    return Err(Error::invalid("pipeline.max_attempts", "must be >= 1"));
                }
                Some(ResolvedPipeline {
                    mix,
                    classes: section.classes.clone(),
                    max_attempts: section.max_attempts,
                })
            }
            None => None,
        };
        if deal.is_none() && pipeline.is_none() {
            return Err(Error::invalid("deal", "scenario needs a [deal] or a [pipeline] section"));
        }
        Ok(ResolvedScenario {
            name: self.metadata.name.clone(),
            b0,
            anchor_source,
            table,
            formulas: self.formulas,
            prior,
            constraints: self.constraints.clone(),
            plan: self.plan.clone(),
            deal,
            pipeline,
        })
    }

    fn resolve_anchor(&self) -> Result<(f64, AnchorSource)> {
        match (self.anchor.b0, self.anchor.year) {
            (Some(b0), None) => {
                if !(b0 > 0.0 && b0.is_finite()) {
                    return Err(Error::invalid("anchor.b0", format!("must be > 0, got {b0}")));
                }
                Ok((b0, AnchorSource::Explicit))
            }
            (None, Some(year)) => {
                let (dataset, name) = match &self.anchor.dataset {
                    Some(path) => {
                        let path = match &self.base_dir {
                            Some(dir) if path.is_relative() => dir.join(path),
                            _ => path.clone(),
                        };
                        (AnchorDataset::load(&path)?, path.display().to_string())
                    }
                    None => (AnchorDataset::embedded(), "embedded".to_owned()),
                };
                let anchor = anchor_for_year(year, &dataset).map_err(|err| in_section("anchor", err))?;
                Ok((
                    anchor.b0,
                    AnchorSource::Table {
                        year,
                        is_projection: anchor.is_projection,
                        dataset: name,
                    },
                ))
            }
            (Some(_), Some(_)) => Err(Error::invalid("anchor", "give either b0 or year, not both")),
            (None, None) => Err(Error::invalid("anchor", "give b0 or year")),
        }
    }
}

fn in_section(section: &str, err: Error) -> Error {
    match err {
        Error::UnknownNode(label) => Error::invalid(
            format!("{section}.technology_node"),
            format!("unknown technology_node '{label}'"),
        ),
        Error::Invalid { field, message } if !field.starts_with(section) => Error::Invalid {
            field: format!("{section}.{field}"),
            message,
        },
        Error::MissingYear(year) => Error::invalid(format!("{section}.year"), format!("{year} not in dataset")),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_study_resolves() {
        let resolved = Scenario::case_study(1).resolve().unwrap();
        assert_eq!(resolved.b0, CASE_STUDY_B0);
        assert_eq!(resolved.anchor_source, AnchorSource::Explicit);
        let (_, x) = resolved.deal.unwrap();
        assert!((x.values()[4] - 1.6445).abs() < 1e-6);
    }

    #[test]
    fn toml_round_trip() {
        let scenario = Scenario::case_study(7);
        let text = scenario.to_toml();
        assert_eq!(Scenario::parse(&text).unwrap(), scenario);
    }

    #[test]
    fn anchor_choice_is_exclusive() {
        let mut s = Scenario::case_study(1);
        s.anchor.year = Some(2026);
        assert!(matches!(s.resolve(), Err(Error::Invalid { field, .. }) if field == "anchor"));
        s.anchor.b0 = None;
        let resolved = s.resolve().unwrap();
        assert!((resolved.b0 - 3.226e-5).abs() < 1e-8);
        assert!(matches!(resolved.anchor_source, AnchorSource::Table { is_projection: true, .. }));
        s.anchor.year = None;
        assert!(s.resolve().is_err());
    }

    #[test]
    fn unknown_node_names_the_field() {
        let mut s = Scenario::case_study(1);
        s.deal.as_mut().unwrap().technology_node = "4nm".into();
        let err = s.resolve().unwrap_err();
        assert!(err.to_string().contains("technology_node"), "{err}");
        assert!(err.to_string().contains("4nm"), "{err}");
    }

    #[test]
    fn custom_node_entries() {
        let mut s = Scenario::case_study(1);
        s.node_table.entries.insert("1.4nm".into(), 1.95);
        let resolved = s.resolve().unwrap();
        assert_eq!(resolved.table.get("1.4nm"), Some(1.95));
        assert_eq!(resolved.table.get("3nm"), Some(1.65));
        s.node_table.entries.insert("1nm".into(), 1.1);
        assert!(s.resolve().is_err());
    }

    #[test]
    fn volume_strings_accepted() {
        let text = Scenario::case_study(1)
            .to_toml()
            .replace("volume_mb = 5368709120.0", "volume_mb = \"5 PB\"");
        assert!(text.contains("\"5 PB\""));
        let parsed = Scenario::parse(&text).unwrap();
        assert_eq!(parsed.deal.unwrap().volume_mb, 5_368_709_120.0);
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = Scenario::case_study(1).to_toml().replace("[plan]", "[plan]\nthreads = 4");
        assert!(matches!(Scenario::parse(&text), Err(Error::Parse(_))));
    }
}
