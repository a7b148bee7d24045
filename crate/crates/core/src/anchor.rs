//! The content-agnostic baseline price anchor `b0`: global data-economy value
//! divided by global data volume, per year.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Megabytes in a decimal zettabyte.
pub const MB_PER_ZETTABYTE: f64 = 1e15;

pub const DATASET_VERSION: u32 = 1;

const EMBEDDED: &str = include_str!("../data/anchor_table.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorRow {
    pub year: i32,
    pub economy_value_usd: f64,
    pub gdp_usd: f64,
    pub data_volume_zb: f64,
    pub is_projection: bool,
    /// Rounded figure as originally printed; kept for audit comparisons only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published_b0: Option<f64>,
}

impl AnchorRow {
    pub fn b0(&self) -> Result<f64> {
        derive_b0(self.economy_value_usd, self.data_volume_zb)
    }

    pub fn share_of_gdp(&self) -> f64 {
        self.economy_value_usd / self.gdp_usd
    }

    fn validate(&self) -> Result<()> {
        let field = |name: &str| format!("anchor.{}.{name}", self.year);
        if !(2015..=2035).contains(&self.year) {
            return Err(Error::invalid(field("year"), "outside 2015..=2035"));
        }
        for (name, value) in [
            ("economy_value_usd", self.economy_value_usd),
            ("gdp_usd", self.gdp_usd),
            ("data_volume_zb", self.data_volume_zb),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::invalid(field(name), format!("must be > 0, got {value}")));
            }
        }
        Ok(())
    }
}

/// Versioned table of yearly anchor inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorDataset {
    pub version: u32,
    #[serde(rename = "row")]
    pub rows: Vec<AnchorRow>,
}

impl AnchorDataset {
    /// The table compiled into the crate.
    pub fn embedded() -> Self {
        Self::parse(EMBEDDED).expect("embedded anchor dataset is valid")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let dataset: AnchorDataset = toml::from_str(text)?;
        if dataset.version != DATASET_VERSION {
            return Err(Error::invalid(
                "anchor.version",
                format!("unsupported dataset version {}", dataset.version),
            ));
        }
        for row in &dataset.rows {
            row.validate()?;
        }
        let mut years: Vec<i32> = dataset.rows.iter().map(|r| r.year).collect();
        years.sort_unstable();
        if years.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("anchor", "duplicate year"));
        }
        Ok(dataset)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|err| Error::io(path, &err))?;
        Self::parse(&text)
    }

    pub fn row(&self, year: i32) -> Option<&AnchorRow> {
        self.rows.iter().find(|r| r.year == year)
    }
}

/// `economy_value_usd / (data_volume_zb * 1e15)` in USD per megabyte.
pub fn derive_b0(economy_value_usd: f64, data_volume_zb: f64) -> Result<f64> {
    if !(economy_value_usd > 0.0 && economy_value_usd.is_finite()) {
        return Err(Error::invalid("economy_value_usd", "must be > 0"));
    }
    if !(data_volume_zb > 0.0 && data_volume_zb.is_finite()) {
        return Err(Error::invalid("data_volume_zb", "must be > 0"));
    }
    Ok(economy_value_usd / (data_volume_zb * MB_PER_ZETTABYTE))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Anchor {
    pub year: i32,
    pub b0: f64,
    pub is_projection: bool,
}

/// `b0` for `year`, recomputed from the row inputs rather than the rounded
/// published column.
pub fn anchor_for_year(year: i32, dataset: &AnchorDataset) -> Result<Anchor> {
    let row = dataset.row(year).ok_or(Error::MissingYear(year))?;
    Ok(Anchor {
        year,
        b0: row.b0()?,
        is_projection: row.is_projection,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b
    }

    #[test]
    fn derive_examples() {
        assert!(rel(derive_b0(6.709e12, 175.0).unwrap(), 3.834e-5) < 1e-3);
        assert!(rel(derive_b0(1.151e12, 12.0).unwrap(), 9.59e-5) < 1e-3);
        assert!(rel(derive_b0(1.0, 1e-15).unwrap(), 1.0) < 1e-12);
        assert!(derive_b0(0.0, 1.0).is_err());
        assert!(derive_b0(1.0, -2.0).is_err());
    }

    #[test]
    fn lookups() {
        let data = AnchorDataset::embedded();
        let a = anchor_for_year(2026, &data).unwrap();
        assert!(a.is_projection);
        assert!(rel(a.b0, 3.22e-5) < 0.01, "{}", a.b0);
        let a = anchor_for_year(2024, &data).unwrap();
        assert!(!a.is_projection);
        assert!(rel(a.b0, 4.21e-5) < 0.01);
        let a = anchor_for_year(2035, &data).unwrap();
        assert!(a.is_projection);
        assert!(rel(a.b0, 1.66e-5) < 0.01);
        assert!(matches!(anchor_for_year(2040, &data), Err(Error::MissingYear(2040))));
    }

    #[test]
    fn historical_rows_match_published_column() {
        let data = AnchorDataset::embedded();
        assert_eq!(data.rows.len(), 21);
        for row in data.rows.iter().filter(|r| r.year <= 2025) {
            let published = row.published_b0.unwrap();
            assert!(rel(row.b0().unwrap(), published) < 0.03, "{}", row.year);
        }
    }

    #[test]
    fn projections_decline() {
        let data = AnchorDataset::embedded();
        let projected: Vec<f64> = data
            .rows
            .iter()
            .filter(|r| r.is_projection)
            .map(|r| r.b0().unwrap())
            .collect();
        assert_eq!(projected.len(), 10);
        assert!(projected.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn rejects_bad_files() {
        assert!(AnchorDataset::parse("version = 2\nrow = []").is_err());
        let dup = "version = 1\n[[row]]\nyear = 2020\neconomy_value_usd = 1.0\ngdp_usd = 1.0\n\
                   data_volume_zb = 1.0\nis_projection = false\n[[row]]\nyear = 2020\n\
                   economy_value_usd = 1.0\ngdp_usd = 1.0\ndata_volume_zb = 1.0\nis_projection = false\n";
        assert!(AnchorDataset::parse(dup).is_err());
    }
}
