//! Long-format panel ingestion, outcome resolution and growth tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::ops::RangeInclusive;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::countries::normalize_unit;
use crate::error::{Error, Result};
use crate::fmt::sig6;

/// Column mapping from a CSV extract onto panel series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSchema {
    pub unit_column: String,
    pub year_column: String,
    /// Series name -> CSV column name.
    pub series: BTreeMap<String, String>,
    /// Tokens read as missing in addition to the empty field.
    #[serde(default)]
    pub missing_tokens: Vec<String>,
    /// Map country names and codes onto ISO alpha-3.
    #[serde(default)]
    pub normalize_units: bool,
}

impl PanelSchema {
    pub fn new<I, S>(unit_column: &str, year_column: &str, series: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            unit_column: unit_column.into(),
            year_column: year_column.into(),
            series: series
                .into_iter()
                .map(|s| {
                    let s = s.into();
                    (s.clone(), s)
                })
                .collect(),
            missing_tokens: Vec::new(),
            normalize_units: false,
        }
    }

    /// Column names of the Jordà-Schularick-Taylor macrohistory extract.
    pub fn jst() -> Self {
        let mut schema = Self::new(
            "iso",
            "year",
            ["rgdppc", "gdp", "imports", "revenue", "expenditure"],
        );
        schema.missing_tokens = vec!["NA".into(), ".".into()];
        schema.normalize_units = true;
        schema
    }

    fn validate(&self) -> Result<()> {
        if self.unit_column.is_empty() || self.year_column.is_empty() {
            return Err(Error::Config("schema must name unit and year columns".into()));
        }
        if self.series.is_empty() {
            return Err(Error::Config("schema must name at least one outcome column".into()));
        }
        Ok(())
    }
}

impl Default for PanelSchema {
    fn default() -> Self {
        Self::jst()
    }
}

/// Immutable unit x year x series store. Rows absent from the source and
/// explicitly empty cells both read as missing; only the latter count as
/// missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    units: Vec<String>,
    years: Vec<i32>,
    series: Vec<String>,
    rows: BTreeMap<(usize, usize), Vec<Option<f64>>>,
}

pub type Record = (String, i32, Vec<Option<f64>>);

impl PanelDataset {
    /// Builds a dataset from `(unit, year, values)` records whose values are
    /// ordered like `series`.
    pub fn from_records<S: Into<String>>(
        series: impl IntoIterator<Item = S>,
        records: impl IntoIterator<Item = Record>,
    ) -> Result<Self> {
        let series: Vec<String> = series.into_iter().map(Into::into).collect();
        let unique: BTreeSet<&String> = series.iter().collect();
        if unique.len() != series.len() {
            return Err(Error::Config("duplicate series name".into()));
        }
        let records: Vec<Record> = records.into_iter().collect();
        let units: Vec<String> = records
            .iter()
            .map(|(u, _, _)| u.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let years: Vec<i32> = records
            .iter()
            .map(|(_, y, _)| *y)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();

        let mut rows = BTreeMap::new();
        for (unit, year, values) in records {
            if values.len() != series.len() {
                return Err(Error::Data(format!(
                    "{unit} {year}: expected {} values, got {}",
                    series.len(),
                    values.len()
                )));
            }
            if let Some(v) = values.iter().flatten().find(|v| !v.is_finite()) {
                return Err(Error::Data(format!("{unit} {year}: non-finite value {v}")));
            }
            let key = (
                units.binary_search(&unit).expect("unit collected above"),
                years.binary_search(&year).expect("year collected above"),
            );
            if rows.insert(key, values).is_some() {
                return Err(Error::DuplicateKey { unit, year });
            }
        }
        Ok(Self { units, years, series, rows })
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn series_names(&self) -> &[String] {
        &self.series
    }

    pub fn has_unit(&self, unit: &str) -> bool {
        self.unit_idx(unit).is_some()
    }

    pub fn has_series(&self, series: &str) -> bool {
        self.series_idx(series).is_some()
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    /// Explicitly missing cells among the rows present in the source.
    pub fn missing_cells(&self) -> usize {
        self.rows.values().flatten().filter(|v| v.is_none()).count()
    }

    fn unit_idx(&self, unit: &str) -> Option<usize> {
        self.units.iter().position(|u| u == unit)
    }

    fn series_idx(&self, series: &str) -> Option<usize> {
        self.series.iter().position(|s| s == series)
    }

    /// Raw cell lookup. Unknown unit or series is an error; a year outside the
    /// dataset or an absent row reads as missing.
    pub fn value(&self, unit: &str, year: i32, series: &str) -> Result<Option<f64>> {
        let u = self
            .unit_idx(unit)
            .ok_or_else(|| Error::UnknownUnit(unit.to_string()))?;
        let s = self
            .series_idx(series)
            .ok_or_else(|| Error::UnknownSeries(series.to_string()))?;
        let Ok(y) = self.years.binary_search(&year) else {
            return Ok(None);
        };
        Ok(self.rows.get(&(u, y)).and_then(|row| row[s]))
    }

    /// Returns a copy with every value of `series` multiplied by `factor`.
    pub fn scaled_series(&self, series: &str, factor: f64) -> Result<Self> {
        let s = self
            .series_idx(series)
            .ok_or_else(|| Error::UnknownSeries(series.to_string()))?;
        let mut out = self.clone();
        for row in out.rows.values_mut() {
            if let Some(v) = row[s].as_mut() {
                *v *= factor;
            }
        }
        Ok(out)
    }

    /// Returns a copy with units renamed through `rename`.
    pub fn relabeled(&self, rename: impl Fn(&str) -> String) -> Result<Self> {
        let records = self.rows.iter().map(|(&(u, y), values)| {
            (rename(&self.units[u]), self.years[y], values.clone())
        });
        Self::from_records(self.series.clone(), records)
    }

    /// Writes the panel back out in long format. Values use the shortest
    /// representation that parses back to the same `f64`.
    pub fn write_csv<W: Write>(&self, schema: &PanelSchema, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let columns: Vec<(usize, &String)> = schema
            .series
            .iter()
            .filter_map(|(name, col)| self.series_idx(name).map(|i| (i, col)))
            .collect();
        let mut header = vec![schema.unit_column.as_str(), schema.year_column.as_str()];
        header.extend(columns.iter().map(|(_, c)| c.as_str()));
        out.write_record(&header)?;
        for (&(u, y), values) in &self.rows {
            let mut record = vec![self.units[u].clone(), self.years[y].to_string()];
            record.extend(
                columns
                    .iter()
                    .map(|(i, _)| values[*i].map(|v| v.to_string()).unwrap_or_default()),
            );
            out.write_record(&record)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Loads a long-format CSV panel from disk.
pub fn load_panel(path: impl AsRef<Path>, schema: &PanelSchema) -> Result<PanelDataset> {
    read_panel(File::open(path)?, schema)
}

pub fn read_panel<R: Read>(reader: R, schema: &PanelSchema) -> Result<PanelDataset> {
    schema.validate()?;
    let mut csv = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("column `{name}` not found in header")))
    };
    let unit_col = column(&schema.unit_column)?;
    let year_col = column(&schema.year_column)?;
    let series: Vec<(&String, &String, usize)> = schema
        .series
        .iter()
        .map(|(name, col)| column(col).map(|idx| (name, col, idx)))
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    for row in csv.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or_default();
        let raw_unit = &row[unit_col];
        if raw_unit.is_empty() {
            return Err(Error::Data(format!("line {line}: empty unit identifier")));
        }
        let unit = if schema.normalize_units {
            normalize_unit(raw_unit)
        } else {
            raw_unit.to_string()
        };
        let year: i32 = row[year_col].parse().map_err(|_| Error::BadYear {
            line,
            value: row[year_col].to_string(),
        })?;
        let mut values = Vec::with_capacity(series.len());
        for (_, col, idx) in &series {
            let field = &row[*idx];
            if field.is_empty() || schema.missing_tokens.iter().any(|t| t == field) {
                values.push(None);
                continue;
            }
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(Some(v)),
                _ => {
                    return Err(Error::NonNumeric {
                        line,
                        column: (*col).clone(),
                        value: field.to_string(),
                    })
                }
            }
        }
        records.push((unit, year, values));
    }
    PanelDataset::from_records(series.iter().map(|(name, _, _)| (*name).clone()), records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Level,
    /// 100 x numerator / denominator.
    ShareOfGdp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub name: String,
    pub kind: OutcomeKind,
    pub numerator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub denominator: Option<String>,
}

impl OutcomeSpec {
    pub fn level(name: &str, series: &str) -> Self {
        Self {
            name: name.into(),
            kind: OutcomeKind::Level,
            numerator: series.into(),
            denominator: None,
        }
    }

    pub fn share_of_gdp(name: &str, numerator: &str, denominator: &str) -> Self {
        Self {
            name: name.into(),
            kind: OutcomeKind::ShareOfGdp,
            numerator: numerator.into(),
            denominator: Some(denominator.into()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, &self.denominator) {
            (OutcomeKind::Level, None) | (OutcomeKind::ShareOfGdp, Some(_)) => Ok(()),
            (OutcomeKind::Level, Some(_)) => Err(Error::Config(format!(
                "outcome `{}`: a level outcome takes no denominator",
                self.name
            ))),
            (OutcomeKind::ShareOfGdp, None) => Err(Error::Config(format!(
                "outcome `{}`: share-of-GDP requires a denominator",
                self.name
            ))),
        }
    }

    /// Raw series this outcome reads.
    pub fn series(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.numerator.as_str()).chain(self.denominator.as_deref())
    }
}

/// Resolves the outcome value for one unit-year; `None` when an input cell is
/// missing.
pub fn resolve_outcome(
    data: &PanelDataset,
    spec: &OutcomeSpec,
    unit: &str,
    year: i32,
) -> Result<Option<f64>> {
    spec.validate()?;
    if !data.has_unit(unit) {
        return Err(Error::UnknownUnit(unit.to_string()));
    }
    if data.years().binary_search(&year).is_err() {
        return Err(Error::UnknownYear(year));
    }
    let numerator = data.value(unit, year, &spec.numerator)?;
    match (spec.kind, spec.denominator.as_deref()) {
        (OutcomeKind::Level, _) => Ok(numerator),
        (OutcomeKind::ShareOfGdp, Some(den)) => {
            let denominator = data.value(unit, year, den)?;
            match (numerator, denominator) {
                (Some(_), Some(d)) if d == 0.0 => Err(Error::ZeroDenominator {
                    series: den.to_string(),
                    unit: unit.to_string(),
                    year,
                }),
                (Some(n), Some(d)) => Ok(Some(100.0 * n / d)),
                _ => Ok(None),
            }
        }
        (OutcomeKind::ShareOfGdp, None) => unreachable!("validated above"),
    }
}

/// One growth-table cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GrowthCell {
    Value(f64),
    Missing,
    /// Previous-year level was zero.
    Undefined,
}

impl GrowthCell {
    pub fn value(self) -> Option<f64> {
        match self {
            GrowthCell::Value(v) => Some(v),
            _ => None,
        }
    }

    fn render(self) -> String {
        match self {
            GrowthCell::Value(v) => sig6(v),
            GrowthCell::Missing => String::new(),
            GrowthCell::Undefined => "undefined".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthRow {
    pub unit: String,
    pub cells: Vec<GrowthCell>,
}

/// Year-over-year percent growth per unit plus a row for the cross-unit sum.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthTable {
    pub series: String,
    /// Years a growth rate is reported for (the first year of the range has none).
    pub years: Vec<i32>,
    pub rows: Vec<GrowthRow>,
    pub total: Vec<GrowthCell>,
}

fn growth(prev: Option<f64>, cur: Option<f64>) -> GrowthCell {
    match (prev, cur) {
        (Some(p), Some(_)) if p == 0.0 => GrowthCell::Undefined,
        (Some(p), Some(c)) => GrowthCell::Value(100.0 * (c - p) / p),
        _ => GrowthCell::Missing,
    }
}

pub fn growth_table(
    data: &PanelDataset,
    series: &str,
    units: &[String],
    years: RangeInclusive<i32>,
) -> Result<GrowthTable> {
    if !data.has_series(series) {
        return Err(Error::UnknownSeries(series.to_string()));
    }
    let levels: Vec<Vec<Option<f64>>> = units
        .iter()
        .map(|u| years.clone().map(|y| data.value(u, y, series)).collect())
        .collect::<Result<_>>()?;
    let totals: Vec<Option<f64>> = (0..years.clone().count())
        .map(|t| levels.iter().map(|row| row[t]).sum::<Option<f64>>())
        .collect();
    let rates = |row: &[Option<f64>]| -> Vec<GrowthCell> {
        row.windows(2).map(|w| growth(w[0], w[1])).collect()
    };
    Ok(GrowthTable {
        series: series.to_string(),
        years: years.clone().skip(1).collect(),
        rows: units
            .iter()
            .zip(&levels)
            .map(|(unit, row)| GrowthRow {
                unit: unit.clone(),
                cells: rates(row),
            })
            .collect(),
        total: rates(&totals),
    })
}

impl GrowthTable {
    /// Wide CSV: one column per year, one row per unit, `Total` last.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["unit".to_string()];
        header.extend(self.years.iter().map(|y| y.to_string()));
        out.write_record(&header)?;
        let all_rows = self
            .rows
            .iter()
            .map(|r| (r.unit.as_str(), &r.cells))
            .chain(std::iter::once(("Total", &self.total)));
        for (unit, cells) in all_rows {
            let mut record = vec![unit.to_string()];
            record.extend(cells.iter().map(|c| c.render()));
            out.write_record(&record)?;
        }
        out.flush()?;
        Ok(())
    }
}
