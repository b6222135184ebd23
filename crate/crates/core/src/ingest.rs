//! Parsing and validation of the survey and social-media observation panels.
//!
//! Both sources share one CSV layout:
//!
//! ```text
//! origin,region,age_group,year,proportion,se,source,wave_id,population_count
//! ```
//!
//! Survey rows carry a standard error on the proportion scale (or, failing
//! that, an effective sample size in `population_count`). Social-media rows
//! carry a `wave_id` and the platform population of the cell.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Column order used when writing panels.
pub const CSV_COLUMNS: [&str; 9] = [
    "origin",
    "region",
    "age_group",
    "year",
    "proportion",
    "se",
    "source",
    "wave_id",
    "population_count",
];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: proportion {value} is outside (0, 1)")]
    BadProportion { row: usize, value: f64 },
    #[error("row {row}: duplicate survey cell (age {age}, year {year}, region {region})")]
    DuplicateSurveyCell {
        row: usize,
        age: AgeGroup,
        year: i32,
        region: String,
    },
    #[error("row {row}: social-media observation without wave_id")]
    MissingWaveId { row: usize },
    #[error("row {row}: survey observation must not carry a wave_id")]
    UnexpectedWaveId { row: usize },
    #[error("row {row}: social-media observation without population_count")]
    MissingPopulationCount { row: usize },
    #[error("row {row}: survey observation needs either `se` or `population_count`")]
    MissingStandardError { row: usize },
    #[error("row {row}: expected source `{expected}`, found `{found}`")]
    SourceMismatch {
        row: usize,
        expected: Source,
        found: Source,
    },
    #[error("row {row}: bad value in column `{column}`: {message}")]
    InvalidField {
        row: usize,
        column: &'static str,
        message: String,
    },
    #[error("row {row}: origin `{found}` differs from panel origin `{expected}`")]
    MixedOrigin {
        row: usize,
        expected: String,
        found: String,
    },
    #[error("origin mismatch: `{survey}` vs `{social}`")]
    OriginMismatch { survey: String, social: String },
    #[error("age grids differ between panels")]
    AgeGridMismatch,
    #[error("domain error: {0}")]
    Domain(String),
}

/// Five-year age band; the grid has nine bands, 15-19 through 55-59.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AgeGroup {
    lower: u8,
}

impl AgeGroup {
    pub const COUNT: usize = 9;
    const FIRST: u32 = 15;
    const LAST: u32 = 55;

    pub fn new(lower_bound: u32) -> Option<Self> {
        if (Self::FIRST..=Self::LAST).contains(&lower_bound) && lower_bound % 5 == 0 {
            Some(Self {
                lower: lower_bound as u8,
            })
        } else {
            None
        }
    }

    /// All nine groups, ordered by lower bound.
    pub fn all() -> Vec<AgeGroup> {
        (Self::FIRST..=Self::LAST)
            .step_by(5)
            .filter_map(AgeGroup::new)
            .collect()
    }

    pub fn lower_bound(self) -> u32 {
        u32::from(self.lower)
    }

    /// Position within [`AgeGroup::all`].
    pub fn index(self) -> usize {
        ((self.lower_bound() - Self::FIRST) / 5) as usize
    }

    pub fn label(self) -> String {
        format!("{}-{}", self.lower, self.lower + 4)
    }
}

impl fmt::Display for AgeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.lower, self.lower + 4)
    }
}

impl FromStr for AgeGroup {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (lo, hi) = s
            .trim()
            .split_once('-')
            .ok_or_else(|| format!("age group `{s}` is not of the form `lo-hi`"))?;
        let lo: u32 = lo.parse().map_err(|_| format!("bad age group `{s}`"))?;
        let hi: u32 = hi.parse().map_err(|_| format!("bad age group `{s}`"))?;
        match AgeGroup::new(lo) {
            Some(g) if hi == lo + 4 => Ok(g),
            _ => Err(format!("unknown age group `{s}` (expected 15-19 .. 55-59)")),
        }
    }
}

impl TryFrom<String> for AgeGroup {
    type Error = String;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<AgeGroup> for String {
    fn from(value: AgeGroup) -> Self {
        value.label()
    }
}

/// Destination region, identified by its code.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Region {
    pub code: String,
    pub name: String,
}

impl Region {
    pub fn new(code: impl Into<String>) -> Self {
        let code = code.into();
        Self {
            name: code.clone(),
            code,
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Survey,
    #[serde(rename = "social")]
    SocialMedia,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Survey => "survey",
            Source::SocialMedia => "social",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "survey" => Ok(Source::Survey),
            "social" => Ok(Source::SocialMedia),
            other => Err(format!("unknown source `{other}` (expected survey or social)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub age: AgeGroup,
    pub year: i32,
    pub region: Region,
    pub proportion: f64,
    pub se_proportion: Option<f64>,
    pub source: Source,
    pub wave_id: Option<u32>,
    pub population_count: Option<u64>,
}

impl Observation {
    pub fn survey(age: AgeGroup, year: i32, region: Region, proportion: f64, se: f64) -> Self {
        Self {
            age,
            year,
            region,
            proportion,
            se_proportion: Some(se),
            source: Source::Survey,
            wave_id: None,
            population_count: None,
        }
    }

    pub fn social(
        age: AgeGroup,
        year: i32,
        region: Region,
        proportion: f64,
        wave_id: u32,
        population_count: u64,
    ) -> Self {
        Self {
            age,
            year,
            region,
            proportion,
            se_proportion: None,
            source: Source::SocialMedia,
            wave_id: Some(wave_id),
            population_count: Some(population_count),
        }
    }

    /// Variance of the logged proportion.
    ///
    /// Survey rows use the delta method on `se`, or the binomial variance
    /// with `population_count` as effective sample size when `se` is absent.
    /// Social rows return the binomial sampling variance `p(1-p)/N`.
    pub fn sampling_variance(&self) -> Result<f64, IngestError> {
        match self.source {
            Source::Survey => match (self.se_proportion, self.population_count) {
                (Some(se), _) => log_scale_variance(self.proportion, se),
                (None, Some(n)) => {
                    let var = sampling_variance_social(self.proportion, n)?;
                    log_scale_variance(self.proportion, var.sqrt())
                }
                (None, None) => Err(IngestError::Domain(
                    "survey observation without standard error or sample size".into(),
                )),
            },
            Source::SocialMedia => {
                let n = self.population_count.ok_or_else(|| {
                    IngestError::Domain("social observation without population_count".into())
                })?;
                sampling_variance_social(self.proportion, n)
            }
        }
    }

    fn check(&self, row: usize) -> Result<(), IngestError> {
        if !(self.proportion > 0.0 && self.proportion < 1.0) {
            return Err(IngestError::BadProportion {
                row,
                value: self.proportion,
            });
        }
        if let Some(se) = self.se_proportion {
            if !se.is_finite() || se < 0.0 {
                return Err(IngestError::InvalidField {
                    row,
                    column: "se",
                    message: format!("standard error {se} must be finite and non-negative"),
                });
            }
        }
        if self.population_count == Some(0) {
            return Err(IngestError::InvalidField {
                row,
                column: "population_count",
                message: "must be positive".into(),
            });
        }
        match self.source {
            Source::Survey => {
                if self.wave_id.is_some() {
                    return Err(IngestError::UnexpectedWaveId { row });
                }
                if self.se_proportion.is_none() && self.population_count.is_none() {
                    return Err(IngestError::MissingStandardError { row });
                }
            }
            Source::SocialMedia => {
                if self.wave_id.is_none() {
                    return Err(IngestError::MissingWaveId { row });
                }
                if self.population_count.is_none() {
                    return Err(IngestError::MissingPopulationCount { row });
                }
            }
        }
        Ok(())
    }
}

/// Binomial sampling variance `p(1-p)/N` on the proportion scale.
pub fn sampling_variance_social(proportion: f64, population_count: u64) -> Result<f64, IngestError> {
    if !(proportion > 0.0 && proportion < 1.0) {
        return Err(IngestError::Domain(format!(
            "proportion {proportion} outside (0, 1)"
        )));
    }
    if population_count == 0 {
        return Err(IngestError::Domain("population count must be positive".into()));
    }
    Ok(proportion * (1.0 - proportion) / population_count as f64)
}

/// Delta-method variance of `log p`: `(se / p)^2`.
pub fn log_scale_variance(proportion: f64, se_proportion: f64) -> Result<f64, IngestError> {
    if !(proportion > 0.0) || !proportion.is_finite() {
        return Err(IngestError::Domain(format!(
            "log-scale variance needs a positive proportion, got {proportion}"
        )));
    }
    if !(se_proportion >= 0.0) || !se_proportion.is_finite() {
        return Err(IngestError::Domain(format!(
            "standard error {se_proportion} must be finite and non-negative"
        )));
    }
    let ratio = se_proportion / proportion;
    Ok(ratio * ratio)
}

/// Observations of one migrant origin from one or both sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigrantPanel {
    origin: String,
    observations: Vec<Observation>,
    year_range: Option<(i32, i32)>,
}

impl MigrantPanel {
    /// Validates every observation; errors carry the 1-based observation index.
    pub fn new(origin: impl Into<String>, observations: Vec<Observation>) -> Result<Self, IngestError> {
        Self::from_rows(origin.into(), observations.into_iter().enumerate().map(|(i, o)| (i + 1, o)))
    }

    pub fn empty(origin: impl Into<String>) -> Self {
        Self {
            origin: origin.into(),
            observations: Vec::new(),
            year_range: None,
        }
    }

    fn from_rows(
        origin: String,
        rows: impl IntoIterator<Item = (usize, Observation)>,
    ) -> Result<Self, IngestError> {
        let mut survey_cells = HashSet::new();
        let mut observations = Vec::new();
        for (row, obs) in rows {
            obs.check(row)?;
            if obs.source == Source::Survey
                && !survey_cells.insert((obs.age, obs.year, obs.region.code.clone()))
            {
                return Err(IngestError::DuplicateSurveyCell {
                    row,
                    age: obs.age,
                    year: obs.year,
                    region: obs.region.code.clone(),
                });
            }
            observations.push(obs);
        }
        let year_range = observations
            .iter()
            .map(|o| o.year)
            .fold(None, |acc: Option<(i32, i32)>, y| match acc {
                None => Some((y, y)),
                Some((lo, hi)) => Some((lo.min(y), hi.max(y))),
            });
        Ok(Self {
            origin,
            observations,
            year_range,
        })
    }

    pub fn origin(&self) -> &str {
        &self.origin
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// `(min_year, max_year)`, or `None` for an empty panel.
    pub fn year_range(&self) -> Option<(i32, i32)> {
        self.year_range
    }

    pub fn ages(&self) -> BTreeSet<AgeGroup> {
        self.observations.iter().map(|o| o.age).collect()
    }

    pub fn regions(&self) -> BTreeSet<Region> {
        self.observations.iter().map(|o| o.region.clone()).collect()
    }

    pub fn years(&self) -> BTreeSet<i32> {
        self.observations.iter().map(|o| o.year).collect()
    }

    pub fn wave_ids(&self) -> BTreeSet<u32> {
        self.observations.iter().filter_map(|o| o.wave_id).collect()
    }

    /// Sub-panel of observations satisfying `keep`. Filtering cannot break
    /// panel invariants, so this never fails.
    pub fn filter(&self, keep: impl Fn(&Observation) -> bool) -> MigrantPanel {
        let observations: Vec<_> = self.observations.iter().filter(|o| keep(o)).cloned().collect();
        Self::from_rows(self.origin.clone(), observations.into_iter().enumerate())
            .expect("subset of a valid panel is valid")
    }

    pub fn source_only(&self, source: Source) -> MigrantPanel {
        self.filter(|o| o.source == source)
    }

    pub fn in_years(&self, first: i32, last: i32) -> MigrantPanel {
        self.filter(|o| o.year >= first && o.year <= last)
    }

    /// Social-media observations of the lowest wave id.
    pub fn first_wave(&self) -> MigrantPanel {
        match self.wave_ids().into_iter().next() {
            Some(first) => self.filter(|o| o.wave_id == Some(first)),
            None => self.filter(|_| false),
        }
    }
}

struct ColumnMap {
    origin: usize,
    region: usize,
    age_group: usize,
    year: usize,
    proportion: usize,
    se: usize,
    source: usize,
    wave_id: usize,
    population_count: usize,
}

impl ColumnMap {
    fn from_headers(headers: &csv::StringRecord) -> Result<Self, IngestError> {
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
        };
        Ok(Self {
            origin: find("origin")?,
            region: find("region")?,
            age_group: find("age_group")?,
            year: find("year")?,
            proportion: find("proportion")?,
            se: find("se")?,
            source: find("source")?,
            wave_id: find("wave_id")?,
            population_count: find("population_count")?,
        })
    }
}

fn field<'r>(record: &'r csv::StringRecord, idx: usize) -> &'r str {
    record.get(idx).map(str::trim).unwrap_or("")
}

fn parse_required<T: FromStr>(
    record: &csv::StringRecord,
    idx: usize,
    row: usize,
    column: &'static str,
) -> Result<T, IngestError>
where
    T::Err: fmt::Display,
{
    let raw = field(record, idx);
    if raw.is_empty() {
        return Err(IngestError::InvalidField {
            row,
            column,
            message: "empty value".into(),
        });
    }
    raw.parse().map_err(|e: T::Err| IngestError::InvalidField {
        row,
        column,
        message: e.to_string(),
    })
}

fn parse_optional<T: FromStr>(
    record: &csv::StringRecord,
    idx: usize,
    row: usize,
    column: &'static str,
) -> Result<Option<T>, IngestError>
where
    T::Err: fmt::Display,
{
    if field(record, idx).is_empty() {
        Ok(None)
    } else {
        parse_required(record, idx, row, column).map(Some)
    }
}

/// Reads a panel from CSV. Row numbers in errors are file line numbers
/// (the header is line 1).
pub fn read_panel<R: Read>(reader: R, source_kind: Source) -> Result<MigrantPanel, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let cols = ColumnMap::from_headers(rdr.headers()?)?;
    let mut origin: Option<String> = None;
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(i + 2);
        let row_origin = field(&record, cols.origin).to_string();
        match &origin {
            None => origin = Some(row_origin),
            Some(o) if *o != row_origin => {
                return Err(IngestError::MixedOrigin {
                    row,
                    expected: o.clone(),
                    found: row_origin,
                })
            }
            Some(_) => {}
        }
        let source: Source = parse_required(&record, cols.source, row, "source")?;
        if source != source_kind {
            return Err(IngestError::SourceMismatch {
                row,
                expected: source_kind,
                found: source,
            });
        }
        let region = field(&record, cols.region);
        if region.is_empty() {
            return Err(IngestError::InvalidField {
                row,
                column: "region",
                message: "empty value".into(),
            });
        }
        let obs = Observation {
            age: parse_required(&record, cols.age_group, row, "age_group")?,
            year: parse_required(&record, cols.year, row, "year")?,
            region: Region::new(region),
            proportion: parse_required(&record, cols.proportion, row, "proportion")?,
            se_proportion: parse_optional(&record, cols.se, row, "se")?,
            source,
            wave_id: parse_optional(&record, cols.wave_id, row, "wave_id")?,
            population_count: parse_optional(&record, cols.population_count, row, "population_count")?,
        };
        rows.push((row, obs));
    }
    MigrantPanel::from_rows(origin.unwrap_or_default(), rows)
}

pub fn parse_panel(path: impl AsRef<Path>, source_kind: Source) -> Result<MigrantPanel, IngestError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_panel(std::io::BufReader::new(file), source_kind)
}

fn opt_to_string<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes a panel in the ingest CSV layout. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_panel<W: Write>(panel: &MigrantPanel, writer: W) -> Result<(), IngestError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(CSV_COLUMNS)?;
    for o in panel.observations() {
        wtr.write_record([
            panel.origin().to_string(),
            o.region.code.clone(),
            o.age.label(),
            o.year.to_string(),
            o.proportion.to_string(),
            opt_to_string(o.se_proportion),
            o.source.as_str().to_string(),
            opt_to_string(o.wave_id),
            opt_to_string(o.population_count),
        ])?;
    }
    wtr.flush().map_err(|e| IngestError::Csv(e.into()))?;
    Ok(())
}

/// Merges a survey and a social-media panel of the same origin and age grid.
pub fn align(survey: &MigrantPanel, social: &MigrantPanel) -> Result<MigrantPanel, IngestError> {
    if survey.origin() != social.origin() && !survey.is_empty() && !social.is_empty() {
        return Err(IngestError::OriginMismatch {
            survey: survey.origin().to_string(),
            social: social.origin().to_string(),
        });
    }
    if !survey.is_empty() && !social.is_empty() && survey.ages() != social.ages() {
        return Err(IngestError::AgeGridMismatch);
    }
    let origin = if survey.is_empty() {
        social.origin()
    } else {
        survey.origin()
    };
    let rows = survey
        .observations()
        .iter()
        .chain(social.observations())
        .cloned()
        .enumerate()
        .map(|(i, o)| (i + 1, o));
    MigrantPanel::from_rows(origin.to_string(), rows)
}
