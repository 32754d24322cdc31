//! Observed-data representation: schema, validated dataset, covariate scaling
//! and CSV ingestion.
//!
//! Covariates are always stored binary-first, in the order the schema lists
//! them within each kind. Every downstream component (design rows, covariate
//! kernels, draws files) relies on that single ordering.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    Binary,
    Continuous,
}

impl VariableKind {
    pub fn is_continuous(self) -> bool {
        self == VariableKind::Continuous
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    pub kind: VariableKind,
}

impl CovariateSpec {
    pub fn binary(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: VariableKind::Binary,
        }
    }

    pub fn continuous(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: VariableKind::Continuous,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SchemaRepr", into = "SchemaRepr")]
pub struct VariableSchema {
    outcome_name: String,
    outcome_kind: VariableKind,
    treatment_name: String,
    treatment_levels: usize,
    covariates: Vec<CovariateSpec>,
    p_binary: usize,
}

#[derive(Serialize, Deserialize)]
struct SchemaRepr {
    outcome_name: String,
    outcome_kind: VariableKind,
    treatment_name: String,
    treatment_levels: usize,
    covariates: Vec<CovariateSpec>,
}

impl TryFrom<SchemaRepr> for VariableSchema {
    type Error = Error;

    fn try_from(r: SchemaRepr) -> Result<Self> {
        VariableSchema::new(
            r.outcome_name,
            r.outcome_kind,
            r.treatment_name,
            r.treatment_levels,
            r.covariates,
        )
    }
}

impl From<VariableSchema> for SchemaRepr {
    fn from(s: VariableSchema) -> Self {
        SchemaRepr {
            outcome_name: s.outcome_name,
            outcome_kind: s.outcome_kind,
            treatment_name: s.treatment_name,
            treatment_levels: s.treatment_levels,
            covariates: s.covariates,
        }
    }
}

impl VariableSchema {
    /// Validates the schema and reorders covariates binary-first (stable
    /// within each kind).
    pub fn new(
        outcome_name: impl Into<String>,
        outcome_kind: VariableKind,
        treatment_name: impl Into<String>,
        treatment_levels: usize,
        covariates: Vec<CovariateSpec>,
    ) -> Result<Self> {
        let outcome_name = outcome_name.into();
        let treatment_name = treatment_name.into();
        if treatment_levels < 2 {
            return Err(Error::Validation(format!(
                "treatment must have at least 2 levels, got {treatment_levels}"
            )));
        }
        let mut seen = HashSet::new();
        for name in std::iter::once(&outcome_name)
            .chain(std::iter::once(&treatment_name))
            .chain(covariates.iter().map(|c| &c.name))
        {
            if !seen.insert(name.as_str()) {
                return Err(Error::Validation(format!("duplicate variable name `{name}`")));
            }
        }
        let (mut ordered, continuous): (Vec<_>, Vec<_>) = covariates
            .into_iter()
            .partition(|c| c.kind == VariableKind::Binary);
        let p_binary = ordered.len();
        ordered.extend(continuous);
        Ok(Self {
            outcome_name,
            outcome_kind,
            treatment_name,
            treatment_levels,
            covariates: ordered,
            p_binary,
        })
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome_name
    }

    pub fn outcome_kind(&self) -> VariableKind {
        self.outcome_kind
    }

    pub fn treatment_name(&self) -> &str {
        &self.treatment_name
    }

    pub fn treatment_levels(&self) -> usize {
        self.treatment_levels
    }

    pub fn covariates(&self) -> &[CovariateSpec] {
        &self.covariates
    }

    pub fn p(&self) -> usize {
        self.covariates.len()
    }

    pub fn p_binary(&self) -> usize {
        self.p_binary
    }

    pub fn p_continuous(&self) -> usize {
        self.covariates.len() - self.p_binary
    }

    /// Length of the design row `(1, treatment indicators, covariates)`.
    pub fn design_dim(&self) -> usize {
        1 + (self.treatment_levels - 1) + self.p()
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariates.iter().position(|c| c.name == name)
    }

    pub fn is_binary(&self, r: usize) -> bool {
        r < self.p_binary
    }
}

/// A validated sample of `(y, a, l)` with a missingness mask on `l`.
///
/// `l` is row-major `n x p`; missing entries hold `NaN`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    schema: VariableSchema,
    y: Vec<f64>,
    a: Vec<usize>,
    l: Vec<f64>,
    missing: Vec<bool>,
}

impl Dataset {
    /// Builds a dataset from covariate values where `None` marks a missing
    /// entry. Rows of `l` follow the schema's covariate order.
    pub fn new(
        schema: VariableSchema,
        y: Vec<f64>,
        a: Vec<usize>,
        rows: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        let n = y.len();
        let p = schema.p();
        if a.len() != n || rows.len() != n {
            return Err(Error::Validation(format!(
                "length mismatch: y has {n}, a has {}, l has {} rows",
                a.len(),
                rows.len()
            )));
        }
        let mut l = Vec::with_capacity(n * p);
        let mut missing = Vec::with_capacity(n * p);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != p {
                return Err(Error::Validation(format!(
                    "row {i} has {} covariates, schema has {p}",
                    row.len()
                )));
            }
            for v in row {
                missing.push(v.is_none());
                l.push(v.unwrap_or(f64::NAN));
            }
        }
        Self::from_parts(schema, y, a, l, missing)
    }

    pub(crate) fn from_parts(
        schema: VariableSchema,
        y: Vec<f64>,
        a: Vec<usize>,
        l: Vec<f64>,
        missing: Vec<bool>,
    ) -> Result<Self> {
        let d = Self {
            schema,
            y,
            a,
            l,
            missing,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        let p = self.schema.p();
        if self.a.len() != n || self.l.len() != n * p || self.missing.len() != n * p {
            return Err(Error::Validation("inconsistent dataset dimensions".into()));
        }
        let outcome = self.schema.outcome_name();
        for (i, &y) in self.y.iter().enumerate() {
            if !y.is_finite() {
                return Err(Error::Validation(format!("missing or non-finite outcome `{outcome}` in row {i}")));
            }
            if self.schema.outcome_kind() == VariableKind::Binary && y != 0.0 && y != 1.0 {
                return Err(Error::Validation(format!(
                    "binary outcome `{outcome}` has value {y} in row {i}"
                )));
            }
        }
        let q = self.schema.treatment_levels();
        if let Some(i) = self.a.iter().position(|&a| a >= q) {
            return Err(Error::Validation(format!(
                "treatment `{}` has level {} outside 0..{q} in row {i}",
                self.schema.treatment_name(),
                self.a[i]
            )));
        }
        for i in 0..n {
            for r in 0..p {
                let v = self.l[i * p + r];
                let name = &self.schema.covariates()[r].name;
                if self.missing[i * p + r] {
                    if !v.is_nan() {
                        return Err(Error::Validation(format!(
                            "covariate `{name}` row {i} is masked missing but holds a value"
                        )));
                    }
                    continue;
                }
                if !v.is_finite() {
                    return Err(Error::Validation(format!(
                        "covariate `{name}` row {i} is non-finite but not masked"
                    )));
                }
                if self.schema.is_binary(r) && v != 0.0 && v != 1.0 {
                    return Err(Error::Validation(format!(
                        "binary covariate `{name}` has value {v} in row {i}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> &VariableSchema {
        &self.schema
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.schema.p()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn a(&self) -> &[usize] {
        &self.a
    }

    /// Row-major covariate matrix, `NaN` at missing entries.
    pub fn l(&self) -> &[f64] {
        &self.l
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.l[i * p..(i + 1) * p]
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing
    }

    pub fn is_missing(&self, i: usize, r: usize) -> bool {
        self.missing[i * self.p() + r]
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    /// Missing cells `(row, covariate)` in row-major order.
    pub fn missing_cells(&self) -> Vec<(usize, usize)> {
        let p = self.p();
        self.missing
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(k, _)| (k / p, k % p))
            .collect()
    }

    /// Marks entries missing wherever `mask` is true (existing gaps stay).
    pub fn with_additional_missing(&self, mask: &[bool]) -> Result<Self> {
        if mask.len() != self.missing.len() {
            return Err(Error::Validation("mask size mismatch".into()));
        }
        let mut out = self.clone();
        for (idx, &m) in mask.iter().enumerate() {
            if m {
                out.missing[idx] = true;
                out.l[idx] = f64::NAN;
            }
        }
        Ok(out)
    }

    /// Copy with every missing entry filled by its column's observed mean,
    /// rounded to the nearer level for binary columns; 0 for a column with
    /// no observed entry. The result has no missing entries.
    pub fn mean_filled(&self) -> Self {
        let (n, p) = (self.n(), self.p());
        let mut out = self.clone();
        for r in 0..p {
            let observed: Vec<f64> = (0..n).filter(|&i| !self.is_missing(i, r)).map(|i| self.l[i * p + r]).collect();
            let mut fill = if observed.is_empty() { 0.0 } else { crate::math::mean(&observed) };
            if self.schema.is_binary(r) {
                fill = f64::from(u8::from(fill >= 0.5));
            }
            for i in 0..n {
                if self.is_missing(i, r) {
                    out.l[i * p + r] = fill;
                    out.missing[i * p + r] = false;
                }
            }
        }
        out
    }

    /// Keeps only the rows listed in `rows` (in that order, repeats allowed).
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let p = self.p();
        let mut l = Vec::with_capacity(rows.len() * p);
        let mut missing = Vec::with_capacity(rows.len() * p);
        for &i in rows {
            l.extend_from_slice(self.row(i));
            missing.extend_from_slice(&self.missing[i * p..(i + 1) * p]);
        }
        Self {
            schema: self.schema.clone(),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            a: rows.iter().map(|&i| self.a[i]).collect(),
            l,
            missing,
        }
    }
}

/// Observed-entry mean and standard deviation of each continuous covariate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub columns: Vec<ColumnScaling>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub name: String,
    /// Index of the column in the covariate ordering.
    pub index: usize,
    pub mean: f64,
    pub sd: f64,
}

impl ScalingParams {
    pub fn identity(schema: &VariableSchema) -> Self {
        Self {
            columns: (schema.p_binary()..schema.p())
                .map(|r| ColumnScaling {
                    name: schema.covariates()[r].name.clone(),
                    index: r,
                    mean: 0.0,
                    sd: 1.0,
                })
                .collect(),
        }
    }

    fn find(&self, r: usize) -> Option<&ColumnScaling> {
        self.columns.iter().find(|c| c.index == r)
    }

    /// Maps an original-scale value of covariate `r` to the model scale.
    /// Binary covariates pass through.
    pub fn forward(&self, r: usize, value: f64) -> f64 {
        match self.find(r) {
            Some(c) => (value - c.mean) / c.sd,
            None => value,
        }
    }

    pub fn inverse(&self, r: usize, value: f64) -> f64 {
        match self.find(r) {
            Some(c) => value * c.sd + c.mean,
            None => value,
        }
    }

    pub fn unstandardize(&self, d: &Dataset) -> Dataset {
        let mut out = d.clone();
        let p = d.p();
        for i in 0..d.n() {
            for r in 0..p {
                let v = &mut out.l[i * p + r];
                if !v.is_nan() {
                    *v = self.inverse(r, *v);
                }
            }
        }
        out
    }
}

/// Standardizes every continuous covariate to observed-entry mean 0 and
/// sample standard deviation 1.
pub fn standardize_continuous(d: &Dataset) -> Result<(Dataset, ScalingParams)> {
    let schema = d.schema();
    let p = d.p();
    let mut out = d.clone();
    let mut columns = Vec::with_capacity(schema.p_continuous());
    for r in schema.p_binary()..p {
        let name = &schema.covariates()[r].name;
        let observed: Vec<f64> = (0..d.n())
            .filter(|&i| !d.is_missing(i, r))
            .map(|i| d.row(i)[r])
            .collect();
        if observed.len() < 2 {
            return Err(Error::Insufficient(format!(
                "continuous covariate `{name}` has fewer than 2 observed values"
            )));
        }
        let mean = crate::math::mean(&observed);
        let sd = crate::math::sample_variance(&observed).sqrt();
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(Error::DegenerateColumn(name.clone()));
        }
        for i in 0..d.n() {
            let v = &mut out.l[i * p + r];
            if !v.is_nan() {
                *v = (*v - mean) / sd;
            }
        }
        columns.push(ColumnScaling {
            name: name.clone(),
            index: r,
            mean,
            sd,
        });
    }
    Ok((out, ScalingParams { columns }))
}

/// Reads a CSV with a header row. Empty cells in covariate columns become
/// missing entries; columns not named by the schema are ignored.
pub fn load_dataset(path: impl AsRef<Path>, schema: &VariableSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_dataset(file, schema)
}

pub fn read_dataset<R: std::io::Read>(reader: R, schema: &VariableSchema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Validation(format!("column `{name}` not found in header")))
    };
    let y_col = column(schema.outcome_name())?;
    let a_col = column(schema.treatment_name())?;
    let l_cols = schema
        .covariates()
        .iter()
        .map(|c| column(&c.name))
        .collect::<Result<Vec<_>>>()?;

    let mut y = Vec::new();
    let mut a = Vec::new();
    let mut rows = Vec::new();
    for (row_idx, record) in rdr.records().enumerate() {
        let row_no = row_idx + 1;
        let record = record.map_err(|e| Error::Parse {
            row: row_no,
            message: e.to_string(),
        })?;
        let cell = |col: usize| record.get(col).unwrap_or("");
        let parse = |col: usize, what: &str| -> Result<Option<f64>> {
            let s = cell(col);
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>().map(Some).map_err(|_| Error::Parse {
                row: row_no,
                message: format!("cannot parse `{s}` in column `{what}`"),
            })
        };
        let yv = parse(y_col, schema.outcome_name())?.ok_or_else(|| {
            Error::Validation(format!("missing outcome `{}` in data row {row_no}", schema.outcome_name()))
        })?;
        let av = parse(a_col, schema.treatment_name())?.ok_or_else(|| {
            Error::Validation(format!("missing treatment `{}` in data row {row_no}", schema.treatment_name()))
        })?;
        if av < 0.0 || av.fract() != 0.0 {
            return Err(Error::Validation(format!(
                "treatment `{}` has non-integer level {av} in data row {row_no}",
                schema.treatment_name()
            )));
        }
        let mut row = Vec::with_capacity(l_cols.len());
        for (spec, &col) in schema.covariates().iter().zip(&l_cols) {
            row.push(parse(col, &spec.name)?);
        }
        y.push(yv);
        a.push(av as usize);
        rows.push(row);
    }
    Dataset::new(schema.clone(), y, a, rows)
}

pub fn save_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_dataset(d, file)
}

pub fn write_dataset<W: std::io::Write>(d: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let schema = d.schema();
    let mut header = vec![schema.outcome_name().to_string(), schema.treatment_name().to_string()];
    header.extend(schema.covariates().iter().map(|c| c.name.clone()));
    wtr.write_record(&header)?;
    for i in 0..d.n() {
        let mut rec = Vec::with_capacity(header.len());
        rec.push(format!("{}", d.y[i]));
        rec.push(d.a[i].to_string());
        for (r, &v) in d.row(i).iter().enumerate() {
            rec.push(if d.is_missing(i, r) { String::new() } else { format!("{v}") });
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
