//! Mixed continuous/ordinal datasets with optional class labels and an
//! auxiliary outcome column.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableKind {
    Continuous,
    Ordinal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub kind: VariableKind,
    /// Number of ordinal levels, coded `1..=levels`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<u32>,
}

impl VariableSpec {
    pub fn continuous(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: VariableKind::Continuous,
            levels: None,
        }
    }

    pub fn ordinal(name: &str, levels: u32) -> Self {
        Self {
            name: name.to_string(),
            kind: VariableKind::Ordinal,
            levels: Some(levels),
        }
    }

    pub fn is_discrete(&self) -> bool {
        self.kind == VariableKind::Ordinal
    }

    /// Level count for ordinal variables, 0 for continuous ones.
    pub fn level_count(&self) -> u32 {
        self.levels.unwrap_or(0)
    }

    /// Checks a value against this variable's domain.
    pub fn admits(&self, value: f64) -> bool {
        match self.kind {
            VariableKind::Continuous => value.is_finite(),
            VariableKind::Ordinal => {
                value.fract() == 0.0 && value >= 1.0 && value <= self.level_count() as f64
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schema(Vec<VariableSpec>);

impl Schema {
    pub fn new(vars: Vec<VariableSpec>) -> Result<Self> {
        if vars.is_empty() {
            return Err(Error::InvalidSchema("no variables".into()));
        }
        let mut seen = HashSet::new();
        for v in &vars {
            if !seen.insert(v.name.as_str()) {
                return Err(Error::InvalidSchema(format!("duplicate name `{}`", v.name)));
            }
            match (v.kind, v.levels) {
                (VariableKind::Ordinal, Some(l)) if l >= 2 => {}
                (VariableKind::Ordinal, _) => {
                    return Err(Error::InvalidSchema(format!(
                        "ordinal `{}` needs levels >= 2",
                        v.name
                    )))
                }
                (VariableKind::Continuous, _) => {}
            }
        }
        Ok(Schema(vars))
    }

    pub fn vars(&self) -> &[VariableSpec] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|v| v.name == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::SchemaMismatch(format!("unknown variable `{name}`")))
    }

    /// Validates a full row, returning a description of the first problem.
    pub fn check_row(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.len() {
            return Err(Error::SchemaMismatch(format!(
                "row has {} values, schema has {}",
                row.len(),
                self.len()
            )));
        }
        for (v, &x) in self.0.iter().zip(row) {
            if !v.admits(x) {
                return Err(Error::SchemaMismatch(format!(
                    "value {x} not admissible for `{}`",
                    v.name
                )));
            }
        }
        Ok(())
    }
}

/// On-disk schema configuration:
/// `{"variables":[{"name":..,"kind":..,"levels":..}],"label":..,"aux":..}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub variables: Vec<VariableSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux: Option<String>,
}

impl SchemaConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let mut s = String::new();
        File::open(path)?.read_to_string(&mut s)?;
        Ok(serde_json::from_str(&s)?)
    }

    pub fn schema(&self) -> Result<Schema> {
        Schema::new(self.variables.clone())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = File::create(path)?;
        f.write_all(serde_json::to_string_pretty(self)?.as_bytes())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxColumn {
    pub name: String,
    pub values: Vec<f64>,
}

/// Column-major table; ordinal codes are stored as integral `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    columns: Vec<Vec<f64>>,
    labels: Option<Vec<u32>>,
    aux: Option<AuxColumn>,
}

impl Dataset {
    pub fn new(
        schema: Schema,
        columns: Vec<Vec<f64>>,
        labels: Option<Vec<u32>>,
        aux: Option<AuxColumn>,
    ) -> Result<Self> {
        if columns.len() != schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} columns for {} variables",
                columns.len(),
                schema.len()
            )));
        }
        let n = columns[0].len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        for (v, col) in schema.vars().iter().zip(&columns) {
            if col.len() != n {
                return Err(Error::SchemaMismatch("ragged columns".into()));
            }
            for (row, &x) in col.iter().enumerate() {
                if x.is_nan() {
                    return Err(Error::MissingValue {
                        row,
                        column: v.name.clone(),
                    });
                }
                if !v.admits(x) {
                    return Err(match v.kind {
                        VariableKind::Ordinal => Error::OrdinalOutOfRange {
                            row,
                            column: v.name.clone(),
                            value: x.to_string(),
                            levels: v.level_count(),
                        },
                        VariableKind::Continuous => Error::NonNumeric {
                            row,
                            column: v.name.clone(),
                            value: x.to_string(),
                        },
                    });
                }
            }
        }
        if labels.as_ref().is_some_and(|l| l.len() != n)
            || aux.as_ref().is_some_and(|a| a.values.len() != n)
        {
            return Err(Error::SchemaMismatch(
                "label/aux length differs from row count".into(),
            ));
        }
        Ok(Self {
            schema,
            columns,
            labels,
            aux,
        })
    }

    /// Builds from row-major values.
    pub fn from_rows(
        schema: Schema,
        rows: &[Vec<f64>],
        labels: Option<Vec<u32>>,
        aux: Option<AuxColumn>,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let columns = (0..schema.len())
            .map(|j| rows.iter().map(|r| r[j]).collect())
            .collect();
        Self::new(schema, columns, labels, aux)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.len())
    }

    pub fn n_vars(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows()).map(|i| self.row(i)).collect()
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn aux(&self) -> Option<&AuxColumn> {
        self.aux.as_ref()
    }

    /// Rows selected by index; may be empty.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| indices.iter().map(|&i| c[i]).collect())
                .collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            aux: self.aux.as_ref().map(|a| AuxColumn {
                name: a.name.clone(),
                values: indices.iter().map(|&i| a.values[i]).collect(),
            }),
        }
    }

    /// Writes the dataset as CSV at full precision.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = self.schema.vars().iter().map(|v| v.name.clone()).collect();
        if self.labels.is_some() {
            header.push("label".into());
        }
        if let Some(a) = &self.aux {
            header.push(a.name.clone());
        }
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec: Vec<String> = self
                .schema
                .vars()
                .iter()
                .zip(&self.columns)
                .map(|(v, c)| match v.kind {
                    VariableKind::Ordinal => format!("{}", c[i] as i64),
                    VariableKind::Continuous => format!("{:?}", c[i]),
                })
                .collect();
            if let Some(l) = &self.labels {
                rec.push(l[i].to_string());
            }
            if let Some(a) = &self.aux {
                rec.push(format!("{:?}", a.values[i]));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "NaN" | "nan" | "null")
}

fn parse_cell(cell: &str, row: usize, column: &str) -> Result<f64> {
    if is_missing(cell) {
        return Err(Error::MissingValue {
            row,
            column: column.to_string(),
        });
    }
    cell.trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::NonNumeric {
            row,
            column: column.to_string(),
            value: cell.to_string(),
        })
}

/// Loads a CSV with a header row, reordering columns to schema order.
pub fn load_dataset(
    path: impl AsRef<Path>,
    schema: &Schema,
    label_column: Option<&str>,
    aux_column: Option<&str>,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let var_idx: Vec<usize> = schema
        .vars()
        .iter()
        .map(|v| find(&v.name))
        .collect::<Result<_>>()?;
    let label_idx = label_column.map(find).transpose()?;
    let aux_idx = aux_column.map(find).transpose()?;

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); schema.len()];
    let mut labels = label_idx.map(|_| Vec::new());
    let mut aux = aux_idx.map(|_| Vec::new());
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for ((v, &ci), col) in schema.vars().iter().zip(&var_idx).zip(columns.iter_mut()) {
            let cell = rec.get(ci).unwrap_or("");
            let x = parse_cell(cell, row, &v.name)?;
            if v.is_discrete() && !v.admits(x) {
                return Err(Error::OrdinalOutOfRange {
                    row,
                    column: v.name.clone(),
                    value: cell.to_string(),
                    levels: v.level_count(),
                });
            }
            col.push(x);
        }
        if let (Some(li), Some(ls)) = (label_idx, labels.as_mut()) {
            let name = label_column.unwrap_or_default();
            let cell = rec.get(li).unwrap_or("");
            let x = parse_cell(cell, row, name)?;
            if x < 0.0 || x.fract() != 0.0 {
                return Err(Error::NonNumeric {
                    row,
                    column: name.to_string(),
                    value: cell.to_string(),
                });
            }
            ls.push(x as u32);
        }
        if let (Some(ai), Some(xs)) = (aux_idx, aux.as_mut()) {
            let name = aux_column.unwrap_or_default();
            xs.push(parse_cell(rec.get(ai).unwrap_or(""), row, name)?);
        }
    }
    if columns[0].is_empty() {
        return Err(Error::EmptyDataset);
    }
    let aux = aux.map(|values| AuxColumn {
        name: aux_column.unwrap_or_default().to_string(),
        values,
    });
    Dataset::new(schema.clone(), columns, labels, aux)
}

/// Per-class partition of a labeled dataset.
#[derive(Debug, Clone)]
pub struct ClassSplit {
    pub parts: BTreeMap<u32, Dataset>,
    pub indices: BTreeMap<u32, Vec<usize>>,
    pub warnings: Vec<String>,
}

/// Splits rows by label. For binary labels both classes 0 and 1 are always
/// present in the result; a class without rows yields an empty subset and a
/// warning.
pub fn split_by_class(d: &Dataset) -> Result<ClassSplit> {
    let labels = d.labels().ok_or(Error::LabelsAbsent)?;
    let mut indices: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        indices.entry(y).or_default().push(i);
    }
    let mut warnings = Vec::new();
    if indices.keys().all(|&c| c <= 1) {
        for c in 0..=1 {
            if !indices.contains_key(&c) {
                warnings.push(format!("class {c} has no rows"));
                indices.insert(c, Vec::new());
            }
        }
    }
    let parts = indices
        .iter()
        .map(|(&c, idx)| (c, d.subset(idx)))
        .collect();
    Ok(ClassSplit {
        parts,
        indices,
        warnings,
    })
}
