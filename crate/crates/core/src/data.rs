//! Schemas, cells, tables and labelled row records.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer columns with at most this many distinct values are categorical.
pub const DEFAULT_MAX_CARDINALITY: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numerical,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub table_name: String,
    pub columns: Vec<Column>,
}

impl Schema {
    pub fn new(table_name: impl Into<String>, columns: Vec<Column>) -> Result<Self> {
        let schema = Schema {
            table_name: table_name.into(),
            columns,
        };
        schema.check()?;
        Ok(schema)
    }

    /// Convenience constructor from `(name, kind)` pairs.
    pub fn from_pairs(table_name: &str, cols: &[(&str, ColumnKind)]) -> Result<Self> {
        Schema::new(
            table_name,
            cols.iter()
                .map(|(n, k)| Column {
                    name: n.to_string(),
                    kind: *k,
                })
                .collect(),
        )
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.columns.is_empty() {
            return Err(Error::Ingest(format!(
                "schema `{}` has no columns",
                self.table_name
            )));
        }
        let mut seen = HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Ingest(format!("duplicate column name `{}`", c.name)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn num_count(&self) -> usize {
        self.count(ColumnKind::Numerical)
    }

    pub fn cat_count(&self) -> usize {
        self.count(ColumnKind::Categorical)
    }

    fn count(&self, kind: ColumnKind) -> usize {
        self.columns.iter().filter(|c| c.kind == kind).count()
    }

    /// Column indices of one kind, in schema order.
    pub fn indices_of(&self, kind: ColumnKind) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == kind)
            .map(|(i, _)| i)
            .collect()
    }

    /// Same column names and kinds in the same order (table name ignored).
    pub fn same_structure(&self, other: &Schema) -> bool {
        self.columns == other.columns
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Num(f64),
    Cat(String),
    Missing,
}

impl Cell {
    /// Parse a raw field under a column kind. Empty fields are `Missing`.
    pub fn parse(raw: &str, kind: ColumnKind) -> std::result::Result<Cell, String> {
        let s = raw.trim();
        if s.is_empty() {
            return Ok(Cell::Missing);
        }
        match kind {
            ColumnKind::Numerical => match parse_finite(s) {
                Some(v) => Ok(Cell::Num(v)),
                None => Err(format!("`{s}` is not a finite number")),
            },
            ColumnKind::Categorical => Ok(Cell::Cat(s.to_string())),
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }

    fn fits(&self, kind: ColumnKind) -> bool {
        match self {
            Cell::Missing => true,
            Cell::Num(v) => kind == ColumnKind::Numerical && v.is_finite(),
            Cell::Cat(s) => kind == ColumnKind::Categorical && !s.trim().is_empty(),
        }
    }
}

/// Numbers render as the shortest decimal that round-trips.
impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Num(v) => write!(f, "{v}"),
            Cell::Cat(s) => f.write_str(s),
            Cell::Missing => Ok(()),
        }
    }
}

pub(crate) fn parse_finite(s: &str) -> Option<f64> {
    // Rust accepts "inf", "NaN" and friends; only plain decimals count here.
    if !s
        .bytes()
        .all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'-' | b'+' | b'e' | b'E'))
    {
        return None;
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub schema: Arc<Schema>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    /// Build a table and check its invariants.
    pub fn new(schema: Schema, rows: Vec<Vec<Cell>>) -> Result<Self> {
        let t = Table {
            schema: Arc::new(schema),
            rows,
        };
        validate_table(&t)?;
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, idx: usize) -> impl Iterator<Item = &Cell> + '_ {
        self.rows.iter().map(move |r| &r[idx])
    }

    pub fn has_missing(&self) -> bool {
        self.rows.iter().flatten().any(Cell::is_missing)
    }
}

/// Check row lengths and cell kinds against the schema.
pub fn validate_table(t: &Table) -> Result<()> {
    t.schema.check()?;
    let width = t.schema.len();
    for (r, row) in t.rows.iter().enumerate() {
        if row.len() != width {
            return Err(Error::Shape {
                row: r,
                expected: width,
                found: row.len(),
            });
        }
        for (cell, col) in row.iter().zip(&t.schema.columns) {
            if !cell.fits(col.kind) {
                return Err(Error::Kind {
                    row: r,
                    column: col.name.clone(),
                    detail: format!("{cell:?} does not fit a {:?} column", col.kind),
                });
            }
        }
    }
    Ok(())
}

/// Decide column kinds from raw string samples.
///
/// A column is numerical when every non-empty value parses as a finite
/// number and it either holds a non-integer value or has more than
/// `max_cardinality` distinct values.
pub fn infer_schema(
    table_name: &str,
    header: &[String],
    sample_rows: &[Vec<String>],
    max_cardinality: usize,
) -> Result<Schema> {
    if header.is_empty() {
        return Err(Error::Ingest("empty header".into()));
    }
    for (r, row) in sample_rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::Ingest(format!(
                "ragged row {r}: expected {} fields, found {}",
                header.len(),
                row.len()
            )));
        }
    }
    let columns = header
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let kind = infer_kind(sample_rows.iter().map(|row| row[c].as_str()), max_cardinality);
            Column {
                name: name.trim().to_string(),
                kind,
            }
        })
        .collect();
    Schema::new(table_name, columns)
}

fn infer_kind<'a>(values: impl Iterator<Item = &'a str>, max_cardinality: usize) -> ColumnKind {
    let mut distinct = HashSet::new();
    let mut non_integer = false;
    for raw in values {
        let s = raw.trim();
        if s.is_empty() {
            continue;
        }
        match parse_finite(s) {
            Some(v) => {
                non_integer |= v.fract() != 0.0;
                distinct.insert(v.to_bits());
            }
            None => return ColumnKind::Categorical,
        }
    }
    if non_integer || distinct.len() > max_cardinality {
        ColumnKind::Numerical
    } else {
        ColumnKind::Categorical
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Real,
    Synthetic,
}

impl Origin {
    /// Binary target; synthetic is the positive class.
    pub fn label(self) -> u8 {
        match self {
            Origin::Real => 0,
            Origin::Synthetic => 1,
        }
    }
}

/// One row together with its provenance labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RowRecord {
    pub table_id: String,
    pub origin: Origin,
    pub generator_id: Option<String>,
    pub cells: Vec<Cell>,
    pub schema: Arc<Schema>,
    /// Row index inside the source table the record was taken from.
    pub source_row: usize,
}

impl RowRecord {
    pub fn real(table_id: &str, schema: Arc<Schema>, cells: Vec<Cell>, source_row: usize) -> Self {
        RowRecord {
            table_id: table_id.to_string(),
            origin: Origin::Real,
            generator_id: None,
            cells,
            schema,
            source_row,
        }
    }

    pub fn synthetic(
        table_id: &str,
        generator_id: &str,
        schema: Arc<Schema>,
        cells: Vec<Cell>,
        source_row: usize,
    ) -> Self {
        RowRecord {
            table_id: table_id.to_string(),
            origin: Origin::Synthetic,
            generator_id: Some(generator_id.to_string()),
            cells,
            schema,
            source_row,
        }
    }

    pub fn label(&self) -> u8 {
        self.origin.label()
    }

    /// Generator id is present exactly for synthetic rows.
    pub fn is_consistent(&self) -> bool {
        (self.origin == Origin::Synthetic) == self.generator_id.is_some()
            && self.cells.len() == self.schema.len()
    }

    pub fn cell_named(&self, name: &str) -> Option<&Cell> {
        self.schema
            .columns
            .iter()
            .position(|c| c.name == name)
            .map(|i| &self.cells[i])
    }
}
