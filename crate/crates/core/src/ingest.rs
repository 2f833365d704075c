//! CSV and schema-sidecar loading, and pooling of real and synthetic rows.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::data::{infer_schema, Cell, RowRecord, Schema, Table, DEFAULT_MAX_CARDINALITY};
use crate::error::{Error, Result};
use crate::generators::GeneratorKind;
use crate::util::rng_from;

fn read_csv_records(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_csv_bytes(&bytes)
}

pub(crate) fn parse_csv_bytes(bytes: &[u8]) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    if bytes.iter().all(|b| b.is_ascii_whitespace()) {
        return Err(Error::Ingest("empty file".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(bytes);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Ingest(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Ingest("empty header".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Ingest(format!("row {i}: {e}")))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

fn table_name_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Load a CSV file. Without a schema, column kinds are inferred from all rows.
pub fn load_csv(path: impl AsRef<Path>, schema: Option<&Schema>) -> Result<Table> {
    let path = path.as_ref();
    let (header, rows) = read_csv_records(path)?;
    table_from_strings(&table_name_of(path), &header, &rows, schema)
}

/// Load a CSV file, inferring kinds with a custom integer-cardinality threshold.
pub fn load_csv_with_cardinality(path: impl AsRef<Path>, max_cardinality: usize) -> Result<Table> {
    let path = path.as_ref();
    let (header, rows) = read_csv_records(path)?;
    let schema = infer_schema(&table_name_of(path), &header, &rows, max_cardinality)?;
    table_from_strings(&schema.table_name.clone(), &header, &rows, Some(&schema))
}

pub fn table_from_strings(
    name: &str,
    header: &[String],
    rows: &[Vec<String>],
    schema: Option<&Schema>,
) -> Result<Table> {
    let schema = match schema {
        Some(s) => {
            let names: Vec<&str> = s.columns.iter().map(|c| c.name.as_str()).collect();
            if names != header.iter().map(String::as_str).collect::<Vec<_>>() {
                return Err(Error::SchemaMismatch {
                    table_id: s.table_name.clone(),
                    detail: format!("header {header:?} does not match schema columns {names:?}"),
                });
            }
            s.clone()
        }
        None => infer_schema(name, header, rows, DEFAULT_MAX_CARDINALITY)?,
    };
    let mut cells = Vec::with_capacity(rows.len());
    for (r, row) in rows.iter().enumerate() {
        let parsed = row
            .iter()
            .zip(&schema.columns)
            .map(|(raw, col)| {
                Cell::parse(raw, col.kind).map_err(|detail| Error::Kind {
                    row: r,
                    column: col.name.clone(),
                    detail,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        cells.push(parsed);
    }
    Table::new(schema, cells)
}

pub fn write_csv<W: Write>(table: &Table, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let fmt_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(table.schema.columns.iter().map(|c| c.name.as_str()))
        .map_err(fmt_err)?;
    for row in &table.rows {
        w.write_record(row.iter().map(Cell::to_string)).map_err(fmt_err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}

pub fn save_csv(table: &Table, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(table, std::io::BufWriter::new(file))
}

/// Schema sidecar: TOML with a `table_name` and an ordered `[[columns]]` list.
pub fn load_schema(path: impl AsRef<Path>) -> Result<Schema> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let schema: Schema =
        toml::from_str(&text).map_err(|e| Error::Ingest(format!("schema sidecar: {e}")))?;
    schema.check()?;
    Ok(schema)
}

pub fn schema_to_toml(schema: &Schema) -> String {
    toml::to_string(schema).expect("schema serializes")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Balance {
    AsIs,
    #[default]
    EqualPerOrigin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealSource {
    pub table_id: String,
    pub csv: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSource {
    pub table_id: String,
    pub generator_id: String,
    pub csv: PathBuf,
}

/// A fixture generator fitted on every real table of the pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSource {
    pub generator_id: String,
    #[serde(flatten)]
    pub kind: GeneratorKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct PoolSpec {
    pub real: Vec<RealSource>,
    #[serde(default)]
    pub synthetic: Vec<SyntheticSource>,
    #[serde(default)]
    pub generate: Vec<GeneratedSource>,
    #[serde(default)]
    pub balance: Balance,
}

impl PoolSpec {
    pub fn generator_ids(&self) -> BTreeSet<String> {
        self.synthetic
            .iter()
            .map(|s| s.generator_id.clone())
            .chain(self.generate.iter().map(|g| g.generator_id.clone()))
            .collect()
    }
}

/// Tables referenced by a [`PoolSpec`], keyed by table id.
#[derive(Debug, Clone, Default)]
pub struct LoadedTables {
    pub real: BTreeMap<String, Table>,
    /// `(table_id, generator_id, table)`
    pub synthetic: Vec<(String, String, Table)>,
}

/// Load every CSV named by a pool spec. Synthetic files are parsed under the
/// schema of their real counterpart.
pub fn load_sources(spec: &PoolSpec, base_dir: &Path) -> Result<LoadedTables> {
    let mut loaded = LoadedTables::default();
    for src in &spec.real {
        let schema = match &src.schema {
            Some(p) => Some(load_schema(base_dir.join(p))?),
            None => None,
        };
        let mut table = load_csv(base_dir.join(&src.csv), schema.as_ref())?;
        Arc::make_mut(&mut table.schema).table_name = src.table_id.clone();
        if loaded.real.insert(src.table_id.clone(), table).is_some() {
            return Err(Error::config("pool.real", format!("duplicate table id `{}`", src.table_id)));
        }
    }
    for src in &spec.synthetic {
        let real = loaded.real.get(&src.table_id).ok_or_else(|| Error::SchemaMismatch {
            table_id: src.table_id.clone(),
            detail: "synthetic table has no real counterpart".into(),
        })?;
        let table = load_csv(base_dir.join(&src.csv), Some(&real.schema))?;
        loaded
            .synthetic
            .push((src.table_id.clone(), src.generator_id.clone(), table));
    }
    Ok(loaded)
}

/// Labelled rows pooled from several tables.
#[derive(Debug, Clone, Default)]
pub struct RowPool {
    pub records: Vec<RowRecord>,
    pub table_ids: BTreeSet<String>,
    pub generator_ids: BTreeSet<String>,
    pub schemas: BTreeMap<String, Arc<Schema>>,
}

impl RowPool {
    pub fn from_records(records: Vec<RowRecord>) -> Self {
        let mut pool = RowPool::default();
        for r in &records {
            pool.table_ids.insert(r.table_id.clone());
            if let Some(g) = &r.generator_id {
                pool.generator_ids.insert(g.clone());
            }
            pool.schemas
                .entry(r.table_id.clone())
                .or_insert_with(|| r.schema.clone());
        }
        pool.records = records;
        pool
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(RowRecord::label).collect()
    }

    /// Each record's schema equals the one registered for its table.
    pub fn is_consistent(&self) -> bool {
        self.records.iter().all(|r| {
            r.is_consistent()
                && self
                    .schemas
                    .get(&r.table_id)
                    .is_some_and(|s| s.same_structure(&r.schema))
        })
    }

    /// Apply a balance policy, then shuffle record order (seeded).
    pub fn rebalance(&self, balance: Balance, seed: u64) -> RowPool {
        let mut keep: Vec<usize> = match balance {
            Balance::AsIs => (0..self.records.len()).collect(),
            Balance::EqualPerOrigin => self.equal_per_origin(seed),
        };
        keep.sort_unstable();
        let mut rng = rng_from(seed, &["pool-order"]);
        keep.shuffle(&mut rng);
        RowPool::from_records(keep.into_iter().map(|i| self.records[i].clone()).collect())
    }

    fn equal_per_origin(&self, seed: u64) -> Vec<usize> {
        let mut by_table: BTreeMap<&str, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            let entry = by_table.entry(r.table_id.as_str()).or_default();
            match r.origin {
                crate::data::Origin::Real => entry.0.push(i),
                crate::data::Origin::Synthetic => entry.1.push(i),
            }
        }
        let mut keep = Vec::with_capacity(self.records.len());
        for (table, (real, synth)) in by_table {
            let m = real.len().min(synth.len());
            if m == 0 {
                log::warn!("table `{table}` lacks one origin and is dropped by balancing");
            }
            let mut rng = rng_from(seed, &["balance", table]);
            for group in [real, synth] {
                if group.len() == m {
                    keep.extend(group);
                } else {
                    let mut chosen: Vec<usize> = index::sample(&mut rng, group.len(), m).into_vec();
                    chosen.sort_unstable();
                    keep.extend(chosen.into_iter().map(|j| group[j]));
                }
            }
        }
        keep
    }

    pub fn subset(&self, idx: &[usize]) -> Vec<&RowRecord> {
        idx.iter().map(|&i| &self.records[i]).collect()
    }
}

/// Pool the rows of all loaded tables with their provenance labels.
pub fn build_pool(spec: &PoolSpec, tables: &LoadedTables, seed: u64) -> Result<RowPool> {
    let mut records = Vec::new();
    for (id, table) in &tables.real {
        for (i, row) in table.rows.iter().enumerate() {
            records.push(RowRecord::real(id, table.schema.clone(), row.clone(), i));
        }
    }
    for (id, gen, table) in &tables.synthetic {
        let real = tables.real.get(id).ok_or_else(|| Error::SchemaMismatch {
            table_id: id.clone(),
            detail: format!("generator `{gen}` references an unknown real table"),
        })?;
        if !real.schema.same_structure(&table.schema) {
            return Err(Error::SchemaMismatch {
                table_id: id.clone(),
                detail: format!("generator `{gen}` output differs from the real schema"),
            });
        }
        for (i, row) in table.rows.iter().enumerate() {
            records.push(RowRecord::synthetic(id, gen, real.schema.clone(), row.clone(), i));
        }
    }
    Ok(RowPool::from_records(records).rebalance(spec.balance, seed))
}
