use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{Cell, ColumnKind, RowRecord, Schema, Table};
use crate::error::{Error, Result};
use crate::util::Fingerprint;

/// Per-table codec: empirical quantiles for numerics, ordinal ids for categoricals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnCodec {
    pub fitted_on: String,
    pub schema: Arc<Schema>,
    /// Sorted reference values, one list per numeric column in schema order.
    pub numeric: Vec<Vec<f64>>,
    /// Level -> 1-based index, one map per categorical column in schema order.
    pub categorical: Vec<BTreeMap<String, u32>>,
}

/// Fixed-width encoding of one row. Masked-out slots hold 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnVec {
    pub num: Vec<f64>,
    pub num_mask: Vec<u8>,
    pub cat: Vec<u32>,
    pub cat_mask: Vec<u8>,
}

impl ColumnVec {
    /// `[num | cat | num_mask | cat_mask]` as one dense vector. Masked slots
    /// read as 0 whatever they hold.
    pub fn flatten(&self) -> Vec<f64> {
        let keep = |m: u8, v: f64| if m == 0 { 0.0 } else { v };
        self.num
            .iter()
            .zip(&self.num_mask)
            .map(|(&v, &m)| keep(m, v))
            .chain(self.cat.iter().zip(&self.cat_mask).map(|(&c, &m)| keep(m, c as f64)))
            .chain(self.num_mask.iter().map(|&m| m as f64))
            .chain(self.cat_mask.iter().map(|&m| m as f64))
            .collect()
    }
}

pub fn fit_column_codec(t: &Table) -> Result<ColumnCodec> {
    fit_codec_rows(&t.schema.table_name, &t.schema, t.rows.iter().map(Vec::as_slice))
}

/// Fit a codec from rows of one table (labels are never consulted).
pub fn fit_codec_rows<'a>(
    table_id: &str,
    schema: &Arc<Schema>,
    rows: impl Iterator<Item = &'a [Cell]>,
) -> Result<ColumnCodec> {
    let num_idx = schema.indices_of(ColumnKind::Numerical);
    let cat_idx = schema.indices_of(ColumnKind::Categorical);
    let mut numeric = vec![Vec::new(); num_idx.len()];
    let mut levels = vec![std::collections::BTreeSet::new(); cat_idx.len()];
    let mut n = 0usize;
    for row in rows {
        n += 1;
        for (slot, &c) in num_idx.iter().enumerate() {
            match &row[c] {
                Cell::Num(v) => numeric[slot].push(*v),
                _ => return Err(missing(schema, c)),
            }
        }
        for (slot, &c) in cat_idx.iter().enumerate() {
            match &row[c] {
                Cell::Cat(s) => {
                    levels[slot].insert(s.clone());
                }
                _ => return Err(missing(schema, c)),
            }
        }
    }
    if n < 2 {
        return Err(Error::EmptyTable(table_id.to_string()));
    }
    for v in &mut numeric {
        v.sort_by(f64::total_cmp);
    }
    let categorical = levels
        .into_iter()
        .map(|set| set.into_iter().zip(1u32..).collect())
        .collect();
    Ok(ColumnCodec {
        fitted_on: table_id.to_string(),
        schema: schema.clone(),
        numeric,
        categorical,
    })
}

fn missing(schema: &Schema, c: usize) -> Error {
    Error::MissingCell {
        column: schema.columns[c].name.clone(),
    }
}

/// Empirical CDF with midrank ties: `(#{ref < x} + #{ref == x} / 2) / n`.
pub fn quantile(reference: &[f64], x: f64) -> f64 {
    let below = reference.partition_point(|&v| v < x);
    let at_or_below = reference.partition_point(|&v| v <= x);
    let ties = at_or_below - below;
    ((below as f64 + 0.5 * ties as f64) / reference.len() as f64).clamp(0.0, 1.0)
}

impl ColumnCodec {
    pub fn fingerprint(&self) -> String {
        let mut fp = Fingerprint::new("column-codec");
        fp.str(&self.fitted_on);
        for col in &self.schema.columns {
            fp.str(&col.name);
        }
        for v in &self.numeric {
            fp.u64(v.len() as u64);
            for &x in v {
                fp.f64(x);
            }
        }
        for m in &self.categorical {
            fp.u64(m.len() as u64);
            for k in m.keys() {
                fp.str(k);
            }
        }
        fp.finish()
    }
}

pub fn apply_column_codec(c: &ColumnCodec, r: &RowRecord, d_num: usize, d_cat: usize) -> Result<ColumnVec> {
    if r.table_id != c.fitted_on {
        return Err(Error::CodecMismatch {
            expected: c.fitted_on.clone(),
            found: r.table_id.clone(),
        });
    }
    let mut out = ColumnVec {
        num: vec![0.0; d_num],
        num_mask: vec![0; d_num],
        cat: vec![0; d_cat],
        cat_mask: vec![0; d_cat],
    };
    let num_idx = c.schema.indices_of(ColumnKind::Numerical);
    for (slot, (&col, reference)) in num_idx.iter().zip(&c.numeric).enumerate() {
        let Cell::Num(x) = r.cells[col] else {
            return Err(missing(&c.schema, col));
        };
        if slot < d_num {
            out.num[slot] = quantile(reference, x);
            out.num_mask[slot] = 1;
        }
    }
    let cat_idx = c.schema.indices_of(ColumnKind::Categorical);
    for (slot, (&col, levels)) in cat_idx.iter().zip(&c.categorical).enumerate() {
        let Cell::Cat(s) = &r.cells[col] else {
            return Err(missing(&c.schema, col));
        };
        if slot < d_cat {
            out.cat[slot] = levels.get(s).copied().unwrap_or(0);
            out.cat_mask[slot] = 1;
        }
    }
    Ok(out)
}
