//! Fitted fixture generators.
//!
//! Three samplers of increasing realism stand in for tuned deep generators:
//! `MarginalResample` keeps every marginal but destroys all dependence between
//! columns, `GaussianFrequency` keeps only first/second moments and level
//! frequencies, and `NoisyCopy` perturbs resampled real rows.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::data::{Cell, ColumnKind, Schema, Table};
use crate::error::{Error, Result};
use crate::util::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorKind {
    MarginalResample,
    GaussianFrequency,
    NoisyCopy {
        #[serde(default)]
        noise_scale: f64,
    },
}

impl GeneratorKind {
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorKind::MarginalResample => "marginal-resample",
            GeneratorKind::GaussianFrequency => "gaussian-frequency",
            GeneratorKind::NoisyCopy { .. } => "noisy-copy",
        }
    }

    pub fn parse(name: &str, noise_scale: f64) -> Result<Self> {
        let kind = match name {
            "marginal-resample" => GeneratorKind::MarginalResample,
            "gaussian-frequency" => GeneratorKind::GaussianFrequency,
            "noisy-copy" => GeneratorKind::NoisyCopy { noise_scale },
            other => return Err(Error::config("kind", format!("unknown generator kind `{other}`"))),
        };
        kind.check()?;
        Ok(kind)
    }

    fn check(&self) -> Result<()> {
        if let GeneratorKind::NoisyCopy { noise_scale } = self {
            if !noise_scale.is_finite() || *noise_scale < 0.0 {
                return Err(Error::config("noise_scale", "must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GeneratorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        GeneratorKind::parse(s, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnState {
    /// Sorted empirical values of the column.
    Empirical(Vec<Cell>),
    /// Population mean and standard deviation.
    Gaussian { mean: f64, std: f64 },
    /// Levels sorted lexicographically with their relative frequencies.
    Frequencies { levels: Vec<String>, probs: Vec<f64> },
    /// Noise is scaled by this population standard deviation.
    NoiseScale { std: f64 },
    Unchanged,
}

#[derive(Debug, Clone)]
pub struct FittedGenerator {
    pub kind: GeneratorKind,
    pub columns: Vec<ColumnState>,
    pub source_schema: Arc<Schema>,
    /// Source rows, kept by `NoisyCopy` only.
    rows: Vec<Vec<Cell>>,
}

fn numeric_values(t: &Table, c: usize) -> Vec<f64> {
    t.column(c)
        .map(|cell| match cell {
            Cell::Num(v) => *v,
            _ => unreachable!("validated numeric column"),
        })
        .collect()
}

pub(crate) fn population_mean_std(v: &[f64]) -> (f64, f64) {
    crate::util::mean_std(v)
}

pub(crate) fn level_frequencies(values: impl Iterator<Item = String>) -> (Vec<String>, Vec<f64>) {
    let mut counts = std::collections::BTreeMap::<String, usize>::new();
    let mut n = 0usize;
    for v in values {
        *counts.entry(v).or_default() += 1;
        n += 1;
    }
    let levels: Vec<String> = counts.keys().cloned().collect();
    let probs = counts.values().map(|&c| c as f64 / n as f64).collect();
    (levels, probs)
}

pub fn fit_generator(kind: GeneratorKind, t: &Table) -> Result<FittedGenerator> {
    kind.check()?;
    if t.len() < 2 {
        return Err(Error::EmptyTable(t.schema.table_name.clone()));
    }
    for (c, col) in t.schema.columns.iter().enumerate() {
        if t.column(c).any(Cell::is_missing) {
            return Err(Error::MissingCell {
                column: col.name.clone(),
            });
        }
    }
    let columns = t
        .schema
        .columns
        .iter()
        .enumerate()
        .map(|(c, col)| match (kind, col.kind) {
            (GeneratorKind::MarginalResample, ColumnKind::Numerical) => {
                let mut v = numeric_values(t, c);
                v.sort_by(f64::total_cmp);
                ColumnState::Empirical(v.into_iter().map(Cell::Num).collect())
            }
            (GeneratorKind::MarginalResample, ColumnKind::Categorical) => {
                let mut v: Vec<Cell> = t.column(c).cloned().collect();
                v.sort_by_key(|a| a.to_string());
                ColumnState::Empirical(v)
            }
            (GeneratorKind::GaussianFrequency, ColumnKind::Numerical) => {
                let (mean, std) = population_mean_std(&numeric_values(t, c));
                ColumnState::Gaussian { mean, std }
            }
            (GeneratorKind::GaussianFrequency, ColumnKind::Categorical) => {
                let (levels, probs) = level_frequencies(t.column(c).map(Cell::to_string));
                ColumnState::Frequencies { levels, probs }
            }
            (GeneratorKind::NoisyCopy { .. }, ColumnKind::Numerical) => {
                let (_, std) = population_mean_std(&numeric_values(t, c));
                ColumnState::NoiseScale { std }
            }
            (GeneratorKind::NoisyCopy { .. }, ColumnKind::Categorical) => ColumnState::Unchanged,
        })
        .collect();
    let rows = match kind {
        GeneratorKind::NoisyCopy { .. } => t.rows.clone(),
        _ => Vec::new(),
    };
    Ok(FittedGenerator {
        kind,
        columns,
        source_schema: t.schema.clone(),
        rows,
    })
}

/// Draw `n` rows. Output depends only on `(g, n, seed)`.
pub fn sample_synthetic(g: &FittedGenerator, n: usize, seed: u64) -> Result<Table> {
    if n == 0 {
        return Err(Error::EmptyTable(format!("{} (n = 0)", g.source_schema.table_name)));
    }
    let mut rng = rng_from(seed, &["sample", g.kind.name(), &g.source_schema.table_name]);
    let rows = match g.kind {
        GeneratorKind::NoisyCopy { noise_scale } => (0..n)
            .map(|_| {
                let src = &g.rows[rng.random_range(0..g.rows.len())];
                src.iter()
                    .zip(&g.columns)
                    .map(|(cell, state)| match (cell, state) {
                        (Cell::Num(v), ColumnState::NoiseScale { std })
                            if noise_scale > 0.0 && *std > 0.0 =>
                        {
                            let noise = Normal::new(0.0, noise_scale * std).expect("finite sd");
                            Cell::Num(v + noise.sample(&mut rng))
                        }
                        _ => cell.clone(),
                    })
                    .collect()
            })
            .collect(),
        _ => {
            let samplers: Vec<ColumnSampler> = g.columns.iter().map(ColumnSampler::new).collect();
            (0..n)
                .map(|_| samplers.iter().map(|s| s.draw(&mut rng)).collect())
                .collect()
        }
    };
    Table::new((*g.source_schema).clone(), rows)
}

enum ColumnSampler<'a> {
    Empirical(&'a [Cell]),
    Gaussian(f64, Option<Normal<f64>>),
    Frequencies(&'a [String], WeightedIndex<f64>),
}

impl<'a> ColumnSampler<'a> {
    fn new(state: &'a ColumnState) -> Self {
        match state {
            ColumnState::Empirical(v) => ColumnSampler::Empirical(v),
            ColumnState::Gaussian { mean, std } => ColumnSampler::Gaussian(
                *mean,
                (*std > 0.0).then(|| Normal::new(*mean, *std).expect("finite sd")),
            ),
            ColumnState::Frequencies { levels, probs } => ColumnSampler::Frequencies(
                levels,
                WeightedIndex::new(probs).expect("frequencies are positive"),
            ),
            ColumnState::NoiseScale { .. } | ColumnState::Unchanged => {
                unreachable!("noisy-copy columns are sampled row-wise")
            }
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> Cell {
        match self {
            ColumnSampler::Empirical(v) => v[rng.random_range(0..v.len())].clone(),
            ColumnSampler::Gaussian(mean, None) => Cell::Num(*mean),
            ColumnSampler::Gaussian(_, Some(d)) => Cell::Num(d.sample(rng)),
            ColumnSampler::Frequencies(levels, w) => Cell::Cat(levels[w.sample(rng)].clone()),
        }
    }
}
