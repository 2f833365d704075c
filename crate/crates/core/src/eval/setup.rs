use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Origin;
use crate::error::{Error, Result};
use crate::ingest::RowPool;

/// Which rows a detector sees and how folds are cut.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SetupSpec {
    /// Real rows against one generator's rows.
    GeneratorVsReal(String),
    /// Real rows against every generator, pooled as one synthetic class.
    AllModelsVsReal,
    /// Every row, with folds grouped by table so test tables are unseen.
    CrossTableShift,
}

impl SetupSpec {
    pub fn grouped(&self) -> bool {
        matches!(self, SetupSpec::CrossTableShift)
    }

    /// One generator-vs-real setup per generator plus the all-models setup.
    pub fn no_shift<'a>(generators: impl IntoIterator<Item = &'a String>) -> Vec<SetupSpec> {
        generators
            .into_iter()
            .map(|g| SetupSpec::GeneratorVsReal(g.clone()))
            .chain([SetupSpec::AllModelsVsReal])
            .collect()
    }
}

impl fmt::Display for SetupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetupSpec::GeneratorVsReal(g) => write!(f, "{g}_vs_real"),
            SetupSpec::AllModelsVsReal => f.write_str("all_models_vs_real"),
            SetupSpec::CrossTableShift => f.write_str("cross_table"),
        }
    }
}

impl FromStr for SetupSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all_models_vs_real" => Ok(SetupSpec::AllModelsVsReal),
            "cross_table" => Ok(SetupSpec::CrossTableShift),
            _ => match s.strip_suffix("_vs_real") {
                Some(g) if !g.is_empty() => Ok(SetupSpec::GeneratorVsReal(g.to_string())),
                _ => Err(Error::config("setup", format!("unknown setup `{s}`"))),
            },
        }
    }
}

impl Serialize for SetupSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SetupSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Restrict a pool to the rows of one setup. Record order is preserved.
pub fn select_setup(pool: &RowPool, s: &SetupSpec) -> Result<RowPool> {
    if pool.is_empty() {
        return Err(Error::Ingest("empty row pool".into()));
    }
    match s {
        SetupSpec::GeneratorVsReal(g) => {
            if !pool.generator_ids.contains(g) {
                return Err(Error::UnknownGenerator(g.clone()));
            }
            let rows = pool
                .records
                .iter()
                .filter(|r| r.origin == Origin::Real || r.generator_id.as_deref() == Some(g))
                .cloned()
                .collect();
            Ok(RowPool::from_records(rows))
        }
        SetupSpec::AllModelsVsReal | SetupSpec::CrossTableShift => Ok(pool.clone()),
    }
}
