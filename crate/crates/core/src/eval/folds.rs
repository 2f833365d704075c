use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::data::Origin;
use crate::error::{Error, Result};
use crate::ingest::RowPool;
use crate::util::rng_from;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
    /// Set when folds are grouped by table id.
    pub grouped: bool,
}

/// Split a pool into `k` folds.
///
/// Ungrouped: every `(table_id, origin)` stratum is shuffled and dealt
/// round-robin, continuing the deal across strata so fold sizes differ by
/// at most one. Grouped: table ids are shuffled and dealt round-robin, and
/// each fold tests on every row (real and synthetic) of its tables.
pub fn make_folds(pool: &RowPool, k: usize, grouped: bool, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::config("folds", format!("need at least 2 folds, got {k}")));
    }
    let mut assignment = vec![0usize; pool.len()];
    if grouped {
        let mut tables: Vec<&String> = pool.table_ids.iter().collect();
        if tables.len() < k {
            return Err(Error::TooFewGroups {
                needed: k,
                found: tables.len(),
            });
        }
        tables.shuffle(&mut rng_from(seed, &["folds", "groups"]));
        let part: BTreeMap<&str, usize> = tables.iter().enumerate().map(|(i, t)| (t.as_str(), i % k)).collect();
        for (i, r) in pool.records.iter().enumerate() {
            assignment[i] = part[r.table_id.as_str()];
        }
    } else {
        if pool.len() < k {
            return Err(Error::Ingest(format!("{} rows cannot fill {k} folds", pool.len())));
        }
        let mut strata: BTreeMap<(&str, Origin), Vec<usize>> = BTreeMap::new();
        for (i, r) in pool.records.iter().enumerate() {
            strata.entry((r.table_id.as_str(), r.origin)).or_default().push(i);
        }
        let mut rng = rng_from(seed, &["folds", "strata"]);
        let mut next = 0;
        for (_, mut idx) in strata {
            idx.shuffle(&mut rng);
            for i in idx {
                assignment[i] = next % k;
                next += 1;
            }
        }
    }
    let folds = (0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..pool.len()).partition(|&i| assignment[i] == f);
            Fold { train, test }
        })
        .collect();
    Ok(FoldPlan { folds, grouped })
}

impl FoldPlan {
    /// Table ids on each side of fold `f`.
    pub fn tables(&self, pool: &RowPool, f: usize) -> (BTreeSet<String>, BTreeSet<String>) {
        let side = |idx: &[usize]| idx.iter().map(|&i| pool.records[i].table_id.clone()).collect();
        (side(&self.folds[f].train), side(&self.folds[f].test))
    }
}
