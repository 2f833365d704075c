//! The experiment runner: setups × encoders × detectors × folds.
//!
//! Rows produced by `[[pool.generate]]` entries are re-drawn for every fold
//! with a fold-specific seed. The training side of a fold is sampled from a
//! generator fitted on that fold's training real rows and the test side from
//! one fitted on its test real rows, so the two test classes are drawn
//! independently of everything the detector saw.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentPlan;
use crate::data::{Origin, RowRecord, Table};
use crate::detectors::{fit_detector, score_records, DetectorKind, TrainConfig};
use crate::encoders::{EncoderKind, FittedEncoder};
use crate::error::{Error, Result};
use crate::eval::folds::{make_folds, Fold, FoldPlan};
use crate::eval::metrics::{binary_metrics, roc_auc};
use crate::eval::setup::{select_setup, SetupSpec};
use crate::generators::{fit_generator, sample_synthetic, GeneratorKind};
use crate::ingest::{build_pool, load_sources, Balance, LoadedTables, RowPool};
use crate::par::{map_range, with_jobs, Parallelism};
use crate::util::{derive_seed, mean_std, Fingerprint};

pub const SCHEMA_VERSION: u32 = 1;
pub const THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    fn of(values: &[f64]) -> Option<Stat> {
        (!values.is_empty()).then(|| {
            let (mean, std) = mean_std(values);
            Stat { mean, std }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub auc: f64,
    pub accuracy: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// One (setup, encoder, detector) entry of the grid, aggregated over folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub setup: SetupSpec,
    pub encoder: EncoderKind,
    pub detector: DetectorKind,
    pub auc: Option<Stat>,
    pub accuracy: Option<Stat>,
    pub f1: Option<Stat>,
    pub per_fold: Vec<FoldMetrics>,
    /// Failures of individual folds, as `fold N: message`.
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetupSummary {
    pub setup: SetupSpec,
    pub grouped: bool,
    pub n_rows: usize,
    pub n_synthetic: usize,
    /// `(train, test)` row counts per fold.
    pub fold_sizes: Vec<(usize, usize)>,
    pub test_tables: Vec<Vec<String>>,
}

/// A fitted artifact and the rows it consumed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactAudit {
    pub name: String,
    pub fingerprint: String,
    /// Fingerprint of the identity keys of the rows the artifact was fitted on.
    pub fitted_on: String,
    pub n_rows: usize,
    pub uses_labels: bool,
    /// Set for column codecs fitted from unlabelled rows of an unseen test table.
    pub label_free: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub setup: SetupSpec,
    pub fold: usize,
    pub encoder: EncoderKind,
    pub detector: DetectorKind,
    pub train_rows: String,
    pub test_rows: String,
    pub train_tables: Vec<String>,
    pub test_tables: Vec<String>,
    pub artifacts: Vec<ArtifactAudit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub setup: SetupSpec,
    pub encoder: EncoderKind,
    pub detector: DetectorKind,
    pub fold: usize,
    pub seconds: f64,
}

/// Wall-clock data. The only part of a report that varies between reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Timing {
    pub started_unix: u64,
    pub total_seconds: f64,
    pub cells: Vec<CellTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub seed: u64,
    pub folds: usize,
    pub config_fingerprint: String,
    pub setups: Vec<SetupSummary>,
    pub cells: Vec<CellReport>,
    pub audit: Vec<AuditEntry>,
    pub timing: Timing,
}

impl MetricsReport {
    pub fn cell(&self, setup: &SetupSpec, encoder: EncoderKind, detector: DetectorKind) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| &c.setup == setup && c.encoder == encoder && c.detector == detector)
    }
}

/// Identity of a pooled row, stable across per-fold regeneration.
pub fn row_key(r: &RowRecord) -> String {
    let origin = match r.origin {
        Origin::Real => "real",
        Origin::Synthetic => "synthetic",
    };
    format!(
        "{}|{origin}|{}|{}",
        r.table_id,
        r.generator_id.as_deref().unwrap_or("-"),
        r.source_row
    )
}

fn key_fingerprint<'a>(keys: impl IntoIterator<Item = &'a String>) -> String {
    let sorted: BTreeSet<&String> = keys.into_iter().collect();
    let mut fp = Fingerprint::new("row-keys");
    fp.u64(sorted.len() as u64);
    for k in sorted {
        fp.str(k);
    }
    fp.finish()
}

/// An artifact together with the identity keys of the rows it consumed.
#[derive(Debug, Clone)]
pub struct FittedArtifact {
    pub name: String,
    pub fingerprint: String,
    pub consumed: Vec<String>,
    pub uses_labels: bool,
    /// Table whose unseen rows fitted this artifact without labels.
    pub label_free_table: Option<String>,
}

/// Verify that train and test are disjoint and that every artifact consumed
/// training rows only, except label-free codecs of tables absent from training.
pub fn check_artifacts(
    fold: usize,
    train: &[&RowRecord],
    test: &[&RowRecord],
    artifacts: &[FittedArtifact],
) -> Result<Vec<ArtifactAudit>> {
    let train_keys: BTreeSet<String> = train.iter().map(|r| row_key(r)).collect();
    let test_keys: BTreeSet<String> = test.iter().map(|r| row_key(r)).collect();
    let leak = |detail: String| Error::Leakage { fold, detail };
    if train_keys.len() != train.len() || test_keys.len() != test.len() {
        return Err(leak("row identity keys are not unique".into()));
    }
    if let Some(k) = train_keys.intersection(&test_keys).next() {
        return Err(leak(format!("row `{k}` is on both sides")));
    }
    let train_tables: BTreeSet<&str> = train.iter().map(|r| r.table_id.as_str()).collect();
    artifacts
        .iter()
        .map(|a| {
            match &a.label_free_table {
                None => {
                    if let Some(k) = a.consumed.iter().find(|k| !train_keys.contains(*k)) {
                        return Err(leak(format!("`{}` consumed non-training row `{k}`", a.name)));
                    }
                }
                Some(table) => {
                    if a.uses_labels {
                        return Err(leak(format!("label-free artifact `{}` uses labels", a.name)));
                    }
                    if train_tables.contains(table.as_str()) {
                        return Err(leak(format!("`{}` refitted table `{table}` seen in training", a.name)));
                    }
                    if let Some(k) = a
                        .consumed
                        .iter()
                        .find(|k| !test_keys.contains(*k) || !k.starts_with(&format!("{table}|")))
                    {
                        return Err(leak(format!("`{}` consumed row `{k}` outside table `{table}`", a.name)));
                    }
                }
            }
            Ok(ArtifactAudit {
                name: a.name.clone(),
                fingerprint: a.fingerprint.clone(),
                fitted_on: key_fingerprint(&a.consumed),
                n_rows: a.consumed.len(),
                uses_labels: a.uses_labels,
                label_free: a.label_free_table.is_some(),
            })
        })
        .collect()
}

/// Pool every real and synthetic table, plus one initial draw of each
/// `[[pool.generate]]` generator per real table. No balancing is applied.
pub fn base_pool(plan: &ExperimentPlan, tables: &LoadedTables) -> Result<(RowPool, BTreeMap<String, GeneratorKind>)> {
    let mut spec = plan.pool.clone();
    spec.balance = Balance::AsIs;
    let pool = build_pool(&spec, tables, derive_seed(plan.seed, &["pool"]))?;
    let mut generated = BTreeMap::new();
    let mut records = pool.records;
    for g in &plan.pool.generate {
        if pool.generator_ids.contains(&g.generator_id) || generated.insert(g.generator_id.clone(), g.kind).is_some() {
            return Err(Error::config("pool.generate", format!("duplicate generator id `{}`", g.generator_id)));
        }
        for (id, table) in &tables.real {
            let fitted = fit_generator(g.kind, table)?;
            let seed = derive_seed(plan.seed, &["generate", &g.generator_id, id]);
            let sample = sample_synthetic(&fitted, table.len(), seed)?;
            for (i, row) in sample.rows.into_iter().enumerate() {
                records.push(RowRecord::synthetic(id, &g.generator_id, table.schema.clone(), row, i));
            }
        }
    }
    Ok((RowPool::from_records(records), generated))
}

/// Copy of the pool's records with generated rows re-drawn for one fold.
fn materialize_fold(
    pool: &RowPool,
    fold: &Fold,
    generated: &BTreeMap<String, GeneratorKind>,
    seed: u64,
) -> Result<Vec<RowRecord>> {
    let mut records = pool.records.clone();
    let mut in_test = vec![false; records.len()];
    for &i in &fold.test {
        in_test[i] = true;
    }
    let mut slots: BTreeMap<(&str, &str, bool), Vec<usize>> = BTreeMap::new();
    for (i, r) in pool.records.iter().enumerate() {
        if let Some(g) = r.generator_id.as_deref().filter(|g| generated.contains_key(*g)) {
            slots.entry((r.table_id.as_str(), g, in_test[i])).or_default().push(i);
        }
    }
    for ((table, gen, test_side), idx) in slots {
        let real_rows = |side: Option<bool>| -> Vec<usize> {
            (0..pool.len())
                .filter(|&i| {
                    let r = &pool.records[i];
                    r.origin == Origin::Real && r.table_id == table && side.is_none_or(|s| in_test[i] == s)
                })
                .collect()
        };
        let mut source = real_rows(Some(test_side));
        if source.is_empty() {
            source = real_rows(None);
        }
        let Some(&first) = source.first() else {
            return Err(Error::EmptyTable(table.to_string()));
        };
        let schema = pool.records[first].schema.clone();
        let rows = source.iter().map(|&i| pool.records[i].cells.clone()).collect();
        let fitted = fit_generator(generated[gen], &Table::new((*schema).clone(), rows)?)?;
        let side = if test_side { "test" } else { "train" };
        let sample = sample_synthetic(&fitted, idx.len(), derive_seed(seed, &["regenerate", gen, table, side]))?;
        for (slot, row) in idx.into_iter().zip(sample.rows) {
            records[slot].cells = row;
        }
    }
    Ok(records)
}

fn balanced(plan: &ExperimentPlan, base: &RowPool, spec: &SetupSpec) -> Result<RowPool> {
    let name = spec.to_string();
    let pool = select_setup(base, spec)?.rebalance(plan.pool.balance, derive_seed(plan.seed, &["balance", &name]));
    if pool.is_empty() {
        return Err(Error::Ingest(format!("setup `{name}` has no rows after balancing")));
    }
    Ok(pool)
}

/// The balanced pool of one setup, generated rows at their initial draw.
pub fn setup_pool(plan: &ExperimentPlan, tables: &LoadedTables, spec: &SetupSpec) -> Result<RowPool> {
    let (base, _) = base_pool(plan, tables)?;
    balanced(plan, &base, spec)
}

struct SetupRun {
    spec: SetupSpec,
    pool: RowPool,
    plan: FoldPlan,
    fold_records: Vec<Vec<RowRecord>>,
    table_index: BTreeMap<String, usize>,
}

fn prepare_setup(
    plan: &ExperimentPlan,
    base: &RowPool,
    generated: &BTreeMap<String, GeneratorKind>,
    spec: &SetupSpec,
) -> Result<SetupRun> {
    let name = spec.to_string();
    let pool = balanced(plan, base, spec)?;
    let folds = make_folds(&pool, plan.folds, spec.grouped(), derive_seed(plan.seed, &["folds", &name]))?;
    let fold_records = folds
        .folds
        .iter()
        .enumerate()
        .map(|(f, fold)| {
            materialize_fold(&pool, fold, generated, derive_seed(plan.seed, &["fold-data", &name, &f.to_string()]))
        })
        .collect::<Result<Vec<_>>>()?;
    let table_index = pool.table_ids.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    Ok(SetupRun {
        spec: spec.clone(),
        pool,
        plan: folds,
        fold_records,
        table_index,
    })
}

struct JobResult {
    metrics: FoldMetrics,
    audit: AuditEntry,
}

fn run_job(
    plan: &ExperimentPlan,
    run: &SetupRun,
    f: usize,
    encoder: EncoderKind,
    detector: DetectorKind,
) -> Result<JobResult> {
    let name = run.spec.to_string();
    let fold = &run.plan.folds[f];
    let records = &run.fold_records[f];
    let train: Vec<&RowRecord> = fold.train.iter().map(|&i| &records[i]).collect();
    let test: Vec<&RowRecord> = fold.test.iter().map(|&i| &records[i]).collect();
    let train_keys: Vec<String> = train.iter().map(|r| row_key(r)).collect();
    let fs = f.to_string();

    let mut enc = FittedEncoder::fit(
        encoder,
        &train,
        &plan.encoding,
        derive_seed(plan.seed, &["encoder", &name, &fs]),
    )?;
    let encoder_fp = enc.fingerprint();
    let mut artifacts = vec![FittedArtifact {
        name: format!("encoder:{encoder}"),
        fingerprint: encoder_fp,
        consumed: train_keys.clone(),
        uses_labels: false,
        label_free_table: None,
    }];
    if run.spec.grouped() {
        for table in enc.fit_missing_codecs(&test)? {
            let FittedEncoder::Column { codecs, .. } = &enc else { unreachable!() };
            artifacts.push(FittedArtifact {
                name: format!("codec:{table}"),
                fingerprint: codecs[&table].fingerprint(),
                consumed: test.iter().filter(|r| r.table_id == table).map(|r| row_key(r)).collect(),
                uses_labels: false,
                label_free_table: Some(table),
            });
        }
    }

    let strata: Vec<usize> = train.iter().map(|r| run.table_index[&r.table_id]).collect();
    let cfg = TrainConfig {
        seed: derive_seed(
            plan.seed,
            &["train", &name, &fs, encoder.name(), detector.name(), &plan.train.seed.to_string()],
        ),
        ..plan.train.clone()
    };
    let det = fit_detector(detector, &enc, &train, Some(&strata), &cfg)?;
    artifacts.push(FittedArtifact {
        name: format!("detector:{detector}"),
        fingerprint: det.fingerprint(),
        consumed: train_keys,
        uses_labels: true,
        label_free_table: None,
    });
    let audited = check_artifacts(f, &train, &test, &artifacts)?;

    let scores = score_records(&det, &enc, &test, &cfg)?;
    let labels: Vec<u8> = test.iter().map(|r| r.label()).collect();
    let auc = roc_auc(&scores, &labels)?;
    let m = binary_metrics(&scores, &labels, THRESHOLD);
    let (train_tables, test_tables) = run.plan.tables(&run.pool, f);
    Ok(JobResult {
        metrics: FoldMetrics {
            fold: f,
            auc,
            accuracy: m.accuracy,
            f1: m.f1,
            precision: m.precision,
            recall: m.recall,
            n_train: train.len(),
            n_test: test.len(),
        },
        audit: AuditEntry {
            setup: run.spec.clone(),
            fold: f,
            encoder,
            detector,
            train_rows: key_fingerprint(&train.iter().map(|r| row_key(r)).collect::<Vec<_>>()),
            test_rows: key_fingerprint(&test.iter().map(|r| row_key(r)).collect::<Vec<_>>()),
            train_tables: train_tables.into_iter().collect(),
            test_tables: test_tables.into_iter().collect(),
            artifacts: audited,
        },
    })
}

/// Load the plan's sources and run it.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<MetricsReport> {
    let tables = load_sources(&plan.pool, &plan.base_dir)?;
    run_with_tables(plan, &tables)
}

/// Run a plan on already loaded tables. Failing cells are reported in the
/// cell's `errors`; a leakage violation aborts the run.
pub fn run_with_tables(plan: &ExperimentPlan, tables: &LoadedTables) -> Result<MetricsReport> {
    plan.validate()?;
    let started = Instant::now();
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let (base, generated) = base_pool(plan, tables)?;
    let runs = plan
        .setups
        .iter()
        .map(|s| prepare_setup(plan, &base, &generated, s))
        .collect::<Result<Vec<_>>>()?;

    let grid = plan.grid();
    let mut jobs = Vec::new();
    for (s, run) in runs.iter().enumerate() {
        for (g, _) in grid.iter().enumerate() {
            for f in 0..run.plan.folds.len() {
                jobs.push((s, g, f));
            }
        }
    }
    let mode = if plan.jobs > 1 {
        Parallelism::Parallel
    } else {
        Parallelism::Sequential
    };
    let outputs: Vec<(Result<JobResult>, f64)> = with_jobs(plan.jobs, || {
        map_range(jobs.len(), mode, |j| {
            let (s, g, f) = jobs[j];
            let (encoder, detector) = grid[g];
            let t = Instant::now();
            let out = run_job(plan, &runs[s], f, encoder, detector);
            if let Err(e) = &out {
                log::warn!("{} / {encoder} / {detector} / fold {f}: {e}", runs[s].spec);
            }
            (out, t.elapsed().as_secs_f64())
        })
    });

    let mut cells: Vec<CellReport> = Vec::new();
    let mut audit = Vec::new();
    let mut timing = Vec::new();
    for (&(s, g, f), (out, seconds)) in jobs.iter().zip(outputs) {
        let (encoder, detector) = grid[g];
        let spec = &runs[s].spec;
        if cells.last().is_none_or(|c| &c.setup != spec || c.encoder != encoder || c.detector != detector) {
            cells.push(CellReport {
                setup: spec.clone(),
                encoder,
                detector,
                auc: None,
                accuracy: None,
                f1: None,
                per_fold: Vec::new(),
                errors: Vec::new(),
            });
        }
        let cell = cells.last_mut().expect("cell was just pushed");
        match out {
            Ok(r) => {
                cell.per_fold.push(r.metrics);
                audit.push(r.audit);
            }
            Err(e @ Error::Leakage { .. }) => return Err(e),
            Err(e) => cell.errors.push(format!("fold {f}: {e}")),
        }
        timing.push(CellTiming {
            setup: spec.clone(),
            encoder,
            detector,
            fold: f,
            seconds,
        });
    }
    for c in &mut cells {
        let of = |m: fn(&FoldMetrics) -> f64| Stat::of(&c.per_fold.iter().map(m).collect::<Vec<_>>());
        c.auc = of(|m| m.auc);
        c.accuracy = of(|m| m.accuracy);
        c.f1 = of(|m| m.f1);
    }

    let setups = runs
        .iter()
        .map(|r| SetupSummary {
            setup: r.spec.clone(),
            grouped: r.plan.grouped,
            n_rows: r.pool.len(),
            n_synthetic: r.pool.records.iter().filter(|x| x.origin == Origin::Synthetic).count(),
            fold_sizes: r.plan.folds.iter().map(|f| (f.train.len(), f.test.len())).collect(),
            test_tables: (0..r.plan.folds.len())
                .map(|f| r.plan.tables(&r.pool, f).1.into_iter().collect())
                .collect(),
        })
        .collect();

    Ok(MetricsReport {
        schema_version: SCHEMA_VERSION,
        seed: plan.seed,
        folds: plan.folds,
        config_fingerprint: plan.fingerprint(),
        setups,
        cells,
        audit,
        timing: Timing {
            started_unix,
            total_seconds: started.elapsed().as_secs_f64(),
            cells: timing,
        },
    })
}
