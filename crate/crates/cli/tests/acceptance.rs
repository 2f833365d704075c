//! Acceptance criteria, one test each. Every test writes a single
//! `acceptance N: PASS|FAIL` line to stderr (uncaptured) before asserting.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use tabdetect::config::{parse_experiment_str, ExperimentPlan};
use tabdetect::data::{Cell, ColumnKind, Origin, RowRecord, Schema};
use tabdetect::detectors::transformer::Arch;
use tabdetect::detectors::{
    fit_detector, predict_column_transformer, predict_gbdt, predict_logistic, ColumnLayout, ColumnTransformerModel,
    Detector, DetectorKind, FeatureMatrix, TextLayout, TextTransformerModel, TrainConfig, TransformerConfig,
};
use tabdetect::encoders::codec::quantile;
use tabdetect::encoders::linearize::linearize_with_permutation;
use tabdetect::encoders::trigram::{char_trigrams, word_trigrams};
use tabdetect::encoders::{
    apply_column_codec, build_vocab, char_trigram_bag, fit_column_codec, word_trigram_bag, ColumnVec, EncodedRow,
    EncoderKind, EncodingConfig, FittedEncoder, TokenSeq,
};
use tabdetect::eval::harness::{check_artifacts, row_key, FittedArtifact};
use tabdetect::eval::{binary_metrics, make_folds, roc_auc, run_with_tables, MetricsReport, SetupSpec};
use tabdetect::fixtures::{correlated_pair, pearson, table_family};
use tabdetect::generators::{fit_generator, sample_synthetic, GeneratorKind};
use tabdetect::ingest::{Balance, LoadedTables, RowPool};
use tabdetect::nn::{grad_check, Graph, ParamSet};
use tabdetect::par::Parallelism;
use tabdetect::util::rng_from;
use tabdetect::Error;

fn verdict(n: u32, name: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "acceptance {n:>2} {name}: {status} ({detail})");
}

fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1.0;
            num += if si > sj {
                1.0
            } else if si == sj {
                0.5
            } else {
                0.0
            };
        }
    }
    num / pairs
}

#[test]
fn criterion_01_auc_matches_pairwise_oracle() {
    let t = Instant::now();
    let mut rng = rng_from(1, &["acceptance", "auc"]);
    let mut worst: f64 = 0.0;
    for inst in 0..100 {
        let n = rng.random_range(2..=1000);
        let levels = if inst % 2 == 0 { rng.random_range(2..12) } else { 0 };
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                if levels > 0 {
                    rng.random_range(0..levels) as f64 / levels as f64
                } else {
                    rng.random()
                }
            })
            .collect();
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let fast = roc_auc(&scores, &labels).unwrap();
        worst = worst.max((fast - pairwise_auc(&scores, &labels)).abs());
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = worst <= 1e-12 && secs < 5.0;
    verdict(1, "AUC oracle equivalence", pass, &format!("max |diff| {worst:.2e}, {secs:.2}s"));
    assert!(pass);
}

fn grad_config() -> TransformerConfig {
    TransformerConfig {
        d_model: 64,
        heads: 4,
        layers: 2,
        ff_hidden: 128,
        ..TransformerConfig::default()
    }
}

fn randomise(params: &mut ParamSet, names: &[&str], seed: u64) {
    let mut rng = rng_from(seed, &["acceptance", "head"]);
    let d = Normal::new(0.0, 0.5).unwrap();
    for name in names {
        for v in &mut params.get_mut(name).unwrap().data {
            *v = d.sample(&mut rng);
        }
    }
}

fn random_column_vec(rng: &mut impl Rng, d_num: usize, d_cat: usize) -> ColumnVec {
    let n_num = rng.random_range(1..=d_num);
    let n_cat = rng.random_range(0..=d_cat);
    ColumnVec {
        num: (0..d_num).map(|i| if i < n_num { rng.random() } else { 0.0 }).collect(),
        num_mask: (0..d_num).map(|i| u8::from(i < n_num)).collect(),
        cat: (0..d_cat).map(|i| if i < n_cat { rng.random_range(0..40) } else { 0 }).collect(),
        cat_mask: (0..d_cat).map(|i| u8::from(i < n_cat)).collect(),
    }
}

#[test]
fn criterion_02_transformer_gradients_match_finite_differences() {
    let t = Instant::now();
    let arch = Arch::from_config(&grad_config());
    let enc = EncodingConfig::default();
    let mut rng = rng_from(2, &["acceptance", "grad-batch"]);
    let labels: Vec<f64> = (0..8).map(|i| (i % 2) as f64).collect();

    let mut col = ColumnTransformerModel::new(
        ColumnLayout {
            arch: arch.clone(),
            d_num: enc.d_num,
            d_cat: enc.d_cat,
        },
        21,
    )
    .unwrap();
    randomise(&mut col.params, &["head.w", "head.b"], 1);
    let rows: Vec<ColumnVec> = (0..8).map(|_| random_column_vec(&mut rng, enc.d_num, enc.d_cat)).collect();
    let refs: Vec<&ColumnVec> = rows.iter().collect();
    let layout = col.layout.clone();
    let col_err = grad_check(
        |g: &mut Graph| {
            let z = layout.forward(g, &refs, None)?;
            g.bce_loss(z, &labels)
        },
        &mut col.params,
        1e-5,
        50,
        3,
    )
    .unwrap();

    let vocab_size = 40;
    let mut text = TextTransformerModel::new(TextLayout { arch, vocab_size }, 22).unwrap();
    randomise(&mut text.params, &["head.w", "head.b"], 2);
    let seqs: Vec<TokenSeq> = (0..8)
        .map(|_| TokenSeq {
            ids: (0..rng.random_range(4..24)).map(|_| rng.random_range(3..vocab_size as u32)).collect(),
        })
        .collect();
    let refs: Vec<&TokenSeq> = seqs.iter().collect();
    let layout = text.layout.clone();
    let text_err = grad_check(
        |g: &mut Graph| {
            let z = layout.forward(g, &refs, None)?;
            g.bce_loss(z, &labels)
        },
        &mut text.params,
        1e-5,
        50,
        4,
    )
    .unwrap();

    let secs = t.elapsed().as_secs_f64();
    let pass = col_err < 1e-4 && text_err < 1e-4 && secs < 60.0;
    verdict(
        2,
        "gradient fidelity",
        pass,
        &format!("column {col_err:.2e}, text {text_err:.2e}, {secs:.1}s"),
    );
    assert!(pass);
}

fn fixture_pool(tables: &[(String, tabdetect::data::Table)], generator: GeneratorKind, seed: u64) -> RowPool {
    let mut recs = Vec::new();
    for (id, t) in tables {
        let synth = sample_synthetic(&fit_generator(generator, t).unwrap(), t.len(), seed).unwrap();
        for (i, row) in t.rows.iter().enumerate() {
            recs.push(RowRecord::real(id, t.schema.clone(), row.clone(), i));
        }
        for (i, row) in synth.rows.into_iter().enumerate() {
            recs.push(RowRecord::synthetic(id, "g", t.schema.clone(), row, i));
        }
    }
    RowPool::from_records(recs)
}

#[test]
fn criterion_03_constant_positive_classifier_f1() {
    let mut tables = table_family(50, 3);
    tables.truncate(3);
    let pool = fixture_pool(&tables, GeneratorKind::MarginalResample, 3).rebalance(Balance::EqualPerOrigin, 3);
    let labels = pool.labels();
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let m = binary_metrics(&vec![1.0; labels.len()], &labels, 0.5);
    let pass = 2 * positives == labels.len()
        && m.recall == 1.0
        && m.precision == 0.5
        && (m.f1 - 2.0 / 3.0).abs() <= 1e-9;
    verdict(
        3,
        "degenerate F1",
        pass,
        &format!("recall {}, precision {}, f1 {:.12}", m.recall, m.precision, m.f1),
    );
    assert!(pass);
}

#[test]
fn criterion_04_grouped_folds_are_sound() {
    let schema = Arc::new(Schema::from_pairs("t", &[("x", ColumnKind::Numerical)]).unwrap());
    let mut rng = rng_from(4, &["acceptance", "pools"]);
    let mut failures = 0;
    for p in 0..100 {
        let n_tables = rng.random_range(3..=14);
        let mut recs = Vec::new();
        for t in 0..n_tables {
            let id = format!("table{t}");
            for i in 0..rng.random_range(1..6) {
                recs.push(RowRecord::real(&id, schema.clone(), vec![Cell::Num(i as f64)], i));
            }
            for i in 0..rng.random_range(1..6) {
                recs.push(RowRecord::synthetic(&id, "g", schema.clone(), vec![Cell::Num(i as f64)], i));
            }
        }
        let pool = RowPool::from_records(recs);
        let plan = make_folds(&pool, 3, true, p).unwrap();
        let mut seen: Vec<String> = Vec::new();
        for f in 0..plan.folds.len() {
            let (train, test) = plan.tables(&pool, f);
            if train.intersection(&test).next().is_some() {
                failures += 1;
            }
            seen.extend(test);
        }
        seen.sort();
        let all: Vec<String> = pool.table_ids.iter().cloned().collect();
        if seen != all {
            failures += 1;
        }
    }
    let pass = failures == 0;
    verdict(4, "grouped-fold soundness", pass, &format!("{failures} violations over 100 pools"));
    assert!(pass);
}

#[test]
fn criterion_05_abalone_strings() {
    let schema = Schema::from_pairs(
        "Abalone",
        &[
            ("Name", ColumnKind::Categorical),
            ("Size", ColumnKind::Numerical),
            ("#Num", ColumnKind::Numerical),
            ("#Cat", ColumnKind::Numerical),
        ],
    )
    .unwrap();
    let row = RowRecord::real(
        "meta",
        Arc::new(schema),
        vec![
            Cell::Cat("Abalone".into()),
            Cell::Num(4177.0),
            Cell::Num(7.0),
            Cell::Num(2.0),
        ],
        0,
    );
    let line = linearize_with_permutation(&row, &[0, 1, 2, 3]).unwrap();
    let cv = build_vocab(vec![char_trigrams(&line.text)], 1 << 18).unwrap();
    let cbag = char_trigram_bag(&line.text, &cv);
    let wv = build_vocab(vec![word_trigrams(&line.text)], 1 << 18).unwrap();
    let wbag = word_trigram_bag(&line, &wv);
    let chars_ok = ["Nam", "e:A", ":41", "t:2"].iter().all(|t| cbag.count(cv.id(t)) >= 1);
    let words_ok = ["Name Abalone Size", "4177 #Num 7"].iter().all(|t| wbag.count(wv.id(t)) >= 1);
    let text_ok = line.text == "Name:Abalone,Size:4177,#Num:7,#Cat:2";
    let pass = text_ok && chars_ok && words_ok;
    verdict(5, "row string conformance", pass, &format!("`{}`", line.text));
    assert!(pass);
}

fn ecdf(reference: &[f64], x: f64) -> f64 {
    let below = reference.iter().filter(|&&v| v < x).count() as f64;
    let ties = reference.iter().filter(|&&v| v == x).count() as f64;
    (below + 0.5 * ties) / reference.len() as f64
}

fn masked_garbage(v: &ColumnVec, rng: &mut impl Rng) -> ColumnVec {
    let mut g = v.clone();
    for (x, &m) in g.num.iter_mut().zip(&v.num_mask) {
        if m == 0 {
            *x = rng.random_range(-5.0..5.0);
        }
    }
    for (c, &m) in g.cat.iter_mut().zip(&v.cat_mask) {
        if m == 0 {
            *c = rng.random_range(1..30);
        }
    }
    g
}

#[test]
fn criterion_06_encoder_invariants() {
    let mut rng = rng_from(6, &["acceptance", "codec"]);
    let mut problems = Vec::new();

    for c in 0..100 {
        let n = rng.random_range(1..200);
        let levels = rng.random_range(2..50) as f64;
        let values: Vec<f64> = (0..n).map(|_| (rng.random_range(-1.0..1.0) * levels).round()).collect();
        let schema = Schema::from_pairs("q", &[("v", ColumnKind::Numerical)]).unwrap();
        let rows: Vec<Vec<Cell>> = values.iter().map(|&v| vec![Cell::Num(v)]).collect();
        let table = tabdetect::data::Table::new(schema, rows).unwrap();
        let codec = fit_column_codec(&table).unwrap();
        let mut probes: Vec<f64> = (0..50).map(|_| (rng.random_range(-1.5..1.5) * levels).round()).collect();
        probes.sort_by(f64::total_cmp);
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let mut last = -1.0;
        for &x in &probes {
            let rec = RowRecord::real("q", table.schema.clone(), vec![Cell::Num(x)], 0);
            let q = apply_column_codec(&codec, &rec, 1, 0).unwrap().num[0];
            if !(0.0..=1.0).contains(&q) || (q - ecdf(&values, x)).abs() > 1e-12 || q < last {
                problems.push(format!("column {c}: quantile({x}) = {q}"));
            }
            if (q - quantile(&sorted, x)).abs() > 1e-12 {
                problems.push(format!("column {c}: codec and quantile disagree at {x}"));
            }
            last = q;
        }
    }

    let fam = table_family(200, 6);
    for (id, t) in &fam {
        let codec = fit_column_codec(t).unwrap();
        let mut cells = t.rows[0].clone();
        for (cell, col) in cells.iter_mut().zip(&t.schema.columns) {
            if col.kind == ColumnKind::Categorical {
                *cell = Cell::Cat("never-seen-level".into());
            }
        }
        let v = apply_column_codec(&codec, &RowRecord::real(id, t.schema.clone(), cells, 0), 4, 2).unwrap();
        let n_num = t.schema.num_count().min(4);
        let n_cat = t.schema.cat_count().min(2);
        if v.cat[..n_cat].iter().any(|&c| c != 0) {
            problems.push(format!("{id}: unseen level not encoded as 0"));
        }
        let mask_num: usize = v.num_mask.iter().map(|&m| m as usize).sum();
        let mask_cat: usize = v.cat_mask.iter().map(|&m| m as usize).sum();
        if mask_num != n_num || mask_cat != n_cat {
            problems.push(format!("{id}: mask sums {mask_num}/{mask_cat} vs {n_num}/{n_cat}"));
        }
    }

    let trio: Vec<(String, tabdetect::data::Table)> = fam.into_iter().filter(|(id, _)| id == "trio").collect();
    let pool = fixture_pool(&trio, GeneratorKind::MarginalResample, 6);
    let rows: Vec<&RowRecord> = pool.records.iter().collect();
    let enc_cfg = EncodingConfig {
        d_num: 4,
        d_cat: 2,
        ..EncodingConfig::default()
    };
    let enc = FittedEncoder::fit(EncoderKind::Column, &rows, &enc_cfg, 6).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        transformer: TransformerConfig {
            d_model: 16,
            heads: 2,
            layers: 1,
            ff_hidden: 32,
            ..TransformerConfig::default()
        },
        ..TrainConfig::default()
    };
    let clean: Vec<ColumnVec> = rows[..40]
        .iter()
        .map(|r| match enc.encode(r).unwrap() {
            EncodedRow::Columns(c) => c,
            other => panic!("{other:?}"),
        })
        .collect();
    let dirty: Vec<ColumnVec> = clean.iter().map(|c| masked_garbage(c, &mut rng)).collect();
    if clean == dirty {
        problems.push("no masked slots were perturbed".into());
    }
    let wrap = |v: &[ColumnVec]| v.iter().cloned().map(EncodedRow::Columns).collect::<Vec<_>>();
    for kind in [DetectorKind::Logistic, DetectorKind::Gbdt, DetectorKind::ColumnTransformer] {
        let det = fit_detector(kind, &enc, &rows, None, &cfg).unwrap();
        let score = |v: &[ColumnVec]| match &det {
            Detector::Logistic(m) => predict_logistic(m, &FeatureMatrix::from_encoded(&wrap(v), &enc).unwrap(), &cfg),
            Detector::Gbdt(m) => predict_gbdt(
                m,
                &FeatureMatrix::from_encoded(&wrap(v), &enc).unwrap(),
                Parallelism::Sequential,
            ),
            Detector::ColumnTransformer(m) => predict_column_transformer(m, v, &cfg),
            Detector::TextTransformer(_) => unreachable!(),
        }
        .unwrap();
        if score(&clean) != score(&dirty) {
            problems.push(format!("{kind} reads masked slots"));
        }
    }

    let pass = problems.is_empty();
    let detail = match problems.first() {
        None => "100 quantile columns, 6 tables, 3 detectors checked".to_string(),
        Some(p) => format!("{} problems, first: {p}", problems.len()),
    };
    verdict(6, "encoder invariants", pass, &detail);
    assert!(pass);
}

const SMALL_TRAIN: &str = r#"
[encoding]
d_num = 4
d_cat = 2
[train]
epochs = 10
batch_size = 128
lr = 3e-3
[train.transformer]
d_model = 32
heads = 4
layers = 2
ff_hidden = 64
"#;

fn plan(head: &str, seed: u64) -> ExperimentPlan {
    let text = format!(
        r#"seed = {seed}
{head}
[[pool.real]]
table_id = "unused"
csv = "unused.csv"
[[pool.generate]]
generator_id = "mr"
kind = "marginal-resample"
[[pool.generate]]
generator_id = "nc"
kind = "noisy-copy"
noise_scale = 0.0
{SMALL_TRAIN}"#
    );
    parse_experiment_str(&text, Path::new(".")).unwrap()
}

fn auc_of(r: &MetricsReport, setup: &str, e: EncoderKind, d: DetectorKind) -> f64 {
    let c = r.cell(&setup.parse::<SetupSpec>().unwrap(), e, d).unwrap();
    assert!(c.errors.is_empty(), "{:?}", c.errors);
    c.auc.unwrap().mean
}

#[test]
fn criterion_07_detectability_without_shift() {
    let t = Instant::now();
    let table = correlated_pair(5000, 7);
    let x: Vec<f64> = table.column(0).map(|c| if let Cell::Num(v) = c { *v } else { 0.0 }).collect();
    let y: Vec<f64> = table.column(1).map(|c| if let Cell::Num(v) = c { *v } else { 0.0 }).collect();
    let corr = pearson(&x, &y);
    let mut tables = LoadedTables::default();
    tables.real.insert("pairs".into(), table);

    let setups = r#"setups = ["mr_vs_real", "nc_vs_real"]"#;
    let column = plan(
        &format!("{setups}\nencoders = [\"column\"]\ndetectors = [\"logistic\", \"gbdt\", \"column-transformer\"]"),
        7,
    );
    let text = plan(
        &format!("{setups}\nencoders = [\"3gram-char\", \"flat-text\"]\ndetectors = [\"logistic\", \"text-transformer\"]"),
        7,
    );
    let a = run_with_tables(&column, &tables).unwrap();
    let b = run_with_tables(&text, &tables).unwrap();

    let gbdt = auc_of(&a, "mr_vs_real", EncoderKind::Column, DetectorKind::Gbdt);
    let ct = auc_of(&a, "mr_vs_real", EncoderKind::Column, DetectorKind::ColumnTransformer);
    let mut copies = Vec::new();
    for r in [&a, &b] {
        for c in r.cells.iter().filter(|c| c.setup.to_string() == "nc_vs_real") {
            copies.push((format!("{}/{}", c.detector, c.encoder), auc_of(r, "nc_vs_real", c.encoder, c.detector)));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let copies_ok = copies.len() == 6 && copies.iter().all(|(_, auc)| (0.45..=0.55).contains(auc));
    let pass = corr >= 0.95 && gbdt >= 0.65 && ct >= 0.65 && copies_ok && secs < 600.0;
    let copy_list: Vec<String> = copies.iter().map(|(k, v)| format!("{k} {v:.3}")).collect();
    verdict(
        7,
        "detectability fixture",
        pass,
        &format!(
            "corr {corr:.3}; gbdt/column {gbdt:.3}, column-transformer {ct:.3}; exact copies [{}]; {secs:.0}s",
            copy_list.join(", ")
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_cross_table_degradation() {
    let mut lines = Vec::new();
    let mut pass = true;
    for seed in [1u64, 2, 3] {
        let mut tables = LoadedTables::default();
        for (id, t) in table_family(600, seed) {
            tables.real.insert(id, t);
        }
        let p = plan(
            r#"setups = ["mr_vs_real", "cross_table"]
encoders = ["column"]
detectors = ["column-transformer"]"#,
            seed,
        );
        let r = run_with_tables(&p, &tables).unwrap();
        let no_shift = auc_of(&r, "mr_vs_real", EncoderKind::Column, DetectorKind::ColumnTransformer);
        let shift = auc_of(&r, "cross_table", EncoderKind::Column, DetectorKind::ColumnTransformer);
        pass &= shift <= no_shift;
        lines.push(format!("seed {seed}: {no_shift:.3} -> {shift:.3}"));
    }
    verdict(8, "cross-table degradation", pass, &lines.join("; "));
    assert!(pass);
}

fn bundled_fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn evaluate(out: &Path, extra: &[&str]) -> (Vec<u8>, Vec<u8>) {
    let status = Command::new(env!("CARGO_BIN_EXE_tabdetect"))
        .arg("evaluate")
        .arg("--config")
        .arg(bundled_fixtures().join("exp.toml"))
        .arg("--out-dir")
        .arg(out)
        .args(extra)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    (
        std::fs::read(out.join("report.json")).unwrap(),
        std::fs::read(out.join("report.txt")).unwrap(),
    )
}

fn without_timing(json: &[u8]) -> Vec<u8> {
    let text = std::str::from_utf8(json).unwrap();
    let cut = text.find("\n  \"timing\"").expect("report has a timing field");
    json[..cut].to_vec()
}

#[test]
fn criterion_09_evaluate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a_json, a_txt) = evaluate(&dir.path().join("a"), &[]);
    let (b_json, b_txt) = evaluate(&dir.path().join("b"), &[]);
    let (c_json, c_txt) = evaluate(&dir.path().join("c"), &["--jobs", "2"]);
    let same = without_timing(&a_json) == without_timing(&b_json) && a_txt == b_txt;
    let same_jobs = without_timing(&a_json) == without_timing(&c_json) && a_txt == c_txt;
    let parsed: serde_json::Value = serde_json::from_slice(&a_json).unwrap();
    let has_timing = parsed.get("timing").is_some_and(|t| t.get("total_seconds").is_some());
    let pass = same && same_jobs && has_timing;
    verdict(
        9,
        "end-to-end determinism",
        pass,
        &format!("rerun identical: {same}, --jobs 2 identical: {same_jobs}, {} bytes", a_json.len()),
    );
    assert!(pass);
}

#[test]
fn criterion_10_leakage_audit() {
    let mut tables = LoadedTables::default();
    for (id, t) in table_family(120, 10) {
        tables.real.insert(id, t);
    }
    let p = plan(
        r#"setups = ["all_models_vs_real", "cross_table"]
encoders = ["column", "3gram-char", "flat-text"]
detectors = ["logistic", "gbdt"]"#,
        10,
    );
    let r = run_with_tables(&p, &tables).unwrap();
    let mut problems = Vec::new();
    let mut label_free = 0;
    for a in &r.audit {
        let grouped = a.setup == SetupSpec::CrossTableShift;
        let folds = &r.setups.iter().find(|s| s.setup == a.setup).unwrap().fold_sizes;
        if grouped && a.train_tables.iter().any(|t| a.test_tables.contains(t)) {
            problems.push(format!("fold {}: tables on both sides", a.fold));
        }
        if a.train_rows == a.test_rows {
            problems.push(format!("fold {}: identical train and test fingerprints", a.fold));
        }
        for x in &a.artifacts {
            if x.label_free {
                label_free += 1;
                let table = x.name.strip_prefix("codec:").unwrap_or("");
                if !grouped || x.uses_labels || !a.test_tables.iter().any(|t| t == table) {
                    problems.push(format!("{}: bad label-free artifact {}", a.setup, x.name));
                }
            } else if x.fitted_on != a.train_rows || x.n_rows != folds[a.fold].0 {
                problems.push(format!("{} fold {}: {} not fitted on the training split", a.setup, a.fold, x.name));
            }
        }
    }
    if label_free == 0 {
        problems.push("no label-free codecs recorded under cross-table shift".into());
    }

    let fam = table_family(6, 11);
    let rec = |k: usize, i: usize, origin: Origin| {
        let (id, t) = &fam[k];
        match origin {
            Origin::Real => RowRecord::real(id, t.schema.clone(), t.rows[i].clone(), i),
            Origin::Synthetic => RowRecord::synthetic(id, "g", t.schema.clone(), t.rows[i].clone(), i),
        }
    };
    let train = [rec(0, 0, Origin::Real), rec(0, 1, Origin::Synthetic)];
    let test = [rec(1, 0, Origin::Real), rec(1, 1, Origin::Synthetic)];
    let tr: Vec<&RowRecord> = train.iter().collect();
    let te: Vec<&RowRecord> = test.iter().collect();
    let artifact = |rows: &[RowRecord], uses_labels, table: Option<&str>| FittedArtifact {
        name: "probe".into(),
        fingerprint: String::new(),
        consumed: rows.iter().map(row_key).collect(),
        uses_labels,
        label_free_table: table.map(String::from),
    };
    let caught = [
        artifact(&test, true, None),
        artifact(&test, true, Some(&fam[1].0)),
        artifact(&train, false, Some(&fam[0].0)),
    ]
    .into_iter()
    .filter(|a| matches!(check_artifacts(0, &tr, &te, std::slice::from_ref(a)), Err(Error::Leakage { .. })))
    .count();
    let clean = check_artifacts(0, &tr, &te, &[artifact(&train, true, None), artifact(&test, false, Some(&fam[1].0))]);
    if caught != 3 || clean.is_err() {
        problems.push(format!("negative controls: {caught}/3 caught, clean ok: {}", clean.is_ok()));
    }

    let pass = problems.is_empty();
    verdict(
        10,
        "leakage audit",
        pass,
        &format!(
            "{} fold entries, {label_free} label-free codecs, {} problems{}",
            r.audit.len(),
            problems.len(),
            problems.first().map(|p| format!(", first: {p}")).unwrap_or_default()
        ),
    );
    assert!(pass);
}
