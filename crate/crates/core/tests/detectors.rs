use std::sync::Arc;

use rand::Rng;

use tabdetect::data::{Cell, ColumnKind, RowRecord, Schema};
use tabdetect::detectors::{fit_detector, score_records, DetectorKind, TrainConfig, TransformerConfig};
use tabdetect::encoders::{EncoderKind, EncodingConfig, FittedEncoder};
use tabdetect::eval::roc_auc;
use tabdetect::fixtures::correlated_pair;
use tabdetect::generators::{fit_generator, sample_synthetic, GeneratorKind};
use tabdetect::util::rng_from;

fn small_transformer() -> TrainConfig {
    TrainConfig {
        epochs: 10,
        batch_size: 128,
        lr: 3e-3,
        transformer: TransformerConfig {
            d_model: 32,
            heads: 4,
            layers: 2,
            ff_hidden: 64,
            ..TransformerConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn holdout_auc(kind: EncoderKind, detector: DetectorKind, records: &[RowRecord], cfg: &TrainConfig) -> (f64, f64) {
    let n_train = records.len() * 4 / 5;
    let train: Vec<&RowRecord> = records[..n_train].iter().collect();
    let held: Vec<&RowRecord> = records[n_train..].iter().collect();
    let enc_cfg = EncodingConfig {
        d_num: 4,
        d_cat: 2,
        max_len: 64,
        ..EncodingConfig::default()
    };
    let enc = FittedEncoder::fit(kind, &train, &enc_cfg, 1).unwrap();
    let det = fit_detector(detector, &enc, &train, None, cfg).unwrap();
    let auc = |rows: &[&RowRecord]| {
        let labels: Vec<u8> = rows.iter().map(|r| r.label()).collect();
        roc_auc(&score_records(&det, &enc, rows, cfg).unwrap(), &labels).unwrap()
    };
    (auc(&train), auc(&held))
}

fn shuffled(mut records: Vec<RowRecord>, seed: u64) -> Vec<RowRecord> {
    use rand::seq::SliceRandom;
    records.shuffle(&mut rng_from(seed, &["shuffle"]));
    records
}

#[test]
fn column_transformer_detects_destroyed_correlation() {
    let real = correlated_pair(2000, 3);
    let synth = sample_synthetic(&fit_generator(GeneratorKind::MarginalResample, &real).unwrap(), 2000, 4).unwrap();
    let mut records = Vec::new();
    for (i, row) in real.rows.iter().enumerate() {
        records.push(RowRecord::real("pairs", real.schema.clone(), row.clone(), i));
    }
    for (i, row) in synth.rows.into_iter().enumerate() {
        records.push(RowRecord::synthetic("pairs", "mr", real.schema.clone(), row, i));
    }
    let (_, held) = holdout_auc(
        EncoderKind::Column,
        DetectorKind::ColumnTransformer,
        &shuffled(records, 5),
        &small_transformer(),
    );
    assert!(held >= 0.65, "held-out AUC {held}");
}

#[test]
fn text_transformer_separates_decimal_format_artifacts() {
    let schema = Arc::new(
        Schema::from_pairs("fmt", &[("count", ColumnKind::Categorical), ("w", ColumnKind::Numerical)]).unwrap(),
    );
    let mut rng = rng_from(6, &["format-fixture"]);
    let mut records = Vec::new();
    for i in 0..1000 {
        for synthetic in [false, true] {
            let k: u32 = rng.random_range(0..10);
            let text = if synthetic { format!("{k}.0") } else { k.to_string() };
            let cells = vec![Cell::Cat(text), Cell::Num((rng.random::<f64>() * 1e4).round() / 1e4)];
            records.push(if synthetic {
                RowRecord::synthetic("fmt", "g", schema.clone(), cells, i)
            } else {
                RowRecord::real("fmt", schema.clone(), cells, i)
            });
        }
    }
    let (train, _) = holdout_auc(
        EncoderKind::FlatText,
        DetectorKind::TextTransformer,
        &shuffled(records, 7),
        &small_transformer(),
    );
    assert!(train >= 0.9, "training AUC {train}");
}
