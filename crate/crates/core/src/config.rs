//! Experiment configuration files (TOML).
//!
//! ```toml
//! seed = 7
//! folds = 3
//! out_dir = "out"
//! setups = ["marginal_vs_real", "all_models_vs_real", "cross_table"]
//! encoders = ["column", "3gram-char"]
//! detectors = ["gbdt", "column-transformer"]
//!
//! [pool]
//! balance = "equal-per-origin"
//! [[pool.real]]
//! table_id = "pairs"
//! csv = "pairs.csv"
//! [[pool.generate]]
//! generator_id = "marginal"
//! kind = "marginal-resample"
//!
//! [train]
//! epochs = 10
//! [train.gbdt]
//! n_rounds = 50
//! ```
//!
//! Relative paths resolve against the config file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detectors::{DetectorKind, TrainConfig};
use crate::encoders::{EncoderKind, EncodingConfig};
use crate::error::{Error, Result};
use crate::eval::setup::SetupSpec;
use crate::ingest::PoolSpec;
use crate::util::Fingerprint;

pub const DEFAULT_FOLDS: usize = 3;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_folds")]
    folds: usize,
    #[serde(default = "default_out_dir")]
    out_dir: PathBuf,
    #[serde(default)]
    jobs: Option<usize>,
    setups: Vec<String>,
    encoders: Vec<String>,
    detectors: Vec<String>,
    pool: PoolSpec,
    #[serde(default)]
    train: TrainConfig,
    #[serde(default)]
    encoding: EncodingConfig,
}

fn default_folds() -> usize {
    DEFAULT_FOLDS
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// A fully resolved experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentPlan {
    pub pool: PoolSpec,
    pub setups: Vec<SetupSpec>,
    pub encoders: Vec<EncoderKind>,
    pub detectors: Vec<DetectorKind>,
    pub train: TrainConfig,
    pub encoding: EncodingConfig,
    pub folds: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Directory that relative CSV and schema paths resolve against.
    pub base_dir: PathBuf,
    /// Worker threads for grid cells.
    pub jobs: usize,
}

impl ExperimentPlan {
    /// Stable digest of every field that affects results (not `jobs` or paths
    /// of the output).
    pub fn fingerprint(&self) -> String {
        let mut fp = Fingerprint::new("experiment-plan");
        let body = serde_json::json!({
            "pool": self.pool,
            "setups": self.setups,
            "encoders": self.encoders,
            "detectors": self.detectors,
            "train": self.train,
            "encoding": self.encoding,
            "folds": self.folds,
            "seed": self.seed,
        });
        fp.str(&body.to_string());
        fp.finish()
    }

    /// Every (encoder, detector) pair of the grid that the families support.
    pub fn grid(&self) -> Vec<(EncoderKind, DetectorKind)> {
        let mut out = Vec::new();
        for &e in &self.encoders {
            for &d in &self.detectors {
                if d.supports(e) {
                    out.push((e, d));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.setups.is_empty() {
            return Err(Error::config("setups", "at least one setup is required"));
        }
        if self.encoders.is_empty() {
            return Err(Error::config("encoders", "at least one encoder is required"));
        }
        if self.detectors.is_empty() {
            return Err(Error::config("detectors", "at least one detector is required"));
        }
        if self.grid().is_empty() {
            return Err(Error::config("detectors", "no detector supports any listed encoder"));
        }
        if self.folds < 2 {
            return Err(Error::config("folds", format!("need at least 2 folds, got {}", self.folds)));
        }
        if self.pool.real.is_empty() {
            return Err(Error::config("pool.real", "at least one real table is required"));
        }
        if self.jobs == 0 {
            return Err(Error::config("jobs", "must be at least 1"));
        }
        let gens = self.pool.generator_ids();
        for s in &self.setups {
            if let SetupSpec::GeneratorVsReal(g) = s {
                if !gens.contains(g) {
                    return Err(Error::config("setups", format!("setup `{s}` names unknown generator `{g}`")));
                }
            }
        }
        self.train.validate()
    }
}

fn parse_list<T>(items: &[String], key: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    items
        .iter()
        .map(|s| {
            parse(s).map_err(|e| match e {
                Error::Config { detail, .. } => Error::config(key, detail),
                other => other,
            })
        })
        .collect()
}

/// Parse config text; `base_dir` anchors relative paths.
pub fn parse_experiment_str(text: &str, base_dir: &Path) -> Result<ExperimentPlan> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        let key = msg
            .split('`')
            .nth(1)
            .filter(|_| msg.contains("field"))
            .unwrap_or("config")
            .to_string();
        Error::config(key, msg)
    })?;
    let plan = ExperimentPlan {
        setups: parse_list(&raw.setups, "setup", |s| s.parse())?,
        encoders: parse_list(&raw.encoders, "encoder", |s| s.parse())?,
        detectors: parse_list(&raw.detectors, "detector", |s| s.parse())?,
        pool: raw.pool,
        train: raw.train,
        encoding: raw.encoding,
        folds: raw.folds,
        seed: raw.seed,
        out_dir: base_dir.join(raw.out_dir),
        base_dir: base_dir.to_path_buf(),
        jobs: raw.jobs.unwrap_or(1),
    };
    plan.validate()?;
    Ok(plan)
}

pub fn parse_experiment_config(path: impl AsRef<Path>) -> Result<ExperimentPlan> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_experiment_str(&text, &base)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        setups = ["all_models_vs_real"]
        encoders = ["column"]
        detectors = ["gbdt"]
        [[pool.real]]
        table_id = "a"
        csv = "a.csv"
        [[pool.generate]]
        generator_id = "mr"
        kind = "marginal-resample"
    "#;

    #[test]
    fn minimal_config_fills_defaults() {
        let plan = parse_experiment_str(MINIMAL, Path::new("/data")).unwrap();
        assert_eq!(plan.folds, 3);
        assert_eq!(plan.seed, 0);
        assert_eq!(plan.jobs, 1);
        assert_eq!(plan.out_dir, PathBuf::from("/data/out"));
        assert_eq!(plan.train, TrainConfig::default());
        assert_eq!(plan.encoding, EncodingConfig::default());
        assert_eq!(plan.pool.generate[0].generator_id, "mr");
    }

    #[test]
    fn unknown_detector_names_its_key() {
        let text = MINIMAL.replace(r#"detectors = ["gbdt"]"#, r#"detectors = ["svm"]"#);
        match parse_experiment_str(&text, Path::new(".")) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "detector"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn two_setups() {
        let text = MINIMAL
            .replace(r#"setups = ["all_models_vs_real"]"#, r#"setups = ["tvae_vs_real", "cross_table"]"#)
            .replace(r#"generator_id = "mr""#, r#"generator_id = "tvae""#);
        let plan = parse_experiment_str(&text, Path::new(".")).unwrap();
        assert_eq!(plan.setups, vec![SetupSpec::GeneratorVsReal("tvae".into()), SetupSpec::CrossTableShift]);
    }

    #[test]
    fn bad_values_name_their_keys() {
        let key_of = |text: &str| match parse_experiment_str(text, Path::new(".")) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("{other:?}"),
        };
        assert_eq!(key_of(&format!("{MINIMAL}\n[train]\nval_fraction = 0.9")), "train.val_fraction");
        assert_eq!(key_of(&format!("colour = 1\n{MINIMAL}")), "colour");
        assert_eq!(key_of(&MINIMAL.replace(r#"["column"]"#, r#"["bits"]"#)), "encoder");
        assert_eq!(key_of(&MINIMAL.replace("all_models_vs_real", "gan_vs_real")), "setups");
        assert_eq!(key_of(&format!("folds = 1\n{MINIMAL}")), "folds");
        let noisy = MINIMAL.replace(r#"kind = "marginal-resample""#, "kind = \"noisy-copy\"\nnoise_scale = 0.5");
        let plan = parse_experiment_str(&noisy, Path::new(".")).unwrap();
        assert_eq!(
            plan.pool.generate[0].kind,
            crate::generators::GeneratorKind::NoisyCopy { noise_scale: 0.5 }
        );
    }
}
