use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{ArgAction, Parser, Subcommand};

use tabdetect::config::{parse_experiment_config, ExperimentPlan};
use tabdetect::data::{RowRecord, Table, DEFAULT_MAX_CARDINALITY};
use tabdetect::detectors::{fit_detector, TrainedModel};
use tabdetect::encoders::cache::write_cache;
use tabdetect::encoders::{EncoderKind, EncodingConfig, FittedEncoder};
use tabdetect::eval::harness::setup_pool;
use tabdetect::eval::report::{from_json, render_markdown, render_text, to_json};
use tabdetect::eval::{run_experiment, SetupSpec};
use tabdetect::generators::{fit_generator, sample_synthetic, GeneratorKind};
use tabdetect::ingest::{load_csv, load_csv_with_cardinality, load_schema, load_sources, schema_to_toml, write_csv};
use tabdetect::util::derive_seed;

#[derive(Parser)]
#[command(name = "tabdetect", version, about = "Detect synthetic rows in heterogeneous tables")]
struct Cli {
    /// Raise log verbosity (repeatable). Logs go to standard error.
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Infer column kinds of a CSV and print the schema sidecar as TOML.
    InferSchema {
        csv: PathBuf,
        /// Integer columns with at most this many distinct values are categorical.
        #[arg(long, default_value_t = DEFAULT_MAX_CARDINALITY)]
        max_cardinality: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a fixture generator on a CSV and write sampled rows as CSV.
    GenerateFixtures {
        csv: PathBuf,
        /// marginal-resample, gaussian-frequency or noisy-copy.
        #[arg(long)]
        kind: String,
        /// Noise scale for noisy-copy, in units of each column's std.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit an encoder on a CSV and write its encoded rows.
    Encode {
        csv: PathBuf,
        /// 3gram-char, 3gram-word, flat-text or column.
        #[arg(long)]
        encoder: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        table_id: Option<String>,
        #[arg(long)]
        d_num: Option<usize>,
        #[arg(long)]
        d_cat: Option<usize>,
        #[arg(long)]
        max_len: Option<usize>,
        /// Write a binary feature cache here instead of JSON lines on stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train every grid detector of one setup on its full pool and save the models.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Setup to train on (default: the first listed in the config).
        #[arg(long)]
        setup: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Score the rows of a CSV with a saved model; prints one probability per line.
    Score {
        #[arg(long)]
        model: PathBuf,
        csv: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        table_id: Option<String>,
    },
    /// Run the experiment grid of a config and write the report.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Print the table of a report JSON.
    Report {
        json: PathBuf,
        #[arg(long)]
        markdown: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 1 for usage and configuration errors, 2 for errors caused by the data.
fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<tabdetect::Error>() {
        Some(t) if !t.is_data_error() => 1,
        _ => 2,
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => std::io::stdout().write_all(bytes).context("writing stdout"),
    }
}

fn load_table(csv: &Path, schema: Option<&Path>) -> Result<Table> {
    let schema = schema.map(load_schema).transpose()?;
    Ok(load_csv(csv, schema.as_ref())?)
}

fn table_id_of(csv: &Path, id: Option<String>) -> String {
    id.unwrap_or_else(|| csv.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
}

fn real_records(t: &Table, id: &str) -> Vec<RowRecord> {
    t.rows
        .iter()
        .enumerate()
        .map(|(i, r)| RowRecord::real(id, t.schema.clone(), r.clone(), i))
        .collect()
}

fn plan_with(config: &Path, seed: Option<u64>, out_dir: Option<PathBuf>) -> Result<ExperimentPlan> {
    let mut plan = parse_experiment_config(config)?;
    if let Some(s) = seed {
        plan.seed = s;
    }
    if let Some(o) = out_dir {
        plan.out_dir = o;
    }
    Ok(plan)
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::InferSchema { csv, max_cardinality, out } => {
            let t = load_csv_with_cardinality(&csv, max_cardinality)?;
            emit(out.as_deref(), schema_to_toml(&t.schema).as_bytes())
        }
        Command::GenerateFixtures { csv, kind, noise, n, seed, schema, out } => {
            let kind = GeneratorKind::parse(&kind, noise)?;
            let t = load_table(&csv, schema.as_deref())?;
            let sample = sample_synthetic(&fit_generator(kind, &t)?, n, seed)?;
            let mut buf = Vec::new();
            write_csv(&sample, &mut buf)?;
            emit(out.as_deref(), &buf)
        }
        Command::Encode { csv, encoder, seed, schema, table_id, d_num, d_cat, max_len, out } => {
            let kind: EncoderKind = encoder.parse()?;
            let defaults = EncodingConfig::default();
            let cfg = EncodingConfig {
                d_num: d_num.unwrap_or(defaults.d_num),
                d_cat: d_cat.unwrap_or(defaults.d_cat),
                max_len: max_len.unwrap_or(defaults.max_len),
                ..defaults
            };
            let t = load_table(&csv, schema.as_deref())?;
            let records = real_records(&t, &table_id_of(&csv, table_id));
            let refs: Vec<&RowRecord> = records.iter().collect();
            let enc = FittedEncoder::fit(kind, &refs, &cfg, seed)?;
            let rows = records
                .iter()
                .map(|r| Ok((r.label(), enc.encode(r)?)))
                .collect::<tabdetect::Result<Vec<_>>>()?;
            match out {
                Some(p) => {
                    let f = fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?;
                    write_cache(std::io::BufWriter::new(f), &enc.fingerprint(), &rows)?;
                    Ok(())
                }
                None => {
                    let mut buf = Vec::new();
                    for (_, row) in &rows {
                        serde_json::to_writer(&mut buf, row)?;
                        buf.push(b'\n');
                    }
                    emit(None, &buf)
                }
            }
        }
        Command::Train { config, setup, seed, out_dir } => {
            let plan = plan_with(&config, seed, out_dir)?;
            let spec: SetupSpec = match setup {
                Some(s) => s.parse()?,
                None => plan.setups[0].clone(),
            };
            let tables = load_sources(&plan.pool, &plan.base_dir)?;
            let pool = setup_pool(&plan, &tables, &spec)?;
            let rows: Vec<&RowRecord> = pool.records.iter().collect();
            let tables: Vec<&String> = pool.table_ids.iter().collect();
            let strata: Vec<usize> = rows
                .iter()
                .map(|r| tables.binary_search(&&r.table_id).expect("table of pool"))
                .collect();
            fs::create_dir_all(&plan.out_dir).with_context(|| format!("creating {}", plan.out_dir.display()))?;
            let name = spec.to_string();
            for (e, d) in plan.grid() {
                let encoder = FittedEncoder::fit(e, &rows, &plan.encoding, derive_seed(plan.seed, &["encoder", &name]))?;
                let cfg = tabdetect::detectors::TrainConfig {
                    seed: derive_seed(plan.seed, &["train", &name, e.name(), d.name()]),
                    ..plan.train.clone()
                };
                let detector = fit_detector(d, &encoder, &rows, Some(&strata), &cfg)?;
                let model = TrainedModel { encoder, detector, config: cfg };
                let path = plan.out_dir.join(format!("model-{name}-{e}-{d}.tdm"));
                let mut f = std::io::BufWriter::new(
                    fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?,
                );
                model.save(&mut f)?;
                f.flush()?;
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Score { model, csv, schema, table_id } => {
            let f = fs::File::open(&model).with_context(|| format!("opening {}", model.display()))?;
            let mut m = TrainedModel::load(&mut std::io::BufReader::new(f))?;
            let t = load_table(&csv, schema.as_deref())?;
            let records = real_records(&t, &table_id_of(&csv, table_id));
            let refs: Vec<&RowRecord> = records.iter().collect();
            for table in m.encoder.fit_missing_codecs(&refs)? {
                log::info!("fitted a label-free codec for unseen table `{table}`");
            }
            let mut buf = String::new();
            for p in m.score(&refs)? {
                buf.push_str(&format!("{p}\n"));
            }
            emit(None, buf.as_bytes())
        }
        Command::Evaluate { config, jobs, seed, folds, out_dir } => {
            let mut plan = plan_with(&config, seed, out_dir)?;
            if let Some(j) = jobs {
                plan.jobs = j;
            }
            if let Some(k) = folds {
                plan.folds = k;
            }
            plan.validate()?;
            let report = run_experiment(&plan)?;
            fs::create_dir_all(&plan.out_dir).with_context(|| format!("creating {}", plan.out_dir.display()))?;
            let text = render_text(&report);
            for (file, body) in [
                ("report.json", to_json(&report)),
                ("report.txt", text.clone()),
                ("report.md", render_markdown(&report)),
            ] {
                let p = plan.out_dir.join(file);
                fs::write(&p, body).with_context(|| format!("writing {}", p.display()))?;
            }
            log::info!("report written to {}", plan.out_dir.display());
            emit(None, text.as_bytes())
        }
        Command::Report { json, markdown } => {
            let text = fs::read_to_string(&json).with_context(|| format!("reading {}", json.display()))?;
            let report = from_json(&text)?;
            let out = if markdown { render_markdown(&report) } else { render_text(&report) };
            emit(None, out.as_bytes())
        }
    }
}
