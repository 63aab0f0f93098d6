use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use scenario_mining::anomaly::PrimitiveModel;
use scenario_mining::config::PipelineConfig;
use scenario_mining::eval::{evaluate, loss_weights, parse_predictions, ModeRule};
use scenario_mining::features::IndividualFeatures;
use scenario_mining::pipeline::{
    extract_corpus, fit_anomaly_model, fit_normalizer, load_dir, load_file, read_scores, score_corpus, write_scores,
};
use scenario_mining::report::{
    correlation_matrix, read_feature_tables, variant_histograms, write_feature_tables, write_histograms_csv, FeatureTable,
    AGENTS_FILE, INDIVIDUAL_FILE, INTERACTION_FILE,
};
use scenario_mining::scenario::{validate_scenario, Scenario};
use scenario_mining::scoring::FeatureNormalizer;
use scenario_mining::split::{scoring_split, uniform_split, Partition, SplitAssignment, SplitMethod};
use scenario_mining::synth::{generate_document, SynthKind, SynthParams};
use std::error::Error;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

type Result<T> = std::result::Result<T, Box<dyn Error>>;

const MODEL_FILE: &str = "anomaly_model.json";

/// Scenario characterization, scoring and distribution-shift splits.
#[derive(Parser)]
#[command(name = "scenmine", version)]
struct Cli {
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration value, e.g. `interaction.gate_distance=30`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract feature tables from a directory of scenarios.
    Features {
        scenario_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use a previously fitted anomaly model instead of fitting one.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Score scenes from feature tables.
    Score {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, value_enum)]
        normalizer: NormalizerMode,
        /// Normalizer file to write (fit) or read (load); defaults to
        /// `normalizer.json` beside the output.
        #[arg(long)]
        normalizer_file: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write per-agent loss weights (JSON lines).
        #[arg(long)]
        loss_weights: Option<PathBuf>,
    },
    /// Partition scenes into train / val / test.
    Split {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate predictions against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long, requires = "partition")]
        split: Option<PathBuf>,
        #[arg(long, requires = "split")]
        partition: Option<String>,
        #[arg(long, value_enum, default_value = "top-confidence")]
        mode_rule: ModeRule,
        /// Write the report as JSON too.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Correlation and distribution reports.
    #[command(subcommand)]
    Report(ReportCommand),
    /// Generate synthetic scenarios.
    Synth {
        #[arg(long, value_enum)]
        kind: SynthKind,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write all scenarios to one JSON-lines file instead of one file each.
        #[arg(long)]
        jsonl: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate scenario files or directories.
    Validate {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Pearson correlation of ground-truth individual features.
    Corr(CorrArgs),
    /// Score histograms per variant.
    Hist {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value_t = 100)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct CorrArgs {
    #[arg(long)]
    features: PathBuf,
    /// Columns to correlate (default: all individual features).
    #[arg(long, value_delimiter = ',')]
    columns: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormalizerMode {
    Fit,
    Load,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Uniform,
    Scoring,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()).into())
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text).map_err(|e| format!("writing {}: {e}", path.display()).into())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| format!("writing {}: {e}", path.display()))?))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| format!("reading {}: {e}", path.display()).into())
}

fn load_scenarios(dir: &Path) -> Result<Vec<Scenario>> {
    let (scenarios, warnings) = load_dir(dir)?;
    for w in warnings {
        warn!("{w}");
    }
    if scenarios.is_empty() {
        return Err(format!("no scenarios found in {}", dir.display()).into());
    }
    info!("loaded {} scenarios", scenarios.len());
    Ok(scenarios)
}

fn read_tables(dir: &Path) -> Result<Vec<scenario_mining::scoring::SceneFeatures>> {
    Ok(read_feature_tables(
        open(&dir.join(AGENTS_FILE))?,
        open(&dir.join(INDIVIDUAL_FILE))?,
        open(&dir.join(INTERACTION_FILE))?,
    )?)
}

fn cmd_features(cfg: &PipelineConfig, dir: &Path, out: &Path, model_path: Option<&Path>) -> Result<()> {
    let scenarios = load_scenarios(dir)?;
    let model = match model_path {
        Some(p) => {
            let m: PrimitiveModel = serde_json::from_str(&read(p)?)?;
            info!("anomaly model from {} (fit on `{}`)", p.display(), m.fit_partition_id);
            m
        }
        None => {
            let (m, warnings) = fit_anomaly_model(&scenarios, cfg, "all")?;
            warnings.iter().for_each(|w| warn!("{w}"));
            m
        }
    };
    let features = extract_corpus(&scenarios, Some(&model), cfg);
    fs::create_dir_all(out)?;
    write_feature_tables(
        &features,
        create(&out.join(AGENTS_FILE))?,
        create(&out.join(INDIVIDUAL_FILE))?,
        create(&out.join(INTERACTION_FILE))?,
    )?;
    write(&out.join(MODEL_FILE), &serde_json::to_string_pretty(&model)?)?;
    info!("wrote feature tables for {} scenes to {}", features.len(), out.display());
    Ok(())
}

fn cmd_score(
    cfg: &PipelineConfig,
    features: &Path,
    mode: NormalizerMode,
    norm_file: Option<&Path>,
    out: &Path,
    lw: Option<&Path>,
) -> Result<()> {
    let scenes = read_tables(features)?;
    let default_norm = out.with_file_name("normalizer.json");
    let norm_file = norm_file.unwrap_or(&default_norm);
    let norm = match mode {
        NormalizerMode::Fit => {
            let (norm, warnings) = fit_normalizer(&scenes, cfg.scoring.epsilon)?;
            warnings.iter().for_each(|w| warn!("{w}"));
            write(norm_file, &serde_json::to_string_pretty(&norm)?)?;
            norm
        }
        NormalizerMode::Load => {
            let norm: FeatureNormalizer = serde_json::from_str(&read(norm_file)?)?;
            norm.check()?;
            norm
        }
    };
    let records = score_corpus(&scenes, &norm, &cfg.weights.resolve()?);
    write(out, &write_scores(&records))?;
    if let Some(path) = lw {
        let mut text = String::new();
        for r in &records {
            for w in loss_weights(&r.scenario_id, &r.agents, cfg.scoring.loss_weight_scale) {
                text.push_str(&serde_json::to_string(&w)?);
                text.push('\n');
            }
        }
        write(path, &text)?;
    }
    info!("scored {} scenes", records.len());
    Ok(())
}

fn load_score_file(path: &Path) -> Result<Vec<scenario_mining::pipeline::ScoreRecord>> {
    read_scores(&read(path)?).map_err(|(line, e)| format!("{} line {line}: {e}", path.display()).into())
}

fn cmd_split(cfg: &PipelineConfig, scores: &Path, method: Method, seed: Option<u64>, out: &Path) -> Result<()> {
    let records = load_score_file(scores)?;
    let seed = seed.unwrap_or(cfg.split.seed);
    let split = match method {
        Method::Uniform => {
            let ids: Vec<String> = records.iter().map(|r| r.scenario_id.clone()).collect();
            uniform_split(&ids, cfg.split.uniform_ratios, seed)?
        }
        Method::Scoring => {
            let scores: Vec<(String, f64)> = records.iter().map(|r| (r.scenario_id.clone(), r.value)).collect();
            scoring_split(&scores, cfg.split.ood_fraction, cfg.split.val_fraction_of_id, seed)?
        }
    };
    write(out, &split.to_manifest())?;
    info!(
        "train {} / val {} / test {}",
        split.count(Partition::Train),
        split.count(Partition::Val),
        split.count(Partition::Test)
    );
    Ok(())
}

fn cmd_eval(
    pred: &Path,
    dir: &Path,
    split: Option<&Path>,
    partition: Option<&str>,
    rule: ModeRule,
    json: Option<&Path>,
) -> Result<()> {
    let scenarios = load_scenarios(dir)?;
    let preds = parse_predictions(&read(pred)?)?;
    let selected: Vec<&Scenario> = match (split, partition) {
        (Some(path), Some(p)) => {
            let manifest = SplitAssignment::from_manifest(&read(path)?)?;
            let p = Partition::parse(p).ok_or_else(|| format!("unknown partition `{p}`"))?;
            if manifest.header.method == SplitMethod::Scoring {
                info!("scoring split, held-out fraction {}", manifest.header.ood_fraction);
            }
            scenarios.iter().filter(|s| manifest.assignment.get(&s.scenario_id) == Some(&p)).collect()
        }
        _ => scenarios.iter().collect(),
    };
    let ids: std::collections::BTreeSet<&str> = selected.iter().map(|s| s.scenario_id.as_str()).collect();
    let preds: Vec<_> = preds.into_iter().filter(|p| ids.contains(p.scenario_id.as_str())).collect();
    let report = evaluate(&selected, &preds, rule)?;
    for s in &report.skipped {
        warn!("skipped {s}");
    }
    print!("{}", report.to_table());
    if let Some(path) = json {
        write(path, &serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

fn cmd_corr(args: &CorrArgs) -> Result<()> {
    let table = FeatureTable::individual_gt(&read_tables(&args.features)?);
    let columns: Vec<&str> = if args.columns.is_empty() {
        IndividualFeatures::NAMES.to_vec()
    } else {
        args.columns.iter().map(String::as_str).collect()
    };
    if let Some(c) = columns.iter().find(|c| table.column(c).is_none()) {
        return Err(format!("unknown feature column `{c}`").into());
    }
    let m = correlation_matrix(&table, &columns);
    for c in &m.zero_variance {
        warn!("column `{c}` has zero variance; its coefficients are recorded as 0");
    }
    m.write_csv(create(&args.out)?)?;
    Ok(())
}

fn cmd_hist(scores: &Path, bins: usize, out: &Path) -> Result<()> {
    let records = load_score_file(scores)?;
    if records.len() < 2 {
        return Err("a histogram needs at least two scores".into());
    }
    let scenes: Vec<_> = records.iter().map(|r| r.scene()).collect();
    let hists = variant_histograms(&scenes, bins.max(1));
    for (v, h) in &hists {
        info!("{}: mean {:.4} std {:.4} skewness {:.4}", v.as_str(), h.mean, h.std, h.skewness);
    }
    write_histograms_csv(&hists, create(out)?)?;
    Ok(())
}

fn cmd_synth(kind: SynthKind, count: usize, seed: u64, jsonl: bool, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let docs: Vec<(String, String)> = (0..count as u64)
        .map(|k| {
            let p = SynthParams::sampled(kind, seed.wrapping_add(k));
            (format!("{}-{:08}", kind.as_str(), p.seed), generate_document(&p))
        })
        .collect();
    if jsonl {
        let mut text = String::new();
        for (_, d) in &docs {
            text.push_str(d);
            text.push('\n');
        }
        write(&out.join(format!("{}.jsonl", kind.as_str())), &text)?;
    } else {
        for (name, d) in &docs {
            write(&out.join(format!("{name}.json")), d)?;
        }
    }
    Ok(())
}

/// Returns the number of scenarios with violations.
fn cmd_validate(paths: &[PathBuf]) -> Result<usize> {
    let mut bad = 0;
    for path in paths {
        let (scenarios, warnings) = if path.is_dir() { load_dir(path)? } else { load_file(path)? };
        warnings.iter().for_each(|w| warn!("{w}"));
        for s in &scenarios {
            let report = validate_scenario(s);
            if report.is_empty() {
                println!("{}: ok", s.scenario_id);
            } else {
                bad += 1;
                for v in &report.violations {
                    println!("{}: {} at {}: {}", s.scenario_id, v.code.as_str(), v.path, v.message);
                }
            }
        }
    }
    Ok(bad)
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = PipelineConfig::load(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::Features {
            scenario_dir,
            out,
            model,
        } => cmd_features(&cfg, &scenario_dir, &out, model.as_deref())?,
        Command::Score {
            features,
            normalizer,
            normalizer_file,
            out,
            loss_weights,
        } => cmd_score(&cfg, &features, normalizer, normalizer_file.as_deref(), &out, loss_weights.as_deref())?,
        Command::Split { scores, method, seed, out } => cmd_split(&cfg, &scores, method, seed, &out)?,
        Command::Eval {
            pred,
            scenarios,
            split,
            partition,
            mode_rule,
            json,
        } => cmd_eval(&pred, &scenarios, split.as_deref(), partition.as_deref(), mode_rule, json.as_deref())?,
        Command::Report(ReportCommand::Corr(args)) => cmd_corr(&args)?,
        Command::Report(ReportCommand::Hist { scores, bins, out }) => cmd_hist(&scores, bins, &out)?,
        Command::Synth {
            kind,
            count,
            seed,
            jsonl,
            out,
        } => cmd_synth(kind, count, seed, jsonl, &out)?,
        Command::Validate { paths } => return Ok(cmd_validate(&paths)? == 0),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
