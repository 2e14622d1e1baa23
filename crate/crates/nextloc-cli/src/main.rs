//! `nextloc` — command-line front end for the next-location prediction
//! harness. Subcommands mirror the pipeline stages: prepare, predict,
//! evaluate, ablate, quiz, report.

mod config;

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use nextloc::eval::ScoringOptions;
use nextloc::ingest::TimeFormat;
use nextloc::instances::InstanceParams;
use nextloc::pipeline::{
    self, AblateParams, EvaluateParams, InputKind, PredictParams, PrepareParams,
};
use nextloc::predictors::{BackendConfig, BackendKind, ResponseCache};
use nextloc::prompts::ShotMode;
use nextloc::stops::LocationIdMode;

#[derive(Parser)]
#[command(name = "nextloc", version, about = "Next-location prediction harness")]
struct Cli {
    /// Plain key=value configuration file; command-line flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a raw mobility file into dataset, instance, and vocabulary files.
    Prepare(PrepareArgs),
    /// Render prompts and query a predictor backend.
    Predict(PredictArgs),
    /// Score parsed results: ACC@k, run aggregates, attribution.
    Evaluate(EvaluateArgs),
    /// Run the C/H window ablation grid.
    Ablate(AblateArgs),
    /// Generate (or score) the four-choice contamination quiz.
    Quiz(QuizArgs),
    /// Re-render charts from an existing report.
    Report(ReportArgs),
}

#[derive(Args)]
struct PrepareArgs {
    /// Raw input file (8-field tab-separated check-ins, or CSV GPS trace).
    #[arg(long)]
    dataset: PathBuf,
    /// Input flavor: checkin | gps.
    #[arg(long, default_value = "checkin")]
    kind: String,
    /// Dataset name recorded in outputs.
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    min_records: Option<usize>,
    #[arg(long)]
    gap_hours: Option<i64>,
    #[arg(long)]
    min_trajectories: Option<usize>,
    /// Historical window size H.
    #[arg(long)]
    history: Option<usize>,
    /// Contextual window size C.
    #[arg(long)]
    context: Option<usize>,
    /// Render stay times with minutes instead of bare hours.
    #[arg(long)]
    minute_precision: bool,
    /// GPS pathway: location identifiers from grid cells or stop clusters.
    #[arg(long, default_value = "grid-cell")]
    location_mode: String,
    #[arg(long)]
    cell_size: Option<f64>,
    #[arg(long)]
    stay_radius: Option<f64>,
    #[arg(long)]
    min_dwell_secs: Option<i64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    min_pts: Option<usize>,
}

#[derive(Args)]
struct PredictArgs {
    /// Directory produced by `prepare`.
    #[arg(long)]
    prepared: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Backend: frequency-oracle | recency-oracle | markov1-oracle | remote-chat.
    #[arg(long)]
    backend: Option<String>,
    /// Remote model name (selects the sampling profile).
    #[arg(long)]
    model: Option<String>,
    /// Chat-completions endpoint URL.
    #[arg(long)]
    endpoint: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    api_key_env: Option<String>,
    /// Prompt mode: zero | one | few.
    #[arg(long)]
    shots: Option<String>,
    #[arg(long)]
    runs: Option<u32>,
    #[arg(long)]
    sample_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Response cache file (created if absent).
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    requests_per_minute: Option<u32>,
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long)]
    timeout_secs: Option<u64>,
    #[arg(long)]
    max_retries: Option<u32>,
    #[arg(long)]
    few_shot_examples: Option<usize>,
    #[arg(long)]
    minute_precision: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    prepared: PathBuf,
    /// Directory holding results_run*.jsonl (from `predict`).
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    model: Option<String>,
    /// Dataset label for report rows.
    #[arg(long)]
    dataset_name: Option<String>,
    #[arg(long)]
    shots: Option<String>,
    #[arg(long)]
    history: Option<usize>,
    #[arg(long)]
    context: Option<usize>,
    /// Comma-separated k values.
    #[arg(long)]
    k: Option<String>,
    /// Drop out-of-vocabulary ids before ranking (sensitivity analysis).
    #[arg(long)]
    drop_hallucinated: bool,
    /// Divide by parseable instances only instead of all prompted ones.
    #[arg(long)]
    parseable_only: bool,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    prepared: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long)]
    shots: Option<String>,
    #[arg(long)]
    runs: Option<u32>,
    #[arg(long)]
    sample_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Arms as "C:H" pairs, comma-separated (default: the seven-arm grid).
    #[arg(long)]
    arms: Option<String>,
}

#[derive(Args)]
struct QuizArgs {
    /// Raw check-in file to draw verbatim rows from.
    #[arg(long)]
    dataset: PathBuf,
    /// Label shown to the model, e.g. a dataset name with its file name.
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    items: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Score a answers file (jsonl: {"index": .., "answer": ".."}) against
    /// the quiz key instead of generating.
    #[arg(long)]
    answers: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding report.csv (and optionally ablation.json).
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    dataset_name: Option<String>,
    #[arg(long)]
    k: Option<usize>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let file_config = config::FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Prepare(args) => cmd_prepare(args, &file_config),
        Command::Predict(args) => cmd_predict(args, &file_config),
        Command::Evaluate(args) => cmd_evaluate(args, &file_config),
        Command::Ablate(args) => cmd_ablate(args, &file_config),
        Command::Quiz(args) => cmd_quiz(args, &file_config),
        Command::Report(args) => cmd_report(args),
    }
}

fn cmd_prepare(args: PrepareArgs, cfg: &config::FileConfig) -> Result<()> {
    let kind: InputKind = cfg.merge_str("kind", Some(args.kind))?.parse()?;
    let name = args
        .name
        .or_else(|| cfg.get("name"))
        .or_else(|| {
            args.dataset
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
        })
        .unwrap_or_else(|| "dataset".into());
    let mut params = PrepareParams::new(&name, kind);
    params.min_records = cfg
        .merge("min_records", args.min_records)?
        .unwrap_or(params.min_records);
    params.gap_hours = cfg
        .merge("gap_hours", args.gap_hours)?
        .unwrap_or(params.gap_hours);
    params.min_trajectories = cfg
        .merge("min_trajectories", args.min_trajectories)?
        .unwrap_or(params.min_trajectories);
    params.instance = InstanceParams {
        h_size: cfg
            .merge("history", args.history)?
            .unwrap_or(params.instance.h_size),
        c_size: cfg
            .merge("context", args.context)?
            .unwrap_or(params.instance.c_size),
    };
    if args.minute_precision || cfg.get_bool("minute_precision") {
        params.time_format = TimeFormat::MinutePrecision;
    }
    params.location_mode = match cfg
        .merge_str("location_mode", Some(args.location_mode))?
        .as_str()
    {
        "grid-cell" => LocationIdMode::GridCell,
        "stop-cluster" => LocationIdMode::StopCluster,
        other => bail!("unknown location mode {other:?} (expected grid-cell|stop-cluster)"),
    };
    params.cell_size_m = cfg
        .merge("cell_size", args.cell_size)?
        .unwrap_or(params.cell_size_m);
    params.stay_radius_m = cfg
        .merge("stay_radius", args.stay_radius)?
        .unwrap_or(params.stay_radius_m);
    params.min_dwell_secs = cfg
        .merge("min_dwell_secs", args.min_dwell_secs)?
        .unwrap_or(params.min_dwell_secs);
    params.cluster_epsilon_m = cfg
        .merge("epsilon", args.epsilon)?
        .unwrap_or(params.cluster_epsilon_m);
    params.cluster_min_pts = cfg
        .merge("min_pts", args.min_pts)?
        .unwrap_or(params.cluster_min_pts);

    let prepared = pipeline::prepare_to_dir(&args.dataset, &params, &args.out)
        .with_context(|| format!("prepare failed on {}", args.dataset.display()))?;
    println!(
        "prepared {}: {} after record filter; {} after trajectory filter; {} instances ({} skipped)",
        prepared.dataset_name,
        prepared.stats_before_trajectory_filter,
        prepared.stats_after_trajectory_filter,
        prepared.instances.len(),
        prepared.skipped_instances,
    );
    if kind == InputKind::Gps {
        println!(
            "stops written alongside instances; location mode {:?}",
            params.location_mode
        );
    }
    Ok(())
}

fn backend_from(
    backend: Option<String>,
    model: Option<String>,
    endpoint: Option<String>,
    api_key_env: Option<String>,
    cfg: &config::FileConfig,
) -> Result<BackendConfig> {
    let kind_str = backend
        .or_else(|| cfg.get("backend"))
        .unwrap_or_else(|| "frequency-oracle".into());
    let kind: BackendKind = kind_str.parse()?;
    let config = if kind.is_oracle() {
        BackendConfig::oracle(kind)
    } else {
        let model = model
            .or_else(|| cfg.get("model"))
            .context("remote backend requires --model")?;
        let endpoint = endpoint
            .or_else(|| cfg.get("endpoint"))
            .context("remote backend requires --endpoint")?;
        let api_key_env = api_key_env
            .or_else(|| cfg.get("api_key_env"))
            .context("remote backend requires --api-key-env")?;
        BackendConfig::remote(&model, &endpoint, &api_key_env)
    };
    Ok(config)
}

fn cmd_predict(args: PredictArgs, cfg: &config::FileConfig) -> Result<()> {
    let mut backend = backend_from(
        args.backend,
        args.model,
        args.endpoint,
        args.api_key_env,
        cfg,
    )?;
    backend.requests_per_minute = cfg
        .merge("requests_per_minute", args.requests_per_minute)?
        .unwrap_or(backend.requests_per_minute);
    backend.concurrency = cfg
        .merge("concurrency", args.concurrency)?
        .unwrap_or(backend.concurrency);
    backend.timeout_secs = cfg
        .merge("timeout_secs", args.timeout_secs)?
        .unwrap_or(backend.timeout_secs);
    backend.max_retries = cfg
        .merge("max_retries", args.max_retries)?
        .unwrap_or(backend.max_retries);

    let mut params = PredictParams::default();
    if let Some(shots) = cfg.merge_str_opt("shots", args.shots) {
        params.shots = shots.parse::<ShotMode>()?;
    }
    params.runs = cfg.merge("runs", args.runs)?.unwrap_or(params.runs);
    if params.runs == 0 {
        bail!("--runs must be at least 1");
    }
    params.sample_size = cfg
        .merge("sample_size", args.sample_size)?
        .or(params.sample_size);
    params.seed = cfg.merge("seed", args.seed)?.unwrap_or(params.seed);
    params.few_shot_examples = cfg
        .merge("few_shot_examples", args.few_shot_examples)?
        .unwrap_or(params.few_shot_examples);
    if args.minute_precision || cfg.get_bool("minute_precision") {
        params.time_format = TimeFormat::MinutePrecision;
    }

    let cache_path = args
        .cache
        .or_else(|| cfg.get("cache").map(PathBuf::from))
        .unwrap_or_else(|| args.out.join("cache.jsonl"));
    std::fs::create_dir_all(&args.out).with_context(|| format!("create {}", args.out.display()))?;
    let cache = ResponseCache::open(&cache_path)?;

    let summary = pipeline::predict_to_dir(&args.prepared, &args.out, &backend, &params, &cache)?;
    println!(
        "predicted {} instances x {} runs ({} cache hits, {} misses, {} failures)",
        summary.instances, summary.runs, summary.cache_hits, summary.cache_misses, summary.failures
    );
    Ok(())
}

fn parse_k_list(raw: Option<String>) -> Result<Vec<usize>> {
    let ks: Vec<usize> = match raw {
        None => nextloc::eval::DEFAULT_K_LIST.to_vec(),
        Some(s) => s
            .split(',')
            .map(|p| p.trim().parse::<usize>().context("bad k value"))
            .collect::<Result<_>>()?,
    };
    if ks.contains(&0) {
        bail!("k values must be positive");
    }
    Ok(ks)
}

fn cmd_evaluate(args: EvaluateArgs, cfg: &config::FileConfig) -> Result<()> {
    let params = EvaluateParams {
        model: args
            .model
            .or_else(|| cfg.get("model"))
            .unwrap_or_else(|| "unknown".into()),
        dataset: args
            .dataset_name
            .or_else(|| cfg.get("dataset_name"))
            .unwrap_or_else(|| "dataset".into()),
        shots: cfg
            .merge_str_opt("shots", args.shots)
            .map(|s| s.parse::<ShotMode>())
            .transpose()?
            .unwrap_or_default(),
        c_size: cfg.merge("context", args.context)?.unwrap_or(6),
        h_size: cfg.merge("history", args.history)?.unwrap_or(15),
        k_list: parse_k_list(cfg.merge_str_opt("k", args.k))?,
        scoring: ScoringOptions {
            drop_hallucinated: args.drop_hallucinated || cfg.get_bool("drop_hallucinated"),
            parseable_only: args.parseable_only || cfg.get_bool("parseable_only"),
        },
    };
    let summary = pipeline::evaluate_to_dir(&args.prepared, &args.results, &args.out, &params)?;
    for run in &summary.per_run {
        let accs: Vec<String> = run
            .acc
            .iter()
            .map(|(k, v)| format!("acc@{k}={v:.4}"))
            .collect();
        println!(
            "run {}: n={} {} empty={} halluc={} failed={}",
            run.run_index,
            run.n,
            accs.join(" "),
            run.empty_count,
            run.halluc_count,
            run.failed_count
        );
    }
    if let Some(agg) = &summary.aggregate {
        let line: Vec<String> = agg
            .mean
            .iter()
            .map(|(k, m)| format!("acc@{k}={m:.4}±{:.4}", agg.sd[k]))
            .collect();
        println!(
            "aggregate over {} run(s){}: {}",
            agg.runs,
            if agg.single_run {
                " [single run, sd=0 by convention]"
            } else {
                ""
            },
            line.join(" ")
        );
    }
    let a = &summary.attribution;
    println!(
        "attribution over {} correct: both={:.2}% h-only={:.2}% c-only={:.2}% neither={:.2}%",
        a.correct,
        a.both_frac * 100.0,
        a.h_only_frac * 100.0,
        a.c_only_frac * 100.0,
        a.neither_frac * 100.0
    );
    Ok(())
}

fn parse_arms(raw: &str) -> Result<Vec<(usize, usize)>> {
    raw.split(',')
        .map(|pair| {
            let (c, h) = pair
                .trim()
                .split_once(':')
                .context("arms are C:H pairs, e.g. 6:15,0:15")?;
            Ok((c.trim().parse()?, h.trim().parse()?))
        })
        .collect()
}

fn cmd_ablate(args: AblateArgs, cfg: &config::FileConfig) -> Result<()> {
    let backend = backend_from(
        args.backend,
        args.model,
        args.endpoint,
        args.api_key_env,
        cfg,
    )?;
    let mut params = AblateParams::default();
    if let Some(arms) = cfg.merge_str_opt("arms", args.arms) {
        params.arms = parse_arms(&arms)?;
    }
    if let Some(shots) = cfg.merge_str_opt("shots", args.shots) {
        params.shots = shots.parse::<ShotMode>()?;
    }
    params.runs = cfg.merge("runs", args.runs)?.unwrap_or(params.runs);
    if params.runs == 0 {
        bail!("--runs must be at least 1");
    }
    params.seed = cfg.merge("seed", args.seed)?.unwrap_or(params.seed);
    params.sample_size = cfg
        .merge("sample_size", args.sample_size)?
        .or(params.sample_size);

    let cache_path = args
        .cache
        .or_else(|| cfg.get("cache").map(PathBuf::from))
        .unwrap_or_else(|| args.out.join("cache.jsonl"));
    std::fs::create_dir_all(&args.out).with_context(|| format!("create {}", args.out.display()))?;
    let cache = ResponseCache::open(&cache_path)?;

    let outcome = pipeline::ablate_to_dir(&args.prepared, &args.out, &backend, &params, &cache)?;
    for arm in &outcome.arms {
        let rel: Vec<String> = arm
            .relative_change
            .iter()
            .map(|(k, v)| format!("Δacc@{k}={v:+.4}"))
            .collect();
        println!(
            "arm C={} H={}: {}",
            arm.c_size,
            arm.h_size,
            if rel.is_empty() {
                "baseline missing".into()
            } else {
                rel.join(" ")
            }
        );
    }
    Ok(())
}

#[derive(serde::Deserialize)]
struct AnswerRow {
    index: usize,
    answer: String,
}

fn cmd_quiz(args: QuizArgs, cfg: &config::FileConfig) -> Result<()> {
    let label = args.label.or_else(|| cfg.get("label")).unwrap_or_else(|| {
        format!(
            "Foursquare (\"{}\")",
            args.dataset
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default()
        )
    });
    let items = cfg.merge("items", args.items)?.unwrap_or(50);
    let seed = cfg.merge("seed", args.seed)?.unwrap_or(7);
    let quiz = pipeline::quiz_to_dir(&args.dataset, &args.out, &label, items, seed)?;
    println!(
        "generated {} quiz items into {}",
        quiz.len(),
        args.out.display()
    );

    if let Some(answers_path) = args.answers {
        let rows: Vec<AnswerRow> = nextloc::jsonl::read_all(&answers_path)?;
        let mut answers = vec![String::new(); quiz.len()];
        for row in rows {
            if row.index < answers.len() {
                answers[row.index] = row.answer;
            }
        }
        let model = args
            .model
            .or_else(|| cfg.get("model"))
            .unwrap_or_else(|| "model".into());
        let result = nextloc::contamination::score_quiz(&quiz, &answers, &model);
        let body = serde_json::to_string_pretty(&result)?;
        nextloc::manifest::atomic_write(&args.out.join("quiz_score.json"), body.as_bytes())?;
        println!(
            "{}: {}/{} correct ({} abstentions, {} unparseable); chance {:.0}% (A-D) / {:.0}% (A-E)",
            result.model,
            result.correct,
            result.items,
            result.abstentions,
            result.unparseable,
            result.chance_four_way * 100.0,
            result.chance_five_way * 100.0
        );
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out).with_context(|| format!("create {}", args.out.display()))?;
    let csv_path = args.results.join("report.csv");
    if csv_path.exists() {
        let rows = nextloc::report::read_csv(&csv_path)?;
        let dataset = args
            .dataset_name
            .clone()
            .or_else(|| rows.first().map(|r| r.dataset.clone()))
            .unwrap_or_else(|| "dataset".into());
        let k = args.k.unwrap_or(5);
        let svg = nextloc::report::accuracy_chart(&rows, &dataset, k);
        let out = args.out.join(format!("accuracy_{dataset}.svg"));
        nextloc::manifest::atomic_write(&out, svg.as_bytes())?;
        println!("wrote {}", out.display());
    }
    let ablation_path = args.results.join("ablation.json");
    if ablation_path.exists() {
        let body = std::fs::read_to_string(&ablation_path)?;
        let outcome: nextloc::pipeline::AblationOutcome = serde_json::from_str(&body)?;
        let k = args.k.unwrap_or(5);
        let c_arms: Vec<(String, f64)> = outcome
            .arms
            .iter()
            .filter(|a| a.h_size == 15 && a.c_size != 6)
            .filter_map(|a| {
                a.relative_change
                    .get(&k)
                    .map(|v| (format!("C={}", a.c_size), *v))
            })
            .collect();
        let h_arms: Vec<(String, f64)> = outcome
            .arms
            .iter()
            .filter(|a| a.c_size == 6 && a.h_size != 15)
            .filter_map(|a| {
                a.relative_change
                    .get(&k)
                    .map(|v| (format!("H={}", a.h_size), *v))
            })
            .collect();
        for (name, arms, dim) in [
            ("relative_change_C.svg", &c_arms, "contextual"),
            ("relative_change_H.svg", &h_arms, "historical"),
        ] {
            let svg = nextloc::report::relative_change_chart(
                &format!("ACC@{k} relative change, {dim} sweep"),
                arms,
            );
            let out = args.out.join(name);
            nextloc::manifest::atomic_write(&out, svg.as_bytes())?;
            println!("wrote {}", out.display());
        }
    }
    if !csv_path.exists() && !args.results.join("ablation.json").exists() {
        bail!(
            "nothing to report: expected {} or {}",
            csv_path.display(),
            args.results.join("ablation.json").display()
        );
    }
    Ok(())
}
