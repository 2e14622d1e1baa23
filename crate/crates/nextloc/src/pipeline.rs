//! End-to-end pipeline entry points shared by the CLI and the test suites:
//! prepare (ingest → segment → filter → instances), predict (render →
//! backend → parse), evaluate (score → aggregate → attribute → report),
//! ablate (the C/H grid), and quiz.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::Duration;
use serde::{Deserialize, Serialize};

use crate::contamination;
use crate::eval::{self, InstanceOutline, ScoringOptions};
use crate::ingest::{self, Dataset, DatasetStats, TimeFormat};
use crate::instances::{
    self, InstanceParams, InstanceRow, PredictionInstance, SegmentedUser, SplitSpec,
};
use crate::jsonl;
use crate::manifest::{atomic_write, sha256_file, RunManifest};
use crate::parse::{self, PredictionResult};
use crate::predictors::{BackendConfig, BatchItem, PredictRequest, ResponseCache};
use crate::prompts::{self, Exemplar, ShotMode};
use crate::report;
use crate::stops::{self, GridSpec, LocationIdMode};
use crate::{Error, Result};

pub const DEFAULT_FEW_SHOT_EXAMPLES: usize = 2;

/// Input flavor of the raw file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    Checkin,
    Gps,
}

impl std::str::FromStr for InputKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "checkin" => Ok(InputKind::Checkin),
            "gps" => Ok(InputKind::Gps),
            other => Err(Error::Config(format!(
                "unknown input kind {other:?} (expected checkin|gps)"
            ))),
        }
    }
}

/// Everything `prepare` needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareParams {
    pub dataset_name: String,
    pub kind: InputKind,
    pub min_records: usize,
    pub gap_hours: i64,
    pub min_trajectories: usize,
    pub split: SplitSpec,
    pub instance: InstanceParams,
    pub time_format: TimeFormat,
    // GPS pathway
    pub location_mode: LocationIdMode,
    pub cell_size_m: f64,
    pub stay_radius_m: f64,
    pub min_dwell_secs: i64,
    pub cluster_epsilon_m: f64,
    pub cluster_min_pts: usize,
}

impl PrepareParams {
    pub fn new(dataset_name: &str, kind: InputKind) -> Self {
        PrepareParams {
            dataset_name: dataset_name.to_string(),
            kind,
            min_records: 10,
            gap_hours: instances::DEFAULT_GAP_HOURS,
            min_trajectories: instances::DEFAULT_MIN_TRAJECTORIES,
            split: SplitSpec::default(),
            instance: InstanceParams::default(),
            time_format: TimeFormat::HourOnly,
            location_mode: LocationIdMode::GridCell,
            cell_size_m: stops::DEFAULT_CELL_SIZE_M,
            stay_radius_m: stops::DEFAULT_STAY_RADIUS_M,
            min_dwell_secs: stops::DEFAULT_MIN_DWELL_SECS,
            cluster_epsilon_m: stops::DEFAULT_CLUSTER_EPSILON_M,
            cluster_min_pts: stops::DEFAULT_CLUSTER_MIN_PTS,
        }
    }
}

/// Prepared pipeline state, in memory.
#[derive(Debug)]
pub struct Prepared {
    pub dataset_name: String,
    pub users: Vec<SegmentedUser>,
    pub vocabulary: BTreeSet<String>,
    /// Counts after the min-records filter, before the min-trajectories
    /// filter (segmentation applied for the trajectory count).
    pub stats_before_trajectory_filter: DatasetStats,
    /// Counts after both filters; the published tables sit between the two
    /// depending on filter order, which is why both are reported.
    pub stats_after_trajectory_filter: DatasetStats,
    pub instances: Vec<PredictionInstance>,
    pub skipped_instances: usize,
    pub rejects: Vec<ingest::RejectedRow>,
    /// Detected stop locations (GPS pathway only).
    pub stops: Vec<stops::StopLocation>,
}

/// Run the preprocessing pipeline in memory.
pub fn prepare(input: &Path, params: &PrepareParams) -> Result<(Prepared, Dataset)> {
    let mut stop_rows: Vec<stops::StopLocation> = Vec::new();
    let (dataset, rejects) = match params.kind {
        InputKind::Checkin => {
            let outcome = ingest::parse_checkin_file(input, &params.dataset_name)?;
            (outcome.dataset, outcome.rejects)
        }
        InputKind::Gps => {
            let (traces, rejects) = stops::load_gps_file(input)?;
            let candidates: Vec<stops::StayCandidate> = traces
                .iter()
                .flat_map(|t| {
                    stops::detect_stay_candidates(t, params.stay_radius_m, params.min_dwell_secs)
                })
                .collect();
            let grid = match params.location_mode {
                LocationIdMode::GridCell => {
                    let bbox = GridSpec::bbox_of(
                        candidates.iter().map(|c| (c.centroid_lat, c.centroid_lon)),
                    )
                    .ok_or_else(|| Error::EmptyInput {
                        path: input.to_path_buf(),
                        detail: "no stay candidates detected".into(),
                    })?;
                    Some(GridSpec::from_bbox(bbox, params.cell_size_m)?)
                }
                LocationIdMode::StopCluster => None,
            };
            let stop_locations = stops::cluster_stays(
                &candidates,
                params.cluster_epsilon_m,
                params.cluster_min_pts,
                grid.as_ref(),
                params.location_mode,
            )?;
            let users = stops::stops_to_user_histories(&stop_locations);
            stop_rows = stop_locations;
            (Dataset::from_users(&params.dataset_name, users), rejects)
        }
    };

    let filtered = ingest::filter_users(dataset, params.min_records);
    let gap = Duration::hours(params.gap_hours);
    let segmented = instances::segment_dataset(&filtered, gap);
    let traj_counts: Vec<usize> = segmented.iter().map(|u| u.trajectories.len()).collect();
    let stats_before = ingest::dataset_stats(&filtered, &traj_counts);

    let retained = instances::filter_trajectory_users(segmented, params.min_trajectories);
    let vocabulary: BTreeSet<String> = retained
        .iter()
        .flat_map(|u| u.trajectories.iter())
        .flat_map(|t| t.visits.iter().map(|v| v.location_id.clone()))
        .collect();
    let stats_after = DatasetStats {
        users: retained.len(),
        unique_locations: vocabulary.len(),
        trajectories: retained.iter().map(|u| u.trajectories.len()).sum(),
    };

    let built = instances::build_all_instances(
        &retained,
        &params.split,
        &params.instance,
        &params.dataset_name,
    );

    let retained_ids: BTreeSet<&str> = retained.iter().map(|u| u.user_id.as_str()).collect();
    let mut raw = filtered;
    raw.users
        .retain(|u| retained_ids.contains(u.user_id.as_str()));
    raw.records
        .retain(|r| retained_ids.contains(r.user_id.as_str()));
    raw.vocabulary = vocabulary.clone();

    Ok((
        Prepared {
            dataset_name: params.dataset_name.clone(),
            users: retained,
            vocabulary,
            stats_before_trajectory_filter: stats_before,
            stats_after_trajectory_filter: stats_after,
            instances: built.instances,
            skipped_instances: built.skipped_empty_window,
            rejects,
            stops: stop_rows,
        },
        raw,
    ))
}

/// Stats blob persisted by `prepare` (both filter stages, as documented).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrepareStats {
    pub after_record_filter: DatasetStats,
    pub after_trajectory_filter: DatasetStats,
    pub instances: usize,
    pub skipped_empty_window: usize,
    pub rejected_rows: usize,
}

/// Run `prepare` and persist dataset, instances, vocabulary, rejects, stats,
/// and the manifest into `out_dir`.
pub fn prepare_to_dir(input: &Path, params: &PrepareParams, out_dir: &Path) -> Result<Prepared> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let (prepared, _raw) = prepare(input, params)?;

    let dataset_path = out_dir.join("dataset.jsonl");
    jsonl::write_all(&dataset_path, &prepared.users)?;
    let instance_rows: Vec<InstanceRow> = prepared
        .instances
        .iter()
        .map(|i| InstanceRow::from_instance(i, params.time_format))
        .collect();
    let instances_path = out_dir.join("instances.jsonl");
    jsonl::write_all(&instances_path, &instance_rows)?;
    let vocab_path = out_dir.join("vocabulary.txt");
    let vocab_body: String = prepared
        .vocabulary
        .iter()
        .map(|id| format!("{id}\n"))
        .collect();
    atomic_write(&vocab_path, vocab_body.as_bytes())?;
    let rejects_path = out_dir.join("rejects.jsonl");
    jsonl::write_all(&rejects_path, &prepared.rejects)?;
    let stats = PrepareStats {
        after_record_filter: prepared.stats_before_trajectory_filter,
        after_trajectory_filter: prepared.stats_after_trajectory_filter,
        instances: prepared.instances.len(),
        skipped_empty_window: prepared.skipped_instances,
        rejected_rows: prepared.rejects.len(),
    };
    let stats_path = out_dir.join("stats.json");
    atomic_write(
        &stats_path,
        serde_json::to_string_pretty(&stats)
            .map_err(|e| Error::Other(e.to_string()))?
            .as_bytes(),
    )?;

    let stops_path = if params.kind == InputKind::Gps {
        let p = write_stops_file(out_dir, &prepared.stops)?;
        Some(p)
    } else {
        None
    };

    let mut manifest = RunManifest::new(
        "prepare",
        serde_json::to_value(params).map_err(|e| Error::Other(e.to_string()))?,
    );
    manifest.dataset_hash = Some(sha256_file(input)?);
    manifest.instance_count = Some(prepared.instances.len());
    manifest.notes.push(
        "counts reported at both filter stages: the record filter applies before segmentation, the trajectory filter after; published totals may sit between the two depending on filter order".into(),
    );
    manifest.notes.push(format!(
        "{} test trajectories skipped for an empty window; {} raw rows rejected",
        prepared.skipped_instances,
        prepared.rejects.len()
    ));
    if params.kind == InputKind::Gps {
        manifest.notes.push(format!(
            "gps location identifiers: {:?}",
            params.location_mode
        ));
    }
    for p in [
        &dataset_path,
        &instances_path,
        &vocab_path,
        &rejects_path,
        &stats_path,
    ] {
        manifest.record_output(p)?;
    }
    if let Some(p) = &stops_path {
        manifest.record_output(p)?;
    }
    manifest.write(out_dir)?;
    Ok(prepared)
}

/// Persist detected stop locations (GPS pathway side output).
pub fn write_stops_file(out_dir: &Path, stop_rows: &[stops::StopLocation]) -> Result<PathBuf> {
    let path = out_dir.join("stops.jsonl");
    jsonl::write_all(&path, stop_rows)?;
    Ok(path)
}

/// Everything `predict` needs beyond the prepared directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictParams {
    pub shots: ShotMode,
    pub runs: u32,
    pub sample_size: Option<usize>,
    pub seed: u64,
    pub few_shot_examples: usize,
    pub time_format: TimeFormat,
}

impl Default for PredictParams {
    fn default() -> Self {
        PredictParams {
            shots: ShotMode::Zero,
            runs: 3,
            sample_size: None,
            seed: 7,
            few_shot_examples: DEFAULT_FEW_SHOT_EXAMPLES,
            time_format: TimeFormat::HourOnly,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictSummary {
    pub instances: usize,
    pub runs: u32,
    pub cache_hits: usize,
    pub cache_misses: usize,
    pub failures: usize,
}

fn load_instances(dir: &Path) -> Result<Vec<PredictionInstance>> {
    let rows: Vec<InstanceRow> = jsonl::read_all(&dir.join("instances.jsonl"))?;
    rows.iter().map(|r| r.to_instance()).collect()
}

fn load_users(dir: &Path) -> Result<Vec<SegmentedUser>> {
    jsonl::read_all(&dir.join("dataset.jsonl"))
}

pub fn load_vocabulary(dir: &Path) -> Result<BTreeSet<String>> {
    let path = dir.join("vocabulary.txt");
    let body = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(body
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect())
}

/// Deterministic subsample: sorted index sample from a seeded generator.
pub fn sample_indices(total: usize, sample_size: usize, seed: u64) -> Vec<usize> {
    use rand::SeedableRng;
    if sample_size >= total {
        return (0..total).collect();
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = rand::seq::index::sample(&mut rng, total, sample_size).into_vec();
    chosen.sort_unstable();
    chosen
}

/// Render prompts and query the backend for every run index; writes
/// `responses_run{r}.jsonl` and `results_run{r}.jsonl` per run plus the
/// manifest.
pub fn predict_to_dir(
    prepared_dir: &Path,
    out_dir: &Path,
    backend: &BackendConfig,
    params: &PredictParams,
    cache: &ResponseCache,
) -> Result<PredictSummary> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let all_instances = load_instances(prepared_dir)?;
    let vocabulary = load_vocabulary(prepared_dir)?;
    let split = SplitSpec::default();

    let indices = match params.sample_size {
        Some(n) => sample_indices(all_instances.len(), n, params.seed),
        None => (0..all_instances.len()).collect(),
    };
    let instances: Vec<&PredictionInstance> = indices.iter().map(|&i| &all_instances[i]).collect();

    // exemplars are per user, shared by shots > zero
    let users = if params.shots == ShotMode::Zero {
        Vec::new()
    } else {
        load_users(prepared_dir)?
    };
    let exemplar_count = match params.shots {
        ShotMode::Zero => 0,
        ShotMode::One => 1,
        ShotMode::Few => params.few_shot_examples.max(2),
    };

    let mut summary = PredictSummary {
        instances: instances.len(),
        runs: params.runs,
        cache_hits: 0,
        cache_misses: 0,
        failures: 0,
    };

    let mut written: Vec<PathBuf> = Vec::new();
    for run_index in 1..=params.runs {
        let mut requests: Vec<PredictRequest<'_>> = Vec::with_capacity(instances.len());
        let mut render_failures: Vec<(String, String)> = Vec::new();
        for inst in &instances {
            let exemplars: Vec<Exemplar> = if exemplar_count == 0 {
                Vec::new()
            } else {
                let user = users.iter().find(|u| u.user_id == inst.user_id);
                match user {
                    Some(u) => match prompts::build_exemplars(
                        u,
                        &split,
                        &InstanceParams {
                            h_size: inst.historical.len().max(1),
                            c_size: inst.contextual.len().max(1),
                        },
                        exemplar_count,
                        params.seed,
                        params.time_format,
                    ) {
                        Ok(ex) => ex,
                        Err(e) => {
                            render_failures.push((inst.instance_id.clone(), e.to_string()));
                            continue;
                        }
                    },
                    None => {
                        render_failures
                            .push((inst.instance_id.clone(), "user not in dataset file".into()));
                        continue;
                    }
                }
            };
            match prompts::render(inst, params.shots, &exemplars, params.time_format) {
                Ok(prompt) => requests.push(PredictRequest {
                    instance: inst,
                    prompt,
                }),
                Err(e) => render_failures.push((inst.instance_id.clone(), e.to_string())),
            }
        }

        let outcome = crate::predictors::run_batch(&requests, backend, run_index, cache)?;
        summary.cache_hits += outcome.cache_hits;
        summary.cache_misses += outcome.cache_misses;
        summary.failures += outcome.failures + render_failures.len();

        let mut items = outcome.items;
        for (instance_id, error) in render_failures {
            items.push(BatchItem::Failed { instance_id, error });
        }
        let responses_path = out_dir.join(format!("responses_run{run_index}.jsonl"));
        jsonl::write_all(&responses_path, &items)?;

        let results: Vec<PredictionResult> = items
            .iter()
            .filter_map(|item| item.response())
            .map(|r| {
                parse::parse_output(&r.text, &vocabulary, &r.instance_id, &r.model, r.run_index)
            })
            .collect();
        let results_path = out_dir.join(format!("results_run{run_index}.jsonl"));
        jsonl::write_all(&results_path, &results)?;
        written.push(responses_path);
        written.push(results_path);
    }

    let mut manifest = RunManifest::new(
        "predict",
        serde_json::json!({
            "backend": backend,
            "params": params,
            "prepared_dir": prepared_dir.display().to_string(),
        }),
    );
    manifest.dataset_hash = Some(sha256_file(&prepared_dir.join("instances.jsonl"))?);
    manifest.instance_count = Some(instances.len());
    manifest.seed = Some(params.seed);
    manifest.cache_hits = summary.cache_hits;
    manifest.cache_misses = summary.cache_misses;
    manifest.failure_count = summary.failures;
    if params.sample_size.is_some() {
        manifest.notes.push(format!(
            "seeded subsample: {} of {} instances",
            instances.len(),
            all_instances.len()
        ));
    }
    for p in &written {
        manifest.record_output(p)?;
    }
    manifest.write(out_dir)?;
    Ok(summary)
}

/// Evaluation knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluateParams {
    pub model: String,
    pub dataset: String,
    pub shots: ShotMode,
    pub c_size: usize,
    pub h_size: usize,
    pub k_list: Vec<usize>,
    pub scoring: ScoringOptions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluateSummary {
    pub per_run: Vec<eval::RunReport>,
    pub aggregate: Option<eval::Aggregate>,
    pub attribution: eval::AttributionReport,
}

/// Score every `results_run*.jsonl` in `results_dir` against the prepared
/// instances; writes `report.csv`, `summary.json`, and the accuracy chart.
pub fn evaluate_to_dir(
    prepared_dir: &Path,
    results_dir: &Path,
    out_dir: &Path,
    params: &EvaluateParams,
) -> Result<EvaluateSummary> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let instances = load_instances(prepared_dir)?;
    let outlines: Vec<InstanceOutline> = instances.iter().map(InstanceOutline::from).collect();

    let mut per_run = Vec::new();
    let mut all_scored = Vec::new();
    let mut run_index = 1u32;
    loop {
        let results_path = results_dir.join(format!("results_run{run_index}.jsonl"));
        if !results_path.exists() {
            break;
        }
        let results: Vec<PredictionResult> = jsonl::read_all(&results_path)?;
        // the denominator is the prompted set: when the responses file is
        // present (it records failures too), instances outside it were never
        // prompted (subsampling) and must not count as misses
        let responses_path = results_dir.join(format!("responses_run{run_index}.jsonl"));
        let (run_outlines, failed_count) = if responses_path.exists() {
            let items: Vec<BatchItem> = jsonl::read_all(&responses_path)?;
            let prompted: std::collections::BTreeSet<&str> = items
                .iter()
                .map(|i| match i {
                    BatchItem::Response(r) => r.instance_id.as_str(),
                    BatchItem::Failed { instance_id, .. } => instance_id.as_str(),
                })
                .collect();
            let failed = items.iter().filter(|i| i.response().is_none()).count();
            let subset: Vec<InstanceOutline> = outlines
                .iter()
                .filter(|o| prompted.contains(o.instance_id.as_str()))
                .cloned()
                .collect();
            (subset, failed)
        } else {
            (outlines.clone(), 0)
        };
        let scored = eval::score_run(&run_outlines, &results, params.scoring);
        per_run.push(eval::run_report(
            &params.model,
            &params.dataset,
            params.shots.as_str(),
            params.c_size,
            params.h_size,
            run_index,
            &scored,
            &results,
            failed_count,
            &params.k_list,
        ));
        all_scored.extend(scored);
        run_index += 1;
    }
    if per_run.is_empty() {
        return Err(Error::Config(format!(
            "no results_run*.jsonl files found in {}",
            results_dir.display()
        )));
    }

    let aggregate = eval::aggregate_runs(&per_run);
    let top_k = params.k_list.iter().copied().max().unwrap_or(5);
    let attribution = eval::attribute_sources(&outlines, &all_scored, top_k);

    let rows: Vec<report::CsvRow> = per_run.iter().map(report::CsvRow::from_report).collect();
    let csv_path = out_dir.join("report.csv");
    report::write_csv(&csv_path, &rows)?;
    let summary = EvaluateSummary {
        per_run,
        aggregate,
        attribution,
    };
    let summary_path = out_dir.join("summary.json");
    atomic_write(
        &summary_path,
        serde_json::to_string_pretty(&summary)
            .map_err(|e| Error::Other(e.to_string()))?
            .as_bytes(),
    )?;
    let chart_path = out_dir.join(format!("accuracy_{}.svg", params.dataset));
    atomic_write(
        &chart_path,
        report::accuracy_chart(&rows, &params.dataset, top_k).as_bytes(),
    )?;

    let mut manifest = RunManifest::new(
        "evaluate",
        serde_json::to_value(params).map_err(|e| Error::Other(e.to_string()))?,
    );
    manifest.dataset_hash = Some(sha256_file(&prepared_dir.join("instances.jsonl"))?);
    manifest.instance_count = Some(instances.len());
    manifest.failure_count = summary.per_run.iter().map(|r| r.failed_count).sum();
    for p in [&csv_path, &summary_path, &chart_path] {
        manifest.record_output(p)?;
    }
    manifest.write(out_dir)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblateParams {
    pub arms: Vec<(usize, usize)>,
    pub baseline: (usize, usize),
    pub runs: u32,
    pub seed: u64,
    pub shots: ShotMode,
    pub sample_size: Option<usize>,
    pub k_list: Vec<usize>,
    pub time_format: TimeFormat,
}

impl Default for AblateParams {
    fn default() -> Self {
        AblateParams {
            arms: eval::DEFAULT_ABLATION_ARMS.to_vec(),
            baseline: (6, 15),
            runs: 1,
            seed: 7,
            shots: ShotMode::Zero,
            sample_size: None,
            k_list: eval::DEFAULT_K_LIST.to_vec(),
            time_format: TimeFormat::HourOnly,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationOutcome {
    pub arms: Vec<eval::ArmSummary>,
}

/// A window-size-independent identity for an instance's target.
fn instance_target_key(inst: &PredictionInstance) -> (String, chrono::NaiveDateTime, String) {
    (
        inst.user_id.clone(),
        inst.target.local_time,
        inst.target.location_id.clone(),
    )
}

/// Rebuild instances per (C, H) arm over the same test trajectories, query
/// the backend, and summarize relative changes against the baseline arm.
pub fn ablate_to_dir(
    prepared_dir: &Path,
    out_dir: &Path,
    backend: &BackendConfig,
    params: &AblateParams,
    cache: &ResponseCache,
) -> Result<AblationOutcome> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let users = load_users(prepared_dir)?;
    let vocabulary = load_vocabulary(prepared_dir)?;
    let split = SplitSpec::default();
    let dataset_name = prepared_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());

    // Every arm must score the same targets: the skip rule retains more
    // instances in the C=0/H=0 arms (their empty window is intentional), so
    // arms are first built, then restricted to the targets present in all of
    // them, and only then subsampled — once, over the shared key order.
    let mut arm_instances_by_key: Vec<Vec<PredictionInstance>> = Vec::new();
    let mut common_keys: Option<Vec<(String, chrono::NaiveDateTime, String)>> = None;
    for &(c_size, h_size) in &params.arms {
        let arm_params = InstanceParams { h_size, c_size };
        let built = instances::build_all_instances(&users, &split, &arm_params, &dataset_name);
        let keys: std::collections::BTreeSet<(String, chrono::NaiveDateTime, String)> =
            built.instances.iter().map(instance_target_key).collect();
        common_keys = Some(match common_keys {
            None => built.instances.iter().map(instance_target_key).collect(),
            Some(existing) => existing.into_iter().filter(|k| keys.contains(k)).collect(),
        });
        arm_instances_by_key.push(built.instances);
    }
    let common_keys = common_keys.unwrap_or_default();
    let indices = match params.sample_size {
        Some(n) => sample_indices(common_keys.len(), n, params.seed),
        None => (0..common_keys.len()).collect(),
    };
    let sampled_keys: std::collections::BTreeSet<&(String, chrono::NaiveDateTime, String)> =
        indices.iter().map(|&i| &common_keys[i]).collect();

    let mut aggregates: Vec<((usize, usize), eval::Aggregate)> = Vec::new();
    let mut arm_n: Vec<usize> = Vec::new();
    for (&(c_size, h_size), built) in params.arms.iter().zip(&arm_instances_by_key) {
        let arm_instances: Vec<&PredictionInstance> = built
            .iter()
            .filter(|i| sampled_keys.contains(&instance_target_key(i)))
            .collect();
        arm_n.push(arm_instances.len());
        let outlines: Vec<InstanceOutline> = arm_instances
            .iter()
            .map(|i| InstanceOutline::from(*i))
            .collect();

        let mut run_reports = Vec::new();
        for run_index in 1..=params.runs {
            let mut requests = Vec::with_capacity(arm_instances.len());
            for inst in &arm_instances {
                let prompt = prompts::render(inst, params.shots, &[], params.time_format)?;
                requests.push(PredictRequest {
                    instance: inst,
                    prompt,
                });
            }
            let outcome = crate::predictors::run_batch(&requests, backend, run_index, cache)?;
            let results: Vec<PredictionResult> = outcome
                .items
                .iter()
                .filter_map(|item| item.response())
                .map(|r| {
                    parse::parse_output(&r.text, &vocabulary, &r.instance_id, &r.model, r.run_index)
                })
                .collect();
            let scored = eval::score_run(&outlines, &results, ScoringOptions::default());
            run_reports.push(eval::run_report(
                &backend.model,
                &dataset_name,
                params.shots.as_str(),
                c_size,
                h_size,
                run_index,
                &scored,
                &results,
                outcome.failures,
                &params.k_list,
            ));
        }
        if let Some(agg) = eval::aggregate_runs(&run_reports) {
            aggregates.push(((c_size, h_size), agg));
        }
    }

    let mut summaries = eval::summarize_ablation(&aggregates, params.baseline);
    for (summary, n) in summaries.iter_mut().zip(&arm_n) {
        summary.n = *n;
    }
    let outcome = AblationOutcome { arms: summaries };

    let summary_path = out_dir.join("ablation.json");
    atomic_write(
        &summary_path,
        serde_json::to_string_pretty(&outcome)
            .map_err(|e| Error::Other(e.to_string()))?
            .as_bytes(),
    )?;

    // relative-change charts, one per swept dimension
    let top_k = params.k_list.iter().copied().max().unwrap_or(5);
    let (baseline_c, baseline_h) = params.baseline;
    let c_arms: Vec<(String, f64)> = outcome
        .arms
        .iter()
        .filter(|a| a.h_size == baseline_h && a.c_size != baseline_c)
        .filter_map(|a| {
            a.relative_change
                .get(&top_k)
                .map(|v| (format!("C={}", a.c_size), *v))
        })
        .collect();
    let h_arms: Vec<(String, f64)> = outcome
        .arms
        .iter()
        .filter(|a| a.c_size == baseline_c && a.h_size != baseline_h)
        .filter_map(|a| {
            a.relative_change
                .get(&top_k)
                .map(|v| (format!("H={}", a.h_size), *v))
        })
        .collect();
    let c_chart = out_dir.join("relative_change_C.svg");
    atomic_write(
        &c_chart,
        report::relative_change_chart(
            &format!("ACC@{top_k} relative change, contextual sweep"),
            &c_arms,
        )
        .as_bytes(),
    )?;
    let h_chart = out_dir.join("relative_change_H.svg");
    atomic_write(
        &h_chart,
        report::relative_change_chart(
            &format!("ACC@{top_k} relative change, historical sweep"),
            &h_arms,
        )
        .as_bytes(),
    )?;

    let mut manifest = RunManifest::new(
        "ablate",
        serde_json::json!({"backend": backend, "params": params}),
    );
    manifest.seed = Some(params.seed);
    for p in [&summary_path, &c_chart, &h_chart] {
        manifest.record_output(p)?;
    }
    manifest.write(out_dir)?;
    Ok(outcome)
}

/// Generate the contamination quiz from a raw check-in file.
pub fn quiz_to_dir(
    input: &Path,
    out_dir: &Path,
    dataset_label: &str,
    n_items: usize,
    seed: u64,
) -> Result<Vec<contamination::QuizItem>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let outcome = ingest::parse_checkin_file(input, dataset_label)?;
    let items = contamination::generate_quiz(&outcome.dataset, n_items, seed)?;
    let questions: Vec<contamination::QuizQuestionRow> =
        items.iter().map(|i| i.public_row(dataset_label)).collect();
    let keys: Vec<contamination::QuizKeyRow> = items.iter().map(|i| i.key_row()).collect();
    let q_path = out_dir.join("quiz.jsonl");
    jsonl::write_all(&q_path, &questions)?;
    let k_path = out_dir.join("quiz_key.jsonl");
    jsonl::write_all(&k_path, &keys)?;

    let mut manifest = RunManifest::new(
        "quiz",
        serde_json::json!({"dataset_label": dataset_label, "n_items": n_items, "seed": seed}),
    );
    manifest.dataset_hash = Some(sha256_file(input)?);
    manifest.seed = Some(seed);
    for p in [&q_path, &k_path] {
        manifest.record_output(p)?;
    }
    manifest.write(out_dir)?;
    Ok(items)
}
