//! Scoring and aggregation: ACC@k, multi-run mean/SD, relative changes
//! against a baseline arm, and source attribution of correct predictions.
//!
//! Scoring rules: the target's rank is the 1-based index of its first
//! occurrence in the (≤5) predicted ids. Instances whose output was empty,
//! unusable, or failed outright count as misses — they stay in the
//! denominator. Hallucinated ids occupy their rank; they can never match a
//! real target. `ScoringOptions` exposes the documented alternatives.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::instances::PredictionInstance;
use crate::parse::{Classification, PredictionResult};

pub const DEFAULT_K_LIST: [usize; 3] = [1, 3, 5];

/// The seven default ablation arms as (C, H): the baseline, the C sweep at
/// H=15, and the H sweep at C=6 — one dimension varied at a time.
pub const DEFAULT_ABLATION_ARMS: [(usize, usize); 7] =
    [(6, 15), (0, 15), (3, 15), (12, 15), (6, 0), (6, 7), (6, 30)];

/// What the scorer needs to know about an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceOutline {
    pub instance_id: String,
    pub target_id: String,
    pub historical_ids: BTreeSet<String>,
    pub contextual_ids: BTreeSet<String>,
}

impl From<&PredictionInstance> for InstanceOutline {
    fn from(inst: &PredictionInstance) -> Self {
        InstanceOutline {
            instance_id: inst.instance_id.clone(),
            target_id: inst.target.location_id.clone(),
            historical_ids: inst
                .historical
                .iter()
                .map(|v| v.location_id.clone())
                .collect(),
            contextual_ids: inst
                .contextual
                .iter()
                .map(|v| v.location_id.clone())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringOptions {
    /// Remove out-of-vocabulary ids before ranking (sensitivity analysis;
    /// off by default — hallucinations keep their rank).
    pub drop_hallucinated: bool,
    /// Score only instances whose output parsed to a non-empty list
    /// (alternative denominator; off by default).
    pub parseable_only: bool,
}

/// One instance's scored outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredInstance {
    pub instance_id: String,
    pub target_id: String,
    pub predicted_ids: Vec<String>,
    /// 1-based rank of the target's first occurrence, if present.
    pub rank_of_target: Option<usize>,
}

impl ScoredInstance {
    pub fn hit_at(&self, k: usize) -> bool {
        self.rank_of_target.map(|r| r <= k).unwrap_or(false)
    }
}

/// Score one instance against its (possibly missing) parsed result.
pub fn score_instance(
    outline: &InstanceOutline,
    result: Option<&PredictionResult>,
    options: ScoringOptions,
) -> ScoredInstance {
    let predicted_ids: Vec<String> = match result {
        Some(r) if options.drop_hallucinated => r
            .predicted_ids
            .iter()
            .filter(|id| !r.hallucinated_ids.contains(id))
            .cloned()
            .collect(),
        Some(r) => r.predicted_ids.clone(),
        None => Vec::new(),
    };
    let rank_of_target = predicted_ids
        .iter()
        .position(|id| *id == outline.target_id)
        .map(|i| i + 1);
    ScoredInstance {
        instance_id: outline.instance_id.clone(),
        target_id: outline.target_id.clone(),
        predicted_ids,
        rank_of_target,
    }
}

/// Score a whole run, joining results to instances by id.
pub fn score_run(
    outlines: &[InstanceOutline],
    results: &[PredictionResult],
    options: ScoringOptions,
) -> Vec<ScoredInstance> {
    let by_id: HashMap<&str, &PredictionResult> = results
        .iter()
        .map(|r| (r.instance_id.as_str(), r))
        .collect();
    outlines
        .iter()
        .filter_map(|outline| {
            let result = by_id.get(outline.instance_id.as_str()).copied();
            if options.parseable_only && result.is_none_or(|r| r.predicted_ids.is_empty()) {
                return None;
            }
            Some(score_instance(outline, result, options))
        })
        .collect()
}

/// Fraction of instances whose target sits within the top k. `None` when the
/// instance set is empty (the metric is undefined, not zero).
pub fn acc_at_k(scored: &[ScoredInstance], k: usize) -> Option<f64> {
    if scored.is_empty() {
        return None;
    }
    let hits = scored.iter().filter(|s| s.hit_at(k)).count();
    Some(hits as f64 / scored.len() as f64)
}

/// A single run's metrics for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub model: String,
    pub dataset: String,
    pub shots: String,
    pub c_size: usize,
    pub h_size: usize,
    pub run_index: u32,
    pub n: usize,
    /// k → ACC@k
    pub acc: BTreeMap<usize, f64>,
    pub empty_count: usize,
    pub halluc_count: usize,
    pub failed_count: usize,
}

/// Assemble a run report from scored instances and their parsed results.
#[allow(clippy::too_many_arguments)]
pub fn run_report(
    model: &str,
    dataset: &str,
    shots: &str,
    c_size: usize,
    h_size: usize,
    run_index: u32,
    scored: &[ScoredInstance],
    results: &[PredictionResult],
    failed_count: usize,
    k_list: &[usize],
) -> RunReport {
    let mut acc = BTreeMap::new();
    for &k in k_list {
        if let Some(a) = acc_at_k(scored, k) {
            acc.insert(k, a);
        }
    }
    RunReport {
        model: model.to_string(),
        dataset: dataset.to_string(),
        shots: shots.to_string(),
        c_size,
        h_size,
        run_index,
        n: scored.len(),
        acc,
        empty_count: results
            .iter()
            .filter(|r| r.classification == Classification::EmptyUnusable)
            .count(),
        halluc_count: results
            .iter()
            .filter(|r| r.classification == Classification::ContainsHallucination)
            .count(),
        failed_count,
    }
}

/// Mean and sample standard deviation (n−1) over runs of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: BTreeMap<usize, f64>,
    pub sd: BTreeMap<usize, f64>,
    pub runs: usize,
    /// Set when only one run was aggregated (SD reported as 0 by
    /// convention, not as evidence of stability).
    pub single_run: bool,
}

pub fn aggregate_runs(reports: &[RunReport]) -> Option<Aggregate> {
    if reports.is_empty() {
        return None;
    }
    let ks: Vec<usize> = reports[0].acc.keys().copied().collect();
    let mut mean = BTreeMap::new();
    let mut sd = BTreeMap::new();
    let n = reports.len() as f64;
    for &k in &ks {
        let values: Vec<f64> = reports
            .iter()
            .filter_map(|r| r.acc.get(&k).copied())
            .collect();
        if values.is_empty() {
            continue;
        }
        let m = values.iter().sum::<f64>() / values.len() as f64;
        mean.insert(k, m);
        // identical samples have zero variance by definition; computing the
        // formula anyway would leak (3v)/3 - v rounding noise into the SD
        let s = if values.len() < 2 || values.windows(2).all(|w| w[0] == w[1]) {
            0.0
        } else {
            (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() as f64 - 1.0))
                .sqrt()
        };
        sd.insert(k, s);
    }
    Some(Aggregate {
        mean,
        sd,
        runs: n as usize,
        single_run: reports.len() == 1,
    })
}

/// Signed relative change against a baseline; undefined when the baseline is
/// not positive.
pub fn relative_change(value: f64, baseline: f64) -> Option<f64> {
    if baseline > 0.0 {
        Some((value - baseline) / baseline)
    } else {
        None
    }
}

/// Where correct predictions found their target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct AttributionReport {
    pub correct: usize,
    pub both: usize,
    pub h_only: usize,
    pub c_only: usize,
    pub neither: usize,
    pub both_frac: f64,
    pub h_only_frac: f64,
    pub c_only_frac: f64,
    pub neither_frac: f64,
}

/// Partition correct predictions by whether the target was mentioned in H,
/// in C, in both, or in neither window.
pub fn attribute_sources(
    outlines: &[InstanceOutline],
    scored: &[ScoredInstance],
    k: usize,
) -> AttributionReport {
    let by_id: HashMap<&str, &InstanceOutline> = outlines
        .iter()
        .map(|o| (o.instance_id.as_str(), o))
        .collect();
    let mut report = AttributionReport::default();
    for s in scored {
        if !s.hit_at(k) {
            continue;
        }
        let Some(outline) = by_id.get(s.instance_id.as_str()) else {
            continue;
        };
        report.correct += 1;
        let in_h = outline.historical_ids.contains(&s.target_id);
        let in_c = outline.contextual_ids.contains(&s.target_id);
        match (in_h, in_c) {
            (true, true) => report.both += 1,
            (true, false) => report.h_only += 1,
            (false, true) => report.c_only += 1,
            (false, false) => report.neither += 1,
        }
    }
    if report.correct > 0 {
        let n = report.correct as f64;
        report.both_frac = report.both as f64 / n;
        report.h_only_frac = report.h_only as f64 / n;
        report.c_only_frac = report.c_only as f64 / n;
        report.neither_frac = report.neither as f64 / n;
    }
    report
}

/// One ablation arm's aggregate plus its change against the baseline arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub c_size: usize,
    pub h_size: usize,
    /// Instances scored in this arm; identical across arms by construction.
    #[serde(default)]
    pub n: usize,
    pub mean_acc: BTreeMap<usize, f64>,
    pub sd_acc: BTreeMap<usize, f64>,
    /// Relative change of mean ACC@k against the baseline arm, per k.
    pub relative_change: BTreeMap<usize, f64>,
}

/// Summarize ablation arms against the baseline (first arm with matching
/// sizes; conventionally C=6, H=15).
pub fn summarize_ablation(
    arms: &[((usize, usize), Aggregate)],
    baseline: (usize, usize),
) -> Vec<ArmSummary> {
    let base = arms
        .iter()
        .find(|((c, h), _)| (*c, *h) == baseline)
        .map(|(_, agg)| agg.clone());
    arms.iter()
        .map(|((c, h), agg)| {
            let mut rel = BTreeMap::new();
            if let Some(base) = &base {
                for (k, v) in &agg.mean {
                    if let Some(b) = base.mean.get(k) {
                        if let Some(r) = relative_change(*v, *b) {
                            rel.insert(*k, r);
                        }
                    }
                }
            }
            ArmSummary {
                c_size: *c,
                h_size: *h,
                n: 0,
                mean_acc: agg.mean.clone(),
                sd_acc: agg.sd.clone(),
                relative_change: rel,
            }
        })
        .collect()
}
