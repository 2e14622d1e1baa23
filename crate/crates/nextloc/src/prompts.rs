//! Prompt rendering.
//!
//! The three templates live as plain-text files with named placeholders; the
//! checked-in golden prompts under `tests/fixtures/goldens/` freeze the exact
//! whitespace conventions, so any change here must update the goldens
//! deliberately. All models share the same template set.
//!
//! A stay renders as `['<hour>', '<day_of_week>', '<location_id>']`; the
//! answer contract asks for a JSON object with `"prediction"` (five ids
//! ranked by probability) and `"reason"`.

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ingest::{TimeFormat, Visit};
use crate::instances::{InstanceParams, PredictionInstance, SegmentedUser, SplitSpec};
use crate::{Error, Result};

const ZERO_SHOT_TEMPLATE: &str = include_str!("../templates/zero_shot.txt");
const ONE_SHOT_TEMPLATE: &str = include_str!("../templates/one_shot.txt");
const FEW_SHOT_TEMPLATE: &str = include_str!("../templates/few_shot.txt");

/// Fallback worked-example justification used when exemplars are generated
/// from training trajectories (the template needs a reason line).
const GENERATED_EXEMPLAR_REASON: &str =
    "User has repeatedly visited these places at similar times of day; the most recent context stays follow the same pattern.";

/// How many worked examples the prompt carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ShotMode {
    #[default]
    Zero,
    One,
    Few,
}

impl ShotMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ShotMode::Zero => "zero",
            ShotMode::One => "one",
            ShotMode::Few => "few",
        }
    }
}

impl FromStr for ShotMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(ShotMode::Zero),
            "one" => Ok(ShotMode::One),
            "few" => Ok(ShotMode::Few),
            other => Err(Error::Config(format!(
                "unknown shot mode {other:?} (expected zero|one|few)"
            ))),
        }
    }
}

/// A stay line already rendered to its three prompt fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StayRow {
    pub hour_label: String,
    pub day_of_week: String,
    pub location_id: String,
}

impl StayRow {
    pub fn from_visit(v: &Visit, format: TimeFormat) -> Self {
        StayRow {
            hour_label: v.hour_label(format),
            day_of_week: v.day_of_week().to_string(),
            location_id: v.location_id.clone(),
        }
    }

    fn render(&self) -> String {
        format!(
            "['{}', '{}', '{}']",
            self.hour_label, self.day_of_week, self.location_id
        )
    }
}

/// A worked input/output example for one- and few-shot prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub historical: Vec<StayRow>,
    pub contextual: Vec<StayRow>,
    pub prediction: Vec<String>,
    pub reason: Option<String>,
}

/// A prompt ready to send.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub instance_id: String,
    pub shots: ShotMode,
    pub h_count: usize,
    pub c_count: usize,
    /// Stable hash of `text`; part of the request cache key.
    pub content_hash: String,
}

fn multiline_block(rows: &[StayRow]) -> String {
    if rows.is_empty() {
        return "{}".to_string();
    }
    let body: Vec<String> = rows.iter().map(StayRow::render).collect();
    format!("{{{}}}", body.join(",\n"))
}

fn inline_block(rows: &[StayRow]) -> String {
    if rows.is_empty() {
        return "{}".to_string();
    }
    let body: Vec<String> = rows.iter().map(StayRow::render).collect();
    format!("{{{}}}", body.join(", "))
}

fn quoted_list_inline(ids: &[String]) -> String {
    let body: Vec<String> = ids.iter().map(|id| format!("'{id}'")).collect();
    format!("[{}]", body.join(", "))
}

fn quoted_list_multiline(ids: &[String]) -> String {
    let body: Vec<String> = ids.iter().map(|id| format!("'{id}'")).collect();
    format!("{{[{}]}}", body.join(",\n"))
}

fn zero_shot_body(historical: &[StayRow], contextual: &[StayRow]) -> String {
    ZERO_SHOT_TEMPLATE
        .replace("{{HISTORICAL_BLOCK}}", &multiline_block(historical))
        .replace("{{CONTEXT_BLOCK}}", &multiline_block(contextual))
}

fn content_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Render an instance as a prompt. One-shot needs one exemplar, few-shot at
/// least two; extra exemplars beyond the few-shot count are used in order.
pub fn render(
    instance: &PredictionInstance,
    shots: ShotMode,
    exemplars: &[Exemplar],
    format: TimeFormat,
) -> Result<RenderedPrompt> {
    let historical: Vec<StayRow> = instance
        .historical
        .iter()
        .map(|v| StayRow::from_visit(v, format))
        .collect();
    let contextual: Vec<StayRow> = instance
        .contextual
        .iter()
        .map(|v| StayRow::from_visit(v, format))
        .collect();

    let text = match shots {
        ShotMode::Zero => zero_shot_body(&historical, &contextual),
        ShotMode::One => {
            let ex = exemplars
                .first()
                .ok_or_else(|| Error::Config("one-shot prompt requires one exemplar".into()))?;
            let reason = ex
                .reason
                .clone()
                .unwrap_or_else(|| GENERATED_EXEMPLAR_REASON.to_string());
            ONE_SHOT_TEMPLATE
                .replace(
                    "{{EXAMPLE_PROMPT}}",
                    &zero_shot_body(&ex.historical, &ex.contextual),
                )
                .replace(
                    "{{EXAMPLE_PREDICTION}}",
                    &quoted_list_multiline(&ex.prediction),
                )
                .replace("{{EXAMPLE_REASON}}", &format!("'{reason}'"))
                .replace(
                    "{{QUERY_PROMPT}}",
                    &zero_shot_body(&historical, &contextual),
                )
        }
        ShotMode::Few => {
            if exemplars.len() < 2 {
                return Err(Error::Config(format!(
                    "few-shot prompt requires at least two exemplars, got {}",
                    exemplars.len()
                )));
            }
            let blocks: Vec<String> = exemplars
                .iter()
                .enumerate()
                .map(|(i, ex)| {
                    format!(
                        "Example {}:\nhistorical_stays: {}\ncontext_stays: {}\ntarget_stay: {{'prediction': {}}}",
                        i + 1,
                        inline_block(&ex.historical),
                        inline_block(&ex.contextual),
                        quoted_list_inline(&ex.prediction),
                    )
                })
                .collect();
            FEW_SHOT_TEMPLATE
                .replace("{{EXAMPLES}}", &blocks.join("\n"))
                .replace("{{HISTORICAL_LINE}}", &inline_block(&historical))
                .replace("{{CONTEXT_LINE}}", &inline_block(&contextual))
        }
    };

    let hash = content_hash(&text);
    Ok(RenderedPrompt {
        text,
        instance_id: instance.instance_id.clone(),
        shots,
        h_count: instance.historical.len(),
        c_count: instance.contextual.len(),
        content_hash: hash,
    })
}

/// Build worked examples from a user's training-split trajectories with a
/// seeded sampler. The example answer ranks the trajectory's true next place
/// first, followed by the most frequent other places in its windows.
pub fn build_exemplars(
    user: &SegmentedUser,
    split: &SplitSpec,
    params: &InstanceParams,
    count: usize,
    seed: u64,
    format: TimeFormat,
) -> Result<Vec<Exemplar>> {
    let ranges = crate::instances::split_user(user.trajectories.len(), split);
    let all: Vec<&Visit> = user.all_visits();
    let mut offsets = Vec::with_capacity(user.trajectories.len());
    let mut acc = 0;
    for t in &user.trajectories {
        offsets.push(acc);
        acc += t.visits.len();
    }
    let mut candidates: Vec<usize> = (0..ranges.train)
        .filter(|&k| user.trajectories[k].visits.len() >= 2)
        .collect();
    if candidates.len() < count {
        return Err(Error::Config(format!(
            "user {} has {} usable training trajectories, {} exemplars requested",
            user.user_id,
            candidates.len(),
            count
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stable_user_seed(&user.user_id));
    candidates.shuffle(&mut rng);
    let mut chosen: Vec<usize> = candidates.into_iter().take(count).collect();
    chosen.sort_unstable();

    let mut exemplars = Vec::with_capacity(count);
    for k in chosen {
        let start = offsets[k];
        let target_pos = start + user.trajectories[k].visits.len() - 1;
        let c_begin = target_pos.saturating_sub(params.c_size).max(start);
        let boundary = if c_begin == target_pos {
            target_pos
        } else {
            c_begin
        };
        let h_begin = boundary.saturating_sub(params.h_size);
        let historical: Vec<StayRow> = all[h_begin..boundary]
            .iter()
            .map(|v| StayRow::from_visit(v, format))
            .collect();
        let contextual: Vec<StayRow> = all[c_begin..target_pos]
            .iter()
            .map(|v| StayRow::from_visit(v, format))
            .collect();
        let target_id = all[target_pos].location_id.clone();
        let prediction = exemplar_prediction(&all[h_begin..target_pos], &target_id);
        exemplars.push(Exemplar {
            historical,
            contextual,
            prediction,
            reason: Some(GENERATED_EXEMPLAR_REASON.to_string()),
        });
    }
    Ok(exemplars)
}

fn exemplar_prediction(window: &[&Visit], target_id: &str) -> Vec<String> {
    use std::collections::HashMap;
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for (pos, v) in window.iter().enumerate() {
        let e = counts.entry(v.location_id.as_str()).or_insert((0, 0));
        e.0 += 1;
        e.1 = pos;
    }
    let mut ranked: Vec<(&str, (usize, usize))> = counts
        .into_iter()
        .filter(|(id, _)| *id != target_id)
        .collect();
    ranked.sort_by_key(|&(_, (count, last))| std::cmp::Reverse((count, last)));
    let mut out = vec![target_id.to_string()];
    out.extend(ranked.into_iter().take(4).map(|(id, _)| id.to_string()));
    out
}

fn stable_user_seed(user_id: &str) -> u64 {
    let digest = Sha256::digest(user_id.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}
