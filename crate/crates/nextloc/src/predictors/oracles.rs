//! Deterministic offline predictors over an instance's visit windows.
//!
//! These stand in for remote models so the whole pipeline runs (and is
//! regression-tested) without network access. All of them are pure: same
//! instance, same ranked list, regardless of run index.

use std::collections::HashMap;

use crate::ingest::Visit;
use crate::instances::PredictionInstance;
use crate::parse::MAX_PREDICTIONS;

fn window(instance: &PredictionInstance) -> Vec<&Visit> {
    instance
        .historical
        .iter()
        .chain(instance.contextual.iter())
        .collect()
}

/// (count, last position) per id over the window, in visit order.
fn frequency_table<'a>(visits: &[&'a Visit]) -> HashMap<&'a str, (usize, usize)> {
    let mut table: HashMap<&str, (usize, usize)> = HashMap::new();
    for (pos, v) in visits.iter().enumerate() {
        let e = table.entry(v.location_id.as_str()).or_insert((0, 0));
        e.0 += 1;
        e.1 = pos;
    }
    table
}

fn ranked_by_frequency(visits: &[&Visit]) -> Vec<String> {
    let table = frequency_table(visits);
    let mut ranked: Vec<(&str, (usize, usize))> = table.into_iter().collect();
    // count descending, ties broken by the most recent visit
    ranked.sort_by_key(|&(_, (count, last))| std::cmp::Reverse((count, last)));
    ranked
        .into_iter()
        .take(MAX_PREDICTIONS)
        .map(|(id, _)| id.to_string())
        .collect()
}

/// Rank ids by visit count over H ∪ C, most recent first among ties.
pub fn frequency_oracle(instance: &PredictionInstance) -> Vec<String> {
    ranked_by_frequency(&window(instance))
}

/// Rank distinct ids by how recently they were visited.
pub fn recency_oracle(instance: &PredictionInstance) -> Vec<String> {
    let visits = window(instance);
    let table = frequency_table(&visits);
    let mut ranked: Vec<(&str, usize)> = table
        .into_iter()
        .map(|(id, (_, last))| (id, last))
        .collect();
    ranked.sort_by_key(|&(_, last)| std::cmp::Reverse(last));
    ranked
        .into_iter()
        .take(MAX_PREDICTIONS)
        .map(|(id, _)| id.to_string())
        .collect()
}

/// Rank ids by order-1 transition counts from the current location (the last
/// visit of the window), backing off to the frequency ranking for ids the
/// transition table does not reach.
pub fn markov1_oracle(instance: &PredictionInstance) -> Vec<String> {
    let visits = window(instance);
    if visits.len() < 2 {
        return ranked_by_frequency(&visits);
    }
    let current = visits.last().unwrap().location_id.as_str();
    // successor counts from `current`, with the position of the latest such
    // transition as tiebreak
    let mut successors: HashMap<&str, (usize, usize)> = HashMap::new();
    for (pos, pair) in visits.windows(2).enumerate() {
        if pair[0].location_id == current {
            let e = successors
                .entry(pair[1].location_id.as_str())
                .or_insert((0, 0));
            e.0 += 1;
            e.1 = pos;
        }
    }
    let mut ranked: Vec<(&str, (usize, usize))> = successors.into_iter().collect();
    ranked.sort_by_key(|&(_, (count, last))| std::cmp::Reverse((count, last)));
    let mut out: Vec<String> = ranked
        .into_iter()
        .take(MAX_PREDICTIONS)
        .map(|(id, _)| id.to_string())
        .collect();
    for id in ranked_by_frequency(&visits) {
        if out.len() >= MAX_PREDICTIONS {
            break;
        }
        if !out.contains(&id) {
            out.push(id);
        }
    }
    out
}
