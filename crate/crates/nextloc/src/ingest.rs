//! Check-in and GPS file ingestion.
//!
//! Check-in files follow the Foursquare TSMC2014 layout: eight tab-separated
//! fields per row (user id, venue id, venue category id, venue category,
//! latitude, longitude, timezone offset in minutes, UTC timestamp like
//! `Tue Apr 03 18:15:33 +0000 2012`). Rows are grouped per user and ordered
//! by local wall-clock time (UTC + offset); malformed rows are collected in a
//! rejects report instead of aborting the run.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use chrono::{DateTime, Datelike, Duration, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Source timestamp layout, e.g. `Tue Apr 03 18:15:33 +0000 2012`.
const CHECKIN_TIME_FORMAT: &str = "%a %b %d %H:%M:%S %z %Y";

/// One raw check-in row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckinRecord {
    pub user_id: String,
    pub venue_id: String,
    pub venue_category_id: String,
    pub venue_category: String,
    pub latitude: f64,
    pub longitude: f64,
    pub tz_offset_minutes: i32,
    /// Parsed exactly once from the source format; never re-rendered.
    pub utc_timestamp: DateTime<chrono::FixedOffset>,
    /// Original line, kept verbatim for the contamination quiz.
    pub raw_line: String,
}

impl CheckinRecord {
    /// Wall-clock time at the venue: UTC instant shifted by the row's offset.
    pub fn local_time(&self) -> NaiveDateTime {
        (self.utc_timestamp.to_utc() + Duration::minutes(self.tz_offset_minutes as i64)).naive_utc()
    }
}

/// Rendering of a stay's start time inside prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum TimeFormat {
    /// `0 AM` .. `11 AM`, `12 PM`, `1 PM` .. `11 PM`
    #[default]
    HourOnly,
    /// `03:16 AM`, `10:49 PM` (standard 12-hour clock)
    MinutePrecision,
}

/// A spatio-temporal point: when the user was where.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visit {
    pub local_time: NaiveDateTime,
    pub location_id: String,
}

impl Visit {
    pub fn new(local_time: NaiveDateTime, location_id: impl Into<String>) -> Self {
        Visit {
            local_time,
            location_id: location_id.into(),
        }
    }

    /// Hour-of-day label. Hour-only uses `0 AM`..`11 AM`, `12 PM`, `1 PM`..
    /// `11 PM`; minute precision uses the standard 12-hour clock.
    pub fn hour_label(&self, format: TimeFormat) -> String {
        let hour = self.local_time.hour();
        match format {
            TimeFormat::HourOnly => match hour {
                0..=11 => format!("{hour} AM"),
                12 => "12 PM".to_string(),
                _ => format!("{} PM", hour - 12),
            },
            TimeFormat::MinutePrecision => self.local_time.format("%I:%M %p").to_string(),
        }
    }

    /// English day name, `Monday`..`Sunday`.
    pub fn day_of_week(&self) -> &'static str {
        match self.local_time.weekday() {
            chrono::Weekday::Mon => "Monday",
            chrono::Weekday::Tue => "Tuesday",
            chrono::Weekday::Wed => "Wednesday",
            chrono::Weekday::Thu => "Thursday",
            chrono::Weekday::Fri => "Friday",
            chrono::Weekday::Sat => "Saturday",
            chrono::Weekday::Sun => "Sunday",
        }
    }
}

/// A user's full time-ordered visit stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserHistory {
    pub user_id: String,
    pub visits: Vec<Visit>,
}

/// One rejected input row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line_no: usize,
    pub raw_line: String,
    pub reason: String,
}

/// Canonical in-memory dataset: per-user visit streams plus the location
/// vocabulary (exact union of location ids across retained users).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub users: Vec<UserHistory>,
    pub vocabulary: BTreeSet<String>,
    /// Raw rows backing the dataset (empty for GPS-derived datasets); the
    /// contamination quiz draws verbatim rows from here.
    pub records: Vec<CheckinRecord>,
}

impl Dataset {
    pub fn from_users(name: impl Into<String>, users: Vec<UserHistory>) -> Self {
        let vocabulary = vocabulary_of(&users);
        Dataset {
            name: name.into(),
            users,
            vocabulary,
            records: Vec::new(),
        }
    }
}

fn vocabulary_of(users: &[UserHistory]) -> BTreeSet<String> {
    users
        .iter()
        .flat_map(|u| u.visits.iter().map(|v| v.location_id.clone()))
        .collect()
}

/// Counts reported for a dataset. `trajectories` is only meaningful after
/// segmentation; see [`crate::instances::segment_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub users: usize,
    pub unique_locations: usize,
    pub trajectories: usize,
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} users, {} unique locations, {} trajectories",
            self.users, self.unique_locations, self.trajectories
        )
    }
}

/// Outcome of parsing a raw file: the dataset plus the rejects partition.
/// `rows_parsed + rejects.len()` always equals the number of input rows.
#[derive(Debug)]
pub struct ParseOutcome {
    pub dataset: Dataset,
    pub rejects: Vec<RejectedRow>,
    pub rows_parsed: usize,
}

/// Parse an eight-field tab-separated check-in file into an unfiltered
/// dataset. Malformed rows land in the rejects report; the call only fails if
/// zero rows parse.
pub fn parse_checkin_file(path: &Path, name: &str) -> Result<ParseOutcome> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let outcome = parse_checkin_str(&content, name);
    if outcome.rows_parsed == 0 {
        let detail = outcome
            .rejects
            .first()
            .map(|r| format!("first reject: {}", r.reason))
            .unwrap_or_else(|| "file is empty".to_string());
        return Err(Error::EmptyInput {
            path: path.to_path_buf(),
            detail,
        });
    }
    Ok(outcome)
}

/// In-memory variant of [`parse_checkin_file`]; never fails (an all-reject
/// input simply yields `rows_parsed == 0`).
pub fn parse_checkin_str(content: &str, name: &str) -> ParseOutcome {
    let mut records = Vec::new();
    let mut rejects = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_checkin_row(line) {
            Ok(rec) => records.push(rec),
            Err(reason) => rejects.push(RejectedRow {
                line_no: idx + 1,
                raw_line: line.to_string(),
                reason,
            }),
        }
    }
    let rows_parsed = records.len();
    let dataset = group_records(name, records);
    ParseOutcome {
        dataset,
        rejects,
        rows_parsed,
    }
}

fn parse_checkin_row(line: &str) -> std::result::Result<CheckinRecord, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 8 {
        return Err(format!(
            "expected 8 tab-separated fields, got {}",
            fields.len()
        ));
    }
    let latitude: f64 = fields[4]
        .trim()
        .parse()
        .map_err(|_| format!("bad latitude {:?}", fields[4]))?;
    let longitude: f64 = fields[5]
        .trim()
        .parse()
        .map_err(|_| format!("bad longitude {:?}", fields[5]))?;
    if !(-90.0..=90.0).contains(&latitude) {
        return Err(format!("latitude {latitude} out of range"));
    }
    if !(-180.0..=180.0).contains(&longitude) {
        return Err(format!("longitude {longitude} out of range"));
    }
    let tz_offset_minutes: i32 = fields[6]
        .trim()
        .parse()
        .map_err(|_| format!("bad timezone offset {:?}", fields[6]))?;
    let utc_timestamp = DateTime::parse_from_str(fields[7].trim(), CHECKIN_TIME_FORMAT)
        .map_err(|e| format!("bad timestamp {:?}: {e}", fields[7]))?;
    Ok(CheckinRecord {
        user_id: fields[0].to_string(),
        venue_id: fields[1].to_string(),
        venue_category_id: fields[2].to_string(),
        venue_category: fields[3].to_string(),
        latitude,
        longitude,
        tz_offset_minutes,
        utc_timestamp,
        raw_line: line.to_string(),
    })
}

/// Group records by user, each user's visits ordered by local time. The sort
/// key includes the raw line so the result is a permutation-independent
/// function of the input rows even with duplicate timestamps.
fn group_records(name: &str, mut records: Vec<CheckinRecord>) -> Dataset {
    records.sort_by(|a, b| {
        (a.user_id.as_str(), a.local_time(), a.raw_line.as_str()).cmp(&(
            b.user_id.as_str(),
            b.local_time(),
            b.raw_line.as_str(),
        ))
    });
    let mut users: Vec<UserHistory> = Vec::new();
    for rec in &records {
        let visit = Visit::new(rec.local_time(), rec.venue_id.clone());
        match users.last_mut() {
            Some(u) if u.user_id == rec.user_id => u.visits.push(visit),
            _ => users.push(UserHistory {
                user_id: rec.user_id.clone(),
                visits: vec![visit],
            }),
        }
    }
    let vocabulary = vocabulary_of(&users);
    Dataset {
        name: name.to_string(),
        users,
        vocabulary,
        records,
    }
}

/// Drop users with fewer than `min_records` visits and recompute the
/// vocabulary from the survivors. Idempotent; an empty result is reported by
/// the caller, not an error.
pub fn filter_users(dataset: Dataset, min_records: usize) -> Dataset {
    let users: Vec<UserHistory> = dataset
        .users
        .into_iter()
        .filter(|u| u.visits.len() >= min_records)
        .collect();
    let vocabulary = vocabulary_of(&users);
    let retained: BTreeSet<&str> = users.iter().map(|u| u.user_id.as_str()).collect();
    let records = dataset
        .records
        .into_iter()
        .filter(|r| retained.contains(r.user_id.as_str()))
        .collect();
    Dataset {
        name: dataset.name,
        users,
        vocabulary,
        records,
    }
}

/// Exact user/location/trajectory counts. `trajectory_counts` carries one
/// entry per user (parallel to `dataset.users`).
pub fn dataset_stats(dataset: &Dataset, trajectory_counts: &[usize]) -> DatasetStats {
    DatasetStats {
        users: dataset.users.len(),
        unique_locations: dataset.vocabulary.len(),
        trajectories: trajectory_counts.iter().sum(),
    }
}
