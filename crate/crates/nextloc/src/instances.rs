//! Trajectory segmentation and prediction-instance construction.
//!
//! A user's visit stream splits into trajectories wherever the gap between
//! consecutive visits reaches the segmentation threshold (72 h by default).
//! Each test-split trajectory yields one prediction instance: the last visit
//! is the target, the visits immediately before it (same trajectory) are the
//! contextual window C, and the visits before C — reaching back through
//! earlier trajectories — are the historical window H.

use chrono::Duration;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ingest::{Dataset, TimeFormat, UserHistory, Visit};
use crate::par;

pub const DEFAULT_GAP_HOURS: i64 = 72;
pub const DEFAULT_MIN_TRAJECTORIES: usize = 5;
pub const DEFAULT_HISTORICAL: usize = 15;
pub const DEFAULT_CONTEXTUAL: usize = 6;

/// A maximal run of visits with no segmentation-sized gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub user_id: String,
    /// Position within the user's chronological trajectory list.
    pub index: usize,
    pub visits: Vec<Visit>,
}

/// A user after segmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentedUser {
    pub user_id: String,
    pub trajectories: Vec<Trajectory>,
}

impl SegmentedUser {
    /// Concatenated visit stream (equals the pre-segmentation list).
    pub fn all_visits(&self) -> Vec<&Visit> {
        self.trajectories
            .iter()
            .flat_map(|t| t.visits.iter())
            .collect()
    }
}

/// Per-user chronological split fractions over trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub valid_frac: f64,
    pub test_frac: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_frac: 0.70,
            valid_frac: 0.10,
            test_frac: 0.20,
        }
    }
}

/// Index ranges of a user's trajectory list per split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitRanges {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

/// One (H, C, target) problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionInstance {
    pub instance_id: String,
    pub user_id: String,
    /// Long-term window, chronological.
    pub historical: Vec<Visit>,
    /// Short-term window, chronological; always precedes the target.
    pub contextual: Vec<Visit>,
    pub target: Visit,
}

impl PredictionInstance {
    /// Distinct location ids in either window.
    pub fn known_ids(&self) -> std::collections::BTreeSet<&str> {
        self.historical
            .iter()
            .chain(self.contextual.iter())
            .map(|v| v.location_id.as_str())
            .collect()
    }
}

/// Split a time-ordered visit list wherever the inter-visit gap reaches
/// `gap` (a gap exactly equal to the threshold starts a new trajectory).
/// Concatenating the result reproduces the input.
pub fn segment(user: &UserHistory, gap: Duration) -> Vec<Trajectory> {
    let mut trajectories = Vec::new();
    let mut current: Vec<Visit> = Vec::new();
    for visit in &user.visits {
        if let Some(last) = current.last() {
            if visit.local_time - last.local_time >= gap {
                trajectories.push(current);
                current = Vec::new();
            }
        }
        current.push(visit.clone());
    }
    if !current.is_empty() {
        trajectories.push(current);
    }
    trajectories
        .into_iter()
        .enumerate()
        .map(|(index, visits)| Trajectory {
            user_id: user.user_id.clone(),
            index,
            visits,
        })
        .collect()
}

/// Segment every user in the dataset (users processed in parallel).
pub fn segment_dataset(dataset: &Dataset, gap: Duration) -> Vec<SegmentedUser> {
    par::map_collect(&dataset.users, |u| SegmentedUser {
        user_id: u.user_id.clone(),
        trajectories: segment(u, gap),
    })
}

/// Keep users with at least `min_trajectories` trajectories.
pub fn filter_trajectory_users(
    users: Vec<SegmentedUser>,
    min_trajectories: usize,
) -> Vec<SegmentedUser> {
    users
        .into_iter()
        .filter(|u| u.trajectories.len() >= min_trajectories)
        .collect()
}

/// Chronological per-user split: floor for train, floor for valid, remainder
/// test (so the test split is never empty when any trajectory exists).
pub fn split_user(n_trajectories: usize, spec: &SplitSpec) -> SplitRanges {
    let train = (n_trajectories as f64 * spec.train_frac).floor() as usize;
    let valid = (n_trajectories as f64 * spec.valid_frac).floor() as usize;
    let (train, valid) = if train + valid >= n_trajectories && n_trajectories > 0 {
        // degenerate fractions; always leave test room
        (n_trajectories.saturating_sub(1).min(train), 0)
    } else {
        (train, valid)
    };
    SplitRanges {
        train,
        valid,
        test: n_trajectories - train - valid,
    }
}

/// Window sizes for instance construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceParams {
    pub h_size: usize,
    pub c_size: usize,
}

impl Default for InstanceParams {
    fn default() -> Self {
        InstanceParams {
            h_size: DEFAULT_HISTORICAL,
            c_size: DEFAULT_CONTEXTUAL,
        }
    }
}

/// Instances built plus how many test trajectories were skipped for an empty
/// window.
#[derive(Debug, Clone, Default)]
pub struct BuildOutcome {
    pub instances: Vec<PredictionInstance>,
    pub skipped_empty_window: usize,
}

/// Build one instance per test-split trajectory of one user.
///
/// For each test trajectory with at least two visits: the last visit is the
/// target; C is up to `c_size` visits immediately before it within the same
/// trajectory; H is up to `h_size` visits immediately before the earliest
/// contextual visit, drawn from the current and earlier trajectories. A
/// window that comes out empty skips the instance — unless its size was
/// configured to zero, in which case the empty window is intentional
/// (ablation arms) and the instance is kept.
pub fn build_instances(
    user: &SegmentedUser,
    split: &SplitSpec,
    params: &InstanceParams,
    dataset_name: &str,
) -> BuildOutcome {
    let ranges = split_user(user.trajectories.len(), split);
    let all: Vec<&Visit> = user.all_visits();
    // start offset of each trajectory in the concatenated stream
    let mut offsets = Vec::with_capacity(user.trajectories.len());
    let mut acc = 0;
    for t in &user.trajectories {
        offsets.push(acc);
        acc += t.visits.len();
    }

    let mut outcome = BuildOutcome::default();
    let test_start = ranges.train + ranges.valid;
    for (k, traj) in user.trajectories.iter().enumerate().skip(test_start) {
        if traj.visits.len() < 2 {
            continue;
        }
        let start = offsets[k];
        let target_pos = start + traj.visits.len() - 1;
        let c_begin = target_pos.saturating_sub(params.c_size).max(start);
        let contextual: Vec<Visit> = all[c_begin..target_pos]
            .iter()
            .map(|v| (*v).clone())
            .collect();
        let boundary = if contextual.is_empty() {
            target_pos
        } else {
            c_begin
        };
        let h_begin = boundary.saturating_sub(params.h_size);
        let historical: Vec<Visit> = all[h_begin..boundary]
            .iter()
            .map(|v| (*v).clone())
            .collect();

        if (params.c_size > 0 && contextual.is_empty())
            || (params.h_size > 0 && historical.is_empty())
        {
            outcome.skipped_empty_window += 1;
            continue;
        }
        let target = all[target_pos].clone();
        let instance_id = instance_id(dataset_name, &user.user_id, k, target_pos, &target, params);
        outcome.instances.push(PredictionInstance {
            instance_id,
            user_id: user.user_id.clone(),
            historical,
            contextual,
            target,
        });
    }
    outcome
}

/// Build instances for every user (users processed in parallel), preserving
/// user order.
pub fn build_all_instances(
    users: &[SegmentedUser],
    split: &SplitSpec,
    params: &InstanceParams,
    dataset_name: &str,
) -> BuildOutcome {
    let per_user: Vec<BuildOutcome> =
        par::map_collect(users, |u| build_instances(u, split, params, dataset_name));
    let mut merged = BuildOutcome::default();
    for mut o in per_user {
        merged.instances.append(&mut o.instances);
        merged.skipped_empty_window += o.skipped_empty_window;
    }
    merged
}

fn instance_id(
    dataset: &str,
    user: &str,
    trajectory: usize,
    target_pos: usize,
    target: &Visit,
    params: &InstanceParams,
) -> String {
    let mut hasher = Sha256::new();
    hasher.update(dataset.as_bytes());
    hasher.update([0]);
    hasher.update(user.as_bytes());
    hasher.update([0]);
    hasher.update(trajectory.to_le_bytes());
    hasher.update(target_pos.to_le_bytes());
    hasher.update(target.location_id.as_bytes());
    hasher.update([0]);
    hasher.update(params.h_size.to_le_bytes());
    hasher.update(params.c_size.to_le_bytes());
    let digest = hasher.finalize();
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    hex[..16].to_string()
}

/// Serialized form of a visit inside instance files: the raw local time plus
/// the rendered prompt fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VisitRow {
    pub time: String,
    pub hour_label: String,
    pub day_of_week: String,
    pub location_id: String,
}

impl VisitRow {
    pub fn from_visit(v: &Visit, format: TimeFormat) -> Self {
        VisitRow {
            time: v.local_time.format("%Y-%m-%dT%H:%M:%S").to_string(),
            hour_label: v.hour_label(format),
            day_of_week: v.day_of_week().to_string(),
            location_id: v.location_id.clone(),
        }
    }

    pub fn to_visit(&self) -> crate::Result<Visit> {
        let t = chrono::NaiveDateTime::parse_from_str(&self.time, "%Y-%m-%dT%H:%M:%S")
            .map_err(|e| crate::Error::Other(format!("bad visit time {:?}: {e}", self.time)))?;
        Ok(Visit::new(t, self.location_id.clone()))
    }
}

/// One line of an instances file, with every field rendered.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceRow {
    pub instance_id: String,
    pub user_id: String,
    pub historical: Vec<VisitRow>,
    pub contextual: Vec<VisitRow>,
    pub target: VisitRow,
}

impl InstanceRow {
    pub fn from_instance(inst: &PredictionInstance, format: TimeFormat) -> Self {
        InstanceRow {
            instance_id: inst.instance_id.clone(),
            user_id: inst.user_id.clone(),
            historical: inst
                .historical
                .iter()
                .map(|v| VisitRow::from_visit(v, format))
                .collect(),
            contextual: inst
                .contextual
                .iter()
                .map(|v| VisitRow::from_visit(v, format))
                .collect(),
            target: VisitRow::from_visit(&inst.target, format),
        }
    }

    pub fn to_instance(&self) -> crate::Result<PredictionInstance> {
        Ok(PredictionInstance {
            instance_id: self.instance_id.clone(),
            user_id: self.user_id.clone(),
            historical: self
                .historical
                .iter()
                .map(|r| r.to_visit())
                .collect::<crate::Result<_>>()?,
            contextual: self
                .contextual
                .iter()
                .map(|r| r.to_visit())
                .collect::<crate::Result<_>>()?,
            target: self.target.to_visit()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn visit_at_hours(h: i64, id: &str) -> Visit {
        let base = NaiveDate::from_ymd_opt(2012, 4, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        Visit::new(base + Duration::hours(h), id)
    }

    fn user_with_hours(hours: &[i64]) -> UserHistory {
        UserHistory {
            user_id: "u".into(),
            visits: hours
                .iter()
                .enumerate()
                .map(|(i, &h)| visit_at_hours(h, &format!("v{i}")))
                .collect(),
        }
    }

    #[test]
    fn gap_at_threshold_starts_new_trajectory() {
        let user = user_with_hours(&[0, 10, 100]); // 90 h gap
        let trajs = segment(&user, Duration::hours(72));
        assert_eq!(trajs.len(), 2);
        assert_eq!(trajs[0].visits.len(), 2);
        assert_eq!(trajs[1].visits.len(), 1);
        assert_eq!(trajs[1].index, 1);
    }

    #[test]
    fn gaps_below_threshold_stay_together() {
        let user = user_with_hours(&[0, 71, 142]);
        assert_eq!(segment(&user, Duration::hours(72)).len(), 1);
        let exact = user_with_hours(&[0, 72]);
        assert_eq!(segment(&exact, Duration::hours(72)).len(), 2);
    }

    /// One-line reference scan for the segmentation rule.
    fn oracle_segment_sizes(hours: &[i64], gap: i64) -> Vec<usize> {
        let mut sizes = vec![1usize];
        for w in hours.windows(2) {
            if w[1] - w[0] >= gap {
                sizes.push(1);
            } else {
                *sizes.last_mut().unwrap() += 1;
            }
        }
        sizes
    }

    #[test]
    fn segmentation_matches_reference_scan_and_reconstructs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..25 {
            let mut hours = Vec::new();
            let mut t = 0i64;
            for _ in 0..200 {
                t += rng.gen_range(1..100);
                hours.push(t);
            }
            let user = user_with_hours(&hours);
            let trajs = segment(&user, Duration::hours(72));
            let sizes: Vec<usize> = trajs.iter().map(|t| t.visits.len()).collect();
            assert_eq!(sizes, oracle_segment_sizes(&hours, 72));
            let rebuilt: Vec<Visit> = trajs.into_iter().flat_map(|t| t.visits).collect();
            assert_eq!(rebuilt, user.visits);
        }
    }

    #[test]
    fn trajectory_filter_boundary() {
        let mk = |n: usize| SegmentedUser {
            user_id: format!("u{n}"),
            trajectories: (0..n)
                .map(|i| Trajectory {
                    user_id: format!("u{n}"),
                    index: i,
                    visits: vec![visit_at_hours(i as i64 * 100, "v")],
                })
                .collect(),
        };
        let kept = filter_trajectory_users(vec![mk(4), mk(5)], 5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].trajectories.len(), 5);
    }

    #[test]
    fn split_fractions() {
        let spec = SplitSpec::default();
        assert_eq!(
            split_user(10, &spec),
            SplitRanges {
                train: 7,
                valid: 1,
                test: 2
            }
        );
        assert_eq!(
            split_user(5, &spec),
            SplitRanges {
                train: 3,
                valid: 0,
                test: 2
            }
        );
        assert_eq!(
            split_user(20, &spec),
            SplitRanges {
                train: 14,
                valid: 2,
                test: 4
            }
        );
    }

    fn segmented_user(traj_hours: &[&[i64]]) -> SegmentedUser {
        let mut visits = Vec::new();
        let mut trajectories = Vec::new();
        let mut counter = 0;
        for (k, hours) in traj_hours.iter().enumerate() {
            let t: Vec<Visit> = hours
                .iter()
                .map(|&h| {
                    counter += 1;
                    visit_at_hours(h, &format!("v{counter}"))
                })
                .collect();
            visits.extend(t.clone());
            trajectories.push(Trajectory {
                user_id: "u".into(),
                index: k,
                visits: t,
            });
        }
        SegmentedUser {
            user_id: "u".into(),
            trajectories,
        }
    }

    #[test]
    fn full_windows_when_history_is_deep() {
        // 5 trajectories; the last (test) one has 22 visits.
        let t0: Vec<i64> = (0..10).collect();
        let t1: Vec<i64> = (0..10).map(|i| 200 + i).collect();
        let t2: Vec<i64> = (0..10).map(|i| 400 + i).collect();
        let t3: Vec<i64> = (0..10).map(|i| 600 + i).collect();
        let t4: Vec<i64> = (0..22).map(|i| 800 + i).collect();
        let user = segmented_user(&[&t0, &t1, &t2, &t3, &t4]);
        let out = build_instances(
            &user,
            &SplitSpec::default(),
            &InstanceParams::default(),
            "d",
        );
        // split 3/0/2 over 5 trajectories: both t3 and t4 are test targets
        assert_eq!(out.instances.len(), 2);
        let inst = &out.instances[1];
        assert_eq!(inst.contextual.len(), 6);
        assert_eq!(inst.historical.len(), 15);
        assert_eq!(inst.target.location_id, "v62"); // 62nd visit overall
                                                    // temporal soundness
        let max_h = inst.historical.iter().map(|v| v.local_time).max().unwrap();
        let min_c = inst.contextual.iter().map(|v| v.local_time).min().unwrap();
        assert!(max_h < min_c);
        assert!(inst
            .contextual
            .iter()
            .all(|c| c.local_time < inst.target.local_time));
    }

    #[test]
    fn first_trajectory_without_history_is_skipped() {
        // Sole trajectory of 3 visits: C takes the 2 preceding visits, H has
        // nothing before them.
        let user = segmented_user(&[&[0, 1, 2]]);
        let spec = SplitSpec::default();
        let out = build_instances(
            &user,
            &spec,
            &InstanceParams {
                h_size: 15,
                c_size: 6,
            },
            "d",
        );
        assert!(out.instances.is_empty());
        assert_eq!(out.skipped_empty_window, 1);
    }

    #[test]
    fn zero_sized_windows_are_kept_by_design() {
        let user = segmented_user(&[&[0, 1, 2]]);
        let spec = SplitSpec::default();
        let h0 = build_instances(
            &user,
            &spec,
            &InstanceParams {
                h_size: 0,
                c_size: 6,
            },
            "d",
        );
        assert_eq!(h0.instances.len(), 1);
        assert!(h0.instances[0].historical.is_empty());
        assert_eq!(h0.instances[0].contextual.len(), 2);
        let c0 = build_instances(
            &user,
            &spec,
            &InstanceParams {
                h_size: 2,
                c_size: 0,
            },
            "d",
        );
        assert_eq!(c0.instances.len(), 1);
        assert!(c0.instances[0].contextual.is_empty());
        assert_eq!(c0.instances[0].historical.len(), 2);
    }

    #[test]
    fn historical_reaches_into_earlier_trajectories() {
        let t0: Vec<i64> = (0..4).collect();
        let t1: Vec<i64> = (0..4).map(|i| 200 + i).collect();
        let t2: Vec<i64> = (0..4).map(|i| 400 + i).collect();
        let t3: Vec<i64> = (0..4).map(|i| 600 + i).collect();
        let t4: Vec<i64> = (0..4).map(|i| 800 + i).collect();
        let user = segmented_user(&[&t0, &t1, &t2, &t3, &t4]);
        let out = build_instances(
            &user,
            &SplitSpec::default(),
            &InstanceParams {
                h_size: 10,
                c_size: 2,
            },
            "d",
        );
        assert_eq!(out.instances.len(), 2);
        let inst = &out.instances[1];
        // C = visits 18,19 (within t4); H = 10 visits before them, crossing
        // back through t3 and into t2.
        assert_eq!(inst.contextual.len(), 2);
        assert_eq!(inst.historical.len(), 10);
        assert_eq!(inst.historical[0].location_id, "v8");
    }

    #[test]
    fn larger_history_contains_smaller_as_suffix() {
        let t: Vec<Vec<i64>> = (0..6)
            .map(|k| (0..12).map(|i| k * 300 + i).collect())
            .collect();
        let refs: Vec<&[i64]> = t.iter().map(|v| v.as_slice()).collect();
        let user = segmented_user(&refs);
        let spec = SplitSpec::default();
        let h15 = build_instances(
            &user,
            &spec,
            &InstanceParams {
                h_size: 15,
                c_size: 6,
            },
            "d",
        );
        let h30 = build_instances(
            &user,
            &spec,
            &InstanceParams {
                h_size: 30,
                c_size: 6,
            },
            "d",
        );
        assert_eq!(h15.instances.len(), h30.instances.len());
        for (small, large) in h15.instances.iter().zip(&h30.instances) {
            assert_eq!(small.target, large.target);
            assert_eq!(small.contextual, large.contextual);
            assert!(large.historical.len() >= small.historical.len());
            let suffix = &large.historical[large.historical.len() - small.historical.len()..];
            assert_eq!(suffix, small.historical.as_slice());
        }
    }

    #[test]
    fn instance_ids_are_deterministic() {
        let t: Vec<Vec<i64>> = (0..5)
            .map(|k| (0..10).map(|i| k * 300 + i).collect())
            .collect();
        let refs: Vec<&[i64]> = t.iter().map(|v| v.as_slice()).collect();
        let user = segmented_user(&refs);
        let spec = SplitSpec::default();
        let params = InstanceParams::default();
        let a = build_instances(&user, &spec, &params, "d");
        let b = build_instances(&user, &spec, &params, "d");
        let ids_a: Vec<&str> = a.instances.iter().map(|i| i.instance_id.as_str()).collect();
        let ids_b: Vec<&str> = b.instances.iter().map(|i| i.instance_id.as_str()).collect();
        assert_eq!(ids_a, ids_b);
    }

    #[test]
    fn instance_rows_round_trip() {
        let t: Vec<Vec<i64>> = (0..5)
            .map(|k| (0..10).map(|i| k * 300 + i).collect())
            .collect();
        let refs: Vec<&[i64]> = t.iter().map(|v| v.as_slice()).collect();
        let user = segmented_user(&refs);
        let out = build_instances(
            &user,
            &SplitSpec::default(),
            &InstanceParams::default(),
            "d",
        );
        for inst in &out.instances {
            let row = InstanceRow::from_instance(inst, TimeFormat::HourOnly);
            let back = row.to_instance().unwrap();
            assert_eq!(&back, inst);
        }
    }
}
