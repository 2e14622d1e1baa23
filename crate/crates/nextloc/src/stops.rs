//! Stop-location extraction from dense GPS traces.
//!
//! A stay candidate is a maximal temporal run of points that all lie within a
//! radius of the run's running centroid and that lasts at least the dwell
//! threshold. Candidate centroids are then density-clustered (DBSCAN
//! semantics) so the same physical place gets one reusable identity across
//! visits, and each place maps to a square grid cell via a local
//! equirectangular projection.

use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::ingest::{UserHistory, Visit};
use crate::{Error, Result};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Defaults for the stay-candidate rule and clustering.
pub const DEFAULT_STAY_RADIUS_M: f64 = 65.0;
pub const DEFAULT_MIN_DWELL_SECS: i64 = 5 * 60;
pub const DEFAULT_CLUSTER_EPSILON_M: f64 = 60.0;
pub const DEFAULT_CLUSTER_MIN_PTS: usize = 1;
pub const DEFAULT_CELL_SIZE_M: f64 = 200.0;

/// One GPS fix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpsPoint {
    pub user_id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub timestamp: NaiveDateTime,
}

/// A dwell detected in a single user's trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StayCandidate {
    pub user_id: String,
    pub centroid_lat: f64,
    pub centroid_lon: f64,
    pub arrival: NaiveDateTime,
    pub departure: NaiveDateTime,
    /// Index range of member points in the source trace.
    pub start_idx: usize,
    pub end_idx: usize,
}

/// A clustered, reusable stop location visited once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopLocation {
    pub user_id: String,
    pub centroid_lat: f64,
    pub centroid_lon: f64,
    pub arrival: NaiveDateTime,
    pub departure: NaiveDateTime,
    /// Shared identity of the place (cluster id or grid cell, per mode).
    pub cell_id: String,
}

/// How stop visits are identified downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum LocationIdMode {
    /// Grid-cell id of the visit centroid.
    #[default]
    GridCell,
    /// Density-cluster id (stable across visits to the same place).
    StopCluster,
}

/// Great-circle distance in meters.
pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (phi1, phi2) = (lat1.to_radians(), lat2.to_radians());
    let dphi = (lat2 - lat1).to_radians();
    let dlambda = (lon2 - lon1).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * a.sqrt().atan2((1.0 - a).sqrt())
}

/// Detect dwell candidates in one user's time-ordered trace.
///
/// Grows a window from each start point, keeping the running centroid as
/// (sum / count); a point joins while it stays within `radius_m` of that
/// centroid. Windows lasting at least `min_dwell_secs` become candidates;
/// candidates are disjoint in time. Traces with fewer than two points yield
/// no candidates.
pub fn detect_stay_candidates(
    trace: &[GpsPoint],
    radius_m: f64,
    min_dwell_secs: i64,
) -> Vec<StayCandidate> {
    let mut out = Vec::new();
    if trace.len() < 2 {
        return out;
    }
    let mut i = 0;
    while i < trace.len() {
        let mut sum_lat = trace[i].latitude;
        let mut sum_lon = trace[i].longitude;
        let mut count = 1.0;
        let mut j = i;
        while j + 1 < trace.len() {
            let next = &trace[j + 1];
            let c_lat = sum_lat / count;
            let c_lon = sum_lon / count;
            if haversine_m(c_lat, c_lon, next.latitude, next.longitude) > radius_m {
                break;
            }
            sum_lat += next.latitude;
            sum_lon += next.longitude;
            count += 1.0;
            j += 1;
        }
        let dwell = (trace[j].timestamp - trace[i].timestamp).num_seconds();
        if j > i && dwell >= min_dwell_secs {
            out.push(StayCandidate {
                user_id: trace[i].user_id.clone(),
                centroid_lat: sum_lat / count,
                centroid_lon: sum_lon / count,
                arrival: trace[i].timestamp,
                departure: trace[j].timestamp,
                start_idx: i,
                end_idx: j,
            });
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Density-based clustering of candidate centroids (DBSCAN semantics).
///
/// A point is core when its epsilon-neighborhood (itself included) holds at
/// least `min_pts` points; clusters are connected components of core points
/// under the epsilon relation. Non-core points attach to the cluster of their
/// lowest-index core neighbor; candidates reachable from no core become
/// singleton clusters so every visit keeps a location identity.
///
/// Returns one cluster index per candidate, densely numbered from 0 in first-
/// appearance order.
pub fn cluster_assignments(centroids: &[(f64, f64)], epsilon_m: f64, min_pts: usize) -> Vec<usize> {
    let n = centroids.len();
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            let d = haversine_m(
                centroids[i].0,
                centroids[i].1,
                centroids[j].0,
                centroids[j].1,
            );
            if d <= epsilon_m {
                neighbors[i].push(j);
            }
        }
    }
    let core: Vec<bool> = neighbors.iter().map(|ns| ns.len() >= min_pts).collect();

    // Connected components over core points.
    let mut component = vec![usize::MAX; n];
    let mut next = 0;
    for start in 0..n {
        if !core[start] || component[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        component[start] = next;
        while let Some(p) = stack.pop() {
            for &q in &neighbors[p] {
                if core[q] && component[q] == usize::MAX {
                    component[q] = next;
                    stack.push(q);
                }
            }
        }
        next += 1;
    }
    // Border points join their lowest-index core neighbor; leftovers become
    // singletons.
    for i in 0..n {
        if component[i] != usize::MAX {
            continue;
        }
        if let Some(&c) = neighbors[i].iter().find(|&&q| core[q]) {
            component[i] = component[c];
        } else {
            component[i] = next;
            next += 1;
        }
    }
    renumber_dense(&component)
}

fn renumber_dense(raw: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    let mut out = Vec::with_capacity(raw.len());
    for &c in raw {
        let dense = map.len();
        out.push(*map.entry(c).or_insert(dense));
    }
    out
}

/// Cluster stay candidates into stop locations. Visits keep their own
/// arrival/departure; the shared identity (`cell_id`) comes from the cluster
/// or, in [`LocationIdMode::GridCell`] mode, from the grid cell of the visit
/// centroid.
pub fn cluster_stays(
    candidates: &[StayCandidate],
    epsilon_m: f64,
    min_pts: usize,
    grid: Option<&GridSpec>,
    mode: LocationIdMode,
) -> Result<Vec<StopLocation>> {
    let centroids: Vec<(f64, f64)> = candidates
        .iter()
        .map(|c| (c.centroid_lat, c.centroid_lon))
        .collect();
    let assignment = cluster_assignments(&centroids, epsilon_m, min_pts);

    // Cluster centroid = mean of member candidate centroids.
    let n_clusters = assignment.iter().copied().max().map_or(0, |m| m + 1);
    let mut sums = vec![(0.0f64, 0.0f64, 0usize); n_clusters];
    for (cand, &cl) in candidates.iter().zip(&assignment) {
        sums[cl].0 += cand.centroid_lat;
        sums[cl].1 += cand.centroid_lon;
        sums[cl].2 += 1;
    }
    let cluster_centroids: Vec<(f64, f64)> = sums
        .iter()
        .map(|(la, lo, k)| (la / *k as f64, lo / *k as f64))
        .collect();

    candidates
        .iter()
        .zip(&assignment)
        .map(|(cand, &cl)| {
            let (c_lat, c_lon) = cluster_centroids[cl];
            let cell_id = match mode {
                LocationIdMode::StopCluster => format!("stop_{cl:05}"),
                LocationIdMode::GridCell => {
                    let grid = grid.ok_or_else(|| {
                        Error::Config("grid-cell location mode requires a grid spec".into())
                    })?;
                    grid.cell_id(c_lat, c_lon)?
                }
            };
            Ok(StopLocation {
                user_id: cand.user_id.clone(),
                centroid_lat: c_lat,
                centroid_lon: c_lon,
                arrival: cand.arrival,
                departure: cand.departure,
                cell_id,
            })
        })
        .collect()
}

/// A square tessellation of a city bounding box.
///
/// Cells are laid out from the origin (south-west corner) using a local
/// equirectangular projection about the box centroid; at city scale the
/// projection error is far below the cell size, and cell ids stay
/// reproducible without an external projection library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub cell_size_m: f64,
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl GridSpec {
    pub fn new(
        origin_lat: f64,
        origin_lon: f64,
        cell_size_m: f64,
        bbox: (f64, f64, f64, f64),
    ) -> Result<Self> {
        if cell_size_m <= 0.0 {
            return Err(Error::Config(format!(
                "cell size must be positive, got {cell_size_m}"
            )));
        }
        let (min_lat, min_lon, max_lat, max_lon) = bbox;
        Ok(GridSpec {
            origin_lat,
            origin_lon,
            cell_size_m,
            min_lat,
            min_lon,
            max_lat,
            max_lon,
        })
    }

    /// Grid anchored at the bounding box's south-west corner.
    pub fn from_bbox(bbox: (f64, f64, f64, f64), cell_size_m: f64) -> Result<Self> {
        Self::new(bbox.0, bbox.1, cell_size_m, bbox)
    }

    /// Smallest box containing all points, padded slightly so boundary points
    /// stay inside.
    pub fn bbox_of(points: impl Iterator<Item = (f64, f64)>) -> Option<(f64, f64, f64, f64)> {
        let mut bbox: Option<(f64, f64, f64, f64)> = None;
        for (lat, lon) in points {
            bbox = Some(match bbox {
                None => (lat, lon, lat, lon),
                Some((a, b, c, d)) => (a.min(lat), b.min(lon), c.max(lat), d.max(lon)),
            });
        }
        bbox.map(|(a, b, c, d)| (a - 1e-9, b - 1e-9, c + 1e-9, d + 1e-9))
    }

    fn reference_lat(&self) -> f64 {
        (self.min_lat + self.max_lat) / 2.0
    }

    /// Planar east/north offset (meters) of a point from the origin.
    fn project(&self, lat: f64, lon: f64) -> (f64, f64) {
        let ref_cos = self.reference_lat().to_radians().cos();
        let x = (lon - self.origin_lon).to_radians() * EARTH_RADIUS_M * ref_cos;
        let y = (lat - self.origin_lat).to_radians() * EARTH_RADIUS_M;
        (x, y)
    }

    /// Column/row of a point, or an out-of-bounds error.
    pub fn cell_of(&self, lat: f64, lon: f64) -> Result<(i64, i64)> {
        if lat < self.min_lat || lat > self.max_lat || lon < self.min_lon || lon > self.max_lon {
            return Err(Error::OutOfBounds { lat, lon });
        }
        let (x, y) = self.project(lat, lon);
        Ok((
            (x / self.cell_size_m).floor() as i64,
            (y / self.cell_size_m).floor() as i64,
        ))
    }

    /// Deterministic cell identifier.
    pub fn cell_id(&self, lat: f64, lon: f64) -> Result<String> {
        let (col, row) = self.cell_of(lat, lon)?;
        Ok(format!("cell_{col}_{row}"))
    }
}

/// Load a comma-separated GPS trace file: `user_id,latitude,longitude,iso8601`.
/// Rows come back grouped per user and time-ordered.
pub fn load_gps_file(path: &Path) -> Result<(Vec<Vec<GpsPoint>>, Vec<crate::ingest::RejectedRow>)> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (traces, rejects, parsed) = parse_gps_str(&content);
    if parsed == 0 {
        return Err(Error::EmptyInput {
            path: path.to_path_buf(),
            detail: "no GPS rows parsed".into(),
        });
    }
    Ok((traces, rejects))
}

/// In-memory variant of [`load_gps_file`]; returns (traces, rejects, parsed).
pub fn parse_gps_str(
    content: &str,
) -> (Vec<Vec<GpsPoint>>, Vec<crate::ingest::RejectedRow>, usize) {
    let mut points = Vec::new();
    let mut rejects = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match parse_gps_row(line) {
            Ok(p) => points.push(p),
            Err(reason) => rejects.push(crate::ingest::RejectedRow {
                line_no: idx + 1,
                raw_line: line.to_string(),
                reason,
            }),
        }
    }
    let parsed = points.len();
    points
        .sort_by(|a, b| (a.user_id.as_str(), a.timestamp).cmp(&(b.user_id.as_str(), b.timestamp)));
    let mut traces: Vec<Vec<GpsPoint>> = Vec::new();
    for p in points {
        match traces.last_mut() {
            Some(t) if t[0].user_id == p.user_id => t.push(p),
            _ => traces.push(vec![p]),
        }
    }
    (traces, rejects, parsed)
}

fn parse_gps_row(line: &str) -> std::result::Result<GpsPoint, String> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 4 {
        return Err(format!(
            "expected 4 comma-separated fields, got {}",
            fields.len()
        ));
    }
    let latitude: f64 = fields[1]
        .trim()
        .parse()
        .map_err(|_| "bad latitude".to_string())?;
    let longitude: f64 = fields[2]
        .trim()
        .parse()
        .map_err(|_| "bad longitude".to_string())?;
    if !(-90.0..=90.0).contains(&latitude) || !(-180.0..=180.0).contains(&longitude) {
        return Err("coordinates out of range".into());
    }
    let ts = fields[3].trim();
    let timestamp = NaiveDateTime::parse_from_str(ts, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| chrono::DateTime::parse_from_rfc3339(ts).map(|dt| dt.naive_local()))
        .map_err(|e| format!("bad timestamp {ts:?}: {e}"))?;
    Ok(GpsPoint {
        user_id: fields[0].trim().to_string(),
        latitude,
        longitude,
        timestamp,
    })
}

/// Turn per-user stop locations into visit streams (visit time = arrival).
pub fn stops_to_user_histories(stops: &[StopLocation]) -> Vec<UserHistory> {
    let mut sorted: Vec<&StopLocation> = stops.iter().collect();
    sorted.sort_by(|a, b| (a.user_id.as_str(), a.arrival).cmp(&(b.user_id.as_str(), b.arrival)));
    let mut users: Vec<UserHistory> = Vec::new();
    for s in sorted {
        let visit = Visit::new(s.arrival, s.cell_id.clone());
        match users.last_mut() {
            Some(u) if u.user_id == s.user_id => u.visits.push(visit),
            _ => users.push(UserHistory {
                user_id: s.user_id.clone(),
                visits: vec![visit],
            }),
        }
    }
    users
}
