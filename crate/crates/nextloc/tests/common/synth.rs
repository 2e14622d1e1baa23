//! Deterministic synthetic mobility corpora for pipeline tests.
//!
//! The check-in generator produces a tab-separated file in the standard
//! eight-field layout. Each "regular" user draws visits from a personal
//! venue pool with harmonic weights (a strong favorite, a long tail), in
//! bursts separated by >72 h gaps so segmentation yields a known trajectory
//! count; thin users and low-trajectory users are mixed in to exercise the
//! filters.

use chrono::{Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const VENUES_PER_USER: usize = 25;
pub const TRAJECTORIES_PER_USER: usize = 12;
pub const VISITS_PER_TRAJECTORY: usize = 10;

const CATEGORIES: [&str; 6] = [
    "Coffee Shop",
    "Office",
    "Gym",
    "Mexican Restaurant",
    "Park",
    "Bar",
];

/// Deterministic 24-hex venue id per (user, venue rank).
pub fn venue_id(user: usize, rank: usize) -> String {
    let digest = nextloc::manifest::sha256_hex(format!("venue:{user}:{rank}").as_bytes());
    digest[..24].to_string()
}

fn weighted_venue(rng: &mut ChaCha8Rng) -> usize {
    // harmonic weights: venue k with weight 1/(k+1)
    let total: f64 = (0..VENUES_PER_USER).map(|k| 1.0 / (k as f64 + 1.0)).sum();
    let mut roll = rng.gen_range(0.0..total);
    for k in 0..VENUES_PER_USER {
        let w = 1.0 / (k as f64 + 1.0);
        if roll < w {
            return k;
        }
        roll -= w;
    }
    VENUES_PER_USER - 1
}

/// Generate a check-in file body with `n_regular` users that survive every
/// filter, plus a thin user (<10 records) and a low-trajectory user that the
/// pipeline must drop.
pub fn checkin_corpus(seed: u64, n_regular: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lines = Vec::new();
    let base = Utc.with_ymd_and_hms(2012, 4, 1, 6, 0, 0).unwrap();

    for user in 0..n_regular {
        let mut t = base + Duration::hours((user % 48) as i64);
        for _traj in 0..TRAJECTORIES_PER_USER {
            for _ in 0..VISITS_PER_TRAJECTORY {
                t += Duration::minutes(rng.gen_range(45..600));
                let venue = weighted_venue(&mut rng);
                lines.push(checkin_row(user, venue, &t));
            }
            t += Duration::hours(rng.gen_range(80..140)); // segmentation break
        }
    }

    // thin user: nine records, below the min-records threshold
    let thin = n_regular;
    let mut t = base;
    for _ in 0..9 {
        t += Duration::hours(1);
        lines.push(checkin_row(thin, 0, &t));
    }
    // low-trajectory user: plenty of records, only three trajectories
    let low = n_regular + 1;
    let mut t = base;
    for _ in 0..3 {
        for _ in 0..12 {
            t += Duration::minutes(90);
            lines.push(checkin_row(low, 1, &t));
        }
        t += Duration::hours(100);
    }

    lines.join("\n") + "\n"
}

fn checkin_row(user: usize, venue: usize, t: &chrono::DateTime<Utc>) -> String {
    let category = CATEGORIES[venue % CATEGORIES.len()];
    let cat_id =
        nextloc::manifest::sha256_hex(format!("cat:{category}").as_bytes())[..24].to_string();
    format!(
        "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t-240\t{}",
        1000 + user,
        venue_id(user, venue),
        cat_id,
        category,
        40.70 + (venue as f64) * 0.001,
        -74.00 + (venue as f64) * 0.001,
        t.format("%a %b %d %H:%M:%S +0000 %Y"),
    )
}

/// A GPS trace with `stops` planted dwell locations per user, 500 m apart,
/// ten-minute dwells, two-minute transits.
pub fn gps_trace(user_id: &str, stops: usize) -> Vec<String> {
    let mut lines = Vec::new();
    let base_lat = 44.83;
    let lon = 11.62;
    let mut t = chrono::NaiveDate::from_ymd_opt(2023, 5, 1)
        .unwrap()
        .and_hms_opt(9, 0, 0)
        .unwrap();
    for s in 0..stops {
        let lat = base_lat + s as f64 * (500.0 / 111_195.0);
        for i in 0..11 {
            // 11 fixes over 10 minutes, wobbling a few meters
            let wobble = ((i % 3) as f64 - 1.0) * (3.0 / 111_195.0);
            lines.push(format!(
                "{user_id},{:.8},{lon:.8},{}",
                lat + wobble,
                t.format("%Y-%m-%dT%H:%M:%S")
            ));
            t += chrono::Duration::seconds(60);
        }
        // transit fix between stops
        lines.push(format!(
            "{user_id},{:.8},{lon:.8},{}",
            lat + 250.0 / 111_195.0,
            t.format("%Y-%m-%dT%H:%M:%S")
        ));
        t += chrono::Duration::seconds(120);
    }
    lines
}

/// Ground-truth stop centroids for [`gps_trace`].
pub fn gps_truth(stops: usize) -> Vec<(f64, f64)> {
    (0..stops)
        .map(|s| (44.83 + s as f64 * (500.0 / 111_195.0), 11.62))
        .collect()
}
