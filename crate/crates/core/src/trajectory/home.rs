use std::collections::BTreeMap;

use crate::types::PlaceId;

use super::{Staypoint, TrajectoryError};

const DAY: i64 = 86_400;
const NIGHT_START: i64 = 20 * 3600;
const NIGHT_END: i64 = 32 * 3600; // 08:00 the next day

/// Seconds of `[enter, enter + duration)` falling in local 20:00-08:00.
pub fn night_seconds(enter: i64, duration: i64, utc_offset_s: i64) -> i64 {
    let start = enter + utc_offset_s;
    let end = start + duration.max(0);
    let mut total = 0;
    // A night window starting on day d covers [d*DAY + 20h, d*DAY + 32h).
    let first_day = (start - NIGHT_END).div_euclid(DAY);
    let last_day = end.div_euclid(DAY);
    for day in first_day..=last_day {
        let lo = day * DAY + NIGHT_START;
        let hi = day * DAY + NIGHT_END;
        total += (end.min(hi) - start.max(lo)).max(0);
    }
    total
}

/// Home rule over arbitrary place keys: most nighttime stay time, falling
/// back to most total stay time; ties go to the smaller key.
pub fn estimate_home_key<K: Ord + Copy>(
    stays: impl IntoIterator<Item = (K, i64, i64)>,
    utc_offset_s: i64,
) -> Option<K> {
    let mut night: BTreeMap<K, i64> = BTreeMap::new();
    let mut total: BTreeMap<K, i64> = BTreeMap::new();
    for (key, enter, duration) in stays {
        *night.entry(key).or_default() += night_seconds(enter, duration, utc_offset_s);
        *total.entry(key).or_default() += duration.max(0);
    }
    let argmax = |m: &BTreeMap<K, i64>| {
        let mut best: Option<(K, i64)> = None;
        for (&k, &v) in m {
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((k, v));
            }
        }
        best
    };
    match argmax(&night) {
        Some((k, v)) if v > 0 => Some(k),
        _ => argmax(&total).map(|(k, _)| k),
    }
}

pub fn estimate_home(staypoints: &[Staypoint], utc_offset_s: i64) -> Result<PlaceId, TrajectoryError> {
    estimate_home_key(
        staypoints.iter().map(|s| (s.place, s.enter_time, s.duration)),
        utc_offset_s,
    )
    .ok_or(TrajectoryError::NoStaypoints)
}
