use serde::{Deserialize, Serialize};

use crate::geo::{GridSpec, LocalProjection};
use crate::types::PlaceId;

use super::GpsRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StayParams {
    pub spatial_m: f64,
    pub temporal_s: i64,
}

impl Default for StayParams {
    fn default() -> Self {
        StayParams {
            spatial_m: 1000.0,
            temporal_s: 1800,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Staypoint {
    pub place: PlaceId,
    /// UTC epoch seconds of the first record of the stay.
    pub enter_time: i64,
    pub duration: i64,
}

/// A detected stay before it is snapped to the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StayEvent {
    pub lon: f64,
    pub lat: f64,
    pub enter_time: i64,
    pub duration: i64,
}

/// Index ranges `(first, last)` (inclusive) of stays in a time-ordered track.
///
/// A run starts at an anchor record and extends over the following records
/// for as long as each stays within `spatial_m` of the anchor. Runs spanning at
/// least `temporal_s` are stays and scanning resumes after them; otherwise the
/// anchor advances by one record.
pub fn detect_stay_runs(
    records: &[GpsRecord],
    params: &StayParams,
    proj: &LocalProjection,
) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let n = records.len();
    let mut i = 0;
    while i < n {
        let anchor = records[i].lon_lat();
        let mut j = i;
        while j + 1 < n && proj.distance_m(anchor, records[j + 1].lon_lat()) <= params.spatial_m {
            j += 1;
        }
        if records[j].timestamp - records[i].timestamp >= params.temporal_s {
            runs.push((i, j));
            i = j + 1;
        } else {
            i += 1;
        }
    }
    runs
}

pub fn extract_stay_events(
    records: &[GpsRecord],
    params: &StayParams,
    proj: &LocalProjection,
) -> Vec<StayEvent> {
    detect_stay_runs(records, params, proj)
        .into_iter()
        .map(|(a, b)| {
            let run = &records[a..=b];
            let n = run.len() as f64;
            StayEvent {
                lon: run.iter().map(|r| r.longitude).sum::<f64>() / n,
                lat: run.iter().map(|r| r.latitude).sum::<f64>() / n,
                enter_time: run[0].timestamp,
                duration: run[run.len() - 1].timestamp - run[0].timestamp,
            }
        })
        .collect()
}

/// Staypoints of one user's (denoised, time-ordered) track. Stays whose mean
/// location falls outside the grid are dropped.
pub fn extract_staypoints(records: &[GpsRecord], params: &StayParams, grid: &GridSpec) -> Vec<Staypoint> {
    let proj = grid.projection();
    extract_stay_events(records, params, &proj)
        .into_iter()
        .filter_map(|ev| {
            let place = grid.assign_cell(ev.lon, ev.lat).ok()?;
            Some(Staypoint {
                place,
                enter_time: ev.enter_time,
                duration: ev.duration,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> GridSpec {
        GridSpec::new(130.5, 32.6, 1000.0, 60, 60)
    }

    fn rec(t: i64, x: f64, y: f64) -> GpsRecord {
        let (longitude, latitude) = grid().projection().unproject(x, y);
        GpsRecord {
            user_id: "u".into(),
            timestamp: t,
            longitude,
            latitude,
        }
    }

    /// Exhaustive oracle: from each scan position, test every contiguous
    /// window for the "all within spatial_m of the first record" property,
    /// keep the longest, and emit it if its span qualifies.
    fn oracle(records: &[GpsRecord], params: &StayParams, proj: &LocalProjection) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < records.len() {
            let mut best = i;
            for k in i..records.len() {
                let ok = records[i..=k]
                    .iter()
                    .all(|r| proj.distance_m(records[i].lon_lat(), r.lon_lat()) <= params.spatial_m);
                if ok {
                    best = k;
                }
            }
            // Longest window must also be contiguous from i: every shorter
            // prefix is then valid too, so `best` is the maximal run.
            if records[best].timestamp - records[i].timestamp >= params.temporal_s {
                out.push((i, best));
                i = best + 1;
            } else {
                i += 1;
            }
        }
        out
    }

    #[test]
    fn compact_run_is_one_staypoint() {
        let recs = vec![
            rec(1000, 30_000.0, 30_000.0),
            rec(1900, 30_150.0, 30_050.0),
            rec(2800, 29_900.0, 29_950.0),
            rec(3700, 30_100.0, 30_180.0),
        ];
        let sp = extract_staypoints(&recs, &StayParams::default(), &grid());
        assert_eq!(sp.len(), 1);
        assert_eq!(sp[0].duration, 2700);
        assert_eq!(sp[0].enter_time, 1000);
        let proj = grid().projection();
        assert_eq!(oracle(&recs, &StayParams::default(), &proj), vec![(0, 3)]);
    }

    #[test]
    fn far_apart_records_never_stay() {
        let recs: Vec<_> = (0..6).map(|i| rec(i * 600, 5000.0 * i as f64, 100.0)).collect();
        assert!(extract_staypoints(&recs, &StayParams::default(), &grid()).is_empty());
    }

    #[test]
    fn single_record_is_not_a_stay() {
        let recs = vec![rec(0, 10.0, 10.0)];
        assert!(extract_staypoints(&recs, &StayParams::default(), &grid()).is_empty());
    }

    #[test]
    fn stay_location_is_run_mean() {
        let recs = vec![rec(0, 2100.0, 2100.0), rec(1800, 2900.0, 2100.0), rec(9000, 40_000.0, 0.0)];
        let sp = extract_staypoints(&recs, &StayParams::default(), &grid());
        assert_eq!(sp.len(), 1);
        assert_eq!(grid().col_row(sp[0].place).unwrap(), (2, 2));
    }

    #[test]
    fn out_of_grid_stays_are_dropped() {
        let recs = vec![rec(0, -3000.0, 500.0), rec(2000, -3000.0, 500.0)];
        assert!(extract_staypoints(&recs, &StayParams::default(), &grid()).is_empty());
    }

    fn random_trace(seed: u64) -> Vec<GpsRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(0..=50);
        let mut t = 0;
        let (mut x, mut y) = (30_000.0, 30_000.0);
        (0..n)
            .map(|_| {
                t += rng.random_range(0..1200);
                if rng.random_bool(0.3) {
                    x += rng.random_range(-1500.0..1500.0);
                    y += rng.random_range(-1500.0..1500.0);
                } else {
                    x += rng.random_range(-300.0..300.0);
                    y += rng.random_range(-300.0..300.0);
                }
                rec(t, x, y)
            })
            .collect()
    }

    #[test]
    fn matches_exhaustive_oracle_on_random_traces() {
        let params = StayParams::default();
        let proj = grid().projection();
        for seed in 0..1000 {
            let trace = random_trace(seed);
            assert_eq!(
                detect_stay_runs(&trace, &params, &proj),
                oracle(&trace, &params, &proj),
                "seed {seed}"
            );
        }
    }

    proptest! {
        #[test]
        fn stays_are_long_and_ordered(seed in any::<u64>()) {
            let params = StayParams::default();
            let sp = extract_staypoints(&random_trace(seed), &params, &grid());
            for s in &sp {
                prop_assert!(s.duration >= params.temporal_s);
            }
            for w in sp.windows(2) {
                prop_assert!(w[1].enter_time > w[0].enter_time);
                prop_assert!(w[1].enter_time >= w[0].enter_time + w[0].duration);
            }
        }
    }
}
