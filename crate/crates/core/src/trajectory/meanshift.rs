use crate::geo::LocalProjection;

use super::GpsRecord;

/// Iteration stops once the estimate moves less than this many metres.
pub const MEAN_SHIFT_TOL_M: f64 = 1.0;
pub const MEAN_SHIFT_MAX_ITER: usize = 100;

/// Flat-kernel mean shift from `start` over `samples` (projected metres).
fn shift_to_mode(start: (f64, f64), samples: &[(f64, f64)], bandwidth_m: f64) -> (f64, f64) {
    let bw2 = bandwidth_m * bandwidth_m;
    let mut current = start;
    for _ in 0..MEAN_SHIFT_MAX_ITER {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for &(x, y) in samples {
            let (dx, dy) = (x - current.0, y - current.1);
            if dx * dx + dy * dy <= bw2 {
                sx += x;
                sy += y;
                n += 1;
            }
        }
        if n == 0 {
            break;
        }
        let next = (sx / n as f64, sy / n as f64);
        let moved = (next.0 - current.0).hypot(next.1 - current.1);
        current = next;
        if moved < MEAN_SHIFT_TOL_M {
            break;
        }
    }
    current
}

/// Replaces every point by the mode it converges to under flat-kernel mean
/// shift over the whole point set.
pub fn mean_shift_denoise(points: &[(f64, f64)], bandwidth_m: f64) -> Vec<(f64, f64)> {
    assert!(bandwidth_m > 0.0, "bandwidth must be positive");
    let Some(&(lon0, lat0)) = points.first() else {
        return Vec::new();
    };
    let proj = LocalProjection::new(lon0, lat0, lat0);
    let xy: Vec<(f64, f64)> = points.iter().map(|&(lon, lat)| proj.project(lon, lat)).collect();
    xy.iter()
        .map(|&p| {
            let (x, y) = shift_to_mode(p, &xy, bandwidth_m);
            proj.unproject(x, y)
        })
        .collect()
}

/// Per-user denoising: each record is shifted to the mode of the most recent
/// `window` records (itself included).
pub fn denoise_track(records: &[GpsRecord], bandwidth_m: f64, window: usize) -> Vec<GpsRecord> {
    assert!(bandwidth_m > 0.0, "bandwidth must be positive");
    let window = window.max(1);
    let Some(first) = records.first() else {
        return Vec::new();
    };
    let proj = LocalProjection::new(first.longitude, first.latitude, first.latitude);
    let xy: Vec<(f64, f64)> = records
        .iter()
        .map(|r| proj.project(r.longitude, r.latitude))
        .collect();
    records
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let lo = (i + 1).saturating_sub(window);
            let (x, y) = shift_to_mode(xy[i], &xy[lo..=i], bandwidth_m);
            let (longitude, latitude) = proj.unproject(x, y);
            GpsRecord {
                longitude,
                latitude,
                ..rec.clone()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    const LON0: f64 = 130.7;
    const LAT0: f64 = 32.8;

    fn cluster(rng: &mut ChaCha8Rng, cx: f64, cy: f64, sigma: f64, n: usize) -> Vec<(f64, f64)> {
        let normal = Normal::new(0.0, sigma).unwrap();
        (0..n)
            .map(|_| (cx + normal.sample(rng), cy + normal.sample(rng)))
            .collect()
    }

    fn proj() -> LocalProjection {
        LocalProjection::new(LON0, LAT0, LAT0)
    }

    fn to_lonlat(xy: &[(f64, f64)]) -> Vec<(f64, f64)> {
        xy.iter().map(|&(x, y)| proj().unproject(x, y)).collect()
    }

    fn to_xy(ll: &[(f64, f64)]) -> Vec<(f64, f64)> {
        ll.iter().map(|&(lon, lat)| proj().project(lon, lat)).collect()
    }

    fn centroid(xy: &[(f64, f64)]) -> (f64, f64) {
        let n = xy.len() as f64;
        (
            xy.iter().map(|p| p.0).sum::<f64>() / n,
            xy.iter().map(|p| p.1).sum::<f64>() / n,
        )
    }

    #[test]
    fn identical_points_are_fixed() {
        let pts = vec![(LON0, LAT0); 5];
        let out = mean_shift_denoise(&pts, 200.0);
        for p in out {
            assert!((p.0 - LON0).abs() < 1e-12 && (p.1 - LAT0).abs() < 1e-12);
        }
    }

    #[test]
    fn tight_cluster_converges_to_centroid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 30;
        let xy = cluster(&mut rng, 0.0, 0.0, 20.0, n);
        let c = centroid(&xy);
        let out = to_xy(&mean_shift_denoise(&to_lonlat(&xy), 200.0));
        let tol = 3.0 * 20.0 / (n as f64).sqrt();
        for p in out {
            assert!((p.0 - c.0).hypot(p.1 - c.1) < tol);
        }
    }

    #[test]
    fn two_clusters_two_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = cluster(&mut rng, 0.0, 0.0, 20.0, 20);
        let b = cluster(&mut rng, 5000.0, 0.0, 20.0, 20);
        let (ca, cb) = (centroid(&a), centroid(&b));
        let mut all = a.clone();
        all.extend(&b);
        let out = to_xy(&mean_shift_denoise(&to_lonlat(&all), 200.0));
        for (i, p) in out.iter().enumerate() {
            let c = if i < a.len() { ca } else { cb };
            assert!((p.0 - c.0).hypot(p.1 - c.1) < 15.0, "point {i} at {p:?}");
        }
    }

    #[test]
    fn track_window_limits_history() {
        // A user moves 3 km; with a short window later points forget the
        // first place entirely.
        let recs: Vec<GpsRecord> = (0..10)
            .map(|i| {
                let x = if i < 5 { 0.0 } else { 3000.0 };
                let (longitude, latitude) = proj().unproject(x, (i % 2) as f64 * 10.0);
                GpsRecord {
                    user_id: "u".into(),
                    timestamp: i * 600,
                    longitude,
                    latitude,
                }
            })
            .collect();
        let out = denoise_track(&recs, 200.0, 3);
        let xy: Vec<(f64, f64)> = out.iter().map(|r| proj().project(r.longitude, r.latitude)).collect();
        assert!(xy[..5].iter().all(|p| p.0.abs() < 1e-6));
        assert!(xy[5..].iter().all(|p| (p.0 - 3000.0).abs() < 1e-6));
        assert!(xy[9].1 > 0.0 && xy[9].1 < 10.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn second_pass_is_a_fixed_point(seed in 0u64..10_000, k in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut xy = Vec::new();
            for c in 0..k {
                xy.extend(cluster(&mut rng, c as f64 * 2000.0, 0.0, 15.0, 12));
            }
            let once = mean_shift_denoise(&to_lonlat(&xy), 200.0);
            let twice = mean_shift_denoise(&once, 200.0);
            // Compare in the projection used by the function (first point).
            let p = LocalProjection::new(once[0].0, once[0].1, once[0].1);
            for (a, b) in once.iter().zip(&twice) {
                let d = p.distance_m(*a, *b);
                prop_assert!(d <= MEAN_SHIFT_TOL_M, "moved {d} m");
            }
        }
    }
}
