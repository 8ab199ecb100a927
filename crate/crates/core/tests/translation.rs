use std::f64::consts::PI;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use placeshift::embedding::EmbeddingMatrix;
use placeshift::trajectory::{MobilityCorpus, Staypoint, UserSequence};
use placeshift::translation::{
    adversarial_align, apply_translation, build_anchor_dictionary, orthogonal_procrustes, procrustes_align,
    AdvConfig, AnchorDictionary, Method, TranslationMatrix,
};
use placeshift::{CityId, GridSpec, PlaceId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Random orthogonal matrix by Gram-Schmidt on a Gaussian matrix; the sign
/// of the determinant is random too.
fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> Array2<f64> {
    let mut q = gaussian(rng, d, d);
    for j in 0..d {
        for k in 0..j {
            let proj = q.column(j).dot(&q.column(k));
            let qk = q.column(k).to_owned();
            q.column_mut(j).scaled_add(-proj, &qk);
        }
        let norm = q.column(j).dot(&q.column(j)).sqrt();
        q.column_mut(j).mapv_inplace(|v| v / norm);
    }
    q
}

fn frobenius(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Squared Frobenius misfit computed point by point.
fn misfit(r: ArrayView2<f64>, source: &Array2<f64>, target: &Array2<f64>) -> f64 {
    let mut total = 0.0;
    for (s, t) in source.columns().into_iter().zip(target.columns()) {
        let mapped = r.dot(&s);
        total += mapped.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    total
}

fn embedding(city: &str, values: Array2<f64>) -> EmbeddingMatrix {
    let ids = (0..values.ncols() as u32).map(PlaceId).collect();
    EmbeddingMatrix::new(CityId::new(city).unwrap(), ids, values).unwrap()
}

fn identity_anchors(n: usize) -> AnchorDictionary {
    AnchorDictionary {
        pairs: (0..n as u32).map(|p| (PlaceId(p), PlaceId(p))).collect(),
    }
}

#[test]
fn recovers_a_random_rotation_in_96_dimensions() {
    let mut rng = ChaCha8Rng::seed_from_u64(96);
    let x_phi = gaussian(&mut rng, 96, 500);
    let q = random_orthogonal(&mut rng, 96);
    let x_psi = q.dot(&x_phi);
    let start = Instant::now();
    let t = procrustes_align(&embedding("a", x_phi), &embedding("b", x_psi), &identity_anchors(500)).unwrap();
    let elapsed = start.elapsed();
    assert!(frobenius(&(&t.r - &q)) < 1e-6);
    assert!(t.orthogonality_error() < 1e-8);
    assert!(elapsed.as_secs_f64() < 2.0, "{elapsed:?}");
    assert_eq!(t.method, Method::Procrustes);
}

#[test]
fn recovers_a_random_rotation_in_two_dimensions() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(&mut rng, 2, 30);
        let q = random_orthogonal(&mut rng, 2);
        let fit = orthogonal_procrustes(x.view(), q.dot(&x).view()).unwrap();
        assert!(frobenius(&(&fit.r - &q)) < 1e-6);
    }
}

/// Brute force over rotations and reflections at 1e-5 rad. For a fixed
/// branch the misfit is `‖S‖² + ‖T‖² − 2 Σ t·(R s)`, so each angle costs
/// O(1) after tallying the four products Σ s_a t_b.
fn grid_minimum(source: &Array2<f64>, target: &Array2<f64>) -> f64 {
    let sq = |m: &Array2<f64>| m.iter().map(|v| v * v).sum::<f64>();
    let constant = sq(source) + sq(target);
    let mut sums = [[0.0; 2]; 2];
    for (s, t) in source.columns().into_iter().zip(target.columns()) {
        for a in 0..2 {
            for b in 0..2 {
                sums[a][b] += s[a] * t[b];
            }
        }
    }
    let step = 1e-5;
    let n = (2.0 * PI / step).ceil() as usize;
    let mut best = f64::INFINITY;
    for k in 0..n {
        let theta = k as f64 * step;
        let (c, sn) = (theta.cos(), theta.sin());
        // rotation [[c, -s], [s, c]] and reflection [[c, s], [s, -c]]
        let rot = c * sums[0][0] + sn * sums[0][1] - sn * sums[1][0] + c * sums[1][1];
        let refl = c * sums[0][0] + sn * sums[0][1] + sn * sums[1][0] - c * sums[1][1];
        best = best.min(constant - 2.0 * rot).min(constant - 2.0 * refl);
    }
    best
}

#[test]
fn matches_angle_grid_oracle_on_noisy_anchors() {
    for seed in 0..400 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let source = gaussian(&mut rng, 2, 12);
        let q = random_orthogonal(&mut rng, 2);
        let noise = gaussian(&mut rng, 2, 12) * 0.3;
        let target = q.dot(&source) + noise;
        let fit = orthogonal_procrustes(source.view(), target.view()).unwrap();
        let ours = misfit(fit.r.view(), &source, &target);
        let oracle = grid_minimum(&source, &target);
        assert!((ours - oracle).abs() < 1e-9, "seed {seed}: {ours} vs {oracle}");
    }
}

#[test]
fn beats_random_orthogonal_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for d in 1..=3 {
        for _ in 0..5 {
            let n = rng.random_range(1..8);
            let source = gaussian(&mut rng, d, n);
            let target = gaussian(&mut rng, d, n);
            let fit = orthogonal_procrustes(source.view(), target.view()).unwrap();
            let ours = misfit(fit.r.view(), &source, &target);
            for _ in 0..1000 {
                let other = random_orthogonal(&mut rng, d);
                assert!(ours <= misfit(other.view(), &source, &target) + 1e-12);
            }
            assert!(frobenius(&(fit.r.t().dot(&fit.r) - Array2::<f64>::eye(d))) < 1e-8);
        }
    }
}

#[test]
fn translation_is_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let t = TranslationMatrix {
        source_city: CityId::new("a").unwrap(),
        target_city: CityId::new("b").unwrap(),
        method: Method::Procrustes,
        r: random_orthogonal(&mut rng, 5),
    };
    let x1 = gaussian(&mut rng, 5, 9);
    let x2 = gaussian(&mut rng, 5, 9);
    let (a, b) = (1.7, -0.4);
    let combined = apply_translation(&t, &embedding("a", &x1 * a + &x2 * b)).unwrap();
    let separate = apply_translation(&t, &embedding("a", x1)).unwrap().values() * a
        + apply_translation(&t, &embedding("a", x2)).unwrap().values() * b;
    for (u, v) in combined.values().iter().zip(separate.iter()) {
        assert!((u - v).abs() < 1e-9);
    }
}

fn corpus(name: &str, visits: &[(u32, usize)], reverse_users: bool) -> MobilityCorpus {
    let mut sequences: Vec<UserSequence> = visits
        .iter()
        .map(|&(p, count)| UserSequence {
            user_id: format!("{name}{p}"),
            staypoints: (0..count)
                .map(|k| Staypoint {
                    place: PlaceId(p),
                    enter_time: k as i64 * 7200,
                    duration: 3600,
                })
                .collect(),
        })
        .collect();
    if reverse_users {
        sequences.reverse();
    }
    MobilityCorpus::new(
        CityId::new(name).unwrap(),
        GridSpec::new(0.0, 0.0, 1000.0, 20, 20),
        sequences,
    )
}

#[test]
fn anchor_dictionary_ignores_input_order() {
    let visits: Vec<(u32, usize)> = (0..60).map(|p| (p * 3 % 97, 1 + (p as usize * 7) % 5)).collect();
    let other: Vec<(u32, usize)> = (0..40).map(|p| (p + 100, 1 + (p as usize * 11) % 6)).collect();
    let forward = build_anchor_dictionary(&corpus("a", &visits, false), &corpus("b", &other, false), 30).unwrap();
    let backward = build_anchor_dictionary(&corpus("a", &visits, true), &corpus("b", &other, true), 30).unwrap();
    assert_eq!(forward, backward);
    assert_eq!(forward.len(), 30);
}

/// Three clusters of unequal size and spread, placed so that no rotation or
/// reflection other than the identity maps the mixture onto itself.
fn asymmetric_cloud(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
    let centers = [(2.0, 0.0, 0.25), (-1.0, 1.5, 0.15), (-0.5, -1.2, 0.35)];
    let mut x = Array2::zeros((2, n));
    for k in 0..n {
        let c = match k % 6 {
            0..=2 => centers[0],
            3 | 4 => centers[1],
            _ => centers[2],
        };
        x[[0, k]] = c.0 + c.2 * rng.sample::<f64, _>(StandardNormal);
        x[[1, k]] = c.1 + c.2 * rng.sample::<f64, _>(StandardNormal);
    }
    x
}

#[test]
fn adversarial_map_improves_on_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x_phi = asymmetric_cloud(&mut rng, 200) * 0.5;
    let angle: f64 = 1.1;
    let q = ndarray::array![[angle.cos(), -angle.sin()], [angle.sin(), angle.cos()]];
    let x_psi = q.dot(&x_phi);
    // The soft orthogonalization only holds R near the orthogonal group when
    // each mapping step is small compared with beta, hence the low rates.
    let cfg = AdvConfig {
        disc_hidden: vec![32, 32],
        disc_learning_rate: 0.003,
        map_learning_rate: 0.002,
        steps: 8000,
        seed: 5,
        ..AdvConfig::default()
    };
    let phi = embedding("a", x_phi.clone());
    let psi = embedding("b", x_psi.clone());
    let out = adversarial_align(&phi, &psi, &cfg).unwrap();
    let learned = misfit(out.matrix.r.view(), &x_phi, &x_psi);
    let identity = misfit(Array2::<f64>::eye(2).view(), &x_phi, &x_psi);
    assert!(learned < identity, "learned {learned}, identity {identity}");
    assert!((0.0..=1.0).contains(&out.heldout_accuracy));
    assert!(out.max_orthogonality_error < 0.1);
    assert_eq!(out.disc_accuracy.len(), cfg.steps);
    assert!(out.disc_accuracy.iter().all(|a| (0.0..=1.0).contains(a)));

    let again = adversarial_align(&phi, &psi, &cfg).unwrap();
    assert_eq!(again, out);
}

