use std::collections::HashMap;

use placeshift::embedding::{
    export_embeddings, load_checkpoint, next_place_distribution, save_checkpoint, train_joint_moblstm, train_moblstm,
    EmbeddingError, EmbeddingMatrix, ModelConfig, Vocabulary,
};
use placeshift::trajectory::{MobilityCorpus, Staypoint, UserSequence};
use placeshift::{CityId, GridSpec, PlaceId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_config() -> ModelConfig {
    ModelConfig {
        place_dim: 16,
        time_dim: 4,
        duration_dim: 2,
        lstm_size: 32,
        readout_dim: 16,
        batch_size: 16,
        epochs: 8,
        ..ModelConfig::default()
    }
}

fn grid() -> GridSpec {
    GridSpec::new(135.0, 34.0, 1000.0, 100, 100)
}

fn city(name: &str) -> CityId {
    CityId::new(name).unwrap()
}

fn sequence(user: String, places: &[u32]) -> UserSequence {
    UserSequence {
        user_id: user,
        staypoints: places
            .iter()
            .enumerate()
            .map(|(i, &p)| Staypoint {
                place: PlaceId(p),
                enter_time: 1_454_252_400 + i as i64 * 5400,
                duration: 3600,
            })
            .collect(),
    }
}

/// Random walks over `n_places` in which place 0 is always followed by 1.
fn bigram_corpus(name: &str, users: usize, len: usize, n_places: u32, seed: u64) -> MobilityCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sequences = (0..users)
        .map(|u| {
            let mut places = vec![rng.random_range(0..n_places)];
            while places.len() < len {
                let next = if *places.last().unwrap() == 0 {
                    1
                } else {
                    rng.random_range(0..n_places)
                };
                places.push(next);
            }
            sequence(format!("u{u}"), &places)
        })
        .collect();
    MobilityCorpus::new(city(name), grid(), sequences)
}

/// Empirical next-place frequencies after `from`.
fn bigram_table(corpus: &MobilityCorpus, from: PlaceId) -> HashMap<PlaceId, usize> {
    let mut table = HashMap::new();
    for seq in &corpus.sequences {
        for w in seq.staypoints.windows(2) {
            if w[0].place == from {
                *table.entry(w[1].place).or_insert(0) += 1;
            }
        }
    }
    table
}

#[test]
fn learns_a_deterministic_bigram() {
    let corpus = bigram_corpus("bigram", 200, 40, 12, 1);
    let table = bigram_table(&corpus, PlaceId(0));
    let oracle = *table.iter().max_by_key(|(_, &c)| c).unwrap().0;
    assert_eq!(oracle, PlaceId(1));
    assert_eq!(table.len(), 1);

    let cfg = ModelConfig {
        epochs: 15,
        ..small_config()
    };
    let model = train_moblstm(&corpus, &cfg).unwrap();
    let prefix = &corpus.sequences[0].staypoints[..1];
    let prefix = [Staypoint {
        place: PlaceId(0),
        ..prefix[0]
    }];
    let probs = next_place_distribution(&model, &corpus.city_id, &prefix).unwrap();
    let row_b = model.vocab.index_of(&corpus.city_id, oracle);
    let argmax = (0..probs.len()).max_by(|&a, &b| probs[a].total_cmp(&probs[b])).unwrap();
    assert_eq!(argmax, row_b);
    assert!(probs[row_b] > 0.9, "P(B | A) = {}", probs[row_b]);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
}

#[test]
fn training_loss_falls_over_five_epochs() {
    let corpus = bigram_corpus("walks", 1000, 12, 40, 2);
    let cfg = ModelConfig {
        epochs: 6,
        ..small_config()
    };
    let model = train_moblstm(&corpus, &cfg).unwrap();
    let h = &model.train_loss_history;
    assert_eq!(h.len(), 6);
    assert!(h[5] < h[0], "losses {h:?}");
}

#[test]
fn same_seed_gives_identical_histories() {
    let corpus = bigram_corpus("det", 60, 20, 10, 3);
    let cfg = ModelConfig {
        epochs: 3,
        ..small_config()
    };
    let a = train_moblstm(&corpus, &cfg).unwrap();
    let b = train_moblstm(&corpus, &cfg).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.validation_loss_history), bits(&b.validation_loss_history));
    assert_eq!(a.params, b.params);
}

#[test]
fn best_epoch_is_validation_argmin() {
    let corpus = bigram_corpus("best", 80, 20, 10, 4);
    let model = train_moblstm(&corpus, &small_config()).unwrap();
    let h = &model.validation_loss_history;
    let argmin = (0..h.len()).min_by(|&a, &b| h[a].total_cmp(&h[b])).unwrap();
    assert_eq!(model.best_epoch, argmin);
}

#[test]
fn too_small_corpus_is_rejected() {
    let corpus = MobilityCorpus::new(city("tiny"), grid(), vec![sequence("only".into(), &[1, 2, 3])]);
    assert!(matches!(
        train_moblstm(&corpus, &small_config()),
        Err(EmbeddingError::CorpusTooSmall(_))
    ));
}

#[test]
fn export_excludes_unknown_row_and_round_trips() {
    let corpus = bigram_corpus("export", 60, 20, 10, 5);
    let cfg = ModelConfig {
        epochs: 2,
        ..small_config()
    };
    let model = train_moblstm(&corpus, &cfg).unwrap();
    let m = export_embeddings(&model, &corpus.city_id).unwrap();
    assert_eq!(m.values().dim(), (cfg.place_dim, corpus.n_places()));
    let expected: Vec<PlaceId> = corpus.place_visit_counts.keys().copied().collect();
    assert_eq!(m.place_ids(), &expected[..]);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("emb.tsv");
    m.write_tsv(&path).unwrap();
    let back = EmbeddingMatrix::read_tsv(&path).unwrap();
    assert_eq!(back, m);

    let ckpt = dir.path().join("model.ckpt");
    save_checkpoint(&model, &ckpt).unwrap();
    assert_eq!(load_checkpoint(&ckpt).unwrap(), model);
}

#[test]
fn joint_vocabulary_stacks_both_cities() {
    // Every place visited at least once, so the vocabularies have exactly
    // these sizes.
    let covering = |name: &str, n: u32| {
        let places: Vec<u32> = (0..n).collect();
        let sequences = places
            .chunks(20)
            .enumerate()
            .map(|(i, c)| sequence(format!("u{i}"), c))
            .collect();
        MobilityCorpus::new(city(name), grid(), sequences)
    };
    let phi = covering("tokyo", 2565);
    let psi = covering("osaka", 2163);
    let vocab = Vocabulary::from_corpora(&[&phi, &psi]).unwrap();
    let place_rows: usize = vocab.slices().iter().map(|s| s.places.len()).sum();
    assert_eq!(place_rows, 4728);
    // plus the reserved unknown-place row
    assert_eq!(vocab.len(), 4729);
    assert_eq!(vocab.slices()[1].range().start, 1 + 2565);
}

#[test]
fn joint_training_masks_the_other_city() {
    let phi = bigram_corpus("phi", 60, 20, 10, 6);
    let psi = bigram_corpus("psi", 60, 20, 14, 7);
    let cfg = ModelConfig {
        epochs: 2,
        ..small_config()
    };
    let (model, x_phi, x_psi) = train_joint_moblstm(&phi, &psi, &cfg).unwrap();
    assert!(model.mask_probe.rows_checked > 0);
    assert_eq!(model.mask_probe.max_masked_prob, 0.0);
    assert_eq!(model.mask_probe.max_masked_grad, 0.0);
    assert_eq!(x_phi.n_places(), phi.n_places());
    assert_eq!(x_psi.n_places(), psi.n_places());
    assert_eq!(x_phi.space(), x_psi.space());

    let probs = next_place_distribution(&model, &phi.city_id, &phi.sequences[0].staypoints[..3]).unwrap();
    let psi_rows = model.vocab.slice(&psi.city_id).unwrap().range();
    assert_eq!(probs[psi_rows].iter().fold(0.0f64, |m, &p| m.max(p)), 0.0);
    assert_eq!(probs[0], 0.0);
}

#[test]
fn joint_training_rejects_city_collision() {
    let a = bigram_corpus("same", 20, 10, 5, 8);
    let b = bigram_corpus("same", 20, 10, 5, 9);
    assert!(matches!(
        train_joint_moblstm(&a, &b, &small_config()),
        Err(EmbeddingError::CityCollision(_))
    ));
}

#[test]
fn empty_prefix_is_an_error() {
    let corpus = bigram_corpus("prefix", 60, 20, 10, 10);
    let cfg = ModelConfig {
        epochs: 1,
        ..small_config()
    };
    let model = train_moblstm(&corpus, &cfg).unwrap();
    assert!(matches!(
        next_place_distribution(&model, &corpus.city_id, &[]),
        Err(EmbeddingError::EmptyPrefix)
    ));
}

#[test]
fn twin_corpora_align_in_the_joint_space() {
    use placeshift::evaluation::cos_sim;
    use rand::seq::SliceRandom;

    let phi = bigram_corpus("phi", 150, 30, 25, 11);
    // relabeled copy: place p becomes place p + 1000
    let sequences = phi
        .sequences
        .iter()
        .map(|s| UserSequence {
            user_id: format!("twin-{}", s.user_id),
            staypoints: s
                .staypoints
                .iter()
                .map(|sp| Staypoint {
                    place: PlaceId(sp.place.0 + 1000),
                    ..*sp
                })
                .collect(),
        })
        .collect();
    let psi = MobilityCorpus::new(city("psi"), grid(), sequences);
    let cfg = ModelConfig {
        epochs: 10,
        ..small_config()
    };
    let (_, x_phi, x_psi) = train_joint_moblstm(&phi, &psi, &cfg).unwrap();

    let mean_cos = |pairs: &[(PlaceId, PlaceId)]| {
        pairs
            .iter()
            .map(|&(a, b)| cos_sim(x_phi.column(a).unwrap(), x_psi.column(b).unwrap()).unwrap())
            .sum::<f64>()
            / pairs.len() as f64
    };
    let twins: Vec<(PlaceId, PlaceId)> = x_phi.place_ids().iter().map(|&p| (p, PlaceId(p.0 + 1000))).collect();
    let matched = mean_cos(&twins);

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let shuffled: Vec<f64> = (0..10)
        .map(|_| {
            let mut targets: Vec<PlaceId> = twins.iter().map(|p| p.1).collect();
            targets.shuffle(&mut rng);
            let pairs: Vec<(PlaceId, PlaceId)> = twins.iter().map(|p| p.0).zip(targets).collect();
            mean_cos(&pairs)
        })
        .collect();
    let mean = shuffled.iter().sum::<f64>() / 10.0;
    let std = (shuffled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 9.0).sqrt();
    assert!(matched > mean + 2.0 * std, "matched {matched}, shuffled {mean} ± {std}");
}
