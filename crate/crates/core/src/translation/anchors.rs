use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::trajectory::MobilityCorpus;
use crate::types::PlaceId;

use super::TranslationError;

pub const DEFAULT_ANCHORS: usize = 500;

/// Pairs of places expected to sit at the same spot of a shared space,
/// `(place in φ, place in ψ)`, in rank order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorDictionary {
    pub pairs: Vec<(PlaceId, PlaceId)>,
}

impl AnchorDictionary {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Writes `rank<TAB>place_φ<TAB>place_ψ` lines, ranks starting at 1.
    pub fn write_tsv(&self, path: &Path) -> Result<(), TranslationError> {
        let mut out = BufWriter::new(File::create(path)?);
        for (rank, (a, b)) in self.pairs.iter().enumerate() {
            writeln!(out, "{}\t{a}\t{b}", rank + 1)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_tsv(path: &Path) -> Result<Self, TranslationError> {
        let mut pairs = Vec::new();
        for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let bad = || TranslationError::Format {
                line: i + 1,
                message: format!("expected rank<TAB>place<TAB>place, got {line:?}"),
            };
            let fields: Vec<&str> = line.split('\t').collect();
            let [rank, a, b] = fields[..] else {
                return Err(bad());
            };
            let rank: usize = rank.parse().map_err(|_| bad())?;
            if rank != pairs.len() + 1 {
                return Err(bad());
            }
            pairs.push((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?));
        }
        Ok(AnchorDictionary { pairs })
    }
}

fn check_size(corpus: &MobilityCorpus, n: usize) -> Result<(), TranslationError> {
    if n > corpus.n_places() {
        return Err(TranslationError::TooFewPlaces {
            requested: n,
            city: corpus.city_id.clone(),
            available: corpus.n_places(),
        });
    }
    Ok(())
}

/// Pairs the i-th most visited place of φ with the i-th most visited place
/// of ψ for the top `n` ranks. Ranking is by staypoint count, ties by
/// smaller PlaceId.
pub fn build_anchor_dictionary(
    phi: &MobilityCorpus,
    psi: &MobilityCorpus,
    n: usize,
) -> Result<AnchorDictionary, TranslationError> {
    check_size(phi, n)?;
    check_size(psi, n)?;
    let pairs = phi
        .ranked_places()
        .into_iter()
        .zip(psi.ranked_places())
        .take(n)
        .map(|((a, _), (b, _))| (a, b))
        .collect();
    Ok(AnchorDictionary { pairs })
}

/// Control dictionary: `n` places drawn uniformly without replacement from
/// each city's visited places, paired in draw order.
pub fn random_anchor_dictionary(
    phi: &MobilityCorpus,
    psi: &MobilityCorpus,
    n: usize,
    seed: u64,
) -> Result<AnchorDictionary, TranslationError> {
    check_size(phi, n)?;
    check_size(psi, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi_places: Vec<PlaceId> = phi.place_visit_counts.keys().copied().collect();
    let psi_places: Vec<PlaceId> = psi.place_visit_counts.keys().copied().collect();
    let a = sample(&mut rng, phi_places.len(), n);
    let b = sample(&mut rng, psi_places.len(), n);
    let pairs = a.iter().zip(b.iter()).map(|(i, j)| (phi_places[i], psi_places[j])).collect();
    Ok(AnchorDictionary { pairs })
}
