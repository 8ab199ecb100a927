use std::collections::HashMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::trajectory::MobilityCorpus;
use crate::types::{CityId, PlaceId};

use super::EmbeddingError;

/// Index 0 of every vocabulary.
pub const UNK: usize = 0;

/// A city's contiguous block of the vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitySlice {
    pub city: CityId,
    pub start: usize,
    /// Places in ascending id order; index `start + k` is `places[k]`.
    pub places: Vec<PlaceId>,
}

impl CitySlice {
    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.places.len()
    }
}

/// Maps (city, place) keys to model rows. Row 0 is reserved for unknown
/// places; cities occupy disjoint consecutive ranges after it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<CitySlice>", into = "Vec<CitySlice>")]
pub struct Vocabulary {
    slices: Vec<CitySlice>,
    lookup: HashMap<(CityId, PlaceId), usize>,
}

impl From<Vec<CitySlice>> for Vocabulary {
    fn from(slices: Vec<CitySlice>) -> Self {
        let mut lookup = HashMap::new();
        for s in &slices {
            for (k, &p) in s.places.iter().enumerate() {
                lookup.insert((s.city.clone(), p), s.start + k);
            }
        }
        Vocabulary { slices, lookup }
    }
}

impl From<Vocabulary> for Vec<CitySlice> {
    fn from(v: Vocabulary) -> Self {
        v.slices
    }
}

impl Vocabulary {
    pub fn from_corpora(corpora: &[&MobilityCorpus]) -> Result<Self, EmbeddingError> {
        let mut slices: Vec<CitySlice> = Vec::new();
        let mut next = UNK + 1;
        for c in corpora {
            if slices.iter().any(|s| s.city == c.city_id) {
                return Err(EmbeddingError::CityCollision(c.city_id.clone()));
            }
            let places: Vec<PlaceId> = c.place_visit_counts.keys().copied().collect();
            let n = places.len();
            slices.push(CitySlice {
                city: c.city_id.clone(),
                start: next,
                places,
            });
            next += n;
        }
        Ok(Vocabulary::from(slices))
    }

    /// Rows including the unknown-place row.
    pub fn len(&self) -> usize {
        self.slices.last().map_or(UNK + 1, |s| s.range().end)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == UNK + 1
    }

    pub fn slices(&self) -> &[CitySlice] {
        &self.slices
    }

    pub fn slice(&self, city: &CityId) -> Option<&CitySlice> {
        self.slices.iter().find(|s| &s.city == city)
    }

    pub fn index_of(&self, city: &CityId, place: PlaceId) -> usize {
        self.lookup.get(&(city.clone(), place)).copied().unwrap_or(UNK)
    }

    /// Output candidates when the target row is `index`: its city's range.
    pub fn candidates_for(&self, index: usize) -> Range<usize> {
        self.slices
            .iter()
            .map(CitySlice::range)
            .find(|r| r.contains(&index))
            .unwrap_or(UNK..UNK + 1)
    }

    pub fn key_of(&self, index: usize) -> Option<(&CityId, PlaceId)> {
        self.slices
            .iter()
            .find(|s| s.range().contains(&index))
            .map(|s| (&s.city, s.places[index - s.start]))
    }
}
