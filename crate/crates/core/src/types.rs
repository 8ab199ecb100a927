use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Grid cell index encoded as `row * n_cols + col`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlaceId(pub u32);

impl fmt::Display for PlaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for PlaceId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(PlaceId)
    }
}

/// Identifier of a city. Must be non-empty and free of whitespace, `=` and
/// `:` so it can be embedded in file headers and vocabulary keys.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CityId(String);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid city id {0:?}: must be non-empty without whitespace, '=' or ':'")]
pub struct InvalidCityId(pub String);

impl CityId {
    pub fn new(id: impl Into<String>) -> Result<Self, InvalidCityId> {
        let id = id.into();
        let bad = id.is_empty()
            || id
                .chars()
                .any(|c| c.is_whitespace() || c == '=' || c == ':');
        if bad {
            Err(InvalidCityId(id))
        } else {
            Ok(CityId(id))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Tag for a matrix translated from `self` into `target`'s space.
    pub fn translated_into(&self, target: &CityId) -> CityId {
        CityId(format!("{}->{}", self.0, target.0))
    }
}

impl TryFrom<String> for CityId {
    type Error = InvalidCityId;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        CityId::new(value)
    }
}

impl From<CityId> for String {
    fn from(value: CityId) -> Self {
        value.0
    }
}

impl FromStr for CityId {
    type Err = InvalidCityId;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CityId::new(s)
    }
}

impl fmt::Display for CityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}
