use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Land-cover / estimation domain of a plot or map cell.
///
/// The variant order is the fixed class order used for every tie-break in
/// the crate (spruce < pine < deciduous < non-forest < unstocked).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    Spruce,
    Pine,
    Deciduous,
    NonForest,
    Unstocked,
    /// Union of spruce, pine, deciduous and unstocked. Only ever an
    /// estimation target, never a plot or map label.
    ForestTotal,
}

/// Map code for cells without data.
pub const NODATA_CODE: u8 = 255;

impl Domain {
    /// Labels that may appear on a plot or in a map.
    pub const LABELS: [Domain; 5] = [
        Domain::Spruce,
        Domain::Pine,
        Domain::Deciduous,
        Domain::NonForest,
        Domain::Unstocked,
    ];

    pub const SPECIES: [Domain; 3] = [Domain::Spruce, Domain::Pine, Domain::Deciduous];

    /// Every estimation target.
    pub const TARGETS: [Domain; 6] = [
        Domain::Spruce,
        Domain::Pine,
        Domain::Deciduous,
        Domain::NonForest,
        Domain::Unstocked,
        Domain::ForestTotal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Spruce => "spruce",
            Domain::Pine => "pine",
            Domain::Deciduous => "deciduous",
            Domain::NonForest => "non-forest",
            Domain::Unstocked => "unstocked",
            Domain::ForestTotal => "forest-total",
        }
    }

    pub fn is_forest(self) -> bool {
        matches!(
            self,
            Domain::Spruce | Domain::Pine | Domain::Deciduous | Domain::Unstocked
        )
    }

    /// 1 if a plot labelled `label` belongs to this target domain, else 0.
    #[inline]
    pub fn indicator(self, label: Domain) -> f64 {
        let hit = match self {
            Domain::ForestTotal => label.is_forest(),
            target => label == target,
        };
        if hit {
            1.0
        } else {
            0.0
        }
    }

    /// Class-map cell code. `ForestTotal` has none.
    pub fn code(self) -> Option<u8> {
        match self {
            Domain::NonForest => Some(0),
            Domain::Spruce => Some(1),
            Domain::Pine => Some(2),
            Domain::Deciduous => Some(3),
            Domain::Unstocked => Some(4),
            Domain::ForestTotal => None,
        }
    }

    pub fn from_code(code: u8) -> Option<Domain> {
        Self::LABELS.into_iter().find(|d| d.code() == Some(code))
    }

    /// Map codes that count towards this target.
    pub fn codes(self) -> Vec<u8> {
        Self::LABELS
            .into_iter()
            .filter(|&l| self.indicator(l) > 0.0)
            .filter_map(Domain::code)
            .collect()
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "spruce" => Ok(Domain::Spruce),
            "pine" => Ok(Domain::Pine),
            "deciduous" => Ok(Domain::Deciduous),
            "non-forest" | "nonforest" => Ok(Domain::NonForest),
            "unstocked" => Ok(Domain::Unstocked),
            "forest-total" | "forest" => Ok(Domain::ForestTotal),
            other => Err(Error::input(format!("unknown domain label '{other}'"))),
        }
    }
}
