//! Room-name to space-class lookup, plus the name canonicalization rules
//! shared by the project file and the exchange codec.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{SpaceClass, EXTERIOR};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unclassified space {name:?}")]
pub struct UnclassifiedSpace {
    pub name: String,
}

/// Lower-cases and collapses internal whitespace: `"  Master   Bedroom "`
/// becomes `"master bedroom"`.
pub fn normalize_room_name(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Replaces typographic dashes with `-`. Wall-type names are compared and
/// stored in this form.
pub fn canonical_type_name(name: &str) -> String {
    name.chars()
        .map(|c| match c {
            '\u{2010}' | '\u{2011}' | '\u{2012}' | '\u{2013}' | '\u{2014}' | '\u{2015}'
            | '\u{2212}' => '-',
            other => other,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationTable {
    entries: BTreeMap<String, SpaceClass>,
}

impl Default for ClassificationTable {
    /// The ten program names of the reference villa.
    fn default() -> Self {
        use SpaceClass::*;
        ClassificationTable::from_pairs([
            ("Master bedroom", Indoor),
            ("Bedroom", Indoor),
            ("Ramp", Indoor),
            ("Hallway", Indoor),
            ("Private sitting room", Indoor),
            ("Terrace", Outdoor),
            ("Kitchen terrace", Outdoor),
            ("Kitchen", Wet),
            ("Bathroom", Wet),
            ("Toilet", Wet),
        ])
    }
}

impl ClassificationTable {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, SpaceClass)>) -> Self {
        ClassificationTable {
            entries: pairs
                .into_iter()
                .map(|(name, class)| (normalize_room_name(name), class))
                .collect(),
        }
    }

    pub fn insert(&mut self, name: &str, class: SpaceClass) {
        self.entries.insert(normalize_room_name(name), class);
    }

    /// Classifies a space by name. `Exterior` is always outdoor.
    pub fn classify_name(&self, name: &str) -> Result<SpaceClass, UnclassifiedSpace> {
        let key = normalize_room_name(name);
        if key == EXTERIOR.to_lowercase() {
            return Ok(SpaceClass::Outdoor);
        }
        self.entries
            .get(&key)
            .copied()
            .ok_or_else(|| UnclassifiedSpace {
                name: name.to_string(),
            })
    }

    pub fn names(&self) -> impl Iterator<Item = (&str, SpaceClass)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
