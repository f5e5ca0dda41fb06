//! Detailing rules: which wall type a wall gets from the classes of the two
//! spaces it separates. The same table produces the golden labels and
//! drives the deterministic rule backend.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{canonical_type_name, ClassificationTable};
use crate::model::{wall_context, BuildingModel, ModelError, SpaceClass, SpacePair};
use crate::xml::{parse_xml, render_document, XmlError};

/// The six wall types of the detailing task.
pub mod wall_types {
    pub const GENERIC: &str = "Generic - 150mm";
    pub const TILE: &str = "Tile finishes 150mm";
    pub const EIFS_TILE: &str = "EIFS on Mtl. Stud with tile finish 300mm";
    pub const GYPSUM_TILE: &str = "Gypsum and tile finish 150mm";
    pub const EIFS_GYPSUM: &str = "EIFS on Mtl. Stud with gypsum finish 300mm";
    pub const GYPSUM: &str = "Gypsum finishes 150mm";
}

pub const DEFAULT_RULES_JSON: &str = include_str!("../data/rules.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TypeDecision {
    Assign(String),
    NoChange,
}

impl TypeDecision {
    /// Resulting type for a wall currently typed `current`.
    pub fn resolve<'a>(&'a self, current: &'a str) -> &'a str {
        match self {
            TypeDecision::Assign(t) => t,
            TypeDecision::NoChange => current,
        }
    }
}

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("rule table: {0}")]
    Config(String),
    #[error("wall {wall_id:?}: unclassified space {name:?}")]
    Unclassified { wall_id: String, name: String },
    #[error(transparent)]
    Xml(#[from] XmlError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Config file entry: `{"classes": [a, b], "type": name | null}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RuleEntry {
    classes: [SpaceClass; 2],
    #[serde(rename = "type")]
    type_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleTable {
    rules: BTreeMap<SpacePair, TypeDecision>,
}

impl Default for RuleTable {
    fn default() -> Self {
        RuleTable::from_json(DEFAULT_RULES_JSON).expect("bundled rule table is valid")
    }
}

impl RuleTable {
    pub fn from_json(text: &str) -> Result<Self, RuleError> {
        let entries: Vec<RuleEntry> =
            serde_json::from_str(text).map_err(|e| RuleError::Config(e.to_string()))?;
        let mut rules = BTreeMap::new();
        for entry in entries {
            let pair = SpacePair::new(entry.classes[0], entry.classes[1]);
            let decision = match entry.type_name {
                Some(name) => TypeDecision::Assign(canonical_type_name(&name)),
                None => TypeDecision::NoChange,
            };
            if let Some(previous) = rules.insert(pair, decision.clone()) {
                if previous != decision {
                    return Err(RuleError::Config(format!(
                        "conflicting entries for {pair}: {previous:?} vs {decision:?}"
                    )));
                }
            }
        }
        Ok(RuleTable { rules })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RuleError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| RuleError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let entries: Vec<RuleEntry> = self
            .rules
            .iter()
            .map(|(pair, d)| RuleEntry {
                classes: [pair.first(), pair.second()],
                type_name: match d {
                    TypeDecision::Assign(t) => Some(t.clone()),
                    TypeDecision::NoChange => None,
                },
            })
            .collect();
        serde_json::to_string_pretty(&entries).expect("rules serialize")
    }

    /// Total: pairs without an entry yield `NoChange`.
    pub fn golden_type(&self, a: SpaceClass, b: SpaceClass) -> TypeDecision {
        self.rules
            .get(&SpacePair::new(a, b))
            .cloned()
            .unwrap_or(TypeDecision::NoChange)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&SpacePair, &TypeDecision)> {
        self.rules.iter()
    }

    /// Type names the table can assign.
    pub fn assigned_types(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self
            .rules
            .values()
            .filter_map(|d| match d {
                TypeDecision::Assign(t) => Some(t.as_str()),
                TypeDecision::NoChange => None,
            })
            .collect();
        names.sort();
        names.dedup();
        names
    }
}

/// Golden type for every wall. `NoChange` keeps the wall's current type.
pub fn derive_golden_labels(
    model: &BuildingModel,
    classes: &ClassificationTable,
    rules: &RuleTable,
) -> Result<BTreeMap<String, String>, RuleError> {
    let mut labels = BTreeMap::new();
    for wall in &model.walls {
        let pair = wall_context(model, &wall.id, classes).map_err(|e| match e {
            ModelError::Unclassified(u) => RuleError::Unclassified {
                wall_id: wall.id.clone(),
                name: u.name,
            },
            other => RuleError::Model(other),
        })?;
        let decision = rules.golden_type(pair.first(), pair.second());
        labels.insert(
            wall.id.clone(),
            decision.resolve(&wall.type_name).to_string(),
        );
    }
    Ok(labels)
}

/// Rewrites every wall's type in an exchange document according to the
/// rules, classifying the side names embedded in the document.
pub fn rule_rewrite(
    xml_text: &str,
    classes: &ClassificationTable,
    rules: &RuleTable,
) -> Result<String, RuleError> {
    let mut doc = parse_xml(xml_text)?;
    for wall in &mut doc.walls {
        let classify = |name: &str| {
            classes
                .classify_name(name)
                .map_err(|u| RuleError::Unclassified {
                    wall_id: wall.id.clone(),
                    name: u.name,
                })
        };
        let a = classify(&wall.side_a)?;
        let b = classify(&wall.side_b)?;
        if let TypeDecision::Assign(t) = rules.golden_type(a, b) {
            wall.type_name = t;
        }
    }
    Ok(render_document(&doc))
}

#[cfg(test)]
mod tests {
    use super::wall_types::*;
    use super::*;
    use crate::fixture::villa;
    use crate::model::{Point, Room, SpaceRef, Wall, WallTypeDef};
    use crate::xml::export_all;
    use SpaceClass::*;

    #[test]
    fn five_cases_and_fallback() {
        let r = RuleTable::default();
        let assign = |t: &str| TypeDecision::Assign(t.to_string());
        assert_eq!(r.golden_type(Outdoor, Indoor), assign(EIFS_GYPSUM));
        assert_eq!(r.golden_type(Indoor, Indoor), assign(GYPSUM));
        assert_eq!(r.golden_type(Wet, Outdoor), assign(EIFS_TILE));
        assert_eq!(r.golden_type(Wet, Indoor), assign(GYPSUM_TILE));
        assert_eq!(r.golden_type(Wet, Wet), assign(TILE));
        assert_eq!(r.golden_type(Outdoor, Outdoor), TypeDecision::NoChange);
    }

    #[test]
    fn config_round_trip_and_conflicts() {
        let r = RuleTable::default();
        assert_eq!(RuleTable::from_json(&r.to_json()).unwrap(), r);
        let conflicting = r#"[{"classes":["wet","indoor"],"type":"A"},{"classes":["indoor","wet"],"type":"B"}]"#;
        assert!(matches!(
            RuleTable::from_json(conflicting),
            Err(RuleError::Config(_))
        ));
        let empty = RuleTable::from_json("[]").unwrap();
        assert_eq!(empty.golden_type(Wet, Wet), TypeDecision::NoChange);
    }

    #[test]
    fn fixture_golden_labels() {
        let labels =
            derive_golden_labels(&villa(), &ClassificationTable::default(), &RuleTable::default())
                .unwrap();
        assert_eq!(labels.len(), 48);
        assert!(labels.values().all(|t| t != GENERIC));
        assert_eq!(labels.values().filter(|t| *t == TILE).count(), 1);
    }

    fn single_wall(a: &str, b: &str) -> BuildingModel {
        let mut m = BuildingModel::empty("one");
        m.levels.push("L1".into());
        m.library.push(WallTypeDef {
            name: GENERIC.into(),
            thickness_mm: 150,
        });
        for (id, name, x) in [("R1", a, 0), ("R2", b, 10)] {
            m.rooms.push(Room {
                id: id.into(),
                name: name.into(),
                level: "L1".into(),
                polygon: vec![Point(x, 0), Point(x + 10, 0), Point(x + 10, 10), Point(x, 10)],
            });
        }
        m.walls.push(Wall {
            id: "W001".into(),
            level: "L1".into(),
            start: Point(10, 0),
            end: Point(10, 10),
            type_name: GENERIC.into(),
            side_a: SpaceRef::Room("R1".into()),
            side_b: SpaceRef::Room("R2".into()),
        });
        m
    }

    #[test]
    fn kitchen_bathroom_is_tile() {
        let m = single_wall("Kitchen", "Bathroom");
        let labels =
            derive_golden_labels(&m, &ClassificationTable::default(), &RuleTable::default())
                .unwrap();
        assert_eq!(labels["W001"], TILE);
    }

    #[test]
    fn unclassifiable_room_is_an_error() {
        let m = single_wall("Kitchen", "Garage");
        let err = derive_golden_labels(&m, &ClassificationTable::default(), &RuleTable::default())
            .unwrap_err();
        assert!(
            matches!(err, RuleError::Unclassified { ref wall_id, ref name } if wall_id == "W001" && name == "Garage")
        );
        let xml = export_all(&m).unwrap().text;
        let err = rule_rewrite(&xml, &ClassificationTable::default(), &RuleTable::default())
            .unwrap_err();
        assert!(err.to_string().contains("Garage"));
    }

    #[test]
    fn rewrite_keeps_structure() {
        let m = villa();
        let x = export_all(&m).unwrap().text;
        let classes = ClassificationTable::default();
        let rules = RuleTable::default();
        let once = rule_rewrite(&x, &classes, &rules).unwrap();
        let twice = rule_rewrite(&once, &classes, &rules).unwrap();
        assert_eq!(once, twice);

        let labels = derive_golden_labels(&m, &classes, &rules).unwrap();
        let mut expected = x.clone();
        for (id, t) in &labels {
            expected = expected.replace(
                &format!("<Wall id=\"{id}\" type=\"{GENERIC}\""),
                &format!("<Wall id=\"{id}\" type=\"{t}\""),
            );
        }
        assert_eq!(once, expected);

        let empty = export_all(&BuildingModel::empty("e")).unwrap().text;
        assert_eq!(rule_rewrite(&empty, &classes, &rules).unwrap(), empty);
    }
}
