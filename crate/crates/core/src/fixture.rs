//! Bundled two-level villa used by the tests, the CLI demo and the
//! evaluation harness. Every wall starts as `Generic - 150mm`.

use crate::model::BuildingModel;
use crate::project::parse_project;

pub const VILLA_PROJECT: &str = include_str!("../fixtures/villa.json");

pub fn villa() -> BuildingModel {
    parse_project(VILLA_PROJECT).expect("bundled fixture is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::project::project_to_string;
    use std::collections::BTreeSet;

    #[test]
    fn shape() {
        let m = villa();
        assert_eq!(m.walls.len(), 48);
        let names: BTreeSet<&str> = m.rooms.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names.len(), 10);
        assert_eq!(m.levels, vec!["L1", "L2"]);
        assert!(m.walls.iter().all(|w| w.type_name == "Generic - 150mm"));
    }

    #[test]
    fn file_is_canonical() {
        assert_eq!(project_to_string(&villa()), VILLA_PROJECT);
    }
}
