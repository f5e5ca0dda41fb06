#![allow(dead_code)]

use gaia_core::model::{BuildingModel, Point, Room, SpaceRef, Wall, WallTypeDef};
use gaia_core::rules::wall_types;
use proptest::prelude::*;

pub const VILLA_NAMES: [&str; 10] = [
    "Master bedroom",
    "Bedroom",
    "Ramp",
    "Hallway",
    "Private sitting room",
    "Terrace",
    "Kitchen terrace",
    "Kitchen",
    "Bathroom",
    "Toilet",
];

pub const SIX_TYPES: [&str; 6] = [
    wall_types::GENERIC,
    wall_types::TILE,
    wall_types::EIFS_TILE,
    wall_types::GYPSUM_TILE,
    wall_types::EIFS_GYPSUM,
    wall_types::GYPSUM,
];

/// Text that needs escaping in XML attributes, plus some non-ASCII.
pub fn awkward_text() -> impl Strategy<Value = String> {
    "[A-Za-z0-9 &<>\"'éß∑/.-]{0,10}"
}

#[derive(Debug, Clone)]
pub struct WallSpec {
    pub level: usize,
    pub type_index: usize,
    pub side_a: Option<usize>,
    pub side_b: Option<usize>,
}

fn wall_spec(rooms: usize, types: usize) -> impl Strategy<Value = WallSpec> {
    (
        0..2usize,
        0..types,
        prop::option::weighted(0.8, 0..rooms),
        prop::option::weighted(0.8, 0..rooms),
    )
        .prop_map(move |(level, type_index, a, b)| {
            // keep the two sides distinct rooms
            let b = match (a, b) {
                (Some(x), Some(y)) if x == y => {
                    if rooms > 1 {
                        Some((y + 1) % rooms)
                    } else {
                        None
                    }
                }
                other => other.1,
            };
            WallSpec {
                level,
                type_index,
                side_a: a,
                side_b: b,
            }
        })
}

pub fn build_model(
    name: &str,
    type_names: &[String],
    room_names: &[String],
    walls: &[WallSpec],
    id_prefix: &str,
) -> BuildingModel {
    let levels = vec!["L1".to_string(), "L 2".to_string()];
    let library = type_names
        .iter()
        .enumerate()
        .map(|(i, n)| WallTypeDef {
            name: n.clone(),
            thickness_mm: 100 + 50 * i as i64,
        })
        .collect();
    let rooms = room_names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let x = 10_000 * i as i64;
            Room {
                id: format!("R{i}"),
                name: n.clone(),
                level: levels[i % 2].clone(),
                polygon: vec![Point(x, 0), Point(x + 4000, 0), Point(x + 4000, 3000), Point(x, 3000)],
            }
        })
        .collect();
    let side = |s: Option<usize>| match s {
        Some(i) => SpaceRef::Room(format!("R{i}")),
        None => SpaceRef::Exterior,
    };
    let walls = walls
        .iter()
        .enumerate()
        .map(|(i, w)| Wall {
            id: format!("{id_prefix}{i:03}"),
            level: levels[w.level].clone(),
            start: Point(0, 1000 * i as i64),
            end: Point(3000, 1000 * i as i64),
            type_name: type_names[w.type_index].clone(),
            side_a: side(w.side_a),
            side_b: side(w.side_b),
        })
        .collect();
    BuildingModel {
        name: name.to_string(),
        units: "mm".into(),
        levels,
        library,
        rooms,
        walls,
    }
}

/// Valid models with 1-60 walls and arbitrary (escape-heavy) names.
pub fn arbitrary_model() -> impl Strategy<Value = BuildingModel> {
    (
        awkward_text(),
        prop::collection::vec(awkward_text(), 1..6),
        prop::collection::vec(awkward_text(), 1..8),
        awkward_text(),
    )
        .prop_flat_map(|(name, types, rooms, prefix)| {
            let types: Vec<String> = types
                .into_iter()
                .enumerate()
                .map(|(i, t)| format!("T{i} {t}"))
                .collect();
            let rooms: Vec<String> = rooms.into_iter().map(|r| format!("Room {r}")).collect();
            let walls = prop::collection::vec(wall_spec(rooms.len(), types.len()), 1..=60);
            (Just(name), Just(types), Just(rooms), Just(prefix), walls)
        })
        .prop_map(|(name, types, rooms, prefix, walls)| {
            build_model(&name, &types, &rooms, &walls, &format!("W{prefix}#"))
        })
}

/// Valid models whose room names all classify with the default table, using
/// the six detailing types. Names get random case and spacing.
pub fn classifiable_model() -> impl Strategy<Value = BuildingModel> {
    let name = (0..VILLA_NAMES.len(), any::<bool>(), any::<bool>()).prop_map(|(i, upper, pad)| {
        let mut n = VILLA_NAMES[i].to_string();
        if upper {
            n = n.to_uppercase();
        }
        if pad {
            n = format!("  {}  ", n.replace(' ', "   "));
        }
        n
    });
    prop::collection::vec(name, 1..8)
        .prop_flat_map(|rooms| {
            let walls = prop::collection::vec(wall_spec(rooms.len(), SIX_TYPES.len()), 1..=60);
            (Just(rooms), walls)
        })
        .prop_map(|(rooms, walls)| {
            let types: Vec<String> = SIX_TYPES.iter().map(|s| s.to_string()).collect();
            build_model("random villa", &types, &rooms, &walls, "W")
        })
}

/// A model plus a non-empty subset of its wall ids.
pub fn model_and_selection(
    model: impl Strategy<Value = BuildingModel>,
) -> impl Strategy<Value = (BuildingModel, Vec<String>)> {
    model.prop_flat_map(|m| {
        let ids = m.wall_ids();
        let n = ids.len();
        (Just(m), prop::sample::subsequence(ids, 1..=n))
    })
}
