//! In-memory building representation: levels, rooms, walls and the wall-type
//! library. Values are immutable after load; edits return new models.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::classify::{ClassificationTable, UnclassifiedSpace};

/// Name used in exchange documents for the space outside the building.
pub const EXTERIOR: &str = "Exterior";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceClass {
    Indoor,
    Outdoor,
    Wet,
}

impl SpaceClass {
    pub const ALL: [SpaceClass; 3] = [SpaceClass::Indoor, SpaceClass::Outdoor, SpaceClass::Wet];

    pub fn as_str(self) -> &'static str {
        match self {
            SpaceClass::Indoor => "indoor",
            SpaceClass::Outdoor => "outdoor",
            SpaceClass::Wet => "wet",
        }
    }
}

impl fmt::Display for SpaceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Unordered pair of space classes. Construction sorts the members, so
/// `SpacePair::new(a, b) == SpacePair::new(b, a)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SpacePair(SpaceClass, SpaceClass);

impl SpacePair {
    pub fn new(a: SpaceClass, b: SpaceClass) -> Self {
        if a <= b {
            SpacePair(a, b)
        } else {
            SpacePair(b, a)
        }
    }

    pub fn first(&self) -> SpaceClass {
        self.0
    }

    pub fn second(&self) -> SpaceClass {
        self.1
    }

    pub fn contains(&self, class: SpaceClass) -> bool {
        self.0 == class || self.1 == class
    }
}

impl fmt::Display for SpacePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}, {}}}", self.0, self.1)
    }
}

/// Integer point in millimetres. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Point(pub i64, pub i64);

impl Point {
    pub fn x(&self) -> i64 {
        self.0
    }

    pub fn y(&self) -> i64 {
        self.1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Room {
    pub id: String,
    pub name: String,
    pub level: String,
    pub polygon: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallTypeDef {
    pub name: String,
    #[serde(rename = "thicknessMM")]
    pub thickness_mm: i64,
}

/// One side of a wall: a room in the model, or the outside.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SpaceRef {
    Room(String),
    Exterior,
}

impl Serialize for SpaceRef {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(1))?;
        match self {
            SpaceRef::Room(id) => map.serialize_entry("room", id)?,
            SpaceRef::Exterior => map.serialize_entry("exterior", &true)?,
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for SpaceRef {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Side {
            room: Option<String>,
            exterior: Option<bool>,
        }
        let side = Side::deserialize(deserializer)?;
        match (side.room, side.exterior) {
            (Some(id), None) => Ok(SpaceRef::Room(id)),
            (None, Some(true)) => Ok(SpaceRef::Exterior),
            _ => Err(serde::de::Error::custom(
                "a wall side must be either {\"room\": id} or {\"exterior\": true}",
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wall {
    pub id: String,
    pub level: String,
    pub start: Point,
    pub end: Point,
    #[serde(rename = "type")]
    pub type_name: String,
    #[serde(rename = "sideA")]
    pub side_a: SpaceRef,
    #[serde(rename = "sideB")]
    pub side_b: SpaceRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildingModel {
    pub name: String,
    pub units: String,
    pub levels: Vec<String>,
    #[serde(rename = "wallTypes")]
    pub library: Vec<WallTypeDef>,
    pub rooms: Vec<Room>,
    pub walls: Vec<Wall>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("unknown wall id {0:?}")]
    UnknownWall(String),
    #[error("unknown wall type {0:?}")]
    UnknownType(String),
    #[error("unknown room id {0:?}")]
    UnknownRoom(String),
    #[error(transparent)]
    Unclassified(#[from] UnclassifiedSpace),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum IssueKind {
    UnsupportedUnits(String),
    DuplicateLevel,
    DuplicateRoomId,
    DuplicateWallId,
    DuplicateTypeName,
    NonPositiveThickness(i64),
    EmptyRoomName,
    ReservedRoomName,
    UnknownLevel(String),
    TooFewVertices(usize),
    SelfIntersectingPolygon,
    DegenerateGeometry,
    UnknownWallType(String),
    DanglingRoom(String),
    SameRoomBothSides,
}

impl fmt::Display for IssueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IssueKind::UnsupportedUnits(u) => write!(f, "units must be \"mm\", found {u:?}"),
            IssueKind::DuplicateLevel => f.write_str("duplicate level"),
            IssueKind::DuplicateRoomId => f.write_str("duplicate room id"),
            IssueKind::DuplicateWallId => f.write_str("duplicate wall id"),
            IssueKind::DuplicateTypeName => f.write_str("duplicate wall type name"),
            IssueKind::NonPositiveThickness(t) => write!(f, "thickness must be positive, found {t}"),
            IssueKind::EmptyRoomName => f.write_str("room name is empty"),
            IssueKind::ReservedRoomName => write!(f, "room name {EXTERIOR:?} is reserved"),
            IssueKind::UnknownLevel(l) => write!(f, "unknown level {l:?}"),
            IssueKind::TooFewVertices(n) => write!(f, "polygon has {n} vertices, needs at least 3"),
            IssueKind::SelfIntersectingPolygon => f.write_str("polygon is not simple"),
            IssueKind::DegenerateGeometry => f.write_str("degenerate geometry: start == end"),
            IssueKind::UnknownWallType(t) => write!(f, "wall type {t:?} not in library"),
            IssueKind::DanglingRoom(r) => write!(f, "references missing room {r:?}"),
            IssueKind::SameRoomBothSides => f.write_str("both sides reference the same room"),
        }
    }
}

/// A validation finding; `id` names the offending element (wall, room,
/// level or type).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub id: String,
    #[serde(flatten)]
    pub kind: IssueKind,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.id, self.kind)
    }
}

impl BuildingModel {
    pub fn empty(name: impl Into<String>) -> Self {
        BuildingModel {
            name: name.into(),
            units: "mm".to_string(),
            levels: Vec::new(),
            library: Vec::new(),
            rooms: Vec::new(),
            walls: Vec::new(),
        }
    }

    pub fn wall(&self, id: &str) -> Option<&Wall> {
        self.walls.iter().find(|w| w.id == id)
    }

    pub fn room(&self, id: &str) -> Option<&Room> {
        self.rooms.iter().find(|r| r.id == id)
    }

    pub fn has_type(&self, name: &str) -> bool {
        self.library.iter().any(|t| t.name == name)
    }

    pub fn wall_ids(&self) -> Vec<String> {
        self.walls.iter().map(|w| w.id.clone()).collect()
    }

    /// Display name of a wall side: the room name, or `Exterior`.
    pub fn space_name(&self, side: &SpaceRef) -> Result<&str, ModelError> {
        match side {
            SpaceRef::Exterior => Ok(EXTERIOR),
            SpaceRef::Room(id) => self
                .room(id)
                .map(|r| r.name.as_str())
                .ok_or_else(|| ModelError::UnknownRoom(id.clone())),
        }
    }

    /// Wall id to current type name.
    pub fn wall_types(&self) -> BTreeMap<String, String> {
        self.walls
            .iter()
            .map(|w| (w.id.clone(), w.type_name.clone()))
            .collect()
    }
}

pub fn classify_space(
    side: &SpaceRef,
    model: &BuildingModel,
    table: &ClassificationTable,
) -> Result<SpaceClass, ModelError> {
    match side {
        SpaceRef::Exterior => Ok(SpaceClass::Outdoor),
        SpaceRef::Room(id) => {
            let room = model
                .room(id)
                .ok_or_else(|| ModelError::UnknownRoom(id.clone()))?;
            Ok(table.classify_name(&room.name)?)
        }
    }
}

/// Space classes on the two sides of a wall, as an unordered pair.
pub fn wall_context(
    model: &BuildingModel,
    wall_id: &str,
    table: &ClassificationTable,
) -> Result<SpacePair, ModelError> {
    let wall = model
        .wall(wall_id)
        .ok_or_else(|| ModelError::UnknownWall(wall_id.to_string()))?;
    let a = classify_space(&wall.side_a, model, table)?;
    let b = classify_space(&wall.side_b, model, table)?;
    Ok(SpacePair::new(a, b))
}

/// Returns a copy of `model` with one wall retyped. Geometry and topology
/// are untouched.
pub fn set_wall_type(
    model: &BuildingModel,
    wall_id: &str,
    type_name: &str,
) -> Result<BuildingModel, ModelError> {
    let index = model
        .walls
        .iter()
        .position(|w| w.id == wall_id)
        .ok_or_else(|| ModelError::UnknownWall(wall_id.to_string()))?;
    if !model.has_type(type_name) {
        return Err(ModelError::UnknownType(type_name.to_string()));
    }
    let mut next = model.clone();
    next.walls[index].type_name = type_name.to_string();
    Ok(next)
}

/// Checks every structural invariant. An empty result means the model is valid.
pub fn validate_model(model: &BuildingModel) -> Vec<Issue> {
    let mut issues = Vec::new();
    let mut push = |id: &str, kind: IssueKind| {
        issues.push(Issue {
            id: id.to_string(),
            kind,
        })
    };

    if model.units != "mm" {
        push(&model.name, IssueKind::UnsupportedUnits(model.units.clone()));
    }

    let mut levels = HashSet::new();
    for level in &model.levels {
        if !levels.insert(level.as_str()) {
            push(level, IssueKind::DuplicateLevel);
        }
    }

    let mut type_names = HashSet::new();
    for def in &model.library {
        if !type_names.insert(def.name.as_str()) {
            push(&def.name, IssueKind::DuplicateTypeName);
        }
        if def.thickness_mm <= 0 {
            push(&def.name, IssueKind::NonPositiveThickness(def.thickness_mm));
        }
    }

    let mut room_ids: HashMap<&str, &Room> = HashMap::new();
    for room in &model.rooms {
        if room_ids.insert(room.id.as_str(), room).is_some() {
            push(&room.id, IssueKind::DuplicateRoomId);
        }
        let name = room.name.trim();
        if name.is_empty() {
            push(&room.id, IssueKind::EmptyRoomName);
        } else if name.eq_ignore_ascii_case(EXTERIOR) {
            push(&room.id, IssueKind::ReservedRoomName);
        }
        if !levels.contains(room.level.as_str()) {
            push(&room.id, IssueKind::UnknownLevel(room.level.clone()));
        }
        if room.polygon.len() < 3 {
            push(&room.id, IssueKind::TooFewVertices(room.polygon.len()));
        } else if !is_simple_polygon(&room.polygon) {
            push(&room.id, IssueKind::SelfIntersectingPolygon);
        }
    }

    let mut wall_ids = HashSet::new();
    for wall in &model.walls {
        if !wall_ids.insert(wall.id.as_str()) {
            push(&wall.id, IssueKind::DuplicateWallId);
        }
        if !levels.contains(wall.level.as_str()) {
            push(&wall.id, IssueKind::UnknownLevel(wall.level.clone()));
        }
        if wall.start == wall.end {
            push(&wall.id, IssueKind::DegenerateGeometry);
        }
        if !type_names.contains(wall.type_name.as_str()) {
            push(&wall.id, IssueKind::UnknownWallType(wall.type_name.clone()));
        }
        for side in [&wall.side_a, &wall.side_b] {
            if let SpaceRef::Room(id) = side {
                if !room_ids.contains_key(id.as_str()) {
                    push(&wall.id, IssueKind::DanglingRoom(id.clone()));
                }
            }
        }
        if let (SpaceRef::Room(a), SpaceRef::Room(b)) = (&wall.side_a, &wall.side_b) {
            if a == b {
                push(&wall.id, IssueKind::SameRoomBothSides);
            }
        }
    }

    issues
}

fn cross(o: Point, a: Point, b: Point) -> i128 {
    let (ox, oy) = (o.0 as i128, o.1 as i128);
    (a.0 as i128 - ox) * (b.1 as i128 - oy) - (a.1 as i128 - oy) * (b.0 as i128 - ox)
}

fn on_segment(p: Point, q: Point, r: Point) -> bool {
    q.0 >= p.0.min(r.0) && q.0 <= p.0.max(r.0) && q.1 >= p.1.min(r.1) && q.1 <= p.1.max(r.1)
}

fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = cross(q1, q2, p1).signum();
    let d2 = cross(q1, q2, p2).signum();
    let d3 = cross(p1, p2, q1).signum();
    let d4 = cross(p1, p2, q2).signum();
    if d1 * d2 < 0 && d3 * d4 < 0 {
        return true;
    }
    (d1 == 0 && on_segment(q1, p1, q2))
        || (d2 == 0 && on_segment(q1, p2, q2))
        || (d3 == 0 && on_segment(p1, q1, p2))
        || (d4 == 0 && on_segment(p1, q2, p2))
}

/// True when no two non-adjacent edges touch, no edge has zero length and
/// adjacent edges do not fold back onto each other.
pub fn is_simple_polygon(polygon: &[Point]) -> bool {
    let n = polygon.len();
    if n < 3 {
        return false;
    }
    let edge = |i: usize| (polygon[i], polygon[(i + 1) % n]);
    for i in 0..n {
        let (a, b) = edge(i);
        if a == b {
            return false;
        }
    }
    for i in 0..n {
        let (a1, a2) = edge(i);
        for j in (i + 1)..n {
            let (b1, b2) = edge(j);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // Shared vertex is expected; a collinear overlap is not.
                let (shared, other_a, other_b) = if j == i + 1 { (a2, a1, b2) } else { (a1, a2, b1) };
                if cross(shared, other_a, other_b) == 0 {
                    let da = (other_a.0 - shared.0, other_a.1 - shared.1);
                    let db = (other_b.0 - shared.0, other_b.1 - shared.1);
                    if (da.0 as i128) * (db.0 as i128) + (da.1 as i128) * (db.1 as i128) > 0 {
                        return false;
                    }
                }
                continue;
            }
            if segments_intersect(a1, a2, b1, b2) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x: i64, y: i64, size: i64) -> Vec<Point> {
        vec![
            Point(x, y),
            Point(x + size, y),
            Point(x + size, y + size),
            Point(x, y + size),
        ]
    }

    fn two_bedrooms() -> BuildingModel {
        let mut m = BuildingModel::empty("test");
        m.levels.push("L1".into());
        m.library.push(WallTypeDef {
            name: "Generic - 150mm".into(),
            thickness_mm: 150,
        });
        m.library.push(WallTypeDef {
            name: "Gypsum finishes 150mm".into(),
            thickness_mm: 150,
        });
        for (id, x) in [("R1", 0), ("R2", 3000)] {
            m.rooms.push(Room {
                id: id.into(),
                name: "Bedroom".into(),
                level: "L1".into(),
                polygon: square(x, 0, 3000),
            });
        }
        m.walls.push(Wall {
            id: "W001".into(),
            level: "L1".into(),
            start: Point(3000, 0),
            end: Point(3000, 3000),
            type_name: "Generic - 150mm".into(),
            side_a: SpaceRef::Room("R1".into()),
            side_b: SpaceRef::Room("R2".into()),
        });
        m
    }

    #[test]
    fn space_pair_is_unordered() {
        for a in SpaceClass::ALL {
            for b in SpaceClass::ALL {
                assert_eq!(SpacePair::new(a, b), SpacePair::new(b, a));
            }
        }
    }

    #[test]
    fn bedroom_between_bedroom_is_indoor_indoor() {
        let m = two_bedrooms();
        let table = ClassificationTable::default();
        let pair = wall_context(&m, "W001", &table).unwrap();
        assert_eq!(pair, SpacePair::new(SpaceClass::Indoor, SpaceClass::Indoor));
        assert_eq!(
            wall_context(&m, "W404", &table),
            Err(ModelError::UnknownWall("W404".into()))
        );
    }

    #[test]
    fn exterior_is_outdoor() {
        let m = two_bedrooms();
        let table = ClassificationTable::default();
        assert_eq!(
            classify_space(&SpaceRef::Exterior, &m, &table).unwrap(),
            SpaceClass::Outdoor
        );
    }

    #[test]
    fn set_wall_type_changes_one_field() {
        let m = two_bedrooms();
        let next = set_wall_type(&m, "W001", "Gypsum finishes 150mm").unwrap();
        assert_eq!(next.walls[0].type_name, "Gypsum finishes 150mm");
        let mut back = next.clone();
        back.walls[0].type_name = m.walls[0].type_name.clone();
        assert_eq!(back, m);

        let same = set_wall_type(&m, "W001", "Generic - 150mm").unwrap();
        assert_eq!(same, m);

        assert_eq!(
            set_wall_type(&m, "W001", "Brick 200mm"),
            Err(ModelError::UnknownType("Brick 200mm".into()))
        );
        assert_eq!(
            set_wall_type(&m, "W999", "Generic - 150mm"),
            Err(ModelError::UnknownWall("W999".into()))
        );
    }

    #[test]
    fn validate_flags_duplicates_and_degenerate_walls() {
        let mut m = two_bedrooms();
        assert!(validate_model(&m).is_empty());

        let mut dup = m.walls[0].clone();
        dup.start = Point(0, 0);
        dup.end = Point(0, 0);
        m.walls.push(dup);
        let issues = validate_model(&m);
        assert_eq!(
            issues,
            vec![
                Issue {
                    id: "W001".into(),
                    kind: IssueKind::DuplicateWallId
                },
                Issue {
                    id: "W001".into(),
                    kind: IssueKind::DegenerateGeometry
                },
            ]
        );
    }

    #[test]
    fn validate_flags_dangling_room_and_reserved_name() {
        let mut m = two_bedrooms();
        m.walls[0].side_b = SpaceRef::Room("R99".into());
        m.rooms[0].name = "exterior".into();
        let issues = validate_model(&m);
        assert!(issues.contains(&Issue {
            id: "W001".into(),
            kind: IssueKind::DanglingRoom("R99".into())
        }));
        assert!(issues.contains(&Issue {
            id: "R1".into(),
            kind: IssueKind::ReservedRoomName
        }));
    }

    #[test]
    fn polygon_simplicity() {
        assert!(is_simple_polygon(&square(0, 0, 10)));
        let bowtie = vec![Point(0, 0), Point(10, 10), Point(10, 0), Point(0, 10)];
        assert!(!is_simple_polygon(&bowtie));
        let spike = vec![Point(0, 0), Point(10, 0), Point(5, 0)];
        assert!(!is_simple_polygon(&spike));
        let l_shape = vec![
            Point(0, 0),
            Point(20, 0),
            Point(20, 10),
            Point(10, 10),
            Point(10, 20),
            Point(0, 20),
        ];
        assert!(is_simple_polygon(&l_shape));
        let triangle = vec![Point(0, 0), Point(10, 0), Point(0, 10)];
        assert!(is_simple_polygon(&triangle));
    }

    #[test]
    fn space_ref_serde_shape() {
        let json = serde_json::to_string(&SpaceRef::Exterior).unwrap();
        assert_eq!(json, r#"{"exterior":true}"#);
        let room: SpaceRef = serde_json::from_str(r#"{"room":"R1"}"#).unwrap();
        assert_eq!(room, SpaceRef::Room("R1".into()));
        assert!(serde_json::from_str::<SpaceRef>(r#"{"exterior":false}"#).is_err());
        assert!(serde_json::from_str::<SpaceRef>(r#"{"room":"R1","exterior":true}"#).is_err());
    }
}
