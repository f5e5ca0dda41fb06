//! Exchange XML: export selected walls with their type, level and the names
//! of the spaces on each side; parse a returned document; check it against
//! the model; diff it into a change set; apply the change set atomically.
//!
//! Document shape:
//!
//! ```text
//! <Model name="..." units="mm">
//!   <WallTypes>
//!     <WallType name="..." thicknessMM="..."/>
//!   </WallTypes>
//!   <Walls>
//!     <Wall id="..." type="..." level="..."><SideA space="..."/><SideB space="..."/></Wall>
//!   </Walls>
//! </Model>
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{canonical_type_name, normalize_room_name};
use crate::model::{BuildingModel, ModelError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExportedXml {
    pub text: String,
    /// Exported wall ids, ascending.
    pub selection: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedWallType {
    pub name: String,
    pub thickness_mm: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedWall {
    pub id: String,
    pub type_name: String,
    pub level: String,
    pub side_a: String,
    pub side_b: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedModel {
    pub name: String,
    pub units: String,
    pub library: Vec<ParsedWallType>,
    pub walls: Vec<ParsedWall>,
}

impl ParsedModel {
    pub fn wall(&self, id: &str) -> Option<&ParsedWall> {
        self.walls.iter().find(|w| w.id == id)
    }

    pub fn type_names(&self) -> Vec<String> {
        self.library.iter().map(|t| t.name.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum XmlError {
    #[error("malformed XML at line {line}, column {column}: {message}")]
    Malformed {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate wall id {0:?}")]
    DuplicateWall(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// The in-scope projection of `model` restricted to `selection`: exactly
/// what the exchange document carries. Walls are sorted by id.
pub fn project_selection(
    model: &BuildingModel,
    selection: &[String],
) -> Result<ParsedModel, XmlError> {
    let ids: BTreeSet<&str> = selection.iter().map(String::as_str).collect();
    let mut walls = Vec::with_capacity(ids.len());
    for id in ids {
        let wall = model
            .wall(id)
            .ok_or_else(|| ModelError::UnknownWall(id.to_string()))?;
        walls.push(ParsedWall {
            id: wall.id.clone(),
            type_name: wall.type_name.clone(),
            level: wall.level.clone(),
            side_a: model.space_name(&wall.side_a)?.to_string(),
            side_b: model.space_name(&wall.side_b)?.to_string(),
        });
    }
    Ok(ParsedModel {
        name: model.name.clone(),
        units: model.units.clone(),
        library: model
            .library
            .iter()
            .map(|t| ParsedWallType {
                name: t.name.clone(),
                thickness_mm: Some(t.thickness_mm),
            })
            .collect(),
        walls,
    })
}

pub fn export_xml(model: &BuildingModel, selection: &[String]) -> Result<ExportedXml, XmlError> {
    let projection = project_selection(model, selection)?;
    Ok(ExportedXml {
        text: render_document(&projection),
        selection: projection.walls.iter().map(|w| w.id.clone()).collect(),
    })
}

pub fn export_all(model: &BuildingModel) -> Result<ExportedXml, XmlError> {
    export_xml(model, &model.wall_ids())
}

fn attr(value: &str) -> std::borrow::Cow<'_, str> {
    quick_xml::escape::escape(value)
}

/// Deterministic serializer shared by export and the rule backend.
pub fn render_document(doc: &ParsedModel) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<Model name=\"{}\" units=\"{}\">",
        attr(&doc.name),
        attr(&doc.units)
    );
    if doc.library.is_empty() {
        out.push_str("  <WallTypes/>\n");
    } else {
        out.push_str("  <WallTypes>\n");
        for t in &doc.library {
            match t.thickness_mm {
                Some(mm) => {
                    let _ = writeln!(
                        out,
                        "    <WallType name=\"{}\" thicknessMM=\"{mm}\"/>",
                        attr(&t.name)
                    );
                }
                None => {
                    let _ = writeln!(out, "    <WallType name=\"{}\"/>", attr(&t.name));
                }
            }
        }
        out.push_str("  </WallTypes>\n");
    }
    if doc.walls.is_empty() {
        out.push_str("  <Walls/>\n");
    } else {
        out.push_str("  <Walls>\n");
        for w in &doc.walls {
            let _ = writeln!(
                out,
                "    <Wall id=\"{}\" type=\"{}\" level=\"{}\"><SideA space=\"{}\"/><SideB space=\"{}\"/></Wall>",
                attr(&w.id),
                attr(&w.type_name),
                attr(&w.level),
                attr(&w.side_a),
                attr(&w.side_b)
            );
        }
        out.push_str("  </Walls>\n");
    }
    out.push_str("</Model>\n");
    out
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text.as_bytes()[..offset];
    let line = before.iter().filter(|&&b| b == b'\n').count() + 1;
    let column = match before.iter().rposition(|&b| b == b'\n') {
        Some(nl) => offset - nl,
        None => offset + 1,
    };
    (line, column)
}

struct DocParser<'a> {
    text: &'a str,
    reader: Reader<&'a [u8]>,
}

impl<'a> DocParser<'a> {
    fn new(text: &'a str) -> Self {
        let mut reader = Reader::from_str(text);
        reader.config_mut().trim_text(true);
        DocParser { text, reader }
    }

    fn error(&self, message: impl Into<String>) -> XmlError {
        let (line, column) = line_column(self.text, self.reader.buffer_position() as usize);
        XmlError::Malformed {
            line,
            column,
            message: message.into(),
        }
    }

    fn next(&mut self) -> Result<Event<'a>, XmlError> {
        loop {
            match self.reader.read_event() {
                Ok(Event::Comment(_) | Event::Decl(_) | Event::PI(_) | Event::DocType(_)) => {
                    continue
                }
                Ok(Event::Text(t)) if t.iter().all(u8::is_ascii_whitespace) => continue,
                Ok(event) => return Ok(event),
                Err(e) => return Err(self.error(e.to_string())),
            }
        }
    }

    fn attributes(&self, start: &BytesStart<'_>) -> Result<HashMap<String, String>, XmlError> {
        let mut map = HashMap::new();
        for a in start.attributes() {
            let a = a.map_err(|e| self.error(e.to_string()))?;
            let key = String::from_utf8_lossy(a.key.as_ref()).into_owned();
            let value = a
                .unescape_value()
                .map_err(|e| self.error(e.to_string()))?
                .into_owned();
            if map.insert(key.clone(), value).is_some() {
                return Err(self.error(format!("duplicate attribute {key:?}")));
            }
        }
        Ok(map)
    }

    fn required(
        &self,
        attrs: &mut HashMap<String, String>,
        element: &str,
        key: &str,
    ) -> Result<String, XmlError> {
        attrs
            .remove(key)
            .ok_or_else(|| self.error(format!("<{element}> is missing attribute {key:?}")))
    }

    /// Skips the content of an element whose start tag was just read.
    fn skip_element(&mut self, start: &BytesStart<'_>) -> Result<(), XmlError> {
        let end = start.to_end().into_owned();
        self.reader
            .read_to_end(end.name())
            .map_err(|e| self.error(e.to_string()))?;
        Ok(())
    }

    fn parse(mut self) -> Result<ParsedModel, XmlError> {
        let (root, empty) = match self.next()? {
            Event::Start(s) => (s, false),
            Event::Empty(s) => (s, true),
            Event::Eof => return Err(self.error("empty document")),
            _ => return Err(self.error("expected <Model> root element")),
        };
        if root.name().as_ref() != b"Model" {
            return Err(self.error(format!(
                "expected <Model> root element, found <{}>",
                String::from_utf8_lossy(root.name().as_ref())
            )));
        }
        let mut attrs = self.attributes(&root)?;
        let mut doc = ParsedModel {
            name: attrs.remove("name").unwrap_or_default(),
            units: attrs.remove("units").unwrap_or_else(|| "mm".to_string()),
            library: Vec::new(),
            walls: Vec::new(),
        };
        let mut seen = HashSet::new();
        if !empty {
            loop {
                match self.next()? {
                    Event::End(e) if e.name().as_ref() == b"Model" => break,
                    Event::Start(s) if s.name().as_ref() == b"WallTypes" => {
                        self.parse_wall_types(&mut doc)?
                    }
                    Event::Start(s) if s.name().as_ref() == b"Walls" => {
                        self.parse_walls(&mut doc, &mut seen)?
                    }
                    Event::Empty(s)
                        if matches!(s.name().as_ref(), b"WallTypes" | b"Walls") => {}
                    Event::Start(s) => self.skip_element(&s)?,
                    Event::Empty(_) => {}
                    Event::Eof => return Err(self.error("unexpected end of document inside <Model>")),
                    Event::Text(_) | Event::CData(_) => {
                        return Err(self.error("unexpected text inside <Model>"))
                    }
                    other => return Err(self.error(format!("unexpected {other:?}"))),
                }
            }
        }
        match self.next()? {
            Event::Eof => Ok(doc),
            _ => Err(self.error("content after </Model>")),
        }
    }

    fn parse_wall_types(&mut self, doc: &mut ParsedModel) -> Result<(), XmlError> {
        loop {
            match self.next()? {
                Event::End(e) if e.name().as_ref() == b"WallTypes" => return Ok(()),
                Event::Empty(s) if s.name().as_ref() == b"WallType" => {
                    doc.library.push(self.wall_type(&s)?);
                }
                Event::Start(s) if s.name().as_ref() == b"WallType" => {
                    doc.library.push(self.wall_type(&s)?);
                    self.skip_element(&s)?;
                }
                Event::Start(s) => self.skip_element(&s)?,
                Event::Empty(_) => {}
                Event::Eof => return Err(self.error("unexpected end of document inside <WallTypes>")),
                _ => return Err(self.error("unexpected content inside <WallTypes>")),
            }
        }
    }

    fn parse_walls(
        &mut self,
        doc: &mut ParsedModel,
        seen: &mut HashSet<String>,
    ) -> Result<(), XmlError> {
        loop {
            match self.next()? {
                Event::End(e) if e.name().as_ref() == b"Walls" => return Ok(()),
                Event::Start(s) if s.name().as_ref() == b"Wall" => {
                    let mut attrs = self.attributes(&s)?;
                    let id = self.required(&mut attrs, "Wall", "id")?;
                    let type_name = canonical_type_name(&self.required(&mut attrs, "Wall", "type")?);
                    let level = attrs.remove("level").unwrap_or_default();
                    let (side_a, side_b) = self.parse_sides(&id)?;
                    if !seen.insert(id.clone()) {
                        return Err(XmlError::DuplicateWall(id));
                    }
                    doc.walls.push(ParsedWall {
                        id,
                        type_name,
                        level,
                        side_a,
                        side_b,
                    });
                }
                Event::Empty(s) if s.name().as_ref() == b"Wall" => {
                    let mut attrs = self.attributes(&s)?;
                    let id = self.required(&mut attrs, "Wall", "id")?;
                    if !seen.insert(id.clone()) {
                        return Err(XmlError::DuplicateWall(id));
                    }
                    return Err(self.error(format!("<Wall id={id:?}> has no SideA/SideB")));
                }
                Event::Start(s) => self.skip_element(&s)?,
                Event::Empty(_) => {}
                Event::Eof => return Err(self.error("unexpected end of document inside <Walls>")),
                _ => return Err(self.error("unexpected content inside <Walls>")),
            }
        }
    }

    fn wall_type(&self, s: &BytesStart<'_>) -> Result<ParsedWallType, XmlError> {
        let mut attrs = self.attributes(s)?;
        let name = canonical_type_name(&self.required(&mut attrs, "WallType", "name")?);
        let thickness_mm = match attrs.remove("thicknessMM") {
            Some(v) => Some(
                v.trim()
                    .parse::<i64>()
                    .map_err(|_| self.error(format!("thicknessMM {v:?} is not an integer")))?,
            ),
            None => None,
        };
        Ok(ParsedWallType { name, thickness_mm })
    }

    fn side(
        &self,
        s: &BytesStart<'_>,
        wall_id: &str,
        side_a: &mut Option<String>,
        side_b: &mut Option<String>,
    ) -> Result<(), XmlError> {
        let is_a = s.name().as_ref() == b"SideA";
        let element = if is_a { "SideA" } else { "SideB" };
        let mut attrs = self.attributes(s)?;
        let space = self.required(&mut attrs, element, "space")?;
        let slot = if is_a { side_a } else { side_b };
        if slot.replace(space).is_some() {
            return Err(self.error(format!("wall {wall_id:?} has two <{element}> elements")));
        }
        Ok(())
    }

    fn parse_sides(&mut self, wall_id: &str) -> Result<(String, String), XmlError> {
        let mut side_a = None;
        let mut side_b = None;
        loop {
            match self.next()? {
                Event::End(e) if e.name().as_ref() == b"Wall" => break,
                Event::Empty(s) if matches!(s.name().as_ref(), b"SideA" | b"SideB") => {
                    self.side(&s, wall_id, &mut side_a, &mut side_b)?;
                }
                Event::Start(s) if matches!(s.name().as_ref(), b"SideA" | b"SideB") => {
                    self.side(&s, wall_id, &mut side_a, &mut side_b)?;
                    self.skip_element(&s)?;
                }
                Event::Start(s) => self.skip_element(&s)?,
                Event::Empty(_) => {}
                Event::Eof => return Err(self.error("unexpected end of document inside <Wall>")),
                _ => return Err(self.error(format!("unexpected content inside wall {wall_id:?}"))),
            }
        }
        match (side_a, side_b) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(self.error(format!("wall {wall_id:?} needs both <SideA> and <SideB>"))),
        }
    }
}

pub fn parse_xml(text: &str) -> Result<ParsedModel, XmlError> {
    DocParser::new(text).parse()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail")]
pub enum ValidationIssue {
    UnknownWall,
    UnknownType(String),
    TopologyMutated,
    MissingWall,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::UnknownWall => f.write_str("wall not in the exported selection"),
            ValidationIssue::UnknownType(t) => write!(f, "type {t:?} not in the library"),
            ValidationIssue::TopologyMutated => f.write_str("level or side spaces differ from the export"),
            ValidationIssue::MissingWall => f.write_str("exported wall missing from the response"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WallIssue {
    pub wall_id: String,
    pub issue: ValidationIssue,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<WallIssue>,
    pub fatal: bool,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty() && !self.fatal
    }

    pub fn issues_for(&self, wall_id: &str) -> impl Iterator<Item = &ValidationIssue> {
        let wall_id = wall_id.to_string();
        self.issues
            .iter()
            .filter(move |i| i.wall_id == wall_id)
            .map(|i| &i.issue)
    }

    pub fn is_flagged(&self, wall_id: &str) -> bool {
        self.issues_for(wall_id).next().is_some()
    }
}

fn same_sides(a1: &str, b1: &str, a2: &str, b2: &str) -> bool {
    let mut left = [normalize_room_name(a1), normalize_room_name(b1)];
    let mut right = [normalize_room_name(a2), normalize_room_name(b2)];
    left.sort();
    right.sort();
    left == right
}

/// Compares a returned document against the model and the exported
/// selection. Side order is not significant.
pub fn validate_parsed(
    parsed: &ParsedModel,
    model: &BuildingModel,
    selection: &[String],
) -> ValidationReport {
    let selected: BTreeSet<&str> = selection.iter().map(String::as_str).collect();
    let mut issues = Vec::new();
    let mut recognized = 0usize;
    let mut present = HashSet::new();

    for pw in &parsed.walls {
        present.insert(pw.id.as_str());
        let wall = match model.wall(&pw.id) {
            Some(w) if selected.contains(pw.id.as_str()) => w,
            _ => {
                issues.push(WallIssue {
                    wall_id: pw.id.clone(),
                    issue: ValidationIssue::UnknownWall,
                });
                continue;
            }
        };
        recognized += 1;
        if !model.has_type(&pw.type_name) {
            issues.push(WallIssue {
                wall_id: pw.id.clone(),
                issue: ValidationIssue::UnknownType(pw.type_name.clone()),
            });
        }
        let exported_a = model.space_name(&wall.side_a).unwrap_or_default();
        let exported_b = model.space_name(&wall.side_b).unwrap_or_default();
        if pw.level != wall.level || !same_sides(&pw.side_a, &pw.side_b, exported_a, exported_b) {
            issues.push(WallIssue {
                wall_id: pw.id.clone(),
                issue: ValidationIssue::TopologyMutated,
            });
        }
    }
    for id in &selected {
        if !present.contains(id) {
            issues.push(WallIssue {
                wall_id: id.to_string(),
                issue: ValidationIssue::MissingWall,
            });
        }
    }
    issues.sort();
    ValidationReport {
        fatal: !selected.is_empty() && recognized == 0,
        issues,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangePolicy {
    Strict,
    #[default]
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Change {
    pub wall_id: String,
    pub old_type: String,
    pub new_type: String,
}

/// A response entry that was not turned into a change.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedEntry {
    pub wall_id: String,
    pub proposed_type: String,
    pub issues: Vec<ValidationIssue>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeSet {
    pub changes: Vec<Change>,
    pub source: String,
    pub dropped: Vec<DroppedEntry>,
}

impl ChangeSet {
    pub fn is_empty(&self) -> bool {
        self.changes.is_empty()
    }

    pub fn new_type(&self, wall_id: &str) -> Option<&str> {
        self.changes
            .iter()
            .find(|c| c.wall_id == wall_id)
            .map(|c| c.new_type.as_str())
    }

    /// Wall types after this change set is applied to `model`.
    pub fn resulting_types(&self, model: &BuildingModel) -> BTreeMap<String, String> {
        let mut types = model.wall_types();
        for c in &self.changes {
            if let Some(t) = types.get_mut(&c.wall_id) {
                *t = c.new_type.clone();
            }
        }
        types
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChangeSetError {
    #[error("response unusable: no recognizable walls")]
    Fatal(ValidationReport),
    #[error("strict policy rejected a response with {} issue(s)", .0.issues.len())]
    Rejected(ValidationReport),
}

/// Walls whose returned type differs from the model and that carry no
/// validation issue become changes. Missing walls count as unchanged.
pub fn compute_changeset(
    model: &BuildingModel,
    parsed: &ParsedModel,
    report: &ValidationReport,
    policy: ChangePolicy,
    source: &str,
) -> Result<ChangeSet, ChangeSetError> {
    if report.fatal {
        return Err(ChangeSetError::Fatal(report.clone()));
    }
    if policy == ChangePolicy::Strict && !report.issues.is_empty() {
        return Err(ChangeSetError::Rejected(report.clone()));
    }
    let mut set = ChangeSet {
        source: source.to_string(),
        ..ChangeSet::default()
    };
    for pw in &parsed.walls {
        let issues: Vec<ValidationIssue> = report.issues_for(&pw.id).cloned().collect();
        if !issues.is_empty() {
            set.dropped.push(DroppedEntry {
                wall_id: pw.id.clone(),
                proposed_type: pw.type_name.clone(),
                issues,
            });
            continue;
        }
        let Some(wall) = model.wall(&pw.id) else {
            continue;
        };
        if wall.type_name != pw.type_name {
            set.changes.push(Change {
                wall_id: pw.id.clone(),
                old_type: wall.type_name.clone(),
                new_type: pw.type_name.clone(),
            });
        }
    }
    set.changes.sort_by(|a, b| a.wall_id.cmp(&b.wall_id));
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ApplyError {
    #[error("conflict on wall {wall_id:?}: change expects type {expected:?} but the model has {found:?}")]
    Conflict {
        wall_id: String,
        expected: String,
        found: String,
    },
    #[error("wall {0:?} appears more than once in the change set")]
    DuplicateChange(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// All-or-nothing: every change is checked before any is applied.
pub fn apply_changeset(
    model: &BuildingModel,
    changeset: &ChangeSet,
) -> Result<BuildingModel, ApplyError> {
    let index: HashMap<&str, usize> = model
        .walls
        .iter()
        .enumerate()
        .map(|(i, w)| (w.id.as_str(), i))
        .collect();
    let mut seen = HashSet::new();
    let mut planned = Vec::with_capacity(changeset.changes.len());
    for change in &changeset.changes {
        if !seen.insert(change.wall_id.as_str()) {
            return Err(ApplyError::DuplicateChange(change.wall_id.clone()));
        }
        let &i = index
            .get(change.wall_id.as_str())
            .ok_or_else(|| ModelError::UnknownWall(change.wall_id.clone()))?;
        if !model.has_type(&change.new_type) {
            return Err(ModelError::UnknownType(change.new_type.clone()).into());
        }
        let current = &model.walls[i].type_name;
        if *current != change.old_type {
            return Err(ApplyError::Conflict {
                wall_id: change.wall_id.clone(),
                expected: change.old_type.clone(),
                found: current.clone(),
            });
        }
        planned.push((i, change.new_type.clone()));
    }
    let mut next = model.clone();
    for (i, new_type) in planned {
        next.walls[i].type_name = new_type;
    }
    Ok(next)
}
