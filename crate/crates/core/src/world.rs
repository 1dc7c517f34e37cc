//! Simulated tabletop: ground-truth objects, per-angle visibility and
//! symbolic object locations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::BenchmarkQuestion;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("cannot read world spec {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid world spec at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("dangling reference: {0}")]
    Reference(String),
    #[error("invalid world spec: {0}")]
    Invalid(String),
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("no designated receptacle set for {verb}(\"{object}\")")]
    NoDesignated { verb: &'static str, object: String },
    #[error("object image requested from the SCENE pseudo-angle; use a scene photo instead")]
    SceneAngleForObject,
}

/// Camera viewpoints. `Scene` is the whole-surface image; the rest are
/// close-ups of one object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Angle {
    Front,
    Back,
    Left,
    Right,
    Top,
    Scene,
}

impl Angle {
    pub const ALL: [Angle; 6] = [
        Angle::Front,
        Angle::Back,
        Angle::Left,
        Angle::Right,
        Angle::Top,
        Angle::Scene,
    ];

    pub const CLOSE_UPS: [Angle; 5] = [
        Angle::Front,
        Angle::Back,
        Angle::Left,
        Angle::Right,
        Angle::Top,
    ];

    pub fn is_close_up(self) -> bool {
        self != Angle::Scene
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Angle::Front => "FRONT",
            Angle::Back => "BACK",
            Angle::Left => "LEFT",
            Angle::Right => "RIGHT",
            Angle::Top => "TOP",
            Angle::Scene => "SCENE",
        }
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Angle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s
            .trim()
            .trim_start_matches('<')
            .trim_end_matches('>')
            .to_ascii_uppercase();
        Angle::ALL
            .into_iter()
            .find(|a| a.as_str() == upper)
            .ok_or_else(|| format!("unknown angle `{s}`"))
    }
}

/// A yes/no fact about an object and the angles that reveal it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Attribute {
    pub key: String,
    /// Question text with an `{object}` slot, e.g. `Is the {object} empty?`.
    pub phrase: String,
    pub truth: bool,
    #[serde(default)]
    pub visible_from: BTreeSet<Angle>,
}

impl Attribute {
    /// Renders the phrase for `object`, quoting the name in backticks.
    pub fn question_for(&self, object: &str) -> String {
        self.phrase.replace("{object}", &format!("`{object}`"))
    }

    pub fn visible(&self, angle: Angle) -> bool {
        self.visible_from.contains(&angle)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceptacleMap {
    pub relocate: String,
    pub cleanup: String,
}

impl ReceptacleMap {
    pub fn for_verb(&self, verb: SkillVerb) -> &str {
        match verb {
            SkillVerb::Relocate => &self.relocate,
            SkillVerb::Cleanup => &self.cleanup,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillVerb {
    Relocate,
    Cleanup,
}

impl SkillVerb {
    pub fn as_str(self) -> &'static str {
        match self {
            SkillVerb::Relocate => "relocate",
            SkillVerb::Cleanup => "cleanup",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "receptacle")]
pub enum Location {
    OnSurface,
    InReceptacle(String),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::OnSurface => f.write_str("on_surface"),
            Location::InReceptacle(r) => write!(f, "in_receptacle({r})"),
        }
    }
}

/// An object as declared in a world spec.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimObject {
    pub name: String,
    pub attributes: Vec<Attribute>,
    pub receptacles: ReceptacleMap,
    /// Optional image files per angle, used only by HTTP VLM backends.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub images: BTreeMap<Angle, PathBuf>,
}

impl SimObject {
    /// Finds the attribute whose rendered phrase equals `question`
    /// (whitespace-insensitive).
    pub fn attribute_for_question(&self, question: &str) -> Option<&Attribute> {
        let wanted = normalize_ws(question);
        self.attributes
            .iter()
            .find(|a| normalize_ws(&a.question_for(&self.name)) == wanted)
    }
}

pub(crate) fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Ground truth for one surface. Also serves as the benchmark manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u32>,
    pub surface: String,
    pub objects: Vec<SimObject>,
    pub receptacles: Vec<String>,
    #[serde(default)]
    pub benchmark: Vec<BenchmarkQuestion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_image: Option<PathBuf>,
    /// Directory relative image paths resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl WorldSpec {
    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        let spec: WorldSpec = serde_json::from_str(text).map_err(|e| WorldError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("world spec serializes")
    }

    /// Checks every cross-reference and uniqueness rule.
    pub fn validate(&self) -> Result<(), WorldError> {
        if let Some(v) = self.schema_version {
            if v != SCHEMA_VERSION {
                return Err(WorldError::Invalid(format!(
                    "unsupported schema_version {v} (expected {SCHEMA_VERSION})"
                )));
            }
        }
        if self.objects.is_empty() {
            return Err(WorldError::Invalid(
                "at least one object is required".into(),
            ));
        }
        let declared: BTreeSet<&str> = self.receptacles.iter().map(String::as_str).collect();
        let mut names = BTreeSet::new();
        for obj in &self.objects {
            if obj.name.trim().is_empty() {
                return Err(WorldError::Invalid("object name must be non-empty".into()));
            }
            if obj.name != obj.name.to_lowercase() {
                return Err(WorldError::Invalid(format!(
                    "object name `{}` must be lowercase",
                    obj.name
                )));
            }
            if !names.insert(obj.name.as_str()) {
                return Err(WorldError::Invalid(format!(
                    "duplicate object `{}`",
                    obj.name
                )));
            }
            for verb in [SkillVerb::Relocate, SkillVerb::Cleanup] {
                let r = obj.receptacles.for_verb(verb);
                if !declared.contains(r) {
                    return Err(WorldError::Reference(format!(
                        "object `{}` maps {} to undeclared receptacle `{r}`",
                        obj.name,
                        verb.as_str()
                    )));
                }
            }
            let mut keys = BTreeSet::new();
            for attr in &obj.attributes {
                if !keys.insert(attr.key.as_str()) {
                    return Err(WorldError::Invalid(format!(
                        "duplicate attribute `{}` on `{}`",
                        attr.key, obj.name
                    )));
                }
                if !attr.phrase.contains("{object}") {
                    return Err(WorldError::Invalid(format!(
                        "attribute `{}` on `{}` has no {{object}} slot",
                        attr.key, obj.name
                    )));
                }
            }
        }
        for q in &self.benchmark {
            if !names.contains(q.object.as_str()) {
                return Err(WorldError::Reference(format!(
                    "benchmark question references undeclared object `{}`",
                    q.object
                )));
            }
            q.check().map_err(|e| WorldError::Invalid(e.to_string()))?;
        }
        Ok(())
    }

    pub fn object(&self, name: &str) -> Result<&SimObject, WorldError> {
        self.objects
            .iter()
            .find(|o| o.name == name)
            .ok_or_else(|| WorldError::UnknownObject(name.to_string()))
    }

    pub fn object_names(&self) -> Vec<String> {
        self.objects.iter().map(|o| o.name.clone()).collect()
    }

    pub fn receptacle_maps(&self) -> BTreeMap<String, ReceptacleMap> {
        self.objects
            .iter()
            .map(|o| (o.name.clone(), o.receptacles.clone()))
            .collect()
    }

    /// All declared receptacles, including any only referenced through
    /// per-object maps.
    pub fn all_receptacles(&self) -> BTreeSet<String> {
        let mut set: BTreeSet<String> = self.receptacles.iter().cloned().collect();
        for o in &self.objects {
            set.insert(o.receptacles.relocate.clone());
            set.insert(o.receptacles.cleanup.clone());
        }
        set
    }

    pub fn initial_state(&self) -> WorldState {
        WorldState {
            objects: self
                .objects
                .iter()
                .map(|o| ObjectState {
                    name: o.name.clone(),
                    location: Location::OnSurface,
                    handled: false,
                })
                .collect(),
        }
    }

    pub fn resolve_image(&self, image: &ImageRef) -> Option<PathBuf> {
        let rel = match &image.target {
            PhotoTarget::Scene => self.scene_image.clone()?,
            PhotoTarget::Object(name) => self.object(name).ok()?.images.get(&image.angle)?.clone(),
        };
        Some(match &self.base_dir {
            Some(dir) if rel.is_relative() => dir.join(rel),
            _ => rel,
        })
    }

    /// Captures the facts visible from `angle`. Never mutates the world.
    pub fn take_photo(
        &self,
        target: &PhotoTarget,
        angle: Angle,
        iteration: u32,
    ) -> Result<(ImageRef, VisibleFactSet), WorldError> {
        let mut facts = VisibleFactSet::default();
        match target {
            PhotoTarget::Scene => {
                if angle != Angle::Scene {
                    return Err(WorldError::Invalid(format!(
                        "scene photo must use the SCENE angle, got {angle}"
                    )));
                }
                for obj in &self.objects {
                    facts.extend_from(obj, angle);
                }
            }
            PhotoTarget::Object(name) => {
                if angle == Angle::Scene {
                    return Err(WorldError::SceneAngleForObject);
                }
                facts.extend_from(self.object(name)?, angle);
            }
        }
        let image = ImageRef {
            target: target.clone(),
            angle,
            iteration,
        };
        Ok((image, facts))
    }
}

pub fn load_world(path: &Path) -> Result<WorldSpec, WorldError> {
    let text = std::fs::read_to_string(path).map_err(|source| WorldError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut spec = WorldSpec::from_json(&text)?;
    spec.base_dir = path.parent().map(Path::to_path_buf);
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhotoTarget {
    Scene,
    Object(String),
}

impl fmt::Display for PhotoTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhotoTarget::Scene => f.write_str("scene"),
            PhotoTarget::Object(o) => f.write_str(o),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageRef {
    pub target: PhotoTarget,
    pub angle: Angle,
    pub iteration: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VisibleFact {
    pub object: String,
    pub key: String,
    pub question: String,
    pub truth: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisibleFactSet {
    pub facts: BTreeSet<VisibleFact>,
}

impl VisibleFactSet {
    fn extend_from(&mut self, obj: &SimObject, angle: Angle) {
        for attr in obj.attributes.iter().filter(|a| a.visible(angle)) {
            self.facts.insert(VisibleFact {
                object: obj.name.clone(),
                key: attr.key.clone(),
                question: attr.question_for(&obj.name),
                truth: attr.truth,
            });
        }
    }

    pub fn contains(&self, object: &str, key: &str) -> bool {
        self.facts
            .iter()
            .any(|f| f.object == object && f.key == key)
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectState {
    pub name: String,
    pub location: Location,
    pub handled: bool,
}

/// Mutable runtime state of a surface.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    pub objects: Vec<ObjectState>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "skill")]
pub enum Skill {
    LeaveAlone {
        object: String,
    },
    Relocate {
        object: String,
        designated: Option<String>,
    },
    Cleanup {
        object: String,
        designated: Option<String>,
    },
}

impl Skill {
    pub fn object(&self) -> &str {
        match self {
            Skill::LeaveAlone { object }
            | Skill::Relocate { object, .. }
            | Skill::Cleanup { object, .. } => object,
        }
    }
}

impl WorldState {
    pub fn get(&self, name: &str) -> Option<&ObjectState> {
        self.objects.iter().find(|o| o.name == name)
    }

    pub fn location(&self, name: &str) -> Option<&Location> {
        self.get(name).map(|o| &o.location)
    }

    pub fn execute_skill(&mut self, skill: &Skill) -> Result<(), WorldError> {
        let slot = self
            .objects
            .iter_mut()
            .find(|o| o.name == skill.object())
            .ok_or_else(|| WorldError::UnknownObject(skill.object().to_string()))?;
        match skill {
            Skill::LeaveAlone { .. } => {}
            Skill::Relocate { object, designated } | Skill::Cleanup { object, designated } => {
                let verb = if matches!(skill, Skill::Relocate { .. }) {
                    "relocate"
                } else {
                    "cleanup"
                };
                let target = designated
                    .as_ref()
                    .ok_or_else(|| WorldError::NoDesignated {
                        verb,
                        object: object.clone(),
                    })?;
                slot.location = Location::InReceptacle(target.clone());
            }
        }
        slot.handled = true;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("world state serializes")
    }
}
