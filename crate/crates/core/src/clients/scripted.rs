use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    ClientError, CompletionRequest, LanguageModel, Role, VisionModel, VqaAnswer, VqaRequest,
};
use crate::world::{normalize_ws, Angle, PhotoTarget, WorldSpec};

/// Wildcard for `object` in fixture entries.
pub const ANY_OBJECT: &str = "*";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureFile {
    #[serde(default)]
    pub responses: Vec<FixtureEntry>,
    #[serde(default)]
    pub vqa: Vec<VqaFixture>,
}

/// One scripted completion.
///
/// Matching order for a request: an entry whose `prompt_sha256` equals the
/// prompt hash; then an entry whose `objects` equals the full subject list;
/// then, per subject, `object` with the exact iteration, `object` with no
/// iteration, and finally `object = "*"`. Per-subject texts are joined by a
/// blank line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureEntry {
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objects: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iteration: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cases: Vec<FixtureCase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

/// Conditional response: used when the prompt contains `contains`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureCase {
    pub contains: String,
    pub text: String,
}

impl FixtureEntry {
    /// An entry for `role` with no selectors and no text.
    pub fn new(role: Role) -> Self {
        FixtureEntry {
            role,
            object: None,
            objects: None,
            iteration: None,
            prompt_sha256: None,
            cases: Vec::new(),
            text: None,
        }
    }

    pub fn simple(
        role: Role,
        object: &str,
        iteration: Option<u32>,
        text: impl Into<String>,
    ) -> Self {
        FixtureEntry {
            role,
            object: Some(object.to_string()),
            iteration,
            text: Some(text.into()),
            ..FixtureEntry::new(role)
        }
    }

    fn resolve(&self, prompt: &str) -> Option<&str> {
        self.cases
            .iter()
            .find(|c| prompt.contains(&c.contains))
            .map(|c| c.text.as_str())
            .or(self.text.as_deref())
    }
}

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

impl FixtureFile {
    pub fn load(path: &Path) -> Result<Self, ClientError> {
        let err = |message: String| ClientError::FixtureFile {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fixtures serialize")
    }

    pub fn extend(&mut self, other: FixtureFile) {
        self.responses.extend(other.responses);
        self.vqa.extend(other.vqa);
    }
}

/// Deterministic LLM that answers from fixtures and never mutates them.
#[derive(Debug, Clone, Default)]
pub struct ScriptedLlm {
    fixtures: FixtureFile,
}

impl ScriptedLlm {
    pub fn new(fixtures: FixtureFile) -> Self {
        ScriptedLlm { fixtures }
    }

    pub fn from_path(path: &Path) -> Result<Self, ClientError> {
        FixtureFile::load(path).map(Self::new)
    }

    pub fn fixtures(&self) -> &FixtureFile {
        &self.fixtures
    }

    fn by_role(&self, role: Role) -> impl Iterator<Item = &FixtureEntry> {
        self.fixtures
            .responses
            .iter()
            .filter(move |e| e.role == role)
    }

    fn lookup_subject(
        &self,
        role: Role,
        subject: &str,
        iteration: u32,
        prompt: &str,
    ) -> Option<&str> {
        let exact = self
            .by_role(role)
            .find(|e| e.object.as_deref() == Some(subject) && e.iteration == Some(iteration));
        let any_iter = || {
            self.by_role(role)
                .find(|e| e.object.as_deref() == Some(subject) && e.iteration.is_none())
        };
        let any_obj = || {
            self.by_role(role).find(|e| {
                e.object.as_deref() == Some(ANY_OBJECT)
                    && e.iteration.is_none_or(|i| i == iteration)
            })
        };
        exact
            .or_else(any_iter)
            .or_else(any_obj)
            .and_then(|e| e.resolve(prompt))
    }
}

impl LanguageModel for ScriptedLlm {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        let key = &request.key;
        let prompt = request.prompt.as_str();

        let hash = prompt_hash(prompt);
        if let Some(text) = self
            .by_role(key.role)
            .find(|e| e.prompt_sha256.as_deref() == Some(hash.as_str()))
            .and_then(|e| e.resolve(prompt))
        {
            return Ok(text.to_string());
        }

        let group = |want_iter: Option<u32>| {
            self.by_role(key.role).find(|e| {
                e.prompt_sha256.is_none()
                    && e.objects.as_ref() == Some(&key.subjects)
                    && e.iteration == want_iter
            })
        };
        if let Some(text) = group(Some(key.iteration))
            .or_else(|| group(None))
            .and_then(|e| e.resolve(prompt))
        {
            return Ok(text.to_string());
        }

        if key.subjects.is_empty() {
            return Err(ClientError::MissingFixture(key.to_string()));
        }
        let mut parts = Vec::with_capacity(key.subjects.len());
        for subject in &key.subjects {
            let text = self
                .lookup_subject(key.role, subject, key.iteration, prompt)
                .ok_or_else(|| {
                    ClientError::MissingFixture(format!(
                        "({}, {subject:?}, {})",
                        key.role, key.iteration
                    ))
                })?;
            parts.push(text.trim_end().to_string());
        }
        Ok(parts.join("\n\n"))
    }

    fn name(&self) -> &str {
        "scripted"
    }
}

/// Scripted VQA answer. `scores` are (yes, no, unknown) probabilities and are
/// ranked like a likelihood-scoring VLM; `answer` is used when absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VqaFixture {
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle: Option<Angle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<VqaAnswer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Default)]
pub struct ScriptedVlm {
    fixtures: Vec<VqaFixture>,
}

impl ScriptedVlm {
    pub fn new(fixtures: Vec<VqaFixture>) -> Self {
        ScriptedVlm { fixtures }
    }
}

impl VisionModel for ScriptedVlm {
    fn answer(
        &self,
        request: &VqaRequest,
        _world: Option<&WorldSpec>,
    ) -> Result<VqaAnswer, ClientError> {
        let question = normalize_ws(&request.question);
        let target = match &request.image.target {
            PhotoTarget::Scene => "scene".to_string(),
            PhotoTarget::Object(o) => o.clone(),
        };
        let hit = self.fixtures.iter().find(|f| {
            normalize_ws(&f.question) == question
                && f.target.as_ref().is_none_or(|t| *t == target)
                && f.angle.is_none_or(|a| a == request.image.angle)
        });
        match hit {
            Some(VqaFixture {
                scores: Some(s), ..
            }) => Ok(VqaAnswer::rank(*s)),
            Some(VqaFixture {
                answer: Some(a), ..
            }) => Ok(*a),
            _ => Err(ClientError::MissingFixture(format!(
                "vqa ({target}, {}, {:?})",
                request.image.angle, request.question
            ))),
        }
    }

    fn name(&self) -> &str {
        "scripted"
    }
}
