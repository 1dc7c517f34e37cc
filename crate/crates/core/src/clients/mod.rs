//! LLM and VLM backends behind one interface each.
//!
//! Every backend is `Send + Sync`; the pipeline may fan requests out across
//! objects within an iteration.

mod http;
mod oracle;
mod scripted;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{ImageRef, WorldSpec};

pub use http::{HttpConfig, HttpLlm, HttpVlm, RetryPolicy};
pub(crate) use oracle::match_attribute;
pub use oracle::{HumanVlm, OracleVlm};
pub use scripted::{
    prompt_hash, FixtureCase, FixtureEntry, FixtureFile, ScriptedLlm, ScriptedVlm, VqaFixture,
    ANY_OBJECT,
};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("invalid request: {0}")]
    Precondition(String),
    #[error("no scripted fixture for {0}")]
    MissingFixture(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("HTTP {status} from {url}: {body}")]
    Status {
        status: u16,
        url: String,
        body: String,
    },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("oracle cannot match question `{question}` against {target}")]
    UnmatchedQuestion { question: String, target: String },
    #[error("oracle backend requires a world spec")]
    NoWorld,
    #[error("fixture file {path}: {message}")]
    FixtureFile { path: String, message: String },
    #[error("human oracle: {0}")]
    Io(#[from] std::io::Error),
}

/// What a completion is for. Scripted fixtures are keyed on this.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    QuestionGen,
    BaselineQuestionGen,
    AngleSelect,
    Decide,
    Codegen,
    BenchStates,
    BenchActions,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::QuestionGen => "question_gen",
            Role::BaselineQuestionGen => "baseline_question_gen",
            Role::AngleSelect => "angle_select",
            Role::Decide => "decide",
            Role::Codegen => "codegen",
            Role::BenchStates => "bench_states",
            Role::BenchActions => "bench_actions",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Stable identity of a request: which role, about which objects, in which
/// iteration.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScriptKey {
    pub role: Role,
    pub subjects: Vec<String>,
    pub iteration: u32,
}

impl ScriptKey {
    pub fn new(role: Role, subjects: Vec<String>, iteration: u32) -> Self {
        ScriptKey {
            role,
            subjects,
            iteration,
        }
    }

    pub fn single(role: Role, subject: &str, iteration: u32) -> Self {
        Self::new(role, vec![subject.to_string()], iteration)
    }
}

impl fmt::Display for ScriptKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {:?}, {})",
            self.role, self.subjects, self.iteration
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f32,
    pub max_tokens: u32,
    pub model_tag: String,
    pub key: ScriptKey,
}

impl CompletionRequest {
    pub const DEFAULT_MAX_TOKENS: u32 = 512;

    pub fn new(prompt: impl Into<String>, key: ScriptKey) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            temperature: 0.0,
            max_tokens: Self::DEFAULT_MAX_TOKENS,
            model_tag: String::new(),
            key,
        }
    }

    pub fn check(&self) -> Result<(), ClientError> {
        if self.prompt.trim().is_empty() {
            return Err(ClientError::Precondition("prompt must be non-empty".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(ClientError::Precondition(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(ClientError::Precondition(
                "max_tokens must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VqaRequest {
    pub image: ImageRef,
    pub question: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum VqaAnswer {
    Yes,
    No,
    Unknown,
}

impl VqaAnswer {
    pub const ALL: [VqaAnswer; 3] = [VqaAnswer::Yes, VqaAnswer::No, VqaAnswer::Unknown];

    pub fn from_truth(truth: bool) -> Self {
        if truth {
            VqaAnswer::Yes
        } else {
            VqaAnswer::No
        }
    }

    /// The form recorded in the context: `Yes`, `No` or `Unknown`.
    pub fn as_context_str(self) -> &'static str {
        match self {
            VqaAnswer::Yes => "Yes",
            VqaAnswer::No => "No",
            VqaAnswer::Unknown => "Unknown",
        }
    }

    pub fn is_known(self) -> bool {
        self != VqaAnswer::Unknown
    }

    /// Picks the highest-scoring answer. Ties resolve in `ALL` order.
    pub fn rank(scores: [f64; 3]) -> VqaAnswer {
        let mut best = 0;
        for i in 1..3 {
            if scores[i] > scores[best] {
                best = i;
            }
        }
        VqaAnswer::ALL[best]
    }
}

impl fmt::Display for VqaAnswer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_context_str())
    }
}

pub trait LanguageModel: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError>;

    fn name(&self) -> &str;
}

pub trait VisionModel: Send + Sync {
    fn answer(
        &self,
        request: &VqaRequest,
        world: Option<&WorldSpec>,
    ) -> Result<VqaAnswer, ClientError>;

    fn name(&self) -> &str;
}

pub fn complete(
    backend: &dyn LanguageModel,
    request: &CompletionRequest,
) -> Result<String, ClientError> {
    request.check()?;
    backend.complete(request)
}

pub fn answer_vqa(
    backend: &dyn VisionModel,
    request: &VqaRequest,
    world: Option<&WorldSpec>,
) -> Result<VqaAnswer, ClientError> {
    if request.question.trim().is_empty() {
        return Err(ClientError::Precondition(
            "question must be non-empty".into(),
        ));
    }
    backend.answer(request, world)
}

/// Maps free text to a yes/no/unknown answer by the first keyword found.
/// "Cannot answer" counts as unknown.
pub fn parse_vqa_text(text: &str) -> Option<VqaAnswer> {
    let lower = text.to_ascii_lowercase();
    let mut best: Option<(usize, VqaAnswer)> = None;
    let mut consider = |pos: Option<usize>, ans: VqaAnswer| {
        if let Some(p) = pos {
            if best.is_none_or(|(b, _)| p < b) {
                best = Some((p, ans));
            }
        }
    };
    consider(find_word(&lower, "yes"), VqaAnswer::Yes);
    consider(find_word(&lower, "no"), VqaAnswer::No);
    consider(find_word(&lower, "unknown"), VqaAnswer::Unknown);
    consider(lower.find("cannot answer"), VqaAnswer::Unknown);
    best.map(|(_, a)| a)
}

fn find_word(haystack: &str, word: &str) -> Option<usize> {
    let bytes = haystack.as_bytes();
    let mut start = 0;
    while let Some(off) = haystack[start..].find(word) {
        let pos = start + off;
        let end = pos + word.len();
        let before_ok = pos == 0 || !bytes[pos - 1].is_ascii_alphanumeric();
        let after_ok = end == bytes.len() || !bytes[end].is_ascii_alphanumeric();
        if before_ok && after_ok {
            return Some(pos);
        }
        start = end;
    }
    None
}
