//! The ask / look / answer / decide loop, plus planning and execution.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::bench::{self, BenchError, BenchmarkQuestion, EvalReport};
use crate::clients::{
    answer_vqa, complete, prompt_hash, ClientError, CompletionRequest, FixtureEntry, FixtureFile,
    LanguageModel, Role, ScriptKey, VisionModel, VqaAnswer, VqaFixture, VqaRequest,
};
use crate::dsl::{self, ProgramEnv, TraceEvent, ValidationReport};
use crate::parsing::{self, ChoiceSelection, ParseError};
use crate::prompts::{PromptError, Registry};
use crate::world::{Angle, PhotoTarget, WorldError, WorldSpec, WorldState};

/// Appended once when an angle or option reply cannot be parsed.
pub const RETRY_NUDGE: &str = "Answer with a single option letter.";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("{role} reply: {source}")]
    Parse {
        role: Role,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Bench(#[from] BenchError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    OursLlm,
    OursFront,
    BaselineQuestions,
    NoActivePerception,
    NoQuestions,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::OursLlm,
        Mode::OursFront,
        Mode::BaselineQuestions,
        Mode::NoActivePerception,
        Mode::NoQuestions,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::OursLlm => "ours_llm",
            Mode::OursFront => "ours_front",
            Mode::BaselineQuestions => "baseline_questions",
            Mode::NoActivePerception => "no_active_perception",
            Mode::NoQuestions => "no_questions",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| {
                let names: Vec<&str> = Mode::ALL.iter().map(|m| m.as_str()).collect();
                format!("unknown mode `{s}` (expected one of: {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mode: Mode,
    iterations: u32,
    #[serde(default)]
    pub preference_map: BTreeMap<String, String>,
}

impl PipelineConfig {
    pub const DEFAULT_ITERATIONS: u32 = 5;

    pub fn new(mode: Mode, iterations: u32) -> Self {
        PipelineConfig {
            mode,
            iterations,
            preference_map: BTreeMap::new(),
        }
    }

    pub fn with_preferences(mut self, preferences: BTreeMap<String, String>) -> Self {
        self.preference_map = preferences;
        self
    }

    /// `no_questions` never iterates.
    pub fn iterations(&self) -> u32 {
        if self.mode == Mode::NoQuestions {
            0
        } else {
            self.iterations
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextEntry {
    pub iteration: u32,
    pub object: String,
    pub question: String,
    /// "Yes", "No" or "Unknown".
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Context {
    pub surface: String,
    pub initial_description: String,
    pub entries: Vec<ContextEntry>,
    pub iterations_completed: u32,
}

impl Context {
    pub fn entries_for<'a>(
        &'a self,
        object: &'a str,
    ) -> impl Iterator<Item = &'a ContextEntry> + 'a {
        self.entries.iter().filter(move |e| e.object == object)
    }

    fn history(&self) -> Vec<(String, String)> {
        self.entries
            .iter()
            .map(|e| (e.question.clone(), e.answer.clone()))
            .collect()
    }
}

/// A question put to the VLM, with the view it was answered from. `angle`
/// is `None` when the answer came from the dedup cache.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AskedQuestion {
    pub iteration: u32,
    pub object: String,
    pub question: String,
    pub angle: Option<Angle>,
    pub answer: VqaAnswer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectDecision {
    pub object: String,
    pub chosen_option: ChoiceSelection,
    pub action_text: String,
    /// Transcript sequence numbers of the calls behind this decision.
    pub transcript: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Prompt,
    Completion,
    Vqa,
    Decision,
    Skill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEvent {
    pub seq: u64,
    pub ts: String,
    pub kind: EventKind,
    pub payload: Value,
}

/// Append-only event log. Timestamps are fixed when `pinned_ts` is set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub events: Vec<TranscriptEvent>,
    #[serde(skip)]
    pinned_ts: Option<String>,
}

type Pending = Vec<(EventKind, Value)>;

impl Transcript {
    pub fn new(pinned_ts: Option<String>) -> Self {
        Transcript {
            events: Vec::new(),
            pinned_ts,
        }
    }

    fn now(&self) -> String {
        self.pinned_ts.clone().unwrap_or_else(|| {
            chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
        })
    }

    pub fn push(&mut self, kind: EventKind, payload: Value) -> u64 {
        let seq = self.events.len() as u64;
        let ts = self.now();
        self.events.push(TranscriptEvent {
            seq,
            ts,
            kind,
            payload,
        });
        seq
    }

    fn append(&mut self, pending: Pending) -> Vec<u64> {
        pending.into_iter().map(|(k, p)| self.push(k, p)).collect()
    }

    pub fn to_jsonl(&self) -> String {
        self.events
            .iter()
            .map(|e| serde_json::to_string(e).expect("event serializes") + "\n")
            .collect()
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let events = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Transcript {
            events,
            pinned_ts: None,
        })
    }

    /// Turns recorded completions and VQA answers into fixtures keyed by
    /// prompt hash, so a run can be replayed offline.
    pub fn to_fixtures(&self) -> FixtureFile {
        let mut out = FixtureFile::default();
        for e in &self.events {
            let p = &e.payload;
            match e.kind {
                EventKind::Completion => {
                    let (Some(role), Some(hash), Some(text)) = (
                        p.get("role")
                            .and_then(|r| serde_json::from_value::<Role>(r.clone()).ok()),
                        p["prompt_sha256"].as_str(),
                        p["text"].as_str(),
                    ) else {
                        continue;
                    };
                    if !out
                        .responses
                        .iter()
                        .any(|r| r.prompt_sha256.as_deref() == Some(hash))
                    {
                        out.responses.push(FixtureEntry {
                            role,
                            prompt_sha256: Some(hash.to_string()),
                            text: Some(text.to_string()),
                            ..FixtureEntry::new(role)
                        });
                    }
                }
                EventKind::Vqa if p["cached"] != json!(true) => {
                    let fixture = VqaFixture {
                        question: p["question"].as_str().unwrap_or_default().to_string(),
                        target: p["target"].as_str().map(str::to_string),
                        angle: p["angle"].as_str().and_then(|a| a.parse().ok()),
                        answer: serde_json::from_value(p["answer"].clone()).ok(),
                        scores: None,
                    };
                    if !out.vqa.contains(&fixture) {
                        out.vqa.push(fixture);
                    }
                }
                _ => {}
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub object: String,
    pub instruction: String,
    pub program: Option<String>,
    pub validation: Option<ValidationReport>,
    /// Why the program was skipped, if it was.
    pub error: Option<String>,
    pub trace: Vec<TraceEvent>,
}

impl PlanRecord {
    pub fn executed(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanReport {
    pub records: Vec<PlanRecord>,
}

impl PlanReport {
    pub fn all_executed(&self) -> bool {
        self.records.iter().all(PlanRecord::executed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub context: Context,
    pub asked: Vec<AskedQuestion>,
    pub decisions: Vec<ObjectDecision>,
    /// Accuracy after the description and after each iteration; empty when
    /// the world has no scoreable questions.
    pub accuracy_curve: Vec<f64>,
}

struct ObjectStep {
    entry: ContextEntry,
    asked: AskedQuestion,
    events: Pending,
}

pub struct Pipeline<'a> {
    world: &'a WorldSpec,
    llm: &'a dyn LanguageModel,
    vlm: &'a dyn VisionModel,
    registry: &'a Registry,
    config: PipelineConfig,
    transcript: Transcript,
    /// Known answers by (object, question).
    cache: BTreeMap<(String, String), VqaAnswer>,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        world: &'a WorldSpec,
        llm: &'a dyn LanguageModel,
        vlm: &'a dyn VisionModel,
        config: PipelineConfig,
    ) -> Self {
        Pipeline {
            world,
            llm,
            vlm,
            registry: Registry::builtin(),
            config,
            transcript: Transcript::default(),
            cache: BTreeMap::new(),
        }
    }

    pub fn with_registry(mut self, registry: &'a Registry) -> Self {
        self.registry = registry;
        self
    }

    pub fn with_pinned_timestamp(mut self, ts: Option<String>) -> Self {
        self.transcript = Transcript::new(ts);
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    fn objects(&self) -> Vec<String> {
        self.world.object_names()
    }

    pub fn initial_context(&self) -> Result<Context, PipelineError> {
        Ok(Context {
            surface: self.world.surface.clone(),
            initial_description: initial_description(self.registry, &self.objects())?,
            entries: Vec::new(),
            iterations_completed: 0,
        })
    }

    fn ask(
        &self,
        events: &mut Pending,
        prompt: &str,
        key: ScriptKey,
    ) -> Result<String, PipelineError> {
        let hash = prompt_hash(prompt);
        events.push((
            EventKind::Prompt,
            json!({"role": key.role, "subjects": key.subjects, "iteration": key.iteration,
                   "prompt_sha256": hash, "text": prompt}),
        ));
        let text = complete(self.llm, &CompletionRequest::new(prompt, key.clone()))?;
        events.push((
            EventKind::Completion,
            json!({"role": key.role, "subjects": key.subjects, "iteration": key.iteration,
                   "prompt_sha256": hash, "text": text}),
        ));
        Ok(text)
    }

    /// One re-ask with [`RETRY_NUDGE`] on a parse failure.
    fn ask_parsed<T>(
        &self,
        events: &mut Pending,
        prompt: &str,
        key: ScriptKey,
        parse: impl Fn(&str) -> Result<T, ParseError>,
    ) -> Result<T, PipelineError> {
        let role = key.role;
        let first = self.ask(events, prompt, key.clone())?;
        match parse(&first) {
            Ok(v) => Ok(v),
            Err(_) => {
                let retry = format!("{prompt}\n\n{RETRY_NUDGE}");
                let second = self.ask(events, &retry, key)?;
                parse(&second).map_err(|source| PipelineError::Parse { role, source })
            }
        }
    }

    fn look(
        &self,
        events: &mut Pending,
        object: &str,
        question: &str,
        iteration: u32,
    ) -> Result<(Option<Angle>, VqaAnswer), PipelineError> {
        if let Some(a) = self.cache.get(&(object.to_string(), question.to_string())) {
            events.push((
                EventKind::Vqa,
                json!({"object": object, "question": question, "iteration": iteration,
                       "answer": a, "cached": true}),
            ));
            return Ok((None, *a));
        }
        let (target, angle) = match self.config.mode {
            Mode::NoActivePerception => (PhotoTarget::Scene, Angle::Scene),
            Mode::OursFront => (PhotoTarget::Object(object.to_string()), Angle::Front),
            _ => {
                let prompt = self
                    .registry
                    .render_angle_prompt(&self.objects(), question)?;
                let key = ScriptKey::single(Role::AngleSelect, object, iteration);
                let angle =
                    self.ask_parsed(events, &prompt.text, key, parsing::parse_angle_choice)?;
                (PhotoTarget::Object(object.to_string()), angle)
            }
        };
        let (image, _) = self.world.take_photo(&target, angle, iteration)?;
        let request = VqaRequest {
            image,
            question: question.to_string(),
        };
        let answer = answer_vqa(self.vlm, &request, Some(self.world))?;
        events.push((
            EventKind::Vqa,
            json!({"object": object, "question": question, "iteration": iteration,
                   "target": target.to_string(), "angle": angle, "answer": answer, "cached": false}),
        ));
        Ok((Some(angle), answer))
    }

    /// Runs one round of questions. Per-object work runs in parallel and is
    /// merged in declared object order.
    pub fn run_iteration(
        &mut self,
        context: Context,
        iteration: u32,
    ) -> Result<Context, PipelineError> {
        Ok(self.run_iteration_detailed(context, iteration)?.0)
    }

    fn run_iteration_detailed(
        &mut self,
        mut context: Context,
        iteration: u32,
    ) -> Result<(Context, Vec<AskedQuestion>), PipelineError> {
        if self.config.mode == Mode::NoQuestions {
            return Ok((context, Vec::new()));
        }
        let objects = self.objects();
        let mut events = Pending::new();
        let (role, prompt) = match self.config.mode {
            Mode::BaselineQuestions => (
                Role::BaselineQuestionGen,
                self.registry.render_baseline_question_prompt(&objects)?,
            ),
            _ => (
                Role::QuestionGen,
                self.registry
                    .render_question_prompt_with_history(&objects, &context.history())?,
            ),
        };
        let reply = self.ask(
            &mut events,
            &prompt.text,
            ScriptKey::new(role, objects.clone(), iteration),
        )?;
        let set = parsing::parse_question_block(&reply, &objects)
            .map_err(|source| PipelineError::Parse { role, source })?;
        self.transcript.append(events);

        let this = &*self;
        let steps: Vec<Result<ObjectStep, PipelineError>> = set
            .questions
            .par_iter()
            .map(|q| {
                let mut events = Pending::new();
                let (angle, answer) = this.look(&mut events, &q.object, &q.question, iteration)?;
                Ok(ObjectStep {
                    entry: ContextEntry {
                        iteration,
                        object: q.object.clone(),
                        question: q.question.clone(),
                        answer: answer.as_context_str().to_string(),
                    },
                    asked: AskedQuestion {
                        iteration,
                        object: q.object.clone(),
                        question: q.question.clone(),
                        angle,
                        answer,
                    },
                    events,
                })
            })
            .collect();

        let mut asked = Vec::with_capacity(steps.len());
        for step in steps {
            let step = step?;
            self.transcript.append(step.events);
            if step.asked.answer.is_known() {
                self.cache.insert(
                    (step.asked.object.clone(), step.asked.question.clone()),
                    step.asked.answer,
                );
            }
            context.entries.push(step.entry);
            asked.push(step.asked);
        }
        context.iterations_completed = iteration + 1;
        Ok((context, asked))
    }

    fn decide_pending(
        &self,
        context: &Context,
        question: &BenchmarkQuestion,
    ) -> Result<(ObjectDecision, Pending), PipelineError> {
        let mut events = Pending::new();
        let preference = self
            .config
            .preference_map
            .get(&question.object)
            .map(String::as_str);
        let prompt = self
            .registry
            .render_action_prompt(context, question, preference)?;
        let key = ScriptKey::single(Role::Decide, &question.object, context.iterations_completed);
        let n = question.options.len();
        let choice = self.ask_parsed(&mut events, &prompt.text, key, |t| {
            parsing::parse_choice(t, n)
        })?;
        let action_text = question
            .option(choice.letter)
            .map(|o| o.action.clone())
            .unwrap_or_default();
        events.push((
            EventKind::Decision,
            json!({"object": question.object, "iteration": context.iterations_completed,
                   "letter": choice.letter, "action_text": action_text}),
        ));
        Ok((
            ObjectDecision {
                object: question.object.clone(),
                chosen_option: choice,
                action_text,
                transcript: Vec::new(),
            },
            events,
        ))
    }

    pub fn decide(
        &mut self,
        context: &Context,
        question: &BenchmarkQuestion,
    ) -> Result<ObjectDecision, PipelineError> {
        let (mut d, events) = self.decide_pending(context, question)?;
        d.transcript = self.transcript.append(events);
        Ok(d)
    }

    /// Decides every benchmark question of the world.
    pub fn decide_all(&mut self, context: &Context) -> Result<Vec<ObjectDecision>, PipelineError> {
        let this = &*self;
        let pending: Vec<_> = self
            .world
            .benchmark
            .par_iter()
            .map(|q| this.decide_pending(context, q))
            .collect();
        let mut out = Vec::with_capacity(pending.len());
        for p in pending {
            let (mut d, events) = p?;
            d.transcript = self.transcript.append(events);
            out.push(d);
        }
        Ok(out)
    }

    /// Generates, checks and runs a program per decision, in order. Programs
    /// that fail to parse or validate are recorded and skipped.
    pub fn plan_and_execute(
        &mut self,
        decisions: &[ObjectDecision],
        state: &mut WorldState,
    ) -> Result<PlanReport, PipelineError> {
        let objects = self.objects();
        let maps = self.world.receptacle_maps();
        let env = ProgramEnv::from_world(self.world);
        let mut report = PlanReport::default();
        for d in decisions {
            let mut record = PlanRecord {
                object: d.object.clone(),
                instruction: d.action_text.clone(),
                program: None,
                validation: None,
                error: None,
                trace: Vec::new(),
            };
            let prompt = self
                .registry
                .render_codegen_prompt(&d.action_text, &objects, &maps)?;
            let mut events = Pending::new();
            let reply = self.ask(
                &mut events,
                &prompt.text,
                ScriptKey::single(Role::Codegen, &d.object, 0),
            )?;
            self.transcript.append(events);

            let program = match parsing::extract_program(&reply)
                .map_err(|e| e.to_string())
                .and_then(|body| dsl::parse_program(&body).map_err(|e| e.to_string()))
            {
                Ok(p) => p,
                Err(e) => {
                    record.error = Some(e);
                    report.records.push(record);
                    continue;
                }
            };
            record.program = Some(program.print());
            let validation = dsl::validate(&program, &env);
            record.validation = Some(validation.clone());
            if !validation.ok {
                record.error = Some("program failed validation".into());
                report.records.push(record);
                continue;
            }
            match dsl::run_program(&program, &env, state) {
                Ok(trace) => {
                    for ev in &trace.events {
                        self.transcript.push(
                            EventKind::Skill,
                            serde_json::to_value(ev).expect("trace event serializes"),
                        );
                    }
                    record.trace = trace.events;
                }
                Err(e) => record.error = Some(e.to_string()),
            }
            report.records.push(record);
        }
        Ok(report)
    }

    fn score_checkpoint(&self, decisions: &[ObjectDecision], curve: &mut Vec<f64>) {
        if let Ok(acc) = bench::score(decisions, &self.world.benchmark) {
            curve.push(acc);
        }
    }

    /// Description, then the configured number of iterations, deciding the
    /// benchmark after each step.
    pub fn run(&mut self) -> Result<RunOutput, PipelineError> {
        let mut context = self.initial_context()?;
        let mut asked = Vec::new();
        let mut curve = Vec::new();
        let mut decisions = self.decide_all(&context)?;
        self.score_checkpoint(&decisions, &mut curve);
        for i in 0..self.config.iterations() {
            let (next, round) = self.run_iteration_detailed(context, i)?;
            context = next;
            asked.extend(round);
            decisions = self.decide_all(&context)?;
            self.score_checkpoint(&decisions, &mut curve);
        }
        Ok(RunOutput {
            context,
            asked,
            decisions,
            accuracy_curve: curve,
        })
    }

    pub fn report(&self, output: &RunOutput) -> EvalReport {
        EvalReport {
            mode: self.config.mode,
            per_iteration_accuracy: output.accuracy_curve.clone(),
            answerability: bench::answerability(self.world, &output.asked),
            n_questions: self.world.benchmark.iter().filter(|q| !q.omitted).count(),
        }
    }
}

/// "These are the objects on the desk: `a`, `b`." from ground-truth names.
pub fn initial_description(registry: &Registry, objects: &[String]) -> Result<String, PromptError> {
    Ok(registry.render_initial_description(objects)?.text)
}
