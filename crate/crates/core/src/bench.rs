//! Multiple-choice benchmark: questions, scoring, answerability, reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::{complete, ClientError, CompletionRequest, LanguageModel, Role, ScriptKey};
use crate::letter::Letter;
use crate::parsing::{parse_benchmark_options, ParseError};
use crate::pipeline::{AskedQuestion, Mode, ObjectDecision};
use crate::prompts::{PromptError, Registry};
use crate::world::{Angle, PhotoTarget, WorldSpec};

pub mod synthetic;

pub const OPTION_COUNT: usize = 5;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid benchmark question for `{object}`: {message}")]
    Invalid { object: String, message: String },
    #[error("no scoreable questions")]
    NoScoreable,
    #[error("no ground-truth labels for `{0}`")]
    MissingLabels(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchOption {
    pub state: String,
    pub action: String,
}

/// Where the correct labels came from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    #[default]
    SyntheticGroundTruth,
    AnnotatorMajority,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkQuestion {
    pub object: String,
    pub options: Vec<BenchOption>,
    /// Majority label, or both labels of a two-way tie.
    pub correct: BTreeSet<Letter>,
    #[serde(default)]
    pub omitted: bool,
    #[serde(default)]
    pub provenance: Provenance,
}

impl BenchmarkQuestion {
    pub fn check(&self) -> Result<(), BenchError> {
        let invalid = |message: String| BenchError::Invalid {
            object: self.object.clone(),
            message,
        };
        if self.options.len() != OPTION_COUNT {
            return Err(invalid(format!(
                "expected {OPTION_COUNT} options, found {}",
                self.options.len()
            )));
        }
        if let Some(l) = self.correct.iter().find(|l| l.index() >= OPTION_COUNT) {
            return Err(invalid(format!("correct letter ({l}) out of range")));
        }
        if !self.omitted && !(1..=2).contains(&self.correct.len()) {
            return Err(invalid(format!(
                "a scored question needs 1 or 2 correct letters, found {}",
                self.correct.len()
            )));
        }
        Ok(())
    }

    pub fn option(&self, letter: Letter) -> Option<&BenchOption> {
        self.options.get(letter.index())
    }
}

/// Fraction of non-omitted questions whose decision picked a correct
/// letter. A question with no decision counts as wrong.
pub fn score(
    decisions: &[ObjectDecision],
    questions: &[BenchmarkQuestion],
) -> Result<f64, BenchError> {
    let chosen: BTreeMap<&str, Letter> = decisions
        .iter()
        .map(|d| (d.object.as_str(), d.chosen_option.letter))
        .collect();
    let scored: Vec<&BenchmarkQuestion> = questions.iter().filter(|q| !q.omitted).collect();
    if scored.is_empty() {
        return Err(BenchError::NoScoreable);
    }
    let hits = scored
        .iter()
        .filter(|q| {
            chosen
                .get(q.object.as_str())
                .is_some_and(|l| q.correct.contains(l))
        })
        .count();
    Ok(hits as f64 / scored.len() as f64)
}

/// Angle classes, in report column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleClass {
    Scene,
    NonFront,
    Front,
    NonLlm,
    LlmAngle,
}

impl AngleClass {
    pub const ALL: [AngleClass; 5] = [
        AngleClass::Scene,
        AngleClass::NonFront,
        AngleClass::Front,
        AngleClass::NonLlm,
        AngleClass::LlmAngle,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AngleClass::Scene => "Scene",
            AngleClass::NonFront => "Non-front",
            AngleClass::Front => "Front",
            AngleClass::NonLlm => "Non-LLM",
            AngleClass::LlmAngle => "LLM",
        }
    }
}

/// Per-class fraction of questions the oracle can answer. Only questions
/// with a chosen close-up angle count (empty map if there are none); a question that matches no
/// attribute is unanswerable from every angle.
pub fn answerability(world: &WorldSpec, asked: &[AskedQuestion]) -> BTreeMap<AngleClass, f64> {
    let with_angle: Vec<(&AskedQuestion, Angle)> = asked
        .iter()
        .filter_map(|q| q.angle.filter(|a| a.is_close_up()).map(|a| (q, a)))
        .collect();
    if with_angle.is_empty() {
        return BTreeMap::new();
    }
    let mut sums: BTreeMap<AngleClass, f64> = AngleClass::ALL.iter().map(|c| (*c, 0.0)).collect();
    for (q, chosen) in &with_angle {
        let attr = crate::clients::match_attribute(
            world,
            &PhotoTarget::Object(q.object.clone()),
            &q.question,
        )
        .ok();
        let vis = |a: Angle| f64::from(u8::from(attr.is_some_and(|at| at.visible(a))));
        let mean =
            |angles: Vec<Angle>| angles.iter().map(|a| vis(*a)).sum::<f64>() / angles.len() as f64;
        let others = |skip: Angle| {
            Angle::CLOSE_UPS
                .into_iter()
                .filter(|a| *a != skip)
                .collect::<Vec<_>>()
        };
        *sums.get_mut(&AngleClass::Scene).unwrap() += vis(Angle::Scene);
        *sums.get_mut(&AngleClass::LlmAngle).unwrap() += vis(*chosen);
        *sums.get_mut(&AngleClass::Front).unwrap() += vis(Angle::Front);
        *sums.get_mut(&AngleClass::NonLlm).unwrap() += mean(others(*chosen));
        *sums.get_mut(&AngleClass::NonFront).unwrap() += mean(others(Angle::Front));
    }
    let n = with_angle.len() as f64;
    sums.values_mut().for_each(|v| *v /= n);
    sums
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: Mode,
    /// Index 0 is the description-only decision, index i follows iteration i.
    pub per_iteration_accuracy: Vec<f64>,
    pub answerability: BTreeMap<AngleClass, f64>,
    pub n_questions: usize,
}

impl EvalReport {
    pub fn final_accuracy(&self) -> f64 {
        self.per_iteration_accuracy.last().copied().unwrap_or(0.0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Averages several reports of one mode, weighting by question count.
    pub fn merge(mode: Mode, reports: &[EvalReport]) -> EvalReport {
        let total: usize = reports.iter().map(|r| r.n_questions).sum();
        let len = reports
            .iter()
            .map(|r| r.per_iteration_accuracy.len())
            .max()
            .unwrap_or(0);
        let weight = |r: &EvalReport| {
            if total == 0 {
                0.0
            } else {
                r.n_questions as f64 / total as f64
            }
        };
        let per_iteration_accuracy = (0..len)
            .map(|i| {
                reports
                    .iter()
                    .map(|r| {
                        let acc = r
                            .per_iteration_accuracy
                            .get(i)
                            .or(r.per_iteration_accuracy.last());
                        acc.copied().unwrap_or(0.0) * weight(r)
                    })
                    .sum()
            })
            .collect();
        let answerability = AngleClass::ALL
            .iter()
            .filter(|c| reports.iter().any(|r| r.answerability.contains_key(c)))
            .map(|c| {
                let v = reports
                    .iter()
                    .map(|r| r.answerability.get(c).copied().unwrap_or(0.0) * weight(r))
                    .sum();
                (*c, v)
            })
            .collect();
        EvalReport {
            mode,
            per_iteration_accuracy,
            answerability,
            n_questions: total,
        }
    }

    pub fn table_header() -> String {
        let mut s = format!("{:<22}", "Mode");
        for c in AngleClass::ALL {
            s.push_str(&format!(" | {:>9}", c.label()));
        }
        s
    }

    pub fn table_row(&self) -> String {
        let mut s = format!("{:<22}", self.mode.as_str());
        for c in AngleClass::ALL {
            match self.answerability.get(&c) {
                Some(v) => s.push_str(&format!(" | {:>8.1}%", v * 100.0)),
                None => s.push_str(&format!(" | {:>9}", "-")),
            }
        }
        s
    }

    /// Answerability by angle class, then the accuracy curve.
    pub fn to_table(&self) -> String {
        let header = Self::table_header();
        let curve = self
            .per_iteration_accuracy
            .iter()
            .enumerate()
            .map(|(i, a)| format!("  iteration {i}: {:.3}", a))
            .collect::<Vec<_>>()
            .join("\n");
        format!(
            "{header}\n{}\n{}\n\naccuracy ({} questions)\n{curve}\n",
            "-".repeat(header.len()),
            self.table_row(),
            self.n_questions
        )
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_table())
    }
}

/// Two-stage generation (states, then one action per state) for every
/// object of `world`, labelled from `labels`.
pub fn generate_benchmark(
    world: &WorldSpec,
    llm: &dyn LanguageModel,
    labels: &BTreeMap<String, BTreeSet<Letter>>,
) -> Result<Vec<BenchmarkQuestion>, BenchError> {
    let registry = Registry::builtin();
    let objects = world.object_names();
    let (stage1, stage2) = registry.render_benchmark_gen_prompts(&objects)?;
    let states = complete(
        llm,
        &CompletionRequest::new(
            &stage1.text,
            ScriptKey::new(Role::BenchStates, objects.clone(), 0),
        ),
    )?;
    let followup = format!("{}\n{}\n\n{}", stage1.text, states.trim_end(), stage2.text);
    let actions = complete(
        llm,
        &CompletionRequest::new(
            followup,
            ScriptKey::new(Role::BenchActions, objects.clone(), 0),
        ),
    )?;
    objects
        .iter()
        .map(|object| {
            let options = parse_benchmark_options(&states, &actions, object)?;
            let correct = labels
                .get(object)
                .cloned()
                .ok_or_else(|| BenchError::MissingLabels(object.clone()))?;
            let q = BenchmarkQuestion {
                object: object.clone(),
                options,
                correct,
                omitted: false,
                provenance: Provenance::SyntheticGroundTruth,
            };
            q.check()?;
            Ok(q)
        })
        .collect()
}
