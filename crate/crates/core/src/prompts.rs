//! Prompt templates and the renderers built on them.
//!
//! Templates are plain text with `{{slot}}` markers. The shipped set is
//! compiled in; [`Registry::from_dir`] swaps in edited copies for
//! experimentation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::{BenchOption, BenchmarkQuestion};
use crate::pipeline::Context;
use crate::world::ReceptacleMap;

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("template `{template}` is missing slot `{slot}`")]
    MissingSlot { template: String, slot: String },
    #[error("value for slot `{slot}` contains a slot marker")]
    MarkerInValue { slot: String },
    #[error("object list must be non-empty")]
    NoObjects,
    #[error("object `{0}` has no receptacle mapping")]
    NoReceptacles(String),
    #[error("override for `{template}` declares slots {found:?}, expected {expected:?}")]
    SlotMismatch {
        template: String,
        expected: BTreeSet<String>,
        found: BTreeSet<String>,
    },
    #[error("cannot read template override {path}: {message}")]
    Io { path: String, message: String },
}

macro_rules! builtin_templates {
    ($($id:literal),* $(,)?) => {
        &[$(($id, include_str!(concat!("../templates/", $id, ".txt")))),*]
    };
}

const BUILTIN: &[(&str, &str)] = builtin_templates![
    "initial_description",
    "question_instruction",
    "question_example",
    "question_history",
    "baseline_question",
    "angle_examples",
    "angle_query",
    "action_context",
    "action_question",
    "action_preference",
    "action_answer",
    "benchmark_states",
    "benchmark_actions",
    "codegen_api",
    "codegen_icl_instruction",
    "codegen_continuation",
    "vqa",
];

fn slot_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{([a-z_]+)\}\}").expect("valid regex"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub id: String,
    pub body: String,
    pub required_slots: BTreeSet<String>,
}

impl Template {
    pub fn new(id: &str, raw: &str) -> Self {
        let body = raw.replace("\r\n", "\n");
        let body = body.strip_suffix('\n').unwrap_or(&body).to_string();
        let required_slots = slot_pattern()
            .captures_iter(&body)
            .map(|c| c[1].to_string())
            .collect();
        Template {
            id: id.to_string(),
            body,
            required_slots,
        }
    }

    pub fn render(&self, slots: &[(&str, &str)]) -> Result<String, PromptError> {
        for (name, value) in slots {
            if slot_pattern().is_match(value) {
                return Err(PromptError::MarkerInValue {
                    slot: name.to_string(),
                });
            }
        }
        let lookup: BTreeMap<&str, &str> = slots.iter().copied().collect();
        if let Some(missing) = self
            .required_slots
            .iter()
            .find(|s| !lookup.contains_key(s.as_str()))
        {
            return Err(PromptError::MissingSlot {
                template: self.id.clone(),
                slot: missing.clone(),
            });
        }
        Ok(slot_pattern()
            .replace_all(&self.body, |c: &regex::Captures| lookup[&c[1]].to_string())
            .into_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub template_id: String,
    pub text: String,
    pub slot_values: BTreeMap<String, String>,
}

impl RenderedPrompt {
    fn new(template_id: &str, text: String, slots: &[(&str, &str)]) -> Self {
        RenderedPrompt {
            template_id: template_id.to_string(),
            text,
            slot_values: slots
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

/// Immutable set of templates keyed by id.
#[derive(Debug, Clone)]
pub struct Registry {
    templates: BTreeMap<String, Template>,
}

impl Registry {
    pub fn builtin() -> &'static Registry {
        static REG: OnceLock<Registry> = OnceLock::new();
        REG.get_or_init(|| Registry {
            templates: BUILTIN
                .iter()
                .map(|(id, raw)| (id.to_string(), Template::new(id, raw)))
                .collect(),
        })
    }

    /// Loads `<id>.txt` overrides from `dir`; missing files fall back to the
    /// built-in text. An override must keep the built-in slot set.
    pub fn from_dir(dir: &Path) -> Result<Registry, PromptError> {
        let mut templates = Registry::builtin().templates.clone();
        for (id, builtin) in templates.iter_mut() {
            let path = dir.join(format!("{id}.txt"));
            if !path.exists() {
                continue;
            }
            let raw = std::fs::read_to_string(&path).map_err(|e| PromptError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            let t = Template::new(id, &raw);
            if t.required_slots != builtin.required_slots {
                return Err(PromptError::SlotMismatch {
                    template: id.clone(),
                    expected: builtin.required_slots.clone(),
                    found: t.required_slots,
                });
            }
            *builtin = t;
        }
        Ok(Registry { templates })
    }

    pub fn template(&self, id: &str) -> Result<&Template, PromptError> {
        self.templates
            .get(id)
            .ok_or_else(|| PromptError::UnknownTemplate(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn render(&self, id: &str, slots: &[(&str, &str)]) -> Result<RenderedPrompt, PromptError> {
        let text = self.template(id)?.render(slots)?;
        Ok(RenderedPrompt::new(id, text, slots))
    }

    fn text(&self, id: &str, slots: &[(&str, &str)]) -> Result<String, PromptError> {
        self.template(id)?.render(slots)
    }

    pub fn render_initial_description(
        &self,
        objects: &[String],
    ) -> Result<RenderedPrompt, PromptError> {
        let list = object_list(objects)?;
        self.render("initial_description", &[("objects", &list)])
    }

    pub fn render_question_prompt(
        &self,
        objects: &[String],
    ) -> Result<RenderedPrompt, PromptError> {
        self.render_question_prompt_with_history(objects, &[])
    }

    /// The one-shot example, then the live instruction. Earlier questions and
    /// their answers are listed after the instruction when present.
    pub fn render_question_prompt_with_history(
        &self,
        objects: &[String],
        history: &[(String, String)],
    ) -> Result<RenderedPrompt, PromptError> {
        let description = self.render_initial_description(objects)?.text;
        let example = self.text("question_example", &[])?;
        let instruction = self.text("question_instruction", &[("description", &description)])?;
        let mut text = format!("{example}\n\n{instruction}");
        let history_text = history
            .iter()
            .map(|(q, a)| format!("{q} {a}"))
            .collect::<Vec<_>>()
            .join("\n");
        if !history.is_empty() {
            text.push_str("\n\n");
            text.push_str(&self.text("question_history", &[("history", &history_text)])?);
        }
        Ok(RenderedPrompt::new(
            "question_prompt",
            text,
            &[("description", &description), ("history", &history_text)],
        ))
    }

    pub fn render_baseline_question_prompt(
        &self,
        objects: &[String],
    ) -> Result<RenderedPrompt, PromptError> {
        let description = self.render_initial_description(objects)?.text;
        self.render("baseline_question", &[("description", &description)])
    }

    /// Three worked examples followed by the live query for `question`.
    pub fn render_angle_prompt(
        &self,
        objects: &[String],
        question: &str,
    ) -> Result<RenderedPrompt, PromptError> {
        let description = self.render_initial_description(objects)?.text;
        let examples = self.text("angle_examples", &[])?;
        let slots = [
            ("description", description.as_str()),
            ("question", question),
        ];
        let query = self.text("angle_query", &slots)?;
        Ok(RenderedPrompt::new(
            "angle_prompt",
            format!("{examples}\n\n{query}"),
            &slots,
        ))
    }

    pub fn render_action_context(
        &self,
        object: &str,
        qa: &[(String, String)],
    ) -> Result<String, PromptError> {
        let pairs = qa
            .iter()
            .map(|(q, a)| format!("{q} {a}"))
            .collect::<Vec<_>>()
            .join("\n");
        self.text(
            "action_context",
            &[("object", object), ("qa_pairs", &pairs)],
        )
    }

    pub fn render_options(options: &[BenchOption]) -> String {
        options
            .iter()
            .enumerate()
            .map(|(i, o)| {
                format!(
                    "({}) {}\n-> {}",
                    (b'a' + i as u8) as char,
                    o.state,
                    o.action
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Scene description, this object's question/answer record (omitted when
    /// empty), the options, an optional owner preference, and the answer cue.
    pub fn render_action_prompt(
        &self,
        context: &Context,
        question: &BenchmarkQuestion,
        preference: Option<&str>,
    ) -> Result<RenderedPrompt, PromptError> {
        let object = question.object.as_str();
        let qa: Vec<(String, String)> = context
            .entries_for(object)
            .map(|e| (e.question.clone(), e.answer.clone()))
            .collect();
        let mut blocks = vec![context.initial_description.clone()];
        if !qa.is_empty() {
            blocks.push(self.render_action_context(object, &qa)?);
        }
        let options = Self::render_options(&question.options);
        blocks.push(self.text(
            "action_question",
            &[("object", object), ("options", &options)],
        )?);
        if let Some(p) = preference {
            blocks.push(self.text(
                "action_preference",
                &[("object", object), ("preference", p)],
            )?);
        }
        blocks.push(self.text("action_answer", &[])?);
        let mut slots = vec![("object", object), ("options", options.as_str())];
        if let Some(p) = preference {
            slots.push(("preference", p));
        }
        Ok(RenderedPrompt::new(
            "action_prompt",
            blocks.join("\n\n"),
            &slots,
        ))
    }

    pub fn render_benchmark_gen_prompts(
        &self,
        objects: &[String],
    ) -> Result<(RenderedPrompt, RenderedPrompt), PromptError> {
        let description = self.render_initial_description(objects)?.text;
        Ok((
            self.render("benchmark_states", &[("description", &description)])?,
            self.render("benchmark_actions", &[])?,
        ))
    }

    pub fn render_codegen_example(&self, example: &CodegenExample) -> Result<String, PromptError> {
        let head =
            self.render_continuation(example.instruction, &example.objects, &example.receptacles)?;
        Ok(format!("{head}\n{}\n```", example.program))
    }

    fn render_continuation(
        &self,
        instruction: &str,
        objects: &[&str],
        receptacles: &[(&str, ReceptacleMap)],
    ) -> Result<String, PromptError> {
        let objects = format!(
            "[{}]",
            objects
                .iter()
                .map(|o| format!("\"{o}\""))
                .collect::<Vec<_>>()
                .join(", ")
        );
        let rows = receptacles
            .iter()
            .map(|(o, m)| {
                format!(
                    "  \"{o}\": {{\"relocate\": \"{}\", \"cleanup\": \"{}\"}}",
                    m.relocate, m.cleanup
                )
            })
            .collect::<Vec<_>>()
            .join(",\n");
        let receptacles = format!("{{\n{rows}\n}}");
        self.text(
            "codegen_continuation",
            &[
                ("instruction", instruction),
                ("objects", &objects),
                ("receptacles", &receptacles),
            ],
        )
    }

    /// API definition, the in-context examples, then the continuation for
    /// `instruction`, ending on an open code fence.
    pub fn render_codegen_prompt(
        &self,
        instruction: &str,
        objects: &[String],
        receptacle_map: &BTreeMap<String, ReceptacleMap>,
    ) -> Result<RenderedPrompt, PromptError> {
        if objects.is_empty() {
            return Err(PromptError::NoObjects);
        }
        let rows = objects
            .iter()
            .map(|o| {
                receptacle_map
                    .get(o)
                    .map(|m| (o.as_str(), m.clone()))
                    .ok_or_else(|| PromptError::NoReceptacles(o.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let names: Vec<&str> = objects.iter().map(String::as_str).collect();
        let mut parts = vec![
            self.text("codegen_api", &[])?,
            self.text("codegen_icl_instruction", &[])?,
        ];
        for ex in CodegenExample::builtin() {
            parts.push(self.render_codegen_example(&ex)?);
        }
        parts.push(self.render_continuation(instruction, &names, &rows)?);
        let text = format!("{}\n", parts.join("\n\n"));
        Ok(RenderedPrompt::new(
            "codegen_prompt",
            text,
            &[("instruction", instruction)],
        ))
    }

    pub fn render_vqa(&self, question: &str) -> Result<RenderedPrompt, PromptError> {
        self.render("vqa", &[("question", question)])
    }
}

/// "`a`, `b`, `c`"
pub fn object_list(objects: &[String]) -> Result<String, PromptError> {
    if objects.is_empty() {
        return Err(PromptError::NoObjects);
    }
    Ok(objects
        .iter()
        .map(|o| format!("`{o}`"))
        .collect::<Vec<_>>()
        .join(", "))
}

/// One worked example of instruction-to-program translation.
#[derive(Debug, Clone)]
pub struct CodegenExample {
    pub instruction: &'static str,
    pub objects: Vec<&'static str>,
    pub receptacles: Vec<(&'static str, ReceptacleMap)>,
    pub program: &'static str,
}

fn rmap(relocate: &str, cleanup: &str) -> ReceptacleMap {
    ReceptacleMap {
        relocate: relocate.into(),
        cleanup: cleanup.into(),
    }
}

impl CodegenExample {
    pub fn builtin() -> Vec<CodegenExample> {
        vec![
            CodegenExample {
                instruction: "Retrieve all the crayons and organize them tidily in the designated container.",
                objects: vec!["crayons", "colored pencils", "notebook", "eraser", "crumpled up napkin"],
                receptacles: vec![
                    ("crayons", rmap("art box", "trash")),
                    ("notebook", rmap("desk", "recycling")),
                    ("eraser", rmap("art box", "trash")),
                    ("crumpled up napkin", rmap("desk", "trash")),
                ],
                program: "robot.set_designated(\"art box\");\nrobot.relocate(\"crayons\");\nrobot.done();",
            },
            CodegenExample {
                instruction: "Throw away the half-eaten apple.",
                objects: vec!["apple", "orange", "half-eaten peach", "coffee cup", "pink plate"],
                receptacles: vec![
                    ("apple", rmap("counter", "trash")),
                    ("orange", rmap("counter", "trash")),
                    ("half-eaten peach", rmap("counter", "trash")),
                    ("coffee cup", rmap("counter", "recycling")),
                    ("pink plate", rmap("counter", "sink")),
                ],
                program: "robot.set_designated(\"trash can\");\nrobot.cleanup(\"apple\");\nrobot.done();",
            },
            CodegenExample {
                instruction: "Leave the castle as is in a designated area, then put away the removeable parts in a continer.",
                objects: vec!["toy castle", "castle parts", "figurine", "cheerios"],
                receptacles: vec![
                    ("toy castle", rmap("shelf", "toy box")),
                    ("castle parts", rmap("play mat", "toy box")),
                    ("figurine", rmap("shelf", "toy box")),
                    ("cheerios", rmap("play mat", "trash")),
                ],
                program: "robot.leave_alone(\"toy castle\");\nrobot.set_designated(\"toy box\");\nrobot.cleanup(\"castle parts\");\nrobot.done();",
            },
        ]
    }
}
