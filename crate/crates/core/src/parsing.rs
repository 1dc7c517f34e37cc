//! Turns free-text LLM output into structured values.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::BenchOption;
use crate::letter::Letter;
use crate::world::{normalize_ws, Angle};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("no question for object(s): {}", .0.join(", "))]
    MissingCoverage(Vec<String>),
    #[error("malformed options for `{object}`: {found:?}")]
    MalformedOptions { object: String, found: String },
    #[error("block for `{0}` has no question")]
    MissingQuestion(String),
    #[error("no lettered option found")]
    NoOption,
    #[error("option ({letter}) is out of range for {n} options")]
    OutOfRange { letter: char, n: usize },
    #[error("expected {expected} {what}, found {found}")]
    Count {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("expected exactly one 'leave as is' action, found {0}")]
    LeaveAsIs(usize),
    #[error("no fenced code block found")]
    NoFence,
}

pub const ANSWER_OPTIONS: [&str; 3] = ["Yes", "No", "Cannot answer from image"];
const OPTIONS_LINE: &str = "(a) Yes (b) No (c) Cannot answer from image";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FollowUpQuestion {
    pub object: String,
    pub reasoning: Option<String>,
    pub question: String,
}

impl FollowUpQuestion {
    pub fn options(&self) -> [&'static str; 3] {
        ANSWER_OPTIONS
    }
}

/// One question per object, in the order the objects were listed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionSet {
    pub questions: Vec<FollowUpQuestion>,
}

impl QuestionSet {
    pub fn get(&self, object: &str) -> Option<&FollowUpQuestion> {
        self.questions.iter().find(|q| q.object == object)
    }

    /// Renders in the answer format the question prompt's example uses.
    pub fn render(&self) -> String {
        self.questions
            .iter()
            .map(|q| match &q.reasoning {
                Some(r) => format!(
                    "-`{}`:\nSocially motivated reasoning: {r}\n\nResulting question (that can be answered by taking a picture of object): {}\n\n{OPTIONS_LINE}",
                    q.object, q.question
                ),
                None => format!("`{}`: {}", q.object, q.question),
            })
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

fn header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:[-*]\s*)?\**`([^`]+)`\**\s*:\s*(.*)$").unwrap())
}

fn paren_letter_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\(([A-Za-z])\)").unwrap())
}

fn bare_letter_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:^|:)\s*([A-Za-z])(?:[).:,]|\s|$)").unwrap())
}

fn item_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:[-*]\s*)?\(?([a-eA-E])[).]\s*(.*)$").unwrap())
}

struct Block<'a> {
    name: String,
    rest: String,
    lines: Vec<&'a str>,
}

/// Splits text at lines of the form "`name`: ..." (optionally "-"/"*"
/// bulleted or bold).
fn split_blocks(text: &str) -> (Vec<&str>, Vec<Block<'_>>) {
    let mut preamble = Vec::new();
    let mut blocks: Vec<Block> = Vec::new();
    for line in text.lines() {
        if let Some(c) = header_re().captures(line) {
            blocks.push(Block {
                name: c[1].trim().to_string(),
                rest: c[2].trim().to_string(),
                lines: Vec::new(),
            });
        } else if let Some(b) = blocks.last_mut() {
            b.lines.push(line);
        } else {
            preamble.push(line);
        }
    }
    (preamble, blocks)
}

fn find_ci(haystack: &str, needle: &str) -> Option<usize> {
    haystack
        .to_ascii_lowercase()
        .find(&needle.to_ascii_lowercase())
}

fn parse_framework_block(object: &str, body: &str) -> Result<FollowUpQuestion, ParseError> {
    let flat = normalize_ws(body);
    let rq = find_ci(&flat, "Resulting question")
        .ok_or_else(|| ParseError::MissingQuestion(object.to_string()))?;
    let reasoning = find_ci(&flat[..rq], "Socially motivated reasoning:").map(|i| {
        flat[i + "Socially motivated reasoning:".len()..rq]
            .trim()
            .to_string()
    });
    let after = &flat[rq..];
    let q_start = match after.find("):") {
        Some(i) => i + 2,
        None => after
            .find(':')
            .map(|i| i + 1)
            .ok_or_else(|| ParseError::MissingQuestion(object.to_string()))?,
    };
    let after = &after[q_start..];
    let opt_start = after.find("(a)").or_else(|| after.find("(A)"));
    let (question, options) = match opt_start {
        Some(i) => (after[..i].trim(), after[i..].trim()),
        None => (after.trim(), ""),
    };
    if question.is_empty() {
        return Err(ParseError::MissingQuestion(object.to_string()));
    }
    if !options.eq_ignore_ascii_case(OPTIONS_LINE) {
        return Err(ParseError::MalformedOptions {
            object: object.to_string(),
            found: options.to_string(),
        });
    }
    Ok(FollowUpQuestion {
        object: object.to_string(),
        reasoning: reasoning.filter(|r| !r.is_empty()),
        question: question.to_string(),
    })
}

/// Extracts one follow-up question per object. Accepts both the reasoned
/// block format and plain "`object`: question" lines.
pub fn parse_question_block(text: &str, objects: &[String]) -> Result<QuestionSet, ParseError> {
    let (_, blocks) = split_blocks(text);
    let mut questions = Vec::with_capacity(objects.len());
    let mut missing = Vec::new();
    for object in objects {
        let Some(block) = blocks.iter().find(|b| b.name.eq_ignore_ascii_case(object)) else {
            missing.push(object.clone());
            continue;
        };
        let q = if block.rest.is_empty() || find_ci(&block.rest, "Socially motivated").is_some() {
            let body = std::iter::once(block.rest.as_str())
                .chain(block.lines.iter().copied())
                .collect::<Vec<_>>()
                .join("\n");
            parse_framework_block(object, &body)?
        } else {
            let continuation: Vec<&str> = block
                .lines
                .iter()
                .take_while(|l| !l.trim().is_empty())
                .copied()
                .collect();
            let question = normalize_ws(&format!("{} {}", block.rest, continuation.join(" ")));
            FollowUpQuestion {
                object: object.clone(),
                reasoning: None,
                question,
            }
        };
        questions.push(q);
    }
    if !missing.is_empty() {
        return Err(ParseError::MissingCoverage(missing));
    }
    Ok(QuestionSet { questions })
}

/// Angle option order in the angle prompt.
pub const ANGLE_OPTIONS: [Angle; 5] = [
    Angle::Top,
    Angle::Right,
    Angle::Left,
    Angle::Front,
    Angle::Back,
];

/// The last lettered option in `text` wins, since responses usually restate
/// the choice after their rationale.
pub fn parse_angle_choice(text: &str) -> Result<Angle, ParseError> {
    paren_letter_re()
        .captures_iter(text)
        .filter_map(|c| Letter::from_char(c[1].chars().next()?))
        .last()
        .map(|l| ANGLE_OPTIONS[l.index()])
        .ok_or(ParseError::NoOption)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceSelection {
    pub letter: Letter,
    pub rationale: Option<String>,
}

impl ChoiceSelection {
    pub fn render(&self) -> String {
        match &self.rationale {
            Some(r) => format!("({}) {r}", self.letter),
            None => format!("({})", self.letter),
        }
    }
}

/// Finds the chosen option among `n_options` (at most five). A
/// parenthesized letter anywhere is preferred; otherwise a bare letter at
/// the start of the text or right after a colon.
pub fn parse_choice(text: &str, n_options: usize) -> Result<ChoiceSelection, ParseError> {
    let n = n_options.min(Letter::MAX_OPTIONS);
    let (raw, end) = if let Some(c) = paren_letter_re().captures(text) {
        (c[1].chars().next().unwrap(), c.get(0).unwrap().end())
    } else if let Some(c) = bare_letter_re().captures(text) {
        let m = c.get(1).unwrap();
        (m.as_str().chars().next().unwrap(), m.end())
    } else {
        return Err(ParseError::NoOption);
    };
    let letter =
        Letter::from_char(raw)
            .filter(|l| l.index() < n)
            .ok_or(ParseError::OutOfRange {
                letter: raw.to_ascii_lowercase(),
                n,
            })?;
    let rest = text[end..].trim_start_matches([')', '.', ':', ',']).trim();
    Ok(ChoiceSelection {
        letter,
        rationale: (!rest.is_empty()).then(|| rest.to_string()),
    })
}

/// Text of the block for `object`, or the whole text when no per-object
/// headers are present.
fn object_section(text: &str, object: &str) -> String {
    let (preamble, blocks) = split_blocks(text);
    if let Some(b) = blocks.iter().find(|b| b.name.eq_ignore_ascii_case(object)) {
        let mut lines = vec![b.rest.as_str()];
        lines.extend(b.lines.iter().copied());
        return lines.join("\n");
    }
    if blocks.is_empty() {
        return preamble.join("\n");
    }
    String::new()
}

/// Lettered items (a)-(e) in order; wrapped lines continue the current item.
fn lettered_items(section: &str) -> Vec<String> {
    let mut items: Vec<String> = Vec::new();
    let mut expect = 0usize;
    for line in section.lines() {
        if let Some(c) = item_re().captures(line) {
            let l = Letter::from_char(c[1].chars().next().unwrap()).unwrap();
            if l.index() == expect {
                items.push(c[2].trim().to_string());
                expect += 1;
                continue;
            }
        }
        if let Some(last) = items.last_mut() {
            if !line.trim().is_empty() {
                last.push(' ');
                last.push_str(line.trim());
            }
        }
    }
    items.into_iter().map(|s| normalize_ws(&s)).collect()
}

fn is_leave_as_is(action: &str) -> bool {
    let lower = action.to_ascii_lowercase();
    lower.contains("leave") && lower.contains("as is")
}

/// Pairs the five states from the first stage with the five actions from
/// the second. Action items of the form "state -> action" keep only the
/// action.
pub fn parse_benchmark_options(
    stage1: &str,
    stage2: &str,
    object: &str,
) -> Result<Vec<BenchOption>, ParseError> {
    let states = lettered_items(&object_section(stage1, object));
    if states.len() != 5 {
        return Err(ParseError::Count {
            what: "states",
            expected: 5,
            found: states.len(),
        });
    }
    let actions: Vec<String> = lettered_items(&object_section(stage2, object))
        .into_iter()
        .map(|a| match a.rfind("->") {
            Some(i) => a[i + 2..].trim().to_string(),
            None => a,
        })
        .collect();
    if actions.len() != 5 {
        return Err(ParseError::Count {
            what: "actions",
            expected: 5,
            found: actions.len(),
        });
    }
    let leave = actions.iter().filter(|a| is_leave_as_is(a)).count();
    if leave != 1 {
        return Err(ParseError::LeaveAsIs(leave));
    }
    Ok(states
        .into_iter()
        .zip(actions)
        .map(|(state, action)| BenchOption { state, action })
        .collect())
}

/// Body of the program fence following "Program:". Also accepts a bare
/// continuation (the prompt already opened the fence) that ends at a
/// closing fence.
pub fn extract_program(text: &str) -> Result<String, ParseError> {
    let (s, had_marker) = match text.find("Program:") {
        Some(i) => (&text[i + "Program:".len()..], true),
        None => (text, false),
    };
    let trimmed = s.trim_start();
    let body = if let Some(open) = trimmed.strip_prefix("```") {
        let open = match open.find('\n') {
            Some(nl) => &open[nl + 1..],
            None => "",
        };
        match open.find("```") {
            Some(close) => &open[..close],
            None if had_marker => open,
            None => return Err(ParseError::NoFence),
        }
    } else if !had_marker && s.contains("```") {
        &s[..s.find("```").unwrap()]
    } else {
        return Err(ParseError::NoFence);
    };
    Ok(body
        .lines()
        .map(str::trim_end)
        .collect::<Vec<_>>()
        .join("\n")
        .trim()
        .to_string())
}
