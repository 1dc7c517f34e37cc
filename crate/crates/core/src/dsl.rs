//! The robot command language: straight-line calls on a `robot` object.
//!
//! ```text
//! program := stmt+
//! stmt    := "robot" "." ident "(" [string] ")" [";"]
//! ```
//!
//! String literals are double-quoted without escapes. Whitespace and
//! newlines between tokens are insignificant.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{Location, ReceptacleMap, Skill, SkillVerb, WorldError, WorldSpec, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum DslError {
    #[error("{pos}: unexpected character `{ch}`")]
    UnexpectedChar { pos: Pos, ch: char },
    #[error("{pos}: unterminated string literal")]
    UnterminatedString { pos: Pos },
    #[error("{pos}: expected {expected}, found {found}")]
    Syntax {
        pos: Pos,
        expected: &'static str,
        found: String,
    },
    #[error("{pos}: unknown function `{name}`")]
    UnknownFunction { pos: Pos, name: String },
    #[error("{pos}: `{func}` takes {expected} argument(s), got {got}")]
    Arity {
        pos: Pos,
        func: Func,
        expected: usize,
        got: usize,
    },
    #[error("empty program")]
    Empty,
    #[error("program failed validation: {0}")]
    Invalid(String),
    #[error("{0}")]
    World(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Func {
    LeaveAlone,
    SetDesignated,
    Relocate,
    Cleanup,
    Done,
}

impl Func {
    pub const ALL: [Func; 5] = [
        Func::LeaveAlone,
        Func::SetDesignated,
        Func::Relocate,
        Func::Cleanup,
        Func::Done,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Func::LeaveAlone => "leave_alone",
            Func::SetDesignated => "set_designated",
            Func::Relocate => "relocate",
            Func::Cleanup => "cleanup",
            Func::Done => "done",
        }
    }

    pub fn arity(self) -> usize {
        if self == Func::Done {
            0
        } else {
            1
        }
    }

    fn lookup(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.as_str() == name)
    }
}

impl fmt::Display for Func {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub func: Func,
    pub arg: Option<String>,
}

impl Statement {
    pub fn new(func: Func, arg: Option<&str>) -> Self {
        Statement {
            func,
            arg: arg.map(str::to_string),
        }
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.arg {
            Some(a) => write!(f, "robot.{}(\"{a}\");", self.func),
            None => write!(f, "robot.{}();", self.func),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RobotProgram {
    pub statements: Vec<Statement>,
    pub source: String,
}

impl RobotProgram {
    /// One statement per line, with semicolons.
    pub fn print(&self) -> String {
        self.statements
            .iter()
            .map(Statement::to_string)
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Str(String),
    Dot,
    LParen,
    RParen,
    Semi,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::Dot => "`.`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Semi => "`;`".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, Pos)>, DslError> {
    let mut out = Vec::new();
    let mut chars = src.chars().peekable();
    let (mut line, mut column) = (1, 1);
    let advance = |c: char, line: &mut usize, column: &mut usize| {
        if c == '\n' {
            *line += 1;
            *column = 1;
        } else {
            *column += 1;
        }
    };
    while let Some(&c) = chars.peek() {
        let pos = Pos { line, column };
        if c.is_whitespace() {
            chars.next();
            advance(c, &mut line, &mut column);
            continue;
        }
        let tok = match c {
            '.' => Tok::Dot,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ';' => Tok::Semi,
            '"' => {
                chars.next();
                advance(c, &mut line, &mut column);
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some('"') => {
                            advance('"', &mut line, &mut column);
                            break;
                        }
                        Some('\n') | None => return Err(DslError::UnterminatedString { pos }),
                        Some(ch) => {
                            advance(ch, &mut line, &mut column);
                            s.push(ch);
                        }
                    }
                }
                out.push((Tok::Str(s), pos));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&ch) = chars.peek() {
                    if ch.is_ascii_alphanumeric() || ch == '_' {
                        s.push(ch);
                        chars.next();
                        advance(ch, &mut line, &mut column);
                    } else {
                        break;
                    }
                }
                out.push((Tok::Ident(s), pos));
                continue;
            }
            other => return Err(DslError::UnexpectedChar { pos, ch: other }),
        };
        chars.next();
        advance(c, &mut line, &mut column);
        out.push((tok, pos));
    }
    Ok(out)
}

pub fn parse_program(src: &str) -> Result<RobotProgram, DslError> {
    let toks = lex(src)?;
    let end = toks
        .last()
        .map(|(_, p)| *p)
        .unwrap_or(Pos { line: 1, column: 1 });
    let mut it = toks.into_iter().peekable();
    let mut statements = Vec::new();

    fn expect(
        it: &mut std::iter::Peekable<std::vec::IntoIter<(Tok, Pos)>>,
        want: Tok,
        expected: &'static str,
        end: Pos,
    ) -> Result<Pos, DslError> {
        match it.next() {
            Some((t, p)) if t == want => Ok(p),
            Some((t, p)) => Err(DslError::Syntax {
                pos: p,
                expected,
                found: t.describe(),
            }),
            None => Err(DslError::Syntax {
                pos: end,
                expected,
                found: "end of input".into(),
            }),
        }
    }

    while let Some((tok, pos)) = it.next() {
        match tok {
            Tok::Ident(ref r) if r == "robot" => {}
            other => {
                return Err(DslError::Syntax {
                    pos,
                    expected: "`robot`",
                    found: other.describe(),
                })
            }
        }
        expect(&mut it, Tok::Dot, "`.`", end)?;
        let (name, name_pos) = match it.next() {
            Some((Tok::Ident(n), p)) => (n, p),
            Some((t, p)) => {
                return Err(DslError::Syntax {
                    pos: p,
                    expected: "function name",
                    found: t.describe(),
                })
            }
            None => {
                return Err(DslError::Syntax {
                    pos: end,
                    expected: "function name",
                    found: "end of input".into(),
                })
            }
        };
        let func = Func::lookup(&name).ok_or(DslError::UnknownFunction {
            pos: name_pos,
            name: name.clone(),
        })?;
        expect(&mut it, Tok::LParen, "`(`", end)?;
        let arg = match it.peek() {
            Some((Tok::Str(_), _)) => match it.next() {
                Some((Tok::Str(s), _)) => Some(s),
                _ => unreachable!(),
            },
            _ => None,
        };
        expect(&mut it, Tok::RParen, "`)`", end)?;
        if matches!(it.peek(), Some((Tok::Semi, _))) {
            it.next();
        }
        let got = usize::from(arg.is_some());
        if got != func.arity() {
            return Err(DslError::Arity {
                pos: name_pos,
                func,
                expected: func.arity(),
                got,
            });
        }
        statements.push(Statement { func, arg });
    }
    if statements.is_empty() {
        return Err(DslError::Empty);
    }
    Ok(RobotProgram {
        statements,
        source: src.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    /// relocate/cleanup needs an earlier set_designated with no done between.
    R1,
    /// relocate/cleanup/leave_alone arguments must be declared objects.
    R2,
    /// set_designated arguments must be declared receptacles.
    R3,
    /// The program ends with its only done().
    R4,
    /// The designated receptacle should match the object's mapping (warning).
    R5,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub index: usize,
    pub rule: Rule,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
    pub warnings: Vec<Violation>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", if self.ok { "ok" } else { "invalid" })?;
        for v in &self.violations {
            writeln!(
                f,
                "  error   [{:?}] statement {}: {}",
                v.rule, v.index, v.message
            )?;
        }
        for w in &self.warnings {
            writeln!(
                f,
                "  warning [{:?}] statement {}: {}",
                w.rule, w.index, w.message
            )?;
        }
        Ok(())
    }
}

/// What a program may refer to.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProgramEnv {
    pub objects: BTreeSet<String>,
    pub receptacle_map: BTreeMap<String, ReceptacleMap>,
    /// Receptacles valid for set_designated in addition to the mapped ones.
    pub receptacles: BTreeSet<String>,
}

impl ProgramEnv {
    pub fn from_world(world: &WorldSpec) -> Self {
        ProgramEnv {
            objects: world.object_names().into_iter().collect(),
            receptacle_map: world.receptacle_maps(),
            receptacles: world.receptacles.iter().cloned().collect(),
        }
    }

    fn receptacle_declared(&self, name: &str) -> bool {
        self.receptacles.contains(name)
            || self
                .receptacle_map
                .values()
                .any(|m| m.relocate == name || m.cleanup == name)
    }
}

pub fn validate(program: &RobotProgram, env: &ProgramEnv) -> ValidationReport {
    let mut violations = Vec::new();
    let mut warnings = Vec::new();
    let push = |list: &mut Vec<Violation>, index, rule, message: String| {
        list.push(Violation {
            index,
            rule,
            message,
        })
    };

    // R1
    let mut designated: Option<&str> = None;
    for (i, s) in program.statements.iter().enumerate() {
        match s.func {
            Func::SetDesignated => designated = s.arg.as_deref(),
            Func::Done => designated = None,
            Func::Relocate | Func::Cleanup if designated.is_none() => push(
                &mut violations,
                i,
                Rule::R1,
                format!("`{}` is not preceded by set_designated", s.func),
            ),
            _ => {}
        }
    }
    // R2, R3
    for (i, s) in program.statements.iter().enumerate() {
        let arg = s.arg.as_deref().unwrap_or_default();
        match s.func {
            Func::LeaveAlone | Func::Relocate | Func::Cleanup if !env.objects.contains(arg) => {
                push(
                    &mut violations,
                    i,
                    Rule::R2,
                    format!("unknown object \"{arg}\""),
                )
            }
            Func::SetDesignated if !env.receptacle_declared(arg) => push(
                &mut violations,
                i,
                Rule::R3,
                format!("unknown receptacle \"{arg}\""),
            ),
            _ => {}
        }
    }
    // R4
    let dones: Vec<usize> = program
        .statements
        .iter()
        .enumerate()
        .filter(|(_, s)| s.func == Func::Done)
        .map(|(i, _)| i)
        .collect();
    let last = program.statements.len().saturating_sub(1);
    match dones.first() {
        None => push(
            &mut violations,
            last,
            Rule::R4,
            "program does not end with done()".into(),
        ),
        Some(&first) => {
            for &extra in &dones[1..] {
                push(
                    &mut violations,
                    extra,
                    Rule::R4,
                    "done() called more than once".into(),
                );
            }
            if first != last {
                push(
                    &mut violations,
                    first + 1,
                    Rule::R4,
                    "statements after done() are never executed".into(),
                );
            }
        }
    }
    // R5
    let mut designated: Option<&str> = None;
    for (i, s) in program.statements.iter().enumerate() {
        let verb = match s.func {
            Func::SetDesignated => {
                designated = s.arg.as_deref();
                continue;
            }
            Func::Done => {
                designated = None;
                continue;
            }
            Func::Relocate => SkillVerb::Relocate,
            Func::Cleanup => SkillVerb::Cleanup,
            Func::LeaveAlone => continue,
        };
        let (Some(d), Some(obj)) = (designated, s.arg.as_deref()) else {
            continue;
        };
        if let Some(map) = env.receptacle_map.get(obj) {
            let expected = map.for_verb(verb);
            if expected != d {
                push(
                    &mut warnings,
                    i,
                    Rule::R5,
                    format!(
                        "{verb:?} of \"{obj}\" uses \"{d}\" but the mapping says \"{expected}\""
                    ),
                );
            }
        }
    }

    violations.sort_by_key(|v| (v.index, v.rule));
    ValidationReport {
        ok: violations.is_empty(),
        violations,
        warnings,
    }
}

/// Ordering rules only (R1, R4), for programs checked without a world.
pub fn validate_structure(program: &RobotProgram) -> ValidationReport {
    let full = validate(program, &ProgramEnv::default());
    let violations: Vec<Violation> = full
        .violations
        .into_iter()
        .filter(|v| matches!(v.rule, Rule::R1 | Rule::R4))
        .collect();
    ValidationReport {
        ok: violations.is_empty(),
        violations,
        warnings: Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub stmt_index: usize,
    pub func: Func,
    pub arg: Option<String>,
    pub pre_location: Location,
    pub post_location: Location,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub events: Vec<TraceEvent>,
}

impl ExecutionTrace {
    pub fn to_jsonl(&self) -> String {
        self.events
            .iter()
            .map(|e| serde_json::to_string(e).expect("trace serializes") + "\n")
            .collect()
    }
}

/// Validates against `env`, then applies the statements in order. The world
/// is only modified when validation passes.
pub fn run_program(
    program: &RobotProgram,
    env: &ProgramEnv,
    world: &mut WorldState,
) -> Result<ExecutionTrace, DslError> {
    let report = validate(program, env);
    if !report.ok {
        let first = &report.violations[0];
        return Err(DslError::Invalid(format!(
            "[{:?}] statement {}: {}",
            first.rule, first.index, first.message
        )));
    }
    let mut next = world.clone();
    let mut trace = ExecutionTrace::default();
    let mut designated: Option<String> = None;
    for (i, s) in program.statements.iter().enumerate() {
        let object = s.arg.clone().unwrap_or_default();
        let skill = match s.func {
            Func::SetDesignated => {
                designated = s.arg.clone();
                continue;
            }
            Func::Done => break,
            Func::LeaveAlone => Skill::LeaveAlone { object },
            Func::Relocate => Skill::Relocate {
                object,
                designated: designated.clone(),
            },
            Func::Cleanup => Skill::Cleanup {
                object,
                designated: designated.clone(),
            },
        };
        let pre = next.location(skill.object()).cloned().ok_or_else(|| {
            DslError::World(WorldError::UnknownObject(skill.object().to_string()).to_string())
        })?;
        next.execute_skill(&skill)
            .map_err(|e| DslError::World(e.to_string()))?;
        let post = next
            .location(skill.object())
            .cloned()
            .expect("object still present");
        trace.events.push(TraceEvent {
            stmt_index: i,
            func: s.func,
            arg: s.arg.clone(),
            pre_location: pre,
            post_location: post,
        });
    }
    *world = next;
    Ok(trace)
}
