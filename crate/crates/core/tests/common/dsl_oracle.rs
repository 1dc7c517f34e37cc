//! Exhaustive small-case check of the program validator against an
//! independently written recognizer.
//!
//! Alphabet: one object `o`, receptacles `r1` and `r2`, and every function
//! applied to every name (so ill-typed arguments are covered too). That is
//! 4 × 3 + 1 = 13 statements and 1 + 13 + 13² + 13³ = 2380 programs of
//! length at most three.

use std::collections::{BTreeMap, BTreeSet};

use groundwork_core::dsl::{self, Func, ProgramEnv, RobotProgram, Rule, Statement};
use groundwork_core::world::ReceptacleMap;

pub const NAMES: [&str; 3] = ["o", "r1", "r2"];
pub const EXPECTED_PROGRAMS: usize = 2380;

pub fn alphabet() -> Vec<Statement> {
    let mut out = Vec::new();
    for f in Func::ALL {
        if f.arity() == 0 {
            out.push(Statement::new(f, None));
        } else {
            out.extend(NAMES.iter().map(|n| Statement::new(f, Some(n))));
        }
    }
    out
}

pub fn env() -> ProgramEnv {
    ProgramEnv {
        objects: BTreeSet::from(["o".to_string()]),
        receptacle_map: BTreeMap::from([(
            "o".to_string(),
            ReceptacleMap {
                relocate: "r1".into(),
                cleanup: "r2".into(),
            },
        )]),
        receptacles: BTreeSet::from(["r1".to_string(), "r2".to_string()]),
    }
}

pub fn programs(max_len: usize) -> Vec<Vec<Statement>> {
    let alpha = alphabet();
    let mut all = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for p in &frontier {
            for s in &alpha {
                let mut q: Vec<Statement> = p.clone();
                q.push(s.clone());
                next.push(q);
            }
        }
        all.extend(next.iter().cloned());
        frontier = next;
    }
    all
}

/// Which rules a program breaks, decided by scanning it as a string of
/// tokens like `set:r1 reloc:o done`.
pub fn reference_rules(program: &[Statement]) -> BTreeSet<Rule> {
    let tokens: Vec<(String, String)> = program
        .iter()
        .map(|s| {
            (
                s.func.as_str().to_string(),
                s.arg.clone().unwrap_or_default(),
            )
        })
        .collect();
    let mut broken = BTreeSet::new();

    let mut armed = false;
    for (f, _) in &tokens {
        match f.as_str() {
            "set_designated" => armed = true,
            "done" => armed = false,
            "relocate" | "cleanup" if !armed => {
                broken.insert(Rule::R1);
            }
            _ => {}
        }
    }
    for (f, a) in &tokens {
        let object_fn = ["relocate", "cleanup", "leave_alone"].contains(&f.as_str());
        if object_fn && a != "o" {
            broken.insert(Rule::R2);
        }
        if f == "set_designated" && a != "r1" && a != "r2" {
            broken.insert(Rule::R3);
        }
    }
    let dones = tokens.iter().filter(|(f, _)| f == "done").count();
    let ends_with_done = tokens.last().is_some_and(|(f, _)| f == "done");
    if dones != 1 || !ends_with_done {
        broken.insert(Rule::R4);
    }
    broken
}

pub struct OracleOutcome {
    pub checked: usize,
    pub mismatches: Vec<String>,
}

pub fn run(max_len: usize) -> OracleOutcome {
    let env = env();
    let mut mismatches = Vec::new();
    let all = programs(max_len);
    for statements in &all {
        let program = RobotProgram {
            statements: statements.clone(),
            source: String::new(),
        };
        let report = dsl::validate(&program, &env);
        let got: BTreeSet<Rule> = report.violations.iter().map(|v| v.rule).collect();
        let want = reference_rules(statements);
        if report.ok != want.is_empty() || got != want {
            mismatches.push(format!(
                "{:?}: validator {got:?}, reference {want:?}",
                program.print()
            ));
        }
        if !statements.is_empty() {
            match dsl::parse_program(&program.print()) {
                Ok(p) if p.statements == *statements => {}
                other => mismatches.push(format!(
                    "{:?} did not round-trip: {other:?}",
                    program.print()
                )),
            }
        }
    }
    OracleOutcome {
        checked: all.len(),
        mismatches,
    }
}
