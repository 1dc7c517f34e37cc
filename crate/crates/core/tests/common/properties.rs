//! Invariant suites, each run for `CASES` generated cases with a fixed RNG
//! so failures reproduce.

use std::collections::{BTreeMap, BTreeSet};

use groundwork_core::bench::synthetic;
use groundwork_core::clients::{parse_vqa_text, OracleVlm, ScriptedLlm};
use groundwork_core::dsl::{self, Func, ProgramEnv, RobotProgram, Statement};
use groundwork_core::parsing;
use groundwork_core::pipeline::{Mode, Pipeline, PipelineConfig};
use groundwork_core::world::{
    Angle, Location, ObjectState, PhotoTarget, ReceptacleMap, Skill, WorldState,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

pub const CASES: u32 = 1000;

fn runner() -> TestRunner {
    let config = Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn check<S: Strategy>(
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    runner().run(&strategy, test).map_err(|e| e.to_string())
}

const QUESTION_MODES: [Mode; 4] = [
    Mode::OursLlm,
    Mode::OursFront,
    Mode::BaselineQuestions,
    Mode::NoActivePerception,
];

/// Each iteration appends exactly one entry per object and never rewrites
/// earlier ones, so after i iterations there are i × K entries.
pub fn context_monotonicity() -> Result<(), String> {
    check(
        (
            0u64..10_000,
            1usize..6,
            0u32..4,
            prop::sample::select(QUESTION_MODES.to_vec()),
        ),
        |(seed, k, iterations, mode)| {
            let suite = synthetic::generate(seed, k);
            let llm = ScriptedLlm::new(suite.fixtures.clone());
            let vlm = OracleVlm;
            let mut p = Pipeline::new(
                &suite.world,
                &llm,
                &vlm,
                PipelineConfig::new(mode, iterations),
            );
            let mut ctx = p
                .initial_context()
                .map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert!(ctx.entries.is_empty());
            for i in 0..iterations {
                let before = ctx.clone();
                ctx = p
                    .run_iteration(ctx, i)
                    .map_err(|e| TestCaseError::fail(e.to_string()))?;
                prop_assert_eq!(&ctx.entries[..before.entries.len()], &before.entries[..]);
                prop_assert_eq!(ctx.entries.len(), (i as usize + 1) * k);
                prop_assert!(ctx.entries[before.entries.len()..]
                    .iter()
                    .all(|e| e.iteration == i));
                prop_assert_eq!(&ctx.initial_description, &before.initial_description);
                prop_assert_eq!(ctx.iterations_completed, i + 1);
            }
            Ok(())
        },
    )
}

const DSL_NAMES: [&str; 6] = ["cup", "plate", "soda can", "bin", "shelf", "nowhere"];

fn dsl_env() -> ProgramEnv {
    let map = |r: &str, c: &str| ReceptacleMap {
        relocate: r.into(),
        cleanup: c.into(),
    };
    ProgramEnv {
        objects: ["cup", "plate", "soda can"].map(String::from).into(),
        receptacle_map: BTreeMap::from([
            ("cup".to_string(), map("shelf", "bin")),
            ("plate".to_string(), map("shelf", "bin")),
            ("soda can".to_string(), map("shelf", "bin")),
        ]),
        receptacles: ["bin", "shelf"].map(String::from).into(),
    }
}

fn dsl_state() -> WorldState {
    WorldState {
        objects: ["cup", "plate", "soda can"]
            .iter()
            .map(|n| ObjectState {
                name: n.to_string(),
                location: Location::OnSurface,
                handled: false,
            })
            .collect(),
    }
}

fn statement() -> impl Strategy<Value = Statement> {
    (
        prop::sample::select(Func::ALL.to_vec()),
        prop::sample::select(DSL_NAMES.to_vec()),
    )
        .prop_map(|(f, n)| Statement::new(f, (f.arity() > 0).then_some(n)))
}

/// Programs biased toward validity: mostly well-formed bodies with a final
/// done(), plus arbitrary statement sequences.
fn program() -> impl Strategy<Value = Vec<Statement>> {
    prop_oneof![
        prop::collection::vec(statement(), 0..8),
        prop::collection::vec(statement(), 0..8).prop_map(|mut v| {
            v.retain(|s| s.func != Func::Done);
            v.insert(0, Statement::new(Func::SetDesignated, Some("bin")));
            v.push(Statement::new(Func::Done, None));
            v
        }),
    ]
}

/// Running a program changes only objects it names; a rejected program
/// changes nothing.
pub fn dsl_frame() -> Result<(), String> {
    let env = dsl_env();
    check(program(), |statements| {
        let program = RobotProgram {
            statements: statements.clone(),
            source: String::new(),
        };
        let before = dsl_state();
        let mut state = before.clone();
        match dsl::run_program(&program, &env, &mut state) {
            Ok(trace) => {
                let named: BTreeSet<&str> = statements
                    .iter()
                    .filter(|s| s.func != Func::SetDesignated)
                    .filter_map(|s| s.arg.as_deref())
                    .collect();
                for (b, a) in before.objects.iter().zip(&state.objects) {
                    if !named.contains(b.name.as_str()) {
                        prop_assert_eq!(b, a);
                    }
                }
                prop_assert!(trace
                    .events
                    .iter()
                    .filter(|e| !matches!(e.func, Func::SetDesignated | Func::Done))
                    .all(|e| e.arg.as_deref().is_some_and(|a| named.contains(a))));
            }
            Err(_) => prop_assert_eq!(&state, &before),
        }
        Ok(())
    })
}

fn printable_name() -> impl Strategy<Value = String> {
    "[a-z][a-z _-]{0,10}[a-z]"
}

/// print() followed by parse_program() gives back the same statements.
pub fn dsl_round_trip() -> Result<(), String> {
    let stmt = (prop::sample::select(Func::ALL.to_vec()), printable_name())
        .prop_map(|(f, n)| Statement::new(f, (f.arity() > 0).then_some(n.as_str())));
    check(prop::collection::vec(stmt, 1..10), |statements| {
        let program = RobotProgram {
            statements: statements.clone(),
            source: String::new(),
        };
        let parsed =
            dsl::parse_program(&program.print()).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(parsed.statements, statements);
        Ok(())
    })
}

/// Making an attribute visible from one more angle never hides a fact from
/// any photo.
pub fn visibility_monotonicity() -> Result<(), String> {
    check(
        (
            0u64..10_000,
            1usize..8,
            any::<prop::sample::Index>(),
            prop::sample::select(Angle::ALL.to_vec()),
        ),
        |(seed, n, pick, extra)| {
            let world = synthetic::generate(seed, n).world;
            let mut wider = world.clone();
            let obj = pick.index(n);
            wider.objects[obj].attributes[0].visible_from.insert(extra);

            let mut targets = vec![(PhotoTarget::Scene, Angle::Scene)];
            for o in &world.objects {
                for a in Angle::CLOSE_UPS {
                    targets.push((PhotoTarget::Object(o.name.clone()), a));
                }
            }
            for (target, angle) in targets {
                let (_, narrow) = world
                    .take_photo(&target, angle, 0)
                    .map_err(|e| TestCaseError::fail(e.to_string()))?;
                let (_, wide) = wider
                    .take_photo(&target, angle, 0)
                    .map_err(|e| TestCaseError::fail(e.to_string()))?;
                prop_assert!(narrow.facts.is_subset(&wide.facts));
            }
            prop_assert_eq!(world, synthetic::generate(seed, n).world);
            Ok(())
        },
    )
}

fn skill(names: Vec<String>) -> impl Strategy<Value = Skill> {
    let recept = prop::option::of(prop::sample::select(vec![
        "shelf".to_string(),
        "bin".to_string(),
    ]));
    (prop::sample::select(names), 0u8..3, recept).prop_map(
        |(object, kind, designated)| match kind {
            0 => Skill::LeaveAlone { object },
            1 => Skill::Relocate { object, designated },
            _ => Skill::Cleanup { object, designated },
        },
    )
}

/// Skills never create or lose objects, never un-handle one, and a failed
/// skill leaves the state untouched.
pub fn skill_conservation() -> Result<(), String> {
    let world = synthetic::generate(5, 6).world;
    let mut names = world.object_names();
    names.push("ghost".into());
    let initial = world.initial_state();
    check(prop::collection::vec(skill(names), 0..12), |skills| {
        let mut state = initial.clone();
        for s in &skills {
            let before = state.clone();
            match state.execute_skill(s) {
                Ok(()) => {
                    let after = state.get(s.object()).expect("known object");
                    prop_assert!(after.handled);
                    match s {
                        Skill::LeaveAlone { .. } => {
                            prop_assert_eq!(
                                &after.location,
                                &before.location(s.object()).cloned().unwrap()
                            )
                        }
                        Skill::Relocate { designated, .. } | Skill::Cleanup { designated, .. } => {
                            prop_assert_eq!(
                                &after.location,
                                &Location::InReceptacle(designated.clone().unwrap())
                            )
                        }
                    }
                }
                Err(_) => prop_assert_eq!(&state, &before),
            }
            let names_before: Vec<&str> = before.objects.iter().map(|o| o.name.as_str()).collect();
            let names_after: Vec<&str> = state.objects.iter().map(|o| o.name.as_str()).collect();
            prop_assert_eq!(names_before, names_after);
            for (b, a) in before.objects.iter().zip(&state.objects) {
                prop_assert!(!b.handled || a.handled);
            }
        }
        Ok(())
    })
}

/// Text that looks a bit like model output: option letters, backticks,
/// fences, keywords and arbitrary noise.
fn reply_text() -> impl Strategy<Value = String> {
    let piece = prop_oneof![
        Just("(a)".to_string()),
        Just("(e)".to_string()),
        Just("(f)".to_string()),
        Just("`scrunchie`".to_string()),
        Just("-`mug`:".to_string()),
        Just("```".to_string()),
        Just("```python\n".to_string()),
        Just("robot.done();".to_string()),
        Just(
            "Resulting question (that can be answered by taking a picture of object): ".to_string()
        ),
        Just("Yes".to_string()),
        Just("Cannot answer".to_string()),
        Just("\n".to_string()),
        any::<String>(),
    ];
    prop::collection::vec(piece, 0..12).prop_map(|v| v.concat())
}

/// Every reply parser returns instead of panicking, whatever the input.
pub fn parser_totality() -> Result<(), String> {
    let objects = vec!["scrunchie".to_string(), "mug".to_string()];
    check((reply_text(), reply_text(), 0usize..7), |(a, b, n)| {
        let _ = parsing::parse_question_block(&a, &objects);
        let _ = parsing::parse_angle_choice(&a);
        let _ = parsing::parse_choice(&a, n);
        let _ = parsing::parse_benchmark_options(&a, &b, "mug");
        let _ = parsing::extract_program(&a);
        let _ = dsl::parse_program(&a);
        let _ = parse_vqa_text(&a);
        Ok(())
    })
}

pub type Suite = (&'static str, fn() -> Result<(), String>);

#[allow(dead_code)] // driven by the acceptance target
pub const SUITES: [Suite; 7] = [
    ("context monotonicity and i×K entries", context_monotonicity),
    ("dsl frame property", dsl_frame),
    ("dsl print/parse round-trip", dsl_round_trip),
    ("world visibility monotonicity", visibility_monotonicity),
    ("world skill conservation", skill_conservation),
    ("parser totality", parser_totality),
    ("dsl structural validation agrees", structural_subset),
];

/// validate_structure only ever reports a subset of validate's findings.
pub fn structural_subset() -> Result<(), String> {
    let env = dsl_env();
    check(program(), |statements| {
        let program = RobotProgram {
            statements,
            source: String::new(),
        };
        let full = dsl::validate(&program, &env);
        let structural = dsl::validate_structure(&program);
        for v in &structural.violations {
            prop_assert!(full.violations.contains(v));
        }
        prop_assert!(!full.ok || structural.ok);
        Ok(())
    })
}
