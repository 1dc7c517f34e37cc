// Renders each committed golden's inputs. Shared with the acceptance suite.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use groundwork_core::bench::{BenchOption, BenchmarkQuestion, Provenance};
use groundwork_core::letter::Letter;
use groundwork_core::pipeline::{Context, ContextEntry};
use groundwork_core::prompts::{CodegenExample, Registry};
use groundwork_core::world::ReceptacleMap;

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden")
}

/// The committed text, minus the final newline every file ends with.
pub fn read_golden(name: &str) -> String {
    let path = golden_dir().join(format!("{name}.txt"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    text.strip_suffix('\n').unwrap_or(&text).to_string()
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn scrunchie_desk() -> Vec<String> {
    names(&["scrunchie", "lotion", "vaseline", "brush"])
}

fn scrunchie_context(r: &Registry) -> Context {
    let qa = [
        ("Is the `scrunchie` neatly placed on the desk?", "Yes"),
        ("Does the `scrunchie` have any stains?", "Yes"),
        ("Does the `scrunchie` have any loose threads?", "No"),
    ];
    Context {
        surface: "desk".into(),
        initial_description: r
            .render_initial_description(&scrunchie_desk())
            .unwrap()
            .text,
        entries: qa
            .iter()
            .enumerate()
            .map(|(i, (q, a))| ContextEntry {
                iteration: i as u32,
                object: "scrunchie".into(),
                question: q.to_string(),
                answer: a.to_string(),
            })
            .collect(),
        iterations_completed: 3,
    }
}

fn option(state: &str, action: &str) -> BenchOption {
    BenchOption {
        state: state.into(),
        action: action.into(),
    }
}

fn scrunchie_question() -> BenchmarkQuestion {
    BenchmarkQuestion {
        object: "scrunchie".into(),
        options: vec![
            option(
                "The scrunchie is neatly coiled and placed on the desk.",
                "Leave the neatly coiled scrunchie as is in a designated area.",
            ),
            option(
                "The scrunchie is stretched out and tangled with other items on the desk.",
                "Untangle, coil neatly, and place in a designated area.",
            ),
            option(
                "The scrunchie is dirty or stained and needs to be cleaned.",
                "Clean, dry, and place in a designated area.",
            ),
            option(
                "The scrunchie is partially unraveled or damaged.",
                "Repair or replace, and place in a designated area.",
            ),
            option(
                "The scrunchie is being used to hold together a bundle of cables or cords on the desk.",
                "Remove from cables, coil neatly, and place in a designated area.",
            ),
        ],
        correct: BTreeSet::from([Letter::C]),
        omitted: false,
        provenance: Provenance::AnnotatorMajority,
    }
}

fn candle_question() -> BenchmarkQuestion {
    BenchmarkQuestion {
        object: "candle".into(),
        options: (0..5)
            .map(|i| option(&format!("candle state {i}"), &format!("candle action {i}")))
            .collect(),
        correct: BTreeSet::from([Letter::A]),
        omitted: false,
        provenance: Provenance::AnnotatorMajority,
    }
}

fn apple_receptacles() -> (Vec<String>, BTreeMap<String, ReceptacleMap>) {
    let rows = [
        ("apple", "counter", "trash"),
        ("orange", "counter", "trash"),
        ("half-eaten peach", "counter", "trash"),
        ("coffee cup", "counter", "recycling"),
        ("pink plate", "counter", "sink"),
    ];
    let objects = rows.iter().map(|r| r.0.to_string()).collect();
    let map = rows
        .iter()
        .map(|(o, r, c)| {
            (
                o.to_string(),
                ReceptacleMap {
                    relocate: r.to_string(),
                    cleanup: c.to_string(),
                },
            )
        })
        .collect();
    (objects, map)
}

/// (golden name, rendered text) for every golden file.
pub fn cases() -> Vec<(&'static str, String)> {
    let r = Registry::builtin();
    let desk = scrunchie_desk();
    let description = r.render_initial_description(&desk).unwrap().text;
    let ctx = scrunchie_context(r);
    let qa: Vec<(String, String)> = ctx
        .entries
        .iter()
        .map(|e| (e.question.clone(), e.answer.clone()))
        .collect();

    let question_prompt = r.render_question_prompt(&desk).unwrap().text;
    let example = r.render("question_example", &[]).unwrap().text;
    let instruction = question_prompt
        .strip_prefix(&format!("{example}\n\n"))
        .expect("question prompt is the example, then the instruction")
        .to_string();

    let (bench1, bench2) = r.render_benchmark_gen_prompts(&desk).unwrap();

    let examples = {
        let mut parts = vec![r.render("codegen_icl_instruction", &[]).unwrap().text];
        for ex in CodegenExample::builtin() {
            parts.push(r.render_codegen_example(&ex).unwrap());
        }
        parts.join("\n\n")
    };
    let (apple_objects, apple_map) = apple_receptacles();
    let codegen = r
        .render_codegen_prompt(
            "Throw away the half-eaten apple.",
            &apple_objects,
            &apple_map,
        )
        .unwrap()
        .text;
    let continuation = codegen[codegen.rfind("Instruction:").unwrap()..]
        .trim_end_matches('\n')
        .to_string();

    let action = r
        .render_action_prompt(&ctx, &scrunchie_question(), None)
        .unwrap()
        .text;
    let preferred = r
        .render_action_prompt(
            &Context {
                entries: vec![],
                ..ctx.clone()
            },
            &candle_question(),
            Some("Don't trim the wick. It doesn't matter whether the burnt part of the candle wick is excessively long because I can still light it."),
        )
        .unwrap()
        .text;
    let preference_tail = preferred[preferred.find("The owner").unwrap()..].to_string();

    vec![
        ("initial_description", description),
        ("question_instruction", instruction),
        ("question_example", example),
        (
            "baseline_question",
            r.render_baseline_question_prompt(&desk).unwrap().text,
        ),
        (
            "angle_prompt",
            r.render_angle_prompt(&desk, "Does the `scrunchie` have any stains?")
                .unwrap()
                .text,
        ),
        (
            "action_context",
            r.render_action_context("scrunchie", &qa).unwrap(),
        ),
        ("action_prompt", action),
        ("benchmark_states", bench1.text),
        ("benchmark_actions", bench2.text),
        ("codegen_api", r.render("codegen_api", &[]).unwrap().text),
        ("codegen_examples", examples),
        ("codegen_continuation", continuation),
        (
            "vqa_prompt",
            r.render_vqa("Is the bagel sandwich partially eaten?")
                .unwrap()
                .text,
        ),
        ("preference", preference_tail),
    ]
}

/// The full code-generation prompt must be exactly the three golden parts.
pub fn codegen_prompt_is_concatenation() -> bool {
    let r = Registry::builtin();
    let (objects, map) = apple_receptacles();
    let full = r
        .render_codegen_prompt("Throw away the half-eaten apple.", &objects, &map)
        .unwrap()
        .text;
    full == format!(
        "{}\n\n{}\n\n{}\n",
        read_golden("codegen_api"),
        read_golden("codegen_examples"),
        read_golden("codegen_continuation")
    )
}
