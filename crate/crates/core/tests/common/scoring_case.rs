//! Ten hand-labelled questions: q3 and q7 are ties (two correct letters),
//! q9 is omitted.
//!
//! Decisions, checked by hand:
//!   q0 a ✓  q1 c ✗  q2 e ✓  q3 b ✓ (tie b,d)  q4 a ✗
//!   q5 d ✓  q6 b ✗  q7 e ✓ (tie a,e)  q8 c ✓  q9 omitted (would be ✗)
//! 6 of the 9 scoreable questions are right.

use std::collections::BTreeSet;

use groundwork_core::bench::{BenchOption, BenchmarkQuestion, Provenance};
use groundwork_core::parsing::ChoiceSelection;
use groundwork_core::pipeline::ObjectDecision;
use groundwork_core::Letter;

pub const EXPECTED_ACCURACY: f64 = 6.0 / 9.0;

fn letter(c: char) -> Letter {
    Letter::from_index((c as u8 - b'a') as usize).expect("a..e")
}

pub fn fixture() -> (Vec<BenchmarkQuestion>, Vec<ObjectDecision>) {
    // (correct letters, omitted, chosen)
    let rows: [(&str, bool, char); 10] = [
        ("a", false, 'a'),
        ("b", false, 'c'),
        ("e", false, 'e'),
        ("bd", false, 'b'),
        ("c", false, 'a'),
        ("d", false, 'd'),
        ("a", false, 'b'),
        ("ae", false, 'e'),
        ("c", false, 'c'),
        ("a", true, 'b'),
    ];
    let mut questions = Vec::new();
    let mut decisions = Vec::new();
    for (i, (correct, omitted, chosen)) in rows.iter().enumerate() {
        let object = format!("item {i}");
        questions.push(BenchmarkQuestion {
            object: object.clone(),
            options: (0..5)
                .map(|k| BenchOption {
                    state: format!("state {k}"),
                    action: format!("action {k}"),
                })
                .collect(),
            correct: if *omitted {
                BTreeSet::new()
            } else {
                correct.chars().map(letter).collect()
            },
            omitted: *omitted,
            provenance: Provenance::AnnotatorMajority,
        });
        decisions.push(ObjectDecision {
            object,
            chosen_option: ChoiceSelection {
                letter: letter(*chosen),
                rationale: None,
            },
            action_text: String::new(),
            transcript: Vec::new(),
        });
    }
    (questions, decisions)
}
