//! Seeded occlusion suites with matching scripted fixtures.
//!
//! Each object has one decision-critical attribute and one cosmetic one.
//! The critical attribute is always visible from the angle the scripted LLM
//! picks for it, visible from SCENE for a fixed share of objects, and
//! visible from FRONT for every scene-visible object plus about half of the
//! rest. The cosmetic attribute is visible from everywhere.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BenchOption, BenchmarkQuestion, Provenance};
use crate::clients::{FixtureCase, FixtureEntry, FixtureFile, Role};
use crate::letter::Letter;
use crate::parsing::ANGLE_OPTIONS;
use crate::world::{Angle, Attribute, ReceptacleMap, SimObject, WorldSpec, SCHEMA_VERSION};

/// Share of critical attributes visible in the scene image.
pub const SCENE_VISIBLE_SHARE: f64 = 0.32;

const NOUNS: [&str; 24] = [
    "mug",
    "stapler",
    "notebook",
    "water bottle",
    "phone charger",
    "lunch box",
    "headphones",
    "plant pot",
    "paper bag",
    "soda can",
    "pencil case",
    "desk lamp",
    "tissue box",
    "coffee cup",
    "sunglasses",
    "candle",
    "picture frame",
    "wallet",
    "snack bag",
    "hand cream",
    "cereal bowl",
    "keyboard",
    "glue stick",
    "umbrella",
];

const CONDITIONS: [&str; 8] = [
    "broken", "empty", "dirty", "leaking", "moldy", "torn", "spilled", "expired",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSuite {
    pub world: WorldSpec,
    pub fixtures: FixtureFile,
    /// The angle the scripted LLM picks for each object, in object order.
    pub llm_angles: Vec<Angle>,
}

fn object_name(i: usize) -> String {
    let noun = NOUNS[i % NOUNS.len()];
    match i / NOUNS.len() {
        0 => noun.to_string(),
        k => format!("{noun} {}", k + 1),
    }
}

fn question_block(object: &str, phrase: &str) -> String {
    format!(
        "-`{object}`:\nSocially motivated reasoning: Whether the `{object}` should be tidied away depends on its condition.\n\nResulting question (that can be answered by taking a picture of object): {phrase}\n\n(a) Yes (b) No (c) Cannot answer from image"
    )
}

pub fn generate(seed: u64, n_objects: usize) -> SyntheticSuite {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_scene = (SCENE_VISIBLE_SHARE * n_objects as f64).round() as usize;
    let mut order: Vec<usize> = (0..n_objects).collect();
    order.shuffle(&mut rng);
    let scene_visible: BTreeSet<usize> = order[..n_scene].iter().copied().collect();

    let mut objects = Vec::with_capacity(n_objects);
    let mut benchmark = Vec::with_capacity(n_objects);
    let mut responses = Vec::new();
    let mut llm_angles = Vec::with_capacity(n_objects);

    for i in 0..n_objects {
        let name = object_name(i);
        let condition = CONDITIONS[rng.random_range(0..CONDITIONS.len())];
        let truth = rng.random_bool(0.5);
        let angle_idx = rng.random_range(0..ANGLE_OPTIONS.len());
        let llm_angle = ANGLE_OPTIONS[angle_idx];

        let mut visible = BTreeSet::from([llm_angle]);
        if scene_visible.contains(&i) {
            visible.extend([Angle::Scene, Angle::Front]);
        } else if rng.random_bool(0.5) {
            visible.insert(Angle::Front);
        }
        let critical = Attribute {
            key: "condition".into(),
            phrase: format!("Is the {{object}} {condition}?"),
            truth,
            visible_from: visible,
        };
        let cosmetic = Attribute {
            key: "color".into(),
            phrase: "Is the {object} red?".into(),
            truth: rng.random_bool(0.5),
            visible_from: Angle::ALL.into_iter().collect(),
        };
        let question = critical.question_for(&name);
        let cosmetic_question = cosmetic.question_for(&name);

        benchmark.push(BenchmarkQuestion {
            object: name.clone(),
            options: vec![
                BenchOption {
                    state: format!("The {name} is brand new and still in its packaging."),
                    action: format!("Unpack the {name}."),
                },
                BenchOption {
                    state: format!("The {name} is {condition}."),
                    action: format!("Throw the {name} away."),
                },
                BenchOption {
                    state: format!("The {name} is in good condition."),
                    action: format!("Put the {name} back on the shelf."),
                },
                BenchOption {
                    state: format!("The {name} belongs to a guest."),
                    action: format!("Leave the {name} as is."),
                },
                BenchOption {
                    state: format!("The {name} is covered in stickers."),
                    action: format!("Peel the stickers off the {name}."),
                },
            ],
            correct: BTreeSet::from([if truth { Letter::B } else { Letter::C }]),
            omitted: false,
            provenance: Provenance::SyntheticGroundTruth,
        });

        responses.push(FixtureEntry::simple(
            Role::QuestionGen,
            &name,
            None,
            question_block(&name, &question),
        ));
        responses.push(FixtureEntry::simple(
            Role::BaselineQuestionGen,
            &name,
            None,
            format!("`{name}`: {cosmetic_question}"),
        ));
        responses.push(FixtureEntry::simple(
            Role::AngleSelect,
            &name,
            None,
            format!(
                "({}) {}",
                Letter::from_index(angle_idx).expect("five angles"),
                llm_angle.as_str().to_lowercase()
            ),
        ));
        // Chooses from the recorded answer; without one, the wrong default.
        responses.push(FixtureEntry {
            role: Role::Decide,
            object: Some(name.clone()),
            cases: vec![
                FixtureCase {
                    contains: format!("{question} Yes"),
                    text: "(b)".into(),
                },
                FixtureCase {
                    contains: format!("{question} No"),
                    text: "(c)".into(),
                },
            ],
            text: Some("(a)".into()),
            ..FixtureEntry::new(Role::Decide)
        });

        objects.push(SimObject {
            name,
            attributes: vec![critical, cosmetic],
            receptacles: ReceptacleMap {
                relocate: "shelf".into(),
                cleanup: "bin".into(),
            },
            images: Default::default(),
        });
        llm_angles.push(llm_angle);
    }

    let world = WorldSpec {
        schema_version: Some(SCHEMA_VERSION),
        surface: "desk".into(),
        objects,
        receptacles: vec!["shelf".into(), "bin".into()],
        benchmark,
        scene_image: None,
        base_dir: None,
    };
    world.validate().expect("generated world is valid");
    SyntheticSuite {
        world,
        fixtures: FixtureFile {
            responses,
            vqa: Vec::new(),
        },
        llm_angles,
    }
}
