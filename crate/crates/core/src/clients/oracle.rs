use std::io::{BufRead, Write};
use std::sync::Mutex;

use super::{ClientError, VisionModel, VqaAnswer, VqaRequest};
use crate::world::{Attribute, PhotoTarget, WorldSpec};

/// Answers from ground truth: the attribute's truth when the image angle
/// reveals it, `Unknown` otherwise.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleVlm;

/// Finds the attribute a question refers to. Close-ups only search the
/// photographed object; scene images search every object.
pub(crate) fn match_attribute<'w>(
    world: &'w WorldSpec,
    target: &PhotoTarget,
    question: &str,
) -> Result<&'w Attribute, ClientError> {
    let unmatched = || ClientError::UnmatchedQuestion {
        question: question.to_string(),
        target: target.to_string(),
    };
    match target {
        PhotoTarget::Object(name) => world
            .object(name)
            .ok()
            .and_then(|o| o.attribute_for_question(question))
            .ok_or_else(unmatched),
        PhotoTarget::Scene => world
            .objects
            .iter()
            .find_map(|o| o.attribute_for_question(question))
            .ok_or_else(unmatched),
    }
}

impl VisionModel for OracleVlm {
    fn answer(
        &self,
        request: &VqaRequest,
        world: Option<&WorldSpec>,
    ) -> Result<VqaAnswer, ClientError> {
        let world = world.ok_or(ClientError::NoWorld)?;
        let attr = match_attribute(world, &request.image.target, &request.question)?;
        Ok(if attr.visible(request.image.angle) {
            VqaAnswer::from_truth(attr.truth)
        } else {
            VqaAnswer::Unknown
        })
    }

    fn name(&self) -> &str {
        "oracle"
    }
}

/// A person at the terminal answers each question after seeing what the
/// photo reveals. Requests are serialized.
pub struct HumanVlm {
    io: Mutex<(Box<dyn BufRead + Send>, Box<dyn Write + Send>)>,
}

impl HumanVlm {
    pub fn new(input: Box<dyn BufRead + Send>, output: Box<dyn Write + Send>) -> Self {
        HumanVlm {
            io: Mutex::new((input, output)),
        }
    }

    pub fn stdio() -> Self {
        Self::new(
            Box::new(std::io::BufReader::new(std::io::stdin())),
            Box::new(std::io::stderr()),
        )
    }
}

impl VisionModel for HumanVlm {
    fn answer(
        &self,
        request: &VqaRequest,
        world: Option<&WorldSpec>,
    ) -> Result<VqaAnswer, ClientError> {
        let world = world.ok_or(ClientError::NoWorld)?;
        let (_, facts) = world
            .take_photo(
                &request.image.target,
                request.image.angle,
                request.image.iteration,
            )
            .map_err(|e| ClientError::Precondition(e.to_string()))?;
        let mut guard = self.io.lock().unwrap_or_else(|p| p.into_inner());
        let (input, output) = &mut *guard;
        writeln!(
            output,
            "\nImage: {} from {} (iteration {})",
            request.image.target, request.image.angle, request.image.iteration
        )?;
        if facts.is_empty() {
            writeln!(output, "  (nothing relevant is visible)")?;
        }
        for f in &facts.facts {
            let truth = if f.truth { "yes" } else { "no" };
            writeln!(output, "  {} -> {truth}", f.question)?;
        }
        loop {
            write!(output, "Question: {}\nAnswer [y/n/u]: ", request.question)?;
            output.flush()?;
            let mut line = String::new();
            if input.read_line(&mut line)? == 0 {
                return Err(ClientError::Io(std::io::Error::new(
                    std::io::ErrorKind::UnexpectedEof,
                    "stdin closed",
                )));
            }
            match line.trim().to_ascii_lowercase().as_str() {
                "y" | "yes" => return Ok(VqaAnswer::Yes),
                "n" | "no" => return Ok(VqaAnswer::No),
                "u" | "unknown" => return Ok(VqaAnswer::Unknown),
                _ => writeln!(output, "please type y, n or u")?,
            }
        }
    }

    fn name(&self) -> &str {
        "human"
    }
}
