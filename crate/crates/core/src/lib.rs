//! Tidying decisions from follow-up questions and close-up photos.
//!
//! An LLM lists a question per object, picks a camera angle for each, a VLM
//! answers from that view, and the accumulated answers drive a
//! multiple-choice decision that is compiled into a robot program.

pub mod bench;
pub mod clients;
pub mod dsl;
pub mod letter;
pub mod parsing;
pub mod pipeline;
pub mod prompts;
pub mod world;

pub use letter::Letter;
