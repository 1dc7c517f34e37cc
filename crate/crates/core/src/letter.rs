use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A multiple-choice option label, `a` through `e`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Letter(u8);

impl Letter {
    pub const MAX_OPTIONS: usize = 5;

    pub const A: Letter = Letter(0);
    pub const B: Letter = Letter(1);
    pub const C: Letter = Letter(2);
    pub const D: Letter = Letter(3);
    pub const E: Letter = Letter(4);

    pub fn from_index(index: usize) -> Option<Letter> {
        (index < Self::MAX_OPTIONS).then_some(Letter(index as u8))
    }

    pub fn from_char(c: char) -> Option<Letter> {
        let c = c.to_ascii_lowercase();
        if c.is_ascii_lowercase() {
            Letter::from_index((c as u8 - b'a') as usize)
        } else {
            None
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn as_char(self) -> char {
        (b'a' + self.0) as char
    }

    pub fn all(n: usize) -> impl Iterator<Item = Letter> {
        (0..n.min(Self::MAX_OPTIONS)).map(|i| Letter(i as u8))
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl FromStr for Letter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().trim_start_matches('(').trim_end_matches(')');
        let mut chars = t.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => {
                Letter::from_char(c).ok_or_else(|| format!("invalid option letter `{s}`"))
            }
            _ => Err(format!("invalid option letter `{s}`")),
        }
    }
}

impl Serialize for Letter {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Letter {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
