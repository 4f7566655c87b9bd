//! Dialog data model.
//!
//! A dialog is an alternating sequence of user and system turns starting
//! with a user turn. Each turn carries a dialog act, a slot set and a token
//! sequence; user turns additionally carry the gold set of slots that should
//! be carried over from context.

mod catalog;
mod corpus;
pub mod dstc2;
pub mod synth;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use catalog::{build_schema_catalog, SchemaCatalog};
pub use corpus::{dialog_from_json, dialog_to_json, load_corpus, parse_corpus, write_corpus};

/// The generic slot key some domains use for unlabelled entity mentions.
pub const ENTITY_KEY: &str = "Entity";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stream {
    User,
    System,
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stream::User => f.write_str("user"),
            Stream::System => f.write_str("system"),
        }
    }
}

/// A key-value pair such as `(City, "san francisco")`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Slot {
    pub key: String,
    pub value: String,
}

impl Slot {
    pub fn new(key: impl Into<String>, value: impl Into<String>) -> Self {
        Slot {
            key: key.into(),
            value: value.into(),
        }
    }

    /// Tokens of the value under the corpus tokenizer.
    pub fn value_tokens(&self) -> Vec<String> {
        tokenize(&self.value)
    }

    /// Equality form used for scoring and labelling: lowercased key and value.
    pub fn normalized(&self) -> (String, String) {
        (self.key.to_lowercase(), self.value.to_lowercase())
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.key.trim().is_empty() {
            return Err("slot with empty key".into());
        }
        if tokenize(&self.value).is_empty() {
            return Err(format!("slot {} has an empty value", self.key));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Turn {
    pub stream: Stream,
    pub domain: Option<String>,
    pub act: String,
    pub slots: Vec<Slot>,
    pub tokens: Vec<String>,
    /// Position of the turn in its dialog.
    pub turn_index: usize,
    /// Gold carryover slots; always empty on system turns.
    pub references: Vec<Slot>,
}

impl Turn {
    pub fn is_user(&self) -> bool {
        self.stream == Stream::User
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dialog {
    pub dialog_id: String,
    pub turns: Vec<Turn>,
}

impl Dialog {
    /// Validates the turn-taking and slot invariants.
    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| Error::InvalidDialog {
            dialog_id: self.dialog_id.clone(),
            message,
        };
        for (i, turn) in self.turns.iter().enumerate() {
            let expected = if i % 2 == 0 {
                Stream::User
            } else {
                Stream::System
            };
            if turn.stream != expected {
                return Err(fail(format!(
                    "turn {i} is a {} turn; turns must alternate starting with user",
                    turn.stream
                )));
            }
            if turn.turn_index != i {
                return Err(fail(format!(
                    "turn {i} carries turn_index {}",
                    turn.turn_index
                )));
            }
            if turn.tokens.is_empty() {
                return Err(fail(format!("turn {i} has no tokens")));
            }
            if !turn.is_user() && !turn.references.is_empty() {
                return Err(fail(format!("system turn {i} carries references")));
            }
            for slot in turn.slots.iter().chain(&turn.references) {
                slot.check().map_err(|m| fail(format!("turn {i}: {m}")))?;
            }
        }
        Ok(())
    }

    /// Positions of the user turns.
    pub fn user_turns(&self) -> impl Iterator<Item = usize> + '_ {
        self.turns
            .iter()
            .enumerate()
            .filter(|(_, t)| t.is_user())
            .map(|(i, _)| i)
    }
}

/// Lowercase and split on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

/// Re-tokenize a token list, flattening any token that contains whitespace.
pub fn normalize_tokens<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    tokens.iter().flat_map(|t| tokenize(t.as_ref())).collect()
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    fn turn(
        i: usize,
        stream: Stream,
        domain: &str,
        act: &str,
        text: &str,
        slots: &[(&str, &str)],
        references: &[(&str, &str)],
    ) -> Turn {
        Turn {
            stream,
            domain: Some(domain.into()),
            act: act.into(),
            slots: slots.iter().map(|(k, v)| Slot::new(*k, *v)).collect(),
            tokens: tokenize(text),
            turn_index: i,
            references: references.iter().map(|(k, v)| Slot::new(*k, *v)).collect(),
        }
    }

    /// The multi-domain weather / local search / traffic example dialog.
    pub fn demo_dialog() -> Dialog {
        use Stream::*;
        Dialog {
            dialog_id: "demo".into(),
            turns: vec![
                turn(0, User, "Weather", "GetWeather", "weather in san francisco",
                    &[("WeatherLocation", "san francisco")], &[]),
                turn(1, System, "Weather", "InformWeather", "weather is rainy and temperature 42F",
                    &[("Temperature", "42F")], &[]),
                turn(2, User, "LocalSearch", "FindPlace", "any mexican restaurants nearby",
                    &[("PlaceType", "mexican restaurants")], &[("City", "san francisco")]),
                turn(3, System, "LocalSearch", "OfferPlace", "la taqueria is a mile away",
                    &[("Entity", "la taqueria")], &[]),
                turn(4, User, "Traffic", "GetDirections", "thanks, send directions to my phone",
                    &[], &[("Place", "la taqueria"), ("Town", "san francisco")]),
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_fixture_is_valid() {
        fixtures::demo_dialog().validate().unwrap();
    }

    #[test]
    fn tokenize_lowercases_and_splits() {
        assert_eq!(tokenize("  San  Francisco\t"), vec!["san", "francisco"]);
        assert_eq!(normalize_tokens(&["New York", "NOW"]), vec!["new", "york", "now"]);
    }

    #[test]
    fn system_first_is_rejected() {
        let mut d = fixtures::demo_dialog();
        d.turns.remove(0);
        for (i, t) in d.turns.iter_mut().enumerate() {
            t.turn_index = i;
        }
        let err = d.validate().unwrap_err().to_string();
        assert!(err.contains("demo"), "{err}");
    }

    #[test]
    fn empty_value_is_rejected() {
        let mut d = fixtures::demo_dialog();
        d.turns[0].slots[0].value = "  ".into();
        assert!(d.validate().is_err());
    }

    #[test]
    fn references_on_system_turn_rejected() {
        let mut d = fixtures::demo_dialog();
        d.turns[1].references.push(Slot::new("City", "boston"));
        assert!(d.validate().is_err());
    }
}
