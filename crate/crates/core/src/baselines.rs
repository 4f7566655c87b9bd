//! Baselines: carry everything from the most recent turn, or carry
//! type-compatible context slots when the current utterance contains an
//! anaphoric trigger phrase.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::candidates::{CandidateConfig, CandidateSlot};
use crate::dialog::{tokenize, Dialog, Slot, Stream};
use crate::error::{Error, Result};
use crate::pipeline::Pipeline;
use crate::util;

fn require_user_turn(dialog: &Dialog, t: usize) -> Result<()> {
    match dialog.turns.get(t) {
        Some(turn) if turn.is_user() => Ok(()),
        _ => Err(Error::Invalid(format!(
            "dialog {}: turn {t} is not a user turn",
            dialog.dialog_id
        ))),
    }
}

/// All slots of the nearest preceding turn that has any; system turns are
/// skipped when system candidates are excluded.
pub fn naive_predict(dialog: &Dialog, t: usize, config: &CandidateConfig) -> Result<BTreeSet<Slot>> {
    require_user_turn(dialog, t)?;
    let source = dialog.turns[..t]
        .iter()
        .rev()
        .filter(|turn| config.include_system_candidates || turn.stream == Stream::User)
        .find(|turn| !turn.slots.is_empty());
    Ok(source.map(|turn| turn.slots.iter().cloned().collect()).unwrap_or_default())
}

/// Type attributes of a slot key. Missing gender/number match anything.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TypeEntry {
    Class(String),
    Detailed {
        class: String,
        #[serde(default)]
        gender: Option<String>,
        #[serde(default)]
        number: Option<String>,
    },
}

impl TypeEntry {
    pub fn class(&self) -> &str {
        match self {
            TypeEntry::Class(c) => c,
            TypeEntry::Detailed { class, .. } => class,
        }
    }

    fn gender(&self) -> Option<&str> {
        match self {
            TypeEntry::Class(_) => None,
            TypeEntry::Detailed { gender, .. } => gender.as_deref(),
        }
    }

    fn number(&self) -> Option<&str> {
        match self {
            TypeEntry::Class(_) => None,
            TypeEntry::Detailed { number, .. } => number.as_deref(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub anaphor_phrases: Vec<String>,
    /// A type class from the type map, or a literal slot key.
    pub candidate_type: String,
    #[serde(default)]
    pub gender: Option<String>,
    #[serde(default)]
    pub number: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSet {
    #[serde(default)]
    pub type_map: BTreeMap<String, TypeEntry>,
    #[serde(default)]
    pub rules: Vec<Rule>,
}

fn agrees(a: Option<&str>, b: Option<&str>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => x.eq_ignore_ascii_case(y),
        _ => true,
    }
}

fn strip_punct(token: &str) -> &str {
    token.trim_matches(|c: char| !c.is_alphanumeric())
}

fn contains_phrase(tokens: &[&str], phrase: &[String]) -> bool {
    !phrase.is_empty()
        && tokens.len() >= phrase.len()
        && tokens.windows(phrase.len()).any(|w| w.iter().zip(phrase).all(|(a, b)| *a == b))
}

impl RuleSet {
    pub fn parse(text: &str) -> Result<Self> {
        let rules: RuleSet = toml::from_str(text).map_err(|e| Error::Config(format!("rule file: {e}")))?;
        rules.validate()?;
        Ok(rules)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&util::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let classes: BTreeSet<&str> = self.type_map.values().map(TypeEntry::class).collect();
        for (i, rule) in self.rules.iter().enumerate() {
            if rule.anaphor_phrases.is_empty() || rule.anaphor_phrases.iter().any(|p| tokenize(p).is_empty()) {
                return Err(Error::Config(format!("rule {i} has an empty anaphor phrase list or phrase")));
            }
            if !classes.contains(rule.candidate_type.as_str()) && !self.type_map.contains_key(&rule.candidate_type) {
                return Err(Error::Config(format!(
                    "rule {i}: candidate type {:?} is neither a type class nor a mapped key",
                    rule.candidate_type
                )));
            }
        }
        Ok(())
    }

    /// Type class of a key: its type-map class, or the key itself.
    pub fn type_of<'a>(&'a self, key: &'a str) -> &'a str {
        self.type_map.get(key).map_or(key, TypeEntry::class)
    }

    fn rule_accepts(&self, rule: &Rule, key: &str) -> bool {
        let entry = self.type_map.get(key);
        (rule.candidate_type == self.type_of(key) || rule.candidate_type == key)
            && agrees(rule.gender.as_deref(), entry.and_then(TypeEntry::gender))
            && agrees(rule.number.as_deref(), entry.and_then(TypeEntry::number))
    }

    /// Rules with an anaphor phrase occurring contiguously in `tokens`.
    pub fn triggered<'a, S: AsRef<str>>(&'a self, tokens: &[S]) -> Vec<&'a Rule> {
        let tokens: Vec<&str> = tokens.iter().map(|t| strip_punct(t.as_ref())).collect();
        self.rules
            .iter()
            .filter(|r| r.anaphor_phrases.iter().any(|p| contains_phrase(&tokens, &tokenize(p))))
            .collect()
    }

    /// Whether a transformed candidate survives: its original and mapped
    /// keys share a type class, and some triggered rule accepts the type.
    pub fn carries(&self, triggered: &[&Rule], cand: &CandidateSlot) -> bool {
        self.type_of(&cand.original_key) == self.type_of(&cand.mapped_key)
            && triggered.iter().any(|r| self.rule_accepts(r, &cand.mapped_key))
    }

    pub fn without_rule(&self, index: usize) -> RuleSet {
        let mut out = self.clone();
        out.rules.remove(index);
        out
    }
}

pub fn rule_predict(dialog: &Dialog, t: usize, rules: &RuleSet, pipe: &Pipeline<'_>) -> Result<BTreeSet<Slot>> {
    require_user_turn(dialog, t)?;
    let triggered = rules.triggered(&dialog.turns[t].tokens);
    if triggered.is_empty() {
        return Ok(BTreeSet::new());
    }
    let cands = pipe.candidates(dialog, t)?.candidates;
    Ok(cands
        .iter()
        .filter(|c| rules.carries(&triggered, c))
        .map(CandidateSlot::slot)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialog::fixtures::demo_dialog;
    use crate::dialog::{build_schema_catalog, Turn};
    use crate::embeddings::{EmbeddingTable, LabelEmbeddings, OovPolicy};

    #[test]
    fn naive_takes_most_recent_turn() {
        let d = demo_dialog();
        let cfg = CandidateConfig::default();
        let got = naive_predict(&d, 2, &cfg).unwrap();
        assert_eq!(got, [Slot::new("Temperature", "42F")].into_iter().collect());
        assert!(naive_predict(&d, 0, &cfg).unwrap().is_empty());
        assert!(naive_predict(&d, 1, &cfg).is_err());
    }

    #[test]
    fn naive_in_dstc2_mode_uses_user_turns() {
        let d = demo_dialog();
        let cfg = CandidateConfig { include_system_candidates: false, ..Default::default() };
        let got = naive_predict(&d, 4, &cfg).unwrap();
        assert_eq!(got, [Slot::new("PlaceType", "mexican restaurants")].into_iter().collect());
    }

    #[test]
    fn naive_skips_slotless_turns() {
        let mut d = demo_dialog();
        d.turns[3].slots.clear();
        let got = naive_predict(&d, 4, &CandidateConfig::default()).unwrap();
        assert_eq!(got, [Slot::new("PlaceType", "mexican restaurants")].into_iter().collect());
    }

    const ALGORITHM_RULE: &str = r#"
        [type_map]
        City = "City"

        [[rules]]
        anaphor_phrases = ["there"]
        candidate_type = "City"
    "#;

    #[test]
    fn weather_there_carries_city() {
        let rules = RuleSet::parse(ALGORITHM_RULE).unwrap();
        let mk = |i, stream, text: &str, slots: Vec<Slot>| Turn {
            stream,
            domain: Some("Weather".into()),
            act: "a".into(),
            slots,
            tokens: tokenize(text),
            turn_index: i,
            references: vec![],
        };
        let d = Dialog {
            dialog_id: "w".into(),
            turns: vec![
                mk(0, Stream::User, "restaurants in boston", vec![Slot::new("City", "boston")]),
                mk(1, Stream::System, "here are some", vec![]),
                mk(2, Stream::User, "weather there", vec![]),
            ],
        };
        let table = EmbeddingTable::parse("boston 1 0\n", OovPolicy::ZeroVector).unwrap();
        let labels = LabelEmbeddings::build(&table, std::slice::from_ref(&d));
        let catalog = build_schema_catalog(std::slice::from_ref(&d));
        let cfg = CandidateConfig::default();
        let pipe = Pipeline { table: &table, labels: &labels, catalog: &catalog, config: &cfg };
        let got = rule_predict(&d, 2, &rules, &pipe).unwrap();
        assert_eq!(got, [Slot::new("City", "boston")].into_iter().collect());

        let mut quiet = d.clone();
        quiet.turns[2].tokens = tokenize("weather tomorrow");
        assert!(rule_predict(&quiet, 2, &rules, &pipe).unwrap().is_empty());
    }

    #[test]
    fn unresolvable_type_is_a_config_error() {
        let text = "[[rules]]\nanaphor_phrases = [\"there\"]\ncandidate_type = \"LOCATION\"\n";
        assert!(matches!(RuleSet::parse(text), Err(Error::Config(_))));
        let text = "[type_map]\nCity = \"LOCATION\"\n[[rules]]\nanaphor_phrases = []\ncandidate_type = \"LOCATION\"\n";
        assert!(RuleSet::parse(text).is_err());
    }

    #[test]
    fn phrase_matching_is_contiguous_and_ignores_punctuation() {
        let text = "[type_map]\nCity = \"LOC\"\n[[rules]]\nanaphor_phrases = [\"over there\"]\ncandidate_type = \"LOC\"\n";
        let rules = RuleSet::parse(text).unwrap();
        assert_eq!(rules.triggered(&tokenize("go over there, please")).len(), 1);
        assert!(rules.triggered(&tokenize("over and there")).is_empty());
    }

    #[test]
    fn detailed_type_entries_check_agreement() {
        let text = r#"
            [type_map]
            Singer = { class = "PERSON", gender = "female" }
            Actor = { class = "PERSON", gender = "male" }
            [[rules]]
            anaphor_phrases = ["her"]
            candidate_type = "PERSON"
            gender = "female"
        "#;
        let rules = RuleSet::parse(text).unwrap();
        let triggered = rules.triggered(&["play", "her", "songs"]);
        let cand = |k: &str| CandidateSlot {
            original_key: k.into(),
            mapped_key: k.into(),
            value: "x".into(),
            stream: Stream::User,
            origin_turn: 0,
            distance: 2,
            similarity: 1.0,
            label: None,
        };
        assert!(rules.carries(&triggered, &cand("Singer")));
        assert!(!rules.carries(&triggered, &cand("Actor")));
    }
}
