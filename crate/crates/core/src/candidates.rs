//! Candidate slot generation.
//!
//! Context slots from the last `window` user turns and `window` system turns
//! are collected, mapped into the current turn's schema by thresholding the
//! similarity of slot-key label embeddings, and labelled against the gold
//! references.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::dialog::{Dialog, Slot, Stream, ENTITY_KEY};
use crate::embeddings::LabelEmbeddings;
use crate::error::{Error, Result};
use crate::util::dot;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "+1")]
    Positive,
    #[serde(rename = "-1")]
    Negative,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateSlot {
    pub original_key: String,
    pub mapped_key: String,
    pub value: String,
    pub stream: Stream,
    /// Position of the turn the slot came from.
    pub origin_turn: usize,
    /// Number of turns between the origin and the current turn.
    pub distance: usize,
    pub similarity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

impl CandidateSlot {
    pub fn slot(&self) -> Slot {
        Slot::new(self.mapped_key.clone(), self.value.clone())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Similarity {
    #[default]
    Dot,
    Cosine,
}

impl Similarity {
    pub fn score(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Similarity::Dot => dot(a, b),
            Similarity::Cosine => {
                let na = dot(a, a).sqrt();
                let nb = dot(b, b).sqrt();
                if na == 0.0 || nb == 0.0 {
                    0.0
                } else {
                    dot(a, b) / (na * nb)
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CandidateConfig {
    /// Number of preceding user turns (and as many system turns) in context.
    pub window: usize,
    pub beta: f64,
    pub include_system_candidates: bool,
    pub entity_expansion: bool,
    pub similarity: Similarity,
}

impl Default for CandidateConfig {
    fn default() -> Self {
        CandidateConfig {
            window: 2,
            beta: 0.5,
            include_system_candidates: true,
            entity_expansion: true,
            similarity: Similarity::Dot,
        }
    }
}

impl CandidateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Config("candidate window must be at least 1".into()));
        }
        if self.beta.is_nan() {
            return Err(Error::Config("beta must not be NaN".into()));
        }
        Ok(())
    }
}

fn require_user_turn(dialog: &Dialog, t: usize) -> Result<()> {
    match dialog.turns.get(t) {
        Some(turn) if turn.is_user() => Ok(()),
        Some(_) => Err(Error::Invalid(format!(
            "dialog {}: turn {t} is not a user turn",
            dialog.dialog_id
        ))),
        None => Err(Error::Invalid(format!(
            "dialog {}: turn {t} is out of range",
            dialog.dialog_id
        ))),
    }
}

/// Positions of the context turns of user turn `t`, nearest first.
pub fn context_turns(t: usize, window: usize) -> impl Iterator<Item = usize> {
    let start = t.saturating_sub(2 * window);
    (start..t).rev()
}

/// One candidate per (slot, origin turn) in the context window, with
/// `mapped_key == original_key`.
pub fn collect_candidates(dialog: &Dialog, t: usize, config: &CandidateConfig) -> Result<Vec<CandidateSlot>> {
    require_user_turn(dialog, t)?;
    let mut out = Vec::new();
    for origin in context_turns(t, config.window) {
        let turn = &dialog.turns[origin];
        if turn.stream == Stream::System && !config.include_system_candidates {
            continue;
        }
        for slot in &turn.slots {
            out.push(CandidateSlot {
                original_key: slot.key.clone(),
                mapped_key: slot.key.clone(),
                value: slot.value.clone(),
                stream: turn.stream,
                origin_turn: origin,
                distance: t - origin,
                similarity: 0.0,
                label: None,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Transformed {
    pub candidates: Vec<CandidateSlot>,
    /// Pairings skipped because a key had no label embedding.
    pub skipped: usize,
}

/// Map candidates into `target_schema`. An input yields an identity output
/// when its key is in the schema and one output per other schema key whose
/// label-embedding similarity exceeds `beta`.
pub fn transform_candidates(
    cands: &[CandidateSlot],
    labels: &LabelEmbeddings,
    target_schema: &BTreeSet<String>,
    config: &CandidateConfig,
) -> Transformed {
    let mut out = Transformed::default();
    for cand in cands {
        let source = labels.key(&cand.original_key);
        for target in target_schema {
            if *target == cand.original_key {
                let similarity = source.map_or(0.0, |s| config.similarity.score(s, s));
                out.candidates.push(CandidateSlot {
                    mapped_key: target.clone(),
                    similarity,
                    ..cand.clone()
                });
                continue;
            }
            let (Some(s), Some(k)) = (source, labels.key(target)) else {
                out.skipped += 1;
                continue;
            };
            let similarity = config.similarity.score(s, k);
            if similarity > config.beta {
                out.candidates.push(CandidateSlot {
                    mapped_key: target.clone(),
                    similarity,
                    ..cand.clone()
                });
            }
        }
    }
    out
}

/// Replace every generic `Entity` candidate with one candidate per key of the
/// target schema.
pub fn expand_entity(cands: Vec<CandidateSlot>, target_schema: &BTreeSet<String>) -> Vec<CandidateSlot> {
    let mut out = Vec::with_capacity(cands.len());
    for cand in cands {
        if cand.original_key != ENTITY_KEY {
            out.push(cand);
            continue;
        }
        for key in target_schema {
            out.push(CandidateSlot {
                mapped_key: key.clone(),
                similarity: 0.0,
                ..cand.clone()
            });
        }
    }
    out
}

/// Set `label` to positive iff `(mapped_key, value)` is among the references,
/// compared case-insensitively.
pub fn label_candidates(mut cands: Vec<CandidateSlot>, references: &[Slot]) -> Vec<CandidateSlot> {
    let gold: HashSet<(String, String)> = references.iter().map(Slot::normalized).collect();
    for cand in &mut cands {
        let key = (cand.mapped_key.to_lowercase(), cand.value.to_lowercase());
        cand.label = Some(if gold.contains(&key) {
            Label::Positive
        } else {
            Label::Negative
        });
    }
    cands
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TurnCandidates {
    pub candidates: Vec<CandidateSlot>,
    pub skipped: usize,
}

/// collect → transform → expand for user turn `t`.
///
/// With entity expansion enabled, `Entity` candidates bypass the embedding
/// transform and are expanded over the whole target schema instead. Output
/// candidates are unique per (origin turn, mapped key, value).
pub fn turn_candidates(
    dialog: &Dialog,
    t: usize,
    labels: &LabelEmbeddings,
    target_schema: &BTreeSet<String>,
    config: &CandidateConfig,
) -> Result<TurnCandidates> {
    let collected = collect_candidates(dialog, t, config)?;
    let (entities, regular): (Vec<_>, Vec<_>) = collected
        .into_iter()
        .partition(|c| config.entity_expansion && c.original_key == ENTITY_KEY);
    let transformed = transform_candidates(&regular, labels, target_schema, config);
    let mut all = transformed.candidates;
    all.extend(expand_entity(entities, target_schema));
    let mut seen = HashSet::new();
    all.retain(|c| seen.insert((c.origin_turn, c.mapped_key.clone(), c.value.clone())));
    Ok(TurnCandidates {
        candidates: all,
        skipped: transformed.skipped,
    })
}
