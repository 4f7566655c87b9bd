//! Glue between candidate generation and the model: target schemas,
//! candidate features and turn-level prediction.

use std::collections::{BTreeSet, HashSet};

use crate::candidates::{label_candidates, turn_candidates, CandidateConfig, CandidateSlot, TurnCandidates};
use crate::dialog::{Dialog, SchemaCatalog, Slot};
use crate::embeddings::{EmbeddingTable, LabelEmbeddings};
use crate::error::Result;
use crate::model::{encode_act, encode_slot, CandidateInput, CarryoverModel};

/// Borrowed resources needed to turn a dialog turn into model inputs.
#[derive(Clone, Copy, Debug)]
pub struct Pipeline<'a> {
    pub table: &'a EmbeddingTable,
    pub labels: &'a LabelEmbeddings,
    pub catalog: &'a SchemaCatalog,
    pub config: &'a CandidateConfig,
}

impl<'a> Pipeline<'a> {
    pub fn with_config(self, config: &'a CandidateConfig) -> Pipeline<'a> {
        Pipeline { config, ..self }
    }

    pub fn target_schema(&self, dialog: &Dialog, t: usize) -> BTreeSet<String> {
        let domain = dialog.turns.get(t).and_then(|turn| turn.domain.as_deref());
        self.catalog.target_schema(domain)
    }

    /// Transformed candidates of user turn `t` that the model can encode.
    pub fn candidates(&self, dialog: &Dialog, t: usize) -> Result<TurnCandidates> {
        let schema = self.target_schema(dialog, t);
        let mut out = turn_candidates(dialog, t, self.labels, &schema, self.config)?;
        let before = out.candidates.len();
        out.candidates.retain(|c| self.labels.key(&c.mapped_key).is_some());
        out.skipped += before - out.candidates.len();
        Ok(out)
    }

    pub fn labelled_candidates(&self, dialog: &Dialog, t: usize) -> Result<Vec<CandidateSlot>> {
        let cands = self.candidates(dialog, t)?.candidates;
        Ok(label_candidates(cands, &dialog.turns[t].references))
    }

    pub fn candidate_input(&self, dialog: &Dialog, t: usize, cand: &CandidateSlot) -> Result<CandidateInput> {
        Ok(CandidateInput {
            slot: encode_slot(self.labels, self.table, cand)?,
            act: encode_act(self.labels, &dialog.turns[t].act),
            distance: cand.distance,
        })
    }
}

/// Each transformed candidate of user turn `t` paired with `P(+1)`.
pub fn score_turn(model: &CarryoverModel, pipe: &Pipeline<'_>, dialog: &Dialog, t: usize) -> Result<Vec<(CandidateSlot, f64)>> {
    let cands = pipe.candidates(dialog, t)?.candidates;
    if cands.is_empty() {
        return Ok(Vec::new());
    }
    let enc = model.encode_streams(pipe.table, dialog, t)?;
    cands
        .into_iter()
        .map(|c| {
            let input = pipe.candidate_input(dialog, t, &c)?;
            let p = model.score_candidate(&enc, &input)?[1];
            Ok((c, p))
        })
        .collect()
}

/// Slots carried into user turn `t`: the deduplicated
/// `(mapped_key, value)` of every candidate with `P(+1) > tau`.
pub fn predict_turn(model: &CarryoverModel, pipe: &Pipeline<'_>, dialog: &Dialog, t: usize, tau: f64) -> Result<BTreeSet<Slot>> {
    Ok(threshold(&score_turn(model, pipe, dialog, t)?, tau))
}

pub fn threshold(scored: &[(CandidateSlot, f64)], tau: f64) -> BTreeSet<Slot> {
    scored.iter().filter(|(_, p)| *p > tau).map(|(c, _)| c.slot()).collect()
}

/// Predictions for every user turn of every dialog, in corpus order.
pub fn predict_corpus(model: &CarryoverModel, pipe: &Pipeline<'_>, dialogs: &[Dialog], tau: f64) -> Result<Vec<BTreeSet<Slot>>> {
    use rayon::prelude::*;
    let turns: Vec<(usize, usize)> = dialogs
        .iter()
        .enumerate()
        .flat_map(|(i, d)| d.user_turns().map(move |t| (i, t)))
        .collect();
    turns
        .par_iter()
        .map(|&(i, t)| predict_turn(model, pipe, &dialogs[i], t, tau))
        .collect()
}

/// Gold reference sets for every user turn, aligned with [`predict_corpus`].
pub fn corpus_references(dialogs: &[Dialog]) -> Vec<BTreeSet<Slot>> {
    dialogs
        .iter()
        .flat_map(|d| d.user_turns().map(move |t| d.turns[t].references.iter().cloned().collect()))
        .collect()
}

/// Deduplicate slots case-insensitively, keeping the first spelling.
pub fn dedup_slots(slots: impl IntoIterator<Item = Slot>) -> Vec<Slot> {
    let mut seen = HashSet::new();
    slots.into_iter().filter(|s| seen.insert(s.normalized())).collect()
}
