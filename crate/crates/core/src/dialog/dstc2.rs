//! Conversion of DSTC2 sessions into carryover dialogs.
//!
//! A DSTC2 session directory holds `log.json` (system outputs and live
//! ASR/SLU hypotheses) and `label.json` (per-turn goal labels). Each log
//! turn pairs a system output with the user input that follows it, so a
//! session reads `V0 U1 V1 U2 …`. Conversion keeps only the 1-best ASR and
//! SLU hypotheses, drops the opening system turn so dialogs start with the
//! user, and empties every system slot set so system turns never produce
//! candidates.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{corpus, normalize_tokens, tokenize, Dialog, Slot, Stream, Turn};
use crate::error::{Error, Result};

/// How gold references are derived from the goal labels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceMapping {
    /// Goal slots not stated in the current user turn that were stated in
    /// an earlier user turn of the session.
    #[default]
    GoalCarried,
    /// Every goal slot not stated in the current user turn.
    GoalMinusCurrent,
}

impl ReferenceMapping {
    pub fn describe(self) -> &'static str {
        match self {
            ReferenceMapping::GoalCarried => {
                "goal-carried: goal slots absent from the current 1-best SLU but present in an earlier user turn's 1-best SLU"
            }
            ReferenceMapping::GoalMinusCurrent => "goal-minus-current: goal slots absent from the current 1-best SLU",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Dstc2Options {
    pub reference_mapping: ReferenceMapping,
    pub domain: String,
    /// Placeholder token for user turns with an empty 1-best ASR hypothesis.
    pub empty_token: String,
}

impl Default for Dstc2Options {
    fn default() -> Self {
        Dstc2Options {
            reference_mapping: ReferenceMapping::default(),
            domain: "restaurant".into(),
            empty_token: "<empty>".into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConversionSummary {
    pub sessions_seen: usize,
    pub dialogs_written: usize,
    pub sessions_skipped: usize,
    pub skipped: Vec<String>,
    /// Leading system turns removed.
    pub turns_dropped: usize,
    pub empty_user_utterances: usize,
    pub references: usize,
    pub reference_mapping: String,
}

/// Directories under `root` (inclusive) containing a `log.json`, sorted.
fn session_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        if dir.join("log.json").is_file() {
            out.push(dir.clone());
        }
        let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            if entry.file_type().map_err(|e| Error::io(entry.path(), e))?.is_dir() {
                stack.push(entry.path());
            }
        }
    }
    out.sort();
    Ok(out)
}

fn read_json(path: &Path) -> std::result::Result<Value, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn field<'a>(v: &'a Value, name: &str) -> std::result::Result<&'a Value, String> {
    v.get(name).ok_or_else(|| format!("missing field {name:?}"))
}

/// Inform slots of an SLU hypothesis (a list of `{act, slots}`).
fn inform_slots(hyp: &Value) -> Vec<Slot> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for act in hyp.as_array().into_iter().flatten() {
        if act.get("act").and_then(Value::as_str) != Some("inform") {
            continue;
        }
        for pair in act.get("slots").and_then(Value::as_array).into_iter().flatten() {
            let (Some(k), Some(v)) = (pair.get(0).and_then(Value::as_str), pair.get(1).and_then(Value::as_str)) else {
                continue;
            };
            if k == "this" || tokenize(v).is_empty() {
                continue;
            }
            if seen.insert((k.to_owned(), v.to_owned())) {
                out.push(Slot::new(k, v));
            }
        }
    }
    out
}

fn first_act(acts: &Value) -> String {
    acts.as_array()
        .and_then(|a| a.first())
        .and_then(|a| a.get("act"))
        .and_then(Value::as_str)
        .unwrap_or("null")
        .to_owned()
}

struct UserInput {
    tokens: Vec<String>,
    act: String,
    slots: Vec<Slot>,
    empty: bool,
}

fn user_input(input: &Value, empty_token: &str) -> std::result::Result<UserInput, String> {
    let live = input
        .get("live")
        .or_else(|| input.get("batch"))
        .ok_or("missing field \"live\"")?;
    let asr = field(live, "asr-hyps")?.as_array().ok_or("asr-hyps is not a list")?;
    let text = asr.first().and_then(|h| h.get("asr-hyp")).and_then(Value::as_str).unwrap_or("");
    let mut tokens = tokenize(text);
    let empty = tokens.is_empty();
    if empty {
        tokens.push(empty_token.to_owned());
    }
    let slu = field(live, "slu-hyps")?.as_array().ok_or("slu-hyps is not a list")?;
    let best = slu.first().and_then(|h| h.get("slu-hyp")).cloned().unwrap_or(Value::Array(vec![]));
    Ok(UserInput {
        tokens,
        act: first_act(&best),
        slots: inform_slots(&best),
        empty,
    })
}

fn goal_slots(label_turn: &Value) -> std::result::Result<Vec<Slot>, String> {
    let goals = field(label_turn, "goal-labels")?.as_object().ok_or("goal-labels is not an object")?;
    Ok(goals
        .iter()
        .filter_map(|(k, v)| v.as_str().map(|v| Slot::new(k, v)))
        .collect())
}

/// Outcome of converting one session.
pub struct SessionConversion {
    pub dialog: Dialog,
    pub empty_user_utterances: usize,
}

/// Convert one parsed session. `Err` carries the reason it was skipped.
pub fn convert_session(id: &str, log: &Value, label: &Value, options: &Dstc2Options) -> std::result::Result<SessionConversion, String> {
    let log_turns = field(log, "turns")?.as_array().ok_or("log turns is not a list")?;
    let label_turns = field(label, "turns")?.as_array().ok_or("label turns is not a list")?;
    if log_turns.is_empty() {
        return Err("session has no user turns".into());
    }
    if label_turns.len() != log_turns.len() {
        return Err(format!("{} log turns but {} label turns", log_turns.len(), label_turns.len()));
    }
    let domain = Some(options.domain.clone());
    let mut turns: Vec<Turn> = Vec::new();
    let mut earlier: BTreeSet<(String, String)> = BTreeSet::new();
    let mut empties = 0;
    for (i, (lt, gt)) in log_turns.iter().zip(label_turns).enumerate() {
        let output = field(lt, "output")?;
        if i > 0 {
            let transcript = field(output, "transcript")?.as_str().ok_or("transcript is not a string")?;
            let mut tokens = tokenize(transcript);
            if tokens.is_empty() {
                tokens.push(options.empty_token.clone());
            }
            turns.push(Turn {
                stream: Stream::System,
                domain: domain.clone(),
                act: output.get("dialog-acts").map(first_act).unwrap_or_else(|| "null".into()),
                slots: Vec::new(),
                tokens,
                turn_index: turns.len(),
                references: Vec::new(),
            });
        }
        let input = user_input(field(lt, "input")?, &options.empty_token)?;
        empties += usize::from(input.empty);
        let current: BTreeSet<(String, String)> = input.slots.iter().map(Slot::normalized).collect();
        let references = goal_slots(gt)?
            .into_iter()
            .filter(|g| !current.contains(&g.normalized()))
            .filter(|g| match options.reference_mapping {
                ReferenceMapping::GoalCarried => earlier.contains(&g.normalized()),
                ReferenceMapping::GoalMinusCurrent => true,
            })
            .collect();
        earlier.extend(current);
        turns.push(Turn {
            stream: Stream::User,
            domain: domain.clone(),
            act: input.act,
            slots: input.slots,
            tokens: normalize_tokens(&input.tokens),
            turn_index: turns.len(),
            references,
        });
    }
    let dialog = Dialog { dialog_id: id.to_owned(), turns };
    dialog.validate().map_err(|e| e.to_string())?;
    Ok(SessionConversion { dialog, empty_user_utterances: empties })
}

pub fn convert_dstc2(input: &Path, output: &Path, options: &Dstc2Options) -> Result<ConversionSummary> {
    let (dialogs, summary) = convert_dstc2_dir(input, options)?;
    corpus::write_corpus(output, &dialogs)?;
    Ok(summary)
}

pub fn convert_dstc2_dir(input: &Path, options: &Dstc2Options) -> Result<(Vec<Dialog>, ConversionSummary)> {
    let mut summary = ConversionSummary {
        reference_mapping: options.reference_mapping.describe().into(),
        ..Default::default()
    };
    let mut dialogs = Vec::new();
    for dir in session_dirs(input)? {
        summary.sessions_seen += 1;
        let fallback = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let converted = read_json(&dir.join("log.json")).and_then(|log| {
            let label = read_json(&dir.join("label.json"))?;
            let id = log.get("session-id").and_then(Value::as_str).unwrap_or(&fallback).to_owned();
            convert_session(&id, &log, &label, options)
        });
        match converted {
            Ok(c) => {
                summary.turns_dropped += 1;
                summary.empty_user_utterances += c.empty_user_utterances;
                summary.references += c.dialog.turns.iter().map(|t| t.references.len()).sum::<usize>();
                dialogs.push(c.dialog);
            }
            Err(reason) => {
                summary.sessions_skipped += 1;
                summary.skipped.push(format!("{}: {reason}", dir.display()));
            }
        }
    }
    summary.dialogs_written = dialogs.len();
    Ok((dialogs, summary))
}
