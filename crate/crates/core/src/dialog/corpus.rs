//! Line-delimited JSON corpus format: one dialog per line.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{normalize_tokens, Dialog, Slot, Stream, Turn};
use crate::error::{Error, Result};
use crate::util;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DialogRecord {
    dialog_id: String,
    turns: Vec<TurnRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TurnRecord {
    stream: Stream,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain: Option<String>,
    act: String,
    tokens: Vec<String>,
    slots: Vec<Slot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    references: Option<Vec<Slot>>,
}

impl DialogRecord {
    fn into_dialog(self) -> Result<Dialog> {
        let dialog_id = self.dialog_id;
        let mut turns = Vec::with_capacity(self.turns.len());
        for (i, t) in self.turns.into_iter().enumerate() {
            if t.stream == Stream::System && t.references.as_ref().is_some_and(|r| !r.is_empty()) {
                return Err(Error::InvalidDialog {
                    dialog_id,
                    message: format!("system turn {i} carries references"),
                });
            }
            turns.push(Turn {
                stream: t.stream,
                domain: t.domain,
                act: t.act,
                slots: t.slots,
                tokens: normalize_tokens(&t.tokens),
                turn_index: i,
                references: t.references.unwrap_or_default(),
            });
        }
        let dialog = Dialog { dialog_id, turns };
        dialog.validate()?;
        Ok(dialog)
    }

    fn from_dialog(d: &Dialog) -> Self {
        DialogRecord {
            dialog_id: d.dialog_id.clone(),
            turns: d
                .turns
                .iter()
                .map(|t| TurnRecord {
                    stream: t.stream,
                    domain: t.domain.clone(),
                    act: t.act.clone(),
                    tokens: t.tokens.clone(),
                    slots: t.slots.clone(),
                    references: t.is_user().then(|| t.references.clone()),
                })
                .collect(),
        }
    }
}

/// Parse a single dialog record.
pub fn dialog_from_json(line: &str) -> Result<Dialog> {
    let record: DialogRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    record.into_dialog()
}

pub fn dialog_to_json(dialog: &Dialog) -> String {
    serde_json::to_string(&DialogRecord::from_dialog(dialog)).expect("dialog serializes")
}

/// Parse corpus text. Blank lines are ignored; line numbers are 1-based.
pub fn parse_corpus(text: &str) -> Result<Vec<Dialog>> {
    let mut dialogs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: DialogRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        dialogs.push(record.into_dialog()?);
    }
    Ok(dialogs)
}

pub fn load_corpus(path: &Path) -> Result<Vec<Dialog>> {
    parse_corpus(&util::read_to_string(path)?)
}

pub fn write_corpus(path: &Path, dialogs: &[Dialog]) -> Result<()> {
    util::write_bytes(path, corpus_to_string(dialogs).as_bytes())
}

pub(crate) fn corpus_to_string(dialogs: &[Dialog]) -> String {
    let mut out = String::new();
    for d in dialogs {
        out.push_str(&dialog_to_json(d));
        out.push('\n');
    }
    out
}
