//! Token embeddings and corpus-derived label embeddings.
//!
//! Phrase embeddings are the mean of their token vectors. Slot-key label
//! embeddings average the phrase embeddings of every value observed with the
//! key; dialog-act embeddings average the phrase embeddings of every
//! utterance tagged with the act. Averages are computed as weighted sums
//! over the sorted distinct contributors, which makes them independent of
//! corpus order bit-for-bit.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dialog::Dialog;
use crate::error::{Error, Result};
use crate::util;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OovPolicy {
    #[default]
    ZeroVector,
    MeanVector,
}

#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    dim: usize,
    index: HashMap<String, usize>,
    data: Vec<f64>,
    oov: Vec<f64>,
    policy: OovPolicy,
    duplicates: usize,
}

impl EmbeddingTable {
    /// Build a table from `(token, vector)` pairs. Later duplicates win.
    pub fn from_entries<I, S>(dim: usize, entries: I, policy: OovPolicy) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        if dim == 0 {
            return Err(Error::Invalid("embedding dimension must be at least 1".into()));
        }
        let mut table = EmbeddingTable {
            dim,
            index: HashMap::new(),
            data: Vec::new(),
            oov: vec![0.0; dim],
            policy,
            duplicates: 0,
        };
        for (n, (token, vector)) in entries.into_iter().enumerate() {
            if vector.len() != dim {
                return Err(Error::EmbeddingDimension {
                    line: n + 1,
                    expected: dim,
                    found: vector.len(),
                });
            }
            table.insert(token.into(), &vector);
        }
        table.finish();
        Ok(table)
    }

    fn insert(&mut self, token: String, vector: &[f64]) {
        match self.index.get(&token) {
            Some(&row) => {
                self.data[row * self.dim..(row + 1) * self.dim].copy_from_slice(vector);
                self.duplicates += 1;
            }
            None => {
                self.index.insert(token, self.index.len());
                self.data.extend_from_slice(vector);
            }
        }
    }

    fn finish(&mut self) {
        if self.policy == OovPolicy::MeanVector && !self.index.is_empty() {
            let n = self.index.len() as f64;
            let mut mean = vec![0.0; self.dim];
            for row in self.data.chunks_exact(self.dim) {
                for (m, x) in mean.iter_mut().zip(row) {
                    *m += x;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n);
            self.oov = mean;
        }
    }

    /// Parse the `token x1 … xE` text format.
    pub fn parse(text: &str, policy: OovPolicy) -> Result<Self> {
        let mut dim = None;
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else { continue };
            let vector = fields
                .map(|f| {
                    f.parse::<f64>().map_err(|e| Error::Parse {
                        line: n + 1,
                        message: format!("bad component {f:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let expected = *dim.get_or_insert(vector.len());
            if vector.len() != expected || expected == 0 {
                return Err(Error::EmbeddingDimension {
                    line: n + 1,
                    expected,
                    found: vector.len(),
                });
            }
            entries.push((token.to_owned(), vector));
        }
        let Some(dim) = dim else {
            return Err(Error::Invalid("embedding file contains no vectors".into()));
        };
        Self::from_entries(dim, entries, policy)
    }

    pub fn load(path: &Path, policy: OovPolicy) -> Result<Self> {
        Self::parse(&util::read_to_string(path)?, policy)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn policy(&self) -> OovPolicy {
        self.policy
    }

    /// Number of duplicate tokens overwritten while loading.
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Vector for `token`; OOV tokens resolve through the table's policy.
    pub fn lookup(&self, token: &str) -> &[f64] {
        match self.index.get(token) {
            Some(&row) => &self.data[row * self.dim..(row + 1) * self.dim],
            None => &self.oov,
        }
    }

    /// Mean of the token vectors of a phrase.
    pub fn embed_phrase<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<f64>> {
        if tokens.is_empty() {
            return Err(Error::Invalid("cannot embed an empty phrase".into()));
        }
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for t in tokens {
            *counts.entry(t.as_ref()).or_default() += 1;
        }
        let n = tokens.len() as f64;
        let mut out = vec![0.0; self.dim];
        for (token, count) in counts {
            let w = count as f64 / n;
            for (o, x) in out.iter_mut().zip(self.lookup(token)) {
                *o += w * x;
            }
        }
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut rows: Vec<(&String, &usize)> = self.index.iter().collect();
        rows.sort_by_key(|(_, &r)| r);
        let mut out = String::new();
        for (token, &row) in rows {
            out.push_str(token);
            for x in &self.data[row * self.dim..(row + 1) * self.dim] {
                write!(out, " {x}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// An averaged vector together with the number of observations behind it.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelVector {
    pub vector: Vec<f64>,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelEmbeddings {
    dim: usize,
    keys: BTreeMap<String, LabelVector>,
    acts: BTreeMap<String, LabelVector>,
}

fn weighted_mean(dim: usize, parts: &BTreeMap<String, (Vec<f64>, usize)>) -> LabelVector {
    let total: usize = parts.values().map(|(_, c)| c).sum();
    let mut out = vec![0.0; dim];
    for (vector, count) in parts.values() {
        let w = *count as f64 / total as f64;
        for (o, x) in out.iter_mut().zip(vector) {
            *o += w * x;
        }
    }
    LabelVector {
        vector: out,
        count: total,
    }
}

impl LabelEmbeddings {
    pub fn new(dim: usize) -> Self {
        LabelEmbeddings {
            dim,
            keys: BTreeMap::new(),
            acts: BTreeMap::new(),
        }
    }

    /// Average value embeddings per slot key and utterance embeddings per
    /// dialog act, counting repeated observations with multiplicity. Slot
    /// values are taken from both turn slots and gold references.
    pub fn build(table: &EmbeddingTable, dialogs: &[Dialog]) -> Self {
        let dim = table.dim();
        let mut key_parts: BTreeMap<String, BTreeMap<String, (Vec<f64>, usize)>> = BTreeMap::new();
        let mut act_parts: BTreeMap<String, BTreeMap<String, (Vec<f64>, usize)>> = BTreeMap::new();
        for turn in dialogs.iter().flat_map(|d| &d.turns) {
            for slot in turn.slots.iter().chain(&turn.references) {
                let tokens = slot.value_tokens();
                if tokens.is_empty() {
                    continue;
                }
                let surface = tokens.join(" ");
                let entry = key_parts
                    .entry(slot.key.clone())
                    .or_default()
                    .entry(surface)
                    .or_insert_with(|| (table.embed_phrase(&tokens).expect("non-empty"), 0));
                entry.1 += 1;
            }
            if !turn.tokens.is_empty() {
                let surface = turn.tokens.join(" ");
                let entry = act_parts
                    .entry(turn.act.clone())
                    .or_default()
                    .entry(surface)
                    .or_insert_with(|| (table.embed_phrase(&turn.tokens).expect("non-empty"), 0));
                entry.1 += 1;
            }
        }
        LabelEmbeddings {
            dim,
            keys: key_parts
                .iter()
                .map(|(k, parts)| (k.clone(), weighted_mean(dim, parts)))
                .collect(),
            acts: act_parts
                .iter()
                .map(|(a, parts)| (a.clone(), weighted_mean(dim, parts)))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn key(&self, key: &str) -> Option<&[f64]> {
        self.keys.get(key).map(|l| l.vector.as_slice())
    }

    pub fn act(&self, act: &str) -> Option<&[f64]> {
        self.acts.get(act).map(|l| l.vector.as_slice())
    }

    pub fn key_entry(&self, key: &str) -> Option<&LabelVector> {
        self.keys.get(key)
    }

    pub fn act_entry(&self, act: &str) -> Option<&LabelVector> {
        self.acts.get(act)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.keys.keys().map(String::as_str)
    }

    pub fn acts(&self) -> impl Iterator<Item = &str> {
        self.acts.keys().map(String::as_str)
    }

    pub fn insert_key(&mut self, key: impl Into<String>, vector: Vec<f64>, count: usize) -> Result<()> {
        self.check_dim(&vector)?;
        self.keys.insert(key.into(), LabelVector { vector, count: count.max(1) });
        Ok(())
    }

    pub fn insert_act(&mut self, act: impl Into<String>, vector: Vec<f64>, count: usize) -> Result<()> {
        self.check_dim(&vector)?;
        self.acts.insert(act.into(), LabelVector { vector, count: count.max(1) });
        Ok(())
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "label vector".into(),
                expected: self.dim,
                found: v.len(),
            });
        }
        Ok(())
    }

    /// Serialize as embedding text with `key:` / `act:` prefixed tokens and a
    /// `#count` suffix carrying the observation count.
    pub fn to_text(&self) -> Result<String> {
        let mut out = String::new();
        for (prefix, map) in [("key", &self.keys), ("act", &self.acts)] {
            for (name, label) in map {
                if name.chars().any(char::is_whitespace) {
                    return Err(Error::Invalid(format!(
                        "label {name:?} contains whitespace and cannot be persisted"
                    )));
                }
                write!(out, "{prefix}:{name}#{}", label.count).unwrap();
                for x in &label.vector {
                    write!(out, " {x}").unwrap();
                }
                out.push('\n');
            }
        }
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut dim = None;
        let mut labels = LabelEmbeddings::new(0);
        for (n, line) in text.lines().enumerate() {
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else { continue };
            let bad = |message: String| Error::Parse { line: n + 1, message };
            let vector = fields
                .map(|f| f.parse::<f64>().map_err(|e| bad(format!("bad component {f:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            let expected = *dim.get_or_insert(vector.len());
            if vector.len() != expected || expected == 0 {
                return Err(Error::EmbeddingDimension { line: n + 1, expected, found: vector.len() });
            }
            let (kind, rest) = token
                .split_once(':')
                .ok_or_else(|| bad(format!("label token {token:?} lacks a key:/act: prefix")))?;
            let (name, count) = match rest.rsplit_once('#') {
                Some((name, count)) => (
                    name,
                    count.parse::<usize>().map_err(|e| bad(format!("bad count in {token:?}: {e}")))?,
                ),
                None => (rest, 1),
            };
            let entry = LabelVector { vector, count: count.max(1) };
            match kind {
                "key" => labels.keys.insert(name.to_owned(), entry),
                "act" => labels.acts.insert(name.to_owned(), entry),
                other => return Err(bad(format!("unknown label kind {other:?}"))),
            };
        }
        labels.dim = dim.ok_or_else(|| Error::Invalid("label file contains no vectors".into()))?;
        Ok(labels)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&util::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        util::write_bytes(path, self.to_text()?.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialog::{fixtures::demo_dialog, tokenize, Slot};
    use proptest::prelude::*;

    fn ab(policy: OovPolicy) -> EmbeddingTable {
        EmbeddingTable::parse("a 1 0\nb 0 1\n", policy).unwrap()
    }

    #[test]
    fn load_two_line_file() {
        let t = ab(OovPolicy::ZeroVector);
        assert_eq!(t.dim(), 2);
        assert_eq!(t.lookup("a"), &[1.0, 0.0]);
    }

    #[test]
    fn oov_policies() {
        assert_eq!(ab(OovPolicy::ZeroVector).lookup("zzz"), &[0.0, 0.0]);
        assert_eq!(ab(OovPolicy::MeanVector).lookup("zzz"), &[0.5, 0.5]);
    }

    #[test]
    fn inconsistent_dimension_names_line() {
        match EmbeddingTable::parse("a 1 0\nb 0 1 2\n", OovPolicy::ZeroVector) {
            Err(Error::EmbeddingDimension { line, expected, found }) => {
                assert_eq!((line, expected, found), (2, 2, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_token_last_wins() {
        let t = EmbeddingTable::parse("a 1 0\nb 0 1\na 3 3\n", OovPolicy::ZeroVector).unwrap();
        assert_eq!(t.lookup("a"), &[3.0, 3.0]);
        assert_eq!(t.duplicates(), 1);
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn phrase_means() {
        let t = EmbeddingTable::parse("san 1 0\nfrancisco 0 1\n", OovPolicy::ZeroVector).unwrap();
        assert_eq!(t.embed_phrase(&["san", "francisco"]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(t.embed_phrase(&["san"]).unwrap(), vec![1.0, 0.0]);
        let t = ab(OovPolicy::ZeroVector);
        assert_eq!(t.embed_phrase(&["a", "a", "b"]).unwrap(), vec![2.0 / 3.0, 1.0 / 3.0]);
        assert!(t.embed_phrase::<&str>(&[]).is_err());
    }

    fn city_corpus() -> Vec<Dialog> {
        let mut d = demo_dialog();
        d.turns[0].slots = vec![Slot::new("City", "san francisco")];
        d.turns[2].slots = vec![Slot::new("City", "boston")];
        d.turns[2].references.clear();
        d.turns[4].references.clear();
        vec![d]
    }

    #[test]
    fn key_embedding_is_mean_of_values() {
        let t = EmbeddingTable::parse("san 1 0\nfrancisco 0 1\nboston 1 0\n", OovPolicy::ZeroVector)
            .unwrap();
        let labels = LabelEmbeddings::build(&t, &city_corpus());
        assert_eq!(labels.key("City").unwrap(), &[0.75, 0.25]);
        assert_eq!(labels.key_entry("City").unwrap().count, 2);
        // observed once
        assert_eq!(labels.key("Temperature").unwrap(), &[0.0, 0.0]);
        assert_eq!(labels.key("Entity").unwrap(), t.embed_phrase(&tokenize("la taqueria")).unwrap());
    }

    #[test]
    fn act_embedding_is_mean_of_utterances() {
        let t = ab(OovPolicy::ZeroVector);
        let mut d = demo_dialog();
        d.turns.truncate(3);
        d.turns[0].act = "x".into();
        d.turns[0].tokens = vec!["a".into()];
        d.turns[2].act = "x".into();
        d.turns[2].tokens = vec!["b".into()];
        let labels = LabelEmbeddings::build(&t, &[d]);
        assert_eq!(labels.act("x").unwrap(), &[0.5, 0.5]);
        assert!(labels.act("never-seen").is_none());
    }

    #[test]
    fn label_text_round_trip() {
        let t = EmbeddingTable::parse("san 0.1 0.7\nfrancisco -3e-5 1\n", OovPolicy::ZeroVector)
            .unwrap();
        let labels = LabelEmbeddings::build(&t, &[demo_dialog()]);
        let back = LabelEmbeddings::parse(&labels.to_text().unwrap()).unwrap();
        assert_eq!(back, labels);
    }

    fn arb_table() -> impl Strategy<Value = EmbeddingTable> {
        proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 6).prop_map(|rows| {
            let entries = rows.into_iter().enumerate().map(|(i, v)| (format!("w{i}"), v));
            EmbeddingTable::from_entries(3, entries, OovPolicy::ZeroVector).unwrap()
        })
    }

    fn arb_dialogs() -> impl Strategy<Value = Vec<Dialog>> {
        let slot = (0usize..3, proptest::collection::vec(0usize..6, 1..4))
            .prop_map(|(k, ws)| Slot::new(format!("K{k}"), ws.iter().map(|w| format!("w{w}")).collect::<Vec<_>>().join(" ")));
        proptest::collection::vec(proptest::collection::vec(slot, 0..3), 1..6).prop_map(|turn_slots| {
            turn_slots
                .into_iter()
                .enumerate()
                .map(|(i, slots)| {
                    let mut d = demo_dialog();
                    d.dialog_id = format!("d{i}");
                    d.turns.truncate(1);
                    d.turns[0].slots = slots;
                    d.turns[0].tokens = vec![format!("w{}", i % 6)];
                    d
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn label_embeddings_are_order_independent(table in arb_table(), dialogs in arb_dialogs(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = dialogs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(LabelEmbeddings::build(&table, &dialogs), LabelEmbeddings::build(&table, &shuffled));
        }

        #[test]
        fn averaging_is_convex(table in arb_table(), dialogs in arb_dialogs()) {
            let labels = LabelEmbeddings::build(&table, &dialogs);
            let bound = (0..6)
                .flat_map(|i| table.lookup(&format!("w{i}")).to_vec())
                .fold(0.0f64, |m, x| m.max(x.abs()));
            for key in labels.keys() {
                for x in labels.key(key).unwrap() {
                    prop_assert!(x.abs() <= bound + 1e-12);
                }
            }
        }

        #[test]
        fn repeated_token_phrase_equals_token(table in arb_table(), i in 0usize..8, n in 1usize..20) {
            let tok = format!("w{i}");
            let phrase = vec![tok.clone(); n];
            prop_assert_eq!(table.embed_phrase(&phrase).unwrap(), table.embed_phrase(&[tok]).unwrap());
        }
    }
}
