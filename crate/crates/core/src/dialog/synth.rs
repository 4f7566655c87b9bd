//! Seeded generator of heterogeneous-schema dialogs.
//!
//! Each domain has its own slot schema. Alias groups tie together keys of
//! different domains that hold the same kind of value (`WeatherLocation`,
//! `City`, `Town`). A dialog switches domain between user turns now and
//! then; later user turns refer back to earlier slots with an anaphor
//! ("there", "it") instead of restating them, and those slots become the
//! turn's references in the vocabulary of the current domain.
//!
//! The generator also emits a token embedding table in which every value of
//! a slot type clusters around an orthogonal type centroid, so label
//! embeddings of aliased keys have a large dot product and unrelated keys a
//! small one.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{build_schema_catalog, tokenize, Dialog, Slot, Stream, Turn, ENTITY_KEY};
use crate::candidates::{CandidateConfig, Label};
use crate::embeddings::{EmbeddingTable, LabelEmbeddings, OovPolicy};
use crate::error::{Error, Result};
use crate::pipeline::Pipeline;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub dialogs: usize,
    pub embedding_dim: usize,
    /// Mean number of user turns per dialog.
    pub target_turns_per_session: f64,
    /// Fraction of dialogs whose user turns span more than one schema.
    pub disparate_schema_rate: f64,
    pub target_positive_per_turn: f64,
    pub target_negative_per_turn: f64,
    /// Candidate window used when measuring candidate rates.
    pub window: usize,
    pub beta: f64,
    /// Standard deviation of the per-token noise around type centroids.
    pub noise: f64,
    /// Probability that a system turn offers an entity when its domain has any.
    pub entity_offer_rate: f64,
    pub user_extra_slots: f64,
    /// Mean number of new slots a system turn adds beyond echoed ones.
    pub system_slots: f64,
    /// Probability that a system turn echoes each slot of the user turn before it.
    pub echo_rate: f64,
    pub calibration_rounds: usize,
    pub carry_mode: CarryMode,
    pub entity_anaphors: Vec<String>,
    pub alias_groups: Vec<AliasGroup>,
    pub domains: Vec<DomainSpec>,
    pub vocabulary: Vocabulary,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            dialogs: 1000,
            embedding_dim: 32,
            target_turns_per_session: 2.2,
            disparate_schema_rate: 0.2,
            target_positive_per_turn: 0.37,
            target_negative_per_turn: 4.07,
            window: 2,
            beta: 0.5,
            noise: 0.3,
            entity_offer_rate: 0.3,
            user_extra_slots: 0.8,
            system_slots: 1.0,
            echo_rate: 0.7,
            calibration_rounds: 12,
            carry_mode: CarryMode::Turn,
            entity_anaphors: vec!["it".into(), "that place".into()],
            alias_groups: Vec::new(),
            domains: Vec::new(),
            vocabulary: Vocabulary::default(),
        }
    }
}

/// How a user turn decides which context slots it refers back to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CarryMode {
    /// One draw per turn; a referring turn carries every mappable type in
    /// the window.
    #[default]
    Turn,
    /// An independent draw for each mappable type.
    Slot,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AliasGroup {
    pub name: String,
    pub keys: Vec<String>,
    pub values: Vec<String>,
    pub anaphors: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlotSpec {
    pub key: String,
    pub values: Vec<String>,
    pub anaphors: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainSpec {
    pub name: String,
    pub words: Vec<String>,
    pub user_acts: Vec<String>,
    pub slots: Vec<SlotSpec>,
    /// Entities the system may offer in this domain.
    pub entities: Vec<String>,
    /// Key that receives a carried entity.
    pub entity_key: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Vocabulary {
    pub fillers: Vec<String>,
}

impl GeneratorConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("generator config: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&crate::util::read_to_string(path)?)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SyntheticStats {
    pub dialogs: usize,
    pub user_turns: usize,
    pub avg_turns_per_session: f64,
    pub disparate_schema_rate: f64,
    pub avg_positive_per_turn: f64,
    pub avg_negative_per_turn: f64,
}

/// Generation knobs found by calibration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub carry_prob: f64,
    pub slot_scale: f64,
}

pub struct SyntheticCorpus {
    pub dialogs: Vec<Dialog>,
    pub embeddings: EmbeddingTable,
    pub stats: SyntheticStats,
    pub calibration: Calibration,
}

/// A slot type: an alias group, a plain key, or offered entities.
#[derive(Debug)]
struct SlotType {
    values: Vec<String>,
    anaphors: Vec<Vec<String>>,
}

#[derive(Debug)]
struct Domain {
    name: String,
    words: Vec<String>,
    acts: Vec<String>,
    /// (key, type name) pairs.
    keys: Vec<(String, String)>,
    entities: Vec<String>,
    entity_key: Option<String>,
}

impl Domain {
    fn key_of_type(&self, ty: &str) -> Option<&str> {
        if ty == ENTITY_KEY {
            return self.entity_key.as_deref();
        }
        self.keys.iter().find(|(_, t)| t == ty).map(|(k, _)| k.as_str())
    }
}

struct World {
    types: BTreeMap<String, SlotType>,
    key_types: BTreeMap<String, String>,
    domains: Vec<Domain>,
    fillers: Vec<String>,
}

fn phrases(items: &[String]) -> Vec<Vec<String>> {
    items.iter().map(|a| tokenize(a)).filter(|t| !t.is_empty()).collect()
}

impl World {
    fn build(config: &GeneratorConfig) -> Result<World> {
        if config.domains.is_empty() {
            return Err(Error::Config("generator config has no domains".into()));
        }
        let fillers: Vec<String> = config.vocabulary.fillers.iter().flat_map(|f| tokenize(f)).collect();
        if fillers.is_empty() {
            return Err(Error::Config("generator vocabulary is empty".into()));
        }
        if config.target_turns_per_session < 1.0 {
            return Err(Error::Config("target_turns_per_session must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&config.disparate_schema_rate) {
            return Err(Error::Config("disparate_schema_rate must lie in [0, 1)".into()));
        }
        if config.window == 0 || config.embedding_dim == 0 {
            return Err(Error::Config("window and embedding_dim must be positive".into()));
        }
        let mut key_types = BTreeMap::new();
        let mut types: BTreeMap<String, SlotType> = BTreeMap::new();
        for g in &config.alias_groups {
            if g.name.is_empty() || g.name == ENTITY_KEY {
                return Err(Error::Config(format!("invalid alias group name {:?}", g.name)));
            }
            for k in &g.keys {
                if key_types.insert(k.clone(), g.name.clone()).is_some() {
                    return Err(Error::Config(format!("key {k} belongs to more than one alias group")));
                }
            }
            types.insert(
                g.name.clone(),
                SlotType { values: g.values.clone(), anaphors: phrases(&g.anaphors) },
            );
        }
        let mut domains = Vec::new();
        for d in &config.domains {
            if d.slots.is_empty() {
                return Err(Error::Config(format!("domain {:?} has no slots", d.name)));
            }
            let mut keys = Vec::new();
            for s in &d.slots {
                let ty = key_types.entry(s.key.clone()).or_insert_with(|| s.key.clone()).clone();
                if keys.iter().any(|(_, t)| *t == ty) {
                    return Err(Error::Config(format!("domain {:?} has two keys of type {ty}", d.name)));
                }
                let entry = types.entry(ty.clone()).or_insert_with(|| SlotType { values: Vec::new(), anaphors: Vec::new() });
                for v in &s.values {
                    if !entry.values.contains(v) {
                        entry.values.push(v.clone());
                    }
                }
                entry.anaphors.extend(phrases(&s.anaphors));
                keys.push((s.key.clone(), ty));
            }
            if let Some(k) = &d.entity_key {
                if !keys.iter().any(|(key, _)| key == k) {
                    return Err(Error::Config(format!("entity_key {k} is not a slot of domain {:?}", d.name)));
                }
            }
            let entities: Vec<String> = d.entities.iter().filter(|e| !tokenize(e).is_empty()).cloned().collect();
            if !entities.is_empty() {
                let entry = types.entry(ENTITY_KEY.into()).or_insert_with(|| SlotType {
                    values: Vec::new(),
                    anaphors: phrases(&config.entity_anaphors),
                });
                for e in &entities {
                    if !entry.values.contains(e) {
                        entry.values.push(e.clone());
                    }
                }
            }
            let words: Vec<String> = d.words.iter().flat_map(|w| tokenize(w)).collect();
            let acts = if d.user_acts.is_empty() { vec!["inform".to_owned()] } else { d.user_acts.clone() };
            domains.push(Domain {
                name: d.name.clone(),
                words,
                acts,
                keys,
                entities,
                entity_key: d.entity_key.clone(),
            });
        }
        for (name, ty) in &mut types {
            ty.values.retain(|v| !tokenize(v).is_empty());
            if ty.values.is_empty() {
                return Err(Error::Config(format!("slot type {name} has no values")));
            }
        }
        if types.len() > config.embedding_dim {
            return Err(Error::Config(format!(
                "embedding_dim {} is smaller than the number of slot types ({})",
                config.embedding_dim,
                types.len()
            )));
        }
        let mut owner: BTreeMap<String, &str> = BTreeMap::new();
        for (name, ty) in &types {
            for tok in ty.values.iter().flat_map(|v| tokenize(v)) {
                if let Some(other) = owner.insert(tok.clone(), name) {
                    if other != name {
                        return Err(Error::Config(format!("value token {tok:?} is shared by slot types {other} and {name}")));
                    }
                }
            }
        }
        Ok(World { types, key_types, domains, fillers })
    }

    fn type_of<'a>(&'a self, key: &'a str) -> &'a str {
        if key == ENTITY_KEY {
            return ENTITY_KEY;
        }
        self.key_types.get(key).map(String::as_str).unwrap_or(key)
    }

    /// Token embeddings: value tokens sit near their type centroid, anaphor
    /// tokens halfway, everything else is isotropic noise.
    fn embeddings(&self, config: &GeneratorConfig, seed: u64) -> Result<EmbeddingTable> {
        let dim = config.embedding_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_e4b0_d1a1_0c05);
        let gauss = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect() };
        let mut centroids: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for name in self.types.keys() {
            let mut v = gauss(&mut rng);
            for b in &basis {
                let p = crate::util::dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
            let n = crate::util::dot(&v, &v).sqrt();
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v.clone());
            centroids.insert(name, v);
        }
        let scale = config.noise / (dim as f64).sqrt();
        let mut anchors: BTreeMap<String, (f64, &str)> = BTreeMap::new();
        for (name, ty) in &self.types {
            for v in &ty.values {
                for tok in tokenize(v) {
                    anchors.entry(tok).or_insert((1.0, name));
                }
            }
        }
        for (name, ty) in &self.types {
            for tok in ty.anaphors.iter().flatten() {
                anchors.entry(tok.clone()).or_insert((0.5, name));
            }
        }
        let mut vocab: BTreeSet<String> = self.fillers.iter().cloned().collect();
        for d in &self.domains {
            vocab.extend(d.words.iter().cloned());
        }
        vocab.extend(anchors.keys().cloned());
        let mut entries = Vec::with_capacity(vocab.len());
        for tok in vocab {
            let noise = gauss(&mut rng);
            let v: Vec<f64> = match anchors.get(&tok) {
                Some((w, ty)) => centroids[ty].iter().zip(&noise).map(|(c, n)| w * c + scale * n).collect(),
                None => noise.iter().map(|n| n / (dim as f64).sqrt()).collect(),
            };
            entries.push((tok, v));
        }
        EmbeddingTable::from_entries(dim, entries, OovPolicy::ZeroVector)
    }
}

/// Probability of switching domain before a user turn so that the expected
/// share of multi-domain dialogs matches `rate`.
fn switch_probability(target_turns: f64, rate: f64, domains: usize) -> f64 {
    if domains < 2 || rate <= 0.0 {
        return 0.0;
    }
    // Extra turns K ~ Geometric(p); P(no switch) = E[(1-q)^K] = p / (1 - (1-p)(1-q)).
    let p = 1.0 / target_turns;
    if p >= 1.0 {
        return 0.0;
    }
    let stay = (1.0 - p / (1.0 - rate)) / (1.0 - p);
    (1.0 - stay).clamp(0.0, 1.0)
}

struct Sampler<'w> {
    world: &'w World,
    config: &'w GeneratorConfig,
    calibration: Calibration,
    switch: f64,
    extra_turns: Geometric,
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as usize).unwrap_or(0)
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    items.choose(rng).expect("non-empty pool")
}

impl<'w> Sampler<'w> {
    fn new(world: &'w World, config: &'w GeneratorConfig, calibration: Calibration) -> Result<Self> {
        let extra_turns = Geometric::new(1.0 / config.target_turns_per_session)
            .map_err(|e| Error::Config(format!("target_turns_per_session: {e}")))?;
        Ok(Sampler {
            world,
            config,
            calibration,
            switch: switch_probability(config.target_turns_per_session, config.disparate_schema_rate, world.domains.len()),
            extra_turns,
        })
    }

    fn value(&self, rng: &mut ChaCha8Rng, ty: &str) -> String {
        pick(rng, &self.world.types[ty].values).clone()
    }

    fn fillers(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
        (0..n).map(|_| pick(rng, &self.world.fillers).clone()).collect()
    }

    fn lead(&self, rng: &mut ChaCha8Rng, domain: &Domain) -> Vec<String> {
        let n = rng.gen_range(1..=2);
        let mut tokens = self.fillers(rng, n);
        if !domain.words.is_empty() {
            tokens.push(pick(rng, &domain.words).clone());
        }
        tokens
    }

    /// Most recent slot of each type in the candidate window before `t`.
    fn window_types(&self, turns: &[Turn], t: usize) -> BTreeMap<String, Slot> {
        let lo = t.saturating_sub(2 * self.config.window);
        let mut out = BTreeMap::new();
        for turn in turns[lo..t].iter().rev() {
            for s in &turn.slots {
                out.entry(self.world.type_of(&s.key).to_owned()).or_insert_with(|| s.clone());
            }
        }
        out
    }

    fn user_turn(&self, rng: &mut ChaCha8Rng, turns: &[Turn], domain: &Domain) -> Turn {
        let t = turns.len();
        let mut segments: Vec<Vec<String>> = Vec::new();
        let mut cues: Vec<Vec<String>> = Vec::new();
        let mut references = Vec::new();
        let mut used: BTreeSet<String> = BTreeSet::new();
        let p = self.calibration.carry_prob.clamp(0.0, 1.0);
        let refers = self.config.carry_mode == CarryMode::Turn && rng.gen_bool(p);
        for (ty, slot) in self.window_types(turns, t) {
            let Some(target) = domain.key_of_type(&ty) else { continue };
            let anaphors = &self.world.types[&ty].anaphors;
            if used.contains(target) || anaphors.is_empty() {
                continue;
            }
            let carry = match self.config.carry_mode {
                CarryMode::Turn => refers,
                CarryMode::Slot => rng.gen_bool(p),
            };
            if !carry {
                continue;
            }
            used.insert(target.to_owned());
            references.push(Slot::new(target, slot.value.clone()));
            cues.push(pick(rng, anaphors).clone());
        }
        let mut free: Vec<&(String, String)> = domain.keys.iter().filter(|(k, _)| !used.contains(k)).collect();
        free.shuffle(rng);
        let wanted = usize::from(references.is_empty()) + poisson(rng, self.config.user_extra_slots * self.calibration.slot_scale);
        let mut slots = Vec::new();
        for (key, ty) in free.into_iter().take(wanted) {
            let value = self.value(rng, ty);
            let n = rng.gen_range(0..=1);
            let mut seg = self.fillers(rng, n);
            seg.extend(tokenize(&value));
            segments.push(seg);
            slots.push(Slot::new(key.clone(), value));
        }
        segments.shuffle(rng);
        cues.shuffle(rng);
        // Explicit values first, anaphors close the utterance.
        let mut tokens = self.lead(rng, domain);
        tokens.extend(segments.into_iter().chain(cues).flatten());
        Turn {
            stream: Stream::User,
            domain: Some(domain.name.clone()),
            act: pick(rng, &domain.acts).clone(),
            slots,
            tokens,
            turn_index: t,
            references,
        }
    }

    fn system_turn(&self, rng: &mut ChaCha8Rng, previous: &Turn, domain: &Domain) -> Turn {
        let mut tokens = self.lead(rng, domain);
        let mut slots = Vec::new();
        let offer = !domain.entities.is_empty() && rng.gen_bool(self.config.entity_offer_rate.clamp(0.0, 1.0));
        if offer {
            let e = pick(rng, &domain.entities).clone();
            tokens.extend(tokenize(&e));
            slots.push(Slot::new(ENTITY_KEY, e));
        }
        for s in &previous.slots {
            if rng.gen_bool(self.config.echo_rate.clamp(0.0, 1.0)) {
                tokens.extend(tokenize(&s.value));
                slots.push(s.clone());
            }
        }
        let mut keys: Vec<&(String, String)> = domain
            .keys
            .iter()
            .filter(|(k, _)| !previous.slots.iter().any(|s| s.key == *k) && !previous.references.iter().any(|s| s.key == *k))
            .collect();
        keys.shuffle(rng);
        let n = poisson(rng, self.config.system_slots * self.calibration.slot_scale);
        for (key, ty) in keys.into_iter().take(n) {
            let value = self.value(rng, ty);
            tokens.extend(tokenize(&value));
            slots.push(Slot::new(key.clone(), value));
        }
        let act = if offer {
            "offer"
        } else if slots.is_empty() {
            "request"
        } else {
            "inform"
        };
        Turn {
            stream: Stream::System,
            domain: Some(domain.name.clone()),
            act: act.into(),
            slots,
            tokens,
            turn_index: previous.turn_index + 1,
            references: Vec::new(),
        }
    }

    fn dialog(&self, rng: &mut ChaCha8Rng, index: usize) -> Dialog {
        let users = 1 + self.extra_turns.sample(rng) as usize;
        let ndom = self.world.domains.len();
        let mut d = rng.gen_range(0..ndom);
        let mut turns: Vec<Turn> = Vec::new();
        for u in 0..users {
            if u > 0 && ndom > 1 && rng.gen_bool(self.switch) {
                d = (d + rng.gen_range(1..ndom)) % ndom;
            }
            let domain = &self.world.domains[d];
            let turn = self.user_turn(rng, &turns, domain);
            turns.push(turn);
            if u + 1 < users {
                let turn = self.system_turn(rng, &turns[turns.len() - 1], domain);
                turns.push(turn);
            }
        }
        Dialog { dialog_id: format!("synth-{index:06}"), turns }
    }

    fn corpus(&self, seed: u64) -> Vec<Dialog> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.config.dialogs).map(|i| self.dialog(&mut rng, i)).collect()
    }
}

/// Corpus statistics, with candidate rates measured by the real candidate
/// pipeline under `config`.
pub fn corpus_stats(dialogs: &[Dialog], table: &EmbeddingTable, config: &CandidateConfig) -> Result<SyntheticStats> {
    let labels = LabelEmbeddings::build(table, dialogs);
    let catalog = build_schema_catalog(dialogs);
    let pipe = Pipeline { table, labels: &labels, catalog: &catalog, config };
    let mut stats = SyntheticStats { dialogs: dialogs.len(), ..Default::default() };
    let (mut pos, mut neg, mut disparate) = (0usize, 0usize, 0usize);
    for dialog in dialogs {
        let mut schemas = BTreeSet::new();
        for t in dialog.user_turns() {
            stats.user_turns += 1;
            schemas.insert(catalog.target_schema(dialog.turns[t].domain.as_deref()));
            for c in pipe.labelled_candidates(dialog, t)? {
                match c.label {
                    Some(Label::Positive) => pos += 1,
                    _ => neg += 1,
                }
            }
        }
        disparate += usize::from(schemas.len() > 1);
    }
    let n = dialogs.len().max(1) as f64;
    let turns = stats.user_turns.max(1) as f64;
    stats.avg_turns_per_session = stats.user_turns as f64 / n;
    stats.disparate_schema_rate = disparate as f64 / n;
    stats.avg_positive_per_turn = pos as f64 / turns;
    stats.avg_negative_per_turn = neg as f64 / turns;
    Ok(stats)
}

fn candidate_config(config: &GeneratorConfig) -> CandidateConfig {
    CandidateConfig { window: config.window, beta: config.beta, ..CandidateConfig::default() }
}

pub fn generate_synthetic(config: &GeneratorConfig, seed: u64) -> Result<SyntheticCorpus> {
    let world = World::build(config)?;
    let embeddings = world.embeddings(config, seed)?;
    let cand_config = candidate_config(config);
    let mut calibration = Calibration { carry_prob: 0.5, slot_scale: 1.0 };
    let mut best: Option<(f64, Calibration, Vec<Dialog>, SyntheticStats)> = None;
    for _ in 0..config.calibration_rounds.max(1) {
        let dialogs = Sampler::new(&world, config, calibration)?.corpus(seed);
        let stats = corpus_stats(&dialogs, &embeddings, &cand_config)?;
        let rel = |got: f64, want: f64| if want > 0.0 { (got / want - 1.0).abs() } else { got };
        let err = rel(stats.avg_positive_per_turn, config.target_positive_per_turn)
            .max(rel(stats.avg_negative_per_turn, config.target_negative_per_turn));
        let next = Calibration {
            carry_prob: adjust(calibration.carry_prob, stats.avg_positive_per_turn, config.target_positive_per_turn, 1.0),
            slot_scale: adjust(calibration.slot_scale, stats.avg_negative_per_turn, config.target_negative_per_turn, 20.0),
        };
        if best.as_ref().map_or(true, |b| err < b.0) {
            best = Some((err, calibration, dialogs, stats));
        }
        if err < 0.02 {
            break;
        }
        calibration = next;
    }
    let (_, calibration, dialogs, stats) = best.expect("at least one calibration round");
    Ok(SyntheticCorpus { dialogs, embeddings, stats, calibration })
}

fn adjust(current: f64, got: f64, want: f64, max: f64) -> f64 {
    if want <= 0.0 {
        return 0.0;
    }
    let ratio = if got > 0.0 { want / got } else { 2.0 };
    (current * ratio.clamp(0.5, 2.0)).clamp(1e-3, max)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn demo_config(dialogs: usize) -> GeneratorConfig {
        GeneratorConfig::parse(include_str!("../../../../configs/synthetic.toml"))
            .map(|c| GeneratorConfig { dialogs, ..c })
            .unwrap()
    }

    fn within(got: f64, want: f64, tol: f64) -> bool {
        (got - want).abs() <= tol * want
    }

    #[test]
    fn switch_probability_hits_target_rate() {
        let p = 1.0 / 2.2;
        let q = switch_probability(2.2, 0.2, 3);
        let stay = p / (1.0 - (1.0 - p) * (1.0 - q));
        assert!((1.0 - stay - 0.2).abs() < 1e-12);
        assert_eq!(switch_probability(2.2, 0.2, 1), 0.0);
    }

    #[test]
    fn stats_near_targets_on_1000_dialogs() {
        let config = demo_config(1000);
        let corpus = generate_synthetic(&config, 7).unwrap();
        let s = &corpus.stats;
        assert!(within(s.avg_turns_per_session, 2.2, 0.15), "{s:?}");
        assert!(within(s.disparate_schema_rate, 0.2, 0.15), "{s:?}");
        assert!(within(s.avg_positive_per_turn, 0.37, 0.15), "{s:?}");
        assert!(within(s.avg_negative_per_turn, 4.07, 0.15), "{s:?}");
        for d in &corpus.dialogs {
            d.validate().unwrap();
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let config = demo_config(100);
        let a = generate_synthetic(&config, 3).unwrap();
        let b = generate_synthetic(&config, 3).unwrap();
        assert_eq!(super::super::corpus::corpus_to_string(&a.dialogs), super::super::corpus::corpus_to_string(&b.dialogs));
        assert_eq!(a.embeddings.to_text(), b.embeddings.to_text());
        let c = generate_synthetic(&config, 4).unwrap();
        assert_ne!(super::super::corpus::corpus_to_string(&a.dialogs), super::super::corpus::corpus_to_string(&c.dialogs));
    }

    #[test]
    fn single_domain_has_no_disparate_sessions() {
        let mut config = demo_config(1);
        config.alias_groups.clear();
        config.domains.truncate(1);
        config.domains[0].entity_key = None;
        config.domains[0].entities.clear();
        for s in &mut config.domains[0].slots {
            if s.values.is_empty() {
                s.values = vec![s.key.to_lowercase()];
            }
        }
        let corpus = generate_synthetic(&config, 0).unwrap();
        assert_eq!(corpus.stats.dialogs, 1);
        assert_eq!(corpus.stats.disparate_schema_rate, 0.0);
    }

    #[test]
    fn aliased_keys_are_similar_and_others_are_not() {
        let config = demo_config(300);
        let corpus = generate_synthetic(&config, 1).unwrap();
        let labels = LabelEmbeddings::build(&corpus.embeddings, &corpus.dialogs);
        let group = &config.alias_groups[0];
        let a = labels.key(&group.keys[0]).unwrap();
        let b = labels.key(&group.keys[1]).unwrap();
        assert!(crate::util::dot(a, b) > config.beta);
        let other = config.domains.iter().flat_map(|d| &d.slots).find(|s| !config.alias_groups.iter().any(|g| g.keys.contains(&s.key))).unwrap();
        let c = labels.key(&other.key).unwrap();
        assert!(crate::util::dot(a, c) < config.beta);
    }

    #[test]
    fn rejects_degenerate_configs() {
        let mut config = demo_config(10);
        config.domains.clear();
        assert!(matches!(generate_synthetic(&config, 0), Err(Error::Config(_))));
        let mut config = demo_config(10);
        config.vocabulary.fillers.clear();
        assert!(matches!(generate_synthetic(&config, 0), Err(Error::Config(_))));
        let mut config = demo_config(10);
        let leaked = config.domains[1].slots[0].values[0].clone();
        config.domains[1].entities.push(format!("the {leaked}"));
        assert!(matches!(generate_synthetic(&config, 0), Err(Error::Config(m)) if m.contains("shared")));
    }
}
