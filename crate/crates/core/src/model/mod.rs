//! The carryover classifier.
//!
//! Three recurrent streams encode the current user turn, the context user
//! turns and the context system turns. The candidate slot is encoded as the
//! concatenation of its key's label embedding and its value embedding, and
//! the slot's distance from the current turn goes through a one-hot affine
//! map. Word-level attention pools each stream against the slot encoding and
//! stream-level attention pools the three stream vectors. The decoder
//! concatenates context, dialog-act, slot and distance encodings and applies
//! a tanh hidden layer followed by a two-way softmax.

pub mod attention;
pub mod checkpoint;
pub mod lstm;
pub mod tensor;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::candidates::CandidateSlot;
use crate::dialog::{Dialog, Stream};
use crate::embeddings::{EmbeddingTable, LabelEmbeddings};
use crate::error::{Error, Result};

use attention::{attend, attend_backward, Attention};
use lstm::{backward_sequence, run_sequence, CellState, LstmParams, SequenceTrace};
pub use tensor::Matrix;
use tensor::softmax;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embedding_dim: usize,
    pub recurrent_hidden: usize,
    pub decoder_hidden: usize,
    pub context_window: usize,
    /// Output size of the distance encoder; defaults to the number of
    /// distance classes.
    pub distance_dim: Option<usize>,
    pub use_word_attention: bool,
    pub use_stream_attention: bool,
    pub share_recurrent: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embedding_dim: 300,
            recurrent_hidden: 128,
            decoder_hidden: 256,
            context_window: 2,
            distance_dim: None,
            use_word_attention: true,
            use_stream_attention: false,
            share_recurrent: false,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn act_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn slot_dim(&self) -> usize {
        2 * self.embedding_dim
    }

    /// One class per turn step in a window of user and system turns.
    pub fn distance_classes(&self) -> usize {
        2 * self.context_window
    }

    pub fn distance_out(&self) -> usize {
        self.distance_dim.unwrap_or_else(|| self.distance_classes())
    }

    /// Length of the decoder input `[h_c; h_a; h_s; h_d]`.
    pub fn decoder_input(&self) -> usize {
        self.recurrent_hidden + self.act_dim() + self.slot_dim() + self.distance_out()
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("embedding_dim", self.embedding_dim),
            ("recurrent_hidden", self.recurrent_hidden),
            ("decoder_hidden", self.decoder_hidden),
            ("context_window", self.context_window),
            ("distance_dim", self.distance_out()),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamKind {
    CurrentUser = 0,
    ContextUser = 1,
    ContextSystem = 2,
}

impl StreamKind {
    pub const ALL: [StreamKind; 3] = [
        StreamKind::CurrentUser,
        StreamKind::ContextUser,
        StreamKind::ContextSystem,
    ];

    fn name(self) -> &'static str {
        match self {
            StreamKind::CurrentUser => "current_user",
            StreamKind::ContextUser => "context_user",
            StreamKind::ContextSystem => "context_system",
        }
    }
}

/// All learned parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    /// Three cells, or a single shared one.
    pub cells: Vec<LstmParams>,
    /// `H × 2E`
    pub word_attention: Matrix,
    /// `H × 2E`
    pub stream_attention: Matrix,
    /// `D_h × classes`
    pub distance_weight: Matrix,
    pub distance_bias: Matrix,
    /// `decoder_hidden × decoder_input`
    pub hidden_weight: Matrix,
    pub hidden_bias: Matrix,
    /// `2 × decoder_hidden`
    pub output_weight: Matrix,
    pub output_bias: Matrix,
}

impl Params {
    pub fn zeros(config: &ModelConfig) -> Self {
        let e = config.embedding_dim;
        let h = config.recurrent_hidden;
        let n_cells = if config.share_recurrent { 1 } else { 3 };
        Params {
            cells: (0..n_cells).map(|_| LstmParams::zeros(e, h)).collect(),
            word_attention: Matrix::zeros(h, config.slot_dim()),
            stream_attention: Matrix::zeros(h, config.slot_dim()),
            distance_weight: Matrix::zeros(config.distance_out(), config.distance_classes()),
            distance_bias: Matrix::zeros(config.distance_out(), 1),
            hidden_weight: Matrix::zeros(config.decoder_hidden, config.decoder_input()),
            hidden_bias: Matrix::zeros(config.decoder_hidden, 1),
            output_weight: Matrix::zeros(2, config.decoder_hidden),
            output_bias: Matrix::zeros(2, 1),
        }
    }

    fn cell_names(&self) -> Vec<&'static str> {
        if self.cells.len() == 1 {
            vec!["shared"]
        } else {
            StreamKind::ALL.iter().map(|k| k.name()).collect()
        }
    }

    /// Named tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (name, cell) in self.cell_names().into_iter().zip(&self.cells) {
            out.push((format!("cell.{name}.w_input"), &cell.w_input));
            out.push((format!("cell.{name}.w_hidden"), &cell.w_hidden));
            out.push((format!("cell.{name}.bias"), &cell.bias));
        }
        out.push(("word_attention".into(), &self.word_attention));
        out.push(("stream_attention".into(), &self.stream_attention));
        out.push(("distance.weight".into(), &self.distance_weight));
        out.push(("distance.bias".into(), &self.distance_bias));
        out.push(("decoder.hidden.weight".into(), &self.hidden_weight));
        out.push(("decoder.hidden.bias".into(), &self.hidden_bias));
        out.push(("decoder.output.weight".into(), &self.output_weight));
        out.push(("decoder.output.bias".into(), &self.output_bias));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let names = self.cell_names();
        let mut out = Vec::new();
        for (name, cell) in names.into_iter().zip(self.cells.iter_mut()) {
            out.push((format!("cell.{name}.w_input"), &mut cell.w_input));
            out.push((format!("cell.{name}.w_hidden"), &mut cell.w_hidden));
            out.push((format!("cell.{name}.bias"), &mut cell.bias));
        }
        out.push(("word_attention".into(), &mut self.word_attention));
        out.push(("stream_attention".into(), &mut self.stream_attention));
        out.push(("distance.weight".into(), &mut self.distance_weight));
        out.push(("distance.bias".into(), &mut self.distance_bias));
        out.push(("decoder.hidden.weight".into(), &mut self.hidden_weight));
        out.push(("decoder.hidden.bias".into(), &mut self.hidden_bias));
        out.push(("decoder.output.weight".into(), &mut self.output_weight));
        out.push(("decoder.output.bias".into(), &mut self.output_bias));
        out
    }

    pub fn add_assign(&mut self, other: &Params) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (_, t) in self.tensors_mut() {
            t.scale(s);
        }
    }

    pub fn norm(&self) -> f64 {
        self.tensors().iter().map(|(_, t)| t.sum_squares()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.is_finite())
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.as_slice().len()).sum()
    }
}

/// Encoded streams of one user turn.
#[derive(Clone, Debug)]
pub struct EncodedContext {
    /// Indexed by [`StreamKind`].
    pub streams: [SequenceTrace; 3],
}

impl EncodedContext {
    pub fn stream(&self, kind: StreamKind) -> &SequenceTrace {
        &self.streams[kind as usize]
    }

    pub fn final_states(&self) -> [Vec<f64>; 3] {
        StreamKind::ALL.map(|k| self.stream(k).final_state().h)
    }
}

/// Dense features of one candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateInput {
    /// `h_s`, length `2E`.
    pub slot: Vec<f64>,
    /// `h_a`, length `E`.
    pub act: Vec<f64>,
    pub distance: usize,
}

/// Intermediates of a candidate's forward pass.
#[derive(Clone, Debug)]
pub struct CandidateForward {
    pub word: Option<[Attention; 3]>,
    pub word_query: Vec<f64>,
    pub stream: Option<Attention>,
    pub stream_query: Vec<f64>,
    pub context: Vec<f64>,
    pub z: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logits: [f64; 2],
    /// `(P(−1), P(+1))`
    pub probs: [f64; 2],
}

impl CandidateForward {
    pub fn positive(&self) -> f64 {
        self.probs[1]
    }
}

/// Gradients w.r.t. stream hidden outputs, accumulated from one or more
/// candidates sharing an [`EncodedContext`].
#[derive(Clone, Debug)]
pub struct StreamGrads {
    pub hidden: [Vec<Vec<f64>>; 3],
    pub last: [Vec<f64>; 3],
}

impl StreamGrads {
    pub fn zeros(enc: &EncodedContext, hidden: usize) -> Self {
        StreamGrads {
            hidden: StreamKind::ALL.map(|k| vec![vec![0.0; hidden]; enc.stream(k).len()]),
            last: StreamKind::ALL.map(|_| vec![0.0; hidden]),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CarryoverModel {
    pub config: ModelConfig,
    pub params: Params,
}

impl CarryoverModel {
    /// Random initialisation: uniform in [−0.1, 0.1] from the config seed,
    /// forget-gate biases set to 1.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = Params::zeros(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for (_, t) in params.tensors_mut() {
            for x in t.as_mut_slice() {
                *x = rng.gen_range(-0.1..=0.1);
            }
        }
        let h = config.recurrent_hidden;
        for cell in &mut params.cells {
            for k in h..2 * h {
                cell.bias.set(k, 0, 1.0);
            }
        }
        Ok(CarryoverModel { config, params })
    }

    pub fn from_params(config: ModelConfig, params: Params) -> Result<Self> {
        config.validate()?;
        let expected = Params::zeros(&config);
        for ((name, want), (_, got)) in expected.tensors().into_iter().zip(params.tensors()) {
            if want.shape() != got.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    got.shape(),
                    want.shape()
                )));
            }
        }
        if expected.tensors().len() != params.tensors().len() {
            return Err(Error::Checkpoint("tensor count does not match config".into()));
        }
        Ok(CarryoverModel { config, params })
    }

    pub fn cell(&self, kind: StreamKind) -> &LstmParams {
        &self.params.cells[kind as usize % self.params.cells.len()]
    }

    /// Run the cell for `kind` over `inputs` from `initial`.
    pub fn encode_sequence(&self, kind: StreamKind, inputs: Vec<Vec<f64>>, initial: CellState) -> SequenceTrace {
        run_sequence(self.cell(kind), inputs, initial)
    }

    pub fn zero_state(&self) -> CellState {
        CellState::zeros(self.config.recurrent_hidden)
    }

    /// Encode the three streams of user turn `t`. Context turns are chained
    /// in chronological order so each utterance starts from the previous
    /// utterance's final state; the current turn starts from zero.
    pub fn encode_streams(&self, table: &EmbeddingTable, dialog: &Dialog, t: usize) -> Result<EncodedContext> {
        if table.dim() != self.config.embedding_dim {
            return Err(Error::DimensionMismatch {
                what: "embedding table".into(),
                expected: self.config.embedding_dim,
                found: table.dim(),
            });
        }
        match dialog.turns.get(t) {
            Some(turn) if turn.is_user() => {}
            _ => {
                return Err(Error::Invalid(format!(
                    "dialog {}: turn {t} is not a user turn",
                    dialog.dialog_id
                )))
            }
        }
        let embed = |tokens: &[String]| -> Vec<Vec<f64>> { tokens.iter().map(|w| table.lookup(w).to_vec()).collect() };
        let start = t.saturating_sub(2 * self.config.context_window);
        let mut user = Vec::new();
        let mut system = Vec::new();
        for turn in &dialog.turns[start..t] {
            match turn.stream {
                Stream::User => user.extend(embed(&turn.tokens)),
                Stream::System => system.extend(embed(&turn.tokens)),
            }
        }
        let current = embed(&dialog.turns[t].tokens);
        Ok(EncodedContext {
            streams: [
                self.encode_sequence(StreamKind::CurrentUser, current, self.zero_state()),
                self.encode_sequence(StreamKind::ContextUser, user, self.zero_state()),
                self.encode_sequence(StreamKind::ContextSystem, system, self.zero_state()),
            ],
        })
    }

    /// `h_d = W_d · onehot(min(d, classes)) + b_d`
    pub fn encode_distance(&self, distance: usize) -> Result<Vec<f64>> {
        let idx = distance_index(distance, self.config.distance_classes())?;
        let mut out = self.params.distance_weight.column(idx);
        for (o, b) in out.iter_mut().zip(self.params.distance_bias.as_slice()) {
            *o += b;
        }
        Ok(out)
    }

    pub fn word_attention<V: AsRef<[f64]>>(&self, hidden: &[V], slot: &[f64]) -> Attention {
        let q = self.params.word_attention.matvec(slot);
        attend(hidden, &q, self.config.recurrent_hidden)
    }

    pub fn stream_attention(&self, streams: &[Vec<f64>; 3], slot: &[f64]) -> Attention {
        let q = self.params.stream_attention.matvec(slot);
        attend(streams, &q, self.config.recurrent_hidden)
    }

    /// Context vector `h_c` under the configured attention switches.
    pub fn combine_context(&self, enc: &EncodedContext, slot: &[f64]) -> Vec<f64> {
        self.context_forward(enc, slot).4
    }

    #[allow(clippy::type_complexity)]
    fn context_forward(
        &self,
        enc: &EncodedContext,
        slot: &[f64],
    ) -> (Option<[Attention; 3]>, Vec<f64>, Option<Attention>, Vec<f64>, Vec<f64>) {
        let h = self.config.recurrent_hidden;
        if !self.config.use_word_attention {
            let mut sum = vec![0.0; h];
            for f in enc.final_states() {
                for (s, v) in sum.iter_mut().zip(&f) {
                    *s += v;
                }
            }
            return (None, Vec::new(), None, Vec::new(), sum);
        }
        let word_query = self.params.word_attention.matvec(slot);
        let word = StreamKind::ALL.map(|k| {
            let hs: Vec<&[f64]> = enc.stream(k).hidden_states().collect();
            attend(&hs, &word_query, h)
        });
        if !self.config.use_stream_attention {
            let mut sum = vec![0.0; h];
            for a in &word {
                for (s, v) in sum.iter_mut().zip(&a.context) {
                    *s += v;
                }
            }
            return (Some(word), word_query, None, Vec::new(), sum);
        }
        let stream_query = self.params.stream_attention.matvec(slot);
        let pooled = [word[0].context.clone(), word[1].context.clone(), word[2].context.clone()];
        let stream = attend(&pooled, &stream_query, h);
        let context = stream.context.clone();
        (Some(word), word_query, Some(stream), stream_query, context)
    }

    pub fn forward(&self, enc: &EncodedContext, input: &CandidateInput) -> Result<CandidateForward> {
        let (word, word_query, stream, stream_query, context) = self.context_forward(enc, &input.slot);
        let h_d = self.encode_distance(input.distance)?;
        let mut z = Vec::with_capacity(self.config.decoder_input());
        z.extend_from_slice(&context);
        z.extend_from_slice(&input.act);
        z.extend_from_slice(&input.slot);
        z.extend_from_slice(&h_d);
        if z.len() != self.config.decoder_input() {
            return Err(Error::DimensionMismatch {
                what: "decoder input".into(),
                expected: self.config.decoder_input(),
                found: z.len(),
            });
        }
        let mut u = self.params.hidden_bias.as_slice().to_vec();
        self.params.hidden_weight.matvec_acc(&z, &mut u);
        let hidden: Vec<f64> = u.iter().map(|v| v.tanh()).collect();
        let mut logits = [self.params.output_bias.get(0, 0), self.params.output_bias.get(1, 0)];
        self.params.output_weight.matvec_acc(&hidden, &mut logits);
        let p = softmax(&logits);
        Ok(CandidateForward {
            word,
            word_query,
            stream,
            stream_query,
            context,
            z,
            hidden,
            logits,
            probs: [p[0], p[1]],
        })
    }

    /// `(P(−1), P(+1))` for one candidate.
    pub fn score_candidate(&self, enc: &EncodedContext, input: &CandidateInput) -> Result<[f64; 2]> {
        Ok(self.forward(enc, input)?.probs)
    }

    /// Backpropagate `d_logits` through the decoder, distance encoder and
    /// attention layers. Parameter gradients accumulate into `grads`;
    /// gradients on the streams' hidden outputs accumulate into `stream`.
    pub fn backward_head(
        &self,
        enc: &EncodedContext,
        input: &CandidateInput,
        fwd: &CandidateForward,
        d_logits: [f64; 2],
        grads: &mut Params,
        stream: &mut StreamGrads,
    ) -> Result<()> {
        let cfg = &self.config;
        let h = cfg.recurrent_hidden;
        grads.output_weight.add_outer(&d_logits, &fwd.hidden);
        grads.output_bias.add_to_slice(&d_logits);
        let mut d_hidden = vec![0.0; cfg.decoder_hidden];
        self.params.output_weight.matvec_t_acc(&d_logits, &mut d_hidden);
        let d_u: Vec<f64> = d_hidden.iter().zip(&fwd.hidden).map(|(d, r)| d * (1.0 - r * r)).collect();
        grads.hidden_weight.add_outer(&d_u, &fwd.z);
        grads.hidden_bias.add_to_slice(&d_u);
        let mut d_z = vec![0.0; fwd.z.len()];
        self.params.hidden_weight.matvec_t_acc(&d_u, &mut d_z);

        let d_context = &d_z[..h];
        let d_distance = &d_z[h + cfg.act_dim() + cfg.slot_dim()..];
        let idx = distance_index(input.distance, cfg.distance_classes())?;
        for (r, d) in d_distance.iter().enumerate() {
            let v = grads.distance_weight.get(r, idx) + d;
            grads.distance_weight.set(r, idx, v);
        }
        grads.distance_bias.add_to_slice(d_distance);

        let Some(word) = &fwd.word else {
            for k in StreamKind::ALL {
                if !enc.stream(k).is_empty() {
                    for (s, d) in stream.last[k as usize].iter_mut().zip(d_context) {
                        *s += d;
                    }
                }
            }
            return Ok(());
        };
        let d_pooled: [Vec<f64>; 3] = match &fwd.stream {
            None => StreamKind::ALL.map(|_| d_context.to_vec()),
            Some(att) => {
                let pooled = [word[0].context.clone(), word[1].context.clone(), word[2].context.clone()];
                let mut d_items = vec![vec![0.0; h]; 3];
                let d_query = attend_backward(&pooled, &fwd.stream_query, att, d_context, &mut d_items);
                grads.stream_attention.add_outer(&d_query, &input.slot);
                [d_items[0].clone(), d_items[1].clone(), d_items[2].clone()]
            }
        };
        let mut d_word_query = vec![0.0; h];
        for k in StreamKind::ALL {
            let i = k as usize;
            if enc.stream(k).is_empty() {
                continue;
            }
            let hs: Vec<&[f64]> = enc.stream(k).hidden_states().collect();
            let dq = attend_backward(&hs, &fwd.word_query, &word[i], &d_pooled[i], &mut stream.hidden[i]);
            for (a, b) in d_word_query.iter_mut().zip(&dq) {
                *a += b;
            }
        }
        grads.word_attention.add_outer(&d_word_query, &input.slot);
        Ok(())
    }

    /// Backpropagate accumulated stream gradients through the recurrent cells.
    pub fn backward_streams(&self, enc: &EncodedContext, stream: &StreamGrads, grads: &mut Params) {
        let n_cells = grads.cells.len();
        for k in StreamKind::ALL {
            let i = k as usize;
            backward_sequence(
                self.cell(k),
                enc.stream(k),
                &stream.hidden[i],
                Some(&stream.last[i]),
                &mut grads.cells[i % n_cells],
            );
        }
    }
}

fn distance_index(distance: usize, classes: usize) -> Result<usize> {
    if distance < 1 {
        return Err(Error::Invalid("candidate distance must be at least 1".into()));
    }
    Ok(distance.min(classes) - 1)
}

/// One-hot distance vector before the affine map.
pub fn distance_one_hot(distance: usize, classes: usize) -> Result<Vec<f64>> {
    let idx = distance_index(distance, classes)?;
    let mut v = vec![0.0; classes];
    v[idx] = 1.0;
    Ok(v)
}

/// `h_s = Φ_K(mapped_key) ⊕ Φ_W(value)`
pub fn encode_slot(labels: &LabelEmbeddings, table: &EmbeddingTable, cand: &CandidateSlot) -> Result<Vec<f64>> {
    let key = labels
        .key(&cand.mapped_key)
        .ok_or_else(|| Error::Invalid(format!("no label embedding for slot key {:?}", cand.mapped_key)))?;
    let tokens = crate::dialog::tokenize(&cand.value);
    let value = table.embed_phrase(&tokens)?;
    let mut out = Vec::with_capacity(key.len() + value.len());
    out.extend_from_slice(key);
    out.extend_from_slice(&value);
    Ok(out)
}

/// `h_a = Φ_A(act)`; unseen acts map to zero.
pub fn encode_act(labels: &LabelEmbeddings, act: &str) -> Vec<f64> {
    labels.act(act).map_or_else(|| vec![0.0; labels.dim()], <[f64]>::to_vec)
}

#[cfg(test)]
mod tests;
