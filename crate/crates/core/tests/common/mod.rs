#![allow(dead_code)]

use std::path::PathBuf;

use carryover::candidates::CandidateConfig;
use carryover::dialog::{build_schema_catalog, load_corpus, Dialog, SchemaCatalog};
use carryover::embeddings::{EmbeddingTable, LabelEmbeddings, OovPolicy};
use carryover::model::{CarryoverModel, ModelConfig};
use carryover::training::{batch_gradient, build_examples, ClassWeights};

pub fn repo_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

pub fn demo_dialog() -> Dialog {
    load_corpus(&repo_path("data/demo.jsonl")).unwrap().remove(0)
}

pub fn demo_table() -> EmbeddingTable {
    EmbeddingTable::load(&repo_path("data/demo_emb.txt"), OovPolicy::ZeroVector).unwrap()
}

pub fn demo_labels() -> LabelEmbeddings {
    LabelEmbeddings::load(&repo_path("data/demo_labels.txt")).unwrap()
}

/// Owned resources behind a [`carryover::pipeline::Pipeline`].
pub struct Resources {
    pub table: EmbeddingTable,
    pub labels: LabelEmbeddings,
    pub catalog: SchemaCatalog,
    pub config: CandidateConfig,
}

#[macro_export]
macro_rules! pipeline {
    ($r:expr) => {
        carryover::pipeline::Pipeline {
            table: &$r.table,
            labels: &$r.labels,
            catalog: &$r.catalog,
            config: &$r.config,
        }
    };
}

pub fn demo_resources() -> Resources {
    Resources {
        table: demo_table(),
        labels: demo_labels(),
        catalog: build_schema_catalog(&[demo_dialog()]),
        config: CandidateConfig::default(),
    }
}

pub fn toy_config(word: bool, stream: bool, share: bool) -> ModelConfig {
    ModelConfig {
        embedding_dim: 4,
        recurrent_hidden: 3,
        decoder_hidden: 5,
        context_window: 2,
        use_word_attention: word,
        use_stream_attention: stream,
        share_recurrent: share,
        seed: 11,
        ..Default::default()
    }
}

/// Largest relative error per parameter tensor between the analytic
/// gradient and central differences of the mean batch loss.
pub fn gradient_report(config: ModelConfig) -> Vec<(String, f64, f64)> {
    let r = demo_resources();
    let pipe = crate::pipeline!(r);
    let dialogs = vec![demo_dialog()];
    let examples = build_examples(&pipe, &dialogs).unwrap();
    assert!(examples.iter().any(|e| e.label.is_positive()));
    assert!(examples.iter().any(|e| !e.label.is_positive()));
    let batch: Vec<usize> = (0..examples.len()).collect();
    let weights = ClassWeights { negative: 0.7, positive: 2.5 };
    let mut model = CarryoverModel::new(config).unwrap();
    // Larger weights than the default init so every nonlinearity is exercised.
    for (_, t) in model.params.tensors_mut() {
        for x in t.as_mut_slice() {
            *x *= 5.0;
        }
    }
    let (_, analytic) = batch_gradient(&model, &pipe, &dialogs, &examples, &batch, weights).unwrap();
    let analytic: Vec<(String, Vec<f64>)> = analytic.tensors().into_iter().map(|(n, t)| (n, t.as_slice().to_vec())).collect();
    let eps = 1e-4;
    let mut out = Vec::new();
    for (ti, (name, grad)) in analytic.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for i in 0..grad.len() {
            let loss_at = |delta: f64| {
                let mut m = model.clone();
                m.params.tensors_mut()[ti].1.as_mut_slice()[i] += delta;
                batch_gradient(&m, &pipe, &dialogs, &examples, &batch, weights).unwrap().0
            };
            let numeric = (loss_at(eps) - loss_at(-eps)) / (2.0 * eps);
            let scale = grad[i].abs().max(numeric.abs());
            let err = if scale < 1e-7 { (grad[i] - numeric).abs() / 1e-7 } else { (grad[i] - numeric).abs() / scale };
            worst = worst.max(err);
        }
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        out.push((name.clone(), worst, norm));
    }
    out
}
