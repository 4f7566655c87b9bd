use super::*;
use crate::candidates::CandidateConfig;
use crate::dialog::{build_schema_catalog, fixtures::demo_dialog};
use crate::embeddings::OovPolicy;
use crate::pipeline::{predict_turn, Pipeline};

fn toy_config() -> ModelConfig {
    ModelConfig {
        embedding_dim: 2,
        recurrent_hidden: 3,
        decoder_hidden: 4,
        context_window: 2,
        seed: 3,
        ..Default::default()
    }
}

fn toy_table() -> EmbeddingTable {
    let text = "weather 1 0\nin 0.5 0.5\nsan 1 0\nfrancisco 0 1\nboston 1 0\nla -1 0.5\ntaqueria 0 -1\n";
    EmbeddingTable::parse(text, OovPolicy::ZeroVector).unwrap()
}

#[test]
fn distance_encoding() {
    let mut m = CarryoverModel::new(ModelConfig { context_window: 2, ..toy_config() }).unwrap();
    assert_eq!(distance_one_hot(1, 4).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
    assert_eq!(distance_one_hot(9, 4).unwrap(), vec![0.0, 0.0, 0.0, 1.0]);
    assert!(distance_one_hot(0, 4).is_err());
    assert!(m.encode_distance(0).is_err());
    m.params.distance_weight = Matrix::from_vec(4, 4, (0..16).map(|i| if i % 5 == 0 { 1.0 } else { 0.0 }).collect());
    m.params.distance_bias.fill(0.0);
    for d in 1..=4 {
        assert_eq!(m.encode_distance(d).unwrap(), distance_one_hot(d, 4).unwrap());
    }
    assert_eq!(m.encode_distance(9).unwrap(), m.encode_distance(4).unwrap());
}

#[test]
fn slot_encoding_concatenates_key_and_value() {
    let table = toy_table();
    let mut labels = LabelEmbeddings::new(2);
    labels.insert_key("City", vec![0.75, 0.25], 2).unwrap();
    let mut cand = crate::candidates::collect_candidates(&demo_dialog(), 2, &CandidateConfig::default()).unwrap().remove(1);
    cand.mapped_key = "City".into();
    cand.value = "boston".into();
    assert_eq!(encode_slot(&labels, &table, &cand).unwrap(), vec![0.75, 0.25, 1.0, 0.0]);
    cand.value = "unknownword".into();
    assert_eq!(&encode_slot(&labels, &table, &cand).unwrap()[2..], &[0.0, 0.0]);
    let mut far = cand.clone();
    far.distance = 4;
    assert_eq!(encode_slot(&labels, &table, &far).unwrap(), encode_slot(&labels, &table, &cand).unwrap());
    cand.mapped_key = "Nope".into();
    assert!(encode_slot(&labels, &table, &cand).is_err());
}

#[test]
fn first_turn_has_empty_context_streams() {
    let m = CarryoverModel::new(toy_config()).unwrap();
    let enc = m.encode_streams(&toy_table(), &demo_dialog(), 0).unwrap();
    assert_eq!(enc.stream(StreamKind::CurrentUser).len(), 4);
    assert!(enc.stream(StreamKind::ContextUser).is_empty());
    assert!(enc.stream(StreamKind::ContextSystem).is_empty());
    assert_eq!(enc.final_states()[1], vec![0.0; 3]);
}

#[test]
fn context_user_stream_spans_both_context_turns() {
    let m = CarryoverModel::new(toy_config()).unwrap();
    let enc = m.encode_streams(&toy_table(), &demo_dialog(), 4).unwrap();
    // U1 (4 tokens) + U2 (4 tokens), V1 (6) + V2 (6)
    assert_eq!(enc.stream(StreamKind::ContextUser).len(), 8);
    assert_eq!(enc.stream(StreamKind::ContextSystem).len(), 12);
    assert_eq!(enc.stream(StreamKind::CurrentUser).len(), 6);
}

#[test]
fn mismatched_table_dimension_is_rejected() {
    let m = CarryoverModel::new(ModelConfig { embedding_dim: 5, ..toy_config() }).unwrap();
    assert!(matches!(
        m.encode_streams(&toy_table(), &demo_dialog(), 0),
        Err(Error::DimensionMismatch { expected: 5, found: 2, .. })
    ));
}

fn seq(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

#[test]
fn combine_context_variants() {
    let mut m = CarryoverModel::new(ModelConfig { use_word_attention: false, ..toy_config() }).unwrap();
    let slot = vec![0.1, 0.2, 0.3, 0.4];
    let empty = EncodedContext {
        streams: StreamKind::ALL.map(|k| m.encode_sequence(k, Vec::new(), m.zero_state())),
    };
    assert_eq!(m.combine_context(&empty, &slot), vec![0.0; 3]);

    let one = EncodedContext {
        streams: [
            m.encode_sequence(StreamKind::CurrentUser, seq(1, 1), m.zero_state()),
            m.encode_sequence(StreamKind::ContextUser, seq(1, 2), m.zero_state()),
            m.encode_sequence(StreamKind::ContextSystem, seq(1, 3), m.zero_state()),
        ],
    };
    let finals = one.final_states();
    let sum: Vec<f64> = (0..3).map(|k| finals[0][k] + finals[1][k] + finals[2][k]).collect();
    assert_eq!(m.combine_context(&one, &slot), sum);
    m.config.use_word_attention = true;
    let got = m.combine_context(&one, &slot);
    for k in 0..3 {
        assert!((got[k] - sum[k]).abs() < 1e-15);
    }
}

#[test]
fn stream_attention_concentrates_on_dominant_stream() {
    let mut m = CarryoverModel::new(ModelConfig { embedding_dim: 2, recurrent_hidden: 2, ..toy_config() }).unwrap();
    let streams = [vec![1.0, 0.0], vec![0.0, 0.2], vec![0.1, 0.1]];
    let slot = vec![1.0, 1.0, 0.0, 0.0];
    let mut last = 0.0;
    for scale in [1.0, 5.0, 50.0] {
        m.params.stream_attention = Matrix::from_vec(2, 4, vec![scale, 0.0, 0.0, 0.0, 0.0, scale, 0.0, 0.0]);
        let att = m.stream_attention(&streams, &slot);
        assert!(att.weights[0] > last);
        last = att.weights[0];
    }
    assert!(last > 0.999);
    m.params.stream_attention.fill(0.0);
    let att = m.stream_attention(&streams, &slot);
    for k in 0..2 {
        let mean = (streams[0][k] + streams[1][k] + streams[2][k]) / 3.0;
        assert!((att.context[k] - mean).abs() < 1e-15);
    }
}

#[test]
fn zero_decoder_is_uniform() {
    let mut m = CarryoverModel::new(toy_config()).unwrap();
    m.params.output_weight.fill(0.0);
    m.params.output_bias.fill(0.0);
    let enc = m.encode_streams(&toy_table(), &demo_dialog(), 2).unwrap();
    let input = CandidateInput { slot: vec![0.1; 4], act: vec![0.3; 2], distance: 1 };
    assert_eq!(m.score_candidate(&enc, &input).unwrap(), [0.5, 0.5]);
}

#[test]
fn tau_one_predicts_nothing() {
    let table = toy_table();
    let d = demo_dialog();
    let labels = LabelEmbeddings::build(&table, std::slice::from_ref(&d));
    let catalog = build_schema_catalog(std::slice::from_ref(&d));
    let config = CandidateConfig { beta: -10.0, ..Default::default() };
    let pipe = Pipeline { table: &table, labels: &labels, catalog: &catalog, config: &config };
    let m = CarryoverModel::new(toy_config()).unwrap();
    assert!(predict_turn(&m, &pipe, &d, 0, 0.5).unwrap().is_empty());
    assert!(predict_turn(&m, &pipe, &d, 4, 1.0).unwrap().is_empty());
    assert!(!predict_turn(&m, &pipe, &d, 4, 0.0).unwrap().is_empty());
    assert_eq!(predict_turn(&m, &pipe, &d, 4, 0.3).unwrap(), predict_turn(&m, &pipe, &d, 4, 0.3).unwrap());
}

#[test]
fn shared_cells_use_one_parameter_set() {
    let m = CarryoverModel::new(ModelConfig { share_recurrent: true, ..toy_config() }).unwrap();
    assert_eq!(m.params.cells.len(), 1);
    assert!(m.params.tensors()[0].0.contains("shared"));
    let enc = m.encode_streams(&toy_table(), &demo_dialog(), 4).unwrap();
    assert_eq!(enc.stream(StreamKind::ContextSystem).len(), 12);
}

#[test]
fn init_is_seeded() {
    let a = CarryoverModel::new(toy_config()).unwrap();
    let b = CarryoverModel::new(toy_config()).unwrap();
    let c = CarryoverModel::new(ModelConfig { seed: 4, ..toy_config() }).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.params.cells[0].bias.get(3, 0), 1.0);
    assert!(a.params.cells[0].bias.get(0, 0).abs() <= 0.1);
}
