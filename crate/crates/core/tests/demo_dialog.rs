mod common;

use std::collections::BTreeSet;

use carryover::baselines::{naive_predict, rule_predict, RuleSet};
use carryover::candidates::CandidateConfig;
use carryover::dialog::Slot;
use carryover::model::{CarryoverModel, ModelConfig};
use carryover::pipeline::predict_turn;
use carryover::training::{train, TrainConfig};

use common::repo_path;

fn slots(pairs: &[(&str, &str)]) -> BTreeSet<(String, String)> {
    pairs.iter().map(|(k, v)| Slot::new(*k, *v).normalized()).collect()
}

fn normalized(s: BTreeSet<Slot>) -> BTreeSet<(String, String)> {
    s.iter().map(Slot::normalized).collect()
}

fn rules() -> RuleSet {
    RuleSet::load(&repo_path("configs/demo_rules.toml")).unwrap()
}

#[test]
fn rules_reproduce_carried_slots() {
    let r = common::demo_resources();
    let pipe = pipeline!(r);
    let d = common::demo_dialog();
    let rules = rules();
    assert!(rule_predict(&d, 0, &rules, &pipe).unwrap().is_empty());
    assert_eq!(normalized(rule_predict(&d, 2, &rules, &pipe).unwrap()), slots(&[("City", "san francisco")]));
    assert_eq!(
        normalized(rule_predict(&d, 4, &rules, &pipe).unwrap()),
        slots(&[("Place", "la taqueria"), ("Town", "san francisco")])
    );
}

#[test]
fn each_rule_is_needed() {
    let r = common::demo_resources();
    let pipe = pipeline!(r);
    let d = common::demo_dialog();
    let full = rules();
    let expected = [
        (2, "City", "san francisco"),
        (4, "Town", "san francisco"),
        (4, "Place", "la taqueria"),
    ];
    for i in 0..full.rules.len() {
        let reduced = full.without_rule(i);
        let lost = expected.iter().any(|&(t, k, v)| {
            !normalized(rule_predict(&d, t, &reduced, &pipe).unwrap()).contains(&Slot::new(k, v).normalized())
        });
        assert!(lost, "rule {i} can be removed without losing a carried slot");
    }
}

#[test]
fn rules_reject_system_turns() {
    let r = common::demo_resources();
    let pipe = pipeline!(r);
    assert!(rule_predict(&common::demo_dialog(), 1, &rules(), &pipe).is_err());
}

#[test]
fn naive_carries_previous_turn() {
    let d = common::demo_dialog();
    let config = CandidateConfig::default();
    assert!(naive_predict(&d, 0, &config).unwrap().is_empty());
    assert_eq!(normalized(naive_predict(&d, 2, &config).unwrap()), slots(&[("Temperature", "42F")]));
    let user_only = CandidateConfig { include_system_candidates: false, ..config };
    assert_eq!(
        normalized(naive_predict(&d, 2, &user_only).unwrap()),
        slots(&[("WeatherLocation", "san francisco")])
    );
}

#[test]
fn trained_toy_model_carries_location() {
    let r = common::demo_resources();
    let pipe = pipeline!(r);
    let dialogs = vec![common::demo_dialog()];
    let model = CarryoverModel::new(ModelConfig {
        embedding_dim: 4,
        recurrent_hidden: 6,
        decoder_hidden: 12,
        seed: 3,
        ..Default::default()
    })
    .unwrap();
    let config = TrainConfig {
        epochs: 300,
        patience: 300,
        batch_size: 4,
        learning_rate: 1e-2,
        ..Default::default()
    };
    let outcome = train(model, &dialogs, &dialogs, &pipe, &config).unwrap();
    let carried = predict_turn(&outcome.model, &pipe, &dialogs[0], 2, 0.5).unwrap();
    assert!(normalized(carried).contains(&Slot::new("City", "san francisco").normalized()));
}
