//! Micro-averaged precision, recall and F1 over per-turn slot sets.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dialog::{Dialog, Slot};
use crate::error::{Error, Result};
use crate::model::CarryoverModel;
use crate::pipeline::{corpus_references, score_turn, threshold, Pipeline};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

impl EvalReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        EvalReport {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            precision,
            recall,
            f1,
            tau: None,
            beta: None,
        }
    }
}

fn key(slot: &Slot) -> (String, String) {
    (slot.key.clone(), slot.value.to_lowercase())
}

fn normalized_set<'a>(slots: impl IntoIterator<Item = &'a Slot>) -> BTreeSet<(String, String)> {
    slots.into_iter().map(key).collect()
}

/// Pooled counts over aligned per-turn hypothesis and reference sets.
/// Slots match on exact key and lowercased value; duplicate hypotheses
/// count once.
pub fn score<H, R>(hyps: &[H], refs: &[R]) -> Result<EvalReport>
where
    for<'a> &'a H: IntoIterator<Item = &'a Slot>,
    for<'a> &'a R: IntoIterator<Item = &'a Slot>,
{
    if hyps.len() != refs.len() {
        return Err(Error::Invalid(format!(
            "{} hypothesis turns but {} reference turns",
            hyps.len(),
            refs.len()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (h, r) in hyps.iter().zip(refs) {
        let h = normalized_set(h);
        let r = normalized_set(r);
        let hit = h.intersection(&r).count();
        tp += hit;
        fp += h.len() - hit;
        fn_ += r.len() - hit;
    }
    Ok(EvalReport::from_counts(tp, fp, fn_))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub combined: EvalReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub within_domain: Option<EvalReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_domain: Option<EvalReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Split counts by whether each slot came from a turn of the same domain as
/// the current turn. The origin is the nearest preceding turn holding a slot
/// with the same (lowercased) value; slots without an origin count as
/// within-domain.
pub fn domain_breakdown<H, R>(dialogs: &[Dialog], hyps: &[H], refs: &[R]) -> Result<Breakdown>
where
    for<'a> &'a H: IntoIterator<Item = &'a Slot>,
    for<'a> &'a R: IntoIterator<Item = &'a Slot>,
{
    let combined = score(hyps, refs)?;
    let turns: Vec<(&Dialog, usize)> = dialogs.iter().flat_map(|d| d.user_turns().map(move |t| (d, t))).collect();
    if turns.len() != hyps.len() {
        return Err(Error::Invalid(format!(
            "{} user turns but {} hypothesis turns",
            turns.len(),
            hyps.len()
        )));
    }
    if dialogs.iter().flat_map(|d| &d.turns).any(|t| t.domain.is_none()) {
        return Ok(Breakdown {
            combined,
            within_domain: None,
            cross_domain: None,
            warning: Some("corpus lacks per-turn domain annotations; no breakdown".into()),
        });
    }
    let mut counts = [[0usize; 3]; 2];
    for (((dialog, t), h), r) in turns.iter().zip(hyps).zip(refs) {
        let current = dialog.turns[*t].domain.as_deref();
        let bucket = |slot: &(String, String)| -> usize {
            let origin = dialog.turns[..*t]
                .iter()
                .rev()
                .find(|turn| turn.slots.iter().any(|s| s.value.to_lowercase() == slot.1));
            match origin {
                Some(o) if o.domain.as_deref() != current => 1,
                _ => 0,
            }
        };
        let h = normalized_set(h);
        let r = normalized_set(r);
        for s in h.union(&r) {
            let b = bucket(s);
            match (h.contains(s), r.contains(s)) {
                (true, true) => counts[b][0] += 1,
                (true, false) => counts[b][1] += 1,
                _ => counts[b][2] += 1,
            }
        }
    }
    let report = |c: [usize; 3]| EvalReport::from_counts(c[0], c[1], c[2]);
    Ok(Breakdown {
        combined,
        within_domain: Some(report(counts[0])),
        cross_domain: Some(report(counts[1])),
        warning: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub best_tau: f64,
    pub best_beta: f64,
    pub best: EvalReport,
    pub grid: Vec<EvalReport>,
}

/// Evaluate every `(τ, β)` pair and return the best by F1. Ties go to the
/// smaller τ, then the smaller β. Grid rows are ordered by τ, then β.
pub fn sweep(model: &CarryoverModel, pipe: &Pipeline<'_>, dev: &[Dialog], taus: &[f64], betas: &[f64]) -> Result<SweepResult> {
    if taus.is_empty() || betas.is_empty() {
        return Err(Error::Invalid("sweep grid is empty".into()));
    }
    let sorted = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let taus = sorted(taus);
    let betas = sorted(betas);
    let refs = corpus_references(dev);
    let mut by_beta = Vec::with_capacity(betas.len());
    for &beta in &betas {
        let config = crate::candidates::CandidateConfig { beta, ..pipe.config.clone() };
        let p = pipe.with_config(&config);
        let scored = dev
            .iter()
            .flat_map(|d| d.user_turns().map(move |t| (d, t)))
            .map(|(d, t)| score_turn(model, &p, d, t))
            .collect::<Result<Vec<_>>>()?;
        by_beta.push(scored);
    }
    let mut grid = Vec::new();
    let mut best: Option<EvalReport> = None;
    for &tau in &taus {
        for (&beta, scored) in betas.iter().zip(&by_beta) {
            let hyps: Vec<BTreeSet<Slot>> = scored.iter().map(|s| threshold(s, tau)).collect();
            let mut report = score(&hyps, &refs)?;
            report.tau = Some(tau);
            report.beta = Some(beta);
            if best.as_ref().map_or(true, |b| report.f1 > b.f1) {
                best = Some(report.clone());
            }
            grid.push(report);
        }
    }
    let best = best.expect("non-empty grid");
    Ok(SweepResult {
        best_tau: best.tau.unwrap(),
        best_beta: best.beta.unwrap(),
        best,
        grid,
    })
}

/// Parse a grid spec such as `tau=0.3,0.5;beta=0.1,0.2`.
pub fn parse_grid(spec: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut taus = Vec::new();
    let mut betas = Vec::new();
    for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, values) = part
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("grid part {part:?} lacks '='")))?;
        let values = values
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| Error::Config(format!("grid value {v:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        match name.trim() {
            "tau" => taus = values,
            "beta" => betas = values,
            other => return Err(Error::Config(format!("unknown grid axis {other:?}"))),
        }
    }
    Ok((taus, betas))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialog::fixtures::demo_dialog;

    fn s(k: &str, v: &str) -> Slot {
        Slot::new(k, v)
    }

    #[test]
    fn half_overlap() {
        let r = score(&[vec![s("a", "1"), s("b", "1")]], &[vec![s("b", "1"), s("c", "1")]]).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn identity_and_degenerate() {
        let refs = vec![vec![s("a", "x")], vec![s("b", "Y")]];
        let r = score(&refs, &refs).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
        let hyps: Vec<Vec<Slot>> = vec![vec![], vec![]];
        let r = score(&hyps, &refs).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        assert!(score(&hyps[..1], &refs).is_err());
    }

    #[test]
    fn value_case_is_ignored_and_duplicates_counted_once() {
        let r = score(&[vec![s("City", "Boston"), s("City", "boston")]], &[vec![s("City", "BOSTON")]]).unwrap();
        assert_eq!((r.true_positives, r.false_positives, r.false_negatives), (1, 0, 0));
    }

    #[test]
    fn demo_cross_domain_hit() {
        let d = demo_dialog();
        let hyps = vec![vec![], vec![s("City", "san francisco")], vec![]];
        let refs: Vec<Vec<Slot>> = d.user_turns().map(|t| d.turns[t].references.clone()).collect();
        let b = domain_breakdown(std::slice::from_ref(&d), &hyps, &refs).unwrap();
        let cross = b.cross_domain.unwrap();
        assert_eq!(cross.true_positives, 1);
        assert_eq!(cross.false_negatives, 2);
        assert_eq!(b.within_domain.unwrap().true_positives, 0);
    }

    #[test]
    fn single_domain_has_empty_cross_bucket() {
        let mut d = demo_dialog();
        for t in &mut d.turns {
            t.domain = Some("Only".into());
        }
        let refs: Vec<Vec<Slot>> = d.user_turns().map(|t| d.turns[t].references.clone()).collect();
        let b = domain_breakdown(std::slice::from_ref(&d), &refs, &refs).unwrap();
        assert_eq!(b.cross_domain.unwrap(), EvalReport::from_counts(0, 0, 0));
    }

    #[test]
    fn missing_domains_give_combined_report_with_warning() {
        let mut d = demo_dialog();
        d.turns[1].domain = None;
        let refs: Vec<Vec<Slot>> = d.user_turns().map(|t| d.turns[t].references.clone()).collect();
        let b = domain_breakdown(std::slice::from_ref(&d), &refs, &refs).unwrap();
        assert!(b.warning.is_some() && b.cross_domain.is_none());
        assert_eq!(b.combined.f1, 1.0);
    }

    #[test]
    fn grid_spec_parsing() {
        let (t, b) = parse_grid("tau=0.3,0.5; beta=0.1").unwrap();
        assert_eq!(t, vec![0.3, 0.5]);
        assert_eq!(b, vec![0.1]);
        assert!(parse_grid("gamma=1").is_err());
        assert!(parse_grid("tau=x").is_err());
    }
}
