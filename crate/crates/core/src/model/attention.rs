//! Dot-product attention against a query vector.
//!
//! Both attention levels score items with a bilinear form: the slot
//! encoding is projected into the hidden space by a learned map and each
//! item is scored by its dot product with that projection.

use super::tensor::softmax;
use crate::util::dot;

#[derive(Clone, Debug, PartialEq)]
pub struct Attention {
    pub scores: Vec<f64>,
    pub weights: Vec<f64>,
    pub context: Vec<f64>,
}

/// Softmax-weighted sum of `items` scored against `query`. An empty item
/// list yields a zero context of dimension `dim`.
pub fn attend<V: AsRef<[f64]>>(items: &[V], query: &[f64], dim: usize) -> Attention {
    let scores: Vec<f64> = items.iter().map(|h| dot(h.as_ref(), query)).collect();
    attend_scores(items, scores, dim)
}

pub(crate) fn attend_scores<V: AsRef<[f64]>>(items: &[V], scores: Vec<f64>, dim: usize) -> Attention {
    let weights = softmax(&scores);
    let mut context = vec![0.0; dim];
    for (h, w) in items.iter().zip(&weights) {
        for (c, v) in context.iter_mut().zip(h.as_ref()) {
            *c += w * v;
        }
    }
    Attention {
        scores,
        weights,
        context,
    }
}

/// Backward pass of [`attend`]. Adds item gradients into `d_items` and
/// returns the gradient on the query.
pub fn attend_backward<V: AsRef<[f64]>>(
    items: &[V],
    query: &[f64],
    att: &Attention,
    d_context: &[f64],
    d_items: &mut [Vec<f64>],
) -> Vec<f64> {
    let mut d_query = vec![0.0; query.len()];
    if items.is_empty() {
        return d_query;
    }
    let d_weights: Vec<f64> = items.iter().map(|h| dot(h.as_ref(), d_context)).collect();
    let mean: f64 = att.weights.iter().zip(&d_weights).map(|(a, d)| a * d).sum();
    for (j, h) in items.iter().enumerate() {
        let a = att.weights[j];
        let de = a * (d_weights[j] - mean);
        for ((dh, dc), q) in d_items[j].iter_mut().zip(d_context).zip(query) {
            *dh += a * dc + de * q;
        }
        for (dq, v) in d_query.iter_mut().zip(h.as_ref()) {
            *dq += de * v;
        }
    }
    d_query
}
