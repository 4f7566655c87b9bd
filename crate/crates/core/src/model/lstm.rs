//! Gated recurrent cell with input, forget and output gates.
//!
//! Gate pre-activations are stacked as `[i; f; g; o]`, each `H` rows.

use super::tensor::{sigmoid, Matrix};

#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    /// `4H × E`
    pub w_input: Matrix,
    /// `4H × H`
    pub w_hidden: Matrix,
    /// `4H × 1`
    pub bias: Matrix,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            w_input: Matrix::zeros(4 * hidden, input),
            w_hidden: Matrix::zeros(4 * hidden, hidden),
            bias: Matrix::zeros(4 * hidden, 1),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hidden.cols()
    }

    pub fn input(&self) -> usize {
        self.w_input.cols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl CellState {
    pub fn zeros(hidden: usize) -> Self {
        CellState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Intermediates of one step, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct StepCache {
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

pub fn step_cached(params: &LstmParams, x: &[f64], state: &CellState) -> StepCache {
    let hd = params.hidden();
    let mut a = params.bias.as_slice().to_vec();
    params.w_input.matvec_acc(x, &mut a);
    params.w_hidden.matvec_acc(&state.h, &mut a);
    let i: Vec<f64> = a[..hd].iter().map(|&v| sigmoid(v)).collect();
    let f: Vec<f64> = a[hd..2 * hd].iter().map(|&v| sigmoid(v)).collect();
    let g: Vec<f64> = a[2 * hd..3 * hd].iter().map(|v| v.tanh()).collect();
    let o: Vec<f64> = a[3 * hd..].iter().map(|&v| sigmoid(v)).collect();
    let c: Vec<f64> = (0..hd).map(|k| f[k] * state.c[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = (0..hd).map(|k| o[k] * tanh_c[k]).collect();
    StepCache {
        h_prev: state.h.clone(),
        c_prev: state.c.clone(),
        i,
        f,
        g,
        o,
        c,
        tanh_c,
        h,
    }
}

/// One recurrent step: `c' = f ⊙ c + i ⊙ g`, `h' = o ⊙ tanh(c')`.
pub fn recurrent_step(params: &LstmParams, x: &[f64], state: &CellState) -> CellState {
    let cache = step_cached(params, x, state);
    CellState {
        h: cache.h,
        c: cache.c,
    }
}

/// A run of the cell over a token sequence.
#[derive(Clone, Debug)]
pub struct SequenceTrace {
    pub inputs: Vec<Vec<f64>>,
    pub steps: Vec<StepCache>,
    pub initial: CellState,
}

impl SequenceTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn hidden_states(&self) -> impl Iterator<Item = &[f64]> {
        self.steps.iter().map(|s| s.h.as_slice())
    }

    pub fn final_state(&self) -> CellState {
        match self.steps.last() {
            Some(s) => CellState {
                h: s.h.clone(),
                c: s.c.clone(),
            },
            None => self.initial.clone(),
        }
    }
}

pub fn run_sequence(params: &LstmParams, inputs: Vec<Vec<f64>>, initial: CellState) -> SequenceTrace {
    let mut steps = Vec::with_capacity(inputs.len());
    let mut state = initial.clone();
    for x in &inputs {
        let cache = step_cached(params, x, &state);
        state = CellState {
            h: cache.h.clone(),
            c: cache.c.clone(),
        };
        steps.push(cache);
    }
    SequenceTrace {
        inputs,
        steps,
        initial,
    }
}

/// Backpropagate through a sequence. `dh[t]` is the external gradient on the
/// hidden output of step `t`; `dfinal` is added to the last step's hidden
/// output. Gradients accumulate into `grads`.
pub fn backward_sequence(
    params: &LstmParams,
    trace: &SequenceTrace,
    dh: &[Vec<f64>],
    dfinal: Option<&[f64]>,
    grads: &mut LstmParams,
) {
    let hd = params.hidden();
    let n = trace.len();
    if n == 0 {
        return;
    }
    let mut dh_next = vec![0.0; hd];
    let mut dc_next = vec![0.0; hd];
    let mut da = vec![0.0; 4 * hd];
    for t in (0..n).rev() {
        let s = &trace.steps[t];
        let mut dh_t = dh_next.clone();
        for (d, e) in dh_t.iter_mut().zip(&dh[t]) {
            *d += e;
        }
        if t == n - 1 {
            if let Some(df) = dfinal {
                for (d, e) in dh_t.iter_mut().zip(df) {
                    *d += e;
                }
            }
        }
        for k in 0..hd {
            let dc = dc_next[k] + dh_t[k] * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
            let d_o = dh_t[k] * s.tanh_c[k];
            let d_i = dc * s.g[k];
            let d_g = dc * s.i[k];
            let d_f = dc * s.c_prev[k];
            da[k] = d_i * s.i[k] * (1.0 - s.i[k]);
            da[hd + k] = d_f * s.f[k] * (1.0 - s.f[k]);
            da[2 * hd + k] = d_g * (1.0 - s.g[k] * s.g[k]);
            da[3 * hd + k] = d_o * s.o[k] * (1.0 - s.o[k]);
            dc_next[k] = dc * s.f[k];
        }
        grads.w_input.add_outer(&da, &trace.inputs[t]);
        grads.w_hidden.add_outer(&da, &s.h_prev);
        grads.bias.add_to_slice(&da);
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        params.w_hidden.matvec_t_acc(&da, &mut dh_next);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_parameters_give_zero_state() {
        let p = LstmParams::zeros(3, 2);
        let s = recurrent_step(&p, &[0.3, -1.0, 2.0], &CellState::zeros(2));
        assert_eq!(s.h, vec![0.0, 0.0]);
        assert_eq!(s.c, vec![0.0, 0.0]);
    }

    #[test]
    fn with_zero_input_weights_and_state_only_bias_matters() {
        let mut p = LstmParams::zeros(2, 1);
        // i, f, g, o biases
        p.bias = Matrix::from_vec(4, 1, vec![0.5, 3.0, -0.7, 1.2]);
        let a = recurrent_step(&p, &[1.0, 2.0], &CellState::zeros(1));
        let b = recurrent_step(&p, &[-5.0, 0.1], &CellState::zeros(1));
        assert_eq!(a, b);
        let c = sigmoid(0.5) * (-0.7f64).tanh();
        assert!((a.c[0] - c).abs() < 1e-15);
        assert!((a.h[0] - sigmoid(1.2) * c.tanh()).abs() < 1e-15);
    }

    #[test]
    fn two_dim_cell_matches_hand_trace() {
        // E = 1, H = 2
        let mut p = LstmParams::zeros(1, 2);
        let wi = [0.1, -0.2, 0.3, 0.05, -0.4, 0.25, 0.15, -0.1];
        let wh = [
            0.2, 0.1, -0.1, 0.3, 0.05, -0.05, 0.4, 0.2, -0.3, 0.1, 0.2, -0.2, 0.1, 0.1, -0.1, 0.3,
        ];
        let b = [0.0, 0.1, 1.0, 1.0, -0.1, 0.2, 0.05, -0.05];
        p.w_input = Matrix::from_vec(8, 1, wi.to_vec());
        p.w_hidden = Matrix::from_vec(8, 2, wh.to_vec());
        p.bias = Matrix::from_vec(8, 1, b.to_vec());
        let state = CellState { h: vec![0.5, -0.25], c: vec![0.1, 0.2] };
        let x = 0.7;
        let pre = |r: usize| wi[r] * x + wh[2 * r] * 0.5 + wh[2 * r + 1] * -0.25 + b[r];
        let mut want_h = [0.0; 2];
        let mut want_c = [0.0; 2];
        for k in 0..2 {
            let i = sigmoid(pre(k));
            let f = sigmoid(pre(2 + k));
            let g = pre(4 + k).tanh();
            let o = sigmoid(pre(6 + k));
            want_c[k] = f * state.c[k] + i * g;
            want_h[k] = o * want_c[k].tanh();
        }
        let got = recurrent_step(&p, &[x], &state);
        for k in 0..2 {
            assert!((got.h[k] - want_h[k]).abs() < 1e-15);
            assert!((got.c[k] - want_c[k]).abs() < 1e-15);
        }
    }
}
