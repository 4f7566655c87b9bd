/// Adam with bias-corrected moment estimates over a list of flat tensors.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Adam {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        assert_eq!(params.len(), grads.len());
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for k in 0..p.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_on_quadratic_matches_formula() {
        // f(θ) = (θ − 3)², θ₀ = 0
        let (lr, b1, b2, eps) = (1e-3, 0.9, 0.999, 1e-8);
        let mut adam = Adam::new(lr, b1, b2, eps);
        let mut theta = [0.0];
        let g = 2.0 * (theta[0] - 3.0);
        adam.step(&mut [&mut theta], &[&[g]]);
        let m = (1.0 - b1) * g;
        let v = (1.0 - b2) * g * g;
        let m_hat = m / (1.0 - b1);
        let v_hat = v / (1.0 - b2);
        let want = 0.0 - lr * m_hat / (v_hat.sqrt() + eps);
        assert_eq!(theta[0], want);
        assert!((theta[0] - 1e-3).abs() < 1e-11);
    }

    #[test]
    fn converges_on_quadratic() {
        let mut adam = Adam::new(0.1, 0.9, 0.999, 1e-8);
        let mut theta = [0.0];
        for _ in 0..2000 {
            let g = 2.0 * (theta[0] - 3.0);
            adam.step(&mut [&mut theta], &[&[g]]);
        }
        assert!((theta[0] - 3.0).abs() < 1e-3);
    }
}
