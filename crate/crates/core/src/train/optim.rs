use crate::tensor::ParamSet;

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// First- and second-moment buffers, one pair per parameter tensor.
    pub fn moments(&self) -> &[(Vec<f64>, Vec<f64>)] {
        &self.moments
    }

    /// One update over every tensor of `sets`, walked in order. Tensors
    /// without a gradient are treated as having a zero gradient.
    pub fn step(&mut self, sets: &mut [&mut ParamSet]) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let mut slot = 0;
        for set in sets.iter_mut() {
            for tensor in set.tensors_mut() {
                if slot == self.moments.len() {
                    self.moments.push((vec![0.0; tensor.len()], vec![0.0; tensor.len()]));
                }
                let (m, v) = &mut self.moments[slot];
                assert_eq!(m.len(), tensor.len(), "optimizer state does not match parameter {slot}");
                let grad = tensor.grad().map(<[f64]>::to_vec);
                let data = tensor.data_mut();
                for i in 0..data.len() {
                    let g = grad.as_ref().map_or(0.0, |g| g[i]);
                    m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                    v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    data[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
                }
                slot += 1;
            }
        }
    }
}
