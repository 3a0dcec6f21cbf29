use super::model::Params;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &Params, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.slices().iter().map(|s| vec![0.0; s.len()]).collect();
        Adam {
            lr,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    pub fn step(&mut self, params: &mut Params, grads: &Params) {
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step);
        let c2 = 1.0 - BETA2.powi(self.step);
        let tensors = params.slices_mut().into_iter().zip(grads.slices());
        for ((p, g), (m, v)) in tensors.zip(self.first.iter_mut().zip(self.second.iter_mut())) {
            for i in 0..p.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::model::ModelDims;

    fn params() -> Params {
        Params::zeros(&ModelDims {
            input_dim: 2,
            hidden: 2,
            height: 2,
            classes: 2,
        })
    }

    #[test]
    fn first_step_moves_by_lr() {
        // With bias correction the first update is lr * g / (|g| + eps).
        let mut p = params();
        let mut g = params();
        g.classifier_b[0] = 0.5;
        g.classifier_b[1] = -2.0;
        let mut adam = Adam::new(&p, 0.1);
        adam.step(&mut p, &g);
        assert!((p.classifier_b[0] + 0.1 * 0.5 / (0.5 + EPSILON)).abs() < 1e-15);
        assert!((p.classifier_b[1] - 0.1 * 2.0 / (2.0 + EPSILON)).abs() < 1e-15);
        assert_eq!(p.levels[0].w1[[0, 0]], 0.0);
    }

    #[test]
    fn zero_lr_keeps_params() {
        let mut p = params();
        p.classifier_w.fill(0.3);
        let before = p.clone();
        let mut g = params();
        g.classifier_w.fill(1.0);
        let mut adam = Adam::new(&p, 0.0);
        adam.step(&mut p, &g);
        assert_eq!(p, before);
    }
}
