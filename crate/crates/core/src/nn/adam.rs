use ndarray::Zip;

use super::{MlpGrads, MlpParams, NnError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// Adam moments for one network. Owned by a single training loop.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first_moment: MlpGrads,
    second_moment: MlpGrads,
    step_count: u64,
}

impl AdamState {
    pub fn new(params: &MlpParams, config: AdamConfig) -> Self {
        Self {
            config,
            first_moment: params.zero_grads(),
            second_moment: params.zero_grads(),
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One bias-corrected Adam update, in place.
    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpGrads) -> Result<(), NnError> {
        if !grads.is_congruent(params) || !self.first_moment.is_congruent(params) {
            return Err(NnError::InvalidArchitecture(
                "gradient shape does not match parameters".into(),
            ));
        }
        self.step_count += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step_count as i32;
        let c1 = 1.0 / (1.0 - beta1.powi(t));
        let c2 = 1.0 / (1.0 - beta2.powi(t));
        let update = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= learning_rate * (*m * c1) / ((*v * c2).sqrt() + epsilon);
        };
        let (weights, biases) = params.parts_mut();
        for l in 0..weights.len() {
            Zip::from(&mut weights[l])
                .and(&grads.weights[l])
                .and(&mut self.first_moment.weights[l])
                .and(&mut self.second_moment.weights[l])
                .for_each(update);
            Zip::from(&mut biases[l])
                .and(&grads.biases[l])
                .and(&mut self.first_moment.biases[l])
                .and(&mut self.second_moment.biases[l])
                .for_each(update);
        }
        Ok(())
    }
}
