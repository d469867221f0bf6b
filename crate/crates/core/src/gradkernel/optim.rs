use serde::{Deserialize, Serialize};

use super::{GradError, ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(Self::Sgd),
            "adam" => Ok(Self::Adam),
            other => Err(format!("unknown optimizer `{other}` (expected sgd or adam)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            learning_rate,
            ..Self::default()
        }
    }
}

/// First-order optimizer state (moment estimates for Adam).
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    steps: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Self {
            config,
            steps: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update from the accumulated gradients.
    ///
    /// Every gradient is checked before any parameter is touched, so a
    /// non-finite gradient leaves the store unchanged.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<(), GradError> {
        for (_, p) in store.iter() {
            if !p.grad.is_finite() {
                return Err(GradError::NonFiniteGradient(p.name.clone()));
            }
        }
        self.steps += 1;
        let lr = self.config.learning_rate;
        match self.config.kind {
            OptimizerKind::Sgd => {
                for p in store.iter_mut() {
                    let grad = p.grad.clone();
                    p.value.axpy(-lr, &grad);
                }
            }
            OptimizerKind::Adam => {
                if self.first.len() != store.len() {
                    self.first = store
                        .iter()
                        .map(|(_, p)| Tensor::zeros(p.value.rows(), p.value.cols()))
                        .collect();
                    self.second = self.first.clone();
                }
                let OptimizerConfig {
                    beta1,
                    beta2,
                    epsilon,
                    ..
                } = self.config;
                let bc1 = 1.0 - beta1.powi(self.steps as i32);
                let bc2 = 1.0 - beta2.powi(self.steps as i32);
                for ((p, m), v) in store
                    .iter_mut()
                    .zip(self.first.iter_mut())
                    .zip(self.second.iter_mut())
                {
                    let g = p.grad.data();
                    let (md, vd) = (m.data_mut(), v.data_mut());
                    for (i, w) in p.value.data_mut().iter_mut().enumerate() {
                        md[i] = beta1 * md[i] + (1.0 - beta1) * g[i];
                        vd[i] = beta2 * vd[i] + (1.0 - beta2) * g[i] * g[i];
                        let mh = md[i] / bc1;
                        let vh = vd[i] / bc2;
                        *w -= lr * mh / (vh.sqrt() + epsilon);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(value: f64, grad: f64) -> ParamStore {
        let mut s = ParamStore::new();
        let id = s.insert("theta", Tensor::scalar(value)).unwrap();
        s.get_mut(id).grad = Tensor::scalar(grad);
        s
    }

    #[test]
    fn sgd_step() {
        let mut s = store_with(1.0, 1.0);
        Optimizer::new(OptimizerConfig::sgd(0.1)).step(&mut s).unwrap();
        assert!((s.iter().next().unwrap().1.value.item().unwrap() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_noop() {
        for cfg in [OptimizerConfig::sgd(0.1), OptimizerConfig::default()] {
            let mut s = store_with(0.7, 0.0);
            Optimizer::new(cfg).step(&mut s).unwrap();
            assert_eq!(s.iter().next().unwrap().1.value.item(), Some(0.7));
        }
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut s = store_with(0.7, f64::NAN);
        let err = Optimizer::new(OptimizerConfig::default())
            .step(&mut s)
            .unwrap_err();
        assert!(matches!(err, GradError::NonFiniteGradient(ref n) if n == "theta"));
        assert_eq!(s.iter().next().unwrap().1.value.item(), Some(0.7));
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut s = store_with(1.0, 3.0);
        Optimizer::new(OptimizerConfig::default()).step(&mut s).unwrap();
        let v = s.iter().next().unwrap().1.value.item().unwrap();
        assert!((v - (1.0 - 1e-3)).abs() < 1e-9);
    }
}
