use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Rmsprop,
}

pub const RMSPROP_DECAY: f64 = 0.99;
pub const RMSPROP_EPSILON: f64 = 1e-8;

/// Gradient descent, optionally with a per-coordinate RMSProp accumulator.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    decay: f64,
    epsilon: f64,
    square_avg: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, shape: &[Vec<f64>]) -> Self {
        Self {
            kind,
            learning_rate,
            decay: RMSPROP_DECAY,
            epsilon: RMSPROP_EPSILON,
            square_avg: shape.iter().map(|row| vec![0.0; row.len()]).collect(),
        }
    }

    pub fn step<'a>(&mut self, params: impl Iterator<Item = &'a mut [f64]>, grad: &[Vec<f64>]) {
        for ((row, g), acc) in params.zip(grad).zip(self.square_avg.iter_mut()) {
            for ((x, &gi), v) in row.iter_mut().zip(g).zip(acc.iter_mut()) {
                match self.kind {
                    OptimizerKind::Sgd => *x -= self.learning_rate * gi,
                    OptimizerKind::Rmsprop => {
                        *v = self.decay * *v + (1.0 - self.decay) * gi * gi;
                        *x -= self.learning_rate * gi / (v.sqrt() + self.epsilon);
                    }
                }
            }
        }
    }
}
