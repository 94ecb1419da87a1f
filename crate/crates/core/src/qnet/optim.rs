use serde::{Deserialize, Serialize};

use super::Mlp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

/// Parameter update rule. Plain SGD is stateless; Adam keeps first/second
/// moment estimates shaped like the parameters.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd,
    Adam(Adam),
}

#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Mlp,
    v: Mlp,
    t: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, shape: &Mlp) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam => Optimizer::Adam(Adam {
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                m: shape.zeros_like(),
                v: shape.zeros_like(),
                t: 0,
            }),
        }
    }

    pub fn step(&mut self, params: &mut Mlp, grads: &Mlp, lr: f64) {
        match self {
            Optimizer::Sgd => params.add_scaled(grads, -lr),
            Optimizer::Adam(a) => {
                a.t = a.t.saturating_add(1);
                let c1 = 1.0 - a.beta1.powi(a.t);
                let c2 = 1.0 - a.beta2.powi(a.t);
                let (b1, b2, eps) = (a.beta1, a.beta2, a.eps);
                let moments = a.m.params_mut().zip(a.v.params_mut());
                for ((p, g), (m, v)) in params.params_mut().zip(grads.params()).zip(moments) {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
            }
        }
    }
}
