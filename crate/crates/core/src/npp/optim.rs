use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::NppModels;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

/// Gradient-ascent step applier. Gradients point uphill.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    state: BTreeMap<String, Moments>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Optimizer {
            kind,
            state: BTreeMap::new(),
        }
    }

    /// `params += lr * step(grad)` for every model with a gradient entry.
    /// Fixed tables have no parameters and are left alone.
    pub fn ascend(&mut self, models: &mut NppModels, grads: &BTreeMap<String, Vec<f64>>, lr: f64) {
        for (name, g) in grads {
            let Some(model) = models.get_mut(name) else { continue };
            let params = model.params_mut();
            if params.is_empty() {
                continue;
            }
            assert_eq!(params.len(), g.len(), "gradient shape for `{name}`");
            match self.kind {
                OptimizerKind::Sgd => {
                    for (p, gi) in params.iter_mut().zip(g) {
                        *p += lr * gi;
                    }
                }
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    let st = self.state.entry(name.clone()).or_default();
                    if st.m.len() != g.len() {
                        st.m = vec![0.0; g.len()];
                        st.v = vec![0.0; g.len()];
                        st.t = 0;
                    }
                    st.t += 1;
                    let c1 = 1.0 - beta1.powi(st.t);
                    let c2 = 1.0 - beta2.powi(st.t);
                    for i in 0..g.len() {
                        st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * g[i];
                        st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * g[i] * g[i];
                        params[i] += lr * (st.m[i] / c1) / ((st.v[i] / c2).sqrt() + eps);
                    }
                }
            }
        }
    }
}
