//! Probability providers behind NPP names.

mod checkpoint;
mod optim;

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::lang::NppQueryKind;
use crate::wmc::PROB_FLOOR;

pub use checkpoint::{checkpoint_from_str, checkpoint_to_string, load_checkpoint, save_checkpoint, CheckpointError, CHECKPOINT_MAGIC};
pub use optim::{Optimizer, OptimizerKind};

/// Models by NPP name.
pub type NppModels = BTreeMap<String, NppModel>;

const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NppError {
    #[error("{model} models cannot answer {kind:?} queries")]
    UnsupportedQueryKind { model: &'static str, kind: NppQueryKind },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{kind:?} queries need input data")]
    MissingData { kind: NppQueryKind },
    #[error("{kind:?} queries take {expected} input, got {got}")]
    WrongInput {
        kind: NppQueryKind,
        expected: &'static str,
        got: &'static str,
    },
}

/// Input attached to an NPP instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NppInput {
    Features(Vec<f64>),
    Bin(usize),
}

impl NppInput {
    fn describe(&self) -> &'static str {
        match self {
            NppInput::Features(_) => "a feature vector",
            NppInput::Bin(_) => "a bin index",
        }
    }
}

/// Conditioning argument of a forward call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Given<'a> {
    None,
    Data(&'a NppInput),
    /// Outcome index, for `P(X | C)`.
    Class(usize),
}

/// `P(C | x)` with `softmax(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxLinear {
    pub outcomes: usize,
    pub features: usize,
    /// `W` (outcomes x features, row-major) followed by `b` (outcomes).
    pub params: Vec<f64>,
}

/// Joint distribution over data bins x outcomes, `softmax` over all cells.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularJoint {
    pub bins: usize,
    pub outcomes: usize,
    /// Logits, bins x outcomes, row-major.
    pub logits: Vec<f64>,
}

/// Constant distribution; never trained.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedTable {
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NppModel {
    SoftmaxLinear(SoftmaxLinear),
    TabularJoint(TabularJoint),
    FixedTable(FixedTable),
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `J ⊙ (G - <J, G>)`: pullback through a softmax with output `j`.
fn softmax_pullback(j: &[f64], g: &[f64]) -> Vec<f64> {
    let dot: f64 = j.iter().zip(g).map(|(a, b)| a * b).sum();
    j.iter().zip(g).map(|(p, gi)| p * (gi - dot)).collect()
}

fn assert_simplex(p: &[f64]) {
    let s: f64 = p.iter().sum();
    assert!(
        (s - 1.0).abs() <= SIMPLEX_TOL && p.iter().all(|&v| v >= 0.0),
        "NPP output is not a distribution (sum {s})"
    );
}

impl SoftmaxLinear {
    pub fn zeros(outcomes: usize, features: usize) -> Self {
        SoftmaxLinear {
            outcomes,
            features,
            params: vec![0.0; outcomes * (features + 1)],
        }
    }

    /// Weights drawn from N(0, 0.01^2), zero bias.
    pub fn random(outcomes: usize, features: usize, rng: &mut impl Rng) -> Self {
        let mut m = Self::zeros(outcomes, features);
        let normal = Normal::new(0.0, 0.01).expect("valid normal");
        for w in &mut m.params[..outcomes * features] {
            *w = normal.sample(rng);
        }
        m
    }

    fn features<'a>(&self, data: Given<'a>, kind: NppQueryKind) -> Result<&'a [f64], NppError> {
        match data {
            Given::Data(NppInput::Features(x)) if x.len() == self.features => Ok(x),
            Given::Data(NppInput::Features(x)) => Err(NppError::DimensionMismatch {
                expected: self.features,
                got: x.len(),
            }),
            Given::Data(other) => Err(NppError::WrongInput {
                kind,
                expected: "a feature vector",
                got: other.describe(),
            }),
            _ => Err(NppError::MissingData { kind }),
        }
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        let (n, d) = (self.outcomes, self.features);
        let (w, b) = self.params.split_at(n * d);
        (0..n)
            .map(|c| b[c] + w[c * d..(c + 1) * d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }
}

impl TabularJoint {
    pub fn uniform(bins: usize, outcomes: usize) -> Self {
        TabularJoint {
            bins,
            outcomes,
            logits: vec![0.0; bins * outcomes],
        }
    }

    /// Logits whose softmax is `joint` (entries must be positive).
    pub fn from_joint(bins: usize, outcomes: usize, joint: &[f64]) -> Self {
        assert_eq!(joint.len(), bins * outcomes);
        TabularJoint {
            bins,
            outcomes,
            logits: joint.iter().map(|p| p.ln()).collect(),
        }
    }

    pub fn joint(&self) -> Vec<f64> {
        softmax(&self.logits)
    }

    /// `P(X = x)` with the outcome marginalized.
    pub fn data_marginal(&self) -> Vec<f64> {
        let j = self.joint();
        j.chunks(self.outcomes).map(|r| r.iter().sum()).collect()
    }

    fn bin(&self, data: Given<'_>, kind: NppQueryKind) -> Result<usize, NppError> {
        match data {
            Given::Data(NppInput::Bin(x)) if *x < self.bins => Ok(*x),
            Given::Data(NppInput::Bin(x)) => Err(NppError::DimensionMismatch {
                expected: self.bins,
                got: *x,
            }),
            Given::Data(other) => Err(NppError::WrongInput {
                kind,
                expected: "a bin index",
                got: other.describe(),
            }),
            _ => Err(NppError::MissingData { kind }),
        }
    }

    fn class(&self, data: Given<'_>, kind: NppQueryKind) -> Result<usize, NppError> {
        match data {
            Given::Class(c) if c < self.outcomes => Ok(c),
            Given::Class(c) => Err(NppError::DimensionMismatch {
                expected: self.outcomes,
                got: c,
            }),
            Given::Data(other) => Err(NppError::WrongInput {
                kind,
                expected: "an outcome index",
                got: other.describe(),
            }),
            Given::None => Err(NppError::MissingData { kind }),
        }
    }

    fn no_data(data: Given<'_>, kind: NppQueryKind) -> Result<(), NppError> {
        match data {
            Given::None => Ok(()),
            Given::Data(d) => Err(NppError::WrongInput {
                kind,
                expected: "no",
                got: d.describe(),
            }),
            Given::Class(_) => Err(NppError::WrongInput {
                kind,
                expected: "no",
                got: "an outcome index",
            }),
        }
    }

    fn forward(&self, kind: NppQueryKind, data: Given<'_>) -> Result<Vec<f64>, NppError> {
        let (m, n) = (self.bins, self.outcomes);
        let j = self.joint();
        Ok(match kind {
            NppQueryKind::Prior => {
                Self::no_data(data, kind)?;
                (0..n).map(|c| (0..m).map(|x| j[x * n + c]).sum()).collect()
            }
            NppQueryKind::CondClassGivenData => {
                let x = self.bin(data, kind)?;
                let row = &j[x * n..(x + 1) * n];
                let r: f64 = row.iter().sum();
                row.iter().map(|v| v / r).collect()
            }
            NppQueryKind::CondDataGivenClass => {
                let c = self.class(data, kind)?;
                let col: Vec<f64> = (0..m).map(|x| j[x * n + c]).collect();
                let s: f64 = col.iter().sum();
                col.into_iter().map(|v| v / s).collect()
            }
            NppQueryKind::Joint => {
                Self::no_data(data, kind)?;
                j
            }
        })
    }

    /// Gradient of `<upstream, forward(kind, data)>` with respect to the logits.
    fn backward(&self, kind: NppQueryKind, data: Given<'_>, g: &[f64]) -> Result<Vec<f64>, NppError> {
        let (m, n) = (self.bins, self.outcomes);
        let j = self.joint();
        let mut cell = vec![0.0; m * n];
        match kind {
            NppQueryKind::Prior => {
                Self::no_data(data, kind)?;
                check_len(g, n)?;
                for x in 0..m {
                    cell[x * n..(x + 1) * n].copy_from_slice(g);
                }
            }
            NppQueryKind::CondClassGivenData => {
                let x = self.bin(data, kind)?;
                check_len(g, n)?;
                let row = &j[x * n..(x + 1) * n];
                let r: f64 = row.iter().sum();
                let gy: f64 = g.iter().zip(row).map(|(a, b)| a * b).sum::<f64>() / (r * r);
                for c in 0..n {
                    cell[x * n + c] = g[c] / r - gy;
                }
            }
            NppQueryKind::CondDataGivenClass => {
                let c = self.class(data, kind)?;
                check_len(g, m)?;
                let s: f64 = (0..m).map(|x| j[x * n + c]).sum();
                let gy: f64 = (0..m).map(|x| g[x] * j[x * n + c]).sum::<f64>() / (s * s);
                for x in 0..m {
                    cell[x * n + c] = g[x] / s - gy;
                }
            }
            NppQueryKind::Joint => {
                Self::no_data(data, kind)?;
                check_len(g, m * n)?;
                cell.copy_from_slice(g);
            }
        }
        Ok(softmax_pullback(&j, &cell))
    }
}

fn check_len(g: &[f64], expected: usize) -> Result<(), NppError> {
    if g.len() == expected {
        Ok(())
    } else {
        Err(NppError::DimensionMismatch { expected, got: g.len() })
    }
}

impl NppModel {
    pub fn kind_name(&self) -> &'static str {
        match self {
            NppModel::SoftmaxLinear(_) => "softmax_linear",
            NppModel::TabularJoint(_) => "tabular_joint",
            NppModel::FixedTable(_) => "fixed_table",
        }
    }

    pub fn num_outcomes(&self) -> usize {
        match self {
            NppModel::SoftmaxLinear(m) => m.outcomes,
            NppModel::TabularJoint(m) => m.outcomes,
            NppModel::FixedTable(m) => m.probs.len(),
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            NppModel::SoftmaxLinear(m) => &m.params,
            NppModel::TabularJoint(m) => &m.logits,
            NppModel::FixedTable(_) => &[],
        }
    }

    /// Mutable parameters; empty for fixed tables.
    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            NppModel::SoftmaxLinear(m) => &mut m.params,
            NppModel::TabularJoint(m) => &mut m.logits,
            NppModel::FixedTable(_) => &mut [],
        }
    }

    pub fn trainable(&self) -> bool {
        !matches!(self, NppModel::FixedTable(_))
    }

    /// Whether the model represents a joint over data and outcomes.
    pub fn is_joint(&self) -> bool {
        matches!(self, NppModel::TabularJoint(_))
    }

    /// The distribution asked for by `kind`; a simplex point.
    pub fn forward(&self, kind: NppQueryKind, data: Given<'_>) -> Result<Vec<f64>, NppError> {
        let p = match self {
            NppModel::SoftmaxLinear(m) => {
                if kind != NppQueryKind::CondClassGivenData {
                    return Err(NppError::UnsupportedQueryKind {
                        model: "softmax-linear",
                        kind,
                    });
                }
                softmax(&m.logits(m.features(data, kind)?))
            }
            NppModel::TabularJoint(m) => m.forward(kind, data)?,
            NppModel::FixedTable(t) => match kind {
                NppQueryKind::Prior | NppQueryKind::CondClassGivenData => t.probs.clone(),
                _ => {
                    return Err(NppError::UnsupportedQueryKind {
                        model: "fixed-table",
                        kind,
                    })
                }
            },
        };
        assert_simplex(&p);
        Ok(p)
    }

    /// Parameter gradient of `<upstream, forward(kind, data)>`.
    pub fn backward(&self, kind: NppQueryKind, data: Given<'_>, upstream: &[f64]) -> Result<Vec<f64>, NppError> {
        match self {
            NppModel::SoftmaxLinear(m) => {
                if kind != NppQueryKind::CondClassGivenData {
                    return Err(NppError::UnsupportedQueryKind {
                        model: "softmax-linear",
                        kind,
                    });
                }
                let x = m.features(data, kind)?;
                check_len(upstream, m.outcomes)?;
                let p = softmax(&m.logits(x));
                let dz = softmax_pullback(&p, upstream);
                let (n, d) = (m.outcomes, m.features);
                let mut grad = vec![0.0; n * (d + 1)];
                for c in 0..n {
                    for (k, xk) in x.iter().enumerate() {
                        grad[c * d + k] = dz[c] * xk;
                    }
                    grad[n * d + c] = dz[c];
                }
                Ok(grad)
            }
            NppModel::TabularJoint(m) => m.backward(kind, data, upstream),
            NppModel::FixedTable(t) => {
                check_len(upstream, t.probs.len())?;
                Ok(Vec::new())
            }
        }
    }
}

/// Data log-likelihood of a batch of bins and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    /// `Σ_i log P(X = x_i)`, each term floored at [`PROB_FLOOR`].
    pub loss: f64,
    pub grad: Vec<f64>,
    /// Samples whose probability fell below the floor.
    pub floored: usize,
}

pub fn npp_loss_grad(model: &TabularJoint, bins: &[usize]) -> Result<LossGrad, NppError> {
    let (m, n) = (model.bins, model.outcomes);
    let j = model.joint();
    let r: Vec<f64> = j.chunks(n).map(|row| row.iter().sum()).collect();
    let mut loss = 0.0;
    let mut floored = 0;
    let mut counts = vec![0.0; m];
    for &x in bins {
        if x >= m {
            return Err(NppError::DimensionMismatch { expected: m, got: x });
        }
        if r[x] < PROB_FLOOR {
            floored += 1;
        }
        loss += r[x].max(PROB_FLOOR).ln();
        counts[x] += 1.0;
    }
    // d/dl[y,c] Σ_i log R_{x_i} = Σ_i (δ(y = x_i) J[y,c] / R_y - J[y,c])
    let total = bins.len() as f64;
    let grad = (0..m * n)
        .map(|cell| {
            let y = cell / n;
            let own = if counts[y] > 0.0 { counts[y] * j[cell] / r[y] } else { 0.0 };
            own - total * j[cell]
        })
        .collect();
    Ok(LossGrad { loss, grad, floored })
}

#[cfg(test)]
mod tests;
