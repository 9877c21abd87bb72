use crate::ground::GroundProgram;
use crate::solver::PotentialSolution;
use crate::wmc::{query_prob, PROB_FLOOR};

/// Reward, penalty and gradient for the outcomes of one ground NPP.
#[derive(Debug, Clone, PartialEq)]
pub struct NppGradient {
    /// `α_j = Σ_{I ⊨ Q, I ⊨ c=v_j} P(I) / p_j`, i.e. `∂P(Q)/∂p_j`.
    pub alpha: Vec<f64>,
    /// `β_j = Σ_{j' ≠ j} α_{j'}`.
    pub beta: Vec<f64>,
    /// `(α_j - β_j) / γ`.
    pub grad: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    /// `P(Q)` under the given solutions.
    pub gamma: f64,
    pub npps: Vec<NppGradient>,
    /// Largest `|Σ_j α_j p_j - γ|` over the NPPs.
    pub identity_residual: f64,
}

/// `P(Q)` fell to the floor; the query carries no usable gradient.
#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("query probability {gamma} is below the floor")]
pub struct SkippedQuery {
    pub gamma: f64,
}

pub const IDENTITY_TOL: f64 = 1e-9;

/// Gradient of `log P(Q)` with respect to every NPP output probability.
///
/// `α_j` is accumulated as the product of the *other* NPPs' probabilities,
/// which equals `P(I) / p_j` without dividing by a possibly zero `p_j`.
///
/// Panics if `Σ_j α_j p_j` differs from `γ` by more than [`IDENTITY_TOL`]
/// for some NPP; every solution contributes its full probability to each
/// NPP's weighted reward exactly once.
pub fn grad_logpq(solutions: &[PotentialSolution], gp: &GroundProgram) -> Result<GradientReport, SkippedQuery> {
    let gamma = query_prob(solutions).value;
    if gamma <= PROB_FLOOR {
        return Err(SkippedQuery { gamma });
    }
    let n = gp.npps.len();
    let mut alpha: Vec<Vec<f64>> = gp.npps.iter().map(|g| vec![0.0; g.outcomes.len()]).collect();
    let mut suffix = vec![1.0; n + 1];
    for s in solutions {
        let a = &s.assignment;
        for i in (0..n).rev() {
            suffix[i] = suffix[i + 1] * gp.npps[i].probs[a[i]];
        }
        let mut prefix = 1.0;
        for i in 0..n {
            alpha[i][a[i]] += prefix * suffix[i + 1];
            prefix *= gp.npps[i].probs[a[i]];
        }
    }
    let mut identity_residual: f64 = 0.0;
    let npps = alpha
        .into_iter()
        .zip(&gp.npps)
        .map(|(alpha, g)| {
            let beta: Vec<f64> = (0..alpha.len())
                .map(|j| alpha.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, a)| a).sum())
                .collect();
            let recomposed: f64 = alpha.iter().zip(&g.probs).map(|(a, p)| a * p).sum();
            identity_residual = identity_residual.max((recomposed - gamma).abs());
            let grad = alpha.iter().zip(&beta).map(|(a, b)| (a - b) / gamma).collect();
            NppGradient { alpha, beta, grad }
        })
        .collect();
    assert!(
        identity_residual <= IDENTITY_TOL,
        "reward identity violated: residual {identity_residual}"
    );
    Ok(GradientReport {
        gamma,
        npps,
        identity_residual,
    })
}
