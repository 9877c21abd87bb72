//! Probability of a potential solution, of a query and of a query set.

use std::collections::HashMap;

use crate::ground::GroundProgram;
use crate::solver::PotentialSolution;

/// Floor applied before taking logarithms of probabilities.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WmcError {
    #[error("assignment has {got} entries but the program has {expected} NPP instances")]
    ArityMismatch { got: usize, expected: usize },
    #[error("no probability for outcome {outcome} of `{npp}`")]
    MissingProbability { npp: String, outcome: usize },
}

/// Product of the chosen outcomes' probabilities, in NPP order. Masked
/// outcomes contribute their raw probability.
pub fn assignment_prob(gp: &GroundProgram, assignment: &[usize]) -> f64 {
    gp.npps
        .iter()
        .zip(assignment)
        .map(|(n, &j)| n.probs[j])
        .product()
}

/// `Π P(c=v)` over the solution's assignment. The division by the number of
/// models sharing the assignment is omitted: a stratified program has exactly
/// one per assignment (checked in [`query_prob`]).
pub fn solution_prob(s: &PotentialSolution, gp: &GroundProgram) -> Result<f64, WmcError> {
    if s.assignment.len() != gp.npps.len() {
        return Err(WmcError::ArityMismatch {
            got: s.assignment.len(),
            expected: gp.npps.len(),
        });
    }
    for (n, &j) in gp.npps.iter().zip(&s.assignment) {
        if j >= n.probs.len() {
            return Err(WmcError::MissingProbability {
                npp: n.to_string(),
                outcome: j,
            });
        }
    }
    Ok(assignment_prob(gp, &s.assignment))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryProbability {
    pub value: f64,
    /// Probability of each solution, in the order given.
    pub per_solution: Vec<f64>,
    /// Models sharing each solution's assignment; always 1 here.
    pub normalization: Vec<usize>,
}

impl QueryProbability {
    pub fn num_solutions(&self) -> usize {
        self.per_solution.len()
    }

    pub fn log_value(&self) -> f64 {
        self.value.max(PROB_FLOOR).ln()
    }
}

/// Sum of the solutions' probabilities, accumulated in list order.
///
/// Panics if two solutions share an assignment: the solver produces one model
/// per assignment, so the agreement count is always 1.
pub fn query_prob(solutions: &[PotentialSolution]) -> QueryProbability {
    let mut counts: HashMap<&[usize], usize> = HashMap::with_capacity(solutions.len());
    for s in solutions {
        *counts.entry(&s.assignment).or_default() += 1;
    }
    let normalization: Vec<usize> = solutions.iter().map(|s| counts[s.assignment.as_slice()]).collect();
    assert!(
        normalization.iter().all(|&c| c == 1),
        "several models share one NPP assignment"
    );
    let per_solution: Vec<f64> = solutions.iter().map(|s| s.prob).collect();
    let value = per_solution.iter().sum();
    QueryProbability {
        value,
        normalization,
        per_solution,
    }
}

pub fn query_set_prob(qs: &[QueryProbability]) -> f64 {
    qs.iter().map(|q| q.value).product()
}

/// Log-space query-set probability. Each factor is floored at
/// [`PROB_FLOOR`]; the indices of floored queries are returned.
pub fn log_query_set_prob(qs: &[QueryProbability]) -> (f64, Vec<usize>) {
    let mut flagged = Vec::new();
    let mut total = 0.0;
    for (i, q) in qs.iter().enumerate() {
        if q.value < PROB_FLOOR {
            flagged.push(i);
        }
        total += q.value.max(PROB_FLOOR).ln();
    }
    (total, flagged)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qp(v: f64) -> QueryProbability {
        QueryProbability {
            value: v,
            per_solution: vec![v],
            normalization: vec![1],
        }
    }

    #[test]
    fn set_product() {
        assert!((query_set_prob(&[qp(0.09), qp(0.09)]) - 0.0081).abs() < 1e-15);
        assert_eq!(query_set_prob(&[]), 1.0);
        assert_eq!(query_set_prob(&[qp(0.5), qp(0.0)]), 0.0);
    }

    #[test]
    fn log_floor_flags() {
        let (l, flagged) = log_query_set_prob(&[qp(0.5), qp(0.0)]);
        assert_eq!(flagged, vec![1]);
        assert!((l - (0.5f64.ln() + 1e-12f64.ln())).abs() < 1e-12);
        assert_eq!(log_query_set_prob(&[]), (0.0, vec![]));
    }

    #[test]
    fn empty_query() {
        let q = query_prob(&[]);
        assert_eq!(q.value, 0.0);
        assert_eq!(q.num_solutions(), 0);
    }
}
