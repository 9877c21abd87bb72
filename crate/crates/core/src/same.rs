//! Outcome pruning: keep, per ground NPP, only the most probable outcomes
//! covering a probability threshold, and track how the number of potential
//! solutions shrinks over training.

use std::str::FromStr;

use crate::ground::GroundProgram;

const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SameRule {
    /// Smallest probability-sorted prefix whose mass reaches the threshold.
    #[default]
    Cover,
    /// Largest prefix whose mass stays at or below the threshold (at least one
    /// outcome is always kept).
    Leq,
}

impl FromStr for SameRule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cover" => Ok(SameRule::Cover),
            "leq" => Ok(SameRule::Leq),
            _ => Err(format!("unknown pruning rule `{s}` (expected cover or leq)")),
        }
    }
}

/// What to do when pruning leaves a query without solutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SameFallback {
    /// Solve the query again without masks.
    #[default]
    Exact,
    /// Skip the query.
    Skip,
}

impl FromStr for SameFallback {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exact" => Ok(SameFallback::Exact),
            "skip" => Ok(SameFallback::Skip),
            _ => Err(format!("unknown fallback `{s}` (expected exact or skip)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SameError {
    #[error("expected {expected} masks, got {got}")]
    Count { expected: usize, got: usize },
    #[error("mask for `{npp}` has length {got}, expected {expected}")]
    Length { npp: String, expected: usize, got: usize },
    #[error("mask deactivates every outcome of `{npp}`")]
    Empty { npp: String },
}

/// Active mask over `probs` for threshold `t`. Outcomes are ranked by
/// descending probability (lower index first on ties); every outcome tied
/// with the last one kept is kept as well.
pub fn same_prune(probs: &[f64], t: f64, rule: SameRule) -> Vec<bool> {
    let n = probs.len();
    if n == 0 {
        return Vec::new();
    }
    if rule == SameRule::Cover && t >= 1.0 {
        return vec![true; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let mut keep = 0;
    let mut mass = 0.0;
    match rule {
        SameRule::Cover => {
            while keep < n {
                mass += probs[order[keep]];
                keep += 1;
                if mass >= t - MASS_TOL {
                    break;
                }
            }
        }
        SameRule::Leq => {
            while keep < n && mass + probs[order[keep]] <= t + MASS_TOL {
                mass += probs[order[keep]];
                keep += 1;
            }
            keep = keep.max(1);
        }
    }
    let cut = probs[order[keep - 1]];
    let mut mask = vec![false; n];
    for (rank, &j) in order.iter().enumerate() {
        if rank < keep || probs[j] == cut {
            mask[j] = true;
        }
    }
    mask
}

/// Sum of the probabilities of the active outcomes.
pub fn covered_mass(probs: &[f64], mask: &[bool]) -> f64 {
    probs.iter().zip(mask).filter(|(_, &m)| m).map(|(p, _)| p).sum()
}

/// A copy of `gp` with the given active masks (one per ground NPP).
/// Probabilities are left untouched.
pub fn apply_masks(gp: &GroundProgram, masks: &[Vec<bool>]) -> Result<GroundProgram, SameError> {
    if masks.len() != gp.npps.len() {
        return Err(SameError::Count {
            expected: gp.npps.len(),
            got: masks.len(),
        });
    }
    let mut out = gp.clone();
    for (npp, mask) in out.npps.iter_mut().zip(masks) {
        if mask.len() != npp.outcomes.len() {
            return Err(SameError::Length {
                npp: npp.to_string(),
                expected: npp.outcomes.len(),
                got: mask.len(),
            });
        }
        if !mask.iter().any(|&m| m) {
            return Err(SameError::Empty { npp: npp.to_string() });
        }
        npp.active = mask.clone();
    }
    Ok(out)
}

/// Potential-solution counts per epoch, plus pruning statistics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PruneState {
    pub epochs: Vec<EpochPrune>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpochPrune {
    /// Solutions per solved query, in solving order.
    pub counts: Vec<usize>,
    /// Smallest covered mass over all pruned NPP instances.
    pub min_covered: f64,
    /// Mean number of active outcomes per NPP instance.
    pub mean_active: f64,
    /// Queries re-solved without masks after pruning removed every solution.
    pub fallbacks: usize,
}

impl EpochPrune {
    pub fn mean(&self) -> f64 {
        if self.counts.is_empty() {
            0.0
        } else {
            self.counts.iter().sum::<usize>() as f64 / self.counts.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkageRow {
    pub epoch: usize,
    pub mean: f64,
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkageReport {
    pub rows: Vec<ShrinkageRow>,
    /// One verdict per consecutive pair of epochs: mean did not grow by more
    /// than the slack.
    pub non_increasing: Vec<bool>,
}

impl ShrinkageReport {
    pub fn all_non_increasing(&self) -> bool {
        self.non_increasing.iter().all(|&v| v)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,mean_solutions,min,max\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{}\n", r.epoch, r.mean, r.min, r.max));
        }
        s
    }
}

pub const DEFAULT_SLACK: f64 = 0.05;

/// Epoch means of the potential-solution counts and whether each epoch's
/// mean stays within `slack` (relative) of the previous one.
pub fn shrinkage_report(state: &PruneState, slack: f64) -> ShrinkageReport {
    let rows: Vec<ShrinkageRow> = state
        .epochs
        .iter()
        .enumerate()
        .map(|(i, e)| ShrinkageRow {
            epoch: i + 1,
            mean: e.mean(),
            min: e.counts.iter().copied().min().unwrap_or(0),
            max: e.counts.iter().copied().max().unwrap_or(0),
        })
        .collect();
    let non_increasing = rows.windows(2).map(|w| w[1].mean <= w[0].mean * (1.0 + slack)).collect();
    ShrinkageReport { rows, non_increasing }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground::ground;
    use crate::lang::{parse_program, parse_query};
    use crate::solver::enumerate_solutions;

    #[test]
    fn cover_examples() {
        assert_eq!(same_prune(&[0.6, 0.25, 0.1, 0.05], 0.9, SameRule::Cover), [true, true, true, false]);
        assert_eq!(same_prune(&[0.25; 4], 0.99, SameRule::Cover), [true; 4]);
        let mut p = vec![0.995];
        p.extend([0.005 / 9.0; 9]);
        let m = same_prune(&p, 0.99, SameRule::Cover);
        assert_eq!(m.iter().filter(|&&x| x).count(), 1);
        assert!(m[0]);
    }

    #[test]
    fn ties_at_cut_are_kept() {
        assert_eq!(same_prune(&[0.5, 0.2, 0.2, 0.1], 0.6, SameRule::Cover), [true, true, true, false]);
        assert_eq!(same_prune(&[0.0, 1.0, 0.0], 1.0, SameRule::Cover), [true; 3]);
    }

    #[test]
    fn leq_rule() {
        assert_eq!(same_prune(&[0.6, 0.25, 0.1, 0.05], 0.9, SameRule::Leq), [true, true, false, false]);
        assert_eq!(same_prune(&[0.95, 0.05], 0.9, SameRule::Leq), [true, false]);
    }

    const SUM2: &str = "img(i1). img(i2). npp(digit(X),[0..9]) :- img(X).
        sum2(A,B,S) :- digit(+A,-N1), digit(+B,-N2), A < B, S = N1 + N2.";

    fn only(j: usize) -> Vec<bool> {
        (0..10).map(|k| k == j).collect()
    }

    #[test]
    fn masks_restrict_solutions() {
        let gp = ground(&parse_program(SUM2).unwrap(), None).unwrap();
        assert_eq!(apply_masks(&gp, &[vec![true; 10], vec![true; 10]]).unwrap(), gp);
        let q10 = gp.ground_query(&parse_query(":- not sum2(i1,i2,10).").unwrap()).unwrap();
        let masked = apply_masks(&gp, &[only(3), only(7)]).unwrap();
        assert_eq!(enumerate_solutions(&masked, &q10).unwrap().len(), 1);
        assert_eq!(masked.npps[0].probs, gp.npps[0].probs);
        let q19 = gp.ground_query(&parse_query(":- not sum2(i1,i2,19).").unwrap()).unwrap();
        let masked = apply_masks(&gp, &[only(0), vec![true; 10]]).unwrap();
        assert!(enumerate_solutions(&masked, &q19).unwrap().is_empty());
        assert!(matches!(
            apply_masks(&gp, &[vec![false; 10], vec![true; 10]]),
            Err(SameError::Empty { .. })
        ));
        assert!(matches!(apply_masks(&gp, &[only(1)]), Err(SameError::Count { .. })));
    }

    #[test]
    fn concentrating_distributions_nest_solution_sets() {
        let gp = ground(&parse_program(SUM2).unwrap(), None).unwrap();
        let q = gp.ground_query(&parse_query(":- not sum2(i1,i2,10).").unwrap()).unwrap();
        let logits: [Vec<f64>; 2] = [
            (0..10).map(|j| -((j as f64) - 3.0).powi(2) / 4.0).collect(),
            (0..10).map(|j| -((j as f64) - 7.0).powi(2) / 4.0).collect(),
        ];
        let mut prev: Option<Vec<Vec<usize>>> = None;
        for step in 0..30 {
            let temp = 1.0 + step as f64;
            let masks: Vec<Vec<bool>> = logits
                .iter()
                .map(|l| {
                    let e: Vec<f64> = l.iter().map(|v| (v * temp).exp()).collect();
                    let s: f64 = e.iter().sum();
                    let p: Vec<f64> = e.iter().map(|v| v / s).collect();
                    same_prune(&p, 0.99, SameRule::Cover)
                })
                .collect();
            let sols: Vec<Vec<usize>> = enumerate_solutions(&apply_masks(&gp, &masks).unwrap(), &q)
                .unwrap()
                .into_iter()
                .map(|s| s.assignment)
                .collect();
            if let Some(p) = &prev {
                assert!(sols.iter().all(|s| p.contains(s)));
            }
            prev = Some(sols);
        }
        assert_eq!(prev.unwrap(), vec![vec![3, 7]]);
    }

    #[test]
    fn shrinkage_verdicts() {
        let epoch = |counts: Vec<usize>| EpochPrune {
            counts,
            ..EpochPrune::default()
        };
        let state = PruneState {
            epochs: vec![epoch(vec![9, 9]), epoch(vec![9, 9]), epoch(vec![2, 4]), epoch(vec![3, 4])],
        };
        let r = shrinkage_report(&state, DEFAULT_SLACK);
        assert_eq!(r.non_increasing, vec![true, true, false]);
        assert_eq!(r.rows[2], ShrinkageRow { epoch: 3, mean: 3.0, min: 2, max: 4 });
        assert!(r.to_csv().starts_with("epoch,mean_solutions,min,max\n1,9,9,9\n"));
    }
}
