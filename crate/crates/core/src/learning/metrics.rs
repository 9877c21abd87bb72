use std::fmt::Write;

use crate::same::PruneState;

pub const METRICS_HEADER: &str =
    "epoch,batch,mode,num_queries,mean_gamma,mean_solutions,solve_ms,grad_ms,update_ms,test_acc";

#[derive(Debug, Clone, PartialEq)]
pub struct BatchMetrics {
    pub epoch: usize,
    pub batch: usize,
    pub num_queries: usize,
    pub mean_gamma: f64,
    pub mean_solutions: f64,
    pub solve_ms: f64,
    pub grad_ms: f64,
    pub update_ms: f64,
    /// Set on the last batch of an epoch when a test set is given.
    pub test_acc: Option<f64>,
    pub skipped: usize,
    pub fallbacks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseB {
    /// No model has a data distribution to fit.
    Skipped,
    Applied { log_likelihood: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_gamma: f64,
    pub mean_solutions: f64,
    pub solve_ms: f64,
    /// Wall time of the whole epoch, evaluation excluded.
    pub wall_ms: f64,
    pub test_acc: Option<f64>,
    pub phase_b: PhaseB,
    pub learning_rate: f64,
    pub skipped: usize,
    pub fallbacks: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingTrace {
    pub mode: String,
    pub batches: Vec<BatchMetrics>,
    pub epochs: Vec<EpochMetrics>,
    pub prune: PruneState,
    /// Epochs after which the learning rate was halved.
    pub lr_halvings: Vec<usize>,
}

impl TrainingTrace {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.test_acc)
    }
}

/// Per-batch CSV. With `timing` off the three time columns are left empty
/// so that runs with equal seeds produce identical files.
pub fn write_metrics_csv(trace: &TrainingTrace, timing: bool) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    let t = |v: f64| if timing { format!("{v:.3}") } else { String::new() };
    for b in &trace.batches {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            b.epoch,
            b.batch,
            trace.mode,
            b.num_queries,
            b.mean_gamma,
            b.mean_solutions,
            t(b.solve_ms),
            t(b.grad_ms),
            t(b.update_ms),
            b.test_acc.map(|a| a.to_string()).unwrap_or_default()
        );
    }
    s
}
