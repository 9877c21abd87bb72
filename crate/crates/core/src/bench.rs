//! Runs several inference modes on the same task and data, and summarizes
//! accuracy and timing against exact mode.

use std::fmt::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};

use crate::data::PreparedQuery;
use crate::ground::GroundProgram;
use crate::learning::{coordinate_descent, init_models, Mode, TrainConfig, TrainingTrace};
use crate::npp::NppModels;

#[derive(Debug, Clone)]
pub enum ModeOutcome {
    Finished { trace: TrainingTrace, models: NppModels },
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct ModeRun {
    pub mode: Mode,
    pub outcome: ModeOutcome,
}

impl ModeRun {
    pub fn trace(&self) -> Option<&TrainingTrace> {
        match &self.outcome {
            ModeOutcome::Finished { trace, .. } => Some(trace),
            ModeOutcome::Failed(_) => None,
        }
    }

    /// Mean wall time per epoch, in milliseconds.
    pub fn mean_epoch_ms(&self) -> Option<f64> {
        let t = self.trace()?;
        (!t.epochs.is_empty()).then(|| t.epochs.iter().map(|e| e.wall_ms).sum::<f64>() / t.epochs.len() as f64)
    }
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub runs: Vec<ModeRun>,
}

/// Trains a fresh model per mode from the same seed. An error or panic in
/// one mode is recorded as a failure and does not stop the others.
pub fn run_bench(
    gp: &GroundProgram,
    train: &[PreparedQuery],
    test: &[PreparedQuery],
    modes: &[Mode],
    cfg: &TrainConfig,
) -> BenchResult {
    let runs = modes
        .iter()
        .map(|&mode| {
            let cfg = TrainConfig { mode, ..cfg.clone() };
            log::info!("bench: running {mode}");
            let result = catch_unwind(AssertUnwindSafe(|| {
                let mut models = init_models(gp, train, cfg.seed);
                coordinate_descent(gp, &mut models, train, Some(test), &cfg).map(|trace| (trace, models))
            }));
            let outcome = match result {
                Ok(Ok((trace, models))) => ModeOutcome::Finished { trace, models },
                Ok(Err(e)) => ModeOutcome::Failed(e.to_string()),
                Err(panic) => ModeOutcome::Failed(
                    panic
                        .downcast_ref::<String>()
                        .cloned()
                        .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                        .unwrap_or_else(|| "panic".into()),
                ),
            };
            if let ModeOutcome::Failed(msg) = &outcome {
                log::error!("bench: {mode} FAILED: {msg}");
            }
            ModeRun { mode, outcome }
        })
        .collect();
    BenchResult { runs }
}

pub const SUMMARY_HEADER: &str = "mode,status,accuracy,mean_epoch_ms,speedup_vs_exact,fallbacks";

/// One row per mode. Timing columns are left empty when `timing` is off.
pub fn summary_csv(result: &BenchResult, timing: bool) -> String {
    let exact_ms = result
        .runs
        .iter()
        .find(|r| r.mode == Mode::Exact)
        .and_then(ModeRun::mean_epoch_ms);
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for r in &result.runs {
        let label = r.mode.to_string();
        match &r.outcome {
            ModeOutcome::Failed(_) => {
                let _ = writeln!(s, "{label},FAILED,,,,");
            }
            ModeOutcome::Finished { trace, .. } => {
                let acc = trace.final_accuracy().map(|a| a.to_string()).unwrap_or_default();
                let fallbacks: usize = trace.epochs.iter().map(|e| e.fallbacks).sum();
                let (ms, speedup) = match (timing, r.mean_epoch_ms(), exact_ms) {
                    (true, Some(m), Some(e)) if m > 0.0 => (format!("{m:.3}"), format!("{:.3}", e / m)),
                    (true, Some(m), _) => (format!("{m:.3}"), String::new()),
                    _ => (String::new(), String::new()),
                };
                let _ = writeln!(s, "{label},ok,{acc},{ms},{speedup},{fallbacks}");
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::prepare_all;
    use crate::ground::ground;
    use crate::lang::parse_program;
    use crate::task::{gen_sum, split, sum_program, InputKind};

    #[test]
    fn failed_mode_does_not_stop_others() {
        let gp = ground(&parse_program(&sum_program(2)).unwrap(), None).unwrap();
        let (train, test) = split(gen_sum(2, 40, 1, InputKind::default()), 0.8, 1);
        let (train, test) = (prepare_all(&gp, &train).unwrap(), prepare_all(&gp, &test).unwrap());
        let cfg = TrainConfig {
            epochs: 1,
            timing: false,
            ..TrainConfig::default()
        };
        let r = run_bench(&gp, &train, &test, &[Mode::Exact, Mode::TopK(0), Mode::TopK(100)], &cfg);
        assert!(matches!(r.runs[1].outcome, ModeOutcome::Failed(_)));
        let csv = summary_csv(&r, false);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], SUMMARY_HEADER);
        assert_eq!(lines[2], "topk(k=0),FAILED,,,,");
        let acc = |i: usize| r.runs[i].trace().unwrap().final_accuracy().unwrap();
        assert_eq!(acc(0), acc(2));
    }
}
