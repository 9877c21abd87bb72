use super::*;
use crate::data::prepare_all;
use crate::ground::ground;
use crate::lang::parse_program;
use crate::npp::FixedTable;
use crate::task::{gen_sum, split, sum_program, InputKind};

fn sum2_setup(count: usize, input: InputKind) -> (GroundProgram, Vec<PreparedQuery>, Vec<PreparedQuery>) {
    let gp = ground(&parse_program(&sum_program(2)).unwrap(), None).unwrap();
    let (train, test) = split(gen_sum(2, count, 11, input), 0.8, 11);
    (gp.clone(), prepare_all(&gp, &train).unwrap(), prepare_all(&gp, &test).unwrap())
}

#[test]
fn config_validation() {
    assert!(TrainConfig::default().validate().is_ok());
    let bad = [
        TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        },
        TrainConfig {
            mode: Mode::TopK(0),
            ..TrainConfig::default()
        },
        TrainConfig {
            mode: Mode::same(1.5),
            ..TrainConfig::default()
        },
        TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        },
    ];
    for c in bad {
        assert!(matches!(c.validate(), Err(TrainError::Config(_))), "{c:?}");
    }
}

#[test]
fn bound_probabilities_follow_the_models() {
    let (gp, train, _) = sum2_setup(10, InputKind::default());
    let mut models = NppModels::new();
    let p: Vec<f64> = (0..10).map(|j| if j == 4 { 0.55 } else { 0.05 }).collect();
    models.insert("digit".into(), NppModel::FixedTable(FixedTable { probs: p.clone() }));
    // a fixed table is not conditioned on data
    let mut q = train[0].clone();
    q.inputs = vec![None, None];
    let bound = bind_probs(&gp, &models, &q).unwrap();
    assert_eq!(bound.npps[0].probs, p);
    assert!(matches!(
        bind_probs(&gp, &NppModels::new(), &q),
        Err(TrainError::MissingModel(_))
    ));
}

#[test]
fn zero_step_leaves_parameters() {
    let (gp, train, _) = sum2_setup(20, InputKind::default());
    let mut models = init_models(&gp, &train, 3);
    let before = models.clone();
    let batch: Vec<&PreparedQuery> = train.iter().take(4).collect();
    let mut opt = Optimizer::new(OptimizerKind::Sgd);
    let up = entailment_update(&gp, &mut models, &batch, &TrainConfig::default(), &mut opt, 0.0).unwrap();
    assert_eq!(models, before);
    assert_eq!(up.steps.len(), 4);
    assert!(up.mean_grads["digit"].iter().any(|&g| g != 0.0));
}

#[test]
fn sum2_learns_digits() {
    let (gp, train, test) = sum2_setup(1000, InputKind::Features { noise: 0.2 });
    let mut models = init_models(&gp, &train, 0);
    let cfg = TrainConfig {
        epochs: 5,
        timing: false,
        ..TrainConfig::default()
    };
    let trace = coordinate_descent(&gp, &mut models, &train, Some(&test), &cfg).unwrap();
    let acc = trace.final_accuracy().unwrap();
    assert!(acc >= 0.95, "accuracy {acc}");
    assert!(trace.epochs.iter().all(|e| e.phase_b == PhaseB::Skipped));
    assert!(trace.epochs.last().unwrap().mean_gamma > trace.epochs[0].mean_gamma);
}

#[test]
fn same_mode_shrinks_solution_sets() {
    let (gp, train, test) = sum2_setup(500, InputKind::default());
    let mut models = init_models(&gp, &train, 0);
    let cfg = TrainConfig {
        epochs: 4,
        mode: Mode::same(0.99),
        timing: false,
        ..TrainConfig::default()
    };
    let trace = coordinate_descent(&gp, &mut models, &train, Some(&test), &cfg).unwrap();
    let first = trace.prune.epochs[0].mean();
    let last = trace.prune.epochs.last().unwrap().mean();
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn tabular_models_fit_the_data_phase() {
    let (gp, train, test) = sum2_setup(400, InputKind::Bins { flip: 0.0 });
    let mut models = init_models(&gp, &train, 0);
    assert!(models["digit"].is_joint());
    let cfg = TrainConfig {
        epochs: 3,
        entailment_scaling: EntailmentScaling::LogLikelihoodWeighted,
        timing: false,
        learning_rate: 0.1,
        ..TrainConfig::default()
    };
    let trace = coordinate_descent(&gp, &mut models, &train, Some(&test), &cfg).unwrap();
    assert!(trace.epochs.iter().all(|e| matches!(e.phase_b, PhaseB::Applied { .. })));
    let acc = trace.final_accuracy().unwrap();
    assert!(acc >= 0.9, "accuracy {acc}");
    let mut opt = Optimizer::new(OptimizerKind::Sgd);
    let ll: Vec<f64> = (0..20)
        .map(|_| npp_likelihood_update(&gp, &mut models, &train, &mut opt, 0.1).unwrap())
        .collect();
    assert!(ll.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{ll:?}");
}

#[test]
fn deterministic_across_thread_counts() {
    let (gp, train, test) = sum2_setup(120, InputKind::default());
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 8,
        timing: false,
        ..TrainConfig::default()
    };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut models = init_models(&gp, &train, 5);
            let trace = coordinate_descent(&gp, &mut models, &train, Some(&test), &cfg).unwrap();
            (write_metrics_csv(&trace, false), crate::npp::checkpoint_to_string(&models))
        })
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert!(one.0.starts_with(METRICS_HEADER));
    assert_eq!(one.0.lines().count(), 1 + 2 * 12);
}

#[test]
fn accuracy_breaks_ties_low() {
    assert_eq!(argmax(&[0.3, 0.3, 0.1]), 0);
    assert_eq!(argmax(&[0.1, 0.3, 0.3]), 1);
    let (gp, _, test) = sum2_setup(50, InputKind::default());
    let mut models = NppModels::new();
    models.insert("digit".into(), NppModel::SoftmaxLinear(SoftmaxLinear::zeros(10, 10)));
    let acc = eval_accuracy(&gp, &models, &test).unwrap();
    let zeros = test.iter().flat_map(|q| &q.labels).filter(|l| **l == Some(0)).count();
    assert_eq!(acc.correct, zeros);
    let mut unlabelled = test.clone();
    unlabelled.iter_mut().for_each(|q| q.labels = vec![None, None]);
    assert!(matches!(eval_accuracy(&gp, &models, &unlabelled), Err(TrainError::MissingLabels)));
}

#[test]
fn one_step_reinforces_the_forced_outcome() {
    let gp = ground(&parse_program("c. npp(h(c),[a,b]) :- c. ok :- h(c,a).").unwrap(), None).unwrap();
    let q = PreparedQuery {
        id: "q".into(),
        constraints: gp.ground_query(&crate::lang::parse_query(":- not ok.").unwrap()).unwrap(),
        inputs: vec![Some(NppInput::Features(vec![1.0]))],
        labels: vec![None],
    };
    let mut models = NppModels::new();
    let mut sl = SoftmaxLinear::zeros(2, 1);
    sl.params = vec![2.0, -2.0, 0.0, 0.0];
    models.insert("h".into(), NppModel::SoftmaxLinear(sl));
    let before = models["h"].params().to_vec();
    let mut opt = Optimizer::new(OptimizerKind::Sgd);
    entailment_update(&gp, &mut models, &[&q], &TrainConfig::default(), &mut opt, 0.1).unwrap();
    let after = models["h"].params();
    // logit of `a` is w_a * 1 + b_a
    assert!(after[0] + after[2] > before[0] + before[2]);
    assert!(after[1] + after[3] < before[1] + before[3]);
}

#[test]
fn contradictory_queries_stay_bounded() {
    let (gp, train, _) = sum2_setup(1, InputKind::default());
    let data = train[0].inputs.clone();
    let records: Vec<crate::data::QueryRecord> = (0..40)
        .map(|i| {
            let keys = ["i1", "i2"];
            crate::data::QueryRecord {
                id: format!("c{i}"),
                constraint: crate::task::sum_query(2, 10 + (i % 2) as i64),
                data: keys
                    .iter()
                    .zip(&data)
                    .map(|(k, d)| (k.to_string(), d.clone().unwrap()))
                    .collect(),
                labels: None,
            }
        })
        .collect();
    let queries = prepare_all(&gp, &records).unwrap();
    let mut models = init_models(&gp, &queries, 1);
    let cfg = TrainConfig {
        epochs: 6,
        batch_size: 4,
        timing: false,
        ..TrainConfig::default()
    };
    let trace = coordinate_descent(&gp, &mut models, &queries, None, &cfg).unwrap();
    assert!(trace.epochs.iter().all(|e| e.mean_gamma > 0.0 && e.mean_gamma < 1.0));
}

fn query_probability(gp: &GroundProgram, models: &NppModels, q: &PreparedQuery) -> f64 {
    let bound = bind_probs(gp, models, q).unwrap();
    let sols = crate::solver::enumerate_solutions(&bound, &q.constraints).unwrap();
    crate::wmc::query_prob(&sols).value
}

#[test]
fn small_steps_never_lower_the_query_probability() {
    let (gp, train, _) = sum2_setup(50, InputKind::default());
    for (i, q) in train.iter().take(50).enumerate() {
        let mut models = init_models(&gp, &train, 100 + i as u64);
        if let NppModel::SoftmaxLinear(sl) = models.get_mut("digit").unwrap() {
            // spread the initial weights so the instances are not all near uniform
            for (j, p) in sl.params.iter_mut().enumerate() {
                *p *= 50.0 * (1.0 + (j % 7) as f64);
            }
        }
        let before = query_probability(&gp, &models, q);
        let mut opt = Optimizer::new(OptimizerKind::Sgd);
        entailment_update(&gp, &mut models, &[q], &TrainConfig::default(), &mut opt, 1e-4).unwrap();
        let after = query_probability(&gp, &models, q);
        assert!(after >= before, "query {i}: {before} -> {after}");
    }
}

#[test]
fn chance_and_oracle_accuracy() {
    let (gp, train, test) = sum2_setup(1000, InputKind::Bins { flip: 0.0 });
    let all: Vec<PreparedQuery> = train.into_iter().chain(test).collect();
    let mut models = NppModels::new();
    models.insert("digit".into(), NppModel::TabularJoint(TabularJoint::uniform(10, 10)));
    let chance = eval_accuracy(&gp, &models, &all).unwrap().fraction();
    assert!((chance - 0.1).abs() <= 0.05, "{chance}");
    let diag: Vec<f64> = (0..100).map(|i| if i / 10 == i % 10 { 0.1 } else { 0.0 }).collect();
    models.insert("digit".into(), NppModel::TabularJoint(TabularJoint::from_joint(10, 10, &diag)));
    assert_eq!(eval_accuracy(&gp, &models, &all).unwrap().fraction(), 1.0);
}
