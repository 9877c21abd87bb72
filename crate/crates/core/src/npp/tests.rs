use super::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use NppQueryKind::*;

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

fn table_2x2() -> NppModel {
    NppModel::TabularJoint(TabularJoint::from_joint(2, 2, &[0.4, 0.1, 0.2, 0.3]))
}

#[test]
fn tabular_queries() {
    let t = table_2x2();
    assert!(close(&t.forward(Prior, Given::None).unwrap(), &[0.6, 0.4], 1e-12));
    let bin0 = NppInput::Bin(0);
    assert!(close(&t.forward(CondClassGivenData, Given::Data(&bin0)).unwrap(), &[0.8, 0.2], 1e-12));
    assert!(close(
        &t.forward(CondDataGivenClass, Given::Class(1)).unwrap(),
        &[0.25, 0.75],
        1e-12
    ));
    assert!(close(&t.forward(Joint, Given::None).unwrap(), &[0.4, 0.1, 0.2, 0.3], 1e-12));
}

#[test]
fn softmax_zero_weights_is_uniform() {
    let m = NppModel::SoftmaxLinear(SoftmaxLinear::zeros(4, 3));
    let x = NppInput::Features(vec![0.3, -1.0, 2.0]);
    assert!(close(&m.forward(CondClassGivenData, Given::Data(&x)).unwrap(), &[0.25; 4], 1e-15));
}

#[test]
fn unsupported_and_mismatched() {
    let m = NppModel::SoftmaxLinear(SoftmaxLinear::zeros(4, 3));
    assert!(matches!(
        m.forward(Prior, Given::None),
        Err(NppError::UnsupportedQueryKind { .. })
    ));
    let x = NppInput::Features(vec![1.0]);
    assert_eq!(
        m.forward(CondClassGivenData, Given::Data(&x)),
        Err(NppError::DimensionMismatch { expected: 3, got: 1 })
    );
    assert!(matches!(
        m.forward(CondClassGivenData, Given::None),
        Err(NppError::MissingData { .. })
    ));
    let t = table_2x2();
    assert!(matches!(
        t.forward(CondClassGivenData, Given::Data(&NppInput::Bin(5))),
        Err(NppError::DimensionMismatch { .. })
    ));
}

#[test]
fn softmax_two_equal_logits() {
    let m = NppModel::SoftmaxLinear(SoftmaxLinear::zeros(2, 1));
    let x = NppInput::Features(vec![0.0]);
    let g = m.backward(CondClassGivenData, Given::Data(&x), &[1.0, -1.0]).unwrap();
    // weights see x = 0; the bias entries carry the logit gradient
    assert!(close(&g, &[0.0, 0.0, 0.5, -0.5], 1e-15));
}

#[test]
fn zero_upstream_zero_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let m = NppModel::SoftmaxLinear(SoftmaxLinear::random(3, 2, &mut rng));
    let x = NppInput::Features(vec![0.5, -0.2]);
    assert!(m.backward(CondClassGivenData, Given::Data(&x), &[0.0; 3]).unwrap().iter().all(|&v| v == 0.0));
    let t = table_2x2();
    assert!(t.backward(Prior, Given::None, &[0.0; 2]).unwrap().iter().all(|&v| v == 0.0));
}

/// `<u, forward(θ)>` as a function of the parameters.
fn objective(model: &NppModel, kind: NppQueryKind, data: Given<'_>, u: &[f64]) -> f64 {
    model.forward(kind, data).unwrap().iter().zip(u).map(|(a, b)| a * b).sum()
}

fn finite_difference(model: &NppModel, kind: NppQueryKind, data: Given<'_>, u: &[f64]) -> Vec<f64> {
    let h = 1e-5;
    (0..model.params().len())
        .map(|i| {
            let mut plus = model.clone();
            plus.params_mut()[i] += h;
            let mut minus = model.clone();
            minus.params_mut()[i] -= h;
            (objective(&plus, kind, data, u) - objective(&minus, kind, data, u)) / (2.0 * h)
        })
        .collect()
}

fn assert_fd(model: &NppModel, kind: NppQueryKind, data: Given<'_>, u: &[f64]) {
    let analytic = model.backward(kind, data, u).unwrap();
    let fd = finite_difference(model, kind, data, u);
    for (a, f) in analytic.iter().zip(&fd) {
        let scale = a.abs().max(f.abs()).max(1.0);
        assert!((a - f).abs() <= 1e-6 * scale, "{kind:?}: analytic {a} vs fd {f}");
    }
}

#[test]
fn backward_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let normal = Normal::new(0.0, 1.0).unwrap();
    for _ in 0..100 {
        let n = rng.gen_range(2..6);
        let d = rng.gen_range(1..5);
        let mut sl = SoftmaxLinear::zeros(n, d);
        for p in &mut sl.params {
            *p = normal.sample(&mut rng);
        }
        let x = NppInput::Features((0..d).map(|_| normal.sample(&mut rng)).collect());
        let u: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        assert_fd(&NppModel::SoftmaxLinear(sl), CondClassGivenData, Given::Data(&x), &u);

        let m = rng.gen_range(1..5);
        let mut tj = TabularJoint::uniform(m, n);
        for l in &mut tj.logits {
            *l = normal.sample(&mut rng);
        }
        let model = NppModel::TabularJoint(tj);
        let un: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let um: Vec<f64> = (0..m).map(|_| normal.sample(&mut rng)).collect();
        let umn: Vec<f64> = (0..m * n).map(|_| normal.sample(&mut rng)).collect();
        let bin = NppInput::Bin(rng.gen_range(0..m));
        assert_fd(&model, CondClassGivenData, Given::Data(&bin), &un);
        assert_fd(&model, Prior, Given::None, &un);
        assert_fd(&model, CondDataGivenClass, Given::Class(rng.gen_range(0..n)), &um);
        assert_fd(&model, Joint, Given::None, &umn);
    }
}

#[test]
fn loss_grad_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let normal = Normal::new(0.0, 1.0).unwrap();
    for _ in 0..20 {
        let (m, n) = (rng.gen_range(1..5), rng.gen_range(1..4));
        let mut t = TabularJoint::uniform(m, n);
        for l in &mut t.logits {
            *l = normal.sample(&mut rng);
        }
        let bins: Vec<usize> = (0..rng.gen_range(0..6)).map(|_| rng.gen_range(0..m)).collect();
        let lg = npp_loss_grad(&t, &bins).unwrap();
        let h = 1e-5;
        for i in 0..t.logits.len() {
            let mut p = t.clone();
            p.logits[i] += h;
            let mut q = t.clone();
            q.logits[i] -= h;
            let fd = (npp_loss_grad(&p, &bins).unwrap().loss - npp_loss_grad(&q, &bins).unwrap().loss) / (2.0 * h);
            assert!((lg.grad[i] - fd).abs() <= 1e-6 * fd.abs().max(1.0));
        }
    }
}

#[test]
fn loss_examples() {
    let t = TabularJoint::uniform(2, 2);
    let lg = npp_loss_grad(&t, &[]).unwrap();
    assert_eq!(lg.loss, 0.0);
    assert!(lg.grad.iter().all(|&g| g == 0.0));
    let lg = npp_loss_grad(&t, &[1]).unwrap();
    assert!((lg.loss - 0.5f64.ln()).abs() < 1e-15);
}

#[test]
fn ascent_concentrates_on_observed_bin() {
    let mut t = TabularJoint::uniform(3, 2);
    for _ in 0..1000 {
        let lg = npp_loss_grad(&t, &[0, 0, 0, 0]).unwrap();
        for (l, g) in t.logits.iter_mut().zip(&lg.grad) {
            *l += 0.1 * g;
        }
    }
    assert!(t.data_marginal()[0] > 0.99, "{:?}", t.data_marginal());
}

#[test]
fn floor_is_flagged() {
    let mut t = TabularJoint::uniform(2, 1);
    t.logits = vec![0.0, -60.0];
    let lg = npp_loss_grad(&t, &[1]).unwrap();
    assert_eq!(lg.floored, 1);
    assert!((lg.loss - PROB_FLOOR.ln()).abs() < 1e-9);
}

#[test]
fn checkpoint_roundtrip() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut models = NppModels::new();
    models.insert("digit".into(), NppModel::SoftmaxLinear(SoftmaxLinear::random(10, 4, &mut rng)));
    models.insert("coin".into(), table_2x2());
    models.insert("die".into(), NppModel::FixedTable(FixedTable { probs: vec![0.5, 0.5] }));
    let text = checkpoint_to_string(&models);
    assert!(text.contains("\"magic\":\"SLASHNPP1\""));
    assert_eq!(checkpoint_from_str(&text).unwrap(), models);
    assert!(matches!(
        checkpoint_from_str(&text.replace("SLASHNPP1", "OTHER")),
        Err(CheckpointError::Magic(_))
    ));
    let truncated = text.replace("\"shape\":[10,4]", "\"shape\":[10,5]");
    assert!(matches!(checkpoint_from_str(&truncated), Err(CheckpointError::Shape { .. })));
}

#[test]
fn optimizer_steps() {
    let mut models = NppModels::new();
    models.insert("t".into(), NppModel::TabularJoint(TabularJoint::uniform(1, 2)));
    models.insert("f".into(), NppModel::FixedTable(FixedTable { probs: vec![1.0] }));
    let grads: BTreeMap<String, Vec<f64>> = [("t".to_string(), vec![1.0, -1.0]), ("f".to_string(), vec![])].into();
    let mut sgd = Optimizer::new(OptimizerKind::Sgd);
    sgd.ascend(&mut models, &grads, 0.5);
    assert_eq!(models["t"].params(), &[0.5, -0.5]);
    let before = models.clone();
    sgd.ascend(&mut models, &grads, 0.0);
    assert_eq!(models, before);
    let mut adam = Optimizer::new(OptimizerKind::adam());
    adam.ascend(&mut models, &grads, 0.1);
    // the first Adam step has magnitude ~lr in the gradient's sign
    let p = models["t"].params();
    assert!((p[0] - 0.6).abs() < 1e-6 && (p[1] + 0.6).abs() < 1e-6);
}
