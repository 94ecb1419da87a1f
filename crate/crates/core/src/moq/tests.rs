use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::mdp::{SliceLayout, Source};

fn layout(dim: usize) -> Arc<SliceLayout> {
    Arc::new(SliceLayout::from_lengths([dim, 0, 0, 0, 0, 0]))
}

fn state(values: &[f64]) -> StateVector {
    StateVector::new(values.to_vec(), layout(values.len())).unwrap()
}

fn transition(
    s: &[f64],
    a: usize,
    actions: usize,
    click: f64,
    order: f64,
    next: &[f64],
    terminal: bool,
) -> Transition {
    let rewards = [("click", click), ("order", order)]
        .into_iter()
        .map(|(k, v)| (ObjectiveId::new(k), Reward::from_value(v).unwrap()))
        .collect();
    Transition {
        state: state(s),
        action: ActionIndex::new(a, actions).unwrap(),
        rewards,
        next_state: state(next),
        terminal,
        source: Source::Real,
    }
}

fn small_shape() -> EnsembleShape {
    EnsembleShape {
        state_dim: 3,
        actions: 4,
        trunk: vec![5],
        head: vec![4],
        activation: Activation::Tanh,
    }
}

fn ensemble(seed: u64) -> QEnsemble {
    let mut rng = SeededRng::new(seed, 0);
    QEnsemble::new(
        ObjectiveSpec::defaults(),
        small_shape(),
        200,
        OptimizerKind::Sgd,
        &mut rng,
    )
    .unwrap()
}

fn batch() -> Vec<Transition> {
    vec![
        transition(&[0.1, -0.4, 0.9], 0, 4, 1.0, -1.0, &[0.2, 0.0, 0.3], false),
        transition(&[0.7, 0.2, -0.5], 2, 4, -1.0, -1.0, &[0.5, 0.1, 0.1], false),
        transition(&[-0.3, 0.8, 0.4], 3, 4, 1.0, 1.0, &[0.0, 0.0, 0.0], true),
        transition(&[0.9, 0.9, 0.1], 1, 4, -1.0, -1.0, &[0.6, -0.2, 0.8], false),
    ]
}

#[test]
fn reward_table() {
    let view = FeedbackEvent::page_view_only();
    let click = FeedbackEvent::new(true, false).unwrap();
    let order = FeedbackEvent::new(true, true).unwrap();
    assert_eq!(reward(&ObjectiveSpec::click(), click).value(), 1.0);
    assert_eq!(reward(&ObjectiveSpec::click(), view).value(), -1.0);
    assert_eq!(reward(&ObjectiveSpec::order(), click).value(), -1.0);
    assert_eq!(reward(&ObjectiveSpec::order(), order).value(), 1.0);
    assert_eq!(reward(&ObjectiveSpec::click(), order).value(), 1.0);
    assert!(FeedbackEvent::new(false, true).is_err());
}

#[test]
fn reward_is_total_over_events() {
    for spec in ObjectiveSpec::defaults() {
        for ev in FeedbackEvent::all() {
            let r = reward(&spec, ev).value();
            assert!(r == 1.0 || r == -1.0);
        }
    }
}

#[test]
fn duplicate_objectives_rejected() {
    let mut rng = SeededRng::new(0, 0);
    let objs = vec![
        ObjectiveSpec::click(),
        ObjectiveSpec::new("click", RewardEvent::Order),
    ];
    assert!(QEnsemble::new(objs, small_shape(), 200, OptimizerKind::Sgd, &mut rng).is_err());
    let mut ens = ensemble(0);
    assert!(ens.add_objective(ObjectiveSpec::order(), &mut rng).is_err());
}

#[test]
fn zero_ensemble_outputs_zero() {
    let ens = QEnsemble::zeros(
        ObjectiveSpec::defaults(),
        small_shape(),
        200,
        OptimizerKind::Sgd,
    )
    .unwrap();
    for row in ens.q_values(&state(&[1.0, -2.0, 3.0])).unwrap() {
        assert_eq!(row, vec![0.0; 4]);
    }
}

#[test]
fn q_values_compose_trunk_and_heads() {
    let ens = ensemble(3);
    let s = state(&[0.3, -0.1, 0.5]);
    let q = ens.q_values(&s).unwrap();
    let features = crate::qnet::naive_forward(ens.trunk(), s.values());
    for (row, head) in q.iter().zip(ens.heads()) {
        let expect = crate::qnet::naive_forward(head.eval(), &features);
        for (a, b) in row.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    assert!(ens.q_values(&state(&[0.0, 0.0])).is_err());
}

#[test]
fn q_values_scalar_oracle_on_toy() {
    // Identity activations: trunk W1 (2x3), head W2 (4x2), no bias.
    let w1 = [[0.5, -1.0, 2.0], [1.5, 0.25, -0.5]];
    let w2 = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [-2.0, 0.5]];
    let shape = EnsembleShape {
        state_dim: 3,
        actions: 4,
        trunk: vec![2],
        head: vec![],
        activation: Activation::Identity,
    };
    let mut ens =
        QEnsemble::zeros(vec![ObjectiveSpec::click()], shape, 200, OptimizerKind::Sgd).unwrap();
    ens.trunk_mut().layers_mut()[0].weights = w1.concat();
    ens.head_mut(0).eval_mut().layers_mut()[0].weights = w2.concat();
    let x = [1.0, 2.0, 3.0];
    let h = [0.5 - 2.0 + 6.0, 1.5 + 0.5 - 1.5];
    let expect: Vec<f64> = w2.iter().map(|r| r[0] * h[0] + r[1] * h[1]).collect();
    assert_eq!(ens.q_values(&state(&x)).unwrap()[0], expect);
}

#[test]
fn trunk_gradient_matches_finite_differences() {
    let ens = ensemble(11);
    let data = batch();
    let refs: Vec<&Transition> = data.iter().collect();
    let targets = ens.td_targets(&refs, 0.9).unwrap();
    let grads = ens.loss_and_grad(&refs, &targets).unwrap();
    let h = 1e-6;
    let n = ens.trunk().num_params();
    for k in 0..n {
        let mut plus = ens.clone();
        *plus.trunk_mut().params_mut().nth(k).unwrap() += h;
        let mut minus = ens.clone();
        *minus.trunk_mut().params_mut().nth(k).unwrap() -= h;
        let fd = (plus.total_loss(&refs, &targets).unwrap()
            - minus.total_loss(&refs, &targets).unwrap())
            / (2.0 * h);
        let g = grads.trunk.params().nth(k).unwrap();
        let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-8);
        assert!(
            rel < 1e-4 || (g - fd).abs() < 1e-9,
            "param {k}: analytic {g} vs fd {fd}"
        );
    }
    for (i, hg) in grads.heads.iter().enumerate() {
        for k in 0..hg.num_params() {
            let mut plus = ens.clone();
            *plus.head_mut(i).eval_mut().params_mut().nth(k).unwrap() += h;
            let mut minus = ens.clone();
            *minus.head_mut(i).eval_mut().params_mut().nth(k).unwrap() -= h;
            let fd = (plus.total_loss(&refs, &targets).unwrap()
                - minus.total_loss(&refs, &targets).unwrap())
                / (2.0 * h);
            let g = hg.params().nth(k).unwrap();
            assert!(
                (g - fd).abs() < 1e-7 + 1e-4 * g.abs(),
                "head {i} param {k}: {g} vs {fd}"
            );
        }
    }
}

#[test]
fn total_is_sum_of_head_losses() {
    let mut ens = ensemble(2);
    let data = batch();
    let refs: Vec<&Transition> = data.iter().collect();
    let targets = ens.td_targets(&refs, 0.9).unwrap();
    let expected = ens.total_loss(&refs, &targets).unwrap();
    let report = ens.train_step(&refs, 0.9, 0.01).unwrap();
    let sum: f64 = report.losses.iter().map(|(_, l)| l).sum();
    assert_eq!(report.total, sum);
    assert!((report.total - expected).abs() < 1e-12);
}

#[test]
fn single_objective_total_equals_head_loss() {
    let mut rng = SeededRng::new(4, 0);
    let mut ens = QEnsemble::new(
        vec![ObjectiveSpec::click()],
        small_shape(),
        200,
        OptimizerKind::Sgd,
        &mut rng,
    )
    .unwrap();
    let data = batch();
    let refs: Vec<&Transition> = data.iter().collect();
    let r = ens.train_step(&refs, 0.9, 0.01).unwrap();
    assert_eq!(r.losses.len(), 1);
    assert_eq!(r.total, r.losses[0].1);
}

#[test]
fn identical_heads_identical_losses() {
    let mut ens = ensemble(6);
    let copy = ens.heads()[0].clone();
    *ens.head_mut(1) = copy;
    let data: Vec<Transition> = batch()
        .into_iter()
        .map(|mut t| {
            let c = t.rewards[&ObjectiveId::new("click")];
            t.rewards.insert(ObjectiveId::new("order"), c);
            t
        })
        .collect();
    let refs: Vec<&Transition> = data.iter().collect();
    let r = ens.train_step(&refs, 0.9, 0.01).unwrap();
    assert_eq!(r.losses[0].1, r.losses[1].1);
}

#[test]
fn head_perturbation_is_local() {
    let ens = ensemble(8);
    let s = state(&[0.4, 0.1, -0.7]);
    let before = ens.q_values(&s).unwrap();
    let mut other = ens.clone();
    other
        .head_mut(0)
        .eval_mut()
        .params_mut()
        .for_each(|p| *p += 0.1);
    let after = other.q_values(&s).unwrap();
    assert_ne!(before[0], after[0]);
    assert_eq!(before[1], after[1]);
}

#[test]
fn trunk_perturbation_moves_every_head() {
    let ens = ensemble(8);
    let s = state(&[0.4, 0.1, -0.7]);
    let before = ens.q_values(&s).unwrap();
    let mut other = ens.clone();
    other.trunk_mut().params_mut().for_each(|p| *p += 0.1);
    let after = other.q_values(&s).unwrap();
    for i in 0..2 {
        assert_ne!(before[i], after[i]);
    }
}

#[test]
fn new_head_with_frozen_trunk_leaves_old_heads_bitwise() {
    let mut ens = ensemble(9);
    let mut rng = SeededRng::new(9, 1);
    let probe = state(&[0.2, 0.5, -0.1]);
    let before = ens.q_values(&probe).unwrap();
    ens.add_objective(ObjectiveSpec::new("dwell", RewardEvent::Click), &mut rng)
        .unwrap();
    let data: Vec<Transition> = batch()
        .into_iter()
        .map(|mut t| {
            t.rewards.insert(ObjectiveId::new("dwell"), Reward::Hit);
            t
        })
        .collect();
    let refs: Vec<&Transition> = data.iter().collect();
    let mask = TrainMask {
        freeze_trunk: true,
        heads: Some(vec![ObjectiveId::new("dwell")]),
    };
    for _ in 0..250 {
        ens.train_step_masked(&refs, 0.9, 0.05, &mask).unwrap();
    }
    let after = ens.q_values(&probe).unwrap();
    assert_eq!(after[0], before[0]);
    assert_eq!(after[1], before[1]);
}

#[test]
fn joint_step_changes_trunk() {
    let mut ens = ensemble(10);
    let trunk = ens.trunk().clone();
    let data = batch();
    let refs: Vec<&Transition> = data.iter().collect();
    ens.train_step(&refs, 0.9, 0.05).unwrap();
    assert_ne!(ens.trunk(), &trunk);
}

#[test]
fn targets_sync_together_every_period() {
    let mut rng = SeededRng::new(1, 0);
    let mut ens = QEnsemble::new(
        ObjectiveSpec::defaults(),
        small_shape(),
        5,
        OptimizerKind::Sgd,
        &mut rng,
    )
    .unwrap();
    let data = batch();
    let refs: Vec<&Transition> = data.iter().collect();
    for step in 1..=5 {
        let r = ens.train_step(&refs, 0.9, 0.05).unwrap();
        assert_eq!(r.synced, step == 5);
        if step < 5 {
            assert_ne!(ens.trunk(), ens.trunk_target());
        }
    }
    assert_eq!(ens.trunk(), ens.trunk_target());
    for h in ens.heads() {
        assert_eq!(h.eval(), h.target());
    }
}

#[test]
fn missing_objective_in_batch_is_error() {
    let mut ens = ensemble(1);
    let mut t = batch().remove(0);
    t.rewards.remove(&ObjectiveId::new("order"));
    assert!(matches!(
        ens.train_step(&[&t], 0.9, 0.1),
        Err(Error::ObjectiveMismatch { .. })
    ));
}

#[test]
fn non_finite_loss_names_objective() {
    let mut ens = ensemble(1);
    ens.head_mut(1)
        .eval_mut()
        .params_mut()
        .for_each(|p| *p = f64::NAN);
    let data = batch();
    let refs: Vec<&Transition> = data.iter().collect();
    let targets = vec![vec![0.0; 4]; 2];
    match ens.loss_and_grad(&refs, &targets) {
        Err(Error::NonFiniteLoss { objective, index }) => {
            assert_eq!(objective, "order");
            assert_eq!(index, 0);
        }
        other => panic!("unexpected {other:?}"),
    }
}

fn fixed_row_ensemble(row: [f64; 3]) -> QEnsemble {
    let shape = EnsembleShape {
        state_dim: 1,
        actions: 3,
        trunk: vec![1],
        head: vec![],
        activation: Activation::Identity,
    };
    let mut ens =
        QEnsemble::zeros(vec![ObjectiveSpec::click()], shape, 200, OptimizerKind::Sgd).unwrap();
    ens.head_mut(0).eval_mut().layers_mut()[0].bias = row.to_vec();
    ens
}

#[test]
fn greedy_actions() {
    let s = state(&[0.0]);
    let mut rng = SeededRng::new(0, 0);
    let id = ObjectiveId::new("click");
    let a =
        act_epsilon_greedy(&fixed_row_ensemble([0.0, 3.0, 1.0]), &id, &s, 0.0, &mut rng).unwrap();
    assert_eq!(a.position(), 1);
    let a =
        act_epsilon_greedy(&fixed_row_ensemble([5.0, 5.0, 0.0]), &id, &s, 0.0, &mut rng).unwrap();
    assert_eq!(a.position(), 0);
    assert!(act_epsilon_greedy(&fixed_row_ensemble([0.0; 3]), &id, &s, 1.5, &mut rng).is_err());
    assert!(act_epsilon_greedy(
        &fixed_row_ensemble([0.0; 3]),
        &ObjectiveId::new("x"),
        &s,
        0.0,
        &mut rng
    )
    .is_err());
}

#[test]
fn full_exploration_is_uniform() {
    let ens = fixed_row_ensemble([0.0, 9.0, 1.0]);
    let s = state(&[0.0]);
    let id = ObjectiveId::new("click");
    let mut rng = SeededRng::new(77, 3);
    let n = 100_000;
    let mut counts = [0usize; 3];
    for _ in 0..n {
        counts[act_epsilon_greedy(&ens, &id, &s, 1.0, &mut rng)
            .unwrap()
            .position()] += 1;
    }
    let expect = n as f64 / 3.0;
    for c in counts {
        assert!((c as f64 - expect).abs() / expect < 0.02, "{counts:?}");
    }
}

#[test]
fn epsilon_schedule_decays_linearly() {
    let s = EpsilonSchedule {
        start: 1.0,
        end: 0.05,
        decay_steps: 100,
    };
    assert_eq!(s.value(0), 1.0);
    assert!((s.value(50) - 0.525).abs() < 1e-12);
    assert_eq!(s.value(100), 0.05);
    assert_eq!(s.value(10_000), 0.05);
}

fn weights(click: f64, order: f64) -> BTreeMap<ObjectiveId, f64> {
    [
        (ObjectiveId::new("click"), click),
        (ObjectiveId::new("order"), order),
    ]
    .into()
}

#[test]
fn fused_rewards() {
    let data = batch();
    let refs: Vec<&Transition> = data.iter().collect();
    let proj = fused_reward_baseline(&refs, &weights(1.0, 0.0)).unwrap();
    for (f, t) in proj.iter().zip(&data) {
        assert_eq!(f.reward, t.rewards[&ObjectiveId::new("click")].value());
    }
    let half = fused_reward_baseline(&refs, &weights(0.5, 0.5)).unwrap();
    assert_eq!(half[0].reward, 0.0);
    let zero = fused_reward_baseline(&refs, &weights(0.0, 0.0)).unwrap();
    assert!(zero.iter().all(|f| f.reward == 0.0));
    assert!(fused_reward_baseline(&refs, &BTreeMap::new()).is_err());
    assert!(fused_reward_baseline(&refs, &weights(-0.1, 1.0)).is_err());
    let s = half[1].sample();
    assert_eq!(s.action, 2);
    assert_eq!(s.reward, -1.0);
}

#[test]
fn checkpoint_round_trip() {
    let mut ens = ensemble(12);
    let data = batch();
    let refs: Vec<&Transition> = data.iter().collect();
    for _ in 0..3 {
        ens.train_step(&refs, 0.9, 0.05).unwrap();
    }
    let mut buf = Vec::new();
    save_ensemble(&mut buf, &ens).unwrap();
    let back = load_ensemble(buf.as_slice(), &small_shape()).unwrap();
    assert_eq!(back.objectives(), ens.objectives());
    assert_eq!(back.trunk(), ens.trunk());
    assert_eq!(back.trunk_target(), ens.trunk_target());
    assert_eq!(back.steps_since_sync(), 3);
    for (a, b) in back.heads().iter().zip(ens.heads()) {
        assert_eq!(a.eval(), b.eval());
        assert_eq!(a.target(), b.target());
    }
    let mut other = small_shape();
    other.actions = 5;
    assert!(load_ensemble(buf.as_slice(), &other).is_err());
}

proptest! {
    #[test]
    fn masked_heads_never_move(seed in 0u64..500, lr in 0.001f64..0.5) {
        let mut ens = ensemble(seed);
        let data = batch();
        let refs: Vec<&Transition> = data.iter().collect();
        let click = ens.heads()[0].eval().clone();
        let mask = TrainMask { freeze_trunk: false, heads: Some(vec![ObjectiveId::new("order")]) };
        ens.train_step_masked(&refs, 0.9, lr, &mask).unwrap();
        prop_assert_eq!(ens.heads()[0].eval(), &click);
    }
}
