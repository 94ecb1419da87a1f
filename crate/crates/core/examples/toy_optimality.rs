//! Train a click head on a four-slot, two-step toy and compare its greedy
//! policy with the exhaustive optimum and with random play.
//!
//!     cargo run --release --example toy_optimality

use modrl_ta::env::{to_transition, Env, EnvConfig, SimItem};
use modrl_ta::mdp::{ActionIndex, ObjectiveId, ReplayBuffer, StateVector};
use modrl_ta::moq::{EnsembleShape, ObjectiveSpec, QEnsemble, QModel};
use modrl_ta::qnet::{argmax, Activation, OptimizerKind};
use modrl_ta::rng::SeededRng;

fn items(strong: bool) -> Vec<SimItem> {
    let mut v: Vec<SimItem> = [0.5, 0.45, 0.4]
        .iter()
        .enumerate()
        .map(|(r, &p)| SimItem {
            item_id: r,
            base_pctr: p,
            base_pcvr: 0.05,
            original_rank: r,
            is_new: false,
        })
        .collect();
    v.push(SimItem {
        item_id: 3,
        base_pctr: if strong { 0.9 } else { 0.05 },
        base_pcvr: 0.5,
        original_rank: 3,
        is_new: true,
    });
    v
}

fn main() -> modrl_ta::Result<()> {
    let mut cfg = EnvConfig::with_positions(4);
    cfg.horizon = 2;
    cfg.bias = Some(vec![1.0, 0.5, 0.25, 0.125]);
    cfg.prediction_noise = 0.0;
    cfg.new_prediction_noise = 0.0;
    let env = Env::new(cfg)?;
    let gamma = 0.9;
    let click = [ObjectiveSpec::click()];
    let shape = EnsembleShape {
        state_dim: env.config().state_dim(),
        actions: 4,
        trunk: vec![32],
        head: vec![32],
        activation: Activation::Relu,
    };
    let mut rng = SeededRng::new(0, 4);
    let mut ens = QEnsemble::new(click.to_vec(), shape, 100, OptimizerKind::Adam, &mut rng)?;
    let mut buffer = ReplayBuffer::new(20_000, 200, vec![ObjectiveId::new("click")])?;
    let steps = 30_000;
    let mut session = None;
    for t in 0..steps {
        let (mut s, obs) = match session.take() {
            Some(x) => x,
            None => env.session_from_items(items(rng.bernoulli(0.5)), rng.next_seed())?,
        };
        let a = ActionIndex::new(rng.index(4), 4)?;
        let out = env.step(&mut s, a, &mut rng)?;
        buffer.push(to_transition(&click, obs, a, &out))?;
        if !out.terminal {
            session = Some((s, out.next_state));
        }
        if buffer.is_ready() {
            let lr = 1e-3 * (1.0 - 0.9 * t as f64 / steps as f64);
            ens.train_step(&buffer.sample(64, &mut rng)?, gamma, lr)?;
        }
    }

    for strong in [true, false] {
        let (s, obs) = env.session_from_items(items(strong), 99)?;
        let optimal = env.optimal_policy_value(&s, &click[0], gamma)?;
        let random = env.random_policy_value(&s, &click[0], gamma)?;
        let learned = env.policy_value(&s, &click[0], gamma, &mut |o: &StateVector| {
            ActionIndex::new(argmax(&ens.q_rows(o)?[0]), 4)
        })?;
        let q = &ens.q_rows(&obs)?[0];
        println!(
            "{} new item: optimal {optimal:.4}, learned {learned:.4}, random {random:.4}, first action {}",
            if strong { "strong" } else { "weak" },
            argmax(q)
        );
    }
    Ok(())
}
