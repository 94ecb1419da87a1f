//! Train the per-objective ensemble online against the simulator and watch
//! each head's loss and the greedy policy's returns.
//!
//!     cargo run --release --example ensemble_training

use modrl_ta::dfm::WeightVector;
use modrl_ta::env::{to_transition, Env, EnvConfig};
use modrl_ta::harness::evaluate_policy;
use modrl_ta::mdp::ReplayBuffer;
use modrl_ta::moq::{act_epsilon_greedy, EnsembleShape, EpsilonSchedule, ObjectiveSpec, QEnsemble};
use modrl_ta::qnet::OptimizerKind;
use modrl_ta::rng::{streams, SeededRng};

fn main() -> modrl_ta::Result<()> {
    let env = Env::new(EnvConfig::default())?;
    let objectives = ObjectiveSpec::defaults();
    let ids: Vec<_> = objectives.iter().map(|o| o.id.clone()).collect();
    let shape = EnsembleShape::new(env.config().state_dim(), env.positions());
    let mut init = SeededRng::new(1, streams::INIT);
    let mut ens = QEnsemble::new(
        objectives.clone(),
        shape,
        200,
        OptimizerKind::Adam,
        &mut init,
    )?;
    let mut buffer = ReplayBuffer::new(50_000, 256, ids.clone())?;
    let schedule = EpsilonSchedule {
        start: 1.0,
        end: 0.3,
        decay_steps: 4_000,
    };
    let mut rng = SeededRng::new(1, streams::EXPLORE);
    let equal = WeightVector::uniform(2)?;

    let report = |ens: &QEnsemble, step: usize| -> modrl_ta::Result<()> {
        let r = evaluate_policy(ens, &equal, &env, &objectives, 300, 10_000)?;
        println!(
            "step {step:>5}: greedy click return {:.3}, order return {:.3}",
            r.mean[0], r.mean[1]
        );
        Ok(())
    };
    report(&ens, 0)?;

    let mut session = None;
    let mut losses = vec![0.0; 2];
    for step in 1..=8_000 {
        let (mut s, obs) = match session.take() {
            Some(x) => x,
            None => env.reset(rng.next_seed())?,
        };
        // Behave greedily on alternating heads so both objectives get data.
        let head = &ids[step % 2];
        let a = act_epsilon_greedy(&ens, head, &obs, schedule.value(step), &mut rng)?;
        let out = env.step(&mut s, a, &mut rng)?;
        buffer.push(to_transition(&objectives, obs, a, &out))?;
        if !out.terminal {
            session = Some((s, out.next_state));
        }
        if buffer.is_ready() {
            let batch = buffer.sample(32, &mut rng)?;
            let rep = ens.train_step(&batch, 0.9, 1e-3)?;
            for (l, (_, v)) in losses.iter_mut().zip(&rep.losses) {
                *l = 0.99 * *l + 0.01 * v;
            }
        }
        if step % 2_000 == 0 {
            println!(
                "step {step:>5}: smoothed loss click {:.4}, order {:.4}",
                losses[0], losses[1]
            );
            report(&ens, step)?;
        }
    }
    Ok(())
}
