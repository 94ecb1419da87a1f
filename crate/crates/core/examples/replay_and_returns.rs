//! Collect environment steps into a replay buffer, sample a batch, compute
//! discounted returns and round-trip the transitions through the text log.
//!
//!     cargo run --example replay_and_returns

use modrl_ta::env::{to_transition, Env, EnvConfig};
use modrl_ta::mdp::translog::{read_log, write_log};
use modrl_ta::mdp::{discounted_return, ActionIndex, ReplayBuffer};
use modrl_ta::moq::ObjectiveSpec;
use modrl_ta::rng::SeededRng;

fn main() -> modrl_ta::Result<()> {
    let env = Env::new(EnvConfig::default())?;
    let objectives = ObjectiveSpec::defaults();
    let ids: Vec<_> = objectives.iter().map(|o| o.id.clone()).collect();
    let mut buffer = ReplayBuffer::new(1_000, 50, ids.clone())?;
    let mut rng = SeededRng::new(7, 0);

    let mut click_returns = Vec::new();
    for episode in 0..40 {
        let (mut session, mut obs) = env.reset(episode)?;
        let mut clicks = Vec::new();
        while !session.is_terminal() {
            let a = ActionIndex::new(rng.index(env.positions()), env.positions())?;
            let out = env.step(&mut session, a, &mut rng)?;
            let t = to_transition(&objectives, obs, a, &out);
            clicks.push(t.rewards[&ids[0]].value());
            obs = out.next_state.clone();
            buffer.push(t)?;
        }
        click_returns.push(discounted_return(&clicks, 0.9)?);
    }
    let mean = click_returns.iter().sum::<f64>() / click_returns.len() as f64;
    println!(
        "{} transitions buffered, ready: {}",
        buffer.len(),
        buffer.is_ready()
    );
    println!("mean discounted click return (gamma 0.9): {mean:.3}");

    let batch = buffer.sample(8, &mut rng)?;
    for t in &batch {
        let r: Vec<String> = t
            .rewards
            .iter()
            .map(|(k, v)| format!("{k}={}", v.value()))
            .collect();
        println!(
            "  action {} rewards [{}] terminal {}",
            t.action.position(),
            r.join(", "),
            t.terminal
        );
    }

    let mut text = Vec::new();
    write_log(&mut text, &ids, env.config().state_dim(), buffer.iter())?;
    let (header, back) = read_log(text.as_slice(), env.layout(), env.positions())?;
    let same = back.iter().zip(buffer.iter()).all(|(a, b)| a == b);
    println!(
        "log: {} bytes, {} objectives, dim {}, round trip exact: {same}",
        text.len(),
        header.objectives.len(),
        header.dim
    );
    Ok(())
}
