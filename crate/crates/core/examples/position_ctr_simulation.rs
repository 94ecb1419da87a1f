//! Log production traffic, estimate the position CTR table, compare it with
//! the simulator's ground truth and simulate cold-start pages from the logs.
//!
//!     cargo run --release --example position_ctr_simulation

use modrl_ta::env::{Env, EnvConfig};
use modrl_ta::mdp::ActionIndex;
use modrl_ta::moq::ObjectiveSpec;
use modrl_ta::pda::{
    adjust_pctr, build_table, impressions, resolve_conflicts, simulate_page, simulate_transitions,
    AllocationItem, AllocationRequest, SimulationConfig, DEFAULT_ALPHA,
};
use modrl_ta::rng::SeededRng;

fn main() -> modrl_ta::Result<()> {
    let env = Env::new(EnvConfig::default())?;
    let sessions = 5_000;
    let log = env.production_log(0, sessions)?;
    let table = build_table(&impressions(&log.clicks), env.positions(), DEFAULT_ALPHA)?;

    let mut truth = vec![0.0; env.positions()];
    for k in 0..sessions as u64 {
        let (s, _) = env.reset(k)?;
        for (p, it) in s.items().iter().enumerate() {
            truth[p] += it.base_pctr * env.bias().get(p) / sessions as f64;
        }
    }
    println!("position  table    truth    impressions");
    for p in 0..env.positions() {
        println!(
            "{p:>8}  {:.4}   {:.4}   {}",
            table.ctr(p)?,
            truth[p],
            table.impressions(p)
        );
    }

    let moved = adjust_pctr(0.01, 5, 0, &table)?;
    println!("pCTR 0.01 logged at slot 5 becomes {moved:.4} at slot 0");

    // Two items asking for the same slot: the higher-ranked one keeps it.
    let items = (0..4)
        .map(|r| AllocationItem {
            item_id: 10 + r,
            original_rank: r,
            pctr: 0.1,
            requested: [None, Some(0), None, Some(0)][r],
        })
        .collect();
    println!(
        "placement {:?}",
        resolve_conflicts(&AllocationRequest::new(items, 4)?)?
    );

    let mut rng = SeededRng::new(3, 0);
    let page = simulate_page(
        &log.sessions[0],
        &table,
        ActionIndex::new(0, env.positions())?,
        &mut rng,
    )?;
    println!(
        "new item on top: slots {:?}, event {:?}",
        page.slots, page.event
    );

    let cfg = SimulationConfig {
        objectives: ObjectiveSpec::defaults(),
        horizon: env.config().horizon,
    };
    let sim = simulate_transitions(&log.sessions, &table, &cfg, &mut rng, 1_000)?;
    let clicked = sim
        .iter()
        .filter(|t| t.rewards[&cfg.objectives[0].id].value() > 0.0)
        .count();
    println!(
        "{} simulated transitions, click rate {:.3}",
        sim.len(),
        clicked as f64 / sim.len() as f64
    );
    Ok(())
}
