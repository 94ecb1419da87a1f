//! Cross-entropy search over fusion weights: first on a known quadratic,
//! then on the AUC of a fused gain built from two hand-made Q heads.
//!
//!     cargo run --example cem_weight_search

use std::sync::Arc;

use modrl_ta::dfm::{cal_auc, optimize, CemConfig, EvalExample, GainTable, WeightVector};
use modrl_ta::mdp::{ActionIndex, ObjectiveId, SliceLayout, StateVector};
use modrl_ta::moq::QModel;
use modrl_ta::rng::SeededRng;

/// Two linear heads over a 2-feature state: head i scores action a by
/// `state[i] * (a + 1)`.
struct LinearHeads;

impl QModel for LinearHeads {
    fn objective_ids(&self) -> Vec<ObjectiveId> {
        vec![ObjectiveId::new("click"), ObjectiveId::new("order")]
    }

    fn actions(&self) -> usize {
        2
    }

    fn q_rows(&self, s: &StateVector) -> modrl_ta::Result<Vec<Vec<f64>>> {
        let v = s.values();
        Ok((0..2)
            .map(|i| (0..2).map(|a| v[i] * (a + 1) as f64).collect())
            .collect())
    }
}

fn main() -> modrl_ta::Result<()> {
    let target = [0.3, 0.7];
    let cfg = CemConfig::new(2);
    let fitness = |w: &WeightVector| {
        Ok(-w
            .as_slice()
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>())
    };
    let out = optimize(fitness, &cfg, &mut SeededRng::new(0, 0))?;
    for g in out.history.iter().step_by(10) {
        println!(
            "generation {:>2}: mu [{:.4}, {:.4}] best-ever {:.2e}",
            g.generation, g.mu[0], g.mu[1], g.best_ever
        );
    }
    println!("final mu {:?}", out.distribution.mu());

    // Labels for "order" follow the second feature, so weight on that head
    // should win.
    let layout = Arc::new(SliceLayout::from_lengths([2, 0, 0, 0, 0, 0]));
    let mut rng = SeededRng::new(5, 0);
    let mut set = Vec::new();
    for _ in 0..400 {
        let (x, y) = (rng.uniform(), rng.uniform());
        set.push(EvalExample {
            state: StateVector::new(vec![x, y], layout.clone())?,
            action: ActionIndex::new(rng.index(2), 2)?,
            labels: [
                (ObjectiveId::new("click"), rng.bernoulli(x)),
                (ObjectiveId::new("order"), rng.bernoulli(y)),
            ]
            .into(),
        });
    }
    let table = GainTable::build(&LinearHeads, &set)?;
    let order = ObjectiveId::new("order");
    let mut cfg = CemConfig::new(2);
    cfg.generations = 15;
    let out = optimize(|w| table.auc(&order, w), &cfg, &mut SeededRng::new(1, 0))?;
    println!(
        "AUC search: best weights {:?}, order AUC {:.4}",
        out.best.weights.as_slice(),
        out.best.score
    );
    let labels: Vec<bool> = set.iter().map(|e| e.labels[&order]).collect();
    let click_only = table.scores(&WeightVector::new(vec![1.0, 0.0])?)?;
    println!(
        "click-head-only order AUC {:.4}",
        cal_auc(&labels, &click_only)?
    );
    Ok(())
}
