//! Compare analytic gradients of the summed TD loss with central finite
//! differences on a small shared-trunk ensemble.
//!
//!     cargo run --example gradient_check

use std::collections::BTreeMap;
use std::sync::Arc;

use modrl_ta::mdp::{
    ActionIndex, ObjectiveId, Reward, SliceLayout, Source, StateVector, Transition,
};
use modrl_ta::moq::{EnsembleShape, ObjectiveSpec, QEnsemble};
use modrl_ta::qnet::{Activation, OptimizerKind};
use modrl_ta::rng::SeededRng;

fn main() -> modrl_ta::Result<()> {
    let mut rng = SeededRng::new(3, 0);
    let shape = EnsembleShape {
        state_dim: 4,
        actions: 3,
        trunk: vec![6, 5],
        head: vec![4],
        activation: Activation::Tanh,
    };
    let ens = QEnsemble::new(
        ObjectiveSpec::defaults(),
        shape,
        100,
        OptimizerKind::Sgd,
        &mut rng,
    )?;

    let layout = Arc::new(SliceLayout::from_lengths([4, 0, 0, 0, 0, 0]));
    let mut state = || {
        StateVector::new(
            (0..4).map(|_| rng.uniform_in(-1.0, 1.0)).collect(),
            layout.clone(),
        )
    };
    let mut data = Vec::new();
    for i in 0..6 {
        let rewards: BTreeMap<ObjectiveId, Reward> = [
            (
                ObjectiveId::new("click"),
                if i % 2 == 0 {
                    Reward::Hit
                } else {
                    Reward::Miss
                },
            ),
            (
                ObjectiveId::new("order"),
                if i % 3 == 0 {
                    Reward::Hit
                } else {
                    Reward::Miss
                },
            ),
        ]
        .into();
        data.push(Transition {
            state: state()?,
            action: ActionIndex::new(i % 3, 3)?,
            rewards,
            next_state: state()?,
            terminal: i == 5,
            source: Source::Real,
        });
    }
    let batch: Vec<&Transition> = data.iter().collect();
    let targets = ens.td_targets(&batch, 0.9)?;
    let grads = ens.loss_and_grad(&batch, &targets)?;
    println!("per-head losses {:?}", grads.losses);

    let h = 1e-5;
    let mut worst = 0.0f64;
    for (i, g) in grads.trunk.params().enumerate() {
        let mut plus = ens.clone();
        *plus.trunk_mut().params_mut().nth(i).unwrap() += h;
        let mut minus = ens.clone();
        *minus.trunk_mut().params_mut().nth(i).unwrap() -= h;
        let fd =
            (plus.total_loss(&batch, &targets)? - minus.total_loss(&batch, &targets)?) / (2.0 * h);
        worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()).max(1e-4));
    }
    println!(
        "trunk: {} parameters, max relative error {worst:.2e}",
        grads.trunk.num_params()
    );

    for (o, hg) in grads.heads.iter().enumerate() {
        let mut worst = 0.0f64;
        for (i, g) in hg.params().enumerate() {
            let mut plus = ens.clone();
            *plus.head_mut(o).eval_mut().params_mut().nth(i).unwrap() += h;
            let mut minus = ens.clone();
            *minus.head_mut(o).eval_mut().params_mut().nth(i).unwrap() -= h;
            let fd = (plus.total_loss(&batch, &targets)? - minus.total_loss(&batch, &targets)?)
                / (2.0 * h);
            worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()).max(1e-4));
        }
        println!(
            "head {o}: {} parameters, max relative error {worst:.2e}",
            hg.num_params()
        );
    }
    Ok(())
}
