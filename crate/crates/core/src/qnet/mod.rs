//! Q-function approximator: an MLP with analytic gradients, a frozen target
//! copy refreshed every `sync_period` steps, and the squared TD loss.

mod checkpoint;
mod mlp;
mod optim;

pub use checkpoint::{load_mlp, load_qnetwork, save_mlp, save_qnetwork};
pub use mlp::{Activation, Dense, ForwardCache, Mlp};
pub use optim::{Adam, Optimizer, OptimizerKind};

#[cfg(test)]
pub(crate) use mlp::naive_forward;

use crate::error::{Error, Result};
use crate::mdp::{Sample, StateVector};

/// Target refresh period.
pub const DEFAULT_SYNC_PERIOD: usize = 200;

pub fn forward(params: &Mlp, s: &StateVector) -> Result<Vec<f64>> {
    params.forward(s.values())
}

/// Index of the maximum; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!(
            "discount {gamma} outside [0, 1]"
        )));
    }
    Ok(())
}

/// `y = r` for terminal samples, `r + γ·max_a' Q_target(s', a')` otherwise.
pub fn td_target(batch: &[Sample<'_>], target: &Mlp, gamma: f64) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    batch
        .iter()
        .map(|s| {
            if s.terminal {
                return Ok(s.reward);
            }
            let q = target.forward(s.next_state)?;
            Ok(s.reward + gamma * q[argmax(&q)])
        })
        .collect()
}

/// Mean squared TD error over the batch and its gradient w.r.t. `eval`,
/// taken on the actions actually played. Targets are constants.
pub fn loss_and_grad(eval: &Mlp, batch: &[Sample<'_>], targets: &[f64]) -> Result<(f64, Mlp)> {
    if batch.len() != targets.len() {
        return Err(Error::Dimension {
            what: "TD targets",
            expected: batch.len(),
            got: targets.len(),
        });
    }
    let mut grads = eval.zeros_like();
    if batch.is_empty() {
        return Ok((0.0, grads));
    }
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut d_out = vec![0.0; eval.output_dim()];
    for (i, (s, &y)) in batch.iter().zip(targets).enumerate() {
        let cache = eval.forward_cached(s.state)?;
        let q = cache.output()[s.action];
        let err = q - y;
        if !err.is_finite() {
            return Err(Error::NonFiniteLoss {
                objective: String::new(),
                index: i,
            });
        }
        loss += err * err / n;
        d_out.fill(0.0);
        d_out[s.action] = 2.0 * err / n;
        eval.backward(&cache, &d_out, &mut grads);
    }
    Ok((loss, grads))
}

/// Evaluation network θ plus frozen target θ_T.
#[derive(Debug, Clone)]
pub struct QNetwork {
    eval: Mlp,
    target: Mlp,
    steps_since_sync: usize,
    sync_period: usize,
}

impl QNetwork {
    pub fn new(eval: Mlp, sync_period: usize) -> Result<Self> {
        if sync_period == 0 {
            return Err(Error::InvalidArgument(
                "sync period must be positive".into(),
            ));
        }
        Ok(Self {
            target: eval.clone(),
            eval,
            steps_since_sync: 0,
            sync_period,
        })
    }

    pub(crate) fn from_parts(
        eval: Mlp,
        target: Mlp,
        steps_since_sync: usize,
        sync_period: usize,
    ) -> Result<Self> {
        if !eval.same_shape(&target) {
            return Err(Error::Checkpoint(
                "evaluation and target shapes differ".into(),
            ));
        }
        if sync_period == 0 || steps_since_sync >= sync_period {
            return Err(Error::Checkpoint("bad sync counter".into()));
        }
        Ok(Self {
            eval,
            target,
            steps_since_sync,
            sync_period,
        })
    }

    pub fn eval(&self) -> &Mlp {
        &self.eval
    }

    pub fn eval_mut(&mut self) -> &mut Mlp {
        &mut self.eval
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    pub fn sync_period(&self) -> usize {
        self.sync_period
    }

    pub fn steps_since_sync(&self) -> usize {
        self.steps_since_sync
    }

    pub fn q_values(&self, s: &StateVector) -> Result<Vec<f64>> {
        forward(&self.eval, s)
    }

    pub fn td_target(&self, batch: &[Sample<'_>], gamma: f64) -> Result<Vec<f64>> {
        td_target(batch, &self.target, gamma)
    }

    pub fn loss_and_grad(&self, batch: &[Sample<'_>], targets: &[f64]) -> Result<(f64, Mlp)> {
        loss_and_grad(&self.eval, batch, targets)
    }

    /// Plain SGD step on the evaluation parameters.
    pub fn apply_update(&mut self, grads: &Mlp, lr: f64) {
        self.eval.add_scaled(grads, -lr);
    }

    pub fn apply_update_with(&mut self, opt: &mut Optimizer, grads: &Mlp, lr: f64) {
        opt.step(&mut self.eval, grads, lr);
    }

    /// Advances the step counter; copies θ → θ_T when it reaches the period.
    pub fn maybe_sync_target(&mut self) -> bool {
        self.steps_since_sync += 1;
        if self.steps_since_sync >= self.sync_period {
            self.sync_target();
            true
        } else {
            false
        }
    }

    pub fn sync_target(&mut self) {
        self.target.copy_from(&self.eval);
        self.steps_since_sync = 0;
    }

    /// One TD update: targets, loss, gradient step, sync bookkeeping.
    pub fn train_on(
        &mut self,
        batch: &[Sample<'_>],
        gamma: f64,
        lr: f64,
        opt: &mut Optimizer,
    ) -> Result<f64> {
        let targets = self.td_target(batch, gamma)?;
        let (loss, grads) = self.loss_and_grad(batch, &targets)?;
        self.apply_update_with(opt, &grads, lr);
        self.maybe_sync_target();
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    struct Owned {
        s: Vec<f64>,
        a: usize,
        r: f64,
        n: Vec<f64>,
        terminal: bool,
    }

    impl Owned {
        fn sample(&self) -> Sample<'_> {
            Sample {
                state: &self.s,
                action: self.a,
                reward: self.r,
                next_state: &self.n,
                terminal: self.terminal,
            }
        }
    }

    fn random_batch(rng: &mut SeededRng, dim: usize, actions: usize, n: usize) -> Vec<Owned> {
        (0..n)
            .map(|_| Owned {
                s: (0..dim).map(|_| rng.uniform_in(-1.0, 1.0)).collect(),
                a: rng.index(actions),
                r: if rng.bernoulli(0.5) { 1.0 } else { -1.0 },
                n: (0..dim).map(|_| rng.uniform_in(-1.0, 1.0)).collect(),
                terminal: rng.bernoulli(0.2),
            })
            .collect()
    }

    #[test]
    fn terminal_target_is_reward() {
        let mut rng = SeededRng::new(0, 0);
        let net = Mlp::new(&[3, 4, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let o = Owned {
            s: vec![0.0; 3],
            a: 0,
            r: 1.0,
            n: vec![1.0; 3],
            terminal: true,
        };
        assert_eq!(td_target(&[o.sample()], &net, 0.99).unwrap(), vec![1.0]);
    }

    #[test]
    fn zero_discount_target_is_reward() {
        let mut rng = SeededRng::new(1, 0);
        let net = Mlp::new(&[3, 4, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let batch = random_batch(&mut rng, 3, 2, 10);
        let samples: Vec<Sample> = batch.iter().map(Owned::sample).collect();
        let y = td_target(&samples, &net, 0.0).unwrap();
        for (s, y) in samples.iter().zip(y) {
            assert_eq!(y, s.reward);
        }
    }

    #[test]
    fn target_uses_exhaustive_max() {
        // Linear 3-action target, Q(s') = W s' with hand-set W.
        let mut l = Dense::zeros(2, 3, Activation::Identity);
        l.weights = vec![1.0, 0.0, 0.0, 1.0, -1.0, -1.0];
        let target = Mlp::from_layers(vec![l]).unwrap();
        let o = Owned {
            s: vec![0.0, 0.0],
            a: 0,
            r: -1.0,
            n: vec![0.2, 0.5],
            terminal: false,
        };
        // Q(s') = [0.2, 0.5, -0.7] → max 0.5.
        let y = td_target(&[o.sample()], &target, 0.5).unwrap()[0];
        let q = [0.2, 0.5, -0.7];
        let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(y, -1.0 + 0.5 * max);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.0, 3.0, 1.0]), 1);
        assert_eq!(argmax(&[5.0, 5.0, 0.0]), 0);
    }

    #[test]
    fn loss_zero_at_exact_targets() {
        let mut rng = SeededRng::new(2, 0);
        let net = Mlp::new(&[3, 5, 4], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        let batch = random_batch(&mut rng, 3, 4, 6);
        let samples: Vec<Sample> = batch.iter().map(Owned::sample).collect();
        let targets: Vec<f64> = samples
            .iter()
            .map(|s| net.forward(s.state).unwrap()[s.action])
            .collect();
        let (loss, grads) = loss_and_grad(&net, &samples, &targets).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.params().all(|g| g == 0.0));
    }

    #[test]
    fn single_linear_layer_closed_form_gradient() {
        // Q_a(s) = w_a·s + b_a, L = (Q_a − y)² → ∂L/∂w_a = 2(Q_a − y)s, ∂L/∂b_a = 2(Q_a − y).
        let mut l = Dense::zeros(2, 2, Activation::Identity);
        l.weights = vec![0.5, -1.0, 2.0, 0.25];
        l.bias = vec![0.1, -0.3];
        let net = Mlp::from_layers(vec![l]).unwrap();
        let o = Owned {
            s: vec![2.0, -1.0],
            a: 1,
            r: 0.0,
            n: vec![0.0, 0.0],
            terminal: true,
        };
        let q = 2.0 * 2.0 + 0.25 * -1.0 - 0.3;
        let y = 1.0;
        let (loss, g) = loss_and_grad(&net, &[o.sample()], &[y]).unwrap();
        assert!((loss - (q - y) * (q - y)).abs() < 1e-15);
        let d = 2.0 * (q - y);
        let gl = &g.layers()[0];
        assert_eq!(gl.weights, vec![0.0, 0.0, d * 2.0, d * -1.0]);
        assert_eq!(gl.bias, vec![0.0, d]);
    }

    #[test]
    fn non_finite_loss_reports_index() {
        let mut rng = SeededRng::new(2, 0);
        let net = Mlp::new(&[2, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let a = Owned {
            s: vec![0.0; 2],
            a: 0,
            r: 0.0,
            n: vec![0.0; 2],
            terminal: true,
        };
        let b = Owned {
            s: vec![0.0; 2],
            a: 1,
            r: 0.0,
            n: vec![0.0; 2],
            terminal: true,
        };
        let err = loss_and_grad(&net, &[a.sample(), b.sample()], &[0.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { index: 1, .. }));
    }

    #[test]
    fn zero_grads_or_zero_lr_leave_params() {
        let mut rng = SeededRng::new(4, 0);
        let mut q = QNetwork::new(
            Mlp::new(&[3, 4, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap(),
            10,
        )
        .unwrap();
        let before = q.eval().clone();
        let zeros = before.zeros_like();
        q.apply_update(&zeros, 0.1);
        assert_eq!(q.eval(), &before);
        let mut ones = before.zeros_like();
        ones.params_mut().for_each(|p| *p = 1.0);
        q.apply_update(&ones, 0.0);
        assert_eq!(q.eval(), &before);
    }

    #[test]
    fn sgd_step_decreases_loss() {
        let mut rng = SeededRng::new(5, 0);
        let mut q = QNetwork::new(
            Mlp::new(&[4, 8, 3], Activation::Tanh, Activation::Identity, &mut rng).unwrap(),
            200,
        )
        .unwrap();
        let batch = random_batch(&mut rng, 4, 3, 16);
        let samples: Vec<Sample> = batch.iter().map(Owned::sample).collect();
        let targets = q.td_target(&samples, 0.9).unwrap();
        let (before, g) = q.loss_and_grad(&samples, &targets).unwrap();
        q.apply_update(&g, 1e-3);
        let (after, _) = q.loss_and_grad(&samples, &targets).unwrap();
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn sync_every_call_with_period_one() {
        let mut rng = SeededRng::new(6, 0);
        let mut q = QNetwork::new(
            Mlp::new(&[2, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap(),
            1,
        )
        .unwrap();
        for _ in 0..5 {
            assert!(q.maybe_sync_target());
            assert_eq!(q.steps_since_sync(), 0);
        }
    }

    #[test]
    fn sync_on_two_hundredth_call() {
        let mut rng = SeededRng::new(7, 0);
        let mut q = QNetwork::new(
            Mlp::new(&[3, 4, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap(),
            DEFAULT_SYNC_PERIOD,
        )
        .unwrap();
        for call in 1..DEFAULT_SYNC_PERIOD {
            // Perturb eval so a premature copy would be visible.
            q.eval_mut().params_mut().for_each(|p| *p += 1e-3);
            assert!(!q.maybe_sync_target(), "synced early at call {call}");
            assert!(q.steps_since_sync() < q.sync_period());
        }
        assert_ne!(q.eval(), q.target());
        assert!(q.maybe_sync_target());
        assert_eq!(q.steps_since_sync(), 0);
        for _ in 0..10 {
            let x: Vec<f64> = (0..3).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            assert_eq!(
                q.eval().forward(&x).unwrap(),
                q.target().forward(&x).unwrap()
            );
        }
    }

    #[test]
    fn training_never_touches_target_between_syncs() {
        let mut rng = SeededRng::new(8, 0);
        let mut q = QNetwork::new(
            Mlp::new(&[3, 6, 3], Activation::Relu, Activation::Identity, &mut rng).unwrap(),
            50,
        )
        .unwrap();
        let frozen = q.target().clone();
        let batch = random_batch(&mut rng, 3, 3, 8);
        let samples: Vec<Sample> = batch.iter().map(Owned::sample).collect();
        let mut opt = Optimizer::new(OptimizerKind::Adam, q.eval());
        for _ in 0..49 {
            q.train_on(&samples, 0.9, 1e-2, &mut opt).unwrap();
            assert_eq!(q.target(), &frozen);
        }
        q.train_on(&samples, 0.9, 1e-2, &mut opt).unwrap();
        assert_ne!(q.target(), &frozen);
        assert_eq!(q.target(), q.eval());
    }
}
