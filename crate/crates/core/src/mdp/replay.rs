use std::collections::VecDeque;

use super::{ObjectiveId, Transition};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Desk-scale default capacity. The paper-scale 2,000,000 is accepted too.
pub const DEFAULT_CAPACITY: usize = 100_000;

/// Bounded FIFO experience replay with uniform sampling.
///
/// Single writer. Readers may sample between writes.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    warmup: usize,
    objectives: Vec<ObjectiveId>,
    entries: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, warmup: usize, objectives: Vec<ObjectiveId>) -> Result<Self> {
        if capacity == 0 || warmup == 0 {
            return Err(Error::InvalidArgument(
                "replay capacity and warmup must be positive".into(),
            ));
        }
        Ok(Self {
            capacity,
            warmup,
            objectives,
            entries: VecDeque::with_capacity(capacity.min(1 << 16)),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn warmup(&self) -> usize {
        self.warmup
    }

    pub fn objectives(&self) -> &[ObjectiveId] {
        &self.objectives
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Warmup reached. Draws are with replacement, so a batch may exceed
    /// the number of stored entries.
    pub fn is_ready(&self) -> bool {
        !self.is_empty() && self.len() >= self.warmup
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        t.check_objectives(&self.objectives)?;
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(t);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.entries.iter()
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.entries.get(i)
    }

    /// `n` uniform draws with replacement once warmup is reached.
    pub fn sample(&self, n: usize, rng: &mut SeededRng) -> Result<Vec<&Transition>> {
        if !self.is_ready() {
            return Err(Error::NotReady {
                size: self.len(),
                required: self.warmup,
            });
        }
        Ok(self.sample_unchecked(n, rng))
    }

    /// Uniform draws ignoring warmup; the buffer must be non-empty.
    pub(crate) fn sample_unchecked(&self, n: usize, rng: &mut SeededRng) -> Vec<&Transition> {
        (0..n)
            .map(|_| &self.entries[rng.index(self.entries.len())])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{ActionIndex, Reward, SliceLayout, Source, StateVector};
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn objectives() -> Vec<ObjectiveId> {
        vec!["click".into(), "order".into()]
    }

    /// Tags the transition with `tag` in its first feature.
    fn tagged(tag: usize) -> Transition {
        let layout = Arc::new(SliceLayout::from_lengths([1, 0, 0, 0, 0, 0]));
        let s = StateVector::new(vec![tag as f64], layout).unwrap();
        let mut rewards = BTreeMap::new();
        rewards.insert("click".into(), Reward::Hit);
        rewards.insert("order".into(), Reward::Miss);
        Transition {
            state: s.clone(),
            action: ActionIndex::new(0, 1).unwrap(),
            rewards,
            next_state: s,
            terminal: false,
            source: Source::Real,
        }
    }

    fn tag(t: &Transition) -> usize {
        t.state.values()[0] as usize
    }

    #[test]
    fn push_into_empty() {
        let mut b = ReplayBuffer::new(4, 1, objectives()).unwrap();
        b.push(tagged(0)).unwrap();
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn eviction_is_fifo() {
        let cap = 5;
        let mut b = ReplayBuffer::new(cap, 1, objectives()).unwrap();
        for i in 0..=cap {
            b.push(tagged(i)).unwrap();
        }
        assert_eq!(b.len(), cap);
        let tags: Vec<usize> = b.iter().map(tag).collect();
        assert_eq!(tags, vec![1, 2, 3, 4, 5]);
        for i in cap + 1..3 * cap {
            b.push(tagged(i)).unwrap();
            let tags: Vec<usize> = b.iter().map(tag).collect();
            let expected: Vec<usize> = (i + 1 - cap..=i).collect();
            assert_eq!(tags, expected);
        }
    }

    #[test]
    fn missing_objective_rejected() {
        let mut b = ReplayBuffer::new(4, 1, objectives()).unwrap();
        let mut t = tagged(0);
        t.rewards.remove(&ObjectiveId::new("order"));
        assert!(matches!(b.push(t), Err(Error::ObjectiveMismatch { .. })));
        let mut t = tagged(0);
        t.rewards.insert("gmv".into(), Reward::Hit);
        assert!(b.push(t).is_err());
    }

    #[test]
    fn single_item_sampled_repeatedly() {
        let mut b = ReplayBuffer::new(4, 1, objectives()).unwrap();
        b.push(tagged(9)).unwrap();
        let mut rng = SeededRng::new(0, 0);
        let batch = b.sample(3, &mut rng).unwrap();
        assert_eq!(batch.len(), 3);
        assert!(batch.iter().all(|t| tag(t) == 9));
    }

    #[test]
    fn not_ready_before_warmup() {
        let mut b = ReplayBuffer::new(10, 5, objectives()).unwrap();
        for i in 0..4 {
            b.push(tagged(i)).unwrap();
        }
        let mut rng = SeededRng::new(0, 0);
        assert!(matches!(
            b.sample(2, &mut rng),
            Err(Error::NotReady {
                size: 4,
                required: 5
            })
        ));
        b.push(tagged(4)).unwrap();
        assert!(b.sample(2, &mut rng).is_ok());
    }

    #[test]
    fn cloned_rng_gives_identical_batches() {
        let mut b = ReplayBuffer::new(100, 1, objectives()).unwrap();
        for i in 0..50 {
            b.push(tagged(i)).unwrap();
        }
        let rng = SeededRng::new(11, 2);
        let x: Vec<usize> = b
            .sample(32, &mut rng.clone())
            .unwrap()
            .into_iter()
            .map(tag)
            .collect();
        let y: Vec<usize> = b
            .sample(32, &mut rng.clone())
            .unwrap()
            .into_iter()
            .map(tag)
            .collect();
        assert_eq!(x, y);
    }

    #[test]
    fn sampling_is_uniform() {
        let mut b = ReplayBuffer::new(10, 1, objectives()).unwrap();
        for i in 0..10 {
            b.push(tagged(i)).unwrap();
        }
        let mut rng = SeededRng::new(5, 2);
        let draws = 100_000;
        let mut counts = [0usize; 10];
        for t in b.sample(draws, &mut rng).unwrap() {
            counts[tag(t)] += 1;
        }
        // Pearson chi-square against uniform; 99.9% critical value at 9 dof is 27.88.
        let expected = draws as f64 / 10.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 27.88, "chi2 = {chi2}");
        for &c in &counts {
            assert!((c as f64 / expected - 1.0).abs() < 0.02, "count {c}");
        }
    }
}
