use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Fusion weights, one per objective in ensemble order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidArgument("weight vector is empty".into()));
        }
        if let Some(i) = w.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("weight {i}")));
        }
        Ok(Self(w))
    }

    /// Equal unit weights.
    pub fn uniform(k: usize) -> Result<Self> {
        Self::new(vec![1.0; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|w| w * c).collect())
    }

    pub fn is_nonnegative(&self) -> bool {
        self.0.iter().all(|w| *w >= 0.0)
    }
}

/// Extra variance `Z_t` added after each update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSchedule {
    Constant {
        z: f64,
    },
    /// `max(floor, initial · decay^t)`.
    Geometric {
        initial: f64,
        decay: f64,
        floor: f64,
    },
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        NoiseSchedule::Geometric {
            initial: 0.1,
            decay: 0.9,
            floor: 1e-3,
        }
    }
}

impl NoiseSchedule {
    pub fn z(&self, t: usize) -> f64 {
        match *self {
            NoiseSchedule::Constant { z } => z,
            NoiseSchedule::Geometric {
                initial,
                decay,
                floor,
            } => floor.max(initial * decay.powi(t.min(i32::MAX as usize) as i32)),
        }
    }

    /// Lower bound of `z(t)` over all `t`.
    pub fn floor(&self) -> f64 {
        match *self {
            NoiseSchedule::Constant { z } => z,
            NoiseSchedule::Geometric { floor, .. } => floor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            NoiseSchedule::Constant { z } => z >= 0.0 && z.is_finite(),
            NoiseSchedule::Geometric {
                initial,
                decay,
                floor,
            } => {
                initial >= 0.0
                    && initial.is_finite()
                    && (0.0..=1.0).contains(&decay)
                    && floor >= 0.0
                    && floor.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid noise schedule {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessSample {
    pub weights: WeightVector,
    pub score: f64,
}

/// Diagonal Gaussian over weight vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct CemDistribution {
    mu: Vec<f64>,
    sigma2: Vec<f64>,
    generation: usize,
    noise: NoiseSchedule,
}

impl CemDistribution {
    pub fn new(mu: Vec<f64>, sigma2: Vec<f64>, noise: NoiseSchedule) -> Result<Self> {
        if mu.is_empty() || mu.len() != sigma2.len() {
            return Err(Error::Dimension {
                what: "CEM variance",
                expected: mu.len(),
                got: sigma2.len(),
            });
        }
        if mu.iter().chain(&sigma2).any(|v| !v.is_finite()) || sigma2.iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidArgument(
                "CEM mean/variance must be finite, variance ≥ 0".into(),
            ));
        }
        noise.validate()?;
        Ok(Self {
            mu,
            sigma2,
            generation: 0,
            noise,
        })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn noise(&self) -> NoiseSchedule {
        self.noise
    }

    /// `n` independent draws, optionally clipped at zero.
    pub fn sample_population(
        &self,
        n: usize,
        project_nonnegative: bool,
        rng: &mut SeededRng,
    ) -> Result<Vec<WeightVector>> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "population size must be positive".into(),
            ));
        }
        (0..n)
            .map(|_| {
                let w = self
                    .mu
                    .iter()
                    .zip(&self.sigma2)
                    .map(|(m, s2)| {
                        let v = m + s2.sqrt() * rng.standard_normal();
                        if project_nonnegative {
                            v.max(0.0)
                        } else {
                            v
                        }
                    })
                    .collect();
                WeightVector::new(w)
            })
            .collect()
    }

    /// Refits to the `elite_count` best samples. Equal scores keep their
    /// input order, so earlier samples win the cutoff.
    pub fn update(&self, samples: &[FitnessSample], elite_count: usize) -> Result<Self> {
        if elite_count == 0 {
            return Err(Error::InvalidArgument(
                "elite count must be positive".into(),
            ));
        }
        if elite_count > samples.len() {
            return Err(Error::InvalidArgument(format!(
                "elite count {elite_count} exceeds population {}",
                samples.len()
            )));
        }
        for s in samples {
            if !s.score.is_finite() {
                return Err(Error::NonFiniteFitness {
                    weights: s.weights.as_slice().to_vec(),
                    score: s.score,
                });
            }
            if s.weights.len() != self.mu.len() {
                return Err(Error::Dimension {
                    what: "CEM sample",
                    expected: self.mu.len(),
                    got: s.weights.len(),
                });
            }
        }
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.sort_by(|&a, &b| samples[b].score.total_cmp(&samples[a].score));
        let elites = &order[..elite_count];
        let m = elite_count as f64;
        let k = self.mu.len();
        let mut mu = vec![0.0; k];
        for &i in elites {
            for (acc, w) in mu.iter_mut().zip(samples[i].weights.as_slice()) {
                *acc += w;
            }
        }
        mu.iter_mut().for_each(|v| *v /= m);
        let mut var = vec![0.0; k];
        for &i in elites {
            for ((acc, w), mean) in var.iter_mut().zip(samples[i].weights.as_slice()).zip(&mu) {
                *acc += (w - mean) * (w - mean);
            }
        }
        let generation = self.generation + 1;
        let z = self.noise.z(generation);
        let sigma2 = var.into_iter().map(|v| v / m + z).collect();
        Ok(Self {
            mu,
            sigma2,
            generation,
            noise: self.noise,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CemConfig {
    pub population: usize,
    pub elites: usize,
    pub generations: usize,
    pub init_mu: Vec<f64>,
    pub init_sigma2: Vec<f64>,
    #[serde(default)]
    pub noise: NoiseSchedule,
    #[serde(default = "default_true")]
    pub project_nonnegative: bool,
}

fn default_true() -> bool {
    true
}

impl CemConfig {
    /// Population 100, 10 elites, 50 generations, starting at `N(0.5, 1)`
    /// per dimension.
    pub fn new(k: usize) -> Self {
        Self {
            population: 100,
            elites: 10,
            generations: 50,
            init_mu: vec![0.5; k],
            init_sigma2: vec![1.0; k],
            noise: NoiseSchedule::default(),
            project_nonnegative: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.generations == 0 {
            return Err(Error::InvalidArgument(
                "CEM needs at least one generation".into(),
            ));
        }
        if self.elites == 0 || self.elites > self.population {
            return Err(Error::InvalidArgument(format!(
                "elite count {} must be in 1..={}",
                self.elites, self.population
            )));
        }
        CemDistribution::new(self.init_mu.clone(), self.init_sigma2.clone(), self.noise).map(|_| ())
    }
}

/// One row of optimizer history, recorded after the generation's update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub mu: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub best_score: f64,
    pub mean_score: f64,
    pub best_ever: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CemOutcome {
    pub best: FitnessSample,
    pub history: Vec<GenerationRecord>,
    pub distribution: CemDistribution,
}

fn check_score(w: &WeightVector, score: f64) -> Result<f64> {
    if score.is_finite() {
        Ok(score)
    } else {
        Err(Error::NonFiniteFitness {
            weights: w.as_slice().to_vec(),
            score,
        })
    }
}

fn run<E>(cfg: &CemConfig, rng: &mut SeededRng, mut evaluate: E) -> Result<CemOutcome>
where
    E: FnMut(&[WeightVector]) -> Result<Vec<f64>>,
{
    cfg.validate()?;
    let mut dist = CemDistribution::new(cfg.init_mu.clone(), cfg.init_sigma2.clone(), cfg.noise)?;
    let mut best: Option<FitnessSample> = None;
    let mut history = Vec::with_capacity(cfg.generations);
    for _ in 0..cfg.generations {
        let population = dist.sample_population(cfg.population, cfg.project_nonnegative, rng)?;
        let scores = evaluate(&population)?;
        let samples: Vec<FitnessSample> = population
            .into_iter()
            .zip(scores)
            .map(|(weights, score)| FitnessSample { weights, score })
            .collect();
        let mut gen_best = 0;
        for (i, s) in samples.iter().enumerate() {
            if s.score > samples[gen_best].score {
                gen_best = i;
            }
        }
        if best
            .as_ref()
            .is_none_or(|b| samples[gen_best].score > b.score)
        {
            best = Some(samples[gen_best].clone());
        }
        dist = dist.update(&samples, cfg.elites)?;
        let mean_score = samples.iter().map(|s| s.score).sum::<f64>() / samples.len() as f64;
        history.push(GenerationRecord {
            generation: dist.generation(),
            mu: dist.mu().to_vec(),
            sigma2: dist.sigma2().to_vec(),
            best_score: samples[gen_best].score,
            mean_score,
            best_ever: best.as_ref().expect("set above").score,
        });
    }
    Ok(CemOutcome {
        best: best.expect("at least one generation"),
        history,
        distribution: dist,
    })
}

/// Sample, score and refit `generations` times. Returns the best sample
/// ever scored, the per-generation history and the final distribution.
pub fn optimize<F>(mut fitness: F, cfg: &CemConfig, rng: &mut SeededRng) -> Result<CemOutcome>
where
    F: FnMut(&WeightVector) -> Result<f64>,
{
    run(cfg, rng, |pop| {
        pop.iter().map(|w| check_score(w, fitness(w)?)).collect()
    })
}

/// As [`optimize`], scoring each generation in parallel. Results match the
/// sequential version for a pure fitness function.
pub fn optimize_par<F>(fitness: F, cfg: &CemConfig, rng: &mut SeededRng) -> Result<CemOutcome>
where
    F: Fn(&WeightVector) -> Result<f64> + Sync,
{
    use rayon::prelude::*;
    run(cfg, rng, |pop| {
        pop.par_iter()
            .map(|w| check_score(w, fitness(w)?))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn sample(w: &[f64], score: f64) -> FitnessSample {
        FitnessSample {
            weights: WeightVector::new(w.to_vec()).unwrap(),
            score,
        }
    }

    fn quadratic(w: &WeightVector) -> Result<f64> {
        let s = w.as_slice();
        Ok(-((s[0] - 0.3).powi(2) + (s[1] - 0.7).powi(2)))
    }

    #[test]
    fn tiny_variance_samples_near_mean() {
        let d = CemDistribution::new(
            vec![0.4, 0.6],
            vec![0.0, 0.0],
            NoiseSchedule::Constant { z: 1e-12 },
        )
        .unwrap();
        let mut rng = SeededRng::new(1, 0);
        for w in d.sample_population(50, false, &mut rng).unwrap() {
            assert_eq!(w.as_slice(), &[0.4, 0.6]);
        }
    }

    #[test]
    fn sample_mean_within_three_standard_errors() {
        let d = CemDistribution::new(vec![0.3, -1.0], vec![0.25, 4.0], NoiseSchedule::default())
            .unwrap();
        let mut rng = SeededRng::new(2, 0);
        let n = 100_000;
        let pop = d.sample_population(n, false, &mut rng).unwrap();
        for k in 0..2 {
            let mean = pop.iter().map(|w| w.as_slice()[k]).sum::<f64>() / n as f64;
            let se = (d.sigma2()[k] / n as f64).sqrt();
            assert!((mean - d.mu()[k]).abs() < 3.0 * se, "dim {k}: {mean}");
        }
    }

    #[test]
    fn population_is_reproducible() {
        let d = CemDistribution::new(vec![0.0; 3], vec![1.0; 3], NoiseSchedule::default()).unwrap();
        let a = d
            .sample_population(10, true, &mut SeededRng::new(9, 7))
            .unwrap();
        let b = d
            .sample_population(10, true, &mut SeededRng::new(9, 7))
            .unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(WeightVector::is_nonnegative));
        assert!(d
            .sample_population(0, true, &mut SeededRng::new(9, 7))
            .is_err());
    }

    #[test]
    fn update_identical_elites() {
        let noise = NoiseSchedule::Constant { z: 0.01 };
        let d = CemDistribution::new(vec![0.0; 2], vec![1.0; 2], noise).unwrap();
        let s = vec![
            sample(&[0.2, 0.8], 1.0),
            sample(&[0.2, 0.8], 1.0),
            sample(&[5.0, 5.0], -1.0),
        ];
        let u = d.update(&s, 2).unwrap();
        assert_eq!(u.mu(), &[0.2, 0.8]);
        assert_eq!(u.sigma2(), &[0.01, 0.01]);
        assert_eq!(u.generation(), 1);

        let d0 = CemDistribution::new(
            vec![0.0; 2],
            vec![1.0; 2],
            NoiseSchedule::Constant { z: 0.0 },
        )
        .unwrap();
        assert_eq!(d0.update(&s, 2).unwrap().sigma2(), &[0.0, 0.0]);
    }

    #[test]
    fn update_two_elites_hand_computed() {
        let noise = NoiseSchedule::Constant { z: 0.05 };
        let d = CemDistribution::new(vec![0.0; 2], vec![1.0; 2], noise).unwrap();
        let s = vec![
            sample(&[0.0, 2.0], 3.0),
            sample(&[9.0, 9.0], 0.0),
            sample(&[2.0, 0.0], 3.0),
        ];
        let u = d.update(&s, 2).unwrap();
        assert_eq!(u.mu(), &[1.0, 1.0]);
        assert_eq!(u.sigma2(), &[1.05, 1.05]);
    }

    #[test]
    fn update_cutoff_ties_prefer_lower_index() {
        let d =
            CemDistribution::new(vec![0.0], vec![1.0], NoiseSchedule::Constant { z: 0.0 }).unwrap();
        let s = vec![
            sample(&[1.0], 0.5),
            sample(&[2.0], 0.5),
            sample(&[3.0], 0.5),
        ];
        assert_eq!(d.update(&s, 1).unwrap().mu(), &[1.0]);
        assert!(d.update(&s, 0).is_err());
        assert!(d.update(&s, 4).is_err());
        assert!(matches!(
            d.update(&[sample(&[1.0], f64::NAN)], 1),
            Err(Error::NonFiniteFitness { .. })
        ));
    }

    #[test]
    fn converges_on_quadratic() {
        let cfg = CemConfig::new(2);
        let out = optimize(quadratic, &cfg, &mut SeededRng::new(1, 7)).unwrap();
        let mu = out.distribution.mu();
        assert!(
            (mu[0] - 0.3).abs() < 1e-2 && (mu[1] - 0.7).abs() < 1e-2,
            "{mu:?}"
        );
        assert_eq!(out.history.len(), 50);
    }

    #[test]
    fn parallel_matches_sequential() {
        let cfg = CemConfig::new(2);
        let a = optimize(quadratic, &cfg, &mut SeededRng::new(4, 7)).unwrap();
        let b = optimize_par(quadratic, &cfg, &mut SeededRng::new(4, 7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_fitness_keeps_best_score() {
        let cfg = CemConfig::new(2);
        let out = optimize(|_| Ok(1.25), &cfg, &mut SeededRng::new(3, 7)).unwrap();
        assert!(out.history.iter().all(|h| h.best_ever == 1.25));
        assert_eq!(out.best.score, 1.25);
    }

    #[test]
    fn whole_population_as_elites() {
        let mut cfg = CemConfig::new(2);
        cfg.generations = 1;
        cfg.population = 8;
        cfg.elites = 8;
        cfg.noise = NoiseSchedule::Constant { z: 0.0 };
        let pop = CemDistribution::new(cfg.init_mu.clone(), cfg.init_sigma2.clone(), cfg.noise)
            .unwrap()
            .sample_population(8, true, &mut SeededRng::new(5, 7))
            .unwrap();
        let out = optimize(quadratic, &cfg, &mut SeededRng::new(5, 7)).unwrap();
        for k in 0..2 {
            let mean = pop.iter().map(|w| w.as_slice()[k]).sum::<f64>() / 8.0;
            assert!((out.distribution.mu()[k] - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_fitness_names_sample() {
        let cfg = CemConfig::new(2);
        let err = optimize(|_| Ok(f64::INFINITY), &cfg, &mut SeededRng::new(3, 7)).unwrap_err();
        assert!(matches!(err, Error::NonFiniteFitness { weights, .. } if weights.len() == 2));
    }

    #[test]
    fn config_validation() {
        let mut cfg = CemConfig::new(2);
        cfg.generations = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = CemConfig::new(2);
        cfg.elites = 101;
        assert!(cfg.validate().is_err());
        let mut cfg = CemConfig::new(2);
        cfg.noise = NoiseSchedule::Constant { z: -1.0 };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn geometric_schedule_respects_floor() {
        let n = NoiseSchedule::default();
        assert_eq!(n.z(0), 0.1);
        assert!((n.z(1) - 0.09).abs() < 1e-15);
        assert_eq!(n.z(1000), 1e-3);
    }

    proptest! {
        #[test]
        fn variance_floor_and_permutation_invariance(
            scores in prop::collection::vec(-10.0f64..10.0, 4..30),
            z in 1e-6f64..1.0,
            seed in 0u64..1000,
        ) {
            let d = CemDistribution::new(vec![0.0, 0.0], vec![1.0, 1.0], NoiseSchedule::Constant { z }).unwrap();
            let pop = d.sample_population(scores.len(), false, &mut SeededRng::new(seed, 0)).unwrap();
            let samples: Vec<FitnessSample> = pop.into_iter().zip(&scores)
                .map(|(weights, &score)| FitnessSample { weights, score }).collect();
            let m = scores.len() / 2;
            let u = d.update(&samples, m).unwrap();
            prop_assert!(u.sigma2().iter().all(|s| *s >= z));
            // Distinct scores: any permutation selects the same elites.
            let mut sorted = scores.clone();
            sorted.sort_by(f64::total_cmp);
            if sorted.windows(2).all(|w| w[0] != w[1]) {
                let mut rev = samples.clone();
                rev.reverse();
                let v = d.update(&rev, m).unwrap();
                for k in 0..2 {
                    prop_assert!((u.mu()[k] - v.mu()[k]).abs() < 1e-12);
                    prop_assert!((u.sigma2()[k] - v.sigma2()[k]).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn best_ever_is_monotone(seed in 0u64..200) {
            let mut cfg = CemConfig::new(2);
            cfg.generations = 10;
            let out = optimize(quadratic, &cfg, &mut SeededRng::new(seed, 7)).unwrap();
            prop_assert!(out.history.windows(2).all(|h| h[1].best_ever >= h[0].best_ever));
            prop_assert_eq!(out.best.score, out.history.last().unwrap().best_ever);
        }
    }
}
