//! Slime Mould Algorithm: bounded continuous minimization with a
//! pluggable objective.
//!
//! The update rule follows the canonical formulation. Each epoch, agents
//! are ranked by fitness and weighted by
//! `W = 1 +/- r * log10((bF - S(i)) / (bF - wF) + 1)` (plus for the better
//! half, minus for the rest, epsilon-guarded denominator). An agent then
//! either restarts uniformly (probability `z`), moves toward the best
//! position found so far (`X_best + vb * (W * X_A - X_B)` when
//! `r < p = tanh|S(i) - DF|`), or contracts (`vc * X`), with
//! `vb ~ U[-a, a]`, `a = atanh(1 - t/T)`, and `vc ~ U[-b, b]`,
//! `b = 1 - t/T`. Positions are clamped to the search box. Updates read
//! the pre-epoch population snapshot, and one epoch consumes a fixed,
//! documented number of random draws so runs are reproducible per seed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WEIGHT_EPS: f64 = 1e-300;

/// How a dimension is searched: as-is, or in log10 space (useful when the
/// bounds span decades, e.g. learning rates).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

/// Optimizer parameterization. `lower_bounds`/`upper_bounds` define the
/// search box; `scales` (default all linear) selects per-dimension log
/// searching; `z` is the uniform-restart probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmaConfig {
    #[serde(default = "default_population")]
    pub population_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    pub lower_bounds: Vec<f64>,
    pub upper_bounds: Vec<f64>,
    #[serde(default)]
    pub scales: Vec<Scale>,
    #[serde(default = "default_z")]
    pub z: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_population() -> usize {
    15
}

fn default_epochs() -> usize {
    250
}

fn default_z() -> f64 {
    0.03
}

impl SmaConfig {
    pub fn new(lower_bounds: Vec<f64>, upper_bounds: Vec<f64>) -> SmaConfig {
        SmaConfig {
            population_size: default_population(),
            epochs: default_epochs(),
            lower_bounds,
            upper_bounds,
            scales: Vec::new(),
            z: default_z(),
            seed: 0,
        }
    }

    /// The shipped search box for the classifier targets
    /// [learning rate, dropout rate, SIIR]: bounds [1e-5, 0.05, 0] to
    /// [1e-3, 0.25, 0.5], learning rate searched in log space.
    pub fn classifier_targets(seed: u64) -> SmaConfig {
        SmaConfig {
            population_size: 15,
            epochs: 250,
            lower_bounds: vec![1e-5, 0.05, 0.0],
            upper_bounds: vec![1e-3, 0.25, 0.5],
            scales: vec![Scale::Log, Scale::Linear, Scale::Linear],
            z: default_z(),
            seed,
        }
    }

    pub fn from_json(text: &str) -> Result<SmaConfig> {
        let config: SmaConfig = serde_json::from_str(text).map_err(|e| Error::InvalidDocument {
            what: "optimizer config",
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn dimensions(&self) -> usize {
        self.lower_bounds.len()
    }

    /// Per-dimension scale, defaulting to linear when unspecified.
    pub fn scale_of(&self, dim: usize) -> Scale {
        self.scales.get(dim).copied().unwrap_or_default()
    }

    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::config("population_size must be >= 2"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be >= 1"));
        }
        if self.lower_bounds.is_empty() {
            return Err(Error::config("bounds must have at least one dimension"));
        }
        if self.lower_bounds.len() != self.upper_bounds.len() {
            return Err(Error::config("lower and upper bounds must have equal length"));
        }
        if !self.scales.is_empty() && self.scales.len() != self.lower_bounds.len() {
            return Err(Error::config("scales must match the bound dimensions"));
        }
        if !(0.0..=1.0).contains(&self.z) || !self.z.is_finite() {
            return Err(Error::config(format!("z must lie in [0, 1] (got {})", self.z)));
        }
        for (d, (&lo, &hi)) in self.lower_bounds.iter().zip(&self.upper_bounds).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::config(format!("bounds of dimension {d} must be finite")));
            }
            if lo >= hi {
                return Err(Error::config(format!(
                    "lower bound must be below upper bound in dimension {d} ({lo} >= {hi})"
                )));
            }
            if self.scale_of(d) == Scale::Log && lo <= 0.0 {
                return Err(Error::config(format!(
                    "log-scaled dimension {d} requires a positive lower bound (got {lo})"
                )));
            }
        }
        Ok(())
    }
}

/// One search agent: a position inside the box and its objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub position: Vec<f64>,
    pub fitness: f64,
}

/// Outcome of a run: the best point seen, the per-epoch best-so-far
/// trajectory (entry 0 is the post-initialization best), the evaluation
/// count, and any warnings about non-finite objective values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationResult {
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
    pub history: Vec<f64>,
    pub evaluations: u64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn rank_key(fitness: f64) -> f64 {
    if fitness.is_finite() {
        fitness
    } else {
        f64::INFINITY
    }
}

fn uniform_in(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    lo + rng.random::<f64>() * (hi - lo)
}

/// Rank-dependent oscillation weights for an ascending fitness list.
/// The better half gets `1 + r * log10(ratio + 1)`, the rest
/// `1 - r * log10(ratio + 1)` with `ratio = (S(i) - bF) / (wF - bF)`;
/// a flat population degenerates to all ones. One uniform draw is
/// consumed per entry.
pub fn fitness_weights(sorted_fitnesses: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    let n = sorted_fitnesses.len();
    let finite: Vec<f64> = sorted_fitnesses
        .iter()
        .copied()
        .filter(|f| f.is_finite())
        .collect();
    let best = finite.first().copied().unwrap_or(0.0);
    let worst = finite.last().copied().unwrap_or(0.0);
    let span = worst - best;
    let mut weights = Vec::with_capacity(n);
    for (i, &fit) in sorted_fitnesses.iter().enumerate() {
        let r = rng.random::<f64>();
        let ratio = if !fit.is_finite() {
            1.0
        } else if span <= WEIGHT_EPS {
            0.0
        } else {
            (fit - best) / (span + WEIGHT_EPS)
        };
        let term = r * (ratio + 1.0).log10();
        let first_half = (i + 1) as f64 <= n as f64 / 2.0;
        weights.push(if first_half { 1.0 + term } else { 1.0 - term });
    }
    weights
}

fn step_with_best(
    population: &[Candidate],
    best: &Candidate,
    epoch: usize,
    config: &SmaConfig,
    rng: &mut impl Rng,
) -> Vec<Candidate> {
    let n = population.len();
    let dim = config.dimensions();
    let t = epoch as f64;
    let total = config.epochs as f64;
    // Clamped below 1 so a stray epoch 0 cannot produce atanh(1) = inf.
    let a = (1.0 - t / total).clamp(0.0, 1.0 - 1e-12).atanh();
    let b = (1.0 - t / total).max(0.0);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| rank_key(population[x].fitness).total_cmp(&rank_key(population[y].fitness)));
    let sorted_fitnesses: Vec<f64> = order.iter().map(|&i| population[i].fitness).collect();
    let sorted_weights = fitness_weights(&sorted_fitnesses, rng);
    let mut weight_of = vec![1.0; n];
    for (rank, &idx) in order.iter().enumerate() {
        weight_of[idx] = sorted_weights[rank];
    }

    let df = rank_key(best.fitness);
    let mut next = Vec::with_capacity(n);
    for (i, agent) in population.iter().enumerate() {
        let mut position = vec![0.0; dim];
        if rng.random::<f64>() < config.z {
            for (d, slot) in position.iter_mut().enumerate() {
                *slot = uniform_in(rng, config.lower_bounds[d], config.upper_bounds[d]);
            }
        } else {
            let gap = (rank_key(agent.fitness) - df).abs();
            let p = if gap.is_finite() { gap.tanh() } else { 1.0 };
            let vb: Vec<f64> = (0..dim).map(|_| uniform_in(rng, -a, a)).collect();
            let vc: Vec<f64> = (0..dim).map(|_| uniform_in(rng, -b, b)).collect();
            for d in 0..dim {
                let r = rng.random::<f64>();
                let pick_a = rng.random_range(0..n);
                let pick_b = rng.random_range(0..n);
                let value = if r < p {
                    best.position[d]
                        + vb[d]
                            * (weight_of[i] * population[pick_a].position[d]
                                - population[pick_b].position[d])
                } else {
                    vc[d] * agent.position[d]
                };
                position[d] = value.clamp(config.lower_bounds[d], config.upper_bounds[d]);
            }
        }
        next.push(Candidate {
            position,
            fitness: agent.fitness,
        });
    }
    next
}

/// One epoch of position updates. The best agent of the supplied
/// population serves as the attraction target; returned candidates carry
/// their previous (stale) fitness and must be re-evaluated.
pub fn sma_step(
    population: &[Candidate],
    epoch: usize,
    config: &SmaConfig,
    rng: &mut impl Rng,
) -> Vec<Candidate> {
    let best = population
        .iter()
        .min_by(|a, b| rank_key(a.fitness).total_cmp(&rank_key(b.fitness)))
        .cloned()
        .unwrap_or(Candidate {
            position: config.lower_bounds.clone(),
            fitness: f64::INFINITY,
        });
    step_with_best(population, &best, epoch, config, rng)
}

struct SpaceMap {
    internal: SmaConfig,
    scales: Vec<Scale>,
    external_lo: Vec<f64>,
    external_hi: Vec<f64>,
}

impl SpaceMap {
    fn new(config: &SmaConfig) -> SpaceMap {
        let dim = config.dimensions();
        let scales: Vec<Scale> = (0..dim).map(|d| config.scale_of(d)).collect();
        let mut internal = config.clone();
        internal.scales = Vec::new();
        for (d, scale) in scales.iter().enumerate() {
            if *scale == Scale::Log {
                internal.lower_bounds[d] = config.lower_bounds[d].log10();
                internal.upper_bounds[d] = config.upper_bounds[d].log10();
            }
        }
        SpaceMap {
            internal,
            scales,
            external_lo: config.lower_bounds.clone(),
            external_hi: config.upper_bounds.clone(),
        }
    }

    fn to_external(&self, position: &[f64]) -> Vec<f64> {
        position
            .iter()
            .enumerate()
            .map(|(d, &x)| {
                let v = match self.scales[d] {
                    Scale::Linear => x,
                    Scale::Log => 10f64.powf(x),
                };
                v.clamp(self.external_lo[d], self.external_hi[d])
            })
            .collect()
    }
}

/// Minimizes `objective` over the configured box. Deterministic given the
/// config seed. Non-finite objective values rank worst and produce a
/// warning instead of aborting the run.
pub fn optimize<F>(objective: F, config: &SmaConfig) -> Result<OptimizationResult>
where
    F: Fn(&[f64]) -> f64,
{
    config.validate()?;
    let map = SpaceMap::new(config);
    let internal = &map.internal;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut warnings = Vec::new();
    let mut evaluations = 0u64;

    let evaluate = |position: &[f64],
                        epoch: usize,
                        index: usize,
                        warnings: &mut Vec<String>,
                        evaluations: &mut u64|
     -> f64 {
        let external = map.to_external(position);
        let value = objective(&external);
        *evaluations += 1;
        if value.is_finite() {
            value
        } else {
            warnings.push(format!(
                "epoch {epoch}: candidate {index} returned non-finite fitness {value}; ranked worst"
            ));
            f64::INFINITY
        }
    };

    let mut population: Vec<Candidate> = Vec::with_capacity(internal.population_size);
    for i in 0..internal.population_size {
        let position: Vec<f64> = (0..internal.dimensions())
            .map(|d| uniform_in(&mut rng, internal.lower_bounds[d], internal.upper_bounds[d]))
            .collect();
        let fitness = evaluate(&position, 0, i, &mut warnings, &mut evaluations);
        population.push(Candidate { position, fitness });
    }
    let mut best = population
        .iter()
        .min_by(|a, b| a.fitness.total_cmp(&b.fitness))
        .cloned()
        .expect("population_size >= 2");
    let mut history = Vec::with_capacity(internal.epochs + 1);
    history.push(best.fitness);

    for epoch in 1..=internal.epochs {
        let mut next = step_with_best(&population, &best, epoch, internal, &mut rng);
        for (i, candidate) in next.iter_mut().enumerate() {
            candidate.fitness =
                evaluate(&candidate.position, epoch, i, &mut warnings, &mut evaluations);
            if candidate.fitness < best.fitness {
                best = candidate.clone();
            }
        }
        population = next;
        history.push(best.fitness);
    }

    Ok(OptimizationResult {
        best_position: map.to_external(&best.position),
        best_fitness: best.fitness,
        history,
        evaluations,
        warnings,
    })
}
