//! Genetic-algorithm allocation over grant masks.
//!
//! A chromosome is a bit mask over the round's pending list. The initial
//! population always contains both greedy solutions, and elitism carries the
//! best individual forward, so the GA never returns anything worse than the
//! better greedy pass.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::allocation::{allocate, greedy_mask, AllocationResult, GreedyOrder, PendingRequest};
use crate::config::{Round, ENERGY_EPS};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessWeights {
    pub w_energy: f64,
    pub w_count: f64,
    pub w_queue_age: f64,
}

impl FitnessWeights {
    pub const fn new(w_energy: f64, w_count: f64, w_queue_age: f64) -> Self {
        Self {
            w_energy,
            w_count,
            w_queue_age,
        }
    }

    /// Pure cap utilization.
    pub const ENERGY_ONLY: FitnessWeights = FitnessWeights::new(1.0, 0.0, 0.0);
}

impl Default for FitnessWeights {
    fn default() -> Self {
        FitnessWeights::new(0.4, 0.2, 0.4)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaParams {
    pub population_size: usize,
    pub generations: usize,
    /// Per-bit flip probability.
    pub mutation_rate: f64,
    pub crossover_rate: f64,
    /// Best individuals copied unchanged into the next generation.
    pub elitism: usize,
    pub tournament_size: usize,
    pub fitness_weights: FitnessWeights,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            population_size: 100,
            generations: 70,
            mutation_rate: 0.01,
            crossover_rate: 0.8,
            elitism: 2,
            tournament_size: 3,
            fitness_weights: FitnessWeights::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Chromosome {
    pub grant_mask: Vec<bool>,
}

impl Chromosome {
    pub fn new(grant_mask: Vec<bool>) -> Self {
        Self { grant_mask }
    }

    pub fn empty(len: usize) -> Self {
        Self::new(vec![false; len])
    }
}

/// Precomputed view of one allocation instance for fast scoring.
struct FitnessModel {
    amounts: Vec<f64>,
    ages: Vec<f64>,
    total_age: f64,
    cap: f64,
    weights: FitnessWeights,
}

impl FitnessModel {
    fn new(pending: &[PendingRequest], cap: f64, weights: FitnessWeights, now: Round) -> Self {
        let amounts = pending.iter().map(|p| p.amount).collect();
        let ages: Vec<f64> = pending
            .iter()
            .map(|p| match p.queued_since {
                Some(since) => now.saturating_sub(since).max(1) as f64,
                None => 0.0,
            })
            .collect();
        let total_age = ages.iter().sum();
        Self {
            amounts,
            ages,
            total_age,
            cap,
            weights,
        }
    }

    fn load(&self, mask: &[bool]) -> f64 {
        mask.iter()
            .zip(&self.amounts)
            .filter(|(&m, _)| m)
            .map(|(_, a)| a)
            .sum()
    }

    fn score(&self, mask: &[bool]) -> f64 {
        let n = self.amounts.len();
        let mut load = 0.0;
        let mut count = 0usize;
        let mut age = 0.0;
        for (i, _) in mask.iter().enumerate().filter(|(_, on)| **on) {
            load += self.amounts[i];
            count += 1;
            age += self.ages[i];
        }
        if load > self.cap + ENERGY_EPS {
            return f64::NEG_INFINITY;
        }
        let w = &self.weights;
        let energy = if self.cap > 0.0 { load / self.cap } else { 0.0 };
        let share = if n > 0 { count as f64 / n as f64 } else { 0.0 };
        let queue_age = if self.total_age > 0.0 {
            age / self.total_age
        } else {
            0.0
        };
        w.w_energy * energy + w.w_count * share + w.w_queue_age * queue_age
    }
}

/// Score of a grant mask. Infeasible masks score `-inf`. Feasible masks
/// score a weighted sum of cap utilization, the fraction of pending
/// requests granted, and the share of total queue age (rounds waited,
/// summed over queued entries) that the mask serves. `now` is the current
/// round, used to age queue entries.
pub fn fitness(
    c: &Chromosome,
    pending: &[PendingRequest],
    cap: f64,
    weights: FitnessWeights,
    now: Round,
) -> f64 {
    FitnessModel::new(pending, cap, weights, now).score(&c.grant_mask)
}

#[derive(Debug, Clone)]
pub struct GaOutcome {
    pub result: AllocationResult,
    pub best: Chromosome,
    pub best_fitness: f64,
    /// Best fitness in the population after initialization and after each
    /// generation.
    pub history: Vec<f64>,
}

struct Individual {
    mask: Vec<bool>,
    score: f64,
}

/// Evolve a grant mask for `pending` under `cap`.
pub fn run_ga(
    pending: &[PendingRequest],
    cap: f64,
    params: &GaParams,
    now: Round,
    rng: &mut RngStream,
) -> GaOutcome {
    let n = pending.len();
    let model = FitnessModel::new(pending, cap, params.fitness_weights, now);
    let size = params.population_size.max(1);
    let elitism = params.elitism.min(size - 1);

    let mut population: Vec<Individual> = [GreedyOrder::SmallestFirst, GreedyOrder::LargestFirst]
        .into_iter()
        .map(|order| {
            let mask = greedy_mask(pending, cap, order);
            let score = model.score(&mask);
            Individual { mask, score }
        })
        .collect();
    if population[1].score > population[0].score {
        population.swap(0, 1);
    }
    population.truncate(size);
    while population.len() < size {
        let mask = random_fill(&model, rng);
        let score = model.score(&mask);
        population.push(Individual { mask, score });
    }

    let mut history = Vec::with_capacity(params.generations + 1);
    history.push(best_of(&population).score);

    if n > 0 {
        for _ in 0..params.generations {
            // Stable sort keeps ties in insertion order.
            population.sort_by(|a, b| b.score.total_cmp(&a.score));
            let mut next: Vec<Individual> = population[..elitism]
                .iter()
                .map(|i| Individual {
                    mask: i.mask.clone(),
                    score: i.score,
                })
                .collect();
            while next.len() < size {
                let a = tournament(&population, params.tournament_size, rng);
                let b = tournament(&population, params.tournament_size, rng);
                let (mut c1, mut c2) = if n > 1 && rng.chance(params.crossover_rate) {
                    single_point_crossover(&population[a].mask, &population[b].mask, rng)
                } else {
                    (population[a].mask.clone(), population[b].mask.clone())
                };
                for child in [&mut c1, &mut c2] {
                    mutate(child, params.mutation_rate, rng);
                    repair(child, &model, rng);
                }
                for child in [c1, c2] {
                    if next.len() < size {
                        let score = model.score(&child);
                        next.push(Individual { mask: child, score });
                    }
                }
            }
            population = next;
            history.push(best_of(&population).score);
        }
    }

    let best = best_of(&population);
    let best = Chromosome::new(best.mask.clone());
    let best_fitness = model.score(&best.grant_mask);
    GaOutcome {
        result: AllocationResult::from_mask(pending, &best.grant_mask, cap),
        best,
        best_fitness,
        history,
    }
}

/// GA allocation. Falls back to an empty result for an empty pending list.
pub fn ga_allocate(
    pending: &[PendingRequest],
    cap: f64,
    params: &GaParams,
    now: Round,
    rng: &mut RngStream,
) -> AllocationResult {
    if pending.is_empty() {
        return allocate(pending, cap, GreedyOrder::SmallestFirst);
    }
    run_ga(pending, cap, params, now, rng).result
}

fn best_of(population: &[Individual]) -> &Individual {
    // First maximum wins so the choice is order-stable.
    let mut best = &population[0];
    for ind in &population[1..] {
        if ind.score > best.score {
            best = ind;
        }
    }
    best
}

fn tournament(population: &[Individual], k: usize, rng: &mut RngStream) -> usize {
    let mut winner = rng.index(population.len());
    for _ in 1..k.max(1) {
        let challenger = rng.index(population.len());
        if population[challenger].score > population[winner].score {
            winner = challenger;
        }
    }
    winner
}

fn single_point_crossover(a: &[bool], b: &[bool], rng: &mut RngStream) -> (Vec<bool>, Vec<bool>) {
    let n = a.len();
    let point = 1 + rng.index(n - 1);
    let mut c1 = Vec::with_capacity(n);
    let mut c2 = Vec::with_capacity(n);
    c1.extend_from_slice(&a[..point]);
    c1.extend_from_slice(&b[point..]);
    c2.extend_from_slice(&b[..point]);
    c2.extend_from_slice(&a[point..]);
    (c1, c2)
}

/// Flip each bit independently with probability `rate`. Gaps between
/// flips are drawn from the geometric distribution, so the cost scales with
/// the number of flips rather than the mask length.
fn mutate(mask: &mut [bool], rate: f64, rng: &mut RngStream) {
    if rate <= 0.0 {
        return;
    }
    if rate >= 1.0 {
        mask.iter_mut().for_each(|b| *b = !*b);
        return;
    }
    let log_q = (1.0 - rate).ln();
    let mut i = 0usize;
    loop {
        // uniform() is on [0, 1); 1 - u is on (0, 1].
        let gap = ((1.0 - rng.uniform()).ln() / log_q).floor();
        if gap >= (mask.len() - i) as f64 {
            return;
        }
        i += gap as usize;
        mask[i] = !mask[i];
        i += 1;
    }
}

/// Drop random grants until the mask fits under the cap.
fn repair(mask: &mut [bool], model: &FitnessModel, rng: &mut RngStream) {
    let mut load = model.load(mask);
    if load <= model.cap + ENERGY_EPS {
        return;
    }
    let mut on: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    while load > model.cap + ENERGY_EPS {
        let i = on.swap_remove(rng.index(on.len()));
        mask[i] = false;
        load -= model.amounts[i];
    }
}

/// Random maximal feasible mask: visit requests in random order and grant
/// whatever fits.
fn random_fill(model: &FitnessModel, rng: &mut RngStream) -> Vec<bool> {
    let n = model.amounts.len();
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut mask = vec![false; n];
    let mut load = 0.0;
    for i in order {
        if load + model.amounts[i] <= model.cap + ENERGY_EPS {
            load += model.amounts[i];
            mask[i] = true;
        }
    }
    mask
}

/// One allocation problem: the pending list of a round, its cap, and the
/// round number used to age queue entries.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationInstance {
    pub pending: Vec<PendingRequest>,
    pub cap: f64,
    pub now: Round,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaBenchmark {
    pub greedy_time: Duration,
    pub ga_time: Duration,
    /// Better of the two greedy policies.
    pub greedy_fitness: f64,
    pub ga_fitness: f64,
}

/// Time and score both greedy passes against the GA on one instance.
pub fn ga_benchmark(instance: &AllocationInstance, params: &GaParams, rng: &mut RngStream) -> GaBenchmark {
    let AllocationInstance { pending, cap, now } = instance;
    let weights = params.fitness_weights;

    let start = Instant::now();
    let greedy_fitness = [GreedyOrder::SmallestFirst, GreedyOrder::LargestFirst]
        .into_iter()
        .map(|order| {
            let mask = greedy_mask(pending, *cap, order);
            fitness(&Chromosome::new(mask), pending, *cap, weights, *now)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let greedy_time = start.elapsed();

    let start = Instant::now();
    let outcome = run_ga(pending, *cap, params, *now, rng);
    let ga_time = start.elapsed();

    GaBenchmark {
        greedy_time,
        ga_time,
        greedy_fitness,
        ga_fitness: outcome.best_fitness,
    }
}
