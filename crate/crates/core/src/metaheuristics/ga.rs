use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    clamp_in_place, sanitize, Agent, Objective, OptimError, OptimizationResult, OptimizationTrace,
    OptimizerParams, Result, SearchBounds,
};

/// Size-2 tournament: the fitter of two agents drawn with replacement.
pub fn tournament_select<'a>(population: &'a [Agent], rng: &mut impl Rng) -> &'a Agent {
    let a = &population[rng.random_range(0..population.len())];
    let b = &population[rng.random_range(0..population.len())];
    if b.fitness < a.fitness {
        b
    } else {
        a
    }
}

/// Swaps each gene between the two parents with probability `rate`.
pub fn uniform_crossover(p1: &[f64], p2: &[f64], rate: f64, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
    let mut c1 = p1.to_vec();
    let mut c2 = p2.to_vec();
    for d in 0..c1.len() {
        if rng.random::<f64>() < rate {
            std::mem::swap(&mut c1[d], &mut c2[d]);
        }
    }
    (c1, c2)
}

/// Resamples each gene uniformly within its bounds with probability `rate`.
/// Returns the number of mutated genes.
pub fn uniform_mutation(genome: &mut [f64], bounds: &SearchBounds, rate: f64, rng: &mut impl Rng) -> usize {
    let mut count = 0;
    for (d, g) in genome.iter_mut().enumerate() {
        if rng.random::<f64>() < rate {
            let (lo, hi) = (bounds.lower()[d], bounds.upper()[d]);
            *g = lo + rng.random::<f64>() * (hi - lo);
            count += 1;
        }
    }
    count
}

/// Generational GA with size-2 tournaments, uniform crossover, uniform
/// mutation and a single elite carried over unchanged.
pub struct GeneticAlgorithm<'o, O: Objective + ?Sized> {
    objective: &'o O,
    bounds: SearchBounds,
    params: OptimizerParams,
    rng: ChaCha8Rng,
    population: Vec<Agent>,
    best: Agent,
    generation: usize,
    trace: OptimizationTrace,
}

impl<'o, O: Objective + ?Sized> GeneticAlgorithm<'o, O> {
    pub fn new(objective: &'o O, bounds: &SearchBounds, params: &OptimizerParams) -> Result<Self> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let initial = (0..params.population_size).map(|_| bounds.sample(&mut rng)).collect();
        Self::start(objective, bounds, params, rng, initial)
    }

    pub fn with_population(
        objective: &'o O,
        bounds: &SearchBounds,
        params: &OptimizerParams,
        initial: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let params = OptimizerParams {
            population_size: initial.len(),
            ..params.clone()
        };
        params.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(params.seed);
        Self::start(objective, bounds, &params, rng, initial)
    }

    fn start(
        objective: &'o O,
        bounds: &SearchBounds,
        params: &OptimizerParams,
        rng: ChaCha8Rng,
        mut initial: Vec<Vec<f64>>,
    ) -> Result<Self> {
        for p in initial.iter_mut() {
            if p.len() != bounds.dim() {
                return Err(OptimError::Dimension {
                    expected: bounds.dim(),
                    found: p.len(),
                });
            }
            clamp_in_place(p, bounds);
        }
        let mut trace = OptimizationTrace::default();
        let population = evaluate(objective, initial, &mut trace);
        let best = fittest(&population).clone();
        Ok(GeneticAlgorithm {
            objective,
            bounds: bounds.clone(),
            params: params.clone(),
            rng,
            population,
            best,
            generation: 0,
            trace,
        })
    }

    pub fn population(&self) -> &[Agent] {
        &self.population
    }

    pub fn best(&self) -> &Agent {
        &self.best
    }

    pub fn generation(&mut self) {
        let n = self.params.population_size;
        let elite = fittest(&self.population).clone();
        let mut children = Vec::with_capacity(n - 1);
        while children.len() < n - 1 {
            let p1 = tournament_select(&self.population, &mut self.rng).position.clone();
            let p2 = tournament_select(&self.population, &mut self.rng).position.clone();
            let (mut c1, mut c2) = uniform_crossover(&p1, &p2, self.params.ga_crossover_rate, &mut self.rng);
            uniform_mutation(&mut c1, &self.bounds, self.params.ga_mutation_rate, &mut self.rng);
            uniform_mutation(&mut c2, &self.bounds, self.params.ga_mutation_rate, &mut self.rng);
            children.push(c1);
            if children.len() < n - 1 {
                children.push(c2);
            }
        }
        let mut next = vec![elite];
        next.extend(evaluate(self.objective, children, &mut self.trace));
        self.population = next;
        let gen_best = fittest(&self.population);
        if gen_best.fitness < self.best.fitness {
            self.best = gen_best.clone();
        }
        self.generation += 1;
        self.trace.best_fitness_per_iteration.push(self.best.fitness);
    }

    pub fn run(mut self) -> Result<OptimizationResult> {
        while self.generation < self.params.max_iterations {
            self.generation();
        }
        if !self.best.fitness.is_finite() {
            return Err(OptimError::DegenerateObjective);
        }
        self.trace.best_position = self.best.position.clone();
        Ok(OptimizationResult {
            best_position: self.best.position,
            best_fitness: self.best.fitness,
            trace: self.trace,
        })
    }
}

fn evaluate<O: Objective + ?Sized>(objective: &O, positions: Vec<Vec<f64>>, trace: &mut OptimizationTrace) -> Vec<Agent> {
    let fitness = objective.evaluate_batch(&positions);
    trace.evaluations += positions.len();
    positions
        .into_iter()
        .zip(fitness)
        .map(|(position, f)| Agent {
            position,
            fitness: sanitize(f),
        })
        .collect()
}

fn fittest(population: &[Agent]) -> &Agent {
    population
        .iter()
        .min_by(|a, b| a.fitness.total_cmp(&b.fitness))
        .expect("population is non-empty")
}

pub fn ga_optimize<O: Objective + ?Sized>(
    objective: &O,
    bounds: &SearchBounds,
    params: &OptimizerParams,
) -> Result<OptimizationResult> {
    GeneticAlgorithm::new(objective, bounds, params)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn mutation_frequency_matches_rate() {
        let bounds = SearchBounds::uniform(100, -1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut genome = vec![0.0; 100];
        let mutated: usize = (0..1000)
            .map(|_| uniform_mutation(&mut genome, &bounds, 0.25, &mut rng))
            .sum();
        let freq = mutated as f64 / 100_000.0;
        assert!((freq - 0.25).abs() < 0.01, "frequency {freq}");
        assert!(bounds.contains(&genome));
    }

    #[test]
    fn crossover_only_swaps() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (c1, c2) = uniform_crossover(&[1.0; 50], &[2.0; 50], 0.5, &mut rng);
        for d in 0..50 {
            assert_eq!(c1[d] + c2[d], 3.0);
        }
        let (c1, _) = uniform_crossover(&[1.0; 5], &[2.0; 5], 0.0, &mut rng);
        assert_eq!(c1, vec![1.0; 5]);
    }

    #[test]
    fn closed_population_without_variation() {
        let bounds = SearchBounds::uniform(3, -5.0, 5.0).unwrap();
        let params = OptimizerParams {
            population_size: 10,
            max_iterations: 30,
            seed: 5,
            ga_crossover_rate: 0.0,
            ga_mutation_rate: 0.0,
            ..OptimizerParams::default()
        };
        let mut ga = GeneticAlgorithm::new(&sphere, &bounds, &params).unwrap();
        let initial: Vec<Vec<f64>> = ga.population().iter().map(|a| a.position.clone()).collect();
        let mut last = ga.best().fitness;
        for _ in 0..30 {
            ga.generation();
            assert!(ga.best().fitness <= last);
            last = ga.best().fitness;
            assert!(ga.population().iter().all(|a| initial.contains(&a.position)));
        }
    }

    #[test]
    fn elite_survives() {
        let bounds = SearchBounds::uniform(2, -5.0, 5.0).unwrap();
        let params = OptimizerParams {
            population_size: 6,
            max_iterations: 5,
            seed: 1,
            ..OptimizerParams::default()
        };
        let mut ga = GeneticAlgorithm::new(&sphere, &bounds, &params).unwrap();
        let elite = ga.best().clone();
        ga.generation();
        assert!(ga.population().contains(&elite));
    }
}
