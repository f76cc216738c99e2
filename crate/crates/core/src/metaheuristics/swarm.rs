use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    clamp_in_place, sanitize, Agent, Objective, OptimError, OptimizationResult, OptimizationTrace,
    OptimizerParams, Result, SearchBounds,
};

/// Random coefficients of one wolf's move: `r1`/`r2` vectors per leader.
#[derive(Debug, Clone, PartialEq)]
pub struct GwoDraws {
    pub r1: [Vec<f64>; 3],
    pub r2: [Vec<f64>; 3],
}

impl GwoDraws {
    fn draw(dim: usize, rng: &mut impl Rng) -> GwoDraws {
        let mut v = || (0..dim).map(|_| rng.random::<f64>()).collect::<Vec<_>>();
        let (a1, c1, a2, c2, a3, c3) = (v(), v(), v(), v(), v(), v());
        GwoDraws {
            r1: [a1, a2, a3],
            r2: [c1, c2, c3],
        }
    }
}

/// Grey-wolf hunting move: the mean of the three positions
/// `X_j = L_j - A_j * |C_j * L_j - X|` with `A = 2a r1 - a` and `C = 2 r2`.
pub fn gwo_move(x: &[f64], leaders: [&[f64]; 3], draws: &GwoDraws, a: f64) -> Vec<f64> {
    (0..x.len())
        .map(|d| {
            let mut sum = 0.0;
            for j in 0..3 {
                let big_a = 2.0 * a * draws.r1[j][d] - a;
                let big_c = 2.0 * draws.r2[j][d];
                let dist = (big_c * leaders[j][d] - x[d]).abs();
                sum += leaders[j][d] - big_a * dist;
            }
            sum / 3.0
        })
        .collect()
}

/// Moves every agent by [`gwo_move`] toward `leaders`, then clamps.
pub fn gwo_step(
    population: &mut [Vec<f64>],
    leaders: [&[f64]; 3],
    a: f64,
    bounds: &SearchBounds,
    rng: &mut impl Rng,
) -> Result<()> {
    if population.len() < 4 {
        return Err(OptimError::PopulationTooSmall(population.len()));
    }
    for x in population.iter_mut() {
        let draws = GwoDraws::draw(bounds.dim(), rng);
        *x = gwo_move(x, leaders, &draws, a);
        clamp_in_place(x, bounds);
    }
    Ok(())
}

/// Per-whale random draws: `r1`/`r2` vectors giving `A = 2a r1 - a` and
/// `C = 2 r2`, the branch draw `p` and the spiral parameter `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct WoaDraws {
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
    pub p: f64,
    pub l: f64,
}

impl WoaDraws {
    fn draw(dim: usize, rng: &mut impl Rng) -> WoaDraws {
        let r1 = (0..dim).map(|_| rng.random()).collect();
        let r2 = (0..dim).map(|_| rng.random()).collect();
        WoaDraws {
            r1,
            r2,
            p: rng.random(),
            l: rng.random_range(-1.0..=1.0),
        }
    }
}

/// Whale move. With `p < 0.5` the whale encircles `best` when `|A| < 1`
/// (Euclidean norm) and otherwise searches around `random_agent`; with
/// `p >= 0.5` it follows the logarithmic spiral `|X* - X| e^{bl} cos(2 pi l) + X*`.
pub fn woa_move(x: &[f64], best: &[f64], random_agent: &[f64], draws: &WoaDraws, a: f64, spiral_b: f64) -> Vec<f64> {
    let big_a: Vec<f64> = draws.r1.iter().map(|r| 2.0 * a * r - a).collect();
    if draws.p < 0.5 {
        let norm = big_a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let target = if norm < 1.0 { best } else { random_agent };
        (0..x.len())
            .map(|d| target[d] - big_a[d] * (2.0 * draws.r2[d] * target[d] - x[d]).abs())
            .collect()
    } else {
        let factor = (spiral_b * draws.l).exp() * (2.0 * PI * draws.l).cos();
        (0..x.len())
            .map(|d| (best[d] - x[d]).abs() * factor + best[d])
            .collect()
    }
}

/// Moves every agent by [`woa_move`], then clamps. The exploration target
/// is a uniformly chosen agent other than the one moving.
pub fn woa_step(
    population: &mut [Vec<f64>],
    best: &[f64],
    a: f64,
    spiral_b: f64,
    bounds: &SearchBounds,
    rng: &mut impl Rng,
) -> Result<()> {
    let n = population.len();
    if n < 2 {
        return Err(OptimError::PopulationTooSmall(n));
    }
    let before: Vec<Vec<f64>> = population.to_vec();
    for (i, x) in population.iter_mut().enumerate() {
        let draws = WoaDraws::draw(bounds.dim(), rng);
        let mut r = rng.random_range(0..n - 1);
        if r >= i {
            r += 1;
        }
        *x = woa_move(x, best, &before[r], &draws, a, spiral_b);
        clamp_in_place(x, bounds);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Gwo,
    Woa,
}

/// Which update rule(s) a [`SwarmOptimizer`] applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwarmMode {
    /// A fair coin per iteration picks the whale or the wolf update.
    RandomSwitch,
    GwoOnly,
    WoaOnly,
}

/// Shared-population driver for GWO, WOA and their random switcher.
///
/// The three leaders are the best distinct positions evaluated so far; the
/// first of them doubles as the whale update's best solution `X*`.
pub struct SwarmOptimizer<'o, O: Objective + ?Sized> {
    objective: &'o O,
    bounds: SearchBounds,
    params: OptimizerParams,
    rng: ChaCha8Rng,
    population: Vec<Agent>,
    leaders: Vec<Agent>,
    iteration: usize,
    trace: OptimizationTrace,
}

impl<'o, O: Objective + ?Sized> SwarmOptimizer<'o, O> {
    /// Random initial population drawn uniformly from `bounds`.
    pub fn new(objective: &'o O, bounds: &SearchBounds, params: &OptimizerParams) -> Result<Self> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let initial = (0..params.population_size).map(|_| bounds.sample(&mut rng)).collect();
        Self::start(objective, bounds, params, rng, initial)
    }

    /// Starts from the given positions (clamped into `bounds`).
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
        let mut opt = SwarmOptimizer {
            objective,
            bounds: bounds.clone(),
            params: params.clone(),
            rng,
            population: Vec::new(),
            leaders: Vec::new(),
            iteration: 0,
            trace: OptimizationTrace::default(),
        };
        opt.population = opt.evaluate(initial);
        opt.update_leaders();
        Ok(opt)
    }

    fn evaluate(&mut self, positions: Vec<Vec<f64>>) -> Vec<Agent> {
        let fitness = self.objective.evaluate_batch(&positions);
        self.trace.evaluations += positions.len();
        positions
            .into_iter()
            .zip(fitness)
            .map(|(position, f)| Agent {
                position,
                fitness: sanitize(f),
            })
            .collect()
    }

    fn update_leaders(&mut self) {
        let mut pool: Vec<&Agent> = self.leaders.iter().chain(&self.population).collect();
        pool.sort_by(|a, b| a.fitness.total_cmp(&b.fitness));
        let mut leaders: Vec<Agent> = Vec::with_capacity(3);
        for agent in pool {
            if leaders.len() == 3 {
                break;
            }
            if leaders.iter().all(|l| l.position != agent.position) {
                leaders.push(agent.clone());
            }
        }
        while leaders.len() < 3 {
            leaders.push(leaders[leaders.len() - 1].clone());
        }
        self.leaders = leaders;
    }

    /// `a` for the current iteration, falling linearly from 2 toward 0.
    pub fn a(&self) -> f64 {
        2.0 * (1.0 - self.iteration as f64 / self.params.max_iterations as f64)
    }

    pub fn population(&self) -> &[Agent] {
        &self.population
    }

    /// Alpha, beta and delta, best first.
    pub fn leaders(&self) -> &[Agent] {
        &self.leaders
    }

    pub fn best(&self) -> &Agent {
        &self.leaders[0]
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn trace(&self) -> &OptimizationTrace {
        &self.trace
    }

    /// Runs one iteration and reports which update rule was applied.
    pub fn iterate(&mut self, mode: SwarmMode) -> Branch {
        let a = self.a();
        let branch = match mode {
            SwarmMode::GwoOnly => Branch::Gwo,
            SwarmMode::WoaOnly => Branch::Woa,
            SwarmMode::RandomSwitch => {
                if self.rng.random::<f64>() < 0.5 {
                    Branch::Woa
                } else {
                    Branch::Gwo
                }
            }
        };
        let mut positions: Vec<Vec<f64>> = self.population.iter().map(|a| a.position.clone()).collect();
        match branch {
            Branch::Woa => {
                let best = self.leaders[0].position.clone();
                woa_step(&mut positions, &best, a, self.params.spiral_b, &self.bounds, &mut self.rng)
                    .expect("population size validated");
                self.trace.woa_iterations += 1;
            }
            Branch::Gwo => {
                let l = &self.leaders;
                let leaders = [&l[0].position[..], &l[1].position[..], &l[2].position[..]];
                gwo_step(&mut positions, leaders, a, &self.bounds, &mut self.rng).expect("population size validated");
                self.trace.gwo_iterations += 1;
            }
        }
        self.population = self.evaluate(positions);
        self.update_leaders();
        self.iteration += 1;
        self.trace.best_fitness_per_iteration.push(self.leaders[0].fitness);
        branch
    }

    pub fn run(mut self, mode: SwarmMode) -> Result<OptimizationResult> {
        while self.iteration < self.params.max_iterations {
            self.iterate(mode);
        }
        self.finish()
    }

    pub fn finish(mut self) -> Result<OptimizationResult> {
        let best = self.leaders[0].clone();
        if !best.fitness.is_finite() {
            return Err(OptimError::DegenerateObjective);
        }
        self.trace.best_position = best.position.clone();
        Ok(OptimizationResult {
            best_position: best.position,
            best_fitness: best.fitness,
            trace: self.trace,
        })
    }
}

/// Random-switcher hybrid: each iteration a single draw `eps` selects the
/// whale update (`eps < 0.5`) or the grey-wolf update for the whole population.
pub fn rs_gwo_woa<O: Objective + ?Sized>(
    objective: &O,
    bounds: &SearchBounds,
    params: &OptimizerParams,
) -> Result<OptimizationResult> {
    SwarmOptimizer::new(objective, bounds, params)?.run(SwarmMode::RandomSwitch)
}

pub fn gwo<O: Objective + ?Sized>(
    objective: &O,
    bounds: &SearchBounds,
    params: &OptimizerParams,
) -> Result<OptimizationResult> {
    SwarmOptimizer::new(objective, bounds, params)?.run(SwarmMode::GwoOnly)
}

pub fn woa<O: Objective + ?Sized>(
    objective: &O,
    bounds: &SearchBounds,
    params: &OptimizerParams,
) -> Result<OptimizationResult> {
    SwarmOptimizer::new(objective, bounds, params)?.run(SwarmMode::WoaOnly)
}
