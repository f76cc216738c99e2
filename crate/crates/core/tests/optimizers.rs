mod common;

use std::sync::Mutex;

use common::{rastrigin, sphere};
use epiforecast::metaheuristics::{
    ga_optimize, gwo, optimize, rs_gwo_woa, woa, Algorithm, Branch, OptimError, OptimizerParams, SearchBounds,
    SwarmMode, SwarmOptimizer,
};
use proptest::prelude::*;

/// Records every position handed to the objective.
struct Recorder<F> {
    f: F,
    seen: Mutex<Vec<(Vec<f64>, f64)>>,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Recorder<F> {
    fn new(f: F) -> Self {
        Recorder {
            f,
            seen: Mutex::new(Vec::new()),
        }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> epiforecast::metaheuristics::Objective for Recorder<F> {
    fn evaluate(&self, x: &[f64]) -> f64 {
        let v = (self.f)(x);
        self.seen.lock().unwrap().push((x.to_vec(), v));
        v
    }
}

fn params(pop: usize, iters: usize, seed: u64) -> OptimizerParams {
    OptimizerParams {
        population_size: pop,
        max_iterations: iters,
        seed,
        ..OptimizerParams::default()
    }
}

#[test]
fn sphere_seed_seven_converges() {
    let bounds = SearchBounds::uniform(5, -5.12, 5.12).unwrap();
    let r = rs_gwo_woa(&sphere, &bounds, &params(30, 200, 7)).unwrap();
    assert!(r.best_fitness < 1e-3, "{}", r.best_fitness);
    assert_eq!(r.trace.best_fitness_per_iteration.len(), 200);
    assert_eq!(r.trace.gwo_iterations + r.trace.woa_iterations, 200);
}

#[test]
fn single_iteration_matches_enumeration() {
    let bounds = SearchBounds::uniform(2, -3.0, 3.0).unwrap();
    let initial = vec![vec![1.0, 1.0], vec![-2.0, 0.5], vec![0.25, -0.75], vec![2.5, -2.5]];
    for seed in 0..20 {
        let obj = Recorder::new(|x: &[f64]| (x[0] - 0.3).powi(2) + 2.0 * (x[1] + 0.1).powi(2));
        let opt = SwarmOptimizer::with_population(&obj, &bounds, &params(4, 1, seed), initial.clone()).unwrap();
        let r = opt.run(SwarmMode::RandomSwitch).unwrap();
        let seen = obj.seen.into_inner().unwrap();
        assert_eq!(seen.len(), 8);
        assert_eq!(r.trace.evaluations, 8);
        let (pos, fit) = seen
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .cloned()
            .unwrap();
        assert_eq!(r.best_fitness, fit);
        assert_eq!(r.best_position, pos);
    }
}

#[test]
fn every_evaluated_position_is_feasible() {
    let bounds = SearchBounds::new(vec![-1.0, 0.0, 2.0], vec![1.0, 0.5, 9.0]).unwrap();
    for algorithm in [Algorithm::RsGwoWoa, Algorithm::Gwo, Algorithm::Woa, Algorithm::Ga] {
        let obj = Recorder::new(|x: &[f64]| rastrigin(x));
        optimize(algorithm, &obj, &bounds, &params(8, 60, 3)).unwrap();
        let seen = obj.seen.into_inner().unwrap();
        assert!(seen.iter().all(|(p, _)| bounds.contains(p)), "{algorithm}");
    }
}

#[test]
fn identical_seeds_give_identical_traces() {
    let bounds = SearchBounds::uniform(4, -5.12, 5.12).unwrap();
    for algorithm in [Algorithm::RsGwoWoa, Algorithm::Gwo, Algorithm::Woa, Algorithm::Ga] {
        let a = optimize(algorithm, &rastrigin, &bounds, &params(12, 40, 99)).unwrap();
        let b = optimize(algorithm, &rastrigin, &bounds, &params(12, 40, 99)).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.trace.best_fitness_per_iteration), bits(&b.trace.best_fitness_per_iteration));
        assert_eq!(bits(&a.best_position), bits(&b.best_position));
        let c = optimize(algorithm, &rastrigin, &bounds, &params(12, 40, 100)).unwrap();
        assert_ne!(bits(&a.trace.best_fitness_per_iteration), bits(&c.trace.best_fitness_per_iteration));
    }
}

#[test]
fn both_branches_run_over_a_thousand_iterations() {
    let bounds = SearchBounds::uniform(2, -1.0, 1.0).unwrap();
    let r = rs_gwo_woa(&sphere, &bounds, &params(4, 1000, 11)).unwrap();
    assert!(r.trace.gwo_iterations > 0);
    assert!(r.trace.woa_iterations > 0);
    assert_eq!(r.trace.gwo_iterations + r.trace.woa_iterations, 1000);
}

#[test]
fn leaders_are_ordered_and_beat_the_pack() {
    let bounds = SearchBounds::uniform(3, -5.12, 5.12).unwrap();
    let mut opt = SwarmOptimizer::new(&rastrigin, &bounds, &params(10, 100, 4)).unwrap();
    let mut branches = [0usize; 2];
    for _ in 0..100 {
        match opt.iterate(SwarmMode::RandomSwitch) {
            Branch::Gwo => branches[0] += 1,
            Branch::Woa => branches[1] += 1,
        }
        let l = opt.leaders();
        assert!(l[0].fitness <= l[1].fitness && l[1].fitness <= l[2].fitness);
        // agents sitting on a leader's position are that leader, not an omega
        let omegas = opt
            .population()
            .iter()
            .filter(|w| l.iter().all(|x| x.position != w.position));
        for w in omegas {
            assert!(l[2].fitness <= w.fitness);
        }
    }
    assert_eq!(branches[0], opt.trace().gwo_iterations);
}

#[test]
fn nan_objective_is_treated_as_worst() {
    let bounds = SearchBounds::uniform(2, -2.0, 2.0).unwrap();
    // NaN on half the box: the best must come from the other half
    let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { sphere(x) };
    let r = rs_gwo_woa(&f, &bounds, &params(10, 30, 1)).unwrap();
    assert!(r.best_fitness.is_finite());
    assert!(r.best_position[0] >= 0.0);

    let all_nan = |_: &[f64]| f64::NAN;
    for algorithm in [Algorithm::RsGwoWoa, Algorithm::Ga] {
        let err = optimize(algorithm, &all_nan, &bounds, &params(5, 3, 1)).unwrap_err();
        assert!(matches!(err, OptimError::DegenerateObjective));
    }
}

#[test]
fn small_population_rejected() {
    let bounds = SearchBounds::unit(2);
    assert!(matches!(
        rs_gwo_woa(&sphere, &bounds, &params(3, 10, 0)),
        Err(OptimError::PopulationTooSmall(3))
    ));
}

#[test]
fn single_rule_optimizers_solve_sphere() {
    let bounds = SearchBounds::uniform(5, -5.12, 5.12).unwrap();
    for seed in 0..5 {
        assert!(gwo(&sphere, &bounds, &params(30, 200, seed)).unwrap().best_fitness < 1e-3);
        assert!(woa(&sphere, &bounds, &params(30, 200, seed)).unwrap().best_fitness < 1e-3);
    }
}

#[test]
fn ga_sphere_three_dims() {
    let bounds = SearchBounds::uniform(3, -5.12, 5.12).unwrap();
    for seed in 0..5 {
        let r = ga_optimize(&sphere, &bounds, &params(30, 300, seed)).unwrap();
        assert!(r.best_fitness < 1e-2, "seed {seed}: {}", r.best_fitness);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn best_so_far_never_increases(
        seed in any::<u64>(),
        pop in 4usize..12,
        iters in 1usize..40,
        algo in 0usize..4,
        shift in -2.0f64..2.0,
    ) {
        let algorithm = [Algorithm::RsGwoWoa, Algorithm::Gwo, Algorithm::Woa, Algorithm::Ga][algo];
        let bounds = SearchBounds::uniform(3, -5.0, 5.0).unwrap();
        let f = move |x: &[f64]| rastrigin(&x.iter().map(|v| v - shift).collect::<Vec<_>>());
        let r = optimize(algorithm, &f, &bounds, &params(pop, iters, seed)).unwrap();
        let t = &r.trace.best_fitness_per_iteration;
        prop_assert_eq!(t.len(), iters);
        prop_assert!(t.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(*t.last().unwrap(), r.best_fitness);
        prop_assert!(bounds.contains(&r.best_position));
    }
}
