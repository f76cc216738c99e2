//! Convergence pilot over 20 fixed seeds for the benchmark thresholds used
//! in the optimizer tests.
//!
//!     cargo run --release --example pilot_optimizers

use epiforecast::metaheuristics::benchmarks::Benchmark;
use epiforecast::metaheuristics::{optimize, Algorithm, OptimizerParams};

fn main() {
    let cases = [
        (Algorithm::RsGwoWoa, Benchmark::Sphere, 5, 30, 200),
        (Algorithm::RsGwoWoa, Benchmark::Rastrigin, 5, 30, 200),
        (Algorithm::Gwo, Benchmark::Sphere, 5, 30, 200),
        (Algorithm::Woa, Benchmark::Sphere, 5, 30, 200),
        (Algorithm::Ga, Benchmark::Sphere, 3, 30, 300),
    ];
    for (algorithm, bench, dim, pop, iters) in cases {
        let bounds = bench.default_bounds(dim);
        let objective = |x: &[f64]| bench.evaluate(x);
        let mut best = Vec::new();
        for seed in 0..20 {
            let params = OptimizerParams {
                population_size: pop,
                max_iterations: iters,
                seed,
                ..OptimizerParams::default()
            };
            best.push(optimize(algorithm, &objective, &bounds, &params).unwrap().best_fitness);
        }
        let worst = best.iter().cloned().fold(f64::MIN, f64::max);
        let median = {
            let mut s = best.clone();
            s.sort_by(f64::total_cmp);
            s[10]
        };
        println!(
            "{algorithm:>10} {:>10} d={dim} pop={pop} iters={iters}: median {median:.3e} worst {worst:.3e}",
            bench.name()
        );
        println!("    {:?}", best.iter().map(|b| format!("{b:.2e}")).collect::<Vec<_>>());
    }
}
