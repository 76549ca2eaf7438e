//! Trains every algorithm on the given seeds and prints autonomous success and
//! intervention totals. Usage: `cargo run --example compare -- [seeds...]`

use std::time::Instant;

use thrifty_core::engine::{
    eval_rng, evaluate, evaluate_with_interventions, run, Algorithm, RunConfig,
};
use thrifty_core::env::BottleneckEnv;

fn main() -> thrifty_core::Result<()> {
    env_logger::init();
    let seeds: Vec<u64> = std::env::args()
        .skip(1)
        .filter_map(|s| s.parse().ok())
        .collect();
    let seeds = if seeds.is_empty() { vec![0] } else { seeds };
    for seed in seeds {
        for alg in [
            Algorithm::Bc,
            Algorithm::Thrifty,
            Algorithm::Safedagger,
            Algorithm::Lazydagger,
            Algorithm::Hgdagger,
        ] {
            let config = RunConfig {
                algorithm: alg,
                seed,
                ..RunConfig::default()
            };
            let t0 = Instant::now();
            let result = run(&config)?;
            let env = BottleneckEnv::new(config.env.clone())?;
            let auto = evaluate(&result.policy, &env, 100, None, &mut eval_rng(seed))?;
            let aided = if alg == Algorithm::Thrifty {
                evaluate_with_interventions(&result, 20, &mut eval_rng(seed + 1))?.fraction()
            } else {
                "-".into()
            };
            println!(
                "seed {seed} {:<11} auto {:>3}% aided {aided:>5} episodes {:>3} T_ints {:>4} T_acts_h {:>5} switch_frac {:.4} {:.1}s",
                alg.name(),
                (auto.success_rate() * 100.0).round(),
                result.episodes.len(),
                result.metrics.total_ints,
                result.metrics.total_acts_h,
                result.switch_trigger_fraction(),
                t0.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
