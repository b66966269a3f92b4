//! Brute-force oracles against the fast solvers on small random instances.
//!
//! cargo run --release --example oracle_check

use parity_planner::instances::{random_instance, RandomSpec};
use parity_planner::oracle::{oracle_monotone, oracle_step, oracle_tvd};
use parity_planner::{solve_monotone, solve_step, solve_tvd, transform, MonotoneFunction, ObjectiveSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> parity_planner::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let spec = RandomSpec::default();
    let (mut step_gap, mut mono_ratio, mut tvd_ratio) = (0.0_f64, 1.0_f64, 1.0_f64);

    for trial in 0..30 {
        let n = 3 + trial % 4;
        let k = 1 + trial % 2;
        let input = random_instance(&mut rng, n, k, ObjectiveSpec::Tvd, &spec);
        let t = transform(&input)?;

        let exact = oracle_step(&t, k, 0.9)?.value;
        let fast = solve_step(&t, k, 0.9)?.objective_value;
        step_gap = step_gap.max((exact - fast).abs());

        let f = MonotoneFunction::linear_cap(0.9)?;
        let opt = oracle_monotone(&t, k, &f)?.value;
        let approx = solve_monotone(&t, k, &f)?.objective_value;
        mono_ratio = mono_ratio.min(approx / opt);

        let opt = oracle_tvd(&t, k)?.value;
        let got = solve_tvd(&t, k)?.objective_value;
        if opt > 1e-12 {
            tvd_ratio = tvd_ratio.max(got / opt);
        }
    }
    println!("step: largest |solver - oracle| = {step_gap:.2e}");
    println!("monotone: worst solver / oracle = {mono_ratio:.4} (guarantee 0.5)");
    println!("tvd: worst solver / oracle = {tvd_ratio:.4} (guarantee 2.0)");
    Ok(())
}
