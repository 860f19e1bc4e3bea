//! Main solvers against the brute-force verifiers on small seeded instances.

mod common;

use paretopool::oracle::{brute_force_choquet, brute_force_po, brute_force_robust, GridSpec};
use paretopool::posolver::{solve_fixed, solve_robust, RobustOptions};
use paretopool::riskmeasure::choquet;
use paretopool::{DistortionSet, LossProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{random_agents, random_distortion, random_losses, random_space, single};

const INSTANCES: u64 = 200;

#[test]
fn choquet_agrees() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..INSTANCES {
        let m = rng.gen_range(1..=20);
        let space = random_space(&mut rng, m);
        let z = LossProfile::new(random_losses(&mut rng, m, -10.0, 10.0)).unwrap();
        let d = random_distortion(&mut rng);
        let fast = choquet(&space, &z, &d).unwrap();
        let slow = brute_force_choquet(&space, &z, &d).unwrap();
        assert!((fast - slow).abs() <= 1e-6, "{fast} vs {slow}");
    }
}

#[test]
fn fixed_solver_agrees() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..INSTANCES {
        let (n, m) = (rng.gen_range(1..=3), rng.gen_range(1..=4));
        let common = rng.gen_bool(0.5);
        let agents = random_agents(&mut rng, n, m, common, single);
        let value = solve_fixed(&agents).unwrap().value;
        let oracle = brute_force_po(&agents, &GridSpec::extreme()).unwrap();
        assert!((value - oracle).abs() <= 1e-6, "{value} vs {oracle}");
    }
}

#[test]
fn robust_solver_agrees() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..INSTANCES {
        let (n, m) = (rng.gen_range(1..=3), rng.gen_range(1..=4));
        let common = rng.gen_bool(0.5);
        let agents = random_agents(&mut rng, n, m, common, |r| {
            let k = r.gen_range(1..=3);
            DistortionSet::new((0..k).map(|_| random_distortion(r)).collect()).unwrap()
        });
        let solution = solve_robust(&agents, RobustOptions::default()).unwrap();
        assert!(solution.exhaustive);
        let oracle = brute_force_robust(&agents, &GridSpec::extreme()).unwrap();
        assert!((solution.value - oracle).abs() <= 1e-6, "{} vs {oracle}", solution.value);
    }
}
