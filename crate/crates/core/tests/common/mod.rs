//! Random instance generators shared by the integration tests.
#![allow(dead_code)]

use paretopool::centralized::{CentralMarket, Policyholder};
use paretopool::posolver::AgentSpec;
use paretopool::{Distortion, DistortionSet, EmpiricalSpace, LossProfile};
use proptest::prelude::*;
use rand::Rng;

pub fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Weights normalized to one, the last absorbing the rounding.
pub fn normalized(raw: &[f64]) -> EmpiricalSpace {
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let head: f64 = w[..w.len() - 1].iter().sum();
    let last = w.len() - 1;
    w[last] = (1.0 - head).max(0.0);
    EmpiricalSpace::new(w).expect("normalized weights")
}

pub fn uniform(m: usize) -> EmpiricalSpace {
    EmpiricalSpace::uniform(m).unwrap()
}

pub fn endowment(values: &[f64]) -> LossProfile {
    LossProfile::endowment(values.to_vec()).unwrap()
}

// ---- seeded generators ----

pub fn random_space(rng: &mut impl Rng, m: usize) -> EmpiricalSpace {
    let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..1.0)).collect();
    normalized(&raw)
}

/// Losses on a coarse grid half the time so that ties between states occur.
pub fn random_losses(rng: &mut impl Rng, m: usize, lo: f64, hi: f64) -> Vec<f64> {
    let coarse = rng.gen_bool(0.5);
    (0..m)
        .map(|_| {
            let x = rng.gen_range(lo..hi);
            if coarse {
                x.round()
            } else {
                x
            }
        })
        .collect()
}

pub fn random_distortion(rng: &mut (impl Rng + ?Sized)) -> Distortion {
    match rng.gen_range(0..3) {
        0 => Distortion::power(rng.gen_range(0.2..1.0)).unwrap(),
        1 => Distortion::prelec1(rng.gen_range(0.2..0.95)).unwrap(),
        _ => Distortion::kahneman_tversky(rng.gen_range(0.3..1.0)).unwrap(),
    }
}

pub fn random_agents(
    rng: &mut impl Rng,
    n: usize,
    m: usize,
    common_belief: bool,
    candidates: impl Fn(&mut dyn rand::RngCore) -> DistortionSet,
) -> Vec<AgentSpec> {
    let shared = random_space(rng, m);
    (0..n)
        .map(|i| {
            let belief = if common_belief { shared.clone() } else { random_space(rng, m) };
            let x = endowment(&random_losses(rng, m, 0.0, 10.0));
            AgentSpec::new(format!("agent{i}"), belief, candidates(rng), x).unwrap()
        })
        .collect()
}

pub fn single(rng: &mut dyn rand::RngCore) -> DistortionSet {
    DistortionSet::singleton(random_distortion(rng))
}

pub fn random_market(rng: &mut impl Rng, n: usize, m: usize) -> CentralMarket {
    let space = random_space(rng, m);
    let holders = (0..n)
        .map(|i| Policyholder {
            label: format!("p{i}"),
            distortion: random_distortion(rng),
            endowment: endowment(&random_losses(rng, m, 0.0, 10.0)),
        })
        .collect();
    CentralMarket::new(space, holders, rng.gen_range(0.05..0.9)).unwrap()
}

// ---- proptest strategies ----

pub fn arb_weights(max_states: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, 1..=max_states)
}

pub fn arb_space(max_states: usize) -> impl Strategy<Value = EmpiricalSpace> {
    arb_weights(max_states).prop_map(|w| normalized(&w))
}

/// A space together with a profile on it.
pub fn arb_space_profile(max_states: usize, lo: f64, hi: f64) -> impl Strategy<Value = (EmpiricalSpace, Vec<f64>)> {
    arb_weights(max_states).prop_flat_map(move |w| {
        let m = w.len();
        (Just(normalized(&w)), prop::collection::vec(lo..hi, m))
    })
}

pub fn arb_distortion() -> impl Strategy<Value = Distortion> + Clone {
    prop_oneof![
        (0.1f64..2.0).prop_map(|g| Distortion::power(g).unwrap()),
        (0.05f64..0.99).prop_map(|a| Distortion::prelec1(a).unwrap()),
        (0.05f64..0.99, 0.2f64..3.0).prop_map(|(a, b)| Distortion::prelec2(a, b).unwrap()),
        (0.3f64..1.0).prop_map(|g| Distortion::kahneman_tversky(g).unwrap()),
        (0.05f64..0.99).prop_map(|a| Distortion::tvar(a).unwrap()),
        Just(Distortion::identity()),
    ]
}

/// Concave-ish families used for agents.
pub fn arb_agent_distortion() -> impl Strategy<Value = Distortion> + Clone {
    prop_oneof![
        (0.2f64..1.0).prop_map(|g| Distortion::power(g).unwrap()),
        (0.2f64..0.95).prop_map(|a| Distortion::prelec1(a).unwrap()),
        (0.3f64..1.0).prop_map(|g| Distortion::kahneman_tversky(g).unwrap()),
    ]
}
