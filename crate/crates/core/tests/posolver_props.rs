mod common;

use paretopool::oracle::{brute_force_po, GridSpec};
use paretopool::posolver::{
    aggregate_loss, settle, solve_fixed, welfare_report, AgentSpec, WeightRule,
};
use paretopool::{Distortion, DistortionSet};
use proptest::prelude::*;

use common::{arb_agent_distortion, endowment, normalized};

/// Agents on a shared state count; beliefs are common when `common` holds.
fn arb_market(
    max_agents: usize,
    max_states: usize,
    dist: impl Strategy<Value = Distortion> + Clone + 'static,
) -> impl Strategy<Value = Vec<AgentSpec>> {
    (1..=max_agents, 1..=max_states, any::<bool>()).prop_flat_map(move |(n, m, common)| {
        let agent = (
            prop::collection::vec(0.05f64..1.0, m),
            prop::collection::vec(0.0f64..10.0, m),
            dist.clone(),
        );
        (prop::collection::vec(agent, n), Just(common))
            .prop_map(|(raw, common)| {
                let shared = normalized(&raw[0].0);
                raw.into_iter()
                    .enumerate()
                    .map(|(i, (w, x, d))| {
                        let belief = if common { shared.clone() } else { normalized(&w) };
                        AgentSpec::new(format!("a{i}"), belief, DistortionSet::singleton(d), endowment(&x))
                            .unwrap()
                    })
                    .collect()
            })
    })
}

fn integer_losses(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0u32..20).prop_map(f64::from), m)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn allocation_is_feasible(agents in arb_market(4, 8, arb_agent_distortion())) {
        let alloc = solve_fixed(&agents).unwrap().allocation;
        alloc.check().unwrap();
        let s = aggregate_loss(&agents).unwrap();
        let gain = welfare_report(&agents, &alloc).unwrap().aggregate_gain;
        let settled = if gain >= 0.0 { settle(&agents, &alloc, &WeightRule::Equal).unwrap() } else { alloc };
        for (w, total) in s.values().iter().enumerate() {
            let parts: f64 = (0..agents.len()).map(|i| settled.position(i, &s).values()[w]).sum();
            prop_assert!((parts - total).abs() <= 1e-9 * total.max(1.0));
        }
    }

    #[test]
    fn retentions_are_monotone_and_lipschitz(agents in arb_market(4, 8, arb_agent_distortion())) {
        let alloc = solve_fixed(&agents).unwrap().allocation;
        for i in 0..agents.len() {
            let values: Vec<f64> = alloc.breakpoints.iter().map(|&b| alloc.retained(i, b)).collect();
            for (k, w) in values.windows(2).enumerate() {
                let width = alloc.breakpoints[k + 1] - alloc.breakpoints[k];
                prop_assert!(w[1] >= w[0] - 1e-12);
                prop_assert!(w[1] - w[0] <= width + 1e-12);
            }
        }
    }

    #[test]
    fn matches_oracle(agents in arb_market(3, 4, arb_agent_distortion())) {
        let value = solve_fixed(&agents).unwrap().value;
        let oracle = brute_force_po(&agents, &GridSpec::extreme()).unwrap();
        prop_assert!((value - oracle).abs() <= 1e-6);
    }

    #[test]
    fn layer_perturbation_never_helps(agents in arb_market(3, 4, arb_agent_distortion()), eps in 0.001f64..0.5) {
        let solution = solve_fixed(&agents).unwrap();
        let s = aggregate_loss(&agents).unwrap();
        let total = |alloc: &paretopool::posolver::LayerAllocation| -> f64 {
            agents.iter().enumerate().map(|(i, a)| a.risk(&alloc.risky_part(i, &s)).unwrap()).sum()
        };
        let base = total(&solution.allocation);
        for k in 0..solution.allocation.layer_count() {
            let from = solution.allocation.slopes[k].iter().position(|x| *x == 1.0).unwrap();
            for to in (0..agents.len()).filter(|&j| j != from) {
                let mut moved = solution.allocation.clone();
                moved.slopes[k][from] -= eps;
                moved.slopes[k][to] += eps;
                prop_assert!(total(&moved) >= base - 1e-9);
            }
        }
    }

    #[test]
    fn scale_covariance(agents in arb_market(3, 6, arb_agent_distortion()), lambda in 0.1f64..10.0) {
        let scaled: Vec<AgentSpec> = agents
            .iter()
            .map(|a| AgentSpec { endowment: a.endowment.scaled(lambda), ..a.clone() })
            .collect();
        let base = solve_fixed(&agents).unwrap();
        let big = solve_fixed(&scaled).unwrap();
        prop_assert!((big.value - lambda * base.value).abs() <= 1e-9 * big.value.abs().max(1.0));
        let s = aggregate_loss(&agents).unwrap();
        let s_big = aggregate_loss(&scaled).unwrap();
        for i in 0..agents.len() {
            let g = base.allocation.risky_part(i, &s);
            let g_big = big.allocation.risky_part(i, &s_big);
            for (a, b) in g.values().iter().zip(g_big.values()) {
                prop_assert!((b - lambda * a).abs() <= 1e-9 * b.abs().max(1.0));
            }
        }
    }

    /// With a common first parameter the largest second parameter has the
    /// lowest distorted survival everywhere and carries every layer.
    #[test]
    fn prelec2_max_beta_takes_all(
        alpha in 0.1f64..0.95,
        betas in prop::collection::vec(0.2f64..3.0, 2..4),
        raw in prop::collection::vec(0.05f64..1.0, 5),
        losses in prop::collection::vec(integer_losses(5), 3),
    ) {
        let space = normalized(&raw);
        let agents: Vec<AgentSpec> = betas
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                let d = Distortion::prelec2(alpha, b).unwrap();
                AgentSpec::new(format!("a{i}"), space.clone(), DistortionSet::singleton(d), endowment(&losses[i])).unwrap()
            })
            .collect();
        let top = betas.iter().enumerate().fold(0, |best, (i, b)| if *b > betas[best] { i } else { best });
        prop_assume!(betas.iter().filter(|b| **b == betas[top]).count() == 1);
        let alloc = solve_fixed(&agents).unwrap().allocation;
        for row in &alloc.slopes {
            prop_assert_eq!(row[top], 1.0);
        }
    }

    /// Two KT agents under a common belief: rare layers go to the larger
    /// parameter, frequent layers to the smaller, with one switch.
    #[test]
    fn kt_single_crossing(
        g1 in 0.3f64..1.0,
        g2 in 0.3f64..1.0,
        raw in prop::collection::vec(0.05f64..1.0, 8),
        losses in prop::collection::vec(integer_losses(8), 2),
    ) {
        prop_assume!((g1 - g2).abs() > 1e-3);
        let space = normalized(&raw);
        let agents: Vec<AgentSpec> = [g1, g2]
            .iter()
            .enumerate()
            .map(|(i, &g)| {
                let d = Distortion::kahneman_tversky(g).unwrap();
                AgentSpec::new(format!("a{i}"), space.clone(), DistortionSet::singleton(d), endowment(&losses[i])).unwrap()
            })
            .collect();
        let (low, high) = if g1 < g2 { (0, 1) } else { (1, 0) };
        let alloc = solve_fixed(&agents).unwrap().allocation;
        // layers run from frequent (low) to rare (high)
        let winners: Vec<usize> = alloc.slopes.iter().map(|row| row.iter().position(|x| *x == 1.0).unwrap()).collect();
        let switch = winners.iter().position(|w| *w == high).unwrap_or(winners.len());
        prop_assert!(winners[..switch].iter().all(|w| *w == low), "{:?}", winners);
        prop_assert!(winners[switch..].iter().all(|w| *w == high), "{:?}", winners);
    }

    #[test]
    fn finer_grid_never_raises_oracle_minimum(agents in arb_market(2, 3, arb_agent_distortion())) {
        let coarse = brute_force_po(&agents, &GridSpec::extreme()).unwrap();
        let fine = brute_force_po(&agents, &GridSpec::default()).unwrap();
        prop_assert!(fine <= coarse + 1e-12);
        // extreme slopes already reach the optimum
        prop_assert!((fine - coarse).abs() <= 1e-9);
    }
}
