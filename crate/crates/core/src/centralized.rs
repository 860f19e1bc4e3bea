//! Centralized insurance with a single Expected Shortfall insurer.
//!
//! Pareto-optimal indemnities follow from a measure `Q*` maximizing
//! `Σ_i ∫ min{Q(X_i > t), ν_i(X_i > t)} dt` over the ES dual set
//! `{Q : dQ/dP <= 1/α}`: each policyholder cedes the layers of its own loss
//! where the insurer's `Q*` is cheaper than its own distorted survival `ν_i`.

use microlp::{ComparisonOp, OptimizationDirection, Problem, SolveOutcome};
use serde::{Deserialize, Serialize};

use crate::distortion::Distortion;
use crate::error::{Error, Result};
use crate::posolver::{money_tolerance, AgentSpec};
use crate::riskmeasure::{self, EmpiricalSpace, LossProfile};

/// Tolerance on `Q*(X_i > t)` versus `ν_i(X_i > t)` below which the two are
/// treated as equal when reading indemnity slopes off the LP solution.
pub const SLOPE_TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Policyholder {
    pub label: String,
    pub distortion: Distortion,
    pub endowment: LossProfile,
}

/// Policyholders sharing one reference measure, facing an `ES_α` insurer.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralMarket {
    pub space: EmpiricalSpace,
    pub policyholders: Vec<Policyholder>,
    pub alpha: f64,
}

impl CentralMarket {
    pub fn new(space: EmpiricalSpace, policyholders: Vec<Policyholder>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain(format!("insurer level {alpha} outside (0, 1)")));
        }
        if policyholders.is_empty() {
            return Err(Error::InvalidParameter("market needs at least one policyholder".into()));
        }
        for p in &policyholders {
            if p.endowment.len() != space.state_count() {
                return Err(Error::LengthMismatch {
                    expected: space.state_count(),
                    actual: p.endowment.len(),
                });
            }
            if !p.endowment.is_non_negative() {
                return Err(Error::InvalidParameter("endowments must be non-negative".into()));
            }
        }
        Ok(CentralMarket { space, policyholders, alpha })
    }

    /// Builds a market from peer-to-peer agent specs. Every agent must hold a
    /// single distortion and the same belief, which becomes the reference
    /// measure.
    pub fn from_agents(agents: &[AgentSpec], alpha: f64) -> Result<Self> {
        let first = agents
            .first()
            .ok_or_else(|| Error::InvalidParameter("market needs at least one agent".into()))?;
        let mut policyholders = Vec::with_capacity(agents.len());
        for a in agents {
            if a.belief != first.belief {
                return Err(Error::Unsupported(
                    "centralized market requires a common reference measure".into(),
                ));
            }
            if !a.distortions.is_singleton() {
                return Err(Error::Unsupported(
                    "centralized market requires a single distortion per agent".into(),
                ));
            }
            policyholders.push(Policyholder {
                label: a.label.clone(),
                distortion: a.distortions.get(0).clone(),
                endowment: a.endowment.clone(),
            });
        }
        Self::new(first.belief.clone(), policyholders, alpha)
    }

    pub fn risk(&self, agent: usize, z: &LossProfile) -> Result<f64> {
        riskmeasure::choquet(&self.space, z, &self.policyholders[agent].distortion)
    }

    fn scale(&self) -> f64 {
        self.policyholders.iter().map(|p| p.endowment.max()).fold(0.0, f64::max)
    }
}

/// Layers of one policyholder's loss.
#[derive(Debug, Clone, PartialEq)]
struct AgentLayers {
    /// `0 = b_0 < ... < b_m = max(X_i)`.
    breakpoints: Vec<f64>,
    /// `ν_i(X_i > b_k)`.
    nu: Vec<f64>,
    /// States at each breakpoint `b_{k+1}`, i.e. leaving the exceedance set
    /// when moving from layer `k` to layer `k + 1`.
    states_at_top: Vec<Vec<usize>>,
}

fn agent_layers(space: &EmpiricalSpace, p: &Policyholder) -> Result<AgentLayers> {
    let x = p.endowment.values();
    let table = riskmeasure::exceedance_table(space, &p.endowment)?;
    let mut breakpoints = vec![0.0];
    let mut surv = Vec::new();
    if table[0].0 > 0.0 {
        surv.push(riskmeasure::survival(space, &p.endowment, 0.0)?);
    }
    for (v, q) in &table {
        if *v > 0.0 {
            breakpoints.push(*v);
        }
        surv.push(*q);
    }
    surv.truncate(breakpoints.len() - 1);
    let nu = surv.iter().map(|q| p.distortion.eval_clamped(*q)).collect();
    let states_at_top = breakpoints[1..]
        .iter()
        .map(|b| (0..x.len()).filter(|&w| x[w] == *b).collect())
        .collect();
    Ok(AgentLayers { breakpoints, nu, states_at_top })
}

/// Solution of the measure-maximization program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureSolution {
    /// `Q*` as per-state weights.
    pub measure: Vec<f64>,
    /// `Σ_i ∫ min{Q*(X_i > t), ν_i(X_i > t)} dt`.
    pub value: f64,
}

/// Objective of the measure program at `q`.
pub fn measure_objective(market: &CentralMarket, q: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for p in &market.policyholders {
        let layers = agent_layers(&market.space, p)?;
        let exceed = exceedances(&layers, q);
        for ((b, q), nu) in layers.breakpoints.windows(2).zip(&exceed).zip(&layers.nu) {
            total += (b[1] - b[0]) * q.min(*nu);
        }
    }
    Ok(total)
}

/// `Q(X_i > b_k)` for every layer, accumulated from the top.
fn exceedances(layers: &AgentLayers, q: &[f64]) -> Vec<f64> {
    let m = layers.nu.len();
    let mut out = vec![0.0; m];
    let mut above = 0.0;
    for k in (0..m).rev() {
        above += layers.states_at_top[k].iter().map(|&w| q[w]).sum::<f64>();
        out[k] = above;
    }
    out
}

/// Maximizes `Σ_i ∫ min{Q(X_i > t), ν_i(X_i > t)} dt` over
/// `{q : 0 <= q_ω <= p_ω/α, Σ q_ω = 1}` as a linear program.
///
/// Variables: the weights `q_ω`; per agent and layer the exceedance mass
/// `y_ik = Q(X_i > b_k)`, linked by the nesting of exceedance sets; and an
/// auxiliary `z_ik <= min{y_ik, ν_ik}` carrying the objective.
pub fn solve_measure_lp(market: &CentralMarket) -> Result<MeasureSolution> {
    let m = market.space.state_count();
    let unit = market.scale().max(f64::MIN_POSITIVE);
    let mut problem = Problem::new(OptimizationDirection::Maximize);
    let q: Vec<_> = market
        .space
        .weights()
        .iter()
        .map(|p| problem.add_var(0.0, (0.0, (p / market.alpha).min(1.0))))
        .collect();
    let all: Vec<_> = q.iter().map(|v| (*v, 1.0)).collect();
    problem.add_constraint(all.as_slice(), ComparisonOp::Eq, 1.0);

    for p in &market.policyholders {
        let layers = agent_layers(&market.space, p)?;
        let count = layers.nu.len();
        let y: Vec<_> = (0..count).map(|_| problem.add_var(0.0, (0.0, 1.0))).collect();
        for k in 0..count {
            // y_k = y_{k+1} + Σ_{ω at b_{k+1}} q_ω
            let mut row = vec![(y[k], 1.0)];
            if k + 1 < count {
                row.push((y[k + 1], -1.0));
            }
            row.extend(layers.states_at_top[k].iter().map(|&w| (q[w], -1.0)));
            problem.add_constraint(row.as_slice(), ComparisonOp::Eq, 0.0);

            let width = (layers.breakpoints[k + 1] - layers.breakpoints[k]) / unit;
            let z = problem.add_var(width, (0.0, layers.nu[k]));
            problem.add_constraint([(z, 1.0), (y[k], -1.0)].as_slice(), ComparisonOp::Le, 0.0);
        }
    }

    let solution = match problem.solve().map_err(|e| Error::Lp(e.to_string()))? {
        SolveOutcome::Solution(s) => s,
        SolveOutcome::Interrupted(_) => return Err(Error::Lp("solver interrupted".into())),
    };
    let mut measure: Vec<f64> = q.iter().map(|v| solution.var_value(*v).max(0.0)).collect();
    for (w, p) in measure.iter_mut().zip(market.space.weights()) {
        *w = w.min(p / market.alpha);
    }
    let mass: f64 = measure.iter().sum();
    if (mass - 1.0).abs() > 1e-9 {
        return Err(Error::Lp(format!("solution mass {mass} differs from one")));
    }
    debug_assert_eq!(measure.len(), m);
    let value = measure_objective(market, &measure)?;
    Ok(MeasureSolution { measure, value })
}

/// Piecewise-linear indemnity `I_i` on the layers of `X_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Indemnity {
    pub label: String,
    pub breakpoints: Vec<f64>,
    /// Marginal indemnity `I_i'` per layer, in `[0, 1]`.
    pub slopes: Vec<f64>,
    /// `Q*(X_i > b_k)` per layer.
    pub insurer_survival: Vec<f64>,
    /// `ν_i(X_i > b_k)` per layer.
    pub own_survival: Vec<f64>,
}

impl Indemnity {
    pub fn indemnity(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for (k, slope) in self.slopes.iter().enumerate() {
            let lo = self.breakpoints[k];
            if x <= lo {
                break;
            }
            acc += slope * (x.min(self.breakpoints[k + 1]) - lo);
        }
        acc
    }

    /// Retention `x - I(x)`.
    pub fn retention(&self, x: f64) -> f64 {
        x - self.indemnity(x)
    }

    pub fn cedes_nothing(&self) -> bool {
        self.slopes.iter().all(|s| *s == 0.0)
    }

    /// Deductible `d` when the contract is `(x - d)+`: zero slopes followed by
    /// full cession.
    pub fn deductible(&self) -> Option<f64> {
        let first_full = self.slopes.iter().position(|s| *s == 1.0)?;
        let is_deductible = self.slopes[..first_full].iter().all(|s| *s == 0.0)
            && self.slopes[first_full..].iter().all(|s| *s == 1.0);
        is_deductible.then(|| self.breakpoints[first_full])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralizedContract {
    pub alpha: f64,
    /// `Q*` per state.
    pub measure: Vec<f64>,
    /// Value of the measure program at `Q*`.
    pub lp_value: f64,
    pub indemnities: Vec<Indemnity>,
    pub premiums: Vec<f64>,
}

impl CentralizedContract {
    pub fn ceded(&self, market: &CentralMarket, agent: usize) -> LossProfile {
        let ind = &self.indemnities[agent];
        market.policyholders[agent].endowment.map(|x| ind.indemnity(x))
    }

    pub fn retained(&self, market: &CentralMarket, agent: usize) -> LossProfile {
        let ind = &self.indemnities[agent];
        market.policyholders[agent].endowment.map(|x| ind.retention(x))
    }

    pub fn cedes_nothing(&self) -> bool {
        self.indemnities.iter().all(Indemnity::cedes_nothing)
    }

    pub fn with_premiums(mut self, premiums: Vec<f64>) -> Self {
        self.premiums = premiums;
        self
    }
}

/// Reads indemnity slopes off `Q*`: full cession where the insurer's survival
/// is below the policyholder's distorted survival, retention where above.
/// Layers where the two coincide are split by [`tie_slopes`]. Premiums start
/// at zero.
pub fn build_indemnities(market: &CentralMarket, solution: &MeasureSolution) -> Result<CentralizedContract> {
    if solution.measure.len() != market.space.state_count() {
        return Err(Error::LengthMismatch {
            expected: market.space.state_count(),
            actual: solution.measure.len(),
        });
    }
    let mut indemnities = Vec::with_capacity(market.policyholders.len());
    for p in &market.policyholders {
        let layers = agent_layers(&market.space, p)?;
        let exceed = exceedances(&layers, &solution.measure);
        let slopes = exceed
            .iter()
            .zip(&layers.nu)
            .map(|(q, nu)| indemnity_slope(*q, *nu).unwrap_or(f64::NAN))
            .collect();
        indemnities.push(Indemnity {
            label: p.label.clone(),
            breakpoints: layers.breakpoints,
            slopes,
            insurer_survival: exceed,
            own_survival: layers.nu,
        });
    }
    tie_slopes(market, &mut indemnities)?;
    let contract = CentralizedContract {
        alpha: market.alpha,
        measure: solution.measure.clone(),
        lp_value: solution.value,
        indemnities,
        premiums: vec![0.0; market.policyholders.len()],
    };
    if contract.cedes_nothing() {
        log::warn!("insurer with ES level {} accepts no risk; contract cedes nothing", market.alpha);
    }
    Ok(contract)
}

/// Marginal indemnity given the insurer's and the policyholder's survival;
/// `None` when they coincide and the slope is not determined by `Q*`.
pub fn indemnity_slope(insurer: f64, own: f64) -> Option<f64> {
    if insurer < own - SLOPE_TIE_TOLERANCE {
        Some(1.0)
    } else if insurer > own + SLOPE_TIE_TOLERANCE {
        Some(0.0)
    } else {
        None
    }
}

/// Fills the undetermined (NaN) slopes so that the policyholders' retained
/// risk plus the insurer's `ES_α` of the ceded total is smallest.
///
/// Any split of a tie layer costs the policyholder the same under `Q*`, but
/// the insurer's Expected Shortfall only equals the `Q*`-expectation when the
/// ceded total is largest where `Q*` puts its density. The split is found
/// with the representation `ES_α(Y) = min_t t + E[(Y - t)+] / α`, which is
/// linear in the slopes.
pub fn tie_slopes(market: &CentralMarket, indemnities: &mut [Indemnity]) -> Result<()> {
    let ties: Vec<(usize, usize)> = indemnities
        .iter()
        .enumerate()
        .flat_map(|(i, ind)| {
            ind.slopes.iter().enumerate().filter(|(_, s)| s.is_nan()).map(move |(k, _)| (i, k))
        })
        .collect();
    if ties.is_empty() {
        return Ok(());
    }
    let unit = market.scale().max(f64::MIN_POSITIVE);
    let m = market.space.state_count();
    let width = |i: usize, k: usize| {
        (indemnities[i].breakpoints[k + 1] - indemnities[i].breakpoints[k]) / unit
    };
    let mut problem = Problem::new(OptimizationDirection::Minimize);
    // ceded amount per tie layer, in units, rather than the slope: keeps every
    // constraint coefficient at ±1 however uneven the layer widths are
    let ceded: Vec<_> = ties
        .iter()
        .map(|&(i, k)| problem.add_var(-indemnities[i].own_survival[k], (0.0, width(i, k))))
        .collect();
    // the minimizing t is a quantile of the ceded total, which lies in [0, n] in units
    let t = problem.add_var(1.0, (0.0, market.policyholders.len() as f64));
    for w in 0..m {
        let u = problem.add_var(market.space.weights()[w] / market.alpha, (0.0, f64::INFINITY));
        // u_w + t - Σ_ties ceded_j [X_i(w) above layer j] >= amount fixed by strict layers
        let mut row = vec![(u, 1.0), (t, 1.0)];
        let mut fixed = 0.0;
        for (i, ind) in indemnities.iter().enumerate() {
            let x = market.policyholders[i].endowment.values()[w];
            for (k, slope) in ind.slopes.iter().enumerate() {
                if x < ind.breakpoints[k + 1] {
                    break;
                }
                if slope.is_nan() {
                    let j = ties.iter().position(|&tk| tk == (i, k)).expect("tie is listed");
                    row.push((ceded[j], -1.0));
                } else {
                    fixed += slope * width(i, k);
                }
            }
        }
        problem.add_constraint(row.as_slice(), ComparisonOp::Ge, fixed);
    }
    let solution = match problem.solve().map_err(|e| Error::Lp(e.to_string()))? {
        SolveOutcome::Solution(s) => s,
        SolveOutcome::Interrupted(_) => return Err(Error::Lp("solver interrupted".into())),
    };
    let widths: Vec<f64> = ties.iter().map(|&(i, k)| width(i, k)).collect();
    for (j, &(i, k)) in ties.iter().enumerate() {
        let v = (solution.var_value(ceded[j]) / widths[j]).clamp(0.0, 1.0);
        // snap solver noise to the extreme slopes
        indemnities[i].slopes[k] = if v < 1e-9 {
            0.0
        } else if v > 1.0 - 1e-9 {
            1.0
        } else {
            v
        };
    }
    Ok(())
}

/// Premiums `π_i = ρ_i(X_i) - ρ_i(X_i - I_i(X_i))` leaving every policyholder
/// exactly indifferent.
pub fn stackelberg_premiums(market: &CentralMarket, contract: &CentralizedContract) -> Result<Vec<f64>> {
    (0..market.policyholders.len())
        .map(|i| {
            let x = &market.policyholders[i].endowment;
            Ok(market.risk(i, x)? - market.risk(i, &contract.retained(market, i))?)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyholderWelfare {
    pub label: String,
    pub initial_risk: f64,
    /// `ρ_i(R_i)`, premium excluded.
    pub retained_risk: f64,
    pub premium: f64,
    /// `ρ_i(X_i) - ρ_i(R_i + π_i)`.
    pub gain: f64,
    pub deductible: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralWelfare {
    pub policyholders: Vec<PolicyholderWelfare>,
    /// `ES_α(Σ I_i(X_i))`.
    pub insurer_risk: f64,
    /// `Σ π_i - ES_α(Σ I_i(X_i))`.
    pub insurer_gain: f64,
    /// Sum of all gains, insurer included; independent of premiums.
    pub aggregate_gain: f64,
    /// Aggregate gain over `n + 1` participants.
    pub average_gain: f64,
    /// `Σ ρ_i(X_i)` minus the value of the measure program: the largest
    /// aggregate gain any contract can achieve.
    pub max_aggregate_gain: f64,
    pub cedes_nothing: bool,
}

pub fn centralized_welfare(market: &CentralMarket, contract: &CentralizedContract) -> Result<CentralWelfare> {
    let n = market.policyholders.len();
    if contract.premiums.len() != n || contract.indemnities.len() != n {
        return Err(Error::LengthMismatch { expected: n, actual: contract.premiums.len() });
    }
    let mut rows = Vec::with_capacity(n);
    let mut ceded = Vec::with_capacity(n);
    for i in 0..n {
        let p = &market.policyholders[i];
        let initial_risk = market.risk(i, &p.endowment)?;
        let retained_risk = market.risk(i, &contract.retained(market, i))?;
        let premium = contract.premiums[i];
        rows.push(PolicyholderWelfare {
            label: p.label.clone(),
            initial_risk,
            retained_risk,
            premium,
            gain: initial_risk - (retained_risk + premium),
            deductible: contract.indemnities[i].deductible(),
        });
        ceded.push(contract.ceded(market, i));
    }
    let total_ceded = LossProfile::sum(&ceded)?;
    let insurer_risk = riskmeasure::es(&market.space, &total_ceded, market.alpha)?;
    let insurer_gain = contract.premiums.iter().sum::<f64>() - insurer_risk;
    let aggregate_gain = rows.iter().map(|r| r.gain).sum::<f64>() + insurer_gain;
    let initial_total: f64 = rows.iter().map(|r| r.initial_risk).sum();
    let tol = money_tolerance(market.scale());
    let mut max_aggregate_gain = initial_total - contract.lp_value;
    if max_aggregate_gain.abs() < tol {
        max_aggregate_gain = 0.0;
    }
    Ok(CentralWelfare {
        policyholders: rows,
        insurer_risk,
        insurer_gain,
        aggregate_gain,
        average_gain: aggregate_gain / (n + 1) as f64,
        max_aggregate_gain,
        cedes_nothing: contract.cedes_nothing(),
    })
}

/// Solves the measure program, builds indemnities and prices them at the
/// Stackelberg premiums.
pub fn solve_centralized(market: &CentralMarket) -> Result<(CentralizedContract, CentralWelfare)> {
    let solution = solve_measure_lp(market)?;
    let contract = build_indemnities(market, &solution)?;
    let premiums = stackelberg_premiums(market, &contract)?;
    let contract = contract.with_premiums(premiums);
    let welfare = centralized_welfare(market, &contract)?;
    Ok((contract, welfare))
}
