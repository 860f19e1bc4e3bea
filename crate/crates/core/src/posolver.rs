//! Decentralized Pareto optima.
//!
//! Every comonotone allocation of the aggregate loss `S` is `g_i(S) + c_i`
//! with `g_i(x) = ∫_0^x h_i` and `Σ h_i = 1`. On each layer between consecutive
//! distinct values of `S` every survival probability is constant, so the
//! optimal marginal `h_i` puts all mass on an agent whose distorted survival
//! `T_i(Q_i(S > x))` is smallest. Robust agents add an outer maximization over
//! the product of their candidate distortion sets.

use serde::{Deserialize, Serialize};

use crate::distortion::{Distortion, DistortionSet, Family};
use crate::error::{Error, Result};
use crate::riskmeasure::{self, EmpiricalSpace, LossProfile};

/// Relative tolerance when comparing distorted survival probabilities.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Offset (relative to the survival probability) of the probe used to break
/// ties between agents on a layer.
const TIE_PROBE: f64 = 1e-6;

/// Default bound on the candidate product enumerated exhaustively.
pub const DEFAULT_PRODUCT_CAP: u64 = 1_000_000;

/// Absolute money tolerance for a market whose losses are of size `scale`.
pub fn money_tolerance(scale: f64) -> f64 {
    1e-9 * scale.abs().max(1.0)
}

/// One market participant.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub label: String,
    pub belief: EmpiricalSpace,
    pub distortions: DistortionSet,
    pub endowment: LossProfile,
}

impl AgentSpec {
    pub fn new(
        label: impl Into<String>,
        belief: EmpiricalSpace,
        distortions: impl Into<DistortionSet>,
        endowment: LossProfile,
    ) -> Result<Self> {
        if endowment.len() != belief.state_count() {
            return Err(Error::LengthMismatch {
                expected: belief.state_count(),
                actual: endowment.len(),
            });
        }
        if !endowment.is_non_negative() {
            return Err(Error::InvalidParameter("endowments must be non-negative".into()));
        }
        Ok(AgentSpec { label: label.into(), belief, distortions: distortions.into(), endowment })
    }

    /// The agent's robust risk valuation of `z`.
    pub fn risk(&self, z: &LossProfile) -> Result<f64> {
        Ok(riskmeasure::robust_drm(&self.belief, z, &self.distortions)?.0)
    }
}

/// Checks a market is well formed and returns its aggregate loss.
pub fn aggregate_loss(agents: &[AgentSpec]) -> Result<LossProfile> {
    let first = agents
        .first()
        .ok_or_else(|| Error::InvalidParameter("market needs at least one agent".into()))?;
    let m = first.belief.state_count();
    for a in agents {
        if a.belief.state_count() != m {
            return Err(Error::LengthMismatch { expected: m, actual: a.belief.state_count() });
        }
    }
    LossProfile::sum(agents.iter().map(|a| &a.endowment))
}

/// Layers of the aggregate loss with each belief's survival probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Layers {
    /// `0 = b_0 < b_1 < ... < b_m = max(S)`.
    pub breakpoints: Vec<f64>,
    /// `survival[k][i] = Q_i(S > b_k)`, constant on `(b_k, b_{k+1})`.
    pub survival: Vec<Vec<f64>>,
}

impl Layers {
    pub fn count(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn width(&self, k: usize) -> f64 {
        self.breakpoints[k + 1] - self.breakpoints[k]
    }
}

pub fn layer_decomposition(s: &LossProfile, beliefs: &[&EmpiricalSpace]) -> Result<Layers> {
    if !s.is_non_negative() {
        return Err(Error::Domain("aggregate loss must be non-negative".into()));
    }
    let mut breakpoints = vec![0.0];
    let mut per_belief = Vec::with_capacity(beliefs.len());
    for (idx, belief) in beliefs.iter().enumerate() {
        let table = riskmeasure::exceedance_table(belief, s)?;
        if idx == 0 {
            breakpoints.extend(table.iter().map(|(v, _)| *v).filter(|v| *v > 0.0));
        }
        let mut surv: Vec<f64> = Vec::with_capacity(breakpoints.len());
        if table[0].0 > 0.0 {
            surv.push(riskmeasure::survival(belief, s, 0.0)?);
        }
        surv.extend(table.iter().map(|(_, q)| *q));
        per_belief.push(surv);
    }
    let layers = breakpoints.len() - 1;
    let survival = (0..layers)
        .map(|k| per_belief.iter().map(|surv| surv[k]).collect())
        .collect();
    Ok(Layers { breakpoints, survival })
}

/// Comonotone allocation `g_i(x) = ∫_0^x h_i` with `h_i` constant per layer,
/// plus side payments `c_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerAllocation {
    pub breakpoints: Vec<f64>,
    /// `slopes[k][i]`: share of layer `k` carried by agent `i`.
    pub slopes: Vec<Vec<f64>>,
    pub side_payments: Vec<f64>,
    /// Index of the attaining candidate distortion per agent.
    pub chosen_distortions: Vec<usize>,
}

impl LayerAllocation {
    pub fn agent_count(&self) -> usize {
        self.side_payments.len()
    }

    pub fn layer_count(&self) -> usize {
        self.breakpoints.len().saturating_sub(1)
    }

    /// `g_i(x)`.
    pub fn retained(&self, agent: usize, x: f64) -> f64 {
        let mut acc = 0.0;
        for (k, row) in self.slopes.iter().enumerate() {
            let lo = self.breakpoints[k];
            if x <= lo {
                break;
            }
            let hi = self.breakpoints[k + 1];
            acc += row[agent] * (x.min(hi) - lo);
        }
        acc
    }

    /// `g_i(S)` as a profile.
    pub fn risky_part(&self, agent: usize, s: &LossProfile) -> LossProfile {
        s.map(|x| self.retained(agent, x))
    }

    /// `g_i(S) + c_i` as a profile.
    pub fn position(&self, agent: usize, s: &LossProfile) -> LossProfile {
        let c = self.side_payments[agent];
        s.map(|x| self.retained(agent, x) + c)
    }

    /// Verifies the structural invariants of an allocation.
    pub fn check(&self) -> Result<()> {
        let n = self.agent_count();
        if self.breakpoints.first() != Some(&0.0) && !self.breakpoints.is_empty() {
            return Err(Error::InvalidParameter("first breakpoint must be 0".into()));
        }
        if self.breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("breakpoints must increase strictly".into()));
        }
        if self.slopes.len() != self.layer_count() || self.chosen_distortions.len() != n {
            return Err(Error::InvalidParameter("allocation dimensions disagree".into()));
        }
        for (k, row) in self.slopes.iter().enumerate() {
            if row.len() != n {
                return Err(Error::LengthMismatch { expected: n, actual: row.len() });
            }
            if row.iter().any(|h| !(0.0..=1.0).contains(h)) {
                return Err(Error::InvalidParameter(format!("slope outside [0, 1] on layer {k}")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!("slopes on layer {k} sum to {total}")));
            }
        }
        let scale = self.breakpoints.last().copied().unwrap_or(0.0)
            + self.side_payments.iter().map(|c| c.abs()).sum::<f64>();
        let total: f64 = self.side_payments.iter().sum();
        if total.abs() > money_tolerance(scale) {
            return Err(Error::InvalidParameter(format!("side payments sum to {total}")));
        }
        Ok(())
    }
}

/// Distorted survival of every agent on every layer for a fixed choice of
/// candidate distortions.
fn distorted_survival(layers: &Layers, distortions: &[&Distortion]) -> Vec<Vec<f64>> {
    layers
        .survival
        .iter()
        .map(|row| row.iter().zip(distortions).map(|(q, d)| d.eval_clamped(*q)).collect())
        .collect()
}

fn ties(values: &[f64], tolerance: f64) -> (f64, Vec<usize>) {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let limit = min + tolerance * min.abs();
    let set = (0..values.len()).filter(|&i| values[i] <= limit).collect();
    (min, set)
}

/// Agent carrying a layer: the smallest distorted survival; among ties the
/// smallest distortion slightly below the survival level (the direction of
/// the next layer up); then the lowest index.
fn assign_layer(survival: &[f64], distorted: &[f64], distortions: &[&Distortion]) -> (f64, usize) {
    let (min, tied) = ties(distorted, TIE_TOLERANCE);
    if tied.len() == 1 {
        return (min, tied[0]);
    }
    let probes: Vec<f64> = tied
        .iter()
        .map(|&i| distortions[i].eval_clamped(survival[i] * (1.0 - TIE_PROBE)))
        .collect();
    let (_, probe_tied) = ties(&probes, TIE_TOLERANCE);
    (min, tied[probe_tied[0]])
}

/// Solution of the inner (fixed-distortion) problem.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedSolution {
    pub allocation: LayerAllocation,
    /// `∫ min_i T_i(Q_i(S > x)) dx`.
    pub value: f64,
}

fn solve_with_choice(agents: &[AgentSpec], choice: &[usize]) -> Result<FixedSolution> {
    let s = aggregate_loss(agents)?;
    let beliefs: Vec<&EmpiricalSpace> = agents.iter().map(|a| &a.belief).collect();
    let layers = layer_decomposition(&s, &beliefs)?;
    let distortions: Vec<&Distortion> =
        agents.iter().zip(choice).map(|(a, &c)| a.distortions.get(c)).collect();
    let distorted = distorted_survival(&layers, &distortions);
    let n = agents.len();

    let mut value = 0.0;
    let mut slopes = Vec::with_capacity(layers.count());
    for (k, row_values) in distorted.iter().enumerate() {
        let (min, winner) = assign_layer(&layers.survival[k], row_values, &distortions);
        value += layers.width(k) * min;
        let mut row = vec![0.0; n];
        row[winner] = 1.0;
        slopes.push(row);
    }
    Ok(FixedSolution {
        allocation: LayerAllocation {
            breakpoints: layers.breakpoints,
            slopes,
            side_payments: vec![0.0; n],
            chosen_distortions: choice.to_vec(),
        },
        value,
    })
}

/// Pareto-optimal risky parts when every agent has a single distortion.
pub fn solve_fixed(agents: &[AgentSpec]) -> Result<FixedSolution> {
    if let Some(a) = agents.iter().find(|a| !a.distortions.is_singleton()) {
        return Err(Error::InvalidParameter(format!(
            "agent {} has {} candidate distortions; use solve_robust",
            a.label,
            a.distortions.len()
        )));
    }
    solve_with_choice(agents, &vec![0; agents.len()])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustOptions {
    /// Largest candidate product enumerated exhaustively.
    pub product_cap: u64,
    /// Fall back to coordinate ascent above the cap instead of failing.
    pub coordinate_ascent: bool,
}

impl Default for RobustOptions {
    fn default() -> Self {
        RobustOptions { product_cap: DEFAULT_PRODUCT_CAP, coordinate_ascent: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustSolution {
    /// Index of `T_i*` in each agent's candidate set.
    pub chosen: Vec<usize>,
    pub allocation: LayerAllocation,
    /// `max over candidates of ∫ min_i T_i(Q_i(S > x)) dx`.
    pub value: f64,
    /// Whether the whole candidate product was enumerated.
    pub exhaustive: bool,
}

struct OuterObjective {
    widths: Vec<f64>,
    /// `table[i][c][k] = T_{i,c}(Q_i(S > b_k))`.
    table: Vec<Vec<Vec<f64>>>,
}

impl OuterObjective {
    fn value(&self, choice: &[usize]) -> f64 {
        self.widths
            .iter()
            .enumerate()
            .map(|(k, w)| {
                let min = choice
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| self.table[i][c][k])
                    .fold(f64::INFINITY, f64::min);
                w * min
            })
            .sum()
    }
}

fn improves(candidate: f64, incumbent: f64) -> bool {
    candidate > incumbent + TIE_TOLERANCE * incumbent.abs()
}

/// Pareto-optimal risky parts for robust agents: maximizes the layer-wise
/// minimum over the product of candidate sets, then solves the inner problem
/// at the maximizer. Among equal maximizers the lexicographically first is
/// returned.
pub fn solve_robust(agents: &[AgentSpec], options: RobustOptions) -> Result<RobustSolution> {
    let s = aggregate_loss(agents)?;
    let beliefs: Vec<&EmpiricalSpace> = agents.iter().map(|a| &a.belief).collect();
    let layers = layer_decomposition(&s, &beliefs)?;
    let sizes: Vec<usize> = agents.iter().map(|a| a.distortions.len()).collect();
    let objective = OuterObjective {
        widths: (0..layers.count()).map(|k| layers.width(k)).collect(),
        table: agents
            .iter()
            .enumerate()
            .map(|(i, a)| {
                a.distortions
                    .candidates()
                    .iter()
                    .map(|d| layers.survival.iter().map(|row| d.eval_clamped(row[i])).collect())
                    .collect()
            })
            .collect(),
    };

    let product = sizes.iter().try_fold(1u64, |acc, &n| acc.checked_mul(n as u64));
    let within_cap = matches!(product, Some(p) if p <= options.product_cap);
    let (chosen, exhaustive) = if within_cap {
        (enumerate_product(&objective, &sizes), true)
    } else if options.coordinate_ascent {
        log::info!("candidate product exceeds {}; using coordinate ascent", options.product_cap);
        (coordinate_ascent(&objective, &sizes), false)
    } else {
        return Err(Error::Resource(format!(
            "candidate product {} exceeds cap {}",
            product.map_or_else(|| "overflowing u64".to_string(), |p| p.to_string()),
            options.product_cap
        )));
    };
    let inner = solve_with_choice(agents, &chosen)?;
    Ok(RobustSolution {
        value: inner.value,
        allocation: inner.allocation,
        chosen,
        exhaustive,
    })
}

fn enumerate_product(objective: &OuterObjective, sizes: &[usize]) -> Vec<usize> {
    let n = sizes.len();
    let mut choice = vec![0; n];
    let mut best = (objective.value(&choice), choice.clone());
    loop {
        // odometer with the last agent varying fastest keeps lexicographic order
        let mut pos = n;
        loop {
            if pos == 0 {
                return best.1;
            }
            pos -= 1;
            choice[pos] += 1;
            if choice[pos] < sizes[pos] {
                break;
            }
            choice[pos] = 0;
        }
        let v = objective.value(&choice);
        if improves(v, best.0) {
            best = (v, choice.clone());
        }
    }
}

fn coordinate_ascent(objective: &OuterObjective, sizes: &[usize]) -> Vec<usize> {
    let widest = sizes.iter().copied().max().unwrap_or(1);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for start in 0..widest {
        let mut choice: Vec<usize> = sizes.iter().map(|&n| start.min(n - 1)).collect();
        let mut current = objective.value(&choice);
        loop {
            let mut moved = false;
            for i in 0..sizes.len() {
                let keep = choice[i];
                let mut best_c = keep;
                for c in 0..sizes[i] {
                    choice[i] = c;
                    let v = objective.value(&choice);
                    if improves(v, current) {
                        current = v;
                        best_c = c;
                    }
                }
                choice[i] = best_c;
                moved |= best_c != keep;
            }
            if !moved {
                break;
            }
        }
        if best.as_ref().is_none_or(|(v, _)| improves(current, *v)) {
            best = Some((current, choice));
        }
    }
    best.map(|(_, c)| c).unwrap_or_default()
}

/// How the aggregate welfare gain is split among agents.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightRule {
    /// `w_i = W / n`.
    Equal,
    /// `w = (0, ..., 0, W)`.
    AllToLast,
    /// `w_i = W * share_i / Σ shares`.
    Shares(Vec<f64>),
}

/// Absolute welfare weights summing to `gain` for `n` agents.
pub fn weights_for(rule: &WeightRule, gain: f64, n: usize) -> Result<Vec<f64>> {
    let gain = if gain < 0.0 && gain > -money_tolerance(gain) { 0.0 } else { gain };
    match rule {
        WeightRule::Equal => Ok(vec![gain / n as f64; n]),
        WeightRule::AllToLast => {
            let mut w = vec![0.0; n];
            w[n - 1] = gain;
            Ok(w)
        }
        WeightRule::Shares(shares) => {
            if shares.len() != n {
                return Err(Error::InvalidWeights(format!("{} shares for {n} agents", shares.len())));
            }
            if shares.iter().any(|s| !s.is_finite() || *s < 0.0) {
                return Err(Error::InvalidWeights("shares must be non-negative".into()));
            }
            let total: f64 = shares.iter().sum();
            if total <= 0.0 {
                return Err(Error::InvalidWeights("shares sum to zero".into()));
            }
            Ok(shares.iter().map(|s| gain * s / total).collect())
        }
    }
}

/// Valuations entering the welfare accounting of an allocation.
struct Valuations {
    initial: Vec<f64>,
    risky: Vec<f64>,
    scale: f64,
}

fn valuations(agents: &[AgentSpec], alloc: &LayerAllocation) -> Result<Valuations> {
    let s = aggregate_loss(agents)?;
    if alloc.agent_count() != agents.len() {
        return Err(Error::LengthMismatch { expected: agents.len(), actual: alloc.agent_count() });
    }
    let mut initial = Vec::with_capacity(agents.len());
    let mut risky = Vec::with_capacity(agents.len());
    for (i, a) in agents.iter().enumerate() {
        initial.push(a.risk(&a.endowment)?);
        risky.push(a.risk(&alloc.risky_part(i, &s))?);
    }
    Ok(Valuations { initial, risky, scale: s.max().max(0.0) })
}

/// Side payments `c_i = ρ_i(X_i) - ρ_i(g_i(S)) - w_i` giving agent `i` the
/// welfare gain `w_i`. The weights must be non-negative and sum to the
/// aggregate gain.
pub fn side_payments(agents: &[AgentSpec], alloc: &LayerAllocation, weights: &[f64]) -> Result<Vec<f64>> {
    let v = valuations(agents, alloc)?;
    if weights.len() != agents.len() {
        return Err(Error::InvalidWeights(format!(
            "{} weights for {} agents",
            weights.len(),
            agents.len()
        )));
    }
    let gain: f64 = v.initial.iter().zip(&v.risky).map(|(x, g)| x - g).sum();
    let tol = money_tolerance(v.scale);
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < -tol) {
        return Err(Error::InvalidWeights(format!("negative weight {w}")));
    }
    let total: f64 = weights.iter().sum();
    if (total - gain).abs() > tol {
        return Err(Error::InvalidWeights(format!(
            "weights sum to {total}, aggregate gain is {gain}"
        )));
    }
    Ok(v.initial
        .iter()
        .zip(&v.risky)
        .zip(weights)
        .map(|((x, g), w)| x - g - w)
        .collect())
}

/// Attaches side payments chosen by `rule` to `alloc`.
pub fn settle(agents: &[AgentSpec], alloc: &LayerAllocation, rule: &WeightRule) -> Result<LayerAllocation> {
    let v = valuations(agents, alloc)?;
    let gain: f64 = v.initial.iter().zip(&v.risky).map(|(x, g)| x - g).sum();
    let weights = weights_for(rule, gain, agents.len())?;
    let side_payments = side_payments(agents, alloc, &weights)?;
    Ok(LayerAllocation { side_payments, ..alloc.clone() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentWelfare {
    pub label: String,
    /// `ρ_i(X_i)`.
    pub initial_risk: f64,
    /// `ρ_i(g_i(S))`.
    pub risky_part_risk: f64,
    /// `ρ_i(g_i(S) + c_i)`.
    pub final_risk: f64,
    pub side_payment: f64,
    /// `ρ_i(X_i) - ρ_i(g_i(S) + c_i)`.
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketReport {
    pub agents: Vec<AgentWelfare>,
    pub aggregate_gain: f64,
    pub average_gain: f64,
    /// `Σ ρ_i(g_i(S) + c_i)`.
    pub optimum_value: f64,
}

pub fn welfare_report(agents: &[AgentSpec], alloc: &LayerAllocation) -> Result<MarketReport> {
    let s = aggregate_loss(agents)?;
    let v = valuations(agents, alloc)?;
    let mut rows = Vec::with_capacity(agents.len());
    for (i, a) in agents.iter().enumerate() {
        let final_risk = a.risk(&alloc.position(i, &s))?;
        rows.push(AgentWelfare {
            label: a.label.clone(),
            initial_risk: v.initial[i],
            risky_part_risk: v.risky[i],
            final_risk,
            side_payment: alloc.side_payments[i],
            gain: v.initial[i] - final_risk,
        });
    }
    let aggregate_gain = rows.iter().map(|r| r.gain).sum();
    let optimum_value = rows.iter().map(|r| r.final_risk).sum();
    Ok(MarketReport {
        average_gain: aggregate_gain / agents.len() as f64,
        agents: rows,
        aggregate_gain,
        optimum_value,
    })
}

/// Two-agent deductible structure of an all-Prelec market.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeductibleSplit {
    /// `VaR_{1/e}(S)`.
    pub deductible: f64,
    /// Agent with the smallest first parameter; carries `min(S, d)`.
    pub retaining_agent: usize,
    /// Agent with the largest first parameter; carries `(S - d)+`.
    pub tail_agent: usize,
}

impl DeductibleSplit {
    /// Layer slopes implied by the split on the given breakpoints.
    pub fn slopes(&self, breakpoints: &[f64], agents: usize) -> Vec<Vec<f64>> {
        breakpoints
            .windows(2)
            .map(|w| {
                let mut row = vec![0.0; agents];
                let who = if w[0] < self.deductible { self.retaining_agent } else { self.tail_agent };
                row[who] = 1.0;
                row
            })
            .collect()
    }
}

/// Deductible `d* = VaR_{1/e}(S)` for markets where every agent uses a
/// Prelec-1 distortion, or Prelec-2 distortions with a common second
/// parameter.
pub fn prelec_deductible(
    s: &LossProfile,
    belief: &EmpiricalSpace,
    distortions: &[Distortion],
) -> Result<DeductibleSplit> {
    if distortions.is_empty() {
        return Err(Error::InvalidParameter("no agents".into()));
    }
    let alphas: Vec<f64> = match distortions[0].family() {
        Family::Prelec1 { .. } => distortions
            .iter()
            .map(|d| match d.family() {
                Family::Prelec1 { alpha } => Ok(*alpha),
                other => Err(Error::Unsupported(format!("mixed families: {other}"))),
            })
            .collect::<Result<_>>()?,
        Family::Prelec2 { beta: beta0, .. } => distortions
            .iter()
            .map(|d| match d.family() {
                Family::Prelec2 { alpha, beta } if (beta - beta0).abs() <= 1e-12 => Ok(*alpha),
                Family::Prelec2 { .. } => {
                    Err(Error::Unsupported("prelec2 agents with different beta".into()))
                }
                other => Err(Error::Unsupported(format!("mixed families: {other}"))),
            })
            .collect::<Result<_>>()?,
        other => return Err(Error::Unsupported(format!("deductible rule for {other}"))),
    };
    let mut retaining_agent = 0;
    let mut tail_agent = 0;
    for (i, a) in alphas.iter().enumerate() {
        if *a < alphas[retaining_agent] {
            retaining_agent = i;
        }
        if *a > alphas[tail_agent] {
            tail_agent = i;
        }
    }
    let deductible = riskmeasure::var(belief, s, (-1.0f64).exp())?;
    Ok(DeductibleSplit { deductible, retaining_agent, tail_agent })
}
