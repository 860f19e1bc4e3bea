//! Brute-force verifiers for tiny instances.
//!
//! Everything here is deliberately naive and shares as little code as
//! possible with the main solvers: sorting instead of exceedance tables,
//! enumeration instead of layer rules, vertex enumeration instead of simplex.
//! Inputs beyond the documented sizes are refused with [`Error::TooLarge`].

use crate::centralized::CentralMarket;
use crate::distortion::{Distortion, DistortionSet};
use crate::error::{Error, Result};
use crate::posolver::AgentSpec;
use crate::riskmeasure::{EmpiricalSpace, LossProfile};

pub const MAX_CHOQUET_STATES: usize = 10_000;
pub const MAX_ROBUST_PRODUCT: usize = 1_000;
pub const MAX_LP_STATES: usize = 6;

/// Slope grid and size limits for [`brute_force_po`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    slopes: Vec<f64>,
    pub max_states: usize,
    pub max_agents: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { slopes: vec![0.0, 0.25, 0.5, 0.75, 1.0], max_states: 4, max_agents: 3 }
    }
}

impl GridSpec {
    /// A grid must lie in `[0, 1]` and contain both endpoints.
    pub fn new(mut slopes: Vec<f64>) -> Result<Self> {
        if slopes.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::InvalidParameter("slope grid must lie in [0, 1]".into()));
        }
        if !slopes.contains(&0.0) || !slopes.contains(&1.0) {
            return Err(Error::InvalidParameter("slope grid must contain 0 and 1".into()));
        }
        slopes.sort_by(f64::total_cmp);
        slopes.dedup();
        Ok(GridSpec { slopes, ..GridSpec::default() })
    }

    /// The extreme grid `{0, 1}`.
    pub fn extreme() -> Self {
        GridSpec { slopes: vec![0.0, 1.0], ..GridSpec::default() }
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    /// Every vector of grid values, one per agent, summing to one.
    fn combinations(&self, agents: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        let mut current = Vec::with_capacity(agents);
        self.extend(agents, 0.0, &mut current, &mut out);
        out
    }

    fn extend(&self, agents: usize, used: f64, current: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
        if current.len() == agents {
            if (used - 1.0).abs() < 1e-12 {
                out.push(current.clone());
            }
            return;
        }
        for &s in &self.slopes {
            if used + s > 1.0 + 1e-12 {
                break;
            }
            current.push(s);
            self.extend(agents, used + s, current, out);
            current.pop();
        }
    }
}

/// Choquet integral by sorting states from worst to best and accumulating
/// `Σ (z_(k) - z_(k+1)) T(P(top k states))` above the minimum.
pub fn brute_force_choquet(space: &EmpiricalSpace, z: &LossProfile, d: &Distortion) -> Result<f64> {
    let m = space.state_count();
    if m > MAX_CHOQUET_STATES {
        return Err(Error::TooLarge(format!("{m} states")));
    }
    if z.len() != m {
        return Err(Error::LengthMismatch { expected: m, actual: z.len() });
    }
    let values = z.values();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let p = space.weights();
    let mut total = values[order[m - 1]];
    let mut cumulative = 0.0;
    for k in 0..m - 1 {
        cumulative += p[order[k]];
        let drop = values[order[k]] - values[order[k + 1]];
        if drop > 0.0 {
            total += drop * d.eval(cumulative.min(1.0))?;
        }
    }
    Ok(total)
}

fn check_po_size(agents: &[AgentSpec], grid: &GridSpec) -> Result<usize> {
    let first = agents.first().ok_or_else(|| Error::InvalidParameter("no agents".into()))?;
    let m = first.belief.state_count();
    if m > grid.max_states || agents.len() > grid.max_agents {
        return Err(Error::TooLarge(format!("{} agents on {m} states", agents.len())));
    }
    Ok(m)
}

/// Minimum of `Σ_i ρ_i(g_i(S))` over comonotone allocations whose per-layer
/// slopes come from the grid. Agents must hold a single distortion each.
pub fn brute_force_po(agents: &[AgentSpec], grid: &GridSpec) -> Result<f64> {
    let m = check_po_size(agents, grid)?;
    if agents.iter().any(|a| !a.distortions.is_singleton()) {
        return Err(Error::InvalidParameter("brute_force_po needs singleton sets".into()));
    }
    let n = agents.len();
    let mut s = vec![0.0; m];
    for a in agents {
        if a.endowment.len() != m {
            return Err(Error::LengthMismatch { expected: m, actual: a.endowment.len() });
        }
        for (acc, x) in s.iter_mut().zip(a.endowment.values()) {
            *acc += x;
        }
    }
    let mut levels: Vec<f64> = s.iter().copied().filter(|x| *x > 0.0).collect();
    levels.push(0.0);
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let layer_count = levels.len() - 1;
    let combos = grid.combinations(n);

    let mut best = f64::INFINITY;
    let mut pick = vec![0usize; layer_count];
    loop {
        let mut total = 0.0;
        for (i, agent) in agents.iter().enumerate() {
            let g: Vec<f64> = s
                .iter()
                .map(|&x| {
                    (0..layer_count)
                        .map(|k| combos[pick[k]][i] * (x.min(levels[k + 1]) - levels[k]).max(0.0))
                        .sum()
                })
                .collect();
            let g = LossProfile::new(g)?;
            total += brute_force_choquet(&agent.belief, &g, agent.distortions.get(0))?;
        }
        best = best.min(total);

        // odometer over per-layer combinations
        let mut k = 0;
        loop {
            if k == layer_count {
                return Ok(best);
            }
            pick[k] += 1;
            if pick[k] < combos.len() {
                break;
            }
            pick[k] = 0;
            k += 1;
        }
    }
}

/// Maximum over the candidate product of [`brute_force_po`] with the chosen
/// candidates fixed.
pub fn brute_force_robust(agents: &[AgentSpec], grid: &GridSpec) -> Result<f64> {
    check_po_size(agents, grid)?;
    let sizes: Vec<usize> = agents.iter().map(|a| a.distortions.len()).collect();
    let product = sizes.iter().try_fold(1usize, |acc, s| acc.checked_mul(*s));
    if product.is_none_or(|p| p > MAX_ROBUST_PRODUCT) {
        return Err(Error::TooLarge("candidate product above 1000".into()));
    }
    let mut best = f64::NEG_INFINITY;
    let mut choice = vec![0usize; agents.len()];
    loop {
        let fixed: Vec<AgentSpec> = agents
            .iter()
            .zip(&choice)
            .map(|(a, &c)| AgentSpec {
                distortions: DistortionSet::singleton(a.distortions.get(c).clone()),
                ..a.clone()
            })
            .collect();
        best = best.max(brute_force_po(&fixed, grid)?);
        let mut i = 0;
        loop {
            if i == agents.len() {
                return Ok(best);
            }
            choice[i] += 1;
            if choice[i] < sizes[i] {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// Vertices of the ES dual set `{q : 0 <= q_w <= p_w / α, Σ q = 1}`: every
/// state at a bound except at most one.
pub fn dual_set_vertices(space: &EmpiricalSpace, alpha: f64) -> Result<Vec<Vec<f64>>> {
    let m = space.state_count();
    if m > MAX_LP_STATES {
        return Err(Error::TooLarge(format!("{m} states")));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!("level {alpha} outside (0, 1]")));
    }
    let upper: Vec<f64> = space.weights().iter().map(|p| p / alpha).collect();
    let mut out = Vec::new();
    for free in 0..m {
        for mask in 0u32..(1 << m) {
            if mask & (1 << free) != 0 {
                continue;
            }
            let mut q: Vec<f64> =
                (0..m).map(|w| if mask & (1 << w) != 0 { upper[w] } else { 0.0 }).collect();
            let rest = 1.0 - q.iter().sum::<f64>();
            if rest < -1e-12 || rest > upper[free] + 1e-12 {
                continue;
            }
            q[free] = rest.clamp(0.0, upper[free]);
            out.push(q);
        }
    }
    Ok(out)
}

/// `max E_q[Z]` over [`dual_set_vertices`].
pub fn brute_force_es(space: &EmpiricalSpace, z: &LossProfile, alpha: f64) -> Result<f64> {
    if z.len() != space.state_count() {
        return Err(Error::LengthMismatch { expected: space.state_count(), actual: z.len() });
    }
    Ok(dual_set_vertices(space, alpha)?
        .iter()
        .map(|q| q.iter().zip(z.values()).map(|(a, b)| a * b).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max))
}

/// One piece of the objective: `width * min{q(E), nu}`.
struct Piece {
    states: Vec<bool>,
    nu: f64,
    width: f64,
}

fn lp_pieces(market: &CentralMarket) -> Vec<Piece> {
    let p = market.space.weights();
    let mut pieces = Vec::new();
    for holder in &market.policyholders {
        let x = holder.endowment.values();
        let mut levels: Vec<f64> = x.iter().copied().filter(|v| *v > 0.0).collect();
        levels.push(0.0);
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        for k in 0..levels.len() - 1 {
            let states: Vec<bool> = x.iter().map(|v| *v > levels[k]).collect();
            let prob: f64 = states.iter().zip(p).filter(|(e, _)| **e).map(|(_, w)| w).sum();
            pieces.push(Piece {
                states,
                nu: holder.distortion.eval_clamped(prob),
                width: levels[k + 1] - levels[k],
            });
        }
    }
    pieces
}

fn lp_objective(pieces: &[Piece], q: &[f64]) -> f64 {
    pieces
        .iter()
        .map(|piece| {
            let mass: f64 = piece.states.iter().zip(q).filter(|(e, _)| **e).map(|(_, v)| v).sum();
            piece.width * mass.min(piece.nu)
        })
        .sum()
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting; `None`
/// when the system is singular.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
        if a[pivot][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let (upper, lower) = a.split_at_mut(col + 1);
        let pivot_row = &upper[col];
        for (offset, target) in lower.iter_mut().enumerate() {
            let f = target[col] / pivot_row[col];
            if f != 0.0 {
                for (t, p) in target[col..n].iter_mut().zip(&pivot_row[col..n]) {
                    *t -= f * p;
                }
                b[col + 1 + offset] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = ((row + 1)..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

fn next_subset(idx: &mut [usize], universe: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < universe - k + i {
            idx[i] += 1;
            for j in (i + 1)..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Maximum of `Σ_i Σ_k width_k min{q(X_i > b_k), ν_i(X_i > b_k)}` over the
/// ES dual set. The objective is concave and piecewise linear, so its
/// maximum sits at a vertex of the arrangement formed by the polytope's
/// facets together with the kink hyperplanes `q(X_i > b_k) = ν_i`; every such
/// vertex is enumerated.
pub fn brute_force_lp(market: &CentralMarket) -> Result<f64> {
    let m = market.space.state_count();
    if m > MAX_LP_STATES {
        return Err(Error::TooLarge(format!("{m} states")));
    }
    let upper: Vec<f64> = market.space.weights().iter().map(|p| p / market.alpha).collect();
    let pieces = lp_pieces(market);

    // candidate active constraints besides Σ q = 1
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for w in 0..m {
        let mut e = vec![0.0; m];
        e[w] = 1.0;
        rows.push((e.clone(), 0.0));
        rows.push((e, upper[w]));
    }
    for piece in &pieces {
        let a: Vec<f64> = piece.states.iter().map(|&e| if e { 1.0 } else { 0.0 }).collect();
        if !rows.iter().any(|(r, v)| *r == a && *v == piece.nu) {
            rows.push((a, piece.nu));
        }
    }

    let feasible = |q: &[f64]| {
        let total: f64 = q.iter().sum();
        (total - 1.0).abs() < 1e-9
            && q.iter().zip(&upper).all(|(v, u)| *v >= -1e-9 && *v <= u + 1e-9)
    };
    let mut best = f64::NEG_INFINITY;
    let k = m - 1;
    let mut idx: Vec<usize> = (0..k).collect();
    if rows.len() < k {
        return Err(Error::Lp("too few constraints for a vertex".into()));
    }
    loop {
        let mut a = vec![vec![1.0; m]];
        let mut b = vec![1.0];
        for &r in &idx {
            a.push(rows[r].0.clone());
            b.push(rows[r].1);
        }
        if let Some(q) = solve_linear(a, b) {
            if feasible(&q) {
                best = best.max(lp_objective(&pieces, &q));
            }
        }
        if !next_subset(&mut idx, rows.len()) {
            break;
        }
    }
    if best == f64::NEG_INFINITY {
        return Err(Error::Lp("dual set has no vertex".into()));
    }
    Ok(best)
}
