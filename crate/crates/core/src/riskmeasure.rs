//! Finite probability spaces, loss profiles and the risk measures evaluated on
//! them: Choquet integrals of distortions, VaR, ES and robust distortion risk
//! measures.

use serde::{Deserialize, Serialize};

use crate::distortion::{Distortion, DistortionSet};
use crate::error::{Error, Result};

/// Tolerance on the total mass of an [`EmpiricalSpace`].
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Finite state space with one probability weight per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmpiricalSpace {
    weights: Vec<f64>,
}

impl TryFrom<Vec<f64>> for EmpiricalSpace {
    type Error = Error;

    fn try_from(weights: Vec<f64>) -> Result<Self> {
        EmpiricalSpace::new(weights)
    }
}

impl From<EmpiricalSpace> for Vec<f64> {
    fn from(space: EmpiricalSpace) -> Self {
        space.weights
    }
}

impl EmpiricalSpace {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter("space needs at least one state".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidParameter(format!("weight {w} is not a probability")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidParameter(format!("weights sum to {total}, expected 1")));
        }
        Ok(EmpiricalSpace { weights })
    }

    /// Equal weight on `states` states. The last weight absorbs the rounding
    /// of `1/states` so that the weights sum to exactly one.
    pub fn uniform(states: usize) -> Result<Self> {
        if states == 0 {
            return Err(Error::InvalidParameter("space needs at least one state".into()));
        }
        let w = 1.0 / states as f64;
        let mut weights = vec![w; states];
        let head: f64 = weights[..states - 1].iter().sum();
        weights[states - 1] = 1.0 - head;
        Ok(EmpiricalSpace { weights })
    }

    pub fn state_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn check(&self, z: &LossProfile) -> Result<()> {
        if z.len() != self.state_count() {
            return Err(Error::LengthMismatch { expected: self.state_count(), actual: z.len() });
        }
        Ok(())
    }
}

/// One money amount per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LossProfile {
    values: Vec<f64>,
}

impl TryFrom<Vec<f64>> for LossProfile {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        LossProfile::new(values)
    }
}

impl From<LossProfile> for Vec<f64> {
    fn from(p: LossProfile) -> Self {
        p.values
    }
}

impl LossProfile {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite loss {v}")));
        }
        Ok(LossProfile { values })
    }

    /// A profile that must be a non-negative initial endowment.
    pub fn endowment(values: Vec<f64>) -> Result<Self> {
        let p = Self::new(values)?;
        if let Some(v) = p.values.iter().find(|v| **v < 0.0) {
            return Err(Error::InvalidParameter(format!("negative endowment {v}")));
        }
        Ok(p)
    }

    pub fn constant(value: f64, states: usize) -> Self {
        LossProfile { values: vec![value; states] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_non_negative(&self) -> bool {
        self.values.iter().all(|v| *v >= 0.0)
    }

    pub fn shifted(&self, c: f64) -> LossProfile {
        LossProfile { values: self.values.iter().map(|v| v + c).collect() }
    }

    pub fn scaled(&self, lambda: f64) -> LossProfile {
        LossProfile { values: self.values.iter().map(|v| v * lambda).collect() }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> LossProfile {
        LossProfile { values: self.values.iter().map(|v| f(*v)).collect() }
    }

    /// State-wise sum of equally long profiles.
    pub fn sum<'a>(profiles: impl IntoIterator<Item = &'a LossProfile>) -> Result<LossProfile> {
        let mut iter = profiles.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::InvalidParameter("sum of zero profiles".into()))?;
        let mut values = first.values.clone();
        for p in iter {
            if p.len() != values.len() {
                return Err(Error::LengthMismatch { expected: values.len(), actual: p.len() });
            }
            for (acc, v) in values.iter_mut().zip(&p.values) {
                *acc += v;
            }
        }
        Ok(LossProfile { values })
    }
}

/// Distinct values of `z` in ascending order, each with `Q(Z > value)`.
///
/// Exceedance masses are accumulated from the top so that small tail
/// probabilities do not suffer cancellation.
pub fn exceedance_table(space: &EmpiricalSpace, z: &LossProfile) -> Result<Vec<(f64, f64)>> {
    space.check(z)?;
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| z.values[a].total_cmp(&z.values[b]));

    let mut groups: Vec<(f64, f64)> = Vec::new();
    for &i in &order {
        let v = z.values[i];
        match groups.last_mut() {
            Some((last, mass)) if *last == v => *mass += space.weights[i],
            _ => groups.push((v, space.weights[i])),
        }
    }
    let mut above: f64 = 0.0;
    let mut table = vec![(0.0, 0.0); groups.len()];
    for (k, (v, mass)) in groups.iter().enumerate().rev() {
        table[k] = (*v, above.min(1.0));
        above += mass;
    }
    Ok(table)
}

/// `Q(Z > x)` with strict inequality.
pub fn survival(space: &EmpiricalSpace, z: &LossProfile, x: f64) -> Result<f64> {
    space.check(z)?;
    let s: f64 = z
        .values
        .iter()
        .zip(&space.weights)
        .filter(|(v, _)| **v > x)
        .map(|(_, w)| *w)
        .sum();
    Ok(s.min(1.0))
}

/// Choquet integral of `z` with respect to `g ∘ Q` for an arbitrary
/// normalized, non-decreasing set function generator `g`.
pub(crate) fn choquet_with(
    space: &EmpiricalSpace,
    z: &LossProfile,
    g: impl Fn(f64) -> f64,
) -> Result<f64> {
    let table = exceedance_table(space, z)?;
    let mut value = table[0].0;
    for w in table.windows(2) {
        let (lo, surv) = w[0];
        let hi = w[1].0;
        value += (hi - lo) * g(surv);
    }
    Ok(value)
}

/// Distortion risk measure `∫ Z dT∘Q`.
///
/// Evaluated exactly on the layers between consecutive distinct values of `z`;
/// profiles with negative values are handled by translation from the minimum.
pub fn choquet(space: &EmpiricalSpace, z: &LossProfile, d: &Distortion) -> Result<f64> {
    choquet_with(space, z, |t| d.eval_clamped(t))
}

fn check_level(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("level {alpha} outside (0, 1)")));
    }
    Ok(())
}

/// Slack on `Q(Z > t) <= alpha` absorbing rounding in accumulated weights.
const LEVEL_SLACK: f64 = 1e-12;

/// Value-at-Risk `inf { t : Q(Z > t) <= alpha }`.
pub fn var(space: &EmpiricalSpace, z: &LossProfile, alpha: f64) -> Result<f64> {
    check_level(alpha)?;
    let table = exceedance_table(space, z)?;
    for (value, surv) in &table {
        if *surv <= alpha + LEVEL_SLACK {
            return Ok(*value);
        }
    }
    // the top value always has zero exceedance
    Ok(table[table.len() - 1].0)
}

/// Expected Shortfall `(1/alpha) ∫_0^alpha VaR_u du`, integrated exactly over
/// the piecewise-constant quantile function.
pub fn es(space: &EmpiricalSpace, z: &LossProfile, alpha: f64) -> Result<f64> {
    check_level(alpha)?;
    space.check(z)?;
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| z.values[b].total_cmp(&z.values[a]));

    let mut covered = 0.0;
    let mut integral = 0.0;
    for &i in &order {
        if covered >= alpha {
            break;
        }
        let take = space.weights[i].min(alpha - covered);
        integral += take * z.values[i];
        covered += take;
    }
    if covered < alpha {
        integral += (alpha - covered) * z.min();
    }
    Ok(integral / alpha)
}

/// A maximizer of `E_Q[Z]` over `{Q : dQ/dP <= 1/alpha}`: fills the largest
/// outcomes up to their density cap until the mass reaches one.
pub fn es_dual_measure(space: &EmpiricalSpace, z: &LossProfile, alpha: f64) -> Result<Vec<f64>> {
    check_level(alpha)?;
    space.check(z)?;
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| z.values[b].total_cmp(&z.values[a]).then(a.cmp(&b)));
    let mut q = vec![0.0; z.len()];
    let mut mass = 0.0;
    for &i in &order {
        let take = (space.weights[i] / alpha).min(1.0 - mass);
        if take <= 0.0 {
            break;
        }
        q[i] = take;
        mass += take;
    }
    Ok(q)
}

/// Robust distortion risk measure: the largest Choquet integral over the
/// candidate set, with the index of the first candidate attaining it.
pub fn robust_drm(space: &EmpiricalSpace, z: &LossProfile, set: &DistortionSet) -> Result<(f64, usize)> {
    let mut best = (f64::NEG_INFINITY, 0);
    for (idx, d) in set.candidates().iter().enumerate() {
        let v = choquet(space, z, d)?;
        if v > best.0 {
            best = (v, idx);
        }
    }
    Ok(best)
}
