//! Parametric distortion functions `T: [0,1] -> [0,1]` and the probabilistic
//! risk-aversion indices derived from them.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower end (exclusive) of the Kahneman-Tversky parameter range, below which
/// the weighting function stops being monotone.
pub const KT_GAMMA_MIN: f64 = 0.279;

/// Number of uniform grid points used by the monotonicity check.
pub const MONOTONICITY_GRID: usize = 10_000;

/// Central finite-difference step for families without closed-form derivatives.
pub const FD_STEP: f64 = 1e-6;

/// Raw family tag plus parameters, as written in configuration files.
///
/// A `Family` may hold out-of-range parameters; [`validate`] reports them and
/// [`Distortion::new`] refuses them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    Identity,
    Power { gamma: f64 },
    Prelec1 { alpha: f64 },
    Prelec2 { alpha: f64, beta: f64 },
    KahnemanTversky { gamma: f64 },
    /// `T(t) = min(t / alpha, 1)`, the distortion of Expected Shortfall.
    Tvar { alpha: f64 },
    /// Piecewise-linear interpolation between `(t, T(t))` knots.
    Tabulated { knots: Vec<[f64; 2]> },
}

impl Family {
    fn eval_unchecked(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= 1.0 {
            return 1.0;
        }
        match self {
            Family::Identity => t,
            Family::Power { gamma } => t.powf(*gamma),
            Family::Prelec1 { alpha } => (-(-t.ln()).powf(*alpha)).exp(),
            Family::Prelec2 { alpha, beta } => (-beta * (-t.ln()).powf(*alpha)).exp(),
            Family::KahnemanTversky { gamma } => {
                let a = t.powf(*gamma);
                let b = (1.0 - t).powf(*gamma);
                a / (a + b).powf(1.0 / gamma)
            }
            Family::Tvar { alpha } => (t / alpha).min(1.0),
            Family::Tabulated { knots } => interpolate(knots, t),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Family::Identity => "identity",
            Family::Power { .. } => "power",
            Family::Prelec1 { .. } => "prelec1",
            Family::Prelec2 { .. } => "prelec2",
            Family::KahnemanTversky { .. } => "kahneman_tversky",
            Family::Tvar { .. } => "tvar",
            Family::Tabulated { .. } => "tabulated",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Identity => write!(f, "identity"),
            Family::Power { gamma } => write!(f, "power(gamma={gamma})"),
            Family::Prelec1 { alpha } => write!(f, "prelec1(alpha={alpha})"),
            Family::Prelec2 { alpha, beta } => write!(f, "prelec2(alpha={alpha}, beta={beta})"),
            Family::KahnemanTversky { gamma } => write!(f, "kahneman_tversky(gamma={gamma})"),
            Family::Tvar { alpha } => write!(f, "tvar(alpha={alpha})"),
            Family::Tabulated { knots } => write!(f, "tabulated({} knots)", knots.len()),
        }
    }
}

fn interpolate(knots: &[[f64; 2]], t: f64) -> f64 {
    // knots are sorted by t; partition_point finds the first knot strictly right of t
    let idx = knots.partition_point(|k| k[0] <= t);
    if idx == 0 {
        return knots[0][1];
    }
    if idx == knots.len() {
        return knots[knots.len() - 1][1];
    }
    let [t0, v0] = knots[idx - 1];
    let [t1, v1] = knots[idx];
    if t1 == t0 {
        return v1;
    }
    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
}

/// A single invariant violated by a distortion description.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    ParameterRange { parameter: &'static str, value: f64, expected: &'static str },
    Boundary { at: f64, value: f64 },
    Monotonicity { from: f64, to: f64 },
    Knots(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ParameterRange { parameter, value, expected } => {
                write!(f, "parameter {parameter}={value} outside {expected}")
            }
            Violation::Boundary { at, value } => write!(f, "T({at}) = {value}, expected {at}"),
            Violation::Monotonicity { from, to } => write!(f, "decreasing between t={from} and t={to}"),
            Violation::Knots(msg) => write!(f, "knots: {msg}"),
        }
    }
}

/// Outcome of [`validate`]; valid iff `violations` is empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        let parts: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        write!(f, "{}", parts.join("; "))
    }
}

fn check_range(
    out: &mut Vec<Violation>,
    parameter: &'static str,
    value: f64,
    ok: bool,
    expected: &'static str,
) {
    if !ok || !value.is_finite() {
        out.push(Violation::ParameterRange { parameter, value, expected });
    }
}

/// Checks parameter ranges, boundary normalization and monotonicity.
///
/// Parametric families are checked for monotonicity on a uniform grid of
/// [`MONOTONICITY_GRID`] points; tabulated distortions knot by knot.
pub fn validate(family: &Family) -> ValidationReport {
    let mut v = Vec::new();
    match family {
        Family::Identity => {}
        Family::Power { gamma } => check_range(&mut v, "gamma", *gamma, *gamma > 0.0, "(0, inf)"),
        Family::Prelec1 { alpha } => {
            check_range(&mut v, "alpha", *alpha, *alpha > 0.0 && *alpha < 1.0, "(0, 1)")
        }
        Family::Prelec2 { alpha, beta } => {
            check_range(&mut v, "alpha", *alpha, *alpha > 0.0 && *alpha < 1.0, "(0, 1)");
            check_range(&mut v, "beta", *beta, *beta > 0.0, "(0, inf)");
        }
        Family::KahnemanTversky { gamma } => check_range(
            &mut v,
            "gamma",
            *gamma,
            *gamma > KT_GAMMA_MIN && *gamma <= 1.0,
            "(0.279, 1]",
        ),
        Family::Tvar { alpha } => {
            check_range(&mut v, "alpha", *alpha, *alpha > 0.0 && *alpha < 1.0, "(0, 1)")
        }
        Family::Tabulated { knots } => return validate_knots(knots),
    }
    if !v.is_empty() {
        // the closed forms are meaningless outside their parameter domain
        return ValidationReport { violations: v };
    }

    for at in [0.0, 1.0] {
        let value = family.eval_unchecked(at);
        if value != at {
            v.push(Violation::Boundary { at, value });
        }
    }
    let step = 1.0 / (MONOTONICITY_GRID - 1) as f64;
    let mut prev = family.eval_unchecked(0.0);
    for k in 1..MONOTONICITY_GRID {
        let t = k as f64 * step;
        let cur = family.eval_unchecked(t);
        if !cur.is_finite() || cur < prev - 1e-12 {
            v.push(Violation::Monotonicity { from: (k - 1) as f64 * step, to: t });
            break;
        }
        prev = cur;
    }
    ValidationReport { violations: v }
}

fn validate_knots(knots: &[[f64; 2]]) -> ValidationReport {
    let mut v = Vec::new();
    if knots.len() < 2 {
        v.push(Violation::Knots("need at least two knots".into()));
        return ValidationReport { violations: v };
    }
    if knots.iter().any(|k| !k[0].is_finite() || !k[1].is_finite()) {
        v.push(Violation::Knots("non-finite knot".into()));
        return ValidationReport { violations: v };
    }
    if knots.windows(2).any(|w| w[1][0] <= w[0][0]) {
        v.push(Violation::Knots("abscissae must be strictly increasing".into()));
    }
    let first = knots[0];
    let last = knots[knots.len() - 1];
    if first[0] != 0.0 || last[0] != 1.0 {
        v.push(Violation::Knots("abscissae must span [0, 1]".into()));
    }
    if first[1] != 0.0 {
        v.push(Violation::Boundary { at: 0.0, value: first[1] });
    }
    if last[1] != 1.0 {
        v.push(Violation::Boundary { at: 1.0, value: last[1] });
    }
    for w in knots.windows(2) {
        if w[1][1] < w[0][1] {
            v.push(Violation::Monotonicity { from: w[0][0], to: w[1][0] });
        }
    }
    ValidationReport { violations: v }
}

/// A validated distortion function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Family", into = "Family")]
pub struct Distortion {
    family: Family,
}

impl TryFrom<Family> for Distortion {
    type Error = Error;

    fn try_from(family: Family) -> Result<Self> {
        Distortion::new(family)
    }
}

impl From<Distortion> for Family {
    fn from(d: Distortion) -> Family {
        d.family
    }
}

impl fmt::Display for Distortion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.family.fmt(f)
    }
}

impl Distortion {
    pub fn new(family: Family) -> Result<Self> {
        let report = validate(&family);
        if !report.is_valid() {
            return Err(Error::InvalidParameter(format!("{family}: {report}")));
        }
        Ok(Distortion { family })
    }

    pub fn identity() -> Self {
        Distortion { family: Family::Identity }
    }

    pub fn power(gamma: f64) -> Result<Self> {
        Self::new(Family::Power { gamma })
    }

    pub fn prelec1(alpha: f64) -> Result<Self> {
        Self::new(Family::Prelec1 { alpha })
    }

    pub fn prelec2(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(Family::Prelec2 { alpha, beta })
    }

    pub fn kahneman_tversky(gamma: f64) -> Result<Self> {
        Self::new(Family::KahnemanTversky { gamma })
    }

    pub fn tvar(alpha: f64) -> Result<Self> {
        Self::new(Family::Tvar { alpha })
    }

    pub fn tabulated(knots: Vec<[f64; 2]>) -> Result<Self> {
        Self::new(Family::Tabulated { knots })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// `T(t)` for `t` in `[0, 1]`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain(format!("t={t} outside [0, 1]")));
        }
        Ok(self.eval_clamped(t))
    }

    /// `T(t)` with `t` clamped into `[0, 1]`; used on survival probabilities
    /// that may carry rounding error.
    pub(crate) fn eval_clamped(&self, t: f64) -> f64 {
        self.family.eval_unchecked(t.clamp(0.0, 1.0))
    }

    /// Probabilistic risk-aversion index `-T''(t) / T'(t)`.
    pub fn pra(&self, t: f64) -> Result<f64> {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::Domain(format!("t={t} outside (0, 1)")));
        }
        match &self.family {
            Family::Identity => Ok(0.0),
            Family::Power { gamma } => Ok((1.0 - gamma) / t),
            Family::Prelec1 { alpha } => {
                let ln_t = t.ln();
                let u = -ln_t;
                Ok((ln_t + alpha * u.powf(*alpha) - alpha + 1.0) / (t * ln_t))
            }
            Family::Prelec2 { alpha, beta } => {
                let ln_t = t.ln();
                let u = -ln_t;
                Ok((ln_t + alpha * beta * u.powf(*alpha) - alpha + 1.0) / (t * ln_t))
            }
            Family::KahnemanTversky { .. } => {
                let h = FD_STEP.min(t / 2.0).min((1.0 - t) / 2.0);
                let lo = self.family.eval_unchecked(t - h);
                let mid = self.family.eval_unchecked(t);
                let hi = self.family.eval_unchecked(t + h);
                let d1 = (hi - lo) / (2.0 * h);
                let d2 = (hi - 2.0 * mid + lo) / (h * h);
                if d1 == 0.0 {
                    return Err(Error::Singularity(format!("T'({t}) = 0")));
                }
                Ok(-d2 / d1)
            }
            Family::Tvar { alpha } => {
                if t < *alpha {
                    Ok(0.0)
                } else {
                    Err(Error::Singularity(format!("T'({t}) = 0 for tvar(alpha={alpha})")))
                }
            }
            Family::Tabulated { .. } => Err(Error::Unsupported(
                "risk-aversion index of a tabulated distortion".into(),
            )),
        }
    }

    /// Relative index `t * PRA(t)`.
    pub fn rpra(&self, t: f64) -> Result<f64> {
        Ok(t * self.pra(t)?)
    }

    pub fn family_name(&self) -> &'static str {
        self.family.name()
    }
}

/// First `t` in `(0, 1)` at which `a(t) - b(t)` changes sign, located by grid
/// scan and bisection. `None` if the curves do not cross on the grid.
pub fn crossing(a: &Distortion, b: &Distortion) -> Option<f64> {
    let diff = |t: f64| a.eval_clamped(t) - b.eval_clamped(t);
    let n = MONOTONICITY_GRID;
    let mut prev_t = 1.0 / n as f64;
    let mut prev = diff(prev_t);
    for k in 2..n {
        let t = k as f64 / n as f64;
        let cur = diff(t);
        if prev != 0.0 && cur != 0.0 && prev.signum() != cur.signum() {
            let (mut lo, mut hi) = (prev_t, t);
            let lo_sign = prev.signum();
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if diff(mid).signum() == lo_sign {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Some(0.5 * (lo + hi));
        }
        if cur == 0.0 {
            return Some(t);
        }
        prev_t = t;
        prev = cur;
    }
    None
}

/// Non-empty finite set of candidate distortions of a robust risk measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Distortion>", into = "Vec<Distortion>")]
pub struct DistortionSet {
    candidates: Vec<Distortion>,
}

impl TryFrom<Vec<Distortion>> for DistortionSet {
    type Error = Error;

    fn try_from(candidates: Vec<Distortion>) -> Result<Self> {
        DistortionSet::new(candidates)
    }
}

impl From<DistortionSet> for Vec<Distortion> {
    fn from(set: DistortionSet) -> Self {
        set.candidates
    }
}

impl From<Distortion> for DistortionSet {
    fn from(d: Distortion) -> Self {
        DistortionSet::singleton(d)
    }
}

impl DistortionSet {
    pub fn new(candidates: Vec<Distortion>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::InvalidParameter("distortion set must be non-empty".into()));
        }
        Ok(DistortionSet { candidates })
    }

    pub fn singleton(d: Distortion) -> Self {
        DistortionSet { candidates: vec![d] }
    }

    pub fn candidates(&self) -> &[Distortion] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_singleton(&self) -> bool {
        self.candidates.len() == 1
    }

    pub fn get(&self, idx: usize) -> &Distortion {
        &self.candidates[idx]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const E_INV: f64 = 0.36787944117144233;

    #[test]
    fn prelec1_fixes_inflection_point() {
        for alpha in [0.1, 0.5, 0.9] {
            let d = Distortion::prelec1(alpha).unwrap();
            assert!((d.eval(E_INV).unwrap() - E_INV).abs() < 1e-15);
        }
    }

    #[test]
    fn boundaries_are_normalized() {
        let all = [
            Distortion::identity(),
            Distortion::power(0.3).unwrap(),
            Distortion::prelec1(0.4).unwrap(),
            Distortion::prelec2(0.5, 1.3).unwrap(),
            Distortion::kahneman_tversky(0.61).unwrap(),
            Distortion::tvar(0.15).unwrap(),
            Distortion::tabulated(vec![[0.0, 0.0], [0.2, 0.5], [1.0, 1.0]]).unwrap(),
        ];
        for d in &all {
            assert_eq!(d.eval(0.0).unwrap(), 0.0, "{d}");
            assert_eq!(d.eval(1.0).unwrap(), 1.0, "{d}");
        }
    }

    #[test]
    fn power_square_root() {
        let d = Distortion::power(0.5).unwrap();
        assert_eq!(d.eval(0.25).unwrap(), 0.5);
    }

    #[test]
    fn eval_rejects_outside_unit_interval() {
        let d = Distortion::identity();
        assert!(matches!(d.eval(-0.1), Err(Error::Domain(_))));
        assert!(matches!(d.eval(1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn tabulated_interpolates_linearly() {
        let d = Distortion::tabulated(vec![[0.0, 0.0], [0.5, 0.8], [1.0, 1.0]]).unwrap();
        assert!((d.eval(0.25).unwrap() - 0.4).abs() < 1e-15);
        assert!((d.eval(0.75).unwrap() - 0.9).abs() < 1e-15);
        assert!(matches!(d.pra(0.3), Err(Error::Unsupported(_))));
    }

    #[test]
    fn pra_examples() {
        let p = Distortion::prelec1(0.7).unwrap();
        assert!(p.pra(E_INV).unwrap().abs() < 1e-12);
        let pw = Distortion::power(0.4).unwrap();
        assert!((pw.pra(0.5).unwrap() - 1.2).abs() < 1e-12);
        let lo = Distortion::prelec1(0.3).unwrap().pra(0.1).unwrap();
        let hi = Distortion::prelec1(0.9).unwrap().pra(0.1).unwrap();
        assert!(lo > hi);
    }

    #[test]
    fn rpra_examples() {
        let pw = Distortion::power(0.4).unwrap();
        for t in [0.01, 0.3, 0.77] {
            assert!((pw.rpra(t).unwrap() - 0.6).abs() < 1e-12);
        }
        assert_eq!(Distortion::power(1.0).unwrap().rpra(0.4).unwrap(), 0.0);
        assert!(Distortion::prelec1(0.5).unwrap().rpra(E_INV).unwrap().abs() < 1e-12);
    }

    #[test]
    fn tvar_pra_is_singular_on_flat_part() {
        let d = Distortion::tvar(0.2).unwrap();
        assert_eq!(d.pra(0.1).unwrap(), 0.0);
        assert!(matches!(d.pra(0.5), Err(Error::Singularity(_))));
    }

    #[test]
    fn validate_examples() {
        assert!(validate(&Family::Prelec2 { alpha: 0.5, beta: 1.0 }).is_valid());
        let r = validate(&Family::Prelec1 { alpha: 1.5 });
        assert!(matches!(
            r.violations.as_slice(),
            [Violation::ParameterRange { parameter: "alpha", .. }]
        ));
        let r = validate(&Family::Tabulated { knots: vec![[0.0, 0.0], [0.5, 0.7], [1.0, 0.6]] });
        assert!(r.violations.iter().any(|v| matches!(v, Violation::Monotonicity { .. })));
    }

    #[test]
    fn validate_rejects_out_of_range_kt_and_power() {
        assert!(!validate(&Family::KahnemanTversky { gamma: 0.2 }).is_valid());
        assert!(validate(&Family::KahnemanTversky { gamma: 1.0 }).is_valid());
        assert!(!validate(&Family::Power { gamma: 0.0 }).is_valid());
        assert!(!validate(&Family::Power { gamma: f64::NAN }).is_valid());
        assert!(Distortion::prelec1(1.0).is_err());
    }

    #[test]
    fn distortion_set_rejects_empty() {
        assert!(DistortionSet::new(vec![]).is_err());
        assert!(DistortionSet::singleton(Distortion::identity()).is_singleton());
    }

    #[test]
    fn family_parses_from_toml_inline_table() {
        #[derive(Deserialize)]
        struct Wrap {
            d: Distortion,
        }
        let w: Wrap = toml::from_str("d = { family = \"prelec2\", alpha = 0.5, beta = 2.0 }").unwrap();
        assert_eq!(w.d.family(), &Family::Prelec2 { alpha: 0.5, beta: 2.0 });
        assert!(toml::from_str::<Wrap>("d = { family = \"prelec1\", alpha = 1.5 }").is_err());
        assert!(toml::from_str::<Wrap>("d = { family = \"power\", gamma = 0.5, x = 1 }").is_err());
    }

    #[test]
    fn kt_curves_cross_once() {
        let a = Distortion::kahneman_tversky(0.4).unwrap();
        let b = Distortion::kahneman_tversky(0.5).unwrap();
        let t = crossing(&a, &b).unwrap();
        assert!(t > 0.0 && t < 1.0);
        assert!((a.eval(t).unwrap() - b.eval(t).unwrap()).abs() < 1e-12);
    }
}
