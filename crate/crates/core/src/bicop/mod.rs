//! Parametric bivariate copulas with rotations.
//!
//! A [`Bicop`] is a family, a rotation in degrees and a parameter vector. The
//! rotations reflect the base copula: 90 degrees maps `(u, v)` to `(1-u, v)`,
//! 180 to `(1-u, 1-v)` and 270 to `(u, 1-v)`, so 90 and 270 model negative
//! dependence with families that only reach positive dependence.

mod families;
mod fit;

pub use fit::{empirical_tau, fit_bicop, FittedBicop};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{bisect_increasing, DENSITY_FLOOR};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Independence,
    Gaussian,
    StudentT,
    Clayton,
    Gumbel,
    Frank,
    Joe,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::Independence,
        Family::Gaussian,
        Family::StudentT,
        Family::Clayton,
        Family::Gumbel,
        Family::Frank,
        Family::Joe,
    ];

    pub fn parameter_count(self) -> usize {
        match self {
            Family::Independence => 0,
            Family::StudentT => 2,
            _ => 1,
        }
    }

    /// Rotations accepted for the family.
    pub fn rotations(self) -> &'static [u16] {
        match self {
            Family::Clayton | Family::Gumbel | Family::Joe => &[0, 90, 180, 270],
            _ => &[0],
        }
    }

    /// Whether the family only reaches positive dependence when unrotated.
    pub fn is_one_sided(self) -> bool {
        matches!(self, Family::Clayton | Family::Gumbel | Family::Joe)
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Family::Independence => "I",
            Family::Gaussian => "N",
            Family::StudentT => "t",
            Family::Clayton => "C",
            Family::Gumbel => "G",
            Family::Frank => "F",
            Family::Joe => "J",
        }
    }

    pub fn parse(name: &str) -> Result<Family> {
        Ok(match name.trim().to_ascii_lowercase().as_str() {
            "independence" | "indep" | "i" => Family::Independence,
            "gaussian" | "normal" | "n" => Family::Gaussian,
            "studentt" | "student-t" | "t" => Family::StudentT,
            "clayton" | "c" => Family::Clayton,
            "gumbel" | "g" => Family::Gumbel,
            "frank" | "f" => Family::Frank,
            "joe" | "j" => Family::Joe,
            other => return Err(Error::InvalidArgument(format!("unknown copula family `{other}`"))),
        })
    }

    /// Search interval for each parameter during fitting.
    pub(crate) fn bounds(self) -> &'static [(f64, f64)] {
        match self {
            Family::Independence => &[],
            Family::Gaussian => &[(-0.999, 0.999)],
            Family::StudentT => &[(-0.999, 0.999), (2.001, 50.0)],
            Family::Clayton => &[(1e-4, 28.0)],
            Family::Gumbel => &[(1.0, 50.0)],
            Family::Frank => &[(-35.0, 35.0)],
            Family::Joe => &[(1.0, 30.0)],
        }
    }
}

/// Which argument the conditional distribution conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `C(u | v) = dC/dv`.
    OneGivenTwo,
    /// `C(v | u) = dC/du`.
    TwoGivenOne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bicop {
    family: Family,
    rotation: u16,
    params: Vec<f64>,
}

/// One coordinate of a pseudo-observation: `(F(x), F(x-1))` for discrete
/// variables, `(F(x), F(x))` for continuous ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoValue {
    pub plus: f64,
    pub minus: f64,
    pub discrete: bool,
}

impl PseudoValue {
    pub fn continuous(u: f64) -> Self {
        PseudoValue {
            plus: u,
            minus: u,
            discrete: false,
        }
    }

    pub fn discrete(plus: f64, minus: f64) -> Self {
        PseudoValue {
            plus,
            minus,
            discrete: true,
        }
    }

    /// Representative value used for rank statistics.
    pub fn mid(&self) -> f64 {
        0.5 * (self.plus + self.minus)
    }

    /// Probability mass of the cell, or 1 for a continuous value.
    pub fn mass(&self) -> f64 {
        if self.discrete {
            (self.plus - self.minus).max(DENSITY_FLOOR)
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoObs {
    pub u: PseudoValue,
    pub v: PseudoValue,
}

fn check_unit(x: f64) -> f64 {
    x.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

impl Bicop {
    pub fn new(family: Family, rotation: u16, params: Vec<f64>) -> Result<Self> {
        let invalid = |reason: String| Error::InvalidParameter {
            family: format!("{family:?}").to_lowercase(),
            reason,
        };
        if !family.rotations().contains(&rotation) {
            return Err(invalid(format!("rotation {rotation} not supported")));
        }
        if params.len() != family.parameter_count() {
            return Err(invalid(format!(
                "expected {} parameter(s), got {}",
                family.parameter_count(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(invalid("non-finite parameter".into()));
        }
        let ok = match family {
            Family::Independence => true,
            Family::Gaussian => params[0].abs() < 1.0,
            Family::StudentT => params[0].abs() < 1.0 && params[1] > 2.0,
            Family::Clayton => params[0] > 0.0,
            Family::Gumbel | Family::Joe => params[0] >= 1.0,
            Family::Frank => params[0] != 0.0,
        };
        if !ok {
            return Err(invalid(format!("parameters {params:?} outside the admissible range")));
        }
        Ok(Bicop {
            family,
            rotation,
            params,
        })
    }

    pub fn independence() -> Self {
        Bicop {
            family: Family::Independence,
            rotation: 0,
            params: Vec::new(),
        }
    }

    /// Re-checks invariants, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        Bicop::new(self.family, self.rotation, self.params.clone()).map(|_| ())
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn rotation(&self) -> u16 {
        self.rotation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn is_independence(&self) -> bool {
        self.family == Family::Independence
    }

    /// Report label such as `J(2.5)`, `SC(1.2)` or `RC270(0.40)`.
    pub fn label(&self) -> String {
        let prefix = match self.rotation {
            0 => String::new(),
            180 => "S".into(),
            _ => "R".into(),
        };
        let suffix = match self.rotation {
            90 | 270 => self.rotation.to_string(),
            _ => String::new(),
        };
        let params: Vec<String> = self.params.iter().map(|p| format!("{p:.2}")).collect();
        if params.is_empty() {
            format!("{prefix}{}{suffix}", self.family.short_name())
        } else {
            format!(
                "{prefix}{}{suffix}({})",
                self.family.short_name(),
                params.join(",")
            )
        }
    }

    pub fn cdf(&self, u: f64, v: f64) -> f64 {
        if u <= 0.0 || v <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return v.min(1.0);
        }
        if v >= 1.0 {
            return u;
        }
        let c = |a: f64, b: f64| families::cdf(self.family, &self.params, a, b);
        let out = match self.rotation {
            0 => c(u, v),
            90 => v - c(1.0 - u, v),
            180 => u + v - 1.0 + c(1.0 - u, 1.0 - v),
            _ => u - c(u, 1.0 - v),
        };
        out.clamp((u + v - 1.0).max(0.0), u.min(v))
    }

    pub fn log_pdf(&self, u: f64, v: f64) -> f64 {
        let (u, v) = (check_unit(u), check_unit(v));
        let (a, b) = match self.rotation {
            0 => (u, v),
            90 => (1.0 - u, v),
            180 => (1.0 - u, 1.0 - v),
            _ => (u, 1.0 - v),
        };
        let l = families::log_pdf(self.family, &self.params, a, b);
        if l.is_nan() {
            DENSITY_FLOOR.ln()
        } else {
            l.max(DENSITY_FLOOR.ln())
        }
    }

    pub fn pdf(&self, u: f64, v: f64) -> f64 {
        self.log_pdf(u, v).exp()
    }

    /// Conditional distribution function in the given direction.
    pub fn hfunc(&self, u: f64, v: f64, dir: Direction) -> f64 {
        let (u, v) = (check_unit(u), check_unit(v));
        let h = |a: f64, b: f64| families::h(self.family, &self.params, a, b);
        match (dir, self.rotation) {
            (Direction::OneGivenTwo, 0) => h(u, v),
            (Direction::OneGivenTwo, 90) => 1.0 - h(1.0 - u, v),
            (Direction::OneGivenTwo, 180) => 1.0 - h(1.0 - u, 1.0 - v),
            (Direction::OneGivenTwo, _) => h(u, 1.0 - v),
            (Direction::TwoGivenOne, 0) => h(v, u),
            (Direction::TwoGivenOne, 90) => h(v, 1.0 - u),
            (Direction::TwoGivenOne, 180) => 1.0 - h(1.0 - v, 1.0 - u),
            (Direction::TwoGivenOne, _) => 1.0 - h(1.0 - v, u),
        }
    }

    /// Inverse of [`Bicop::hfunc`] in its free argument: for `OneGivenTwo`
    /// returns `u` with `hfunc(u, cond) = w`; for `TwoGivenOne` returns `v`
    /// with `hfunc(cond, v) = w`.
    pub fn hinv(&self, w: f64, cond: f64, dir: Direction) -> Result<f64> {
        let (w, c) = (check_unit(w), check_unit(cond));
        let hi = |a: f64, b: f64| families::hinv(self.family, &self.params, a, b);
        Ok(match (dir, self.rotation) {
            (Direction::OneGivenTwo, 0) => hi(w, c)?,
            (Direction::OneGivenTwo, 90) => 1.0 - hi(1.0 - w, c)?,
            (Direction::OneGivenTwo, 180) => 1.0 - hi(1.0 - w, 1.0 - c)?,
            (Direction::OneGivenTwo, _) => hi(w, 1.0 - c)?,
            (Direction::TwoGivenOne, 0) => hi(w, c)?,
            (Direction::TwoGivenOne, 90) => hi(w, 1.0 - c)?,
            (Direction::TwoGivenOne, 180) => 1.0 - hi(1.0 - w, 1.0 - c)?,
            (Direction::TwoGivenOne, _) => 1.0 - hi(1.0 - w, c)?,
        })
    }

    /// Kendall's tau; rotations by 90 and 270 degrees negate it.
    pub fn tau(&self) -> f64 {
        let t = families::tau(self.family, &self.params);
        match self.rotation {
            90 | 270 => -t,
            _ => t,
        }
    }

    /// Draws `n` pairs by conditional inversion from a seeded stream.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
        let mut r = rng::stream(seed, rng::key(rng::tags::BICOP_SAMPLE, 0));
        self.sample_with(n, &mut r)
    }

    pub fn sample_with<R: Rng>(&self, n: usize, r: &mut R) -> Result<Vec<(f64, f64)>> {
        (0..n)
            .map(|_| {
                let u = rng::open01(r);
                let w = rng::open01(r);
                Ok((u, self.hinv(w, u, Direction::TwoGivenOne)?))
            })
            .collect()
    }

    /// Monte Carlo Spearman's rho from `n` seeded samples.
    pub fn spearman_mc(&self, n: usize, seed: u64) -> Result<f64> {
        if self.is_independence() {
            return Ok(0.0);
        }
        let mut r = rng::stream(seed, rng::key(rng::tags::SPEARMAN_MC, 0));
        let s = self.sample_with(n, &mut r)?;
        let (u, v): (Vec<f64>, Vec<f64>) = s.into_iter().unzip();
        Ok(crate::rank::spearman(&u, &v).unwrap_or(0.0))
    }

    /// Log contribution of one pseudo-observation: log density for two
    /// continuous coordinates, a difference of conditional distributions for
    /// mixed ones and a rectangle probability for two discrete ones. Floored
    /// at `ln(1e-300)`.
    pub fn log_contribution(&self, o: &PseudoObs) -> f64 {
        let p = match (o.u.discrete, o.v.discrete) {
            (false, false) => return self.log_pdf(o.u.plus, o.v.plus),
            (true, false) => {
                self.hfunc(o.u.plus, o.v.plus, Direction::OneGivenTwo)
                    - self.hfunc(o.u.minus, o.v.plus, Direction::OneGivenTwo)
            }
            (false, true) => {
                self.hfunc(o.u.plus, o.v.plus, Direction::TwoGivenOne)
                    - self.hfunc(o.u.plus, o.v.minus, Direction::TwoGivenOne)
            }
            (true, true) => {
                self.cdf(o.u.plus, o.v.plus) - self.cdf(o.u.plus, o.v.minus)
                    - self.cdf(o.u.minus, o.v.plus)
                    + self.cdf(o.u.minus, o.v.minus)
            }
        };
        if p.is_nan() {
            return DENSITY_FLOOR.ln();
        }
        p.max(DENSITY_FLOOR).ln()
    }

    /// Sum of [`Bicop::log_contribution`] over the observations.
    pub fn loglik(&self, obs: &[PseudoObs]) -> f64 {
        obs.iter().map(|o| self.log_contribution(o)).sum()
    }

    /// Log-likelihood relative to independence: each contribution minus the
    /// log cell masses of its discrete coordinates, so independence scores 0.
    pub fn loglik_relative(&self, obs: &[PseudoObs]) -> f64 {
        if self.is_independence() {
            return 0.0;
        }
        obs.iter()
            .map(|o| self.log_contribution(o) - o.u.mass().ln() - o.v.mass().ln())
            .sum()
    }
}

/// Parameter(s) of `family` under `rotation` whose Kendall's tau equals `tau`.
/// Student-t returns `[rho, 5]`.
pub fn tau_to_param(family: Family, rotation: u16, tau: f64) -> Result<Vec<f64>> {
    let unattainable = || Error::TauUnattainable {
        family: format!("{family:?}").to_lowercase(),
        rotation,
        tau,
    };
    if !(tau > -1.0 && tau < 1.0) || !family.rotations().contains(&rotation) {
        return Err(unattainable());
    }
    let base = if rotation == 90 || rotation == 270 { -tau } else { tau };
    if family.is_one_sided() && base < 0.0 {
        return Err(unattainable());
    }
    let (lo, hi) = family.bounds().first().copied().unwrap_or((0.0, 0.0));
    let params = match family {
        Family::Independence => Vec::new(),
        Family::Gaussian => vec![(std::f64::consts::FRAC_PI_2 * base).sin()],
        Family::StudentT => vec![(std::f64::consts::FRAC_PI_2 * base).sin(), 5.0],
        Family::Clayton => {
            if base <= 0.0 {
                return Err(unattainable());
            }
            vec![2.0 * base / (1.0 - base)]
        }
        Family::Gumbel => vec![1.0 / (1.0 - base)],
        Family::Frank => {
            if base == 0.0 || base.abs() >= families::frank_tau(hi) {
                return Err(unattainable());
            }
            let t = bisect_increasing(families::frank_tau, base.abs(), 0.0, hi, 200, 1e-14)
                .ok_or_else(unattainable)?;
            vec![t.copysign(base)]
        }
        Family::Joe => {
            if base >= families::joe_tau(hi) {
                return Err(unattainable());
            }
            if base == 0.0 {
                vec![1.0]
            } else {
                vec![bisect_increasing(families::joe_tau, base, lo, hi, 200, 1e-14)
                    .ok_or_else(unattainable)?]
            }
        }
    };
    Bicop::new(family, rotation, params.clone()).map_err(|_| unattainable())?;
    Ok(params)
}
