//! Maximum-likelihood fitting of a single family and rotation.

use super::{tau_to_param, Bicop, Family, PseudoObs};
use crate::error::{Error, Result};
use crate::numeric::optimize::{brent_minimize, nelder_mead};
use crate::rank::kendall_tau;

/// Minimum number of observations for a pair-copula fit.
pub const MIN_FIT_OBS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct FittedBicop {
    pub bicop: Bicop,
    /// Sum of the raw log contributions.
    pub loglik: f64,
    /// Log-likelihood relative to the independence copula.
    pub loglik_relative: f64,
}

/// Kendall's tau of the pseudo-observations, using cell midpoints for
/// discrete coordinates; 0 when either side is constant.
pub fn empirical_tau(obs: &[PseudoObs]) -> f64 {
    let u: Vec<f64> = obs.iter().map(|o| o.u.mid()).collect();
    let v: Vec<f64> = obs.iter().map(|o| o.v.mid()).collect();
    kendall_tau(&u, &v).unwrap_or(0.0)
}

fn unchecked(family: Family, rotation: u16, params: Vec<f64>) -> Bicop {
    Bicop {
        family,
        rotation,
        params,
    }
}

fn start_params(family: Family, rotation: u16, tau: f64) -> Result<Vec<f64>> {
    let negated = rotation == 90 || rotation == 270;
    let base = if negated { -tau } else { tau };
    if family.is_one_sided() && base < 0.0 {
        return Err(Error::TauUnattainable {
            family: format!("{family:?}").to_lowercase(),
            rotation,
            tau,
        });
    }
    let mut base = base.clamp(-0.9, 0.9);
    if base.abs() < 1e-3 {
        base = 1e-3;
    }
    let t = if negated { -base } else { base };
    let mut params = tau_to_param(family, rotation, t)?;
    for (p, (lo, hi)) in params.iter_mut().zip(family.bounds()) {
        *p = p.clamp(*lo, *hi);
    }
    Ok(params)
}

/// Fits `family` under `rotation` by maximum likelihood, starting from the
/// tau-inversion point. Fails with `TauUnattainable` when the empirical tau
/// has the wrong sign for a one-sided family.
pub fn fit_bicop(family: Family, rotation: u16, obs: &[PseudoObs]) -> Result<FittedBicop> {
    if obs.len() < MIN_FIT_OBS {
        return Err(Error::TooFewObservations {
            needed: MIN_FIT_OBS,
            got: obs.len(),
        });
    }
    if !family.rotations().contains(&rotation) {
        return Err(Error::InvalidParameter {
            family: format!("{family:?}").to_lowercase(),
            reason: format!("rotation {rotation} not supported"),
        });
    }
    if family == Family::StudentT && obs.iter().any(|o| o.u.discrete || o.v.discrete) {
        return Err(Error::InvalidArgument(
            "the Student-t family is only fitted to continuous pairs".into(),
        ));
    }
    let finish = |b: Bicop| {
        let loglik = b.loglik(obs);
        let loglik_relative = b.loglik_relative(obs);
        FittedBicop {
            bicop: b,
            loglik,
            loglik_relative,
        }
    };
    if family == Family::Independence {
        return Ok(finish(Bicop::independence()));
    }
    let start = start_params(family, rotation, empirical_tau(obs))?;
    let best = if family == Family::StudentT {
        let (rlo, rhi) = family.bounds()[0];
        let (nlo, nhi) = family.bounds()[1];
        let decode = |z: &[f64]| {
            vec![
                z[0].tanh().clamp(rlo, rhi),
                (2.0 + z[1].exp()).clamp(nlo, nhi),
            ]
        };
        let objective = |z: &[f64]| -unchecked(family, rotation, decode(z)).loglik(obs);
        let z0 = [start[0].atanh(), (start[1] - 2.0).ln()];
        let m = nelder_mead(objective, &z0, &[0.1, 0.5], 1e-10, 400);
        let f0 = objective(&z0);
        if m.fx <= f0 {
            decode(&m.x)
        } else {
            start
        }
    } else {
        let (lo, hi) = family.bounds()[0];
        let fix = |x: f64| {
            if family == Family::Frank && x.abs() < 1e-10 {
                1e-10f64.copysign(x)
            } else {
                x
            }
        };
        let objective = |x: f64| -unchecked(family, rotation, vec![fix(x)]).loglik(obs);
        let m = brent_minimize(objective, lo, hi, Some(start[0]), 1e-8, 200);
        if m.fx <= objective(start[0]) {
            vec![fix(m.x)]
        } else {
            start
        }
    };
    Ok(finish(Bicop::new(family, rotation, best)?))
}
