//! Unrotated family formulas. Every function takes arguments strictly inside
//! (0,1); `h` is the conditional distribution `C(u | v) = dC/dv`, and `hinv`
//! solves `h(u, v) = w` for `u`. All supported families are exchangeable, so
//! the other conditional is `h(v, u)`.

use super::Family;
use crate::error::{Error, Result};
use crate::numeric::quadrature::integrate;
use crate::numeric::{bvn_cdf, ln_gamma, norm_cdf, norm_quantile, t_cdf, t_quantile};

/// `ln(e^a + e^b - 1)` for `a, b >= 0`, stable for large arguments.
fn ln_sum_exp_minus_one(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp() - (-m).exp()).ln()
}

fn ln_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `1 - (1 - u)^delta`, accurate for small `u`.
fn joe_one_minus_pow(u: f64, delta: f64) -> f64 {
    -(delta * (-u).ln_1p()).exp_m1()
}

/// `(ln S, 1 - (1-u)^delta)` with `S = 1 - (1 - (1-u)^d)(1 - (1-v)^d)`.
fn joe_ln_s(u: f64, v: f64, delta: f64) -> (f64, f64) {
    let ma = joe_one_minus_pow(u, delta);
    let mb = joe_one_minus_pow(v, delta);
    let prod = ma * mb;
    let ln_s = if prod > 0.5 {
        let x = (delta * (-u).ln_1p()).exp();
        let b = (delta * (-v).ln_1p()).exp();
        (x + b * ma).ln()
    } else {
        (-prod).ln_1p()
    };
    (ln_s, ma)
}

pub(super) fn cdf(family: Family, p: &[f64], u: f64, v: f64) -> f64 {
    match family {
        Family::Independence => u * v,
        Family::Gaussian => bvn_cdf(norm_quantile(u), norm_quantile(v), p[0]),
        Family::StudentT => {
            integrate(|s| h(family, p, u, s), 0.0, v, 1e-15, 1e-13).clamp(0.0, u.min(v))
        }
        Family::Clayton => {
            let th = p[0];
            let s = ln_sum_exp_minus_one(-th * u.ln(), -th * v.ln());
            (-s / th).exp()
        }
        Family::Gumbel => {
            let d = p[0];
            let la = ln_sum_exp(d * (-u.ln()).ln(), d * (-v.ln()).ln()) / d;
            (-la.exp()).exp()
        }
        Family::Frank => {
            let th = p[0];
            let a = (-th * u).exp_m1();
            let b = (-th * v).exp_m1();
            let c = (-th).exp_m1();
            -(a * b / c).ln_1p() / th
        }
        Family::Joe => {
            let d = p[0];
            let (ln_s, _) = joe_ln_s(u, v, d);
            -(ln_s / d).exp_m1()
        }
    }
}

pub(super) fn log_pdf(family: Family, p: &[f64], u: f64, v: f64) -> f64 {
    match family {
        Family::Independence => 0.0,
        Family::Gaussian => {
            let r = p[0];
            let (x, y) = (norm_quantile(u), norm_quantile(v));
            let q = 1.0 - r * r;
            -0.5 * q.ln() - (r * r * (x * x + y * y) - 2.0 * r * x * y) / (2.0 * q)
        }
        Family::StudentT => {
            let (r, nu) = (p[0], p[1]);
            let (x, y) = (t_quantile(u, nu), t_quantile(v, nu));
            let q = 1.0 - r * r;
            let ln_joint = ln_gamma((nu + 2.0) / 2.0)
                - ln_gamma(nu / 2.0)
                - (nu * std::f64::consts::PI).ln()
                - 0.5 * q.ln()
                - (nu + 2.0) / 2.0 * ((x * x + y * y - 2.0 * r * x * y) / (nu * q)).ln_1p();
            let ln_marg = |z: f64| {
                ln_gamma((nu + 1.0) / 2.0)
                    - ln_gamma(nu / 2.0)
                    - 0.5 * (nu * std::f64::consts::PI).ln()
                    - (nu + 1.0) / 2.0 * (z * z / nu).ln_1p()
            };
            ln_joint - ln_marg(x) - ln_marg(y)
        }
        Family::Clayton => {
            let th = p[0];
            let (lu, lv) = (u.ln(), v.ln());
            let s = ln_sum_exp_minus_one(-th * lu, -th * lv);
            (1.0 + th).ln() - (th + 1.0) * (lu + lv) - (1.0 / th + 2.0) * s
        }
        Family::Gumbel => {
            let d = p[0];
            let (lu, lv) = (u.ln(), v.ln());
            let (lx, ly) = ((-lu).ln(), (-lv).ln());
            let la = ln_sum_exp(d * lx, d * ly) / d;
            let a = la.exp();
            -a - lu - lv + (d - 1.0) * (lx + ly) + (1.0 - 2.0 * d) * la + (a + d - 1.0).ln()
        }
        Family::Frank => {
            let th = p[0];
            let a = (-th * u).exp_m1();
            let b = (-th * v).exp_m1();
            let c = (-th).exp_m1();
            (-th * c).ln() - th * (u + v) - 2.0 * (c + a * b).abs().ln()
        }
        Family::Joe => {
            let d = p[0];
            let (lub, lvb) = ((-u).ln_1p(), (-v).ln_1p());
            let (ln_s, _) = joe_ln_s(u, v, d);
            (1.0 / d - 2.0) * ln_s + (d - 1.0) * (lub + lvb) + (d - 1.0 + ln_s.exp()).ln()
        }
    }
}

pub(super) fn h(family: Family, p: &[f64], u: f64, v: f64) -> f64 {
    let out = match family {
        Family::Independence => u,
        Family::Gaussian => {
            let r = p[0];
            norm_cdf((norm_quantile(u) - r * norm_quantile(v)) / (1.0 - r * r).sqrt())
        }
        Family::StudentT => {
            let (r, nu) = (p[0], p[1]);
            let (x, y) = (t_quantile(u, nu), t_quantile(v, nu));
            let scale = ((nu + y * y) * (1.0 - r * r) / (nu + 1.0)).sqrt();
            t_cdf((x - r * y) / scale, nu + 1.0)
        }
        Family::Clayton => {
            let th = p[0];
            let (lu, lv) = (u.ln(), v.ln());
            let s = ln_sum_exp_minus_one(-th * lu, -th * lv);
            (-(th + 1.0) * lv - (1.0 / th + 1.0) * s).exp()
        }
        Family::Gumbel => {
            let d = p[0];
            let (lu, lv) = (u.ln(), v.ln());
            let (lx, ly) = ((-lu).ln(), (-lv).ln());
            let la = ln_sum_exp(d * lx, d * ly) / d;
            (-la.exp() + (1.0 - d) * la + (d - 1.0) * ly - lv).exp()
        }
        Family::Frank => {
            let th = p[0];
            let a = (-th * u).exp_m1();
            let b = (-th * v).exp_m1();
            let c = (-th).exp_m1();
            a * (b + 1.0) / (c + a * b)
        }
        Family::Joe => {
            let d = p[0];
            let (ln_s, ma) = joe_ln_s(u, v, d);
            ((1.0 / d - 1.0) * ln_s + (d - 1.0) * (-v).ln_1p()).exp() * ma
        }
    };
    out.clamp(0.0, 1.0)
}

pub(super) fn hinv(family: Family, p: &[f64], w: f64, v: f64) -> Result<f64> {
    Ok(match family {
        Family::Independence => w,
        Family::Gaussian => {
            let r = p[0];
            norm_cdf(norm_quantile(w) * (1.0 - r * r).sqrt() + r * norm_quantile(v))
        }
        Family::StudentT => {
            let (r, nu) = (p[0], p[1]);
            let y = t_quantile(v, nu);
            let scale = ((nu + y * y) * (1.0 - r * r) / (nu + 1.0)).sqrt();
            t_cdf(t_quantile(w, nu + 1.0) * scale + r * y, nu)
        }
        Family::Clayton => {
            let th = p[0];
            let lv = v.ln();
            let big_b = -th * lv;
            let diff = -th / (th + 1.0) * w.ln();
            // ln(e^A + 1 - e^B) with A - B = diff >= 0
            let t = big_b + diff.exp_m1().ln();
            let ln_inner = if t > 0.0 {
                t + (-t).exp().ln_1p()
            } else {
                t.exp().ln_1p()
            };
            (-ln_inner / th).exp()
        }
        Family::Frank => {
            let th = p[0];
            let b = (-th * v).exp_m1();
            let c = (-th).exp_m1();
            let a = w * c / ((b + 1.0) - w * b);
            -a.ln_1p() / th
        }
        Family::Gumbel | Family::Joe => return numeric_hinv(family, p, w, v),
    }
    .clamp(0.0, 1.0))
}

/// Safeguarded Newton iteration on `h(., v) = w` inside a shrinking bracket.
fn numeric_hinv(family: Family, p: &[f64], w: f64, v: f64) -> Result<f64> {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut u = w;
    for _ in 0..200 {
        let f = h(family, p, u, v) - w;
        if f.abs() < 1e-14 {
            break;
        }
        if f < 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
        let d = log_pdf(family, p, u, v).exp();
        let newton = u - f / d;
        u = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    let residual = (h(family, p, u, v) - w).abs();
    if residual <= 1e-8 {
        Ok(u)
    } else {
        Err(Error::NonConvergence(format!(
            "inverse h-function of {family:?} at w={w}, v={v} (residual {residual:e})"
        )))
    }
}

/// Kendall's tau of the unrotated family.
pub(super) fn tau(family: Family, p: &[f64]) -> f64 {
    match family {
        Family::Independence => 0.0,
        Family::Gaussian | Family::StudentT => 2.0 / std::f64::consts::PI * p[0].asin(),
        Family::Clayton => p[0] / (p[0] + 2.0),
        Family::Gumbel => 1.0 - 1.0 / p[0],
        Family::Frank => frank_tau(p[0]),
        Family::Joe => joe_tau(p[0]),
    }
}

pub(super) fn frank_tau(theta: f64) -> f64 {
    let t = theta.abs();
    let tau = if t < 1e-2 {
        t / 9.0 - t.powi(3) / 900.0
    } else {
        let debye = integrate(
            |s| if s == 0.0 { 1.0 } else { s / s.exp_m1() },
            0.0,
            t,
            1e-15,
            1e-14,
        ) / t;
        1.0 - 4.0 / t * (1.0 - debye)
    };
    tau.copysign(theta)
}

pub(super) fn joe_tau(delta: f64) -> f64 {
    if delta == 1.0 {
        return 0.0;
    }
    let g = |s: f64| {
        let sd = s.powf(delta);
        if sd < 1e-15 {
            -s / delta
        } else {
            (-sd).ln_1p() * (1.0 - sd) / (delta * s.powf(delta - 1.0))
        }
    };
    1.0 + 4.0 * integrate(g, 0.0, 1.0, 1e-15, 1e-13)
}
