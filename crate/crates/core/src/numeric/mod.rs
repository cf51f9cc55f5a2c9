//! Special functions and small numerical routines shared across modules.

pub mod optimize;
pub mod quadrature;

use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf::{erfc, erfc_inv};
use std::f64::consts::{PI, SQRT_2};

/// Clamp applied to every copula argument.
pub const EPS: f64 = 1e-10;

/// Floor for individual likelihood contributions.
pub const DENSITY_FLOOR: f64 = 1e-300;

pub fn clamp_unit(u: f64) -> f64 {
    if u.is_nan() {
        return 0.5;
    }
    u.clamp(EPS, 1.0 - EPS)
}

pub fn log_floor(x: f64) -> f64 {
    if x.is_nan() || x < DENSITY_FLOOR {
        DENSITY_FLOOR.ln()
    } else {
        x.ln()
    }
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    -SQRT_2 * erfc_inv(2.0 * p)
}

fn student(df: f64) -> StudentsT {
    StudentsT::new(0.0, 1.0, df).expect("degrees of freedom validated by caller")
}

pub fn t_cdf(x: f64, df: f64) -> f64 {
    student(df).cdf(x)
}

pub fn t_quantile(p: f64, df: f64) -> f64 {
    student(df).inverse_cdf(p)
}

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

// Gauss-Legendre half-rules (6, 12 and 20 points) for the bivariate normal.
const GL_X: [&[f64]; 3] = [
    &[-0.932_469_514_203_152_2, -0.661_209_386_466_264_7, -0.238_619_186_083_197],
    &[
        -0.981_560_634_246_719_1,
        -0.904_117_256_370_475,
        -0.769_902_674_194_305,
        -0.587_317_954_286_617_1,
        -0.367_831_498_998_180_2,
        -0.125_233_408_511_469_2,
    ],
    &[
        -0.993_128_599_185_094_9,
        -0.963_971_927_277_913_8,
        -0.912_234_428_251_325_9,
        -0.839_116_971_822_218_8,
        -0.746_331_906_460_150_8,
        -0.636_053_680_726_515,
        -0.510_867_001_950_827_1,
        -0.373_706_088_715_419_6,
        -0.227_785_851_141_645_1,
        -0.076_526_521_133_497_33,
    ],
];
const GL_W: [&[f64]; 3] = [
    &[0.171_324_492_379_170_5, 0.360_761_573_048_138_4, 0.467_913_934_572_690_4],
    &[
        0.047_175_336_386_511_77,
        0.106_939_325_995_318_3,
        0.160_078_328_543_346_4,
        0.203_167_426_723_065_9,
        0.233_492_536_538_354_7,
        0.249_147_045_813_402_9,
    ],
    &[
        0.017_614_007_139_152_12,
        0.040_601_429_800_386_94,
        0.062_672_048_334_109_06,
        0.083_276_741_576_704_75,
        0.101_930_119_817_240_4,
        0.118_194_531_961_518_4,
        0.131_688_638_449_176_6,
        0.142_096_109_318_382_1,
        0.149_172_986_472_603_7,
        0.152_753_387_130_725_9,
    ],
];

/// Upper bivariate normal probability P(X > h, Y > k) with correlation `r`
/// (Drezner-Wesolowsky with Genz's refinements; absolute error about 1e-15).
fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    let twopi = 2.0 * PI;
    let ng = if r.abs() < 0.3 {
        0
    } else if r.abs() < 0.75 {
        1
    } else {
        2
    };
    let (xs_tab, ws_tab) = (GL_X[ng], GL_W[ng]);
    let mut k = k;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin();
        for (x, w) in xs_tab.iter().zip(ws_tab) {
            for sgn in [1.0, -1.0] {
                let sn = (asr * (sgn * x + 1.0) / 2.0).sin();
                bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        return bvn * asr / (2.0 * twopi) + norm_cdf(-h) * norm_cdf(-k);
    }
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    if r.abs() < 1.0 {
        let a_s = (1.0 - r) * (1.0 + r);
        let mut a = a_s.sqrt();
        let bs = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        bvn = a
            * (-(bs / a_s + hk) / 2.0).exp()
            * (1.0 - c * (bs - a_s) * (1.0 - d * bs / 5.0) / 3.0 + c * d * a_s * a_s / 5.0);
        if hk > -160.0 {
            let b = bs.sqrt();
            bvn -= (-hk / 2.0).exp()
                * twopi.sqrt()
                * norm_cdf(-b / a)
                * b
                * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
        }
        a /= 2.0;
        for (x, w) in xs_tab.iter().zip(ws_tab) {
            for sgn in [1.0, -1.0] {
                let xs = (a * (sgn * x + 1.0)).powi(2);
                let rs = (1.0 - xs).sqrt();
                let asr = -(bs / xs + hk) / 2.0;
                if asr > -100.0 {
                    bvn += a
                        * w
                        * asr.exp()
                        * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs
                            - (1.0 + c * xs * (1.0 + d * xs)));
                }
            }
        }
        bvn = -bvn / twopi;
    }
    if r > 0.0 {
        bvn + norm_cdf(-h.max(k))
    } else {
        let mut out = -bvn;
        if k > h {
            if h < 0.0 {
                out += norm_cdf(k) - norm_cdf(h);
            } else {
                out += norm_cdf(-h) - norm_cdf(-k);
            }
        }
        out
    }
}

/// Bivariate standard normal CDF P(X <= h, Y <= k) with correlation `r`.
/// Infinite limits are accepted.
pub fn bvn_cdf(h: f64, k: f64, r: f64) -> f64 {
    if h == f64::NEG_INFINITY || k == f64::NEG_INFINITY {
        return 0.0;
    }
    if h == f64::INFINITY {
        return norm_cdf(k);
    }
    if k == f64::INFINITY {
        return norm_cdf(h);
    }
    if r >= 1.0 {
        return norm_cdf(h.min(k));
    }
    if r <= -1.0 {
        return (norm_cdf(h) - norm_cdf(-k)).max(0.0);
    }
    bvn_upper(-h, -k, r).clamp(0.0, 1.0)
}

/// Bisection for a nondecreasing function on `[lo, hi]`; returns `x` with `f(x) ~ target`.
pub fn bisect_increasing<F: Fn(f64) -> f64>(
    f: F,
    target: f64,
    mut lo: f64,
    mut hi: f64,
    max_iter: usize,
    xtol: f64,
) -> Option<f64> {
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= xtol {
            return Some(0.5 * (lo + hi));
        }
    }
    None
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the n-1 denominator.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Type-7 (linear interpolation) quantile of already sorted values.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::quadrature::integrate;
    use super::*;

    fn bvn_by_quadrature(h: f64, k: f64, r: f64) -> f64 {
        let s = (1.0 - r * r).sqrt();
        integrate(
            |x| norm_pdf(x) * norm_cdf((k - r * x) / s),
            -40.0,
            h,
            1e-14,
            1e-13,
        )
    }

    #[test]
    fn gauss_legendre_weights_sum_to_one() {
        for w in GL_W {
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn bvn_matches_quadrature() {
        for &r in &[-0.99, -0.95, -0.8, -0.5, -0.2, 0.0, 0.1, 0.4, 0.7, 0.9, 0.93, 0.99] {
            for &h in &[-3.0, -1.2, 0.0, 0.4, 2.5] {
                for &k in &[-2.0, -0.3, 0.0, 1.1, 3.0] {
                    let a = bvn_cdf(h, k, r);
                    let b = bvn_by_quadrature(h, k, r);
                    assert!((a - b).abs() < 1e-9, "r={r} h={h} k={k}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn bvn_limits() {
        assert_eq!(bvn_cdf(f64::NEG_INFINITY, 0.3, 0.5), 0.0);
        assert!((bvn_cdf(f64::INFINITY, 0.3, 0.5) - norm_cdf(0.3)).abs() < 1e-15);
        assert!((bvn_cdf(0.0, 0.0, 0.0) - 0.25).abs() < 1e-15);
        // P(X<=0,Y<=0) = 1/4 + asin(r)/(2 pi)
        let r: f64 = 0.6;
        assert!((bvn_cdf(0.0, 0.0, r) - (0.25 + r.asin() / (2.0 * PI))).abs() < 1e-13);
    }

    #[test]
    fn normal_quantile_round_trip() {
        for &p in &[1e-10, 1e-4, 0.1, 0.5, 0.77, 1.0 - 1e-9] {
            let x = norm_quantile(p);
            assert!((norm_cdf(x) - p).abs() / p.min(1.0 - p) < 1e-9);
        }
    }

    #[test]
    fn type7_quantile() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&xs, 0.0), 1.0);
        assert_eq!(quantile_sorted(&xs, 1.0), 4.0);
        assert!((quantile_sorted(&xs, 0.5) - 2.5).abs() < 1e-15);
    }
}
