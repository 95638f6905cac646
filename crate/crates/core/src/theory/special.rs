//! Special functions behind the null CDFs and p-values.

use core::f64::consts::{PI, SQRT_2};

const EPS: f64 = 1e-15;
const FPMIN: f64 = 1e-300;
const MAX_ITER: usize = 10_000;
/// Series terms smaller than this are dropped from the Kolmogorov sums.
const KS_TERM_CUTOFF: f64 = 1e-10;

pub fn normal_cdf(x: f64, mean: f64, std_dev: f64) -> f64 {
    0.5 * libm::erfc(-(x - mean) / (std_dev * SQRT_2))
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_cont_frac(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_cont_frac(a, x)
    }
}

fn log_prefactor(a: f64, x: f64) -> f64 {
    -x + a * libm::log(x) - libm::lgamma(a)
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if libm::fabs(del) < libm::fabs(sum) * EPS {
            break;
        }
    }
    sum * libm::exp(log_prefactor(a, x))
}

fn gamma_cont_frac(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if libm::fabs(d) < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if libm::fabs(c) < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if libm::fabs(del - 1.0) < EPS {
            break;
        }
    }
    libm::exp(log_prefactor(a, x)) * h
}

pub fn chi_squared_cdf(x: f64, dof: f64) -> f64 {
    gamma_p(dof / 2.0, x / 2.0)
}

pub fn chi_squared_sf(x: f64, dof: f64) -> f64 {
    gamma_q(dof / 2.0, x / 2.0)
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-theta form, fast for small lambda.
        let factor = libm::sqrt(2.0 * PI) / lambda;
        let w = PI * PI / (8.0 * lambda * lambda);
        let mut sum = 0.0;
        for k in 1..MAX_ITER {
            let m = (2 * k - 1) as f64;
            let term = libm::exp(-m * m * w);
            sum += term;
            if term * factor < KS_TERM_CUTOFF {
                break;
            }
        }
        (1.0 - factor * sum).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        let mut sign = 1.0;
        for k in 1..MAX_ITER {
            let kf = k as f64;
            let term = 2.0 * libm::exp(-2.0 * kf * kf * lambda * lambda);
            sum += sign * term;
            sign = -sign;
            if term < KS_TERM_CUTOFF {
                break;
            }
        }
        sum.clamp(0.0, 1.0)
    }
}
