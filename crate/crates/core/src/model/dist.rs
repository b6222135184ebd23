//! Sampling primitives used by the Gibbs sweeps.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `log N(x; mean, variance)`.
pub fn normal_log_density(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + variance.ln() + d * d / variance)
}

/// Log density of a half-Normal with scale `scale`, evaluated at `x >= 0`.
pub fn half_normal_log_density(x: f64, scale: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    std::f64::consts::LN_2 + normal_log_density(x, 0.0, scale * scale)
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws from `N(Q^{-1} b, Q^{-1})` for a symmetric positive definite
/// tridiagonal precision `Q` given by its diagonal and first off-diagonal.
///
/// Uses the banded Cholesky factor `Q = L L'`: the draw is
/// `L'^{-1} (L^{-1} b + z)` with `z` standard normal.
pub fn sample_tridiagonal_gaussian<R: Rng + ?Sized>(
    diag: &[f64],
    off: &[f64],
    linear: &[f64],
    rng: &mut R,
    out: &mut [f64],
) {
    solve_tridiagonal(diag, off, linear, out, |_| standard_normal(rng));
}

/// Mean `Q^{-1} b` of the Gaussian with tridiagonal precision `Q`.
pub fn tridiagonal_mean(diag: &[f64], off: &[f64], linear: &[f64], out: &mut [f64]) {
    solve_tridiagonal(diag, off, linear, out, |_| 0.0);
}

fn solve_tridiagonal(diag: &[f64], off: &[f64], linear: &[f64], out: &mut [f64], mut noise: impl FnMut(usize) -> f64) {
    let n = diag.len();
    debug_assert_eq!(off.len() + 1, n.max(1));
    debug_assert_eq!(linear.len(), n);
    if n == 0 {
        return;
    }
    let mut l = vec![0.0; n];
    let mut m = vec![0.0; n.saturating_sub(1)];
    l[0] = diag[0].sqrt();
    for i in 1..n {
        m[i - 1] = off[i - 1] / l[i - 1];
        l[i] = (diag[i] - m[i - 1] * m[i - 1]).max(f64::MIN_POSITIVE).sqrt();
    }
    // Forward solve L y = b, then add noise.
    out[0] = linear[0] / l[0];
    for i in 1..n {
        out[i] = (linear[i] - m[i - 1] * out[i - 1]) / l[i];
    }
    for (i, v) in out.iter_mut().enumerate() {
        *v += noise(i);
    }
    // Back solve L' x = y + z.
    out[n - 1] /= l[n - 1];
    for i in (0..n - 1).rev() {
        out[i] = (out[i] - m[i] * out[i + 1]) / l[i];
    }
}

/// Standard normal restricted to `[a, b]`.
///
/// Uses plain rejection when the interval holds enough mass, an
/// exponential proposal in the tails, and a uniform proposal for narrow
/// intervals.
pub fn truncated_standard_normal<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    debug_assert!(a <= b);
    if a == b {
        return a;
    }
    // Reflect so the interval does not lie entirely below zero.
    if b <= 0.0 {
        return -truncated_standard_normal(-b, -a, rng);
    }
    if a < 0.0 {
        // Interval straddles zero.
        if b - a > 2.5 {
            loop {
                let z = standard_normal(rng);
                if z >= a && z <= b {
                    return z;
                }
            }
        }
        loop {
            let z = rng.random_range(a..=b);
            if rng.random::<f64>().ln() <= -0.5 * z * z {
                return z;
            }
        }
    }
    // 0 <= a < b: upper tail.
    let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
    if b - a > 1.0 / lambda {
        loop {
            let e: f64 = Exp1.sample(rng);
            let z = a + e / lambda;
            if z > b {
                continue;
            }
            let d = z - lambda;
            if rng.random::<f64>().ln() <= -0.5 * d * d {
                return z;
            }
        }
    }
    loop {
        let z = rng.random_range(a..=b);
        if rng.random::<f64>().ln() <= 0.5 * (a * a - z * z) {
            return z;
        }
    }
}

/// `N(mean, sd^2)` restricted to `[lo, hi]`.
pub fn truncated_normal<R: Rng + ?Sized>(mean: f64, sd: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    let z = truncated_standard_normal((lo - mean) / sd, (hi - mean) / sd, rng);
    (mean + sd * z).clamp(lo, hi)
}

/// One univariate slice-sampling update with stepping out and shrinkage.
pub fn slice_sample<R: Rng + ?Sized>(x0: f64, log_density: impl Fn(f64) -> f64, width: f64, rng: &mut R) -> f64 {
    const MAX_STEPS: usize = 64;
    let f0 = log_density(x0);
    debug_assert!(f0.is_finite(), "slice sampler started outside the support");
    let level = f0 + rng.random::<f64>().ln();

    let mut left = x0 - width * rng.random::<f64>();
    let mut right = left + width;
    let mut j = rng.random_range(0..MAX_STEPS);
    let mut k = MAX_STEPS - 1 - j;
    while j > 0 && log_density(left) > level {
        left -= width;
        j -= 1;
    }
    while k > 0 && log_density(right) > level {
        right += width;
        k -= 1;
    }
    loop {
        let x1 = rng.random_range(left..right);
        if log_density(x1) > level {
            return x1;
        }
        if x1 < x0 {
            left = x1;
        } else {
            right = x1;
        }
        if right - left < 1e-14 * (1.0 + x0.abs()) {
            return x0;
        }
    }
}
