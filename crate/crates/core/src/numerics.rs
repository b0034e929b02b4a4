//! Small numerical helpers shared by the modules: log-sum-exp, the Riemann
//! zeta function, least-squares lines, Monte Carlo error bars and seeded
//! RNG streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic RNG type used throughout the crate.
pub type Rng = ChaCha8Rng;

/// RNG for `(seed, stream)`; distinct streams never overlap.
pub fn rng_stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `log Σ exp(x_i)`, returning `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Riemann zeta `ζ(s) = Σ_{k≥1} k^{-s}` for `s > 1`, by Euler–Maclaurin
/// summation with a 20-term head.
pub fn zeta(s: f64) -> f64 {
    assert!(s > 1.0, "zeta requires s > 1");
    const HEAD: usize = 20;
    let n = HEAD as f64;
    let head: f64 = (1..HEAD).map(|k| (k as f64).powf(-s)).sum();
    // Bernoulli corrections B2, B4, B6, B8.
    let t0 = n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s);
    let t1 = s / 12.0 * n.powf(-s - 1.0);
    let t2 = -s * (s + 1.0) * (s + 2.0) / 720.0 * n.powf(-s - 3.0);
    let t3 = s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) / 30240.0 * n.powf(-s - 5.0);
    let t4 = -s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) * (s + 5.0) * (s + 6.0) / 1209600.0
        * n.powf(-s - 7.0);
    head + t0 + t1 + t2 + t3 + t4
}

/// Ordinary least-squares line through `(x_i, y_i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination; 1 for an exact line or constant data.
    pub r_squared: f64,
    /// Root mean squared residual.
    pub residual: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2, "need two points for a line");
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - (intercept + slope * a);
            r * r
        })
        .sum();
    let r_squared = if syy <= f64::EPSILON * f64::EPSILON {
        1.0
    } else {
        1.0 - sse / syy
    };
    LineFit {
        slope,
        intercept,
        r_squared,
        residual: (sse / n).sqrt(),
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Standard error of the mean of a correlated series by non-overlapping
/// batch means.
pub fn batch_means_se(xs: &[f64], batches: usize) -> f64 {
    let batches = batches.max(2).min(xs.len() / 2).max(2);
    let len = xs.len() / batches;
    if len == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = (0..batches)
        .map(|b| mean(&xs[b * len..(b + 1) * len]))
        .collect();
    (variance(&means) / batches as f64).sqrt()
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeta_known_values() {
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((zeta(2.0) - pi2 / 6.0).abs() < 1e-12);
        assert!((zeta(4.0) - pi2 * pi2 / 90.0).abs() < 1e-12);
        // brute force with integral tail for a non-integer argument
        let s = 1.4;
        let n = 2_000_000usize;
        let brute: f64 = (1..=n).map(|k| (k as f64).powf(-s)).sum::<f64>()
            + (n as f64 + 0.5).powf(1.0 - s) / (s - 1.0);
        assert!((zeta(s) - brute).abs() < 1e-8, "{} vs {}", zeta(s), brute);
    }

    #[test]
    fn log_sum_exp_is_stable() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[-1000.0, -1000.0]);
        assert!((v - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let f = fit_line(&x, &y);
        assert!((f.slope + 0.5).abs() < 1e-14);
        assert!((f.intercept - 2.0).abs() < 1e-14);
        assert!((f.r_squared - 1.0).abs() < 1e-14);
    }

    #[test]
    fn streams_differ_and_repeat() {
        use rand::RngCore;
        let a = rng_stream(7, 0).next_u64();
        let b = rng_stream(7, 1).next_u64();
        assert_ne!(a, b);
        assert_eq!(a, rng_stream(7, 0).next_u64());
    }
}
