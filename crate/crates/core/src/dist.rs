//! Small distribution toolkit shared by the samplers.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn std_normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

pub fn chi_squared_quantile(p: f64, df: f64) -> f64 {
    ChiSquared::new(df)
        .expect("positive degrees of freedom")
        .inverse_cdf(p)
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Draw from N(0,1) restricted to `(lower, inf)`.
pub fn truncated_normal_above<R: Rng + ?Sized>(rng: &mut R, lower: f64) -> f64 {
    if lower < 0.45 {
        loop {
            let z = normal(rng);
            if z > lower {
                return z;
            }
        }
    }
    // Robert (1995) exponential proposal with optimal rate.
    let rate = 0.5 * (lower + (lower * lower + 4.0).sqrt());
    loop {
        let u: f64 = rng.random();
        let z = lower - u.ln() / rate;
        let accept = (-0.5 * (z - rate) * (z - rate)).exp();
        if rng.random::<f64>() <= accept {
            return z;
        }
    }
}

/// Latent draw for probit augmentation: N(mean, 1) restricted to the side of
/// zero given by `positive`.
pub fn probit_latent<R: Rng + ?Sized>(rng: &mut R, mean: f64, positive: bool) -> f64 {
    if positive {
        mean + truncated_normal_above(rng, -mean)
    } else {
        mean - truncated_normal_above(rng, mean)
    }
}

/// Draw of log(G) with G ~ Gamma(shape, 1); stable for tiny shapes.
pub fn log_gamma_draw<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    if shape >= 1.0 {
        let g: f64 = Gamma::new(shape, 1.0).expect("valid gamma").sample(rng);
        g.ln()
    } else {
        let g: f64 = Gamma::new(shape + 1.0, 1.0)
            .expect("valid gamma")
            .sample(rng);
        let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        g.ln() + u.ln() / shape
    }
}

/// Chi-squared draw with `df` degrees of freedom.
pub fn chi_squared<R: Rng + ?Sized>(rng: &mut R, df: f64) -> f64 {
    Gamma::new(0.5 * df, 2.0).expect("valid gamma").sample(rng)
}

/// Triangular (min, mode, max) draw by inverse CDF of a uniform `u`.
pub fn triangular_inverse_cdf(min: f64, mode: f64, max: f64, u: f64) -> f64 {
    let width = max - min;
    if width <= 0.0 {
        return min;
    }
    let split = (mode - min) / width;
    if u < split {
        min + (u * width * (mode - min)).sqrt()
    } else {
        max - ((1.0 - u) * width * (max - mode)).sqrt()
    }
}

/// Closed-form (mean, variance) of a triangular distribution.
pub fn triangular_moments(min: f64, mode: f64, max: f64) -> (f64, f64) {
    let mean = (min + mode + max) / 3.0;
    let var = (min * min + mode * mode + max * max - min * mode - min * max - mode * max) / 18.0;
    (mean, var)
}

/// Skew-normal SN(location, scale, shape) via the two-normal representation:
/// with `d = shape / sqrt(1 + shape^2)`, `location + scale * (d |U0| + sqrt(1-d^2) U1)`.
pub fn skew_normal<R: Rng + ?Sized>(rng: &mut R, location: f64, scale: f64, shape: f64) -> f64 {
    let d = shape / (1.0 + shape * shape).sqrt();
    let u0 = normal(rng).abs();
    let u1 = normal(rng);
    location + scale * (d * u0 + (1.0 - d * d).sqrt() * u1)
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn mean(values: &[f64]) -> f64 {
    compensated_sum(values.iter().copied()) / values.len() as f64
}

/// Sample variance with denominator `n - 1`.
pub fn sample_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    compensated_sum(values.iter().map(|v| (v - m) * (v - m))) / (values.len() as f64 - 1.0)
}

/// Linear-interpolation quantile of sorted data (type 7: `h = (n-1) p`).
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
