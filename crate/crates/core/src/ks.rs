//! One-sample Kolmogorov–Smirnov test against the χ²₁ law.

use libm::erf;

/// CDF of the χ² distribution with one degree of freedom.
pub fn chi2_1_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        erf((0.5 * x).sqrt())
    }
}

/// Kolmogorov distribution tail `P(K > t)`.
pub fn kolmogorov_tail(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t < 0.2 {
        // the alternating series converges slowly here and the tail is 1
        // to double precision
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * t * t).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// KS distance between the empirical distribution of `sample` and `cdf`,
/// with the asymptotic p-value using Stephens' finite-sample correction.
pub fn ks_test(sample: &[f64], cdf: &dyn Fn(f64) -> f64) -> KsResult {
    let mut xs: Vec<f64> = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let sn = n.sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_tail((sn + 0.12 + 0.11 / sn) * d),
    }
}

pub fn ks_chi2_1(sample: &[f64]) -> KsResult {
    ks_test(sample, &chi2_1_cdf)
}
