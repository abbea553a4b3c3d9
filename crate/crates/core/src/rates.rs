//! Asymptotic concentration exponents of the mixed-data posterior, pseudo-true
//! limits of the per-structure MLEs, and the observational posterior limit
//! inside the Markov equivalence class.
//!
//! For a true S1 model `θ*` holds S1 parameters; for a true S2 model it holds
//! S2 parameters (`w` is then the coefficient of X(1) in X(2)).

use crate::error::{Error, Result};
use crate::prior::{prior_logpdf, pushforward_prior_logpdf, BgeHyper};
use crate::sem::{gamma_inverse, gamma_map, Params, StructureId};

/// Observational ratios closer than this to 0 or 1 are clamped when sampling
/// curves.
pub const ETA_CLAMP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateInput {
    pub theta_star: Params,
    pub y: f64,
    pub eta: f64,
}

impl RateInput {
    pub fn new(theta_star: Params, y: f64, eta: f64) -> Result<Self> {
        theta_star.validate()?;
        if !y.is_finite() {
            return Err(Error::InvalidParams(format!("intervention value must be finite, got {y}")));
        }
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::InvalidParams(format!("eta must lie in (0, 1), got {eta}")));
        }
        Ok(Self { theta_star, y, eta })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExponentId {
    D12,
    D21,
    D13,
    D23,
    D12Gain,
    D21Gain,
}

impl ExponentId {
    pub fn name(self) -> &'static str {
        match self {
            ExponentId::D12 => "d12",
            ExponentId::D21 => "d21",
            ExponentId::D13 => "d13",
            ExponentId::D23 => "d23",
            ExponentId::D12Gain => "d12_gain",
            ExponentId::D21Gain => "d21_gain",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateCurve {
    pub eta: Vec<f64>,
    pub values: Vec<f64>,
    pub id: ExponentId,
}

// Closed forms on the closed interval [0, 1]; the public wrappers take a
// validated RateInput.

fn d12_raw(t: &Params, y: f64, eta: f64) -> f64 {
    let w2 = t.w * t.w;
    let sx = w2 * t.tau2_sq + t.tau1_sq;
    let sy = w2 * y * y + t.tau1_sq;
    let mix = eta * sx + (1.0 - eta) * sy;
    0.5 * (mix.ln() - eta * sx.ln() - (1.0 - eta) * t.tau1_sq.ln())
}

fn d21_raw(t: &Params, y: f64, eta: f64) -> Result<f64> {
    let w2 = t.w * t.w;
    let sy = w2 * t.tau1_sq + t.tau2_sq;
    let denom = eta * sy + (1.0 - eta) * y * y;
    let inner = if eta == 0.0 { 1.0 } else { 1.0 - eta * eta * w2 * t.tau1_sq / denom };
    if !(inner > 0.0) {
        return Err(Error::ArgumentOutOfDomain(format!(
            "D21 log argument is {inner} at eta = {eta}"
        )));
    }
    Ok(0.5 * inner.ln() + 0.5 * eta * (sy / t.tau2_sq).ln())
}

fn d13_raw(t: &Params, y: f64, eta: f64) -> f64 {
    d12_raw(t, y, eta) + 0.5 * eta * (t.w * t.w * t.tau2_sq / t.tau1_sq).ln_1p()
}

fn d23_raw(t: &Params, eta: f64) -> f64 {
    0.5 * eta * (t.w * t.w * t.tau1_sq / t.tau2_sq).ln_1p()
}

/// Exponent of `π(S2|D)/π(S1|D)` when S1 is true.
pub fn d12(input: &RateInput) -> f64 {
    d12_raw(&input.theta_star, input.y, input.eta)
}

/// Exponent of `π(S1|D)/π(S2|D)` when S2 is true.
pub fn d21(input: &RateInput) -> Result<f64> {
    d21_raw(&input.theta_star, input.y, input.eta)
}

/// Exponent of `π(S3|D)/π(S1|D)` when S1 is true.
pub fn d13(input: &RateInput) -> f64 {
    d13_raw(&input.theta_star, input.y, input.eta)
}

/// Exponent of `π(S3|D)/π(S2|D)` when S2 is true.
pub fn d23(input: &RateInput) -> f64 {
    d23_raw(&input.theta_star, input.eta)
}

/// KL rate separating true S1 from its best independent fit on purely
/// observational data.
pub fn obs_kl_s1_vs_s3(theta_star: &Params) -> f64 {
    0.5 * (theta_star.w * theta_star.w * theta_star.tau2_sq / theta_star.tau1_sq).ln_1p()
}

/// Whether some interior observational ratio beats purely interventional
/// data for identifying a true S1.
pub fn mixing_helps_s1(theta_star: &Params, y: f64) -> bool {
    let w2 = theta_star.w * theta_star.w;
    let lhs = w2 * (theta_star.tau2_sq - y * y) / (w2 * y * y + theta_star.tau1_sq);
    lhs > obs_kl_s1_vs_s3(theta_star) * 2.0
}

/// Golden-section maximization of a unimodal function on `[lo, hi]`.
pub fn golden_section_max(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Maximizer of D12 or D21 over the observational ratio.
///
/// D12 without an interior maximum is strictly decreasing; the boundary
/// `η* = 0` and its limit value are returned then.
pub fn optimal_eta(id: ExponentId, theta_star: &Params, y: f64) -> Result<(f64, f64)> {
    theta_star.validate()?;
    let (lo, hi, tol) = (ETA_CLAMP, 1.0 - ETA_CLAMP, 1e-10);
    match id {
        ExponentId::D12 => {
            if !mixing_helps_s1(theta_star, y) {
                return Ok((0.0, d12_raw(theta_star, y, 0.0)));
            }
            Ok(golden_section_max(&|e| d12_raw(theta_star, y, e), lo, hi, tol))
        }
        ExponentId::D21 => {
            d21_raw(theta_star, y, 0.5)?;
            let f = |e: f64| d21_raw(theta_star, y, e).unwrap_or(f64::NEG_INFINITY);
            Ok(golden_section_max(&f, lo, hi, tol))
        }
        other => Err(Error::InvalidInput(format!(
            "optimal ratio is defined for d12 and d21, not {}",
            other.name()
        ))),
    }
}

/// Samples an exponent on an η grid; grid points are clamped into
/// `[1e-9, 1 - 1e-9]`.
pub fn rate_curve(id: ExponentId, theta_star: &Params, y: f64, etas: &[f64]) -> Result<RateCurve> {
    theta_star.validate()?;
    let mut eta = Vec::with_capacity(etas.len());
    let mut values = Vec::with_capacity(etas.len());
    for &e in etas {
        let e = e.clamp(ETA_CLAMP, 1.0 - ETA_CLAMP);
        if eta.last().is_some_and(|&p| e <= p) {
            return Err(Error::InvalidInput("eta grid must be strictly increasing".into()));
        }
        let v = match id {
            ExponentId::D12 => d12_raw(theta_star, y, e),
            ExponentId::D21 => d21_raw(theta_star, y, e)?,
            ExponentId::D13 => d13_raw(theta_star, y, e),
            ExponentId::D23 => d23_raw(theta_star, e),
            ExponentId::D12Gain => d12_raw(theta_star, y, e) / (1.0 - e),
            ExponentId::D21Gain => d21_raw(theta_star, y, e)? / (1.0 - e),
        };
        eta.push(e);
        values.push(v);
    }
    Ok(RateCurve { eta, values, id })
}

/// Pointwise `D(η) / (1 − η)`: the exponent earned per interventional sample.
pub fn gain_transform(curve: &RateCurve) -> Result<RateCurve> {
    let id = match curve.id {
        ExponentId::D12 => ExponentId::D12Gain,
        ExponentId::D21 => ExponentId::D21Gain,
        other => {
            return Err(Error::InvalidInput(format!("no gain transform for {}", other.name())));
        }
    };
    let values = curve.eta.iter().zip(&curve.values).map(|(e, v)| v / (1.0 - e)).collect();
    Ok(RateCurve { eta: curve.eta.clone(), values, id })
}

/// Almost-sure limits of each structure's MLE on mixed data with
/// observational ratio `eta` (`eta = 1` for purely observational data).
///
/// Every limit is expressed in the coordinates of the fitted structure.
pub fn pseudo_true_limits(true_model: StructureId, theta_star: &Params, y: f64, eta: f64) -> Result<[Params; 3]> {
    theta_star.validate_for(true_model)?;
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParams(format!("eta must lie in [0, 1], got {eta}")));
    }
    let Params { w, tau1_sq: t1, tau2_sq: t2 } = *theta_star;
    let eb = 1.0 - eta;
    let w2 = w * w;
    Ok(match true_model {
        StructureId::S1 => {
            let g = gamma_map(theta_star);
            let mix = t1 + w2 * (eta * t2 + eb * y * y);
            [
                *theta_star,
                Params { tau1_sq: g.tau1_sq + eb * w2 * (y * y - t2), ..g },
                Params { w: 0.0, tau1_sq: mix, tau2_sq: t2 },
            ]
        }
        StructureId::S2 => {
            let sy = w2 * t1 + t2;
            let denom = eta * sy + eb * y * y;
            [
                Params {
                    w: eta * w * t1 / denom,
                    tau1_sq: t1 - eta * eta * w2 * t1 * t1 / denom,
                    tau2_sq: sy,
                },
                *theta_star,
                Params { w: 0.0, tau1_sq: t1, tau2_sq: sy },
            ]
        }
        StructureId::S3 => [*theta_star; 3],
    })
}

/// Limit of the posterior mass of the true connected structure on
/// observational data, where only the priors separate S1 from S2.
pub fn nonident_posterior_limit(theta_star: &Params, h: &BgeHyper, true_model: StructureId) -> Result<f64> {
    theta_star.validate()?;
    if theta_star.w == 0.0 {
        return Err(Error::InvalidParams("limit requires a non-zero edge weight".into()));
    }
    let theta1 = match true_model {
        StructureId::S1 => *theta_star,
        StructureId::S2 => gamma_inverse(theta_star),
        StructureId::S3 => {
            return Err(Error::InvalidInput("limit is defined for a connected true model".into()));
        }
    };
    // log of π(S2-mass)/π(S1-mass) at the shared observational law
    let log_ratio = pushforward_prior_logpdf(&theta1, h) - prior_logpdf(&theta1, StructureId::S1, h);
    let sign = if true_model == StructureId::S1 { 1.0 } else { -1.0 };
    Ok(1.0 / (1.0 + (sign * log_ratio).exp()))
}
