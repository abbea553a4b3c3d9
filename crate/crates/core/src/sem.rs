//! The two-node linear Gaussian SEM: structures, parameters, implied laws and samplers.
//!
//! Node numbering follows the adjacency convention `X = AᵀX + ε`:
//!
//! * [`StructureId::S1`]: edge `X(2) → X(1)`, so `X(1) = w·X(2) + ε(1)`.
//! * [`StructureId::S2`]: edge `X(1) → X(2)`, so `X(2) = w·X(1) + ε(2)`.
//! * [`StructureId::S3`]: no edge.
//!
//! In every structure `tau1_sq` and `tau2_sq` are the noise variances of
//! `ε(1)` and `ε(2)`.
//!
//! Samplers draw from a [`ChaCha8Rng`] seeded with `seed_from_u64(seed)`.
//! Observational draws use ChaCha stream 0 and interventional draws use
//! stream 1, so the two can share one seed without overlapping. Standard
//! normals come from `rand_distr::StandardNormal` (ziggurat). This pairing
//! is fixed for a release.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numeric::normal_logpdf;

const LN_TAU: f64 = 1.837_877_066_409_345_5; // ln(2π)

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StructureId {
    S1,
    S2,
    S3,
}

impl StructureId {
    pub const ALL: [StructureId; 3] = [StructureId::S1, StructureId::S2, StructureId::S3];

    pub fn index(self) -> usize {
        match self {
            StructureId::S1 => 0,
            StructureId::S2 => 1,
            StructureId::S3 => 2,
        }
    }

    /// Number of free parameters: 3 for the connected graphs, 2 for the empty one.
    pub fn dim(self) -> usize {
        match self {
            StructureId::S3 => 2,
            _ => 3,
        }
    }

    pub fn is_connected(self) -> bool {
        self != StructureId::S3
    }
}

impl fmt::Display for StructureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StructureId::S1 => "S1",
            StructureId::S2 => "S2",
            StructureId::S3 => "S3",
        };
        f.write_str(s)
    }
}

impl FromStr for StructureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "S1" | "1" => Ok(StructureId::S1),
            "S2" | "2" => Ok(StructureId::S2),
            "S3" | "3" => Ok(StructureId::S3),
            other => Err(Error::InvalidInput(format!("unknown structure '{other}'"))),
        }
    }
}

/// Edge weight and the two noise variances, `θ = (w, τ₁², τ₂²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    pub w: f64,
    pub tau1_sq: f64,
    pub tau2_sq: f64,
}

impl Params {
    pub fn new(w: f64, tau1_sq: f64, tau2_sq: f64) -> Result<Self> {
        let p = Params { w, tau1_sq, tau2_sq };
        p.validate()?;
        Ok(p)
    }

    /// Parameters of the empty graph (`w = 0`).
    pub fn independent(tau1_sq: f64, tau2_sq: f64) -> Result<Self> {
        Self::new(0.0, tau1_sq, tau2_sq)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.w.is_finite() {
            return Err(Error::InvalidParams(format!("w must be finite, got {}", self.w)));
        }
        for (name, v) in [("tau1_sq", self.tau1_sq), ("tau2_sq", self.tau2_sq)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Checks the parameters are admissible for `s` (`w = 0` for [`StructureId::S3`]).
    pub fn validate_for(&self, s: StructureId) -> Result<()> {
        self.validate()?;
        if s == StructureId::S3 && self.w != 0.0 {
            return Err(Error::InvalidParams(format!(
                "S3 has no edge, but w = {} was given",
                self.w
            )));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.w, self.tau1_sq, self.tau2_sq]
    }
}

/// Symmetric 2×2 covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cov2 {
    pub c11: f64,
    pub c12: f64,
    pub c22: f64,
}

impl Cov2 {
    pub fn new(c11: f64, c12: f64, c22: f64) -> Result<Self> {
        let c = Cov2 { c11, c12, c22 };
        if !(c11 > 0.0 && c.det() > 0.0) {
            return Err(Error::InvalidInput(format!(
                "covariance [[{c11}, {c12}], [{c12}, {c22}]] is not positive definite"
            )));
        }
        Ok(c)
    }

    pub fn det(&self) -> f64 {
        self.c11 * self.c22 - self.c12 * self.c12
    }

    /// Lower Cholesky factor `(l11, l21, l22)`.
    pub fn cholesky(&self) -> (f64, f64, f64) {
        let l11 = self.c11.sqrt();
        let l21 = self.c12 / l11;
        let l22 = (self.c22 - l21 * l21).sqrt();
        (l11, l21, l22)
    }

    /// Centered Gaussian log-density evaluated through the explicit inverse.
    pub fn logpdf(&self, x: [f64; 2]) -> f64 {
        let det = self.det();
        let q = (self.c22 * x[0] * x[0] - 2.0 * self.c12 * x[0] * x[1] + self.c11 * x[1] * x[1]) / det;
        -LN_TAU - 0.5 * det.ln() - 0.5 * q
    }
}

/// Hard intervention `do(X(target) = y)`. Only `target = 2` is modeled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterventionSpec {
    pub target: usize,
    pub y: f64,
}

impl InterventionSpec {
    pub fn new(target: usize, y: f64) -> Result<Self> {
        if target != 2 {
            return Err(Error::InvalidInput(format!(
                "only interventions on node 2 are supported, got node {target}"
            )));
        }
        if !y.is_finite() {
            return Err(Error::InvalidInput(format!("intervention value must be finite, got {y}")));
        }
        Ok(InterventionSpec { target, y })
    }

    pub fn on_node2(y: f64) -> Result<Self> {
        Self::new(2, y)
    }
}

/// Maps S1 parameters to the S2 parameters with the same observational law.
pub fn gamma_map(theta: &Params) -> Params {
    let Params { w, tau1_sq, tau2_sq } = *theta;
    let s = w * w * tau2_sq + tau1_sq;
    Params {
        w: w * tau2_sq / s,
        tau1_sq: s,
        tau2_sq: tau1_sq * tau2_sq / s,
    }
}

/// Inverse of [`gamma_map`]: S2 parameters to the equivalent S1 parameters.
pub fn gamma_inverse(theta: &Params) -> Params {
    let Params { w, tau1_sq, tau2_sq } = *theta;
    let s = w * w * tau1_sq + tau2_sq;
    Params {
        w: w * tau1_sq / s,
        tau1_sq: tau1_sq * tau2_sq / s,
        tau2_sq: s,
    }
}

/// `|det ∂γ/∂θ|` at `theta`, equal to `τ₂² / (w²τ₂² + τ₁²)`.
pub fn gamma_jacobian_abs_det(theta: &Params) -> f64 {
    theta.tau2_sq / (theta.w * theta.w * theta.tau2_sq + theta.tau1_sq)
}

pub fn implied_covariance(s: StructureId, theta: &Params) -> Result<Cov2> {
    theta.validate_for(s)?;
    let Params { w, tau1_sq, tau2_sq } = *theta;
    let cov = match s {
        StructureId::S1 => Cov2 {
            c11: w * w * tau2_sq + tau1_sq,
            c12: w * tau2_sq,
            c22: tau2_sq,
        },
        StructureId::S2 => Cov2 {
            c11: tau1_sq,
            c12: w * tau1_sq,
            c22: w * w * tau1_sq + tau2_sq,
        },
        StructureId::S3 => Cov2 {
            c11: tau1_sq,
            c12: 0.0,
            c22: tau2_sq,
        },
    };
    Ok(cov)
}

/// Observational log-density `log f(x | θ, S)`.
///
/// Evaluated through the structural factorization (parent marginal times
/// child conditional), which is the Gaussian with [`implied_covariance`]
/// but avoids the cancellation in `c11·c22 − c12²` for strong edges.
pub fn obs_logpdf(x: [f64; 2], s: StructureId, theta: &Params) -> f64 {
    let Params { w, tau1_sq, tau2_sq } = *theta;
    match s {
        StructureId::S1 => normal_logpdf(x[0] - w * x[1], 0.0, tau1_sq) + normal_logpdf(x[1], 0.0, tau2_sq),
        StructureId::S2 => normal_logpdf(x[0], 0.0, tau1_sq) + normal_logpdf(x[1] - w * x[0], 0.0, tau2_sq),
        StructureId::S3 => normal_logpdf(x[0], 0.0, tau1_sq) + normal_logpdf(x[1], 0.0, tau2_sq),
    }
}

/// Log-density of `Y(1)` under `do(X(2) = y)`.
pub fn interv_logpdf_y1(y1: f64, s: StructureId, theta: &Params, iv: &InterventionSpec) -> f64 {
    debug_assert_eq!(iv.target, 2);
    match s {
        StructureId::S1 => normal_logpdf(y1, theta.w * iv.y, theta.tau1_sq),
        StructureId::S2 | StructureId::S3 => normal_logpdf(y1, 0.0, theta.tau1_sq),
    }
}

/// Infinite stream of observational draws.
pub struct ObsSampler {
    rng: ChaCha8Rng,
    l11: f64,
    l21: f64,
    l22: f64,
}

impl ObsSampler {
    pub fn new(s: StructureId, theta: &Params, seed: u64) -> Result<Self> {
        let (l11, l21, l22) = implied_covariance(s, theta)?.cholesky();
        Ok(ObsSampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            l11,
            l21,
            l22,
        })
    }
}

impl Iterator for ObsSampler {
    type Item = [f64; 2];

    #[inline]
    fn next(&mut self) -> Option<[f64; 2]> {
        let z1: f64 = self.rng.sample(StandardNormal);
        let z2: f64 = self.rng.sample(StandardNormal);
        Some([self.l11 * z1, self.l21 * z1 + self.l22 * z2])
    }
}

/// Infinite stream of `Y(1)` draws under `do(X(2) = y)`.
pub struct IntervSampler {
    rng: ChaCha8Rng,
    mean: f64,
    sd: f64,
}

impl IntervSampler {
    pub fn new(s: StructureId, theta: &Params, iv: &InterventionSpec, seed: u64) -> Result<Self> {
        theta.validate_for(s)?;
        let mean = match s {
            StructureId::S1 => theta.w * iv.y,
            _ => 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Ok(IntervSampler {
            rng,
            mean,
            sd: theta.tau1_sq.sqrt(),
        })
    }
}

impl Iterator for IntervSampler {
    type Item = f64;

    #[inline]
    fn next(&mut self) -> Option<f64> {
        let z: f64 = self.rng.sample(StandardNormal);
        Some(self.mean + self.sd * z)
    }
}

pub fn sample_obs(s: StructureId, theta: &Params, n: usize, seed: u64) -> Result<Vec<[f64; 2]>> {
    Ok(ObsSampler::new(s, theta, seed)?.take(n).collect())
}

/// `m` interventional samples `(Y(1), y)`.
pub fn sample_interv(
    s: StructureId,
    theta: &Params,
    iv: &InterventionSpec,
    m: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    Ok(IntervSampler::new(s, theta, iv, seed)?
        .take(m)
        .map(|y1| (y1, iv.y))
        .collect())
}
