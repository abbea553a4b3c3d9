//! Hierarchical inverse-gamma / Gaussian priors over the structure parameters.
//!
//! The six shape parameters are stored flat: `alpha[0..2]` are the node-1 and
//! node-2 variance shapes under S1, `alpha[2..4]` under S2 and `alpha[4..6]`
//! under S3. All variances share the rate `beta`. The edge weight has prior
//! `N(0, lambda * tau_child^2)`, where the child is node 1 under S1 and node 2
//! under S2.

use crate::error::{Error, Result};
use crate::numeric::{inv_gamma_logpdf, normal_logpdf};
use crate::sem::{gamma_jacobian_abs_det, gamma_map, Params, StructureId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BgeHyper {
    pub alpha: [f64; 6],
    pub beta: f64,
    pub lambda: f64,
}

impl BgeHyper {
    pub fn new(alpha: [f64; 6], beta: f64, lambda: f64) -> Result<Self> {
        for (i, a) in alpha.iter().enumerate() {
            if !(a.is_finite() && *a > 0.0) {
                return Err(Error::InvalidHyper(format!("alpha{} must be positive, got {a}", i + 1)));
            }
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidHyper(format!("beta must be positive, got {beta}")));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidHyper(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self { alpha, beta, lambda })
    }

    /// `(node-1 shape, node-2 shape)` for a structure.
    pub fn shapes(&self, s: StructureId) -> (f64, f64) {
        let k = 2 * s.index();
        (self.alpha[k], self.alpha[k + 1])
    }
}

/// Score-equivalent hyperparameters.
///
/// Uses `alpha1 = alpha4 = alpha`, `alpha2 = alpha3 = alpha - 1/2`,
/// `alpha5 = alpha6 = alpha` and `lambda = 1 / (2 beta)`. The last relation
/// makes the weight prior precision `1/lambda` equal to the `2 beta` added to
/// every sum of squares, which is what makes S1 and S2 score the same on
/// observational data. At `beta = 1/2` this gives `lambda = 1`.
pub fn bge_symmetric_hyper(alpha: f64, beta: f64) -> Result<BgeHyper> {
    if !(alpha.is_finite() && alpha > 0.5) {
        return Err(Error::InvalidHyper(format!("symmetric alpha must exceed 1/2, got {alpha}")));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::InvalidHyper(format!("beta must be positive, got {beta}")));
    }
    let a2 = alpha - 0.5;
    BgeHyper::new([alpha, a2, a2, alpha, alpha, alpha], beta, 1.0 / (2.0 * beta))
}

/// Log prior density of `theta` under structure `s`.
///
/// Under S3 the density lives on the two variances only; a non-zero weight
/// lies outside its support and yields `-inf`.
pub fn prior_logpdf(theta: &Params, s: StructureId, h: &BgeHyper) -> f64 {
    let (a1, a2) = h.shapes(s);
    let Params { w, tau1_sq, tau2_sq } = *theta;
    let var = inv_gamma_logpdf(tau1_sq, a1, h.beta) + inv_gamma_logpdf(tau2_sq, a2, h.beta);
    match s {
        StructureId::S1 => var + normal_logpdf(w, 0.0, h.lambda * tau1_sq),
        StructureId::S2 => var + normal_logpdf(w, 0.0, h.lambda * tau2_sq),
        StructureId::S3 => {
            if w == 0.0 {
                var
            } else {
                f64::NEG_INFINITY
            }
        }
    }
}

/// Log density, in S1 coordinates, of the S2 prior transported through the
/// inverse of the γ map.
pub fn pushforward_prior_logpdf(theta: &Params, h: &BgeHyper) -> f64 {
    prior_logpdf(&gamma_map(theta), StructureId::S2, h) + gamma_jacobian_abs_det(theta).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn s3_at_unit_point() {
        let h = BgeHyper::new([1.0; 6], 1.0, 1.0).unwrap();
        let t = Params::independent(1.0, 1.0).unwrap();
        assert!((prior_logpdf(&t, StructureId::S3, &h) + 2.0).abs() < 1e-15);
        let off = Params::new(0.1, 1.0, 1.0).unwrap();
        assert_eq!(prior_logpdf(&off, StructureId::S3, &h), f64::NEG_INFINITY);
    }

    #[test]
    fn symmetric_constructor() {
        let h = bge_symmetric_hyper(3.0, 0.5).unwrap();
        assert_eq!(h.alpha, [3.0, 2.5, 2.5, 3.0, 3.0, 3.0]);
        assert_eq!((h.beta, h.lambda), (0.5, 1.0));
        assert!(bge_symmetric_hyper(0.5, 1.0).is_err());
        assert!(bge_symmetric_hyper(2.0, 0.0).is_err());
    }

    #[test]
    fn hyper_validation() {
        assert!(BgeHyper::new([1.0, 1.0, 1.0, 0.0, 1.0, 1.0], 1.0, 1.0).is_err());
        assert!(BgeHyper::new([1.0; 6], -1.0, 1.0).is_err());
        assert!(BgeHyper::new([1.0; 6], 1.0, f64::NAN).is_err());
    }

    #[test]
    fn weight_prior_uses_child_variance() {
        let h = BgeHyper::new([2.0; 6], 1.0, 0.5).unwrap();
        let t = Params::new(0.7, 2.0, 3.0).unwrap();
        let base1 = inv_gamma_logpdf(2.0, 2.0, 1.0) + inv_gamma_logpdf(3.0, 2.0, 1.0);
        assert!((prior_logpdf(&t, StructureId::S1, &h) - base1 - normal_logpdf(0.7, 0.0, 1.0)).abs() < 1e-14);
        assert!((prior_logpdf(&t, StructureId::S2, &h) - base1 - normal_logpdf(0.7, 0.0, 1.5)).abs() < 1e-14);
    }

    #[test]
    fn pushforward_at_zero_weight() {
        // γ fixes zero-weight points but keeps the Jacobian τ₂²/τ₁²
        let h = BgeHyper::new([1.5, 2.0, 2.5, 3.0, 1.0, 1.0], 0.8, 1.7).unwrap();
        let t = Params::new(0.0, 1.3, 0.4).unwrap();
        let direct = prior_logpdf(&t, StructureId::S2, &h) + (0.4f64 / 1.3).ln();
        let pf = pushforward_prior_logpdf(&t, &h);
        assert!((pf - direct).abs() < 1e-12, "{pf} vs {direct}");
    }

    fn numerical_jacobian_det(t: &Params) -> f64 {
        let x = t.as_array();
        let mut j = [[0.0; 3]; 3];
        for c in 0..3 {
            let step = 1e-5 * x[c].abs().max(1.0);
            let mut lo = x;
            let mut hi = x;
            lo[c] -= step;
            hi[c] += step;
            let glo = gamma_map(&Params { w: lo[0], tau1_sq: lo[1], tau2_sq: lo[2] }).as_array();
            let ghi = gamma_map(&Params { w: hi[0], tau1_sq: hi[1], tau2_sq: hi[2] }).as_array();
            for r in 0..3 {
                j[r][c] = (ghi[r] - glo[r]) / (2.0 * step);
            }
        }
        nalgebra::Matrix3::from_fn(|r, c| j[r][c]).determinant().abs()
    }

    #[test]
    fn jacobian_at_unit_point() {
        let t = Params::new(1.0, 1.0, 1.0).unwrap();
        assert!((numerical_jacobian_det(&t) - 0.5).abs() < 1e-6);
        assert!((gamma_jacobian_abs_det(&t) - 0.5).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn jacobian_matches_finite_differences(w in -3.0f64..3.0, a in 0.1f64..5.0, b in 0.1f64..5.0) {
            let t = Params::new(w, a, b).unwrap();
            let num = numerical_jacobian_det(&t);
            let ana = gamma_jacobian_abs_det(&t);
            prop_assert!((num / ana - 1.0).abs() < 1e-6);
        }

        #[test]
        fn symmetric_prior_is_pushforward_invariant(
            w in -4.0f64..4.0, a in 0.05f64..8.0, b in 0.05f64..8.0,
            alpha in 0.6f64..6.0, beta in 0.1f64..3.0,
        ) {
            let h = bge_symmetric_hyper(alpha, beta).unwrap();
            let t = Params::new(w, a, b).unwrap();
            let lhs = pushforward_prior_logpdf(&t, &h);
            let rhs = prior_logpdf(&t, StructureId::S1, &h);
            prop_assert!((lhs - rhs).abs() < 1e-9, "{} vs {}", lhs, rhs);
        }

        #[test]
        fn prior_is_finite(w in -10.0f64..10.0, a in 1e-3f64..1e3, b in 1e-3f64..1e3) {
            let h = BgeHyper::new([1.5, 2.0, 2.5, 3.0, 1.0, 4.0], 0.7, 2.0).unwrap();
            let t = Params::new(w, a, b).unwrap();
            prop_assert!(prior_logpdf(&t, StructureId::S1, &h).is_finite());
            prop_assert!(prior_logpdf(&t, StructureId::S2, &h).is_finite());
            prop_assert!(prior_logpdf(&Params::independent(a, b).unwrap(), StructureId::S3, &h).is_finite());
        }
    }
}
