//! Sufficient statistics, closed-form MLEs and exact log-likelihoods.

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::sem::{Params, StructureId};

const LN_TAU: f64 = 1.837_877_066_409_345_5;
const MIN_VARIANCE: f64 = 1e-300;

/// Sums of squares and cross-products of the observational (`x`) and
/// interventional (`y`) blocks.
///
/// `s1y = Σ Y(1)²`, `s2y = m·y²` and `s12y = y·Σ Y(1)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SuffStats {
    pub s1x: f64,
    pub s2x: f64,
    pub s12x: f64,
    pub s1y: f64,
    pub s2y: f64,
    pub s12y: f64,
    pub n: usize,
    pub m: usize,
    /// Intervention value; meaningful only when `m > 0`.
    pub y: f64,
}

impl SuffStats {
    pub fn total(&self) -> usize {
        self.n + self.m
    }

    pub fn is_mixed(&self) -> bool {
        self.m > 0
    }

    /// Observational ratio `n / (n + m)`, or 1 for empty data.
    pub fn eta(&self) -> f64 {
        if self.total() == 0 {
            1.0
        } else {
            self.n as f64 / self.total() as f64
        }
    }

    /// Checks non-negativity and the Cauchy–Schwarz bound of both blocks.
    pub fn validate(&self) -> Result<()> {
        let tol = 1e-12;
        let bad = |msg: &str| Err(Error::InvalidInput(format!("inconsistent sufficient statistics: {msg}")));
        if [self.s1x, self.s2x, self.s12x, self.s1y, self.s2y, self.s12y]
            .iter()
            .any(|v| !v.is_finite())
        {
            return bad("non-finite entry");
        }
        if self.s1x < 0.0 || self.s2x < 0.0 || self.s1y < 0.0 || self.s2y < 0.0 {
            return bad("negative sum of squares");
        }
        if self.s12x * self.s12x > self.s1x * self.s2x * (1.0 + tol) {
            return bad("observational block violates Cauchy-Schwarz");
        }
        if self.s12y * self.s12y > self.s1y * self.s2y * (1.0 + tol) {
            return bad("interventional block violates Cauchy-Schwarz");
        }
        if self.n == 0 && (self.s1x != 0.0 || self.s2x != 0.0 || self.s12x != 0.0) {
            return bad("observational sums without samples");
        }
        if self.m == 0 && (self.s1y != 0.0 || self.s2y != 0.0 || self.s12y != 0.0) {
            return bad("interventional sums without samples");
        }
        Ok(())
    }
}

/// Streaming accumulator for [`SuffStats`] with compensated summation.
#[derive(Debug, Clone, Default)]
pub struct SuffStatsBuilder {
    s1x: CompensatedSum,
    s2x: CompensatedSum,
    s12x: CompensatedSum,
    s1y: CompensatedSum,
    sum_y1: CompensatedSum,
    n: usize,
    m: usize,
    y: Option<f64>,
}

impl SuffStatsBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push_obs(&mut self, x: [f64; 2]) {
        self.s1x.add(x[0] * x[0]);
        self.s2x.add(x[1] * x[1]);
        self.s12x.add(x[0] * x[1]);
        self.n += 1;
    }

    /// Adds an interventional sample `(Y(1), y)`. All samples must share `y`.
    pub fn push_interv(&mut self, y1: f64, y: f64) -> Result<()> {
        match self.y {
            None => self.y = Some(y),
            Some(prev) if prev != y => {
                return Err(Error::InvalidInput(format!(
                    "interventional samples use different values ({prev} and {y})"
                )))
            }
            _ => {}
        }
        self.s1y.add(y1 * y1);
        self.sum_y1.add(y1);
        self.m += 1;
        Ok(())
    }

    /// Sets the intervention value without adding samples.
    pub fn set_intervention_value(&mut self, y: f64) -> Result<()> {
        match self.y {
            Some(prev) if prev != y => Err(Error::InvalidInput(format!(
                "intervention value already set to {prev}, got {y}"
            ))),
            _ => {
                self.y = Some(y);
                Ok(())
            }
        }
    }

    pub fn finish(&self) -> SuffStats {
        let y = self.y.unwrap_or(0.0);
        let m = self.m;
        SuffStats {
            s1x: self.s1x.value(),
            s2x: self.s2x.value(),
            s12x: self.s12x.value(),
            s1y: self.s1y.value(),
            s2y: if m > 0 { m as f64 * y * y } else { 0.0 },
            s12y: if m > 0 { y * self.sum_y1.value() } else { 0.0 },
            n: self.n,
            m,
            y,
        }
    }
}

/// Sufficient statistics of an observational dataset and an optional
/// interventional one given as `(Y(1), y)` pairs.
pub fn suffstats(obs: &[[f64; 2]], interv: Option<&[(f64, f64)]>) -> Result<SuffStats> {
    let mut b = SuffStatsBuilder::new();
    for &x in obs {
        b.push_obs(x);
    }
    if let Some(iv) = interv {
        for &(y1, y) in iv {
            b.push_interv(y1, y)?;
        }
    }
    Ok(b.finish())
}

/// Per-structure maximum-likelihood estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleTriple {
    pub theta_hat: [Params; 3],
}

impl MleTriple {
    pub fn get(&self, s: StructureId) -> &Params {
        &self.theta_hat[s.index()]
    }
}

fn check_variance(name: &str, v: f64) -> Result<f64> {
    if !v.is_finite() || v < MIN_VARIANCE {
        return Err(Error::DegenerateData(format!(
            "{name} estimate is {v}; the sample is constant or collinear"
        )));
    }
    Ok(v)
}

fn check_weight(v: f64) -> Result<f64> {
    if !v.is_finite() {
        return Err(Error::DegenerateData(format!("weight estimate is {v}")));
    }
    Ok(v)
}

/// MLEs from observational data only (`m = 0`).
pub fn mle_obs(st: &SuffStats) -> Result<MleTriple> {
    if st.m != 0 {
        return Err(Error::InvalidInput(format!(
            "observational MLE requested but m = {}",
            st.m
        )));
    }
    mle_mixed(st)
}

/// MLEs from mixed observational and interventional data.
///
/// With `m = 0` this performs exactly the observational computation.
pub fn mle_mixed(st: &SuffStats) -> Result<MleTriple> {
    if st.n < 2 {
        return Err(Error::DegenerateData(format!(
            "at least 2 observational samples are required, got {}",
            st.n
        )));
    }
    let n = st.n as f64;
    let total = st.total() as f64;
    let s1 = st.s1x + st.s1y;
    let s2 = st.s2x + st.s2y;
    let s12 = st.s12x + st.s12y;
    if !(st.s1x > 0.0 && st.s2x > 0.0 && s2 > 0.0) {
        return Err(Error::DegenerateData("a sum of squares is zero".into()));
    }

    let theta1 = Params {
        w: check_weight(s12 / s2)?,
        tau1_sq: check_variance("S1 tau1_sq", (s2 * s1 - s12 * s12) / (total * s2))?,
        tau2_sq: check_variance("S1 tau2_sq", st.s2x / n)?,
    };
    let theta2 = Params {
        w: check_weight(st.s12x / st.s1x)?,
        tau1_sq: check_variance("S2 tau1_sq", s1 / total)?,
        tau2_sq: check_variance("S2 tau2_sq", (st.s1x * st.s2x - st.s12x * st.s12x) / (n * st.s1x))?,
    };
    let theta3 = Params {
        w: 0.0,
        tau1_sq: check_variance("S3 tau1_sq", s1 / total)?,
        tau2_sq: check_variance("S3 tau2_sq", st.s2x / n)?,
    };
    Ok(MleTriple {
        theta_hat: [theta1, theta2, theta3],
    })
}

/// Exact mixed-data log-likelihood through the sufficient statistics.
///
/// For [`StructureId::S1`] the intervention shifts `Y(1)`; for the other two
/// structures `Y(1)` keeps its marginal law and only updates `τ₁²`.
pub fn loglik(st: &SuffStats, s: StructureId, theta: &Params) -> f64 {
    if st.total() == 0 {
        return 0.0;
    }
    let n = st.n as f64;
    let total = st.total() as f64;
    let Params { w, tau1_sq, tau2_sq } = *theta;
    let norm = -(n + 0.5 * st.m as f64) * LN_TAU - 0.5 * total * tau1_sq.ln() - 0.5 * n * tau2_sq.ln();
    let quad = match s {
        StructureId::S1 => {
            let q1 = (st.s1x + st.s1y) - 2.0 * w * (st.s12x + st.s12y) + w * w * (st.s2x + st.s2y);
            q1 / tau1_sq + st.s2x / tau2_sq
        }
        StructureId::S2 => {
            let q2 = st.s2x - 2.0 * w * st.s12x + w * w * st.s1x;
            (st.s1x + st.s1y) / tau1_sq + q2 / tau2_sq
        }
        StructureId::S3 => (st.s1x + st.s1y) / tau1_sq + st.s2x / tau2_sq,
    };
    norm - 0.5 * quad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sem::{
        gamma_map, interv_logpdf_y1, obs_logpdf, sample_interv, sample_obs, InterventionSpec,
    };

    #[test]
    fn hand_sums() {
        let st = suffstats(&[[1.0, 1.0], [1.0, -1.0]], None).unwrap();
        assert_eq!((st.s1x, st.s2x, st.s12x, st.n, st.m), (2.0, 2.0, 0.0, 2, 0));

        let st = suffstats(&[], None).unwrap();
        assert_eq!(st, SuffStats::default());

        let st = suffstats(&[], Some(&[(3.0, 2.0), (-1.0, 2.0)])).unwrap();
        assert_eq!((st.s1y, st.s2y, st.s12y, st.m), (10.0, 8.0, 4.0, 2));
    }

    #[test]
    fn mixed_intervention_values_rejected() {
        assert!(suffstats(&[], Some(&[(3.0, 2.0), (-1.0, 1.0)])).is_err());
    }

    #[test]
    fn mle_obs_hand_case() {
        let st = suffstats(&[[1.0, 1.0], [1.0, -1.0]], None).unwrap();
        let mle = mle_obs(&st).unwrap();
        for t in mle.theta_hat {
            assert_eq!(t.as_array(), [0.0, 1.0, 1.0]);
        }
    }

    #[test]
    fn mle_mixed_hand_case() {
        let st = suffstats(&[[1.0, 1.0], [1.0, -1.0]], Some(&[(2.0, 1.0)])).unwrap();
        assert_eq!((st.s1y, st.s2y, st.s12y), (4.0, 1.0, 2.0));
        let t1 = *mle_mixed(&st).unwrap().get(StructureId::S1);
        assert!((t1.w - 2.0 / 3.0).abs() < 1e-15);
        assert!((t1.tau1_sq - 14.0 / 9.0).abs() < 1e-15);
        assert!((t1.tau2_sq - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mle_mixed_hand_case_is_a_maximum() {
        // cross-check against a brute-force grid maximization of the likelihood
        let st = suffstats(&[[1.0, 1.0], [1.0, -1.0]], Some(&[(2.0, 1.0)])).unwrap();
        let t1 = *mle_mixed(&st).unwrap().get(StructureId::S1);
        let best = loglik(&st, StructureId::S1, &t1);
        for i in -20..=20 {
            for j in -20..=20 {
                let cand = Params {
                    w: t1.w + 0.01 * i as f64,
                    tau1_sq: t1.tau1_sq * (1.0 + 0.01 * j as f64),
                    tau2_sq: t1.tau2_sq,
                };
                assert!(loglik(&st, StructureId::S1, &cand) <= best + 1e-14);
            }
        }
    }

    #[test]
    fn mles_beat_random_perturbations() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let truth = Params::new(0.7, 1.2, 0.8).unwrap();
        let iv = InterventionSpec::on_node2(1.3).unwrap();
        let obs = sample_obs(StructureId::S1, &truth, 60, 4).unwrap();
        let int = sample_interv(StructureId::S1, &truth, &iv, 25, 4).unwrap();
        for st in [suffstats(&obs, None).unwrap(), suffstats(&obs, Some(&int)).unwrap()] {
            let mle = mle_mixed(&st).unwrap();
            for s in StructureId::ALL {
                let t = *mle.get(s);
                let best = loglik(&st, s, &t);
                for _ in 0..1000 {
                    let w = if s == StructureId::S3 { 0.0 } else { t.w + rng.random_range(-0.5..0.5) };
                    let cand = Params {
                        w,
                        tau1_sq: t.tau1_sq * rng.random_range(0.5f64..2.0),
                        tau2_sq: t.tau2_sq * rng.random_range(0.5f64..2.0),
                    };
                    assert!(loglik(&st, s, &cand) <= best + 1e-12);
                }
            }
        }
    }

    #[test]
    fn degenerate_data_rejected() {
        let st = suffstats(&[[1.0, 2.0], [2.0, 4.0], [-1.0, -2.0]], None).unwrap();
        assert!(matches!(mle_obs(&st), Err(Error::DegenerateData(_))));
        let st = suffstats(&[[1.0, 2.0]], None).unwrap();
        assert!(matches!(mle_obs(&st), Err(Error::DegenerateData(_))));
        let st = suffstats(&[[0.0, 1.0], [0.0, -1.0]], None).unwrap();
        assert!(matches!(mle_obs(&st), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn mle_obs_rejects_mixed() {
        let st = suffstats(&[[1.0, 1.0], [1.0, -1.0]], Some(&[(2.0, 1.0)])).unwrap();
        assert!(mle_obs(&st).is_err());
    }

    #[test]
    fn empty_loglik_is_zero() {
        let t = Params::new(0.3, 1.0, 2.0).unwrap();
        for s in StructureId::ALL {
            assert_eq!(loglik(&SuffStats::default(), s, &t), 0.0);
        }
    }

    #[test]
    fn loglik_matches_per_sample_sum() {
        let truth = Params::new(0.9, 0.6, 1.3).unwrap();
        let iv = InterventionSpec::on_node2(-1.4).unwrap();
        let obs = sample_obs(StructureId::S1, &truth, 7, 2).unwrap();
        let int = sample_interv(StructureId::S1, &truth, &iv, 5, 2).unwrap();
        let st = suffstats(&obs, Some(&int)).unwrap();
        for s in StructureId::ALL {
            let theta = if s == StructureId::S3 {
                Params::new(0.0, 0.8, 1.7).unwrap()
            } else {
                Params::new(-0.4, 0.8, 1.7).unwrap()
            };
            let direct: f64 = obs.iter().map(|&x| obs_logpdf(x, s, &theta)).sum::<f64>()
                + int.iter().map(|&(y1, _)| interv_logpdf_y1(y1, s, &theta, &iv)).sum::<f64>();
            assert!((loglik(&st, s, &theta) - direct).abs() < 1e-10, "{s}");
        }
    }

    #[test]
    fn push_forward_identity_on_sample() {
        let truth = Params::new(1.0, 1.0, 1.0).unwrap();
        let st = suffstats(&sample_obs(StructureId::S1, &truth, 500, 1).unwrap(), None).unwrap();
        let mle = mle_obs(&st).unwrap();
        let g = gamma_map(mle.get(StructureId::S1));
        for (a, b) in g.as_array().iter().zip(mle.get(StructureId::S2).as_array()) {
            assert!((a - b).abs() < 1e-12);
        }
        let l1 = loglik(&st, StructureId::S1, mle.get(StructureId::S1));
        let l2 = loglik(&st, StructureId::S2, mle.get(StructureId::S2));
        assert!((l1 - l2).abs() < 1e-10);
    }

    #[test]
    fn mle_consistency() {
        let truth = Params::new(1.0, 1.0, 1.0).unwrap();
        let st = suffstats(&sample_obs(StructureId::S1, &truth, 100_000, 21).unwrap(), None).unwrap();
        let t1 = *mle_obs(&st).unwrap().get(StructureId::S1);
        for (a, b) in t1.as_array().iter().zip(truth.as_array()) {
            assert!((a / b - 1.0).abs() < 0.03);
        }

        let iv = InterventionSpec::on_node2(2.0).unwrap();
        let obs = sample_obs(StructureId::S1, &truth, 50_000, 22).unwrap();
        let int = sample_interv(StructureId::S1, &truth, &iv, 50_000, 22).unwrap();
        let st = suffstats(&obs, Some(&int)).unwrap();
        let t1 = *mle_mixed(&st).unwrap().get(StructureId::S1);
        for (a, b) in t1.as_array().iter().zip(truth.as_array()) {
            assert!((a / b - 1.0).abs() < 0.03);
        }
    }

    #[test]
    fn mixed_with_no_interventions_matches_observational_bitwise() {
        let truth = Params::new(-0.5, 2.0, 0.5).unwrap();
        let st = suffstats(&sample_obs(StructureId::S2, &truth, 40, 9).unwrap(), None).unwrap();
        assert_eq!(mle_obs(&st).unwrap(), mle_mixed(&st).unwrap());
    }
}
