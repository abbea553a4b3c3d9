//! Laplace approximation, Fisher information blocks, Hessian diagnostics and
//! a tensor-product Gauss–Legendre quadrature oracle for the marginals.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::prior::{prior_logpdf, BgeHyper};
use crate::sem::{InterventionSpec, Params, StructureId};
use crate::stats::{loglik, mle_mixed, SuffStats};

const LN_TAU: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Observational,
    Interventional,
}

/// Per-sample Fisher information of one data regime, in the parameter order
/// `(w, τ₁², τ₂²)`; S3 drops `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherBlock {
    pub matrix: DMatrix<f64>,
    pub regime: Regime,
}

pub fn fisher(
    s: StructureId,
    theta: &Params,
    regime: Regime,
    iv: Option<&InterventionSpec>,
) -> Result<FisherBlock> {
    let (t1, t2) = (theta.tau1_sq, theta.tau2_sq);
    let v1 = 1.0 / (2.0 * t1 * t1);
    let v2 = 1.0 / (2.0 * t2 * t2);
    let diag: Vec<f64> = match regime {
        Regime::Observational => match s {
            StructureId::S1 => vec![t2 / t1, v1, v2],
            StructureId::S2 => vec![t1 / t2, v1, v2],
            StructureId::S3 => vec![v1, v2],
        },
        Regime::Interventional => {
            let iv = iv.ok_or_else(|| {
                Error::InvalidInput("interventional Fisher information needs an intervention".into())
            })?;
            match s {
                StructureId::S1 => vec![iv.y * iv.y / t1, v1, 0.0],
                StructureId::S2 => vec![0.0, v1, 0.0],
                StructureId::S3 => vec![v1, 0.0],
            }
        }
    };
    Ok(FisherBlock {
        matrix: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)),
        regime,
    })
}

/// `η Iˣ + (1 − η) Iʸ`, the per-sample information of a mixed dataset with
/// observational ratio `eta`.
pub fn weighted_fisher(s: StructureId, theta: &Params, eta: f64, y: f64) -> Result<DMatrix<f64>> {
    let iv = InterventionSpec::on_node2(y)?;
    let ix = fisher(s, theta, Regime::Observational, None)?.matrix;
    let iy = fisher(s, theta, Regime::Interventional, Some(&iv))?.matrix;
    Ok(ix * eta + iy * (1.0 - eta))
}

/// Analytic Hessian of the mixed-data log-likelihood at `theta`.
pub fn loglik_hessian(st: &SuffStats, s: StructureId, theta: &Params) -> DMatrix<f64> {
    let n = st.n as f64;
    let total = st.total() as f64;
    let Params { w, tau1_sq: t1, tau2_sq: t2 } = *theta;
    match s {
        StructureId::S1 => {
            let a0 = st.s2x + st.s2y;
            let b = st.s12x + st.s12y;
            let c = st.s1x + st.s1y;
            let q = c - 2.0 * w * b + w * w * a0;
            let wt = (w * a0 - b) / (t1 * t1);
            DMatrix::from_row_slice(
                3,
                3,
                &[
                    -a0 / t1,
                    wt,
                    0.0,
                    wt,
                    total / (2.0 * t1 * t1) - q / (t1 * t1 * t1),
                    0.0,
                    0.0,
                    0.0,
                    n / (2.0 * t2 * t2) - st.s2x / (t2 * t2 * t2),
                ],
            )
        }
        StructureId::S2 => {
            let c = st.s1x + st.s1y;
            let q = st.s2x - 2.0 * w * st.s12x + w * w * st.s1x;
            let wt = (w * st.s1x - st.s12x) / (t2 * t2);
            DMatrix::from_row_slice(
                3,
                3,
                &[
                    -st.s1x / t2,
                    0.0,
                    wt,
                    0.0,
                    total / (2.0 * t1 * t1) - c / (t1 * t1 * t1),
                    0.0,
                    wt,
                    0.0,
                    n / (2.0 * t2 * t2) - q / (t2 * t2 * t2),
                ],
            )
        }
        StructureId::S3 => {
            let c = st.s1x + st.s1y;
            DMatrix::from_row_slice(
                2,
                2,
                &[
                    total / (2.0 * t1 * t1) - c / (t1 * t1 * t1),
                    0.0,
                    0.0,
                    n / (2.0 * t2 * t2) - st.s2x / (t2 * t2 * t2),
                ],
            )
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HessianReport {
    pub hessian: DMatrix<f64>,
    /// Eigenvalues in ascending order.
    pub eigenvalues: Vec<f64>,
    pub determinant: f64,
    pub negative_definite: bool,
}

pub fn hessian_diagnostics(st: &SuffStats, s: StructureId, theta: &Params) -> HessianReport {
    let hessian = loglik_hessian(st, s, theta);
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(hessian.clone()).eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    let determinant = hessian.determinant();
    let negative_definite = eigenvalues.iter().all(|&e| e < 0.0);
    HessianReport {
        hessian,
        eigenvalues,
        determinant,
        negative_definite,
    }
}

fn reduced(s: StructureId, theta: &Params) -> Params {
    if s == StructureId::S3 {
        Params { w: 0.0, ..*theta }
    } else {
        *theta
    }
}

/// Laplace approximation of the log marginal likelihood around `mle`.
///
/// `prior` is the log prior density of the structure evaluated at a
/// parameter vector.
pub fn laplace_log_marginal(
    st: &SuffStats,
    s: StructureId,
    prior: &dyn Fn(&Params) -> f64,
    mle: &Params,
) -> Result<f64> {
    let theta = reduced(s, mle);
    theta.validate()?;
    let report = hessian_diagnostics(st, s, &theta);
    if !report.negative_definite {
        return Err(Error::NonConcaveAtMle(format!(
            "{s} Hessian eigenvalues {:?}",
            report.eigenvalues
        )));
    }
    let d = s.dim() as f64;
    let log_det_neg: f64 = report.eigenvalues.iter().map(|e| (-e).ln()).sum();
    let v = loglik(st, s, &theta) + 0.5 * d * LN_TAU - 0.5 * log_det_neg + prior(&theta);
    if !v.is_finite() {
        return Err(Error::NumericalDegeneracy(format!("Laplace log marginal of {s} is {v}")));
    }
    Ok(v)
}

/// Laplace log marginal under a BGe prior, expanded at the structure's MLE.
pub fn laplace_log_marginal_bge(st: &SuffStats, s: StructureId, h: &BgeHyper) -> Result<f64> {
    let mle = mle_mixed(st)?;
    laplace_log_marginal(st, s, &|t| prior_logpdf(t, s, h), mle.get(s))
}

/// The `(d/2) log 2π − ½ log det(−H)` part of the Laplace expansion.
pub fn laplace_penalty(st: &SuffStats, s: StructureId, mle: &Params) -> Result<f64> {
    let report = hessian_diagnostics(st, s, &reduced(s, mle));
    if !report.negative_definite {
        return Err(Error::NonConcaveAtMle(format!("{s} Hessian eigenvalues {:?}", report.eigenvalues)));
    }
    let log_det_neg: f64 = report.eigenvalues.iter().map(|e| (-e).ln()).sum();
    Ok(0.5 * s.dim() as f64 * LN_TAU - 0.5 * log_det_neg)
}

// ---------------------------------------------------------------------------
// Quadrature oracle

const GL_ORDER: usize = 10;
const MAX_POINTS: usize = 64;
const REL_TOL: f64 = 1e-6;
const LOG_BOUNDARY_TOL: f64 = -23.025_850_929_940_457; // ln 1e-10

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let nf = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if order == 0 { 1.0 } else { p1 };
            dp = nf * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite rule: `panels` equal panels on `[lo, hi]`, each with the
/// `GL_ORDER`-point rule. Returns `(nodes, log weights)`.
fn composite(lo: f64, hi: f64, panels: usize, rule: &(Vec<f64>, Vec<f64>)) -> (Vec<f64>, Vec<f64>) {
    let width = (hi - lo) / panels as f64;
    let mut xs = Vec::with_capacity(panels * rule.0.len());
    let mut lw = Vec::with_capacity(panels * rule.0.len());
    for p in 0..panels {
        let mid = lo + (p as f64 + 0.5) * width;
        for (x, w) in rule.0.iter().zip(&rule.1) {
            xs.push(mid + 0.5 * width * x);
            lw.push((0.5 * width * w).ln());
        }
    }
    (xs, lw)
}

fn log_sum_weighted(vals: &[f64]) -> f64 {
    crate::numeric::log_sum_exp(vals)
}

/// Centers of the log-variance integration box.
fn log_variance_centers(st: &SuffStats, s: StructureId, shapes: Option<(f64, f64, f64)>) -> [f64; 2] {
    if let Ok(mle) = mle_mixed(st) {
        let t = mle.get(s);
        return [t.tau1_sq.ln(), t.tau2_sq.ln()];
    }
    let total = st.total() as f64;
    let n = st.n as f64;
    let s1 = st.s1x + st.s1y;
    match shapes {
        Some((a1, a2, beta)) => [
            ((beta + 0.5 * s1) / (a1 + 0.5 * total)).ln(),
            ((beta + 0.5 * st.s2x) / (a2 + 0.5 * n)).ln(),
        ],
        None => [
            if total > 0.0 && s1 > 0.0 { (s1 / total).ln() } else { 0.0 },
            if n > 0.0 && st.s2x > 0.0 { (st.s2x / n).ln() } else { 0.0 },
        ],
    }
}

/// Integrates `exp(f(u1, u2))` over the plane, starting from a box of
/// half-width 12 at `centers`, growing the box while its boundary carries
/// more than 1e-10 of the peak and doubling panels until two successive
/// levels agree to 1e-6 relative.
fn integrate_2d(f: &dyn Fn(f64, f64) -> f64, centers: [f64; 2]) -> Result<f64> {
    let rule = gauss_legendre(GL_ORDER);
    let mut lo = [centers[0] - 12.0, centers[1] - 12.0];
    let mut hi = [centers[0] + 12.0, centers[1] + 12.0];

    // grow the box on a coarse probe grid, then trim it to where the
    // integrand is within e^-60 of the peak
    const PROBE: usize = 16;
    loop {
        let (x0, _) = composite(lo[0], hi[0], PROBE, &rule);
        let (x1, _) = composite(lo[1], hi[1], PROBE, &rule);
        let grid: Vec<Vec<f64>> = x0.iter().map(|&a| x1.iter().map(|&b| f(a, b)).collect()).collect();
        let peak = grid.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        if !peak.is_finite() {
            return Err(Error::NonConvergedQuadrature(format!("integrand peak is {peak}")));
        }
        let last = x0.len() - 1;
        let edge = |vals: &mut dyn Iterator<Item = f64>| vals.fold(f64::NEG_INFINITY, f64::max) - peak > LOG_BOUNDARY_TOL;
        let grow = [
            edge(&mut grid[0].iter().copied()),
            edge(&mut grid[last].iter().copied()),
            edge(&mut grid.iter().map(|r| r[0])),
            edge(&mut grid.iter().map(|r| r[last])),
        ];
        if !grow.iter().any(|&g| g) {
            let keep = |v: f64| v - peak > -60.0;
            let rows: Vec<usize> = (0..x0.len()).filter(|&i| grid[i].iter().any(|&v| keep(v))).collect();
            let cols: Vec<usize> = (0..x1.len()).filter(|&j| grid.iter().any(|r| keep(r[j]))).collect();
            let margin = [(hi[0] - lo[0]) / PROBE as f64, (hi[1] - lo[1]) / PROBE as f64];
            let new_lo = [x0[rows[0]] - margin[0], x1[cols[0]] - margin[1]];
            let new_hi = [x0[*rows.last().unwrap()] + margin[0], x1[*cols.last().unwrap()] + margin[1]];
            for k in 0..2 {
                lo[k] = lo[k].max(new_lo[k]);
                hi[k] = hi[k].min(new_hi[k]);
            }
            break;
        }
        if hi[0] - lo[0] > 400.0 || hi[1] - lo[1] > 400.0 {
            return Err(Error::NonConvergedQuadrature("integrand mass does not decay in log-variance".into()));
        }
        if grow[0] {
            lo[0] -= 6.0;
        }
        if grow[1] {
            hi[0] += 6.0;
        }
        if grow[2] {
            lo[1] -= 6.0;
        }
        if grow[3] {
            hi[1] += 6.0;
        }
    }

    let level = |panels: usize| -> f64 {
        let (x0, w0) = composite(lo[0], hi[0], panels, &rule);
        let (x1, w1) = composite(lo[1], hi[1], panels, &rule);
        let mut terms = Vec::with_capacity(x0.len() * x1.len());
        for (a, wa) in x0.iter().zip(&w0) {
            for (b, wb) in x1.iter().zip(&w1) {
                terms.push(f(*a, *b) + wa + wb);
            }
        }
        log_sum_weighted(&terms)
    };

    let mut panels = 4;
    let mut prev = level(panels);
    while panels < MAX_POINTS * 4 {
        panels *= 2;
        let cur = level(panels);
        if ((cur - prev).exp() - 1.0).abs() < REL_TOL {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::NonConvergedQuadrature(format!(
        "no agreement to {REL_TOL} after {panels} panels per axis"
    )))
}

fn check_size(st: &SuffStats) -> Result<()> {
    st.validate()?;
    if st.total() > MAX_POINTS {
        return Err(Error::InvalidInput(format!(
            "quadrature oracle is limited to {MAX_POINTS} samples, got {}",
            st.total()
        )));
    }
    Ok(())
}

fn theta_at(w: f64, u1: f64, u2: f64) -> Params {
    Params { w, tau1_sq: u1.exp(), tau2_sq: u2.exp() }
}

/// Log marginal likelihood under a BGe prior by brute-force quadrature.
///
/// The integrand is Gaussian in the edge weight for fixed variances, so the
/// weight is integrated in closed form from a quadratic fit of the log
/// integrand; the two log-variances are integrated numerically.
pub fn quadrature_log_marginal(st: &SuffStats, s: StructureId, h: &BgeHyper) -> Result<f64> {
    check_size(st)?;
    let (a1, a2) = h.shapes(s);
    let g = |w: f64, u1: f64, u2: f64| {
        let t = theta_at(w, u1, u2);
        loglik(st, s, &t) + prior_logpdf(&t, s, h)
    };
    let f = |u1: f64, u2: f64| -> f64 {
        let jac = u1 + u2;
        if s == StructureId::S3 {
            return g(0.0, u1, u2) + jac;
        }
        let (gm, g0, gp) = (g(-1.0, u1, u2), g(0.0, u1, u2), g(1.0, u1, u2));
        let b = 0.5 * (gp - gm);
        let c = g0 - 0.5 * (gp + gm);
        if !(c > 0.0) {
            return f64::NEG_INFINITY;
        }
        g0 + b * b / (4.0 * c) + 0.5 * (std::f64::consts::PI / c).ln() + jac
    };
    integrate_2d(&f, log_variance_centers(st, s, Some((a1, a2, h.beta))))
}

/// Log marginal likelihood under an arbitrary prior density by full 3D
/// quadrature (the weight integrated numerically on an adaptive line).
pub fn quadrature_log_marginal_with_prior(
    st: &SuffStats,
    s: StructureId,
    prior: &(dyn Fn(&Params) -> f64 + Sync),
) -> Result<f64> {
    check_size(st)?;
    let g = |w: f64, u1: f64, u2: f64| {
        let t = theta_at(w, u1, u2);
        loglik(st, s, &t) + prior(&t)
    };
    if s == StructureId::S3 {
        return integrate_2d(&|u1, u2| g(0.0, u1, u2) + u1 + u2, log_variance_centers(st, s, None));
    }
    let rule = gauss_legendre(GL_ORDER);
    let (sxx, sxy) = match s {
        StructureId::S1 => (st.s2x + st.s2y, st.s12x + st.s12y),
        _ => (st.s1x, st.s12x),
    };
    let line = |u1: f64, u2: f64| -> f64 {
        let child = if s == StructureId::S1 { u1.exp() } else { u2.exp() };
        let center = sxy / (sxx + 1.0);
        let mut half = 12.0 * (child / (sxx + 1.0)).sqrt();
        for _ in 0..30 {
            let ends = g(center - half, u1, u2).max(g(center + half, u1, u2));
            let mid = g(center, u1, u2);
            if ends - mid < LOG_BOUNDARY_TOL {
                break;
            }
            half *= 2.0;
        }
        let mut prev = f64::NAN;
        let mut panels = 4;
        loop {
            let (xs, lw) = composite(center - half, center + half, panels, &rule);
            let terms: Vec<f64> = xs.iter().zip(&lw).map(|(w, l)| g(*w, u1, u2) + l).collect();
            let cur = log_sum_weighted(&terms);
            if ((cur - prev).exp() - 1.0).abs() < 0.1 * REL_TOL || panels >= 256 {
                return cur + u1 + u2;
            }
            prev = cur;
            panels *= 2;
        }
    };
    integrate_2d(&line, log_variance_centers(st, s, None))
}
