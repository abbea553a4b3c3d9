//! Deterministic Monte Carlo harness for the posterior concentration studies.
//!
//! Every `(trial, N)` cell draws from its own seed
//! `base_seed + trial * 1_000_000 + index(N)`, so results do not depend on
//! scheduling. Cells run in parallel and are gathered back in `(trial, N)`
//! order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::{augmented_odds_statistic, posterior, StructurePosterior};
use crate::ks::{ks_chi2_1, KsResult};
use crate::numeric::ols;
use crate::prior::BgeHyper;
use crate::rates::{d12, d21, nonident_posterior_limit, ExponentId, RateInput};
use crate::sem::{IntervSampler, InterventionSpec, ObsSampler, Params, StructureId};
use crate::stats::{SuffStats, SuffStatsBuilder};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub true_model: StructureId,
    pub theta_star: Params,
    pub hyper: BgeHyper,
    pub y: f64,
    /// Observational ratio for mixed data; `None` means observational only.
    pub eta: Option<f64>,
    pub sample_sizes: Vec<usize>,
    pub trials: usize,
    pub base_seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.theta_star.validate_for(self.true_model)?;
        if self.trials == 0 {
            return Err(Error::InvalidInput("trials must be at least 1".into()));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("sample sizes must be non-empty and strictly increasing".into()));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta < 1.0) {
                return Err(Error::InvalidParams(format!("eta must lie in (0, 1), got {eta}")));
            }
            InterventionSpec::on_node2(self.y)?;
        }
        Ok(())
    }

    /// `(n, m)` for a total sample size, with `n = round(eta * N)`.
    pub fn split(&self, total: usize) -> (usize, usize) {
        match self.eta {
            None => (total, 0),
            Some(eta) => {
                let n = ((eta * total as f64).round() as usize).min(total);
                (n, total - n)
            }
        }
    }

    pub fn seed(&self, trial: usize, index: usize) -> u64 {
        self.base_seed
            .wrapping_add((trial as u64).wrapping_mul(1_000_000))
            .wrapping_add(index as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub total: usize,
    pub n: usize,
    pub m: usize,
    pub posterior: StructurePosterior,
    /// `log(1/π(true) − 1)`.
    pub log_inv_odds: f64,
    /// `log(π(S1)/π(S2))`.
    pub log_ratio_12: f64,
    /// Augmented odds statistics for S1 and S2, when the truth is S3.
    pub augmented: Option<[f64; 2]>,
}

impl TrialRecord {
    /// `1 − π(true)` without cancellation.
    pub fn one_minus_true(&self) -> f64 {
        1.0 / (1.0 + (-self.log_inv_odds).exp())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<TrialRecord>,
    /// Cells dropped because their data were degenerate.
    pub skipped: usize,
}

fn simulate_stats(cfg: &ExperimentConfig, trial: usize, index: usize) -> Result<SuffStats> {
    let total = cfg.sample_sizes[index];
    let (n, m) = cfg.split(total);
    let seed = cfg.seed(trial, index);
    let mut b = SuffStatsBuilder::new();
    for x in ObsSampler::new(cfg.true_model, &cfg.theta_star, seed)?.take(n) {
        b.push_obs(x);
    }
    if cfg.eta.is_some() {
        let iv = InterventionSpec::on_node2(cfg.y)?;
        b.set_intervention_value(cfg.y)?;
        for y1 in IntervSampler::new(cfg.true_model, &cfg.theta_star, &iv, seed)?.take(m) {
            b.push_interv(y1, cfg.y)?;
        }
    }
    Ok(b.finish())
}

fn run_cells(cfg: &ExperimentConfig, with_statistic: bool) -> Result<RunOutput> {
    cfg.validate()?;
    let cells: Vec<(usize, usize)> = (0..cfg.trials)
        .flat_map(|t| (0..cfg.sample_sizes.len()).map(move |i| (t, i)))
        .collect();
    let results: Vec<Result<Option<TrialRecord>>> = cells
        .par_iter()
        .map(|&(trial, index)| {
            let st = simulate_stats(cfg, trial, index)?;
            if st.n < 2 {
                return Err(Error::InvalidInput(format!(
                    "N = {} leaves fewer than 2 observational samples",
                    cfg.sample_sizes[index]
                )));
            }
            let post = match posterior(&st, &cfg.hyper, cfg.eta.is_some()) {
                Ok(p) => p,
                Err(Error::DegenerateData(_)) | Err(Error::NumericalDegeneracy(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            let augmented = if with_statistic {
                let total = st.total();
                let a = augmented_odds_statistic(&st, StructureId::S1, &cfg.theta_star, &cfg.hyper, total);
                let b = augmented_odds_statistic(&st, StructureId::S2, &cfg.theta_star, &cfg.hyper, total);
                match (a, b) {
                    (Ok(a), Ok(b)) => Some([a, b]),
                    (Err(Error::NumericalDegeneracy(_)), _) | (_, Err(Error::NumericalDegeneracy(_))) => {
                        return Ok(None)
                    }
                    (Err(e), _) | (_, Err(e)) => return Err(e),
                }
            } else {
                None
            };
            Ok(Some(TrialRecord {
                trial,
                total: st.total(),
                n: st.n,
                m: st.m,
                log_inv_odds: post.log_inverse_odds(cfg.true_model),
                log_ratio_12: post.logp[0] - post.logp[1],
                posterior: post,
                augmented,
            }))
        })
        .collect();
    let mut records = Vec::with_capacity(results.len());
    let mut skipped = 0;
    for r in results {
        match r? {
            Some(rec) => records.push(rec),
            None => skipped += 1,
        }
    }
    Ok(RunOutput { records, skipped })
}

/// Exact posteriors for every `(trial, N)` cell.
pub fn run_concentration(cfg: &ExperimentConfig) -> Result<RunOutput> {
    run_cells(cfg, false)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlateauOutput {
    pub run: RunOutput,
    /// Predicted limit of `π(S1|D)/π(S2|D)`.
    pub theory_ratio: f64,
}

/// Posterior ratio of the two equivalent structures on observational data.
pub fn run_odds_plateau(cfg: &ExperimentConfig) -> Result<PlateauOutput> {
    if cfg.eta.is_some() {
        return Err(Error::InvalidInput("the plateau experiment uses observational data only".into()));
    }
    if !cfg.true_model.is_connected() {
        return Err(Error::InvalidInput("the plateau experiment needs a connected true model".into()));
    }
    let limit = nonident_posterior_limit(&cfg.theta_star, &cfg.hyper, cfg.true_model)?;
    let theory_ratio = if cfg.true_model == StructureId::S1 {
        limit / (1.0 - limit)
    } else {
        (1.0 - limit) / limit
    };
    Ok(PlateauOutput {
        run: run_cells(cfg, false)?,
        theory_ratio,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chi2Output {
    pub run: RunOutput,
    /// KS tests of the S1 and S2 statistics at the largest sample size.
    pub ks: [KsResult; 2],
}

/// Augmented odds statistics under a true independence model, tested
/// against χ²₁.
pub fn run_chi2_diagnostic(cfg: &ExperimentConfig) -> Result<Chi2Output> {
    if cfg.true_model != StructureId::S3 {
        return Err(Error::InvalidInput("the χ² diagnostic needs true model S3".into()));
    }
    let run = run_cells(cfg, true)?;
    let largest = *cfg.sample_sizes.last().unwrap_or(&0);
    let pick = |k: usize| -> Vec<f64> {
        run.records
            .iter()
            .filter(|r| r.total == largest)
            .filter_map(|r| r.augmented.map(|a| a[k]))
            .collect()
    };
    let (a, b) = (pick(0), pick(1));
    if a.is_empty() {
        return Err(Error::InsufficientPoints { needed: 1, got: 0 });
    }
    Ok(Chi2Output {
        ks: [ks_chi2_1(&a), ks_chi2_1(&b)],
        run,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(x, y)` points; needs four distinct `x`.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 4 {
        return Err(Error::InsufficientPoints { needed: 4, got: xs.len() });
    }
    let x: Vec<f64> = points.iter().map(|p| p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (slope, intercept, r_squared) = ols(&x, &y);
    Ok(SlopeFit { slope, intercept, r_squared })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveSummary {
    pub total: usize,
    pub count: usize,
    pub mean: f64,
    pub q10: f64,
    pub median: f64,
    pub q90: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-N summary of `value(record)` in increasing N order.
pub fn summarize(records: &[TrialRecord], value: &dyn Fn(&TrialRecord) -> f64) -> Vec<CurveSummary> {
    let mut sizes: Vec<usize> = records.iter().map(|r| r.total).collect();
    sizes.sort_unstable();
    sizes.dedup();
    sizes
        .into_iter()
        .map(|total| {
            let mut v: Vec<f64> = records.iter().filter(|r| r.total == total).map(value).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            v.sort_by(f64::total_cmp);
            CurveSummary {
                total,
                count: v.len(),
                mean,
                q10: quantile(&v, 0.1),
                median: quantile(&v, 0.5),
                q90: quantile(&v, 0.9),
            }
        })
        .collect()
}

/// Slope of the trial-averaged `log(1/π − 1)` against N.
pub fn fit_concentration_slope(records: &[TrialRecord]) -> Result<SlopeFit> {
    let pts: Vec<(f64, f64)> = summarize(records, &|r| r.log_inv_odds)
        .iter()
        .map(|c| (c.total as f64, c.mean))
        .collect();
    fit_slope(&pts)
}

/// The exponent that governs `log(1/π − 1)` for a mixed-data config, if the
/// truth is a connected structure.
pub fn theory_exponent(cfg: &ExperimentConfig) -> Result<Option<f64>> {
    let eta = match cfg.eta {
        Some(e) => e,
        None => return Ok(None),
    };
    let input = RateInput::new(cfg.theta_star, cfg.y, eta)?;
    Ok(match cfg.true_model {
        StructureId::S1 => Some(d12(&input)),
        StructureId::S2 => Some(d21(&input)?),
        StructureId::S3 => None,
    })
}

// ---------------------------------------------------------------------------
// CSV output

/// Float formatting used in every output file: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn header_block(header: &[String]) -> String {
    let mut s = String::new();
    for line in header {
        let _ = writeln!(s, "# {line}");
    }
    s
}

fn write_file(path: &Path, body: String) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, body)?;
    Ok(())
}

pub fn write_concentration_csv(path: &Path, header: &[String], records: &[TrialRecord]) -> Result<()> {
    let mut s = header_block(header);
    s.push_str("trial,N,n,m,p_s1,p_s2,p_s3,log_inv_odds\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.trial,
            r.total,
            r.n,
            r.m,
            fmt_f64(r.posterior.p[0]),
            fmt_f64(r.posterior.p[1]),
            fmt_f64(r.posterior.p[2]),
            fmt_f64(r.log_inv_odds)
        );
    }
    write_file(path, s)
}

pub fn write_bands_csv(path: &Path, header: &[String], bands: &[CurveSummary]) -> Result<()> {
    let mut s = header_block(header);
    s.push_str("N,count,mean,q10,median,q90\n");
    for b in bands {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            b.total,
            b.count,
            fmt_f64(b.mean),
            fmt_f64(b.q10),
            fmt_f64(b.median),
            fmt_f64(b.q90)
        );
    }
    write_file(path, s)
}

pub fn write_plateau_csv(path: &Path, header: &[String], out: &PlateauOutput) -> Result<()> {
    let mut s = header_block(header);
    s.push_str("trial,n,ratio_12,theory_limit\n");
    for r in &out.run.records {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            r.trial,
            r.n,
            fmt_f64(r.log_ratio_12.exp()),
            fmt_f64(out.theory_ratio)
        );
    }
    write_file(path, s)
}

pub fn write_chi2_csv(path: &Path, header: &[String], out: &Chi2Output) -> Result<()> {
    let mut s = header_block(header);
    s.push_str("trial,stat_s1,stat_s2\n");
    for r in &out.run.records {
        if let Some([a, b]) = r.augmented {
            let _ = writeln!(s, "{},{},{}", r.trial, fmt_f64(a), fmt_f64(b));
        }
    }
    write_file(path, s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeRow {
    pub eta: f64,
    pub fitted_slope: f64,
    pub theory_exponent: f64,
    pub rel_err: f64,
}

pub fn write_slopes_csv(path: &Path, header: &[String], rows: &[SlopeRow]) -> Result<()> {
    let mut s = header_block(header);
    s.push_str("eta,fitted_slope,theory_exponent,rel_err\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt_f64(r.eta),
            fmt_f64(r.fitted_slope),
            fmt_f64(r.theory_exponent),
            fmt_f64(r.rel_err)
        );
    }
    write_file(path, s)
}

/// Rate curves on a shared grid, one column per exponent.
pub fn write_rates_csv(path: &Path, header: &[String], columns: &[crate::rates::RateCurve]) -> Result<()> {
    let mut s = header_block(header);
    let names: Vec<&str> = columns.iter().map(|c| c.id.name()).collect();
    let _ = writeln!(s, "eta,{}", names.join(","));
    if let Some(first) = columns.first() {
        for (i, e) in first.eta.iter().enumerate() {
            let vals: Vec<String> = columns.iter().map(|c| fmt_f64(c.values[i])).collect();
            let _ = writeln!(s, "{},{}", fmt_f64(*e), vals.join(","));
        }
    }
    write_file(path, s)
}

/// All rate columns in the fixed CLI order.
pub const RATE_COLUMNS: [ExponentId; 6] = [
    ExponentId::D12,
    ExponentId::D21,
    ExponentId::D13,
    ExponentId::D23,
    ExponentId::D12Gain,
    ExponentId::D21Gain,
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::bge_symmetric_hyper;

    fn cfg(model: StructureId, theta: Params, eta: Option<f64>) -> ExperimentConfig {
        ExperimentConfig {
            true_model: model,
            theta_star: theta,
            hyper: bge_symmetric_hyper(3.0, 0.5).unwrap(),
            y: 2.0,
            eta,
            sample_sizes: vec![50, 100, 200, 400],
            trials: 6,
            base_seed: 3,
        }
    }

    #[test]
    fn exact_linear_data_gives_exact_slope() {
        let pts: Vec<(f64, f64)> = [200.0, 400.0, 800.0, 1600.0, 3200.0].iter().map(|&n| (n, -0.3 * n)).collect();
        let f = fit_slope(&pts).unwrap();
        assert!((f.slope + 0.3).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&f.r_squared));
        assert!(matches!(
            fit_slope(&pts[..3]),
            Err(Error::InsufficientPoints { needed: 4, got: 3 })
        ));
    }

    #[test]
    fn split_rounds_observational_count() {
        let c = cfg(StructureId::S1, Params::new(1.0, 1.0, 1.0).unwrap(), Some(0.25));
        assert_eq!(c.split(10), (3, 7));
        assert_eq!(c.split(200), (50, 150));
        let o = cfg(StructureId::S1, Params::new(1.0, 1.0, 1.0).unwrap(), None);
        assert_eq!(o.split(10), (10, 0));
    }

    #[test]
    fn records_are_ordered_and_normalized() {
        let c = cfg(StructureId::S1, Params::new(1.0, 1.0, 1.0).unwrap(), Some(0.5));
        let out = run_concentration(&c).unwrap();
        assert_eq!(out.skipped, 0);
        assert_eq!(out.records.len(), 24);
        for (k, r) in out.records.iter().enumerate() {
            assert_eq!((r.trial, r.total), (k / 4, c.sample_sizes[k % 4]));
            assert_eq!(r.n + r.m, r.total);
            assert!((r.posterior.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn parallel_and_serial_agree() {
        let c = cfg(StructureId::S2, Params::new(0.8, 1.0, 0.5).unwrap(), Some(0.4));
        let par = run_concentration(&c).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let ser = pool.install(|| run_concentration(&c)).unwrap();
        assert_eq!(par, ser);
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(StructureId::S1, Params::new(1.0, 1.0, 1.0).unwrap(), Some(0.5));
        c.sample_sizes = vec![100, 50];
        assert!(run_concentration(&c).is_err());
        c.sample_sizes = vec![50];
        c.trials = 0;
        assert!(run_concentration(&c).is_err());
        let bad = cfg(StructureId::S3, Params::new(1.0, 1.0, 1.0).unwrap(), None);
        assert!(run_concentration(&bad).is_err());
        let obs = cfg(StructureId::S1, Params::new(1.0, 1.0, 1.0).unwrap(), Some(0.5));
        assert!(run_odds_plateau(&obs).is_err());
        assert!(run_chi2_diagnostic(&obs).is_err());
    }

    #[test]
    fn symmetric_plateau_ratio_is_one() {
        let c = cfg(StructureId::S1, Params::new(1.0, 1.0, 1.0).unwrap(), None);
        let out = run_odds_plateau(&c).unwrap();
        assert!((out.theory_ratio - 1.0).abs() < 1e-12);
        for r in &out.run.records {
            assert!(r.log_ratio_12.abs() < 1e-9);
        }
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert!((quantile(&v, 0.1) - 1.4).abs() < 1e-15);
    }

    #[test]
    fn float_format_has_seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-2.0), "-2.0000000000000000e0");
    }
}
