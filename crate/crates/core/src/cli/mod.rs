//! Command implementations behind the `bicausal` binary.
//!
//! Each command takes a resolved [`CliConfig`], writes its output files under
//! `cfg.out` and returns the human-readable report lines.

pub mod config;
pub mod presets;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::approx::{laplace_log_marginal_bge, laplace_penalty, quadrature_log_marginal};
use crate::error::{Error, Result};
use crate::exact::{log_marginal_mixed, StructurePosterior};
use crate::experiments::{fmt_f64, write_rates_csv, RATE_COLUMNS};
use crate::rates::{mixing_helps_s1, optimal_eta, rate_curve, ExponentId};
use crate::sem::{sample_interv, sample_obs, InterventionSpec, StructureId};
use crate::stats::{mle_mixed, SuffStats, SuffStatsBuilder};

pub use config::{CliConfig, ConfigFile, Method};
pub use presets::{cmd_experiment, ExperimentReport};

pub const DATASET_FILE: &str = "dataset.csv";
pub const POSTERIOR_FILE: &str = "posterior.csv";
pub const RATES_FILE: &str = "rates.csv";

fn header_text(lines: &[String]) -> String {
    lines.iter().map(|l| format!("# {l}\n")).collect()
}

fn write_out(path: &Path, body: &str) -> Result<()> {
    if let Some(p) = path.parent() {
        fs::create_dir_all(p)?;
    }
    fs::write(path, body)?;
    Ok(())
}

/// Draws `n` observational and `m` interventional samples and writes them
/// as `regime,x1,x2` rows.
pub fn cmd_simulate(cfg: &CliConfig) -> Result<Vec<String>> {
    let obs = sample_obs(cfg.structure, &cfg.theta, cfg.n, cfg.seed)?;
    let interv = if cfg.m > 0 {
        let iv = InterventionSpec::on_node2(cfg.y)?;
        sample_interv(cfg.structure, &cfg.theta, &iv, cfg.m, cfg.seed)?
    } else {
        Vec::new()
    };
    let mut body = header_text(&cfg.header("simulate"));
    body.push_str("regime,x1,x2\n");
    for x in &obs {
        let _ = writeln!(body, "obs,{},{}", fmt_f64(x[0]), fmt_f64(x[1]));
    }
    for (y1, y) in &interv {
        let _ = writeln!(body, "int,{},{}", fmt_f64(*y1), fmt_f64(*y));
    }
    let path = cfg.out.join(DATASET_FILE);
    write_out(&path, &body)?;
    Ok(vec![format!(
        "wrote {} observational and {} interventional rows to {}",
        obs.len(),
        interv.len(),
        path.display()
    )])
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub obs: Vec<[f64; 2]>,
    pub interv: Vec<(f64, f64)>,
}

/// Parses `regime,x1,x2` rows. `#` starts a comment; an optional column
/// header line is accepted.
pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let mut data = Dataset::default();
    let mut seen_row = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !seen_row && fields.first().is_some_and(|f| f.eq_ignore_ascii_case("regime")) {
            seen_row = true;
            continue;
        }
        seen_row = true;
        let err = |msg: String| Error::Parse { line: line_no, msg };
        if fields.len() != 3 {
            return Err(err(format!("expected 3 fields, got {}", fields.len())));
        }
        let num = |s: &str| -> Result<f64> {
            let v: f64 = s.parse().map_err(|_| err(format!("`{s}` is not a number")))?;
            if !v.is_finite() {
                return Err(err(format!("`{s}` is not finite")));
            }
            Ok(v)
        };
        let (a, b) = (num(fields[1])?, num(fields[2])?);
        match fields[0] {
            "obs" => data.obs.push([a, b]),
            "int" => {
                if let Some(&(_, y)) = data.interv.first() {
                    if y != b {
                        return Err(err(format!("intervention value {b} differs from earlier value {y}")));
                    }
                }
                data.interv.push((a, b));
            }
            other => return Err(err(format!("regime must be `obs` or `int`, got `{other}`"))),
        }
    }
    Ok(data)
}

impl Dataset {
    pub fn suffstats(&self) -> Result<SuffStats> {
        let mut b = SuffStatsBuilder::new();
        for x in &self.obs {
            b.push_obs(*x);
        }
        for &(y1, y) in &self.interv {
            b.push_interv(y1, y)?;
        }
        let st = b.finish();
        st.validate()?;
        Ok(st)
    }
}

fn with_guidance(e: Error) -> Error {
    match e {
        Error::DegenerateData(msg) => Error::DegenerateData(format!(
            "{msg}; the exact method needs no MLE and handles small or constant samples"
        )),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorReport {
    pub method: Method,
    pub log_marginal: [f64; 3],
    pub exact_log_marginal: [f64; 3],
    pub posterior: StructurePosterior,
    /// Occam terms of S1 and S2 relative to S3, Laplace only.
    pub occam_gap: Option<[f64; 2]>,
    pub lines: Vec<String>,
}

/// Structure posterior of a dataset file under the configured method.
pub fn cmd_posterior(cfg: &CliConfig, data_path: Option<&Path>) -> Result<PosteriorReport> {
    let path: PathBuf = data_path
        .map(Path::to_path_buf)
        .or_else(|| cfg.data.clone())
        .ok_or_else(|| Error::Config("no dataset given: pass a path or set `data`".into()))?;
    let text = fs::read_to_string(&path)?;
    let data = parse_dataset(&text)?;
    posterior_report(cfg, &data)
}

pub fn posterior_report(cfg: &CliConfig, data: &Dataset) -> Result<PosteriorReport> {
    let st = data.suffstats()?;
    let h = &cfg.hyper;
    let mut exact = [0.0; 3];
    for s in StructureId::ALL {
        exact[s.index()] = log_marginal_mixed(&st, s, h)?;
    }
    let mut lm = exact;
    if cfg.method != Method::Exact {
        for s in StructureId::ALL {
            lm[s.index()] = match cfg.method {
                Method::Laplace => laplace_log_marginal_bge(&st, s, h).map_err(with_guidance)?,
                Method::Quadrature => quadrature_log_marginal(&st, s, h)?,
                Method::Exact => unreachable!(),
            };
        }
    }
    let prior = cfg.structure_prior.p;
    let post = StructurePosterior::from_log_weights([
        lm[0] + prior[0].ln(),
        lm[1] + prior[1].ln(),
        lm[2] + prior[2].ln(),
    ])?;

    let mle = mle_mixed(&st);
    let occam_gap = match (cfg.method, &mle) {
        (Method::Laplace, Ok(m)) => {
            let p3 = laplace_penalty(&st, StructureId::S3, m.get(StructureId::S3))?;
            Some([
                laplace_penalty(&st, StructureId::S1, m.get(StructureId::S1))? - p3,
                laplace_penalty(&st, StructureId::S2, m.get(StructureId::S2))? - p3,
            ])
        }
        _ => None,
    };

    let mut lines = vec![format!("n = {}, m = {}, method = {}", st.n, st.m, cfg.method)];
    for s in StructureId::ALL {
        let i = s.index();
        let mut l = format!("{s}: posterior {:.10}, log marginal {:.10}", post.p[i], lm[i]);
        if cfg.method != Method::Exact {
            let _ = write!(l, ", delta vs exact {:+.3e}", lm[i] - exact[i]);
        }
        lines.push(l);
    }
    match &mle {
        Ok(m) => {
            for s in StructureId::ALL {
                let t = m.get(s);
                lines.push(format!(
                    "{s} MLE: w = {:.10}, tau1_sq = {:.10}, tau2_sq = {:.10}",
                    t.w, t.tau1_sq, t.tau2_sq
                ));
            }
        }
        Err(e) => lines.push(format!("MLE unavailable: {e}")),
    }
    if let Some(g) = occam_gap {
        let ref_term = 0.5 * (st.total() as f64).ln();
        lines.push(format!(
            "Occam gap vs S3 (Laplace volume term): S1 {:.6}, S2 {:.6}; -1/2 log N = {:.6}",
            g[0], g[1], -ref_term
        ));
    }

    let mut body = header_text(&cfg.header("posterior"));
    body.push_str("structure,posterior,log_marginal,exact_log_marginal,delta\n");
    for s in StructureId::ALL {
        let i = s.index();
        let _ = writeln!(
            body,
            "{s},{},{},{},{}",
            fmt_f64(post.p[i]),
            fmt_f64(lm[i]),
            fmt_f64(exact[i]),
            fmt_f64(lm[i] - exact[i])
        );
    }
    if let Some(g) = occam_gap {
        let _ = writeln!(body, "# occam_gap_s1 = {}", fmt_f64(g[0]));
        let _ = writeln!(body, "# occam_gap_s2 = {}", fmt_f64(g[1]));
    }
    write_out(&cfg.out.join(POSTERIOR_FILE), &body)?;

    Ok(PosteriorReport {
        method: cfg.method,
        log_marginal: lm,
        exact_log_marginal: exact,
        posterior: post,
        occam_gap,
        lines,
    })
}

/// Evenly spaced interior grid `k / (points + 1)`.
pub fn eta_grid(points: usize) -> Vec<f64> {
    (1..=points).map(|k| k as f64 / (points + 1) as f64).collect()
}

/// Rate curves on the η grid plus the optimal ratios.
pub fn cmd_rates(cfg: &CliConfig) -> Result<Vec<String>> {
    rates_to(cfg, &cfg.out.join(RATES_FILE), &RATE_COLUMNS, &cfg.header("rates"))
}

pub(crate) fn rates_to(cfg: &CliConfig, path: &Path, ids: &[ExponentId], header: &[String]) -> Result<Vec<String>> {
    let grid = eta_grid(cfg.eta_points);
    let curves = ids
        .iter()
        .map(|&id| rate_curve(id, &cfg.theta, cfg.y, &grid))
        .collect::<Result<Vec<_>>>()?;
    let (e12, v12) = optimal_eta(ExponentId::D12, &cfg.theta, cfg.y)?;
    let (e21, v21) = optimal_eta(ExponentId::D21, &cfg.theta, cfg.y)?;
    let helps = mixing_helps_s1(&cfg.theta, cfg.y);
    let summary = vec![
        format!("optimal_eta_d12 = {} (d12 = {})", fmt_f64(e12), fmt_f64(v12)),
        format!("optimal_eta_d21 = {} (d21 = {})", fmt_f64(e21), fmt_f64(v21)),
        format!("mixing_helps_s1 = {helps}"),
    ];
    let mut full = header.to_vec();
    full.extend(summary.iter().cloned());
    write_rates_csv(path, &full, &curves)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn cfg_with(pairs: &[(&str, &str)], out: &Path) -> CliConfig {
        let mut m: BTreeMap<String, String> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        m.insert("out".into(), out.display().to_string());
        CliConfig::from_map(m).unwrap()
    }

    #[test]
    fn simulate_row_counts_and_intervention_value() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = cfg_with(&[("n", "3"), ("m", "2"), ("y", "1.25"), ("seed", "9")], dir.path());
        cmd_simulate(&cfg).unwrap();
        let text = fs::read_to_string(dir.path().join(DATASET_FILE)).unwrap();
        let data = parse_dataset(&text).unwrap();
        assert_eq!((data.obs.len(), data.interv.len()), (3, 2));
        assert!(data.interv.iter().all(|&(_, y)| y == 1.25));
        cmd_simulate(&cfg).unwrap();
        assert_eq!(text, fs::read_to_string(dir.path().join(DATASET_FILE)).unwrap());
        assert!(text.starts_with("# command = simulate\n"));
    }

    #[test]
    fn dataset_parse_errors() {
        let e = parse_dataset("regime,x1,x2\nobs,1,2\nobs,1\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }));
        let e = parse_dataset("obs,1,abc\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
        let e = parse_dataset("foo,1,2\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
        let e = parse_dataset("int,1,2\n# note\nint,1,3\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }));
    }

    #[test]
    fn empty_dataset_gives_uniform_posterior() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = cfg_with(&[], dir.path());
        let r = posterior_report(&cfg, &Dataset::default()).unwrap();
        for p in r.posterior.p {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let cfg = cfg_with(&[("method", "laplace")], dir.path());
        let e = posterior_report(&cfg, &Dataset::default()).unwrap_err();
        assert!(matches!(e, Error::DegenerateData(_)));
        assert!(e.to_string().contains("exact method"));
    }

    #[test]
    fn posterior_methods_agree() {
        let dir = tempfile::tempdir().unwrap();
        let sim = cfg_with(&[("n", "5"), ("seed", "4")], dir.path());
        let data = Dataset {
            obs: sample_obs(sim.structure, &sim.theta, 5, 4).unwrap(),
            interv: vec![],
        };
        let exact = posterior_report(&sim, &data).unwrap();
        let quad = posterior_report(&cfg_with(&[("method", "quadrature")], dir.path()), &data).unwrap();
        for i in 0..3 {
            assert!((exact.posterior.p[i] - quad.posterior.p[i]).abs() < 1e-4);
        }
        let lap = posterior_report(&cfg_with(&[("method", "laplace")], dir.path()), &data).unwrap();
        let gap = lap.occam_gap.unwrap();
        assert!(gap.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn rates_special_case_column() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = cfg_with(&[("y", "1"), ("eta_points", "9")], dir.path());
        let summary = cmd_rates(&cfg).unwrap();
        assert!(summary.iter().any(|l| l.starts_with("mixing_helps_s1 = ")));
        let text = fs::read_to_string(dir.path().join(RATES_FILE)).unwrap();
        let mut rows = text.lines().filter(|l| !l.starts_with('#'));
        assert_eq!(rows.next().unwrap(), "eta,d12,d21,d13,d23,d12_gain,d21_gain");
        for row in rows {
            let v: Vec<f64> = row.split(',').map(|s| s.parse().unwrap()).collect();
            let expect = 0.5 * (1.0 - v[0]) * 2f64.ln();
            assert!((v[1] - expect).abs() < 1e-12);
        }
    }
}
