//! Flat `key = value` configuration with optional `[command]` sections.
//!
//! Precedence, lowest first: built-in defaults, top-level keys, keys in the
//! section named after the running command, command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::exact::StructurePrior;
use crate::prior::{bge_symmetric_hyper, BgeHyper};
use crate::sem::{Params, StructureId};

pub const KNOWN_KEYS: &[&str] = &[
    "alpha1",
    "alpha2",
    "alpha3",
    "alpha4",
    "alpha5",
    "alpha6",
    "beta",
    "bge_alpha",
    "bge_beta",
    "data",
    "eta",
    "eta_points",
    "experiment",
    "lambda",
    "m",
    "method",
    "n",
    "out",
    "preset",
    "sample_sizes",
    "seed",
    "structure",
    "structure_prior",
    "tau1_sq",
    "tau2_sq",
    "trials",
    "w",
    "y",
];

const SECTIONS: &[&str] = &["simulate", "posterior", "rates", "experiment"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    global: BTreeMap<String, String>,
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ConfigFile::default();
        let mut section: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Parse { line: line_no, msg: format!("unterminated section header `{line}`") })?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(Error::Parse { line: line_no, msg: format!("unknown section `{name}`") });
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: line_no, msg: format!("expected `key = value`, got `{line}`") })?;
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Parse { line: line_no, msg: format!("unknown key `{key}`") });
            }
            let map = match &section {
                None => &mut cfg.global,
                Some(s) => cfg.sections.entry(s.clone()).or_default(),
            };
            if map.insert(key.clone(), value).is_some() {
                return Err(Error::Parse { line: line_no, msg: format!("duplicate key `{key}`") });
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Keys visible to `command`, before command-line overrides.
    pub fn resolve(&self, command: &str) -> BTreeMap<String, String> {
        let mut out = self.global.clone();
        if let Some(sec) = self.sections.get(command) {
            out.extend(sec.iter().map(|(k, v)| (k.clone(), v.clone())));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Exact,
    Laplace,
    Quadrature,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(Method::Exact),
            "laplace" => Ok(Method::Laplace),
            "quadrature" => Ok(Method::Quadrature),
            other => Err(Error::Config(format!("method must be exact, laplace or quadrature, got `{other}`"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Exact => "exact",
            Method::Laplace => "laplace",
            Method::Quadrature => "quadrature",
        })
    }
}

/// Fully resolved and validated settings for one command.
#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub structure: StructureId,
    pub theta: Params,
    pub y: f64,
    pub eta: Option<f64>,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub hyper: BgeHyper,
    pub structure_prior: StructurePrior,
    pub method: Method,
    pub data: Option<PathBuf>,
    pub eta_points: usize,
    pub sample_sizes: Vec<usize>,
    pub trials: usize,
    pub experiment: Option<String>,
    pub preset: Option<String>,
    pub out: PathBuf,
    /// The merged key/value view, echoed into output headers.
    pub raw: BTreeMap<String, String>,
}

fn parse_num<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse::<T>()
            .map(Some)
            .map_err(|_| Error::Config(format!("`{key}` has invalid value `{v}`"))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| Error::Config(format!("`{key}` has invalid entry `{s}`"))))
        .collect()
}

impl CliConfig {
    pub fn from_map(raw: BTreeMap<String, String>) -> Result<Self> {
        for k in raw.keys() {
            if !KNOWN_KEYS.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown key `{k}`")));
            }
        }
        let structure: StructureId = match raw.get("structure") {
            Some(v) => v.parse()?,
            None => StructureId::S1,
        };
        let default_w = if structure == StructureId::S3 { 0.0 } else { 1.0 };
        let w = parse_num(&raw, "w")?.unwrap_or(default_w);
        let theta = Params::new(w, parse_num(&raw, "tau1_sq")?.unwrap_or(1.0), parse_num(&raw, "tau2_sq")?.unwrap_or(1.0))
            .map_err(|e| Error::Config(format!("theta: {e}")))?;
        theta
            .validate_for(structure)
            .map_err(|e| Error::Config(format!("theta: {e}")))?;

        let y: f64 = parse_num(&raw, "y")?.unwrap_or(2.0);
        if !y.is_finite() {
            return Err(Error::Config(format!("`y` must be finite, got {y}")));
        }
        let eta: Option<f64> = parse_num(&raw, "eta")?;
        if let Some(e) = eta {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::Config(format!("`eta` must lie in (0, 1), got {e}")));
            }
        }

        let mut hyper = bge_symmetric_hyper(
            parse_num(&raw, "bge_alpha")?.unwrap_or(3.0),
            parse_num(&raw, "bge_beta")?.unwrap_or(0.5),
        )
        .map_err(|e| Error::Config(e.to_string()))?;
        for k in 0..6 {
            if let Some(a) = parse_num(&raw, &format!("alpha{}", k + 1))? {
                hyper.alpha[k] = a;
            }
        }
        if let Some(b) = parse_num(&raw, "beta")? {
            hyper.beta = b;
        }
        if let Some(l) = parse_num(&raw, "lambda")? {
            hyper.lambda = l;
        }
        let hyper = BgeHyper::new(hyper.alpha, hyper.beta, hyper.lambda).map_err(|e| Error::Config(e.to_string()))?;

        let structure_prior = match raw.get("structure_prior") {
            None => StructurePrior::default(),
            Some(v) => {
                let p: Vec<f64> = parse_list("structure_prior", v)?;
                if p.len() != 3 {
                    return Err(Error::Config("`structure_prior` needs three entries".into()));
                }
                StructurePrior::new([p[0], p[1], p[2]]).map_err(|e| Error::Config(e.to_string()))?
            }
        };

        let method = match raw.get("method") {
            Some(v) => v.parse()?,
            None => Method::Exact,
        };
        let eta_points: usize = parse_num(&raw, "eta_points")?.unwrap_or(99);
        if eta_points < 2 {
            return Err(Error::Config("`eta_points` must be at least 2".into()));
        }
        let sample_sizes = match raw.get("sample_sizes") {
            Some(v) => parse_list("sample_sizes", v)?,
            None => vec![50, 100, 200, 400, 800, 1600, 3200],
        };
        if sample_sizes.is_empty() || sample_sizes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("`sample_sizes` must be strictly increasing".into()));
        }
        let trials: usize = parse_num(&raw, "trials")?.unwrap_or(100);
        if trials == 0 {
            return Err(Error::Config("`trials` must be at least 1".into()));
        }

        Ok(Self {
            structure,
            theta,
            y,
            eta,
            n: parse_num(&raw, "n")?.unwrap_or(100),
            m: parse_num(&raw, "m")?.unwrap_or(0),
            seed: parse_num(&raw, "seed")?.unwrap_or(0),
            hyper,
            structure_prior,
            method,
            data: raw.get("data").map(PathBuf::from),
            eta_points,
            sample_sizes,
            trials,
            experiment: raw.get("experiment").cloned(),
            preset: raw.get("preset").cloned(),
            out: raw.get("out").map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".")),
            raw,
        })
    }

    /// Header lines describing the resolved configuration.
    pub fn header(&self, command: &str) -> Vec<String> {
        let mut lines = vec![format!("command = {command}")];
        lines.push(format!("structure = {}", self.structure));
        lines.push(format!("w = {}", self.theta.w));
        lines.push(format!("tau1_sq = {}", self.theta.tau1_sq));
        lines.push(format!("tau2_sq = {}", self.theta.tau2_sq));
        lines.push(format!("y = {}", self.y));
        lines.push(format!(
            "eta = {}",
            self.eta.map(|e| e.to_string()).unwrap_or_else(|| "none".into())
        ));
        lines.push(format!("n = {}", self.n));
        lines.push(format!("m = {}", self.m));
        lines.push(format!("seed = {}", self.seed));
        lines.extend(hyper_header(&self.hyper));
        lines.push(format!(
            "structure_prior = {},{},{}",
            self.structure_prior.p[0], self.structure_prior.p[1], self.structure_prior.p[2]
        ));
        lines.push(format!("method = {}", self.method));
        lines
    }
}

pub fn hyper_header(h: &BgeHyper) -> Vec<String> {
    let mut lines: Vec<String> = h
        .alpha
        .iter()
        .enumerate()
        .map(|(i, a)| format!("alpha{} = {a}", i + 1))
        .collect();
    lines.push(format!("beta = {}", h.beta));
    lines.push(format!("lambda = {}", h.lambda));
    lines
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_override_globals() {
        let text = "seed = 3\nn = 10 # trailing comment\n\n[simulate]\nn = 20\n[rates]\ny = 1.5\n";
        let f = ConfigFile::parse(text).unwrap();
        let sim = CliConfig::from_map(f.resolve("simulate")).unwrap();
        assert_eq!((sim.seed, sim.n), (3, 20));
        let rates = CliConfig::from_map(f.resolve("rates")).unwrap();
        assert_eq!((rates.n, rates.y), (10, 1.5));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let e = ConfigFile::parse("seed = 1\nbogus line\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = ConfigFile::parse("seed = 1\n\nfoo = 2\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }));
        let e = ConfigFile::parse("[nope]\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
        let e = ConfigFile::parse("n = 1\nn = 2\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn field_level_validation() {
        let mut m = BTreeMap::new();
        m.insert("tau1_sq".to_string(), "-1".to_string());
        let e = CliConfig::from_map(m).unwrap_err();
        assert!(e.to_string().contains("theta"));
        let mut m = BTreeMap::new();
        m.insert("structure".to_string(), "S3".to_string());
        m.insert("w".to_string(), "0.5".to_string());
        assert!(CliConfig::from_map(m).is_err());
        let mut m = BTreeMap::new();
        m.insert("eta".to_string(), "1.5".to_string());
        assert!(CliConfig::from_map(m).is_err());
        let mut m = BTreeMap::new();
        m.insert("method".to_string(), "magic".to_string());
        assert!(CliConfig::from_map(m).is_err());
    }

    #[test]
    fn hyperparameter_keys() {
        let f = ConfigFile::parse("bge_alpha = 2\nbge_beta = 1\nalpha5 = 7\n").unwrap();
        let c = CliConfig::from_map(f.resolve("posterior")).unwrap();
        assert_eq!(c.hyper.alpha, [2.0, 1.5, 1.5, 2.0, 7.0, 2.0]);
        assert_eq!((c.hyper.beta, c.hyper.lambda), (1.0, 0.5));
        let f = ConfigFile::parse("structure_prior = 2, 1, 1\n").unwrap();
        let c = CliConfig::from_map(f.resolve("posterior")).unwrap();
        assert!((c.structure_prior.p[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn s3_defaults_to_zero_weight() {
        let f = ConfigFile::parse("structure = S3\n").unwrap();
        let c = CliConfig::from_map(f.resolve("simulate")).unwrap();
        assert_eq!(c.theta.w, 0.0);
    }
}
