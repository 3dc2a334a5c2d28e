//! Flat `key=value` experiment configuration.
//!
//! One dotted key per line, `#` starts a comment. Every key has a default;
//! command-line `--key=value` flags override the file. Sweep axes are given
//! as `sweep.<key>=v1,v2,...` over any scalar key.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use hvrbf::geometry::{generate_nodes, Domain, NodeSet};
use hvrbf::spectral::{SpectralConfig, SpectralMethod};
use hvrbf::timestepping::{CMode, SchemeConfig, StepperConfig};
use hvrbf::tuner::{TunerConfig, Unconverged};

/// Known keys and their defaults, in canonical order.
const KEYS: &[(&str, &str)] = &[
    ("problem", "advection"),
    ("h", "0.01"),
    ("dt", "0.0001"),
    ("T", "1"),
    ("alpha", "2"),
    ("beta", "1,0"),
    ("k_advection", "3"),
    ("m_advection", "2"),
    ("n_advection", "12"),
    ("k_hyp", "auto"),
    ("m_hyp", "2"),
    ("n_hyp", "30"),
    ("c_mode", "adaptive"),
    ("c", "0"),
    ("chi", "10"),
    ("Re", "1000"),
    ("seed", "1"),
    ("R", "0.1"),
    ("snapshot_times", ""),
    ("tuner.c_init", "0.3"),
    ("tuner.sweep_factor", "10"),
    ("tuner.max_sweep", "8"),
    ("tuner.bisect_tol", "0.05"),
    ("tuner.max_bisect", "64"),
    ("tuner.num_eigs", "40"),
    ("tuner.unconverged", "best-estimate"),
    ("spectral.method", "auto"),
    ("spectral.ncv", "81"),
    ("spectral.max_restarts", "300"),
    ("spectral.tol", "1e-8"),
    ("spectral.seed", "24301"),
    ("spectral.dense_max", "1000"),
    ("spectrum.c", "0"),
    ("spectrum.k", ""),
    ("spectrum.scale", "h"),
    ("fit.axis", "auto"),
    ("fit.start", "0"),
    ("fit.len", "all"),
];

/// Keys holding lists; they cannot be sweep axes.
const LIST_KEYS: &[&str] = &["beta", "snapshot_times", "spectrum.c", "spectrum.k"];

fn is_sweepable(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
        && !LIST_KEYS.contains(&key)
        && !key.starts_with("spectrum.")
        && !key.starts_with("fit.")
}

/// Where a value came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Default,
    Line(usize),
    Flag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub source: String,
    pub origin: Origin,
    pub key: Option<String>,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.origin, &self.key) {
            (Origin::Line(l), _) => write!(f, "{}:{}: {}", self.source, l, self.msg),
            (Origin::Flag, Some(k)) => write!(f, "--{}: {}", k, self.msg),
            (_, Some(k)) => write!(f, "{}: {}", k, self.msg),
            _ => write!(f, "{}", self.msg),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    origin: Origin,
    order: usize,
}

/// Unresolved configuration: raw strings with their origins.
#[derive(Debug, Clone)]
pub struct RawConfig {
    source: String,
    entries: BTreeMap<String, Entry>,
    next: usize,
}

impl Default for RawConfig {
    fn default() -> Self {
        RawConfig::new("<defaults>")
    }
}

impl RawConfig {
    pub fn new(source: &str) -> Self {
        RawConfig {
            source: source.to_string(),
            entries: BTreeMap::new(),
            next: 0,
        }
    }

    pub fn parse(text: &str, source: &str) -> Result<Self, ConfigError> {
        let mut cfg = RawConfig::new(source);
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                return Err(cfg.error(
                    Origin::Line(line),
                    None,
                    format!("expected key=value, got `{content}`"),
                ));
            };
            let key = k.trim();
            if let Some(prev) = cfg.entries.get(key) {
                if let Origin::Line(p) = prev.origin {
                    return Err(cfg.error(
                        Origin::Line(line),
                        Some(key),
                        format!("duplicate key `{key}` (first set at line {p})"),
                    ));
                }
            }
            cfg.insert(key, v.trim(), Origin::Line(line))?;
        }
        Ok(cfg)
    }

    /// Applies one `--key=value` flag.
    pub fn apply_flag(&mut self, flag: &str) -> Result<(), ConfigError> {
        let body = flag.strip_prefix("--").ok_or_else(|| {
            self.error(
                Origin::Flag,
                None,
                format!("override `{flag}` must look like --key=value"),
            )
        })?;
        let Some((k, v)) = body.split_once('=') else {
            return Err(self.error(
                Origin::Flag,
                Some(body),
                format!("override `{flag}` has no value"),
            ));
        };
        self.insert(k.trim(), v.trim(), Origin::Flag)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        self.insert(key, value, Origin::Flag)
    }

    fn insert(&mut self, key: &str, value: &str, origin: Origin) -> Result<(), ConfigError> {
        let known = KEYS.iter().any(|(k, _)| *k == key)
            || key.strip_prefix("sweep.").is_some_and(is_sweepable);
        if !known {
            let msg = match key.strip_prefix("sweep.") {
                Some(axis) => format!("`{axis}` cannot be a sweep axis"),
                None => format!("unknown key `{key}`"),
            };
            return Err(self.error(origin, Some(key), msg));
        }
        let order = self.next;
        self.next += 1;
        self.entries.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                origin,
                order,
            },
        );
        Ok(())
    }

    fn error(&self, origin: Origin, key: Option<&str>, msg: String) -> ConfigError {
        ConfigError {
            source: self.source.clone(),
            origin,
            key: key.map(str::to_string),
            msg,
        }
    }

    fn lookup(&self, key: &str) -> (String, Origin) {
        match self.entries.get(key) {
            Some(e) => (e.value.clone(), e.origin.clone()),
            None => (
                KEYS.iter()
                    .find(|(k, _)| *k == key)
                    .map(|(_, d)| d.to_string())
                    .unwrap_or_default(),
                Origin::Default,
            ),
        }
    }

    /// Sweep axes in the order they were given.
    fn axes(&self) -> Vec<(String, String, Origin)> {
        let mut a: Vec<_> = self
            .entries
            .iter()
            .filter_map(|(k, e)| {
                k.strip_prefix("sweep.")
                    .map(|axis| (e.order, axis.to_string(), e.value.clone(), e.origin.clone()))
            })
            .collect();
        a.sort_by_key(|x| x.0);
        a.into_iter().map(|(_, k, v, o)| (k, v, o)).collect()
    }

    /// Every key with its effective value, canonical order, sweep axes last.
    pub fn canonical(&self) -> String {
        let mut parts: Vec<String> = KEYS
            .iter()
            .map(|(k, _)| format!("{k}={}", self.lookup(k).0))
            .collect();
        for (axis, v, _) in self.axes() {
            parts.push(format!("sweep.{axis}={v}"));
        }
        parts.join(" ")
    }

    /// Header comment carried by every output file.
    pub fn header(&self) -> String {
        format!("# config {}", self.canonical())
    }

    pub fn resolve(&self) -> Result<Experiment, ConfigError> {
        Resolver { raw: self }.resolve()
    }

    /// One configuration per point of the Cartesian product of the sweep
    /// axes, first axis outermost, each with its axis values.
    pub fn grid(&self) -> Result<Vec<(Vec<String>, RawConfig)>, ConfigError> {
        let axes = self.axes();
        let mut lists = Vec::new();
        for (axis, v, origin) in &axes {
            let vals: Vec<String> = v
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            if vals.is_empty() {
                return Err(self.error(
                    origin.clone(),
                    Some(&format!("sweep.{axis}")),
                    "sweep axis has no values".into(),
                ));
            }
            lists.push(vals);
        }
        let mut points: Vec<Vec<String>> = vec![Vec::new()];
        for vals in &lists {
            points = points
                .into_iter()
                .flat_map(|p| {
                    vals.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push(v.clone());
                        q
                    })
                })
                .collect();
        }
        let mut out = Vec::with_capacity(points.len());
        for p in points {
            let mut raw = self.clone();
            raw.entries.retain(|k, _| !k.starts_with("sweep."));
            for ((axis, _, origin), v) in axes.iter().zip(&p) {
                let order = raw.next;
                raw.next += 1;
                raw.entries.insert(
                    axis.clone(),
                    Entry {
                        value: v.clone(),
                        origin: origin.clone(),
                        order,
                    },
                );
            }
            raw.resolve()?;
            out.push((p, raw));
        }
        Ok(out)
    }

    pub fn axis_names(&self) -> Vec<String> {
        self.axes().into_iter().map(|(k, _, _)| k).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    Advection,
    Burgers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CModeKind {
    Fixed,
    Adaptive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumCases {
    pub c: Vec<f64>,
    /// PHS orders of the transport operator; the configured one when empty.
    pub k: Vec<u32>,
    /// Eigenvalue scale; `h` when unset.
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitWindow {
    /// Axis the order is fitted along; `h` or `dt` when unset and present.
    pub axis: Option<String>,
    pub start: usize,
    pub len: Option<usize>,
}

/// Fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub problem: Problem,
    pub h: f64,
    pub dt: f64,
    pub t_final: f64,
    pub alpha: u32,
    pub beta: [f64; 2],
    pub scheme: SchemeConfig,
    pub c_mode: CModeKind,
    pub c: f64,
    pub chi: usize,
    pub re: f64,
    pub seed: u64,
    pub bump_radius: f64,
    pub snapshot_times: Vec<f64>,
    pub tuner: TunerConfig,
    pub spectral: SpectralConfig,
    pub spectrum: SpectrumCases,
    pub fit: FitWindow,
    pub header: String,
}

impl Experiment {
    pub fn domain(&self) -> Domain {
        match self.problem {
            Problem::Advection => Domain::Torus,
            Problem::Burgers => Domain::Square,
        }
    }

    pub fn nodes(&self) -> hvrbf::Result<NodeSet> {
        generate_nodes(self.h, self.domain(), self.seed)
    }

    pub fn stepper(&self) -> StepperConfig {
        let c_mode = match self.c_mode {
            CModeKind::Fixed => CMode::Fixed(self.c),
            CModeKind::Adaptive => CMode::Adaptive {
                tuner: self.tuner,
                chi: self.chi,
            },
        };
        StepperConfig {
            snapshot_times: self.snapshot_times.clone(),
            spectral: self.spectral,
            scheme: self.scheme,
            bump_radius: self.bump_radius,
            ..StepperConfig::new(self.dt, self.t_final, self.alpha, c_mode)
        }
    }
}

struct Resolver<'a> {
    raw: &'a RawConfig,
}

impl Resolver<'_> {
    fn fail(&self, key: &str, msg: String) -> ConfigError {
        let (_, origin) = self.raw.lookup(key);
        self.raw.error(origin, Some(key), msg)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        let (v, _) = self.raw.lookup(key);
        v.parse()
            .map_err(|_| self.fail(key, format!("invalid value `{v}` for {key}")))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, ConfigError> {
        let (v, _) = self.raw.lookup(key);
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| self.fail(key, format!("invalid list item `{s}` for {key}")))
            })
            .collect()
    }

    fn positive(&self, key: &str) -> Result<f64, ConfigError> {
        let v: f64 = self.get(key)?;
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(self.fail(key, format!("{key} must be positive, got {v}")))
        }
    }

    fn count<T: FromStr + PartialOrd + Default + fmt::Display>(
        &self,
        key: &str,
    ) -> Result<T, ConfigError> {
        let v: T = self.get(key)?;
        if v > T::default() {
            Ok(v)
        } else {
            Err(self.fail(key, format!("{key} must be at least 1, got {v}")))
        }
    }

    fn resolve(&self) -> Result<Experiment, ConfigError> {
        let problem = match self.raw.lookup("problem").0.as_str() {
            "advection" => Problem::Advection,
            "burgers" => Problem::Burgers,
            other => {
                return Err(self.fail(
                    "problem",
                    format!("problem must be advection or burgers, got `{other}`"),
                ))
            }
        };
        let h = self.positive("h")?;
        let dt = self.positive("dt")?;
        let t_final = self.positive("T")?;
        if t_final < dt * (1.0 - 1e-9) {
            return Err(self.fail("T", format!("T = {t_final} is shorter than dt = {dt}")));
        }
        let alpha: u32 = self.count("alpha")?;
        let beta: Vec<f64> = self.list("beta")?;
        let beta: [f64; 2] = beta
            .try_into()
            .map_err(|_| self.fail("beta", "beta needs two components".into()))?;

        let odd = |key: &str, k: u32| {
            if k % 2 == 1 {
                Ok(k)
            } else {
                Err(self.fail(key, format!("{key} must be an odd PHS order, got {k}")))
            }
        };
        let k_adv = odd("k_advection", self.count("k_advection")?)?;
        let k_hyp = match self.raw.lookup("k_hyp").0.as_str() {
            "auto" => None,
            _ => Some(odd("k_hyp", self.count("k_hyp")?)?),
        };
        let scheme = SchemeConfig {
            k_adv,
            m_adv: self.get("m_advection")?,
            n_adv: self.count("n_advection")?,
            k_hyp,
            m_hyp: self.get("m_hyp")?,
            n_hyp: self.count("n_hyp")?,
        };
        let c_mode = match self.raw.lookup("c_mode").0.as_str() {
            "fixed" => CModeKind::Fixed,
            "adaptive" => CModeKind::Adaptive,
            other => {
                return Err(self.fail(
                    "c_mode",
                    format!("c_mode must be fixed or adaptive, got `{other}`"),
                ))
            }
        };
        let c: f64 = self.get("c")?;
        if !(c >= 0.0 && c.is_finite()) {
            return Err(self.fail("c", format!("c must be non-negative, got {c}")));
        }
        if c_mode == CModeKind::Adaptive && self.raw.lookup("c").1 != Origin::Default {
            log::warn!("c = {c} is ignored with c_mode=adaptive");
        }
        let snapshot_times: Vec<f64> = self.list("snapshot_times")?;
        if let Some(t) = snapshot_times.iter().find(|t| !(**t >= 0.0)) {
            return Err(self.fail("snapshot_times", format!("negative snapshot time {t}")));
        }

        let unconverged = match self.raw.lookup("tuner.unconverged").0.as_str() {
            "best-estimate" => Unconverged::BestEstimate,
            "unstable" => Unconverged::Unstable,
            other => {
                return Err(self.fail(
                    "tuner.unconverged",
                    format!("expected best-estimate or unstable, got `{other}`"),
                ))
            }
        };
        let tuner = TunerConfig {
            c_init: self.positive("tuner.c_init")?,
            sweep_factor: self.get("tuner.sweep_factor")?,
            max_sweep: self.count("tuner.max_sweep")?,
            bisect_tol: self.get("tuner.bisect_tol")?,
            max_bisect: self.count("tuner.max_bisect")?,
            num_eigs: self.count("tuner.num_eigs")?,
            unconverged,
        };
        if !(tuner.sweep_factor > 1.0) {
            return Err(self.fail("tuner.sweep_factor", "sweep factor must exceed 1".into()));
        }
        if !(tuner.bisect_tol > 0.0 && tuner.bisect_tol < 1.0) {
            return Err(self.fail("tuner.bisect_tol", "bisect_tol must lie in (0, 1)".into()));
        }
        let method = match self.raw.lookup("spectral.method").0.as_str() {
            "auto" => SpectralMethod::Auto,
            "arnoldi" => SpectralMethod::Arnoldi,
            "dense" => SpectralMethod::Dense,
            other => {
                return Err(self.fail(
                    "spectral.method",
                    format!("expected auto, arnoldi or dense, got `{other}`"),
                ))
            }
        };
        let spectral = SpectralConfig {
            num_eigs: tuner.num_eigs,
            ncv: self.count("spectral.ncv")?,
            max_restarts: self.count("spectral.max_restarts")?,
            tol: self.positive("spectral.tol")?,
            seed: self.get("spectral.seed")?,
            method,
            dense_max: self.get("spectral.dense_max")?,
            early_exit_above: None,
        };
        if spectral.ncv <= spectral.num_eigs {
            return Err(self.fail(
                "spectral.ncv",
                format!(
                    "subspace {} must exceed tuner.num_eigs = {}",
                    spectral.ncv, spectral.num_eigs
                ),
            ));
        }

        let spectrum = SpectrumCases {
            c: self.list("spectrum.c")?,
            k: self.list("spectrum.k")?,
            scale: match self.raw.lookup("spectrum.scale").0.as_str() {
                "h" => None,
                _ => Some(self.positive("spectrum.scale")?),
            },
        };
        if let Some(c) = spectrum.c.iter().find(|c| !(**c >= 0.0)) {
            return Err(self.fail("spectrum.c", format!("negative c {c}")));
        }
        if let Some(k) = spectrum.k.iter().find(|k| *k % 2 == 0) {
            return Err(self.fail("spectrum.k", format!("{k} is not an odd PHS order")));
        }
        let axis = match self.raw.lookup("fit.axis").0.as_str() {
            "auto" => None,
            a => {
                if !self.raw.axis_names().iter().any(|x| x == a) {
                    return Err(self.fail("fit.axis", format!("`{a}` is not a sweep axis")));
                }
                Some(a.to_string())
            }
        };
        let fit = FitWindow {
            axis,
            start: self.get("fit.start")?,
            len: match self.raw.lookup("fit.len").0.as_str() {
                "all" => None,
                _ => Some(self.count("fit.len")?),
            },
        };

        Ok(Experiment {
            problem,
            h,
            dt,
            t_final,
            alpha,
            beta,
            scheme,
            c_mode,
            c,
            chi: self.count("chi")?,
            re: self.positive("Re")?,
            seed: self.get("seed")?,
            bump_radius: match self.positive("R")? {
                r if r <= 0.5 => r,
                r => return Err(self.fail("R", format!("bump radius {r} exceeds 0.5"))),
            },
            snapshot_times,
            tuner,
            spectral,
            spectrum,
            fit,
            header: self.raw.header(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let e = RawConfig::default().resolve().unwrap();
        assert_eq!(e.problem, Problem::Advection);
        assert_eq!((e.h, e.dt, e.alpha), (0.01, 1e-4, 2));
        assert_eq!(e.beta, [1.0, 0.0]);
        assert_eq!(e.c_mode, CModeKind::Adaptive);
        assert_eq!(e.tuner, TunerConfig::default());
        assert_eq!(e.spectral, SpectralConfig::default());
        assert_eq!(e.scheme, SchemeConfig::default());
    }

    #[test]
    fn file_and_flags() {
        let text = "# experiment\nproblem = burgers\n\nh=0.05 # coarse\nRe=100\n";
        let mut raw = RawConfig::parse(text, "exp.cfg").unwrap();
        raw.apply_flag("--h=0.04").unwrap();
        let e = raw.resolve().unwrap();
        assert_eq!(e.problem, Problem::Burgers);
        assert_eq!(e.h, 0.04);
        assert_eq!(e.re, 100.0);
        assert!(e.header.starts_with("# config problem=burgers h=0.04 "));
    }

    #[test]
    fn errors_name_their_line() {
        let e = RawConfig::parse("h=0.02\nbogus=1\n", "a.cfg").unwrap_err();
        assert_eq!(e.to_string(), "a.cfg:2: unknown key `bogus`");
        let e = RawConfig::parse("h=0.02\nh=0.03\n", "a.cfg").unwrap_err();
        assert!(e.to_string().starts_with("a.cfg:2: duplicate key"));
        let e = RawConfig::parse("problem=advection\nno equals sign\n", "a.cfg").unwrap_err();
        assert!(e.to_string().starts_with("a.cfg:2:"));
        let raw = RawConfig::parse("T=1\n\ndt=-1\n", "a.cfg").unwrap();
        let e = raw.resolve().unwrap_err();
        assert_eq!(e.origin, Origin::Line(3));
        assert!(e.to_string().starts_with("a.cfg:3: dt must be positive"));
        let mut raw = RawConfig::default();
        raw.apply_flag("--alpha=two").unwrap();
        assert!(raw
            .resolve()
            .unwrap_err()
            .to_string()
            .starts_with("--alpha: "));
        assert!(raw.apply_flag("alpha=2").is_err());
        assert!(RawConfig::parse("sweep.beta=1\n", "a.cfg").is_err());
    }

    #[test]
    fn grid_is_cartesian_in_given_order() {
        let raw = RawConfig::parse("sweep.m_advection=2,4\nsweep.h=0.04,0.02,0.01\n", "s").unwrap();
        assert_eq!(raw.axis_names(), vec!["m_advection", "h"]);
        let g = raw.grid().unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g[0].0, vec!["2", "0.04"]);
        assert_eq!(g[1].0, vec!["2", "0.02"]);
        assert_eq!(g[3].0, vec!["4", "0.04"]);
        let e = g[4].1.resolve().unwrap();
        assert_eq!((e.scheme.m_adv, e.h), (4, 0.02));
    }

    #[test]
    fn invalid_grid_point_is_a_config_error() {
        let raw = RawConfig::parse("\nsweep.h=0.02,-1\n", "s").unwrap();
        let e = raw.grid().unwrap_err();
        assert_eq!(e.origin, Origin::Line(2));
    }

    #[test]
    fn canonical_form_is_order_independent() {
        let a = RawConfig::parse("h=0.02\ndt=0.001\n", "a").unwrap();
        let b = RawConfig::parse("dt=0.001\nh=0.02\n", "b").unwrap();
        assert_eq!(a.header(), b.header());
        assert!(!a.header().contains('\n'));
    }

    #[test]
    fn stepper_follows_mode() {
        let mut raw = RawConfig::default();
        raw.set("c_mode", "fixed").unwrap();
        raw.set("c", "0.5").unwrap();
        let s = raw.resolve().unwrap().stepper();
        assert_eq!(s.c_mode, CMode::Fixed(0.5));
        raw.set("c_mode", "adaptive").unwrap();
        raw.set("chi", "5").unwrap();
        match raw.resolve().unwrap().stepper().c_mode {
            CMode::Adaptive { chi, .. } => assert_eq!(chi, 5),
            m => panic!("{m:?}"),
        }
    }
}
