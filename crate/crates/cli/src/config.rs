//! Run configuration: presets, `key=value` files and flag overrides.

use std::fmt::Display;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use nullctl_core::experiments::{EpsRule, InitialData, Scenario, SigmaRule};
use nullctl_core::solvers::{fmt_num, stable_time_steps, SystemParams};
use nullctl_core::Grid1D;

pub const OUT_DIR_ENV: &str = "NULLCTL_OUT_DIR";

pub const PRESETS: [&str; 8] = ["fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8"];

/// Every key accepted in a config file; each one is also a `--key` flag.
pub const KEYS: [&str; 23] = [
    "a",
    "b",
    "c",
    "d",
    "tau",
    "sigma",
    "horizon",
    "omega",
    "u0",
    "v0",
    "n",
    "m",
    "eps",
    "rel-tol",
    "max-iter",
    "n-list",
    "tau-list",
    "sigma-rule",
    "jobs",
    "stride",
    "svg",
    "out",
    "preset",
];

/// Time steps: a fixed count or the smallest count meeting the stability rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Steps {
    Fixed(usize),
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub params: SystemParams,
    pub horizon: f64,
    pub u0: InitialData,
    pub v0: InitialData,
    pub n: usize,
    pub m: Steps,
    pub eps: EpsRule,
    pub rel_tol: f64,
    pub max_iter: usize,
    pub n_list: Vec<usize>,
    pub tau_list: Vec<f64>,
    pub sigma_rule: SigmaRule,
    pub jobs: usize,
    pub stride: usize,
    pub svg: bool,
    pub out: PathBuf,
}

impl Default for RunConfig {
    /// The reference scenario with `d = -9/2` on `N = 100`, `M = 500`.
    fn default() -> Self {
        let s = Scenario::reference(-4.5);
        Self {
            preset: None,
            params: s.params,
            horizon: s.horizon,
            u0: s.u0,
            v0: s.v0,
            n: 100,
            m: Steps::Fixed(500),
            eps: EpsRule::H4,
            rel_tol: 1e-8,
            max_iter: 500,
            n_list: vec![20, 40, 80, 160],
            tau_list: vec![0.5, 0.25, 0.12, 0.06, 0.03],
            sigma_rule: SigmaRule::TwoOverTau,
            jobs: 1,
            stride: 1,
            svg: false,
            out: std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".")),
        }
    }
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let mut cfg = Self {
            preset: Some(name.to_string()),
            ..Self::default()
        };
        let p = &mut cfg.params;
        match name {
            "fig1" | "fig3" => p.d = -4.5,
            "fig2" | "fig4" => p.d = 5.0,
            "fig5" => {
                p.d = -5.0;
                cfg.n = 20;
                cfg.m = Steps::Fixed(100);
                cfg.max_iter = 5000;
            }
            "fig6" => {
                p.d = -5.0;
                cfg.n = 400;
                cfg.m = Steps::Fixed(2000);
                cfg.max_iter = 5000;
                cfg.sigma_rule = SigmaRule::TwoOverTau;
                cfg.tau_list = vec![0.5, 0.25, 0.12, 0.06, 0.03];
                (p.tau, p.sigma) = (0.5, 4.0);
            }
            "fig7" => {
                p.d = 4.5;
                cfg.n = 24;
                cfg.m = Steps::Fixed(200);
                cfg.max_iter = 2000;
                cfg.sigma_rule = SigmaRule::TwoOverTau;
                cfg.tau_list = vec![0.5, 0.25, 0.12, 0.08, 0.06, 0.04];
                (p.tau, p.sigma) = (0.5, 4.0);
            }
            "fig8" => {
                let s = Scenario::mean_relaxation();
                *p = s.params;
                (p.tau, p.sigma) = (0.2, 5.0);
                cfg.n = 100;
                cfg.m = Steps::Fixed(2000);
                cfg.sigma_rule = SigmaRule::OneOverTau;
                cfg.tau_list = vec![0.2, 0.1, 0.05, 0.025, 0.0125];
            }
            other => bail!("unknown preset `{other}` (expected one of {})", PRESETS.join(", ")),
        }
        Ok(cfg)
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let ctx = || format!("invalid value `{value}` for `{key}`");
        let p = &mut self.params;
        match key {
            "a" => p.a = num(value).with_context(ctx)?,
            "b" => p.b = num(value).with_context(ctx)?,
            "c" => p.c = num(value).with_context(ctx)?,
            "d" => p.d = num(value).with_context(ctx)?,
            "tau" => p.tau = num(value).with_context(ctx)?,
            "sigma" => p.sigma = num(value).with_context(ctx)?,
            "horizon" => self.horizon = num(value).with_context(ctx)?,
            "omega" => {
                let v = list::<f64>(value).with_context(ctx)?;
                match v.as_slice() {
                    [lo, hi] => p.omega = (*lo, *hi),
                    _ => return Err(anyhow!("expected two comma-separated numbers")).with_context(ctx),
                }
            }
            "u0" => self.u0 = value.parse().with_context(ctx)?,
            "v0" => self.v0 = value.parse().with_context(ctx)?,
            "n" => self.n = num(value).with_context(ctx)?,
            "m" => {
                self.m = if value == "auto" {
                    Steps::Auto
                } else {
                    Steps::Fixed(num(value).with_context(ctx)?)
                }
            }
            "eps" => self.eps = value.parse().with_context(ctx)?,
            "rel-tol" => self.rel_tol = num(value).with_context(ctx)?,
            "max-iter" => self.max_iter = num(value).with_context(ctx)?,
            "n-list" => self.n_list = list(value).with_context(ctx)?,
            "tau-list" => self.tau_list = list(value).with_context(ctx)?,
            "sigma-rule" => self.sigma_rule = value.parse().with_context(ctx)?,
            "jobs" => self.jobs = num(value).with_context(ctx)?,
            "stride" => self.stride = num(value).with_context(ctx)?,
            "svg" => self.svg = num(value).with_context(ctx)?,
            "out" => self.out = PathBuf::from(value),
            "preset" => {
                if self.preset.as_deref() != Some(value) {
                    bail!("`preset` must be resolved before other keys");
                }
            }
            other => bail!("unknown key `{other}`"),
        }
        Ok(())
    }

    /// Builds a config from a preset, then file pairs, then flag pairs.
    pub fn resolve(flag_preset: Option<&str>, file: Option<&Path>, flags: &[(&str, String)]) -> Result<Self> {
        let file_pairs = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
                parse_pairs(&text).with_context(|| format!("in {}", path.display()))?
            }
            None => Vec::new(),
        };
        let file_preset = file_pairs.iter().find(|(k, _)| k == "preset").map(|(_, v)| v.as_str());
        let mut cfg = match flag_preset.or(file_preset) {
            Some(name) => Self::preset(name)?,
            None => Self::default(),
        };
        for (k, v) in &file_pairs {
            if k != "preset" {
                cfg.set(k, v)?;
            }
        }
        for (k, v) in flags {
            cfg.set(k, v).with_context(|| format!("--{k}"))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            bail!("horizon must be positive, got {}", self.horizon);
        }
        if self.n == 0 {
            bail!("n must be at least 1");
        }
        if self.m == Steps::Fixed(0) {
            bail!("m must be at least 1");
        }
        if !(self.rel_tol > 0.0) || self.max_iter == 0 {
            bail!("rel-tol must be positive and max-iter at least 1");
        }
        if self.jobs == 0 || self.stride == 0 {
            bail!("jobs and stride must be at least 1");
        }
        Ok(())
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            label: self.preset.clone().unwrap_or_else(|| "custom".into()),
            params: self.params,
            u0: self.u0,
            v0: self.v0,
            horizon: self.horizon,
        }
    }

    /// Time steps for the configured `N` and coefficients.
    pub fn steps(&self) -> nullctl_core::Result<usize> {
        Ok(match self.m {
            Steps::Fixed(m) => m,
            Steps::Auto => stable_time_steps(&self.params, &Grid1D::new(self.n)?, self.horizon),
        })
    }

    /// Fully resolved `key=value` lines, readable back with `--config`.
    pub fn dump(&self) -> String {
        let p = &self.params;
        let join = |v: &[String]| v.join(",");
        let pairs: Vec<(&str, String)> = vec![
            ("a", fmt_num(p.a)),
            ("b", fmt_num(p.b)),
            ("c", fmt_num(p.c)),
            ("d", fmt_num(p.d)),
            ("tau", fmt_num(p.tau)),
            ("sigma", fmt_num(p.sigma)),
            ("horizon", fmt_num(self.horizon)),
            ("omega", format!("{},{}", fmt_num(p.omega.0), fmt_num(p.omega.1))),
            ("u0", self.u0.to_string()),
            ("v0", self.v0.to_string()),
            ("n", self.n.to_string()),
            (
                "m",
                match self.m {
                    Steps::Fixed(m) => m.to_string(),
                    Steps::Auto => "auto".into(),
                },
            ),
            ("eps", self.eps.to_string()),
            ("rel-tol", fmt_num(self.rel_tol)),
            ("max-iter", self.max_iter.to_string()),
            ("n-list", join(&strings(&self.n_list))),
            ("tau-list", self.tau_list.iter().map(|&t| fmt_num(t)).collect::<Vec<_>>().join(",")),
            ("sigma-rule", self.sigma_rule.to_string()),
            ("jobs", self.jobs.to_string()),
            ("stride", self.stride.to_string()),
            ("svg", self.svg.to_string()),
            ("out", self.out.display().to_string()),
        ];
        let mut text = String::new();
        if let Some(name) = &self.preset {
            text.push_str(&format!("# resolved from preset {name}\n"));
        }
        for (k, v) in pairs {
            text.push_str(&format!("{k}={v}\n"));
        }
        text
    }
}

fn strings<T: Display>(v: &[T]) -> Vec<String> {
    v.iter().map(|x| x.to_string()).collect()
}

fn num<T: std::str::FromStr>(s: &str) -> Result<T>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    Ok(s.trim().parse::<T>()?)
}

fn list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    s.split(',').map(num).collect()
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key=value, got `{line}`", lineno + 1))?;
        let k = k.trim();
        if !KEYS.contains(&k) {
            bail!("line {}: unknown key `{k}`", lineno + 1);
        }
        pairs.push((k.to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}
