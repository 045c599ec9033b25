//! Flat `key = value` run configuration.
//!
//! A config file holds one `key = value` pair per line; `#` starts a
//! comment. Every key can also be given as a command-line flag with dashes
//! (`gamma_db` becomes `--gamma-db`); flags override the file. The
//! `preset` key is applied before all others regardless of where it
//! appears. [`RunConfig::echo`] writes a file that reproduces the run.

use std::fmt::Write as _;

use crate::content::CommonContent;
use crate::error::{Error, Result};
use crate::experiments::{CachePolicy, Mode, Scenario, SweepSpec};
use crate::netgen::{parse_positions, Fading, Position};
use crate::optimizer::{DcConfig, ThetaRule};

/// Recognized keys with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("preset", "scenario preset applied before other keys: full or desk"),
    ("num_bs", "number of base stations L"),
    ("antennas_per_bs", "antennas per BS N_t"),
    ("radius_km", "radius of the network disk in km"),
    ("spacing_km", "distance between adjacent BSs in km"),
    ("bs_positions", "explicit BS positions `x y; x y; ...` in km, or `none`"),
    ("total_users", "users dropped in the network"),
    ("users_per_interval", "users scheduled per interval K"),
    ("num_contents", "catalog size F"),
    ("zipf_skew", "Zipf popularity exponent"),
    ("common_fraction", "fraction of scheduled users sharing one content"),
    ("common_content", "shared content choice: popularity or most-popular"),
    ("gamma_db", "SINR target in dB"),
    ("power_budget_w", "peak transmit power per BS in watts"),
    ("antenna_gain_dbi", "antenna gain in dBi"),
    ("noise_psd_dbm_hz", "noise power spectral density in dBm/Hz"),
    ("bandwidth_hz", "system bandwidth in Hz"),
    ("shadowing_std_db", "log-normal shadowing deviation in dB"),
    ("fading", "small-scale fading: rayleigh or unit"),
    ("eta", "comma-separated power weights"),
    ("cache_sizes", "comma-separated contents cached per BS"),
    ("policy", "comma-separated cache policies: popularity, random, none"),
    ("mode", "comma-separated transmission modes: multicast, unicast"),
    ("intervals", "scheduling intervals per sweep cell"),
    ("interval", "interval index used by run and dump-problem"),
    ("seed", "base seed of every random stream"),
    ("smooth", "surrogate kind: log, exp or atan"),
    ("eps", "smoothing floor"),
    ("rho", "convergence threshold on the objective decrease"),
    ("max_iters", "iteration cap of the reweighted loop"),
    ("theta", "smoothness rule: gradient-max or a fixed positive number"),
    ("normalize", "scale exp/atan weights by e/pi: true or false"),
    ("rank_tol", "eigenvalue ratio below which a matrix counts as rank one"),
    ("cluster_threshold", "block power in watts above which a BS serves a group"),
    ("randomizations", "Gaussian randomization trials"),
    ("refine", "also recover from the minimum-power point on the found clusters: true or false"),
    ("solver_tol", "interior-point tolerance"),
    ("verbose", "progress messages on stderr: true or false"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Full,
    Desk,
}

impl Preset {
    fn name(self) -> &'static str {
        match self {
            Preset::Full => "full",
            Preset::Desk => "desk",
        }
    }
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    /// Scenario, grid and optimizer settings. `policy` and `mode` hold the
    /// first entries of the lists below.
    pub spec: SweepSpec,
    pub policies: Vec<CachePolicy>,
    pub modes: Vec<Mode>,
    pub interval: u64,
    pub verbose: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::with_preset(Preset::Full)
    }
}

fn parse_list<T>(key: &str, value: &str, f: impl Fn(&str) -> std::result::Result<T, String>) -> Result<Vec<T>> {
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| f(s).map_err(|m| Error::config(key, m)))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::config(key, "needs at least one value"));
    }
    Ok(items)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    let v: f64 = parse_num(key, value)?;
    if !v.is_finite() {
        return Err(Error::config(key, format!("`{value}` is not finite")));
    }
    Ok(v)
}

fn finite(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("cannot parse `{s}` as a finite number")),
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        v => Err(Error::config(key, format!("expected true or false, got `{v}`"))),
    }
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(",")
}

/// Normalizes a flag name (`gamma-db`) or file key to the canonical key.
pub fn canonical_key(key: &str) -> String {
    key.trim().trim_start_matches("--").replace('-', "_")
}

/// `key = value` pairs of a config file, in order.
pub fn parse_file(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", i + 1)))?;
        out.push((canonical_key(k), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    pub fn with_preset(preset: Preset) -> Self {
        let (scenario, intervals) = match preset {
            Preset::Full => (Scenario::full(), 300),
            Preset::Desk => (Scenario::desk(), 20),
        };
        Self {
            preset,
            spec: SweepSpec {
                scenario,
                etas: vec![1.0],
                cache_sizes: vec![5],
                policy: CachePolicy::Popularity,
                mode: Mode::Multicast,
                intervals,
                seed: 1,
                dc: DcConfig::default(),
            },
            policies: vec![CachePolicy::Popularity],
            modes: vec![Mode::Multicast],
            interval: 0,
            verbose: false,
        }
    }

    /// Resolves a configuration from file pairs and then flag pairs.
    pub fn resolve(file: &[(String, String)], flags: &[(String, String)]) -> Result<Self> {
        let all: Vec<&(String, String)> = file.iter().chain(flags).collect();
        let preset = match all.iter().rev().find(|(k, _)| k == "preset") {
            Some((_, v)) => match v.trim() {
                "full" => Preset::Full,
                "desk" => Preset::Desk,
                v => return Err(Error::config("preset", format!("unknown preset `{v}` (full, desk)"))),
            },
            None => Preset::Full,
        };
        let mut cfg = Self::with_preset(preset);
        for (k, v) in all.into_iter().filter(|(k, _)| k != "preset") {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses a config file on its own.
    pub fn from_text(text: &str) -> Result<Self> {
        Self::resolve(&parse_file(text)?, &[])
    }

    /// Sets one key. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = canonical_key(key);
        let k = key.as_str();
        let sc = &mut self.spec.scenario;
        let dc = &mut self.spec.dc;
        match k {
            "preset" => return Err(Error::config(k, "must be resolved before other keys")),
            "num_bs" => sc.num_bs = parse_num(k, value)?,
            "antennas_per_bs" => sc.antennas_per_bs = parse_num(k, value)?,
            "radius_km" => sc.radius_km = parse_f64(k, value)?,
            "spacing_km" => sc.spacing_km = parse_f64(k, value)?,
            "bs_positions" => {
                sc.bs_positions = match value.trim() {
                    "none" | "" => None,
                    v => Some(parse_positions(&v.replace(';', "\n")).map_err(|e| Error::config(k, e.to_string()))?),
                }
            }
            "total_users" => sc.total_users = parse_num(k, value)?,
            "users_per_interval" => sc.users_per_interval = parse_num(k, value)?,
            "num_contents" => sc.num_contents = parse_num(k, value)?,
            "zipf_skew" => sc.zipf_skew = parse_f64(k, value)?,
            "common_fraction" => sc.common_fraction = parse_f64(k, value)?,
            "common_content" => {
                sc.common_content = match value.trim() {
                    "popularity" => CommonContent::Popularity,
                    "most-popular" => CommonContent::MostPopular,
                    v => return Err(Error::config(k, format!("unknown value `{v}` (popularity, most-popular)"))),
                }
            }
            "gamma_db" => sc.gamma_db = parse_f64(k, value)?,
            "power_budget_w" => sc.power_budget_w = parse_f64(k, value)?,
            "antenna_gain_dbi" => sc.antenna_gain_dbi = parse_f64(k, value)?,
            "noise_psd_dbm_hz" => sc.noise_psd_dbm_hz = parse_f64(k, value)?,
            "bandwidth_hz" => sc.bandwidth_hz = parse_f64(k, value)?,
            "shadowing_std_db" => sc.shadowing_std_db = parse_f64(k, value)?,
            "fading" => {
                sc.fading = match value.trim() {
                    "rayleigh" => Fading::Rayleigh,
                    "unit" => Fading::Unit,
                    v => return Err(Error::config(k, format!("unknown fading `{v}` (rayleigh, unit)"))),
                }
            }
            "eta" => self.spec.etas = parse_list(k, value, finite)?,
            "cache_sizes" => {
                self.spec.cache_sizes = parse_list(k, value, |s| s.parse().map_err(|_| format!("cannot parse `{s}`")))?
            }
            "policy" => {
                self.policies = parse_list(k, value, str::parse)?;
                self.spec.policy = self.policies[0];
            }
            "mode" => {
                self.modes = parse_list(k, value, str::parse)?;
                self.spec.mode = self.modes[0];
            }
            "intervals" => self.spec.intervals = parse_num(k, value)?,
            "interval" => self.interval = parse_num(k, value)?,
            "seed" => self.spec.seed = parse_num(k, value)?,
            "smooth" => dc.smooth = value.trim().parse().map_err(|m: String| Error::config(k, m))?,
            "eps" => dc.eps = parse_f64(k, value)?,
            "rho" => dc.rho = parse_f64(k, value)?,
            "max_iters" => dc.max_iters = parse_num(k, value)?,
            "theta" => {
                dc.theta_rule = match value.trim() {
                    "gradient-max" => ThetaRule::GradientMax,
                    v => ThetaRule::Fixed(parse_f64(k, v)?),
                }
            }
            "normalize" => dc.normalize = parse_bool(k, value)?,
            "rank_tol" => dc.rank_tol = parse_f64(k, value)?,
            "cluster_threshold" => dc.cluster_threshold = parse_f64(k, value)?,
            "randomizations" => dc.n_randomizations = parse_num(k, value)?,
            "refine" => dc.refine = parse_bool(k, value)?,
            "solver_tol" => dc.solver_tol = parse_f64(k, value)?,
            "verbose" => self.verbose = parse_bool(k, value)?,
            _ => return Err(Error::config(k, "unknown key")),
        }
        Ok(())
    }

    /// Checks every value against the preconditions of the pipeline.
    pub fn validate(&self) -> Result<()> {
        for &policy in &self.policies {
            SweepSpec {
                policy,
                ..self.spec.clone()
            }
            .validate()?;
        }
        Ok(())
    }

    /// One [`SweepSpec`] per `(policy, mode)` combination, policies outer.
    pub fn specs(&self) -> Vec<SweepSpec> {
        self.policies
            .iter()
            .flat_map(|&policy| {
                self.modes.iter().map(move |&mode| SweepSpec {
                    policy,
                    mode,
                    ..self.spec.clone()
                })
            })
            .collect()
    }

    /// Every key with its resolved value, as a loadable config file.
    pub fn echo(&self) -> String {
        let sc = &self.spec.scenario;
        let dc = &self.spec.dc;
        let positions = |p: &Option<Vec<Position>>| match p {
            None => "none".to_string(),
            Some(v) => v.iter().map(|p| format!("{} {}", p.x, p.y)).collect::<Vec<_>>().join("; "),
        };
        let values: Vec<(&str, String)> = vec![
            ("preset", self.preset.name().into()),
            ("num_bs", sc.num_bs.to_string()),
            ("antennas_per_bs", sc.antennas_per_bs.to_string()),
            ("radius_km", sc.radius_km.to_string()),
            ("spacing_km", sc.spacing_km.to_string()),
            ("bs_positions", positions(&sc.bs_positions)),
            ("total_users", sc.total_users.to_string()),
            ("users_per_interval", sc.users_per_interval.to_string()),
            ("num_contents", sc.num_contents.to_string()),
            ("zipf_skew", sc.zipf_skew.to_string()),
            ("common_fraction", sc.common_fraction.to_string()),
            (
                "common_content",
                match sc.common_content {
                    CommonContent::Popularity => "popularity",
                    CommonContent::MostPopular => "most-popular",
                }
                .into(),
            ),
            ("gamma_db", sc.gamma_db.to_string()),
            ("power_budget_w", sc.power_budget_w.to_string()),
            ("antenna_gain_dbi", sc.antenna_gain_dbi.to_string()),
            ("noise_psd_dbm_hz", sc.noise_psd_dbm_hz.to_string()),
            ("bandwidth_hz", sc.bandwidth_hz.to_string()),
            ("shadowing_std_db", sc.shadowing_std_db.to_string()),
            (
                "fading",
                match sc.fading {
                    Fading::Rayleigh => "rayleigh",
                    Fading::Unit => "unit",
                }
                .into(),
            ),
            ("eta", join(&self.spec.etas, f64::to_string)),
            ("cache_sizes", join(&self.spec.cache_sizes, usize::to_string)),
            ("policy", join(&self.policies, |p| p.name().to_string())),
            ("mode", join(&self.modes, |m| m.name().to_string())),
            ("intervals", self.spec.intervals.to_string()),
            ("interval", self.interval.to_string()),
            ("seed", self.spec.seed.to_string()),
            ("smooth", dc.smooth.name().into()),
            ("eps", dc.eps.to_string()),
            ("rho", dc.rho.to_string()),
            ("max_iters", dc.max_iters.to_string()),
            (
                "theta",
                match dc.theta_rule {
                    ThetaRule::GradientMax => "gradient-max".into(),
                    ThetaRule::Fixed(t) => t.to_string(),
                },
            ),
            ("normalize", dc.normalize.to_string()),
            ("rank_tol", dc.rank_tol.to_string()),
            ("cluster_threshold", dc.cluster_threshold.to_string()),
            ("randomizations", dc.n_randomizations.to_string()),
            ("refine", dc.refine.to_string()),
            ("solver_tol", dc.solver_tol.to_string()),
            ("verbose", self.verbose.to_string()),
        ];
        debug_assert_eq!(values.len(), KEYS.len());
        let mut out = String::new();
        for (k, v) in values {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}
