//! Flat `key = value` run configuration and grid-spec parsers.
//!
//! Lines hold one assignment each; `#` starts a comment. Numbers accept
//! decimal, exponent and `a/b` rational forms. Unknown and repeated keys are
//! errors reported with their line.

use std::fmt;

use crate::channel::{ChannelParams, DetectorParams};
use crate::finite_key::{Accounting, BoundForm};
use crate::gaussian::SourceParams;
use crate::info::{RateParams, ShannonModel};
use crate::optimizer::{Coincidences, Context, SearchSettings};

/// A configuration problem, located by line and key where known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "`{key}`: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    fn new(message: impl Into<String>) -> Self {
        Self {
            line: None,
            key: None,
            message: message.into(),
        }
    }

    fn at(mut self, line: usize, key: &str) -> Self {
        self.line.get_or_insert(line);
        self.key.get_or_insert_with(|| key.to_string());
        self
    }

    fn for_key(key: &str, message: impl Into<String>) -> Self {
        Self {
            line: None,
            key: Some(key.to_string()),
            message: message.into(),
        }
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

/// Parses a real number, also accepting `a/b`.
pub fn parse_real(s: &str) -> Result<f64> {
    let s = s.trim();
    let v = if let Some((a, b)) = s.split_once('/') {
        let a: f64 = a
            .trim()
            .parse()
            .map_err(|_| ConfigError::new(format!("not a number: `{s}`")))?;
        let b: f64 = b
            .trim()
            .parse()
            .map_err(|_| ConfigError::new(format!("not a number: `{s}`")))?;
        if b == 0.0 {
            return Err(ConfigError::new("division by zero"));
        }
        a / b
    } else {
        s.parse()
            .map_err(|_| ConfigError::new(format!("not a number: `{s}`")))?
    };
    if !v.is_finite() {
        return Err(ConfigError::new(format!("not a finite number: `{s}`")));
    }
    Ok(v)
}

/// Parses a non-negative integer count, allowing exponent notation such as `1e12`.
pub fn parse_count(s: &str) -> Result<u64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let v: f64 = s
        .parse()
        .map_err(|_| ConfigError::new(format!("not a count: `{s}`")))?;
    if !(v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v < 1.8e19) {
        return Err(ConfigError::new(format!(
            "not a non-negative integer: `{s}`"
        )));
    }
    Ok(v as u64)
}

fn parse_bool(s: &str) -> Result<bool> {
    match s.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(ConfigError::new(format!(
            "expected true|false, got `{other}`"
        ))),
    }
}

fn split_list(s: &str) -> Vec<&str> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .collect()
}

/// Log-spaced ascending coincidence counts from `min:max:points`.
pub fn parse_grid_spec(spec: &str) -> Result<Vec<u64>> {
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    let [lo, hi, k] = parts[..] else {
        return Err(ConfigError::new(format!(
            "grid spec must be min:max:points, got `{spec}`"
        )));
    };
    let lo = parse_count(lo)?;
    let hi = parse_count(hi)?;
    let k = parse_count(k)?;
    if lo == 0 {
        return Err(ConfigError::new("grid minimum must be positive"));
    }
    if hi < lo {
        return Err(ConfigError::new("grid maximum below minimum"));
    }
    if k == 0 || k > 100_000 {
        return Err(ConfigError::new("grid needs between 1 and 100000 points"));
    }
    if k == 1 {
        if lo != hi {
            return Err(ConfigError::new("a 1-point grid needs min == max"));
        }
        return Ok(vec![lo]);
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut out: Vec<u64> = (0..k)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == k - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (k - 1) as f64).exp().round() as u64
            }
        })
        .collect();
    out.dedup();
    Ok(out)
}

/// Comma-separated coincidence counts; `inf` denotes the asymptotic limit.
pub fn parse_n_list(s: &str) -> Result<Vec<Coincidences>> {
    let items = split_list(s);
    if items.is_empty() {
        return Err(ConfigError::new("empty grid"));
    }
    items
        .into_iter()
        .map(|t| match t {
            "inf" => Ok(Coincidences::Infinite),
            _ => {
                let n = parse_count(t)?;
                if n == 0 {
                    Err(ConfigError::new("coincidence counts must be positive"))
                } else {
                    Ok(Coincidences::Finite(n))
                }
            }
        })
        .collect()
}

/// Channel lengths as a list `0, 50, 100` or a linear grid `min:max:points`.
pub fn parse_lengths(s: &str) -> Result<Vec<f64>> {
    let out: Vec<f64> = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let [lo, hi, k] = parts[..] else {
            return Err(ConfigError::new(format!(
                "length grid must be min:max:points, got `{s}`"
            )));
        };
        let (lo, hi, k) = (parse_real(lo)?, parse_real(hi)?, parse_count(k)?);
        if k == 0 || k > 100_000 {
            return Err(ConfigError::new(
                "length grid needs between 1 and 100000 points",
            ));
        }
        if k == 1 {
            vec![lo]
        } else {
            (0..k)
                .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
                .collect()
        }
    } else {
        split_list(s)
            .into_iter()
            .map(parse_real)
            .collect::<Result<_>>()?
    };
    if out.is_empty() {
        return Err(ConfigError::new("empty grid"));
    }
    for w in out.windows(2) {
        if w[1] < w[0] {
            return Err(ConfigError::new("lengths must be ascending"));
        }
    }
    if out.iter().any(|&l| l < 0.0) {
        return Err(ConfigError::new("lengths must be non-negative"));
    }
    Ok(out)
}

/// Every tunable of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub d: f64,
    pub sigma_cor: f64,
    pub k: f64,
    /// Dimensions swept by `sweep-n`.
    pub d_values: Vec<f64>,
    pub efficiency: f64,
    pub dark_rate: f64,
    /// Jitter RMS in units of `sigma_cor`.
    pub jitter: f64,
    pub length_km: f64,
    pub loss_db_per_km: f64,
    pub insertion_loss_db: f64,
    /// Frame duration in units of `sigma_cor`; defaults to one coherence time.
    pub frame_duration: Option<f64>,
    pub time_unit_ps: f64,
    pub pairs_per_frame: f64,
    pub eps_s: f64,
    pub eps_ec: f64,
    pub pe_split: bool,
    pub beta: f64,
    pub sigma_hat_ratio: f64,
    pub shannon_model: String,
    pub shannon_bins: Option<u32>,
    pub search: SearchSettings,
    /// Fixed basis probability for single-point runs; optimised when absent.
    pub fixed_p: Option<f64>,
    pub bound_form: BoundForm,
    pub accounting: Accounting,
    pub symmetric: bool,
    pub n: Coincidences,
    pub n_grid: Vec<u64>,
    pub n_list: Vec<Coincidences>,
    pub lengths: Vec<f64>,
    pub mc: McSettings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSettings {
    pub seed: u64,
    pub trials: usize,
    pub m_values: Vec<u64>,
    pub eps_pe_values: Vec<f64>,
    pub true_xi: f64,
    pub mi_draws: usize,
    pub mi_samples: usize,
    pub mi_tolerance: f64,
    pub mi_bin_width: f64,
    pub margin_scale: f64,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            seed: 20_160_101,
            trials: 10_000,
            m_values: vec![1_000, 10_000],
            eps_pe_values: vec![0.05, 0.01],
            true_xi: 0.21,
            mi_draws: 10,
            mi_samples: 10_000_000,
            mi_tolerance: 0.02,
            mi_bin_width: 0.25,
            margin_scale: 1.0,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            d: 8.0,
            sigma_cor: 1.0,
            k: 1.0,
            d_values: Vec::new(),
            efficiency: 0.93,
            dark_rate: 1000.0,
            jitter: 2.0 / 3.0,
            length_km: 0.0,
            loss_db_per_km: 0.2,
            insertion_loss_db: 0.0,
            frame_duration: None,
            time_unit_ps: 10.0,
            pairs_per_frame: crate::channel::DEFAULT_PAIRS_PER_FRAME,
            eps_s: 1e-5,
            eps_ec: 1e-10,
            pe_split: false,
            beta: 0.9,
            sigma_hat_ratio: 1.1,
            shannon_model: "gaussian".into(),
            shannon_bins: None,
            search: SearchSettings::default(),
            fixed_p: None,
            bound_form: BoundForm::Centered,
            accounting: Accounting::Eq2,
            symmetric: false,
            n: Coincidences::Finite(1_000_000_000_000),
            n_grid: parse_grid_spec("1000:100000000000000:23").expect("default grid"),
            n_list: vec![
                Coincidences::Infinite,
                Coincidences::Finite(1_000_000_000_000),
                Coincidences::Finite(10_000_000_000),
                Coincidences::Finite(100_000_000),
                Coincidences::Finite(1_000_000),
                Coincidences::Finite(10_000),
            ],
            lengths: parse_lengths("0:250:26").expect("default lengths"),
            mc: McSettings::default(),
        }
    }
}

/// Keys accepted in a configuration file.
pub const KEYS: &[&str] = &[
    "source.d",
    "source.sigma_cor",
    "source.k",
    "source.d_values",
    "detector.efficiency",
    "detector.dark_rate",
    "detector.jitter",
    "channel.length_km",
    "channel.loss_db_per_km",
    "channel.insertion_loss_db",
    "channel.frame_duration",
    "channel.time_unit_ps",
    "channel.pairs_per_frame",
    "budget.eps_s",
    "budget.eps_ec",
    "budget.pe_split",
    "rate.beta",
    "estimation.sigma_hat_ratio",
    "shannon.model",
    "shannon.bins",
    "optimizer.p",
    "optimizer.p_points",
    "optimizer.p_max",
    "optimizer.eps_points",
    "optimizer.polish_rounds",
    "sweep.n",
    "sweep.n_grid",
    "sweep.n_list",
    "sweep.lengths",
    "mc.seed",
    "mc.trials",
    "mc.m_values",
    "mc.eps_pe_values",
    "mc.true_xi",
    "mc.mi_draws",
    "mc.mi_samples",
    "mc.mi_tolerance",
    "mc.mi_bin_width",
    "mc.margin_scale",
    "bound_form",
    "accounting_mode",
    "symmetric",
];

fn parse_usize(s: &str) -> Result<usize> {
    parse_count(s).and_then(|v| usize::try_from(v).map_err(|_| ConfigError::new("count too large")))
}

impl RunConfig {
    /// Parses configuration text on top of the defaults and validates the result.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<(&str, usize)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError {
                    line: Some(line_no),
                    key: None,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            let Some(&known) = KEYS.iter().find(|k| **k == key) else {
                return Err(ConfigError::for_key(key, "unknown key").at(line_no, key));
            };
            if seen.iter().any(|(k, _)| *k == known) {
                return Err(ConfigError::for_key(key, "repeated key").at(line_no, key));
            }
            seen.push((known, line_no));
            cfg.set(known, value).map_err(|e| e.at(line_no, key))?;
        }
        cfg.validate().map_err(|mut e| {
            // point at the line that set the offending key
            if let Some((_, line)) = e
                .key
                .as_deref()
                .and_then(|k| seen.iter().find(|(s, _)| *s == k))
            {
                e.line = Some(*line);
            }
            e
        })?;
        Ok(cfg)
    }

    /// Assigns one key, checking only the value's own syntax and range.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        match key {
            "source.d" => self.d = parse_real(v)?,
            "source.sigma_cor" => self.sigma_cor = parse_real(v)?,
            "source.k" => self.k = parse_real(v)?,
            "source.d_values" => {
                self.d_values = split_list(v)
                    .into_iter()
                    .map(parse_real)
                    .collect::<Result<_>>()?;
                if self.d_values.is_empty() {
                    return Err(ConfigError::new("empty list"));
                }
            }
            "detector.efficiency" => self.efficiency = parse_real(v)?,
            "detector.dark_rate" => self.dark_rate = parse_real(v)?,
            "detector.jitter" => self.jitter = parse_real(v)?,
            "channel.length_km" => self.length_km = parse_real(v)?,
            "channel.loss_db_per_km" => self.loss_db_per_km = parse_real(v)?,
            "channel.insertion_loss_db" => self.insertion_loss_db = parse_real(v)?,
            "channel.frame_duration" => self.frame_duration = Some(parse_real(v)?),
            "channel.time_unit_ps" => self.time_unit_ps = parse_real(v)?,
            "channel.pairs_per_frame" => self.pairs_per_frame = parse_real(v)?,
            "budget.eps_s" => self.eps_s = parse_real(v)?,
            "budget.eps_ec" => self.eps_ec = parse_real(v)?,
            "budget.pe_split" => self.pe_split = parse_bool(v)?,
            "rate.beta" => self.beta = parse_real(v)?,
            "estimation.sigma_hat_ratio" => self.sigma_hat_ratio = parse_real(v)?,
            "shannon.model" => match v {
                "gaussian" | "binned" => self.shannon_model = v.to_string(),
                _ => {
                    return Err(ConfigError::new(format!(
                        "expected gaussian|binned, got `{v}`"
                    )))
                }
            },
            "shannon.bins" => {
                let b = parse_count(v)?;
                if b == 0 || b > 100_000 {
                    return Err(ConfigError::new(
                        "bins must be a positive integer up to 100000",
                    ));
                }
                self.shannon_bins = Some(b as u32);
            }
            "optimizer.p" => self.fixed_p = Some(parse_real(v)?),
            "optimizer.p_points" => self.search.p_points = parse_usize(v)?,
            "optimizer.p_max" => self.search.p_max = parse_real(v)?,
            "optimizer.eps_points" => self.search.eps_points = parse_usize(v)?,
            "optimizer.polish_rounds" => self.search.polish_rounds = parse_usize(v)?,
            "sweep.n" => {
                let mut l = parse_n_list(v)?;
                if l.len() != 1 {
                    return Err(ConfigError::new("expected a single count"));
                }
                self.n = l.remove(0);
            }
            "sweep.n_grid" => self.n_grid = parse_grid_spec(v)?,
            "sweep.n_list" => self.n_list = parse_n_list(v)?,
            "sweep.lengths" => self.lengths = parse_lengths(v)?,
            "mc.seed" => self.mc.seed = parse_count(v)?,
            "mc.trials" => self.mc.trials = parse_usize(v)?,
            "mc.m_values" => {
                self.mc.m_values = split_list(v)
                    .into_iter()
                    .map(parse_count)
                    .collect::<Result<_>>()?;
            }
            "mc.eps_pe_values" => {
                self.mc.eps_pe_values = split_list(v)
                    .into_iter()
                    .map(parse_real)
                    .collect::<Result<_>>()?;
            }
            "mc.true_xi" => self.mc.true_xi = parse_real(v)?,
            "mc.mi_draws" => self.mc.mi_draws = parse_usize(v)?,
            "mc.mi_samples" => self.mc.mi_samples = parse_usize(v)?,
            "mc.mi_tolerance" => self.mc.mi_tolerance = parse_real(v)?,
            "mc.mi_bin_width" => self.mc.mi_bin_width = parse_real(v)?,
            "mc.margin_scale" => self.mc.margin_scale = parse_real(v)?,
            "bound_form" => {
                self.bound_form = v
                    .parse()
                    .map_err(|e: crate::Error| ConfigError::new(e.to_string()))?
            }
            "accounting_mode" => {
                self.accounting = v
                    .parse()
                    .map_err(|e: crate::Error| ConfigError::new(e.to_string()))?
            }
            "symmetric" => self.symmetric = parse_bool(v)?,
            _ => return Err(ConfigError::new("unknown key")),
        }
        Ok(())
    }

    /// Dimensions covered by sweeps, ascending.
    pub fn dimensions(&self) -> Vec<f64> {
        if self.d_values.is_empty() {
            vec![self.d]
        } else {
            let mut v = self.d_values.clone();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        }
    }

    /// Optimizer context at dimension `d`.
    pub fn context(&self, d: f64) -> std::result::Result<Context, crate::Error> {
        let source = SourceParams::with_dimension(d, self.sigma_cor, self.k)?;
        let detector = DetectorParams::new(
            self.efficiency,
            self.dark_rate,
            self.jitter * self.sigma_cor,
        )?;
        let channel = ChannelParams {
            length_km: self.length_km,
            loss_db_per_km: self.loss_db_per_km,
            insertion_loss_db: self.insertion_loss_db,
            frame_duration: self
                .frame_duration
                .map_or(source.sigma_coh(), |f| f * self.sigma_cor),
            time_unit_seconds: self.time_unit_ps * 1e-12,
            pairs_per_frame: self.pairs_per_frame,
        };
        let shannon_model = match self.shannon_model.as_str() {
            "binned" => ShannonModel::Binned {
                bins: self.shannon_bins.unwrap_or(d.round().max(1.0) as u32),
            },
            _ => ShannonModel::Gaussian,
        };
        let ctx = Context {
            source,
            detector,
            channel,
            rate: RateParams::new(self.beta)?,
            eps_s: self.eps_s,
            eps_ec: self.eps_ec,
            sigma_hat_ratio: self.sigma_hat_ratio,
            bound_form: self.bound_form,
            accounting: self.accounting,
            symmetric: self.symmetric,
            fixed_p: self.fixed_p,
            pe_split: self.pe_split,
            shannon_model,
            search: self.search,
        };
        ctx.validate()?;
        Ok(ctx)
    }

    /// Re-checks every invariant that depends on more than one key.
    pub fn validate(&self) -> Result<()> {
        if let Some(p) = self.fixed_p {
            if !(0.5..1.0).contains(&p) {
                return Err(ConfigError::for_key(
                    "optimizer.p",
                    format!("basis probability must lie in [1/2, 1), got {p}"),
                ));
            }
            if self.symmetric && p != 0.5 {
                return Err(ConfigError::for_key(
                    "optimizer.p",
                    "symmetric mode fixes p = 1/2",
                ));
            }
        }
        for d in self.dimensions() {
            let key = if self.d_values.is_empty() {
                "source.d"
            } else {
                "source.d_values"
            };
            self.context(d)
                .map_err(|e| ConfigError::for_key(key, e.to_string()))?;
        }
        for w in self.n_grid.windows(2) {
            if w[1] <= w[0] {
                return Err(ConfigError::for_key(
                    "sweep.n_grid",
                    "must be strictly ascending",
                ));
            }
        }
        let mc = &self.mc;
        if mc.trials == 0 {
            return Err(ConfigError::for_key("mc.trials", "need at least 1"));
        }
        if mc.m_values.is_empty() || mc.m_values.iter().any(|&m| m < 2) {
            return Err(ConfigError::for_key(
                "mc.m_values",
                "need a non-empty list of values >= 2",
            ));
        }
        if mc.eps_pe_values.is_empty() || mc.eps_pe_values.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(ConfigError::for_key(
                "mc.eps_pe_values",
                "need a non-empty list in (0, 1)",
            ));
        }
        if !(mc.true_xi >= 0.0) {
            return Err(ConfigError::for_key("mc.true_xi", "must be non-negative"));
        }
        if mc.mi_draws > 0 && mc.mi_samples < crate::mc::MIN_MI_SAMPLES {
            return Err(ConfigError::for_key(
                "mc.mi_samples",
                format!("need at least {}", crate::mc::MIN_MI_SAMPLES),
            ));
        }
        if !(mc.mi_tolerance > 0.0) || !(mc.mi_bin_width > 0.0) {
            return Err(ConfigError::for_key(
                "mc.mi_tolerance",
                "tolerance and bin width must be positive",
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.n_grid.len(), 23);
        assert_eq!(c.n_grid[0], 1000);
        assert_eq!(*c.n_grid.last().unwrap(), 100_000_000_000_000);
    }

    #[test]
    fn comments_and_rationals() {
        let c = RunConfig::parse("# header\ndetector.jitter = 2/3  # per arm\n\nsource.d = 16\n")
            .unwrap();
        assert!((c.jitter - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.d, 16.0);
    }

    #[test]
    fn unknown_and_repeated_keys() {
        let e = RunConfig::parse("source.d = 8\nsource.q = 1\n").unwrap_err();
        assert_eq!(e.line, Some(2));
        assert_eq!(e.key.as_deref(), Some("source.q"));
        let e = RunConfig::parse("source.d = 8\nsource.d = 9\n").unwrap_err();
        assert!(e.message.contains("repeated"));
        let e = RunConfig::parse("just words\n").unwrap_err();
        assert_eq!(e.line, Some(1));
    }

    #[test]
    fn invariant_violations_name_the_key() {
        let e = RunConfig::parse("optimizer.p = 1.2\n").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("optimizer.p"));
        assert!(e.to_string().contains("[1/2, 1)"));
        let e = RunConfig::parse("detector.efficiency = 0\n").unwrap_err();
        assert!(e.to_string().contains("efficiency"));
    }

    #[test]
    fn grid_specs() {
        assert_eq!(
            parse_grid_spec("1e3:1e5:3").unwrap(),
            vec![1000, 10_000, 100_000]
        );
        assert_eq!(parse_grid_spec("10:10:1").unwrap(), vec![10]);
        assert!(parse_grid_spec("0:10:3").is_err());
        assert!(parse_grid_spec("10:1:3").is_err());
        assert!(parse_grid_spec("1:10").is_err());
        assert_eq!(parse_grid_spec("1:3:10").unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn n_lists_and_lengths() {
        assert_eq!(
            parse_n_list("inf, 1e4").unwrap(),
            vec![Coincidences::Infinite, Coincidences::Finite(10_000)]
        );
        assert!(parse_n_list("").is_err());
        assert!(parse_n_list("0").is_err());
        assert_eq!(
            parse_lengths("0, 100, 200").unwrap(),
            vec![0.0, 100.0, 200.0]
        );
        assert_eq!(parse_lengths("0:200:3").unwrap(), vec![0.0, 100.0, 200.0]);
        assert!(parse_lengths("100, 0").is_err());
        assert!(parse_lengths("").is_err());
    }
}
