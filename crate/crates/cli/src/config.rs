//! Experiment configuration: JSON file merged with command-line flags.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use ccs_placement::popularity::{parse_prob, PopularityModel, PopularitySpec, ProbValue, StepLevelSpec};
use serde::Deserialize;

use crate::args::CommonArgs;
use crate::CliError;

pub const DEFAULT_TRIALS: usize = 10_000;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(config_err(format!("unknown format '{other}' (expected json or csv)"))),
        }
    }
}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    CliError::Config(msg.into()).into()
}

/// One number or a list.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum CacheList {
    One(f64),
    Many(Vec<f64>),
}

/// Popularities as a comma-separated string or a JSON list.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ProbList {
    Text(String),
    List(Vec<ProbValue>),
}

/// Step levels as `p:count,...` or a JSON list of `{p, count}`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum StepList {
    Text(String),
    List(Vec<StepLevelSpec>),
}

/// Unresolved settings; every key is optional until a command needs it.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(rename = "N")]
    pub n_files: Option<usize>,
    #[serde(rename = "K")]
    pub k_users: Option<usize>,
    #[serde(rename = "M")]
    pub cache: Option<CacheList>,
    #[serde(rename = "M-grid")]
    pub cache_grid: Option<String>,
    pub zipf: Option<f64>,
    pub probs: Option<ProbList>,
    pub step: Option<StepList>,
    pub popularity: Option<PopularitySpec>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<String>,
    pub placement: Option<PathBuf>,
}

/// Reads `--config` (if any) and applies the flags on top.
pub fn load(args: &CommonArgs) -> Result<RawConfig> {
    let mut raw = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))
                .map_err(|e| config_err(format!("{e:#}")))?;
            serde_json::from_str::<RawConfig>(&text)
                .map_err(|e| config_err(format!("config {}: {e}", path.display())))?
        }
        None => RawConfig::default(),
    };
    macro_rules! overlay {
        ($($field:ident),*) => {$(
            if let Some(v) = &args.$field {
                raw.$field = Some(v.clone());
            }
        )*};
    }
    overlay!(n_files, k_users, cache_grid, zipf, trials, seed, out, format, placement);
    if let Some(m) = &args.cache {
        raw.cache = Some(CacheList::Many(m.clone()));
    }
    if let Some(p) = &args.probs {
        raw.probs = Some(ProbList::Text(p.clone()));
    }
    if let Some(s) = &args.step {
        raw.step = Some(StepList::Text(s.clone()));
    }
    // a popularity flag replaces whatever the file chose
    if args.zipf.is_some() || args.probs.is_some() || args.step.is_some() {
        raw.popularity = None;
        if args.zipf.is_none() {
            raw.zipf = None;
        }
        if args.probs.is_none() {
            raw.probs = None;
        }
        if args.step.is_none() {
            raw.step = None;
        }
    }
    Ok(raw)
}

/// `lo:hi:step`, inclusive of `hi` up to rounding.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let [lo, hi, step] = parts.as_slice() else {
        return Err(config_err(format!("grid '{text}' is not lo:hi:step")));
    };
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| config_err(format!("bad number '{s}' in grid '{text}'")));
    let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
    if step.is_nan() || step <= 0.0 || !lo.is_finite() || !hi.is_finite() || hi < lo {
        return Err(config_err(format!("grid '{text}' needs lo <= hi and step > 0")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    if count > 100_000 {
        return Err(config_err(format!("grid '{text}' has too many points")));
    }
    // snap to 1e-12 so 0.1-style steps print cleanly
    Ok((0..count).map(|i| ((lo + i as f64 * step) * 1e12).round() / 1e12).collect())
}

fn parse_step_text(text: &str) -> Result<Vec<StepLevelSpec>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let (p, c) =
                item.split_once(':').ok_or_else(|| config_err(format!("step level '{item}' is not p:count")))?;
            let count = c.trim().parse::<usize>().map_err(|_| config_err(format!("bad count in '{item}'")))?;
            Ok(StepLevelSpec { p: ProbValue::Text(p.trim().to_string()), count })
        })
        .collect()
}

impl RawConfig {
    /// The popularity specification, if exactly one was given.
    pub fn popularity_spec(&self) -> Result<Option<PopularitySpec>> {
        let mut specs = Vec::new();
        if let Some(theta) = self.zipf {
            specs.push(PopularitySpec::Zipf { theta });
        }
        if let Some(p) = &self.probs {
            let probs = match p {
                ProbList::Text(t) => t
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| {
                        parse_prob(s).map_err(|e| config_err(e.to_string()))?;
                        Ok(ProbValue::Text(s.trim().to_string()))
                    })
                    .collect::<Result<Vec<_>>>()?,
                ProbList::List(v) => v.clone(),
            };
            specs.push(PopularitySpec::Custom { probs });
        }
        if let Some(s) = &self.step {
            let levels = match s {
                StepList::Text(t) => parse_step_text(t)?,
                StepList::List(v) => v.clone(),
            };
            specs.push(PopularitySpec::Step { levels });
        }
        if let Some(p) = &self.popularity {
            specs.push(p.clone());
        }
        match specs.len() {
            0 => Ok(None),
            1 => Ok(specs.pop()),
            _ => Err(config_err("give only one of zipf, probs, step, popularity")),
        }
    }

    pub fn format_or(&self, default: Format) -> Result<Format> {
        self.format.as_deref().map_or(Ok(default), Format::parse)
    }

    pub fn cache_sizes(&self) -> Result<Vec<f64>> {
        match (&self.cache, &self.cache_grid) {
            (Some(_), Some(_)) => Err(config_err("give either M or M-grid, not both")),
            (Some(CacheList::One(m)), None) => Ok(vec![*m]),
            (Some(CacheList::Many(v)), None) => Ok(v.clone()),
            (None, Some(g)) => parse_grid(g),
            (None, None) => Err(config_err("no cache size given (use --M or --M-grid)")),
        }
    }

    /// Everything a solve/sweep/subpkt run needs.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let spec =
            self.popularity_spec()?.ok_or_else(|| config_err("no popularity given (use --zipf, --probs or --step)"))?;
        let model = spec.build(self.n_files).map_err(|e| config_err(e.to_string()))?;
        let k_users = self.k_users.ok_or_else(|| config_err("number of users --K is required"))?;
        if k_users == 0 {
            return Err(config_err("K must be at least 1"));
        }
        let cache_sizes = self.cache_sizes()?;
        if cache_sizes.is_empty() {
            return Err(config_err("empty cache-size list"));
        }
        let n = model.n_files() as f64;
        if let Some(bad) = cache_sizes.iter().find(|&&m| !(m.is_finite() && (0.0..=n).contains(&m))) {
            return Err(config_err(format!("cache size {bad} outside [0, {n}]")));
        }
        let trials = self.trials.unwrap_or(DEFAULT_TRIALS);
        if trials == 0 {
            return Err(config_err("trials must be at least 1"));
        }
        Ok(ExperimentConfig {
            n_files: model.n_files(),
            k_users,
            cache_sizes,
            popularity: spec,
            model,
            trials,
            seed: self.seed.unwrap_or(DEFAULT_SEED),
            out: self.out.clone(),
            format: self.format.as_deref().map(Format::parse).transpose()?,
        })
    }
}

/// A fully resolved experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub n_files: usize,
    pub k_users: usize,
    pub cache_sizes: Vec<f64>,
    pub popularity: PopularitySpec,
    pub model: PopularityModel,
    pub trials: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// `None` = the command's default
    pub format: Option<Format>,
}
