//! Flag resolution: command line wins, then the `--config` TOML file, then
//! per-command defaults.

use crate::{usage, CommonOpts, RunError};
use shl_core::process::DriftMode;
use std::path::{Path, PathBuf};

/// TOML fallback values, keyed exactly like the long flags.
pub struct FileConfig {
    table: toml::Table,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, RunError> {
        let table = match path {
            None => toml::Table::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| usage(format!("bad TOML in {}: {e}", p.display())))?
            }
        };
        Ok(FileConfig { table })
    }

    pub fn f64(&self, key: &str) -> Option<f64> {
        match self.table.get(key) {
            Some(toml::Value::Float(f)) => Some(*f),
            Some(toml::Value::Integer(i)) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn u64(&self, key: &str) -> Option<u64> {
        match self.table.get(key) {
            Some(toml::Value::Integer(i)) if *i >= 0 => Some(*i as u64),
            _ => None,
        }
    }

    pub fn usize(&self, key: &str) -> Option<usize> {
        self.u64(key).map(|v| v as usize)
    }

    pub fn string(&self, key: &str) -> Option<String> {
        match self.table.get(key) {
            Some(toml::Value::String(s)) => Some(s.clone()),
            // Lists may be written as arrays instead of "a,b,c" strings.
            Some(toml::Value::Array(items)) => {
                let parts: Option<Vec<String>> = items
                    .iter()
                    .map(|v| match v {
                        toml::Value::Float(f) => Some(f.to_string()),
                        toml::Value::Integer(i) => Some(i.to_string()),
                        _ => None,
                    })
                    .collect();
                parts.map(|p| p.join(","))
            }
            Some(toml::Value::Float(f)) => Some(f.to_string()),
            Some(toml::Value::Integer(i)) => Some(i.to_string()),
            _ => None,
        }
    }

    pub fn bool(&self, key: &str) -> Option<bool> {
        match self.table.get(key) {
            Some(toml::Value::Boolean(b)) => Some(*b),
            _ => None,
        }
    }
}

/// Fully resolved common options.
pub struct Resolved {
    pub seed: u64,
    pub seed_was_given: bool,
    pub samples: usize,
    pub window: Option<f64>,
    pub drift_mode: DriftMode,
    pub threads: usize,
    pub out: PathBuf,
    pub dump_samples: bool,
    pub file: FileConfig,
}

pub fn resolve(
    common: &CommonOpts,
    command_name: &str,
    default_samples: usize,
) -> Result<Resolved, RunError> {
    let file = FileConfig::load(common.config.as_deref())?;

    let seed_opt = common.seed.or_else(|| file.u64("seed"));
    let seed_was_given = seed_opt.is_some();
    let seed = seed_opt.unwrap_or_else(rand::random);

    let samples = common.samples.or_else(|| file.usize("samples")).unwrap_or(default_samples);
    if samples == 0 {
        return Err(usage("--samples must be positive"));
    }

    let window = match common.window.clone().or_else(|| file.string("window")) {
        None => None,
        Some(s) if s == "auto" => None,
        Some(s) => Some(
            s.parse::<f64>()
                .map_err(|_| usage(format!("--window must be a number or \"auto\" (got {s})")))?,
        ),
    };

    let drift_mode = match common.drift_mode.clone().or_else(|| file.string("drift_mode")) {
        None => DriftMode::Asymptotic,
        Some(s) => s.parse::<DriftMode>().map_err(usage)?,
    };

    let threads = common.threads.or_else(|| file.usize("threads")).unwrap_or(0);
    let out = common
        .out
        .clone()
        .or_else(|| file.string("out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(command_name));
    let dump_samples = common.dump_samples || file.bool("dump_samples").unwrap_or(false);

    Ok(Resolved {
        seed,
        seed_was_given,
        samples,
        window,
        drift_mode,
        threads,
        out,
        dump_samples,
        file,
    })
}

/// Parses a comma-separated list of numbers, sorted ascending, deduplicated.
pub fn parse_list(raw: &str, flag: &str) -> Result<Vec<f64>, RunError> {
    let mut out = Vec::new();
    for part in raw.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        out.push(
            part.parse::<f64>()
                .map_err(|_| usage(format!("{flag}: `{part}` is not a number")))?,
        );
    }
    if out.is_empty() {
        return Err(usage(format!("{flag}: empty list")));
    }
    out.sort_unstable_by(f64::total_cmp);
    out.dedup();
    Ok(out)
}

/// Parses a lo:hi:step grid description.
pub fn parse_grid(raw: &str) -> Result<(f64, f64, f64), RunError> {
    let parts: Vec<&str> = raw.split(':').collect();
    if parts.len() != 3 {
        return Err(usage(format!("--grid must be lo:hi:step (got {raw})")));
    }
    let nums: Result<Vec<f64>, _> = parts.iter().map(|p| p.trim().parse::<f64>()).collect();
    let nums = nums.map_err(|_| usage(format!("--grid must be numeric lo:hi:step (got {raw})")))?;
    let (lo, hi, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) || hi < lo {
        return Err(usage("--grid needs hi >= lo and step > 0"));
    }
    Ok((lo, hi, step))
}
