//! Run outputs: results.json / results.csv / samples.ndjson / SVG figures,
//! plus the manifest with per-file digests and wall-clock accounting.
//!
//! results.json and the CSVs are pure functions of the configuration and
//! seed; wall-clock lives only in the manifest so repeated runs stay
//! byte-identical.

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use shl_core::process::{DriftMode, FieldSample};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Doubles in text outputs carry 17 significant digits so they round-trip.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct Emitter {
    dir: PathBuf,
    command: String,
    digests: BTreeMap<String, String>,
    wall: BTreeMap<String, f64>,
    phase_started: Instant,
    phase: String,
}

impl Emitter {
    pub fn new(dir: &Path, command: &str) -> Result<Self> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output dir {}", dir.display()))?;
        Ok(Emitter {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            digests: BTreeMap::new(),
            wall: BTreeMap::new(),
            phase_started: Instant::now(),
            phase: "estimate".to_string(),
        })
    }

    /// Closes the current wall-clock phase and opens the next.
    pub fn phase(&mut self, name: &str) {
        let elapsed = self.phase_started.elapsed().as_secs_f64();
        *self.wall.entry(self.phase.clone()).or_insert(0.0) += elapsed;
        self.phase = name.to_string();
        self.phase_started = Instant::now();
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        let hash = Sha256::digest(bytes);
        self.digests.insert(name.to_string(), format!("{hash:x}"));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_samples(
        &mut self,
        rows: &[(f64, [f64; 2], DriftMode, Vec<FieldSample>)],
    ) -> Result<()> {
        let mut text = String::new();
        for (t, window, mode, samples) in rows {
            let mode = match mode {
                DriftMode::Asymptotic => "asymptotic",
                DriftMode::ExactQuadrature => "exact_quadrature",
            };
            for s in samples {
                text.push_str(&format!(
                    "{{\"sample_id\":{},\"t\":{},\"window\":[{},{}],\"drift_mode\":\"{}\"",
                    s.sample_id,
                    fmt_f64(*t),
                    fmt_f64(window[0]),
                    fmt_f64(window[1]),
                    mode,
                ));
                text.push_str(",\"points\":[");
                for (i, p) in s.points.iter().enumerate() {
                    if i > 0 {
                        text.push(',');
                    }
                    text.push_str(&format!(
                        "{{\"initial\":[{},{}],\"re_m\":{},\"im_m\":{}}}",
                        fmt_f64(p.initial[0]),
                        fmt_f64(p.initial[1]),
                        fmt_f64(p.m[0]),
                        fmt_f64(p.m[1]),
                    ));
                }
                text.push_str("]}\n");
            }
        }
        self.write_bytes("samples.ndjson", text.as_bytes())
    }

    /// Writes manifest.json (always the last file) and returns the out dir.
    pub fn finish(
        mut self,
        config_echo: serde_json::Value,
        master_seed: u64,
    ) -> Result<PathBuf> {
        self.phase("manifest");
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command.clone(),
            config: config_echo,
            master_seed,
            outputs: self.digests.clone(),
            wall_clock_secs: self.wall.clone(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(self.dir)
    }
}

#[derive(Serialize)]
struct RunManifest {
    tool_version: String,
    command: String,
    config: serde_json::Value,
    master_seed: u64,
    outputs: BTreeMap<String, String>,
    wall_clock_secs: BTreeMap<String, f64>,
}

/// Deterministic results envelope (no wall-clock).
#[derive(Serialize)]
pub struct Results<T: Serialize> {
    pub tool_version: &'static str,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    /// Calibrated constants the report is compared against.
    pub constants: serde_json::Value,
    pub report: T,
}

impl<T: Serialize> Results<T> {
    pub fn new(
        command: &str,
        seed: u64,
        config: serde_json::Value,
        constants: serde_json::Value,
        report: T,
    ) -> Self {
        Results {
            tool_version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed,
            config,
            constants,
            report,
        }
    }
}

/// A single-polyline SVG with the viewBox fitted to the data (y up).
pub fn polyline_svg(points: &[(f64, f64)]) -> String {
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        x0 = 0.0;
        x1 = 1.0;
        y0 = 0.0;
        y1 = 1.0;
    }
    let w = (x1 - x0).max(1e-9);
    let h = (y1 - y0).max(w * 0.05);
    let margin = 0.02 * w.max(h);
    let view = format!(
        "{:.6} {:.6} {:.6} {:.6}",
        x0 - margin,
        -y1 - margin,
        w + 2.0 * margin,
        h + 2.0 * margin
    );
    let mut pts = String::new();
    for &(x, y) in points {
        pts.push_str(&format!("{x:.6},{:.6} ", -y));
    }
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{view}\">\n  \
         <polyline fill=\"none\" stroke=\"#000\" stroke-width=\"{:.6}\" points=\"{}\"/>\n</svg>\n",
        0.002 * w.max(h),
        pts.trim_end()
    )
}

/// CSV of (x, re, im) rows at 17 significant digits.
pub fn xy_csv(header: &str, rows: &[(f64, f64, f64)]) -> String {
    let mut text = String::from(header);
    text.push('\n');
    for &(a, b, c) in rows {
        text.push_str(&format!("{},{},{}\n", fmt_f64(a), fmt_f64(b), fmt_f64(c)));
    }
    text
}
