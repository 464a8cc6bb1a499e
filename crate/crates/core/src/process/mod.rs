//! Poisson arrival streams and the event-driven composition engine.
//!
//! An [`EventStream`] is the restriction of a unit-intensity Poisson point
//! process on `R x R+` to a window `[window_lo, window_hi] x [0, horizon]`,
//! materialized in arrival-time order. Streams are a pure function of
//! `(seed, stream_id, window, horizon)`: the per-stream RNG is ChaCha8 keyed
//! by the seed with the stream id as the counter stream, so samples can be
//! generated on any number of threads with bit-identical results.

mod evolve;

pub use evolve::{evolve, fluctuation, render_forward, EvolveRun, TrackedPoint};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProcessError {
    #[error("invalid window [{lo}, {hi}]")]
    InvalidWindow { lo: f64, hi: f64 },
    #[error("invalid horizon {horizon}")]
    InvalidHorizon { horizon: f64 },
    #[error("expected arrival count {expected:.3e} exceeds the memory budget {budget:.3e}")]
    CapacityExceeded { expected: f64, budget: f64 },
    #[error("tracked point ({re}, {im}) lies outside the closed upper half-plane")]
    PointOutsideDomain { re: f64, im: f64 },
    #[error("bad checkpoints: {0}")]
    BadCheckpoints(String),
    #[error("window half-width {window} is below 2t = {min} at t = {t}")]
    WindowTooSmall { window: f64, t: f64, min: f64 },
    #[error("sub-window [{lo}, {hi}] is not contained in the stream window")]
    NotSubWindow { lo: f64, hi: f64 },
}

/// One Poisson point: a position on the line and an arrival time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub x: f64,
    pub t: f64,
}

/// Time-ordered arrivals on `[window_lo, window_hi] x [0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventStream {
    pub window_lo: f64,
    pub window_hi: f64,
    pub horizon: f64,
    pub arrivals: Vec<Arrival>,
    pub seed: u64,
    pub stream_id: u64,
}

/// Hard cap on the expected arrival count of a single stream.
pub const MAX_EXPECTED_ARRIVALS: f64 = (1u64 << 26) as f64;

/// Samples the arrivals in `[window_lo, window_hi] x [0, horizon]`.
///
/// The count is Poisson with mean `area`; times are the sorted order
/// statistics of that many uniforms on `[0, horizon]`, positions i.i.d.
/// uniform on the window. Identical `(seed, stream_id)` reproduce the stream
/// bit for bit. A zero-area window (including `horizon = 0`) yields an empty
/// stream.
pub fn sample_arrivals(
    window_lo: f64,
    window_hi: f64,
    horizon: f64,
    seed: u64,
    stream_id: u64,
) -> Result<EventStream, ProcessError> {
    if !(window_lo.is_finite() && window_hi.is_finite()) || window_lo > window_hi {
        return Err(ProcessError::InvalidWindow { lo: window_lo, hi: window_hi });
    }
    if !horizon.is_finite() || horizon < 0.0 {
        return Err(ProcessError::InvalidHorizon { horizon });
    }
    let width = window_hi - window_lo;
    let area = width * horizon;
    if area > MAX_EXPECTED_ARRIVALS {
        return Err(ProcessError::CapacityExceeded { expected: area, budget: MAX_EXPECTED_ARRIVALS });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    let count = if area == 0.0 {
        0
    } else {
        Poisson::new(area).expect("positive area").sample(&mut rng) as usize
    };
    let mut arrivals = Vec::with_capacity(count);
    for _ in 0..count {
        let t = rng.gen::<f64>() * horizon;
        let x = window_lo + rng.gen::<f64>() * width;
        arrivals.push(Arrival { x, t });
    }
    arrivals.sort_unstable_by(|a, b| a.t.total_cmp(&b.t).then_with(|| a.x.total_cmp(&b.x)));
    Ok(EventStream { window_lo, window_hi, horizon, arrivals, seed, stream_id })
}

impl EventStream {
    /// Restriction to a sub-window: the same realization with arrivals
    /// outside `[lo, hi]` dropped. This is the coupling used to measure the
    /// window-truncation error on common randomness.
    pub fn restrict(&self, lo: f64, hi: f64) -> Result<EventStream, ProcessError> {
        if lo < self.window_lo || hi > self.window_hi || lo > hi {
            return Err(ProcessError::NotSubWindow { lo, hi });
        }
        Ok(EventStream {
            window_lo: lo,
            window_hi: hi,
            horizon: self.horizon,
            arrivals: self.arrivals.iter().copied().filter(|a| a.x >= lo && a.x <= hi).collect(),
            seed: self.seed,
            stream_id: self.stream_id,
        })
    }

    pub fn area(&self) -> f64 {
        (self.window_hi - self.window_lo) * self.horizon
    }
}

/// Which deterministic drift is subtracted to extract the fluctuation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftMode {
    /// Subtract the infinite-window drift `i pi t / 2`. Cheap; carries a
    /// window-truncation bias of order `t/m` in mean square.
    Asymptotic,
    /// Accumulate the exact finite-window Doob compensator between events.
    /// The resulting fluctuation has mean exactly zero.
    ExactQuadrature,
}

impl std::str::FromStr for DriftMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "asymptotic" => Ok(DriftMode::Asymptotic),
            "exact" | "exact_quadrature" => Ok(DriftMode::ExactQuadrature),
            other => Err(format!("unknown drift mode `{other}` (use asymptotic | exact)")),
        }
    }
}

/// Evaluation grid for field maxima and profile renders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub spacing: f64,
    /// Height above the real axis at which the grid is tracked.
    pub height: f64,
}

impl GridSpec {
    pub fn points(&self) -> Result<Vec<f64>, ProcessError> {
        if !(self.spacing > 0.0) || self.hi < self.lo || self.height < 0.0 {
            return Err(ProcessError::BadCheckpoints(format!(
                "bad grid {}..{} step {} height {}",
                self.lo, self.hi, self.spacing, self.height
            )));
        }
        let mut xs = Vec::new();
        let n = ((self.hi - self.lo) / self.spacing).floor() as usize;
        for j in 0..=n {
            xs.push(self.lo + j as f64 * self.spacing);
        }
        if self.hi - xs[xs.len() - 1] > 1e-9 * self.spacing {
            xs.push(self.hi);
        }
        Ok(xs)
    }
}

/// Default window half-width for a horizon `t`: wide enough that the
/// truncation bias is negligible at desk scale while keeping the event count
/// close to `16 t^2 log^2 t`.
pub fn auto_window(t: f64) -> f64 {
    (8.0 * t * (2.0 + t).ln().powi(2)).max(64.0)
}

/// Configuration of one Monte Carlo run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    /// Horizon.
    pub t: f64,
    /// Explicit window half-width; `None` selects [`auto_window`].
    pub window_halfwidth: Option<f64>,
    /// Extra tracked offsets `b` on the real axis (covariance pairs).
    #[serde(default)]
    pub extra_points: Vec<f64>,
    /// Optional evaluation grid.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    pub drift_mode: DriftMode,
    pub master_seed: u64,
    pub n_samples: usize,
    /// Keep per-sample field records for dumping.
    #[serde(default)]
    pub collect_samples: bool,
}

impl SimConfig {
    pub fn new(t: f64, master_seed: u64, n_samples: usize) -> Self {
        Self {
            t,
            window_halfwidth: None,
            extra_points: Vec::new(),
            grid: None,
            drift_mode: DriftMode::Asymptotic,
            master_seed,
            n_samples,
            collect_samples: false,
        }
    }

    pub fn with_t(&self, t: f64) -> Self {
        let mut cfg = self.clone();
        cfg.t = t;
        cfg
    }

    /// Effective window half-width at horizon `t`; explicit values must be
    /// at least `2t`.
    pub fn window_for(&self, t: f64) -> Result<f64, ProcessError> {
        match self.window_halfwidth {
            None => Ok(auto_window(t)),
            Some(w) if w >= 2.0 * t => Ok(w),
            Some(w) => Err(ProcessError::WindowTooSmall { window: w, t, min: 2.0 * t }),
        }
    }
}

/// One tracked point of one sample, as written to the optional dump.
#[derive(Debug, Clone, Serialize)]
pub struct PointRecord {
    pub initial: [f64; 2],
    pub m: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deriv: Option<[f64; 2]>,
}

/// Per-sample record of the fluctuation field.
#[derive(Debug, Clone, Serialize)]
pub struct FieldSample {
    pub sample_id: u64,
    pub points: Vec<PointRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_im_over_grid: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub im_f_at_0: Option<f64>,
}
