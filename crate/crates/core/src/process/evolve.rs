//! The composition engine: evolves tracked points through an event stream
//! under the backward process, and renders the forward aggregate.

use super::{DriftMode, EventStream, ProcessError};
use crate::conformal::{apply_kernel, drift_closed_kernel};
use crate::Complex;
use std::f64::consts::FRAC_PI_2;

/// Upward nudge applied when a point sits exactly on an arrival's base.
const BRANCH_NUDGE: f64 = 1e-12;

/// Evolving state of one initial point under the backward process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackedPoint {
    /// The initial point `z`.
    pub initial: Complex,
    /// Current value `F_s(z)`.
    pub value: Complex,
    /// Chain-rule derivative `F_s'(z)`; tracked only when `Im z > 0`.
    pub deriv: Complex,
    /// Accumulated Doob drift (exact mode) or `i pi s / 2` (asymptotic).
    pub compensator: Complex,
    /// Time up to which the compensator has been accumulated.
    pub last_time: f64,
}

impl TrackedPoint {
    pub fn new(z: Complex) -> Self {
        // Normalize -0.0 heights so downstream branch logic sees +0.0.
        let z = Complex::new(z.re, z.im + 0.0);
        TrackedPoint {
            initial: z,
            value: z,
            deriv: Complex::new(1.0, 0.0),
            compensator: Complex::new(0.0, 0.0),
            last_time: 0.0,
        }
    }

    pub fn at(re: f64, im: f64) -> Self {
        Self::new(Complex::new(re, im))
    }
}

/// Snapshots of all tracked points at each requested checkpoint, plus
/// diagnostics.
#[derive(Debug, Clone)]
pub struct EvolveRun {
    pub snapshots: Vec<Vec<TrackedPoint>>,
    /// Number of exact base-point collisions resolved by an upward nudge.
    pub branch_nudges: u64,
}

/// Processes arrivals in time order, applying the slit map at each event to
/// every tracked point, accumulating chain-rule derivatives and (in exact
/// mode) the piecewise-constant Doob compensator over the stream window.
///
/// Cost is one kernel evaluation per (arrival, point) pair.
pub fn evolve(
    stream: &EventStream,
    points: &[TrackedPoint],
    drift_mode: DriftMode,
    checkpoints: &[f64],
) -> Result<EvolveRun, ProcessError> {
    let mut prev = 0.0;
    for &c in checkpoints {
        if !c.is_finite() || c < prev {
            return Err(ProcessError::BadCheckpoints(format!(
                "checkpoints must be ascending and nonnegative (got {c} after {prev})"
            )));
        }
        if c > stream.horizon {
            return Err(ProcessError::BadCheckpoints(format!(
                "checkpoint {c} beyond horizon {}",
                stream.horizon
            )));
        }
        prev = c;
    }
    for p in points {
        if !(p.value.re.is_finite() && p.value.im.is_finite()) || p.value.im < 0.0 {
            return Err(ProcessError::PointOutsideDomain { re: p.value.re, im: p.value.im });
        }
    }

    let mut state: Vec<TrackedPoint> = points.to_vec();
    let track_deriv: Vec<bool> = points.iter().map(|p| p.initial.im > 0.0).collect();
    let (lo, hi) = (stream.window_lo, stream.window_hi);
    let exact = drift_mode == DriftMode::ExactQuadrature;
    let mut nudges = 0u64;
    let mut snapshots = Vec::with_capacity(checkpoints.len());
    let mut k = 0usize;

    for &cp in checkpoints {
        while k < stream.arrivals.len() && stream.arrivals[k].t <= cp {
            let arrival = stream.arrivals[k];
            for (p, &with_deriv) in state.iter_mut().zip(&track_deriv) {
                if exact {
                    let dt = arrival.t - p.last_time;
                    if dt > 0.0 {
                        p.compensator += drift_closed_kernel(p.value, lo, hi) * dt;
                    }
                    p.last_time = arrival.t;
                }
                if p.value.im == 0.0 && p.value.re == arrival.x {
                    p.value.im = BRANCH_NUDGE;
                    nudges += 1;
                }
                let w = p.value - arrival.x;
                let (inc, s) = apply_kernel(w);
                if with_deriv {
                    p.deriv *= w / s;
                }
                p.value += inc;
            }
            k += 1;
        }
        for p in state.iter_mut() {
            if exact {
                let dt = cp - p.last_time;
                if dt > 0.0 {
                    p.compensator += drift_closed_kernel(p.value, lo, hi) * dt;
                }
            } else {
                p.compensator = Complex::new(0.0, FRAC_PI_2 * cp);
            }
            p.last_time = cp;
        }
        snapshots.push(state.clone());
    }
    Ok(EvolveRun { snapshots, branch_nudges: nudges })
}

/// The fluctuation `M_s(z)` of an evolved point: the value minus the initial
/// point minus the deterministic drift of the chosen mode.
pub fn fluctuation(point: &TrackedPoint, at_time: f64, drift_mode: DriftMode) -> Complex {
    match drift_mode {
        DriftMode::Asymptotic => {
            point.value - point.initial - Complex::new(0.0, FRAC_PI_2 * at_time)
        }
        DriftMode::ExactQuadrature => point.value - point.initial - point.compensator,
    }
}

/// Image of a real grid under the forward process at `at_time`: arrivals up
/// to that time composed earliest-outermost. This is the aggregate boundary
/// polyline used for pictures.
pub fn render_forward(
    stream: &EventStream,
    grid: &[f64],
    at_time: f64,
) -> Result<Vec<Complex>, ProcessError> {
    if !at_time.is_finite() || at_time < 0.0 || at_time > stream.horizon {
        return Err(ProcessError::BadCheckpoints(format!(
            "render time {at_time} outside [0, {}]",
            stream.horizon
        )));
    }
    let upto = stream.arrivals.partition_point(|a| a.t <= at_time);
    let mut out = Vec::with_capacity(grid.len());
    for &u in grid {
        let mut v = Complex::new(u, 0.0);
        for arrival in stream.arrivals[..upto].iter().rev() {
            if v.im == 0.0 && v.re == arrival.x {
                v.im = BRANCH_NUDGE;
            }
            v += apply_kernel(v - arrival.x).0;
        }
        out.push(v);
    }
    Ok(out)
}
