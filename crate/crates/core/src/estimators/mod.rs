//! Seeded, parallel Monte Carlo drivers for the quantitative laws of the
//! fluctuation field.
//!
//! Every estimator is a pure function of its configuration: sample `i` of
//! phase `p` always draws the stream `(master_seed, p << 40 | i)`, per-sample
//! work runs on the ambient rayon pool, and aggregation happens in canonical
//! sample order with pairwise summation. Serial and parallel runs therefore
//! produce bit-identical results.

pub mod stats;

use crate::conformal::ConformalError;
use crate::process::{
    evolve, fluctuation, sample_arrivals, DriftMode, FieldSample, PointRecord, ProcessError,
    SimConfig, TrackedPoint,
};
use crate::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use stats::{centered_products, mean_stderr, pairwise_sum, sample_sd, SlopeFit};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EstimatorError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("insufficient samples: stderr {stderr:.3e} exceeds 20% of estimate {estimate:.3e}")]
    InsufficientSamples { stderr: f64, estimate: f64 },
    #[error("singular design: {0}")]
    SingularDesign(String),
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
}

/// A Monte Carlo point estimate with its sampling uncertainty.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateResult {
    pub estimate: f64,
    pub stderr: f64,
    pub n: usize,
    /// `estimate +- 1.96 stderr`.
    pub ci95: [f64; 2],
    /// Digest of the generating configuration.
    pub config_echo: String,
}

impl EstimateResult {
    fn new(estimate: f64, stderr: f64, n: usize, digest: &str) -> Self {
        EstimateResult {
            estimate,
            stderr,
            n,
            ci95: [estimate - 1.96 * stderr, estimate + 1.96 * stderr],
            config_echo: digest.to_string(),
        }
    }

    fn from_samples(xs: &[f64], digest: &str) -> Self {
        let (m, se) = mean_stderr(xs);
        Self::new(m, se, xs.len(), digest)
    }
}

/// Short digest of a configuration, echoed into every estimate.
pub fn config_digest(cfg: &SimConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    let hash = Sha256::digest(json.as_bytes());
    hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

const PHASE_SHIFT: u32 = 40;

fn stream_id(phase: usize, sample: u64) -> u64 {
    debug_assert!(sample < 1 << PHASE_SHIFT);
    ((phase as u64) << PHASE_SHIFT) | sample
}

/// Runs `n` independent samples on the ambient rayon pool, preserving sample
/// order in the output.
fn run_par<T: Send, F>(n: usize, f: F) -> Result<Vec<T>, EstimatorError>
where
    F: Fn(u64) -> Result<T, EstimatorError> + Sync + Send,
{
    let results: Vec<Result<T, EstimatorError>> =
        (0..n as u64).into_par_iter().map(f).collect();
    results.into_iter().collect()
}

fn evolve_to_horizon(
    seed: u64,
    sid: u64,
    lo: f64,
    hi: f64,
    t: f64,
    points: &[TrackedPoint],
    mode: DriftMode,
) -> Result<Vec<TrackedPoint>, EstimatorError> {
    let stream = sample_arrivals(lo, hi, t, seed, sid)?;
    let run = evolve(&stream, points, mode, &[t])?;
    Ok(run.snapshots.into_iter().next().expect("one checkpoint"))
}

fn field_sample(
    sample_id: u64,
    finals: &[TrackedPoint],
    t: f64,
    mode: DriftMode,
    with_deriv: bool,
    max_im: Option<f64>,
) -> FieldSample {
    let points = finals
        .iter()
        .map(|p| {
            let m = fluctuation(p, t, mode);
            PointRecord {
                initial: [p.initial.re, p.initial.im],
                m: [m.re, m.im],
                deriv: if with_deriv && p.initial.im > 0.0 {
                    Some([p.deriv.re, p.deriv.im])
                } else {
                    None
                },
            }
        })
        .collect();
    FieldSample {
        sample_id,
        points,
        max_im_over_grid: max_im,
        im_f_at_0: finals.first().map(|p| p.value.im),
    }
}

// ---------------------------------------------------------------------------
// Variance
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct VarianceRow {
    pub t: f64,
    pub window: f64,
    /// Monte Carlo mean of `|M_t(0)|^2`.
    pub result: EstimateResult,
    /// Centered companion `Var(Re M) + Var(Im M)` (removes the deterministic
    /// window bias of asymptotic mode).
    pub centered: f64,
    #[serde(skip)]
    pub samples: Option<Vec<FieldSample>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VarianceReport {
    pub drift_mode: DriftMode,
    pub rows: Vec<VarianceRow>,
    /// Weighted least-squares slope of the estimate against `ln t`.
    pub fit: SlopeFit,
}

/// Estimates `E |M_t(0)|^2` for each horizon and fits the growth against
/// `ln t`.
pub fn estimate_variance(
    t_list: &[f64],
    cfg: &SimConfig,
) -> Result<VarianceReport, EstimatorError> {
    check_t_list(t_list)?;
    if t_list.len() < 3 {
        return Err(EstimatorError::InvalidInput(format!(
            "need at least 3 horizons for the slope fit (got {})",
            t_list.len()
        )));
    }
    let mut rows = Vec::with_capacity(t_list.len());
    for (phase, &t) in t_list.iter().enumerate() {
        rows.push(variance_at(t, phase, cfg)?);
    }
    let fit = fit_log_slope(
        &rows
            .iter()
            .map(|r| (r.t, r.result.estimate, r.result.stderr))
            .collect::<Vec<_>>(),
    )?;
    Ok(VarianceReport { drift_mode: cfg.drift_mode, rows, fit })
}

fn variance_at(t: f64, phase: usize, cfg: &SimConfig) -> Result<VarianceRow, EstimatorError> {
    let m = cfg.window_for(t)?;
    let mode = cfg.drift_mode;
    let digest = config_digest(&cfg.with_t(t));
    let origin = [TrackedPoint::at(0.0, 0.0)];
    let out = run_par(cfg.n_samples, |i| {
        let finals =
            evolve_to_horizon(cfg.master_seed, stream_id(phase, i), -m, m, t, &origin, mode)?;
        let mv = fluctuation(&finals[0], t, mode);
        let sample = cfg
            .collect_samples
            .then(|| field_sample(i, &finals, t, mode, false, None));
        Ok((mv, sample))
    })?;
    let ms: Vec<Complex> = out.iter().map(|(mv, _)| *mv).collect();
    let sq: Vec<f64> = ms.iter().map(|mv| mv.norm_sqr()).collect();
    let result = EstimateResult::from_samples(&sq, &digest);
    if result.stderr > 0.2 * result.estimate.abs() {
        return Err(EstimatorError::InsufficientSamples {
            stderr: result.stderr,
            estimate: result.estimate,
        });
    }
    let re: Vec<f64> = ms.iter().map(|mv| mv.re).collect();
    let im: Vec<f64> = ms.iter().map(|mv| mv.im).collect();
    let centered = sample_sd(&re, stats::mean(&re)).powi(2) + sample_sd(&im, stats::mean(&im)).powi(2);
    let samples = cfg
        .collect_samples
        .then(|| out.into_iter().filter_map(|(_, s)| s).collect());
    Ok(VarianceRow { t, window: m, result, centered, samples })
}

// ---------------------------------------------------------------------------
// Covariance
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct CovarianceRow {
    pub b: f64,
    /// Sample covariance `Cov(Re M(0), Re M(b)) + Cov(Im M(0), Im M(b))`.
    pub result: EstimateResult,
    /// Reference profile `(pi/4) ln(t/b)` (positive part).
    pub profile: f64,
    pub ratio_to_profile: f64,
    /// Set when the stderr is large relative to the variance scale.
    pub low_precision: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CovarianceReport {
    pub t: f64,
    pub window: f64,
    pub drift_mode: DriftMode,
    /// All offsets share one realization per sample.
    pub common_randomness: bool,
    pub convention: String,
    pub rows: Vec<CovarianceRow>,
    #[serde(skip)]
    pub samples: Option<Vec<FieldSample>>,
}

/// Estimates `Cov(M_t(0), M_t(b))` for each offset on common randomness:
/// one stream with window `[-m, b_max + m]` covers all tracked points.
pub fn estimate_covariance(
    t: f64,
    b_list: &[f64],
    cfg: &SimConfig,
) -> Result<CovarianceReport, EstimatorError> {
    if b_list.is_empty() || b_list.iter().any(|&b| !(b > 0.0) || !b.is_finite()) {
        return Err(EstimatorError::InvalidInput(
            "offsets must be positive and finite".into(),
        ));
    }
    let m = cfg.window_for(t)?;
    let b_max = b_list.iter().cloned().fold(0.0, f64::max);
    let (lo, hi) = (-m, b_max + m);
    let mode = cfg.drift_mode;
    let digest = config_digest(&cfg.with_t(t));
    let mut points = vec![TrackedPoint::at(0.0, 0.0)];
    points.extend(b_list.iter().map(|&b| TrackedPoint::at(b, 0.0)));

    let out = run_par(cfg.n_samples, |i| {
        let finals =
            evolve_to_horizon(cfg.master_seed, stream_id(0, i), lo, hi, t, &points, mode)?;
        let ms: Vec<Complex> = finals.iter().map(|p| fluctuation(p, t, mode)).collect();
        let sample = cfg
            .collect_samples
            .then(|| field_sample(i, &finals, t, mode, false, None));
        Ok((ms, sample))
    })?;

    let n = out.len();
    let column = |j: usize| -> (Vec<f64>, Vec<f64>) {
        (
            out.iter().map(|(ms, _)| ms[j].re).collect(),
            out.iter().map(|(ms, _)| ms[j].im).collect(),
        )
    };
    let (re0, im0) = column(0);
    let scale = {
        let v_re = sample_sd(&re0, stats::mean(&re0)).powi(2);
        let v_im = sample_sd(&im0, stats::mean(&im0)).powi(2);
        v_re + v_im
    };
    let mut rows = Vec::with_capacity(b_list.len());
    for (j, &b) in b_list.iter().enumerate() {
        let (reb, imb) = column(j + 1);
        let mut products = centered_products(&re0, &reb);
        for (p, q) in products.iter_mut().zip(centered_products(&im0, &imb)) {
            *p += q;
        }
        let estimate = pairwise_sum(&products) / (n as f64 - 1.0);
        let pm = stats::mean(&products);
        let stderr = sample_sd(&products, pm) / (n as f64).sqrt();
        let profile = FRAC_PI_4 * (t / b).ln().max(0.0);
        rows.push(CovarianceRow {
            b,
            result: EstimateResult::new(estimate, stderr, n, &digest),
            profile,
            ratio_to_profile: if profile > 0.0 { estimate / profile } else { f64::NAN },
            low_precision: stderr > 0.2 * scale,
        });
    }
    let samples = cfg
        .collect_samples
        .then(|| out.into_iter().filter_map(|(_, s)| s).collect());
    Ok(CovarianceReport {
        t,
        window: m,
        drift_mode: mode,
        common_randomness: true,
        convention: "Cov(Re M(0), Re M(b)) + Cov(Im M(0), Im M(b)), n-1 normalization".into(),
        rows,
        samples,
    })
}

// ---------------------------------------------------------------------------
// Maximal fluctuation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct MaxFluctRow {
    pub t: f64,
    pub grid_points: usize,
    /// Exceedance threshold `beta ln t`.
    pub threshold: f64,
    /// Empirical `P(max_grid Im M_t > beta ln t)`.
    pub exceedance: EstimateResult,
    /// Grid maximum of `Im M_t` (a lower bound on the continuum maximum).
    pub max_mean: f64,
    pub max_stderr: f64,
    pub max_over_log_mean: f64,
    pub quantiles: MaxQuantiles,
    #[serde(skip)]
    pub samples: Option<Vec<FieldSample>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MaxQuantiles {
    pub q50: f64,
    pub q90: f64,
    pub q99: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MaxFluctReport {
    pub grid_spacing: f64,
    pub height: f64,
    pub beta: f64,
    pub drift_mode: DriftMode,
    pub rows: Vec<MaxFluctRow>,
}

const MAX_GRID_POINTS: usize = 1 << 20;

/// Tracks the grid `{0, h, 2h, ..., t}` at the given height and records the
/// per-sample maximum of `Im M_t`, its distribution, and the exceedance
/// probability of `beta ln t`.
pub fn estimate_max_fluctuation(
    t_list: &[f64],
    grid_spacing: f64,
    height: f64,
    beta: f64,
    cfg: &SimConfig,
) -> Result<MaxFluctReport, EstimatorError> {
    check_t_list(t_list)?;
    if !(grid_spacing > 0.0) {
        return Err(EstimatorError::InvalidInput("grid spacing must be positive".into()));
    }
    if height < 0.0 {
        return Err(EstimatorError::InvalidInput("height must be nonnegative".into()));
    }
    let mode = cfg.drift_mode;
    let mut rows = Vec::with_capacity(t_list.len());
    for (phase, &t) in t_list.iter().enumerate() {
        let grid = crate::process::GridSpec { lo: 0.0, hi: t, spacing: grid_spacing, height };
        let xs = grid.points()?;
        if xs.len() > MAX_GRID_POINTS {
            return Err(EstimatorError::InvalidInput(format!(
                "grid of {} points exceeds the budget of {MAX_GRID_POINTS}",
                xs.len()
            )));
        }
        let points: Vec<TrackedPoint> =
            xs.iter().map(|&x| TrackedPoint::at(x, height)).collect();
        let m = cfg.window_for(t)?;
        let (lo, hi) = (-m, t + m);
        let digest = config_digest(&cfg.with_t(t));
        let threshold = beta * t.ln();
        let out = run_par(cfg.n_samples, |i| {
            let finals =
                evolve_to_horizon(cfg.master_seed, stream_id(phase, i), lo, hi, t, &points, mode)?;
            let max_im = finals
                .iter()
                .map(|p| fluctuation(p, t, mode).im)
                .fold(f64::NEG_INFINITY, f64::max);
            let sample = cfg
                .collect_samples
                .then(|| field_sample(i, &finals, t, mode, false, Some(max_im)));
            Ok((max_im, sample))
        })?;
        let maxima: Vec<f64> = out.iter().map(|(mx, _)| *mx).collect();
        let hits: Vec<f64> =
            maxima.iter().map(|&mx| if mx > threshold { 1.0 } else { 0.0 }).collect();
        let (max_mean, max_stderr) = mean_stderr(&maxima);
        let mut sorted = maxima.clone();
        sorted.sort_unstable_by(f64::total_cmp);
        let q = |p: f64| sorted[((sorted.len() - 1) as f64 * p).round() as usize];
        rows.push(MaxFluctRow {
            t,
            grid_points: xs.len(),
            threshold,
            exceedance: EstimateResult::from_samples(&hits, &digest),
            max_mean,
            max_stderr,
            max_over_log_mean: max_mean / t.ln(),
            quantiles: MaxQuantiles { q50: q(0.5), q90: q(0.9), q99: q(0.99), max: sorted[sorted.len() - 1] },
            samples: cfg
                .collect_samples
                .then(|| out.into_iter().filter_map(|(_, s)| s).collect()),
        });
    }
    Ok(MaxFluctReport { grid_spacing, height, beta, drift_mode: mode, rows })
}

// ---------------------------------------------------------------------------
// Exponential moments
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ExpMomentRow {
    pub t: f64,
    /// Monte Carlo mean of `exp(alpha Im M_t(0))`.
    pub result: EstimateResult,
    /// `exp(pi/2 alpha^2 e^alpha) t^(alpha^2)`.
    pub bound: f64,
    pub ratio_to_bound: f64,
    pub high_stderr_warning: bool,
    /// Tail threshold `beta ln t` and the empirical exceedance.
    pub tail_threshold: f64,
    pub tail_prob: EstimateResult,
    /// `exp(pi beta^2 / 8 e^(beta/2)) t^(-beta^2/4)`.
    pub tail_bound: f64,
    #[serde(skip)]
    pub samples: Option<Vec<FieldSample>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpMomentReport {
    pub alpha: f64,
    pub beta: f64,
    pub drift_mode: DriftMode,
    pub rows: Vec<ExpMomentRow>,
}

/// Estimates `E[exp(alpha Im M_t(0))]` against its analytic bound and the
/// tail `P(Im M_t(0) > beta ln t)` against the Chernoff bound.
pub fn estimate_exp_moment(
    t_list: &[f64],
    alpha: f64,
    beta: f64,
    cfg: &SimConfig,
) -> Result<ExpMomentReport, EstimatorError> {
    check_t_list(t_list)?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(EstimatorError::InvalidInput(format!(
            "alpha must lie in (0, 1]; the exponential estimator is heavy-tailed beyond (got {alpha})"
        )));
    }
    if !(beta > 0.0) {
        return Err(EstimatorError::InvalidInput("beta must be positive".into()));
    }
    let mode = cfg.drift_mode;
    let mut rows = Vec::with_capacity(t_list.len());
    for (phase, &t) in t_list.iter().enumerate() {
        let m = cfg.window_for(t)?;
        let digest = config_digest(&cfg.with_t(t));
        let origin = [TrackedPoint::at(0.0, 0.0)];
        let out = run_par(cfg.n_samples, |i| {
            let finals =
                evolve_to_horizon(cfg.master_seed, stream_id(phase, i), -m, m, t, &origin, mode)?;
            let im = fluctuation(&finals[0], t, mode).im;
            let sample = cfg
                .collect_samples
                .then(|| field_sample(i, &finals, t, mode, false, None));
            Ok((im, sample))
        })?;
        let ims: Vec<f64> = out.iter().map(|(im, _)| *im).collect();
        let exps: Vec<f64> = ims.iter().map(|&im| (alpha * im).exp()).collect();
        let result = EstimateResult::from_samples(&exps, &digest);
        let bound = (FRAC_PI_2 * alpha * alpha * alpha.exp()).exp() * t.powf(alpha * alpha);
        let tail_threshold = beta * t.ln();
        let hits: Vec<f64> =
            ims.iter().map(|&im| if im > tail_threshold { 1.0 } else { 0.0 }).collect();
        let tail_bound =
            (std::f64::consts::PI * beta * beta / 8.0 * (beta / 2.0).exp()).exp()
                * t.powf(-beta * beta / 4.0);
        rows.push(ExpMomentRow {
            t,
            high_stderr_warning: result.stderr > 0.3 * result.estimate,
            ratio_to_bound: result.estimate / bound,
            bound,
            result,
            tail_threshold,
            tail_prob: EstimateResult::from_samples(&hits, &digest),
            tail_bound,
            samples: cfg
                .collect_samples
                .then(|| out.into_iter().filter_map(|(_, s)| s).collect()),
        });
    }
    Ok(ExpMomentReport { alpha, beta, drift_mode: mode, rows })
}

// ---------------------------------------------------------------------------
// Law-of-large-numbers tail
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct LlnRow {
    pub t: f64,
    /// Threshold `pi t / 2 - a sqrt(t)`.
    pub threshold: f64,
    /// Empirical `P(Im F_t(0) < threshold)`.
    pub prob: EstimateResult,
    #[serde(skip)]
    pub samples: Option<Vec<FieldSample>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LlnReport {
    pub a: f64,
    pub rows: Vec<LlnRow>,
}

/// Estimates the lower-deviation probability of the growth law,
/// `P(Im F_t(0) < pi t/2 - a sqrt(t))`.
pub fn estimate_lln_tail(
    t_list: &[f64],
    a: f64,
    cfg: &SimConfig,
) -> Result<LlnReport, EstimatorError> {
    check_t_list(t_list)?;
    if !(a > 0.0) {
        return Err(EstimatorError::InvalidInput("a must be positive".into()));
    }
    let mut rows = Vec::with_capacity(t_list.len());
    for (phase, &t) in t_list.iter().enumerate() {
        let m = cfg.window_for(t)?;
        let digest = config_digest(&cfg.with_t(t));
        let threshold = FRAC_PI_2 * t - a * t.sqrt();
        let origin = [TrackedPoint::at(0.0, 0.0)];
        let out = run_par(cfg.n_samples, |i| {
            let finals = evolve_to_horizon(
                cfg.master_seed,
                stream_id(phase, i),
                -m,
                m,
                t,
                &origin,
                cfg.drift_mode,
            )?;
            let im_f = finals[0].value.im;
            let sample = cfg
                .collect_samples
                .then(|| field_sample(i, &finals, t, cfg.drift_mode, false, None));
            Ok((im_f, sample))
        })?;
        let hits: Vec<f64> =
            out.iter().map(|(im, _)| if *im < threshold { 1.0 } else { 0.0 }).collect();
        rows.push(LlnRow {
            t,
            threshold,
            prob: EstimateResult::from_samples(&hits, &digest),
            samples: cfg
                .collect_samples
                .then(|| out.into_iter().filter_map(|(_, s)| s).collect()),
        });
    }
    Ok(LlnReport { a, rows })
}

// ---------------------------------------------------------------------------
// Derivative moment
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct DerivMomentRow {
    pub t: f64,
    /// Monte Carlo mean of `|F_t'(i ln t)|^2`.
    pub result: EstimateResult,
    #[serde(skip)]
    pub samples: Option<Vec<FieldSample>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivMomentReport {
    pub rows: Vec<DerivMomentRow>,
}

/// Estimates `E |F_t'(i ln t)|^2` by chain-rule derivative tracking.
pub fn estimate_derivative_moment(
    t_list: &[f64],
    cfg: &SimConfig,
) -> Result<DerivMomentReport, EstimatorError> {
    check_t_list(t_list)?;
    if t_list.iter().any(|&t| t < 3.0) {
        return Err(EstimatorError::InvalidInput(
            "derivative moment requires t >= 3 (so ln t > 1)".into(),
        ));
    }
    let mut rows = Vec::with_capacity(t_list.len());
    for (phase, &t) in t_list.iter().enumerate() {
        let m = cfg.window_for(t)?;
        let digest = config_digest(&cfg.with_t(t));
        let start = [TrackedPoint::at(0.0, t.ln())];
        let out = run_par(cfg.n_samples, |i| {
            let finals = evolve_to_horizon(
                cfg.master_seed,
                stream_id(phase, i),
                -m,
                m,
                t,
                &start,
                cfg.drift_mode,
            )?;
            let d2 = finals[0].deriv.norm_sqr();
            let sample = cfg
                .collect_samples
                .then(|| field_sample(i, &finals, t, cfg.drift_mode, true, None));
            Ok((d2, sample))
        })?;
        let d2s: Vec<f64> = out.iter().map(|(d, _)| *d).collect();
        rows.push(DerivMomentRow {
            t,
            result: EstimateResult::from_samples(&d2s, &digest),
            samples: cfg
                .collect_samples
                .then(|| out.into_iter().filter_map(|(_, s)| s).collect()),
        });
    }
    Ok(DerivMomentReport { rows })
}

// ---------------------------------------------------------------------------
// Window truncation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct TruncationReport {
    pub t: f64,
    pub m_small: f64,
    pub m_large: f64,
    /// Monte Carlo mean of `|M^(m_large) - M^(m_small)|^2` on coupled
    /// streams (the small window is the restriction of the large one).
    pub result: EstimateResult,
    /// Reference bound `10 t / m_small`.
    pub bound: f64,
}

/// Couples two windows on common randomness and measures the mean-square
/// fluctuation gap. Always runs in exact-compensator mode so the gap is the
/// martingale difference, not a drift artifact.
pub fn window_truncation_error(
    t: f64,
    m_small: f64,
    m_large: f64,
    cfg: &SimConfig,
) -> Result<TruncationReport, EstimatorError> {
    if !(t > 0.0) {
        return Err(EstimatorError::InvalidInput("t must be positive".into()));
    }
    if m_small < 2.0 * t || m_large < m_small {
        return Err(EstimatorError::InvalidInput(format!(
            "windows must satisfy m_large >= m_small >= 2t (got {m_small}, {m_large} at t={t})"
        )));
    }
    let digest = config_digest(&cfg.with_t(t));
    let origin = [TrackedPoint::at(0.0, 0.0)];
    let mode = DriftMode::ExactQuadrature;
    let gaps = run_par(cfg.n_samples, |i| {
        let large = sample_arrivals(-m_large, m_large, t, cfg.master_seed, stream_id(0, i))?;
        let small = large.restrict(-m_small, m_small)?;
        let run_l = evolve(&large, &origin, mode, &[t])?;
        let run_s = evolve(&small, &origin, mode, &[t])?;
        let m_l = fluctuation(&run_l.snapshots[0][0], t, mode);
        let m_s = fluctuation(&run_s.snapshots[0][0], t, mode);
        Ok((m_l - m_s).norm_sqr())
    })?;
    Ok(TruncationReport {
        t,
        m_small,
        m_large,
        result: EstimateResult::from_samples(&gaps, &digest),
        bound: 10.0 * t / m_small,
    })
}

// ---------------------------------------------------------------------------
// Distortion (Koebe) check
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct KoebeReport {
    pub n_maps: usize,
    pub pairs_per_map: usize,
    pub t: f64,
    /// Max of `|F'(w)| / |F'(z)|` over sampled pairs with `|w-z| < Im z / 2`.
    pub max_ratio: f64,
    pub mean_ratio: f64,
}

/// Samples random maps and random pairs `(z, w)` with `|w - z| < Im z / 2`,
/// and reports the worst derivative distortion ratio. Conformality bounds it
/// by 16.
pub fn koebe_check(n_maps: usize, cfg: &SimConfig) -> Result<KoebeReport, EstimatorError> {
    if n_maps == 0 {
        return Err(EstimatorError::InvalidInput("need at least one map".into()));
    }
    let t = cfg.t;
    let m = cfg.window_for(t)?;
    let pairs_per_map = (cfg.n_samples / n_maps).max(1);
    let ratios = run_par(n_maps, |map_id| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed ^ 0x9e37_79b9_7f4a_7c15);
        rng.set_stream(map_id);
        let mut points = Vec::with_capacity(2 * pairs_per_map);
        for _ in 0..pairs_per_map {
            let re = rng.gen::<f64>() * 40.0 - 20.0;
            let im = (rng.gen::<f64>() * (20.0f64 / 0.05).ln()).exp() * 0.05;
            let z = Complex::new(re, im);
            let radius = 0.5 * im * rng.gen::<f64>().sqrt();
            let angle = rng.gen::<f64>() * std::f64::consts::TAU;
            let w = z + Complex::from_polar(radius, angle);
            points.push(TrackedPoint::new(z));
            points.push(TrackedPoint::new(w));
        }
        let finals = evolve_to_horizon(
            cfg.master_seed,
            stream_id(0, map_id),
            -m,
            m,
            t,
            &points,
            DriftMode::Asymptotic,
        )?;
        let mut per_map = Vec::with_capacity(pairs_per_map);
        for pair in finals.chunks_exact(2) {
            per_map.push(pair[1].deriv.norm() / pair[0].deriv.norm());
        }
        Ok(per_map)
    })?;
    let flat: Vec<f64> = ratios.into_iter().flatten().collect();
    Ok(KoebeReport {
        n_maps,
        pairs_per_map,
        t,
        max_ratio: flat.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        mean_ratio: stats::mean(&flat),
    })
}

// ---------------------------------------------------------------------------
// Histogram
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct HistSeries {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub skewness: Option<f64>,
    pub skew_stderr: Option<f64>,
    pub kurtosis: Option<f64>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct HistogramReport {
    pub t: f64,
    pub n: usize,
    pub bins: usize,
    pub im: HistSeries,
    pub re: HistSeries,
}

/// Equal-width histograms of `Im M_t(0)` and `Re M_t(0)` with jackknifed
/// skewness. Descriptive output only.
pub fn histogram(t: f64, cfg: &SimConfig, bins: usize) -> Result<HistogramReport, EstimatorError> {
    if bins < 10 {
        return Err(EstimatorError::InvalidInput("need at least 10 bins".into()));
    }
    check_t_list(&[t])?;
    let m = cfg.window_for(t)?;
    let mode = cfg.drift_mode;
    let origin = [TrackedPoint::at(0.0, 0.0)];
    let ms = run_par(cfg.n_samples, |i| {
        let finals =
            evolve_to_horizon(cfg.master_seed, stream_id(0, i), -m, m, t, &origin, mode)?;
        Ok(fluctuation(&finals[0], t, mode))
    })?;
    let series = |xs: &[f64]| -> HistSeries {
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut counts = vec![0u64; bins];
        let degenerate = hi <= lo;
        if degenerate {
            counts[0] = xs.len() as u64;
        } else {
            let width = (hi - lo) / bins as f64;
            for &x in xs {
                let idx = (((x - lo) / width) as usize).min(bins - 1);
                counts[idx] += 1;
            }
        }
        let skew = skewness(xs, degenerate);
        HistSeries {
            lo,
            hi,
            counts,
            skewness: skew.map(|(s, _)| s),
            skew_stderr: skew.map(|(_, se)| se),
            kurtosis: stats::excess_kurtosis(xs),
            degenerate,
        }
    };
    let ims: Vec<f64> = ms.iter().map(|m| m.im).collect();
    let res: Vec<f64> = ms.iter().map(|m| m.re).collect();
    Ok(HistogramReport { t, n: ms.len(), bins, im: series(&ims), re: series(&res) })
}

fn skewness(xs: &[f64], degenerate: bool) -> Option<(f64, f64)> {
    if degenerate {
        None
    } else {
        stats::skewness_jackknife(xs)
    }
}

// ---------------------------------------------------------------------------
// Slope fit
// ---------------------------------------------------------------------------

/// Weighted least-squares fit of `(t, estimate, stderr)` triples against
/// `ln t`, with weights `1/stderr^2`.
pub fn fit_log_slope(points: &[(f64, f64, f64)]) -> Result<SlopeFit, EstimatorError> {
    if points.len() < 3 {
        return Err(EstimatorError::SingularDesign(format!(
            "need at least 3 points (got {})",
            points.len()
        )));
    }
    let mut ts: Vec<f64> = points.iter().map(|p| p.0).collect();
    ts.sort_unstable_by(f64::total_cmp);
    if ts.windows(2).any(|w| w[0] == w[1]) {
        return Err(EstimatorError::SingularDesign("duplicated abscissa t".into()));
    }
    if points.iter().any(|&(t, e, se)| !(t > 0.0) || !e.is_finite() || !(se > 0.0)) {
        return Err(EstimatorError::SingularDesign(
            "points need t > 0, finite estimates, stderr > 0".into(),
        ));
    }
    Ok(stats::weighted_log_fit(points))
}

fn check_t_list(t_list: &[f64]) -> Result<(), EstimatorError> {
    if t_list.is_empty() {
        return Err(EstimatorError::InvalidInput("empty horizon list".into()));
    }
    if t_list.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
        return Err(EstimatorError::InvalidInput("horizons must be positive and finite".into()));
    }
    if t_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EstimatorError::InvalidInput("horizons must be strictly ascending".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_log_slope_validations() {
        let line: Vec<(f64, f64, f64)> =
            [8.0f64, 16.0, 32.0].iter().map(|&t| (t, 0.7854 * t.ln() + 1.0, 1.0)).collect();
        let fit = fit_log_slope(&line).unwrap();
        assert!((fit.slope - 0.7854).abs() < 1e-12);

        assert!(matches!(
            fit_log_slope(&[(8.0, 1.0, 1.0), (8.0, 1.1, 1.0)]),
            Err(EstimatorError::SingularDesign(_))
        ));
        assert!(matches!(
            fit_log_slope(&[(8.0, 1.0, 1.0), (8.0, 1.1, 1.0), (16.0, 2.0, 1.0)]),
            Err(EstimatorError::SingularDesign(_))
        ));
    }

    #[test]
    fn variance_shrinks_with_horizon() {
        // t -> 0+: the fluctuation vanishes. The per-sample |M|^2 is heavy
        // tailed down here (a single nearby arrival dominates), so the
        // stderr gate needs a few thousand draws.
        let cfg = SimConfig::new(0.01, 5, 4000);
        let row = variance_at(0.01, 0, &cfg).unwrap();
        assert!(row.result.estimate < 0.05, "estimate {}", row.result.estimate);
    }

    #[test]
    fn stream_ids_do_not_collide_across_phases() {
        assert_ne!(stream_id(0, 7), stream_id(1, 7));
        assert_eq!(stream_id(2, 3) >> PHASE_SHIFT, 2);
    }

    #[test]
    fn alpha_cap_enforced() {
        let cfg = SimConfig::new(4.0, 1, 10);
        assert!(matches!(
            estimate_exp_moment(&[4.0], 1.5, 2.0, &cfg),
            Err(EstimatorError::InvalidInput(_))
        ));
    }

    #[test]
    fn truncation_window_validation() {
        let cfg = SimConfig::new(16.0, 1, 4);
        assert!(window_truncation_error(16.0, 8.0, 4096.0, &cfg).is_err());
        assert!(window_truncation_error(16.0, 64.0, 32.0, &cfg).is_err());
    }

    #[test]
    fn truncation_vanishes_for_equal_windows() {
        let cfg = SimConfig::new(4.0, 3, 20);
        let rep = window_truncation_error(4.0, 16.0, 16.0, &cfg).unwrap();
        assert_eq!(rep.result.estimate, 0.0);
        assert_eq!(rep.result.stderr, 0.0);
    }

    #[test]
    fn koebe_identity_map() {
        // Zero-area stream: the map is the identity, every ratio is 1.
        let mut cfg = SimConfig::new(0.0, 2, 64);
        cfg.window_halfwidth = Some(32.0);
        let rep = koebe_check(4, &cfg).unwrap();
        assert_eq!(rep.max_ratio, 1.0);
        assert_eq!(rep.mean_ratio, 1.0);
    }

    #[test]
    fn histogram_conserves_counts() {
        let cfg = SimConfig::new(2.0, 8, 300);
        let rep = histogram(2.0, &cfg, 12).unwrap();
        assert_eq!(rep.im.counts.iter().sum::<u64>(), 300);
        assert_eq!(rep.re.counts.iter().sum::<u64>(), 300);
        assert!(rep.im.skew_stderr.unwrap() > 0.0);
        assert!(!rep.im.degenerate);
    }
}
