//! Adaptive Gauss-Kronrod quadrature for the slit-map integrals.
//!
//! These routines are the independent oracle layer: they evaluate the
//! per-unit-time drift, the squared-displacement integral and the vertical
//! increment integral numerically, with an analytic tail beyond the
//! truncation taken from the `-1/(2w)` Laurent term (plus the next order).

use super::{increment_kernel, ConformalError};
use crate::Complex;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Whether the analytic tail beyond `[-X, X]` is added to the quadrature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMode {
    None,
    Series,
}

/// Truncation and tolerance for the x-integrals.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct QuadratureSpec {
    /// Truncation `X` of the integral to `[-X, X]`.
    pub half_width: f64,
    /// Target relative error.
    pub rel_tol: f64,
    /// Analytic tail correction beyond the truncation.
    pub tail_mode: TailMode,
}

impl QuadratureSpec {
    pub fn new(half_width: f64, rel_tol: f64, tail_mode: TailMode) -> Result<Self, ConformalError> {
        let spec = Self { half_width, rel_tol, tail_mode };
        spec.check()?;
        Ok(spec)
    }

    pub(crate) fn check(&self) -> Result<(), ConformalError> {
        if !(self.half_width.is_finite() && self.rel_tol.is_finite()) {
            return Err(ConformalError::InvalidSpec("non-finite field".into()));
        }
        if self.half_width < 2.0 {
            return Err(ConformalError::InvalidSpec(format!(
                "half_width must be >= 2 (got {})",
                self.half_width
            )));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(ConformalError::InvalidSpec(format!(
                "rel_tol must lie in (0, 1) (got {})",
                self.rel_tol
            )));
        }
        Ok(())
    }

    /// Series tails are expansions in `|z| / X`; refuse truncations that sit
    /// inside the feature region of the integrand.
    fn check_tail_reach(&self, scale: f64) -> Result<(), ConformalError> {
        if self.tail_mode == TailMode::Series && self.half_width < 2.0 * (scale + 2.0) {
            return Err(ConformalError::InvalidSpec(format!(
                "half_width {} too small for a series tail at scale {scale}",
                self.half_width
            )));
        }
        Ok(())
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { half_width: 1e6, rel_tol: 1e-9, tail_mode: TailMode::Series }
    }
}

// Gauss 7 / Kronrod 15 nodes and weights.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        scaled = scaled.max(50.0 * f64::EPSILON * res_abs);
    }
    scaled
}

fn gk15<F: Fn(f64) -> Complex>(f: &F, a: f64, b: f64) -> (Complex, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);

    let mut res_g = f_center * WG[3];
    let mut res_k = f_center * WGK[7];
    let mut res_abs = f_center.norm() * WGK[7];
    let mut lo_vals = [Complex::new(0.0, 0.0); 7];
    let mut hi_vals = [Complex::new(0.0, 0.0); 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        lo_vals[j] = f1;
        hi_vals[j] = f2;
        res_k += (f1 + f2) * WGK[j];
        res_abs += (f1.norm() + f2.norm()) * WGK[j];
        if j % 2 == 1 {
            res_g += (f1 + f2) * WG[j / 2];
        }
    }
    let mean = res_k * 0.5;
    let mut res_asc = (f_center - mean).norm() * WGK[7];
    for j in 0..7 {
        res_asc += ((lo_vals[j] - mean).norm() + (hi_vals[j] - mean).norm()) * WGK[j];
    }
    let res_k = res_k * half;
    let res_g = res_g * half;
    let err = rescale_error((res_k - res_g).norm(), res_abs * half.abs(), res_asc * half.abs());
    (res_k, err)
}

struct Panel {
    err: f64,
    a: f64,
    b: f64,
    val: Complex,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

const MAX_PANELS: usize = 4000;

/// Adaptive bisection over an initial edge list until the summed error
/// estimate drops below `rel_tol` relative to the accumulated value.
pub(crate) fn integrate<F: Fn(f64) -> Complex>(
    f: F,
    edges: &[f64],
    rel_tol: f64,
) -> Result<(Complex, f64), ConformalError> {
    let mut heap = BinaryHeap::with_capacity(64);
    let mut total_err = 0.0;
    for pair in edges.windows(2) {
        let (val, err) = gk15(&f, pair[0], pair[1]);
        total_err += err;
        heap.push(Panel { err, a: pair[0], b: pair[1], val });
    }
    let span = edges[edges.len() - 1] - edges[0];
    let tolerance_met = |sum: Complex, err: f64| err <= rel_tol * sum.norm().max(f64::MIN_POSITIVE);

    let mut total: Complex = heap.iter().map(|p| p.val).sum();
    while !tolerance_met(total, total_err) && heap.len() < MAX_PANELS {
        let worst = heap.pop().expect("heap cannot be empty");
        if (worst.b - worst.a).abs() < 1e-15 * span.abs() {
            // Cannot refine further in f64; put it back and give up.
            heap.push(worst);
            break;
        }
        let mid = 0.5 * (worst.a + worst.b);
        let (v1, e1) = gk15(&f, worst.a, mid);
        let (v2, e2) = gk15(&f, mid, worst.b);
        total_err += e1 + e2 - worst.err;
        heap.push(Panel { err: e1, a: worst.a, b: mid, val: v1 });
        heap.push(Panel { err: e2, a: mid, b: worst.b, val: v2 });
        total = heap.iter().map(|p| p.val).sum();
    }
    if tolerance_met(total, total_err) {
        Ok((total, total_err))
    } else {
        Err(ConformalError::ToleranceNotReached {
            requested: rel_tol,
            achieved: total_err / total.norm().max(f64::MIN_POSITIVE),
        })
    }
}

/// Initial edges: a core panel of width `2 * halfspan` around the feature at
/// `center`, then geometric fan-out to `+-x_max`, with extra breaks at
/// `center +- 1` for the square-root kinks boundary points produce.
fn panel_edges(center: f64, halfspan: f64, x_max: f64) -> Vec<f64> {
    let mut edges = vec![-x_max, x_max];
    let mut push = |e: f64| {
        if e > -x_max && e < x_max {
            edges.push(e);
        }
    };
    push(center);
    push(center - 1.0);
    push(center + 1.0);
    let mut h = halfspan;
    while center - h > -x_max || center + h < x_max {
        push(center - h);
        push(center + h);
        h *= 2.0;
        if h > 4.0 * x_max.abs().max(1.0) {
            break;
        }
    }
    edges.sort_unstable_by(f64::total_cmp);
    edges.dedup();
    // Drop slivers that would only waste panels.
    let span = 2.0 * x_max;
    let mut out = Vec::with_capacity(edges.len());
    for e in edges {
        match out.last() {
            Some(&last) if e - last < 1e-12 * span => {}
            _ => out.push(e),
        }
    }
    if *out.last().unwrap() < x_max {
        out.push(x_max);
    }
    out
}

/// Tail of `int (phi_x(z) - z) dx` over `|x| > X`, from the Laurent terms
/// `-1/(2w) - 1/(8 w^3)`:
/// `ln((X+z)/(X-z))/2 + [(X-z)^-2 - (X+z)^-2]/16`.
fn drift_series_tail(z: Complex, x: f64) -> Complex {
    let plus = x + z;
    let minus = x - z;
    (plus / minus).ln() * 0.5 + (minus.powi(-2) - plus.powi(-2)) / 16.0
}

/// Tail of `int |phi_x(iy) - iy|^2 dx` over `|x| > X` from the same terms:
/// the integrand expands to `1/(4(x^2+y^2)) + (x^2-y^2)/(8(x^2+y^2)^3)`.
fn squared_displacement_tail(y: f64, x: f64) -> f64 {
    let at = (y / x).atan();
    let q = x * x + y * y;
    let i1 = at / y;
    let i2 = at / (2.0 * y.powi(3)) - x / (2.0 * y * y * q);
    let i3 = 3.0 * at / (8.0 * y.powi(5)) - x / (4.0 * y * y * q * q) - 3.0 * x / (8.0 * y.powi(4) * q);
    2.0 * (0.25 * i1 + 0.125 * (i2 - 2.0 * y * y * i3))
}

/// Per-unit-time drift `int_{-X}^{X} (phi_x(z) - z) dx`, plus the analytic
/// tail when requested. Converges to `i pi / 2` as the window grows.
pub fn drift_integral(z: Complex, spec: &QuadratureSpec) -> Result<Complex, ConformalError> {
    spec.check()?;
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(ConformalError::NonFinite);
    }
    if z.im <= 0.0 {
        return Err(ConformalError::NotInterior { im: z.im });
    }
    spec.check_tail_reach(z.norm())?;
    let edges = panel_edges(z.re, 2.0 + z.im, spec.half_width);
    let (mut val, _err) = integrate(|x| increment_kernel(z - x), &edges, spec.rel_tol)?;
    if spec.tail_mode == TailMode::Series {
        val += drift_series_tail(z, spec.half_width);
    }
    Ok(val)
}

/// `int_{-inf}^{inf} |phi_x(iy) - iy|^2 dx` by adaptive quadrature with a
/// series tail; decays like `pi/(4y) - pi/(32 y^3)` for tall points.
pub fn squared_displacement_integral(y: f64, spec: &QuadratureSpec) -> Result<f64, ConformalError> {
    spec.check()?;
    if !y.is_finite() {
        return Err(ConformalError::NonFinite);
    }
    if y <= 0.0 {
        return Err(ConformalError::NotInterior { im: y });
    }
    spec.check_tail_reach(y)?;
    let edges = panel_edges(0.0, 2.0 + y, spec.half_width);
    let f = |x: f64| Complex::new(increment_kernel(Complex::new(-x, y)).norm_sqr(), 0.0);
    let (val, _err) = integrate(f, &edges, spec.rel_tol)?;
    let mut out = val.re;
    if spec.tail_mode == TailMode::Series {
        out += squared_displacement_tail(y, spec.half_width);
    }
    Ok(out)
}

/// `int Delta(zeta, x) dx`: the expected vertical speed of a point at height
/// `zeta`. Equals `pi / 2` independently of the height.
pub fn delta_integral(zeta: f64, spec: &QuadratureSpec) -> Result<f64, ConformalError> {
    spec.check()?;
    if !zeta.is_finite() {
        return Err(ConformalError::NonFinite);
    }
    if zeta < 0.0 {
        return Err(ConformalError::NegativeHeight { zeta });
    }
    spec.check_tail_reach(zeta)?;
    let edges = panel_edges(0.0, 2.0 + zeta, spec.half_width);
    let f = |x: f64| Complex::new(increment_kernel(Complex::new(-x, zeta)).im, 0.0);
    let (val, _err) = integrate(f, &edges, spec.rel_tol)?;
    let mut out = val.re;
    if spec.tail_mode == TailMode::Series {
        out += drift_series_tail(Complex::new(0.0, zeta), spec.half_width).im;
    }
    Ok(out)
}
