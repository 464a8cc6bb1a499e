//! Slit-map kernel: the conformal map `phi_x(z) = x + sqrt((z-x)^2 - 1)` of
//! the upper half-plane minus a unit vertical slit at `x` back onto the
//! half-plane, its derivative, its vertical increment, and the deterministic
//! integrals built from it.
//!
//! All branch handling funnels through [`branch_sqrt`]: the root of
//! `w^2 - 1` with nonnegative imaginary part, tied down on the real axis so
//! that the root tracks `w` at infinity (its real part carries the sign of
//! `Re w`). Below `|w| = 2` the root is taken directly; above, it is
//! evaluated as `w * sqrt(1 - w^-2)` (principal root), which is both branch
//! correct and free of cancellation. The increment switches to a truncated
//! Laurent series beyond `|w| = 1e4`.

mod quadrature;

pub use quadrature::{
    delta_integral, drift_integral, squared_displacement_integral, QuadratureSpec, TailMode,
};

use crate::Complex;
use thiserror::Error;

/// Errors from kernel evaluations and quadrature.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConformalError {
    #[error("inputs must be finite")]
    NonFinite,
    #[error("z must lie in the closed upper half-plane (Im z = {im})")]
    LowerHalfPlane { im: f64 },
    #[error("z must lie strictly above the real axis (Im z = {im})")]
    NotInterior { im: f64 },
    #[error("z coincides with the slit base point x = {x}")]
    AtSlitBase { x: f64 },
    #[error("height must be nonnegative (zeta = {zeta})")]
    NegativeHeight { zeta: f64 },
    #[error("invalid quadrature spec: {0}")]
    InvalidSpec(String),
    #[error("quadrature tolerance not reached: requested {requested:e}, achieved {achieved:e}")]
    ToleranceNotReached { requested: f64, achieved: f64 },
}

/// `|w|` above which the increment is evaluated by Laurent series.
pub(crate) const SERIES_CROSSOVER: f64 = 1e4;

/// Principal complex square root, without the polar round trip.
#[inline]
pub(crate) fn csqrt(z: Complex) -> Complex {
    let (a, b) = (z.re, z.im);
    if b == 0.0 {
        return if a >= 0.0 {
            Complex::new(a.sqrt(), b)
        } else {
            Complex::new(0.0, f64::copysign((-a).sqrt(), b))
        };
    }
    let m = (a * a + b * b).sqrt();
    let u = ((m + a.abs()) * 0.5).sqrt();
    if a >= 0.0 {
        Complex::new(u, b / (2.0 * u))
    } else {
        Complex::new(b.abs() / (2.0 * u), f64::copysign(u, b))
    }
}

/// `sqrt(w^2 - 1)` on the aggregation branch: `Im >= 0` on the closed upper
/// half-plane, and on the real axis beyond the slit feet the real part has
/// the sign of `Re w` (so the root tracks `w` at infinity).
#[inline]
pub(crate) fn branch_sqrt(w: Complex) -> Complex {
    if w.norm_sqr() > 4.0 {
        let p = w.inv();
        w * csqrt(Complex::new(1.0, 0.0) - p * p)
    } else {
        let s = csqrt(w * w - Complex::new(1.0, 0.0));
        if s.im < 0.0 {
            -s
        } else if s.im == 0.0 && w.re < 0.0 {
            Complex::new(-s.re, 0.0)
        } else {
            s
        }
    }
}

/// Laurent series of the increment: `-1/(2w) - 1/(8w^3)`. Relative error is
/// `O(|w|^-4)`, below 1e-16 past the crossover.
#[inline]
pub(crate) fn series_increment(w: Complex) -> Complex {
    let iw = w.inv();
    let iw3 = iw * iw * iw;
    iw * -0.5 - iw3 * 0.125
}

/// Increment plus the branch root, sharing one `branch_sqrt` evaluation.
/// The root is what the chain-rule derivative needs (`phi' = w / s`).
#[inline]
pub(crate) fn apply_kernel(w: Complex) -> (Complex, Complex) {
    let s = branch_sqrt(w);
    let inc = if w.norm_sqr() > SERIES_CROSSOVER * SERIES_CROSSOVER {
        series_increment(w)
    } else {
        // (phi - z)(s + w) = s^2 - w^2 = -1, and |s + w| >= 1 on closed H,
        // so this form is stable at every scale.
        -(s + w).inv()
    };
    (inc, s)
}

/// `phi_x(z) - z` without domain checks; total on the closed half-plane.
#[inline]
pub(crate) fn increment_kernel(w: Complex) -> Complex {
    apply_kernel(w).0
}

#[inline]
fn check_inputs(x: f64, z: Complex) -> Result<(), ConformalError> {
    if !(x.is_finite() && z.re.is_finite() && z.im.is_finite()) {
        return Err(ConformalError::NonFinite);
    }
    if z.im < 0.0 {
        return Err(ConformalError::LowerHalfPlane { im: z.im });
    }
    Ok(())
}

/// The slit map `phi_x(z) = x + sqrt((z-x)^2 - 1)` on the aggregation branch.
///
/// Accepts the closed half-plane except the slit base point `z = x` itself.
/// Evaluated as `z + increment` so the displacement survives even when
/// `|z - x|` dwarfs it.
pub fn slit_apply(x: f64, z: Complex) -> Result<Complex, ConformalError> {
    check_inputs(x, z)?;
    if z.im == 0.0 && z.re == x {
        return Err(ConformalError::AtSlitBase { x });
    }
    Ok(z + increment_kernel(z - x))
}

/// `phi_x(z) - z`, stable to 1e-12 relative at every scale of `|z - x|`.
pub fn slit_increment(x: f64, z: Complex) -> Result<Complex, ConformalError> {
    check_inputs(x, z)?;
    if z.im == 0.0 && z.re == x {
        return Err(ConformalError::AtSlitBase { x });
    }
    Ok(increment_kernel(z - x))
}

/// `phi_x'(z) = (z-x)/sqrt((z-x)^2-1)` on the same branch as [`slit_apply`].
/// Requires `Im z > 0`; the derivative blows up at the slit feet.
pub fn slit_derivative(x: f64, z: Complex) -> Result<Complex, ConformalError> {
    check_inputs(x, z)?;
    if z.im <= 0.0 {
        return Err(ConformalError::NotInterior { im: z.im });
    }
    let w = z - x;
    if w.norm_sqr() > 4.0 {
        let p = w.inv();
        Ok(csqrt(Complex::new(1.0, 0.0) - p * p).inv())
    } else {
        Ok(w / branch_sqrt(w))
    }
}

/// Vertical increment one arrival at `x` gives a point at height `zeta`:
/// `Delta(zeta, x) = Im(phi_x(i zeta) - i zeta)`. Nonnegative, maximal at
/// `x = 0` where it equals `sqrt(1 + zeta^2) - zeta <= 1/(1 + zeta)`.
pub fn delta(zeta: f64, x: f64) -> Result<f64, ConformalError> {
    if !(zeta.is_finite() && x.is_finite()) {
        return Err(ConformalError::NonFinite);
    }
    if zeta < 0.0 {
        return Err(ConformalError::NegativeHeight { zeta });
    }
    Ok(increment_kernel(Complex::new(-x, zeta)).im)
}

/// Antiderivative of the increment in `w`: `G(w)` with `dG/dw = s - w`,
/// written so that no term cancels catastrophically:
/// `G(w) = -w/(2(s+w)) - ln(w+s)/2`.
#[inline]
pub(crate) fn g_antiderivative(w: Complex) -> Complex {
    let s = branch_sqrt(w);
    // -0.0 imaginary parts would flip the log branch on the negative real
    // axis; normalize them away.
    let den = Complex::new(s.re + w.re, (s.im + w.im) + 0.0);
    -w / (den * 2.0) - den.ln() * 0.5
}

/// Exact `int_lo^hi (phi_x(z) - z) dx` in closed form.
///
/// This is the per-unit-time drift a point at `z` accumulates from arrivals
/// in `[lo, hi]`; the event engine uses it for the exact Doob compensator.
/// The adaptive quadrature in [`drift_integral`] computes the same quantity
/// independently and the two routes are cross-checked in tests.
pub fn drift_closed_form(z: Complex, lo: f64, hi: f64) -> Result<Complex, ConformalError> {
    if !(z.re.is_finite() && z.im.is_finite() && lo.is_finite() && hi.is_finite()) {
        return Err(ConformalError::NonFinite);
    }
    if z.im < 0.0 {
        return Err(ConformalError::LowerHalfPlane { im: z.im });
    }
    if lo > hi {
        return Err(ConformalError::InvalidSpec(format!(
            "interval is reversed: [{lo}, {hi}]"
        )));
    }
    Ok(drift_closed_kernel(z, lo, hi))
}

#[inline]
pub(crate) fn drift_closed_kernel(z: Complex, lo: f64, hi: f64) -> Complex {
    g_antiderivative(z - lo) - g_antiderivative(z - hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, SQRT_2};

    fn c(re: f64, im: f64) -> Complex {
        Complex::new(re, im)
    }

    #[test]
    fn apply_matches_closed_form_on_imaginary_axis() {
        // phi_0(iy) = i sqrt(y^2 + 1)
        for &y in &[0.1, 1.0, 10.0, 1000.0] {
            let got = slit_apply(0.0, c(0.0, y)).unwrap();
            let want = (y * y + 1.0).sqrt();
            assert_relative_eq!(got.im, want, max_relative = 1e-12);
            assert!(got.re.abs() <= 1e-15 * want);
        }
    }

    #[test]
    fn apply_purely_imaginary_offset() {
        let got = slit_apply(3.0, c(3.0, 0.5)).unwrap();
        assert_relative_eq!(got.re, 3.0, max_relative = 1e-14);
        assert_relative_eq!(got.im, 1.25f64.sqrt(), max_relative = 1e-13);
    }

    #[test]
    fn apply_far_field_matches_series_oracle() {
        // Independent oracle: phi_x(z) - z ~ -1/(2w) - 1/(8 w^3) at w = z - x.
        let z = c(0.0, 1.0);
        let w = z - 100.0;
        let oracle = -0.5 * w.inv() - 0.125 * w.inv().powu(3);
        let got = slit_apply(100.0, z).unwrap();
        assert!((got - z).norm() <= 5.1e-3);
        // The two-term oracle itself carries O(|w|^-4) relative error.
        assert_relative_eq!((got - z).re, oracle.re, max_relative = 1e-7);
        assert_relative_eq!((got - z).im, oracle.im, max_relative = 1e-7);
    }

    #[test]
    fn increment_basic_values() {
        let got = slit_increment(0.0, c(0.0, 1.0)).unwrap();
        assert_relative_eq!(got.im, SQRT_2 - 1.0, max_relative = 1e-14);
        assert!(got.re.abs() < 1e-16);

        // Huge offset: magnitude ~ 1/(2|w|), no cancellation.
        let got = slit_increment(1e8, c(0.0, 1.0)).unwrap();
        let w = c(0.0, 1.0) - 1e8;
        let oracle = -0.5 * w.inv() - 0.125 * w.inv().powu(3);
        assert_relative_eq!(got.re, oracle.re, max_relative = 1e-12);
        assert_relative_eq!(got.im, oracle.im, max_relative = 1e-12);
        assert_relative_eq!(got.norm(), 5e-9, max_relative = 1e-6);
    }

    #[test]
    fn increment_series_and_direct_agree_on_crossover_band() {
        // 10^3 <= |w| <= 10^5 with both code paths.
        let mut worst = 0.0f64;
        for k in 0..2000 {
            let r = 1e3 * (100.0f64).powf(k as f64 / 1999.0);
            let th = std::f64::consts::PI * (k as f64 * 0.37).fract();
            let w = Complex::from_polar(r, th.abs().min(std::f64::consts::PI));
            let w = c(w.re, w.im.abs());
            let direct = -(branch_sqrt(w) + w).inv();
            let series = series_increment(w);
            let rel = (direct - series).norm() / direct.norm();
            worst = worst.max(rel);
        }
        assert!(worst <= 1e-10, "worst relative gap {worst:e}");
    }

    #[test]
    fn derivative_closed_form_and_limits() {
        for &y in &[0.3, 1.0, 7.0] {
            let got = slit_derivative(0.0, c(0.0, y)).unwrap();
            assert_relative_eq!(got.re, y / (y * y + 1.0).sqrt(), max_relative = 1e-13);
            assert!(got.im.abs() < 1e-15);
            assert!(got.re > 0.0 && got.re < 1.0);
        }
        let far = slit_derivative(0.0, c(3e7, 1e7)).unwrap();
        assert_relative_eq!(far.re, 1.0, max_relative = 1e-13);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        // Central finite difference of slit_apply, real step 1e-8 |w|.
        let cases = [(0.0, c(0.5, 0.5)), (2.0, c(-1.0, 0.25)), (-5.0, c(0.0, 3.0))];
        for &(x, z) in &cases {
            let h = 1e-8 * (z - x).norm().max(1.0);
            let fd = (slit_apply(x, z + h).unwrap() - slit_apply(x, z - h).unwrap()) / (2.0 * h);
            let dv = slit_derivative(x, z).unwrap();
            assert!((fd - dv).norm() / dv.norm() <= 1e-6, "x={x} z={z}");
        }
    }

    #[test]
    fn delta_values_and_bound() {
        assert_relative_eq!(delta(0.0, 0.0).unwrap(), 1.0, max_relative = 1e-14);
        assert_relative_eq!(delta(1.0, 0.0).unwrap(), SQRT_2 - 1.0, max_relative = 1e-13);
        let top = delta(2.0, 0.0).unwrap();
        assert_relative_eq!(top, 5.0f64.sqrt() - 2.0, max_relative = 1e-13);
        assert!(top <= 1.0 / 3.0);
        for &x in &[-9.0, -0.7, 0.4, 3.0, 40.0] {
            assert!(delta(2.0, x).unwrap() <= top + 1e-15);
        }
    }

    #[test]
    fn real_axis_branch_rule() {
        // Points on the axis outside the slit feet move toward the base,
        // tracking the sign of Re w.
        let img = slit_apply(0.0, c(2.0, 0.0)).unwrap();
        assert_relative_eq!(img.re, 3.0f64.sqrt(), max_relative = 1e-14);
        assert_eq!(img.im, 0.0);
        let img = slit_apply(0.0, c(-2.0, 0.0)).unwrap();
        assert_relative_eq!(img.re, -(3.0f64.sqrt()), max_relative = 1e-14);
        // The feet map to the base, the segment under the slit lifts onto it.
        assert_relative_eq!(slit_apply(0.0, c(1.0, 0.0)).unwrap().re, 0.0, epsilon = 1e-15);
        let lifted = slit_apply(0.0, c(0.5, 0.0)).unwrap();
        assert_relative_eq!(lifted.re, 0.0, epsilon = 1e-15);
        assert_relative_eq!(lifted.im, 0.75f64.sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn domain_errors() {
        assert_eq!(
            slit_apply(1.0, c(1.0, 0.0)),
            Err(ConformalError::AtSlitBase { x: 1.0 })
        );
        assert!(matches!(
            slit_apply(0.0, c(0.0, -0.1)),
            Err(ConformalError::LowerHalfPlane { .. })
        ));
        assert!(matches!(
            slit_derivative(0.0, c(2.0, 0.0)),
            Err(ConformalError::NotInterior { .. })
        ));
        assert!(matches!(
            delta(-1.0, 0.0),
            Err(ConformalError::NegativeHeight { .. })
        ));
        assert!(matches!(
            slit_apply(f64::NAN, c(0.0, 1.0)),
            Err(ConformalError::NonFinite)
        ));
    }

    #[test]
    fn closed_form_drift_examples() {
        // Checked against adaptive quadrature in the quadrature tests; here
        // pin the hand-computable window [-1, 2] at z = 0.
        let d = drift_closed_form(c(0.0, 0.0), -1.0, 2.0).unwrap();
        assert_relative_eq!(d.im, FRAC_PI_2, max_relative = 1e-13);
        let re_want = 1.5 - 3.0f64.sqrt() + 0.5 * (2.0 + 3.0f64.sqrt()).ln();
        assert_relative_eq!(d.re, re_want, max_relative = 1e-12);

        // Any window covering [-1, 1] sees the full semicircle at z = 0.
        for &m in &[1.0, 4.0, 1e3] {
            let d = drift_closed_form(c(0.0, 0.0), -m, m).unwrap();
            assert_relative_eq!(d.im, FRAC_PI_2, max_relative = 1e-12);
            assert!(d.re.abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_drift_continuous_at_real_axis() {
        let (lo, hi) = (-7.0, 3.0);
        for &x in &[-3.0, 0.0, 2.5] {
            let at0 = drift_closed_form(c(x, 0.0), lo, hi).unwrap();
            let eps = drift_closed_form(c(x, 1e-9), lo, hi).unwrap();
            assert!((at0 - eps).norm() < 1e-6, "x={x}: {at0} vs {eps}");
        }
    }

    #[test]
    fn csqrt_matches_library() {
        let vals = [
            c(3.0, 4.0),
            c(-3.0, 4.0),
            c(-3.0, -4.0),
            c(0.0, 2.0),
            c(-1.0, 0.0),
            c(4.0, 0.0),
            c(1e-8, -1e8),
        ];
        for &v in &vals {
            let lib = v.sqrt();
            let got = csqrt(v);
            assert!((lib - got).norm() <= 1e-13 * lib.norm().max(1.0), "{v}");
        }
    }

    proptest! {
        #[test]
        fn branch_never_lowers_points(x in -1e4f64..1e4, re in -1e4f64..1e4, lim in 1e-9f64..1e3) {
            let z = c(re, lim);
            let img = slit_apply(x, z).unwrap();
            prop_assert!(img.im >= z.im);
        }

        #[test]
        fn increment_bounded_by_one(x in -1e6f64..1e6, re in -1e6f64..1e6, im in 0f64..1e6) {
            let z = c(re, im);
            if !(im == 0.0 && re == x) {
                let inc = slit_increment(x, z).unwrap();
                prop_assert!(inc.norm() <= 1.0 + 1e-12);
                prop_assert!(inc.im >= 0.0);
            }
        }

        #[test]
        fn delta_dominated_by_center(zeta in 0f64..1e3, x in -1e4f64..1e4) {
            let d = delta(zeta, x).unwrap();
            let d0 = delta(zeta, 0.0).unwrap();
            prop_assert!(d >= 0.0);
            prop_assert!(d <= d0 + 1e-14);
            prop_assert!(d0 <= 1.0 / (1.0 + zeta) + 1e-14);
        }

        #[test]
        fn increment_consistent_with_apply(x in -1e3f64..1e3, re in -1e3f64..1e3, im in 1e-6f64..1e3) {
            let z = c(re, im);
            let a = slit_apply(x, z).unwrap();
            let i = slit_increment(x, z).unwrap();
            prop_assert!((a - z - i).norm() <= 1e-12 * (1.0 + i.norm()));
        }
    }
}
