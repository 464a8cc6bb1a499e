//! Kernel and quadrature self-checks behind `shl verify`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use shl_core::conformal::{
    delta, delta_integral, drift_integral, slit_apply, slit_derivative, slit_increment,
    squared_displacement_integral, QuadratureSpec, TailMode,
};
use shl_core::estimators::koebe_check;
use shl_core::process::SimConfig;
use shl_core::Complex;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

pub struct VerifyOptions {
    pub rel_tol: f64,
    pub half_width: f64,
    pub random_samples: usize,
    pub seed: u64,
    pub flip_branch: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            rel_tol: 1e-6,
            half_width: 1e6,
            random_samples: 1_000_000,
            seed: 7,
            flip_branch: false,
        }
    }
}

fn check(name: &str, pass: bool, detail: String) -> Check {
    Check { name: name.to_string(), pass, detail }
}

pub fn run(opts: &VerifyOptions) -> Vec<Check> {
    let mut checks = Vec::new();
    let tol = opts.rel_tol;
    let spec = QuadratureSpec {
        half_width: opts.half_width,
        rel_tol: (tol / 10.0).max(1e-12),
        tail_mode: TailMode::Series,
    };

    // Closed forms of the kernel.
    {
        let mut worst = 0.0f64;
        for &y in &[0.1, 1.0, 10.0, 1000.0] {
            let got = slit_apply(0.0, Complex::new(0.0, y)).unwrap();
            let want = (y * y + 1.0).sqrt();
            worst = worst.max((got.im - want).abs() / want + got.re.abs());
        }
        checks.push(check(
            "kernel_closed_forms",
            worst <= 1e-12,
            format!("max relative error {worst:.2e} (tol 1e-12)"),
        ));
    }

    // Derivative against central finite differences.
    {
        let pts = [
            (0.0, Complex::new(0.5, 0.5)),
            (3.0, Complex::new(2.0, 1.5)),
            (-2.0, Complex::new(0.0, 0.2)),
        ];
        let mut worst = 0.0f64;
        for &(x, z) in &pts {
            let h = 1e-8 * (z - x).norm().max(1.0);
            let fd = (slit_apply(x, z + h).unwrap() - slit_apply(x, z - h).unwrap()) / (2.0 * h);
            let dv = slit_derivative(x, z).unwrap();
            worst = worst.max((fd - dv).norm() / dv.norm());
        }
        checks.push(check(
            "derivative_finite_difference",
            worst <= 1e-6,
            format!("max relative error {worst:.2e} (tol 1e-6)"),
        ));
    }

    // Branch positivity and the unit displacement bound on random samples.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut positivity_ok = true;
        let mut worst_inc = 0.0f64;
        let mut worst_drop = 0.0f64;
        for k in 0..opts.random_samples {
            let x = (rng.gen::<f64>() - 0.5) * 2e3;
            // Every fourth sample hugs the slit, where |increment| peaks at 1.
            let (re, im) = if k % 4 == 0 {
                (x + (rng.gen::<f64>() - 0.5) * 4.0, rng.gen::<f64>() * 0.05)
            } else {
                ((rng.gen::<f64>() - 0.5) * 2e3, rng.gen::<f64>() * 1e2)
            };
            let z = Complex::new(re, im);
            let inc = slit_increment(x, z).unwrap();
            let img = if opts.flip_branch { z + inc.conj() } else { z + inc };
            if img.im < z.im {
                positivity_ok = false;
                worst_drop = worst_drop.max(z.im - img.im);
            }
            worst_inc = worst_inc.max(inc.norm());
        }
        checks.push(check(
            "branch_positivity",
            positivity_ok,
            if positivity_ok {
                format!("Im never drops over {} samples", opts.random_samples)
            } else {
                format!("Im dropped by up to {worst_drop:.3e}")
            },
        ));
        checks.push(check(
            "increment_unit_bound",
            worst_inc <= 1.0 + 1e-12,
            format!("max |increment| = {worst_inc:.12} (bound 1 + 1e-12)"),
        ));
    }

    // Pointwise vertical-increment bounds.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xdead_beef);
        let mut ok = true;
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..10_000 {
            let zeta = rng.gen::<f64>() * 100.0;
            let x = (rng.gen::<f64>() - 0.5) * 400.0;
            let d = delta(zeta, x).unwrap();
            let d0 = delta(zeta, 0.0).unwrap();
            let cap = 1.0 / (1.0 + zeta);
            if !(d >= 0.0 && d <= d0 + 1e-14 && d0 <= cap + 1e-14) {
                ok = false;
                worst = worst.max(d - cap);
            }
        }
        checks.push(check(
            "delta_pointwise_bounds",
            ok,
            "0 <= Delta(zeta,x) <= Delta(zeta,0) <= 1/(1+zeta) on 10^4 samples".to_string(),
        ));
    }

    // Drift integral reaches i pi / 2.
    {
        let mut worst_im = 0.0f64;
        let mut worst_re = 0.0f64;
        let mut failure = None;
        for &y in &[1.0, 5.0, 10.0] {
            match drift_integral(Complex::new(0.0, y), &spec) {
                Ok(d) => {
                    worst_im = worst_im.max((d.im - FRAC_PI_2).abs());
                    worst_re = worst_re.max(d.re.abs());
                }
                Err(e) => failure = Some(e.to_string()),
            }
        }
        let pass =
            failure.is_none() && worst_im <= tol.max(1e-12) && worst_re <= (tol * 1e-2).max(1e-8);
        checks.push(check(
            "drift_integral",
            pass,
            failure.unwrap_or(format!(
                "|Im - pi/2| <= {worst_im:.2e}, |Re| <= {worst_re:.2e} (tol {tol:.0e})"
            )),
        ));
    }

    // Squared displacement against pi/(4y).
    {
        let mut ok = true;
        let mut detail = String::new();
        for &y in &[5.0, 10.0, 20.0, 100.0] {
            match squared_displacement_integral(y, &spec) {
                Ok(v) => {
                    let gap = (v - FRAC_PI_4 / y).abs();
                    let cap = 5.0 / (y * y * y);
                    if gap > cap {
                        ok = false;
                    }
                    detail.push_str(&format!("y={y}: gap {gap:.2e} (cap {cap:.2e}); "));
                }
                Err(e) => {
                    ok = false;
                    detail = e.to_string();
                    break;
                }
            }
        }
        checks.push(check("squared_displacement", ok, detail.trim_end().to_string()));
    }

    // Height-independence of the vertical increment integral.
    {
        let mut worst = 0.0f64;
        let mut failure = None;
        for &zeta in &[0.0, 1.0, 50.0] {
            match delta_integral(zeta, &spec) {
                Ok(v) => worst = worst.max((v - FRAC_PI_2).abs()),
                Err(e) => failure = Some(e.to_string()),
            }
        }
        let pass = failure.is_none() && worst <= tol.max(1e-12);
        checks.push(check(
            "delta_integral",
            pass,
            failure.unwrap_or(format!("max |value - pi/2| = {worst:.2e} (tol {tol:.0e})")),
        ));
    }

    // Derivative distortion on sampled maps.
    {
        let mut cfg = SimConfig::new(8.0, opts.seed, 2000);
        cfg.window_halfwidth = None;
        match koebe_check(20, &cfg) {
            Ok(rep) => checks.push(check(
                "koebe_distortion",
                rep.max_ratio <= 16.0,
                format!("max |F'(w)|/|F'(z)| = {:.3} over {} pairs (bound 16)",
                    rep.max_ratio,
                    rep.n_maps * rep.pairs_per_map),
            )),
            Err(e) => checks.push(check("koebe_distortion", false, e.to_string())),
        }
    }

    checks
}
