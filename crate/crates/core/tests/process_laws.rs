//! Statistical laws of the process layer: forward/backward equality in
//! distribution, the growth law, the chain rule, the exact-mode martingale
//! property, and the drift-mode gap.

use rayon::prelude::*;
use shl_core::process::{
    auto_window, evolve, fluctuation, render_forward, sample_arrivals, DriftMode, TrackedPoint,
};
use shl_core::Complex;
use std::f64::consts::FRAC_PI_2;

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn forward_and_backward_agree_in_distribution() {
    // Two independent groups of 2000 seeds; Welch mean test at the 1% level.
    let (t, m, n) = (4.0, 64.0, 2000);
    let backward: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = sample_arrivals(-m, m, t, 101, i).unwrap();
            let run =
                evolve(&s, &[TrackedPoint::at(0.0, 0.0)], DriftMode::Asymptotic, &[t]).unwrap();
            run.snapshots[0][0].value.im
        })
        .collect();
    let forward: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = sample_arrivals(-m, m, t, 202, i).unwrap();
            render_forward(&s, &[0.0], t).unwrap()[0].im
        })
        .collect();
    let (mb, seb) = mean_stderr(&backward);
    let (mf, sef) = mean_stderr(&forward);
    let z = (mb - mf).abs() / (seb * seb + sef * sef).sqrt();
    assert!(z <= 2.576, "two-sample z = {z} (backward {mb}, forward {mf})");
}

#[test]
fn growth_law_reaches_half_pi_rate() {
    // mean Im F_t(0) / t -> pi/2. A wide window keeps the truncation deficit
    // well under the statistical resolution.
    for (seed, t) in [(7u64, 32.0f64), (8u64, 64.0)] {
        let m = 4.0 * auto_window(t);
        let n = 200;
        let ims: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let s = sample_arrivals(-m, m, t, seed, i).unwrap();
                let run =
                    evolve(&s, &[TrackedPoint::at(0.0, 0.0)], DriftMode::Asymptotic, &[t]).unwrap();
                run.snapshots[0][0].value.im / t
            })
            .collect();
        let (mean, se) = mean_stderr(&ims);
        assert!(
            (mean - FRAC_PI_2).abs() <= 3.0 * se,
            "t={t}: rate {mean} +- {se} vs {FRAC_PI_2}"
        );
    }
}

#[test]
fn chain_rule_matches_finite_difference() {
    let (t, m) = (2.0, 16.0);
    let h = Complex::new(0.0, 1e-6);
    for seed in [3u64, 4, 5] {
        let s = sample_arrivals(-m, m, t, seed, 0).unwrap();
        let z = Complex::new(0.3, 0.7);
        let pts = [TrackedPoint::new(z), TrackedPoint::new(z + h)];
        let run = evolve(&s, &pts, DriftMode::Asymptotic, &[t]).unwrap();
        let fd = (run.snapshots[0][1].value - run.snapshots[0][0].value) / h;
        let tracked = run.snapshots[0][0].deriv;
        let rel = (fd - tracked).norm() / tracked.norm();
        assert!(rel <= 1e-3, "seed {seed}: fd {fd} vs tracked {tracked} (rel {rel})");
    }
}

#[test]
fn exact_mode_fluctuation_has_zero_mean() {
    // 10^4 samples at t = 10, auto window: componentwise |mean| <= 4 stderr.
    let t = 10.0;
    let m = auto_window(t);
    let n = 10_000;
    let ms: Vec<Complex> = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = sample_arrivals(-m, m, t, 7, i).unwrap();
            let run =
                evolve(&s, &[TrackedPoint::at(0.0, 0.0)], DriftMode::ExactQuadrature, &[t])
                    .unwrap();
            fluctuation(&run.snapshots[0][0], t, DriftMode::ExactQuadrature)
        })
        .collect();
    let res: Vec<f64> = ms.iter().map(|m| m.re).collect();
    let ims: Vec<f64> = ms.iter().map(|m| m.im).collect();
    for (name, xs) in [("Re", res), ("Im", ims)] {
        let (mean, se) = mean_stderr(&xs);
        assert!(mean.abs() <= 4.0 * se, "{name}: mean {mean} +- {se}");
    }
}

#[test]
fn asymptotic_mode_bias_is_within_window_rate() {
    // On identical streams, E |M_asym - M_exact|^2 <= 10 t / m.
    let (t, m, n) = (8.0, 64.0, 300);
    let gaps: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = sample_arrivals(-m, m, t, 11, i).unwrap();
            let origin = [TrackedPoint::at(0.0, 0.0)];
            let exact = evolve(&s, &origin, DriftMode::ExactQuadrature, &[t]).unwrap();
            let asym = evolve(&s, &origin, DriftMode::Asymptotic, &[t]).unwrap();
            let m_exact = fluctuation(&exact.snapshots[0][0], t, DriftMode::ExactQuadrature);
            let m_asym = fluctuation(&asym.snapshots[0][0], t, DriftMode::Asymptotic);
            (m_asym - m_exact).norm_sqr()
        })
        .collect();
    let (mean, se) = mean_stderr(&gaps);
    assert!(mean <= 10.0 * t / m, "gap {mean} +- {se} vs {}", 10.0 * t / m);
}

#[test]
fn evolution_is_reproducible() {
    let t = 4.0;
    let m = auto_window(t);
    let once = |_| {
        let s = sample_arrivals(-m, m, t, 99, 5).unwrap();
        let run = evolve(
            &s,
            &[TrackedPoint::at(0.0, 0.0), TrackedPoint::at(1.0, 0.5)],
            DriftMode::ExactQuadrature,
            &[t / 2.0, t],
        )
        .unwrap();
        run.snapshots
    };
    let a = once(0);
    let b = once(1);
    for (sa, sb) in a.iter().zip(&b) {
        for (pa, pb) in sa.iter().zip(sb) {
            assert_eq!(pa.value, pb.value);
            assert_eq!(pa.deriv, pb.deriv);
            assert_eq!(pa.compensator, pb.compensator);
        }
    }
}
