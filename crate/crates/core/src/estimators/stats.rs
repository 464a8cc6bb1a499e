//! Order-insensitive accumulation and the small statistics toolbox used by
//! the estimators: pairwise summation, weighted log fits, jackknife skewness.

use serde::Serialize;

/// Pairwise (cascade) summation: associative enough that any fixed traversal
/// agrees with any other at the 1e-13 level, and exactly reproducible for a
/// fixed input order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Sample standard deviation about `center` (n-1 normalization).
pub fn sample_sd(xs: &[f64], center: f64) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let sq: Vec<f64> = xs.iter().map(|&x| (x - center) * (x - center)).collect();
    (pairwise_sum(&sq) / (xs.len() as f64 - 1.0)).sqrt()
}

/// Mean and its standard error.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let m = mean(xs);
    (m, sample_sd(xs, m) / (xs.len() as f64).sqrt())
}

/// Centered cross products `(a_i - a_bar)(b_i - b_bar)`; their `n-1` mean is
/// the sample covariance.
pub fn centered_products(a: &[f64], b: &[f64]) -> Vec<f64> {
    let (ma, mb) = (mean(a), mean(b));
    a.iter().zip(b).map(|(&x, &y)| (x - ma) * (y - mb)).collect()
}

/// Weighted least-squares fit of `estimate` against `ln t`.
#[derive(Debug, Clone, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    /// Weighted residual sum of squares.
    pub chi2: f64,
    pub dof: usize,
    pub points: Vec<FitPoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitPoint {
    pub t: f64,
    pub log_t: f64,
    pub estimate: f64,
    pub stderr: f64,
}

pub(crate) fn weighted_log_fit(points: &[(f64, f64, f64)]) -> SlopeFit {
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut fit_points = Vec::with_capacity(points.len());
    for &(t, est, se) in points {
        let x = t.ln();
        let w = 1.0 / (se * se);
        sw += w;
        sx += w * x;
        sy += w * est;
        sxx += w * x * x;
        sxy += w * x * est;
        fit_points.push(FitPoint { t, log_t: x, estimate: est, stderr: se });
    }
    let det = sw * sxx - sx * sx;
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sy - slope * sx) / sw;
    let mut chi2 = 0.0;
    for p in &fit_points {
        let r = (p.estimate - (intercept + slope * p.log_t)) / p.stderr;
        chi2 += r * r;
    }
    SlopeFit {
        slope,
        intercept,
        slope_stderr: (sw / det).sqrt(),
        chi2,
        dof: points.len().saturating_sub(2),
        points: fit_points,
    }
}

/// Sample skewness with a jackknife standard error, both computed from
/// centered data. `None` when the sample is degenerate (zero variance).
pub fn skewness_jackknife(xs: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len();
    if n < 3 {
        return None;
    }
    let shift = mean(xs);
    let ys: Vec<f64> = xs.iter().map(|&x| x - shift).collect();
    let s1 = pairwise_sum(&ys);
    let s2 = pairwise_sum(&ys.iter().map(|y| y * y).collect::<Vec<_>>());
    let s3 = pairwise_sum(&ys.iter().map(|y| y * y * y).collect::<Vec<_>>());
    let skew_from = |s1: f64, s2: f64, s3: f64, n: f64| -> Option<f64> {
        let mu = s1 / n;
        let m2 = s2 / n - mu * mu;
        if m2 <= 0.0 {
            return None;
        }
        let m3 = s3 / n - 3.0 * mu * s2 / n + 2.0 * mu * mu * mu;
        Some(m3 / m2.powf(1.5))
    };
    let full = skew_from(s1, s2, s3, n as f64)?;
    let mut loo = Vec::with_capacity(n);
    for y in &ys {
        loo.push(skew_from(s1 - y, s2 - y * y, s3 - y * y * y, (n - 1) as f64)?);
    }
    let loo_mean = mean(&loo);
    let ss = pairwise_sum(&loo.iter().map(|v| (v - loo_mean) * (v - loo_mean)).collect::<Vec<_>>());
    let se = ((n as f64 - 1.0) / n as f64 * ss).sqrt();
    Some((full, se))
}

/// Excess kurtosis; `None` on degenerate samples.
pub fn excess_kurtosis(xs: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    if n < 4.0 {
        return None;
    }
    let m = mean(xs);
    let ys: Vec<f64> = xs.iter().map(|&x| x - m).collect();
    let m2 = pairwise_sum(&ys.iter().map(|y| y * y).collect::<Vec<_>>()) / n;
    if m2 <= 0.0 {
        return None;
    }
    let m4 = pairwise_sum(&ys.iter().map(|y| y.powi(4)).collect::<Vec<_>>()) / n;
    Some(m4 / (m2 * m2) - 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pairwise_sum_is_order_insensitive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..10_001).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let forward = pairwise_sum(&xs);
        let mut rev = xs.clone();
        rev.reverse();
        let backward = pairwise_sum(&rev);
        assert!((forward - backward).abs() <= 1e-13 * forward.abs().max(1.0));
    }

    #[test]
    fn covariance_of_duplicated_series_is_its_variance() {
        let xs = [1.0, 2.0, 4.0, 8.5, -3.0];
        let products = centered_products(&xs, &xs);
        let cov = pairwise_sum(&products) / (xs.len() as f64 - 1.0);
        let m = mean(&xs);
        let var = sample_sd(&xs, m).powi(2);
        assert_eq!(cov, var);
    }

    #[test]
    fn exact_line_recovery() {
        let slope = 0.7854;
        let pts: Vec<(f64, f64, f64)> =
            [8.0f64, 16.0, 32.0, 64.0].iter().map(|&t| (t, slope * t.ln() + 1.0, 1.0)).collect();
        let fit = weighted_log_fit(&pts);
        assert_relative_eq!(fit.slope, slope, epsilon = 1e-12);
        assert_relative_eq!(fit.intercept, 1.0, epsilon = 1e-12);
        assert!(fit.chi2 < 1e-20);
    }

    #[test]
    fn noisy_slope_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let true_slope = 0.5;
        let pts: Vec<(f64, f64, f64)> = (0..50)
            .map(|i| {
                let t = 2.0 + i as f64;
                let noise: f64 = rng.gen::<f64>() + rng.gen::<f64>() - 1.0;
                (t, true_slope * t.ln() + 0.3 * noise, 0.3 * 0.41)
            })
            .collect();
        let fit = weighted_log_fit(&pts);
        assert!(
            (fit.slope - true_slope).abs() <= 3.0 * fit.slope_stderr,
            "slope {} +- {}",
            fit.slope,
            fit.slope_stderr
        );
    }

    #[test]
    fn jackknife_skewness_signs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sym: Vec<f64> = (0..4000).map(|_| rng.gen::<f64>() - 0.5).collect();
        let (skew, se) = skewness_jackknife(&sym).unwrap();
        assert!(se > 0.0 && se < 0.1, "se {se}");
        assert!(skew.abs() <= 0.2, "skew {skew} se {se}");
        let skewed: Vec<f64> = sym.iter().map(|x| (x * 3.0).exp()).collect();
        let (skew, _) = skewness_jackknife(&skewed).unwrap();
        assert!(skew > 0.5);
        assert!(skewness_jackknife(&[2.0; 50]).is_none());
    }
}
