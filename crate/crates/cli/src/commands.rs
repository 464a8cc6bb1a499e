//! One runner per subcommand: resolve flags, run the estimator on the
//! requested pool, write results.json / results.csv / manifest.json.

use crate::config::{parse_grid, parse_list, resolve, Resolved};
use crate::output::{fmt_f64, polyline_svg, xy_csv, Emitter, Results};
use crate::verify::{self, VerifyOptions};
use crate::{usage, Command, CommonOpts, RunError};
use anyhow::Context;
use serde_json::json;
use shl_core::estimators as est;
use shl_core::process::{
    evolve, fluctuation, render_forward, sample_arrivals, DriftMode, FieldSample, SimConfig,
    TrackedPoint,
};
use std::f64::consts::FRAC_PI_4;
use std::process::ExitCode;

pub fn dispatch(cmd: Command) -> Result<ExitCode, RunError> {
    match cmd {
        Command::Verify { common, rel_tol, half_width, inject_branch_flip } => {
            run_verify(&common, rel_tol, half_width, inject_branch_flip)
        }
        Command::Variance { common, t } => run_variance(&common, t),
        Command::Covariance { common, t, b } => run_covariance(&common, t, b),
        Command::Maxfluct { common, t, grid_spacing, height, beta } => {
            run_maxfluct(&common, t, grid_spacing, height, beta)
        }
        Command::Expmoment { common, t, alpha, beta } => run_expmoment(&common, t, alpha, beta),
        Command::Lln { common, t, a } => run_lln(&common, t, a),
        Command::Derivmoment { common, t } => run_derivmoment(&common, t),
        Command::Truncation { common, t, m_small, m_large } => {
            run_truncation(&common, t, m_small, m_large)
        }
        Command::Histogram { common, t, bins } => run_histogram(&common, t, bins),
        Command::Render { common, t, grid, fluctuation } => {
            run_render(&common, t, grid, fluctuation)
        }
    }
}

fn build_pool(threads: usize) -> Result<rayon::ThreadPool, RunError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("building worker pool")
        .map_err(RunError::from)
}

fn sim_config(r: &Resolved, t: f64) -> SimConfig {
    SimConfig {
        t,
        window_halfwidth: r.window,
        extra_points: Vec::new(),
        grid: None,
        drift_mode: r.drift_mode,
        master_seed: r.seed,
        n_samples: r.samples,
        collect_samples: r.dump_samples,
    }
}

fn window_json(r: &Resolved) -> serde_json::Value {
    match r.window {
        None => json!("auto"),
        Some(w) => json!(w),
    }
}

fn drift_json(mode: DriftMode) -> serde_json::Value {
    serde_json::to_value(mode).expect("drift mode serializes")
}

/// Manifest config: the deterministic echo plus scheduling inputs.
fn manifest_config(results_config: &serde_json::Value, r: &Resolved) -> serde_json::Value {
    let mut cfg = results_config.clone();
    let map = cfg.as_object_mut().expect("config echo is an object");
    map.insert("threads".into(), json!(r.threads));
    map.insert("out".into(), json!(r.out.display().to_string()));
    map.insert("dump_samples".into(), json!(r.dump_samples));
    map.insert("seed_was_given".into(), json!(r.seed_was_given));
    cfg
}

fn require_t_list(t: Option<String>, file_key: &Resolved) -> Result<Vec<f64>, RunError> {
    let raw = t
        .or_else(|| file_key.file.string("t"))
        .ok_or_else(|| usage("--t is required (comma-separated horizons)"))?;
    parse_list(&raw, "--t")
}

fn require_t(t: Option<f64>, r: &Resolved) -> Result<f64, RunError> {
    t.or_else(|| r.file.f64("t")).ok_or_else(|| usage("--t is required"))
}

// ---------------------------------------------------------------------------

fn run_verify(
    common: &CommonOpts,
    rel_tol: Option<f64>,
    half_width: Option<f64>,
    inject_branch_flip: bool,
) -> Result<ExitCode, RunError> {
    let r = resolve(common, "verify", 1_000_000)?;
    let opts = VerifyOptions {
        rel_tol: rel_tol.or_else(|| r.file.f64("rel_tol")).unwrap_or(1e-6),
        half_width: half_width.or_else(|| r.file.f64("half_width")).unwrap_or(1e6),
        random_samples: r.samples,
        seed: r.seed,
        flip_branch: inject_branch_flip,
    };
    if !(opts.rel_tol > 0.0 && opts.rel_tol < 1.0) {
        return Err(usage("--rel-tol must lie in (0, 1)"));
    }
    let pool = build_pool(r.threads)?;
    let mut emitter = Emitter::new(&r.out, "verify")?;
    let checks = pool.install(|| verify::run(&opts));
    emitter.phase("write");

    let mut all_pass = true;
    for c in &checks {
        println!("{} {} — {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        all_pass &= c.pass;
    }
    let config = json!({
        "rel_tol": opts.rel_tol,
        "half_width": opts.half_width,
        "random_samples": opts.random_samples,
        "seed": r.seed,
        "inject_branch_flip": inject_branch_flip,
    });
    emitter.write_json(
        "report.json",
        &Results::new("verify", r.seed, config.clone(), json!({}), &checks),
    )?;
    let dir = emitter.finish(manifest_config(&config, &r), r.seed)?;
    println!("{} checks, {}; wrote {}", checks.len(), if all_pass { "all PASS" } else { "FAILURES present" }, dir.display());
    Ok(if all_pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

// ---------------------------------------------------------------------------

fn run_variance(common: &CommonOpts, t: Option<String>) -> Result<ExitCode, RunError> {
    let r = resolve(common, "variance", 2000)?;
    let t_list = require_t_list(t, &r)?;
    let cfg = sim_config(&r, *t_list.last().unwrap());
    let pool = build_pool(r.threads)?;
    let mut emitter = Emitter::new(&r.out, "variance")?;
    let report = pool.install(|| est::estimate_variance(&t_list, &cfg))?;
    emitter.phase("write");

    let mut csv = String::from("t,estimate,stderr,n,ci_lo,ci_hi,centered,window\n");
    for row in &report.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt_f64(row.t),
            fmt_f64(row.result.estimate),
            fmt_f64(row.result.stderr),
            row.result.n,
            fmt_f64(row.result.ci95[0]),
            fmt_f64(row.result.ci95[1]),
            fmt_f64(row.centered),
            fmt_f64(row.window),
        ));
        println!(
            "t={}: E|M|^2 = {:.4} ± {:.4}  (centered {:.4})",
            row.t, row.result.estimate, row.result.stderr, row.centered
        );
    }
    println!(
        "log-slope {:.4} ± {:.4} (intercept {:.4})",
        report.fit.slope, report.fit.slope_stderr, report.fit.intercept
    );
    emitter.write_bytes("results.csv", csv.as_bytes())?;
    if r.dump_samples {
        let rows: Vec<(f64, [f64; 2], DriftMode, Vec<FieldSample>)> = report
            .rows
            .iter()
            .filter_map(|row| {
                row.samples
                    .clone()
                    .map(|s| (row.t, [-row.window, row.window], report.drift_mode, s))
            })
            .collect();
        emitter.write_samples(&rows)?;
    }
    let config = json!({
        "t": t_list,
        "samples": r.samples,
        "seed": r.seed,
        "window": window_json(&r),
        "drift_mode": drift_json(r.drift_mode),
    });
    let constants = json!({
        "slope_reference": FRAC_PI_4,
        "slope_window": [0.55, 1.05],
    });
    emitter.write_json(
        "results.json",
        &Results::new("variance", r.seed, config.clone(), constants, &report),
    )?;
    let dir = emitter.finish(manifest_config(&config, &r), r.seed)?;
    println!("wrote {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------

fn run_covariance(
    common: &CommonOpts,
    t: Option<f64>,
    b: Option<String>,
) -> Result<ExitCode, RunError> {
    let r = resolve(common, "covariance", 2000)?;
    let t = require_t(t, &r)?;
    let b_raw = b
        .or_else(|| r.file.string("b"))
        .ok_or_else(|| usage("--b is required (comma-separated offsets)"))?;
    let b_list = parse_list(&b_raw, "--b")?;
    let cfg = sim_config(&r, t);
    let pool = build_pool(r.threads)?;
    let mut emitter = Emitter::new(&r.out, "covariance")?;
    let report = pool.install(|| est::estimate_covariance(t, &b_list, &cfg))?;
    emitter.phase("write");

    let mut csv = String::from("t,b,estimate,stderr,n,ci_lo,ci_hi,profile,ratio,low_precision\n");
    for row in &report.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            fmt_f64(t),
            fmt_f64(row.b),
            fmt_f64(row.result.estimate),
            fmt_f64(row.result.stderr),
            row.result.n,
            fmt_f64(row.result.ci95[0]),
            fmt_f64(row.result.ci95[1]),
            fmt_f64(row.profile),
            fmt_f64(row.ratio_to_profile),
            row.low_precision,
        ));
        println!(
            "b={}: cov = {:.4} ± {:.4}  (profile {:.4}, ratio {:.3})",
            row.b, row.result.estimate, row.result.stderr, row.profile, row.ratio_to_profile
        );
    }
    emitter.write_bytes("results.csv", csv.as_bytes())?;
    if r.dump_samples {
        if let Some(samples) = report.samples.clone() {
            let b_max = b_list.iter().cloned().fold(0.0, f64::max);
            emitter.write_samples(&[(
                t,
                [-report.window, report.window + b_max],
                report.drift_mode,
                samples,
            )])?;
        }
    }
    let config = json!({
        "t": t,
        "b": b_list,
        "samples": r.samples,
        "seed": r.seed,
        "window": window_json(&r),
        "drift_mode": drift_json(r.drift_mode),
    });
    let constants = json!({
        "profile_coefficient": FRAC_PI_4,
        "ratio_window": [0.4, 1.6],
        "far_regime_c": 5.0,
    });
    emitter.write_json(
        "results.json",
        &Results::new("covariance", r.seed, config.clone(), constants, &report),
    )?;
    let dir = emitter.finish(manifest_config(&config, &r), r.seed)?;
    println!("wrote {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------

fn run_maxfluct(
    common: &CommonOpts,
    t: Option<String>,
    grid_spacing: Option<f64>,
    height: Option<f64>,
    beta: Option<f64>,
) -> Result<ExitCode, RunError> {
    let r = resolve(common, "maxfluct", 400)?;
    let t_list = require_t_list(t, &r)?;
    let grid_spacing = grid_spacing.or_else(|| r.file.f64("grid_spacing")).unwrap_or(0.5);
    let height = height.or_else(|| r.file.f64("height")).unwrap_or(0.0);
    let beta = beta.or_else(|| r.file.f64("beta")).unwrap_or(8.0);
    let cfg = sim_config(&r, *t_list.last().unwrap());
    let pool = build_pool(r.threads)?;
    let mut emitter = Emitter::new(&r.out, "maxfluct")?;
    let report =
        pool.install(|| est::estimate_max_fluctuation(&t_list, grid_spacing, height, beta, &cfg))?;
    emitter.phase("write");

    let mut csv = String::from(
        "t,grid_points,threshold,exceedance,exceedance_stderr,n,max_mean,max_stderr,max_over_log,q50,q90,q99,max\n",
    );
    for row in &report.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            fmt_f64(row.t),
            row.grid_points,
            fmt_f64(row.threshold),
            fmt_f64(row.exceedance.estimate),
            fmt_f64(row.exceedance.stderr),
            row.exceedance.n,
            fmt_f64(row.max_mean),
            fmt_f64(row.max_stderr),
            fmt_f64(row.max_over_log_mean),
            fmt_f64(row.quantiles.q50),
            fmt_f64(row.quantiles.q90),
            fmt_f64(row.quantiles.q99),
            fmt_f64(row.quantiles.max),
        ));
        println!(
            "t={}: P(max > {:.2}) = {:.4} ± {:.4}; mean max {:.3} ({:.3} per ln t)",
            row.t,
            row.threshold,
            row.exceedance.estimate,
            row.exceedance.stderr,
            row.max_mean,
            row.max_over_log_mean
        );
    }
    emitter.write_bytes("results.csv", csv.as_bytes())?;
    if r.dump_samples {
        let rows: Vec<(f64, [f64; 2], DriftMode, Vec<FieldSample>)> = report
            .rows
            .iter()
            .zip(&t_list)
            .filter_map(|(row, &t)| {
                let m = sim_config(&r, t).window_for(t).ok()?;
                row.samples.clone().map(|s| (t, [-m, t + m], report.drift_mode, s))
            })
            .collect();
        emitter.write_samples(&rows)?;
    }
    let config = json!({
        "t": t_list,
        "grid_spacing": grid_spacing,
        "height": height,
        "beta": beta,
        "samples": r.samples,
        "seed": r.seed,
        "window": window_json(&r),
        "drift_mode": drift_json(r.drift_mode),
    });
    let constants = json!({ "max_ratio_cap_across_t": 2.0 });
    emitter.write_json(
        "results.json",
        &Results::new("maxfluct", r.seed, config.clone(), constants, &report),
    )?;
    let dir = emitter.finish(manifest_config(&config, &r), r.seed)?;
    println!("wrote {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------

fn run_expmoment(
    common: &CommonOpts,
    t: Option<String>,
    alpha: Option<f64>,
    beta: Option<f64>,
) -> Result<ExitCode, RunError> {
    let r = resolve(common, "expmoment", 2000)?;
    let t_list = require_t_list(t, &r)?;
    let alpha = alpha.or_else(|| r.file.f64("alpha")).unwrap_or(0.5);
    let beta = beta.or_else(|| r.file.f64("beta")).unwrap_or(2.0);
    let cfg = sim_config(&r, *t_list.last().unwrap());
    let pool = build_pool(r.threads)?;
    let mut emitter = Emitter::new(&r.out, "expmoment")?;
    let report = pool.install(|| est::estimate_exp_moment(&t_list, alpha, beta, &cfg))?;
    emitter.phase("write");

    let mut csv = String::from(
        "t,alpha,estimate,stderr,n,bound,ratio,tail_threshold,tail_prob,tail_prob_stderr,tail_bound\n",
    );
    for row in &report.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            fmt_f64(row.t),
            fmt_f64(alpha),
            fmt_f64(row.result.estimate),
            fmt_f64(row.result.stderr),
            row.result.n,
            fmt_f64(row.bound),
            fmt_f64(row.ratio_to_bound),
            fmt_f64(row.tail_threshold),
            fmt_f64(row.tail_prob.estimate),
            fmt_f64(row.tail_prob.stderr),
            fmt_f64(row.tail_bound),
        ));
        println!(
            "t={}: E[e^(a Im M)] = {:.4} ± {:.4} vs bound {:.4} (ratio {:.3}){}",
            row.t,
            row.result.estimate,
            row.result.stderr,
            row.bound,
            row.ratio_to_bound,
            if row.high_stderr_warning { "  [warning: stderr > 30%]" } else { "" }
        );
    }
    emitter.write_bytes("results.csv", csv.as_bytes())?;
    if r.dump_samples {
        let rows: Vec<(f64, [f64; 2], DriftMode, Vec<FieldSample>)> = report
            .rows
            .iter()
            .filter_map(|row| {
                let m = sim_config(&r, row.t).window_for(row.t).ok()?;
                row.samples.clone().map(|s| (row.t, [-m, m], report.drift_mode, s))
            })
            .collect();
        emitter.write_samples(&rows)?;
    }
    let config = json!({
        "t": t_list,
        "alpha": alpha,
        "beta": beta,
        "samples": r.samples,
        "seed": r.seed,
        "window": window_json(&r),
        "drift_mode": drift_json(r.drift_mode),
    });
    let constants = json!({
        "moment_bound": "exp(pi/2 a^2 e^a) t^(a^2)",
        "tail_bound": "exp(pi b^2/8 e^(b/2)) t^(-b^2/4)",
    });
    emitter.write_json(
        "results.json",
        &Results::new("expmoment", r.seed, config.clone(), constants, &report),
    )?;
    let dir = emitter.finish(manifest_config(&config, &r), r.seed)?;
    println!("wrote {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------

fn run_lln(common: &CommonOpts, t: Option<String>, a: Option<f64>) -> Result<ExitCode, RunError> {
    let r = resolve(common, "lln", 2000)?;
    let t_list = require_t_list(t, &r)?;
    let a = a.or_else(|| r.file.f64("a")).unwrap_or(3.0);
    let cfg = sim_config(&r, *t_list.last().unwrap());
    let pool = build_pool(r.threads)?;
    let mut emitter = Emitter::new(&r.out, "lln")?;
    let report = pool.install(|| est::estimate_lln_tail(&t_list, a, &cfg))?;
    emitter.phase("write");

    let mut csv = String::from("t,a,threshold,prob,stderr,n\n");
    for row in &report.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_f64(row.t),
            fmt_f64(a),
            fmt_f64(row.threshold),
            fmt_f64(row.prob.estimate),
            fmt_f64(row.prob.stderr),
            row.prob.n,
        ));
        println!(
            "t={}: P(Im F < {:.3}) = {:.4} ± {:.4}",
            row.t, row.threshold, row.prob.estimate, row.prob.stderr
        );
    }
    emitter.write_bytes("results.csv", csv.as_bytes())?;
    if r.dump_samples {
        let rows: Vec<(f64, [f64; 2], DriftMode, Vec<FieldSample>)> = report
            .rows
            .iter()
            .filter_map(|row| {
                let m = sim_config(&r, row.t).window_for(row.t).ok()?;
                row.samples.clone().map(|s| (row.t, [-m, m], r.drift_mode, s))
            })
            .collect();
        emitter.write_samples(&rows)?;
    }
    let config = json!({
        "t": t_list,
        "a": a,
        "samples": r.samples,
        "seed": r.seed,
        "window": window_json(&r),
        "drift_mode": drift_json(r.drift_mode),
    });
    let constants = json!({ "surrogate_cap": 0.05 });
    emitter.write_json(
        "results.json",
        &Results::new("lln", r.seed, config.clone(), constants, &report),
    )?;
    let dir = emitter.finish(manifest_config(&config, &r), r.seed)?;
    println!("wrote {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------

fn run_derivmoment(common: &CommonOpts, t: Option<String>) -> Result<ExitCode, RunError> {
    let r = resolve(common, "derivmoment", 500)?;
    let t_list = require_t_list(t, &r)?;
    let cfg = sim_config(&r, *t_list.last().unwrap());
    let pool = build_pool(r.threads)?;
    let mut emitter = Emitter::new(&r.out, "derivmoment")?;
    let report = pool.install(|| est::estimate_derivative_moment(&t_list, &cfg))?;
    emitter.phase("write");

    let mut csv = String::from("t,estimate,stderr,n,ci_lo,ci_hi\n");
    for row in &report.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_f64(row.t),
            fmt_f64(row.result.estimate),
            fmt_f64(row.result.stderr),
            row.result.n,
            fmt_f64(row.result.ci95[0]),
            fmt_f64(row.result.ci95[1]),
        ));
        println!(
            "t={}: E|F'(i ln t)|^2 = {:.4} ± {:.4}",
            row.t, row.result.estimate, row.result.stderr
        );
    }
    emitter.write_bytes("results.csv", csv.as_bytes())?;
    if r.dump_samples {
        let rows: Vec<(f64, [f64; 2], DriftMode, Vec<FieldSample>)> = report
            .rows
            .iter()
            .filter_map(|row| {
                let m = sim_config(&r, row.t).window_for(row.t).ok()?;
                row.samples.clone().map(|s| (row.t, [-m, m], r.drift_mode, s))
            })
            .collect();
        emitter.write_samples(&rows)?;
    }
    let config = json!({
        "t": t_list,
        "samples": r.samples,
        "seed": r.seed,
        "window": window_json(&r),
        "drift_mode": drift_json(r.drift_mode),
    });
    let constants = json!({ "growth_cap": "max <= 2 min + 4 stderr" });
    emitter.write_json(
        "results.json",
        &Results::new("derivmoment", r.seed, config.clone(), constants, &report),
    )?;
    let dir = emitter.finish(manifest_config(&config, &r), r.seed)?;
    println!("wrote {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------

fn run_truncation(
    common: &CommonOpts,
    t: Option<f64>,
    m_small: Option<f64>,
    m_large: Option<f64>,
) -> Result<ExitCode, RunError> {
    let r = resolve(common, "truncation", 500)?;
    let t = require_t(t, &r)?;
    let m_small = m_small
        .or_else(|| r.file.f64("m_small"))
        .ok_or_else(|| usage("--m-small is required"))?;
    let m_large = m_large
        .or_else(|| r.file.f64("m_large"))
        .ok_or_else(|| usage("--m-large is required"))?;
    let cfg = sim_config(&r, t);
    let pool = build_pool(r.threads)?;
    let mut emitter = Emitter::new(&r.out, "truncation")?;
    let report = pool.install(|| est::window_truncation_error(t, m_small, m_large, &cfg))?;
    emitter.phase("write");

    let csv = format!(
        "t,m_small,m_large,estimate,stderr,n,bound\n{},{},{},{},{},{},{}\n",
        fmt_f64(t),
        fmt_f64(m_small),
        fmt_f64(m_large),
        fmt_f64(report.result.estimate),
        fmt_f64(report.result.stderr),
        report.result.n,
        fmt_f64(report.bound),
    );
    println!(
        "E|M_large - M_small|^2 = {:.4} ± {:.4} (reference bound {:.3})",
        report.result.estimate, report.result.stderr, report.bound
    );
    emitter.write_bytes("results.csv", csv.as_bytes())?;
    let config = json!({
        "t": t,
        "m_small": m_small,
        "m_large": m_large,
        "samples": r.samples,
        "seed": r.seed,
    });
    let constants = json!({ "truncation_c": 10.0 });
    emitter.write_json(
        "results.json",
        &Results::new("truncation", r.seed, config.clone(), constants, &report),
    )?;
    let dir = emitter.finish(manifest_config(&config, &r), r.seed)?;
    println!("wrote {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------

fn run_histogram(
    common: &CommonOpts,
    t: Option<f64>,
    bins: Option<usize>,
) -> Result<ExitCode, RunError> {
    let r = resolve(common, "histogram", 5000)?;
    let t = require_t(t, &r)?;
    let bins = bins.or_else(|| r.file.usize("bins")).unwrap_or(40);
    let cfg = sim_config(&r, t);
    let pool = build_pool(r.threads)?;
    let mut emitter = Emitter::new(&r.out, "histogram")?;
    let report = pool.install(|| est::histogram(t, &cfg, bins))?;
    emitter.phase("write");

    let mut csv = String::from("series,bin_lo,bin_hi,count\n");
    for (name, series) in [("im", &report.im), ("re", &report.re)] {
        let width = if series.degenerate {
            0.0
        } else {
            (series.hi - series.lo) / series.counts.len() as f64
        };
        for (i, &count) in series.counts.iter().enumerate() {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                name,
                fmt_f64(series.lo + i as f64 * width),
                fmt_f64(series.lo + (i + 1) as f64 * width),
                count
            ));
        }
    }
    println!(
        "Im M skewness {:?} ± {:?} (kurtosis {:?}); Re M skewness {:?}",
        report.im.skewness, report.im.skew_stderr, report.im.kurtosis, report.re.skewness
    );
    emitter.write_bytes("results.csv", csv.as_bytes())?;
    let config = json!({
        "t": t,
        "bins": bins,
        "samples": r.samples,
        "seed": r.seed,
        "window": window_json(&r),
        "drift_mode": drift_json(r.drift_mode),
    });
    emitter.write_json(
        "results.json",
        &Results::new("histogram", r.seed, config.clone(), json!({}), &report),
    )?;
    let dir = emitter.finish(manifest_config(&config, &r), r.seed)?;
    println!("wrote {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------

fn run_render(
    common: &CommonOpts,
    t: Option<f64>,
    grid: Option<String>,
    with_fluctuation: bool,
) -> Result<ExitCode, RunError> {
    let r = resolve(common, "render", 1)?;
    let t = require_t(t, &r)?;
    if t < 0.0 {
        return Err(usage("--t must be nonnegative"));
    }
    let grid_raw = grid
        .or_else(|| r.file.string("grid"))
        .ok_or_else(|| usage("--grid is required (lo:hi:step)"))?;
    let (lo, hi, step) = parse_grid(&grid_raw)?;
    let n_points = ((hi - lo) / step).floor() as usize + 1;
    let xs: Vec<f64> = (0..n_points).map(|j| lo + j as f64 * step).collect();

    let m = if t > 0.0 {
        sim_config(&r, t).window_for(t).map_err(anyhow::Error::from)?
    } else {
        64.0
    };
    let mut emitter = Emitter::new(&r.out, "render")?;
    let stream = sample_arrivals(lo - m, hi + m, t, r.seed, 0).map_err(anyhow::Error::from)?;
    let forward = render_forward(&stream, &xs, t).map_err(anyhow::Error::from)?;
    emitter.phase("write");

    let rows: Vec<(f64, f64, f64)> =
        xs.iter().zip(&forward).map(|(&x, v)| (x, v.re, v.im)).collect();
    emitter.write_bytes("results.csv", xy_csv("x,re,im", &rows).as_bytes())?;
    let outline: Vec<(f64, f64)> = forward.iter().map(|v| (v.re, v.im)).collect();
    emitter.write_bytes("forward.svg", polyline_svg(&outline).as_bytes())?;

    if with_fluctuation {
        emitter.phase("estimate");
        let points: Vec<TrackedPoint> = xs.iter().map(|&x| TrackedPoint::at(x, 0.0)).collect();
        let run = evolve(&stream, &points, r.drift_mode, &[t]).map_err(anyhow::Error::from)?;
        emitter.phase("write");
        let profile: Vec<(f64, f64, f64)> = xs
            .iter()
            .zip(&run.snapshots[0])
            .map(|(&x, p)| {
                let mv = fluctuation(p, t, r.drift_mode);
                (x, mv.re, mv.im)
            })
            .collect();
        emitter.write_bytes("fluctuation.csv", xy_csv("x,re_m,im_m", &profile).as_bytes())?;
        let poly: Vec<(f64, f64)> = profile.iter().map(|&(x, _, im)| (x, im)).collect();
        emitter.write_bytes("fluctuation.svg", polyline_svg(&poly).as_bytes())?;
    }

    let config = json!({
        "t": t,
        "grid": { "lo": lo, "hi": hi, "step": step },
        "seed": r.seed,
        "window": window_json(&r),
        "drift_mode": drift_json(r.drift_mode),
        "fluctuation": with_fluctuation,
    });
    emitter.write_json(
        "results.json",
        &Results::new("render", r.seed, config.clone(), json!({}), &json!({
            "points": xs.len(),
            "stream_arrivals": stream.arrivals.len(),
        })),
    )?;
    let dir = emitter.finish(manifest_config(&config, &r), r.seed)?;
    println!("rendered {} grid points; wrote {}", xs.len(), dir.display());
    Ok(ExitCode::SUCCESS)
}
