use std::f64::consts::PI;

use anyhow::Context;
use rayon::prelude::*;
use serde::Serialize;
use vspectra::dispersion::{build_branches, eigen_solve, find_growth_max, GrowthSearch, SymbolMatrix, SystemCoeffs};
use vspectra::instability::{build_bump, sandwich_check, AttainingBranch};
use vspectra::model::{classify_stability, derive_coeffs, DerivedCoeffs, ModelParams, Stability};
use vspectra::nonlinear::{
    l2_norm, run_escape_experiment, EscapeConfig, Solver, StepperConfig, TorusField, TorusGrid,
};
use vspectra::optimize::log_space;
use vspectra::ratefit::{NormSeries, RateModel};
use vspectra::semigroup::{decay_envelope_check, decay_times, Component, LinearEvolver};
use vspectra::verify::{generic_profile, omega_fit, run_suite, Suite, PROJECTOR_TOL, VIETA_TOL};
use vspectra::Error;

use crate::output::{num, Run};
use crate::{Common, SimulateArgs};

/// Exit status when a command ran but an assertion failed.
const ASSERTION_FAILED: u8 = 2;

/// Records the outcome in the manifest and maps it to an exit status.
fn close<C: Serialize>(run: Run<C>, outcome: anyhow::Result<bool>) -> anyhow::Result<u8> {
    match outcome {
        Ok(pass) => {
            let code = if pass { 0 } else { ASSERTION_FAILED };
            let manifest = run.finish(pass, code.into(), None)?;
            println!("{}", manifest.display());
            Ok(code)
        }
        Err(e) => {
            let msg = format!("{e:#}");
            run.finish(false, crate::exit_code(&e).into(), Some(&msg))?;
            Err(e)
        }
    }
}

fn invalid(name: &'static str, reason: impl Into<String>) -> anyhow::Error {
    Error::InvalidParameter { name, reason: reason.into() }.into()
}

fn setup(common: &Common) -> anyhow::Result<(ModelParams, DerivedCoeffs)> {
    let params = common.params()?;
    let coeffs = derive_coeffs(&params)?;
    Ok((params, coeffs))
}

#[derive(Debug, Serialize)]
struct GrowthJson {
    stability: Stability,
    discriminant: f64,
    a: f64,
    b: f64,
    #[serde(rename = "Theta", skip_serializing_if = "Option::is_none")]
    theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    xi0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    branch: Option<usize>,
    /// Supremum of `Re lambda` over the search window, whatever the regime.
    sup_re_lambda: f64,
}

fn growth_json(params: &ModelParams, coeffs: &DerivedCoeffs) -> anyhow::Result<GrowthJson> {
    let stability = classify_stability(coeffs);
    let g = find_growth_max(coeffs, params, &GrowthSearch::default_for(coeffs, params))?;
    let unstable = stability == Stability::Unstable && g.attained;
    Ok(GrowthJson {
        stability,
        discriminant: coeffs.discriminant,
        a: coeffs.a,
        b: coeffs.b,
        theta: unstable.then_some(g.theta),
        xi0: unstable.then_some(g.xi0),
        branch: unstable.then_some(g.branch_index),
        sup_re_lambda: g.theta,
    })
}

#[derive(Debug, Serialize)]
struct ScanConfig {
    params: ModelParams,
    r_min: f64,
    r_max: f64,
    points: usize,
}

pub fn dispersion_scan(common: &Common, r_min: f64, r_max: f64, points: usize) -> anyhow::Result<u8> {
    let (params, coeffs) = setup(common)?;
    if !(r_min > 0.0 && r_max > r_min && r_max.is_finite()) {
        return Err(invalid("r-range", format!("need 0 < r_min < r_max, got [{r_min}, {r_max}]")));
    }
    if points < 2 {
        return Err(invalid("points", "need at least two points"));
    }
    let mut run = Run::in_dir("dispersion scan", &common.out, ScanConfig { params, r_min, r_max, points })?;
    let outcome = (|| {
        let params = run.config().params.clone();
        let grid = log_space(r_min, r_max, points);
        let branches = build_branches(&coeffs, &params, &grid)?;
        let sys = SystemCoeffs::new(&coeffs, &params);
        let checked: Vec<(f64, bool, bool)> = grid
            .par_iter()
            .map(|&r| {
                let p = eigen_solve(&SymbolMatrix::new(sys, r)?);
                let ok = p.vieta_residuals().max() <= VIETA_TOL
                    && p.projector_residuals().is_none_or(|res| res.max() <= PROJECTOR_TOL);
                Ok((p.min_gap, p.degenerate, ok))
            })
            .collect::<vspectra::Result<_>>()?;
        let rows: Vec<Vec<String>> = grid
            .iter()
            .zip(&branches.values)
            .zip(&checked)
            .map(|((&r, l), &(gap, degenerate, _))| {
                let mut row = vec![num(r)];
                for z in l {
                    row.push(num(z.re));
                    row.push(num(z.im));
                }
                row.push(num(gap));
                row.push(degenerate.to_string());
                row
            })
            .collect();
        run.write_csv(
            "scan.csv",
            &["r", "re_lambda1", "im_lambda1", "re_lambda2", "im_lambda2", "re_lambda3", "im_lambda3", "min_gap", "degenerate"],
            &rows,
        )?;
        let failures = checked.iter().filter(|c| !c.2).count();
        if failures > 0 {
            eprintln!("invariant check failed at {failures} of {points} wavenumbers");
        }
        let summary = growth_json(&params, &coeffs)?;
        run.write_json("summary.json", &summary)?;
        Ok(failures == 0)
    })();
    close(run, outcome)
}

pub fn dispersion_growth(common: &Common) -> anyhow::Result<u8> {
    let (params, coeffs) = setup(common)?;
    let mut run = Run::in_dir("dispersion growth", &common.out, params)?;
    let outcome = (|| {
        let summary = growth_json(run.config(), &coeffs)?;
        run.write_json("summary.json", &summary)?;
        Ok(true)
    })();
    close(run, outcome)
}

#[derive(Debug, Serialize)]
struct WindowConfig {
    params: ModelParams,
    window: (f64, f64),
}

fn check_window(window: (f64, f64)) -> anyhow::Result<()> {
    if !(window.0 > 0.0 && window.1 > window.0 && window.1.is_finite()) {
        return Err(invalid("window", format!("need 0 < t_min < t_max, got [{}, {}]", window.0, window.1)));
    }
    Ok(())
}

pub fn semigroup_decay(common: &Common, window: (f64, f64)) -> anyhow::Result<u8> {
    let (params, coeffs) = setup(common)?;
    check_window(window)?;
    if classify_stability(&coeffs) != Stability::Stable {
        return Err(Error::Regime("decay tables need a stable parameter set".into()).into());
    }
    let mut run = Run::in_dir("semigroup decay", &common.out, WindowConfig { params, window })?;
    let outcome = (|| {
        let sys = SystemCoeffs::new(&coeffs, &run.config().params);
        let ev = LinearEvolver::new(sys, &generic_profile()?.low_part())?;
        let mut rows = Vec::new();
        for t in decay_times(window.0, window.1) {
            let snap = ev.at(t)?;
            for c in Component::ALL {
                for k in 0..4u32 {
                    rows.push(vec![num(t), c.name().to_string(), k.to_string(), num(snap.norm(c, k))]);
                }
            }
        }
        run.write_csv("decay.csv", &["t", "component", "k", "norm"], &rows)?;
        Ok(true)
    })();
    close(run, outcome)
}

#[derive(Debug, Serialize)]
struct FitRow {
    field: String,
    k: u32,
    model: RateModel,
    exponent: f64,
    expected: f64,
    pass: bool,
    r2: f64,
    window: (f64, f64),
}

pub fn semigroup_check(common: &Common, window: (f64, f64)) -> anyhow::Result<u8> {
    let (params, coeffs) = setup(common)?;
    check_window(window)?;
    let mut run = Run::in_dir("semigroup check", &common.out, WindowConfig { params, window })?;
    let outcome = (|| {
        let params = run.config().params.clone();
        let fits = decay_envelope_check(&coeffs, &params, &generic_profile()?, &[0, 1, 2, 3], window)?;
        let mut rows: Vec<FitRow> = fits
            .iter()
            .map(|f| FitRow {
                field: f.component.name().to_string(),
                k: f.k,
                model: f.fit.model,
                exponent: f.fit.exponent,
                expected: f.expected,
                pass: f.pass,
                r2: f.fit.r_squared,
                window: f.fit.window,
            })
            .collect();
        let omega = omega_fit(params.alpha)?;
        rows.push(FitRow {
            field: "omega".into(),
            k: 0,
            model: omega.model,
            exponent: omega.exponent,
            expected: params.alpha,
            pass: (omega.exponent - params.alpha).abs() <= 1e-6,
            r2: omega.r_squared,
            window: omega.window,
        });
        let pass = rows.iter().all(|r| r.pass);
        run.write_json("check.json", &rows)?;
        Ok(pass)
    })();
    close(run, outcome)
}

#[derive(Debug, Serialize)]
struct CertifyConfig {
    params: ModelParams,
    theta_bar: Option<f64>,
    t_max: Option<f64>,
    samples: usize,
}

#[derive(Debug, Serialize)]
struct Certificate {
    #[serde(rename = "Theta")]
    theta: f64,
    xi0: f64,
    zeta_bar: f64,
    theta_bar: f64,
    t_max: f64,
    pass: bool,
    worst_ratio: f64,
    worst_t: Option<f64>,
    worst_component: Option<Component>,
    cross_check_error: f64,
}

pub fn certify(common: &Common, theta_bar: Option<f64>, t_max: Option<f64>, samples: usize) -> anyhow::Result<u8> {
    let (params, coeffs) = setup(common)?;
    if samples < 2 {
        return Err(invalid("samples", "need at least two sample times"));
    }
    let growth = find_growth_max(&coeffs, &params, &GrowthSearch::default_for(&coeffs, &params))?;
    if classify_stability(&coeffs) != Stability::Unstable || !growth.attained {
        return Err(Error::Regime("certification needs an unstable parameter set".into()).into());
    }
    let theta = growth.theta;
    let tb = theta_bar.unwrap_or(0.25 * theta);
    if !(tb > 0.0 && tb < 0.5 * theta) {
        return Err(invalid("theta-bar", format!("must lie in (0, {}), got {tb}", 0.5 * theta)));
    }
    let tm = t_max.unwrap_or(20.0 / theta);
    if !(tm > 0.0 && theta * tm <= 40.0) {
        return Err(invalid("t-max", format!("need 0 < t_max <= {}, got {tm}", 40.0 / theta)));
    }
    let mut run = Run::in_dir("instability certify", &common.out, CertifyConfig { params, theta_bar, t_max, samples })?;
    let outcome = (|| {
        let sys = SystemCoeffs::new(&coeffs, &run.config().params);
        let bump = build_bump(&AttainingBranch::track(sys, &growth)?, tb)?;
        let times: Vec<f64> = (0..samples).map(|i| tm * i as f64 / (samples - 1) as f64).collect();
        let rep = sandwich_check(&bump, &times)?;
        let cert = Certificate {
            theta,
            xi0: growth.xi0,
            zeta_bar: bump.zeta_bar,
            theta_bar: tb,
            t_max: tm,
            pass: rep.pass,
            worst_ratio: rep.worst_ratio,
            worst_t: rep.worst.map(|w| w.0),
            worst_component: rep.worst.map(|w| w.1),
            cross_check_error: rep.cross_check_error,
        };
        run.write_json("certificate.json", &cert)?;
        Ok(rep.pass)
    })();
    close(run, outcome)
}

pub fn verify(common: &Common, suite: Suite) -> anyhow::Result<u8> {
    let params = common.params()?;
    let mut run = Run::in_dir("verify", &common.out, (suite, params))?;
    let outcome = (|| {
        let report = run_suite(suite, &run.config().1)?;
        for c in report.checks.iter().filter(|c| !c.pass) {
            eprintln!("FAIL {}: {} (expected {}, tolerance {})", c.name, c.value, c.expected, c.tolerance);
        }
        run.write_json(&format!("verify-{suite}.json"), &report)?;
        Ok(report.pass)
    })();
    close(run, outcome)
}

/// Parses `hi:lo` into one value per decade, or a comma-separated list.
pub fn parse_sweep(spec: &str) -> anyhow::Result<Vec<f64>> {
    let bad = || invalid("delta-sweep", format!("expected `hi:lo` or `d1,d2,...`, got `{spec}`"));
    let values: Vec<f64> = if let Some((hi, lo)) = spec.split_once(':') {
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        if !(hi > 0.0 && lo > 0.0) {
            return Err(bad());
        }
        let decades = (hi / lo).log10().abs();
        let count = decades.round() as usize + 1;
        if (decades - decades.round()).abs() > 1e-9 {
            return Err(invalid("delta-sweep", "range ends must differ by a whole number of decades"));
        }
        // step the decimal exponent so 1e-6 parses as the literal, not 1e-4 / 100
        let text = format!("{hi:e}");
        let (mantissa, exp) = text.split_once('e').ok_or_else(bad)?;
        let exp: i32 = exp.parse().map_err(|_| bad())?;
        let step = if hi >= lo { -1 } else { 1 };
        (0..count as i32)
            .map(|i| format!("{mantissa}e{}", exp + step * i).parse::<f64>().map_err(|_| bad()))
            .collect::<anyhow::Result<_>>()?
    } else {
        spec.split(',').map(|s| s.trim().parse::<f64>().map_err(|_| bad())).collect::<anyhow::Result<_>>()?
    };
    if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(bad());
    }
    Ok(values)
}

#[derive(Debug, Clone, Serialize)]
struct SimulateConfig {
    params: ModelParams,
    dim: usize,
    n: usize,
    length: f64,
    dt: f64,
    t_max: f64,
    amplitude: f64,
    epsilon0: f64,
    deltas: Option<Vec<f64>>,
    sweep_length: Option<f64>,
    sweep_t_max: Option<f64>,
    seed: u64,
    sample_every: u64,
}

#[derive(Debug, Serialize)]
struct EscapeEntry {
    delta: f64,
    #[serde(rename = "T_delta")]
    t_delta: Option<f64>,
    crossed: bool,
    predicted_t: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Meta<'a> {
    config: &'a SimulateConfig,
    code_version: &'a str,
    steps: u64,
    t_final: f64,
    mean_rho_drift: f64,
    hermitian_defect: f64,
    escape_slope: Option<f64>,
    expected_slope: Option<f64>,
}

/// Largest accepted change of the mean density over a run.
pub const DRIFT_TOL: f64 = 1e-10;

pub fn simulate(args: &SimulateArgs) -> anyhow::Result<u8> {
    let (params, coeffs) = setup(&args.common)?;
    if !(args.amplitude > 0.0 && args.t_max > 0.0 && args.dt > 0.0) {
        return Err(invalid("simulate", "amplitude, dt and t-max must be positive"));
    }
    if args.sample_every == 0 {
        return Err(invalid("sample-every", "must be positive"));
    }
    let deltas = args.delta_sweep.as_deref().map(parse_sweep).transpose()?;
    if deltas.is_some() && args.dim != 1 {
        return Err(invalid("delta-sweep", "escape sweeps run in one dimension only"));
    }
    let cfg = SimulateConfig {
        epsilon0: args.epsilon0.unwrap_or(0.05 * params.rho_bar),
        params,
        dim: args.dim,
        n: args.n,
        length: args.length.unwrap_or(8.0 * PI),
        dt: args.dt,
        t_max: args.t_max,
        amplitude: args.amplitude,
        deltas,
        sweep_length: args.length,
        sweep_t_max: args.sweep_t_max,
        seed: args.seed,
        sample_every: args.sample_every,
    };
    let grid = TorusGrid::new(cfg.dim, cfg.n, cfg.length)?;
    StepperConfig::new(cfg.dt).validate(&grid, coeffs.a)?;
    let mut run = Run::fresh("simulate", &args.common.out, cfg)?;
    eprintln!("run directory {}", run.dir().display());
    let outcome = (|| {
        let cfg = run.config().clone();
        let init = TorusField::random_low_modes(&grid, cfg.amplitude, 3, cfg.seed);
        let mean0 = init.mean_rho();
        let mut solver =
            Solver::new(grid.clone(), cfg.params.clone(), coeffs, StepperConfig::new(cfg.dt), init)?;
        let mut series = NormSeries::default();
        solver.norms().push_into(&mut series, 0.0);
        let mut crossing = None;
        let mut prev = (0.0, l2_norm(&grid, &solver.state().rho, 0));
        let steps = (cfg.t_max / cfg.dt).round() as u64;
        for _ in 0..steps {
            solver.step()?;
            let t = solver.time();
            if solver.steps() % cfg.sample_every == 0 || solver.steps() == steps {
                solver.norms().push_into(&mut series, t);
            }
            let rho = l2_norm(&grid, &solver.state().rho, 0);
            if crossing.is_none() && rho >= cfg.epsilon0 && prev.1 < cfg.epsilon0 {
                let w = (cfg.epsilon0.ln() - prev.1.ln()) / (rho.ln() - prev.1.ln());
                crossing = Some(prev.0 + w * (t - prev.0));
            }
            prev = (t, rho);
        }
        let drift = (solver.state().mean_rho() - mean0).abs();
        let defect = solver.state().hermitian_defect(&grid);
        run.write_csv("norms.csv", &["t", "field", "k", "norm"], &norm_rows(&series))?;

        let (entries, slope, expected_slope, sweep_pass) = match &cfg.deltas {
            None => {
                let e = EscapeEntry {
                    delta: cfg.amplitude,
                    t_delta: crossing,
                    crossed: crossing.is_some(),
                    predicted_t: None,
                };
                (vec![e], None, None, true)
            }
            Some(deltas) => {
                let growth = find_growth_max(&coeffs, &cfg.params, &GrowthSearch::default_for(&coeffs, &cfg.params))?;
                let esc = EscapeConfig {
                    n: cfg.n,
                    length: cfg.sweep_length,
                    dt: cfg.dt,
                    epsilon0: cfg.epsilon0,
                    deltas: deltas.clone(),
                    t_max: cfg.sweep_t_max,
                    sample_every: cfg.sample_every,
                };
                let rep = run_escape_experiment(&cfg.params, &coeffs, &growth, &esc)?;
                let entries = rep
                    .runs
                    .iter()
                    .map(|r| EscapeEntry {
                        delta: r.delta,
                        t_delta: r.t_delta,
                        crossed: r.crossed,
                        predicted_t: Some(r.predicted_t),
                    })
                    .collect();
                (entries, rep.slope, Some(rep.expected_slope), rep.pass)
            }
        };
        run.write_json("escape.json", &entries)?;
        let meta = Meta {
            config: &cfg,
            code_version: crate::output::CODE_VERSION,
            steps: solver.steps(),
            t_final: solver.time(),
            mean_rho_drift: drift,
            hermitian_defect: defect,
            escape_slope: slope,
            expected_slope,
        };
        run.write_json("meta.json", &meta)?;
        if drift >= DRIFT_TOL {
            eprintln!("mean density drift {drift:e} exceeds {DRIFT_TOL:e}");
        }
        Ok(drift < DRIFT_TOL && sweep_pass)
    })();
    close(run, outcome).context("simulate")
}

fn norm_rows(series: &NormSeries) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (i, &t) in series.times.iter().enumerate() {
        for (&(field, k), values) in &series.series {
            rows.push(vec![num(t), field.name().to_string(), k.to_string(), num(values[i])]);
        }
    }
    rows
}
