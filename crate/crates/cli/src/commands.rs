//! Subcommand implementations. Every command produces its full output as a
//! string (CSV or JSON) plus a flag marking soft numerical failures
//! (non-convergence, missing thresholds, failed identity checks) that turn
//! into exit code 1 after the output is written.

use rayon::prelude::*;
use serde_json::json;

use spikelab::amp::{
    run_amp, run_coupled_amp, sample_coupled_instance, sample_instance, AmpOptions, SnrSource,
};
use spikelab::exact_oracle::{
    finite_n_mutual_information, immse_check, mmse_inequality_check, nishimori_check,
    superadditivity_check,
};
use spikelab::potential::{ScalarModel, StationaryKind};
use spikelab::prior::DiscretePrior;
use spikelab::spatial_coupling::{
    run_coupled_se, triangle_coupling, CoupledSeOptions, PinMode,
};
use spikelab::state_evolution::{e_good, run_se, SeOptions};

use crate::config::{CliError, Settings};
use crate::output::{fmt_f64, Csv};

pub struct CmdOutput {
    pub body: String,
    pub numerical_flag: bool,
}

impl CmdOutput {
    fn clean(body: String) -> Self {
        Self {
            body,
            numerical_flag: false,
        }
    }
}

type CmdResult = Result<CmdOutput, CliError>;

fn model_from(settings: &Settings) -> Result<ScalarModel, CliError> {
    let prior = settings.prior()?;
    let delta: f64 = settings.require("delta")?;
    if !(delta > 0.0) {
        return Err(CliError::config(format!(
            "field `delta`: must be positive, got {delta}"
        )));
    }
    Ok(ScalarModel::new(prior, delta))
}

/// CSV columns E, i_rs, d_i_rs over a uniform E grid.
pub fn cmd_potential(settings: &Settings) -> CmdResult {
    let model = model_from(settings)?;
    let grid: usize = settings.parse_or("grid", 201)?;
    if grid < 2 {
        return Err(CliError::config("field `grid`: need at least 2 points"));
    }
    let v = model.v();
    let mut csv = Csv::new(&["E", "i_rs", "d_i_rs"]);
    for i in 0..grid {
        let e = v * i as f64 / (grid - 1) as f64;
        let value = model
            .i_rs(e)
            .map_err(|e| CliError::numerical(e.to_string()))?;
        let deriv = model
            .i_rs_derivative(e)
            .map_err(|e| CliError::numerical(e.to_string()))?;
        csv.row(&[fmt_f64(e), fmt_f64(value), fmt_f64(deriv)]);
    }
    Ok(CmdOutput::clean(csv.finish()))
}

/// Geometric scan grid used when no explicit threshold bracket is supplied.
fn default_scan(prior: &DiscretePrior) -> Vec<f64> {
    let scale = prior.second_moment().powi(2);
    let lo = 1e-2 * scale;
    let hi = 10.0 * scale;
    (0..64)
        .map(|i| lo * (hi / lo).powf(i as f64 / 63.0))
        .collect()
}

fn se_reaches_floor(prior: &DiscretePrior, delta: f64) -> bool {
    let model = ScalarModel::new(prior.clone(), delta);
    let opts = SeOptions::default();
    let floor = e_good(&model, &opts).fixed_point;
    let from_v = run_se(&model, model.v(), &opts).fixed_point;
    (from_v - floor).abs() <= 1e-7 * model.v().max(1e-12)
}

fn overlap_at(prior: &DiscretePrior, delta: f64) -> Result<f64, CliError> {
    let model = ScalarModel::new(prior.clone(), delta);
    let report = model
        .report()
        .map_err(|e| CliError::numerical(e.to_string()))?;
    Ok((model.v() - report.global_min_e).max(f64::MIN_POSITIVE))
}

/// Find the AMP threshold: first flip of the SE-success indicator on the
/// coarse grid, then bisect. The stall window can be narrower than the
/// coarse spacing, but whenever a hard phase exists it contains the RS
/// transition, so a fine backward walk from a located delta_RS recovers it.
fn scan_delta_amp(
    prior: &DiscretePrior,
    grid: &[f64],
    rs_hint: Option<f64>,
) -> Option<(f64, (f64, f64))> {
    let flags: Vec<bool> = grid.iter().map(|&d| se_reaches_floor(prior, d)).collect();
    if let Some(k) = (1..grid.len()).find(|&k| flags[k - 1] && !flags[k]) {
        let bracket = (grid[k - 1], grid[k]);
        return spikelab::potential::delta_amp(prior, bracket.0, bracket.1)
            .ok()
            .map(|d| (d, bracket));
    }
    let rs = rs_hint?;
    if se_reaches_floor(prior, rs) {
        return None;
    }
    let mut hi = rs;
    for _ in 0..256 {
        let lo = hi * 0.995;
        if se_reaches_floor(prior, lo) {
            return spikelab::potential::delta_amp(prior, lo, hi)
                .ok()
                .map(|d| (d, (lo, hi)));
        }
        hi = lo;
    }
    None
}

/// Find the RS threshold: the argmin of i_RS drops from the informative
/// branch to the uninformative one; the classifying overlap level is
/// calibrated from the scan ends. A prior without a transition (the overlap
/// declines smoothly, e.g. dense Bernoulli) is filtered out by requiring the
/// drop to be sharp on a +-5% noise window around the located point.
fn scan_delta_rs(
    prior: &DiscretePrior,
    grid: &[f64],
) -> Result<Option<(f64, (f64, f64))>, CliError> {
    let overlaps: Vec<f64> = grid
        .iter()
        .map(|&d| overlap_at(prior, d))
        .collect::<Result<_, _>>()?;
    let (first, last) = (overlaps[0], *overlaps.last().unwrap());
    if !(first > 4.0 * last) {
        return Ok(None);
    }
    let kappa = (first * last).sqrt();
    let Some(k) = (1..grid.len()).find(|&k| overlaps[k - 1] > kappa && overlaps[k] <= kappa)
    else {
        return Ok(None);
    };
    let (mut lo, mut hi) = (grid[k - 1], grid[k]);
    while hi - lo > 1e-6 * hi {
        let mid = 0.5 * (lo + hi);
        if overlap_at(prior, mid)? > kappa {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let located = 0.5 * (lo + hi);
    let sharpness = overlap_at(prior, 0.95 * located)? / overlap_at(prior, 1.05 * located)?;
    if sharpness < 5.0 {
        return Ok(None);
    }
    Ok(Some((located, (grid[k - 1], grid[k]))))
}

/// JSON report {delta_amp, delta_rs, brackets, stationary_points}.
pub fn cmd_thresholds(settings: &Settings) -> CmdResult {
    let prior = settings.prior()?;
    let scan = default_scan(&prior);

    let rs = match settings.bracket("bracket_rs")? {
        Some((lo, hi)) => spikelab::potential::delta_rs(&prior, lo, hi)
            .map(|d| (d, (lo, hi)))
            .map_err(|e| CliError::numerical(e.to_string()))
            .map(Some)?,
        None => scan_delta_rs(&prior, &scan)?,
    };
    let amp = match settings.bracket("bracket_amp")? {
        Some((lo, hi)) => spikelab::potential::delta_amp(&prior, lo, hi)
            .map(|d| (d, (lo, hi)))
            .map_err(|e| CliError::numerical(e.to_string()))
            .map(Some)?,
        None => scan_delta_amp(&prior, &scan, rs.map(|(d, _)| d)),
    };

    let stationary = match settings.parse::<f64>("delta")? {
        Some(delta) => {
            let model = ScalarModel::new(prior.clone(), delta);
            let pts = model
                .stationary_points()
                .map_err(|e| CliError::numerical(e.to_string()))?;
            pts.iter()
                .map(|p| {
                    json!({
                        "e": p.e,
                        "i_rs": p.value,
                        "kind": match p.kind {
                            StationaryKind::Minimum => "minimum",
                            StationaryKind::Maximum => "maximum",
                        },
                    })
                })
                .collect::<Vec<_>>()
        }
        None => Vec::new(),
    };

    let missing = amp.is_none() || rs.is_none();
    let body = serde_json::to_string_pretty(&json!({
        "delta_amp": amp.map(|(d, _)| d),
        "delta_rs": rs.map(|(d, _)| d),
        "bracket_amp": amp.map(|(_, b)| vec![b.0, b.1]),
        "bracket_rs": rs.map(|(_, b)| vec![b.0, b.1]),
        "stationary_points": stationary,
    }))
    .expect("json serialization")
        + "\n";
    Ok(CmdOutput {
        body,
        numerical_flag: missing,
    })
}

/// CSV columns t, E.
pub fn cmd_se(settings: &Settings) -> CmdResult {
    let model = model_from(settings)?;
    let e0 = settings.parse_or("e0", model.v())?;
    if !(0.0..=model.v()).contains(&e0) {
        return Err(CliError::config(format!(
            "field `e0`: must lie in [0, v], got {e0}"
        )));
    }
    let opts = SeOptions {
        t_max: settings.parse_or("tmax", 10_000)?,
        tol: settings.parse_or("tol", 1e-12)?,
        record: true,
    };
    let trace = run_se(&model, e0, &opts);
    let mut csv = Csv::new(&["t", "E"]);
    for (t, &e) in trace.values.iter().enumerate() {
        csv.row(&[t.to_string(), fmt_f64(e)]);
    }
    Ok(CmdOutput {
        body: csv.finish(),
        numerical_flag: !trace.converged,
    })
}

/// CSV columns t, mu, E_mu.
pub fn cmd_coupled_se(settings: &Settings) -> CmdResult {
    let model = model_from(settings)?;
    let l: usize = settings.require("L")?;
    let w: usize = settings.require("w")?;
    let coupling =
        triangle_coupling(l, w).map_err(|e| CliError::config(e.to_string()))?;
    let pin_mode = if settings.flag("open_chain")? {
        PinMode::OpenLeftSeed
    } else {
        PinMode::RingSeed
    };
    let opts = CoupledSeOptions {
        t_max: settings.parse_or("tmax", 2_000)?,
        tol: settings.parse_or("tol", 1e-10)?,
        pin_mode,
        record_history: true,
        stop_below: None,
    };
    let trace = run_coupled_se(&model, &coupling, &opts)
        .map_err(|e| CliError::numerical(e.to_string()))?;
    let stride: usize = settings.parse_or("stride", 1)?.max(1);
    let mut csv = Csv::new(&["t", "mu", "E_mu"]);
    for (t, profile) in trace.history.iter().enumerate() {
        if t % stride != 0 && t != trace.history.len() - 1 {
            continue;
        }
        for (mu, &e) in profile.iter().enumerate() {
            csv.row(&[t.to_string(), mu.to_string(), fmt_f64(e)]);
        }
    }
    Ok(CmdOutput {
        body: csv.finish(),
        numerical_flag: !trace.converged,
    })
}

/// CSV columns seed, t, Vmse, Mmse, E_se, Mmse_se; per-seed rows followed by
/// mean rows.
pub fn cmd_amp(settings: &Settings) -> CmdResult {
    let model = model_from(settings)?;
    let n: usize = settings.require("n")?;
    let n_seeds: usize = settings.parse_or("seeds", 1)?;
    let base_seed: u64 = settings.parse_or("seed", 0u64)?;
    let t_max: usize = settings.parse_or("tmax", 25)?;
    let se_driven = settings.flag("se_driven")?;

    let se = run_se(
        &model,
        model.v(),
        &SeOptions {
            t_max,
            tol: 0.0,
            record: true,
        },
    );
    let v = model.v();
    let mmse_se = |t: usize| v * v - (v - se.values[t]) * (v - se.values[t]);

    let traces: Vec<Result<_, CliError>> = (0..n_seeds)
        .into_par_iter()
        .map(|k| {
            let sub_seed = base_seed ^ (k as u64);
            let inst = sample_instance(&model.prior, n, model.delta, sub_seed)
                .map_err(|e| CliError::config(e.to_string()))?;
            let opts = AmpOptions {
                t_max,
                snr_source: if se_driven {
                    SnrSource::SeDriven(se.values.clone())
                } else {
                    SnrSource::Empirical
                },
            };
            let trace = run_amp(&inst, &model.prior, &opts)
                .map_err(|e| CliError::numerical(e.to_string()))?;
            Ok((sub_seed, trace))
        })
        .collect();

    let mut csv = Csv::new(&["seed", "t", "Vmse", "Mmse", "E_se", "Mmse_se"]);
    let mut mean_v = vec![0.0f64; t_max + 1];
    let mut mean_m = vec![0.0f64; t_max + 1];
    for result in &traces {
        let (sub_seed, trace) = match result {
            Ok(x) => x,
            Err(CliError::Numerical(m)) => return Err(CliError::numerical(m.clone())),
            Err(CliError::Config(m)) => return Err(CliError::config(m.clone())),
        };
        for it in &trace.iterates {
            mean_v[it.t] += it.vmse / n_seeds as f64;
            mean_m[it.t] += it.mmse / n_seeds as f64;
            csv.row(&[
                sub_seed.to_string(),
                it.t.to_string(),
                fmt_f64(it.vmse),
                fmt_f64(it.mmse),
                fmt_f64(se.values[it.t]),
                fmt_f64(mmse_se(it.t)),
            ]);
        }
    }
    for t in 1..=t_max {
        csv.row(&[
            "mean".to_string(),
            t.to_string(),
            fmt_f64(mean_v[t]),
            fmt_f64(mean_m[t]),
            fmt_f64(se.values[t]),
            fmt_f64(mmse_se(t)),
        ]);
    }
    Ok(CmdOutput::clean(csv.finish()))
}

/// CSV columns seed, t, mu, Vmse, E_se.
pub fn cmd_coupled_amp(settings: &Settings) -> CmdResult {
    let model = model_from(settings)?;
    let n: usize = settings.require("n")?;
    let l: usize = settings.require("L")?;
    let w: usize = settings.require("w")?;
    let n_seeds: usize = settings.parse_or("seeds", 1)?;
    let base_seed: u64 = settings.parse_or("seed", 0u64)?;
    let t_max: usize = settings.parse_or("tmax", 30)?;
    let coupling =
        triangle_coupling(l, w).map_err(|e| CliError::config(e.to_string()))?;

    let se_opts = CoupledSeOptions {
        t_max,
        tol: 0.0,
        pin_mode: PinMode::RingSeed,
        record_history: true,
        stop_below: None,
    };
    let se = run_coupled_se(&model, &coupling, &se_opts)
        .map_err(|e| CliError::numerical(e.to_string()))?;

    let mut csv = Csv::new(&["seed", "t", "mu", "Vmse", "E_se"]);
    let mut mean = vec![vec![0.0f64; l + 1]; t_max + 1];
    // instances are large; seeds run sequentially so only one is resident
    for k in 0..n_seeds {
        let sub_seed = base_seed ^ (k as u64);
        let inst = sample_coupled_instance(&model.prior, n, &coupling, model.delta, sub_seed)
            .map_err(|e| CliError::config(e.to_string()))?;
        let trace = run_coupled_amp(&inst, &model.prior, &AmpOptions {
            t_max,
            snr_source: SnrSource::Empirical,
        })
        .map_err(|e| CliError::numerical(e.to_string()))?;
        for it in &trace.iterates {
            for (mu, &vm) in it.vmse.iter().enumerate() {
                mean[it.t][mu] += vm / n_seeds as f64;
                csv.row(&[
                    sub_seed.to_string(),
                    it.t.to_string(),
                    mu.to_string(),
                    fmt_f64(vm),
                    fmt_f64(se.history[it.t][mu]),
                ]);
            }
        }
    }
    for t in 1..=t_max {
        for mu in 0..=l {
            csv.row(&[
                "mean".to_string(),
                t.to_string(),
                mu.to_string(),
                fmt_f64(mean[t][mu]),
                fmt_f64(se.history[t][mu]),
            ]);
        }
    }
    Ok(CmdOutput::clean(csv.finish()))
}

/// CSV columns rho, Delta_AMP, Delta_RS, Delta_spectral.
pub fn cmd_phase_diagram(settings: &Settings) -> CmdResult {
    let rho_grid = settings
        .grid("rho_grid")?
        .ok_or_else(|| CliError::config("missing required field `rho_grid`"))?;
    let family: String = settings.parse_or("family", "spiked".to_string())?;
    let eps: f64 = settings.parse_or("eps", 1e-4)?;
    let build = |rho: f64| -> Result<(DiscretePrior, f64), CliError> {
        match family.as_str() {
            "spiked" => Ok((
                DiscretePrior::bernoulli(rho)
                    .map_err(|e| CliError::config(e.to_string()))?,
                rho * rho,
            )),
            "community" => Ok((
                DiscretePrior::community_biased(rho, eps)
                    .map_err(|e| CliError::config(e.to_string()))?,
                1.0,
            )),
            other => Err(CliError::config(format!(
                "field `family`: expected spiked|community, got `{other}`"
            ))),
        }
    };
    // validate the family eagerly so config errors win over numerics
    build(rho_grid[0])?;

    let rows: Vec<Result<(f64, Option<f64>, Option<f64>, f64), CliError>> = rho_grid
        .par_iter()
        .map(|&rho| {
            let (prior, spectral) = build(rho)?;
            let scan = default_scan(&prior);
            let rs = scan_delta_rs(&prior, &scan)?.map(|(d, _)| d);
            let amp = scan_delta_amp(&prior, &scan, rs).map(|(d, _)| d);
            Ok((rho, amp, rs, spectral))
        })
        .collect();

    // A density without a transition is data (the threshold lines end at the
    // tricritical point), so absent values print as nan without raising the
    // numerical-failure flag.
    let mut csv = Csv::new(&["rho", "Delta_AMP", "Delta_RS", "Delta_spectral"]);
    for row in rows {
        let (rho, amp, rs, spectral) = row?;
        let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_else(|| "nan".to_string());
        csv.row(&[fmt_f64(rho), opt(amp), opt(rs), fmt_f64(spectral)]);
    }
    Ok(CmdOutput::clean(csv.finish()))
}

/// JSON report: Nishimori gaps, finite-n mutual information, I-MMSE
/// residual, matrix-vs-vector MMSE inequality rows, superadditivity probe,
/// and the replica-bound diagnostic gap.
pub fn cmd_oracle(settings: &Settings) -> CmdResult {
    let model = model_from(settings)?;
    let prior = &model.prior;
    let delta = model.delta;
    let n: usize = settings.parse_or("n", 8)?;
    let samples: usize = settings.parse_or("samples", 2000)?;
    let seed: u64 = settings.parse_or("seed", 0u64)?;
    let fd_step: f64 = settings.parse_or("fd_step", 0.05)?;
    let sizes: Vec<usize> = match settings.get("sizes") {
        Some(raw) => raw
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| CliError::config(format!("field `sizes`: cannot parse `{raw}`")))?,
        None => vec![4, 6, 8, 10],
    };
    let num = |e: &spikelab::exact_oracle::OracleError| CliError::numerical(e.to_string());

    let nish = nishimori_check(prior, n, delta, samples, seed).map_err(|e| num(&e))?;
    let mi = finite_n_mutual_information(prior, n, delta, samples, seed ^ 0x5eed)
        .map_err(|e| num(&e))?;
    let immse = immse_check(prior, n, delta, fd_step, samples, seed ^ 0x1dea)
        .map_err(|e| num(&e))?;
    let ineq = mmse_inequality_check(prior, &sizes, delta, samples, seed ^ 0xfeed)
        .map_err(|e| num(&e))?;
    let sup = superadditivity_check(prior, n / 2, delta, samples, seed ^ 0xadd)
        .map_err(|e| num(&e))?;

    let asymptotic = model
        .report()
        .map_err(|e| CliError::numerical(e.to_string()))?;

    let nish_ok = nish.first_moment_gap.consistent_with_zero(3.0)
        && nish.pair_moment_gap.consistent_with_zero(3.0)
        && nish.second_moment_gap.consistent_with_zero(3.0);
    let ineq_ok = ineq.iter().all(|r| r.pass);
    let est = |e: &spikelab::exact_oracle::Estimate| json!({"mean": e.mean, "stderr": e.stderr});

    let body = serde_json::to_string_pretty(&json!({
        "n": n,
        "delta": delta,
        "samples": samples,
        "seed": seed,
        "nishimori": {
            "first_moment_gap": est(&nish.first_moment_gap),
            "pair_moment_gap": est(&nish.pair_moment_gap),
            "second_moment_gap": est(&nish.second_moment_gap),
            "pass": nish_ok,
        },
        "mutual_information": {
            "per_variable": est(&mi),
            "asymptotic_min_i_rs": asymptotic.global_min_value,
            "replica_bound_gap": mi.mean - asymptotic.global_min_value,
        },
        "immse": {
            "derivative": est(&immse.derivative),
            "quarter_mmse": est(&immse.quarter_mmse),
            "residual": est(&immse.residual),
            "bound": immse.bound,
            "pass": immse.pass,
        },
        "inequality": ineq.iter().map(|r| json!({
            "n": r.n,
            "mmse": est(&r.mmse),
            "vmse": est(&r.vmse),
            "slack": r.slack,
            "slack_stderr": r.slack_stderr,
            "overlap_variance": r.overlap_variance,
            "pass": r.pass,
        })).collect::<Vec<_>>(),
        "superadditivity": {
            "small_per_variable": est(&sup.small),
            "large_per_variable": est(&sup.large),
            "gain_nats": sup.gain,
            "combined_stderr": sup.combined_stderr,
            "soft_pass": sup.gain >= -3.0 * sup.combined_stderr,
        },
    }))
    .expect("json serialization")
        + "\n";
    let ok = nish_ok && immse.pass && ineq_ok;
    Ok(CmdOutput {
        body,
        numerical_flag: !ok,
    })
}
