//! One runner per mode. Each resolves its defaults into the config, writes
//! its artifacts and returns diagnostics for `meta.json`.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::time::Instant;

use rabi_dpt::hilbert::OperatorKind;
use rabi_dpt::loschmidt::{analytic_rate_g2zero, detect_kinks, fit_kink, run_rate, KinkOptions};
use rabi_dpt::quench::{
    critical_coupling, finite_eta_scaling, linspace, run_quench, sweep_order_parameters, time_grid, QuenchSpec,
    SWEEP_OPERATORS,
};
use rabi_dpt::semiclassics::{
    classical_energy, ensemble_average, initial_condition, integrate, sign_flip_time, stroboscopic_section,
};
use rabi_dpt::spectra::SpectrumCache;
use rabi_dpt::Branch;
use serde_json::{json, Value};

use crate::config::{Mode, RunConfig};
use crate::output::{num, OutputDir};
use crate::CliError;

pub const DEFAULT_OUT: &str = "rabi-dpt-out";

struct Outcome {
    diagnostics: Value,
    cutoffs: Vec<Value>,
}

pub fn run(mode: Mode, mut config: RunConfig) -> Result<(), CliError> {
    let start = Instant::now();
    let out_dir = config.output_dir.get_or_insert_with(|| PathBuf::from(DEFAULT_OUT)).clone();
    let cache = config.cache_dir.clone().map(SpectrumCache::new).or_else(SpectrumCache::from_env);
    let mut out = OutputDir::create(&out_dir)?;
    let outcome = match mode {
        Mode::PhaseDiagram => phase_diagram(&mut config, &mut out)?,
        Mode::Quench => quench(&mut config, &mut out, cache.as_ref())?,
        Mode::Rate => rate(&mut config, &mut out, cache.as_ref())?,
        Mode::Scaling => scaling(&mut config, &mut out, cache.as_ref())?,
        Mode::Semiclassical => semiclassical(&mut config, &mut out)?,
    };
    out.json("config.json", &config)?;
    let meta = json!({
        "tool": "rabi-dpt",
        "version": rabi_dpt::VERSION,
        "mode": mode.as_str(),
        "config": config,
        "threads": rayon::current_num_threads(),
        "cache_dir": cache.as_ref().map(|c| c.dir().display().to_string()),
        "wall_time_s": start.elapsed().as_secs_f64(),
        "cutoff": outcome.cutoffs,
        "diagnostics": outcome.diagnostics,
        "files": out.files(),
    });
    out.json("meta.json", &meta)?;
    log::info!("wrote {} files to {}", out.files().len(), out_dir.display());
    Ok(())
}

fn phase_diagram(c: &mut RunConfig, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let lo = *c.g1_min.get_or_insert(1.05);
    let hi = *c.g1_max.get_or_insert(3.0);
    let steps = *c.steps.get_or_insert(40);
    if !(lo > 1.0 && hi >= lo) || steps == 0 {
        return Err(CliError::usage(format!("need 1 < g1_min <= g1_max and steps >= 1, got [{lo}, {hi}], {steps}")));
    }
    let rows = linspace(lo, hi, steps + 1)
        .into_iter()
        .map(|g1| Ok(vec![num(g1), num(critical_coupling(g1)?)]))
        .collect::<Result<Vec<_>, CliError>>()?;
    out.csv("phase_diagram.csv", &["g1", "g2c"], rows)?;
    if c.gnuplot_script == Some(true) {
        out.gnuplot("phase_diagram.csv", "g1", &[(2, "g2c")])?;
    }
    Ok(Outcome { diagnostics: json!({ "rows": steps + 1 }), cutoffs: Vec::new() })
}

fn g2_values(c: &RunConfig) -> Result<Vec<f64>, CliError> {
    match (&c.g2_list, c.g2) {
        (Some(list), _) if !list.is_empty() => Ok(list.clone()),
        (_, Some(g2)) => Ok(vec![g2]),
        _ => Err(CliError::usage("missing required `g2` or `g2_list` (flags --g2 / --g2-list)")),
    }
}

fn base_spec(c: &mut RunConfig, g2: f64) -> Result<QuenchSpec, CliError> {
    c.omega0.get_or_insert(1.0);
    c.branch.get_or_insert(Branch::Plus);
    c.initial_state.get_or_insert_with(Default::default);
    let mut probe = c.clone();
    probe.g2 = Some(g2);
    probe.quench_spec()
}

fn quench(c: &mut RunConfig, out: &mut OutputDir, cache: Option<&SpectrumCache>) -> Result<Outcome, CliError> {
    let g2_list = g2_values(c)?;
    let base = base_spec(c, g2_list[0])?;
    let window = *c.window.get_or_insert_with(Default::default);
    let rows = sweep_order_parameters(&base, &g2_list, &window, cache)?;
    out.csv(
        "sweep.csv",
        &[
            "g2",
            "sx_mean",
            "sx_err",
            "x_mean",
            "x_err",
            "sz_mean",
            "sz_err",
            "n_mean",
            "n_err",
            "cutoff",
            "max_norm_deviation",
            "max_energy_drift",
            "band_population",
        ],
        rows.iter().map(|r| {
            let mut v: Vec<String> =
                [r.g2, r.sx_mean, r.sx_err, r.x_mean, r.x_err, r.sz_mean, r.sz_err, r.n_mean, r.n_err]
                    .map(num)
                    .to_vec();
            v.push(r.cutoff.to_string());
            v.extend([r.max_norm_deviation, r.max_energy_drift, r.band_population].map(num));
            v
        }),
    )?;
    if c.series == Some(true) {
        let times = window.times(base.omega0);
        let mut lines = Vec::new();
        for &g2 in &g2_list {
            let run = run_quench(&QuenchSpec { g2, ..base }, &SWEEP_OPERATORS, &times, cache)?;
            for (i, t) in times.iter().enumerate() {
                let mut row = vec![num(g2), num(*t)];
                for (k, s) in SWEEP_OPERATORS.iter().zip(&run.series) {
                    let v = if *k == OperatorKind::Number { s.values[i] / base.eta } else { s.values[i] };
                    row.push(num(v));
                }
                lines.push(row);
            }
        }
        out.csv("series.csv", &["g2", "t", "sx", "x", "sz", "n"], lines)?;
    }
    if c.gnuplot_script == Some(true) {
        out.gnuplot("sweep.csv", "g2", &[(2, "<sigma_x>"), (4, "<x>")])?;
    }
    let g2c = critical_coupling(base.g1).ok();
    let cutoffs =
        rows.iter().map(|r| json!({ "g2": r.g2, "used": r.cutoff, "band_population": r.band_population })).collect();
    Ok(Outcome { diagnostics: json!({ "g2c": g2c, "points": rows.len() }), cutoffs })
}

fn rate(c: &mut RunConfig, out: &mut OutputDir, cache: Option<&SpectrumCache>) -> Result<Outcome, CliError> {
    let g2 = RunConfig::require(c.g2, "g2")?;
    let spec = base_spec(c, g2)?;
    let t_max = *c.t_max.get_or_insert(2.0 * PI);
    let dt = *c.dt.get_or_insert(0.005);
    let times: Vec<f64> = time_grid(t_max, dt)?.into_iter().map(|t| t / spec.omega0).collect();
    let run = run_rate(&spec, &times, cache)?;
    let s = &run.series;
    let analytic = if g2 == 0.0 { Some(analytic_rate_g2zero(spec.g1, spec.eta, spec.omega0, &times)?) } else { None };
    let mut header = vec!["t", "log_p_plus", "log_p_minus", "rate"];
    if analytic.is_some() {
        header.extend(["r_infinity", "r_finite_eta"]);
    }
    out.csv(
        "rate.csv",
        &header,
        (0..times.len()).map(|i| {
            let mut row = vec![num(s.times[i]), num(s.log_p_plus[i]), num(s.log_p_minus[i]), num(s.rate[i])];
            if let Some(a) = &analytic {
                row.extend([num(a.r_infinity[i]), num(a.r_finite_eta[i])]);
            }
            row
        }),
    )?;
    let options = KinkOptions { threshold_override: c.kink_threshold, ..KinkOptions::for_echo(spec.eta, spec.omega0) };
    let report = detect_kinks(&s.times, &s.rate, &options)?;
    let kinks: Vec<Value> = report
        .kinks
        .iter()
        .map(|k| {
            let fit = match fit_kink(&s.times, &s.rate, k, &options, spec.omega0) {
                Ok(f) => serde_json::to_value(f).expect("fit serializes"),
                Err(e) => json!({ "error": e.to_string() }),
            };
            json!({
                "time": k.time,
                "rate": k.rate,
                "apex": k.apex,
                "left_slope": k.left_slope,
                "right_slope": k.right_slope,
                "fit": fit,
            })
        })
        .collect();
    out.json(
        "kinks.json",
        &json!({
            "critical_times": report.critical_times(),
            "rate_at_kinks": report.rate_at_kinks(),
            "detection_threshold": report.detection_threshold,
            "options": report.options,
            "kinks": kinks,
        }),
    )?;
    if c.gnuplot_script == Some(true) {
        let mut cols = vec![(4, "r(t)")];
        if analytic.is_some() {
            cols.push((6, "closed form"));
        }
        out.gnuplot("rate.csv", "t", &cols)?;
    }
    Ok(Outcome {
        diagnostics: json!({
            "kinks": report.kinks.len(),
            "log_p_floor": s.log_p_floor,
            "initial_norm_deviation": s.initial_norm_deviation,
            "propagation": run.propagation,
        }),
        cutoffs: vec![serde_json::to_value(run.cutoff).expect("report serializes")],
    })
}

fn scaling(c: &mut RunConfig, out: &mut OutputDir, cache: Option<&SpectrumCache>) -> Result<Outcome, CliError> {
    let eta_list = c
        .eta_list
        .clone()
        .filter(|l| !l.is_empty())
        .ok_or_else(|| CliError::usage("missing required `eta_list` (flag --eta-list)"))?;
    let g2 = RunConfig::require(c.g2, "g2")?;
    let mut probe = RunConfig { eta: Some(eta_list[0]), ..c.clone() };
    let spec = base_spec(&mut probe, g2)?;
    c.omega0 = probe.omega0;
    c.branch = probe.branch;
    c.initial_state = probe.initial_state;
    let window = *c.window.get_or_insert_with(Default::default);
    let table = finite_eta_scaling(&spec, &eta_list, &window, cache)?;
    out.csv(
        "scaling.csv",
        &["eta", "sx_mean", "sx_err", "cutoff"],
        table.rows.iter().map(|r| vec![num(r.eta), num(r.sx_mean), num(r.sx_err), r.cutoff.to_string()]),
    )?;
    if c.gnuplot_script == Some(true) {
        out.gnuplot("scaling.csv", "eta", &[(2, "<sigma_x>")])?;
    }
    Ok(Outcome {
        diagnostics: json!({ "non_decreasing": table.non_decreasing }),
        cutoffs: table.rows.iter().map(|r| json!({ "eta": r.eta, "used": r.cutoff })).collect(),
    })
}

fn semiclassical(c: &mut RunConfig, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let g1 = RunConfig::require(c.g1, "g1")?;
    let branch = *c.branch.get_or_insert(Branch::Plus);
    let t_max = *c.t_max.get_or_insert(1000.0);
    let dt = *c.dt.get_or_insert(0.005);
    let mut diagnostics = json!({ "g2c": critical_coupling(g1)? });
    if let Some(g2) = c.g2 {
        let points = *c.points.get_or_insert(5000);
        let t_final = *c.t_final.get_or_insert(t_max);
        let stride = *c.stride.get_or_insert(20);
        if stride == 0 {
            return Err(CliError::usage("stride must be >= 1"));
        }
        let y0 = initial_condition(g1, branch)?;
        let traj = integrate(&y0, g2, t_max, dt)?;
        out.csv(
            "trajectory.csv",
            &["t", "x", "p", "sx", "sy", "sz", "energy"],
            traj.times.iter().zip(&traj.states).step_by(stride).map(|(t, s)| {
                vec![num(*t), num(s.x), num(s.p), num(s.sx), num(s.sy), num(s.sz), num(classical_energy(s, g2))]
            }),
        )?;
        let section = stroboscopic_section(&traj, points, t_final)?;
        out.csv(
            "sections.csv",
            &["t", "x", "p", "sx", "sy"],
            section.iter().map(|p| vec![num(p.t), num(p.x), num(p.p), num(p.sx), num(p.sy)]),
        )?;
        if c.gnuplot_script == Some(true) {
            out.gnuplot("trajectory.csv", "t", &[(4, "sigma_x"), (2, "x")])?;
        }
        diagnostics["trajectory"] = json!({
            "sign_flip_time": sign_flip_time(&traj),
            "max_energy_drift": traj.max_energy_drift,
            "max_spin_drift": traj.max_spin_drift,
            "step": traj.step,
            "halvings": traj.halvings,
            "max_constraint_residual": section.iter().map(|p| p.constraint_residual.abs()).fold(0.0, f64::max),
        });
    }
    let ensemble_requested = c.n_samples.is_some() || c.g2_list.is_some() || c.sampling.is_some();
    if ensemble_requested {
        let g2_list = g2_values(c)?;
        let eta = RunConfig::require(c.eta, "eta")?;
        let spec = c.ensemble_spec();
        c.n_samples = Some(spec.n_samples);
        c.sampling = Some(spec.sampling);
        c.seed = Some(spec.seed);
        c.variance_scale = Some(spec.variance_scale);
        let window = *c.window.get_or_insert_with(Default::default);
        let rows =
            g2_list.iter().map(|&g2| ensemble_average(g1, g2, eta, &spec, &window)).collect::<Result<Vec<_>, _>>()?;
        out.json("ensemble.json", &json!({ "spec": spec, "window": window, "seed": spec.seed, "rows": rows }))?;
    } else if c.g2.is_none() {
        return Err(CliError::usage("missing required `g2` (or `g2_list` / --samples for ensemble averages)"));
    }
    Ok(Outcome { diagnostics, cutoffs: Vec::new() })
}
