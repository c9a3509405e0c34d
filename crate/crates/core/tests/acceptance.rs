//! Acceptance harness: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::f64::consts::{LN_2, PI};
use std::time::Instant;

use rabi_dpt::hilbert::{assemble_operator, ModelParams, OperatorKind};
use rabi_dpt::loschmidt::{deripple, detect_kinks, fit_kink, max_curvature, run_rate, KinkOptions, RateRun};
use rabi_dpt::quench::{
    critical_coupling, quench_energy, sweep_order_parameters, time_grid, LongTimeWindow, QuenchSpec,
};
use rabi_dpt::semiclassics::{initial_condition, integrate, separatrix_bisection, sign_flip_time};
use rabi_dpt::spectra::{eigendecompose_cached, ground_doublet, SpectrumCache};
use rabi_dpt::states::{analytic_ground_state, fidelity, Branch, Phase};

const G1: f64 = 1.5;
const R_INF_TC: f64 = 0.902778;

struct Harness {
    failures: usize,
    // (worst norm deviation, worst energy drift) over quantum propagations
    quantum: (f64, f64),
    classical: (f64, f64),
}

impl Harness {
    fn report(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        println!("{} [{id}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failures += 1;
        }
    }

    fn record_quantum(&mut self, norm: f64, energy: f64) {
        self.quantum.0 = self.quantum.0.max(norm);
        self.quantum.1 = self.quantum.1.max(energy);
    }

    fn rate(&mut self, g2: f64, eta: f64, t_max: f64, cache: &SpectrumCache) -> Option<RateRun> {
        match run_rate(&QuenchSpec::new(G1, g2, eta), &time_grid(t_max, 0.005).unwrap(), Some(cache)) {
            Ok(run) => {
                self.record_quantum(run.propagation.max_norm_deviation, run.propagation.max_energy_drift);
                Some(run)
            }
            Err(e) => {
                println!("  rate g2={g2} eta={eta} failed: {e}");
                None
            }
        }
    }
}

fn criterion_1(h: &mut Harness) {
    let g2c = critical_coupling(G1).unwrap();
    h.report(1, "critical line", (g2c - 1.211538).abs() < 5e-7, format!("g2c(1.5) = {g2c:.7}"));
}

fn criterion_2(h: &mut Harness, cache: &SpectrumCache) {
    let start = Instant::now();
    let g2_list: Vec<f64> = (0..=22).map(|k| 0.5 + 0.05 * k as f64).collect();
    let rows = match sweep_order_parameters(
        &QuenchSpec::new(G1, 0.5, 100.0),
        &g2_list,
        &LongTimeWindow::default(),
        Some(cache),
    ) {
        Ok(r) => r,
        Err(e) => return h.report(2, "DPT-I sweep", false, format!("sweep failed: {e}")),
    };
    let mut ok = true;
    let (mut band_sx, mut band_x, mut plat_sx, mut plat_x) = (0.0f64, 0.0f64, f64::INFINITY, f64::INFINITY);
    for r in &rows {
        h.record_quantum(r.max_norm_deviation, r.max_energy_drift);
        if r.g2 <= 1.15 + 1e-9 {
            band_sx = band_sx.max(r.sx_mean.abs());
            band_x = band_x.max(r.x_mean.abs());
        }
        if r.g2 >= 1.3 - 1e-9 {
            plat_sx = plat_sx.min(r.sx_mean.abs());
            plat_x = plat_x.min(r.x_mean.abs());
        }
    }
    ok &= band_sx < 0.05 && band_x < 0.05 && plat_sx > 0.3 && plat_x > 0.3;
    let cutoffs = rows.iter().map(|r| r.cutoff);
    h.report(
        2,
        "DPT-I sweep",
        ok,
        format!(
            "max|sx| below = {band_sx:.4}, max|x| below = {band_x:.4}, min|sx| above = {plat_sx:.4}, min|x| above = {plat_x:.4}, cutoffs {}..{}, {:.1}s",
            cutoffs.clone().min().unwrap_or(0),
            cutoffs.max().unwrap_or(0),
            start.elapsed().as_secs_f64()
        ),
    );
}

fn criterion_3_and_6(h: &mut Harness, cache: &SpectrumCache) {
    let start = Instant::now();
    let mut saturation = Vec::new();
    for eta in [25.0, 50.0, 100.0] {
        let Some(run) = h.rate(0.0, eta, 2.0 * PI, cache) else {
            saturation.push((eta, f64::NAN, false));
            continue;
        };
        let s = &run.series;
        let opts = KinkOptions::for_echo(eta, 1.0);
        let kinks = detect_kinks(&s.times, &s.rate, &opts).unwrap();
        // closed-form t_c; at eta = 25 the spin ripple hides the kink from the detector
        let i = (PI / 2.0 / 0.005).floor() as usize;
        let f = (PI / 2.0 - s.times[i]) / 0.005;
        let detected = kinks.kinks.iter().any(|k| (k.time - PI / 2.0).abs() < 0.01);
        saturation.push((eta, s.rate[i] * (1.0 - f) + s.rate[i + 1] * f, detected));
        if eta != 100.0 {
            continue;
        }
        let target = R_INF_TC - LN_2 / 100.0;
        let near = |tc: f64| kinks.kinks.iter().find(|k| (k.time - tc).abs() < 0.01);
        let (k1, k2) = (near(PI / 2.0), near(3.0 * PI / 2.0));
        let mut ok = k1.is_some() && k2.is_some();
        let mut detail = format!("kinks at {:?}", kinks.critical_times());
        for k in [k1, k2].into_iter().flatten() {
            ok &= (k.rate - target).abs() < 0.02;
            detail += &format!(", r({:.4}) = {:.5}", k.time, k.rate);
        }
        if let Some(k) = k1 {
            match fit_kink(&s.times, &s.rate, k, &opts, 1.0) {
                Ok(fit) => {
                    ok &= (0.9..=1.1).contains(&fit.beta) && (fit.prefactor / R_INF_TC - 1.0).abs() < 0.1;
                    detail += &format!(", beta = {:.4}, prefactor = {:.4}", fit.beta, fit.prefactor);
                }
                Err(e) => {
                    ok = false;
                    detail += &format!(", fit failed: {e}");
                }
            }
        }
        h.report(3, "DPT-II analytic oracle", ok, format!("{detail}, {:.1}s", start.elapsed().as_secs_f64()));
    }
    let mut ok = true;
    let mut detail = Vec::new();
    for (eta, r, detected) in saturation {
        let target = R_INF_TC - LN_2 / eta;
        let pass = (r - target).abs() < 0.01;
        ok &= pass;
        detail.push(format!(
            "eta {eta}: r(pi/2) = {r:.5} vs {target:.5}, diff {:+.4} ({}, kink {})",
            r - target,
            if pass { "ok" } else { "off" },
            if detected { "detected" } else { "not resolved" }
        ));
    }
    h.report(6, "finite-eta saturation", ok, detail.join("; "));
}

fn criterion_4_and_5(h: &mut Harness, cache: &SpectrumCache) {
    let start = Instant::now();
    let mut curvature = Vec::new();
    let mut raw = Vec::new();
    for eta in [25.0, 50.0, 75.0, 100.0] {
        let Some(run) = h.rate(0.75, eta, 4.0, cache) else {
            curvature.push(f64::NAN);
            raw.push(f64::NAN);
            continue;
        };
        let s = &run.series;
        let opts = KinkOptions::for_echo(eta, 1.0);
        let smooth = deripple(&s.times, &s.rate, opts.ripple_period.unwrap());
        raw.push(max_curvature(&s.times, &s.rate, 1.7, 2.0));
        curvature.push(max_curvature(&s.times, &smooth, 1.7, 2.0));
        if eta == 100.0 {
            let kinks = detect_kinks(&s.times, &s.rate, &opts).unwrap();
            let first = kinks.kinks.first().map(|k| k.time);
            let ok = first.is_some_and(|t| (t - 1.85).abs() <= 0.05);
            h.report(4, "kink location", ok, format!("first kink at {first:?}, cutoff {}", run.cutoff.used));
        }
    }
    let ok = curvature.windows(2).all(|w| w[1] > w[0]) && raw.windows(2).all(|w| w[1] > w[0]);
    h.report(
        5,
        "sharpening with eta",
        ok,
        format!(
            "max|r''| on [1.7, 2.0] after spin-period averaging = {curvature:.2?} (raw {raw:.2?}), {:.1}s",
            start.elapsed().as_secs_f64()
        ),
    );
}

fn criterion_7(h: &mut Harness) {
    let start = Instant::now();
    let g2c = critical_coupling(G1).unwrap();
    let y0 = initial_condition(G1, Branch::Plus).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for (g2, expect_flip) in [(g2c, false), (g2c + 0.05, false), (g2c - 1e-3, true), (g2c - 0.05, true)] {
        match integrate(&y0, g2, 1000.0, 0.005) {
            Ok(tr) => {
                h.classical.0 = h.classical.0.max(tr.max_spin_drift);
                h.classical.1 = h.classical.1.max(tr.max_energy_drift);
                let flip = sign_flip_time(&tr);
                ok &= flip.is_some() == expect_flip;
                detail.push(format!("g2c{:+}: flip {flip:.3?}", g2 - g2c));
            }
            Err(e) => {
                ok = false;
                detail.push(format!("g2 {g2}: {e}"));
            }
        }
    }
    match separatrix_bisection(G1, g2c - 0.1, g2c + 0.1, 1000.0, 0.005, 0.005) {
        Ok(b) => {
            ok &= (b.flips_at - g2c).abs() <= 0.01 && (b.confined_at - g2c).abs() <= 0.01;
            detail.push(format!("bracket [{:.4}, {:.4}]", b.flips_at, b.confined_at));
        }
        Err(e) => {
            ok = false;
            detail.push(format!("bisection: {e}"));
        }
    }
    h.report(
        7,
        "semiclassical separatrix",
        ok,
        format!("{}, {:.1}s", detail.join(", "), start.elapsed().as_secs_f64()),
    );
}

fn criterion_8(h: &mut Harness) {
    let (qn, qe) = h.quantum;
    let (cs, ce) = h.classical;
    let ok = qn < 1e-10 && qe < 1e-8 && cs < 1e-8 && ce < 1e-8;
    h.report(
        8,
        "conservation suite",
        ok,
        format!("quantum norm {qn:.2e}, energy {qe:.2e}; classical spin {cs:.2e}, energy {ce:.2e}"),
    );
}

fn criterion_9(h: &mut Harness, cache: &SpectrumCache) {
    let eta = 100.0;
    let params = ModelParams::new(eta, 1.0, G1, 160).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    let analytic = analytic_ground_state(&params, Branch::Plus, Phase::Superradiant).unwrap();
    let sd = eigendecompose_cached(&params, Some(cache)).unwrap();
    let doublet = ground_doublet(&sd, Branch::Plus).unwrap();
    let f = fidelity(&analytic, &doublet).unwrap();
    ok &= f > 0.98;
    detail.push(format!("fidelity {f:.5}"));
    let sx = analytic.expectation(&assemble_operator(OperatorKind::SigmaX, &params)).unwrap();
    let x = analytic.expectation(&assemble_operator(OperatorKind::X, &params)).unwrap();
    let (sx_cf, x_cf) = ((1.0 - G1.powi(-4)).sqrt(), ((G1 * G1 - G1.powi(-2)) / 2.0).sqrt());
    ok &= (sx - sx_cf).abs() < 1e-6 && (x - x_cf).abs() < 1e-6;
    detail.push(format!("|dsx| {:.1e}, |dx| {:.1e}", (sx - sx_cf).abs(), (x - x_cf).abs()));
    for g2 in [0.0, 0.75, 1.4] {
        match quench_energy(&QuenchSpec::new(G1, g2, eta), Some(cache)) {
            Ok(e) => {
                ok &= (e.analytic - e.numeric).abs() < 2.0;
                detail.push(format!("E(g2={g2}) {:.4} vs {:.4}", e.analytic, e.numeric));
            }
            Err(e) => {
                ok = false;
                detail.push(format!("quench energy g2={g2}: {e}"));
            }
        }
    }
    h.report(9, "oracle cross-checks", ok, detail.join(", "));
}

fn main() {
    let dir = tempfile::tempdir().expect("temporary cache directory");
    let cache = SpectrumCache::new(dir.path());
    let mut h = Harness { failures: 0, quantum: (0.0, 0.0), classical: (0.0, 0.0) };
    criterion_1(&mut h);
    criterion_2(&mut h, &cache);
    criterion_3_and_6(&mut h, &cache);
    criterion_4_and_5(&mut h, &cache);
    criterion_7(&mut h);
    criterion_8(&mut h);
    criterion_9(&mut h, &cache);
    println!("{} criteria failed", h.failures);
    if h.failures > 0 {
        std::process::exit(1);
    }
}
