//! Sudden quenches `g1 → g2`: exact spectral propagation, long-time averages,
//! quench energies and order-parameter sweeps.

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{assemble_hamiltonian, assemble_operator, auto_cutoff, ModelParams, OperatorKind, SparseOperator};
use crate::spectra::{eigendecompose_cached, ground_doublet, ground_state, SpectralData, SpectrumCache};
use crate::states::{analytic_ground_state, normal_squeezing, superradiant_parameters, Branch, Phase, QuantumState};

/// Fraction of the Fock ladder watched for leakage into the cutoff.
pub const BAND_FRACTION: f64 = 0.05;
/// Largest probability tolerated in that band.
pub const BAND_TOLERANCE: f64 = 1e-6;
/// Growth factor and attempt limit of the automatic cutoff.
const CUTOFF_GROWTH: f64 = 1.5;
const MAX_CUTOFF_GROWTH_STEPS: u32 = 6;
/// Time samples propagated per dense product.
const TIME_CHUNK: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialStateSource {
    #[default]
    Analytic,
    NumericDoublet,
}

impl std::str::FromStr for InitialStateSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(InitialStateSource::Analytic),
            "numeric-doublet" => Ok(InitialStateSource::NumericDoublet),
            other => Err(Error::param("initial_state", format!("expected analytic or numeric-doublet, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuenchSpec {
    pub g1: f64,
    pub g2: f64,
    pub eta: f64,
    pub omega0: f64,
    /// `None` selects the automatic cutoff, grown until the band check passes.
    pub cutoff: Option<usize>,
    pub branch: Branch,
    pub initial_state_source: InitialStateSource,
}

impl QuenchSpec {
    pub fn new(g1: f64, g2: f64, eta: f64) -> Self {
        QuenchSpec {
            g1,
            g2,
            eta,
            omega0: 1.0,
            cutoff: None,
            branch: Branch::Plus,
            initial_state_source: InitialStateSource::Analytic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g1.is_finite() && self.g1 >= 0.0) {
            return Err(Error::param("g1", format!("must be finite and >= 0, got {}", self.g1)));
        }
        if self.g1 == 1.0 {
            return Err(Error::Domain("g1 = 1 has no analytic initial state".into()));
        }
        if !(self.g2.is_finite() && self.g2 >= 0.0) {
            return Err(Error::param("g2", format!("must be finite and >= 0, got {}", self.g2)));
        }
        ModelParams::new(self.eta, self.omega0, self.g2, 0).map(|_| ())
    }

    pub fn auto_cutoff(&self) -> usize {
        auto_cutoff(self.eta, self.g1.max(self.g2))
    }

    pub fn initial_params(&self, cutoff: usize) -> ModelParams {
        ModelParams { eta: self.eta, omega0: self.omega0, g: self.g1, cutoff }
    }

    pub fn final_params(&self, cutoff: usize) -> ModelParams {
        ModelParams { eta: self.eta, omega0: self.omega0, g: self.g2, cutoff }
    }
}

/// How the cutoff of a run was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffReport {
    pub requested: Option<usize>,
    pub used: usize,
    pub growth_steps: u32,
    /// Largest probability seen in the top Fock band.
    pub band_population: f64,
}

/// Runs `f` at the requested cutoff, or starting from the automatic one and
/// growing it while `f` reports [`Error::CutoffTooSmall`].
pub fn with_cutoff<T>(spec: &QuenchSpec, mut f: impl FnMut(usize) -> Result<T>) -> Result<(T, usize, u32)> {
    if let Some(c) = spec.cutoff {
        return f(c).map(|v| (v, c, 0));
    }
    let mut cutoff = spec.auto_cutoff();
    let mut steps = 0;
    loop {
        match f(cutoff) {
            Err(Error::CutoffTooSmall { detail, .. }) if steps < MAX_CUTOFF_GROWTH_STEPS => {
                let next = (cutoff as f64 * CUTOFF_GROWTH).ceil() as usize;
                log::info!("cutoff {cutoff} too small ({detail}); retrying with {next}");
                cutoff = next;
                steps += 1;
            }
            other => return other.map(|v| (v, cutoff, steps)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub label: String,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: times.len(), found: values.len() });
        }
        check_uniform(&times)?;
        Ok(TimeSeries { times, values, label: label.into() })
    }

    pub fn dt(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }
}

/// Strictly increasing and uniform to 1e-12 relative.
pub fn check_uniform(times: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Ok(());
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if !(dt > 0.0) {
        return Err(Error::param("times", "grid must be strictly increasing"));
    }
    let scale = dt.max(times[0].abs().max(times[times.len() - 1].abs()) * 1e-3);
    for (k, &t) in times.iter().enumerate() {
        if ((t - times[0] - k as f64 * dt) / scale).abs() > 1e-9 || !t.is_finite() {
            return Err(Error::param("times", format!("grid is not uniform at index {k}")));
        }
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("times", "grid must be strictly increasing"));
    }
    Ok(())
}

/// `t_k = k dt` for `k = 0..=round(t_max/dt)`.
pub fn time_grid(t_max: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", format!("must be > 0, got {dt}")));
    }
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::param("tmax", format!("must be > 0, got {t_max}")));
    }
    let n = (t_max / dt).round() as usize;
    Ok((0..=n).map(|k| k as f64 * dt).collect())
}

/// `n` points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongTimeWindow {
    pub t_start: f64,
    pub t_end: f64,
    pub n_samples: usize,
}

impl Default for LongTimeWindow {
    fn default() -> Self {
        LongTimeWindow { t_start: 100.0, t_end: 500.0, n_samples: 400 }
    }
}

impl LongTimeWindow {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_start > 0.0 && self.t_end > self.t_start && self.t_end.is_finite()) {
            return Err(Error::param(
                "window",
                format!("need 0 < t_start < t_end, got [{}, {}]", self.t_start, self.t_end),
            ));
        }
        if self.n_samples < 2 {
            return Err(Error::param("window", "n_samples must be >= 2"));
        }
        Ok(())
    }

    /// Sample times in units of `1/ω₀` scaled to absolute time.
    pub fn times(&self, omega0: f64) -> Vec<f64> {
        linspace(self.t_start / omega0, self.t_end / omega0, self.n_samples)
    }
}

/// Mean over the window samples and its standard error `std / √n`.
pub fn long_time_average(series: &TimeSeries, window: &LongTimeWindow) -> Result<(f64, f64)> {
    window.validate()?;
    let (first, last) = match (series.times.first(), series.times.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::param("series", "empty series")),
    };
    let slack = 1e-9 * window.t_end.abs().max(1.0);
    if window.t_start < first - slack || window.t_end > last + slack {
        return Err(Error::WindowOutOfRange {
            t_start: window.t_start,
            t_end: window.t_end,
            series_start: first,
            series_end: last,
        });
    }
    let vals: Vec<f64> = series
        .times
        .iter()
        .zip(&series.values)
        .filter(|(&t, _)| t >= window.t_start - slack && t <= window.t_end + slack)
        .map(|(_, &v)| v)
        .collect();
    let n = vals.len();
    if n == 0 {
        return Err(Error::WindowOutOfRange {
            t_start: window.t_start,
            t_end: window.t_end,
            series_start: first,
            series_end: last,
        });
    }
    // shifted by the first sample so a constant series averages exactly
    let shift = vals[0];
    let offset = vals.iter().map(|v| v - shift).sum::<f64>() / n as f64;
    let mean = shift + offset;
    if n == 1 {
        return Ok((mean, 0.0));
    }
    let var = vals.iter().map(|v| (v - shift - offset).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok((mean, (var / n as f64).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PropagationReport {
    pub initial_energy: f64,
    pub max_norm_deviation: f64,
    /// `max |⟨H⟩_t − ⟨H⟩_0| / max(|⟨H⟩_0|, ω₀)`.
    pub max_energy_drift: f64,
    pub max_band_population: f64,
}

#[derive(Debug, Clone)]
pub struct Propagation {
    pub series: Vec<TimeSeries>,
    pub report: PropagationReport,
}

fn band_split(re: &[f64], im: &[f64]) -> f64 {
    let levels = re.len() / 2;
    let band = ((levels as f64 * BAND_FRACTION).ceil() as usize).max(1);
    let start = 2 * (levels - band);
    re[start..].iter().zip(&im[start..]).map(|(a, b)| a * a + b * b).sum()
}

/// `⟨ψ(t)|A|ψ(t)⟩` for each operator, with `ψ(t) = Σ_n e^{−iE_n t} ⟨φ_n|ψ₀⟩ |φ_n⟩`.
///
/// Fails with [`Error::CutoffTooSmall`] if more than [`BAND_TOLERANCE`] of the
/// probability reaches the top [`BAND_FRACTION`] of Fock levels at any sample.
pub fn propagate_expectations(
    sd: &SpectralData,
    psi0: &QuantumState,
    ops: &[OperatorKind],
    times: &[f64],
) -> Result<Propagation> {
    check_uniform(times)?;
    let d = sd.dim();
    let coeffs = sd.project(psi0)?;
    let sparse: Vec<SparseOperator> = ops.iter().map(|&k| assemble_operator(k, &sd.params).to_sparse()).collect();
    let h = assemble_hamiltonian(&sd.params).to_sparse();
    let initial_energy = h.expectation(&psi0.amplitudes);
    let energy_scale = initial_energy.abs().max(sd.params.omega0);

    let mut values = vec![Vec::with_capacity(times.len()); ops.len()];
    let mut report = PropagationReport {
        initial_energy,
        max_band_population: psi0.band_population(BAND_FRACTION),
        ..Default::default()
    };
    for chunk in times.chunks(TIME_CHUNK) {
        let m = chunk.len();
        let phased = |n: usize, k: usize| coeffs[n] * Complex64::from_polar(1.0, -sd.eigenvalues[n] * chunk[k]);
        let re = Mat::from_fn(d, m, |n, k| phased(n, k).re);
        let im = Mat::from_fn(d, m, |n, k| phased(n, k).im);
        let psi_re = &sd.eigenvectors * &re;
        let psi_im = &sd.eigenvectors * &im;
        for k in 0..m {
            let (r, i) = (psi_re.col_as_slice(k), psi_im.col_as_slice(k));
            let norm_sq: f64 = r.iter().zip(i).map(|(a, b)| a * a + b * b).sum();
            report.max_norm_deviation = report.max_norm_deviation.max((norm_sq.sqrt() - 1.0).abs());
            let e = h.expectation_split(r, i);
            report.max_energy_drift = report.max_energy_drift.max((e - initial_energy).abs() / energy_scale);
            report.max_band_population = report.max_band_population.max(band_split(r, i));
            for (op, out) in sparse.iter().zip(values.iter_mut()) {
                out.push(op.expectation_split(r, i));
            }
        }
    }
    if !(report.max_band_population <= BAND_TOLERANCE) {
        return Err(Error::CutoffTooSmall {
            cutoff: sd.params.cutoff,
            detail: format!(
                "top {:.0}% of Fock levels hold {:.3e} probability (limit {BAND_TOLERANCE:e})",
                BAND_FRACTION * 100.0,
                report.max_band_population
            ),
        });
    }
    let series = ops
        .iter()
        .zip(values)
        .map(|(k, v)| TimeSeries { times: times.to_vec(), values: v, label: k.to_string() })
        .collect();
    Ok(Propagation { series, report })
}

/// Initial state of the protocol at the given cutoff.
pub fn initial_state(spec: &QuenchSpec, cutoff: usize, cache: Option<&SpectrumCache>) -> Result<QuantumState> {
    let params = spec.initial_params(cutoff);
    let phase = Phase::of_coupling(spec.g1)?;
    match spec.initial_state_source {
        InitialStateSource::Analytic => analytic_ground_state(&params, spec.branch, phase),
        InitialStateSource::NumericDoublet => {
            let sd = eigendecompose_cached(&params, cache)?;
            match phase {
                Phase::Superradiant => ground_doublet(&sd, spec.branch),
                Phase::Normal => Ok(ground_state(&sd).0),
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuenchRun {
    pub spec: QuenchSpec,
    pub cutoff: CutoffReport,
    pub series: Vec<TimeSeries>,
    pub report: PropagationReport,
}

/// Full quench: initial state, decomposition of `H(g2)` and propagation.
pub fn run_quench(
    spec: &QuenchSpec,
    ops: &[OperatorKind],
    times: &[f64],
    cache: Option<&SpectrumCache>,
) -> Result<QuenchRun> {
    spec.validate()?;
    let (prop, used, steps) = with_cutoff(spec, |cutoff| {
        let psi0 = initial_state(spec, cutoff, cache)?;
        let sd = eigendecompose_cached(&spec.final_params(cutoff), cache)?;
        propagate_expectations(&sd, &psi0, ops, times)
    })?;
    Ok(QuenchRun {
        spec: *spec,
        cutoff: CutoffReport {
            requested: spec.cutoff,
            used,
            growth_steps: steps,
            band_population: prop.report.max_band_population,
        },
        series: prop.series,
        report: prop.report,
    })
}

/// Dynamical critical coupling `g1 (3 + g1²) / (2 (1 + g1²))`.
pub fn critical_coupling(g1: f64) -> Result<f64> {
    if !(g1 > 1.0 && g1.is_finite()) {
        return Err(Error::Domain(format!("critical coupling needs g1 > 1, got {g1}")));
    }
    let g1sq = g1 * g1;
    Ok(g1 * (3.0 + g1sq) / (2.0 * (1.0 + g1sq)))
}

/// `⟨φ₀(g1)|H(g2)|φ₀(g1)⟩` for the analytic ground state, exact in η.
pub fn quench_energy_analytic(g1: f64, g2: f64, eta: f64, omega0: f64) -> Result<f64> {
    let omega = eta * omega0;
    match Phase::of_coupling(g1)? {
        Phase::Normal => {
            let s = normal_squeezing(g1)?;
            Ok(-omega / 2.0 + omega0 * s.sinh().powi(2))
        }
        Phase::Superradiant => {
            let sp = superradiant_parameters(g1, eta, Branch::Plus)?;
            let spin = -omega / (2.0 * g1 * g1);
            let mode = omega0 * (sp.s_sp.sinh().powi(2) + sp.alpha_sp.powi(2));
            let coupling = -g2 * omega / 2.0 * g1 * (1.0 - g1.powi(-4));
            Ok(spin + mode + coupling)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuenchEnergy {
    pub analytic: f64,
    pub numeric: f64,
    pub cutoff: usize,
}

/// Closed-form quench energy together with `⟨ψ₀|H(g2)|ψ₀⟩` of the initial
/// state actually used by the spec.
pub fn quench_energy(spec: &QuenchSpec, cache: Option<&SpectrumCache>) -> Result<QuenchEnergy> {
    spec.validate()?;
    let analytic = quench_energy_analytic(spec.g1, spec.g2, spec.eta, spec.omega0)?;
    let (numeric, cutoff, _) = with_cutoff(spec, |cutoff| {
        let psi0 = initial_state(spec, cutoff, cache)?;
        psi0.expectation(&assemble_hamiltonian(&spec.final_params(cutoff)))
    })?;
    Ok(QuenchEnergy { analytic, numeric, cutoff })
}

/// Operators averaged in a sweep row, in column order.
pub const SWEEP_OPERATORS: [OperatorKind; 4] =
    [OperatorKind::SigmaX, OperatorKind::X, OperatorKind::SigmaZ, OperatorKind::Number];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub g2: f64,
    pub sx_mean: f64,
    pub sx_err: f64,
    pub x_mean: f64,
    pub x_err: f64,
    pub sz_mean: f64,
    pub sz_err: f64,
    /// `⟨a†a⟩ / η`, comparable with the rescaled classical `(x² + p²)/2`.
    pub n_mean: f64,
    pub n_err: f64,
    pub cutoff: usize,
    pub max_norm_deviation: f64,
    pub max_energy_drift: f64,
    pub band_population: f64,
}

/// Long-time averages of σx, x, σz and a†a/η for each `g2`, computed in parallel.
pub fn sweep_order_parameters(
    base: &QuenchSpec,
    g2_list: &[f64],
    window: &LongTimeWindow,
    cache: Option<&SpectrumCache>,
) -> Result<Vec<SweepRow>> {
    window.validate()?;
    let times = window.times(base.omega0);
    let abs_window = LongTimeWindow { t_start: times[0], t_end: times[times.len() - 1], n_samples: window.n_samples };
    g2_list
        .par_iter()
        .map(|&g2| {
            let spec = QuenchSpec { g2, ..*base };
            let run = run_quench(&spec, &SWEEP_OPERATORS, &times, cache)?;
            let avg = |k: usize| long_time_average(&run.series[k], &abs_window);
            let (sx_mean, sx_err) = avg(0)?;
            let (x_mean, x_err) = avg(1)?;
            let (sz_mean, sz_err) = avg(2)?;
            let (n_mean, n_err) = avg(3)?;
            Ok(SweepRow {
                g2,
                sx_mean,
                sx_err,
                x_mean,
                x_err,
                sz_mean,
                sz_err,
                n_mean: n_mean / spec.eta,
                n_err: n_err / spec.eta,
                cutoff: run.cutoff.used,
                max_norm_deviation: run.report.max_norm_deviation,
                max_energy_drift: run.report.max_energy_drift,
                band_population: run.cutoff.band_population,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub eta: f64,
    pub sx_mean: f64,
    pub sx_err: f64,
    pub cutoff: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingTable {
    pub g1: f64,
    pub g2: f64,
    pub rows: Vec<ScalingRow>,
    /// Whether `sx_mean` never decreases with η; `None` for a single row.
    pub non_decreasing: Option<bool>,
}

/// Long-time average of σx at fixed `(g1, g2)` for each η.
pub fn finite_eta_scaling(
    base: &QuenchSpec,
    eta_list: &[f64],
    window: &LongTimeWindow,
    cache: Option<&SpectrumCache>,
) -> Result<ScalingTable> {
    window.validate()?;
    let rows = eta_list
        .par_iter()
        .map(|&eta| {
            let spec = QuenchSpec { eta, ..*base };
            let times = window.times(spec.omega0);
            let run = run_quench(&spec, &[OperatorKind::SigmaX], &times, cache)?;
            let abs_window = LongTimeWindow { t_start: times[0], t_end: times[times.len() - 1], ..*window };
            let (sx_mean, sx_err) = long_time_average(&run.series[0], &abs_window)?;
            Ok(ScalingRow { eta, sx_mean, sx_err, cutoff: run.cutoff.used })
        })
        .collect::<Result<Vec<_>>>()?;
    let non_decreasing = (rows.len() > 1).then(|| rows.windows(2).all(|w| w[1].sx_mean >= w[0].sx_mean));
    Ok(ScalingTable { g1: base.g1, g2: base.g2, rows, non_decreasing })
}
