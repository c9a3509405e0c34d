//! Mean-field dynamics of the rescaled oscillator quadratures and the
//! classical spin,
//!
//! ```text
//! ẋ  = p                    ṗ  = −x + g σx / √2
//! σ̇x = −σy                  σ̇y = σx + √2 g x σz
//! σ̇z = −√2 g x σy
//! ```
//!
//! with time in units of `1/ω₀`. The equations carry no η; it only enters
//! through the widths of the sampled initial ensemble.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::quench::{linspace, LongTimeWindow};
use crate::states::{superradiant_parameters, Branch};

pub const DEFAULT_DT: f64 = 0.005;
pub const MAX_STEP_HALVINGS: u32 = 4;
pub const ENERGY_TOLERANCE: f64 = 1e-6;
pub const SPIN_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SemiclassicalState {
    pub x: f64,
    pub p: f64,
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
}

impl SemiclassicalState {
    fn to_array(self) -> [f64; 5] {
        [self.x, self.p, self.sx, self.sy, self.sz]
    }

    fn from_array(a: [f64; 5]) -> Self {
        SemiclassicalState { x: a[0], p: a[1], sx: a[2], sy: a[3], sz: a[4] }
    }

    pub fn spin_norm(&self) -> f64 {
        self.sx * self.sx + self.sy * self.sy + self.sz * self.sz
    }

    /// Time-reversed partner: `p → −p`, `σy → −σy`.
    pub fn time_reversed(&self) -> Self {
        SemiclassicalState { p: -self.p, sy: -self.sy, ..*self }
    }
}

/// Mean-field ground state of `H(g1)` on the given branch.
pub fn initial_condition(g1: f64, branch: Branch) -> Result<SemiclassicalState> {
    if !(g1 > 1.0 && g1.is_finite()) {
        return Err(Error::Domain(format!("semiclassical initial condition needs g1 > 1, got {g1}")));
    }
    let s = branch.sign();
    let inv4 = g1.powi(-4);
    Ok(SemiclassicalState {
        x: s * ((g1 * g1 - 1.0 / (g1 * g1)) / 2.0).sqrt(),
        p: 0.0,
        sx: s * (1.0 - inv4).sqrt(),
        sy: 0.0,
        sz: -1.0 / (g1 * g1),
    })
}

/// `H = (x² + p²)/2 + σz/2 − g x σx / √2`, in units of `ηω₀`.
pub fn classical_energy(state: &SemiclassicalState, g: f64) -> f64 {
    0.5 * (state.x * state.x + state.p * state.p) + 0.5 * state.sz - g * state.x * state.sx / SQRT_2
}

#[inline]
fn rhs(y: &[f64; 5], g: f64) -> [f64; 5] {
    let [x, p, sx, sy, sz] = *y;
    [p, -x + g * sx / SQRT_2, -sy, sx + SQRT_2 * g * x * sz, -SQRT_2 * g * x * sy]
}

#[inline]
fn rk4_step(y: &[f64; 5], g: f64, h: f64) -> [f64; 5] {
    let add = |a: &[f64; 5], k: &[f64; 5], c: f64| std::array::from_fn(|i| a[i] + c * k[i]);
    let k1 = rhs(y, g);
    let k2 = rhs(&add(y, &k1, h / 2.0), g);
    let k3 = rhs(&add(y, &k2, h / 2.0), g);
    let k4 = rhs(&add(y, &k3, h), g);
    std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub g: f64,
    /// Sampling interval; the internal step may be smaller.
    pub dt: f64,
    pub step: f64,
    pub halvings: u32,
    pub times: Vec<f64>,
    pub states: Vec<SemiclassicalState>,
    pub max_energy_drift: f64,
    pub max_spin_drift: f64,
}

fn check_step(t_max: f64, dt: f64) -> Result<usize> {
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::param("t_max", format!("must be finite and > 0, got {t_max}")));
    }
    if !(dt > 0.0 && dt <= t_max) {
        return Err(Error::param("dt", format!("must be in (0, t_max], got {dt}")));
    }
    Ok((t_max / dt).round() as usize)
}

/// Walks `n_samples` intervals of `dt` with `2^halvings` RK4 steps each,
/// calling `visit` at every sample. Returns the worst relative energy
/// drift and spin-norm drift.
fn walk(
    y0: [f64; 5],
    g: f64,
    dt: f64,
    n_samples: usize,
    halvings: u32,
    mut visit: impl FnMut(usize, &[f64; 5]),
) -> (f64, f64) {
    let sub = 1usize << halvings;
    let h = dt / sub as f64;
    let e0 = classical_energy(&SemiclassicalState::from_array(y0), g);
    let scale = if e0.abs() > 1e-12 { e0.abs() } else { 1.0 };
    let n0 = SemiclassicalState::from_array(y0).spin_norm();
    let mut y = y0;
    let (mut de, mut dn) = (0.0f64, 0.0f64);
    visit(0, &y);
    for k in 1..=n_samples {
        for _ in 0..sub {
            y = rk4_step(&y, g, h);
        }
        let s = SemiclassicalState::from_array(y);
        de = de.max((classical_energy(&s, g) - e0).abs() / scale);
        dn = dn.max((s.spin_norm() - n0).abs());
        if !de.is_finite() {
            return (f64::INFINITY, f64::INFINITY);
        }
        visit(k, &y);
    }
    (de, dn)
}

/// Runs `walk`, halving the internal step while a drift limit is exceeded.
fn walk_checked(
    y0: [f64; 5],
    g: f64,
    dt: f64,
    n_samples: usize,
    mut visit: impl FnMut(usize, &[f64; 5]),
) -> Result<(u32, f64, f64)> {
    let mut halvings = 0;
    loop {
        let (de, dn) = walk(y0, g, dt, n_samples, halvings, &mut visit);
        if de <= ENERGY_TOLERANCE && dn <= SPIN_TOLERANCE {
            return Ok((halvings, de, dn));
        }
        if halvings == MAX_STEP_HALVINGS {
            return Err(Error::StepSize {
                halvings,
                detail: format!(
                    "energy drift {de:e}, spin-norm drift {dn:e} at step {}",
                    dt / (1u64 << halvings) as f64
                ),
            });
        }
        halvings += 1;
        log::debug!("semiclassical drift {de:e}/{dn:e}; halving step ({halvings})");
    }
}

/// Fixed-step RK4 from `state0` under coupling `g`, sampled every `dt` up to `t_max`.
pub fn integrate(state0: &SemiclassicalState, g: f64, t_max: f64, dt: f64) -> Result<Trajectory> {
    let n = check_step(t_max, dt)?;
    let mut states = vec![SemiclassicalState::default(); n + 1];
    let (halvings, de, dn) =
        walk_checked(state0.to_array(), g, dt, n, |k, y| states[k] = SemiclassicalState::from_array(*y))?;
    Ok(Trajectory {
        g,
        dt,
        step: dt / (1u64 << halvings) as f64,
        halvings,
        times: (0..=n).map(|k| k as f64 * dt).collect(),
        states,
        max_energy_drift: de,
        max_spin_drift: dn,
    })
}

/// First time at which `σx` changes sign, interpolated linearly between samples.
pub fn sign_flip_time(traj: &Trajectory) -> Option<f64> {
    let sx: Vec<f64> = traj.states.iter().map(|s| s.sx).collect();
    first_sign_change(&traj.times, &sx)
}

pub fn first_sign_change(times: &[f64], values: &[f64]) -> Option<f64> {
    let start = values.iter().position(|v| *v != 0.0)?;
    let sign = values[start].signum();
    for i in start + 1..values.len() {
        if values[i] * sign < 0.0 {
            let (a, b) = (values[i - 1], values[i]);
            return Some(times[i - 1] + (times[i] - times[i - 1]) * a / (a - b));
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionPoint {
    pub t: f64,
    pub x: f64,
    pub p: f64,
    pub sx: f64,
    pub sy: f64,
    /// From `σz² = 1 − σx² − σy²`, with the sign of the integrated value.
    pub sz: f64,
    /// `|σz(constraint)| − |σz(integrated)|`.
    pub constraint_residual: f64,
}

/// `n_points` samples at `t_k = k t_final / n_points`, `k = 1..=n_points`.
pub fn stroboscopic_section(traj: &Trajectory, n_points: usize, t_final: f64) -> Result<Vec<SectionPoint>> {
    let last = *traj.times.last().ok_or_else(|| Error::param("trajectory", "empty"))?;
    if t_final > last * (1.0 + 1e-12) || !(t_final > 0.0) {
        return Err(Error::param("t_final", format!("{t_final} not covered by a trajectory ending at {last}")));
    }
    if n_points == 0 {
        return Err(Error::param("n_points", "must be >= 1"));
    }
    let n = traj.states.len();
    Ok((1..=n_points)
        .map(|k| {
            let t = t_final * k as f64 / n_points as f64;
            let u = (t / traj.dt).clamp(0.0, (n - 1) as f64);
            let i = (u.floor() as usize).min(n - 2);
            let f = u - i as f64;
            let (a, b) = (traj.states[i].to_array(), traj.states[i + 1].to_array());
            let y: [f64; 5] = std::array::from_fn(|j| a[j] * (1.0 - f) + b[j] * f);
            let mag = (1.0 - y[2] * y[2] - y[3] * y[3]).max(0.0).sqrt();
            let sz = if y[4] < 0.0 { -mag } else { mag };
            SectionPoint { t, x: y[0], p: y[1], sx: y[2], sy: y[3], sz, constraint_residual: mag - y[4].abs() }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    #[default]
    WignerGaussian,
    SingleTrajectory,
}

impl std::str::FromStr for Sampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wigner-gaussian" => Ok(Sampling::WignerGaussian),
            "single-trajectory" => Ok(Sampling::SingleTrajectory),
            other => Err(Error::param("sampling", format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n_samples: usize,
    pub sampling: Sampling,
    pub seed: u64,
    /// Multiplies both quadrature variances.
    pub variance_scale: f64,
    pub dt: f64,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        EnsembleSpec {
            n_samples: 1000,
            sampling: Sampling::WignerGaussian,
            seed: 0,
            variance_scale: 1.0,
            dt: DEFAULT_DT,
        }
    }
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::param("n_samples", "must be >= 1"));
        }
        if !(self.variance_scale >= 0.0 && self.variance_scale.is_finite()) {
            return Err(Error::param(
                "variance_scale",
                format!("must be finite and >= 0, got {}", self.variance_scale),
            ));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", format!("must be > 0, got {}", self.dt)));
        }
        Ok(())
    }

    fn is_single(&self) -> bool {
        self.sampling == Sampling::SingleTrajectory || self.n_samples == 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleAverage {
    pub g1: f64,
    pub g2: f64,
    pub eta: f64,
    pub sx_bar: f64,
    pub x_bar: f64,
    pub sz_bar: f64,
    /// Long-time average of `(x² + p²)/2`, the photon number per η.
    pub n_proxy_bar: f64,
    /// Standard error of `sx_bar` across samples.
    pub sx_err: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub max_energy_drift: f64,
    pub max_spin_drift: f64,
}

/// Window means of (σx, x, σz, n) along one trajectory, with the drifts.
fn window_means(y0: [f64; 5], g: f64, dt: f64, window: &LongTimeWindow) -> Result<([f64; 4], f64, f64)> {
    let n = check_step(window.t_end, dt)?;
    let targets = linspace(window.t_start, window.t_end, window.n_samples);
    let mut sums = [0.0; 4];
    let mut next = 0;
    let mut prev = y0;
    let (_, de, dn) = walk_checked(y0, g, dt, n, |k, y| {
        if k == 0 {
            next = 0;
            sums = [0.0; 4];
        }
        let t = k as f64 * dt;
        while next < targets.len() && targets[next] <= t + 1e-12 {
            let f = if k == 0 { 1.0 } else { 1.0 - (t - targets[next]) / dt };
            let z: [f64; 5] = std::array::from_fn(|j| prev[j] * (1.0 - f) + y[j] * f);
            sums[0] += z[2];
            sums[1] += z[0];
            sums[2] += z[4];
            sums[3] += 0.5 * (z[0] * z[0] + z[1] * z[1]);
            next += 1;
        }
        prev = *y;
    })?;
    let m = targets.len() as f64;
    Ok((sums.map(|s| s / m), de, dn))
}

/// Long-time averages over an ensemble of initial conditions around the
/// `g1` mean-field ground state (+ branch), evolved under `g2`.
///
/// In Wigner mode `x` and `p` are drawn from Gaussians with variances
/// `e^{2s}/(2η)` and `e^{−2s}/(2η)`, `s` the ground-state squeezing, and
/// the spin sits at its mean direction. Sample `i` uses ChaCha stream `i`,
/// so the result does not depend on the number of worker threads.
pub fn ensemble_average(
    g1: f64,
    g2: f64,
    eta: f64,
    spec: &EnsembleSpec,
    window: &LongTimeWindow,
) -> Result<EnsembleAverage> {
    spec.validate()?;
    window.validate()?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::param("eta", format!("must be > 0, got {eta}")));
    }
    let center = initial_condition(g1, Branch::Plus)?;
    let sp = superradiant_parameters(g1, eta, Branch::Plus)?;
    let base = center.to_array();
    let samples: Vec<[f64; 5]> = if spec.is_single() {
        vec![base]
    } else {
        let sx = (spec.variance_scale * (2.0 * sp.s_sp).exp() / (2.0 * eta)).sqrt();
        let sp_ = (spec.variance_scale * (-2.0 * sp.s_sp).exp() / (2.0 * eta)).sqrt();
        let nx = Normal::new(0.0, sx).map_err(|e| Error::param("variance_scale", e.to_string()))?;
        let np = Normal::new(0.0, sp_).map_err(|e| Error::param("variance_scale", e.to_string()))?;
        (0..spec.n_samples)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                rng.set_stream(i as u64);
                let mut y = base;
                y[0] += nx.sample(&mut rng);
                y[1] += np.sample(&mut rng);
                y
            })
            .collect()
    };
    let results: Vec<([f64; 4], f64, f64)> =
        samples.par_iter().map(|y0| window_means(*y0, g2, spec.dt, window)).collect::<Result<_>>()?;
    let m = results.len() as f64;
    let mean = |j: usize| results.iter().map(|r| r.0[j]).sum::<f64>() / m;
    let sx_bar = mean(0);
    let sx_err = if results.len() > 1 {
        (results.iter().map(|r| (r.0[0] - sx_bar).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt()
    } else {
        0.0
    };
    Ok(EnsembleAverage {
        g1,
        g2,
        eta,
        sx_bar,
        x_bar: mean(1),
        sz_bar: mean(2),
        n_proxy_bar: mean(3),
        sx_err,
        n_samples: results.len(),
        seed: spec.seed,
        max_energy_drift: results.iter().map(|r| r.1).fold(0.0, f64::max),
        max_spin_drift: results.iter().map(|r| r.2).fold(0.0, f64::max),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparatrixBracket {
    /// Largest probed `g2` whose trajectory flips sign.
    pub flips_at: f64,
    /// Smallest probed `g2` whose trajectory stays on one side.
    pub confined_at: f64,
    pub iterations: u32,
}

/// Bisects for the smallest `g2` whose single trajectory from the `g1`
/// ground state keeps `σx > 0` up to `t_max`. `lo` must flip, `hi` must not.
pub fn separatrix_bisection(g1: f64, lo: f64, hi: f64, t_max: f64, dt: f64, tol: f64) -> Result<SeparatrixBracket> {
    let y0 = initial_condition(g1, Branch::Plus)?;
    let flips = |g2: f64| -> Result<bool> { Ok(sign_flip_time(&integrate(&y0, g2, t_max, dt)?).is_some()) };
    if !(lo < hi) || !(tol > 0.0) {
        return Err(Error::param("bracket", format!("need lo < hi and tol > 0, got [{lo}, {hi}], tol {tol}")));
    }
    if !flips(lo)? || flips(hi)? {
        return Err(Error::Domain(format!("[{lo}, {hi}] does not bracket the separatrix at g1 = {g1}")));
    }
    let (mut a, mut b, mut iterations) = (lo, hi, 0);
    while b - a > tol {
        let m = 0.5 * (a + b);
        if flips(m)? {
            a = m;
        } else {
            b = m;
        }
        iterations += 1;
    }
    Ok(SeparatrixBracket { flips_at: a, confined_at: b, iterations })
}
