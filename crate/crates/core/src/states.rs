//! Analytic η→∞ ground states as explicit Fock-basis vectors.
//!
//! Above the critical coupling the two symmetry-broken ground states are
//! `D(±α) S(s) |0⟩ ⊗ |↓±⟩` with
//!
//! ```text
//! α = √(η (g² − g⁻²) / 4),   s = −¼ ln(1 − g⁻⁴),
//! |↓±⟩ = ±√((1 − g⁻²)/2) |↑⟩ + √((1 + g⁻²)/2) |↓⟩,
//! ```
//!
//! and below it the ground state is `S(s_np)|0⟩ ⊗ |↓⟩` with
//! `s_np = −¼ ln(1 − g²)`. The squeeze operator is `S(s) = exp(s/2 (a†² − a²))`,
//! so positive `s` stretches the `a + a†` quadrature.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dd::{Dd, Real};
use crate::error::{Error, Result};
use crate::hilbert::{build_basis, ModelParams, OperatorMatrix, SparseOperator};

/// Largest truncated-norm deficit accepted before renormalization.
pub const MAX_TRUNCATION_DEFICIT: f64 = 1e-8;

const NORM_TOLERANCE: f64 = 1e-10;

/// Binary exponent used to keep the forward recurrence in range.
const SHIFT: i32 = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }

    pub fn opposite(self) -> Branch {
        match self {
            Branch::Plus => Branch::Minus,
            Branch::Minus => Branch::Plus,
        }
    }
}

impl std::str::FromStr for Branch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "+" | "plus" => Ok(Branch::Plus),
            "-" | "minus" => Ok(Branch::Minus),
            other => Err(Error::param("branch", format!("expected plus or minus, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Normal,
    Superradiant,
}

impl Phase {
    /// Equilibrium phase of coupling `g`; `g == 1` has no analytic ground state.
    pub fn of_coupling(g: f64) -> Result<Phase> {
        if g == 1.0 {
            Err(Error::Domain("g = 1: both squeezing parameters diverge".into()))
        } else if g < 1.0 {
            Ok(Phase::Normal)
        } else {
            Ok(Phase::Superradiant)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuperradiantParams {
    /// Displacement magnitude, always > 0.
    pub alpha_sp: f64,
    pub s_sp: f64,
    /// Carries the branch sign.
    pub spin_up_coeff: f64,
    pub spin_down_coeff: f64,
    pub branch: Branch,
}

impl SuperradiantParams {
    /// Signed displacement of the branch.
    pub fn alpha(&self) -> f64 {
        self.branch.sign() * self.alpha_sp
    }
}

pub fn superradiant_parameters(g: f64, eta: f64, branch: Branch) -> Result<SuperradiantParams> {
    let (alpha, s, up, down) = superradiant_t::<f64>(g, eta)?;
    Ok(SuperradiantParams {
        alpha_sp: alpha,
        s_sp: s,
        spin_up_coeff: branch.sign() * up,
        spin_down_coeff: down,
        branch,
    })
}

fn superradiant_t<T: Real>(g: f64, eta: f64) -> Result<(T, T, T, T)> {
    if !(g > 1.0) || !g.is_finite() {
        return Err(Error::Domain(format!("superradiant parameters undefined for g = {g} (need g > 1)")));
    }
    if !(eta > 0.0) {
        return Err(Error::param("eta", format!("must be > 0, got {eta}")));
    }
    let one = T::from_f64(1.0);
    let half = T::from_f64(0.5);
    let g2 = T::from_f64(g) * T::from_f64(g);
    let ginv2 = one / g2;
    let alpha = (T::from_f64(eta) * (g2 - ginv2) * T::from_f64(0.25)).sqrt();
    let s = -(one - ginv2 * ginv2).ln() * T::from_f64(0.25);
    let up = ((one - ginv2) * half).sqrt();
    let down = ((one + ginv2) * half).sqrt();
    Ok((alpha, s, up, down))
}

/// `−¼ ln(1 − g²)` for `0 ≤ g < 1`.
pub fn normal_squeezing(g: f64) -> Result<f64> {
    normal_squeezing_t::<f64>(g)
}

fn normal_squeezing_t<T: Real>(g: f64) -> Result<T> {
    if !(0.0..1.0).contains(&g) {
        return Err(Error::Domain(format!("normal-phase squeezing undefined for g = {g} (need 0 <= g < 1)")));
    }
    let gt = T::from_f64(g);
    Ok(-(T::from_f64(1.0) - gt * gt).ln() * T::from_f64(0.25))
}

/// Fock amplitudes of `D(α) S(s) |0⟩` for `n = 0..=cutoff`, renormalized,
/// together with the truncated-norm deficit before renormalization.
///
/// Uses the eigenvalue relation `(a cosh s − a† sinh s) ψ = α e^{−s} ψ`, i.e.
///
/// ```text
/// cosh s √(n+1) c_{n+1} = α e^{−s} c_n + sinh s √n c_{n−1},
/// c_0 = (cosh s)^{−1/2} exp(−α² (1 − tanh s) / 2).
/// ```
pub fn fock_amplitudes<T: Real>(alpha: T, s: T, cutoff: usize) -> Result<(Vec<T>, f64)> {
    let zero = T::from_f64(0.0);
    let one = T::from_f64(1.0);
    let half = T::from_f64(0.5);
    let negative = alpha < zero;
    let alpha = alpha.abs();

    let es = s.exp();
    let ems = one / es;
    let cosh = (es + ems) * half;
    let sinh = (es - ems) * half;
    let tanh = sinh / cosh;
    let ln_c0 = -cosh.ln() * half - alpha * alpha * (one - tanh) * half;
    let drive = alpha * ems / cosh;

    // Run with c_0 = 1, rescaling by 2^-SHIFT whenever the values grow too large.
    let big = T::from_f64(1.0).ldexp(SHIFT);
    let mut stored = Vec::with_capacity(cutoff + 1);
    let mut scale = Vec::with_capacity(cutoff + 1);
    stored.push(one);
    scale.push(0i32);
    let (mut prev, mut cur, mut k) = (zero, one, 0i32);
    for n in 0..cutoff {
        let sqrt_n = T::from_f64(n as f64).sqrt();
        let sqrt_n1 = T::from_f64((n + 1) as f64).sqrt();
        let mut next = (drive * cur + tanh * sqrt_n * prev) / sqrt_n1;
        if next.abs() > big {
            next = next.ldexp(-SHIFT);
            cur = cur.ldexp(-SHIFT);
            k += 1;
        }
        prev = cur;
        cur = next;
        stored.push(cur);
        scale.push(k);
    }

    let ln2 = T::from_f64(2.0).ln();
    let mut factors: Vec<T> = Vec::new();
    let mut amps = Vec::with_capacity(cutoff + 1);
    for (n, (c, k)) in stored.into_iter().zip(scale).enumerate() {
        let k = k as usize;
        while factors.len() <= k {
            let j = factors.len() as f64;
            factors.push((ln_c0 + ln2 * T::from_f64(j * SHIFT as f64)).exp());
        }
        let mut a = c * factors[k];
        if negative && n % 2 == 1 {
            a = -a;
        }
        amps.push(a);
    }

    let mut norm_sq = zero;
    for &a in &amps {
        norm_sq = norm_sq + a * a;
    }
    let deficit = (one - norm_sq).to_f64().max(0.0);
    if !(deficit <= MAX_TRUNCATION_DEFICIT) {
        return Err(Error::CutoffTooSmall {
            cutoff,
            detail: format!("truncated norm deficit {deficit:.3e} exceeds {MAX_TRUNCATION_DEFICIT:e}"),
        });
    }
    let inv = one / norm_sq.sqrt();
    for a in &mut amps {
        *a = *a * inv;
    }
    Ok((amps, deficit))
}

/// Normalized state vector in basis order.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    pub amplitudes: Vec<Complex64>,
    pub norm_tolerance: f64,
    /// Probability lost to the Fock cutoff before renormalization.
    pub truncation_deficit: f64,
}

impl QuantumState {
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        let st = QuantumState { amplitudes, norm_tolerance: NORM_TOLERANCE, truncation_deficit: 0.0 };
        let norm = st.norm();
        if !norm.is_finite() {
            return Err(Error::NonFinite("state amplitudes"));
        }
        if (norm - 1.0).abs() > st.norm_tolerance {
            return Err(Error::param("amplitudes", format!("state norm {norm} differs from 1")));
        }
        Ok(st)
    }

    pub fn from_real(amplitudes: &[f64]) -> Result<Self> {
        Self::new(amplitudes.iter().map(|&a| Complex64::new(a, 0.0)).collect())
    }

    /// Basis vector `e_index` of dimension `dim`.
    pub fn basis_vector(dim: usize, index: usize) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim];
        amplitudes[index] = Complex64::new(1.0, 0.0);
        QuantumState { amplitudes, norm_tolerance: NORM_TOLERANCE, truncation_deficit: 0.0 }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn expectation(&self, op: &OperatorMatrix) -> Result<f64> {
        self.expectation_sparse(&op.to_sparse())
    }

    pub fn expectation_sparse(&self, op: &SparseOperator) -> Result<f64> {
        if op.dim != self.dim() {
            return Err(Error::DimensionMismatch { expected: op.dim, found: self.dim() });
        }
        Ok(op.expectation(&self.amplitudes))
    }

    /// `Π |ψ⟩`; the parity operator is diagonal in basis order.
    pub fn apply_parity(&self) -> QuantumState {
        let basis = build_basis(self.dim() / 2 - 1);
        let amplitudes = self.amplitudes.iter().enumerate().map(|(i, &a)| a * f64::from(basis.parity(i))).collect();
        QuantumState { amplitudes, ..self.clone() }
    }

    /// Probability held by the top `fraction` of Fock levels.
    pub fn band_population(&self, fraction: f64) -> f64 {
        band_population(&self.amplitudes, fraction)
    }
}

/// Probability in Fock levels `n ≥ (1 − fraction)(N + 1)` of a basis-ordered
/// amplitude vector.
pub fn band_population(amplitudes: &[Complex64], fraction: f64) -> f64 {
    let levels = amplitudes.len() / 2;
    let band = ((levels as f64 * fraction).ceil() as usize).max(1);
    amplitudes[2 * (levels - band)..].iter().map(|a| a.norm_sqr()).sum()
}

/// `D(α)S(s)|0⟩ ⊗ (c_up |↑⟩ + c_down |↓⟩)`.
pub fn coherent_squeezed_vector(alpha: f64, s: f64, spin: (f64, f64), cutoff: usize) -> Result<QuantumState> {
    let (up, down) = spin;
    let spin_norm = (up * up + down * down).sqrt();
    if (spin_norm - 1.0).abs() > 1e-12 {
        return Err(Error::param("spin", format!("spin coefficients have norm {spin_norm}")));
    }
    let (fock, deficit) = fock_amplitudes::<f64>(alpha, s, cutoff)?;
    let mut st = QuantumState::new(tensor_spin(&fock, up, down).into_iter().map(|a| Complex64::new(a, 0.0)).collect())?;
    st.truncation_deficit = deficit;
    Ok(st)
}

fn tensor_spin<T: Real>(fock: &[T], up: T, down: T) -> Vec<T> {
    let mut out = Vec::with_capacity(2 * fock.len());
    for &c in fock {
        out.push(down * c);
        out.push(up * c);
    }
    out
}

fn analytic_amplitudes<T: Real>(params: &ModelParams, branch: Branch, phase: Phase) -> Result<(Vec<T>, f64)> {
    params.validate()?;
    let g = params.g;
    if g == 1.0 {
        return Err(Error::Domain("g = 1: both squeezing parameters diverge".into()));
    }
    match phase {
        Phase::Normal => {
            let s = normal_squeezing_t::<T>(g)?;
            let (fock, deficit) = fock_amplitudes(T::from_f64(0.0), s, params.cutoff)?;
            Ok((tensor_spin(&fock, T::from_f64(0.0), T::from_f64(1.0)), deficit))
        }
        Phase::Superradiant => {
            let (alpha, s, up, down) = superradiant_t::<T>(g, params.eta)?;
            let (alpha, up) = match branch {
                Branch::Plus => (alpha, up),
                Branch::Minus => (-alpha, -up),
            };
            let (fock, deficit) = fock_amplitudes(alpha, s, params.cutoff)?;
            Ok((tensor_spin(&fock, up, down), deficit))
        }
    }
}

/// Analytic ground state of `H(params.g)` on the chosen branch.
///
/// The branch is ignored in the normal phase, where the state is unique.
pub fn analytic_ground_state(params: &ModelParams, branch: Branch, phase: Phase) -> Result<QuantumState> {
    let (amps, deficit) = analytic_amplitudes::<f64>(params, branch, phase)?;
    let mut st = QuantumState::from_real(&amps)?;
    st.truncation_deficit = deficit;
    Ok(st)
}

/// Same state with amplitudes in double-double precision.
pub fn analytic_ground_state_dd(params: &ModelParams, branch: Branch, phase: Phase) -> Result<Vec<Dd>> {
    analytic_amplitudes::<Dd>(params, branch, phase).map(|(a, _)| a)
}

/// ⟨a|b⟩.
pub fn overlap(a: &QuantumState, b: &QuantumState) -> Result<Complex64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    Ok(a.amplitudes.iter().zip(&b.amplitudes).map(|(x, y)| x.conj() * y).sum())
}

/// `|⟨a|b⟩|²`.
pub fn fidelity(a: &QuantumState, b: &QuantumState) -> Result<f64> {
    overlap(a, b).map(|z| z.norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{assemble_operator, OperatorKind};
    use faer::Mat;
    use proptest::prelude::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    /// exp(M) for a small dense matrix by scaling and squaring a Taylor series.
    fn expm(m: &Mat<f64>) -> Mat<f64> {
        let d = m.nrows();
        let mut norm = 0.0f64;
        for i in 0..d {
            norm = norm.max((0..d).map(|j| m[(i, j)].abs()).sum());
        }
        let k = (norm.max(1.0).log2().ceil() as i32 + 4).max(0);
        let a = m * faer::Scale(2f64.powi(-k));
        let mut result = Mat::<f64>::identity(d, d);
        let mut term = Mat::<f64>::identity(d, d);
        for j in 1..30 {
            term = &term * &a * faer::Scale(1.0 / j as f64);
            result += &term;
        }
        for _ in 0..k {
            result = &result * &result;
        }
        result
    }

    fn ladder(dim: usize) -> Mat<f64> {
        Mat::from_fn(dim, dim, |i, j| if j == i + 1 { (j as f64).sqrt() } else { 0.0 })
    }

    /// D(α) S(s) |0⟩ via dense matrix exponentials on a larger truncated space.
    fn expm_state(alpha: f64, s: f64, dim: usize) -> Vec<f64> {
        let a = ladder(dim);
        let ad = a.transpose().to_owned();
        let sq = (&ad * &ad - &a * &a) * faer::Scale(s / 2.0);
        let disp = (&ad - &a) * faer::Scale(alpha);
        let v = expm(&disp) * expm(&sq);
        (0..dim).map(|i| v[(i, 0)]).collect()
    }

    /// ⟨ψ1|ψ2⟩ for real displaced squeezed vacua: Gaussians in q = (a+a†)/√2
    /// centred at √2 α with width² e^{2s}.
    fn gaussian_overlap(a1: f64, s1: f64, a2: f64, s2: f64) -> f64 {
        let v1 = (2.0 * s1).exp();
        let v2 = (2.0 * s2).exp();
        let dq = 2f64.sqrt() * (a1 - a2);
        (2.0 * (v1 * v2).sqrt() / (v1 + v2)).sqrt() * (-dq * dq / (2.0 * (v1 + v2))).exp()
    }

    fn p(eta: f64, g: f64, cutoff: usize) -> ModelParams {
        ModelParams::new(eta, 1.0, g, cutoff).unwrap()
    }

    #[test]
    fn superradiant_reference_values() {
        let sp = superradiant_parameters(1.5, 100.0, Branch::Plus).unwrap();
        assert!((sp.alpha_sp - 6.71855).abs() < 1e-5);
        // −¼ ln(1 − 1/5.0625)
        assert!((sp.s_sp - 0.05501547119420041).abs() < 1e-15);
        assert!((sp.spin_up_coeff - (5.0f64 / 18.0).sqrt()).abs() < 1e-15);
        assert!((sp.spin_down_coeff - (13.0f64 / 18.0).sqrt()).abs() < 1e-15);
        assert!((sp.spin_up_coeff - 0.527046).abs() < 1e-6);
        assert!((sp.spin_down_coeff - 0.849837).abs() < 1e-6);
        let m = superradiant_parameters(1.5, 100.0, Branch::Minus).unwrap();
        assert_eq!(m.spin_up_coeff, -sp.spin_up_coeff);
        assert_eq!(m.alpha(), -sp.alpha());
    }

    #[test]
    fn superradiant_limits() {
        let sp = superradiant_parameters(1.0 + 1e-9, 100.0, Branch::Plus).unwrap();
        assert!(sp.alpha_sp < 1e-3);
        assert!(sp.s_sp > 4.0);
        assert!(matches!(superradiant_parameters(1.0, 100.0, Branch::Plus), Err(Error::Domain(_))));
        assert!(matches!(superradiant_parameters(0.5, 100.0, Branch::Plus), Err(Error::Domain(_))));
    }

    #[test]
    fn vacuum_is_exact() {
        let st = coherent_squeezed_vector(0.0, 0.0, (0.0, 1.0), 5).unwrap();
        assert_eq!(st.amplitudes[0], Complex64::new(1.0, 0.0));
        assert!(st.amplitudes[1..].iter().all(|a| *a == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn coherent_state_is_poissonian() {
        let (c, deficit) = fock_amplitudes::<f64>(2.0, 0.0, 40).unwrap();
        assert!(deficit < 1e-12);
        for (n, &cn) in c.iter().enumerate().take(25) {
            let exact = (-2.0f64).exp() * 2f64.powi(n as i32) / factorial(n).sqrt();
            assert!((cn - exact).abs() < 1e-14, "n={n}: {cn} vs {exact}");
        }
    }

    #[test]
    fn squeezed_vacuum_has_no_odd_amplitudes() {
        let (c, _) = fock_amplitudes::<f64>(0.0, 0.5, 60).unwrap();
        for n in (1..c.len()).step_by(2) {
            assert_eq!(c[n], 0.0);
        }
        // even amplitudes: (cosh s)^{-1/2} tanh^m s √((2m)!)/(2^m m!)
        let (ch, th) = (0.5f64.cosh(), 0.5f64.tanh());
        for m in 0..10 {
            let exact = th.powi(m as i32) * factorial(2 * m).sqrt() / (2f64.powi(m as i32) * factorial(m)) / ch.sqrt();
            assert!((c[2 * m] - exact).abs() < 1e-14);
        }
    }

    #[test]
    fn recurrence_matches_matrix_exponentials() {
        for &(alpha, s) in &[(2.0, 0.3), (1.5, -0.4), (-2.5, 0.2), (3.0, 0.0), (0.0, 0.7)] {
            let oracle = expm_state(alpha, s, 160);
            let (c, _) = fock_amplitudes::<f64>(alpha, s, 60).unwrap();
            for n in 0..=60 {
                assert!((c[n] - oracle[n]).abs() < 1e-8, "α={alpha} s={s} n={n}: {} vs {}", c[n], oracle[n]);
            }
        }
    }

    #[test]
    fn large_displacement_survives_rescaling() {
        // α² = 900: c_0 = e^{-450} underflows on its own in f64 products
        let (c, deficit) = fock_amplitudes::<f64>(30.0, 0.1, 1400).unwrap();
        assert!(deficit < 1e-8);
        let norm: f64 = c.iter().map(|x| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        let mean: f64 = c.iter().enumerate().map(|(n, x)| n as f64 * x * x).sum();
        // ⟨n⟩ = α² + sinh² s
        assert!((mean - (900.0 + 0.1f64.sinh().powi(2))).abs() < 1e-6);
    }

    #[test]
    fn small_cutoff_is_reported() {
        let err = fock_amplitudes::<f64>(6.7, 0.05, 40).unwrap_err();
        assert!(matches!(err, Error::CutoffTooSmall { cutoff: 40, .. }));
    }

    #[test]
    fn dd_and_f64_amplitudes_agree() {
        let (cf, _) = fock_amplitudes::<f64>(6.7, 0.055, 150).unwrap();
        let (cd, _) = fock_amplitudes::<Dd>(Dd::from(6.7), Dd::from(0.055), 150).unwrap();
        for (a, b) in cf.iter().zip(&cd) {
            assert!((a - b.to_f64()).abs() < 1e-14);
        }
    }

    #[test]
    fn normal_phase_states() {
        let st = analytic_ground_state(&p(100.0, 0.0, 4), Branch::Plus, Phase::Normal).unwrap();
        assert_eq!(st.amplitudes[0], Complex64::new(1.0, 0.0));
        let st = analytic_ground_state(&p(100.0, 0.5, 60), Branch::Plus, Phase::Normal).unwrap();
        // ⟨n⟩ = sinh² s_np
        let n = st.expectation(&assemble_operator(OperatorKind::Number, &p(100.0, 0.5, 60))).unwrap();
        assert!((n - normal_squeezing(0.5).unwrap().sinh().powi(2)).abs() < 1e-12);
        assert!(analytic_ground_state(&p(100.0, 1.0, 60), Branch::Plus, Phase::Normal).is_err());
        assert!(analytic_ground_state(&p(100.0, 1.0, 60), Branch::Plus, Phase::Superradiant).is_err());
    }

    #[test]
    fn closed_form_expectations() {
        let g = 1.5;
        let params = p(100.0, g, 200);
        let st = analytic_ground_state(&params, Branch::Plus, Phase::Superradiant).unwrap();
        let sx = st.expectation(&assemble_operator(OperatorKind::SigmaX, &params)).unwrap();
        let x = st.expectation(&assemble_operator(OperatorKind::X, &params)).unwrap();
        let sz = st.expectation(&assemble_operator(OperatorKind::SigmaZ, &params)).unwrap();
        let sy = st.expectation(&assemble_operator(OperatorKind::SigmaY, &params)).unwrap();
        let pp = st.expectation(&assemble_operator(OperatorKind::P, &params)).unwrap();
        assert!((sx - (1.0 - g.powi(-4)).sqrt()).abs() < 1e-6);
        assert!((x - ((g * g - 1.0 / (g * g)) / 2.0).sqrt()).abs() < 1e-6);
        assert!((sz + 1.0 / (g * g)).abs() < 1e-12);
        assert!(sy.abs() < 1e-15 && pp.abs() < 1e-15);
    }

    #[test]
    fn parity_maps_branches() {
        let params = p(100.0, 1.5, 200);
        let plus = analytic_ground_state(&params, Branch::Plus, Phase::Superradiant).unwrap();
        let minus = analytic_ground_state(&params, Branch::Minus, Phase::Superradiant).unwrap();
        let f = fidelity(&plus.apply_parity(), &minus).unwrap();
        assert!(f > 1.0 - 1e-10);
    }

    #[test]
    fn branch_overlap_is_exponentially_small() {
        let params = p(100.0, 1.5, 200);
        let plus = analytic_ground_state_dd(&params, Branch::Plus, Phase::Superradiant).unwrap();
        let minus = analytic_ground_state_dd(&params, Branch::Minus, Phase::Superradiant).unwrap();
        let mut acc = Dd::ZERO;
        for (a, b) in plus.iter().zip(&minus) {
            acc += *a * *b;
        }
        // e^{-2α²} (c_down² − c_up²) ≈ 3.3e-40
        let sp = superradiant_parameters(1.5, 100.0, Branch::Plus).unwrap();
        let oracle = (-2.0 * sp.alpha_sp.powi(2)).exp() * (sp.spin_down_coeff.powi(2) - sp.spin_up_coeff.powi(2));
        assert!(acc.to_f64().abs() < 1e-30, "{}", acc.to_f64());
        assert!(oracle.abs() < 1e-30);
    }

    #[test]
    fn overlap_against_gaussian_oracle() {
        let (g1, g2, eta) = (1.5, 1.2, 100.0);
        let a = analytic_ground_state(&p(eta, g1, 220), Branch::Plus, Phase::Superradiant).unwrap();
        let b = analytic_ground_state(&p(eta, g2, 220), Branch::Plus, Phase::Superradiant).unwrap();
        let s1 = superradiant_parameters(g1, eta, Branch::Plus).unwrap();
        let s2 = superradiant_parameters(g2, eta, Branch::Plus).unwrap();
        let spin = s1.spin_up_coeff * s2.spin_up_coeff + s1.spin_down_coeff * s2.spin_down_coeff;
        let oracle = gaussian_overlap(s1.alpha_sp, s1.s_sp, s2.alpha_sp, s2.s_sp) * spin;
        let z = overlap(&a, &b).unwrap();
        assert!((z.re - oracle).abs() < 1e-6, "{} vs {oracle}", z.re);
        assert!(z.im.abs() < 1e-15);
    }

    #[test]
    fn overlap_basics() {
        let a = QuantumState::basis_vector(6, 2);
        let b = QuantumState::basis_vector(6, 3);
        assert_eq!(overlap(&a, &a).unwrap(), Complex64::new(1.0, 0.0));
        assert_eq!(overlap(&a, &b).unwrap(), Complex64::new(0.0, 0.0));
        let c = QuantumState::basis_vector(8, 0);
        assert!(matches!(overlap(&a, &c), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn unnormalized_state_rejected() {
        assert!(QuantumState::from_real(&[1.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn amplitudes_normalized_and_match_moments(alpha in -4.0f64..4.0, s in -0.6f64..0.6) {
            let (c, _) = fock_amplitudes::<f64>(alpha, s, 120).unwrap();
            let norm: f64 = c.iter().map(|x| x * x).sum();
            prop_assert!((norm - 1.0).abs() < 1e-12);
            // ⟨a⟩ = α, ⟨a†a⟩ = α² + sinh² s
            let mean_a: f64 = (1..c.len()).map(|n| (n as f64).sqrt() * c[n - 1] * c[n]).sum();
            let mean_n: f64 = c.iter().enumerate().map(|(n, x)| n as f64 * x * x).sum();
            prop_assert!((mean_a - alpha).abs() < 1e-10);
            prop_assert!((mean_n - alpha * alpha - s.sinh().powi(2)).abs() < 1e-10);
        }

        #[test]
        fn spin_coefficients_normalized(g in 1.0001f64..5.0) {
            let sp = superradiant_parameters(g, 10.0, Branch::Plus).unwrap();
            prop_assert!((sp.spin_up_coeff.powi(2) + sp.spin_down_coeff.powi(2) - 1.0).abs() < 1e-12);
            prop_assert!(sp.alpha_sp > 0.0);
        }
    }
}
