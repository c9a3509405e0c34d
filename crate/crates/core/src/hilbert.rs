//! Truncated spin ⊗ Fock basis, the Rabi Hamiltonian and observables.
//!
//! Basis ordering is Fock-major with the spin index fastest:
//!
//! ```text
//! index(spin, n) = 2 n + spin,    spin: down = 0, up = 1
//! ```
//!
//! so `|↓,0⟩, |↑,0⟩, |↓,1⟩, |↑,1⟩, …`. The parity `Π = σz ⊗ (-1)^{a†a}` is
//! diagonal in this ordering and each parity sector is a chain
//! `(s_0, 0) — (s_1, 1) — (s_2, 2) — …` on which the Hamiltonian is
//! tridiagonal. The ordering is versioned by [`BASIS_VERSION`]; cached
//! eigenvectors are only reused when the version matches.

use std::fmt;
use std::str::FromStr;

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dd::Dd;
use crate::error::{Error, Result};

/// Bumped whenever the index map below changes.
pub const BASIS_VERSION: u32 = 1;

/// Physical inputs of one Hamiltonian instance.
///
/// The spin frequency is never stored; it is `eta * omega0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Frequency ratio Ω/ω₀.
    pub eta: f64,
    /// Mode frequency ω₀.
    pub omega0: f64,
    /// Dimensionless coupling.
    pub g: f64,
    /// Largest Fock occupation kept.
    pub cutoff: usize,
}

impl ModelParams {
    pub fn new(eta: f64, omega0: f64, g: f64, cutoff: usize) -> Result<Self> {
        let p = ModelParams { eta, omega0, g, cutoff };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::param("eta", format!("must be finite and > 0, got {}", self.eta)));
        }
        if !(self.omega0.is_finite() && self.omega0 > 0.0) {
            return Err(Error::param("omega0", format!("must be finite and > 0, got {}", self.omega0)));
        }
        if !(self.g.is_finite() && self.g >= 0.0) {
            return Err(Error::param("g", format!("must be finite and >= 0, got {}", self.g)));
        }
        Ok(())
    }

    /// Ω = η ω₀.
    #[inline]
    pub fn spin_frequency(&self) -> f64 {
        self.eta * self.omega0
    }

    pub fn with_g(self, g: f64) -> Self {
        ModelParams { g, ..self }
    }

    pub fn basis(&self) -> Basis {
        build_basis(self.cutoff)
    }
}

/// Default cutoff: `ceil(α² + 10 α + 20)` with `α² = η (g² − g⁻²)/4` at the
/// largest coupling involved (`α² = 0` when that coupling is ≤ 1).
pub fn auto_cutoff(eta: f64, g_max: f64) -> usize {
    let alpha_sq = if g_max > 1.0 { eta * (g_max * g_max - 1.0 / (g_max * g_max)) / 4.0 } else { 0.0 };
    (alpha_sq + 10.0 * alpha_sq.sqrt() + 20.0).ceil() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Spin {
    Down = 0,
    Up = 1,
}

impl Spin {
    /// Eigenvalue of σz.
    #[inline]
    pub fn sigma_z(self) -> f64 {
        match self {
            Spin::Down => -1.0,
            Spin::Up => 1.0,
        }
    }

    #[inline]
    pub fn flip(self) -> Spin {
        match self {
            Spin::Down => Spin::Up,
            Spin::Up => Spin::Down,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Basis {
    pub cutoff: usize,
    pub dim: usize,
}

pub fn build_basis(cutoff: usize) -> Basis {
    Basis { cutoff, dim: 2 * (cutoff + 1) }
}

impl Basis {
    #[inline]
    pub fn index(&self, spin: Spin, n: usize) -> usize {
        debug_assert!(n <= self.cutoff);
        2 * n + spin as usize
    }

    #[inline]
    pub fn state(&self, index: usize) -> (Spin, usize) {
        let spin = if index.is_multiple_of(2) { Spin::Down } else { Spin::Up };
        (spin, index / 2)
    }

    /// Eigenvalue of Π on a basis vector.
    #[inline]
    pub fn parity(&self, index: usize) -> i8 {
        let (spin, n) = self.state(index);
        let fock = if n % 2 == 0 { 1 } else { -1 };
        if spin == Spin::Up {
            fock
        } else {
            -fock
        }
    }

    /// Indices of one parity sector, ordered by Fock number.
    pub fn parity_chain(&self, parity: i8) -> Vec<usize> {
        (0..=self.cutoff)
            .map(|n| {
                let even = n % 2 == 0;
                let up = (parity > 0) == even;
                self.index(if up { Spin::Up } else { Spin::Down }, n)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Hamiltonian,
    SigmaX,
    SigmaY,
    SigmaZ,
    X,
    P,
    Number,
    Parity,
}

impl OperatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OperatorKind::Hamiltonian => "hamiltonian",
            OperatorKind::SigmaX => "sigma_x",
            OperatorKind::SigmaY => "sigma_y",
            OperatorKind::SigmaZ => "sigma_z",
            OperatorKind::X => "x",
            OperatorKind::P => "p",
            OperatorKind::Number => "number",
            OperatorKind::Parity => "parity",
        }
    }

    /// σy and p are stored as `M` with the operator equal to `i M`.
    pub fn is_imaginary(self) -> bool {
        matches!(self, OperatorKind::SigmaY | OperatorKind::P)
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OperatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "hamiltonian" => OperatorKind::Hamiltonian,
            "sigma_x" => OperatorKind::SigmaX,
            "sigma_y" => OperatorKind::SigmaY,
            "sigma_z" => OperatorKind::SigmaZ,
            "x" => OperatorKind::X,
            "p" => OperatorKind::P,
            "number" => OperatorKind::Number,
            "parity" => OperatorKind::Parity,
            other => return Err(Error::UnknownOperator(other.to_string())),
        })
    }
}

/// Dense real matrix of an operator in [`Basis`] order.
///
/// For σy and p (`imaginary == true`) the stored matrix `M` is antisymmetric
/// and the operator is `i M`.
#[derive(Clone)]
pub struct OperatorMatrix {
    pub kind: OperatorKind,
    pub imaginary: bool,
    pub entries: Mat<f64>,
}

impl fmt::Debug for OperatorMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorMatrix")
            .field("kind", &self.kind)
            .field("imaginary", &self.imaginary)
            .field("dim", &self.dim())
            .finish()
    }
}

impl OperatorMatrix {
    fn zeros(kind: OperatorKind, dim: usize) -> Self {
        OperatorMatrix { kind, imaginary: kind.is_imaginary(), entries: Mat::zeros(dim, dim) }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    fn set_pair(&mut self, i: usize, j: usize, v: f64) {
        self.entries[(i, j)] = v;
        self.entries[(j, i)] = if self.imaginary { -v } else { v };
    }

    /// `max |M - M^T|` for real operators, `max |M + M^T|` for imaginary ones.
    pub fn max_asymmetry(&self) -> f64 {
        let d = self.dim();
        let sign = if self.imaginary { -1.0 } else { 1.0 };
        let mut worst = 0.0f64;
        for j in 0..d {
            for i in 0..d {
                worst = worst.max((self.entries[(i, j)] - sign * self.entries[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        let d = self.dim();
        let mut m = 0.0f64;
        for j in 0..d {
            for i in 0..d {
                m = m.max(self.entries[(i, j)].abs());
            }
        }
        m
    }

    /// Nonzero entries, for repeated expectation values.
    pub fn to_sparse(&self) -> SparseOperator {
        let d = self.dim();
        let mut entries = Vec::new();
        for j in 0..d {
            for i in 0..d {
                let v = self.entries[(i, j)];
                if v != 0.0 {
                    entries.push((i as u32, j as u32, v));
                }
            }
        }
        SparseOperator { kind: self.kind, imaginary: self.imaginary, dim: d, entries }
    }

    /// ⟨ψ|A|ψ⟩ for a normalized or unnormalized state (no division by the norm).
    pub fn expectation(&self, psi: &[Complex64]) -> f64 {
        self.to_sparse().expectation(psi)
    }
}

/// Triplet list of a banded operator; the dense form stays authoritative.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    pub kind: OperatorKind,
    pub imaginary: bool,
    pub dim: usize,
    entries: Vec<(u32, u32, f64)>,
}

impl SparseOperator {
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Real expectation value ⟨ψ|A|ψ⟩.
    pub fn expectation(&self, psi: &[Complex64]) -> f64 {
        debug_assert_eq!(psi.len(), self.dim);
        let mut acc = Complex64::new(0.0, 0.0);
        for &(i, j, v) in &self.entries {
            acc += psi[i as usize].conj() * psi[j as usize] * v;
        }
        if self.imaginary {
            // ⟨ψ| i M |ψ⟩ with M antisymmetric: ψ†Mψ is purely imaginary
            -acc.im
        } else {
            acc.re
        }
    }

    /// Same as [`expectation`](Self::expectation) with split real/imaginary
    /// amplitude arrays, as produced by the batched propagator.
    pub fn expectation_split(&self, re: &[f64], im: &[f64]) -> f64 {
        let mut acc_re = 0.0;
        let mut acc_im = 0.0;
        for &(i, j, v) in &self.entries {
            let (i, j) = (i as usize, j as usize);
            // conj(a_i) a_j
            acc_re += v * (re[i] * re[j] + im[i] * im[j]);
            acc_im += v * (re[i] * im[j] - im[i] * re[j]);
        }
        if self.imaginary {
            -acc_im
        } else {
            acc_re
        }
    }
}

/// Coupling amplitude `-g √(Ω ω₀)/2 · √(n+1)` between `(s, n)` and `(s̄, n+1)`.
#[inline]
fn coupling(params: &ModelParams, n: usize) -> f64 {
    -params.g * (params.spin_frequency() * params.omega0).sqrt() / 2.0 * ((n + 1) as f64).sqrt()
}

/// `H = Ω/2 σz + ω₀ a†a − g √(Ω ω₀)/2 (a + a†) σx`.
pub fn assemble_hamiltonian(params: &ModelParams) -> OperatorMatrix {
    let basis = params.basis();
    let mut h = OperatorMatrix::zeros(OperatorKind::Hamiltonian, basis.dim);
    let half_omega = params.spin_frequency() / 2.0;
    for n in 0..=basis.cutoff {
        for spin in [Spin::Down, Spin::Up] {
            let i = basis.index(spin, n);
            h.entries[(i, i)] = spin.sigma_z() * half_omega + params.omega0 * n as f64;
            if n < basis.cutoff && params.g != 0.0 {
                h.set_pair(basis.index(spin.flip(), n + 1), i, coupling(params, n));
            }
        }
    }
    h
}

pub fn assemble_operator(kind: OperatorKind, params: &ModelParams) -> OperatorMatrix {
    if kind == OperatorKind::Hamiltonian {
        return assemble_hamiltonian(params);
    }
    let basis = params.basis();
    let mut m = OperatorMatrix::zeros(kind, basis.dim);
    let quad_scale = 1.0 / (2.0 * params.eta).sqrt();
    for n in 0..=basis.cutoff {
        for spin in [Spin::Down, Spin::Up] {
            let i = basis.index(spin, n);
            match kind {
                OperatorKind::SigmaX => {
                    m.entries[(basis.index(spin.flip(), n), i)] = 1.0;
                }
                OperatorKind::SigmaY => {
                    // σy|↑⟩ = i|↓⟩
                    if spin == Spin::Up {
                        m.set_pair(basis.index(Spin::Down, n), i, 1.0);
                    }
                }
                OperatorKind::SigmaZ => m.entries[(i, i)] = spin.sigma_z(),
                OperatorKind::Number => m.entries[(i, i)] = n as f64,
                OperatorKind::Parity => m.entries[(i, i)] = f64::from(basis.parity(i)),
                OperatorKind::X => {
                    if n < basis.cutoff {
                        m.set_pair(basis.index(spin, n + 1), i, ((n + 1) as f64).sqrt() * quad_scale);
                    }
                }
                OperatorKind::P => {
                    // p = i (a† − a)/√(2η): ⟨n+1|p|n⟩ = i √(n+1)/√(2η)
                    if n < basis.cutoff {
                        m.set_pair(basis.index(spin, n + 1), i, ((n + 1) as f64).sqrt() * quad_scale);
                    }
                }
                OperatorKind::Hamiltonian => unreachable!(),
            }
        }
    }
    m
}

/// Diagonal and off-diagonal of the Hamiltonian restricted to one parity
/// chain (see [`Basis::parity_chain`]), in double-double precision.
pub fn hamiltonian_chain_dd(params: &ModelParams, parity: i8) -> (Vec<Dd>, Vec<Dd>) {
    let basis = params.basis();
    let omega = Dd::from(params.eta) * params.omega0;
    let half_omega = omega * 0.5;
    let chain = basis.parity_chain(parity);
    let diag = chain
        .iter()
        .map(|&i| {
            let (spin, n) = basis.state(i);
            half_omega * spin.sigma_z() + Dd::from(params.omega0) * (n as f64)
        })
        .collect();
    let prefactor = -(Dd::from(params.g) * (omega * params.omega0).sqrt()) * 0.5;
    let off = (0..basis.cutoff).map(|n| prefactor * Dd::from((n + 1) as f64).sqrt()).collect();
    (diag, off)
}
