//! Full eigendecompositions of Hamiltonian instances, degeneracy analysis and
//! an on-disk cache.
//!
//! The Rabi Hamiltonian conserves parity, and in the basis order of
//! [`crate::hilbert`] each parity sector is a tridiagonal chain. Each chain is
//! diagonalized on its own, which makes the parity labels exact even for
//! doublets whose splitting is far below machine precision.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Once;
use std::time::{Duration, SystemTime};

use faer::{Mat, Par, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::hilbert::{
    assemble_hamiltonian, assemble_operator, hamiltonian_chain_dd, ModelParams, OperatorKind, OperatorMatrix,
    BASIS_VERSION,
};
use crate::states::{Branch, QuantumState};

/// Default splitting below which a doublet counts as degenerate, in units of ω₀.
pub const DEFAULT_GAP_THRESHOLD: f64 = 1e-3;

static SEQUENTIAL: Once = Once::new();

fn sequential_linalg() {
    // parallelism lives at the sweep level; keep each solve single threaded
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(Par::Seq));
}

#[derive(Clone)]
pub struct SpectralData {
    pub params: ModelParams,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `n` is `|φ_n⟩` in basis order.
    pub eigenvectors: Mat<f64>,
    pub parity_labels: Vec<i8>,
}

impl std::fmt::Debug for SpectralData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralData")
            .field("params", &self.params)
            .field("dim", &self.dim())
            .field("e0", &self.eigenvalues.first())
            .finish()
    }
}

impl SpectralData {
    #[inline]
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    #[inline]
    pub fn vector(&self, n: usize) -> &[f64] {
        self.eigenvectors.col_as_slice(n)
    }

    /// `max |VᵀV − I|`.
    pub fn orthonormality_residual(&self) -> f64 {
        let gram = self.eigenvectors.transpose() * &self.eigenvectors;
        let d = self.dim();
        let mut worst = 0.0f64;
        for j in 0..d {
            for i in 0..d {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// `max |V diag(E) Vᵀ − H| / max |H|`.
    pub fn reconstruction_residual(&self, h: &OperatorMatrix) -> f64 {
        let d = self.dim();
        let scaled = Mat::from_fn(d, d, |i, j| self.eigenvectors[(i, j)] * self.eigenvalues[j]);
        let rebuilt = &scaled * self.eigenvectors.transpose();
        let mut worst = 0.0f64;
        for j in 0..d {
            for i in 0..d {
                worst = worst.max((rebuilt[(i, j)] - h.get(i, j)).abs());
            }
        }
        worst / h.max_abs().max(f64::MIN_POSITIVE)
    }

    /// Coefficients `⟨φ_n|ψ⟩` for all n.
    pub fn project(&self, psi: &QuantumState) -> Result<Vec<Complex64>> {
        if psi.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: psi.dim() });
        }
        Ok((0..self.dim())
            .map(|n| self.vector(n).iter().zip(&psi.amplitudes).map(|(&v, &a)| a * v).sum::<Complex64>())
            .collect())
    }
}

fn check_symmetric(h: &OperatorMatrix) -> Result<()> {
    if h.imaginary {
        return Err(Error::param("matrix", format!("{} is not real symmetric", h.kind)));
    }
    let asym = h.max_asymmetry();
    if asym > 1e-12 * h.max_abs().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

fn dense_eigen(m: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    sequential_linalg();
    let d = m.nrows();
    let max_abs = || {
        let mut x = 0.0f64;
        for j in 0..d {
            for i in 0..d {
                x = x.max(m[(i, j)].abs());
            }
        }
        x
    };
    let evd =
        m.self_adjoint_eigen(Side::Lower).map_err(|_| Error::EigenNoConvergence { dim: d, max_abs: max_abs() })?;
    let values: Vec<f64> = (0..d).map(|i| evd.S().column_vector()[i]).collect();
    let vectors = evd.U().to_owned();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenNoConvergence { dim: d, max_abs: max_abs() });
    }
    Ok((values, vectors))
}

/// Decomposition of `H(params)` through its two parity chains.
pub fn eigendecompose(params: &ModelParams) -> Result<SpectralData> {
    params.validate()?;
    let h = assemble_hamiltonian(params);
    let basis = params.basis();
    let mut pieces: Vec<(f64, i8, Vec<usize>, Vec<f64>)> = Vec::with_capacity(basis.dim);
    for parity in [1i8, -1] {
        let chain = basis.parity_chain(parity);
        let block = Mat::from_fn(chain.len(), chain.len(), |i, j| h.get(chain[i], chain[j]));
        let (values, vectors) = dense_eigen(&block)?;
        for (k, &e) in values.iter().enumerate() {
            pieces.push((e, parity, chain.clone(), vectors.col_as_slice(k).to_vec()));
        }
    }
    // stable sort keeps the even sector first inside exact ties
    pieces.sort_by(|a, b| a.0.total_cmp(&b.0));
    let d = basis.dim;
    let mut eigenvectors = Mat::<f64>::zeros(d, d);
    let mut eigenvalues = Vec::with_capacity(d);
    let mut parity_labels = Vec::with_capacity(d);
    for (n, (e, parity, chain, v)) in pieces.into_iter().enumerate() {
        let col = eigenvectors.col_as_slice_mut(n);
        for (&i, &x) in chain.iter().zip(&v) {
            col[i] = x;
        }
        eigenvalues.push(e);
        parity_labels.push(parity);
    }
    Ok(SpectralData { params: *params, eigenvalues, eigenvectors, parity_labels })
}

/// Decomposition of an arbitrary real-symmetric matrix in the basis of
/// `params`, with parity labels from the sign of `⟨φ_n|Π|φ_n⟩`.
///
/// Exactly degenerate opposite-parity pairs may come out mixed; use
/// [`eigendecompose`] for the Hamiltonian itself.
pub fn eigendecompose_matrix(h: &OperatorMatrix, params: &ModelParams) -> Result<SpectralData> {
    check_symmetric(h)?;
    let basis = params.basis();
    if h.dim() != basis.dim {
        return Err(Error::DimensionMismatch { expected: basis.dim, found: h.dim() });
    }
    let (eigenvalues, eigenvectors) = dense_eigen(&h.entries)?;
    let parity_labels = (0..basis.dim)
        .map(|n| {
            let v = eigenvectors.col_as_slice(n);
            let p: f64 = v.iter().enumerate().map(|(i, x)| f64::from(basis.parity(i)) * x * x).sum();
            if p >= 0.0 {
                1
            } else {
                -1
            }
        })
        .collect();
    Ok(SpectralData { params: *params, eigenvalues, eigenvectors, parity_labels })
}

pub fn ground_state(sd: &SpectralData) -> (QuantumState, f64) {
    let amps: Vec<Complex64> = sd.vector(0).iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let state = QuantumState { amplitudes: amps, norm_tolerance: 1e-10, truncation_deficit: 0.0 };
    (state, sd.eigenvalues[0])
}

/// `(|φ_0⟩ ± |φ_1⟩)/√2` with the relative sign chosen so that `⟨x⟩` has the
/// sign of the branch.
pub fn ground_doublet(sd: &SpectralData, branch: Branch) -> Result<QuantumState> {
    if sd.dim() < 2 {
        return Err(Error::param("cutoff", "need at least two eigenstates"));
    }
    let x = assemble_operator(OperatorKind::X, &sd.params).to_sparse();
    let v0 = sd.vector(0);
    let v1 = sd.vector(1);
    let mix: Vec<Complex64> = v0.iter().zip(v1).map(|(&a, &b)| Complex64::new(a + b, 0.0) / 2f64.sqrt()).collect();
    let sign = if x.expectation(&mix) >= 0.0 { branch.sign() } else { -branch.sign() };
    let amps = v0.iter().zip(v1).map(|(&a, &b)| Complex64::new((a + sign * b) / 2f64.sqrt(), 0.0)).collect();
    QuantumState::new(amps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubletPair {
    pub lower: f64,
    pub upper: f64,
    pub gap: f64,
    pub parities: (i8, i8),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapStats {
    pub count: usize,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyReport {
    /// `−η ω₀ / 2`.
    pub separatrix_energy: f64,
    pub gap_threshold: f64,
    /// Consecutive opposite-parity pairs with mean energy below the separatrix.
    pub pairs_below: Vec<DoubletPair>,
    /// Spacing of consecutive levels above the separatrix.
    pub gaps_above: Option<GapStats>,
}

impl DegeneracyReport {
    /// True when every pair below the separatrix is split by less than the threshold.
    pub fn all_pairs_degenerate(&self) -> bool {
        self.pairs_below.iter().all(|p| p.gap < self.gap_threshold)
    }
}

/// Pairs levels below `E_c = −ηω₀/2`; `gap_threshold` is in units of ω₀.
pub fn degeneracy_map(sd: &SpectralData, gap_threshold: f64) -> DegeneracyReport {
    let ec = -sd.params.spin_frequency() / 2.0;
    let e = &sd.eigenvalues;
    let mut pairs_below = Vec::new();
    let mut n = 0;
    while n + 1 < e.len() && (e[n] + e[n + 1]) / 2.0 < ec {
        if sd.parity_labels[n] != sd.parity_labels[n + 1] {
            pairs_below.push(DoubletPair {
                lower: e[n],
                upper: e[n + 1],
                gap: e[n + 1] - e[n],
                parities: (sd.parity_labels[n], sd.parity_labels[n + 1]),
            });
            n += 2;
        } else {
            n += 1;
        }
    }
    let gaps: Vec<f64> = e.windows(2).filter(|w| w[0] > ec).map(|w| w[1] - w[0]).collect();
    let gaps_above = (!gaps.is_empty()).then(|| GapStats {
        count: gaps.len(),
        min: gaps.iter().copied().fold(f64::INFINITY, f64::min),
        mean: gaps.iter().sum::<f64>() / gaps.len() as f64,
        max: gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    });
    DegeneracyReport { separatrix_energy: ec, gap_threshold: gap_threshold * sd.params.omega0, pairs_below, gaps_above }
}

/// Eigenpairs polished to double-double precision, one parity chain at a time.
#[derive(Debug, Clone)]
pub struct DdSpectrum {
    pub params: ModelParams,
    pub levels: Vec<DdLevel>,
}

#[derive(Debug, Clone)]
pub struct DdLevel {
    pub energy: Dd,
    pub parity: i8,
    /// Components along [`crate::hilbert::Basis::parity_chain`] of `parity`.
    pub chain_vector: Vec<Dd>,
}

/// `(T − λ) w = b` for symmetric tridiagonal `T` by LU with partial pivoting.
fn tridiagonal_solve(diag: &[Dd], off: &[Dd], lambda: Dd, b: &mut [Dd]) {
    let n = diag.len();
    if n == 1 {
        let mut d = diag[0] - lambda;
        if d.is_zero() {
            d = Dd::from(1e-40);
        }
        b[0] = b[0] / d;
        return;
    }
    let mut d: Vec<Dd> = diag.iter().map(|&x| x - lambda).collect();
    let mut dl = off.to_vec();
    let mut du = off.to_vec();
    let mut du2 = vec![Dd::ZERO; n.saturating_sub(2)];
    let mut swap = vec![false; n - 1];
    let scale = diag.iter().chain(off).map(|x| x.abs().to_f64()).fold(0.0, f64::max).max(1.0);
    let tiny = Dd::from(scale * 1e-40);

    for i in 0..n - 1 {
        if d[i].abs() >= dl[i].abs() {
            if !d[i].is_zero() {
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            }
        } else {
            let fact = d[i] / dl[i];
            d[i] = dl[i];
            dl[i] = fact;
            let temp = du[i];
            du[i] = d[i + 1];
            d[i + 1] = temp - fact * d[i + 1];
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] = -(fact * du[i + 1]);
            }
            swap[i] = true;
        }
    }
    for x in &mut d {
        if x.abs() < tiny {
            *x = tiny;
        }
    }
    for i in 0..n - 1 {
        if swap[i] {
            let temp = b[i];
            b[i] = b[i + 1];
            b[i + 1] = temp - dl[i] * b[i];
        } else {
            b[i + 1] -= dl[i] * b[i];
        }
    }
    b[n - 1] = b[n - 1] / d[n - 1];
    b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
    for i in (0..n.saturating_sub(2)).rev() {
        b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / d[i];
    }
}

fn tridiagonal_apply(diag: &[Dd], off: &[Dd], v: &[Dd]) -> Vec<Dd> {
    let n = diag.len();
    (0..n)
        .map(|i| {
            let mut acc = diag[i] * v[i];
            if i > 0 {
                acc += off[i - 1] * v[i - 1];
            }
            if i + 1 < n {
                acc += off[i] * v[i + 1];
            }
            acc
        })
        .collect()
}

fn dot(a: &[Dd], b: &[Dd]) -> Dd {
    let mut acc = Dd::ZERO;
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

/// Rayleigh-quotient iteration in double-double starting from a double
/// precision eigenvector.
fn refine_level(diag: &[Dd], off: &[Dd], start: &[f64]) -> (Dd, Vec<Dd>) {
    let mut v: Vec<Dd> = start.iter().map(|&x| Dd::from(x)).collect();
    let norm = dot(&v, &v).sqrt();
    for x in &mut v {
        *x = *x / norm;
    }
    let scale = diag.iter().chain(off).map(|x| x.abs().to_f64()).fold(0.0, f64::max).max(1.0);
    let mut lambda = dot(&v, &tridiagonal_apply(diag, off, &v));
    if off.iter().all(|x| x.is_zero()) {
        return (lambda, v);
    }
    for _ in 0..4 {
        let tv = tridiagonal_apply(diag, off, &v);
        let resid = tv.iter().zip(&v).map(|(a, b)| (*a - lambda * *b).abs().to_f64()).fold(0.0, f64::max);
        if resid < 1e-30 * scale {
            break;
        }
        let mut w = v.clone();
        tridiagonal_solve(diag, off, lambda, &mut w);
        let mut norm = dot(&w, &w).sqrt();
        if dot(&w, &v).to_f64() < 0.0 {
            norm = -norm;
        }
        for (x, y) in v.iter_mut().zip(&w) {
            *x = *y / norm;
        }
        lambda = dot(&v, &tridiagonal_apply(diag, off, &v));
    }
    (lambda, v)
}

/// Polishes every eigenpair of `sd` to double-double accuracy.
pub fn refine_dd(sd: &SpectralData) -> DdSpectrum {
    use rayon::prelude::*;
    let basis = sd.params.basis();
    let chains = [
        (1i8, basis.parity_chain(1), hamiltonian_chain_dd(&sd.params, 1)),
        (-1i8, basis.parity_chain(-1), hamiltonian_chain_dd(&sd.params, -1)),
    ];
    let levels = (0..sd.dim())
        .into_par_iter()
        .map(|n| {
            let parity = sd.parity_labels[n];
            let (_, chain, (diag, off)) = chains.iter().find(|c| c.0 == parity).expect("parity is ±1");
            let v = sd.vector(n);
            let start: Vec<f64> = chain.iter().map(|&i| v[i]).collect();
            let (energy, chain_vector) = refine_level(diag, off, &start);
            DdLevel { energy, parity, chain_vector }
        })
        .collect();
    DdSpectrum { params: sd.params, levels }
}

const MAGIC: &[u8; 8] = b"RABISPEC";
/// Version of the on-disk layout below.
pub const CACHE_FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 8 * 3 + 8 + 8;

/// Directory of decompositions keyed by a hash of the model parameters.
#[derive(Debug, Clone)]
pub struct SpectrumCache {
    dir: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct CacheEntry {
    pub path: PathBuf,
    pub params: Option<ModelParams>,
    pub format_version: Option<u32>,
    pub size: u64,
    /// Seconds since the Unix epoch.
    pub modified: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CacheStats {
    pub dir: PathBuf,
    pub entries: usize,
    pub total_bytes: u64,
}

pub const CACHE_ENV: &str = "RABI_DPT_CACHE";

impl SpectrumCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        SpectrumCache { dir: dir.into() }
    }

    /// Cache at `$RABI_DPT_CACHE`, if set.
    pub fn from_env() -> Option<Self> {
        std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(Self::new)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(params: &ModelParams) -> String {
        let mut h = Sha256::new();
        h.update(params.eta.to_le_bytes());
        h.update(params.omega0.to_le_bytes());
        h.update(params.g.to_le_bytes());
        h.update((params.cutoff as u64).to_le_bytes());
        h.update(BASIS_VERSION.to_le_bytes());
        h.finalize()[..16].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn path_for(&self, params: &ModelParams) -> PathBuf {
        self.dir.join(format!("spec_{}.bin", Self::key(params)))
    }

    fn io_err(path: &Path, source: io::Error) -> Error {
        Error::Io { path: path.to_path_buf(), source }
    }

    pub fn store(&self, sd: &SpectralData) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir).map_err(|e| Self::io_err(&self.dir, e))?;
        let path = self.path_for(&sd.params);
        let d = sd.dim();
        let mut buf = Vec::with_capacity(HEADER_LEN + 8 * d * (d + 1));
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&CACHE_FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&BASIS_VERSION.to_le_bytes());
        buf.extend_from_slice(&sd.params.eta.to_le_bytes());
        buf.extend_from_slice(&sd.params.omega0.to_le_bytes());
        buf.extend_from_slice(&sd.params.g.to_le_bytes());
        buf.extend_from_slice(&(sd.params.cutoff as u64).to_le_bytes());
        buf.extend_from_slice(&(d as u64).to_le_bytes());
        for e in &sd.eigenvalues {
            buf.extend_from_slice(&e.to_le_bytes());
        }
        for j in 0..d {
            for x in sd.vector(j) {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| Self::io_err(&self.dir, e))?;
        tmp.write_all(&buf).map_err(|e| Self::io_err(tmp.path(), e))?;
        tmp.persist(&path).map_err(|e| Self::io_err(&path, e.error))?;
        Ok(path)
    }

    pub fn lookup(&self, params: &ModelParams) -> Option<SpectralData> {
        let path = self.path_for(params);
        let mut bytes = Vec::new();
        fs::File::open(&path).ok()?.read_to_end(&mut bytes).ok()?;
        match decode(&bytes, params) {
            Ok(sd) => Some(sd),
            Err(reason) => {
                log::warn!("cache miss for {}: {reason}", path.display());
                None
            }
        }
    }

    fn files(&self) -> Result<Vec<PathBuf>> {
        let rd = match fs::read_dir(&self.dir) {
            Ok(rd) => rd,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Self::io_err(&self.dir, e)),
        };
        let mut out = Vec::new();
        for entry in rd {
            let entry = entry.map_err(|e| Self::io_err(&self.dir, e))?;
            let name = entry.file_name();
            let name = name.to_string_lossy();
            if name.starts_with("spec_") && name.ends_with(".bin") {
                out.push(entry.path());
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn list(&self) -> Result<Vec<CacheEntry>> {
        self.files()?
            .into_iter()
            .map(|path| {
                let meta = fs::metadata(&path).map_err(|e| Self::io_err(&path, e))?;
                let mut header = [0u8; HEADER_LEN];
                let parsed = fs::File::open(&path)
                    .and_then(|mut f| f.read_exact(&mut header))
                    .ok()
                    .and_then(|_| parse_header(&header));
                let modified = meta
                    .modified()
                    .ok()
                    .and_then(|t| t.duration_since(SystemTime::UNIX_EPOCH).ok())
                    .map_or(0, |d| d.as_secs());
                Ok(CacheEntry {
                    params: parsed.map(|h| h.params),
                    format_version: parsed.map(|h| h.format_version),
                    size: meta.len(),
                    modified,
                    path,
                })
            })
            .collect()
    }

    /// Removes entries last modified longer ago than `older_than` (all if `None`).
    pub fn purge(&self, older_than: Option<Duration>) -> Result<usize> {
        let now = SystemTime::now();
        let mut removed = 0;
        for path in self.files()? {
            if let Some(age) = older_than {
                let modified = fs::metadata(&path).and_then(|m| m.modified()).map_err(|e| Self::io_err(&path, e))?;
                if now.duration_since(modified).unwrap_or_default() < age {
                    continue;
                }
            }
            fs::remove_file(&path).map_err(|e| Self::io_err(&path, e))?;
            removed += 1;
        }
        Ok(removed)
    }

    pub fn stat(&self) -> Result<CacheStats> {
        let entries = self.list()?;
        Ok(CacheStats {
            dir: self.dir.clone(),
            entries: entries.len(),
            total_bytes: entries.iter().map(|e| e.size).sum(),
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct Header {
    format_version: u32,
    basis_version: u32,
    params: ModelParams,
    dim: usize,
}

fn le_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes(b.try_into().expect("4 bytes"))
}

fn le_u64(b: &[u8]) -> u64 {
    u64::from_le_bytes(b.try_into().expect("8 bytes"))
}

fn le_f64(b: &[u8]) -> f64 {
    f64::from_le_bytes(b.try_into().expect("8 bytes"))
}

fn parse_header(b: &[u8]) -> Option<Header> {
    if b.len() < HEADER_LEN || &b[..8] != MAGIC {
        return None;
    }
    Some(Header {
        format_version: le_u32(&b[8..12]),
        basis_version: le_u32(&b[12..16]),
        params: ModelParams {
            eta: le_f64(&b[16..24]),
            omega0: le_f64(&b[24..32]),
            g: le_f64(&b[32..40]),
            cutoff: le_u64(&b[40..48]) as usize,
        },
        dim: le_u64(&b[48..56]) as usize,
    })
}

fn decode(bytes: &[u8], params: &ModelParams) -> std::result::Result<SpectralData, String> {
    let h = parse_header(bytes).ok_or("bad magic or truncated header")?;
    if h.format_version != CACHE_FORMAT_VERSION {
        return Err(format!("format version {} (expected {CACHE_FORMAT_VERSION})", h.format_version));
    }
    if h.basis_version != BASIS_VERSION {
        return Err(format!("basis version {} (expected {BASIS_VERSION})", h.basis_version));
    }
    let same = h.params.eta.to_bits() == params.eta.to_bits()
        && h.params.omega0.to_bits() == params.omega0.to_bits()
        && h.params.g.to_bits() == params.g.to_bits()
        && h.params.cutoff == params.cutoff;
    if !same {
        return Err("parameters differ from key".into());
    }
    let d = h.dim;
    if d != params.basis().dim || bytes.len() != HEADER_LEN + 8 * d * (d + 1) {
        return Err("payload length mismatch".into());
    }
    let body = &bytes[HEADER_LEN..];
    let eigenvalues: Vec<f64> = body[..8 * d].chunks_exact(8).map(le_f64).collect();
    let vecs = &body[8 * d..];
    let eigenvectors = Mat::from_fn(d, d, |i, j| le_f64(&vecs[8 * (j * d + i)..8 * (j * d + i + 1)]));
    let basis = params.basis();
    let parity_labels = (0..d)
        .map(|n| {
            let p: f64 = (0..d).map(|i| f64::from(basis.parity(i)) * eigenvectors[(i, n)].powi(2)).sum();
            if p >= 0.0 {
                1
            } else {
                -1
            }
        })
        .collect();
    if eigenvalues.iter().any(|e| !e.is_finite()) {
        return Err("non-finite eigenvalue".into());
    }
    Ok(SpectralData { params: *params, eigenvalues, eigenvectors, parity_labels })
}

/// Cached decomposition when available, otherwise computed and stored.
pub fn eigendecompose_cached(params: &ModelParams, cache: Option<&SpectrumCache>) -> Result<SpectralData> {
    if let Some(c) = cache {
        if let Some(sd) = c.lookup(params) {
            log::debug!("cache hit {}", c.path_for(params).display());
            return Ok(sd);
        }
    }
    let sd = eigendecompose(params)?;
    if let Some(c) = cache {
        if let Err(e) = c.store(&sd) {
            log::warn!("could not store decomposition: {e}");
        }
    }
    Ok(sd)
}
