//! Lindblad models, their Liouvillian superoperators, spectra, stationary states,
//! time evolution and the Liouvillian PT test.
//!
//! The master equation is
//! `d rho/dt = -i[H, rho] + sum_i gamma_i (2 L_i rho L_i† - L_i†L_i rho - rho L_i†L_i)`,
//! vectorized by column stacking.

use std::collections::hash_map::Entry;
use std::collections::HashMap;

use faer::prelude::*;
use faer::Mat;

use crate::error::{Error, Result};
use crate::linalg::{self, c64, CsrMatrix, ONE, ZERO};
use crate::spin::{Basis, Operator, Space};

/// Superoperator dimension (d²) above which dense matrices are refused.
pub const DEFAULT_DENSE_CAP: usize = 4096;

/// Largest d² for which evolution uses a dense matrix exponential.
pub const DEFAULT_EXPM_THRESHOLD: usize = 1024;

/// Tolerance on the Hamiltonian's hermiticity (max-norm).
pub const HERMITICITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Dissipator {
    pub rate: f64,
    pub op: Operator,
}

impl Dissipator {
    pub fn new(rate: f64, op: Operator) -> Self {
        Self { rate, op }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    label: String,
    space: Space,
    hamiltonian: Operator,
    dissipators: Vec<Dissipator>,
    parity: Option<Operator>,
}

impl ModelSpec {
    pub fn new(
        label: impl Into<String>,
        hamiltonian: Operator,
        dissipators: Vec<Dissipator>,
        parity: Option<Operator>,
    ) -> Result<Self> {
        let space = hamiltonian.space();
        let defect = hamiltonian.hermiticity_defect();
        if defect > HERMITICITY_TOL {
            return Err(Error::NotHermitian(defect));
        }
        for d in &dissipators {
            if d.op.space() != space {
                return Err(Error::DimensionMismatch { expected: space.dim(), found: d.op.dim() });
            }
            if !(d.rate.is_finite() && d.rate >= 0.0) {
                return Err(Error::InvalidParameter {
                    name: "rate",
                    reason: format!("dissipation rate must be finite and non-negative, got {}", d.rate),
                });
            }
        }
        if let Some(p) = &parity {
            if p.space() != space {
                return Err(Error::DimensionMismatch { expected: space.dim(), found: p.dim() });
            }
        }
        Ok(Self { label: label.into(), space, hamiltonian, dissipators, parity })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.hamiltonian
    }

    pub fn dissipators(&self) -> &[Dissipator] {
        &self.dissipators
    }

    pub fn parity(&self) -> Option<&Operator> {
        self.parity.as_ref()
    }

    /// Right-hand side of the master equation evaluated by direct matrix products.
    pub fn rhs(&self, rho: &Mat<c64>) -> Mat<c64> {
        let h = self.hamiltonian.matrix();
        let mut out = linalg::scale(&linalg::commutator(h, rho), c64::new(0.0, -1.0));
        for d in &self.dissipators {
            let l = d.op.matrix();
            let ld = linalg::dagger(l);
            let ldl = &ld * l;
            let jump = &(l * rho) * &ld;
            let anti = linalg::add(&(&ldl * rho), &(rho * &ldl));
            let term = linalg::sub(&linalg::scale(&jump, c64::new(2.0, 0.0)), &anti);
            out = linalg::add(&out, &linalg::scale(&term, c64::new(d.rate, 0.0)));
        }
        out
    }
}

/// The Liouvillian superoperator in sparse form.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    model: ModelSpec,
    matrix: CsrMatrix,
}

pub fn build_liouvillian(model: &ModelSpec) -> Liouvillian {
    Liouvillian::new(model.clone())
}

impl Liouvillian {
    pub fn new(model: ModelSpec) -> Self {
        let d = model.dim();
        let id = linalg::identity(d);
        let h = model.hamiltonian().matrix();
        let mut t = Vec::new();
        // -i (I (x) H - H^T (x) I)
        linalg::push_kron_triplets(&mut t, c64::new(0.0, -1.0), &id, h);
        linalg::push_kron_triplets(&mut t, c64::new(0.0, 1.0), &linalg::transpose(h), &id);
        for diss in model.dissipators() {
            if diss.rate == 0.0 {
                continue;
            }
            let g = c64::new(diss.rate, 0.0);
            let l = diss.op.matrix();
            let ldl = &linalg::dagger(l) * l;
            linalg::push_kron_triplets(&mut t, g * 2.0, &linalg::conjugate(l), l);
            linalg::push_kron_triplets(&mut t, -g, &id, &ldl);
            linalg::push_kron_triplets(&mut t, -g, &linalg::transpose(&ldl), &id);
        }
        let matrix = CsrMatrix::from_triplets(d * d, t);
        Self { model, matrix }
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Hilbert-space dimension d.
    pub fn hilbert_dim(&self) -> usize {
        self.model.dim()
    }

    /// Superoperator dimension d².
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn dense(&self) -> Result<Mat<c64>> {
        self.dense_with_cap(DEFAULT_DENSE_CAP)
    }

    pub fn dense_with_cap(&self, cap: usize) -> Result<Mat<c64>> {
        if self.dim() > cap {
            return Err(Error::CapExceeded { dim: self.dim(), cap });
        }
        Ok(self.matrix.to_dense())
    }

    /// `devec(L vec(rho))`.
    pub fn apply(&self, rho: &Mat<c64>) -> Mat<c64> {
        let d = self.hilbert_dim();
        linalg::devectorize(&self.matrix.mul_vec(&linalg::vectorize(rho)), d)
    }

    /// `|| vec(I)† L ||_2`, which vanishes for a trace-preserving generator.
    pub fn trace_preservation_defect(&self) -> f64 {
        let d = self.hilbert_dim();
        let mut acc = vec![ZERO; self.dim()];
        for i in 0..d {
            for (c, v) in self.matrix.row(i + i * d) {
                acc[c] += v;
            }
        }
        acc.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Eigenvalue sort key: |Re| ascending, then Im descending, then original index.
/// Keys are quantized so that numerically equal values compare equal.
fn sort_key(v: c64) -> (i64, i64) {
    const Q: f64 = 1e-9;
    ((v.re.abs() / Q).round() as i64, -(v.im / Q).round() as i64)
}

pub(crate) fn sorted_order(values: &[c64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by_key(|&i| (sort_key(values[i]), i));
    idx
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumOptions {
    pub cap: usize,
    pub eigenmodes: bool,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self { cap: DEFAULT_DENSE_CAP, eigenmodes: false }
    }
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    eigenvalues: Vec<c64>,
    eigenmodes: Option<Vec<Mat<c64>>>,
    gap: f64,
    zero_mode_index: usize,
}

impl Spectrum {
    /// Sorts an eigenvalue list into a spectrum without eigenmodes.
    pub fn from_eigenvalues(values: Vec<c64>) -> Self {
        let order = sorted_order(&values);
        let eigenvalues: Vec<c64> = order.iter().map(|&i| values[i]).collect();
        Self::assemble(eigenvalues, None)
    }

    fn assemble(eigenvalues: Vec<c64>, eigenmodes: Option<Vec<Mat<c64>>>) -> Self {
        let gap = eigenvalues.get(1).map_or(0.0, |v| v.re.abs());
        Self { eigenvalues, eigenmodes, gap, zero_mode_index: 0 }
    }

    pub fn eigenvalues(&self) -> &[c64] {
        &self.eigenvalues
    }

    pub fn eigenmodes(&self) -> Option<&[Mat<c64>]> {
        self.eigenmodes.as_deref()
    }

    /// Liouvillian gap |Re λ₁|.
    pub fn gap(&self) -> f64 {
        self.gap
    }

    pub fn zero_mode_index(&self) -> usize {
        self.zero_mode_index
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn max_real_part(&self) -> f64 {
        self.eigenvalues.iter().map(|v| v.re).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Whether the multiset equals its complex conjugate within `tol`.
    pub fn is_conjugation_closed(&self, tol: f64) -> bool {
        let conj: Vec<c64> = self.eigenvalues.iter().map(|v| v.conj()).collect();
        multiset_distance(&self.eigenvalues, &conj).is_some_and(|e| e <= tol)
    }
}

/// Max pairing error of a greedy nearest-neighbour bijection between two multisets,
/// or `None` if their sizes differ.
pub fn multiset_distance(a: &[c64], b: &[c64]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(a.len() * b.len().min(64));
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            pairs.push(((x - y).norm(), i, j));
        }
    }
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)).then(p.2.cmp(&q.2)));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    let mut matched = 0;
    for (dist, i, j) in pairs {
        if used_a[i] || used_b[j] {
            continue;
        }
        used_a[i] = true;
        used_b[j] = true;
        worst = worst.max(dist);
        matched += 1;
        if matched == a.len() {
            break;
        }
    }
    Some(worst)
}

pub fn spectrum(l: &Liouvillian) -> Result<Spectrum> {
    spectrum_with(l, SpectrumOptions::default())
}

pub fn spectrum_with(l: &Liouvillian, opts: SpectrumOptions) -> Result<Spectrum> {
    let dense = l.dense_with_cap(opts.cap)?;
    let d = l.hilbert_dim();
    if opts.eigenmodes {
        let (values, vectors) = linalg::eigen(&dense)?;
        let order = sorted_order(&values);
        let eigenvalues = order.iter().map(|&i| values[i]).collect();
        let modes = order
            .iter()
            .map(|&i| {
                let v: Vec<c64> = (0..dense.nrows()).map(|r| vectors[(r, i)]).collect();
                let m = linalg::devectorize(&v, d);
                let n = linalg::frobenius(&m);
                linalg::scale(&m, c64::new(1.0 / n, 0.0))
            })
            .collect();
        Ok(Spectrum::assemble(eigenvalues, Some(modes)))
    } else {
        Ok(Spectrum::from_eigenvalues(linalg::eigenvalues(&dense)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    space: Space,
    basis: Basis,
    matrix: Mat<c64>,
}

impl DensityMatrix {
    /// Validates hermiticity (1e-10), unit trace (1e-10) and positivity (-1e-8).
    pub fn new(space: Space, matrix: Mat<c64>) -> Result<Self> {
        Self::with_basis(space, Basis::Z, matrix)
    }

    pub fn with_basis(space: Space, basis: Basis, matrix: Mat<c64>) -> Result<Self> {
        if matrix.nrows() != space.dim() || matrix.ncols() != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), found: matrix.nrows() });
        }
        let herm = linalg::hermiticity_defect(&matrix);
        if herm > 1e-10 {
            return Err(Error::InvalidDensityMatrix(format!("not hermitian (defect {herm:.3e})")));
        }
        let tr = linalg::trace(&matrix);
        if (tr - ONE).norm() > 1e-10 {
            return Err(Error::InvalidDensityMatrix(format!("trace {tr} differs from 1")));
        }
        let min_eig = linalg::hermitian_eigenvalues(&matrix)?.into_iter().fold(f64::INFINITY, f64::min);
        if min_eig < -1e-8 {
            return Err(Error::InvalidDensityMatrix(format!("eigenvalue {min_eig:.3e} is negative")));
        }
        Ok(Self { space, basis, matrix })
    }

    pub(crate) fn from_parts(space: Space, basis: Basis, matrix: Mat<c64>) -> Self {
        Self { space, basis, matrix }
    }

    /// |psi><psi| for a normalized state vector.
    pub fn pure(space: Space, psi: &[c64]) -> Result<Self> {
        if psi.len() != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), found: psi.len() });
        }
        let norm: f64 = psi.iter().map(|v| v.norm_sqr()).sum::<f64>();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidDensityMatrix(format!("state norm² {norm} differs from 1")));
        }
        let d = psi.len();
        Ok(Self { space, basis: Basis::Z, matrix: Mat::from_fn(d, d, |i, j| psi[i] * psi[j].conj()) })
    }

    /// The basis projector |i><i|.
    pub fn basis_state(space: Space, index: usize) -> Result<Self> {
        let d = space.dim();
        if index >= d {
            return Err(Error::DimensionMismatch { expected: d, found: index });
        }
        let mut psi = vec![ZERO; d];
        psi[index] = ONE;
        Self::pure(space, &psi)
    }

    pub fn maximally_mixed(space: Space) -> Self {
        let d = space.dim();
        Self {
            space,
            basis: Basis::Z,
            matrix: linalg::scale(&linalg::identity(d), c64::new(1.0 / d as f64, 0.0)),
        }
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn matrix(&self) -> &Mat<c64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Mat<c64> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> c64 {
        linalg::trace(&self.matrix)
    }

    /// Half the trace norm of the difference.
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        let diff = linalg::sub(&self.matrix, &other.matrix);
        // Symmetrize away round-off so the Hermitian solver sees an exact Hermitian input.
        let diff = linalg::scale(&linalg::add(&diff, &linalg::dagger(&diff)), c64::new(0.5, 0.0));
        Ok(0.5 * linalg::hermitian_eigenvalues(&diff)?.iter().map(|v| v.abs()).sum::<f64>())
    }

    pub fn frobenius_distance(&self, other: &DensityMatrix) -> f64 {
        linalg::frobenius(&linalg::sub(&self.matrix, &other.matrix))
    }
}

/// Tr[rho obs].
pub fn expectation(rho: &DensityMatrix, obs: &Operator) -> Result<c64> {
    if rho.space() != obs.space() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), found: obs.dim() });
    }
    Ok(trace_product(rho.matrix(), obs.matrix()))
}

pub(crate) fn trace_product(a: &Mat<c64>, b: &Mat<c64>) -> c64 {
    let mut acc = ZERO;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UniquenessCheck {
    /// Inverse power iteration with the factors of the trace-bordered system.
    /// Because the zero eigenvalue of a Liouvillian is semisimple, replacing one
    /// population equation with the trace row yields a nonsingular matrix exactly
    /// when the kernel is one-dimensional. Costs a few triangular solves.
    Bordered,
    /// Full eigenvalue computation; requires |Re λ₁| > 1e-8.
    Spectral,
    /// Rank test from the pivots of a fully pivoted LU factorization. The zero
    /// eigenvalue of a Liouvillian is semisimple, so a one-dimensional kernel
    /// is equivalent to a non-degenerate zero mode.
    Rank,
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryOptions {
    pub cap: usize,
    pub uniqueness: UniquenessCheck,
    pub residual_tol: f64,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        Self { cap: DEFAULT_DENSE_CAP, uniqueness: UniquenessCheck::Bordered, residual_tol: 1e-8 }
    }
}

pub fn stationary_state(l: &Liouvillian) -> Result<DensityMatrix> {
    stationary_state_with(l, StationaryOptions::default())
}

pub fn stationary_state_with(l: &Liouvillian, opts: StationaryOptions) -> Result<DensityMatrix> {
    let d = l.hilbert_dim();
    let mut dense = l.dense_with_cap(opts.cap)?;
    match opts.uniqueness {
        UniquenessCheck::Spectral => {
            let spec = Spectrum::from_eigenvalues(linalg::eigenvalues(&dense)?);
            if spec.gap() <= 1e-8 {
                return Err(Error::DegenerateSteadyState { gap: spec.gap() });
            }
        }
        UniquenessCheck::Rank => {
            let lu = dense.full_piv_lu();
            let u = lu.U();
            let mut piv: Vec<f64> = (0..u.nrows()).map(|i| u[(i, i)].norm()).collect();
            piv.sort_by(f64::total_cmp);
            let scale = piv.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
            if piv.len() > 1 && piv[1] <= 1e-10 * scale {
                return Err(Error::DegenerateSteadyState { gap: piv[1] / scale });
            }
        }
        UniquenessCheck::Bordered | UniquenessCheck::Skip => {}
    }
    // Replace the (0,0) population equation, which is redundant by trace
    // preservation, with the normalization Tr rho = 1.
    let n = d * d;
    for c in 0..n {
        dense[(0, c)] = ZERO;
    }
    for i in 0..d {
        dense[(0, i + i * d)] = ONE;
    }
    let mut rhs = Mat::<c64>::zeros(n, 1);
    rhs[(0, 0)] = ONE;
    let bordered_scale = linalg::frobenius(&dense) / (n as f64).sqrt();
    let lu = dense.partial_piv_lu();
    if opts.uniqueness == UniquenessCheck::Bordered {
        let mu = smallest_eigenvalue_estimate(&lu, n);
        // Written negated so that a NaN estimate also counts as degenerate.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(mu > 1e-10 * bordered_scale.max(1.0)) {
            return Err(Error::DegenerateSteadyState { gap: mu });
        }
    }
    let sol = lu.solve(&rhs);
    let v: Vec<c64> = (0..n).map(|i| sol[(i, 0)]).collect();
    if v.iter().any(|x| !(x.re.is_finite() && x.im.is_finite())) {
        return Err(Error::Numerical("stationary linear solve produced non-finite values".into()));
    }
    let rho = linalg::devectorize(&v, d);
    let rho = linalg::scale(&linalg::add(&rho, &linalg::dagger(&rho)), c64::new(0.5, 0.0));
    let tr = linalg::trace(&rho);
    let rho = linalg::scale(&rho, ONE / tr);
    let residual = l.matrix().mul_vec(&linalg::vectorize(&rho)).iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let scale = l.matrix().frobenius() / (n as f64).sqrt();
    if residual > opts.residual_tol * scale.max(1.0) {
        return Err(Error::Numerical(format!("stationary residual {residual:.3e} exceeds tolerance")));
    }
    let min_eig = linalg::hermitian_eigenvalues(&rho)?.into_iter().fold(f64::INFINITY, f64::min);
    if min_eig < -1e-6 {
        return Err(Error::NegativeSteadyState(min_eig));
    }
    Ok(DensityMatrix::from_parts(l.model().space(), Basis::Z, rho))
}

/// Estimates the smallest eigenvalue magnitude of a factored matrix by inverse
/// power iteration from a fixed pseudo-random start. A singular matrix makes the
/// first solve blow up, so a handful of iterations suffices for detection.
fn smallest_eigenvalue_estimate(lu: &faer::linalg::solvers::PartialPivLu<c64>, n: usize) -> f64 {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x = Mat::<c64>::from_fn(n, 1, |_, _| c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let mut mu = f64::INFINITY;
    for _ in 0..4 {
        let norm = x.norm_l2();
        if !(norm.is_finite() && norm > 0.0) {
            return 0.0;
        }
        x /= faer::Scale(c64::new(norm, 0.0));
        x = lu.solve(&x);
        let growth = x.norm_l2();
        mu = if growth.is_finite() { 1.0 / growth } else { 0.0 };
    }
    mu
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    /// Largest d² propagated with a dense matrix exponential.
    pub expm_threshold: usize,
    pub rtol: f64,
    pub atol: f64,
    /// Maximum tolerated |Tr rho - 1| before aborting.
    pub trace_tol: f64,
    pub min_step: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { expm_threshold: DEFAULT_EXPM_THRESHOLD, rtol: 1e-8, atol: 1e-12, trace_tol: 1e-6, min_step: 1e-14 }
    }
}

fn validate_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidTimeGrid("time grid is empty".into()));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidTimeGrid("non-finite time".into()));
    }
    if times[0] < 0.0 {
        return Err(Error::InvalidTimeGrid("times must be non-negative".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidTimeGrid("times must be strictly increasing".into()));
    }
    Ok(())
}

pub fn evolve(l: &Liouvillian, rho0: &DensityMatrix, times: &[f64]) -> Result<Vec<DensityMatrix>> {
    evolve_with(l, rho0, times, EvolveOptions::default())
}

pub fn evolve_with(
    l: &Liouvillian,
    rho0: &DensityMatrix,
    times: &[f64],
    opts: EvolveOptions,
) -> Result<Vec<DensityMatrix>> {
    let mut out = Vec::with_capacity(times.len());
    let space = rho0.space();
    evolve_visit(l, rho0, times, opts, |_, rho| {
        out.push(DensityMatrix::from_parts(space, Basis::Z, rho.clone()));
    })?;
    Ok(out)
}

/// Expectation values of `observables` at each time; `result[k][t]`.
pub fn evolve_expectations(
    l: &Liouvillian,
    rho0: &DensityMatrix,
    times: &[f64],
    observables: &[Operator],
    opts: EvolveOptions,
) -> Result<Vec<Vec<c64>>> {
    for o in observables {
        if o.space() != rho0.space() {
            return Err(Error::DimensionMismatch { expected: rho0.dim(), found: o.dim() });
        }
    }
    let mut out = vec![Vec::with_capacity(times.len()); observables.len()];
    evolve_visit(l, rho0, times, opts, |_, rho| {
        for (k, o) in observables.iter().enumerate() {
            out[k].push(trace_product(rho, o.matrix()));
        }
    })?;
    Ok(out)
}

/// Propagates `rho0` from t = 0 and calls `visit(k, rho(times[k]))` in order.
pub fn evolve_visit<F>(
    l: &Liouvillian,
    rho0: &DensityMatrix,
    times: &[f64],
    opts: EvolveOptions,
    mut visit: F,
) -> Result<()>
where
    F: FnMut(usize, &Mat<c64>),
{
    validate_times(times)?;
    let d = l.hilbert_dim();
    if rho0.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: rho0.dim() });
    }
    let mut v = linalg::vectorize(rho0.matrix());
    let mut t = 0.0;
    let check_trace = |v: &[c64], t: f64| -> Result<()> {
        let tr: c64 = (0..d).map(|i| v[i + i * d]).sum();
        let drift = (tr - ONE).norm();
        if drift > opts.trace_tol {
            return Err(Error::TraceDrift { t, drift });
        }
        Ok(())
    };
    if l.dim() <= opts.expm_threshold {
        let dense = l.dense_with_cap(usize::MAX)?;
        let mut cache: HashMap<u64, Mat<c64>> = HashMap::new();
        for (k, &tk) in times.iter().enumerate() {
            let dt = tk - t;
            if dt > 0.0 {
                let p = match cache.entry(dt.to_bits()) {
                    Entry::Occupied(e) => e.into_mut(),
                    Entry::Vacant(e) => e.insert(linalg::expm(&linalg::scale(&dense, c64::new(dt, 0.0)))?),
                };
                v = linalg::mat_vec(p, &v);
                t = tk;
            }
            check_trace(&v, t)?;
            visit(k, &linalg::devectorize(&v, d));
        }
    } else {
        let mut rk = DormandPrince::new(l.matrix(), opts);
        for (k, &tk) in times.iter().enumerate() {
            if tk > t {
                rk.advance(&mut v, t, tk)?;
                t = tk;
            }
            check_trace(&v, t)?;
            visit(k, &linalg::devectorize(&v, d));
        }
    }
    Ok(())
}

/// Adaptive Dormand–Prince 5(4) integrator for `dv/dt = M v`.
struct DormandPrince<'a> {
    m: &'a CsrMatrix,
    opts: EvolveOptions,
    h: Option<f64>,
    k: [Vec<c64>; 7],
    tmp: Vec<c64>,
    fsal_valid: bool,
}

impl<'a> DormandPrince<'a> {
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    /// Difference between the fifth- and fourth-order weights.
    const E: [f64; 7] = [
        35.0 / 384.0 - 5179.0 / 57600.0,
        0.0,
        500.0 / 1113.0 - 7571.0 / 16695.0,
        125.0 / 192.0 - 393.0 / 640.0,
        -2187.0 / 6784.0 + 92097.0 / 339200.0,
        11.0 / 84.0 - 187.0 / 2100.0,
        -1.0 / 40.0,
    ];

    fn new(m: &'a CsrMatrix, opts: EvolveOptions) -> Self {
        let n = m.dim();
        Self {
            m,
            opts,
            h: None,
            k: std::array::from_fn(|_| vec![ZERO; n]),
            tmp: vec![ZERO; n],
            fsal_valid: false,
        }
    }

    fn advance(&mut self, v: &mut [c64], mut t: f64, t_end: f64) -> Result<()> {
        let n = v.len();
        if !self.fsal_valid {
            self.m.mul_vec_into(v, &mut self.k[0]);
            self.fsal_valid = true;
        }
        let mut h = match self.h {
            Some(h) => h,
            None => {
                let vn = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
                let fnorm = self.k[0].iter().map(|x| x.norm()).fold(0.0, f64::max);
                if fnorm > 0.0 {
                    0.01 * vn.max(1e-3) / fnorm
                } else {
                    t_end - t
                }
            }
        };
        let mut y_new = vec![ZERO; n];
        while t < t_end {
            let last = t + h >= t_end;
            let step = if last { t_end - t } else { h };
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = v[i];
                    for (j, &a) in Self::A[s].iter().enumerate().take(s) {
                        if a != 0.0 {
                            acc += self.k[j][i] * (step * a);
                        }
                    }
                    self.tmp[i] = acc;
                }
                self.m.mul_vec_into(&self.tmp, &mut self.k[s]);
            }
            // Stage 7 is evaluated at the fifth-order solution, held in tmp.
            y_new.copy_from_slice(&self.tmp);
            let mut err_acc = 0.0;
            for i in 0..n {
                let mut e = ZERO;
                for (j, &w) in Self::E.iter().enumerate() {
                    if w != 0.0 {
                        e += self.k[j][i] * (step * w);
                    }
                }
                let sc = self.opts.atol + self.opts.rtol * v[i].norm().max(y_new[i].norm());
                err_acc += (e.norm() / sc).powi(2);
            }
            let err = (err_acc / n as f64).sqrt();
            if !err.is_finite() {
                return Err(Error::Numerical(format!("integrator produced non-finite error at t = {t}")));
            }
            if err <= 1.0 {
                t = if last { t_end } else { t + step };
                v.copy_from_slice(&y_new);
                self.k.swap(0, 6);
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last {
                    h = step * factor;
                }
            } else {
                h = step * (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                if h < self.opts.min_step * t_end.abs().max(1.0) {
                    return Err(Error::StepUnderflow { t, h });
                }
            }
        }
        self.h = Some(h);
        Ok(())
    }
}

/// Applies H ↦ P conj(H) P⁻¹ and L ↦ P L† P⁻¹, keeping rates.
pub fn pt_transform_model(model: &ModelSpec) -> Result<ModelSpec> {
    let p = model.parity().ok_or(Error::MissingParity)?;
    let pm = p.matrix();
    let pinv = linalg::inverse(pm)?;
    let space = model.space();
    let h = &(pm * &linalg::conjugate(model.hamiltonian().matrix())) * &pinv;
    let dissipators = model
        .dissipators()
        .iter()
        .map(|d| {
            let l = &(pm * &linalg::dagger(d.op.matrix())) * &pinv;
            Dissipator::new(d.rate, Operator::from_parts(space, l))
        })
        .collect();
    // Round-off in the similarity transform can leave ~1e-16 anti-hermitian parts.
    let h = linalg::scale(&linalg::add(&h, &linalg::dagger(&h)), c64::new(0.5, 0.0));
    ModelSpec::new(
        format!("PT({})", model.label()),
        Operator::from_parts(space, h),
        dissipators,
        Some(p.clone()),
    )
}

/// Relative Frobenius distance between the Liouvillians of the model and of its PT image.
pub fn check_liouvillian_pt(model: &ModelSpec) -> Result<f64> {
    let transformed = pt_transform_model(model)?;
    let a = Liouvillian::new(model.clone());
    let b = Liouvillian::new(transformed);
    let norm = a.matrix().frobenius();
    if norm == 0.0 {
        return Ok(0.0);
    }
    Ok(b.matrix().frobenius_distance(a.matrix()) / norm)
}
