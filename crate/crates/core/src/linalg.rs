//! Dense complex matrix helpers and a small CSR container for superoperators.
//!
//! Everything here works on `faer::Mat<c64>`. Superoperators use column-stacking
//! vectorization, `vec(rho)[i + j*d] = rho[(i, j)]`, under which
//! `vec(A X B) = (B^T (x) A) vec(X)`.

use faer::linalg::solvers::DenseSolveCore;
use faer::prelude::*;
use faer::Mat;

use crate::error::{Error, Result};

pub use faer::c64;

pub const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
pub const ONE: c64 = c64 { re: 1.0, im: 0.0 };
pub const I: c64 = c64 { re: 0.0, im: 1.0 };

pub fn identity(n: usize) -> Mat<c64> {
    Mat::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
}

pub fn zeros(n: usize) -> Mat<c64> {
    Mat::from_fn(n, n, |_, _| ZERO)
}

pub fn dagger(a: &Mat<c64>) -> Mat<c64> {
    Mat::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)].conj())
}

pub fn conjugate(a: &Mat<c64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)].conj())
}

pub fn transpose(a: &Mat<c64>) -> Mat<c64> {
    Mat::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)])
}

pub fn scale(a: &Mat<c64>, s: c64) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

pub fn add(a: &Mat<c64>, b: &Mat<c64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] + b[(i, j)])
}

pub fn sub(a: &Mat<c64>, b: &Mat<c64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] - b[(i, j)])
}

pub fn matmul(a: &Mat<c64>, b: &Mat<c64>) -> Mat<c64> {
    a * b
}

pub fn commutator(a: &Mat<c64>, b: &Mat<c64>) -> Mat<c64> {
    sub(&(a * b), &(b * a))
}

pub fn trace(a: &Mat<c64>) -> c64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

/// Frobenius norm.
pub fn frobenius(a: &Mat<c64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc += a[(i, j)].norm_sqr();
        }
    }
    acc.sqrt()
}

pub fn max_abs(a: &Mat<c64>) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn max_abs_diff(a: &Mat<c64>, b: &Mat<c64>) -> f64 {
    max_abs(&sub(a, b))
}

pub fn hermiticity_defect(a: &Mat<c64>) -> f64 {
    max_abs_diff(a, &dagger(a))
}

pub fn matrix_power(a: &Mat<c64>, n: u32) -> Mat<c64> {
    let mut out = identity(a.nrows());
    for _ in 0..n {
        out = &out * a;
    }
    out
}

/// Kronecker product with `a` as the left (slow) factor.
pub fn kron(a: &Mat<c64>, b: &Mat<c64>) -> Mat<c64> {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    Mat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

pub fn vectorize(a: &Mat<c64>) -> Vec<c64> {
    let d = a.nrows();
    let mut v = Vec::with_capacity(d * a.ncols());
    for j in 0..a.ncols() {
        for i in 0..d {
            v.push(a[(i, j)]);
        }
    }
    v
}

pub fn devectorize(v: &[c64], d: usize) -> Mat<c64> {
    Mat::from_fn(d, d, |i, j| v[i + j * d])
}

pub fn mat_vec(a: &Mat<c64>, v: &[c64]) -> Vec<c64> {
    let mut out = vec![ZERO; a.nrows()];
    for j in 0..a.ncols() {
        let vj = v[j];
        if vj == ZERO {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o += a[(i, j)] * vj;
        }
    }
    out
}

pub fn inverse(a: &Mat<c64>) -> Result<Mat<c64>> {
    let lu = a.full_piv_lu();
    let u = lu.U();
    let n = u.nrows();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..n {
        let p = u[(i, i)].norm();
        lo = lo.min(p);
        hi = hi.max(p);
    }
    if n > 0 && (hi == 0.0 || lo <= 1e-14 * hi) {
        return Err(Error::Numerical("matrix is numerically singular".into()));
    }
    Ok(lu.inverse())
}

/// Hermitian eigendecomposition; eigenvalues ascending.
pub fn hermitian_eigen(a: &Mat<c64>) -> Result<(Vec<f64>, Mat<c64>)> {
    let evd = a
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|_| Error::EigenSolver { dim: a.nrows(), max_entry: max_abs(a) })?;
    let values = (0..a.nrows()).map(|i| evd.S()[i].re).collect();
    Ok((values, evd.U().to_owned()))
}

pub fn hermitian_eigenvalues(a: &Mat<c64>) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|_| Error::EigenSolver { dim: a.nrows(), max_entry: max_abs(a) })
}

/// General complex eigendecomposition; columns of the returned matrix are right eigenvectors.
pub fn eigen(a: &Mat<c64>) -> Result<(Vec<c64>, Mat<c64>)> {
    let evd = a
        .eigen()
        .map_err(|_| Error::EigenSolver { dim: a.nrows(), max_entry: max_abs(a) })?;
    let s = evd.S();
    let values = (0..a.nrows()).map(|i| s[i]).collect();
    Ok((values, evd.U().to_owned()))
}

pub fn eigenvalues(a: &Mat<c64>) -> Result<Vec<c64>> {
    a.eigenvalues()
        .map_err(|_| Error::EigenSolver { dim: a.nrows(), max_entry: max_abs(a) })
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(a: &Mat<c64>) -> Result<Mat<c64>> {
    const THETA_13: f64 = 5.371_920_351_148_152;
    const B: [f64; 14] = [
        64_764_752_532_480_000.0,
        32_382_376_266_240_000.0,
        7_771_770_303_897_600.0,
        1_187_353_796_428_800.0,
        129_060_195_264_000.0,
        10_559_470_521_600.0,
        670_442_572_800.0,
        33_522_128_640.0,
        1_323_241_920.0,
        40_840_800.0,
        960_960.0,
        16_380.0,
        182.0,
        1.0,
    ];
    let n = a.nrows();
    if n == 0 {
        return Ok(Mat::new());
    }
    let norm1 = (0..n)
        .map(|j| (0..n).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    if !norm1.is_finite() {
        return Err(Error::Numerical("non-finite matrix in expm".into()));
    }
    let squarings = if norm1 > THETA_13 { (norm1 / THETA_13).log2().ceil() as i32 } else { 0 };
    let a = scale(a, c64::new(0.5f64.powi(squarings), 0.0));
    let id = identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let lin = |c: [f64; 4], m6: &Mat<c64>| -> Mat<c64> {
        Mat::from_fn(n, n, |i, j| {
            m6[(i, j)] * c[0] + a4[(i, j)] * c[1] + a2[(i, j)] * c[2] + id[(i, j)] * c[3]
        })
    };
    let inner_u = Mat::from_fn(n, n, |i, j| a6[(i, j)] * B[13] + a4[(i, j)] * B[11] + a2[(i, j)] * B[9]);
    let u_poly = add(&(&a6 * &inner_u), &lin([B[7], B[5], B[3], B[1]], &a6));
    let u = &a * &u_poly;
    let inner_v = Mat::from_fn(n, n, |i, j| a6[(i, j)] * B[12] + a4[(i, j)] * B[10] + a2[(i, j)] * B[8]);
    let v = add(&(&a6 * &inner_v), &lin([B[6], B[4], B[2], B[0]], &a6));
    let p = add(&v, &u);
    let q = sub(&v, &u);
    let mut r = q.partial_piv_lu().solve(&p);
    for _ in 0..squarings {
        r = &r * &r;
    }
    if !r.as_ref().is_all_finite() {
        return Err(Error::Numerical("expm produced non-finite entries".into()));
    }
    Ok(r)
}

/// Compressed sparse row matrix used for superoperators and their action on `vec(rho)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<c64>,
}

impl CsrMatrix {
    /// Builds a square matrix from (row, col, value) triplets; duplicates are summed
    /// and exact zeros dropped.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, c64)>) -> Self {
        triplets.sort_unstable_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<c64> = Vec::with_capacity(triplets.len());
        let mut rows = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            if let (Some(&lr), Some(&lc)) = (rows.last(), col_idx.last()) {
                if lr == r && lc == c {
                    *values.last_mut().unwrap() += v;
                    continue;
                }
            }
            rows.push(r);
            col_idx.push(c);
            values.push(v);
        }
        let mut keep_rows = Vec::with_capacity(rows.len());
        let mut keep_cols = Vec::with_capacity(rows.len());
        let mut keep_vals = Vec::with_capacity(rows.len());
        for ((r, c), v) in rows.into_iter().zip(col_idx).zip(values) {
            if v != ZERO {
                keep_rows.push(r);
                keep_cols.push(c);
                keep_vals.push(v);
            }
        }
        for &r in &keep_rows {
            row_ptr[r + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, col_idx: keep_cols, values: keep_vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, c64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn mul_vec_into(&self, x: &[c64], y: &mut [c64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *out = acc;
        }
    }

    pub fn mul_vec(&self, x: &[c64]) -> Vec<c64> {
        let mut y = vec![ZERO; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `A^T x` (no conjugation).
    pub fn tmul_vec(&self, x: &[c64]) -> Vec<c64> {
        let mut y = vec![ZERO; self.n];
        for (r, &xr) in x.iter().enumerate() {
            if xr == ZERO {
                continue;
            }
            for (c, v) in self.row(r) {
                y[c] += v * xr;
            }
        }
        y
    }

    pub fn to_dense(&self) -> Mat<c64> {
        let mut m = zeros(self.n);
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                m[(r, c)] = v;
            }
        }
        m
    }

    pub fn frobenius(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Frobenius norm of `self - other`.
    pub fn frobenius_distance(&self, other: &CsrMatrix) -> f64 {
        assert_eq!(self.n, other.n, "dimension mismatch");
        let mut acc = 0.0;
        for r in 0..self.n {
            let mut a = self.row(r).peekable();
            let mut b = other.row(r).peekable();
            loop {
                match (a.peek().copied(), b.peek().copied()) {
                    (Some((ca, va)), Some((cb, vb))) => {
                        if ca == cb {
                            acc += (va - vb).norm_sqr();
                            a.next();
                            b.next();
                        } else if ca < cb {
                            acc += va.norm_sqr();
                            a.next();
                        } else {
                            acc += vb.norm_sqr();
                            b.next();
                        }
                    }
                    (Some((_, va)), None) => {
                        acc += va.norm_sqr();
                        a.next();
                    }
                    (None, Some((_, vb))) => {
                        acc += vb.norm_sqr();
                        b.next();
                    }
                    (None, None) => break,
                }
            }
        }
        acc.sqrt()
    }
}

/// Appends the nonzero entries of `coeff * (a (x) b)` as triplets.
pub(crate) fn push_kron_triplets(
    out: &mut Vec<(usize, usize, c64)>,
    coeff: c64,
    a: &Mat<c64>,
    b: &Mat<c64>,
) {
    let (br, bc) = (b.nrows(), b.ncols());
    let b_nz: Vec<(usize, usize, c64)> = (0..bc)
        .flat_map(|j| (0..br).map(move |i| (i, j)))
        .filter_map(|(i, j)| {
            let v = b[(i, j)];
            (v != ZERO).then_some((i, j, v))
        })
        .collect();
    for ja in 0..a.ncols() {
        for ia in 0..a.nrows() {
            let va = a[(ia, ja)];
            if va == ZERO {
                continue;
            }
            let s = coeff * va;
            for &(ib, jb, vb) in &b_nz {
                out.push((ia * br + ib, ja * bc + jb, s * vb));
            }
        }
    }
}
