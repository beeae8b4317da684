//! Collective spin-S operators in the z-eigenbasis ordered m = S, S-1, ..., -S.

use std::fmt;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c64, ONE, ZERO};

/// A spin-S Hilbert space, stored as the integer 2S.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpinSpace {
    two_s: u32,
}

impl SpinSpace {
    pub fn new(two_s: u32) -> Result<Self> {
        if two_s == 0 {
            return Err(Error::InvalidSpin(0.0));
        }
        Ok(Self { two_s })
    }

    /// Accepts S as a float; 2S must be a positive integer.
    pub fn from_spin(s: f64) -> Result<Self> {
        let two = 2.0 * s;
        if !two.is_finite() || two < 1.0 || (two - two.round()).abs() > 1e-9 {
            return Err(Error::InvalidSpin(two));
        }
        Self::new(two.round() as u32)
    }

    pub fn two_s(&self) -> u32 {
        self.two_s
    }

    pub fn s(&self) -> f64 {
        self.two_s as f64 / 2.0
    }

    pub fn dim(&self) -> usize {
        self.two_s as usize + 1
    }

    pub fn is_integer(&self) -> bool {
        self.two_s % 2 == 0
    }

    /// Magnetic quantum number of basis row `i`.
    pub fn m(&self, i: usize) -> f64 {
        self.s() - i as f64
    }

    /// Row index of magnetization `m`, if it belongs to the space.
    pub fn index_of(&self, m: f64) -> Option<usize> {
        let i = self.s() - m;
        if i < -1e-9 || (i - i.round()).abs() > 1e-9 || i.round() as usize >= self.dim() {
            return None;
        }
        Some(i.round() as usize)
    }
}

impl fmt::Display for SpinSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "S={}", self.two_s / 2)
        } else {
            write!(f, "S={}/2", self.two_s)
        }
    }
}

/// One collective spin or a pair of equal spins (A is the left tensor factor).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Space {
    Single(SpinSpace),
    Pair(SpinSpace),
}

impl Space {
    pub fn dim(&self) -> usize {
        match self {
            Space::Single(s) => s.dim(),
            Space::Pair(s) => s.dim() * s.dim(),
        }
    }

    pub fn spin(&self) -> SpinSpace {
        match self {
            Space::Single(s) | Space::Pair(s) => *s,
        }
    }
}

/// Basis in which a matrix is stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    /// Sz eigenbasis (product Sz basis for two spins).
    Z,
    /// Sx eigenbasis, ordered S, S-1, ..., -S.
    X,
}

/// Dense operator tagged with the space it acts on.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    space: Space,
    matrix: Mat<c64>,
}

impl Operator {
    pub fn new(space: Space, matrix: Mat<c64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::NotSquare { rows: matrix.nrows(), cols: matrix.ncols() });
        }
        if matrix.nrows() != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), found: matrix.nrows() });
        }
        Ok(Self { space, matrix })
    }

    pub(crate) fn from_parts(space: Space, matrix: Mat<c64>) -> Self {
        debug_assert_eq!(matrix.nrows(), space.dim());
        Self { space, matrix }
    }

    pub fn identity(space: Space) -> Self {
        Self { space, matrix: linalg::identity(space.dim()) }
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Mat<c64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Mat<c64> {
        self.matrix
    }

    pub fn dagger(&self) -> Self {
        Self { space: self.space, matrix: linalg::dagger(&self.matrix) }
    }

    pub fn conj(&self) -> Self {
        Self { space: self.space, matrix: linalg::conjugate(&self.matrix) }
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.scaled_c(c64::new(s, 0.0))
    }

    pub fn scaled_c(&self, s: c64) -> Self {
        Self { space: self.space, matrix: linalg::scale(&self.matrix, s) }
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.space != other.space {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self { space: self.space, matrix: linalg::add(&self.matrix, &other.matrix) })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self { space: self.space, matrix: linalg::sub(&self.matrix, &other.matrix) })
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self { space: self.space, matrix: &self.matrix * &other.matrix })
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self { space: self.space, matrix: linalg::commutator(&self.matrix, &other.matrix) })
    }

    pub fn pow(&self, n: u32) -> Self {
        Self { space: self.space, matrix: linalg::matrix_power(&self.matrix, n) }
    }

    /// Max-norm distance to the adjoint.
    pub fn hermiticity_defect(&self) -> f64 {
        linalg::hermiticity_defect(&self.matrix)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        linalg::max_abs_diff(&self.matrix, &other.matrix)
    }

    pub fn frobenius(&self) -> f64 {
        linalg::frobenius(&self.matrix)
    }
}

/// The z-basis spin operators of one spin.
#[derive(Debug, Clone)]
pub struct SpinOperators {
    pub sx: Operator,
    pub sy: Operator,
    pub sz: Operator,
    pub splus: Operator,
    pub sminus: Operator,
}

pub fn spin_operators(space: SpinSpace) -> SpinOperators {
    let d = space.dim();
    let s = space.s();
    let sp = Mat::from_fn(d, d, |i, j| {
        // S+ |m> = sqrt(S(S+1) - m(m+1)) |m+1>; row i holds m = S - i.
        if j == i + 1 {
            let m = space.m(j);
            c64::new((s * (s + 1.0) - m * (m + 1.0)).max(0.0).sqrt(), 0.0)
        } else {
            ZERO
        }
    });
    let sm = linalg::dagger(&sp);
    let sz = Mat::from_fn(d, d, |i, j| if i == j { c64::new(space.m(i), 0.0) } else { ZERO });
    let sx = Mat::from_fn(d, d, |i, j| (sp[(i, j)] + sm[(i, j)]) * 0.5);
    let sy = Mat::from_fn(d, d, |i, j| (sp[(i, j)] - sm[(i, j)]) * c64::new(0.0, -0.5));
    let sp1 = Space::Single(space);
    SpinOperators {
        sx: Operator::from_parts(sp1, sx),
        sy: Operator::from_parts(sp1, sy),
        sz: Operator::from_parts(sp1, sz),
        splus: Operator::from_parts(sp1, sp),
        sminus: Operator::from_parts(sp1, sm),
    }
}

/// Ladder operators for Sx, `Sx^± = Sy ± i Sz`, together with the z→x unitary.
#[derive(Debug, Clone)]
pub struct XLadder {
    pub plus: Operator,
    pub minus: Operator,
    /// Columns are Sx eigenvectors for eigenvalues S, S-1, ..., -S, phased so that
    /// `U† Sx^± U` are the standard ladder matrices with positive real entries.
    pub u: Mat<c64>,
}

pub fn x_ladder(space: SpinSpace) -> XLadder {
    let ops = spin_operators(space);
    let d = space.dim();
    let s = space.s();
    let iz = linalg::scale(ops.sz.matrix(), linalg::I);
    let plus = linalg::add(ops.sy.matrix(), &iz);
    let minus = linalg::sub(ops.sy.matrix(), &iz);

    // Highest Sx weight in the z-basis: amplitudes 2^{-S} sqrt(binom(2S, S+m)).
    // Sx^- lowers it column by column; the normalization makes each lowering
    // coefficient the positive real sqrt((S+n)(S-n+1)).
    let two_s = space.two_s() as f64;
    let mut u = linalg::zeros(d);
    for i in 0..d {
        let m = space.m(i);
        let ln = 0.5 * (ln_gamma(two_s + 1.0) - ln_gamma(s + m + 1.0) - ln_gamma(s - m + 1.0))
            - s * std::f64::consts::LN_2;
        u[(i, 0)] = c64::new(ln.exp(), 0.0);
    }
    for col in 1..d {
        let n = s - (col - 1) as f64;
        let norm = ((s + n) * (s - n + 1.0)).sqrt();
        let prev: Vec<c64> = (0..d).map(|r| u[(r, col - 1)]).collect();
        let next = linalg::mat_vec(&minus, &prev);
        for (r, v) in next.into_iter().enumerate() {
            u[(r, col)] = v / norm;
        }
    }
    let sp = Space::Single(space);
    XLadder { plus: Operator::from_parts(sp, plus), minus: Operator::from_parts(sp, minus), u }
}

/// Converts a z-basis operator to the Sx eigenbasis given by [`XLadder::u`].
pub fn to_x_basis(op: &Mat<c64>, u: &Mat<c64>) -> Mat<c64> {
    &(&linalg::dagger(u) * op) * u
}

/// P|m> = |-m>: the anti-diagonal of ones.
pub fn parity_reflection(space: SpinSpace) -> Operator {
    let d = space.dim();
    Operator::from_parts(
        Space::Single(space),
        Mat::from_fn(d, d, |i, j| if i + j == d - 1 { ONE } else { ZERO }),
    )
}

/// A (x) B on the pair space.
pub fn two_spin_embed(a: &Operator, b: &Operator) -> Result<Operator> {
    match (a.space(), b.space()) {
        (Space::Single(sa), Space::Single(sb)) if sa == sb => {
            Ok(Operator::from_parts(Space::Pair(sa), linalg::kron(a.matrix(), b.matrix())))
        }
        _ => Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() }),
    }
}

/// A (x) I.
pub fn embed_a(a: &Operator) -> Result<Operator> {
    match a.space() {
        Space::Single(s) => two_spin_embed(a, &Operator::identity(Space::Single(s))),
        Space::Pair(_) => Err(Error::DimensionMismatch { expected: a.dim(), found: a.dim() * a.dim() }),
    }
}

/// I (x) B.
pub fn embed_b(b: &Operator) -> Result<Operator> {
    match b.space() {
        Space::Single(s) => two_spin_embed(&Operator::identity(Space::Single(s)), b),
        Space::Pair(_) => Err(Error::DimensionMismatch { expected: b.dim(), found: b.dim() * b.dim() }),
    }
}

/// Exchange of the two spins: SWAP |a, b> = |b, a>.
pub fn swap_parity(space: SpinSpace) -> Operator {
    let d = space.dim();
    let n = d * d;
    Operator::from_parts(
        Space::Pair(space),
        Mat::from_fn(n, n, |r, c| {
            let (a, b) = (c / d, c % d);
            if r == b * d + a {
                ONE
            } else {
                ZERO
            }
        }),
    )
}

/// Natural log of the gamma function for positive arguments (Lanczos, g = 7).
pub(crate) fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(two_s: u32) -> SpinSpace {
        SpinSpace::new(two_s).unwrap()
    }

    #[test]
    fn rejects_invalid_spin() {
        assert!(SpinSpace::new(0).is_err());
        assert!(SpinSpace::from_spin(0.3).is_err());
        assert_eq!(SpinSpace::from_spin(1.5).unwrap().dim(), 4);
    }

    #[test]
    fn spin_half_defining_representation() {
        let ops = spin_operators(sp(1));
        assert_eq!(ops.sz.matrix()[(0, 0)], c64::new(0.5, 0.0));
        assert_eq!(ops.sz.matrix()[(1, 1)], c64::new(-0.5, 0.0));
        assert_eq!(ops.splus.matrix()[(0, 1)], ONE);
        assert_eq!(ops.splus.matrix()[(1, 0)], ZERO);
    }

    #[test]
    fn spin_one_raising_entries() {
        let ops = spin_operators(sp(2));
        let r2 = 2f64.sqrt();
        assert!((ops.splus.matrix()[(0, 1)].re - r2).abs() < 1e-15);
        assert!((ops.splus.matrix()[(1, 2)].re - r2).abs() < 1e-15);
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        let mut f = 1.0f64;
        for n in 1..30 {
            f *= n as f64;
            assert!((ln_gamma(n as f64 + 1.0) - f.ln()).abs() < 1e-10 * f.ln().max(1.0));
        }
    }

    #[test]
    fn x_basis_unitary_diagonalizes_sx() {
        for two_s in 1..=12 {
            let space = sp(two_s);
            let xl = x_ladder(space);
            let ops = spin_operators(space);
            let ud = &linalg::dagger(&xl.u) * &xl.u;
            assert!(linalg::max_abs_diff(&ud, &linalg::identity(space.dim())) < 1e-12);
            let sx = to_x_basis(ops.sx.matrix(), &xl.u);
            for i in 0..space.dim() {
                for j in 0..space.dim() {
                    let expect = if i == j { space.m(i) } else { 0.0 };
                    assert!((sx[(i, j)] - c64::new(expect, 0.0)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn x_ladders_become_standard_ladders() {
        let space = sp(5);
        let xl = x_ladder(space);
        let ops = spin_operators(space);
        let plus_x = to_x_basis(xl.plus.matrix(), &xl.u);
        assert!(linalg::max_abs_diff(&plus_x, ops.splus.matrix()) < 1e-12);
        let minus_x = to_x_basis(xl.minus.matrix(), &xl.u);
        assert!(linalg::max_abs_diff(&minus_x, ops.sminus.matrix()) < 1e-12);
    }
}
