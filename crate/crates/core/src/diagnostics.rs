//! PT-symmetry and time-crystal diagnostics.

use faer::prelude::*;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::{DensityMatrix, Spectrum};
use crate::linalg::{self, c64, I};
use crate::models::{one_spin_btc_exact_steady, two_spin_operators, OneSpinBtcParams};
use crate::spin::{spin_operators, Operator, Space, SpinSpace};

/// `P conj(rho) P`, the PT image of a state in the stored basis.
pub fn pt_image(rho: &Mat<c64>, parity: &Mat<c64>) -> Mat<c64> {
    &(parity * &linalg::conjugate(rho)) * parity
}

fn check_dims(rho: &DensityMatrix, parity: &Operator) -> Result<()> {
    if rho.dim() != parity.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), found: parity.dim() });
    }
    Ok(())
}

/// `sum |rho - PT rho PT|_ij / sum (|rho|_ij + |PT rho PT|_ij)`, in [0, 1].
pub fn q_pt(rho: &DensityMatrix, parity: &Operator) -> Result<f64> {
    check_dims(rho, parity)?;
    let r = rho.matrix();
    let img = pt_image(r, parity.matrix());
    let (mut num, mut den) = (0.0, 0.0);
    for j in 0..r.ncols() {
        for i in 0..r.nrows() {
            num += (r[(i, j)] - img[(i, j)]).norm();
            den += r[(i, j)].norm() + img[(i, j)].norm();
        }
    }
    assert!(den > 0.0, "a unit-trace state has a nonzero entry");
    Ok(num / den)
}

/// Entrywise `|rho - PT rho PT|`.
pub fn pt_residual_matrix(rho: &DensityMatrix, parity: &Operator) -> Result<Mat<f64>> {
    check_dims(rho, parity)?;
    let r = rho.matrix();
    let img = pt_image(r, parity.matrix());
    Ok(Mat::from_fn(r.nrows(), r.ncols(), |i, j| (r[(i, j)] - img[(i, j)]).norm()))
}

/// Tr[rho²].
pub fn purity(rho: &DensityMatrix) -> f64 {
    let r = rho.matrix();
    let mut acc = 0.0;
    for j in 0..r.ncols() {
        for i in 0..r.nrows() {
            // Tr[rho rho] = sum_ij rho_ij rho_ji = sum_ij |rho_ij|² for Hermitian rho.
            acc += (r[(i, j)] * r[(j, i)]).re;
        }
    }
    acc
}

/// `|<S+,A S-,A - S+,B S-,B>| / <S+,A S-,A + S+,B S-,B>` for a two-spin state.
pub fn symmetry_delta(rho: &DensityMatrix) -> Result<f64> {
    let spin = match rho.space() {
        Space::Pair(s) => s,
        Space::Single(_) => {
            return Err(Error::InvalidParameter { name: "rho", reason: "two-spin state expected".into() })
        }
    };
    let t = two_spin_operators(spin)?;
    let na = crate::lindblad::expectation(rho, &t.splus_a.mul(&t.sminus_a)?)?.re;
    let nb = crate::lindblad::expectation(rho, &t.splus_b.mul(&t.sminus_b)?)?.re;
    let den = na + nb;
    if den.abs() < 1e-300 {
        return Err(Error::Numerical("symmetry parameter has a zero denominator".into()));
    }
    Ok((na - nb).abs() / den)
}

/// Least-squares fit `y = a + b/S + c/S²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteSizeFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub residual: f64,
}

impl FiniteSizeFit {
    /// The S → ∞ extrapolation.
    pub fn extrapolated(&self) -> f64 {
        self.a
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.a + self.b / s + self.c / (s * s)
    }
}

pub fn finite_size_fit(points: &[(f64, f64)]) -> Result<FiniteSizeFit> {
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(1.0));
    if distinct.len() < 3 {
        return Err(Error::InsufficientData { needed: 3, got: distinct.len() });
    }
    if points.iter().any(|p| !(p.0.is_finite() && p.0 > 0.0 && p.1.is_finite())) {
        return Err(Error::InvalidParameter { name: "points", reason: "need finite S > 0 and finite y".into() });
    }
    let n = points.len();
    let design = Mat::<f64>::from_fn(n, 3, |i, j| points[i].0.powi(-(j as i32)));
    let rhs = Mat::<f64>::from_fn(n, 1, |i, _| points[i].1);
    let sol = design.qr().solve_lstsq(&rhs);
    let (a, b, c) = (sol[(0, 0)], sol[(1, 0)], sol[(2, 0)]);
    let fit = FiniteSizeFit { a, b, c, residual: 0.0 };
    let residual = points.iter().map(|&(s, y)| (fit.eval(s) - y).powi(2)).sum::<f64>().sqrt();
    Ok(FiniteSizeFit { residual, ..fit })
}

/// Common base of a set of frequencies: the median nearest-neighbour gap of the
/// distinct values, and whether every value is within `rel_tol` of an integer multiple.
pub fn commensurable_base(values: &[f64], rel_tol: f64) -> Option<(f64, bool)> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * scale);
    if v.len() < 2 {
        return None;
    }
    let mut gaps: Vec<f64> = (0..v.len())
        .map(|i| {
            let left = if i > 0 { v[i] - v[i - 1] } else { f64::INFINITY };
            let right = if i + 1 < v.len() { v[i + 1] - v[i] } else { f64::INFINITY };
            left.min(right)
        })
        .collect();
    gaps.sort_by(f64::total_cmp);
    let base = if gaps.len() % 2 == 1 {
        gaps[gaps.len() / 2]
    } else {
        0.5 * (gaps[gaps.len() / 2 - 1] + gaps[gaps.len() / 2])
    };
    if base <= 0.0 {
        return None;
    }
    let ok = v.iter().all(|&x| {
        let k = (x / base).round();
        (x - k * base).abs() <= rel_tol * x.abs().max(base)
    });
    Some((base, ok))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BtcOptions {
    /// Eigenvalues with |Im| above this count as oscillating.
    pub im_floor: f64,
    /// Slack allowed in the strict decrease of min |Re| across S.
    pub slack: f64,
    /// The quadratic-in-1/S extrapolation of min |Re| must be within this fraction of
    /// its value at the smallest S.
    pub vanish_frac: f64,
    /// Relative tolerance of the commensurability test.
    pub rel_tol: f64,
    /// Number of harmonics tracked (fundamental included).
    pub harmonics: usize,
}

impl Default for BtcOptions {
    fn default() -> Self {
        Self { im_floor: 1e-6, slack: 1e-9, vanish_frac: 0.1, rel_tol: 1e-2, harmonics: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinEvidence {
    pub s: f64,
    /// Smallest |Re λ| among eigenvalues with |Im λ| > im_floor (infinite if none).
    pub min_abs_re: f64,
    /// Im parts of the slowest mode near each harmonic k·f₁ (k = 1..K).
    pub harmonic_im: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BtcVerdict {
    pub has_pure_imaginary_trend: bool,
    pub base_frequency: Option<f64>,
    pub commensurable: bool,
    pub evidence: Vec<SpinEvidence>,
    /// Extrapolation of min |Re λ| to S = ∞.
    pub extrapolated_min_re: f64,
    /// Extrapolated harmonic frequencies.
    pub extrapolated_frequencies: Vec<f64>,
}

impl BtcVerdict {
    pub fn positive(&self) -> bool {
        self.has_pure_imaginary_trend && self.commensurable
    }
}

fn harmonic_representatives(values: &[c64], im_floor: f64, k_max: usize) -> Vec<f64> {
    let upper: Vec<c64> = values.iter().copied().filter(|v| v.im > im_floor).collect();
    let slowest = |it: &mut dyn Iterator<Item = c64>| {
        it.min_by(|a, b| a.re.abs().total_cmp(&b.re.abs()).then(a.im.total_cmp(&b.im)))
    };
    let Some(f1) = slowest(&mut upper.iter().copied()) else {
        return Vec::new();
    };
    let mut out = vec![f1.im];
    for k in 2..=k_max {
        let target = k as f64 * f1.im;
        match slowest(&mut upper.iter().copied().filter(|v| (v.im - target).abs() < f1.im / 2.0)) {
            Some(v) => out.push(v.im),
            None => break,
        }
    }
    out
}

/// Detects a boundary time crystal from spectra along an S-ladder: the slowest
/// oscillating decay rate must vanish as S grows, and the extrapolated oscillation
/// frequencies must be commensurable.
pub fn btc_detect(spectra: &[(SpinSpace, Spectrum)], opts: BtcOptions) -> Result<BtcVerdict> {
    let mut items: Vec<&(SpinSpace, Spectrum)> = spectra.iter().collect();
    items.sort_by_key(|(s, _)| *s);
    items.dedup_by_key(|(s, _)| *s);
    if items.len() < 3 {
        return Err(Error::InsufficientData { needed: 3, got: items.len() });
    }
    let evidence: Vec<SpinEvidence> = items
        .iter()
        .map(|(spin, spec)| {
            let min_abs_re = spec
                .eigenvalues()
                .iter()
                .filter(|v| v.im.abs() > opts.im_floor)
                .map(|v| v.re.abs())
                .fold(f64::INFINITY, f64::min);
            SpinEvidence {
                s: spin.s(),
                min_abs_re,
                harmonic_im: harmonic_representatives(spec.eigenvalues(), opts.im_floor, opts.harmonics),
            }
        })
        .collect();

    let all_finite = evidence.iter().all(|e| e.min_abs_re.is_finite());
    let decreasing = all_finite && evidence.windows(2).all(|w| w[1].min_abs_re < w[0].min_abs_re + opts.slack);
    let extrapolated_min_re = if all_finite {
        finite_size_fit(&evidence.iter().map(|e| (e.s, e.min_abs_re)).collect::<Vec<_>>())?.extrapolated()
    } else {
        f64::INFINITY
    };
    let vanishes = extrapolated_min_re.abs() <= opts.vanish_frac * evidence[0].min_abs_re.max(opts.slack);
    let has_pure_imaginary_trend = decreasing && vanishes;

    let k_common = evidence.iter().map(|e| e.harmonic_im.len()).min().unwrap_or(0);
    let extrapolated_frequencies: Vec<f64> = (0..k_common)
        .map(|k| {
            let pts: Vec<(f64, f64)> = evidence.iter().map(|e| (e.s, e.harmonic_im[k])).collect();
            finite_size_fit(&pts).map(|f| f.extrapolated())
        })
        .collect::<Result<_>>()?;
    let (base_frequency, commensurable) = if extrapolated_frequencies.is_empty() {
        (None, false)
    } else {
        let mut vals = vec![0.0];
        vals.extend(&extrapolated_frequencies);
        match commensurable_base(&vals, opts.rel_tol) {
            Some((b, ok)) => (Some(b), ok),
            None => (None, false),
        }
    };
    Ok(BtcVerdict {
        has_pure_imaginary_trend,
        base_frequency,
        commensurable,
        evidence,
        extrapolated_min_re,
        extrapolated_frequencies,
    })
}

fn ladder_factors(spin: SpinSpace, ratio: f64, n: u32, n_prime: u32) -> Result<(Mat<c64>, Mat<c64>)> {
    if n > spin.two_s() || n_prime > spin.two_s() {
        return Err(Error::InvalidParameter { name: "n", reason: format!("powers must not exceed 2S = {}", spin.two_s()) });
    }
    let ops = spin_operators(spin);
    let s = spin.s();
    let a = linalg::scale(ops.splus.matrix(), c64::new(0.0, -ratio / s));
    let b = linalg::scale(ops.sminus.matrix(), c64::new(0.0, ratio / s));
    Ok((linalg::matrix_power(&a, n), linalg::matrix_power(&b, n_prime)))
}

/// Frobenius norm of `[(-i r S+/S)^n, (i r S-/S)^n']`.
pub fn ladder_commutator_norm(spin: SpinSpace, ratio: f64, n: u32, n_prime: u32) -> Result<f64> {
    let (a, b) = ladder_factors(spin, ratio, n, n_prime)?;
    Ok(linalg::frobenius(&linalg::commutator(&a, &b)))
}

/// The same commutator assembled from the ladder identity
/// `[S+^n, S-] = n(n-1) S+^{n-1} + 2n S+^{n-1} Sz`, summed over the n' factors of S-.
pub fn ladder_commutator_expansion(spin: SpinSpace, ratio: f64, n: u32, n_prime: u32) -> Result<Mat<c64>> {
    if n > spin.two_s() || n_prime > spin.two_s() {
        return Err(Error::InvalidParameter { name: "n", reason: format!("powers must not exceed 2S = {}", spin.two_s()) });
    }
    let ops = spin_operators(spin);
    let s = spin.s();
    let d = spin.dim();
    let sp = linalg::scale(ops.splus.matrix(), c64::new(1.0 / s, 0.0));
    let sm = linalg::scale(ops.sminus.matrix(), c64::new(1.0 / s, 0.0));
    let sz = linalg::scale(ops.sz.matrix(), c64::new(1.0 / s, 0.0));
    let mut out = linalg::zeros(d);
    if n == 0 || n_prime == 0 {
        return Ok(out);
    }
    let nf = n as f64;
    let sp_n1 = linalg::matrix_power(&sp, n - 1);
    let sp_n1_sz = &sp_n1 * &sz;
    for k in 1..=n_prime {
        let left = linalg::matrix_power(&sm, k - 1);
        let right = linalg::matrix_power(&sm, n_prime - k);
        let t1 = &(&left * &sp_n1) * &right;
        let t2 = &(&left * &sp_n1_sz) * &right;
        out = linalg::add(&out, &linalg::scale(&t1, c64::new(nf * (nf - 1.0) / (s * s), 0.0)));
        out = linalg::add(&out, &linalg::scale(&t2, c64::new(2.0 * nf / s, 0.0)));
    }
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    let pref = (I * ratio).powu(n + n_prime) * sign;
    Ok(linalg::scale(&out, pref))
}

/// Diagonal elements `(<m|rho|m>, <-m|rho|-m>)` of the exact one-spin BTC stationary
/// state at coupling ratio kappa/g.
pub fn steady_diag_pair(spin: SpinSpace, ratio: f64, m: i64) -> Result<(f64, f64)> {
    let rho = one_spin_btc_exact_steady(&OneSpinBtcParams { spin, g: 1.0, kappa: ratio })?;
    let idx = |m: f64| {
        spin.index_of(m).ok_or_else(|| Error::InvalidParameter {
            name: "m",
            reason: format!("m = {m} is not a magnetization of {spin}"),
        })
    };
    let (i, j) = (idx(m as f64)?, idx(-m as f64)?);
    Ok((rho.matrix()[(i, i)].re, rho.matrix()[(j, j)].re))
}

/// With kappa/g = 1/sqrt(1-p²), the stationary populations at m = ±floor(pS).
pub fn steady_diag_asymmetry(spin: SpinSpace, p: f64) -> Result<(f64, f64)> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter { name: "p", reason: format!("p must lie in (0, 1), got {p}") });
    }
    if !spin.is_integer() {
        return Err(Error::InvalidParameter { name: "S", reason: "integer spin required".into() });
    }
    let m = (p * spin.s()).floor() as i64;
    steady_diag_pair(spin, 1.0 / (1.0 - p * p).sqrt(), m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::parity_reflection;

    #[test]
    fn q_pt_of_hand_example() {
        let spin = SpinSpace::new(1).unwrap();
        let mut m = linalg::zeros(2);
        m[(0, 0)] = c64::new(0.75, 0.0);
        m[(1, 1)] = c64::new(0.25, 0.0);
        let rho = DensityMatrix::new(Space::Single(spin), m).unwrap();
        assert!((q_pt(&rho, &parity_reflection(spin)).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn commensurable_base_examples() {
        let v: Vec<f64> = (-3..=3).map(|k| 0.8 * k as f64).collect();
        let (b, ok) = commensurable_base(&v, 1e-3).unwrap();
        assert!((b - 0.8).abs() < 1e-12 && ok);
        let (_, ok) = commensurable_base(&[0.0, 1.0, 2.0, 2.5 + 0.1], 1e-3).unwrap();
        assert!(!ok);
        assert!(commensurable_base(&[1.0], 1e-3).is_none());
    }

    #[test]
    fn fit_rejects_duplicate_abscissae() {
        assert_eq!(
            finite_size_fit(&[(2.0, 1.0), (2.0, 1.1), (4.0, 0.5)]).unwrap_err(),
            Error::InsufficientData { needed: 3, got: 2 }
        );
    }

    #[test]
    fn btc_detect_needs_three_spins() {
        let spec = Spectrum::from_eigenvalues(vec![c64::new(0.0, 0.0)]);
        let spins = [(SpinSpace::new(2).unwrap(), spec.clone()), (SpinSpace::new(4).unwrap(), spec)];
        assert!(matches!(btc_detect(&spins, BtcOptions::default()), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn diag_asymmetry_validates_inputs() {
        let spin = SpinSpace::new(10).unwrap();
        assert!(steady_diag_asymmetry(spin, 0.0).is_err());
        assert!(steady_diag_asymmetry(spin, 1.0).is_err());
        assert!(steady_diag_asymmetry(SpinSpace::new(5).unwrap(), 0.5).is_err());
    }
}
