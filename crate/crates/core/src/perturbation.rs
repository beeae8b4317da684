//! Degenerate perturbation theory in the dissipation strength kappa.
//!
//! The Liouvillian is split as `L = L0 + kappa L1` with `L0 = -i omega [Sx, .]` and
//! `L1 = (1/S) sum_mu w_mu D[L_mu]`, `L_mu = alpha Sx^+ + beta Sx^- + gamma Sx`.
//! Eigenmodes of L0 are the x-basis matrix units `|n><n-q|`, grouped into coherence
//! sectors q with eigenvalue `-i omega q`. First-order corrections diagonalize the
//! real tridiagonal restriction of L1 to a sector; second-order corrections sum the
//! couplings to all other sectors.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::lindblad::{Dissipator, Liouvillian, ModelSpec};
use crate::linalg::{self, c64, CsrMatrix, ZERO};
use crate::models::{ClassParams, ClassTriple, OneSpinBtcParams, OneSpinPtParams};
use crate::spin::{parity_reflection, spin_operators, x_ladder, Operator, Space, SpinSpace};

/// A one-spin model of the form `omega Sx` plus weighted x-ladder jumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbativeModel {
    pub spin: SpinSpace,
    pub omega: f64,
    /// (weight w_mu, triple); the physical rate of jump mu is `kappa w_mu / S`.
    pub jumps: Vec<(f64, ClassTriple)>,
}

impl PerturbativeModel {
    pub fn new(spin: SpinSpace, omega: f64, jumps: Vec<(f64, ClassTriple)>) -> Result<Self> {
        if !omega.is_finite() {
            return Err(Error::InvalidParameter { name: "omega", reason: "must be finite".into() });
        }
        if jumps.is_empty() {
            return Err(Error::InvalidParameter { name: "jumps", reason: "at least one jump is required".into() });
        }
        if jumps.iter().any(|(w, _)| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidParameter { name: "weight", reason: "weights must be >= 0".into() });
        }
        Ok(Self { spin, omega, jumps })
    }

    /// `H = g Sx`, unit weights.
    pub fn from_class(p: &ClassParams) -> Result<Self> {
        Self::new(p.spin, p.g, p.dissipators.iter().map(|t| (1.0, *t)).collect())
    }

    /// `H = g Sx`, jumps Sx^± with weights 1 ± p.
    pub fn from_one_spin_pt(p: &OneSpinPtParams) -> Result<Self> {
        let one = c64::new(1.0, 0.0);
        Self::new(
            p.spin,
            p.g,
            vec![
                (1.0 + p.p, ClassTriple::new(one, ZERO, ZERO)),
                (1.0 - p.p, ClassTriple::new(ZERO, one, ZERO)),
            ],
        )
    }

    /// `H = 2g Sx`, `S- = -i/2 Sx^+ - i/2 Sx^- + Sx`.
    pub fn from_one_spin_btc(p: &OneSpinBtcParams) -> Result<Self> {
        let h = c64::new(0.0, -0.5);
        Self::new(p.spin, 2.0 * p.g, vec![(1.0, ClassTriple::new(h, h, c64::new(1.0, 0.0)))])
    }

    /// Total weighted gain and loss, `sum w |alpha|²` and `sum w |beta|²`.
    pub fn gain_loss(&self) -> (f64, f64) {
        self.jumps.iter().fold((0.0, 0.0), |(a, b), (w, t)| (a + w * t.alpha.norm_sqr(), b + w * t.beta.norm_sqr()))
    }

    fn gamma_weight(&self) -> f64 {
        self.jumps.iter().map(|(w, t)| w * t.gamma.norm_sqr()).sum()
    }

    /// Unperturbed eigenvalue of sector q.
    pub fn lambda0(&self, q: i64) -> c64 {
        c64::new(0.0, -self.omega * q as f64)
    }

    /// The full z-basis model at dissipation strength kappa.
    pub fn model_spec(&self, kappa: f64) -> Result<ModelSpec> {
        let ops = spin_operators(self.spin);
        let xl = x_ladder(self.spin);
        let s = self.spin.s();
        let mut diss = Vec::with_capacity(self.jumps.len());
        for (w, t) in &self.jumps {
            let l = xl.plus.scaled_c(t.alpha).add(&xl.minus.scaled_c(t.beta))?.add(&ops.sx.scaled_c(t.gamma))?;
            diss.push(Dissipator::new(kappa * w / s, l));
        }
        ModelSpec::new(
            format!("perturbative({}, omega={}, kappa={kappa})", self.spin, self.omega),
            ops.sx.scaled(self.omega),
            diss,
            Some(parity_reflection(self.spin)),
        )
    }

    /// `L1` as a superoperator on x-basis matrices. In the Sx eigenbasis Sx^±
    /// are the standard ladder matrices and Sx is diagonal, so this is exact.
    pub fn l1_x_basis(&self) -> Result<CsrMatrix> {
        let std = spin_operators(self.spin);
        let s = self.spin.s();
        let space = Space::Single(self.spin);
        let mut diss = Vec::with_capacity(self.jumps.len());
        for (w, t) in &self.jumps {
            let l = std.splus.scaled_c(t.alpha).add(&std.sminus.scaled_c(t.beta))?.add(&std.sz.scaled_c(t.gamma))?;
            diss.push(Dissipator::new(w / s, l));
        }
        let zero_h = Operator::new(space, linalg::zeros(self.spin.dim()))?;
        let spec = ModelSpec::new("L1", zero_h, diss, None)?;
        Ok(Liouvillian::new(spec).matrix().clone())
    }

    fn check_sector(&self, q: i64) -> Result<()> {
        if q.unsigned_abs() > self.spin.two_s() as u64 {
            return Err(Error::SectorOutOfRange { q, two_s: self.spin.two_s() });
        }
        Ok(())
    }
}

/// x-magnetizations n of the modes `|n><n-q|` in sector q, descending.
pub fn sector_ns(spin: SpinSpace, q: i64) -> Result<Vec<f64>> {
    let two_s = spin.two_s() as i64;
    if q.abs() > two_s {
        return Err(Error::SectorOutOfRange { q, two_s: spin.two_s() });
    }
    let s = spin.s();
    let n_max = s.min(s + q as f64);
    Ok((0..(two_s + 1 - q.abs()) as usize).map(|i| n_max - i as f64).collect())
}

/// Index of `|n><n'|` (x-basis) in the column-stacked vector.
fn vec_index(spin: SpinSpace, n: f64, n_prime: f64) -> usize {
    let s = spin.s();
    let a = (s - n).round() as usize;
    let b = (s - n_prime).round() as usize;
    a + b * spin.dim()
}

/// Sector label of a column-stacked x-basis index.
fn sector_of(spin: SpinSpace, r: usize) -> i64 {
    let d = spin.dim();
    (r / d) as i64 - (r % d) as i64
}

/// The modes of sector q as z-basis matrices, with their n labels.
#[derive(Debug, Clone)]
pub struct SectorBasis {
    pub q: i64,
    pub ns: Vec<f64>,
    pub modes: Vec<Mat<c64>>,
}

pub fn sector_basis(spin: SpinSpace, q: i64) -> Result<SectorBasis> {
    let ns = sector_ns(spin, q)?;
    let u = x_ladder(spin).u;
    let s = spin.s();
    let d = spin.dim();
    let modes = ns
        .iter()
        .map(|&n| {
            let a = (s - n).round() as usize;
            let b = (s - (n - q as f64)).round() as usize;
            Mat::from_fn(d, d, |i, j| u[(i, a)] * u[(j, b)].conj())
        })
        .collect();
    Ok(SectorBasis { q, ns, modes })
}

/// Real tridiagonal restriction of L1 to a sector, rows and columns ordered by
/// descending n. `sup[i] = M[i][i+1]`, `sub[i] = M[i+1][i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorMatrix {
    pub q: i64,
    pub ns: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
    pub sub: Vec<f64>,
}

impl SectorMatrix {
    pub fn size(&self) -> usize {
        self.diag.len()
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let n = self.size();
        Mat::from_fn(n, n, |i, j| {
            if i == j {
                self.diag[i]
            } else if j == i + 1 {
                self.sup[i]
            } else if i == j + 1 {
                self.sub[j]
            } else {
                0.0
            }
        })
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.sup.iter().zip(&self.sub).all(|(a, b)| (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0))
    }

    /// Largest entrywise difference to another sector matrix of the same shape.
    pub fn max_deviation(&self, other: &SectorMatrix) -> f64 {
        let f = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        f(&self.diag, &other.diag).max(f(&self.sup, &other.sup)).max(f(&self.sub, &other.sub))
    }
}

/// Sector matrix from the closed-form element expressions.
pub fn sector_tridiagonal(model: &PerturbativeModel, q: i64) -> Result<SectorMatrix> {
    model.check_sector(q)?;
    let ns = sector_ns(model.spin, q)?;
    let s = model.spin.s();
    let qf = q as f64;
    let (ga, gb) = model.gain_loss();
    let gc = model.gamma_weight();
    let up = |n: f64| (s - n) * (s + n + 1.0);
    let down = |n: f64| (s + n) * (s - n + 1.0);
    let diag = ns
        .iter()
        .map(|&n| {
            -ga / s * (up(n) + up(n - qf)) - gb / s * (down(n) + down(n - qf)) - gc * qf * qf / s
        })
        .collect();
    // M[i][i+1] = <rho_{n+1}, L1 rho_n> with n the column label.
    let sup = ns[1..].iter().map(|&n| 2.0 * ga / s * (up(n) * up(n - qf)).max(0.0).sqrt()).collect();
    // M[i+1][i] = <rho_{n-1}, L1 rho_n>.
    let sub = ns[..ns.len() - 1].iter().map(|&n| 2.0 * gb / s * (down(n) * down(n - qf)).max(0.0).sqrt()).collect();
    Ok(SectorMatrix { q, ns, diag, sup, sub })
}

/// Sector matrix from Hilbert–Schmidt inner products `Tr[rho_m† L1(rho_n)]`
/// evaluated with z-basis matrix products.
pub fn sector_tridiagonal_direct(model: &PerturbativeModel, q: i64) -> Result<SectorMatrix> {
    model.check_sector(q)?;
    let basis = sector_basis(model.spin, q)?;
    let spec = model.model_spec(1.0)?;
    let size = basis.modes.len();
    let l1 = |rho: &Mat<c64>| {
        // Dissipative part only: the coherent part is removed by subtracting its action.
        let full = spec.rhs(rho);
        let h = spec.hamiltonian().matrix();
        linalg::add(&full, &linalg::scale(&linalg::commutator(h, rho), c64::new(0.0, 1.0)))
    };
    let hs = |a: &Mat<c64>, b: &Mat<c64>| crate::models::hs_inner(a, b);
    let images: Vec<Mat<c64>> = basis.modes.iter().map(l1).collect();
    let mut diag = Vec::with_capacity(size);
    let mut sup = Vec::with_capacity(size.saturating_sub(1));
    let mut sub = Vec::with_capacity(size.saturating_sub(1));
    for i in 0..size {
        diag.push(hs(&basis.modes[i], &images[i]).re);
        if i + 1 < size {
            sup.push(hs(&basis.modes[i], &images[i + 1]).re);
            sub.push(hs(&basis.modes[i + 1], &images[i]).re);
        }
    }
    Ok(SectorMatrix { q, ns: basis.ns, diag, sup, sub })
}

/// First-order corrections of one sector with bi-orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct FirstOrder {
    pub q: i64,
    /// Sorted descending; index = l.
    pub values: Vec<f64>,
    /// Right eigenvectors (columns) and left eigenvectors (rows) with
    /// `left * right = I`; `None` when the sector matrix is defective
    /// (an exceptional point), where only the values are meaningful.
    pub vectors: Option<(Mat<f64>, Mat<f64>)>,
}

pub fn first_order_corrections(m: &SectorMatrix) -> Result<FirstOrder> {
    let n = m.size();
    let symmetrizable = m.sup.iter().zip(&m.sub).all(|(a, b)| a * b > 0.0);
    let (values, vectors) = if symmetrizable {
        // D^{-1} M D is symmetric for delta_{i+1} = delta_i sqrt(sub_i / sup_i).
        let mut delta = vec![1.0f64; n];
        for i in 0..n.saturating_sub(1) {
            delta[i + 1] = delta[i] * (m.sub[i] / m.sup[i]).sqrt();
        }
        let j = Mat::<f64>::from_fn(n, n, |r, c| {
            if r == c {
                m.diag[r]
            } else if c == r + 1 {
                (m.sup[r] * m.sub[r]).sqrt()
            } else if r == c + 1 {
                (m.sup[c] * m.sub[c]).sqrt()
            } else {
                0.0
            }
        });
        let evd = j
            .self_adjoint_eigen(faer::Side::Lower)
            .map_err(|_| Error::EigenSolver { dim: n, max_entry: f64::NAN })?;
        let vals: Vec<f64> = (0..n).map(|i| evd.S()[i]).collect();
        let v = evd.U();
        let right = Mat::<f64>::from_fn(n, n, |r, c| delta[r] * v[(r, c)]);
        let left = Mat::<f64>::from_fn(n, n, |r, c| v[(c, r)] / delta[c]);
        (vals, Some((right, left)))
    } else {
        let dense = m.to_dense();
        let cm = Mat::<c64>::from_fn(n, n, |r, c| c64::new(dense[(r, c)], 0.0));
        let (vals, vecs) = linalg::eigen(&cm)?;
        let scale = m.diag.iter().fold(1.0f64, |a, b| a.max(b.abs()));
        if vals.iter().any(|v| v.im.abs() > 1e-9 * scale) {
            return Err(Error::Numerical(format!("complex first-order correction in sector {}", m.q)));
        }
        let pair = linalg::inverse(&vecs).ok().map(|inv| {
            let right = Mat::<f64>::from_fn(n, n, |r, c| vecs[(r, c)].re);
            let left = Mat::<f64>::from_fn(n, n, |r, c| inv[(r, c)].re);
            (right, left)
        });
        (vals.iter().map(|v| v.re).collect(), pair)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    Ok(FirstOrder {
        q: m.q,
        values: order.iter().map(|&i| values[i]).collect(),
        vectors: vectors.map(|(right, left)| {
            (Mat::from_fn(n, n, |r, c| right[(r, order[c])]), Mat::from_fn(n, n, |r, c| left[(order[r], c)]))
        }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRow {
    pub q: i64,
    pub l: usize,
    pub first_order: f64,
    pub second_order: Option<c64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionTable {
    pub spin: SpinSpace,
    pub omega: f64,
    pub rows: Vec<CorrectionRow>,
}

impl CorrectionTable {
    pub const CSV_HEADER: &'static str = "S,q,l,first_order,second_order_re,second_order_im";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let (re, im) = r.second_order.map_or((f64::NAN, f64::NAN), |c| (c.re, c.im));
            out.push_str(&format!(
                "{:e},{},{},{:e},{:e},{:e}\n",
                self.spin.s(),
                r.q,
                r.l,
                r.first_order,
                re,
                im
            ));
        }
        out
    }

    pub fn sector(&self, q: i64) -> impl Iterator<Item = &CorrectionRow> {
        self.rows.iter().filter(move |r| r.q == q)
    }

    /// Second differences of Im of the second-order corrections along l in sector q.
    pub fn second_differences_im(&self, q: i64) -> Vec<f64> {
        let im: Vec<f64> = self.sector(q).filter_map(|r| r.second_order.map(|c| c.im)).collect();
        im.windows(3).map(|w| w[2] - 2.0 * w[1] + w[0]).collect()
    }
}

/// All sectors q = -2S..2S.
pub fn all_sectors(spin: SpinSpace) -> Vec<i64> {
    let t = spin.two_s() as i64;
    (-t..=t).collect()
}

/// First-order corrections for the given sectors (no second order).
pub fn first_order_table(model: &PerturbativeModel, sectors: &[i64], exec: Execution) -> Result<CorrectionTable> {
    let per: Vec<FirstOrder> =
        exec.try_map(sectors, |&q| sector_tridiagonal(model, q).and_then(|m| first_order_corrections(&m)))?;
    let rows = per
        .iter()
        .flat_map(|f| {
            f.values.iter().enumerate().map(move |(l, &v)| CorrectionRow { q: f.q, l, first_order: v, second_order: None })
        })
        .collect();
    Ok(CorrectionTable { spin: model.spin, omega: model.omega, rows })
}

/// First- and second-order corrections for the given sectors:
/// `lambda2_{q,i} = sum_{k != q} w_i^T L1[q,k] L1[k,q] u_i / (lambda0_q - lambda0_k)`.
pub fn second_order_corrections(
    model: &PerturbativeModel,
    sectors: &[i64],
    exec: Execution,
) -> Result<CorrectionTable> {
    for &q in sectors {
        model.check_sector(q)?;
    }
    let l1 = model.l1_x_basis()?;
    let spin = model.spin;
    let n = l1.dim();
    let per: Vec<Vec<CorrectionRow>> = exec.try_map(sectors, |&q| -> Result<Vec<CorrectionRow>> {
        let m = sector_tridiagonal(model, q)?;
        let fo = first_order_corrections(&m)?;
        let (right, left) = fo.vectors.as_ref().ok_or_else(|| {
            Error::Numerical(format!("sector {q} is defective; second order is undefined at an exceptional point"))
        })?;
        let idx: Vec<usize> = m.ns.iter().map(|&nn| vec_index(spin, nn, nn - q as f64)).collect();
        let lq = model.lambda0(q);
        let mut rows = Vec::with_capacity(fo.values.len());
        for (l, &v1) in fo.values.iter().enumerate() {
            let mut u = vec![ZERO; n];
            let mut w = vec![ZERO; n];
            for (pos, &r) in idx.iter().enumerate() {
                u[r] = c64::new(right[(pos, l)], 0.0);
                w[r] = c64::new(left[(l, pos)], 0.0);
            }
            let out = l1.mul_vec(&u);
            let inn = l1.tmul_vec(&w);
            let mut acc = ZERO;
            for r in 0..n {
                let k = sector_of(spin, r);
                if k == q || (out[r] == ZERO && inn[r] == ZERO) {
                    continue;
                }
                let den = lq - model.lambda0(k);
                if den.norm() <= 1e-14 * model.omega.abs().max(1.0) {
                    if (inn[r] * out[r]).norm() > 0.0 {
                        return Err(Error::DegenerateDenominator { q, k });
                    }
                    continue;
                }
                acc += inn[r] * out[r] / den;
            }
            rows.push(CorrectionRow { q, l, first_order: v1, second_order: Some(acc) });
        }
        Ok(rows)
    })?;
    Ok(CorrectionTable { spin, omega: model.omega, rows: per.into_iter().flatten().collect() })
}

/// Predicted eigenvalue of mode (q, l) at strength kappa.
fn predict(model: &PerturbativeModel, row: &CorrectionRow, kappa: f64, second: bool) -> c64 {
    let mut v = model.lambda0(row.q) + kappa * row.first_order;
    if second {
        if let Some(c) = row.second_order {
            v += c * (kappa * kappa);
        }
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorScalingReport {
    pub kappas: Vec<f64>,
    /// Max over tracked modes of |lambda_full - lambda_predicted|, per kappa.
    pub max_error: Vec<f64>,
    /// Per kappa: whether any tracked mode had a nearest/second-nearest distance ratio < 2.
    pub ambiguous: Vec<bool>,
    /// Log-log slope of max_error versus kappa over kappas with nonzero error.
    pub slope: Option<f64>,
    pub second_order: bool,
    pub max_l: usize,
}

/// Compares perturbative predictions for modes with l <= max_l to the full spectrum.
pub fn perturbation_vs_exact(
    model: &PerturbativeModel,
    kappas: &[f64],
    max_l: usize,
    second_order: bool,
    exec: Execution,
) -> Result<ErrorScalingReport> {
    let sectors = all_sectors(model.spin);
    let table = if second_order {
        second_order_corrections(model, &sectors, exec)?
    } else {
        first_order_table(model, &sectors, exec)?
    };
    let tracked: Vec<CorrectionRow> = table.rows.iter().copied().filter(|r| r.l <= max_l).collect();
    let results: Vec<(f64, bool)> = exec.try_map(kappas, |&kappa| -> Result<(f64, bool)> {
        let full = if kappa == 0.0 {
            // Purely coherent: the spectrum is exactly -i omega q with multiplicity 2S+1-|q|.
            sectors
                .iter()
                .flat_map(|&q| std::iter::repeat(model.lambda0(q)).take(model.spin.dim() - q.unsigned_abs() as usize))
                .collect()
        } else {
            linalg::eigenvalues(&Liouvillian::new(model.model_spec(kappa)?).dense()?)?
        };
        let preds: Vec<c64> = tracked.iter().map(|r| predict(model, r, kappa, second_order)).collect();
        let mut ambiguous = false;
        for p in &preds {
            let mut d: Vec<f64> = full.iter().map(|f| (f - p).norm()).collect();
            d.sort_by(f64::total_cmp);
            if d.len() > 1 && d[1] < 2.0 * d[0] {
                ambiguous = true;
            }
        }
        Ok((greedy_match_error(&preds, &full), ambiguous))
    })?;
    let max_error: Vec<f64> = results.iter().map(|r| r.0).collect();
    let ambiguous = results.iter().map(|r| r.1).collect();
    let pts: Vec<(f64, f64)> = kappas
        .iter()
        .zip(&max_error)
        .filter(|(k, e)| **k > 0.0 && **e > 0.0)
        .map(|(k, e)| (k.ln(), e.ln()))
        .collect();
    let slope = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    } else {
        None
    };
    Ok(ErrorScalingReport { kappas: kappas.to_vec(), max_error, ambiguous, slope, second_order, max_l })
}

/// Greedy one-to-one matching of predictions to targets; returns the worst distance.
fn greedy_match_error(preds: &[c64], targets: &[c64]) -> f64 {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(preds.len() * targets.len());
    for (i, p) in preds.iter().enumerate() {
        for (j, t) in targets.iter().enumerate() {
            pairs.push(((p - t).norm(), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_p = vec![false; preds.len()];
    let mut used_t = vec![false; targets.len()];
    let mut worst: f64 = 0.0;
    for (d, i, j) in pairs {
        if used_p[i] || used_t[j] {
            continue;
        }
        used_p[i] = true;
        used_t[j] = true;
        worst = worst.max(d);
    }
    worst
}
