//! The five model families and their closed-form oracles.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::{DensityMatrix, Dissipator, ModelSpec};
use crate::linalg::{self, c64, I, ONE};
use crate::spin::{
    embed_a, embed_b, parity_reflection, spin_operators, swap_parity, x_ladder, Basis, Operator, Space,
    SpinSpace,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelFamily {
    #[serde(rename = "one-spin-btc")]
    OneSpinBtc,
    #[serde(rename = "generalized")]
    Generalized,
    #[serde(rename = "one-spin-pt")]
    OneSpinPt,
    #[serde(rename = "class")]
    Class,
    #[serde(rename = "two-spin")]
    TwoSpin,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 5] = [
        ModelFamily::OneSpinBtc,
        ModelFamily::Generalized,
        ModelFamily::OneSpinPt,
        ModelFamily::Class,
        ModelFamily::TwoSpin,
    ];

    pub fn id(self) -> &'static str {
        match self {
            ModelFamily::OneSpinBtc => "one-spin-btc",
            ModelFamily::Generalized => "generalized",
            ModelFamily::OneSpinPt => "one-spin-pt",
            ModelFamily::Class => "class",
            ModelFamily::TwoSpin => "two-spin",
        }
    }

    /// Parameter names accepted by this family (besides `S`).
    pub fn parameter_names(self) -> &'static [&'static str] {
        match self {
            ModelFamily::OneSpinBtc => &["g", "kappa"],
            ModelFamily::Generalized => &["gz", "gx", "pz", "px", "kappa_minus", "kappa_plus"],
            ModelFamily::OneSpinPt => &["g", "kappa", "p"],
            ModelFamily::Class => &["g", "kappa", "dissipators"],
            ModelFamily::TwoSpin => &["g", "gamma_gain", "gamma_loss"],
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelFamily::ALL.into_iter().find(|m| m.id() == s).ok_or_else(|| Error::InvalidParameter {
            name: "model",
            reason: format!(
                "unknown model `{s}` (expected one of: {})",
                ModelFamily::ALL.map(|m| m.id()).join(", ")
            ),
        })
    }
}

fn check_rate(name: &'static str, v: f64) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::InvalidParameter { name, reason: format!("must be finite and >= 0, got {v}") });
    }
    Ok(())
}

fn check_finite(name: &'static str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::InvalidParameter { name, reason: format!("must be finite, got {v}") });
    }
    Ok(())
}

/// H = 2g Sx, dissipator (kappa/S) D[S-].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneSpinBtcParams {
    pub spin: SpinSpace,
    pub g: f64,
    pub kappa: f64,
}

/// H = S (gz (Sz/S)^pz + gx (Sx/S)^px), dissipators (kappa_-/S) D[S-] and (kappa_+/S) D[S+].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedParams {
    pub spin: SpinSpace,
    pub gz: f64,
    pub gx: f64,
    pub pz: u32,
    pub px: u32,
    pub kappa_minus: f64,
    pub kappa_plus: f64,
}

/// H = g Sx, dissipators (kappa(1+p)/S) D[Sx^+] and (kappa(1-p)/S) D[Sx^-].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneSpinPtParams {
    pub spin: SpinSpace,
    pub g: f64,
    pub kappa: f64,
    pub p: f64,
}

/// Coefficients of `L = alpha Sx^+ + beta Sx^- + gamma Sx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassTriple {
    pub alpha: c64,
    pub beta: c64,
    pub gamma: c64,
}

impl ClassTriple {
    pub fn new(alpha: c64, beta: c64, gamma: c64) -> Self {
        Self { alpha, beta, gamma }
    }

    /// The triple of `e^{i theta} L`.
    pub fn with_phase(&self, theta: f64) -> Self {
        let ph = c64::from_polar(1.0, theta);
        Self { alpha: self.alpha * ph, beta: self.beta * ph, gamma: self.gamma * ph }
    }

    /// The partner operator `-conj(beta) Sx^+ - conj(alpha) Sx^- + conj(gamma) Sx`,
    /// i.e. `P L† P⁻¹` under the reflection parity.
    pub fn pt_partner(&self) -> Self {
        Self { alpha: -self.beta.conj(), beta: -self.alpha.conj(), gamma: self.gamma.conj() }
    }
}

/// H = g Sx, jumps `L_mu = alpha Sx^+ + beta Sx^- + gamma Sx` each at rate kappa/S.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassParams {
    pub spin: SpinSpace,
    pub g: f64,
    pub kappa: f64,
    pub dissipators: Vec<ClassTriple>,
}

/// H = g (S+,A S-,B + h.c.)/(2S), gain (Gamma_g/2S) D[S+,A], loss (Gamma_l/2S) D[S-,B].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSpinParams {
    pub spin: SpinSpace,
    pub g: f64,
    pub gamma_gain: f64,
    pub gamma_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelParams {
    OneSpinBtc(OneSpinBtcParams),
    Generalized(GeneralizedParams),
    OneSpinPt(OneSpinPtParams),
    Class(ClassParams),
    TwoSpin(TwoSpinParams),
}

impl ModelParams {
    pub fn family(&self) -> ModelFamily {
        match self {
            ModelParams::OneSpinBtc(_) => ModelFamily::OneSpinBtc,
            ModelParams::Generalized(_) => ModelFamily::Generalized,
            ModelParams::OneSpinPt(_) => ModelFamily::OneSpinPt,
            ModelParams::Class(_) => ModelFamily::Class,
            ModelParams::TwoSpin(_) => ModelFamily::TwoSpin,
        }
    }

    pub fn spin(&self) -> SpinSpace {
        match self {
            ModelParams::OneSpinBtc(p) => p.spin,
            ModelParams::Generalized(p) => p.spin,
            ModelParams::OneSpinPt(p) => p.spin,
            ModelParams::Class(p) => p.spin,
            ModelParams::TwoSpin(p) => p.spin,
        }
    }

    pub fn build(&self) -> Result<ModelSpec> {
        match self {
            ModelParams::OneSpinBtc(p) => one_spin_btc(p),
            ModelParams::Generalized(p) => generalized_one_spin(p),
            ModelParams::OneSpinPt(p) => one_spin_pt(p),
            ModelParams::Class(p) => general_one_spin_class(p),
            ModelParams::TwoSpin(p) => two_spin_pt(p),
        }
    }
}

pub fn one_spin_btc(p: &OneSpinBtcParams) -> Result<ModelSpec> {
    check_finite("g", p.g)?;
    check_rate("kappa", p.kappa)?;
    let ops = spin_operators(p.spin);
    let s = p.spin.s();
    ModelSpec::new(
        format!("one-spin-btc({}, g={}, kappa={})", p.spin, p.g, p.kappa),
        ops.sx.scaled(2.0 * p.g),
        vec![Dissipator::new(p.kappa / s, ops.sminus)],
        Some(parity_reflection(p.spin)),
    )
}

/// Closed-form stationary state of the one-spin BTC model:
/// `rho ∝ A A†` with `A = sum_{n=0}^{2S} (i (kappa/g) S-/S)^n`.
pub fn one_spin_btc_exact_steady(p: &OneSpinBtcParams) -> Result<DensityMatrix> {
    check_rate("kappa", p.kappa)?;
    if !(p.g.is_finite() && p.g != 0.0) {
        return Err(Error::InvalidParameter { name: "g", reason: "closed form requires g != 0".into() });
    }
    let s = p.spin.s();
    let d = p.spin.dim();
    let x = linalg::scale(spin_operators(p.spin).sminus.matrix(), I * (p.kappa / (p.g * s)));
    // Horner evaluation of the finite geometric series (x is nilpotent of order 2S+1).
    let id = linalg::identity(d);
    let mut a = id.clone();
    for _ in 0..p.spin.two_s() {
        a = linalg::add(&id, &(&x * &a));
    }
    let rho = &a * &linalg::dagger(&a);
    let tr = linalg::trace(&rho);
    let rho = linalg::scale(&rho, ONE / tr);
    let rho = linalg::scale(&linalg::add(&rho, &linalg::dagger(&rho)), c64::new(0.5, 0.0));
    DensityMatrix::with_basis(Space::Single(p.spin), Basis::Z, rho)
}

pub fn generalized_one_spin(p: &GeneralizedParams) -> Result<ModelSpec> {
    check_finite("gz", p.gz)?;
    check_finite("gx", p.gx)?;
    check_rate("kappa_minus", p.kappa_minus)?;
    check_rate("kappa_plus", p.kappa_plus)?;
    if p.pz == 0 || p.px == 0 {
        return Err(Error::InvalidParameter { name: "pz/px", reason: "powers must be positive integers".into() });
    }
    let ops = spin_operators(p.spin);
    let s = p.spin.s();
    let sz_n = ops.sz.scaled(1.0 / s).pow(p.pz);
    let sx_n = ops.sx.scaled(1.0 / s).pow(p.px);
    let h = sz_n.scaled(s * p.gz).add(&sx_n.scaled(s * p.gx))?;
    let h = h.add(&h.dagger())?.scaled(0.5);
    ModelSpec::new(
        format!(
            "generalized({}, gz={}, gx={}, pz={}, px={}, kappa-={}, kappa+={})",
            p.spin, p.gz, p.gx, p.pz, p.px, p.kappa_minus, p.kappa_plus
        ),
        h,
        vec![Dissipator::new(p.kappa_minus / s, ops.sminus), Dissipator::new(p.kappa_plus / s, ops.splus)],
        Some(parity_reflection(p.spin)),
    )
}

pub fn one_spin_pt(p: &OneSpinPtParams) -> Result<ModelSpec> {
    check_finite("g", p.g)?;
    check_rate("kappa", p.kappa)?;
    if !(p.p.is_finite() && p.p.abs() <= 1.0) {
        return Err(Error::InvalidParameter { name: "p", reason: format!("|p| must be <= 1, got {}", p.p) });
    }
    let ops = spin_operators(p.spin);
    let xl = x_ladder(p.spin);
    let s = p.spin.s();
    ModelSpec::new(
        format!("one-spin-pt({}, g={}, kappa={}, p={})", p.spin, p.g, p.kappa, p.p),
        ops.sx.scaled(p.g),
        vec![
            Dissipator::new(p.kappa * (1.0 + p.p) / s, xl.plus),
            Dissipator::new(p.kappa * (1.0 - p.p) / s, xl.minus),
        ],
        Some(parity_reflection(p.spin)),
    )
}

/// An eigenvalue of the p = 0 one-spin PT model with its (l, q) label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledEigenvalue {
    pub l: u32,
    pub q: i64,
    pub value: c64,
}

/// `lambda_{l,q} = i g q - (2 kappa / S) (|q| + l (1 + l + 2|q|))` for
/// q = -2S..2S and l = 0..2S-|q|, which enumerates all (2S+1)² eigenvalues.
pub fn one_spin_pt_exact_spectrum(p: &OneSpinPtParams) -> Result<Vec<LabeledEigenvalue>> {
    if p.p != 0.0 {
        return Err(Error::InvalidParameter { name: "p", reason: "the closed-form spectrum requires p = 0".into() });
    }
    check_finite("g", p.g)?;
    check_rate("kappa", p.kappa)?;
    let two_s = p.spin.two_s() as i64;
    let s = p.spin.s();
    let mut out = Vec::with_capacity(p.spin.dim() * p.spin.dim());
    for q in -two_s..=two_s {
        let aq = q.unsigned_abs() as f64;
        for l in 0..=(two_s - q.abs()) as u32 {
            let lf = l as f64;
            let re = -(2.0 * p.kappa / s) * (aq + lf * (1.0 + lf + 2.0 * aq));
            out.push(LabeledEigenvalue { l, q, value: c64::new(re, p.g * q as f64) });
        }
    }
    Ok(out)
}

pub fn general_one_spin_class(p: &ClassParams) -> Result<ModelSpec> {
    check_finite("g", p.g)?;
    check_rate("kappa", p.kappa)?;
    if p.dissipators.is_empty() {
        return Err(Error::InvalidParameter { name: "dissipators", reason: "at least one triple is required".into() });
    }
    let ops = spin_operators(p.spin);
    let xl = x_ladder(p.spin);
    let s = p.spin.s();
    let mut diss = Vec::with_capacity(p.dissipators.len());
    for t in &p.dissipators {
        let l = xl
            .plus
            .scaled_c(t.alpha)
            .add(&xl.minus.scaled_c(t.beta))?
            .add(&ops.sx.scaled_c(t.gamma))?;
        diss.push(Dissipator::new(p.kappa / s, l));
    }
    ModelSpec::new(
        format!("class({}, g={}, kappa={}, n_jumps={})", p.spin, p.g, p.kappa, p.dissipators.len()),
        ops.sx.scaled(p.g),
        diss,
        Some(parity_reflection(p.spin)),
    )
}

/// Total gain sum |alpha|² and loss sum |beta|².
pub fn gain_loss(triples: &[ClassTriple]) -> (f64, f64) {
    triples.iter().fold((0.0, 0.0), |(a, b), t| (a + t.alpha.norm_sqr(), b + t.beta.norm_sqr()))
}

/// Whether total gain equals total loss (relative tolerance 1e-12).
pub fn is_balanced(p: &ClassParams) -> bool {
    let (a, b) = gain_loss(&p.dissipators);
    (a - b).abs() <= 1e-12 * (a + b)
}

/// Coefficients (alpha, beta, gamma) with `op = alpha Sx^+ + beta Sx^- + gamma Sx`.
/// The three operators are Hilbert–Schmidt orthogonal, so each coefficient is a projection;
/// operators outside their span are rejected.
pub fn x_ladder_decomposition(op: &Operator) -> Result<ClassTriple> {
    let spin = match op.space() {
        Space::Single(s) => s,
        Space::Pair(_) => {
            return Err(Error::InvalidParameter { name: "op", reason: "single-spin operator expected".into() })
        }
    };
    let ops = spin_operators(spin);
    let xl = x_ladder(spin);
    let proj = |b: &Operator| {
        let num = hs_inner(b.matrix(), op.matrix());
        num / hs_inner(b.matrix(), b.matrix())
    };
    let t = ClassTriple::new(proj(&xl.plus), proj(&xl.minus), proj(&ops.sx));
    let rebuilt = xl.plus.scaled_c(t.alpha).add(&xl.minus.scaled_c(t.beta))?.add(&ops.sx.scaled_c(t.gamma))?;
    let resid = rebuilt.sub(op)?.frobenius();
    if resid > 1e-10 * op.frobenius().max(1.0) {
        return Err(Error::InvalidParameter {
            name: "op",
            reason: format!("operator is not a combination of Sx^+, Sx^-, Sx (residual {resid:.3e})"),
        });
    }
    Ok(t)
}

/// Tr[A† B].
pub(crate) fn hs_inner(a: &faer::Mat<c64>, b: &faer::Mat<c64>) -> c64 {
    let mut acc = linalg::ZERO;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc += a[(i, j)].conj() * b[(i, j)];
        }
    }
    acc
}

/// The spin-A and spin-B operators of the two-spin model.
#[derive(Debug, Clone)]
pub struct TwoSpinOperators {
    pub splus_a: Operator,
    pub sminus_a: Operator,
    pub splus_b: Operator,
    pub sminus_b: Operator,
    pub sz_a: Operator,
    pub sz_b: Operator,
}

pub fn two_spin_operators(spin: SpinSpace) -> Result<TwoSpinOperators> {
    let ops = spin_operators(spin);
    Ok(TwoSpinOperators {
        splus_a: embed_a(&ops.splus)?,
        sminus_a: embed_a(&ops.sminus)?,
        splus_b: embed_b(&ops.splus)?,
        sminus_b: embed_b(&ops.sminus)?,
        sz_a: embed_a(&ops.sz)?,
        sz_b: embed_b(&ops.sz)?,
    })
}

pub fn two_spin_pt(p: &TwoSpinParams) -> Result<ModelSpec> {
    check_finite("g", p.g)?;
    check_rate("gamma_gain", p.gamma_gain)?;
    check_rate("gamma_loss", p.gamma_loss)?;
    let t = two_spin_operators(p.spin)?;
    let s = p.spin.s();
    let hop = t.splus_a.mul(&t.sminus_b)?;
    let h = hop.add(&hop.dagger())?.scaled(p.g / (2.0 * s));
    ModelSpec::new(
        format!("two-spin({}, g={}, gain={}, loss={})", p.spin, p.g, p.gamma_gain, p.gamma_loss),
        h,
        vec![
            Dissipator::new(p.gamma_gain / (2.0 * s), t.splus_a),
            Dissipator::new(p.gamma_loss / (2.0 * s), t.sminus_b),
        ],
        Some(swap_parity(p.spin)),
    )
}

/// Large-S observables of the balanced two-spin model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSpinInfinite {
    pub delta: f64,
    pub purity: f64,
    /// `sqrt(g² - Gamma²)` in the PT phase, 0 in the broken phase.
    pub imag_base: f64,
}

pub fn two_spin_infinite_s(g: f64, gamma: f64) -> Result<TwoSpinInfinite> {
    check_rate("g", g)?;
    check_rate("gamma", gamma)?;
    if (gamma - g).abs() <= 1e-12 * g.max(gamma) {
        return Err(Error::ExceptionalPoint(g));
    }
    if gamma < g {
        Ok(TwoSpinInfinite { delta: 0.0, purity: 0.0, imag_base: (g * g - gamma * gamma).sqrt() })
    } else {
        let v = 1.0 - (g / gamma).powi(2);
        Ok(TwoSpinInfinite { delta: v, purity: v, imag_base: 0.0 })
    }
}
