//! Monte-Carlo wave-function unraveling of the master equation.
//!
//! With the factor-2 dissipator convention the jump operators are `sqrt(2 gamma) L`
//! and the effective Hamiltonian is `H - i sum gamma L†L`. A jump occurs when the
//! squared norm of the unnormalized state falls to a uniform random threshold; the
//! crossing time is refined by a false-position search.

use std::collections::HashMap;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::lindblad::ModelSpec;
use crate::linalg::{self, c64, ZERO};
use crate::spin::Operator;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryOptions {
    /// The jump-time search stops once the bracketing interval is shorter than
    /// this, or once the norm is within 1e-13 (relative) of the threshold.
    pub time_tol: f64,
    /// Squared norms below this abort the run.
    pub norm_floor: f64,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self { time_tol: 1e-10, norm_floor: 1e-14 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub channel: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRun {
    pub seed: u64,
    pub t_grid: Vec<f64>,
    /// `samples[k][j]` = Re <psi(t_k)| O_j |psi(t_k)>.
    pub samples: Vec<Vec<f64>>,
    pub jump_log: Vec<Jump>,
    /// Squared norm of the unnormalized state at each grid time, relative to its
    /// value after the last jump or renormalization. Never exceeds 1, since the
    /// no-jump evolution only loses norm.
    pub grid_norms: Vec<f64>,
}

/// `H - i sum_i gamma_i L_i† L_i`.
pub fn effective_hamiltonian(model: &ModelSpec) -> Mat<c64> {
    let mut h = model.hamiltonian().matrix().clone();
    for d in model.dissipators() {
        let l = d.op.matrix();
        let ldl = &linalg::dagger(l) * l;
        h = linalg::sub(&h, &linalg::scale(&ldl, c64::new(0.0, d.rate)));
    }
    h
}

fn norm_sqr(v: &[c64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

fn expect_re(psi: &[c64], op: &Mat<c64>, norm2: f64) -> f64 {
    let opsi = linalg::mat_vec(op, psi);
    psi.iter().zip(&opsi).map(|(a, b)| a.conj() * b).sum::<c64>().re / norm2
}

struct Propagator {
    /// -i H_eff
    gen: Mat<c64>,
    gen_norm1: f64,
    cache: HashMap<u64, Mat<c64>>,
}

impl Propagator {
    fn new(h_eff: &Mat<c64>) -> Self {
        let gen = linalg::scale(h_eff, c64::new(0.0, -1.0));
        let gen_norm1 = (0..gen.ncols())
            .map(|j| (0..gen.nrows()).map(|i| gen[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max);
        Self { gen, gen_norm1, cache: HashMap::new() }
    }

    fn step(&self, tau: f64) -> Result<Mat<c64>> {
        linalg::expm(&linalg::scale(&self.gen, c64::new(tau, 0.0)))
    }

    /// `exp(tau gen) v` by truncated Taylor series on sub-steps with
    /// `tau ||gen||_1 / steps <= 1`; much cheaper than a dense exponential for
    /// the one-off evaluations of the jump-time search.
    fn apply(&self, tau: f64, v: &[c64]) -> Vec<c64> {
        let steps = (tau * self.gen_norm1).ceil().max(1.0) as usize;
        let h = tau / steps as f64;
        let mut out = v.to_vec();
        for _ in 0..steps {
            let mut term = out.clone();
            let mut k = 1.0;
            loop {
                term = linalg::mat_vec(&self.gen, &term);
                let f = h / k;
                term.iter_mut().for_each(|x| *x *= f);
                out.iter_mut().zip(&term).for_each(|(o, t)| *o += t);
                if norm_sqr(&term) <= 1e-34 * norm_sqr(&out) || k > 60.0 {
                    break;
                }
                k += 1.0;
            }
        }
        out
    }

    fn cached(&mut self, tau: f64) -> Result<&Mat<c64>> {
        let key = tau.to_bits();
        if !self.cache.contains_key(&key) {
            let p = self.step(tau)?;
            self.cache.insert(key, p);
        }
        Ok(&self.cache[&key])
    }
}

pub fn run_trajectory(
    model: &ModelSpec,
    psi0: &[c64],
    t_grid: &[f64],
    observables: &[Operator],
    seed: u64,
) -> Result<TrajectoryRun> {
    run_trajectory_with(model, psi0, t_grid, observables, seed, TrajectoryOptions::default())
}

pub fn run_trajectory_with(
    model: &ModelSpec,
    psi0: &[c64],
    t_grid: &[f64],
    observables: &[Operator],
    seed: u64,
    opts: TrajectoryOptions,
) -> Result<TrajectoryRun> {
    let d = model.dim();
    if psi0.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: psi0.len() });
    }
    if (norm_sqr(psi0) - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidParameter { name: "psi0", reason: "initial state must be normalized".into() });
    }
    for o in observables {
        if o.space() != model.space() {
            return Err(Error::DimensionMismatch { expected: d, found: o.dim() });
        }
    }
    if t_grid.is_empty() || t_grid[0] < 0.0 || t_grid.windows(2).any(|w| w[1] <= w[0]) || t_grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidTimeGrid("grid must be non-empty, non-negative and strictly increasing".into()));
    }

    let jumps: Vec<Mat<c64>> = model
        .dissipators()
        .iter()
        .filter(|dd| dd.rate > 0.0)
        .map(|dd| linalg::scale(dd.op.matrix(), c64::new((2.0 * dd.rate).sqrt(), 0.0)))
        .collect();
    let channel_ids: Vec<usize> =
        model.dissipators().iter().enumerate().filter(|(_, dd)| dd.rate > 0.0).map(|(i, _)| i).collect();
    let mut prop = Propagator::new(&effective_hamiltonian(model));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut threshold: f64 = rng.random::<f64>();

    let mut psi = psi0.to_vec();
    let mut t = 0.0;
    let mut samples = Vec::with_capacity(t_grid.len());
    let mut jump_log = Vec::new();
    let mut grid_norms = Vec::with_capacity(t_grid.len());

    for &t_next in t_grid {
        // Advance from t to t_next, handling every jump on the way. Full grid
        // intervals reuse cached propagators; remainders after a jump do not.
        let mut whole_interval = true;
        while t < t_next {
            let dt = t_next - t;
            let candidate = if whole_interval {
                linalg::mat_vec(prop.cached(dt)?, &psi)
            } else {
                linalg::mat_vec(&prop.step(dt)?, &psi)
            };
            whole_interval = false;
            let n_end = norm_sqr(&candidate);
            if n_end > threshold || jumps.is_empty() {
                if n_end < opts.norm_floor {
                    return Err(Error::NormCollapse(t_next));
                }
                psi = candidate;
                t = t_next;
                break;
            }
            // The threshold is crossed in (t, t_next]. The log of the squared norm
            // is monotone in the elapsed time; locate the crossing with an
            // Illinois false-position search on it.
            let ln_thr = threshold.ln();
            let f = |x: &[c64]| norm_sqr(x).ln() - ln_thr;
            let (mut lo, mut hi) = (0.0, dt);
            let (mut f_lo, mut f_hi) = (f(&psi), f(&candidate));
            let mut at_jump = candidate;
            let mut side = 0i8;
            while hi - lo > opts.time_tol {
                let mut mid = hi - f_hi * (hi - lo) / (f_hi - f_lo);
                if !(mid > lo && mid < hi) {
                    mid = 0.5 * (lo + hi);
                }
                let trial = prop.apply(mid, &psi);
                let f_mid = f(&trial);
                if f_mid > 0.0 {
                    lo = mid;
                    f_lo = f_mid;
                    if side == -1 {
                        f_hi *= 0.5;
                    }
                    side = -1;
                } else {
                    hi = mid;
                    f_hi = f_mid;
                    at_jump = trial;
                    if side == 1 {
                        f_lo *= 0.5;
                    }
                    side = 1;
                    if f_mid > -1e-13 {
                        break;
                    }
                }
            }
            let tau = hi;
            if norm_sqr(&at_jump) < opts.norm_floor {
                return Err(Error::NormCollapse(t + tau));
            }
            let images: Vec<Vec<c64>> = jumps.iter().map(|c| linalg::mat_vec(c, &at_jump)).collect();
            let weights: Vec<f64> = images.iter().map(|v| norm_sqr(v)).collect();
            let total: f64 = weights.iter().sum();
            if total <= 0.0 {
                // Dark state at the crossing: no channel can fire; continue without jumping.
                psi = at_jump;
                t += tau;
                threshold = rng.random::<f64>() * norm_sqr(&psi);
                continue;
            }
            let pick = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut ch = weights.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                acc += w;
                if pick < acc {
                    ch = i;
                    break;
                }
            }
            let nrm = weights[ch].sqrt();
            psi = images[ch].iter().map(|x| x / nrm).collect();
            t += tau;
            jump_log.push(Jump { time: t, channel: channel_ids[ch] });
            threshold = rng.random::<f64>();
        }
        let n2 = norm_sqr(&psi);
        grid_norms.push(n2);
        samples.push(observables.iter().map(|o| expect_re(&psi, o.matrix(), n2)).collect());
        // Renormalize at grid points; the threshold is rescaled so the waiting-time
        // distribution is unaffected.
        let scale = n2.sqrt();
        for x in psi.iter_mut() {
            *x /= scale;
        }
        threshold /= n2;
    }
    Ok(TrajectoryRun { seed, t_grid: t_grid.to_vec(), samples, jump_log, grid_norms })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleAverage {
    pub t_grid: Vec<f64>,
    pub n_traj: usize,
    pub mean: Vec<f64>,
    /// Standard error of the mean; absent for a single trajectory.
    pub stderr: Option<Vec<f64>>,
}

impl EnsembleAverage {
    pub const CSV_HEADER: &'static str = "t,mean,stderr,n_traj";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for (k, t) in self.t_grid.iter().enumerate() {
            let se = self.stderr.as_ref().map_or(f64::NAN, |s| s[k]);
            out.push_str(&format!("{:e},{:e},{:e},{}\n", t, self.mean[k], se, self.n_traj));
        }
        out
    }
}

/// Mean and standard error of `<observable>` over trajectories seeded
/// `base_seed + index`. Sums run in index order, so results are bit-identical
/// for any execution mode.
pub fn ensemble_average(
    model: &ModelSpec,
    psi0: &[c64],
    t_grid: &[f64],
    observable: &Operator,
    n_traj: usize,
    base_seed: u64,
    exec: Execution,
) -> Result<EnsembleAverage> {
    if n_traj == 0 {
        return Err(Error::InvalidParameter { name: "n_traj", reason: "at least one trajectory is required".into() });
    }
    let obs = std::slice::from_ref(observable);
    let runs: Vec<Vec<f64>> = exec
        .map_range(n_traj, |i| {
            run_trajectory(model, psi0, t_grid, obs, base_seed.wrapping_add(i as u64))
                .map(|r| r.samples.into_iter().map(|s| s[0]).collect::<Vec<f64>>())
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let nt = t_grid.len();
    let n = n_traj as f64;
    let mut mean = vec![0.0; nt];
    for r in &runs {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let stderr = (n_traj > 1).then(|| {
        let mut var = vec![0.0; nt];
        for r in &runs {
            for k in 0..nt {
                var[k] += (r[k] - mean[k]).powi(2);
            }
        }
        var.iter().map(|v| (v / (n - 1.0) / n).sqrt()).collect()
    });
    Ok(EnsembleAverage { t_grid: t_grid.to_vec(), n_traj, mean, stderr })
}

/// Normalized z-basis state |index>.
pub fn basis_vector(dim: usize, index: usize) -> Vec<c64> {
    let mut v = vec![ZERO; dim];
    v[index] = c64::new(1.0, 0.0);
    v
}
