//! Executes the tasks of a sweep. Grid points run on the core's worker pool;
//! rows are assembled in grid order, so output never depends on scheduling.

use std::time::Instant;

use serde_json::{json, Value};
use spinlind::diagnostics::{btc_detect, pt_residual_matrix, purity, q_pt, symmetry_delta, BtcOptions};
use spinlind::lindblad::{
    build_liouvillian, check_liouvillian_pt, evolve_expectations, expectation, spectrum_with, stationary_state_with,
    DensityMatrix, EvolveOptions, Liouvillian, ModelSpec, SpectrumOptions, StationaryOptions,
};
use spinlind::models::{
    ClassParams, GeneralizedParams, ModelFamily, ModelParams, OneSpinBtcParams, OneSpinPtParams, TwoSpinParams,
};
use spinlind::perturbation::{
    all_sectors, first_order_table, perturbation_vs_exact, second_order_corrections, PerturbativeModel,
};
use spinlind::spin::{embed_a, embed_b, spin_operators, Operator, Space, SpinSpace};
use spinlind::trajectory::{basis_vector, ensemble_average};
use spinlind::{c64, Execution};

use crate::config::{observable_axis, Figure, FigureKind, GridPoint, SweepConfig, Task};
use crate::error::WorkbenchError;
use crate::svg::{heatmap_svg, series_svg, Heatmap, Series, SeriesPlot, SeriesStyle};
use crate::table::{Cell, Table};

type Result<T> = std::result::Result<T, WorkbenchError>;

/// Everything a sweep produces, in deterministic order.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub tables: Vec<Table>,
    /// Structured results (file name, document).
    pub documents: Vec<(String, Value)>,
    /// Rendered figures (file name, SVG).
    pub figures: Vec<(String, String)>,
    /// Wall time per task in seconds.
    pub timings: Vec<(Task, f64)>,
}

impl Artifacts {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

struct Job<'a> {
    index: usize,
    point: &'a GridPoint,
    spin: SpinSpace,
}

struct Sweep<'a> {
    cfg: &'a SweepConfig,
    names: Vec<&'static str>,
    grid: Vec<GridPoint>,
    spins: Vec<SpinSpace>,
    exec: Execution,
}

pub fn execute(cfg: &SweepConfig) -> Result<Artifacts> {
    execute_with(cfg, Execution::default())
}

pub fn execute_with(cfg: &SweepConfig, exec: Execution) -> Result<Artifacts> {
    let sweep = Sweep { cfg, names: cfg.param_names(), grid: cfg.grid(), spins: cfg.spin_spaces(), exec };
    let mut out = Artifacts::default();
    for &task in &cfg.tasks {
        let start = Instant::now();
        match task {
            Task::Spectrum => out.tables.push(sweep.per_job(task, &["index", "re", "im"], Sweep::spectrum_rows)?),
            Task::Steady => {
                let cols: &[&str] = if cfg.model == ModelFamily::TwoSpin {
                    &["purity", "q_pt", "delta", "sz_a", "sz_b"]
                } else {
                    &["purity", "q_pt", "sz"]
                };
                out.tables.push(sweep.per_job(task, cols, Sweep::steady_rows)?);
            }
            Task::Dynamics => {
                let mut cols = vec!["t".to_string()];
                cols.extend(cfg.observables());
                out.tables.push(sweep.per_job_owned(task, cols, Sweep::dynamics_rows)?);
            }
            Task::Trajectory => {
                let mut cols = vec!["t".to_string()];
                for o in &cfg.observables() {
                    cols.push(format!("{o}_mean"));
                    cols.push(format!("{o}_stderr"));
                }
                out.tables.push(sweep.per_job_owned(task, cols, Sweep::trajectory_rows)?);
            }
            Task::Perturb => {
                let cols = ["q", "l", "first_order", "second_order_re", "second_order_im", "predicted_re", "predicted_im"];
                out.tables.push(sweep.per_job(task, &cols, Sweep::perturb_rows)?);
                if cfg.perturb.compare_kappas.is_some() {
                    let mut t = sweep.per_job(task, &["kappa", "max_error", "ambiguous", "slope"], Sweep::scaling_rows)?;
                    t.name = "perturb_scaling".into();
                    out.tables.push(t);
                }
            }
            Task::CheckPt => out.tables.push(sweep.per_job(task, &["residual", "symmetric"], Sweep::check_pt_rows)?),
            Task::BtcDetect => {
                let (table, doc) = sweep.btc_detect()?;
                out.tables.push(table);
                out.documents.push(("btc_detect.json".into(), doc));
            }
        }
        out.timings.push((task, start.elapsed().as_secs_f64()));
    }
    for f in &cfg.figures {
        let svg = sweep.figure(f, &out)?;
        out.figures.push((format!("{}.svg", f.name), svg));
    }
    Ok(out)
}

fn dense_cap(spin: SpinSpace, two_spin: bool) -> usize {
    let d = if two_spin { spin.dim() * spin.dim() } else { spin.dim() };
    (d * d).max(spinlind::lindblad::DEFAULT_DENSE_CAP)
}

impl<'a> Sweep<'a> {
    fn two_spin(&self) -> bool {
        self.cfg.model == ModelFamily::TwoSpin
    }

    fn value(&self, p: &GridPoint, name: &str) -> f64 {
        let i = self.names.iter().position(|n| *n == name).expect("parameter of this family");
        p.values[i]
    }

    fn params(&self, p: &GridPoint, spin: SpinSpace) -> ModelParams {
        let v = |n| self.value(p, n);
        match self.cfg.model {
            ModelFamily::OneSpinBtc => ModelParams::OneSpinBtc(OneSpinBtcParams { spin, g: v("g"), kappa: v("kappa") }),
            ModelFamily::Generalized => ModelParams::Generalized(GeneralizedParams {
                spin,
                gz: v("gz"),
                gx: v("gx"),
                pz: v("pz") as u32,
                px: v("px") as u32,
                kappa_minus: v("kappa_minus"),
                kappa_plus: v("kappa_plus"),
            }),
            ModelFamily::OneSpinPt => {
                ModelParams::OneSpinPt(OneSpinPtParams { spin, g: v("g"), kappa: v("kappa"), p: v("p") })
            }
            ModelFamily::Class => ModelParams::Class(ClassParams {
                spin,
                g: v("g"),
                kappa: v("kappa"),
                dissipators: self.cfg.triples(),
            }),
            ModelFamily::TwoSpin => ModelParams::TwoSpin(TwoSpinParams {
                spin,
                g: v("g"),
                gamma_gain: v("gamma_gain"),
                gamma_loss: v("gamma_loss"),
            }),
        }
    }

    fn model(&self, job: &Job) -> Result<ModelSpec> {
        Ok(self.params(job.point, job.spin).build()?)
    }

    fn liouvillian(&self, job: &Job) -> Result<Liouvillian> {
        Ok(build_liouvillian(&self.model(job)?))
    }

    fn jobs(&self) -> Vec<Job<'_>> {
        self.grid
            .iter()
            .flat_map(|p| self.spins.iter().map(move |&spin| (p, spin)))
            .enumerate()
            .map(|(index, (point, spin))| Job { index, point, spin })
            .collect()
    }

    fn prefix_columns(&self) -> Vec<String> {
        let mut cols = vec!["point".to_string(), "S".to_string()];
        cols.extend(self.names.iter().map(|n| n.to_string()));
        cols
    }

    fn prefix(&self, job: &Job) -> Vec<Cell> {
        let mut row = vec![Cell::from(job.point.index), Cell::from(job.spin.s())];
        row.extend(job.point.values.iter().map(|&v| Cell::from(v)));
        row
    }

    fn per_job(&self, task: Task, cols: &[&str], f: fn(&Self, &Job) -> Result<Vec<Vec<Cell>>>) -> Result<Table> {
        self.per_job_owned(task, cols.iter().map(|c| c.to_string()).collect(), f)
    }

    fn per_job_owned(
        &self,
        task: Task,
        cols: Vec<String>,
        f: fn(&Self, &Job) -> Result<Vec<Vec<Cell>>>,
    ) -> Result<Table> {
        let mut columns = self.prefix_columns();
        columns.extend(cols);
        let mut table = Table::new(task.file_stem(), columns);
        let jobs = self.jobs();
        let rows = self.exec.try_map(&jobs, |job| -> Result<Vec<Vec<Cell>>> {
            let prefix = self.prefix(job);
            Ok(f(self, job)?
                .into_iter()
                .map(|r| {
                    let mut full = prefix.clone();
                    full.extend(r);
                    full
                })
                .collect())
        })?;
        for r in rows.into_iter().flatten() {
            table.push(r);
        }
        Ok(table)
    }

    fn spectrum_rows(&self, job: &Job) -> Result<Vec<Vec<Cell>>> {
        let opts = SpectrumOptions { cap: dense_cap(job.spin, self.two_spin()), eigenmodes: false };
        let spec = spectrum_with(&self.liouvillian(job)?, opts)?;
        Ok(spec.eigenvalues().iter().enumerate().map(|(i, v)| vec![i.into(), v.re.into(), v.im.into()]).collect())
    }

    fn steady_state(&self, job: &Job) -> Result<(DensityMatrix, ModelSpec)> {
        let model = self.model(job)?;
        let opts = StationaryOptions { cap: dense_cap(job.spin, self.two_spin()), ..StationaryOptions::default() };
        Ok((stationary_state_with(&build_liouvillian(&model), opts)?, model))
    }

    fn steady_rows(&self, job: &Job) -> Result<Vec<Vec<Cell>>> {
        let (rho, model) = self.steady_state(job)?;
        let parity = model.parity().ok_or(spinlind::Error::MissingParity)?;
        let mut row = vec![purity(&rho).into(), q_pt(&rho, parity)?.into()];
        if self.two_spin() {
            row.push(symmetry_delta(&rho)?.into());
            for name in ["sz_a", "sz_b"] {
                row.push(expectation(&rho, &self.observable(name, job.spin)?)?.re.into());
            }
        } else {
            row.push(expectation(&rho, &self.observable("sz", job.spin)?)?.re.into());
        }
        Ok(vec![row])
    }

    /// Normalized spin component (divided by S).
    fn observable(&self, name: &str, spin: SpinSpace) -> Result<Operator> {
        let (axis, sub) = observable_axis(name, self.two_spin())
            .ok_or_else(|| WorkbenchError::Config(format!("unknown observable `{name}`")))?;
        let ops = spin_operators(spin);
        let op = match axis {
            'x' => ops.sx,
            'y' => ops.sy,
            _ => ops.sz,
        }
        .scaled(1.0 / spin.s());
        Ok(match sub {
            None => op,
            Some(0) => embed_a(&op)?,
            Some(_) => embed_b(&op)?,
        })
    }

    fn times(&self) -> Vec<f64> {
        let d = &self.cfg.dynamics;
        (0..d.n_times).map(|k| d.t_max * k as f64 / (d.n_times - 1) as f64).collect()
    }

    /// z-basis index of the initial state.
    fn initial_index(&self, spin: SpinSpace) -> usize {
        let single = ((1.0 - self.cfg.dynamics.initial_m_fraction) * spin.s()).round() as usize;
        if self.two_spin() {
            single * spin.dim() + single
        } else {
            single
        }
    }

    fn space(&self, spin: SpinSpace) -> Space {
        if self.two_spin() {
            Space::Pair(spin)
        } else {
            Space::Single(spin)
        }
    }

    fn observables(&self, spin: SpinSpace) -> Result<Vec<Operator>> {
        self.cfg.observables().iter().map(|o| self.observable(o, spin)).collect()
    }

    fn dynamics_rows(&self, job: &Job) -> Result<Vec<Vec<Cell>>> {
        let t = self.times();
        let rho0 = DensityMatrix::basis_state(self.space(job.spin), self.initial_index(job.spin))?;
        let tol = &self.cfg.tolerances;
        let opts = EvolveOptions { rtol: tol.ode_rtol, atol: tol.ode_atol, ..EvolveOptions::default() };
        let values = evolve_expectations(&self.liouvillian(job)?, &rho0, &t, &self.observables(job.spin)?, opts)?;
        Ok(t.iter()
            .enumerate()
            .map(|(k, &tk)| {
                let mut row = vec![Cell::from(tk)];
                row.extend(values.iter().map(|v| Cell::from(v[k].re)));
                row
            })
            .collect())
    }

    fn trajectory_rows(&self, job: &Job) -> Result<Vec<Vec<Cell>>> {
        let t = self.times();
        let model = self.model(job)?;
        let psi0 = basis_vector(model.dim(), self.initial_index(job.spin));
        // Disjoint seed blocks per job; every observable reuses the same trajectories.
        let base_seed = self.cfg.seed.wrapping_add((job.index as u64) << 32);
        let n = self.cfg.trajectory.n_traj;
        let ensembles = self
            .observables(job.spin)?
            .iter()
            .map(|o| ensemble_average(&model, &psi0, &t, o, n, base_seed, self.exec))
            .collect::<spinlind::Result<Vec<_>>>()?;
        Ok(t.iter()
            .enumerate()
            .map(|(k, &tk)| {
                let mut row = vec![Cell::from(tk)];
                for e in &ensembles {
                    row.push(e.mean[k].into());
                    row.push(e.stderr.as_ref().map_or(f64::NAN, |s| s[k]).into());
                }
                row
            })
            .collect())
    }

    fn perturbative_model(&self, job: &Job) -> Result<(PerturbativeModel, f64)> {
        Ok(match self.params(job.point, job.spin) {
            ModelParams::OneSpinBtc(p) => (PerturbativeModel::from_one_spin_btc(&p)?, p.kappa),
            ModelParams::OneSpinPt(p) => (PerturbativeModel::from_one_spin_pt(&p)?, p.kappa),
            ModelParams::Class(p) => (PerturbativeModel::from_class(&p)?, p.kappa),
            _ => return Err(WorkbenchError::Config(format!("task `perturb` is not available for `{}`", self.cfg.model))),
        })
    }

    fn perturb_rows(&self, job: &Job) -> Result<Vec<Vec<Cell>>> {
        let (model, kappa) = self.perturbative_model(job)?;
        let sectors = all_sectors(job.spin);
        // Sectors are already spread over jobs; keep each job sequential.
        let table = if self.cfg.perturb.second_order {
            second_order_corrections(&model, &sectors, Execution::Sequential)?
        } else {
            first_order_table(&model, &sectors, Execution::Sequential)?
        };
        Ok(table
            .rows
            .iter()
            .map(|r| {
                let second = r.second_order.unwrap_or(c64::new(f64::NAN, f64::NAN));
                let mut predicted = model.lambda0(r.q) + kappa * r.first_order;
                if let Some(s) = r.second_order {
                    predicted += s * (kappa * kappa);
                }
                vec![
                    r.q.into(),
                    r.l.into(),
                    r.first_order.into(),
                    second.re.into(),
                    second.im.into(),
                    predicted.re.into(),
                    predicted.im.into(),
                ]
            })
            .collect())
    }

    fn scaling_rows(&self, job: &Job) -> Result<Vec<Vec<Cell>>> {
        let (model, _) = self.perturbative_model(job)?;
        let kappas = self.cfg.perturb.compare_kappas.as_ref().expect("checked by caller").values().map_err(WorkbenchError::Config)?;
        let report = perturbation_vs_exact(
            &model,
            &kappas,
            self.cfg.perturb.max_l,
            self.cfg.perturb.second_order,
            Execution::Sequential,
        )?;
        let slope = report.slope.unwrap_or(f64::NAN);
        Ok(kappas
            .iter()
            .enumerate()
            .map(|(i, &k)| vec![k.into(), report.max_error[i].into(), report.ambiguous[i].into(), slope.into()])
            .collect())
    }

    fn check_pt_rows(&self, job: &Job) -> Result<Vec<Vec<Cell>>> {
        let r = check_liouvillian_pt(&self.model(job)?)?;
        Ok(vec![vec![r.into(), (r <= self.cfg.tolerances.pt_residual).into()]])
    }

    fn btc_detect(&self) -> Result<(Table, Value)> {
        let jobs = self.jobs();
        let spectra = self.exec.try_map(&jobs, |job| -> Result<_> {
            let opts = SpectrumOptions { cap: dense_cap(job.spin, self.two_spin()), eigenmodes: false };
            Ok((job.spin, spectrum_with(&self.liouvillian(job)?, opts)?))
        })?;
        let opts = BtcOptions { rel_tol: self.cfg.tolerances.commensurability, ..BtcOptions::default() };
        let mut cols = vec!["point".to_string()];
        cols.extend(self.names.iter().map(|n| n.to_string()));
        cols.extend(
            ["n_spins", "positive", "pure_imaginary_trend", "commensurable", "base_frequency", "extrapolated_min_re"]
                .map(String::from),
        );
        let mut table = Table::new(Task::BtcDetect.file_stem(), cols);
        let mut docs = Vec::new();
        for (p, chunk) in self.grid.iter().zip(spectra.chunks(self.spins.len())) {
            let v = btc_detect(chunk, opts)?;
            let mut row = vec![Cell::from(p.index)];
            row.extend(p.values.iter().map(|&x| Cell::from(x)));
            row.extend([
                Cell::from(chunk.len()),
                v.positive().into(),
                v.has_pure_imaginary_trend.into(),
                v.commensurable.into(),
                v.base_frequency.unwrap_or(f64::NAN).into(),
                v.extrapolated_min_re.into(),
            ]);
            table.push(row);
            let params: serde_json::Map<String, Value> =
                self.names.iter().zip(&p.values).map(|(n, &x)| (n.to_string(), json!(x))).collect();
            docs.push(json!({ "point": p.index, "params": params, "positive": v.positive(), "verdict": v }));
        }
        Ok((table, Value::Array(docs)))
    }

    fn figure(&self, f: &Figure, out: &Artifacts) -> Result<String> {
        let fail = |m: String| WorkbenchError::Config(format!("figure `{}`: {m}", f.name));
        if f.kind == FigureKind::ResidualMatrix {
            return self.residual_figure(f).map_err(|e| match e {
                WorkbenchError::Config(m) => fail(m),
                e => e,
            });
        }
        let table = out.table(f.task.file_stem()).ok_or_else(|| fail("task produced no table".into()))?;
        let col = |name: &Option<String>| -> Result<Vec<f64>> {
            let name = name.as_deref().unwrap_or_default();
            table.column(name).ok_or_else(|| fail(format!("unknown column `{name}` (have: {})", table.columns.join(", "))))
        };
        let (xs, ys) = (col(&f.x)?, col(&f.y)?);
        let x_label = f.x.clone().unwrap_or_default();
        let y_label = f.y.clone().unwrap_or_default();
        let title = f.title.clone().unwrap_or_else(|| f.name.clone());
        let svg = match f.kind {
            FigureKind::Series | FigureKind::Scatter => {
                let mut series: Vec<Series> = Vec::new();
                match &f.group {
                    Some(g) => {
                        let gs = col(&f.group)?;
                        for (i, gv) in gs.iter().enumerate() {
                            let label = format!("{g}={gv}");
                            let idx = match series.iter().position(|s| s.label == label) {
                                Some(k) => k,
                                None => {
                                    series.push(Series { label, points: Vec::new() });
                                    series.len() - 1
                                }
                            };
                            series[idx].points.push((xs[i], ys[i]));
                        }
                    }
                    None => series.push(Series { label: y_label.clone(), points: xs.into_iter().zip(ys).collect() }),
                }
                let style = if f.kind == FigureKind::Series { SeriesStyle::Line } else { SeriesStyle::Markers };
                series_svg(&SeriesPlot { title, x_label, y_label, style, series })
            }
            FigureKind::Heatmap => {
                let zs = col(&f.value)?;
                let axis = |v: &[f64]| {
                    let mut u = v.to_vec();
                    u.sort_by(f64::total_cmp);
                    u.dedup();
                    u
                };
                let (ux, uy) = (axis(&xs), axis(&ys));
                let mut grid = vec![None; ux.len() * uy.len()];
                for i in 0..zs.len() {
                    let ix = ux.iter().position(|&u| u == xs[i]).expect("x value present");
                    let iy = uy.iter().position(|&u| u == ys[i]).expect("y value present");
                    if grid[iy * ux.len() + ix].replace(zs[i]).is_some() {
                        return Err(fail(format!("several rows share the cell ({}, {})", xs[i], ys[i])));
                    }
                }
                let values = grid
                    .into_iter()
                    .map(|v| v.ok_or_else(|| fail("the x/y grid is incomplete".into())))
                    .collect::<Result<Vec<f64>>>()?;
                let title = format!("{title} ({})", f.value.as_deref().unwrap_or_default());
                heatmap_svg(&Heatmap { title, x_label, y_label, x_ticks: ux, y_ticks: uy, values })
            }
            FigureKind::ResidualMatrix => unreachable!("handled above"),
        };
        svg.map_err(|e| WorkbenchError::Numerical(format!("figure `{}`: {e}", f.name)))
    }

    fn residual_figure(&self, f: &Figure) -> Result<String> {
        let index = f.point.unwrap_or(0);
        let point =
            self.grid.get(index).ok_or_else(|| WorkbenchError::Config(format!("grid point {index} does not exist")))?;
        let spin = match f.spin {
            Some(s) => {
                SpinSpace::from_spin(s).map_err(|e| WorkbenchError::Config(e.to_string()))?
            }
            None => self.spins[0],
        };
        let (rho, model) = self.steady_state(&Job { index: 0, point, spin })?;
        let parity = model.parity().ok_or(spinlind::Error::MissingParity)?;
        let m = pt_residual_matrix(&rho, parity)?;
        let d = m.nrows();
        // Matrix row 0 is drawn at the top.
        let values: Vec<f64> = (0..d).flat_map(|j| (0..d).map(move |i| (j, i))).map(|(j, i)| m[(d - 1 - j, i)]).collect();
        let labels: Vec<f64> =
            if self.two_spin() { (0..d).map(|i| i as f64).collect() } else { (0..d).map(|i| spin.m(i)).collect() };
        let mut y_ticks = labels.clone();
        y_ticks.reverse();
        let (x_label, y_label) = if self.two_spin() { ("column index", "row index") } else { ("m'", "m") };
        let title = f.title.clone().unwrap_or_else(|| format!("|rho - PT rho PT| (S={}, point {index})", spin.s()));
        heatmap_svg(&Heatmap {
            title,
            x_label: x_label.into(),
            y_label: y_label.into(),
            x_ticks: labels,
            y_ticks,
            values,
        })
        .map_err(|e| WorkbenchError::Numerical(format!("figure `{}`: {e}", f.name)))
    }
}
