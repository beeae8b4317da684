//! Command-line interface: `run <config>` plus one subcommand per task that
//! builds a single-task sweep from flags.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use spinlind::models::ModelFamily;

use crate::config::{ParamRange, SweepConfig, Task, TripleSpec};
use crate::engine::execute;
use crate::error::WorkbenchError;
use crate::output::{read_config, run, Format};

#[derive(Debug, Parser)]
#[command(name = "spinlind", version, about = "Sweeps over collective spin Lindblad models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every task of a TOML sweep configuration.
    Run(RunArgs),
    /// Full Liouvillian spectrum.
    Spectrum(ModelArgs),
    /// Stationary state diagnostics (purity, Q_PT, magnetization).
    Steady(ModelArgs),
    /// Master-equation time evolution of normalized spin components.
    Dynamics(ModelArgs),
    /// Quantum-trajectory ensemble averages.
    Trajectory(ModelArgs),
    /// First/second-order corrections in the dissipation strength.
    Perturb(ModelArgs),
    /// Liouvillian PT residual.
    CheckPt(ModelArgs),
    /// Boundary-time-crystal verdict over the S-ladder.
    BtcDetect(ModelArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Sweep configuration (TOML).
    pub config: PathBuf,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Base seed (overrides `seed` in the config).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Table format on disk.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

/// Model and task flags. Numeric parameters accept comma-separated lists, which
/// are swept as a grid.
#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_parser = parse_family)]
    pub model: ModelFamily,
    /// Spin values (comma-separated S-ladder).
    #[arg(long = "S", value_delimiter = ',', required = true)]
    pub spins: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub g: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub kappa: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub p: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub pz: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub px: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub gx: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub gz: Option<Vec<f64>>,
    #[arg(long = "kappa-plus", value_delimiter = ',')]
    pub kappa_plus: Option<Vec<f64>>,
    #[arg(long = "kappa-minus", value_delimiter = ',')]
    pub kappa_minus: Option<Vec<f64>>,
    #[arg(long = "gamma-gain", value_delimiter = ',')]
    pub gamma_gain: Option<Vec<f64>>,
    #[arg(long = "gamma-loss", value_delimiter = ',')]
    pub gamma_loss: Option<Vec<f64>>,
    /// Class-model jump `alpha Sx^+ + beta Sx^- + gamma Sx` as six numbers
    /// `re(alpha),im(alpha),re(beta),im(beta),re(gamma),im(gamma)`; repeatable.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, action = clap::ArgAction::Append)]
    pub triple: Vec<f64>,
    /// Write artifacts and a manifest here instead of printing to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// The task's tolerance: PT residual threshold (check-pt), commensurability
    /// (btc-detect) or ODE relative tolerance (dynamics).
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long = "t-max")]
    pub t_max: Option<f64>,
    #[arg(long = "n-times")]
    pub n_times: Option<usize>,
    #[arg(long = "n-traj")]
    pub n_traj: Option<usize>,
    /// Comma-separated observables (e.g. sz,sx).
    #[arg(long, value_delimiter = ',')]
    pub observables: Option<Vec<String>>,
}

fn parse_family(s: &str) -> Result<ModelFamily, String> {
    s.parse().map_err(|e: spinlind::Error| e.to_string())
}

impl ModelArgs {
    pub fn to_config(&self, task: Task) -> Result<SweepConfig, WorkbenchError> {
        let flags: [(&str, &Option<Vec<f64>>); 11] = [
            ("g", &self.g),
            ("kappa", &self.kappa),
            ("p", &self.p),
            ("pz", &self.pz),
            ("px", &self.px),
            ("gx", &self.gx),
            ("gz", &self.gz),
            ("kappa_plus", &self.kappa_plus),
            ("kappa_minus", &self.kappa_minus),
            ("gamma_gain", &self.gamma_gain),
            ("gamma_loss", &self.gamma_loss),
        ];
        let params: BTreeMap<String, ParamRange> = flags
            .iter()
            .filter_map(|(n, v)| {
                v.as_ref().map(|v| {
                    let r = if v.len() == 1 { ParamRange::Value(v[0]) } else { ParamRange::List(v.clone()) };
                    (n.to_string(), r)
                })
            })
            .collect();
        if self.triple.len() % 6 != 0 {
            return Err(WorkbenchError::Config(format!(
                "--triple takes six comma-separated numbers per jump, got {} in total",
                self.triple.len()
            )));
        }
        let dissipators = self
            .triple
            .chunks(6)
            .map(|c| TripleSpec { alpha: [c[0], c[1]], beta: [c[2], c[3]], gamma: [c[4], c[5]] })
            .collect();
        let mut cfg = SweepConfig {
            model: self.model,
            spins: self.spins.clone(),
            tasks: vec![task],
            out: self.out.clone().unwrap_or_else(|| PathBuf::from(".")),
            seed: self.seed,
            params,
            dissipators,
            tolerances: Default::default(),
            limits: Default::default(),
            dynamics: Default::default(),
            trajectory: Default::default(),
            perturb: Default::default(),
            figures: Vec::new(),
        };
        if let Some(tol) = self.tol {
            match task {
                Task::CheckPt => cfg.tolerances.pt_residual = tol,
                Task::BtcDetect => cfg.tolerances.commensurability = tol,
                Task::Dynamics => cfg.tolerances.ode_rtol = tol,
                _ => return Err(WorkbenchError::Config(format!("--tol has no meaning for `{task}`"))),
            }
        }
        if let Some(t) = self.t_max {
            cfg.dynamics.t_max = t;
        }
        if let Some(n) = self.n_times {
            cfg.dynamics.n_times = n;
        }
        if let Some(n) = self.n_traj {
            cfg.trajectory.n_traj = n;
        }
        if let Some(o) = &self.observables {
            cfg.dynamics.observables = o.clone();
        }
        cfg.validated()
    }
}

/// Runs a parsed command, writing results or a short summary to `stdout`.
pub fn dispatch(cli: Cli, stdout: &mut dyn Write) -> Result<(), WorkbenchError> {
    let (args, task) = match cli.command {
        Command::Run(a) => {
            let mut cfg = read_config(&a.config)?;
            if let Some(o) = a.out {
                cfg.out = o;
            }
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            let m = run(&cfg, a.format)?;
            writeln!(stdout, "wrote {} files to {} in {:.2} s", m.files.len() + 1, cfg.out.display(), m.total_wall_time_s)?;
            return Ok(());
        }
        Command::Spectrum(a) => (a, Task::Spectrum),
        Command::Steady(a) => (a, Task::Steady),
        Command::Dynamics(a) => (a, Task::Dynamics),
        Command::Trajectory(a) => (a, Task::Trajectory),
        Command::Perturb(a) => (a, Task::Perturb),
        Command::CheckPt(a) => (a, Task::CheckPt),
        Command::BtcDetect(a) => (a, Task::BtcDetect),
    };
    let cfg = args.to_config(task)?;
    if args.out.is_some() {
        let m = run(&cfg, args.format)?;
        writeln!(stdout, "wrote {} files to {}", m.files.len() + 1, cfg.out.display())?;
        return Ok(());
    }
    let a = execute(&cfg)?;
    match args.format {
        Format::Csv => {
            for (i, t) in a.tables.iter().enumerate() {
                if i > 0 {
                    writeln!(stdout)?;
                }
                write!(stdout, "{}", t.to_csv())?;
            }
        }
        Format::Json => {
            let tables: Vec<serde_json::Value> = a.tables.iter().map(|t| t.to_json()).collect();
            let documents: serde_json::Map<String, serde_json::Value> = a.documents.iter().cloned().collect();
            let doc = serde_json::json!({ "tables": tables, "documents": documents });
            writeln!(stdout, "{}", serde_json::to_string_pretty(&doc).expect("JSON value serializes"))?;
        }
    }
    Ok(())
}
