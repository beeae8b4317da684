use spinlind::exec::Execution;
use spinlind::lindblad::{build_liouvillian, evolve_expectations, DensityMatrix, EvolveOptions, ModelSpec};
use spinlind::models::{one_spin_btc, OneSpinBtcParams};
use spinlind::spin::{spin_operators, Space, SpinSpace};
use spinlind::trajectory::{basis_vector, ensemble_average, run_trajectory, EnsembleAverage};
use spinlind::{c64, Error};

fn btc(two_s: u32, kappa: f64) -> ModelSpec {
    one_spin_btc(&OneSpinBtcParams { spin: SpinSpace::new(two_s).unwrap(), g: 1.0, kappa }).unwrap()
}

fn grid(n: usize, dt: f64) -> Vec<f64> {
    (0..n).map(|k| k as f64 * dt).collect()
}

#[test]
fn coherent_model_never_jumps_and_follows_schrodinger() {
    let m = btc(1, 0.0);
    let sz = spin_operators(SpinSpace::new(1).unwrap()).sz;
    let t = grid(15, 0.25);
    let run = run_trajectory(&m, &basis_vector(2, 0), &t, std::slice::from_ref(&sz), 1).unwrap();
    assert!(run.jump_log.is_empty());
    for (k, tk) in t.iter().enumerate() {
        assert!((run.samples[k][0] - 0.5 * (2.0 * tk).cos()).abs() < 1e-10);
    }
}

#[test]
fn lowest_weight_state_is_dark() {
    let sp = SpinSpace::new(6).unwrap();
    let o = spin_operators(sp);
    let m = ModelSpec::new("decay", o.sx.scaled(0.0), vec![spinlind::lindblad::Dissipator::new(50.0, o.sminus)], None).unwrap();
    for seed in 0..5 {
        let run = run_trajectory(&m, &basis_vector(7, 6), &grid(10, 1.0), std::slice::from_ref(&o.sz), seed).unwrap();
        assert!(run.jump_log.is_empty());
        assert!(run.samples.iter().all(|s| (s[0] + 3.0).abs() < 1e-12));
    }
}

#[test]
fn identical_inputs_give_identical_runs() {
    let m = btc(6, 0.8);
    let sz = spin_operators(SpinSpace::new(6).unwrap()).sz;
    let t = grid(25, 0.4);
    let a = run_trajectory(&m, &basis_vector(7, 0), &t, std::slice::from_ref(&sz), 99).unwrap();
    let b = run_trajectory(&m, &basis_vector(7, 0), &t, std::slice::from_ref(&sz), 99).unwrap();
    assert_eq!(a, b);
    assert!(!a.jump_log.is_empty());
    let c = run_trajectory(&m, &basis_vector(7, 0), &t, std::slice::from_ref(&sz), 100).unwrap();
    assert_ne!(a.jump_log, c.jump_log);
}

#[test]
fn norm_never_grows_between_jumps() {
    let m = btc(8, 1.2);
    let sz = spin_operators(SpinSpace::new(8).unwrap()).sz;
    for seed in 0..10 {
        let run = run_trajectory(&m, &basis_vector(9, 2), &grid(60, 0.05), std::slice::from_ref(&sz), seed).unwrap();
        assert_eq!(run.grid_norms.len(), 60);
        assert!(run.grid_norms.iter().all(|&n| n > 0.0 && n <= 1.0 + 1e-12));
    }
}

#[test]
fn jumps_are_time_ordered_and_inside_the_grid() {
    let m = btc(4, 2.0);
    let run = run_trajectory(&m, &basis_vector(5, 0), &grid(30, 0.3), &[], 4).unwrap();
    assert!(run.jump_log.windows(2).all(|w| w[0].time <= w[1].time));
    assert!(run.jump_log.iter().all(|j| j.time > 0.0 && j.time <= 8.7 && j.channel == 0));
}

fn late_time_spread(kappa: f64) -> f64 {
    let sp = SpinSpace::new(10).unwrap();
    let obs = spin_operators(sp).sz.scaled(1.0 / sp.s());
    let t = grid(41, 0.5);
    let m = btc(10, kappa);
    // Mean over late times of the across-trajectory standard deviation of <Sz>/S.
    let runs: Vec<Vec<f64>> = (0..60)
        .map(|seed| {
            run_trajectory(&m, &basis_vector(11, 0), &t, std::slice::from_ref(&obs), seed)
                .unwrap()
                .samples
                .into_iter()
                .map(|s| s[0])
                .collect()
        })
        .collect();
    let late = 20..41;
    let n = runs.len() as f64;
    late.clone()
        .map(|k| {
            let mean = runs.iter().map(|r| r[k]).sum::<f64>() / n;
            (runs.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        })
        .sum::<f64>()
        / late.len() as f64
}

#[test]
fn fluctuations_are_larger_in_the_time_crystal_phase() {
    let btc_phase = late_time_spread(0.5);
    let damped = late_time_spread(2.0);
    assert!(btc_phase > damped, "{btc_phase} vs {damped}");
}

#[test]
fn single_trajectory_has_no_standard_error() {
    let sp = SpinSpace::new(2).unwrap();
    let e = ensemble_average(&btc(2, 0.5), &basis_vector(3, 0), &grid(3, 0.5), &spin_operators(sp).sz, 1, 0, Execution::Sequential)
        .unwrap();
    assert!(e.stderr.is_none());
    assert!(e.to_csv().lines().nth(1).unwrap().contains("NaN"));
}

fn reference(two_s: u32, kappa: f64, t: &[f64]) -> Vec<f64> {
    let sp = SpinSpace::new(two_s).unwrap();
    let obs = spin_operators(sp).sz.scaled(1.0 / sp.s());
    let rho0 = DensityMatrix::basis_state(Space::Single(sp), 0).unwrap();
    let l = build_liouvillian(&btc(two_s, kappa));
    evolve_expectations(&l, &rho0, t, &[obs], EvolveOptions::default()).unwrap()[0].iter().map(|v| v.re).collect()
}

#[test]
fn ensemble_agrees_with_master_equation() {
    let two_s = 6;
    let sp = SpinSpace::new(two_s).unwrap();
    let obs = spin_operators(sp).sz.scaled(1.0 / sp.s());
    let t = grid(12, 0.5);
    let e = ensemble_average(&btc(two_s, 0.7), &basis_vector(7, 0), &t, &obs, 300, 1000, Execution::default()).unwrap();
    let exact = reference(two_s, 0.7, &t);
    let se = e.stderr.as_ref().unwrap();
    for k in 0..t.len() {
        assert!((e.mean[k] - exact[k]).abs() <= 3.0 * se[k] + 1e-9, "t={} {} vs {} (se {})", t[k], e.mean[k], exact[k], se[k]);
    }
}

#[test]
fn standard_error_scales_as_inverse_square_root() {
    let sp = SpinSpace::new(4).unwrap();
    let obs = spin_operators(sp).sz.scaled(1.0 / sp.s());
    let t = grid(8, 0.5);
    let m = btc(4, 0.5);
    let mean_se = |e: &EnsembleAverage| e.stderr.as_ref().unwrap()[1..].iter().sum::<f64>() / (t.len() - 1) as f64;
    let small = ensemble_average(&m, &basis_vector(5, 0), &t, &obs, 200, 0, Execution::default()).unwrap();
    let large = ensemble_average(&m, &basis_vector(5, 0), &t, &obs, 400, 5000, Execution::default()).unwrap();
    let ratio = mean_se(&large) / mean_se(&small);
    assert!((ratio - 1.0 / 2f64.sqrt()).abs() <= 0.3 / 2f64.sqrt(), "ratio {ratio}");
}

#[test]
fn ensemble_is_bit_identical_across_execution_modes() {
    let sp = SpinSpace::new(4).unwrap();
    let obs = spin_operators(sp).sz;
    let t = grid(6, 0.7);
    let m = btc(4, 0.9);
    let a = ensemble_average(&m, &basis_vector(5, 1), &t, &obs, 24, 7, Execution::Sequential).unwrap();
    let b = ensemble_average(&m, &basis_vector(5, 1), &t, &obs, 24, 7, Execution::default()).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a, b);
}

#[test]
fn input_validation() {
    let m = btc(2, 0.5);
    let unnormalized = vec![c64::new(1.0, 0.0); 3];
    assert!(run_trajectory(&m, &unnormalized, &[0.0, 1.0], &[], 0).is_err());
    assert!(matches!(run_trajectory(&m, &basis_vector(3, 0), &[1.0, 0.5], &[], 0), Err(Error::InvalidTimeGrid(_))));
    assert!(matches!(run_trajectory(&m, &basis_vector(4, 0), &[0.0], &[], 0), Err(Error::DimensionMismatch { .. })));
    let sz = spin_operators(SpinSpace::new(2).unwrap()).sz;
    assert!(ensemble_average(&m, &basis_vector(3, 0), &[0.0], &sz, 0, 0, Execution::Sequential).is_err());
}
