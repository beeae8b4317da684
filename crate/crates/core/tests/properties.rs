use faer::Mat;
use proptest::prelude::*;
use spinlind::diagnostics::{finite_size_fit, pt_image, q_pt};
use spinlind::lindblad::{build_liouvillian, check_liouvillian_pt, spectrum, DensityMatrix, Dissipator, ModelSpec};
use spinlind::linalg;
use spinlind::models::{is_balanced, ClassParams, ClassTriple};
use spinlind::perturbation::{all_sectors, sector_tridiagonal, sector_tridiagonal_direct, PerturbativeModel};
use spinlind::spin::{parity_reflection, Operator, Space, SpinSpace};
use spinlind::c64;

fn complex() -> impl Strategy<Value = c64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(re, im)| c64::new(re, im))
}

fn matrix(d: usize) -> impl Strategy<Value = Mat<c64>> {
    prop::collection::vec(complex(), d * d).prop_map(move |v| Mat::from_fn(d, d, |i, j| v[i + j * d]))
}

fn triple() -> impl Strategy<Value = ClassTriple> {
    (complex(), complex(), complex()).prop_map(|(a, b, g)| ClassTriple::new(a, b, g))
}

/// A random model: Hermitian H and one or two random jump operators with random rates.
fn random_model() -> impl Strategy<Value = ModelSpec> {
    (1u32..=5)
        .prop_flat_map(|two_s| {
            let d = two_s as usize + 1;
            (Just(two_s), matrix(d), prop::collection::vec((0.0..2.0f64, matrix(d)), 1..=2))
        })
        .prop_map(|(two_s, a, jumps)| {
            let sp = SpinSpace::new(two_s).unwrap();
            let space = Space::Single(sp);
            let h = linalg::scale(&linalg::add(&a, &linalg::dagger(&a)), c64::new(0.5, 0.0));
            let diss = jumps.into_iter().map(|(r, l)| Dissipator::new(r, Operator::new(space, l).unwrap())).collect();
            ModelSpec::new("random", Operator::new(space, h).unwrap(), diss, Some(parity_reflection(sp))).unwrap()
        })
}

fn random_density() -> impl Strategy<Value = DensityMatrix> {
    (1u32..=6).prop_flat_map(|two_s| matrix(two_s as usize + 1).prop_map(move |a| (two_s, a))).prop_map(|(two_s, a)| {
        let r = linalg::matmul(&a, &linalg::dagger(&a));
        let tr = linalg::trace(&r);
        let space = Space::Single(SpinSpace::new(two_s).unwrap());
        DensityMatrix::new(space, linalg::scale(&r, tr.inv())).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn superoperator_matches_master_equation(m in random_model(), rho in matrix(6)) {
        let d = m.dim();
        let rho = Mat::from_fn(d, d, |i, j| rho[(i, j)]);
        let l = build_liouvillian(&m);
        let scale = linalg::max_abs(&m.rhs(&rho)).max(1.0);
        prop_assert!(linalg::max_abs_diff(&l.apply(&rho), &m.rhs(&rho)) < 1e-12 * scale);
    }

    #[test]
    fn liouvillians_preserve_trace_and_are_contractive(m in random_model()) {
        let l = build_liouvillian(&m);
        prop_assert!(l.trace_preservation_defect() <= 1e-10 * m.dim() as f64);
        let spec = spectrum(&l).unwrap();
        prop_assert!(spec.max_real_part() <= 1e-8);
        prop_assert!(spec.is_conjugation_closed(1e-8));
    }

    #[test]
    fn pt_residual_ignores_jump_phases(m in random_model(), phases in prop::collection::vec(-3.2..3.2f64, 2)) {
        let base = check_liouvillian_pt(&m).unwrap();
        let diss = m
            .dissipators()
            .iter()
            .zip(&phases)
            .map(|(d, &th)| Dissipator::new(d.rate, d.op.scaled_c(c64::from_polar(1.0, th))))
            .collect();
        let phased = ModelSpec::new("phased", m.hamiltonian().clone(), diss, m.parity().cloned()).unwrap();
        prop_assert!((check_liouvillian_pt(&phased).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn q_pt_is_bounded_and_pt_invariant(rho in random_density()) {
        let sp = rho.space().spin();
        let p = parity_reflection(sp);
        let q = q_pt(&rho, &p).unwrap();
        prop_assert!((0.0..=1.0).contains(&q));
        let img = DensityMatrix::new(rho.space(), pt_image(rho.matrix(), p.matrix())).unwrap();
        prop_assert!((q_pt(&img, &p).unwrap() - q).abs() < 1e-13);
    }

    #[test]
    fn quadratic_fits_recover_exact_coefficients(a in -5.0..5.0f64, b in -5.0..5.0f64, c in -5.0..5.0f64) {
        let pts: Vec<(f64, f64)> = [2.0, 3.0, 5.0, 8.0].iter().map(|&s| (s, a + b / s + c / (s * s))).collect();
        let f = finite_size_fit(&pts).unwrap();
        prop_assert!((f.a - a).abs() < 1e-9 && (f.b - b).abs() < 1e-8 && (f.c - c).abs() < 1e-8);
    }

    #[test]
    fn balance_survives_phases_and_partners(ts in prop::collection::vec(triple(), 1..4), th in -3.2..3.2f64) {
        let sp = SpinSpace::new(2).unwrap();
        let params = |d: Vec<ClassTriple>| ClassParams { spin: sp, g: 1.0, kappa: 0.1, dissipators: d };
        let b = is_balanced(&params(ts.clone()));
        prop_assert_eq!(is_balanced(&params(ts.iter().map(|t| t.with_phase(th)).collect())), b);
        prop_assert_eq!(is_balanced(&params(ts.iter().map(ClassTriple::pt_partner).collect())), b);
        let mut both = ts.clone();
        both.extend(ts.iter().map(ClassTriple::pt_partner));
        prop_assert!(is_balanced(&params(both)));
    }

    #[test]
    fn sector_formulas_match_inner_products(two_s in 1u32..=8, ts in prop::collection::vec((0.05..2.0f64, triple()), 1..3)) {
        let sp = SpinSpace::new(two_s).unwrap();
        let model = PerturbativeModel::new(sp, 1.0, ts).unwrap();
        for q in all_sectors(sp) {
            let f = sector_tridiagonal(&model, q).unwrap();
            let d = sector_tridiagonal_direct(&model, q).unwrap();
            prop_assert!(f.max_deviation(&d) < 1e-12);
        }
    }
}
