//! Minimizer behavior: exact gradients against finite differences, the
//! degenerate gamma cases, admissibility preservation, M-monotonicity, and
//! seed reproducibility.

use misfit_forge::energy::{compile_bonds, energy, Deformation, EnergyClass, EnergyParams};
use misfit_forge::lattice::{LatticeKind, LatticeSpec, Phase};
use misfit_forge::relax::{
    gamma_estimate, gradient, ClampSpec, MinimizeOptions, RelaxProblem, GENERATION_PAD,
};
use misfit_forge::seed;
use misfit_forge::tessellation::build_system;
use rand::Rng;
use std::collections::BTreeSet;

fn fcc_system(rho: f64, lambda: f64, k: u32, m: f64) -> misfit_forge::tessellation::System {
    let spec = LatticeSpec::new(LatticeKind::Fcc, rho, lambda, k, m + GENERATION_PAD).unwrap();
    build_system(&spec).unwrap()
}

#[test]
fn gradient_matches_finite_differences() {
    let sys = fcc_system(0.8, 0.8, 2, 3.0);
    let spec_run = LatticeSpec::new(LatticeKind::Fcc, 0.8, 0.8, 2, 3.0).unwrap();
    let clamp = ClampSpec::from_spec(&spec_run, None);
    let problem = RelaxProblem::new(&sys, &EnergyParams::default(), clamp).unwrap();
    let (mut def, _t) = problem.admissible_blend().unwrap();

    // Random admissible perturbation of the blend.
    let mut rng = seed::rng(11, "fd-test", 0);
    for p in def.pos.iter_mut() {
        for i in 0..3 {
            p[i] += 0.004 * rng.gen_range(-1.0..1.0);
        }
    }
    let free: BTreeSet<u32> = problem.free_ids().iter().copied().collect();
    let bonds = &problem.bonds;
    let grads = gradient(bonds, &def, &free).unwrap();

    let h = 1e-6;
    let mut checked = 0;
    for (pick, &id) in problem.free_ids().iter().enumerate() {
        if pick % 17 != 0 {
            continue;
        }
        for axis in 0..3 {
            let mut plus = def.clone();
            plus.pos[id as usize][axis] += h;
            let mut minus = def.clone();
            minus.pos[id as usize][axis] -= h;
            let ep = energy(bonds, &plus).unwrap().total;
            let em = energy(bonds, &minus).unwrap().total;
            let fd = (ep - em) / (2.0 * h);
            let an = grads[&id][axis];
            let denom = an.abs().max(fd.abs()).max(1e-3);
            assert!(
                (fd - an).abs() / denom < 1e-6,
                "atom {id} axis {axis}: fd {fd} vs analytic {an}"
            );
            checked += 1;
        }
    }
    assert!(checked >= 30, "checked {checked} coordinates");
}

#[test]
fn gradient_zero_at_equilibrium() {
    let sys = fcc_system(1.0, 1.0, 1, 2.0);
    let spec_run = LatticeSpec::new(LatticeKind::Fcc, 1.0, 1.0, 1, 2.0).unwrap();
    let problem = RelaxProblem::new(
        &sys,
        &EnergyParams::default(),
        ClampSpec::from_spec(&spec_run, None),
    )
    .unwrap();
    let def = Deformation::identity(&sys.atoms);
    let free: BTreeSet<u32> = problem.free_ids().iter().copied().collect();
    let grads = gradient(&problem.bonds, &def, &free).unwrap();
    for (_, g) in grads {
        assert!(g.norm() < 1e-10);
    }
}

#[test]
fn single_bond_gradient() {
    use misfit_forge::energy::WeightedBond;
    let t = 0.3;
    let wb = WeightedBond {
        a: 0,
        b: 1,
        class: EnergyClass::LeftBulk,
        terms: vec![(1.0, 1.0)],
    };
    let def = Deformation {
        pos: vec![nalgebra::Vector3::zeros(), nalgebra::Vector3::new(1.0 + t, 0.0, 0.0)],
    };
    let free: BTreeSet<u32> = [0u32, 1].into_iter().collect();
    let g = gradient(&[wb], &def, &free).unwrap();
    // A stretched bond pulls its endpoints together: magnitude 2t each,
    // opposite directions.
    assert!((g[&0].norm() - 2.0 * t).abs() < 1e-12);
    assert!((g[&1].norm() - 2.0 * t).abs() < 1e-12);
    assert!((g[&0] + g[&1]).norm() < 1e-12, "opposite directions");
    assert!(g[&0].x < 0.0, "endpoint 0 is pulled toward endpoint 1");
}

#[test]
fn gamma_zero_for_identical_phases() {
    let spec = LatticeSpec::new(LatticeKind::Fcc, 1.0, 1.0, 2, 3.0).unwrap();
    let est = gamma_estimate(
        &spec,
        &EnergyParams::default(),
        &MinimizeOptions { multistart: 1, ..Default::default() },
        &[2.0, 3.0],
        None,
    )
    .unwrap();
    assert!(est.value.abs() < 1e-10, "gamma = {}", est.value);
    for e in &est.schedule {
        assert!(e.value.abs() < 1e-10);
    }
    assert!(est.converged);
}

#[test]
fn identity_energy_bounds_relaxed_value_when_rho_equals_lambda() {
    // Remark-style test deformation: for rho = lambda the identity is
    // admissible, its energy is concentrated on the interface, and the
    // minimizer can only do better.
    let rho = 0.8;
    let sys = fcc_system(rho, rho, 2, 3.0);
    let spec_run = LatticeSpec::new(LatticeKind::Fcc, rho, rho, 2, 3.0).unwrap();
    let problem = RelaxProblem::new(
        &sys,
        &EnergyParams::default(),
        ClampSpec::from_spec(&spec_run, None),
    )
    .unwrap();
    let ident = Deformation::identity(&sys.atoms);
    assert!(problem.is_admissible(&ident));
    let e_ident = energy(&problem.bonds, &ident).unwrap();

    // Only cross-interface bonds cost anything on the identity.
    for (class, v) in &e_ident.by_class {
        if *class == EnergyClass::CrossInterface {
            assert!(*v > 0.0);
        } else {
            assert!(v.abs() < 1e-18, "{class:?} = {v}");
        }
    }

    // Independent oracle: direct summation over cross-phase bonds.
    let mut oracle = 0.0;
    for wb in &problem.bonds {
        let (a, b) = (&sys.atoms.atoms[wb.a as usize], &sys.atoms.atoms[wb.b as usize]);
        if a.phase != b.phase {
            let ell = (a.position() - b.position()).norm();
            for &(w, r) in &wb.terms {
                oracle += w * (ell - r) * (ell - r);
            }
        }
    }
    assert!(
        (oracle - e_ident.total).abs() <= 1e-12 * oracle.max(1.0),
        "oracle {oracle} vs breakdown {}",
        e_ident.total
    );

    let est = gamma_estimate(
        &spec_run,
        &EnergyParams::default(),
        &MinimizeOptions { multistart: 2, tol_grad: 1e-7, ..Default::default() },
        &[3.0],
        None,
    )
    .unwrap();
    assert!(est.value <= e_ident.total + 1e-12, "{} vs {}", est.value, e_ident.total);
    assert!(est.value > 0.0);
}

#[test]
fn m_schedule_is_monotone_nonincreasing() {
    let spec = LatticeSpec::new(LatticeKind::Fcc, 0.8, 0.8, 2, 8.0).unwrap();
    let est = gamma_estimate(
        &spec,
        &EnergyParams::default(),
        &MinimizeOptions { multistart: 2, tol_grad: 1e-7, ..Default::default() },
        &[4.0, 6.0, 8.0],
        None,
    )
    .unwrap();
    for w in est.schedule.windows(2) {
        assert!(
            w[1].value <= w[0].value + 1e-10,
            "larger M strictly enlarges the feasible set: {} then {}",
            w[0].value,
            w[1].value
        );
    }
}

#[test]
fn repeated_runs_are_identical_and_seeds_agree() {
    let spec = LatticeSpec::new(LatticeKind::Honeycomb2d, 0.8, 0.8, 2, 4.0).unwrap();
    let opts = MinimizeOptions { multistart: 3, tol_grad: 1e-7, seed: 5, ..Default::default() };
    let a = gamma_estimate(&spec, &EnergyParams::default(), &opts, &[4.0], None).unwrap();
    let b = gamma_estimate(&spec, &EnergyParams::default(), &opts, &[4.0], None).unwrap();
    assert_eq!(a.value.to_bits(), b.value.to_bits(), "bitwise reproducible");
    let opts2 = MinimizeOptions { seed: 6, ..opts };
    let c = gamma_estimate(&spec, &EnergyParams::default(), &opts2, &[4.0], None).unwrap();
    let rel = (a.value - c.value).abs() / a.value.abs().max(1e-12);
    assert!(rel < 1e-6, "seeds converge to the same value: {} vs {}", a.value, c.value);
}

#[test]
fn blend_start_is_admissible_and_clamps_hold() {
    let sys = fcc_system(1.0, 0.8, 2, 4.0);
    let spec_run = LatticeSpec::new(LatticeKind::Fcc, 1.0, 0.8, 2, 4.0).unwrap();
    let clamp = ClampSpec::from_spec(&spec_run, None);
    let problem = RelaxProblem::new(&sys, &EnergyParams::default(), clamp).unwrap();
    let (def, t_r) = problem.admissible_blend().unwrap();
    assert!(problem.is_admissible(&def));
    for a in &sys.atoms.atoms {
        if a.xi[0] <= -4.0 {
            assert!((def.pos[a.id as usize] - a.position()).norm() < 1e-12, "left clamp");
        }
        if a.xi[0] >= 4.0 {
            let want = problem.clamp.right_apply(a.position(), t_r);
            assert!((def.pos[a.id as usize] - want).norm() < 1e-12, "right clamp");
        }
    }
}

#[test]
fn frame_indifference_of_energy() {
    let sys = fcc_system(0.8, 0.8, 1, 2.0);
    let spec_run = LatticeSpec::new(LatticeKind::Fcc, 0.8, 0.8, 1, 2.0).unwrap();
    let problem = RelaxProblem::new(
        &sys,
        &EnergyParams::default(),
        ClampSpec::from_spec(&spec_run, None),
    )
    .unwrap();
    let mut rng = seed::rng(3, "frame", 0);
    let mut def = Deformation::identity(&sys.atoms);
    for p in def.pos.iter_mut() {
        for i in 0..3 {
            p[i] += 0.01 * rng.gen_range(-1.0..1.0);
        }
    }
    let e0 = energy(&problem.bonds, &def).unwrap().total;
    let rot = misfit_forge::relax::random_rotation(&mut rng);
    let shift = nalgebra::Vector3::new(0.3, -1.1, 0.7);
    let moved = Deformation { pos: def.pos.iter().map(|p| rot * p + shift).collect() };
    let e1 = energy(&problem.bonds, &moved).unwrap().total;
    assert!((e0 - e1).abs() <= 1e-10 * e0.max(1.0), "{e0} vs {e1}");
}

#[test]
fn translation_of_everything_leaves_energy_unchanged() {
    let sys = fcc_system(0.8, 0.8, 1, 2.0);
    let spec_run = LatticeSpec::new(LatticeKind::Fcc, 0.8, 0.8, 1, 2.0).unwrap();
    let problem = RelaxProblem::new(
        &sys,
        &EnergyParams::default(),
        ClampSpec::from_spec(&spec_run, None),
    )
    .unwrap();
    let (def, _) = problem.admissible_blend().unwrap();
    let e0 = energy(&problem.bonds, &def).unwrap().total;
    let shift = nalgebra::Vector3::new(0.123, 0.456, -0.789);
    let moved = Deformation { pos: def.pos.iter().map(|p| p + shift).collect() };
    let e1 = energy(&problem.bonds, &moved).unwrap().total;
    assert!((e0 - e1).abs() <= 1e-10 * e0.max(1.0));
}

#[test]
fn energy_additivity_over_disjoint_bond_lists() {
    let sys = fcc_system(0.8, 0.8, 1, 2.0);
    let spec_run = LatticeSpec::new(LatticeKind::Fcc, 0.8, 0.8, 1, 2.0).unwrap();
    let bonds = compile_bonds(
        &spec_run,
        &sys.atoms,
        &sys.bonds,
        &EnergyParams::default(),
    )
    .unwrap();
    let def = Deformation::identity(&sys.atoms);
    let mid = bonds.len() / 2;
    let full = energy(&bonds, &def).unwrap().total;
    let a = energy(&bonds[..mid], &def).unwrap().total;
    let b = energy(&bonds[mid..], &def).unwrap().total;
    assert!((full - (a + b)).abs() <= 1e-12 * full.max(1.0));
}

#[test]
fn compile_bonds_term_structure() {
    let sys = fcc_system(0.8, 0.7, 1, 2.0);
    let spec_run = LatticeSpec::new(LatticeKind::Fcc, 0.8, 0.7, 1, 2.0).unwrap();
    let bonds = compile_bonds(&spec_run, &sys.atoms, &sys.bonds, &EnergyParams::default())
        .unwrap();
    let mut saw_cross = false;
    for wb in &bonds {
        let (a, b) = (&sys.atoms.atoms[wb.a as usize], &sys.atoms.atoms[wb.b as usize]);
        match (a.phase, b.phase) {
            (Phase::Left, Phase::Left) => {
                assert_eq!(wb.terms, vec![(1.0, 1.0)], "left bond: weight 1, rest 1");
            }
            (Phase::Right, Phase::Right) => {
                assert_eq!(wb.terms, vec![(1.0, 0.7)], "right bond: weight 1, rest lambda");
            }
            _ => {
                saw_cross = true;
                assert_eq!(wb.terms.len(), 2, "cross bonds keep both ordered terms");
                assert_eq!(wb.terms[0], (0.5, 1.0));
                assert_eq!(wb.terms[1], (0.5, 0.7));
                let floor = wb.pointwise_floor();
                assert!((floor - (1.0 - 0.7_f64).powi(2) / 4.0).abs() < 1e-15);
            }
        }
    }
    assert!(saw_cross);
}
