use misfit_forge::energy::{energy, EnergyParams};
use misfit_forge::lattice::{LatticeKind, LatticeSpec};
use misfit_forge::relax::{random_rotation, ClampSpec, MinimizeOptions, RelaxProblem, GENERATION_PAD};
use misfit_forge::seed;
use misfit_forge::tessellation::build_system;

fn main() {
    let spec = LatticeSpec::new(LatticeKind::Fcc, 0.8, 0.8, 2, 4.0).unwrap();
    let sys = build_system(&spec.with_m(4.0 + GENERATION_PAD)).unwrap();
    let mut rng = seed::rng(2024, "acc-rotations", 0);
    let rots: Vec<_> = (0..3).map(|_| random_rotation(&mut rng)).collect();
    for (i, r) in rots.iter().enumerate() {
        let clamp = ClampSpec::from_spec(&spec, Some(*r));
        let problem = RelaxProblem::new(&sys, &EnergyParams::default(), clamp).unwrap();
        let mut r0 = 1.0;
        loop {
            let (def, t_r) = problem.blend(r0);
            let dof = problem.pack(&def, t_r);
            let def = problem.positions(&dof);
            let adm = problem.is_admissible(&def);
            let e = energy(&problem.bonds, &def).unwrap().total;
            println!("rot{i} (angle {:.2}): r0={r0}: admissible={adm} E={e:.4}", r.angle());
            if r0 >= 4.0 { break; }
            r0 = (r0 * 2.0_f64).min(4.0);
        }
        let out = problem.minimize(&MinimizeOptions { multistart: 2, tol_grad: 1e-6, max_iter: 40000, seed: 2024 }).unwrap();
        println!("  minimized: {:.6} (iters {})", out.energy.total, out.diagnostics.iterations);
    }
}
