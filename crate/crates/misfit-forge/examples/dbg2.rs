use misfit_forge::io::{to_json_17, AtomsFile};
use misfit_forge::lattice::{LatticeKind, LatticeSpec};
use misfit_forge::tessellation::build_system;

fn main() {
    let spec = LatticeSpec::new(LatticeKind::Fcc, 0.8, 0.8, 2, 3.0).unwrap();
    let sys1 = build_system(&spec).unwrap();
    let bytes = to_json_17(&AtomsFile::new(&spec, &sys1.atoms)).unwrap();
    let file: AtomsFile = serde_json::from_slice(&bytes).unwrap();
    println!("spec match: {:?} vs {:?}", spec, file.spec);
    let sys2 = build_system(&file.spec).unwrap();
    println!("n1={} n2={}", sys1.atoms.len(), sys2.atoms.len());
    for (a, b) in sys1.atoms.atoms.iter().zip(&file.atoms) {
        if a.pos != b.pos || a.id != b.id {
            println!("roundtrip mismatch at id {}: {:?} vs {:?}", a.id, a.pos, b.pos);
            break;
        }
    }
    for (a, b) in sys1.atoms.atoms.iter().zip(&sys2.atoms.atoms) {
        if a.pos != b.pos {
            println!("rebuild mismatch at id {}: {:?} vs {:?}", a.id, a.pos, b.pos);
            println!("  xi: {:?} vs {:?}", a.xi, b.xi);
            break;
        }
    }
}
