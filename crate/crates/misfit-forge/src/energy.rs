//! Discrete harmonic interaction energies and the non-interpenetration
//! (admissibility) test.
//!
//! Every unordered bond is expanded into weighted terms replicating the
//! ordered double sums of the energy functionals: a term of weight 1/2 for
//! each ordered instance, with rest length taken from the phase of the first
//! atom. Cross-interface bonds therefore carry both rest lengths at weight
//! 1/2 each, which puts an irreducible floor of (1-lambda)^2/4 under every
//! such bond.

use crate::error::{Error, Result};
use crate::geom::{tet_volume, tri_area_2d, V2, V3};
use crate::lattice::{AtomSet, LatticeKind, LatticeSpec, Phase};
use crate::tessellation::{BondClass, BondGraph, CellShape, Simplex, Tessellation};
use serde::{Deserialize, Serialize};

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Deformed atom positions, indexed by atom id (z unused for 2D kinds).
#[derive(Debug, Clone, PartialEq)]
pub struct Deformation {
    pub pos: Vec<V3>,
}

impl Deformation {
    pub fn identity(atoms: &AtomSet) -> Self {
        Deformation { pos: atoms.positions() }
    }
    pub fn from_fn(atoms: &AtomSet, mut f: impl FnMut(&crate::lattice::Atom) -> V3) -> Self {
        Deformation { pos: atoms.atoms.iter().map(|a| f(a)).collect() }
    }
    pub fn len(&self) -> usize {
        self.pos.len()
    }
    pub fn is_empty(&self) -> bool {
        self.pos.is_empty()
    }
}

/// Energy attribution classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyClass {
    LeftBulk,
    RightBulk,
    CrossInterface,
    Nnn1,
    Nnn2,
}

/// One unordered bond with its weighted rest-length terms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightedBond {
    pub a: u32,
    pub b: u32,
    pub class: EnergyClass,
    /// (weight, rest length); one entry for intra-phase bonds, two half-
    /// weighted entries for cross-interface bonds.
    pub terms: Vec<(f64, f64)>,
}

impl WeightedBond {
    /// Minimum of the bond energy over its deformed length.
    pub fn pointwise_floor(&self) -> f64 {
        let wsum: f64 = self.terms.iter().map(|t| t.0).sum();
        let mean: f64 = self.terms.iter().map(|t| t.0 * t.1).sum::<f64>() / wsum;
        self.terms.iter().map(|(w, r)| w * (mean - r) * (mean - r)).sum()
    }
}

/// Constants weighting the two sublattice next-to-nearest families.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EnergyParams {
    pub c1: f64,
    pub c2: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams { c1: 1.0, c2: 1.0 }
    }
}

/// Smooth even anisotropy for the BCC bonds: sqrt(2) along cube axes,
/// sqrt(6)/2 along cube diagonals, interpolated by the quartic invariant
/// q(v) = v1^4 + v2^4 + v3^4 elsewhere.
pub fn phi(direction: V3) -> Result<f64> {
    if (direction.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::input(format!(
            "phi expects a unit vector, got |v| = {}",
            direction.norm()
        )));
    }
    let q = direction.x.powi(4) + direction.y.powi(4) + direction.z.powi(4);
    let lo = 6.0_f64.sqrt() / 2.0;
    Ok(lo + (SQRT2 - lo) * (3.0 * q - 1.0) / 2.0)
}

fn rest_lengths(kind: LatticeKind, class: BondClass, dir: V3, lambda: f64) -> Result<(f64, f64)> {
    let base = match (kind, class) {
        (LatticeKind::Bcc, BondClass::Nn | BondClass::InterfaceDiagonal) => phi(dir)?,
        (LatticeKind::Fcc | LatticeKind::Hcp, _) => 1.0,
        (LatticeKind::Dc, BondClass::Nn) => 6.0_f64.sqrt() / 4.0,
        (LatticeKind::Honeycomb2d, BondClass::Nn) => 3.0_f64.sqrt() / 3.0,
        (LatticeKind::Dc | LatticeKind::Honeycomb2d, BondClass::Nnn) => 1.0,
        (k, c) => {
            return Err(Error::input(format!("bond class {c:?} undefined for kind {k}")));
        }
    };
    Ok((base, lambda * base))
}

/// Expand a bond graph into weighted bonds for the given spec.
pub fn compile_bonds(
    spec: &LatticeSpec,
    atoms: &AtomSet,
    graph: &BondGraph,
    params: &EnergyParams,
) -> Result<Vec<WeightedBond>> {
    if params.c1 <= 0.0 || params.c2 <= 0.0 {
        return Err(Error::input("c1 and c2 must be positive".to_string()));
    }
    let mut out = Vec::with_capacity(graph.edges.len());
    for e in &graph.edges {
        let (a, b) = (&atoms.atoms[e.a as usize], &atoms.atoms[e.b as usize]);
        let dir = (a.position() - b.position())
            .try_normalize(1e-12)
            .ok_or_else(|| Error::geometry(format!("zero-length bond {}-{}", e.a, e.b)))?;
        let (r_left, r_right) = rest_lengths(spec.kind, e.class, dir, spec.lambda)?;
        let scale = match e.class {
            BondClass::Nnn => {
                if a.sublattice != b.sublattice {
                    return Err(Error::geometry(format!(
                        "NNN bond {}-{} joins different sublattices",
                        e.a, e.b
                    )));
                }
                if a.sublattice == 1 {
                    params.c1
                } else {
                    params.c2
                }
            }
            _ => 1.0,
        };
        let mut terms: Vec<(f64, f64)> = Vec::with_capacity(2);
        for atom in [a, b] {
            let rest = match atom.phase {
                Phase::Left => r_left,
                Phase::Right => r_right,
            };
            terms.push((0.5 * scale, rest));
        }
        // Merge the two ordered instances when the rests coincide.
        if (terms[0].1 - terms[1].1).abs() < 1e-15 {
            terms = vec![(terms[0].0 + terms[1].0, terms[0].1)];
        }
        let class = match e.class {
            BondClass::Nnn => {
                if a.sublattice == 1 {
                    EnergyClass::Nnn1
                } else {
                    EnergyClass::Nnn2
                }
            }
            _ => match (a.phase, b.phase) {
                (Phase::Left, Phase::Left) => EnergyClass::LeftBulk,
                (Phase::Right, Phase::Right) => EnergyClass::RightBulk,
                _ => EnergyClass::CrossInterface,
            },
        };
        out.push(WeightedBond { a: e.a, b: e.b, class, terms });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub total: f64,
    pub by_class: std::collections::BTreeMap<EnergyClass, f64>,
}

/// Pairwise tree summation; deterministic and accurate.
pub fn pairwise_sum(values: &mut [f64]) -> f64 {
    fn rec(v: &[f64]) -> f64 {
        match v.len() {
            0 => 0.0,
            1 => v[0],
            2 => v[0] + v[1],
            n => rec(&v[..n / 2]) + rec(&v[n / 2..]),
        }
    }
    rec(values)
}

/// Total interaction energy of a deformation.
pub fn energy(bonds: &[WeightedBond], def: &Deformation) -> Result<EnergyBreakdown> {
    let mut per_class: std::collections::BTreeMap<EnergyClass, Vec<f64>> = Default::default();
    for wb in bonds {
        let (ia, ib) = (wb.a as usize, wb.b as usize);
        if ia >= def.len() || ib >= def.len() {
            return Err(Error::input(format!(
                "deformation does not cover atom {}",
                wb.a.max(wb.b)
            )));
        }
        let ell = (def.pos[ia] - def.pos[ib]).norm();
        let mut v = 0.0;
        for &(w, r) in &wb.terms {
            v += w * (ell - r) * (ell - r);
        }
        per_class.entry(wb.class).or_default().push(v);
    }
    let mut by_class = std::collections::BTreeMap::new();
    let mut parts = Vec::new();
    for (class, mut vals) in per_class {
        let s = pairwise_sum(&mut vals);
        by_class.insert(class, s);
        parts.push(s);
    }
    Ok(EnergyBreakdown { total: pairwise_sum(&mut parts), by_class })
}

/// Ratio of deformed to reference simplex determinant (the determinant of the
/// affine map on the cell).
pub fn cell_determinant_sign(
    simplex: &Simplex,
    atoms: &AtomSet,
    def: &Deformation,
) -> Result<f64> {
    let dim = atoms.dim();
    let p = |i: u32| atoms.atoms[i as usize].position();
    let q = |i: u32| def.pos[i as usize];
    if dim == 2 {
        let v = &simplex.verts;
        if v.len() != 3 {
            return Err(Error::input("2D simplices have 3 vertices".to_string()));
        }
        let to2 = |x: V3| V2::new(x.x, x.y);
        let r = tri_area_2d(to2(p(v[0])), to2(p(v[1])), to2(p(v[2])));
        if r.abs() < 1e-14 {
            return Err(Error::geometry("degenerate reference triangle".to_string()));
        }
        Ok(tri_area_2d(to2(q(v[0])), to2(q(v[1])), to2(q(v[2]))) / r)
    } else {
        let v = &simplex.verts;
        if v.len() != 4 {
            return Err(Error::input("3D simplices have 4 vertices".to_string()));
        }
        let r = tet_volume(p(v[0]), p(v[1]), p(v[2]), p(v[3]));
        if r.abs() < 1e-14 {
            return Err(Error::geometry("degenerate reference tetrahedron".to_string()));
        }
        Ok(tet_volume(q(v[0]), q(v[1]), q(v[2]), q(v[3])) / r)
    }
}

/// Normalized determinants at or below this are inadmissible (the positivity
/// constraint is open; exact zero counts as a violation).
pub const DET_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub cell: u32,
    pub detail: String,
    pub determinant: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Admissibility {
    pub admissible: bool,
    /// At most the first 10 violations.
    pub violations: Vec<Violation>,
}

/// One oriented determinant check; octahedra contribute four per diagonal.
struct CheckUnit {
    cell: u32,
    detail: &'static str,
    verts: [u32; 4],
    /// Positive reference measure (area in 2D via verts[3] == verts[2]).
    reference: f64,
}

/// Prebuilt determinant checks for a tessellation: every tetrahedron, and
/// the four-tetrahedron split of every octahedron along each of its three
/// diagonals (positivity on all three is equivalent to positivity on one
/// plus convexity of the image).
pub struct AdmissibilityChecker {
    dim: usize,
    units: Vec<CheckUnit>,
}

impl AdmissibilityChecker {
    pub fn new(tess: &Tessellation, atoms: &AtomSet) -> Result<Self> {
        let p = |i: u32| atoms.atoms[i as usize].position();
        let mut units = Vec::new();
        let push3 = |units: &mut Vec<CheckUnit>,
                     cell: u32,
                     detail: &'static str,
                     v: [u32; 4]|
         -> Result<()> {
            let r = tet_volume(p(v[0]), p(v[1]), p(v[2]), p(v[3]));
            if r.abs() < 1e-14 {
                return Err(Error::geometry(format!("degenerate reference cell {cell}")));
            }
            let verts = if r > 0.0 { v } else { [v[1], v[0], v[2], v[3]] };
            units.push(CheckUnit { cell, detail, verts, reference: r.abs() });
            Ok(())
        };
        for (ci, cell) in tess.cells.iter().enumerate() {
            match cell.shape {
                CellShape::Tetrahedron => {
                    let v = &cell.vertices;
                    push3(&mut units, ci as u32, "tetrahedron", [v[0], v[1], v[2], v[3]])?;
                }
                CellShape::Octahedron => {
                    let topo = cell.oct.as_ref().expect("octahedron carries topology");
                    for (d, (diag, eq)) in topo.diagonals.iter().enumerate() {
                        let detail = ["diagonal 1", "diagonal 2", "diagonal 3"][d];
                        for i in 0..4 {
                            push3(
                                &mut units,
                                ci as u32,
                                detail,
                                [diag[0], diag[1], eq[i], eq[(i + 1) % 4]],
                            )?;
                        }
                    }
                }
                CellShape::Triangle => {
                    let v = &cell.vertices;
                    let to2 = |i: u32| V2::new(p(i).x, p(i).y);
                    let r = tri_area_2d(to2(v[0]), to2(v[1]), to2(v[2]));
                    if r.abs() < 1e-14 {
                        return Err(Error::geometry(format!("degenerate reference cell {ci}")));
                    }
                    let verts = if r > 0.0 {
                        [v[0], v[1], v[2], v[2]]
                    } else {
                        [v[1], v[0], v[2], v[2]]
                    };
                    units.push(CheckUnit {
                        cell: ci as u32,
                        detail: "triangle",
                        verts,
                        reference: r.abs(),
                    });
                }
                CellShape::RawPolyhedron | CellShape::Polygon => {
                    return Err(Error::geometry(format!(
                        "raw cell {ci} in a rigid tessellation"
                    )));
                }
            }
        }
        Ok(AdmissibilityChecker { dim: tess.dim, units })
    }

    fn unit_det(&self, u: &CheckUnit, def: &Deformation) -> f64 {
        if self.dim == 2 {
            let q = |i: u32| V2::new(def.pos[i as usize].x, def.pos[i as usize].y);
            tri_area_2d(q(u.verts[0]), q(u.verts[1]), q(u.verts[2])) / u.reference
        } else {
            let q = |i: u32| def.pos[i as usize];
            tet_volume(q(u.verts[0]), q(u.verts[1]), q(u.verts[2]), q(u.verts[3])) / u.reference
        }
    }

    /// Fast all-or-nothing test.
    pub fn is_admissible(&self, def: &Deformation) -> bool {
        self.units.iter().all(|u| self.unit_det(u, def) > DET_TOL)
    }

    /// Full report with the first violations.
    pub fn check(&self, def: &Deformation) -> Admissibility {
        let mut violations = Vec::new();
        for u in &self.units {
            let d = self.unit_det(u, def);
            if d <= DET_TOL {
                if violations.len() < 10 {
                    violations.push(Violation {
                        cell: u.cell,
                        detail: u.detail.to_string(),
                        determinant: d,
                    });
                } else {
                    break;
                }
            }
        }
        Admissibility { admissible: violations.is_empty(), violations }
    }
}

/// Admissibility of a deformation on a tessellation: positive determinants on
/// the first triangulation and convex octahedron images, decided through the
/// three-diagonal determinant equivalence.
pub fn check_admissible(
    tess: &Tessellation,
    atoms: &AtomSet,
    def: &Deformation,
) -> Result<Admissibility> {
    Ok(AdmissibilityChecker::new(tess, atoms)?.check(def))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn phi_checkpoints() {
        assert_relative_eq!(phi(V3::new(1.0, 0.0, 0.0)).unwrap(), SQRT2, epsilon = 1e-15);
        let d = V3::new(1.0, 1.0, 1.0).normalize();
        assert_relative_eq!(phi(d).unwrap(), 6.0_f64.sqrt() / 2.0, epsilon = 1e-12);
        assert_relative_eq!(phi(-d).unwrap(), phi(d).unwrap(), epsilon = 1e-15);
        // Frozen value of the quartic interpolant on a face diagonal:
        // q = 1/2, so phi = sqrt(6)/2 + (sqrt(2) - sqrt(6)/2)/4.
        let fd = V3::new(1.0, 1.0, 0.0).normalize();
        assert_relative_eq!(phi(fd).unwrap(), 1.2721120441369655, epsilon = 1e-12);
        assert!(phi(V3::new(1.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn cross_bond_floor() {
        let lambda = 0.8;
        let wb = WeightedBond {
            a: 0,
            b: 1,
            class: EnergyClass::CrossInterface,
            terms: vec![(0.5, 1.0), (0.5, lambda)],
        };
        // Minimum of (l-1)^2/2 + (l-lambda)^2/2 is (1-lambda)^2/4 at the
        // midpoint length (1+lambda)/2.
        assert_relative_eq!(wb.pointwise_floor(), (1.0 - lambda) * (1.0 - lambda) / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn single_bond_stretch_energy() {
        let wb = WeightedBond {
            a: 0,
            b: 1,
            class: EnergyClass::LeftBulk,
            terms: vec![(1.0, 1.0)],
        };
        let t = 0.07;
        let def = Deformation { pos: vec![V3::zeros(), V3::new(1.0 + t, 0.0, 0.0)] };
        let e = energy(&[wb], &def).unwrap();
        assert_relative_eq!(e.total, t * t, epsilon = 1e-15);
    }

    #[test]
    fn determinant_sign_examples() {
        use crate::lattice::{generate_bulk, LatticeKind};
        use crate::tessellation::Simplex;
        let set = generate_bulk(LatticeKind::Fcc, [(-2.0, 2.0); 3]).unwrap();
        // Any nondegenerate tetrahedron of lattice sites.
        let ids: Vec<u32> = (0..set.len() as u32).collect();
        let mut simplex = None;
        'outer: for &a in &ids {
            for &b in &ids {
                for &c in &ids {
                    let d = a + 1;
                    if a < b && b < c && (d != a && d != b && d != c) && (d as usize) < set.len() {
                        let s = Simplex { verts: vec![a, b, c, d] };
                        let p = |i: u32| set.atoms[i as usize].position();
                        if crate::geom::tet_volume(p(a), p(b), p(c), p(d)).abs() > 0.05 {
                            simplex = Some(s);
                            break 'outer;
                        }
                    }
                }
            }
        }
        let simplex = simplex.unwrap();
        let ident = Deformation::identity(&set);
        assert_relative_eq!(
            cell_determinant_sign(&simplex, &set, &ident).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let mirrored = Deformation {
            pos: ident.pos.iter().map(|p| V3::new(-p.x, p.y, p.z)).collect(),
        };
        assert_relative_eq!(
            cell_determinant_sign(&simplex, &set, &mirrored).unwrap(),
            -1.0,
            epsilon = 1e-12
        );
        let s3 = 1.3_f64;
        let dilated = Deformation { pos: ident.pos.iter().map(|p| p * s3).collect() };
        assert_relative_eq!(
            cell_determinant_sign(&simplex, &set, &dilated).unwrap(),
            s3.powi(3),
            epsilon = 1e-12
        );
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let mut v: Vec<f64> = (0..1000).map(|i| (i as f64) * 0.001).collect();
        let naive: f64 = v.iter().sum();
        assert_relative_eq!(pairwise_sum(&mut v), naive, max_relative = 1e-12);
    }
}
