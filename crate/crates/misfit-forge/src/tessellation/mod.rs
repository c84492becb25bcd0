//! Voronoi cells, Delaunay pretriangulations, nearest-neighbour bond graphs,
//! the rigid tessellation (tetrahedra and octahedra only), and the three
//! deterministic triangulation refinements.

mod build;
mod cells;
mod voronoi;

pub use build::{build_system, System};
pub use cells::{CellShape, OctTopology};
pub use voronoi::{Corner, NeighborGrid, VoronoiEngine, VoronoiEngine2};

use crate::error::{Error, Result};
use crate::geom::{FaceSource, V2, V3};
use crate::lattice::AtomSet;
use serde::{Deserialize, Serialize};

/// Bond classification entering the energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BondClass {
    Nn,
    Nnn,
    InterfaceDiagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bond {
    pub a: u32,
    pub b: u32,
    pub class: BondClass,
}

/// Unordered, deduplicated bond list.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BondGraph {
    pub edges: Vec<Bond>,
}

impl BondGraph {
    pub fn from_raw(raw: impl IntoIterator<Item = Bond>) -> Result<Self> {
        let mut map: std::collections::BTreeMap<(u32, u32), BondClass> =
            std::collections::BTreeMap::new();
        for e in raw {
            if e.a == e.b {
                return Err(Error::geometry(format!("self bond on atom {}", e.a)));
            }
            let key = (e.a.min(e.b), e.a.max(e.b));
            match map.get(&key) {
                None => {
                    map.insert(key, e.class);
                }
                Some(&c) if c == e.class => {}
                Some(&c) => {
                    return Err(Error::geometry(format!(
                        "bond {:?} classified both {:?} and {:?}",
                        key, c, e.class
                    )));
                }
            }
        }
        Ok(BondGraph {
            edges: map.into_iter().map(|((a, b), class)| Bond { a, b, class }).collect(),
        })
    }

    pub fn degree_of(&self, id: u32, class: BondClass) -> usize {
        self.edges
            .iter()
            .filter(|e| e.class == class && (e.a == id || e.b == id))
            .count()
    }

    pub fn neighbours_of(&self, id: u32, class: BondClass) -> Vec<u32> {
        let mut out: Vec<u32> = self
            .edges
            .iter()
            .filter(|e| e.class == class)
            .filter_map(|e| {
                if e.a == id {
                    Some(e.b)
                } else if e.b == id {
                    Some(e.a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }
}

/// A rigid cell of the tessellation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cell {
    /// Atom ids, ascending.
    pub vertices: Vec<u32>,
    pub shape: CellShape,
    /// Cell polytope edges as atom-id pairs (diagonals excluded).
    pub edges: Vec<(u32, u32)>,
    /// Octahedron connectivity in atom ids.
    pub oct: Option<OctTopology>,
}

/// Simplex of a triangulation variant (tetrahedron in 3D, triangle in 2D).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Simplex {
    pub verts: Vec<u32>,
}

/// Which octahedron vertex the variant rule selected.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OctProvenance {
    pub cell: u32,
    pub apex: [u32; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tessellation {
    pub dim: usize,
    pub cells: Vec<Cell>,
    /// The triangulations T(1), T(2), T(3); identical in 2D.
    pub variants: [Vec<Simplex>; 3],
    pub provenance: Vec<OctProvenance>,
}

impl Tessellation {
    pub fn octahedron_count(&self) -> usize {
        self.cells.iter().filter(|c| c.shape == CellShape::Octahedron).count()
    }
    pub fn simplex_count(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| matches!(c.shape, CellShape::Tetrahedron | CellShape::Triangle))
            .count()
    }
}

/// One cell of the Delaunay pretriangulation: a maximal set of atoms whose
/// Voronoi cells share a common point (the circumcenter).
#[derive(Debug, Clone)]
pub struct PreCell {
    /// Atom ids, ascending.
    pub verts: Vec<u32>,
    pub center: V3,
    pub radius: f64,
}

#[derive(Debug, Clone)]
pub struct Pretriangulation {
    pub dim: usize,
    pub cells: Vec<PreCell>,
}

impl Pretriangulation {
    /// Cells whose circumcenters lie at least `depth` lattice units inside
    /// the cloud's range of lattice coordinates; trims finite-cloud boundary
    /// artifacts for bulk studies.
    pub fn interior(&self, atoms: &AtomSet, depth: f64) -> Pretriangulation {
        let vinv = atoms
            .kind
            .generator_matrix()
            .try_inverse()
            .expect("generator matrix is invertible");
        let mut lo = V3::from_element(f64::INFINITY);
        let mut hi = V3::from_element(f64::NEG_INFINITY);
        for a in &atoms.atoms {
            let xi = V3::new(a.xi[0], a.xi[1], a.xi[2]);
            lo = lo.inf(&xi);
            hi = hi.sup(&xi);
        }
        let cells = self
            .cells
            .iter()
            .filter(|c| {
                let xi = vinv * c.center;
                let dims = if self.dim == 2 { 2 } else { 3 };
                (0..dims).all(|i| xi[i] >= lo[i] + depth && xi[i] <= hi[i] - depth)
            })
            .cloned()
            .collect();
        Pretriangulation { dim: self.dim, cells }
    }
}

/// Public Voronoi cell report.
#[derive(Debug, Clone)]
pub struct VoronoiCellInfo {
    pub atom: u32,
    /// Halfspaces `n . z <= offset`; `neighbour` is None for box truncation.
    pub halfspaces: Vec<(V3, f64, Option<u32>)>,
    /// Merged cell vertices.
    pub vertices: Vec<V3>,
    /// Positive-area facets by source.
    pub facets: Vec<(Option<u32>, f64)>,
    pub boundary_truncated: bool,
    pub measure: f64,
}

fn spec_pool_radius(atoms: &AtomSet) -> f64 {
    // R_search = 3 max(bulk bond distance, rho * bulk bond distance); the
    // cell is computed against everything within 2 R_search.
    let d = atoms.kind.max_bond_distance();
    2.0 * 3.0 * d.max(atoms.rho * d)
}

fn local_scale(atoms: &AtomSet) -> f64 {
    atoms.kind.nn_distance() * atoms.rho.min(1.0)
}

/// The Voronoi cell of one atom, against the whole set.
pub fn voronoi_cell(atoms: &AtomSet, id: u32) -> Result<VoronoiCellInfo> {
    if id as usize >= atoms.len() {
        return Err(Error::input(format!("atom id {id} out of range")));
    }
    let scale = local_scale(atoms);
    let pool = spec_pool_radius(atoms);
    if atoms.dim() == 2 {
        let pts: Vec<V2> = atoms.atoms.iter().map(|a| V2::new(a.pos[0], a.pos[1])).collect();
        let eng = VoronoiEngine2::new(&pts, scale);
        let poly = eng.cell(id, pool)?;
        let corners = eng.corners(id, &poly);
        let boundary_truncated = corners.iter().any(|c| c.tainted);
        let mut halfspaces = Vec::new();
        let mut facets = Vec::new();
        for (i, src) in poly.sources.iter().enumerate() {
            let nb = match src {
                FaceSource::Neighbor(j) => Some(*j),
                FaceSource::BoundingBox => None,
            };
            let len = poly.edge_length(i);
            if len > eng.merge_tol {
                facets.push((nb, len));
            }
            let e = poly.verts[(i + 1) % poly.verts.len()] - poly.verts[i];
            let n = V2::new(e.y, -e.x).normalize();
            // Outward orientation: away from the atom.
            let n = if n.dot(&(poly.verts[i] - eng.pts[id as usize])) >= 0.0 { n } else { -n };
            halfspaces.push((V3::new(n.x, n.y, 0.0), n.dot(&poly.verts[i]), nb));
        }
        Ok(VoronoiCellInfo {
            atom: id,
            halfspaces,
            vertices: corners.iter().map(|c| c.point).collect(),
            facets,
            boundary_truncated,
            measure: poly.area(),
        })
    } else {
        let pts = atoms.positions();
        let eng = VoronoiEngine::new(&pts, scale);
        let poly = eng.cell(id, pool)?;
        let corners = eng.corners(id, &poly);
        let boundary_truncated = corners.iter().any(|c| c.tainted);
        let mut halfspaces = Vec::new();
        let mut facets = Vec::new();
        for f in &poly.faces {
            let nb = match f.source {
                FaceSource::Neighbor(j) => Some(j),
                FaceSource::BoundingBox => None,
            };
            halfspaces.push((f.plane.normal, f.plane.offset, nb));
            let area = poly.face_area(f);
            if area > eng.merge_tol * eng.merge_tol {
                facets.push((nb, area));
            }
        }
        Ok(VoronoiCellInfo {
            atom: id,
            halfspaces,
            vertices: corners.iter().map(|c| c.point).collect(),
            facets,
            boundary_truncated,
            measure: poly.volume(),
        })
    }
}

/// Delaunay pretriangulation of the whole (finite) atom set. Cells touching
/// the artificial outer box are dropped; cospherical clusters come out as
/// single polyhedral cells.
pub fn delaunay_pretriangulation(atoms: &AtomSet) -> Result<Pretriangulation> {
    let ids: Vec<u32> = (0..atoms.len() as u32).collect();
    if atoms.dim() == 2 {
        let pts: Vec<V2> = atoms.atoms.iter().map(|a| V2::new(a.pos[0], a.pos[1])).collect();
        build::precells_2d(&pts, local_scale(atoms), spec_pool_radius(atoms), &ids)
    } else {
        build::precells_3d(&atoms.positions(), local_scale(atoms), spec_pool_radius(atoms), &ids)
    }
}

/// Nearest neighbours per the edge rule: the union of the 1-faces of every
/// pretriangulation cell.
pub fn nearest_neighbours(atoms: &AtomSet, pre: &Pretriangulation) -> Result<BondGraph> {
    let mut raw = Vec::new();
    for cell in &pre.cells {
        for (a, b) in cell_edges(atoms, &cell.verts)? {
            raw.push(Bond { a, b, class: BondClass::Nn });
        }
    }
    BondGraph::from_raw(raw)
}

/// Polytope edges of a cell given as an atom-id list.
fn cell_edges(atoms: &AtomSet, verts: &[u32]) -> Result<Vec<(u32, u32)>> {
    let scale = local_scale(atoms);
    if atoms.dim() == 2 {
        let pts: Vec<V2> = verts
            .iter()
            .map(|&i| V2::new(atoms.atoms[i as usize].pos[0], atoms.atoms[i as usize].pos[1]))
            .collect();
        let a = cells::analyze_cell_2d(&pts)?;
        Ok(a.edges.iter().map(|&(i, j)| sort_pair(verts[i as usize], verts[j as usize])).collect())
    } else {
        let pts: Vec<V3> = verts.iter().map(|&i| atoms.atoms[i as usize].position()).collect();
        let a = cells::analyze_cell_3d(&pts, 1e-7 * scale)?;
        Ok(a.edges.iter().map(|&(i, j)| sort_pair(verts[i as usize], verts[j as usize])).collect())
    }
}

fn sort_pair(a: u32, b: u32) -> (u32, u32) {
    (a.min(b), a.max(b))
}

#[derive(Debug, Clone)]
pub struct NnnReport {
    pub neighbours: Vec<u32>,
    pub boundary_truncated: bool,
}

/// Next-to-nearest neighbours, literally: remove NN(x) from the lattice,
/// recompute the Voronoi diagram, and keep the atoms whose cells share a
/// positive-measure facet with the cell of x.
pub fn next_to_nearest(atoms: &AtomSet, id: u32) -> Result<NnnReport> {
    if id as usize >= atoms.len() {
        return Err(Error::input(format!("atom id {id} out of range")));
    }
    let scale = local_scale(atoms);
    let pool = spec_pool_radius(atoms);
    // NN(id) from the cells incident to id.
    let pre = delaunay_pretriangulation(atoms)?;
    let mut nn: std::collections::BTreeSet<u32> = std::collections::BTreeSet::new();
    for cell in pre.cells.iter().filter(|c| c.verts.contains(&id)) {
        for (a, b) in cell_edges(atoms, &cell.verts)? {
            if a == id {
                nn.insert(b);
            } else if b == id {
                nn.insert(a);
            }
        }
    }
    // Reduced lattice: everything except NN(id).
    let keep: Vec<u32> = (0..atoms.len() as u32).filter(|i| !nn.contains(i)).collect();
    let reduced_index_of: std::collections::HashMap<u32, u32> =
        keep.iter().enumerate().map(|(ri, &ai)| (ai, ri as u32)).collect();
    let rid = reduced_index_of[&id];
    let area_tol = 1e-8 * scale * scale;
    if atoms.dim() == 2 {
        let pts: Vec<V2> = keep
            .iter()
            .map(|&i| V2::new(atoms.atoms[i as usize].pos[0], atoms.atoms[i as usize].pos[1]))
            .collect();
        let eng = VoronoiEngine2::new(&pts, scale);
        let poly = eng.cell(rid, pool)?;
        let corners = eng.corners(rid, &poly);
        let mut out = Vec::new();
        for (i, src) in poly.sources.iter().enumerate() {
            if let FaceSource::Neighbor(j) = src {
                if poly.edge_length(i) > 1e-4 * scale {
                    out.push(keep[*j as usize]);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        Ok(NnnReport { neighbours: out, boundary_truncated: corners.iter().any(|c| c.tainted) })
    } else {
        let pts: Vec<V3> = keep.iter().map(|&i| atoms.atoms[i as usize].position()).collect();
        let eng = VoronoiEngine::new(&pts, scale);
        let poly = eng.cell(rid, pool)?;
        let corners = eng.corners(rid, &poly);
        let mut out = Vec::new();
        for f in &poly.faces {
            if let FaceSource::Neighbor(j) = f.source {
                if poly.face_area(&f.clone()) > area_tol {
                    out.push(keep[j as usize]);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        Ok(NnnReport { neighbours: out, boundary_truncated: corners.iter().any(|c| c.tainted) })
    }
}

/// Refine a pretriangulation into the rigid tessellation. For the
/// two-sublattice kinds this dispatches to `dc_bond_structure`, which ignores
/// `pre` and follows the sublattice construction.
pub fn rigid_tessellation(
    atoms: &AtomSet,
    pre: &Pretriangulation,
) -> Result<(Tessellation, BondGraph)> {
    if atoms.kind.two_sublattice() {
        return dc_bond_structure(atoms);
    }
    build::refine_generic(atoms, pre, None)
}

/// Bond and cell structure for the diamond-cubic / honeycomb kinds:
/// per-sublattice pretriangulations refined to triangular facets (those edges
/// are next-to-nearest bonds), plus nearest-neighbour spokes from each atom
/// enclosed in a cell of the other sublattice.
pub fn dc_bond_structure(atoms: &AtomSet) -> Result<(Tessellation, BondGraph)> {
    if !atoms.kind.two_sublattice() {
        return Err(Error::input(format!(
            "dc_bond_structure applies to dc/honeycomb, not {}",
            atoms.kind
        )));
    }
    let asm = build::assemble_two_sublattice(atoms, None)?;
    build::finish(atoms, asm)
}

/// The requested triangulation variant (1, 2, or 3) of a tessellation.
pub fn triangulate(tess: &Tessellation, _atoms: &AtomSet, variant: u8) -> Result<Vec<Simplex>> {
    if !(1..=3).contains(&variant) {
        return Err(Error::input(format!("variant must be 1..=3, got {variant}")));
    }
    Ok(tess.variants[(variant - 1) as usize].clone())
}

/// Split octahedra along the diagonal from the vertex maximal in the
/// coordinate order given by `perm`; tetrahedra and triangles pass through.
pub(crate) fn variant_simplices(
    cells: &[Cell],
    positions: &[V3],
    variant: usize,
) -> (Vec<Simplex>, Vec<OctProvenance>) {
    let perm: [usize; 3] = match variant {
        0 => [0, 1, 2],
        1 => [1, 2, 0],
        _ => [2, 0, 1],
    };
    let mut out = Vec::new();
    let mut prov = Vec::new();
    for (ci, cell) in cells.iter().enumerate() {
        match cell.shape {
            CellShape::Tetrahedron | CellShape::Triangle => {
                out.push(Simplex { verts: cell.vertices.clone() });
            }
            CellShape::Octahedron => {
                let topo = cell.oct.as_ref().expect("octahedron cell carries topology");
                let apex = cell
                    .vertices
                    .iter()
                    .copied()
                    .max_by(|&a, &b| {
                        let (pa, pb) = (positions[a as usize], positions[b as usize]);
                        pa[perm[0]]
                            .total_cmp(&pb[perm[0]])
                            .then(pa[perm[1]].total_cmp(&pb[perm[1]]))
                            .then(pa[perm[2]].total_cmp(&pb[perm[2]]))
                    })
                    .expect("octahedron has vertices");
                let (diag, eq) = topo
                    .diagonals
                    .iter()
                    .find(|(d, _)| d.contains(&apex))
                    .expect("apex belongs to one diagonal");
                for i in 0..4 {
                    out.push(Simplex {
                        verts: vec![diag[0], diag[1], eq[i], eq[(i + 1) % 4]],
                    });
                }
                prov.push(OctProvenance { cell: ci as u32, apex: [apex; 3] });
            }
            CellShape::RawPolyhedron | CellShape::Polygon => {
                unreachable!("raw cells never appear in a rigid tessellation")
            }
        }
    }
    (out, prov)
}

pub(crate) fn merge_provenance(per_variant: [Vec<OctProvenance>; 3]) -> Vec<OctProvenance> {
    let mut map: std::collections::BTreeMap<u32, [u32; 3]> = std::collections::BTreeMap::new();
    for (v, list) in per_variant.into_iter().enumerate() {
        for p in list {
            map.entry(p.cell).or_insert([u32::MAX; 3])[v] = p.apex[0];
        }
    }
    map.into_iter().map(|(cell, apex)| OctProvenance { cell, apex }).collect()
}
