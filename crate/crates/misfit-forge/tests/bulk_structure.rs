//! Structural facts of the five bulk lattices: coordination numbers, cell
//! shapes, and the tetrahedron/octahedron census of the FCC cell.

use misfit_forge::lattice::{generate_bulk, AtomSet, LatticeKind};
use misfit_forge::tessellation::{
    dc_bond_structure, delaunay_pretriangulation, nearest_neighbours, next_to_nearest,
    rigid_tessellation, voronoi_cell, BondClass, CellShape,
};

fn bulk_block(kind: LatticeKind, n: f64) -> AtomSet {
    generate_bulk(kind, [(-n, n); 3]).unwrap()
}

/// Atoms at least `depth` lattice units inside the cloud's xi-range (the
/// cloud is a skewed parallelepiped, so Cartesian boxes are the wrong frame).
fn interior_ids(set: &AtomSet, depth: f64) -> Vec<u32> {
    let dims = set.dim();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for a in &set.atoms {
        for i in 0..3 {
            lo[i] = lo[i].min(a.xi[i]);
            hi[i] = hi[i].max(a.xi[i]);
        }
    }
    set.atoms
        .iter()
        .filter(|a| (0..dims).all(|i| a.xi[i] >= lo[i] + depth && a.xi[i] <= hi[i] - depth))
        .map(|a| a.id)
        .collect()
}

fn edge_lengths(set: &AtomSet, verts: &[u32]) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..verts.len() {
        for j in i + 1..verts.len() {
            let d = (set.atoms[verts[i] as usize].position()
                - set.atoms[verts[j] as usize].position())
            .norm();
            out.push(d);
        }
    }
    out
}

#[test]
fn fcc_interior_coordination_is_twelve() {
    let set = bulk_block(LatticeKind::Fcc, 4.0);
    let pre = delaunay_pretriangulation(&set).unwrap();
    let graph = nearest_neighbours(&set, &pre).unwrap();
    let interior = interior_ids(&set, 2.5);
    assert!(interior.len() > 20);
    for id in interior {
        assert_eq!(graph.degree_of(id, BondClass::Nn), 12, "atom {id}");
        for nb in graph.neighbours_of(id, BondClass::Nn) {
            let d = (set.atoms[id as usize].position() - set.atoms[nb as usize].position()).norm();
            assert!((d - 1.0).abs() < 1e-9, "FCC NN distance {d}");
        }
    }
}

#[test]
fn hcp_interior_coordination_is_twelve() {
    let set = bulk_block(LatticeKind::Hcp, 4.0);
    let pre = delaunay_pretriangulation(&set).unwrap();
    let graph = nearest_neighbours(&set, &pre).unwrap();
    let interior = interior_ids(&set, 2.5);
    assert!(interior.len() > 20);
    for id in interior {
        assert_eq!(graph.degree_of(id, BondClass::Nn), 12, "atom {id}");
    }
}

#[test]
fn bcc_interior_coordination_is_fourteen() {
    let set = bulk_block(LatticeKind::Bcc, 4.0);
    let pre = delaunay_pretriangulation(&set).unwrap();
    let graph = nearest_neighbours(&set, &pre).unwrap();
    let interior = interior_ids(&set, 3.0);
    assert!(interior.len() > 10);
    let near = 6.0_f64.sqrt() / 2.0;
    let far = 2.0_f64.sqrt();
    for id in interior {
        let nbs = graph.neighbours_of(id, BondClass::Nn);
        assert_eq!(nbs.len(), 14, "atom {id}");
        let mut count_near = 0;
        let mut count_far = 0;
        for nb in nbs {
            let d = (set.atoms[id as usize].position() - set.atoms[nb as usize].position()).norm();
            if (d - near).abs() < 1e-9 {
                count_near += 1;
            } else if (d - far).abs() < 1e-9 {
                count_far += 1;
            } else {
                panic!("unexpected BCC NN distance {d}");
            }
        }
        assert_eq!((count_near, count_far), (8, 6));
    }
}

#[test]
fn fcc_cells_are_unit_tetrahedra_and_octahedra() {
    let set = bulk_block(LatticeKind::Fcc, 4.0);
    let pre = delaunay_pretriangulation(&set).unwrap();
    let interior = pre.interior(&set, 1.5);
    assert!(interior.cells.len() > 50);
    let mut tets = 0;
    let mut octs = 0;
    for cell in &interior.cells {
        match cell.verts.len() {
            4 => {
                tets += 1;
                for d in edge_lengths(&set, &cell.verts) {
                    assert!((d - 1.0).abs() < 1e-9, "tet edge {d}");
                }
            }
            6 => {
                octs += 1;
                let mut ones = 0;
                let mut diags = 0;
                for d in edge_lengths(&set, &cell.verts) {
                    if (d - 1.0).abs() < 1e-9 {
                        ones += 1;
                    } else if (d - 2.0_f64.sqrt()).abs() < 1e-9 {
                        diags += 1;
                    } else {
                        panic!("unexpected octahedron pair distance {d}");
                    }
                }
                assert_eq!((ones, diags), (12, 3));
            }
            n => panic!("unexpected FCC cell size {n}"),
        }
    }
    assert!(tets > 0 && octs > 0);
    // Census: 8 tetrahedra and 4 octahedra per conventional cubic cell,
    // 8/(6 sqrt 2) + 4 sqrt(2)/3 = 2 sqrt 2.
    assert!((tets as f64 / octs as f64 - 2.0).abs() < 0.2);
    let vol_tet = 1.0 / (6.0 * 2.0_f64.sqrt());
    let vol_oct = 2.0_f64.sqrt() / 3.0;
    assert!((8.0 * vol_tet + 4.0 * vol_oct - 2.0 * 2.0_f64.sqrt()).abs() < 1e-12);
}

#[test]
fn hcp_cells_are_unit_tetrahedra_and_octahedra() {
    let set = bulk_block(LatticeKind::Hcp, 3.0);
    let pre = delaunay_pretriangulation(&set).unwrap();
    let interior = pre.interior(&set, 1.5);
    assert!(interior.cells.len() > 30);
    for cell in &interior.cells {
        match cell.verts.len() {
            4 => {
                for d in edge_lengths(&set, &cell.verts) {
                    assert!((d - 1.0).abs() < 1e-9, "tet edge {d}");
                }
            }
            6 => {
                let ones = edge_lengths(&set, &cell.verts)
                    .iter()
                    .filter(|d| (*d - 1.0).abs() < 1e-9)
                    .count();
                assert_eq!(ones, 12);
            }
            n => panic!("unexpected HCP cell size {n}"),
        }
    }
}

#[test]
fn bcc_cells_are_irregular_tetrahedra() {
    let set = bulk_block(LatticeKind::Bcc, 4.0);
    let pre = delaunay_pretriangulation(&set).unwrap();
    let interior = pre.interior(&set, 2.0);
    assert!(interior.cells.len() > 40);
    let near = 6.0_f64.sqrt() / 2.0;
    let far = 2.0_f64.sqrt();
    for cell in &interior.cells {
        assert_eq!(cell.verts.len(), 4, "BCC cells are tetrahedra");
        let mut nears = 0;
        let mut fars = 0;
        for d in edge_lengths(&set, &cell.verts) {
            if (d - near).abs() < 1e-9 {
                nears += 1;
            } else if (d - far).abs() < 1e-9 {
                fars += 1;
            } else {
                panic!("unexpected BCC tet edge {d}");
            }
        }
        assert_eq!((nears, fars), (4, 2), "four short and two long edges");
    }
}

#[test]
fn fcc_voronoi_cell_is_rhombic_dodecahedron() {
    let set = bulk_block(LatticeKind::Fcc, 4.0);
    let center = interior_ids(&set, 4.0)
        .into_iter()
        .min_by_key(|&id| {
            let p = set.atoms[id as usize].position();
            (p.norm() * 1e6) as i64
        })
        .unwrap();
    let info = voronoi_cell(&set, center).unwrap();
    assert!(!info.boundary_truncated);
    assert_eq!(info.facets.len(), 12, "rhombic dodecahedron has 12 facets");
    assert_eq!(info.vertices.len(), 14, "8 + 6 vertices after merging");
    // Facet neighbours are exactly the 12 nearest neighbours.
    for (nb, area) in &info.facets {
        let nb = nb.expect("no box facets for an interior atom");
        let d = (set.atoms[center as usize].position() - set.atoms[nb as usize].position()).norm();
        assert!((d - 1.0).abs() < 1e-9);
        assert!(*area > 0.01);
    }
    // Independent oracle: the 12 nearest bisectors alone already bound the
    // same cell; every farther bisector is redundant.
    let vol_expected = 2.0_f64.sqrt() / 2.0; // one atom per primitive cell
    assert!((info.measure - vol_expected).abs() < 1e-9);
}

#[test]
fn fcc_next_to_nearest_includes_octahedron_diagonals() {
    let set = bulk_block(LatticeKind::Fcc, 4.0);
    let center = interior_ids(&set, 4.0)
        .into_iter()
        .min_by_key(|&id| (set.atoms[id as usize].position().norm() * 1e6) as i64)
        .unwrap();
    let rep = next_to_nearest(&set, center).unwrap();
    assert!(!rep.boundary_truncated);
    let p = set.atoms[center as usize].position();
    let at_sqrt2: Vec<u32> = rep
        .neighbours
        .iter()
        .copied()
        .filter(|&nb| {
            ((set.atoms[nb as usize].position() - p).norm() - 2.0_f64.sqrt()).abs() < 1e-9
        })
        .collect();
    // The six octahedron-diagonal partners all appear.
    assert_eq!(at_sqrt2.len(), 6);
}

#[test]
fn honeycomb_structure() {
    let set = bulk_block(LatticeKind::Honeycomb2d, 6.0);
    let pre = delaunay_pretriangulation(&set).unwrap();
    // Bulk honeycomb pretriangulation cells are the hexagons (cocircular
    // 6-clusters merged into single cells).
    let interior = pre.interior(&set, 1.5);
    assert!(interior.cells.len() > 20);
    for cell in &interior.cells {
        assert_eq!(cell.verts.len(), 6, "honeycomb cells are hexagons");
    }
    let graph = nearest_neighbours(&set, &pre).unwrap();
    let d_nn = 3.0_f64.sqrt() / 3.0;
    for id in interior_ids(&set, 2.0) {
        assert_eq!(graph.degree_of(id, BondClass::Nn), 3, "honeycomb NN degree");
        for nb in graph.neighbours_of(id, BondClass::Nn) {
            let d = (set.atoms[id as usize].position() - set.atoms[nb as usize].position()).norm();
            assert!((d - d_nn).abs() < 1e-9);
        }
    }
    // Literal next-to-nearest rule: exactly the six same-sublattice atoms at
    // distance 1 (the farther shell only grazes the reduced Voronoi cell).
    let center = interior_ids(&set, 4.0)
        .into_iter()
        .min_by_key(|&id| (set.atoms[id as usize].position().norm() * 1e6) as i64)
        .unwrap();
    let rep = next_to_nearest(&set, center).unwrap();
    assert_eq!(rep.neighbours.len(), 6);
    for nb in rep.neighbours {
        let d = (set.atoms[center as usize].position() - set.atoms[nb as usize].position()).norm();
        assert!((d - 1.0).abs() < 1e-9);
        assert_eq!(
            set.atoms[nb as usize].sublattice,
            set.atoms[center as usize].sublattice
        );
    }
}

#[test]
fn dc_bond_structure_bulk() {
    let set = bulk_block(LatticeKind::Dc, 4.0);
    let (tess, graph) = dc_bond_structure(&set).unwrap();
    let d_nn = 6.0_f64.sqrt() / 4.0;
    let interior = interior_ids(&set, 2.5);
    assert!(interior.len() > 20);
    for id in interior {
        let nn = graph.neighbours_of(id, BondClass::Nn);
        assert_eq!(nn.len(), 4, "DC NN degree (atom {id})");
        for nb in &nn {
            let d = (set.atoms[id as usize].position() - set.atoms[*nb as usize].position()).norm();
            assert!((d - d_nn).abs() < 1e-9, "DC NN distance {d}");
            assert_ne!(
                set.atoms[*nb as usize].sublattice,
                set.atoms[id as usize].sublattice,
                "NN bonds join the two sublattices"
            );
        }
        let nnn = graph.neighbours_of(id, BondClass::Nnn);
        assert_eq!(nnn.len(), 12, "DC NNN degree (atom {id})");
        for nb in nnn {
            let d = (set.atoms[id as usize].position() - set.atoms[nb as usize].position()).norm();
            assert!((d - 1.0).abs() < 1e-9, "DC NNN distance {d}");
            assert_eq!(
                set.atoms[nb as usize].sublattice,
                set.atoms[id as usize].sublattice
            );
        }
    }
    // Every enclosed atom produced four sub-tetrahedra.
    assert!(tess.cells.iter().any(|c| c.shape == CellShape::Tetrahedron));
}

#[test]
fn rigid_tessellation_is_identity_for_bulk() {
    let set = bulk_block(LatticeKind::Fcc, 3.0);
    let pre = delaunay_pretriangulation(&set).unwrap();
    let interior = pre.interior(&set, 1.5);
    let (tess, graph) = rigid_tessellation(&set, &interior).unwrap();
    assert_eq!(tess.cells.len(), interior.cells.len());
    assert!(graph.edges.iter().all(|e| e.class == BondClass::Nn));
    let octs = tess.octahedron_count();
    let tets = tess.simplex_count();
    assert_eq!(octs + tets, tess.cells.len());
    // Triangulation variants: every octahedron contributes 4 tetrahedra.
    for v in 0..3 {
        assert_eq!(tess.variants[v].len(), tets + 4 * octs);
    }
}
