//! Assembly of biphase systems: candidate clouds, domain selection by the
//! closure rule, refinement into rigid cells, and bond harvesting.

use super::cells::{self, CellShape, OctTopology};
use super::voronoi::{VoronoiEngine, VoronoiEngine2};
use super::{
    merge_provenance, variant_simplices, Bond, BondClass, BondGraph, Cell, PreCell,
    Pretriangulation, Tessellation,
};
use crate::error::{Error, Result};
use crate::geom::{self, ConvexPoly2, ConvexPoly3, Face3, FaceSource, Line2, V2, V3};
use crate::lattice::{self, AtomSet, LatticeSpec, WireDomain};
use std::collections::{BTreeMap, BTreeSet, HashMap};

/// Relative bounds, in units of the largest bulk bond distance.
const CELL_RADIUS_FACTOR: f64 = 1.35;
const REACH_FACTOR: f64 = 2.8;
const POOL_FACTOR: f64 = 2.9;
const MARGIN_FACTOR: f64 = 6.0;

/// Cosphericity ambiguity band (relative to the local scale): atoms between
/// `inc` and `band` of a circumsphere are neither clearly on nor clearly off.
const INCLUSION_TOL: f64 = 1e-7;
const AMBIGUITY_BAND: f64 = 1e-5;

pub(crate) fn precells_3d(
    pts: &[V3],
    scale: f64,
    pool: f64,
    compute: &[u32],
) -> Result<Pretriangulation> {
    precells_3d_guarded(pts, scale, pool, compute, None)
}

pub(crate) fn precells_3d_guarded(
    pts: &[V3],
    scale: f64,
    pool: f64,
    compute: &[u32],
    max_radius: Option<f64>,
) -> Result<Pretriangulation> {
    let eng = VoronoiEngine::new(pts, scale);
    let inc = INCLUSION_TOL * scale;
    let band = AMBIGUITY_BAND * scale;
    let mut map: BTreeMap<Vec<u32>, (V3, f64)> = BTreeMap::new();
    for &i in compute {
        let poly = eng.cell(i, pool)?;
        for corner in eng.corners(i, &poly) {
            if corner.tainted {
                continue;
            }
            if let Some(rmax) = max_radius {
                if corner.radius > rmax {
                    return Err(Error::geometry(format!(
                        "circumradius {:.6} at corner {:?} exceeds bound {:.6}; margins too small",
                        corner.radius, corner.point, rmax
                    )));
                }
            }
            let members = eng.grid.within(corner.point, corner.radius + inc);
            let wide = eng.grid.within(corner.point, corner.radius + band);
            if wide.len() != members.len() {
                let extra: Vec<u32> =
                    wide.into_iter().filter(|m| !members.contains(m)).collect();
                return Err(Error::Cosphericity(format!(
                    "atoms {extra:?} sit within the ambiguity band of the circumsphere at \
                     {:?} (radius {:.12}) of cell {members:?}",
                    corner.point, corner.radius
                )));
            }
            if members.len() < 4 {
                continue;
            }
            let mut key = members;
            key.sort_unstable();
            map.entry(key).or_insert((corner.point, corner.radius));
        }
    }
    Ok(Pretriangulation {
        dim: 3,
        cells: map
            .into_iter()
            .map(|(verts, (center, radius))| PreCell { verts, center, radius })
            .collect(),
    })
}

pub(crate) fn precells_2d(
    pts: &[V2],
    scale: f64,
    pool: f64,
    compute: &[u32],
) -> Result<Pretriangulation> {
    precells_2d_guarded(pts, scale, pool, compute, None)
}

pub(crate) fn precells_2d_guarded(
    pts: &[V2],
    scale: f64,
    pool: f64,
    compute: &[u32],
    max_radius: Option<f64>,
) -> Result<Pretriangulation> {
    let eng = VoronoiEngine2::new(pts, scale);
    let inc = INCLUSION_TOL * scale;
    let band = AMBIGUITY_BAND * scale;
    let mut map: BTreeMap<Vec<u32>, (V3, f64)> = BTreeMap::new();
    for &i in compute {
        let poly = eng.cell(i, pool)?;
        for corner in eng.corners(i, &poly) {
            if corner.tainted {
                continue;
            }
            if let Some(rmax) = max_radius {
                if corner.radius > rmax {
                    return Err(Error::geometry(format!(
                        "circumradius {:.6} exceeds bound {:.6}; margins too small",
                        corner.radius, rmax
                    )));
                }
            }
            let c2 = V2::new(corner.point.x, corner.point.y);
            let members = eng.within(c2, corner.radius + inc);
            let wide = eng.within(c2, corner.radius + band);
            if wide.len() != members.len() {
                let extra: Vec<u32> =
                    wide.into_iter().filter(|m| !members.contains(m)).collect();
                return Err(Error::Cosphericity(format!(
                    "atoms {extra:?} sit within the ambiguity band of the circumcircle at \
                     {c2:?} (radius {:.12}) of cell {members:?}",
                    corner.radius
                )));
            }
            if members.len() < 3 {
                continue;
            }
            let mut key = members;
            key.sort_unstable();
            map.entry(key).or_insert((corner.point, corner.radius));
        }
    }
    Ok(Pretriangulation {
        dim: 2,
        cells: map
            .into_iter()
            .map(|(verts, (center, radius))| PreCell { verts, center, radius })
            .collect(),
    })
}

/// One refined pretriangulation cell, in local vertex indices.
struct RefinedCell {
    tets: Vec<[u32; 4]>,
    octs: Vec<([u32; 6], OctTopology)>,
    tris: Vec<[u32; 3]>,
    edges: Vec<(u32, u32)>,
    diagonals: Vec<(u32, u32)>,
}

fn refine_cell_3d(points: &[V3], scale: f64) -> Result<RefinedCell> {
    let a = cells::analyze_cell_3d(points, 1e-7 * scale)?;
    match a.shape {
        CellShape::Tetrahedron => Ok(RefinedCell {
            tets: vec![[0, 1, 2, 3]],
            octs: Vec::new(),
            tris: Vec::new(),
            edges: a.edges,
            diagonals: Vec::new(),
        }),
        CellShape::Octahedron => Ok(RefinedCell {
            tets: Vec::new(),
            octs: vec![([0, 1, 2, 3, 4, 5], a.oct.clone().unwrap())],
            tris: Vec::new(),
            edges: a.edges,
            diagonals: Vec::new(),
        }),
        _ => {
            let r = cells::refine_raw_3d(points, &a)?;
            Ok(RefinedCell {
                tets: r.tets,
                octs: r.octs,
                tris: Vec::new(),
                edges: a.edges,
                diagonals: r.diagonals,
            })
        }
    }
}

fn refine_cell_2d(points: &[V2]) -> Result<RefinedCell> {
    let a = cells::analyze_cell_2d(points)?;
    if a.shape == CellShape::Triangle {
        return Ok(RefinedCell {
            tets: Vec::new(),
            octs: Vec::new(),
            tris: vec![[0, 1, 2]],
            edges: a.edges,
            diagonals: Vec::new(),
        });
    }
    let (tris, diagonals) = cells::refine_polygon(points, &a.ring);
    Ok(RefinedCell {
        tets: Vec::new(),
        octs: Vec::new(),
        tris,
        edges: a.edges,
        diagonals,
    })
}

/// Does the (closed, convex) cell intersect the open slab, and with which
/// measure? Uses exact clipping against the slab halfspaces.
fn clip_to_slab_3d(points: &[V3], dom: &WireDomain, scale: f64) -> Result<f64> {
    let facets = geom::convex_hull_3d(points, 1e-7 * scale)?;
    let mut poly = ConvexPoly3 {
        verts: points.to_vec(),
        faces: facets
            .into_iter()
            .map(|f| Face3 { plane: f.plane, source: FaceSource::BoundingBox, ring: f.ring })
            .collect(),
    };
    for plane in dom.bounding_planes() {
        match poly.clip_or_empty(plane, FaceSource::BoundingBox, 1e-9 * scale)? {
            None => return Ok(0.0),
            Some(_) => {}
        }
    }
    Ok(poly.volume())
}

fn clip_to_slab_2d(points: &[V2], ring: &[u32], dom: &WireDomain, scale: f64) -> Result<f64> {
    let mut poly = ConvexPoly2 {
        verts: ring.iter().map(|&i| points[i as usize]).collect(),
        sources: vec![FaceSource::BoundingBox; ring.len()],
    };
    for plane in dom.bounding_planes() {
        let line = Line2 {
            normal: V2::new(plane.normal.x, plane.normal.y),
            offset: plane.offset,
        };
        match poly.clip_or_empty(line, FaceSource::BoundingBox, 1e-9 * scale)? {
            None => return Ok(0.0),
            Some(_) => {}
        }
    }
    Ok(poly.area())
}

/// Quick reject: can the cell ball (center, radius + pad) reach the slab?
fn ball_near_slab(center: V3, radius: f64, dom: &WireDomain, pad: f64) -> bool {
    let xi = dom.xi(center);
    let heights = axis_heights(dom);
    let dims = if dom.kind.dim() == 2 { 2 } else { 3 };
    for ax in 0..dims {
        let (lo, hi) = if ax == 0 { (-dom.m, dom.m) } else { (0.0, dom.k) };
        let overshoot = (lo - xi[ax]).max(xi[ax] - hi).max(0.0);
        if overshoot * heights[ax] > radius + pad {
            return false;
        }
    }
    true
}

/// Cartesian spacing of unit steps along each lattice coordinate.
pub(crate) fn axis_heights(dom: &WireDomain) -> [f64; 3] {
    let rows = dom.vinv.transpose();
    let mut h = [0.0; 3];
    for i in 0..3 {
        let r: V3 = rows.column(i).into();
        h[i] = 1.0 / r.norm();
    }
    h
}

pub(crate) struct Assembled {
    /// Atom ids (input space) of the closed domain, ascending.
    pub omega: Vec<u32>,
    pub cells: Vec<Cell>,
    pub bonds: Vec<Bond>,
    /// Sum over selected cells of the measure of cell ∩ slab.
    pub covered_measure: f64,
}

/// Refinement and bond harvest for the single-lattice kinds (FCC/HCP/BCC).
pub(crate) fn assemble_generic(
    atoms: &AtomSet,
    pre: &Pretriangulation,
    domain: Option<&WireDomain>,
) -> Result<Assembled> {
    if atoms.dim() != 3 {
        return Err(Error::input(
            "the generic tessellation route applies to the 3D Bravais-like kinds".to_string(),
        ));
    }
    let scale = atoms.kind.nn_distance() * atoms.rho.min(1.0);
    let pts = atoms.positions();
    let cell_points =
        |verts: &[u32]| -> Vec<V3> { verts.iter().map(|&i| pts[i as usize]).collect() };

    // Selection by the closure rule.
    let mut selected = vec![false; pre.cells.len()];
    let mut covered = 0.0;
    for (ci, cell) in pre.cells.iter().enumerate() {
        match domain {
            None => selected[ci] = true,
            Some(dom) => {
                if !ball_near_slab(cell.center, cell.radius, dom, 0.1 * scale) {
                    continue;
                }
                let v = clip_to_slab_3d(&cell_points(&cell.verts), dom, scale)?;
                if v > 1e-8 * scale.powi(3) {
                    selected[ci] = true;
                    covered += v;
                }
            }
        }
    }

    let mut omega: BTreeSet<u32> = BTreeSet::new();
    for (ci, cell) in pre.cells.iter().enumerate() {
        if selected[ci] {
            omega.extend(cell.verts.iter().copied());
        }
    }

    let mut cells_out: Vec<Cell> = Vec::new();
    let mut bonds: Vec<Bond> = Vec::new();
    for (ci, cell) in pre.cells.iter().enumerate() {
        let in_omega_count = cell.verts.iter().filter(|v| omega.contains(v)).count();
        if !selected[ci] && in_omega_count < 2 {
            continue;
        }
        let local = cell_points(&cell.verts);
        let refined = refine_cell_3d(&local, scale)?;
        let gid = |l: u32| cell.verts[l as usize];
        for &(a, b) in &refined.edges {
            let (ga, gb) = (gid(a), gid(b));
            if omega.contains(&ga) && omega.contains(&gb) {
                bonds.push(Bond { a: ga.min(gb), b: ga.max(gb), class: BondClass::Nn });
            }
        }
        for &(a, b) in &refined.diagonals {
            let (ga, gb) = (gid(a), gid(b));
            if omega.contains(&ga) && omega.contains(&gb) {
                bonds.push(Bond {
                    a: ga.min(gb),
                    b: ga.max(gb),
                    class: BondClass::InterfaceDiagonal,
                });
            }
        }
        if !selected[ci] {
            continue;
        }
        for t in &refined.tets {
            let mut vs: Vec<u32> = t.iter().map(|&l| gid(l)).collect();
            vs.sort_unstable();
            let edges = pairs_of(&vs);
            cells_out.push(Cell {
                vertices: vs,
                shape: CellShape::Tetrahedron,
                edges,
                oct: None,
            });
        }
        for (vs6, topo) in &refined.octs {
            let mut vs: Vec<u32> = vs6.iter().map(|&l| gid(l)).collect();
            let topo_g = OctTopology {
                diagonals: [0, 1, 2].map(|i| {
                    let (d, e) = (&topo.diagonals[i].0, &topo.diagonals[i].1);
                    ([gid(d[0]), gid(d[1])], [gid(e[0]), gid(e[1]), gid(e[2]), gid(e[3])])
                }),
            };
            vs.sort_unstable();
            let mut edges = Vec::with_capacity(12);
            for (_, eq) in &topo_g.diagonals {
                // Equator cycles of each diagonal jointly enumerate all 12 edges.
                for i in 0..4 {
                    let (a, b) = (eq[i], eq[(i + 1) % 4]);
                    edges.push((a.min(b), a.max(b)));
                }
            }
            edges.sort_unstable();
            edges.dedup();
            cells_out.push(Cell {
                vertices: vs,
                shape: CellShape::Octahedron,
                edges,
                oct: Some(topo_g),
            });
        }
    }
    Ok(Assembled {
        omega: omega.into_iter().collect(),
        cells: cells_out,
        bonds,
        covered_measure: covered,
    })
}

fn pairs_of(vs: &[u32]) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for i in 0..vs.len() {
        for j in i + 1..vs.len() {
            out.push((vs[i].min(vs[j]), vs[i].max(vs[j])));
        }
    }
    out
}

/// Strict interior test against a set of outward facet planes; `Ok(None)`
/// when the point sits inside the ambiguity band of some facet.
fn strict_inside(planes: &[(V3, f64)], p: V3, band: f64) -> Option<bool> {
    let mut max_s = f64::NEG_INFINITY;
    for (n, d) in planes {
        max_s = max_s.max(n.dot(&p) - d);
    }
    if max_s.abs() <= band {
        None
    } else {
        Some(max_s < 0.0)
    }
}

/// Refinement and bond harvest for the two-sublattice kinds (DC/honeycomb):
/// each sublattice is tessellated alone (those edges are next-to-nearest
/// bonds), and atoms enclosed in a cell of the other sublattice gain
/// nearest-neighbour spokes to its vertices.
pub(crate) fn assemble_two_sublattice(
    atoms: &AtomSet,
    domain: Option<&WireDomain>,
) -> Result<Assembled> {
    let dim = atoms.dim();
    let scale = 1.0 * atoms.rho.min(1.0); // sublattice bond distance is 1
    let pool = POOL_FACTOR * 1.0f64.max(atoms.rho);
    let pts = atoms.positions();
    let sub_ids: [Vec<u32>; 2] = {
        let mut s = [Vec::new(), Vec::new()];
        for a in &atoms.atoms {
            match a.sublattice {
                1 => s[0].push(a.id),
                2 => s[1].push(a.id),
                other => {
                    return Err(Error::input(format!(
                        "unexpected sublattice tag {other} on atom {}",
                        a.id
                    )))
                }
            }
        }
        s
    };

    // Per-sublattice pretriangulations (local index space).
    let mut sub_pre: Vec<Pretriangulation> = Vec::new();
    let mut sub_pts2: Vec<Vec<V2>> = Vec::new();
    let mut sub_pts3: Vec<Vec<V3>> = Vec::new();
    for s in 0..2 {
        let compute: Vec<u32> = match domain {
            None => (0..sub_ids[s].len() as u32).collect(),
            Some(dom) => {
                let reach = REACH_FACTOR * 1.0f64;
                let heights = axis_heights(dom);
                (0..sub_ids[s].len() as u32)
                    .filter(|&li| {
                        let a = &atoms.atoms[sub_ids[s][li as usize] as usize];
                        let xi = V3::new(a.xi[0], a.xi[1], a.xi[2]);
                        let dims = if dim == 2 { 2 } else { 3 };
                        (0..dims).all(|ax| {
                            let (lo, hi) =
                                if ax == 0 { (-dom.m, dom.m) } else { (0.0, dom.k) };
                            let overshoot = (lo - xi[ax]).max(xi[ax] - hi).max(0.0);
                            overshoot * heights[ax] <= reach
                        })
                    })
                    .collect()
            }
        };
        if dim == 2 {
            let p2: Vec<V2> = sub_ids[s]
                .iter()
                .map(|&i| V2::new(pts[i as usize].x, pts[i as usize].y))
                .collect();
            sub_pre.push(precells_2d_guarded(
                &p2,
                scale,
                pool,
                &compute,
                domain.map(|_| CELL_RADIUS_FACTOR),
            )?);
            sub_pts2.push(p2);
            sub_pts3.push(Vec::new());
        } else {
            let p3: Vec<V3> = sub_ids[s].iter().map(|&i| pts[i as usize]).collect();
            sub_pre.push(precells_3d_guarded(
                &p3,
                scale,
                pool,
                &compute,
                domain.map(|_| CELL_RADIUS_FACTOR),
            )?);
            sub_pts3.push(p3);
            sub_pts2.push(Vec::new());
        }
    }

    // Lattice-coordinate ranges per sublattice, for fringe detection when no
    // domain is given (finite-cloud artifacts near the hull).
    let vinv = atoms.kind.generator_matrix().try_inverse().expect("invertible");
    let xi_ranges: [(V3, V3); 2] = {
        let mut out = [(V3::from_element(f64::INFINITY), V3::from_element(f64::NEG_INFINITY)); 2];
        for a in &atoms.atoms {
            let s = (a.sublattice - 1) as usize;
            let xi = V3::new(a.xi[0], a.xi[1], a.xi[2]);
            out[s].0 = out[s].0.inf(&xi);
            out[s].1 = out[s].1.sup(&xi);
        }
        out
    };
    let is_fringe = |s: usize, center: V3, radius: f64| -> bool {
        match domain {
            Some(dom) => !ball_near_slab(center, radius, dom, 1.0 * scale),
            None => {
                let xi = vinv * center;
                let dims = if dim == 2 { 2 } else { 3 };
                let (lo, hi) = xi_ranges[s];
                !(0..dims).all(|i| xi[i] >= lo[i] + 1.2 && xi[i] <= hi[i] - 1.2)
            }
        }
    };

    // Refine all sublattice cells; select sublattice-1 cells by the domain.
    struct SubCell {
        global_verts: Vec<u32>,
        refined: RefinedCell,
        selected: bool,
        fringe: bool,
    }
    let mut sub_cells: Vec<Vec<SubCell>> = vec![Vec::new(), Vec::new()];
    let mut covered = 0.0;
    for s in 0..2 {
        for cell in &sub_pre[s].cells {
            let global_verts: Vec<u32> =
                cell.verts.iter().map(|&l| sub_ids[s][l as usize]).collect();
            let (refined, slab_measure) = if dim == 2 {
                let local: Vec<V2> =
                    cell.verts.iter().map(|&l| sub_pts2[s][l as usize]).collect();
                let refined = refine_cell_2d(&local)?;
                let m = match domain {
                    None => f64::INFINITY,
                    Some(dom) => {
                        if ball_near_slab(cell.center, cell.radius, dom, 0.1) {
                            let a = cells::analyze_cell_2d(&local)?;
                            clip_to_slab_2d(&local, &a.ring, dom, scale)?
                        } else {
                            0.0
                        }
                    }
                };
                (refined, m)
            } else {
                let local: Vec<V3> =
                    cell.verts.iter().map(|&l| sub_pts3[s][l as usize]).collect();
                let refined = refine_cell_3d(&local, scale)?;
                let m = match domain {
                    None => f64::INFINITY,
                    Some(dom) => {
                        if ball_near_slab(cell.center, cell.radius, dom, 0.1) {
                            clip_to_slab_3d(&local, dom, scale)?
                        } else {
                            0.0
                        }
                    }
                };
                (refined, m)
            };
            let threshold = if dim == 2 { 1e-8 * scale * scale } else { 1e-8 * scale.powi(3) };
            let selected = s == 0 && slab_measure > threshold;
            if selected && slab_measure.is_finite() {
                covered += slab_measure;
            }
            sub_cells[s].push(SubCell {
                global_verts,
                refined,
                selected,
                fringe: is_fringe(s, cell.center, cell.radius),
            });
        }
    }

    // Containment: enclosed atoms of the other sublattice, per refined cell.
    let other_grid: [super::NeighborGrid; 2] = [
        super::NeighborGrid::build(
            &sub_ids[1].iter().map(|&i| pts[i as usize]).collect::<Vec<_>>(),
            1.2 * scale,
        ),
        super::NeighborGrid::build(
            &sub_ids[0].iter().map(|&i| pts[i as usize]).collect::<Vec<_>>(),
            1.2 * scale,
        ),
    ];
    let band = 1e-8 * scale;

    // Final pieces, in global atom ids.
    #[derive(Clone)]
    enum Piece {
        Tet([u32; 4]),
        Oct([u32; 6], OctTopology),
        Tri([u32; 3]),
    }
    // (piece, from_selected_cell)
    let mut pieces: Vec<(Piece, bool)> = Vec::new();
    let mut spokes: Vec<(u32, u32)> = Vec::new();
    let mut sub_edges: Vec<(u32, u32)> = Vec::new(); // NNN: edges + inserted diagonals

    for s in 0..2 {
        for sc in &sub_cells[s] {
            for &(a, b) in sc.refined.edges.iter().chain(sc.refined.diagonals.iter()) {
                let (ga, gb) = (sc.global_verts[a as usize], sc.global_verts[b as usize]);
                sub_edges.push((ga.min(gb), ga.max(gb)));
            }
            // Enclosure scan runs on the refined (rigid) cells.
            let enclosed_of = |verts: &[u32], planes: &[(V3, f64)]| -> Result<Vec<u32>> {
                let centroid: V3 =
                    verts.iter().map(|&g| pts[g as usize]).sum::<V3>() / verts.len() as f64;
                let r = verts
                    .iter()
                    .map(|&g| (pts[g as usize] - centroid).norm())
                    .fold(0.0, f64::max);
                let mut found = Vec::new();
                for cand in other_grid[s].within(centroid, r + band) {
                    let gother = if s == 0 { sub_ids[1][cand as usize] } else { sub_ids[0][cand as usize] };
                    match strict_inside(planes, pts[gother as usize], band) {
                        Some(true) => found.push(gother),
                        Some(false) => {}
                        None => {
                            return Err(Error::geometry(format!(
                                "atom {gother} sits on the boundary of cell {verts:?} within \
                                 tolerance; enclosure is ambiguous"
                            )))
                        }
                    }
                }
                Ok(found)
            };

            for t in &sc.refined.tets {
                let g: Vec<u32> = t.iter().map(|&l| sc.global_verts[l as usize]).collect();
                let p: Vec<V3> = g.iter().map(|&i| pts[i as usize]).collect();
                let planes = tet_planes(&p);
                let enclosed = match enclosed_of(&g, &planes) {
                    Ok(v) => v,
                    Err(_) if sc.fringe => Vec::new(),
                    Err(e) => return Err(e),
                };
                if enclosed.is_empty() {
                    if sc.selected {
                        pieces.push((Piece::Tet([g[0], g[1], g[2], g[3]]), true));
                    }
                } else if enclosed.len() == 1 {
                    let y = enclosed[0];
                    for &gv in &g {
                        spokes.push((y.min(gv), y.max(gv)));
                    }
                    if sc.selected {
                        for f in [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]] {
                            pieces.push((Piece::Tet([g[f[0]], g[f[1]], g[f[2]], y]), true));
                        }
                    }
                } else {
                    return Err(Error::geometry(format!(
                        "cell {g:?} encloses {} atoms of the other sublattice",
                        enclosed.len()
                    )));
                }
            }
            for (o, topo) in &sc.refined.octs {
                let g: Vec<u32> = o.iter().map(|&l| sc.global_verts[l as usize]).collect();
                let p: Vec<V3> = g.iter().map(|&i| pts[i as usize]).collect();
                let facets = geom::convex_hull_3d(&p, 1e-7 * scale)?;
                let planes: Vec<(V3, f64)> =
                    facets.iter().map(|f| (f.plane.normal, f.plane.offset)).collect();
                let enclosed = match enclosed_of(&g, &planes) {
                    Ok(v) => v,
                    Err(_) if sc.fringe => Vec::new(),
                    Err(e) => return Err(e),
                };
                let topo_g = OctTopology {
                    diagonals: [0, 1, 2].map(|i| {
                        let (d, e) = (&topo.diagonals[i].0, &topo.diagonals[i].1);
                        (
                            [g[d[0] as usize], g[d[1] as usize]],
                            [
                                g[e[0] as usize],
                                g[e[1] as usize],
                                g[e[2] as usize],
                                g[e[3] as usize],
                            ],
                        )
                    }),
                };
                if enclosed.is_empty() {
                    if sc.selected {
                        pieces.push((
                            Piece::Oct([g[0], g[1], g[2], g[3], g[4], g[5]], topo_g),
                            true,
                        ));
                    }
                } else if enclosed.len() == 1 {
                    let y = enclosed[0];
                    for &gv in &g {
                        spokes.push((y.min(gv), y.max(gv)));
                    }
                    if sc.selected {
                        for f in &facets {
                            let tri: Vec<u32> =
                                f.ring.iter().map(|&l| g[l as usize]).collect();
                            pieces.push((Piece::Tet([tri[0], tri[1], tri[2], y]), true));
                        }
                    }
                } else {
                    return Err(Error::geometry(format!(
                        "cell {g:?} encloses {} atoms of the other sublattice",
                        enclosed.len()
                    )));
                }
            }
            for t in &sc.refined.tris {
                let g: Vec<u32> = t.iter().map(|&l| sc.global_verts[l as usize]).collect();
                let p: Vec<V2> = g
                    .iter()
                    .map(|&i| V2::new(pts[i as usize].x, pts[i as usize].y))
                    .collect();
                let planes = tri_planes(&p);
                let enclosed = match enclosed_of(&g, &planes) {
                    Ok(v) => v,
                    Err(_) if sc.fringe => Vec::new(),
                    Err(e) => return Err(e),
                };
                if enclosed.is_empty() {
                    if sc.selected {
                        pieces.push((Piece::Tri([g[0], g[1], g[2]]), true));
                    }
                } else if enclosed.len() == 1 {
                    let y = enclosed[0];
                    for &gv in &g {
                        spokes.push((y.min(gv), y.max(gv)));
                    }
                    if sc.selected {
                        pieces.push((Piece::Tri([g[0], g[1], y]), true));
                        pieces.push((Piece::Tri([g[1], g[2], y]), true));
                        pieces.push((Piece::Tri([g[2], g[0], y]), true));
                    }
                } else {
                    return Err(Error::geometry(format!(
                        "cell {g:?} encloses {} atoms of the other sublattice",
                        enclosed.len()
                    )));
                }
            }
        }
    }

    // The closed domain: sublattice-1 vertices of selected cells plus the
    // atoms enclosed in them (spokes only arise there when selected... spokes
    // may also connect outside cells; membership filters below).
    let mut omega: BTreeSet<u32> = BTreeSet::new();
    match domain {
        None => {
            omega.extend(0..atoms.len() as u32);
        }
        Some(_) => {
            for sc in &sub_cells[0] {
                if sc.selected {
                    omega.extend(sc.global_verts.iter().copied());
                }
            }
            // Enclosed atoms of selected sublattice-1 cells belong to the
            // closed domain; pieces from selected cells carry exactly those.
            for (piece, from_selected) in &pieces {
                if !from_selected {
                    continue;
                }
                match piece {
                    Piece::Tet(v) => omega.extend(v.iter().copied()),
                    Piece::Oct(v, _) => omega.extend(v.iter().copied()),
                    Piece::Tri(v) => omega.extend(v.iter().copied()),
                }
            }
        }
    }

    let mut bonds: Vec<Bond> = Vec::new();
    for (a, b) in sub_edges {
        if omega.contains(&a) && omega.contains(&b) {
            bonds.push(Bond { a, b, class: BondClass::Nnn });
        }
    }
    for (a, b) in spokes {
        if omega.contains(&a) && omega.contains(&b) {
            bonds.push(Bond { a, b, class: BondClass::Nn });
        }
    }

    let mut cells_out = Vec::new();
    for (piece, from_selected) in pieces {
        if !from_selected {
            continue;
        }
        match piece {
            Piece::Tet(v) => {
                let mut vs = v.to_vec();
                vs.sort_unstable();
                let edges = pairs_of(&vs);
                cells_out.push(Cell {
                    vertices: vs,
                    shape: CellShape::Tetrahedron,
                    edges,
                    oct: None,
                });
            }
            Piece::Oct(v, topo) => {
                let mut vs = v.to_vec();
                vs.sort_unstable();
                let mut edges = Vec::with_capacity(12);
                for (_, eq) in &topo.diagonals {
                    for i in 0..4 {
                        let (a, b) = (eq[i], eq[(i + 1) % 4]);
                        edges.push((a.min(b), a.max(b)));
                    }
                }
                edges.sort_unstable();
                edges.dedup();
                cells_out.push(Cell {
                    vertices: vs,
                    shape: CellShape::Octahedron,
                    edges,
                    oct: Some(topo),
                });
            }
            Piece::Tri(v) => {
                let mut vs = v.to_vec();
                vs.sort_unstable();
                let edges = pairs_of(&vs);
                cells_out.push(Cell {
                    vertices: vs,
                    shape: CellShape::Triangle,
                    edges,
                    oct: None,
                });
            }
        }
    }

    Ok(Assembled { omega: omega.into_iter().collect(), cells: cells_out, bonds, covered_measure: covered })
}

fn tet_planes(p: &[V3]) -> Vec<(V3, f64)> {
    let centroid: V3 = p.iter().sum::<V3>() / 4.0;
    let faces = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
    faces
        .iter()
        .map(|f| {
            let n = (p[f[1]] - p[f[0]]).cross(&(p[f[2]] - p[f[0]]));
            let n = n.normalize();
            let d = n.dot(&p[f[0]]);
            if n.dot(&centroid) > d {
                (-n, -d)
            } else {
                (n, d)
            }
        })
        .collect()
}

fn tri_planes(p: &[V2]) -> Vec<(V3, f64)> {
    let centroid: V2 = p.iter().sum::<V2>() / 3.0;
    (0..3)
        .map(|i| {
            let (a, b) = (p[i], p[(i + 1) % 3]);
            let e = b - a;
            let mut n = V2::new(e.y, -e.x).normalize();
            let mut d = n.dot(&a);
            if n.dot(&centroid) > d {
                n = -n;
                d = -d;
            }
            (V3::new(n.x, n.y, 0.0), d)
        })
        .collect()
}

/// Build the complete biphase system for a spec: closed atom set, rigid
/// tessellation of the cells meeting the slab, triangulation variants, and
/// the full energy bond graph.
pub fn build_system(spec: &LatticeSpec) -> Result<System> {
    spec.validate()?;
    let kind = spec.kind;
    let dom = WireDomain::new(kind, spec.m, spec.k);
    let d_max = kind.max_bond_distance();
    let heights = axis_heights(&dom);
    let margin_cart = MARGIN_FACTOR * d_max;
    let margin_axial = margin_cart / heights[0];
    let margin_trans = margin_cart / heights[1].min(if kind.dim() == 2 { f64::INFINITY } else { heights[2] });
    let cands = lattice::biphase_candidates(spec, margin_axial, margin_trans)?;
    if cands.is_empty() {
        return Err(Error::geometry("empty candidate cloud".to_string()));
    }

    let asm = if kind.two_sublattice() {
        assemble_two_sublattice(&cands, Some(&dom))?
    } else {
        let scale = kind.nn_distance() * spec.rho.min(1.0);
        let reach = REACH_FACTOR * d_max;
        let compute: Vec<u32> = cands
            .atoms
            .iter()
            .filter(|a| {
                let dims = if kind.dim() == 2 { 2 } else { 3 };
                (0..dims).all(|ax| {
                    let (lo, hi) = if ax == 0 { (-dom.m, dom.m) } else { (0.0, dom.k as f64) };
                    let overshoot = (lo - a.xi[ax]).max(a.xi[ax] - hi).max(0.0);
                    overshoot * heights[ax] <= reach
                })
            })
            .map(|a| a.id)
            .collect();
        let pre = precells_3d_guarded(
            &cands.positions(),
            scale,
            POOL_FACTOR * d_max,
            &compute,
            Some(CELL_RADIUS_FACTOR * d_max),
        )?;
        assemble_generic(&cands, &pre, Some(&dom))?
    };

    // The selected cells partition the open slab.
    let expected = dom.measure();
    if (asm.covered_measure - expected).abs() > 1e-8 * expected {
        return Err(Error::geometry(format!(
            "tessellation does not tile the slab: covered {:.12} of {:.12}",
            asm.covered_measure, expected
        )));
    }

    // Reindex the closed domain.
    let mut final_atoms: Vec<crate::lattice::Atom> =
        asm.omega.iter().map(|&i| cands.atoms[i as usize]).collect();
    final_atoms.sort_by(|a, b| {
        a.xi[0]
            .total_cmp(&b.xi[0])
            .then(a.xi[1].total_cmp(&b.xi[1]))
            .then(a.xi[2].total_cmp(&b.xi[2]))
            .then(a.basis.cmp(&b.basis))
    });
    let mut remap: HashMap<u32, u32> = HashMap::new();
    for (new_id, atom) in final_atoms.iter_mut().enumerate() {
        remap.insert(atom.id, new_id as u32);
        atom.id = new_id as u32;
    }
    let atoms = AtomSet { kind, rho: spec.rho, atoms: final_atoms };

    let mut cells = Vec::with_capacity(asm.cells.len());
    for c in asm.cells {
        let vertices: Vec<u32> = c.vertices.iter().map(|v| remap[v]).collect();
        let mut vs = vertices.clone();
        vs.sort_unstable();
        let edges: Vec<(u32, u32)> = c
            .edges
            .iter()
            .map(|&(a, b)| {
                let (a, b) = (remap[&a], remap[&b]);
                (a.min(b), a.max(b))
            })
            .collect();
        let oct = c.oct.map(|t| OctTopology {
            diagonals: [0, 1, 2].map(|i| {
                let (d, e) = (&t.diagonals[i].0, &t.diagonals[i].1);
                (
                    [remap[&d[0]], remap[&d[1]]],
                    [remap[&e[0]], remap[&e[1]], remap[&e[2]], remap[&e[3]]],
                )
            }),
        });
        cells.push(Cell { vertices: vs, shape: c.shape, edges, oct });
    }
    // Deterministic cell order.
    cells.sort_by(|a, b| a.vertices.cmp(&b.vertices));

    let bonds = BondGraph::from_raw(asm.bonds.into_iter().map(|e| Bond {
        a: remap[&e.a],
        b: remap[&e.b],
        class: e.class,
    }))?;

    let positions = atoms.positions();
    let v1 = variant_simplices(&cells, &positions, 0);
    let v2 = variant_simplices(&cells, &positions, 1);
    let v3 = variant_simplices(&cells, &positions, 2);
    let tess = Tessellation {
        dim: kind.dim(),
        cells,
        variants: [v1.0, v2.0, v3.0],
        provenance: merge_provenance([v1.1, v2.1, v3.1]),
    };

    Ok(System { spec: *spec, domain: dom, atoms, tess, bonds })
}

/// A complete biphase problem instance.
#[derive(Debug, Clone)]
pub struct System {
    pub spec: LatticeSpec,
    pub domain: WireDomain,
    pub atoms: AtomSet,
    pub tess: Tessellation,
    pub bonds: BondGraph,
}

impl System {
    /// Site-key index for carrying deformations between systems generated at
    /// different slab lengths.
    pub fn site_index(&self) -> HashMap<(crate::lattice::Phase, [i32; 3], u8), u32> {
        self.atoms.atoms.iter().map(|a| (a.site_key(), a.id)).collect()
    }
}

/// Wrapper used by the public `rigid_tessellation` (finite-cloud semantics).
pub(crate) fn refine_generic(
    atoms: &AtomSet,
    pre: &Pretriangulation,
    domain: Option<&WireDomain>,
) -> Result<(Tessellation, BondGraph)> {
    let asm = assemble_generic(atoms, pre, domain)?;
    finish(atoms, asm)
}

pub(crate) fn finish(atoms: &AtomSet, asm: Assembled) -> Result<(Tessellation, BondGraph)> {
    let positions = atoms.positions();
    let mut cells = asm.cells;
    cells.sort_by(|a, b| a.vertices.cmp(&b.vertices));
    let v1 = variant_simplices(&cells, &positions, 0);
    let v2 = variant_simplices(&cells, &positions, 1);
    let v3 = variant_simplices(&cells, &positions, 2);
    let tess = Tessellation {
        dim: atoms.dim(),
        cells,
        variants: [v1.0, v2.0, v3.0],
        provenance: merge_provenance([v1.1, v2.1, v3.1]),
    };
    Ok((tess, BondGraph::from_raw(asm.bonds)?))
}
