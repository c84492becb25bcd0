//! Shape analysis of pretriangulation cells and their refinement into rigid
//! cells (tetrahedra and octahedra) by facet-diagonal insertion.

use crate::error::{Error, Result};
use crate::geom::{self, HullFacet, V2, V3};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellShape {
    Tetrahedron,
    Octahedron,
    /// Pretriangulation intermediate only; never present after refinement.
    RawPolyhedron,
    /// 2D simplex.
    Triangle,
    /// 2D pretriangulation intermediate (cocircular cluster).
    Polygon,
}

/// Octahedron connectivity: the three diagonals, each paired with the
/// 4-cycle of its equator. Indices are local (0..6).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct OctTopology {
    pub diagonals: [([u32; 2], [u32; 4]); 3],
}

#[derive(Debug, Clone)]
pub struct CellAnalysis {
    pub shape: CellShape,
    /// Local-index edges of the cell polytope (1-faces; diagonals excluded).
    pub edges: Vec<(u32, u32)>,
    /// Hull facets (3D only).
    pub facets: Vec<HullFacet>,
    pub volume: f64,
    pub oct: Option<OctTopology>,
}

fn lex_max(points: &[V3], ids: impl Iterator<Item = u32>) -> u32 {
    ids.max_by(|&a, &b| {
        let (pa, pb) = (points[a as usize], points[b as usize]);
        pa.x.total_cmp(&pb.x).then(pa.y.total_cmp(&pb.y)).then(pa.z.total_cmp(&pb.z))
    })
    .expect("nonempty id set")
}

/// Classify a 3D cell given its vertex positions (all extreme, cospherical).
pub fn analyze_cell_3d(points: &[V3], eps: f64) -> Result<CellAnalysis> {
    let n = points.len();
    if n < 4 {
        return Err(Error::geometry(format!("3d cell with {n} vertices")));
    }
    if n == 4 {
        let vol = geom::tet_volume(points[0], points[1], points[2], points[3]).abs();
        if vol <= eps.powi(3) {
            return Err(Error::geometry("degenerate tetrahedron cell".to_string()));
        }
        let edges = vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        let facets = geom::convex_hull_3d(points, eps)?;
        return Ok(CellAnalysis {
            shape: CellShape::Tetrahedron,
            edges,
            facets,
            volume: vol,
            oct: None,
        });
    }
    let facets = geom::convex_hull_3d(points, eps)?;
    let edges = geom::hull_edges(&facets);
    let volume = hull_volume(points, &facets);
    let all_triangles = facets.iter().all(|f| f.ring.len() == 3);
    if n == 6 && all_triangles && facets.len() == 8 {
        if let Some(oct) = octahedron_topology(&edges) {
            return Ok(CellAnalysis {
                shape: CellShape::Octahedron,
                edges,
                facets,
                volume,
                oct: Some(oct),
            });
        }
    }
    Ok(CellAnalysis {
        shape: CellShape::RawPolyhedron,
        edges,
        facets,
        volume,
        oct: None,
    })
}

pub fn hull_volume(points: &[V3], facets: &[HullFacet]) -> f64 {
    let c: V3 = points.iter().sum::<V3>() / points.len() as f64;
    facets
        .iter()
        .map(|f| {
            let ring: Vec<V3> = f.ring.iter().map(|&i| points[i as usize]).collect();
            let h = (f.plane.offset - f.plane.normal.dot(&c)).max(0.0);
            geom::polygon_area_3d(&ring) * h / 3.0
        })
        .sum()
}

/// Recognize octahedron connectivity: 6 vertices, each adjacent to 4 others,
/// with one antipode; diagonals paired with equator 4-cycles.
fn octahedron_topology(edges: &[(u32, u32)]) -> Option<OctTopology> {
    if edges.len() != 12 {
        return None;
    }
    let mut adj = vec![BTreeSet::new(); 6];
    for &(a, b) in edges {
        if a >= 6 || b >= 6 {
            return None;
        }
        adj[a as usize].insert(b);
        adj[b as usize].insert(a);
    }
    if adj.iter().any(|s| s.len() != 4) {
        return None;
    }
    let mut seen = BTreeSet::new();
    let mut diagonals = Vec::new();
    for v in 0..6u32 {
        let anti: Vec<u32> = (0..6u32).filter(|&w| w != v && !adj[v as usize].contains(&w)).collect();
        if anti.len() != 1 {
            return None;
        }
        let pair = (v.min(anti[0]), v.max(anti[0]));
        if seen.insert(pair) {
            let eq: Vec<u32> = (0..6u32).filter(|&w| w != pair.0 && w != pair.1).collect();
            // Order the equator into a cycle.
            let mut cycle = vec![eq[0]];
            while cycle.len() < 4 {
                let last = *cycle.last().unwrap();
                let next = eq
                    .iter()
                    .copied()
                    .find(|&w| !cycle.contains(&w) && adj[last as usize].contains(&w))?;
                cycle.push(next);
            }
            if !adj[cycle[3] as usize].contains(&cycle[0]) {
                return None;
            }
            diagonals.push(([pair.0, pair.1], [cycle[0], cycle[1], cycle[2], cycle[3]]));
        }
    }
    if diagonals.len() != 3 {
        return None;
    }
    Some(OctTopology { diagonals: [diagonals[0].clone(), diagonals[1].clone(), diagonals[2].clone()] })
}

/// Result of refining one raw cell.
#[derive(Debug, Clone)]
pub struct RawRefinement {
    /// Tetrahedra as local index quadruples.
    pub tets: Vec<[u32; 4]>,
    /// Embedded octahedra (local indices + topology).
    pub octs: Vec<([u32; 6], OctTopology)>,
    /// Inserted facet diagonals, local index pairs.
    pub diagonals: Vec<(u32, u32)>,
}

/// Triangulate polygonal facets by the deterministic diagonal rule — fan from
/// the facet vertex that is lexicographically maximal in (x1, x2, x3) — then
/// decompose the cell into tetrahedra/octahedra whose edges all lie in the
/// boundary-edge-plus-diagonal set. Fails with a cell dump when no such
/// decomposition exists.
pub fn refine_raw_3d(points: &[V3], analysis: &CellAnalysis) -> Result<RawRefinement> {
    let n = points.len() as u32;
    if n > 16 {
        return Err(Error::Irreducible(format!(
            "raw cell with {n} vertices exceeds the supported size; vertices: {points:?}"
        )));
    }
    let mut allowed: BTreeSet<(u32, u32)> = analysis.edges.iter().copied().collect();
    let mut diagonals: Vec<(u32, u32)> = Vec::new();
    let mut boundary: Vec<[u32; 3]> = Vec::new();
    for f in &analysis.facets {
        if f.ring.len() == 3 {
            boundary.push(sorted3(f.ring[0], f.ring[1], f.ring[2]));
            continue;
        }
        let apex = lex_max(points, f.ring.iter().copied());
        let pos = f.ring.iter().position(|&v| v == apex).unwrap();
        let m = f.ring.len();
        for t in 1..m - 1 {
            let a = f.ring[(pos + t) % m];
            let b = f.ring[(pos + t + 1) % m];
            boundary.push(sorted3(apex, a, b));
        }
        for t in 2..m - 1 {
            let w = f.ring[(pos + t) % m];
            let key = (apex.min(w), apex.max(w));
            if allowed.insert(key) {
                diagonals.push(key);
            }
        }
    }

    // Candidate cells: every tetrahedron (and octahedron) all of whose edges
    // are allowed. Cell vertices are cospherical, so no candidate contains
    // another vertex in its interior.
    #[derive(Clone)]
    struct Candidate {
        faces: Vec<[u32; 3]>,
        volume: f64,
        tet: Option<[u32; 4]>,
        oct: Option<([u32; 6], OctTopology)>,
    }
    let mut candidates: Vec<Candidate> = Vec::new();
    let ids: Vec<u32> = (0..n).collect();
    let ok = |a: u32, b: u32| allowed.contains(&(a.min(b), a.max(b)));
    for i in 0..ids.len() {
        for j in i + 1..ids.len() {
            if !ok(ids[i], ids[j]) {
                continue;
            }
            for k in j + 1..ids.len() {
                if !ok(ids[i], ids[k]) || !ok(ids[j], ids[k]) {
                    continue;
                }
                for l in k + 1..ids.len() {
                    if !ok(ids[i], ids[l]) || !ok(ids[j], ids[l]) || !ok(ids[k], ids[l]) {
                        continue;
                    }
                    let (a, b, c, d) = (ids[i], ids[j], ids[k], ids[l]);
                    let vol = geom::tet_volume(
                        points[a as usize],
                        points[b as usize],
                        points[c as usize],
                        points[d as usize],
                    )
                    .abs();
                    if vol < 1e-12 {
                        continue;
                    }
                    candidates.push(Candidate {
                        faces: vec![
                            sorted3(a, b, c),
                            sorted3(a, b, d),
                            sorted3(a, c, d),
                            sorted3(b, c, d),
                        ],
                        volume: vol,
                        tet: Some([a, b, c, d]),
                        oct: None,
                    });
                }
            }
        }
    }
    // Octahedron candidates: 6-subsets whose induced hull is a combinatorial
    // octahedron with all 12 edges allowed.
    if n >= 6 {
        let idvec: Vec<u32> = (0..n).collect();
        for combo in combinations(&idvec, 6) {
            let sub: Vec<V3> = combo.iter().map(|&i| points[i as usize]).collect();
            let Ok(facets) = geom::convex_hull_3d(&sub, 1e-9) else { continue };
            if facets.len() != 8 || facets.iter().any(|f| f.ring.len() != 3) {
                continue;
            }
            let edges = geom::hull_edges(&facets);
            let Some(topo) = octahedron_topology(&edges) else { continue };
            if !edges.iter().all(|&(a, b)| ok(combo[a as usize], combo[b as usize])) {
                continue;
            }
            let faces = facets
                .iter()
                .map(|f| {
                    sorted3(
                        combo[f.ring[0] as usize],
                        combo[f.ring[1] as usize],
                        combo[f.ring[2] as usize],
                    )
                })
                .collect();
            let relabel = |t: &OctTopology| OctTopology {
                diagonals: [0, 1, 2].map(|i| {
                    let (d, e) = (&t.diagonals[i].0, &t.diagonals[i].1);
                    (
                        [combo[d[0] as usize], combo[d[1] as usize]],
                        [
                            combo[e[0] as usize],
                            combo[e[1] as usize],
                            combo[e[2] as usize],
                            combo[e[3] as usize],
                        ],
                    )
                }),
            };
            let vol = hull_volume(&sub, &facets);
            candidates.push(Candidate {
                faces,
                volume: vol,
                tet: None,
                oct: Some((
                    [combo[0], combo[1], combo[2], combo[3], combo[4], combo[5]],
                    relabel(&topo),
                )),
            });
        }
    }

    // Exact cover by faces: boundary triangles once, interior triangles twice.
    let boundary_set: BTreeSet<[u32; 3]> = boundary.iter().copied().collect();
    let mut count: BTreeMap<[u32; 3], u32> = BTreeMap::new();
    let target_vol = analysis.volume;
    let mut chosen: Vec<usize> = Vec::new();

    fn open_face(
        count: &BTreeMap<[u32; 3], u32>,
        boundary: &BTreeSet<[u32; 3]>,
        all_boundary: &[[u32; 3]],
    ) -> Option<[u32; 3]> {
        for t in all_boundary {
            if count.get(t).copied().unwrap_or(0) == 0 {
                return Some(*t);
            }
        }
        count
            .iter()
            .find(|(t, &c)| c == 1 && !boundary.contains(*t))
            .map(|(t, _)| *t)
    }

    fn search(
        candidates: &[Candidate],
        count: &mut BTreeMap<[u32; 3], u32>,
        boundary: &BTreeSet<[u32; 3]>,
        all_boundary: &[[u32; 3]],
        chosen: &mut Vec<usize>,
        vol_acc: f64,
        target: f64,
    ) -> bool {
        let Some(face) = open_face(count, boundary, all_boundary) else {
            return (vol_acc - target).abs() <= 1e-8 * target.max(1e-30);
        };
        for (ci, cand) in candidates.iter().enumerate() {
            if chosen.contains(&ci) || !cand.faces.contains(&face) {
                continue;
            }
            if vol_acc + cand.volume > target * (1.0 + 1e-8) {
                continue;
            }
            let mut valid = true;
            for t in &cand.faces {
                let limit = if boundary.contains(t) { 1 } else { 2 };
                if count.get(t).copied().unwrap_or(0) + 1 > limit {
                    valid = false;
                    break;
                }
            }
            if !valid {
                continue;
            }
            for t in &cand.faces {
                *count.entry(*t).or_insert(0) += 1;
            }
            chosen.push(ci);
            if search(candidates, count, boundary, all_boundary, chosen, vol_acc + cand.volume, target)
            {
                return true;
            }
            chosen.pop();
            for t in &cand.faces {
                let e = count.get_mut(t).unwrap();
                *e -= 1;
                if *e == 0 {
                    count.remove(t);
                }
            }
        }
        false
    }

    if !search(
        &candidates,
        &mut count,
        &boundary_set,
        &boundary,
        &mut chosen,
        0.0,
        target_vol,
    ) {
        return Err(Error::Irreducible(format!(
            "no tetrahedron/octahedron cover found; vertices: {points:?}"
        )));
    }
    let mut tets = Vec::new();
    let mut octs = Vec::new();
    for &ci in &chosen {
        if let Some(t) = candidates[ci].tet {
            tets.push(t);
        } else if let Some(o) = candidates[ci].oct.clone() {
            octs.push(o);
        }
    }
    Ok(RawRefinement { tets, octs, diagonals })
}

fn sorted3(a: u32, b: u32, c: u32) -> [u32; 3] {
    let mut t = [a, b, c];
    t.sort_unstable();
    t
}

fn combinations(ids: &[u32], k: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(ids: &[u32], k: usize, start: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..ids.len() {
            cur.push(ids[i]);
            rec(ids, k, i + 1, cur, out);
            cur.pop();
        }
    }
    rec(ids, k, 0, &mut cur, &mut out);
    out
}

// ---------------------------------------------------------------------------
// 2D cells
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CellAnalysis2 {
    pub shape: CellShape,
    /// Boundary edges of the polygon, local indices.
    pub edges: Vec<(u32, u32)>,
    /// Convex ring order.
    pub ring: Vec<u32>,
}

pub fn analyze_cell_2d(points: &[V2]) -> Result<CellAnalysis2> {
    let n = points.len();
    if n < 3 {
        return Err(Error::geometry(format!("2d cell with {n} vertices")));
    }
    let c: V2 = points.iter().sum::<V2>() / n as f64;
    let mut ring: Vec<u32> = (0..n as u32).collect();
    ring.sort_by(|&a, &b| {
        let ra = points[a as usize] - c;
        let rb = points[b as usize] - c;
        ra.y.atan2(ra.x).total_cmp(&rb.y.atan2(rb.x))
    });
    let edges: Vec<(u32, u32)> = (0..n)
        .map(|i| {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            (a.min(b), a.max(b))
        })
        .collect();
    Ok(CellAnalysis2 {
        shape: if n == 3 { CellShape::Triangle } else { CellShape::Polygon },
        edges,
        ring,
    })
}

/// Fan-triangulate a polygon cell from its lexicographically maximal vertex.
/// Returns (triangles, inserted diagonals), local indices.
pub fn refine_polygon(points: &[V2], ring: &[u32]) -> (Vec<[u32; 3]>, Vec<(u32, u32)>) {
    let apex = *ring
        .iter()
        .max_by(|&&a, &&b| {
            let (pa, pb) = (points[a as usize], points[b as usize]);
            pa.x.total_cmp(&pb.x).then(pa.y.total_cmp(&pb.y))
        })
        .unwrap();
    let m = ring.len();
    let pos = ring.iter().position(|&v| v == apex).unwrap();
    let mut tris = Vec::new();
    let mut diags = Vec::new();
    for t in 1..m - 1 {
        let a = ring[(pos + t) % m];
        let b = ring[(pos + t + 1) % m];
        tris.push([apex, a, b]);
    }
    for t in 2..m - 1 {
        let w = ring[(pos + t) % m];
        diags.push((apex.min(w), apex.max(w)));
    }
    (tris, diags)
}
