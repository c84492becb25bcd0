//! Convex geometry kernel: halfspace clipping of convex polytopes in 2D/3D,
//! brute-force convex hulls for small vertex sets, and volume/area helpers.
//!
//! All predicates are tolerance-banded doubles. Inputs are lattice points and
//! their bisector planes, which sit far from predicate boundaries except for
//! deliberate cosphericity; that case is resolved by the callers' merge rules,
//! not here.

use crate::error::{Error, Result};
use nalgebra::{Vector2, Vector3};

pub type V3 = Vector3<f64>;
pub type V2 = Vector2<f64>;

/// Halfspace `n . z <= offset` with unit outward normal.
#[derive(Debug, Clone, Copy)]
pub struct Plane {
    pub normal: V3,
    pub offset: f64,
}

impl Plane {
    pub fn new(normal: V3, offset: f64) -> Self {
        Plane { normal, offset }
    }

    /// Perpendicular bisector of the segment from `a` to `b`, oriented so that
    /// `a` is inside.
    pub fn bisector(a: V3, b: V3) -> Self {
        let n = (b - a).normalize();
        let mid = (a + b) * 0.5;
        Plane { normal: n, offset: n.dot(&mid) }
    }

    pub fn signed(&self, p: V3) -> f64 {
        self.normal.dot(&p) - self.offset
    }
}

/// Where a clip plane came from; lets Voronoi callers tell genuine bisector
/// facets from artificial bounding-box facets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceSource {
    BoundingBox,
    Neighbor(u32),
}

#[derive(Debug, Clone)]
pub struct Face3 {
    pub plane: Plane,
    pub source: FaceSource,
    /// Vertex ids ordered around the face (orientation unspecified).
    pub ring: Vec<u32>,
}

/// Convex polyhedron as a vertex pool plus polygonal faces.
#[derive(Debug, Clone)]
pub struct ConvexPoly3 {
    pub verts: Vec<V3>,
    pub faces: Vec<Face3>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClipOutcome {
    /// Plane does not touch the cell.
    Untouched,
    /// Plane touches only at vertices/edges (zero-area contact); no change.
    Grazing,
    /// Plane removed a nonempty piece and contributed a face.
    Cut,
}

impl ConvexPoly3 {
    /// Axis-aligned box.
    pub fn from_box(lo: V3, hi: V3) -> Self {
        let v = |i: usize| {
            V3::new(
                if i & 1 == 0 { lo.x } else { hi.x },
                if i & 2 == 0 { lo.y } else { hi.y },
                if i & 4 == 0 { lo.z } else { hi.z },
            )
        };
        let verts: Vec<V3> = (0..8).map(v).collect();
        // Rings chosen so consecutive vertices share an edge of the box.
        let mk = |n: V3, d: f64, ring: [u32; 4]| Face3 {
            plane: Plane::new(n, d),
            source: FaceSource::BoundingBox,
            ring: ring.to_vec(),
        };
        let faces = vec![
            mk(V3::new(-1.0, 0.0, 0.0), -lo.x, [0, 2, 6, 4]),
            mk(V3::new(1.0, 0.0, 0.0), hi.x, [1, 3, 7, 5]),
            mk(V3::new(0.0, -1.0, 0.0), -lo.y, [0, 1, 5, 4]),
            mk(V3::new(0.0, 1.0, 0.0), hi.y, [2, 3, 7, 6]),
            mk(V3::new(0.0, 0.0, -1.0), -lo.z, [0, 1, 3, 2]),
            mk(V3::new(0.0, 0.0, 1.0), hi.z, [4, 5, 7, 6]),
        ];
        ConvexPoly3 { verts, faces }
    }

    /// Clip by `plane` keeping the `n . z <= offset` side. `eps` is the
    /// on-plane band in absolute distance units. Errors when the plane would
    /// remove the whole cell; Voronoi bisectors never do.
    pub fn clip(&mut self, plane: Plane, source: FaceSource, eps: f64) -> Result<ClipOutcome> {
        self.clip_or_empty(plane, source, eps)?.ok_or_else(|| {
            Error::geometry(format!(
                "clip plane removes the entire cell (offset {:.17e})",
                plane.offset
            ))
        })
    }

    /// As `clip`, but an emptied cell is reported as `None` instead of an
    /// error (used for region-intersection tests).
    pub fn clip_or_empty(
        &mut self,
        plane: Plane,
        source: FaceSource,
        eps: f64,
    ) -> Result<Option<ClipOutcome>> {
        let s: Vec<f64> = self.verts.iter().map(|&v| plane.signed(v)).collect();
        let class = |i: u32| -> i8 {
            let si = s[i as usize];
            if si > eps {
                1
            } else if si < -eps {
                -1
            } else {
                0
            }
        };
        let any_out = (0..self.verts.len() as u32).any(|i| class(i) > 0);
        if !any_out {
            let any_on = (0..self.verts.len() as u32).any(|i| class(i) == 0);
            return Ok(Some(if any_on { ClipOutcome::Grazing } else { ClipOutcome::Untouched }));
        }
        let any_in = (0..self.verts.len() as u32).any(|i| class(i) < 0);
        if !any_in {
            return Ok(None);
        }

        // Intersection points on strictly crossing edges, one per undirected edge.
        let mut cut: std::collections::HashMap<(u32, u32), u32> = std::collections::HashMap::new();
        let mut new_verts = self.verts.clone();
        let mut cross = |a: u32, b: u32, verts: &mut Vec<V3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *cut.entry(key).or_insert_with(|| {
                let (sa, sb) = (s[a as usize], s[b as usize]);
                let t = sa / (sa - sb);
                let p = verts[a as usize] + (verts[b as usize] - verts[a as usize]) * t;
                verts.push(p);
                (verts.len() - 1) as u32
            })
        };

        let mut new_faces: Vec<Face3> = Vec::with_capacity(self.faces.len() + 1);
        let mut on_plane_used: std::collections::BTreeSet<u32> = std::collections::BTreeSet::new();
        for face in &self.faces {
            let ring = &face.ring;
            let mut out: Vec<u32> = Vec::with_capacity(ring.len() + 2);
            for i in 0..ring.len() {
                let a = ring[i];
                let b = ring[(i + 1) % ring.len()];
                if class(a) <= 0 {
                    out.push(a);
                }
                if class(a) as i16 * class(b) as i16 == -1 {
                    out.push(cross(a, b, &mut new_verts));
                }
            }
            out.dedup();
            if out.len() >= 2 && out[0] == *out.last().unwrap() {
                out.pop();
            }
            if out.len() < 3 {
                continue;
            }
            // A face whose surviving ring lies entirely in the cut plane
            // duplicates the new face; drop it.
            if out.iter().all(|&i| {
                i as usize >= s.len() || class(i) == 0
            }) {
                continue;
            }
            for &i in &out {
                if (i as usize) < s.len() && class(i) == 0 {
                    on_plane_used.insert(i);
                }
            }
            new_faces.push(Face3 { plane: face.plane, source: face.source, ring: out });
        }

        // The closing face: all cut points plus on-plane vertices still in use.
        let mut section: Vec<u32> = cut.values().copied().collect();
        section.extend(on_plane_used.iter().copied());
        section.sort_unstable();
        section.dedup();
        if section.len() >= 3 {
            let ring = order_coplanar_ring(&new_verts, &section, plane.normal);
            new_faces.push(Face3 { plane, source, ring });
        }

        // Compact: drop unreferenced vertices.
        let mut remap = vec![u32::MAX; new_verts.len()];
        let mut verts = Vec::with_capacity(new_verts.len());
        for f in &new_faces {
            for &i in &f.ring {
                if remap[i as usize] == u32::MAX {
                    remap[i as usize] = verts.len() as u32;
                    verts.push(new_verts[i as usize]);
                }
            }
        }
        for f in &mut new_faces {
            for i in &mut f.ring {
                *i = remap[*i as usize];
            }
        }
        if new_faces.len() < 4 {
            return Err(Error::geometry("clip left fewer than 4 faces".to_string()));
        }
        self.verts = verts;
        self.faces = new_faces;
        Ok(Some(ClipOutcome::Cut))
    }

    pub fn centroid(&self) -> V3 {
        self.verts.iter().sum::<V3>() / self.verts.len() as f64
    }

    pub fn face_area(&self, face: &Face3) -> f64 {
        polygon_area_3d(&face.ring.iter().map(|&i| self.verts[i as usize]).collect::<Vec<_>>())
    }

    /// Volume via face pyramids over the centroid; valid for convex cells.
    pub fn volume(&self) -> f64 {
        let c = self.centroid();
        self.faces
            .iter()
            .map(|f| {
                let h = (f.plane.offset - f.plane.normal.dot(&c)).max(0.0);
                self.face_area(f) * h / 3.0
            })
            .sum()
    }

    /// Max distance from `p` to any vertex.
    pub fn radius_about(&self, p: V3) -> f64 {
        self.verts.iter().map(|v| (v - p).norm()).fold(0.0, f64::max)
    }

    pub fn contains(&self, p: V3, eps: f64) -> bool {
        self.faces.iter().all(|f| f.plane.signed(p) <= eps)
    }
}

/// Order coplanar points into a convex ring around their centroid.
pub fn order_coplanar_ring(verts: &[V3], ids: &[u32], normal: V3) -> Vec<u32> {
    let c: V3 = ids.iter().map(|&i| verts[i as usize]).sum::<V3>() / ids.len() as f64;
    let mut e1 = normal.cross(&V3::new(1.0, 0.0, 0.0));
    if e1.norm() < 1e-6 {
        e1 = normal.cross(&V3::new(0.0, 1.0, 0.0));
    }
    let e1 = e1.normalize();
    let e2 = normal.cross(&e1).normalize();
    let mut order: Vec<(f64, u32)> = ids
        .iter()
        .map(|&i| {
            let r = verts[i as usize] - c;
            (r.dot(&e2).atan2(r.dot(&e1)), i)
        })
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    order.into_iter().map(|(_, i)| i).collect()
}

/// Area of a planar polygon embedded in 3D.
pub fn polygon_area_3d(pts: &[V3]) -> f64 {
    if pts.len() < 3 {
        return 0.0;
    }
    let c: V3 = pts.iter().sum::<V3>() / pts.len() as f64;
    let mut acc = V3::zeros();
    for i in 0..pts.len() {
        let a = pts[i] - c;
        let b = pts[(i + 1) % pts.len()] - c;
        acc += a.cross(&b);
    }
    acc.norm() * 0.5
}

/// Signed volume of the tetrahedron (a, b, c, d).
pub fn tet_volume(a: V3, b: V3, c: V3, d: V3) -> f64 {
    (b - a).cross(&(c - a)).dot(&(d - a)) / 6.0
}

/// One facet of a small convex hull.
#[derive(Debug, Clone)]
pub struct HullFacet {
    pub plane: Plane,
    /// Indices into the input point slice, ordered around the facet.
    pub ring: Vec<u32>,
}

/// Brute-force convex hull of a small point set (all points assumed extreme,
/// as for Delaunay cell vertices). Coplanar point groups yield polygonal
/// facets. `eps` is the coplanarity band in distance units.
pub fn convex_hull_3d(pts: &[V3], eps: f64) -> Result<Vec<HullFacet>> {
    let n = pts.len();
    if n < 4 {
        return Err(Error::geometry(format!("hull needs >= 4 points, got {n}")));
    }
    let c: V3 = pts.iter().sum::<V3>() / n as f64;
    let mut facets: Vec<HullFacet> = Vec::new();
    let mut seen: std::collections::BTreeSet<Vec<u32>> = std::collections::BTreeSet::new();
    let scale = pts.iter().map(|p| (p - c).norm()).fold(0.0, f64::max).max(1e-300);
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                let nrm = (pts[j] - pts[i]).cross(&(pts[k] - pts[i]));
                if nrm.norm() <= 1e-12 * scale * scale {
                    continue;
                }
                let mut nrm = nrm.normalize();
                let mut d = nrm.dot(&pts[i]);
                if nrm.dot(&c) > d {
                    nrm = -nrm;
                    d = -d;
                }
                let sd: Vec<f64> = pts.iter().map(|p| nrm.dot(p) - d).collect();
                if sd.iter().any(|&s| s > eps) {
                    continue;
                }
                let mut members: Vec<u32> =
                    (0..n as u32).filter(|&m| sd[m as usize].abs() <= eps).collect();
                members.sort_unstable();
                if members.len() < 3 || !seen.insert(members.clone()) {
                    continue;
                }
                let ring = order_coplanar_ring(pts, &members, nrm);
                facets.push(HullFacet { plane: Plane::new(nrm, d), ring });
            }
        }
    }
    // Structural sanity: every point extreme, each ring edge shared by two facets.
    let mut on_hull = vec![false; n];
    let mut edge_count: std::collections::HashMap<(u32, u32), u32> = std::collections::HashMap::new();
    for f in &facets {
        for w in 0..f.ring.len() {
            let a = f.ring[w];
            let b = f.ring[(w + 1) % f.ring.len()];
            on_hull[a as usize] = true;
            *edge_count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    if on_hull.iter().any(|&x| !x) {
        return Err(Error::geometry("hull input contains a non-extreme point".to_string()));
    }
    if edge_count.values().any(|&c| c != 2) {
        return Err(Error::geometry(format!(
            "inconsistent hull edge incidence on {} points",
            n
        )));
    }
    let v = n as i64;
    let e = edge_count.len() as i64;
    let f = facets.len() as i64;
    if v - e + f != 2 {
        return Err(Error::geometry(format!("hull Euler check failed: V={v} E={e} F={f}")));
    }
    Ok(facets)
}

/// Unique undirected edges of a hull facet list.
pub fn hull_edges(facets: &[HullFacet]) -> Vec<(u32, u32)> {
    let mut edges: std::collections::BTreeSet<(u32, u32)> = std::collections::BTreeSet::new();
    for f in facets {
        for w in 0..f.ring.len() {
            let a = f.ring[w];
            let b = f.ring[(w + 1) % f.ring.len()];
            edges.insert((a.min(b), a.max(b)));
        }
    }
    edges.into_iter().collect()
}

// ---------------------------------------------------------------------------
// 2D kernel
// ---------------------------------------------------------------------------

/// Halfplane `n . z <= offset`.
#[derive(Debug, Clone, Copy)]
pub struct Line2 {
    pub normal: V2,
    pub offset: f64,
}

impl Line2 {
    pub fn bisector(a: V2, b: V2) -> Self {
        let n = (b - a).normalize();
        let mid = (a + b) * 0.5;
        Line2 { normal: n, offset: n.dot(&mid) }
    }
    pub fn signed(&self, p: V2) -> f64 {
        self.normal.dot(&p) - self.offset
    }
}

/// Convex polygon, counter-clockwise ring, with per-edge sources.
/// `sources[i]` labels the edge from `verts[i]` to `verts[i+1]`.
#[derive(Debug, Clone)]
pub struct ConvexPoly2 {
    pub verts: Vec<V2>,
    pub sources: Vec<FaceSource>,
}

impl ConvexPoly2 {
    pub fn from_box(lo: V2, hi: V2) -> Self {
        ConvexPoly2 {
            verts: vec![lo, V2::new(hi.x, lo.y), hi, V2::new(lo.x, hi.y)],
            sources: vec![FaceSource::BoundingBox; 4],
        }
    }

    pub fn clip(&mut self, line: Line2, source: FaceSource, eps: f64) -> Result<ClipOutcome> {
        self.clip_or_empty(line, source, eps)?
            .ok_or_else(|| Error::geometry("2d clip removes the entire cell".to_string()))
    }

    pub fn clip_or_empty(
        &mut self,
        line: Line2,
        source: FaceSource,
        eps: f64,
    ) -> Result<Option<ClipOutcome>> {
        let s: Vec<f64> = self.verts.iter().map(|&v| line.signed(v)).collect();
        let cls: Vec<i8> = s
            .iter()
            .map(|&x| if x > eps { 1 } else if x < -eps { -1 } else { 0 })
            .collect();
        if !cls.iter().any(|&c| c > 0) {
            return Ok(Some(if cls.iter().any(|&c| c == 0) {
                ClipOutcome::Grazing
            } else {
                ClipOutcome::Untouched
            }));
        }
        if !cls.iter().any(|&c| c < 0) {
            return Ok(None);
        }
        let n = self.verts.len();
        let mut verts = Vec::with_capacity(n + 2);
        let mut sources = Vec::with_capacity(n + 2);
        for i in 0..n {
            let j = (i + 1) % n;
            if cls[i] <= 0 {
                verts.push(self.verts[i]);
                sources.push(self.sources[i]);
            }
            if cls[i] as i16 * cls[j] as i16 == -1 {
                let t = s[i] / (s[i] - s[j]);
                verts.push(self.verts[i] + (self.verts[j] - self.verts[i]) * t);
                sources.push(self.sources[i]);
            }
        }
        // Rewrite edge sources: any edge whose both endpoints lie on the cut
        // line belongs to the new halfplane.
        let m = verts.len();
        if m < 3 {
            return Err(Error::geometry("2d clip left fewer than 3 vertices".to_string()));
        }
        for i in 0..m {
            let j = (i + 1) % m;
            if line.signed(verts[i]).abs() <= eps && line.signed(verts[j]).abs() <= eps {
                sources[i] = source;
            }
        }
        self.verts = verts;
        self.sources = sources;
        Ok(Some(ClipOutcome::Cut))
    }

    pub fn area(&self) -> f64 {
        let n = self.verts.len();
        let mut a = 0.0;
        for i in 0..n {
            let j = (i + 1) % n;
            a += self.verts[i].x * self.verts[j].y - self.verts[j].x * self.verts[i].y;
        }
        a.abs() * 0.5
    }

    pub fn centroid(&self) -> V2 {
        self.verts.iter().sum::<V2>() / self.verts.len() as f64
    }

    pub fn radius_about(&self, p: V2) -> f64 {
        self.verts.iter().map(|v| (v - p).norm()).fold(0.0, f64::max)
    }

    /// Length of the boundary contributed by each neighbor source.
    pub fn edge_length(&self, i: usize) -> f64 {
        let j = (i + 1) % self.verts.len();
        (self.verts[j] - self.verts[i]).norm()
    }

    pub fn contains(&self, p: V2, eps: f64) -> bool {
        let n = self.verts.len();
        // CCW or CW consistent ring: use sign of total area.
        let mut a = 0.0;
        for i in 0..n {
            let j = (i + 1) % n;
            a += self.verts[i].x * self.verts[j].y - self.verts[j].x * self.verts[i].y;
        }
        let orient = a.signum();
        (0..n).all(|i| {
            let j = (i + 1) % n;
            let e = self.verts[j] - self.verts[i];
            let r = p - self.verts[i];
            orient * (e.x * r.y - e.y * r.x) >= -eps
        })
    }
}

/// Signed area of triangle (a, b, c); positive when counter-clockwise.
pub fn tri_area_2d(a: V2, b: V2, c: V2) -> f64 {
    ((b - a).x * (c - a).y - (b - a).y * (c - a).x) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn box_volume_and_area() {
        let b = ConvexPoly3::from_box(V3::new(0.0, 0.0, 0.0), V3::new(2.0, 3.0, 4.0));
        assert_relative_eq!(b.volume(), 24.0, max_relative = 1e-12);
        let total: f64 = b.faces.iter().map(|f| b.face_area(f)).sum();
        assert_relative_eq!(total, 2.0 * (6.0 + 8.0 + 12.0), max_relative = 1e-12);
    }

    #[test]
    fn clip_cube_to_half() {
        let mut b = ConvexPoly3::from_box(V3::new(-1.0, -1.0, -1.0), V3::new(1.0, 1.0, 1.0));
        let out = b
            .clip(Plane::new(V3::new(1.0, 0.0, 0.0), 0.0), FaceSource::Neighbor(7), 1e-9)
            .unwrap();
        assert_eq!(out, ClipOutcome::Cut);
        assert_relative_eq!(b.volume(), 4.0, max_relative = 1e-12);
        assert_eq!(b.faces.len(), 6);
        assert_eq!(b.verts.len(), 8);
    }

    #[test]
    fn clip_cube_corner_by_grazing_plane() {
        let mut b = ConvexPoly3::from_box(V3::new(-1.0, -1.0, -1.0), V3::new(1.0, 1.0, 1.0));
        // Plane through the (1,1,1) corner only.
        let n = V3::new(1.0, 1.0, 1.0).normalize();
        let out = b.clip(Plane::new(n, n.dot(&V3::new(1.0, 1.0, 1.0))), FaceSource::Neighbor(0), 1e-9).unwrap();
        assert_eq!(out, ClipOutcome::Grazing);
        assert_relative_eq!(b.volume(), 8.0, max_relative = 1e-12);
    }

    #[test]
    fn clip_cube_diagonal_corner() {
        let mut b = ConvexPoly3::from_box(V3::new(0.0, 0.0, 0.0), V3::new(1.0, 1.0, 1.0));
        let n = V3::new(1.0, 1.0, 1.0).normalize();
        // Cut the corner at (1,1,1): keep n.z <= n.(0.5,1,1)-ish plane through
        // three edge midpoints (1,1,.5),(1,.5,1),(.5,1,1).
        let d = n.dot(&V3::new(1.0, 1.0, 0.5));
        let out = b.clip(Plane::new(n, d), FaceSource::Neighbor(3), 1e-9).unwrap();
        assert_eq!(out, ClipOutcome::Cut);
        // Removed corner tet has legs 1/2: volume (1/6)(1/2)^3 * ... = legs h=0.5: V = h^3/6.
        assert_relative_eq!(b.volume(), 1.0 - 0.5_f64.powi(3) / 6.0, max_relative = 1e-12);
        assert_eq!(b.faces.len(), 7);
    }

    #[test]
    fn hull_of_octahedron() {
        let pts = vec![
            V3::new(1.0, 0.0, 0.0),
            V3::new(-1.0, 0.0, 0.0),
            V3::new(0.0, 1.0, 0.0),
            V3::new(0.0, -1.0, 0.0),
            V3::new(0.0, 0.0, 1.0),
            V3::new(0.0, 0.0, -1.0),
        ];
        let facets = convex_hull_3d(&pts, 1e-9).unwrap();
        assert_eq!(facets.len(), 8);
        assert!(facets.iter().all(|f| f.ring.len() == 3));
        assert_eq!(hull_edges(&facets).len(), 12);
    }

    #[test]
    fn hull_of_cube_merges_coplanar() {
        let mut pts = Vec::new();
        for i in 0..8 {
            pts.push(V3::new(
                if i & 1 == 0 { 0.0 } else { 1.0 },
                if i & 2 == 0 { 0.0 } else { 1.0 },
                if i & 4 == 0 { 0.0 } else { 1.0 },
            ));
        }
        let facets = convex_hull_3d(&pts, 1e-9).unwrap();
        assert_eq!(facets.len(), 6);
        assert!(facets.iter().all(|f| f.ring.len() == 4));
    }

    #[test]
    fn polygon_clip_area() {
        let mut p = ConvexPoly2::from_box(V2::new(0.0, 0.0), V2::new(2.0, 2.0));
        let out = p
            .clip(Line2 { normal: V2::new(1.0, 0.0), offset: 1.0 }, FaceSource::Neighbor(0), 1e-9)
            .unwrap();
        assert_eq!(out, ClipOutcome::Cut);
        assert_relative_eq!(p.area(), 2.0, max_relative = 1e-12);
        assert!(p.contains(V2::new(0.5, 1.0), 1e-9));
        assert!(!p.contains(V2::new(1.5, 1.0), 1e-9));
    }

    #[test]
    fn tet_volume_signs() {
        let v = tet_volume(
            V3::zeros(),
            V3::new(1.0, 0.0, 0.0),
            V3::new(0.0, 1.0, 0.0),
            V3::new(0.0, 0.0, 1.0),
        );
        assert_relative_eq!(v, 1.0 / 6.0, max_relative = 1e-12);
    }
}
