//! Voronoi cells by sequential bisector clipping, with neighbor grids and
//! corner extraction. Cells are exact for atoms whose neighborhood is fully
//! present; truncation by the safety box is reported, never silent.

use crate::error::{Error, Result};
use crate::geom::{ConvexPoly2, ConvexPoly3, FaceSource, Line2, Plane, V2, V3};
use std::collections::HashMap;

/// Uniform-bin point index.
pub struct NeighborGrid {
    h: f64,
    bins: HashMap<(i64, i64, i64), Vec<u32>>,
    pts: Vec<V3>,
}

impl NeighborGrid {
    pub fn build(pts: &[V3], h: f64) -> Self {
        let mut bins: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in pts.iter().enumerate() {
            bins.entry(Self::key(*p, h)).or_default().push(i as u32);
        }
        NeighborGrid { h, bins, pts: pts.to_vec() }
    }

    fn key(p: V3, h: f64) -> (i64, i64, i64) {
        (
            (p.x / h).floor() as i64,
            (p.y / h).floor() as i64,
            (p.z / h).floor() as i64,
        )
    }

    /// Ids within `r` of `p` (inclusive), sorted by (distance, id).
    pub fn within(&self, p: V3, r: f64) -> Vec<u32> {
        let lo = Self::key(p - V3::new(r, r, r), self.h);
        let hi = Self::key(p + V3::new(r, r, r), self.h);
        let mut out: Vec<(f64, u32)> = Vec::new();
        let r2 = r * r;
        for bx in lo.0..=hi.0 {
            for by in lo.1..=hi.1 {
                for bz in lo.2..=hi.2 {
                    if let Some(ids) = self.bins.get(&(bx, by, bz)) {
                        for &i in ids {
                            let d2 = (self.pts[i as usize] - p).norm_squared();
                            if d2 <= r2 {
                                out.push((d2, i));
                            }
                        }
                    }
                }
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out.into_iter().map(|(_, i)| i).collect()
    }
}

/// A merged Voronoi cell vertex.
#[derive(Debug, Clone, Copy)]
pub struct Corner {
    pub point: V3,
    /// Distance from the owning atom.
    pub radius: f64,
    /// True when the corner touches the artificial bounding box.
    pub tainted: bool,
}

pub struct VoronoiEngine {
    pub pts: Vec<V3>,
    pub grid: NeighborGrid,
    pub box_lo: V3,
    pub box_hi: V3,
    /// On-plane band for clipping, absolute distance.
    pub eps: f64,
    /// Corner merge radius (cosphericity tolerance).
    pub merge_tol: f64,
}

impl VoronoiEngine {
    pub fn new(pts: &[V3], scale: f64) -> Self {
        let mut lo = V3::from_element(f64::INFINITY);
        let mut hi = V3::from_element(f64::NEG_INFINITY);
        for p in pts {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        if pts.is_empty() {
            lo = V3::zeros();
            hi = V3::zeros();
        }
        // Safety box at 3x the cloud extents (and never degenerate).
        let c = (lo + hi) * 0.5;
        let half = ((hi - lo) * 0.5).sup(&V3::from_element(scale));
        let (box_lo, box_hi) = (c - half * 3.0, c + half * 3.0);
        VoronoiEngine {
            pts: pts.to_vec(),
            grid: NeighborGrid::build(pts, (scale * 1.2).max(1e-12)),
            box_lo,
            box_hi,
            eps: 1e-9 * scale,
            merge_tol: 1e-7 * scale,
        }
    }

    /// Clip the cell of atom `i` against all bisectors within `pool_radius`.
    pub fn cell(&self, i: u32, pool_radius: f64) -> Result<ConvexPoly3> {
        let p = self.pts[i as usize];
        let mut poly = ConvexPoly3::from_box(self.box_lo, self.box_hi);
        let neigh = self.grid.within(p, pool_radius);
        for j in neigh {
            if j == i {
                continue;
            }
            let q = self.pts[j as usize];
            let d = (q - p).norm();
            if d < self.eps {
                return Err(Error::geometry(format!(
                    "atoms {i} and {j} coincide within tolerance"
                )));
            }
            // Planes are sorted by distance; once half the distance exceeds
            // the current cell radius nothing further can cut.
            if d * 0.5 >= poly.radius_about(p) + self.eps {
                break;
            }
            poly.clip(Plane::bisector(p, q), FaceSource::Neighbor(j), self.eps)?;
        }
        Ok(poly)
    }

    /// Merge near-coincident cell vertices into corners and tag box contact.
    pub fn corners(&self, i: u32, poly: &ConvexPoly3) -> Vec<Corner> {
        let p = self.pts[i as usize];
        let mut touched = vec![false; poly.verts.len()];
        for f in &poly.faces {
            if f.source == FaceSource::BoundingBox {
                for &v in &f.ring {
                    touched[v as usize] = true;
                }
            }
        }
        let mut order: Vec<u32> = (0..poly.verts.len() as u32).collect();
        order.sort_by(|&a, &b| {
            let (va, vb) = (poly.verts[a as usize], poly.verts[b as usize]);
            va.x.total_cmp(&vb.x).then(va.y.total_cmp(&vb.y)).then(va.z.total_cmp(&vb.z))
        });
        let mut corners: Vec<(V3, Vec<u32>)> = Vec::new();
        'outer: for idx in order {
            let v = poly.verts[idx as usize];
            for (rep, members) in corners.iter_mut() {
                if (v - *rep).norm() <= self.merge_tol {
                    members.push(idx);
                    continue 'outer;
                }
            }
            corners.push((v, vec![idx]));
        }
        corners
            .into_iter()
            .map(|(_, members)| {
                let point = members.iter().map(|&m| poly.verts[m as usize]).sum::<V3>()
                    / members.len() as f64;
                Corner {
                    point,
                    radius: (point - p).norm(),
                    tainted: members.iter().any(|&m| touched[m as usize]),
                }
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// 2D engine
// ---------------------------------------------------------------------------

pub struct VoronoiEngine2 {
    pub pts: Vec<V2>,
    grid3: NeighborGrid,
    pub box_lo: V2,
    pub box_hi: V2,
    pub eps: f64,
    pub merge_tol: f64,
}

impl VoronoiEngine2 {
    pub fn new(pts: &[V2], scale: f64) -> Self {
        let pts3: Vec<V3> = pts.iter().map(|p| V3::new(p.x, p.y, 0.0)).collect();
        let mut lo = V2::from_element(f64::INFINITY);
        let mut hi = V2::from_element(f64::NEG_INFINITY);
        for p in pts {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        if pts.is_empty() {
            lo = V2::zeros();
            hi = V2::zeros();
        }
        let c = (lo + hi) * 0.5;
        let half = ((hi - lo) * 0.5).sup(&V2::from_element(scale));
        VoronoiEngine2 {
            pts: pts.to_vec(),
            grid3: NeighborGrid::build(&pts3, (scale * 1.2).max(1e-12)),
            box_lo: c - half * 3.0,
            box_hi: c + half * 3.0,
            eps: 1e-9 * scale,
            merge_tol: 1e-7 * scale,
        }
    }

    pub fn within(&self, p: V2, r: f64) -> Vec<u32> {
        self.grid3.within(V3::new(p.x, p.y, 0.0), r)
    }

    pub fn cell(&self, i: u32, pool_radius: f64) -> Result<ConvexPoly2> {
        let p = self.pts[i as usize];
        let mut poly = ConvexPoly2::from_box(self.box_lo, self.box_hi);
        for j in self.within(p, pool_radius) {
            if j == i {
                continue;
            }
            let q = self.pts[j as usize];
            let d = (q - p).norm();
            if d < self.eps {
                return Err(Error::geometry(format!(
                    "atoms {i} and {j} coincide within tolerance"
                )));
            }
            if d * 0.5 >= poly.radius_about(p) + self.eps {
                break;
            }
            poly.clip(Line2::bisector(p, q), FaceSource::Neighbor(j), self.eps)?;
        }
        Ok(poly)
    }

    pub fn corners(&self, i: u32, poly: &ConvexPoly2) -> Vec<Corner> {
        let p = self.pts[i as usize];
        let n = poly.verts.len();
        // A vertex touches the box when either incident edge came from it.
        let touched: Vec<bool> = (0..n)
            .map(|vi| {
                let prev = (vi + n - 1) % n;
                poly.sources[vi] == FaceSource::BoundingBox
                    || poly.sources[prev] == FaceSource::BoundingBox
            })
            .collect();
        let mut corners: Vec<(V2, Vec<usize>)> = Vec::new();
        'outer: for vi in 0..n {
            let v = poly.verts[vi];
            for (rep, members) in corners.iter_mut() {
                if (v - *rep).norm() <= self.merge_tol {
                    members.push(vi);
                    continue 'outer;
                }
            }
            corners.push((v, vec![vi]));
        }
        corners
            .into_iter()
            .map(|(_, members)| {
                let point =
                    members.iter().map(|&m| poly.verts[m]).sum::<V2>() / members.len() as f64;
                Corner {
                    point: V3::new(point.x, point.y, 0.0),
                    radius: (point - p).norm(),
                    tainted: members.iter().any(|&m| touched[m]),
                }
            })
            .collect()
    }
}
