//! Crystal lattice kinds, biphase lattice specification, and atom generation.
//!
//! Positions are stored in Cartesian space; `xi` coordinates refer to the
//! generator basis `v1, v2, v3`. Two-dimensional kinds live in the xy-plane
//! with a unit `v3 = e_z` completing the frame.

use crate::error::{Error, Result};
use crate::geom::V3;
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// The five supported lattice kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeKind {
    Fcc,
    Hcp,
    Bcc,
    Dc,
    #[serde(rename = "honeycomb")]
    Honeycomb2d,
}

impl fmt::Display for LatticeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LatticeKind::Fcc => "fcc",
            LatticeKind::Hcp => "hcp",
            LatticeKind::Bcc => "bcc",
            LatticeKind::Dc => "dc",
            LatticeKind::Honeycomb2d => "honeycomb",
        };
        f.write_str(s)
    }
}

impl FromStr for LatticeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fcc" => Ok(LatticeKind::Fcc),
            "hcp" => Ok(LatticeKind::Hcp),
            "bcc" => Ok(LatticeKind::Bcc),
            "dc" => Ok(LatticeKind::Dc),
            "honeycomb" | "honeycomb2d" => Ok(LatticeKind::Honeycomb2d),
            other => Err(Error::input(format!(
                "unknown lattice kind `{other}` (expected fcc|hcp|bcc|dc|honeycomb)"
            ))),
        }
    }
}

impl LatticeKind {
    pub fn dim(self) -> usize {
        match self {
            LatticeKind::Honeycomb2d => 2,
            _ => 3,
        }
    }

    /// Generator vectors `v1, v2, v3`. For 2D kinds `v3 = e_z`.
    pub fn generators(self) -> [V3; 3] {
        match self {
            LatticeKind::Fcc | LatticeKind::Dc => [
                V3::new(SQRT2, 0.0, 0.0),
                V3::new(SQRT2 * 0.5, SQRT2 * 0.5, 0.0),
                V3::new(0.0, SQRT2 * 0.5, SQRT2 * 0.5),
            ],
            LatticeKind::Hcp => [
                V3::new(0.0, 0.0, 2.0 * 6.0_f64.sqrt() / 3.0),
                V3::new(0.5, 3.0_f64.sqrt() / 2.0, 0.0),
                V3::new(-0.5, 3.0_f64.sqrt() / 2.0, 0.0),
            ],
            LatticeKind::Bcc => [
                V3::new(-SQRT2 / 2.0, SQRT2 / 2.0, SQRT2 / 2.0),
                V3::new(SQRT2 / 2.0, -SQRT2 / 2.0, SQRT2 / 2.0),
                V3::new(SQRT2 / 2.0, SQRT2 / 2.0, -SQRT2 / 2.0),
            ],
            LatticeKind::Honeycomb2d => [
                V3::new(1.0, 0.0, 0.0),
                V3::new(0.5, 3.0_f64.sqrt() / 2.0, 0.0),
                V3::new(0.0, 0.0, 1.0),
            ],
        }
    }

    /// Basis vectors in Cartesian coordinates (`u1 = 0` always).
    pub fn basis(self) -> Vec<V3> {
        match self {
            LatticeKind::Fcc | LatticeKind::Bcc => vec![V3::zeros()],
            LatticeKind::Hcp => vec![
                V3::zeros(),
                V3::new(0.0, 3.0_f64.sqrt() / 3.0, 6.0_f64.sqrt() / 3.0),
            ],
            LatticeKind::Dc => {
                vec![V3::zeros(), V3::new(SQRT2 * 0.25, SQRT2 * 0.25, SQRT2 * 0.25)]
            }
            LatticeKind::Honeycomb2d => {
                vec![V3::zeros(), V3::new(0.0, 3.0_f64.sqrt() / 3.0, 0.0)]
            }
        }
    }

    /// Nearest-neighbour distance of the bulk lattice (the smaller one for
    /// BCC, whose NN set spans two distances).
    pub fn nn_distance(self) -> f64 {
        match self {
            LatticeKind::Fcc | LatticeKind::Hcp => 1.0,
            LatticeKind::Bcc => 6.0_f64.sqrt() / 2.0,
            LatticeKind::Dc => 6.0_f64.sqrt() / 4.0,
            LatticeKind::Honeycomb2d => 3.0_f64.sqrt() / 3.0,
        }
    }

    /// Largest bond length entering the bulk structure (BCC cube edge; the
    /// next-to-nearest distance for the two-sublattice kinds).
    pub fn max_bond_distance(self) -> f64 {
        match self {
            LatticeKind::Fcc | LatticeKind::Hcp => 1.0,
            LatticeKind::Bcc => SQRT2,
            LatticeKind::Dc | LatticeKind::Honeycomb2d => 1.0,
        }
    }

    pub fn generator_matrix(self) -> Matrix3<f64> {
        let [v1, v2, v3] = self.generators();
        Matrix3::from_columns(&[v1, v2, v3])
    }

    /// True for kinds carrying two energy-relevant sublattices.
    pub fn two_sublattice(self) -> bool {
        matches!(self, LatticeKind::Dc | LatticeKind::Honeycomb2d)
    }
}

/// Full description of one biphase wire problem.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub kind: LatticeKind,
    /// Reference lattice-constant ratio of the right phase, in (0, 1].
    pub rho: f64,
    /// Equilibrium bond-length ratio of the right phase, in (0, 1].
    pub lambda: f64,
    /// Wire thickness in cells.
    pub k: u32,
    /// Slab half-length along `v1`, lattice units.
    pub m: f64,
}

impl LatticeSpec {
    pub fn new(kind: LatticeKind, rho: f64, lambda: f64, k: u32, m: f64) -> Result<Self> {
        let spec = LatticeSpec { kind, rho, lambda, k, m };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho.is_finite() && self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::input(format!("rho out of (0,1]: {}", self.rho)));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::input(format!("lambda out of (0,1]: {}", self.lambda)));
        }
        if self.k < 1 {
            return Err(Error::input("k must be >= 1".to_string()));
        }
        if !(self.m.is_finite() && self.m > 0.0) {
            return Err(Error::input(format!("M must be positive and finite: {}", self.m)));
        }
        Ok(())
    }

    /// The analysis is sharpest when `lambda <= rho <= 1`.
    pub fn interesting_regime(&self) -> bool {
        self.lambda <= self.rho
    }

    pub fn with_m(mut self, m: f64) -> Self {
        self.m = m;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Left,
    Right,
}

/// One lattice site.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Atom {
    pub id: u32,
    /// Cartesian position (z = 0 for 2D kinds).
    pub pos: [f64; 3],
    /// Lattice coordinates of the position, `V^-1 pos`, basis offset included.
    pub xi: [f64; 3],
    /// Integer cell index; for the right phase the translation is `rho * cell`.
    pub cell: [i32; 3],
    /// Basis vector index within the cell (0-based).
    pub basis: u8,
    pub phase: Phase,
    /// 1-based sublattice tag; 1 for single-sublattice kinds.
    pub sublattice: u8,
}

impl Atom {
    pub fn position(&self) -> V3 {
        V3::new(self.pos[0], self.pos[1], self.pos[2])
    }
    /// Exact identity of the site, independent of the generated window.
    pub fn site_key(&self) -> (Phase, [i32; 3], u8) {
        (self.phase, self.cell, self.basis)
    }
}

/// An indexed, deterministic set of lattice sites.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtomSet {
    pub kind: LatticeKind,
    pub rho: f64,
    pub atoms: Vec<Atom>,
}

impl AtomSet {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }
    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
    pub fn dim(&self) -> usize {
        self.kind.dim()
    }
    pub fn positions(&self) -> Vec<V3> {
        self.atoms.iter().map(|a| a.position()).collect()
    }

    /// Sort by (xi1, xi2, xi3, basis) and reassign contiguous ids.
    pub(crate) fn finalize_order(&mut self) {
        self.atoms.sort_by(|a, b| {
            a.xi[0]
                .total_cmp(&b.xi[0])
                .then(a.xi[1].total_cmp(&b.xi[1]))
                .then(a.xi[2].total_cmp(&b.xi[2]))
                .then(a.basis.cmp(&b.basis))
        });
        for (i, atom) in self.atoms.iter_mut().enumerate() {
            atom.id = i as u32;
        }
    }
}

/// Inclusive integer range helper for cell enumeration.
fn int_range(lo: f64, hi: f64) -> Result<std::ops::RangeInclusive<i64>> {
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::input(format!("non-finite box range [{lo}, {hi}]")));
    }
    Ok((lo.ceil() as i64)..=(hi.floor() as i64))
}

/// Generate the bulk lattice over integer cell coordinates inside `xi_box`
/// (inclusive of integer endpoints). The third range is ignored for 2D kinds.
pub fn generate_bulk(kind: LatticeKind, xi_box: [(f64, f64); 3]) -> Result<AtomSet> {
    let [v1, v2, v3] = kind.generators();
    let basis = kind.basis();
    let vinv = kind
        .generator_matrix()
        .try_inverse()
        .expect("generator matrix is invertible");
    let mut set = AtomSet { kind, rho: 1.0, atoms: Vec::new() };
    let r1 = int_range(xi_box[0].0, xi_box[0].1)?;
    let r2 = int_range(xi_box[1].0, xi_box[1].1)?;
    let r3 = if kind.dim() == 2 { 0..=0 } else { int_range(xi_box[2].0, xi_box[2].1)? };
    for m1 in r1 {
        for m2 in r2.clone() {
            for m3 in r3.clone() {
                for (j, &u) in basis.iter().enumerate() {
                    let pos = u + v1 * m1 as f64 + v2 * m2 as f64 + v3 * m3 as f64;
                    let xi = vinv * pos;
                    set.atoms.push(Atom {
                        id: 0,
                        pos: [pos.x, pos.y, pos.z],
                        xi: [xi.x, xi.y, xi.z],
                        cell: [m1 as i32, m2 as i32, m3 as i32],
                        basis: j as u8,
                        phase: Phase::Left,
                        sublattice: if kind.two_sublattice() || kind == LatticeKind::Hcp {
                            j as u8 + 1
                        } else {
                            1
                        },
                    });
                }
            }
        }
    }
    set.finalize_order();
    Ok(set)
}

/// The wire-shaped region spanned by the generators, with `xi1` in `(-M, M)`,
/// `xi2` (and `xi3` in 3D) in `(0, k)`.
#[derive(Debug, Clone)]
pub struct WireDomain {
    pub kind: LatticeKind,
    pub vmat: Matrix3<f64>,
    pub vinv: Matrix3<f64>,
    pub m: f64,
    pub k: f64,
}

impl WireDomain {
    pub fn new(kind: LatticeKind, m: f64, k: u32) -> Self {
        let vmat = kind.generator_matrix();
        let vinv = vmat.try_inverse().expect("generator matrix is invertible");
        WireDomain { kind, vmat, vinv, m, k: k as f64 }
    }

    pub fn xi(&self, pos: V3) -> V3 {
        self.vinv * pos
    }

    pub fn inside_xi(&self, xi: V3) -> bool {
        let transverse = if self.kind.dim() == 2 {
            xi.y > 0.0 && xi.y < self.k
        } else {
            xi.y > 0.0 && xi.y < self.k && xi.z > 0.0 && xi.z < self.k
        };
        xi.x > -self.m && xi.x < self.m && transverse
    }

    pub fn inside(&self, pos: V3) -> bool {
        self.inside_xi(self.xi(pos))
    }

    pub fn in_left_half(&self, pos: V3) -> bool {
        self.xi(pos).x < 0.0
    }

    pub fn in_right_half(&self, pos: V3) -> bool {
        self.xi(pos).x >= 0.0
    }

    /// Bounding halfspaces of the open slab in Cartesian coordinates:
    /// six planes in 3D, four in 2D.
    pub fn bounding_planes(&self) -> Vec<crate::geom::Plane> {
        let rows = self.vinv.transpose();
        let mut planes = Vec::new();
        let mut push = |row: V3, lo: f64, hi: f64| {
            let len = row.norm();
            let n = row / len;
            planes.push(crate::geom::Plane::new(n, hi / len));
            planes.push(crate::geom::Plane::new(-n, -lo / len));
        };
        push(rows.column(0).into(), -self.m, self.m);
        push(rows.column(1).into(), 0.0, self.k);
        if self.kind.dim() == 3 {
            push(rows.column(2).into(), 0.0, self.k);
        }
        planes
    }

    /// Volume (3D) or area (2D) of the open slab.
    pub fn measure(&self) -> f64 {
        let det = self.vmat.determinant().abs();
        if self.kind.dim() == 2 {
            2.0 * self.m * self.k * det
        } else {
            2.0 * self.m * self.k * self.k * det
        }
    }
}

/// Region description for a spec, per the module contract.
pub fn wire_domain(spec: &LatticeSpec) -> Result<WireDomain> {
    spec.validate()?;
    Ok(WireDomain::new(spec.kind, spec.m, spec.k))
}

/// Candidate sites of the biphase lattice inside `xi` bounds extended by the
/// given margins (lattice units; axial along `v1`, transverse otherwise).
/// Used by the tessellation builder; the public `generate_biphase` applies
/// the closure rule on top.
pub(crate) fn biphase_candidates(
    spec: &LatticeSpec,
    margin_axial: f64,
    margin_transverse: f64,
) -> Result<AtomSet> {
    spec.validate()?;
    let kind = spec.kind;
    let [v1, v2, v3] = kind.generators();
    let basis = kind.basis();
    let vinv = kind.generator_matrix().try_inverse().expect("invertible");
    let rho = spec.rho;
    let dim = kind.dim();
    let (lo_t, hi_t) = (-margin_transverse, spec.k as f64 + margin_transverse);
    let (lo_a, hi_a) = (-spec.m - margin_axial, spec.m + margin_axial);

    let mut set = AtomSet { kind, rho, atoms: Vec::new() };
    // Basis offsets can have negative xi components (honeycomb); widen the
    // enumeration window by one cell so the position window stays covered.
    let pad = 1.5;
    let mut emit = |phase: Phase, scale: f64, m: [i64; 3]| {
        for (j, &u) in basis.iter().enumerate() {
            let pos = (u + v1 * m[0] as f64 + v2 * m[1] as f64 + v3 * m[2] as f64) * scale;
            let xi = vinv * pos;
            set.atoms.push(Atom {
                id: 0,
                pos: [pos.x, pos.y, pos.z],
                xi: [xi.x, xi.y, xi.z],
                cell: [m[0] as i32, m[1] as i32, m[2] as i32],
                basis: j as u8,
                phase,
                sublattice: if kind.two_sublattice() || kind == LatticeKind::Hcp {
                    j as u8 + 1
                } else {
                    1
                },
            });
        }
    };

    // Left phase: unit cells with m1 < 0.
    {
        let r1 = int_range(lo_a - pad, -1.0)?;
        let r2 = int_range(lo_t - pad, hi_t + pad)?;
        let r3 = if dim == 2 { 0..=0 } else { int_range(lo_t - pad, hi_t + pad)? };
        for m1 in r1 {
            for m2 in r2.clone() {
                for m3 in r3.clone() {
                    emit(Phase::Left, 1.0, [m1, m2, m3]);
                }
            }
        }
    }
    // Right phase: rho-scaled cells with m1 >= 0.
    {
        let r1 = int_range(0.0, (hi_a + pad) / rho)?;
        let r2 = int_range((lo_t - pad) / rho, (hi_t + pad) / rho)?;
        let r3 = if dim == 2 { 0..=0 } else { int_range((lo_t - pad) / rho, (hi_t + pad) / rho)? };
        for m1 in r1 {
            for m2 in r2.clone() {
                for m3 in r3.clone() {
                    emit(Phase::Right, rho, [m1, m2, m3]);
                }
            }
        }
    }
    set.finalize_order();
    Ok(set)
}

/// Biphase lattice restricted to the wire slab and closed by the tessellation
/// rule: an atom belongs to the result iff it is a vertex of a tessellation
/// cell meeting the open slab.
pub fn generate_biphase(spec: &LatticeSpec) -> Result<AtomSet> {
    Ok(crate::tessellation::build_system(spec)?.atoms)
}
