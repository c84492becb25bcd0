//! Deterministic serialization of artifacts: JSON with 17-significant-digit
//! floats, XYZ atom clouds, CSV scaling tables, run manifests with output
//! digests, and atomic file writes.

use crate::error::{Error, Result};
use crate::experiments::{ScalingRow, ScalingTable};
use crate::lattice::{AtomSet, LatticeSpec, Phase};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;

/// serde_json formatter that renders every float with 17 significant digits
/// (round-trip exact, diff-stable across platforms).
struct Sig17 {
    inner: serde_json::ser::CompactFormatter,
}

impl serde_json::ser::Formatter for Sig17 {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{}", fmt17(value))
    }
    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{}", fmt17(value as f64))
    }
    fn begin_array<W>(&mut self, writer: &mut W) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        self.inner.begin_array(writer)
    }
}

/// One float, 17 significant digits, valid JSON.
pub fn fmt17(value: f64) -> String {
    if !value.is_finite() {
        // JSON has no non-finite literals; callers use Option for those.
        return "null".to_string();
    }
    format!("{value:.16e}")
}

pub fn parse_f64(text: &str) -> Result<f64> {
    text.trim()
        .parse::<f64>()
        .map_err(|e| Error::input(format!("bad float `{text}`: {e}")))
}

/// Serialize with 17-significant-digit floats and a trailing newline.
pub fn to_json_17<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(
        &mut out,
        Sig17 { inner: serde_json::ser::CompactFormatter },
    );
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(out)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write via a temporary file in the same directory plus rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// XYZ text: count, comment, then one `tag x y z` line per atom with the
/// phase rendered as an element-like L/R tag.
pub fn to_xyz(atoms: &AtomSet, comment: &str) -> String {
    let mut s = String::new();
    s.push_str(&format!("{}\n{}\n", atoms.len(), comment));
    for a in &atoms.atoms {
        let tag = match a.phase {
            Phase::Left => "L",
            Phase::Right => "R",
        };
        s.push_str(&format!(
            "{tag} {} {} {}\n",
            fmt17(a.pos[0]),
            fmt17(a.pos[1]),
            fmt17(a.pos[2])
        ));
    }
    s
}

/// XYZ snapshot of a deformation (same tags and order as the atom set).
pub fn deformation_to_xyz(
    atoms: &AtomSet,
    def: &crate::energy::Deformation,
    comment: &str,
) -> String {
    let mut s = String::new();
    s.push_str(&format!("{}\n{}\n", atoms.len(), comment));
    for a in &atoms.atoms {
        let tag = match a.phase {
            Phase::Left => "L",
            Phase::Right => "R",
        };
        let p = def.pos[a.id as usize];
        s.push_str(&format!("{tag} {} {} {}\n", fmt17(p.x), fmt17(p.y), fmt17(p.z)));
    }
    s
}

/// The atoms.json payload.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct AtomsFile {
    pub spec: LatticeSpec,
    pub dim: usize,
    pub atoms: Vec<crate::lattice::Atom>,
}

impl AtomsFile {
    pub fn new(spec: &LatticeSpec, atoms: &AtomSet) -> Self {
        AtomsFile { spec: *spec, dim: atoms.dim(), atoms: atoms.atoms.clone() }
    }
    pub fn into_atom_set(self) -> AtomSet {
        AtomSet { kind: self.spec.kind, rho: self.spec.rho, atoms: self.atoms }
    }
}

/// The def.json payload.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct DeformationFile {
    pub positions: Vec<[f64; 3]>,
}

impl DeformationFile {
    pub fn new(def: &crate::energy::Deformation) -> Self {
        DeformationFile { positions: def.pos.iter().map(|p| [p.x, p.y, p.z]).collect() }
    }
    pub fn into_deformation(self) -> crate::energy::Deformation {
        crate::energy::Deformation {
            pos: self
                .positions
                .into_iter()
                .map(|p| crate::geom::V3::new(p[0], p[1], p[2]))
                .collect(),
        }
    }
}

const CSV_HEADER: &str = "kind,rho,lambda,k,M,gamma_hat,converged";

/// CSV rendering of a scaling table (`kind,rho,lambda,k,M,gamma_hat,converged`).
pub fn table_to_csv(table: &ScalingTable) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in &table.rows {
        let gamma = match r.gamma_hat {
            Some(g) => fmt17(g),
            None => "nan".to_string(),
        };
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.kind,
            fmt17(r.rho),
            fmt17(r.lambda),
            r.k,
            fmt17(r.m),
            gamma,
            r.status
        ));
    }
    s
}

pub fn table_from_csv(text: &str) -> Result<ScalingTable> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => {
            return Err(Error::Csv(format!(
                "bad header {other:?}, expected `{CSV_HEADER}`"
            )))
        }
    }
    let mut rows = Vec::new();
    for (no, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(Error::Csv(format!("line {}: expected 7 fields", no + 2)));
        }
        let gamma = if f[5].trim() == "nan" { None } else { Some(parse_f64(f[5])?) };
        rows.push(ScalingRow {
            kind: f[0].trim().parse()?,
            rho: parse_f64(f[1])?,
            lambda: parse_f64(f[2])?,
            k: f[3]
                .trim()
                .parse()
                .map_err(|e| Error::Csv(format!("line {}: bad k: {e}", no + 2)))?,
            m: parse_f64(f[4])?,
            gamma_hat: gamma,
            status: f[6].trim().parse()?,
            error: None,
        });
    }
    Ok(ScalingTable { rows })
}

/// Log-log plot data per group: (ln k, ln gamma) pairs.
pub fn loglog_points(table: &ScalingTable, rho: f64) -> Vec<(f64, f64)> {
    table
        .group(rho)
        .iter()
        .filter_map(|r| r.gamma_hat.map(|g| ((r.k as f64).ln(), g.ln())))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestOutput {
    pub path: String,
    pub sha256: String,
}

/// Post-run record: the fully-defaulted config, which fields were defaulted,
/// the seed, wall time, and a digest of every declared output.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub artifact: String,
    pub version: String,
    pub config: serde_json::Value,
    pub defaults_applied: Vec<String>,
    pub seed: u64,
    pub wall_time_s: f64,
    pub outputs: Vec<ManifestOutput>,
}

impl RunManifest {
    pub fn new(config: serde_json::Value, defaults_applied: Vec<String>, seed: u64) -> Self {
        RunManifest {
            artifact: "misfit-forge".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            defaults_applied,
            seed,
            wall_time_s: 0.0,
            outputs: Vec::new(),
        }
    }

    pub fn record_output(&mut self, path: &Path, bytes: &[u8]) {
        self.outputs.push(ManifestOutput {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
        });
    }

    /// Write an output file and record its digest.
    pub fn write_output(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        write_atomic(path, bytes)?;
        self.record_output(path, bytes);
        Ok(())
    }

    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        write_atomic(path, &to_json_17(self)?)
    }
}

/// Fields of `normalized` that are absent from `given` (defaults the parser
/// applied), as dotted key paths.
pub fn defaulted_fields(given: &serde_json::Value, normalized: &serde_json::Value) -> Vec<String> {
    fn walk(g: Option<&serde_json::Value>, n: &serde_json::Value, path: String, out: &mut Vec<String>) {
        if let serde_json::Value::Object(nmap) = n {
            for (k, nv) in nmap {
                let sub = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match g.and_then(|gv| gv.get(k)) {
                    None => out.push(sub),
                    Some(gv) => walk(Some(gv), nv, sub, out),
                }
            }
        }
    }
    let mut out = Vec::new();
    walk(Some(given), normalized, String::new(), &mut out);
    out.sort();
    out
}
