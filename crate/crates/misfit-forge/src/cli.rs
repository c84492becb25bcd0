//! Command surface: typed run configurations, dispatch, and run manifests.
//!
//! Every invocation—flags or a JSON config—normalizes to a `RunConfig`.
//! Human-readable progress goes to standard error; machine outputs go only
//! to declared files or standard output. Identical config and seed give
//! byte-identical numerical outputs.

use crate::energy::{compile_bonds, energy, EnergyParams};
use crate::error::{Error, Result};
use crate::experiments::{crossover, fit_table_group, scaling_sweep};
use crate::io::{
    self, defaulted_fields, to_json_17, AtomsFile, DeformationFile, RunManifest,
};
use crate::lattice::{LatticeKind, LatticeSpec};
use crate::relax::{gamma_estimate_with_deformation, MinimizeOptions};
use crate::rigidity::verify_rigidity;
use crate::tessellation::build_system;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

fn default_samples() -> u64 {
    100_000
}
fn default_octa_samples() -> u64 {
    1_000
}
fn default_tol_grad() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    10_000
}
fn default_multistart() -> u32 {
    4
}
fn default_c() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_tol_grad")]
    pub tol_grad: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_multistart")]
    pub multistart: u32,
    #[serde(default = "default_c")]
    pub c1: f64,
    #[serde(default = "default_c")]
    pub c2: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_grad: default_tol_grad(),
            max_iter: default_max_iter(),
            multistart: default_multistart(),
            c1: default_c(),
            c2: default_c(),
        }
    }
}

impl SolverConfig {
    fn options(&self, seed: u64) -> MinimizeOptions {
        MinimizeOptions {
            tol_grad: self.tol_grad,
            max_iter: self.max_iter,
            multistart: self.multistart,
            seed,
        }
    }
    fn params(&self) -> EnergyParams {
        EnergyParams { c1: self.c1, c2: self.c2 }
    }
}

/// A fully-typed run request; unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RunConfig {
    Generate {
        kind: LatticeKind,
        rho: f64,
        lambda: f64,
        k: u32,
        m: f64,
        out: PathBuf,
        #[serde(default)]
        xyz: Option<PathBuf>,
        #[serde(default)]
        seed: u64,
    },
    Bonds {
        input: PathBuf,
        out: PathBuf,
        #[serde(default)]
        cells: Option<PathBuf>,
        #[serde(default)]
        seed: u64,
    },
    Energy {
        atoms: PathBuf,
        bonds: PathBuf,
        deformation: PathBuf,
        #[serde(default)]
        out: Option<PathBuf>,
        #[serde(default)]
        solver: SolverConfig,
        #[serde(default)]
        seed: u64,
    },
    VerifyRigidity {
        #[serde(default = "default_samples")]
        samples: u64,
        #[serde(default = "default_octa_samples")]
        octa_samples: u64,
        #[serde(default)]
        seed: u64,
        report: PathBuf,
    },
    Gamma {
        kind: LatticeKind,
        rho: f64,
        lambda: f64,
        k: u32,
        /// Increasing clamp half-lengths; defaults to a k-scaled schedule.
        #[serde(default)]
        m_schedule: Option<Vec<f64>>,
        #[serde(default)]
        seed: u64,
        out: PathBuf,
        #[serde(default)]
        xyz_out: Option<PathBuf>,
        #[serde(default)]
        solver: SolverConfig,
    },
    Scaling {
        kind: LatticeKind,
        lambda: f64,
        rho_list: Vec<f64>,
        k_list: Vec<u32>,
        out: PathBuf,
        #[serde(default)]
        json: Option<PathBuf>,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        solver: SolverConfig,
    },
}

impl RunConfig {
    pub fn seed(&self) -> u64 {
        match self {
            RunConfig::Generate { seed, .. }
            | RunConfig::Bonds { seed, .. }
            | RunConfig::Energy { seed, .. }
            | RunConfig::VerifyRigidity { seed, .. }
            | RunConfig::Gamma { seed, .. }
            | RunConfig::Scaling { seed, .. } => *seed,
        }
    }

    /// Range validation beyond type shape.
    pub fn validate(&self) -> Result<()> {
        let check_spec = |kind: &LatticeKind, rho: f64, lambda: f64, k: u32, m: f64| {
            LatticeSpec::new(*kind, rho, lambda, k, m).map(|_| ())
        };
        match self {
            RunConfig::Generate { kind, rho, lambda, k, m, .. } => {
                check_spec(kind, *rho, *lambda, *k, *m)
            }
            RunConfig::Bonds { .. } => Ok(()),
            RunConfig::Energy { solver, .. } => {
                solver.options(0).validate()?;
                if solver.c1 <= 0.0 || solver.c2 <= 0.0 {
                    return Err(Error::input("c1, c2 must be positive".to_string()));
                }
                Ok(())
            }
            RunConfig::VerifyRigidity { samples, octa_samples, .. } => {
                if *samples == 0 || *octa_samples == 0 {
                    return Err(Error::input("sample counts must be positive".to_string()));
                }
                Ok(())
            }
            RunConfig::Gamma { kind, rho, lambda, k, m_schedule, solver, .. } => {
                let sched = m_schedule
                    .clone()
                    .unwrap_or_else(|| crate::experiments::default_m_schedule(*k));
                check_spec(kind, *rho, *lambda, *k, sched[0])?;
                if sched.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::input("m_schedule must be increasing".to_string()));
                }
                solver.options(0).validate()
            }
            RunConfig::Scaling { kind, lambda, rho_list, k_list, solver, .. } => {
                if rho_list.is_empty() {
                    return Err(Error::input("rho_list must be nonempty".to_string()));
                }
                for &rho in rho_list {
                    check_spec(kind, rho, *lambda, *k_list.first().unwrap_or(&1), 4.0)?;
                }
                if k_list.is_empty() || k_list.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::input("k_list must be nonempty and increasing".to_string()));
                }
                solver.options(0).validate()
            }
        }
    }
}

/// Parse a configuration document into a validated config plus the list of
/// fields that took default values.
pub fn parse_config(text: &str) -> Result<(RunConfig, Vec<String>)> {
    let given: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::input(format!("malformed config: {e}")))?;
    let config: RunConfig = serde_json::from_value(given.clone())
        .map_err(|e| Error::input(format!("invalid config: {e}")))?;
    config.validate()?;
    let normalized = serde_json::to_value(&config)?;
    let mut defaults = defaulted_fields(&given, &normalized);
    defaults.retain(|d| d != "command");
    Ok((config, defaults))
}

/// Success modes of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    /// Some sweep rows failed; outputs were still written.
    Partial,
}

impl RunStatus {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunStatus::Ok => 0,
            RunStatus::Partial => 3,
        }
    }
}

fn manifest_path(first_out: &Path) -> PathBuf {
    let mut name = first_out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    first_out.with_file_name(name)
}

/// Execute a validated config; writes declared outputs plus a manifest.
pub fn run(config: &RunConfig, defaults: Vec<String>) -> Result<RunStatus> {
    let started = std::time::Instant::now();
    let echo = serde_json::to_value(config)?;
    let mut manifest = RunManifest::new(echo, defaults, config.seed());
    let mut status = RunStatus::Ok;
    let first_out: PathBuf;

    match config {
        RunConfig::Generate { kind, rho, lambda, k, m, out, xyz, .. } => {
            first_out = out.clone();
            let spec = LatticeSpec::new(*kind, *rho, *lambda, *k, *m)?;
            eprintln!("generating {kind} biphase lattice (rho={rho}, k={k}, M={m})");
            let sys = build_system(&spec)?;
            eprintln!("  {} atoms, {} cells, {} bonds", sys.atoms.len(), sys.tess.cells.len(), sys.bonds.edges.len());
            manifest.write_output(out, &to_json_17(&AtomsFile::new(&spec, &sys.atoms))?)?;
            if let Some(xyz_path) = xyz {
                let comment = format!("kind={kind} rho={rho} lambda={lambda} k={k} M={m}");
                manifest.write_output(xyz_path, io::to_xyz(&sys.atoms, &comment).as_bytes())?;
            }
        }
        RunConfig::Bonds { input, out, cells, .. } => {
            first_out = out.clone();
            let file: AtomsFile = serde_json::from_slice(&std::fs::read(input)?)?;
            let spec = file.spec;
            spec.validate()?;
            eprintln!("rebuilding bond topology for {} (rho={}, k={})", spec.kind, spec.rho, spec.k);
            let sys = build_system(&spec)?;
            // The atoms file must describe the same system.
            if sys.atoms.len() != file.atoms.len()
                || sys
                    .atoms
                    .atoms
                    .iter()
                    .zip(&file.atoms)
                    .any(|(a, b)| a.pos != b.pos || a.id != b.id)
            {
                return Err(Error::input(
                    "atoms file does not match the lattice generated from its spec".to_string(),
                ));
            }
            manifest.write_output(out, &to_json_17(&sys.bonds)?)?;
            // Flat CSV mirror next to the JSON.
            let mut csv = String::from("a,b,class\n");
            for e in &sys.bonds.edges {
                let class = match e.class {
                    crate::tessellation::BondClass::Nn => "nn",
                    crate::tessellation::BondClass::Nnn => "nnn",
                    crate::tessellation::BondClass::InterfaceDiagonal => "interface-diagonal",
                };
                csv.push_str(&format!("{},{},{class}\n", e.a, e.b));
            }
            let csv_path = out.with_extension("csv");
            manifest.write_output(&csv_path, csv.as_bytes())?;
            if let Some(cells_path) = cells {
                #[derive(Serialize)]
                struct CellsFile<'a> {
                    cells: &'a [crate::tessellation::Cell],
                }
                manifest
                    .write_output(cells_path, &to_json_17(&CellsFile { cells: &sys.tess.cells })?)?;
            }
        }
        RunConfig::Energy { atoms, bonds, deformation, out, solver, .. } => {
            let atoms_file: AtomsFile = serde_json::from_slice(&std::fs::read(atoms)?)?;
            let graph: crate::tessellation::BondGraph =
                serde_json::from_slice(&std::fs::read(bonds)?)?;
            let def_file: DeformationFile = serde_json::from_slice(&std::fs::read(deformation)?)?;
            let spec = atoms_file.spec;
            let set = atoms_file.into_atom_set();
            let def = def_file.into_deformation();
            if def.len() != set.len() {
                return Err(Error::input(format!(
                    "deformation covers {} atoms, lattice has {}",
                    def.len(),
                    set.len()
                )));
            }
            let wb = compile_bonds(&spec, &set, &graph, &solver.params())?;
            let report = energy(&wb, &def)?;
            let bytes = to_json_17(&report)?;
            match out {
                Some(path) => {
                    first_out = path.clone();
                    manifest.write_output(path, &bytes)?;
                }
                None => {
                    use std::io::Write;
                    std::io::stdout().write_all(&bytes)?;
                    first_out = PathBuf::from("energy.stdout");
                    manifest.record_output(Path::new("(stdout)"), &bytes);
                }
            }
        }
        RunConfig::VerifyRigidity { samples, octa_samples, seed, report } => {
            first_out = report.clone();
            eprintln!("fitting rigidity constants on {samples} + {octa_samples} samples");
            let rep = verify_rigidity(*samples, *octa_samples, *seed);
            eprintln!(
                "  C_tet = {:.6} ({} violations), C_oct = {:.6} ({} violations)",
                rep.c_tet, rep.tetra_violations, rep.c_oct, rep.octa_violations
            );
            manifest.write_output(report, &to_json_17(&rep)?)?;
        }
        RunConfig::Gamma { kind, rho, lambda, k, m_schedule, seed, out, xyz_out, solver } => {
            first_out = out.clone();
            let sched = m_schedule
                .clone()
                .unwrap_or_else(|| crate::experiments::default_m_schedule(*k));
            let spec = LatticeSpec::new(*kind, *rho, *lambda, *k, sched[0])?;
            eprintln!("estimating gamma for {kind} (rho={rho}, lambda={lambda}, k={k}, M={sched:?})");
            let (est, sys, outcome) = gamma_estimate_with_deformation(
                &spec,
                &solver.params(),
                &solver.options(*seed),
                &sched,
                None,
            )?;
            eprintln!(
                "  gamma = {:.9e} at M = {} ({} iterations, converged: {})",
                est.value, est.m, est.iterations, est.converged
            );
            manifest.write_output(out, &to_json_17(&est)?)?;
            if let Some(xyz_path) = xyz_out {
                let comment = format!(
                    "deformed kind={kind} rho={rho} lambda={lambda} k={k} gamma={}",
                    io::fmt17(est.value)
                );
                manifest.write_output(
                    xyz_path,
                    io::deformation_to_xyz(&sys.atoms, &outcome.def, &comment).as_bytes(),
                )?;
            }
        }
        RunConfig::Scaling { kind, lambda, rho_list, k_list, out, json, seed, solver } => {
            first_out = out.clone();
            eprintln!("scaling sweep for {kind}: rho in {rho_list:?}, k in {k_list:?}");
            let table = scaling_sweep(
                *kind,
                *lambda,
                rho_list,
                k_list,
                &solver.params(),
                &solver.options(*seed),
            )?;
            for r in &table.rows {
                eprintln!(
                    "  rho={} k={} gamma={} ({})",
                    r.rho,
                    r.k,
                    r.gamma_hat.map(io::fmt17).unwrap_or_else(|| "-".to_string()),
                    r.status
                );
            }
            manifest.write_output(out, io::table_to_csv(&table).as_bytes())?;
            if let Some(json_path) = json {
                #[derive(Serialize)]
                struct Mirror {
                    rows: Vec<crate::experiments::ScalingRow>,
                    fits: std::collections::BTreeMap<String, crate::experiments::PowerLawFit>,
                    crossover_k: Option<u32>,
                    loglog: std::collections::BTreeMap<String, Vec<(f64, f64)>>,
                }
                let mut fits = std::collections::BTreeMap::new();
                let mut loglog = std::collections::BTreeMap::new();
                for &rho in rho_list {
                    let key = io::fmt17(rho);
                    if let Ok(fit) = fit_table_group(&table, rho) {
                        fits.insert(key.clone(), fit);
                    }
                    loglog.insert(key, io::loglog_points(&table, rho));
                }
                let crossover_k = if rho_list.contains(&1.0) && rho_list.contains(lambda) {
                    crossover(&table, *lambda).ok().flatten()
                } else {
                    None
                };
                manifest.write_output(
                    json_path,
                    &to_json_17(&Mirror { rows: table.rows.clone(), fits, crossover_k, loglog })?,
                )?;
            }
            if table.any_failed() {
                status = RunStatus::Partial;
                eprintln!("some sweep cells failed; see the flagged rows");
            }
        }
    }

    manifest.wall_time_s = started.elapsed().as_secs_f64();
    manifest.write_manifest(&manifest_path(&first_out))?;
    Ok(status)
}

// ---------------------------------------------------------------------------
// Flag parsing helpers for the binary
// ---------------------------------------------------------------------------

/// Parse `a,b,c` or `lo:hi` into an increasing integer list.
pub fn parse_k_list(text: &str) -> Result<Vec<u32>> {
    let parse_one = |t: &str| -> Result<u32> {
        t.trim().parse().map_err(|e| Error::input(format!("bad k `{t}`: {e}")))
    };
    if let Some((lo, hi)) = text.split_once(':') {
        let (lo, hi) = (parse_one(lo)?, parse_one(hi)?);
        if hi < lo {
            return Err(Error::input(format!("empty k range {lo}:{hi}")));
        }
        return Ok((lo..=hi).collect());
    }
    let ks: Result<Vec<u32>> = text.split(',').map(parse_one).collect();
    let ks = ks?;
    Ok(ks)
}

pub fn parse_f64_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Error::input(format!("bad number `{t}`: {e}")))
        })
        .collect()
}
