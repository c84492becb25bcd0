//! Thickness sweeps, power-law fits, and crossover detection between the
//! defect-free and dislocated branches.

use crate::energy::EnergyParams;
use crate::error::{Error, Result};
use crate::lattice::{LatticeKind, LatticeSpec};
use crate::relax::{gamma_estimate, GammaEstimate, MinimizeOptions};
use crate::seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Converged,
    Unconverged,
    Failed,
}

impl std::fmt::Display for RowStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RowStatus::Converged => f.write_str("true"),
            RowStatus::Unconverged => f.write_str("false"),
            RowStatus::Failed => f.write_str("failed"),
        }
    }
}

impl std::str::FromStr for RowStatus {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "true" => Ok(RowStatus::Converged),
            "false" => Ok(RowStatus::Unconverged),
            "failed" => Ok(RowStatus::Failed),
            other => Err(Error::input(format!("bad converged flag `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub kind: LatticeKind,
    pub rho: f64,
    pub lambda: f64,
    pub k: u32,
    /// Final clamp half-length of the schedule (0 for failed rows).
    pub m: f64,
    pub gamma_hat: Option<f64>,
    pub status: RowStatus,
    /// Error text for failed rows.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
}

impl ScalingTable {
    pub fn group(&self, rho: f64) -> Vec<&ScalingRow> {
        self.rows.iter().filter(|r| (r.rho - rho).abs() < 1e-12).collect()
    }
    pub fn any_failed(&self) -> bool {
        self.rows.iter().any(|r| r.status == RowStatus::Failed)
    }
}

/// Default clamp schedule for one thickness: three increasing half-lengths
/// that grow linearly with k, so the transition layer (whose width scales
/// with k in the defect-free branch) is never pinched.
pub fn default_m_schedule(k: u32) -> Vec<f64> {
    let base = (1.5 * k as f64).ceil() + 2.0;
    let step = (k as f64 / 2.0).ceil().max(2.0);
    vec![base, base + step, base + 2.0 * step]
}

/// One cell of a sweep.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub spec: LatticeSpec,
    pub m_schedule: Vec<f64>,
    pub opts: MinimizeOptions,
}

/// Run a full (rho, k) sweep with the given per-cell runner. Individual
/// failures are recorded per-row and the sweep continues.
pub fn scaling_sweep_with(
    kind: LatticeKind,
    lambda: f64,
    rho_list: &[f64],
    k_list: &[u32],
    opts: &MinimizeOptions,
    runner: impl Fn(&SweepCell) -> Result<GammaEstimate> + Sync,
) -> Result<ScalingTable> {
    if k_list.is_empty() || k_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::input("k list must be nonempty and increasing".to_string()));
    }
    let mut cells = Vec::new();
    for (ri, &rho) in rho_list.iter().enumerate() {
        for &k in k_list {
            let spec = LatticeSpec::new(kind, rho, lambda, k, default_m_schedule(k)[0])?;
            let mut cell_opts = *opts;
            // Keyed by (rho index, k) so a cell's stream does not depend on
            // which grid it was swept in.
            cell_opts.seed = seed::derive(opts.seed, "sweep-cell", ri as u64 * 1000 + k as u64);
            cells.push(SweepCell { spec, m_schedule: default_m_schedule(k), opts: cell_opts });
        }
    }
    let mut rows: Vec<ScalingRow> = cells
        .par_iter()
        .map(|cell| match runner(cell) {
            Ok(est) => ScalingRow {
                kind,
                rho: cell.spec.rho,
                lambda,
                k: cell.spec.k,
                m: est.m,
                gamma_hat: Some(est.value),
                status: if est.converged { RowStatus::Converged } else { RowStatus::Unconverged },
                error: None,
            },
            Err(e) => ScalingRow {
                kind,
                rho: cell.spec.rho,
                lambda,
                k: cell.spec.k,
                m: 0.0,
                gamma_hat: None,
                status: RowStatus::Failed,
                error: Some(e.to_string()),
            },
        })
        .collect();
    rows.sort_by(|a, b| a.rho.total_cmp(&b.rho).then(a.k.cmp(&b.k)));
    Ok(ScalingTable { rows })
}

/// Sweep with the production gamma runner.
pub fn scaling_sweep(
    kind: LatticeKind,
    lambda: f64,
    rho_list: &[f64],
    k_list: &[u32],
    params: &EnergyParams,
    opts: &MinimizeOptions,
) -> Result<ScalingTable> {
    scaling_sweep_with(kind, lambda, rho_list, k_list, opts, |cell| {
        gamma_estimate(&cell.spec, params, &cell.opts, &cell.m_schedule, None)
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub log_prefactor: f64,
    pub r_squared: f64,
}

/// Least-squares power law through (k, gamma) points on log-log axes.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    if points.len() < 3 {
        return Err(Error::input(format!(
            "power-law fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(_, g)| g <= 0.0) {
        return Err(Error::input("degenerate group: gamma must be positive".to_string()));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    if sxx <= 0.0 {
        return Err(Error::input("k values must be distinct".to_string()));
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ss_tot: f64 = ys.iter().map(|y| (y - ybar) * (y - ybar)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(PowerLawFit { exponent: slope, log_prefactor: intercept, r_squared })
}

pub fn fit_table_group(table: &ScalingTable, rho: f64) -> Result<PowerLawFit> {
    let pts: Vec<(f64, f64)> = table
        .group(rho)
        .iter()
        .filter_map(|r| r.gamma_hat.map(|g| (r.k as f64, g)))
        .collect();
    fit_power_law(&pts)
}

/// Smallest k at which the dislocated branch undercuts the defect-free one,
/// persisting for every larger sampled k; `None` when no such k exists.
pub fn crossover(table: &ScalingTable, lambda: f64) -> Result<Option<u32>> {
    let free = table.group(1.0);
    let disl = table.group(lambda);
    let ks: Vec<u32> = free.iter().map(|r| r.k).collect();
    let ks2: Vec<u32> = disl.iter().map(|r| r.k).collect();
    if ks != ks2 || ks.is_empty() {
        return Err(Error::input("crossover needs matching k grids".to_string()));
    }
    let mut k_star = None;
    for (f, d) in free.iter().zip(&disl) {
        let (Some(gf), Some(gd)) = (f.gamma_hat, d.gamma_hat) else {
            return Err(Error::input(format!("row k = {} has no value", f.k)));
        };
        if gd < gf {
            if k_star.is_none() {
                k_star = Some(f.k);
            }
        } else {
            k_star = None;
        }
    }
    Ok(k_star)
}
