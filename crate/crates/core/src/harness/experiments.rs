//! Experiment drivers and their CSV rows.

use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::multigrid::CycleKind;
use crate::parallel::{parallel_solve, Backend};

pub const SOLVE_HEADER: &str =
    "domain,split,K,l,p,cycle,nu,tau,sigma_scale,tol,ranks,backend,N,nnz,iters,rel_res,t_setup,t_assemble,t_solve,comm_bytes";
pub const TABLE_HEADER: &str = "l,p,N,iters,rel_res,t_setup,t_assemble,t_solve";
pub const SCALING_HEADER: &str =
    "mode,ranks,K,l,p,N,iters,t_setup,s_setup,t_assemble,s_assemble,t_solve,s_solve,comm_bytes";

/// Seconds rounded to milliseconds.
fn ms(t: f64) -> f64 {
    (t * 1000.0).round() / 1000.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub domain: String,
    pub split: usize,
    #[serde(rename = "K")]
    pub patches: usize,
    #[serde(rename = "l")]
    pub levels: usize,
    #[serde(rename = "p")]
    pub degree: usize,
    pub cycle: String,
    pub nu: usize,
    pub tau: f64,
    pub sigma_scale: f64,
    pub tol: f64,
    pub ranks: usize,
    pub backend: String,
    #[serde(rename = "N")]
    pub dofs: usize,
    pub nnz: usize,
    pub iters: usize,
    pub rel_res: f64,
    pub t_setup: f64,
    pub t_assemble: f64,
    pub t_solve: f64,
    pub comm_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub l: usize,
    pub p: usize,
    #[serde(rename = "N")]
    pub dofs: usize,
    pub iters: usize,
    pub rel_res: f64,
    pub t_setup: f64,
    pub t_assemble: f64,
    pub t_solve: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub mode: String,
    pub ranks: usize,
    #[serde(rename = "K")]
    pub patches: usize,
    pub l: usize,
    pub p: usize,
    #[serde(rename = "N")]
    pub dofs: usize,
    pub iters: usize,
    pub t_setup: f64,
    pub s_setup: f64,
    pub t_assemble: f64,
    pub s_assemble: f64,
    pub t_solve: f64,
    pub s_solve: f64,
    pub comm_bytes: usize,
}

impl From<&ResultRow> for TableRow {
    fn from(r: &ResultRow) -> Self {
        Self {
            l: r.levels,
            p: r.degree,
            dofs: r.dofs,
            iters: r.iters,
            rel_res: r.rel_res,
            t_setup: r.t_setup,
            t_assemble: r.t_assemble,
            t_solve: r.t_solve,
        }
    }
}

/// One PCG solve as configured. Topology discovery and splitting count as
/// setup.
pub fn run_solve(config: &ExperimentConfig) -> Result<ResultRow> {
    solve_timed(config).map(|(row, _)| row)
}

/// The row plus unrounded `(setup, assemble, solve)` seconds.
fn solve_timed(config: &ExperimentConfig) -> Result<(ResultRow, [f64; 3])> {
    config.validate()?;
    let t = Instant::now();
    let domain = config.build_domain()?;
    let t_domain = t.elapsed().as_secs_f64();
    let out = parallel_solve(config.backend, config.ranks, &domain, &config.parallel_options())?;
    let timings = out.report.timings;
    let raw = [t_domain + timings.setup, timings.assemble, timings.solve];
    let row = ResultRow {
        domain: config.domain.to_string(),
        split: config.split,
        patches: domain.num_patches(),
        levels: config.levels,
        degree: config.degree,
        cycle: match config.cycle {
            CycleKind::V => "v".into(),
            CycleKind::W => "w".into(),
        },
        nu: config.nu,
        tau: config.tau,
        sigma_scale: config.sigma_scale,
        tol: config.tol,
        ranks: config.ranks,
        backend: config.backend.to_string(),
        dofs: out.solution.len(),
        nnz: out.nnz,
        iters: out.report.iterations,
        rel_res: out.report.relative_residual(),
        t_setup: ms(raw[0]),
        t_assemble: ms(raw[1]),
        t_solve: ms(raw[2]),
        comm_bytes: out.comm_bytes,
    };
    Ok((row, raw))
}

/// One solve per `(l, p)`, rows ordered by `l` then `p`.
pub fn run_iteration_table(config: &ExperimentConfig, levels: &[usize], degrees: &[usize]) -> Result<Vec<TableRow>> {
    let mut rows = Vec::with_capacity(levels.len() * degrees.len());
    for &l in levels {
        for &p in degrees {
            let cell = ExperimentConfig {
                levels: l,
                degree: p,
                ..config.clone()
            };
            let row = run_solve(&cell).map_err(|e| e.context(format!("cell l={l}, p={p}")))?;
            rows.push(TableRow::from(&row));
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingMode {
    /// Fixed problem, growing rank count.
    Strong,
    /// Patches per rank fixed by splitting with `m ∝ R^{1/d}`.
    Weak,
}

impl FromStr for ScalingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strong" => Ok(ScalingMode::Strong),
            "weak" => Ok(ScalingMode::Weak),
            other => Err(Error::Config(format!("unknown scaling mode '{other}' (expected strong or weak)"))),
        }
    }
}

impl std::fmt::Display for ScalingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScalingMode::Strong => "strong",
            ScalingMode::Weak => "weak",
        })
    }
}

/// Integer `k` with `k^d = ratio`.
fn integer_root(ratio: usize, d: usize) -> Option<usize> {
    (1..=ratio).take_while(|k| k.pow(d as u32) <= ratio).find(|k| k.pow(d as u32) == ratio)
}

/// Split factor for each rank count: the configured split for strong
/// scaling, `m_0 (R / R_0)^{1/d}` for weak scaling.
pub fn scaling_splits(config: &ExperimentConfig, ranks: &[usize], mode: ScalingMode) -> Result<Vec<usize>> {
    let r0 = *ranks
        .first()
        .ok_or_else(|| Error::Config("scaling needs at least one rank count".into()))?;
    if ranks.contains(&0) {
        return Err(Error::Config("rank counts must be positive".into()));
    }
    match mode {
        ScalingMode::Strong => Ok(vec![config.split; ranks.len()]),
        ScalingMode::Weak => {
            let d = config.domain.build()?.dim();
            ranks
                .iter()
                .map(|&r| {
                    let k = (r % r0 == 0).then(|| integer_root(r / r0, d)).flatten().ok_or_else(|| {
                        Error::Config(format!("weak scaling: {r}/{r0} is not a {d}-th power of an integer"))
                    })?;
                    Ok(config.split * k)
                })
                .collect()
        }
    }
}

/// Sweeps the rank counts; speedups are relative to the first row.
pub fn run_scaling(config: &ExperimentConfig, ranks: &[usize], mode: ScalingMode) -> Result<Vec<ScalingRow>> {
    let splits = scaling_splits(config, ranks, mode)?;
    let mut rows: Vec<ScalingRow> = Vec::with_capacity(ranks.len());
    let mut base: Option<[f64; 3]> = None;
    for (&r, &m) in ranks.iter().zip(&splits) {
        let backend = if r == 1 && config.backend == Backend::Loopback {
            Backend::Loopback
        } else {
            Backend::InProc
        };
        let cfg = ExperimentConfig {
            ranks: r,
            split: m,
            backend,
            ..config.clone()
        };
        let (row, raw) = solve_timed(&cfg).map_err(|e| e.context(format!("{mode} scaling, R={r}")))?;
        let b = *base.get_or_insert(raw);
        let speedup = |k: usize| if raw[k] > 0.0 { ms(b[k] / raw[k]) } else { 1.0 };
        rows.push(ScalingRow {
            mode: mode.to_string(),
            ranks: r,
            patches: row.patches,
            l: row.levels,
            p: row.degree,
            dofs: row.dofs,
            iters: row.iters,
            t_setup: row.t_setup,
            s_setup: speedup(0),
            t_assemble: row.t_assemble,
            s_assemble: speedup(1),
            t_solve: row.t_solve,
            s_solve: speedup(2),
            comm_bytes: row.comm_bytes,
        });
    }
    Ok(rows)
}

/// Writes rows as CSV with a header line.
pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// A header-only CSV for an empty row set.
pub fn write_header<W: Write>(header: &str, mut out: W) -> Result<()> {
    writeln!(out, "{header}")?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Parse(format!("{other:?}")),
    }
}
