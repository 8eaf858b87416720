//! Experiment configuration.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use super::domains::{make_fichera, make_lshape, make_unit_grid};
use crate::error::{Error, Result};
use crate::multigrid::{CycleKind, CycleParams, PcgParams};
use crate::parallel::{Backend, ParallelOptions};
use crate::smoother::DEFAULT_SIGMA_SCALE;
use crate::topology::{file::load_domain, MultiPatchDomain};

/// Upper bound on in-process ranks; each rank is one OS thread.
pub const MAX_INPROC_RANKS: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DomainChoice {
    Fichera,
    LShape,
    /// Patch counts per direction.
    UnitGrid(Vec<usize>),
    File(PathBuf),
}

impl FromStr for DomainChoice {
    type Err = Error;

    /// `fichera`, `lshape`, `unit_grid:KX,KY[,KZ]` or `file:PATH`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fichera" => return Ok(DomainChoice::Fichera),
            "lshape" => return Ok(DomainChoice::LShape),
            _ => {}
        }
        if let Some(counts) = s.strip_prefix("unit_grid:") {
            let counts = counts
                .split(',')
                .map(|c| {
                    c.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Config(format!("bad patch count '{c}' in '{s}'")))
                })
                .collect::<Result<Vec<_>>>()?;
            if !(2..=3).contains(&counts.len()) || counts.contains(&0) {
                return Err(Error::Config(format!("unit_grid needs 2 or 3 positive counts, got '{s}'")));
            }
            return Ok(DomainChoice::UnitGrid(counts));
        }
        if let Some(path) = s.strip_prefix("file:") {
            return Ok(DomainChoice::File(PathBuf::from(path)));
        }
        Err(Error::Config(format!(
            "unknown domain '{s}' (expected fichera, lshape, unit_grid:KX,KY[,KZ] or file:PATH)"
        )))
    }
}

impl fmt::Display for DomainChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainChoice::Fichera => f.write_str("fichera"),
            DomainChoice::LShape => f.write_str("lshape"),
            DomainChoice::UnitGrid(c) => {
                let c: Vec<String> = c.iter().map(|k| k.to_string()).collect();
                write!(f, "unit_grid:{}", c.join(","))
            }
            DomainChoice::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl DomainChoice {
    pub fn build(&self) -> Result<MultiPatchDomain> {
        match self {
            DomainChoice::Fichera => Ok(make_fichera()),
            DomainChoice::LShape => Ok(make_lshape()),
            DomainChoice::UnitGrid(c) => make_unit_grid(c),
            DomainChoice::File(p) => load_domain(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub domain: DomainChoice,
    /// Uniform split factor `m`: every patch becomes `m^d` patches.
    pub split: usize,
    /// Refinement levels `L` above the coarse level.
    pub levels: usize,
    pub degree: usize,
    pub cycle: CycleKind,
    pub nu: usize,
    pub tau: f64,
    /// `σ = h^{-2} / sigma_scale`.
    pub sigma_scale: f64,
    pub damp_coarse: bool,
    pub tol: f64,
    pub max_iterations: usize,
    pub ranks: usize,
    pub backend: Backend,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            domain: DomainChoice::Fichera,
            split: 1,
            levels: 2,
            degree: 2,
            cycle: CycleKind::V,
            nu: 1,
            tau: 0.25,
            sigma_scale: DEFAULT_SIGMA_SCALE,
            damp_coarse: false,
            tol: 1e-8,
            max_iterations: 500,
            ranks: 1,
            backend: Backend::Loopback,
            seed: 42,
        }
    }
}

fn in_range(name: &str, v: usize, lo: usize, hi: usize) -> Result<()> {
    if v < lo || v > hi {
        return Err(Error::Config(format!("{name} = {v} outside [{lo}, {hi}]")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        in_range("degree p", self.degree, 1, 8)?;
        in_range("levels L", self.levels, 1, 8)?;
        in_range("split m", self.split, 1, 8)?;
        in_range("smoothing steps nu", self.nu, 1, 100)?;
        in_range("max iterations", self.max_iterations, 1, 1_000_000)?;
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.sigma_scale > 0.0 && self.sigma_scale.is_finite()) {
            return Err(Error::Config(format!("sigma scale must be positive, got {}", self.sigma_scale)));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::Config(format!("tol must lie in (0, 1), got {}", self.tol)));
        }
        match self.backend {
            Backend::Loopback if self.ranks != 1 => Err(Error::Config(format!(
                "loopback backend runs 1 rank, not {}",
                self.ranks
            ))),
            Backend::InProc if self.ranks == 0 || self.ranks > MAX_INPROC_RANKS => Err(Error::Config(format!(
                "in-process backend supports 1 to {MAX_INPROC_RANKS} ranks, not {}",
                self.ranks
            ))),
            _ => Ok(()),
        }
    }

    /// The base domain split `m` times per direction.
    pub fn build_domain(&self) -> Result<MultiPatchDomain> {
        let base = self.domain.build()?;
        if self.split == 1 {
            Ok(base)
        } else {
            base.split_patches(self.split)
        }
    }

    pub fn cycle_params(&self) -> CycleParams {
        CycleParams {
            cycle: self.cycle,
            nu: self.nu,
            tau: self.tau,
            damp_coarse: self.damp_coarse,
        }
    }

    pub fn parallel_options(&self) -> ParallelOptions {
        ParallelOptions {
            levels: self.levels,
            degree: self.degree,
            sigma_scale: self.sigma_scale,
            cycle: self.cycle_params(),
            pcg: PcgParams {
                tol: self.tol,
                max_iterations: self.max_iterations,
            },
            check_consistency: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domain_names_roundtrip() {
        for s in ["fichera", "lshape", "unit_grid:2,1", "unit_grid:2,2,2", "file:a/b.json"] {
            assert_eq!(s.parse::<DomainChoice>().unwrap().to_string(), s);
        }
        assert!("unit_grid:2".parse::<DomainChoice>().is_err());
        assert!("torus".parse::<DomainChoice>().is_err());
    }

    #[test]
    fn ranges_are_validated() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let bad = [
            ExperimentConfig { degree: 9, ..Default::default() },
            ExperimentConfig { levels: 0, ..Default::default() },
            ExperimentConfig { split: 9, ..Default::default() },
            ExperimentConfig { tau: 0.0, ..Default::default() },
            ExperimentConfig { ranks: 2, ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
        }
    }
}
