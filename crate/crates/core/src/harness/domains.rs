//! Built-in benchmark domains.

use crate::error::{Error, Result};
use crate::topology::{build_topology, BoundaryKind, BoundaryTags, GeometryMap, MultiPatchDomain, SourceTerm};

const TOLERANCE: f64 = 1e-9;

fn dirichlet_on_coordinate_planes(x: &[f64]) -> BoundaryKind {
    if x.iter().any(|&c| c.abs() < TOLERANCE) {
        BoundaryKind::Dirichlet
    } else {
        BoundaryKind::Neumann
    }
}

/// `(0,2)³ \ [1,2)³` as seven unit cubes, Dirichlet where `xyz = 0`.
pub fn make_fichera() -> MultiPatchDomain {
    let mut patches = Vec::with_capacity(7);
    for c in 0..8usize {
        let o = [(c & 1) as f64, (c >> 1 & 1) as f64, (c >> 2 & 1) as f64];
        if c == 7 {
            continue;
        }
        patches.push(GeometryMap::axis_box(&o, &[o[0] + 1.0, o[1] + 1.0, o[2] + 1.0]).expect("unit cube"));
    }
    build_topology(patches, &BoundaryTags::ByCenter(dirichlet_on_coordinate_planes), TOLERANCE)
        .expect("Fichera corner topology")
        .with_source(SourceTerm::SineProduct)
}

/// `kx × ky (× kz)` unit squares or cubes, Dirichlet on the whole boundary.
pub fn make_unit_grid(counts: &[usize]) -> Result<MultiPatchDomain> {
    if !(2..=3).contains(&counts.len()) || counts.contains(&0) {
        return Err(Error::Config(format!("unit grid needs 2 or 3 positive counts, got {counts:?}")));
    }
    let d = counts.len();
    let total: usize = counts.iter().product();
    let mut patches = Vec::with_capacity(total);
    for c in 0..total {
        let mut r = c;
        let mut lo = vec![0.0; d];
        for k in 0..d {
            lo[k] = (r % counts[k]) as f64;
            r /= counts[k];
        }
        let hi: Vec<f64> = lo.iter().map(|v| v + 1.0).collect();
        patches.push(GeometryMap::axis_box(&lo, &hi)?);
    }
    Ok(build_topology(patches, &BoundaryTags::Uniform(BoundaryKind::Dirichlet), TOLERANCE)?
        .with_source(SourceTerm::SineProduct))
}

fn lshape_tag(x: &[f64]) -> BoundaryKind {
    if x.iter().any(|&c| c.abs() < TOLERANCE || (c - 2.0).abs() < TOLERANCE) {
        BoundaryKind::Dirichlet
    } else {
        BoundaryKind::Neumann
    }
}

/// Three unit squares forming `(0,2)² \ [1,2)²`. Sides on the lines
/// `x, y ∈ {0, 2}` are Dirichlet, the two reentrant sides are Neumann.
pub fn make_lshape() -> MultiPatchDomain {
    let patches = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
        .iter()
        .map(|o| GeometryMap::axis_box(o, &[o[0] + 1.0, o[1] + 1.0]).expect("unit square"))
        .collect();
    build_topology(patches, &BoundaryTags::ByCenter(lshape_tag), TOLERANCE)
        .expect("L-shape topology")
        .with_source(SourceTerm::SineProduct)
}
