//! JSON domain files.
//!
//! ```json
//! {
//!   "patches": [
//!     { "degrees": [1, 1], "elements": [1, 1],
//!       "control_points": [[0,0], [1,0], [0,1], [1,1]] }
//!   ],
//!   "interfaces": [],
//!   "boundary": { "default": "dirichlet", "sides": [ { "patch": 0, "side": 1, "kind": "neumann" } ] },
//!   "source": "sine"
//! }
//! ```
//!
//! Control points are listed with the first parametric direction fastest.
//! `interfaces` is optional; when present it replaces geometric discovery.
//! `base_elements` per patch sets the level-0 element counts (default 1).

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use super::{
    build_topology, default_tolerance, BoundaryKind, BoundaryTags, GeometryMap, Interface,
    MultiPatchDomain, Orientation, Side, SourceTerm,
};
use crate::error::{Error, Result};
use crate::spline::UnivariateSpace;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PatchSpec {
    degrees: Vec<usize>,
    elements: Vec<usize>,
    control_points: Vec<Vec<f64>>,
    #[serde(default)]
    base_elements: Option<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InterfaceSpec {
    patch_a: usize,
    side_a: usize,
    patch_b: usize,
    side_b: usize,
    #[serde(default)]
    orientation: u8,
}

#[derive(Debug, Deserialize, Clone, Copy)]
#[serde(rename_all = "lowercase")]
enum KindSpec {
    Dirichlet,
    Neumann,
}

impl From<KindSpec> for BoundaryKind {
    fn from(k: KindSpec) -> Self {
        match k {
            KindSpec::Dirichlet => BoundaryKind::Dirichlet,
            KindSpec::Neumann => BoundaryKind::Neumann,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SideTag {
    patch: usize,
    side: usize,
    kind: KindSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundarySpec {
    default: KindSpec,
    #[serde(default)]
    sides: Vec<SideTag>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum SourceSpec {
    Named(String),
    Constant(f64),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainSpec {
    patches: Vec<PatchSpec>,
    #[serde(default)]
    interfaces: Option<Vec<InterfaceSpec>>,
    boundary: BoundarySpec,
    #[serde(default)]
    source: Option<SourceSpec>,
    #[serde(default)]
    tolerance: Option<f64>,
}

/// Parses a domain description from JSON text.
pub fn parse_domain(text: &str) -> Result<MultiPatchDomain> {
    let spec: DomainSpec = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let mut patches = Vec::with_capacity(spec.patches.len());
    let mut base = Vec::with_capacity(spec.patches.len());
    for (k, p) in spec.patches.iter().enumerate() {
        let dim = p.degrees.len();
        if p.elements.len() != dim {
            return Err(Error::Parse(format!("patch {k}: degrees and elements differ in length")));
        }
        let spaces = p
            .degrees
            .iter()
            .zip(&p.elements)
            .map(|(&deg, &n)| UnivariateSpace::new(deg, n))
            .collect::<Result<Vec<_>>>()?;
        if p.control_points.iter().any(|c| c.len() != dim) {
            return Err(Error::Parse(format!("patch {k}: control points must have {dim} coordinates")));
        }
        let cps = p.control_points.iter().flatten().copied().collect();
        patches.push(GeometryMap::new(spaces, cps)?);
        let mut b = [1usize; 3];
        if let Some(be) = &p.base_elements {
            if be.len() != dim || be.contains(&0) {
                return Err(Error::Parse(format!("patch {k}: invalid base_elements")));
            }
            b[..dim].copy_from_slice(be);
        }
        base.push(b);
    }
    if patches.is_empty() {
        return Err(Error::Parse("no patches".into()));
    }
    let tags: HashMap<(usize, usize), BoundaryKind> = spec
        .boundary
        .sides
        .iter()
        .map(|t| ((t.patch, t.side), t.kind.into()))
        .collect();
    let tags = BoundaryTags::Explicit {
        tags,
        default: spec.boundary.default.into(),
    };
    let tol = spec.tolerance.unwrap_or_else(|| default_tolerance(&patches));
    let dim = patches[0].dim();
    let domain = match spec.interfaces {
        None => build_topology(patches, &tags, tol)?,
        Some(list) => {
            let interfaces = list
                .iter()
                .map(|i| {
                    if i.side_a >= 2 * dim || i.side_b >= 2 * dim || i.orientation >= 8 {
                        return Err(Error::Parse("interface side or orientation out of range".into()));
                    }
                    Ok(Interface {
                        patch_a: i.patch_a,
                        side_a: Side::from_index(i.side_a),
                        patch_b: i.patch_b,
                        side_b: Side::from_index(i.side_b),
                        orientation: Orientation::from_code(i.orientation),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if interfaces
                .iter()
                .any(|i| i.patch_a >= patches.len() || i.patch_b >= patches.len())
            {
                return Err(Error::Parse("interface references a missing patch".into()));
            }
            MultiPatchDomain::with_interfaces(patches, interfaces, &tags, tol)?
        }
    };
    let source = match spec.source {
        None => SourceTerm::SineProduct,
        Some(SourceSpec::Constant(c)) => SourceTerm::Constant(c),
        Some(SourceSpec::Named(s)) => match s.as_str() {
            "sine" => SourceTerm::SineProduct,
            "zero" => SourceTerm::Zero,
            other => return Err(Error::Parse(format!("unknown source '{other}'"))),
        },
    };
    domain.with_source(source).with_base_elements(base)
}

pub fn load_domain(path: &Path) -> Result<MultiPatchDomain> {
    parse_domain(&std::fs::read_to_string(path)?)
}
