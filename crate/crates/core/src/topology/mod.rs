//! Multi-patch domains: geometry maps, interface discovery, patch splitting,
//! the global dof mapper and the decomposition of dofs into pieces.

mod dofs;
pub mod file;
mod geometry;

pub use dofs::{DofMapper, EntityState, Piece, PieceDecomposition, PieceKind};
pub use geometry::{GeometryMap, Jacobian};

use std::collections::HashMap;

use crate::error::{Error, Result};

/// One side of the parameter hypercube: the face where parameter `dir`
/// equals 0 (`upper == false`) or 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Side {
    pub dir: usize,
    pub upper: bool,
}

impl Side {
    pub fn new(dir: usize, upper: bool) -> Self {
        Self { dir, upper }
    }

    /// Sides are numbered `2 * dir + upper`.
    pub fn index(&self) -> usize {
        2 * self.dir + self.upper as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self {
            dir: i / 2,
            upper: i % 2 == 1,
        }
    }

    /// Parameter directions spanning the side, ascending.
    pub fn tangents(&self, dim: usize) -> Vec<usize> {
        (0..dim).filter(|&k| k != self.dir).collect()
    }

    /// Parameter point of the side point with side coordinates `st`.
    pub fn param_point(&self, dim: usize, st: &[f64]) -> [f64; 3] {
        let mut x = [0.0; 3];
        x[self.dir] = if self.upper { 1.0 } else { 0.0 };
        for (k, &t) in self.tangents(dim).iter().enumerate() {
            x[t] = st[k];
        }
        x
    }
}

/// How side coordinates of side A map onto those of side B: optionally swap
/// the two coordinates (3D only), then reflect each coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Orientation {
    pub swap: bool,
    pub flip: [bool; 2],
}

impl Orientation {
    pub const IDENTITY: Orientation = Orientation {
        swap: false,
        flip: [false, false],
    };

    /// Compact code: bit 0 swap, bit 1 flip of the first, bit 2 of the second
    /// coordinate. In 2D only bit 1 (the flip bit) can be set.
    pub fn code(&self) -> u8 {
        self.swap as u8 | (self.flip[0] as u8) << 1 | (self.flip[1] as u8) << 2
    }

    pub fn from_code(code: u8) -> Self {
        Self {
            swap: code & 1 != 0,
            flip: [code & 2 != 0, code & 4 != 0],
        }
    }

    /// All orientation codes admissible for sides of a `dim`-dimensional patch.
    pub fn all(dim: usize) -> Vec<Orientation> {
        if dim == 2 {
            vec![Self::from_code(0), Self::from_code(2)]
        } else {
            (0..8).map(Self::from_code).collect()
        }
    }

    pub fn map_coords(&self, st: &[f64]) -> [f64; 2] {
        let mut uv = [st[0], if st.len() > 1 { st[1] } else { 0.0 }];
        if self.swap {
            uv.swap(0, 1);
        }
        for k in 0..st.len() {
            if self.flip[k] {
                uv[k] = 1.0 - uv[k];
            }
        }
        uv
    }

    /// Maps side dof indices `ab` of side A onto side B, where `dims_b` are the
    /// index extents along B's tangential directions.
    pub fn map_indices(&self, ab: &[usize], dims_b: &[usize]) -> [usize; 2] {
        let mut uv = [ab[0], if ab.len() > 1 { ab[1] } else { 0 }];
        if self.swap {
            uv.swap(0, 1);
        }
        for k in 0..ab.len() {
            if self.flip[k] {
                uv[k] = dims_b[k] - 1 - uv[k];
            }
        }
        uv
    }

    /// Extents along A's tangential directions seen from B.
    pub fn permute_dims(&self, dims_a: &[usize]) -> Vec<usize> {
        let mut d = dims_a.to_vec();
        if self.swap && d.len() == 2 {
            d.swap(0, 1);
        }
        d
    }
}

/// A fully matching interface between two patch sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interface {
    pub patch_a: usize,
    pub side_a: Side,
    pub patch_b: usize,
    pub side_b: Side,
    pub orientation: Orientation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
}

/// Right-hand side of the Poisson problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceTerm {
    Zero,
    Constant(f64),
    /// `d * 25 π² Π_i sin(5π x_i)`: the 2D and 3D benchmark loads.
    SineProduct,
}

impl SourceTerm {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            SourceTerm::Zero => 0.0,
            SourceTerm::Constant(c) => c,
            SourceTerm::SineProduct => {
                let pi = std::f64::consts::PI;
                let scale = 25.0 * x.len() as f64 * pi * pi;
                x.iter().fold(scale, |acc, &xi| acc * (5.0 * pi * xi).sin())
            }
        }
    }
}

/// How boundary kinds are assigned to patch sides without a partner.
#[derive(Debug, Clone)]
pub enum BoundaryTags {
    Uniform(BoundaryKind),
    /// Decides from the physical image of the side center.
    ByCenter(fn(&[f64]) -> BoundaryKind),
    /// Explicit `(patch, side index)` tags with a fallback.
    Explicit {
        tags: HashMap<(usize, usize), BoundaryKind>,
        default: BoundaryKind,
    },
}

impl BoundaryTags {
    fn tag(&self, patch: usize, side: Side, center: &[f64]) -> BoundaryKind {
        match self {
            BoundaryTags::Uniform(k) => *k,
            BoundaryTags::ByCenter(f) => f(center),
            BoundaryTags::Explicit { tags, default } => {
                *tags.get(&(patch, side.index())).unwrap_or(default)
            }
        }
    }
}

/// Side state of a patch in a domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SideKind {
    Interface(usize),
    Boundary(BoundaryKind),
}

/// Patches, their fully matching interfaces and per-side boundary tags.
#[derive(Debug, Clone)]
pub struct MultiPatchDomain {
    dim: usize,
    patches: Vec<GeometryMap>,
    /// Elements per direction of each patch on level 0.
    base_elements: Vec<[usize; 3]>,
    interfaces: Vec<Interface>,
    sides: Vec<Vec<SideKind>>,
    source: SourceTerm,
    tolerance: f64,
}

const SIDE_SAMPLES: usize = 5;

impl MultiPatchDomain {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_patches(&self) -> usize {
        self.patches.len()
    }

    pub fn patches(&self) -> &[GeometryMap] {
        &self.patches
    }

    pub fn patch(&self, k: usize) -> &GeometryMap {
        &self.patches[k]
    }

    pub fn interfaces(&self) -> &[Interface] {
        &self.interfaces
    }

    pub fn side_kind(&self, patch: usize, side: Side) -> SideKind {
        self.sides[patch][side.index()]
    }

    pub fn source(&self) -> SourceTerm {
        self.source
    }

    pub fn with_source(mut self, source: SourceTerm) -> Self {
        self.source = source;
        self
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn base_elements(&self, patch: usize) -> [usize; 3] {
        self.base_elements[patch]
    }

    /// Elements per direction of `patch` on `level`.
    pub fn elements(&self, patch: usize, level: usize) -> [usize; 3] {
        let b = self.base_elements[patch];
        let mut n = [1; 3];
        for k in 0..self.dim {
            n[k] = b[k] << level;
        }
        n
    }

    pub fn with_base_elements(mut self, base: Vec<[usize; 3]>) -> Result<Self> {
        if base.len() != self.patches.len() {
            return Err(Error::Config("one base element triple per patch".into()));
        }
        self.base_elements = base;
        Ok(self)
    }

    /// Physical bounding-box diagonal.
    pub fn diameter(patches: &[GeometryMap]) -> f64 {
        let dim = patches[0].dim();
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for g in patches {
            for c in 0..1usize << dim {
                let x: Vec<f64> = (0..dim).map(|k| (c >> k & 1) as f64).collect();
                let p = g.eval(&x).expect("corner evaluation");
                for k in 0..dim {
                    lo[k] = lo[k].min(p[k]);
                    hi[k] = hi[k].max(p[k]);
                }
            }
        }
        (0..dim).map(|k| (hi[k] - lo[k]).powi(2)).sum::<f64>().sqrt()
    }

    /// Assembles a domain from explicitly given interfaces, validating each one
    /// geometrically.
    pub fn with_interfaces(
        patches: Vec<GeometryMap>,
        interfaces: Vec<Interface>,
        tags: &BoundaryTags,
        tolerance: f64,
    ) -> Result<Self> {
        let dim = check_patches(&patches)?;
        let samples = SideSamples::new(&patches, dim)?;
        let mut sides = vec![vec![None; 2 * dim]; patches.len()];
        for (i, itf) in interfaces.iter().enumerate() {
            let a = samples.get(itf.patch_a, itf.side_a);
            let b = samples.get(itf.patch_b, itf.side_b);
            if !orientation_matches(&patches[itf.patch_b], itf.side_b, a, b, itf.orientation, tolerance, dim)? {
                return Err(Error::NonMatching(format!(
                    "declared interface {i} does not match geometrically"
                )));
            }
            for (p, s) in [(itf.patch_a, itf.side_a), (itf.patch_b, itf.side_b)] {
                if sides[p][s.index()].is_some() {
                    return Err(Error::NonManifold(format!(
                        "side {} of patch {p} used by two interfaces",
                        s.index()
                    )));
                }
                sides[p][s.index()] = Some(SideKind::Interface(i));
            }
        }
        Ok(Self::finish(patches, interfaces, sides, tags, tolerance, dim, &samples))
    }

    fn finish(
        patches: Vec<GeometryMap>,
        interfaces: Vec<Interface>,
        sides: Vec<Vec<Option<SideKind>>>,
        tags: &BoundaryTags,
        tolerance: f64,
        dim: usize,
        samples: &SideSamples,
    ) -> Self {
        let sides = sides
            .into_iter()
            .enumerate()
            .map(|(k, row)| {
                row.into_iter()
                    .enumerate()
                    .map(|(s, kind)| {
                        kind.unwrap_or_else(|| {
                            let side = Side::from_index(s);
                            SideKind::Boundary(tags.tag(k, side, &samples.center(k, side)[..dim]))
                        })
                    })
                    .collect()
            })
            .collect();
        let base_elements = vec![[1, 1, 1]; patches.len()];
        Self {
            dim,
            patches,
            base_elements,
            interfaces,
            sides,
            source: SourceTerm::Zero,
            tolerance,
        }
    }

    /// Replaces every patch by `m^d` sub-patches (restrictions of the parent
    /// map to a uniform grid of parameter sub-boxes) and rediscovers the
    /// topology. Sub-patch sides on a parent boundary side inherit its tag.
    pub fn split_patches(&self, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Config("split factor must be at least 1".into()));
        }
        if m == 1 {
            return Ok(self.clone());
        }
        let d = self.dim;
        let cells = m.pow(d as u32);
        let mut patches = Vec::with_capacity(self.patches.len() * cells);
        let mut base = Vec::with_capacity(patches.capacity());
        let mut tags = HashMap::new();
        for (k, g) in self.patches.iter().enumerate() {
            for c in 0..cells {
                let mut idx = [0usize; 3];
                let mut r = c;
                for slot in idx.iter_mut().take(d) {
                    *slot = r % m;
                    r /= m;
                }
                let lo: Vec<f64> = (0..d).map(|i| idx[i] as f64 / m as f64).collect();
                let hi: Vec<f64> = (0..d).map(|i| (idx[i] + 1) as f64 / m as f64).collect();
                let new_index = patches.len();
                patches.push(g.restricted(&lo, &hi));
                base.push(self.base_elements[k]);
                for s in 0..2 * d {
                    let side = Side::from_index(s);
                    let on_parent = if side.upper { idx[side.dir] == m - 1 } else { idx[side.dir] == 0 };
                    if on_parent {
                        if let SideKind::Boundary(kind) = self.sides[k][s] {
                            tags.insert((new_index, s), kind);
                        }
                    }
                }
            }
        }
        let tags = BoundaryTags::Explicit {
            tags,
            default: BoundaryKind::Dirichlet,
        };
        let domain = build_topology(patches, &tags, self.tolerance)?;
        Ok(domain.with_source(self.source).with_base_elements(base)?)
    }

    /// Corner images of all patches, merged within the geometric tolerance.
    pub fn corner_images(&self) -> Vec<[f64; 3]> {
        let mut out: Vec<[f64; 3]> = Vec::new();
        for g in &self.patches {
            for c in 0..1usize << self.dim {
                let x: Vec<f64> = (0..self.dim).map(|k| (c >> k & 1) as f64).collect();
                let p = g.eval(&x).unwrap();
                if !out.iter().any(|q| dist(q, &p, self.dim) <= self.tolerance) {
                    out.push(p);
                }
            }
        }
        out
    }
}

fn check_patches(patches: &[GeometryMap]) -> Result<usize> {
    let first = patches
        .first()
        .ok_or_else(|| Error::Domain("patch list is empty".into()))?;
    let dim = first.dim();
    if patches.iter().any(|g| g.dim() != dim) {
        return Err(Error::Domain("patches of mixed dimension".into()));
    }
    Ok(dim)
}

fn dist(a: &[f64; 3], b: &[f64; 3], dim: usize) -> f64 {
    (0..dim).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt()
}

/// Physical images of a regular grid of side coordinates for every side.
struct SideSamples {
    dim: usize,
    coords: Vec<[f64; 2]>,
    points: Vec<Vec<Vec<[f64; 3]>>>,
}

impl SideSamples {
    fn new(patches: &[GeometryMap], dim: usize) -> Result<Self> {
        let grid: Vec<f64> = (0..SIDE_SAMPLES)
            .map(|i| i as f64 / (SIDE_SAMPLES - 1) as f64)
            .collect();
        let coords: Vec<[f64; 2]> = if dim == 2 {
            grid.iter().map(|&s| [s, 0.0]).collect()
        } else {
            grid.iter()
                .flat_map(|&t| grid.iter().map(move |&s| [s, t]))
                .collect()
        };
        let mut points = Vec::with_capacity(patches.len());
        for g in patches {
            let mut per_side = Vec::with_capacity(2 * dim);
            for s in 0..2 * dim {
                let side = Side::from_index(s);
                let pts = coords
                    .iter()
                    .map(|st| g.eval(&side.param_point(dim, &st[..dim - 1])[..dim]))
                    .collect::<Result<Vec<_>>>()?;
                per_side.push(pts);
            }
            points.push(per_side);
        }
        Ok(Self { dim, coords, points })
    }

    fn get(&self, patch: usize, side: Side) -> &[[f64; 3]] {
        &self.points[patch][side.index()]
    }

    fn center(&self, patch: usize, side: Side) -> [f64; 3] {
        let pts = self.get(patch, side);
        if self.dim == 2 {
            pts[SIDE_SAMPLES / 2]
        } else {
            pts[(SIDE_SAMPLES / 2) * SIDE_SAMPLES + SIDE_SAMPLES / 2]
        }
    }

    fn is_interior_sample(&self, i: usize) -> bool {
        self.coords[i][..self.dim - 1]
            .iter()
            .all(|&c| c > 0.0 && c < 1.0)
    }

    fn bbox(&self, patch: usize, side: Side) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in self.get(patch, side) {
            for k in 0..self.dim {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }
}

fn orientation_matches(
    patch_b: &GeometryMap,
    side_b: Side,
    a: &[[f64; 3]],
    _b: &[[f64; 3]],
    o: Orientation,
    tol: f64,
    dim: usize,
) -> Result<bool> {
    let grid: Vec<f64> = (0..SIDE_SAMPLES)
        .map(|i| i as f64 / (SIDE_SAMPLES - 1) as f64)
        .collect();
    let coords: Vec<[f64; 2]> = if dim == 2 {
        grid.iter().map(|&s| [s, 0.0]).collect()
    } else {
        grid.iter()
            .flat_map(|&t| grid.iter().map(move |&s| [s, t]))
            .collect()
    };
    for (st, pa) in coords.iter().zip(a) {
        let uv = o.map_coords(&st[..dim - 1]);
        let pb = patch_b.eval(&side_b.param_point(dim, &uv[..dim - 1])[..dim])?;
        if dist(pa, &pb, dim) > tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Closest side coordinates of `x` on a side, by projected Gauss–Newton.
fn project_onto_side(g: &GeometryMap, side: Side, x: &[f64; 3], dim: usize) -> Result<([f64; 2], f64)> {
    let tangents = side.tangents(dim);
    let mut st = [0.5, 0.5];
    for _ in 0..30 {
        let xh = side.param_point(dim, &st[..dim - 1]);
        let (p, j) = g.eval_with_jacobian(&xh[..dim]).or_else(|_| {
            let p = g.eval(&xh[..dim])?;
            Ok::<_, Error>((p, g.jacobian_raw(&xh[..dim])?))
        })?;
        let r: Vec<f64> = (0..dim).map(|k| p[k] - x[k]).collect();
        // normal equations on the tangential columns
        let cols: Vec<Vec<f64>> = tangents
            .iter()
            .map(|&t| (0..dim).map(|i| j.matrix[i][t]).collect())
            .collect();
        let n = cols.len();
        let mut a = [[0.0; 2]; 2];
        let mut b = [0.0; 2];
        for u in 0..n {
            for v in 0..n {
                a[u][v] = cols[u].iter().zip(&cols[v]).map(|(x, y)| x * y).sum();
            }
            b[u] = cols[u].iter().zip(&r).map(|(x, y)| x * y).sum();
        }
        let step = if n == 1 {
            [b[0] / a[0][0], 0.0]
        } else {
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            [
                (a[1][1] * b[0] - a[0][1] * b[1]) / det,
                (a[0][0] * b[1] - a[1][0] * b[0]) / det,
            ]
        };
        for k in 0..n {
            st[k] = (st[k] - step[k]).clamp(0.0, 1.0);
        }
        if step.iter().all(|s| s.abs() < 1e-14) {
            break;
        }
    }
    let p = g.eval(&side.param_point(dim, &st[..dim - 1])[..dim])?;
    Ok((st, dist(&p, x, dim)))
}

/// Discovers fully matching interfaces by comparing sampled side images.
///
/// Sides whose images coincide under one of the admissible orientations
/// become interfaces; sides without a partner are tagged by `tags`. A side
/// overlapping another without matching it completely is rejected, as is a
/// side matching two partners.
pub fn build_topology(
    patches: Vec<GeometryMap>,
    tags: &BoundaryTags,
    tolerance: f64,
) -> Result<MultiPatchDomain> {
    let dim = check_patches(&patches)?;
    let samples = SideSamples::new(&patches, dim)?;
    let mut all_sides: Vec<(usize, Side, [f64; 3], [f64; 3])> = Vec::new();
    for k in 0..patches.len() {
        for s in 0..2 * dim {
            let side = Side::from_index(s);
            let (lo, hi) = samples.bbox(k, side);
            all_sides.push((k, side, lo, hi));
        }
    }
    all_sides.sort_by(|a, b| a.2[0].total_cmp(&b.2[0]));
    let mut sides: Vec<Vec<Option<SideKind>>> = vec![vec![None; 2 * dim]; patches.len()];
    let mut interfaces = Vec::new();
    for i in 0..all_sides.len() {
        let (ka, sa, lo_a, hi_a) = all_sides[i];
        for &(kb, sb, lo_b, hi_b) in &all_sides[i + 1..] {
            if lo_b[0] > hi_a[0] + tolerance {
                break;
            }
            if ka == kb {
                continue;
            }
            let overlap = (0..dim).all(|k| lo_b[k] <= hi_a[k] + tolerance && lo_a[k] <= hi_b[k] + tolerance);
            // sides touching only along a lower-dimensional set cannot overlap
            let extended = (0..dim)
                .filter(|&k| hi_a[k].min(hi_b[k]) - lo_a[k].max(lo_b[k]) > tolerance)
                .count();
            if !overlap || extended + 1 < dim {
                continue;
            }
            let (first, second) = if (ka, sa) < (kb, sb) { ((ka, sa), (kb, sb)) } else { ((kb, sb), (ka, sa)) };
            let pa = samples.get(first.0, first.1);
            let pb = samples.get(second.0, second.1);
            let mut matched = None;
            for o in Orientation::all(dim) {
                if orientation_matches(&patches[second.0], second.1, pa, pb, o, tolerance, dim)? {
                    matched = Some(o);
                    break;
                }
            }
            match matched {
                Some(o) => {
                    for (p, s) in [first, second] {
                        if let Some(SideKind::Interface(prev)) = sides[p][s.index()] {
                            return Err(Error::NonManifold(format!(
                                "side {} of patch {p} matches interface {prev} and another partner",
                                s.index()
                            )));
                        }
                    }
                    let id = interfaces.len();
                    interfaces.push(Interface {
                        patch_a: first.0,
                        side_a: first.1,
                        patch_b: second.0,
                        side_b: second.1,
                        orientation: o,
                    });
                    sides[first.0][first.1.index()] = Some(SideKind::Interface(id));
                    sides[second.0][second.1.index()] = Some(SideKind::Interface(id));
                }
                None => {
                    // overlap of positive measure without full match
                    for ((p, s), (q, t)) in [(first, second), (second, first)] {
                        let pts = samples.get(p, s);
                        for (idx, x) in pts.iter().enumerate() {
                            if !samples.is_interior_sample(idx) {
                                continue;
                            }
                            let (st, d) = project_onto_side(&patches[q], t, x, dim)?;
                            let inside = st[..dim - 1].iter().all(|&c| c > 1e-9 && c < 1.0 - 1e-9);
                            if d <= tolerance && inside {
                                return Err(Error::NonMatching(format!(
                                    "side {} of patch {p} partially overlaps side {} of patch {q}",
                                    s.index(),
                                    t.index()
                                )));
                            }
                        }
                    }
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..interfaces.len()).collect();
    order.sort_by_key(|&i| (interfaces[i].patch_a, interfaces[i].side_a, interfaces[i].patch_b));
    let mut remap = vec![0; interfaces.len()];
    for (new, &old) in order.iter().enumerate() {
        remap[old] = new;
    }
    let interfaces: Vec<Interface> = order.iter().map(|&i| interfaces[i]).collect();
    for row in sides.iter_mut() {
        for s in row.iter_mut() {
            if let Some(SideKind::Interface(i)) = s {
                *i = remap[*i];
            }
        }
    }
    Ok(MultiPatchDomain::finish(patches, interfaces, sides, tags, tolerance, dim, &samples))
}

/// Default geometric tolerance: `1e-8` times the domain diameter.
pub fn default_tolerance(patches: &[GeometryMap]) -> f64 {
    1e-8 * MultiPatchDomain::diameter(patches).max(1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: f64, y0: f64) -> GeometryMap {
        GeometryMap::axis_box(&[x0, y0], &[x0 + 1.0, y0 + 1.0]).unwrap()
    }

    #[test]
    fn two_squares_share_one_interface() {
        let d = build_topology(
            vec![square(0.0, 0.0), square(1.0, 0.0)],
            &BoundaryTags::Uniform(BoundaryKind::Dirichlet),
            1e-9,
        )
        .unwrap();
        assert_eq!(d.interfaces().len(), 1);
        let itf = d.interfaces()[0];
        assert_eq!(itf.orientation, Orientation::IDENTITY);
        assert_eq!((itf.patch_a, itf.side_a.index(), itf.patch_b, itf.side_b.index()), (0, 1, 1, 0));
        assert_eq!(d.side_kind(0, Side::new(0, false)), SideKind::Boundary(BoundaryKind::Dirichlet));
    }

    #[test]
    fn offset_squares_do_not_match() {
        let r = build_topology(
            vec![square(0.0, 0.0), square(1.0, 0.5)],
            &BoundaryTags::Uniform(BoundaryKind::Dirichlet),
            1e-9,
        );
        assert!(matches!(r, Err(Error::NonMatching(_))));
    }

    #[test]
    fn reversed_interface_has_flip() {
        // second patch parametrized with reversed y direction
        let b = GeometryMap::multilinear(
            &[[1.0, 1.0, 0.0], [2.0, 1.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]],
            2,
        )
        .unwrap();
        let d = build_topology(
            vec![square(0.0, 0.0), b],
            &BoundaryTags::Uniform(BoundaryKind::Dirichlet),
            1e-9,
        )
        .unwrap();
        assert_eq!(d.interfaces().len(), 1);
        assert_eq!(d.interfaces()[0].orientation.code(), 2);
    }

    #[test]
    fn three_sides_on_one_line_is_non_manifold() {
        let dup = square(1.0, 0.0);
        let r = build_topology(
            vec![square(0.0, 0.0), square(1.0, 0.0), dup],
            &BoundaryTags::Uniform(BoundaryKind::Dirichlet),
            1e-9,
        );
        assert!(matches!(r, Err(Error::NonManifold(_))));
    }

    #[test]
    fn orientation_codes_roundtrip() {
        for c in 0..8u8 {
            assert_eq!(Orientation::from_code(c).code(), c);
        }
        let o = Orientation::from_code(2);
        let b = o.map_indices(&[1], &[6]);
        assert_eq!(b[0], 4);
        assert_eq!(o.map_indices(&[b[0]], &[6])[0], 1);
    }

    #[test]
    fn sine_source_values() {
        let f = SourceTerm::SineProduct;
        let v = f.eval(&[0.1, 0.1]);
        let pi = std::f64::consts::PI;
        assert!((v - 50.0 * pi * pi).abs() < 1e-10);
        let v3 = f.eval(&[0.1, 0.1, 0.1]);
        assert!((v3 - 75.0 * pi * pi).abs() < 1e-10);
    }
}
