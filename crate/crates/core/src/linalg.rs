//! Sparse and banded matrix storage plus the direct factorizations used by
//! the smoothers and the coarse-grid solver.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};

/// Compressed sparse row matrix with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_parts(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<u32>,
        values: Vec<f64>,
    ) -> Self {
        assert_eq!(row_ptr.len(), nrows + 1);
        assert_eq!(col_idx.len(), values.len());
        assert_eq!(*row_ptr.last().unwrap(), values.len());
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut cursor = counts.clone();
        let mut cols = vec![0u32; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            let pos = cursor[r];
            cols[pos] = c as u32;
            vals[pos] = v;
            cursor[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut scratch: Vec<(u32, f64)> = Vec::new();
        for i in 0..nrows {
            scratch.clear();
            scratch.extend((counts[i]..counts[i + 1]).map(|k| (cols[k], vals[k])));
            scratch.sort_by_key(|e| e.0);
            for &(c, v) in &scratch {
                if col_idx.len() > row_ptr[i] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self::from_parts(nrows, ncols, row_ptr, col_idx, values)
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut trip = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != 0.0 {
                    trip.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), &trip)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[u32] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Iterates the stored `(col, value)` pairs of one row.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .zip(&self.values[range])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&(j as u32)) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k] as usize];
            }
            *yi = acc;
        }
    }

    /// `y += Aᵀ x`, accumulating row by row in ascending row order.
    pub fn transpose_mul_add(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                y[self.col_idx[k] as usize] += self.values[k] * xi;
            }
        }
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut trip = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                trip.push((j, i, v));
            }
        }
        CsrMatrix::from_triplets(self.ncols, self.nrows, &trip)
    }

    /// `self * other`, both sparse.
    pub fn matmul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, other.nrows);
        let mut trip = Vec::new();
        let mut acc = vec![0.0; other.ncols];
        let mut touched: Vec<usize> = Vec::new();
        let mut mark = vec![false; other.ncols];
        for i in 0..self.nrows {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    if !mark[j] {
                        mark[j] = true;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            for &j in &touched {
                trip.push((i, j, acc[j]));
                acc[j] = 0.0;
                mark[j] = false;
            }
            touched.clear();
        }
        CsrMatrix::from_triplets(self.nrows, other.ncols, &trip)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    /// Writes the matrix in MatrixMarket coordinate format (1-based indices).
    pub fn write_matrix_market<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(out, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                writeln!(out, "{} {} {:.17e}", i + 1, j + 1, v)?;
            }
        }
        Ok(())
    }
}

/// Symmetric banded matrix storing the lower band row by row:
/// `band[i * (bw + 1) + k]` holds entry `(i, i - k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSymMatrix {
    dim: usize,
    bandwidth: usize,
    band: Vec<f64>,
}

impl BandedSymMatrix {
    pub fn zeros(dim: usize, bandwidth: usize) -> Self {
        Self {
            dim,
            bandwidth,
            band: vec![0.0; dim * (bandwidth + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bandwidth {
            0.0
        } else {
            self.band[i * (self.bandwidth + 1) + (i - j)]
        }
    }

    /// Adds `v` to entry `(i, j)` (and implicitly `(j, i)`). Only call with `i >= j`.
    pub fn add_lower(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i >= j && i - j <= self.bandwidth);
        self.band[i * (self.bandwidth + 1) + (i - j)] += v;
    }

    /// Drops `skip_front` leading and `skip_back` trailing rows/columns.
    pub fn trimmed(&self, skip_front: usize, skip_back: usize) -> Self {
        let dim = self.dim.saturating_sub(skip_front + skip_back);
        let mut out = Self::zeros(dim, self.bandwidth);
        for i in 0..dim {
            for j in i.saturating_sub(self.bandwidth)..=i {
                out.add_lower(i, j, self.get(i + skip_front, j + skip_front));
            }
        }
        out
    }

    /// `a * self + b * other`
    pub fn linear_combination(&self, a: f64, other: &Self, b: f64) -> Self {
        assert_eq!(self.dim, other.dim);
        let bw = self.bandwidth.max(other.bandwidth);
        let mut out = Self::zeros(self.dim, bw);
        for i in 0..self.dim {
            for j in i.saturating_sub(bw)..=i {
                out.add_lower(i, j, a * self.get(i, j) + b * other.get(i, j));
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        for i in 0..self.dim {
            for j in i.saturating_sub(self.bandwidth)..=i {
                let v = self.get(i, j);
                y[i] += v * x[j];
                if i != j {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }

    pub fn to_csr(&self) -> CsrMatrix {
        let mut trip = Vec::new();
        for i in 0..self.dim {
            for j in i.saturating_sub(self.bandwidth)..(i + self.bandwidth + 1).min(self.dim) {
                trip.push((i, j, self.get(i, j)));
            }
        }
        CsrMatrix::from_triplets(self.dim, self.dim, &trip)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    /// Banded Cholesky factorization `A = L Lᵀ`.
    pub fn cholesky(&self) -> Result<BandedCholesky> {
        let bw = self.bandwidth;
        let n = self.dim;
        let mut l = BandedSymMatrix::zeros(n, bw);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = self.get(i, j);
                for k in lo.max(j.saturating_sub(bw))..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::Definiteness(format!(
                            "banded Cholesky pivot {i} is {s:e}"
                        )));
                    }
                    l.band[i * (bw + 1)] = s.sqrt();
                } else {
                    l.band[i * (bw + 1) + (i - j)] = s / l.get(j, j);
                }
            }
        }
        Ok(BandedCholesky { factor: l })
    }
}

/// Lower-triangular banded Cholesky factor.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    factor: BandedSymMatrix,
}

impl BandedCholesky {
    pub fn dim(&self) -> usize {
        self.factor.dim
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let l = &self.factor;
        let bw = l.bandwidth;
        let n = l.dim;
        for i in 0..n {
            let mut s = x[i];
            for k in i.saturating_sub(bw)..i {
                s -= l.band[i * (bw + 1) + (i - k)] * x[k];
            }
            x[i] = s / l.band[i * (bw + 1)];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s -= l.band[k * (bw + 1) + (k - i)] * x[k];
            }
            x[i] = s / l.band[i * (bw + 1)];
        }
    }
}

/// Reverse Cuthill–McKee ordering of a structurally symmetric sparse matrix.
/// Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let degree: Vec<usize> = (0..n).map(|i| a.row_ptr[i + 1] - a.row_ptr[i]).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    let mut queue = std::collections::VecDeque::new();
    let mut nbrs = Vec::new();
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(a, seed, &degree);
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            nbrs.clear();
            nbrs.extend(a.row(v).map(|(j, _)| j).filter(|&j| !visited[j]));
            nbrs.sort_by_key(|&j| (degree[j], j));
            for &j in &nbrs {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(a: &CsrMatrix, seed: usize, degree: &[usize]) -> usize {
    let mut current = seed;
    let mut ecc = 0;
    for _ in 0..8 {
        let (levels, far) = bfs_levels(a, current, degree);
        if levels <= ecc {
            break;
        }
        ecc = levels;
        current = far;
    }
    current
}

fn bfs_levels(a: &CsrMatrix, start: usize, degree: &[usize]) -> (usize, usize) {
    let mut dist = std::collections::HashMap::new();
    dist.insert(start, 0usize);
    let mut frontier = vec![start];
    let mut depth = 0;
    let mut last = frontier.clone();
    while !frontier.is_empty() {
        last = frontier.clone();
        let mut next = Vec::new();
        for &v in &frontier {
            for (j, _) in a.row(v) {
                if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(j) {
                    e.insert(depth + 1);
                    next.push(j);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        depth += 1;
        frontier = next;
    }
    let far = *last.iter().min_by_key(|&&v| (degree[v], v)).unwrap();
    (depth, far)
}

/// Envelope (skyline) Cholesky factorization of a symmetric positive
/// definite matrix under a fill-reducing permutation.
#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    offsets: Vec<usize>,
    data: Vec<f64>,
}

impl SkylineCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        check_len(n, a.ncols())?;
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for old in 0..n {
            let i = inv[old];
            for (j_old, _) in a.row(old) {
                let j = inv[j_old];
                if j < i {
                    first[i] = first[i].min(j);
                } else if i < j {
                    first[j] = first[j].min(i);
                }
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for i in 0..n {
            offsets.push(offsets[i] + (i - first[i] + 1));
        }
        let mut data = vec![0.0; offsets[n]];
        for old in 0..n {
            let i = inv[old];
            for (j_old, v) in a.row(old) {
                let j = inv[j_old];
                if j <= i {
                    data[offsets[i] + (j - first[i])] += v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            let row_i = offsets[i];
            for j in fi..i {
                let fj = first[j];
                let start = fi.max(fj);
                let row_j = offsets[j];
                let mut s = data[row_i + (j - fi)];
                let a_slice = &data[row_i + (start - fi)..row_i + (j - fi)];
                let b_slice = &data[row_j + (start - fj)..row_j + (j - fj)];
                s -= a_slice.iter().zip(b_slice).map(|(x, y)| x * y).sum::<f64>();
                let ljj = data[row_j + (j - fj)];
                data[row_i + (j - fi)] = s / ljj;
            }
            let diag = row_i + (i - fi);
            let s = data[diag] - data[row_i..diag].iter().map(|x| x * x).sum::<f64>();
            if s <= 0.0 || !s.is_finite() {
                return Err(Error::Definiteness(format!(
                    "skyline Cholesky pivot {i} is {s:e}"
                )));
            }
            data[diag] = s.sqrt();
        }
        Ok(Self {
            perm,
            first,
            offsets,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.offsets[i]..self.offsets[i + 1]];
            let s: f64 = row[..i - fi].iter().zip(&y[fi..i]).map(|(l, x)| l * x).sum();
            y[i] = (y[i] - s) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.offsets[i]..self.offsets[i + 1]];
            y[i] /= row[i - fi];
            let yi = y[i];
            for (l, x) in row[..i - fi].iter().zip(&mut y[fi..i]) {
                *x -= l * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

/// Direct solver for the summed coarse-grid matrix: dense Cholesky for small
/// systems, envelope Cholesky under reverse Cuthill–McKee otherwise.
#[derive(Debug, Clone)]
pub enum DirectSolver {
    Dense(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Skyline(SkylineCholesky),
}

pub const DENSE_COARSE_LIMIT: usize = 500;

impl DirectSolver {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        check_len(a.nrows(), a.ncols())?;
        if a.nrows() < DENSE_COARSE_LIMIT {
            let dense = a.to_dense();
            nalgebra::Cholesky::new(dense)
                .map(DirectSolver::Dense)
                .ok_or_else(|| Error::Definiteness("dense coarse matrix".into()))
        } else {
            SkylineCholesky::factor(a).map(DirectSolver::Skyline)
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DirectSolver::Dense(c) => c.l_dirty().nrows(),
            DirectSolver::Skyline(s) => s.dim(),
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        match self {
            DirectSolver::Dense(c) => {
                let x = c.solve(&DVector::from_column_slice(b));
                x.as_slice().to_vec()
            }
            DirectSolver::Skyline(s) => s.solve(b),
        }
    }
}

/// Kronecker product of tensor factors listed first direction fastest:
/// `tensor_kron(&[a0, a1])` is `a1 ⊗ a0` in the usual notation.
pub fn tensor_kron(factors: &[&CsrMatrix]) -> CsrMatrix {
    let mut acc = factors[0].clone();
    for f in &factors[1..] {
        let (r0, c0) = (acc.nrows, acc.ncols);
        let mut trip = Vec::with_capacity(acc.nnz() * f.nnz());
        for i1 in 0..f.nrows {
            for (j1, v1) in f.row(i1) {
                for i0 in 0..r0 {
                    for (j0, v0) in acc.row(i0) {
                        trip.push((i0 + r0 * i1, j0 + c0 * j1, v0 * v1));
                    }
                }
            }
        }
        acc = CsrMatrix::from_triplets(r0 * f.nrows, c0 * f.ncols, &trip);
    }
    acc
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
