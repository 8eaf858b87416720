//! Univariate B-spline spaces of maximal smoothness on (0,1): basis
//! evaluation, Gram matrices, two-scale refinement and generalized
//! eigendecompositions for tensor fast diagonalization.

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};
use crate::linalg::{BandedSymMatrix, CsrMatrix};

/// Treatment of one end point of the parameter interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EndCondition {
    Free,
    /// The single basis function not vanishing at the end point is dropped.
    Dirichlet,
}

/// Degree-`p` splines with `C^{p-1}` continuity on a uniform grid of `n`
/// elements over (0,1), with an open knot vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct UnivariateSpace {
    degree: usize,
    elements: usize,
    left: EndCondition,
    right: EndCondition,
}

/// Nonzero basis values at a point: entry `k` belongs to basis function
/// `first + k` in the (possibly reduced) numbering of the space.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisValues {
    pub first: usize,
    pub values: Vec<f64>,
}

impl UnivariateSpace {
    pub fn new(degree: usize, elements: usize) -> Result<Self> {
        if degree == 0 || elements == 0 {
            return Err(Error::Domain(format!(
                "spline space needs p >= 1 and n >= 1 (got p={degree}, n={elements})"
            )));
        }
        Ok(Self {
            degree,
            elements,
            left: EndCondition::Free,
            right: EndCondition::Free,
        })
    }

    pub fn with_ends(mut self, left: EndCondition, right: EndCondition) -> Self {
        self.left = left;
        self.right = right;
        self
    }

    /// Same space with both end functions eliminated.
    pub fn interior(self) -> Self {
        self.with_ends(EndCondition::Dirichlet, EndCondition::Dirichlet)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn elements(&self) -> usize {
        self.elements
    }

    pub fn ends(&self) -> (EndCondition, EndCondition) {
        (self.left, self.right)
    }

    pub fn h(&self) -> f64 {
        1.0 / self.elements as f64
    }

    /// Number of basis functions before Dirichlet elimination.
    pub fn full_dim(&self) -> usize {
        self.elements + self.degree
    }

    fn skip_front(&self) -> usize {
        (self.left == EndCondition::Dirichlet) as usize
    }

    fn skip_back(&self) -> usize {
        (self.right == EndCondition::Dirichlet) as usize
    }

    pub fn dim(&self) -> usize {
        self.full_dim() - self.skip_front() - self.skip_back()
    }

    pub fn knots(&self) -> Vec<f64> {
        let p = self.degree;
        let n = self.elements;
        let mut t = vec![0.0; p + 1];
        t.extend((1..n).map(|i| i as f64 / n as f64));
        t.extend(std::iter::repeat(1.0).take(p + 1));
        t
    }

    /// The dyadically refined space (`n` doubled, same degree and ends).
    pub fn refined(&self) -> Self {
        Self {
            elements: 2 * self.elements,
            ..*self
        }
    }

    /// Index of the element containing `x`; `x = 1` belongs to the last element.
    pub fn element_of(&self, x: f64) -> usize {
        ((x * self.elements as f64).floor() as usize).min(self.elements - 1)
    }

    pub fn eval_basis(&self, x: f64, deriv: usize) -> Result<BasisValues> {
        if !(0.0..=1.0).contains(&x) || x.is_nan() {
            return Err(Error::Domain(format!("evaluation point {x} outside [0,1]")));
        }
        if deriv > 1 {
            return Err(Error::Domain(format!("derivative order {deriv} unsupported")));
        }
        let e = self.element_of(x);
        let (vals, ders) = basis_and_derivative(self.degree, self.elements, e, x);
        let mut values = if deriv == 0 { vals } else { ders };
        let mut first = e;
        let last_full = self.full_dim() - 1;
        if self.skip_back() == 1 && first + self.degree == last_full {
            values.pop();
        }
        if self.skip_front() == 1 {
            if first == 0 {
                values.remove(0);
            } else {
                first -= 1;
            }
        }
        Ok(BasisValues { first, values })
    }

    /// Evaluates the spline with (reduced-numbering) coefficients `coeffs` at `x`.
    pub fn eval_spline(&self, coeffs: &[f64], x: f64) -> Result<f64> {
        check_len(self.dim(), coeffs.len())?;
        let b = self.eval_basis(x, 0)?;
        Ok(b
            .values
            .iter()
            .enumerate()
            .map(|(k, v)| v * coeffs[b.first + k])
            .sum())
    }

    /// Gram matrix of the basis functions (`deriv = 0`) or of their first
    /// derivatives (`deriv = 1`), before Dirichlet elimination.
    fn full_gram(&self, deriv: usize) -> BandedSymMatrix {
        let p = self.degree;
        let table = ElementTable::new(self.degree, self.elements, p + 1);
        let mut m = BandedSymMatrix::zeros(self.full_dim(), p);
        for e in 0..self.elements {
            for q in 0..table.points_per_element {
                let w = table.weight(e, q);
                let f = if deriv == 0 {
                    table.values(e, q)
                } else {
                    table.derivs(e, q)
                };
                for a in 0..=p {
                    for b in 0..=a {
                        m.add_lower(e + a, e + b, w * f[a] * f[b]);
                    }
                }
            }
        }
        m
    }

    pub fn mass(&self) -> BandedSymMatrix {
        self.full_gram(0).trimmed(self.skip_front(), self.skip_back())
    }

    pub fn stiffness(&self) -> BandedSymMatrix {
        self.full_gram(1).trimmed(self.skip_front(), self.skip_back())
    }

    /// Prolongation from this space into its refinement, realized by one
    /// Boehm midpoint knot insertion per element.
    pub fn two_scale(&self) -> CsrMatrix {
        let p = self.degree;
        let coarse_dim = self.full_dim();
        let mut knots = self.knots();
        // rows: current control points, each a combination of coarse ones
        let mut rows: Vec<Vec<f64>> = (0..coarse_dim)
            .map(|i| {
                let mut r = vec![0.0; coarse_dim];
                r[i] = 1.0;
                r
            })
            .collect();
        for e in 0..self.elements {
            let mid = (e as f64 + 0.5) / self.elements as f64;
            // span index k with t_k <= mid < t_{k+1}
            let k = knots.iter().rposition(|&t| t <= mid).unwrap();
            let mut next = Vec::with_capacity(rows.len() + 1);
            for i in 0..=rows.len() {
                if i + p <= k {
                    next.push(rows[i].clone());
                } else if i > k {
                    next.push(rows[i - 1].clone());
                } else {
                    let alpha = (mid - knots[i]) / (knots[i + p] - knots[i]);
                    let row: Vec<f64> = rows[i]
                        .iter()
                        .zip(&rows[i - 1])
                        .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
                        .collect();
                    next.push(row);
                }
            }
            knots.insert(k + 1, mid);
            rows = next;
        }
        let (f0, f1) = (self.skip_front(), self.skip_back());
        let fine_dim = rows.len();
        let mut trip = Vec::new();
        for (i, row) in rows.iter().enumerate().take(fine_dim - f1).skip(f0) {
            for (j, &v) in row.iter().enumerate().take(coarse_dim - f1).skip(f0) {
                if v != 0.0 {
                    trip.push((i - f0, j - f0, v));
                }
            }
        }
        CsrMatrix::from_triplets(fine_dim - f0 - f1, coarse_dim - f0 - f1, &trip)
    }
}

/// Cox–de Boor values and first derivatives of the `p + 1` basis functions
/// supported on element `e` (full numbering `e..=e + p`).
pub(crate) fn basis_and_derivative(
    p: usize,
    n: usize,
    e: usize,
    x: f64,
) -> (Vec<f64>, Vec<f64>) {
    let knot = |i: isize| -> f64 {
        let j = i - p as isize;
        if j <= 0 {
            0.0
        } else if j >= n as isize {
            1.0
        } else {
            j as f64 / n as f64
        }
    };
    let span = (e + p) as isize;
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    // ndu[j][r]: upper triangle holds basis values, lower holds knot differences
    let mut ndu = vec![vec![0.0; p + 1]; p + 1];
    ndu[0][0] = 1.0;
    for j in 1..=p {
        left[j] = x - knot(span + 1 - j as isize);
        right[j] = knot(span + j as isize) - x;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }
    let vals: Vec<f64> = (0..=p).map(|j| ndu[j][p]).collect();
    // first derivative: p * (N_{r,p-1}/(t_{i+p}-t_i) - N_{r+1,p-1}/(t_{i+p+1}-t_{i+1}))
    let mut ders = vec![0.0; p + 1];
    for r in 0..=p {
        let mut d = 0.0;
        if r >= 1 {
            d += ndu[r - 1][p - 1] / ndu[p][r - 1];
        }
        if r < p {
            d -= ndu[r][p - 1] / ndu[p][r];
        }
        ders[r] = p as f64 * d;
    }
    (vals, ders)
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(count: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; count];
    let mut weights = vec![0.0; count];
    let m = count.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (count as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..count {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = count as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[count - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[count - 1 - i] = w;
    }
    (nodes, weights)
}

/// Per-element quadrature points with the values and derivatives of the
/// `p + 1` supported basis functions (full numbering, element `e` starts at
/// basis function `e`).
#[derive(Debug, Clone)]
pub struct ElementTable {
    pub degree: usize,
    pub elements: usize,
    pub points_per_element: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    values: Vec<f64>,
    derivs: Vec<f64>,
}

impl ElementTable {
    pub fn new(degree: usize, elements: usize, points_per_element: usize) -> Self {
        let (xs, ws) = gauss_legendre(points_per_element);
        let h = 1.0 / elements as f64;
        let np = points_per_element;
        let mut points = Vec::with_capacity(elements * np);
        let mut weights = Vec::with_capacity(elements * np);
        let mut values = Vec::with_capacity(elements * np * (degree + 1));
        let mut derivs = Vec::with_capacity(elements * np * (degree + 1));
        for e in 0..elements {
            for q in 0..np {
                let x = h * (e as f64 + 0.5 * (xs[q] + 1.0));
                points.push(x);
                weights.push(0.5 * h * ws[q]);
                let (v, d) = basis_and_derivative(degree, elements, e, x);
                values.extend(v);
                derivs.extend(d);
            }
        }
        Self {
            degree,
            elements,
            points_per_element,
            points,
            weights,
            values,
            derivs,
        }
    }

    pub fn point(&self, e: usize, q: usize) -> f64 {
        self.points[e * self.points_per_element + q]
    }

    pub fn weight(&self, e: usize, q: usize) -> f64 {
        self.weights[e * self.points_per_element + q]
    }

    pub fn values(&self, e: usize, q: usize) -> &[f64] {
        let k = (e * self.points_per_element + q) * (self.degree + 1);
        &self.values[k..k + self.degree + 1]
    }

    pub fn derivs(&self, e: usize, q: usize) -> &[f64] {
        let k = (e * self.points_per_element + q) * (self.degree + 1);
        &self.derivs[k..k + self.degree + 1]
    }
}

/// Solution of `K v = λ M v` with `Vᵀ M V = I` and `Vᵀ K V = diag(λ)`,
/// eigenvalues ascending. `vectors` is column-major: column `k` is the
/// eigenvector of `values[k]`.
#[derive(Debug, Clone)]
pub struct GenEigDecomposition {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl GenEigDecomposition {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

pub fn gen_eig(k: &BandedSymMatrix, m: &BandedSymMatrix) -> Result<GenEigDecomposition> {
    check_len(k.dim(), m.dim())?;
    gen_eig_dense(&k.to_dense(), &m.to_dense())
}

pub fn gen_eig_dense(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<GenEigDecomposition> {
    let n = m.nrows();
    check_len(n, k.nrows())?;
    if n == 0 {
        return Ok(GenEigDecomposition {
            values: Vec::new(),
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let chol = nalgebra::Cholesky::new(m.clone())
        .ok_or_else(|| Error::Definiteness("mass matrix of generalized eigenproblem".into()))?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Definiteness("singular Cholesky factor".into()))?;
    let mut c = &l_inv * k * l_inv.transpose();
    c = 0.5 * (&c + c.transpose());
    let eig = nalgebra::SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let q = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    let vectors = l_inv.transpose() * q;
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    Ok(GenEigDecomposition { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn linear_hats_at_quarter_point() {
        let s = UnivariateSpace::new(1, 2).unwrap();
        let b = s.eval_basis(0.25, 0).unwrap();
        assert_eq!(b.first, 0);
        assert!(close(b.values[0], 0.5, 1e-15) && close(b.values[1], 0.5, 1e-15));
    }

    #[test]
    fn quadratic_bernstein_at_midpoint() {
        // Bernstein oracle: (1-x)^2, 2x(1-x), x^2 at x = 1/2
        let s = UnivariateSpace::new(2, 1).unwrap();
        let b = s.eval_basis(0.5, 0).unwrap();
        let expected = [0.25, 0.5, 0.25];
        for (v, e) in b.values.iter().zip(expected) {
            assert!(close(*v, e, 1e-15));
        }
    }

    #[test]
    fn evaluation_outside_interval_fails() {
        let s = UnivariateSpace::new(2, 3).unwrap();
        assert!(matches!(s.eval_basis(1.5, 0), Err(Error::Domain(_))));
        assert!(matches!(s.eval_basis(-0.1, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn dirichlet_elimination_reduces_dimension() {
        let s = UnivariateSpace::new(3, 4).unwrap();
        assert_eq!(s.dim(), 7);
        let s = s.with_ends(EndCondition::Dirichlet, EndCondition::Free);
        assert_eq!(s.dim(), 6);
        assert_eq!(s.interior().dim(), 5);
        let b = s.interior().eval_basis(0.0, 0).unwrap();
        assert_eq!(b.first, 0);
        assert_eq!(b.values.len(), 3);
        assert!(b.values.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn linear_gram_matrices_single_element() {
        let s = UnivariateSpace::new(1, 1).unwrap();
        let m = s.mass();
        let k = s.stiffness();
        assert!(close(m.get(0, 0), 1.0 / 3.0, 1e-15));
        assert!(close(m.get(0, 1), 1.0 / 6.0, 1e-15));
        assert!(close(k.get(0, 0), 1.0, 1e-15));
        assert!(close(k.get(1, 0), -1.0, 1e-15));
    }

    #[test]
    fn linear_two_scale_is_midpoint_interpolation() {
        let p = UnivariateSpace::new(1, 1).unwrap().two_scale().to_dense();
        let expected = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.5, 0.5, 0.0, 1.0]);
        assert!((p - expected).abs().max() < 1e-15);
    }

    #[test]
    fn quadrature_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        // exact up to degree 9
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!(close(integral, 2.0 / 9.0, 1e-14));
    }

    #[test]
    fn gen_eig_identity() {
        let mut id = BandedSymMatrix::zeros(3, 0);
        for i in 0..3 {
            id.add_lower(i, i, 1.0);
        }
        let d = gen_eig(&id, &id).unwrap();
        for v in &d.values {
            assert!(close(*v, 1.0, 1e-14));
        }
        let vtv = d.vectors.transpose() * &d.vectors;
        assert!((vtv - DMatrix::identity(3, 3)).abs().max() < 1e-14);
    }

    #[test]
    fn gen_eig_rejects_indefinite_mass() {
        let mut m = BandedSymMatrix::zeros(2, 0);
        m.add_lower(0, 0, 1.0);
        m.add_lower(1, 1, -1.0);
        assert!(matches!(gen_eig(&m, &m), Err(Error::Definiteness(_))));
    }
}
