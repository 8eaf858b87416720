use crate::error::{Error, Result};
use crate::spline::{basis_and_derivative, UnivariateSpace};

/// Tensor B-spline geometry function `(0,1)^d -> R^d`, optionally restricted
/// to an axis-aligned parameter sub-box of its own spline parametrization
/// (this is how split patches are represented without knot insertion).
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryMap {
    dim: usize,
    spaces: Vec<UnivariateSpace>,
    /// Control points, first parametric direction fastest; `dim` coordinates each.
    control_points: Vec<f64>,
    param_box: Vec<[f64; 2]>,
}

/// Jacobian of a geometry map at one parameter point (row `i`, column `j`
/// holds the derivative of coordinate `i` along parameter direction `j`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jacobian {
    pub dim: usize,
    pub matrix: [[f64; 3]; 3],
    pub det: f64,
}

impl GeometryMap {
    pub fn new(spaces: Vec<UnivariateSpace>, control_points: Vec<f64>) -> Result<Self> {
        let dim = spaces.len();
        if !(2..=3).contains(&dim) {
            return Err(Error::Domain(format!("geometry dimension {dim} not in {{2,3}}")));
        }
        let count: usize = spaces.iter().map(|s| s.full_dim()).product();
        if control_points.len() != count * dim {
            return Err(Error::Domain(format!(
                "expected {} control point coordinates, got {}",
                count * dim,
                control_points.len()
            )));
        }
        Ok(Self {
            dim,
            spaces: spaces
                .into_iter()
                .map(|s| UnivariateSpace::new(s.degree(), s.elements()).unwrap())
                .collect(),
            control_points,
            param_box: vec![[0.0, 1.0]; dim],
        })
    }

    /// Multilinear map through the `2^d` corners, listed with the first
    /// parametric direction fastest.
    pub fn multilinear(corners: &[[f64; 3]], dim: usize) -> Result<Self> {
        if corners.len() != 1 << dim {
            return Err(Error::Domain(format!("need {} corners", 1 << dim)));
        }
        let spaces = vec![UnivariateSpace::new(1, 1)?; dim];
        let cps = corners.iter().flat_map(|c| c[..dim].to_vec()).collect();
        Self::new(spaces, cps)
    }

    /// Axis-aligned box `[lo, hi]`.
    pub fn axis_box(lo: &[f64], hi: &[f64]) -> Result<Self> {
        let dim = lo.len();
        let corners: Vec<[f64; 3]> = (0..1usize << dim)
            .map(|c| {
                let mut p = [0.0; 3];
                for k in 0..dim {
                    p[k] = if c >> k & 1 == 1 { hi[k] } else { lo[k] };
                }
                p
            })
            .collect();
        Self::multilinear(&corners, dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spaces(&self) -> &[UnivariateSpace] {
        &self.spaces
    }

    pub fn control_points(&self) -> &[f64] {
        &self.control_points
    }

    pub fn param_box(&self) -> &[[f64; 2]] {
        &self.param_box
    }

    /// The map restricted to the sub-box `[lo, hi]` of this map's own
    /// parameter domain, reparametrized over `(0,1)^d`.
    pub fn restricted(&self, lo: &[f64], hi: &[f64]) -> Self {
        let param_box = (0..self.dim)
            .map(|k| {
                let [a, b] = self.param_box[k];
                [a + (b - a) * lo[k], a + (b - a) * hi[k]]
            })
            .collect();
        Self {
            param_box,
            ..self.clone()
        }
    }

    fn eval_impl(&self, xhat: &[f64], with_jacobian: bool) -> Result<([f64; 3], [[f64; 3]; 3])> {
        let d = self.dim;
        let mut local = [[0.0; 3]; 2];
        let mut firsts = [0usize; 3];
        let mut vals: [Vec<f64>; 3] = Default::default();
        let mut ders: [Vec<f64>; 3] = Default::default();
        for k in 0..d {
            let x = xhat[k];
            if !(-1e-12..=1.0 + 1e-12).contains(&x) || x.is_nan() {
                return Err(Error::Domain(format!("parameter point {xhat:?} outside (0,1)^d")));
            }
            let [a, b] = self.param_box[k];
            let t = (a + (b - a) * x.clamp(0.0, 1.0)).clamp(0.0, 1.0);
            local[0][k] = t;
            local[1][k] = b - a;
            let s = &self.spaces[k];
            let e = s.element_of(t);
            let (v, dv) = basis_and_derivative(s.degree(), s.elements(), e, t);
            firsts[k] = e;
            vals[k] = v;
            ders[k] = dv;
        }
        let dims: Vec<usize> = self.spaces.iter().map(|s| s.full_dim()).collect();
        let mut point = [0.0; 3];
        let mut jac = [[0.0; 3]; 3];
        let n2 = if d == 3 { vals[2].len() } else { 1 };
        for c in 0..n2 {
            for b in 0..vals[1].len() {
                for a in 0..vals[0].len() {
                    let idx = (firsts[0] + a)
                        + dims[0] * ((firsts[1] + b) + if d == 3 { dims[1] * (firsts[2] + c) } else { 0 });
                    let cp = &self.control_points[idx * d..idx * d + d];
                    let w2 = if d == 3 { vals[2][c] } else { 1.0 };
                    let w = vals[0][a] * vals[1][b] * w2;
                    for i in 0..d {
                        point[i] += w * cp[i];
                    }
                    if with_jacobian {
                        let g = [
                            ders[0][a] * vals[1][b] * w2,
                            vals[0][a] * ders[1][b] * w2,
                            if d == 3 { vals[0][a] * vals[1][b] * ders[2][c] } else { 0.0 },
                        ];
                        for i in 0..d {
                            for j in 0..d {
                                jac[i][j] += cp[i] * g[j] * local[1][j];
                            }
                        }
                    }
                }
            }
        }
        Ok((point, jac))
    }

    pub fn eval(&self, xhat: &[f64]) -> Result<[f64; 3]> {
        Ok(self.eval_impl(xhat, false)?.0)
    }

    /// Jacobian without the singularity check.
    pub fn jacobian_raw(&self, xhat: &[f64]) -> Result<Jacobian> {
        let (_, m) = self.eval_impl(xhat, true)?;
        let det = if self.dim == 2 {
            m[0][0] * m[1][1] - m[0][1] * m[1][0]
        } else {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        Ok(Jacobian {
            dim: self.dim,
            matrix: m,
            det,
        })
    }

    /// Point image and Jacobian in one pass.
    pub fn eval_with_jacobian(&self, xhat: &[f64]) -> Result<([f64; 3], Jacobian)> {
        let (p, _) = self.eval_impl(xhat, false)?;
        Ok((p, self.jacobian(xhat)?))
    }

    pub fn jacobian(&self, xhat: &[f64]) -> Result<Jacobian> {
        let j = self.jacobian_raw(xhat)?;
        if j.det.abs() < 1e-14 || !j.det.is_finite() {
            return Err(Error::SingularGeometry {
                det: j.det,
                point: xhat.to_vec(),
            });
        }
        Ok(j)
    }

    /// Checks that `det J` keeps one sign on a `samples^d` grid of interior
    /// points. Returns the sign (+1 or -1).
    pub fn check_orientation(&self, samples: usize) -> Result<f64> {
        let mut sign = 0.0;
        let grid: Vec<f64> = (0..samples).map(|i| (i as f64 + 0.5) / samples as f64).collect();
        let total = samples.pow(self.dim as u32);
        for flat in 0..total {
            let mut x = [0.0; 3];
            let mut r = flat;
            for k in 0..self.dim {
                x[k] = grid[r % samples];
                r /= samples;
            }
            let j = self.jacobian(&x[..self.dim])?;
            let s = j.det.signum();
            if sign == 0.0 {
                sign = s;
            } else if s != sign {
                return Err(Error::Domain(format!(
                    "geometry map folds: det J changes sign near {:?}",
                    &x[..self.dim]
                )));
            }
        }
        Ok(sign)
    }
}

impl Jacobian {
    /// `|det J| J^{-1} J^{-T}`, the coefficient matrix of the pulled-back
    /// Laplacian acting on parameter-domain gradients.
    pub fn pullback_coefficients(&self) -> [[f64; 3]; 3] {
        let inv = self.inverse();
        let mut c = [[0.0; 3]; 3];
        let d = self.dim;
        let s = self.det.abs();
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += inv[i][k] * inv[j][k];
                }
                c[i][j] = s * acc;
            }
        }
        c
    }

    pub fn inverse(&self) -> [[f64; 3]; 3] {
        let m = &self.matrix;
        let mut inv = [[0.0; 3]; 3];
        if self.dim == 2 {
            inv[0][0] = m[1][1] / self.det;
            inv[0][1] = -m[0][1] / self.det;
            inv[1][0] = -m[1][0] / self.det;
            inv[1][1] = m[0][0] / self.det;
        } else {
            for i in 0..3 {
                for j in 0..3 {
                    let (a, b) = ((j + 1) % 3, (j + 2) % 3);
                    let (c, e) = ((i + 1) % 3, (i + 2) % 3);
                    inv[i][j] = (m[a][c] * m[b][e] - m[a][e] * m[b][c]) / self.det;
                }
            }
        }
        inv
    }
}
