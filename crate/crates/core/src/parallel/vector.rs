//! Rank-local storage of the two vector forms.
//!
//! An [`AccumulatedVector`] holds the true value of every dof the rank
//! touches, so replicated interface entries agree between ranks. A
//! [`DistributedVector`] holds contributions whose sum over ranks is the
//! global vector. Only same-form vectors can be added:
//!
//! ```compile_fail
//! use patchmg::parallel::{AccumulatedVector, DistributedVector};
//! let a = AccumulatedVector::zeros(3);
//! let d = DistributedVector::zeros(3);
//! let _ = &a + &d;
//! ```
//!
//! ```compile_fail
//! use patchmg::parallel::{AccumulatedVector, DistributedVector};
//! let mut a = AccumulatedVector::zeros(3);
//! let d = DistributedVector::zeros(3);
//! a.axpy(1.0, &d);
//! ```

use std::ops::{Add, Mul, Sub};

use crate::error::{check_len, Result};

macro_rules! rank_vector {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            values: Vec<f64>,
        }

        impl $name {
            pub fn zeros(n: usize) -> Self {
                Self { values: vec![0.0; n] }
            }

            pub fn from_values(values: Vec<f64>) -> Self {
                Self { values }
            }

            pub fn len(&self) -> usize {
                self.values.len()
            }

            pub fn is_empty(&self) -> bool {
                self.values.is_empty()
            }

            pub fn values(&self) -> &[f64] {
                &self.values
            }

            pub fn into_values(self) -> Vec<f64> {
                self.values
            }

            /// `self += alpha x`
            pub fn axpy(&mut self, alpha: f64, x: &Self) {
                for (y, v) in self.values.iter_mut().zip(&x.values) {
                    *y += alpha * v;
                }
            }

            /// `self = x + beta self`
            pub fn xpby(&mut self, x: &Self, beta: f64) {
                for (y, v) in self.values.iter_mut().zip(&x.values) {
                    *y = v + beta * *y;
                }
            }

            pub fn scale(&mut self, s: f64) {
                self.values.iter_mut().for_each(|v| *v *= s);
            }

            pub fn checked_len(&self, n: usize) -> Result<()> {
                check_len(n, self.values.len())
            }
        }

        impl Add for &$name {
            type Output = $name;

            fn add(self, rhs: &$name) -> $name {
                assert_eq!(self.len(), rhs.len(), "vector lengths differ");
                $name {
                    values: self.values.iter().zip(&rhs.values).map(|(a, b)| a + b).collect(),
                }
            }
        }

        impl Sub for &$name {
            type Output = $name;

            fn sub(self, rhs: &$name) -> $name {
                assert_eq!(self.len(), rhs.len(), "vector lengths differ");
                $name {
                    values: self.values.iter().zip(&rhs.values).map(|(a, b)| a - b).collect(),
                }
            }
        }

        impl Mul<f64> for &$name {
            type Output = $name;

            fn mul(self, s: f64) -> $name {
                $name {
                    values: self.values.iter().map(|v| v * s).collect(),
                }
            }
        }
    };
}

rank_vector!(AccumulatedVector);
rank_vector!(DistributedVector);

/// Vectors a type-preserving operator such as the smoother accepts.
pub trait RankVector: Sized {
    fn values(&self) -> &[f64];
    fn from_values(values: Vec<f64>) -> Self;
}

impl RankVector for AccumulatedVector {
    fn values(&self) -> &[f64] {
        &self.values
    }

    fn from_values(values: Vec<f64>) -> Self {
        Self { values }
    }
}

impl RankVector for DistributedVector {
    fn values(&self) -> &[f64] {
        &self.values
    }

    fn from_values(values: Vec<f64>) -> Self {
        Self { values }
    }
}
