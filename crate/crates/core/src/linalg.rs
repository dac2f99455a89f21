//! Small dense square matrices with compile-time dimension.
//!
//! Storage is row-major: `m[(i, j)]` is row `i`, column `j`. Elements may be
//! real scalars or `Complex<T>`; both satisfy [`Element`].

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex;
use num_traits::{Num, NumAssign};

use crate::scalar::Real;

/// Anything that can live in a [`SquareMatrix`].
pub trait Element: Copy + Num + NumAssign + Neg<Output = Self> + Send + Sync + std::fmt::Debug {}

impl<E> Element for E where E: Copy + Num + NumAssign + Neg<Output = E> + Send + Sync + std::fmt::Debug {}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SquareMatrix<E, const N: usize>(pub [[E; N]; N]);

impl<E: Element, const N: usize> Default for SquareMatrix<E, N> {
    fn default() -> Self {
        Self::zeros()
    }
}

impl<E: Element, const N: usize> SquareMatrix<E, N> {
    pub fn zeros() -> Self {
        SquareMatrix([[E::zero(); N]; N])
    }

    pub fn identity() -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            m.0[i][i] = E::one();
        }
        m
    }

    pub fn from_diagonal(d: &[E; N]) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            m.0[i][i] = d[i];
        }
        m
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize) -> E) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            for j in 0..N {
                m.0[i][j] = f(i, j);
            }
        }
        m
    }

    pub fn map<F: Element>(&self, mut f: impl FnMut(E) -> F) -> SquareMatrix<F, N> {
        SquareMatrix::from_fn(|i, j| f(self.0[i][j]))
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(|i, j| self.0[j][i])
    }

    pub fn scale(&self, s: E) -> Self {
        self.map(|x| x * s)
    }

    pub fn mul_vec(&self, v: &[E; N]) -> [E; N] {
        let mut out = [E::zero(); N];
        for (i, row) in self.0.iter().enumerate() {
            let mut acc = E::zero();
            for j in 0..N {
                acc += row[j] * v[j];
            }
            out[i] = acc;
        }
        out
    }

    pub fn column_sums(&self) -> [E; N] {
        let mut out = [E::zero(); N];
        for row in &self.0 {
            for j in 0..N {
                out[j] += row[j];
            }
        }
        out
    }

    pub fn column(&self, j: usize) -> [E; N] {
        let mut out = [E::zero(); N];
        for i in 0..N {
            out[i] = self.0[i][j];
        }
        out
    }

    pub fn set_column(&mut self, j: usize, col: &[E; N]) {
        for i in 0..N {
            self.0[i][j] = col[i];
        }
    }

    /// `self * other - other * self`.
    pub fn commutator(&self, other: &Self) -> Self {
        *self * *other - *other * *self
    }
}

impl<T: Real, const N: usize> SquareMatrix<T, N> {
    pub fn frobenius(&self) -> T {
        let mut acc = T::zero();
        for row in &self.0 {
            for &x in row {
                acc += x * x;
            }
        }
        acc.sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.0
            .iter()
            .flat_map(|r| r.iter())
            .fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> T {
        let mut best = T::zero();
        for j in 0..N {
            let mut s = T::zero();
            for i in 0..N {
                s += self.0[i][j].abs();
            }
            best = best.max(s);
        }
        best
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flat_map(|r| r.iter()).all(|x| x.is_finite())
    }

    pub fn to_complex(&self) -> SquareMatrix<Complex<T>, N> {
        self.map(|x| Complex::new(x, T::zero()))
    }
}

impl<T: Real, const N: usize> SquareMatrix<Complex<T>, N> {
    pub fn frobenius(&self) -> T {
        let mut acc = T::zero();
        for row in &self.0 {
            for x in row {
                acc += x.norm_sqr();
            }
        }
        acc.sqrt()
    }

    pub fn re(&self) -> SquareMatrix<T, N> {
        SquareMatrix::from_fn(|i, j| self.0[i][j].re)
    }

    pub fn max_abs_im(&self) -> T {
        self.0
            .iter()
            .flat_map(|r| r.iter())
            .fold(T::zero(), |m, x| m.max(x.im.abs()))
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    /// Returns `None` when a pivot vanishes exactly.
    pub fn inverse(&self) -> Option<Self> {
        let mut a = self.0;
        let mut inv = Self::identity().0;
        for col in 0..N {
            let mut piv = col;
            let mut best = a[col][col].norm();
            for r in col + 1..N {
                let v = a[r][col].norm();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best == T::zero() || !best.is_finite() {
                return None;
            }
            a.swap(col, piv);
            inv.swap(col, piv);
            let p = a[col][col];
            let pinv = Complex::new(T::one(), T::zero()) / p;
            for j in 0..N {
                a[col][j] *= pinv;
                inv[col][j] *= pinv;
            }
            for r in 0..N {
                if r == col {
                    continue;
                }
                let f = a[r][col];
                if f == Complex::new(T::zero(), T::zero()) {
                    continue;
                }
                for j in 0..N {
                    let ac = a[col][j];
                    let ic = inv[col][j];
                    a[r][j] -= f * ac;
                    inv[r][j] -= f * ic;
                }
            }
        }
        Some(SquareMatrix(inv))
    }
}

impl<E, const N: usize> Index<(usize, usize)> for SquareMatrix<E, N> {
    type Output = E;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &E {
        &self.0[i][j]
    }
}

impl<E, const N: usize> IndexMut<(usize, usize)> for SquareMatrix<E, N> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut E {
        &mut self.0[i][j]
    }
}

impl<E: Element, const N: usize> Add for SquareMatrix<E, N> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::from_fn(|i, j| self.0[i][j] + rhs.0[i][j])
    }
}

impl<E: Element, const N: usize> AddAssign for SquareMatrix<E, N> {
    fn add_assign(&mut self, rhs: Self) {
        for i in 0..N {
            for j in 0..N {
                self.0[i][j] += rhs.0[i][j];
            }
        }
    }
}

impl<E: Element, const N: usize> Sub for SquareMatrix<E, N> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::from_fn(|i, j| self.0[i][j] - rhs.0[i][j])
    }
}

impl<E: Element, const N: usize> Neg for SquareMatrix<E, N> {
    type Output = Self;
    fn neg(self) -> Self {
        self.map(|x| -x)
    }
}

impl<E: Element, const N: usize> Mul for SquareMatrix<E, N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut out = Self::zeros();
        for i in 0..N {
            for k in 0..N {
                let a = self.0[i][k];
                if a == E::zero() {
                    continue;
                }
                for j in 0..N {
                    out.0[i][j] += a * rhs.0[k][j];
                }
            }
        }
        out
    }
}
