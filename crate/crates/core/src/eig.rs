//! Eigendecomposition of small dense real matrices and the matrix
//! exponentials built on it.
//!
//! The decomposition reduces to upper Hessenberg form with Householder
//! reflections, then runs single-shift complex QR iterations (Wilkinson
//! shifts, Givens rotations) to a complex Schur form `A = Q T Q*`.
//! Eigenvectors come from back-substitution on `T`. Complex arithmetic is used
//! throughout so conjugate pairs need no special handling.

use std::cmp::Ordering;

use num_complex::Complex;

use crate::linalg::SquareMatrix;
use crate::model::NSTATES;
use crate::scalar::Real;

pub type CMatrix<T, const N: usize> = SquareMatrix<Complex<T>, N>;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum EigError {
    #[error("QR iteration did not converge within {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("matrix is numerically defective (min eigenvalue gap {min_gap:e}, cond(S) {cond:e})")]
    NearDefective { min_gap: f64, cond: f64 },
    #[error("reconstruction residual {residual:e} exceeds tolerance {tolerance:e}")]
    ResidualExceeded { residual: f64, tolerance: f64 },
    #[error("imaginary residue {residue:e} left in a real matrix exponential")]
    ImagResidueExceeded { residue: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Thresholds for [`decompose_with`].
#[derive(Clone, Copy, Debug)]
pub struct DecomposeOptions {
    /// Minimum pairwise eigenvalue distance relative to `‖A‖_F`.
    pub min_gap_rel: f64,
    /// Maximum condition number `‖S‖_F ‖S⁻¹‖_F` of the eigenvector matrix.
    pub max_cond: f64,
    /// QR sweeps allowed per deflated eigenvalue.
    pub max_iter_per_eig: usize,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions {
            min_gap_rel: 1e-8,
            max_cond: 1e12,
            max_iter_per_eig: 100,
        }
    }
}

/// `A = S diag(D) S⁻¹` with columns of `S` of unit 2-norm, each phased so its
/// largest-magnitude component is real and positive. Eigenpairs are ordered by
/// descending real part, then descending imaginary part.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenDecomposition<T, const N: usize = NSTATES> {
    pub values: [Complex<T>; N],
    pub vectors: CMatrix<T, N>,
    pub inverse: CMatrix<T, N>,
}

impl<T: Real, const N: usize> EigenDecomposition<T, N> {
    pub fn reconstruct(&self) -> CMatrix<T, N> {
        let mut sd = self.vectors;
        for i in 0..N {
            for j in 0..N {
                sd[(i, j)] *= self.values[j];
            }
        }
        sd * self.inverse
    }

    /// `‖A − S D S⁻¹‖_F`.
    pub fn residual(&self, a: &SquareMatrix<T, N>) -> T {
        (a.to_complex() - self.reconstruct()).frobenius()
    }

    /// `‖S S⁻¹ − I‖_F`.
    pub fn inverse_residual(&self) -> T {
        (self.vectors * self.inverse - CMatrix::identity()).frobenius()
    }

    pub fn condition(&self) -> T {
        self.vectors.frobenius() * self.inverse.frobenius()
    }
}

pub fn decompose<T: Real, const N: usize>(
    a: &SquareMatrix<T, N>,
) -> Result<EigenDecomposition<T, N>, EigError> {
    decompose_with(a, &DecomposeOptions::default())
}

pub fn decompose_with<T: Real, const N: usize>(
    a: &SquareMatrix<T, N>,
    opts: &DecomposeOptions,
) -> Result<EigenDecomposition<T, N>, EigError> {
    if !a.is_finite() {
        return Err(EigError::InvalidInput("matrix has non-finite entries".into()));
    }
    let anorm = a.frobenius();
    let (t, q) = schur(a.to_complex(), opts.max_iter_per_eig)?;

    let mut values = [Complex::new(T::zero(), T::zero()); N];
    for k in 0..N {
        values[k] = t[(k, k)];
    }

    let tnorm = t.frobenius().max(T::min_positive_value());
    let small = T::epsilon() * tnorm;
    let mut y = CMatrix::<T, N>::zeros();
    for k in 0..N {
        let lambda = values[k];
        y[(k, k)] = Complex::new(T::one(), T::zero());
        for j in (0..k).rev() {
            let mut s = Complex::new(T::zero(), T::zero());
            for l in j + 1..=k {
                s += t[(j, l)] * y[(l, k)];
            }
            let mut denom = t[(j, j)] - lambda;
            if denom.norm() < small {
                denom = Complex::new(small, T::zero());
            }
            y[(j, k)] = -s / denom;
        }
    }
    let mut s = q * y;
    for k in 0..N {
        let col = s.column(k);
        let norm = col.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr()).sqrt();
        let big = col
            .iter()
            .copied()
            .max_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap_or(Ordering::Equal))
            .unwrap_or(Complex::new(T::one(), T::zero()));
        let phase = if big.norm() > T::zero() { big.conj() / big.norm() } else { Complex::new(T::one(), T::zero()) };
        let scale = phase / norm;
        s.set_column(k, &col.map(|z| z * scale));
    }

    let mut order: Vec<usize> = (0..N).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (values[i], values[j]);
        b.re
            .partial_cmp(&a.re)
            .unwrap_or(Ordering::Equal)
            .then(b.im.partial_cmp(&a.im).unwrap_or(Ordering::Equal))
    });
    let mut sorted_values = values;
    let mut sorted_s = s;
    for (dst, &src) in order.iter().enumerate() {
        sorted_values[dst] = values[src];
        sorted_s.set_column(dst, &s.column(src));
    }

    let mut min_gap = T::infinity();
    for i in 0..N {
        for j in i + 1..N {
            min_gap = min_gap.min((sorted_values[i] - sorted_values[j]).norm());
        }
    }
    let inverse = sorted_s.inverse().ok_or(EigError::NearDefective {
        min_gap: min_gap.as_f64(),
        cond: f64::INFINITY,
    })?;
    let cond = sorted_s.frobenius() * inverse.frobenius();
    if N > 1 && (min_gap < T::lit(opts.min_gap_rel) * anorm || !(cond <= T::lit(opts.max_cond))) {
        return Err(EigError::NearDefective {
            min_gap: min_gap.as_f64(),
            cond: cond.as_f64(),
        });
    }

    Ok(EigenDecomposition {
        values: sorted_values,
        vectors: sorted_s,
        inverse,
    })
}

/// Complex Schur form `A = Q T Q*` with `T` upper triangular.
fn schur<T: Real, const N: usize>(
    mut h: CMatrix<T, N>,
    max_iter_per_eig: usize,
) -> Result<(CMatrix<T, N>, CMatrix<T, N>), EigError> {
    let zero = Complex::new(T::zero(), T::zero());
    let mut q = CMatrix::<T, N>::identity();

    // Householder reduction to upper Hessenberg form.
    for k in 0..N.saturating_sub(2) {
        let mut v = [zero; N];
        let mut xnorm = T::zero();
        for i in k + 1..N {
            v[i] = h[(i, k)];
            xnorm += v[i].norm_sqr();
        }
        let xnorm = xnorm.sqrt();
        if xnorm == T::zero() {
            continue;
        }
        let x0 = v[k + 1];
        let phase = if x0.norm() > T::zero() { x0 / x0.norm() } else { Complex::new(T::one(), T::zero()) };
        let alpha = -phase * xnorm;
        v[k + 1] -= alpha;
        let vnorm = v.iter().fold(T::zero(), |a, z| a + z.norm_sqr()).sqrt();
        if vnorm == T::zero() {
            continue;
        }
        for z in v.iter_mut() {
            *z = *z / vnorm;
        }
        let two = T::lit(2.0);
        // H <- (I - 2vv*) H
        for j in 0..N {
            let mut dot = zero;
            for i in k + 1..N {
                dot += v[i].conj() * h[(i, j)];
            }
            for i in k + 1..N {
                h[(i, j)] -= v[i] * dot * two;
            }
        }
        // H <- H (I - 2vv*),  Q <- Q (I - 2vv*)
        for m in [&mut h, &mut q] {
            for i in 0..N {
                let mut dot = zero;
                for j in k + 1..N {
                    dot += m[(i, j)] * v[j];
                }
                for j in k + 1..N {
                    m[(i, j)] -= dot * v[j].conj() * two;
                }
            }
        }
        for i in k + 2..N {
            h[(i, k)] = zero;
        }
    }

    let eps = T::epsilon();
    let mut hi = N.saturating_sub(1);
    let mut iter = 0usize;
    let mut total = 0usize;
    while hi > 0 {
        let mut l = 0;
        for k in (1..=hi).rev() {
            let mut scale = h[(k - 1, k - 1)].norm() + h[(k, k)].norm();
            if scale == T::zero() {
                scale = h.frobenius();
            }
            if h[(k, k - 1)].norm() <= eps * scale {
                h[(k, k - 1)] = zero;
                l = k;
                break;
            }
        }
        if l == hi {
            hi -= 1;
            iter = 0;
            continue;
        }
        iter += 1;
        total += 1;
        if iter > max_iter_per_eig {
            return Err(EigError::NonConvergence { iterations: total });
        }

        let a = h[(hi - 1, hi - 1)];
        let b = h[(hi - 1, hi)];
        let c = h[(hi, hi - 1)];
        let d = h[(hi, hi)];
        let mu = if iter % 11 == 10 {
            // exceptional shift
            d + Complex::new(c.norm() * T::lit(0.75), T::zero())
        } else {
            let half = T::lit(0.5);
            let tr2 = (a + d) * half;
            let disc = ((a - d) * half * ((a - d) * half) + b * c).sqrt();
            let l1 = tr2 + disc;
            let l2 = tr2 - disc;
            if (l1 - d).norm() <= (l2 - d).norm() {
                l1
            } else {
                l2
            }
        };

        for k in l..=hi {
            h[(k, k)] -= mu;
        }
        let mut rots: Vec<(T, Complex<T>)> = Vec::with_capacity(hi - l);
        for k in l..hi {
            let x = h[(k, k)];
            let y = h[(k + 1, k)];
            let (cs, sn) = givens(x, y);
            for j in k..N {
                let hk = h[(k, j)];
                let hk1 = h[(k + 1, j)];
                h[(k, j)] = hk * cs + sn * hk1;
                h[(k + 1, j)] = -sn.conj() * hk + hk1 * cs;
            }
            rots.push((cs, sn));
        }
        for (off, &(cs, sn)) in rots.iter().enumerate() {
            let k = l + off;
            for i in 0..=k + 1 {
                let hk = h[(i, k)];
                let hk1 = h[(i, k + 1)];
                h[(i, k)] = hk * cs + hk1 * sn.conj();
                h[(i, k + 1)] = -hk * sn + hk1 * cs;
            }
            for i in 0..N {
                let qk = q[(i, k)];
                let qk1 = q[(i, k + 1)];
                q[(i, k)] = qk * cs + qk1 * sn.conj();
                q[(i, k + 1)] = -qk * sn + qk1 * cs;
            }
        }
        for k in l..=hi {
            h[(k, k)] += mu;
        }
    }
    // clear round-off below the diagonal
    for i in 1..N {
        for j in 0..i {
            h[(i, j)] = zero;
        }
    }
    Ok((h, q))
}

// Rotation (c, s) with c real such that [c s; -s̄ c] [x; y] = [r; 0].
fn givens<T: Real>(x: Complex<T>, y: Complex<T>) -> (T, Complex<T>) {
    let ax = x.norm();
    let ay = y.norm();
    if ay == T::zero() {
        return (T::one(), Complex::new(T::zero(), T::zero()));
    }
    if ax == T::zero() {
        return (T::zero(), y.conj() / ay);
    }
    let r = ax.hypot(ay);
    let c = ax / r;
    let s = (x / ax) * y.conj() / r;
    (c, s)
}

/// Threshold on the discarded imaginary part in [`exp_via_eig`].
pub const IMAG_RESIDUE_TOL: f64 = 1e-10;

/// `Re(S exp(D dt) S⁻¹)`.
pub fn exp_via_eig<T: Real, const N: usize>(
    e: &EigenDecomposition<T, N>,
    dt: T,
) -> Result<SquareMatrix<T, N>, EigError> {
    if !(dt >= T::zero()) || !dt.is_finite() {
        return Err(EigError::InvalidInput(format!("time step must be finite and >= 0, got {dt}")));
    }
    let dtc = Complex::new(dt, T::zero());
    let ed = e.values.map(|l| (l * dtc).exp());
    let mut prod = CMatrix::<T, N>::zeros();
    for i in 0..N {
        for j in 0..N {
            let mut acc = Complex::new(T::zero(), T::zero());
            for k in 0..N {
                acc += e.vectors[(i, k)] * ed[k] * e.inverse[(k, j)];
            }
            prod[(i, j)] = acc;
        }
    }
    let residue = prod.max_abs_im();
    if residue > T::lit(1e-12) {
        log::debug!("exp_via_eig: imaginary residue {:e}", residue.as_f64());
    }
    if residue > T::lit(IMAG_RESIDUE_TOL) {
        return Err(EigError::ImagResidueExceeded { residue: residue.as_f64() });
    }
    Ok(prod.re())
}

/// Upper bound on `‖A dt‖₁` accepted by [`exp_reference`].
pub const EXP_REFERENCE_MAX_NORM: f64 = 1e6;

/// `exp(A dt)` by scaling and squaring around a truncated Taylor series.
///
/// Independent of the eigendecomposition path; used as the oracle for it and
/// as the fallback where analytic or spectral formulas break down.
pub fn exp_reference<T: Real, const N: usize>(
    a: &SquareMatrix<T, N>,
    dt: T,
) -> Result<SquareMatrix<T, N>, EigError> {
    if !(dt >= T::zero()) || !dt.is_finite() {
        return Err(EigError::InvalidInput(format!("time step must be finite and >= 0, got {dt}")));
    }
    let b = a.scale(dt);
    let norm = b.norm_one();
    if !norm.is_finite() || norm > T::lit(EXP_REFERENCE_MAX_NORM) {
        return Err(EigError::InvalidInput(format!("‖A·dt‖₁ = {norm} too large for exponentiation")));
    }
    let mut squarings = 0u32;
    let mut scaled = norm;
    let target = T::lit(0.25);
    while scaled > target {
        scaled = scaled / T::lit(2.0);
        squarings += 1;
    }
    let b = b.scale(T::lit(0.5).powi(squarings as i32));
    let mut sum = SquareMatrix::<T, N>::identity();
    let mut term = SquareMatrix::<T, N>::identity();
    for k in 1..=40 {
        term = (term * b).scale(T::one() / T::lit(k as f64));
        sum += term;
        if term.norm_one() <= T::epsilon() * T::lit(1e-3) * sum.norm_one() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{assemble_full, eval_rates, Mat9};

    fn generator(v: f64) -> Mat9<f64> {
        assemble_full(&eval_rates(v).unwrap())
    }

    #[test]
    fn diagonal_matrix() {
        let d: [f64; 9] = std::array::from_fn(|i| -(i as f64 + 1.0));
        let a = Mat9::from_diagonal(&d);
        let e = decompose(&a).unwrap();
        for k in 0..9 {
            assert!((e.values[k].re - d[k]).abs() < 1e-14);
            assert_eq!(e.values[k].im, 0.0);
            // S = I after unit-norm phase normalization
            for i in 0..9 {
                let expect = if i == k { 1.0 } else { 0.0 };
                assert!((e.vectors[(i, k)].re - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rotation_block_gives_conjugate_pair() {
        let mut a = SquareMatrix::<f64, 3>::zeros();
        a[(0, 0)] = -1.0;
        a[(0, 1)] = 2.0;
        a[(1, 0)] = -2.0;
        a[(1, 1)] = -1.0;
        a[(2, 2)] = -5.0;
        let e = decompose(&a).unwrap();
        assert!((e.values[0] - Complex::new(-1.0, 2.0)).norm() < 1e-13);
        assert!((e.values[1] - Complex::new(-1.0, -2.0)).norm() < 1e-13);
        assert!(e.residual(&a) < 1e-13);
        let t = exp_via_eig(&e, 0.3).unwrap();
        let r = exp_reference(&a, 0.3).unwrap();
        assert!((t - r).max_abs() < 1e-13);
    }

    #[test]
    fn generator_at_zero_reconstructs() {
        let a = generator(0.0);
        let e = decompose(&a).unwrap();
        let an = a.frobenius();
        assert!(e.residual(&a) <= 1e-10 * an.max(1.0));
        assert!(e.inverse_residual() <= 1e-10);
        assert!(e.values[0].norm() <= 1e-10 * an, "{:?}", e.values[0]);
        for v in &e.values[1..] {
            assert!(v.re <= 0.0);
        }
    }

    #[test]
    fn eigenvalues_sorted_descending() {
        let e = decompose(&generator(-60.0)).unwrap();
        for k in 1..9 {
            assert!(e.values[k - 1].re >= e.values[k].re);
        }
    }

    #[test]
    fn defective_matrix_rejected() {
        // Jordan block
        let mut a = SquareMatrix::<f64, 3>::zeros();
        a[(0, 0)] = -1.0;
        a[(0, 1)] = 1.0;
        a[(1, 1)] = -1.0;
        a[(2, 2)] = -3.0;
        assert!(matches!(decompose(&a), Err(EigError::NearDefective { .. })));
    }

    #[test]
    fn non_finite_rejected() {
        let mut a = Mat9::<f64>::zeros();
        a[(1, 1)] = f64::NAN;
        assert!(matches!(decompose(&a), Err(EigError::InvalidInput(_))));
    }

    #[test]
    fn exp_via_eig_at_zero_step_is_identity() {
        let e = decompose(&generator(-35.0)).unwrap();
        let t = exp_via_eig(&e, 0.0).unwrap();
        assert!((t - Mat9::identity()).max_abs() < 1e-12);
    }

    #[test]
    fn exp_via_eig_columns_stochastic() {
        let e = decompose(&generator(0.0)).unwrap();
        let t = exp_via_eig(&e, 0.1).unwrap();
        for s in t.column_sums() {
            assert!((s - 1.0).abs() < 1e-10, "{s}");
        }
    }

    #[test]
    fn negative_step_rejected() {
        let e = decompose(&generator(0.0)).unwrap();
        assert!(exp_via_eig(&e, -1.0).is_err());
        assert!(exp_reference(&generator(0.0), -1.0).is_err());
    }

    #[test]
    fn reference_of_zero_is_identity() {
        let t = exp_reference(&Mat9::<f64>::zeros(), 0.7).unwrap();
        assert_eq!(t, Mat9::identity());
    }

    #[test]
    fn reference_scalar_decay() {
        let a_rate = 3.7;
        let dt = 0.9;
        let mut a = Mat9::<f64>::zeros();
        a[(0, 0)] = -a_rate;
        a[(1, 0)] = a_rate;
        let t = exp_reference(&a, dt).unwrap();
        assert!((t[(0, 0)] - (-a_rate * dt).exp()).abs() < 1e-15);
        assert!((t[(1, 0)] - (1.0 - (-a_rate * dt).exp())).abs() < 1e-15);
        assert_eq!(t[(1, 1)], 1.0);
    }

    #[test]
    fn reference_semigroup() {
        let a = generator(-20.0);
        let t1 = exp_reference(&a, 0.05).unwrap();
        let t2 = exp_reference(&a, 0.1).unwrap();
        assert!((t1 * t1 - t2).max_abs() < 1e-11);
    }

    #[test]
    fn reference_rejects_overflow() {
        let a = generator(60.0);
        assert!(exp_reference(&a, 1e9).is_err());
    }

    #[test]
    fn f32_decomposition_is_usable() {
        let a = generator(-40.0).map(|x| x as f32);
        let e = decompose_with(&a, &DecomposeOptions { min_gap_rel: 1e-6, max_cond: 1e6, max_iter_per_eig: 100 }).unwrap();
        let an = a.frobenius();
        assert!(e.residual(&a) <= 1e-4 * an);
    }
}
