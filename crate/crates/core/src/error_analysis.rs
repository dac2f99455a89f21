//! Leading-order local truncation error coefficients (units ms⁻²) of the
//! three channel timesteppers along a voltage trajectory.

use crate::linalg::SquareMatrix;
use crate::model::{
    assemble_split, eval_rates_unchecked, generator_derivative, GeneratorDerivative, Mat9,
    SplitGenerators,
};
use crate::scalar::Real;

/// Denominator floor for the reported coefficient ratios, ms⁻².
pub const RATIO_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorCoefficients<T> {
    pub fe: T,
    pub mrl: T,
    pub hos: T,
    /// Splitting part of `hos`.
    pub os: T,
}

pub fn frobenius<T: Real, const N: usize>(m: &SquareMatrix<T, N>) -> T {
    m.frobenius()
}

/// `½‖[A₁,A₀] + [A₂,A₀] + [A₂,A₁]‖`.
pub fn splitting_coefficient<T: Real>(a0: &Mat9<T>, a1: &Mat9<T>, a2: &Mat9<T>) -> T {
    let c = a1.commutator(a0) + a2.commutator(a0) + a2.commutator(a1);
    T::lit(0.5) * c.frobenius()
}

/// Coefficients from explicit split generators and their voltage
/// derivatives.
pub fn error_coeffs_from_parts<T: Real>(
    split: &SplitGenerators<T>,
    deriv: &GeneratorDerivative<T>,
    vdot: T,
) -> ErrorCoefficients<T> {
    let half = T::lit(0.5);
    let vdot = vdot.abs();
    let [a0, a1, a2] = &split.parts;
    let na = split.full.frobenius();
    let mrl = half * deriv.full.frobenius() * vdot;
    let os = splitting_coefficient(a0, a1, a2);
    let dparts = deriv.parts.iter().fold(T::zero(), |s, d| s + d.frobenius());
    let na2 = a2.frobenius();
    ErrorCoefficients {
        fe: half * na * na + mrl,
        mrl,
        hos: half * vdot * dparts + half * na2 * na2 + os,
        os,
    }
}

pub fn error_coeffs<T: Real>(vm: T, vdot: T) -> ErrorCoefficients<T> {
    let split = assemble_split(&eval_rates_unchecked(vm));
    error_coeffs_from_parts(&split, &generator_derivative(vm), vdot)
}

/// Time derivative of a sampled signal. Central differences in smooth
/// regions; where the one-sided slopes differ in sign or by more than a
/// factor of four (a jump) the smaller one-sided slope is used.
pub fn time_derivative(t: &[f64], v: &[f64]) -> Vec<f64> {
    let n = t.len().min(v.len());
    match n {
        0 => return Vec::new(),
        1 => return vec![0.0],
        _ => {}
    }
    let slope = |i: usize| {
        let h = t[i + 1] - t[i];
        if h > 0.0 {
            (v[i + 1] - v[i]) / h
        } else {
            0.0
        }
    };
    let mut out = Vec::with_capacity(n);
    out.push(slope(0));
    for i in 1..n - 1 {
        let (b, f) = (slope(i - 1), slope(i));
        let jump = b * f <= 0.0 || b.abs() > 4.0 * f.abs() || f.abs() > 4.0 * b.abs();
        out.push(if !jump {
            (v[i + 1] - v[i - 1]) / (t[i + 1] - t[i - 1])
        } else if b * f <= 0.0 {
            0.0
        } else if b.abs() < f.abs() {
            b
        } else {
            f
        });
    }
    out.push(slope(n - 2));
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorSample {
    pub t: f64,
    pub vm: f64,
    pub vdot: f64,
    pub coeffs: ErrorCoefficients<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct ErrorTrace {
    pub samples: Vec<ErrorSample>,
    pub max: ErrorCoefficients<f64>,
    /// Times at which each maximum occurs.
    pub argmax: ErrorCoefficients<f64>,
    /// `min errFE/errMRL` over samples with `errMRL > RATIO_FLOOR`.
    pub min_fe_over_mrl: Option<f64>,
    /// `min errFE/errHOS` over samples with `errHOS > RATIO_FLOOR`.
    pub min_fe_over_hos: Option<f64>,
}

pub fn error_trace(t: &[f64], vm: &[f64]) -> ErrorTrace {
    let vdot = time_derivative(t, vm);
    let samples: Vec<ErrorSample> = t
        .iter()
        .zip(vm)
        .zip(&vdot)
        .map(|((&t, &vm), &vdot)| ErrorSample {
            t,
            vm,
            vdot,
            coeffs: error_coeffs(vm, vdot),
        })
        .collect();

    let mut out = ErrorTrace::default();
    let upd = |m: &mut f64, at: &mut f64, x: f64, t: f64| {
        if x > *m {
            *m = x;
            *at = t;
        }
    };
    for s in &samples {
        let c = &s.coeffs;
        upd(&mut out.max.fe, &mut out.argmax.fe, c.fe, s.t);
        upd(&mut out.max.mrl, &mut out.argmax.mrl, c.mrl, s.t);
        upd(&mut out.max.hos, &mut out.argmax.hos, c.hos, s.t);
        upd(&mut out.max.os, &mut out.argmax.os, c.os, s.t);
        let ratio_min = |cur: Option<f64>, num: f64, den: f64| {
            if den > RATIO_FLOOR {
                let r = num / den;
                Some(cur.map_or(r, |m: f64| m.min(r)))
            } else {
                cur
            }
        };
        out.min_fe_over_mrl = ratio_min(out.min_fe_over_mrl, c.fe, c.mrl);
        out.min_fe_over_hos = ratio_min(out.min_fe_over_hos, c.fe, c.hos);
    }
    out.samples = samples;
    out
}
