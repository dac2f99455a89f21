//! Nine-state Markov chain of the fast sodium channel.
//!
//! States are stored in the fixed order `O, P, Q, R, S, T, U, V, W`; every
//! matrix and file in this crate uses that layout. `O` is the only conducting
//! state.
//!
//! ```text
//!        W
//!        |
//!        V
//!        |
//!   O ---U
//!   |    |
//!   P ---+   (P-U)
//!   |    |
//!   Q ---T
//!   |    |
//!   R ---S
//! ```
//!
//! Transition rates are voltage-dependent (ms⁻¹, voltage in mV). The generator
//! splits into three parts by time scale: rates fast at depolarized potentials,
//! rates fast at hyperpolarized potentials, and uniformly slow rates.

use std::ops::{Index, IndexMut};

use crate::linalg::SquareMatrix;
use crate::scalar::Real;

pub const NSTATES: usize = 9;

pub type Mat9<T> = SquareMatrix<T, NSTATES>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum State {
    O = 0,
    P,
    Q,
    R,
    S,
    T,
    U,
    V,
    W,
}

impl State {
    pub const ALL: [State; NSTATES] = [
        State::O,
        State::P,
        State::Q,
        State::R,
        State::S,
        State::T,
        State::U,
        State::V,
        State::W,
    ];

    pub fn name(self) -> &'static str {
        ["O", "P", "Q", "R", "S", "T", "U", "V", "W"][self as usize]
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("membrane potential is not finite: {0}")]
    NonFiniteVoltage(f64),
}

/// Occupancy probabilities of the nine channel states.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct StateOccupancy<T>(pub [T; NSTATES]);

/// Initial occupancies as tabulated for the resting cell (sum ≈ 1.0000331).
pub const RESTING_OCCUPANCY_RAW: [f64; NSTATES] = [
    4.386e-8, 5.329e-5, 1.064e-2, 8.018e-1, 1.436e-1, 1.907e-3, 1.111e-5, 8.417e-4, 4.118e-2,
];

impl<T: Real> StateOccupancy<T> {
    pub fn new(u: [T; NSTATES]) -> Self {
        StateOccupancy(u)
    }

    /// Resting occupancies without normalization.
    pub fn resting_raw() -> Self {
        StateOccupancy(RESTING_OCCUPANCY_RAW.map(T::lit))
    }

    /// Resting occupancies rescaled so the components sum to one.
    pub fn resting() -> Self {
        Self::resting_raw().normalized()
    }

    /// Unit mass in a single state.
    pub fn pure(s: State) -> Self {
        let mut u = [T::zero(); NSTATES];
        u[s as usize] = T::one();
        StateOccupancy(u)
    }

    pub fn sum(&self) -> T {
        self.0.iter().fold(T::zero(), |a, &x| a + x)
    }

    /// Deviation from the conservation law, `Σu − 1`.
    pub fn conservation_error(&self) -> T {
        self.sum() - T::one()
    }

    pub fn normalized(&self) -> Self {
        let s = self.sum();
        StateOccupancy(self.0.map(|x| x / s))
    }

    pub fn max_abs(&self) -> T {
        self.0.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn min(&self) -> T {
        self.0.iter().fold(T::infinity(), |m, &x| m.min(x))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn as_array(&self) -> &[T; NSTATES] {
        &self.0
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.0
            .iter()
            .zip(other.0.iter())
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }
}

impl<T> Index<State> for StateOccupancy<T> {
    type Output = T;
    fn index(&self, s: State) -> &T {
        &self.0[s as usize]
    }
}

impl<T> IndexMut<State> for StateOccupancy<T> {
    fn index_mut(&mut self, s: State) -> &mut T {
        &mut self.0[s as usize]
    }
}

/// The fourteen distinct transition-rate functions, in ms⁻¹.
///
/// Directional aliases: `a11` is R→Q and S→T, `a12` is Q→P and T→U, `a13` is
/// P→O, `b11` is Q→R and T→S, `b12` is P→Q and U→T, `b13` is O→P, `a2` is O→U,
/// `b2` is U→O, `a3` is U→P, T→Q and S→R, `b3` is P→U, Q→T and R→S, `a4` is
/// U→V, `b4` is V→U, `a5` is V→W and `b5` is W→V.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct RateSet<T> {
    pub a11: T,
    pub a12: T,
    pub a13: T,
    pub b11: T,
    pub b12: T,
    pub b13: T,
    pub a2: T,
    pub b2: T,
    pub a3: T,
    pub b3: T,
    pub a4: T,
    pub b4: T,
    pub a5: T,
    pub b5: T,
}

impl<T: Real> RateSet<T> {
    pub fn as_array(&self) -> [T; 14] {
        [
            self.a11, self.a12, self.a13, self.b11, self.b12, self.b13, self.a2, self.b2, self.a3,
            self.b3, self.a4, self.b4, self.a5, self.b5,
        ]
    }

    pub fn all_positive(&self) -> bool {
        self.as_array().iter().all(|&r| r > T::zero() && r.is_finite())
    }
}

/// Evaluates all transition rates at membrane potential `vm` (mV).
pub fn eval_rates<T: Real>(vm: T) -> Result<RateSet<T>, ModelError> {
    if !vm.is_finite() {
        return Err(ModelError::NonFiniteVoltage(vm.as_f64()));
    }
    Ok(eval_rates_unchecked(vm))
}

/// [`eval_rates`] without the finiteness check, for hot loops that validate
/// the voltage elsewhere.
#[inline]
pub fn eval_rates_unchecked<T: Real>(vm: T) -> RateSet<T> {
    let c = T::lit;
    let e = |x: T| x.exp();
    let a11 = c(3.802) / (c(0.1027) * e(-vm / c(17.0)) + c(0.20) * e(-vm / c(150.0)));
    let a12 = c(3.802) / (c(0.1027) * e(-vm / c(15.0)) + c(0.23) * e(-vm / c(150.0)));
    let a13 = c(3.802) / (c(0.1027) * e(-vm / c(12.0)) + c(0.25) * e(-vm / c(150.0)));
    let b11 = c(0.1917) * e(-vm / c(20.3));
    let b12 = c(0.20) * e(-(vm - c(5.0)) / c(20.3));
    let b13 = c(0.22) * e(-(vm - c(10.0)) / c(20.3));
    let a3 = c(3.7933e-7) * e(-vm / c(7.7));
    let b3 = c(8.4e-3) + c(2e-5) * vm;
    let a2 = c(9.178) * e(vm / c(29.68));
    let b2 = a13 * a2 * a3 / (b13 * b3);
    RateSet {
        a11,
        a12,
        a13,
        b11,
        b12,
        b13,
        a2,
        b2,
        a3,
        b3,
        a4: a2 / c(100.0),
        b4: a3,
        a5: a2 / c(9.5e4),
        b5: a3 / c(50.0),
    }
}

/// Which part of the split generator a transition belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    /// Fast at high (depolarized) potentials.
    FastHigh = 0,
    /// Fast at low (hyperpolarized) potentials.
    FastLow = 1,
    /// Uniformly slow.
    Slow = 2,
}

#[derive(Clone, Copy, Debug)]
pub struct Transition<T> {
    pub from: State,
    pub to: State,
    pub rate: T,
    pub part: Part,
}

/// The 22 directed edges of the chain with their current rates.
pub fn transitions<T: Real>(r: &RateSet<T>) -> [Transition<T>; 22] {
    use Part::*;
    use State::*;
    let t = |from, to, rate, part| Transition { from, to, rate, part };
    [
        t(R, Q, r.a11, FastHigh),
        t(S, T, r.a11, FastHigh),
        t(Q, P, r.a12, FastHigh),
        t(T, U, r.a12, FastHigh),
        t(P, O, r.a13, FastHigh),
        t(O, U, r.a2, FastHigh),
        t(P, Q, r.b12, FastLow),
        t(U, T, r.b12, FastLow),
        t(Q, R, r.b11, FastLow),
        t(T, S, r.b11, FastLow),
        t(O, P, r.b13, FastLow),
        t(R, S, r.b3, Slow),
        t(Q, T, r.b3, Slow),
        t(P, U, r.b3, Slow),
        t(S, R, r.a3, Slow),
        t(T, Q, r.a3, Slow),
        t(U, P, r.a3, Slow),
        t(V, W, r.a5, Slow),
        t(W, V, r.b5, Slow),
        t(U, O, r.b2, Slow),
        t(U, V, r.a4, Slow),
        t(V, U, r.b4, Slow),
    ]
}

/// Full generator `A` together with its three-way split `A = A0 + A1 + A2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitGenerators<T> {
    pub full: Mat9<T>,
    /// `[A0, A1, A2]`.
    pub parts: [Mat9<T>; 3],
}

impl<T: Real> SplitGenerators<T> {
    pub fn fast_high(&self) -> &Mat9<T> {
        &self.parts[0]
    }
    pub fn fast_low(&self) -> &Mat9<T> {
        &self.parts[1]
    }
    pub fn slow(&self) -> &Mat9<T> {
        &self.parts[2]
    }
}

// Off-diagonal column sums per part, each accumulated in edge-list order.
fn part_column_sums<T: Real>(edges: &[Transition<T>]) -> [[T; NSTATES]; 3] {
    let mut sums = [[T::zero(); NSTATES]; 3];
    for e in edges {
        sums[e.part as usize][e.from as usize] += e.rate;
    }
    sums
}

/// Assembles the full generator. Each diagonal entry is the negated sum of the
/// off-diagonal entries of its column, grouped `(A0 + A1) + A2` so that the
/// result agrees bitwise with the sum of [`assemble_split`].
pub fn assemble_full<T: Real>(r: &RateSet<T>) -> Mat9<T> {
    let edges = transitions(r);
    let mut a = Mat9::zeros();
    for e in &edges {
        a[(e.to as usize, e.from as usize)] = e.rate;
    }
    let s = part_column_sums(&edges);
    for j in 0..NSTATES {
        a[(j, j)] = -((s[0][j] + s[1][j]) + s[2][j]);
    }
    a
}

pub fn assemble_split<T: Real>(r: &RateSet<T>) -> SplitGenerators<T> {
    let edges = transitions(r);
    let mut parts = [Mat9::zeros(); 3];
    for e in &edges {
        parts[e.part as usize][(e.to as usize, e.from as usize)] = e.rate;
    }
    let s = part_column_sums(&edges);
    for (p, m) in parts.iter_mut().enumerate() {
        for j in 0..NSTATES {
            m[(j, j)] = -s[p][j];
        }
    }
    let full = (parts[0] + parts[1]) + parts[2];
    SplitGenerators { full, parts }
}

/// Right-hand side of the master equation written out state by state.
/// Mathematically identical to `assemble_full(r) * u`; the hot stepping loops
/// use this sparse form.
#[inline]
pub fn apply_generator<T: Real>(r: &RateSet<T>, u: &[T; NSTATES]) -> [T; NSTATES] {
    let [o, p, q, rr, s, t, uu, v, w] = *u;
    let (a_rq, a_st) = (r.a11, r.a11);
    let (a_qp, a_tu) = (r.a12, r.a12);
    let a_po = r.a13;
    let (a_qr, a_ts) = (r.b11, r.b11);
    let (a_pq, a_ut) = (r.b12, r.b12);
    let a_op = r.b13;
    let a_ou = r.a2;
    let a_uo = r.b2;
    let (a_up, a_tq, a_sr) = (r.a3, r.a3, r.a3);
    let (a_pu, a_qt, a_rs) = (r.b3, r.b3, r.b3);
    let (a_uv, a_vu, a_vw, a_wv) = (r.a4, r.b4, r.a5, r.b5);
    [
        a_po * p + a_uo * uu - (a_op + a_ou) * o,
        a_qp * q + a_up * uu + a_op * o - (a_pq + a_pu + a_po) * p,
        a_rq * rr + a_tq * t + a_pq * p - (a_qr + a_qt + a_qp) * q,
        a_sr * s + a_qr * q - (a_rs + a_rq) * rr,
        a_ts * t + a_rs * rr - (a_st + a_sr) * s,
        a_qt * q + a_st * s + a_ut * uu - (a_tq + a_ts + a_tu) * t,
        a_tu * t + a_pu * p + a_vu * v + a_ou * o - (a_ut + a_up + a_uo + a_uv) * uu,
        a_uv * uu + a_wv * w - (a_vu + a_vw) * v,
        a_vw * v - a_wv * w,
    ]
}

/// Voltage derivatives of the full generator and of each split part.
#[derive(Clone, Copy, Debug)]
pub struct GeneratorDerivative<T> {
    pub full: Mat9<T>,
    pub parts: [Mat9<T>; 3],
}

/// Step used by [`generator_derivative`], mV.
pub const DERIVATIVE_STEP_MV: f64 = 1e-3;

/// `dA/dV` by central differences with step `h` (mV).
pub fn generator_derivative_with_step<T: Real>(vm: T, h: T) -> GeneratorDerivative<T> {
    let plus = assemble_split(&eval_rates_unchecked(vm + h));
    let minus = assemble_split(&eval_rates_unchecked(vm - h));
    let inv = T::one() / (h + h);
    let d = |a: &Mat9<T>, b: &Mat9<T>| (*a - *b).scale(inv);
    let parts = [
        d(&plus.parts[0], &minus.parts[0]),
        d(&plus.parts[1], &minus.parts[1]),
        d(&plus.parts[2], &minus.parts[2]),
    ];
    // Differencing the full matrix directly loses ~ulp(|A|)/h to cancellation
    // on the diagonal; summing the part derivatives keeps dA = dA0 + dA1 + dA2.
    GeneratorDerivative {
        full: (parts[0] + parts[1]) + parts[2],
        parts,
    }
}

pub fn generator_derivative<T: Real>(vm: T) -> GeneratorDerivative<T> {
    generator_derivative_with_step(vm, T::lit(DERIVATIVE_STEP_MV))
}
