//! Hybrid operator splitting: exact exponentials of the two fast parts in
//! closed form, forward Euler on the slow remainder.

use rayon::prelude::*;

use super::SolverError;
use crate::eig::{decompose, exp_reference, exp_via_eig, EigError};
use crate::model::{
    assemble_split, eval_rates_unchecked, Mat9, Part, RateSet, State, StateOccupancy, NSTATES,
};
use crate::scalar::Real;
use crate::tables::VoltageGrid;

/// Smallest rate difference (ms⁻¹) accepted in a closed-form denominator.
pub const EPS_DEG: f64 = 1e-7;

fn check_gaps<T: Real>(part: Part, gaps: &[T]) -> Result<(), SolverError> {
    let eps = T::lit(EPS_DEG);
    match gaps.iter().find(|g| !(g.abs() >= eps)) {
        Some(g) => Err(SolverError::DegenerateRates {
            part,
            gap: g.as_f64(),
        }),
        None => Ok(()),
    }
}

/// Closed-form coefficients of `exp(A₀ dt)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FastHighCoeffs<T> {
    pub m_ou: T,
    pub m_po: T,
    pub m_qp: T,
    pub m_rq: T,
    pub m_st: T,
    pub m_tu: T,
    pub k_po: T,
    pub k_qo: T,
    pub k_ro: T,
    pub k_qp: T,
    pub k_rp: T,
    pub k_rq: T,
    pub k_st: T,
    pub k_su: T,
    pub k_pu: T,
    pub k_qu: T,
    pub k_ru: T,
}

impl<T: Real> FastHighCoeffs<T> {
    pub fn new(r: &RateSet<T>, dt: T) -> Result<Self, SolverError> {
        let (a_ou, a_po, a_qp, a_rq, a_st, a_tu) = (r.a2, r.a13, r.a12, r.a11, r.a11, r.a12);
        check_gaps(
            Part::FastHigh,
            &[
                a_ou - a_po,
                a_po - a_qp,
                a_ou - a_qp,
                a_qp - a_rq,
                a_po - a_rq,
                a_ou - a_rq,
                a_tu - a_st,
            ],
        )?;
        let m = |a: T| (-a * dt).exp();
        let (m_ou, m_po, m_qp, m_rq, m_st, m_tu) = (m(a_ou), m(a_po), m(a_qp), m(a_rq), m(a_st), m(a_tu));
        // dd(x, y) = (e^{−x dt} − e^{−y dt})/(y − x); leak(x, y) = 1 − e^{−x dt} − x·dd(x, y)
        let dd = |x: T, y: T| -m(x) * (-(y - x) * dt).exp_m1() / (y - x);
        let leak = |x: T, y: T| -(-x * dt).exp_m1() - x * dd(x, y);

        let k_po = a_po * dd(a_po, a_ou);
        let k_qo = a_po * a_qp * (dd(a_qp, a_ou) - dd(a_po, a_ou)) / (a_po - a_qp);
        let p3 = a_po * a_qp * a_rq;
        let k_ro = p3
            * ((dd(a_rq, a_ou) - dd(a_po, a_ou)) / (a_po - a_rq) - (dd(a_qp, a_ou) - dd(a_po, a_ou)) / (a_po - a_qp))
            / (a_qp - a_rq);
        let k_qp = a_qp * dd(a_qp, a_po);
        let k_rp = a_qp * a_rq * (dd(a_rq, a_po) - dd(a_qp, a_po)) / (a_qp - a_rq);
        let k_rq = a_rq * dd(a_rq, a_qp);
        let k_st = a_st * dd(a_st, a_tu);
        let k_su = leak(a_st, a_tu);

        // fraction of an initial unit in the named state that has left O for U
        let drain_p = leak(a_po, a_ou);
        let drain_q = leak(a_qp, a_ou);
        let drain_r = leak(a_rq, a_ou);
        let k_pu = drain_p;
        let k_qu = (a_po * drain_q - a_qp * drain_p) / (a_po - a_qp);
        let k_ru = -a_po * a_rq / ((a_qp - a_rq) * (a_po - a_qp)) * drain_q
            + a_qp * a_rq / ((a_qp - a_rq) * (a_po - a_qp)) * drain_p
            + a_po * a_qp / ((a_qp - a_rq) * (a_po - a_rq)) * drain_r
            - a_qp * a_rq / ((a_qp - a_rq) * (a_po - a_rq)) * drain_p;

        Ok(FastHighCoeffs {
            m_ou,
            m_po,
            m_qp,
            m_rq,
            m_st,
            m_tu,
            k_po,
            k_qo,
            k_ro,
            k_qp,
            k_rp,
            k_rq,
            k_st,
            k_su,
            k_pu,
            k_qu,
            k_ru,
        })
    }

    #[inline]
    pub fn apply(&self, u: &StateOccupancy<T>) -> StateOccupancy<T> {
        let [o, p, q, r, s, t, uu, v, w] = u.0;
        let c = self;
        let one = T::one();
        StateOccupancy([
            c.m_ou * o + c.k_po * p + c.k_qo * q + c.k_ro * r,
            c.m_po * p + c.k_qp * q + c.k_rp * r,
            c.m_qp * q + c.k_rq * r,
            c.m_rq * r,
            c.m_st * s,
            c.m_tu * t + c.k_st * s,
            uu + (one - c.m_tu) * t + c.k_su * s + (one - c.m_ou) * o + c.k_pu * p + c.k_qu * q + c.k_ru * r,
            v,
            w,
        ])
    }
}

/// Closed-form coefficients of `exp(A₁ dt)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FastLowCoeffs<T> {
    pub m_op: T,
    pub m_pq: T,
    pub m_qr: T,
    pub m_ts: T,
    pub m_ut: T,
    pub l_op: T,
    pub l_oq: T,
    pub l_pq: T,
    pub l_or: T,
    pub l_pr: T,
    pub l_us: T,
    pub l_ut: T,
}

impl<T: Real> FastLowCoeffs<T> {
    pub fn new(r: &RateSet<T>, dt: T) -> Result<Self, SolverError> {
        let (a_op, a_pq, a_qr, a_ts, a_ut) = (r.b13, r.b12, r.b11, r.b11, r.b12);
        check_gaps(
            Part::FastLow,
            &[a_pq - a_op, a_qr - a_op, a_qr - a_pq, a_ts - a_ut],
        )?;
        let m = |a: T| (-a * dt).exp();
        let (m_op, m_pq, m_qr, m_ts, m_ut) = (m(a_op), m(a_pq), m(a_qr), m(a_ts), m(a_ut));
        let dd = |x: T, y: T| -m(x) * (-(y - x) * dt).exp_m1() / (y - x);
        let leak = |x: T, y: T| -(-x * dt).exp_m1() - x * dd(x, y);

        let l_op = a_op * dd(a_op, a_pq);
        let l_oq = a_pq * a_op * (dd(a_op, a_qr) - dd(a_pq, a_qr)) / (a_pq - a_op);
        let l_pq = a_pq * dd(a_pq, a_qr);
        let l_or = (a_pq * leak(a_op, a_qr) - a_op * leak(a_pq, a_qr)) / (a_pq - a_op);
        let l_pr = leak(a_pq, a_qr);
        let l_us = leak(a_ut, a_ts);
        let l_ut = a_ut * dd(a_ut, a_ts);

        Ok(FastLowCoeffs {
            m_op,
            m_pq,
            m_qr,
            m_ts,
            m_ut,
            l_op,
            l_oq,
            l_pq,
            l_or,
            l_pr,
            l_us,
            l_ut,
        })
    }

    #[inline]
    pub fn apply(&self, u: &StateOccupancy<T>) -> StateOccupancy<T> {
        let [o, p, q, r, s, t, uu, v, w] = u.0;
        let c = self;
        let one = T::one();
        StateOccupancy([
            c.m_op * o,
            c.l_op * o + c.m_pq * p,
            c.l_oq * o + c.l_pq * p + c.m_qr * q,
            c.l_or * o + c.l_pr * p + (one - c.m_qr) * q + r,
            c.l_us * uu + (one - c.m_ts) * t + s,
            c.l_ut * uu + c.m_ts * t,
            c.m_ut * uu,
            v,
            w,
        ])
    }
}

pub fn hos_fast_high<T: Real>(
    u: &StateOccupancy<T>,
    r: &RateSet<T>,
    dt: T,
) -> Result<StateOccupancy<T>, SolverError> {
    Ok(FastHighCoeffs::new(r, dt)?.apply(u))
}

pub fn hos_fast_low<T: Real>(
    u: &StateOccupancy<T>,
    r: &RateSet<T>,
    dt: T,
) -> Result<StateOccupancy<T>, SolverError> {
    Ok(FastLowCoeffs::new(r, dt)?.apply(u))
}

/// Forward Euler on the slow part `A₂`.
#[inline]
pub fn hos_slow<T: Real>(u: &StateOccupancy<T>, r: &RateSet<T>, dt: T) -> StateOccupancy<T> {
    let [o, p, q, rr, s, t, uu, v, w] = u.0;
    StateOccupancy([
        o + r.b2 * uu * dt,
        p + (r.a3 * uu - r.b3 * p) * dt,
        q + (r.a3 * t - r.b3 * q) * dt,
        rr + (r.a3 * s - r.b3 * rr) * dt,
        s + (r.b3 * rr - r.a3 * s) * dt,
        t + (r.b3 * q - r.a3 * t) * dt,
        uu + (r.b3 * p + r.b4 * v - (r.a3 + r.b2 + r.a4) * uu) * dt,
        v + (r.a4 * uu + r.b5 * w - (r.b4 + r.a5) * v) * dt,
        w + (r.a5 * v - r.b5 * w) * dt,
    ])
}

/// `exp(part dt)` through the eigendecomposition, or through the series when
/// the part is too close to defective to diagonalize.
pub fn dense_exp<T: Real>(part: &Mat9<T>, dt: T) -> Result<Mat9<T>, SolverError> {
    match decompose(part) {
        Ok(e) => Ok(exp_via_eig(&e, dt)?),
        Err(EigError::NearDefective { .. }) => Ok(exp_reference(part, dt)?),
        Err(e) => Err(e.into()),
    }
}

/// One fast substep map: the closed form when its denominators are safe,
/// otherwise a dense exponential.
#[derive(Clone, Copy, Debug)]
pub enum FastMap<C, T> {
    Analytic(C),
    Dense(Mat9<T>),
}

/// Everything needed to advance one HOS step at a frozen voltage.
#[derive(Clone, Copy, Debug)]
pub struct HosStep<T> {
    pub high: FastMap<FastHighCoeffs<T>, T>,
    pub low: FastMap<FastLowCoeffs<T>, T>,
    pub rates: RateSet<T>,
    pub dt: T,
}

impl<T: Real> HosStep<T> {
    pub fn new(r: &RateSet<T>, dt: T) -> Result<Self, SolverError> {
        let split = || assemble_split(r);
        let high = match FastHighCoeffs::new(r, dt) {
            Ok(c) => FastMap::Analytic(c),
            Err(SolverError::DegenerateRates { gap, .. }) => {
                log::debug!("fast-high closed form degenerate (gap {gap:e}), using dense exponential");
                FastMap::Dense(dense_exp(split().fast_high(), dt)?)
            }
            Err(e) => return Err(e),
        };
        let low = match FastLowCoeffs::new(r, dt) {
            Ok(c) => FastMap::Analytic(c),
            Err(SolverError::DegenerateRates { gap, .. }) => {
                log::debug!("fast-low closed form degenerate (gap {gap:e}), using dense exponential");
                FastMap::Dense(dense_exp(split().fast_low(), dt)?)
            }
            Err(e) => return Err(e),
        };
        Ok(HosStep {
            high,
            low,
            rates: *r,
            dt,
        })
    }

    #[inline]
    pub fn apply(&self, u: &StateOccupancy<T>) -> StateOccupancy<T> {
        let u1 = match &self.high {
            FastMap::Analytic(c) => c.apply(u),
            FastMap::Dense(m) => StateOccupancy(m.mul_vec(&u.0)),
        };
        let u2 = match &self.low {
            FastMap::Analytic(c) => c.apply(&u1),
            FastMap::Dense(m) => StateOccupancy(m.mul_vec(&u1.0)),
        };
        hos_slow(&u2, &self.rates, self.dt)
    }
}

/// One step: fast-high, then fast-low, then the slow substep, all with the
/// rates `r` of the frozen voltage.
pub fn step_hos<T: Real>(
    u: &StateOccupancy<T>,
    r: &RateSet<T>,
    dt: T,
) -> Result<StateOccupancy<T>, SolverError> {
    Ok(HosStep::new(r, dt)?.apply(u))
}

/// Precomputed HOS step data for every grid voltage at a fixed `dt`.
#[derive(Clone, Debug)]
pub struct HosTable<T> {
    pub grid: VoltageGrid,
    pub dt: T,
    pub steps: Vec<HosStep<T>>,
}

impl<T: Real> HosTable<T> {
    pub fn build(grid: VoltageGrid, dt: T) -> Result<Self, SolverError> {
        let steps = (0..grid.len())
            .into_par_iter()
            .map(|j| HosStep::new(&eval_rates_unchecked(T::lit(grid.voltage(j))), dt))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(HosTable { grid, dt, steps })
    }

    #[inline]
    pub fn lookup(&self, vm: T) -> &HosStep<T> {
        &self.steps[self.grid.lookup(vm.as_f64())]
    }
}

const _: () = assert!(NSTATES == State::ALL.len());

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::eval_rates;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_prob(rng: &mut ChaCha8Rng) -> StateOccupancy<f64> {
        let x: [f64; NSTATES] = std::array::from_fn(|_| rng.gen::<f64>());
        let s: f64 = x.iter().sum();
        StateOccupancy(x.map(|v| v / s))
    }

    #[test]
    fn dt_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_prob(&mut rng);
        let r = eval_rates(-30.0_f64).unwrap();
        assert!(hos_fast_high(&u, &r, 0.0).unwrap().max_abs_diff(&u) < 1e-15);
        assert!(hos_fast_low(&u, &r, 0.0).unwrap().max_abs_diff(&u) < 1e-15);
        assert!(step_hos(&u, &r, 0.0).unwrap().max_abs_diff(&u) < 1e-15);
    }

    #[test]
    fn fast_substeps_match_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let vm = rng.gen_range(-100.0..70.0);
            let dt = rng.gen_range(0.0..0.1);
            let u = random_prob(&mut rng);
            let r = eval_rates(vm).unwrap();
            let split = assemble_split(&r);
            for (got, part) in [
                (hos_fast_high(&u, &r, dt), split.fast_high()),
                (hos_fast_low(&u, &r, dt), split.fast_low()),
            ] {
                let Ok(got) = got else { continue };
                let want = StateOccupancy(exp_reference(part, dt).unwrap().mul_vec(&u.0));
                assert!(got.max_abs_diff(&want) < 1e-9, "Vm {vm} dt {dt}");
            }
        }
    }

    #[test]
    fn substeps_conserve_and_leave_vw() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let vm = rng.gen_range(-100.0..70.0);
            let u = random_prob(&mut rng);
            let r = eval_rates(vm).unwrap();
            let slow = hos_slow(&u, &r, 0.1);
            assert!((slow.sum() - u.sum()).abs() < 1e-14);
            for u1 in [hos_fast_high(&u, &r, 0.1), hos_fast_low(&u, &r, 0.1)].into_iter().flatten() {
                assert!((u1.sum() - u.sum()).abs() < 1e-12);
                assert_eq!(u1[State::V], u[State::V]);
                assert_eq!(u1[State::W], u[State::W]);
            }
        }
    }

    #[test]
    fn degenerate_rates_detected_and_fallback_used() {
        let mut r = eval_rates(0.0_f64).unwrap();
        r.a2 = r.a13;
        assert!(matches!(
            FastHighCoeffs::new(&r, 0.01),
            Err(SolverError::DegenerateRates { part: Part::FastHigh, .. })
        ));
        let step = HosStep::new(&r, 0.01).unwrap();
        assert!(matches!(step.high, FastMap::Dense(_)));
        let u = StateOccupancy::<f64>::resting();
        let split = assemble_split(&r);
        let want = exp_reference(split.fast_high(), 0.01).unwrap().mul_vec(&u.0);
        let got = match step.high {
            FastMap::Dense(m) => m.mul_vec(&u.0),
            _ => unreachable!(),
        };
        for i in 0..NSTATES {
            assert!((got[i] - want[i]).abs() < 1e-9);
        }

        let mut r = eval_rates(0.0_f64).unwrap();
        r.b13 = r.b12;
        assert!(matches!(step_hos_low_kind(&r), FastMap::Dense(_)));
    }

    fn step_hos_low_kind(r: &RateSet<f64>) -> FastMap<FastLowCoeffs<f64>, f64> {
        HosStep::new(r, 0.01).unwrap().low
    }

    #[test]
    fn slow_substep_is_a_contraction_up_to_1ms() {
        // largest entries: α₂/100 at the top of the range, α₃ at the bottom
        let g = VoltageGrid::with_step(0.1).unwrap();
        let mut worst = 0.0_f64;
        for j in 0..g.len() {
            let s = assemble_split(&eval_rates(g.voltage(j)).unwrap());
            worst = worst.max(s.slow().max_abs());
            let m = Mat9::identity() + s.slow().scale(1.0);
            assert!(m.0.iter().flatten().all(|&x| x >= 0.0), "Vm {}", g.voltage(j));
        }
        assert!(worst < 1.0, "{worst}");
    }

    #[test]
    fn splitting_defect_within_commutator_bound() {
        for vm in [-90.0_f64, -40.0, 0.0, 30.0, 60.0] {
            let r = eval_rates(vm).unwrap();
            let s = assemble_split(&r);
            let (a0, a1, a2) = (s.fast_high(), s.fast_low(), s.slow());
            let comm = a1.commutator(a0) + a2.commutator(a0) + a2.commutator(a1);
            for dt in [1e-3, 2e-3] {
                let h = HosStep::new(&r, dt).unwrap();
                let exact = exp_reference(&s.full, dt).unwrap();
                let mut worst = 0.0_f64;
                for st in State::ALL {
                    let u = StateOccupancy::<f64>::pure(st);
                    let e = StateOccupancy(exact.mul_vec(&u.0));
                    worst = worst.max(h.apply(&u).max_abs_diff(&e));
                }
                // the FE substep on A₂ adds ½‖A₂‖²dt² on top of the splitting term
                let bound = (0.5 * comm.frobenius() + 0.5 * a2.frobenius().powi(2)) * dt * dt;
                assert!(worst <= 1.05 * bound + 1e-12, "Vm {vm} dt {dt}: {worst} > {bound}");
            }
        }
    }

    #[test]
    fn table_matches_direct() {
        let g = VoltageGrid::new(-100.0, 70.0, 1.0).unwrap();
        let t = HosTable::build(g, 0.01_f64).unwrap();
        let u = StateOccupancy::<f64>::resting();
        let vm = 12.0;
        let direct = step_hos(&u, &eval_rates(vm).unwrap(), 0.01).unwrap();
        assert_eq!(t.lookup(vm).apply(&u), direct);
    }
}
