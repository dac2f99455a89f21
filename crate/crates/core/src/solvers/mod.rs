//! Timesteppers for the channel occupancy vector at a voltage frozen over
//! the step.

pub mod hos;

use std::sync::Arc;

use crate::eig::EigError;
use crate::model::{apply_generator, eval_rates_unchecked, Mat9, Part, StateOccupancy, NSTATES};
use crate::scalar::Real;
use crate::tables::{build_stepper, EigenTable, RateTable, StepperTable, TableError, VoltageGrid};

pub use hos::{
    dense_exp, hos_fast_high, hos_fast_low, hos_slow, step_hos, FastHighCoeffs, FastLowCoeffs,
    FastMap, HosStep, HosTable, EPS_DEG,
};

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("closed-form {part:?} substep has coincident rates (gap {gap:e})")]
    DegenerateRates { part: Part, gap: f64 },
    #[error(transparent)]
    Eig(#[from] EigError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("method {0} needs an eigen table")]
    MissingTable(Method),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Fe,
    Mrl,
    Hos,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Fe, Method::Mrl, Method::Hos];

    pub fn name(self) -> &'static str {
        match self {
            Method::Fe => "fe",
            Method::Mrl => "mrl",
            Method::Hos => "hos",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "fe" => Ok(Method::Fe),
            "mrl" => Ok(Method::Mrl),
            "hos" => Ok(Method::Hos),
            _ => Err(format!("unknown method `{s}` (expected fe, mrl or hos)")),
        }
    }
}

/// `tabulated` selects voltage-grid lookups for FE and HOS; MRL is always
/// tabulated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MethodConfig<T> {
    pub method: Method,
    pub dt: T,
    pub tabulated: bool,
}

impl<T: Real> MethodConfig<T> {
    pub fn new(method: Method, dt: T, tabulated: bool) -> Result<Self, SolverError> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(SolverError::InvalidStep(dt.as_f64()));
        }
        Ok(MethodConfig {
            method,
            dt,
            tabulated: tabulated || method == Method::Mrl,
        })
    }

    pub fn label(&self) -> String {
        let base = self.method.name().to_ascii_uppercase();
        if self.tabulated && self.method != Method::Mrl {
            format!("{base}(tab.)")
        } else {
            base
        }
    }
}

/// `u + dt·A·u`.
pub fn step_fe<T: Real>(u: &StateOccupancy<T>, a: &Mat9<T>, dt: T) -> StateOccupancy<T> {
    let du = a.mul_vec(&u.0);
    StateOccupancy(std::array::from_fn(|i| u.0[i] + dt * du[i]))
}

/// Forward Euler with the generator applied in sparse form.
#[inline]
pub fn step_fe_rates<T: Real>(
    u: &StateOccupancy<T>,
    r: &crate::model::RateSet<T>,
    dt: T,
) -> StateOccupancy<T> {
    let du = apply_generator(r, &u.0);
    StateOccupancy(std::array::from_fn(|i| u.0[i] + dt * du[i]))
}

#[inline]
pub fn step_mrl<T: Real>(u: &StateOccupancy<T>, stepper: &StepperTable<T>, vm: T) -> StateOccupancy<T> {
    StateOccupancy(stepper.lookup(vm).mul_vec(&u.0))
}

/// Exact relaxation of a gate towards `yss` over `dt` with time constant
/// `tau`.
#[inline]
pub fn step_gate_rl<T: Real>(y: T, yss: T, tau: T, dt: T) -> T {
    yss - (yss - y) * (-dt / tau).exp()
}

/// A configured channel timestepper with whatever tables it needs.
#[derive(Clone, Debug)]
pub enum ChannelStepper<T> {
    Fe { dt: T },
    FeTabulated { dt: T, rates: Arc<RateTable<T>> },
    Mrl { table: Arc<StepperTable<T>> },
    Hos { dt: T },
    HosTabulated { table: Arc<HosTable<T>> },
}

impl<T: Real> ChannelStepper<T> {
    /// Builds the stepper for `cfg`. FE and HOS tables are sampled on `grid`;
    /// MRL derives its transition matrices from `eigen`.
    pub fn new(
        cfg: &MethodConfig<T>,
        grid: VoltageGrid,
        eigen: Option<&EigenTable<T>>,
    ) -> Result<Self, SolverError> {
        let dt = cfg.dt;
        Ok(match (cfg.method, cfg.tabulated) {
            (Method::Fe, false) => ChannelStepper::Fe { dt },
            (Method::Fe, true) => ChannelStepper::FeTabulated {
                dt,
                rates: Arc::new(RateTable::build(grid)),
            },
            (Method::Mrl, _) => {
                let eigen = eigen.ok_or(SolverError::MissingTable(Method::Mrl))?;
                ChannelStepper::Mrl {
                    table: Arc::new(build_stepper(eigen, dt)?),
                }
            }
            (Method::Hos, false) => ChannelStepper::Hos { dt },
            (Method::Hos, true) => ChannelStepper::HosTabulated {
                table: Arc::new(HosTable::build(grid, dt)?),
            },
        })
    }

    pub fn dt(&self) -> T {
        match self {
            ChannelStepper::Fe { dt } | ChannelStepper::FeTabulated { dt, .. } | ChannelStepper::Hos { dt } => *dt,
            ChannelStepper::Mrl { table } => table.dt,
            ChannelStepper::HosTabulated { table } => table.dt,
        }
    }

    pub fn method(&self) -> Method {
        match self {
            ChannelStepper::Fe { .. } | ChannelStepper::FeTabulated { .. } => Method::Fe,
            ChannelStepper::Mrl { .. } => Method::Mrl,
            ChannelStepper::Hos { .. } | ChannelStepper::HosTabulated { .. } => Method::Hos,
        }
    }

    /// Advances `u` by one step at the frozen voltage `vm`.
    #[inline]
    pub fn step(&self, u: &StateOccupancy<T>, vm: T) -> Result<StateOccupancy<T>, SolverError> {
        Ok(match self {
            ChannelStepper::Fe { dt } => step_fe_rates(u, &eval_rates_unchecked(vm), *dt),
            ChannelStepper::FeTabulated { dt, rates } => step_fe_rates(u, rates.lookup(vm), *dt),
            ChannelStepper::Mrl { table } => step_mrl(u, table, vm),
            ChannelStepper::Hos { dt } => step_hos(u, &eval_rates_unchecked(vm), *dt)?,
            ChannelStepper::HosTabulated { table } => table.lookup(vm).apply(u),
        })
    }
}

const _: () = assert!(NSTATES == 9);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eig::exp_reference;
    use crate::model::{assemble_full, eval_rates, State};
    use crate::tables::build_eigen_table;

    #[test]
    fn fe_trivia() {
        let u = StateOccupancy::<f64>::resting();
        assert_eq!(step_fe(&u, &Mat9::zeros(), 0.1), u);
        let r = eval_rates(10.0_f64).unwrap();
        let a = assemble_full(&r);
        let v = step_fe(&u, &a, 0.01);
        assert!((v.sum() - u.sum()).abs() < 1e-14);
        assert!(v.max_abs_diff(&step_fe_rates(&u, &r, 0.01)) < 1e-15);
    }

    #[test]
    fn fe_is_first_order() {
        let r = eval_rates(-20.0_f64).unwrap();
        let a = assemble_full(&r);
        let u = StateOccupancy::<f64>::resting();
        let defect = |dt: f64| {
            let e = StateOccupancy(exp_reference(&a, dt).unwrap().mul_vec(&u.0));
            step_fe(&u, &a, dt).max_abs_diff(&e)
        };
        let ratio = defect(2e-3) / defect(1e-3);
        assert!((ratio - 4.0).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn gate_rl_limits() {
        assert!((step_gate_rl(0.2_f64, 0.9, 3.0, 0.0) - 0.2).abs() < 1e-15);
        assert!((step_gate_rl(0.2_f64, 0.9, 3.0, 1e4) - 0.9).abs() < 1e-15);
        let (y, yss, tau, dt) = (0.2_f64, 0.9, 3.0, 1e-3);
        let fe = y + dt * (yss - y) / tau;
        let d = (step_gate_rl(y, yss, tau, dt) - fe).abs();
        assert!(d < dt * dt, "{d}");
    }

    #[test]
    fn mrl_relaxes_to_null_space() {
        let vm = -60.0_f64;
        let grid = VoltageGrid::new(vm, vm, 1.0).unwrap();
        let eig = build_eigen_table::<f64>(grid).unwrap();
        // slow inactivation relaxes over tens of seconds
        let st = build_stepper(&eig, 1000.0).unwrap();
        let mut u = StateOccupancy::<f64>::resting();
        for _ in 0..1000 {
            u = step_mrl(&u, &st, vm);
        }
        // steady state solved independently: replace one balance row by Σu = 1
        let a = assemble_full(&eval_rates(vm).unwrap());
        let mut m = a.to_complex();
        let mut b = [num_complex::Complex::new(0.0, 0.0); NSTATES];
        for j in 0..NSTATES {
            m[(0, j)] = num_complex::Complex::new(1.0, 0.0);
        }
        b[0] = num_complex::Complex::new(1.0, 0.0);
        let x = m.inverse().unwrap().mul_vec(&b);
        for i in 0..NSTATES {
            assert!((u.0[i] - x[i].re).abs() < 1e-9, "{:?} {} {}", State::ALL[i], u.0[i], x[i].re);
        }
    }

    #[test]
    fn steppers_conserve_at_frozen_voltage() {
        let grid = VoltageGrid::new(-100.0, 70.0, 5.0).unwrap();
        let eig = build_eigen_table::<f64>(grid).unwrap();
        for m in Method::ALL {
            for tab in [false, true] {
                let cfg = MethodConfig::new(m, 0.1, tab).unwrap();
                let s = ChannelStepper::new(&cfg, grid, Some(&eig)).unwrap();
                for j in 0..grid.len() {
                    let u = StateOccupancy::<f64>::resting();
                    let v = s.step(&u, grid.voltage(j)).unwrap();
                    assert!((v.sum() - u.sum()).abs() <= 1e-12, "{m} Vm {}", grid.voltage(j));
                }
            }
        }
    }

    #[test]
    fn mrl_bounded_where_fe_diverges() {
        let vm = 60.0;
        let grid = VoltageGrid::new(vm, vm, 1.0).unwrap();
        let eig = build_eigen_table::<f64>(grid).unwrap();
        let st = build_stepper(&eig, 0.1).unwrap();
        let r = eval_rates(vm).unwrap();
        let (mut u, mut w) = (StateOccupancy::<f64>::resting(), StateOccupancy::<f64>::resting());
        for _ in 0..200 {
            u = step_mrl(&u, &st, vm);
            w = step_fe_rates(&w, &r, 0.1);
            assert!(u.max_abs() <= 1.0 + 1e-9);
        }
        assert!(w.max_abs() > 10.0);
    }

    #[test]
    fn config_validation() {
        assert!(MethodConfig::new(Method::Fe, 0.0_f64, false).is_err());
        assert!(MethodConfig::new(Method::Fe, f64::NAN, false).is_err());
        assert!(MethodConfig::new(Method::Mrl, 0.01_f64, false).unwrap().tabulated);
        let cfg = MethodConfig::new(Method::Mrl, 0.01_f64, true).unwrap();
        assert!(matches!(
            ChannelStepper::new(&cfg, VoltageGrid::default(), None),
            Err(SolverError::MissingTable(Method::Mrl))
        ));
        assert_eq!("HOS".parse::<Method>().unwrap(), Method::Hos);
        assert!("rk4".parse::<Method>().is_err());
    }
}
