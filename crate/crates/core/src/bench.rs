//! Wall-clock comparison of the channel steppers inside full-cell runs.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::cell::{simulate, CellError, CellParams, Protocol};
use crate::solvers::{ChannelStepper, Method, MethodConfig, SolverError};
use crate::tables::{EigenTable, VoltageGrid};

/// Repetitions per case; the reported figure is their median.
pub const DEFAULT_REPS: usize = 6;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("no benchmark cases: method and step lists must be nonempty")]
    NoCases,
    #[error("repetition count must be positive")]
    NoReps,
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Cell(#[from] CellError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchCase {
    pub method: Method,
    pub tabulated: bool,
    /// ms
    pub dt: f64,
}

impl BenchCase {
    pub fn config(&self) -> Result<MethodConfig<f64>, SolverError> {
        MethodConfig::new(self.method, self.dt, self.tabulated)
    }

    pub fn label(&self) -> String {
        self.config()
            .map(|c| c.label())
            .unwrap_or_else(|_| self.method.name().to_ascii_uppercase())
    }
}

/// Cartesian product of variants and steps, dropping duplicate MRL variants
/// (MRL is always tabulated).
pub fn cases(variants: &[(Method, bool)], dts: &[f64]) -> Result<Vec<BenchCase>, BenchError> {
    let mut out: Vec<BenchCase> = Vec::new();
    for &dt in dts {
        for &(method, tab) in variants {
            let case = BenchCase {
                method,
                tabulated: tab || method == Method::Mrl,
                dt,
            };
            if !out.contains(&case) {
                out.push(case);
            }
        }
    }
    if out.is_empty() {
        return Err(BenchError::NoCases);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct BenchResult {
    pub case: BenchCase,
    /// Median channel-stepping time, clock overhead removed.
    pub ina: Duration,
    /// Median whole-run time.
    pub total: Duration,
    pub stable: bool,
    pub runs: Vec<(Duration, Duration)>,
}

pub fn median(xs: &[Duration]) -> Duration {
    let mut v = xs.to_vec();
    v.sort_unstable();
    let n = v.len();
    match n {
        0 => Duration::ZERO,
        _ if n % 2 == 1 => v[n / 2],
        _ => (v[n / 2 - 1] + v[n / 2]) / 2,
    }
}

/// Mean time an empty clock bracket reports.
pub fn timer_overhead() -> Duration {
    const N: u32 = 200_000;
    let batches: Vec<Duration> = (0..5)
        .map(|_| {
            let mut acc = Duration::ZERO;
            for _ in 0..N {
                let t0 = Instant::now();
                acc += std::hint::black_box(t0).elapsed();
            }
            acc / N
        })
        .collect();
    median(&batches)
}

pub struct BenchSetup<'a> {
    pub pulses: u32,
    pub cycle_length: f64,
    pub reps: usize,
    pub grid: VoltageGrid,
    pub eigen: Option<&'a EigenTable<f64>>,
    pub params: CellParams,
}

/// Runs one case `reps` times sequentially. Table construction is excluded
/// from the timings.
pub fn bench_case(case: &BenchCase, setup: &BenchSetup, overhead: Duration) -> Result<BenchResult, BenchError> {
    if setup.reps == 0 {
        return Err(BenchError::NoReps);
    }
    let stepper = ChannelStepper::new(&case.config()?, setup.grid, setup.eigen)?;
    let protocol = Protocol {
        stride: usize::MAX,
        timed: true,
        ..Protocol::new(setup.pulses, setup.cycle_length)
    };
    let mut runs = Vec::with_capacity(setup.reps);
    let mut stable = true;
    for _ in 0..setup.reps {
        let tr = simulate(&protocol, &stepper, &setup.params)?;
        stable &= tr.is_stable();
        let brackets = u32::try_from(tr.timing.steps).unwrap_or(u32::MAX);
        let ina = tr.timing.ina.saturating_sub(overhead * brackets);
        runs.push((ina, tr.timing.total));
    }
    let ina: Vec<Duration> = runs.iter().map(|r| r.0).collect();
    let total: Vec<Duration> = runs.iter().map(|r| r.1).collect();
    Ok(BenchResult {
        case: *case,
        ina: median(&ina),
        total: median(&total),
        stable,
        runs,
    })
}

pub fn bench(cases: &[BenchCase], setup: &BenchSetup) -> Result<Vec<BenchResult>, BenchError> {
    if cases.is_empty() {
        return Err(BenchError::NoCases);
    }
    let overhead = timer_overhead();
    log::info!("clock bracket overhead {overhead:?}");
    cases.iter().map(|c| bench_case(c, setup, overhead)).collect()
}
