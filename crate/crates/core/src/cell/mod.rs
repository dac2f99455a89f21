//! Whole-cell ventricular action-potential model hosting the sodium-channel
//! Markov chain.

pub mod currents;

use std::time::{Duration, Instant};

use crate::model::StateOccupancy;
use crate::solvers::{step_gate_rl, ChannelStepper, SolverError};

pub use currents::{compute_currents, Currents};
use currents::{
    csqn, free_cai, free_cajsr, gates as gt, trpn, cmdn, A_CAP, FARADAY, V_JSR, V_MYO, V_NSR,
};

pub const V_REST: f64 = -95.0;
pub const V_STIM: f64 = -35.0;
/// Default peak sodium conductance, mS/µF.
pub const DEFAULT_GNA: f64 = 28.0;
/// Stimulus onset within each cycle, ms.
pub const STIM_OFFSET: f64 = 1.0;
/// dVm/dt above which a local maximum resets the release timer, mV/ms.
pub const CICR_DVDT_THRESHOLD: f64 = 1.0;
/// Minimum interval between release-timer resets, ms.
pub const CICR_REFRACTORY: f64 = 10.0;
pub const VM_BOUNDS: (f64, f64) = (-150.0, 100.0);
pub const MC_BOUND: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GateScheme {
    #[default]
    ForwardEuler,
    RushLarsen,
}

pub fn no_ito(_: &CellState) -> f64 {
    0.0
}

#[derive(Clone, Copy, Debug)]
pub struct CellParams {
    pub gna: f64,
    pub gate_scheme: GateScheme,
    pub ito: fn(&CellState) -> f64,
}

impl Default for CellParams {
    fn default() -> Self {
        CellParams {
            gna: DEFAULT_GNA,
            gate_scheme: GateScheme::ForwardEuler,
            ito: no_ito,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gates {
    pub d: f64,
    pub f: f64,
    pub b: f64,
    pub g: f64,
    pub xr: f64,
    pub xs1: f64,
    pub xs2: f64,
}

/// Release timer `tc` with the bookkeeping needed to detect local maxima of
/// dVm/dt causally.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CicrTimer {
    pub tc: f64,
    pub prev_dvdt: f64,
    pub last_reset: f64,
}

impl CicrTimer {
    pub const INITIAL_TC: f64 = 1000.0;

    pub fn new() -> Self {
        CicrTimer {
            tc: Self::INITIAL_TC,
            prev_dvdt: 0.0,
            last_reset: f64::NEG_INFINITY,
        }
    }

    /// Advances the timer over a step ending at `t_new`, given dVm/dt over
    /// that step. A maximum is registered one step after it occurs.
    pub fn update(&mut self, dvdt: f64, t_new: f64, dt: f64) {
        self.tc += dt;
        let t_peak = t_new - 2.0 * dt;
        if self.prev_dvdt > CICR_DVDT_THRESHOLD
            && dvdt < self.prev_dvdt
            && t_peak - self.last_reset >= CICR_REFRACTORY
        {
            self.tc = t_new - t_peak;
            self.last_reset = t_peak;
        }
        self.prev_dvdt = dvdt;
    }
}

impl Default for CicrTimer {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellState {
    pub t: f64,
    pub vm: f64,
    pub nai: f64,
    pub ki: f64,
    pub cai: f64,
    pub cansr: f64,
    pub cajsr: f64,
    pub gates: Gates,
    pub mc: StateOccupancy<f64>,
    pub cicr: CicrTimer,
}

impl CellState {
    pub fn concentrations(&self) -> [f64; 5] {
        [self.nai, self.ki, self.cai, self.cansr, self.cajsr]
    }

    pub fn is_finite(&self) -> bool {
        let g = &self.gates;
        self.vm.is_finite()
            && self.concentrations().iter().all(|x| x.is_finite())
            && [g.d, g.f, g.b, g.g, g.xr, g.xs1, g.xs2].iter().all(|x| x.is_finite())
            && self.mc.is_finite()
    }

    pub fn has_negative_concentration(&self) -> bool {
        self.concentrations().iter().any(|&x| x < 0.0)
    }

    /// Reason the state counts as numerically unstable, if any.
    pub fn instability(&self) -> Option<Instability> {
        if !self.is_finite() {
            Some(Instability::NonFinite)
        } else if !(VM_BOUNDS.0..=VM_BOUNDS.1).contains(&self.vm) {
            Some(Instability::VoltageOutOfRange(self.vm))
        } else if self.mc.max_abs() > MC_BOUND {
            Some(Instability::OccupancyBlowUp(self.mc.max_abs()))
        } else {
            None
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Instability {
    NonFinite,
    VoltageOutOfRange(f64),
    OccupancyBlowUp(f64),
}

impl std::fmt::Display for Instability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Instability::NonFinite => write!(f, "non-finite state"),
            Instability::VoltageOutOfRange(v) => write!(f, "Vm = {v} mV outside [-150, 100]"),
            Instability::OccupancyBlowUp(m) => write!(f, "channel occupancy reached {m}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CellError {
    #[error("instability detected at t = {t} ms: {kind}")]
    InstabilityDetected { t: f64, kind: Instability },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),
}

pub fn init_state() -> CellState {
    CellState {
        t: 0.0,
        vm: V_REST,
        nai: 7.9,
        ki: 147.23,
        cai: 0.00012,
        cansr: 1.8,
        cajsr: 1.8,
        gates: Gates {
            d: 6.17507e-6,
            f: 0.999357,
            b: 0.00141379,
            g: 0.98831,
            xr: 2.14606e-4,
            xs1: 0.0,
            xs2: 0.0,
        },
        mc: StateOccupancy::resting(),
        cicr: CicrTimer::new(),
    }
}

/// Potassium change that carries the membrane charge for a jump of `dv` mV.
pub fn stimulus_potassium(dv: f64) -> f64 {
    dv * A_CAP / (V_MYO * FARADAY)
}

/// Sets Vm to the stimulus level, crediting the injected charge to Ki.
pub fn apply_stimulus(s: &mut CellState) {
    let dv = V_STIM - s.vm;
    s.vm = V_STIM;
    s.ki += stimulus_potassium(dv);
}

fn relax(y: f64, yss: f64, tau: f64, dt: f64, scheme: GateScheme) -> f64 {
    match scheme {
        GateScheme::ForwardEuler => y + dt * (yss - y) / tau,
        GateScheme::RushLarsen => step_gate_rl(y, yss, tau, dt),
    }
}

/// Accumulates time spent inside the channel stepper.
#[derive(Debug, Default)]
pub struct StepTimer {
    pub elapsed: Duration,
    pub brackets: u64,
}

/// Advances `s` by one step from precomputed currents `c` at `s`. Returns
/// dVm/dt over the step.
fn advance(
    s: &mut CellState,
    c: &Currents,
    stepper: &ChannelStepper<f64>,
    p: &CellParams,
    timer: Option<&mut StepTimer>,
) -> Result<f64, SolverError> {
    let dt = stepper.dt();
    let vm = s.vm;
    let dvdt = -c.total();

    s.mc = match timer {
        Some(tm) => {
            let t0 = Instant::now();
            let u = stepper.step(&s.mc, vm);
            tm.elapsed += t0.elapsed();
            tm.brackets += 1;
            u?
        }
        None => stepper.step(&s.mc, vm)?,
    };

    let sch = p.gate_scheme;
    let g = &mut s.gates;
    g.d = relax(g.d, gt::d_inf(vm), gt::tau_d(vm), dt, sch);
    g.f = relax(g.f, gt::f_inf(vm), gt::tau_f(vm), dt, sch);
    g.b = relax(g.b, gt::b_inf(vm), gt::tau_b(vm), dt, sch);
    g.g = relax(g.g, gt::g_inf(vm), gt::tau_g(vm), dt, sch);
    g.xr = relax(g.xr, gt::xr_inf(vm), gt::tau_xr(vm), dt, sch);
    let xs_inf = gt::xs1_inf(vm);
    g.xs1 = relax(g.xs1, xs_inf, gt::tau_xs1(vm), dt, sch);
    g.xs2 = relax(g.xs2, xs_inf, gt::tau_xs2(vm), dt, sch);

    let flux = A_CAP / (V_MYO * FARADAY);
    let nai = s.nai - dt * c.itna() * flux;
    let ki = s.ki - dt * c.itk() * flux;

    let dcai = -dt
        * (c.itca() * A_CAP / (V_MYO * 2.0 * FARADAY) + (c.iup - c.ileak) * V_NSR / V_MYO
            - c.irel * V_JSR / V_MYO);
    let cai = free_cai(trpn(s.cai) + cmdn(s.cai) + dcai + s.cai);
    let dcajsr = dt * (c.itr - c.irel);
    let cajsr = free_cajsr(csqn(s.cajsr) + dcajsr + s.cajsr);
    let cansr = s.cansr + dt * (c.iup - c.ileak - c.itr * V_JSR / V_NSR);

    s.nai = nai;
    s.ki = ki;
    s.cai = cai;
    s.cajsr = cajsr;
    s.cansr = cansr;
    s.vm = vm + dt * dvdt;
    s.t += dt;
    s.cicr.update(dvdt, s.t, dt);
    Ok(dvdt)
}

/// One full time step. On instability the offending state is left in `s`.
pub fn step_cell(s: &mut CellState, stepper: &ChannelStepper<f64>, p: &CellParams) -> Result<f64, CellError> {
    let c = compute_currents(s, p);
    let dvdt = advance(s, &c, stepper, p, None)?;
    match s.instability() {
        Some(kind) => Err(CellError::InstabilityDetected { t: s.t, kind }),
        None => Ok(dvdt),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Protocol {
    pub pulses: u32,
    /// ms
    pub cycle_length: f64,
    /// Record every `stride`-th step (the last state is always recorded).
    pub stride: usize,
    /// Bracket every channel step with a monotonic clock.
    pub timed: bool,
}

impl Protocol {
    pub fn new(pulses: u32, cycle_length: f64) -> Self {
        Protocol {
            pulses,
            cycle_length,
            stride: 1,
            timed: false,
        }
    }

    pub fn duration(&self) -> f64 {
        self.pulses.max(1) as f64 * self.cycle_length
    }

    fn validate(&self) -> Result<(), CellError> {
        if !(self.cycle_length > STIM_OFFSET) || !self.cycle_length.is_finite() {
            return Err(CellError::InvalidProtocol(format!(
                "cycle length must exceed {STIM_OFFSET} ms, got {}",
                self.cycle_length
            )));
        }
        if self.stride == 0 {
            return Err(CellError::InvalidProtocol("stride must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub vm: f64,
    pub ina: f64,
    pub mc: [f64; 9],
    pub cons_err: f64,
    pub nai: f64,
    pub ki: f64,
    pub cai: f64,
    pub cansr: f64,
    pub cajsr: f64,
}

impl TraceRow {
    pub fn new(s: &CellState, ina: f64) -> Self {
        TraceRow {
            t: s.t,
            vm: s.vm,
            ina,
            mc: s.mc.0,
            cons_err: s.mc.conservation_error(),
            nai: s.nai,
            ki: s.ki,
            cai: s.cai,
            cansr: s.cansr,
            cajsr: s.cajsr,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RunStatus {
    Completed,
    Unstable { t: f64, kind: Instability },
}

#[derive(Clone, Debug, Default)]
pub struct RunTiming {
    /// Sum of channel-step brackets (zero unless the protocol is timed).
    pub ina: Duration,
    pub total: Duration,
    pub steps: u64,
}

#[derive(Clone, Debug)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    pub status: RunStatus,
    /// max |Σu − 1| over every step, recorded or not.
    pub max_cons_err: f64,
    /// Time at which a concentration first went negative.
    pub unphysical_at: Option<f64>,
    /// Vm immediately before each stimulus after the first.
    pub pre_stimulus_vm: Vec<f64>,
    pub final_state: CellState,
    pub timing: RunTiming,
}

impl Trace {
    pub fn is_stable(&self) -> bool {
        self.status == RunStatus::Completed
    }

    pub fn column(&self, f: impl Fn(&TraceRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }
}

/// Runs the pacing protocol from the resting state.
pub fn simulate(protocol: &Protocol, stepper: &ChannelStepper<f64>, p: &CellParams) -> Result<Trace, CellError> {
    simulate_from(init_state(), protocol, stepper, p)
}

pub fn simulate_from(
    mut s: CellState,
    protocol: &Protocol,
    stepper: &ChannelStepper<f64>,
    p: &CellParams,
) -> Result<Trace, CellError> {
    protocol.validate()?;
    let start = Instant::now();
    let dt = stepper.dt();
    let t0 = s.t;
    let nsteps = (protocol.duration() / dt).round() as u64;
    let mut timer = protocol.timed.then(StepTimer::default);
    let mut rows = Vec::with_capacity((nsteps as usize / protocol.stride) + 2);
    let mut max_cons_err = 0.0_f64;
    let mut unphysical_at = None;
    let mut pre_stimulus_vm = Vec::new();
    let mut next_stim = 0u32;
    let mut status = RunStatus::Completed;

    for n in 0..=nsteps {
        s.t = t0 + n as f64 * dt;
        if next_stim < protocol.pulses
            && s.t - t0 >= STIM_OFFSET + next_stim as f64 * protocol.cycle_length - 1e-9
        {
            if next_stim > 0 {
                pre_stimulus_vm.push(s.vm);
            }
            apply_stimulus(&mut s);
            next_stim += 1;
        }
        max_cons_err = max_cons_err.max(s.mc.conservation_error().abs());
        if unphysical_at.is_none() && s.has_negative_concentration() {
            unphysical_at = Some(s.t);
        }
        let c = compute_currents(&s, p);
        if n % protocol.stride as u64 == 0 || n == nsteps {
            rows.push(TraceRow::new(&s, c.ina));
        }
        if n == nsteps {
            break;
        }
        advance(&mut s, &c, stepper, p, timer.as_mut())?;
        if let Some(kind) = s.instability() {
            status = RunStatus::Unstable { t: s.t, kind };
            let ina = compute_currents(&s, p).ina;
            rows.push(TraceRow::new(&s, ina));
            break;
        }
    }
    let timing = RunTiming {
        ina: timer.map(|t| t.elapsed).unwrap_or_default(),
        total: start.elapsed(),
        steps: nsteps,
    };
    Ok(Trace {
        rows,
        status,
        max_cons_err,
        unphysical_at,
        pre_stimulus_vm,
        final_state: s,
        timing,
    })
}
