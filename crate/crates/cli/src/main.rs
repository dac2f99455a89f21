use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use chanstep::bench::{bench, cases, BenchError, BenchSetup, DEFAULT_REPS};
use chanstep::cell::{simulate, CellError, CellParams, GateScheme, Protocol, RunStatus};
use chanstep::compare::{compare, CompareError};
use chanstep::error_analysis::error_trace;
use chanstep::io::{errors_table, format_f64, trace_table, CsvError, CsvTable};
use chanstep::solvers::{ChannelStepper, Method, MethodConfig, SolverError};
use chanstep::tables::{build_eigen_table, load_table, save_table, EigenTable, TableError, VoltageGrid};
use clap::{Args, Parser, Subcommand, ValueEnum};

const TABLE_ENV: &str = "CHANSTEP_TABLE";

#[derive(Parser)]
#[command(name = "chanstep", version, about = "Integrate a Markov-chain sodium channel inside a ventricular cell model")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug); RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the eigendecomposition table and write it to a file.
    Gentable(GentableArgs),
    /// Pace the cell and write the trace as CSV.
    Simulate(SimulateArgs),
    /// Per-column deviation of a trace from a reference trace.
    Compare(CompareArgs),
    /// Median wall times of channel stepping and whole runs.
    Bench(BenchArgs),
    /// Truncation-error coefficients along a recorded trace.
    Errors(ErrorsArgs),
}

#[derive(Args)]
struct GentableArgs {
    /// Grid spacing, mV.
    #[arg(long, default_value_t = 0.01)]
    dv: f64,
    #[arg(long, default_value_t = -100.0, allow_negative_numbers = true)]
    vmin: f64,
    #[arg(long, default_value_t = 70.0, allow_negative_numbers = true)]
    vmax: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Gates {
    Fe,
    Rl,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    method: Method,
    /// Time step, µs.
    #[arg(long)]
    dt: f64,
    /// Use voltage-grid lookups (FE, HOS); MRL is always tabulated.
    #[arg(long)]
    tabulated: bool,
    #[arg(long, default_value_t = 1)]
    pulses: u32,
    /// Cycle length, ms.
    #[arg(long, default_value_t = 1000.0)]
    cl: f64,
    /// Eigendecomposition table (required for MRL).
    #[arg(long, env = TABLE_ENV)]
    table: Option<PathBuf>,
    /// Output CSV; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record every n-th step.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Peak sodium conductance, mS/µF.
    #[arg(long)]
    gna: Option<f64>,
    #[arg(long, value_enum, default_value_t = Gates::Fe)]
    gate_scheme: Gates,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    test: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Variants: fe, fe-tab, mrl, hos, hos-tab.
    #[arg(long, value_delimiter = ',', default_value = "fe,fe-tab,mrl,hos,hos-tab", value_parser = parse_variant)]
    methods: Vec<(Method, bool)>,
    /// Time steps, µs.
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    dt_list: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pulses: u32,
    #[arg(long, default_value_t = 1000.0)]
    cl: f64,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    reps: usize,
    #[arg(long, env = TABLE_ENV)]
    table: Option<PathBuf>,
    #[arg(long)]
    gna: Option<f64>,
}

#[derive(Args)]
struct ErrorsArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Output CSV; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_variant(s: &str) -> Result<(Method, bool), String> {
    let lower = s.trim().to_ascii_lowercase();
    match lower.strip_suffix("-tab") {
        Some(m) => Ok((m.parse()?, true)),
        None => Ok((lower.parse()?, false)),
    }
}

enum Failure {
    Usage(String),
    Io(String),
    Unstable(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Io(_) => 3,
            Failure::Unstable(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Io(m) | Failure::Unstable(m) | Failure::Other(m) => m,
        }
    }
}

impl From<TableError> for Failure {
    fn from(e: TableError) -> Self {
        match e {
            TableError::Io(_)
            | TableError::BadMagic
            | TableError::UnsupportedVersion(_)
            | TableError::StateCount(_)
            | TableError::Truncated { .. }
            | TableError::TrailingBytes(_) => Failure::Io(e.to_string()),
            TableError::InvalidGrid(_) | TableError::InvalidStep(_) => Failure::Usage(e.to_string()),
            _ => Failure::Other(e.to_string()),
        }
    }
}

impl From<CsvError> for Failure {
    fn from(e: CsvError) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<CompareError> for Failure {
    fn from(e: CompareError) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Table(t) => t.into(),
            SolverError::InvalidStep(_) | SolverError::MissingTable(_) => Failure::Usage(e.to_string()),
            _ => Failure::Other(e.to_string()),
        }
    }
}

impl From<CellError> for Failure {
    fn from(e: CellError) -> Self {
        match e {
            CellError::Solver(s) => s.into(),
            CellError::InvalidProtocol(_) => Failure::Usage(e.to_string()),
            CellError::InstabilityDetected { .. } => Failure::Unstable(e.to_string()),
        }
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Solver(s) => s.into(),
            BenchError::Cell(c) => c.into(),
            BenchError::NoCases | BenchError::NoReps => Failure::Usage(e.to_string()),
        }
    }
}

fn params(gna: Option<f64>, gates: Gates) -> Result<CellParams, Failure> {
    let mut p = CellParams::default();
    if let Some(g) = gna {
        if !(g >= 0.0) || !g.is_finite() {
            return Err(Failure::Usage(format!("--gna must be a nonnegative number, got {g}")));
        }
        p.gna = g;
    }
    p.gate_scheme = match gates {
        Gates::Fe => GateScheme::ForwardEuler,
        Gates::Rl => GateScheme::RushLarsen,
    };
    Ok(p)
}

fn dt_ms(us: f64) -> Result<f64, Failure> {
    if us > 0.0 && us.is_finite() {
        Ok(us * 1e-3)
    } else {
        Err(Failure::Usage(format!("time step must be positive, got {us} µs")))
    }
}

/// Loads the table when any requested variant needs it.
fn table_for(path: Option<&Path>, needed: bool) -> Result<Option<EigenTable<f64>>, Failure> {
    match (path, needed) {
        (_, false) => Ok(None),
        (Some(p), true) => Ok(Some(load_table(p)?)),
        (None, true) => Err(Failure::Usage(format!(
            "MRL needs an eigendecomposition table: pass --table or set {TABLE_ENV} (see `chanstep gentable`)"
        ))),
    }
}

fn write_csv(table: &CsvTable, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(p) => table.write_path(p)?,
        None => table.write(io::stdout().lock())?,
    }
    Ok(())
}

fn cmd_gentable(a: GentableArgs) -> Result<(), Failure> {
    let grid = VoltageGrid::new(a.vmin, a.vmax, a.dv)?;
    let start = Instant::now();
    let table = build_eigen_table::<f64>(grid)?;
    let took = start.elapsed();
    save_table(&table, &a.out)?;
    let (worst, at) = table.worst_residual();
    println!(
        "entries {}  grid [{}, {}] mV step {}  worst relative residual {worst:.3e} at {at} mV  build {took:.3?}  -> {}",
        table.entries.len(),
        grid.vmin(),
        grid.vmax(),
        grid.dv(),
        a.out.display()
    );
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), Failure> {
    let cfg = MethodConfig::new(a.method, dt_ms(a.dt)?, a.tabulated)?;
    let table = table_for(a.table.as_deref(), a.method == Method::Mrl)?;
    let grid = table.as_ref().map_or_else(VoltageGrid::default, |t| t.grid);
    let stepper = ChannelStepper::new(&cfg, grid, table.as_ref())?;
    let protocol = Protocol {
        stride: a.stride,
        timed: true,
        ..Protocol::new(a.pulses, a.cl)
    };
    let trace = simulate(&protocol, &stepper, &params(a.gna, a.gate_scheme)?)?;
    write_csv(&trace_table(&trace), a.out.as_deref())?;

    let status = match trace.status {
        RunStatus::Completed => "stable".to_string(),
        RunStatus::Unstable { t, kind } => format!("unstable at t = {t} ms ({kind})"),
    };
    eprintln!(
        "{} dt {} µs: {status}; max |Σu−1| {:.3e}; INa {:.3} s, Total {:.3} s, {} steps",
        cfg.label(),
        a.dt,
        trace.max_cons_err,
        trace.timing.ina.as_secs_f64(),
        trace.timing.total.as_secs_f64(),
        trace.timing.steps
    );
    if let Some(t) = trace.unphysical_at {
        eprintln!("negative concentration first seen at t = {t} ms");
    }
    match trace.status {
        RunStatus::Completed => Ok(()),
        RunStatus::Unstable { .. } => Err(Failure::Unstable(format!("simulation {status}; partial trace written"))),
    }
}

fn cmd_compare(a: CompareArgs) -> Result<(), Failure> {
    let reference = CsvTable::read_path(&a.reference)?;
    let test = CsvTable::read_path(&a.test)?;
    let rep = compare(&reference, &test)?;
    let mut s = String::from("column,max_abs,at_ms,rms\n");
    for c in &rep.columns {
        let _ = writeln!(s, "{},{},{},{}", c.name, format_f64(c.max_abs), format_f64(c.at), format_f64(c.rms));
    }
    io::stdout().lock().write_all(s.as_bytes())?;
    eprintln!("{} aligned samples", rep.samples);
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<(), Failure> {
    let dts = a.dt_list.iter().map(|&d| dt_ms(d)).collect::<Result<Vec<_>, _>>()?;
    let list = cases(&a.methods, &dts)?;
    let table = table_for(a.table.as_deref(), list.iter().any(|c| c.method == Method::Mrl))?;
    let setup = BenchSetup {
        pulses: a.pulses,
        cycle_length: a.cl,
        reps: a.reps,
        grid: table.as_ref().map_or_else(VoltageGrid::default, |t| t.grid),
        eigen: table.as_ref(),
        params: params(a.gna, Gates::Fe)?,
    };
    let results = bench(&list, &setup)?;
    let mut out = io::stdout().lock();
    writeln!(out, "method,dt_us,ina_s,total_s,stable")?;
    for r in &results {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.case.label(),
            format_f64(r.case.dt * 1e3),
            format_f64(r.ina.as_secs_f64()),
            format_f64(r.total.as_secs_f64()),
            r.stable
        )?;
    }
    Ok(())
}

fn cmd_errors(a: ErrorsArgs) -> Result<(), Failure> {
    let trace = CsvTable::read_path(&a.trace)?;
    let t = trace.column("t_ms")?;
    let vm = trace.column("Vm_mV")?;
    if t.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Failure::Io("trace times must be strictly increasing".into()));
    }
    let e = error_trace(&t, &vm);
    write_csv(&errors_table(&e), a.out.as_deref())?;
    let ratio = |r: Option<f64>| r.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    eprintln!(
        "max errFE {:.4} (t = {} ms), errMRL {:.4} (t = {} ms), errHOS {:.4} (t = {} ms), errOS {:.4} (t = {} ms) ms⁻²",
        e.max.fe, e.argmax.fe, e.max.mrl, e.argmax.mrl, e.max.hos, e.argmax.hos, e.max.os, e.argmax.os
    );
    eprintln!(
        "min errFE/errMRL {}, min errFE/errHOS {}",
        ratio(e.min_fe_over_mrl),
        ratio(e.min_fe_over_hos)
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.cmd {
        Cmd::Gentable(a) => cmd_gentable(a),
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Compare(a) => cmd_compare(a),
        Cmd::Bench(a) => cmd_bench(a),
        Cmd::Errors(a) => cmd_errors(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
