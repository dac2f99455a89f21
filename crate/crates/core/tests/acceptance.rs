//! Acceptance criteria, run sequentially so the timing criterion is not
//! disturbed by concurrent work. One PASS/FAIL line per criterion, followed by
//! the individual checks.
//!
//! Criteria listed in `EXPECTED_RED` are unattainable with the model as
//! defined; they are evaluated in full and reported as FAIL. The binary exits
//! nonzero if any other criterion fails, or if an expected-red one starts
//! passing.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use chanstep::bench::{bench, cases, BenchSetup};
use chanstep::cell::{simulate, CellParams, Protocol, RunStatus, Trace, STIM_OFFSET, V_REST};
use chanstep::eig::{decompose, exp_reference, exp_via_eig};
use chanstep::error_analysis::error_trace;
use chanstep::model::{assemble_full, assemble_split, eval_rates, StateOccupancy, NSTATES};
use chanstep::solvers::hos::{hos_fast_high, hos_fast_low};
use chanstep::solvers::{ChannelStepper, Method, MethodConfig};
use chanstep::tables::{build_eigen_table, load_table, save_table, EigenTable, VoltageGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EXPECTED_RED: &[u32] = &[6, 7, 9];

struct Check {
    label: String,
    pass: bool,
    detail: String,
}

fn check(label: &str, pass: bool, detail: impl Into<String>) -> Check {
    Check {
        label: label.to_string(),
        pass,
        detail: detail.into(),
    }
}

fn within(x: f64, target: f64, rel: f64) -> bool {
    (x - target).abs() <= rel * target.abs()
}

fn budget(label: &str, took: Duration, limit: Duration) -> Check {
    check(label, took < limit, format!("{took:.2?} (limit {limit:?})"))
}

struct Ctx {
    grid: VoltageGrid,
    table: EigenTable<f64>,
    table_build: Duration,
    params: CellParams,
}

impl Ctx {
    fn stepper(&self, method: Method, dt_ms: f64, tabulated: bool) -> ChannelStepper<f64> {
        let cfg = MethodConfig::new(method, dt_ms, tabulated).unwrap();
        ChannelStepper::new(&cfg, self.grid, Some(&self.table)).unwrap()
    }

    fn run(&self, method: Method, dt_ms: f64, tabulated: bool, protocol: &Protocol) -> Trace {
        simulate(protocol, &self.stepper(method, dt_ms, tabulated), &self.params).unwrap()
    }
}

fn ap(pulses: u32) -> Protocol {
    Protocol {
        stride: 1,
        ..Protocol::new(pulses, 1000.0)
    }
}

fn random_probability(rng: &mut ChaCha8Rng) -> StateOccupancy<f64> {
    let raw: [f64; NSTATES] = std::array::from_fn(|_| rng.gen::<f64>());
    let s: f64 = raw.iter().sum();
    StateOccupancy(raw.map(|x| x / s))
}

fn criterion_1(_: &Ctx) -> Vec<Check> {
    let start = Instant::now();
    let (mut worst_sum, mut bitwise) = (0.0_f64, true);
    let n = 10_000;
    for k in 0..n {
        let vm = -100.0 + 170.0 * k as f64 / (n - 1) as f64;
        let r = eval_rates(vm).unwrap();
        let a = assemble_full(&r);
        let scale = a.max_abs();
        for s in a.column_sums() {
            worst_sum = worst_sum.max(s.abs() / scale);
        }
        let split = assemble_split(&r);
        let sum = (split.parts[0] + split.parts[1]) + split.parts[2];
        for i in 0..NSTATES {
            for j in 0..NSTATES {
                bitwise &= sum[(i, j)].to_bits() == a[(i, j)].to_bits();
            }
        }
    }
    let took = start.elapsed();
    vec![
        check("column sums", worst_sum <= 1e-13, format!("worst |Σcol|/max|A| = {worst_sum:.2e}")),
        check("A = A0 + A1 + A2 bitwise", bitwise, format!("{n} voltages")),
        budget("runtime", took, Duration::from_secs(1)),
    ]
}

fn criterion_2(ctx: &Ctx) -> Vec<Check> {
    let mut out = Vec::new();
    let (worst, at) = ctx.table.worst_residual();
    out.push(check(
        "reconstruction residual (dv = 0.01)",
        worst <= 1e-10,
        format!("{} entries, worst {worst:.2e} at {at} mV", ctx.table.entries.len()),
    ));
    out.push(budget("build dv = 0.01", ctx.table_build, Duration::from_secs(900)));

    let start = Instant::now();
    let coarse = build_eigen_table::<f64>(VoltageGrid::with_step(0.1).unwrap());
    let took = start.elapsed();
    let coarse_ok = coarse.as_ref().map(|t| t.worst_residual().0 <= 1e-10).unwrap_or(false);
    out.push(check(
        "reconstruction residual (dv = 0.1)",
        coarse_ok,
        format!("{} entries", coarse.as_ref().map(|t| t.entries.len()).unwrap_or(0)),
    ));
    out.push(budget("build dv = 0.1", took, Duration::from_secs(60)));

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_exp = 0.0_f64;
    for _ in 0..100 {
        let vm = rng.gen_range(-100.0..=70.0);
        let dt = rng.gen_range(0.0..=0.1);
        let a = assemble_full(&eval_rates(vm).unwrap());
        let e = exp_via_eig(&decompose(&a).unwrap(), dt).unwrap();
        let r = exp_reference(&a, dt).unwrap();
        worst_exp = worst_exp.max((e - r).max_abs());
    }
    out.push(check(
        "exp_via_eig vs exp_reference",
        worst_exp <= 1e-9,
        format!("100 samples, worst elementwise {worst_exp:.2e}"),
    ));

    let dir = tempfile::tempdir().unwrap();
    let path: PathBuf = dir.path().join("table.bin");
    save_table(&ctx.table, &path).unwrap();
    let back = load_table::<f64>(&path).unwrap();
    let mut a = Vec::new();
    let mut b = Vec::new();
    ctx.table.write_to(&mut a).unwrap();
    back.write_to(&mut b).unwrap();
    out.push(check(
        "save/load round trip",
        a == b && back == ctx.table,
        format!("{} bytes", std::fs::metadata(&path).unwrap().len()),
    ));
    out
}

fn criterion_3(_: &Ctx) -> Vec<Check> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut high, mut low, mut errors) = (0.0_f64, 0.0_f64, 0);
    for _ in 0..100 {
        let vm = rng.gen_range(-100.0..=70.0);
        let dt = rng.gen_range(0.0..=0.1);
        let u = random_probability(&mut rng);
        let r = eval_rates(vm).unwrap();
        let split = assemble_split(&r);
        let e0 = exp_reference(&split.parts[0], dt).unwrap();
        let e1 = exp_reference(&split.parts[1], dt).unwrap();
        match (hos_fast_high(&u, &r, dt), hos_fast_low(&u, &r, dt)) {
            (Ok(h), Ok(l)) => {
                high = high.max(h.max_abs_diff(&StateOccupancy(e0.mul_vec(&u.0))));
                low = low.max(l.max_abs_diff(&StateOccupancy(e1.mul_vec(&u.0))));
            }
            _ => errors += 1,
        }
    }
    vec![
        check("fast-high substep", high <= 1e-9 && errors == 0, format!("worst ∞-norm {high:.2e}")),
        check("fast-low substep", low <= 1e-9 && errors == 0, format!("worst ∞-norm {low:.2e}")),
        check("no degenerate samples", errors == 0, format!("{errors} failures")),
        budget("runtime", start.elapsed(), Duration::from_secs(10)),
    ]
}

fn criterion_4(ctx: &Ctx) -> Vec<Check> {
    let mut out = Vec::new();
    let proto = Protocol {
        stride: 100,
        ..Protocol::new(1, 1000.0)
    };
    let fe40 = ctx.run(Method::Fe, 0.040, false, &proto);
    out.push(check("FE 40 µs completes", fe40.is_stable(), format!("{:?}", fe40.status)));
    let fe44 = ctx.run(Method::Fe, 0.044, false, &proto);
    out.push(check(
        "FE 44 µs raises instability",
        matches!(fe44.status, RunStatus::Unstable { .. }),
        format!("{:?}", fe44.status),
    ));
    for (m, tab) in [(Method::Mrl, true), (Method::Hos, false), (Method::Hos, true)] {
        let label = MethodConfig::new(m, 0.1, tab).unwrap().label();
        let start = Instant::now();
        let tr = ctx.run(m, 0.1, tab, &proto);
        out.push(check(
            &format!("{label} 100 µs completes, |Σu−1| ≤ 1e-9"),
            tr.is_stable() && tr.max_cons_err <= 1e-9,
            format!("{:?}, max |Σu−1| = {:.2e}, {:.2?}", tr.status, tr.max_cons_err, start.elapsed()),
        ));
    }
    out
}

fn criterion_5(ctx: &Ctx) -> Vec<Check> {
    let start = Instant::now();
    let proto = Protocol {
        stride: 1,
        ..Protocol::new(1, STIM_OFFSET + 3.0)
    };
    let reference = ctx.run(Method::Fe, 0.001, false, &proto);
    let window = (STIM_OFFSET, STIM_OFFSET + 2.0);
    let dev = |m: Method| {
        let tr = ctx.run(m, 0.040, false, &proto);
        tr.rows
            .iter()
            .filter(|r| r.t >= window.0 - 1e-9 && r.t <= window.1 + 1e-9)
            .map(|r| {
                let k = (r.t / 0.001).round() as usize;
                (r.mc[0] - reference.rows[k].mc[0]).abs()
            })
            .fold(0.0, f64::max)
    };
    let (fe, mrl, hos) = (dev(Method::Fe), dev(Method::Mrl), dev(Method::Hos));
    vec![
        check("MRL@40µs < FE@40µs", mrl < fe, format!("max |ΔO| MRL {mrl:.4e} vs FE {fe:.4e}")),
        check("HOS@40µs < FE@40µs", hos < fe, format!("max |ΔO| HOS {hos:.4e} vs FE {fe:.4e}")),
        budget("runtime", start.elapsed(), Duration::from_secs(60)),
    ]
}

fn criterion_6(ctx: &Ctx) -> Vec<Check> {
    let start = Instant::now();
    let tr = ctx.run(Method::Fe, 0.010, false, &ap(1));
    let e = error_trace(&tr.column(|r| r.t), &tr.column(|r| r.vm));
    let band = |label: &str, x: f64, target: f64| {
        check(
            label,
            within(x, target, 0.2),
            format!("{x:.4} (target {target} ± 20%)"),
        )
    };
    vec![
        band("max errFE", e.max.fe, 2700.0),
        band("max errMRL", e.max.mrl, 118.0),
        band("max errHOS", e.max.hos, 125.0),
        band("max errOS", e.max.os, 19.0),
        band("min errFE/errMRL", e.min_fe_over_mrl.unwrap_or(f64::NAN), 3.2),
        band("min errFE/errHOS", e.min_fe_over_hos.unwrap_or(f64::NAN), 2.3),
        budget("runtime", start.elapsed(), Duration::from_secs(60)),
    ]
}

const EXTREME_DT: [f64; 10] = [0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 10.0, 12.0];

fn criterion_7(ctx: &Ctx) -> Vec<Check> {
    let start = Instant::now();
    let proto = Protocol {
        stride: usize::MAX,
        ..Protocol::new(1, 1000.0)
    };
    let hos_onset = EXTREME_DT.iter().find_map(|&dt| {
        let tr = ctx.run(Method::Hos, dt, false, &proto);
        tr.unphysical_at.map(|t| (dt, t, tr.status))
    });
    let mrl_onset = EXTREME_DT.iter().find_map(|&dt| match ctx.run(Method::Mrl, dt, true, &proto).status {
        RunStatus::Unstable { t, kind } => Some((dt, t, kind)),
        RunStatus::Completed => None,
    });
    let hos_ok = matches!(hos_onset, Some((dt, _, RunStatus::Completed)) if (1.0..=4.0).contains(&dt));
    let mrl_ok = matches!(mrl_onset, Some((dt, _, _)) if (4.0..=12.0).contains(&dt));
    vec![
        check(
            "HOS first unphysical in [1, 4] ms without blow-up",
            hos_ok,
            match hos_onset {
                Some((dt, t, s)) => format!("dt = {dt} ms: negative concentration at t = {t} ms, run {s:?}"),
                None => "never unphysical".into(),
            },
        ),
        check(
            "MRL first unstable in [4, 12] ms",
            mrl_ok,
            match mrl_onset {
                Some((dt, t, k)) => format!("dt = {dt} ms: {k} at t = {t} ms"),
                None => "never unstable".into(),
            },
        ),
        budget("runtime", start.elapsed(), Duration::from_secs(60)),
    ]
}

fn criterion_8(ctx: &Ctx) -> Vec<Check> {
    let start = Instant::now();
    let setup = BenchSetup {
        pulses: 10,
        cycle_length: 1000.0,
        reps: 6,
        grid: ctx.grid,
        eigen: Some(&ctx.table),
        params: ctx.params,
    };
    let variants = [
        (Method::Fe, true),
        (Method::Mrl, true),
        (Method::Hos, true),
        (Method::Fe, false),
        (Method::Hos, false),
    ];
    let res = bench(&cases(&variants, &[0.010]).unwrap(), &setup).unwrap();
    let t: Vec<f64> = res.iter().map(|r| r.ina.as_secs_f64()).collect();
    let (fe_tab, mrl, hos_tab, fe, hos) = (t[0], t[1], t[2], t[3], t[4]);
    let table = res
        .iter()
        .map(|r| format!("{} {:.3}s/{:.3}s", r.case.label(), r.ina.as_secs_f64(), r.total.as_secs_f64()))
        .collect::<Vec<_>>()
        .join(", ");
    println!("    INa/Total medians: {table}");
    let ratio = mrl / hos_tab;
    vec![
        check("FE(tab.) ≤ MRL", fe_tab <= mrl, format!("{fe_tab:.4} vs {mrl:.4} s")),
        check("MRL ≈ HOS(tab.) (ratio in [0.5, 2])", (0.5..=2.0).contains(&ratio), format!("{ratio:.3}")),
        check("MRL, HOS(tab.) < FE", mrl.max(hos_tab) < fe, format!("{:.4} vs {fe:.4} s", mrl.max(hos_tab))),
        check("FE < HOS", fe < hos, format!("{fe:.4} vs {hos:.4} s")),
        check("FE(tab.) < FE", fe_tab < fe, format!("{fe_tab:.4} vs {fe:.4} s")),
        check("HOS(tab.) < HOS", hos_tab < hos, format!("{hos_tab:.4} vs {hos:.4} s")),
        check("all runs stable", res.iter().all(|r| r.stable), ""),
        budget("runtime", start.elapsed(), Duration::from_secs(600)),
    ]
}

fn criterion_9(ctx: &Ctx) -> Vec<Check> {
    let start = Instant::now();
    let proto = Protocol {
        stride: 100,
        ..Protocol::new(4, 1000.0)
    };
    let mut out = Vec::new();
    for m in [Method::Mrl, Method::Hos] {
        let tr = ctx.run(m, 0.1, false, &proto);
        let name = m.name().to_ascii_uppercase();
        out.push(check(
            &format!("{name} 100 µs |Σu−1| ≤ 1e-8"),
            tr.is_stable() && tr.max_cons_err <= 1e-8,
            format!("{:?}, max |Σu−1| = {:.2e}", tr.status, tr.max_cons_err),
        ));
        let worst = tr.pre_stimulus_vm.iter().map(|v| (v - V_REST).abs()).fold(0.0, f64::max);
        out.push(check(
            &format!("{name} 100 µs Vm within 2 mV of {V_REST} between pulses"),
            tr.pre_stimulus_vm.len() == 3 && worst <= 2.0,
            format!("pre-stimulus Vm {:?}", tr.pre_stimulus_vm),
        ));
    }
    out.push(budget("runtime", start.elapsed(), Duration::from_secs(60)));
    out
}

type Criterion = fn(&Ctx) -> Vec<Check>;

fn main() {
    let filter: Vec<u32> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria: [(u32, &str, Criterion); 9] = [
        (1, "generator structure", criterion_1),
        (2, "eigen/table pipeline", criterion_2),
        (3, "analytic substep oracle", criterion_3),
        (4, "stability reproduction", criterion_4),
        (5, "accuracy ordering", criterion_5),
        (6, "error coefficients", criterion_6),
        (7, "extreme-dt behavior", criterion_7),
        (8, "benchmark ordering", criterion_8),
        (9, "long-run conservation", criterion_9),
    ];

    let grid = VoltageGrid::default();
    let start = Instant::now();
    let table = build_eigen_table::<f64>(grid).expect("default table");
    let ctx = Ctx {
        grid,
        table,
        table_build: start.elapsed(),
        params: CellParams::default(),
    };

    let mut unexpected = Vec::new();
    for (id, name, f) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let checks = f(&ctx);
        let pass = checks.iter().all(|c| c.pass);
        let red = EXPECTED_RED.contains(&id);
        let note = match (pass, red) {
            (false, true) => " (expected)",
            (true, true) => " (expected red, now passing)",
            _ => "",
        };
        println!("criterion {id} {name}: {}{note}", if pass { "PASS" } else { "FAIL" });
        for c in &checks {
            println!("    [{}] {}: {}", if c.pass { "ok" } else { "FAIL" }, c.label, c.detail);
        }
        if pass == red {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
