//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage, 3 I/O, 4 invalid scenario, 5 numerical
//! instability, 6 an audit check failed.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::controllers::{validate_saturation, Pair};
use crate::error::Error;
use crate::homogeneity::{audit, HomogeneitySpec};
use crate::scalar_ops::Regime;
use crate::scenario::{load_scenario, Scenario};
use crate::sim::{convergence_time, run, run_batch, write_atomic, SimTrace};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;
pub const EXIT_UNSTABLE: i32 = 5;
pub const EXIT_CHECK_FAILED: i32 = 6;

#[derive(Debug, Parser)]
#[command(name = "fts-teleop", version, about = "Finite-time teleoperation controller simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate scenarios and report settling times.
    Simulate(Common),
    /// Run a scenario with its weights and with r1 = r2 side by side.
    Compare(Common),
    /// Homogeneity degree check and vanishing sweep.
    Audit(Common),
    /// Validate gains and saturation budgets without simulating.
    Validate(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario files.
    configs: Vec<PathBuf>,
    /// Scenario file (repeatable; same as a positional argument).
    #[arg(long = "config", value_name = "PATH")]
    config_flags: Vec<PathBuf>,
    /// Output directory for traces and reports.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Error-norm tolerance for settling, rad.
    #[arg(long)]
    tol: Option<f64>,
    /// Override the integration step, s.
    #[arg(long)]
    dt: Option<f64>,
    /// Sphere-sampling seed for the audit.
    #[arg(long)]
    seed: Option<u64>,
    /// Constant channel delay, s (experimental; outside every guarantee).
    #[arg(long)]
    delay: Option<f64>,
}

impl Common {
    fn paths(&self) -> Vec<PathBuf> {
        self.configs.iter().chain(&self.config_flags).cloned().collect()
    }

    fn load(&self, err: &mut dyn Write) -> Result<Vec<Scenario>, Error> {
        let paths = self.paths();
        if paths.is_empty() {
            return Err(Error::invalid("no scenario given; pass a path or --config <path>"));
        }
        let mut out = Vec::new();
        for p in paths {
            let mut s = load_scenario(&p)?;
            if let Some(dt) = self.dt {
                s = s.with_dt(dt)?;
            }
            if let Some(d) = self.delay {
                let _ = writeln!(err, "warning: channel delay {d} s is experimental and voids the stability guarantees");
                s = s.with_delay(d)?;
            }
            if let Some(t) = self.tol {
                if !(t > 0.0) {
                    return Err(Error::invalid(format!("--tol must be positive, got {t}")));
                }
                s.tol = t;
            }
            if let Some(seed) = self.seed {
                s.audit.seed = seed;
            }
            out.push(s);
        }
        Ok(out)
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } => EXIT_IO,
        Error::Unstable { .. } | Error::SingularInertia { .. } => EXIT_UNSTABLE,
        _ => EXIT_CONFIG,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_command<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Simulate(c) => simulate(c, out, err),
        Command::Compare(c) => compare(c, out, err),
        Command::Audit(c) => audit_cmd(c, out, err),
        Command::Validate(c) => validate(c, out, err),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn describe_t(t: Option<f64>) -> String {
    t.map_or_else(|| "not reached".to_string(), |t| format!("{t:.3} s"))
}

fn trace_path(out_dir: &Path, s: &Scenario, suffix: &str) -> PathBuf {
    match (&s.output.trace, suffix.is_empty()) {
        (Some(p), true) => out_dir.join(p),
        _ => out_dir.join(format!("{}{}_trace.csv", s.name, suffix)),
    }
}

fn report_run(out: &mut dyn Write, s: &Scenario, trace: &SimTrace, path: &Path) -> Result<(), Error> {
    let w = |e: std::io::Error| Error::Io { path: PathBuf::from("<stdout>"), source: e };
    let o = &s.options;
    writeln!(
        out,
        "scenario {}: {} ({}, dt = {:e} s, horizon {} s)",
        s.name,
        s.system.controller.variant(),
        o.integrator,
        o.dt,
        o.horizon
    )
    .map_err(w)?;
    let t = convergence_time(trace, s.tol)?;
    match t {
        Some(t) => writeln!(out, "t* ≈ {t:.3} s (error norm stays below {:e} rad)", s.tol),
        None => writeln!(out, "t* not reached within the horizon (tol {:e} rad)", s.tol),
    }
    .map_err(w)?;
    let (first, last) = (&trace.samples()[0], trace.last().expect("non-empty"));
    writeln!(
        out,
        "final error {:.3e} rad, H(0) = {:.6e} J, H(end) = {:.6e} J",
        last.err_norm, first.energy, last.energy
    )
    .map_err(w)?;
    for (side, params) in [("local", &s.system.params.local), ("remote", &s.system.params.remote)] {
        let peak = trace.samples().iter().fold(vec![0.0_f64; trace.dof()], |mut acc, smp| {
            let tau = if side == "local" { &smp.tau.local } else { &smp.tau.remote };
            for (a, t) in acc.iter_mut().zip(tau.iter()) {
                *a = a.max(t.abs());
            }
            acc
        });
        let limits = params
            .torque_limits()
            .map(|l| {
                let ok = peak.iter().zip(l.iter()).all(|(p, l)| p < l);
                format!(" (limits {:?}: {})", l.as_slice(), if ok { "respected" } else { "EXCEEDED" })
            })
            .unwrap_or_default();
        writeln!(out, "peak |tau_{side}| {peak:.4?}{limits}").map_err(w)?;
    }
    writeln!(out, "trace written to {}", path.display()).map_err(w)?;
    Ok(())
}

fn simulate(c: &Common, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Error> {
    let scenarios = c.load(err)?;
    let jobs: Vec<_> = scenarios
        .iter()
        .map(|s| (s.system.clone(), s.initial.clone(), s.options.clone()))
        .collect();
    let started = Instant::now();
    let traces = run_batch(&jobs);
    let elapsed = started.elapsed();
    let mut code = EXIT_OK;
    for (s, tr) in scenarios.iter().zip(traces) {
        match tr {
            Ok(tr) => {
                let path = trace_path(&c.out, s, "");
                tr.write_csv(&path)?;
                report_run(out, s, &tr, &path)?;
            }
            Err(e) => {
                let _ = writeln!(err, "error in {}: {e}", s.name);
                code = code.max(exit_code(&e));
            }
        }
    }
    let _ = writeln!(out, "wall-clock {:.2} s", elapsed.as_secs_f64());
    Ok(code)
}

fn compare(c: &Common, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Error> {
    let mut code = EXIT_OK;
    for s in c.load(err)? {
        let asym = s.asymptotic()?;
        let traces = run_batch(&[
            (s.system.clone(), s.initial.clone(), s.options.clone()),
            (asym.system.clone(), asym.initial.clone(), asym.options.clone()),
        ]);
        let mut times = Vec::new();
        for (scen, tr, suffix) in [(&s, &traces[0], "_ft"), (&asym, &traces[1], "_asym")] {
            match tr {
                Ok(tr) => {
                    tr.write_csv(&trace_path(&c.out, scen, suffix))?;
                    times.push(convergence_time(tr, s.tol)?);
                }
                Err(e) => return Err(Error::Unstable { time: f64::NAN, detail: format!("{}: {e}", scen.name) }),
            }
        }
        let w = s.system.controller.weights();
        let regime = match w.regime() {
            Regime::FiniteTime => "finite-time",
            Regime::Asymptotic => "asymptotic (already r1 = r2)",
        };
        let _ = writeln!(out, "scenario {} ({}), tol {:e} rad", s.name, s.system.controller.variant(), s.tol);
        let _ = writeln!(out, "  {:<30} r1 = {:<5} r2 = {:<5} t* = {}", regime, w.r1(), w.r2(), describe_t(times[0]));
        let _ = writeln!(out, "  {:<30} r1 = {:<5} r2 = {:<5} t* = {}", "asymptotic", w.r2(), w.r2(), describe_t(times[1]));
        let faster = match (times[0], times[1]) {
            (Some(a), Some(b)) => a < b,
            (Some(_), None) => true,
            _ => false,
        };
        let _ = writeln!(out, "  finite-time settles faster: {}", if faster { "yes" } else { "no" });
        if !faster {
            code = EXIT_CHECK_FAILED;
        }
    }
    Ok(code)
}

fn audit_cmd(c: &Common, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Error> {
    let mut code = EXIT_OK;
    for s in c.load(err)? {
        let q_c = match &s.audit.q_c {
            Some(q) => nalgebra::DVector::from_row_slice(q),
            None => {
                let tr = run(&s.system, &s.initial, &s.options)?;
                if convergence_time(&tr, s.tol)?.is_none() {
                    let _ = writeln!(err, "warning: {} did not settle; using its final pose as q_c", s.name);
                }
                let last = tr.last().expect("non-empty");
                (&last.q.local + &last.q.remote) * 0.5
            }
        };
        let spec = HomogeneitySpec {
            samples: s.audit.samples,
            seed: s.audit.seed,
            ..HomogeneitySpec::for_config(&s.system.controller)
        };
        let report = audit(&s.system.controller, s.system.params.as_ref(), &q_c, &spec)?;
        let path = c
            .out
            .join(s.output.audit.clone().unwrap_or_else(|| PathBuf::from(format!("{}_audit.csv", s.name))));
        write_atomic(&path, report.to_csv().as_bytes())?;
        let _ = writeln!(out, "scenario {}: q_c = {:.6?}", s.name, q_c.as_slice());
        let _ = writeln!(out, "{report}");
        let _ = writeln!(out, "sweep written to {}", path.display());
        let ok = report.degree_ok() && report.negative_degree() && report.vanishing_ok() && report.origin_norm == 0.0;
        if !ok {
            code = EXIT_CHECK_FAILED;
        }
    }
    Ok(code)
}

fn validate(c: &Common, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Error> {
    for s in c.load(err)? {
        let ctrl = &s.system.controller;
        let w = ctrl.weights();
        let _ = writeln!(out, "scenario {}: {}", s.name, ctrl.variant());
        let _ = writeln!(
            out,
            "  weights r1 = {}, r2 = {} ({:?}); p_U = {:.6}, p_F = {:.6}; degree {}",
            w.r1(),
            w.r2(),
            w.regime(),
            ctrl.p_u(),
            ctrl.p_f(),
            w.degree()
        );
        for (side, p) in [("local", &s.system.params.local), ("remote", &s.system.params.remote)] {
            let b = p.bounds();
            let _ = writeln!(
                out,
                "  {side} model: m1 = {:.6}, m2 = {:.6}, L_c = {:.6}, g = {:.6?}",
                b.m1,
                b.m2,
                b.coriolis,
                b.gravity.as_slice()
            );
        }
        let report = validate_saturation(ctrl, Pair::new(&s.system.params.local, &s.system.params.remote));
        if ctrl.variant().bounded() || report.note.is_some() {
            let _ = writeln!(out, "{report}");
        }
        let _ = writeln!(out, "  configuration valid");
    }
    Ok(EXIT_OK)
}
