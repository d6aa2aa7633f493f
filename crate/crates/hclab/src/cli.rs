//! Command-line orchestration: solves, the verification suite, and the
//! dense-vs-FFT benchmark, each emitting machine-readable reports.
//!
//! Exit codes: 0 success, 1 configuration error, 2 non-convergence (partial
//! outputs still written), 3 verification or benchmark failure.

use crate::config::RunConfig;
use crate::error::Error;
use crate::functionals;
use crate::grid::RadialField;
use crate::solver::{self, SolveResult};
use crate::verify::{self, random_bump_field, Suite};
use crate::Result;
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct GridBlock {
    tmin: f64,
    tmax: f64,
    n: usize,
}

#[derive(Serialize)]
struct SolveReport<'a> {
    schema_version: u32,
    n: u32,
    alpha: f64,
    theta: f64,
    grid: GridBlock,
    s_theta: f64,
    iterations: usize,
    residual: f64,
    converged: bool,
    concentration_alarm: bool,
    diag: &'a solver::CompactnessDiag,
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    schema_version: u32,
    suite: &'a str,
    all_pass: bool,
    checks: &'a [verify::CheckRecord],
}

#[derive(Serialize)]
struct BenchEntry {
    n: usize,
    dense_ms: Option<f64>,
    fft_ms: f64,
    max_rel_err: f64,
    dense_skipped: bool,
}

#[derive(Serialize)]
struct BenchReport {
    schema_version: u32,
    entries: Vec<BenchEntry>,
}

fn resolve_outdir(cfg: &RunConfig, out: Option<&Path>) -> PathBuf {
    if let Some(p) = out {
        return p.to_path_buf();
    }
    if let Some(p) = &cfg.output_dir {
        return p.clone();
    }
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    PathBuf::from(format!("./out/{stamp}"))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_vec_pretty(value)?)?;
    Ok(())
}

fn write_solve_outputs(
    cfg: &RunConfig,
    dir: &Path,
    res: &SolveResult,
    params: &crate::ProblemParams,
) -> Result<()> {
    fs::create_dir_all(dir)?;

    let mut csv = Vec::new();
    res.field.write_csv(&mut csv)?;
    fs::write(dir.join("solution.csv"), csv)?;

    let mut trace = String::from("iter,rayleigh,residual\n");
    for row in &res.trace {
        trace.push_str(&format!("{},{:.16e},{:.16e}\n", row.iter, row.rayleigh, row.residual));
    }
    fs::write(dir.join("trace.csv"), trace)?;

    let report = SolveReport {
        schema_version: SCHEMA_VERSION,
        n: cfg.n_dim,
        alpha: cfg.alpha,
        theta: cfg.theta,
        grid: GridBlock {
            tmin: cfg.t_min,
            tmax: cfg.t_max,
            n: cfg.grid_n,
        },
        s_theta: res.s_theta,
        iterations: res.iterations,
        residual: res.residual,
        converged: res.converged,
        concentration_alarm: res.concentration_alarm,
        diag: &res.diag,
    };
    write_json(dir, "result.json", &report)?;

    // profile diagnostics; skipped (with a note) when the field is not positive
    let (iw, ow) = verify::default_fit_windows(res.field.len());
    match verify::decay_fit(&res.field, iw, ow) {
        Ok(fit) => write_json(dir, "decay_fit.json", &fit)?,
        Err(e) => log::warn!("decay fit skipped: {e}"),
    }
    match verify::bound_check(params, &res.field) {
        Ok(cert) => write_json(dir, "bound_certificate.json", &cert)?,
        Err(e) => log::warn!("bound certificate skipped: {e}"),
    }

    // (r, u/m(r)) ratio profile for plotting
    let m = verify::model_profile(params, res.field.grid());
    let mut ratio = String::from("r,ratio\n");
    for i in 0..res.field.len() {
        ratio.push_str(&format!(
            "{:.16e},{:.16e}\n",
            res.field.grid().r()[i],
            res.field.values()[i] / m.values()[i]
        ));
    }
    fs::write(dir.join("profile_ratio.csv"), ratio)?;
    Ok(())
}

/// `hclab solve`: minimize at the configured ϑ, write the solution bundle.
pub fn cmd_solve(cfg: &RunConfig, out: Option<&Path>) -> i32 {
    match run_solve(cfg, out) {
        Ok(true) => 0,
        Ok(false) => 2,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn run_solve(cfg: &RunConfig, out: Option<&Path>) -> Result<bool> {
    let params = cfg.params()?;
    let grid = cfg.grid(&params)?;
    let op = crate::RieszOperator::new(&params, &grid)?;
    let init = solver::default_init(&params, &grid);
    let res = solver::minimize(&params, &op, &init, &cfg.solver)?;
    let dir = resolve_outdir(cfg, out);
    write_solve_outputs(cfg, &dir, &res, &params)?;
    println!(
        "solve: theta={} s_theta={:.10} iterations={} residual={:.3e} converged={} -> {}",
        cfg.theta,
        res.s_theta,
        res.iterations,
        res.residual,
        res.converged,
        dir.display()
    );
    Ok(res.converged)
}

/// `hclab verify`: run a check suite and write the aggregate report.
pub fn cmd_verify(cfg: &RunConfig, suite: &str, out: Option<&Path>) -> i32 {
    let suite_sel: Suite = match suite.parse() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match run_verify(cfg, suite_sel, suite, out) {
        Ok(true) => 0,
        Ok(false) => 3,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn run_verify(cfg: &RunConfig, suite: Suite, suite_name: &str, out: Option<&Path>) -> Result<bool> {
    let params = cfg.params()?;
    let grid = cfg.grid(&params)?;
    let op = crate::RieszOperator::new(&params, &grid)?;
    let checks = verify::run_suite(&params, &grid, &op, &cfg.solver, suite)?;
    let all_pass = checks.iter().all(|c| c.pass);
    for c in &checks {
        println!(
            "{} {}: value {:.3e} tolerance {:.3e} ({})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance,
            c.inputs
        );
    }
    let dir = resolve_outdir(cfg, out);
    fs::create_dir_all(&dir)?;
    write_json(
        &dir,
        "verify_report.json",
        &VerifyReport {
            schema_version: SCHEMA_VERSION,
            suite: suite_name,
            all_pass,
            checks: &checks,
        },
    )?;
    if !all_pass {
        let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        eprintln!("verify: {} check(s) failed: {}", failed.len(), failed.join(", "));
    }
    Ok(all_pass)
}

const BENCH_SIZES: [usize; 3] = [1024, 4096, 16384];
/// Dense applies are matrix-free, so the capacity limit is about time, not
/// memory; above this the dense column is skipped and only the FFT is timed.
const DENSE_MAX_N: usize = 32768;
const BENCH_MISMATCH_TOL: f64 = 1e-7;

fn time_ms<F: FnMut()>(mut f: F) -> f64 {
    // one warmup, then best of three
    f();
    let mut best = f64::INFINITY;
    for _ in 0..3 {
        let t0 = Instant::now();
        f();
        best = best.min(t0.elapsed().as_secs_f64() * 1e3);
    }
    best
}

/// `hclab bench`: time dense vs FFT applies, audit their agreement.
pub fn cmd_bench(cfg: &RunConfig, out: Option<&Path>) -> i32 {
    match run_bench(cfg, out) {
        Ok(true) => 0,
        Ok(false) => 3,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn run_bench(cfg: &RunConfig, out: Option<&Path>) -> Result<bool> {
    let params = cfg.params()?;
    let mut entries = Vec::new();
    let mut all_ok = true;
    for &n in &BENCH_SIZES {
        let grid = crate::LogGrid::new(&params, cfg.t_min, cfg.t_max, n)?;
        let op = crate::RieszOperator::new(&params, &grid)?;
        let field = random_bump_field(&grid, cfg.solver.seed, true);
        let fft_ms = time_ms(|| {
            let _ = op.apply_fft(&field).unwrap();
        });
        let (dense_ms, max_rel_err, skipped) = if n <= DENSE_MAX_N {
            let dense_ms = time_ms(|| {
                let _ = op.apply_dense(&field).unwrap();
            });
            let d = op.apply_dense(&field)?;
            let q = op.apply_fft(&field)?;
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..n {
                let w = grid.quad_w()[i];
                num += w * (d.values()[i] - q.values()[i]).powi(2);
                den += w * d.values()[i].powi(2);
            }
            let err = (num / den.max(1e-300)).sqrt();
            (Some(dense_ms), err, false)
        } else {
            (None, 0.0, true)
        };
        if max_rel_err > BENCH_MISMATCH_TOL {
            all_ok = false;
        }
        println!(
            "bench n={n}: dense {} fft {:.3} ms, rel err {:.3e}{}",
            dense_ms.map_or("skipped".into(), |m| format!("{m:.3} ms,")),
            fft_ms,
            max_rel_err,
            if skipped { " (dense skipped)" } else { "" }
        );
        entries.push(BenchEntry {
            n,
            dense_ms,
            fft_ms,
            max_rel_err,
            dense_skipped: skipped,
        });
    }
    let dir = resolve_outdir(cfg, out);
    fs::create_dir_all(&dir)?;
    write_json(
        &dir,
        "bench.json",
        &BenchReport {
            schema_version: SCHEMA_VERSION,
            entries,
        },
    )?;
    if !all_ok {
        eprintln!("bench: dense/FFT mismatch beyond {BENCH_MISMATCH_TOL:e}");
    }
    Ok(all_ok)
}

/// Load a config file, mapping every failure to the config exit code.
pub fn load_config(path: &Path) -> std::result::Result<RunConfig, i32> {
    RunConfig::load(path).map_err(|e| {
        eprintln!("error: {e}");
        1
    })
}

/// Write a field to CSV at `path` (shared by tests and tooling).
pub fn write_field_csv(field: &RadialField, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    field.write_csv(&mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Energy report of a CSV field against a config (tooling helper).
pub fn energy_of_csv(cfg: &RunConfig, csv_path: &Path) -> Result<functionals::EnergyReport> {
    let params = cfg.params()?;
    let grid = cfg.grid(&params)?;
    let op = crate::RieszOperator::new(&params, &grid)?;
    let file = fs::File::open(csv_path)?;
    let field = RadialField::read_csv(&grid, std::io::BufReader::new(file))?;
    functionals::rayleigh(&params, &op, &field)
}

impl From<Error> for std::io::Error {
    fn from(e: Error) -> Self {
        std::io::Error::other(e.to_string())
    }
}
