//! `cpsim`: run scenarios, benchmark the coupling methods and compare reports.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use cpsim_core::orchestrate::{
    bench, compare_reports, cosim_simulate, max_spdc_arrival_gap_ns, self_consistent_simulate, write_agreement_csv,
    write_bench_csv, BenchResult, OrchestrateError, RunOutput, RunReport, TimeBase,
};
use cpsim_core::scenario::{ConfigError, Method, Scenario, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "cpsim",
    version,
    about = "Grid and PMU network simulation with self-consistent and co-simulation coupling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// self_consistent, cosim or both; defaults to the scenario's method.
        #[arg(long)]
        method: Option<Method>,
        /// Output directory; defaults to the scenario's output.dir, relative
        /// to the working directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epsilon_ms: Option<f64>,
        #[arg(long)]
        min_net_sync_ms: Option<f64>,
    },
    /// Time both methods at several precisions.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "10,1")]
        precisions: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        /// CSV destination; defaults to `<output.dir>/bench.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare per-load command arrival times of two run reports.
    Compare {
        /// report.json, or a directory containing one.
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 0.02)]
        tol_ms: f64,
        #[arg(long, default_value = "exact")]
        a_times: TimeBase,
        #[arg(long, default_value = "exact")]
        b_times: TimeBase,
        /// Also write the per-load deltas as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const EXIT_TOLERANCE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;
const EXIT_FAULT: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<OrchestrateError>() {
            return match e {
                OrchestrateError::Config(_) | OrchestrateError::ScenarioMismatch(_) | OrchestrateError::Io { .. } => {
                    EXIT_CONFIG
                }
                OrchestrateError::NotConverged { .. } => EXIT_NOT_CONVERGED,
                _ => EXIT_FAULT,
            };
        }
    }
    EXIT_FAULT
}

fn method_dir(m: Method) -> &'static str {
    match m {
        Method::SelfConsistent => "self_consistent",
        Method::Cosim => "cosim",
        Method::Both => "both",
    }
}

fn load(config: &Path, edit: impl FnOnce(&mut ScenarioConfig)) -> Result<Scenario> {
    let mut cfg = ScenarioConfig::from_path(config)?;
    edit(&mut cfg);
    let base = config.parent().unwrap_or(Path::new("."));
    Ok(Scenario::resolve(cfg, base)?)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn summarize(out: &RunOutput, dir: &Path) {
    let r = &out.report;
    let detail = match (&r.convergence, r.sync_steps) {
        (Some(c), _) => {
            let norms: Vec<String> = c.norms_ms.iter().map(|n| format!("{n:.6}")).collect();
            format!("{} iteration(s), norms [{}] ms", c.iterations, norms.join(", "))
        }
        (None, Some(s)) => format!("{s} sync steps"),
        (None, None) => String::new(),
    };
    let crossing = r.grid.crossing_49hz_after_s.map_or("none".to_string(), |s| format!("{s:.3} s"));
    println!(
        "{}: {detail}; {} trigger(s), {} command(s); COI nadir {:.3} Hz, 49 Hz crossing {crossing}; {:.0} ms -> {}",
        method_dir(r.method),
        r.triggers.len(),
        r.arrivals.len(),
        r.grid.coi_nadir_hz,
        out.timings.total_ms,
        dir.display()
    );
}

fn run(
    config: &Path,
    method: Option<Method>,
    out: Option<PathBuf>,
    epsilon_ms: Option<f64>,
    min_net_sync_ms: Option<f64>,
) -> Result<()> {
    let sc = load(config, |cfg| {
        if let Some(m) = method {
            cfg.method = m;
        }
        if let Some(e) = epsilon_ms {
            cfg.self_consistent.epsilon_ms = e;
        }
        if let Some(s) = min_net_sync_ms {
            cfg.cosim.min_net_sync_ms = s;
        }
    })?;
    let out = out.unwrap_or_else(|| sc.config.output.dir.clone());
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    std::fs::write(out.join("scenario.toml"), sc.config.to_toml())
        .with_context(|| format!("writing {}", out.join("scenario.toml").display()))?;
    let methods = match sc.config.method {
        Method::Both => vec![Method::SelfConsistent, Method::Cosim],
        m => vec![m],
    };
    let mut outputs = Vec::new();
    for m in methods {
        let output = match m {
            Method::SelfConsistent => {
                self_consistent_simulate(&sc, sc.epsilon_ms(), sc.config.self_consistent.max_iter)?
            }
            _ => cosim_simulate(&sc, sc.min_net_sync)?,
        };
        let dir = out.join(method_dir(m));
        output.write_artifacts(&dir).with_context(|| format!("writing artifacts to {}", dir.display()))?;
        summarize(&output, &dir);
        outputs.push(output);
    }
    if let Some(co) = outputs.iter().find(|o| o.report.method == Method::Cosim) {
        let q = compare_reports(
            &co.report,
            TimeBase::Exact,
            &co.report,
            TimeBase::Perceived,
            sc.min_net_sync.as_millis_f64(),
        )?;
        let mut w = create(&out.join("quantization.csv"))?;
        write_agreement_csv(&q, &mut w)?;
        w.flush()?;
        if let Some(lo) = q.deltas.iter().map(|d| d.delta_ms).reduce(f64::min) {
            println!("cosim perceived - exact: [{lo:.6}, {:.6}] ms", q.max_abs_delta_ms);
        }
    }
    if let [a, b] = outputs.as_slice() {
        let c = compare_reports(&a.report, TimeBase::Exact, &b.report, TimeBase::Exact, 0.02)?;
        let mut w = create(&out.join("agreement.csv"))?;
        write_agreement_csv(&c, &mut w)?;
        w.flush()?;
        let gap = max_spdc_arrival_gap_ns(&a.spdc_arrivals, &b.spdc_arrivals)?;
        println!(
            "agreement: {} command(s), max |delta| {:.6} ms; SPDC arrivals max gap {gap} ns",
            c.deltas.len(),
            c.max_abs_delta_ms
        );
    }
    Ok(())
}

fn print_bench(rows: &[BenchResult]) {
    println!("{:<16} {:>12} {:>14} {:>8}", "method", "precision_ms", "wall_clock_s", "count");
    for r in rows {
        let flag = if r.low_confidence { "  (low confidence)" } else { "" };
        println!("{:<16} {:>12} {:>14.4} {:>8}{flag}", method_dir(r.method), r.precision_ms, r.wall_clock_s, r.count);
    }
    for pair in rows.chunks(2) {
        if let [s, c] = pair {
            println!(
                "precision {} ms: cosim / self-consistent = {:.2}",
                s.precision_ms,
                c.wall_clock_s / s.wall_clock_s
            );
        }
    }
}

fn report_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("report.json")
    } else {
        p.to_path_buf()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, method, out, epsilon_ms, min_net_sync_ms } => {
            run(&config, method, out, epsilon_ms, min_net_sync_ms).map(|_| 0)
        }
        Command::Bench { config, precisions, reps, out } => (|| {
            let sc = load(&config, |_| {})?;
            let t = Instant::now();
            let rows = bench(&sc, &precisions, reps)?;
            print_bench(&rows);
            let path = out.unwrap_or_else(|| sc.config.output.dir.join("bench.csv"));
            let mut w = create(&path)?;
            write_bench_csv(&rows, &mut w)?;
            w.flush()?;
            println!("{:.1} s total -> {}", t.elapsed().as_secs_f64(), path.display());
            Ok(0)
        })(),
        Command::Compare { a, b, tol_ms, a_times, b_times, out } => (|| {
            if !(tol_ms.is_finite() && tol_ms >= 0.0) {
                bail!(ConfigError::Field { field: "tol-ms", message: format!("must be non-negative, got {tol_ms}") });
            }
            let ra = RunReport::from_path(&report_path(&a))?;
            let rb = RunReport::from_path(&report_path(&b))?;
            let c = compare_reports(&ra, a_times, &rb, b_times, tol_ms)?;
            for d in &c.deltas {
                println!("load {:>3} k {:>4} batch {}: {:+.6} ms", d.load_bus, d.k, d.threshold_index, d.delta_ms);
            }
            if let Some(path) = out {
                let mut w = create(&path)?;
                write_agreement_csv(&c, &mut w)?;
                w.flush()?;
            }
            println!(
                "{} command(s), max |delta| {:.6} ms, tolerance {} ms: {}",
                c.deltas.len(),
                c.max_abs_delta_ms,
                tol_ms,
                if c.pass { "pass" } else { "FAIL" }
            );
            Ok(if c.pass { 0 } else { EXIT_TOLERANCE })
        })(),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
