use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use oais_core::grad::{grad_samples, EstimatorKind};
use oais_core::harness::output::{
    read_curve, write_file, write_fit, write_runs, write_slopes, write_summary, write_sweep,
};
use oais_core::harness::{
    calibration_sweep, fit_rate, run_ais, run_replicates, AbortKind, Experiment, ReplicateOptions,
    RunConfig,
};
use oais_core::oracle::{assumption_probe_quadrature, c3_estimate, probe_grid, quad_grad_r, quad_rho, quad_z};
use oais_core::rng::{SeededStream, STREAM_ADAPT};
use oais_core::OaisError;

#[derive(Parser)]
#[command(name = "oais", version, about = "Adaptive importance sampling with Langevin proposal adaptation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One adaptive run; writes the per-iteration trace.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `run.master_seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Write 0 in the wall_ms column so the output is reproducible byte for byte.
        #[arg(long)]
        no_wall_time: bool,
    },
    /// Independent replicates; writes the per-iteration MSE/bias summary.
    Replicate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write every replicate's trace here.
        #[arg(long)]
        runs_out: Option<PathBuf>,
    },
    /// Plateau MSE over an (alpha, eta) grid with N = ceil(eta^-alpha).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        alphas: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        etas: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Fraction of the final iterations averaged as the plateau.
        #[arg(long, default_value_t = 0.5)]
        plateau_fraction: f64,
        /// Where to write the per-alpha log-log slope fits.
        #[arg(long)]
        slopes_out: Option<PathBuf>,
    },
    /// Quadrature checks at the configured theta0.
    Oracle {
        #[arg(value_enum)]
        check: OracleCheck,
        #[arg(long)]
        config: PathBuf,
        /// Single-draw gradient samples for `gradcheck`.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        /// Half-width of the `probe` grid around theta0.
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        /// Grid points per axis for `probe`.
        #[arg(long, default_value_t = 10)]
        points: usize,
    },
    /// Fits c1 exp(-c0 eta k) + offset to one column of a summary CSV.
    Fit {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        #[arg(long, default_value = "mean_R_quad")]
        column: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleCheck {
    Rho,
    Gradcheck,
    Probe,
}

/// Failure that maps to a documented exit code.
#[derive(Debug)]
struct Exit(u8, String);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(Exit(code, _)) = err.downcast_ref::<Exit>() {
        return *code;
    }
    match err.downcast_ref::<OaisError>() {
        Some(OaisError::Config(_)) => 2,
        Some(OaisError::Divergence { .. }) => 3,
        Some(OaisError::UnsupportedDimension(_)) => 4,
        _ => 1,
    }
}

fn load(path: &Path) -> anyhow::Result<Experiment> {
    let cfg = RunConfig::load(path)
        .map_err(|e| Exit(2, format!("{}: {e}", path.display())))?;
    Experiment::from_config(&cfg).map_err(|e| match e {
        OaisError::UnsupportedDimension(_) => anyhow::Error::from(e),
        e => Exit(2, format!("{}: {e}", path.display())).into(),
    })
}

fn cmd_run(config: &Path, out: &Path, seed: Option<u64>, no_wall_time: bool) -> anyhow::Result<()> {
    let exp = load(config)?;
    let seed = seed.unwrap_or(exp.master_seed);
    let mut rec = run_ais(&exp, seed);
    if no_wall_time {
        rec.rows.iter_mut().for_each(|r| r.wall_ms = 0.0);
    }
    let names = exp.test_function_names();
    write_file(out, |w| write_runs(w, std::slice::from_ref(&rec), exp.proposal.dim_theta(), &names))?;
    if let Some(a) = &rec.abort {
        let code = if a.kind == AbortKind::Divergence { 3 } else { 1 };
        return Err(Exit(code, format!("run aborted at k = {}: {}", a.k, a.reason)).into());
    }
    Ok(())
}

fn cmd_replicate(config: &Path, out: &Path, runs_out: Option<&Path>) -> anyhow::Result<()> {
    let exp = load(config)?;
    let outcome = run_replicates(&exp, &ReplicateOptions { keep_runs: runs_out.is_some() })?;
    let names = exp.test_function_names();
    for (id, reason) in &outcome.failures {
        log::warn!("replicate {id} aborted: {reason}");
    }
    write_file(out, |w| write_summary(w, &outcome.summary, &names))?;
    if let (Some(path), Some(runs)) = (runs_out, &outcome.runs) {
        write_file(path, |w| write_runs(w, runs, exp.proposal.dim_theta(), &names))?;
    }
    Ok(())
}

fn cmd_sweep(
    config: &Path,
    alphas: &[f64],
    etas: &[f64],
    out: &Path,
    plateau_fraction: f64,
    slopes_out: Option<&Path>,
) -> anyhow::Result<()> {
    let exp = load(config)?;
    let table = calibration_sweep(&exp, alphas, etas, plateau_fraction)?;
    write_file(out, |w| write_sweep(w, &table))?;
    for s in &table.slopes {
        eprintln!(
            "alpha = {}, {}: slope {:.4} [{:.4}, {:.4}]",
            s.alpha, s.test_function, s.slope, s.lo, s.hi
        );
    }
    if let Some(path) = slopes_out {
        write_file(path, |w| write_slopes(w, &table))?;
    }
    Ok(())
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn cmd_oracle(check: OracleCheck, config: &Path, samples: usize, radius: f64, points: usize) -> anyhow::Result<()> {
    let exp = load(config)?;
    let spec = exp
        .quad
        .as_ref()
        .ok_or(OaisError::UnsupportedDimension(exp.target.dim_x()))?;
    let theta = &exp.theta0;
    match check {
        OracleCheck::Rho => {
            println!("theta = {}", fmt_vec(theta.as_slice()));
            println!("Z = {:.12e}", quad_z(&exp.target, spec)?);
            println!("rho = {:.12e}", quad_rho(&exp.target, &exp.proposal, theta, spec)?);
        }
        OracleCheck::Gradcheck => {
            let exact = quad_grad_r(&exp.target, &exp.proposal, theta, spec, None)?;
            println!("theta = {}", fmt_vec(theta.as_slice()));
            println!("quad_grad_R = {}", fmt_vec(&exact));
            let mut rng = SeededStream::substream(exp.master_seed, STREAM_ADAPT);
            let eps = exp.proposal.sample_eps(&mut rng, samples);
            for kind in [EstimatorKind::Score, EstimatorKind::Pathwise, EstimatorKind::PaperLiteral] {
                let g = match grad_samples(kind, &exp.target, &exp.proposal, theta, &eps) {
                    Ok(g) => g,
                    Err(e) => {
                        println!("{kind}: {e}");
                        continue;
                    }
                };
                let mut z = Vec::with_capacity(exact.len());
                let mut mean = Vec::with_capacity(exact.len());
                for (j, truth) in exact.iter().enumerate() {
                    let (m, var, n) = oais_core::numeric::mean_var(g.iter_rows().map(|r| r[j]));
                    mean.push(m);
                    z.push((m - truth) / (var / n as f64).sqrt());
                }
                println!("{kind}: mean = {}, z = {}", fmt_vec(&mean), fmt_vec(&z));
            }
        }
        OracleCheck::Probe => {
            let grid = probe_grid(theta.as_slice(), radius, points)?;
            let report = assumption_probe_quadrature(&exp.target, &exp.proposal, &grid, spec)?;
            println!("probe_points = {}", report.probe_points);
            println!("lipschitz_hat = {:.6e}", report.lipschitz_hat);
            println!("dissip_m_hat = {:.6e}", report.dissip_m_hat);
            println!("dissip_b_hat = {:.6e}", report.dissip_b_hat);
            println!("violation_fraction = {:.4}", report.violation_fraction);
            if let Some(c3) = c3_estimate(&report, exp.proposal.dim_theta(), exp.hyper.inv_temp) {
                println!("c3_estimate = {c3:.6e}");
            }
        }
    }
    Ok(())
}

fn cmd_fit(input: &Path, out: &Path, eta: f64, column: &str) -> anyhow::Result<()> {
    let curve = read_curve(input, column).with_context(|| format!("reading {}", input.display()))?;
    let fit = fit_rate(&curve, eta)?;
    println!(
        "c0_hat = {:.6e}, c1_hat = {:.6e}, offset_hat = {:.6e}, residual = {:.3e}",
        fit.c0_hat, fit.c1_hat, fit.offset_hat, fit.residual
    );
    write_file(out, |w| write_fit(w, column, eta, curve.len(), &fit))?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, out, seed, no_wall_time } => cmd_run(config, out, *seed, *no_wall_time),
        Command::Replicate { config, out, runs_out } => cmd_replicate(config, out, runs_out.as_deref()),
        Command::Sweep { config, alphas, etas, out, plateau_fraction, slopes_out } => {
            cmd_sweep(config, alphas, etas, out, *plateau_fraction, slopes_out.as_deref())
        }
        Command::Oracle { check, config, samples, radius, points } => {
            cmd_oracle(*check, config, *samples, *radius, *points)
        }
        Command::Fit { input, out, eta, column } => cmd_fit(input, out, *eta, column),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
