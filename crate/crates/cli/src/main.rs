use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use erpf_core::rpf::{compute_alpha, compute_alpha_bounds, compute_da, compute_dk};
use erpf_core::spectral::{log_grid, write_csv_file};
use erpf_core::{
    assemble_three_field, augmented_spectrum_bound, run_sweep, save_block_system, singular_values,
    time_step_for_ratio, trace_objective_scan, write_outputs, BlockSystemFiles, BoundSide,
    GridSpec, MaterialParams, RpfConfig, SweepConfig, TraceModel,
};

#[derive(Parser)]
#[command(
    name = "erpf",
    version,
    about = "RPF/ERPF preconditioner benchmarks for three-field poromechanics"
)]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Errors only.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep described by a TOML file.
    Run(RunArgs),
    /// Write a Mandel system as Matrix Market files.
    Generate(GenerateArgs),
    /// Spectral diagnostics on a Mandel system, written as CSV.
    Spectrum(SpectrumArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Sweep configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Directory for summary.csv, residuals/ and setup/.
    #[arg(short, long, default_value = "erpf-out")]
    out: PathBuf,
    /// Cases run concurrently.
    #[arg(short, long, default_value_t = 1)]
    workers: usize,
    /// Exit with status 1 if any case did not converge.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 10)]
    a_over_h: usize,
    #[arg(long, default_value_t = 1.0)]
    dt_over_tc: f64,
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Diagnostic {
    /// Generalized eigenvalues of the augmented pair at a bound ratio.
    Eigs,
    /// Singular values of Q and B.
    Singular,
    /// Trace objective over α with diagonal surrogates.
    Trace,
}

#[derive(Clone, Copy, ValueEnum)]
enum Side {
    K,
    A,
}

#[derive(Args)]
struct SpectrumArgs {
    #[arg(value_enum)]
    kind: Diagnostic,
    #[arg(long, default_value_t = 10)]
    a_over_h: usize,
    /// α/α_K or α/α_A for `eigs`.
    #[arg(long, default_value_t = 0.5)]
    ratio: f64,
    #[arg(long, value_enum, default_value_t = Side::K)]
    side: Side,
    /// Δt/t_c for `trace`.
    #[arg(long, default_value_t = 1.0)]
    dt_over_tc: f64,
    #[arg(short, long)]
    out: PathBuf,
}

fn run(args: RunArgs) -> anyhow::Result<bool> {
    let cfg = SweepConfig::from_file(&args.config)?;
    let cases = cfg.cases();
    log::info!(
        "{}: {} cases on {} workers",
        args.config.display(),
        cases.len(),
        args.workers
    );
    let results = run_sweep(&cases, args.workers)?;
    write_outputs(&args.out, &results, cfg.residuals)?;
    let failed = results.iter().filter(|r| !r.row.converged()).count();
    for r in &results {
        log::info!(
            "{} dt/tc={} {} n_it={} {}",
            r.row.problem,
            r.row
                .dt_over_tc
                .map(|d| format!("{d:e}"))
                .unwrap_or_default(),
            r.row.variant,
            r.row
                .n_it
                .map(|n| n.to_string())
                .unwrap_or_else(|| "-".into()),
            r.row.status
        );
    }
    println!(
        "{} cases, {} not converged; summary in {}",
        results.len(),
        failed,
        args.out.join("summary.csv").display()
    );
    Ok(!(args.strict && failed > 0))
}

fn generate(args: GenerateArgs) -> anyhow::Result<()> {
    let mat = MaterialParams::default();
    let dt = args.dt_over_tc * mat.consolidation_time;
    let (sys, rhs) = assemble_three_field(&GridSpec::mandel(args.a_over_h), &mat, dt, args.theta)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    save_block_system(
        &BlockSystemFiles::in_dir(&args.out),
        &sys,
        &rhs,
        Some(mat.consolidation_time),
    )?;
    let (n_u, n_q, n_p) = sys.dims();
    println!(
        "wrote n_u = {n_u}, n_q = {n_q}, n_p = {n_p} to {}",
        args.out.display()
    );
    Ok(())
}

fn spectrum(args: SpectrumArgs) -> anyhow::Result<()> {
    let mat = MaterialParams::default();
    let grid = GridSpec::mandel(args.a_over_h);
    let (sys, _) =
        assemble_three_field(&grid, &mat, args.dt_over_tc * mat.consolidation_time, 1.0)?;
    let cfg = RpfConfig::default();
    match args.kind {
        Diagnostic::Eigs => {
            if !(args.ratio > 0.0 && args.ratio <= 1.0) {
                bail!("--ratio must lie in (0, 1]");
            }
            let side = match args.side {
                Side::K => BoundSide::K,
                Side::A => BoundSide::A,
            };
            let sys =
                sys.with_time_step(1.0, time_step_for_ratio(&sys, &cfg, side, args.ratio)?)?;
            let (_, d_a) = compute_da(sys.a(), sys.b())?;
            let d_k = compute_dk(sys.k(), sys.q())?;
            let g = sys.gamma();
            let alpha = compute_alpha(&d_k, &d_a, g)?;
            let (ak, aa) = compute_alpha_bounds(&d_k, &d_a, g, cfg.omega_k, cfg.omega_a)?;
            let rep = match side {
                BoundSide::K => augmented_spectrum_bound(sys.k(), sys.q(), 1.0 / alpha, 1.0 / ak)?,
                BoundSide::A => augmented_spectrum_bound(sys.a(), sys.b(), g / alpha, g / aa)?,
            };
            write_csv_file(&args.out, &rep.eigenvalues, true)?;
            println!(
                "{} eigenvalues in [{:e}, {:e}], bound {:e}",
                rep.eigenvalues.len(),
                rep.eigenvalues[0],
                rep.eigenvalues.last().copied().unwrap_or(f64::NAN),
                rep.bound_lambda1
            );
        }
        Diagnostic::Singular => {
            let m = match args.side {
                Side::K => sys.q(),
                Side::A => sys.b(),
            };
            let sv = singular_values(m)?;
            write_csv_file(&args.out, &sv, false)?;
            println!(
                "sigma_max / sigma_min = {:e}",
                sv[0] / sv.last().copied().unwrap_or(f64::NAN)
            );
        }
        Diagnostic::Trace => {
            let (_, d_a) = compute_da(sys.a(), sys.b())?;
            let d_k = compute_dk(sys.k(), sys.q())?;
            let alpha = compute_alpha(&d_k, &d_a, sys.gamma())?;
            let tm = TraceModel::diagonal(&d_k, &d_a, &sys.p().diagonal_of()?, sys.gamma())?;
            let grid = log_grid(alpha / 100.0, alpha * 100.0, 200);
            let vals = trace_objective_scan(&tm, &grid)?;
            let path = &args.out;
            let mut text = String::from("alpha,objective\n");
            for (a, v) in grid.iter().zip(&vals) {
                text.push_str(&format!("{a:e},{v:e}\n"));
            }
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            println!("estimated alpha = {alpha:e}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet {
        "error"
    } else {
        match cli.verbose {
            0 => "warn",
            1 => "info",
            _ => "debug",
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Generate(a) => generate(a).map(|_| true),
        Command::Spectrum(a) => spectrum(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
