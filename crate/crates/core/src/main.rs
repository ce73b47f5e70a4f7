use clap::{Parser, Subcommand};
use rayon::prelude::*;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use waveseek::sim::{self, load_scenario, Scenario, SimError};
use waveseek::solver::manufactured_tracking_error;
use waveseek::{kernel, probe, spectrum};

#[derive(Parser)]
#[command(
    name = "waveseek",
    version,
    about = "Extremum seeking through a Kelvin-Voigt wave channel: simulation, spectrum and verification tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the closed loop from a JSON scenario and emit the time-series CSV
    Simulate {
        config: PathBuf,
        /// Series CSV destination (default: config's series_path, else stdout)
        #[arg(long)]
        output: Option<PathBuf>,
        /// Field-snapshot CSV destination (default: config's snapshot_path)
        #[arg(long)]
        snapshots: Option<PathBuf>,
        /// Row stride for the series CSV (default: config's series_stride)
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Eigenvalue families of the damped wave operator
    Spectrum {
        #[arg(long, default_value_t = 0.1)]
        damping: f64,
        #[arg(long, default_value_t = 0.0)]
        c: f64,
        #[arg(long, default_value_t = 200)]
        n_max: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Gain-kernel samples and kernel-PDE residual over the triangle
    KernelCheck {
        #[arg(long, default_value_t = 0.01)]
        c: f64,
        #[arg(long, default_value_t = 1.0)]
        domain_length: f64,
        /// Triangle grid spacing (also the residual stencil step)
        #[arg(long, default_value_t = 0.02)]
        step: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Probe-trajectory samples and wave-PDE residual
    ProbeCheck {
        #[arg(long, default_value_t = 0.2)]
        amplitude: f64,
        #[arg(long, default_value_t = 8.0)]
        frequency: f64,
        #[arg(long, default_value_t = 0.1)]
        damping: f64,
        #[arg(long, default_value_t = 1.0)]
        domain_length: f64,
        #[arg(long, default_value_t = 2.0)]
        t_max: f64,
        #[arg(long, default_value_t = 0.1)]
        dx: f64,
        #[arg(long, default_value_t = 0.05)]
        dt: f64,
        /// Stencil step for the finite-difference residual
        #[arg(long, default_value_t = 1e-3)]
        h: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run several scenarios concurrently; one summary row per scenario
    Sweep {
        configs: Vec<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Grid/step refinement study against the exact probe trajectory
    Convergence {
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long, default_value_t = 1.0)]
        t_end: f64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

#[derive(Debug)]
enum AppError {
    Config(sim::ConfigError),
    Numerical(SimError),
    Io(io::Error),
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::Config(e) => write!(f, "{e}"),
            AppError::Numerical(e) => write!(f, "{e}"),
            AppError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl AppError {
    fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) | AppError::Io(_) => 1,
            AppError::Numerical(_) => 2,
        }
    }
}

impl From<sim::ConfigError> for AppError {
    fn from(e: sim::ConfigError) -> Self {
        AppError::Config(e)
    }
}

impl From<SimError> for AppError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => AppError::Config(c),
            other => AppError::Numerical(other),
        }
    }
}

impl From<io::Error> for AppError {
    fn from(e: io::Error) -> Self {
        AppError::Io(e)
    }
}

impl From<kernel::KernelError> for AppError {
    fn from(e: kernel::KernelError) -> Self {
        AppError::Config(e.into())
    }
}

impl From<probe::ProbeError> for AppError {
    fn from(e: probe::ProbeError) -> Self {
        AppError::Config(e.into())
    }
}

/// Write through a closure to a file or stdout.
fn with_writer(
    path: Option<&Path>,
    f: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> io::Result<()> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            f(&mut w)?;
            w.flush()
        }
        None => {
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            f(&mut w)?;
            w.flush()
        }
    }
}

fn dispatch(command: Command) -> Result<(), AppError> {
    match command {
        Command::Simulate {
            config,
            output,
            snapshots,
            stride,
        } => cmd_simulate(&config, output, snapshots, stride),
        Command::Spectrum {
            damping,
            c,
            n_max,
            output,
        } => cmd_spectrum(damping, c, n_max, output).map_err(Into::into),
        Command::KernelCheck {
            c,
            domain_length,
            step,
            output,
        } => cmd_kernel_check(c, domain_length, step, output),
        Command::ProbeCheck {
            amplitude,
            frequency,
            damping,
            domain_length,
            t_max,
            dx,
            dt,
            h,
            output,
        } => cmd_probe_check(
            amplitude,
            frequency,
            damping,
            domain_length,
            t_max,
            dx,
            dt,
            h,
            output,
        ),
        Command::Sweep { configs, output } => cmd_sweep(&configs, output),
        Command::Convergence {
            config,
            levels,
            t_end,
        } => cmd_convergence(&config, levels, t_end),
    }
}

fn cmd_simulate(
    config: &Path,
    output: Option<PathBuf>,
    snapshots: Option<PathBuf>,
    stride: Option<usize>,
) -> Result<(), AppError> {
    let mut scenario = load_scenario(config)?;
    if let Some(p) = snapshots {
        scenario.output.snapshot_path = Some(p);
    }
    if let Some(p) = output {
        scenario.output.series_path = Some(p);
    }
    if let Some(s) = stride {
        scenario.output.series_stride = s.max(1);
    }
    let result = sim::run(&scenario)?;
    with_writer(scenario.output.series_path.as_deref(), |w| {
        result.series.write_csv(w, scenario.output.series_stride)
    })?;
    if let Some(path) = &scenario.output.snapshot_path {
        with_writer(Some(path), |w| result.write_snapshots(w, &scenario.grid))?;
    }
    Ok(())
}

fn cmd_spectrum(damping: f64, c: f64, n_max: usize, output: Option<PathBuf>) -> io::Result<()> {
    with_writer(output.as_deref(), |w| {
        writeln!(
            w,
            "n,mu,re_plus,im_plus,re_minus,im_minus,is_complex,circle_residual"
        )?;
        for n in 0..=n_max {
            let pair = spectrum::eigenvalues(n, c, damping);
            let residual = if pair.is_complex_pair {
                spectrum::circle_residual(&pair, damping)
            } else {
                f64::NAN
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                n,
                pair.mu,
                pair.sigma_plus.re,
                pair.sigma_plus.im,
                pair.sigma_minus.re,
                pair.sigma_minus.im,
                pair.is_complex_pair,
                residual
            )?;
        }
        Ok(())
    })
}

fn cmd_kernel_check(
    c: f64,
    domain_length: f64,
    step: f64,
    output: Option<PathBuf>,
) -> Result<(), AppError> {
    let params = kernel::KernelParams::new(c, domain_length)?;
    if !(step > 0.0 && step < domain_length) {
        return Err(AppError::Config(sim::ConfigError::Invalid(format!(
            "step must lie in (0, D), got {step}"
        ))));
    }
    let h = step;
    let nx = (domain_length / h).round() as usize;
    let residual_at = |x: f64, s: f64| -> f64 {
        if x + h > domain_length || s + h > x {
            return f64::NAN;
        }
        let k = |x: f64, s: f64| kernel::kernel_eval(&params, x, s);
        let kxx = (k(x + h, s) - 2.0 * k(x, s) + k(x - h, s)) / (h * h);
        let kss = (k(x, s + h) - 2.0 * k(x, s) + k(x, s - h)) / (h * h);
        kxx - kss - c * k(x, s)
    };
    with_writer(output.as_deref(), |w| {
        writeln!(w, "x,sigma,k,residual")?;
        for i in 0..=nx {
            let x = (i as f64 * h).min(domain_length);
            for j in 0..=i {
                let s = (j as f64 * h).min(x);
                writeln!(
                    w,
                    "{},{},{},{}",
                    x,
                    s,
                    kernel::kernel_eval(&params, x, s),
                    residual_at(x, s)
                )?;
            }
        }
        Ok(())
    })?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_probe_check(
    amplitude: f64,
    frequency: f64,
    damping: f64,
    domain_length: f64,
    t_max: f64,
    dx: f64,
    dt: f64,
    h: f64,
    output: Option<PathBuf>,
) -> Result<(), AppError> {
    let p = probe::ProbeParams::new(amplitude, frequency, damping, domain_length)?;
    if !(dx > 0.0 && dt > 0.0 && t_max > 0.0 && h > 0.0) {
        return Err(AppError::Config(sim::ConfigError::Invalid(
            "dx, dt, t-max and h must be positive".into(),
        )));
    }
    // β is even in x, so the residual stencil reflects across x = 0
    let beta = |x: f64, t: f64| p.beta_r(x.abs(), t);
    let residual_at = |x: f64, t: f64| -> f64 {
        if x + h > domain_length {
            return f64::NAN;
        }
        let btt = (beta(x, t + h) - 2.0 * beta(x, t) + beta(x, t - h)) / (h * h);
        let bxx = |t: f64| (beta(x + h, t) - 2.0 * beta(x, t) + beta(x - h, t)) / (h * h);
        let bxxt = (bxx(t + h) - bxx(t - h)) / (2.0 * h);
        btt - bxx(t) - damping * bxxt
    };
    let nt = (t_max / dt).round() as usize;
    let nx = (domain_length / dx).round() as usize;
    with_writer(output.as_deref(), |w| {
        writeln!(w, "t,x,beta_r,residual")?;
        for k in 0..=nt {
            let t = k as f64 * dt;
            for i in 0..=nx {
                let x = (i as f64 * dx).min(domain_length);
                writeln!(w, "{},{},{},{}", t, x, p.beta_r(x, t), residual_at(x, t))?;
            }
        }
        Ok(())
    })?;
    Ok(())
}

struct SweepRow {
    config: String,
    scenario: Scenario,
    limsup_theta: f64,
    limsup_big_theta: f64,
    limsup_y: f64,
}

fn cmd_sweep(configs: &[PathBuf], output: Option<PathBuf>) -> Result<(), AppError> {
    if configs.is_empty() {
        return Err(AppError::Config(sim::ConfigError::Invalid(
            "sweep needs at least one config".into(),
        )));
    }
    let scenarios: Vec<(String, Scenario)> = configs
        .iter()
        .map(|p| Ok((p.display().to_string(), load_scenario(p)?)))
        .collect::<Result<_, sim::ConfigError>>()?;
    // scenarios are value-semantic; each run is independent and single-threaded
    let rows: Vec<SweepRow> = scenarios
        .into_par_iter()
        .map(|(name, scenario)| -> Result<SweepRow, SimError> {
            let out = sim::run(&scenario)?;
            let w = scenario.limsup_window;
            let row = SweepRow {
                config: name,
                limsup_theta: sim::limsup_deviation(&out.series.theta, scenario.map.theta_star, w),
                limsup_big_theta: sim::limsup_deviation(
                    &out.series.big_theta,
                    scenario.map.theta_star,
                    w,
                ),
                limsup_y: sim::limsup_deviation(&out.series.y, scenario.map.y_star, w),
                scenario,
            };
            Ok(row)
        })
        .collect::<Result<_, SimError>>()?;
    with_writer(output.as_deref(), |w| {
        writeln!(
            w,
            "config,mode,amplitude,omega,gain,c,filter_cutoff,damping,domain_length,theta_star,limsup_theta_err,limsup_Theta_err,limsup_y_err"
        )?;
        for r in &rows {
            let s = &r.scenario;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.config,
                match s.mode {
                    sim::Mode::NonAverage => "nonaverage",
                    sim::Mode::Average => "average",
                },
                s.probe.amplitude,
                s.probe.frequency,
                s.controller.gain,
                s.kernel.c,
                s.controller.filter_cutoff,
                s.kv.damping,
                s.grid.domain_length,
                s.map.theta_star,
                r.limsup_theta,
                r.limsup_big_theta,
                r.limsup_y
            )?;
        }
        Ok(())
    })?;
    Ok(())
}

fn cmd_convergence(config: &Path, levels: usize, t_end: f64) -> Result<(), AppError> {
    let scenario = load_scenario(config)?;
    if scenario.probe.amplitude <= 0.0 {
        return Err(AppError::Config(sim::ConfigError::Invalid(
            "convergence study needs a scenario with an active probe".into(),
        )));
    }
    if levels < 2 {
        return Err(AppError::Config(sim::ConfigError::Invalid(
            "need at least two refinement levels".into(),
        )));
    }
    let base_points = scenario.grid.points;
    let base_dt = scenario.dt;
    let mut errors = Vec::with_capacity(levels);
    for level in 0..levels {
        let factor = 1usize << level;
        let points = (base_points - 1) * factor + 1;
        let dt = base_dt / factor as f64;
        errors.push((
            level,
            points,
            dt,
            manufactured_tracking_error(&scenario.probe, &scenario.kv, points, dt, t_end),
        ));
    }
    with_writer(None, |w| {
        writeln!(w, "level,points,dt,max_error,ratio,observed_order")?;
        for (i, (level, points, dt, err)) in errors.iter().enumerate() {
            if i == 0 {
                writeln!(w, "{},{},{},{},,", level, points, dt, err)?;
            } else {
                let ratio = errors[i - 1].3 / err;
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    level,
                    points,
                    dt,
                    err,
                    ratio,
                    ratio.log2()
                )?;
            }
        }
        Ok(())
    })?;
    Ok(())
}
