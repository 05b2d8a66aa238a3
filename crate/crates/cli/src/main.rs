use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use subsemi::expmap::{calibrate_delta, diffeo_scan, scan_directions, CALIBRATION_SAMPLES};
use subsemi::flow::{energy, fmt17, natural_parameter, write_trajectory_csv, DRIFT_WARNING};
use subsemi::verify::{self, Suite, Target};
use subsemi::{christoffel_at, integrate_extremal, CometricField, Covector, Error, ModelId, Point, StepControl};

const EXIT_CONFIG: u8 = 1;
const EXIT_BLOW_UP: u8 = 2;
const EXIT_DRIFT: u8 = 3;
const EXIT_PROPERTY: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "subsemi", version, about = "Extremals and exponential maps of degenerate cometrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the extremal with initial covector --xi and write it as CSV.
    Shoot(ShootArgs),
    /// Test the local-diffeomorphism criterion on a circle of unit covectors.
    Expscan(ExpscanArgs),
    /// Run the randomized property suites.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct FieldArgs {
    /// Built-in model: heisenberg-lorentz or quaternion-h-type.
    #[arg(long, conflicts_with = "field_file")]
    model: Option<String>,
    /// JSON field definition.
    #[arg(long)]
    field_file: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ShootArgs {
    #[command(flatten)]
    field: FieldArgs,
    /// Initial covector, comma-separated.
    #[arg(long, allow_hyphen_values = true)]
    xi: String,
    /// Start point, comma-separated; defaults to the origin.
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    t_end: f64,
    /// Fixed RK4 step.
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
    /// Use Dormand–Prince with this relative tolerance instead of RK4.
    #[arg(long)]
    adaptive_tol: Option<f64>,
    /// CSV destination; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also dump the Christoffel tensor at the start point as a nested JSON array.
    #[arg(long)]
    christoffel_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExpscanArgs {
    #[command(flatten)]
    field: FieldArgs,
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    /// Number of covectors on the circle.
    #[arg(long, default_value_t = 100)]
    resolution: usize,
    /// Seed for the δ calibration draws.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// JSON destination; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    field: FieldArgs,
    /// tensor, christoffel, flow, expmap, models or all.
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Also write the report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::BlowUp { .. } => EXIT_BLOW_UP,
            Error::HamiltonianDrift { .. } | Error::CausalFlip { .. } => EXIT_DRIFT,
            _ => EXIT_CONFIG,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: e.to_string(),
        }
    }
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: message.into(),
    }
}

enum Selected {
    Model(ModelId),
    File(String, Box<CometricField>),
}

impl Selected {
    fn field(&self) -> &CometricField {
        match self {
            Selected::Model(m) => m.field(),
            Selected::File(_, f) => f,
        }
    }

    fn name(&self) -> &str {
        match self {
            Selected::Model(m) => m.name(),
            Selected::File(name, _) => name,
        }
    }
}

fn select(args: &FieldArgs, required: bool) -> Result<Option<Selected>, Failure> {
    match (&args.model, &args.field_file) {
        (Some(m), None) => Ok(Some(Selected::Model(m.parse()?))),
        (None, Some(path)) => {
            let field = CometricField::load(path)?;
            Ok(Some(Selected::File(path.display().to_string(), Box::new(field))))
        }
        (None, None) if !required => Ok(None),
        (None, None) => Err(config_error("one of --model or --field-file is required")),
        (Some(_), Some(_)) => Err(config_error("--model and --field-file are mutually exclusive")),
    }
}

fn parse_list(s: &str, what: &str, dim: usize) -> Result<Vec<f64>, Failure> {
    let values: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| config_error(format!("--{what}: {e}")))?;
    if values.len() != dim {
        return Err(config_error(format!("--{what} has {} components, field dimension is {dim}", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(config_error(format!("--{what} must be finite")));
    }
    Ok(values)
}

fn base_point(x0: &Option<String>, dim: usize) -> Result<Point, Failure> {
    match x0 {
        Some(s) => Ok(Point(parse_list(s, "x0", dim)?)),
        None => Ok(Point::zeros(dim)),
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| config_error(format!("{}: {e}", p.display())))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn control(step: f64, adaptive_tol: Option<f64>) -> Result<StepControl, Failure> {
    let c = match adaptive_tol {
        Some(tol) => StepControl::adaptive(tol),
        None => StepControl::fixed(step),
    };
    c.validate()?;
    Ok(c)
}

fn shoot(args: &ShootArgs) -> Result<(), Failure> {
    let selected = select(&args.field, true)?.expect("required");
    let field = selected.field();
    let n = field.dim();
    let xi = Covector(parse_list(&args.xi, "xi", n)?);
    let x0 = base_point(&args.x0, n)?;
    let ctrl = control(args.step, args.adaptive_tol)?;
    if let Some(path) = &args.christoffel_out {
        write_json(path, &christoffel_at(field, &x0)?.to_nested())?;
    }
    let traj = integrate_extremal(field, &x0, &xi, args.t_end, ctrl)?;
    let mut out = output(&args.out)?;
    write_trajectory_csv(field, &traj, &mut out)?;
    out.flush()?;
    drop(out);

    let mut log = io::stderr().lock();
    writeln!(log, "H0 = {}", fmt17(traj.h0))?;
    writeln!(log, "causal class = {}", traj.causal)?;
    writeln!(log, "natural parameter = {}", fmt17(natural_parameter(field, &traj)?))?;
    writeln!(log, "energy = {}", fmt17(energy(field, &traj)?))?;
    writeln!(log, "max |H - H0| = {}", fmt17(traj.max_drift))?;
    if traj.drift_warning() {
        writeln!(log, "warning: Hamiltonian drift above {DRIFT_WARNING:e}")?;
    }
    if let StepControl::Fixed { step } = ctrl {
        let endpoint = |h: f64| integrate_extremal(field, &x0, &xi, args.t_end, StepControl::fixed(h)).map(|t| t.endpoint().clone());
        let (e1, e2) = (endpoint(step / 2.0)?, endpoint(step / 4.0)?);
        let d0: f64 = traj.endpoint().iter().zip(e1.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let d1: f64 = e1.iter().zip(e2.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        writeln!(log, "endpoint difference, step {step:e} vs {:e} = {}", step / 2.0, fmt17(d0))?;
        writeln!(log, "endpoint difference, step {:e} vs {:e} = {}", step / 2.0, step / 4.0, fmt17(d1))?;
        writeln!(log, "convergence ratio = {}", fmt17(d0 / d1))?;
    }
    Ok(())
}

fn expscan(args: &ExpscanArgs) -> Result<(), Failure> {
    let selected = select(&args.field, true)?.expect("required");
    let field = selected.field();
    if field.corank() == 0 {
        return Err(config_error("expscan needs a degenerate cometric"));
    }
    if args.resolution == 0 {
        return Err(config_error("--resolution must be positive"));
    }
    let p = base_point(&args.x0, field.dim())?;
    let calibration = calibrate_delta(field, &p, CALIBRATION_SAMPLES, args.seed)?;
    let directions = scan_directions(field, &p, args.resolution)?;
    let rows = diffeo_scan(field, &p, &directions, calibration.delta)?;
    let fraction = rows.iter().filter(|r| r.local_diffeo).count() as f64 / rows.len() as f64;
    let mut out = output(&args.out)?;
    serde_json::to_writer_pretty(&mut out, &rows).map_err(|e| config_error(e.to_string()))?;
    writeln!(out)?;
    out.flush()?;
    eprintln!(
        "{}: local diffeomorphism on {} of {} directions; delta_hat = {}, delta = {}",
        selected.name(),
        fmt17(fraction),
        args.resolution,
        fmt17(calibration.delta_hat),
        fmt17(calibration.delta)
    );
    Ok(())
}

fn run_verify(args: &VerifyArgs) -> Result<(), Failure> {
    let suite: Suite = args.suite.parse()?;
    let selected = select(&args.field, false)?;
    let targets = match &selected {
        None => Target::builtins(),
        Some(Selected::Model(m)) => vec![Target::builtin(*m)],
        Some(s @ Selected::File(..)) => vec![Target::custom(s.name(), s.field())],
    };
    let report = verify::run(suite, &targets, args.seed);
    let mut stdout = io::stdout().lock();
    for r in &report.results {
        writeln!(stdout, "{r}")?;
    }
    let passed = report.results.iter().filter(|r| r.passed).count();
    writeln!(stdout, "{passed}/{} properties passed", report.results.len())?;
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_PROPERTY,
            message: format!("{} properties failed", report.results.len() - passed),
        })
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut out = output(&Some(path.to_path_buf()))?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| config_error(e.to_string()))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Shoot(a) => shoot(a),
        Command::Expscan(a) => expscan(a),
        Command::Verify(a) => run_verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
