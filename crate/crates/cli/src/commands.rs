use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use roughcadlag::dyadic::{self, Reference};
use roughcadlag::extension;
use roughcadlag::lift::{self, LiftConfig, RoughLift};
use roughcadlag::pvar;
use roughcadlag::simulate::{self, GeneratorSpec, Model};
use roughcadlag::CadlagPath;
use serde::Serialize;

use crate::{CmdResult, Failure};

/// Writes `text` to `out`, or to standard output when no path is given.
pub fn emit(out: Option<&Path>, text: &str) -> CmdResult {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(out, &text)
}

pub fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::Lib(roughcadlag::Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))))
}

fn load_path(path: &Path) -> Result<CadlagPath, Failure> {
    Ok(CadlagPath::read_csv(read_text(path)?.as_bytes())?)
}

fn parse_model(s: &str) -> Result<Model, String> {
    s.parse().map_err(|e: roughcadlag::Error| e.to_string())
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, value_parser = parse_model)]
    model: Model,
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long = "T", default_value_t = 1.0)]
    horizon: f64,
    #[arg(long)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.5)]
    hurst: f64,
    /// Variation index of `fv_staircase` increments.
    #[arg(long, default_value_t = 1.0)]
    q: f64,
    #[arg(long, default_value_t = 0.0)]
    jump_mean: f64,
    #[arg(long, default_value_t = 1.0)]
    jump_std: f64,
    /// Comma-separated drift vector.
    #[arg(long, value_delimiter = ',')]
    drift: Vec<f64>,
    /// Comma-separated starting point.
    #[arg(long, value_delimiter = ',')]
    x0: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the generator spec as JSON, for `lift --source`.
    #[arg(long)]
    spec_out: Option<PathBuf>,
}

pub fn simulate(a: SimulateArgs) -> CmdResult {
    let spec = GeneratorSpec {
        x0: a.x0,
        drift: a.drift,
        lambda: a.lambda,
        jump_mean: a.jump_mean,
        jump_std: a.jump_std,
        hurst: a.hurst,
        q: a.q,
        ..GeneratorSpec::new(a.model, a.d, a.horizon, a.steps, a.seed)
    };
    let path = simulate::generate(&spec)?;
    emit(a.out.as_deref(), &path.to_csv_string()?)?;
    if let Some(spec_out) = a.spec_out.as_deref() {
        emit_json(Some(spec_out), &spec)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Ito,
    Gaussian,
    Perturbed,
    Young,
}

#[derive(Args, Debug)]
pub struct LiftArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Ito)]
    method: MethodArg,
    #[arg(long, default_value_t = 0)]
    nmin: u32,
    #[arg(long, default_value_t = 40)]
    nmax: u32,
    /// Stabilisation tolerance; defaults to 1e-6·(1 + ‖X‖∞²).
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = lift::DEFAULT_P)]
    p: f64,
    /// Fail when no level stabilises instead of keeping the last one.
    #[arg(long)]
    strict: bool,
    /// Finite q-variation perturbation added to the input (method `perturbed`).
    #[arg(long)]
    perturbation: Option<PathBuf>,
    /// Variation index of the perturbation or of the Young path.
    #[arg(long, default_value_t = 1.0)]
    q: f64,
    /// Generator spec JSON recorded in the lift metadata.
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn lift(a: LiftArgs) -> CmdResult {
    let x = load_path(&a.input)?;
    let cfg = LiftConfig { n_min: a.nmin, n_max: a.nmax, tol: a.tol, p: a.p, strict: a.strict };
    if a.perturbation.is_some() && !matches!(a.method, MethodArg::Perturbed) {
        return Err(Failure::Usage("--perturbation requires --method perturbed".into()));
    }
    let built = match a.method {
        MethodArg::Ito => lift::ito_lift(&x, &cfg)?,
        MethodArg::Gaussian => lift::gaussian_lift(&x, &cfg)?,
        MethodArg::Young => lift::young_lift(&x, a.q, a.p)?,
        MethodArg::Perturbed => {
            let y_path = a
                .perturbation
                .as_deref()
                .ok_or_else(|| Failure::Usage("--method perturbed requires --perturbation".into()))?;
            lift::perturbed_lift(&x, &load_path(y_path)?, a.q, &cfg)?
        }
    };
    let built = match a.source.as_deref() {
        Some(src) => {
            let spec: GeneratorSpec = serde_json::from_str(&read_text(src)?)?;
            built.with_source(spec)
        }
        None => built,
    };
    let mut text = built.to_json()?;
    text.push('\n');
    emit(a.out.as_deref(), &text)
}

#[derive(Args, Debug)]
pub struct PvarArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn pvar(a: PvarArgs) -> CmdResult {
    let x = load_path(&a.input)?;
    emit_json(a.out.as_deref(), &pvar::p_variation(&x, a.p)?)
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ReferenceArg {
    Fine,
    Exact,
}

#[derive(Args, Debug)]
pub struct RateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 3)]
    nmin: u32,
    #[arg(long, default_value_t = 10)]
    nmax: u32,
    /// Number of interior check times; the horizon is always included.
    #[arg(long, default_value_t = 16)]
    check_points: usize,
    /// `fine` compares against level nmax+2, `exact` against the full jump sum.
    #[arg(long, value_enum, default_value_t = ReferenceArg::Fine)]
    reference: ReferenceArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn rate(a: RateArgs) -> CmdResult {
    let x = load_path(&a.input)?;
    let ts = dyadic::default_check_set(x.horizon(), a.check_points);
    let reference = match a.reference {
        ReferenceArg::Fine => Reference::Fine,
        ReferenceArg::Exact => Reference::Exact,
    };
    emit_json(a.out.as_deref(), &dyadic::fit_rate_default(&x, reference, &ts, a.nmin, a.nmax)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Check {
    /// Chen's relation on random sample triples.
    Chen,
    /// Integration by parts against the bracket at the lift's level.
    Ibp,
    /// Uniform approximation bound at the lift's level.
    Approx,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "chen,ibp")]
    checks: Vec<Check>,
    /// Random triples for `chen` and pairs for `ibp` on long paths.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Relative tolerance for `chen` and `ibp`.
    #[arg(long, default_value_t = 1e-10)]
    rtol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct CheckOutcome {
    check: String,
    value: f64,
    bound: f64,
    pass: bool,
}

#[derive(Serialize)]
struct VerifyReport {
    pass: bool,
    checks: Vec<CheckOutcome>,
}

pub fn verify(a: VerifyArgs) -> CmdResult {
    let lifted = RoughLift::from_json(&read_text(&a.input)?)?;
    let scale = lifted.scale();
    let mut checks = Vec::new();
    let mut seen = Vec::new();
    for &c in &a.checks {
        if seen.contains(&c) {
            continue;
        }
        seen.push(c);
        let (value, bound) = match c {
            Check::Chen => (lifted.max_chen_defect(a.samples, a.seed), a.rtol * scale),
            Check::Ibp => (lifted.max_ibp_residual(a.samples, a.seed), a.rtol * scale),
            Check::Approx => {
                let level = lifted.meta().level;
                (dyadic::approximation_error(lifted.path(), level), dyadic::threshold(level))
            }
        };
        let name = c.to_possible_value().expect("no skipped variants").get_name().to_string();
        checks.push(CheckOutcome { check: name, value, bound, pass: value <= bound });
    }
    let report = VerifyReport { pass: checks.iter().all(|c| c.pass), checks };
    emit_json(a.out.as_deref(), &report)?;
    match report.checks.iter().find(|c| !c.pass) {
        Some(c) => Err(Failure::Verify(format!("{} residual {:e} exceeds {:e}", c.check, c.value, c.bound))),
        None => Ok(()),
    }
}

#[derive(Args, Debug)]
pub struct ReparamArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn reparam(a: ReparamArgs) -> CmdResult {
    let x = load_path(&a.input)?;
    emit_json(a.out.as_deref(), &extension::holder_reparam(&x, a.p)?)
}
