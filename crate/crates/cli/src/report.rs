use std::path::{Path, PathBuf};

use clap::Args;
use roughcadlag::dyadic::RateFit;
use roughcadlag::par::{IntoParallelRefIterator, ParallelIterator};
use roughcadlag::RoughLift;

use crate::commands::{emit, read_text};
use crate::{CmdResult, Failure};

pub const HEADER: &str = "model,d,steps,seed,p,pvar,area_pvar,max_chen,slope,r2";

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Lift JSON; repeat for several experiments.
    #[arg(long = "lift")]
    lifts: Vec<PathBuf>,
    /// Rate JSON paired with the lift at the same position.
    #[arg(long = "rate")]
    rates: Vec<PathBuf>,
    /// Largest grid used for the area variation.
    #[arg(long, default_value_t = 65)]
    grid_points: usize,
    /// Random triples for the Chen defect.
    #[arg(long, default_value_t = 1000)]
    chen_triples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Row {
    model: String,
    seed: Option<u64>,
    fields: Vec<String>,
}

fn schema<T: serde::de::DeserializeOwned>(path: &Path, text: &str, what: &str) -> Result<T, Failure> {
    serde_json::from_str(text).map_err(|e| Failure::Schema(format!("{} is not a valid {what} artifact: {e}", path.display())))
}

fn load_lift(path: &Path) -> Result<RoughLift, Failure> {
    let text = read_text(path)?;
    RoughLift::from_json(&text).map_err(|e| match e {
        roughcadlag::Error::Json(e) => Failure::Schema(format!("{} is not a valid lift artifact: {e}", path.display())),
        other => Failure::Lib(other),
    })
}

/// Shortest round-trip text, in exponent form away from unit scale.
fn num(v: f64) -> String {
    if v != 0.0 && !(1e-4..1e9).contains(&v.abs()) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn row(lifted: &RoughLift, rate: Option<&RateFit>, args: &ReportArgs) -> Result<Row, Failure> {
    let source = lifted.meta().source.as_ref();
    let n = lifted.path().len();
    let stride = (n - 1).div_ceil(args.grid_points.max(2) - 1).max(1);
    let pvar = lifted.path_variation()?.value;
    let area = lifted.area_variation(&lifted.subgrid(stride))?.value;
    let chen = lifted.max_chen_defect(args.chen_triples, args.seed);
    let model = source.map(|s| s.model.to_string()).unwrap_or_default();
    let fields = vec![
        model.clone(),
        lifted.dim().to_string(),
        source.map_or(n, |s| s.steps).to_string(),
        opt(source.map(|s| s.seed)),
        num(lifted.p()),
        num(pvar),
        num(area),
        num(chen),
        rate.map(|r| num(r.slope)).unwrap_or_default(),
        rate.map(|r| num(r.r_squared)).unwrap_or_default(),
    ];
    Ok(Row { model, seed: source.map(|s| s.seed), fields })
}

pub fn report(args: ReportArgs) -> CmdResult {
    if !args.rates.is_empty() && args.rates.len() != args.lifts.len() {
        return Err(Failure::Usage(format!(
            "got {} --rate inputs for {} --lift inputs; give none or one per lift",
            args.rates.len(),
            args.lifts.len()
        )));
    }
    let lifts = args.lifts.iter().map(|p| load_lift(p)).collect::<Result<Vec<_>, _>>()?;
    let rates = args
        .rates
        .iter()
        .map(|p| schema::<RateFit>(p, &read_text(p)?, "rate"))
        .collect::<Result<Vec<_>, _>>()?;
    let indices: Vec<usize> = (0..lifts.len()).collect();
    let mut rows = indices
        .par_iter()
        .map(|&i| row(&lifts[i], rates.get(i), &args))
        .collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(|a, b| (&a.model, a.seed).cmp(&(&b.model, b.seed)));
    let mut text = String::from(HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&r.fields.join(","));
        text.push('\n');
    }
    emit(args.out.as_deref(), &text)
}
