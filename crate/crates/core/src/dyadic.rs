//! Dyadic stopping times and the approximating left-point integral.
//!
//! At level `n` the schedule is `τ_0 = 0`,
//! `τ_{k+1} = inf{t ≥ τ_k : |X_t − X_{τ_k}| ≥ 2^-n}`. On a staircase the
//! infimum is a sample time, so the schedule is a greedy scan. The
//! approximation `Xⁿ` equals `X_{τ_k}` on `(τ_k, τ_{k+1}]` and the integral
//! is the exact finite sum `Σ_k X_{τ_k} ⊗ X_{τ_k∧t, τ_{k+1}∧t}`.

use ndarray::{Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{IntoParallelIterator, ParallelIterator};
use crate::paths::{distance, frobenius, outer, CadlagPath, MatrixPath};

/// `2^-n`, exact in binary floating point.
pub fn threshold(level: u32) -> f64 {
    (-f64::from(level)).exp2()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicSchedule {
    pub level: u32,
    pub threshold: f64,
    /// Sample indices of the stopping times.
    pub indices: Vec<usize>,
    pub times: Vec<f64>,
}

impl DyadicSchedule {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `#{k : τ_k ∈ [s, t]}`.
    pub fn count_in(&self, s: f64, t: f64) -> usize {
        let lo = self.times.partition_point(|&x| x < s);
        let hi = self.times.partition_point(|&x| x <= t);
        hi.saturating_sub(lo)
    }

    /// Position in the schedule of the last stopping time `≤ t`.
    fn cell_of(&self, t: f64) -> usize {
        self.times.partition_point(|&x| x <= t) - 1
    }
}

pub fn stopping_times(x: &CadlagPath, level: u32) -> DyadicSchedule {
    let thr = threshold(level);
    let mut indices = vec![0];
    let mut anchor = 0;
    for j in 1..x.len() {
        if x.distance_idx(anchor, j) >= thr {
            indices.push(j);
            anchor = j;
        }
    }
    let times = indices.iter().map(|&i| x.times()[i]).collect();
    DyadicSchedule { level, threshold: thr, indices, times }
}

/// The approximation `Xⁿ`, stored as the càdlàg staircase taking the value
/// `X_{τ_k}` on `[τ_k, τ_{k+1})`. `Xⁿ` itself is the left-continuous version
/// of the returned path (value `X_{τ_k}` on `(τ_k, τ_{k+1}]`) with
/// `Xⁿ_0 = X_0`; both share the same samples.
pub fn dyadic_path(x: &CadlagPath, level: u32) -> CadlagPath {
    let sched = stopping_times(x, level);
    let values = x.values().select(Axis(0), &sched.indices);
    CadlagPath::new(sched.times, values, x.horizon()).expect("schedule times are a subsequence of the sample grid")
}

/// `‖Xⁿ − X₋‖_∞`, measured exactly on the sample grid.
///
/// Left limits of both staircases at `t_{j+1}` are their values at `t_j`,
/// so the supremum reduces to `max_j |X_{τ(j)} − X_{t_j}|` where `τ(j)` is
/// the last stopping time not after `t_j`.
pub fn approximation_error(x: &CadlagPath, level: u32) -> f64 {
    let sched = stopping_times(x, level);
    let mut k = 0;
    let mut worst: f64 = 0.0;
    for j in 0..x.len() {
        while k + 1 < sched.len() && sched.indices[k + 1] <= j {
            k += 1;
        }
        worst = worst.max(x.distance_idx(sched.indices[k], j));
    }
    worst
}

/// `∫_0^t Xⁿ ⊗ dX`, summed literally over the schedule.
pub fn dyadic_integral(x: &CadlagPath, level: u32, t: f64) -> Result<Array2<f64>> {
    let at_t = x.eval(t)?;
    let sched = stopping_times(x, level);
    let d = x.dim();
    let mut acc = Array2::zeros((d, d));
    for (k, &i) in sched.indices.iter().enumerate() {
        if sched.times[k] > t {
            break;
        }
        let end = match sched.indices.get(k + 1) {
            Some(&next) if sched.times[k + 1] <= t => x.value(next),
            _ => at_t,
        };
        let left = x.value(i);
        acc += &outer(left, (&end - &left).view());
    }
    Ok(acc)
}

/// `t ↦ ∫_0^t Xⁿ ⊗ dX` at every sample time of `x`.
pub fn dyadic_integral_path(x: &CadlagPath, level: u32) -> MatrixPath {
    integral_along(x, &stopping_times(x, level))
}

/// Cumulative left-point sum of `x` along `sched`, evaluated on the sample grid.
pub(crate) fn integral_along(x: &CadlagPath, sched: &DyadicSchedule) -> MatrixPath {
    let (n, d) = (x.len(), x.dim());
    let mut out = Array3::zeros((n, d, d));
    let mut closed = Array2::<f64>::zeros((d, d));
    let mut k = 0;
    for j in 0..n {
        if k + 1 < sched.len() && sched.indices[k + 1] == j {
            let (a, b) = (x.value(sched.indices[k]), x.value(j));
            closed += &outer(a, (&b - &a).view());
            k += 1;
        }
        let anchor = x.value(sched.indices[k]);
        let open = outer(anchor, (&x.value(j) - &anchor).view());
        out.index_axis_mut(Axis(0), j).assign(&(&closed + &open));
    }
    MatrixPath::new(x.times().to_vec(), out, x.horizon()).expect("finite sums of finite values")
}

/// `Σ_k X_{τ_k∧t, τ_{k+1}∧t} ⊗ X_{τ_k∧t, τ_{k+1}∧t}` along `sched`.
pub(crate) fn schedule_bracket_at(x: &CadlagPath, sched: &DyadicSchedule, t: f64) -> Result<Array2<f64>> {
    let at_t = x.eval(t)?;
    let d = x.dim();
    let mut acc = Array2::zeros((d, d));
    let last = sched.cell_of(t);
    for k in 0..=last {
        let a = x.value(sched.indices[k]);
        let b = if k < last { x.value(sched.indices[k + 1]) } else { at_t };
        let inc = &b - &a;
        acc += &outer(inc.view(), inc.view());
    }
    Ok(acc)
}

/// Least-squares fit of `log₂(error)` against level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub levels: Vec<u32>,
    pub errors: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    #[serde(rename = "r2")]
    pub r_squared: f64,
    /// Levels whose error was exactly zero and were left out of the fit.
    #[serde(default)]
    pub excluded: Vec<u32>,
    /// True when some level reproduced the reference exactly.
    #[serde(default)]
    pub saturated: bool,
}

impl RateFit {
    /// `ε` in `c 2^{-n(1-ε)}`, i.e. `1 + slope`.
    pub fn epsilon(&self) -> f64 {
        1.0 + self.slope
    }

    /// `c` in `c 2^{-n(1-ε)}`, i.e. `2^intercept`.
    pub fn constant(&self) -> f64 {
        self.intercept.exp2()
    }
}

/// Fits `log₂ errors` against `levels`. Zero errors are excluded and
/// reported; fewer than two usable levels is an error.
pub fn fit_log2(levels: &[u32], errors: &[f64]) -> Result<RateFit> {
    if levels.len() != errors.len() {
        return Err(Error::domain("levels and errors differ in length"));
    }
    if let Some(e) = errors.iter().find(|e| !(**e >= 0.0) || !e.is_finite()) {
        return Err(Error::domain(format!("errors must be finite and non-negative, got {e}")));
    }
    let (mut used_levels, mut used_errors, mut excluded) = (Vec::new(), Vec::new(), Vec::new());
    for (&n, &e) in levels.iter().zip(errors) {
        if e == 0.0 {
            excluded.push(n);
        } else {
            used_levels.push(n);
            used_errors.push(e);
        }
    }
    let mut distinct = used_levels.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::DegenerateFit { usable: distinct.len() });
    }
    let xs: Vec<f64> = used_levels.iter().map(|&n| f64::from(n)).collect();
    let ys: Vec<f64> = used_errors.iter().map(|e| e.log2()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    Ok(RateFit {
        levels: used_levels,
        errors: used_errors,
        slope,
        intercept,
        r_squared,
        saturated: !excluded.is_empty(),
        excluded,
    })
}

/// `k` equispaced interior points of `[0, T]` followed by `T`.
pub fn default_check_set(horizon: f64, k: usize) -> Vec<f64> {
    let mut ts: Vec<f64> = (1..=k).map(|i| horizon * i as f64 / (k + 1) as f64).collect();
    ts.push(horizon);
    ts
}

fn validate_rate_args(x: &CadlagPath, ts: &[f64], n_min: u32, n_max: u32) -> Result<()> {
    if n_min >= n_max {
        return Err(Error::domain(format!("need n_min < n_max, got {n_min} and {n_max}")));
    }
    if !ts.contains(&x.horizon()) {
        return Err(Error::domain("check set must contain the horizon"));
    }
    if let Some(t) = ts.iter().find(|t| !(0.0..=x.horizon()).contains(*t)) {
        return Err(Error::domain(format!("check time {t} outside [0, {}]", x.horizon())));
    }
    Ok(())
}

/// Fits the decay of `max_{t ∈ ts} |∫_0^t Xⁿ⊗dX − reference(t)|` over
/// levels `n_min..=n_max`. Levels are evaluated in parallel and reduced in
/// level order.
pub fn fit_rate<F>(x: &CadlagPath, reference: F, ts: &[f64], n_min: u32, n_max: u32) -> Result<RateFit>
where
    F: Fn(f64) -> Array2<f64> + Sync,
{
    validate_rate_args(x, ts, n_min, n_max)?;
    let refs: Vec<Array2<f64>> = ts.iter().map(|&t| reference(t)).collect();
    let levels: Vec<u32> = (n_min..=n_max).collect();
    let errors: Vec<f64> = levels
        .clone()
        .into_par_iter()
        .map(|n| level_error(&dyadic_integral_path(x, n), ts, &refs))
        .collect();
    fit_log2(&levels, &errors)
}

fn level_error(integral: &MatrixPath, ts: &[f64], refs: &[Array2<f64>]) -> f64 {
    ts.iter()
        .zip(refs)
        .map(|(&t, r)| frobenius((&integral.eval(t).expect("validated") - r).view()))
        .fold(0.0, f64::max)
}

/// Reference integral used by [`fit_rate_default`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reference {
    /// The dyadic integral at level `n_max + 2`.
    Fine,
    /// The left-point sum over every jump of the staircase.
    Exact,
}

/// `∫_0^t X₋ ⊗ dX` for the staircase itself: the sum over all jumps.
pub fn exact_integral_path(x: &CadlagPath) -> MatrixPath {
    let all = DyadicSchedule {
        level: u32::MAX,
        threshold: 0.0,
        indices: (0..x.len()).collect(),
        times: x.times().to_vec(),
    };
    integral_along(x, &all)
}

pub fn fit_rate_default(
    x: &CadlagPath,
    reference: Reference,
    ts: &[f64],
    n_min: u32,
    n_max: u32,
) -> Result<RateFit> {
    validate_rate_args(x, ts, n_min, n_max)?;
    let reference = match reference {
        Reference::Fine => dyadic_integral_path(x, n_max + 2),
        Reference::Exact => exact_integral_path(x),
    };
    fit_rate(x, |t| reference.eval(t).expect("validated").to_owned(), ts, n_min, n_max)
}

/// `|Δ|` between two matrices, for callers comparing integral paths.
pub fn matrix_gap(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    frobenius((&a - &b).view())
}

/// Largest jump `max_j |X_{t_j} − X_{t_{j-1}}|`; 0 for a single sample.
pub fn largest_jump(x: &CadlagPath) -> f64 {
    (1..x.len()).map(|j| distance(x.value(j - 1), x.value(j))).fold(0.0, f64::max)
}
