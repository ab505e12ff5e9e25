//! Rough lifts `(X, 𝕏)` built from stabilised dyadic integrals.
//!
//! A [`RoughLift`] stores the path and the additive integral path
//! `I_t ≈ ∫_0^t X₋ ⊗ dX` on the same grid. The second level is always derived,
//!
//! ```text
//! 𝕏_{s,t} = I_t − I_s − X_s ⊗ X_{s,t},
//! ```
//!
//! so Chen's relation holds identically up to rounding.

use ndarray::{Array2, Array3, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dyadic::{integral_along, stopping_times, DyadicSchedule};
use crate::error::{Error, Result};
use crate::par::{self, IntoParallelIterator, IntoParallelRefIterator, ParallelIterator};
use crate::paths::{frobenius, outer, CadlagPath, MatrixPath};
use crate::pvar::{self, TwoParamTensor, VariationResult};
use crate::simulate::GeneratorSpec;

pub const DEFAULT_P: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LiftMethod {
    Ito,
    /// Itô off-diagonal entries, `½(X^i_{s,t})²` on the diagonal.
    Gaussian,
    Perturbed,
    Young,
}

impl LiftMethod {
    pub fn geometric_diagonal(self) -> bool {
        self == LiftMethod::Gaussian
    }
}

/// The four left-point integrals making up `∫Z₋⊗dZ` for `Z = X + Y`,
/// evaluated at the horizon along the schedule of `Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossTerms {
    pub xx: Vec<Vec<f64>>,
    pub xy: Vec<Vec<f64>>,
    pub yx: Vec<Vec<f64>>,
    pub yy: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftMeta {
    pub method: LiftMethod,
    /// Dyadic level whose integral was kept.
    pub level: u32,
    /// `sup_t |I^level_t − I^{level+1}_t|`.
    pub gap: f64,
    pub tol: f64,
    #[serde(default = "default_true")]
    pub stabilized: bool,
    #[serde(default)]
    pub n_min: u32,
    #[serde(default)]
    pub n_max: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_terms: Option<CrossTerms>,
    /// Generator that produced the path, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<GeneratorSpec>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoughLift {
    path: CadlagPath,
    integral: MatrixPath,
    p: f64,
    meta: LiftMeta,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftConfig {
    pub n_min: u32,
    pub n_max: u32,
    /// Stabilisation tolerance; `None` means `1e-6 · (1 + ‖X‖_∞²)`.
    pub tol: Option<f64>,
    pub p: f64,
    /// Fail instead of falling back to `n_max` when no level stabilises.
    pub strict: bool,
}

impl Default for LiftConfig {
    fn default() -> Self {
        LiftConfig { n_min: 0, n_max: 40, tol: None, p: DEFAULT_P, strict: false }
    }
}

impl LiftConfig {
    fn validate(&self) -> Result<()> {
        if self.n_max <= self.n_min {
            return Err(Error::domain(format!("need n_max > n_min, got {} and {}", self.n_max, self.n_min)));
        }
        if self.n_max > 1000 {
            return Err(Error::domain("n_max above 1000 underflows the dyadic threshold"));
        }
        if let Some(tol) = self.tol {
            if !(tol > 0.0) || !tol.is_finite() {
                return Err(Error::domain(format!("tolerance must be positive, got {tol}")));
            }
        }
        if !(self.p > 2.0 && self.p < 3.0) {
            return Err(Error::domain(format!("p must lie in (2, 3), got {}", self.p)));
        }
        Ok(())
    }

    pub fn tolerance_for(&self, x: &CadlagPath) -> f64 {
        self.tol.unwrap_or_else(|| 1e-6 * (1.0 + x.sup_norm().powi(2)))
    }
}

struct Stabilized {
    level: u32,
    gap: f64,
    tol: f64,
    stabilized: bool,
    schedule: DyadicSchedule,
    integral: MatrixPath,
}

fn sup_gap(a: &MatrixPath, b: &MatrixPath) -> f64 {
    a.values()
        .outer_iter()
        .zip(b.values().outer_iter())
        .map(|(u, v)| frobenius((&u - &v).view()))
        .fold(0.0, f64::max)
}

/// Smallest level `n` in `[n_min, n_max]` with `sup_t |Iⁿ − I^{n+1}| ≤ tol`.
/// Levels are computed in parallel batches and scanned in order.
fn stabilize(x: &CadlagPath, cfg: &LiftConfig) -> Result<Stabilized> {
    cfg.validate()?;
    let tol = cfg.tolerance_for(x);
    let batch = par::current_threads().max(2) as u32;
    let mut start = cfg.n_min;
    loop {
        let end = (start + batch).min(cfg.n_max + 1);
        let levels: Vec<(DyadicSchedule, MatrixPath)> = (start..=end)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|n| {
                let sched = stopping_times(x, n);
                let integral = integral_along(x, &sched);
                (sched, integral)
            })
            .collect();
        for (offset, pair) in levels.windows(2).enumerate() {
            let n = start + offset as u32;
            let gap = sup_gap(&pair[0].1, &pair[1].1);
            if gap <= tol || n == cfg.n_max {
                let stabilized = gap <= tol;
                if !stabilized && cfg.strict {
                    return Err(Error::Convergence { gap, tol, level: n });
                }
                let (schedule, integral) = pair[0].clone();
                return Ok(Stabilized { level: n, gap, tol, stabilized, schedule, integral });
            }
        }
        start = end;
    }
}

impl RoughLift {
    /// Assembles a lift from its parts, checking shapes.
    pub fn from_parts(path: CadlagPath, integral: MatrixPath, p: f64, meta: LiftMeta) -> Result<Self> {
        if integral.times() != path.times() || integral.horizon() != path.horizon() {
            return Err(Error::domain("integral path is not on the path's grid"));
        }
        if integral.dim() != path.dim() {
            return Err(Error::domain("integral dimension does not match the path"));
        }
        if !(p > 2.0 && p < 3.0) {
            return Err(Error::domain(format!("p must lie in (2, 3), got {p}")));
        }
        Ok(RoughLift { path, integral, p, meta })
    }

    pub fn path(&self) -> &CadlagPath {
        &self.path
    }

    pub fn integral(&self) -> &MatrixPath {
        &self.integral
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn meta(&self) -> &LiftMeta {
        &self.meta
    }

    pub fn with_source(mut self, source: GeneratorSpec) -> Self {
        self.meta.source = Some(source);
        self
    }

    pub fn dim(&self) -> usize {
        self.path.dim()
    }

    pub fn horizon(&self) -> f64 {
        self.path.horizon()
    }

    /// `1 + ‖X‖_∞² + ‖I‖_∞`, the scale for relative residuals.
    pub fn scale(&self) -> f64 {
        1.0 + self.path.sup_norm().powi(2) + self.integral.sup_norm()
    }

    /// `𝕏` between sample indices `i ≤ j`.
    pub fn area_idx(&self, i: usize, j: usize) -> Array2<f64> {
        let (xi, xj) = (self.path.value(i), self.path.value(j));
        let inc = &xj - &xi;
        let mut a = &(&self.integral.value(j) - &self.integral.value(i)) - &outer(xi, inc.view());
        if self.meta.method.geometric_diagonal() {
            for k in 0..inc.len() {
                a[[k, k]] = 0.5 * inc[k] * inc[k];
            }
        }
        a
    }

    fn frobenius_area_idx(&self, i: usize, j: usize) -> f64 {
        let (xi, xj) = (self.path.value(i), self.path.value(j));
        let (ii, ij) = (self.integral.value(i), self.integral.value(j));
        let d = self.dim();
        let geometric = self.meta.method.geometric_diagonal();
        let mut sum = 0.0;
        for a in 0..d {
            for b in 0..d {
                let v = if geometric && a == b {
                    let inc = xj[a] - xi[a];
                    0.5 * inc * inc
                } else {
                    ij[[a, b]] - ii[[a, b]] - xi[a] * (xj[b] - xi[b])
                };
                sum += v * v;
            }
        }
        sum.sqrt()
    }

    fn ordered_indices(&self, s: f64, t: f64) -> Result<(usize, usize)> {
        if s > t {
            return Err(Error::domain(format!("need s ≤ t, got {s} > {t}")));
        }
        Ok((self.path.index_at(s)?, self.path.index_at(t)?))
    }

    /// `𝕏_{s,t} = I_t − I_s − X_s ⊗ X_{s,t}`.
    pub fn area(&self, s: f64, t: f64) -> Result<Array2<f64>> {
        let (i, j) = self.ordered_indices(s, t)?;
        Ok(self.area_idx(i, j))
    }

    /// Frobenius norm of the Chen residual
    /// `𝕏_{s,t} − 𝕏_{s,u} − 𝕏_{u,t} − X_{s,u} ⊗ X_{u,t}`.
    pub fn chen_defect(&self, s: f64, u: f64, t: f64) -> Result<f64> {
        if !(s <= u && u <= t) {
            return Err(Error::domain(format!("need s ≤ u ≤ t, got {s}, {u}, {t}")));
        }
        let (i, k) = self.ordered_indices(s, u)?;
        let j = self.path.index_at(t)?;
        Ok(self.chen_defect_idx(i, k, j))
    }

    pub fn chen_defect_idx(&self, i: usize, k: usize, j: usize) -> f64 {
        let xsu = self.path.increment_idx(i, k);
        let xut = self.path.increment_idx(k, j);
        let residual = self.area_idx(i, j) - self.area_idx(i, k) - self.area_idx(k, j) - outer(xsu.view(), xut.view());
        frobenius(residual.view())
    }

    /// Largest Chen residual over `count` random ordered grid triples.
    pub fn max_chen_defect(&self, count: usize, seed: u64) -> f64 {
        let n = self.path.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let triples: Vec<[usize; 3]> = (0..count)
            .map(|_| {
                let mut t = [rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..n)];
                t.sort_unstable();
                t
            })
            .collect();
        triples
            .par_iter()
            .map(|&[i, k, j]| self.chen_defect_idx(i, k, j))
            .collect::<Vec<_>>()
            .into_iter()
            .fold(0.0, f64::max)
    }

    /// `Sym(2𝕏_{s,t}) + ([X]_t − [X]_s) − X_{s,t} ⊗ X_{s,t}` with the bracket
    /// taken along the level-`n` schedule.
    pub fn ito_symmetry_residual(&self, level: u32, s: f64, t: f64) -> Result<Array2<f64>> {
        let (i, j) = self.ordered_indices(s, t)?;
        let sched = stopping_times(&self.path, level);
        let bracket = bracket_on_grid(&self.path, &sched);
        Ok(self.symmetry_residual_idx(&bracket, i, j))
    }

    fn symmetry_residual_idx(&self, bracket: &Array3<f64>, i: usize, j: usize) -> Array2<f64> {
        let a = self.area_idx(i, j);
        let inc = self.path.increment_idx(i, j);
        let db = &bracket.index_axis(Axis(0), j) - &bracket.index_axis(Axis(0), i);
        &(&a + &a.t()) + &db - outer(inc.view(), inc.view())
    }

    /// Frobenius norm of [`ito_symmetry_residual`](Self::ito_symmetry_residual).
    pub fn ito_symmetry_defect(&self, level: u32, s: f64, t: f64) -> Result<f64> {
        Ok(frobenius(self.ito_symmetry_residual(level, s, t)?.view()))
    }

    /// Largest integration-by-parts residual at the lift's own level over
    /// sample pairs (all pairs up to 512 samples, otherwise `pairs` random
    /// ones). For Gaussian lifts only off-diagonal entries are compared and
    /// the diagonal must equal the bracket increment.
    pub fn max_ibp_residual(&self, pairs: usize, seed: u64) -> f64 {
        let sched = stopping_times(&self.path, self.meta.level);
        let bracket = bracket_on_grid(&self.path, &sched);
        let n = self.path.len();
        let list: Vec<(usize, usize)> = if n <= 512 {
            (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..pairs)
                .map(|_| {
                    let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
                    (a.min(b), a.max(b))
                })
                .collect()
        };
        let geometric = self.meta.method.geometric_diagonal();
        list.par_iter()
            .map(|&(i, j)| {
                let mut r = self.symmetry_residual_idx(&bracket, i, j);
                if geometric {
                    for k in 0..r.nrows() {
                        let db = bracket[[j, k, k]] - bracket[[i, k, k]];
                        r[[k, k]] -= db;
                    }
                }
                frobenius(r.view())
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold(0.0, f64::max)
    }

    pub fn path_variation(&self) -> Result<VariationResult> {
        pvar::p_variation(&self.path, self.p)
    }

    /// `‖𝕏‖_{p/2-var}` restricted to partitions drawn from `grid`.
    pub fn area_variation(&self, grid: &[f64]) -> Result<VariationResult> {
        pvar::two_param_variation(self, self.p / 2.0, grid)
    }

    /// Every `stride`-th sample time, plus the horizon.
    pub fn subgrid(&self, stride: usize) -> Vec<f64> {
        let stride = stride.max(1);
        let mut grid: Vec<f64> = self.path.times().iter().step_by(stride).copied().collect();
        if *grid.last().unwrap() < self.horizon() {
            grid.push(self.horizon());
        }
        grid
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&LiftJson::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: LiftJson = serde_json::from_str(text)?;
        raw.try_into()
    }
}

impl TwoParamTensor for RoughLift {
    fn dim(&self) -> usize {
        self.path.dim()
    }

    fn horizon(&self) -> f64 {
        self.path.horizon()
    }

    fn at(&self, s: f64, t: f64) -> Array2<f64> {
        self.area(s, t).expect("times validated by caller")
    }

    fn norm_at(&self, s: f64, t: f64) -> f64 {
        let i = self.path.index_at(s).expect("times validated by caller");
        let j = self.path.index_at(t).expect("times validated by caller");
        self.frobenius_area_idx(i, j)
    }
}

/// On-disk lift format.
#[derive(Debug, Serialize, Deserialize)]
struct LiftJson {
    p: f64,
    #[serde(default)]
    horizon: Option<f64>,
    times: Vec<f64>,
    #[serde(rename = "X")]
    x: Vec<Vec<f64>>,
    #[serde(rename = "I")]
    i: Vec<Vec<Vec<f64>>>,
    meta: LiftMeta,
}

fn matrix_rows(m: ArrayView2<'_, f64>) -> Vec<Vec<f64>> {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

impl From<&RoughLift> for LiftJson {
    fn from(l: &RoughLift) -> Self {
        LiftJson {
            p: l.p,
            horizon: Some(l.horizon()),
            times: l.path.times().to_vec(),
            x: matrix_rows(l.path.values()),
            i: l.integral.values().outer_iter().map(|m| matrix_rows(m)).collect(),
            meta: l.meta.clone(),
        }
    }
}

impl TryFrom<LiftJson> for RoughLift {
    type Error = Error;

    fn try_from(raw: LiftJson) -> Result<Self> {
        let horizon = raw.horizon.or_else(|| raw.times.last().copied()).unwrap_or(0.0);
        let path = CadlagPath::from_rows(raw.times.clone(), &raw.x)?.with_horizon(horizon)?;
        let (n, d) = (path.len(), path.dim());
        if raw.i.len() != n || raw.i.iter().any(|m| m.len() != d || m.iter().any(|r| r.len() != d)) {
            return Err(Error::domain(format!("field `I` must have shape {n}×{d}×{d}")));
        }
        let flat: Vec<f64> = raw.i.into_iter().flatten().flatten().collect();
        let integral = MatrixPath::new(raw.times, Array3::from_shape_vec((n, d, d), flat).expect("checked"), horizon)?;
        RoughLift::from_parts(path, integral, raw.p, raw.meta)
    }
}

fn build(x: &CadlagPath, cfg: &LiftConfig, method: LiftMethod) -> Result<(Stabilized, LiftMeta)> {
    let st = stabilize(x, cfg)?;
    let meta = LiftMeta {
        method,
        level: st.level,
        gap: st.gap,
        tol: st.tol,
        stabilized: st.stabilized,
        n_min: cfg.n_min,
        n_max: cfg.n_max,
        cross_terms: None,
        source: None,
    };
    Ok((st, meta))
}

/// Itô lift: `I` is the dyadic integral at the first stabilised level.
pub fn ito_lift(x: &CadlagPath, cfg: &LiftConfig) -> Result<RoughLift> {
    let (st, meta) = build(x, cfg, LiftMethod::Ito)?;
    RoughLift::from_parts(x.clone(), st.integral, cfg.p, meta)
}

/// Gaussian lift: off-diagonal entries as [`ito_lift`], diagonal set by
/// `𝕏^{ii}_{s,t} = ½(X^i_{s,t})²`. The stored `I^{ii}_t = ½(X^i_t)² − ½(X^i_0)²`
/// reproduces that convention; evaluation uses the convention directly.
pub fn gaussian_lift(x: &CadlagPath, cfg: &LiftConfig) -> Result<RoughLift> {
    let (st, meta) = build(x, cfg, LiftMethod::Gaussian)?;
    let mut values = st.integral.values().clone();
    let x0 = x.value(0);
    for (j, mut m) in values.outer_iter_mut().enumerate() {
        let xj = x.value(j);
        for k in 0..x.dim() {
            m[[k, k]] = 0.5 * xj[k] * xj[k] - 0.5 * x0[k] * x0[k];
        }
    }
    let integral = MatrixPath::new(x.times().to_vec(), values, x.horizon())?;
    RoughLift::from_parts(x.clone(), integral, cfg.p, meta)
}

fn check_young_exponent(q: f64) -> Result<()> {
    if !(1.0..2.0).contains(&q) {
        return Err(Error::domain(format!("q must lie in [1, 2) for Young integration, got {q}")));
    }
    Ok(())
}

/// Lift of `Z = X + Y` with `Y` of finite `q`-variation, `q ∈ [1, 2)`.
/// The cross-term decomposition of `∫Z₋⊗dZ` at the horizon is kept in
/// [`LiftMeta::cross_terms`].
pub fn perturbed_lift(x: &CadlagPath, y: &CadlagPath, q: f64, cfg: &LiftConfig) -> Result<RoughLift> {
    check_young_exponent(q)?;
    x.check_same_grid(y)?;
    let z = x.add(y)?;
    let (st, mut meta) = build(&z, cfg, LiftMethod::Perturbed)?;
    let term = |a: &CadlagPath, b: &CadlagPath| {
        let d = a.dim();
        let mut acc = Array2::<f64>::zeros((d, d));
        let idx = &st.schedule.indices;
        let last = a.len() - 1;
        for (k, &i) in idx.iter().enumerate() {
            let next = idx.get(k + 1).copied().unwrap_or(last);
            acc += &outer(a.value(i), (&b.value(next) - &b.value(i)).view());
        }
        matrix_rows(acc.view())
    };
    meta.cross_terms = Some(CrossTerms { xx: term(x, x), xy: term(x, y), yx: term(y, x), yy: term(y, y) });
    RoughLift::from_parts(z, st.integral, cfg.p, meta)
}

/// `∫_0^· Y₋ ⊗ dY` for a staircase `Y`: the left-point sum over its jumps,
/// which is where refining Riemann sums stabilise.
pub fn young_integral(y: &CadlagPath, q: f64) -> Result<MatrixPath> {
    check_young_exponent(q)?;
    let var = pvar::p_variation(y, q)?;
    if !var.value.is_finite() {
        return Err(Error::domain("path does not have finite q-variation"));
    }
    let d = y.dim();
    let mut values = Array3::zeros((y.len(), d, d));
    let mut acc = Array2::<f64>::zeros((d, d));
    for j in 1..y.len() {
        let (prev, cur) = (y.value(j - 1), y.value(j));
        acc += &outer(prev, (&cur - &prev).view());
        values.index_axis_mut(Axis(0), j).assign(&acc);
    }
    MatrixPath::new(y.times().to_vec(), values, y.horizon())
}

/// Lift whose integral is [`young_integral`].
pub fn young_lift(y: &CadlagPath, q: f64, p: f64) -> Result<RoughLift> {
    let integral = young_integral(y, q)?;
    let meta = LiftMeta {
        method: LiftMethod::Young,
        level: 0,
        gap: 0.0,
        tol: 0.0,
        stabilized: true,
        n_min: 0,
        n_max: 0,
        cross_terms: None,
        source: None,
    };
    RoughLift::from_parts(y.clone(), integral, p, meta)
}

/// Chen residual `|W_{s,t} − W_{s,u} − W_{u,t} − X_{s,u} ⊗ X_{u,t}|` for an
/// arbitrary candidate second level `W` over `x`.
pub fn chen_defect_of(w: &dyn TwoParamTensor, x: &CadlagPath, s: f64, u: f64, t: f64) -> Result<f64> {
    if !(s <= u && u <= t) {
        return Err(Error::domain(format!("need s ≤ u ≤ t, got {s}, {u}, {t}")));
    }
    if w.dim() != x.dim() || w.horizon() != x.horizon() {
        return Err(Error::domain("tensor and path disagree on dimension or horizon"));
    }
    let xsu = x.increment(s, u)?;
    let xut = x.increment(u, t)?;
    let residual = w.at(s, t) - w.at(s, u) - w.at(u, t) - outer(xsu.view(), xut.view());
    Ok(frobenius(residual.view()))
}

/// Quadratic covariation along the level-`n` schedule, sampled at the
/// stopping times and at the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct BracketPath {
    pub level: u32,
    pub path: MatrixPath,
}

impl BracketPath {
    pub fn times(&self) -> &[f64] {
        self.path.times()
    }

    /// `[X]_T`.
    pub fn terminal(&self) -> ArrayView2<'_, f64> {
        self.path.last()
    }
}

/// Cumulative bracket at every sample time, with the open cell included.
pub(crate) fn bracket_on_grid(x: &CadlagPath, sched: &DyadicSchedule) -> Array3<f64> {
    let (n, d) = (x.len(), x.dim());
    let mut out = Array3::zeros((n, d, d));
    let mut closed = Array2::<f64>::zeros((d, d));
    let mut k = 0;
    for j in 0..n {
        if k + 1 < sched.len() && sched.indices[k + 1] == j {
            let inc = x.increment_idx(sched.indices[k], j);
            closed += &outer(inc.view(), inc.view());
            k += 1;
        }
        let open = x.increment_idx(sched.indices[k], j);
        out.index_axis_mut(Axis(0), j).assign(&(&closed + &outer(open.view(), open.view())));
    }
    out
}

/// `[X]_t = Σ_k X_{τ_k∧t, τ_{k+1}∧t} ⊗ X_{τ_k∧t, τ_{k+1}∧t}` along `stopping_times(X, n)`.
pub fn bracket(x: &CadlagPath, level: u32) -> BracketPath {
    let sched = stopping_times(x, level);
    let grid = bracket_on_grid(x, &sched);
    let mut idx = sched.indices.clone();
    let mut times = sched.times.clone();
    let last = x.len() - 1;
    if *idx.last().unwrap() != last || x.times()[last] < x.horizon() {
        idx.push(last);
        times.push(x.horizon());
    }
    let values = grid.select(Axis(0), &idx);
    let path = MatrixPath::new(times, values, x.horizon()).expect("schedule is increasing");
    BracketPath { level, path }
}

/// `[X]_t` at an arbitrary time, along the level-`n` schedule.
pub fn bracket_at(x: &CadlagPath, level: u32, t: f64) -> Result<Array2<f64>> {
    crate::dyadic::schedule_bracket_at(x, &stopping_times(x, level), t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::{array, Array2};
    use rand_distr::StandardNormal;

    fn two_jump() -> CadlagPath {
        CadlagPath::scalar(vec![0.0, 0.3, 0.6], vec![0.0, 1.0, 3.0], 1.0).unwrap()
    }

    fn brownian(seed: u64, steps: usize, d: usize) -> CadlagPath {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dt = 1.0 / steps as f64;
        let mut values = Array2::zeros((steps, d));
        for i in 0..d {
            for k in 1..steps {
                let z: f64 = rng.sample(StandardNormal);
                values[[k, i]] = values[[k - 1, i]] + dt.sqrt() * z;
            }
        }
        CadlagPath::new((0..steps).map(|k| k as f64 * dt).collect(), values, 1.0).unwrap()
    }

    fn random_jumps(rng: &mut ChaCha8Rng, n: usize, d: usize) -> CadlagPath {
        let times: Vec<f64> = (0..n).map(|k| k as f64 / n as f64).collect();
        let values = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
        CadlagPath::new(times, values, 1.0).unwrap()
    }

    #[test]
    fn two_jump_lift_and_bracket() {
        let x = two_jump();
        let lift = ito_lift(&x, &LiftConfig::default()).unwrap();
        assert_eq!(lift.integral().last()[[0, 0]], 2.0);
        assert_eq!(lift.area(0.0, 1.0).unwrap(), array![[2.0]]);
        assert_eq!(bracket(&x, 1).terminal()[[0, 0]], 5.0);
        // ½(X_{0,T}² − [X]_T) = ½(9 − 5)
        let xt = x.increment(0.0, 1.0).unwrap()[0];
        assert_eq!(0.5 * (xt * xt - bracket(&x, 1).terminal()[[0, 0]]), 2.0);
        assert_eq!(lift.ito_symmetry_defect(lift.meta().level, 0.0, 1.0).unwrap(), 0.0);
        assert!(lift.meta().stabilized);
    }

    #[test]
    fn brownian_lift_stabilises() {
        let x = brownian(1, 4096, 2);
        let lift = ito_lift(&x, &LiftConfig::default()).unwrap();
        let meta = lift.meta();
        assert!(meta.stabilized && meta.gap <= meta.tol, "{meta:?}");
        assert!(lift.max_chen_defect(1000, 0) <= 1e-10 * (1.0 + lift.integral().sup_norm()));
    }

    #[test]
    fn chen_defect_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_jumps(&mut rng, 30, 2);
        let lift = ito_lift(&x, &LiftConfig::default()).unwrap();
        for &t in x.times() {
            assert_eq!(lift.chen_defect(t, t, 1.0).unwrap(), 0.0);
            assert_eq!(lift.area(t, t).unwrap(), Array2::<f64>::zeros((2, 2)));
        }
        assert!(lift.chen_defect(0.5, 0.2, 0.9).is_err());
        assert!(lift.chen_defect(0.1, 0.2, 1.1).is_err());
    }

    #[test]
    fn corrupted_dense_area_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_jumps(&mut rng, 12, 2);
        let last = x.times()[11];
        let x = x.with_horizon(last).unwrap();
        let lift = ito_lift(&x, &LiftConfig::default()).unwrap();
        let n = x.len();
        let mut dense = ndarray::Array4::zeros((n, n, 2, 2));
        for i in 0..n {
            for j in i..n {
                dense.slice_mut(ndarray::s![i, j, .., ..]).assign(&lift.area_idx(i, j));
            }
        }
        let bump = array![[0.25, 0.0], [0.0, -0.5]];
        let (i0, j0) = (3, 8);
        let mut cell = dense.slice_mut(ndarray::s![i0, j0, .., ..]);
        cell += &bump;
        let table = crate::pvar::GridTensor::new(x.times().to_vec(), dense).unwrap();
        let size = frobenius(bump.view());
        for i in 0..n {
            for k in i..n {
                for j in k..n {
                    let (s, u, t) = (x.times()[i], x.times()[k], x.times()[j]);
                    let defect = chen_defect_of(&table, &x, s, u, t).unwrap();
                    let hit = |a: usize, b: usize| i32::from((a, b) == (i0, j0));
                    let coef = hit(i, j) - hit(i, k) - hit(k, j);
                    let expected = f64::from(coef.abs()) * size;
                    assert!((defect - expected).abs() <= 1e-12, "{i} {k} {j}: {defect}");
                }
            }
        }
    }

    #[test]
    fn bracket_examples() {
        for m in [1usize, 4, 16, 64] {
            let times: Vec<f64> = (0..=m).map(|k| k as f64 / m as f64).collect();
            let values: Vec<f64> = (0..=m).map(|k| k as f64 / m as f64).collect();
            let x = CadlagPath::scalar(times, values, 1.0).unwrap();
            let b = bracket(&x, 20);
            assert_relative_eq!(b.terminal()[[0, 0]], 1.0 / m as f64, max_relative = 1e-12);
        }
    }

    #[test]
    fn bracket_is_symmetric_and_increasing() {
        let x = brownian(4, 2048, 2);
        let b = bracket(&x, 6);
        let vals = b.path.values();
        for m in vals.outer_iter() {
            assert_eq!(m, m.t());
        }
        for w in 1..vals.dim().0 {
            for k in 0..2 {
                assert!(vals[[w, k, k]] >= vals[[w - 1, k, k]]);
            }
        }
    }

    #[test]
    fn young_integral_examples() {
        let y = CadlagPath::scalar(vec![0.0, 0.5, 1.0], vec![0.0, 0.25, 1.0], 1.0).unwrap();
        assert_eq!(young_integral(&y, 1.0).unwrap().last()[[0, 0]], 0.1875);
        let one = CadlagPath::scalar(vec![0.0, 0.4], vec![1.5, -2.0], 1.0).unwrap();
        assert_eq!(young_integral(&one, 1.0).unwrap().last()[[0, 0]], 1.5 * (-2.0 - 1.5));
        assert!(young_integral(&y, 2.0).is_err());
        assert!(young_integral(&y, 0.5).is_err());
    }

    #[test]
    fn young_integral_of_identity() {
        for m in [11usize, 101, 1001] {
            let h = 1.0 / (m - 1) as f64;
            let times: Vec<f64> = (0..m).map(|k| k as f64 * h).collect();
            let y = CadlagPath::scalar(times.clone(), times, 1.0).unwrap();
            let v = young_integral(&y, 1.0).unwrap().last()[[0, 0]];
            assert!((v - 0.5).abs() <= h);
        }
    }

    #[test]
    fn perturbed_lift_reduces_to_its_parts() {
        let x = brownian(5, 1024, 2);
        let zero = x.scale(0.0).unwrap();
        let ito = ito_lift(&x, &LiftConfig::default()).unwrap();
        let pert = perturbed_lift(&x, &zero, 1.0, &LiftConfig::default()).unwrap();
        assert_eq!(ito.integral(), pert.integral());

        let y = CadlagPath::from_rows(vec![0.0, 0.3, 0.6], &[vec![0.0, 0.0], vec![1.0, -1.0], vec![3.0, 0.5]]).unwrap();
        let y = y.with_horizon(1.0).unwrap();
        let pert = perturbed_lift(&y.scale(0.0).unwrap(), &y, 1.0, &LiftConfig::default()).unwrap();
        assert_eq!(pert.integral(), &young_integral(&y, 1.0).unwrap());
        let young = young_lift(&y, 1.0, 2.5).unwrap();
        for i in 0..3 {
            for j in i..3 {
                assert_eq!(pert.area_idx(i, j), young.area_idx(i, j));
            }
        }
    }

    #[test]
    fn perturbed_cross_terms_sum_to_integral() {
        let x = brownian(6, 1024, 2);
        let times = x.times().to_vec();
        let ys: Vec<Vec<f64>> = times.iter().map(|t| vec![t.sin(), t * t]).collect();
        let y = CadlagPath::from_rows(times, &ys).unwrap().with_horizon(1.0).unwrap();
        let lift = perturbed_lift(&x, &y, 1.0, &LiftConfig::default()).unwrap();
        let ct = lift.meta().cross_terms.clone().unwrap();
        let total = lift.integral().last();
        for a in 0..2 {
            for b in 0..2 {
                let s = ct.xx[a][b] + ct.xy[a][b] + ct.yx[a][b] + ct.yy[a][b];
                assert!((s - total[[a, b]]).abs() <= 1e-10);
            }
        }
        assert!(perturbed_lift(&x, &y, 2.0, &LiftConfig::default()).is_err());
        let other = CadlagPath::scalar(vec![0.0, 0.5], vec![0.0, 1.0], 1.0).unwrap();
        assert!(perturbed_lift(&x, &other, 1.0, &LiftConfig::default()).is_err());
    }

    #[test]
    fn gaussian_diagonal_convention() {
        let x = brownian(7, 256, 2);
        let lift = gaussian_lift(&x, &LiftConfig::default()).unwrap();
        let bracket = bracket_on_grid(&x, &stopping_times(&x, lift.meta().level));
        for i in 0..x.len() {
            for j in i..x.len() {
                let a = lift.area_idx(i, j);
                let inc = x.increment_idx(i, j);
                for k in 0..2 {
                    assert_eq!(a[[k, k]], 0.5 * inc[k] * inc[k]);
                    assert!(a[[k, k]] >= 0.0);
                }
                if j % 37 == 0 && i % 11 == 0 {
                    let r = lift.ito_symmetry_residual(lift.meta().level, x.times()[i], x.times()[j]).unwrap();
                    for k in 0..2 {
                        let db = bracket[[j, k, k]] - bracket[[i, k, k]];
                        assert!((r[[k, k]] - db).abs() <= 1e-12);
                    }
                    assert!(r[[0, 1]].abs() <= 1e-12 && r[[1, 0]].abs() <= 1e-12);
                }
            }
        }
        assert!(lift.max_ibp_residual(1000, 0) <= 1e-10 * lift.scale());
        let scalar = CadlagPath::scalar(vec![0.0, 0.2, 0.5], vec![0.3, -0.4, 1.0], 1.0).unwrap();
        let l1 = gaussian_lift(&scalar, &LiftConfig::default()).unwrap();
        assert_eq!(l1.area(0.2, 1.0).unwrap()[[0, 0]], 0.5 * 1.4 * 1.4);
    }

    #[test]
    fn shift_and_scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let x = random_jumps(&mut rng, 25, 2);
            let cfg = LiftConfig::default();
            let base = ito_lift(&x, &cfg).unwrap();
            let shifted = ito_lift(&x.translate(array![3.0, -1.5].view()).unwrap(), &cfg).unwrap();
            let doubled = ito_lift(&x.scale(2.0).unwrap(), &cfg).unwrap();
            for i in 0..x.len() {
                for j in i..x.len() {
                    let a = base.area_idx(i, j);
                    let gap = frobenius((&shifted.area_idx(i, j) - &a).view());
                    assert!(gap <= 1e-12 * (1.0 + shifted.scale()), "shift gap {gap}");
                    assert_eq!(doubled.area_idx(i, j), &a * 4.0);
                }
            }
        }
    }

    #[test]
    fn ibp_holds_for_ito_lifts() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let x = random_jumps(&mut rng, 40, 3);
            let lift = ito_lift(&x, &LiftConfig::default()).unwrap();
            assert!(lift.max_ibp_residual(0, 0) <= 1e-10 * lift.scale());
        }
    }

    #[test]
    fn json_round_trip() {
        let x = brownian(10, 64, 2).with_horizon(1.5).unwrap();
        let lift = gaussian_lift(&x, &LiftConfig::default()).unwrap();
        let text = lift.to_json().unwrap();
        assert!(text.contains("\"X\":") && text.contains("\"I\":") && text.contains("\"method\":\"gaussian\""));
        let back = RoughLift::from_json(&text).unwrap();
        assert_eq!(back, lift);
        assert_eq!(back.to_json().unwrap(), text);
        let broken = text.replacen("\"p\":", "\"q\":", 1);
        let err = RoughLift::from_json(&broken).unwrap_err().to_string();
        assert!(err.contains("`p`"), "{err}");
    }

    #[test]
    fn config_validation_and_strict_mode() {
        let x = brownian(11, 256, 1);
        let bad = LiftConfig { n_min: 5, n_max: 5, ..LiftConfig::default() };
        assert!(ito_lift(&x, &bad).is_err());
        let bad = LiftConfig { p: 3.0, ..LiftConfig::default() };
        assert!(ito_lift(&x, &bad).is_err());
        let strict = LiftConfig { n_min: 0, n_max: 2, tol: Some(1e-12), strict: true, ..LiftConfig::default() };
        assert!(matches!(ito_lift(&x, &strict), Err(Error::Convergence { level: 2, .. })));
        let lax = LiftConfig { strict: false, ..strict };
        let lift = ito_lift(&x, &lax).unwrap();
        assert!(!lift.meta().stabilized);
        assert_eq!(lift.meta().level, 2);
    }

    #[test]
    fn area_variation_is_finite_and_grid_monotone() {
        let x = brownian(12, 512, 2);
        let lift = ito_lift(&x, &LiftConfig::default()).unwrap();
        let coarse = lift.area_variation(&lift.subgrid(64)).unwrap();
        let mid = lift.area_variation(&lift.subgrid(8)).unwrap();
        let fine = lift.area_variation(&lift.subgrid(1)).unwrap();
        assert!(fine.value.is_finite());
        assert!(coarse.value <= mid.value && mid.value <= fine.value);
    }
}
