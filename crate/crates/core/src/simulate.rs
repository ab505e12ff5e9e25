//! Seeded staircase generators.
//!
//! Every model draws from a single `ChaCha8Rng::seed_from_u64(seed)` stream
//! in a fixed order, so identical specs give identical bytes on every
//! platform:
//!
//! 1. Gaussian increments, component-major then time-major
//!    (`brownian`, `ito_semimartingale`, `fbm`, `fv_staircase`).
//! 2. Poisson arrival gaps, in time order (`compound_poisson`,
//!    `ito_semimartingale`).
//! 3. Jump sizes, component-major then jump-major.
//!
//! The uniform grid is `t_k = k T / steps` for `k < steps`; compound
//! Poisson jump times are inserted into it exactly.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{IntoParallelRefIterator, ParallelIterator};
use crate::paths::CadlagPath;
use crate::pvar::{self, BRUTE_FORCE_LIMIT};

/// Dense Cholesky guardrail for fractional Brownian motion.
pub const FBM_MAX_STEPS: usize = 4096;

/// Grid-size limit of [`covariance_2d_variation`].
pub const COVARIANCE_GRID_LIMIT: usize = 64;

/// Grids up to this size are also searched exhaustively.
pub const COVARIANCE_EXHAUSTIVE_LIMIT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Brownian,
    CompoundPoisson,
    ItoSemimartingale,
    Fbm,
    FvStaircase,
}

impl Model {
    pub const ALL: [Model; 5] =
        [Model::Brownian, Model::CompoundPoisson, Model::ItoSemimartingale, Model::Fbm, Model::FvStaircase];

    pub fn name(self) -> &'static str {
        match self {
            Model::Brownian => "brownian",
            Model::CompoundPoisson => "compound_poisson",
            Model::ItoSemimartingale => "ito_semimartingale",
            Model::Fbm => "fbm",
            Model::FvStaircase => "fv_staircase",
        }
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Model::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown model `{s}`")))
    }
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub model: Model,
    #[serde(rename = "d")]
    pub dim: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub steps: usize,
    pub seed: u64,
    /// Starting point; empty means the origin.
    #[serde(default)]
    pub x0: Vec<f64>,
    /// Drift vector; empty means zero. For `fv_staircase` it is the mean
    /// of the normalised increments.
    #[serde(default)]
    pub drift: Vec<f64>,
    /// `d × d` volatility matrix; `None` means the identity.
    #[serde(default)]
    pub volatility: Option<Vec<Vec<f64>>>,
    /// Jump intensity `λ`.
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub jump_mean: f64,
    #[serde(default = "one")]
    pub jump_std: f64,
    #[serde(default = "half")]
    pub hurst: f64,
    /// Variation index of `fv_staircase`: increments scale like `dt^{1/q}`.
    #[serde(default = "one")]
    pub q: f64,
}

impl GeneratorSpec {
    pub fn new(model: Model, dim: usize, horizon: f64, steps: usize, seed: u64) -> Self {
        GeneratorSpec {
            model,
            dim,
            horizon,
            steps,
            seed,
            x0: Vec::new(),
            drift: Vec::new(),
            volatility: None,
            lambda: 0.0,
            jump_mean: 0.0,
            jump_std: 1.0,
            hurst: 0.5,
            q: 1.0,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        GeneratorSpec { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Domain(msg));
        if self.dim == 0 {
            return fail("dimension must be at least 1".into());
        }
        if self.steps < 2 {
            return fail(format!("steps must be at least 2, got {}", self.steps));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return fail(format!("horizon must be positive, got {}", self.horizon));
        }
        for (name, v) in [("x0", &self.x0), ("drift", &self.drift)] {
            if !v.is_empty() && v.len() != self.dim {
                return fail(format!("{name} has length {}, expected {}", v.len(), self.dim));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return fail(format!("{name} must be finite"));
            }
        }
        if let Some(vol) = &self.volatility {
            if vol.len() != self.dim || vol.iter().any(|r| r.len() != self.dim) {
                return fail(format!("volatility must be {0}×{0}", self.dim));
            }
            if vol.iter().flatten().any(|x| !x.is_finite()) {
                return fail("volatility must be finite".into());
            }
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return fail(format!("lambda must be finite and ≥ 0, got {}", self.lambda));
        }
        if !self.jump_mean.is_finite() || !(self.jump_std >= 0.0) || !self.jump_std.is_finite() {
            return fail("jump size parameters must be finite with jump_std ≥ 0".into());
        }
        if !(self.hurst >= 0.5 && self.hurst < 1.0) {
            return fail(format!("hurst must lie in [0.5, 1), got {}", self.hurst));
        }
        if !(1.0..2.0).contains(&self.q) {
            return fail(format!("q must lie in [1, 2), got {}", self.q));
        }
        if self.model == Model::Fbm && self.steps > FBM_MAX_STEPS {
            return Err(Error::Size { steps: self.steps, limit: FBM_MAX_STEPS });
        }
        Ok(())
    }

    fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    fn grid(&self) -> Vec<f64> {
        (0..self.steps).map(|k| k as f64 * self.horizon / self.steps as f64).collect()
    }

    fn x0(&self) -> Vec<f64> {
        if self.x0.is_empty() { vec![0.0; self.dim] } else { self.x0.clone() }
    }

    fn drift(&self) -> Vec<f64> {
        if self.drift.is_empty() { vec![0.0; self.dim] } else { self.drift.clone() }
    }
}

/// A validated spec with any seed-independent work (the fBm Cholesky
/// factor) done once, for sampling many seeds.
#[derive(Debug, Clone)]
pub struct PathGenerator {
    spec: GeneratorSpec,
    cholesky: Option<DMatrix<f64>>,
}

/// A sampled path together with the jump times inserted into its grid.
#[derive(Debug, Clone)]
pub struct Sample {
    pub path: CadlagPath,
    pub jump_times: Vec<f64>,
}

impl PathGenerator {
    pub fn new(spec: &GeneratorSpec) -> Result<Self> {
        spec.validate()?;
        let cholesky = if spec.model == Model::Fbm {
            let grid = spec.grid();
            let kernel = CovarianceKernel::Fbm { hurst: spec.hurst };
            let m = grid.len() - 1;
            let cov = DMatrix::from_fn(m, m, |a, b| kernel.cov(grid[a + 1], grid[b + 1]));
            let chol = cov
                .cholesky()
                .ok_or_else(|| Error::domain("fbm grid covariance is not positive definite"))?;
            Some(chol.l())
        } else {
            None
        };
        Ok(PathGenerator { spec: spec.clone(), cholesky })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    pub fn sample(&self, seed: u64) -> CadlagPath {
        self.sample_with_jumps(seed).path
    }

    pub fn sample_with_jumps(&self, seed: u64) -> Sample {
        let spec = &self.spec;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = spec.grid();
        let (n, d) = (grid.len(), spec.dim);
        let x0 = spec.x0();
        let mut base = Array2::<f64>::zeros((n, d));
        match spec.model {
            Model::Brownian => {
                let w = brownian_increments(&mut rng, n, d, spec.dt());
                cumulate(&mut base, &w);
            }
            Model::ItoSemimartingale => {
                let w = brownian_increments(&mut rng, n, d, spec.dt());
                let mut bm = Array2::zeros((n, d));
                cumulate(&mut bm, &w);
                let vol = spec.volatility.clone();
                let drift = spec.drift();
                for k in 0..n {
                    for i in 0..d {
                        let diffusion: f64 = match &vol {
                            Some(v) => (0..d).map(|j| v[i][j] * bm[[k, j]]).sum(),
                            None => bm[[k, i]],
                        };
                        base[[k, i]] = drift[i] * grid[k] + diffusion;
                    }
                }
            }
            Model::Fbm => {
                let l = self.cholesky.as_ref().expect("factor built for fbm");
                for i in 0..d {
                    let z = DVector::from_fn(n - 1, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let y = l * z;
                    for k in 1..n {
                        base[[k, i]] = y[k - 1];
                    }
                }
            }
            Model::FvStaircase => {
                let drift = spec.drift();
                let scale = spec.dt().powf(1.0 / spec.q);
                let mut inc = Array2::zeros((n, d));
                for i in 0..d {
                    for k in 1..n {
                        let z: f64 = rng.sample(StandardNormal);
                        inc[[k, i]] = (drift[i] + z) * scale;
                    }
                }
                cumulate(&mut base, &inc);
            }
            Model::CompoundPoisson => {}
        }
        let jumps = match spec.model {
            Model::CompoundPoisson | Model::ItoSemimartingale => compound_poisson_jumps(&mut rng, spec),
            _ => Vec::new(),
        };
        let path = merge_jumps(&grid, &base, &x0, &jumps, spec.horizon);
        Sample { path, jump_times: jumps.iter().map(|(t, _)| *t).collect() }
    }

    /// Paths for every seed, generated in parallel, returned in seed order.
    pub fn sample_batch(&self, seeds: &[u64]) -> Vec<CadlagPath> {
        seeds.par_iter().map(|&s| self.sample(s)).collect()
    }
}

/// Staircase path for `spec`.
pub fn generate(spec: &GeneratorSpec) -> Result<CadlagPath> {
    Ok(PathGenerator::new(spec)?.sample(spec.seed))
}

fn brownian_increments(rng: &mut ChaCha8Rng, n: usize, d: usize, dt: f64) -> Array2<f64> {
    let sd = dt.sqrt();
    let mut inc = Array2::zeros((n, d));
    for i in 0..d {
        for k in 1..n {
            let z: f64 = rng.sample(StandardNormal);
            inc[[k, i]] = sd * z;
        }
    }
    inc
}

fn cumulate(out: &mut Array2<f64>, inc: &Array2<f64>) {
    for k in 1..out.nrows() {
        for i in 0..out.ncols() {
            out[[k, i]] = out[[k - 1, i]] + inc[[k, i]];
        }
    }
}

/// Arrival times in `(0, T]` followed by their jump vectors.
fn compound_poisson_jumps(rng: &mut ChaCha8Rng, spec: &GeneratorSpec) -> Vec<(f64, Vec<f64>)> {
    if spec.lambda == 0.0 {
        return Vec::new();
    }
    let gaps = Exp::new(spec.lambda).expect("lambda validated positive");
    let mut times = Vec::new();
    let mut t = 0.0;
    loop {
        t += gaps.sample(rng);
        if t > spec.horizon {
            break;
        }
        if t > 0.0 {
            times.push(t);
        }
    }
    let mut sizes = vec![vec![0.0; spec.dim]; times.len()];
    for i in 0..spec.dim {
        for size in sizes.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            size[i] = spec.jump_mean + spec.jump_std * z;
        }
    }
    times.into_iter().zip(sizes).collect()
}

/// `X_u = x0 + base(t_k) + Σ_{jumps ≤ u} ΔJ` on the union of the grid and
/// the jump times, `k` the last grid index `≤ u`.
fn merge_jumps(grid: &[f64], base: &Array2<f64>, x0: &[f64], jumps: &[(f64, Vec<f64>)], horizon: f64) -> CadlagPath {
    let d = x0.len();
    let mut times = Vec::with_capacity(grid.len() + jumps.len());
    let mut rows: Vec<f64> = Vec::with_capacity((grid.len() + jumps.len()) * d);
    let mut level = x0.to_vec();
    let (mut g, mut j) = (0, 0);
    let mut k = 0;
    while g < grid.len() || j < jumps.len() {
        let next_grid = grid.get(g).copied().unwrap_or(f64::INFINITY);
        let next_jump = jumps.get(j).map_or(f64::INFINITY, |(t, _)| *t);
        let u = next_grid.min(next_jump);
        if next_grid == u {
            k = g;
            g += 1;
        }
        while j < jumps.len() && jumps[j].0 == u {
            for (l, v) in level.iter_mut().zip(&jumps[j].1) {
                *l += v;
            }
            j += 1;
        }
        times.push(u);
        rows.extend((0..d).map(|i| level[i] + base[[k, i]]));
    }
    let n = times.len();
    let values = Array2::from_shape_vec((n, d), rows).expect("rows match times");
    CadlagPath::new(times, values, horizon).expect("generator output is a valid path")
}

/// Covariance `(s, u) ↦ 𝔼[X_s X_u]` of one component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceKernel {
    /// `min(s, u)`
    Brownian,
    /// `½(s^{2H} + u^{2H} − |s − u|^{2H})`
    Fbm { hurst: f64 },
}

/// Anything usable as a covariance by [`covariance_2d_variation`].
pub trait Covariance: Sync {
    fn cov(&self, s: f64, u: f64) -> f64;

    /// `𝔼[X_{s,t} X_{u,v}]`, the rectangular increment of the covariance.
    fn rect(&self, s: f64, t: f64, u: f64, v: f64) -> f64 {
        self.cov(t, v) - self.cov(t, u) - self.cov(s, v) + self.cov(s, u)
    }
}

impl Covariance for CovarianceKernel {
    fn cov(&self, s: f64, u: f64) -> f64 {
        match *self {
            CovarianceKernel::Brownian => s.min(u),
            CovarianceKernel::Fbm { hurst } => {
                let h2 = 2.0 * hurst;
                0.5 * (s.powf(h2) + u.powf(h2) - (s - u).abs().powf(h2))
            }
        }
    }
}

impl<F: Fn(f64, f64) -> f64 + Sync> Covariance for F {
    fn cov(&self, s: f64, u: f64) -> f64 {
        self(s, u)
    }
}

impl CovarianceKernel {
    pub fn cov(&self, s: f64, u: f64) -> f64 {
        Covariance::cov(self, s, u)
    }

    /// Smallest eigenvalue of the covariance matrix on `grid`.
    pub fn min_eigenvalue(&self, grid: &[f64]) -> f64 {
        let m = grid.len();
        let cov = DMatrix::from_fn(m, m, |a, b| self.cov(grid[a], grid[b]));
        cov.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariance2dVariation {
    pub q: f64,
    /// Best double sum found, `max(axis_dp, exhaustive)`.
    pub raw_sup: f64,
    pub value: f64,
    pub rows: Vec<f64>,
    pub cols: Vec<f64>,
    /// Result of alternating per-axis dynamic programming.
    pub axis_dp: f64,
    /// Exhaustive double enumeration, for grids of at most
    /// [`COVARIANCE_EXHAUSTIVE_LIMIT`] points.
    pub exhaustive: Option<f64>,
}

fn double_sum(k: &dyn Covariance, q: f64, grid: &[f64], rows: &[usize], cols: &[usize]) -> f64 {
    let mut total = 0.0;
    for a in rows.windows(2) {
        for b in cols.windows(2) {
            total += k.rect(grid[a[0]], grid[a[1]], grid[b[0]], grid[b[1]]).abs().powf(q);
        }
    }
    total
}

/// Best partition of one axis with the other axis held fixed.
fn axis_step(k: &dyn Covariance, q: f64, grid: &[f64], fixed: &[usize]) -> (f64, Vec<usize>) {
    let cost = |i: usize, j: usize| {
        fixed
            .windows(2)
            .map(|b| k.rect(grid[i], grid[j], grid[b[0]], grid[b[1]]).abs().powf(q))
            .sum::<f64>()
    };
    let dp = pvar::partition_dp(grid.len(), cost);
    let last = grid.len() - 1;
    (dp.best[last], dp.partition_to(last))
}

/// `sup_{P,P′} Σ_{[s,t]∈P, [u,v]∈P′} |𝔼[X_{s,t} X_{u,v}]|^q` over partitions
/// drawn from `grid`.
///
/// The search alternates exact one-axis dynamic programs from the coarsest
/// and finest starting partitions until neither axis improves, which yields
/// a lower bound; grids of at most ten points are additionally enumerated
/// exhaustively. Either way the result is a lower bound for the continuum
/// supremum.
pub fn covariance_2d_variation(k: &dyn Covariance, q: f64, grid: &[f64]) -> Result<Covariance2dVariation> {
    if !(q >= 1.0) || !q.is_finite() {
        return Err(Error::domain(format!("q must be ≥ 1, got {q}")));
    }
    if grid.len() > COVARIANCE_GRID_LIMIT {
        return Err(Error::TooLarge { size: grid.len(), limit: COVARIANCE_GRID_LIMIT });
    }
    if grid.len() < 2 {
        return Err(Error::domain("grid needs at least two points"));
    }
    pvar::check_grid(grid, grid[grid.len() - 1])?;
    let m = grid.len();
    let mut best = (f64::NEG_INFINITY, Vec::new(), Vec::new());
    for start in [vec![0, m - 1], (0..m).collect::<Vec<_>>()] {
        let mut cols = start;
        let mut current = f64::NEG_INFINITY;
        for _ in 0..64 {
            let (_, rows) = axis_step(k, q, grid, &cols);
            let (v, new_cols) = axis_step(k, q, grid, &rows);
            if v <= current {
                break;
            }
            current = v;
            cols = new_cols;
            if v > best.0 {
                best = (v, rows, cols.clone());
            }
        }
    }
    let axis_dp = best.0;
    let mut exhaustive = None;
    if m <= COVARIANCE_EXHAUSTIVE_LIMIT {
        debug_assert!(m <= BRUTE_FORCE_LIMIT);
        let partitions: Vec<Vec<usize>> = (0..1usize << (m - 2))
            .map(|mask| {
                let mut idx = vec![0];
                idx.extend((0..m - 2).filter(|b| mask >> b & 1 == 1).map(|b| b + 1));
                idx.push(m - 1);
                idx
            })
            .collect();
        let mut top = (f64::NEG_INFINITY, 0, 0);
        for (a, rows) in partitions.iter().enumerate() {
            for (b, cols) in partitions.iter().enumerate() {
                let v = double_sum(k, q, grid, rows, cols);
                if v > top.0 {
                    top = (v, a, b);
                }
            }
        }
        exhaustive = Some(top.0);
        if top.0 > best.0 {
            best = (top.0, partitions[top.1].clone(), partitions[top.2].clone());
        }
    }
    let raw_sup = best.0;
    Ok(Covariance2dVariation {
        q,
        raw_sup,
        value: raw_sup.powf(1.0 / q),
        rows: best.1.into_iter().map(|i| grid[i]).collect(),
        cols: best.2.into_iter().map(|i| grid[i]).collect(),
        axis_dp,
        exhaustive,
    })
}

/// Draws `n` normals with the generator's stream conventions; exposed for
/// moment checks.
pub fn standard_normals(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}
