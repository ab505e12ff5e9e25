//! Exact p-variation by dynamic programming over the sample grid.
//!
//! For a staircase path every supremum over partitions of `[0, T]` is
//! attained by a partition whose points are sample times: points inside a
//! constancy interval can be moved to its left end without changing any
//! increment. The recurrence
//!
//! ```text
//! best[0] = 0,   best[j] = max_{i<j} best[i] + |X_{t_i, t_j}|^p
//! ```
//!
//! therefore yields the exact value in `O(n²)` cost evaluations. The same
//! recurrence drives the two-parameter variation of `𝕏` over a user grid.

use ndarray::{Array2, Array4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, IntoParallelIterator, ParallelIterator};
use crate::paths::{frobenius, CadlagPath};

/// Largest grid accepted by the exhaustive oracle.
pub const BRUTE_FORCE_LIMIT: usize = 22;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationResult {
    pub p: f64,
    /// `raw_sup^(1/p)` for paths, `raw_sup^(1/q)` for two-parameter functions.
    pub value: f64,
    pub raw_sup: f64,
    pub partition: Vec<f64>,
}

/// Output of [`partition_dp`]: `best[j]` is the optimal sum over partitions
/// of the first `j + 1` grid points that end exactly at point `j`.
#[derive(Debug, Clone)]
pub struct PartitionDp {
    pub best: Vec<f64>,
    back: Vec<usize>,
}

impl PartitionDp {
    /// Grid indices of the optimal partition ending at `j`.
    pub fn partition_to(&self, j: usize) -> Vec<usize> {
        let mut idx = vec![j];
        let mut k = j;
        while k > 0 {
            k = self.back[k];
            idx.push(k);
        }
        idx.reverse();
        idx
    }
}

/// Runs the recurrence over `m` grid points. Ties prefer the smaller `i`,
/// i.e. the coarser partition.
pub fn partition_dp<F>(m: usize, cost: F) -> PartitionDp
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let mut best = vec![0.0; m];
    let mut back = vec![0; m];
    for j in 1..m {
        let snapshot = &best[..j];
        let (v, i) = par::argmax(j, |i| snapshot[i] + cost(i, j)).expect("j >= 1");
        best[j] = v;
        back[j] = i;
    }
    PartitionDp { best, back }
}

pub(crate) fn check_exponent(p: f64, what: &str) -> Result<()> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::domain(format!("{what} must be a finite number ≥ 1, got {p}")));
    }
    Ok(())
}

fn increment_cost(x: &CadlagPath, p: f64) -> impl Fn(usize, usize) -> f64 + Sync + '_ {
    move |i, j| x.distance_idx(i, j).powf(p)
}

fn partition_times(x: &CadlagPath, idx: &[usize]) -> Vec<f64> {
    let mut times: Vec<f64> = idx.iter().map(|&i| x.times()[i]).collect();
    // X_T equals the last sample, so the final point can sit at the horizon.
    if let Some(last) = times.last_mut() {
        *last = x.horizon();
    }
    if times.len() == 1 && x.horizon() > 0.0 {
        times.insert(0, 0.0);
    }
    times
}

/// `‖X‖_{p-var}` over `[0, T]`.
pub fn p_variation(x: &CadlagPath, p: f64) -> Result<VariationResult> {
    check_exponent(p, "p")?;
    let dp = partition_dp(x.len(), increment_cost(x, p));
    let last = x.len() - 1;
    let raw_sup = dp.best[last];
    Ok(VariationResult {
        p,
        value: raw_sup.powf(1.0 / p),
        raw_sup,
        partition: partition_times(x, &dp.partition_to(last)),
    })
}

/// Raw p-variation restricted to `[s, t]`.
pub fn p_variation_between(x: &CadlagPath, p: f64, s: f64, t: f64) -> Result<VariationResult> {
    check_exponent(p, "p")?;
    if s > t {
        return Err(Error::domain(format!("interval [{s}, {t}] is reversed")));
    }
    let a = x.index_at(s)?;
    let b = x.index_at(t)?;
    let cost = |i: usize, j: usize| x.distance_idx(a + i, a + j).powf(p);
    let dp = partition_dp(b - a + 1, cost);
    let raw_sup = dp.best[b - a];
    let mut partition: Vec<f64> = dp
        .partition_to(b - a)
        .into_iter()
        .map(|i| x.times()[a + i])
        .collect();
    partition[0] = s;
    if partition.len() == 1 {
        partition.push(t);
    } else {
        *partition.last_mut().unwrap() = t;
    }
    Ok(VariationResult { p, value: raw_sup.powf(1.0 / p), raw_sup, partition })
}

/// Raw p-variation on every sample interval `[t_i, t_j]`, as an `n × n`
/// upper-triangular table. Quadratic memory; intended for small paths.
pub fn interval_variation_table(x: &CadlagPath, p: f64) -> Result<Array2<f64>> {
    check_exponent(p, "p")?;
    let n = x.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|a| {
            let cost = |i: usize, j: usize| x.distance_idx(a + i, a + j).powf(p);
            let mut row = vec![0.0; n];
            row[a..].copy_from_slice(&partition_dp(n - a, cost).best);
            row
        })
        .collect();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((n, n), flat).expect("n × n"))
}

/// A function `(s, t) ↦ ℝ^{d×d}` on `0 ≤ s ≤ t ≤ T`.
///
/// Implementors may assume `s` and `t` have been validated by the caller.
pub trait TwoParamTensor: Sync {
    fn dim(&self) -> usize;
    fn horizon(&self) -> f64;
    fn at(&self, s: f64, t: f64) -> Array2<f64>;

    /// Frobenius norm of [`at`](Self::at).
    fn norm_at(&self, s: f64, t: f64) -> f64 {
        frobenius(self.at(s, t).view())
    }
}

/// A two-parameter function given by a closure.
pub struct FnTensor<F> {
    dim: usize,
    horizon: f64,
    f: F,
}

impl<F> FnTensor<F>
where
    F: Fn(f64, f64) -> Array2<f64> + Sync,
{
    pub fn new(dim: usize, horizon: f64, f: F) -> Self {
        FnTensor { dim, horizon, f }
    }
}

impl<F> TwoParamTensor for FnTensor<F>
where
    F: Fn(f64, f64) -> Array2<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn horizon(&self) -> f64 {
        self.horizon
    }
    fn at(&self, s: f64, t: f64) -> Array2<f64> {
        (self.f)(s, t)
    }
}

/// Explicit values `W[i][j]` on pairs of grid points.
#[derive(Debug, Clone)]
pub struct GridTensor {
    grid: Vec<f64>,
    values: Array4<f64>,
}

impl GridTensor {
    /// `values` has shape `m × m × d × d`; only `i ≤ j` entries are read.
    pub fn new(grid: Vec<f64>, values: Array4<f64>) -> Result<Self> {
        let (a, b, c, d) = values.dim();
        if a != grid.len() || b != grid.len() || c != d || c == 0 {
            return Err(Error::domain("grid tensor shape does not match its grid"));
        }
        check_grid(&grid, *grid.last().unwrap_or(&0.0))?;
        Ok(GridTensor { grid, values })
    }

    fn locate(&self, t: f64) -> usize {
        self.grid
            .binary_search_by(|g| g.total_cmp(&t))
            .unwrap_or_else(|_| panic!("time {t} is not a point of the tensor grid"))
    }
}

impl TwoParamTensor for GridTensor {
    fn dim(&self) -> usize {
        self.values.dim().2
    }
    fn horizon(&self) -> f64 {
        *self.grid.last().unwrap()
    }
    fn at(&self, s: f64, t: f64) -> Array2<f64> {
        let (i, j) = (self.locate(s), self.locate(t));
        self.values.slice(ndarray::s![i, j, .., ..]).to_owned()
    }
}

pub(crate) fn check_grid(grid: &[f64], horizon: f64) -> Result<()> {
    if grid.first() != Some(&0.0) || grid.last() != Some(&horizon) {
        return Err(Error::domain(format!("grid must start at 0 and end at the horizon {horizon}")));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("grid must be strictly increasing"));
    }
    Ok(())
}

/// `(sup_P Σ |W_{s,t}|^q)^{1/q}` over partitions drawn from `grid`.
///
/// Exact when `W` comes from a lift whose path jumps only on `grid`;
/// otherwise a grid-restricted lower bound of the continuum supremum.
pub fn two_param_variation(w: &dyn TwoParamTensor, q: f64, grid: &[f64]) -> Result<VariationResult> {
    check_exponent(q, "q")?;
    check_grid(grid, w.horizon())?;
    let dp = partition_dp(grid.len(), |i, j| w.norm_at(grid[i], grid[j]).powf(q));
    let last = grid.len() - 1;
    let raw_sup = dp.best[last];
    Ok(VariationResult {
        p: q,
        value: raw_sup.powf(1.0 / q),
        raw_sup,
        partition: dp.partition_to(last).into_iter().map(|i| grid[i]).collect(),
    })
}

/// Exhaustive maximum over all `2^(m-2)` partitions of an `m`-point grid.
/// Returns the optimal sum and the grid indices of a maximiser.
pub fn brute_force_partition<F>(m: usize, cost: F) -> Result<(f64, Vec<usize>)>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    if m > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge { size: m, limit: BRUTE_FORCE_LIMIT });
    }
    if m <= 1 {
        return Ok((0.0, vec![0]));
    }
    let interior = m - 2;
    let sum_for = |mask: usize| {
        let mut prev = 0;
        let mut total = 0.0;
        for k in 0..interior {
            if mask >> k & 1 == 1 {
                total += cost(prev, k + 1);
                prev = k + 1;
            }
        }
        total + cost(prev, m - 1)
    };
    let (raw, mask) = par::argmax(1 << interior, sum_for).expect("at least one partition");
    let mut idx = vec![0];
    idx.extend((0..interior).filter(|k| mask >> k & 1 == 1).map(|k| k + 1));
    idx.push(m - 1);
    Ok((raw, idx))
}

/// Test oracle for [`p_variation`]: enumerates every partition of the
/// sample grid. Refuses paths with more than [`BRUTE_FORCE_LIMIT`] samples.
pub fn brute_force_variation(x: &CadlagPath, p: f64) -> Result<VariationResult> {
    check_exponent(p, "p")?;
    let (raw_sup, idx) = brute_force_partition(x.len(), increment_cost(x, p))?;
    Ok(VariationResult { p, value: raw_sup.powf(1.0 / p), raw_sup, partition: partition_times(x, &idx) })
}

/// Test oracle for [`two_param_variation`].
pub fn brute_force_two_param(w: &dyn TwoParamTensor, q: f64, grid: &[f64]) -> Result<VariationResult> {
    check_exponent(q, "q")?;
    check_grid(grid, w.horizon())?;
    let (raw_sup, idx) = brute_force_partition(grid.len(), |i, j| w.norm_at(grid[i], grid[j]).powf(q))?;
    Ok(VariationResult {
        p: q,
        value: raw_sup.powf(1.0 / q),
        raw_sup,
        partition: idx.into_iter().map(|i| grid[i]).collect(),
    })
}

/// Right-hand side of the Young-type estimate for `∫Xⁿ⊗dX` over `[s, t]`:
///
/// ```text
/// max{ 2^-n c^(1/q),  2^(n(q-2)) c + c^(2/q) }
/// ```
///
/// with the estimate's absolute constant set to 1. Measured discrepancies
/// should be compared against `C · young_bound(..)` for a calibrated `C`.
pub fn young_bound(c_st: f64, n: u32, q: f64) -> Result<f64> {
    if !(q > 2.0 && q < 3.0) {
        return Err(Error::domain(format!("q must lie in (2, 3), got {q}")));
    }
    if !(c_st >= 0.0) || !c_st.is_finite() {
        return Err(Error::domain(format!("control must be finite and ≥ 0, got {c_st}")));
    }
    let n = f64::from(n);
    let small = (-n).exp2() * c_st.powf(1.0 / q);
    let large = (n * (q - 2.0)).exp2() * c_st + c_st.powf(2.0 / q);
    Ok(small.max(large))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(times: &[f64], values: &[f64]) -> CadlagPath {
        CadlagPath::scalar(times.to_vec(), values.to_vec(), *times.last().unwrap()).unwrap()
    }

    fn random_path(rng: &mut ChaCha8Rng, n: usize, d: usize) -> CadlagPath {
        let mut times = vec![0.0];
        for _ in 1..n {
            let last = *times.last().unwrap();
            times.push(last + rng.random_range(0.01..1.0));
        }
        let values = Array2::from_shape_fn((n, d), |_| rng.random_range(-2.0..2.0));
        let horizon = times[n - 1];
        CadlagPath::new(times, values, horizon).unwrap()
    }

    #[test]
    fn total_jump_mass_at_p_one() {
        let x = scalar(&[0.0, 0.3, 0.6, 1.0], &[0.0, 1.0, 0.0, 0.0]);
        let r = p_variation(&x, 1.0).unwrap();
        assert_eq!(r.raw_sup, 2.0);
        assert_eq!(r.value, 2.0);
        // 0.6 → 1.0 is a zero increment, the coarser partition wins the tie.
        assert_eq!(r.partition, vec![0.0, 0.3, 1.0]);
    }

    #[test]
    fn monotone_path_prefers_single_interval() {
        let x = scalar(&[0.0, 0.5, 1.0], &[0.0, 1.0, 2.0]);
        let r = p_variation(&x, 2.0).unwrap();
        assert_eq!(r.raw_sup, 4.0);
        assert_eq!(r.value, 2.0);
        assert_eq!(r.partition, vec![0.0, 1.0]);
    }

    #[test]
    fn dp_matches_exhaustive_on_ten_sample_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random_path(&mut rng, 10, 2);
        let dp = p_variation(&x, 2.5).unwrap();
        let bf = brute_force_variation(&x, 2.5).unwrap();
        assert_relative_eq!(dp.raw_sup, bf.raw_sup, max_relative = 1e-12);
    }

    #[test]
    fn exponent_below_one_is_rejected() {
        let x = scalar(&[0.0, 1.0], &[0.0, 1.0]);
        assert!(matches!(p_variation(&x, 0.5), Err(Error::Domain(_))));
        assert!(matches!(p_variation(&x, f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(brute_force_variation(&x, 0.99), Err(Error::Domain(_))));
    }

    #[test]
    fn brute_force_examples() {
        let jump = scalar(&[0.0, 0.4, 1.0], &[1.0, -0.5, -0.5]);
        assert_eq!(brute_force_variation(&jump, 2.0).unwrap().raw_sup, 2.25);
        let flat = scalar(&[0.0, 0.2, 0.9, 1.0], &[3.0, 3.0, 3.0, 3.0]);
        assert_eq!(brute_force_variation(&flat, 1.5).unwrap().raw_sup, 0.0);
        let big = scalar(&(0..23).map(f64::from).collect::<Vec<_>>(), &[0.0; 23]);
        assert!(matches!(brute_force_variation(&big, 2.0), Err(Error::TooLarge { size: 23, .. })));
    }

    #[test]
    fn agrees_with_brute_force_on_random_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..300 {
            let n = rng.random_range(1..=12);
            let d = rng.random_range(1..=3);
            let x = random_path(&mut rng, n, d);
            for p in [1.0, 1.5, 2.0, 2.5] {
                let a = p_variation(&x, p).unwrap().raw_sup;
                let b = brute_force_variation(&x, p).unwrap().raw_sup;
                assert_relative_eq!(a, b, max_relative = 1e-12, epsilon = 1e-300);
            }
        }
    }

    #[test]
    fn partition_attains_the_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_path(&mut rng, 12, 2).with_horizon(20.0).unwrap();
        let r = p_variation(&x, 2.5).unwrap();
        assert_eq!(r.partition[0], 0.0);
        assert_eq!(*r.partition.last().unwrap(), 20.0);
        let sum: f64 = r
            .partition
            .windows(2)
            .map(|w| crate::paths::norm(x.increment(w[0], w[1]).unwrap().view()).powf(2.5))
            .sum();
        assert_relative_eq!(sum, r.raw_sup, max_relative = 1e-12);
    }

    #[test]
    fn reparametrisation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_path(&mut rng, 15, 2);
        let warped: Vec<f64> = x.times().iter().map(|t| t * t * t + 2.0 * t).collect();
        let horizon = *warped.last().unwrap();
        let y = x.retime(warped, horizon).unwrap();
        for p in [1.0, 2.0, 2.7] {
            assert_eq!(p_variation(&x, p).unwrap().raw_sup, p_variation(&y, p).unwrap().raw_sup);
        }
    }

    #[test]
    fn p_one_monotone_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.random_range(2..40);
            let mut v = vec![0.0];
            for _ in 1..n {
                let last = *v.last().unwrap();
                v.push(last + rng.random_range(0.0..1.0));
            }
            let t: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let x = scalar(&t, &v);
            let direct: f64 = v.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
            assert_relative_eq!(p_variation(&x, 1.0).unwrap().raw_sup, direct, max_relative = 1e-12);
        }
    }

    #[test]
    fn norm_is_non_increasing_in_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let n = rng.random_range(2..30);
            let times: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let values = Array2::from_shape_fn((n, 2), |_| rng.random_range(0.0..0.7));
            let x = CadlagPath::new(times, values, (n - 1) as f64).unwrap();
            let mut prev = f64::INFINITY;
            for p in [1.0, 1.25, 1.5, 2.0, 2.5, 3.0, 4.0] {
                let v = p_variation(&x, p).unwrap().value;
                assert!(v <= prev * (1.0 + 1e-12));
                prev = v;
            }
        }
    }

    #[test]
    fn two_param_zero_and_squares() {
        let zero = FnTensor::new(2, 1.0, |_, _| Array2::zeros((2, 2)));
        let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
        let r = two_param_variation(&zero, 1.0, &grid).unwrap();
        assert_eq!((r.raw_sup, r.value), (0.0, 0.0));

        let sq = FnTensor::new(1, 1.0, |s: f64, t: f64| array![[(t - s) * (t - s)]]);
        let r = two_param_variation(&sq, 1.0, &grid).unwrap();
        assert_eq!(r.raw_sup, 1.0);
        assert_eq!(r.partition, vec![0.0, 1.0]);
    }

    #[test]
    fn two_param_grid_validation() {
        let zero = FnTensor::new(1, 1.0, |_, _| Array2::zeros((1, 1)));
        assert!(two_param_variation(&zero, 1.0, &[0.0, 0.5]).is_err());
        assert!(two_param_variation(&zero, 1.0, &[0.1, 1.0]).is_err());
        assert!(two_param_variation(&zero, 1.0, &[0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(two_param_variation(&zero, 0.5, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn two_param_grid_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let coeffs: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = FnTensor::new(2, 1.0, move |s: f64, t: f64| {
            let a = (10.0 * t).sin() - (10.0 * s).sin();
            let b = t.powi(3) - s.powi(3);
            array![[coeffs[0] * a, coeffs[1] * a * b], [coeffs[2] * b, coeffs[3] * (a + b)]]
        });
        let fine: Vec<f64> = (0..=16).map(|i| f64::from(i) / 16.0).collect();
        let coarse: Vec<f64> = fine.iter().step_by(4).copied().collect();
        for q in [1.0, 1.25, 1.5] {
            let a = two_param_variation(&w, q, &coarse).unwrap().value;
            let b = two_param_variation(&w, q, &fine).unwrap().value;
            assert!(a <= b);
            let bf = brute_force_two_param(&w, q, &fine).unwrap();
            assert_relative_eq!(bf.raw_sup, two_param_variation(&w, q, &fine).unwrap().raw_sup, max_relative = 1e-12);
        }
    }

    #[test]
    fn grid_tensor_lookup() {
        let grid = vec![0.0, 0.5, 1.0];
        let mut vals = Array4::zeros((3, 3, 1, 1));
        vals[[0, 2, 0, 0]] = 3.0;
        vals[[0, 1, 0, 0]] = 1.0;
        vals[[1, 2, 0, 0]] = 1.0;
        let w = GridTensor::new(grid.clone(), vals).unwrap();
        assert_eq!(two_param_variation(&w, 1.0, &grid).unwrap().raw_sup, 3.0);
        assert_eq!(two_param_variation(&w, 1.0, &[0.0, 1.0]).unwrap().raw_sup, 3.0);
    }

    #[test]
    fn young_bound_examples() {
        assert_eq!(young_bound(0.0, 5, 2.5).unwrap(), 0.0);
        assert_eq!(young_bound(1.0, 0, 2.5).unwrap(), 2.0);
        let c: f64 = 0.3;
        let expected = ((-3.0f64).exp2() * c.powf(0.4)).max((1.5f64).exp2() * c + c.powf(0.8));
        assert_eq!(young_bound(c, 3, 2.5).unwrap(), expected);
        assert!(young_bound(1.0, 0, 2.0).is_err());
        assert!(young_bound(1.0, 0, 3.0).is_err());
        assert!(young_bound(-1.0, 0, 2.5).is_err());
    }

    #[test]
    fn between_matches_restricted_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_path(&mut rng, 12, 2);
        let table = interval_variation_table(&x, 2.5).unwrap();
        for a in 0..x.len() {
            for b in a..x.len() {
                let (s, t) = (x.times()[a], x.times()[b]);
                let sub = p_variation_between(&x, 2.5, s, t).unwrap();
                let (bf, _) =
                    brute_force_partition(b - a + 1, |i, j| x.distance_idx(a + i, a + j).powf(2.5)).unwrap();
                assert_relative_eq!(sub.raw_sup, bf, max_relative = 1e-12, epsilon = 1e-300);
                assert_eq!(sub.raw_sup, table[[a, b]]);
            }
        }
    }
}
