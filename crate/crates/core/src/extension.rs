//! Variation clock and Hölder reparametrization, `X = g ∘ φ`.
//!
//! `φ(t_i)` is the raw p-variation of `X` on `[0, t_i]` with the partition
//! pinned to end at `t_i`. Interval p-variation is superadditive, so
//! `|X_{s,t}|^p ≤ φ(t) − φ(s)` and `g(φ(t)) := X_t` is 1/p-Hölder with
//! constant 1. On a finite grid `φ` is already right-continuous under
//! staircase semantics and needs no modification at jumps.

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{IntoParallelIterator, ParallelIterator};
use crate::paths::{distance, CadlagPath};
use crate::pvar;

/// Slack allowed on the Hölder constant.
pub const HOLDER_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeChange {
    pub p: f64,
    /// Sample times of `X`.
    pub times: Vec<f64>,
    /// `φ(t_i)` for each sample time.
    pub phi: Vec<f64>,
    /// Distinct values of `φ`, increasing.
    pub g_times: Vec<f64>,
    pub g_values: Vec<Vec<f64>>,
    pub max_holder_ratio: f64,
}

impl TimeChange {
    /// `g(a)` for a sampled clock value `a`.
    pub fn g_at(&self, a: f64) -> Option<&[f64]> {
        self.g_times
            .binary_search_by(|v| v.total_cmp(&a))
            .ok()
            .map(|i| self.g_values[i].as_slice())
    }

    /// `g(φ(t_i))` for every sample, which reproduces `X` exactly.
    pub fn reconstruct(&self) -> Vec<Vec<f64>> {
        self.phi
            .iter()
            .map(|&a| self.g_at(a).expect("every clock value is sampled").to_vec())
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `φ(t_i)` over the sample grid.
///
/// The DP values are nudged up by at most a few ulps where needed so that
/// `φ_j ⊖ φ_i ≥ |X_{t_i,t_j}|^p` holds in floating point for every pair,
/// not only in exact arithmetic. Without this, a tiny increment late in
/// the path can lose its whole budget to rounding in `φ`.
pub fn variation_clock(x: &CadlagPath, p: f64) -> Result<Vec<f64>> {
    pvar::check_exponent(p, "p")?;
    let cost = |i: usize, j: usize| x.distance_idx(i, j).powf(p);
    let mut phi = pvar::partition_dp(x.len(), cost).best;
    for j in 1..phi.len() {
        let (done, rest) = phi.split_at_mut(j);
        let target = &mut rest[0];
        for (i, &prev) in done.iter().enumerate() {
            let c = cost(i, j);
            while *target - prev < c {
                *target = target.next_up();
            }
        }
    }
    Ok(phi)
}

fn holder_ratio(a: f64, b: f64, u: ArrayView1<f64>, v: ArrayView1<f64>, p: f64) -> f64 {
    let gap = (b - a).abs();
    let dist = distance(u, v);
    if dist == 0.0 {
        0.0
    } else {
        dist / gap.powf(1.0 / p)
    }
}

/// `X = g ∘ φ` with `g` sampled on the distinct clock values.
///
/// Fails with [`Error::Consistency`] if `X` moves on a plateau of `φ` or
/// if any sampled pair breaks the Hölder bound; either would mean the
/// variation DP is wrong.
pub fn holder_reparam(x: &CadlagPath, p: f64) -> Result<TimeChange> {
    let phi = variation_clock(x, p)?;
    let mut g_times: Vec<f64> = Vec::new();
    let mut g_index: Vec<usize> = Vec::new();
    for (i, &a) in phi.iter().enumerate() {
        match g_times.last() {
            Some(&last) if last == a => {
                let k = *g_index.last().unwrap();
                if x.value(k) != x.value(i) {
                    return Err(Error::Consistency(format!(
                        "path moves on a plateau of the variation clock at t = {}",
                        x.times()[i]
                    )));
                }
            }
            _ => {
                g_times.push(a);
                g_index.push(i);
            }
        }
    }
    let max_holder_ratio = (0..g_index.len())
        .into_par_iter()
        .map(|a| {
            (a + 1..g_index.len())
                .map(|b| holder_ratio(g_times[a], g_times[b], x.value(g_index[a]), x.value(g_index[b]), p))
                .fold(0.0, f64::max)
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(0.0, f64::max);
    if max_holder_ratio > 1.0 + HOLDER_TOLERANCE {
        return Err(Error::Consistency(format!(
            "Hölder ratio {max_holder_ratio} exceeds 1 + {HOLDER_TOLERANCE}"
        )));
    }
    Ok(TimeChange {
        p,
        times: x.times().to_vec(),
        phi,
        g_values: g_index.iter().map(|&i| x.value(i).to_vec()).collect(),
        g_times,
        max_holder_ratio,
    })
}
