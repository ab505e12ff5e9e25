//! Càdlàg staircase paths.
//!
//! A [`CadlagPath`] holds samples `(t_i, x_i)` and evaluates as
//! `X_t = x_k` with `k = max{i : t_i ≤ t}`. Every path functional in this
//! crate (hitting times, left-point sums, suprema over partitions) is
//! attained on the sample grid under these semantics.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CadlagPath {
    times: Vec<f64>,
    values: Array2<f64>,
    horizon: f64,
}

fn check_times(times: &[f64], horizon: f64) -> Result<()> {
    if times.is_empty() {
        return Err(Error::domain("path needs at least one sample"));
    }
    if times[0] != 0.0 {
        return Err(Error::domain(format!("first sample time must be 0, got {}", times[0])));
    }
    if let Some(t) = times.iter().find(|t| !t.is_finite()) {
        return Err(Error::domain(format!("non-finite sample time {t}")));
    }
    if let Some(w) = times.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::domain(format!(
            "sample times must be strictly increasing ({} then {})",
            w[0], w[1]
        )));
    }
    let last = times[times.len() - 1];
    if !horizon.is_finite() || horizon < last {
        return Err(Error::domain(format!("horizon {horizon} is before the last sample time {last}")));
    }
    Ok(())
}

impl CadlagPath {
    /// `values` is `len × d`, one row per sample.
    pub fn new(times: Vec<f64>, values: Array2<f64>, horizon: f64) -> Result<Self> {
        check_times(&times, horizon)?;
        if values.nrows() != times.len() {
            return Err(Error::domain(format!(
                "{} sample times but {} value rows",
                times.len(),
                values.nrows()
            )));
        }
        if values.ncols() == 0 {
            return Err(Error::domain("path dimension must be at least 1"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("path values must be finite"));
        }
        Ok(CadlagPath { times, values, horizon })
    }

    /// Builds a path from rows; the horizon is the last sample time.
    pub fn from_rows(times: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::domain("rows have inconsistent dimensions"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let values = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| Error::domain(e.to_string()))?;
        let horizon = times.last().copied().unwrap_or(0.0);
        Self::new(times, values, horizon)
    }

    /// One-dimensional convenience constructor.
    pub fn scalar(times: Vec<f64>, values: Vec<f64>, horizon: f64) -> Result<Self> {
        let n = values.len();
        let values = Array2::from_shape_vec((n, 1), values).map_err(|e| Error::domain(e.to_string()))?;
        Self::new(times, values, horizon)
    }

    pub fn with_horizon(mut self, horizon: f64) -> Result<Self> {
        check_times(&self.times, horizon)?;
        self.horizon = horizon;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn value(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::domain(format!("time {t} outside [0, {}]", self.horizon)));
        }
        Ok(())
    }

    /// Index of the sample in force at `t`: `max{i : t_i ≤ t}`.
    pub fn index_at(&self, t: f64) -> Result<usize> {
        self.check_time(t)?;
        Ok(self.times.partition_point(|&s| s <= t) - 1)
    }

    /// Index realising the left limit at `t`: `max{i : t_i < t}`, and 0 at `t = 0`.
    pub fn index_before(&self, t: f64) -> Result<usize> {
        self.check_time(t)?;
        Ok(self.times.partition_point(|&s| s < t).saturating_sub(1))
    }

    pub fn eval(&self, t: f64) -> Result<ArrayView1<'_, f64>> {
        Ok(self.value(self.index_at(t)?))
    }

    /// `X_{t-}`, with the convention `X_{0-} = X_0`.
    pub fn left_limit(&self, t: f64) -> Result<ArrayView1<'_, f64>> {
        Ok(self.value(self.index_before(t)?))
    }

    /// `X_{s,t} = X_t - X_s`.
    pub fn increment(&self, s: f64, t: f64) -> Result<Array1<f64>> {
        Ok(&self.eval(t)? - &self.eval(s)?)
    }

    /// Increment between two sample indices.
    pub fn increment_idx(&self, i: usize, j: usize) -> Array1<f64> {
        &self.value(j) - &self.value(i)
    }

    /// Euclidean distance between samples `i` and `j`.
    pub fn distance_idx(&self, i: usize, j: usize) -> f64 {
        distance(self.value(i), self.value(j))
    }

    /// `‖X‖_∞` over the sample grid (exact for staircases).
    pub fn sup_norm(&self) -> f64 {
        self.values
            .rows()
            .into_iter()
            .map(norm)
            .fold(0.0, f64::max)
    }

    /// Same samples, values shifted by `shift`.
    pub fn translate(&self, shift: ArrayView1<'_, f64>) -> Result<Self> {
        if shift.len() != self.dim() {
            return Err(Error::domain("shift dimension mismatch"));
        }
        Self::new(self.times.clone(), &self.values + &shift, self.horizon)
    }

    pub fn scale(&self, factor: f64) -> Result<Self> {
        Self::new(self.times.clone(), &self.values * factor, self.horizon)
    }

    /// Replaces the sample times, keeping values. Used for relabelling checks.
    pub fn retime(&self, times: Vec<f64>, horizon: f64) -> Result<Self> {
        Self::new(times, self.values.clone(), horizon)
    }

    /// Pointwise sum of two paths on the same grid.
    pub fn add(&self, other: &CadlagPath) -> Result<Self> {
        self.check_same_grid(other)?;
        Self::new(self.times.clone(), &self.values + &other.values, self.horizon)
    }

    pub(crate) fn check_same_grid(&self, other: &CadlagPath) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::domain(format!("dimension mismatch: {} vs {}", self.dim(), other.dim())));
        }
        if self.horizon != other.horizon {
            return Err(Error::domain(format!("horizon mismatch: {} vs {}", self.horizon, other.horizon)));
        }
        if self.times != other.times {
            return Err(Error::domain("paths are sampled on different time grids"));
        }
        Ok(())
    }

    /// Inserts the redundant sample `(t, X_t)`; evaluation is unchanged everywhere.
    pub fn insert_sample(&self, t: f64) -> Result<Self> {
        let k = self.index_at(t)?;
        if self.times[k] == t {
            return Ok(self.clone());
        }
        let mut times = self.times.clone();
        times.insert(k + 1, t);
        let row = self.value(k).to_owned();
        let mut rows: Vec<Array1<f64>> = self.values.rows().into_iter().map(|r| r.to_owned()).collect();
        rows.insert(k + 1, row);
        let views: Vec<ArrayView1<'_, f64>> = rows.iter().map(|r| r.view()).collect();
        let stacked = ndarray::stack(Axis(0), &views).map_err(|e| Error::domain(e.to_string()))?;
        Self::new(times, stacked, self.horizon)
    }

    /// Reads the `t,x1,...,xd` CSV format. The horizon is the last time.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "t" {
            return Err(Error::domain("path CSV header must be t,x1,...,xd"));
        }
        for (i, h) in headers.iter().skip(1).enumerate() {
            if h != format!("x{}", i + 1) {
                return Err(Error::domain(format!("unexpected CSV column `{h}`, expected x{}", i + 1)));
            }
        }
        let d = headers.len() - 1;
        let mut times = Vec::new();
        let mut flat = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let parse = |field: &str| {
                field
                    .parse::<f64>()
                    .map_err(|e| Error::domain(format!("row {}: bad number `{field}`: {e}", line + 1)))
            };
            times.push(parse(&record[0])?);
            for field in record.iter().skip(1) {
                flat.push(parse(field)?);
            }
        }
        let n = times.len();
        let values = Array2::from_shape_vec((n, d), flat).map_err(|e| Error::domain(e.to_string()))?;
        let horizon = times.last().copied().unwrap_or(0.0);
        Self::new(times, values, horizon)
    }

    /// Writes the CSV format with 17 significant digits. When the horizon
    /// lies beyond the last sample a redundant row `(T, X_T)` is appended so
    /// that the horizon survives a round trip.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("x{i}")));
        wtr.write_record(&header)?;
        let mut write_row = |t: f64, row: ArrayView1<'_, f64>| -> Result<()> {
            let mut rec = Vec::with_capacity(row.len() + 1);
            rec.push(fmt_f64(t));
            rec.extend(row.iter().map(|&v| fmt_f64(v)));
            wtr.write_record(&rec)?;
            Ok(())
        };
        for (i, &t) in self.times.iter().enumerate() {
            write_row(t, self.value(i))?;
        }
        if self.horizon > self.times[self.len() - 1] {
            write_row(self.horizon, self.value(self.len() - 1))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::domain(e.to_string()))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// 17 significant digits, scientific notation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Matrix-valued staircase, `len × d × d`, same semantics as [`CadlagPath`].
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPath {
    times: Vec<f64>,
    values: Array3<f64>,
    horizon: f64,
}

impl MatrixPath {
    pub fn new(times: Vec<f64>, values: Array3<f64>, horizon: f64) -> Result<Self> {
        check_times(&times, horizon)?;
        let (n, a, b) = values.dim();
        if n != times.len() || a != b || a == 0 {
            return Err(Error::domain(format!(
                "matrix path shape {n}×{a}×{b} does not match {} times",
                times.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("matrix path values must be finite"));
        }
        Ok(MatrixPath { times, values, horizon })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values.dim().1
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn value(&self, i: usize) -> ArrayView2<'_, f64> {
        self.values.index_axis(Axis(0), i)
    }

    pub fn eval(&self, t: f64) -> Result<ArrayView2<'_, f64>> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::domain(format!("time {t} outside [0, {}]", self.horizon)));
        }
        Ok(self.value(self.times.partition_point(|&s| s <= t) - 1))
    }

    /// `max_i ‖M_i‖_F`.
    pub fn sup_norm(&self) -> f64 {
        self.values
            .outer_iter()
            .map(|m| frobenius(m))
            .fold(0.0, f64::max)
    }

    pub fn last(&self) -> ArrayView2<'_, f64> {
        self.value(self.len() - 1)
    }
}

/// `(u ⊗ v)[i][j] = u[i] v[j]`.
pub fn tensor(u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> Result<Array2<f64>> {
    if u.len() != v.len() {
        return Err(Error::domain(format!("tensor of vectors of length {} and {}", u.len(), v.len())));
    }
    Ok(outer(u, v))
}

pub(crate) fn outer(u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((u.len(), v.len()), |(i, j)| u[i] * v[j])
}

pub fn norm(v: ArrayView1<'_, f64>) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (y - x) * (y - x)).sum::<f64>().sqrt()
}

pub fn frobenius(m: ArrayView2<'_, f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}
