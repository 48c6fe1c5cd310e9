//! Expected distance and its box bounds.
//!
//! All distances are Euclidean. `min_dist`/`max_dist` are the exact
//! minimum and maximum of `d(x, y)` over `x` in a box, found by clamping `y`
//! into the box and by taking the farthest corner.

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::model::{Mbr, PointSet, UncertainObject};

/// Work counters for one run. Callers that work in parallel keep private
/// counters and add them together afterwards.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdCounters {
    /// Full expected-distance evaluations.
    pub ed_evals: u64,
    /// Object/group–cluster pairs examined by pruners.
    pub cand_pairs: u64,
    pub iterations: u64,
}

impl AddAssign for EdCounters {
    fn add_assign(&mut self, rhs: Self) {
        self.ed_evals += rhs.ed_evals;
        self.cand_pairs += rhs.cand_pairs;
        self.iterations += rhs.iterations;
    }
}

impl Add for EdCounters {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

#[inline]
pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    dist_sq(a, b).sqrt()
}

/// `ED(o, y) = Σ mass · d(cell_center, y)`. Counts one evaluation.
pub fn expected_distance(obj: &UncertainObject, y: &[f64], counters: &mut EdCounters) -> Result<f64> {
    check_dim(obj.dim(), y.len())?;
    counters.ed_evals += 1;
    Ok(ed_raw(obj, y))
}

/// Uncounted ED for bookkeeping (objective reporting) and for hot loops
/// that already checked dimensions and count on their own.
pub(crate) fn ed_raw(obj: &UncertainObject, y: &[f64]) -> f64 {
    let m = y.len();
    let masses = obj.pdf().masses();
    let samples = obj.samples();
    if m == 2 {
        let (y0, y1) = (y[0], y[1]);
        return masses
            .iter()
            .zip(samples.chunks_exact(2))
            .map(|(w, x)| {
                let (d0, d1) = (x[0] - y0, x[1] - y1);
                w * (d0 * d0 + d1 * d1).sqrt()
            })
            .sum();
    }
    masses
        .iter()
        .zip(samples.chunks_exact(m))
        .map(|(w, x)| w * dist_sq(x, y).sqrt())
        .sum()
}

#[inline]
pub(crate) fn min_dist_sq(mbr: &Mbr, y: &[f64]) -> f64 {
    let (lo, hi) = (mbr.lo(), mbr.hi());
    let mut acc = 0.0;
    for t in 0..y.len() {
        let d = if y[t] < lo[t] {
            lo[t] - y[t]
        } else if y[t] > hi[t] {
            y[t] - hi[t]
        } else {
            0.0
        };
        acc += d * d;
    }
    acc
}

#[inline]
pub(crate) fn max_dist_sq(mbr: &Mbr, y: &[f64]) -> f64 {
    let (lo, hi) = (mbr.lo(), mbr.hi());
    let mut acc = 0.0;
    for t in 0..y.len() {
        let d = (y[t] - lo[t]).abs().max((hi[t] - y[t]).abs());
        acc += d * d;
    }
    acc
}

/// `MinD`: distance from `y` to the nearest point of the box.
pub fn min_dist(mbr: &Mbr, y: &[f64]) -> Result<f64> {
    check_dim(mbr.dim(), y.len())?;
    Ok(min_dist_sq(mbr, y).sqrt())
}

/// `MaxD`: distance from `y` to the farthest corner of the box.
pub fn max_dist(mbr: &Mbr, y: &[f64]) -> Result<f64> {
    check_dim(mbr.dim(), y.len())?;
    Ok(max_dist_sq(mbr, y).sqrt())
}

/// `MinMaxD`: smallest `MaxD` over `reps` and the index achieving it
/// (lowest index on ties).
pub fn min_max_dist(mbr: &Mbr, reps: &PointSet) -> Result<(f64, usize)> {
    if reps.is_empty() {
        return Err(Error::EmptyInput("representative set"));
    }
    check_dim(mbr.dim(), reps.dim())?;
    let mut best = (f64::INFINITY, 0);
    for (j, c) in reps.iter().enumerate() {
        let d = max_dist_sq(mbr, c);
        if d < best.0 {
            best = (d, j);
        }
    }
    Ok((best.0.sqrt(), best.1))
}
