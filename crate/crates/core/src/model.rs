//! Domain types for uncertain spatial objects.
//!
//! An uncertain object is a discrete probability distribution over a regular
//! grid laid on its minimum bounding rectangle. Each grid cell carries its
//! whole probability mass at the cell center. Cells are linearized row-major
//! over `grid_dims` (the last dimension varies fastest).

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Tolerance for the unit-mass and centroid invariants.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Axis-aligned box in R^m. Zero-width sides are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mbr {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Mbr {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() {
            return Err(Error::InvalidParam("MBR needs at least one dimension".into()));
        }
        check_dim(lo.len(), hi.len())?;
        for (t, (&a, &b)) in lo.iter().zip(&hi).enumerate() {
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::InvalidParam(format!("non-finite MBR bound in dim {t}")));
            }
            if a > b {
                return Err(Error::InvalidParam(format!(
                    "MBR lo > hi in dim {t}: {a} > {b}"
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    /// Degenerate box holding a single point.
    pub fn from_point(p: &[f64]) -> Result<Self> {
        Self::new(p.to_vec(), p.to_vec())
    }

    /// Smallest box enclosing every box in `boxes`.
    pub fn enclosing<'a>(boxes: impl IntoIterator<Item = &'a Mbr>) -> Option<Mbr> {
        let mut iter = boxes.into_iter();
        let mut acc = iter.next()?.clone();
        for b in iter {
            acc.expand(b);
        }
        Some(acc)
    }

    pub(crate) fn expand(&mut self, other: &Mbr) {
        debug_assert_eq!(self.dim(), other.dim());
        for t in 0..self.lo.len() {
            self.lo[t] = self.lo[t].min(other.lo[t]);
            self.hi[t] = self.hi[t].max(other.hi[t]);
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn side(&self, t: usize) -> f64 {
        self.hi[t] - self.lo[t]
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn contains_point(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&x, (&a, &b))| a <= x && x <= b)
    }

    pub fn contains(&self, other: &Mbr) -> bool {
        other.dim() == self.dim()
            && (0..self.dim()).all(|t| self.lo[t] <= other.lo[t] && other.hi[t] <= self.hi[t])
    }
}

/// A set of points of equal dimension stored contiguously.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            coords: Vec::new(),
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or(Error::EmptyInput("point set"))?;
        if dim == 0 {
            return Err(Error::InvalidParam("points need at least one dimension".into()));
        }
        let mut set = Self::new(dim);
        for r in rows {
            set.push(r.as_ref())?;
        }
        Ok(set)
    }

    pub fn push(&mut self, p: &[f64]) -> Result<()> {
        check_dim(self.dim, p.len())?;
        self.coords.extend_from_slice(p);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn get_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim.max(1))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.iter().map(<[f64]>::to_vec).collect()
    }
}

/// Discretized probability distribution over a grid on an MBR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePdf {
    grid_dims: Vec<usize>,
    masses: Vec<f64>,
    mbr: Mbr,
}

impl DiscretePdf {
    /// Checks only the grid structure. Mass invariants are reported by
    /// [`validate_dataset`] so that malformed inputs can be diagnosed.
    pub fn new(mbr: Mbr, grid_dims: Vec<usize>, masses: Vec<f64>) -> Result<Self> {
        check_dim(mbr.dim(), grid_dims.len())?;
        if grid_dims.contains(&0) {
            return Err(Error::InvalidParam("grid dimensions must be positive".into()));
        }
        let cells = grid_dims
            .iter()
            .try_fold(1usize, |acc, &g| acc.checked_mul(g))
            .ok_or_else(|| Error::InvalidParam("grid cell count overflows".into()))?;
        if cells != masses.len() {
            return Err(Error::InvalidParam(format!(
                "grid has {cells} cells but {} masses were given",
                masses.len()
            )));
        }
        Ok(Self {
            grid_dims,
            masses,
            mbr,
        })
    }

    pub fn mbr(&self) -> &Mbr {
        &self.mbr
    }

    pub fn grid_dims(&self) -> &[usize] {
        &self.grid_dims
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Number of sample cells `s`.
    pub fn cells(&self) -> usize {
        self.masses.len()
    }

    pub fn dim(&self) -> usize {
        self.mbr.dim()
    }

    /// Geometric center of cell `index`.
    pub fn cell_center(&self, index: usize) -> Result<Vec<f64>> {
        if index >= self.cells() {
            return Err(Error::IndexOutOfRange {
                index,
                len: self.cells(),
            });
        }
        let mut out = vec![0.0; self.dim()];
        self.write_cell_center(index, &mut out);
        Ok(out)
    }

    fn write_cell_center(&self, mut index: usize, out: &mut [f64]) {
        for t in (0..self.dim()).rev() {
            let g = self.grid_dims[t];
            let i = index % g;
            index /= g;
            let pitch = self.mbr.side(t) / g as f64;
            out[t] = self.mbr.lo[t] + (i as f64 + 0.5) * pitch;
        }
    }

    /// All cell centers, flattened in cell order.
    pub(crate) fn cell_centers(&self) -> Vec<f64> {
        let m = self.dim();
        let mut out = vec![0.0; self.cells() * m];
        for (c, slot) in out.chunks_exact_mut(m).enumerate() {
            self.write_cell_center(c, slot);
        }
        out
    }

    pub fn mass_sum(&self) -> f64 {
        self.masses.iter().sum()
    }
}

/// Expected position `Σ mass · cell_center`.
pub fn object_centroid(pdf: &DiscretePdf) -> Vec<f64> {
    centroid_from_samples(pdf.masses(), &pdf.cell_centers(), pdf.dim())
}

fn centroid_from_samples(masses: &[f64], samples: &[f64], m: usize) -> Vec<f64> {
    let mut c = vec![0.0; m];
    for (w, x) in masses.iter().zip(samples.chunks_exact(m)) {
        for t in 0..m {
            c[t] += w * x[t];
        }
    }
    c
}

/// An object whose location is known only through a discrete PDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertainObject {
    id: u64,
    pdf: DiscretePdf,
    centroid: Vec<f64>,
    /// Cell centers, flattened; the sample points ED is evaluated over.
    #[serde(skip)]
    samples: Vec<f64>,
}

impl UncertainObject {
    pub fn new(id: u64, pdf: DiscretePdf) -> Self {
        let samples = pdf.cell_centers();
        let centroid = centroid_from_samples(pdf.masses(), &samples, pdf.dim());
        Self {
            id,
            pdf,
            centroid,
            samples,
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn mbr(&self) -> &Mbr {
        self.pdf.mbr()
    }

    pub fn pdf(&self) -> &DiscretePdf {
        &self.pdf
    }

    pub fn centroid(&self) -> &[f64] {
        &self.centroid
    }

    pub fn dim(&self) -> usize {
        self.pdf.dim()
    }

    pub(crate) fn samples(&self) -> &[f64] {
        &self.samples
    }
}

/// Cluster representatives plus the object-to-cluster map.
///
/// `assignment[i]` is the 0-based cluster of the i-th object in the slice
/// the state was computed for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    pub reps: PointSet,
    pub assignment: Vec<usize>,
    pub iteration: usize,
}

impl ClusterState {
    pub fn k(&self) -> usize {
        self.reps.len()
    }
}

/// Experiment parameters. Defaults follow the reference setup:
/// n=20000, k=50, l=2, s=128, d=2, b=512.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub n: usize,
    pub k: usize,
    /// Max MBR side length.
    pub l: f64,
    /// Samples per object.
    pub s: usize,
    pub d: usize,
    /// Tree block size in bytes.
    pub b: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub move_tol: f64,
    /// Worker threads for the assignment phase; 1 is the reference mode.
    pub threads: usize,
    /// Record the objective after every iteration (outside the timed region).
    pub trace_objective: bool,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            n: 20_000,
            k: 50,
            l: 2.0,
            s: 128,
            d: 2,
            b: 512,
            seed: 0,
            max_iters: 100,
            move_tol: 1e-6,
            threads: 1,
            trace_objective: false,
        }
    }
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParam(msg.to_string()));
        if self.n == 0 {
            return bad("n must be >= 1");
        }
        if self.k == 0 {
            return bad("k must be >= 1");
        }
        if !(self.l > 0.0 && self.l.is_finite()) {
            return bad("l must be a positive finite number");
        }
        if self.s == 0 {
            return bad("s must be >= 1");
        }
        if self.d == 0 {
            return bad("d must be >= 1");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1");
        }
        if !(self.move_tol >= 0.0) {
            return bad("move_tol must be >= 0");
        }
        if self.threads == 0 {
            return bad("threads must be >= 1");
        }
        Ok(())
    }
}

/// Factor `s` into `m` near-equal factors, largest first.
///
/// Picks the factorization with the smallest max/min ratio, then the
/// smallest leading factor.
pub fn near_equal_factors(s: usize, m: usize) -> Vec<usize> {
    fn search(rest: usize, slots: usize, cap: usize, cur: &mut Vec<usize>, best: &mut Option<Vec<usize>>) {
        if slots == 1 {
            if rest <= cap {
                cur.push(rest);
                let better = match best {
                    None => true,
                    Some(b) => {
                        let (cr, br) = (cur[0] * b[b.len() - 1], b[0] * cur[cur.len() - 1]);
                        cr < br || (cr == br && cur[0] < b[0])
                    }
                };
                if better {
                    *best = Some(cur.clone());
                }
                cur.pop();
            }
            return;
        }
        for f in (1..=cap.min(rest)).rev() {
            if rest.is_multiple_of(f) {
                cur.push(f);
                search(rest / f, slots - 1, f, cur, best);
                cur.pop();
            }
        }
    }
    assert!(s >= 1 && m >= 1);
    let mut best = None;
    search(s, m, s, &mut Vec::with_capacity(m), &mut best);
    best.expect("s always factors as s·1·…·1")
}

/// Grid shape for `s` cells on a box with the given side lengths: larger
/// factors go to longer sides, ties to the lower dimension index.
pub fn grid_shape(s: usize, sides: &[f64]) -> Vec<usize> {
    arrange_factors(&near_equal_factors(s, sides.len()), sides)
}

pub(crate) fn arrange_factors(factors_desc: &[usize], sides: &[f64]) -> Vec<usize> {
    let mut dims: Vec<usize> = (0..sides.len()).collect();
    dims.sort_by(|&a, &b| sides[b].total_cmp(&sides[a]));
    let mut shape = vec![1; sides.len()];
    for (&t, &f) in dims.iter().zip(factors_desc) {
        shape[t] = f;
    }
    shape
}

#[derive(Debug, Clone, PartialEq)]
pub enum DiagnosticKind {
    MassSum(f64),
    NegativeMass { cell: usize, mass: f64 },
    NonFiniteMass { cell: usize },
    DimensionMismatch { expected: usize, got: usize },
    CentroidOutsideMbr,
    CentroidDrift(f64),
    DuplicateId,
}

/// One invariant violation found by [`validate_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub object_id: u64,
    pub kind: DiagnosticKind,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "object {}: ", self.object_id)?;
        match &self.kind {
            DiagnosticKind::MassSum(s) => write!(f, "mass sum {s} ≠ 1"),
            DiagnosticKind::NegativeMass { cell, mass } => {
                write!(f, "negative mass {mass} in cell {cell}")
            }
            DiagnosticKind::NonFiniteMass { cell } => write!(f, "non-finite mass in cell {cell}"),
            DiagnosticKind::DimensionMismatch { expected, got } => {
                write!(f, "dimension {got} differs from dataset dimension {expected}")
            }
            DiagnosticKind::CentroidOutsideMbr => write!(f, "centroid lies outside the MBR"),
            DiagnosticKind::CentroidDrift(d) => {
                write!(f, "stored centroid differs from the PDF centroid by {d}")
            }
            DiagnosticKind::DuplicateId => write!(f, "duplicate object id"),
        }
    }
}

/// Check every object invariant; collects all violations instead of
/// stopping at the first.
pub fn validate_dataset(objects: &[UncertainObject]) -> Result<(), Vec<Diagnostic>> {
    let mut out = Vec::new();
    let mut seen = HashSet::with_capacity(objects.len());
    let dim = objects.first().map(UncertainObject::dim);
    for o in objects {
        let mut diag = |kind| {
            out.push(Diagnostic {
                object_id: o.id,
                kind,
            })
        };
        if !seen.insert(o.id) {
            diag(DiagnosticKind::DuplicateId);
        }
        if let Some(expected) = dim {
            if o.dim() != expected {
                diag(DiagnosticKind::DimensionMismatch {
                    expected,
                    got: o.dim(),
                });
                continue;
            }
        }
        for (cell, &w) in o.pdf.masses.iter().enumerate() {
            if !w.is_finite() {
                diag(DiagnosticKind::NonFiniteMass { cell });
            } else if w < 0.0 {
                diag(DiagnosticKind::NegativeMass { cell, mass: w });
            }
        }
        let sum = o.pdf.mass_sum();
        if !((sum - 1.0).abs() <= MASS_TOLERANCE) {
            diag(DiagnosticKind::MassSum(sum));
        }
        let fresh = object_centroid(&o.pdf);
        let drift = fresh
            .iter()
            .zip(&o.centroid)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if !(drift <= MASS_TOLERANCE) {
            diag(DiagnosticKind::CentroidDrift(drift));
        }
        if !o.mbr().contains_point(&o.centroid) {
            diag(DiagnosticKind::CentroidOutsideMbr);
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}
