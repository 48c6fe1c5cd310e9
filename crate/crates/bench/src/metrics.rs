use std::io::Write;

use serde::{Deserialize, Serialize};
use ukmeans::{Algo, Params, RunResult};

/// Bumped whenever columns are added, removed or reordered.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    /// One measured run.
    Raw,
    /// Mean over the raw rows sharing algo and parameters.
    Mean,
}

/// One measurement, flat enough for a CSV row.
///
/// On raw rows `n_ed` and `n_cand` are exactly `ed_evals / (n * iterations)`
/// and `cand_pairs / (n * iterations)`, and `t1_ms` is `total_ms / iterations`.
/// Mean rows average those ratios and leave seed and raw counters blank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub schema: u32,
    pub kind: RowKind,
    pub algo: Algo,
    pub n: usize,
    pub k: usize,
    pub l: Option<f64>,
    pub s: usize,
    pub d: usize,
    pub b: usize,
    pub seed: Option<u64>,
    /// Number of raw rows behind this row.
    pub samples: usize,
    pub t1_ms: f64,
    pub n_ed: f64,
    pub n_cand: f64,
    pub iterations: f64,
    pub converged: bool,
    /// Sum of squared expected distances.
    pub objective: f64,
    /// Sum of expected distances.
    pub sum_ed: f64,
    pub total_ms: f64,
    pub build_ms: f64,
    pub ed_evals: Option<u64>,
    pub cand_pairs: Option<u64>,
    /// `t1_ms` split by counter weight: an ED costs `s` cell visits, a
    /// candidate pair costs `2d` coordinate visits.
    pub t1_ed_share_ms: f64,
    pub t1_prune_share_ms: f64,
}

impl MetricsRow {
    pub fn from_run(res: &RunResult, params: &Params, l: Option<f64>) -> Self {
        let per = (params.n * res.iterations) as f64;
        let c = res.counters;
        let t1 = res.total_ms / res.iterations as f64;
        let (ed_share, prune_share) = split_t1(t1, c.ed_evals, c.cand_pairs, params.s, params.d);
        Self {
            schema: SCHEMA_VERSION,
            kind: RowKind::Raw,
            algo: res.algo,
            n: params.n,
            k: params.k,
            l,
            s: params.s,
            d: params.d,
            b: params.b,
            seed: Some(params.seed),
            samples: 1,
            t1_ms: t1,
            n_ed: c.ed_evals as f64 / per,
            n_cand: c.cand_pairs as f64 / per,
            iterations: res.iterations as f64,
            converged: res.converged,
            objective: res.objective,
            sum_ed: res.sum_ed,
            total_ms: res.total_ms,
            build_ms: res.build_ms,
            ed_evals: Some(c.ed_evals),
            cand_pairs: Some(c.cand_pairs),
            t1_ed_share_ms: ed_share,
            t1_prune_share_ms: prune_share,
        }
    }

    /// Average of `rows`, which must share algo and parameters other than seed.
    pub fn mean(rows: &[MetricsRow]) -> Option<Self> {
        let first = rows.first()?;
        let avg = |f: fn(&MetricsRow) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
        Some(Self {
            kind: RowKind::Mean,
            seed: None,
            samples: rows.iter().map(|r| r.samples).sum(),
            t1_ms: avg(|r| r.t1_ms),
            n_ed: avg(|r| r.n_ed),
            n_cand: avg(|r| r.n_cand),
            iterations: avg(|r| r.iterations),
            converged: rows.iter().all(|r| r.converged),
            objective: avg(|r| r.objective),
            sum_ed: avg(|r| r.sum_ed),
            total_ms: avg(|r| r.total_ms),
            build_ms: avg(|r| r.build_ms),
            ed_evals: None,
            cand_pairs: None,
            t1_ed_share_ms: avg(|r| r.t1_ed_share_ms),
            t1_prune_share_ms: avg(|r| r.t1_prune_share_ms),
            ..first.clone()
        })
    }
}

fn split_t1(t1: f64, ed_evals: u64, cand_pairs: u64, s: usize, d: usize) -> (f64, f64) {
    let ed = ed_evals as f64 * s as f64;
    let prune = cand_pairs as f64 * 2.0 * d as f64;
    if ed + prune == 0.0 {
        return (0.0, 0.0);
    }
    (t1 * ed / (ed + prune), t1 * prune / (ed + prune))
}

/// Header plus rows, in the order given.
pub fn write_csv(w: impl Write, rows: &[MetricsRow]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv(r: impl std::io::Read) -> csv::Result<Vec<MetricsRow>> {
    csv::Reader::from_reader(r).deserialize().collect()
}
