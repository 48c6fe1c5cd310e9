//! UK-means: assign every object to the representative with the smallest
//! expected distance, move each representative to the mean of its members'
//! centroids, repeat until the assignment and the representatives settle.
//!
//! The assignment step is pluggable. All strategies return the same
//! assignment (lowest cluster index on ties); they differ only in how many
//! expected distances they evaluate to get there.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::{ed_raw, euclidean, EdCounters};
use crate::error::{check_dim, Error, Result};
use crate::model::{ClusterState, Params, PointSet, UncertainObject};
use crate::prune::{mmbb_prune, vcp_prune, CandidateSet};
use crate::rtree::{argmin_ed, assign_unchecked, RStarTree};

/// Side length of the workspace cube `[0, WORKSPACE_MAX]^m`.
pub const WORKSPACE_MAX: f64 = 100.0;

/// RNG stream used for initial representatives; datasets use stream 0.
pub(crate) const REPS_STREAM: u64 = 1;

/// Strategy name without any attached index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    Baseline,
    Mmbb,
    Vcp,
    RmmVcp,
}

impl Algo {
    pub const ALL: [Algo; 4] = [Algo::Baseline, Algo::Mmbb, Algo::Vcp, Algo::RmmVcp];

    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Baseline => "baseline",
            Algo::Mmbb => "mmbb",
            Algo::Vcp => "vcp",
            Algo::RmmVcp => "rmm-vcp",
        }
    }

    pub fn uses_tree(self) -> bool {
        self == Algo::RmmVcp
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algo {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" | "uk-means" => Ok(Algo::Baseline),
            "mmbb" | "mm-bb" => Ok(Algo::Mmbb),
            "vcp" => Ok(Algo::Vcp),
            "rmm-vcp" | "rmm_vcp" | "rmmvcp" => Ok(Algo::RmmVcp),
            other => Err(Error::InvalidParam(format!(
                "unknown algorithm {other:?} (expected baseline, mmbb, vcp or rmm-vcp)"
            ))),
        }
    }
}

/// How objects get assigned each iteration.
#[derive(Debug, Clone, Copy)]
pub enum AssignStrategy<'a> {
    /// All k expected distances per object.
    Baseline,
    /// Min-max bounding-box pruning per object.
    Mmbb,
    /// Voronoi-cell pruning per object.
    Vcp,
    /// Group pruning over a tree built on exactly the clustered objects.
    RmmVcp(&'a RStarTree),
}

impl AssignStrategy<'_> {
    pub fn algo(&self) -> Algo {
        match self {
            AssignStrategy::Baseline => Algo::Baseline,
            AssignStrategy::Mmbb => Algo::Mmbb,
            AssignStrategy::Vcp => Algo::Vcp,
            AssignStrategy::RmmVcp(_) => Algo::RmmVcp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub algo: Algo,
    pub final_state: ClusterState,
    pub iterations: usize,
    pub converged: bool,
    pub counters: EdCounters,
    /// `Σ ED(o_i, c_h(i))²` for the final state.
    pub objective: f64,
    /// `Σ ED(o_i, c_h(i))`, the quantity each assignment step minimizes.
    pub sum_ed: f64,
    /// Objective after each iteration, when tracing was requested.
    pub objective_trace: Vec<f64>,
    /// Assignment plus update time, summed over iterations.
    pub total_ms: f64,
    /// Per-iteration time `t1 = total_ms / iterations`.
    pub wall_time_per_iter: f64,
    /// Tree construction time; zero for strategies without a tree.
    pub build_ms: f64,
}

/// `k` points drawn uniformly from the workspace.
pub fn init_reps(params: &Params, seed: u64) -> Result<PointSet> {
    if params.k == 0 {
        return Err(Error::InvalidParam("k must be >= 1".into()));
    }
    if params.d == 0 {
        return Err(Error::InvalidParam("d must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(REPS_STREAM);
    let mut reps = PointSet::new(params.d);
    let mut p = vec![0.0; params.d];
    for _ in 0..params.k {
        p.iter_mut().for_each(|x| *x = rng.gen_range(0.0..=WORKSPACE_MAX));
        reps.push(&p)?;
    }
    Ok(reps)
}

/// Mean of member centroids per cluster; an empty cluster keeps its
/// representative. Sums run in object order.
pub fn readjust(objects: &[UncertainObject], state: &ClusterState) -> PointSet {
    let k = state.reps.len();
    let m = state.reps.dim();
    let mut counts = vec![0usize; k];
    let mut sums = vec![0.0; k * m];
    for (o, &j) in objects.iter().zip(&state.assignment) {
        counts[j] += 1;
        for (s, x) in sums[j * m..(j + 1) * m].iter_mut().zip(o.centroid()) {
            *s += x;
        }
    }
    let mut reps = state.reps.clone();
    for j in 0..k {
        if counts[j] > 0 {
            let inv = 1.0 / counts[j] as f64;
            for (dst, s) in reps.get_mut(j).iter_mut().zip(&sums[j * m..(j + 1) * m]) {
                *dst = s * inv;
            }
        }
    }
    reps
}

/// `Σ ED(o_i, c_h(i))²`. Bookkeeping only; not counted as ED work.
pub fn objective(objects: &[UncertainObject], state: &ClusterState) -> f64 {
    objective_sums(objects, state).1
}

/// `(Σ ED, Σ ED²)` over the assigned pairs, uncounted.
fn objective_sums(objects: &[UncertainObject], state: &ClusterState) -> (f64, f64) {
    objects
        .iter()
        .zip(&state.assignment)
        .map(|(o, &j)| ed_raw(o, state.reps.get(j)))
        .fold((0.0, 0.0), |(s, s2), d| (s + d, s2 + d * d))
}

fn assign_one(obj: &UncertainObject, reps: &PointSet, algo: Algo, counters: &mut EdCounters) -> usize {
    let k = reps.len();
    let cand = match algo {
        Algo::Baseline => {
            counters.ed_evals += k as u64;
            let mut best = (f64::INFINITY, 0);
            for (j, c) in reps.iter().enumerate() {
                let d = ed_raw(obj, c);
                if d < best.0 {
                    best = (d, j);
                }
            }
            return best.1;
        }
        Algo::Mmbb => mmbb_prune(obj.mbr(), reps, CandidateSet::all(k), counters),
        Algo::Vcp => vcp_prune(obj.mbr(), reps, CandidateSet::all(k), counters),
        Algo::RmmVcp => unreachable!("tree strategy assigns through the index"),
    };
    match cand.single() {
        Some(j) => j,
        None => {
            counters.ed_evals += cand.len() as u64;
            argmin_ed(obj, reps, cand.alive())
        }
    }
}

const CHUNK: usize = 256;

fn assign_per_object(
    objects: &[UncertainObject],
    reps: &PointSet,
    algo: Algo,
    counters: &mut EdCounters,
    parallel: bool,
) -> Vec<usize> {
    if !parallel {
        return objects.iter().map(|o| assign_one(o, reps, algo, counters)).collect();
    }
    let parts: Vec<(Vec<usize>, EdCounters)> = objects
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut c = EdCounters::default();
            let a = chunk.iter().map(|o| assign_one(o, reps, algo, &mut c)).collect();
            (a, c)
        })
        .collect();
    let mut out = Vec::with_capacity(objects.len());
    for (a, c) in parts {
        out.extend(a);
        *counters += c;
    }
    out
}

fn check_inputs(objects: &[UncertainObject], reps: &PointSet, params: &Params) -> Result<()> {
    let first = objects.first().ok_or(Error::EmptyInput("object set"))?;
    if reps.is_empty() {
        return Err(Error::EmptyInput("representative set"));
    }
    if reps.len() != params.k {
        return Err(Error::InvalidParam(format!(
            "{} initial representatives for k={}",
            reps.len(),
            params.k
        )));
    }
    check_dim(first.dim(), reps.dim())?;
    for o in objects {
        check_dim(first.dim(), o.dim())?;
    }
    if params.max_iters == 0 {
        return Err(Error::InvalidParam("max_iters must be >= 1".into()));
    }
    if params.threads == 0 {
        return Err(Error::InvalidParam("threads must be >= 1".into()));
    }
    Ok(())
}

/// Run UK-means from representatives drawn by [`init_reps`] with `params.seed`.
pub fn run(objects: &[UncertainObject], params: &Params, strategy: AssignStrategy<'_>) -> Result<RunResult> {
    let reps = init_reps(params, params.seed)?;
    run_with_reps(objects, reps, params, strategy)
}

/// Run with a named strategy, building the tree first when it needs one.
pub fn run_algo(objects: &[UncertainObject], params: &Params, algo: Algo) -> Result<RunResult> {
    match algo {
        Algo::RmmVcp => {
            let start = Instant::now();
            let tree = RStarTree::bulk_load(objects, params.b)?;
            let build_ms = start.elapsed().as_secs_f64() * 1e3;
            let mut res = run(objects, params, AssignStrategy::RmmVcp(&tree))?;
            res.build_ms = build_ms;
            Ok(res)
        }
        Algo::Baseline => run(objects, params, AssignStrategy::Baseline),
        Algo::Mmbb => run(objects, params, AssignStrategy::Mmbb),
        Algo::Vcp => run(objects, params, AssignStrategy::Vcp),
    }
}

pub fn run_with_reps(
    objects: &[UncertainObject],
    reps: PointSet,
    params: &Params,
    strategy: AssignStrategy<'_>,
) -> Result<RunResult> {
    check_inputs(objects, &reps, params)?;
    if let AssignStrategy::RmmVcp(tree) = strategy {
        tree.check_matches(objects)?;
    }
    if params.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(params.threads)
            .build()
            .map_err(|e| Error::InvalidParam(format!("thread pool: {e}")))?;
        pool.install(|| iterate(objects, reps, params, strategy, true))
    } else {
        iterate(objects, reps, params, strategy, false)
    }
}

fn iterate(
    objects: &[UncertainObject],
    reps: PointSet,
    params: &Params,
    strategy: AssignStrategy<'_>,
    parallel: bool,
) -> Result<RunResult> {
    let mut counters = EdCounters::default();
    let mut state = ClusterState {
        reps,
        assignment: Vec::new(),
        iteration: 0,
    };
    let mut trace = Vec::new();
    let mut total = 0.0;
    let mut converged = false;

    while state.iteration < params.max_iters {
        let start = Instant::now();
        let (assignment, new_reps) = match strategy {
            AssignStrategy::RmmVcp(tree) => {
                let pass = assign_unchecked(tree, objects, &state.reps, &mut counters, parallel);
                let reps = pass.means(&state.reps);
                (pass.assignment, reps)
            }
            other => {
                let a = assign_per_object(objects, &state.reps, other.algo(), &mut counters, parallel);
                let tmp = ClusterState {
                    reps: state.reps.clone(),
                    assignment: a,
                    iteration: state.iteration,
                };
                let reps = readjust(objects, &tmp);
                (tmp.assignment, reps)
            }
        };
        total += start.elapsed().as_secs_f64() * 1e3;

        let stable = assignment == state.assignment;
        let shift = state
            .reps
            .iter()
            .zip(new_reps.iter())
            .map(|(a, b)| euclidean(a, b))
            .fold(0.0, f64::max);
        state.assignment = assignment;
        state.reps = new_reps;
        state.iteration += 1;
        counters.iterations += 1;
        if params.trace_objective {
            trace.push(objective(objects, &state));
        }
        if stable && shift < params.move_tol {
            converged = true;
            break;
        }
    }

    let iterations = state.iteration;
    let (sum_ed, objective) = objective_sums(objects, &state);
    Ok(RunResult {
        algo: strategy.algo(),
        objective,
        sum_ed,
        final_state: state,
        iterations,
        converged,
        counters,
        objective_trace: trace,
        total_ms: total,
        wall_time_per_iter: total / iterations as f64,
        build_ms: 0.0,
    })
}
