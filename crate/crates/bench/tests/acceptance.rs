//! Acceptance suite. Runs every criterion in sequence, one PASS/FAIL line
//! each, and exits non-zero if any fails. Criteria run one at a time so the
//! timing ones see an otherwise idle process.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ukbench::measure;
use ukmeans::rtree::{InternalEntry, NodeId, NodeKind};
use ukmeans::*;

/// Objectives of different strategies may differ by summation order only.
const OBJECTIVE_TOL: f64 = 1e-9;
const FUZZ_CASES: usize = 10_000;
/// Rounding slack for MinD <= ED <= MaxD, relative to MaxD.
const SANDWICH_TOL: f64 = 1e-12;
const N_ED_CEILING: f64 = 5.0;
const LINEAR_R2_FLOOR: f64 = 0.9;
const MAX_K_INVERSIONS: usize = 1;
const BLOCK_SPREAD_CEILING: f64 = 0.10;
const TREE_LOADS: usize = 1000;
const AGGREGATE_TOL: f64 = 1e-9;

const SEEDS: [u64; 3] = [1, 2, 3];
/// Timing repeats per measurement; the fastest run is kept.
const TIMING_REPEATS: usize = 5;
/// Paired timing rounds over all block sizes, per seed.
const BLOCK_ROUNDS: usize = 15;

type Outcome = Result<String, String>;

fn desk_params(seed: u64) -> Params {
    Params { n: 2000, k: 50, l: 2.0, s: 128, d: 2, seed, ..Params::default() }
}

fn dataset(p: &Params) -> Vec<UncertainObject> {
    generate(&GenSpec::from_params(p)).expect("generator")
}

fn fmt(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

fn oracle_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..30 {
        let p = Params { n: 100, k: 8, l: 2.0, s: 16, d: 2, seed, ..Params::default() };
        let objs = dataset(&p);
        let base = run_algo(&objs, &p, Algo::Baseline).map_err(|e| e.to_string())?;
        for algo in [Algo::Mmbb, Algo::Vcp, Algo::RmmVcp] {
            let res = run_algo(&objs, &p, algo).map_err(|e| e.to_string())?;
            if res.final_state.assignment != base.final_state.assignment {
                return Err(format!("seed {seed}: {algo} assignment differs from baseline"));
            }
            let gap = (res.objective - base.objective).abs();
            worst = worst.max(gap);
            if gap > OBJECTIVE_TOL {
                return Err(format!("seed {seed}: {algo} objective off by {gap:e}"));
            }
        }
    }
    Ok(format!("30 instances, max objective gap {worst:e}"))
}

fn random_object(rng: &mut ChaCha8Rng) -> UncertainObject {
    let d = rng.gen_range(1..=4);
    let lo: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..100.0)).collect();
    let hi = lo
        .iter()
        .map(|&x| if rng.gen_bool(0.05) { x } else { x + rng.gen_range(0.0..10.0) })
        .collect();
    let grid: Vec<usize> = (0..d).map(|_| rng.gen_range(1..=5)).collect();
    let cells: usize = grid.iter().product();
    let raw: Vec<f64> = (0..cells).map(|_| rng.gen_range(0.0..1.0f64) + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    let pdf = DiscretePdf::new(Mbr::new(lo, hi).unwrap(), grid, raw.iter().map(|w| w / total).collect()).unwrap();
    UncertainObject::new(0, pdf)
}

fn random_reps(rng: &mut ChaCha8Rng, o: &UncertainObject) -> PointSet {
    let k = rng.gen_range(1..=20);
    let near = rng.gen_bool(0.5);
    let rows: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            (0..o.dim())
                .map(|t| {
                    if near {
                        // close to the box, where pruning decisions are hardest
                        rng.gen_range(o.mbr().lo()[t] - 5.0..o.mbr().hi()[t] + 5.0)
                    } else {
                        rng.gen_range(-10.0..110.0)
                    }
                })
                .collect()
        })
        .collect();
    PointSet::from_rows(&rows).unwrap()
}

fn pruning_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut c = EdCounters::default();
    let mut pruned = [0usize; 3];
    for case in 0..FUZZ_CASES {
        let o = random_object(&mut rng);
        let reps = random_reps(&mut rng, &o);
        let mut best = (f64::INFINITY, 0);
        for (j, r) in reps.iter().enumerate() {
            let ed = expected_distance(&o, r, &mut c).unwrap();
            let lo = min_dist(o.mbr(), r).unwrap();
            let hi = max_dist(o.mbr(), r).unwrap();
            let slack = SANDWICH_TOL * hi.max(1.0);
            if !(lo <= ed + slack && ed <= hi + slack) {
                return Err(format!("case {case}: sandwich fails, {lo} <= {ed} <= {hi}"));
            }
            if ed < best.0 {
                best = (ed, j);
            }
        }
        let k = reps.len();
        let sets = [
            mmbb_prune(o.mbr(), &reps, CandidateSet::all(k), &mut c),
            vcp_prune(o.mbr(), &reps, CandidateSet::all(k), &mut c),
            hybrid_prune(o.mbr(), &reps, CandidateSet::all(k), &mut c),
        ];
        for (i, (set, name)) in sets.iter().zip(["mmbb", "vcp", "hybrid"]).enumerate() {
            if !set.contains(best.1) {
                return Err(format!("case {case}: {name} pruned the argmin cluster {}", best.1));
            }
            pruned[i] += k - set.len();
        }
    }
    Ok(format!(
        "{FUZZ_CASES} cases, clusters pruned mmbb={} vcp={} hybrid={}",
        pruned[0], pruned[1], pruned[2]
    ))
}

fn baseline_counters() -> Outcome {
    let mut report = Vec::new();
    for (n, k, seed) in [(100, 8, 1), (500, 13, 2), (2000, 50, 3)] {
        let p = Params { n, k, s: 16, seed, ..Params::default() };
        let objs = dataset(&p);
        let res = run_algo(&objs, &p, Algo::Baseline).map_err(|e| e.to_string())?;
        let row = measure(&objs, &p, Algo::Baseline, 1).map_err(|e| e.to_string())?;
        let expected = (n * k * res.iterations) as u64;
        if res.counters.ed_evals != expected || row.n_ed != k as f64 {
            return Err(format!(
                "n={n} k={k}: ed_evals {} (want {expected}), n_ed {} (want {k})",
                res.counters.ed_evals, row.n_ed
            ));
        }
        report.push(format!("n={n} k={k} I={}", res.iterations));
    }
    Ok(format!("ed_evals = n*k*I and n_ed = k for {}", report.join(", ")))
}

fn pruning_effectiveness() -> Outcome {
    let mut n_ed = [[0.0; 3]; 3];
    let mut t1_mmbb = [0.0; 3];
    let mut t1_tree = [0.0; 3];
    for (i, &seed) in SEEDS.iter().enumerate() {
        let p = desk_params(seed);
        let objs = dataset(&p);
        let (mut best_mmbb, mut best_tree) = (f64::INFINITY, f64::INFINITY);
        // alternate the two timed algorithms so both see the same host load
        for _ in 0..TIMING_REPEATS {
            for (a, algo) in [Algo::Mmbb, Algo::Vcp, Algo::RmmVcp].into_iter().enumerate() {
                let row = measure(&objs, &p, algo, 1).map_err(|e| e.to_string())?;
                n_ed[a][i] = row.n_ed;
                match algo {
                    Algo::Mmbb => best_mmbb = best_mmbb.min(row.t1_ms),
                    Algo::RmmVcp => best_tree = best_tree.min(row.t1_ms),
                    _ => {}
                }
            }
        }
        t1_mmbb[i] = best_mmbb;
        t1_tree[i] = best_tree;
    }
    let detail = format!(
        "n_ed mmbb={} vcp={} rmm-vcp={}; t1 ms mmbb={} rmm-vcp={}",
        fmt(&n_ed[0]),
        fmt(&n_ed[1]),
        fmt(&n_ed[2]),
        fmt(&t1_mmbb),
        fmt(&t1_tree)
    );
    let below = n_ed.iter().flatten().all(|&x| x < N_ED_CEILING);
    let vcp_wins = (0..3).filter(|&i| n_ed[1][i] <= n_ed[0][i]).count();
    let faster = (0..3).all(|i| t1_tree[i] < t1_mmbb[i]);
    if below && vcp_wins >= 2 && faster {
        Ok(detail)
    } else {
        Err(format!("{detail} (below ceiling {below}, vcp<=mmbb on {vcp_wins}/3, rmm-vcp faster {faster})"))
    }
}

fn r_squared(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    sxy * sxy / (sxx * syy)
}

fn linear_scaling() -> Outcome {
    let ns = [1000usize, 2000, 4000, 8000];
    // Within a round every n is timed back to back, so a slow phase of the
    // host scales the whole curve and leaves its shape alone.
    let mut t1 = vec![0.0; ns.len()];
    for seed in SEEDS {
        let runs: Vec<_> = ns
            .iter()
            .map(|&n| {
                let p = Params { n, ..desk_params(seed) };
                (dataset(&p), p)
            })
            .collect();
        let mut best = vec![f64::INFINITY; ns.len()];
        for _ in 0..TIMING_REPEATS {
            for (b, (objs, p)) in best.iter_mut().zip(&runs) {
                *b = b.min(measure(objs, p, Algo::RmmVcp, 1).map_err(|e| e.to_string())?.t1_ms);
            }
        }
        for (t, b) in t1.iter_mut().zip(best) {
            *t += b / SEEDS.len() as f64;
        }
    }
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let r2 = r_squared(&xs, &t1);
    let detail = format!("rmm-vcp t1 ms over n={ns:?}: {}, R^2={r2:.4}", fmt(&t1));
    if r2 > LINEAR_R2_FLOOR {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn k_trend() -> Outcome {
    let ks = [10usize, 25, 50, 100];
    let datasets: Vec<_> = SEEDS.iter().map(|&s| dataset(&desk_params(s))).collect();
    let mut report = Vec::new();
    let mut ok = true;
    for algo in [Algo::Mmbb, Algo::Vcp, Algo::RmmVcp] {
        let mut curve = Vec::new();
        for &k in &ks {
            let mut sum = 0.0;
            for (objs, &seed) in datasets.iter().zip(&SEEDS) {
                let p = Params { k, ..desk_params(seed) };
                sum += measure(objs, &p, algo, 1).map_err(|e| e.to_string())?.n_ed;
            }
            curve.push(sum / SEEDS.len() as f64);
        }
        let inversions = curve.windows(2).filter(|w| w[1] < w[0]).count();
        ok &= inversions <= MAX_K_INVERSIONS;
        report.push(format!("{algo} {} ({inversions} inversions)", fmt(&curve)));
    }
    let detail = format!("n_ed over k={ks:?}: {}", report.join("; "));
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn block_insensitivity() -> Outcome {
    let bs = [256usize, 512, 1024, 2048];
    let datasets: Vec<_> = SEEDS.iter().map(|&s| dataset(&desk_params(s))).collect();
    let mut report = Vec::new();
    let mut ok = true;
    for algo in [Algo::Mmbb, Algo::Vcp] {
        // Host load comes in phases of a few seconds that can slow every run
        // by half. Each round times all block sizes back to back, in an order
        // rotated per round, and each time is taken relative to its round
        // mean so the phase cancels. t1(b) is the median relative time
        // scaled by the median raw time.
        let mut rel = vec![Vec::new(); bs.len()];
        let mut raw = Vec::new();
        for (objs, &seed) in datasets.iter().zip(&SEEDS) {
            for round in 0..BLOCK_ROUNDS {
                let mut times = vec![0.0; bs.len()];
                for i in 0..bs.len() {
                    let bi = (i + round) % bs.len();
                    let p = Params { b: bs[bi], ..desk_params(seed) };
                    times[bi] = measure(objs, &p, algo, 1).map_err(|e| e.to_string())?.t1_ms;
                }
                let mean = times.iter().sum::<f64>() / times.len() as f64;
                for (r, t) in rel.iter_mut().zip(&times) {
                    r.push(t / mean);
                }
                raw.extend(times);
            }
        }
        let typical = median(&mut raw);
        let t1: Vec<f64> = rel.iter_mut().map(|r| typical * median(r)).collect();
        let lo = t1.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = t1.iter().copied().fold(0.0, f64::max);
        let spread = (hi - lo) / lo;
        ok &= spread < BLOCK_SPREAD_CEILING;
        report.push(format!("{algo} {} spread {:.1}%", fmt(&t1), 100.0 * spread));
    }
    let detail = format!("t1 ms over b={bs:?}: {}", report.join("; "));
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 0 {
        0.5 * (xs[m - 1] + xs[m])
    } else {
        xs[m]
    }
}

/// Walks the tree checking containment, fanout bounds and aggregates;
/// returns the leaf depths and the object indices seen.
fn check_node(
    tree: &RStarTree,
    objs: &[UncertainObject],
    id: NodeId,
    entry: &InternalEntry,
    depth: usize,
    out: &mut (Vec<usize>, Vec<usize>),
) -> Result<(), String> {
    let node = tree.node(id);
    let fan = tree.fanout();
    let m = tree.dim();
    let mut count = 0;
    let mut sum = vec![0.0; m];
    match &node.kind {
        NodeKind::Leaf(entries) => {
            if entries.is_empty() || entries.len() > fan.leaf {
                return Err(format!("leaf with {} entries", entries.len()));
            }
            out.0.push(depth);
            for e in entries {
                if !entry.mbr.contains(&e.mbr) || &e.mbr != objs[e.object].mbr() {
                    return Err("leaf entry MBR not contained or not the object's".into());
                }
                out.1.push(e.object);
                count += 1;
                sum.iter_mut().zip(objs[e.object].centroid()).for_each(|(s, c)| *s += c);
            }
        }
        NodeKind::Internal(entries) => {
            if entries.is_empty() || entries.len() > fan.internal {
                return Err(format!("internal node with {} entries", entries.len()));
            }
            for e in entries {
                if !entry.mbr.contains(&e.mbr) {
                    return Err("child MBR escapes its parent".into());
                }
                count += e.count;
                sum.iter_mut().zip(&e.centroid).for_each(|(s, c)| *s += e.count as f64 * c);
                check_node(tree, objs, e.child, e, depth + 1, out)?;
            }
        }
    }
    if count != entry.count {
        return Err(format!("count {} recorded, {count} below", entry.count));
    }
    for t in 0..m {
        if (sum[t] / count as f64 - entry.centroid[t]).abs() > AGGREGATE_TOL {
            return Err("subtree centroid is not the weighted mean of its children".into());
        }
    }
    Ok(())
}

fn tree_structure() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for load in 0..TREE_LOADS {
        let spec = GenSpec {
            n: rng.gen_range(1..=600),
            l: rng.gen_range(0.1..20.0),
            s: 1,
            d: rng.gen_range(1..=3),
            seed: rng.gen(),
        };
        let objs = generate(&spec).unwrap();
        let fanout = Fanout { leaf: rng.gen_range(2..=16), internal: rng.gen_range(2..=16) };
        let tree = RStarTree::bulk_load_with_fanout(&objs, fanout).map_err(|e| e.to_string())?;
        let mut out = (Vec::new(), Vec::new());
        check_node(&tree, &objs, tree.root(), tree.root_entry(), 1, &mut out)
            .map_err(|e| format!("load {load} ({spec:?}, {fanout:?}): {e}"))?;
        let (depths, mut seen) = out;
        seen.sort_unstable();
        if depths.iter().any(|&d| d != tree.height()) {
            return Err(format!("load {load}: leaves at uneven depths"));
        }
        if seen != (0..objs.len()).collect::<Vec<_>>() {
            return Err(format!("load {load}: objects missing or repeated"));
        }
    }
    let objs = generate(&GenSpec { n: 24, l: 2.0, s: 1, d: 2, seed: 3 }).unwrap();
    let tree = RStarTree::bulk_load_with_fanout(&objs, Fanout { leaf: 3, internal: 3 }).unwrap();
    if tree.leaf_count() != 8 {
        return Err(format!("24 objects with fanout 3 gave {} leaves", tree.leaf_count()));
    }
    Ok(format!("{TREE_LOADS} bulk loads valid; 24 objects at fanout 3 -> 8 leaves, height {}", tree.height()))
}

fn aggregate_readjust() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    for inst in 0..100 {
        let p = Params {
            n: rng.gen_range(20..=400),
            k: rng.gen_range(1..=12),
            s: rng.gen_range(1..=16),
            d: rng.gen_range(1..=3),
            seed: rng.gen(),
            ..Params::default()
        };
        let objs = dataset(&p);
        let tree = RStarTree::bulk_load(&objs, [256, 512, 1024][inst % 3]).unwrap();
        let reps = init_reps(&p, p.seed ^ 0x5eed).unwrap();
        let mut c = EdCounters::default();
        let ta = assign_with_tree(&tree, &objs, &reps, &mut c).map_err(|e| e.to_string())?;
        let state = ClusterState { reps: reps.clone(), assignment: ta.assignment.clone(), iteration: 0 };
        let from_objects = readjust(&objs, &state);
        let from_tree = ta.means(&reps);
        for (a, b) in from_tree.iter().zip(from_objects.iter()) {
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).abs());
            }
        }
        if worst > AGGREGATE_TOL {
            return Err(format!("instance {inst}: coordinates differ by {worst:e}"));
        }
    }
    Ok(format!("100 instances, max coordinate gap {worst:e}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("oracle equivalence", oracle_equivalence),
        ("pruning soundness fuzz", pruning_soundness),
        ("baseline counter exactness", baseline_counters),
        ("pruning effectiveness", pruning_effectiveness),
        ("linear scaling in n", linear_scaling),
        ("n_ed trend in k", k_trend),
        ("block-size insensitivity", block_insensitivity),
        ("tree structure", tree_structure),
        ("aggregate readjust", aggregate_readjust),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
