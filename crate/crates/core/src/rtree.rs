//! Sort-Tile-Recursive packed R*-tree over uncertain objects.
//!
//! Leaf entries hold an object's MBR, centroid and a reference into the
//! caller's object slice (the PDF data stays outside the tree). Internal
//! entries hold the child group's MBR, object count and centroid, so a
//! bulk-assigned subtree contributes to the representative update without
//! touching its objects.
//!
//! The tree is built once per dataset and is immutable afterwards.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::ops::Range;

use rayon::prelude::*;

use crate::distance::{ed_raw, EdCounters};
use crate::error::{check_dim, Error, Result};
use crate::model::{Mbr, PointSet, UncertainObject};
use crate::prune::{hybrid_prune, CandidateSet};

const F64_BYTES: usize = 8;

/// Bytes taken by one internal entry: MBR, centroid, count and child ref.
pub fn internal_entry_bytes(dim: usize) -> usize {
    2 * dim * F64_BYTES + dim * F64_BYTES + 8 + 8
}

/// Bytes taken by one leaf entry: MBR, centroid, PDF ref and object id.
pub fn leaf_entry_bytes(dim: usize) -> usize {
    2 * dim * F64_BYTES + dim * F64_BYTES + 8 + 8
}

/// Maximum entries per node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fanout {
    pub leaf: usize,
    pub internal: usize,
}

impl Fanout {
    pub fn for_block(block_size: usize, dim: usize) -> Result<Self> {
        let leaf = block_size / leaf_entry_bytes(dim);
        let internal = block_size / internal_entry_bytes(dim);
        if leaf < 2 || internal < 2 {
            return Err(Error::InvalidParam(format!(
                "block size {block_size} holds fewer than 2 entries of {} bytes",
                internal_entry_bytes(dim).max(leaf_entry_bytes(dim))
            )));
        }
        Ok(Self { leaf, internal })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
pub struct LeafEntry {
    pub mbr: Mbr,
    pub centroid: Vec<f64>,
    /// Position of the object in the indexed slice.
    pub object: usize,
    pub object_id: u64,
}

#[derive(Debug, Clone)]
pub struct InternalEntry {
    pub mbr: Mbr,
    pub count: usize,
    pub centroid: Vec<f64>,
    pub child: NodeId,
}

/// `(object count, centroid of the objects)` of the subtree under an entry.
pub trait SubtreeAggregate {
    fn centroid_of_subtree(&self) -> (usize, &[f64]);
}

impl SubtreeAggregate for LeafEntry {
    fn centroid_of_subtree(&self) -> (usize, &[f64]) {
        (1, &self.centroid)
    }
}

impl SubtreeAggregate for InternalEntry {
    fn centroid_of_subtree(&self) -> (usize, &[f64]) {
        (self.count, &self.centroid)
    }
}

#[derive(Debug, Clone)]
pub enum NodeKind {
    Leaf(Vec<LeafEntry>),
    Internal(Vec<InternalEntry>),
}

#[derive(Debug, Clone)]
pub struct Node {
    pub kind: NodeKind,
    /// Range of [`RStarTree::leaf_order`] covered by this subtree.
    pub span: Range<usize>,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf(_))
    }

    pub fn len(&self) -> usize {
        match &self.kind {
            NodeKind::Leaf(e) => e.len(),
            NodeKind::Internal(e) => e.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct RStarTree {
    nodes: Vec<Node>,
    root: NodeId,
    root_entry: InternalEntry,
    height: usize,
    fanout: Fanout,
    leaf_order: Vec<usize>,
    dim: usize,
    n_objects: usize,
    fingerprint: u64,
}

fn fingerprint(objects: &[UncertainObject]) -> u64 {
    let mut h = DefaultHasher::new();
    objects.len().hash(&mut h);
    for o in objects {
        o.id().hash(&mut h);
        for v in o.mbr().lo().iter().chain(o.mbr().hi()) {
            v.to_bits().hash(&mut h);
        }
    }
    h.finish()
}

/// Smallest `s` with `s^r >= p`.
fn int_root_ceil(p: usize, r: usize) -> usize {
    let mut s = (p as f64).powf(1.0 / r as f64).ceil().max(1.0) as usize;
    let pow = |s: usize| (0..r).try_fold(1usize, |acc, _| acc.checked_mul(s)).unwrap_or(usize::MAX);
    while s > 1 && pow(s - 1) >= p {
        s -= 1;
    }
    while pow(s) < p {
        s += 1;
    }
    s
}

/// Sort-Tile-Recursive grouping: reorders `items` and returns consecutive
/// chunks of at most `fanout` items, one chunk per node.
fn str_chunks<K>(items: &mut [usize], dim: usize, fanout: usize, key: &K) -> Vec<Range<usize>>
where
    K: Fn(usize, usize) -> f64,
{
    fn tile<K: Fn(usize, usize) -> f64>(
        items: &mut [usize],
        offset: usize,
        axis: usize,
        dim: usize,
        fanout: usize,
        key: &K,
        out: &mut Vec<Range<usize>>,
    ) {
        items.sort_by(|&a, &b| key(a, axis).total_cmp(&key(b, axis)));
        let len = items.len();
        if axis + 1 == dim {
            for start in (0..len).step_by(fanout) {
                out.push(offset + start..offset + (start + fanout).min(len));
            }
            return;
        }
        let pages = len.div_ceil(fanout);
        let slice_len = int_root_ceil(pages, dim - axis) * fanout;
        for (i, slice) in items.chunks_mut(slice_len).enumerate() {
            tile(slice, offset + i * slice_len, axis + 1, dim, fanout, key, out);
        }
    }

    let mut out = Vec::with_capacity(items.len().div_ceil(fanout));
    tile(items, 0, 0, dim, fanout, key, &mut out);
    // Only the final chunk can be short. Borrow one item from its
    // neighbour so no non-root node is left with a single entry; with
    // fanout 2 this is impossible and the singleton stays.
    if let [.., a, b] = out.as_mut_slice() {
        if b.len() == 1 && a.len() >= 3 {
            a.end -= 1;
            b.start -= 1;
        }
    }
    out
}

fn weighted_centroid<'a>(parts: impl Iterator<Item = (usize, &'a [f64])>, dim: usize) -> (usize, Vec<f64>) {
    let mut count = 0;
    let mut sum = vec![0.0; dim];
    for (c, x) in parts {
        count += c;
        for t in 0..dim {
            sum[t] += c as f64 * x[t];
        }
    }
    let inv = 1.0 / count as f64;
    sum.iter_mut().for_each(|v| *v *= inv);
    (count, sum)
}

impl RStarTree {
    /// Bulk-load with fanouts derived from the block size in bytes.
    pub fn bulk_load(objects: &[UncertainObject], block_size: usize) -> Result<Self> {
        let dim = objects.first().ok_or(Error::EmptyInput("object set"))?.dim();
        Self::bulk_load_with_fanout(objects, Fanout::for_block(block_size, dim)?)
    }

    pub fn bulk_load_with_fanout(objects: &[UncertainObject], fanout: Fanout) -> Result<Self> {
        let first = objects.first().ok_or(Error::EmptyInput("object set"))?;
        if fanout.leaf < 2 || fanout.internal < 2 {
            return Err(Error::InvalidParam("fanout must be at least 2".into()));
        }
        let dim = first.dim();
        for o in objects {
            check_dim(dim, o.dim())?;
        }

        let mut nodes: Vec<Node> = Vec::new();
        let mut items: Vec<usize> = (0..objects.len()).collect();
        let chunks = str_chunks(&mut items, dim, fanout.leaf, &|i, t| objects[i].centroid()[t]);
        let mut level: Vec<InternalEntry> = chunks
            .into_iter()
            .map(|r| {
                let entries: Vec<LeafEntry> = items[r]
                    .iter()
                    .map(|&i| LeafEntry {
                        mbr: objects[i].mbr().clone(),
                        centroid: objects[i].centroid().to_vec(),
                        object: i,
                        object_id: objects[i].id(),
                    })
                    .collect();
                let mbr = Mbr::enclosing(entries.iter().map(|e| &e.mbr)).expect("non-empty chunk");
                let (count, centroid) =
                    weighted_centroid(entries.iter().map(|e| e.centroid_of_subtree()), dim);
                nodes.push(Node {
                    kind: NodeKind::Leaf(entries),
                    span: 0..0,
                });
                InternalEntry {
                    mbr,
                    count,
                    centroid,
                    child: NodeId(nodes.len() - 1),
                }
            })
            .collect();
        let mut height = 1;

        while level.len() > 1 {
            let mut items: Vec<usize> = (0..level.len()).collect();
            let chunks = str_chunks(&mut items, dim, fanout.internal, &|i, t| level[i].centroid[t]);
            let mut slots: Vec<Option<InternalEntry>> = level.into_iter().map(Some).collect();
            level = chunks
                .into_iter()
                .map(|r| {
                    let entries: Vec<InternalEntry> =
                        items[r].iter().map(|&i| slots[i].take().expect("each entry used once")).collect();
                    let mbr = Mbr::enclosing(entries.iter().map(|e| &e.mbr)).expect("non-empty chunk");
                    let (count, centroid) =
                        weighted_centroid(entries.iter().map(|e| e.centroid_of_subtree()), dim);
                    nodes.push(Node {
                        kind: NodeKind::Internal(entries),
                        span: 0..0,
                    });
                    InternalEntry {
                        mbr,
                        count,
                        centroid,
                        child: NodeId(nodes.len() - 1),
                    }
                })
                .collect();
            height += 1;
        }

        let root_entry = level.pop().expect("at least one node");
        let mut tree = Self {
            root: root_entry.child,
            root_entry,
            nodes,
            height,
            fanout,
            leaf_order: Vec::with_capacity(objects.len()),
            dim,
            n_objects: objects.len(),
            fingerprint: fingerprint(objects),
        };
        tree.assign_spans(tree.root);
        Ok(tree)
    }

    /// Lay the leaves out in depth-first order so every subtree covers a
    /// contiguous range of `leaf_order`.
    fn assign_spans(&mut self, id: NodeId) {
        let start = self.leaf_order.len();
        let children: Vec<NodeId> = match &self.nodes[id.0].kind {
            NodeKind::Leaf(entries) => {
                self.leaf_order.extend(entries.iter().map(|e| e.object));
                Vec::new()
            }
            NodeKind::Internal(entries) => entries.iter().map(|e| e.child).collect(),
        };
        for c in children {
            self.assign_spans(c);
        }
        self.nodes[id.0].span = start..self.leaf_order.len();
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    /// Aggregates over the whole tree.
    pub fn root_entry(&self) -> &InternalEntry {
        &self.root_entry
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &Node)> {
        self.nodes.iter().enumerate().map(|(i, n)| (NodeId(i), n))
    }

    /// Number of levels; a lone leaf root has height 1.
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn fanout(&self) -> Fanout {
        self.fanout
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.n_objects
    }

    pub fn is_empty(&self) -> bool {
        self.n_objects == 0
    }

    /// Object positions in depth-first leaf order.
    pub fn leaf_order(&self) -> &[usize] {
        &self.leaf_order
    }

    /// Error unless the tree was built over exactly `objects`.
    pub fn check_matches(&self, objects: &[UncertainObject]) -> Result<()> {
        if objects.len() != self.n_objects {
            return Err(Error::StaleIndex(format!(
                "tree indexes {} objects, got {}",
                self.n_objects,
                objects.len()
            )));
        }
        if fingerprint(objects) != self.fingerprint {
            return Err(Error::StaleIndex("object ids or MBRs changed since bulk load".into()));
        }
        Ok(())
    }

    /// One line per node in depth-first order:
    /// `depth, kind, lo..hi per dim, count, centroid`.
    pub fn dump(&self, w: &mut impl Write) -> std::io::Result<()> {
        let mut stack = vec![(self.root, &self.root_entry, 0usize)];
        while let Some((id, entry, depth)) = stack.pop() {
            let node = self.node(id);
            let kind = if node.is_leaf() { "leaf" } else { "internal" };
            let mbr: Vec<String> = (0..self.dim)
                .map(|t| format!("{}..{}", entry.mbr.lo()[t], entry.mbr.hi()[t]))
                .collect();
            let centroid: Vec<String> = entry.centroid.iter().map(f64::to_string).collect();
            writeln!(
                w,
                "{depth}, {kind}, {}, {}, {}",
                mbr.join(" "),
                entry.count,
                centroid.join(" ")
            )?;
            if let NodeKind::Internal(entries) = &node.kind {
                for e in entries.iter().rev() {
                    stack.push((e.child, e, depth + 1));
                }
            }
        }
        Ok(())
    }
}

/// Result of one tree-driven assignment pass.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeAssignment {
    /// Cluster per object position.
    pub assignment: Vec<usize>,
    /// Objects per cluster.
    pub counts: Vec<usize>,
    /// Per-cluster sums of member centroids, `k × dim`, accumulated from
    /// subtree aggregates where whole subtrees were bulk-assigned.
    pub sums: Vec<f64>,
}

impl TreeAssignment {
    /// Representatives from the aggregated sums; empty clusters keep `prev`.
    pub fn means(&self, prev: &PointSet) -> PointSet {
        let mut reps = prev.clone();
        let m = prev.dim();
        for j in 0..self.counts.len() {
            if self.counts[j] > 0 {
                let inv = 1.0 / self.counts[j] as f64;
                let dst = reps.get_mut(j);
                for t in 0..m {
                    dst[t] = self.sums[j * m + t] * inv;
                }
            }
        }
        reps
    }
}

enum Placement {
    Bulk(Range<usize>, usize),
    One(usize, usize),
}

struct Partial {
    counters: EdCounters,
    counts: Vec<usize>,
    sums: Vec<f64>,
    placements: Vec<Placement>,
}

struct Walker<'a> {
    tree: &'a RStarTree,
    objects: &'a [UncertainObject],
    reps: &'a PointSet,
    out: Partial,
}

impl Walker<'_> {
    fn credit(&mut self, j: usize, count: usize, centroid: &[f64]) {
        let m = self.reps.dim();
        self.out.counts[j] += count;
        let w = count as f64;
        for t in 0..m {
            self.out.sums[j * m + t] += w * centroid[t];
        }
    }

    fn internal_entry(&mut self, e: &InternalEntry, q: &CandidateSet) {
        let q = hybrid_prune(&e.mbr, self.reps, q.clone(), &mut self.out.counters);
        if let Some(j) = q.single() {
            let node = self.tree.node(e.child);
            self.out.placements.push(Placement::Bulk(node.span.clone(), j));
            self.credit(j, e.count, &e.centroid);
            return;
        }
        self.node(e.child, &q);
    }

    fn node(&mut self, id: NodeId, q: &CandidateSet) {
        match &self.tree.node(id).kind {
            NodeKind::Leaf(entries) => entries.iter().for_each(|e| self.leaf_entry(e, q)),
            NodeKind::Internal(entries) => entries.iter().for_each(|e| self.internal_entry(e, q)),
        }
    }

    fn leaf_entry(&mut self, e: &LeafEntry, q: &CandidateSet) {
        let q = hybrid_prune(&e.mbr, self.reps, q.clone(), &mut self.out.counters);
        let j = match q.single() {
            Some(j) => j,
            None => {
                let obj = &self.objects[e.object];
                self.out.counters.ed_evals += q.len() as u64;
                argmin_ed(obj, self.reps, q.alive())
            }
        };
        self.out.placements.push(Placement::One(e.object, j));
        self.credit(j, 1, &e.centroid);
    }
}

/// Lowest-index argmin of ED over `alive` (ascending). Uncounted.
pub(crate) fn argmin_ed(obj: &UncertainObject, reps: &PointSet, alive: &[usize]) -> usize {
    let mut best = (f64::INFINITY, alive[0]);
    for &j in alive {
        let d = ed_raw(obj, reps.get(j));
        if d < best.0 {
            best = (d, j);
        }
    }
    best.1
}

/// Group-based assignment: walks the tree with the full candidate set,
/// prunes against each entry's MBR, bulk-assigns any subtree left with a
/// single candidate and falls back to expected distances at the objects.
pub fn assign_with_tree(
    tree: &RStarTree,
    objects: &[UncertainObject],
    reps: &PointSet,
    counters: &mut EdCounters,
) -> Result<TreeAssignment> {
    tree.check_matches(objects)?;
    check_dim(tree.dim(), reps.dim())?;
    if reps.is_empty() {
        return Err(Error::EmptyInput("representative set"));
    }
    Ok(assign_unchecked(tree, objects, reps, counters, false))
}

/// Work is split per root entry; partial results merge in entry order, so
/// the outcome is identical with or without `parallel`.
pub(crate) fn assign_unchecked(
    tree: &RStarTree,
    objects: &[UncertainObject],
    reps: &PointSet,
    counters: &mut EdCounters,
    parallel: bool,
) -> TreeAssignment {
    let k = reps.len();
    let m = reps.dim();
    let fresh = || Partial {
        counters: EdCounters::default(),
        counts: vec![0; k],
        sums: vec![0.0; k * m],
        placements: Vec::new(),
    };
    let all = CandidateSet::all(k);

    let partials: Vec<Partial> = if k == 1 {
        let mut w = Walker { tree, objects, reps, out: fresh() };
        let root = &tree.root_entry;
        w.out.placements.push(Placement::Bulk(0..tree.leaf_order.len(), 0));
        w.credit(0, root.count, &root.centroid);
        vec![w.out]
    } else {
        let run = |unit: usize| {
            let mut w = Walker { tree, objects, reps, out: fresh() };
            match &tree.node(tree.root).kind {
                NodeKind::Leaf(entries) => w.leaf_entry(&entries[unit], &all),
                NodeKind::Internal(entries) => w.internal_entry(&entries[unit], &all),
            }
            w.out
        };
        let units = tree.node(tree.root).len();
        if parallel {
            (0..units).into_par_iter().map(run).collect()
        } else {
            (0..units).map(run).collect()
        }
    };

    let mut assignment = vec![usize::MAX; objects.len()];
    let mut counts = vec![0; k];
    let mut sums = vec![0.0; k * m];
    for p in partials {
        *counters += p.counters;
        for (a, b) in counts.iter_mut().zip(&p.counts) {
            *a += b;
        }
        for (a, b) in sums.iter_mut().zip(&p.sums) {
            *a += b;
        }
        for pl in p.placements {
            match pl {
                Placement::Bulk(span, j) => {
                    for &i in &tree.leaf_order[span] {
                        assignment[i] = j;
                    }
                }
                Placement::One(i, j) => assignment[i] = j,
            }
        }
    }
    debug_assert!(assignment.iter().all(|&j| j < k));
    TreeAssignment {
        assignment,
        counts,
        sums,
    }
}
