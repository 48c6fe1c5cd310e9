//! Candidate-set pruning for one box (an object's MBR or a tree entry's MBR).
//!
//! A pruner only ever removes cluster `p` when some surviving cluster is
//! guaranteed a strictly smaller expected distance for every object whose
//! MBR lies inside the box. The argmin-ED cluster therefore always survives.

use serde::{Deserialize, Serialize};

use crate::distance::{dist_sq, max_dist_sq, min_dist_sq, EdCounters};
use crate::model::{Mbr, PointSet};

/// Clusters still possibly closest to every object inside a box.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    /// Ascending cluster indices.
    alive: Vec<usize>,
    pub vcp_ran: bool,
    pub mmbb_ran: bool,
}

impl CandidateSet {
    pub fn all(k: usize) -> Self {
        Self::from_indices((0..k).collect())
    }

    pub fn from_indices(mut alive: Vec<usize>) -> Self {
        alive.sort_unstable();
        alive.dedup();
        Self {
            alive,
            vcp_ran: false,
            mmbb_ran: false,
        }
    }

    pub fn alive(&self) -> &[usize] {
        &self.alive
    }

    pub fn len(&self) -> usize {
        self.alive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alive.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.alive.binary_search(&j).is_ok()
    }

    /// The survivor, when exactly one remains.
    pub fn single(&self) -> Option<usize> {
        match self.alive.as_slice() {
            [j] => Some(*j),
            _ => None,
        }
    }
}

/// Min-max bounding-box pruning: drop every `p` with
/// `MinD(box, c_p) > MinMaxD(box)` over the alive clusters.
pub fn mmbb_prune(mbr: &Mbr, reps: &PointSet, mut cand: CandidateSet, counters: &mut EdCounters) -> CandidateSet {
    cand.mmbb_ran = true;
    if cand.alive.len() <= 1 {
        return cand;
    }
    counters.cand_pairs += cand.alive.len() as u64;
    let min_max = cand
        .alive
        .iter()
        .map(|&j| max_dist_sq(mbr, reps.get(j)))
        .fold(f64::INFINITY, f64::min);
    // squared distances order the same way as distances
    cand.alive.retain(|&j| min_dist_sq(mbr, reps.get(j)) <= min_max);
    debug_assert!(!cand.alive.is_empty());
    cand
}

/// True when every point of `mbr` is strictly closer to `a` than to `b`.
///
/// The box lies in the open half-space `{x : d(x, a) < d(x, b)}` exactly
/// when its corner extremal in direction `b - a` does.
#[inline]
pub(crate) fn box_closer_to(mbr: &Mbr, a: &[f64], b: &[f64]) -> bool {
    let (lo, hi) = (mbr.lo(), mbr.hi());
    let mut da = 0.0;
    let mut db = 0.0;
    for t in 0..a.len() {
        let x = if b[t] > a[t] { hi[t] } else { lo[t] };
        da += (x - a[t]) * (x - a[t]);
        db += (x - b[t]) * (x - b[t]);
    }
    da < db
}

/// Voronoi-cell pruning over the alive clusters.
///
/// If the box lies strictly inside the Voronoi cell of one alive
/// representative, only that cluster survives. Otherwise every cluster `p`
/// is dropped for which some alive `q` has the whole box strictly on its
/// side of the bisector `c_p | c_q`. No Voronoi diagram is built: each cell
/// boundary is a set of bisector half-spaces, tested corner-wise.
pub fn vcp_prune(mbr: &Mbr, reps: &PointSet, mut cand: CandidateSet, counters: &mut EdCounters) -> CandidateSet {
    cand.vcp_ran = true;
    if cand.alive.len() <= 1 {
        return cand;
    }
    counters.cand_pairs += cand.alive.len() as u64;

    // Cells are disjoint and contain their points, so only the cell holding
    // the box center can contain the box.
    let center = mbr.center();
    let mut owner = cand.alive[0];
    let mut best = f64::INFINITY;
    for &j in &cand.alive {
        let d = dist_sq(&center, reps.get(j));
        if d < best {
            best = d;
            owner = j;
        }
    }
    let c_owner = reps.get(owner);
    let contained = cand
        .alive
        .iter()
        .all(|&q| q == owner || box_closer_to(mbr, c_owner, reps.get(q)));
    if contained {
        cand.alive.clear();
        cand.alive.push(owner);
        return cand;
    }

    // Bisector pruning. Dominance is a strict partial order, so testing
    // against the unpruned set never empties it.
    let alive = cand.alive.clone();
    cand.alive.retain(|&p| {
        let c_p = reps.get(p);
        if p != owner && box_closer_to(mbr, c_owner, c_p) {
            return false;
        }
        !alive
            .iter()
            .any(|&q| q != p && q != owner && box_closer_to(mbr, reps.get(q), c_p))
    });
    debug_assert!(!cand.alive.is_empty());
    cand
}

/// Voronoi-cell pruning followed by min-max pruning when more than one
/// candidate is left.
pub fn hybrid_prune(mbr: &Mbr, reps: &PointSet, cand: CandidateSet, counters: &mut EdCounters) -> CandidateSet {
    let cand = vcp_prune(mbr, reps, cand, counters);
    if cand.len() > 1 {
        mmbb_prune(mbr, reps, cand, counters)
    } else {
        cand
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(lo: [f64; 2], hi: [f64; 2]) -> Mbr {
        Mbr::new(lo.to_vec(), hi.to_vec()).unwrap()
    }

    fn reps(rows: &[[f64; 2]]) -> PointSet {
        PointSet::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn mmbb_prunes_far_rep() {
        let mut c = EdCounters::default();
        let r = reps(&[[0.5, 0.5], [10.0, 10.0]]);
        let out = mmbb_prune(&bx([0.0, 0.0], [1.0, 1.0]), &r, CandidateSet::all(2), &mut c);
        assert_eq!(out.alive(), &[0]);
        assert_eq!(c.cand_pairs, 2);
        assert!(out.mmbb_ran);
    }

    #[test]
    fn mmbb_single_candidate_untouched() {
        let mut c = EdCounters::default();
        let r = reps(&[[0.5, 0.5], [10.0, 10.0]]);
        let out = mmbb_prune(&bx([0.0, 0.0], [1.0, 1.0]), &r, CandidateSet::from_indices(vec![1]), &mut c);
        assert_eq!(out.alive(), &[1]);
        assert_eq!(c.cand_pairs, 0);
    }

    #[test]
    fn mmbb_keeps_symmetric_pair() {
        let mut c = EdCounters::default();
        let r = reps(&[[-1.0, 0.5], [2.0, 0.5]]);
        let out = mmbb_prune(&bx([0.0, 0.0], [1.0, 1.0]), &r, CandidateSet::all(2), &mut c);
        assert_eq!(out.alive(), &[0, 1]);
    }

    #[test]
    fn vcp_contained_box() {
        let mut c = EdCounters::default();
        let r = reps(&[[0.0, 0.0], [10.0, 0.0]]);
        let out = vcp_prune(&bx([1.0, 0.0], [2.0, 1.0]), &r, CandidateSet::all(2), &mut c);
        assert_eq!(out.alive(), &[0]);
        assert!(out.vcp_ran);
    }

    #[test]
    fn vcp_straddling_box_unchanged() {
        let mut c = EdCounters::default();
        let r = reps(&[[0.0, 0.0], [10.0, 0.0]]);
        let out = vcp_prune(&bx([4.0, 0.0], [6.0, 1.0]), &r, CandidateSet::all(2), &mut c);
        assert_eq!(out.alive(), &[0, 1]);
    }

    #[test]
    fn vcp_box_touching_bisector_not_contained() {
        let mut c = EdCounters::default();
        let r = reps(&[[0.0, 0.0], [10.0, 0.0]]);
        let out = vcp_prune(&bx([3.0, 0.0], [5.0, 1.0]), &r, CandidateSet::all(2), &mut c);
        assert_eq!(out.alive(), &[0, 1]);
    }

    #[test]
    fn vcp_single_candidate() {
        let mut c = EdCounters::default();
        let r = reps(&[[0.0, 0.0], [10.0, 0.0]]);
        let out = vcp_prune(&bx([4.0, 0.0], [6.0, 1.0]), &r, CandidateSet::from_indices(vec![1]), &mut c);
        assert_eq!(out.alive(), &[1]);
    }

    #[test]
    fn vcp_drops_dominated_rep_when_box_straddles() {
        // box straddles the 0|1 bisector x=5 but sits far from rep 2
        let mut c = EdCounters::default();
        let r = reps(&[[0.0, 0.0], [10.0, 0.0], [5.0, 50.0]]);
        let out = vcp_prune(&bx([4.0, 0.0], [6.0, 1.0]), &r, CandidateSet::all(3), &mut c);
        assert_eq!(out.alive(), &[0, 1]);
    }

    #[test]
    fn vcp_respects_alive_restriction() {
        // w.r.t. {1, 2} only, the box is inside rep 1's cell
        let mut c = EdCounters::default();
        let r = reps(&[[5.0, 0.5], [0.0, 0.0], [10.0, 0.0]]);
        let out = vcp_prune(&bx([1.0, 0.0], [2.0, 1.0]), &r, CandidateSet::from_indices(vec![1, 2]), &mut c);
        assert_eq!(out.alive(), &[1]);
    }

    #[test]
    fn hybrid_short_circuits_after_vcp() {
        let mut c = EdCounters::default();
        let r = reps(&[[0.0, 0.0], [10.0, 0.0]]);
        let out = hybrid_prune(&bx([1.0, 0.0], [2.0, 1.0]), &r, CandidateSet::all(2), &mut c);
        assert_eq!(out.alive(), &[0]);
        assert!(!out.mmbb_ran);
        assert_eq!(c.cand_pairs, 2);
    }

    #[test]
    fn hybrid_matches_mmbb_when_vcp_fails() {
        let r = reps(&[[-1.0, 0.5], [2.0, 0.5], [0.5, 30.0]]);
        let b = bx([0.0, 0.0], [1.0, 1.0]);
        let mut c = EdCounters::default();
        let h = hybrid_prune(&b, &r, CandidateSet::all(3), &mut c);
        let m = mmbb_prune(&b, &r, CandidateSet::all(3), &mut c);
        assert_eq!(h.alive(), m.alive());
        assert!(h.mmbb_ran && h.vcp_ran);
    }

    #[test]
    fn box_closer_to_is_strict() {
        let b = bx([0.0, 0.0], [5.0, 1.0]);
        assert!(!box_closer_to(&b, &[0.0, 0.0], &[10.0, 0.0]));
        let b = bx([0.0, 0.0], [4.999, 1.0]);
        assert!(box_closer_to(&b, &[0.0, 0.0], &[10.0, 0.0]));
    }
}
