//! Clustering of uncertain spatial objects with UK-means.
//!
//! Objects carry a discrete PDF over their minimum bounding rectangle and
//! are assigned by expected distance. Three pruning strategies cut down the
//! number of expected distances evaluated without changing the result:
//!
//! - min-max bounding-box bounds ([`prune::mmbb_prune`]),
//! - Voronoi-cell containment and bisector tests ([`prune::vcp_prune`]),
//! - group pruning over an STR-packed R*-tree ([`rtree::assign_with_tree`]).

pub mod data;
pub mod distance;
pub mod engine;
pub mod error;
pub mod model;
pub mod prune;
pub mod rtree;

pub use data::{generate, uncertainize, Dataset, GenSpec, RunSummary};
pub use distance::{expected_distance, max_dist, min_dist, min_max_dist, EdCounters};
pub use engine::{init_reps, readjust, run, run_algo, run_with_reps, Algo, AssignStrategy, RunResult};
pub use error::{Error, Result};
pub use model::{
    object_centroid, validate_dataset, ClusterState, Diagnostic, DiscretePdf, Mbr, Params, PointSet,
    UncertainObject,
};
pub use prune::{hybrid_prune, mmbb_prune, vcp_prune, CandidateSet};
pub use rtree::{assign_with_tree, Fanout, RStarTree, SubtreeAggregate};
