//! Regularization paths, log-log regressions, and state partitions.

mod cluster;
mod path;

pub use cluster::{
    adjusted_rand_index, kmeans_pp, partition_states, KMeansResult, PartitionMethod, PartitionResult,
    KMEANS_MAX_ITERS,
};
pub use path::{
    fit_loglog, geometric_grid, run_path, sample_size_study, PathConfig, PathPoint, PathResult, RegressionFit,
    SampleSizeStudy, StudyRecord,
};
