//! Evaluation mathematics: BD-rate, rank correlation, MDS and clustering,
//! report emission.

mod bdrate;
mod correlation;
mod mds;
mod report;

pub use bdrate::{bd_rate, MIN_OVERLAP, SIMPSON_INTERVALS};
pub use correlation::{dissimilarity, ranks, spearman, ScoreTable};
pub use mds::{
    cluster, jacobi_eigen, mds_embed, procrustes_residual, MdsEmbedding, EIGEN_FLOOR,
    JACOBI_MAX_SWEEPS, JACOBI_TOLERANCE,
};
pub use report::{bd_rate_curves, bd_table, emit_report, BdCell, BdTable, Report, BD_FIT};
