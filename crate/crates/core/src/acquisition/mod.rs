//! Batch acquisition functions and their optimizer.

pub mod domain;
pub mod optimize;
pub mod qei;
pub mod spec;
pub mod thompson;

pub use domain::SearchDomain;
pub use optimize::{min_pairwise_distance, optimize_acquisition, repair_batch, OptimizedBatch};
pub use qei::{mu_min, pqei_mc, qei, McEstimate, PqeiEvaluator, QeiEvaluator, PQEI_HISTORY_LIMIT};
pub use spec::{AcquisitionKind, AcquisitionSpec};
pub use thompson::{thompson_select_discrete, ts_batch};
