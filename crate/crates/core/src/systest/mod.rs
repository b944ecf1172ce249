//! Consistency tests for measurement models on count data.

mod hoeffding;
mod split;
mod witness;

pub use hoeffding::{hoeffding_tail, hoeffding_threshold, hoeffding_threshold_mixed};
pub use split::{split_counts, split_test, tail_bound, TestReport, Verdict};
pub use witness::{find_witness, witness_statistic, WitnessKind, WitnessVector};
