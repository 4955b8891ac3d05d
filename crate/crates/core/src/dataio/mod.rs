//! Ingestion, standardization, stratified splitting and exploratory
//! summaries for the voice-measurement dataset.

mod eda;
mod schema;
mod split;
mod standardize;

pub use eda::{
    correlation_csv, feature_summary, pearson_correlation_matrix, summary_csv, ClassSummary,
    FeatureSummary, HISTOGRAM_BINS,
};
pub use schema::{load_csv, parse_csv, Dataset, RecordSchema, UCI_FEATURES};
pub use split::{stratified_split, SplitSpec};
pub use standardize::{standardize_apply, standardize_fit, StandardizationStats, STD_FLOOR};
