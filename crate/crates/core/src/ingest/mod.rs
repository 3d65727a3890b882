//! Dataset loading, feature assembly, standardization and stratified splits.

mod design;
mod kde_table;
mod telstra;

pub use design::{split, standardize, stratified_sample, DesignMatrix, RecordId, Standardization};
pub(crate) use design::{csv_err, parse_field};
pub use kde_table::{
    clamp_percentages, kde_design_matrix, load_kde_table, read_kde_table, write_kde_table,
    KdeRecord, KDE_FEATURES, MAX_SEVERITY, PERCENT_COLUMNS, PERCENT_MAX,
};
pub use telstra::{
    assemble_features, load_telstra, location_index, parse_log_features, parse_tokens,
    parse_train, FeatureSchema, LogFeatureRow, RawFaultTables, TokenRow, TrainRow, EVENT_FILE,
    LOCATION_FREQUENCY, LOCATION_INDEX, LOG_FEATURE_FILE, RESOURCE_FILE, SEVERITY_TYPE_FILE,
    TRAIN_FILE,
};
