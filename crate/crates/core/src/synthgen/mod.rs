//! Synthetic fault records from per-class kernel density estimates sampled
//! with a random-walk Metropolis chain.

mod kde;
mod taxonomy;

pub use kde::{
    fit_kde, sample_markov, sample_markov_with_stats, BandwidthRule, ChainConfig, ChainOutput,
    KdeModel,
};
pub use taxonomy::{
    draw_classes, generate_dataset, generate_labeled, ClassTaxonomy, FaultClass, NormalProfile,
    MOBILE_FAULT_CLASSES, MOBILE_FEATURES,
};
