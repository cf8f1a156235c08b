//! Training-distribution strategies for classifiers under distribution shift.
//!
//! This crate compares interchangeable ways of building mini-batches —
//! selective mixup, its no-mixing "selective sampling" ablation, classical
//! resampling, and combinations — over a small from-scratch classifier, and
//! ships the diagnostics (entropy, divergences, sampled-distribution audits,
//! uniformity-shift reports) that expose how each strategy reshapes the
//! training distribution.
//!
//! The numeric core is generic over the scalar type ([`Scalar`], implemented
//! for `f32` and `f64`); concrete aliases for the main types live at the
//! crate root (`Dataset64`, `ClassDistribution32`, ...).

pub mod data;
pub mod error;
pub mod io;
pub mod metrics;
pub mod mixing;
pub mod model;
pub mod pairing;
pub mod scalar;
pub mod strategies;
pub mod synth;

pub use data::{
    empirical_class_distribution, empirical_domain_distribution, empirical_group_distribution,
    entropy, entropy_of, ClassDistribution, Dataset, Example, Split,
};
pub use error::{Error, Result};
pub use io::{load_dataset_csv, write_dataset_csv, write_datasets_csv, CsvSchema};
pub use metrics::{
    accuracy, auroc, distribution_divergence, evaluate, nn_covariate_divergence,
    pearson_correlation, uniformity_shift_report, DivergenceKind, DomainUniformity,
    EvaluationReport,
};
pub use mixing::{mix_examples, sample_mix_coefficient, MixCoefficient, MixedExample};
pub use model::{
    compute_gradients, forward_predict, soft_cross_entropy_loss, train, Arch, EarlyStopMetric,
    EpochRecord, Model, ModelSpec, TrainConfig, TrainedModel,
};
pub use pairing::{
    build_pair_pool, combined_distribution, select_partner, virtual_class_distribution,
    PairCriterion, PairPool, PairSelectionSemantics, Relation,
};
pub use scalar::Scalar;
pub use strategies::{
    build_minibatch, effective_sampled_distribution, BatchItem, Minibatch, ResampleAxis,
    SampledDistribution, SamplingStrategy,
};
pub use synth::{
    gen_spurious_correlation, gen_temporal_label_shift, Metadata, SpuriousCorrConfig, SynthBundle,
    TemporalShiftConfig,
};

/// `f64` aliases (the default precision used by the CLI).
pub type Example64 = data::Example<f64>;
pub type Dataset64 = data::Dataset<f64>;
pub type ClassDistribution64 = data::ClassDistribution<f64>;
pub type Model64 = model::Model<f64>;
pub type TrainedModel64 = model::TrainedModel<f64>;
pub type SamplingStrategy64 = strategies::SamplingStrategy<f64>;

/// `f32` aliases.
pub type Example32 = data::Example<f32>;
pub type Dataset32 = data::Dataset<f32>;
pub type ClassDistribution32 = data::ClassDistribution<f32>;
pub type Model32 = model::Model<f32>;
pub type TrainedModel32 = model::TrainedModel<f32>;
pub type SamplingStrategy32 = strategies::SamplingStrategy<f32>;
