//! Completion and evaluation of binary concept-by-feature norm matrices.
//!
//! The pipeline: ingest rater-count tables and threshold them to binary
//! ([`dataset`]), take a truncated SVD of the human matrix ([`lowrank`]),
//! regress a machine-generated feature vector onto the singular structure to
//! complete a new concept ([`completion`]), score human/machine agreement
//! with signal-detection `d'` ([`metrics`]), and orchestrate leave-one-out
//! and holdout-sweep evaluations ([`experiments`]). Machine vectors come from
//! a live text-generation endpoint, a persistent response cache, or a
//! synthetic noisy oracle ([`oracle`]).
//!
//! Numerical routines are generic over the scalar type via [`scalar::Real`];
//! the aliases below pin the common double-precision instantiations.

pub mod completion;
pub mod dataset;
pub mod experiments;
pub mod lowrank;
pub mod metrics;
pub mod oracle;
pub mod scalar;

pub use scalar::Real;

/// Double-precision truncated SVD triplet.
pub type RankDecomposition64 = lowrank::RankDecomposition<f64>;
/// Double-precision regression predictors.
pub type DesignMatrix64 = completion::DesignMatrix<f64>;
/// Double-precision fitted concept embedding.
pub type ConceptEmbedding64 = completion::ConceptEmbedding<f64>;
/// Double-precision fit settings.
pub type FitConfig64 = completion::FitConfig<f64>;
/// Double-precision d' result.
pub type DPrimeResult64 = metrics::DPrimeResult<f64>;
