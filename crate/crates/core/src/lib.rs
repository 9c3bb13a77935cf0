//! Label integration and noisy-label learning from crowdsourced annotations.
//!
//! The crate implements the Dawid–Skene family of annotator models and the
//! estimators built around them:
//!
//! * [`voting`]: majority and weighted-majority voting
//! * [`ds_em`]: maximum-likelihood EM with general, one-coin and
//!   confusion-vector confusions
//! * [`spectral`]: binary one-coin estimation from the leading eigenvector
//! * [`moments`]: pairwise and third-order moment estimators (SPA, KL
//!   factorization, coupled tensor decomposition)
//! * [`seqhmm`]: sequentially dependent labels via an HMM
//! * [`groups`]: correlated annotator groups and spammer scoring
//! * [`e2e_ccem`]: end-to-end classifier training with confusion layers
//! * [`simgen`], [`evalkit`], [`io`]: data generation, metrics and file formats
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the scalar to `f64`.

// `!(x > 0)` style checks are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod domain;
pub mod ds_em;
pub mod e2e_ccem;
pub mod error;
pub mod evalkit;
pub mod groups;
pub mod io;
pub mod linalg;
pub mod moments;
pub mod scalar;
pub mod seqhmm;
pub mod simgen;
pub mod simplex;
pub mod spectral;
pub mod voting;

pub use align::{align_diag_dominant, align_permutation, align_to_reference, AlignMode};
pub use domain::{AnnotationSet, ConfusionMatrix, DsParams, LabelPosterior, Permutation, Prior, Record};
pub use ds_em::{e_step, fit_em, log_likelihood, m_step, map_decode, EmConfig, EmInit, EmResult, EmVariant};
pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ConfusionMatrix64 = ConfusionMatrix<f64>;
pub type Prior64 = Prior<f64>;
pub type DsParams64 = DsParams<f64>;
pub type LabelPosterior64 = LabelPosterior<f64>;
pub type EmConfig64 = EmConfig<f64>;
pub type EmResult64 = EmResult<f64>;
pub type HmmParams64 = seqhmm::HmmParams<f64>;
pub type GroupModel64 = groups::GroupModel<f64>;
pub type CcemModel64 = e2e_ccem::CcemModel<f64>;
pub type FeatureSet64 = e2e_ccem::FeatureSet<f64>;
pub type GenSpec64 = simgen::GenSpec<f64>;
