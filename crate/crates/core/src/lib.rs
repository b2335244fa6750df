//! Hybrid linear modeling (subspace clustering) with local best-fit flats.
//!
//! The building block is [`scale::select_neighborhood`], which grows a
//! neighborhood around a point and stops at the first local minimum of the
//! scale-invariant approximation error `beta2`. The flats fitted to those
//! neighborhoods feed two clustering algorithms:
//!
//! * [`lbf::lbf_cluster`] picks `K` of them greedily by minimizing an `l1`
//!   (or median) distance energy;
//! * [`slbf::slbf_cluster`] builds an affinity from point-to-local-flat
//!   distances and clusters it spectrally.
//!
//! Around them sit K-flats with adaptive initialization ([`kflats`]), the
//! SOD elbow rule for the number of flats ([`model_order`]), a synthetic data
//! generator ([`synth`]) and a Monte-Carlo harness for the scale-selection
//! guarantee on tube mixtures ([`theorem`]).
//!
//! All numeric code is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below name the common double-precision instantiations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod error;
pub mod geometry;
pub mod io;
pub mod kflats;
pub mod lbf;
pub mod model_order;
pub mod rng;
pub mod scalar;
pub mod scale;
pub mod slbf;
pub mod spectral;
pub mod synth;
pub mod theorem;

pub use clustering::{kmeans, match_labels, misclassification_rate, Labeling};
pub use error::{Error, Result};
pub use geometry::{dist_to_flat, fit_flat, nearest_flat, reduce_and_whiten, Flat, FlatFit, PointCloud};
pub use kflats::{farthest_insertion_init, kflats, InitStrategy, KFlatsConfig, KFlatsResult};
pub use lbf::{energy, generate_candidates, greedy_select, lbf_cluster, CandidateSet, Energy, LbfConfig, LbfResult};
pub use model_order::{estimate_k, wk_curve, HlmAlgorithm};
pub use scalar::Real;
pub use scale::{beta2, estimate_noise_epsilon, local_best_fit_flat, select_neighborhood, ScaleParams, ScaleProfile};
pub use slbf::{build_similarity, local_flats_all, segmentation_error, slbf_cluster, SimilarityBundle, SlbfConfig, SlbfResult};
pub use spectral::spectral_embed;
pub use synth::{generate_hybrid, sample_tube_mixture, SynthSpec, TubeMixture};
pub use theorem::{beta2_continuous, condition_check, verify_theorem, TheoremReport};

pub type PointCloud64 = PointCloud<f64>;
pub type PointCloud32 = PointCloud<f32>;
pub type Flat64 = Flat<f64>;
pub type Flat32 = Flat<f32>;
pub type FlatFit64 = FlatFit<f64>;
pub type LbfResult64 = LbfResult<f64>;
pub type SlbfResult64 = SlbfResult<f64>;
pub type KFlatsResult64 = KFlatsResult<f64>;
pub type TubeMixture64 = TubeMixture<f64>;
