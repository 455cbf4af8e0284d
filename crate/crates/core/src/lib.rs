//! Clustering engine for multimodal attributed graphs.
//!
//! Node features from several modalities are projected into a shared space,
//! denoised by a dual graph filter that low-pass filters simultaneously over
//! the node graph and over a per-modality feature-affinity graph, and trained
//! with three contrastive objectives (across modalities, graph neighborhoods
//! and communities). K-Means over the filtered representation yields the
//! clusters.
//!
//! | module | contents |
//! |--------|----------|
//! | [`graph`], [`io`] | data model, normalized operators, file formats |
//! | [`filter`] | feature shift operators, dual filter, dense oracle, spectra |
//! | [`losses`] | contrastive objectives and their sampling |
//! | [`trainer`] | parameters, forward/backward pass, Adam, `fit` |
//! | [`kmeans`], [`metrics`] | clustering and its evaluation |
//! | [`diagnostics`] | distance correlation and outlier census |
//! | [`datagen`] | seeded synthetic benchmark generator |

pub mod datagen;
pub mod dense;
pub mod diagnostics;
pub mod error;
pub mod filter;
pub mod graph;
pub mod io;
pub mod kmeans;
pub mod losses;
pub mod metrics;
pub mod sparse;
pub mod trainer;

pub use error::{Error, Result};
