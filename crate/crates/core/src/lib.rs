//! Node-variant graph filters (NVGFs) as linear, frequency-creating
//! replacements for pointwise activations in graph neural networks.
//!
//! The crate is organised around the objects of graph signal processing:
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`graph`] | graph matrix descriptions, eigendecomposition, normalization |
//! | [`filters`] | LSI and node-variant filters applied by shift recursion |
//! | [`spectral`] | graph Fourier transform, frequency responses, frequency creation |
//! | [`design`] | MSE-optimal unbiased node-variant approximations of nonlinearities |
//! | [`stability`] | Lipschitz constant and perturbation bound checks |
//! | [`nn`] | LSIGF, GCNN, Design NVGF and Learn NVGF architectures and training |
//! | [`ingest`] | word adjacency networks, rating similarity graphs, synthetic data |
//!
//! ```
//! use nalgebra::DVector;
//! use nvgf::{filters::{apply_nv, NvTaps, LsiTaps}, graph::GraphShift, spectral};
//!
//! let g = GraphShift::from_edges(3, &[(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0)], false)?;
//! let basis = g.eigendecompose()?;
//!
//! // The same taps at every node never create frequencies...
//! let lsi = NvTaps::embed_lsi(&LsiTaps::from_slice(&[0.5, 1.0])?, 3)?;
//! assert!(!spectral::creation_index(&spectral::nv_frequency_matrix(&lsi, &basis)?).creates);
//!
//! // ...but node-dependent taps do.
//! let nv = NvTaps::new(nalgebra::DMatrix::from_row_slice(3, 2, &[0.5, 1.0, 0.0, 1.0, 1.0, -1.0]))?;
//! assert!(spectral::creation_index(&spectral::nv_frequency_matrix(&nv, &basis)?).creates);
//! let y = apply_nv(&nv, &DVector::from_column_slice(&[1.0, 0.0, 0.0]), &g)?;
//! assert_eq!(y.len(), 3);
//! # Ok::<(), nvgf::Error>(())
//! ```

pub mod design;
pub mod error;
pub mod filters;
pub mod graph;
pub mod ingest;
pub mod nn;
pub mod spectral;
pub mod stability;

pub use error::{Error, Result};

/// Crate version, recorded in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
