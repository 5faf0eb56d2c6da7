//! Kinship verification from parent/child face image pairs.
//!
//! Pipeline: [`preprocess`] (resize, crop, single-scale Retinex, elliptical
//! mask) → [`gabor`] (Hist-Gabor feature tensors) → [`txqda`] (tensor
//! cross-view quadratic discriminant projection) → [`eval`] (cosine matching,
//! thresholding and k-fold cross-validation). [`dataset`] loads pair
//! manifests and generates synthetic families; [`experiment`] wires the
//! stages into the method × feature-count sweep driven by a [`config`] file.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gabor;
pub mod io;
pub mod par;
pub mod preprocess;
pub mod tensor;
pub mod txqda;

pub use error::{Error, ErrorClass, Result, StageContext};
