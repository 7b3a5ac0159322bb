//! Convolutional simultaneous sparse approximation (CSSA).
//!
//! ADMM solvers for convolutional sparse coding of several signals with
//! coupled supports, batch convolutional dictionary learning for one or more
//! modalities, NIR/visible and multifocus image fusion built on them, and the
//! objective metrics used to score fused images.

pub mod cdl;
pub mod dictionary;
pub mod error;
pub mod fusion;
pub mod metrics;
pub mod prox;
pub mod solver;
pub mod spectral;

pub use cdl::{learn, CdlOptions, Learned, Learner, TrainingBatch};
pub use dictionary::{Dictionary, DictionarySet};
pub use error::{CssaError, Result};
pub use fusion::{RgbImage, YcbcrImage};
pub use metrics::MetricReport;
pub use solver::{
    encode, CoefficientSet, EncodeDiagnostics, Encoder, Encoding, Regularizer, SolverOptions,
    Structure,
};
pub use spectral::{Filter, Plane, Spectrum};
