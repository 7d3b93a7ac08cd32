//! Binarized CP decomposition (B-CP) for knowledge graph completion.
//!
//! Entities and relations are embedded as CP factor rows. Binarized models
//! keep one sign bit per coordinate and score a triple with an XOR and a
//! popcount over packed 64-bit words.
//!
//! ```
//! use bcp_core::{binarize_factors, DenseFactors, DenseMatrix, Triple};
//!
//! let a = DenseMatrix::from_vec(1, 4, vec![0.3, -0.1, 0.7, 0.2]).unwrap();
//! let b = DenseMatrix::from_vec(1, 4, vec![0.1, 0.4, -0.2, 0.5]).unwrap();
//! let c = DenseMatrix::from_vec(2, 4, vec![0.2; 8]).unwrap();
//! let dense = DenseFactors::new(a, b, c).unwrap();
//! let packed = binarize_factors(&dense, 0.5).unwrap();
//! // signs of a∘b∘c: + - - +, so two agreeing bits out of four
//! assert_eq!(packed.score(Triple::new(0, 0, 0)).unwrap(), 0.0);
//! ```

pub mod dense;
pub mod error;
pub mod eval;
pub mod io;
pub mod kg;
pub mod packed;
pub mod quantize;
pub mod synthetic;
pub mod train;
pub mod vq;

pub use dense::{dot3, score_dense, DenseFactors, DenseMatrix};
pub use error::{Error, Result};
pub use eval::{
    classify, evaluate, evaluate_ensemble, filtered_rank, rank_triple, tune_threshold, Direction,
    Ensemble, EvalReport, Scorer, Threshold,
};
pub use io::{Model, ModelKind, SizeReport};
pub use kg::{KnowledgeGraph, RawTriple, Split, Triple, Vocab};
pub use packed::{binarize_factors, hamming_kernel, score_packed, BitMatrix, PackedFactors};
pub use quantize::quantize;
pub use train::{
    train, train_with, Hyperparams, Lambdas, Mode, TrainConfig, TrainLog, TrainOutcome,
};
pub use vq::{vq_quantize, VqFactors};
