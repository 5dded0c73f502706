//! Markov-switching Hawkes processes observed as binned counts.
//!
//! A hidden continuous-time Markov chain `Z` switches the baseline rate of a
//! Hawkes process with exponential kernel. Binning the events on a grid of
//! width `Delta` gives counts
//!
//! ```text
//! Y_k | Z, Y_{<k} ~ Poisson(mu[Z_k] + U_k),   U_k = alpha Y_{k-1} + beta U_{k-1},   U_0 = 0
//! ```
//!
//! which this crate simulates, fits by EM, decodes and compares against
//! simpler models.
//!
//! ```
//! use swhawkes::{discretize, fit_em, sample_switching_hawkes, default_design, EMConfig};
//!
//! let design = default_design(2).unwrap();
//! let sim = sample_switching_hawkes(&design, 1.0, 7).unwrap();
//! let y = discretize(&sim.events, 2.0).unwrap();
//! let fit = fit_em(&y, 2, &EMConfig::default()).unwrap();
//! assert_eq!(fit.theta_hat.n_states(), 2);
//! ```

pub mod error;
pub mod inference;
pub mod model;
pub mod poisson;
pub mod rng;
pub mod select;
pub mod series;
pub mod simulate;
pub mod study;

pub use error::{Error, Result};
pub use inference::{fit_em, fit_em_from, log_likelihood, EMConfig, FitReport};
pub use model::{cont_to_disc, disc_to_cont, discretize_params, ContinuousParams, DiscreteParams};
pub use select::{aic, aligned_accuracy, map_decode, select_q, viterbi, ModelKind, SelectionResult};
pub use series::{auxiliary_path, BinnedSeries, EventSequence};
pub use simulate::{bin_state_majority, discretize, sample_ctmc, sample_discrete, sample_switching_hawkes, SimOutput};
pub use study::{compare_models, default_design, run_study, summarize, StudyConfig, StudyRow};

/// The README and the guide chapters, compiled as doc-tests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/conversions.md")]
    mod conversions {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/inference.md")]
    mod inference {}
    #[doc = include_str!("../../../book/src/selection.md")]
    mod selection {}
    #[doc = include_str!("../../../book/src/study.md")]
    mod study {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
