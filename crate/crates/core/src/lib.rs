//! Machine teaching for crowd annotators.
//!
//! A learner keeps a stochastic belief over a finite class of linear
//! hypotheses and updates it with a logistic likelihood after every labeled
//! example. The teacher chooses which examples to show:
//!
//! * [`strict_teach`] greedily maximizes a submodular surrogate of the
//!   learner's error reduction and stops once the expected error is
//!   certified below a tolerance;
//! * [`setcover_teach`] and [`random_teach`] are the noise-free coverage and
//!   uniform baselines;
//! * [`rgtp::rgtp_teach`] is a relaxed-greedy policy for linear classes with
//!   a high-probability guarantee.
//!
//! [`harness`] runs populations of simulated learners against a sequence.
//!
//! The model is generic over [`Scalar`] (`f32` or `f64`). Data generation,
//! file I/O and the experiment harness work in `f64`; the aliases below name
//! the common `f64` instantiations.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod error;
pub mod harness;
pub mod io;
pub mod learner;
pub mod model;
pub mod rgtp;
pub mod rng;
mod scalar;
pub mod teach;

pub use error::{Error, Result};
pub use learner::{
    init_learner, learner_observe, learner_predict, rollout, LearnerState, PosteriorPath,
    RolloutTrace,
};
pub use model::{
    binary_entropy, difficulty, error_rate, expected_error, likelihood, normalized_posterior,
    predict, update_tracker, Example, Hypothesis, HypothesisClass, Label, PosteriorTracker,
    TeachingProblem,
};
pub use scalar::Scalar;
pub use teach::{
    error_certificate, random_teach, setcover_teach, strict_teach, surrogate_f, ErrorCertificate,
    PolicyKind, Status, StepDiagnostics, Surrogate, TeachConfig, TeachingSequence,
};

pub type Problem = TeachingProblem<f64>;
pub type Tracker = PosteriorTracker<f64>;
pub type Sequence = TeachingSequence<f64>;
pub type Learner = LearnerState<f64>;
pub type Config = TeachConfig<f64>;
