//! Teaching policies: STRICT (greedy maximization of the surrogate `F`),
//! the noise-free SetCover baseline and uniformly random teaching.

mod objective;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use objective::{argmax_lowest, certificate_for};
pub use objective::{error_certificate, surrogate_f, ErrorCertificate, Surrogate};

use crate::error::{Error, Result};
use crate::model::{PosteriorTracker, TeachingProblem};
use crate::rng::seeded;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Strict,
    SetCover,
    Random,
    Rgtp,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [Self::Strict, Self::SetCover, Self::Random, Self::Rgtp];

    pub fn name(self) -> &'static str {
        match self {
            Self::Strict => "strict",
            Self::SetCover => "setcover",
            Self::Random => "random",
            Self::Rgtp => "rgtp",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                Error::usage(format!(
                    "unknown policy `{s}` (expected strict, setcover, random or rgtp)"
                ))
            })
    }
}

/// Why a teaching run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    /// The stopping rule certified the target error.
    ToleranceMet,
    /// The length cap (or the pool) ran out first.
    Exhausted,
    /// No remaining example can make progress.
    Unreachable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeachConfig<T> {
    /// Target expected learner error, in (0, 1).
    pub epsilon: T,
    pub max_len: Option<usize>,
    /// Learner confidence the teacher assumes.
    pub teacher_alpha: T,
}

impl<T: Scalar> TeachConfig<T> {
    pub fn new(epsilon: T, teacher_alpha: T) -> Self {
        Self {
            epsilon,
            max_len: None,
            teacher_alpha,
        }
    }

    pub fn with_max_len(mut self, max_len: usize) -> Self {
        self.max_len = Some(max_len);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > T::zero() && self.epsilon < T::one()) {
            return Err(Error::usage("epsilon must lie in (0, 1)"));
        }
        if !(self.teacher_alpha > T::zero()) || !self.teacher_alpha.is_finite() {
            return Err(Error::usage("teacher alpha must be positive and finite"));
        }
        if self.max_len == Some(0) {
            return Err(Error::usage("max length must be at least 1"));
        }
        Ok(())
    }
}

/// Diagnostics recorded after each pick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics<T> {
    /// `F(A)` including this pick.
    pub f_value: T,
    pub marginal_gain: T,
    /// Label entropy of the pick under the posterior just before it.
    pub difficulty: T,
    /// `(E - F(A)) / P0(h*)` including this pick.
    pub expected_error_upper_bound: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeachingSequence<T> {
    pub policy: PolicyKind,
    pub example_ids: Vec<String>,
    pub per_step: Vec<StepDiagnostics<T>>,
    pub status: Status,
}

impl<T: Scalar> TeachingSequence<T> {
    pub fn len(&self) -> usize {
        self.example_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.example_ids.is_empty()
    }

    pub fn truncated(&self, len: usize) -> Vec<String> {
        self.example_ids[..len.min(self.len())].to_vec()
    }
}

/// Diagnostics of an arbitrary pick order under confidence `alpha`.
pub fn annotate<T: Scalar>(
    problem: &TeachingProblem<T>,
    alpha: T,
    picks: &[usize],
) -> Result<Vec<StepDiagnostics<T>>> {
    let surrogate = Surrogate::new(problem, alpha);
    let mut tracker = surrogate.tracker();
    let mut out = Vec::with_capacity(picks.len());
    for &x in picks {
        let difficulty = tracker.difficulty_of(problem, x);
        let marginal_gain = surrogate.gain(&tracker, x);
        tracker.observe_in_place(problem, x)?;
        let f_value = surrogate.value(&tracker);
        out.push(StepDiagnostics {
            f_value,
            marginal_gain,
            difficulty,
            expected_error_upper_bound: certificate_for(problem, f_value).upper,
        });
    }
    Ok(out)
}

fn ids_of<T: Scalar>(problem: &TeachingProblem<T>, picks: &[usize]) -> Vec<String> {
    picks
        .iter()
        .map(|&i| problem.example(i).id.clone())
        .collect()
}

/// Greedy maximization of `F` until `F(A) >= E - P0(h*) epsilon`.
///
/// Each step adds the unshown example with the largest marginal gain; ties
/// go to the lowest example index. When the run ends with
/// [`Status::ToleranceMet`], the learner's expected error under
/// `teacher_alpha` is at most `epsilon`.
pub fn strict_teach<T: Scalar>(
    problem: &TeachingProblem<T>,
    config: &TeachConfig<T>,
) -> Result<TeachingSequence<T>> {
    config.validate()?;
    let surrogate = Surrogate::new(problem, config.teacher_alpha);
    let threshold = surrogate.ceiling() - problem.prior()[problem.target_index()] * config.epsilon;

    let mut tracker = surrogate.tracker();
    let mut f = T::zero();
    let mut picks = Vec::new();
    let mut per_step = Vec::new();

    let status = loop {
        if f >= threshold {
            break Status::ToleranceMet;
        }
        if config.max_len.is_some_and(|m| picks.len() >= m) {
            break Status::Exhausted;
        }
        let Some((x, gain)) = argmax_lowest(&surrogate.gains(&tracker)) else {
            break Status::Unreachable;
        };
        if !(gain > T::zero()) {
            break Status::Unreachable;
        }
        let difficulty = tracker.difficulty_of(problem, x);
        tracker.observe_in_place(problem, x)?;
        f = surrogate.value(&tracker);
        picks.push(x);
        per_step.push(StepDiagnostics {
            f_value: f,
            marginal_gain: gain,
            difficulty,
            expected_error_upper_bound: certificate_for(problem, f).upper,
        });
    };

    Ok(TeachingSequence {
        policy: PolicyKind::Strict,
        example_ids: ids_of(problem, &picks),
        per_step,
        status,
    })
}

/// Noise-free greedy coverage: repeatedly pick the example that eliminates
/// the most `P0(h) err(h, h*)` mass among hypotheses no earlier pick has
/// eliminated. Returns the picks up to the point where every hypothesis
/// that disagrees with the target somewhere has been eliminated.
pub fn setcover_greedy_prefix<T: Scalar>(problem: &TeachingProblem<T>) -> Vec<usize> {
    let weights: Vec<T> = problem
        .prior()
        .iter()
        .zip(problem.errors())
        .map(|(p, e)| *p * *e)
        .collect();
    let mut alive: Vec<bool> = weights.iter().map(|w| *w > T::zero()).collect();
    let mut shown = vec![false; problem.n_examples()];
    let mut picks = Vec::new();
    loop {
        let coverage: Vec<Option<T>> = (0..problem.n_examples())
            .map(|x| {
                (!shown[x]).then(|| {
                    (0..problem.n_hypotheses())
                        .filter(|&h| alive[h] && problem.inconsistent(h, x))
                        .map(|h| weights[h])
                        .sum()
                })
            })
            .collect();
        match argmax_lowest(&coverage) {
            Some((x, c)) if c > T::zero() => {
                shown[x] = true;
                picks.push(x);
                for (h, a) in alive.iter_mut().enumerate() {
                    if problem.inconsistent(h, x) {
                        *a = false;
                    }
                }
            }
            _ => return picks,
        }
    }
}

/// SetCover baseline. After the greedy phase eliminates every
/// non-target-equivalent hypothesis, the remaining picks are uniform
/// without replacement.
pub fn setcover_teach<T: Scalar>(
    problem: &TeachingProblem<T>,
    max_len: usize,
    seed: u64,
) -> Result<TeachingSequence<T>> {
    if max_len == 0 {
        return Err(Error::usage("max length must be at least 1"));
    }
    let mut picks = setcover_greedy_prefix(problem);
    picks.truncate(max_len);
    if picks.len() < max_len {
        let mut rest: Vec<usize> = (0..problem.n_examples())
            .filter(|x| !picks.contains(x))
            .collect();
        rest.shuffle(&mut seeded(seed));
        picks.extend(rest.into_iter().take(max_len - picks.len()));
    }
    Ok(TeachingSequence {
        policy: PolicyKind::SetCover,
        example_ids: ids_of(problem, &picks),
        per_step: annotate(problem, problem.alpha(), &picks)?,
        status: Status::Exhausted,
    })
}

/// `max_len` examples drawn uniformly without replacement.
pub fn random_teach<T: Scalar>(
    problem: &TeachingProblem<T>,
    max_len: usize,
    seed: u64,
) -> Result<TeachingSequence<T>> {
    let n = problem.n_examples();
    if max_len > n {
        return Err(Error::usage(format!(
            "max length {max_len} exceeds the {n} available examples"
        )));
    }
    let mut all: Vec<usize> = (0..n).collect();
    let (picked, _) = all.partial_shuffle(&mut seeded(seed), max_len);
    let picks = picked.to_vec();
    Ok(TeachingSequence {
        policy: PolicyKind::Random,
        example_ids: ids_of(problem, &picks),
        per_step: annotate(problem, problem.alpha(), &picks)?,
        status: Status::Exhausted,
    })
}

/// Expected learner error after each prefix of `picks`, under `alpha`.
pub fn expected_error_curve<T: Scalar>(
    problem: &TeachingProblem<T>,
    alpha: T,
    picks: &[usize],
) -> Result<Vec<T>> {
    let mut tracker = PosteriorTracker::with_alpha(problem, alpha);
    let mut out = vec![tracker.expected_error(problem)];
    for &x in picks {
        tracker.observe_in_place(problem, x)?;
        out.push(tracker.expected_error(problem));
    }
    Ok(out)
}
