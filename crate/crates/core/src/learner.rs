//! Stochastic learner: a random walk over the hypothesis class.
//!
//! The learner starts at `h_1 ~ P0`. After each labeled example it keeps its
//! hypothesis if the hypothesis predicted the label correctly; otherwise it
//! redraws from the full posterior `P_t` (the current hypothesis included).
//! The marginal law of `h_t` is then exactly `P_{t-1}`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{predict, Example, Label, PosteriorTracker, TeachingProblem};
use crate::rng::{seeded, SimRng};
use crate::scalar::{sample_index, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState<T> {
    pub current_index: usize,
    pub tracker: PosteriorTracker<T>,
    pub step: usize,
}

impl<T: Scalar> LearnerState<T> {
    /// Draws `h_1` from the prior.
    pub fn init<R: Rng + ?Sized>(problem: &TeachingProblem<T>, rng: &mut R) -> Self {
        let current_index = sample_index(problem.prior(), rng.random::<f64>());
        Self {
            current_index,
            tracker: PosteriorTracker::new(problem),
            step: 0,
        }
    }

    /// Shows example `id` with its label.
    pub fn observe<R: Rng + ?Sized>(
        &self,
        problem: &TeachingProblem<T>,
        id: &str,
        rng: &mut R,
    ) -> Result<Self> {
        let idx = problem.index_of(id)?;
        self.observe_index(problem, idx, rng)
    }

    pub fn observe_index<R: Rng + ?Sized>(
        &self,
        problem: &TeachingProblem<T>,
        idx: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let tracker = self.tracker.observe_index(problem, idx)?;
        let current_index = if problem.inconsistent(self.current_index, idx) {
            sample_index(&tracker.normalized_posterior(), rng.random::<f64>())
        } else {
            self.current_index
        };
        Ok(Self {
            current_index,
            tracker,
            step: self.step + 1,
        })
    }

    pub fn predict(&self, problem: &TeachingProblem<T>, x: &Example<T>) -> Result<Label> {
        predict(&problem.hypotheses()[self.current_index], x)
    }
}

pub fn init_learner<T: Scalar>(problem: &TeachingProblem<T>, seed: u64) -> LearnerState<T> {
    LearnerState::init(problem, &mut seeded(seed))
}

pub fn learner_observe<T: Scalar, R: Rng + ?Sized>(
    state: &LearnerState<T>,
    problem: &TeachingProblem<T>,
    example_id: &str,
    rng: &mut R,
) -> Result<LearnerState<T>> {
    state.observe(problem, example_id, rng)
}

pub fn learner_predict<T: Scalar>(
    state: &LearnerState<T>,
    problem: &TeachingProblem<T>,
    x: &Example<T>,
) -> Result<Label> {
    state.predict(problem, x)
}

/// Diagnostics of one learner run over a teaching sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutTrace<T> {
    /// `h_1 .. h_{T+1}`.
    pub hypothesis_path: Vec<usize>,
    /// 1-based steps at which the learner redrew its hypothesis.
    pub switch_steps: Vec<usize>,
    /// Test-set error of the final hypothesis, if the problem has a test set.
    pub final_test_error: Option<T>,
}

impl<T> RolloutTrace<T> {
    pub fn final_hypothesis(&self) -> usize {
        *self.hypothesis_path.last().expect("path is never empty")
    }
}

/// Resolves ids to indices, rejecting unknown or repeated ids.
pub fn resolve_sequence<T: Scalar>(
    problem: &TeachingProblem<T>,
    ids: &[String],
) -> Result<Vec<usize>> {
    let mut seen = vec![false; problem.n_examples()];
    ids.iter()
        .map(|id| {
            let idx = problem.index_of(id)?;
            if std::mem::replace(&mut seen[idx], true) {
                return Err(Error::DuplicateExample(id.clone()));
            }
            Ok(idx)
        })
        .collect()
}

/// Runs one learner over `sequence`. The hypothesis is frozen for the test
/// phase: no labels are revealed there, so nothing updates.
pub fn rollout<T: Scalar>(
    problem: &TeachingProblem<T>,
    sequence: &[String],
    seed: u64,
) -> Result<RolloutTrace<T>> {
    let indices = resolve_sequence(problem, sequence)?;
    let mut rng = seeded(seed);
    let mut state = LearnerState::init(problem, &mut rng);
    let mut path = vec![state.current_index];
    let mut switches = Vec::new();
    for (t, &idx) in indices.iter().enumerate() {
        let switched = problem.inconsistent(state.current_index, idx);
        state = state.observe_index(problem, idx, &mut rng)?;
        if switched {
            switches.push(t + 1);
        }
        path.push(state.current_index);
    }
    Ok(RolloutTrace {
        final_test_error: problem.test_error_of(state.current_index),
        hypothesis_path: path,
        switch_steps: switches,
    })
}

/// The posteriors `P_0 .. P_T` a learner resamples from along a fixed
/// sequence. They depend only on the sequence, so a population of learners
/// can share them.
#[derive(Debug, Clone)]
pub struct PosteriorPath<T> {
    indices: Vec<usize>,
    posteriors: Vec<Vec<T>>,
}

impl<T: Scalar> PosteriorPath<T> {
    pub fn new(problem: &TeachingProblem<T>, indices: &[usize]) -> Result<Self> {
        let mut tracker = PosteriorTracker::new(problem);
        let mut posteriors = Vec::with_capacity(indices.len() + 1);
        posteriors.push(tracker.normalized_posterior());
        for &idx in indices {
            tracker.observe_in_place(problem, idx)?;
            posteriors.push(tracker.normalized_posterior());
        }
        Ok(Self {
            indices: indices.to_vec(),
            posteriors,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// `P_t`, the posterior after the first `t` examples.
    pub fn posterior(&self, t: usize) -> &[T] {
        &self.posteriors[t]
    }

    /// Hypothesis index after the first `steps` examples, consuming `rng`
    /// exactly like [`LearnerState`] does.
    pub fn walk<R: Rng + ?Sized>(
        &self,
        problem: &TeachingProblem<T>,
        steps: usize,
        rng: &mut R,
    ) -> usize {
        let mut current = sample_index(&self.posteriors[0], rng.random::<f64>());
        for (t, &idx) in self.indices[..steps].iter().enumerate() {
            if problem.inconsistent(current, idx) {
                current = sample_index(&self.posteriors[t + 1], rng.random::<f64>());
            }
        }
        current
    }
}

/// A freshly seeded rng for learner `seed`; shared with the population code.
pub fn learner_rng(seed: u64) -> SimRng {
    seeded(seed)
}
