use rayon::prelude::*;

use crate::error::Result;
use crate::model::{PosteriorTracker, TeachingProblem};
use crate::scalar::{stable_sum, Scalar};

/// Candidate evaluations per greedy step above which gains are computed in
/// parallel.
const PAR_THRESHOLD: usize = 1 << 14;

/// The surrogate objective
///
/// ```text
/// F(A) = sum_h (Q(h) - Q(h | A)) err(h, h*)
/// ```
///
/// with every per-pair quantity cached for a fixed confidence `alpha`.
/// `F` is monotone and submodular in `A`.
#[derive(Debug, Clone)]
pub struct Surrogate<'a, T> {
    problem: &'a TeachingProblem<T>,
    alpha: T,
    // drop[h][x] = 1 - P(y(x) | h, x) when h mislabels x, else 0
    drop: Vec<Vec<T>>,
    log_prior: Vec<T>,
}

impl<'a, T: Scalar> Surrogate<'a, T> {
    pub fn new(problem: &'a TeachingProblem<T>, alpha: T) -> Self {
        let drop = (0..problem.n_hypotheses())
            .map(|h| {
                (0..problem.n_examples())
                    .map(|x| {
                        if problem.inconsistent(h, x) {
                            -problem.log_likelihood(h, x, alpha).exp_m1()
                        } else {
                            T::zero()
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            problem,
            alpha,
            drop,
            log_prior: problem.prior().iter().map(|p| p.ln()).collect(),
        }
    }

    pub fn problem(&self) -> &'a TeachingProblem<T> {
        self.problem
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn tracker(&self) -> PosteriorTracker<T> {
        PosteriorTracker::with_alpha(self.problem, self.alpha)
    }

    /// `E = sum_h P0(h) err(h, h*)`, the supremum of `F`.
    pub fn ceiling(&self) -> T {
        self.problem.prior_expected_error()
    }

    /// `F(A)` for the set tracked by `tracker`.
    pub fn value(&self, tracker: &PosteriorTracker<T>) -> T {
        let prior = self.problem.prior();
        stable_sum(
            tracker
                .log_weights()
                .iter()
                .zip(&self.log_prior)
                .zip(prior)
                .zip(self.problem.errors())
                .map(|(((lw, lp), p0), err)| {
                    if *p0 > T::zero() {
                        // P0 - Q = -P0 * expm1(log penalty)
                        -*p0 * (*lw - *lp).exp_m1() * *err
                    } else {
                        T::zero()
                    }
                }),
        )
    }

    /// `F(A + {x}) - F(A)` for an example not in `A`.
    pub fn gain(&self, tracker: &PosteriorTracker<T>, x: usize) -> T {
        stable_sum(
            tracker
                .log_weights()
                .iter()
                .zip(&self.drop)
                .zip(self.problem.errors())
                .map(|((lw, drop), err)| {
                    let d = drop[x];
                    if d > T::zero() {
                        lw.exp() * d * *err
                    } else {
                        T::zero()
                    }
                }),
        )
    }

    /// Gains of every example not yet shown, in index order (`None` for
    /// shown ones).
    pub fn gains(&self, tracker: &PosteriorTracker<T>) -> Vec<Option<T>> {
        let n = self.problem.n_examples();
        let eval = |x: usize| (!tracker.is_shown(x)).then(|| self.gain(tracker, x));
        if n * self.problem.n_hypotheses() >= PAR_THRESHOLD {
            (0..n).into_par_iter().map(eval).collect()
        } else {
            (0..n).map(eval).collect()
        }
    }

    /// `F(A)` from scratch for a set of example indices.
    pub fn value_of(&self, set: &[usize]) -> Result<T> {
        let mut t = self.tracker();
        for &x in set {
            t.observe_in_place(self.problem, x)?;
        }
        Ok(self.value(&t))
    }
}

/// Index of the largest gain; ties go to the lowest index.
pub(crate) fn argmax_lowest<T: Scalar>(gains: &[Option<T>]) -> Option<(usize, T)> {
    let mut best: Option<(usize, T)> = None;
    for (i, g) in gains.iter().enumerate() {
        if let Some(g) = *g {
            match best {
                Some((_, b)) if g <= b => {}
                _ => best = Some((i, g)),
            }
        }
    }
    best
}

/// `F(A)` under the problem's own `alpha`, for a set of example ids.
pub fn surrogate_f<T: Scalar>(problem: &TeachingProblem<T>, ids: &[String]) -> Result<T> {
    let indices = crate::learner::resolve_sequence(problem, ids)?;
    Surrogate::new(problem, problem.alpha()).value_of(&indices)
}

/// Bracket on the learner's expected error after showing a set `A`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorCertificate<T> {
    /// `max(0, E - F(A))`: no set with a smaller `F` can do better.
    pub lower: T,
    /// `(E - F(A)) / P0(h*)`.
    pub upper: T,
}

pub fn error_certificate<T: Scalar>(
    problem: &TeachingProblem<T>,
    ids: &[String],
) -> Result<ErrorCertificate<T>> {
    let f = surrogate_f(problem, ids)?;
    Ok(certificate_for(problem, f))
}

pub(crate) fn certificate_for<T: Scalar>(
    problem: &TeachingProblem<T>,
    f: T,
) -> ErrorCertificate<T> {
    let slack = (problem.prior_expected_error() - f).max(T::zero());
    ErrorCertificate {
        lower: slack,
        upper: slack / problem.prior()[problem.target_index()],
    }
}
