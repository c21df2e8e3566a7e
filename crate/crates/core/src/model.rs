//! Domain types and the elementary quantities of the learner model.
//!
//! A learner holds a belief over a finite class of linear hypotheses. After
//! seeing a labeled example, every hypothesis that mislabels it is
//! down-weighted by the logistic likelihood of the true label:
//!
//! ```text
//! P(y | h, x) = 1 / (1 + exp(-alpha * h(x) * y))
//! Q(h | A)    = P0(h) * prod_{x in A, sgn h(x) != y(x)} P(y(x) | h, x)
//! P(h | A)    = Q(h | A) / Z(A)
//! ```
//!
//! Weights are stored in the log domain so that very confident learners
//! (alpha around 1e6, the noise-free limit) do not underflow.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::{softplus, stable_sum, Scalar};

/// Tolerance for a prior to count as a probability vector.
pub const PROB_TOLERANCE: f64 = 1e-12;

/// A binary label. `sgn(0)` maps to [`Label::Positive`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn from_score<T: Scalar>(score: T) -> Self {
        if score >= T::zero() {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn value(self) -> i8 {
        match self {
            Label::Negative => -1,
            Label::Positive => 1,
        }
    }

    pub fn sign<T: Scalar>(self) -> T {
        match self {
            Label::Negative => -T::one(),
            Label::Positive => T::one(),
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Label::Negative => Label::Positive,
            Label::Positive => Label::Negative,
        }
    }
}

impl TryFrom<i64> for Label {
    type Error = Error;

    fn try_from(v: i64) -> Result<Self> {
        match v {
            1 => Ok(Label::Positive),
            -1 => Ok(Label::Negative),
            other => Err(Error::validation(format!(
                "label must be +1 or -1, got {other}"
            ))),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}", self.value())
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i8(self.value())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        Label::try_from(v).map_err(serde::de::Error::custom)
    }
}

/// A teachable item.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<T> {
    pub id: String,
    pub features: Vec<T>,
    pub label: Label,
    /// Display asset for human learners (URL or path), opaque to the model.
    pub asset: Option<String>,
}

impl<T: Scalar> Example<T> {
    pub fn new(id: impl Into<String>, features: Vec<T>, label: Label) -> Self {
        Self {
            id: id.into(),
            features,
            label,
            asset: None,
        }
    }

    pub fn with_asset(mut self, asset: impl Into<String>) -> Self {
        self.asset = Some(asset.into());
        self
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

/// Linear scoring function `w . x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis<T> {
    pub weights: Vec<T>,
    pub offset: T,
}

impl<T: Scalar> Hypothesis<T> {
    pub fn new(weights: Vec<T>, offset: T) -> Self {
        Self { weights, offset }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, features: &[T]) -> Result<T> {
        if features.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                got: features.len(),
            });
        }
        Ok(self.score_unchecked(features))
    }

    pub(crate) fn score_unchecked(&self, features: &[T]) -> T {
        self.weights
            .iter()
            .zip(features)
            .fold(self.offset, |acc, (w, x)| acc + *w * *x)
    }

    /// The same line with the opposite orientation.
    pub fn negated(&self) -> Self {
        Self {
            weights: self.weights.iter().map(|w| -*w).collect(),
            offset: -self.offset,
        }
    }
}

/// Label `h` assigns to `x`: `+1` when `h(x) >= 0`, else `-1`.
pub fn predict<T: Scalar>(h: &Hypothesis<T>, x: &Example<T>) -> Result<Label> {
    h.score(&x.features).map(Label::from_score)
}

/// `ln P(y | h, x)` for a given score `h(x)`.
pub fn log_likelihood_of_score<T: Scalar>(score: T, label: Label, alpha: T) -> T {
    -softplus(-alpha * score * label.sign::<T>())
}

/// Logistic likelihood `P(y | h, x) = 1 / (1 + exp(-alpha * h(x) * y))`.
pub fn likelihood<T: Scalar>(h: &Hypothesis<T>, x: &Example<T>, y: Label, alpha: T) -> Result<T> {
    if !(alpha > T::zero()) {
        return Err(Error::usage("alpha must be positive"));
    }
    let score = h.score(&x.features)?;
    Ok(log_likelihood_of_score(score, y, alpha).exp())
}

/// Fraction of `examples` whose ground-truth label `h` gets wrong.
pub fn label_error<T: Scalar>(h: &Hypothesis<T>, examples: &[Example<T>]) -> Result<T> {
    if examples.is_empty() {
        return Err(Error::usage(
            "cannot compute an error rate over an empty set",
        ));
    }
    let mut wrong = 0usize;
    for x in examples {
        if predict(h, x)? != x.label {
            wrong += 1;
        }
    }
    Ok(ratio(wrong, examples.len()))
}

fn ratio<T: Scalar>(num: usize, den: usize) -> T {
    T::from_usize(num).unwrap() / T::from_usize(den).unwrap()
}

/// Hypotheses with prior weights and the index of the target.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisClass<T> {
    hypotheses: Vec<Hypothesis<T>>,
    prior: Vec<T>,
    target_index: usize,
}

impl<T: Scalar> HypothesisClass<T> {
    pub fn new(hypotheses: Vec<Hypothesis<T>>, prior: Vec<T>, target_index: usize) -> Result<Self> {
        if hypotheses.is_empty() {
            return Err(Error::validation("hypothesis class is empty"));
        }
        if prior.len() != hypotheses.len() {
            return Err(Error::validation(format!(
                "prior has {} entries for {} hypotheses",
                prior.len(),
                hypotheses.len()
            )));
        }
        if target_index >= hypotheses.len() {
            return Err(Error::validation(format!(
                "target_index {target_index} out of range for {} hypotheses",
                hypotheses.len()
            )));
        }
        let dim = hypotheses[0].dim();
        for (i, h) in hypotheses.iter().enumerate() {
            if h.dim() != dim {
                return Err(Error::validation(format!(
                    "hypothesis {i} has dimension {}, expected {dim}",
                    h.dim()
                )));
            }
            if !h.offset.is_finite() || h.weights.iter().any(|w| !w.is_finite()) {
                return Err(Error::validation(format!(
                    "hypothesis {i} has a non-finite entry"
                )));
            }
        }
        if let Some(i) = prior.iter().position(|p| !p.is_finite() || *p < T::zero()) {
            return Err(Error::validation(format!(
                "prior entry {i} is negative or non-finite"
            )));
        }
        let total = stable_sum(prior.iter().copied()).to_f64_lossy();
        let tol = PROB_TOLERANCE.max(prior.len() as f64 * T::epsilon().to_f64_lossy());
        if (total - 1.0).abs() > tol {
            return Err(Error::validation(format!(
                "prior sums to {total}, expected 1"
            )));
        }
        if !(prior[target_index] > T::zero()) {
            return Err(Error::validation(
                "prior mass of the target hypothesis must be positive",
            ));
        }
        Ok(Self {
            hypotheses,
            prior,
            target_index,
        })
    }

    /// Uniform prior over `hypotheses`.
    pub fn uniform(hypotheses: Vec<Hypothesis<T>>, target_index: usize) -> Result<Self> {
        let n = hypotheses.len().max(1);
        let p = T::one() / T::from_usize(n).unwrap();
        Self::new(hypotheses, vec![p; n], target_index)
    }

    pub fn hypotheses(&self) -> &[Hypothesis<T>] {
        &self.hypotheses
    }

    pub fn prior(&self) -> &[T] {
        &self.prior
    }

    pub fn target_index(&self) -> usize {
        self.target_index
    }

    pub fn target(&self) -> &Hypothesis<T> {
        &self.hypotheses[self.target_index]
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.hypotheses[0].dim()
    }
}

/// A realizable teaching instance: pool `X`, hypothesis class with prior and
/// target, and the learner confidence `alpha`.
///
/// Scores `h(x)` for every pair and `err(h, h*)` for every hypothesis are
/// computed once at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TeachingProblem<T> {
    teaching_set: Vec<Example<T>>,
    hypothesis_class: HypothesisClass<T>,
    alpha: T,
    test_set: Option<Vec<Example<T>>>,
    index: HashMap<String, usize>,
    // scores[h][x]
    scores: Vec<Vec<T>>,
    errors: Vec<T>,
}

fn check_examples<T: Scalar>(examples: &[Example<T>], dim: usize, what: &str) -> Result<()> {
    for x in examples {
        if x.dim() != dim {
            return Err(Error::validation(format!(
                "{what} example `{}` has dimension {}, expected {dim}",
                x.id,
                x.dim()
            )));
        }
        if x.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "{what} example `{}` has a non-finite feature",
                x.id
            )));
        }
    }
    Ok(())
}

impl<T: Scalar> TeachingProblem<T> {
    pub fn new(
        teaching_set: Vec<Example<T>>,
        hypothesis_class: HypothesisClass<T>,
        alpha: T,
        test_set: Option<Vec<Example<T>>>,
    ) -> Result<Self> {
        if !(alpha > T::zero()) || !alpha.is_finite() {
            return Err(Error::validation("alpha must be a positive finite number"));
        }
        if teaching_set.is_empty() {
            return Err(Error::validation("teaching set is empty"));
        }
        let dim = hypothesis_class.dim();
        check_examples(&teaching_set, dim, "teaching")?;
        if let Some(test) = &test_set {
            check_examples(test, dim, "test")?;
        }

        let mut index = HashMap::with_capacity(teaching_set.len());
        for (i, x) in teaching_set.iter().enumerate() {
            if index.insert(x.id.clone(), i).is_some() {
                return Err(Error::validation(format!(
                    "duplicate example id `{}`",
                    x.id
                )));
            }
        }

        let scores: Vec<Vec<T>> = hypothesis_class
            .hypotheses()
            .iter()
            .map(|h| {
                teaching_set
                    .iter()
                    .map(|x| h.score_unchecked(&x.features))
                    .collect()
            })
            .collect();

        let target = hypothesis_class.target_index();
        for (j, x) in teaching_set.iter().enumerate() {
            let predicted = Label::from_score(scores[target][j]);
            if predicted != x.label {
                return Err(Error::NotRealizable {
                    id: x.id.clone(),
                    label: x.label.value(),
                    predicted: predicted.value(),
                });
            }
        }

        let n = teaching_set.len();
        let errors = scores
            .iter()
            .map(|row| {
                let disagree = row
                    .iter()
                    .zip(&scores[target])
                    .filter(|(s, t)| Label::from_score(**s) != Label::from_score(**t))
                    .count();
                ratio(disagree, n)
            })
            .collect();

        Ok(Self {
            teaching_set,
            hypothesis_class,
            alpha,
            test_set,
            index,
            scores,
            errors,
        })
    }

    /// Same instance, different learner confidence.
    pub fn with_alpha(&self, alpha: T) -> Result<Self> {
        if !(alpha > T::zero()) || !alpha.is_finite() {
            return Err(Error::validation("alpha must be a positive finite number"));
        }
        let mut p = self.clone();
        p.alpha = alpha;
        Ok(p)
    }

    pub fn teaching_set(&self) -> &[Example<T>] {
        &self.teaching_set
    }

    pub fn test_set(&self) -> Option<&[Example<T>]> {
        self.test_set.as_deref()
    }

    pub fn hypothesis_class(&self) -> &HypothesisClass<T> {
        &self.hypothesis_class
    }

    pub fn hypotheses(&self) -> &[Hypothesis<T>] {
        self.hypothesis_class.hypotheses()
    }

    pub fn prior(&self) -> &[T] {
        self.hypothesis_class.prior()
    }

    pub fn target_index(&self) -> usize {
        self.hypothesis_class.target_index()
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.hypothesis_class.dim()
    }

    pub fn n_examples(&self) -> usize {
        self.teaching_set.len()
    }

    pub fn n_hypotheses(&self) -> usize {
        self.hypothesis_class.len()
    }

    pub fn example(&self, idx: usize) -> &Example<T> {
        &self.teaching_set[idx]
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownExample(id.to_string()))
    }

    /// `h(x)` for hypothesis `h` and teaching example `x` (by index).
    pub fn score(&self, h: usize, x: usize) -> T {
        self.scores[h][x]
    }

    pub fn prediction(&self, h: usize, x: usize) -> Label {
        Label::from_score(self.scores[h][x])
    }

    /// Whether `h` mislabels teaching example `x`.
    pub fn inconsistent(&self, h: usize, x: usize) -> bool {
        self.prediction(h, x) != self.teaching_set[x].label
    }

    /// `ln P(y(x) | h, x)` under confidence `alpha`.
    pub fn log_likelihood(&self, h: usize, x: usize, alpha: T) -> T {
        log_likelihood_of_score(self.scores[h][x], self.teaching_set[x].label, alpha)
    }

    /// `err(h, h*)` over the teaching set, by hypothesis index.
    pub fn error_of(&self, h: usize) -> T {
        self.errors[h]
    }

    pub fn errors(&self) -> &[T] {
        &self.errors
    }

    /// `E = sum_h P0(h) err(h, h*)`, the learner's error before teaching.
    pub fn prior_expected_error(&self) -> T {
        stable_sum(self.prior().iter().zip(&self.errors).map(|(p, e)| *p * *e))
    }

    /// Error of `h` on the held-out test set against ground-truth labels.
    pub fn test_error_of(&self, h: usize) -> Option<T> {
        let test = self.test_set.as_deref()?;
        if test.is_empty() {
            return None;
        }
        label_error(&self.hypotheses()[h], test).ok()
    }
}

/// `err(h, h*)`: fraction of the teaching set on which `h` and the target
/// disagree.
pub fn error_rate<T: Scalar>(h: &Hypothesis<T>, problem: &TeachingProblem<T>) -> Result<T> {
    let target = problem.hypothesis_class().target();
    let xs = problem.teaching_set();
    if xs.is_empty() {
        return Err(Error::usage("teaching set is empty"));
    }
    let mut disagree = 0;
    for x in xs {
        if predict(h, x)? != predict(target, x)? {
            disagree += 1;
        }
    }
    Ok(ratio(disagree, xs.len()))
}

/// Binary entropy in bits.
pub fn binary_entropy<T: Scalar>(p: T) -> T {
    let p = p.max(T::zero()).min(T::one());
    let term = |q: T| {
        if q > T::zero() {
            -q * q.log2()
        } else {
            T::zero()
        }
    };
    term(p) + term(T::one() - p)
}

/// The learner's unnormalized posterior `Q(h | A)`, kept as log weights.
///
/// Updating returns a new tracker; the old state stays valid.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTracker<T> {
    log_weights: Vec<T>,
    alpha: T,
    target_index: usize,
    shown: Vec<usize>,
    shown_mask: Vec<bool>,
}

impl<T: Scalar> PosteriorTracker<T> {
    /// Tracker at `A = {}` using the problem's learner confidence.
    pub fn new(problem: &TeachingProblem<T>) -> Self {
        Self::with_alpha(problem, problem.alpha())
    }

    /// Tracker at `A = {}` with an explicit confidence (a teacher may assume
    /// a different `alpha` than the learner has).
    pub fn with_alpha(problem: &TeachingProblem<T>, alpha: T) -> Self {
        Self {
            log_weights: problem.prior().iter().map(|p| p.ln()).collect(),
            alpha,
            target_index: problem.target_index(),
            shown: Vec::new(),
            shown_mask: vec![false; problem.n_examples()],
        }
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn log_weights(&self) -> &[T] {
        &self.log_weights
    }

    /// Indices of the examples shown so far, in order.
    pub fn shown(&self) -> &[usize] {
        &self.shown
    }

    pub fn shown_ids<'a>(
        &'a self,
        problem: &'a TeachingProblem<T>,
    ) -> impl Iterator<Item = &'a str> + 'a {
        self.shown
            .iter()
            .map(move |&i| problem.example(i).id.as_str())
    }

    pub fn is_shown(&self, idx: usize) -> bool {
        self.shown_mask.get(idx).copied().unwrap_or(false)
    }

    /// `Q(h | A)`.
    pub fn unnormalized(&self) -> Vec<T> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    /// `Z(A) = sum_h Q(h | A)`.
    pub fn normalization(&self) -> T {
        stable_sum(self.log_weights.iter().map(|w| w.exp()))
    }

    /// Adds example `id` to `A`.
    pub fn observe(&self, problem: &TeachingProblem<T>, id: &str) -> Result<Self> {
        let idx = problem.index_of(id)?;
        self.observe_index(problem, idx)
    }

    pub fn observe_index(&self, problem: &TeachingProblem<T>, idx: usize) -> Result<Self> {
        let mut next = self.clone();
        next.observe_in_place(problem, idx)?;
        Ok(next)
    }

    pub(crate) fn observe_in_place(
        &mut self,
        problem: &TeachingProblem<T>,
        idx: usize,
    ) -> Result<()> {
        if idx >= problem.n_examples() {
            return Err(Error::usage(format!("example index {idx} out of range")));
        }
        if self.shown_mask[idx] {
            return Err(Error::DuplicateExample(problem.example(idx).id.clone()));
        }
        for (h, w) in self.log_weights.iter_mut().enumerate() {
            if problem.inconsistent(h, idx) {
                *w = *w + problem.log_likelihood(h, idx, self.alpha);
            }
        }
        self.shown_mask[idx] = true;
        self.shown.push(idx);
        Ok(())
    }

    /// `P(h | A)`, normalized with a max-shift so that it sums to one even
    /// when every `Q(h | A)` is tiny.
    pub fn normalized_posterior(&self) -> Vec<T> {
        let max = self
            .log_weights
            .iter()
            .copied()
            .fold(T::neg_infinity(), T::max);
        let shifted: Vec<T> = self.log_weights.iter().map(|w| (*w - max).exp()).collect();
        let z = stable_sum(shifted.iter().copied());
        shifted.into_iter().map(|q| q / z).collect()
    }

    /// `E[err_L | A] = sum_h P(h | A) err(h, h*)`.
    pub fn expected_error(&self, problem: &TeachingProblem<T>) -> T {
        stable_sum(
            self.normalized_posterior()
                .into_iter()
                .zip(problem.errors())
                .map(|(p, e)| p * *e),
        )
    }

    /// Posterior probability that the learner labels `x` positive.
    pub fn positive_mass(&self, problem: &TeachingProblem<T>, x: &Example<T>) -> Result<T> {
        let post = self.normalized_posterior();
        let mut mass = Vec::with_capacity(post.len());
        for (h, p) in problem.hypotheses().iter().zip(post) {
            if predict(h, x)? == Label::Positive {
                mass.push(p);
            }
        }
        Ok(stable_sum(mass))
    }

    /// Label entropy (bits) of `x` under the current posterior.
    pub fn difficulty(&self, problem: &TeachingProblem<T>, x: &Example<T>) -> Result<T> {
        self.positive_mass(problem, x).map(binary_entropy)
    }

    /// [`Self::difficulty`] for a teaching-set example, using cached scores.
    pub fn difficulty_of(&self, problem: &TeachingProblem<T>, idx: usize) -> T {
        let post = self.normalized_posterior();
        let p = stable_sum(
            post.into_iter()
                .enumerate()
                .filter(|(h, _)| problem.prediction(*h, idx) == Label::Positive)
                .map(|(_, p)| p),
        );
        binary_entropy(p)
    }

    pub fn target_index(&self) -> usize {
        self.target_index
    }
}

/// Free-function form of [`PosteriorTracker::observe`].
pub fn update_tracker<T: Scalar>(
    tracker: &PosteriorTracker<T>,
    problem: &TeachingProblem<T>,
    example_id: &str,
) -> Result<PosteriorTracker<T>> {
    tracker.observe(problem, example_id)
}

pub fn normalized_posterior<T: Scalar>(tracker: &PosteriorTracker<T>) -> Vec<T> {
    tracker.normalized_posterior()
}

pub fn expected_error<T: Scalar>(tracker: &PosteriorTracker<T>, problem: &TeachingProblem<T>) -> T {
    tracker.expected_error(problem)
}

pub fn difficulty<T: Scalar>(
    tracker: &PosteriorTracker<T>,
    problem: &TeachingProblem<T>,
    x: &Example<T>,
) -> Result<T> {
    tracker.difficulty(problem, x)
}
