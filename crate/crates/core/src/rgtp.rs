//! Relaxed-greedy teaching for linear hypothesis classes.
//!
//! The hypotheses cut the example pool into cells: maximal groups of
//! examples that every hypothesis labels identically. Cells are represented
//! by their realized sign signature over the class; two cells are neighbors
//! when their signatures differ in exactly one hypothesis.
//!
//! Each step the teacher looks for a neighboring pair on which its belief
//! `p` votes in opposite directions (`sum_h p(h) h(P) > 0 > sum_h p(h) h(P')`)
//! and shows a random example from one of them; otherwise it shows an
//! example from the most evenly split cell. The belief is then updated
//! conservatively, multiplying every inconsistent hypothesis by `w_o`.
//! The odds of error `eta = (1 - p(h*)) / p(h*)` shrink in expectation by
//! at least `(3 + w_o) / 4` per step.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{Label, TeachingProblem};
use crate::rng::seeded;
use crate::scalar::{stable_sum, Scalar};
use crate::teach::{annotate, PolicyKind, Status, TeachingSequence};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    /// Label every hypothesis assigns inside the cell, by hypothesis index.
    pub signature: Vec<Label>,
    /// Teaching-set indices, in pool order.
    pub members: Vec<usize>,
    pub member_ids: Vec<String>,
}

impl Cell {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `sum_h p(h) h(P)` with `h(P)` in {-1, +1}.
    pub fn vote<T: Scalar>(&self, belief: &[T]) -> T {
        stable_sum(
            self.signature
                .iter()
                .zip(belief)
                .map(|(s, p)| s.sign::<T>() * *p),
        )
    }

    /// Whether hypotheses with positive belief disagree on this cell.
    pub fn is_contested<T: Scalar>(&self, belief: &[T]) -> bool {
        let mut seen_pos = false;
        let mut seen_neg = false;
        for (s, p) in self.signature.iter().zip(belief) {
            if *p > T::zero() {
                match s {
                    Label::Positive => seen_pos = true,
                    Label::Negative => seen_neg = true,
                }
            }
        }
        seen_pos && seen_neg
    }
}

/// Partition of the teaching set by signature. Cells are ordered by their
/// first member.
pub fn build_cells<T: Scalar>(problem: &TeachingProblem<T>) -> Vec<Cell> {
    let mut by_signature: HashMap<Vec<Label>, usize> = HashMap::new();
    let mut cells: Vec<Cell> = Vec::new();
    for x in 0..problem.n_examples() {
        let signature: Vec<Label> = (0..problem.n_hypotheses())
            .map(|h| problem.prediction(h, x))
            .collect();
        let id = problem.example(x).id.clone();
        match by_signature.get(&signature) {
            Some(&c) => {
                cells[c].members.push(x);
                cells[c].member_ids.push(id);
            }
            None => {
                by_signature.insert(signature.clone(), cells.len());
                cells.push(Cell {
                    signature,
                    members: vec![x],
                    member_ids: vec![id],
                });
            }
        }
    }
    cells
}

/// Cells whose signatures differ in exactly one hypothesis.
pub fn neighbors(a: &Cell, b: &Cell) -> Result<bool> {
    if a.signature.len() != b.signature.len() {
        return Err(Error::usage("cells come from different hypothesis classes"));
    }
    let diff = a
        .signature
        .iter()
        .zip(&b.signature)
        .filter(|(x, y)| x != y)
        .count();
    if diff == 0 {
        return Err(Error::usage("neighbor test needs two distinct cells"));
    }
    Ok(diff == 1)
}

/// Smallest realized cell size. Cells of the arrangement that contain no
/// example are invisible here.
pub fn richness<T: Scalar>(problem: &TeachingProblem<T>) -> usize {
    build_cells(problem)
        .iter()
        .map(Cell::len)
        .min()
        .unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RgtpConfig<T> {
    /// Weight the teacher assumes the learner applies to inconsistent
    /// hypotheses, in (0, 1).
    pub w_o: T,
    /// Stop once `1 - p(h*) <= epsilon`.
    pub epsilon: T,
    pub max_len: usize,
}

impl<T: Scalar> RgtpConfig<T> {
    pub fn new(epsilon: T, max_len: usize) -> Self {
        Self {
            w_o: T::half(),
            epsilon,
            max_len,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w_o > T::zero() && self.w_o < T::one()) {
            return Err(Error::usage("w_o must lie in (0, 1)"));
        }
        if !(self.epsilon > T::zero() && self.epsilon < T::one()) {
            return Err(Error::usage("epsilon must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Which branch of the selection rule fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionCase {
    /// A neighboring pair with opposite votes; one of the two was drawn.
    Bipolar { positive: usize, negative: usize },
    /// The most balanced cell has a vote of exactly zero.
    Balanced { cell: usize },
    /// No bipolar pair and no zero-vote cell among the realized cells.
    Fallback { cell: usize },
}

impl SelectionCase {
    /// True when the step falls under the expected-decay argument.
    pub fn covered_by_bound(&self) -> bool {
        !matches!(self, SelectionCase::Fallback { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RgtpChoice<T> {
    pub example: usize,
    pub cell: usize,
    pub case: SelectionCase,
    /// `E[eta_{t+1} / eta_t]` over the random cell choice, given the belief.
    pub expected_eta_ratio: T,
}

/// `gamma = sum_h p(h) w_o^{[h mislabels the cell]}` for a cell.
fn gamma<T: Scalar>(cell: &Cell, belief: &[T], target: usize, w_o: T) -> T {
    let y = cell.signature[target];
    stable_sum(
        cell.signature
            .iter()
            .zip(belief)
            .map(|(s, p)| if *s == y { *p } else { *p * w_o }),
    )
}

fn eta_ratio<T: Scalar>(cell: &Cell, belief: &[T], target: usize, w_o: T) -> T {
    let p_star = belief[target];
    let rest = T::one() - p_star;
    if !(rest > T::zero()) {
        return T::zero();
    }
    (gamma(cell, belief, target, w_o) - p_star) / rest
}

/// One selection. `shown` marks examples that may not be picked again;
/// cells without unshown members are skipped.
pub fn rgtp_step<T: Scalar, R: Rng + ?Sized>(
    belief: &[T],
    problem: &TeachingProblem<T>,
    cells: &[Cell],
    shown: &[bool],
    w_o: T,
    rng: &mut R,
) -> Result<RgtpChoice<T>> {
    let target = problem.target_index();
    let open: Vec<usize> = (0..cells.len())
        .filter(|&c| cells[c].members.iter().any(|&x| !shown[x]))
        .collect();
    if !open.iter().any(|&c| cells[c].is_contested(belief)) {
        return Err(Error::NothingInformative);
    }
    let votes: Vec<T> = cells.iter().map(|c| c.vote(belief)).collect();

    let mut pair = None;
    'search: for (i, &a) in open.iter().enumerate() {
        for &b in &open[i + 1..] {
            let opposite = (votes[a] > T::zero() && votes[b] < T::zero())
                || (votes[a] < T::zero() && votes[b] > T::zero());
            if opposite && neighbors(&cells[a], &cells[b])? {
                pair = Some(if votes[a] > T::zero() { (a, b) } else { (b, a) });
                break 'search;
            }
        }
    }

    let (cell, case, expected_eta_ratio) = match pair {
        Some((pos, neg)) => {
            let cell = if rng.random_range(0..2) == 0 {
                pos
            } else {
                neg
            };
            let r = (eta_ratio(&cells[pos], belief, target, w_o)
                + eta_ratio(&cells[neg], belief, target, w_o))
                * T::half();
            (
                cell,
                SelectionCase::Bipolar {
                    positive: pos,
                    negative: neg,
                },
                r,
            )
        }
        None => {
            let mut best: Option<(usize, T)> = None;
            for &c in &open {
                if !cells[c].is_contested(belief) {
                    continue;
                }
                let v = votes[c].abs();
                if best.is_none_or(|(_, b)| v < b) {
                    best = Some((c, v));
                }
            }
            let (c, v) = best.expect("at least one contested open cell");
            let case = if v == T::zero() {
                SelectionCase::Balanced { cell: c }
            } else {
                SelectionCase::Fallback { cell: c }
            };
            (c, case, eta_ratio(&cells[c], belief, target, w_o))
        }
    };

    let candidates: Vec<usize> = cells[cell]
        .members
        .iter()
        .copied()
        .filter(|&x| !shown[x])
        .collect();
    let example = candidates[rng.random_range(0..candidates.len())];
    Ok(RgtpChoice {
        example,
        cell,
        case,
        expected_eta_ratio,
    })
}

/// `p'(h) ∝ p(h) w_o^{(1 - sgn(h(x)) y(x)) / 2}`.
pub fn rgtp_teacher_update<T: Scalar>(
    belief: &[T],
    problem: &TeachingProblem<T>,
    example: usize,
    w_o: T,
) -> Vec<T> {
    let scaled: Vec<T> = belief
        .iter()
        .enumerate()
        .map(|(h, p)| {
            if problem.inconsistent(h, example) {
                *p * w_o
            } else {
                *p
            }
        })
        .collect();
    let z = stable_sum(scaled.iter().copied());
    scaled.into_iter().map(|q| q / z).collect()
}

/// `(1 - p(h*)) / p(h*)`.
pub fn eta<T: Scalar>(belief: &[T], target: usize) -> T {
    let rest = stable_sum(
        belief
            .iter()
            .enumerate()
            .filter(|(h, _)| *h != target)
            .map(|(_, p)| *p),
    );
    rest / belief[target]
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefTrace<T> {
    /// `p^(0) .. p^(T)`.
    pub belief_path: Vec<Vec<T>>,
    pub eta_path: Vec<T>,
    pub chosen: Vec<String>,
    pub steps: Vec<RgtpChoice<T>>,
}

impl<T: Scalar> BeliefTrace<T> {
    pub fn target_mass(&self, target: usize) -> Vec<T> {
        self.belief_path.iter().map(|b| b[target]).collect()
    }

    /// CSV with columns `step,p_target,eta`.
    pub fn write_csv(&self, target: usize, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "step,p_target,eta")?;
        for (t, (b, e)) in self.belief_path.iter().zip(&self.eta_path).enumerate() {
            writeln!(out, "{t},{},{}", b[target].to_f64_lossy(), e.to_f64_lossy())?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs the relaxed-greedy policy until the teacher's belief puts at least
/// `1 - epsilon` on the target, the length cap is hit, or no informative
/// example is left.
pub fn rgtp_teach<T: Scalar>(
    problem: &TeachingProblem<T>,
    config: &RgtpConfig<T>,
    seed: u64,
) -> Result<(TeachingSequence<T>, BeliefTrace<T>)> {
    config.validate()?;
    let target = problem.target_index();
    let cells = build_cells(problem);
    let mut rng = seeded(seed);
    let mut shown = vec![false; problem.n_examples()];
    let mut belief = problem.prior().to_vec();
    let mut trace = BeliefTrace {
        eta_path: vec![eta(&belief, target)],
        belief_path: vec![belief.clone()],
        chosen: Vec::new(),
        steps: Vec::new(),
    };
    let mut picks = Vec::new();

    let status = loop {
        if T::one() - belief[target] <= config.epsilon {
            break Status::ToleranceMet;
        }
        if picks.len() >= config.max_len {
            break Status::Exhausted;
        }
        let choice = match rgtp_step(&belief, problem, &cells, &shown, config.w_o, &mut rng) {
            Ok(c) => c,
            Err(Error::NothingInformative) => break Status::Unreachable,
            Err(e) => return Err(e),
        };
        shown[choice.example] = true;
        picks.push(choice.example);
        belief = rgtp_teacher_update(&belief, problem, choice.example, config.w_o);
        trace.eta_path.push(eta(&belief, target));
        trace.belief_path.push(belief.clone());
        trace
            .chosen
            .push(problem.example(choice.example).id.clone());
        trace.steps.push(choice);
    };

    let sequence = TeachingSequence {
        policy: PolicyKind::Rgtp,
        example_ids: trace.chosen.clone(),
        per_step: annotate(problem, problem.alpha(), &picks)?,
        status,
    };
    Ok((sequence, trace))
}

/// Upper bound on `Pr(1 - p_m(h*) > epsilon)` after `m` relaxed-greedy steps
/// on an `m`-rich pool.
pub fn rgtp_failure_bound(epsilon: f64, p0_target: f64, w_o: f64, m: usize) -> f64 {
    (1.0 - epsilon) * (1.0 - p0_target) / (epsilon * p0_target)
        * (-(m as f64) * (1.0 - w_o) / 4.0).exp()
}

/// Examples needed for failure probability `delta`.
pub fn rgtp_length_for(epsilon: f64, p0_target: f64, w_o: f64, delta: f64) -> f64 {
    4.0 / (1.0 - w_o) * ((1.0 - epsilon) * (1.0 - p0_target) / (delta * epsilon * p0_target)).ln()
}

/// `8 ln^2(2 / epsilon)`: richness (and length) sufficient for STRICT to
/// reach error below `epsilon` on linear classes. Reported, not enforced.
pub fn rich_teaching_length(epsilon: f64) -> f64 {
    8.0 * (2.0 / epsilon).ln().powi(2)
}
