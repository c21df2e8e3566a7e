//! Synthetic teaching problems.
//!
//! The Vespula/Weevil ("VW") task: two bivariate Gaussian classes in a 2D
//! feature space (head/body size ratio, head/body color contrast) and eight
//! clusters of linear hypotheses through the origin, rotated by pi/4 from
//! each other. The target is the hypothesis with the fewest training
//! mistakes, and training points it mislabels are dropped so the problem is
//! realizable.

use std::f64::consts::FRAC_PI_4;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{predict, Example, Hypothesis, HypothesisClass, Label, TeachingProblem};
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Clone, PartialEq)]
pub struct VwParams {
    pub mean_pos: [f64; 2],
    pub mean_neg: [f64; 2],
    /// Per-axis variances.
    pub cov_diag: [f64; 2],
    pub n_train_per_class: usize,
    pub n_test_per_class: usize,
}

impl Default for VwParams {
    fn default() -> Self {
        Self {
            mean_pos: [0.10, 0.13],
            mean_neg: [-0.10, -0.13],
            cov_diag: [0.12, 0.12],
            n_train_per_class: 80,
            n_test_per_class: 20,
        }
    }
}

impl VwParams {
    pub fn validate(&self) -> Result<()> {
        if self.cov_diag.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::usage("covariance entries must be positive"));
        }
        if self.n_train_per_class == 0 || self.n_test_per_class == 0 {
            return Err(Error::usage("per-class counts must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisGenParams {
    pub n_clusters: usize,
    pub per_cluster: usize,
    /// Mean angle of cluster `i` is `i * angle_mean_step`.
    pub angle_mean_step: f64,
    /// Variances of (angle, offset).
    pub param_cov: [f64; 2],
}

impl Default for HypothesisGenParams {
    fn default() -> Self {
        Self {
            n_clusters: 8,
            per_cluster: 2,
            angle_mean_step: FRAC_PI_4,
            param_cov: [2.0, 0.005],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VwData {
    pub train: Vec<Example<f64>>,
    pub test: Vec<Example<f64>>,
}

fn gaussian_2d<R: Rng>(rng: &mut R, mean: [f64; 2], var: [f64; 2]) -> Vec<f64> {
    (0..2)
        .map(|k| {
            let z: f64 = StandardNormal.sample(rng);
            mean[k] + var[k].sqrt() * z
        })
        .collect()
}

fn class_samples<R: Rng>(
    rng: &mut R,
    params: &VwParams,
    split: &str,
    per_class: usize,
) -> Vec<Example<f64>> {
    let mut out = Vec::with_capacity(2 * per_class);
    for i in 0..per_class {
        let x = gaussian_2d(rng, params.mean_pos, params.cov_diag);
        out.push(Example::new(
            format!("{split}-pos-{i:03}"),
            x,
            Label::Positive,
        ));
    }
    for i in 0..per_class {
        let x = gaussian_2d(rng, params.mean_neg, params.cov_diag);
        out.push(Example::new(
            format!("{split}-neg-{i:03}"),
            x,
            Label::Negative,
        ));
    }
    out
}

/// Labeled 2D examples: `+1` from the Vespula Gaussian, `-1` from Weevil.
pub fn generate_vw(params: &VwParams, seed: u64) -> Result<VwData> {
    params.validate()?;
    let mut rng = seeded(seed);
    let train = class_samples(&mut rng, params, "train", params.n_train_per_class);
    let test = class_samples(&mut rng, params, "test", params.n_test_per_class);
    Ok(VwData { train, test })
}

/// `n_clusters * per_cluster` lines; cluster `i` draws
/// `(theta, b) ~ N([i * step, 0], diag(param_cov))` and maps it to weights
/// `[cos theta, sin theta]` with offset `b`.
pub fn generate_vw_hypotheses(
    params: &HypothesisGenParams,
    seed: u64,
) -> Result<Vec<Hypothesis<f64>>> {
    if params.per_cluster == 0 || params.n_clusters == 0 {
        return Err(Error::usage(
            "cluster count and per-cluster count must be at least 1",
        ));
    }
    if params.param_cov.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::usage("parameter variances must be non-negative"));
    }
    let mut rng = seeded(seed);
    let mut out = Vec::with_capacity(params.n_clusters * params.per_cluster);
    for i in 0..params.n_clusters {
        let mean_angle = params.angle_mean_step * i as f64;
        for _ in 0..params.per_cluster {
            let za: f64 = StandardNormal.sample(&mut rng);
            let zb: f64 = StandardNormal.sample(&mut rng);
            let theta = mean_angle + params.param_cov[0].sqrt() * za;
            let b = params.param_cov[1].sqrt() * zb;
            out.push(Hypothesis::new(vec![theta.cos(), theta.sin()], b));
        }
    }
    Ok(out)
}

/// Index of the hypothesis with the fewest label mistakes on `examples`;
/// ties go to the lowest index.
pub fn select_target(hypotheses: &[Hypothesis<f64>], examples: &[Example<f64>]) -> Result<usize> {
    if hypotheses.is_empty() || examples.is_empty() {
        return Err(Error::usage("need at least one hypothesis and one example"));
    }
    let mut best = (usize::MAX, 0);
    for (i, h) in hypotheses.iter().enumerate() {
        let mut mistakes = 0;
        for x in examples {
            if predict(h, x)? != x.label {
                mistakes += 1;
            }
        }
        if mistakes < best.0 {
            best = (mistakes, i);
        }
    }
    Ok(best.1)
}

/// Drops exactly the examples the target mislabels, keeping order.
pub fn enforce_realizability(
    examples: &[Example<f64>],
    hypotheses: &[Hypothesis<f64>],
    target_index: usize,
) -> Result<Vec<Example<f64>>> {
    let target = hypotheses
        .get(target_index)
        .ok_or_else(|| Error::usage(format!("target index {target_index} out of range")))?;
    let mut kept = Vec::with_capacity(examples.len());
    for x in examples {
        if predict(target, x)? == x.label {
            kept.push(x.clone());
        }
    }
    if kept.is_empty() {
        return Err(Error::usage(
            "the target mislabels every example; nothing left to teach",
        ));
    }
    Ok(kept)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VwProblemParams {
    pub data: VwParams,
    pub hypotheses: HypothesisGenParams,
    /// Learner confidence stored in the problem.
    pub alpha: f64,
}

impl Default for VwProblemParams {
    fn default() -> Self {
        Self {
            data: VwParams::default(),
            hypotheses: HypothesisGenParams::default(),
            alpha: 2.0,
        }
    }
}

/// Full VW pipeline: data, hypotheses, target selection, pruning and a
/// uniform prior. The test set is kept as generated.
pub fn build_vw_problem(params: &VwProblemParams, seed: u64) -> Result<TeachingProblem<f64>> {
    let data = generate_vw(&params.data, derive_seed(seed, 0))?;
    let hypotheses = generate_vw_hypotheses(&params.hypotheses, derive_seed(seed, 1))?;
    let target = select_target(&hypotheses, &data.train)?;
    let train = enforce_realizability(&data.train, &hypotheses, target)?;
    let class = HypothesisClass::uniform(hypotheses, target)?;
    TeachingProblem::new(train, class, params.alpha, Some(data.test))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorKind {
    Uniform,
    /// Normalized exponential draws (a flat Dirichlet).
    Random,
}

/// Random realizable instance for tests and experiments: Gaussian linear
/// hypotheses, points uniform in `[-1, 1]^dim`, labels from a randomly
/// chosen target. Points closer than `min_margin` to any hypothesis
/// boundary are redrawn.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomInstanceParams {
    pub n_examples: usize,
    pub n_hypotheses: usize,
    pub dim: usize,
    pub n_test: usize,
    pub min_margin: f64,
    pub prior: PriorKind,
    pub alpha: f64,
}

impl Default for RandomInstanceParams {
    fn default() -> Self {
        Self {
            n_examples: 10,
            n_hypotheses: 8,
            dim: 2,
            n_test: 0,
            min_margin: 0.0,
            prior: PriorKind::Uniform,
            alpha: 2.0,
        }
    }
}

pub fn random_instance(params: &RandomInstanceParams, seed: u64) -> Result<TeachingProblem<f64>> {
    if params.n_examples == 0 || params.n_hypotheses == 0 || params.dim == 0 {
        return Err(Error::usage("instance sizes must be positive"));
    }
    let mut rng = seeded(seed);
    let offset = Normal::new(0.0, 0.5).expect("valid normal");
    let hypotheses: Vec<Hypothesis<f64>> = (0..params.n_hypotheses)
        .map(|_| {
            let w = (0..params.dim)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            Hypothesis::new(w, offset.sample(&mut rng))
        })
        .collect();
    let target = rng.random_range(0..params.n_hypotheses);

    let draw_point = |rng: &mut crate::rng::SimRng| -> Vec<f64> {
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..params.dim)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let clear = hypotheses
                .iter()
                .all(|h| h.score_unchecked(&x).abs() >= params.min_margin);
            if clear {
                return x;
            }
        }
        (0..params.dim)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect()
    };

    let label_of = |x: &[f64]| Label::from_score(hypotheses[target].score_unchecked(x));
    let mut examples = Vec::with_capacity(params.n_examples);
    for i in 0..params.n_examples {
        let x = draw_point(&mut rng);
        let y = label_of(&x);
        examples.push(Example::new(format!("x{i}"), x, y));
    }
    let mut test = Vec::with_capacity(params.n_test);
    for i in 0..params.n_test {
        let x = draw_point(&mut rng);
        let y = label_of(&x);
        test.push(Example::new(format!("t{i}"), x, y));
    }

    let class = match params.prior {
        PriorKind::Uniform => HypothesisClass::uniform(hypotheses, target)?,
        PriorKind::Random => {
            let raw: Vec<f64> = (0..params.n_hypotheses)
                .map(|_| {
                    let e: f64 = Exp1.sample(&mut rng);
                    e + 1e-3
                })
                .collect();
            let total: f64 = raw.iter().sum();
            let mut prior: Vec<f64> = raw.iter().map(|r| r / total).collect();
            // absorb rounding in the largest entry
            let (imax, _) = prior.iter().enumerate().fold((0, f64::MIN), |acc, (i, p)| {
                if *p > acc.1 {
                    (i, *p)
                } else {
                    acc
                }
            });
            let rest: f64 = prior
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != imax)
                .map(|(_, p)| p)
                .sum();
            prior[imax] = 1.0 - rest;
            HypothesisClass::new(hypotheses, prior, target)?
        }
    };
    TeachingProblem::new(
        examples,
        class,
        params.alpha,
        (params.n_test > 0).then_some(test),
    )
}
