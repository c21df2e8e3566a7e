//! Simulated-learner experiments and the statistics used to compare groups.
//!
//! Seeds: the policy that builds the sequence draws from stream 0 of the
//! master seed; learner `i` draws from stream `i` of stream 1. The same
//! learner therefore sees the same random numbers at every teaching length.

use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::learner::{resolve_sequence, LearnerState, PosteriorPath};
use crate::model::{PosteriorTracker, TeachingProblem};
use crate::rgtp::{rgtp_teach, RgtpConfig};
use crate::rng::{derive_seed, seeded};
use crate::teach::{
    random_teach, setcover_teach, strict_teach, PolicyKind, TeachConfig, TeachingSequence,
};

/// A teaching policy together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicySpec {
    Strict { epsilon: f64, teacher_alpha: f64 },
    SetCover,
    Random,
    Rgtp { epsilon: f64, w_o: f64 },
}

impl PolicySpec {
    pub fn kind(&self) -> PolicyKind {
        match self {
            Self::Strict { .. } => PolicyKind::Strict,
            Self::SetCover => PolicyKind::SetCover,
            Self::Random => PolicyKind::Random,
            Self::Rgtp { .. } => PolicyKind::Rgtp,
        }
    }

    pub fn teacher_alpha(&self) -> Option<f64> {
        match self {
            Self::Strict { teacher_alpha, .. } => Some(*teacher_alpha),
            _ => None,
        }
    }

    /// Runs the policy. `max_len` caps STRICT and RGTP and is the exact
    /// length for the two baselines.
    pub fn build(
        &self,
        problem: &TeachingProblem<f64>,
        max_len: usize,
        seed: u64,
    ) -> Result<TeachingSequence<f64>> {
        match *self {
            Self::Strict {
                epsilon,
                teacher_alpha,
            } => {
                let mut config = TeachConfig::new(epsilon, teacher_alpha);
                if max_len > 0 {
                    config = config.with_max_len(max_len);
                }
                strict_teach(problem, &config)
            }
            Self::SetCover => setcover_teach(problem, max_len, seed),
            Self::Random => random_teach(problem, max_len, seed),
            Self::Rgtp { epsilon, w_o } => {
                let config = RgtpConfig {
                    w_o,
                    epsilon,
                    max_len,
                };
                rgtp_teach(problem, &config, seed).map(|(s, _)| s)
            }
        }
    }
}

/// One line of a simulation report.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRow {
    pub policy: PolicyKind,
    pub teaching_length: usize,
    pub learner_alphas: Vec<f64>,
    pub teacher_alpha: Option<f64>,
    pub n_learners: usize,
    pub mean_test_error: f64,
    pub std_test_error: f64,
    pub seed: u64,
}

impl SimulationRow {
    pub fn standard_error(&self) -> f64 {
        self.std_test_error / (self.n_learners as f64).sqrt()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimulationReport {
    pub rows: Vec<SimulationRow>,
}

impl SimulationReport {
    pub fn row(&self, policy: PolicyKind, teaching_length: usize) -> Option<&SimulationRow> {
        self.rows
            .iter()
            .find(|r| r.policy == policy && r.teaching_length == teaching_length)
    }

    pub fn extend(&mut self, other: SimulationReport) {
        self.rows.extend(other.rows);
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

fn test_errors(problem: &TeachingProblem<f64>) -> Result<Vec<f64>> {
    (0..problem.n_hypotheses())
        .map(|h| {
            problem
                .test_error_of(h)
                .ok_or_else(|| Error::usage("simulation needs a problem with test examples"))
        })
        .collect()
}

/// `sum_h P0(h) err_test(h)`: the population error with no teaching.
pub fn prior_expected_test_error(problem: &TeachingProblem<f64>) -> Result<f64> {
    Ok(test_errors(problem)?
        .iter()
        .zip(problem.prior())
        .map(|(e, p)| e * p)
        .sum())
}

/// Test error of `n_learners` simulated learners after each prefix length of
/// a fixed sequence. Learner `i` has confidence
/// `learner_alphas[i % learner_alphas.len()]`.
pub fn simulate_sequence(
    problem: &TeachingProblem<f64>,
    sequence: &TeachingSequence<f64>,
    lengths: &[usize],
    n_learners: usize,
    learner_alphas: &[f64],
    master_seed: u64,
    teacher_alpha: Option<f64>,
) -> Result<SimulationReport> {
    if n_learners == 0 {
        return Err(Error::usage("need at least one learner"));
    }
    if learner_alphas.is_empty() {
        return Err(Error::usage("need at least one learner alpha"));
    }
    if let Some(&l) = lengths.iter().find(|&&l| l > problem.n_examples()) {
        return Err(Error::usage(format!(
            "teaching length {l} exceeds the {} available examples",
            problem.n_examples()
        )));
    }
    let errors = test_errors(problem)?;
    let indices = resolve_sequence(problem, &sequence.example_ids)?;

    let per_alpha = learner_alphas
        .iter()
        .map(|&a| {
            let p = problem.with_alpha(a)?;
            let path = PosteriorPath::new(&p, &indices)?;
            Ok((p, path))
        })
        .collect::<Result<Vec<_>>>()?;

    let learner_stream = derive_seed(master_seed, 1);
    let mut rows = Vec::with_capacity(lengths.len());
    for &len in lengths {
        let steps = len.min(indices.len());
        let results: Vec<f64> = (0..n_learners)
            .into_par_iter()
            .map(|i| {
                let (p, path) = &per_alpha[i % per_alpha.len()];
                let mut rng = seeded(derive_seed(learner_stream, i as u64));
                errors[path.walk(p, steps, &mut rng)]
            })
            .collect();
        let (mean, std) = mean_std(&results);
        rows.push(SimulationRow {
            policy: sequence.policy,
            teaching_length: len,
            learner_alphas: learner_alphas.to_vec(),
            teacher_alpha,
            n_learners,
            mean_test_error: mean,
            std_test_error: std,
            seed: master_seed,
        });
    }
    Ok(SimulationReport { rows })
}

/// Builds the policy's sequence once (long enough for the largest length)
/// and simulates every prefix.
pub fn simulate_population(
    problem: &TeachingProblem<f64>,
    policy: &PolicySpec,
    lengths: &[usize],
    n_learners: usize,
    learner_alphas: &[f64],
    master_seed: u64,
) -> Result<SimulationReport> {
    let max_len = lengths.iter().copied().max().unwrap_or(0);
    if max_len > problem.n_examples() {
        return Err(Error::usage(format!(
            "teaching length {max_len} exceeds the {} available examples",
            problem.n_examples()
        )));
    }
    let sequence = if max_len == 0 {
        TeachingSequence {
            policy: policy.kind(),
            example_ids: Vec::new(),
            per_step: Vec::new(),
            status: crate::teach::Status::Exhausted,
        }
    } else {
        policy.build(problem, max_len, derive_seed(master_seed, 0))?
    };
    simulate_sequence(
        problem,
        &sequence,
        lengths,
        n_learners,
        learner_alphas,
        master_seed,
        policy.teacher_alpha(),
    )
}

/// Exact law of `h_t` (1-based `t`) under the learner process:
/// `m_{s+1}(h) = m_s(h) [h labels x_s correctly] + mu_s P_s(h)`, where
/// `mu_s` is the `m_s`-mass of hypotheses that mislabel `x_s`. This equals
/// `P_{t-1}` only when mislabeling hypotheses are eliminated outright.
pub fn hypothesis_marginal(
    problem: &TeachingProblem<f64>,
    sequence: &[String],
    t: usize,
) -> Result<Vec<f64>> {
    if t == 0 || t > sequence.len() + 1 {
        return Err(Error::usage(format!(
            "step must lie in 1..={} for this sequence",
            sequence.len() + 1
        )));
    }
    let indices = resolve_sequence(problem, sequence)?;
    let mut tracker = PosteriorTracker::new(problem);
    let mut law = problem.prior().to_vec();
    for &x in &indices[..t - 1] {
        tracker = tracker.observe_index(problem, x)?;
        let post = tracker.normalized_posterior();
        let moved: f64 = (0..law.len())
            .filter(|&h| problem.inconsistent(h, x))
            .map(|h| law[h])
            .sum();
        law = (0..law.len())
            .map(|h| {
                let stay = if problem.inconsistent(h, x) {
                    0.0
                } else {
                    law[h]
                };
                stay + moved * post[h]
            })
            .collect();
    }
    Ok(law)
}

/// Empirical law of `h_t` over `n_rollouts` independent learners.
pub fn empirical_marginal(
    problem: &TeachingProblem<f64>,
    sequence: &[String],
    t: usize,
    n_rollouts: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if t == 0 || t > sequence.len() + 1 {
        return Err(Error::usage(format!(
            "step must lie in 1..={} for this sequence",
            sequence.len() + 1
        )));
    }
    if n_rollouts == 0 {
        return Err(Error::usage("need at least one rollout"));
    }
    let indices = resolve_sequence(problem, sequence)?;
    let prefix = &indices[..t - 1];
    let finals: Vec<usize> = (0..n_rollouts)
        .into_par_iter()
        .map(|r| {
            let mut rng = seeded(derive_seed(seed, r as u64));
            let mut state = LearnerState::init(problem, &mut rng);
            for &x in prefix {
                state = state.observe_index(problem, x, &mut rng)?;
            }
            Ok(state.current_index)
        })
        .collect::<Result<_>>()?;
    let mut counts = vec![0usize; problem.n_hypotheses()];
    for h in finals {
        counts[h] += 1;
    }
    Ok(counts
        .into_iter()
        .map(|c| c as f64 / n_rollouts as f64)
        .collect())
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Posterior after the first `t - 1` examples of `sequence`.
pub fn posterior_before(
    problem: &TeachingProblem<f64>,
    sequence: &[String],
    t: usize,
) -> Result<Vec<f64>> {
    let indices = resolve_sequence(problem, sequence)?;
    let mut tracker = PosteriorTracker::new(problem);
    for &x in &indices[..(t.max(1) - 1).min(indices.len())] {
        tracker = tracker.observe_index(problem, x)?;
    }
    Ok(tracker.normalized_posterior())
}

/// Total-variation distance between the empirical law of `h_t` (the
/// hypothesis held when the `t`-th example arrives, `t` 1-based) over
/// `n_rollouts` learners and the posterior after the first `t - 1` examples.
pub fn lemma1_check(
    problem: &TeachingProblem<f64>,
    sequence: &[String],
    t: usize,
    n_rollouts: usize,
    seed: u64,
) -> Result<f64> {
    if t == 0 || t > sequence.len() {
        return Err(Error::usage(format!(
            "step must lie in 1..={} for this sequence",
            sequence.len()
        )));
    }
    let empirical = empirical_marginal(problem, sequence, t, n_rollouts, seed)?;
    Ok(total_variation(
        &empirical,
        &posterior_before(problem, sequence, t)?,
    ))
}

/// Difficulty of each pick under the posterior just before it, at the
/// problem's own confidence.
pub fn difficulty_curve(problem: &TeachingProblem<f64>, sequence: &[String]) -> Result<Vec<f64>> {
    let indices = resolve_sequence(problem, sequence)?;
    let mut tracker = PosteriorTracker::new(problem);
    let mut out = Vec::with_capacity(indices.len());
    for x in indices {
        out.push(tracker.difficulty_of(problem, x));
        tracker = tracker.observe_index(problem, x)?;
    }
    Ok(out)
}

/// Two-column CSV `step,difficulty` with 1-based steps.
pub fn write_difficulty_csv(curve: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "difficulty"])?;
    for (i, d) in curve.iter().enumerate() {
        w.write_record([(i + 1).to_string(), d.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p_two_tailed: f64,
}

fn sample_var(x: &[f64]) -> f64 {
    mean_std(x).1.powi(2)
}

/// Welch's unequal-variance t-test.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::usage("each sample needs at least two values"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::usage("samples must be finite"));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean_std(a).0, mean_std(b).0);
    let (va, vb) = (sample_var(a) / na, sample_var(b) / nb);
    let se2 = va + vb;
    if se2 == 0.0 {
        return Err(Error::usage("both samples have zero variance"));
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::usage(e.to_string()))?;
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(WelchResult {
        t,
        df,
        p_two_tailed: p,
    })
}

const REPORT_HEADER: [&str; 8] = [
    "policy",
    "teaching_length",
    "learner_alpha",
    "teacher_alpha",
    "n_learners",
    "mean_test_error",
    "std_test_error",
    "seed",
];

fn join_alphas(alphas: &[f64]) -> String {
    alphas
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(";")
}

/// CSV with a fixed column order. Learner alphas are `;`-separated; an
/// empty teacher alpha means the policy does not model the learner.
pub fn write_report_csv(report: &SimulationReport, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(REPORT_HEADER)?;
    for r in &report.rows {
        w.write_record([
            r.policy.to_string(),
            r.teaching_length.to_string(),
            join_alphas(&r.learner_alphas),
            r.teacher_alpha.map(|a| a.to_string()).unwrap_or_default(),
            r.n_learners.to_string(),
            r.mean_test_error.to_string(),
            r.std_test_error.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn field<T: FromStr>(record: &csv::StringRecord, i: usize, line: u64) -> Result<T> {
    let raw = record.get(i).unwrap_or("");
    raw.parse().map_err(|_| Error::Parse {
        context: format!("report line {line}"),
        message: format!("bad {} `{raw}`", REPORT_HEADER[i]),
    })
}

pub fn read_report_csv(path: impl AsRef<Path>) -> Result<SimulationReport> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().ne(REPORT_HEADER) {
        return Err(Error::Parse {
            context: "report header".into(),
            message: format!("expected {}", REPORT_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let alphas = rec
            .get(2)
            .unwrap_or("")
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse().map_err(|_| Error::Parse {
                    context: format!("report line {line}"),
                    message: format!("bad learner_alpha `{s}`"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let teacher_alpha = match rec.get(3).unwrap_or("") {
            "" => None,
            _ => Some(field(&rec, 3, line)?),
        };
        rows.push(SimulationRow {
            policy: field(&rec, 0, line)?,
            teaching_length: field(&rec, 1, line)?,
            learner_alphas: alphas,
            teacher_alpha,
            n_learners: field(&rec, 4, line)?,
            mean_test_error: field(&rec, 5, line)?,
            std_test_error: field(&rec, 6, line)?,
            seed: field(&rec, 7, line)?,
        });
    }
    Ok(SimulationReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{random_instance, RandomInstanceParams};
    use approx::assert_abs_diff_eq;

    fn instance(seed: u64) -> TeachingProblem<f64> {
        let params = RandomInstanceParams {
            n_examples: 20,
            n_hypotheses: 6,
            n_test: 30,
            ..Default::default()
        };
        random_instance(&params, seed).unwrap()
    }

    #[test]
    fn welch_examples() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [2.0, 3.0, 4.0, 5.0, 6.0];
        let r = welch_t_test(&a, &b).unwrap();
        assert_abs_diff_eq!(r.t, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.df, 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.p_two_tailed, 0.346_593_507_087_334_16, epsilon = 1e-9);
        let s = welch_t_test(&b, &a).unwrap();
        assert_eq!(s.t, -r.t);
        assert_abs_diff_eq!(s.p_two_tailed, r.p_two_tailed, epsilon = 1e-15);

        let same = welch_t_test(&a, &a).unwrap();
        assert_eq!(same.t, 0.0);
        assert_abs_diff_eq!(same.p_two_tailed, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn welch_rejects_degenerate_samples() {
        assert!(welch_t_test(&[1.0], &[1.0, 2.0]).is_err());
        assert!(welch_t_test(&[1.0, 1.0], &[2.0, 2.0]).is_err());
    }

    #[test]
    fn length_zero_matches_prior_error() {
        let p = instance(5);
        let report = simulate_population(&p, &PolicySpec::Random, &[0], 4000, &[2.0], 9).unwrap();
        let row = &report.rows[0];
        let expected = prior_expected_test_error(&p).unwrap();
        assert!((row.mean_test_error - expected).abs() <= 2.0 * row.standard_error() + 1e-12);
    }

    #[test]
    fn confident_learners_reach_zero_error() {
        // strong margins so that the test set is determined by the teaching set
        let params = RandomInstanceParams {
            n_examples: 40,
            n_hypotheses: 6,
            n_test: 0,
            min_margin: 1e-2,
            ..Default::default()
        };
        let base = random_instance(&params, 11).unwrap();
        let p = TeachingProblem::new(
            base.teaching_set().to_vec(),
            base.hypothesis_class().clone(),
            1e6,
            Some(base.teaching_set().to_vec()),
        )
        .unwrap();
        let spec = PolicySpec::Strict {
            epsilon: 1e-9,
            teacher_alpha: 1e6,
        };
        let seq = spec.build(&p, 0, 0).unwrap();
        let report = simulate_sequence(&p, &seq, &[seq.len()], 200, &[1e6], 3, Some(1e6)).unwrap();
        // hypotheses equivalent to the target on the pool survive; their error is 0
        assert_eq!(report.rows[0].mean_test_error, 0.0);
    }

    #[test]
    fn reports_are_reproducible() {
        let p = instance(2);
        let spec = PolicySpec::Strict {
            epsilon: 0.01,
            teacher_alpha: 2.0,
        };
        let a = simulate_population(&p, &spec, &[0, 2, 4], 300, &[2.0, 3.0], 17).unwrap();
        let b = simulate_population(&p, &spec, &[0, 2, 4], 300, &[2.0, 3.0], 17).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let c = pool
            .install(|| simulate_population(&p, &spec, &[0, 2, 4], 300, &[2.0, 3.0], 17))
            .unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn simulation_rejects_long_lengths() {
        let p = instance(1);
        assert!(simulate_population(&p, &PolicySpec::Random, &[21], 10, &[2.0], 0).is_err());
    }

    #[test]
    fn lemma1_first_step_is_the_prior() {
        let p = instance(4);
        let ids: Vec<String> = p.teaching_set()[..3].iter().map(|x| x.id.clone()).collect();
        let tv_small = lemma1_check(&p, &ids, 1, 5_000, 1).unwrap();
        let tv_large = lemma1_check(&p, &ids, 1, 50_000, 1).unwrap();
        assert!(tv_large < 0.02);
        assert!(tv_large < tv_small + 0.01);
        assert!(lemma1_check(&p, &ids, 4, 10, 1).is_err());
        assert!(lemma1_check(&p, &ids, 0, 10, 1).is_err());
    }

    #[test]
    fn simulated_law_matches_process_marginal() {
        let p = instance(4);
        let seq = strict_teach(&p, &TeachConfig::new(0.01, 2.0))
            .unwrap()
            .example_ids;
        for t in [1, 2, 3] {
            let exact = hypothesis_marginal(&p, &seq, t).unwrap();
            let empirical = empirical_marginal(&p, &seq, t, 50_000, 8).unwrap();
            assert!(total_variation(&exact, &empirical) < 0.02, "t = {t}");
        }
        assert_eq!(hypothesis_marginal(&p, &seq, 1).unwrap(), p.prior());
    }

    #[test]
    fn process_marginal_is_the_posterior_when_noise_free() {
        let p = instance(4).with_alpha(1e6).unwrap();
        let seq: Vec<String> = p.teaching_set()[..5].iter().map(|x| x.id.clone()).collect();
        for t in 1..=6 {
            let exact = hypothesis_marginal(&p, &seq, t).unwrap();
            let post = posterior_before(&p, &seq, t).unwrap();
            assert!(total_variation(&exact, &post) < 1e-9);
        }
    }

    #[test]
    fn difficulty_curve_length_and_first_value() {
        let p = instance(6);
        let seq = strict_teach(&p, &TeachConfig::new(0.01, 2.0)).unwrap();
        let curve = difficulty_curve(&p, &seq.example_ids).unwrap();
        assert_eq!(curve.len(), seq.len());
        for (c, s) in curve.iter().zip(&seq.per_step) {
            assert_abs_diff_eq!(*c, s.difficulty, epsilon = 1e-12);
        }
    }

    #[test]
    fn report_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_report_csv(&SimulationReport::default(), &path).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap().trim_end(),
            REPORT_HEADER.join(",")
        );

        let report = SimulationReport {
            rows: vec![
                SimulationRow {
                    policy: PolicyKind::Strict,
                    teaching_length: 5,
                    learner_alphas: vec![2.0, 3.0, 4.0],
                    teacher_alpha: Some(2.0),
                    n_learners: 100,
                    mean_test_error: 0.1 + 0.2,
                    std_test_error: 1.0 / 3.0,
                    seed: u64::MAX,
                },
                SimulationRow {
                    policy: PolicyKind::Random,
                    teaching_length: 0,
                    learner_alphas: vec![2.0],
                    teacher_alpha: None,
                    n_learners: 1,
                    mean_test_error: 0.0,
                    std_test_error: 0.0,
                    seed: 0,
                },
            ],
        };
        write_report_csv(&report, &path).unwrap();
        assert_eq!(read_report_csv(&path).unwrap(), report);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("strict,5,2;3;4,2,100,"));
    }
}
