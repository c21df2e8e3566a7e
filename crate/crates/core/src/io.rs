//! Problem and sequence files (JSON, UTF-8).
//!
//! Problem file:
//!
//! ```json
//! {
//!   "alpha": 2.0,
//!   "examples": [{"id": "x0", "x": [0.1, 0.2], "y": 1, "asset": "img/x0.png"}],
//!   "hypotheses": [{"w": [1.0, 0.0], "b": 0.0}],
//!   "prior": [1.0],
//!   "target_index": 0,
//!   "test_examples": [{"id": "t0", "x": [0.3, -0.1], "y": 1}]
//! }
//! ```
//!
//! Unknown fields are ignored. Sequence file:
//!
//! ```json
//! {"policy": "strict", "status": "tolerance_met", "example_ids": ["x3"],
//!  "per_step": [{"F": 0.2, "gain": 0.2, "difficulty": 0.9}]}
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Example, Hypothesis, HypothesisClass, Label, TeachingProblem};
use crate::teach::{PolicyKind, Status, StepDiagnostics, TeachingSequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub x: Vec<f64>,
    pub y: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisRecord {
    pub w: Vec<f64>,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub alpha: f64,
    pub examples: Vec<ExampleRecord>,
    pub hypotheses: Vec<HypothesisRecord>,
    pub prior: Vec<f64>,
    pub target_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_examples: Option<Vec<ExampleRecord>>,
}

impl From<&Example<f64>> for ExampleRecord {
    fn from(x: &Example<f64>) -> Self {
        Self {
            id: x.id.clone(),
            x: x.features.clone(),
            y: x.label,
            asset: x.asset.clone(),
        }
    }
}

impl From<ExampleRecord> for Example<f64> {
    fn from(r: ExampleRecord) -> Self {
        Example {
            id: r.id,
            features: r.x,
            label: r.y,
            asset: r.asset,
        }
    }
}

impl From<&TeachingProblem<f64>> for ProblemFile {
    fn from(p: &TeachingProblem<f64>) -> Self {
        Self {
            alpha: p.alpha(),
            examples: p.teaching_set().iter().map(ExampleRecord::from).collect(),
            hypotheses: p
                .hypotheses()
                .iter()
                .map(|h| HypothesisRecord {
                    w: h.weights.clone(),
                    b: h.offset,
                })
                .collect(),
            prior: p.prior().to_vec(),
            target_index: p.target_index(),
            test_examples: p
                .test_set()
                .map(|t| t.iter().map(ExampleRecord::from).collect()),
        }
    }
}

impl TryFrom<ProblemFile> for TeachingProblem<f64> {
    type Error = Error;

    fn try_from(f: ProblemFile) -> Result<Self> {
        let hypotheses = f
            .hypotheses
            .into_iter()
            .map(|h| Hypothesis::new(h.w, h.b))
            .collect();
        let class = HypothesisClass::new(hypotheses, f.prior, f.target_index)?;
        let examples = f.examples.into_iter().map(Example::from).collect();
        let test = f
            .test_examples
            .map(|t| t.into_iter().map(Example::from).collect());
        TeachingProblem::new(examples, class, f.alpha, test)
    }
}

fn parse_error(path: &Path, err: serde_json::Error) -> Error {
    Error::Parse {
        context: path.display().to_string(),
        message: err.to_string(),
    }
}

pub fn problem_from_json(text: &str) -> Result<TeachingProblem<f64>> {
    let file: ProblemFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        context: "problem".into(),
        message: e.to_string(),
    })?;
    file.try_into()
}

pub fn problem_to_json(problem: &TeachingProblem<f64>) -> String {
    let mut s =
        serde_json::to_string_pretty(&ProblemFile::from(problem)).expect("problem serializes");
    s.push('\n');
    s
}

pub fn load_problem(path: impl AsRef<Path>) -> Result<TeachingProblem<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let file: ProblemFile = serde_json::from_str(&text).map_err(|e| parse_error(path, e))?;
    file.try_into()
}

pub fn save_problem(problem: &TeachingProblem<f64>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, problem_to_json(problem))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    #[serde(rename = "F")]
    pub f: f64,
    pub gain: f64,
    pub difficulty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceFile {
    pub policy: PolicyKind,
    pub status: Status,
    pub example_ids: Vec<String>,
    pub per_step: Vec<StepRecord>,
}

impl From<&TeachingSequence<f64>> for SequenceFile {
    fn from(s: &TeachingSequence<f64>) -> Self {
        Self {
            policy: s.policy,
            status: s.status,
            example_ids: s.example_ids.clone(),
            per_step: s
                .per_step
                .iter()
                .map(|d| StepRecord {
                    f: d.f_value,
                    gain: d.marginal_gain,
                    difficulty: d.difficulty,
                })
                .collect(),
        }
    }
}

impl SequenceFile {
    /// Rebuilds the in-memory sequence. The error bound is not stored in the
    /// file and is recomputed from `F` and the problem.
    pub fn into_sequence(self, problem: &TeachingProblem<f64>) -> TeachingSequence<f64> {
        let e = problem.prior_expected_error();
        let p_star = problem.prior()[problem.target_index()];
        TeachingSequence {
            policy: self.policy,
            status: self.status,
            example_ids: self.example_ids,
            per_step: self
                .per_step
                .into_iter()
                .map(|r| StepDiagnostics {
                    f_value: r.f,
                    marginal_gain: r.gain,
                    difficulty: r.difficulty,
                    expected_error_upper_bound: (e - r.f).max(0.0) / p_star,
                })
                .collect(),
        }
    }
}

pub fn load_sequence(path: impl AsRef<Path>) -> Result<SequenceFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| parse_error(path, e))
}

pub fn save_sequence(sequence: &TeachingSequence<f64>, path: impl AsRef<Path>) -> Result<()> {
    let mut s =
        serde_json::to_string_pretty(&SequenceFile::from(sequence)).expect("sequence serializes");
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}
