use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use crowdteach::learner::resolve_sequence;
use crowdteach::{Example, Label, Problem};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ServiceError, ServiceResult};

/// Group with no teaching phase; always available.
pub const CONTROL_GROUP: &str = "none";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub problem: Problem,
    /// Teaching sequence (example ids) per group.
    pub groups: BTreeMap<String, Vec<String>>,
    /// Number of test items; the first `test_len` test examples, in order.
    pub test_len: usize,
    /// Send feature vectors along with assets.
    pub serve_features: bool,
    /// Append-only JSONL log of answers.
    pub answer_log: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn new(problem: Problem, test_len: usize) -> Self {
        Self {
            problem,
            groups: BTreeMap::new(),
            test_len,
            serve_features: false,
            answer_log: None,
        }
    }

    pub fn with_group(mut self, name: impl Into<String>, sequence: Vec<String>) -> Self {
        self.groups.insert(name.into(), sequence);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Teach,
    Test,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub item_id: String,
    pub given_label: Label,
    pub correct: bool,
    pub phase: Phase,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

#[derive(Debug)]
struct Session {
    group: String,
    cursor: usize,
    answers: Vec<Answer>,
    teach: Arc<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
    pub n_teach: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Next {
    Item {
        item_id: String,
        phase: Phase,
        /// 0-based position in the combined teach + test list.
        position: usize,
        total: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        asset: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        features: Option<Vec<f64>>,
    },
    Done {
        done: bool,
        report_url: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    /// Correct label for teach items; `null` for test items.
    pub feedback: Option<Label>,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub group: String,
    /// Fraction of test answers that were wrong; `null` without test items.
    pub test_error: Option<f64>,
    pub per_item: Vec<Answer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    pub completed: usize,
    pub mean_test_error: Option<f64>,
}

#[derive(Serialize)]
struct LogLine<'a> {
    session_id: &'a str,
    group: &'a str,
    #[serde(flatten)]
    answer: &'a Answer,
}

/// In-memory sessions. Each session has its own lock, so concurrent
/// sessions never wait on each other beyond the map lookup.
#[derive(Debug)]
pub struct SessionStore {
    problem: Problem,
    groups: BTreeMap<String, Arc<Vec<usize>>>,
    test_items: Vec<Example<f64>>,
    serve_features: bool,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    log: Option<Mutex<File>>,
}

fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn new_token() -> String {
    format!("{:032x}", rand::rng().random::<u128>())
}

impl SessionStore {
    pub fn new(config: ServiceConfig) -> ServiceResult<Self> {
        let available = config.problem.test_set().map_or(0, <[_]>::len);
        if config.test_len > available {
            return Err(ServiceError::Config(format!(
                "test length {} exceeds the {available} test examples in the problem",
                config.test_len
            )));
        }
        let test_items = config
            .problem
            .test_set()
            .map(|t| t[..config.test_len].to_vec())
            .unwrap_or_default();
        let mut groups = BTreeMap::new();
        for (name, ids) in &config.groups {
            let indices = resolve_sequence(&config.problem, ids)
                .map_err(|e| ServiceError::Config(format!("group `{name}`: {e}")))?;
            groups.insert(name.clone(), Arc::new(indices));
        }
        groups
            .entry(CONTROL_GROUP.to_string())
            .or_insert_with(|| Arc::new(Vec::new()));
        let log = match &config.answer_log {
            Some(path) => Some(Mutex::new(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| {
                        ServiceError::Config(format!("answer log {}: {e}", path.display()))
                    })?,
            )),
            None => None,
        };
        Ok(Self {
            problem: config.problem,
            groups,
            test_items,
            serve_features: config.serve_features,
            sessions: RwLock::new(HashMap::new()),
            log,
        })
    }

    pub fn group_names(&self) -> impl Iterator<Item = &str> {
        self.groups.keys().map(String::as_str)
    }

    pub fn create(&self, group: &str) -> ServiceResult<Created> {
        let teach = self
            .groups
            .get(group)
            .ok_or_else(|| ServiceError::UnknownGroup(group.to_string()))?
            .clone();
        let n_teach = teach.len();
        let session = Session {
            group: group.to_string(),
            cursor: 0,
            answers: Vec::new(),
            teach,
        };
        let mut map = self.sessions.write().expect("session map poisoned");
        let mut id = new_token();
        while map.contains_key(&id) {
            id = new_token();
        }
        map.insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok(Created {
            session_id: id,
            n_teach,
            n_test: self.test_items.len(),
        })
    }

    fn session(&self, id: &str) -> ServiceResult<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    fn item(&self, s: &Session, pos: usize) -> Option<(&Example<f64>, Phase)> {
        if pos < s.teach.len() {
            Some((self.problem.example(s.teach[pos]), Phase::Teach))
        } else {
            self.test_items
                .get(pos - s.teach.len())
                .map(|x| (x, Phase::Test))
        }
    }

    pub fn next(&self, id: &str) -> ServiceResult<Next> {
        let handle = self.session(id)?;
        let s = handle.lock().expect("session poisoned");
        Ok(match self.item(&s, s.cursor) {
            Some((x, phase)) => Next::Item {
                item_id: x.id.clone(),
                phase,
                position: s.cursor,
                total: s.teach.len() + self.test_items.len(),
                asset: x.asset.clone(),
                features: self.serve_features.then(|| x.features.clone()),
            },
            None => Next::Done {
                done: true,
                report_url: format!("/sessions/{id}/report"),
            },
        })
    }

    pub fn answer(&self, id: &str, item_id: &str, label: Label) -> ServiceResult<Feedback> {
        let handle = self.session(id)?;
        let mut s = handle.lock().expect("session poisoned");
        let (x, phase) = match self.item(&s, s.cursor) {
            Some(v) => v,
            None => return Err(ServiceError::SessionFinished),
        };
        if x.id != item_id {
            return Err(ServiceError::OutOfOrder {
                expected: x.id.clone(),
                got: item_id.to_string(),
            });
        }
        let answer = Answer {
            item_id: item_id.to_string(),
            given_label: label,
            correct: label == x.label,
            phase,
            timestamp: now_millis(),
        };
        let feedback = (phase == Phase::Teach).then_some(x.label);
        if let Some(log) = &self.log {
            let line = serde_json::to_string(&LogLine {
                session_id: id,
                group: &s.group,
                answer: &answer,
            })
            .expect("answer serializes");
            let mut f = log.lock().expect("log poisoned");
            writeln!(f, "{line}").map_err(|e| ServiceError::Log(e.to_string()))?;
        }
        s.answers.push(answer);
        s.cursor += 1;
        Ok(Feedback { feedback, phase })
    }

    fn report_of(&self, s: &Session) -> Report {
        let tests: Vec<&Answer> = s
            .answers
            .iter()
            .filter(|a| a.phase == Phase::Test)
            .collect();
        let test_error = (!tests.is_empty())
            .then(|| tests.iter().filter(|a| !a.correct).count() as f64 / tests.len() as f64);
        Report {
            group: s.group.clone(),
            test_error,
            per_item: s.answers.clone(),
        }
    }

    pub fn report(&self, id: &str) -> ServiceResult<Report> {
        let handle = self.session(id)?;
        let s = handle.lock().expect("session poisoned");
        if self.item(&s, s.cursor).is_some() {
            return Err(ServiceError::NotFinished);
        }
        Ok(self.report_of(&s))
    }

    /// Mean test error of completed sessions, per group. The session map is
    /// held for reading throughout, so no session is created mid-snapshot.
    pub fn summary(&self) -> Vec<GroupSummary> {
        let map = self.sessions.read().expect("session map poisoned");
        let mut acc: BTreeMap<&str, (usize, f64, usize)> = self
            .groups
            .keys()
            .map(|g| (g.as_str(), (0, 0.0, 0)))
            .collect();
        let mut reports = Vec::new();
        for handle in map.values() {
            let s = handle.lock().expect("session poisoned");
            if self.item(&s, s.cursor).is_none() {
                reports.push(self.report_of(&s));
            }
        }
        for r in &reports {
            let e = acc.get_mut(r.group.as_str()).expect("known group");
            e.0 += 1;
            if let Some(t) = r.test_error {
                e.1 += t;
                e.2 += 1;
            }
        }
        acc.into_iter()
            .map(|(g, (completed, sum, scored))| GroupSummary {
                group: g.to_string(),
                completed,
                mean_test_error: (scored > 0).then(|| sum / scored as f64),
            })
            .collect()
    }
}
