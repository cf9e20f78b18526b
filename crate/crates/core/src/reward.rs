//! Reward composition: transformation + accuracy + format.
//!
//! A response is parsed once under the grammar of the configured mode. The
//! format component pays out when the parse succeeds; the transformation
//! component grades the pretext answer; the accuracy component grades the
//! user answer with a task-specific metric. The total is their plain sum.

use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{parse_tagged, ParseMode};
use crate::metrics::{rouge_l_f1, wer, TokenSequence};
use crate::pretext::{extract_option_letter, grade_option, index_of_letter, letter_of, PretextMcq};

/// Absolute tolerance for numeric exact match.
pub const NUMERIC_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Mcq,
    Numeric,
    FreeForm,
    Ocr,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroundTruth {
    Number(f64),
    Text(String),
}

impl GroundTruth {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            GroundTruth::Number(n) => Some(*n),
            GroundTruth::Text(s) => s.trim().parse().ok(),
        }
    }

    pub fn as_text(&self) -> String {
        match self {
            GroundTruth::Number(n) => n.to_string(),
            GroundTruth::Text(s) => s.clone(),
        }
    }
}

impl From<&str> for GroundTruth {
    fn from(s: &str) -> Self {
        GroundTruth::Text(s.to_string())
    }
}

impl From<f64> for GroundTruth {
    fn from(n: f64) -> Self {
        GroundTruth::Number(n)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaskError {
    #[error("{kind:?} task needs a finite numeric ground truth")]
    NotNumeric { kind: TaskKind },
    #[error("mcq ground truth {0:?} does not name a listed option")]
    UnknownOption(String),
}

/// What the user question asks for and how its answer is checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDescriptor {
    pub kind: TaskKind,
    pub ground_truth: GroundTruth,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
}

impl TaskDescriptor {
    pub fn new(kind: TaskKind, ground_truth: impl Into<GroundTruth>) -> Self {
        Self {
            kind,
            ground_truth: ground_truth.into(),
            options: None,
        }
    }

    pub fn mcq(answer: &str, options: Vec<String>) -> Self {
        Self {
            kind: TaskKind::Mcq,
            ground_truth: answer.into(),
            options: Some(options),
        }
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        match self.kind {
            TaskKind::Numeric | TaskKind::Regression => match self.ground_truth.as_number() {
                Some(n) if n.is_finite() => Ok(()),
                _ => Err(TaskError::NotNumeric { kind: self.kind }),
            },
            TaskKind::Mcq => self.mcq_answer_letter().map(|_| ()),
            TaskKind::FreeForm | TaskKind::Ocr => Ok(()),
        }
    }

    /// Resolves the mcq ground truth to an option letter. The ground truth
    /// may be the letter itself or the text of one listed option.
    pub fn mcq_answer_letter(&self) -> Result<char, TaskError> {
        let gt = self.ground_truth.as_text();
        let gt = gt.trim();
        let mut chars = gt.chars();
        if let (Some(c), None) = (chars.next(), chars.next()) {
            if let Some(idx) = index_of_letter(c) {
                let listed = self.options.as_ref().is_none_or(|o| idx < o.len());
                if listed {
                    return Ok(letter_of(idx));
                }
            }
        }
        self.options
            .as_ref()
            .and_then(|opts| {
                opts.iter()
                    .position(|o| o.trim().eq_ignore_ascii_case(gt))
                    .map(letter_of)
            })
            .ok_or_else(|| TaskError::UnknownOption(gt.to_string()))
    }

    fn max_letter(&self) -> char {
        let listed = self.options.as_ref().map_or(0, Vec::len);
        letter_of(listed.clamp(6, 26) - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Only the pretext question is asked; its answer sits in `<answer>`.
    Pretext,
    /// Only the user question is asked.
    Vanilla,
    /// Both questions, answered in `<transform>` and `<answer>`.
    Viss,
}

impl RewardMode {
    pub fn parse_mode(self) -> ParseMode {
        match self {
            RewardMode::Viss => ParseMode::Viss,
            RewardMode::Pretext | RewardMode::Vanilla => ParseMode::Vanilla,
        }
    }

    pub fn needs_pretext(self) -> bool {
        matches!(self, RewardMode::Pretext | RewardMode::Viss)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub mode: RewardMode,
    /// Transformation reward in viss mode.
    pub r_t_scale: f64,
    pub r_f_scale: f64,
    /// Transformation reward in pretext mode.
    pub pretext_scale: f64,
    pub regression_epsilon: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            mode: RewardMode::Viss,
            r_t_scale: 0.5,
            r_f_scale: 1.0,
            pretext_scale: 1.0,
            regression_epsilon: 1e-6,
        }
    }
}

impl RewardConfig {
    pub fn with_mode(mode: RewardMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    /// Largest total a response can earn under this configuration.
    pub fn max_total(&self) -> f64 {
        match self.mode {
            RewardMode::Pretext => self.pretext_scale + self.r_f_scale,
            RewardMode::Vanilla => 1.0 + self.r_f_scale,
            RewardMode::Viss => self.r_t_scale + 1.0 + self.r_f_scale,
        }
    }

    pub fn is_valid(&self) -> bool {
        [
            self.r_t_scale,
            self.r_f_scale,
            self.pretext_scale,
            self.regression_epsilon,
        ]
        .iter()
        .all(|v| v.is_finite() && *v >= 0.0)
            && self.regression_epsilon > 0.0
    }
}

/// Side information recorded while scoring.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `"ok"` or the grammar error tag.
    pub parse_status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format_error: Option<String>,
    /// Option letter read from the pretext answer, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extracted_option: Option<char>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_t: f64,
    pub r_a: f64,
    pub r_f: f64,
    pub total: f64,
    pub diagnostics: Diagnostics,
}

impl RewardBreakdown {
    fn new(r_t: f64, r_a: f64, r_f: f64, diagnostics: Diagnostics) -> Self {
        Self {
            r_t,
            r_a,
            r_f,
            total: r_t + r_a + r_f,
            diagnostics,
        }
    }
}

/// Accuracy score with an optional explanation when it is forced to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Accuracy {
    pub score: f64,
    pub note: Option<String>,
}

impl Accuracy {
    fn hit(score: f64) -> Self {
        Self { score, note: None }
    }

    fn miss(note: impl Into<String>) -> Self {
        Self {
            score: 0.0,
            note: Some(note.into()),
        }
    }
}

static NUMBER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?").expect("valid number pattern")
});

/// First decimal literal in `text`.
pub fn extract_number(text: &str) -> Option<f64> {
    NUMBER
        .find_iter(text)
        .find_map(|m| m.as_str().parse::<f64>().ok())
        .filter(|v| v.is_finite())
}

/// Clamped relative accuracy: max(0, 1 − |p − g| / max(|g|, ε)).
pub fn relative_accuracy(prediction: f64, truth: f64, epsilon: f64) -> f64 {
    (1.0 - (prediction - truth).abs() / truth.abs().max(epsilon)).max(0.0)
}

pub fn accuracy_reward(task: &TaskDescriptor, answer_text: &str) -> f64 {
    accuracy_reward_with(task, answer_text, RewardConfig::default().regression_epsilon).score
}

pub fn accuracy_reward_with(task: &TaskDescriptor, answer_text: &str, epsilon: f64) -> Accuracy {
    match task.kind {
        TaskKind::Mcq => {
            let truth = match task.mcq_answer_letter() {
                Ok(letter) => letter,
                Err(e) => return Accuracy::miss(e.to_string()),
            };
            match extract_option_letter(answer_text, task.max_letter()) {
                Some(letter) if letter == truth => Accuracy::hit(1.0),
                Some(_) => Accuracy::hit(0.0),
                None => Accuracy::miss("no option letter in answer"),
            }
        }
        TaskKind::Numeric | TaskKind::Regression => {
            let Some(truth) = task.ground_truth.as_number().filter(|t| t.is_finite()) else {
                return Accuracy::miss("ground truth is not a finite number");
            };
            let Some(prediction) = extract_number(answer_text) else {
                return Accuracy::miss("no number in answer");
            };
            if task.kind == TaskKind::Numeric {
                Accuracy::hit(f64::from((prediction - truth).abs() <= NUMERIC_TOLERANCE))
            } else {
                Accuracy::hit(relative_accuracy(prediction, truth, epsilon))
            }
        }
        TaskKind::FreeForm | TaskKind::Ocr => {
            let reference = TokenSequence::normalize(&task.ground_truth.as_text());
            let candidate = TokenSequence::normalize(answer_text);
            let result = if task.kind == TaskKind::FreeForm {
                rouge_l_f1(&candidate, &reference)
            } else {
                wer(&candidate, &reference).map(|w| (1.0 - w).max(0.0))
            };
            match result {
                Ok(score) => Accuracy::hit(score),
                Err(e) => Accuracy::miss(e.to_string()),
            }
        }
    }
}

/// Scores one raw model output.
///
/// `task` is ignored in pretext mode and `pretext` is ignored in vanilla
/// mode. A missing input needed by the mode zeroes the component it feeds.
pub fn score(
    raw_output: &str,
    task: Option<&TaskDescriptor>,
    pretext: Option<&PretextMcq>,
    config: &RewardConfig,
) -> RewardBreakdown {
    let mut diagnostics = Diagnostics::default();
    let parsed = match parse_tagged(raw_output, config.mode.parse_mode()) {
        Ok(parsed) => parsed,
        Err(e) => {
            diagnostics.parse_status = e.kind().to_string();
            diagnostics.format_error = Some(e.to_string());
            return RewardBreakdown::new(0.0, 0.0, 0.0, diagnostics);
        }
    };
    diagnostics.parse_status = "ok".to_string();
    let r_f = config.r_f_scale;

    let mut grade_pretext = |answer: &str, scale: f64| -> f64 {
        let Some(mcq) = pretext else {
            diagnostics.notes.push("pretext question missing".into());
            return 0.0;
        };
        let grade = grade_option(mcq, answer);
        diagnostics.extracted_option = grade.extracted_option;
        if grade.correct {
            scale
        } else {
            0.0
        }
    };

    let (r_t, answer_for_accuracy) = match config.mode {
        RewardMode::Pretext => (grade_pretext(&parsed.user_answer, config.pretext_scale), None),
        RewardMode::Vanilla => (0.0, Some(&parsed.user_answer)),
        RewardMode::Viss => {
            let transform = parsed.transform_answer.as_deref().unwrap_or_default();
            (grade_pretext(transform, config.r_t_scale), Some(&parsed.user_answer))
        }
    };

    let r_a = match (answer_for_accuracy, task) {
        (None, _) => 0.0,
        (Some(_), None) => {
            diagnostics.notes.push("task descriptor missing".into());
            0.0
        }
        (Some(answer), Some(task)) => {
            let acc = accuracy_reward_with(task, answer, config.regression_epsilon);
            diagnostics.notes.extend(acc.note);
            acc.score
        }
    };

    RewardBreakdown::new(r_t, r_a, r_f, diagnostics)
}

/// One element of a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreInput {
    pub raw_output: String,
    #[serde(default)]
    pub task: Option<TaskDescriptor>,
    #[serde(default)]
    pub pretext: Option<PretextMcq>,
}

/// Element-wise [`score`]; output order matches input order.
pub fn batch_score(requests: &[ScoreInput], config: &RewardConfig) -> Vec<RewardBreakdown> {
    requests
        .par_iter()
        .map(|r| score(&r.raw_output, r.task.as_ref(), r.pretext.as_ref(), config))
        .collect()
}
