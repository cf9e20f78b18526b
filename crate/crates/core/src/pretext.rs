//! Multiple-choice pretext questions and their grading.
//!
//! Every transform family maps to one MCQ whose options enumerate the
//! family's parameters in canonical order, so the correct option index is
//! always the transform parameter itself.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transform::{TransformFamily, TransformSpec, SWAP_PAIRS};

const DEFAULT_TEMPLATES: &str = include_str!("../templates/pretext_questions.txt");

/// Placeholder expanded to the lettered option list.
pub const OPTIONS_PLACEHOLDER: &str = "{OPTIONS}";

/// Highest option letter recognised by the pretext grader.
pub const MAX_PRETEXT_LETTER: char = 'F';

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("line {line}: unknown template section [{name}]")]
    UnknownSection { line: usize, name: String },
    #[error("line {line}: text before the first section header")]
    TextOutsideSection { line: usize },
    #[error("template [{0}] defined more than once")]
    Duplicate(TransformFamily),
    #[error("no template for [{0}]")]
    Missing(TransformFamily),
    #[error("template [{0}] lacks the {{OPTIONS}} placeholder")]
    NoPlaceholder(TransformFamily),
}

/// One question template per transform family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PretextTemplates {
    templates: BTreeMap<TransformFamily, String>,
}

impl PretextTemplates {
    /// Parses the sectioned template format (see `templates/pretext_questions.txt`).
    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let mut templates: BTreeMap<TransformFamily, String> = BTreeMap::new();
        let mut current: Option<(TransformFamily, Vec<&str>)> = None;

        let finish = |entry: Option<(TransformFamily, Vec<&str>)>,
                          templates: &mut BTreeMap<TransformFamily, String>|
         -> Result<(), TemplateError> {
            if let Some((family, lines)) = entry {
                let body = lines.join("\n").trim().to_string();
                if templates.insert(family, body).is_some() {
                    return Err(TemplateError::Duplicate(family));
                }
            }
            Ok(())
        };

        for (idx, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.starts_with('#') {
                continue;
            }
            if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let family =
                    TransformFamily::from_name(name).ok_or_else(|| TemplateError::UnknownSection {
                        line: idx + 1,
                        name: name.to_string(),
                    })?;
                finish(current.take(), &mut templates)?;
                current = Some((family, Vec::new()));
                continue;
            }
            match current.as_mut() {
                Some((_, lines)) => lines.push(line),
                None if trimmed.is_empty() => {}
                None => return Err(TemplateError::TextOutsideSection { line: idx + 1 }),
            }
        }
        finish(current.take(), &mut templates)?;

        for family in TransformFamily::ALL {
            let body = templates.get(&family).ok_or(TemplateError::Missing(family))?;
            if !body.contains(OPTIONS_PLACEHOLDER) {
                return Err(TemplateError::NoPlaceholder(family));
            }
        }
        Ok(Self { templates })
    }

    pub fn template(&self, family: TransformFamily) -> &str {
        &self.templates[&family]
    }
}

impl Default for PretextTemplates {
    fn default() -> Self {
        Self::bundled().clone()
    }
}

impl PretextTemplates {
    /// The templates shipped with the crate, parsed once.
    pub fn bundled() -> &'static PretextTemplates {
        static BUNDLED: OnceLock<PretextTemplates> = OnceLock::new();
        BUNDLED.get_or_init(|| {
            PretextTemplates::parse(DEFAULT_TEMPLATES).expect("bundled pretext templates are valid")
        })
    }
}

/// Option label for a zero-based index: 0 → 'A'.
pub fn letter_of(index: usize) -> char {
    assert!(index < 26, "option index {index} has no letter");
    (b'A' + index as u8) as char
}

/// Zero-based index for an option letter, case-insensitive.
pub fn index_of_letter(letter: char) -> Option<usize> {
    let upper = letter.to_ascii_uppercase();
    upper
        .is_ascii_uppercase()
        .then(|| (upper as u8 - b'A') as usize)
}

const QUADRANT_NAMES: [&str; 4] = ["top-left", "top-right", "bottom-left", "bottom-right"];

/// Option texts for `family`, in canonical parameter order.
pub fn option_texts(family: TransformFamily) -> Vec<String> {
    match family {
        TransformFamily::ImageRotate | TransformFamily::VideoRotate3D => {
            ["0°", "90°", "180°", "270°"].map(String::from).to_vec()
        }
        TransformFamily::ImageFlip => ["No flip", "Horizontal flip", "Vertical flip"]
            .map(String::from)
            .to_vec(),
        TransformFamily::ImagePuzzle => SWAP_PAIRS
            .iter()
            .map(|&(a, b)| {
                format!(
                    "The {} and {} patches were swapped",
                    QUADRANT_NAMES[a], QUADRANT_NAMES[b]
                )
            })
            .collect(),
        TransformFamily::VideoReverse => [
            "Original direction (played forward)",
            "Reversed (played backward)",
        ]
        .map(String::from)
        .to_vec(),
        TransformFamily::VideoShuffle => SWAP_PAIRS
            .iter()
            .map(|&(a, b)| format!("Clip {} and clip {} were swapped", a + 1, b + 1))
            .collect(),
    }
}

/// A pretext question: prompt text, lettered options and the correct index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PretextMcq {
    pub family: TransformFamily,
    pub question_text: String,
    pub options: Vec<String>,
    pub answer_index: usize,
}

impl PretextMcq {
    pub fn answer_letter(&self) -> char {
        letter_of(self.answer_index)
    }

    /// Checks the option-count and answer-index invariants.
    pub fn is_consistent(&self) -> bool {
        self.options.len() == self.family.cardinality() as usize
            && self.answer_index < self.options.len()
    }
}

pub fn build_mcq(spec: &TransformSpec) -> PretextMcq {
    build_mcq_with(spec, PretextTemplates::bundled())
}

pub fn build_mcq_with(spec: &TransformSpec, templates: &PretextTemplates) -> PretextMcq {
    let family = spec.family();
    let options = option_texts(family);
    let listing = options
        .iter()
        .enumerate()
        .map(|(i, text)| format!("{}. {}", letter_of(i), text))
        .collect::<Vec<_>>()
        .join("\n");
    let question_text = templates
        .template(family)
        .replace(OPTIONS_PLACEHOLDER, &listing);
    PretextMcq {
        family,
        question_text,
        options,
        answer_index: spec.param() as usize,
    }
}

/// Outcome of grading one answer against an MCQ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradeResult {
    pub correct: bool,
    pub extracted_option: Option<char>,
}

/// Finds the first letter in `A..=max_letter` (either case) that stands
/// alone, i.e. is not preceded or followed by another alphanumeric character.
/// The returned letter is uppercase.
pub fn extract_option_letter(text: &str, max_letter: char) -> Option<char> {
    let max = max_letter.to_ascii_uppercase();
    let chars: Vec<char> = text.chars().collect();
    chars.iter().enumerate().find_map(|(i, &c)| {
        let upper = c.to_ascii_uppercase();
        if !upper.is_ascii_uppercase() || upper > max {
            return None;
        }
        let before_ok = i == 0 || !chars[i - 1].is_alphanumeric();
        let after_ok = chars.get(i + 1).is_none_or(|n| !n.is_alphanumeric());
        (before_ok && after_ok).then_some(upper)
    })
}

pub fn grade_option(mcq: &PretextMcq, response_text: &str) -> GradeResult {
    let extracted_option = extract_option_letter(response_text, MAX_PRETEXT_LETTER);
    GradeResult {
        correct: extracted_option == Some(mcq.answer_letter()),
        extracted_option,
    }
}
