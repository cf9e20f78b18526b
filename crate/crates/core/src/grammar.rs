//! Tag-structured response grammar and the format reward.
//!
//! ```text
//! response  ::= ws think ws [transform ws] answer ws
//! think     ::= "<think>" text "</think>"
//! transform ::= "<transform>" text "</transform>"     (viss mode only)
//! answer    ::= "<answer>" text "</answer>"
//! text      ::= any characters containing no tag token, non-blank after trimming
//! ws        ::= Unicode whitespace*
//! ```
//!
//! Tags are case-sensitive and carry no attributes. Each tag pair occurs
//! exactly once.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    /// `<think>` then `<answer>`; a `<transform>` block is rejected.
    Vanilla,
    /// `<think>`, `<transform>`, `<answer>` in that order.
    Viss,
}

/// The three named blocks of a response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Block {
    Think,
    Transform,
    Answer,
}

impl Block {
    pub const fn name(self) -> &'static str {
        match self {
            Block::Think => "think",
            Block::Transform => "transform",
            Block::Answer => "answer",
        }
    }

    const fn open(self) -> &'static str {
        match self {
            Block::Think => "<think>",
            Block::Transform => "<transform>",
            Block::Answer => "<answer>",
        }
    }

    const fn close(self) -> &'static str {
        match self {
            Block::Think => "</think>",
            Block::Transform => "</transform>",
            Block::Answer => "</answer>",
        }
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// First grammar violation found in a response.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("missing tag {tag}")]
    MissingTag { tag: &'static str },
    #[error("tag {tag} occurs more than once")]
    DuplicateTag { tag: &'static str },
    #[error("expected {expected} but found {found}")]
    WrongOrder {
        expected: &'static str,
        found: &'static str,
    },
    #[error("text outside tag blocks at byte {offset}")]
    StrayText { offset: usize },
    #[error("{block} block is empty")]
    EmptyBlock { block: &'static str },
}

impl FormatError {
    /// Short machine-readable tag used in diagnostics.
    pub const fn kind(&self) -> &'static str {
        match self {
            FormatError::MissingTag { .. } => "missing_tag",
            FormatError::DuplicateTag { .. } => "duplicate_tag",
            FormatError::WrongOrder { .. } => "wrong_order",
            FormatError::StrayText { .. } => "stray_text",
            FormatError::EmptyBlock { .. } => "empty_block",
        }
    }
}

/// A format-compliant response split into its blocks, inner text trimmed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedResponse {
    pub think: String,
    pub transform_answer: Option<String>,
    pub user_answer: String,
}

impl TaggedResponse {
    /// Canonical tag form with no whitespace between blocks.
    pub fn render(&self) -> String {
        let mut out = format!("<think>{}</think>", self.think);
        if let Some(t) = &self.transform_answer {
            out.push_str(&format!("<transform>{t}</transform>"));
        }
        out.push_str(&format!("<answer>{}</answer>", self.user_answer));
        out
    }

    pub fn mode(&self) -> ParseMode {
        if self.transform_answer.is_some() {
            ParseMode::Viss
        } else {
            ParseMode::Vanilla
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct TagToken {
    offset: usize,
    len: usize,
    text: &'static str,
}

fn scan_tags(raw: &str) -> Vec<TagToken> {
    let all = [Block::Think, Block::Transform, Block::Answer]
        .into_iter()
        .flat_map(|b| [b.open(), b.close()]);
    let mut tokens: Vec<TagToken> = all
        .flat_map(|text| {
            raw.match_indices(text).map(move |(offset, _)| TagToken {
                offset,
                len: text.len(),
                text,
            })
        })
        .collect();
    tokens.sort_by_key(|t| t.offset);
    tokens
}

fn first_non_whitespace(raw: &str, start: usize, end: usize) -> Option<usize> {
    raw[start..end]
        .char_indices()
        .find(|(_, c)| !c.is_whitespace())
        .map(|(i, _)| start + i)
}

pub fn parse_tagged(raw: &str, mode: ParseMode) -> Result<TaggedResponse, FormatError> {
    let blocks: &[Block] = match mode {
        ParseMode::Vanilla => &[Block::Think, Block::Answer],
        ParseMode::Viss => &[Block::Think, Block::Transform, Block::Answer],
    };
    let expected: Vec<&'static str> = blocks.iter().flat_map(|b| [b.open(), b.close()]).collect();
    let tokens = scan_tags(raw);

    if mode == ParseMode::Vanilla {
        if let Some(t) = tokens.iter().find(|t| t.text.contains("transform")) {
            return Err(FormatError::StrayText { offset: t.offset });
        }
    }

    // Duplicates, reported at the position of the second occurrence.
    let mut seen: Vec<&'static str> = Vec::new();
    for t in &tokens {
        if seen.contains(&t.text) {
            return Err(FormatError::DuplicateTag { tag: t.text });
        }
        seen.push(t.text);
    }

    if let Some(missing) = expected.iter().find(|tag| !seen.contains(tag)) {
        return Err(FormatError::MissingTag { tag: missing });
    }

    if let Some((want, got)) = expected
        .iter()
        .zip(tokens.iter())
        .find(|(want, got)| **want != got.text)
    {
        return Err(FormatError::WrongOrder {
            expected: want,
            found: got.text,
        });
    }

    // Tokens now alternate open/close for each block, in expected order.
    let mut cursor = 0;
    let mut inner = Vec::with_capacity(blocks.len());
    for pair in tokens.chunks_exact(2) {
        let (open, close) = (pair[0], pair[1]);
        if let Some(offset) = first_non_whitespace(raw, cursor, open.offset) {
            return Err(FormatError::StrayText { offset });
        }
        inner.push(raw[open.offset + open.len..close.offset].trim());
        cursor = close.offset + close.len;
    }
    if let Some(offset) = first_non_whitespace(raw, cursor, raw.len()) {
        return Err(FormatError::StrayText { offset });
    }

    if let Some((block, _)) = blocks.iter().zip(&inner).find(|(_, text)| text.is_empty()) {
        return Err(FormatError::EmptyBlock { block: block.name() });
    }

    Ok(match mode {
        ParseMode::Vanilla => TaggedResponse {
            think: inner[0].to_string(),
            transform_answer: None,
            user_answer: inner[1].to_string(),
        },
        ParseMode::Viss => TaggedResponse {
            think: inner[0].to_string(),
            transform_answer: Some(inner[1].to_string()),
            user_answer: inner[2].to_string(),
        },
    })
}

/// `scale` when `raw` parses under `mode`, otherwise 0.
pub fn format_reward(raw: &str, mode: ParseMode, scale: f64) -> f64 {
    if parse_tagged(raw, mode).is_ok() {
        scale
    } else {
        0.0
    }
}
