//! Synthetic tasks: a symbolic video, an optional pretext transform and a
//! user question about the original (untransformed) content.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::video::{SymbolicVideo, ALPHABET, GRID};
use crate::pretext::{build_mcq, PretextMcq};
use crate::reward::{RewardMode, TaskDescriptor, TaskKind};
use crate::transform::{sample_transform, Modality, TransformSpec};

/// Number of answer options for every user question; answers are `0..8`.
pub const ANSWER_ARITY: u8 = ALPHABET;

/// Question kinds available at each level.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    /// Symbol lookups only.
    Basic,
    /// Lookups and row counts.
    Counting,
    /// Lookups, row counts and row majorities.
    #[default]
    Full,
}

/// A question about the original video. Coordinates refer to the video
/// before any transform, so a transformed view must be mentally undone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UserQuestion {
    SymbolAt { frame: usize, row: usize, col: usize },
    CountInRow { frame: usize, row: usize, symbol: u8 },
    /// Most frequent symbol in the row; ties go to the smaller symbol.
    MajorityInRow { frame: usize, row: usize },
}

impl UserQuestion {
    pub fn answer(&self, original: &SymbolicVideo) -> u8 {
        match *self {
            UserQuestion::SymbolAt { frame, row, col } => original.symbol(frame, row, col),
            UserQuestion::CountInRow { frame, row, symbol } => {
                original.row(frame, row).iter().filter(|&&s| s == symbol).count() as u8
            }
            UserQuestion::MajorityInRow { frame, row } => {
                let mut counts = [0usize; ALPHABET as usize];
                for &s in original.row(frame, row) {
                    counts[s as usize] += 1;
                }
                let best = counts.iter().copied().max().unwrap_or(0);
                counts.iter().position(|&c| c == best).unwrap_or(0) as u8
            }
        }
    }

    fn hash_into(&self, hasher: &mut Sha256) {
        let (kind, a, b, c) = match *self {
            UserQuestion::SymbolAt { frame, row, col } => (0u8, frame, row, col),
            UserQuestion::CountInRow { frame, row, symbol } => (1, frame, row, symbol as usize),
            UserQuestion::MajorityInRow { frame, row } => (2, frame, row, 0),
        };
        hasher.update([kind]);
        for v in [a, b, c] {
            hasher.update((v as u64).to_le_bytes());
        }
    }
}

impl fmt::Display for UserQuestion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            UserQuestion::SymbolAt { frame, row, col } => write!(
                f,
                "In the original video, which symbol is at frame {frame}, row {row}, column {col}?"
            ),
            UserQuestion::CountInRow { frame, row, symbol } => write!(
                f,
                "In the original video, how many times does symbol {symbol} appear in row {row} of frame {frame}?"
            ),
            UserQuestion::MajorityInRow { frame, row } => write!(
                f,
                "In the original video, which symbol is most frequent in row {row} of frame {frame}?"
            ),
        }
    }
}

/// How a task is posed under a training mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Route {
    /// Pretext question only; one transform token.
    Pretext,
    /// User question only; one answer token.
    Vanilla,
    /// Both questions; a transform token then an answer token.
    Viss,
}

impl Route {
    pub fn reward_mode(self) -> RewardMode {
        match self {
            Route::Pretext => RewardMode::Pretext,
            Route::Vanilla => RewardMode::Vanilla,
            Route::Viss => RewardMode::Viss,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyTask {
    pub modality: Modality,
    pub video: SymbolicVideo,
    /// What the policy sees; equals `video` when `spec` is `None`.
    pub transformed: SymbolicVideo,
    pub spec: Option<TransformSpec>,
    pub pretext: Option<PretextMcq>,
    pub question: UserQuestion,
    pub answer: u8,
}

impl ToyTask {
    /// The same video and question with no transform applied.
    pub fn untransformed(&self) -> ToyTask {
        ToyTask {
            transformed: self.video.clone(),
            spec: None,
            pretext: None,
            ..self.clone()
        }
    }

    pub fn descriptor(&self) -> TaskDescriptor {
        TaskDescriptor::new(TaskKind::Numeric, f64::from(self.answer))
    }

    /// The route used under `mode`. Without a transform there is no pretext
    /// question, so every mode falls back to the vanilla prompt, as at
    /// inference.
    pub fn route(&self, mode: RewardMode) -> Route {
        match (mode, self.spec) {
            (_, None) | (RewardMode::Vanilla, _) => Route::Vanilla,
            (RewardMode::Pretext, Some(_)) => Route::Pretext,
            (RewardMode::Viss, Some(_)) => Route::Viss,
        }
    }

    /// Canonical digest of what the policy observes under `route`: the
    /// visible frames plus whichever questions are asked.
    pub fn observation(&self, route: Route) -> u64 {
        let mut hasher = Sha256::new();
        self.transformed.hash_into(&mut hasher);
        if matches!(route, Route::Pretext | Route::Viss) {
            let family = self.spec.map(|s| s.family().name()).unwrap_or("none");
            hasher.update(b"pretext:");
            hasher.update(family.as_bytes());
        }
        if matches!(route, Route::Vanilla | Route::Viss) {
            hasher.update(b"question:");
            self.question.hash_into(&mut hasher);
        }
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }
}

fn random_question<R: Rng + ?Sized>(rng: &mut R, frames: usize, difficulty: Difficulty) -> UserQuestion {
    let kinds = match difficulty {
        Difficulty::Basic => 1,
        Difficulty::Counting => 2,
        Difficulty::Full => 3,
    };
    let frame = rng.random_range(0..frames);
    let row = rng.random_range(0..GRID);
    match rng.random_range(0..kinds) {
        0 => UserQuestion::SymbolAt {
            frame,
            row,
            col: rng.random_range(0..GRID),
        },
        1 => UserQuestion::CountInRow {
            frame,
            row,
            symbol: rng.random_range(0..ALPHABET),
        },
        _ => UserQuestion::MajorityInRow { frame, row },
    }
}

/// Images are single-frame; videos have 4 to 8 frames.
pub fn make_task(seed: u64, difficulty: Difficulty) -> ToyTask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modality = if rng.random() {
        Modality::Video
    } else {
        Modality::Image
    };
    let frames = match modality {
        Modality::Image => 1,
        Modality::Video => rng.random_range(4..=8),
    };
    let video = SymbolicVideo::random(&mut rng, frames);
    let spec = sample_transform(&mut rng, modality);
    let transformed = video
        .transformed(&spec)
        .expect("sampled spec fits a 4x4 grid with a matching frame count");
    let question = random_question(&mut rng, frames, difficulty);
    let answer = question.answer(&video);
    ToyTask {
        modality,
        video,
        transformed,
        spec: Some(spec),
        pretext: Some(build_mcq(&spec)),
        question,
        answer,
    }
}

/// A fixed set of tasks that training samples from.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskPool {
    tasks: Vec<ToyTask>,
}

impl TaskPool {
    pub const DEFAULT_SIZE: usize = 24;

    pub fn generate(seed: u64, size: usize, difficulty: Difficulty) -> Self {
        let tasks = (0..size as u64)
            .map(|i| make_task(super::derive_seed(&[seed, 0x7461_736b, i]), difficulty))
            .collect();
        Self { tasks }
    }

    pub fn new(tasks: Vec<ToyTask>) -> Self {
        assert!(!tasks.is_empty(), "task pool must not be empty");
        Self { tasks }
    }

    pub fn single(task: ToyTask) -> Self {
        Self { tasks: vec![task] }
    }

    pub fn untransformed(&self) -> Self {
        Self {
            tasks: self.tasks.iter().map(ToyTask::untransformed).collect(),
        }
    }

    pub fn tasks(&self) -> &[ToyTask] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}
