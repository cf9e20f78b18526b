//! Symbol-grid "videos" small enough to enumerate.

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::transform::{apply_transform, FrameGrid, TransformError, TransformSpec, VideoTensor};

/// Side length of every symbol grid.
pub const GRID: usize = 4;
/// Symbols are `0..ALPHABET`.
pub const ALPHABET: u8 = 8;

/// Frames of `GRID`×`GRID` symbols, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SymbolicVideo {
    frames: Vec<[u8; GRID * GRID]>,
}

impl SymbolicVideo {
    pub fn new(frames: Vec<[u8; GRID * GRID]>) -> Result<Self, TransformError> {
        if frames.is_empty() {
            return Err(TransformError::ShapeMismatch("video has no frames".into()));
        }
        if let Some(bad) = frames.iter().flatten().find(|&&s| s >= ALPHABET) {
            return Err(TransformError::InvalidFrame(format!(
                "symbol {bad} outside alphabet of {ALPHABET}"
            )));
        }
        Ok(Self { frames })
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, frame_count: usize) -> Self {
        let frames = (0..frame_count.max(1))
            .map(|_| std::array::from_fn(|_| rng.random_range(0..ALPHABET)))
            .collect();
        Self { frames }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn symbol(&self, frame: usize, row: usize, col: usize) -> u8 {
        self.frames[frame][row * GRID + col]
    }

    pub fn row(&self, frame: usize, row: usize) -> &[u8] {
        &self.frames[frame][row * GRID..(row + 1) * GRID]
    }

    /// One-channel rendering; the pixel value is the symbol.
    pub fn render(&self) -> VideoTensor {
        let frames = self
            .frames
            .iter()
            .map(|f| FrameGrid::new(GRID, GRID, 1, f.to_vec()).expect("fixed grid shape"))
            .collect();
        VideoTensor::new(frames).expect("frames share a shape")
    }

    pub fn from_tensor(tensor: &VideoTensor) -> Result<Self, TransformError> {
        if tensor.height() != GRID || tensor.width() != GRID || tensor.channels() != 1 {
            return Err(TransformError::ShapeMismatch(format!(
                "expected {GRID}x{GRID}x1 frames, got {}x{}x{}",
                tensor.height(),
                tensor.width(),
                tensor.channels()
            )));
        }
        let frames = tensor
            .frames()
            .iter()
            .map(|f| f.data().try_into().expect("checked frame size"))
            .collect();
        Self::new(frames)
    }

    /// Applies a pretext transform through the pixel pipeline.
    pub fn transformed(&self, spec: &TransformSpec) -> Result<Self, TransformError> {
        Self::from_tensor(&apply_transform(&self.render(), spec)?)
    }

    pub(crate) fn hash_into(&self, hasher: &mut Sha256) {
        hasher.update((self.frames.len() as u64).to_le_bytes());
        for frame in &self.frames {
            hasher.update(frame);
        }
    }
}
