//! Pretext transformations over frame tensors.
//!
//! Six families are supported, three spatial ones for single images and three
//! spatio-temporal ones for frame sequences. Every transform is a pure
//! permutation of channel values and has a closed-form inverse, so the
//! parameter of the applied transform doubles as a free supervision label.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while constructing tensors or applying transforms.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransformError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid parameter {param} for {family} (family has {cardinality} options)")]
    InvalidParam {
        family: TransformFamily,
        param: u8,
        cardinality: u8,
    },
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
}

/// A single H×W×C grid of 8-bit channel values stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FrameGrid {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<u8>,
}

impl FrameGrid {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<u8>,
    ) -> Result<Self, TransformError> {
        if height < 2 || width < 2 {
            return Err(TransformError::InvalidFrame(format!(
                "frames must be at least 2x2, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(TransformError::InvalidFrame(format!(
                "channel count must be 1 or 3, got {channels}"
            )));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(TransformError::InvalidFrame(format!(
                "data length {} does not match {height}x{width}x{channels} = {expected}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    /// Channel values of the pixel at (`row`, `col`).
    pub fn pixel(&self, row: usize, col: usize) -> &[u8] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    fn same_shape(&self, other: &FrameGrid) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Builds a frame of the given output shape by pulling each output pixel
    /// from the source coordinate returned by `source`.
    fn remap(
        &self,
        out_h: usize,
        out_w: usize,
        source: impl Fn(usize, usize) -> (usize, usize),
    ) -> FrameGrid {
        let ch = self.channels;
        let mut data = Vec::with_capacity(self.data.len());
        for r in 0..out_h {
            for c in 0..out_w {
                let (sr, sc) = source(r, c);
                data.extend_from_slice(self.pixel(sr, sc));
            }
        }
        FrameGrid {
            height: out_h,
            width: out_w,
            channels: ch,
            data,
        }
    }

    /// Rotates clockwise by `quarter_turns` × 90°.
    fn rotate_cw(&self, quarter_turns: u8) -> FrameGrid {
        let (h, w) = (self.height, self.width);
        match quarter_turns % 4 {
            0 => self.clone(),
            1 => self.remap(w, h, |r, c| (h - 1 - c, r)),
            2 => self.remap(h, w, |r, c| (h - 1 - r, w - 1 - c)),
            _ => self.remap(w, h, |r, c| (c, w - 1 - r)),
        }
    }

    fn flip_horizontal(&self) -> FrameGrid {
        let w = self.width;
        self.remap(self.height, w, |r, c| (r, w - 1 - c))
    }

    fn flip_vertical(&self) -> FrameGrid {
        let h = self.height;
        self.remap(h, self.width, |r, c| (h - 1 - r, c))
    }

    /// Exchanges two of the four equal quadrants. Requires even dimensions.
    fn swap_quadrants(&self, a: usize, b: usize) -> FrameGrid {
        let (qh, qw) = (self.height / 2, self.width / 2);
        let origin = |q: usize| ((q / 2) * qh, (q % 2) * qw);
        let quadrant_of = |r: usize, c: usize| (r / qh) * 2 + (c / qw);
        self.remap(self.height, self.width, |r, c| {
            let q = quadrant_of(r, c);
            let partner = if q == a {
                b
            } else if q == b {
                a
            } else {
                return (r, c);
            };
            let (r0, c0) = origin(q);
            let (pr, pc) = origin(partner);
            (pr + (r - r0), pc + (c - c0))
        })
    }
}

/// An ordered, non-empty sequence of equally shaped frames. Images are
/// single-frame tensors.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VideoTensor {
    frames: Vec<FrameGrid>,
}

impl VideoTensor {
    pub fn new(frames: Vec<FrameGrid>) -> Result<Self, TransformError> {
        let first = frames
            .first()
            .ok_or_else(|| TransformError::ShapeMismatch("tensor has no frames".into()))?;
        if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| !f.same_shape(first)) {
            return Err(TransformError::ShapeMismatch(format!(
                "frame {i} is {}x{}x{}, frame 0 is {}x{}x{}",
                f.height, f.width, f.channels, first.height, first.width, first.channels
            )));
        }
        Ok(Self { frames })
    }

    pub fn from_image(frame: FrameGrid) -> Self {
        Self {
            frames: vec![frame],
        }
    }

    pub fn frames(&self) -> &[FrameGrid] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<FrameGrid> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn channels(&self) -> usize {
        self.frames[0].channels
    }

    fn map_frames(&self, f: impl Fn(&FrameGrid) -> FrameGrid) -> VideoTensor {
        VideoTensor {
            frames: self.frames.iter().map(f).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Image,
    Video,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Image => "image",
            Modality::Video => "video",
        })
    }
}

/// The six pretext transformation families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformFamily {
    ImageRotate,
    ImageFlip,
    ImagePuzzle,
    #[serde(rename = "video_rotate_3d")]
    VideoRotate3D,
    VideoReverse,
    VideoShuffle,
}

impl TransformFamily {
    pub const ALL: [TransformFamily; 6] = [
        TransformFamily::ImageRotate,
        TransformFamily::ImageFlip,
        TransformFamily::ImagePuzzle,
        TransformFamily::VideoRotate3D,
        TransformFamily::VideoReverse,
        TransformFamily::VideoShuffle,
    ];

    /// Number of distinct parameter values, i.e. the size of the pretext MCQ.
    pub const fn cardinality(self) -> u8 {
        match self {
            TransformFamily::ImageRotate | TransformFamily::VideoRotate3D => 4,
            TransformFamily::ImageFlip => 3,
            TransformFamily::ImagePuzzle | TransformFamily::VideoShuffle => 6,
            TransformFamily::VideoReverse => 2,
        }
    }

    pub const fn modality(self) -> Modality {
        match self {
            TransformFamily::ImageRotate
            | TransformFamily::ImageFlip
            | TransformFamily::ImagePuzzle => Modality::Image,
            _ => Modality::Video,
        }
    }

    pub fn for_modality(modality: Modality) -> [TransformFamily; 3] {
        match modality {
            Modality::Image => [
                TransformFamily::ImageRotate,
                TransformFamily::ImageFlip,
                TransformFamily::ImagePuzzle,
            ],
            Modality::Video => [
                TransformFamily::VideoRotate3D,
                TransformFamily::VideoReverse,
                TransformFamily::VideoShuffle,
            ],
        }
    }

    /// Stable snake_case name, matching the serialized form.
    pub const fn name(self) -> &'static str {
        match self {
            TransformFamily::ImageRotate => "image_rotate",
            TransformFamily::ImageFlip => "image_flip",
            TransformFamily::ImagePuzzle => "image_puzzle",
            TransformFamily::VideoRotate3D => "video_rotate_3d",
            TransformFamily::VideoReverse => "video_reverse",
            TransformFamily::VideoShuffle => "video_shuffle",
        }
    }

    pub fn from_name(name: &str) -> Option<TransformFamily> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }
}

impl fmt::Display for TransformFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Unordered index pairs over four items, in lexicographic order. Shared by
/// the quadrant puzzle and the clip shuffle.
pub const SWAP_PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// One applied transformation: a family and a parameter below the family's
/// cardinality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct TransformSpec {
    family: TransformFamily,
    param: u8,
}

#[derive(Deserialize)]
struct RawSpec {
    family: TransformFamily,
    param: u8,
}

impl TryFrom<RawSpec> for TransformSpec {
    type Error = TransformError;

    fn try_from(raw: RawSpec) -> Result<Self, Self::Error> {
        TransformSpec::new(raw.family, raw.param)
    }
}

impl TransformSpec {
    pub fn new(family: TransformFamily, param: u8) -> Result<Self, TransformError> {
        let cardinality = family.cardinality();
        if param >= cardinality {
            return Err(TransformError::InvalidParam {
                family,
                param,
                cardinality,
            });
        }
        Ok(Self { family, param })
    }

    pub fn family(&self) -> TransformFamily {
        self.family
    }

    pub fn param(&self) -> u8 {
        self.param
    }

    pub fn modality(&self) -> Modality {
        self.family.modality()
    }

    /// The spec that undoes this one. Rotations map k to (4 - k) mod 4; all
    /// other families are involutions.
    pub fn inverse(&self) -> TransformSpec {
        match self.family {
            TransformFamily::ImageRotate | TransformFamily::VideoRotate3D => TransformSpec {
                family: self.family,
                param: (4 - self.param) % 4,
            },
            _ => *self,
        }
    }

    /// Whether this spec leaves every tensor unchanged.
    pub fn is_identity(&self) -> bool {
        matches!(
            self.family,
            TransformFamily::ImageRotate
                | TransformFamily::ImageFlip
                | TransformFamily::VideoRotate3D
                | TransformFamily::VideoReverse
        ) && self.param == 0
    }

    /// Checks that the spec can act on `input`.
    pub fn check_applicable(&self, input: &VideoTensor) -> Result<(), TransformError> {
        let t = input.len();
        match self.family.modality() {
            Modality::Image if t != 1 => {
                return Err(TransformError::ShapeMismatch(format!(
                    "{} applies to single-frame tensors, got {t} frames",
                    self.family
                )))
            }
            _ => {}
        }
        match self.family {
            TransformFamily::ImagePuzzle if !input.height().is_multiple_of(2) || !input.width().is_multiple_of(2) => {
                Err(TransformError::ShapeMismatch(format!(
                    "puzzle needs even dimensions, got {}x{}",
                    input.height(),
                    input.width()
                )))
            }
            TransformFamily::VideoShuffle if t < 4 => Err(TransformError::ShapeMismatch(format!(
                "shuffle needs at least 4 frames, got {t}"
            ))),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for TransformSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.family, self.param)
    }
}

/// Start offsets of the four clips plus the end sentinel. Boundary i sits at
/// round(i·T/4), rounding halves up.
pub fn clip_boundaries(frame_count: usize) -> [usize; 5] {
    let b = |i: usize| (2 * i * frame_count + 4) / 8;
    [0, b(1), b(2), b(3), frame_count]
}

fn shuffle_clips(frames: &[FrameGrid], pair: (usize, usize)) -> Vec<FrameGrid> {
    let bounds = clip_boundaries(frames.len());
    let (a, b) = pair;
    let len_a = bounds[a + 1] - bounds[a];
    let len_b = bounds[b + 1] - bounds[b];
    // Clip lengths differ by at most one frame; the surplus frame of the
    // longer clip stays in place so the swap remains an involution.
    let shared = len_a.min(len_b);
    let mut out = frames.to_vec();
    for k in 0..shared {
        out.swap(bounds[a] + k, bounds[b] + k);
    }
    out
}

/// Applies `spec` to `input`, returning a new tensor.
pub fn apply_transform(
    input: &VideoTensor,
    spec: &TransformSpec,
) -> Result<VideoTensor, TransformError> {
    spec.check_applicable(input)?;
    let param = spec.param;
    let out = match spec.family {
        TransformFamily::ImageRotate | TransformFamily::VideoRotate3D => {
            input.map_frames(|f| f.rotate_cw(param))
        }
        TransformFamily::ImageFlip => match param {
            0 => input.clone(),
            1 => input.map_frames(FrameGrid::flip_horizontal),
            _ => input.map_frames(FrameGrid::flip_vertical),
        },
        TransformFamily::ImagePuzzle => {
            let (a, b) = SWAP_PAIRS[param as usize];
            input.map_frames(|f| f.swap_quadrants(a, b))
        }
        TransformFamily::VideoReverse => {
            let mut frames = input.frames.clone();
            if param == 1 {
                frames.reverse();
            }
            VideoTensor { frames }
        }
        TransformFamily::VideoShuffle => VideoTensor {
            frames: shuffle_clips(&input.frames, SWAP_PAIRS[param as usize]),
        },
    };
    Ok(out)
}

pub fn invert_transform(spec: &TransformSpec) -> TransformSpec {
    spec.inverse()
}

/// Draws a family uniformly among the modality's three, then a parameter
/// uniformly over that family's options.
pub fn sample_transform<R: Rng + ?Sized>(rng: &mut R, modality: Modality) -> TransformSpec {
    let families = TransformFamily::for_modality(modality);
    let family = families[rng.random_range(0..families.len())];
    let param = rng.random_range(0..family.cardinality());
    TransformSpec { family, param }
}

/// Seeded source of transform specs.
#[derive(Debug, Clone)]
pub struct TransformSampler {
    rng: ChaCha8Rng,
}

impl TransformSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn sample(&mut self, modality: Modality) -> TransformSpec {
        sample_transform(&mut self.rng, modality)
    }
}
