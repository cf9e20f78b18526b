//! Builds transform-tagged SFT/RL records from frame files.
//!
//! Each manifest sample gets one seeded transform. Transformed frames are
//! written to `<out>/frames/<id>/NNNN.ppm` and one JSON line per sample goes
//! to `<out>/records.jsonl`, in manifest order.

mod ppm;

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ppm::{decode_ppm, encode_ppm, read_ppm, write_ppm};

use crate::derive_seed;
use crate::grammar::{parse_tagged, ParseMode, TaggedResponse};
use crate::pretext::{build_mcq, letter_of, option_texts, PretextMcq};
use crate::reward::{GroundTruth, TaskDescriptor, TaskKind};
use crate::transform::{
    apply_transform, invert_transform, sample_transform, Modality, TransformError, TransformSpec,
    VideoTensor,
};

/// File name of the record stream inside the output directory.
pub const RECORDS_FILE: &str = "records.jsonl";
const MAX_RESAMPLES: usize = 64;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    IoError {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed PPM: {reason}")]
    MalformedPpm { path: String, reason: String },
    #[error("{path}: {reason}")]
    InconsistentShape { path: String, reason: String },
    #[error("manifest line {line}: {reason}")]
    ManifestError { line: usize, reason: String },
    #[error("invalid record {id}: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error(transparent)]
    Transform(#[from] TransformError),
}

impl DatasetError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        DatasetError::IoError {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuildMode {
    /// Records carry a target response for supervised fine-tuning.
    Sft,
    /// Records carry prompts and labels only.
    Rl,
}

/// Digits in the file stem, used to order frames numerically.
fn frame_number(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_string_lossy();
    let digits: String = stem.chars().filter(char::is_ascii_digit).collect();
    digits.parse().ok()
}

fn is_frame_file(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("ppm") || e.eq_ignore_ascii_case("pgm"))
}

/// Frame files of a sample: the file itself, or every `.ppm`/`.pgm` in the
/// directory ordered by the number in the file name (name breaks ties).
pub fn frame_paths(path: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = fs::read_dir(path).map_err(|e| DatasetError::io(path, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| DatasetError::io(path, e))?;
        if is_frame_file(&entry.path()) {
            files.push(entry.path());
        }
    }
    files.sort_by(|a, b| {
        (frame_number(a).is_none(), frame_number(a), a.file_name())
            .cmp(&(frame_number(b).is_none(), frame_number(b), b.file_name()))
    });
    if files.is_empty() {
        return Err(DatasetError::InconsistentShape {
            path: path.display().to_string(),
            reason: "no frame files".into(),
        });
    }
    Ok(files)
}

/// Loads a frame file or directory. Images must be a single frame.
pub fn ingest_frames(path: &Path, modality: Modality) -> Result<VideoTensor, DatasetError> {
    let paths = frame_paths(path)?;
    if modality == Modality::Image && paths.len() != 1 {
        return Err(DatasetError::InconsistentShape {
            path: path.display().to_string(),
            reason: format!("image sample has {} frames", paths.len()),
        });
    }
    let frames = paths.iter().map(|p| read_ppm(p)).collect::<Result<Vec<_>, _>>()?;
    let first = (frames[0].height(), frames[0].width(), frames[0].channels());
    if let Some((i, f)) = frames
        .iter()
        .enumerate()
        .find(|(_, f)| (f.height(), f.width(), f.channels()) != first)
    {
        return Err(DatasetError::InconsistentShape {
            path: paths[i].display().to_string(),
            reason: format!(
                "frame is {}x{}x{}, first frame is {}x{}x{}",
                f.height(),
                f.width(),
                f.channels(),
                first.0,
                first.1,
                first.2
            ),
        });
    }
    Ok(VideoTensor::new(frames)?)
}

/// One input sample. `frames` is relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub modality: Modality,
    pub frames: String,
    pub question: String,
    pub answer: GroundTruth,
    pub task_kind: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    /// Externally written reasoning used as the think block of SFT targets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, DatasetError> {
    let file = fs::File::open(path).map_err(|e| DatasetError::io(path, e))?;
    let mut entries = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| DatasetError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| DatasetError::ManifestError { line: i + 1, reason };
        let entry: ManifestEntry = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if entry.id.is_empty()
            || entry.id.starts_with('.')
            || !entry.id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            return Err(bad(format!("id {:?} is not a plain file name", entry.id)));
        }
        if !ids.insert(entry.id.clone()) {
            return Err(bad(format!("duplicate id {:?}", entry.id)));
        }
        descriptor(&entry).validate().map_err(|e| bad(e.to_string()))?;
        entries.push(entry);
    }
    Ok(entries)
}

fn descriptor(entry: &ManifestEntry) -> TaskDescriptor {
    TaskDescriptor {
        kind: entry.task_kind,
        ground_truth: entry.answer.clone(),
        options: entry.options.clone(),
    }
}

/// One emitted JSON line. Field order is the serialization order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub modality: Modality,
    /// Transformed frames, relative to the output directory.
    pub frame_refs: Vec<String>,
    /// Original frames, relative to the manifest's directory.
    pub source_frames: Vec<String>,
    pub transform: TransformSpec,
    pub pretext_mcq: PretextMcq,
    pub user_question: String,
    pub user_answer: GroundTruth,
    pub task_kind: TaskKind,
    pub options: Option<Vec<String>>,
    /// Pretext question, then the user question, then the format instruction.
    pub prompt: String,
    /// Canonical viss-mode response; present in SFT records only.
    pub target_response: Option<String>,
}

impl SampleRecord {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |reason: &str| DatasetError::InvalidRecord {
            id: self.id.clone(),
            reason: reason.into(),
        };
        if self.frame_refs.is_empty() || self.frame_refs.len() != self.source_frames.len() {
            return Err(bad("frame lists are empty or differ in length"));
        }
        if self.pretext_mcq.family != self.transform.family()
            || self.pretext_mcq.answer_index != self.transform.param() as usize
            || !self.pretext_mcq.is_consistent()
        {
            return Err(bad("pretext question does not match the transform"));
        }
        if self.transform.modality() != self.modality {
            return Err(bad("transform family does not fit the modality"));
        }
        if let Some(target) = &self.target_response {
            parse_tagged(target, ParseMode::Viss).map_err(|e| bad(&format!("target response: {e}")))?;
        }
        Ok(())
    }
}

const FORMAT_INSTRUCTION: &str = "Reason inside <think></think>, give the letter of the applied transformation inside <transform></transform>, then give the final answer inside <answer></answer>.";

fn build_prompt(mcq: &PretextMcq, entry: &ManifestEntry) -> String {
    let mut prompt = format!("{}\n\nQuestion: {}\n", mcq.question_text, entry.question);
    if let Some(options) = &entry.options {
        for (i, o) in options.iter().enumerate() {
            prompt.push_str(&format!("{}. {o}\n", letter_of(i)));
        }
    }
    prompt.push('\n');
    prompt.push_str(FORMAT_INSTRUCTION);
    prompt
}

fn target_response(spec: &TransformSpec, entry: &ManifestEntry) -> String {
    let applied = &option_texts(spec.family())[spec.param() as usize];
    let think = match &entry.rationale {
        Some(r) if !r.trim().is_empty() => r.trim().to_string(),
        _ => format!(
            "The input was altered: {}. Undoing that, I answer the question about the original content.",
            applied.to_lowercase()
        ),
    };
    let answer = match entry.task_kind {
        TaskKind::Mcq => descriptor(entry)
            .mcq_answer_letter()
            .map(String::from)
            .unwrap_or_else(|_| entry.answer.as_text()),
        _ => entry.answer.as_text(),
    };
    TaggedResponse {
        think,
        transform_answer: Some(letter_of(spec.param() as usize).to_string()),
        user_answer: if answer.trim().is_empty() { "none".into() } else { answer },
    }
    .render()
}

/// Draws a transform that fits the tensor, redrawing when the shape rules
/// out the draw (Shuffle on fewer than four frames, Puzzle on odd sides).
fn sample_fitting(seed: u64, input: &VideoTensor, modality: Modality) -> Result<TransformSpec, TransformError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last = None;
    for _ in 0..MAX_RESAMPLES {
        let spec = sample_transform(&mut rng, modality);
        match spec.check_applicable(input) {
            Ok(()) => return Ok(spec),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one draw"))
}

fn frame_file(index: usize) -> String {
    format!("{index:04}.ppm")
}

fn build_one(
    index: usize,
    entry: &ManifestEntry,
    base: &Path,
    seed: u64,
    mode: BuildMode,
    out: &Path,
) -> Result<SampleRecord, DatasetError> {
    let source = base.join(&entry.frames);
    let sources = frame_paths(&source)?;
    let input = ingest_frames(&source, entry.modality)?;
    let spec = sample_fitting(derive_seed(&[seed, index as u64]), &input, entry.modality)?;
    let output = apply_transform(&input, &spec)?;

    let rel_dir = Path::new("frames").join(&entry.id);
    let dir = out.join(&rel_dir);
    fs::create_dir_all(&dir).map_err(|e| DatasetError::io(&dir, e))?;
    let mut frame_refs = Vec::with_capacity(output.len());
    for (i, frame) in output.frames().iter().enumerate() {
        write_ppm(&dir.join(frame_file(i)), frame)?;
        frame_refs.push(rel_dir.join(frame_file(i)).to_string_lossy().replace('\\', "/"));
    }

    let mcq = build_mcq(&spec);
    let record = SampleRecord {
        id: entry.id.clone(),
        modality: entry.modality,
        frame_refs,
        source_frames: sources
            .iter()
            .map(|p| p.strip_prefix(base).unwrap_or(p).to_string_lossy().replace('\\', "/"))
            .collect(),
        transform: spec,
        prompt: build_prompt(&mcq, entry),
        pretext_mcq: mcq,
        user_question: entry.question.clone(),
        user_answer: entry.answer.clone(),
        task_kind: entry.task_kind,
        options: entry.options.clone(),
        target_response: (mode == BuildMode::Sft).then(|| target_response(&spec, entry)),
    };
    record.validate()?;
    Ok(record)
}

/// Builds the dataset and returns the number of records. Identical
/// (manifest, seed, mode) inputs produce byte-identical `records.jsonl`.
pub fn build_dataset(manifest: &Path, seed: u64, mode: BuildMode, out: &Path) -> Result<usize, DatasetError> {
    let entries = read_manifest(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(out).map_err(|e| DatasetError::io(out, e))?;
    let records = entries
        .par_iter()
        .enumerate()
        .map(|(i, e)| build_one(i, e, base, seed, mode, out))
        .collect::<Result<Vec<_>, _>>()?;

    let path = out.join(RECORDS_FILE);
    let file = fs::File::create(&path).map_err(|e| DatasetError::io(&path, e))?;
    let mut writer = BufWriter::new(file);
    for record in &records {
        let line = serde_json::to_string(record).expect("records serialize");
        writeln!(writer, "{line}").map_err(|e| DatasetError::io(&path, e))?;
    }
    writer.flush().map_err(|e| DatasetError::io(&path, e))?;
    drop(writer);

    let back = read_records(&path)?;
    if back != records {
        return Err(DatasetError::InvalidRecord {
            id: "*".into(),
            reason: "read-back differs from the written records".into(),
        });
    }
    Ok(records.len())
}

/// Reads and validates a record stream.
pub fn read_records(path: &Path) -> Result<Vec<SampleRecord>, DatasetError> {
    let file = fs::File::open(path).map_err(|e| DatasetError::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| DatasetError::io(path, e))?;
        let record: SampleRecord = serde_json::from_str(&line).map_err(|e| DatasetError::InvalidRecord {
            id: format!("line {}", i + 1),
            reason: e.to_string(),
        })?;
        record.validate()?;
        records.push(record);
    }
    Ok(records)
}

/// Loads a record's transformed frames from `out`, undoes the transform and
/// compares with the source frames under `manifest_dir` bit for bit.
pub fn verify_record_frames(out: &Path, manifest_dir: &Path, record: &SampleRecord) -> Result<bool, DatasetError> {
    let load = |paths: Vec<PathBuf>| -> Result<VideoTensor, DatasetError> {
        let frames = paths.iter().map(|p| read_ppm(p)).collect::<Result<Vec<_>, _>>()?;
        Ok(VideoTensor::new(frames)?)
    };
    let stored = load(record.frame_refs.iter().map(|r| out.join(r)).collect())?;
    let source = load(record.source_frames.iter().map(|r| manifest_dir.join(r)).collect())?;
    Ok(apply_transform(&stored, &invert_transform(&record.transform))? == source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::FrameGrid;

    fn frame(h: usize, w: usize, fill: u8) -> FrameGrid {
        FrameGrid::new(h, w, 3, (0..h * w * 3).map(|i| fill.wrapping_add(i as u8)).collect()).unwrap()
    }

    #[test]
    fn numeric_frame_order() {
        let dir = tempfile::tempdir().unwrap();
        for (name, fill) in [("f10.ppm", 10), ("f2.ppm", 2), ("f1.ppm", 1), ("notes.txt", 0)] {
            if name.ends_with(".ppm") {
                write_ppm(&dir.path().join(name), &frame(2, 2, fill)).unwrap();
            } else {
                fs::write(dir.path().join(name), "x").unwrap();
            }
        }
        let video = ingest_frames(dir.path(), Modality::Video).unwrap();
        assert_eq!(video.len(), 3);
        let firsts: Vec<u8> = video.frames().iter().map(|f| f.data()[0]).collect();
        assert_eq!(firsts, [1, 2, 10]);
    }

    #[test]
    fn ingest_errors() {
        let dir = tempfile::tempdir().unwrap();
        write_ppm(&dir.path().join("0.ppm"), &frame(2, 2, 0)).unwrap();
        write_ppm(&dir.path().join("1.ppm"), &frame(4, 2, 0)).unwrap();
        assert!(matches!(
            ingest_frames(dir.path(), Modality::Video),
            Err(DatasetError::InconsistentShape { .. })
        ));
        assert!(matches!(
            ingest_frames(dir.path(), Modality::Image),
            Err(DatasetError::InconsistentShape { .. })
        ));
        fs::write(dir.path().join("2.ppm"), b"P6\n2 2\n255\nshort").unwrap();
        assert!(matches!(
            ingest_frames(&dir.path().join("2.ppm"), Modality::Image),
            Err(DatasetError::MalformedPpm { .. })
        ));
        assert!(matches!(
            ingest_frames(&dir.path().join("missing"), Modality::Video),
            Err(DatasetError::IoError { .. })
        ));
    }

    #[test]
    fn resampling_avoids_unfit_transforms() {
        let short = VideoTensor::new(vec![frame(3, 3, 0), frame(3, 3, 1)]).unwrap();
        let odd_image = VideoTensor::from_image(frame(3, 5, 0));
        for seed in 0..300 {
            let v = sample_fitting(seed, &short, Modality::Video).unwrap();
            assert_ne!(v.family(), crate::transform::TransformFamily::VideoShuffle);
            let i = sample_fitting(seed, &odd_image, Modality::Image).unwrap();
            assert_ne!(i.family(), crate::transform::TransformFamily::ImagePuzzle);
        }
    }

    #[test]
    fn manifest_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let line = r#"{"id":"a","modality":"image","frames":"a.ppm","question":"q","answer":"B","task_kind":"mcq","options":["x","y"]}"#;
        fs::write(&path, format!("{line}\n{line}\n")).unwrap();
        assert!(matches!(read_manifest(&path), Err(DatasetError::ManifestError { line: 2, .. })));
        fs::write(&path, line.replace("\"a\"", "\"../a\"")).unwrap();
        assert!(matches!(read_manifest(&path), Err(DatasetError::ManifestError { line: 1, .. })));
        fs::write(&path, line.replace("\"B\"", "\"Q\"")).unwrap();
        assert!(read_manifest(&path).is_err());
        fs::write(&path, "").unwrap();
        assert!(read_manifest(&path).unwrap().is_empty());
    }

    #[test]
    fn sft_target_parses_and_carries_the_label() {
        let entry = ManifestEntry {
            id: "s".into(),
            modality: Modality::Video,
            frames: "x".into(),
            question: "How many?".into(),
            answer: GroundTruth::Number(3.0),
            task_kind: TaskKind::Numeric,
            options: None,
            rationale: None,
        };
        let spec = TransformSpec::new(crate::transform::TransformFamily::VideoReverse, 1).unwrap();
        let parsed = parse_tagged(&target_response(&spec, &entry), ParseMode::Viss).unwrap();
        assert_eq!(parsed.transform_answer.as_deref(), Some("B"));
        assert_eq!(parsed.user_answer, "3");
        let prompt = build_prompt(&build_mcq(&spec), &entry);
        assert!(prompt.find("Question:").unwrap() > prompt.find("A.").unwrap());
    }
}
