//! Binary netpbm frames: P6 (RGB) and P5 (grey), 8-bit only.

use std::fs;
use std::path::Path;

use super::DatasetError;
use crate::transform::FrameGrid;

pub fn encode_ppm(frame: &FrameGrid) -> Vec<u8> {
    let magic = if frame.channels() == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend_from_slice(frame.data());
    out
}

struct Header<'a> {
    rest: &'a [u8],
}

impl<'a> Header<'a> {
    fn skip_space_and_comments(&mut self) {
        loop {
            match self.rest.first() {
                Some(b) if b.is_ascii_whitespace() => self.rest = &self.rest[1..],
                Some(b'#') => {
                    let end = self.rest.iter().position(|&b| b == b'\n').unwrap_or(self.rest.len());
                    self.rest = &self.rest[end..];
                }
                _ => return,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, String> {
        self.skip_space_and_comments();
        let len = self.rest.iter().take_while(|b| b.is_ascii_digit()).count();
        if len == 0 {
            return Err(format!("expected {what}"));
        }
        let text = std::str::from_utf8(&self.rest[..len]).expect("ascii digits");
        self.rest = &self.rest[len..];
        text.parse().map_err(|_| format!("{what} out of range"))
    }
}

/// Parses one P5/P6 image. A single whitespace byte separates the maxval
/// from the raster, which must be exactly width·height·channels bytes.
pub fn decode_ppm(bytes: &[u8]) -> Result<FrameGrid, String> {
    let channels = match bytes.get(..2) {
        Some(b"P6") => 3,
        Some(b"P5") => 1,
        _ => return Err("missing P5/P6 magic".into()),
    };
    let mut header = Header { rest: &bytes[2..] };
    let width = header.number("width")?;
    let height = header.number("height")?;
    let maxval = header.number("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(format!("unsupported maxval {maxval}; only 8-bit rasters are read"));
    }
    match header.rest.first() {
        Some(b) if b.is_ascii_whitespace() => {}
        _ => return Err("no whitespace after maxval".into()),
    }
    let raster = &header.rest[1..];
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or("dimensions overflow")?;
    if raster.len() != expected {
        return Err(format!("raster has {} bytes, header implies {expected}", raster.len()));
    }
    FrameGrid::new(height, width, channels, raster.to_vec()).map_err(|e| e.to_string())
}

pub fn read_ppm(path: &Path) -> Result<FrameGrid, DatasetError> {
    let bytes = fs::read(path).map_err(|e| DatasetError::io(path, e))?;
    decode_ppm(&bytes).map_err(|reason| DatasetError::MalformedPpm {
        path: path.display().to_string(),
        reason,
    })
}

pub fn write_ppm(path: &Path, frame: &FrameGrid) -> Result<(), DatasetError> {
    fs::write(path, encode_ppm(frame)).map_err(|e| DatasetError::io(path, e))
}
