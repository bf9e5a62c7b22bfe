//! Binary 8-bit grayscale PGM (P5) reading and writing.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::encoders::ImageSlice;

use super::DataError;

/// Read a binary P5 PGM file with a maxval of 255. Header whitespace and
/// `#` comments are accepted.
pub fn read(path: &Path) -> Result<ImageSlice, DataError> {
    let bytes = fs::read(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse(&bytes).map_err(|detail| DataError::BadImage {
        path: path.display().to_string(),
        detail,
    })
}

fn parse(bytes: &[u8]) -> Result<ImageSlice, String> {
    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<Vec<u8>, String> {
        // Skip whitespace and comments.
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        Ok(bytes[start..pos].to_vec())
    };
    let magic = token(bytes)?;
    if magic != b"P5" {
        return Err(format!("expected P5 magic, got {:?}", String::from_utf8_lossy(&magic)));
    }
    let width: usize = String::from_utf8_lossy(&token(bytes)?)
        .parse()
        .map_err(|_| "bad width".to_string())?;
    let height: usize = String::from_utf8_lossy(&token(bytes)?)
        .parse()
        .map_err(|_| "bad height".to_string())?;
    let maxval: usize = String::from_utf8_lossy(&token(bytes)?)
        .parse()
        .map_err(|_| "bad maxval".to_string())?;
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval} (need 255)"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let expected = width * height;
    let raster = bytes
        .get(pos..pos + expected)
        .ok_or_else(|| format!("raster truncated: need {expected} bytes"))?;
    ImageSlice::new(width, height, raster.to_vec()).map_err(|e| e.to_string())
}

/// Write a binary P5 PGM file. The header layout is fixed so identical
/// slices produce byte-identical files.
pub fn write(path: &Path, image: &ImageSlice) -> Result<(), DataError> {
    let io_err = |e: std::io::Error| DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut file = fs::File::create(path).map_err(io_err)?;
    write!(file, "P5\n{} {}\n255\n", image.width(), image.height()).map_err(io_err)?;
    file.write_all(image.pixels()).map_err(io_err)?;
    Ok(())
}
