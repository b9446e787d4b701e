//! IDX (MNIST wire format) image and label files.
//!
//! Images: `0x00000803`, then big-endian u32 count, rows, cols, then
//! `count * rows * cols` unsigned bytes. Labels: `0x00000801`, u32 count,
//! then `count` bytes.

use std::fs;
use std::path::Path;

use crate::error::{Result, SynthError};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Grayscale source digit, pixels in `[0, 255]`, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceImage {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
    pub label: u8,
    pub id: String,
}

impl SourceImage {
    #[inline]
    pub fn at(&self, r: usize, c: usize) -> u8 {
        self.pixels[r * self.cols + c]
    }
}

fn be_u32(buf: &[u8], at: usize, path: &str) -> Result<u32> {
    buf.get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| SynthError::Truncated {
            path: path.to_string(),
            missing: at + 4 - buf.len(),
        })
}

/// Parsed image file: `(rows, cols, images)`.
pub fn parse_images(buf: &[u8], path: &str) -> Result<(usize, usize, Vec<Vec<u8>>)> {
    let magic = be_u32(buf, 0, path)?;
    if magic != IMAGES_MAGIC {
        return Err(SynthError::BadMagic {
            path: path.to_string(),
            expected: IMAGES_MAGIC,
            found: magic,
        });
    }
    let n = be_u32(buf, 4, path)? as usize;
    let rows = be_u32(buf, 8, path)? as usize;
    let cols = be_u32(buf, 12, path)? as usize;
    let size = rows * cols;
    let need = 16 + n * size;
    if buf.len() < need {
        return Err(SynthError::Truncated {
            path: path.to_string(),
            missing: need - buf.len(),
        });
    }
    let images = (0..n).map(|i| buf[16 + i * size..16 + (i + 1) * size].to_vec()).collect();
    Ok((rows, cols, images))
}

pub fn parse_labels(buf: &[u8], path: &str) -> Result<Vec<u8>> {
    let magic = be_u32(buf, 0, path)?;
    if magic != LABELS_MAGIC {
        return Err(SynthError::BadMagic {
            path: path.to_string(),
            expected: LABELS_MAGIC,
            found: magic,
        });
    }
    let n = be_u32(buf, 4, path)? as usize;
    if buf.len() < 8 + n {
        return Err(SynthError::Truncated {
            path: path.to_string(),
            missing: 8 + n - buf.len(),
        });
    }
    Ok(buf[8..8 + n].to_vec())
}

/// Pairs an image file with its label file.
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Vec<SourceImage>> {
    let (ip, lp) = (images.as_ref(), labels.as_ref());
    let ipath = ip.display().to_string();
    let (rows, cols, imgs) = parse_images(&fs::read(ip).map_err(SynthError::file(ip))?, &ipath)?;
    let labs = parse_labels(&fs::read(lp).map_err(SynthError::file(lp))?, &lp.display().to_string())?;
    if imgs.len() != labs.len() {
        return Err(SynthError::CountMismatch {
            images: imgs.len(),
            labels: labs.len(),
        });
    }
    let stem = ip.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(imgs
        .into_iter()
        .zip(labs)
        .enumerate()
        .map(|(i, (pixels, label))| SourceImage {
            rows,
            cols,
            pixels,
            label,
            id: format!("{stem}#{i}"),
        })
        .collect())
}

pub fn encode_images(rows: usize, cols: usize, images: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for v in [IMAGES_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        debug_assert_eq!(img.len(), rows * cols);
        out.extend_from_slice(img);
    }
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn write_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>, sources: &[SourceImage]) -> Result<()> {
    let (rows, cols) = sources.first().map(|s| (s.rows, s.cols)).unwrap_or((28, 28));
    if sources.iter().any(|s| s.rows != rows || s.cols != cols) {
        return Err(SynthError::Invalid("IDX files need uniform image dimensions".into()));
    }
    let imgs: Vec<Vec<u8>> = sources.iter().map(|s| s.pixels.clone()).collect();
    let labels: Vec<u8> = sources.iter().map(|s| s.label).collect();
    fs::write(images_path, encode_images(rows, cols, &imgs))?;
    fs::write(labels_path, encode_labels(&labels))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
        // Four hand-built 28x30 images whose pixels encode their index.
        let rows = 28;
        let cols = 30;
        let imgs: Vec<Vec<u8>> = (0..4u8).map(|k| (0..rows * cols).map(|p| (p as u8).wrapping_mul(k + 1)).collect()).collect();
        let ip = dir.join("imgs-idx3-ubyte");
        let lp = dir.join("labels-idx1-ubyte");
        fs::write(&ip, encode_images(rows, cols, &imgs)).unwrap();
        fs::write(&lp, encode_labels(&[3, 1, 4, 1])).unwrap();
        (ip, lp)
    }

    #[test]
    fn reads_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = fixture(dir.path());
        let src = load_idx(&ip, &lp).unwrap();
        assert_eq!(src.len(), 4);
        assert!(src.iter().all(|s| s.rows == 28 && s.cols == 30));
        assert_eq!(src.iter().map(|s| s.label).collect::<Vec<_>>(), vec![3, 1, 4, 1]);
        assert_eq!(src[2].at(0, 5), 15);
        assert_eq!(src[1].id, "imgs-idx3-ubyte#1");
    }

    #[test]
    fn empty_payload() {
        let (r, c, imgs) = parse_images(&encode_images(28, 28, &[]), "x").unwrap();
        assert_eq!((r, c, imgs.len()), (28, 28, 0));
        assert!(parse_labels(&encode_labels(&[]), "y").unwrap().is_empty());
    }

    #[test]
    fn corrupted_magic_names_expected_value() {
        let mut buf = encode_images(28, 28, &[vec![0; 784]]);
        buf[3] = 0x01;
        let err = parse_images(&buf, "imgs").unwrap_err();
        assert!(matches!(err, SynthError::BadMagic { expected: IMAGES_MAGIC, found: 0x0801, .. }));
        assert!(err.to_string().contains("0x00000803"));
    }

    #[test]
    fn truncation_and_count_mismatch() {
        let buf = encode_images(28, 28, &[vec![0; 784], vec![0; 784]]);
        assert!(matches!(parse_images(&buf[..buf.len() - 10], "i"), Err(SynthError::Truncated { missing: 10, .. })));
        assert!(matches!(parse_labels(&[0, 0, 8], "l"), Err(SynthError::Truncated { .. })));

        let dir = tempfile::tempdir().unwrap();
        let (ip, _) = fixture(dir.path());
        let lp = dir.path().join("short");
        fs::write(&lp, encode_labels(&[1, 2, 3])).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(SynthError::CountMismatch { images: 4, labels: 3 })));
    }
}
