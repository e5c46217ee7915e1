//! Big-endian IDX container parsing (the MNIST on-disk format) plus the
//! padded-and-translated canvas augmentation.

use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x00000803;
pub const LABEL_MAGIC: u32 = 0x00000801;

#[derive(Debug, Clone)]
pub struct IdxDataset {
    /// `[N, h, w, 1]` pixels scaled to [0, 1].
    pub images: Vec<f64>,
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u8>,
}

fn read_u32(buf: &[u8], off: usize, path: &Path) -> Result<u32> {
    buf.get(off..off + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated {
            path: path.to_path_buf(),
            detail: format!("header ends at byte {}", buf.len()),
        })
}

/// Loads an image/label file pair. Image files must carry magic
/// `0x00000803` (unsigned bytes, 3 dimensions), label files `0x00000801`;
/// pixel bytes are scaled by 1/255.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<IdxDataset> {
    let ibuf = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let magic = read_u32(&ibuf, 0, images_path)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::BadMagic { path: images_path.to_path_buf(), expected: IMAGE_MAGIC, found: magic });
    }
    let count = read_u32(&ibuf, 4, images_path)? as usize;
    let height = read_u32(&ibuf, 8, images_path)? as usize;
    let width = read_u32(&ibuf, 12, images_path)? as usize;
    let need = 16 + count * height * width;
    if ibuf.len() < need {
        return Err(Error::Truncated {
            path: images_path.to_path_buf(),
            detail: format!("need {need} bytes for {count} images, have {}", ibuf.len()),
        });
    }
    let images: Vec<f64> = ibuf[16..need].iter().map(|&b| b as f64 / 255.0).collect();

    let lbuf = fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let magic = read_u32(&lbuf, 0, labels_path)?;
    if magic != LABEL_MAGIC {
        return Err(Error::BadMagic { path: labels_path.to_path_buf(), expected: LABEL_MAGIC, found: magic });
    }
    let lcount = read_u32(&lbuf, 4, labels_path)? as usize;
    if lbuf.len() < 8 + lcount {
        return Err(Error::Truncated {
            path: labels_path.to_path_buf(),
            detail: format!("need {} bytes for {lcount} labels, have {}", 8 + lcount, lbuf.len()),
        });
    }
    if lcount != count {
        return Err(Error::CountMismatch { images: count, labels: lcount });
    }
    let labels = lbuf[8..8 + lcount].to_vec();
    Ok(IdxDataset { images, count, height, width, labels })
}

pub fn write_idx_images(path: &Path, pixels: &[u8], count: usize, h: usize, w: usize) -> Result<()> {
    assert_eq!(pixels.len(), count * h * w);
    let mut buf = Vec::with_capacity(16 + pixels.len());
    buf.extend(IMAGE_MAGIC.to_be_bytes());
    buf.extend((count as u32).to_be_bytes());
    buf.extend((h as u32).to_be_bytes());
    buf.extend((w as u32).to_be_bytes());
    buf.extend_from_slice(pixels);
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut buf = Vec::with_capacity(8 + labels.len());
    buf.extend(LABEL_MAGIC.to_be_bytes());
    buf.extend((labels.len() as u32).to_be_bytes());
    buf.extend_from_slice(labels);
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Zero-pads `h × w` images onto a `canvas × canvas` field and shifts each by
/// integer offsets drawn uniformly from ±max_shift per axis. The canvas must
/// be large enough that no pixel is lost at the extreme shift.
pub fn pad_translate<R: Rng>(
    images: &[f64],
    count: usize,
    h: usize,
    w: usize,
    canvas: usize,
    max_shift: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let base_y = (canvas - h) / 2;
    let base_x = (canvas - w) / 2;
    if base_y < max_shift || base_x < max_shift {
        return Err(Error::Invalid(format!(
            "canvas {canvas} cannot hold {h}x{w} images shifted by ±{max_shift}"
        )));
    }
    let mut out = vec![0.0; count * canvas * canvas];
    for n in 0..count {
        let dy = rng.gen_range(-(max_shift as i64)..=max_shift as i64);
        let dx = rng.gen_range(-(max_shift as i64)..=max_shift as i64);
        let oy = (base_y as i64 + dy) as usize;
        let ox = (base_x as i64 + dx) as usize;
        for y in 0..h {
            let src = (n * h + y) * w;
            let dst = (n * canvas + oy + y) * canvas + ox;
            out[dst..dst + w].copy_from_slice(&images[src..src + w]);
        }
    }
    Ok(out)
}
