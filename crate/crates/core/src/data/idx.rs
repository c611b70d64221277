//! IDX container files (the MNIST distribution format).
//!
//! Layout: big-endian `u32` magic (2051 images, 2049 labels), big-endian
//! `u32` item count, for images big-endian `u32` rows and columns, then one
//! unsigned byte per pixel / label.

use std::fs;
use std::path::Path;

use super::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const IMAGES_MAGIC: u32 = 2051;
const LABELS_MAGIC: u32 = 2049;

fn parse_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Idx {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn u32(&mut self, what: &str) -> Result<u32> {
        let chunk = self
            .bytes
            .get(self.pos..self.pos + 4)
            .ok_or_else(|| parse_err(self.path, format!("truncated header reading {what}")))?;
        self.pos += 4;
        Ok(u32::from_be_bytes(chunk.try_into().unwrap()))
    }

    fn payload(&self, len: usize) -> Result<&[u8]> {
        let rest = &self.bytes[self.pos..];
        if rest.len() < len {
            return Err(parse_err(
                self.path,
                format!(
                    "truncated payload: expected {len} bytes, found {}",
                    rest.len()
                ),
            ));
        }
        Ok(&rest[..len])
    }
}

/// Images scaled to `[0,1]`, shape `[1, rows, cols]` each.
fn parse_images(bytes: &[u8], path: &Path) -> Result<Vec<Tensor>> {
    let mut r = Reader {
        bytes,
        pos: 0,
        path,
    };
    let magic = r.u32("magic")?;
    if magic != IMAGES_MAGIC {
        return Err(parse_err(
            path,
            format!("bad image magic {magic} (expected {IMAGES_MAGIC})"),
        ));
    }
    let count = r.u32("count")? as usize;
    let rows = r.u32("rows")? as usize;
    let cols = r.u32("cols")? as usize;
    if rows == 0 || cols == 0 {
        return Err(parse_err(path, "zero image dimension"));
    }
    let payload = r.payload(count * rows * cols)?;
    Ok(payload
        .chunks_exact(rows * cols)
        .map(|px| {
            let data = px.iter().map(|&b| f64::from(b) / 255.0).collect();
            Tensor::new(vec![1, rows, cols], data).expect("dimensions checked")
        })
        .collect())
}

fn parse_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let mut r = Reader {
        bytes,
        pos: 0,
        path,
    };
    let magic = r.u32("magic")?;
    if magic != LABELS_MAGIC {
        return Err(parse_err(
            path,
            format!("bad label magic {magic} (expected {LABELS_MAGIC})"),
        ));
    }
    let count = r.u32("count")? as usize;
    Ok(r.payload(count)?.to_vec())
}

/// Loads an image/label IDX pair. The class count is `max(label) + 1`,
/// but at least `min_classes`.
pub fn load_idx(images_path: &Path, labels_path: &Path, min_classes: usize) -> Result<Dataset> {
    let images = parse_images(&fs::read(images_path)?, images_path)?;
    let labels = parse_labels(&fs::read(labels_path)?, labels_path)?;
    if images.len() != labels.len() {
        return Err(parse_err(
            labels_path,
            format!("{} labels for {} images", labels.len(), images.len()),
        ));
    }
    let classes = labels
        .iter()
        .map(|&l| l as usize + 1)
        .max()
        .unwrap_or(0)
        .max(min_classes)
        .max(1);
    let samples = images
        .into_iter()
        .zip(labels)
        .map(|(image, l)| Sample {
            image,
            label: l as usize,
        })
        .collect();
    Dataset::new(samples, classes)
}

/// IDX image file bytes for `[rows, cols]` images given as bytes.
pub fn encode_idx_images(rows: usize, cols: usize, images: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::new();
    for v in [IMAGES_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        out.extend_from_slice(img);
    }
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    for v in [LABELS_MAGIC, labels.len() as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(labels);
    out
}

/// Halves height and width of `[c, h, w]` images by averaging 2x2 blocks.
pub fn downsample_2x2(data: &Dataset) -> Result<Dataset> {
    let samples = data
        .samples()
        .iter()
        .map(|s| {
            let [c, h, w] = s.image.shape() else {
                return Err(Error::config(format!(
                    "downsampling needs [c,h,w] images, got {:?}",
                    s.image.shape()
                )));
            };
            let (c, h, w) = (*c, *h, *w);
            let (oh, ow) = (h / 2, w / 2);
            let x = s.image.data();
            let mut out = Vec::with_capacity(c * oh * ow);
            for ch in 0..c {
                for y in 0..oh {
                    for xx in 0..ow {
                        let at =
                            |dy: usize, dx: usize| x[ch * h * w + (2 * y + dy) * w + 2 * xx + dx];
                        out.push((at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1)) / 4.0);
                    }
                }
            }
            Ok(Sample {
                image: Tensor::new(vec![c, oh, ow], out)?,
                label: s.label,
            })
        })
        .collect::<Result<_>>()?;
    Dataset::new(samples, data.classes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, bytes).unwrap();
        p
    }

    #[test]
    fn single_white_pixel() {
        let dir = tempfile::tempdir().unwrap();
        let img = write(dir.path(), "i", &encode_idx_images(1, 1, &[vec![255]]));
        let lab = write(dir.path(), "l", &encode_idx_labels(&[0]));
        let d = load_idx(&img, &lab, 1).unwrap();
        assert_eq!(d.samples()[0].image.data(), &[1.0]);
        assert_eq!(d.samples()[0].image.shape(), &[1, 1, 1]);
    }

    #[test]
    fn magic_numbers_are_checked() {
        let dir = tempfile::tempdir().unwrap();
        let img = write(dir.path(), "i", &encode_idx_images(1, 1, &[vec![1]]));
        let lab = write(dir.path(), "l", &encode_idx_labels(&[0]));
        // swapped files: each has the other's magic
        assert!(matches!(load_idx(&lab, &img, 1), Err(Error::Idx { .. })));
        let mut bad = encode_idx_labels(&[0]);
        bad[3] = 0;
        let lab_bad = write(dir.path(), "lb", &bad);
        assert!(load_idx(&img, &lab_bad, 1).is_err());
    }

    #[test]
    fn truncation_and_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let mut short = encode_idx_images(2, 2, &[vec![1, 2, 3, 4]]);
        short.pop();
        let img = write(dir.path(), "i", &short);
        let lab = write(dir.path(), "l", &encode_idx_labels(&[0]));
        let err = load_idx(&img, &lab, 1).unwrap_err().to_string();
        assert!(err.contains("truncated payload"), "{err}");

        let img = write(
            dir.path(),
            "i2",
            &encode_idx_images(2, 2, &[vec![1, 2, 3, 4]]),
        );
        let lab = write(dir.path(), "l2", &encode_idx_labels(&[0, 1]));
        let err = load_idx(&img, &lab, 1).unwrap_err().to_string();
        assert!(err.contains("2 labels for 1 images"), "{err}");

        let hdr = write(dir.path(), "h", &[0, 0, 8]);
        assert!(load_idx(&hdr, &lab, 1)
            .unwrap_err()
            .to_string()
            .contains("truncated header"));
    }

    #[test]
    fn downsample_averages_blocks() {
        let img = Tensor::new(
            vec![1, 2, 4],
            vec![0.0, 1.0, 0.5, 0.5, 1.0, 0.0, 0.25, 0.75],
        )
        .unwrap();
        let d = Dataset::new(
            vec![Sample {
                image: img,
                label: 0,
            }],
            1,
        )
        .unwrap();
        let small = downsample_2x2(&d).unwrap();
        assert_eq!(small.samples()[0].image.shape(), &[1, 1, 2]);
        assert_eq!(small.samples()[0].image.data(), &[0.5, 0.5]);
    }
}
