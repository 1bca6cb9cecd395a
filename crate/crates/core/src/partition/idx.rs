//! IDX reader for MNIST-style image/label pairs.

use std::path::Path;

use super::{io_err, PartitionError};
use crate::trainer::Dataset;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Loads an IDX image file and its label file. Pixels are scaled to `[0, 1]`
/// and flattened row-major; the class count is `max(label) + 1`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, PartitionError> {
    let images = std::fs::read(images_path).map_err(|e| io_err(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| io_err(labels_path, e))?;
    parse_idx(&images, &labels)
}

pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Dataset, PartitionError> {
    let img_header = header(images, "images", IMAGES_MAGIC, 3)?;
    let lbl_header = header(labels, "labels", LABELS_MAGIC, 1)?;
    let (n, rows, cols) = (img_header[0], img_header[1], img_header[2]);
    if n != lbl_header[0] {
        return Err(PartitionError::CountMismatch {
            images: n,
            labels: lbl_header[0],
        });
    }
    let dim = rows * cols;
    let img_start = 16;
    let need = img_start + n * dim;
    if images.len() < need {
        return Err(PartitionError::Truncated {
            file: "images".into(),
            offset: images.len(),
        });
    }
    if labels.len() < 8 + n {
        return Err(PartitionError::Truncated {
            file: "labels".into(),
            offset: labels.len(),
        });
    }
    let features = images[img_start..need]
        .iter()
        .map(|&p| f32::from(p) / 255.0)
        .collect();
    let labels: Vec<usize> = labels[8..8 + n].iter().map(|&l| l as usize).collect();
    let classes = labels.iter().max().map_or(1, |m| m + 1);
    Dataset::new(features, dim.max(1), labels, classes)
        .map_err(|e| PartitionError::InvalidArgument(e.to_string()))
}

fn header(buf: &[u8], file: &str, magic: u32, dims: usize) -> Result<Vec<usize>, PartitionError> {
    let be = |off: usize| -> Result<u32, PartitionError> {
        buf.get(off..off + 4)
            .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
            .ok_or_else(|| PartitionError::Truncated {
                file: file.into(),
                offset: off,
            })
    };
    let found = be(0)?;
    if found != magic {
        return Err(PartitionError::BadMagic {
            file: file.into(),
            found,
            expected: magic,
        });
    }
    (0..dims)
        .map(|i| be(4 + 4 * i).map(|v| v as usize))
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn idx_images(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = IMAGES_MAGIC.to_be_bytes().to_vec();
        for v in [n, rows, cols] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(pixels);
        b
    }

    pub(crate) fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut b = LABELS_MAGIC.to_be_bytes().to_vec();
        b.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        b.extend_from_slice(labels);
        b
    }

    #[test]
    fn scales_pixel_endpoints() {
        let images = idx_images(2, 2, 2, &[0, 255, 255, 0, 255, 255, 0, 0]);
        let labels = idx_labels(&[3, 1]);
        let d = parse_idx(&images, &labels).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.feature_dim(), 4);
        assert_eq!(d.features(), &[0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        assert_eq!(d.labels(), &[3, 1]);
        assert_eq!(d.class_count(), 4);
    }

    #[test]
    fn format_errors() {
        let images = idx_images(2, 2, 2, &[0; 8]);
        let labels = idx_labels(&[0, 1]);
        assert!(matches!(
            parse_idx(&labels, &labels),
            Err(PartitionError::BadMagic { .. })
        ));
        assert!(matches!(
            parse_idx(&images, &images),
            Err(PartitionError::BadMagic { .. })
        ));
        assert!(matches!(
            parse_idx(&images, &idx_labels(&[0])),
            Err(PartitionError::CountMismatch {
                images: 2,
                labels: 1
            })
        ));
        assert!(matches!(
            parse_idx(&images[..20], &labels),
            Err(PartitionError::Truncated { .. })
        ));
        assert!(matches!(
            parse_idx(&images[..6], &labels),
            Err(PartitionError::Truncated { .. })
        ));
    }
}
