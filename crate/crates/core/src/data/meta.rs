use serde::{Deserialize, Serialize};

use super::image::Image;
use crate::error::{Error, Result};

/// Shape statistics that drive input adaptation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub num_classes: usize,
    pub num_samples: usize,
    pub median_shape: (usize, usize),
    pub channel_count: usize,
    pub variable_shape: bool,
}

/// Lower median of an unsorted sample.
fn lower_median(mut values: Vec<usize>) -> usize {
    values.sort_unstable();
    values[(values.len() - 1) / 2]
}

pub fn infer_meta(images: &[Image], num_classes: usize) -> Result<DatasetMeta> {
    let first = images
        .first()
        .ok_or_else(|| Error::Integrity("cannot infer metadata of an empty dataset".into()))?;
    let channel_count = first.channels();
    if let Some(bad) = images.iter().find(|img| img.channels() != channel_count) {
        return Err(Error::Integrity(format!(
            "mixed channel counts: {channel_count} and {}",
            bad.channels()
        )));
    }
    let rows = lower_median(images.iter().map(Image::height).collect());
    let cols = lower_median(images.iter().map(Image::width).collect());
    let variable_shape = images.iter().any(|img| img.shape() != first.shape());
    Ok(DatasetMeta {
        num_classes,
        num_samples: images.len(),
        median_shape: (rows, cols),
        channel_count,
        variable_shape,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blank(h: usize, w: usize, c: usize) -> Image {
        Image::filled(h, w, c, 0.0).unwrap()
    }

    #[test]
    fn per_dimension_median() {
        let imgs = [blank(28, 28, 1), blank(32, 32, 1), blank(100, 50, 1)];
        let meta = infer_meta(&imgs, 2).unwrap();
        assert_eq!(meta.median_shape, (32, 32));
        assert!(meta.variable_shape);
    }

    #[test]
    fn uniform_shapes() {
        let imgs = vec![blank(600, 450, 3); 3];
        let meta = infer_meta(&imgs, 4).unwrap();
        assert_eq!(meta.median_shape, (600, 450));
        assert!(!meta.variable_shape);
        assert_eq!(meta.channel_count, 3);
    }

    #[test]
    fn single_image_and_lower_median() {
        assert_eq!(infer_meta(&[blank(7, 9, 1)], 1).unwrap().median_shape, (7, 9));
        let imgs = [blank(10, 4, 1), blank(20, 8, 1)];
        assert_eq!(infer_meta(&imgs, 1).unwrap().median_shape, (10, 4));
    }

    #[test]
    fn mixed_channels_rejected() {
        let imgs = [blank(4, 4, 1), blank(4, 4, 3)];
        assert!(matches!(infer_meta(&imgs, 1), Err(Error::Integrity(_))));
    }
}
