//! Dataset ingestion, metadata inference and input adaptation.

mod cache;
mod dataset;
pub mod fixture;
mod image;
mod meta;
mod preprocess;
mod split;

pub use cache::{CacheKey, PreprocessCache};
pub use dataset::{
    load_dataset, load_images, load_labels, sample_file_name, ImageSet, LabelMatrix, LabeledDataset, Manifest,
    IMAGES_DIR, LABELS_FILE, MANIFEST_FILE,
};
pub(crate) use image::quantize;
pub use image::Image;
pub use meta::{infer_meta, DatasetMeta};
pub use preprocess::{
    adapt, normalize, preprocess, resize_bilinear, target_input_shape, ChannelPolicy, InputSpec, MAX_SIDE, NORM_MEAN,
    NORM_STD,
};
pub use split::{split_indices, split_train_valid, SplitIndices};
