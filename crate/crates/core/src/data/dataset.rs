//! On-disk dataset layout and the immutable in-memory dataset.
//!
//! A dataset directory holds `manifest.json` (`name`, `num_classes`), an
//! `images/` directory of PNG files and `labels.csv` with header
//! `file,label_0,...,label_{k-1}`. Samples are ordered lexicographically by
//! file name.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::image::Image;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LABELS_FILE: &str = "labels.csv";
pub const IMAGES_DIR: &str = "images";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub num_classes: usize,
}

/// Multi-hot label matrix, one row per sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl LabelMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<u8>) -> Result<Self> {
        if cols == 0 {
            return Err(Error::Integrity("label matrix needs at least one class".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::Integrity(format!(
                "label buffer of length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::Integrity("labels must be 0 or 1".into()));
        }
        Ok(Self { rows, cols, data })
    }

    /// One-hot rows from class indices.
    pub fn one_hot(classes: &[usize], num_classes: usize) -> Result<Self> {
        let mut data = vec![0u8; classes.len() * num_classes];
        for (i, &c) in classes.iter().enumerate() {
            if c >= num_classes {
                return Err(Error::Integrity(format!("class {c} out of range")));
            }
            data[i * num_classes + c] = 1;
        }
        Self::new(classes.len(), num_classes, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Row-major label bytes.
    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<u8> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }
}

/// Immutable collection of images with multi-hot labels.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    name: String,
    files: Vec<String>,
    images: Vec<Image>,
    labels: LabelMatrix,
    checksum: String,
}

impl LabeledDataset {
    pub fn new(name: impl Into<String>, files: Vec<String>, images: Vec<Image>, labels: LabelMatrix) -> Result<Self> {
        if images.len() != labels.rows() || files.len() != images.len() {
            return Err(Error::Integrity(format!(
                "{} images, {} file names, {} label rows",
                images.len(),
                files.len(),
                labels.rows()
            )));
        }
        let checksum = checksum(&files, &images, Some(&labels));
        Ok(Self {
            name: name.into(),
            files,
            images,
            labels,
            checksum,
        })
    }

    /// Convenience constructor naming samples `sample_00000.png`, ...
    pub fn from_parts(name: impl Into<String>, images: Vec<Image>, labels: LabelMatrix) -> Result<Self> {
        let files = (0..images.len()).map(sample_file_name).collect();
        Self::new(name, files, images, labels)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.cols()
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn labels(&self) -> &LabelMatrix {
        &self.labels
    }

    /// Hex SHA-256 over file names, geometry, 8-bit pixels and labels.
    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    /// First 64 bits of the checksum.
    pub fn fingerprint(&self) -> u64 {
        u64::from_str_radix(&self.checksum[..16], 16).expect("hex checksum")
    }

    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> Result<Self> {
        Self::new(
            name,
            indices.iter().map(|&i| self.files[i].clone()).collect(),
            indices.iter().map(|&i| self.images[i].clone()).collect(),
            self.labels.select(indices),
        )
    }

    /// Writes the dataset in the on-disk layout.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let images_dir = dir.join(IMAGES_DIR);
        fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
        let manifest = Manifest {
            name: self.name.clone(),
            num_classes: self.num_classes(),
        };
        let manifest_path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))?;
        for (file, img) in self.files.iter().zip(&self.images) {
            write_png(&images_dir.join(file), img)?;
        }
        let mut csv = String::from("file");
        for j in 0..self.num_classes() {
            csv.push_str(&format!(",label_{j}"));
        }
        csv.push('\n');
        for (i, file) in self.files.iter().enumerate() {
            csv.push_str(file);
            for &v in self.labels.row(i) {
                csv.push(',');
                csv.push(if v == 1 { '1' } else { '0' });
            }
            csv.push('\n');
        }
        let labels_path = dir.join(LABELS_FILE);
        fs::write(&labels_path, csv).map_err(|e| Error::io(&labels_path, e))
    }
}

pub fn sample_file_name(i: usize) -> String {
    format!("sample_{i:05}.png")
}

pub(crate) fn checksum(files: &[String], images: &[Image], labels: Option<&LabelMatrix>) -> String {
    let mut h = Sha256::new();
    for (i, (file, img)) in files.iter().zip(images).enumerate() {
        h.update(file.as_bytes());
        h.update([0u8]);
        for d in [img.height(), img.width(), img.channels()] {
            h.update((d as u32).to_le_bytes());
        }
        h.update(img.to_u8());
        if let Some(labels) = labels {
            h.update(labels.row(i));
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Images of a dataset directory without their labels.
#[derive(Debug, Clone)]
pub struct ImageSet {
    pub name: String,
    pub num_classes: usize,
    pub files: Vec<String>,
    pub images: Vec<Image>,
}

fn read_manifest(dir: &Path) -> Result<Manifest> {
    let entries = fs::read_dir(dir).map_err(|e| Error::Load(format!("{}: {e}", dir.display())))?;
    if entries.count() == 0 {
        return Err(Error::Integrity(format!(
            "{} is an empty dataset directory",
            dir.display()
        )));
    }
    let path = dir.join(MANIFEST_FILE);
    let text =
        fs::read_to_string(&path).map_err(|e| Error::Load(format!("missing manifest {}: {e}", path.display())))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::Load(format!("malformed manifest {}: {e}", path.display())))?;
    if manifest.num_classes == 0 {
        return Err(Error::Integrity("manifest declares zero classes".into()));
    }
    Ok(manifest)
}

/// Loads the images of a dataset directory; the label file is never opened.
pub fn load_images(dir: &Path) -> Result<ImageSet> {
    let manifest = read_manifest(dir)?;
    let images_dir = dir.join(IMAGES_DIR);
    let mut files: Vec<String> = fs::read_dir(&images_dir)
        .map_err(|e| Error::Load(format!("{}: {e}", images_dir.display())))?
        .filter_map(|entry| entry.ok())
        .map(|entry| entry.file_name().to_string_lossy().into_owned())
        .filter(|name| name.to_ascii_lowercase().ends_with(".png"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Integrity(format!(
            "{} contains no PNG images",
            images_dir.display()
        )));
    }
    let images = files
        .iter()
        .map(|f| read_png(&images_dir.join(f)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ImageSet {
        name: manifest.name,
        num_classes: manifest.num_classes,
        files,
        images,
    })
}

/// Parses `labels.csv`, returning rows keyed by file name.
pub fn load_label_rows(dir: &Path, num_classes: usize) -> Result<HashMap<String, Vec<u8>>> {
    let path = dir.join(LABELS_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::Load(format!("missing labels {}: {e}", path.display())))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Integrity(format!("{} is empty", path.display())))?;
    let expected: Vec<String> = std::iter::once("file".to_string())
        .chain((0..num_classes).map(|j| format!("label_{j}")))
        .collect();
    let got: Vec<&str> = header.split(',').map(str::trim).collect();
    if got != expected {
        return Err(Error::Integrity(format!(
            "labels header {header:?} does not match {num_classes} classes"
        )));
    }
    let mut rows = HashMap::new();
    for (lineno, line) in lines.enumerate() {
        let mut fields = line.split(',').map(str::trim);
        let file = fields.next().unwrap_or_default().to_string();
        let values = fields
            .map(|f| match f {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                other => Err(Error::Integrity(format!(
                    "line {}: label value {other:?} is not 0/1",
                    lineno + 2
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != num_classes {
            return Err(Error::Integrity(format!(
                "line {}: {} labels, expected {num_classes}",
                lineno + 2,
                values.len()
            )));
        }
        if rows.insert(file.clone(), values).is_some() {
            return Err(Error::Integrity(format!("duplicate label row for {file}")));
        }
    }
    Ok(rows)
}

/// Loads a labeled dataset directory.
pub fn load_dataset(dir: &Path) -> Result<LabeledDataset> {
    let set = load_images(dir)?;
    let rows = load_label_rows(dir, set.num_classes)?;
    if rows.len() != set.files.len() {
        return Err(Error::Integrity(format!(
            "{} label rows for {} images",
            rows.len(),
            set.files.len()
        )));
    }
    let mut data = Vec::with_capacity(set.files.len() * set.num_classes);
    for file in &set.files {
        let row = rows
            .get(file)
            .ok_or_else(|| Error::Integrity(format!("no label row for {file}")))?;
        data.extend_from_slice(row);
    }
    let labels = LabelMatrix::new(set.files.len(), set.num_classes, data)?;
    LabeledDataset::new(set.name, set.files, set.images, labels)
}

/// Labels of a dataset directory in the image file order.
pub fn load_labels(dir: &Path) -> Result<LabelMatrix> {
    let manifest = read_manifest(dir)?;
    let rows = load_label_rows(dir, manifest.num_classes)?;
    let mut files: Vec<&String> = rows.keys().collect();
    files.sort();
    let mut data = Vec::with_capacity(files.len() * manifest.num_classes);
    for f in files {
        data.extend_from_slice(&rows[f]);
    }
    LabelMatrix::new(rows.len(), manifest.num_classes, data)
}

fn read_png(path: &PathBuf) -> Result<Image> {
    use image::DynamicImage;
    let decoded = image::open(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let (channels, bytes) = match decoded {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw()),
        DynamicImage::ImageLumaA8(b) => (2, b.into_raw()),
        DynamicImage::ImageRgb8(b) => (3, b.into_raw()),
        DynamicImage::ImageRgba8(b) => (4, b.into_raw()),
        DynamicImage::ImageLuma16(_) => (1, decoded.to_luma8().into_raw()),
        DynamicImage::ImageLumaA16(_) => (2, decoded.to_luma_alpha8().into_raw()),
        DynamicImage::ImageRgb16(_) => (3, decoded.to_rgb8().into_raw()),
        DynamicImage::ImageRgba16(_) => (4, decoded.to_rgba8().into_raw()),
        other => {
            return Err(Error::Format(format!(
                "{}: unsupported pixel layout {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    Image::from_u8(h, w, channels, &bytes)
}

fn write_png(path: &Path, img: &Image) -> Result<()> {
    use image::{ExtendedColorType, ImageFormat};
    let color = match img.channels() {
        1 => ExtendedColorType::L8,
        2 => ExtendedColorType::La8,
        3 => ExtendedColorType::Rgb8,
        _ => ExtendedColorType::Rgba8,
    };
    image::save_buffer_with_format(
        path,
        &img.to_u8(),
        img.width() as u32,
        img.height() as u32,
        color,
        ImageFormat::Png,
    )
    .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}
