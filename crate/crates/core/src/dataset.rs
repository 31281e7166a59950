//! Split assignment and the on-disk dataset tree:
//! `data/{images,annotation,labels}/<split>/<stem>.*` plus
//! `data/manifests.jsonl`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Cursor, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::codecs::jpeg::JpegEncoder;
use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::DynamicImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::idgen;
use crate::manifest::{ManifestIndex, RenderManifest};
use crate::model::{content_hash, BBox, DocumentClass};
use crate::render::{self, Variant};
use crate::templates::Registry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Range(format!("unknown split {s:?}")))
    }
}

/// 7:2:1 split by position within a batch of `total` (1-based `index`).
pub fn assign_split(index: u64, total: u64) -> Result<Split> {
    if index == 0 || index > total {
        return Err(Error::Range(format!("index {index} outside 1..={total}")));
    }
    let i = 10 * index as u128;
    let t = total as u128;
    Ok(if i <= 7 * t {
        Split::Train
    } else if i <= 9 * t {
        Split::Validation
    } else {
        Split::Test
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    #[default]
    Png,
    Jpeg,
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Png => "png",
            ImageFormat::Jpeg => "jpg",
        }
    }

    pub fn encode(self, image: &DynamicImage) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        match self {
            ImageFormat::Png => image.write_with_encoder(PngEncoder::new_with_quality(
                &mut buf,
                CompressionType::Fast,
                FilterType::Adaptive,
            ))?,
            ImageFormat::Jpeg => {
                image.write_with_encoder(JpegEncoder::new_with_quality(&mut buf, 95))?
            }
        }
        Ok(buf)
    }
}

pub fn encode_png(image: &DynamicImage) -> Result<Vec<u8>> {
    ImageFormat::Png.encode(image)
}

/// One detector label line: class index and the placement box centre and
/// size, normalised to the image.
pub fn label_line(class: DocumentClass, placement: &BBox, width: u32, height: u32) -> String {
    let (w, h) = (width as f64, height as f64);
    let (cx, cy) = placement.center();
    format!(
        "{} {:.6} {:.6} {:.6} {:.6}",
        class.index(),
        cx / w,
        cy / h,
        placement.width() / w,
        placement.height() / h
    )
}

pub fn data_dir(root: &Path) -> PathBuf {
    root.join("data")
}

pub fn images_dir(root: &Path, split: Split) -> PathBuf {
    root.join("data").join("images").join(split.as_str())
}

pub fn annotation_dir(root: &Path, split: Split) -> PathBuf {
    root.join("data").join("annotation").join(split.as_str())
}

pub fn labels_dir(root: &Path, split: Split) -> PathBuf {
    root.join("data").join("labels").join(split.as_str())
}

pub fn manifests_path(root: &Path) -> PathBuf {
    root.join("data").join("manifests.jsonl")
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub images: usize,
    pub per_split: BTreeMap<Split, usize>,
}

impl DatasetSummary {
    pub fn count(&self, split: Split) -> usize {
        self.per_split.get(&split).copied().unwrap_or(0)
    }
}

/// Streams images, annotations, labels and manifests into a dataset tree.
pub struct DatasetWriter {
    root: PathBuf,
    format: ImageFormat,
    hash: bool,
    manifests: BufWriter<File>,
    manifests_path: PathBuf,
    summary: DatasetSummary,
}

impl DatasetWriter {
    /// Creates the directory layout and truncates `manifests.jsonl`. With
    /// `hash` set every manifest records the content hash of the stored
    /// raster.
    pub fn create(root: impl Into<PathBuf>, format: ImageFormat, hash: bool) -> Result<Self> {
        let root = root.into();
        for split in Split::ALL {
            for dir in [
                images_dir(&root, split),
                annotation_dir(&root, split),
                labels_dir(&root, split),
            ] {
                fs::create_dir_all(&dir).at(&dir)?;
            }
        }
        let manifests_path = manifests_path(&root);
        let manifests = BufWriter::new(File::create(&manifests_path).at(&manifests_path)?);
        Ok(DatasetWriter {
            root,
            format,
            hash,
            manifests,
            manifests_path,
            summary: DatasetSummary::default(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes an image with its label and, when given, annotation and
    /// manifest.
    pub fn write_entry(
        &mut self,
        split: Split,
        stem: &str,
        image: &DynamicImage,
        class: DocumentClass,
        placement: &BBox,
        annotation: Option<&str>,
        manifest: Option<&RenderManifest>,
    ) -> Result<()> {
        let bytes = self.format.encode(image)?;
        let path = images_dir(&self.root, split).join(format!("{stem}.{}", self.format.extension()));
        fs::write(&path, &bytes).at(&path)?;
        if let Some(text) = annotation {
            let p = annotation_dir(&self.root, split).join(format!("{stem}.txt"));
            fs::write(&p, text).at(&p)?;
        }
        let p = labels_dir(&self.root, split).join(format!("{stem}.txt"));
        let line = label_line(class, placement, image.width(), image.height());
        fs::write(&p, line).at(&p)?;
        if let Some(m) = manifest {
            let mut m = m.clone();
            if self.hash {
                m.content_hash = Some(match self.format {
                    ImageFormat::Png => content_hash(image),
                    ImageFormat::Jpeg => content_hash(&image::load_from_memory(&bytes)?),
                });
            }
            serde_json::to_writer(&mut self.manifests, &m)?;
            self.manifests.write_all(b"\n").at(&self.manifests_path)?;
        }
        self.summary.images += 1;
        *self.summary.per_split.entry(split).or_default() += 1;
        Ok(())
    }

    pub fn write_variant(&mut self, split: Split, variant: &Variant, annotation: &str) -> Result<()> {
        let m = &variant.manifest;
        self.write_entry(
            split,
            &variant.name,
            &variant.image,
            m.class_id,
            &m.placement,
            Some(annotation),
            Some(m),
        )
    }

    pub fn finish(mut self) -> Result<DatasetSummary> {
        self.manifests.flush().at(&self.manifests_path)?;
        Ok(self.summary)
    }
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub per_class: u64,
    pub seed: u64,
    pub format: ImageFormat,
    pub hash: bool,
    pub classes: Vec<DocumentClass>,
}

impl BuildOptions {
    pub fn new(per_class: u64, seed: u64) -> Self {
        BuildOptions {
            per_class,
            seed,
            format: ImageFormat::Png,
            hash: true,
            classes: DocumentClass::ALL.to_vec(),
        }
    }
}

/// Generates, renders, fans out and writes a complete dataset in one pass.
pub fn build_dataset(root: &Path, registry: &Registry, opts: &BuildOptions) -> Result<DatasetSummary> {
    let mut writer = DatasetWriter::create(root, opts.format, opts.hash)?;
    for &class in &opts.classes {
        let records = idgen::generate_records(class, opts.per_class, opts.seed)?;
        for (i, rec) in records.iter().enumerate() {
            let index = i as u64 + 1;
            let split = assign_split(index, opts.per_class)?;
            let stem = rec.stem(index);
            let (img, manifest) = render::render_base(rec, registry.get(class), stem.clone())?;
            let annotation = rec.annotation.serialize()?;
            render::fanout_with(&DynamicImage::ImageRgb8(img), &manifest, &stem, |v| {
                writer.write_variant(split, &v, &annotation)
            })?;
        }
    }
    writer.finish()
}

/// Base-image layout written by [`generate_to_dir`]:
/// `metadata/<class>/<stem>.txt`, `images/<class>/<stem>.png`,
/// `manifests/<class>.jsonl`.
pub fn generate_to_dir(
    class: DocumentClass,
    count: u64,
    seed: u64,
    out: &Path,
    registry: &Registry,
) -> Result<Vec<RenderManifest>> {
    let records = idgen::generate_batch(class, count, seed, out)?;
    let img_dir = out.join("images").join(class.id());
    fs::create_dir_all(&img_dir).at(&img_dir)?;
    let man_dir = out.join("manifests");
    fs::create_dir_all(&man_dir).at(&man_dir)?;
    let mut manifests = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let stem = rec.stem(i as u64 + 1);
        let (img, m) = render::render_base(rec, registry.get(class), stem.clone())?;
        let path = img_dir.join(format!("{stem}.png"));
        let bytes = encode_png(&DynamicImage::ImageRgb8(img))?;
        fs::write(&path, bytes).at(&path)?;
        manifests.push(m);
    }
    crate::manifest::write_jsonl(man_dir.join(format!("{}.jsonl", class.id())), &manifests)?;
    Ok(manifests)
}

fn stem_index(stem: &str, class: DocumentClass) -> Option<u64> {
    stem.strip_prefix(class.id())?.strip_prefix('_')?.parse().ok()
}

/// Fans out every base image produced by [`generate_to_dir`] into a dataset
/// tree, splitting each class by its base index.
pub fn augment_dir(input: &Path, out: &Path, format: ImageFormat) -> Result<DatasetSummary> {
    let mut writer = DatasetWriter::create(out, format, true)?;
    for class in DocumentClass::ALL {
        let man_path = input.join("manifests").join(format!("{}.jsonl", class.id()));
        if !man_path.exists() {
            continue;
        }
        let index = ManifestIndex::load_jsonl(&man_path)?;
        let mut bases: Vec<(u64, String)> = index
            .iter()
            .filter_map(|m| stem_index(&m.manifest_id, class).map(|i| (i, m.manifest_id.clone())))
            .collect();
        bases.sort();
        let total = bases.len() as u64;
        for (pos, (_, stem)) in bases.iter().enumerate() {
            let split = assign_split(pos as u64 + 1, total)?;
            let manifest = index.get(stem).expect("listed from index");
            let img_path = input.join("images").join(class.id()).join(format!("{stem}.png"));
            let image = image::open(&img_path)
                .map_err(|e| Error::BadImage(format!("{}: {e}", img_path.display())))?;
            let ann_path = input.join("metadata").join(class.id()).join(format!("{stem}.txt"));
            let annotation = fs::read_to_string(&ann_path).at(&ann_path)?;
            render::fanout_with(&image, manifest, stem, |v| {
                writer.write_variant(split, &v, &annotation)
            })?;
        }
    }
    writer.finish()
}

/// Image files of a split, sorted by file name.
pub fn list_images(root: &Path, split: Split) -> Result<Vec<PathBuf>> {
    let dir = images_dir(root, split);
    let mut out = Vec::new();
    for entry in fs::read_dir(&dir).at(&dir)? {
        let path = entry.at(&dir)?.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if matches!(ext, "png" | "jpg" | "jpeg") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Parses a label line into its class and normalised box.
pub fn parse_label(line: &str) -> Result<(DocumentClass, [f64; 4])> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != 5 {
        return Err(Error::Schema(format!("label line {line:?}")));
    }
    let idx: usize = parts[0]
        .parse()
        .map_err(|_| Error::Schema(format!("label class {:?}", parts[0])))?;
    let class = DocumentClass::from_index(idx)
        .ok_or_else(|| Error::Schema(format!("label class index {idx}")))?;
    let mut vals = [0.0; 4];
    for (v, p) in vals.iter_mut().zip(&parts[1..]) {
        *v = p
            .parse()
            .map_err(|_| Error::Schema(format!("label value {p:?}")))?;
    }
    Ok((class, vals))
}

/// Reads an encoded image from memory.
pub fn decode(bytes: &[u8]) -> Result<DynamicImage> {
    image::ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| Error::BadImage(e.to_string()))?
        .decode()
        .map_err(|e| Error::BadImage(e.to_string()))
}
