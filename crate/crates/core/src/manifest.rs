//! Ground-truth records of what was drawn on each generated image, and an
//! index resolving images back to them.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{IoContext, Result};
use crate::model::{BBox, DocumentClass, ImageRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    Original,
    Greyscale,
    A4,
    A4Greyscale,
}

impl VariantKind {
    pub const ALL: [VariantKind; 4] = [
        VariantKind::Original,
        VariantKind::Greyscale,
        VariantKind::A4,
        VariantKind::A4Greyscale,
    ];

    pub fn greyscale(self) -> Self {
        match self {
            VariantKind::Original | VariantKind::Greyscale => VariantKind::Greyscale,
            VariantKind::A4 | VariantKind::A4Greyscale => VariantKind::A4Greyscale,
        }
    }

    pub fn is_greyscale(self) -> bool {
        matches!(self, VariantKind::Greyscale | VariantKind::A4Greyscale)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VariantKind::Original => "original",
            VariantKind::Greyscale => "greyscale",
            VariantKind::A4 => "a4",
            VariantKind::A4Greyscale => "a4_greyscale",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextItem {
    pub tag: String,
    pub text: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderManifest {
    pub manifest_id: String,
    pub class_id: DocumentClass,
    pub kind: VariantKind,
    pub image_width: u32,
    pub image_height: u32,
    pub placement: BBox,
    pub anchor_box: BBox,
    pub texts: Vec<TextItem>,
    pub source_serial: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_hash: Option<String>,
}

impl RenderManifest {
    pub fn text(&self, tag: &str) -> Option<&TextItem> {
        self.texts.iter().find(|t| t.tag == tag)
    }

    /// Copy with every box mapped by `s·box + t` (per-axis `s` for text
    /// geometry) onto a new canvas.
    pub fn transformed(
        &self,
        manifest_id: String,
        kind: VariantKind,
        canvas: (u32, u32),
        scale: f64,
        offset: (f64, f64),
        placement: BBox,
    ) -> RenderManifest {
        let map = |b: &BBox| b.scale_translate(scale, scale, offset.0, offset.1);
        RenderManifest {
            manifest_id,
            class_id: self.class_id,
            kind,
            image_width: canvas.0,
            image_height: canvas.1,
            placement,
            anchor_box: map(&self.anchor_box),
            texts: self
                .texts
                .iter()
                .map(|t| TextItem {
                    tag: t.tag.clone(),
                    text: t.text.clone(),
                    bbox: map(&t.bbox),
                })
                .collect(),
            source_serial: self.source_serial,
            warnings: self.warnings.clone(),
            content_hash: None,
        }
    }

    /// Same geometry under another id and kind.
    pub fn renamed(&self, manifest_id: String, kind: VariantKind) -> RenderManifest {
        RenderManifest {
            manifest_id,
            kind,
            content_hash: None,
            ..self.clone()
        }
    }
}

/// Manifests keyed by id, with a secondary content-hash lookup.
#[derive(Debug, Default, Clone)]
pub struct ManifestIndex {
    by_id: HashMap<String, Arc<RenderManifest>>,
    by_hash: HashMap<String, String>,
}

impl ManifestIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, manifest: RenderManifest) {
        if let Some(h) = &manifest.content_hash {
            self.by_hash.insert(h.clone(), manifest.manifest_id.clone());
        }
        self.by_id
            .insert(manifest.manifest_id.clone(), Arc::new(manifest));
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn get(&self, manifest_id: &str) -> Option<&Arc<RenderManifest>> {
        self.by_id.get(manifest_id)
    }

    pub fn by_hash(&self, content_hash: &str) -> Option<&Arc<RenderManifest>> {
        self.by_hash.get(content_hash).and_then(|id| self.by_id.get(id))
    }

    pub fn has_hashes(&self) -> bool {
        !self.by_hash.is_empty()
    }

    /// Resolves by the image's manifest id first, then by its content hash.
    /// The hash is only computed when the index holds hashes.
    pub fn resolve(&self, img: &ImageRef) -> Option<&Arc<RenderManifest>> {
        if let Some(m) = img.manifest_id().and_then(|id| self.get(id)) {
            return Some(m);
        }
        if self.has_hashes() {
            return self.by_hash(img.content_hash());
        }
        None
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<RenderManifest>> {
        self.by_id.values()
    }

    /// Reads one manifest per line. Blank lines are skipped.
    pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let mut index = Self::new();
        index.extend_from_jsonl(path)?;
        Ok(index)
    }

    pub fn extend_from_jsonl(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::open(path).at(path)?;
        for line in BufReader::new(file).lines() {
            let line = line.at(path)?;
            if line.trim().is_empty() {
                continue;
            }
            self.insert(serde_json::from_str(&line)?);
        }
        Ok(())
    }
}

impl FromIterator<RenderManifest> for ManifestIndex {
    fn from_iter<I: IntoIterator<Item = RenderManifest>>(iter: I) -> Self {
        let mut index = ManifestIndex::new();
        for m in iter {
            index.insert(m);
        }
        index
    }
}

/// Writes manifests as JSON lines in the given order.
pub fn write_jsonl<'a>(
    path: impl AsRef<Path>,
    manifests: impl IntoIterator<Item = &'a RenderManifest>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).at(path)?);
    for m in manifests {
        serde_json::to_writer(&mut w, m)?;
        w.write_all(b"\n").at(path)?;
    }
    w.flush().at(path)
}
