//! Modification requests, approve/reject triage, the rejected-data store and
//! merged dataset assembly.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io::{self, BufRead, BufReader, ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use base64::Engine;
use image::DynamicImage;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, DatasetWriter, ImageFormat, Split};
use crate::error::{Error, IoContext, Result};
use crate::manifest::{ManifestIndex, RenderManifest, VariantKind};
use crate::model::{content_hash, join_fields, BBox, DocumentClass};
use crate::render;

pub const NONE_CLASS: &str = "NONE";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModificationRequest {
    pub req_id: i64,
    pub document_identified: String,
    pub document_suggested: String,
    pub image: String,
}

/// One approved image, as recorded in `ledger.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedDataEntry {
    #[serde(rename = "req_id")]
    pub origin_req_id: i64,
    pub class_id: DocumentClass,
    /// Relative to the rejected root.
    pub path: PathBuf,
    pub approved_at: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_hash: Option<String>,
}

/// Accepts a class id or template code, any case.
pub fn parse_class(s: &str) -> Result<DocumentClass> {
    s.parse()
}

fn parse_identified(s: &str) -> Result<String> {
    if s.trim().eq_ignore_ascii_case(NONE_CLASS) {
        Ok(NONE_CLASS.to_string())
    } else {
        Ok(parse_class(s)?.id().to_string())
    }
}

/// Decodes a base64 payload, tolerating a `data:` URL prefix and line
/// breaks.
pub fn decode_base64(payload: &str) -> Result<Vec<u8>> {
    let body = match payload.find(";base64,") {
        Some(i) if payload.starts_with("data:") => &payload[i + 8..],
        _ => payload,
    };
    let compact: String = body.chars().filter(|c| !c.is_ascii_whitespace()).collect();
    base64::engine::general_purpose::STANDARD
        .decode(compact)
        .map_err(|e| Error::BadImage(format!("invalid base64: {e}")))
}

pub fn encode_base64(bytes: &[u8]) -> String {
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

fn now_ms() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(0)
}

pub struct FeedbackStore {
    requests_dir: PathBuf,
    rejected_root: PathBuf,
    last_id: Mutex<i64>,
    ledger_lock: Mutex<()>,
    scratch: AtomicU64,
}

impl FeedbackStore {
    pub fn open(requests_dir: impl Into<PathBuf>, rejected_root: impl Into<PathBuf>) -> Result<Self> {
        let requests_dir = requests_dir.into();
        let rejected_root = rejected_root.into();
        fs::create_dir_all(&requests_dir).at(&requests_dir)?;
        fs::create_dir_all(&rejected_root).at(&rejected_root)?;
        Ok(FeedbackStore {
            requests_dir,
            rejected_root,
            last_id: Mutex::new(0),
            ledger_lock: Mutex::new(()),
            scratch: AtomicU64::new(0),
        })
    }

    pub fn requests_dir(&self) -> &Path {
        &self.requests_dir
    }

    pub fn rejected_root(&self) -> &Path {
        &self.rejected_root
    }

    pub fn request_path(&self, req_id: i64) -> PathBuf {
        self.requests_dir.join(format!("request_{req_id}.txt"))
    }

    pub fn ledger_path(&self) -> PathBuf {
        ledger_path(&self.rejected_root)
    }

    fn next_id(&self) -> i64 {
        let mut last = self.last_id.lock().unwrap_or_else(|p| p.into_inner());
        let id = now_ms().max(*last + 1);
        *last = id;
        id
    }

    fn scratch_path(&self, what: &str) -> PathBuf {
        let n = self.scratch.fetch_add(1, Ordering::Relaxed);
        self.requests_dir
            .join(format!(".{what}_{}_{n}", std::process::id()))
    }

    /// Stores a new request and returns its id. Ids are epoch milliseconds,
    /// bumped past any id already taken.
    pub fn propose(&self, identified: &str, suggested: &str, image_b64: &str) -> Result<i64> {
        let identified = parse_identified(identified)?;
        let suggested = parse_class(suggested)?.id().to_string();
        let bytes = decode_base64(image_b64)?;
        dataset::decode(&bytes)?;

        let temp = self.scratch_path("tmp_request");
        let mut req = ModificationRequest {
            req_id: 0,
            document_identified: identified,
            document_suggested: suggested,
            image: image_b64.to_string(),
        };
        loop {
            req.req_id = self.next_id();
            fs::write(&temp, serde_json::to_vec(&req)?).at(&temp)?;
            let target = self.request_path(req.req_id);
            // hard_link refuses to replace an existing file, so a taken id
            // surfaces as AlreadyExists and we move on to the next one
            match fs::hard_link(&temp, &target) {
                Ok(()) => {
                    fs::remove_file(&temp).at(&temp)?;
                    return Ok(req.req_id);
                }
                Err(e) if e.kind() == ErrorKind::AlreadyExists => continue,
                Err(e) => {
                    let _ = fs::remove_file(&temp);
                    return Err(Error::io(&target, e));
                }
            }
        }
    }

    /// Every parseable request, ordered by id. Unreadable files are logged
    /// and skipped.
    pub fn list_requests(&self) -> Result<Vec<ModificationRequest>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.requests_dir).at(&self.requests_dir)? {
            let path = entry.at(&self.requests_dir)?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            if !(name.starts_with("request_") && name.ends_with(".txt")) {
                continue;
            }
            let parsed = fs::read(&path)
                .map_err(|e| e.to_string())
                .and_then(|b| {
                    serde_json::from_slice::<ModificationRequest>(&b).map_err(|e| e.to_string())
                });
            match parsed {
                Ok(r) => out.push(r),
                // vanished between listing and reading: approved or rejected meanwhile
                Err(_) if !path.exists() => {}
                Err(e) => log::warn!("skipping unreadable request {}: {e}", path.display()),
            }
        }
        out.sort_by_key(|r| r.req_id);
        Ok(out)
    }

    pub fn get(&self, req_id: i64) -> Result<ModificationRequest> {
        let path = self.request_path(req_id);
        let bytes = fs::read(&path).map_err(|e| match e.kind() {
            ErrorKind::NotFound => Error::NotFound(req_id),
            _ => Error::io(&path, e),
        })?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    /// Deletes the request. Nothing else changes.
    pub fn reject(&self, req_id: i64) -> Result<()> {
        let path = self.request_path(req_id);
        fs::remove_file(&path).map_err(|e| match e.kind() {
            ErrorKind::NotFound => Error::NotFound(req_id),
            _ => Error::io(&path, e),
        })
    }

    /// Moves the request's image into `images/<suggested>/req_<id>.png` and
    /// records it in the ledger. The request is claimed by an atomic rename
    /// first, so a concurrent reject or approve of the same id fails with
    /// NotFound. On failure the request is put back.
    pub fn approve(&self, req_id: i64) -> Result<RejectedDataEntry> {
        let path = self.request_path(req_id);
        let claim = self.scratch_path(&format!("claim_{req_id}"));
        fs::rename(&path, &claim).map_err(|e| match e.kind() {
            ErrorKind::NotFound => Error::NotFound(req_id),
            _ => Error::io(&path, e),
        })?;
        match self.admit(&claim) {
            Ok(entry) => {
                fs::remove_file(&claim).at(&claim)?;
                Ok(entry)
            }
            Err(e) => {
                if let Err(restore) = fs::rename(&claim, &path) {
                    log::error!("could not restore request {req_id}: {restore}");
                }
                Err(e)
            }
        }
    }

    fn admit(&self, claim: &Path) -> Result<RejectedDataEntry> {
        let req: ModificationRequest = serde_json::from_slice(&fs::read(claim).at(claim)?)?;
        let class = parse_class(&req.document_suggested)?;
        let bytes = decode_base64(&req.image)?;
        let decoded = dataset::decode(&bytes)?;
        let rel = PathBuf::from("images")
            .join(class.id())
            .join(format!("req_{}.png", req.req_id));
        let dest = self.rejected_root.join(&rel);
        let dir = dest.parent().expect("has parent");
        fs::create_dir_all(dir).at(dir)?;
        let is_png = image::guess_format(&bytes).ok() == Some(image::ImageFormat::Png);
        let stored = if is_png {
            bytes
        } else {
            dataset::encode_png(&decoded)?
        };
        let temp = self.scratch_path("tmp_image");
        fs::write(&temp, &stored).at(&temp)?;
        fs::rename(&temp, &dest).at(&dest)?;
        let entry = RejectedDataEntry {
            origin_req_id: req.req_id,
            class_id: class,
            path: rel,
            approved_at: now_ms(),
            content_hash: Some(content_hash(&decoded)),
        };
        let mut line = serde_json::to_vec(&entry)?;
        line.push(b'\n');
        let ledger = self.ledger_path();
        let _guard = self.ledger_lock.lock().unwrap_or_else(|p| p.into_inner());
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(&ledger)
            .and_then(|mut f| f.write_all(&line))
            .at(&ledger)?;
        Ok(entry)
    }

    pub fn rejected_entries(&self) -> Result<Vec<RejectedDataEntry>> {
        read_ledger(&self.rejected_root)
    }
}

pub fn ledger_path(rejected_root: &Path) -> PathBuf {
    rejected_root.join("ledger.jsonl")
}

/// Ledger entries ordered by request id. A missing ledger means no entries.
pub fn read_ledger(rejected_root: &Path) -> Result<Vec<RejectedDataEntry>> {
    let path = ledger_path(rejected_root);
    let file = match fs::File::open(&path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(&path, e)),
    };
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.at(&path)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str::<RejectedDataEntry>(&line)?);
    }
    out.sort_by_key(|e| e.origin_req_id);
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblySummary {
    pub base_count: usize,
    pub rejected_count: usize,
    pub variant_count: usize,
}

#[derive(Debug, Clone)]
pub struct PlannedEntry {
    pub entry: RejectedDataEntry,
    /// Present when the image resolved to a known render.
    pub manifest: Option<Arc<RenderManifest>>,
    pub variants: Vec<(String, VariantKind)>,
}

impl PlannedEntry {
    pub fn stem(&self) -> String {
        rejected_stem(self.entry.origin_req_id)
    }
}

pub fn rejected_stem(req_id: i64) -> String {
    format!("rejected_{req_id}")
}

/// What an assembly will write, without touching pixels.
#[derive(Debug, Clone)]
pub struct AssemblyPlan {
    pub base_train: Vec<Arc<RenderManifest>>,
    pub entries: Vec<PlannedEntry>,
}

impl AssemblyPlan {
    pub fn summary(&self) -> AssemblySummary {
        AssemblySummary {
            base_count: self.base_train.len(),
            rejected_count: self.entries.len(),
            variant_count: self.entries.iter().map(|e| e.variants.len()).sum(),
        }
    }

    /// (class, kind) pairs present in the merged train split.
    pub fn train_pairs(&self) -> BTreeSet<(DocumentClass, VariantKind)> {
        let mut out: BTreeSet<_> = self.base_train.iter().map(|m| (m.class_id, m.kind)).collect();
        for e in &self.entries {
            for (_, kind) in &e.variants {
                out.insert((e.entry.class_id, *kind));
            }
        }
        out
    }
}

/// Plans the merged train split: base train images plus each ledger entry,
/// fanned out when its content hash resolves in `index`, else the image and
/// its greyscale copy.
pub fn plan_assembly(
    base_train: Vec<Arc<RenderManifest>>,
    entries: Vec<RejectedDataEntry>,
    index: &ManifestIndex,
) -> AssemblyPlan {
    let entries = entries
        .into_iter()
        .map(|entry| {
            let stem = rejected_stem(entry.origin_req_id);
            let manifest = entry
                .content_hash
                .as_deref()
                .and_then(|h| index.by_hash(h))
                .cloned();
            let variants = match &manifest {
                Some(m) => fanout_kinds(m.kind)
                    .into_iter()
                    .zip(render::variant_names(&stem))
                    .map(|(k, n)| (n, k))
                    .collect(),
                None => vec![
                    (stem.clone(), VariantKind::Original),
                    (format!("{stem}_greyscale"), VariantKind::Greyscale),
                ],
            };
            PlannedEntry {
                entry,
                manifest,
                variants,
            }
        })
        .collect();
    AssemblyPlan {
        base_train,
        entries,
    }
}

/// Kinds of the 14 fan-out variants of a base of `kind`, in naming order.
pub fn fanout_kinds(kind: VariantKind) -> Vec<VariantKind> {
    let mut out = vec![kind, kind.greyscale()];
    for _ in render::A4_POSITIONS {
        out.push(VariantKind::A4);
        out.push(VariantKind::A4Greyscale);
    }
    out
}

/// Annotation line rebuilt from the field texts a manifest records.
pub fn annotation_from_manifest(m: &RenderManifest) -> Option<String> {
    let values: Option<Vec<&str>> = m
        .class_id
        .field_order()
        .iter()
        .map(|code| m.text(code).map(|t| t.text.as_str()))
        .collect();
    values.map(join_fields)
}

fn stem_of(path: &Path) -> Option<&str> {
    path.file_stem().and_then(|s| s.to_str())
}

fn copy_split(base: &Path, out: &Path, split: Split) -> Result<usize> {
    for (src_dir, dst_dir) in [
        (dataset::images_dir(base, split), dataset::images_dir(out, split)),
        (dataset::annotation_dir(base, split), dataset::annotation_dir(out, split)),
        (dataset::labels_dir(base, split), dataset::labels_dir(out, split)),
    ] {
        if !src_dir.exists() {
            continue;
        }
        let mut files: Vec<PathBuf> = fs::read_dir(&src_dir)
            .at(&src_dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<io::Result<_>>()
            .at(&src_dir)?;
        files.sort();
        for f in files {
            let dst = dst_dir.join(f.file_name().expect("file name"));
            fs::copy(&f, &dst).at(&dst)?;
        }
    }
    Ok(dataset::list_images(base, split)?.len())
}

/// Builds `out_root` from a base dataset and the rejected store: base splits
/// copied unchanged, rejected entries added to train. Re-running with the
/// same inputs reproduces the same tree. An existing dataset at `out_root`
/// is replaced.
pub fn assemble_dataset(base_root: &Path, rejected_root: &Path, out_root: &Path) -> Result<AssemblySummary> {
    let base_index = ManifestIndex::load_jsonl(dataset::manifests_path(base_root))?;
    let train_stems: Vec<String> = dataset::list_images(base_root, Split::Train)?
        .iter()
        .filter_map(|p| stem_of(p).map(str::to_string))
        .collect();
    let base_train: Vec<Arc<RenderManifest>> = train_stems
        .iter()
        .filter_map(|s| base_index.get(s).cloned())
        .collect();
    let plan = plan_assembly(base_train, read_ledger(rejected_root)?, &base_index);

    let out_data = dataset::data_dir(out_root);
    if out_data.exists() {
        if !dataset::manifests_path(out_root).exists() {
            return Err(Error::Range(format!(
                "{} exists and is not a dataset",
                out_data.display()
            )));
        }
        fs::remove_dir_all(&out_data).at(&out_data)?;
    }
    let mut writer = DatasetWriter::create(out_root, ImageFormat::Png, true)?;
    let mut summary = plan.summary();
    summary.base_count = 0;
    for split in Split::ALL {
        let n = copy_split(base_root, out_root, split)?;
        if split == Split::Train {
            summary.base_count = n;
        }
    }
    // base manifests first, in their original order
    let base_lines = fs::read_to_string(dataset::manifests_path(base_root))
        .at(dataset::manifests_path(base_root))?;

    let mut rejected_manifests: Vec<RenderManifest> = Vec::new();
    for planned in &plan.entries {
        let src = rejected_root.join(&planned.entry.path);
        let bytes = fs::read(&src).at(&src)?;
        let image = dataset::decode(&bytes)?;
        let stem = planned.stem();
        let class = planned.entry.class_id;
        match &planned.manifest {
            Some(m) => {
                let annotation = annotation_from_manifest(m);
                let base = m.renamed(stem.clone(), m.kind);
                render::fanout_with(&image, &base, &stem, |v| {
                    let mut vm = v.manifest.clone();
                    vm.content_hash = Some(content_hash(&v.image));
                    writer.write_entry(
                        Split::Train,
                        &v.name,
                        &v.image,
                        class,
                        &vm.placement,
                        annotation.as_deref(),
                        None,
                    )?;
                    rejected_manifests.push(vm);
                    Ok(())
                })?;
            }
            None => {
                let full = BBox::new(0.0, 0.0, image.width() as f64, image.height() as f64)?;
                writer.write_entry(Split::Train, &stem, &image, class, &full, None, None)?;
                let grey = DynamicImage::ImageLuma8(render::to_greyscale(&image.to_rgb8()));
                writer.write_entry(
                    Split::Train,
                    &format!("{stem}_greyscale"),
                    &grey,
                    class,
                    &full,
                    None,
                    None,
                )?;
            }
        }
    }
    writer.finish()?;
    let mut text = base_lines;
    if !text.is_empty() && !text.ends_with('\n') {
        text.push('\n');
    }
    for m in &rejected_manifests {
        text.push_str(&serde_json::to_string(m)?);
        text.push('\n');
    }
    let mpath = dataset::manifests_path(out_root);
    fs::write(&mpath, text).at(&mpath)?;
    Ok(summary)
}

/// Per-class image counts in a split, from its label files.
pub fn class_counts(root: &Path, split: Split) -> Result<BTreeMap<DocumentClass, usize>> {
    let dir = dataset::labels_dir(root, split);
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(&dir).at(&dir)? {
        let path = entry.at(&dir)?.path();
        let line = fs::read_to_string(&path).at(&path)?;
        let (class, _) = dataset::parse_label(line.trim())?;
        *out.entry(class).or_insert(0) += 1;
    }
    Ok(out)
}
