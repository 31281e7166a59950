//! Feedback-loop simulation over a coverage-driven detector stub.
//!
//! The stub answers correctly for (class, variant kind) pairs present in its
//! training set and guesses a seeded pseudo-random class otherwise. Each
//! round scores the full variant grid, files a modification request for
//! every miss, approves them all, plans the merged train split and
//! retrains on its pairs.

use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use image::DynamicImage;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, assign_split, Split};
use crate::error::{Error, IoContext, Result};
use crate::feedback::{encode_base64, plan_assembly, FeedbackStore, NONE_CLASS};
use crate::idgen;
use crate::manifest::{ManifestIndex, RenderManifest, VariantKind};
use crate::model::{DetectionResult, DocumentClass, ImageRef};
use crate::pipeline::{pick_detection, DetectorBackend};
use crate::render;
use crate::templates::Registry;

use super::metrics::{ConfusionCounts, MetricsReport};

pub type Coverage = BTreeSet<(DocumentClass, VariantKind)>;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0100_0000_01b3;

fn fnv1a(bytes: &[u8], mut h: u64) -> u64 {
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// The class guessed for an uncovered image in a given training generation.
pub fn fallback_class(seed: u64, generation: u64, manifest_id: &str) -> DocumentClass {
    let mut h = fnv1a(&seed.to_le_bytes(), FNV_OFFSET);
    h = fnv1a(&generation.to_le_bytes(), h);
    h = fnv1a(manifest_id.as_bytes(), h);
    let n = DocumentClass::ALL.len() as u64;
    DocumentClass::from_index((h % n) as usize).expect("index below class count")
}

/// Detector stub whose skill is exactly its coverage set.
pub struct CoverageDetector {
    index: Arc<ManifestIndex>,
    seed: u64,
    state: RwLock<(u64, Coverage)>,
}

impl CoverageDetector {
    pub fn new(index: Arc<ManifestIndex>, seed: u64, coverage: Coverage) -> Self {
        CoverageDetector {
            index,
            seed,
            state: RwLock::new((0, coverage)),
        }
    }

    /// Replaces the coverage set and starts a new generation of guesses.
    pub fn retrain(&self, coverage: Coverage) {
        let mut state = self.state.write().unwrap_or_else(|p| p.into_inner());
        state.0 += 1;
        state.1 = coverage;
    }

    pub fn generation(&self) -> u64 {
        self.state.read().unwrap_or_else(|p| p.into_inner()).0
    }

    pub fn coverage(&self) -> Coverage {
        self.state.read().unwrap_or_else(|p| p.into_inner()).1.clone()
    }
}

impl DetectorBackend for CoverageDetector {
    fn detect(&self, img: &ImageRef) -> Result<Vec<DetectionResult>> {
        let Some(m) = self.index.resolve(img) else {
            return Ok(Vec::new());
        };
        let state = self.state.read().unwrap_or_else(|p| p.into_inner());
        let d = if state.1.contains(&(m.class_id, m.kind)) {
            DetectionResult::new(m.class_id, m.placement, 1.0)?
        } else {
            let guess = fallback_class(self.seed, state.0, &m.manifest_id);
            DetectionResult::new(guess, m.placement, 1.0 / DocumentClass::ALL.len() as f64)?
        };
        Ok(vec![d])
    }
}

/// Expected accuracy of a coverage detector on `grid`: covered images are
/// always right, the rest are right one time in five.
pub fn expected_accuracy<'a>(grid: impl IntoIterator<Item = &'a RenderManifest>, coverage: &Coverage) -> f64 {
    let (mut covered, mut other) = (0usize, 0usize);
    for m in grid {
        if coverage.contains(&(m.class_id, m.kind)) {
            covered += 1;
        } else {
            other += 1;
        }
    }
    let total = covered + other;
    if total == 0 {
        return 0.0;
    }
    (covered as f64 + other as f64 / DocumentClass::ALL.len() as f64) / total as f64
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub per_class: u64,
    pub seed: u64,
    pub rounds: usize,
    /// Variant kinds of the train-split renders the stub starts from.
    pub initial_kinds: Vec<VariantKind>,
    /// Holds the request queue and rejected store. Must not already contain
    /// feedback state.
    pub work_dir: PathBuf,
}

impl SimOptions {
    pub fn new(work_dir: impl Into<PathBuf>) -> Self {
        SimOptions {
            per_class: 10,
            seed: 42,
            rounds: 3,
            initial_kinds: vec![VariantKind::Original],
            work_dir: work_dir.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub round: usize,
    pub accuracy: f64,
    /// Closed-form expectation for this round's coverage.
    pub expected_accuracy: f64,
    pub coverage: Vec<(DocumentClass, VariantKind)>,
    pub misclassified: usize,
    pub approved: usize,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub grid_size: usize,
    pub trajectory: Vec<f64>,
    pub rounds: Vec<RoundStats>,
}

struct Base {
    stem: String,
    image: DynamicImage,
    manifest: RenderManifest,
}

fn render_bases(registry: &Registry, per_class: u64, seed: u64) -> Result<Vec<(Split, Base)>> {
    let mut out = Vec::new();
    for class in DocumentClass::ALL {
        for (i, rec) in idgen::generate_records(class, per_class, seed)?.iter().enumerate() {
            let index = i as u64 + 1;
            let stem = rec.stem(index);
            let (img, manifest) = render::render_base(rec, registry.get(class), stem.clone())?;
            let base = Base {
                stem,
                image: DynamicImage::ImageRgb8(img),
                manifest,
            };
            out.push((assign_split(index, per_class)?, base));
        }
    }
    Ok(out)
}

/// Runs the loop for up to `opts.rounds` rounds and returns the accuracy
/// of each. A round with no misclassification ends the run early, since
/// it would leave nothing to learn from.
pub fn simulate_arl_loop(registry: &Registry, opts: &SimOptions) -> Result<SimOutcome> {
    let requests_dir = opts.work_dir.join("modification_requests");
    let rejected_root = opts.work_dir.join("rejected_pipeline");
    let store = FeedbackStore::open(&requests_dir, &rejected_root)?;
    if !store.list_requests()?.is_empty() || !store.rejected_entries()?.is_empty() {
        return Err(Error::Range(format!(
            "{} already holds feedback state",
            opts.work_dir.display()
        )));
    }

    let bases = render_bases(registry, opts.per_class, opts.seed)?;
    let mut grid = Vec::new();
    let mut base_train = Vec::new();
    for (split, b) in &bases {
        for m in render::fanout_manifests(&b.manifest, &b.stem)? {
            if *split == Split::Train && opts.initial_kinds.contains(&m.kind) {
                base_train.push(Arc::new(m.clone()));
            }
            grid.push(m);
        }
    }
    let grid_index: Arc<ManifestIndex> = Arc::new(grid.iter().cloned().collect());
    // Manifests of proposed images, keyed by the hash the store records.
    let mut hash_index = ManifestIndex::new();

    let mut coverage = plan_assembly(base_train.clone(), Vec::new(), &hash_index).train_pairs();
    let detector = CoverageDetector::new(grid_index.clone(), opts.seed, coverage.clone());
    let mut outcome = SimOutcome {
        grid_size: grid.len(),
        trajectory: Vec::new(),
        rounds: Vec::new(),
    };

    for round in 0..opts.rounds {
        if round > 0 {
            detector.retrain(coverage.clone());
        }
        let mut counts = ConfusionCounts::new();
        let mut misclassified = 0;
        for (_, b) in &bases {
            render::fanout_with(&b.image, &b.manifest, &b.stem, |v| {
                let truth = v.manifest.class_id;
                let img = ImageRef::new(v.image).with_manifest_id(v.name.clone());
                let predicted = match pick_detection(detector.detect(&img)?) {
                    Ok(d) => Some(d.class),
                    Err(Error::NoDocumentFound) => None,
                    Err(e) => return Err(e),
                };
                counts.record(truth, predicted);
                if predicted != Some(truth) {
                    misclassified += 1;
                    let png = dataset::encode_png(img.image())?;
                    let identified = predicted.map_or(NONE_CLASS, |c| c.id());
                    store.propose(identified, truth.id(), &encode_base64(&png))?;
                    let mut m = v.manifest;
                    m.content_hash = Some(img.content_hash().to_string());
                    hash_index.insert(m);
                }
                Ok(())
            })?;
        }
        let accuracy = counts.accuracy();
        let mut stats = RoundStats {
            round,
            accuracy,
            expected_accuracy: expected_accuracy(&grid, &coverage),
            coverage: coverage.iter().copied().collect(),
            misclassified,
            approved: 0,
            metrics: counts.report(),
        };
        log::info!("round {round}: accuracy {accuracy:.4}, {misclassified} misclassified");
        for req in store.list_requests()? {
            store.approve(req.req_id)?;
            stats.approved += 1;
        }
        outcome.trajectory.push(accuracy);
        outcome.rounds.push(stats);
        if misclassified == 0 {
            break;
        }
        let plan = plan_assembly(base_train.clone(), store.rejected_entries()?, &hash_index);
        coverage = plan.train_pairs();
    }
    Ok(outcome)
}

/// A fresh scratch directory for one simulation run under the system temp
/// directory.
pub fn scratch_dir(seed: u64) -> Result<PathBuf> {
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_nanos());
    let dir = std::env::temp_dir().join(format!("docloop-sim-{seed}-{}-{nanos}", std::process::id()));
    fs::create_dir_all(&dir).at(&dir)?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(id: &str, class: DocumentClass, kind: VariantKind) -> RenderManifest {
        let b = crate::model::BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        RenderManifest {
            manifest_id: id.into(),
            class_id: class,
            kind,
            image_width: 10,
            image_height: 10,
            placement: b,
            anchor_box: b,
            texts: Vec::new(),
            source_serial: 1,
            warnings: Vec::new(),
            content_hash: None,
        }
    }

    #[test]
    fn fallback_is_roughly_uniform() {
        let mut hits = [0u32; 5];
        for i in 0..5000 {
            hits[fallback_class(42, 0, &format!("img_{i}")).index()] += 1;
        }
        for h in hits {
            assert!((900..1100).contains(&h), "{hits:?}");
        }
        assert_eq!(fallback_class(1, 2, "x"), fallback_class(1, 2, "x"));
    }

    #[test]
    fn detector_follows_coverage() {
        let index: ManifestIndex = [
            manifest("a", DocumentClass::Pan, VariantKind::Original),
            manifest("b", DocumentClass::Pan, VariantKind::A4),
        ]
        .into_iter()
        .collect();
        let cov: Coverage = [(DocumentClass::Pan, VariantKind::Original)].into();
        let det = CoverageDetector::new(Arc::new(index), 9, cov);
        let img = |id: &str| ImageRef::new(DynamicImage::new_rgb8(1, 1)).with_manifest_id(id);
        assert_eq!(det.detect(&img("a")).unwrap()[0].class, DocumentClass::Pan);
        assert_eq!(det.detect(&img("b")).unwrap()[0].class, fallback_class(9, 0, "b"));
        assert!(det.detect(&img("zzz")).unwrap().is_empty());
        det.retrain([(DocumentClass::Pan, VariantKind::A4)].into());
        assert_eq!(det.generation(), 1);
        assert_eq!(det.detect(&img("b")).unwrap()[0].class, DocumentClass::Pan);
    }

    #[test]
    fn closed_form() {
        let grid = [
            manifest("a", DocumentClass::Pan, VariantKind::Original),
            manifest("b", DocumentClass::Pan, VariantKind::A4),
        ];
        let cov: Coverage = [(DocumentClass::Pan, VariantKind::Original)].into();
        assert!((expected_accuracy(&grid, &cov) - 0.6).abs() < 1e-12);
        assert_eq!(expected_accuracy(&grid, &Coverage::new()), 0.2);
    }

    #[test]
    fn small_loop_converges() {
        let dir = tempfile::tempdir().unwrap();
        let registry = Registry::bundled();
        let mut opts = SimOptions::new(dir.path());
        opts.per_class = 1;
        let out = simulate_arl_loop(&registry, &opts).unwrap();
        assert_eq!(out.grid_size, 70);
        assert_eq!(*out.trajectory.last().unwrap(), 1.0);
        for w in out.trajectory.windows(2) {
            assert!(w[0] < w[1], "{:?}", out.trajectory);
        }
        let first = &out.rounds[0];
        assert_eq!(first.approved, first.misclassified);
        assert!(simulate_arl_loop(&registry, &opts).is_err());
    }
}
