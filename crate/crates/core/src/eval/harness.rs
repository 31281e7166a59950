use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{self, Split};
use crate::error::{Error, IoContext, Result};
use crate::model::{DocumentClass, ImageRef};
use crate::pipeline::{validate, Pipeline};

use super::metrics::{ConfusionCounts, MetricsReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    /// Resolve images by content hash only, ignoring their file stems.
    pub by_hash: bool,
    /// Also run extraction and compare against the annotation file.
    pub extract: bool,
    pub threads: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            by_hash: false,
            extract: true,
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

/// One scored image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageOutcome {
    pub name: String,
    pub truth: DocumentClass,
    pub predicted: Option<DocumentClass>,
    /// Similarity of the extracted line to the annotation, when both exist.
    /// An extraction error scores 0.
    pub validation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// A sample handed to [`evaluate_samples`]: the image, its true class and
/// the expected annotation line.
pub struct Sample {
    pub name: String,
    pub image: ImageRef,
    pub truth: DocumentClass,
    pub annotation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub counts: ConfusionCounts,
    pub images: Vec<ImageOutcome>,
}

impl EvalOutcome {
    pub fn merge(&mut self, other: EvalOutcome) {
        self.counts.merge(&other.counts);
        self.images.extend(other.images);
    }

    pub fn metrics(&self) -> MetricsReport {
        self.counts.report()
    }

    pub fn accuracy(&self) -> f64 {
        self.counts.accuracy()
    }

    fn ratios(&self) -> impl Iterator<Item = f64> + '_ {
        self.images.iter().filter_map(|i| i.validation)
    }

    pub fn validated(&self) -> usize {
        self.ratios().count()
    }

    pub fn mean_validation(&self) -> Option<f64> {
        let n = self.validated();
        (n > 0).then(|| self.ratios().sum::<f64>() / n as f64)
    }

    pub fn min_validation(&self) -> Option<f64> {
        self.ratios().reduce(f64::min)
    }
}

/// Scores one sample: identify, then extract with the predicted class and
/// validate against the annotation.
pub fn evaluate_sample(pipeline: &Pipeline, sample: &Sample, extract: bool) -> Result<ImageOutcome> {
    let mut outcome = ImageOutcome {
        name: sample.name.clone(),
        truth: sample.truth,
        predicted: None,
        validation: None,
        error: None,
    };
    match pipeline.identify(&sample.image) {
        Ok(d) => outcome.predicted = Some(d.class),
        Err(Error::NoDocumentFound) => outcome.error = Some(Error::NoDocumentFound.to_string()),
        Err(e) => return Err(e),
    }
    if let (true, Some(expected), Some(class)) = (extract, &sample.annotation, outcome.predicted) {
        match pipeline.extract(&sample.image, Some(class)) {
            Ok(r) => outcome.validation = Some(validate(&r.serialized, expected)),
            Err(e @ (Error::AnchorNotFound(_) | Error::DegenerateAnchor(_))) => {
                outcome.validation = Some(0.0);
                outcome.error = Some(e.to_string());
            }
            Err(e) => return Err(e),
        }
    }
    Ok(outcome)
}

fn fold(outcomes: Vec<ImageOutcome>) -> EvalOutcome {
    let mut counts = ConfusionCounts::new();
    for o in &outcomes {
        counts.record(o.truth, o.predicted);
    }
    EvalOutcome {
        counts,
        images: outcomes,
    }
}

/// Scores in-memory samples, spread over `threads` workers. Results keep
/// the input order.
pub fn evaluate_samples(pipeline: &Pipeline, samples: &[Sample], extract: bool, threads: usize) -> Result<EvalOutcome> {
    let chunk = samples.len().div_ceil(threads.max(1)).max(1);
    let parts: Vec<Result<Vec<ImageOutcome>>> = std::thread::scope(|s| {
        let handles: Vec<_> = samples
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|x| evaluate_sample(pipeline, x, extract))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation worker panicked"))
            .collect()
    });
    let mut all = Vec::with_capacity(samples.len());
    for p in parts {
        all.extend(p?);
    }
    Ok(fold(all))
}

fn load_sample(root: &Path, split: Split, path: &Path, by_hash: bool) -> Result<Sample> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Schema(format!("image name {}", path.display())))?
        .to_string();
    let label_path = dataset::labels_dir(root, split).join(format!("{stem}.txt"));
    let label = fs::read_to_string(&label_path).at(&label_path)?;
    let (truth, _) = dataset::parse_label(label.trim())?;
    let ann_path: PathBuf = dataset::annotation_dir(root, split).join(format!("{stem}.txt"));
    let annotation = match fs::read_to_string(&ann_path) {
        Ok(s) => Some(s.trim_end_matches(['\r', '\n']).to_string()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(Error::io(&ann_path, e)),
    };
    let mut image = ImageRef::open(path)?;
    if !by_hash {
        image = image.with_manifest_id(stem.clone());
    }
    Ok(Sample {
        name: stem,
        image,
        truth,
        annotation,
    })
}

/// Evaluates every image of one split of a dataset tree. Ground truth comes
/// from the label files; annotations are optional. Each worker decodes one
/// image at a time, so memory stays bounded on A4 pages.
pub fn evaluate(root: &Path, split: Split, pipeline: &Pipeline, opts: &EvalOptions) -> Result<EvalOutcome> {
    let paths = dataset::list_images(root, split)?;
    let chunk = paths.len().div_ceil(opts.threads.max(1)).max(1);
    let parts: Vec<Result<Vec<ImageOutcome>>> = std::thread::scope(|s| {
        let handles: Vec<_> = paths
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|p| {
                            let sample = load_sample(root, split, p, opts.by_hash)?;
                            evaluate_sample(pipeline, &sample, opts.extract)
                        })
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation worker panicked"))
            .collect()
    });
    let mut all = Vec::with_capacity(paths.len());
    for p in parts {
        all.extend(p?);
    }
    Ok(fold(all))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::dataset::{build_dataset, BuildOptions};
    use crate::manifest::ManifestIndex;
    use crate::model::{BBox, DetectionResult, OcrSpan};
    use crate::pipeline::{DetectorBackend, OcrBackend};
    use crate::templates::Registry;

    struct AlwaysAdhaar;

    impl DetectorBackend for AlwaysAdhaar {
        fn detect(&self, _: &ImageRef) -> Result<Vec<DetectionResult>> {
            Ok(vec![DetectionResult::new(
                DocumentClass::Adhaar,
                BBox::new(0.0, 0.0, 1.0, 1.0)?,
                0.9,
            )?])
        }
    }

    struct Blind;

    impl OcrBackend for Blind {
        fn read(&self, _: &ImageRef, _: Option<&BBox>) -> Result<Vec<OcrSpan>> {
            Ok(Vec::new())
        }
    }

    fn tiny_dataset() -> (tempfile::TempDir, Arc<Registry>) {
        let dir = tempfile::tempdir().unwrap();
        let registry = Arc::new(Registry::bundled());
        let mut opts = BuildOptions::new(1, 7);
        opts.hash = true;
        build_dataset(dir.path(), &registry, &opts).unwrap();
        (dir, registry)
    }

    #[test]
    fn oracle_and_constant_stub() {
        let (dir, registry) = tiny_dataset();
        // a single base per class lands in the test split
        let index = Arc::new(ManifestIndex::load_jsonl(dataset::manifests_path(dir.path())).unwrap());
        let oracle = Pipeline::oracle(index, registry.clone());
        let opts = EvalOptions::default();
        let out = evaluate(dir.path(), Split::Test, &oracle, &opts).unwrap();
        assert_eq!(out.counts.total_images, 70);
        assert_eq!(out.accuracy(), 1.0);
        assert_eq!(out.validated(), 70);
        assert_eq!(out.min_validation(), Some(1.0));
        let by_hash = evaluate(
            dir.path(),
            Split::Test,
            &oracle,
            &EvalOptions { by_hash: true, ..opts },
        )
        .unwrap();
        assert_eq!(by_hash.accuracy(), 1.0);
        assert_eq!(by_hash.min_validation(), Some(1.0));

        let stub = Pipeline::new(Arc::new(AlwaysAdhaar), Arc::new(Blind), registry);
        let out = evaluate(dir.path(), Split::Test, &stub, &opts).unwrap();
        assert!((out.accuracy() - 0.2).abs() < 1e-12);
        let report = out.metrics();
        assert_eq!(report.per_class[&DocumentClass::Adhaar].tp, 14);
        let sum: u64 = out.counts.per_class.values().map(|c| c.tp + c.fn_).sum();
        assert_eq!(sum, out.counts.total_images);
        // no OCR, so every extraction misses the anchor
        assert_eq!(out.max_error_free(), 0);
    }

    impl EvalOutcome {
        fn max_error_free(&self) -> usize {
            self.images.iter().filter(|i| i.error.is_none()).count()
        }
    }
}
