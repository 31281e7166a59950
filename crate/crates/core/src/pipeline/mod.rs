//! Identify, find the anchor, map regions, OCR the crops and validate,
//! over pluggable detector and OCR backends.

pub mod oracle;
pub mod subprocess;

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{clamp_to_image, crop_window, map_region, AnchorCorrespondence};
use crate::model::{join_fields, scrub_value, BBox, DetectionResult, DocumentClass, ImageRef, OcrSpan};
use crate::similarity::similarity;
use crate::templates::Registry;

pub use oracle::OracleBackend;
pub use subprocess::SubprocessBackend;

/// Default similarity needed for a span to count as the anchor text.
pub const ANCHOR_THRESHOLD: f64 = 0.8;

pub trait DetectorBackend: Send + Sync {
    fn detect(&self, img: &ImageRef) -> Result<Vec<DetectionResult>>;
}

/// Spans come back in reading order with boxes in the coordinates of `img`.
pub trait OcrBackend: Send + Sync {
    fn read(&self, img: &ImageRef, crop: Option<&BBox>) -> Result<Vec<OcrSpan>>;
}

/// Sorts spans top-to-bottom, then left-to-right.
pub fn sort_reading_order(spans: &mut [OcrSpan]) {
    spans.sort_by(|a, b| {
        a.bbox
            .y0()
            .total_cmp(&b.bbox.y0())
            .then(a.bbox.x0().total_cmp(&b.bbox.x0()))
    });
}

/// Highest-confidence detection; the earliest wins a tie.
pub fn pick_detection(detections: Vec<DetectionResult>) -> Result<DetectionResult> {
    let mut best: Option<DetectionResult> = None;
    for d in detections {
        if best.as_ref().is_none_or(|b| d.confidence > b.confidence) {
            best = Some(d);
        }
    }
    best.ok_or(Error::NoDocumentFound)
}

/// Box of the span most similar to `identifying_text`, if any reaches
/// `threshold`. The earliest span wins a tie.
pub fn find_anchor(spans: &[OcrSpan], identifying_text: &str, threshold: f64) -> Result<BBox> {
    let mut best: Option<(f64, BBox)> = None;
    for span in spans {
        let score = similarity(identifying_text, &span.text);
        if score >= threshold && best.is_none_or(|(s, _)| score > s) {
            best = Some((score, span.bbox));
        }
    }
    best.map(|(_, b)| b)
        .ok_or_else(|| Error::AnchorNotFound(identifying_text.to_string()))
}

/// Joins span texts with single spaces and trims the result.
pub fn join_spans(spans: &[OcrSpan]) -> String {
    let mut out = String::new();
    for s in spans {
        out.push(' ');
        out.push_str(&s.text);
    }
    out.trim().to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtractionResult {
    pub class_id: DocumentClass,
    pub confidence: f64,
    pub anchor_box: BBox,
    pub fields: Vec<(String, String)>,
    pub serialized: String,
    /// Mapped region per field before clamping.
    pub per_region_boxes: Vec<(String, BBox)>,
}

pub fn validate(extracted: &str, ground_truth: &str) -> f64 {
    similarity(extracted, ground_truth)
}

#[derive(Clone)]
pub struct Pipeline {
    detector: Arc<dyn DetectorBackend>,
    ocr: Arc<dyn OcrBackend>,
    registry: Arc<Registry>,
    threshold: f64,
}

impl Pipeline {
    pub fn new(
        detector: Arc<dyn DetectorBackend>,
        ocr: Arc<dyn OcrBackend>,
        registry: Arc<Registry>,
    ) -> Self {
        Pipeline {
            detector,
            ocr,
            registry,
            threshold: ANCHOR_THRESHOLD,
        }
    }

    /// Both stages answered from the same manifest index.
    pub fn oracle(index: Arc<crate::manifest::ManifestIndex>, registry: Arc<Registry>) -> Self {
        let backend = Arc::new(OracleBackend::new(index));
        Pipeline::new(backend.clone(), backend, registry)
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn identify(&self, img: &ImageRef) -> Result<DetectionResult> {
        pick_detection(self.detector.detect(img)?)
    }

    /// Extracts every annotated field. Without a class the detector decides
    /// it first; a supplied class is taken with confidence 1.
    pub fn extract(&self, img: &ImageRef, class: Option<DocumentClass>) -> Result<ExtractionResult> {
        let (class, confidence) = match class {
            Some(c) => (c, 1.0),
            None => {
                let d = self.identify(img)?;
                (d.class, d.confidence)
            }
        };
        let template = self.registry.get(class);
        let spans = self.ocr.read(img, None)?;
        let anchor = find_anchor(&spans, template.identifying_text(), self.threshold)?;
        let corr = AnchorCorrespondence::new(template.identified_box(), anchor)?;
        let (w, h) = (img.width(), img.height());

        let mut fields = Vec::with_capacity(template.field_order.len());
        let mut per_region_boxes = Vec::with_capacity(template.field_order.len());
        for region in template.ordered_regions() {
            let mapped = map_region(&corr, &region.region_box);
            per_region_boxes.push((region.code.clone(), mapped));
            let window = clamp_to_image(&mapped, w, h).and_then(|b| crop_window(&b));
            let text = match window {
                Ok((x, y, cw, ch)) => {
                    let crop = BBox::new(x as f64, y as f64, (x + cw) as f64, (y + ch) as f64)?;
                    scrub_value(&join_spans(&self.ocr.read(img, Some(&crop))?))
                }
                Err(Error::EmptyCrop) => String::new(),
                Err(e) => return Err(e),
            };
            fields.push((region.code.clone(), text));
        }
        let serialized = join_fields(fields.iter().map(|(_, v)| v.as_str()));
        Ok(ExtractionResult {
            class_id: class,
            confidence,
            anchor_box: anchor,
            fields,
            serialized,
            per_region_boxes,
        })
    }
}
