//! Detector and OCR answering from render manifests instead of models.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::manifest::ManifestIndex;
use crate::model::{BBox, DetectionResult, ImageRef, OcrSpan};

use super::{sort_reading_order, DetectorBackend, OcrBackend};

#[derive(Debug, Clone)]
pub struct OracleBackend {
    index: Arc<ManifestIndex>,
}

impl OracleBackend {
    pub fn new(index: Arc<ManifestIndex>) -> Self {
        OracleBackend { index }
    }

    pub fn index(&self) -> &ManifestIndex {
        &self.index
    }
}

impl DetectorBackend for OracleBackend {
    fn detect(&self, img: &ImageRef) -> Result<Vec<DetectionResult>> {
        let m = self.index.resolve(img).ok_or(Error::NoDocumentFound)?;
        Ok(vec![DetectionResult::new(m.class_id, m.placement, 1.0)?])
    }
}

impl OcrBackend for OracleBackend {
    /// Every drawn text whose box centre lies in `crop` (half-open).
    fn read(&self, img: &ImageRef, crop: Option<&BBox>) -> Result<Vec<OcrSpan>> {
        let Some(m) = self.index.resolve(img) else {
            return Ok(Vec::new());
        };
        let mut spans = Vec::new();
        for t in &m.texts {
            let (cx, cy) = t.bbox.center();
            if crop.is_none_or(|c| c.contains_point(cx, cy)) {
                spans.push(OcrSpan::new(t.bbox, t.text.clone(), 1.0)?);
            }
        }
        sort_reading_order(&mut spans);
        Ok(spans)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::idgen::{generate_record, GenSeed};
    use crate::model::DocumentClass;
    use crate::pipeline::Pipeline;
    use crate::render::{fanout, render_base};
    use crate::templates::Registry;
    use image::DynamicImage;

    #[test]
    fn oracle_round_trip_on_every_variant() {
        let reg = Arc::new(Registry::bundled());
        let rec = generate_record(DocumentClass::Adhaar, 91, GenSeed::new(42, 100)).unwrap();
        let (img, m) = render_base(&rec, reg.get(DocumentClass::Adhaar), "adhaar_v1_p1_91").unwrap();
        let variants = fanout(&DynamicImage::ImageRgb8(img), &m, "adhaar_v1_p1_91").unwrap();
        let index: ManifestIndex = variants
            .iter()
            .map(|v| {
                let mut m = v.manifest.clone();
                m.content_hash = Some(crate::model::content_hash(&v.image));
                m
            })
            .collect();
        let pipe = Pipeline::oracle(Arc::new(index), reg);
        let truth = rec.annotation.serialize().unwrap();
        let mut seen = Vec::new();
        for v in &variants {
            let by_id = ImageRef::new(v.image.clone()).with_manifest_id(v.name.clone());
            let d = pipe.identify(&by_id).unwrap();
            assert_eq!((d.class, d.confidence), (DocumentClass::Adhaar, 1.0));
            let r = pipe.extract(&by_id, None).unwrap();
            assert_eq!(r.serialized, truth);
            assert_eq!(super::super::validate(&r.serialized, &truth), 1.0);
            let by_hash = ImageRef::new(v.image.clone());
            assert_eq!(pipe.extract(&by_hash, None).unwrap().serialized, truth);
            seen.push(r.serialized);
        }
        assert!(seen.iter().all(|s| s == &truth));
        assert!(truth.ends_with("::0000 0000 0091"));
    }

    #[test]
    fn crops_select_by_centre() {
        let reg = Registry::bundled();
        let rec = generate_record(DocumentClass::Pan, 3, GenSeed::new(1, 10)).unwrap();
        let (img, m) = render_base(&rec, reg.get(DocumentClass::Pan), "p").unwrap();
        let oracle = OracleBackend::new(Arc::new([m.clone()].into_iter().collect()));
        let img = ImageRef::new(DynamicImage::ImageRgb8(img)).with_manifest_id("p");
        let name_region = reg.get(DocumentClass::Pan).region("NAME").unwrap().region_box;
        let spans = oracle.read(&img, Some(&name_region)).unwrap();
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].text, rec.annotation.value("NAME").unwrap());
        let far = BBox::new(3100.0, 10.0, 3150.0, 20.0).unwrap();
        assert!(oracle.read(&img, Some(&far)).unwrap().is_empty());
        let all = oracle.read(&img, None).unwrap();
        assert_eq!(all.len(), m.texts.len());
        assert!(all.windows(2).all(|w| (w[0].bbox.y0(), w[0].bbox.x0()) <= (w[1].bbox.y0(), w[1].bbox.x0())));
        let unknown = ImageRef::new(DynamicImage::new_rgb8(3, 3));
        assert!(oracle.read(&unknown, None).unwrap().is_empty());
        assert!(matches!(oracle.detect(&unknown), Err(Error::NoDocumentFound)));
    }

    #[test]
    fn empty_crop_keeps_field_count() {
        let reg = Arc::new(Registry::bundled());
        let rec = generate_record(DocumentClass::VoterCard, 2, GenSeed::new(1, 10)).unwrap();
        let (img, mut m) = render_base(&rec, reg.get(DocumentClass::VoterCard), "v").unwrap();
        // move the anchor far right so every mapped region starts past the edge
        let a = m.anchor_box;
        let shifted = a.scale_translate(1.0, 1.0, 3200.0 - a.x0(), 0.0);
        m.texts[0].bbox = shifted;
        let pipe = Pipeline::oracle(Arc::new([m].into_iter().collect()), reg);
        let img = ImageRef::new(DynamicImage::ImageRgb8(img)).with_manifest_id("v");
        let r = pipe.extract(&img, Some(DocumentClass::VoterCard)).unwrap();
        assert_eq!(r.fields.len(), 5);
        assert!(r.fields.iter().any(|(_, v)| v.is_empty()));
        assert_eq!(r.confidence, 1.0);
    }
}
