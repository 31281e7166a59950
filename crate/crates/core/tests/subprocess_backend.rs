use std::fs;
use std::sync::Arc;

use docloop_core::dataset::encode_png;
use docloop_core::idgen::{generate_record, GenSeed};
use docloop_core::manifest::write_jsonl;
use docloop_core::pipeline::{Pipeline, SubprocessBackend};
use docloop_core::render::{fanout, render_base};
use docloop_core::templates::Registry;
use docloop_core::{DocumentClass, Error, ImageRef};
use image::DynamicImage;

// Answers from manifests keyed by the image file stem.
const SCRIPT: &str = r#"
import json, os, sys
manifests = {}
with open(sys.argv[1]) as f:
    for line in f:
        if line.strip():
            m = json.loads(line)
            manifests[m["manifest_id"]] = m
for line in sys.stdin:
    req = json.loads(line)
    stem = os.path.splitext(os.path.basename(req["image_path"]))[0]
    m = manifests.get(stem)
    if m is None:
        out = {"error": "unknown image " + stem}
    elif req["op"] == "detect":
        out = {"detections": [{"class_id": m["class_id"], "box": m["placement"], "confidence": 0.97}]}
    else:
        crop = req.get("crop")
        spans = []
        for t in reversed(m["texts"]):
            x0, y0, x1, y1 = t["box"]
            cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
            if crop is None or (crop[0] <= cx < crop[2] and crop[1] <= cy < crop[3]):
                spans.append({"box": t["box"], "text": t["text"], "score": 0.9})
        out = {"spans": spans}
    sys.stdout.write(json.dumps(out) + "\n")
    sys.stdout.flush()
"#;

#[test]
fn pipeline_over_a_subprocess() {
    let dir = tempfile::tempdir().unwrap();
    let registry = Registry::bundled();
    let rec = generate_record(DocumentClass::DrivingLicence, 1620240000005, GenSeed::new(3, 10)).unwrap();
    let (img, manifest) = render_base(&rec, registry.get(DocumentClass::DrivingLicence), "dl_5").unwrap();
    let variants = fanout(&DynamicImage::ImageRgb8(img), &manifest, "dl_5").unwrap();
    let manifests_path = dir.path().join("manifests.jsonl");
    write_jsonl(&manifests_path, variants.iter().map(|v| &v.manifest)).unwrap();
    let script = dir.path().join("backend.py");
    fs::write(&script, SCRIPT).unwrap();

    let backend = Arc::new(
        SubprocessBackend::spawn("python3", &[script.to_str().unwrap(), manifests_path.to_str().unwrap()])
            .unwrap()
            .with_scratch_dir(dir.path()),
    );
    let pipeline = Pipeline::new(backend.clone(), backend, Arc::new(registry));
    let expected = rec.annotation.serialize().unwrap();
    for v in variants.iter().step_by(3) {
        let path = dir.path().join(format!("{}.png", v.name));
        fs::write(&path, encode_png(&v.image).unwrap()).unwrap();
        let img = ImageRef::open(&path).unwrap();
        let d = pipeline.identify(&img).unwrap();
        assert_eq!(d.class, DocumentClass::DrivingLicence);
        assert_eq!(d.confidence, 0.97);
        let r = pipeline.extract(&img, None).unwrap();
        assert_eq!(r.serialized, expected, "{}", v.name);
    }

    // images without a file go through a scratch PNG, unknown to the script
    let loose = ImageRef::new(variants[0].image.clone());
    match pipeline.identify(&loose) {
        Err(Error::Backend(msg)) => assert!(msg.contains("unknown image"), "{msg}"),
        other => panic!("{other:?}"),
    }
    let leftovers = fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("docloop-"))
        .count();
    assert_eq!(leftovers, 0);
}

#[test]
fn dead_backend_is_an_error() {
    let backend = Arc::new(SubprocessBackend::spawn("true", &[]).unwrap());
    let pipeline = Pipeline::new(backend.clone(), backend, Arc::new(Registry::bundled()));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.png");
    fs::write(&path, encode_png(&DynamicImage::new_rgb8(4, 4)).unwrap()).unwrap();
    assert!(matches!(pipeline.identify(&ImageRef::open(&path).unwrap()), Err(Error::Backend(_))));
}
