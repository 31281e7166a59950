use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use docloop_core::dataset::{self, build_dataset, BuildOptions, Split};
use docloop_core::eval::{evaluate, EvalOptions};
use docloop_core::feedback::{assemble_dataset, encode_base64, FeedbackStore};
use docloop_core::manifest::ManifestIndex;
use docloop_core::pipeline::Pipeline;
use docloop_core::templates::Registry;
use docloop_core::DocumentClass;
use image::{DynamicImage, Rgb, RgbImage};

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn subtree(t: &BTreeMap<String, Vec<u8>>, prefix: &str) -> BTreeMap<String, Vec<u8>> {
    t.iter()
        .filter(|(k, _)| k.starts_with(prefix))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect()
}

fn base_dataset(root: &Path) {
    let mut opts = BuildOptions::new(2, 42);
    opts.classes = vec![DocumentClass::Pan];
    let summary = build_dataset(root, &Registry::bundled(), &opts).unwrap();
    assert_eq!(summary.count(Split::Train), 14);
    assert_eq!(summary.count(Split::Test), 14);
}

#[test]
fn assembly_counts_idempotency_and_untouched_eval_splits() {
    let work = tempfile::tempdir().unwrap();
    let base = work.path().join("base");
    let out = work.path().join("out");
    base_dataset(&base);
    let store = FeedbackStore::open(work.path().join("requests"), work.path().join("rejected")).unwrap();

    // nothing approved yet: the assembled tree is the base tree
    let summary = assemble_dataset(&base, store.rejected_root(), &out).unwrap();
    assert_eq!(summary.base_count, 14);
    assert_eq!(summary.rejected_count, 0);
    assert_eq!(tree(&base.join("data")), tree(&out.join("data")));

    // a known render, filed under the wrong class, fans out to 14
    let known = dataset::images_dir(&base, Split::Test).join("pan_v1_2_a4_100_1000_greyscale.png");
    let known_bytes = fs::read(&known).expect("variant exists");
    let id_known = store.propose("adhaar_v1_p1", "pan_v1", &encode_base64(&known_bytes)).unwrap();
    store.approve(id_known).unwrap();
    // an image nobody rendered gets itself plus a greyscale copy
    let stranger = DynamicImage::ImageRgb8(RgbImage::from_pixel(40, 30, Rgb([200, 10, 10])));
    let png = dataset::encode_png(&stranger).unwrap();
    let id_stranger = store.propose("pan_v1", "passport_v1_p1", &encode_base64(&png)).unwrap();
    store.approve(id_stranger).unwrap();

    let summary = assemble_dataset(&base, store.rejected_root(), &out).unwrap();
    assert_eq!(summary.rejected_count, 2);
    assert_eq!(summary.variant_count, 16);
    assert_eq!(dataset::list_images(&out, Split::Train).unwrap().len(), 14 + 14 + 2);
    let first = tree(&out.join("data"));
    let base_tree = tree(&base.join("data"));
    for split in ["validation", "test"] {
        for kind in ["images", "annotation", "labels"] {
            let prefix = format!("{kind}/{split}");
            assert_eq!(subtree(&first, &prefix), subtree(&base_tree, &prefix), "{prefix}");
        }
    }

    // the fanned-out entry carries the source annotation
    let source_ann = fs::read_to_string(dataset::annotation_dir(&base, Split::Test).join("pan_v1_2.txt")).unwrap();
    let rejected_ann = fs::read_to_string(
        dataset::annotation_dir(&out, Split::Train).join(format!("rejected_{id_known}_a4_1500_2000.txt")),
    )
    .unwrap();
    assert_eq!(source_ann, rejected_ann);
    let counts = docloop_core::feedback::class_counts(&out, Split::Train).unwrap();
    assert_eq!(counts[&DocumentClass::Pan], 28);
    assert_eq!(counts[&DocumentClass::Passport], 2);

    // running again reproduces the tree byte for byte
    assemble_dataset(&base, store.rejected_root(), &out).unwrap();
    assert_eq!(first, tree(&out.join("data")));

    // the merged manifests let the oracle read the new train renders
    let index = Arc::new(ManifestIndex::load_jsonl(dataset::manifests_path(&out)).unwrap());
    let oracle = Pipeline::oracle(index, Arc::new(Registry::bundled()));
    let eval = evaluate(&out, Split::Train, &oracle, &EvalOptions::default()).unwrap();
    let misses: Vec<_> = eval.images.iter().filter(|i| i.predicted != Some(i.truth)).map(|i| i.name.as_str()).collect();
    assert_eq!(misses, [format!("rejected_{id_stranger}"), format!("rejected_{id_stranger}_greyscale")]);
    assert!(eval
        .images
        .iter()
        .filter(|i| i.predicted.is_some())
        .all(|i| i.validation == Some(1.0)));
}

#[test]
fn refuses_to_replace_a_non_dataset() {
    let work = tempfile::tempdir().unwrap();
    let base = work.path().join("base");
    base_dataset(&base);
    let out = work.path().join("out");
    fs::create_dir_all(out.join("data")).unwrap();
    fs::write(out.join("data").join("keep.txt"), "mine").unwrap();
    let rejected = work.path().join("rejected");
    assert!(assemble_dataset(&base, &rejected, &out).is_err());
    assert_eq!(fs::read_to_string(out.join("data").join("keep.txt")).unwrap(), "mine");
}
