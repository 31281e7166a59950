use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::sync::{Arc, Barrier};

use docloop_core::dataset::encode_png;
use docloop_core::feedback::{encode_base64, FeedbackStore};
use docloop_core::Error;
use image::{DynamicImage, Rgb, RgbImage};

fn payload(shade: u8) -> String {
    let img = DynamicImage::ImageRgb8(RgbImage::from_pixel(8, 6, Rgb([shade, 0, 0])));
    encode_base64(&encode_png(&img).unwrap())
}

fn files_under(dir: &Path) -> usize {
    let Ok(rd) = fs::read_dir(dir) else { return 0 };
    rd.map(|e| {
        let p = e.unwrap().path();
        if p.is_dir() {
            files_under(&p)
        } else {
            1
        }
    })
    .sum()
}

#[test]
fn lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let store = FeedbackStore::open(dir.path().join("req"), dir.path().join("rej")).unwrap();
    let a = store.propose("adhaar_v1_p1", "pan_v1", &payload(1)).unwrap();
    let b = store.propose("pan_v1", "votercard_v1", &payload(2)).unwrap();
    let ids: Vec<i64> = store.list_requests().unwrap().iter().map(|r| r.req_id).collect();
    assert_eq!(ids, [a, b]);

    let entry = store.approve(a).unwrap();
    assert_eq!(entry.path, Path::new("images").join("pan_v1").join(format!("req_{a}.png")));
    assert!(store.rejected_root().join(&entry.path).is_file());
    assert_eq!(files_under(&store.rejected_root().join("images")), 1);
    let ids: Vec<i64> = store.list_requests().unwrap().iter().map(|r| r.req_id).collect();
    assert_eq!(ids, [b]);

    let before = files_under(store.rejected_root());
    store.reject(b).unwrap();
    assert!(store.list_requests().unwrap().is_empty());
    assert_eq!(files_under(store.rejected_root()), before);
    assert!(matches!(store.reject(b), Err(Error::NotFound(_))));
    assert!(matches!(store.approve(b), Err(Error::NotFound(_))));
}

#[test]
fn concurrent_proposals_get_unique_ids() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(FeedbackStore::open(dir.path().join("req"), dir.path().join("rej")).unwrap());
    let barrier = Arc::new(Barrier::new(100));
    let handles: Vec<_> = (0..100u8)
        .map(|i| {
            let store = store.clone();
            let barrier = barrier.clone();
            std::thread::spawn(move || {
                let body = payload(i);
                barrier.wait();
                store.propose("adhaar_v1_p1", "passport_v1_p1", &body).unwrap()
            })
        })
        .collect();
    let ids: BTreeSet<i64> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert_eq!(ids.len(), 100);
    let listed: BTreeSet<i64> = store.list_requests().unwrap().iter().map(|r| r.req_id).collect();
    assert_eq!(listed, ids);
}

#[test]
fn approve_and_reject_race_has_one_winner() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(FeedbackStore::open(dir.path().join("req"), dir.path().join("rej")).unwrap());
    for round in 0..25u8 {
        let id = store.propose("pan_v1", "adhaar_v1_p1", &payload(round)).unwrap();
        let barrier = Arc::new(Barrier::new(2));
        let (s1, b1) = (store.clone(), barrier.clone());
        let approver = std::thread::spawn(move || {
            b1.wait();
            s1.approve(id).map(|_| ())
        });
        let (s2, b2) = (store.clone(), barrier);
        let rejecter = std::thread::spawn(move || {
            b2.wait();
            s2.reject(id)
        });
        let results = [approver.join().unwrap(), rejecter.join().unwrap()];
        let wins = results.iter().filter(|r| r.is_ok()).count();
        assert_eq!(wins, 1, "round {round}: {results:?}");
        for r in &results {
            if let Err(e) = r {
                assert!(matches!(e, Error::NotFound(x) if *x == id), "{e}");
            }
        }
        assert!(store.list_requests().unwrap().is_empty());
    }
}
