//! Out-of-process detector/OCR over a line-delimited JSON protocol.
//!
//! Each request is one JSON object on stdin:
//! `{"op": "detect" | "read", "image_path": "...", "crop": [x0, y0, x1, y1]?}`.
//! Each reply is one JSON object on stdout carrying `detections`, `spans` or
//! `error`.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BBox, DetectionResult, ImageRef, OcrSpan};

use super::{sort_reading_order, DetectorBackend, OcrBackend};

#[derive(Debug, Serialize)]
struct Request<'a> {
    op: &'a str,
    image_path: &'a Path,
    #[serde(skip_serializing_if = "Option::is_none")]
    crop: Option<&'a BBox>,
}

#[derive(Debug, Deserialize)]
struct Response {
    #[serde(default)]
    detections: Option<Vec<DetectionResult>>,
    #[serde(default)]
    spans: Option<Vec<OcrSpan>>,
    #[serde(default)]
    error: Option<String>,
}

struct Channel {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

pub struct SubprocessBackend {
    channel: Mutex<Channel>,
    scratch: PathBuf,
    counter: AtomicU64,
}

impl SubprocessBackend {
    /// Starts `program` with `args`; the child must speak the protocol on its
    /// standard streams.
    pub fn spawn(program: impl AsRef<std::ffi::OsStr>, args: &[&str]) -> Result<Self> {
        let mut child = Command::new(program.as_ref())
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Backend(format!("spawn {:?}: {e}", program.as_ref())))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(SubprocessBackend {
            channel: Mutex::new(Channel {
                child,
                stdin,
                stdout,
            }),
            scratch: std::env::temp_dir(),
            counter: AtomicU64::new(0),
        })
    }

    /// Directory for images that have no file of their own.
    pub fn with_scratch_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.scratch = dir.into();
        self
    }

    fn call(&self, op: &str, img: &ImageRef, crop: Option<&BBox>) -> Result<Response> {
        let mut temp = None;
        let path = match img.path() {
            Some(p) => p.to_path_buf(),
            None => {
                let n = self.counter.fetch_add(1, Ordering::Relaxed);
                let p = self
                    .scratch
                    .join(format!("docloop-{}-{n}.png", std::process::id()));
                let bytes = crate::dataset::encode_png(img.image())?;
                std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
                temp = Some(p.clone());
                p
            }
        };
        let result = self.exchange(&Request {
            op,
            image_path: &path,
            crop,
        });
        if let Some(p) = temp {
            let _ = std::fs::remove_file(p);
        }
        let resp = result?;
        match resp.error {
            Some(e) => Err(Error::Backend(e)),
            None => Ok(resp),
        }
    }

    fn exchange(&self, req: &Request<'_>) -> Result<Response> {
        let mut ch = self.channel.lock().unwrap_or_else(|p| p.into_inner());
        let mut line = serde_json::to_string(req)?;
        line.push('\n');
        ch.stdin
            .write_all(line.as_bytes())
            .and_then(|_| ch.stdin.flush())
            .map_err(|e| Error::Backend(format!("write to backend: {e}")))?;
        let mut reply = String::new();
        let n = ch
            .stdout
            .read_line(&mut reply)
            .map_err(|e| Error::Backend(format!("read from backend: {e}")))?;
        if n == 0 {
            return Err(Error::Backend("backend closed its output".into()));
        }
        serde_json::from_str(&reply).map_err(|e| Error::Backend(format!("bad reply {reply:?}: {e}")))
    }
}

impl Drop for SubprocessBackend {
    fn drop(&mut self) {
        let ch = self.channel.get_mut().unwrap_or_else(|p| p.into_inner());
        let _ = ch.child.kill();
        let _ = ch.child.wait();
    }
}

impl DetectorBackend for SubprocessBackend {
    fn detect(&self, img: &ImageRef) -> Result<Vec<DetectionResult>> {
        let resp = self.call("detect", img, None)?;
        let raw = resp
            .detections
            .ok_or_else(|| Error::Backend("reply lacks detections".into()))?;
        raw.into_iter()
            .map(|d| DetectionResult::new(d.class, d.bbox, d.confidence))
            .collect()
    }
}

impl OcrBackend for SubprocessBackend {
    fn read(&self, img: &ImageRef, crop: Option<&BBox>) -> Result<Vec<OcrSpan>> {
        let resp = self.call("read", img, crop)?;
        let raw = resp
            .spans
            .ok_or_else(|| Error::Backend("reply lacks spans".into()))?;
        let mut spans = raw
            .into_iter()
            .map(|s| OcrSpan::new(s.bbox, s.text, s.score))
            .collect::<Result<Vec<_>>>()?;
        sort_reading_order(&mut spans);
        Ok(spans)
    }
}
