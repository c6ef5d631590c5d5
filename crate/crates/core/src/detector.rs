//! Client side of the `clipforge-detect v1` protocol.
//!
//! The backend is a child process speaking newline-delimited messages over
//! its standard input and output:
//!
//! ```text
//! -> HELLO clipforge-detect v1
//! <- READY <model-name>
//! -> {"id":1,"op":"detect","path":"frames/v01/0.png"}
//! <- {"id":1,"boxes":[{"x":4.0,"y":2.0,"w":10.0,"h":20.0,"label":"person","score":0.93}]}
//! -> {"op":"quit"}
//! ```
//!
//! Requests are pipelined in windows and matched back by id, so the order of
//! results always equals the order of requests.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{DetectorError, Error, Result};

pub const HANDSHAKE: &str = "HELLO clipforge-detect v1";
pub const PERSON_LABEL: &str = "person";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub label: String,
    pub score: f64,
}

impl DetectionBox {
    pub fn person(x: f64, y: f64, w: f64, h: f64, score: f64) -> Self {
        DetectionBox {
            x,
            y,
            w,
            h,
            label: PERSON_LABEL.into(),
            score,
        }
    }

    pub fn is_person(&self) -> bool {
        self.label == PERSON_LABEL
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(0.0..=1.0).contains(&self.score) {
            return Err(format!("score {} outside [0, 1]", self.score));
        }
        if !(self.w > 0.0 && self.h > 0.0) {
            return Err(format!("box size {}x{} is not positive", self.w, self.h));
        }
        if !(self.x.is_finite() && self.y.is_finite()) {
            return Err("box origin is not finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionFrame {
    pub video_id: String,
    pub frame_index: u64,
    pub boxes: Vec<DetectionBox>,
}

/// Anything that turns frame images into detections.
pub trait Detector: Send {
    fn model_name(&self) -> &str;

    /// One result per input path, in input order. Paths must follow the
    /// `frames/<video_id>/<index>.png` layout.
    fn detect_batch(&mut self, frames: &[PathBuf]) -> Result<Vec<DetectionFrame>>;
}

/// Recovers `(video_id, frame_index)` from a frame image path.
pub fn parse_frame_path(path: &Path) -> Result<(String, u64)> {
    let bad = || Error::Detector(DetectorError::FramePath(path.to_owned()));
    let index = path
        .file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.parse::<u64>().ok())
        .ok_or_else(bad)?;
    let video_id = path
        .parent()
        .and_then(Path::file_name)
        .and_then(|s| s.to_str())
        .filter(|s| !s.is_empty())
        .ok_or_else(bad)?;
    Ok((video_id.to_owned(), index))
}

#[derive(Serialize)]
struct DetectRequest<'a> {
    id: u64,
    op: &'static str,
    path: &'a str,
}

#[derive(Deserialize)]
struct DetectResponse {
    id: u64,
    #[serde(default)]
    boxes: Vec<DetectionBox>,
    #[serde(default)]
    error: Option<String>,
}

/// A detector backend running as a child process.
pub struct ProcessDetector {
    cmd: String,
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<String>,
    model: String,
    next_id: u64,
    timeout: Duration,
    window: usize,
    dead: bool,
}

/// Spawns `backend_cmd` (whitespace-separated argv) and performs the handshake.
pub fn open_session(backend_cmd: &str, timeout: Duration) -> Result<ProcessDetector> {
    let argv: Vec<&str> = backend_cmd.split_whitespace().collect();
    let spawn_err = |msg: String| {
        Error::Detector(DetectorError::Spawn {
            cmd: backend_cmd.to_owned(),
            msg,
        })
    };
    let (program, args) = argv
        .split_first()
        .ok_or_else(|| spawn_err("empty command".into()))?;
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| spawn_err(e.to_string()))?;

    let stdout = child.stdout.take().expect("piped stdout");
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in BufReader::new(stdout).lines() {
            let Ok(line) = line else { break };
            if tx.send(line).is_err() {
                break;
            }
        }
    });

    let stdin = child.stdin.take();
    let mut session = ProcessDetector {
        cmd: backend_cmd.to_owned(),
        child,
        stdin,
        lines: rx,
        model: String::new(),
        next_id: 1,
        timeout,
        window: 64,
        dead: false,
    };
    session.handshake()?;
    Ok(session)
}

impl ProcessDetector {
    pub fn command(&self) -> &str {
        &self.cmd
    }

    pub fn is_dead(&self) -> bool {
        self.dead
    }

    /// Maximum number of requests in flight at once.
    pub fn set_window(&mut self, window: usize) {
        self.window = window.max(1);
    }

    fn kill(&mut self, err: DetectorError) -> Error {
        self.dead = true;
        self.stdin = None;
        let _ = self.child.kill();
        let _ = self.child.wait();
        Error::Detector(err)
    }

    fn send(&mut self, line: &str) -> Result<()> {
        let ok = match self.stdin.as_mut() {
            Some(stdin) => stdin
                .write_all(line.as_bytes())
                .and_then(|_| stdin.write_all(b"\n"))
                .and_then(|_| stdin.flush())
                .is_ok(),
            None => false,
        };
        if ok {
            Ok(())
        } else {
            Err(self.kill(DetectorError::Crashed))
        }
    }

    fn recv(&mut self, during: &'static str) -> Result<String> {
        match self.lines.recv_timeout(self.timeout) {
            Ok(line) => Ok(line),
            Err(RecvTimeoutError::Timeout) => Err(self.kill(DetectorError::Timeout {
                secs: self.timeout.as_secs_f64(),
                during,
            })),
            Err(RecvTimeoutError::Disconnected) => Err(self.kill(DetectorError::Crashed)),
        }
    }

    fn handshake(&mut self) -> Result<()> {
        self.send(HANDSHAKE)?;
        let reply = self.recv("handshake")?;
        let model = reply
            .trim_end()
            .strip_prefix("READY ")
            .map(str::trim)
            .filter(|m| !m.is_empty());
        match model {
            Some(model) => {
                self.model = model.to_owned();
                Ok(())
            }
            None => Err(self.kill(DetectorError::Protocol(format!(
                "expected `READY <model-name>` in answer to `{HANDSHAKE}`, got {reply:?}"
            )))),
        }
    }

    fn run_window(&mut self, chunk: &[(String, u64, &Path)]) -> Result<Vec<Vec<DetectionBox>>> {
        let mut pending: HashMap<u64, usize> = HashMap::with_capacity(chunk.len());
        for (pos, (_, _, path)) in chunk.iter().enumerate() {
            let id = self.next_id;
            self.next_id += 1;
            let path = path.to_string_lossy();
            let request = serde_json::to_string(&DetectRequest {
                id,
                op: "detect",
                path: &path,
            })
            .expect("request serializes");
            self.send(&request)?;
            pending.insert(id, pos);
        }

        let mut results: Vec<Option<Vec<DetectionBox>>> = vec![None; chunk.len()];
        let mut backend_error = None;
        while !pending.is_empty() {
            let line = self.recv("detect")?;
            let oldest = pending.keys().copied().min().unwrap_or(0);
            let response: DetectResponse = match serde_json::from_str(&line) {
                Ok(r) => r,
                Err(e) => {
                    let request_id = serde_json::from_str::<serde_json::Value>(&line)
                        .ok()
                        .and_then(|v| v.get("id").and_then(|id| id.as_u64()))
                        .unwrap_or(oldest);
                    return Err(self.kill(DetectorError::Malformed {
                        request_id,
                        msg: e.to_string(),
                    }));
                }
            };
            let Some(pos) = pending.remove(&response.id) else {
                return Err(self.kill(DetectorError::Protocol(format!(
                    "response for unknown or already answered request {}",
                    response.id
                ))));
            };
            if let Some(msg) = response.error {
                backend_error.get_or_insert(DetectorError::Backend {
                    request_id: response.id,
                    msg,
                });
            }
            if let Some(msg) = response.boxes.iter().find_map(|b| b.validate().err()) {
                return Err(self.kill(DetectorError::Malformed {
                    request_id: response.id,
                    msg,
                }));
            }
            results[pos] = Some(response.boxes);
        }
        if let Some(err) = backend_error {
            return Err(Error::Detector(err));
        }
        Ok(results.into_iter().map(|r| r.expect("every request answered")).collect())
    }
}

impl Detector for ProcessDetector {
    fn model_name(&self) -> &str {
        &self.model
    }

    fn detect_batch(&mut self, frames: &[PathBuf]) -> Result<Vec<DetectionFrame>> {
        if self.dead {
            return Err(Error::Detector(DetectorError::DeadSession));
        }
        let refs = frames
            .iter()
            .map(|p| parse_frame_path(p).map(|(id, idx)| (id, idx, p.as_path())))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(refs.len());
        for chunk in refs.chunks(self.window) {
            let boxes = self.run_window(chunk)?;
            out.extend(
                chunk
                    .iter()
                    .zip(boxes)
                    .map(|((video_id, frame_index, _), boxes)| DetectionFrame {
                        video_id: video_id.clone(),
                        frame_index: *frame_index,
                        boxes,
                    }),
            );
        }
        Ok(out)
    }
}

impl Drop for ProcessDetector {
    fn drop(&mut self) {
        if self.dead {
            return;
        }
        if let Some(mut stdin) = self.stdin.take() {
            let _ = stdin.write_all(b"{\"op\":\"quit\"}\n");
            let _ = stdin.flush();
        }
        let deadline = Instant::now() + Duration::from_secs(2);
        while Instant::now() < deadline {
            match self.child.try_wait() {
                Ok(Some(_)) => return,
                Ok(None) => thread::sleep(Duration::from_millis(10)),
                Err(_) => break,
            }
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Frame index to boxes. In JSON the keys are either a single index (`"3"`)
/// or an inclusive range (`"0-6"`).
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FrameBoxes(pub BTreeMap<u64, Vec<DetectionBox>>);

impl<'de> Deserialize<'de> for FrameBoxes {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = BTreeMap::<String, Vec<DetectionBox>>::deserialize(deserializer)?;
        let mut out = BTreeMap::new();
        for (key, boxes) in raw {
            let bad = || serde::de::Error::custom(format!("bad frame key {key:?}"));
            let (lo, hi) = match key.split_once('-') {
                Some((a, b)) => (
                    a.trim().parse::<u64>().map_err(|_| bad())?,
                    b.trim().parse::<u64>().map_err(|_| bad())?,
                ),
                None => {
                    let i = key.trim().parse::<u64>().map_err(|_| bad())?;
                    (i, i)
                }
            };
            if hi < lo || hi - lo > 10_000_000 {
                return Err(bad());
            }
            if let Some(msg) = boxes.iter().find_map(|b| b.validate().err()) {
                return Err(serde::de::Error::custom(format!("frame key {key:?}: {msg}")));
            }
            for i in lo..=hi {
                out.insert(i, boxes.clone());
            }
        }
        Ok(FrameBoxes(out))
    }
}

/// Scripted detections for tests and offline runs.
///
/// ```json
/// {"model": "stub", "frames": {"3": [{"x":1,"y":1,"w":4,"h":8,"label":"person","score":0.9}]},
///  "videos": {"v01": {"0-149": [ ... ]}}}
/// ```
///
/// A video listed under `videos` uses only its own table; every other video
/// uses `frames`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StubSpec {
    #[serde(default = "default_stub_model")]
    pub model: String,
    #[serde(default)]
    pub frames: FrameBoxes,
    #[serde(default)]
    pub videos: BTreeMap<String, FrameBoxes>,
}

fn default_stub_model() -> String {
    "stub".into()
}

impl StubSpec {
    pub fn from_frames(frames: BTreeMap<u64, Vec<DetectionBox>>) -> Self {
        StubSpec {
            model: default_stub_model(),
            frames: FrameBoxes(frames),
            videos: BTreeMap::new(),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            location: "stub detector spec".into(),
            line: e.line(),
            msg: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Parse { line, msg, .. } => Error::Parse {
                location: path.display().to_string(),
                line,
                msg,
            },
            other => other,
        })
    }
}

/// In-process detector answering from a [`StubSpec`].
#[derive(Debug, Clone)]
pub struct StubDetector {
    spec: StubSpec,
}

pub fn stub_detector(spec: StubSpec) -> StubDetector {
    StubDetector { spec }
}

impl StubDetector {
    fn boxes_for(&self, video_id: &str, frame_index: u64) -> Vec<DetectionBox> {
        let table = self.spec.videos.get(video_id).unwrap_or(&self.spec.frames);
        table.0.get(&frame_index).cloned().unwrap_or_default()
    }
}

impl Detector for StubDetector {
    fn model_name(&self) -> &str {
        &self.spec.model
    }

    fn detect_batch(&mut self, frames: &[PathBuf]) -> Result<Vec<DetectionFrame>> {
        frames
            .iter()
            .map(|path| {
                let (video_id, frame_index) = parse_frame_path(path)?;
                let boxes = self.boxes_for(&video_id, frame_index);
                Ok(DetectionFrame {
                    video_id,
                    frame_index,
                    boxes,
                })
            })
            .collect()
    }
}
