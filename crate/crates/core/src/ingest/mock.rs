//! In-process HTTP server that imitates the source API for tests and offline runs.
//!
//! A fixture directory holds `assets.jsonl` (one asset record per line, in
//! listing order) and a `media/` directory whose files are served by stem:
//! `media/<video_id>.<ext>` answers `GET /media/<video_id>`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use percent_encoding::percent_decode_str;
use tiny_http::{Header, Request, Response, Server};

use super::SourcePage;
use crate::error::{Error, Result};
use crate::model::VideoAsset;

#[derive(Debug, Clone, Default)]
pub struct MockFixture {
    /// Listing order is preserved per hashtag.
    pub assets: Vec<VideoAsset>,
    pub media: BTreeMap<String, Vec<u8>>,
    pub page_size: usize,
    /// When set, requests must carry `Authorization: Bearer <token>`.
    pub token: Option<String>,
}

impl MockFixture {
    pub fn new(assets: Vec<VideoAsset>) -> Self {
        MockFixture {
            assets,
            media: BTreeMap::new(),
            page_size: 100,
            token: None,
        }
    }

    pub fn from_dir(dir: &Path) -> Result<Self> {
        let list = dir.join("assets.jsonl");
        let file = fs::File::open(&list).map_err(|e| Error::io(&list, e))?;
        let mut assets = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&list, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let asset: VideoAsset = serde_json::from_str(&line).map_err(|e| Error::Parse {
                location: list.display().to_string(),
                line: i + 1,
                msg: e.to_string(),
            })?;
            asset.validate()?;
            assets.push(asset);
        }
        let mut fixture = MockFixture::new(assets);
        let media_dir = dir.join("media");
        if media_dir.is_dir() {
            for entry in fs::read_dir(&media_dir).map_err(|e| Error::io(&media_dir, e))? {
                let path = entry.map_err(|e| Error::io(&media_dir, e))?.path();
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
                    fixture.media.insert(stem.to_owned(), bytes);
                }
            }
        }
        Ok(fixture)
    }

    /// Writes the fixture in the layout `from_dir` reads.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        let media_dir = dir.join("media");
        fs::create_dir_all(&media_dir).map_err(|e| Error::io(&media_dir, e))?;
        let mut text = String::new();
        for a in &self.assets {
            text.push_str(&serde_json::to_string(a).map_err(|e| Error::InvalidArgument(e.to_string()))?);
            text.push('\n');
        }
        let list = dir.join("assets.jsonl");
        fs::write(&list, text).map_err(|e| Error::io(&list, e))?;
        for (id, bytes) in &self.media {
            let path = media_dir.join(format!("{id}.bin"));
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn hashtags(&self) -> Vec<String> {
        let mut tags: Vec<String> = Vec::new();
        for a in &self.assets {
            if !tags.contains(&a.hashtag) {
                tags.push(a.hashtag.clone());
            }
        }
        tags
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoggedRequest {
    pub path: String,
    pub query: BTreeMap<String, String>,
    pub status: u16,
}

/// Answers matching requests with `status` for the next `times` hits.
#[derive(Debug, Clone)]
pub struct Fault {
    pub path: String,
    pub cursor: Option<String>,
    pub status: u16,
    pub times: u32,
}

impl Fault {
    pub fn page(cursor: Option<&str>, status: u16, times: u32) -> Self {
        Fault {
            path: "/videos".into(),
            cursor: cursor.map(str::to_owned),
            status,
            times,
        }
    }

    pub fn media(video_id: &str, status: u16, times: u32) -> Self {
        Fault {
            path: format!("/media/{video_id}"),
            cursor: None,
            status,
            times,
        }
    }
}

struct State {
    fixture: MockFixture,
    log: Mutex<Vec<LoggedRequest>>,
    faults: Mutex<Vec<Fault>>,
}

pub struct MockServer {
    url: String,
    server: Arc<Server>,
    state: Arc<State>,
    worker: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Binds an ephemeral localhost port.
    pub fn start(fixture: MockFixture) -> Result<Self> {
        Self::bind("127.0.0.1:0", fixture)
    }

    pub fn bind(addr: &str, fixture: MockFixture) -> Result<Self> {
        let server = Server::http(addr).map_err(|e| Error::InvalidArgument(format!("cannot bind {addr}: {e}")))?;
        let local = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| Error::InvalidArgument("mock server has no IP address".into()))?;
        let server = Arc::new(server);
        let state = Arc::new(State {
            fixture,
            log: Mutex::new(Vec::new()),
            faults: Mutex::new(Vec::new()),
        });
        let worker = {
            let server = Arc::clone(&server);
            let state = Arc::clone(&state);
            thread::spawn(move || {
                for request in server.incoming_requests() {
                    handle(&state, request);
                }
            })
        };
        Ok(MockServer {
            url: format!("http://{local}"),
            server,
            state,
            worker: Some(worker),
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn inject(&self, fault: Fault) {
        self.state.faults.lock().unwrap().push(fault);
    }

    pub fn requests(&self) -> Vec<LoggedRequest> {
        self.state.log.lock().unwrap().clone()
    }

    pub fn media_requests(&self) -> Vec<LoggedRequest> {
        self.requests()
            .into_iter()
            .filter(|r| r.path.starts_with("/media/"))
            .collect()
    }

    /// Blocks serving requests until the process exits.
    pub fn join(mut self) {
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

fn parse_query(q: &str) -> BTreeMap<String, String> {
    q.split('&')
        .filter(|kv| !kv.is_empty())
        .map(|kv| {
            let (k, v) = kv.split_once('=').unwrap_or((kv, ""));
            let decode = |s: &str| percent_decode_str(&s.replace('+', " ")).decode_utf8_lossy().into_owned();
            (decode(k), decode(v))
        })
        .collect()
}

fn json_header() -> Header {
    Header::from_bytes("Content-Type", "application/json").expect("static header")
}

fn handle(state: &State, request: Request) {
    let (path, query) = match request.url().split_once('?') {
        Some((p, q)) => (p.to_owned(), parse_query(q)),
        None => (request.url().to_owned(), BTreeMap::new()),
    };
    let (status, body) = route(state, &request, &path, &query);
    state.log.lock().unwrap().push(LoggedRequest {
        path,
        query,
        status,
    });
    let mut response = Response::from_data(body).with_status_code(status);
    if status == 200 {
        response = response.with_header(json_header());
    }
    let _ = request.respond(response);
}

fn route(state: &State, request: &Request, path: &str, query: &BTreeMap<String, String>) -> (u16, Vec<u8>) {
    if let Some(token) = &state.fixture.token {
        let expected = format!("Bearer {token}");
        let ok = request
            .headers()
            .iter()
            .any(|h| h.field.equiv("Authorization") && h.value.as_str() == expected);
        if !ok {
            return (401, b"unauthorized".to_vec());
        }
    }
    {
        let mut faults = state.faults.lock().unwrap();
        let cursor = query.get("cursor");
        if let Some(f) = faults
            .iter_mut()
            .find(|f| f.times > 0 && f.path == path && (f.cursor.is_none() || f.cursor.as_ref() == cursor))
        {
            f.times -= 1;
            return (f.status, b"injected failure".to_vec());
        }
    }
    if path == "/videos" {
        list(state, query)
    } else if let Some(id) = path.strip_prefix("/media/") {
        let id = percent_decode_str(id).decode_utf8_lossy();
        match state.fixture.media.get(id.as_ref()) {
            Some(bytes) => (200, bytes.clone()),
            None => (404, b"not found".to_vec()),
        }
    } else {
        (404, b"not found".to_vec())
    }
}

fn list(state: &State, query: &BTreeMap<String, String>) -> (u16, Vec<u8>) {
    let Some(tag) = query.get("hashtag") else {
        return (400, b"missing hashtag".to_vec());
    };
    let offset = match query.get("cursor").map(|c| c.parse::<usize>()) {
        None => 0,
        Some(Ok(n)) => n,
        Some(Err(_)) => return (400, b"bad cursor".to_vec()),
    };
    let matching: Vec<&VideoAsset> = state.fixture.assets.iter().filter(|a| &a.hashtag == tag).collect();
    let page_size = state.fixture.page_size.max(1);
    let end = (offset + page_size).min(matching.len());
    let items = matching.get(offset..end).unwrap_or(&[]).iter().map(|a| (*a).clone()).collect();
    let page = SourcePage {
        items,
        next_cursor: (end < matching.len()).then(|| end.to_string()),
    };
    (200, serde_json::to_vec(&page).expect("page serializes"))
}
