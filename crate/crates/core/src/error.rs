use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{location}: line {line}: {msg}")]
    Parse {
        location: String,
        line: usize,
        msg: String,
    },

    #[error("invariant violated{}: {msg}", video_suffix(.video_id))]
    Invariant {
        video_id: Option<String>,
        msg: String,
    },

    #[error("invalid config field `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("conflicting assets for video {video_id}: {msg}")]
    Conflict { video_id: String, msg: String },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("infeasible request: {0}")]
    Infeasible(String),

    #[error("media error ({}): {msg}", path.display())]
    Media { path: PathBuf, msg: String },

    #[error(transparent)]
    Source(#[from] SourceError),

    #[error(transparent)]
    Detector(#[from] DetectorError),

    #[error("requested {requested} tokens but limiter capacity is {capacity}")]
    RateLimit { requested: u32, capacity: u32 },

    #[error("video {video_id}: {source}")]
    InVideo {
        video_id: String,
        #[source]
        source: Box<Error>,
    },
}

fn video_suffix(video_id: &Option<String>) -> String {
    match video_id {
        Some(id) => format!(" (video {id})"),
        None => String::new(),
    }
}

/// Failures talking to the short-video source API.
#[derive(Debug, Error)]
pub enum SourceError {
    #[error("authentication rejected by source API (status {status})")]
    Auth { status: u16 },
    #[error("source API returned status {status} for {url}")]
    Status { status: u16, url: String },
    #[error("transport error for {url}: {msg}")]
    Transport { url: String, msg: String },
    #[error("malformed response from {url}: {msg}")]
    Malformed { url: String, msg: String },
}

impl SourceError {
    /// Auth failures are final; everything else is worth another attempt.
    pub fn is_retryable(&self) -> bool {
        !matches!(self, SourceError::Auth { .. })
    }
}

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("failed to spawn detector backend `{cmd}`: {msg}")]
    Spawn { cmd: String, msg: String },
    #[error("detector backend did not answer within {secs:.1}s ({during})")]
    Timeout { secs: f64, during: &'static str },
    #[error("detector protocol error: {0}")]
    Protocol(String),
    #[error("detector backend exited unexpectedly")]
    Crashed,
    #[error("detector session is dead")]
    DeadSession,
    #[error("malformed detector response for request {request_id}: {msg}")]
    Malformed { request_id: u64, msg: String },
    #[error("detector backend reported an error for request {request_id}: {msg}")]
    Backend { request_id: u64, msg: String },
    #[error("frame path {0} does not follow frames/<video_id>/<index>.png")]
    FramePath(PathBuf),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invariant(video_id: Option<&str>, msg: impl Into<String>) -> Self {
        Error::Invariant {
            video_id: video_id.map(str::to_owned),
            msg: msg.into(),
        }
    }

    pub fn config(field: &str, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_owned(),
            msg: msg.into(),
        }
    }

    pub fn in_video(self, video_id: &str) -> Self {
        match self {
            Error::InVideo { .. } => self,
            other => Error::InVideo {
                video_id: video_id.to_owned(),
                source: Box::new(other),
            },
        }
    }

    /// The failing video, when the error is attributable to one.
    pub fn video_id(&self) -> Option<&str> {
        match self {
            Error::InVideo { video_id, .. } | Error::Conflict { video_id, .. } => Some(video_id),
            Error::Invariant { video_id, .. } => video_id.as_deref(),
            _ => None,
        }
    }

    /// Strips `InVideo` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::InVideo { source, .. } => source.root(),
            other => other,
        }
    }
}
