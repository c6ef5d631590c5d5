//! Frame access for source media.
//!
//! Two inputs are understood:
//!
//! * raw frame dumps: an ASCII header line
//!   `clipforge-raw v1 width=<W> height=<H> fps=<F> frames=<N|?>` followed by
//!   the frames, each stored as three 8-bit planes (R, G, B) of `W*H` bytes;
//! * anything else, decoded by the configured `decoder_cmd`, which must write
//!   interleaved RGB24 frames of `{width}x{height}` to standard output.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::process::{Command, Stdio};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::model::VideoAsset;

pub const RAW_MAGIC: &str = "clipforge-raw v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawHeader {
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    /// Absent when the producer did not record a frame count.
    pub frames: Option<u64>,
}

impl RawHeader {
    pub fn frame_bytes(&self) -> usize {
        self.width as usize * self.height as usize * 3
    }

    fn to_line(self) -> String {
        let frames = self
            .frames
            .map(|n| n.to_string())
            .unwrap_or_else(|| "?".into());
        format!(
            "{RAW_MAGIC} width={} height={} fps={} frames={frames}\n",
            self.width, self.height, self.fps
        )
    }

    fn parse(line: &str) -> std::result::Result<Self, String> {
        let rest = line
            .trim_end()
            .strip_prefix(RAW_MAGIC)
            .ok_or("missing raw dump magic")?;
        let (mut width, mut height, mut fps, mut frames) = (None, None, None, None);
        for field in rest.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| format!("bad header field {field:?}"))?;
            let bad = |_| format!("bad value for {key}: {value:?}");
            match key {
                "width" => width = Some(value.parse::<u32>().map_err(bad)?),
                "height" => height = Some(value.parse::<u32>().map_err(bad)?),
                "fps" => fps = Some(value.parse::<f64>().map_err(|_| format!("bad fps {value:?}"))?),
                "frames" if value == "?" => frames = Some(None),
                "frames" => frames = Some(Some(value.parse::<u64>().map_err(bad)?)),
                other => return Err(format!("unknown header field {other:?}")),
            }
        }
        let header = RawHeader {
            width: width.ok_or("header lacks width")?,
            height: height.ok_or("header lacks height")?,
            fps: fps.ok_or("header lacks fps")?,
            frames: frames.ok_or("header lacks frames")?,
        };
        if header.width == 0 || header.height == 0 || header.fps.is_nan() || header.fps <= 0.0 {
            return Err("header dimensions and fps must be positive".into());
        }
        Ok(header)
    }
}

/// One decoded frame in interleaved RGB24.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbFrame {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl RgbFrame {
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        RgbFrame {
            width,
            height,
            data,
        }
    }

    fn from_planar(width: u32, height: u32, planar: &[u8]) -> Self {
        let n = width as usize * height as usize;
        let mut data = vec![0u8; n * 3];
        for c in 0..3 {
            for (i, &v) in planar[c * n..(c + 1) * n].iter().enumerate() {
                data[i * 3 + c] = v;
            }
        }
        RgbFrame {
            width,
            height,
            data,
        }
    }

    fn write_planar<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        for c in 0..3 {
            let plane: Vec<u8> = self.data.iter().skip(c).step_by(3).copied().collect();
            out.write_all(&plane)?;
        }
        Ok(())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let img = image::RgbImage::from_raw(self.width, self.height, self.data.clone())
            .ok_or_else(|| Error::Media {
                path: path.to_owned(),
                msg: "frame buffer does not match its dimensions".into(),
            })?;
        img.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::Media {
                path: path.to_owned(),
                msg: e.to_string(),
            })
    }
}

pub fn encode_raw_dump<'a, W: Write>(
    out: &mut W,
    header: RawHeader,
    frames: impl IntoIterator<Item = &'a RgbFrame>,
) -> std::io::Result<()> {
    out.write_all(header.to_line().as_bytes())?;
    for frame in frames {
        if frame.width != header.width || frame.height != header.height {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                "frame size differs from header",
            ));
        }
        frame.write_planar(out)?;
    }
    Ok(())
}

pub fn write_raw_dump<'a>(
    path: &Path,
    header: RawHeader,
    frames: impl IntoIterator<Item = &'a RgbFrame>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    encode_raw_dump(&mut out, header, frames)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

fn media_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Media {
        path: path.to_owned(),
        msg: msg.into(),
    }
}

/// Reads the header of a raw dump, or `None` when the file is some other format.
pub fn read_raw_header(path: &Path) -> Result<Option<RawHeader>> {
    let file = File::open(path).map_err(|e| media_err(path, format!("unreadable media: {e}")))?;
    let mut reader = BufReader::new(file);
    let mut prefix = vec![0u8; RAW_MAGIC.len()];
    match reader.read_exact(&mut prefix) {
        Ok(()) if prefix == RAW_MAGIC.as_bytes() => {}
        _ => return Ok(None),
    }
    let mut rest = String::new();
    reader
        .read_line(&mut rest)
        .map_err(|e| media_err(path, e.to_string()))?;
    RawHeader::parse(&format!("{RAW_MAGIC}{rest}"))
        .map(Some)
        .map_err(|msg| media_err(path, msg))
}

/// Outcome of a frame-count probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameProbe {
    pub frames: u64,
    /// The count was computed as `round(duration * frame_rate)`.
    pub fallback: bool,
}

fn fallback_count(asset: &VideoAsset) -> FrameProbe {
    FrameProbe {
        frames: (asset.duration_s.as_secs_f64() * asset.frame_rate).round() as u64,
        fallback: true,
    }
}

fn expand_template(template: &str, vars: &[(&str, &str)]) -> Vec<String> {
    template
        .split_whitespace()
        .map(|token| {
            vars.iter()
                .fold(token.to_owned(), |t, (k, v)| t.replace(&format!("{{{k}}}"), v))
        })
        .collect()
}

fn command_from(argv: &[String], path: &Path) -> Result<Command> {
    let (program, args) = argv
        .split_first()
        .ok_or_else(|| media_err(path, "empty command template"))?;
    let mut cmd = Command::new(program);
    cmd.args(args);
    Ok(cmd)
}

/// Total frame count of a media file.
///
/// Raw dumps report the count from their header. Other media go through the
/// configured probe command, whose standard output must be an integer. When
/// the container declares no count (`?` in a raw header, `N/A` or empty probe
/// output) the count falls back to `round(duration_s * frame_rate)`.
pub fn probe_frame_count(asset: &VideoAsset, media: &Path, config: &PipelineConfig) -> Result<FrameProbe> {
    if !media.is_file() {
        return Err(media_err(media, "media file not found"));
    }
    if let Some(header) = read_raw_header(media)? {
        return Ok(match header.frames {
            Some(frames) => FrameProbe {
                frames,
                fallback: false,
            },
            None => fallback_count(asset),
        });
    }
    let input = media.to_string_lossy();
    let argv = expand_template(&config.probe_cmd, &[("input", &input)]);
    let output = command_from(&argv, media)?
        .stderr(Stdio::null())
        .output()
        .map_err(|e| media_err(media, format!("cannot run probe `{}`: {e}", argv[0])))?;
    if !output.status.success() {
        return Err(media_err(media, format!("probe exited with {}", output.status)));
    }
    let text = String::from_utf8_lossy(&output.stdout);
    let text = text.trim();
    if text.is_empty() || text.eq_ignore_ascii_case("n/a") {
        return Ok(fallback_count(asset));
    }
    text.parse::<u64>()
        .map(|frames| FrameProbe {
            frames,
            fallback: false,
        })
        .map_err(|_| media_err(media, format!("unexpected probe output {text:?}")))
}

fn read_frame<R: Read>(reader: &mut R, buf: &mut [u8], path: &Path) -> Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(media_err(path, e.to_string())),
        }
    }
    match filled {
        0 => Ok(false),
        n if n == buf.len() => Ok(true),
        n => Err(media_err(path, format!("truncated frame: {n} of {} bytes", buf.len()))),
    }
}

/// Decodes every frame in order, handing each to `visit`. Returns the number of frames.
pub fn for_each_frame<F>(media: &Path, config: &PipelineConfig, mut visit: F) -> Result<u64>
where
    F: FnMut(u64, &RgbFrame) -> Result<()>,
{
    if let Some(header) = read_raw_header(media)? {
        let file = File::open(media).map_err(|e| media_err(media, e.to_string()))?;
        let mut reader = BufReader::new(file);
        let mut line = String::new();
        reader
            .read_line(&mut line)
            .map_err(|e| media_err(media, e.to_string()))?;
        let mut buf = vec![0u8; header.frame_bytes()];
        let mut index = 0;
        while read_frame(&mut reader, &mut buf, media)? {
            visit(index, &RgbFrame::from_planar(header.width, header.height, &buf))?;
            index += 1;
        }
        if let Some(declared) = header.frames {
            if declared != index {
                return Err(media_err(
                    media,
                    format!("header declares {declared} frames, found {index}"),
                ));
            }
        }
        return Ok(index);
    }

    if !media.is_file() {
        return Err(media_err(media, "media file not found"));
    }
    let (w, h) = (config.analysis_width, config.analysis_height);
    let input = media.to_string_lossy();
    let (ws, hs) = (w.to_string(), h.to_string());
    let argv = expand_template(
        &config.decoder_cmd,
        &[("input", &input), ("width", &ws), ("height", &hs)],
    );
    let mut child = command_from(&argv, media)?
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| media_err(media, format!("cannot run decoder `{}`: {e}", argv[0])))?;
    let mut stdout = child.stdout.take().expect("piped stdout");
    let mut buf = vec![0u8; w as usize * h as usize * 3];
    let mut index = 0;
    let result: Result<()> = (|| {
        while read_frame(&mut stdout, &mut buf, media)? {
            visit(
                index,
                &RgbFrame {
                    width: w,
                    height: h,
                    data: buf.clone(),
                },
            )?;
            index += 1;
        }
        Ok(())
    })();
    if result.is_err() {
        let _ = child.kill();
    }
    let status = child.wait().map_err(|e| media_err(media, e.to_string()))?;
    result?;
    if !status.success() {
        return Err(media_err(media, format!("decoder exited with {status}")));
    }
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Seconds;
    use std::collections::BTreeMap;

    fn asset(dur_ms: u64, fps: f64) -> VideoAsset {
        VideoAsset {
            video_id: "v".into(),
            hashtag: "dance".into(),
            duration_s: Seconds::from_millis(dur_ms),
            frame_rate: fps,
            media_path: None,
            download_permitted: true,
            source_meta: BTreeMap::new(),
            analysis: None,
            revision: 0,
        }
    }

    fn gradient(width: u32, height: u32, seed: u8) -> RgbFrame {
        let data = (0..width * height * 3)
            .map(|i| (i as u8).wrapping_mul(7).wrapping_add(seed))
            .collect();
        RgbFrame { width, height, data }
    }

    #[test]
    fn raw_dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.raw");
        let frames: Vec<_> = (0..5).map(|i| gradient(4, 3, i)).collect();
        let header = RawHeader { width: 4, height: 3, fps: 25.0, frames: Some(5) };
        write_raw_dump(&path, header, &frames).unwrap();
        assert_eq!(read_raw_header(&path).unwrap(), Some(header));
        let mut seen = Vec::new();
        let n = for_each_frame(&path, &PipelineConfig::default(), |i, f| {
            seen.push((i, f.clone()));
            Ok(())
        })
        .unwrap();
        assert_eq!(n, 5);
        for (i, f) in seen {
            assert_eq!(f, frames[i as usize]);
        }
    }

    #[test]
    fn probe_counts_synthetic_ten_seconds() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.raw");
        let frames: Vec<_> = (0..300).map(|i| gradient(8, 4, i as u8)).collect();
        write_raw_dump(&path, RawHeader { width: 8, height: 4, fps: 30.0, frames: Some(300) }, &frames).unwrap();
        let probe = probe_frame_count(&asset(10_000, 30.0), &path, &PipelineConfig::default()).unwrap();
        assert_eq!(probe, FrameProbe { frames: 300, fallback: false });
        let decoded = for_each_frame(&path, &PipelineConfig::default(), |_, _| Ok(())).unwrap();
        assert_eq!(decoded, 300);
    }

    #[test]
    fn probe_falls_back_without_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.raw");
        let frames: Vec<_> = (0..100).map(|_| RgbFrame::filled(2, 2, [1, 2, 3])).collect();
        write_raw_dump(&path, RawHeader { width: 2, height: 2, fps: 25.0, frames: None }, &frames).unwrap();
        let probe = probe_frame_count(&asset(4_000, 25.0), &path, &PipelineConfig::default()).unwrap();
        assert_eq!(probe, FrameProbe { frames: 100, fallback: true });
    }

    #[test]
    fn missing_media_is_error() {
        let err = probe_frame_count(&asset(4_000, 25.0), Path::new("/nonexistent/v.raw"), &PipelineConfig::default())
            .unwrap_err();
        assert!(matches!(err, Error::Media { .. }));
    }

    #[test]
    fn external_probe_output_parsed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.mp4");
        std::fs::write(&path, b"not really mp4").unwrap();
        let mut config = PipelineConfig {
            probe_cmd: "echo 300".into(),
            ..PipelineConfig::default()
        };
        let probe = probe_frame_count(&asset(10_000, 30.0), &path, &config).unwrap();
        assert_eq!(probe, FrameProbe { frames: 300, fallback: false });
        config.probe_cmd = "echo N/A".into();
        let probe = probe_frame_count(&asset(4_000, 25.0), &path, &config).unwrap();
        assert_eq!(probe, FrameProbe { frames: 100, fallback: true });
        config.probe_cmd = "false".into();
        assert!(probe_frame_count(&asset(4_000, 25.0), &path, &config).is_err());
    }

    #[test]
    fn external_decoder_streams_rgb24() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.rgb");
        let frames: Vec<_> = (0..7).map(|i| gradient(4, 2, i)).collect();
        let bytes: Vec<u8> = frames.iter().flat_map(|f| f.data.clone()).collect();
        std::fs::write(&path, bytes).unwrap();
        let config = PipelineConfig {
            decoder_cmd: "cat {input}".into(),
            analysis_width: 4,
            analysis_height: 2,
            ..PipelineConfig::default()
        };
        let mut seen = Vec::new();
        let n = for_each_frame(&path, &config, |_, f| {
            seen.push(f.clone());
            Ok(())
        })
        .unwrap();
        assert_eq!(n, 7);
        assert_eq!(seen, frames);
    }

    #[test]
    fn truncated_dump_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.raw");
        let frames = vec![RgbFrame::filled(2, 2, [9, 9, 9])];
        write_raw_dump(&path, RawHeader { width: 2, height: 2, fps: 25.0, frames: Some(1) }, &frames).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.extend_from_slice(&[1, 2, 3]);
        std::fs::write(&path, bytes).unwrap();
        assert!(for_each_frame(&path, &PipelineConfig::default(), |_, _| Ok(())).is_err());
    }

    #[test]
    fn png_export() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frames/v/3.png");
        gradient(5, 4, 1).save_png(&path).unwrap();
        let img = image::open(&path).unwrap().to_rgb8();
        assert_eq!(img.dimensions(), (5, 4));
    }
}
