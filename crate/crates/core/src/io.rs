//! Waveform file formats and directory layouts.
//!
//! Two waveform encodings are supported:
//!
//! * **CSV** — one sample per line. An optional first line
//!   `# sample_rate_hz=<r> start_time=<t>` carries the metadata; without it
//!   the caller must supply a sample rate and the start time is 0.
//! * **Framed binary** — the ASCII magic `EQS1`, then a little-endian `u32`
//!   sample count, `f64` sample rate, `f64` start time, and the `f64`
//!   samples.
//!
//! Readers sniff the magic, so file extensions are only used to select
//! which files in a directory are waveforms.
//!
//! A labeled directory holds `event/` and `other/` subdirectories of
//! waveform files; a window's id is `<label>/<file stem>`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::series::{Label, LabeledWindow, TimeSeries};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EQS1";
const HEADER_LEN: usize = 4 + 4 + 8 + 8;
const WAVEFORM_EXTENSIONS: [&str; 4] = ["bin", "eqs", "csv", "txt"];

pub fn encode_binary(t: &TimeSeries) -> Result<Vec<u8>> {
    let count = u32::try_from(t.len())
        .map_err(|_| Error::usage(format!("{} samples do not fit the framed format", t.len())))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&t.sample_rate_hz().to_le_bytes());
    out.extend_from_slice(&t.start_time().to_le_bytes());
    for v in t.samples() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn le_f64(bytes: &[u8]) -> f64 {
    f64::from_le_bytes(bytes.try_into().expect("8-byte slice"))
}

pub fn decode_binary(bytes: &[u8], path: &Path) -> Result<TimeSeries> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::format(path, "missing EQS1 header"));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().expect("4-byte slice")) as usize;
    let rate = le_f64(&bytes[8..16]);
    let start = le_f64(&bytes[16..24]);
    let body = &bytes[HEADER_LEN..];
    if body.len() != count * 8 {
        return Err(Error::format(
            path,
            format!("header declares {count} samples but body holds {} bytes", body.len()),
        ));
    }
    let samples = body.chunks_exact(8).map(le_f64).collect();
    TimeSeries::new(samples, rate, start).map_err(|e| Error::format(path, e.to_string()))
}

pub fn encode_csv(t: &TimeSeries) -> String {
    let mut out = format!("# sample_rate_hz={} start_time={}\n", t.sample_rate_hz(), t.start_time());
    for v in t.samples() {
        let _ = writeln!(out, "{v}");
    }
    out
}

pub fn decode_csv(text: &str, default_rate: Option<f64>, path: &Path) -> Result<TimeSeries> {
    let mut rate = default_rate;
    let mut start = 0.0;
    let mut samples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('#') {
            for token in header.split_whitespace() {
                let Some((key, value)) = token.split_once('=') else { continue };
                let parsed: f64 = value
                    .parse()
                    .map_err(|_| Error::format(path, format!("line {}: bad value for {key}", lineno + 1)))?;
                match key {
                    "sample_rate_hz" => rate = Some(parsed),
                    "start_time" => start = parsed,
                    _ => {}
                }
            }
            continue;
        }
        let v: f64 =
            line.parse().map_err(|_| Error::format(path, format!("line {}: not a number: {line:?}", lineno + 1)))?;
        samples.push(v);
    }
    let rate = rate.ok_or_else(|| Error::format(path, "no sample_rate_hz header and no default sample rate given"))?;
    TimeSeries::new(samples, rate, start).map_err(|e| Error::format(path, e.to_string()))
}

/// Reads a waveform in either encoding.
pub fn read_waveform(path: &Path, default_rate: Option<f64>) -> Result<TimeSeries> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(MAGIC) {
        return decode_binary(&bytes, path);
    }
    let text = String::from_utf8(bytes).map_err(|_| Error::format(path, "neither EQS1 nor UTF-8 text"))?;
    decode_csv(&text, default_rate, path)
}

/// Writes `t`, choosing CSV for a `.csv`/`.txt` extension and the framed
/// binary format otherwise.
pub fn write_waveform(path: &Path, t: &TimeSeries) -> Result<()> {
    let bytes = match path.extension().and_then(|e| e.to_str()) {
        Some("csv") | Some("txt") => encode_csv(t).into_bytes(),
        _ => encode_binary(t)?,
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Waveform files directly inside `dir`, sorted by file name.
pub fn waveform_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_waveform = path.extension().and_then(|e| e.to_str()).is_some_and(|e| WAVEFORM_EXTENSIONS.contains(&e));
        if path.is_file() && is_waveform {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Reads every waveform in `dir` (sorted by file name) as `(stem, series)`.
pub fn read_waveform_dir(dir: &Path, default_rate: Option<f64>) -> Result<Vec<(String, TimeSeries)>> {
    waveform_files(dir)?.into_iter().map(|p| Ok((stem(&p), read_waveform(&p, default_rate)?))).collect()
}

pub fn is_labeled_dir(dir: &Path) -> bool {
    dir.join(Label::Event.as_str()).is_dir() && dir.join(Label::Other.as_str()).is_dir()
}

/// Reads a labeled directory; event windows come first, each class sorted
/// by file name.
pub fn read_labeled_dir(dir: &Path, default_rate: Option<f64>) -> Result<Vec<LabeledWindow>> {
    if !dir.is_dir() {
        return Err(Error::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "no such directory")));
    }
    if !is_labeled_dir(dir) {
        return Err(Error::format(dir, "expected `event/` and `other/` subdirectories"));
    }
    let mut out = Vec::new();
    for label in [Label::Event, Label::Other] {
        for (name, series) in read_waveform_dir(&dir.join(label.as_str()), default_rate)? {
            out.push(LabeledWindow::new(format!("{label}/{name}"), series, label));
        }
    }
    Ok(out)
}

/// Writes windows as `<dir>/<label>/<last id component>.bin`.
pub fn write_labeled_dir(dir: &Path, windows: &[LabeledWindow]) -> Result<()> {
    for label in [Label::Event, Label::Other] {
        let sub = dir.join(label.as_str());
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
    }
    for w in windows {
        let name = w.id.rsplit('/').next().unwrap_or(&w.id);
        write_waveform(&dir.join(w.label.as_str()).join(format!("{name}.bin")), &w.series)?;
    }
    Ok(())
}
