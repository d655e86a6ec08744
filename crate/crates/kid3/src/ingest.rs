//! Annotation tables, video metadata and frame manifests.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use kid3_core::annotation::{
    sample_frames, validate_records, AnnotationRecord, DatasetManifest, FrameSample, Split,
    VideoMeta,
};
use kid3_core::taxonomy::{normalize_label, LabelError};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, RowError, RowErrorKind};
use crate::jsonl;

const VIDEO_COLUMNS: [&str; 4] = ["video_id", "video", "filename", "file"];
const START_COLUMNS: [&str; 3] = ["start_s", "start", "start_time"];
const END_COLUMNS: [&str; 3] = ["end_s", "end", "end_time"];
const LABEL_COLUMNS: [&str; 4] = ["label", "activity", "activity_type", "class"];

fn header_key(raw: &str) -> String {
    raw.trim()
        .trim_start_matches('\u{feff}')
        .to_ascii_lowercase()
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join("_")
}

fn find_column(headers: &[String], names: &[&str]) -> Option<usize> {
    names.iter().find_map(|n| headers.iter().position(|h| h == n))
}

/// Accepts plain seconds (`12.5`) or clock time (`1:02`, `0:01:02.5`).
pub fn parse_time(raw: &str) -> Option<f64> {
    let raw = raw.trim();
    if raw.is_empty() {
        return None;
    }
    let mut total = 0.0;
    let parts: Vec<&str> = raw.split(':').collect();
    if parts.len() > 3 {
        return None;
    }
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        let value: f64 = if last {
            part.parse().ok()?
        } else {
            part.parse::<u32>().ok()? as f64
        };
        if !value.is_finite() || value < 0.0 {
            return None;
        }
        total = total * 60.0 + value;
    }
    Some(total)
}

/// Parses an annotation CSV with columns for video id, start, end and label.
///
/// Every row is checked; all row failures are reported together. Rows that
/// parse are then sorted and checked for empty or overlapping intervals.
pub fn parse_annotations(reader: impl Read) -> Result<Vec<AnnotationRecord>> {
    let mut csv = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = csv
        .headers()
        .map_err(|e| Error::Annotations(vec![malformed(1, e.to_string())]))?
        .iter()
        .map(header_key)
        .collect();
    let columns = [VIDEO_COLUMNS.as_slice(), &START_COLUMNS, &END_COLUMNS, &LABEL_COLUMNS]
        .map(|names| find_column(&headers, names));
    let [Some(vc), Some(sc), Some(ec), Some(lc)] = columns else {
        return Err(Error::Annotations(vec![malformed(
            1,
            format!("header must name video_id, start_s, end_s and label columns, got {headers:?}"),
        )]));
    };

    let mut records = Vec::new();
    let mut errors = Vec::new();
    for row in csv.records() {
        let row = match row {
            Ok(row) => row,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                errors.push(malformed(line, e.to_string()));
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line());
        if row.iter().all(str::is_empty) {
            continue;
        }
        let field = |i: usize| row.get(i).unwrap_or("");
        let video_id = field(vc);
        if video_id.is_empty() {
            errors.push(malformed(line, "empty video id".into()));
            continue;
        }
        let (start, end) = match (parse_time(field(sc)), parse_time(field(ec))) {
            (Some(s), Some(e)) => (s, e),
            (None, _) => {
                errors.push(malformed(line, format!("non-numeric start time {:?}", field(sc))));
                continue;
            }
            (_, None) => {
                errors.push(malformed(line, format!("non-numeric end time {:?}", field(ec))));
                continue;
            }
        };
        if end <= start {
            errors.push(malformed(line, format!("empty interval [{start}, {end})")));
            continue;
        }
        match normalize_label(field(lc)) {
            Ok(activity) => records.push(AnnotationRecord {
                video_id: video_id.to_string(),
                start_s: start,
                end_s: end,
                activity,
            }),
            Err(LabelError::Empty) => errors.push(malformed(line, "empty label".into())),
            Err(_) => errors.push(RowError {
                line,
                kind: RowErrorKind::UnknownLabel(field(lc).to_string()),
            }),
        }
    }
    if !errors.is_empty() {
        return Err(Error::Annotations(errors));
    }
    Ok(validate_records(records)?)
}

fn malformed(line: u64, why: String) -> RowError {
    RowError { line, kind: RowErrorKind::MalformedRow(why) }
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let file = File::open(path).map_err(Error::io(path))?;
    parse_annotations(file)
}

/// One row of the video metadata table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoRow {
    pub video_id: String,
    pub fps: f64,
    pub duration_s: f64,
    pub width_px: u32,
    pub height_px: u32,
    pub split: Split,
}

impl VideoRow {
    pub fn meta(&self) -> VideoMeta {
        VideoMeta {
            video_id: self.video_id.clone(),
            fps: self.fps,
            duration_s: self.duration_s,
            width_px: self.width_px,
            height_px: self.height_px,
        }
    }
}

pub fn read_videos(path: &Path) -> Result<Vec<VideoRow>> {
    let file = File::open(path).map_err(Error::io(path))?;
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut rows = Vec::new();
    for row in csv.deserialize::<VideoRow>() {
        let row = row.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        if !(row.fps.is_finite() && row.fps > 0.0) {
            return Err(Error::Config(format!("video {} has fps {}, expected a positive number", row.video_id, row.fps)));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_videos(path: &Path, rows: &[VideoRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_write_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_write_error(path, e))?;
    }
    w.flush().map_err(Error::unwritable(path))
}

fn csv_write_error(path: &Path, e: csv::Error) -> Error {
    Error::UnwritablePath { path: path.to_path_buf(), source: std::io::Error::other(e.to_string()) }
}

/// Builds the manifest for `split`. Annotations for videos of the other split
/// (or of no listed video) are ignored.
pub fn build_manifest(
    split: Split,
    videos: &[VideoRow],
    records: &[AnnotationRecord],
    interval_frames: u32,
) -> Result<DatasetManifest> {
    let mut by_video: BTreeMap<&str, Vec<AnnotationRecord>> = BTreeMap::new();
    for r in records {
        by_video.entry(&r.video_id).or_default().push(r.clone());
    }
    let mut samples = Vec::new();
    let mut fps = None;
    for video in videos.iter().filter(|v| v.split == split) {
        fps.get_or_insert(video.fps);
        if let Some(rs) = by_video.get(video.video_id.as_str()) {
            samples.extend(sample_frames(&video.meta(), rs, interval_frames));
        }
    }
    Ok(DatasetManifest::new(split, fps.unwrap_or(0.0), interval_frames, samples)?)
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    jsonl::write(path, manifest.samples())
}

/// The manifest lines do not record the frame rate, so `fps` reads back as 0.
pub fn read_manifest(path: &Path, split: Split, interval_frames: u32) -> Result<DatasetManifest> {
    let samples: Vec<FrameSample> = jsonl::read(path)?;
    Ok(DatasetManifest::new(split, 0.0, interval_frames, samples)?)
}
