use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::detect::{BBox, Detection};
use crate::error::{Error, Result};

/// Everything observed in one frame of one source.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionRecord {
    pub timestamp: DateTime<Utc>,
    pub frame_index: u64,
    pub source_id: String,
    pub detections: Vec<Detection>,
}

/// Source of record timestamps, frozen for reproducible output.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Clock {
    #[default]
    System,
    Fixed(DateTime<Utc>),
}

impl Clock {
    /// Current UTC time at millisecond resolution.
    pub fn now(&self) -> DateTime<Utc> {
        match self {
            Clock::System => truncate_ms(Utc::now()),
            Clock::Fixed(t) => *t,
        }
    }
}

pub fn truncate_ms(t: DateTime<Utc>) -> DateTime<Utc> {
    Utc.timestamp_millis_opt(t.timestamp_millis())
        .single()
        .expect("millisecond timestamps are unambiguous")
}

/// ISO-8601 UTC with milliseconds, e.g. `2024-03-01T12:00:00.000Z`.
pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| Error::InvalidArgument(format!("timestamp {s:?}: {e}")))
}

/// Confidences are stored with four decimals.
pub fn round_confidence(c: f32) -> f64 {
    (c as f64 * 1e4).round() / 1e4
}

#[derive(Serialize, Deserialize)]
struct Line {
    ts: String,
    frame: u64,
    source: String,
    detections: Vec<DetectionLine>,
}

#[derive(Serialize, Deserialize)]
struct DetectionLine {
    x: usize,
    y: usize,
    w: usize,
    h: usize,
    label: String,
    conf: f64,
}

impl DetectionRecord {
    /// One JSON object with keys in the order ts, frame, source, detections.
    pub fn to_json_line(&self) -> String {
        let line = Line {
            ts: format_timestamp(&self.timestamp),
            frame: self.frame_index,
            source: self.source_id.clone(),
            detections: self
                .detections
                .iter()
                .map(|d| DetectionLine {
                    x: d.bbox.x,
                    y: d.bbox.y,
                    w: d.bbox.w,
                    h: d.bbox.h,
                    label: d.label.name().to_string(),
                    conf: round_confidence(d.confidence),
                })
                .collect(),
        };
        serde_json::to_string(&line).expect("record serializes")
    }

    pub fn from_json_line(text: &str) -> std::result::Result<Self, String> {
        let line: Line = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let detections = line
            .detections
            .into_iter()
            .map(|d| {
                let label = Label::from_name(&d.label).ok_or_else(|| format!("unknown label {:?}", d.label))?;
                Ok(Detection {
                    bbox: BBox::new(d.x, d.y, d.w, d.h),
                    label,
                    confidence: d.conf as f32,
                })
            })
            .collect::<std::result::Result<_, String>>()?;
        Ok(Self {
            timestamp: parse_timestamp(&line.ts).map_err(|e| e.to_string())?,
            frame_index: line.frame,
            source_id: line.source,
            detections,
        })
    }

    pub fn count(&self, label: Label) -> usize {
        self.detections.iter().filter(|d| d.label == label).count()
    }
}

/// Receives every record of a stream in frame order.
pub trait RecordSink {
    fn accept(&mut self, record: &DetectionRecord) -> Result<()>;
}

impl RecordSink for Vec<DetectionRecord> {
    fn accept(&mut self, record: &DetectionRecord) -> Result<()> {
        self.push(record.clone());
        Ok(())
    }
}

/// Append-only line-delimited JSON log, flushed after every record.
pub struct RecordLog {
    path: PathBuf,
    file: File,
    written: usize,
}

impl RecordLog {
    pub fn open(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::from(e).in_file(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
            written: 0,
        })
    }

    pub fn written(&self) -> usize {
        self.written
    }

    pub fn persist(&mut self, record: &DetectionRecord) -> Result<()> {
        let mut line = record.to_json_line();
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| Error::from(e).in_file(&self.path))?;
        self.written += 1;
        Ok(())
    }
}

impl RecordSink for RecordLog {
    fn accept(&mut self, record: &DetectionRecord) -> Result<()> {
        self.persist(record)
    }
}

/// Records read back from a log, plus warnings about a skipped final line.
#[derive(Debug, Default)]
pub struct LogContents {
    pub records: Vec<DetectionRecord>,
    pub warnings: Vec<String>,
}

/// Reads a record log. An unparseable last line (a write cut short) is
/// skipped with a warning; an unparseable line anywhere else is an error.
pub fn read_records(path: &Path) -> Result<LogContents> {
    let file = File::open(path).map_err(|e| Error::from(e).in_file(path))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::from(e).in_file(path))?;
    let mut out = LogContents::default();
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    for (i, text) in lines.iter().enumerate() {
        if text.trim().is_empty() {
            continue;
        }
        match DetectionRecord::from_json_line(text) {
            Ok(r) => out.records.push(r),
            Err(message) if Some(i) == last => {
                let warning = format!("{}: skipping truncated final line {}: {message}", path.display(), i + 1);
                log::warn!("{warning}");
                out.warnings.push(warning);
            }
            Err(message) => return Err(Error::Log { line: i + 1, message }.in_file(path)),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn record(frame: u64, ms: i64, labels: &[(Label, f32)]) -> DetectionRecord {
        DetectionRecord {
            timestamp: Utc.timestamp_millis_opt(1_700_000_000_000 + ms).unwrap(),
            frame_index: frame,
            source_id: "cam0".into(),
            detections: labels
                .iter()
                .enumerate()
                .map(|(i, &(label, confidence))| Detection {
                    bbox: BBox::new(10 * i, 5, 20, 30),
                    label,
                    confidence,
                })
                .collect(),
        }
    }

    #[test]
    fn json_line_layout() {
        let r = record(3, 0, &[(Label::WithoutMask, 0.912_345)]);
        assert_eq!(
            r.to_json_line(),
            r#"{"ts":"2023-11-14T22:13:20.000Z","frame":3,"source":"cam0","detections":[{"x":0,"y":5,"w":20,"h":30,"label":"without_mask","conf":0.9123}]}"#
        );
    }

    #[test]
    fn ten_records_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let mut log = RecordLog::open(&path).unwrap();
        let records: Vec<_> = (1..=10)
            .map(|f| record(f, f as i64 * 40, &[(Label::WithMask, 0.5 + f as f32 / 40.0)]))
            .collect();
        for r in &records {
            log.persist(r).unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 10);
        let back = read_records(&path).unwrap();
        assert!(back.warnings.is_empty());
        for (a, b) in records.iter().zip(&back.records) {
            assert_eq!(a.timestamp, b.timestamp);
            assert_eq!(a.frame_index, b.frame_index);
            assert_eq!(a.detections[0].bbox, b.detections[0].bbox);
            assert_eq!(round_confidence(a.detections[0].confidence), round_confidence(b.detections[0].confidence));
        }
    }

    #[test]
    fn truncated_final_line_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let mut text = String::new();
        for f in 1..=10 {
            text += &record(f, 0, &[]).to_json_line();
            text.push('\n');
        }
        let cut = text.trim_end().len() - 17;
        std::fs::write(&path, &text[..cut]).unwrap();
        let back = read_records(&path).unwrap();
        assert_eq!(back.records.len(), 9);
        assert_eq!(back.warnings.len(), 1);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let good = record(1, 0, &[]).to_json_line();
        std::fs::write(&path, format!("{good}\n{{oops\n{good}\n")).unwrap();
        match read_records(&path) {
            Err(Error::File { source, .. }) => assert!(matches!(*source, Error::Log { line: 2, .. })),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_detections_still_one_line() {
        let line = record(7, 0, &[]).to_json_line();
        assert!(line.ends_with(r#""detections":[]}"#));
        assert!(!line.contains('\n'));
    }
}
