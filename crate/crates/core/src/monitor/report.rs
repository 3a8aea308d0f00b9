use std::fmt;
use std::path::Path;

use chrono::{DateTime, Utc};

use crate::data::Label;
use crate::error::{Error, Result};
use crate::monitor::alert::{replay, AlertPolicy};
use crate::monitor::record::{format_timestamp, parse_timestamp, read_records, DetectionRecord};

/// Inclusive timestamp range.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl Window {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self> {
        if end < start {
            return Err(Error::InvalidArgument("report window ends before it starts".into()));
        }
        Ok(Self { start, end })
    }

    /// Everything representable.
    pub fn all() -> Self {
        Self {
            start: DateTime::<Utc>::MIN_UTC,
            end: DateTime::<Utc>::MAX_UTC,
        }
    }

    pub fn contains(&self, t: &DateTime<Utc>) -> bool {
        self.start <= *t && *t <= self.end
    }
}

impl std::str::FromStr for Window {
    type Err = Error;

    /// `START..END` with ISO-8601 endpoints; either side may be empty.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once("..")
            .ok_or_else(|| Error::InvalidArgument(format!("window {s:?}: expected START..END")))?;
        let all = Window::all();
        let start = if a.is_empty() { all.start } else { parse_timestamp(a)? };
        let end = if b.is_empty() { all.end } else { parse_timestamp(b)? };
        Window::new(start, end)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub window: Window,
    pub frames_processed: usize,
    /// Detection counts indexed by class.
    pub detections: [usize; 2],
    pub alerts: usize,
}

impl Report {
    /// Share of detections that are WithMask; `None` without detections.
    pub fn compliance(&self) -> Option<f64> {
        let total = self.detections.iter().sum::<usize>();
        (total > 0).then(|| self.detections[Label::WithMask.index()] as f64 / total as f64)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let all = Window::all();
        let bound = |t: &DateTime<Utc>, open: &DateTime<Utc>| {
            if t == open {
                "*".to_string()
            } else {
                format_timestamp(t)
            }
        };
        writeln!(
            f,
            "window            {} .. {}",
            bound(&self.window.start, &all.start),
            bound(&self.window.end, &all.end)
        )?;
        writeln!(f, "frames processed  {}", self.frames_processed)?;
        for label in [Label::WithMask, Label::WithoutMask] {
            writeln!(f, "{:<17} {}", label.name(), self.detections[label.index()])?;
        }
        writeln!(f, "alerts            {}", self.alerts)?;
        match self.compliance() {
            Some(c) => write!(f, "compliance        {c:.4}"),
            None => write!(f, "compliance        n/a"),
        }
    }
}

/// Aggregates the records whose timestamp falls inside `window`. Alerts are
/// counted by replaying `policy` over those records.
pub fn aggregate(records: &[DetectionRecord], window: Window, policy: &AlertPolicy) -> Result<Report> {
    let inside: Vec<&DetectionRecord> = records.iter().filter(|r| window.contains(&r.timestamp)).collect();
    let mut detections = [0; 2];
    for r in &inside {
        for d in &r.detections {
            detections[d.label.index()] += 1;
        }
    }
    Ok(Report {
        window,
        frames_processed: inside.len(),
        detections,
        alerts: replay(inside.iter().copied(), policy)?.len(),
    })
}

pub fn report(log_path: &Path, window: Window, policy: &AlertPolicy) -> Result<Report> {
    let contents = read_records(log_path)?;
    aggregate(&contents.records, window, policy)
}
