use std::collections::HashMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};
use crate::monitor::record::{format_timestamp, parse_timestamp, round_confidence, DetectionRecord};

/// When a run of unmasked frames becomes an alert.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlertPolicy {
    pub min_confidence: f32,
    pub consecutive_frames: u32,
    pub cooldown_frames: u64,
}

impl Default for AlertPolicy {
    fn default() -> Self {
        Self {
            min_confidence: 0.8,
            consecutive_frames: 3,
            cooldown_frames: 30,
        }
    }
}

impl AlertPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(0.5..=1.0).contains(&self.min_confidence) {
            return Err(Error::InvalidArgument(format!(
                "min confidence {} must lie in [0.5, 1]",
                self.min_confidence
            )));
        }
        if self.consecutive_frames == 0 {
            return Err(Error::InvalidArgument("consecutive frames must be >= 1".into()));
        }
        Ok(())
    }

    /// Highest qualifying WithoutMask confidence in the frame, if any.
    pub fn violation(&self, record: &DetectionRecord) -> Option<f32> {
        record
            .detections
            .iter()
            .filter(|d| d.label == Label::WithoutMask && d.confidence >= self.min_confidence)
            .map(|d| d.confidence)
            .reduce(f32::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Alert {
    pub timestamp: DateTime<Utc>,
    pub source_id: String,
    pub frame_index: u64,
    pub streak: u32,
    pub max_confidence: f32,
}

#[derive(Serialize, Deserialize)]
struct AlertJson {
    ts: String,
    source: String,
    frame: u64,
    streak: u32,
    max_conf: f64,
}

impl Alert {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&AlertJson {
            ts: format_timestamp(&self.timestamp),
            source: self.source_id.clone(),
            frame: self.frame_index,
            streak: self.streak,
            max_conf: round_confidence(self.max_confidence),
        })
        .expect("alert serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let a: AlertJson =
            serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("alert json: {e}")))?;
        Ok(Self {
            timestamp: parse_timestamp(&a.ts)?,
            source_id: a.source,
            frame_index: a.frame,
            streak: a.streak,
            max_confidence: a.max_conf as f32,
        })
    }
}

#[derive(Clone, Debug, Default)]
struct SourceState {
    last_frame: Option<u64>,
    streak: u32,
    max_confidence: f32,
    last_alert: Option<u64>,
}

/// Per-source debounce state.
#[derive(Clone, Debug, Default)]
pub struct AlertState {
    sources: HashMap<String, SourceState>,
}

impl AlertState {
    /// Feeds one frame. A violating frame extends the streak and a clean one
    /// resets it. Once the streak reaches `consecutive_frames` and more than
    /// `cooldown_frames` frames have passed since the previous alert, an
    /// alert fires and the streak starts over.
    pub fn observe(&mut self, record: &DetectionRecord, policy: &AlertPolicy) -> Result<Option<Alert>> {
        let s = self.sources.entry(record.source_id.clone()).or_default();
        if let Some(last) = s.last_frame {
            if record.frame_index <= last {
                return Err(Error::OutOfOrder {
                    source_id: record.source_id.clone(),
                    last,
                    got: record.frame_index,
                });
            }
        }
        s.last_frame = Some(record.frame_index);
        let Some(conf) = policy.violation(record) else {
            s.streak = 0;
            s.max_confidence = 0.0;
            return Ok(None);
        };
        s.streak += 1;
        s.max_confidence = s.max_confidence.max(conf);
        let cooled = s
            .last_alert
            .map_or(true, |a| record.frame_index - a > policy.cooldown_frames);
        if s.streak < policy.consecutive_frames || !cooled {
            return Ok(None);
        }
        let alert = Alert {
            timestamp: record.timestamp,
            source_id: record.source_id.clone(),
            frame_index: record.frame_index,
            streak: s.streak,
            max_confidence: s.max_confidence,
        };
        s.last_alert = Some(record.frame_index);
        s.streak = 0;
        s.max_confidence = 0.0;
        Ok(Some(alert))
    }
}

/// Runs a fresh state machine over `records`, returning every alert.
pub fn replay<'a>(
    records: impl IntoIterator<Item = &'a DetectionRecord>,
    policy: &AlertPolicy,
) -> Result<Vec<Alert>> {
    let mut state = AlertState::default();
    let mut alerts = Vec::new();
    for r in records {
        alerts.extend(state.observe(r, policy)?);
    }
    Ok(alerts)
}
