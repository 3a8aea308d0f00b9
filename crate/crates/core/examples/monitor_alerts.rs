//! Replays a synthetic detection stream through the alert policy, logs it and
//! prints the compliance report.
//!
//! cargo run --release --example monitor_alerts -- [log.jsonl]

use chrono::{Duration, TimeZone, Utc};

use maskwatch::data::Label;
use maskwatch::detect::{BBox, Detection};
use maskwatch::monitor::{
    dispatch_alert, report, AlertPolicy, AlertSink, AlertState, DetectionRecord, RecordLog, RecordSink, Window,
};

fn main() -> maskwatch::Result<()> {
    let log_path = std::env::args().nth(1).unwrap_or_else(|| "monitor-example.jsonl".into());
    let _ = std::fs::remove_file(&log_path);
    let mut log = RecordLog::open(log_path.as_ref())?;
    let policy = AlertPolicy { consecutive_frames: 3, cooldown_frames: 5, ..AlertPolicy::default() };
    let mut state = AlertState::default();

    let start = Utc.with_ymd_and_hms(2024, 3, 1, 9, 0, 0).unwrap();
    // 'V' is an unmasked face, 'M' a masked one, '.' an empty frame.
    for (i, c) in "MMVVVVV.VVVVVVVMM".chars().enumerate() {
        let label = match c {
            'V' => Some(Label::WithoutMask),
            'M' => Some(Label::WithMask),
            _ => None,
        };
        let record = DetectionRecord {
            timestamp: start + Duration::milliseconds(40 * i as i64),
            frame_index: i as u64 + 1,
            source_id: "lobby".into(),
            detections: label
                .map(|label| Detection { bbox: BBox::new(10, 10, 40, 40), label, confidence: 0.93 })
                .into_iter()
                .collect(),
        };
        log.accept(&record)?;
        if let Some(alert) = state.observe(&record, &policy)? {
            dispatch_alert(&alert, &[AlertSink::Stdout]);
        }
    }
    println!("{}", report(log_path.as_ref(), Window::all(), &policy)?);
    Ok(())
}
