//! Record persistence, debounced alerts and reports.

mod alert;
mod dispatch;
mod record;
mod report;

pub use alert::{replay, Alert, AlertPolicy, AlertState};
pub use dispatch::{dispatch_alert, AlertSink, DeliveryStatus};
pub use record::{
    format_timestamp, parse_timestamp, read_records, round_confidence, truncate_ms, Clock, DetectionRecord,
    LogContents, RecordLog, RecordSink,
};
pub use report::{aggregate, report, Report, Window};

use crate::error::Result;

/// Watches a record stream, raising and dispatching alerts as they occur.
#[derive(Debug)]
pub struct Monitor {
    pub policy: AlertPolicy,
    pub sinks: Vec<AlertSink>,
    state: AlertState,
    alerts: Vec<(Alert, Vec<DeliveryStatus>)>,
}

impl Monitor {
    pub fn new(policy: AlertPolicy, sinks: Vec<AlertSink>) -> Result<Self> {
        policy.validate()?;
        Ok(Self {
            policy,
            sinks,
            state: AlertState::default(),
            alerts: Vec::new(),
        })
    }

    /// Alerts raised so far with their delivery statuses.
    pub fn alerts(&self) -> &[(Alert, Vec<DeliveryStatus>)] {
        &self.alerts
    }
}

impl RecordSink for Monitor {
    fn accept(&mut self, record: &DetectionRecord) -> Result<()> {
        if let Some(alert) = self.state.observe(record, &self.policy)? {
            let status = dispatch_alert(&alert, &self.sinks);
            self.alerts.push((alert, status));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monitor_without_sinks_still_counts_alerts() {
        let policy = AlertPolicy {
            consecutive_frames: 3,
            cooldown_frames: 5,
            ..AlertPolicy::default()
        };
        let mut m = Monitor::new(policy, vec![]).unwrap();
        for r in alert::tests::frames("VVVVVVVVVV") {
            m.accept(&r).unwrap();
        }
        let frames: Vec<u64> = m.alerts().iter().map(|(a, _)| a.frame_index).collect();
        assert_eq!(frames, [3, 9]);
        assert!(m.alerts().iter().all(|(_, s)| s.is_empty()));
    }
}
