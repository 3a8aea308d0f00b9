use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::monitor::alert::Alert;

/// Where alerts are delivered.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AlertSink {
    Stdout,
    File(PathBuf),
    Http(String),
}

impl std::str::FromStr for AlertSink {
    type Err = Error;

    /// `stdout`, `file:PATH`, or an `http://` URL.
    fn from_str(s: &str) -> Result<Self> {
        if s == "stdout" {
            Ok(AlertSink::Stdout)
        } else if let Some(path) = s.strip_prefix("file:") {
            Ok(AlertSink::File(path.into()))
        } else if s.starts_with("http://") || s.starts_with("https://") {
            Ok(AlertSink::Http(s.to_string()))
        } else {
            Err(Error::InvalidArgument(format!(
                "alert sink {s:?}: expected stdout, file:PATH or http://URL"
            )))
        }
    }
}

impl std::fmt::Display for AlertSink {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AlertSink::Stdout => write!(f, "stdout"),
            AlertSink::File(p) => write!(f, "file:{}", p.display()),
            AlertSink::Http(url) => write!(f, "{url}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeliveryStatus {
    pub sink: AlertSink,
    pub outcome: std::result::Result<(), String>,
}

impl DeliveryStatus {
    pub fn delivered(&self) -> bool {
        self.outcome.is_ok()
    }
}

impl std::fmt::Display for DeliveryStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.outcome {
            Ok(()) => write!(f, "{}: delivered", self.sink),
            Err(e) => write!(f, "{}: failed ({e})", self.sink),
        }
    }
}

const HTTP_TIMEOUT: Duration = Duration::from_secs(5);

fn deliver(alert: &Alert, sink: &AlertSink) -> std::result::Result<(), String> {
    let body = alert.to_json();
    match sink {
        AlertSink::Stdout => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "ALERT {body}").and_then(|_| out.flush()).map_err(|e| e.to_string())
        }
        AlertSink::File(path) => OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .and_then(|mut f| writeln!(f, "{body}"))
            .map_err(|e| format!("{}: {e}", path.display())),
        AlertSink::Http(url) => {
            let agent = ureq::AgentBuilder::new().timeout(HTTP_TIMEOUT).build();
            match agent
                .post(url)
                .set("Content-Type", "application/json")
                .send_string(&body)
            {
                Ok(_) => Ok(()),
                Err(ureq::Error::Status(code, _)) => Err(format!("HTTP {code}")),
                Err(e) => Err(e.to_string()),
            }
        }
    }
}

/// Sends `alert` to every sink. Failures are reported, never raised.
pub fn dispatch_alert(alert: &Alert, sinks: &[AlertSink]) -> Vec<DeliveryStatus> {
    sinks
        .iter()
        .map(|sink| {
            let outcome = deliver(alert, sink);
            if let Err(e) = &outcome {
                log::warn!("alert delivery to {sink} failed: {e}");
            }
            DeliveryStatus {
                sink: sink.clone(),
                outcome,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};
    use std::io::{BufRead, BufReader, Read};
    use std::net::TcpListener;

    fn alert() -> Alert {
        Alert {
            timestamp: Utc.timestamp_millis_opt(1_700_000_000_123).unwrap(),
            source_id: "door".into(),
            frame_index: 9,
            streak: 6,
            max_confidence: 0.93,
        }
    }

    /// Answers one request with `status` and hands back the request body.
    fn one_shot_server(status: u16) -> (String, std::thread::JoinHandle<(String, String)>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/alerts", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = String::new();
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                headers.push_str(&line);
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            let mut stream = stream;
            write!(stream, "HTTP/1.1 {status} X\r\nContent-Length: 0\r\nConnection: close\r\n\r\n").unwrap();
            (headers, String::from_utf8(body).unwrap())
        });
        (url, handle)
    }

    #[test]
    fn file_sink_appends_parseable_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("alerts.jsonl");
        let sinks = [AlertSink::File(path.clone())];
        assert!(dispatch_alert(&alert(), &sinks)[0].delivered());
        assert!(dispatch_alert(&alert(), &sinks)[0].delivered());
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(Alert::from_json(text.lines().next().unwrap()).unwrap(), alert());
    }

    #[test]
    fn http_success_posts_json() {
        let (url, server) = one_shot_server(200);
        let status = dispatch_alert(&alert(), &[AlertSink::Http(url)]);
        assert!(status[0].delivered(), "{}", status[0]);
        let (headers, body) = server.join().unwrap();
        assert!(headers.starts_with("POST /alerts"));
        assert!(headers.to_ascii_lowercase().contains("content-type: application/json"));
        let v: serde_json::Value = serde_json::from_str(&body).unwrap();
        assert_eq!(v["frame"], 9);
        assert_eq!(v["streak"], 6);
        assert_eq!(v["source"], "door");
        assert_eq!(v["max_conf"], 0.93);
    }

    #[test]
    fn http_failure_does_not_affect_other_sinks() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        let (url, server) = one_shot_server(500);
        let status = dispatch_alert(&alert(), &[AlertSink::Http(url), AlertSink::File(path.clone())]);
        server.join().unwrap();
        assert_eq!(status[0].outcome, Err("HTTP 500".into()));
        assert!(status[1].delivered());
        assert!(path.exists());
    }

    #[test]
    fn unreachable_and_unwritable_sinks_report_failure() {
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let status = dispatch_alert(
            &alert(),
            &[
                AlertSink::Http(format!("http://127.0.0.1:{port}/")),
                AlertSink::File("/nonexistent/dir/alerts".into()),
            ],
        );
        assert!(status.iter().all(|s| !s.delivered()));
        assert!(dispatch_alert(&alert(), &[]).is_empty());
    }

    #[test]
    fn sink_parsing() {
        assert_eq!("stdout".parse::<AlertSink>().unwrap(), AlertSink::Stdout);
        assert_eq!("file:/tmp/a".parse::<AlertSink>().unwrap(), AlertSink::File("/tmp/a".into()));
        assert!(matches!("http://localhost:1/x".parse::<AlertSink>().unwrap(), AlertSink::Http(_)));
        assert!("smtp://x".parse::<AlertSink>().is_err());
    }
}
