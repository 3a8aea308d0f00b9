use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f32,
    pub val_loss: f32,
    pub train_accuracy: f32,
    pub val_accuracy: f32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub records: Vec<EpochRecord>,
}

pub const CSV_HEADER: &str = "epoch,train_loss,val_loss,train_acc,val_acc";

/// The four plotted series: legend label and accessor.
pub const SERIES: [(&str, fn(&EpochRecord) -> f32); 4] = [
    ("training loss", |r| r.train_loss),
    ("validation loss", |r| r.val_loss),
    ("training accuracy", |r| r.train_accuracy),
    ("validation accuracy", |r| r.val_accuracy),
];

const COLORS: [&str; 4] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HistoryFormat {
    Csv,
    Svg,
}

/// Rounds to `digits` significant digits and prints the shortest form.
pub fn significant(v: f32, digits: usize) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{:.*e}", digits.saturating_sub(1), v as f64)
        .parse()
        .expect("formatted float parses");
    format!("{rounded}")
}

impl TrainingHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn first(&self) -> Option<&EpochRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{CSV_HEADER}\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.epoch,
                significant(r.train_loss, 6),
                significant(r.val_loss, 6),
                significant(r.train_accuracy, 6),
                significant(r.val_accuracy, 6)
            );
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(CSV_HEADER) {
            return Err(Error::InvalidArgument("history csv: unexpected header".into()));
        }
        let records = lines
            .enumerate()
            .map(|(i, line)| {
                let bad = || Error::InvalidArgument(format!("history csv line {}: {line:?}", i + 2));
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 5 {
                    return Err(bad());
                }
                let num = |s: &str| s.parse::<f32>().map_err(|_| bad());
                Ok(EpochRecord {
                    epoch: f[0].parse().map_err(|_| bad())?,
                    train_loss: num(f[1])?,
                    val_loss: num(f[2])?,
                    train_accuracy: num(f[3])?,
                    val_accuracy: num(f[4])?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { records })
    }

    /// Loss and accuracy curves against epoch, in one self-contained SVG.
    pub fn to_svg(&self) -> String {
        let (w, h) = (640.0, 400.0);
        let (left, right, top, bottom) = (60.0, 180.0, 20.0, 50.0);
        let (pw, ph) = (w - left - right, h - top - bottom);
        let y_max = self
            .records
            .iter()
            .flat_map(|r| SERIES.iter().map(move |(_, f)| f(r)))
            .filter(|v| v.is_finite())
            .fold(1.0f32, f32::max) as f64;
        let epochs = self.records.len().max(2) as f64 - 1.0;
        let x_of = |i: usize| left + pw * i as f64 / epochs;
        let y_of = |v: f32| top + ph * (1.0 - (v as f64 / y_max).clamp(0.0, 1.0));

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<g id="axes" stroke="black"><line x1="{left}" y1="{y0}" x2="{x1}" y2="{y0}"/><line x1="{left}" y1="{top}" x2="{left}" y2="{y0}"/></g>"#,
            y0 = top + ph,
            x1 = left + pw
        );
        for (i, r) in self.records.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                x_of(i),
                top + ph + 16.0,
                r.epoch
            );
        }
        for k in 0..=4 {
            let v = y_max * k as f64 / 4.0;
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                left - 6.0,
                y_of(v as f32) + 4.0,
                significant(v as f32, 3)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">epoch</text>"#,
            left + pw / 2.0,
            h - 10.0
        );
        for ((name, f), color) in SERIES.iter().zip(COLORS) {
            let points: Vec<String> = self
                .records
                .iter()
                .enumerate()
                .map(|(i, r)| format!("{:.2},{:.2}", x_of(i), y_of(f(r))))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline class="series" data-series="{name}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                points.join(" ")
            );
        }
        let _ = writeln!(s, r#"<g id="legend">"#);
        for (i, ((name, _), color)) in SERIES.iter().zip(COLORS).enumerate() {
            let y = top + 10.0 + 20.0 * i as f64;
            let x = left + pw + 15.0;
            let _ = writeln!(
                s,
                r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{name}</text>"#,
                x + 20.0,
                x + 26.0,
                y + 4.0
            );
        }
        s.push_str("</g>\n</svg>\n");
        s
    }
}

pub fn emit_history(history: &TrainingHistory, format: HistoryFormat, destination: &Path) -> Result<()> {
    if history.is_empty() {
        return Err(Error::InvalidArgument("cannot emit an empty history".into()));
    }
    let text = match format {
        HistoryFormat::Csv => history.to_csv(),
        HistoryFormat::Svg => history.to_svg(),
    };
    std::fs::write(destination, text).map_err(|e| Error::from(e).in_file(destination))
}
