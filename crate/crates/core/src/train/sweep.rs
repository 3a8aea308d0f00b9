use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::data::PreparedDataset;
use crate::error::Result;
use crate::model::Model;
use crate::train::{evaluate, train, Hyperparams, Metrics, TrainingHistory};

/// The three learning rates compared in the sweep table.
pub fn default_learning_rates() -> [f32; 3] {
    [1e-4, 1e-3, 1e-2]
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub hyperparams: Hyperparams,
    /// Final validation metrics and the history, or the reason the run failed.
    pub outcome: std::result::Result<(Metrics, TrainingHistory), String>,
}

impl SweepRow {
    pub fn metrics(&self) -> Option<&Metrics> {
        self.outcome.as_ref().ok().map(|(m, _)| m)
    }

    pub fn history(&self) -> Option<&TrainingHistory> {
        self.outcome.as_ref().ok().map(|(_, h)| h)
    }
}

#[derive(Clone, Debug, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub const CSV_HEADER: &'static str = "model,lr,val_accuracy,val_precision,val_recall,status";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for (i, row) in self.rows.iter().enumerate() {
            let lr = row.hyperparams.learning_rate;
            let line = match &row.outcome {
                Ok((m, _)) => format!(
                    "{},{lr:e},{:.6},{},{},ok",
                    i + 1,
                    m.accuracy(),
                    opt(m.precision()),
                    opt(m.recall())
                ),
                Err(e) => format!("{},{lr:e},,,,{}", i + 1, csv_field(e)),
            };
            s.push_str(&line);
            s.push('\n');
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<6} {:>8} {:>12} {:>13} {:>10}\n",
            "model", "lr", "val_accuracy", "val_precision", "val_recall"
        );
        for (i, row) in self.rows.iter().enumerate() {
            let lr = format!("{:e}", row.hyperparams.learning_rate);
            match &row.outcome {
                Ok((m, _)) => s.push_str(&format!(
                    "{:<6} {lr:>8} {:>12.4} {:>13} {:>10}\n",
                    i + 1,
                    m.accuracy(),
                    crate::train::metrics::fmt_rate(m.precision()),
                    crate::train::metrics::fmt_rate(m.recall())
                )),
                Err(e) => s.push_str(&format!("{:<6} {lr:>8} failed: {e}\n", i + 1)),
            }
        }
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

fn run_one(base: &Model, train_set: &PreparedDataset, val_set: &PreparedDataset, hp: &Hyperparams) -> SweepRow {
    let outcome = train(base.clone(), train_set, val_set, hp)
        .and_then(|(model, history)| Ok((evaluate(&model, val_set)?, history)))
        .map_err(|e| e.to_string());
    if let Err(e) = &outcome {
        log::warn!("sweep run with lr {} failed: {e}", hp.learning_rate);
    }
    SweepRow {
        hyperparams: *hp,
        outcome,
    }
}

/// Trains a copy of `base` per configuration and evaluates it on `val_set`.
/// Rows keep the input order; a failed run is recorded in its row and the
/// sweep continues. Up to `jobs` runs execute concurrently.
pub fn sweep(
    base: &Model,
    train_set: &PreparedDataset,
    val_set: &PreparedDataset,
    configurations: &[Hyperparams],
    jobs: usize,
) -> Result<SweepResult> {
    if configurations.is_empty() {
        return Err(crate::Error::InvalidArgument("sweep needs at least one configuration".into()));
    }
    let jobs = jobs.clamp(1, configurations.len());
    if jobs == 1 {
        let rows = configurations
            .iter()
            .map(|hp| run_one(base, train_set, val_set, hp))
            .collect();
        return Ok(SweepResult { rows });
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<SweepRow>>> = Mutex::new(vec![None; configurations.len()]);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(hp) = configurations.get(i) else { break };
                let row = run_one(base, train_set, val_set, hp);
                slots.lock().expect("sweep worker panicked")[i] = Some(row);
            });
        }
    });
    let rows = slots
        .into_inner()
        .expect("sweep worker panicked")
        .into_iter()
        .map(|r| r.expect("every configuration ran"))
        .collect();
    Ok(SweepResult { rows })
}
