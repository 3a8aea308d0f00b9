use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean of `-ln p[label]` over the batch, with `p` clamped to at least 1e-12.
pub fn cross_entropy(probs: &Tensor<f32>, labels: &[usize]) -> Result<f32> {
    let n = probs.batch();
    let k = probs.item_len();
    if labels.len() != n {
        return Err(Error::shape("cross_entropy", format!("{} labels for batch of {n}", labels.len())));
    }
    let mut total = 0.0f64;
    for (row, &label) in probs.data().chunks_exact(k).zip(labels) {
        let p = *row
            .get(label)
            .ok_or_else(|| Error::InvalidArgument(format!("label {label} out of range for {k} classes")))?;
        total -= (p as f64).max(1e-12).ln();
    }
    Ok((total / n as f64) as f32)
}

/// Confusion counts with class 0 (with mask) as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub loss: f32,
}

impl Metrics {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    /// `None` when nothing was predicted positive.
    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    /// `None` when there are no positive items.
    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Counts one prediction; any class other than 0 is negative.
    pub fn record(&mut self, predicted: usize, actual: usize) {
        match (predicted == 0, actual == 0) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub(crate) fn fmt_rate(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

impl std::fmt::Display for Metrics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "accuracy {:.4}  precision {}  recall {}  loss {:.4}  (TP {} FP {} TN {} FN {})",
            self.accuracy(),
            fmt_rate(self.precision()),
            fmt_rate(self.recall()),
            self.loss,
            self.tp,
            self.fp,
            self.tn,
            self.fn_
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs(rows: &[[f32; 2]]) -> Tensor<f32> {
        Tensor::new([rows.len(), 2, 1, 1], rows.concat()).unwrap()
    }

    #[test]
    fn cross_entropy_examples() {
        assert_eq!(cross_entropy(&probs(&[[1.0, 0.0]]), &[0]).unwrap(), 0.0);
        let ln2 = std::f32::consts::LN_2;
        assert!((cross_entropy(&probs(&[[0.5, 0.5]]), &[1]).unwrap() - ln2).abs() < 1e-6);
        let two = cross_entropy(&probs(&[[1.0, 0.0], [0.5, 0.5]]), &[0, 0]).unwrap();
        assert!((two - 0.346_573_6).abs() < 1e-6);
        // Clamped rather than infinite.
        let clamped = cross_entropy(&probs(&[[1.0, 0.0]]), &[1]).unwrap();
        assert!((clamped - 27.631_021).abs() < 1e-4);
        assert!(cross_entropy(&probs(&[[1.0, 0.0]]), &[2]).is_err());
    }

    #[test]
    fn rates_from_counts() {
        let m = Metrics {
            tp: 8,
            fp: 2,
            fn_: 1,
            tn: 9,
            loss: 0.0,
        };
        assert!((m.precision().unwrap() - 0.8).abs() < 1e-12);
        assert!((m.recall().unwrap() - 8.0 / 9.0).abs() < 1e-12);
        assert!((m.accuracy() - 0.85).abs() < 1e-12);
    }

    #[test]
    fn always_positive_predictor() {
        let mut m = Metrics::default();
        for actual in [0, 1, 0, 1, 0, 1] {
            m.record(0, actual);
        }
        assert_eq!(m.recall(), Some(1.0));
        assert_eq!(m.precision(), Some(0.5));
    }

    #[test]
    fn undefined_rates_are_absent() {
        let mut m = Metrics::default();
        m.record(1, 1);
        m.record(0, 1);
        assert_eq!(m.recall(), None);
        assert_eq!(m.accuracy(), 0.5);
        let mut none_predicted = Metrics::default();
        none_predicted.record(1, 0);
        assert_eq!(none_predicted.precision(), None);
        assert_eq!(none_predicted.recall(), Some(0.0));
    }
}
