use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts of (true, predicted) pairs; rows are true classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_names: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    /// Square matrix with classes named `0..n`.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let names = (0..counts.len()).map(|i| i.to_string()).collect();
        Self::with_names(names, counts)
    }

    pub fn with_names(class_names: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = counts.len();
        if class_names.len() != n || counts.iter().any(|r| r.len() != n) {
            return Err(Error::Shape(format!("confusion matrix must be square with {} names, got {n} rows", class_names.len())));
        }
        Ok(Self { class_names, counts })
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// CSV with a header of predicted class names and one row per true class.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let header: Vec<&str> = std::iter::once("true\\predicted").chain(self.class_names.iter().map(String::as_str)).collect();
        let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(&header).map_err(csv_err)?;
        for (name, row) in self.class_names.iter().zip(&self.counts) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn confusion(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Shape(format!("{} true labels but {} predictions", y_true.len(), y_pred.len())));
    }
    let mut counts = vec![vec![0u64; n_classes]; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= n_classes || p >= n_classes {
            return Err(Error::Range(format!("label pair ({t}, {p}) outside {n_classes} classes")));
        }
        counts[t][p] += 1;
    }
    ConfusionMatrix::from_counts(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub support: u64,
    /// Percent.
    pub sensitivity: f64,
    /// Percent.
    pub positive_predictivity: f64,
    /// ×100.
    pub f1: f64,
}

/// Summary of a confusion matrix. Rates are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub overall_accuracy: f64,
    /// Mean sensitivity over the classes not excluded.
    pub balanced_accuracy: f64,
    pub classes: Vec<ClassMetrics>,
    pub excluded_classes: Vec<String>,
    /// Rates whose denominator was zero and were reported as 0, e.g. `"Q.sensitivity"`.
    pub zero_denominators: Vec<String>,
    pub total: u64,
}

impl MetricReport {
    pub fn class(&self, name: &str) -> Option<&ClassMetrics> {
        self.classes.iter().find(|c| c.name == name)
    }
}

pub fn metrics_from_confusion(m: &ConfusionMatrix, excluded: &[usize]) -> Result<MetricReport> {
    let n = m.n_classes();
    let total = m.total();
    if n == 0 || total == 0 {
        return Err(Error::InvalidInput("empty confusion matrix".into()));
    }
    if let Some(&e) = excluded.iter().find(|&&e| e >= n) {
        return Err(Error::Range(format!("excluded class {e} outside {n} classes")));
    }
    let mut zero = Vec::new();
    let mut ratio = |num: u64, den: u64, what: String| {
        if den == 0 {
            zero.push(what);
            0.0
        } else {
            100.0 * num as f64 / den as f64
        }
    };
    let mut classes = Vec::with_capacity(n);
    for c in 0..n {
        let name = &m.class_names[c];
        let tp = m.counts[c][c];
        let row: u64 = m.counts[c].iter().sum();
        let col: u64 = m.counts.iter().map(|r| r[c]).sum();
        let se = ratio(tp, row, format!("{name}.sensitivity"));
        let pp = ratio(tp, col, format!("{name}.positive_predictivity"));
        let f1 = if se + pp > 0.0 { 2.0 * se * pp / (se + pp) } else { 0.0 };
        classes.push(ClassMetrics { name: name.clone(), support: row, sensitivity: se, positive_predictivity: pp, f1 });
    }
    let included: Vec<&ClassMetrics> = (0..n).filter(|c| !excluded.contains(c)).map(|c| &classes[c]).collect();
    let balanced = if included.is_empty() {
        0.0
    } else {
        included.iter().map(|c| c.sensitivity).sum::<f64>() / included.len() as f64
    };
    let trace: u64 = (0..n).map(|c| m.counts[c][c]).sum();
    let mut excluded_names: Vec<String> = excluded.iter().map(|&e| m.class_names[e].clone()).collect();
    excluded_names.dedup();
    Ok(MetricReport {
        overall_accuracy: 100.0 * trace as f64 / total as f64,
        balanced_accuracy: balanced,
        classes,
        excluded_classes: excluded_names,
        zero_denominators: zero,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_examples() {
        let m = confusion(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(m.counts, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        let m = confusion(&[1], &[0], 2).unwrap();
        assert_eq!(m.counts, vec![vec![0, 0], vec![1, 0]]);
        assert!(matches!(confusion(&[2], &[0], 2), Err(Error::Range(_))));
    }

    #[test]
    fn identity_is_perfect() {
        let r = metrics_from_confusion(&ConfusionMatrix::from_counts(vec![vec![5, 0], vec![0, 5]]).unwrap(), &[]).unwrap();
        assert_eq!((r.overall_accuracy, r.balanced_accuracy), (100.0, 100.0));
        assert!(r.classes.iter().all(|c| c.f1 == 100.0 && c.sensitivity == 100.0 && c.positive_predictivity == 100.0));
    }

    #[test]
    fn zero_denominators_are_zero_and_recorded() {
        let m = ConfusionMatrix::with_names(vec!["a".into(), "b".into()], vec![vec![3, 0], vec![0, 0]]).unwrap();
        let r = metrics_from_confusion(&m, &[]).unwrap();
        let b = r.class("b").unwrap();
        assert_eq!((b.sensitivity, b.positive_predictivity, b.f1), (0.0, 0.0, 0.0));
        assert_eq!(r.zero_denominators, vec!["b.sensitivity", "b.positive_predictivity"]);
        assert_eq!(r.balanced_accuracy, 50.0);
        assert_eq!(metrics_from_confusion(&m, &[1]).unwrap().balanced_accuracy, 100.0);
        assert!(metrics_from_confusion(&ConfusionMatrix::from_counts(vec![vec![0]]).unwrap(), &[]).is_err());
    }

    #[test]
    fn csv_layout() {
        let m = ConfusionMatrix::with_names(vec!["x".into(), "y".into()], vec![vec![1, 2], vec![3, 4]]).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "true\\predicted,x,y\nx,1,2\ny,3,4\n");
    }
}
