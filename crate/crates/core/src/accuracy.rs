//! Confusion matrices and accuracy metrics for label maps.

use std::collections::BTreeMap;
use std::io;

use thiserror::Error;

use crate::classifiers::{classify, train_signatures, ClassifierConfig, ClassifyError, TrainingSet};
use crate::raster::{LabelRaster, MultibandImage};

#[derive(Debug, Error)]
pub enum AccuracyError {
    #[error("reference is {rw}x{rh} but prediction is {pw}x{ph}")]
    DimensionMismatch {
        rw: usize,
        rh: usize,
        pw: usize,
        ph: usize,
    },
    #[error("no assessable pixels")]
    NothingAssessable,
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, AccuracyError>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AssessOptions {
    /// Skip pixels whose reference label is 0.
    pub ignore_zero_reference: bool,
    /// Skip pixels the classifier left unclassified (predicted 0).
    pub ignore_unclassified: bool,
}

/// Rows are reference labels, columns predicted labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    labels: Vec<u16>,
    counts: Vec<u64>,
    total: u64,
}

impl ConfusionMatrix {
    /// Builds a matrix from explicit counts (`counts[i][j]` = ref `labels[i]`,
    /// predicted `labels[j]`).
    pub fn from_counts(labels: Vec<u16>, counts: Vec<Vec<u64>>) -> Self {
        let n = labels.len();
        assert!(
            counts.len() == n && counts.iter().all(|r| r.len() == n),
            "matrix must be square"
        );
        let flat: Vec<u64> = counts.into_iter().flatten().collect();
        let total = flat.iter().sum();
        Self {
            labels,
            counts: flat,
            total,
        }
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    /// Count by matrix position.
    pub fn count(&self, row: usize, col: usize) -> u64 {
        self.counts[row * self.size() + col]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts
            .chunks(self.size().max(1))
            .map(<[u64]>::to_vec)
            .collect()
    }

    pub fn trace(&self) -> u64 {
        (0..self.size()).map(|i| self.count(i, i)).sum()
    }

    pub fn row_sum(&self, row: usize) -> u64 {
        (0..self.size()).map(|j| self.count(row, j)).sum()
    }

    pub fn col_sum(&self, col: usize) -> u64 {
        (0..self.size()).map(|i| self.count(i, col)).sum()
    }

    /// Header row and column of labels, then counts.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![String::new()];
        header.extend(self.labels.iter().map(u16::to_string));
        w.write_record(&header)?;
        for (i, label) in self.labels.iter().enumerate() {
            let mut row = vec![label.to_string()];
            row.extend((0..self.size()).map(|j| self.count(i, j).to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

pub fn confusion_matrix(
    reference: &LabelRaster,
    predicted: &LabelRaster,
    ignore_zero_reference: bool,
) -> Result<ConfusionMatrix> {
    confusion_matrix_with(
        reference,
        predicted,
        AssessOptions {
            ignore_zero_reference,
            ..Default::default()
        },
    )
}

pub fn confusion_matrix_with(
    reference: &LabelRaster,
    predicted: &LabelRaster,
    options: AssessOptions,
) -> Result<ConfusionMatrix> {
    if !reference.same_shape(predicted) {
        return Err(AccuracyError::DimensionMismatch {
            rw: reference.width(),
            rh: reference.height(),
            pw: predicted.width(),
            ph: predicted.height(),
        });
    }
    let mut pairs: BTreeMap<(u16, u16), u64> = BTreeMap::new();
    for (&r, &p) in reference.labels().iter().zip(predicted.labels()) {
        if (options.ignore_zero_reference && r == 0) || (options.ignore_unclassified && p == 0) {
            continue;
        }
        *pairs.entry((r, p)).or_default() += 1;
    }
    if pairs.is_empty() {
        return Err(AccuracyError::NothingAssessable);
    }
    let mut labels: Vec<u16> = pairs.keys().flat_map(|&(r, p)| [r, p]).collect();
    labels.sort_unstable();
    labels.dedup();
    let pos = |l: u16| labels.binary_search(&l).expect("label collected above");
    let n = labels.len();
    let mut counts = vec![0u64; n * n];
    for (&(r, p), &c) in &pairs {
        counts[pos(r) * n + pos(p)] += c;
    }
    let total = counts.iter().sum();
    Ok(ConfusionMatrix {
        labels,
        counts,
        total,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelAccuracy {
    pub label: u16,
    /// Correct / reference count; `None` when the label has no reference pixels.
    pub producer: Option<f64>,
    /// Correct / predicted count; `None` when the label was never predicted.
    pub user: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub overall_accuracy: f64,
    pub per_label: Vec<LabelAccuracy>,
    /// Cohen's kappa; `None` when chance agreement is 1.
    pub kappa: Option<f64>,
}

pub fn accuracy_report(cm: &ConfusionMatrix) -> Result<AccuracyReport> {
    if cm.total() == 0 {
        return Err(AccuracyError::NothingAssessable);
    }
    let total = cm.total() as f64;
    let po = cm.trace() as f64 / total;
    let per_label = cm
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let diag = cm.count(i, i) as f64;
            let frac = |d: u64| (d > 0).then(|| diag / d as f64);
            LabelAccuracy {
                label,
                producer: frac(cm.row_sum(i)),
                user: frac(cm.col_sum(i)),
            }
        })
        .collect();
    let pe: f64 = (0..cm.size())
        .map(|i| (cm.row_sum(i) as f64 / total) * (cm.col_sum(i) as f64 / total))
        .sum();
    let kappa = (pe < 1.0).then(|| (po - pe) / (1.0 - pe));
    Ok(AccuracyReport {
        overall_accuracy: po,
        per_label,
        kappa,
    })
}

impl AccuracyReport {
    /// `metric,label,value` rows. Absent values are left empty.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["metric", "label", "value"])?;
        w.write_record(["overall_accuracy", "", &self.overall_accuracy.to_string()])?;
        w.write_record(["kappa", "", &opt(self.kappa)])?;
        for la in &self.per_label {
            let label = la.label.to_string();
            w.write_record(["producer_accuracy", &label, &opt(la.producer)])?;
            w.write_record(["user_accuracy", &label, &opt(la.user)])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodAccuracy {
    pub config: ClassifierConfig,
    pub overall_accuracy: f64,
    pub kappa: Option<f64>,
}

/// Classifies `image` with each config using one set of training statistics,
/// scores every map against `truth`, and returns rows sorted by overall
/// accuracy, best first. Equal scores keep the input order.
pub fn compare_methods(
    image: &MultibandImage,
    training: &TrainingSet,
    truth: &LabelRaster,
    configs: &[ClassifierConfig],
    options: AssessOptions,
) -> Result<Vec<MethodAccuracy>> {
    let sigs = train_signatures(training)?;
    let mut rows = configs
        .iter()
        .map(|config| {
            let map = classify(image, &sigs, config)?;
            let report = accuracy_report(&confusion_matrix_with(truth, &map, options)?)?;
            Ok(MethodAccuracy {
                config: *config,
                overall_accuracy: report.overall_accuracy,
                kappa: report.kappa,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| b.overall_accuracy.total_cmp(&a.overall_accuracy));
    Ok(rows)
}
