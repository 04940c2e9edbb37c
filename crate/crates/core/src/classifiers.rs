//! Supervised per-pixel classifiers: parallelepiped and minimum distance to
//! mean, plus signature training from labelled samples.
//!
//! Output maps use label 0 for unclassified pixels. Ties and overlaps are
//! always resolved on label value, never on the order signatures are given,
//! so permuting the signature list cannot change a map.

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::raster::{LabelRaster, MultibandImage};

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("training set is empty")]
    EmptyTraining,
    #[error("label 0 is reserved for unclassified pixels")]
    ZeroLabel,
    #[error("sample {index} has {got} values, expected {expected}")]
    SampleLength {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("selected band {band} is outside 1..={band_count}")]
    BadSelectedBand { band: usize, band_count: usize },
    #[error("class {label} has {got} samples, at least {need} required")]
    TooFewSamples { label: u16, got: usize, need: usize },
    #[error("no signatures to classify with")]
    NoSignatures,
    #[error("signature {label} uses band {band} but the image has {band_count} bands")]
    DimensionMismatch {
        label: u16,
        band: usize,
        band_count: usize,
    },
    #[error("signatures disagree on the bands they use")]
    InconsistentSignatures,
    #[error("invalid classifier setting: {0}")]
    Config(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("training csv line {line}: {reason}")]
    BadRow { line: u64, reason: String },
}

pub type Result<T> = std::result::Result<T, ClassifyError>;

/// Labelled feature vectors. `features[i]` holds band `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    samples: Vec<(u16, Vec<f64>)>,
    band_count: usize,
    selected_bands: Option<Vec<usize>>,
}

impl TrainingSet {
    pub fn new(samples: Vec<(u16, Vec<f64>)>) -> Result<Self> {
        let band_count = samples
            .first()
            .map(|(_, f)| f.len())
            .ok_or(ClassifyError::EmptyTraining)?;
        for (index, (label, features)) in samples.iter().enumerate() {
            if *label == 0 {
                return Err(ClassifyError::ZeroLabel);
            }
            if features.len() != band_count {
                return Err(ClassifyError::SampleLength {
                    index,
                    expected: band_count,
                    got: features.len(),
                });
            }
        }
        Ok(Self {
            samples,
            band_count,
            selected_bands: None,
        })
    }

    /// Restricts training and classification to the given 1-based bands.
    pub fn with_selected_bands(mut self, bands: Vec<usize>) -> Result<Self> {
        if bands.is_empty() {
            return Err(ClassifyError::Config("band selection is empty".into()));
        }
        if let Some(&band) = bands.iter().find(|&&b| b == 0 || b > self.band_count) {
            return Err(ClassifyError::BadSelectedBand {
                band,
                band_count: self.band_count,
            });
        }
        self.selected_bands = Some(bands);
        Ok(self)
    }

    pub fn samples(&self) -> &[(u16, Vec<f64>)] {
        &self.samples
    }

    pub fn band_count(&self) -> usize {
        self.band_count
    }

    /// Bands used for training, 1-based.
    pub fn active_bands(&self) -> Vec<usize> {
        self.selected_bands
            .clone()
            .unwrap_or_else(|| (1..=self.band_count).collect())
    }

    /// Reads `label,b1,...,bN` rows.
    pub fn from_csv<R: io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.get(0).map(|h| h.eq_ignore_ascii_case("label")) != Some(true) || headers.len() < 2 {
            return Err(ClassifyError::BadRow {
                line: 1,
                reason: "header must be label,b1,...,bN".into(),
            });
        }
        let mut samples = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let bad = |reason: String| ClassifyError::BadRow { line, reason };
            let label: u16 = row[0]
                .parse()
                .map_err(|_| bad(format!("label `{}` is not a u16", &row[0])))?;
            let features = row
                .iter()
                .skip(1)
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| bad(format!("`{v}` is not a number")))
                })
                .collect::<Result<Vec<_>>>()?;
            samples.push((label, features));
        }
        Self::new(samples)
    }

    /// Pixels of `image` under every non-zero label of `truth`, in pixel order.
    /// Useful for drawing training samples from a reference map.
    pub fn from_labelled_pixels(image: &MultibandImage, truth: &LabelRaster, step: usize) -> Result<Self> {
        let mut px = Vec::new();
        let samples = truth
            .labels()
            .iter()
            .enumerate()
            .step_by(step.max(1))
            .filter(|(_, &l)| l != 0)
            .map(|(i, &l)| {
                image.pixel_into(i, &mut px);
                (l, px.clone())
            })
            .collect();
        Self::new(samples)
    }
}

/// Per-class statistics over the active bands.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSignature {
    pub label: u16,
    /// 1-based image bands the vectors below refer to.
    pub bands: Vec<usize>,
    pub mean: Vec<f64>,
    /// Population standard deviation.
    pub stddev: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub sample_count: usize,
}

/// One signature per label, ascending by label.
pub fn train_signatures(training: &TrainingSet) -> Result<Vec<ClassSignature>> {
    let bands = training.active_bands();
    let mut by_label: BTreeMap<u16, Vec<&[f64]>> = BTreeMap::new();
    for (label, f) in &training.samples {
        by_label.entry(*label).or_default().push(f);
    }
    Ok(by_label
        .into_iter()
        .map(|(label, rows)| {
            let n = rows.len() as f64;
            let column = |b: usize| rows.iter().map(move |r| r[b - 1]);
            let mean: Vec<f64> = bands.iter().map(|&b| column(b).sum::<f64>() / n).collect();
            let stddev = bands
                .iter()
                .zip(&mean)
                .map(|(&b, m)| (column(b).map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt())
                .collect();
            let min = bands
                .iter()
                .map(|&b| column(b).fold(f64::INFINITY, f64::min))
                .collect();
            let max = bands
                .iter()
                .map(|&b| column(b).fold(f64::NEG_INFINITY, f64::max))
                .collect();
            ClassSignature {
                label,
                bands: bands.clone(),
                mean,
                stddev,
                min,
                max,
                sample_count: rows.len(),
            }
        })
        .collect())
}

/// Trains and checks every class has enough samples for `config`.
pub fn train_signatures_for(
    training: &TrainingSet,
    config: &ClassifierConfig,
) -> Result<Vec<ClassSignature>> {
    let sigs = train_signatures(training)?;
    check_sample_counts(&sigs, config)?;
    Ok(sigs)
}

fn check_sample_counts(sigs: &[ClassSignature], config: &ClassifierConfig) -> Result<()> {
    let need = config.min_samples_per_class();
    match sigs.iter().find(|s| s.sample_count < need) {
        Some(s) => Err(ClassifyError::TooFewSamples {
            label: s.label,
            got: s.sample_count,
            need,
        }),
        None => Ok(()),
    }
}

/// Writes `label,band,mean,stddev,min,max,count` rows.
pub fn write_signatures_csv<W: io::Write>(sigs: &[ClassSignature], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["label", "band", "mean", "stddev", "min", "max", "count"])?;
    for s in sigs {
        for (i, band) in s.bands.iter().enumerate() {
            w.write_record([
                s.label.to_string(),
                band.to_string(),
                s.mean[i].to_string(),
                s.stddev[i].to_string(),
                s.min[i].to_string(),
                s.max[i].to_string(),
                s.sample_count.to_string(),
            ])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Parallelepiped,
    MinimumDistance,
}

/// How a parallelepiped class box is built from its signature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoxRule {
    /// Training minimum to maximum per band.
    MinMax,
    /// mean ± k·σ per band.
    MeanSigma(f64),
}

/// What to do with a pixel that falls inside more than one box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapRule {
    /// Nearest class mean among the containing boxes.
    NearestMean,
    /// Lowest label among the containing boxes.
    FirstMatch,
    /// Leave it unclassified.
    Unclassified,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig {
    pub method: Method,
    pub box_rule: BoxRule,
    pub overlap_rule: OverlapRule,
    pub max_distance: Option<f64>,
}

impl ClassifierConfig {
    pub fn minimum_distance() -> Self {
        Self {
            method: Method::MinimumDistance,
            box_rule: BoxRule::MinMax,
            overlap_rule: OverlapRule::NearestMean,
            max_distance: None,
        }
    }

    pub fn parallelepiped() -> Self {
        Self {
            method: Method::Parallelepiped,
            ..Self::minimum_distance()
        }
    }

    pub fn with_box_rule(mut self, rule: BoxRule) -> Self {
        self.box_rule = rule;
        self
    }

    pub fn with_overlap_rule(mut self, rule: OverlapRule) -> Self {
        self.overlap_rule = rule;
        self
    }

    pub fn with_max_distance(mut self, d: Option<f64>) -> Self {
        self.max_distance = d;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let BoxRule::MeanSigma(k) = self.box_rule {
            if !(k.is_finite() && k > 0.0) {
                return Err(ClassifyError::Config(format!(
                    "mean-sigma k must be > 0, got {k}"
                )));
            }
        }
        if let Some(d) = self.max_distance {
            if d.is_nan() || d < 0.0 {
                return Err(ClassifyError::Config(format!(
                    "max distance must be >= 0, got {d}"
                )));
            }
        }
        Ok(())
    }

    /// Samples per class required by the configured method.
    pub fn min_samples_per_class(&self) -> usize {
        match (self.method, self.box_rule) {
            (Method::Parallelepiped, BoxRule::MeanSigma(_)) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for ClassifierConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.method {
            Method::MinimumDistance => {
                f.write_str("mindist")?;
                if let Some(d) = self.max_distance {
                    write!(f, "/{d}")?;
                }
                Ok(())
            }
            Method::Parallelepiped => {
                f.write_str("parallelepiped")?;
                match self.box_rule {
                    BoxRule::MinMax => f.write_str("/minmax")?,
                    BoxRule::MeanSigma(k) => write!(f, "/meansigma:{k}")?,
                }
                f.write_str(match self.overlap_rule {
                    OverlapRule::NearestMean => "/nearest",
                    OverlapRule::FirstMatch => "/first",
                    OverlapRule::Unclassified => "/none",
                })
            }
        }
    }
}

impl FromStr for BoxRule {
    type Err = ClassifyError;

    /// `minmax` or `meansigma:<k>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "minmax" {
            return Ok(BoxRule::MinMax);
        }
        if let Some(k) = s.strip_prefix("meansigma:") {
            let k: f64 = k
                .parse()
                .map_err(|_| ClassifyError::Config(format!("bad mean-sigma factor `{k}`")))?;
            if !(k.is_finite() && k > 0.0) {
                return Err(ClassifyError::Config(format!(
                    "mean-sigma k must be > 0, got {k}"
                )));
            }
            return Ok(BoxRule::MeanSigma(k));
        }
        Err(ClassifyError::Config(format!("unknown box rule `{s}`")))
    }
}

impl FromStr for OverlapRule {
    type Err = ClassifyError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nearest" => Ok(OverlapRule::NearestMean),
            "first" => Ok(OverlapRule::FirstMatch),
            "none" => Ok(OverlapRule::Unclassified),
            other => Err(ClassifyError::Config(format!("unknown overlap rule `{other}`"))),
        }
    }
}

impl FromStr for ClassifierConfig {
    type Err = ClassifyError;

    /// `mindist[/<max-distance>]` or
    /// `parallelepiped[/minmax|/meansigma:<k>][/nearest|/first|/none]`.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split('/');
        let head = parts.next().unwrap_or_default().to_ascii_lowercase();
        match head.as_str() {
            "mindist" | "minimum-distance" => {
                let mut cfg = ClassifierConfig::minimum_distance();
                if let Some(d) = parts.next() {
                    let d: f64 = d
                        .parse()
                        .map_err(|_| ClassifyError::Config(format!("bad max distance `{d}`")))?;
                    cfg.max_distance = Some(d);
                }
                if let Some(extra) = parts.next() {
                    return Err(ClassifyError::Config(format!("unexpected `{extra}` in `{s}`")));
                }
                cfg.validate()?;
                Ok(cfg)
            }
            "parallelepiped" => {
                let mut cfg = ClassifierConfig::parallelepiped();
                for part in parts {
                    if let Ok(rule) = part.parse::<OverlapRule>() {
                        cfg.overlap_rule = rule;
                    } else {
                        cfg.box_rule = part.parse()?;
                    }
                }
                Ok(cfg)
            }
            _ => Err(ClassifyError::Config(format!("unknown method `{s}`"))),
        }
    }
}

/// Bands shared by all signatures, checked against the image.
fn signature_bands(image: &MultibandImage, sigs: &[ClassSignature]) -> Result<Vec<usize>> {
    let first = sigs.first().ok_or(ClassifyError::NoSignatures)?;
    if sigs
        .iter()
        .any(|s| s.bands != first.bands || s.mean.len() != s.bands.len())
    {
        return Err(ClassifyError::InconsistentSignatures);
    }
    if let Some(&band) = first.bands.iter().find(|&&b| b == 0 || b > image.band_count()) {
        return Err(ClassifyError::DimensionMismatch {
            label: first.label,
            band,
            band_count: image.band_count(),
        });
    }
    Ok(first.bands.clone())
}

/// Signatures sorted by label so that ties resolve to the lowest label.
fn by_label(sigs: &[ClassSignature]) -> Vec<&ClassSignature> {
    let mut v: Vec<&ClassSignature> = sigs.iter().collect();
    v.sort_by_key(|s| s.label);
    v
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Nearest signature by Euclidean distance to the mean; lowest label on ties.
fn nearest<'a>(feature: &[f64], sigs: impl IntoIterator<Item = &'a ClassSignature>) -> Option<(u16, f64)> {
    let mut best: Option<(u16, f64)> = None;
    for s in sigs {
        let d = euclidean_distance(feature, &s.mean);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((s.label, d));
        }
    }
    best
}

/// Applies `decide` to every pixel's feature vector over `bands`. Pixels with
/// a nodata value in any used band get label 0.
fn classify_pixels<F>(image: &MultibandImage, bands: &[usize], decide: F) -> LabelRaster
where
    F: Fn(&[f64]) -> u16 + Sync,
{
    let planes: Vec<&[f64]> = bands
        .iter()
        .map(|&b| image.band(b).expect("band checked"))
        .collect();
    let w = image.width();
    let labels: Vec<u16> = (0..image.height())
        .into_par_iter()
        .flat_map_iter(|y| {
            let planes = &planes;
            let decide = &decide;
            let mut feature = vec![0.0; planes.len()];
            (y * w..(y + 1) * w).map(move |i| {
                for (f, p) in feature.iter_mut().zip(planes) {
                    *f = p[i];
                }
                if feature.iter().any(|&v| image.is_nodata(v)) {
                    0
                } else {
                    decide(&feature)
                }
            })
        })
        .collect();
    LabelRaster::new(w, image.height(), labels).expect("one label per pixel")
}

pub fn classify_minimum_distance(
    image: &MultibandImage,
    sigs: &[ClassSignature],
    config: &ClassifierConfig,
) -> Result<LabelRaster> {
    config.validate()?;
    let bands = signature_bands(image, sigs)?;
    let ordered = by_label(sigs);
    Ok(classify_pixels(image, &bands, |f| {
        match nearest(f, ordered.iter().copied()) {
            Some((_, d)) if config.max_distance.is_some_and(|max| d > max) => 0,
            Some((label, _)) => label,
            None => 0,
        }
    }))
}

/// Per-band closed interval `[lo, hi]` for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassBox {
    pub label: u16,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ClassBox {
    pub fn from_signature(sig: &ClassSignature, rule: BoxRule) -> Self {
        let (lo, hi) = match rule {
            BoxRule::MinMax => (sig.min.clone(), sig.max.clone()),
            BoxRule::MeanSigma(k) => sig
                .mean
                .iter()
                .zip(&sig.stddev)
                .map(|(m, s)| (m - k * s, m + k * s))
                .unzip(),
        };
        Self {
            label: sig.label,
            lo,
            hi,
        }
    }

    pub fn contains(&self, feature: &[f64]) -> bool {
        feature
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }
}

pub fn classify_parallelepiped(
    image: &MultibandImage,
    sigs: &[ClassSignature],
    config: &ClassifierConfig,
) -> Result<LabelRaster> {
    config.validate()?;
    let bands = signature_bands(image, sigs)?;
    check_sample_counts(
        sigs,
        &ClassifierConfig {
            method: Method::Parallelepiped,
            ..*config
        },
    )?;
    let ordered = by_label(sigs);
    let boxes: Vec<ClassBox> = ordered
        .iter()
        .map(|s| ClassBox::from_signature(s, config.box_rule))
        .collect();
    Ok(classify_pixels(image, &bands, |f| {
        let mut inside = ordered.iter().zip(&boxes).filter(|(_, b)| b.contains(f));
        let Some((first, _)) = inside.next() else {
            return 0;
        };
        let Some(second) = inside.next() else {
            return first.label;
        };
        match config.overlap_rule {
            OverlapRule::FirstMatch => first.label,
            OverlapRule::Unclassified => 0,
            OverlapRule::NearestMean => {
                let candidates = [*first, *second.0].into_iter().chain(inside.map(|(s, _)| *s));
                nearest(f, candidates).map_or(0, |(l, _)| l)
            }
        }
    }))
}

/// Dispatches on `config.method`.
pub fn classify(
    image: &MultibandImage,
    sigs: &[ClassSignature],
    config: &ClassifierConfig,
) -> Result<LabelRaster> {
    match config.method {
        Method::MinimumDistance => classify_minimum_distance(image, sigs, config),
        Method::Parallelepiped => classify_parallelepiped(image, sigs, config),
    }
}

/// Pixel count per label, including 0.
pub fn classification_map_stats(map: &LabelRaster) -> BTreeMap<u16, usize> {
    let mut counts = BTreeMap::new();
    for &l in map.labels() {
        *counts.entry(l).or_default() += 1;
    }
    counts
}
