//! Band statistics, inter-band correlation and Optimum Index Factor ranking.
//!
//! The OIF of a band combination is the sum of the bands' standard
//! deviations divided by the sum of the absolute pairwise correlation
//! coefficients. High variance and low redundancy give a high score.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::raster::MultibandImage;

/// Correlation sums below this are treated as zero and the record is
/// flagged degenerate.
pub const DEGENERATE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum BandSelectionError {
    #[error("band {0} has no valid pixels")]
    EmptyBand(usize),
    #[error("bands {0} and {1} share fewer than 2 valid pixels")]
    InsufficientPixels(usize, usize),
    #[error("combination size {r} is invalid for {n} bands")]
    InvalidComboSize { n: usize, r: usize },
    #[error("combination {0} references a band without statistics")]
    UnknownBand(BandCombo),
    #[error("duplicate combination {0}")]
    DuplicateCombo(BandCombo),
    #[error("no records to rank")]
    Empty,
    #[error("invalid combination `{0}`")]
    BadCombo(String),
    #[error("bad sort order `{0}`, expected asc or desc")]
    BadOrder(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {reason}")]
    BadRow { line: u64, reason: String },
}

pub type Result<T> = std::result::Result<T, BandSelectionError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandStats {
    pub band: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub stddev: f64,
    pub count: usize,
}

/// Mean and population standard deviation of every band over its valid pixels.
pub fn band_statistics(image: &MultibandImage) -> Result<Vec<BandStats>> {
    image
        .bands()
        .iter()
        .enumerate()
        .map(|(i, band)| {
            let valid = || band.iter().copied().filter(|&v| !image.is_nodata(v));
            let count = valid().count();
            if count == 0 {
                return Err(BandSelectionError::EmptyBand(i + 1));
            }
            let mean = valid().sum::<f64>() / count as f64;
            let var = valid().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64;
            Ok(BandStats {
                band: i + 1,
                mean,
                stddev: var.sqrt(),
                count,
            })
        })
        .collect()
}

/// Symmetric Pearson correlation matrix indexed by 1-based band numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    n: usize,
    entries: Vec<f64>,
    degenerate: Vec<bool>,
}

impl CorrelationMatrix {
    pub fn band_count(&self) -> usize {
        self.n
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.entries[(a - 1) * self.n + (b - 1)]
    }

    /// True when the coefficient is undefined because a band is constant;
    /// such entries are stored as 0.
    pub fn is_degenerate(&self, a: usize, b: usize) -> bool {
        self.degenerate[(a - 1) * self.n + (b - 1)]
    }
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let den = (sxx * syy).sqrt();
    (den > 0.0).then(|| (sxy / den).clamp(-1.0, 1.0))
}

/// Pearson correlation for every band pair, over pixels valid in both bands.
pub fn correlation_matrix(image: &MultibandImage) -> Result<CorrelationMatrix> {
    let n = image.band_count();
    let bands = image.bands();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let coeffs = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = bands[i]
                .iter()
                .zip(&bands[j])
                .filter(|&(&x, &y)| !image.is_nodata(x) && !image.is_nodata(y))
                .map(|(&x, &y)| (x, y))
                .unzip();
            if xs.len() < 2 {
                return Err(BandSelectionError::InsufficientPixels(i + 1, j + 1));
            }
            Ok(pearson(&xs, &ys))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut entries = vec![0.0; n * n];
    let mut degenerate = vec![false; n * n];
    for i in 0..n {
        entries[i * n + i] = 1.0;
    }
    for (&(i, j), r) in pairs.iter().zip(coeffs) {
        let (v, flag) = match r {
            Some(v) => (v, false),
            None => (0.0, true),
        };
        for idx in [i * n + j, j * n + i] {
            entries[idx] = v;
            degenerate[idx] = flag;
        }
    }
    Ok(CorrelationMatrix {
        n,
        entries,
        degenerate,
    })
}

/// Strictly increasing tuple of 1-based band numbers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BandCombo(Vec<usize>);

impl BandCombo {
    pub fn new(mut bands: Vec<usize>) -> Result<Self> {
        bands.sort_unstable();
        let ok = !bands.is_empty() && bands[0] >= 1 && bands.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(BandSelectionError::BadCombo(format!("{bands:?}")));
        }
        Ok(Self(bands))
    }

    pub fn bands(&self) -> &[usize] {
        &self.0
    }

    pub fn contains(&self, band: usize) -> bool {
        self.0.contains(&band)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for BandCombo {
    /// Concatenated digits (`345`) when every band is below 10, otherwise
    /// dash-separated (`3-4-12`).
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sep = if self.0.iter().all(|&b| b < 10) { "" } else { "-" };
        let parts: Vec<String> = self.0.iter().map(usize::to_string).collect();
        f.write_str(&parts.join(sep))
    }
}

impl FromStr for BandCombo {
    type Err = BandSelectionError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || BandSelectionError::BadCombo(s.to_string());
        let bands: Vec<usize> = if s.contains(['-', ',', ' ']) {
            s.split(['-', ',', ' '])
                .filter(|p| !p.is_empty())
                .map(|p| p.parse().map_err(|_| bad()))
                .collect::<Result<_>>()?
        } else {
            s.chars()
                .map(|c| c.to_digit(10).map(|d| d as usize).ok_or_else(bad))
                .collect::<Result<_>>()?
        };
        let len = bands.len();
        let combo = BandCombo::new(bands).map_err(|_| bad())?;
        if combo.len() != len {
            return Err(bad());
        }
        Ok(combo)
    }
}

/// All `C(n, r)` strictly increasing combinations of bands `1..=n`, in
/// lexicographic order.
pub fn enumerate_combinations(n: usize, r: usize) -> Result<Vec<BandCombo>> {
    if r == 0 || r > n {
        return Err(BandSelectionError::InvalidComboSize { n, r });
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (1..=r).collect();
    loop {
        out.push(BandCombo(idx.clone()));
        // rightmost position that can still advance
        let Some(pos) = (0..r).rev().find(|&i| idx[i] < n - (r - 1 - i)) else {
            break;
        };
        idx[pos] += 1;
        for k in pos + 1..r {
            idx[k] = idx[k - 1] + 1;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OifRecord {
    pub combo: BandCombo,
    /// `None` when the record is degenerate.
    pub oif: Option<f64>,
}

impl OifRecord {
    pub fn is_degenerate(&self) -> bool {
        self.oif.is_none()
    }
}

pub fn oif_score(combo: &BandCombo, stats: &[BandStats], corr: &CorrelationMatrix) -> Result<OifRecord> {
    let mut sigma_sum = 0.0;
    for &b in combo.bands() {
        let s = stats
            .iter()
            .find(|s| s.band == b)
            .ok_or_else(|| BandSelectionError::UnknownBand(combo.clone()))?;
        sigma_sum += s.stddev;
    }
    if combo.bands().iter().any(|&b| b > corr.band_count()) {
        return Err(BandSelectionError::UnknownBand(combo.clone()));
    }
    let bands = combo.bands();
    let mut corr_sum = 0.0;
    for (i, &a) in bands.iter().enumerate() {
        for &b in &bands[i + 1..] {
            corr_sum += corr.get(a, b).abs();
        }
    }
    let oif = (corr_sum >= DEGENERATE_TOLERANCE).then(|| sigma_sum / corr_sum);
    Ok(OifRecord {
        combo: combo.clone(),
        oif,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SortOrder {
    Ascending,
    Descending,
}

impl FromStr for SortOrder {
    type Err = BandSelectionError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "asc" | "ascending" => Ok(SortOrder::Ascending),
            "desc" | "descending" => Ok(SortOrder::Descending),
            other => Err(BandSelectionError::BadOrder(other.to_string())),
        }
    }
}

/// Records sorted by OIF. Ties are broken by lexicographic combo order and
/// degenerate records always come last.
#[derive(Debug, Clone, PartialEq)]
pub struct OifRanking {
    pub records: Vec<OifRecord>,
    pub order: SortOrder,
}

impl OifRanking {
    pub fn new(mut records: Vec<OifRecord>, order: SortOrder) -> Self {
        records.sort_by(|a, b| match (a.oif, b.oif) {
            (Some(x), Some(y)) => {
                let by_score = match order {
                    SortOrder::Ascending => x.total_cmp(&y),
                    SortOrder::Descending => y.total_cmp(&x),
                };
                by_score.then_with(|| a.combo.cmp(&b.combo))
            }
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => a.combo.cmp(&b.combo),
        });
        Self { records, order }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Per-band count of the first `top_k` records containing that band.
    /// Every band that occurs anywhere in the ranking gets an entry.
    pub fn band_membership(&self, top_k: usize) -> BTreeMap<usize, usize> {
        let mut counts: BTreeMap<usize, usize> = self
            .records
            .iter()
            .flat_map(|r| r.combo.bands().iter().map(|&b| (b, 0)))
            .collect();
        for rec in self.records.iter().take(top_k) {
            for &b in rec.combo.bands() {
                *counts.entry(b).or_default() += 1;
            }
        }
        counts
    }
}

/// Scores every `r`-band combination of `image` and sorts the result.
pub fn rank_combinations(image: &MultibandImage, r: usize, order: SortOrder) -> Result<OifRanking> {
    let combos = enumerate_combinations(image.band_count(), r)?;
    let stats = band_statistics(image)?;
    let corr = correlation_matrix(image)?;
    let records = combos
        .par_iter()
        .map(|c| oif_score(c, &stats, &corr))
        .collect::<Result<Vec<_>>>()?;
    Ok(OifRanking::new(records, order))
}

/// Ranks externally supplied (combo, OIF) pairs and counts band membership
/// among the first `top_k`.
pub fn rank_from_table(
    records: Vec<(BandCombo, f64)>,
    order: SortOrder,
    top_k: usize,
) -> Result<(OifRanking, BTreeMap<usize, usize>)> {
    if records.is_empty() {
        return Err(BandSelectionError::Empty);
    }
    let mut seen = HashSet::new();
    for (combo, _) in &records {
        if !seen.insert(combo.clone()) {
            return Err(BandSelectionError::DuplicateCombo(combo.clone()));
        }
    }
    let records = records
        .into_iter()
        .map(|(combo, oif)| OifRecord {
            combo,
            oif: Some(oif),
        })
        .collect();
    let ranking = OifRanking::new(records, order);
    let membership = ranking.band_membership(top_k);
    Ok((ranking, membership))
}

/// Reads a `combo,oif` CSV such as `345,29.230`.
pub fn read_oif_table<R: io::Read>(reader: R) -> Result<Vec<(BandCombo, f64)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| BandSelectionError::BadRow {
                line: 1,
                reason: format!("missing `{name}` column"),
            })
    };
    let (ci, oi) = (col("combo")?, col("oif")?);
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |reason: String| BandSelectionError::BadRow { line, reason };
        let combo: BandCombo = row
            .get(ci)
            .unwrap_or_default()
            .parse()
            .map_err(|e: BandSelectionError| bad(e.to_string()))?;
        let raw = row.get(oi).unwrap_or_default();
        let oif: f64 = raw
            .parse()
            .map_err(|_| bad(format!("oif `{raw}` is not a number")))?;
        out.push((combo, oif));
    }
    Ok(out)
}

/// Writes `rank,combo,oif,degenerate` rows; degenerate records have an empty oif.
pub fn write_ranking_csv<W: io::Write>(ranking: &OifRanking, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["rank", "combo", "oif", "degenerate"])?;
    for (i, rec) in ranking.records.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            rec.combo.to_string(),
            rec.oif.map(|v| v.to_string()).unwrap_or_default(),
            rec.is_degenerate().to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Writes `band,count_in_topk` rows.
pub fn write_membership_csv<W: io::Write>(membership: &BTreeMap<usize, usize>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["band", "count_in_topk"])?;
    for (band, count) in membership {
        w.write_record([band.to_string(), count.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
