//! Band-ratio and vegetation indices for Landsat TM band numbering.
//!
//! Every evaluator returns `None` (nodata) instead of an infinity when a
//! denominator is zero, when a min/max normalisation range collapses, or
//! when one of the bands it reads is nodata.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::raster::{LabelRaster, MultibandImage};

/// Sentinel written for masked pixels when an index raster is persisted.
pub const INDEX_NODATA: f64 = -9999.0;

/// Soil brightness factor used for SAVI when none is given.
pub const DEFAULT_SAVI_L: f64 = 0.5;

pub const WATER_LABEL: u16 = 1;
pub const LAND_LABEL: u16 = 2;
pub const VEGETATED_LABEL: u16 = 1;
pub const NON_VEGETATED_LABEL: u16 = 2;

#[derive(Debug, Error, PartialEq)]
pub enum IndexError {
    #[error("{kind} needs band {band}, which the input does not have")]
    MissingBand { kind: IndexKind, band: usize },
    #[error("{0} needs min/max range statistics")]
    MissingAux(IndexKind),
    #[error("{kind} needs range statistics of {expected}, got {got}")]
    AuxMismatch {
        kind: IndexKind,
        expected: RangeSource,
        got: RangeSource,
    },
    #[error("SAVI soil factor must be finite and >= 0, got {0}")]
    InvalidSoilFactor(f64),
    #[error("unknown index kind `{0}`")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IndexKind {
    /// b2 / b5
    WaterRatio25,
    /// b4 / b2
    WaterRatio42,
    /// (b1 + b2 + b3) / (b4 + b5 + b7)
    WaterIndex,
    /// (b4 - b3) / (b4 + b3)
    Ndvi,
    /// NDVI scaled by the band-5 brightness correction.
    CorrectedNdvi,
    /// Square of min-max standardised NDVI.
    PercentVegCover,
    /// b4 / b3
    SimpleRatio,
    /// Simple ratio scaled by the band-5 brightness correction.
    ReducedSimpleRatio,
    /// ((b4 - b3) / (b4 + b3 + 1)) * (1 + L)
    Savi(f64),
    /// b4 / b5
    IceRatio45,
    /// b3 / b5
    IceRatio35,
    /// (b3 - b4) / (b2 - b4)
    SoilEcRatio,
}

/// What a [`BandRangeStats`] value was computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RangeSource {
    Band(usize),
    Ndvi,
}

impl fmt::Display for RangeSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RangeSource::Band(b) => write!(f, "band {b}"),
            RangeSource::Ndvi => f.write_str("NDVI"),
        }
    }
}

/// Min and max over the valid pixels of a band (or of NDVI).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandRangeStats {
    pub source: RangeSource,
    pub min: f64,
    pub max: f64,
}

impl BandRangeStats {
    pub fn band(band: usize, min: f64, max: f64) -> Self {
        Self {
            source: RangeSource::Band(band),
            min,
            max,
        }
    }

    pub fn ndvi(min: f64, max: f64) -> Self {
        Self {
            source: RangeSource::Ndvi,
            min,
            max,
        }
    }

    /// Range over the finite values yielded by `values`; `None` if there are none.
    pub fn over(source: RangeSource, values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let (min, max) = values.into_iter().filter(|v| v.is_finite()).fold(
            None,
            |acc: Option<(f64, f64)>, v| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            },
        )?;
        Some(Self { source, min, max })
    }

    /// (v - min) / (max - min), or `None` when the range is empty.
    fn normalise(&self, v: f64) -> Option<f64> {
        ratio(v - self.min, self.max - self.min)
    }
}

impl IndexKind {
    pub const ALL_NAMES: [&'static str; 12] = [
        "water-ratio-25",
        "water-ratio-42",
        "water-index",
        "ndvi",
        "corrected-ndvi",
        "percent-veg-cover",
        "simple-ratio",
        "reduced-simple-ratio",
        "savi",
        "ice-ratio-45",
        "ice-ratio-35",
        "soil-ec-ratio",
    ];

    pub fn savi(l: f64) -> Result<Self, IndexError> {
        if !(l.is_finite() && l >= 0.0) {
            return Err(IndexError::InvalidSoilFactor(l));
        }
        Ok(IndexKind::Savi(l))
    }

    /// Name without parameters.
    pub fn name(&self) -> &'static str {
        use IndexKind::*;
        match self {
            WaterRatio25 => "water-ratio-25",
            WaterRatio42 => "water-ratio-42",
            WaterIndex => "water-index",
            Ndvi => "ndvi",
            CorrectedNdvi => "corrected-ndvi",
            PercentVegCover => "percent-veg-cover",
            SimpleRatio => "simple-ratio",
            ReducedSimpleRatio => "reduced-simple-ratio",
            Savi(_) => "savi",
            IceRatio45 => "ice-ratio-45",
            IceRatio35 => "ice-ratio-35",
            SoilEcRatio => "soil-ec-ratio",
        }
    }

    /// 1-based band numbers the formula reads.
    pub fn bands(&self) -> &'static [usize] {
        use IndexKind::*;
        match self {
            WaterRatio25 => &[2, 5],
            WaterRatio42 => &[2, 4],
            WaterIndex => &[1, 2, 3, 4, 5, 7],
            Ndvi | SimpleRatio | Savi(_) | PercentVegCover => &[3, 4],
            CorrectedNdvi | ReducedSimpleRatio => &[3, 4, 5],
            IceRatio45 => &[4, 5],
            IceRatio35 => &[3, 5],
            SoilEcRatio => &[2, 3, 4],
        }
    }

    /// The range statistics this kind needs, if any.
    pub fn aux_source(&self) -> Option<RangeSource> {
        match self {
            IndexKind::CorrectedNdvi | IndexKind::ReducedSimpleRatio => Some(RangeSource::Band(5)),
            IndexKind::PercentVegCover => Some(RangeSource::Ndvi),
            _ => None,
        }
    }

    fn max_band(&self) -> usize {
        self.bands().iter().copied().max().unwrap_or(0)
    }
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndexKind::Savi(l) => write!(f, "savi:{l}"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for IndexKind {
    type Err = IndexError;

    /// Accepts the names in [`IndexKind::ALL_NAMES`]; SAVI may carry its soil
    /// factor as `savi:<L>` and defaults to 0.5.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        use IndexKind::*;
        let s = s.trim().to_ascii_lowercase();
        if let Some(l) = s.strip_prefix("savi:") {
            let l: f64 = l.parse().map_err(|_| IndexError::UnknownKind(s.clone()))?;
            return IndexKind::savi(l);
        }
        Ok(match s.as_str() {
            "water-ratio-25" => WaterRatio25,
            "water-ratio-42" => WaterRatio42,
            "water-index" => WaterIndex,
            "ndvi" => Ndvi,
            "corrected-ndvi" => CorrectedNdvi,
            "percent-veg-cover" => PercentVegCover,
            "simple-ratio" => SimpleRatio,
            "reduced-simple-ratio" => ReducedSimpleRatio,
            "savi" => Savi(DEFAULT_SAVI_L),
            "ice-ratio-45" => IceRatio45,
            "ice-ratio-35" => IceRatio35,
            "soil-ec-ratio" => SoilEcRatio,
            _ => return Err(IndexError::UnknownKind(s)),
        })
    }
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    if den == 0.0 {
        return None;
    }
    let v = num / den;
    v.is_finite().then_some(v)
}

fn ndvi(b3: f64, b4: f64) -> Option<f64> {
    ratio(b4 - b3, b4 + b3)
}

/// Evaluates `kind` for one pixel.
///
/// `bands[i]` holds band `i + 1`. Values equal to `nodata` (or NaN) are
/// treated as missing. Returns `Ok(None)` for nodata results.
pub fn evaluate_index_pixel(
    kind: IndexKind,
    bands: &[f64],
    aux: Option<&BandRangeStats>,
    nodata: Option<f64>,
) -> Result<Option<f64>, IndexError> {
    if let Some(&band) = kind.bands().iter().find(|&&b| b > bands.len()) {
        return Err(IndexError::MissingBand { kind, band });
    }
    let aux = match kind.aux_source() {
        None => None,
        Some(expected) => {
            let a = aux.ok_or(IndexError::MissingAux(kind))?;
            if a.source != expected {
                return Err(IndexError::AuxMismatch {
                    kind,
                    expected,
                    got: a.source,
                });
            }
            Some(a)
        }
    };
    let missing = |v: f64| v.is_nan() || nodata == Some(v);
    if kind.bands().iter().any(|&b| missing(bands[b - 1])) {
        return Ok(None);
    }
    let b = |n: usize| bands[n - 1];
    // Band-5 brightness correction factor: 1 - (b5 - min) / (max - min).
    let b5_factor = || aux.and_then(|a| a.normalise(b(5))).map(|t| 1.0 - t);

    use IndexKind::*;
    let value = match kind {
        WaterRatio25 => ratio(b(2), b(5)),
        WaterRatio42 => ratio(b(4), b(2)),
        WaterIndex => ratio(b(1) + b(2) + b(3), b(4) + b(5) + b(7)),
        Ndvi => ndvi(b(3), b(4)),
        CorrectedNdvi => ndvi(b(3), b(4)).zip(b5_factor()).map(|(v, f)| v * f),
        PercentVegCover => ndvi(b(3), b(4))
            .and_then(|v| aux.and_then(|a| a.normalise(v)))
            .map(|s| s * s),
        SimpleRatio => ratio(b(4), b(3)),
        ReducedSimpleRatio => ratio(b(4), b(3)).zip(b5_factor()).map(|(v, f)| v * f),
        Savi(l) => ratio(b(4) - b(3), b(4) + b(3) + 1.0).map(|v| v * (1.0 + l)),
        IceRatio45 => ratio(b(4), b(5)),
        IceRatio35 => ratio(b(3), b(5)),
        SoilEcRatio => ratio(b(3) - b(4), b(2) - b(4)),
    };
    Ok(value.filter(|v| v.is_finite()))
}

/// Per-pixel index values with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexRaster {
    pub width: usize,
    pub height: usize,
    pub kind: IndexKind,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl IndexRaster {
    fn from_options(width: usize, height: usize, kind: IndexKind, vals: Vec<Option<f64>>) -> Self {
        let valid = vals.iter().map(Option::is_some).collect();
        let values = vals.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        Self {
            width,
            height,
            kind,
            values,
            valid,
        }
    }

    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        self.at(y * self.width + x)
    }

    /// Value at a flat pixel index.
    pub fn at(&self, index: usize) -> Option<f64> {
        self.valid[index].then(|| self.values[index])
    }

    pub fn iter(&self) -> impl Iterator<Item = Option<f64>> + '_ {
        (0..self.values.len()).map(|i| self.at(i))
    }

    pub fn is_valid(&self, index: usize) -> bool {
        self.valid[index]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// One-band image with masked pixels set to `nodata`.
    pub fn to_image(&self, nodata: f64) -> MultibandImage {
        let band = self.iter().map(|v| v.unwrap_or(nodata)).collect();
        MultibandImage::new(self.width, self.height, vec![band])
            .expect("index raster dimensions are valid")
            .with_nodata(Some(nodata))
    }

    /// Header comment lines recording the index kind.
    pub fn header_comments(&self) -> Vec<String> {
        vec![format!("kind={}", self.kind)]
    }
}

fn require_bands(image: &MultibandImage, kind: IndexKind) -> Result<(), IndexError> {
    if kind.max_band() > image.band_count() {
        let band = kind
            .bands()
            .iter()
            .copied()
            .find(|&b| b > image.band_count())
            .unwrap_or(kind.max_band());
        return Err(IndexError::MissingBand { kind, band });
    }
    Ok(())
}

/// Range statistics over the whole image for the kind's aux source.
/// `Ok(None)` when the kind needs none or the source has no valid pixel.
pub fn image_aux_stats(
    image: &MultibandImage,
    kind: IndexKind,
) -> Result<Option<BandRangeStats>, IndexError> {
    let Some(source) = kind.aux_source() else {
        return Ok(None);
    };
    match source {
        RangeSource::Band(n) => {
            let band = image.band(n).ok_or(IndexError::MissingBand { kind, band: n })?;
            Ok(BandRangeStats::over(
                source,
                band.iter().copied().filter(|&v| !image.is_nodata(v)),
            ))
        }
        RangeSource::Ndvi => {
            let ndvi = compute_index_raster(image, IndexKind::Ndvi)?;
            Ok(BandRangeStats::over(source, ndvi.iter().flatten()))
        }
    }
}

pub fn compute_index_raster(image: &MultibandImage, kind: IndexKind) -> Result<IndexRaster, IndexError> {
    require_bands(image, kind)?;
    let (w, h) = (image.width(), image.height());
    let aux = image_aux_stats(image, kind)?;
    if kind.aux_source().is_some() && aux.is_none() {
        return Ok(IndexRaster::from_options(w, h, kind, vec![None; w * h]));
    }
    let mut pixel = Vec::with_capacity(image.band_count());
    let mut values = Vec::with_capacity(w * h);
    for i in 0..w * h {
        image.pixel_into(i, &mut pixel);
        values.push(evaluate_index_pixel(kind, &pixel, aux.as_ref(), image.nodata())?);
    }
    Ok(IndexRaster::from_options(w, h, kind, values))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WaterRule {
    /// b2 / b5 compared with 1.
    Ratio25,
    /// Water index compared with `threshold`.
    Index { threshold: f64 },
}

impl WaterRule {
    pub fn index_default() -> Self {
        WaterRule::Index { threshold: 1.0 }
    }
}

/// Labels water (1) above the threshold, land (2) below it and 0 on the
/// threshold itself or where the ratio is undefined.
pub fn water_mask(image: &MultibandImage, rule: WaterRule) -> Result<LabelRaster, IndexError> {
    let (kind, threshold) = match rule {
        WaterRule::Ratio25 => (IndexKind::WaterRatio25, 1.0),
        WaterRule::Index { threshold } => (IndexKind::WaterIndex, threshold),
    };
    let raster = compute_index_raster(image, kind)?;
    let labels = raster
        .iter()
        .map(|v| match v {
            Some(v) if v > threshold => WATER_LABEL,
            Some(v) if v < threshold => LAND_LABEL,
            _ => 0,
        })
        .collect();
    Ok(LabelRaster::new(image.width(), image.height(), labels).expect("dimensions match image"))
}

/// Labels vegetated (1) where NDVI > 0, non-vegetated (2) where NDVI <= 0.
pub fn vegetation_mask(image: &MultibandImage) -> Result<LabelRaster, IndexError> {
    let raster = compute_index_raster(image, IndexKind::Ndvi)?;
    let labels = raster
        .iter()
        .map(|v| match v {
            Some(v) if v > 0.0 => VEGETATED_LABEL,
            Some(_) => NON_VEGETATED_LABEL,
            None => 0,
        })
        .collect();
    Ok(LabelRaster::new(image.width(), image.height(), labels).expect("dimensions match image"))
}
