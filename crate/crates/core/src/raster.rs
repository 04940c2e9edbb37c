//! Raster data model and the band-sequential on-disk format.
//!
//! A raster is stored as two files: a plain-text header (`key=value` per line)
//! and a raw data file next to it with the `.bin` extension. Pixel data is
//! band-sequential, row-major within each band, little-endian. Images are
//! stored as 32-bit floats and widened to `f64` on read; label rasters are
//! stored as `u16`.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed header {path} line {line}: {reason}")]
    MalformedHeader {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("header {path} is missing key `{key}`")]
    MissingKey { path: PathBuf, key: &'static str },
    #[error("data file {path} has {actual} bytes, header implies {expected}")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },
    #[error("header {0} must not use the .bin extension (reserved for the data file)")]
    HeaderIsDataPath(PathBuf),
    #[error("invalid raster: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, RasterError>;

/// One row of a sensor band table.
#[derive(Debug, Clone, PartialEq)]
pub struct BandInfo {
    /// 1-based band number.
    pub index: u8,
    /// Lower wavelength bound in micrometers.
    pub wavelength_low: f64,
    /// Upper wavelength bound in micrometers.
    pub wavelength_high: f64,
    pub spectral_name: String,
    /// Ground resolution in meters.
    pub resolution: f64,
}

/// The seven bands of the Landsat 5 Thematic Mapper.
pub fn landsat5_band_table() -> Vec<BandInfo> {
    const ROWS: [(u8, f64, f64, &str, f64); 7] = [
        (1, 0.45, 0.52, "Blue-Green", 30.0),
        (2, 0.52, 0.60, "Green", 30.0),
        (3, 0.63, 0.69, "Red", 30.0),
        (4, 0.76, 0.90, "Near IR", 30.0),
        (5, 1.55, 1.75, "Mid-IR", 30.0),
        (6, 10.40, 12.50, "Thermal IR", 120.0),
        (7, 2.08, 2.35, "Mid-IR", 30.0),
    ];
    ROWS.iter()
        .map(|&(index, lo, hi, name, res)| BandInfo {
            index,
            wavelength_low: lo,
            wavelength_high: hi,
            spectral_name: name.to_string(),
            resolution: res,
        })
        .collect()
}

/// A stack of co-registered bands of equal size.
///
/// Bands are addressed by their 1-based number everywhere in the public API,
/// matching sensor band numbering.
#[derive(Debug, Clone, PartialEq)]
pub struct MultibandImage {
    width: usize,
    height: usize,
    bands: Vec<Vec<f64>>,
    band_info: Option<Vec<BandInfo>>,
    nodata: Option<f64>,
}

impl MultibandImage {
    pub fn new(width: usize, height: usize, bands: Vec<Vec<f64>>) -> Result<Self> {
        if bands.is_empty() {
            return Err(RasterError::Invalid("image needs at least one band".into()));
        }
        if width == 0 || height == 0 {
            return Err(RasterError::Invalid(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        for (i, band) in bands.iter().enumerate() {
            if band.len() != width * height {
                return Err(RasterError::Invalid(format!(
                    "band {} has {} values, expected {}",
                    i + 1,
                    band.len(),
                    width * height
                )));
            }
        }
        Ok(Self {
            width,
            height,
            bands,
            band_info: None,
            nodata: None,
        })
    }

    /// Builds an image from one value per band, repeated over every pixel.
    pub fn constant(width: usize, height: usize, pixel: &[f64]) -> Result<Self> {
        let bands = pixel.iter().map(|&v| vec![v; width * height]).collect();
        Self::new(width, height, bands)
    }

    pub fn with_nodata(mut self, nodata: Option<f64>) -> Self {
        self.nodata = nodata;
        self
    }

    pub fn with_band_info(mut self, info: Vec<BandInfo>) -> Result<Self> {
        if info.len() != self.bands.len() {
            return Err(RasterError::Invalid(format!(
                "band_info has {} rows for {} bands",
                info.len(),
                self.bands.len()
            )));
        }
        self.band_info = Some(info);
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn band_count(&self) -> usize {
        self.bands.len()
    }

    pub fn nodata(&self) -> Option<f64> {
        self.nodata
    }

    pub fn band_info(&self) -> Option<&[BandInfo]> {
        self.band_info.as_deref()
    }

    /// Band plane by 1-based band number.
    pub fn band(&self, number: usize) -> Option<&[f64]> {
        number
            .checked_sub(1)
            .and_then(|i| self.bands.get(i))
            .map(Vec::as_slice)
    }

    pub fn bands(&self) -> &[Vec<f64>] {
        &self.bands
    }

    pub fn value(&self, number: usize, x: usize, y: usize) -> Option<f64> {
        self.band(number).map(|b| b[y * self.width + x])
    }

    /// True if `v` is the nodata sentinel (or NaN).
    pub fn is_nodata(&self, v: f64) -> bool {
        v.is_nan() || self.nodata == Some(v)
    }

    /// Fills `out` with the pixel's values for every band.
    pub fn pixel_into(&self, index: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bands.iter().map(|b| b[index]));
    }

    /// Returns a copy with every value multiplied by `factor`. Nodata pixels
    /// are left untouched.
    pub fn scaled(&self, factor: f64) -> Self {
        let bands = self
            .bands
            .iter()
            .map(|b| {
                b.iter()
                    .map(|&v| if self.is_nodata(v) { v } else { v * factor })
                    .collect()
            })
            .collect();
        Self {
            bands,
            ..self.clone()
        }
    }
}

/// Single-band integer raster. Label 0 means unclassified.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRaster {
    width: usize,
    height: usize,
    labels: Vec<u16>,
}

impl LabelRaster {
    pub fn new(width: usize, height: usize, labels: Vec<u16>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(RasterError::Invalid(format!(
                "label raster has {} values, expected {}x{}",
                labels.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn filled(width: usize, height: usize, label: u16) -> Self {
        Self {
            width,
            height,
            labels: vec![label; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.labels[y * self.width + x]
    }

    pub fn same_shape(&self, other: &LabelRaster) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn into_labels(self) -> Vec<u16> {
        self.labels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DType {
    F32,
    U16,
}

impl DType {
    fn bytes(self) -> u64 {
        match self {
            DType::F32 => 4,
            DType::U16 => 2,
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DType::F32 => "f32",
            DType::U16 => "u16",
        })
    }
}

/// Parsed header contents.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterHeader {
    pub samples: usize,
    pub lines: usize,
    pub bands: usize,
    pub nodata: Option<f64>,
    /// Text of `# ...` lines, without the leading marker.
    pub comments: Vec<String>,
    dtype: DType,
}

impl RasterHeader {
    /// Value of a `# key=value` comment line.
    pub fn comment_value(&self, key: &str) -> Option<&str> {
        self.comments.iter().find_map(|c| {
            let (k, v) = c.split_once('=')?;
            (k.trim() == key).then(|| v.trim())
        })
    }

    fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.comments {
            s.push_str("# ");
            s.push_str(c);
            s.push('\n');
        }
        s.push_str(&format!("samples={}\n", self.samples));
        s.push_str(&format!("lines={}\n", self.lines));
        s.push_str(&format!("bands={}\n", self.bands));
        s.push_str(&format!("dtype={}\n", self.dtype));
        s.push_str("interleave=bsq\n");
        s.push_str("byteorder=little\n");
        if let Some(nd) = self.nodata {
            s.push_str(&format!("nodata={nd}\n"));
        }
        s
    }
}

/// Path of the data file that accompanies `header_path`.
pub fn data_path(header_path: &Path) -> PathBuf {
    header_path.with_extension("bin")
}

fn check_header_path(header_path: &Path) -> Result<PathBuf> {
    let data = data_path(header_path);
    if data == header_path {
        return Err(RasterError::HeaderIsDataPath(header_path.to_path_buf()));
    }
    Ok(data)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => RasterError::MissingFile(path.to_path_buf()),
        _ => RasterError::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |e| RasterError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(bytes).map_err(io_err)?;
    Ok(())
}

/// Parses header text. `path` is used only for error messages.
pub fn parse_header(text: &str, path: &Path) -> Result<RasterHeader> {
    let malformed = |line: usize, reason: String| RasterError::MalformedHeader {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut samples = None;
    let mut lines = None;
    let mut bands = None;
    let mut dtype = None;
    let mut nodata = None;
    let mut comments = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            comments.push(c.trim().to_string());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| malformed(lineno, format!("expected key=value, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let parse_dim = |v: &str| {
            v.parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| malformed(lineno, format!("`{key}` must be a positive integer, got `{v}`")))
        };
        match key {
            "samples" => samples = Some(parse_dim(value)?),
            "lines" => lines = Some(parse_dim(value)?),
            "bands" => bands = Some(parse_dim(value)?),
            "dtype" => {
                dtype = Some(match value {
                    "f32" => DType::F32,
                    "u16" => DType::U16,
                    other => return Err(malformed(lineno, format!("unsupported dtype `{other}`"))),
                })
            }
            "interleave" if value == "bsq" => {}
            "interleave" => return Err(malformed(lineno, format!("unsupported interleave `{value}`"))),
            "byteorder" if value == "little" => {}
            "byteorder" => return Err(malformed(lineno, format!("unsupported byteorder `{value}`"))),
            "nodata" => {
                let v = value
                    .parse::<f32>()
                    .map_err(|_| malformed(lineno, format!("nodata is not a number: `{value}`")))?;
                nodata = Some(f64::from(v));
            }
            other => return Err(malformed(lineno, format!("unknown key `{other}`"))),
        }
    }

    let missing = |key| RasterError::MissingKey {
        path: path.to_path_buf(),
        key,
    };
    Ok(RasterHeader {
        samples: samples.ok_or_else(|| missing("samples"))?,
        lines: lines.ok_or_else(|| missing("lines"))?,
        bands: bands.ok_or_else(|| missing("bands"))?,
        dtype: dtype.ok_or_else(|| missing("dtype"))?,
        nodata,
        comments,
    })
}

/// Reads a header and validates the size of its data file.
fn read_header_and_data(header_path: &Path, want: DType) -> Result<(RasterHeader, Vec<u8>)> {
    let data_path = check_header_path(header_path)?;
    let text = read_file(header_path)?;
    let text = String::from_utf8(text).map_err(|_| RasterError::MalformedHeader {
        path: header_path.to_path_buf(),
        line: 0,
        reason: "header is not valid UTF-8".into(),
    })?;
    let header = parse_header(&text, header_path)?;
    if header.dtype != want {
        return Err(RasterError::MalformedHeader {
            path: header_path.to_path_buf(),
            line: 0,
            reason: format!("expected dtype={want}, header says dtype={}", header.dtype),
        });
    }
    let data = read_file(&data_path)?;
    let expected = (header.samples as u64) * (header.lines as u64) * (header.bands as u64) * want.bytes();
    if data.len() as u64 != expected {
        return Err(RasterError::SizeMismatch {
            path: data_path,
            expected,
            actual: data.len() as u64,
        });
    }
    Ok((header, data))
}

/// Reads a float image and its header.
pub fn read_raster_with_header(header_path: &Path) -> Result<(MultibandImage, RasterHeader)> {
    let (header, data) = read_header_and_data(header_path, DType::F32)?;
    let plane = header.samples * header.lines;
    let values: Vec<f64> = data
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    let bands = values.chunks_exact(plane).map(<[f64]>::to_vec).collect();
    let image = MultibandImage::new(header.samples, header.lines, bands)?.with_nodata(header.nodata);
    Ok((image, header))
}

pub fn read_raster(header_path: &Path) -> Result<MultibandImage> {
    read_raster_with_header(header_path).map(|(img, _)| img)
}

/// Writes `image` with extra `# ...` comment lines at the top of the header.
pub fn write_raster_with_comments(
    image: &MultibandImage,
    header_path: &Path,
    comments: &[String],
) -> Result<()> {
    let data_path = check_header_path(header_path)?;
    let header = RasterHeader {
        samples: image.width(),
        lines: image.height(),
        bands: image.band_count(),
        nodata: image.nodata().map(|v| f64::from(v as f32)),
        comments: comments.to_vec(),
        dtype: DType::F32,
    };
    let mut bytes = Vec::with_capacity(image.pixel_count() * image.band_count() * 4);
    for band in image.bands() {
        for &v in band {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    write_file(header_path, header.render().as_bytes())?;
    write_file(&data_path, &bytes)
}

pub fn write_raster(image: &MultibandImage, header_path: &Path) -> Result<()> {
    write_raster_with_comments(image, header_path, &[])
}

pub fn read_labels(header_path: &Path) -> Result<LabelRaster> {
    let (header, data) = read_header_and_data(header_path, DType::U16)?;
    if header.bands != 1 {
        return Err(RasterError::Invalid(format!(
            "label raster {} has {} bands, expected 1",
            header_path.display(),
            header.bands
        )));
    }
    let labels = data
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    LabelRaster::new(header.samples, header.lines, labels)
}

pub fn write_labels(labels: &LabelRaster, header_path: &Path) -> Result<()> {
    let data_path = check_header_path(header_path)?;
    let header = RasterHeader {
        samples: labels.width(),
        lines: labels.height(),
        bands: 1,
        nodata: None,
        comments: Vec::new(),
        dtype: DType::U16,
    };
    let bytes: Vec<u8> = labels.labels().iter().flat_map(|l| l.to_le_bytes()).collect();
    write_file(header_path, header.render().as_bytes())?;
    write_file(&data_path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn write_pair(dir: &Path, header: &str, data: &[u8]) -> PathBuf {
        let hdr = dir.join("img.hdr");
        fs::write(&hdr, header).unwrap();
        fs::write(data_path(&hdr), data).unwrap();
        hdr
    }

    fn f32_bytes(vals: &[f32]) -> Vec<u8> {
        vals.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    const HDR_2X2X1: &str = "samples=2\nlines=2\nbands=1\ndtype=f32\ninterleave=bsq\nbyteorder=little\n";

    #[test]
    fn decodes_little_endian_bsq() {
        let dir = tempdir().unwrap();
        let hdr = write_pair(dir.path(), HDR_2X2X1, &f32_bytes(&[1.0, 2.0, 3.0, 4.0]));
        let img = read_raster(&hdr).unwrap();
        assert_eq!((img.width(), img.height(), img.band_count()), (2, 2, 1));
        assert_eq!(img.band(1).unwrap(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(img.value(1, 1, 0), Some(2.0));
        assert_eq!(img.value(1, 0, 1), Some(3.0));
    }

    #[test]
    fn size_mismatch_is_reported() {
        let dir = tempdir().unwrap();
        let header = "samples=2\nlines=2\nbands=3\ndtype=f32\ninterleave=bsq\nbyteorder=little\n";
        let hdr = write_pair(dir.path(), header, &f32_bytes(&[0.0; 8]));
        match read_raster(&hdr) {
            Err(RasterError::SizeMismatch { expected, actual, .. }) => {
                assert_eq!((expected, actual), (48, 32))
            }
            other => panic!("expected size mismatch, got {other:?}"),
        }
    }

    #[test]
    fn missing_and_malformed_are_distinct() {
        let dir = tempdir().unwrap();
        let missing = read_raster(&dir.path().join("nope.hdr"));
        assert!(matches!(missing, Err(RasterError::MissingFile(_))));

        let hdr = write_pair(dir.path(), "samples=2\nlines=two\n", &[]);
        assert!(matches!(
            read_raster(&hdr),
            Err(RasterError::MalformedHeader { line: 2, .. })
        ));

        let hdr = write_pair(dir.path(), "samples=2\nlines=2\nbands=1\n", &[]);
        assert!(matches!(
            read_raster(&hdr),
            Err(RasterError::MissingKey { key: "dtype", .. })
        ));

        let hdr = write_pair(
            dir.path(),
            "samples=1\nlines=1\nbands=1\ndtype=f32\nfoo=bar\n",
            &[],
        );
        assert!(matches!(
            read_raster(&hdr),
            Err(RasterError::MalformedHeader { .. })
        ));

        // header present, data file absent
        let hdr = dir.path().join("lonely.hdr");
        fs::write(&hdr, HDR_2X2X1).unwrap();
        assert!(matches!(read_raster(&hdr), Err(RasterError::MissingFile(p)) if p.ends_with("lonely.bin")));
    }

    #[test]
    fn round_trip_reproduces_data_bytes() {
        let dir = tempdir().unwrap();
        let original = f32_bytes(&[1.5, -2.25, 3.0e7, 4.0, 0.1, f32::MIN_POSITIVE]);
        let header = "samples=3\nlines=1\nbands=2\ndtype=f32\ninterleave=bsq\nbyteorder=little\n";
        let hdr = write_pair(dir.path(), header, &original);
        let img = read_raster(&hdr).unwrap();
        let out = dir.path().join("copy.hdr");
        write_raster(&img, &out).unwrap();
        assert_eq!(fs::read(data_path(&out)).unwrap(), original);
        assert_eq!(fs::read_to_string(&out).unwrap(), header);
        assert_eq!(read_raster(&out).unwrap(), img);
    }

    #[test]
    fn seven_band_pixel_is_28_bytes() {
        let dir = tempdir().unwrap();
        let img = MultibandImage::constant(1, 1, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]).unwrap();
        let hdr = dir.path().join("px.hdr");
        write_raster(&img, &hdr).unwrap();
        assert_eq!(fs::metadata(data_path(&hdr)).unwrap().len(), 28);
    }

    #[test]
    fn nodata_is_written_to_header() {
        let dir = tempdir().unwrap();
        let img = MultibandImage::constant(2, 1, &[1.0])
            .unwrap()
            .with_nodata(Some(-9999.0));
        let hdr = dir.path().join("nd.hdr");
        write_raster(&img, &hdr).unwrap();
        let text = fs::read_to_string(&hdr).unwrap();
        assert!(text.lines().any(|l| l == "nodata=-9999"), "{text}");
        assert_eq!(read_raster(&hdr).unwrap().nodata(), Some(-9999.0));
    }

    #[test]
    fn comments_survive_round_trip() {
        let dir = tempdir().unwrap();
        let img = MultibandImage::constant(1, 1, &[0.5]).unwrap();
        let hdr = dir.path().join("c.hdr");
        write_raster_with_comments(&img, &hdr, &["kind=ndvi".to_string()]).unwrap();
        let (_, header) = read_raster_with_header(&hdr).unwrap();
        assert_eq!(header.comment_value("kind"), Some("ndvi"));
    }

    #[test]
    fn labels_round_trip_and_dtype_checked() {
        let dir = tempdir().unwrap();
        let labels = LabelRaster::new(3, 2, vec![0, 1, 2, 65535, 7, 1]).unwrap();
        let hdr = dir.path().join("lab.hdr");
        write_labels(&labels, &hdr).unwrap();
        assert!(fs::read_to_string(&hdr).unwrap().contains("dtype=u16\n"));
        assert_eq!(read_labels(&hdr).unwrap(), labels);
        assert!(matches!(
            read_raster(&hdr),
            Err(RasterError::MalformedHeader { .. })
        ));
    }

    #[test]
    fn header_path_cannot_be_the_data_path() {
        let img = MultibandImage::constant(1, 1, &[0.0]).unwrap();
        assert!(matches!(
            write_raster(&img, Path::new("x.bin")),
            Err(RasterError::HeaderIsDataPath(_))
        ));
    }

    #[test]
    fn image_invariants() {
        assert!(MultibandImage::new(2, 2, vec![]).is_err());
        assert!(MultibandImage::new(2, 2, vec![vec![0.0; 3]]).is_err());
        let img = MultibandImage::constant(2, 2, &[1.0, 2.0]).unwrap();
        assert!(img.clone().with_band_info(landsat5_band_table()).is_err());
        assert!(img.band(0).is_none());
        assert!(img.band(3).is_none());
    }

    #[test]
    fn landsat_table_rows() {
        let table = landsat5_band_table();
        assert_eq!(table.len(), 7);
        let b4 = &table[3];
        assert_eq!((b4.index, b4.wavelength_low, b4.wavelength_high), (4, 0.76, 0.90));
        assert_eq!((b4.spectral_name.as_str(), b4.resolution), ("Near IR", 30.0));
        let b6 = &table[5];
        assert_eq!((b6.wavelength_low, b6.wavelength_high), (10.40, 12.50));
        assert_eq!((b6.spectral_name.as_str(), b6.resolution), ("Thermal IR", 120.0));
        for (i, row) in table.iter().enumerate() {
            assert_eq!(row.index as usize, i + 1);
            assert!(row.wavelength_low < row.wavelength_high);
            assert!(row.resolution > 0.0);
        }
    }
}
