//! Label masks and their on-disk formats.
//!
//! Two raster formats are supported:
//!
//! * MetaImage (`.mhd` header with a detached raw payload, or `.mha` with the
//!   payload appended after the header), restricted to 2D `MET_UCHAR` images.
//! * Binary portable graymap (`.pgm`, `P5`). The format carries no physical
//!   metadata; spacing is stored in a `# spacing <x> <y>` header comment when
//!   written by this crate and defaults to 1.0 mm/px otherwise.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Spacing assumed when a file carries no physical metadata.
pub const DEFAULT_SPACING_MM: f64 = 1.0;

/// Physical size of one pixel in millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spacing {
    pub x: f64,
    pub y: f64,
}

impl Spacing {
    pub fn new(x: f64, y: f64) -> Result<Self, MaskError> {
        if !(x.is_finite() && y.is_finite() && x > 0.0 && y > 0.0) {
            return Err(MaskError::InvalidSpacing { x, y });
        }
        Ok(Self { x, y })
    }

    pub fn isotropic(s: f64) -> Result<Self, MaskError> {
        Self::new(s, s)
    }

    pub fn pixel_area(&self) -> f64 {
        self.x * self.y
    }
}

impl Default for Spacing {
    fn default() -> Self {
        Self {
            x: DEFAULT_SPACING_MM,
            y: DEFAULT_SPACING_MM,
        }
    }
}

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("failed to read or write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("unsupported input {path}: {message}")]
    Unsupported { path: PathBuf, message: String },
    #[error("{path}: header declares {expected} pixels but payload holds {actual} bytes")]
    SizeMismatch {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },
    #[error("invalid mask dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("invalid pixel spacing ({x}, {y}); both components must be positive")]
    InvalidSpacing { x: f64, y: f64 },
    #[error("label buffer holds {actual} values, expected {expected}")]
    LabelCount { expected: usize, actual: usize },
}

/// Non-fatal conditions noticed while reading a mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReadWarning {
    /// The file had no spacing metadata; [`DEFAULT_SPACING_MM`] was used.
    SpacingDefaulted,
}

impl fmt::Display for ReadWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReadWarning::SpacingDefaulted => write!(
                f,
                "no pixel spacing in file, assuming {DEFAULT_SPACING_MM} mm/px"
            ),
        }
    }
}

/// A 2D raster of structure labels, row-major, with physical pixel spacing.
///
/// Label 0 is background. The default convention is 1 = LV endocardium,
/// 2 = myocardium, 3 = left atrium, but nothing here depends on it.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    width: usize,
    height: usize,
    spacing: Spacing,
    labels: Vec<u8>,
}

impl LabelMask {
    pub fn new(
        width: usize,
        height: usize,
        spacing: Spacing,
        labels: Vec<u8>,
    ) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::InvalidDimensions { width, height });
        }
        let spacing = Spacing::new(spacing.x, spacing.y)?;
        let expected = width
            .checked_mul(height)
            .ok_or(MaskError::InvalidDimensions { width, height })?;
        if labels.len() != expected {
            return Err(MaskError::LabelCount {
                expected,
                actual: labels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            spacing,
            labels,
        })
    }

    /// An all-background mask.
    pub fn empty(width: usize, height: usize, spacing: Spacing) -> Result<Self, MaskError> {
        Self::new(
            width,
            height,
            spacing,
            vec![0; width.saturating_mul(height)],
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.labels[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, label: u8) {
        self.labels[row * self.width + col] = label;
    }

    /// Number of pixels carrying `label`.
    pub fn count(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Same labels, different spacing.
    pub fn with_spacing(mut self, spacing: Spacing) -> Result<Self, MaskError> {
        self.spacing = Spacing::new(spacing.x, spacing.y)?;
        Ok(self)
    }

    /// True when both masks share a pixel grid (dimensions and spacing).
    pub fn same_grid(&self, other: &LabelMask) -> bool {
        self.width == other.width && self.height == other.height && self.spacing == other.spacing
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    MetaHeader,
    MetaLocal,
    Graymap,
}

fn format_of(path: &Path) -> Result<Format, MaskError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("mhd") => Ok(Format::MetaHeader),
        Some("mha") => Ok(Format::MetaLocal),
        Some("pgm") => Ok(Format::Graymap),
        _ => Err(MaskError::Unsupported {
            path: path.to_path_buf(),
            message: "expected a .mhd, .mha or .pgm file".into(),
        }),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MaskError + '_ {
    move |source| MaskError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a mask, logging nothing; see [`read_mask_with_warnings`] to observe
/// defaulted spacing.
pub fn read_mask(path: impl AsRef<Path>) -> Result<LabelMask, MaskError> {
    read_mask_with_warnings(path).map(|(mask, _)| mask)
}

/// Reads a mask and reports non-fatal conditions alongside it.
pub fn read_mask_with_warnings(
    path: impl AsRef<Path>,
) -> Result<(LabelMask, Vec<ReadWarning>), MaskError> {
    let path = path.as_ref();
    let format = format_of(path)?;
    let bytes = fs::read(path).map_err(io_err(path))?;
    match format {
        Format::MetaHeader | Format::MetaLocal => read_metaimage(path, &bytes),
        Format::Graymap => read_graymap(path, &bytes),
    }
}

/// Writes a mask in the format implied by the file extension. For `.mhd`
/// the raw payload goes next to the header with a `.raw` extension.
pub fn write_mask(mask: &LabelMask, path: impl AsRef<Path>) -> Result<(), MaskError> {
    let path = path.as_ref();
    match format_of(path)? {
        Format::MetaHeader => {
            let raw_path = path.with_extension("raw");
            let raw_name = raw_path
                .file_name()
                .and_then(|n| n.to_str())
                .ok_or_else(|| MaskError::Unsupported {
                    path: path.to_path_buf(),
                    message: "file name is not valid UTF-8".into(),
                })?
                .to_string();
            let header = metaimage_header(mask, &raw_name);
            fs::write(&raw_path, &mask.labels).map_err(io_err(&raw_path))?;
            fs::write(path, header).map_err(io_err(path))
        }
        Format::MetaLocal => {
            let mut out = metaimage_header(mask, "LOCAL").into_bytes();
            out.extend_from_slice(&mask.labels);
            fs::write(path, out).map_err(io_err(path))
        }
        Format::Graymap => fs::write(path, encode_graymap(mask)).map_err(io_err(path)),
    }
}

fn metaimage_header(mask: &LabelMask, data_file: &str) -> String {
    format!(
        "ObjectType = Image\n\
         NDims = 2\n\
         BinaryData = True\n\
         BinaryDataByteOrderMSB = False\n\
         CompressedData = False\n\
         DimSize = {} {}\n\
         ElementSpacing = {} {}\n\
         ElementType = MET_UCHAR\n\
         ElementDataFile = {}\n",
        mask.width, mask.height, mask.spacing.x, mask.spacing.y, data_file
    )
}

fn read_metaimage(path: &Path, bytes: &[u8]) -> Result<(LabelMask, Vec<ReadWarning>), MaskError> {
    let parse_err = |message: String| MaskError::Parse {
        path: path.to_path_buf(),
        message,
    };
    let unsupported = |message: String| MaskError::Unsupported {
        path: path.to_path_buf(),
        message,
    };

    let mut ndims: Option<usize> = None;
    let mut dims: Option<(usize, usize)> = None;
    let mut spacing: Option<(f64, f64)> = None;
    let mut element_type: Option<String> = None;
    let mut data_file: Option<String> = None;
    let mut payload_offset = bytes.len();

    let mut pos = 0;
    while pos < bytes.len() {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map_or(bytes.len(), |i| pos + i);
        let line = std::str::from_utf8(&bytes[pos..end])
            .map_err(|_| parse_err("header is not valid UTF-8".into()))?
            .trim();
        pos = (end + 1).min(bytes.len());
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(format!("expected `Key = Value`, found `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "NDims" => {
                ndims = Some(
                    value
                        .parse()
                        .map_err(|_| parse_err(format!("bad NDims `{value}`")))?,
                )
            }
            "DimSize" => {
                let v = parse_list::<usize>(value)
                    .ok_or_else(|| parse_err(format!("bad DimSize `{value}`")))?;
                dims = Some(match v.as_slice() {
                    [w, h] => (*w, *h),
                    _ => return Err(unsupported(format!("DimSize `{value}` is not 2D"))),
                });
            }
            "ElementSpacing" => {
                let v = parse_list::<f64>(value)
                    .ok_or_else(|| parse_err(format!("bad ElementSpacing `{value}`")))?;
                spacing = Some(match v.as_slice() {
                    [x, y] => (*x, *y),
                    _ => return Err(unsupported(format!("ElementSpacing `{value}` is not 2D"))),
                });
            }
            "ElementType" => element_type = Some(value.to_string()),
            "CompressedData" if value.eq_ignore_ascii_case("true") => {
                return Err(unsupported("compressed payloads are not supported".into()))
            }
            "BinaryData" if value.eq_ignore_ascii_case("false") => {
                return Err(unsupported("ASCII payloads are not supported".into()))
            }
            "ElementNumberOfChannels" if value != "1" => {
                return Err(unsupported("multi-channel images are not supported".into()))
            }
            "ElementDataFile" => {
                data_file = Some(value.to_string());
                payload_offset = pos;
                // ElementDataFile terminates the header.
                break;
            }
            _ => {}
        }
    }

    match ndims {
        Some(2) => {}
        Some(n) => {
            return Err(unsupported(format!(
                "NDims = {n}; only 2D images are supported"
            )))
        }
        None => return Err(parse_err("missing NDims".into())),
    }
    let (width, height) = dims.ok_or_else(|| parse_err("missing DimSize".into()))?;
    match element_type.as_deref() {
        Some("MET_UCHAR") => {}
        Some(other) => {
            return Err(unsupported(format!(
                "ElementType {other}; only MET_UCHAR is supported"
            )))
        }
        None => return Err(parse_err("missing ElementType".into())),
    }
    let data_file = data_file.ok_or_else(|| parse_err("missing ElementDataFile".into()))?;

    let payload: Vec<u8> = if data_file == "LOCAL" {
        bytes[payload_offset..].to_vec()
    } else if data_file.starts_with("LIST") || data_file.contains('%') {
        return Err(unsupported(format!(
            "multi-file payload `{data_file}` is not supported"
        )));
    } else {
        let raw_path = path
            .parent()
            .map_or_else(|| PathBuf::from(&data_file), |dir| dir.join(&data_file));
        fs::read(&raw_path).map_err(io_err(&raw_path))?
    };

    let expected = width * height;
    if payload.len() != expected {
        return Err(MaskError::SizeMismatch {
            path: path.to_path_buf(),
            expected,
            actual: payload.len(),
        });
    }

    let mut warnings = Vec::new();
    let spacing = match spacing {
        Some((x, y)) => Spacing::new(x, y)?,
        None => {
            warnings.push(ReadWarning::SpacingDefaulted);
            Spacing::default()
        }
    };
    let mask = LabelMask::new(width, height, spacing, payload)?;
    Ok((mask, warnings))
}

fn parse_list<T: std::str::FromStr>(value: &str) -> Option<Vec<T>> {
    value
        .split_whitespace()
        .map(|tok| tok.parse().ok())
        .collect()
}

fn encode_graymap(mask: &LabelMask) -> Vec<u8> {
    let mut out = format!(
        "P5\n# spacing {} {}\n{} {}\n255\n",
        mask.spacing.x, mask.spacing.y, mask.width, mask.height
    )
    .into_bytes();
    out.extend_from_slice(&mask.labels);
    out
}

fn read_graymap(path: &Path, bytes: &[u8]) -> Result<(LabelMask, Vec<ReadWarning>), MaskError> {
    let parse_err = |message: &str| MaskError::Parse {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    if !bytes.starts_with(b"P5") {
        return Err(parse_err("missing P5 magic number"));
    }

    let mut pos = 2;
    let mut fields = [0usize; 3];
    let mut spacing: Option<(f64, f64)> = None;
    for field in fields.iter_mut() {
        // Whitespace and comments may precede any header field.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    let end = bytes[pos..]
                        .iter()
                        .position(|&b| b == b'\n')
                        .map_or(bytes.len(), |i| pos + i);
                    let comment = String::from_utf8_lossy(&bytes[pos + 1..end]);
                    if let Some(rest) = comment.trim().strip_prefix("spacing") {
                        match parse_list::<f64>(rest).as_deref() {
                            Some([x, y]) => spacing = Some((*x, *y)),
                            _ => return Err(parse_err("malformed spacing comment")),
                        }
                    }
                    pos = end;
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(parse_err("expected an unsigned integer header field"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err("header field out of range"))?;
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(parse_err("missing separator after maxval")),
    }

    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(MaskError::Unsupported {
            path: path.to_path_buf(),
            message: format!("maxval {maxval}; only 8-bit graymaps are supported"),
        });
    }
    let payload = &bytes[pos..];
    let expected = width * height;
    if payload.len() != expected {
        return Err(MaskError::SizeMismatch {
            path: path.to_path_buf(),
            expected,
            actual: payload.len(),
        });
    }
    if payload.iter().any(|&v| v as usize > maxval) {
        return Err(parse_err("pixel value exceeds maxval"));
    }

    let mut warnings = Vec::new();
    let spacing = match spacing {
        Some((x, y)) => Spacing::new(x, y)?,
        None => {
            warnings.push(ReadWarning::SpacingDefaulted);
            Spacing::default()
        }
    };
    let mask = LabelMask::new(width, height, spacing, payload.to_vec())?;
    Ok((mask, warnings))
}
