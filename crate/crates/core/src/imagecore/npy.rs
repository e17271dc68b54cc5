//! Float and label array container using the NPY v1.0 layout.
//!
//! Float arrays are always little-endian `float32` with shape
//! `(channels, height, width)`; a 2-D `(height, width)` file reads as one
//! channel. Label arrays use little-endian `uint32`.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

use super::grid::Grid;
use super::io::write_atomic;

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

/// A `(channels, height, width)` float32 array.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatArray {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl FloatArray {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} values for shape ({channels}, {height}, {width})",
                data.len()
            )));
        }
        Ok(FloatArray { channels, height, width, data })
    }

    /// Stacks rasters as channels, narrowing to `f32`.
    pub fn from_planes(planes: &[Grid<f64>]) -> Result<Self> {
        let first = planes.first().ok_or(Error::Empty("array without channels"))?;
        let mut data = Vec::with_capacity(planes.len() * first.len());
        for plane in planes {
            if !plane.same_shape(first) {
                return Err(Error::ShapeMismatch("array channels differ in shape".into()));
            }
            data.extend(plane.data().iter().map(|&v| v as f32));
        }
        FloatArray::new(planes.len(), first.height(), first.width(), data)
    }

    /// `(channels, height, width)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Splits into per-channel rasters widened to `f64`.
    pub fn to_planes(&self) -> Vec<Grid<f64>> {
        let n = self.height * self.width;
        (0..self.channels)
            .map(|c| {
                let data = self.data[c * n..(c + 1) * n].iter().map(|&v| v as f64).collect();
                Grid::new(self.width, self.height, data).expect("consistent shape")
            })
            .collect()
    }
}

pub fn write_array(path: impl AsRef<Path>, array: &FloatArray) -> Result<()> {
    if let Some(v) = array.data.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidRaster(format!("non-finite value {v}")));
    }
    let shape = [array.channels, array.height, array.width];
    let mut payload = Vec::with_capacity(array.data.len() * 4);
    for v in &array.data {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    write_npy(path.as_ref(), "<f4", &shape, &payload)
}

pub fn read_array(path: impl AsRef<Path>) -> Result<FloatArray> {
    let raw = read_npy(path.as_ref())?;
    if raw.descr != "<f4" {
        return Err(Error::DtypeMismatch { expected: "float32", found: raw.descr });
    }
    let (channels, height, width) = match raw.shape[..] {
        [h, w] => (1, h, w),
        [c, h, w] => (c, h, w),
        _ => {
            return Err(Error::MalformedHeader(format!(
                "expected 2-D or 3-D shape, found {:?}",
                raw.shape
            )))
        }
    };
    let data = raw
        .payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    FloatArray::new(channels, height, width, data)
}

pub(crate) fn write_labels_npy(path: &Path, labels: &Grid<u32>) -> Result<()> {
    let mut payload = Vec::with_capacity(labels.len() * 4);
    for v in labels.data() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    write_npy(path, "<u4", &[labels.height(), labels.width()], &payload)
}

pub(crate) fn read_labels_npy(path: &Path) -> Result<Grid<u32>> {
    let raw = read_npy(path)?;
    if raw.descr != "<u4" {
        return Err(Error::DtypeMismatch { expected: "uint32", found: raw.descr });
    }
    let (height, width) = match raw.shape[..] {
        [h, w] | [1, h, w] => (h, w),
        _ => {
            return Err(Error::MalformedHeader(format!(
                "expected 2-D label shape, found {:?}",
                raw.shape
            )))
        }
    };
    let data = raw
        .payload
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Grid::new(width, height, data)
}

fn write_npy(path: &Path, descr: &str, shape: &[usize], payload: &[u8]) -> Result<()> {
    let dims = match shape.len() {
        1 => format!("({},)", shape[0]),
        _ => format!(
            "({})",
            shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
        ),
    };
    let mut header = format!("{{'descr': '{descr}', 'fortran_order': False, 'shape': {dims}, }}");
    // magic(6) + version(2) + header length(2) + header + '\n'
    let unpadded = 10 + header.len() + 1;
    let padded = unpadded.div_ceil(ALIGN) * ALIGN;
    header.extend(std::iter::repeat_n(' ', padded - unpadded));
    header.push('\n');
    let header_len = u16::try_from(header.len())
        .map_err(|_| Error::MalformedHeader("header longer than 65535 bytes".into()))?;

    let mut bytes = Vec::with_capacity(padded + payload.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&[1, 0]);
    bytes.extend_from_slice(&header_len.to_le_bytes());
    bytes.extend_from_slice(header.as_bytes());
    bytes.extend_from_slice(payload);
    write_atomic(path, |f| f.write_all(&bytes))
}

struct RawNpy {
    descr: String,
    shape: Vec<usize>,
    payload: Vec<u8>,
}

fn read_npy(path: &Path) -> Result<RawNpy> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_npy(bytes)
}

fn parse_npy(mut bytes: Vec<u8>) -> Result<RawNpy> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(Error::MalformedHeader("missing NPY magic".into()));
    }
    let (header_len, start) = match bytes[6] {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err(Error::MalformedHeader("short header length field".into()));
            }
            (u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize, 12)
        }
        v => return Err(Error::MalformedHeader(format!("unsupported version {v}"))),
    };
    let end = start + header_len;
    if bytes.len() < end {
        return Err(Error::MalformedHeader("header runs past end of file".into()));
    }
    let header = std::str::from_utf8(&bytes[start..end])
        .map_err(|_| Error::MalformedHeader("header is not text".into()))?;
    let descr = dict_value(header, "descr")?
        .trim_matches(|c| c == '\'' || c == '"')
        .to_string();
    let fortran = dict_value(header, "fortran_order")?;
    match fortran {
        "False" => {}
        "True" => return Err(Error::MalformedHeader("fortran order is not supported".into())),
        other => return Err(Error::MalformedHeader(format!("bad fortran_order {other}"))),
    }
    let shape = parse_shape(dict_value(header, "shape")?)?;

    let item = match descr.as_str() {
        "<f4" | "<u4" | "<i4" => 4,
        "<f8" | "<u8" | "<i8" => 8,
        "|u1" | "|i1" | "|b1" => 1,
        "<u2" | "<i2" | "<f2" => 2,
        // unknown dtypes are reported by the typed readers
        _ => 1,
    };
    let expected = shape.iter().product::<usize>() * item;
    let found = bytes.len() - end;
    if found < expected {
        return Err(Error::Truncated { expected, found });
    }
    let payload = bytes.split_off(end);
    Ok(RawNpy { descr, shape, payload: payload[..expected].to_vec() })
}

fn dict_value<'a>(header: &'a str, key: &str) -> Result<&'a str> {
    let missing = || Error::MalformedHeader(format!("missing key '{key}'"));
    let pos = header
        .find(&format!("'{key}'"))
        .or_else(|| header.find(&format!("\"{key}\"")))
        .ok_or_else(missing)?;
    let rest = &header[pos + key.len() + 2..];
    let rest = rest.trim_start().strip_prefix(':').ok_or_else(missing)?.trim_start();
    let end = if rest.starts_with('(') {
        rest.find(')').map(|i| i + 1)
    } else {
        rest.find([',', '}'])
    }
    .ok_or_else(|| Error::MalformedHeader(format!("unterminated value for '{key}'")))?;
    Ok(rest[..end].trim())
}

fn parse_shape(text: &str) -> Result<Vec<usize>> {
    let inner = text
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(|| Error::MalformedHeader(format!("bad shape {text}")))?;
    inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| Error::MalformedHeader(format!("bad shape dimension {s}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header_bytes(header: &str) -> Vec<u8> {
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&[1, 0]);
        bytes.extend_from_slice(&(header.len() as u16).to_le_bytes());
        bytes.extend_from_slice(header.as_bytes());
        bytes
    }

    #[test]
    fn written_header_is_aligned_and_parseable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.npy");
        let array = FloatArray::new(3, 4, 5, (0..60).map(|i| i as f32 * 0.25).collect()).unwrap();
        write_array(&path, &array).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        assert_eq!((10 + header_len) % ALIGN, 0);
        assert_eq!(bytes[10 + header_len - 1], b'\n');
        let text = std::str::from_utf8(&bytes[10..10 + header_len]).unwrap();
        assert!(text.starts_with("{'descr': '<f4', 'fortran_order': False, 'shape': (3, 4, 5), }"));
    }

    #[test]
    fn float64_rejected() {
        let mut bytes = header_bytes("{'descr': '<f8', 'fortran_order': False, 'shape': (1, 1, 1), }\n");
        bytes.extend_from_slice(&1.0f64.to_le_bytes());
        let raw = parse_npy(bytes).unwrap();
        assert_eq!(raw.descr, "<f8");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f8.npy");
        let mut bytes = header_bytes("{'descr': '<f8', 'fortran_order': False, 'shape': (1, 1, 1), }\n");
        bytes.extend_from_slice(&1.0f64.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        let err = read_array(&path).unwrap_err();
        assert!(err.to_string().contains("expected float32"), "{err}");
    }

    #[test]
    fn short_payload_is_truncated() {
        let mut bytes =
            header_bytes("{'descr': '<f4', 'fortran_order': False, 'shape': (3, 1024, 1024), }\n");
        bytes.extend_from_slice(&[0u8; 400]);
        let err = parse_npy(bytes).err().unwrap();
        assert!(err.to_string().contains("truncated"), "{err}");
    }

    #[test]
    fn malformed_headers() {
        assert!(matches!(parse_npy(b"NOTNPY0000".to_vec()), Err(Error::MalformedHeader(_))));
        let bytes = header_bytes("{'descr': '<f4', 'shape': (2,), }\n");
        assert!(matches!(parse_npy(bytes), Err(Error::MalformedHeader(_))));
        let bytes = header_bytes("{'descr': '<f4', 'fortran_order': False, 'shape': (a, 2), }\n");
        assert!(matches!(parse_npy(bytes), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn two_dimensional_reads_as_one_channel() {
        let mut bytes = header_bytes("{'descr': '<f4', 'fortran_order': False, 'shape': (2, 3), }\n");
        for i in 0..6 {
            bytes.extend_from_slice(&(i as f32).to_le_bytes());
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("2d.npy");
        std::fs::write(&path, bytes).unwrap();
        let array = read_array(&path).unwrap();
        assert_eq!(array.shape(), (1, 2, 3));
        assert_eq!(array.data()[5], 5.0);
    }
}
