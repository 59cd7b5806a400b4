//! NPY version 1.0 reader and writer for little-endian `f4`/`f8` arrays in
//! C order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const MAGIC: &[u8; 6] = b"\x93NUMPY";
const PREAMBLE: usize = 10;
const ALIGN: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NpyHeader {
    pub descr: String,
    pub fortran_order: bool,
    pub shape: Vec<usize>,
}

impl NpyHeader {
    pub fn new(descr: &str, shape: &[usize]) -> Self {
        Self {
            descr: descr.to_string(),
            fortran_order: false,
            shape: shape.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn shape_text(&self) -> String {
        match self.shape.as_slice() {
            [] => "()".to_string(),
            [n] => format!("({n},)"),
            s => format!("({})", s.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")),
        }
    }

    /// Magic, version, header length and the space-padded header text.
    pub fn encode(&self) -> Vec<u8> {
        let dict = format!(
            "{{'descr': '{}', 'fortran_order': {}, 'shape': {}, }}",
            self.descr,
            if self.fortran_order { "True" } else { "False" },
            self.shape_text()
        );
        let unpadded = PREAMBLE + dict.len() + 1;
        let total = unpadded.div_ceil(ALIGN) * ALIGN;
        let header_len = total - PREAMBLE;
        let mut out = Vec::with_capacity(total);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&[1, 0]);
        out.extend_from_slice(&(header_len as u16).to_le_bytes());
        out.extend_from_slice(dict.as_bytes());
        out.resize(total - 1, b' ');
        out.push(b'\n');
        out
    }

    /// Parses the preamble and header, returning it with the payload offset.
    pub fn decode(bytes: &[u8]) -> Result<(Self, usize)> {
        if bytes.len() < PREAMBLE || &bytes[..6] != MAGIC {
            return format_err("missing NUMPY magic");
        }
        let (header_len, start) = match bytes[6] {
            1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, PREAMBLE),
            2 | 3 if bytes.len() >= 12 => (
                u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
                12,
            ),
            v => return format_err(format!("unsupported format version {v}.{}", bytes[7])),
        };
        let end = start + header_len;
        if bytes.len() < end {
            return format_err("truncated header");
        }
        let text = std::str::from_utf8(&bytes[start..end]).map_err(|_| Error::Format("header is not text".into()))?;
        let descr = dict_value(text, "descr")?;
        let descr = descr.trim_matches(|c| c == '\'' || c == '"').to_string();
        let fortran_order = match dict_value(text, "fortran_order")? {
            "False" => false,
            "True" => true,
            v => return format_err(format!("bad fortran_order {v}")),
        };
        let shape_text = dict_value(text, "shape")?;
        let inner = shape_text
            .strip_prefix('(')
            .and_then(|s| s.strip_suffix(')'))
            .ok_or_else(|| Error::Format(format!("bad shape {shape_text}")))?;
        let shape = inner
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<usize>().map_err(|_| Error::Format(format!("bad shape entry {s}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok((Self { descr, fortran_order, shape }, end))
    }
}

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

/// Raw text of `key`'s value in a Python dict literal whose values are
/// strings, booleans or tuples.
fn dict_value<'a>(text: &'a str, key: &str) -> Result<&'a str> {
    let pat = format!("'{key}':");
    let at = text.find(&pat).ok_or_else(|| Error::Format(format!("header has no '{key}'")))?;
    let rest = text[at + pat.len()..].trim_start();
    let len = if rest.starts_with('(') {
        rest.find(')').map(|i| i + 1)
    } else if let Some(q) = rest.chars().next().filter(|c| *c == '\'' || *c == '"') {
        rest[1..].find(q).map(|i| i + 2)
    } else {
        rest.find([',', '}'])
    };
    let len = len.ok_or_else(|| Error::Format(format!("unterminated value for '{key}'")))?;
    Ok(rest[..len].trim())
}

/// An array read from disk in whichever precision it was stored.
#[derive(Clone, Debug, PartialEq)]
pub enum NpyArray {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl NpyArray {
    pub fn shape(&self) -> &[usize] {
        match self {
            NpyArray::F32(t) => t.shape(),
            NpyArray::F64(t) => t.shape(),
        }
    }

    pub fn descr(&self) -> &'static str {
        match self {
            NpyArray::F32(_) => f32::NPY_DESCR,
            NpyArray::F64(_) => f64::NPY_DESCR,
        }
    }

    pub fn into_f64(self) -> Tensor<f64> {
        match self {
            NpyArray::F32(t) => t.cast(),
            NpyArray::F64(t) => t,
        }
    }
}

pub fn to_npy_bytes<T: Real>(array: &Tensor<T>) -> Vec<u8> {
    let mut out = NpyHeader::new(T::NPY_DESCR, array.shape()).encode();
    out.reserve(array.len() * T::BYTES);
    for &v in array.data() {
        v.write_le(&mut out);
    }
    out
}

fn payload<T: Real>(header: &NpyHeader, bytes: &[u8]) -> Result<Tensor<T>> {
    let need = header.len() * T::BYTES;
    if bytes.len() < need {
        return format_err(format!("truncated payload: {} of {need} bytes", bytes.len()));
    }
    if bytes.len() > need {
        return format_err(format!("{} trailing bytes after payload", bytes.len() - need));
    }
    let data = bytes.chunks_exact(T::BYTES).map(T::read_le).collect();
    Tensor::new(&header.shape, data)
}

pub fn from_npy_bytes(bytes: &[u8]) -> Result<NpyArray> {
    let (header, offset) = NpyHeader::decode(bytes)?;
    if header.fortran_order {
        return format_err("Fortran-ordered arrays are not supported");
    }
    let body = &bytes[offset..];
    match header.descr.as_str() {
        "<f4" => Ok(NpyArray::F32(payload(&header, body)?)),
        "<f8" => Ok(NpyArray::F64(payload(&header, body)?)),
        d => format_err(format!("unsupported dtype {d}")),
    }
}

pub fn write_npy<T: Real>(path: impl AsRef<Path>, array: &Tensor<T>) -> Result<()> {
    fs::write(path, to_npy_bytes(array))?;
    Ok(())
}

pub fn read_npy(path: impl AsRef<Path>) -> Result<NpyArray> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    from_npy_bytes(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        e => e,
    })
}

/// Reads an array that must have been stored as `T`.
pub fn read_npy_exact<T: Real>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let (header, offset) = NpyHeader::decode(&bytes)?;
    if header.descr != T::NPY_DESCR || header.fortran_order {
        return format_err(format!("{}: expected {} in C order, found {}", path.display(), T::NPY_DESCR, header.descr));
    }
    payload(&header, &bytes[offset..])
}
