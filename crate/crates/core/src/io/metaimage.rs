//! MetaImage (`.mhd` + `.raw`) volumes.
//!
//! Three element types are supported: `MET_UCHAR`, `MET_SHORT` and
//! `MET_FLOAT`. Header keys are matched case-insensitively and keys this
//! module does not interpret are kept, in order, and written back out.
//! Data is always written little-endian, x-fastest, to a sibling `.raw` file.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::volume::{Geometry, LabelMask, Volume, VoxelGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementType {
    UChar,
    Short,
    Float,
}

impl ElementType {
    pub fn tag(self) -> &'static str {
        match self {
            ElementType::UChar => "MET_UCHAR",
            ElementType::Short => "MET_SHORT",
            ElementType::Float => "MET_FLOAT",
        }
    }

    pub fn size(self) -> usize {
        match self {
            ElementType::UChar => 1,
            ElementType::Short => 2,
            ElementType::Float => 4,
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "MET_UCHAR" => Some(ElementType::UChar),
            "MET_SHORT" => Some(ElementType::Short),
            "MET_FLOAT" => Some(ElementType::Float),
            _ => None,
        }
    }
}

impl std::str::FromStr for ElementType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ElementType::parse(s)
            .or_else(|| match s.to_ascii_lowercase().as_str() {
                "uchar" | "u8" => Some(ElementType::UChar),
                "short" | "i16" => Some(ElementType::Short),
                "float" | "f32" => Some(ElementType::Float),
                _ => None,
            })
            .ok_or_else(|| Error::invalid(format!("unsupported element type '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum VoxelData {
    UChar(Vec<u8>),
    Short(Vec<i16>),
    Float(Vec<f32>),
}

impl VoxelData {
    pub fn element_type(&self) -> ElementType {
        match self {
            VoxelData::UChar(_) => ElementType::UChar,
            VoxelData::Short(_) => ElementType::Short,
            VoxelData::Float(_) => ElementType::Float,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            VoxelData::UChar(v) => v.len(),
            VoxelData::Short(v) => v.len(),
            VoxelData::Float(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn to_le_bytes(&self) -> Vec<u8> {
        match self {
            VoxelData::UChar(v) => v.clone(),
            VoxelData::Short(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            VoxelData::Float(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }

    fn from_bytes(ty: ElementType, bytes: &[u8], big_endian: bool) -> VoxelData {
        match ty {
            ElementType::UChar => VoxelData::UChar(bytes.to_vec()),
            ElementType::Short => VoxelData::Short(
                bytes
                    .chunks_exact(2)
                    .map(|c| {
                        let b = [c[0], c[1]];
                        if big_endian {
                            i16::from_be_bytes(b)
                        } else {
                            i16::from_le_bytes(b)
                        }
                    })
                    .collect(),
            ),
            ElementType::Float => VoxelData::Float(
                bytes
                    .chunks_exact(4)
                    .map(|c| {
                        let b = [c[0], c[1], c[2], c[3]];
                        if big_endian {
                            f32::from_be_bytes(b)
                        } else {
                            f32::from_le_bytes(b)
                        }
                    })
                    .collect(),
            ),
        }
    }
}

/// A MetaImage volume as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaImage {
    pub geom: Geometry,
    pub data: VoxelData,
    /// Header entries not interpreted here, in file order.
    pub extra: Vec<(String, String)>,
}

const MANAGED_KEYS: &[&str] = &[
    "objecttype",
    "ndims",
    "binarydata",
    "binarydatabyteordermsb",
    "elementbyteordermsb",
    "compresseddata",
    "offset",
    "origin",
    "position",
    "elementspacing",
    "elementsize",
    "dimsize",
    "elementtype",
    "elementdatafile",
];

fn header_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Header { path: path.to_path_buf(), reason: reason.into() }
}

fn parse_triple<T: std::str::FromStr>(path: &Path, key: &str, value: &str) -> Result<[T; 3]> {
    let parts: Vec<T> = value
        .split_whitespace()
        .map(|s| s.parse::<T>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| header_err(path, format!("cannot parse {key} = {value}")))?;
    match <[T; 3]>::try_from(parts) {
        Ok(arr) => Ok(arr),
        Err(v) => Err(header_err(path, format!("{key} needs 3 values, got {}", v.len()))),
    }
}

fn parse_bool(value: &str) -> bool {
    matches!(value.trim().to_ascii_lowercase().as_str(), "true" | "1" | "yes")
}

impl MetaImage {
    pub fn read(path: impl AsRef<Path>) -> Result<MetaImage> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;

        let mut dims: Option<[usize; 3]> = None;
        let mut spacing: Option<[f64; 3]> = None;
        let mut origin = [0.0f64; 3];
        let mut element: Option<ElementType> = None;
        let mut big_endian = false;
        let mut data_file: Option<String> = None;
        let mut extra = Vec::new();
        let mut header_end = 0usize;

        let mut cursor = 0usize;
        while cursor < bytes.len() {
            let line_end = bytes[cursor..].iter().position(|&b| b == b'\n').map_or(bytes.len(), |p| cursor + p + 1);
            let line = std::str::from_utf8(&bytes[cursor..line_end])
                .map_err(|_| header_err(path, "header is not valid UTF-8"))?;
            cursor = line_end;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| header_err(path, format!("expected 'Key = Value', got '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            match key.to_ascii_lowercase().as_str() {
                "ndims" => {
                    if value != "3" {
                        return Err(header_err(path, format!("NDims = {value}, only 3 is supported")));
                    }
                }
                "dimsize" => dims = Some(parse_triple(path, key, value)?),
                "elementspacing" => spacing = Some(parse_triple(path, key, value)?),
                "elementsize" => {
                    if spacing.is_none() {
                        spacing = Some(parse_triple(path, key, value)?);
                    }
                }
                "offset" | "origin" | "position" => origin = parse_triple(path, key, value)?,
                "elementtype" => {
                    element = Some(
                        ElementType::parse(value)
                            .ok_or_else(|| header_err(path, format!("unsupported ElementType {value}")))?,
                    )
                }
                "binarydatabyteordermsb" | "elementbyteordermsb" => big_endian = parse_bool(value),
                "compresseddata" => {
                    if parse_bool(value) {
                        return Err(header_err(path, "compressed data is not supported"));
                    }
                }
                "elementnumberofchannels" => {
                    if value != "1" {
                        return Err(header_err(path, "only single-channel images are supported"));
                    }
                    extra.push((key.to_string(), value.to_string()));
                }
                "elementdatafile" => {
                    data_file = Some(value.to_string());
                    header_end = cursor;
                    break;
                }
                "objecttype" | "binarydata" => {}
                _ => extra.push((key.to_string(), value.to_string())),
            }
        }

        let dims = dims.ok_or_else(|| header_err(path, "missing DimSize"))?;
        let spacing = spacing.ok_or_else(|| header_err(path, "missing ElementSpacing"))?;
        let element = element.ok_or_else(|| header_err(path, "missing ElementType"))?;
        let data_file = data_file.ok_or_else(|| header_err(path, "missing ElementDataFile"))?;
        let geom = Geometry::new(dims, spacing, origin).map_err(|e| header_err(path, e.to_string()))?;

        let expected = (geom.len() * element.size()) as u64;
        let (raw, raw_path): (Vec<u8>, PathBuf) = if data_file.eq_ignore_ascii_case("LOCAL") {
            (bytes[header_end..].to_vec(), path.to_path_buf())
        } else {
            let raw_path = path.parent().unwrap_or_else(|| Path::new("")).join(&data_file);
            (fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?, raw_path)
        };
        if raw.len() as u64 != expected {
            return Err(Error::RawSize { path: raw_path, expected, actual: raw.len() as u64 });
        }
        let data = VoxelData::from_bytes(element, &raw, big_endian);
        Ok(MetaImage { geom, data, extra })
    }

    /// Writes `path` (header) and a sibling raw file named after it.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if self.data.len() != self.geom.len() {
            return Err(Error::invalid("voxel count does not match geometry"));
        }
        let raw_path = path.with_extension("raw");
        let raw_name = raw_path
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::invalid(format!("bad output path {}", path.display())))?
            .to_string();

        let fmt3 = |v: [f64; 3]| format!("{} {} {}", v[0], v[1], v[2]);
        let mut header = String::new();
        header.push_str("ObjectType = Image\nNDims = 3\nBinaryData = True\n");
        header.push_str("BinaryDataByteOrderMSB = False\nCompressedData = False\n");
        for (k, v) in &self.extra {
            if !MANAGED_KEYS.contains(&k.to_ascii_lowercase().as_str()) {
                header.push_str(&format!("{k} = {v}\n"));
            }
        }
        header.push_str(&format!("Offset = {}\n", fmt3(self.geom.origin)));
        header.push_str(&format!("ElementSpacing = {}\n", fmt3(self.geom.spacing)));
        let d = self.geom.dims;
        header.push_str(&format!("DimSize = {} {} {}\n", d[0], d[1], d[2]));
        header.push_str(&format!("ElementType = {}\n", self.data.element_type().tag()));
        header.push_str(&format!("ElementDataFile = {raw_name}\n"));

        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, header).map_err(|e| Error::io(path, e))?;
        fs::write(&raw_path, self.data.to_le_bytes()).map_err(|e| Error::io(&raw_path, e))?;
        Ok(())
    }

    /// Intensities as f32. Every supported element type converts exactly.
    pub fn to_grid(&self) -> VoxelGrid {
        let data = match &self.data {
            VoxelData::UChar(v) => v.iter().map(|&x| f32::from(x)).collect(),
            VoxelData::Short(v) => v.iter().map(|&x| f32::from(x)).collect(),
            VoxelData::Float(v) => v.clone(),
        };
        Volume { geom: self.geom, data }
    }

    /// Label codes; the stored values must be integers in 0..=255.
    pub fn to_labels(&self) -> Result<LabelMask> {
        let convert = |x: f64, i: usize| -> Result<u8> {
            if x.fract() == 0.0 && (0.0..=255.0).contains(&x) {
                Ok(x as u8)
            } else {
                Err(Error::invalid(format!("voxel {i} holds {x}, not a label code")))
            }
        };
        let data = match &self.data {
            VoxelData::UChar(v) => v.clone(),
            VoxelData::Short(v) => {
                v.iter().enumerate().map(|(i, &x)| convert(f64::from(x), i)).collect::<Result<_>>()?
            }
            VoxelData::Float(v) => {
                v.iter().enumerate().map(|(i, &x)| convert(f64::from(x), i)).collect::<Result<_>>()?
            }
        };
        Ok(Volume { geom: self.geom, data })
    }

    /// Encodes a grid. `Short` and `UChar` require integral in-range values.
    pub fn from_grid(grid: &VoxelGrid, ty: ElementType) -> Result<MetaImage> {
        let check = |i: usize, v: f32, lo: f32, hi: f32| -> Result<()> {
            if v.fract() == 0.0 && v >= lo && v <= hi {
                Ok(())
            } else {
                Err(Error::invalid(format!("voxel {i} value {v} is not representable as {}", ty.tag())))
            }
        };
        let data = match ty {
            ElementType::Float => VoxelData::Float(grid.data.clone()),
            ElementType::Short => {
                for (i, &v) in grid.data.iter().enumerate() {
                    check(i, v, f32::from(i16::MIN), f32::from(i16::MAX))?;
                }
                VoxelData::Short(grid.data.iter().map(|&v| v as i16).collect())
            }
            ElementType::UChar => {
                for (i, &v) in grid.data.iter().enumerate() {
                    check(i, v, 0.0, 255.0)?;
                }
                VoxelData::UChar(grid.data.iter().map(|&v| v as u8).collect())
            }
        };
        Ok(MetaImage { geom: grid.geom, data, extra: Vec::new() })
    }

    pub fn from_labels(mask: &LabelMask) -> MetaImage {
        MetaImage { geom: mask.geom, data: VoxelData::UChar(mask.data.clone()), extra: Vec::new() }
    }
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<VoxelGrid> {
    Ok(MetaImage::read(path)?.to_grid())
}

pub fn write_volume(path: impl AsRef<Path>, grid: &VoxelGrid, ty: ElementType) -> Result<()> {
    MetaImage::from_grid(grid, ty)?.write(path)
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<LabelMask> {
    MetaImage::read(path)?.to_labels()
}

pub fn write_mask(path: impl AsRef<Path>, mask: &LabelMask) -> Result<()> {
    MetaImage::from_labels(mask).write(path)
}
