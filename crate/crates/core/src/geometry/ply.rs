//! PLY reading and writing.
//!
//! Reads ASCII and binary little-endian files whose `vertex` element carries at
//! least `x y z red green blue`; `nx ny nz` and an integer label property are
//! picked up when present. Writes binary little-endian only.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Point3, Vector3};
use thiserror::Error;

use super::{GeometryError, PointCloud, Rgb};

pub const DEFAULT_LABEL_PROPERTY: &str = "label";

#[derive(Debug, Error)]
pub enum PlyError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed PLY header: {0}")]
    Header(String),
    #[error("missing mandatory vertex property `{0}`")]
    MissingProperty(&'static str),
    #[error("truncated payload: expected {expected} vertices, read {read}")]
    Truncated { expected: usize, read: usize },
    #[error("bad value for property `{property}` in vertex {vertex}: {detail}")]
    Value {
        property: String,
        vertex: usize,
        detail: String,
    },
    #[error("invalid point cloud: {0}")]
    Cloud(#[from] GeometryError),
    #[error("colorize_by_label requested but the cloud has no labels")]
    NoLabels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read_le(self, buf: &[u8]) -> f64 {
        match self {
            Self::I8 => buf[0] as i8 as f64,
            Self::U8 => buf[0] as f64,
            Self::I16 => i16::from_le_bytes([buf[0], buf[1]]) as f64,
            Self::U16 => u16::from_le_bytes([buf[0], buf[1]]) as f64,
            Self::I32 => i32::from_le_bytes(buf[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(buf[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(buf[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(buf[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

impl Property {
    fn name(&self) -> &str {
        match self {
            Self::Scalar { name, .. } | Self::List { name, .. } => name,
        }
    }
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    format: Format,
    elements: Vec<Element>,
}

fn read_header(reader: &mut impl BufRead) -> Result<Header, PlyError> {
    let mut line = String::new();
    let mut next_line = |line: &mut String| -> Result<(), PlyError> {
        line.clear();
        if reader.read_line(line)? == 0 {
            return Err(PlyError::Header("unexpected end of file in header".into()));
        }
        Ok(())
    };

    next_line(&mut line)?;
    if line.trim_end() != "ply" {
        return Err(PlyError::Header("missing `ply` magic".into()));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        next_line(&mut line)?;
        let mut words = line.split_whitespace();
        match words.next() {
            Some("end_header") => break,
            Some("comment") | Some("obj_info") | None => {}
            Some("format") => {
                format = Some(match (words.next(), words.next()) {
                    (Some("ascii"), Some("1.0")) => Format::Ascii,
                    (Some("binary_little_endian"), Some("1.0")) => Format::BinaryLittleEndian,
                    (Some(other), _) => {
                        return Err(PlyError::Header(format!("unsupported format `{other}`")))
                    }
                    _ => return Err(PlyError::Header("incomplete format line".into())),
                });
            }
            Some("element") => {
                let name = words
                    .next()
                    .ok_or_else(|| PlyError::Header("element without name".into()))?;
                let count = words
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| PlyError::Header(format!("bad count for element `{name}`")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| PlyError::Header("property before any element".into()))?;
                let words: Vec<&str> = words.collect();
                let property = match words.as_slice() {
                    ["list", count, item, name] => Property::List {
                        name: name.to_string(),
                        count: Scalar::parse(count)
                            .ok_or_else(|| PlyError::Header(format!("unknown type `{count}`")))?,
                        item: Scalar::parse(item)
                            .ok_or_else(|| PlyError::Header(format!("unknown type `{item}`")))?,
                    },
                    [ty, name] => Property::Scalar {
                        name: name.to_string(),
                        ty: Scalar::parse(ty)
                            .ok_or_else(|| PlyError::Header(format!("unknown type `{ty}`")))?,
                    },
                    _ => return Err(PlyError::Header(format!("bad property line `{}`", line.trim()))),
                };
                element.properties.push(property);
            }
            Some(other) => return Err(PlyError::Header(format!("unknown keyword `{other}`"))),
        }
    }
    let format = format.ok_or_else(|| PlyError::Header("missing format line".into()))?;
    Ok(Header { format, elements })
}

/// Column positions of the vertex properties we care about.
struct VertexLayout {
    xyz: [usize; 3],
    rgb: [usize; 3],
    normal: Option<[usize; 3]>,
    label: Option<usize>,
}

impl VertexLayout {
    fn resolve(element: &Element, label_property: &str) -> Result<Self, PlyError> {
        let find = |name: &str| {
            element.properties.iter().position(|p| {
                p.name() == name && matches!(p, Property::Scalar { .. })
            })
        };
        let require = |name: &'static str| find(name).ok_or(PlyError::MissingProperty(name));
        let xyz = [require("x")?, require("y")?, require("z")?];
        let rgb = [require("red")?, require("green")?, require("blue")?];
        let normal = match (find("nx"), find("ny"), find("nz")) {
            (Some(a), Some(b), Some(c)) => Some([a, b, c]),
            _ => None,
        };
        Ok(Self {
            xyz,
            rgb,
            normal,
            label: find(label_property),
        })
    }
}

pub fn load_ply(path: impl AsRef<Path>) -> Result<PointCloud, PlyError> {
    load_ply_with_label(path, DEFAULT_LABEL_PROPERTY)
}

/// Loads a PLY, reading per-point labels from `label_property` when present.
pub fn load_ply_with_label(
    path: impl AsRef<Path>,
    label_property: &str,
) -> Result<PointCloud, PlyError> {
    let mut reader = BufReader::new(File::open(path)?);
    read_ply(&mut reader, label_property)
}

pub fn read_ply(reader: &mut impl BufRead, label_property: &str) -> Result<PointCloud, PlyError> {
    let header = read_header(reader)?;
    let vertex_pos = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| PlyError::Header("no `vertex` element".into()))?;

    // Skip elements stored ahead of the vertices.
    for element in &header.elements[..vertex_pos] {
        skip_element(reader, header.format, element)?;
    }

    let element = &header.elements[vertex_pos];
    let layout = VertexLayout::resolve(element, label_property)?;
    let rows = match header.format {
        Format::Ascii => read_ascii_rows(reader, element)?,
        Format::BinaryLittleEndian => read_binary_rows(reader, element)?,
    };

    let mut positions = Vec::with_capacity(rows.len());
    let mut colors = Vec::with_capacity(rows.len());
    let mut normals = layout.normal.map(|_| Vec::with_capacity(rows.len()));
    let mut labels = layout.label.map(|_| Vec::with_capacity(rows.len()));
    for (vertex, row) in rows.iter().enumerate() {
        positions.push(Point3::new(
            row[layout.xyz[0]],
            row[layout.xyz[1]],
            row[layout.xyz[2]],
        ));
        let channel = |i: usize| row[layout.rgb[i]].clamp(0.0, 255.0) as u8;
        colors.push([channel(0), channel(1), channel(2)]);
        if let (Some(cols), Some(normals)) = (layout.normal, normals.as_mut()) {
            let n = Vector3::new(row[cols[0]], row[cols[1]], row[cols[2]]);
            let norm = n.norm();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(PlyError::Value {
                    property: "nx/ny/nz".into(),
                    vertex,
                    detail: "zero or non-finite normal".into(),
                });
            }
            normals.push(n / norm);
        }
        if let (Some(col), Some(labels)) = (layout.label, labels.as_mut()) {
            labels.push(row[col] as i32);
        }
    }

    let mut cloud = PointCloud::new(positions, colors)?;
    if let Some(normals) = normals {
        cloud = cloud.with_normals(normals)?;
    }
    if let Some(labels) = labels {
        cloud = cloud.with_labels(labels)?;
    }
    Ok(cloud)
}

fn read_ascii_rows(reader: &mut impl BufRead, element: &Element) -> Result<Vec<Vec<f64>>, PlyError> {
    let mut rows = Vec::with_capacity(element.count);
    let mut line = String::new();
    while rows.len() < element.count {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(PlyError::Truncated {
                expected: element.count,
                read: rows.len(),
            });
        }
        if line.trim().is_empty() {
            continue;
        }
        let vertex = rows.len();
        let mut tokens = line.split_whitespace();
        let mut row = Vec::with_capacity(element.properties.len());
        for property in &element.properties {
            let mut next = || {
                let token = tokens.next().ok_or_else(|| PlyError::Value {
                    property: property.name().to_string(),
                    vertex,
                    detail: "missing value".into(),
                })?;
                token.parse::<f64>().map_err(|e| PlyError::Value {
                    property: property.name().to_string(),
                    vertex,
                    detail: e.to_string(),
                })
            };
            match property {
                Property::Scalar { .. } => row.push(next()?),
                Property::List { .. } => {
                    let n = next()? as usize;
                    for _ in 0..n {
                        next()?;
                    }
                    row.push(f64::NAN);
                }
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

fn read_binary_rows(reader: &mut impl Read, element: &Element) -> Result<Vec<Vec<f64>>, PlyError> {
    let mut rows = Vec::with_capacity(element.count);
    let mut buf = [0u8; 8];
    let truncated = |read| PlyError::Truncated {
        expected: element.count,
        read,
    };
    for vertex in 0..element.count {
        let mut row = Vec::with_capacity(element.properties.len());
        for property in &element.properties {
            match property {
                Property::Scalar { ty, .. } => {
                    read_exact_or(reader, &mut buf[..ty.size()], || truncated(vertex))?;
                    row.push(ty.read_le(&buf));
                }
                Property::List { count, item, .. } => {
                    read_exact_or(reader, &mut buf[..count.size()], || truncated(vertex))?;
                    let n = count.read_le(&buf) as usize;
                    let mut skip = vec![0u8; n * item.size()];
                    read_exact_or(reader, &mut skip, || truncated(vertex))?;
                    row.push(f64::NAN);
                }
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

fn read_exact_or(
    reader: &mut impl Read,
    buf: &mut [u8],
    on_eof: impl FnOnce() -> PlyError,
) -> Result<(), PlyError> {
    match reader.read_exact(buf) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Err(on_eof()),
        Err(e) => Err(e.into()),
    }
}

fn skip_element(reader: &mut impl BufRead, format: Format, element: &Element) -> Result<(), PlyError> {
    match format {
        Format::Ascii => read_ascii_rows(reader, element).map(drop),
        Format::BinaryLittleEndian => read_binary_rows(reader, element).map(drop),
    }
}

const PALETTE: [Rgb; 12] = [
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [255, 225, 25],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [0, 128, 128],
    [170, 110, 40],
    [128, 0, 0],
];

/// Display color for a label; negative labels are gray.
pub fn label_color(label: i32) -> Rgb {
    if label < 0 {
        [128, 128, 128]
    } else {
        PALETTE[label as usize % PALETTE.len()]
    }
}

pub fn write_ply(
    cloud: &PointCloud,
    path: impl AsRef<Path>,
    colorize_by_label: bool,
) -> Result<(), PlyError> {
    if colorize_by_label && cloud.labels().is_none() {
        return Err(PlyError::NoLabels);
    }
    let mut out = BufWriter::new(File::create(path)?);
    encode_ply(cloud, &mut out, colorize_by_label)?;
    out.flush()?;
    Ok(())
}

/// Serializes `cloud` as binary little-endian PLY into `out`.
pub fn encode_ply(
    cloud: &PointCloud,
    out: &mut impl Write,
    colorize_by_label: bool,
) -> Result<(), PlyError> {
    let labels = cloud.labels();
    if colorize_by_label && labels.is_none() {
        return Err(PlyError::NoLabels);
    }
    let normals = cloud.normals();

    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", cloud.len()));
    header.push_str("property double x\nproperty double y\nproperty double z\n");
    if normals.is_some() {
        header.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    if labels.is_some() {
        header.push_str(&format!("property int {DEFAULT_LABEL_PROPERTY}\n"));
    }
    header.push_str("end_header\n");
    out.write_all(header.as_bytes())?;

    for i in 0..cloud.len() {
        for c in cloud.positions()[i].iter() {
            out.write_all(&c.to_le_bytes())?;
        }
        if let Some(normals) = normals {
            for c in normals[i].iter() {
                out.write_all(&c.to_le_bytes())?;
            }
        }
        let color = match labels {
            Some(labels) if colorize_by_label => label_color(labels[i]),
            _ => cloud.colors()[i],
        };
        out.write_all(&color)?;
        if let Some(labels) = labels {
            out.write_all(&labels[i].to_le_bytes())?;
        }
    }
    Ok(())
}
