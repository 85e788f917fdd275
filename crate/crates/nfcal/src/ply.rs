//! PLY point clouds, ASCII and binary little-endian.
//!
//! Only scalar vertex properties are supported. Radar clouds carry
//! `x y z confidence`, where `confidence` is a raw linear amplitude that is
//! peak-normalized on load, and must declare their length unit with a
//! `comment units m|cm|mm` header line.

use std::path::Path;

use nfcal_core::{Point3, RadarCloud};

use crate::error::{self, IoError, Result};

const F: &str = "PLY";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
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

    fn name(self) -> &'static str {
        match self {
            Self::I8 => "char",
            Self::U8 => "uchar",
            Self::I16 => "short",
            Self::U16 => "ushort",
            Self::I32 => "int",
            Self::U32 => "uint",
            Self::F32 => "float",
            Self::F64 => "double",
        }
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::F64 => f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]]),
        }
    }

    fn encode(self, v: f64, out: &mut Vec<u8>) {
        match self {
            Self::I8 => out.push(v as i8 as u8),
            Self::U8 => out.push(v as u8),
            Self::I16 => out.extend_from_slice(&(v as i16).to_le_bytes()),
            Self::U16 => out.extend_from_slice(&(v as u16).to_le_bytes()),
            Self::I32 => out.extend_from_slice(&(v as i32).to_le_bytes()),
            Self::U32 => out.extend_from_slice(&(v as u32).to_le_bytes()),
            Self::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Self::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, Self::F32 | Self::F64)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<(String, ScalarType)>,
}

/// The vertex element of a PLY file.
#[derive(Debug, Clone, PartialEq)]
pub struct PlyVertices {
    pub format: PlyFormat,
    pub comments: Vec<String>,
    pub properties: Vec<(String, ScalarType)>,
    /// Row-major, one row per vertex.
    pub values: Vec<f64>,
}

impl PlyVertices {
    pub fn len(&self) -> usize {
        if self.properties.is_empty() {
            0
        } else {
            self.values.len() / self.properties.len()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.properties.iter().position(|(n, _)| n == name)?;
        let stride = self.properties.len();
        Some(self.values.iter().skip(k).step_by(stride).copied().collect())
    }

    /// Value of the first `comment <key> <value>` line.
    pub fn comment_value(&self, key: &str) -> Option<&str> {
        self.comments.iter().find_map(|c| {
            let mut parts = c.split_whitespace();
            (parts.next() == Some(key)).then(|| parts.next()).flatten()
        })
    }
}

struct Header {
    format: PlyFormat,
    comments: Vec<String>,
    elements: Vec<Element>,
    body: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut pos = 0;
    let mut next_line = || -> Result<&str> {
        let rest = &bytes[pos..];
        let end = rest
            .iter()
            .take(4096)
            .position(|b| *b == b'\n')
            .ok_or_else(|| IoError::malformed(F, "truncated header"))?;
        pos += end + 1;
        let line = std::str::from_utf8(&rest[..end]).map_err(|_| IoError::malformed(F, "header is not UTF-8"))?;
        Ok(line.trim_end_matches('\r'))
    };
    if next_line()? != "ply" {
        return Err(IoError::malformed(F, "missing `ply` magic"));
    }
    let mut format = None;
    let mut comments = Vec::new();
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let line = next_line()?;
        let mut words = line.split_whitespace();
        match words.next() {
            Some("end_header") => break,
            Some("format") => {
                format = Some(match (words.next(), words.next()) {
                    (Some("ascii"), Some("1.0")) => PlyFormat::Ascii,
                    (Some("binary_little_endian"), Some("1.0")) => PlyFormat::BinaryLittleEndian,
                    (f, v) => return Err(IoError::malformed(F, format!("unsupported format {f:?} {v:?}"))),
                })
            }
            Some("comment") => comments.push(line.trim_start()["comment".len()..].trim().to_string()),
            Some("obj_info") | None => {}
            Some("element") => {
                let (Some(name), Some(count), None) = (words.next(), words.next(), words.next()) else {
                    return Err(IoError::malformed(F, format!("bad element line {line:?}")));
                };
                let count = count
                    .parse()
                    .map_err(|_| IoError::malformed(F, format!("bad element count {count:?}")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| IoError::malformed(F, "property before any element"))?;
                let (Some(ty), Some(name), None) = (words.next(), words.next(), words.next()) else {
                    return Err(IoError::malformed(F, format!("unsupported property line {line:?}")));
                };
                let ty = ScalarType::parse(ty).ok_or_else(|| IoError::malformed(F, format!("unknown type {ty:?}")))?;
                if element.properties.iter().any(|(n, _)| n == name) {
                    return Err(IoError::malformed(F, format!("duplicate property {name:?}")));
                }
                element.properties.push((name.to_string(), ty));
            }
            Some(word) => return Err(IoError::malformed(F, format!("unknown header keyword {word:?}"))),
        }
    }
    let format = format.ok_or_else(|| IoError::malformed(F, "missing format line"))?;
    Ok(Header {
        format,
        comments,
        elements,
        body: pos,
    })
}

pub fn parse_ply(bytes: &[u8]) -> Result<PlyVertices> {
    let header = parse_header(bytes)?;
    let vi = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| IoError::malformed(F, "no vertex element"))?;
    let vertex = &header.elements[vi];
    if vertex.properties.is_empty() {
        return Err(IoError::malformed(F, "vertex element has no properties"));
    }
    let body = &bytes[header.body..];
    let stride = vertex.properties.len();
    let values = match header.format {
        PlyFormat::BinaryLittleEndian => {
            let mut offset = 0usize;
            for e in &header.elements[..vi] {
                let row: usize = e.properties.iter().map(|(_, t)| t.size()).sum();
                offset = row
                    .checked_mul(e.count)
                    .and_then(|n| n.checked_add(offset))
                    .ok_or_else(|| IoError::malformed(F, "element sizes overflow"))?;
            }
            let row: usize = vertex.properties.iter().map(|(_, t)| t.size()).sum();
            let needed = row
                .checked_mul(vertex.count)
                .and_then(|n| n.checked_add(offset))
                .ok_or_else(|| IoError::malformed(F, "vertex data size overflows"))?;
            if body.len() < needed {
                return Err(IoError::malformed(
                    F,
                    format!(
                        "{} vertices need {needed} body bytes, found {}",
                        vertex.count,
                        body.len()
                    ),
                ));
            }
            let mut values = Vec::with_capacity(vertex.count * stride);
            let mut at = offset;
            for _ in 0..vertex.count {
                for (_, t) in &vertex.properties {
                    values.push(t.decode(&body[at..at + t.size()]));
                    at += t.size();
                }
            }
            values
        }
        PlyFormat::Ascii => {
            let text = std::str::from_utf8(body).map_err(|_| IoError::malformed(F, "ASCII body is not UTF-8"))?;
            let mut lines = text.lines().filter(|l| !l.trim().is_empty());
            for e in &header.elements[..vi] {
                for _ in 0..e.count {
                    lines
                        .next()
                        .ok_or_else(|| IoError::malformed(F, format!("truncated {} element", e.name)))?;
                }
            }
            let mut values = Vec::new();
            for i in 0..vertex.count {
                let line = lines
                    .next()
                    .ok_or_else(|| IoError::malformed(F, format!("expected {} vertices, found {i}", vertex.count)))?;
                let mut fields = line.split_whitespace();
                for (name, t) in &vertex.properties {
                    let s = fields
                        .next()
                        .ok_or_else(|| IoError::malformed(F, format!("vertex {i} lacks {name}")))?;
                    let v: f64 = s
                        .parse()
                        .map_err(|_| IoError::malformed(F, format!("vertex {i}: bad {name} {s:?}")))?;
                    if t.is_integer() && v.fract() != 0.0 {
                        return Err(IoError::malformed(
                            F,
                            format!("vertex {i}: {name} {s:?} is not an integer"),
                        ));
                    }
                    values.push(v);
                }
                if fields.next().is_some() {
                    return Err(IoError::malformed(F, format!("vertex {i} has extra fields")));
                }
            }
            values
        }
    };
    Ok(PlyVertices {
        format: header.format,
        comments: header.comments,
        properties: vertex.properties.clone(),
        values,
    })
}

/// Serializes vertices. Doubles print in shortest round-trip form, so both
/// encodings reload bit-exactly.
pub fn format_ply(vertices: &PlyVertices) -> Vec<u8> {
    let n = vertices.len();
    let mut out = String::from("ply\n");
    out.push_str(match vertices.format {
        PlyFormat::Ascii => "format ascii 1.0\n",
        PlyFormat::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    });
    for c in &vertices.comments {
        out.push_str(&format!("comment {c}\n"));
    }
    out.push_str(&format!("element vertex {n}\n"));
    for (name, t) in &vertices.properties {
        out.push_str(&format!("property {} {name}\n", t.name()));
    }
    out.push_str("end_header\n");
    let mut bytes = out.into_bytes();
    let stride = vertices.properties.len().max(1);
    match vertices.format {
        PlyFormat::Ascii => {
            for row in vertices.values.chunks(stride) {
                let fields: Vec<String> = row
                    .iter()
                    .zip(&vertices.properties)
                    .map(|(v, (_, t))| match t {
                        ScalarType::F64 => format!("{v:?}"),
                        ScalarType::F32 => format!("{:?}", *v as f32),
                        _ => format!("{}", *v as i64),
                    })
                    .collect();
                bytes.extend_from_slice(fields.join(" ").as_bytes());
                bytes.push(b'\n');
            }
        }
        PlyFormat::BinaryLittleEndian => {
            for row in vertices.values.chunks(stride) {
                for (v, (_, t)) in row.iter().zip(&vertices.properties) {
                    t.encode(*v, &mut bytes);
                }
            }
        }
    }
    bytes
}

/// Length unit declared by `comment units ...`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    Meters,
    Centimeters,
    Millimeters,
}

impl Units {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "m" => Self::Meters,
            "cm" => Self::Centimeters,
            "mm" => Self::Millimeters,
            _ => return None,
        })
    }

    pub fn to_meters(self) -> f64 {
        match self {
            Self::Meters => 1.0,
            Self::Centimeters => 0.01,
            Self::Millimeters => 0.001,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Meters => "m",
            Self::Centimeters => "cm",
            Self::Millimeters => "mm",
        }
    }
}

fn units_of(vertices: &PlyVertices) -> Result<Units> {
    let s = vertices
        .comment_value("units")
        .ok_or_else(|| IoError::malformed(F, "missing `comment units m|cm|mm`"))?;
    Units::parse(s).ok_or_else(|| IoError::malformed(F, format!("unknown units {s:?}")))
}

fn xyz(vertices: &PlyVertices) -> Result<Vec<Point3>> {
    let scale = units_of(vertices)?.to_meters();
    let col = |name: &str| {
        vertices
            .column(name)
            .ok_or_else(|| IoError::malformed(F, format!("missing vertex property {name:?}")))
    };
    let (x, y, z) = (col("x")?, col("y")?, col("z")?);
    Ok((0..x.len())
        .map(|i| Point3::new(x[i] * scale, y[i] * scale, z[i] * scale))
        .collect())
}

pub fn parse_radar_cloud(bytes: &[u8]) -> Result<RadarCloud> {
    let vertices = parse_ply(bytes)?;
    let points = xyz(&vertices)?;
    let amplitude = vertices
        .column("confidence")
        .ok_or_else(|| IoError::malformed(F, "missing vertex property \"confidence\""))?;
    Ok(RadarCloud::from_amplitudes(points, &amplitude)?)
}

pub fn radar_cloud_vertices(cloud: &RadarCloud, format: PlyFormat) -> PlyVertices {
    let mut values = Vec::with_capacity(cloud.len() * 4);
    for (p, c) in cloud.points().iter().zip(cloud.confidence()) {
        values.extend_from_slice(&[p.x, p.y, p.z, *c]);
    }
    PlyVertices {
        format,
        comments: vec![format!("units {}", Units::Meters.name())],
        properties: ["x", "y", "z", "confidence"]
            .iter()
            .map(|n| (n.to_string(), ScalarType::F64))
            .collect(),
        values,
    }
}

pub fn load_radar_cloud(path: &Path) -> Result<RadarCloud> {
    parse_radar_cloud(&error::read(path)?)
}

pub fn save_radar_cloud(path: &Path, cloud: &RadarCloud, format: PlyFormat) -> Result<()> {
    error::write(path, &format_ply(&radar_cloud_vertices(cloud, format)))
}

/// Points with one scalar per point (residuals), plus a blue-to-red color
/// ramp over `[0, color_max]` for viewers.
pub fn scalar_cloud_vertices(points: &[Point3], scalar: &str, values: &[f64], color_max: f64) -> PlyVertices {
    let mut properties: Vec<(String, ScalarType)> = ["x", "y", "z", scalar]
        .iter()
        .map(|n| (n.to_string(), ScalarType::F64))
        .collect();
    properties.extend(["red", "green", "blue"].iter().map(|n| (n.to_string(), ScalarType::U8)));
    let mut out = Vec::with_capacity(points.len() * 7);
    for (p, v) in points.iter().zip(values) {
        let t = if color_max > 0.0 {
            (v / color_max).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.extend_from_slice(&[p.x, p.y, p.z, *v, (255.0 * t).round(), 0.0, (255.0 * (1.0 - t)).round()]);
    }
    PlyVertices {
        format: PlyFormat::BinaryLittleEndian,
        comments: vec![format!("units {}", Units::Meters.name())],
        properties,
        values: out,
    }
}

/// Reads back a cloud written by [`scalar_cloud_vertices`].
pub fn parse_scalar_cloud(bytes: &[u8], scalar: &str) -> Result<(Vec<Point3>, Vec<f64>)> {
    let vertices = parse_ply(bytes)?;
    let points = xyz(&vertices)?;
    let values = vertices
        .column(scalar)
        .ok_or_else(|| IoError::malformed(F, format!("missing vertex property {scalar:?}")))?;
    Ok((points, values))
}
