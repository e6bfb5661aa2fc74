//! Reading and writing colored point clouds as PLY.
//!
//! Reads `ascii 1.0` and `binary_little_endian 1.0` files. The `vertex`
//! element must carry `x y z red green blue`; an `int label` property is
//! picked up when present. Other elements (faces, etc.) are skipped.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
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
    fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            other => return Err(Error::Ply(format!("unknown property type `{other}`"))),
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, Scalar::F32 | Scalar::F64)
    }

    fn read_le(self, bytes: &[u8]) -> f64 {
        match self {
            Scalar::I8 => bytes[0] as i8 as f64,
            Scalar::U8 => bytes[0] as f64,
            Scalar::I16 => i16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(bytes[..8].try_into().unwrap()),
        }
    }
}

#[derive(Clone, Debug)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug)]
struct Header {
    format: Format,
    elements: Vec<Element>,
}

fn read_header<R: BufRead>(reader: &mut R) -> Result<Header> {
    let mut line = String::new();
    let next_line = |reader: &mut R, line: &mut String| -> Result<bool> {
        line.clear();
        let n = reader
            .read_line(line)
            .map_err(|e| Error::Ply(format!("reading header: {e}")))?;
        Ok(n > 0)
    };

    if !next_line(reader, &mut line)? || line.trim_end() != "ply" {
        return Err(Error::Ply("missing `ply` magic".into()));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        if !next_line(reader, &mut line)? {
            return Err(Error::Ply("header ended before `end_header`".into()));
        }
        let mut words = line.split_whitespace();
        match words.next() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                let kind = words.next().unwrap_or_default();
                let version = words.next().unwrap_or_default();
                if version != "1.0" {
                    return Err(Error::Ply(format!("unsupported version `{version}`")));
                }
                format = Some(match kind {
                    "ascii" => Format::Ascii,
                    "binary_little_endian" => Format::BinaryLittleEndian,
                    other => return Err(Error::Ply(format!("unsupported format `{other}`"))),
                });
            }
            Some("element") => {
                let name = words
                    .next()
                    .ok_or_else(|| Error::Ply("element without a name".into()))?;
                let count = words
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| Error::Ply(format!("element `{name}` has a bad count")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| Error::Ply("property before any element".into()))?;
                let first = words
                    .next()
                    .ok_or_else(|| Error::Ply("empty property line".into()))?;
                let property = if first == "list" {
                    let count = Scalar::parse(words.next().unwrap_or_default())?;
                    let item = Scalar::parse(words.next().unwrap_or_default())?;
                    Property::List { count, item }
                } else {
                    let ty = Scalar::parse(first)?;
                    let name = words
                        .next()
                        .ok_or_else(|| Error::Ply("property without a name".into()))?;
                    Property::Scalar {
                        name: name.to_string(),
                        ty,
                    }
                };
                element.properties.push(property);
            }
            Some("end_header") => break,
            Some(other) => return Err(Error::Ply(format!("unexpected header keyword `{other}`"))),
        }
    }
    let format = format.ok_or_else(|| Error::Ply("header has no format line".into()))?;
    Ok(Header { format, elements })
}

/// Column positions of the vertex properties we consume.
struct VertexLayout {
    xyz: [usize; 3],
    rgb: [usize; 3],
    rgb_divisor: [f64; 3],
    label: Option<usize>,
}

fn vertex_layout(element: &Element) -> Result<VertexLayout> {
    let find = |name: &str| -> Option<(usize, Scalar)> {
        element.properties.iter().enumerate().find_map(|(i, p)| match p {
            Property::Scalar { name: n, ty } if n == name => Some((i, *ty)),
            _ => None,
        })
    };
    let mut xyz = [0; 3];
    for (slot, name) in xyz.iter_mut().zip(["x", "y", "z"]) {
        *slot = find(name)
            .ok_or_else(|| Error::Ply(format!("missing coordinate property `{name}`")))?
            .0;
    }
    let mut rgb = [0; 3];
    let mut rgb_divisor = [1.0; 3];
    for ((slot, scale), name) in rgb.iter_mut().zip(rgb_divisor.iter_mut()).zip(["red", "green", "blue"]) {
        let (col, ty) = find(name).ok_or_else(|| {
            Error::Ply(format!("missing color property `{name}`"))
        })?;
        *slot = col;
        *scale = match ty {
            Scalar::U8 => 255.0,
            Scalar::U16 => 65535.0,
            t if t.is_integer() => {
                return Err(Error::Ply(format!("unsupported color type for `{name}`")))
            }
            _ => 1.0,
        };
    }
    let label = find("label").map(|(col, _)| col);
    Ok(VertexLayout {
        xyz,
        rgb,
        rgb_divisor,
        label,
    })
}

struct VertexSink {
    layout: VertexLayout,
    positions: Vec<Vec3>,
    colors: Vec<Vec3>,
    labels: Option<Vec<i64>>,
}

impl VertexSink {
    fn new(layout: VertexLayout, count: usize) -> Self {
        let labels = layout.label.map(|_| Vec::with_capacity(count));
        VertexSink {
            layout,
            positions: Vec::with_capacity(count),
            colors: Vec::with_capacity(count),
            labels,
        }
    }

    fn push(&mut self, row: &[f64]) -> Result<()> {
        let l = &self.layout;
        self.positions
            .push(Vec3::new(row[l.xyz[0]], row[l.xyz[1]], row[l.xyz[2]]));
        let color = Vec3::new(
            row[l.rgb[0]] / l.rgb_divisor[0],
            row[l.rgb[1]] / l.rgb_divisor[1],
            row[l.rgb[2]] / l.rgb_divisor[2],
        );
        if !color.iter().all(|c| (0.0..=1.0).contains(c)) {
            return Err(Error::Ply(format!(
                "vertex {} has a color outside the valid range",
                self.positions.len() - 1
            )));
        }
        self.colors.push(color);
        if let (Some(labels), Some(col)) = (self.labels.as_mut(), l.label) {
            labels.push(row[col] as i64);
        }
        Ok(())
    }
}

fn read_ascii<R: BufRead>(reader: &mut R, header: &Header, sink: &mut VertexSink) -> Result<()> {
    let mut tokens: Vec<String> = Vec::new();
    let mut cursor = 0usize;
    let mut line = String::new();
    let mut next_token = |reader: &mut R| -> Result<Option<String>> {
        loop {
            if cursor < tokens.len() {
                cursor += 1;
                return Ok(Some(std::mem::take(&mut tokens[cursor - 1])));
            }
            line.clear();
            let n = reader
                .read_line(&mut line)
                .map_err(|e| Error::Ply(format!("reading body: {e}")))?;
            if n == 0 {
                return Ok(None);
            }
            tokens = line.split_whitespace().map(str::to_string).collect();
            cursor = 0;
        }
    };
    let parse = |tok: Option<String>, what: &str| -> Result<f64> {
        let tok = tok.ok_or_else(|| Error::Ply(format!("element count mismatch: file ended inside `{what}`")))?;
        tok.parse::<f64>()
            .map_err(|_| Error::Ply(format!("bad number `{tok}` in `{what}`")))
    };
    for element in &header.elements {
        let is_vertex = element.name == "vertex";
        let mut row = vec![0.0; element.properties.len()];
        for _ in 0..element.count {
            for (i, property) in element.properties.iter().enumerate() {
                match property {
                    Property::Scalar { .. } => row[i] = parse(next_token(reader)?, &element.name)?,
                    Property::List { .. } => {
                        let len = parse(next_token(reader)?, &element.name)? as usize;
                        for _ in 0..len {
                            parse(next_token(reader)?, &element.name)?;
                        }
                    }
                }
            }
            if is_vertex {
                sink.push(&row)?;
            }
        }
        if is_vertex {
            return Ok(());
        }
    }
    Ok(())
}

fn read_binary<R: Read>(reader: &mut R, header: &Header, sink: &mut VertexSink) -> Result<()> {
    let truncated = |name: &str| Error::Ply(format!("element count mismatch: file ended inside `{name}`"));
    for element in &header.elements {
        let is_vertex = element.name == "vertex";
        let fixed = element
            .properties
            .iter()
            .all(|p| matches!(p, Property::Scalar { .. }));
        let mut row = vec![0.0; element.properties.len()];
        if fixed {
            let stride: usize = element
                .properties
                .iter()
                .map(|p| match p {
                    Property::Scalar { ty, .. } => ty.size(),
                    Property::List { .. } => unreachable!(),
                })
                .sum();
            let mut buf = vec![0u8; stride];
            for _ in 0..element.count {
                reader
                    .read_exact(&mut buf)
                    .map_err(|_| truncated(&element.name))?;
                if is_vertex {
                    let mut offset = 0;
                    for (i, p) in element.properties.iter().enumerate() {
                        if let Property::Scalar { ty, .. } = p {
                            row[i] = ty.read_le(&buf[offset..]);
                            offset += ty.size();
                        }
                    }
                    sink.push(&row)?;
                }
            }
        } else {
            let mut buf = [0u8; 8];
            for _ in 0..element.count {
                for (i, p) in element.properties.iter().enumerate() {
                    match p {
                        Property::Scalar { ty, .. } => {
                            reader
                                .read_exact(&mut buf[..ty.size()])
                                .map_err(|_| truncated(&element.name))?;
                            row[i] = ty.read_le(&buf);
                        }
                        Property::List { count, item } => {
                            reader
                                .read_exact(&mut buf[..count.size()])
                                .map_err(|_| truncated(&element.name))?;
                            let len = count.read_le(&buf) as usize;
                            let mut skip = vec![0u8; len * item.size()];
                            reader
                                .read_exact(&mut skip)
                                .map_err(|_| truncated(&element.name))?;
                        }
                    }
                }
                if is_vertex {
                    sink.push(&row)?;
                }
            }
        }
        if is_vertex {
            return Ok(());
        }
    }
    Ok(())
}

/// Parse a PLY point cloud from any buffered reader.
pub fn read_ply<R: BufRead>(mut reader: R) -> Result<PointCloud> {
    let header = read_header(&mut reader)?;
    let vertex = header
        .elements
        .iter()
        .find(|e| e.name == "vertex")
        .ok_or_else(|| Error::Ply("no `vertex` element".into()))?;
    let layout = vertex_layout(vertex)?;
    if vertex.count == 0 {
        return Err(Error::Ply("empty cloud".into()));
    }
    let mut sink = VertexSink::new(layout, vertex.count);
    match header.format {
        Format::Ascii => read_ascii(&mut reader, &header, &mut sink)?,
        Format::BinaryLittleEndian => read_binary(&mut reader, &header, &mut sink)?,
    }
    if sink.positions.len() != vertex.count {
        return Err(Error::Ply(format!(
            "element count mismatch: header declares {} vertices, found {}",
            vertex.count,
            sink.positions.len()
        )));
    }
    let cloud = PointCloud {
        positions: sink.positions,
        colors: sink.colors,
        normals: None,
        labels: sink.labels,
    };
    cloud.validate().map_err(|e| Error::Ply(e.to_string()))?;
    Ok(cloud)
}

pub fn load_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_ply(BufReader::new(file)).map_err(|e| match e {
        Error::Ply(msg) => Error::Ply(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Quantize a `[0,1]` color channel to 8 bits.
pub fn color_to_u8(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Write a binary little-endian PLY with `float x y z`, `uchar red green blue`
/// and, when `labels` is given, `int label`.
pub fn write_ply<W: Write>(
    mut out: W,
    positions: &[Vec3],
    colors: &[[u8; 3]],
    labels: Option<&[i64]>,
) -> Result<()> {
    let n = positions.len();
    if colors.len() != n || labels.is_some_and(|l| l.len() != n) {
        return Err(Error::Dimension("PLY columns have different lengths".into()));
    }
    let wrap = |e: std::io::Error| Error::Ply(format!("writing: {e}"));
    let mut header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {n}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\n"
    );
    if labels.is_some() {
        header.push_str("property int label\n");
    }
    header.push_str("end_header\n");
    out.write_all(header.as_bytes()).map_err(wrap)?;
    let mut record = Vec::with_capacity(19);
    for i in 0..n {
        record.clear();
        for c in positions[i].iter() {
            record.extend_from_slice(&(*c as f32).to_le_bytes());
        }
        record.extend_from_slice(&colors[i]);
        if let Some(labels) = labels {
            let label = i32::try_from(labels[i])
                .map_err(|_| Error::Labels(format!("label {} does not fit in int", labels[i])))?;
            record.extend_from_slice(&label.to_le_bytes());
        }
        out.write_all(&record).map_err(wrap)?;
    }
    out.flush().map_err(wrap)
}

pub fn save_ply(
    path: impl AsRef<Path>,
    positions: &[Vec3],
    colors: &[[u8; 3]],
    labels: Option<&[i64]>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_ply(BufWriter::new(file), positions, colors, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<PointCloud> {
        read_ply(text.as_bytes())
    }

    const ONE_RED: &str = "ply\nformat ascii 1.0\nelement vertex 1\n\
        property float x\nproperty float y\nproperty float z\n\
        property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n\
        0 0 0 255 0 0\n";

    #[test]
    fn ascii_single_vertex() {
        let cloud = parse(ONE_RED).unwrap();
        assert_eq!(cloud.len(), 1);
        assert_eq!(cloud.colors[0], Vec3::new(1.0, 0.0, 0.0));
        assert!(cloud.labels.is_none());
    }

    #[test]
    fn binary_zero_vertices_is_empty_cloud() {
        let text = "ply\nformat binary_little_endian 1.0\nelement vertex 0\n\
            property float x\nproperty float y\nproperty float z\n\
            property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
        let err = parse(text).unwrap_err();
        assert!(err.to_string().contains("empty cloud"), "{err}");
    }

    #[test]
    fn missing_blue() {
        let text = "ply\nformat ascii 1.0\nelement vertex 1\n\
            property float x\nproperty float y\nproperty float z\n\
            property uchar red\nproperty uchar green\nend_header\n0 0 0 1 2\n";
        let err = parse(text).unwrap_err();
        assert!(err.to_string().contains("missing color property"), "{err}");
    }

    #[test]
    fn missing_coordinate() {
        let text = "ply\nformat ascii 1.0\nelement vertex 1\n\
            property float x\nproperty float y\n\
            property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n0 0 1 2 3\n";
        assert!(parse(text).is_err());
    }

    #[test]
    fn count_mismatch() {
        let text = ONE_RED.replace("vertex 1", "vertex 2");
        let err = parse(&text).unwrap_err();
        assert!(err.to_string().contains("count mismatch"), "{err}");
    }

    #[test]
    fn malformed_header() {
        assert!(parse("plx\n").is_err());
        assert!(parse("ply\nformat ascii 1.0\nelement vertex 1\n").is_err());
        assert!(parse("ply\nformat binary_big_endian 1.0\nend_header\n").is_err());
    }

    #[test]
    fn ascii_with_labels_and_faces() {
        let text = "ply\nformat ascii 1.0\ncomment test\nelement vertex 3\n\
            property float x\nproperty float y\nproperty float z\n\
            property uchar red\nproperty uchar green\nproperty uchar blue\nproperty uchar alpha\n\
            property int label\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n\
            0 0 0 0 0 0 255 -1\n1 0 0 51 102 204 255 4\n0 1 0 255 255 255 255 4\n3 0 1 2\n";
        let cloud = parse(text).unwrap();
        assert_eq!(cloud.len(), 3);
        assert_eq!(cloud.labels.as_deref(), Some(&[-1, 4, 4][..]));
        assert!((cloud.colors[1] - Vec3::new(0.2, 0.4, 0.8)).norm() < 1e-12);
    }

    #[test]
    fn binary_round_trip() {
        let positions = vec![Vec3::new(0.5, -1.25, 3.0), Vec3::new(1.0, 2.0, 3.0)];
        let colors = vec![[255, 0, 10], [1, 2, 3]];
        let labels = vec![7, -1];
        let mut buf = Vec::new();
        write_ply(&mut buf, &positions, &colors, Some(&labels)).unwrap();
        let cloud = read_ply(&buf[..]).unwrap();
        assert_eq!(cloud.positions, positions);
        assert_eq!(cloud.labels, Some(labels));
        let back: Vec<[u8; 3]> = cloud
            .colors
            .iter()
            .map(|c| [color_to_u8(c.x), color_to_u8(c.y), color_to_u8(c.z)])
            .collect();
        assert_eq!(back, colors);
    }

    #[test]
    fn binary_truncated_body() {
        let positions = vec![Vec3::new(0.0, 0.0, 0.0); 4];
        let colors = vec![[0, 0, 0]; 4];
        let mut buf = Vec::new();
        write_ply(&mut buf, &positions, &colors, None).unwrap();
        buf.truncate(buf.len() - 5);
        let err = read_ply(&buf[..]).unwrap_err();
        assert!(err.to_string().contains("count mismatch"), "{err}");
    }
}
