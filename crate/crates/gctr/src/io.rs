//! Point cloud file I/O: PLY (ascii and binary little-endian) and XYZ text.
//!
//! Loading reads vertex positions and ignores every other attribute.
//! Writing emits float64 positions in every format, so PLY and XYZ both
//! round-trip bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    PlyAscii,
    PlyBinaryLe,
    Xyz,
}

impl CloudFormat {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "ply-ascii" => Ok(Self::PlyAscii),
            "ply-binary-le" => Ok(Self::PlyBinaryLe),
            "xyz" => Ok(Self::Xyz),
            other => Err(Error::UnsupportedFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
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
    fn parse(name: &str, line: usize) -> Result<Self> {
        match name {
            "char" | "int8" => Ok(Self::I8),
            "uchar" | "uint8" => Ok(Self::U8),
            "short" | "int16" => Ok(Self::I16),
            "ushort" | "uint16" => Ok(Self::U16),
            "int" | "int32" => Ok(Self::I32),
            "uint" | "uint32" => Ok(Self::U32),
            "float" | "float32" => Ok(Self::F32),
            "double" | "float64" => Ok(Self::F64),
            other => Err(Error::parse_line(line, format!("unknown property type '{other}'"))),
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

    fn is_float(self) -> bool {
        matches!(self, Self::F32 | Self::F64)
    }

    /// Decodes a coordinate; only called for F32/F64 properties.
    fn read_f64(self, bytes: &[u8]) -> f64 {
        match self {
            Self::F32 => f32::from_le_bytes(bytes.try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(bytes.try_into().unwrap()),
            _ => unreachable!("coordinate properties are validated as floats"),
        }
    }

    /// Decodes a list-length prefix; float counts are rejected at header parse.
    fn read_count(self, bytes: &[u8], offset: usize) -> Result<usize> {
        let signed = |v: i64| -> Result<usize> {
            usize::try_from(v).map_err(|_| Error::parse_byte(offset, format!("negative list count {v}")))
        };
        match self {
            Self::I8 => signed(i8::from_le_bytes(bytes.try_into().unwrap()) as i64),
            Self::U8 => Ok(bytes[0] as usize),
            Self::I16 => signed(i16::from_le_bytes(bytes.try_into().unwrap()) as i64),
            Self::U16 => Ok(u16::from_le_bytes(bytes.try_into().unwrap()) as usize),
            Self::I32 => signed(i32::from_le_bytes(bytes.try_into().unwrap()) as i64),
            Self::U32 => Ok(u32::from_le_bytes(bytes.try_into().unwrap()) as usize),
            Self::F32 | Self::F64 => unreachable!("float list counts are rejected at header parse"),
        }
    }
}

#[derive(Debug)]
enum PropertyKind {
    Scalar(ScalarType),
    List { count: ScalarType, item: ScalarType },
}

#[derive(Debug)]
struct Property {
    name: String,
    kind: PropertyKind,
}

#[derive(Debug)]
struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug)]
struct PlyHeader {
    ascii: bool,
    elements: Vec<PlyElement>,
    header_lines: usize,
    body_offset: usize,
}

fn parse_ply_header(bytes: &[u8]) -> Result<PlyHeader> {
    let mut offset = 0usize;
    let mut line_no = 0usize;
    let mut ascii: Option<bool> = None;
    let mut elements: Vec<PlyElement> = Vec::new();
    loop {
        if offset >= bytes.len() {
            return Err(Error::parse_line(line_no, "header ended before end_header"));
        }
        let rest = &bytes[offset..];
        let line_end = rest.iter().position(|&b| b == b'\n').unwrap_or(rest.len());
        let raw = &rest[..line_end];
        offset += (line_end + 1).min(rest.len());
        line_no += 1;
        let line = std::str::from_utf8(raw)
            .map_err(|_| Error::parse_line(line_no, "header is not valid text"))?
            .trim_end_matches('\r')
            .trim();
        if line_no == 1 {
            if line != "ply" {
                return Err(Error::parse_line(1, "missing 'ply' magic"));
            }
            continue;
        }
        if line.is_empty() || line.starts_with("comment") || line.starts_with("obj_info") {
            continue;
        }
        if line == "end_header" {
            break;
        }
        let mut tokens = line.split_whitespace();
        match tokens.next().unwrap() {
            "format" => match tokens.next().unwrap_or("") {
                "ascii" => ascii = Some(true),
                "binary_little_endian" => ascii = Some(false),
                "binary_big_endian" => {
                    return Err(Error::UnsupportedFormat("ply binary_big_endian".into()))
                }
                other => {
                    return Err(Error::parse_line(line_no, format!("unknown ply format '{other}'")))
                }
            },
            "element" => {
                let name = tokens
                    .next()
                    .ok_or_else(|| Error::parse_line(line_no, "element without a name"))?;
                let count: usize = tokens
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| Error::parse_line(line_no, "element without a valid count"))?;
                elements.push(PlyElement { name: name.to_string(), count, properties: Vec::new() });
            }
            "property" => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse_line(line_no, "property outside any element"))?;
                let first = tokens
                    .next()
                    .ok_or_else(|| Error::parse_line(line_no, "property without a type"))?;
                let kind = if first == "list" {
                    let count = ScalarType::parse(tokens.next().unwrap_or(""), line_no)?;
                    if count.is_float() {
                        return Err(Error::parse_line(line_no, "list count must be an integer type"));
                    }
                    let item = ScalarType::parse(tokens.next().unwrap_or(""), line_no)?;
                    PropertyKind::List { count, item }
                } else {
                    PropertyKind::Scalar(ScalarType::parse(first, line_no)?)
                };
                let name = tokens
                    .next()
                    .ok_or_else(|| Error::parse_line(line_no, "property without a name"))?;
                element.properties.push(Property { name: name.to_string(), kind });
            }
            other => {
                return Err(Error::parse_line(line_no, format!("unrecognized header keyword '{other}'")))
            }
        }
    }
    let ascii = ascii.ok_or_else(|| Error::parse_line(line_no, "header has no format line"))?;
    Ok(PlyHeader { ascii, elements, header_lines: line_no, body_offset: offset })
}

struct VertexLayout {
    element_index: usize,
    x: usize,
    y: usize,
    z: usize,
}

fn vertex_layout(header: &PlyHeader) -> Result<VertexLayout> {
    let (element_index, element) = header
        .elements
        .iter()
        .enumerate()
        .find(|(_, e)| e.name == "vertex")
        .ok_or_else(|| Error::Parse {
            location: "header".into(),
            message: "no vertex element".into(),
        })?;
    let coord = |name: &str| -> Result<usize> {
        let (i, p) = element
            .properties
            .iter()
            .enumerate()
            .find(|(_, p)| p.name == name)
            .ok_or_else(|| Error::Parse {
                location: "header".into(),
                message: format!("vertex element lacks property '{name}'"),
            })?;
        match p.kind {
            PropertyKind::Scalar(t) if t.is_float() => Ok(i),
            _ => Err(Error::Parse {
                location: "header".into(),
                message: format!("vertex property '{name}' must be float32 or float64"),
            }),
        }
    };
    Ok(VertexLayout { element_index, x: coord("x")?, y: coord("y")?, z: coord("z")? })
}

fn parse_ply_ascii_body(bytes: &[u8], header: &PlyHeader, layout: &VertexLayout) -> Result<Vec<Point3>> {
    let body = std::str::from_utf8(&bytes[header.body_offset..]).map_err(|_| Error::Parse {
        location: format!("line {}", header.header_lines + 1),
        message: "ascii body is not valid text".into(),
    })?;
    let mut lines = body.lines();
    let mut line_no = header.header_lines;
    let mut points = Vec::new();
    for (ei, element) in header.elements.iter().enumerate() {
        for _ in 0..element.count {
            line_no += 1;
            let line = lines
                .next()
                .ok_or_else(|| Error::parse_line(line_no, "unexpected end of file"))?;
            if ei != layout.element_index {
                continue;
            }
            let mut tokens = line.split_whitespace();
            let mut coords = [0.0f64; 3];
            for (pi, prop) in element.properties.iter().enumerate() {
                match prop.kind {
                    PropertyKind::Scalar(_) => {
                        let tok = tokens.next().ok_or_else(|| {
                            Error::parse_line(line_no, format!("missing value for property '{}'", prop.name))
                        })?;
                        let slot = [layout.x, layout.y, layout.z].iter().position(|&c| c == pi);
                        if let Some(axis) = slot {
                            coords[axis] = tok.parse().map_err(|_| {
                                Error::parse_line(line_no, format!("invalid number '{tok}'"))
                            })?;
                        }
                    }
                    PropertyKind::List { .. } => {
                        let tok = tokens.next().ok_or_else(|| {
                            Error::parse_line(line_no, format!("missing count for list '{}'", prop.name))
                        })?;
                        let n: usize = tok.parse().map_err(|_| {
                            Error::parse_line(line_no, format!("invalid list count '{tok}'"))
                        })?;
                        for _ in 0..n {
                            tokens.next().ok_or_else(|| {
                                Error::parse_line(line_no, "list shorter than its declared count")
                            })?;
                        }
                    }
                }
            }
            points.push(Point3::new(coords[0], coords[1], coords[2]));
        }
    }
    Ok(points)
}

fn take<'a>(bytes: &'a [u8], offset: &mut usize, n: usize) -> Result<&'a [u8]> {
    if offset.checked_add(n).is_none_or(|end| end > bytes.len()) {
        return Err(Error::parse_byte(*offset, "unexpected end of file"));
    }
    let slice = &bytes[*offset..*offset + n];
    *offset += n;
    Ok(slice)
}

fn parse_ply_binary_body(bytes: &[u8], header: &PlyHeader, layout: &VertexLayout) -> Result<Vec<Point3>> {
    let mut offset = header.body_offset;
    let mut points = Vec::new();
    for (ei, element) in header.elements.iter().enumerate() {
        let is_vertex = ei == layout.element_index;
        for _ in 0..element.count {
            let mut coords = [0.0f64; 3];
            for (pi, prop) in element.properties.iter().enumerate() {
                match prop.kind {
                    PropertyKind::Scalar(t) => {
                        let raw = take(bytes, &mut offset, t.size())?;
                        if is_vertex {
                            let slot = [layout.x, layout.y, layout.z].iter().position(|&c| c == pi);
                            if let Some(axis) = slot {
                                coords[axis] = t.read_f64(raw);
                            }
                        }
                    }
                    PropertyKind::List { count, item } => {
                        let at = offset;
                        let raw = take(bytes, &mut offset, count.size())?;
                        let n = count.read_count(raw, at)?;
                        let payload = n
                            .checked_mul(item.size())
                            .ok_or_else(|| Error::parse_byte(at, "list count overflows"))?;
                        take(bytes, &mut offset, payload)?;
                    }
                }
            }
            if is_vertex {
                points.push(Point3::new(coords[0], coords[1], coords[2]));
            }
        }
    }
    Ok(points)
}

fn parse_xyz(text: &str) -> Result<Vec<Point3>> {
    let mut points = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let mut coords = [0.0f64; 3];
        for c in coords.iter_mut() {
            let tok = tokens
                .next()
                .ok_or_else(|| Error::parse_line(line_no, "expected three coordinates"))?;
            *c = tok
                .parse()
                .map_err(|_| Error::parse_line(line_no, format!("invalid number '{tok}'")))?;
        }
        points.push(Point3::new(coords[0], coords[1], coords[2]));
    }
    Ok(points)
}

/// Guesses the format from the extension, sniffing PLY headers to pick
/// the encoding.
pub fn detect_format(path: impl AsRef<Path>) -> Result<CloudFormat> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|s| s.to_ascii_lowercase());
    match ext.as_deref() {
        Some("ply") => {
            let mut head = [0u8; 512];
            let mut file = fs::File::open(path)?;
            let n = file.read(&mut head)?;
            let text = String::from_utf8_lossy(&head[..n]);
            for line in text.lines() {
                let line = line.trim();
                if let Some(kind) = line.strip_prefix("format ") {
                    return match kind.split_whitespace().next().unwrap_or("") {
                        "ascii" => Ok(CloudFormat::PlyAscii),
                        "binary_little_endian" => Ok(CloudFormat::PlyBinaryLe),
                        other => Err(Error::UnsupportedFormat(format!("ply {other}"))),
                    };
                }
                if line == "end_header" {
                    break;
                }
            }
            Err(Error::Parse { location: "header".into(), message: "no format line".into() })
        }
        Some("xyz") | Some("txt") => Ok(CloudFormat::Xyz),
        _ => Err(Error::UnsupportedFormat(path.display().to_string())),
    }
}

pub fn load_cloud(path: impl AsRef<Path>, format: CloudFormat) -> Result<PointCloud> {
    let path = path.as_ref();
    let points = match format {
        CloudFormat::Xyz => parse_xyz(&fs::read_to_string(path)?)?,
        CloudFormat::PlyAscii | CloudFormat::PlyBinaryLe => {
            let bytes = fs::read(path)?;
            let header = parse_ply_header(&bytes)?;
            let want_ascii = format == CloudFormat::PlyAscii;
            if header.ascii != want_ascii {
                let (found, wanted) = if header.ascii {
                    ("ascii", "binary_little_endian")
                } else {
                    ("binary_little_endian", "ascii")
                };
                return Err(Error::Parse {
                    location: "header".into(),
                    message: format!("file is {found} but {wanted} was requested"),
                });
            }
            let layout = vertex_layout(&header)?;
            if header.ascii {
                parse_ply_ascii_body(&bytes, &header, &layout)?
            } else {
                parse_ply_binary_body(&bytes, &header, &layout)?
            }
        }
    };
    Ok(PointCloud::new(points)?.with_source(path.display().to_string()))
}

/// Loads a cloud, inferring the format from extension and header.
pub fn load_cloud_auto(path: impl AsRef<Path>) -> Result<PointCloud> {
    let format = detect_format(&path)?;
    load_cloud(path, format)
}

pub fn write_cloud(cloud: &PointCloud, path: impl AsRef<Path>, format: CloudFormat) -> Result<()> {
    let data: Vec<u8> = match format {
        CloudFormat::Xyz => {
            let mut out = String::new();
            for p in &cloud.points {
                writeln!(out, "{} {} {}", p.x, p.y, p.z).expect("string write");
            }
            out.into_bytes()
        }
        CloudFormat::PlyAscii => {
            let mut out = ply_header_text("ascii", cloud.len());
            for p in &cloud.points {
                writeln!(out, "{} {} {}", p.x, p.y, p.z).expect("string write");
            }
            out.into_bytes()
        }
        CloudFormat::PlyBinaryLe => {
            let mut out = ply_header_text("binary_little_endian", cloud.len()).into_bytes();
            out.reserve(cloud.len() * 24);
            for p in &cloud.points {
                out.extend_from_slice(&p.x.to_le_bytes());
                out.extend_from_slice(&p.y.to_le_bytes());
                out.extend_from_slice(&p.z.to_le_bytes());
            }
            out
        }
    };
    fs::write(path, data)?;
    Ok(())
}

fn ply_header_text(format: &str, count: usize) -> String {
    format!(
        "ply\nformat {format} 1.0\nelement vertex {count}\n\
         property double x\nproperty double y\nproperty double z\nend_header\n"
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use tempfile::tempdir;

    fn random_f32_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
        let points = (0..n)
            .map(|_| {
                Point3::new(
                    rng.gen_range(-10.0..10.0f64) as f32 as f64,
                    rng.gen_range(-10.0..10.0f64) as f32 as f64,
                    rng.gen_range(-10.0..10.0f64) as f32 as f64,
                )
            })
            .collect();
        PointCloud::new(points).unwrap()
    }

    #[test]
    fn three_vertex_ascii_fixture_parses_exactly() {
        let text = "ply\nformat ascii 1.0\ncomment fixture\n\
                    element vertex 3\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\n\
                    element face 1\nproperty list uchar int vertex_indices\n\
                    end_header\n\
                    1 2 3 255\n4.5 5 6 128\n-7 0.8 9.25 0\n\
                    3 0 1 2\n";
        let dir = tempdir().unwrap();
        let path = dir.path().join("fixture.ply");
        fs::write(&path, text).unwrap();
        let cloud = load_cloud(&path, CloudFormat::PlyAscii).unwrap();
        assert_eq!(cloud.points, vec![
            Point3::new(1.0, 2.0, 3.0),
            Point3::new(4.5, 5.0, 6.0),
            Point3::new(-7.0, 0.8, 9.25),
        ]);
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cloud.ply");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let cloud = random_f32_cloud(&mut rng, 50);
            write_cloud(&cloud, &path, CloudFormat::PlyBinaryLe).unwrap();
            let loaded = load_cloud(&path, CloudFormat::PlyBinaryLe).unwrap();
            assert_eq!(loaded.points, cloud.points);
        }
    }

    #[test]
    fn ascii_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cloud.ply");
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let points: Vec<Point3> = (0..50)
            .map(|_| {
                Point3::new(
                    rng.gen_range(-10.0..10.0),
                    rng.gen_range(-10.0..10.0),
                    rng.gen_range(-10.0..10.0),
                )
            })
            .collect();
        let cloud = PointCloud::new(points).unwrap();
        write_cloud(&cloud, &path, CloudFormat::PlyAscii).unwrap();
        let loaded = load_cloud(&path, CloudFormat::PlyAscii).unwrap();
        assert_eq!(loaded.points, cloud.points);
    }

    #[test]
    fn xyz_round_trip_is_bit_exact_and_reads_comments() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cloud.xyz");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cloud = random_f32_cloud(&mut rng, 40);
        write_cloud(&cloud, &path, CloudFormat::Xyz).unwrap();
        let loaded = load_cloud(&path, CloudFormat::Xyz).unwrap();
        assert_eq!(loaded.points, cloud.points);

        let annotated = "# header comment\n1 2 3 # trailing note\n\n4 5 6 0.1 0.2 extra columns\n";
        fs::write(&path, annotated).unwrap();
        let loaded = load_cloud(&path, CloudFormat::Xyz).unwrap();
        assert_eq!(loaded.points, vec![Point3::new(1.0, 2.0, 3.0), Point3::new(4.0, 5.0, 6.0)]);
    }

    #[test]
    fn truncated_binary_names_the_byte_offset() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cloud.ply");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cloud = random_f32_cloud(&mut rng, 10);
        write_cloud(&cloud, &path, CloudFormat::PlyBinaryLe).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 5);
        fs::write(&path, bytes).unwrap();
        match load_cloud(&path, CloudFormat::PlyBinaryLe) {
            Err(Error::Parse { location, .. }) => assert!(location.starts_with("byte "), "{location}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_files_error_instead_of_crashing() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.ply");
        let cases: Vec<(&str, &str)> = vec![
            ("not a ply\n", "missing magic"),
            ("ply\nformat ascii 1.0\nelement vertex 1\nproperty int x\nproperty float y\nproperty float z\nend_header\n1 2 3\n", "integer x"),
            ("ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n", "missing row"),
            ("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 oops 3\n", "bad token"),
            ("ply\nformat ascii 1.0\nelement cell 1\nproperty float x\nend_header\n0\n", "no vertex element"),
            ("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\n", "no end_header"),
            ("ply\nproperty float x\nend_header\n", "property before element"),
            ("ply\nformat binary_big_endian 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n", "big endian"),
            ("ply\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n", "no format line"),
        ];
        for (text, label) in cases {
            fs::write(&path, text).unwrap();
            let ascii = load_cloud(&path, CloudFormat::PlyAscii);
            assert!(ascii.is_err(), "case '{label}' should fail");
            assert!(
                matches!(ascii, Err(Error::Parse { .. } | Error::UnsupportedFormat(_))),
                "case '{label}' gave an unexpected error kind"
            );
        }
    }

    #[test]
    fn format_detection_sniffs_ply_headers() {
        let dir = tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cloud = random_f32_cloud(&mut rng, 10);

        let ascii_path = dir.path().join("a.ply");
        write_cloud(&cloud, &ascii_path, CloudFormat::PlyAscii).unwrap();
        assert_eq!(detect_format(&ascii_path).unwrap(), CloudFormat::PlyAscii);

        let bin_path = dir.path().join("b.ply");
        write_cloud(&cloud, &bin_path, CloudFormat::PlyBinaryLe).unwrap();
        assert_eq!(detect_format(&bin_path).unwrap(), CloudFormat::PlyBinaryLe);
        assert_eq!(load_cloud_auto(&bin_path).unwrap().points, cloud.points);

        let xyz_path = dir.path().join("c.xyz");
        write_cloud(&cloud, &xyz_path, CloudFormat::Xyz).unwrap();
        assert_eq!(detect_format(&xyz_path).unwrap(), CloudFormat::Xyz);

        assert!(matches!(detect_format("cloud.obj"), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn requesting_the_wrong_ply_encoding_fails() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bin.ply");
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cloud = random_f32_cloud(&mut rng, 10);
        write_cloud(&cloud, &path, CloudFormat::PlyBinaryLe).unwrap();
        assert!(matches!(load_cloud(&path, CloudFormat::PlyAscii), Err(Error::Parse { .. })));
    }

    #[test]
    fn double_precision_vertices_load() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("d.ply");
        let mut body = Vec::new();
        for v in [1.5f64, -2.25, 3.125, 0.0625, 7.0, -8.5] {
            body.extend_from_slice(&v.to_le_bytes());
        }
        let header = "ply\nformat binary_little_endian 1.0\nelement vertex 2\n\
                      property double x\nproperty double y\nproperty double z\nend_header\n";
        let mut bytes = header.as_bytes().to_vec();
        bytes.extend_from_slice(&body);
        fs::write(&path, bytes).unwrap();
        let cloud = load_cloud(&path, CloudFormat::PlyBinaryLe).unwrap();
        assert_eq!(cloud.points, vec![Point3::new(1.5, -2.25, 3.125), Point3::new(0.0625, 7.0, -8.5)]);
    }

    #[test]
    fn writing_to_an_empty_path_is_an_io_error() {
        let cloud = PointCloud::new(vec![Point3::new(0.0, 0.0, 0.0)]).unwrap();
        assert!(matches!(write_cloud(&cloud, "", CloudFormat::Xyz), Err(Error::Io(_))));
    }

    #[test]
    fn unknown_format_name_is_rejected() {
        assert!(CloudFormat::from_name("ply-ascii").is_ok());
        assert!(matches!(CloudFormat::from_name("obj"), Err(Error::UnsupportedFormat(_))));
    }
}
