use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use nalgebra::{Point3, Vector3};

use super::{MeshError, TriangleMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Ply,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "obj" => Some(Self::Obj),
            "ply" => Some(Self::Ply),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LoadReport {
    pub vertices: usize,
    pub faces: usize,
    pub degenerate_faces: usize,
}

/// Reads an indexed triangle mesh and multiplies every coordinate by `unit_scale`.
pub fn load_mesh(
    path: &Path,
    format: MeshFormat,
    unit_scale: f64,
) -> Result<(TriangleMesh, LoadReport), MeshError> {
    let bytes = fs::read(path)
        .map_err(|e| MeshError::Parse(format!("cannot read {}: {e}", path.display())))?;
    let (mut vertices, faces) = match format {
        MeshFormat::Obj => parse_obj(&bytes),
        MeshFormat::Ply => parse_ply(&bytes),
    }
    .map_err(|msg| MeshError::Parse(format!("{}: {msg}", path.display())))?;
    if unit_scale != 1.0 {
        for v in &mut vertices {
            *v *= unit_scale;
        }
    }
    let mesh = TriangleMesh::from_indexed(vertices, faces)?;
    let report = LoadReport {
        vertices: mesh.vertices().len(),
        faces: mesh.faces().len(),
        degenerate_faces: mesh.degenerate_dropped(),
    };
    Ok((mesh, report))
}

type Parsed = (Vec<Point3<f64>>, Vec<[usize; 3]>);

fn parse_obj(bytes: &[u8]) -> Result<Parsed, String> {
    let text = std::str::from_utf8(bytes).map_err(|_| "not valid UTF-8".to_string())?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<f64> = tokens
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| format!("line {}: bad vertex: {e}", lineno + 1))?;
                if coords.len() != 3 {
                    return Err(format!("line {}: vertex needs 3 coordinates", lineno + 1));
                }
                vertices.push(Point3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = tokens
                    .map(|t| obj_index(t, vertices.len()))
                    .collect::<Result<_, _>>()
                    .map_err(|e| format!("line {}: {e}", lineno + 1))?;
                if idx.len() != 3 {
                    return Err(format!(
                        "line {}: only triangle faces are supported, got {} vertices",
                        lineno + 1,
                        idx.len()
                    ));
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

/// Resolves `i`, `i/t`, `i//n`, `i/t/n` and negative (relative) OBJ indices to 0-based.
fn obj_index(token: &str, seen: usize) -> Result<usize, String> {
    let head = token.split('/').next().unwrap_or("");
    let i: i64 = head.parse().map_err(|_| format!("bad face index `{token}`"))?;
    let resolved = match i {
        0 => return Err("face index 0 is invalid in OBJ".into()),
        i if i > 0 => i - 1,
        i => seen as i64 + i,
    };
    if resolved < 0 {
        return Err(format!("face index `{token}` out of range"));
    }
    Ok(resolved as usize)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Encoding {
    Ascii,
    LittleEndian,
    BigEndian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
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
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
    encoding: Encoding,
    tokens: std::vec::IntoIter<&'a str>,
}

impl Cursor<'_> {
    fn read(&mut self, ty: Scalar) -> Result<f64, String> {
        if self.encoding == Encoding::Ascii {
            let tok = self.tokens.next().ok_or("unexpected end of PLY body")?;
            return tok.parse::<f64>().map_err(|e| format!("bad PLY value `{tok}`: {e}"));
        }
        let n = ty.size();
        let raw = self
            .data
            .get(self.pos..self.pos + n)
            .ok_or("unexpected end of binary PLY body")?;
        self.pos += n;
        let mut buf = [0u8; 8];
        buf[..n].copy_from_slice(raw);
        if self.encoding == Encoding::BigEndian {
            buf[..n].reverse();
        }
        Ok(match ty {
            Scalar::I8 => buf[0] as i8 as f64,
            Scalar::U8 => buf[0] as f64,
            Scalar::I16 => i16::from_le_bytes([buf[0], buf[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([buf[0], buf[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(buf[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(buf[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(buf[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(buf),
        })
    }
}

fn parse_ply(bytes: &[u8]) -> Result<Parsed, String> {
    const END: &[u8] = b"end_header";
    let header_end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or("missing end_header")?;
    let mut body_start = header_end + END.len();
    while body_start < bytes.len() && bytes[body_start] != b'\n' {
        body_start += 1;
    }
    body_start += 1;
    let header = std::str::from_utf8(&bytes[..header_end]).map_err(|_| "header is not ASCII")?;

    let mut lines = header.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err("missing `ply` magic".into());
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let t: Vec<&str> = line.split_whitespace().collect();
        match t.as_slice() {
            ["format", fmt, _] => {
                encoding = Some(match *fmt {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::LittleEndian,
                    "binary_big_endian" => Encoding::BigEndian,
                    other => return Err(format!("unknown PLY format `{other}`")),
                })
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| format!("bad element count `{count}`"))?,
                properties: Vec::new(),
            }),
            ["property", "list", count_ty, item_ty, name] => {
                let el = elements.last_mut().ok_or("property before element")?;
                let c = Scalar::parse(count_ty).ok_or(format!("unknown type `{count_ty}`"))?;
                let i = Scalar::parse(item_ty).ok_or(format!("unknown type `{item_ty}`"))?;
                el.properties.push(Property::List(name.to_string(), c, i));
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or("property before element")?;
                let s = Scalar::parse(ty).ok_or(format!("unknown type `{ty}`"))?;
                el.properties.push(Property::Scalar(name.to_string(), s));
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            _ => return Err(format!("unrecognized header line `{line}`")),
        }
    }
    let encoding = encoding.ok_or("missing format line")?;

    let body = &bytes[body_start.min(bytes.len())..];
    let tokens: Vec<&str> = if encoding == Encoding::Ascii {
        std::str::from_utf8(body)
            .map_err(|_| "ASCII body is not UTF-8")?
            .split_whitespace()
            .collect()
    } else {
        Vec::new()
    };
    let mut cur = Cursor { data: body, pos: 0, encoding, tokens: tokens.into_iter() };

    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for el in &elements {
        let axis = |n: &str| {
            el.properties
                .iter()
                .position(|p| matches!(p, Property::Scalar(name, _) if name == n))
        };
        let xyz = [axis("x"), axis("y"), axis("z")];
        if el.name == "vertex" && xyz.iter().any(Option::is_none) {
            return Err("vertex element lacks x/y/z".into());
        }
        for _ in 0..el.count {
            let mut scalars = vec![0.0; el.properties.len()];
            let mut indices: Option<Vec<usize>> = None;
            for (pi, prop) in el.properties.iter().enumerate() {
                match prop {
                    Property::Scalar(_, ty) => scalars[pi] = cur.read(*ty)?,
                    Property::List(name, count_ty, item_ty) => {
                        let n = cur.read(*count_ty)? as usize;
                        let items: Vec<f64> =
                            (0..n).map(|_| cur.read(*item_ty)).collect::<Result<_, _>>()?;
                        if name == "vertex_indices" || name == "vertex_index" {
                            indices = Some(items.into_iter().map(|v| v as usize).collect());
                        }
                    }
                }
            }
            match el.name.as_str() {
                "vertex" => {
                    let [x, y, z] = xyz.map(|i| scalars[i.unwrap()]);
                    vertices.push(Point3::new(x, y, z));
                }
                "face" => {
                    let idx = indices.ok_or("face element lacks vertex_indices")?;
                    if idx.len() != 3 {
                        return Err(format!(
                            "only triangle faces are supported, got {} vertices",
                            idx.len()
                        ));
                    }
                    faces.push([idx[0], idx[1], idx[2]]);
                }
                _ => {}
            }
        }
    }
    Ok((vertices, faces))
}

/// Writes vertices and faces as OBJ with 1-based indices.
pub fn write_obj(mesh: &TriangleMesh, path: &Path) -> io::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for v in mesh.vertices() {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for f in mesh.faces() {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    out.flush()
}

/// Writes an ASCII PLY with per-vertex normals.
pub fn write_ply(mesh: &TriangleMesh, path: &Path) -> io::Result<()> {
    let mut s = String::new();
    let _ = write!(
        s,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
         property double nx\nproperty double ny\nproperty double nz\nelement face {}\n\
         property list uchar int vertex_indices\nend_header\n",
        mesh.vertices().len(),
        mesh.faces().len()
    );
    for (v, n) in mesh.vertices().iter().zip(mesh.vertex_normals()) {
        let _ = writeln!(s, "{} {} {} {} {} {}", v.x, v.y, v.z, n.x, n.y, n.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    fs::write(path, s)
}

/// Writes an ASCII point cloud PLY, optionally with normals.
pub fn write_ply_points(
    points: &[Point3<f64>],
    normals: Option<&[Vector3<f64>]>,
    path: &Path,
) -> io::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    write!(
        out,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n",
        points.len()
    )?;
    if normals.is_some() {
        write!(out, "property double nx\nproperty double ny\nproperty double nz\n")?;
    }
    writeln!(out, "end_header")?;
    for (i, p) in points.iter().enumerate() {
        match normals {
            Some(n) => writeln!(out, "{} {} {} {} {} {}", p.x, p.y, p.z, n[i].x, n[i].y, n[i].z)?,
            None => writeln!(out, "{} {} {}", p.x, p.y, p.z)?,
        }
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;

    const CUBE_OBJ: &str = "# unit cube
v -0.5 -0.5 -0.5
v 0.5 -0.5 -0.5
v 0.5 0.5 -0.5
v -0.5 0.5 -0.5
v -0.5 -0.5 0.5
v 0.5 -0.5 0.5
v 0.5 0.5 0.5
v -0.5 0.5 0.5
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
";

    fn write_tmp(name: &str, data: &[u8]) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        fs::write(&path, data).unwrap();
        (dir, path)
    }

    #[test]
    fn loads_unit_cube_obj() {
        let (_d, path) = write_tmp("cube.obj", CUBE_OBJ.as_bytes());
        let (mesh, report) = load_mesh(&path, MeshFormat::Obj, 1.0).unwrap();
        assert_eq!(mesh.vertices().len(), 8);
        assert_eq!(mesh.faces().len(), 12);
        assert_eq!(report.degenerate_faces, 0);
        assert!(mesh.is_watertight());
        assert!((mesh.signed_volume() - 1.0).abs() < 1e-12);
        for n in mesh.vertex_normals() {
            assert!((n.norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn drops_zero_area_face_with_count() {
        let text = format!("{CUBE_OBJ}v 0.0 0.0 0.0\nf 1 2 9\n").replace("f 4 5 8\n", "");
        // 11 real faces plus one collinear sliver along the bottom edge
        let text = text.replace("v 0.0 0.0 0.0", "v 0.0 -0.5 -0.5");
        let (_d, path) = write_tmp("cube.obj", text.as_bytes());
        let (mesh, report) = load_mesh(&path, MeshFormat::Obj, 1.0).unwrap();
        assert_eq!(mesh.faces().len(), 11);
        assert_eq!(report.degenerate_faces, 1);
    }

    #[test]
    fn unit_scale_rescales() {
        let (_d, path) = write_tmp("cube.obj", CUBE_OBJ.as_bytes());
        let (mesh, _) = load_mesh(&path, MeshFormat::Obj, 0.05).unwrap();
        assert!((mesh.signed_volume() - 0.05f64.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn obj_index_forms() {
        assert_eq!(obj_index("3/1/2", 5).unwrap(), 2);
        assert_eq!(obj_index("3//2", 5).unwrap(), 2);
        assert_eq!(obj_index("-1", 5).unwrap(), 4);
        assert!(obj_index("0", 5).is_err());
        assert!(obj_index("-6", 5).is_err());
    }

    #[test]
    fn malformed_and_missing_files() {
        let (_d, path) = write_tmp("bad.obj", b"v 1 2\nf 1 2 3\n");
        assert!(matches!(load_mesh(&path, MeshFormat::Obj, 1.0), Err(MeshError::Parse(_))));
        let (_d, path) = write_tmp("quad.obj", b"v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
        assert!(matches!(load_mesh(&path, MeshFormat::Obj, 1.0), Err(MeshError::Parse(_))));
        let (_d, path) = write_tmp("empty.obj", b"v 0 0 0\n");
        assert!(matches!(load_mesh(&path, MeshFormat::Obj, 1.0), Err(MeshError::EmptyMesh)));
        let err = load_mesh(Path::new("/nonexistent/x.obj"), MeshFormat::Obj, 1.0).unwrap_err();
        assert!(err.to_string().starts_with("ParseError"));
    }

    #[test]
    fn icosphere_ply_normals_are_radial() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sphere.ply");
        write_ply(&shapes::icosphere(1.0, 3), &path).unwrap();
        let (mesh, _) = load_mesh(&path, MeshFormat::Ply, 1.0).unwrap();
        assert_eq!(mesh.vertices().len(), 642);
        for (v, n) in mesh.vertices().iter().zip(mesh.vertex_normals()) {
            let angle = v.coords.normalize().dot(n).clamp(-1.0, 1.0).acos();
            assert!(angle < 1e-3, "angle {angle}");
        }
    }

    fn binary_ply(big_endian: bool) -> Vec<u8> {
        let fmt = if big_endian { "binary_big_endian" } else { "binary_little_endian" };
        let mut data = format!(
            "ply\nformat {fmt} 1.0\ncomment test\nelement vertex 4\nproperty float x\nproperty float y\n\
             property float z\nproperty uchar red\nelement face 4\nproperty list uchar int vertex_indices\n\
             property int flags\nend_header\n"
        )
        .into_bytes();
        let verts = [[0.0f32, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        for v in verts {
            for c in v {
                data.extend(if big_endian { c.to_be_bytes() } else { c.to_le_bytes() });
            }
            data.push(200);
        }
        for f in [[0i32, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]] {
            data.push(3);
            for i in f {
                data.extend(if big_endian { i.to_be_bytes() } else { i.to_le_bytes() });
            }
            data.extend(7i32.to_le_bytes());
        }
        data
    }

    #[test]
    fn binary_ply_both_endians() {
        for be in [false, true] {
            let (_d, path) = write_tmp("tet.ply", &binary_ply(be));
            let (mesh, _) = load_mesh(&path, MeshFormat::Ply, 1.0).unwrap();
            assert_eq!(mesh.faces().len(), 4);
            assert!(mesh.is_watertight());
            assert!((mesh.signed_volume() - 1.0 / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn obj_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prism.obj");
        let prism = shapes::l_prism(0.04);
        write_obj(&prism, &path).unwrap();
        let (back, _) = load_mesh(&path, MeshFormat::Obj, 1.0).unwrap();
        assert_eq!(back.vertices(), prism.vertices());
        assert_eq!(back.faces(), prism.faces());
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(MeshFormat::from_path(Path::new("a/b.OBJ")), Some(MeshFormat::Obj));
        assert_eq!(MeshFormat::from_path(Path::new("x.ply")), Some(MeshFormat::Ply));
        assert_eq!(MeshFormat::from_path(Path::new("x.stl")), None);
    }
}
