//! Mesh file input and output.
//!
//! Input: Wavefront OBJ (`v`/`f` records), ASCII PLY and ASCII STL, with
//! the format picked from the file extension. Output is always OBJ with
//! 6-decimal coordinates, so save → load round-trips bit-identically at
//! that precision. Binary PLY/STL are out of scope.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Point3;

use super::{MeshError, TriMesh};
use crate::fsio::atomic_write;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    PlyAscii,
    StlAscii,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self, MeshError> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        match ext.as_deref() {
            Some("obj") => Ok(MeshFormat::Obj),
            Some("ply") => Ok(MeshFormat::PlyAscii),
            Some("stl") => Ok(MeshFormat::StlAscii),
            _ => Err(MeshError::UnknownFormat {
                path: path.display().to_string(),
            }),
        }
    }
}

/// Load and validate a mesh, picking the parser from the file extension.
pub fn load_mesh(path: &Path) -> Result<TriMesh, MeshError> {
    let format = MeshFormat::from_path(path)?;
    let text = std::fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_mesh_str(&text, format, &path.display().to_string())
}

/// Parse mesh text in the given format; `label` names the source in errors.
pub fn load_mesh_str(text: &str, format: MeshFormat, label: &str) -> Result<TriMesh, MeshError> {
    let (vertices, faces) = match format {
        MeshFormat::Obj => parse_obj(text, label)?,
        MeshFormat::PlyAscii => parse_ply(text, label)?,
        MeshFormat::StlAscii => parse_stl(text, label)?,
    };
    TriMesh::new(vertices, faces)
}

/// Write `mesh` as OBJ with 6-decimal coordinates (atomic replace).
pub fn save_mesh(mesh: &TriMesh, path: &Path) -> Result<(), MeshError> {
    let mut out = String::with_capacity(mesh.vertex_count() * 32 + mesh.face_count() * 16);
    for v in mesh.vertices() {
        writeln!(out, "v {:.6} {:.6} {:.6}", v.x, v.y, v.z).expect("string write");
    }
    for f in mesh.faces() {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).expect("string write");
    }
    atomic_write(path, out.as_bytes()).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_err(path: &str, line: usize, msg: impl Into<String>) -> MeshError {
    MeshError::Parse {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

fn parse_f64(tok: &str, path: &str, line: usize) -> Result<f64, MeshError> {
    tok.parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("invalid number {tok:?}")))
}

type RawMesh = (Vec<Point3<f64>>, Vec<[u32; 3]>);

fn parse_obj(text: &str, path: &str) -> Result<RawMesh, MeshError> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut toks = trimmed.split_whitespace();
        match toks.next() {
            Some("v") => {
                let mut coord = [0.0f64; 3];
                for c in &mut coord {
                    let tok = toks
                        .next()
                        .ok_or_else(|| parse_err(path, line, "vertex needs 3 coordinates"))?;
                    *c = parse_f64(tok, path, line)?;
                }
                vertices.push(Point3::new(coord[0], coord[1], coord[2]));
            }
            Some("f") => {
                let idx: Vec<&str> = toks.collect();
                if idx.len() != 3 {
                    return Err(parse_err(
                        path,
                        line,
                        format!("face has {} vertices; only triangles are supported", idx.len()),
                    ));
                }
                let mut face = [0u32; 3];
                for (slot, tok) in face.iter_mut().zip(&idx) {
                    // OBJ faces may carry texture/normal refs as v/t/n.
                    let vtok = tok.split('/').next().unwrap_or("");
                    let signed: i64 = vtok
                        .parse()
                        .map_err(|_| parse_err(path, line, format!("invalid face index {tok:?}")))?;
                    let resolved = if signed > 0 {
                        signed - 1
                    } else if signed < 0 {
                        vertices.len() as i64 + signed
                    } else {
                        return Err(parse_err(path, line, "face index 0 is not valid in OBJ"));
                    };
                    if resolved < 0 || resolved > u32::MAX as i64 {
                        return Err(parse_err(path, line, format!("face index {signed} out of range")));
                    }
                    *slot = resolved as u32;
                }
                faces.push(face);
            }
            // Ignore other record types (vn, vt, o, g, usemtl, s, mtllib).
            _ => {}
        }
    }
    Ok((vertices, faces))
}

fn parse_ply(text: &str, path: &str) -> Result<RawMesh, MeshError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

    let (line, magic) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    if magic != "ply" {
        return Err(parse_err(path, line, "missing ply magic line"));
    }

    let mut vertex_count = None;
    let mut face_count = None;
    // Column layout of the vertex element; we need x, y, z positions.
    let mut vertex_props: Vec<String> = Vec::new();
    let mut current_element = String::new();
    let mut header_end = 0;

    for (line, text) in lines.by_ref() {
        if text.is_empty() || text.starts_with("comment") {
            continue;
        }
        let mut toks = text.split_whitespace();
        match toks.next() {
            Some("format") => {
                if toks.next() != Some("ascii") {
                    return Err(parse_err(path, line, "only ascii PLY is supported"));
                }
            }
            Some("element") => {
                let name = toks
                    .next()
                    .ok_or_else(|| parse_err(path, line, "element needs a name"))?;
                let count: usize = toks
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| parse_err(path, line, "element needs a count"))?;
                current_element = name.to_string();
                match name {
                    "vertex" => vertex_count = Some(count),
                    "face" => face_count = Some(count),
                    _ => {}
                }
            }
            Some("property") => {
                if current_element == "vertex" {
                    if let Some(name) = text.split_whitespace().last() {
                        vertex_props.push(name.to_string());
                    }
                }
            }
            Some("end_header") => {
                header_end = line;
                break;
            }
            _ => return Err(parse_err(path, line, format!("unexpected header line {text:?}"))),
        }
    }
    if header_end == 0 {
        return Err(parse_err(path, 1, "header has no end_header"));
    }

    let vertex_count =
        vertex_count.ok_or_else(|| parse_err(path, header_end, "header declares no vertex element"))?;
    let face_count =
        face_count.ok_or_else(|| parse_err(path, header_end, "header declares no face element"))?;

    let col = |name: &str| -> Result<usize, MeshError> {
        vertex_props
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| parse_err(path, header_end, format!("vertex element lacks property {name}")))
    };
    let (cx, cy, cz) = (col("x")?, col("y")?, col("z")?);

    let mut data = lines.filter(|(_, l)| !l.is_empty());

    let mut vertices = Vec::with_capacity(vertex_count);
    for _ in 0..vertex_count {
        let (line, text) = data
            .next()
            .ok_or_else(|| parse_err(path, header_end, "fewer vertex rows than declared"))?;
        let toks: Vec<&str> = text.split_whitespace().collect();
        if toks.len() < vertex_props.len() {
            return Err(parse_err(path, line, "vertex row has too few columns"));
        }
        vertices.push(Point3::new(
            parse_f64(toks[cx], path, line)?,
            parse_f64(toks[cy], path, line)?,
            parse_f64(toks[cz], path, line)?,
        ));
    }

    let mut faces = Vec::with_capacity(face_count);
    for _ in 0..face_count {
        let (line, text) = data
            .next()
            .ok_or_else(|| parse_err(path, header_end, "fewer face rows than declared"))?;
        let mut toks = text.split_whitespace();
        let count: usize = toks
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(path, line, "face row needs a leading vertex count"))?;
        if count != 3 {
            return Err(parse_err(
                path,
                line,
                format!("face has {count} vertices; only triangles are supported"),
            ));
        }
        let mut face = [0u32; 3];
        for slot in &mut face {
            let tok = toks
                .next()
                .ok_or_else(|| parse_err(path, line, "face row has too few indices"))?;
            *slot = tok
                .parse()
                .map_err(|_| parse_err(path, line, format!("invalid face index {tok:?}")))?;
        }
        faces.push(face);
    }

    Ok((vertices, faces))
}

fn parse_stl(text: &str, path: &str) -> Result<RawMesh, MeshError> {
    use std::collections::HashMap;

    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    // STL repeats vertices per facet; weld exact bit-equal coordinates so
    // faces share vertices and adjacency works.
    let mut index: HashMap<[u64; 3], u32> = HashMap::new();
    let mut pending: Vec<u32> = Vec::new();
    let mut saw_solid = false;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut toks = trimmed.split_whitespace();
        match toks.next() {
            Some("solid") => saw_solid = true,
            Some("facet") | Some("outer") | Some("endloop") | Some("endsolid") => {}
            Some("vertex") => {
                let mut coord = [0.0f64; 3];
                for c in &mut coord {
                    let tok = toks
                        .next()
                        .ok_or_else(|| parse_err(path, line, "vertex needs 3 coordinates"))?;
                    *c = parse_f64(tok, path, line)?;
                }
                let key = [coord[0].to_bits(), coord[1].to_bits(), coord[2].to_bits()];
                let id = *index.entry(key).or_insert_with(|| {
                    vertices.push(Point3::new(coord[0], coord[1], coord[2]));
                    (vertices.len() - 1) as u32
                });
                pending.push(id);
            }
            Some("endfacet") => {
                if pending.len() != 3 {
                    return Err(parse_err(
                        path,
                        line,
                        format!("facet has {} vertices; expected 3", pending.len()),
                    ));
                }
                faces.push([pending[0], pending[1], pending[2]]);
                pending.clear();
            }
            Some(other) => {
                return Err(parse_err(path, line, format!("unexpected token {other:?}")));
            }
            None => {}
        }
    }

    if !saw_solid {
        return Err(parse_err(path, 1, "missing 'solid' header"));
    }
    if !pending.is_empty() {
        return Err(parse_err(path, text.lines().count(), "unterminated facet"));
    }
    Ok((vertices, faces))
}
