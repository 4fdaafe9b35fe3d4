//! File formats: TetGen-style `.node` / `.ele` meshes, per-element fields
//! (text or raw little-endian f32) and raw f32 arrays.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{AttenuationField, MeshGraph};
use crate::Vec3;

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-empty, comment-stripped lines with their 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let body = line.split('#').next().unwrap_or("");
        let fields: Vec<&str> = body.split_whitespace().collect();
        (!fields.is_empty()).then_some((i + 1, fields))
    })
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, fields: &[&str], i: usize, what: &str) -> Result<T> {
    let raw = fields
        .get(i)
        .ok_or_else(|| parse_err(path, line, format!("missing {what}")))?;
    raw.parse()
        .map_err(|_| parse_err(path, line, format!("invalid {what} '{raw}'")))
}

pub fn read_node_file(path: &Path) -> Result<Vec<Vec3>> {
    let text = read_text(path)?;
    let mut recs = records(&text);
    let (hline, header) = recs
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty node file"))?;
    let count: usize = field(path, hline, &header, 0, "node count")?;
    let dim: usize = field(path, hline, &header, 1, "dimension")?;
    if dim != 3 {
        return Err(parse_err(path, hline, format!("dimension must be 3, got {dim}")));
    }
    let mut nodes = Vec::with_capacity(count);
    for (line, f) in recs.by_ref().take(count) {
        let _: i64 = field(path, line, &f, 0, "node index")?;
        let x = field(path, line, &f, 1, "x")?;
        let y = field(path, line, &f, 2, "y")?;
        let z = field(path, line, &f, 3, "z")?;
        nodes.push(Vec3::new(x, y, z));
    }
    if nodes.len() != count {
        return Err(parse_err(
            path,
            hline,
            format!("header announces {count} nodes, found {}", nodes.len()),
        ));
    }
    Ok(nodes)
}

/// Element node quads, converted to 0-based indices.
///
/// The base is taken from the index column of the first element record
/// (0 or 1), matching TetGen's `firstnumber` convention.
pub fn read_ele_file(path: &Path, node_count: usize) -> Result<Vec<[u32; 4]>> {
    let text = read_text(path)?;
    let mut recs = records(&text);
    let (hline, header) = recs
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty element file"))?;
    let count: usize = field(path, hline, &header, 0, "element count")?;
    let per: usize = field(path, hline, &header, 1, "nodes per element")?;
    if per != 4 {
        return Err(parse_err(path, hline, format!("only 4-node tetrahedra supported, got {per}")));
    }
    let mut base: Option<i64> = None;
    let mut quads = Vec::with_capacity(count);
    for (line, f) in recs.by_ref().take(count) {
        let idx: i64 = field(path, line, &f, 0, "element index")?;
        let base = *base.get_or_insert(if idx == 0 { 0 } else { 1 });
        let mut quad = [0u32; 4];
        for (k, slot) in quad.iter_mut().enumerate() {
            let raw: i64 = field(path, line, &f, k + 1, "node reference")?;
            let local = raw - base;
            if local < 0 || local as usize >= node_count {
                return Err(Error::IndexOutOfRange {
                    path: path.to_path_buf(),
                    line,
                    index: raw,
                    count: node_count,
                });
            }
            *slot = local as u32;
        }
        quads.push(quad);
    }
    if quads.len() != count {
        return Err(parse_err(
            path,
            hline,
            format!("header announces {count} elements, found {}", quads.len()),
        ));
    }
    Ok(quads)
}

pub fn load_mesh(node_path: &Path, ele_path: &Path) -> Result<MeshGraph> {
    let vertices = read_node_file(node_path)?;
    let quads = read_ele_file(ele_path, vertices.len())?;
    MeshGraph::build(vertices, &quads)
}

/// Writes 0-based `.node` / `.ele` files.
pub fn write_tetgen(node_path: &Path, ele_path: &Path, vertices: &[Vec3], quads: &[[u32; 4]]) -> Result<()> {
    let mut node = format!("{} 3 0 0\n", vertices.len());
    for (i, v) in vertices.iter().enumerate() {
        writeln!(node, "{i} {:?} {:?} {:?}", v.x, v.y, v.z).unwrap();
    }
    std::fs::write(node_path, node).map_err(|e| Error::io(node_path, e))?;
    let mut ele = format!("{} 4 0\n", quads.len());
    for (i, q) in quads.iter().enumerate() {
        writeln!(ele, "{i} {} {} {} {}", q[0], q[1], q[2], q[3]).unwrap();
    }
    std::fs::write(ele_path, ele).map_err(|e| Error::io(ele_path, e))
}

pub fn write_mesh(node_path: &Path, ele_path: &Path, graph: &MeshGraph) -> Result<()> {
    let quads: Vec<[u32; 4]> = graph.elements().iter().map(|t| t.nodes).collect();
    write_tetgen(node_path, ele_path, graph.vertices(), &quads)
}

pub fn read_f32_raw(path: &Path, expected: Option<usize>) -> Result<Vec<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::DimensionMismatch(format!(
            "{}: size {} is not a multiple of 4",
            path.display(),
            bytes.len()
        )));
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if let Some(n) = expected {
        if values.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{}: expected {n} values, found {}",
                path.display(),
                values.len()
            )));
        }
    }
    Ok(values)
}

pub fn write_f32_raw(path: &Path, values: &[f32]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn is_text(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("txt"))
}

/// Reads a field: `.txt` files hold one value per line, anything else is
/// raw little-endian f32. The value count must equal `elements`.
pub fn read_field(path: &Path, elements: usize) -> Result<AttenuationField> {
    let values = if is_text(path) {
        let text = read_text(path)?;
        let values = records(&text)
            .map(|(line, f)| field::<f32>(path, line, &f, 0, "value"))
            .collect::<Result<Vec<f32>>>()?;
        if values.len() != elements {
            return Err(Error::DimensionMismatch(format!(
                "{}: expected {elements} values, found {}",
                path.display(),
                values.len()
            )));
        }
        values
    } else {
        read_f32_raw(path, Some(elements))?
    };
    AttenuationField::new(values)
}

pub fn write_field(path: &Path, field: &AttenuationField) -> Result<()> {
    if is_text(path) {
        let mut s = String::with_capacity(field.len() * 12);
        for v in field.values() {
            writeln!(s, "{v:?}").unwrap();
        }
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    } else {
        write_f32_raw(path, field.values())
    }
}
