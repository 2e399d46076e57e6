//! Triangle meshes, UV correspondence texturing and the inverse color lookup.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of classes per UV channel.
pub const UV_CLASSES: usize = 256;
/// Largest continuous UV coordinate; also the period of the u channel.
pub const UV_MAX: f64 = 255.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[u32; 3]>,
    centroid: Vector3<f64>,
}

impl Mesh {
    pub fn new(vertices: Vec<Vector3<f64>>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::DegenerateMesh("mesh has no vertices".into()));
        }
        let n = vertices.len();
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i as usize >= n)) {
            return Err(Error::DegenerateMesh(format!(
                "triangle {t:?} indexes past {n} vertices"
            )));
        }
        let centroid = vertices.iter().sum::<Vector3<f64>>() / n as f64;
        Ok(Self {
            vertices,
            triangles,
            centroid,
        })
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn centroid(&self) -> Vector3<f64> {
        self.centroid
    }

    pub fn triangle(&self, i: usize) -> [Vector3<f64>; 3] {
        let [a, b, c] = self.triangles[i];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// True when the mesh has at least four vertices that do not share a plane.
    pub fn spans_volume(&self) -> bool {
        let scale = self
            .vertices
            .iter()
            .map(|v| (v - self.centroid).norm())
            .fold(0.0, f64::max);
        if scale == 0.0 {
            return false;
        }
        let tol = 1e-9 * scale * scale * scale;
        let v0 = self.vertices[0];
        let Some(v1) = self.vertices.iter().find(|v| (*v - v0).norm() > 1e-9 * scale) else {
            return false;
        };
        let e1 = v1 - v0;
        let Some(n) = self
            .vertices
            .iter()
            .map(|v| e1.cross(&(v - v0)))
            .find(|n| n.norm() > 1e-9 * scale * scale)
        else {
            return false;
        };
        self.vertices.iter().any(|v| n.dot(&(v - v0)).abs() > tol)
    }

    /// Writes a Wavefront OBJ with `v` and `f` records only.
    pub fn write_obj(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for v in &self.vertices {
            out.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
        }
        for t in &self.triangles {
            out.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Loads an OBJ or ASCII PLY mesh, chosen by file extension.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let parse: fn(&str, &Path) -> Result<Mesh> = match ext.as_deref() {
        Some("obj") => parse_obj,
        Some("ply") => parse_ply,
        _ => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: expected .obj or .ply",
                path.display()
            )))
        }
    };
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    // binary PLY bodies are not UTF-8; sniff the header first
    if ext.as_deref() == Some("ply") {
        let head = String::from_utf8_lossy(&bytes[..bytes.len().min(512)]).into_owned();
        if head.lines().any(|l| l.trim_start().starts_with("format binary")) {
            return Err(Error::UnsupportedFormat(format!(
                "{}: binary PLY",
                path.display()
            )));
        }
    }
    let text = String::from_utf8(bytes).map_err(|_| parse_err(path, 1, "file is not valid UTF-8"))?;
    parse(&text, path)
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_f64(tok: Option<&str>, path: &Path, line: usize) -> Result<f64> {
    let tok = tok.ok_or_else(|| parse_err(path, line, "missing coordinate"))?;
    tok.parse()
        .map_err(|_| parse_err(path, line, format!("bad number {tok:?}")))
}

/// Fan-triangulates a polygon.
fn push_fan(poly: &[u32], out: &mut Vec<[u32; 3]>) {
    for i in 1..poly.len().saturating_sub(1) {
        out.push([poly[0], poly[i], poly[i + 1]]);
    }
}

pub(crate) fn parse_obj(text: &str, path: &Path) -> Result<Mesh> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        last_line = line_no;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let x = parse_f64(toks.next(), path, line_no)?;
                let y = parse_f64(toks.next(), path, line_no)?;
                let z = parse_f64(toks.next(), path, line_no)?;
                vertices.push(Vector3::new(x, y, z));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for tok in toks {
                    let idx_tok = tok.split('/').next().unwrap_or("");
                    let idx: i64 = idx_tok
                        .parse()
                        .map_err(|_| parse_err(path, line_no, format!("bad face index {tok:?}")))?;
                    let resolved = if idx > 0 {
                        idx - 1
                    } else if idx < 0 {
                        vertices.len() as i64 + idx
                    } else {
                        -1
                    };
                    if resolved < 0 || resolved >= vertices.len() as i64 {
                        return Err(parse_err(
                            path,
                            line_no,
                            format!("face index {idx} out of range"),
                        ));
                    }
                    poly.push(resolved as u32);
                }
                if poly.len() < 3 {
                    return Err(parse_err(path, line_no, "face needs at least 3 vertices"));
                }
                push_fan(&poly, &mut triangles);
            }
            _ => {}
        }
    }
    if vertices.is_empty() {
        return Err(parse_err(path, last_line.max(1), "no vertices found"));
    }
    Mesh::new(vertices, triangles)
}

#[derive(Debug)]
struct PlyElement {
    name: String,
    count: usize,
    // (name, is_list)
    props: Vec<(String, bool)>,
}

pub(crate) fn parse_ply(text: &str, path: &Path) -> Result<Mesh> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        Some((n, _)) => return Err(parse_err(path, n, "missing 'ply' magic")),
        None => return Err(parse_err(path, 1, "empty file")),
    }

    let mut elements: Vec<PlyElement> = Vec::new();
    let mut saw_end = false;
    for (n, line) in lines.by_ref() {
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("format") => match toks.next() {
                Some("ascii") => {}
                Some(other) => {
                    return Err(Error::UnsupportedFormat(format!(
                        "{}: PLY format {other}",
                        path.display()
                    )))
                }
                None => return Err(parse_err(path, n, "format line without a format")),
            },
            Some("element") => {
                let name = toks.next().ok_or_else(|| parse_err(path, n, "element without name"))?;
                let count = toks
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| parse_err(path, n, "element without a valid count"))?;
                elements.push(PlyElement {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, n, "property before any element"))?;
                let rest: Vec<&str> = toks.collect();
                let is_list = rest.first() == Some(&"list");
                let name = rest
                    .last()
                    .ok_or_else(|| parse_err(path, n, "property without name"))?;
                el.props.push((name.to_string(), is_list));
            }
            Some("end_header") => {
                saw_end = true;
                break;
            }
            Some("comment") | Some("obj_info") | None => {}
            Some(other) => return Err(parse_err(path, n, format!("unknown header keyword {other:?}"))),
        }
    }
    if !saw_end {
        return Err(parse_err(path, 1, "header not terminated by end_header"));
    }

    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut data = lines.filter(|(_, l)| !l.is_empty());
    for el in &elements {
        let xyz = ["x", "y", "z"].map(|c| el.props.iter().position(|(p, l)| p == c && !l));
        let face_prop = el
            .props
            .iter()
            .position(|(p, l)| *l && (p == "vertex_indices" || p == "vertex_index"));
        for _ in 0..el.count {
            let (n, line) = data
                .next()
                .ok_or_else(|| parse_err(path, text.lines().count(), format!("truncated {} data", el.name)))?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            let mut cursor = 0;
            let mut scalars = Vec::with_capacity(el.props.len());
            let mut lists: Vec<Vec<i64>> = Vec::new();
            for (_, is_list) in &el.props {
                if *is_list {
                    let len: usize = toks
                        .get(cursor)
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| parse_err(path, n, "bad list length"))?;
                    cursor += 1;
                    let items = toks
                        .get(cursor..cursor + len)
                        .ok_or_else(|| parse_err(path, n, "list shorter than its length"))?
                        .iter()
                        .map(|t| t.parse::<i64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| parse_err(path, n, "bad list item"))?;
                    cursor += len;
                    lists.push(items);
                    scalars.push(f64::NAN);
                } else {
                    let v = parse_f64(toks.get(cursor).copied(), path, n)?;
                    cursor += 1;
                    scalars.push(v);
                    lists.push(Vec::new());
                }
            }
            if el.name == "vertex" {
                let [Some(x), Some(y), Some(z)] = xyz else {
                    return Err(parse_err(path, n, "vertex element lacks x/y/z"));
                };
                vertices.push(Vector3::new(scalars[x], scalars[y], scalars[z]));
            } else if el.name == "face" {
                let fp = face_prop.ok_or_else(|| parse_err(path, n, "face element lacks vertex_indices"))?;
                let poly = lists[fp]
                    .iter()
                    .map(|&i| u32::try_from(i).map_err(|_| parse_err(path, n, "negative face index")))
                    .collect::<Result<Vec<_>>>()?;
                if poly.len() < 3 {
                    return Err(parse_err(path, n, "face needs at least 3 vertices"));
                }
                push_fan(&poly, &mut triangles);
            }
        }
    }
    if vertices.is_empty() {
        return Err(parse_err(path, 1, "no vertices found"));
    }
    Mesh::new(vertices, triangles).map_err(|e| match e {
        Error::DegenerateMesh(msg) => parse_err(path, 1, msg),
        e => e,
    })
}

/// Maximum pairwise vertex distance.
pub fn diameter(mesh: &Mesh) -> Result<f64> {
    let v = mesh.vertices();
    if v.len() < 2 {
        return Err(Error::DegenerateMesh("diameter needs at least 2 vertices".into()));
    }
    let best_sq = (0..v.len())
        .into_par_iter()
        .map(|i| {
            v[i + 1..]
                .iter()
                .map(|w| (v[i] - w).norm_squared())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(best_sq.sqrt())
}

/// Projection used to assign UV coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UvMode {
    Spherical,
    Cylindrical,
}

impl fmt::Display for UvMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UvMode::Spherical => "spherical",
            UvMode::Cylindrical => "cylindrical",
        })
    }
}

impl std::str::FromStr for UvMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spherical" => Ok(UvMode::Spherical),
            "cylindrical" => Ok(UvMode::Cylindrical),
            _ => Err(Error::InvalidParameter(format!("unknown uv mode {s:?}"))),
        }
    }
}

/// Round-half-up quantization of a continuous UV coordinate to a class.
pub fn quantize(x: f64) -> u8 {
    (x + 0.5).floor().clamp(0.0, UV_MAX) as u8
}

/// Moves u values of a seam-straddling primitive into one unwrapped branch.
///
/// When the spread of `us` exceeds half the period, values in the lower half
/// are shifted up by one period so interpolation does not sweep across the
/// whole texture.
pub fn unwrap_u<const N: usize>(mut us: [f64; N]) -> [f64; N] {
    let lo = us.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = us.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo > 0.5 * UV_MAX {
        for u in &mut us {
            if *u < 0.5 * UV_MAX {
                *u += UV_MAX;
            }
        }
    }
    us
}

/// Maps an unwrapped u back into `[0, UV_MAX]`.
pub fn wrap_u(u: f64) -> f64 {
    if u > UV_MAX {
        u - UV_MAX
    } else {
        u
    }
}

fn azimuth_u(p: &Vector3<f64>) -> f64 {
    UV_MAX * (p.y.atan2(p.x) + std::f64::consts::PI) / std::f64::consts::TAU
}

fn cell_index(u: u8, v: u8) -> usize {
    u as usize * UV_CLASSES + v as usize
}

/// Inverse color table: UV class pair → representative model-surface point.
#[derive(Clone, PartialEq)]
pub struct ColorLookup {
    table: Vec<Option<Vector3<f64>>>,
}

impl fmt::Debug for ColorLookup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ColorLookup")
            .field("populated", &self.populated())
            .finish()
    }
}

impl Default for ColorLookup {
    fn default() -> Self {
        Self::empty()
    }
}

const CLUT_MAGIC: &[u8; 4] = b"CLUT";
const CLUT_VERSION: u8 = 1;

impl ColorLookup {
    pub fn empty() -> Self {
        Self {
            table: vec![None; UV_CLASSES * UV_CLASSES],
        }
    }

    pub fn get(&self, u: u8, v: u8) -> Option<Vector3<f64>> {
        self.table[cell_index(u, v)]
    }

    pub fn set(&mut self, u: u8, v: u8, p: Option<Vector3<f64>>) {
        self.table[cell_index(u, v)] = p;
    }

    pub fn populated(&self) -> usize {
        self.table.iter().filter(|c| c.is_some()).count()
    }

    /// Binary form: `"CLUT"`, a version byte, then 256×256 cells in row-major
    /// order (row = u, column = v), each three little-endian `f32` values.
    /// Empty cells are NaN.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + self.table.len() * 12);
        out.extend_from_slice(CLUT_MAGIC);
        out.push(CLUT_VERSION);
        for cell in &self.table {
            let xyz = cell.map_or([f32::NAN; 3], |p| [p.x as f32, p.y as f32, p.z as f32]);
            for c in xyz {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let expected = 5 + UV_CLASSES * UV_CLASSES * 12;
        if bytes.len() != expected || &bytes[..4] != CLUT_MAGIC {
            return Err(Error::InvalidParameter(format!(
                "not a CLUT file ({} bytes, expected {expected})",
                bytes.len()
            )));
        }
        if bytes[4] != CLUT_VERSION {
            return Err(Error::InvalidParameter(format!("CLUT version {}", bytes[4])));
        }
        let table = bytes[5..]
            .chunks_exact(12)
            .map(|c| {
                let f = |i: usize| f32::from_le_bytes(c[i..i + 4].try_into().unwrap()) as f64;
                let p = Vector3::new(f(0), f(4), f(8));
                (!p.x.is_nan()).then_some(p)
            })
            .collect();
        Ok(Self { table })
    }
}

/// A mesh textured with quantized UV classes plus the inverse lookup.
#[derive(Debug, Clone)]
pub struct CorrespondenceModel {
    mesh: Mesh,
    mode: UvMode,
    uv: Vec<[f64; 2]>,
    uv_class: Vec<[u8; 2]>,
    lookup: ColorLookup,
}

impl CorrespondenceModel {
    pub fn new(mesh: Mesh, mode: UvMode) -> Result<Self> {
        match mode {
            UvMode::Spherical => texture_spherical(mesh),
            UvMode::Cylindrical => texture_cylindrical(mesh),
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mode(&self) -> UvMode {
        self.mode
    }

    /// Continuous per-vertex UVs in `[0, 255]`, before quantization.
    pub fn uv(&self) -> &[[f64; 2]] {
        &self.uv
    }

    pub fn uv_class(&self) -> &[[u8; 2]] {
        &self.uv_class
    }

    pub fn lookup(&self) -> &ColorLookup {
        &self.lookup
    }

    /// JSON sidecar: the projection mode and one `[u, v]` class pair per
    /// vertex, indexed by vertex.
    pub fn sidecar_json(&self) -> Result<String> {
        let side = Sidecar {
            mode: self.mode,
            vertex_count: self.uv_class.len(),
            uv: self.uv_class.clone(),
        };
        Ok(serde_json::to_string_pretty(&side)? + "\n")
    }

    /// Writes `mesh.obj`, `uv.json` and `lookup.clut` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.mesh.write_obj(&dir.join(MODEL_MESH))?;
        write_file(&dir.join(MODEL_SIDECAR), self.sidecar_json()?.as_bytes())?;
        write_file(&dir.join(MODEL_LOOKUP), &self.lookup.to_bytes())
    }

    /// Reloads a model written by [`CorrespondenceModel::write_dir`]. UVs are
    /// recomputed from the mesh and checked against the sidecar.
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let mesh = load_mesh(dir.join(MODEL_MESH))?;
        let side_path = dir.join(MODEL_SIDECAR);
        let text = fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
        let side: Sidecar = serde_json::from_str(&text)?;
        let model = CorrespondenceModel::new(mesh, side.mode)?;
        if model.uv_class != side.uv {
            return Err(Error::InvalidParameter(format!(
                "{}: UV classes disagree with the mesh",
                side_path.display()
            )));
        }
        Ok(model)
    }
}

pub const MODEL_MESH: &str = "mesh.obj";
pub const MODEL_SIDECAR: &str = "uv.json";
pub const MODEL_LOOKUP: &str = "lookup.clut";

#[derive(Serialize, Deserialize)]
struct Sidecar {
    mode: UvMode,
    vertex_count: usize,
    uv: Vec<[u8; 2]>,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Spherical UV projection about the vertex centroid.
pub fn texture_spherical(mesh: Mesh) -> Result<CorrespondenceModel> {
    let c = mesh.centroid();
    let mut uv = Vec::with_capacity(mesh.vertices().len());
    for (i, v) in mesh.vertices().iter().enumerate() {
        let d = v - c;
        let n = d.norm();
        if n < 1e-12 {
            return Err(Error::DegenerateMesh(format!(
                "vertex {i} coincides with the centroid"
            )));
        }
        let p = d / n;
        let v = UV_MAX * p.z.clamp(-1.0, 1.0).acos() / std::f64::consts::PI;
        uv.push([azimuth_u(&p), v]);
    }
    Ok(finish_model(mesh, UvMode::Spherical, uv))
}

/// Cylindrical UV projection: azimuth about the centroid, height along z.
pub fn texture_cylindrical(mesh: Mesh) -> Result<CorrespondenceModel> {
    let c = mesh.centroid();
    let (zmin, zmax) = mesh
        .vertices()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v.z), hi.max(v.z)));
    if zmax - zmin <= 1e-12 {
        return Err(Error::DegenerateMesh("mesh has no z extent".into()));
    }
    let uv = mesh
        .vertices()
        .iter()
        .map(|v| [azimuth_u(&(v - c)), UV_MAX * (v.z - zmin) / (zmax - zmin)])
        .collect();
    Ok(finish_model(mesh, UvMode::Cylindrical, uv))
}

fn finish_model(mesh: Mesh, mode: UvMode, uv: Vec<[f64; 2]>) -> CorrespondenceModel {
    let uv_class: Vec<[u8; 2]> = uv.iter().map(|[u, v]| [quantize(*u), quantize(*v)]).collect();
    let lookup = build_lookup(&mesh, &uv, &uv_class);
    CorrespondenceModel {
        mesh,
        mode,
        uv,
        uv_class,
        lookup,
    }
}

/// Builds the class → surface point table.
///
/// A cell holds the centroid of every vertex quantized into it. Cells that no
/// vertex reaches are filled from triangle barycenters (UV interpolated with
/// seam unwrapping, then quantized), again averaging all samples per cell.
pub fn build_lookup(mesh: &Mesh, uv: &[[f64; 2]], uv_class: &[[u8; 2]]) -> ColorLookup {
    let cells = UV_CLASSES * UV_CLASSES;
    let mut sums = vec![(Vector3::zeros(), 0usize); cells];
    for (v, cls) in mesh.vertices().iter().zip(uv_class) {
        let s = &mut sums[cell_index(cls[0], cls[1])];
        s.0 += v;
        s.1 += 1;
    }

    let mut extra = vec![(Vector3::zeros(), 0usize); cells];
    for (ti, tri) in mesh.triangles().iter().enumerate() {
        let us = unwrap_u(tri.map(|i| uv[i as usize][0]));
        let u = wrap_u(us.iter().sum::<f64>() / 3.0);
        let v = tri.iter().map(|&i| uv[i as usize][1]).sum::<f64>() / 3.0;
        let idx = cell_index(quantize(u), quantize(v));
        if sums[idx].1 == 0 {
            let p = mesh.triangle(ti).iter().sum::<Vector3<f64>>() / 3.0;
            extra[idx].0 += p;
            extra[idx].1 += 1;
        }
    }

    let table = sums
        .iter()
        .zip(&extra)
        .map(|(&(s, n), &(es, en))| {
            if n > 0 {
                Some(s / n as f64)
            } else if en > 0 {
                Some(es / en as f64)
            } else {
                None
            }
        })
        .collect();
    ColorLookup { table }
}
