//! Binary model container and the anthropometric map text format.
//!
//! Layout (little endian): magic `CFM1`, u32 version, u32 counts
//! `N, triangles, n_shape, n_expr, K`, the topology id (u32 length + UTF-8),
//! then f64 mean vertices, u32 triangle indices, f64 shape basis rows,
//! f64 expression basis rows, per joint three f64 pivot coordinates and an
//! i32 parent (-1 for the root), f64 skinning weights, u32 image landmark
//! vertices (count-prefixed) and `(id, vertex)` u32 pairs for the
//! anthropometric map (count-prefixed).

use std::collections::BTreeMap;
use std::path::Path;

use super::face_model::{FaceModel, Joint, JOINT_NAMES};
use crate::error::{Error, Result};
use crate::geometry::{Mesh, Point3};

const MAGIC: &[u8; 4] = b"CFM1";
const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn i32(&mut self, v: i32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::parse(self.path, 0, format!("truncated model file at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::parse(self.path, 0, "block too large"))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
    fn count(&mut self) -> Result<usize> {
        let n = self.u32()? as usize;
        if n > self.bytes.len() {
            return Err(Error::parse(self.path, 0, format!("implausible count {n}")));
        }
        Ok(n)
    }
}

pub fn model_to_bytes(model: &FaceModel) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    for c in [
        model.vertex_count(),
        model.mean.triangles.len(),
        model.n_shape(),
        model.n_expression(),
        model.joints.len(),
    ] {
        w.u32(c as u32);
    }
    let topo = model.topology_id().as_bytes();
    w.u32(topo.len() as u32);
    w.0.extend_from_slice(topo);
    let flat: Vec<f64> = model.mean.vertices.iter().flat_map(|p| [p.x, p.y, p.z]).collect();
    w.f64s(&flat);
    for t in &model.mean.triangles {
        for &i in t {
            w.u32(i as u32);
        }
    }
    w.f64s(&model.shape_basis);
    w.f64s(&model.expression_basis);
    for j in &model.joints {
        w.f64s(&[j.pivot.x, j.pivot.y, j.pivot.z]);
        w.i32(j.parent.map_or(-1, |p| p as i32));
    }
    w.f64s(&model.skin_weights);
    w.u32(model.image_landmarks.len() as u32);
    for &v in &model.image_landmarks {
        w.u32(v as u32);
    }
    w.u32(model.anthropometric_map.len() as u32);
    for (&id, &v) in &model.anthropometric_map {
        w.u32(id);
        w.u32(v as u32);
    }
    w.0
}

pub fn model_from_bytes(bytes: &[u8], path: &Path) -> Result<FaceModel> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4)? != MAGIC {
        return Err(Error::parse(path, 0, "not a CFM1 model file (bad magic)"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::parse(path, 0, format!("unsupported model version {version}")));
    }
    let n = r.count()?;
    let n_tri = r.count()?;
    let n_shape = r.count()?;
    let n_expr = r.count()?;
    let k = r.count()?;
    let topo_len = r.count()?;
    let topology_id = String::from_utf8(r.take(topo_len)?.to_vec())
        .map_err(|_| Error::parse(path, 0, "topology id is not UTF-8"))?;
    let vertices = r.f64s(3 * n)?.chunks(3).map(|c| Point3::new(c[0], c[1], c[2])).collect();
    let mut triangles = Vec::with_capacity(n_tri);
    for _ in 0..n_tri {
        triangles.push([r.u32()? as usize, r.u32()? as usize, r.u32()? as usize]);
    }
    let mean = Mesh::new(vertices, triangles, topology_id)?;
    let shape_basis = r.f64s(n_shape * 3 * n)?;
    let expression_basis = r.f64s(n_expr * 3 * n)?;
    let mut joints = Vec::with_capacity(k);
    for j in 0..k {
        let p = r.f64s(3)?;
        let parent = r.i32()?;
        joints.push(Joint {
            name: JOINT_NAMES.get(j).copied().unwrap_or("joint"),
            pivot: Point3::new(p[0], p[1], p[2]),
            parent: usize::try_from(parent).ok(),
        });
    }
    let skin_weights = r.f64s(n * k)?;
    let n_img = r.count()?;
    let mut image_landmarks = Vec::with_capacity(n_img);
    for _ in 0..n_img {
        image_landmarks.push(r.u32()? as usize);
    }
    let n_anthro = r.count()?;
    let mut anthropometric_map = BTreeMap::new();
    for _ in 0..n_anthro {
        let id = r.u32()?;
        anthropometric_map.insert(id, r.u32()? as usize);
    }
    if r.pos != bytes.len() {
        return Err(Error::parse(path, 0, format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let model = FaceModel {
        mean,
        shape_basis,
        expression_basis,
        joints,
        skin_weights,
        anthropometric_map,
        image_landmarks,
    };
    model.validate()?;
    Ok(model)
}

pub fn write_model(model: &FaceModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_bytes(model))?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<FaceModel> {
    model_from_bytes(&std::fs::read(path)?, path)
}

/// "landmark_id vertex_index" per line; `#` starts a comment.
pub fn parse_anthropometric_map(text: &str, path: &Path) -> Result<BTreeMap<u32, usize>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [id, v] = fields[..] else {
            return Err(Error::parse(path, i + 1, "expected `landmark_id vertex_index`"));
        };
        let id: u32 = id.parse().map_err(|_| Error::parse(path, i + 1, format!("bad landmark id `{id}`")))?;
        let v: usize = v.parse().map_err(|_| Error::parse(path, i + 1, format!("bad vertex index `{v}`")))?;
        if map.insert(id, v).is_some() {
            return Err(Error::parse(path, i + 1, format!("duplicate landmark id {id}")));
        }
    }
    Ok(map)
}

pub fn format_anthropometric_map(map: &BTreeMap<u32, usize>) -> String {
    map.iter().map(|(id, v)| format!("{id} {v}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::synth::{synthesize_model, BasisEnergy};

    #[test]
    fn binary_round_trip_is_exact() {
        let m = synthesize_model(9, 162, &BasisEnergy::default()).unwrap();
        let bytes = model_to_bytes(&m);
        assert_eq!(&bytes[..4], b"CFM1");
        let back = model_from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn truncated_and_bad_magic_rejected() {
        let m = synthesize_model(9, 42, &BasisEnergy::default()).unwrap();
        let bytes = model_to_bytes(&m);
        assert!(model_from_bytes(&bytes[..bytes.len() - 3], Path::new("m")).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(model_from_bytes(&bad, Path::new("m")).is_err());
    }

    #[test]
    fn anthropometric_text_round_trip() {
        let text = "# id vertex\n1 10\n2 20\n";
        let map = parse_anthropometric_map(text, Path::new("a.txt")).unwrap();
        assert_eq!(map[&2], 20);
        assert_eq!(parse_anthropometric_map(&format_anthropometric_map(&map), Path::new("b")).unwrap(), map);
        let err = parse_anthropometric_map("1 2\n3\n", Path::new("a.txt")).unwrap_err();
        assert!(err.to_string().contains(":2:"));
    }
}
