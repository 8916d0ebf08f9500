//! File formats: PLY point clouds, OBJ meshes and the JSON records used for
//! scenes, scene specs and poses.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Pose9D};
use crate::scalar::{lit, vec3_from_array, vec3_to_array, Real, Vec3};
use crate::scenegen::{Mesh, SceneObject, SceneSpec};

/// Points and, when the file has them, normals.
#[derive(Debug, Clone, PartialEq)]
pub struct PlyData<T: Real> {
    pub points: Vec<Vec3<T>>,
    pub normals: Option<Vec<Vec3<T>>>,
}

/// Binary little-endian PLY with `float` x, y, z and, if `normals`, nx, ny, nz.
pub fn write_ply<T: Real, W: Write>(mut out: W, cloud: &PointCloud<T>, normals: bool) -> Result<()> {
    let mut header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n",
        cloud.len()
    );
    if normals {
        header.push_str("property float nx\nproperty float ny\nproperty float nz\n");
    }
    header.push_str("end_header\n");
    out.write_all(header.as_bytes())?;
    let mut buf = Vec::with_capacity(cloud.len() * if normals { 24 } else { 12 });
    for i in 0..cloud.len() {
        let mut put = |v: &Vec3<T>| {
            for x in vec3_to_array(v) {
                buf.extend_from_slice(&(x as f32).to_le_bytes());
            }
        };
        put(&cloud.points[i]);
        if normals {
            put(&cloud.normals[i]);
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum PlyType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl PlyType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => PlyType::I8,
            "uchar" | "uint8" => PlyType::U8,
            "short" | "int16" => PlyType::I16,
            "ushort" | "uint16" => PlyType::U16,
            "int" | "int32" => PlyType::I32,
            "uint" | "uint32" => PlyType::U32,
            "float" | "float32" => PlyType::F32,
            "double" | "float64" => PlyType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            PlyType::I8 | PlyType::U8 => 1,
            PlyType::I16 | PlyType::U16 => 2,
            PlyType::I32 | PlyType::U32 | PlyType::F32 => 4,
            PlyType::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            PlyType::I8 => b[0] as i8 as f64,
            PlyType::U8 => b[0] as f64,
            PlyType::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            PlyType::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            PlyType::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            PlyType::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            PlyType::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            PlyType::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

/// Reads the `vertex` element of an ASCII or binary little-endian PLY file.
/// Other elements must come after it; they are ignored.
pub fn read_ply<T: Real, R: BufRead>(mut input: R) -> Result<PlyData<T>> {
    let mut line_no = 0;
    let mut next_line = |input: &mut R| -> Result<(usize, String)> {
        let mut line = String::new();
        line_no += 1;
        if input.read_line(&mut line)? == 0 {
            return Err(Error::Parse {
                line: line_no,
                message: "unexpected end of PLY header".into(),
            });
        }
        Ok((line_no, line.trim_end().to_string()))
    };
    let bad = |line: usize, message: &str| Error::Parse {
        line,
        message: message.to_string(),
    };

    let (n, magic) = next_line(&mut input)?;
    if magic != "ply" {
        return Err(bad(n, "missing ply magic"));
    }
    let mut ascii = None;
    let mut vertex_count = None;
    let mut in_vertex = false;
    let mut seen_element = false;
    let mut props: Vec<(String, PlyType)> = Vec::new();
    loop {
        let (n, line) = next_line(&mut input)?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["end_header"] => break,
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["format", "ascii", _] => ascii = Some(true),
            ["format", "binary_little_endian", _] => ascii = Some(false),
            ["format", f, ..] => return Err(bad(n, &format!("unsupported PLY format {f}"))),
            ["element", name, count] => {
                if *name == "vertex" {
                    if seen_element {
                        return Err(bad(n, "vertex must be the first element"));
                    }
                    vertex_count = Some(count.parse::<usize>().map_err(|_| bad(n, "bad vertex count"))?);
                }
                in_vertex = *name == "vertex";
                seen_element = true;
            }
            ["property", "list", ..] if in_vertex => {
                return Err(bad(n, "list properties on vertices are not supported"))
            }
            ["property", ty, name] if in_vertex => {
                let ty = PlyType::parse(ty).ok_or_else(|| bad(n, &format!("unknown type {ty}")))?;
                props.push((name.to_string(), ty));
            }
            ["property", ..] => {}
            _ => return Err(bad(n, &format!("unrecognized header line {line:?}"))),
        }
    }
    let ascii = ascii.ok_or_else(|| bad(1, "missing format line"))?;
    let count = vertex_count.ok_or_else(|| bad(1, "missing vertex element"))?;
    let find = |name: &str| props.iter().position(|(p, _)| p == name);
    let xyz = ["x", "y", "z"].map(find);
    let nxyz = ["nx", "ny", "nz"].map(find);
    let [Some(x), Some(y), Some(z)] = xyz else {
        return Err(bad(1, "vertex needs x, y and z properties"));
    };
    let has_normals = nxyz.iter().all(Option::is_some);

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(count);
    if ascii {
        let mut line = String::new();
        while rows.len() < count {
            line.clear();
            line_no += 1;
            if input.read_line(&mut line)? == 0 {
                return Err(bad(line_no, "fewer vertices than declared"));
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(line_no, "bad number"))?;
            if vals.len() < props.len() {
                return Err(bad(line_no, "too few values"));
            }
            rows.push(vals);
        }
    } else {
        let stride: usize = props.iter().map(|(_, t)| t.size()).sum();
        let mut bytes = vec![0u8; stride * count];
        input
            .read_exact(&mut bytes)
            .map_err(|_| bad(line_no, "vertex data shorter than declared"))?;
        for rec in bytes.chunks_exact(stride) {
            let mut off = 0;
            let row = props
                .iter()
                .map(|(_, t)| {
                    let v = t.read_le(&rec[off..]);
                    off += t.size();
                    v
                })
                .collect();
            rows.push(row);
        }
    }
    let pick = |r: &[f64], i: [usize; 3]| Vec3::new(lit(r[i[0]]), lit(r[i[1]]), lit(r[i[2]]));
    let points = rows.iter().map(|r| pick(r, [x, y, z])).collect();
    let normals = has_normals.then(|| {
        let idx = nxyz.map(Option::unwrap);
        rows.iter().map(|r| pick(r, idx)).collect()
    });
    Ok(PlyData { points, normals })
}

/// ASCII OBJ: `v` and `f` records. Faces with more than three corners are
/// fan-triangulated; `v/vt/vn` corner syntax and negative indices are
/// accepted. Every other record is ignored.
pub fn read_obj<T: Real, R: BufRead>(input: R) -> Result<Mesh<T>> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let line = line?;
        let n = k + 1;
        let err = |message: String| Error::Parse { line: n, message };
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let xyz: Vec<f64> = tok
                    .take(3)
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| err("bad vertex coordinate".into()))?;
                if xyz.len() != 3 {
                    return Err(err("vertex needs three coordinates".into()));
                }
                vertices.push(Vec3::new(lit(xyz[0]), lit(xyz[1]), lit(xyz[2])));
            }
            Some("f") => {
                let idx: Vec<usize> = tok
                    .map(|c| {
                        let head = c.split('/').next().unwrap_or("");
                        let i: i64 = head.parse().map_err(|_| err(format!("bad face index {c:?}")))?;
                        let resolved = match i {
                            0 => None,
                            i if i > 0 => Some(i as usize - 1),
                            i => vertices.len().checked_sub(i.unsigned_abs() as usize),
                        };
                        resolved
                            .filter(|&r| r < vertices.len())
                            .ok_or_else(|| err(format!("face index {i} out of range")))
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(err("face needs at least three corners".into()));
                }
                for w in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[w], idx[w + 1]]);
                }
            }
            _ => {}
        }
    }
    Mesh::new(vertices, triangles)
}

/// Serialized pose. `votes` carries the detection score when there is one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    pub t: [f64; 3],
    pub e1: [f64; 3],
    pub e2: [f64; 3],
    pub s: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub votes: Option<u32>,
}

impl PoseRecord {
    pub fn new<T: Real>(pose: &Pose9D<T>, votes: Option<u32>) -> Self {
        PoseRecord {
            t: vec3_to_array(&pose.t),
            e1: vec3_to_array(&pose.e1),
            e2: vec3_to_array(&pose.e2),
            s: vec3_to_array(&pose.s),
            votes,
        }
    }

    /// Validated pose.
    pub fn pose<T: Real>(&self) -> Result<Pose9D<T>> {
        Pose9D::new(
            vec3_from_array(self.t),
            vec3_from_array(self.e1),
            vec3_from_array(self.e2),
            vec3_from_array(self.s),
        )
    }
}

/// JSON sidecar written next to a scene's PLY file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneRecord {
    pub poses: Vec<PoseRecord>,
    pub labels: Vec<i32>,
    pub viewpoint: [f64; 3],
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObjectRecord {
    pub mesh: String,
    pub t: [f64; 3],
    pub e1: [f64; 3],
    pub e2: [f64; 3],
    pub s: [f64; 3],
}

/// Scene generation input. `meshes` maps extra mesh names to OBJ files,
/// resolved relative to the spec file by the caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpecRecord {
    pub objects: Vec<SceneObjectRecord>,
    pub viewpoint: [f64; 3],
    pub samples_per_object: usize,
    #[serde(default)]
    pub outlier_count: usize,
    #[serde(default = "default_outlier_box_scale")]
    pub outlier_box_scale: f64,
    pub seed: u64,
    #[serde(default)]
    pub meshes: BTreeMap<String, PathBuf>,
}

fn default_outlier_box_scale() -> f64 {
    1.2
}

impl SceneSpecRecord {
    pub fn to_spec<T: Real>(&self) -> Result<SceneSpec<T>> {
        let objects = self
            .objects
            .iter()
            .enumerate()
            .map(|(k, o)| {
                let pose = PoseRecord {
                    t: o.t,
                    e1: o.e1,
                    e2: o.e2,
                    s: o.s,
                    votes: None,
                }
                .pose()
                .map_err(|e| Error::invalid("scene spec", format!("objects[{k}]: {e}")))?;
                Ok(SceneObject {
                    mesh: o.mesh.clone(),
                    pose,
                })
            })
            .collect::<Result<_>>()?;
        Ok(SceneSpec {
            objects,
            viewpoint: vec3_from_array(self.viewpoint),
            samples_per_object: self.samples_per_object,
            outlier_count: self.outlier_count,
            outlier_box_scale: lit(self.outlier_box_scale),
            seed: self.seed,
        })
    }
}
