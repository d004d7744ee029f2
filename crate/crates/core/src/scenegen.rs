//! Procedural scenes: primitive meshes, OBJ ingestion and collision-free
//! placement of objects inside a box room seen by a pinhole camera.

use std::collections::HashSet;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Mat3, Pose, Vec3};
use crate::rng::{self, streams};

/// Luminance weights used to decolorize per-vertex RGB albedo.
pub const LUMINANCE: [f64; 3] = [0.2126, 0.7152, 0.0722];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub vertex_normals: Vec<Vec3>,
    /// Decolorized albedo per vertex, in `[0, 1]`.
    pub base_albedo: Vec<f64>,
    pub bounding_radius: f64,
}

impl Mesh {
    /// Builds a mesh, computing normals when `normals` is `None` and the
    /// bounding radius about the vertex centroid.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>, normals: Option<Vec<Vec3>>, base_albedo: Option<Vec<f64>>) -> Result<Self> {
        let n = vertices.len();
        if n == 0 || triangles.is_empty() {
            return Err(Error::InvalidParameter("mesh needs at least one triangle".into()));
        }
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i as usize >= n)) {
            return Err(Error::InvalidParameter(format!("triangle {t:?} indexes past {n} vertices")));
        }
        let vertex_normals = match normals {
            Some(ns) if ns.len() == n => ns.into_iter().map(Vec3::normalize).collect(),
            Some(ns) => return Err(Error::InvalidParameter(format!("{} normals for {n} vertices", ns.len()))),
            None => area_weighted_normals(&vertices, &triangles),
        };
        let base_albedo = match base_albedo {
            Some(a) if a.len() == n => a.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            Some(a) => return Err(Error::InvalidParameter(format!("{} albedo values for {n} vertices", a.len()))),
            None => vec![1.0; n],
        };
        let mut mesh = Mesh {
            vertices,
            triangles,
            vertex_normals,
            base_albedo,
            bounding_radius: 0.0,
        };
        let c = mesh.centroid();
        mesh.bounding_radius = mesh.vertices.iter().map(|&v| (v - c).norm()).fold(0.0, f64::max);
        Ok(mesh)
    }

    pub fn centroid(&self) -> Vec3 {
        let sum = self.vertices.iter().fold(Vec3::ZERO, |a, &v| a + v);
        sum / self.vertices.len() as f64
    }

    /// Largest distance between two vertices.
    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, &a) in self.vertices.iter().enumerate() {
            for &b in &self.vertices[i + 1..] {
                d = d.max((a - b).norm());
            }
        }
        d
    }
}

fn area_weighted_normals(vertices: &[Vec3], triangles: &[[u32; 3]]) -> Vec<Vec3> {
    let mut acc = vec![Vec3::ZERO; vertices.len()];
    for t in triangles {
        let [a, b, c] = t.map(|i| vertices[i as usize]);
        // unnormalized cross product has length 2·area
        let n = (b - a).cross(c - a);
        for &i in t {
            acc[i as usize] += n;
        }
    }
    acc.into_iter()
        .map(|n| if n.norm() > 0.0 { n.normalize() } else { Vec3::new(0.0, 0.0, 1.0) })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Primitive {
    /// Axis-aligned cube with edge `size`.
    Cube { size: f64 },
    /// Subdivided icosahedron of the given radius.
    Icosphere { radius: f64, subdivisions: u32 },
    /// Capped cylinder along +z; `segments = 8·2^subdivisions`.
    Cylinder { radius: f64, height: f64, subdivisions: u32 },
    /// Square of edge `size` in the z = 0 plane, normal +z.
    Plane { size: f64 },
}

pub fn make_primitive(kind: Primitive) -> Result<Mesh> {
    let positive = |name: &str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
        }
    };
    let subdiv_ok = |s: u32| {
        if s <= 4 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("subdivision {s} exceeds 4")))
        }
    };
    match kind {
        Primitive::Cube { size } => {
            positive("size", size)?;
            let h = size / 2.0;
            let vertices = (0..8)
                .map(|i| {
                    Vec3::new(
                        if i & 1 == 0 { -h } else { h },
                        if i & 2 == 0 { -h } else { h },
                        if i & 4 == 0 { -h } else { h },
                    )
                })
                .collect();
            let triangles = vec![
                [0, 2, 3],
                [0, 3, 1], // -z
                [4, 5, 7],
                [4, 7, 6], // +z
                [0, 1, 5],
                [0, 5, 4], // -y
                [2, 6, 7],
                [2, 7, 3], // +y
                [0, 4, 6],
                [0, 6, 2], // -x
                [1, 3, 7],
                [1, 7, 5], // +x
            ];
            Mesh::new(vertices, triangles, None, None)
        }
        Primitive::Icosphere { radius, subdivisions } => {
            positive("radius", radius)?;
            subdiv_ok(subdivisions)?;
            let (unit, triangles) = icosphere(subdivisions);
            let vertices = unit.iter().map(|&v| v * radius).collect();
            Mesh::new(vertices, triangles, Some(unit), None)
        }
        Primitive::Cylinder {
            radius,
            height,
            subdivisions,
        } => {
            positive("radius", radius)?;
            positive("height", height)?;
            subdiv_ok(subdivisions)?;
            let segments = 8u32 << subdivisions;
            let h = height / 2.0;
            let mut vertices = Vec::with_capacity(2 * segments as usize + 2);
            for z in [-h, h] {
                for s in 0..segments {
                    let a = 2.0 * PI * s as f64 / segments as f64;
                    vertices.push(Vec3::new(radius * a.cos(), radius * a.sin(), z));
                }
            }
            let bottom = 2 * segments;
            let top = bottom + 1;
            vertices.push(Vec3::new(0.0, 0.0, -h));
            vertices.push(Vec3::new(0.0, 0.0, h));
            let mut triangles = Vec::new();
            for s in 0..segments {
                let n = (s + 1) % segments;
                let (b0, b1, t0, t1) = (s, n, s + segments, n + segments);
                triangles.push([b0, b1, t1]);
                triangles.push([b0, t1, t0]);
                triangles.push([bottom, b1, b0]);
                triangles.push([top, t0, t1]);
            }
            Mesh::new(vertices, triangles, None, None)
        }
        Primitive::Plane { size } => {
            positive("size", size)?;
            let h = size / 2.0;
            let vertices = vec![Vec3::new(-h, -h, 0.0), Vec3::new(h, -h, 0.0), Vec3::new(h, h, 0.0), Vec3::new(-h, h, 0.0)];
            let normals = vec![Vec3::new(0.0, 0.0, 1.0); 4];
            Mesh::new(vertices, vec![[0, 1, 2], [0, 2, 3]], Some(normals), None)
        }
    }
}

fn icosphere(subdivisions: u32) -> (Vec<Vec3>, Vec<[u32; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints = std::collections::HashMap::new();
        let mut midpoint = |a: u32, b: u32, vertices: &mut Vec<Vec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                vertices.push(((vertices[a as usize] + vertices[b as usize]) * 0.5).normalize());
                (vertices.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    (vertices, faces)
}

/// Parses the `v` / `vn` / `f` subset of Wavefront OBJ.
///
/// `v x y z r g b` vertex colors are decolorized with [`LUMINANCE`];
/// `v x y z g` is read as a grayscale albedo. Faces may use `i`, `i/t`,
/// `i/t/n` or `i//n` references, 1-based or negative. Other records are ignored.
pub fn load_obj(text: &str) -> Result<Mesh> {
    let mut positions = Vec::new();
    let mut albedo = Vec::new();
    let mut has_albedo = false;
    let mut normals = Vec::new();
    let mut triangles = Vec::new();
    let mut face_normals: Vec<[Option<usize>; 3]> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut parts = content.split_whitespace();
        let Some(tag) = parts.next() else { continue };
        let parse_floats = |parts: std::str::SplitWhitespace| -> Result<Vec<f64>> {
            parts
                .map(|p| {
                    p.parse::<f64>().map_err(|e| Error::Parse {
                        line,
                        message: format!("{p:?}: {e}"),
                    })
                })
                .collect()
        };
        match tag {
            "v" => {
                let vals = parse_floats(parts)?;
                let a = match vals.len() {
                    3 => 1.0,
                    4 => {
                        has_albedo = true;
                        vals[3]
                    }
                    6 => {
                        has_albedo = true;
                        LUMINANCE[0] * vals[3] + LUMINANCE[1] * vals[4] + LUMINANCE[2] * vals[5]
                    }
                    n => {
                        return Err(Error::Parse {
                            line,
                            message: format!("vertex has {n} components"),
                        })
                    }
                };
                positions.push(Vec3::new(vals[0], vals[1], vals[2]));
                albedo.push(a);
            }
            "vn" => {
                let vals = parse_floats(parts)?;
                if vals.len() != 3 {
                    return Err(Error::Parse {
                        line,
                        message: format!("normal has {} components", vals.len()),
                    });
                }
                normals.push(Vec3::new(vals[0], vals[1], vals[2]));
            }
            "f" => {
                let refs: Vec<&str> = parts.collect();
                if refs.len() != 3 {
                    return Err(Error::NonTriangularFace { line });
                }
                let mut tri = [0u32; 3];
                let mut tri_normals = [None; 3];
                for (k, r) in refs.iter().enumerate() {
                    let mut fields = r.split('/');
                    let v = resolve_index(fields.next().unwrap_or(""), positions.len(), line)?;
                    tri[k] = v as u32;
                    let _texcoord = fields.next();
                    if let Some(n) = fields.next().filter(|s| !s.is_empty()) {
                        tri_normals[k] = Some(resolve_index(n, normals.len(), line)?);
                    }
                }
                triangles.push(tri);
                face_normals.push(tri_normals);
            }
            _ => {}
        }
    }

    let all_have_normals = !face_normals.is_empty() && face_normals.iter().all(|f| f.iter().all(Option::is_some));
    let vertex_normals = if all_have_normals {
        let mut acc = vec![Vec3::ZERO; positions.len()];
        for (tri, ns) in triangles.iter().zip(&face_normals) {
            for (&v, n) in tri.iter().zip(ns) {
                acc[v as usize] += normals[n.unwrap()].normalize();
            }
        }
        let computed = area_weighted_normals(&positions, &triangles);
        Some(
            acc.into_iter()
                .zip(computed)
                .map(|(a, c)| if a.norm() > 0.0 { a.normalize() } else { c })
                .collect(),
        )
    } else {
        None
    };
    if triangles.is_empty() {
        return Err(Error::Parse {
            line: text.lines().count(),
            message: "no faces".into(),
        });
    }
    Mesh::new(positions, triangles, vertex_normals, has_albedo.then_some(albedo))
}

fn resolve_index(s: &str, count: usize, line: usize) -> Result<usize> {
    let i: i64 = s.parse().map_err(|e| Error::Parse {
        line,
        message: format!("index {s:?}: {e}"),
    })?;
    let idx = if i > 0 { i - 1 } else { count as i64 + i };
    if i == 0 || idx < 0 || idx as usize >= count {
        return Err(Error::Parse {
            line,
            message: format!("index {i} out of range (have {count})"),
        });
    }
    Ok(idx as usize)
}

/// Interior of the room: floor at z = 0, centered on the origin in x/y.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub width: f64,
    pub depth: f64,
    pub height: f64,
}

impl Default for Room {
    fn default() -> Self {
        Room {
            width: 4.0,
            depth: 4.0,
            height: 3.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    /// Focal length equal to the image height, principal point at the center.
    pub fn default_for(width: usize, height: usize) -> Self {
        Intrinsics {
            fx: height as f64,
            fy: height as f64,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
        }
    }

    /// Same field of view at another resolution.
    pub fn scaled_to(&self, width: usize, height: usize) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Intrinsics {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width,
            height,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    /// Scene → camera.
    pub world_to_camera: Pose,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    /// Index into [`SceneGraph::meshes`].
    pub mesh: usize,
    /// Mesh → scene.
    pub pose: Pose,
    pub object_id: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub scene_id: u32,
    pub room: Option<Room>,
    pub meshes: Vec<Mesh>,
    pub objects: Vec<SceneObject>,
    pub camera: Camera,
}

/// One world-space triangle with its shading attributes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorldTriangle {
    pub v: [Vec3; 3],
    pub n: [Vec3; 3],
    pub albedo: [f64; 3],
    pub instance: i32,
}

impl SceneGraph {
    pub fn world_to_camera(&self) -> Pose {
        self.camera.world_to_camera
    }

    /// World-space bounding sphere (center, radius) of each object.
    pub fn bounding_spheres(&self) -> Vec<(Vec3, f64)> {
        self.objects
            .iter()
            .map(|o| {
                let mesh = &self.meshes[o.mesh];
                (o.pose.transform_point(mesh.centroid()), mesh.bounding_radius)
            })
            .collect()
    }

    pub fn instance_ids(&self) -> Vec<i32> {
        let mut ids = vec![0];
        ids.extend(self.objects.iter().map(|o| o.object_id));
        ids
    }

    /// All triangles in world space: the room's six walls (instance 0) first,
    /// then each object's mesh.
    pub fn world_triangles(&self) -> Vec<WorldTriangle> {
        let mut out = Vec::new();
        if let Some(room) = self.room {
            let (hx, hy, h) = (room.width / 2.0, room.depth / 2.0, room.height);
            let c = |x: f64, y: f64, z: f64| Vec3::new(x, y, z);
            // (corners counter-clockwise seen from inside, inward normal)
            let walls = [
                ([c(-hx, -hy, 0.0), c(hx, -hy, 0.0), c(hx, hy, 0.0), c(-hx, hy, 0.0)], c(0.0, 0.0, 1.0)),
                ([c(-hx, -hy, h), c(-hx, hy, h), c(hx, hy, h), c(hx, -hy, h)], c(0.0, 0.0, -1.0)),
                ([c(-hx, -hy, 0.0), c(-hx, hy, 0.0), c(-hx, hy, h), c(-hx, -hy, h)], c(1.0, 0.0, 0.0)),
                ([c(hx, -hy, 0.0), c(hx, -hy, h), c(hx, hy, h), c(hx, hy, 0.0)], c(-1.0, 0.0, 0.0)),
                ([c(-hx, -hy, 0.0), c(-hx, -hy, h), c(hx, -hy, h), c(hx, -hy, 0.0)], c(0.0, 1.0, 0.0)),
                ([c(-hx, hy, 0.0), c(hx, hy, 0.0), c(hx, hy, h), c(-hx, hy, h)], c(0.0, -1.0, 0.0)),
            ];
            for (q, n) in walls {
                for tri in [[q[0], q[1], q[2]], [q[0], q[2], q[3]]] {
                    out.push(WorldTriangle {
                        v: tri,
                        n: [n; 3],
                        albedo: [1.0; 3],
                        instance: 0,
                    });
                }
            }
        }
        for obj in &self.objects {
            let mesh = &self.meshes[obj.mesh];
            for t in &mesh.triangles {
                let idx = t.map(|i| i as usize);
                out.push(WorldTriangle {
                    v: idx.map(|i| obj.pose.transform_point(mesh.vertices[i])),
                    n: idx.map(|i| obj.pose.transform_vector(mesh.vertex_normals[i])),
                    albedo: idx.map(|i| mesh.base_albedo[i]),
                    instance: obj.object_id,
                });
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene graphs always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlacementConfig {
    pub max_attempts: usize,
    /// Uniform SO(3) orientation instead of yaw-only.
    pub full_rotation: bool,
    /// Half-extent (m) of the floor square objects are spread over; clipped to the room.
    pub spread: f64,
    pub camera_distance: f64,
    pub camera_elevation_deg: f64,
    pub resolution: (usize, usize),
}

impl Default for PlacementConfig {
    fn default() -> Self {
        PlacementConfig {
            max_attempts: 1000,
            full_rotation: false,
            spread: 0.6,
            camera_distance: 2.0,
            camera_elevation_deg: 45.0,
            resolution: (64, 64),
        }
    }
}

/// Places `count` objects, drawn from `meshes`, on the room floor with
/// pairwise-disjoint bounding spheres, and puts the camera on the elevation
/// arc looking at the floor center. Pure in `(meshes, room, count, seed, cfg)`.
///
/// Each bounding sphere rests on the floor, so its object hovers slightly
/// unless the mesh is itself a sphere.
pub fn place_objects(meshes: &[Mesh], room: Room, count: usize, seed: u64, cfg: &PlacementConfig) -> Result<SceneGraph> {
    if count == 0 || meshes.is_empty() {
        return Err(Error::InvalidParameter("need at least one mesh and one object".into()));
    }
    if !(room.width > 0.0 && room.depth > 0.0 && room.height > 0.0) {
        return Err(Error::InvalidParameter("room dimensions must be positive".into()));
    }
    let smallest = meshes.iter().map(|m| m.bounding_radius).fold(f64::INFINITY, f64::min);
    if 2.0 * smallest > room.width.min(room.depth).min(room.height) {
        return Err(Error::InvalidParameter("room cannot hold a single bounding sphere".into()));
    }

    let mut rng = rng::stream_rng(seed, streams::PLACEMENT, 0);
    let mut spheres: Vec<(Vec3, f64)> = Vec::with_capacity(count);
    let mut objects = Vec::with_capacity(count);
    for object in 0..count {
        let mut placed = false;
        for _ in 0..cfg.max_attempts {
            let mesh_index = ((rng::uniform(&mut rng) * meshes.len() as f64) as usize).min(meshes.len() - 1);
            let mesh = &meshes[mesh_index];
            let r = mesh.bounding_radius;
            let rotation = if cfg.full_rotation {
                uniform_rotation([rng::uniform(&mut rng), rng::uniform(&mut rng), rng::uniform(&mut rng)])
            } else {
                Mat3::rotation_z(2.0 * PI * rng::uniform(&mut rng))
            };
            let hx = (room.width / 2.0).min(cfg.spread) - r;
            let hy = (room.depth / 2.0).min(cfg.spread) - r;
            let (ux, uy) = (rng::uniform(&mut rng), rng::uniform(&mut rng));
            if hx < 0.0 || hy < 0.0 || 2.0 * r > room.height {
                continue;
            }
            let center = Vec3::new((2.0 * ux - 1.0) * hx, (2.0 * uy - 1.0) * hy, r);
            if spheres.iter().any(|&(c, rc)| (c - center).norm() <= r + rc) {
                continue;
            }
            let translation = center - rotation.mul_vec(mesh.centroid());
            spheres.push((center, r));
            objects.push(SceneObject {
                mesh: mesh_index,
                pose: Pose::new(rotation, translation),
                object_id: object as i32 + 1,
            });
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::PlacementFailure {
                object,
                attempts: cfg.max_attempts,
            });
        }
    }

    let mut cam_rng = rng::stream_rng(seed, streams::CAMERA, 0);
    let azimuth = 2.0 * PI * rng::uniform(&mut cam_rng);
    let elevation = cfg.camera_elevation_deg.to_radians();
    let eye = Vec3::new(
        cfg.camera_distance * elevation.cos() * azimuth.cos(),
        cfg.camera_distance * elevation.cos() * azimuth.sin(),
        cfg.camera_distance * elevation.sin(),
    );
    let (w, h) = cfg.resolution;
    Ok(SceneGraph {
        scene_id: 0,
        room: Some(room),
        meshes: meshes.to_vec(),
        objects,
        camera: Camera {
            intrinsics: Intrinsics::default_for(w, h),
            world_to_camera: Pose::look_at(eye, Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0)),
        },
    })
}

/// Shoemake's uniform random rotation from three uniforms.
fn uniform_rotation(u: [f64; 3]) -> Mat3 {
    let (a, b) = ((1.0 - u[0]).sqrt(), u[0].sqrt());
    let (t1, t2) = (2.0 * PI * u[1], 2.0 * PI * u[2]);
    let (w, x, y, z) = (b * t2.cos(), a * t1.sin(), a * t1.cos(), b * t2.sin());
    Mat3 {
        rows: [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ],
    }
}

/// Families of procedural object shapes used to build training and
/// cross-shape evaluation scenes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeSet {
    /// Cubes and icospheres.
    #[default]
    Boxy,
    /// Cylinders of two proportions.
    Cylinders,
}

impl ShapeSet {
    pub fn meshes(self) -> Vec<Mesh> {
        let prims = match self {
            ShapeSet::Boxy => vec![
                Primitive::Cube { size: 0.22 },
                Primitive::Icosphere {
                    radius: 0.13,
                    subdivisions: 2,
                },
                Primitive::Cube { size: 0.15 },
            ],
            ShapeSet::Cylinders => vec![
                Primitive::Cylinder {
                    radius: 0.08,
                    height: 0.25,
                    subdivisions: 1,
                },
                Primitive::Cylinder {
                    radius: 0.13,
                    height: 0.12,
                    subdivisions: 1,
                },
            ],
        };
        prims
            .into_iter()
            .map(|p| make_primitive(p).expect("built-in primitives are valid"))
            .collect()
    }
}

/// Brute-force count of overlapping bounding-sphere pairs.
pub fn count_sphere_overlaps(scene: &SceneGraph) -> usize {
    let spheres = scene.bounding_spheres();
    let mut overlaps = 0;
    for (i, &(a, ra)) in spheres.iter().enumerate() {
        for &(b, rb) in &spheres[i + 1..] {
            if (a - b).norm() <= ra + rb {
                overlaps += 1;
            }
        }
    }
    overlaps
}

/// True when every object id is unique and positive.
pub fn object_ids_valid(scene: &SceneGraph) -> bool {
    let mut seen = HashSet::new();
    scene.objects.iter().all(|o| o.object_id >= 1 && seen.insert(o.object_id))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge_counts(mesh: &Mesh) -> std::collections::HashMap<(u32, u32), usize> {
        let mut edges = std::collections::HashMap::new();
        for t in &mesh.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges
    }

    fn assert_outward_watertight(mesh: &Mesh) {
        assert!(edge_counts(mesh).values().all(|&c| c == 2), "open edge");
        let c = mesh.centroid();
        for t in &mesh.triangles {
            let [a, b, d] = t.map(|i| mesh.vertices[i as usize]);
            let face_n = (b - a).cross(d - a);
            let center = (a + b + d) / 3.0;
            assert!(face_n.dot(center - c) > 0.0, "inward face {t:?}");
        }
        for n in &mesh.vertex_normals {
            assert!((n.norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn cube_counts() {
        let m = make_primitive(Primitive::Cube { size: 1.0 }).unwrap();
        assert_eq!(m.vertices.len(), 8);
        assert_eq!(m.triangles.len(), 12);
        assert!(m.base_albedo.iter().all(|&a| a == 1.0));
        assert_outward_watertight(&m);
        assert!((m.bounding_radius - 3f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn icosphere_triangle_recurrence() {
        // independent count: each subdivision splits every face into four
        for s in 0..=4u32 {
            let m = make_primitive(Primitive::Icosphere {
                radius: 0.3,
                subdivisions: s,
            })
            .unwrap();
            let mut expected = 20;
            for _ in 0..s {
                expected *= 4;
            }
            assert_eq!(m.triangles.len(), expected);
            assert_outward_watertight(&m);
        }
        assert_eq!(
            make_primitive(Primitive::Icosphere {
                radius: 1.0,
                subdivisions: 2
            })
            .unwrap()
            .triangles
            .len(),
            320
        );
    }

    #[test]
    fn icosphere_normals_are_radial() {
        let m = make_primitive(Primitive::Icosphere {
            radius: 2.5,
            subdivisions: 0,
        })
        .unwrap();
        for (v, n) in m.vertices.iter().zip(&m.vertex_normals) {
            assert!((v.normalize() - *n).norm() < 1e-12);
        }
    }

    #[test]
    fn cylinder_is_closed() {
        let m = make_primitive(Primitive::Cylinder {
            radius: 0.1,
            height: 0.3,
            subdivisions: 1,
        })
        .unwrap();
        assert_outward_watertight(&m);
        assert_eq!(m.triangles.len(), 4 * 16);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(make_primitive(Primitive::Cube { size: 0.0 }), Err(Error::InvalidParameter(_))));
        assert!(matches!(make_primitive(Primitive::Plane { size: -1.0 }), Err(Error::InvalidParameter(_))));
        assert!(matches!(
            make_primitive(Primitive::Icosphere {
                radius: 1.0,
                subdivisions: 5
            }),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn obj_single_triangle_and_normal() {
        let m = load_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        assert_eq!(m.triangles.len(), 1);
        // (1,0,0) × (0,1,0) = (0,0,1)
        for n in &m.vertex_normals {
            assert_eq!(*n, Vec3::new(0.0, 0.0, 1.0));
        }
        assert!(m.base_albedo.iter().all(|&a| a == 1.0));
    }

    #[test]
    fn obj_rejects_quads_and_bad_lines() {
        let quad = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        assert!(matches!(load_obj(quad), Err(Error::NonTriangularFace { line: 5 })));
        assert!(matches!(load_obj("v 0 0 x\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(load_obj("v 0 0 0\nf 1 2 3\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn obj_reads_normals_colors_and_slashes() {
        let text = "# tri\nv 0 0 0 1 0 0\nv 1 0 0 1 0 0\nv 0 1 0 1 0 0\nvt 0 0\nvn 0 0 -1\nf 1/1/1 2/1/1 -1//1\n";
        let m = load_obj(text).unwrap();
        assert_eq!(m.vertex_normals[2], Vec3::new(0.0, 0.0, -1.0));
        assert!((m.base_albedo[0] - LUMINANCE[0]).abs() < 1e-12);
    }

    #[test]
    fn placement_basics() {
        let cube = make_primitive(Primitive::Cube { size: 0.2 }).unwrap();
        let room = Room {
            width: 2.0,
            depth: 2.0,
            height: 2.0,
        };
        let cfg = PlacementConfig::default();
        let one = place_objects(std::slice::from_ref(&cube), room, 1, 3, &cfg).unwrap();
        assert_eq!(count_sphere_overlaps(&one), 0);

        let a = place_objects(std::slice::from_ref(&cube), room, 5, 7, &cfg).unwrap();
        let b = place_objects(std::slice::from_ref(&cube), room, 5, 7, &cfg).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert!(object_ids_valid(&a));

        let spheres = a.bounding_spheres();
        for i in 0..spheres.len() {
            for j in i + 1..spheres.len() {
                assert!((spheres[i].0 - spheres[j].0).norm() > 2.0 * cube.bounding_radius);
            }
        }
        for o in &a.objects {
            assert!(o.pose.rotation.orthonormality_error() < 1e-6);
            assert!((o.pose.rotation.determinant() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn placement_failure_is_reported() {
        let big = make_primitive(Primitive::Icosphere {
            radius: 0.5,
            subdivisions: 0,
        })
        .unwrap();
        let cfg = PlacementConfig {
            max_attempts: 50,
            ..Default::default()
        };
        let err = place_objects(&[big], Room::default(), 20, 1, &cfg).unwrap_err();
        assert!(matches!(err, Error::PlacementFailure { attempts: 50, .. }));
    }

    #[test]
    fn scene_json_round_trip() {
        let cube = make_primitive(Primitive::Cube { size: 0.2 }).unwrap();
        let s = place_objects(&[cube], Room::default(), 3, 11, &PlacementConfig::default()).unwrap();
        assert_eq!(SceneGraph::from_json(&s.to_json()).unwrap(), s);
    }
}
