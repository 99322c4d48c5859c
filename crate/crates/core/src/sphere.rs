//! Icosahedral mesh hierarchy on the unit sphere.
//!
//! Level 0 is a regular icosahedron with vertices at the geographic poles and
//! two rings at latitude ±atan(1/2). Each refinement splits every triangle into
//! four through the normalized edge midpoints. Parent vertices keep their
//! indices, and the children of triangle `t` are stored at `4t..4t+4` in the
//! order `[a, ab, ca]`, `[ab, b, bc]`, `[ca, bc, c]`, `[ab, bc, ca]`, which lets
//! [`TriangleLocator`] descend the hierarchy without storing it.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{read_file, BinReader, BinWriter};

/// A point on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl UnitVec3 {
    /// Normalizes `(x, y, z)`. The input must be nonzero.
    pub fn normalized(x: f64, y: f64, z: f64) -> Self {
        let n = (x * x + y * y + z * z).sqrt();
        Self {
            x: x / n,
            y: y / n,
            z: z / n,
        }
    }

    pub fn from_lat_lon(lat_deg: f64, lon_deg: f64) -> Self {
        let (lat, lon) = (lat_deg.to_radians(), lon_deg.to_radians());
        Self {
            x: lat.cos() * lon.cos(),
            y: lat.cos() * lon.sin(),
            z: lat.sin(),
        }
    }

    /// Latitude and longitude in degrees; longitude in `(-180, 180]`.
    pub fn lat_lon(&self) -> (f64, f64) {
        let lat = self.z.clamp(-1.0, 1.0).asin().to_degrees();
        let lon = self.y.atan2(self.x).to_degrees();
        (lat, lon)
    }

    pub fn dot(&self, o: &Self) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(&self, o: &Self) -> [f64; 3] {
        [
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        ]
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    fn midpoint(&self, o: &Self) -> Self {
        Self::normalized(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

fn dot3(a: [f64; 3], b: &UnitVec3) -> f64 {
    a[0] * b.x + a[1] * b.y + a[2] * b.z
}

fn norm3(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Great-circle distance in radians, in `[0, π]`.
pub fn geodesic_distance(a: &UnitVec3, b: &UnitVec3) -> f64 {
    norm3(a.cross(b)).atan2(a.dot(b))
}

/// Edge features `[length, dx, dy, dz]` for an edge `sender -> receiver`.
///
/// `(dx, dy, dz)` is the sender expressed in the receiver's east / north / up
/// frame, i.e. after the rotation that carries the receiver to the north pole
/// along its meridian. A self edge therefore gives `[0, 0, 0, 1]`.
pub fn local_edge_features(sender: &UnitVec3, receiver: &UnitVec3) -> [f64; 4] {
    let (east, north) = tangent_frame(receiver);
    [
        geodesic_distance(sender, receiver),
        dot3(east, sender),
        dot3(north, sender),
        sender.dot(receiver),
    ]
}

/// Unit east and north vectors at `p`. At the poles longitude 0 is used.
fn tangent_frame(p: &UnitVec3) -> ([f64; 3], [f64; 3]) {
    let rho = p.x.hypot(p.y);
    let (cl, sl) = if rho > 0.0 {
        (p.x / rho, p.y / rho)
    } else {
        (1.0, 0.0)
    };
    let east = [-sl, cl, 0.0];
    // north = up x east
    let north = [-p.z * cl, -p.z * sl, rho];
    (east, north)
}

/// Area of the spherical triangle `abc` (Van Oosterom & Strackee).
pub fn spherical_triangle_area(a: &UnitVec3, b: &UnitVec3, c: &UnitVec3) -> f64 {
    let triple = dot3(a.cross(b), c);
    let denom = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
    2.0 * triple.abs().atan2(denom)
}

/// A refined icosahedral triangulation of the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub level: u32,
    pub nodes: Vec<UnitVec3>,
    pub triangles: Vec<[u32; 3]>,
    /// Both directions of every triangle side, sorted by `(sender, receiver)`.
    pub edges: Vec<(u32, u32)>,
}

impl TriMesh {
    fn from_parts(level: u32, nodes: Vec<UnitVec3>, triangles: Vec<[u32; 3]>) -> Self {
        let mut edges: Vec<(u32, u32)> = triangles
            .iter()
            .flat_map(|t| {
                [
                    (t[0], t[1]),
                    (t[1], t[0]),
                    (t[1], t[2]),
                    (t[2], t[1]),
                    (t[2], t[0]),
                    (t[0], t[2]),
                ]
            })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        Self {
            level,
            nodes,
            triangles,
            edges,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_undirected_edges(&self) -> usize {
        self.edges.len() / 2
    }

    /// Length in radians of the longest mesh edge.
    pub fn max_edge_length(&self) -> f64 {
        self.edges
            .iter()
            .map(|&(s, r)| geodesic_distance(&self.nodes[s as usize], &self.nodes[r as usize]))
            .fold(0.0, f64::max)
    }

    pub fn triangle_vertices(&self, t: usize) -> [UnitVec3; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.nodes[a as usize],
            self.nodes[b as usize],
            self.nodes[c as usize],
        ]
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.triangle_vertices(t);
                spherical_triangle_area(&a, &b, &c)
            })
            .sum()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.to_bytes().write_to(path)
    }

    fn to_bytes(&self) -> BinWriter {
        let mut w = BinWriter::new(b"OMSH", 1);
        w.u16(self.level as u16);
        w.u64(self.nodes.len() as u64);
        w.u64(self.triangles.len() as u64);
        for n in &self.nodes {
            w.f64(n.x);
            w.f64(n.y);
            w.f64(n.z);
        }
        for t in &self.triangles {
            for &i in t {
                w.u32(i);
            }
        }
        w
    }

    pub fn encode(&self) -> Vec<u8> {
        self.to_bytes().into_bytes()
    }

    pub fn decode(data: &[u8]) -> Result<Self> {
        let (mut r, version) = BinReader::open(data, b"OMSH", "OMSH")?;
        if version != 1 {
            return Err(r.err(format!("unsupported version {version}")));
        }
        let level = r.u16()? as u32;
        let n_nodes = r.len_u64()?;
        let n_tris = r.len_u64()?;
        let mut nodes = Vec::with_capacity(n_nodes.min(1 << 24));
        for _ in 0..n_nodes {
            nodes.push(UnitVec3 {
                x: r.f64()?,
                y: r.f64()?,
                z: r.f64()?,
            });
        }
        let mut triangles = Vec::with_capacity(n_tris.min(1 << 24));
        for _ in 0..n_tris {
            let t = [r.u32()?, r.u32()?, r.u32()?];
            if t.iter().any(|&i| i as usize >= n_nodes) {
                return Err(r.err("triangle index out of range"));
            }
            triangles.push(t);
        }
        r.finish()?;
        Ok(Self::from_parts(level, nodes, triangles))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&read_file(path)?)
    }
}

/// The level-0 mesh: 12 nodes, 20 triangles, 30 undirected edges.
pub fn base_icosahedron() -> TriMesh {
    let ring_lat = 0.5f64.atan().to_degrees();
    let mut nodes = vec![UnitVec3 {
        x: 0.0,
        y: 0.0,
        z: 1.0,
    }];
    for i in 0..5 {
        nodes.push(UnitVec3::from_lat_lon(ring_lat, 72.0 * i as f64));
    }
    for i in 0..5 {
        nodes.push(UnitVec3::from_lat_lon(-ring_lat, 72.0 * i as f64 + 36.0));
    }
    nodes.push(UnitVec3 {
        x: 0.0,
        y: 0.0,
        z: -1.0,
    });

    let up = |i: u32| 1 + i % 5;
    let lo = |i: u32| 6 + i % 5;
    let mut triangles = Vec::with_capacity(20);
    for i in 0..5 {
        triangles.push([0, up(i), up(i + 1)]);
    }
    for i in 0..5 {
        triangles.push([up(i), lo(i), up(i + 1)]);
        triangles.push([up(i + 1), lo(i), lo(i + 1)]);
    }
    for i in 0..5 {
        triangles.push([11, lo(i + 1), lo(i)]);
    }
    // orient counter-clockwise seen from outside
    for t in &mut triangles {
        let [a, b, c] = [t[0], t[1], t[2]].map(|i| nodes[i as usize]);
        if dot3(a.cross(&b), &c) < 0.0 {
            t.swap(1, 2);
        }
    }
    TriMesh::from_parts(0, nodes, triangles)
}

/// Splits every triangle into four; parent nodes keep their indices.
pub fn refine(mesh: &TriMesh) -> TriMesh {
    let mut nodes = mesh.nodes.clone();
    let mut midpoints: HashMap<(u32, u32), u32> = HashMap::with_capacity(mesh.edges.len() / 2);
    let mut mid = |a: u32, b: u32, nodes: &mut Vec<UnitVec3>| -> u32 {
        let key = (a.min(b), a.max(b));
        *midpoints.entry(key).or_insert_with(|| {
            let p = nodes[a as usize].midpoint(&nodes[b as usize]);
            nodes.push(p);
            (nodes.len() - 1) as u32
        })
    };
    let mut triangles = Vec::with_capacity(mesh.triangles.len() * 4);
    for &[a, b, c] in &mesh.triangles {
        let ab = mid(a, b, &mut nodes);
        let bc = mid(b, c, &mut nodes);
        let ca = mid(c, a, &mut nodes);
        triangles.push([a, ab, ca]);
        triangles.push([ab, b, bc]);
        triangles.push([ca, bc, c]);
        triangles.push([ab, bc, ca]);
    }
    TriMesh::from_parts(mesh.level + 1, nodes, triangles)
}

pub fn mesh_at_level(level: u32) -> TriMesh {
    let mut m = base_icosahedron();
    for _ in 0..level {
        m = refine(&m);
    }
    m
}

/// Meshes at levels `finest_level - 1` and `finest_level`.
pub fn build_hierarchy(finest_level: u32) -> Result<(TriMesh, TriMesh)> {
    if finest_level == 0 {
        return Err(Error::Config(
            "mesh hierarchy needs two levels; finest_level must be >= 1".into(),
        ));
    }
    let coarse = mesh_at_level(finest_level - 1);
    let fine = refine(&coarse);
    Ok((coarse, fine))
}

/// Tolerance on the normalized edge-plane test; covers points lying exactly on
/// edges or vertices.
const LEAF_TOL: f64 = 1e-12;
/// Looser tolerance for ancestor triangles so the descent never loses a
/// qualifying leaf to rounding.
const ANCESTOR_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
struct EdgePlanes([[f64; 3]; 3]);

impl EdgePlanes {
    fn new(a: &UnitVec3, b: &UnitVec3, c: &UnitVec3) -> Self {
        let n = |p: &UnitVec3, q: &UnitVec3| {
            let v = p.cross(q);
            let l = norm3(v);
            [v[0] / l, v[1] / l, v[2] / l]
        };
        Self([n(a, b), n(b, c), n(c, a)])
    }

    fn contains(&self, p: &UnitVec3, tol: f64) -> bool {
        self.0.iter().all(|n| dot3(*n, p) >= -tol)
    }
}

/// Whether triangle `t` of `mesh` contains `p` (boundary inclusive).
pub fn triangle_contains(mesh: &TriMesh, t: usize, p: &UnitVec3) -> bool {
    let [a, b, c] = mesh.triangle_vertices(t);
    EdgePlanes::new(&a, &b, &c).contains(p, LEAF_TOL)
}

/// Point location on a refined icosahedral mesh by hierarchical descent.
///
/// Returns the lowest-index triangle containing the query point, which is the
/// same answer an exhaustive scan gives.
#[derive(Debug, Clone)]
pub struct TriangleLocator {
    /// Edge planes per level; the last entry is the mesh itself.
    levels: Vec<Vec<EdgePlanes>>,
    hierarchical: bool,
}

impl TriangleLocator {
    pub fn new(mesh: &TriMesh) -> Self {
        let leaf: Vec<EdgePlanes> = (0..mesh.triangles.len())
            .map(|t| {
                let [a, b, c] = mesh.triangle_vertices(t);
                EdgePlanes::new(&a, &b, &c)
            })
            .collect();
        let level = mesh.level as usize;
        let hierarchical = mesh.triangles.len() == 20 << (2 * level);
        let mut levels = Vec::with_capacity(level + 1);
        if hierarchical {
            for l in 0..level {
                let span = 1usize << (2 * (level - l));
                let vb = (span - 1) / 3;
                let planes = (0..(20usize << (2 * l)))
                    .map(|t| {
                        let first = t * span;
                        let a = mesh.nodes[mesh.triangles[first][0] as usize];
                        let b = mesh.nodes[mesh.triangles[first + vb][1] as usize];
                        let c = mesh.nodes[mesh.triangles[first + 2 * vb][2] as usize];
                        EdgePlanes::new(&a, &b, &c)
                    })
                    .collect();
                levels.push(planes);
            }
        }
        levels.push(leaf);
        Self {
            levels,
            hierarchical,
        }
    }

    pub fn locate(&self, p: &UnitVec3) -> usize {
        let leaf = self.levels.last().expect("locator has a leaf level");
        if !self.hierarchical {
            return Self::scan(leaf, p);
        }
        let depth = self.levels.len() - 1;
        let mut candidates: Vec<usize> = (0..self.levels[0].len()).collect();
        for (l, planes) in self.levels.iter().enumerate() {
            let tol = if l == depth { LEAF_TOL } else { ANCESTOR_TOL };
            candidates.retain(|&t| planes[t].contains(p, tol));
            if l < depth {
                candidates = candidates
                    .iter()
                    .flat_map(|&t| 4 * t..4 * t + 4)
                    .collect();
            }
        }
        match candidates.iter().min() {
            Some(&t) => t,
            None => Self::scan(leaf, p),
        }
    }

    fn scan(leaf: &[EdgePlanes], p: &UnitVec3) -> usize {
        leaf.iter()
            .position(|pl| pl.contains(p, LEAF_TOL))
            .or_else(|| {
                // Only reachable through rounding far outside the tolerance;
                // fall back to the triangle with the least violation.
                leaf.iter()
                    .enumerate()
                    .map(|(i, pl)| {
                        let worst = pl.0.iter().map(|n| dot3(*n, p)).fold(f64::INFINITY, f64::min);
                        (i, worst)
                    })
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(i, _)| i)
            })
            .expect("mesh has triangles")
    }
}

/// Index of the lowest-numbered triangle of `mesh` containing `p`.
///
/// Builds a [`TriangleLocator`] per call; use the locator directly for many
/// queries.
pub fn containing_triangle(mesh: &TriMesh, p: &UnitVec3) -> usize {
    TriangleLocator::new(mesh).locate(p)
}
