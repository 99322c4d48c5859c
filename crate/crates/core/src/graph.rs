//! The heterogeneous ocean graph: ocean-only grid nodes, a coarse and a fine
//! mesh node set, and grid→mesh, mesh→mesh and mesh→grid edges.
//!
//! Land cells never become nodes. Grid→mesh edges join an ocean cell to every
//! mesh node within a radius, mesh→grid edges join the three vertices of the
//! containing triangle to the cell, and mesh→mesh edges are kept only between
//! ocean-connected mesh nodes (nodes with at least one grid edge). Every edge
//! list is sorted by `(receiver, sender)`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::OceanGrid;
use crate::io::{read_file, BinReader, BinWriter};
use crate::sphere::{geodesic_distance, local_edge_features, TriMesh, TriangleLocator, UnitVec3};

/// Which meshes receive grid→mesh edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GridToMesh {
    #[default]
    BothMeshes,
    FineOnly,
}

/// Construction options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphOptions {
    /// Grid→mesh radius as a multiple of the longest fine-mesh edge.
    pub radius_factor: f64,
    pub grid_to_mesh: GridToMesh,
}

impl Default for GraphOptions {
    fn default() -> Self {
        Self {
            radius_factor: 0.6,
            grid_to_mesh: GridToMesh::BothMeshes,
        }
    }
}

/// Directed edges with their geometric features.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EdgeSet {
    pub senders: Vec<u32>,
    pub receivers: Vec<u32>,
    /// `[length, dx, dy, dz]` per edge, see [`local_edge_features`].
    pub features: Vec<[f32; 4]>,
}

impl EdgeSet {
    pub fn len(&self) -> usize {
        self.senders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.senders.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.senders.iter().copied().zip(self.receivers.iter().copied())
    }

    fn from_pairs(pairs: &[(u32, u32)], sender_pos: &[UnitVec3], receiver_pos: &[UnitVec3]) -> Self {
        let features = pairs
            .iter()
            .map(|&(s, r)| {
                local_edge_features(&sender_pos[s as usize], &receiver_pos[r as usize])
                    .map(|v| v as f32)
            })
            .collect();
        Self {
            senders: pairs.iter().map(|p| p.0).collect(),
            receivers: pairs.iter().map(|p| p.1).collect(),
            features,
        }
    }
}

/// Mesh nodes kept in the graph.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeshNodes {
    pub level: u32,
    /// Index of each kept node in the full mesh.
    pub mesh_ids: Vec<u32>,
    pub positions: Vec<UnitVec3>,
}

impl MeshNodes {
    pub fn len(&self) -> usize {
        self.mesh_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mesh_ids.is_empty()
    }

    /// `[cos lat, sin lon, cos lon]` per node.
    pub fn input_features(&self) -> Vec<[f64; 3]> {
        self.positions.iter().map(mesh_node_features).collect()
    }
}

/// `[cos lat, sin lon, cos lon]` of a mesh node.
pub fn mesh_node_features(p: &UnitVec3) -> [f64; 3] {
    let (lat, lon) = p.lat_lon();
    let (lat, lon) = (lat.to_radians(), lon.to_radians());
    [lat.cos(), lon.sin(), lon.cos()]
}

/// Edges of one mesh level: grid→mesh, mesh→mesh and mesh→grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeshEdges {
    pub nodes: MeshNodes,
    /// Sender: grid node; receiver: mesh node.
    pub g2m: EdgeSet,
    pub m2m: EdgeSet,
    /// Sender: mesh node; receiver: grid node.
    pub m2g: EdgeSet,
}

/// The pruned graph. Node indices in edge sets are compact: grid nodes index
/// [`OceanGraph::grid_cells`], mesh nodes index [`MeshNodes::mesh_ids`].
#[derive(Debug, Clone, PartialEq)]
pub struct OceanGraph {
    pub n_lat: usize,
    pub n_lon: usize,
    pub options: GraphOptions,
    /// Ocean cells in row-major order.
    pub grid_cells: Vec<u32>,
    pub grid_positions: Vec<UnitVec3>,
    pub coarse: MeshEdges,
    pub fine: MeshEdges,
}

impl OceanGraph {
    pub fn n_grid(&self) -> usize {
        self.grid_cells.len()
    }

    pub fn meshes(&self) -> [&MeshEdges; 2] {
        [&self.coarse, &self.fine]
    }

    /// One-line human summary of node and edge counts.
    pub fn summary(&self) -> String {
        format!(
            "grid nodes={} coarse nodes={} fine nodes={} g2m edges={} m2m coarse edges={} m2m fine edges={} m2g edges={}",
            self.n_grid(),
            self.coarse.nodes.len(),
            self.fine.nodes.len(),
            self.coarse.g2m.len() + self.fine.g2m.len(),
            self.coarse.m2m.len(),
            self.fine.m2m.len(),
            self.coarse.m2g.len() + self.fine.m2g.len(),
        )
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = BinWriter::new(b"OGRF", 1);
        w.u32(self.n_lat as u32);
        w.u32(self.n_lon as u32);
        w.f64(self.options.radius_factor);
        w.u8(match self.options.grid_to_mesh {
            GridToMesh::BothMeshes => 0,
            GridToMesh::FineOnly => 1,
        });
        w.u64(self.grid_cells.len() as u64);
        for (&c, p) in self.grid_cells.iter().zip(&self.grid_positions) {
            w.u32(c);
            write_pos(&mut w, p);
        }
        for m in [&self.coarse, &self.fine] {
            w.u32(m.nodes.level);
            w.u64(m.nodes.len() as u64);
            for (&id, p) in m.nodes.mesh_ids.iter().zip(&m.nodes.positions) {
                w.u32(id);
                write_pos(&mut w, p);
            }
            for e in [&m.g2m, &m.m2m, &m.m2g] {
                w.u64(e.len() as u64);
                for ((&s, &r), f) in e.senders.iter().zip(&e.receivers).zip(&e.features) {
                    w.u32(s);
                    w.u32(r);
                    w.f32s(f);
                }
            }
        }
        w.into_bytes()
    }

    pub fn decode(data: &[u8]) -> Result<Self> {
        let (mut r, version) = BinReader::open(data, b"OGRF", "OGRF")?;
        if version != 1 {
            return Err(r.err(format!("unsupported version {version}")));
        }
        let n_lat = r.u32()? as usize;
        let n_lon = r.u32()? as usize;
        let radius_factor = r.f64()?;
        let grid_to_mesh = match r.u8()? {
            0 => GridToMesh::BothMeshes,
            1 => GridToMesh::FineOnly,
            other => return Err(r.err(format!("bad grid-to-mesh mode {other}"))),
        };
        let n_grid = r.len_u64()?;
        let mut grid_cells = Vec::with_capacity(n_grid.min(1 << 24));
        let mut grid_positions = Vec::with_capacity(n_grid.min(1 << 24));
        for _ in 0..n_grid {
            grid_cells.push(r.u32()?);
            grid_positions.push(read_pos(&mut r)?);
        }
        let mut meshes = Vec::with_capacity(2);
        for _ in 0..2 {
            let level = r.u32()?;
            let n = r.len_u64()?;
            let mut nodes = MeshNodes {
                level,
                mesh_ids: Vec::with_capacity(n.min(1 << 24)),
                positions: Vec::with_capacity(n.min(1 << 24)),
            };
            for _ in 0..n {
                nodes.mesh_ids.push(r.u32()?);
                nodes.positions.push(read_pos(&mut r)?);
            }
            let mut sets = Vec::with_capacity(3);
            for _ in 0..3 {
                let n = r.len_u64()?;
                let mut e = EdgeSet::default();
                for _ in 0..n {
                    e.senders.push(r.u32()?);
                    e.receivers.push(r.u32()?);
                    let f = r.f32s(4)?;
                    e.features.push([f[0], f[1], f[2], f[3]]);
                }
                sets.push(e);
            }
            let m2g = sets.pop().expect("three sets");
            let m2m = sets.pop().expect("three sets");
            let g2m = sets.pop().expect("three sets");
            meshes.push(MeshEdges {
                nodes,
                g2m,
                m2m,
                m2g,
            });
        }
        r.finish()?;
        let fine = meshes.pop().expect("two meshes");
        let coarse = meshes.pop().expect("two meshes");
        let g = Self {
            n_lat,
            n_lon,
            options: GraphOptions {
                radius_factor,
                grid_to_mesh,
            },
            grid_cells,
            grid_positions,
            coarse,
            fine,
        };
        g.validate().map_err(|e| r.err(e.to_string()))?;
        Ok(g)
    }

    /// Checks index ranges and edge ordering.
    pub fn validate(&self) -> Result<()> {
        let ng = self.n_grid() as u32;
        if self.grid_cells.iter().any(|&c| c as usize >= self.n_lat * self.n_lon) {
            return Err(Error::Data("grid cell id out of range".into()));
        }
        for m in self.meshes() {
            let nm = m.nodes.len() as u32;
            for (e, ns, nr, what) in [
                (&m.g2m, ng, nm, "grid-to-mesh"),
                (&m.m2m, nm, nm, "mesh-to-mesh"),
                (&m.m2g, nm, ng, "mesh-to-grid"),
            ] {
                if e.pairs().any(|(s, r)| s >= ns || r >= nr) {
                    return Err(Error::Data(format!("{what} edge index out of range")));
                }
                if e.senders.len() != e.features.len() || e.receivers.len() != e.features.len() {
                    return Err(Error::Data(format!("{what} edge arrays differ in length")));
                }
                let sorted = e
                    .senders
                    .windows(2)
                    .zip(e.receivers.windows(2))
                    .all(|(s, r)| (r[0], s[0]) < (r[1], s[1]));
                if !sorted {
                    return Err(Error::Data(format!("{what} edges not sorted")));
                }
            }
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&read_file(path)?)
    }
}

fn write_pos(w: &mut BinWriter, p: &UnitVec3) {
    w.f64(p.x);
    w.f64(p.y);
    w.f64(p.z);
}

fn read_pos(r: &mut BinReader) -> Result<UnitVec3> {
    Ok(UnitVec3 {
        x: r.f64()?,
        y: r.f64()?,
        z: r.f64()?,
    })
}

fn sort_by_receiver(pairs: &mut [(u32, u32)]) {
    pairs.sort_unstable_by_key(|&(s, r)| (r, s));
}

/// Grid→mesh edges `(cell, mesh node)`: every ocean cell connects to every mesh
/// node within `radius` radians, or to its nearest mesh node (lowest index on
/// ties) when none is that close.
pub fn grid_to_mesh_edges(grid: &OceanGrid, mesh: &TriMesh, radius: f64) -> Vec<(u32, u32)> {
    // mesh nodes sorted by latitude; |Δlat| never exceeds the geodesic distance
    let mut by_lat: Vec<(f64, u32)> = mesh
        .nodes
        .iter()
        .enumerate()
        .map(|(i, p)| (p.lat_lon().0, i as u32))
        .collect();
    by_lat.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let r_deg = radius.to_degrees() + 1e-9;

    let cells = grid.ocean_cells();
    let mut pairs: Vec<(u32, u32)> = cells
        .par_iter()
        .flat_map_iter(|&cell| {
            let p = grid.position(cell);
            let lat = grid.lat_lon_of(cell).0;
            let lo = by_lat.partition_point(|x| x.0 < lat - r_deg);
            let hi = by_lat.partition_point(|x| x.0 <= lat + r_deg);
            let mut hits: Vec<(u32, u32)> = by_lat[lo..hi]
                .iter()
                .filter(|&&(_, m)| geodesic_distance(&p, &mesh.nodes[m as usize]) <= radius)
                .map(|&(_, m)| (cell as u32, m))
                .collect();
            if hits.is_empty() {
                hits.push((cell as u32, nearest_node(mesh, &p)));
            }
            hits.into_iter()
        })
        .collect();
    sort_by_receiver(&mut pairs);
    pairs
}

/// Nearest mesh node to `p`, lowest index on ties.
pub fn nearest_node(mesh: &TriMesh, p: &UnitVec3) -> u32 {
    let mut best = (f64::INFINITY, 0u32);
    for (i, q) in mesh.nodes.iter().enumerate() {
        let d = geodesic_distance(p, q);
        if d < best.0 {
            best = (d, i as u32);
        }
    }
    best.1
}

/// Mesh→grid edges `(mesh node, cell)` from the vertices of the triangle
/// containing each ocean cell.
pub fn mesh_to_grid_edges(grid: &OceanGrid, mesh: &TriMesh) -> Vec<(u32, u32)> {
    let locator = TriangleLocator::new(mesh);
    let cells = grid.ocean_cells();
    let mut pairs: Vec<(u32, u32)> = cells
        .par_iter()
        .flat_map_iter(|&cell| {
            let t = locator.locate(&grid.position(cell));
            mesh.triangles[t].map(|v| (v, cell as u32))
        })
        .collect();
    sort_by_receiver(&mut pairs);
    pairs
}

/// Marks mesh nodes that appear in any grid→mesh or mesh→grid pair.
pub fn ocean_connected(
    n_nodes: usize,
    g2m: &[(u32, u32)],
    m2g: &[(u32, u32)],
) -> Vec<bool> {
    let mut keep = vec![false; n_nodes];
    for &(_, m) in g2m {
        keep[m as usize] = true;
    }
    for &(m, _) in m2g {
        keep[m as usize] = true;
    }
    keep
}

/// Directed mesh edges whose endpoints are both ocean-connected, sorted by
/// `(receiver, sender)`.
pub fn prune_mesh_edges(mesh: &TriMesh, connected: &[bool]) -> Vec<(u32, u32)> {
    let mut pairs: Vec<(u32, u32)> = mesh
        .edges
        .iter()
        .copied()
        .filter(|&(s, r)| connected[s as usize] && connected[r as usize])
        .collect();
    sort_by_receiver(&mut pairs);
    pairs
}

fn build_mesh_edges(
    grid: &OceanGrid,
    mesh: &TriMesh,
    radius: Option<f64>,
    cells: &[usize],
    grid_positions: &[UnitVec3],
) -> MeshEdges {
    let g2m = radius
        .map(|r| grid_to_mesh_edges(grid, mesh, r))
        .unwrap_or_default();
    let m2g = mesh_to_grid_edges(grid, mesh);
    let connected = ocean_connected(mesh.n_nodes(), &g2m, &m2g);
    let m2m = prune_mesh_edges(mesh, &connected);

    let mut compact = vec![u32::MAX; mesh.n_nodes()];
    let mut nodes = MeshNodes {
        level: mesh.level,
        ..Default::default()
    };
    for (i, _) in connected.iter().enumerate().filter(|(_, &c)| c) {
        compact[i] = nodes.mesh_ids.len() as u32;
        nodes.mesh_ids.push(i as u32);
        nodes.positions.push(mesh.nodes[i]);
    }
    let mut grid_index = vec![u32::MAX; grid.n_cells()];
    for (k, &c) in cells.iter().enumerate() {
        grid_index[c] = k as u32;
    }
    // compaction is monotone, so the (receiver, sender) order is preserved
    let g2m: Vec<(u32, u32)> = g2m
        .iter()
        .map(|&(c, m)| (grid_index[c as usize], compact[m as usize]))
        .collect();
    let m2m: Vec<(u32, u32)> = m2m
        .iter()
        .map(|&(s, r)| (compact[s as usize], compact[r as usize]))
        .collect();
    let m2g: Vec<(u32, u32)> = m2g
        .iter()
        .map(|&(m, c)| (compact[m as usize], grid_index[c as usize]))
        .collect();
    MeshEdges {
        g2m: EdgeSet::from_pairs(&g2m, grid_positions, &nodes.positions),
        m2m: EdgeSet::from_pairs(&m2m, &nodes.positions, &nodes.positions),
        m2g: EdgeSet::from_pairs(&m2g, &nodes.positions, grid_positions),
        nodes,
    }
}

/// Builds the pruned graph over `grid` and the two mesh levels.
pub fn build_ocean_graph(
    grid: &OceanGrid,
    coarse: &TriMesh,
    fine: &TriMesh,
    options: &GraphOptions,
) -> Result<OceanGraph> {
    if !(options.radius_factor > 0.0 && options.radius_factor.is_finite()) {
        return Err(Error::Config(format!(
            "radius factor must be positive, got {}",
            options.radius_factor
        )));
    }
    if coarse.level >= fine.level {
        return Err(Error::Config(format!(
            "coarse level {} must be below fine level {}",
            coarse.level, fine.level
        )));
    }
    let cells = grid.ocean_cells();
    if cells.is_empty() {
        return Err(Error::Data("grid has no ocean cells".into()));
    }
    let grid_positions: Vec<UnitVec3> = cells.iter().map(|&c| grid.position(c)).collect();
    let radius = options.radius_factor * fine.max_edge_length();
    let coarse_radius = match options.grid_to_mesh {
        GridToMesh::BothMeshes => Some(radius),
        GridToMesh::FineOnly => None,
    };
    let coarse_edges = build_mesh_edges(grid, coarse, coarse_radius, &cells, &grid_positions);
    let fine_edges = build_mesh_edges(grid, fine, Some(radius), &cells, &grid_positions);

    let mut incoming = vec![0usize; cells.len()];
    for m in [&coarse_edges, &fine_edges] {
        for &r in &m.m2g.receivers {
            incoming[r as usize] += 1;
        }
    }
    if let Some(k) = incoming.iter().position(|&n| n < 3) {
        return Err(Error::Data(format!(
            "ocean cell {} has no mesh-to-grid coverage",
            cells[k]
        )));
    }
    let graph = OceanGraph {
        n_lat: grid.n_lat,
        n_lon: grid.n_lon,
        options: options.clone(),
        grid_cells: cells.iter().map(|&c| c as u32).collect(),
        grid_positions,
        coarse: coarse_edges,
        fine: fine_edges,
    };
    let finite = graph
        .meshes()
        .iter()
        .flat_map(|m| [&m.g2m, &m.m2m, &m.m2g])
        .all(|e| e.features.iter().flatten().all(|v| v.is_finite()));
    if !finite {
        return Err(Error::NonFinite {
            stage: "edge feature construction".into(),
        });
    }
    Ok(graph)
}
