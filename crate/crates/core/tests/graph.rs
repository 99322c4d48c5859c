mod common;

use std::collections::BTreeSet;

use common::{boxed_grid, graph_for, hemispheric_grid, rng};
use ocean_gnn::graph::{build_ocean_graph, GraphOptions, GridToMesh, MeshEdges, OceanGraph};
use ocean_gnn::grid::OceanGrid;
use ocean_gnn::sphere::{build_hierarchy, local_edge_features};
use proptest::prelude::*;
use rand::Rng;

type Edge = (u8, u8, u32, u32);

/// Every edge in global ids: (mesh level slot, kind, sender, receiver).
fn global_edges(g: &OceanGraph) -> BTreeSet<Edge> {
    let mut out = BTreeSet::new();
    for (slot, m) in g.meshes().into_iter().enumerate() {
        let ids = &m.nodes.mesh_ids;
        let slot = slot as u8;
        for (s, r) in m.g2m.pairs() {
            out.insert((slot, 0, g.grid_cells[s as usize], ids[r as usize]));
        }
        for (s, r) in m.m2m.pairs() {
            out.insert((slot, 1, ids[s as usize], ids[r as usize]));
        }
        for (s, r) in m.m2g.pairs() {
            out.insert((slot, 2, ids[s as usize], g.grid_cells[r as usize]));
        }
    }
    out
}

fn with_land(grid: &OceanGrid, land: &[usize]) -> OceanGrid {
    let mut mask = grid.mask.clone();
    let mut depth = grid.depth.clone();
    for &k in land {
        mask[k] = false;
        depth[k] = 0.0;
    }
    grid.with_mask(mask, depth).unwrap()
}

fn sorted_by_receiver(m: &MeshEdges) -> bool {
    [&m.g2m, &m.m2m, &m.m2g].iter().all(|e| {
        e.receivers
            .iter()
            .zip(&e.senders)
            .collect::<Vec<_>>()
            .windows(2)
            .all(|w| w[0] < w[1])
    })
}

#[test]
fn edges_touch_only_ocean_cells_and_are_sorted() {
    let grid = boxed_grid(12, 24);
    let (_, _, g) = graph_for(&grid, 2);
    g.validate().unwrap();
    assert_eq!(g.n_grid(), grid.n_ocean());
    assert!(g.grid_cells.iter().all(|&c| grid.mask[c as usize]));
    for m in g.meshes() {
        assert!(sorted_by_receiver(m));
        assert!(m.nodes.mesh_ids.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn edge_features_match_the_node_geometry() {
    let grid = hemispheric_grid(8, 16);
    let (_, _, g) = graph_for(&grid, 2);
    let m = &g.fine;
    for (i, (s, r)) in m.m2g.pairs().enumerate() {
        let f = local_edge_features(&m.nodes.positions[s as usize], &g.grid_positions[r as usize]);
        for c in 0..4 {
            assert!((m.m2g.features[i][c] as f64 - f[c]).abs() < 1e-6);
        }
    }
}

#[test]
fn bathymetry_does_not_change_the_graph() {
    let grid = boxed_grid(10, 20);
    let (c, f, g) = graph_for(&grid, 2);
    let mut r = rng(1);
    let depth = grid
        .mask
        .iter()
        .map(|&m| if m { r.random_range(1.0..6000.0) } else { 0.0 })
        .collect();
    let other = grid.with_mask(grid.mask.clone(), depth).unwrap();
    let g2 = build_ocean_graph(&other, &c, &f, &GraphOptions::default()).unwrap();
    assert_eq!(g2.encode(), g.encode());
}

#[test]
fn construction_is_independent_of_the_thread_count() {
    let grid = boxed_grid(16, 32);
    let (c, f) = build_hierarchy(3).unwrap();
    let build = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| build_ocean_graph(&grid, &c, &f, &GraphOptions::default()).unwrap())
    };
    assert_eq!(build(1).encode(), build(4).encode());
}

#[test]
fn all_ocean_grid_keeps_every_mesh_edge() {
    let grid = OceanGrid::global(12, 24).unwrap();
    let (c, f, g) = graph_for(&grid, 2);
    assert_eq!(g.coarse.nodes.len(), c.n_nodes());
    assert_eq!(g.fine.nodes.len(), f.n_nodes());
    assert_eq!(g.coarse.m2m.len(), c.edges.len());
    assert_eq!(g.fine.m2m.len(), f.edges.len());
}

#[test]
fn fine_only_option_drops_coarse_encoder_edges() {
    let grid = hemispheric_grid(10, 20);
    let (c, f) = build_hierarchy(2).unwrap();
    let opts = GraphOptions {
        grid_to_mesh: GridToMesh::FineOnly,
        ..Default::default()
    };
    let g = build_ocean_graph(&grid, &c, &f, &opts).unwrap();
    assert!(g.coarse.g2m.is_empty());
    assert!(!g.coarse.m2g.is_empty());
    assert!(!g.fine.g2m.is_empty());
}

#[test]
fn every_ocean_cell_is_encoded_and_decoded() {
    let grid = boxed_grid(14, 28);
    let (_, _, g) = graph_for(&grid, 3);
    for m in g.meshes() {
        let mut seen = vec![0usize; g.n_grid()];
        for &r in &m.m2g.receivers {
            seen[r as usize] += 1;
        }
        assert!(seen.iter().all(|&n| n == 3));
    }
    let mut sent = vec![false; g.n_grid()];
    for &s in &g.fine.g2m.senders {
        sent[s as usize] = true;
    }
    assert!(sent.iter().all(|&b| b));
}

#[test]
fn removing_a_lone_cell_removes_exactly_its_edges() {
    let grid = OceanGrid::global(10, 20).unwrap();
    let (c, f, g) = graph_for(&grid, 2);
    let cell = grid.cell(5, 7) as u32;
    let smaller = with_land(&grid, &[cell as usize]);
    let g2 = build_ocean_graph(&smaller, &c, &f, &GraphOptions::default()).unwrap();
    let (a, b) = (global_edges(&g), global_edges(&g2));
    assert!(b.is_subset(&a));
    // mesh nodes stay connected through the neighbouring cells
    let expected: BTreeSet<Edge> = a
        .iter()
        .copied()
        .filter(|&(_, kind, s, r)| (kind == 0 && s == cell) || (kind == 2 && r == cell))
        .collect();
    let removed: BTreeSet<Edge> = a.difference(&b).copied().collect();
    assert_eq!(removed, expected);
}

#[test]
fn a_landlocked_grid_is_rejected() {
    let grid = OceanGrid::global(4, 8).unwrap();
    let all: Vec<usize> = (0..grid.n_cells()).collect();
    let mut mask = grid.mask.clone();
    for &k in &all {
        mask[k] = false;
    }
    assert!(grid.with_mask(mask, vec![0.0; grid.n_cells()]).is_err());
    let (c, f) = build_hierarchy(1).unwrap();
    let bad = GraphOptions {
        radius_factor: 0.0,
        ..Default::default()
    };
    assert!(build_ocean_graph(&grid, &c, &f, &bad).is_err());
    assert!(build_ocean_graph(&grid, &f, &c, &GraphOptions::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn shrinking_the_ocean_never_adds_an_edge(land in prop::collection::vec(0usize..200, 1..40)) {
        let grid = OceanGrid::global(10, 20).unwrap();
        let (c, f, g) = graph_for(&grid, 2);
        let land: Vec<usize> = land.into_iter().filter(|&k| k != 0).collect();
        let smaller = with_land(&grid, &land);
        let g2 = build_ocean_graph(&smaller, &c, &f, &GraphOptions::default()).unwrap();
        let (a, b) = (global_edges(&g), global_edges(&g2));
        prop_assert!(b.is_subset(&a));
        for &(_, kind, s, r) in &b {
            match kind {
                0 => prop_assert!(smaller.mask[s as usize]),
                2 => prop_assert!(smaller.mask[r as usize]),
                _ => {}
            }
        }
        let roundtrip = OceanGraph::decode(&g2.encode()).unwrap();
        prop_assert_eq!(roundtrip, g2);
    }
}
