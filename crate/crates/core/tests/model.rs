mod common;

use std::sync::Arc;

use common::{boxed_grid, graph_for, random_matrix, random_series, rng};
use ocean_gnn::autodiff::{segment_sum, Matrix, Tape};
use ocean_gnn::grid::{compute_norm_stats, ChannelSchema, OceanGrid};
use ocean_gnn::model::{EdgeIndex, EdgeTensors, GraphTensors, MeshTensors, Model, ModelConfig};
use ocean_gnn::sphere::{build_hierarchy, geodesic_distance};
use rand::seq::SliceRandom;
use rand::Rng;

fn small_config(level: u32, iterations: usize) -> ModelConfig {
    ModelConfig {
        latent: 8,
        processor_iterations: iterations,
        mesh_level: level,
        ..Default::default()
    }
}

#[test]
fn zero_output_layer_is_persistence() {
    let grid = boxed_grid(8, 16);
    let schema = ChannelSchema::toy();
    let (_, _, graph) = graph_for(&grid, 2);
    let (ocean, forcing, statics) = random_series(&grid, &schema, 10, 4, 1);
    let stats = compute_norm_stats(&ocean, &forcing, &statics).unwrap();
    let (model, mut params) = Model::init::<f32>(&small_config(2, 2), &schema, 5).unwrap();
    model.zero_output_layer(&mut params);
    let gt = GraphTensors::<f32>::new(&graph);
    let next = model
        .step(&params, &gt, &stats, &ocean[0], &ocean[1], &forcing[0], &forcing[1], &forcing[2], &statics)
        .unwrap();
    assert_eq!(next.day, ocean[1].day + 1);
    for (a, b) in next.values.iter().zip(&ocean[1].values) {
        assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
    }
}

#[test]
fn land_values_do_not_affect_a_step() {
    let grid = boxed_grid(8, 16);
    let schema = ChannelSchema::toy();
    let (_, _, graph) = graph_for(&grid, 2);
    let (ocean, forcing, statics) = random_series(&grid, &schema, 0, 4, 2);
    let stats = compute_norm_stats(&ocean, &forcing, &statics).unwrap();
    let (model, params) = Model::init::<f64>(&small_config(2, 2), &schema, 6).unwrap();
    let gt = GraphTensors::<f64>::new(&graph);
    let run = |x0: &_, x1: &_| {
        model
            .step(&params, &gt, &stats, x0, x1, &forcing[1], &forcing[2], &forcing[3], &statics)
            .unwrap()
    };
    let base = run(&ocean[1], &ocean[2]);
    let (mut a, mut b) = (ocean[1].clone(), ocean[2].clone());
    let p = grid.n_cells();
    for f in [&mut a, &mut b] {
        for (i, v) in f.values.iter_mut().enumerate() {
            if !grid.mask[i % p] {
                *v = 1e6;
            }
        }
    }
    let other = run(&a, &b);
    for (x, y) in base.values.iter().zip(&other.values) {
        assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()));
    }
    assert!((0..p).all(|k| grid.mask[k] || base.get(0, k).is_nan()));
}

#[test]
fn bound_model_matches_the_initialized_one() {
    let schema = ChannelSchema::toy();
    let config = small_config(2, 3);
    let (_, params) = Model::init::<f32>(&config, &schema, 9).unwrap();
    let bound = Model::bind(&config, &schema, &params).unwrap();
    assert_eq!(bound.config, config);
    let wider = ModelConfig { latent: 9, ..config.clone() };
    assert!(Model::bind(&wider, &schema, &params).is_err());
    let shared = ModelConfig {
        share_across_iterations: true,
        share_across_meshes: true,
        ..config
    };
    let (_, few) = Model::init::<f32>(&shared, &schema, 9).unwrap();
    assert!(few.n_scalars() < params.n_scalars());
}

fn delta(model: &Model, params: &ocean_gnn::autodiff::ParamStore<f64>, gt: &GraphTensors<f64>, input: Matrix<f64>) -> Matrix<f64> {
    let mut tape = Tape::new();
    let x = tape.input(input);
    let d = model.delta(&mut tape, params, gt, x).unwrap();
    tape.value(d).clone()
}

fn inverse(perm: &[usize]) -> Vec<u32> {
    let mut inv = vec![0u32; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new as u32;
    }
    inv
}

fn shuffled(n: usize, r: &mut impl Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(r);
    p
}

fn permute_edges(e: &EdgeTensors<f64>, smap: &[u32], rmap: &[u32], r: &mut impl Rng) -> EdgeTensors<f64> {
    let order = shuffled(e.index.senders.len(), r);
    let senders: Vec<u32> = order.iter().map(|&i| smap[e.index.senders[i] as usize]).collect();
    let receivers: Vec<u32> = order.iter().map(|&i| rmap[e.index.receivers[i] as usize]).collect();
    EdgeTensors {
        index: EdgeIndex {
            senders: Arc::from(senders),
            receivers: Arc::from(receivers),
        },
        features: Matrix::from_fn(order.len(), 4, |i, c| e.features.get(order[i], c)),
    }
}

fn permute_mesh(m: &MeshTensors<f64>, grid_map: &[u32], r: &mut impl Rng) -> MeshTensors<f64> {
    let perm = shuffled(m.node_features.rows(), r);
    let map = inverse(&perm);
    MeshTensors {
        node_features: Matrix::from_fn(perm.len(), 3, |i, c| m.node_features.get(perm[i], c)),
        g2m: permute_edges(&m.g2m, grid_map, &map, r),
        m2m: permute_edges(&m.m2m, &map, &map, r),
        m2g: permute_edges(&m.m2g, &map, grid_map, r),
    }
}

#[test]
fn relabelling_nodes_and_edges_permutes_the_output() {
    let grid = boxed_grid(8, 16);
    let schema = ChannelSchema::toy();
    let (_, _, graph) = graph_for(&grid, 2);
    let (model, params) = Model::init::<f64>(&small_config(2, 2), &schema, 11).unwrap();
    let gt = GraphTensors::<f64>::new(&graph);
    let mut r = rng(3);
    for _ in 0..3 {
        let input = random_matrix(&mut r, gt.n_grid, schema.c_in());
        let base = delta(&model, &params, &gt, input.clone());

        let gperm = shuffled(gt.n_grid, &mut r);
        let gmap = inverse(&gperm);
        let permuted = GraphTensors {
            n_grid: gt.n_grid,
            cells: gperm.iter().map(|&i| gt.cells[i]).collect(),
            coarse: permute_mesh(&gt.coarse, &gmap, &mut r),
            fine: permute_mesh(&gt.fine, &gmap, &mut r),
        };
        let pin = Matrix::from_fn(gt.n_grid, schema.c_in(), |i, c| input.get(gperm[i], c));
        let out = delta(&model, &params, &permuted, pin);
        let mut worst = 0.0f64;
        for (i, &old) in gperm.iter().enumerate() {
            for c in 0..schema.c_x() {
                worst = worst.max((out.get(i, c) - base.get(old, c)).abs());
            }
        }
        assert!(worst <= 1e-10, "equivariance error {worst}");
    }
}

#[test]
fn a_perturbation_stays_within_the_receptive_field() {
    let grid = OceanGrid::global(16, 32).unwrap();
    let schema = ChannelSchema::toy();
    let (coarse, fine) = build_hierarchy(3).unwrap();
    let (_, _, graph) = graph_for(&grid, 3);
    let iterations = 1;
    let (model, params) = Model::init::<f64>(&small_config(3, iterations), &schema, 12).unwrap();
    let gt = GraphTensors::<f64>::new(&graph);
    // encoding (radius or nearest node), one hop per processor iteration and
    // the decoding triangle are each bounded by the longest mesh edge
    let longest = coarse.max_edge_length().max(fine.max_edge_length());
    let reach = (iterations as f64 + 2.0) * longest;
    let mut r = rng(4);
    let input = random_matrix(&mut r, gt.n_grid, schema.c_in());
    let base = delta(&model, &params, &gt, input.clone());
    for probe in [0usize, 100, 257, 511] {
        let mut bumped = input.clone();
        for c in 0..schema.c_in() {
            bumped.set(probe, c, bumped.get(probe, c) + 0.5);
        }
        let out = delta(&model, &params, &gt, bumped);
        let p = graph.grid_positions[probe];
        let mut far = 0;
        for i in 0..gt.n_grid {
            let moved = (0..schema.c_x()).any(|c| out.get(i, c) != base.get(i, c));
            if geodesic_distance(&p, &graph.grid_positions[i]) > reach + 1e-9 {
                far += 1;
                assert!(!moved, "cell {i} responds to a perturbation at {probe}");
            }
        }
        assert!(far > 0);
        assert!((0..schema.c_x()).any(|c| out.get(probe, c) != base.get(probe, c)));
    }
}

#[test]
fn gather_and_segment_sum_are_adjoint() {
    let mut r = rng(5);
    for _ in 0..50 {
        let n_nodes = r.random_range(1..20);
        let n_edges = r.random_range(0..60);
        let d = r.random_range(1..6);
        let index: Vec<u32> = (0..n_edges).map(|_| r.random_range(0..n_nodes) as u32).collect();
        let x = random_matrix(&mut r, n_edges, d);
        let y = random_matrix(&mut r, n_nodes, d);
        let sx = segment_sum(&x, &index, n_nodes).unwrap();
        let gy = y.select_rows(&index);
        let lhs: f64 = sx.as_slice().iter().zip(y.as_slice()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.as_slice().iter().zip(gy.as_slice()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }
    let x = Matrix::<f64>::zeros(2, 1);
    assert!(segment_sum(&x, &[0, 5], 3).is_err());
}
