//! Shared fixtures and naive-loop oracles for the integration tests.
#![allow(dead_code)]

use ocean_gnn::autodiff::{Activation, Matrix, MlpSpec, ParamStore};
use ocean_gnn::graph::{build_ocean_graph, GraphOptions, OceanGraph};
use ocean_gnn::grid::{ChannelSchema, FieldSet, OceanGrid};
use ocean_gnn::sphere::{build_hierarchy, TriMesh};
use ocean_gnn::synthetic::statics_for;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Global grid whose southern hemisphere is land.
pub fn hemispheric_grid(n_lat: usize, n_lon: usize) -> OceanGrid {
    let g = OceanGrid::global(n_lat, n_lon).unwrap();
    let mask: Vec<bool> = (0..g.n_cells()).map(|k| g.lat_lon_of(k).0 > 0.0).collect();
    let depth = mask.iter().map(|&m| if m { 1000.0 } else { 0.0 }).collect();
    g.with_mask(mask, depth).unwrap()
}

/// Global grid with a rectangular continent.
pub fn boxed_grid(n_lat: usize, n_lon: usize) -> OceanGrid {
    let g = OceanGrid::global(n_lat, n_lon).unwrap();
    let mask: Vec<bool> = (0..g.n_cells())
        .map(|k| {
            let (lat, lon) = g.lat_lon_of(k);
            !(lat > -40.0 && lat < 20.0 && lon > 60.0 && lon < 150.0)
        })
        .collect();
    let depth = (0..g.n_cells())
        .map(|k| if mask[k] { 200.0 + 10.0 * (k % 7) as f64 } else { 0.0 })
        .collect();
    g.with_mask(mask, depth).unwrap()
}

pub fn graph_for(grid: &OceanGrid, level: u32) -> (TriMesh, TriMesh, OceanGraph) {
    let (coarse, fine) = build_hierarchy(level).unwrap();
    let g = build_ocean_graph(grid, &coarse, &fine, &GraphOptions::default()).unwrap();
    (coarse, fine, g)
}

/// A smooth random daily series of ocean and forcing fields with `NaN` on
/// land for the ocean channels.
pub fn random_series(
    grid: &OceanGrid,
    schema: &ChannelSchema,
    first_day: i64,
    days: usize,
    seed: u64,
) -> (Vec<FieldSet>, Vec<FieldSet>, FieldSet) {
    let mut r = rng(seed);
    let p = grid.n_cells();
    let series = |names: Vec<String>, land_nan: bool, r: &mut ChaCha8Rng| -> Vec<FieldSet> {
        let c = names.len();
        let phase: Vec<f64> = (0..c).map(|_| r.random_range(0.0..std::f64::consts::TAU)).collect();
        let scale: Vec<f64> = (0..c).map(|_| r.random_range(0.5..3.0)).collect();
        let mut state: Vec<f64> = (0..c * p).map(|_| r.random_range(-1.0..1.0)).collect();
        (0..days)
            .map(|d| {
                let mut f = FieldSet::zeros(grid, names.clone(), first_day + d as i64);
                for ch in 0..c {
                    for k in 0..p {
                        let s = &mut state[ch * p + k];
                        *s = 0.8 * *s + 0.2 * r.random_range(-1.0..1.0);
                        let (lat, lon) = grid.lat_lon_of(k);
                        let smooth = (lat.to_radians() * 2.0 + phase[ch]).sin()
                            * (lon.to_radians() + 0.3 * d as f64).cos();
                        let v = scale[ch] * (smooth + 0.3 * *s) + ch as f64;
                        f.channel_mut(ch)[k] = if land_nan && !grid.mask[k] {
                            f32::NAN
                        } else {
                            v as f32
                        };
                    }
                }
                f
            })
            .collect()
    };
    let ocean = series(schema.ocean_names(), true, &mut r);
    let forcing = series(schema.forcing_names(), false, &mut r);
    (ocean, forcing, statics_for(grid, schema).unwrap())
}

pub fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0))
}

/// Naive MLP: affine layers with the activation between them, then an
/// optional row-wise layer norm.
pub fn naive_mlp(spec: &MlpSpec, params: &ParamStore<f64>, prefix: &str, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n_layers = spec.hidden_layers + 1;
    let mut h: Vec<Vec<f64>> = x.to_vec();
    for l in 0..n_layers {
        let w = params.by_name(&format!("{prefix}.l{l}.w")).unwrap();
        let b = params.by_name(&format!("{prefix}.l{l}.b")).unwrap();
        if l > 0 {
            for row in h.iter_mut() {
                for v in row.iter_mut() {
                    *v = act(spec.activation, *v);
                }
            }
        }
        h = h
            .iter()
            .map(|row| {
                (0..w.cols())
                    .map(|j| {
                        let mut s = b.get(0, j);
                        for (i, xi) in row.iter().enumerate() {
                            s += xi * w.get(i, j);
                        }
                        s
                    })
                    .collect()
            })
            .collect();
    }
    if spec.layer_norm {
        let g = params.by_name(&format!("{prefix}.ln.gain")).unwrap();
        let o = params.by_name(&format!("{prefix}.ln.offset")).unwrap();
        for row in h.iter_mut() {
            let d = row.len() as f64;
            let mean = row.iter().sum::<f64>() / d;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
            let rstd = 1.0 / (var + 1e-5).sqrt();
            for (c, v) in row.iter_mut().enumerate() {
                *v = (*v - mean) * rstd * g.get(0, c) + o.get(0, c);
            }
        }
    }
    h
}

fn act(a: Activation, x: f64) -> f64 {
    match a {
        Activation::Silu => x / (1.0 + (-x).exp()),
        Activation::Relu => x.max(0.0),
        Activation::Identity => x,
    }
}

pub fn rows_of(m: &Matrix<f64>) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

/// Naive message-passing block: residual edge update from
/// `[e, v_s[s], v_r[r]]`, sum over incoming edges, residual node update from
/// `[v_r, Σ e]`.
#[allow(clippy::too_many_arguments)]
pub fn naive_block(
    edge_spec: &MlpSpec,
    node_spec: &MlpSpec,
    params: &ParamStore<f64>,
    prefix: &str,
    v_s: &[Vec<f64>],
    v_r: &[Vec<f64>],
    e: &[Vec<f64>],
    senders: &[u32],
    receivers: &[u32],
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let cat: Vec<Vec<f64>> = (0..e.len())
        .map(|i| {
            let mut row = e[i].clone();
            row.extend(&v_s[senders[i] as usize]);
            row.extend(&v_r[receivers[i] as usize]);
            row
        })
        .collect();
    let upd = naive_mlp(edge_spec, params, &format!("{prefix}.edge"), &cat);
    let e_new: Vec<Vec<f64>> = e
        .iter()
        .zip(&upd)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
        .collect();
    let width = e_new.first().map_or(0, |r| r.len());
    let mut agg = vec![vec![0.0; width]; v_r.len()];
    for (i, row) in e_new.iter().enumerate() {
        for (a, v) in agg[receivers[i] as usize].iter_mut().zip(row) {
            *a += v;
        }
    }
    let cat: Vec<Vec<f64>> = v_r
        .iter()
        .zip(&agg)
        .map(|(v, a)| v.iter().chain(a).copied().collect())
        .collect();
    let upd = naive_mlp(node_spec, params, &format!("{prefix}.node"), &cat);
    let v_new = v_r
        .iter()
        .zip(&upd)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
        .collect();
    (e_new, v_new)
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Great-circle distance computed from scratch.
pub fn arc(a: [f64; 3], b: [f64; 3]) -> f64 {
    let c = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    let s = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    s.atan2(a[0] * b[0] + a[1] * b[1] + a[2] * b[2])
}
