mod common;

use common::{boxed_grid, random_series, rng};
use ocean_gnn::grid::{
    assemble_grid_input, compute_norm_stats, denormalize, normalize, regrid_bicubic_with,
    ChannelSchema, CubicKernel, FieldSet, NormStats, OceanGrid, STD_FLOOR,
};
use proptest::prelude::*;
use rand::Rng;

fn stats_for(seed: u64) -> (OceanGrid, Vec<FieldSet>, Vec<FieldSet>, FieldSet, NormStats) {
    let grid = boxed_grid(8, 16);
    let (ocean, forcing, statics) = random_series(&grid, &ChannelSchema::toy(), 0, 6, seed);
    let stats = compute_norm_stats(&ocean, &forcing, &statics).unwrap();
    (grid, ocean, forcing, statics, stats)
}

#[test]
fn ocean_statistics_match_a_two_pass_oracle() {
    let (grid, ocean, _, _, stats) = stats_for(3);
    let cells = grid.ocean_cells();
    for (c, (name, st)) in stats.ocean.iter().enumerate() {
        assert_eq!(name, &ocean[0].channels[c]);
        let vals: Vec<f64> = ocean
            .iter()
            .flat_map(|f| cells.iter().map(move |&k| f.get(c, k) as f64))
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!((st.mean - mean).abs() < 1e-12);
        assert!((st.std - var.sqrt()).abs() < 1e-12);

        let diffs: Vec<f64> = ocean
            .windows(2)
            .flat_map(|w| cells.iter().map(move |&k| w[1].get(c, k) as f64 - w[0].get(c, k) as f64))
            .collect();
        let dm = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let dv = diffs.iter().map(|v| (v - dm).powi(2)).sum::<f64>() / diffs.len() as f64;
        assert!((st.diff_std.unwrap() - dv.sqrt()).abs() < 1e-12);
    }
    assert!(stats.forcing.iter().all(|(_, s)| s.diff_std.is_none()));
}

#[test]
fn constant_channels_hit_the_std_floor() {
    let (grid, mut ocean, forcing, statics, _) = stats_for(4);
    for f in ocean.iter_mut() {
        for (k, v) in f.channel_mut(0).iter_mut().enumerate() {
            *v = if grid.mask[k] { 2.5 } else { f32::NAN };
        }
    }
    let stats = compute_norm_stats(&ocean, &forcing, &statics).unwrap();
    assert_eq!(stats.ocean[0].1.mean, 2.5);
    assert_eq!(stats.ocean[0].1.std, STD_FLOOR);
    assert_eq!(stats.ocean[0].1.diff_std, Some(STD_FLOOR));
}

#[test]
fn statistics_need_consecutive_days() {
    let (_, ocean, forcing, statics, _) = stats_for(5);
    let gapped = vec![ocean[0].clone(), ocean[2].clone()];
    assert!(compute_norm_stats(&gapped, &forcing, &statics).is_err());
    assert!(compute_norm_stats(&[], &forcing, &statics).is_err());
}

#[test]
fn normalization_roundtrips_and_keeps_the_land_sentinel() {
    let (grid, ocean, forcing, _, stats) = stats_for(6);
    let n = normalize(&ocean[1], &stats).unwrap();
    let back = denormalize(&n, &stats).unwrap();
    for c in 0..n.n_channels() {
        for k in 0..grid.n_cells() {
            if grid.mask[k] {
                let (a, b) = (ocean[1].get(c, k), back.get(c, k));
                assert!((a - b).abs() <= 1e-5 * a.abs().max(1.0));
            } else {
                assert_eq!(n.get(c, k), 0.0);
                assert!(back.get(c, k).is_nan());
            }
        }
    }
    let nf = normalize(&forcing[0], &stats).unwrap();
    assert!(nf.values.iter().all(|v| v.is_finite()));
    let json = stats.to_json();
    assert_eq!(NormStats::from_json(&json).unwrap(), stats);
}

#[test]
fn land_values_never_reach_the_grid_input() {
    let (grid, ocean, forcing, statics, stats) = stats_for(7);
    let base = assemble_grid_input::<f64>(
        &ocean[1], &ocean[2], &forcing[1], &forcing[2], &forcing[3], &statics, &stats,
    )
    .unwrap();
    assert_eq!(base.rows(), grid.n_ocean());
    assert_eq!(base.cols(), ChannelSchema::toy().c_in());
    let mut r = rng(1);
    let (mut a, mut b) = (ocean[1].clone(), ocean[2].clone());
    for f in [&mut a, &mut b] {
        let p = f.n_cells();
        for (i, v) in f.values.iter_mut().enumerate() {
            if !grid.mask[i % p] {
                *v = r.random_range(-1e3..1e3);
            }
        }
    }
    let flipped = assemble_grid_input::<f64>(
        &a, &b, &forcing[1], &forcing[2], &forcing[3], &statics, &stats,
    )
    .unwrap();
    assert_eq!(base.as_slice(), flipped.as_slice());
}

#[test]
fn grid_input_rejects_misaligned_days() {
    let (_, ocean, forcing, statics, stats) = stats_for(8);
    let r = assemble_grid_input::<f64>(
        &ocean[1], &ocean[2], &forcing[1], &forcing[3], &forcing[4], &statics, &stats,
    );
    assert!(r.is_err());
}

#[test]
fn ogf_files_roundtrip_and_reject_truncation() {
    let (_, ocean, _, _, _) = stats_for(9);
    let f = &ocean[3];
    let bytes = f.encode();
    let back = FieldSet::decode(&bytes).unwrap();
    assert_eq!(back.channels, f.channels);
    assert_eq!(back.mask, f.mask);
    assert_eq!(back.day, f.day);
    let same = back.values.iter().zip(&f.values).all(|(a, b)| a.to_bits() == b.to_bits());
    assert!(same);
    assert!(FieldSet::decode(&bytes[..bytes.len() - 3]).is_err());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.ogf");
    f.write(&path).unwrap();
    assert_eq!(FieldSet::read(&path).unwrap().values.len(), f.values.len());
}

fn interior(dst: &OceanGrid) -> Vec<usize> {
    (0..dst.n_cells())
        .filter(|&k| {
            let (lat, lon) = dst.lat_lon_of(k);
            lat.abs() <= 70.0 && (20.0..=330.0).contains(&lon)
        })
        .collect()
}

fn check_polynomial(kernel: CubicKernel, coef: &[f64], degree: usize) -> f64 {
    let src = OceanGrid::global(30, 60).unwrap();
    let dst = OceanGrid::global(45, 100).unwrap();
    let terms: Vec<(usize, usize)> = (0..=degree)
        .flat_map(|i| (0..=degree - i).map(move |j| (i, j)))
        .collect();
    let f = |lat: f64, lon: f64| -> f64 {
        let (x, y) = (lat / 90.0, lon / 180.0);
        terms
            .iter()
            .zip(coef)
            .map(|(&(i, j), c)| c * x.powi(i as i32) * y.powi(j as i32))
            .sum()
    };
    let plane: Vec<f64> = (0..src.n_cells())
        .map(|k| {
            let (lat, lon) = src.lat_lon_of(k);
            f(lat, lon)
        })
        .collect();
    let out = regrid_bicubic_with(&src, &plane, &dst, kernel).unwrap();
    interior(&dst)
        .into_iter()
        .map(|k| {
            let (lat, lon) = dst.lat_lon_of(k);
            (out[k] - f(lat, lon)).abs()
        })
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn catmull_rom_is_exact_for_quadratics(coef in prop::collection::vec(-2.0f64..2.0, 6)) {
        prop_assert!(check_polynomial(CubicKernel::CatmullRom, &coef, 2) < 1e-9);
    }

    #[test]
    fn lagrange_is_exact_for_cubics(coef in prop::collection::vec(-2.0f64..2.0, 10)) {
        prop_assert!(check_polynomial(CubicKernel::Lagrange, &coef, 3) < 1e-9);
    }

    #[test]
    fn constants_survive_regridding_everywhere(c in -1e4f64..1e4, n_lat in 3usize..20, n_lon in 4usize..40) {
        let src = OceanGrid::global(n_lat, n_lon).unwrap();
        let dst = OceanGrid::global(n_lat + 7, 2 * n_lon + 1).unwrap();
        for kernel in [CubicKernel::CatmullRom, CubicKernel::Lagrange] {
            let out = regrid_bicubic_with(&src, &vec![c; src.n_cells()], &dst, kernel).unwrap();
            prop_assert!(out.iter().all(|&v| v == c));
        }
    }
}

#[test]
fn regridding_onto_the_same_grid_is_the_identity() {
    let g = OceanGrid::global(12, 24).unwrap();
    let mut r = rng(2);
    let plane: Vec<f64> = (0..g.n_cells()).map(|_| r.random_range(-5.0..5.0)).collect();
    let out = regrid_bicubic_with(&g, &plane, &g, CubicKernel::CatmullRom).unwrap();
    assert_eq!(out, plane);
    let mut bad = plane.clone();
    bad[3] = f64::NAN;
    assert!(regrid_bicubic_with(&g, &bad, &g, CubicKernel::CatmullRom).is_err());
}
