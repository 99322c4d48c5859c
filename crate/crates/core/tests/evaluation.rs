mod common;

use common::{boxed_grid, random_series, rng};
use ocean_gnn::evaluation::{
    baselines, ke_spectrum, rmse, rmse_csv, rmse_depth_profile, spectrum_csv, AreaWeighting,
    Region, RmseRecord, SpectralWindow,
};
use ocean_gnn::grid::{ChannelSchema, FieldSet, OceanGrid};
use ocean_gnn::rollout::build_climatology;
use ocean_gnn::synthetic::{generate, GeneratorConfig};
use proptest::prelude::*;
use rand::Rng;

fn pair(seed: u64) -> (OceanGrid, FieldSet, FieldSet) {
    let grid = boxed_grid(10, 20);
    let (ocean, _, _) = random_series(&grid, &ChannelSchema::toy(), 0, 2, seed);
    (grid, ocean[0].clone(), ocean[1].clone())
}

#[test]
fn rmse_matches_a_direct_sum() {
    let (grid, a, b) = pair(1);
    let chans: Vec<usize> = (0..a.n_channels()).collect();
    for weighting in [AreaWeighting::Uniform, AreaWeighting::CosLat] {
        let got = rmse(&grid, &a, &b, &chans, None, weighting).unwrap();
        for &c in &chans {
            let (mut s, mut w) = (0.0, 0.0);
            for k in grid.ocean_cells() {
                let wk = match weighting {
                    AreaWeighting::Uniform => 1.0,
                    AreaWeighting::CosLat => grid.lat_lon_of(k).0.to_radians().cos(),
                };
                s += wk * (a.get(c, k) as f64 - b.get(c, k) as f64).powi(2);
                w += wk;
            }
            assert!((got[c] - (s / w).sqrt()).abs() < 1e-12);
        }
    }
}

#[test]
fn rmse_ignores_land_and_vanishes_on_identical_fields() {
    let (grid, a, b) = pair(2);
    let chans = [0, 4, 8];
    let base = rmse(&grid, &a, &b, &chans, None, AreaWeighting::Uniform).unwrap();
    let (mut a2, mut b2) = (a.clone(), b.clone());
    let mut r = rng(3);
    let p = grid.n_cells();
    for f in [&mut a2, &mut b2] {
        for (i, v) in f.values.iter_mut().enumerate() {
            if !grid.mask[i % p] {
                *v = r.random_range(-50.0..50.0);
            }
        }
    }
    assert_eq!(base, rmse(&grid, &a2, &b2, &chans, None, AreaWeighting::Uniform).unwrap());
    let zero = rmse(&grid, &a, &a, &chans, None, AreaWeighting::CosLat).unwrap();
    assert!(zero.iter().all(|&v| v == 0.0));
    assert!(rmse(&grid, &a, &b, &[99], None, AreaWeighting::Uniform).is_err());
    let dry = Region::new("box", [70.0, 140.0], [-30.0, 10.0]).unwrap();
    assert!(rmse(&grid, &a, &b, &chans, Some(&dry), AreaWeighting::Uniform).is_err());
}

#[test]
fn depth_profile_lists_levels_shallow_to_deep() {
    let (grid, a, b) = pair(4);
    let schema = ChannelSchema::toy();
    let prof =
        rmse_depth_profile(&grid, &schema, &a, &b, "temperature", None, AreaWeighting::Uniform).unwrap();
    let levels = schema.depth_levels("temperature");
    assert_eq!(prof.len(), levels.len());
    for ((depth, value), (c, d)) in prof.iter().zip(&levels) {
        assert_eq!(depth, d);
        let direct = rmse(&grid, &a, &b, &[*c], None, AreaWeighting::Uniform).unwrap()[0];
        assert_eq!(*value, direct);
    }
    assert!(prof.windows(2).all(|w| w[0].0 < w[1].0));
    assert!(rmse_depth_profile(&grid, &schema, &a, &b, "sea_surface_height", None, AreaWeighting::Uniform).is_err());
}

fn open_band() -> (OceanGrid, Region) {
    let grid = OceanGrid::global(12, 48).unwrap();
    (grid, Region::new("band", [0.0, 360.0], [-30.0, 30.0]).unwrap())
}

#[test]
fn constant_currents_have_no_spectrum() {
    let (grid, region) = open_band();
    let u = vec![0.4; grid.n_cells()];
    let v = vec![-1.1; grid.n_cells()];
    for window in [SpectralWindow::Hann, SpectralWindow::None] {
        let s = ke_spectrum(&grid, &u, &v, &region, window).unwrap();
        assert_eq!(s.wavenumbers.len(), 24);
        assert!(s.amplitude.iter().all(|&a| a.abs() < 1e-25));
        assert!(s.wavenumbers.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn land_rows_are_dropped_and_narrow_regions_rejected() {
    let grid = boxed_grid(12, 48);
    let region = Region::new("band", [0.0, 360.0], [-60.0, 60.0]).unwrap();
    let mut r = rng(5);
    let u: Vec<f64> = (0..grid.n_cells()).map(|_| r.random_range(-1.0..1.0)).collect();
    let s = ke_spectrum(&grid, &u, &u, &region, SpectralWindow::Hann).unwrap();
    let all_rows = (0..grid.n_lat).filter(|&i| grid.lat[i].abs() <= 60.0).count();
    assert!(s.rows > 0 && s.rows < all_rows);
    let narrow = Region::new("narrow", [0.0, 20.0], [-10.0, 10.0]).unwrap();
    assert!(ke_spectrum(&grid, &u, &u, &narrow, SpectralWindow::Hann).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn doubling_currents_quadruples_the_spectrum(seed in 0u64..1000, scale in 0.1f64..10.0) {
        let (grid, region) = open_band();
        let mut r = rng(seed);
        let u: Vec<f64> = (0..grid.n_cells()).map(|_| r.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..grid.n_cells()).map(|_| r.random_range(-1.0..1.0)).collect();
        let base = ke_spectrum(&grid, &u, &v, &region, SpectralWindow::Hann).unwrap();
        let su: Vec<f64> = u.iter().map(|x| x * scale).collect();
        let sv: Vec<f64> = v.iter().map(|x| x * scale).collect();
        let scaled = ke_spectrum(&grid, &su, &sv, &region, SpectralWindow::Hann).unwrap();
        for (a, b) in base.amplitude.iter().zip(&scaled.amplitude) {
            prop_assert!(*a >= 0.0);
            prop_assert!((b - a * scale * scale).abs() <= 1e-9 * b.abs().max(1e-12));
        }
    }
}

#[test]
fn baselines_start_at_zero_and_persistence_loses_skill() {
    let cfg = GeneratorConfig {
        n_lat: 18,
        n_lon: 36,
        spinup_days: 10,
        ..Default::default()
    };
    let d = generate(&cfg, 0, 380).unwrap();
    let clim = build_climatology(&d.ocean[..365]).unwrap();
    let chans: Vec<usize> = (0..d.schema.c_x()).collect();
    let u = d.schema.surface_channel("eastward_current").unwrap();
    let mut mean = vec![0.0; 11];
    for t0 in [2usize, 60, 150, 260, 355] {
        let rows = baselines(&d.grid, &d.ocean[t0], &d.ocean[t0 + 1..=t0 + 10], &clim, &chans, None, AreaWeighting::Uniform)
            .unwrap();
        assert_eq!(rows.len(), 11);
        assert!(rows[0].persistence.iter().all(|&v| v == 0.0));
        for row in &rows {
            mean[row.lead] += row.persistence[u] / 5.0;
        }
    }
    assert!(mean[1] > 0.0 && mean[10] > mean[1], "{mean:?}");

    // a constant truth leaves persistence exact and climatology of it exact
    let constant: Vec<FieldSet> = (0..365)
        .map(|day| {
            let mut f = d.ocean[0].clone();
            f.day = day;
            f
        })
        .collect();
    let flat = build_climatology(&constant).unwrap();
    let rows = baselines(&d.grid, &constant[0], &constant[1..11], &flat, &chans, None, AreaWeighting::CosLat).unwrap();
    for row in rows {
        assert!(row.persistence.iter().chain(&row.climatology).all(|&v| v == 0.0));
    }
}

#[test]
fn csv_tables_have_headers_and_one_line_per_value() {
    let records = vec![
        RmseRecord {
            case: "forecast".into(),
            lead: 3,
            variable: "temperature".into(),
            depth: Some(0.49),
            region: "global".into(),
            value: 0.25,
        },
        RmseRecord {
            case: "persistence".into(),
            lead: 0,
            variable: "sea_surface_height".into(),
            depth: None,
            region: "global".into(),
            value: 0.0,
        },
    ];
    let csv = rmse_csv(&records);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "case,lead,variable,depth,region,value");
    assert_eq!(lines[1], "forecast,3,temperature,0.49,global,0.25");
    assert_eq!(lines[2], "persistence,0,sea_surface_height,,global,0");

    let (grid, region) = open_band();
    let mut r = rng(6);
    let u: Vec<f64> = (0..grid.n_cells()).map(|_| r.random_range(-1.0..1.0)).collect();
    let mut s = ke_spectrum(&grid, &u, &u, &region, SpectralWindow::None).unwrap();
    s.lead = Some(4);
    let csv = spectrum_csv(&[s.clone()]);
    assert_eq!(csv.lines().count(), 1 + s.wavenumbers.len());
    assert!(csv.lines().nth(1).unwrap().starts_with("band,4,"));
}
