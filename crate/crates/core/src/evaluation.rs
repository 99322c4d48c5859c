//! Verification metrics: masked RMSE by channel, depth and region; zonal
//! kinetic-energy spectra; persistence and climatology baselines.
//!
//! Spectral estimator: for every latitude row of a region that contains no
//! land, remove the row mean, optionally apply a Hann window, transform along
//! longitude, and form the one-sided mean-square power so that the bins of an
//! unwindowed row sum to the row's mean square. `KE(k) = ½ (P_u(k) + P_v(k))`
//! is averaged over rows. Wavenumbers are in cycles per degree of longitude;
//! the zero bin is omitted.

use std::fmt::Write as _;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ChannelSchema, FieldSet, OceanGrid};
use crate::rollout::Climatology;

/// A longitude-latitude box in degrees. Longitudes are signed degrees east;
/// `lon_min > lon_max` wraps through the antimeridian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub name: String,
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
}

fn lon_label(lon: f64) -> String {
    let l = (lon + 180.0).rem_euclid(360.0) - 180.0;
    if l < 0.0 {
        format!("{}°W", -l)
    } else {
        format!("{l}°E")
    }
}

fn lat_label(lat: f64) -> String {
    if lat < 0.0 {
        format!("{}°S", -lat)
    } else {
        format!("{lat}°N")
    }
}

impl Region {
    pub fn new(name: &str, lon: [f64; 2], lat: [f64; 2]) -> Result<Self> {
        let r = Self {
            name: name.into(),
            lon_min: lon[0],
            lon_max: lon[1],
            lat_min: lat[0],
            lat_max: lat[1],
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let v = [self.lon_min, self.lon_max, self.lat_min, self.lat_max];
        if v.iter().any(|x| !x.is_finite()) || self.lat_min >= self.lat_max || self.lon_min == self.lon_max {
            return Err(Error::Config(format!("degenerate region {:?}", self.name)));
        }
        Ok(())
    }

    /// Longitudinal extent in degrees.
    pub fn lon_width(&self) -> f64 {
        let w = self.lon_max - self.lon_min;
        if w > 0.0 {
            w.min(360.0)
        } else {
            w + 360.0
        }
    }

    /// Inclusive containment; `lon` in any convention.
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        const EPS: f64 = 1e-9;
        if lat < self.lat_min - EPS || lat > self.lat_max + EPS {
            return false;
        }
        let d = (lon - self.lon_min).rem_euclid(360.0);
        d <= self.lon_width() + EPS || d >= 360.0 - EPS
    }

    /// Label in the style `Gulf Stream (76°W--40°W, 35°N--45°N)`.
    pub fn caption(&self) -> String {
        format!(
            "{} ({}--{}, {}--{})",
            self.name,
            lon_label(self.lon_min),
            lon_label(self.lon_max),
            lat_label(self.lat_min),
            lat_label(self.lat_max)
        )
    }

    /// Label in the style `North Pacific (10°--40°N, 145°--175°E)`, latitude
    /// first with shared hemisphere suffixes.
    pub fn spectral_caption(&self) -> String {
        let shared = |a: String, b: String| -> String {
            let (ha, hb) = (a.chars().last(), b.chars().last());
            if ha == hb {
                format!("{}--{}", a.trim_end_matches(|c: char| c.is_ascii_alphabetic()), b)
            } else {
                format!("{a}--{b}")
            }
        };
        format!(
            "{} ({}, {})",
            self.name,
            shared(lat_label(self.lat_min), lat_label(self.lat_max)),
            shared(lon_label(self.lon_min), lon_label(self.lon_max))
        )
    }
}

/// Regional RMSE boxes.
pub const RMSE_REGIONS: [(&str, [f64; 2], [f64; 2]); 4] = [
    ("Gulf Stream", [-76.0, -40.0], [35.0, 45.0]),
    ("Kuroshio Extension", [120.0, 179.0], [20.0, 55.0]),
    ("South China Sea", [100.0, 122.0], [0.0, 27.0]),
    ("Yellow Sea", [118.0, 127.0], [30.0, 42.0]),
];

/// Kinetic-energy spectrum boxes.
pub const SPECTRAL_REGIONS: [(&str, [f64; 2], [f64; 2]); 2] = [
    ("North Pacific", [145.0, 175.0], [10.0, 40.0]),
    ("North Atlantic", [-60.0, -30.0], [10.0, 40.0]),
];

fn table(t: &[(&str, [f64; 2], [f64; 2])]) -> Vec<Region> {
    t.iter()
        .map(|(n, lon, lat)| Region::new(n, *lon, *lat).expect("built-in regions are valid"))
        .collect()
}

pub fn rmse_regions() -> Vec<Region> {
    table(&RMSE_REGIONS)
}

pub fn spectral_regions() -> Vec<Region> {
    table(&SPECTRAL_REGIONS)
}

/// Looks up a built-in region by name, case-insensitively; `global` selects
/// the whole grid.
pub fn region_by_name(name: &str) -> Result<Option<Region>> {
    if name.eq_ignore_ascii_case("global") {
        return Ok(None);
    }
    rmse_regions()
        .into_iter()
        .chain(spectral_regions())
        .find(|r| r.name.eq_ignore_ascii_case(name))
        .map(Some)
        .ok_or_else(|| Error::Config(format!("unknown region {name:?}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AreaWeighting {
    /// Plain mean over cells.
    #[default]
    Uniform,
    /// Cells weighted by the cosine of latitude.
    CosLat,
}

/// Ocean cells of `grid` inside `region` (all ocean cells when `None`).
pub fn region_cells(grid: &OceanGrid, mask: &[bool], region: Option<&Region>) -> Vec<usize> {
    (0..grid.n_cells())
        .filter(|&k| mask[k])
        .filter(|&k| {
            region.is_none_or(|r| {
                let (lat, lon) = grid.lat_lon_of(k);
                r.contains(lat, lon)
            })
        })
        .collect()
}

fn check_pair(grid: &OceanGrid, pred: &FieldSet, truth: &FieldSet) -> Result<()> {
    if pred.n_lat != grid.n_lat || pred.n_lon != grid.n_lon || !pred.same_layout(truth) {
        return Err(Error::Shape("prediction, truth and grid differ in layout".into()));
    }
    Ok(())
}

/// RMSE per selected channel over the ocean cells of `truth` in `region`.
pub fn rmse(
    grid: &OceanGrid,
    pred: &FieldSet,
    truth: &FieldSet,
    channels: &[usize],
    region: Option<&Region>,
    weighting: AreaWeighting,
) -> Result<Vec<f64>> {
    check_pair(grid, pred, truth)?;
    let cells = region_cells(grid, &truth.mask, region);
    if cells.is_empty() {
        return Err(Error::Data(format!(
            "no ocean cells in region {}",
            region.map_or("global", |r| r.name.as_str())
        )));
    }
    let w: Vec<f64> = cells
        .iter()
        .map(|&k| match weighting {
            AreaWeighting::Uniform => 1.0,
            AreaWeighting::CosLat => grid.lat_lon_of(k).0.to_radians().cos(),
        })
        .collect();
    let wsum: f64 = w.iter().sum();
    channels
        .iter()
        .map(|&c| {
            if c >= truth.n_channels() {
                return Err(Error::Shape(format!("channel {c} out of range")));
            }
            let (p, t) = (pred.channel(c), truth.channel(c));
            let s: f64 = cells
                .iter()
                .zip(&w)
                .map(|(&k, &wk)| {
                    let e = p[k] as f64 - t[k] as f64;
                    wk * e * e
                })
                .sum();
            Ok((s / wsum).sqrt())
        })
        .collect()
}

/// RMSE of every depth level of `variable`, shallow to deep.
pub fn rmse_depth_profile(
    grid: &OceanGrid,
    schema: &ChannelSchema,
    pred: &FieldSet,
    truth: &FieldSet,
    variable: &str,
    region: Option<&Region>,
    weighting: AreaWeighting,
) -> Result<Vec<(f64, f64)>> {
    let levels = schema.depth_levels(variable);
    if levels.len() < 2 {
        return Err(Error::Config(format!(
            "{variable:?} has no depth profile in this schema"
        )));
    }
    let idx: Vec<usize> = levels.iter().map(|l| l.0).collect();
    let values = rmse(grid, pred, truth, &idx, region, weighting)?;
    Ok(levels.iter().map(|l| l.1).zip(values).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralWindow {
    #[default]
    Hann,
    /// Rectangular window; bins then satisfy Parseval exactly.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub region: String,
    pub lead: Option<usize>,
    pub window: SpectralWindow,
    /// Bin centers in cycles per degree of longitude, strictly increasing.
    pub wavenumbers: Vec<f64>,
    /// Kinetic energy per bin (m²/s² for currents in m/s), non-negative.
    pub amplitude: Vec<f64>,
    /// Latitude rows averaged.
    pub rows: usize,
}

/// Longitude columns of `grid` inside `region`, in eastward order from the
/// western edge.
fn region_columns(grid: &OceanGrid, region: &Region) -> Vec<usize> {
    let mut cols: Vec<(f64, usize)> = (0..grid.n_lon)
        .filter(|&j| region.contains(region.lat_min, grid.lon[j]))
        .map(|j| ((grid.lon[j] - region.lon_min).rem_euclid(360.0), j))
        .collect();
    cols.sort_by(|a, b| a.0.total_cmp(&b.0));
    cols.into_iter().map(|c| c.1).collect()
}

/// One-sided mean-square power of a real sequence, bins `1..=n/2`.
fn one_sided_power(planner: &mut FftPlanner<f64>, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let scale = 1.0 / (n as f64 * n as f64);
    (1..=n / 2)
        .map(|k| {
            let p = buf[k].norm_sqr() * scale;
            if 2 * k == n {
                p
            } else {
                2.0 * p
            }
        })
        .collect()
}

/// Zonal kinetic-energy spectrum of `(u, v)` planes over `region`.
///
/// Rows with any land cell are dropped.
pub fn ke_spectrum(
    grid: &OceanGrid,
    u: &[f64],
    v: &[f64],
    region: &Region,
    window: SpectralWindow,
) -> Result<SpectrumResult> {
    let n_cells = grid.n_cells();
    if u.len() != n_cells || v.len() != n_cells {
        return Err(Error::Shape(format!(
            "velocity planes of {} and {} values for {n_cells} cells",
            u.len(),
            v.len()
        )));
    }
    let cols = region_columns(grid, region);
    let n = cols.len();
    if n < 8 {
        return Err(Error::Data(format!(
            "region {} spans {n} longitude samples, need at least 8",
            region.name
        )));
    }
    let rows: Vec<usize> = (0..grid.n_lat)
        .filter(|&i| grid.lat[i] >= region.lat_min - 1e-9 && grid.lat[i] <= region.lat_max + 1e-9)
        .filter(|&i| {
            cols.iter().all(|&j| {
                let k = grid.cell(i, j);
                grid.mask[k] && u[k].is_finite() && v[k].is_finite()
            })
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::Data(format!(
            "region {} has no land-free latitude rows",
            region.name
        )));
    }
    let win: Vec<f64> = match window {
        SpectralWindow::None => vec![1.0; n],
        SpectralWindow::Hann => (0..n)
            .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
            .collect(),
    };
    // keeps the windowed power of white noise unbiased
    let win_power = win.iter().map(|w| w * w).sum::<f64>() / n as f64;
    let mut planner = FftPlanner::new();
    let mut ke = vec![0.0; n / 2];
    for &i in &rows {
        for plane in [u, v] {
            let row: Vec<f64> = cols.iter().map(|&j| plane[grid.cell(i, j)]).collect();
            let mean = row.iter().sum::<f64>() / n as f64;
            let x: Vec<f64> = row.iter().zip(&win).map(|(r, w)| (r - mean) * w).collect();
            for (acc, p) in ke.iter_mut().zip(one_sided_power(&mut planner, &x)) {
                *acc += 0.5 * p / win_power;
            }
        }
    }
    let rows_f = rows.len() as f64;
    ke.iter_mut().for_each(|k| *k /= rows_f);
    let span = n as f64 * grid.dlon();
    Ok(SpectrumResult {
        region: region.name.clone(),
        lead: None,
        window,
        wavenumbers: (1..=n / 2).map(|k| k as f64 / span).collect(),
        amplitude: ke,
        rows: rows.len(),
    })
}

/// Spectrum of the surface current channels of an ocean field set.
pub fn surface_ke_spectrum(
    grid: &OceanGrid,
    schema: &ChannelSchema,
    fields: &FieldSet,
    region: &Region,
    window: SpectralWindow,
) -> Result<SpectrumResult> {
    let plane = |var: &str| -> Result<Vec<f64>> {
        let c = schema
            .surface_channel(var)
            .ok_or_else(|| Error::Config(format!("schema has no surface {var}")))?;
        Ok(fields.channel(c).iter().map(|&x| x as f64).collect())
    };
    ke_spectrum(grid, &plane("eastward_current")?, &plane("northward_current")?, region, window)
}

/// Per-lead RMSE of the persistence and climatology forecasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub lead: usize,
    pub persistence: Vec<f64>,
    pub climatology: Vec<f64>,
}

/// Baselines for leads `0..=truth.len()`, where `truth[k - 1]` is the state at
/// lead `k`.
pub fn baselines(
    grid: &OceanGrid,
    initial: &FieldSet,
    truth: &[FieldSet],
    climatology: &Climatology,
    channels: &[usize],
    region: Option<&Region>,
    weighting: AreaWeighting,
) -> Result<Vec<BaselineRow>> {
    std::iter::once(initial)
        .chain(truth)
        .enumerate()
        .map(|(lead, t)| {
            let clim = climatology.field(t.day);
            Ok(BaselineRow {
                lead,
                persistence: rmse(grid, initial, t, channels, region, weighting)?,
                climatology: rmse(grid, &clim, t, channels, region, weighting)?,
            })
        })
        .collect()
}

/// One line of an RMSE table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseRecord {
    pub case: String,
    pub lead: usize,
    pub variable: String,
    pub depth: Option<f64>,
    pub region: String,
    pub value: f64,
}

pub fn rmse_csv(records: &[RmseRecord]) -> String {
    let mut s = String::from("case,lead,variable,depth,region,value\n");
    for r in records {
        let depth = r.depth.map(|d| d.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.case, r.lead, r.variable, depth, r.region, r.value
        );
    }
    s
}

pub fn spectrum_csv(spectra: &[SpectrumResult]) -> String {
    let mut s = String::from("region,lead,wavenumber,amplitude\n");
    for sp in spectra {
        let lead = sp.lead.map(|l| l.to_string()).unwrap_or_default();
        for (k, a) in sp.wavenumbers.iter().zip(&sp.amplitude) {
            let _ = writeln!(s, "{},{},{},{}", sp.region, lead, k, a);
        }
    }
    s
}
