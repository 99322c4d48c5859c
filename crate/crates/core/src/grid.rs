//! Latitude-longitude ocean grid, channel schema, gridded field sets,
//! normalization statistics and forcing regridding.
//!
//! Fields are stored channel-major as `f32`, one plane of `n_lat * n_lon`
//! values per channel, rows ordered by latitude (south to north) and columns by
//! longitude. Ocean-state channels carry `NaN` over land.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::autodiff::{Matrix, Scalar};
use crate::error::{Error, Result};
use crate::io::{read_file, BinReader, BinWriter};
use crate::sphere::UnitVec3;

/// Standard-deviation floor for normalization statistics.
pub const STD_FLOOR: f64 = 1e-6;

/// Depths in meters of the 23 model levels of the full schema.
pub const FULL_DEPTHS: [f64; 23] = [
    0.49, 2.65, 5.08, 7.93, 11.41, 15.81, 21.60, 29.44, 40.34, 55.76, 77.85, 92.32, 109.73,
    130.67, 155.85, 186.13, 222.48, 266.04, 318.13, 380.21, 453.94, 541.09, 643.57,
];

/// Depths of the reduced schema used for desk-scale experiments.
pub const TOY_DEPTHS: [f64; 2] = [0.49, 29.44];

/// Ocean variables that carry a depth dimension, in channel order.
pub const DEPTH_VARIABLES: [&str; 4] = [
    "temperature",
    "eastward_current",
    "northward_current",
    "salinity",
];

pub const SSH: &str = "sea_surface_height";

pub const FULL_FORCING: [&str; 10] = [
    "u10",
    "v10",
    "precipitation",
    "t2m",
    "d2m",
    "shortwave_flux",
    "longwave_flux",
    "latent_heat_flux",
    "sensible_heat_flux",
    "sea_level_pressure",
];

pub const TOY_FORCING: [&str; 3] = ["u10", "v10", "t2m"];

pub const STATICS: [&str; 3] = ["latitude", "longitude", "depth"];

/// A uniform latitude-longitude grid with a land/sea mask and bathymetry.
#[derive(Debug, Clone, PartialEq)]
pub struct OceanGrid {
    pub n_lat: usize,
    pub n_lon: usize,
    /// Cell-center latitudes in degrees, strictly increasing.
    pub lat: Vec<f64>,
    /// Cell-center longitudes in degrees, covering `[0, 360)`.
    pub lon: Vec<f64>,
    /// Row-major `(lat, lon)`; `true` marks ocean.
    pub mask: Vec<bool>,
    /// Bathymetry in meters, 0 on land.
    pub depth: Vec<f64>,
}

impl OceanGrid {
    /// Cell-centered global grid: latitudes `-90 + (i + 1/2)·Δ`, longitudes
    /// `j·360/n_lon`. All cells are ocean with zero depth.
    pub fn global(n_lat: usize, n_lon: usize) -> Result<Self> {
        if n_lat == 0 || n_lon == 0 {
            return Err(Error::Config(format!("degenerate grid {n_lat}x{n_lon}")));
        }
        let dlat = 180.0 / n_lat as f64;
        let dlon = 360.0 / n_lon as f64;
        Self::new(
            (0..n_lat).map(|i| -90.0 + (i as f64 + 0.5) * dlat).collect(),
            (0..n_lon).map(|j| j as f64 * dlon).collect(),
            vec![true; n_lat * n_lon],
            vec![0.0; n_lat * n_lon],
        )
    }

    /// Validates and assembles a grid.
    pub fn new(lat: Vec<f64>, lon: Vec<f64>, mask: Vec<bool>, depth: Vec<f64>) -> Result<Self> {
        let (n_lat, n_lon) = (lat.len(), lon.len());
        if n_lat == 0 || n_lon == 0 {
            return Err(Error::Config(format!("degenerate grid {n_lat}x{n_lon}")));
        }
        if mask.len() != n_lat * n_lon || depth.len() != n_lat * n_lon {
            return Err(Error::Shape(format!(
                "mask/depth length {}/{} for a {n_lat}x{n_lon} grid",
                mask.len(),
                depth.len()
            )));
        }
        if lat.iter().any(|&l| !(l > -90.0 && l < 90.0)) || lat.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Data("latitudes must increase strictly inside (-90, 90)".into()));
        }
        check_uniform(&lat, "latitude")?;
        let dlon = 360.0 / n_lon as f64;
        if !(lon[0] >= 0.0 && lon[0] < dlon)
            || lon
                .iter()
                .enumerate()
                .any(|(j, &l)| (l - lon[0] - j as f64 * dlon).abs() > 1e-9)
        {
            return Err(Error::Data(
                "longitudes must cover [0, 360) with uniform spacing".into(),
            ));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::Data("mask has no ocean cell".into()));
        }
        for (k, (&d, &m)) in depth.iter().zip(&mask).enumerate() {
            if !(d >= 0.0) || (d > 0.0 && !m) {
                return Err(Error::Data(format!(
                    "cell {k}: depth {d} inconsistent with mask"
                )));
            }
        }
        Ok(Self {
            n_lat,
            n_lon,
            lat,
            lon,
            mask,
            depth,
        })
    }

    /// Same coordinates with a new mask and bathymetry.
    pub fn with_mask(&self, mask: Vec<bool>, depth: Vec<f64>) -> Result<Self> {
        Self::new(self.lat.clone(), self.lon.clone(), mask, depth)
    }

    /// Recovers the grid from a statics field set (channels `latitude`,
    /// `longitude`, `depth`).
    pub fn from_statics(statics: &FieldSet) -> Result<Self> {
        let lat_c = statics.channel_by_name("latitude")?;
        let lon_c = statics.channel_by_name("longitude")?;
        let depth_c = statics.channel_by_name("depth")?;
        let lat = (0..statics.n_lat)
            .map(|i| lat_c[i * statics.n_lon] as f64)
            .collect::<Vec<_>>();
        let lon: Vec<f64> = lon_c[..statics.n_lon].iter().map(|&v| v as f64).collect();
        let depth = depth_c
            .iter()
            .zip(&statics.mask)
            .map(|(&d, &m)| if m { d.max(0.0) as f64 } else { 0.0 })
            .collect();
        // f32 storage rounds the coordinates; snap them back to the uniform layout
        let n_lat = lat.len();
        let dlat = 180.0 / n_lat as f64;
        let snapped_lat = if lat
            .iter()
            .enumerate()
            .all(|(i, &l)| (l - (-90.0 + (i as f64 + 0.5) * dlat)).abs() < 1e-3)
        {
            (0..n_lat).map(|i| -90.0 + (i as f64 + 0.5) * dlat).collect()
        } else {
            lat
        };
        let n_lon = statics.n_lon;
        let dlon = 360.0 / n_lon as f64;
        let lon0 = (lon[0] / dlon).round() * dlon;
        let snapped_lon = if (lon[0] - lon0).abs() < 1e-3 && lon0 < dlon {
            (0..n_lon).map(|j| lon0 + j as f64 * dlon).collect()
        } else {
            lon
        };
        Self::new(snapped_lat, snapped_lon, statics.mask.clone(), depth)
    }

    pub fn n_cells(&self) -> usize {
        self.n_lat * self.n_lon
    }

    pub fn cell(&self, i_lat: usize, i_lon: usize) -> usize {
        i_lat * self.n_lon + i_lon
    }

    pub fn lat_lon_of(&self, cell: usize) -> (f64, f64) {
        (self.lat[cell / self.n_lon], self.lon[cell % self.n_lon])
    }

    pub fn position(&self, cell: usize) -> UnitVec3 {
        let (la, lo) = self.lat_lon_of(cell);
        UnitVec3::from_lat_lon(la, lo)
    }

    /// Ocean cells in row-major `(lat, lon)` order.
    pub fn ocean_cells(&self) -> Vec<usize> {
        ocean_cells(&self.mask)
    }

    pub fn n_ocean(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn dlat(&self) -> f64 {
        if self.n_lat > 1 {
            self.lat[1] - self.lat[0]
        } else {
            180.0
        }
    }

    pub fn dlon(&self) -> f64 {
        360.0 / self.n_lon as f64
    }
}

fn check_uniform(v: &[f64], what: &str) -> Result<()> {
    if v.len() < 3 {
        return Ok(());
    }
    let d = v[1] - v[0];
    if v.windows(2).any(|w| ((w[1] - w[0]) - d).abs() > 1e-9 * d.abs().max(1.0)) {
        return Err(Error::Data(format!("{what} spacing is not uniform")));
    }
    Ok(())
}

/// Indices of `true` entries, ascending.
pub fn ocean_cells(mask: &[bool]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter_map(|(k, &m)| m.then_some(k))
        .collect()
}

/// One named channel: a variable, at a depth in meters or at the surface.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub variable: String,
    pub depth: Option<f64>,
}

impl Channel {
    pub fn surface(variable: &str) -> Self {
        Self {
            variable: variable.into(),
            depth: None,
        }
    }

    pub fn at_depth(variable: &str, depth: f64) -> Self {
        Self {
            variable: variable.into(),
            depth: Some(depth),
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.depth {
            Some(d) => write!(f, "{}@{}m", self.variable, d),
            None => f.write_str(&self.variable),
        }
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('@') {
            None if !s.is_empty() => Ok(Self::surface(s)),
            Some((v, d)) if !v.is_empty() => {
                let depth = d
                    .strip_suffix('m')
                    .and_then(|d| d.parse::<f64>().ok())
                    .filter(|d| d.is_finite() && *d >= 0.0)
                    .ok_or_else(|| Error::Config(format!("bad channel depth in {s:?}")))?;
                Ok(Self::at_depth(v, depth))
            }
            _ => Err(Error::Config(format!("bad channel name {s:?}"))),
        }
    }
}

impl Serialize for Channel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Channel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Ordered channel lists for the ocean state `X`, forcing `A` and statics `S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSchema {
    pub ocean: Vec<Channel>,
    pub forcing: Vec<Channel>,
    pub statics: Vec<Channel>,
}

impl ChannelSchema {
    /// Depth variables at the given levels (variable-major), then sea surface
    /// height.
    pub fn with_levels(depths: &[f64], forcing: &[&str]) -> Self {
        let mut ocean = Vec::with_capacity(DEPTH_VARIABLES.len() * depths.len() + 1);
        for v in DEPTH_VARIABLES {
            ocean.extend(depths.iter().map(|&d| Channel::at_depth(v, d)));
        }
        ocean.push(Channel::surface(SSH));
        Self {
            ocean,
            forcing: forcing.iter().map(|v| Channel::surface(v)).collect(),
            statics: STATICS.iter().map(|v| Channel::surface(v)).collect(),
        }
    }

    /// 23 levels, 10 forcing variables: `C_X = 93`, `C_A = 10`, `C_S = 3`.
    pub fn full() -> Self {
        Self::with_levels(&FULL_DEPTHS, &FULL_FORCING)
    }

    /// 2 levels, winds and air temperature: `C_X = 9`, `C_A = 3`, `C_S = 3`.
    pub fn toy() -> Self {
        Self::with_levels(&TOY_DEPTHS, &TOY_FORCING)
    }

    pub fn c_x(&self) -> usize {
        self.ocean.len()
    }

    pub fn c_a(&self) -> usize {
        self.forcing.len()
    }

    pub fn c_s(&self) -> usize {
        self.statics.len()
    }

    /// Grid input width `2·C_X + 3·C_A + C_S`.
    pub fn c_in(&self) -> usize {
        2 * self.c_x() + 3 * self.c_a() + self.c_s()
    }

    pub fn ocean_names(&self) -> Vec<String> {
        self.ocean.iter().map(|c| c.to_string()).collect()
    }

    pub fn forcing_names(&self) -> Vec<String> {
        self.forcing.iter().map(|c| c.to_string()).collect()
    }

    pub fn static_names(&self) -> Vec<String> {
        self.statics.iter().map(|c| c.to_string()).collect()
    }

    /// `(channel index, depth)` of every level of `variable`, shallow to deep.
    pub fn depth_levels(&self, variable: &str) -> Vec<(usize, f64)> {
        let mut v: Vec<(usize, f64)> = self
            .ocean
            .iter()
            .enumerate()
            .filter(|(_, c)| c.variable == variable)
            .filter_map(|(k, c)| c.depth.map(|d| (k, d)))
            .collect();
        v.sort_by(|a, b| a.1.total_cmp(&b.1));
        v
    }

    /// Index of the shallowest channel of `variable` (or its surface channel).
    pub fn surface_channel(&self, variable: &str) -> Option<usize> {
        self.ocean
            .iter()
            .position(|c| c.variable == variable && c.depth.is_none())
            .or_else(|| self.depth_levels(variable).first().map(|l| l.0))
    }
}

/// Channel-stacked fields on one grid at one day.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSet {
    pub channels: Vec<String>,
    pub n_lat: usize,
    pub n_lon: usize,
    /// Day index (days since the dataset epoch).
    pub day: i64,
    pub mask: Vec<bool>,
    /// Channel-major values, `channels.len() * n_lat * n_lon`.
    pub values: Vec<f32>,
}

impl FieldSet {
    pub fn new(
        channels: Vec<String>,
        n_lat: usize,
        n_lon: usize,
        day: i64,
        mask: Vec<bool>,
        values: Vec<f32>,
    ) -> Result<Self> {
        let plane = n_lat * n_lon;
        if plane == 0 || mask.len() != plane || values.len() != channels.len() * plane {
            return Err(Error::Shape(format!(
                "field set {n_lat}x{n_lon} with {} channels has {} values and {} mask cells",
                channels.len(),
                values.len(),
                mask.len()
            )));
        }
        Ok(Self {
            channels,
            n_lat,
            n_lon,
            day,
            mask,
            values,
        })
    }

    /// All-zero fields on `grid`.
    pub fn zeros(grid: &OceanGrid, channels: Vec<String>, day: i64) -> Self {
        let values = vec![0.0; channels.len() * grid.n_cells()];
        Self {
            channels,
            n_lat: grid.n_lat,
            n_lon: grid.n_lon,
            day,
            mask: grid.mask.clone(),
            values,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n_lat * self.n_lon
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let p = self.n_cells();
        &self.values[c * p..(c + 1) * p]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let p = self.n_cells();
        &mut self.values[c * p..(c + 1) * p]
    }

    pub fn channel_index(&self, name: &str) -> Result<usize> {
        self.channels
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Data(format!("channel {name:?} not present")))
    }

    pub fn channel_by_name(&self, name: &str) -> Result<&[f32]> {
        Ok(self.channel(self.channel_index(name)?))
    }

    pub fn get(&self, c: usize, cell: usize) -> f32 {
        self.values[c * self.n_cells() + cell]
    }

    /// Sets every land cell of every channel to `NaN`.
    pub fn apply_land_sentinel(&mut self) {
        let p = self.n_cells();
        for c in 0..self.channels.len() {
            for (k, &m) in self.mask.iter().enumerate() {
                if !m {
                    self.values[c * p + k] = f32::NAN;
                }
            }
        }
    }

    /// Values at `cells` as a `cells.len() x channels` matrix.
    pub fn rows<T: Scalar>(&self, cells: &[usize]) -> Matrix<T> {
        let p = self.n_cells();
        let nc = self.channels.len();
        Matrix::from_fn(cells.len(), nc, |r, c| T::of(self.values[c * p + cells[r]] as f64))
    }

    /// Writes `rows` (one row per entry of `cells`) back into the planes.
    pub fn scatter_rows<T: Scalar>(&mut self, cells: &[usize], rows: &Matrix<T>) -> Result<()> {
        if rows.rows() != cells.len() || rows.cols() != self.channels.len() {
            return Err(Error::Shape(format!(
                "{}x{} rows for {} cells and {} channels",
                rows.rows(),
                rows.cols(),
                cells.len(),
                self.channels.len()
            )));
        }
        let p = self.n_cells();
        for (r, &cell) in cells.iter().enumerate() {
            for c in 0..rows.cols() {
                self.values[c * p + cell] = rows.get(r, c).f64() as f32;
            }
        }
        Ok(())
    }

    pub fn same_layout(&self, other: &FieldSet) -> bool {
        self.channels == other.channels
            && self.n_lat == other.n_lat
            && self.n_lon == other.n_lon
            && self.mask == other.mask
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = BinWriter::new(b"OGF1", 1);
        w.u32(self.n_lat as u32);
        w.u32(self.n_lon as u32);
        w.u32(self.channels.len() as u32);
        w.i64(self.day);
        for c in &self.channels {
            w.str(c);
        }
        let mut bits = vec![0u8; self.mask.len().div_ceil(8)];
        for (k, &m) in self.mask.iter().enumerate() {
            if m {
                bits[k / 8] |= 1 << (k % 8);
            }
        }
        w.bytes(&bits);
        w.f32s(&self.values);
        w.into_bytes()
    }

    pub fn decode(data: &[u8]) -> Result<Self> {
        let (mut r, version) = BinReader::open(data, b"OGF1", "OGF1")?;
        if version != 1 {
            return Err(r.err(format!("unsupported version {version}")));
        }
        let n_lat = r.u32()? as usize;
        let n_lon = r.u32()? as usize;
        let nc = r.u32()? as usize;
        let day = r.i64()?;
        let mut channels = Vec::with_capacity(nc.min(4096));
        for _ in 0..nc {
            channels.push(r.str()?);
        }
        let plane = n_lat
            .checked_mul(n_lon)
            .ok_or_else(|| r.err("grid size overflow"))?;
        let bits = r.take(plane.div_ceil(8))?;
        let mask = (0..plane).map(|k| bits[k / 8] >> (k % 8) & 1 == 1).collect();
        let total = plane
            .checked_mul(nc)
            .ok_or_else(|| r.err("value count overflow"))?;
        let values = r.f32s(total)?;
        r.finish()?;
        Self::new(channels, n_lat, n_lon, day, mask, values).map_err(|e| r.err(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&read_file(path)?)
    }
}

/// Statistics of one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelStats {
    pub mean: f64,
    pub std: f64,
    /// Standard deviation of one-day differences (ocean channels only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diff_std: Option<f64>,
}

/// Per-channel normalization statistics, grouped by role and keyed by name in
/// channel order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormStats {
    #[serde(with = "named")]
    pub ocean: Vec<(String, ChannelStats)>,
    #[serde(with = "named")]
    pub forcing: Vec<(String, ChannelStats)>,
    #[serde(with = "named")]
    pub statics: Vec<(String, ChannelStats)>,
}

mod named {
    use super::ChannelStats;
    use serde::ser::SerializeMap;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        v: &[(String, ChannelStats)],
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(v.len()))?;
        for (k, st) in v {
            m.serialize_entry(k, st)?;
        }
        m.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<Vec<(String, ChannelStats)>, D::Error> {
        let map = serde_json::Map::deserialize(d)?;
        map.into_iter()
            .map(|(k, v)| {
                serde_json::from_value(v)
                    .map(|st| (k, st))
                    .map_err(serde::de::Error::custom)
            })
            .collect()
    }
}

/// Which block of [`NormStats`] a field set belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Ocean,
    Forcing,
    Statics,
}

impl NormStats {
    pub fn group(&self, role: Role) -> &[(String, ChannelStats)] {
        match role {
            Role::Ocean => &self.ocean,
            Role::Forcing => &self.forcing,
            Role::Statics => &self.statics,
        }
    }

    /// The role whose channel names equal `channels`.
    pub fn role_of(&self, channels: &[String]) -> Result<Role> {
        [Role::Ocean, Role::Forcing, Role::Statics]
            .into_iter()
            .find(|&r| {
                let g = self.group(r);
                g.len() == channels.len() && g.iter().zip(channels).all(|(a, b)| &a.0 == b)
            })
            .ok_or_else(|| {
                Error::Data(format!(
                    "channels {channels:?} match no normalization statistics group"
                ))
            })
    }

    pub fn means(&self, role: Role) -> Vec<f64> {
        self.group(role).iter().map(|c| c.1.mean).collect()
    }

    pub fn stds(&self, role: Role) -> Vec<f64> {
        self.group(role).iter().map(|c| c.1.std).collect()
    }

    /// One-day difference standard deviations of the ocean channels.
    pub fn diff_stds(&self) -> Vec<f64> {
        self.ocean
            .iter()
            .map(|c| c.1.diff_std.unwrap_or(c.1.std))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("statistics serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let st: Self = serde_json::from_str(s)?;
        for (name, c) in st.ocean.iter().chain(&st.forcing).chain(&st.statics) {
            let bad = !c.mean.is_finite()
                || !(c.std > 0.0)
                || c.diff_std.is_some_and(|d| !(d > 0.0));
            if bad {
                return Err(Error::Config(format!("invalid statistics for {name}")));
            }
        }
        Ok(st)
    }
}

/// Two-pass mean and floored population standard deviation of the values
/// yielded by `iter` (called twice).
fn two_pass<I: Iterator<Item = f64>>(iter: impl Fn() -> I) -> Option<(f64, f64)> {
    let (mut n, mut sum) = (0usize, 0.0);
    for v in iter() {
        n += 1;
        sum += v;
    }
    if n == 0 {
        return None;
    }
    let mean = sum / n as f64;
    let var = iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    Some((mean, var.sqrt().max(STD_FLOOR)))
}

fn check_layout(sets: &[FieldSet], what: &str) -> Result<()> {
    let first = sets
        .first()
        .ok_or_else(|| Error::Data(format!("empty {what} dataset")))?;
    if let Some(bad) = sets.iter().find(|s| !s.same_layout(first)) {
        return Err(Error::Data(format!(
            "{what} day {} has a different channel list, grid or mask",
            bad.day
        )));
    }
    Ok(())
}

/// Computes normalization statistics.
///
/// Ocean channels use ocean cells only; forcing and static channels use every
/// cell. Difference statistics use every pair of ocean sets whose days differ
/// by exactly one.
pub fn compute_norm_stats(
    ocean: &[FieldSet],
    forcing: &[FieldSet],
    statics: &FieldSet,
) -> Result<NormStats> {
    check_layout(ocean, "ocean")?;
    check_layout(forcing, "forcing")?;
    let cell_list = ocean_cells(&ocean[0].mask);
    let cells: &[usize] = &cell_list;
    if cells.is_empty() {
        return Err(Error::Data("no ocean cells".into()));
    }
    let mut by_day: Vec<&FieldSet> = ocean.iter().collect();
    by_day.sort_by_key(|f| f.day);
    let pairs: Vec<(&FieldSet, &FieldSet)> = by_day
        .windows(2)
        .filter(|w| w[1].day == w[0].day + 1)
        .map(|w| (w[0], w[1]))
        .collect();
    if pairs.is_empty() {
        return Err(Error::Data(
            "normalization needs at least two consecutive days".into(),
        ));
    }

    let mut ocean_stats = Vec::with_capacity(ocean[0].n_channels());
    for (c, name) in ocean[0].channels.iter().enumerate() {
        let (mean, std) = two_pass(|| {
            ocean
                .iter()
                .flat_map(move |f| cells.iter().map(move |&k| f.get(c, k) as f64))
        })
        .expect("non-empty");
        let (_, dstd) = two_pass(|| {
            pairs.iter().flat_map(move |(a, b)| {
                cells
                    .iter()
                    .map(move |&k| b.get(c, k) as f64 - a.get(c, k) as f64)
            })
        })
        .expect("non-empty");
        ocean_stats.push((
            name.clone(),
            ChannelStats {
                mean,
                std,
                diff_std: Some(dstd),
            },
        ));
    }
    let everywhere = |sets: &[FieldSet]| -> Vec<(String, ChannelStats)> {
        sets[0]
            .channels
            .iter()
            .enumerate()
            .map(|(c, name)| {
                let (mean, std) =
                    two_pass(|| sets.iter().flat_map(move |f| f.channel(c).iter().map(|&v| v as f64)))
                        .expect("non-empty");
                (
                    name.clone(),
                    ChannelStats {
                        mean,
                        std,
                        diff_std: None,
                    },
                )
            })
            .collect()
    };
    let stats = NormStats {
        ocean: ocean_stats,
        forcing: everywhere(forcing),
        statics: everywhere(std::slice::from_ref(statics)),
    };
    let finite = stats
        .ocean
        .iter()
        .chain(&stats.forcing)
        .chain(&stats.statics)
        .all(|(_, c)| c.mean.is_finite() && c.std.is_finite());
    if !finite {
        return Err(Error::Data(
            "non-finite values in normalization input".into(),
        ));
    }
    Ok(stats)
}

/// `(v - mean) / std` per channel. Land cells of ocean channels become 0.
pub fn normalize(fields: &FieldSet, stats: &NormStats) -> Result<FieldSet> {
    let role = stats.role_of(&fields.channels)?;
    let group = stats.group(role);
    let mut out = fields.clone();
    let p = fields.n_cells();
    for (c, (_, st)) in group.iter().enumerate() {
        for k in 0..p {
            let v = &mut out.values[c * p + k];
            *v = if role == Role::Ocean && !fields.mask[k] {
                0.0
            } else {
                ((*v as f64 - st.mean) / st.std) as f32
            };
        }
    }
    Ok(out)
}

/// Inverse of [`normalize`]; land cells of ocean channels get the sentinel.
pub fn denormalize(fields: &FieldSet, stats: &NormStats) -> Result<FieldSet> {
    let role = stats.role_of(&fields.channels)?;
    let mut out = fields.clone();
    let p = fields.n_cells();
    for (c, (_, st)) in stats.group(role).iter().enumerate() {
        for k in 0..p {
            let v = &mut out.values[c * p + k];
            *v = if role == Role::Ocean && !fields.mask[k] {
                f32::NAN
            } else {
                (*v as f64 * st.std + st.mean) as f32
            };
        }
    }
    Ok(out)
}

/// Scales a normalized `rows x C_X` delta by the per-channel one-day
/// difference standard deviation.
pub fn denormalize_delta<T: Scalar>(delta: &Matrix<T>, stats: &NormStats) -> Result<Matrix<T>> {
    let d = stats.diff_stds();
    if delta.cols() != d.len() {
        return Err(Error::Shape(format!(
            "delta has {} columns, statistics have {} ocean channels",
            delta.cols(),
            d.len()
        )));
    }
    let scale: Vec<T> = d.iter().map(|&v| T::of(v)).collect();
    Ok(Matrix::from_fn(delta.rows(), delta.cols(), |r, c| {
        delta.get(r, c) * scale[c]
    }))
}

/// Normalized values of `fields` at `cells`, as a `cells.len() x C` matrix.
pub fn normalized_rows<T: Scalar>(
    fields: &FieldSet,
    stats: &NormStats,
    cells: &[usize],
) -> Result<Matrix<T>> {
    let role = stats.role_of(&fields.channels)?;
    let group = stats.group(role);
    let p = fields.n_cells();
    if let Some(&bad) = cells.iter().find(|&&k| k >= p) {
        return Err(Error::Shape(format!("cell {bad} outside a {p}-cell grid")));
    }
    Ok(Matrix::from_fn(cells.len(), group.len(), |r, c| {
        let st = &group[c].1;
        T::of((fields.values[c * p + cells[r]] as f64 - st.mean) / st.std)
    }))
}

/// Interpolation kernel for [`regrid_bicubic_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CubicKernel {
    /// Catmull-Rom spline: C¹, exact for quadratics.
    #[default]
    CatmullRom,
    /// Four-point Lagrange polynomial: exact for cubics, not C¹.
    Lagrange,
}

impl CubicKernel {
    /// Weights of the samples at offsets -1, 0, 1, 2 for a point at `t ∈ [0, 1)`.
    pub fn weights(self, t: f64) -> [f64; 4] {
        let (t2, t3) = (t * t, t * t * t);
        match self {
            CubicKernel::CatmullRom => [
                0.5 * (-t3 + 2.0 * t2 - t),
                0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
                0.5 * (-3.0 * t3 + 4.0 * t2 + t),
                0.5 * (t3 - t2),
            ],
            CubicKernel::Lagrange => [
                -t * (t - 1.0) * (t - 2.0) / 6.0,
                (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
                -(t + 1.0) * t * (t - 2.0) / 2.0,
                (t + 1.0) * t * (t - 1.0) / 6.0,
            ],
        }
    }
}

/// Integer cell and fraction of a fractional index; snaps near-integers so
/// coincident nodes reproduce their samples exactly.
fn split_index(x: f64) -> (i64, f64) {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        (r as i64, 0.0)
    } else {
        (x.floor() as i64, x - x.floor())
    }
}

/// Catmull-Rom bicubic regridding of one `src_grid` plane onto `dst_grid`.
pub fn regrid_bicubic(src_grid: &OceanGrid, src: &[f64], dst_grid: &OceanGrid) -> Result<Vec<f64>> {
    regrid_bicubic_with(src_grid, src, dst_grid, CubicKernel::CatmullRom)
}

/// Bicubic regridding, periodic in longitude and edge-clamped in latitude.
///
/// Destination latitudes may lie at most half a source spacing outside the
/// source span; they are clamped to the boundary row.
pub fn regrid_bicubic_with(
    src_grid: &OceanGrid,
    src: &[f64],
    dst_grid: &OceanGrid,
    kernel: CubicKernel,
) -> Result<Vec<f64>> {
    if src.len() != src_grid.n_cells() {
        return Err(Error::Shape(format!(
            "source plane has {} values for {} cells",
            src.len(),
            src_grid.n_cells()
        )));
    }
    if let Some(k) = src.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("source value at cell {k} is not finite")));
    }
    let (nl, nm) = (src_grid.n_lat as i64, src_grid.n_lon as i64);
    let dlat = src_grid.dlat();
    let dlon = src_grid.dlon();
    let (lo, hi) = (src_grid.lat[0], src_grid.lat[src_grid.n_lat - 1]);
    let slack = 0.5 * dlat + 1e-9;
    if let Some(&bad) = dst_grid
        .lat
        .iter()
        .find(|&&l| l < lo - slack || l > hi + slack)
    {
        return Err(Error::Data(format!(
            "destination latitude {bad} outside source span [{lo}, {hi}]"
        )));
    }

    let lat_taps: Vec<([usize; 4], [f64; 4])> = dst_grid
        .lat
        .iter()
        .map(|&l| {
            let x = if nl == 1 {
                0.0
            } else {
                ((l - lo) / dlat).clamp(0.0, (nl - 1) as f64)
            };
            let (i, t) = split_index(x);
            let idx = [-1, 0, 1, 2].map(|o| (i + o).clamp(0, nl - 1) as usize);
            (idx, kernel.weights(t))
        })
        .collect();
    let lon_taps: Vec<([usize; 4], [f64; 4])> = dst_grid
        .lon
        .iter()
        .map(|&l| {
            let x = (l - src_grid.lon[0]).rem_euclid(360.0) / dlon;
            let (i, t) = split_index(x);
            let idx = [-1, 0, 1, 2].map(|o| (i + o).rem_euclid(nm) as usize);
            (idx, kernel.weights(t))
        })
        .collect();

    // Weights sum to one, so interpolating offsets from the base sample keeps
    // constants exact.
    let mut out = Vec::with_capacity(dst_grid.n_cells());
    for (li, lw) in &lat_taps {
        for (mi, mw) in &lon_taps {
            let base = src[li[1] * src_grid.n_lon + mi[1]];
            let mut acc = 0.0;
            for a in 0..4 {
                let row = li[a] * src_grid.n_lon;
                let mut s = 0.0;
                for b in 0..4 {
                    s += mw[b] * (src[row + mi[b]] - base);
                }
                acc += lw[a] * s;
            }
            out.push(base + acc);
        }
    }
    Ok(out)
}

/// Regrids every channel of a forcing field set onto `dst_grid`.
pub fn regrid_fields(src_grid: &OceanGrid, src: &FieldSet, dst_grid: &OceanGrid) -> Result<FieldSet> {
    if src.n_lat != src_grid.n_lat || src.n_lon != src_grid.n_lon {
        return Err(Error::Shape("field set does not match its source grid".into()));
    }
    let mut values = Vec::with_capacity(src.n_channels() * dst_grid.n_cells());
    for c in 0..src.n_channels() {
        let plane: Vec<f64> = src.channel(c).iter().map(|&v| v as f64).collect();
        values.extend(
            regrid_bicubic(src_grid, &plane, dst_grid)?
                .into_iter()
                .map(|v| v as f32),
        );
    }
    FieldSet::new(
        src.channels.clone(),
        dst_grid.n_lat,
        dst_grid.n_lon,
        src.day,
        dst_grid.mask.clone(),
        values,
    )
}

fn check_day(f: &FieldSet, expected: i64, what: &str) -> Result<()> {
    if f.day != expected {
        return Err(Error::Data(format!(
            "{what} has day {}, expected {expected}",
            f.day
        )));
    }
    Ok(())
}

/// Checks the day stamps of an input window centered on `x_cur`.
pub fn check_window(
    x_prev: &FieldSet,
    x_cur: &FieldSet,
    a_prev: &FieldSet,
    a_cur: &FieldSet,
    a_next: &FieldSet,
) -> Result<()> {
    let t = x_cur.day;
    check_day(x_prev, t - 1, "previous ocean state")?;
    check_day(a_prev, t - 1, "previous forcing")?;
    check_day(a_cur, t, "current forcing")?;
    check_day(a_next, t + 1, "next forcing")?;
    if !x_prev.same_layout(x_cur) {
        return Err(Error::Data("ocean states differ in layout".into()));
    }
    for f in [a_prev, a_cur, a_next] {
        if f.n_lat != x_cur.n_lat || f.n_lon != x_cur.n_lon {
            return Err(Error::Shape("forcing grid differs from the ocean grid".into()));
        }
    }
    Ok(())
}

/// Normalized forcing triplet and statics at `cells`, `cells.len() x
/// (3·C_A + C_S)`.
pub fn forcing_static_rows<T: Scalar>(
    a_prev: &FieldSet,
    a_cur: &FieldSet,
    a_next: &FieldSet,
    statics: &FieldSet,
    stats: &NormStats,
    cells: &[usize],
) -> Result<Matrix<T>> {
    if statics.n_lat != a_cur.n_lat || statics.n_lon != a_cur.n_lon {
        return Err(Error::Shape("statics grid differs from the forcing grid".into()));
    }
    for (f, role) in [
        (a_prev, Role::Forcing),
        (a_cur, Role::Forcing),
        (a_next, Role::Forcing),
        (statics, Role::Statics),
    ] {
        if stats.role_of(&f.channels)? != role {
            return Err(Error::Data(format!(
                "channels {:?} are not {role:?} channels",
                f.channels
            )));
        }
    }
    let parts = [
        normalized_rows::<T>(a_prev, stats, cells)?,
        normalized_rows::<T>(a_cur, stats, cells)?,
        normalized_rows::<T>(a_next, stats, cells)?,
        normalized_rows::<T>(statics, stats, cells)?,
    ];
    Ok(hconcat(&parts))
}

/// Column-wise concatenation of equally tall matrices.
pub(crate) fn hconcat<T: Scalar>(parts: &[Matrix<T>]) -> Matrix<T> {
    let rows = parts[0].rows();
    let cols: usize = parts.iter().map(|p| p.cols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    for r in 0..rows {
        let dst = out.row_mut(r);
        let mut off = 0;
        for p in parts {
            dst[off..off + p.cols()].copy_from_slice(p.row(r));
            off += p.cols();
        }
    }
    out
}

/// Grid-node input `[X^{t-1}, X^t, A^{t-1}, A^t, A^{t+1}, S]`, normalized, one
/// row per ocean cell of `x_cur` in row-major order.
pub fn assemble_grid_input<T: Scalar>(
    x_prev: &FieldSet,
    x_cur: &FieldSet,
    a_prev: &FieldSet,
    a_cur: &FieldSet,
    a_next: &FieldSet,
    statics: &FieldSet,
    stats: &NormStats,
) -> Result<Matrix<T>> {
    check_window(x_prev, x_cur, a_prev, a_cur, a_next)?;
    for x in [x_prev, x_cur] {
        if stats.role_of(&x.channels)? != Role::Ocean {
            return Err(Error::Data("ocean state channels do not match statistics".into()));
        }
    }
    let cells = ocean_cells(&x_cur.mask);
    let parts = [
        normalized_rows::<T>(x_prev, stats, &cells)?,
        normalized_rows::<T>(x_cur, stats, &cells)?,
        forcing_static_rows::<T>(a_prev, a_cur, a_next, statics, stats, &cells)?,
    ];
    Ok(hconcat(&parts))
}
