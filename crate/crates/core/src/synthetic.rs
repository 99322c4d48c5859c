//! Deterministic, wind-coupled toy ocean on a latitude-longitude grid.
//!
//! The generator is analytic rather than a model integration:
//!
//! - Sea surface height is a sum of Gaussian eddies that drift westward and
//!   fade in and out over a finite lifetime. Currents contain a geostrophic part
//!   derived from the height gradient, and temperature and salinity carry
//!   eddy anomalies over a seasonal background.
//! - Winds are a seasonally rotating large-scale pattern plus independent daily
//!   "weather" blobs. A wind-driven surface current follows
//!   `u_w(t+1) = (1 - λ) u_w(t) + γ W(t+1)` and decays with depth; an air
//!   temperature anomaly drives the upper-ocean temperature the same way.
//! - A forecast-like wind product keeps a lead-dependent fraction
//!   `exp(-lead / τ)` of the true weather anomaly and adds a little independent
//!   weather.
//!
//! Ocean eddies and atmospheric weather use independent random streams, so with
//! zero coupling the ocean does not depend on the weather seed.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ChannelSchema, FieldSet, OceanGrid, SSH};
use crate::rollout::day_of_year;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SchemaKind {
    #[default]
    Toy,
    Full,
}

impl SchemaKind {
    pub fn schema(self) -> ChannelSchema {
        match self {
            SchemaKind::Toy => ChannelSchema::toy(),
            SchemaKind::Full => ChannelSchema::full(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_lat: usize,
    pub n_lon: usize,
    pub schema: SchemaKind,
    /// Seed of the ocean eddy field.
    pub seed: u64,
    /// Seed of the atmospheric weather.
    pub weather_seed: u64,
    pub continents: bool,
    pub n_eddies: usize,
    pub eddy_radius_deg: [f64; 2],
    pub eddy_amplitude_m: [f64; 2],
    /// Westward drift speed range in degrees of longitude per day.
    pub drift_deg_per_day: [f64; 2],
    pub eddy_lifetime_days: [f64; 2],
    /// Current speed per unit height gradient (m/s per m/deg).
    pub geostrophic_factor: f64,
    /// `γ`: surface current gained per m/s of wind per day.
    pub wind_coupling: f64,
    /// `λ`: daily decay of the wind-driven current.
    pub current_damping: f64,
    /// e-folding depth in meters of the wind-driven current.
    pub ekman_depth_m: f64,
    /// Daily gain of upper-ocean temperature per kelvin of air anomaly.
    pub heat_coupling: f64,
    pub heat_damping: f64,
    pub weather_blobs: usize,
    pub weather_radius_deg: f64,
    pub weather_wind_std: f64,
    pub weather_t2m_std: f64,
    /// `τ` of the forecast skill decay `exp(-lead / τ)`.
    pub forecast_skill_days: f64,
    /// Amplitude of independent weather added to forecasts at long lead.
    pub forecast_noise: f64,
    /// Standard deviation of white noise added to ocean fields.
    pub noise_amplitude: f64,
    /// Days simulated before the first output day.
    pub spinup_days: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_lat: 90,
            n_lon: 180,
            schema: SchemaKind::Toy,
            seed: 7,
            weather_seed: 11,
            continents: true,
            n_eddies: 60,
            eddy_radius_deg: [4.0, 8.0],
            eddy_amplitude_m: [0.1, 0.3],
            drift_deg_per_day: [0.2, 0.8],
            eddy_lifetime_days: [60.0, 120.0],
            geostrophic_factor: 5.0,
            wind_coupling: 0.01,
            current_damping: 0.5,
            ekman_depth_m: 25.0,
            heat_coupling: 0.05,
            heat_damping: 0.2,
            weather_blobs: 40,
            weather_radius_deg: 12.0,
            weather_wind_std: 6.0,
            weather_t2m_std: 3.0,
            forecast_skill_days: 3.0,
            forecast_noise: 0.3,
            noise_amplitude: 0.0,
            spinup_days: 20,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_lat < 4 || self.n_lon < 8 {
            return Err(Error::Config(format!(
                "degenerate synthetic grid {}x{}",
                self.n_lat, self.n_lon
            )));
        }
        let ranges = [
            self.eddy_radius_deg,
            self.eddy_amplitude_m,
            self.drift_deg_per_day,
            self.eddy_lifetime_days,
        ];
        if ranges.iter().any(|r| !(r[0] <= r[1]) || r[0] < 0.0)
            || self.eddy_radius_deg[0] <= 0.0
            || self.eddy_lifetime_days[0] < 2.0
        {
            return Err(Error::Config("invalid eddy parameter range".into()));
        }
        let nonneg = [
            self.geostrophic_factor,
            self.wind_coupling,
            self.heat_coupling,
            self.weather_wind_std,
            self.weather_t2m_std,
            self.forecast_noise,
            self.noise_amplitude,
        ];
        if nonneg.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("coupling and noise parameters must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.current_damping) || !(0.0..=1.0).contains(&self.heat_damping) {
            return Err(Error::Config("damping rates must lie in [0, 1]".into()));
        }
        if !(self.weather_radius_deg > 0.0 && self.forecast_skill_days > 0.0 && self.ekman_depth_m > 0.0) {
            return Err(Error::Config("length and time scales must be positive".into()));
        }
        Ok(())
    }

    /// The grid with the idealized continents (or all ocean).
    pub fn grid(&self) -> Result<OceanGrid> {
        self.validate()?;
        let g = OceanGrid::global(self.n_lat, self.n_lon)?;
        let mut mask = vec![true; g.n_cells()];
        let mut depth = vec![0.0; g.n_cells()];
        for (k, (m, d)) in mask.iter_mut().zip(depth.iter_mut()).enumerate() {
            let (lat, lon) = g.lat_lon_of(k);
            *m = !(self.continents && is_land(lat, lon));
            if *m {
                *d = bathymetry(lat, lon);
            }
        }
        g.with_mask(mask, depth)
    }
}

/// Idealized continents as longitude x latitude boxes (degrees east, north).
const CONTINENTS: [([f64; 2], [f64; 2]); 8] = [
    // North America
    ([235.0, 290.0], [15.0, 70.0]),
    // South America
    ([280.0, 320.0], [-55.0, 5.0]),
    // Africa and Europe, split at the prime meridian
    ([345.0, 360.0], [-35.0, 70.0]),
    ([0.0, 50.0], [-35.0, 70.0]),
    // Asia
    ([50.0, 115.0], [10.0, 75.0]),
    ([115.0, 140.0], [45.0, 75.0]),
    // Australia
    ([115.0, 150.0], [-40.0, -12.0]),
    // Antarctica
    ([0.0, 360.0], [-90.0, -70.0]),
];

/// Whether the idealized continents cover `(lat, lon)`.
pub fn is_land(lat: f64, lon: f64) -> bool {
    let lon = lon.rem_euclid(360.0);
    CONTINENTS
        .iter()
        .any(|(lo, la)| lon >= lo[0] && lon < lo[1] && lat >= la[0] && lat < la[1])
}

/// Smooth analytic bathymetry, always deeper than 700 m.
pub fn bathymetry(lat: f64, lon: f64) -> f64 {
    let (p, l) = (lat.to_radians(), lon.to_radians());
    3500.0 + 1200.0 * (2.0 * l).sin() * p.cos() + 800.0 * (3.0 * p).cos()
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream(seed: u64, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(mix(mix(seed) ^ a) ^ b))
}

/// Longitude difference wrapped to `(-180, 180]`.
fn wrap_deg(d: f64) -> f64 {
    let w = d.rem_euclid(360.0);
    if w > 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// One life cycle of an eddy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EddyLife {
    pub eddy: usize,
    pub born_day: f64,
    pub lifetime_days: f64,
    pub lat0: f64,
    pub lon0: f64,
    pub radius_deg: f64,
    /// Signed peak height in meters.
    pub amplitude_m: f64,
    pub drift_deg_per_day: f64,
}

impl EddyLife {
    /// Center and envelope-scaled amplitude at `day`.
    pub fn at(&self, day: f64) -> (f64, f64, f64) {
        let age = day - self.born_day;
        let env = (PI * age / self.lifetime_days).sin().powi(2);
        let lon = (self.lon0 - self.drift_deg_per_day * age).rem_euclid(360.0);
        let lat = self.lat0 + 1.5 * (2.0 * PI * age / self.lifetime_days).sin();
        (lat, lon, self.amplitude_m * env)
    }
}

fn eddy_life(cfg: &GeneratorConfig, eddy: usize, day: f64) -> EddyLife {
    let mut rng = stream(cfg.seed, eddy as u64, u64::MAX);
    let life = rng.random_range(cfg.eddy_lifetime_days[0]..=cfg.eddy_lifetime_days[1]);
    let offset = rng.random_range(0.0..life);
    let cycle = ((day + offset) / life).floor();
    let born_day = cycle * life - offset;
    let mut rng = stream(cfg.seed, eddy as u64, cycle as i64 as u64);
    let lat0 = rng.random_range(-55.0..55.0);
    let lon0 = rng.random_range(0.0..360.0);
    let radius_deg = rng.random_range(cfg.eddy_radius_deg[0]..=cfg.eddy_radius_deg[1]);
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let amplitude_m = sign * rng.random_range(cfg.eddy_amplitude_m[0]..=cfg.eddy_amplitude_m[1]);
    let drift = rng.random_range(cfg.drift_deg_per_day[0]..=cfg.drift_deg_per_day[1]);
    EddyLife {
        eddy,
        born_day,
        lifetime_days: life,
        lat0,
        lon0,
        radius_deg,
        amplitude_m,
        drift_deg_per_day: drift,
    }
}

/// Height, geostrophic currents from the eddies at `day`, per cell.
struct EddyFields {
    ssh: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
}

fn eddy_fields(cfg: &GeneratorConfig, grid: &OceanGrid, day: i64) -> (EddyFields, Vec<EddyLife>) {
    let lives: Vec<EddyLife> = (0..cfg.n_eddies)
        .map(|k| eddy_life(cfg, k, day as f64))
        .collect();
    let states: Vec<(f64, f64, f64, f64)> = lives
        .iter()
        .map(|e| {
            let (la, lo, a) = e.at(day as f64);
            (la, lo, a, e.radius_deg)
        })
        .collect();
    let kappa = cfg.geostrophic_factor;
    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..grid.n_lat)
        .into_par_iter()
        .map(|i| {
            let lat = grid.lat[i];
            let mut ssh = vec![0.0; grid.n_lon];
            let mut u = vec![0.0; grid.n_lon];
            let mut v = vec![0.0; grid.n_lon];
            for &(la, lo, a, r) in &states {
                let dy = lat - la;
                if dy.abs() > 4.0 * r || a == 0.0 {
                    continue;
                }
                let c = la.to_radians().cos();
                for j in 0..grid.n_lon {
                    let dx = wrap_deg(grid.lon[j] - lo) * c;
                    let q = (dx * dx + dy * dy) / (r * r);
                    if q > 16.0 {
                        continue;
                    }
                    let eta = a * (-0.5 * q).exp();
                    ssh[j] += eta;
                    // u = -κ ∂η/∂y, v = κ ∂η/∂x
                    u[j] += kappa * eta * dy / (r * r);
                    v[j] -= kappa * eta * dx / (r * r);
                }
            }
            (ssh, u, v)
        })
        .collect();
    let mut f = EddyFields {
        ssh: Vec::with_capacity(grid.n_cells()),
        u: Vec::with_capacity(grid.n_cells()),
        v: Vec::with_capacity(grid.n_cells()),
    };
    for (s, u, v) in rows {
        f.ssh.extend(s);
        f.u.extend(u);
        f.v.extend(v);
    }
    (f, lives)
}

/// Atmospheric weather anomaly `(u10, v10, t2m)` per cell.
struct Weather {
    u: Vec<f64>,
    v: Vec<f64>,
    t: Vec<f64>,
}

fn weather(cfg: &GeneratorConfig, grid: &OceanGrid, seed: u64, a: u64, b: u64) -> Weather {
    let mut rng = stream(seed, a, b);
    let wind = Normal::new(0.0, cfg.weather_wind_std).expect("finite std");
    let temp = Normal::new(0.0, cfg.weather_t2m_std).expect("finite std");
    let blobs: Vec<[f64; 6]> = (0..cfg.weather_blobs)
        .map(|_| {
            let lat = rng.random_range(-1.0f64..1.0).asin().to_degrees();
            let lon = rng.random_range(0.0..360.0);
            let r = cfg.weather_radius_deg * rng.random_range(0.7..1.3);
            [lat, lon, r, wind.sample(&mut rng), wind.sample(&mut rng), temp.sample(&mut rng)]
        })
        .collect();
    let n = grid.n_cells();
    let mut w = Weather {
        u: vec![0.0; n],
        v: vec![0.0; n],
        t: vec![0.0; n],
    };
    for [la, lo, r, bu, bv, bt] in blobs {
        let c = la.to_radians().cos();
        for i in 0..grid.n_lat {
            let dy = grid.lat[i] - la;
            if dy.abs() > 4.0 * r {
                continue;
            }
            for j in 0..grid.n_lon {
                let dx = wrap_deg(grid.lon[j] - lo) * c;
                let q = (dx * dx + dy * dy) / (r * r);
                if q > 16.0 {
                    continue;
                }
                let g = (-0.5 * q).exp();
                let k = i * grid.n_lon + j;
                w.u[k] += bu * g;
                w.v[k] += bv * g;
                w.t[k] += bt * g;
            }
        }
    }
    w
}

const WEATHER_TRUE: u64 = 1;
const WEATHER_FORECAST: u64 = 2;

/// Seasonal wind and air temperature `(u10, v10, t2m)` at a cell.
fn seasonal_atmosphere(lat: f64, lon: f64, doy: u32) -> (f64, f64, f64) {
    let (p, l) = (lat.to_radians(), lon.to_radians());
    let s = 2.0 * PI * (doy as f64 - 1.0) / 365.0;
    // trades and westerlies, rotated by a seasonal angle
    let u0 = -6.0 * (3.0 * p).cos() * p.cos();
    let v0 = 2.0 * (2.0 * l).sin() * p.cos();
    let theta = 0.4 * s.sin();
    let (st, ct) = theta.sin_cos();
    let u = u0 * ct - v0 * st;
    let v = u0 * st + v0 * ct;
    let t2m = 273.15 + 30.0 * p.cos().powi(2) - 5.0 + 8.0 * p.sin() * (s - 1.4).sin();
    (u, v, t2m)
}

fn forcing_from(
    grid: &OceanGrid,
    schema: &ChannelSchema,
    day: i64,
    anomaly: &Weather,
) -> Result<FieldSet> {
    let doy = day_of_year(day);
    let n = grid.n_cells();
    let names = schema.forcing_names();
    let mut values = vec![0f32; names.len() * n];
    for k in 0..n {
        let (lat, lon) = grid.lat_lon_of(k);
        let (us, vs, ts) = seasonal_atmosphere(lat, lon, doy);
        let (u, v, t) = (us + anomaly.u[k], vs + anomaly.v[k], ts + anomaly.t[k]);
        let speed = u.hypot(v);
        let p = lat.to_radians();
        for (c, name) in names.iter().enumerate() {
            let val = match name.as_str() {
                "u10" => u,
                "v10" => v,
                "t2m" => t,
                "d2m" => t - 3.0 - 2.0 * p.sin().abs(),
                "precipitation" => 1e-4 * (1.0 + (anomaly.t[k] / 3.0).tanh()) * p.cos(),
                "shortwave_flux" => 250.0 * p.cos().max(0.0) + 10.0 * anomaly.t[k],
                "longwave_flux" => -60.0 - 0.5 * anomaly.t[k],
                "latent_heat_flux" => -80.0 - 6.0 * speed,
                "sensible_heat_flux" => -15.0 - 1.5 * speed + 2.0 * anomaly.t[k],
                "sea_level_pressure" => 101325.0 - 40.0 * (anomaly.u[k] * p.sin()),
                other => {
                    return Err(Error::Config(format!(
                        "synthetic generator has no forcing variable {other:?}"
                    )))
                }
            };
            values[c * n + k] = val as f32;
        }
    }
    FieldSet::new(names, grid.n_lat, grid.n_lon, day, grid.mask.clone(), values)
}

/// True ("reanalysis") forcing at `day`.
pub fn true_forcing(cfg: &GeneratorConfig, grid: &OceanGrid, day: i64) -> Result<FieldSet> {
    let w = weather(cfg, grid, cfg.weather_seed, WEATHER_TRUE, day as u64);
    forcing_from(grid, &cfg.schema.schema(), day, &w)
}

/// Forecast forcing valid at `day` for a forecast issued at `init_day`.
/// Days up to `init_day` get the true fields.
pub fn forecast_forcing(
    cfg: &GeneratorConfig,
    grid: &OceanGrid,
    init_day: i64,
    day: i64,
) -> Result<FieldSet> {
    let lead = day - init_day;
    if lead <= 0 {
        return true_forcing(cfg, grid, day);
    }
    let rho = (-(lead as f64) / cfg.forecast_skill_days).exp();
    let noise = cfg.forecast_noise * (1.0 - rho * rho).sqrt();
    let truth = weather(cfg, grid, cfg.weather_seed, WEATHER_TRUE, day as u64);
    let alt = weather(
        cfg,
        grid,
        cfg.weather_seed,
        WEATHER_FORECAST,
        mix(init_day as u64) ^ day as u64,
    );
    let blend = |a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| rho * x + noise * y).collect()
    };
    let w = Weather {
        u: blend(&truth.u, &alt.u),
        v: blend(&truth.v, &alt.v),
        t: blend(&truth.t, &alt.t),
    };
    forcing_from(grid, &cfg.schema.schema(), day, &w)
}

/// Ground truth recorded alongside a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthManifest {
    pub config: GeneratorConfig,
    pub start_day: i64,
    pub n_days: usize,
    pub wind_coupling: f64,
    pub current_damping: f64,
    /// Every eddy life cycle overlapping the generated period.
    pub eddies: Vec<EddyLife>,
}

/// A generated dataset: consecutive daily ocean and forcing fields.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub grid: OceanGrid,
    pub schema: ChannelSchema,
    pub ocean: Vec<FieldSet>,
    pub forcing: Vec<FieldSet>,
    pub statics: FieldSet,
    pub truth: TruthManifest,
}

impl SyntheticDataset {
    pub fn start_day(&self) -> i64 {
        self.ocean[0].day
    }

    /// Position of `day` in the daily vectors.
    pub fn index(&self, day: i64) -> Option<usize> {
        let i = day - self.start_day();
        (i >= 0 && (i as usize) < self.ocean.len()).then_some(i as usize)
    }

    /// Writes the dataset in the [`DatasetDir`] layout.
    pub fn write(&self, root: &Path) -> Result<DatasetDir> {
        let dir = DatasetDir::create(root)?;
        self.statics.write(&dir.statics_path())?;
        for (o, a) in self.ocean.iter().zip(&self.forcing) {
            o.write(&dir.ocean_path(o.day))?;
            a.write(&dir.forcing_path(a.day))?;
        }
        let path = dir.truth_path();
        let text = serde_json::to_string_pretty(&self.truth)?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(dir)
    }
}

/// On-disk dataset: `statics.ogf`, `ocean/day_NNNNNN.ogf`,
/// `forcing/day_NNNNNN.ogf` and an optional `truth.json`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetDir {
    pub root: PathBuf,
}

fn day_file(day: i64) -> String {
    format!("day_{day:06}.ogf")
}

impl DatasetDir {
    pub fn open(root: &Path) -> Result<Self> {
        let d = Self {
            root: root.to_path_buf(),
        };
        if !d.statics_path().is_file() {
            return Err(Error::Data(format!(
                "{} is not a dataset directory (no statics.ogf)",
                root.display()
            )));
        }
        Ok(d)
    }

    pub fn create(root: &Path) -> Result<Self> {
        for sub in ["ocean", "forcing"] {
            let p = root.join(sub);
            std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn statics_path(&self) -> PathBuf {
        self.root.join("statics.ogf")
    }

    pub fn truth_path(&self) -> PathBuf {
        self.root.join("truth.json")
    }

    pub fn ocean_path(&self, day: i64) -> PathBuf {
        self.root.join("ocean").join(day_file(day))
    }

    pub fn forcing_path(&self, day: i64) -> PathBuf {
        self.root.join("forcing").join(day_file(day))
    }

    pub fn statics(&self) -> Result<FieldSet> {
        FieldSet::read(&self.statics_path())
    }

    pub fn grid(&self) -> Result<OceanGrid> {
        OceanGrid::from_statics(&self.statics()?)
    }

    pub fn truth(&self) -> Result<TruthManifest> {
        let path = self.truth_path();
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn ocean(&self, day: i64) -> Result<FieldSet> {
        read_day(&self.ocean_path(day), day)
    }

    pub fn forcing(&self, day: i64) -> Result<FieldSet> {
        read_day(&self.forcing_path(day), day)
    }

    /// Sorted days with an ocean file.
    pub fn days(&self) -> Result<Vec<i64>> {
        let dir = self.root.join("ocean");
        let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut days = Vec::new();
        for e in entries {
            let name = e.map_err(|e| Error::io(&dir, e))?.file_name();
            let name = name.to_string_lossy();
            if let Some(d) = name
                .strip_prefix("day_")
                .and_then(|r| r.strip_suffix(".ogf"))
                .and_then(|r| r.parse::<i64>().ok())
            {
                days.push(d);
            }
        }
        days.sort_unstable();
        Ok(days)
    }

    /// Ocean and forcing fields for `first..=last`.
    pub fn range(&self, first: i64, last: i64) -> Result<(Vec<FieldSet>, Vec<FieldSet>)> {
        let ocean = (first..=last).map(|d| self.ocean(d)).collect::<Result<_>>()?;
        let forcing = (first..=last).map(|d| self.forcing(d)).collect::<Result<_>>()?;
        Ok((ocean, forcing))
    }
}

fn read_day(path: &Path, day: i64) -> Result<FieldSet> {
    if !path.is_file() {
        return Err(Error::Data(format!("missing field file for day {day}: {}", path.display())));
    }
    let f = FieldSet::read(path)?;
    if f.day != day {
        return Err(Error::Data(format!(
            "{} is stamped day {}, expected {day}",
            path.display(),
            f.day
        )));
    }
    Ok(f)
}

/// Static fields `latitude`, `longitude`, `depth` of a grid.
pub fn statics_for(grid: &OceanGrid, schema: &ChannelSchema) -> Result<FieldSet> {
    let n = grid.n_cells();
    let names = schema.static_names();
    let mut values = vec![0f32; names.len() * n];
    for k in 0..n {
        let (lat, lon) = grid.lat_lon_of(k);
        for (c, name) in names.iter().enumerate() {
            values[c * n + k] = match name.as_str() {
                "latitude" => lat,
                "longitude" => lon,
                "depth" => grid.depth[k],
                other => return Err(Error::Config(format!("unknown static channel {other:?}"))),
            } as f32;
        }
    }
    FieldSet::new(names, grid.n_lat, grid.n_lon, 0, grid.mask.clone(), values)
}

/// Generates `n_days` consecutive days starting at day index `start_day`.
pub fn generate(cfg: &GeneratorConfig, start_day: i64, n_days: usize) -> Result<SyntheticDataset> {
    if n_days < 3 {
        return Err(Error::Config(format!("need at least 3 days, got {n_days}")));
    }
    let grid = cfg.grid()?;
    let schema = cfg.schema.schema();
    let n = grid.n_cells();
    let ocean_names = schema.ocean_names();
    let mut noise_rng = stream(cfg.seed, 0xA5A5, 0);
    let noise = Normal::new(0.0, cfg.noise_amplitude.max(0.0)).expect("finite std");

    // Wind-driven current and air-driven temperature anomaly, integrated daily.
    let mut uw = vec![0.0; n];
    let mut vw = vec![0.0; n];
    let mut tw = vec![0.0; n];
    let first = start_day - cfg.spinup_days as i64;
    let mut ocean = Vec::with_capacity(n_days);
    let mut forcing = Vec::with_capacity(n_days);
    let mut eddies: Vec<EddyLife> = Vec::new();
    for day in first..start_day + n_days as i64 {
        let w = weather(cfg, &grid, cfg.weather_seed, WEATHER_TRUE, day as u64);
        let doy = day_of_year(day);
        for k in 0..n {
            let (lat, lon) = grid.lat_lon_of(k);
            let (us, vs, _) = seasonal_atmosphere(lat, lon, doy);
            uw[k] = (1.0 - cfg.current_damping) * uw[k] + cfg.wind_coupling * (us + w.u[k]);
            vw[k] = (1.0 - cfg.current_damping) * vw[k] + cfg.wind_coupling * (vs + w.v[k]);
            tw[k] = (1.0 - cfg.heat_damping) * tw[k] + cfg.heat_coupling * w.t[k];
        }
        if day < start_day {
            continue;
        }
        let (ef, lives) = eddy_fields(cfg, &grid, day);
        for l in lives {
            if !eddies.iter().any(|e| e.eddy == l.eddy && e.born_day == l.born_day) {
                eddies.push(l);
            }
        }
        let season = 2.0 * PI * (doy as f64 - 1.0) / 365.0;
        let mut values = vec![f32::NAN; ocean_names.len() * n];
        for (c, ch) in schema.ocean.iter().enumerate() {
            let z = ch.depth.unwrap_or(0.0);
            let deep = (-z / 500.0).exp();
            let ek = (-z / cfg.ekman_depth_m).exp();
            let thermo = (-z / 400.0).exp();
            for k in 0..n {
                if !grid.mask[k] {
                    continue;
                }
                let lat = grid.lat_lon_of(k).0;
                let p = lat.to_radians();
                let eta = ef.ssh[k];
                let val = match ch.variable.as_str() {
                    "temperature" => {
                        let surf = 2.0 + 26.0 * p.cos().powi(2) + 3.0 * p.sin() * (season - 1.9).sin();
                        surf * thermo + 4.0 * (1.0 - thermo) + 8.0 * eta * deep + tw[k] * ek
                    }
                    "salinity" => {
                        34.6 + 1.2 * (2.0 * p).cos() * thermo - 1.5 * eta * deep
                            - 0.02 * tw[k] * ek
                    }
                    "eastward_current" => ef.u[k] * deep + uw[k] * ek,
                    "northward_current" => ef.v[k] * deep + vw[k] * ek,
                    v if v == SSH => eta + 0.05 * p.sin() * season.sin(),
                    other => {
                        return Err(Error::Config(format!(
                            "synthetic generator has no ocean variable {other:?}"
                        )))
                    }
                };
                let val = if cfg.noise_amplitude > 0.0 {
                    val + noise.sample(&mut noise_rng)
                } else {
                    val
                };
                values[c * n + k] = val as f32;
            }
        }
        ocean.push(FieldSet::new(
            ocean_names.clone(),
            grid.n_lat,
            grid.n_lon,
            day,
            grid.mask.clone(),
            values,
        )?);
        forcing.push(forcing_from(&grid, &schema, day, &w)?);
    }
    eddies.sort_by(|a, b| a.eddy.cmp(&b.eddy).then(a.born_day.total_cmp(&b.born_day)));
    let statics = statics_for(&grid, &schema)?;
    Ok(SyntheticDataset {
        truth: TruthManifest {
            config: cfg.clone(),
            start_day,
            n_days,
            wind_coupling: cfg.wind_coupling,
            current_damping: cfg.current_damping,
            eddies,
        },
        grid,
        schema,
        ocean,
        forcing,
        statics,
    })
}
