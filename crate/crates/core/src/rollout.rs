//! Autoregressive multi-day forecasts.
//!
//! A forecast starts from two consecutive ocean states `X^{-1}, X^0` and
//! applies the one-step model `T` times, feeding its own predictions back:
//! step `k` consumes the two latest states and the forcing triplet
//! `A^{k-1}, A^k, A^{k+1}`. Forcing comes from a [`Forcing`] source whose kind
//! only affects days after initialization, so runs that differ in forcing
//! share identical first-step inputs for the past and present days.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Scalar};
use crate::error::{Error, Result};
use crate::grid::{FieldSet, NormStats, OceanGrid};
use crate::model::{GraphTensors, Model};
use crate::synthetic::{forecast_forcing, GeneratorConfig};

/// Calendar date of day index 0.
pub fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1993, 1, 1).expect("valid epoch")
}

/// Calendar date of a day index.
pub fn date_of(day: i64) -> NaiveDate {
    epoch() + Duration::days(day)
}

/// Day of year in `1..=366`.
pub fn day_of_year(day: i64) -> u32 {
    date_of(day).ordinal()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForcingKind {
    Forecast,
    Reanalysis,
    Climatology,
}

impl ForcingKind {
    pub const ALL: [ForcingKind; 3] = [
        ForcingKind::Reanalysis,
        ForcingKind::Forecast,
        ForcingKind::Climatology,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ForcingKind::Forecast => "forecast",
            ForcingKind::Reanalysis => "reanalysis",
            ForcingKind::Climatology => "climatology",
        }
    }
}

impl fmt::Display for ForcingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ForcingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown forcing kind {s:?}")))
    }
}

/// Per day-of-year mean fields. Day 366 maps to day 365.
#[derive(Debug, Clone, PartialEq)]
pub struct Climatology {
    /// Layout template; its values are unused.
    template: FieldSet,
    /// Mean values for day of year `1..=365` at index `doy - 1`.
    means: Vec<Vec<f32>>,
}

fn clim_index(doy: u32) -> usize {
    doy.min(365) as usize - 1
}

impl Climatology {
    /// Mean field for the day of year of `day`, stamped with `day`.
    pub fn field(&self, day: i64) -> FieldSet {
        let mut f = self.template.clone();
        f.day = day;
        f.values.clone_from(&self.means[clim_index(day_of_year(day))]);
        f
    }

    pub fn channels(&self) -> &[String] {
        &self.template.channels
    }
}

/// Day-of-year means over `fields` (any number of years).
///
/// Leap days are left out of the averages; lookups for day 366 reuse day
/// 365. Every day of year `1..=365` must be covered at least once.
pub fn build_climatology(fields: &[FieldSet]) -> Result<Climatology> {
    let first = fields
        .first()
        .ok_or_else(|| Error::Data("climatology needs at least one field".into()))?;
    let n = first.values.len();
    let mut sums = vec![vec![0f64; n]; 365];
    let mut counts = [0usize; 365];
    for f in fields {
        if !f.same_layout(first) {
            return Err(Error::Data(format!(
                "field of day {} differs in layout from day {}",
                f.day, first.day
            )));
        }
        let doy = day_of_year(f.day);
        if doy == 366 {
            continue;
        }
        let k = clim_index(doy);
        counts[k] += 1;
        for (s, &v) in sums[k].iter_mut().zip(&f.values) {
            *s += v as f64;
        }
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Data(format!(
            "climatology needs a full year; day of year {} is missing",
            missing + 1
        )));
    }
    let means = sums
        .into_iter()
        .zip(counts)
        .map(|(s, c)| s.into_iter().map(|v| (v / c as f64) as f32).collect())
        .collect();
    Ok(Climatology {
        template: first.clone(),
        means,
    })
}

/// Forecast-valid fields for days after initialization.
pub trait ForecastProduct: Send + Sync {
    fn field(&self, init_day: i64, day: i64) -> Result<FieldSet>;
}

/// Forecast winds of the synthetic generator.
#[derive(Debug, Clone)]
pub struct SyntheticForecast {
    pub config: GeneratorConfig,
    pub grid: OceanGrid,
}

impl ForecastProduct for SyntheticForecast {
    fn field(&self, init_day: i64, day: i64) -> Result<FieldSet> {
        forecast_forcing(&self.config, &self.grid, init_day, day)
    }
}

/// Forecast fields stored by `(init_day, valid_day)`.
#[derive(Debug, Clone, Default)]
pub struct StoredForecast {
    pub fields: BTreeMap<(i64, i64), FieldSet>,
}

impl ForecastProduct for StoredForecast {
    fn field(&self, init_day: i64, day: i64) -> Result<FieldSet> {
        self.fields
            .get(&(init_day, day))
            .cloned()
            .ok_or_else(|| Error::Data(format!("no forecast from day {init_day} valid at day {day}")))
    }
}

#[derive(Clone)]
enum Product {
    Analysis,
    Climatology(Arc<Climatology>),
    Forecast(Arc<dyn ForecastProduct>),
}

/// An atmospheric forcing source.
///
/// Days up to and including the initialization day always come from the
/// analysis; later days come from the source's product.
#[derive(Clone)]
pub struct Forcing {
    kind: ForcingKind,
    analysis: Arc<BTreeMap<i64, FieldSet>>,
    product: Product,
}

impl fmt::Debug for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Forcing")
            .field("kind", &self.kind)
            .field("analysis_days", &self.analysis.len())
            .finish()
    }
}

fn day_map(fields: impl IntoIterator<Item = FieldSet>) -> Arc<BTreeMap<i64, FieldSet>> {
    Arc::new(fields.into_iter().map(|f| (f.day, f)).collect())
}

impl Forcing {
    pub fn reanalysis(analysis: impl IntoIterator<Item = FieldSet>) -> Self {
        Self {
            kind: ForcingKind::Reanalysis,
            analysis: day_map(analysis),
            product: Product::Analysis,
        }
    }

    pub fn climatology(analysis: impl IntoIterator<Item = FieldSet>, clim: Climatology) -> Self {
        Self {
            kind: ForcingKind::Climatology,
            analysis: day_map(analysis),
            product: Product::Climatology(Arc::new(clim)),
        }
    }

    pub fn forecast(
        analysis: impl IntoIterator<Item = FieldSet>,
        product: Arc<dyn ForecastProduct>,
    ) -> Self {
        Self {
            kind: ForcingKind::Forecast,
            analysis: day_map(analysis),
            product: Product::Forecast(product),
        }
    }

    /// The same analysis with a different product.
    pub fn with_kind(&self, kind: ForcingKind, clim: Option<&Arc<Climatology>>, forecast: Option<&Arc<dyn ForecastProduct>>) -> Result<Self> {
        let product = match kind {
            ForcingKind::Reanalysis => Product::Analysis,
            ForcingKind::Climatology => Product::Climatology(
                clim.ok_or_else(|| Error::Config("climatology forcing needs a climatology".into()))?
                    .clone(),
            ),
            ForcingKind::Forecast => Product::Forecast(
                forecast
                    .ok_or_else(|| Error::Config("forecast forcing needs a forecast product".into()))?
                    .clone(),
            ),
        };
        Ok(Self {
            kind,
            analysis: self.analysis.clone(),
            product,
        })
    }

    pub fn kind(&self) -> ForcingKind {
        self.kind
    }

    /// Forcing valid at `day` for a forecast initialized at `init_day`.
    pub fn field(&self, init_day: i64, day: i64) -> Result<FieldSet> {
        let analysis = || {
            self.analysis
                .get(&day)
                .cloned()
                .ok_or_else(|| Error::Data(format!("forcing gap: no analysis for day {day}")))
        };
        if day <= init_day {
            return analysis();
        }
        let f = match &self.product {
            Product::Analysis => analysis()?,
            Product::Climatology(c) => c.field(day),
            Product::Forecast(p) => p.field(init_day, day)?,
        };
        if f.day != day {
            return Err(Error::Data(format!("forcing for day {day} is stamped {}", f.day)));
        }
        Ok(f)
    }
}

/// One lead of a run as listed in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadEntry {
    pub lead: usize,
    pub day: i64,
    pub date: String,
    pub path: Option<String>,
}

/// Provenance of a forecast run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub forcing: ForcingKind,
    /// Days of the two initial states, `t0 - 1` and `t0`.
    pub init_days: [i64; 2],
    pub init_date: String,
    pub horizon: usize,
    pub leads: Vec<LeadEntry>,
    /// Resolved configuration echoed by the caller.
    pub config: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct ForecastRun {
    pub forcing: ForcingKind,
    pub init_days: [i64; 2],
    /// Predicted states for leads `1..=T`.
    pub states: Vec<FieldSet>,
}

impl ForecastRun {
    pub fn horizon(&self) -> usize {
        self.states.len()
    }

    /// State at `lead` (1-based).
    pub fn lead(&self, lead: usize) -> Option<&FieldSet> {
        lead.checked_sub(1).and_then(|i| self.states.get(i))
    }

    pub fn manifest(&self, config: serde_json::Value, paths: Option<&[String]>) -> RunManifest {
        RunManifest {
            forcing: self.forcing,
            init_days: self.init_days,
            init_date: date_of(self.init_days[1]).to_string(),
            horizon: self.horizon(),
            leads: self
                .states
                .iter()
                .enumerate()
                .map(|(i, s)| LeadEntry {
                    lead: i + 1,
                    day: s.day,
                    date: date_of(s.day).to_string(),
                    path: paths.and_then(|p| p.get(i).cloned()),
                })
                .collect(),
            config,
        }
    }

    /// Writes `lead_XX.ogf` per lead and `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path, config: serde_json::Value) -> Result<RunManifest> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths = Vec::with_capacity(self.states.len());
        for (i, s) in self.states.iter().enumerate() {
            let name = format!("lead_{:02}.ogf", i + 1);
            s.write(&dir.join(&name))?;
            paths.push(name);
        }
        let manifest = self.manifest(config, Some(&paths));
        let path: PathBuf = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }
}

/// Runs the model `horizon` times from `(x_m1, x_0)`.
///
/// All forcing for days `t0 - 1 ..= t0 + horizon` is fetched before any model
/// evaluation, so a gap fails fast.
#[allow(clippy::too_many_arguments)]
pub fn run_forecast<T: Scalar>(
    model: &Model,
    params: &ParamStore<T>,
    graph: &GraphTensors<T>,
    stats: &NormStats,
    statics: &FieldSet,
    x_m1: &FieldSet,
    x_0: &FieldSet,
    forcing: &Forcing,
    horizon: usize,
) -> Result<ForecastRun> {
    if horizon == 0 {
        return Err(Error::Config("forecast horizon must be at least 1".into()));
    }
    let t0 = x_0.day;
    if x_m1.day != t0 - 1 {
        return Err(Error::Data(format!(
            "initial states are days {} and {t0}, expected consecutive days",
            x_m1.day
        )));
    }
    let a: Vec<FieldSet> = (t0 - 1..=t0 + horizon as i64)
        .map(|d| forcing.field(t0, d))
        .collect::<Result<_>>()?;
    let mut prev = x_m1.clone();
    let mut cur = x_0.clone();
    let mut states = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let next = model
            .step(params, graph, stats, &prev, &cur, &a[k], &a[k + 1], &a[k + 2], statics)
            .map_err(|e| match e {
                Error::NonFinite { stage } => Error::NonFinite {
                    stage: format!("{stage} at lead {}", k + 1),
                },
                other => other,
            })?;
        prev = std::mem::replace(&mut cur, next.clone());
        states.push(next);
    }
    Ok(ForecastRun {
        forcing: forcing.kind(),
        init_days: [t0 - 1, t0],
        states,
    })
}
