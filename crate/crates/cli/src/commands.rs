use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ocean_gnn::autodiff::Checkpoint;
use ocean_gnn::config::ExperimentConfig;
use ocean_gnn::evaluation::{
    ke_spectrum, region_by_name, rmse, rmse_csv, AreaWeighting, RmseRecord, SpectralWindow,
};
use ocean_gnn::graph::{build_ocean_graph, GraphOptions, OceanGraph};
use ocean_gnn::grid::{compute_norm_stats, Channel, FieldSet, OceanGrid};
use ocean_gnn::model::{GraphTensors, Model, ModelConfig};
use ocean_gnn::rollout::{
    build_climatology, run_forecast, Forcing, ForcingKind, RunManifest, SyntheticForecast,
};
use ocean_gnn::sphere::{build_hierarchy, TriMesh};
use ocean_gnn::synthetic::{generate, DatasetDir};
use ocean_gnn::training::{
    load_model, train_phase, CheckpointMeta, DailyData, LossContext, Phase, TrainLog, TrainState,
};
use ocean_gnn::{Error, Result};
use serde_json::json;

use crate::manifest::{io_err, Manifest};

fn mesh_file(level: u32) -> String {
    format!("mesh_L{level}.omsh")
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Writes through a temporary file so a crash never leaves a torn file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn build_mesh(levels: u32, out: &Path) -> Result<()> {
    let (coarse, fine) = build_hierarchy(levels)?;
    create_dir(out)?;
    let mut m = Manifest::new("build-mesh", json!({ "levels": levels }));
    for mesh in [&coarse, &fine] {
        let p = out.join(mesh_file(mesh.level));
        mesh.write(&p)?;
        m = m.output(&p);
    }
    m.write(&out.join("manifest.json"))?;
    println!("coarse nodes={} fine nodes={}", coarse.n_nodes(), fine.n_nodes());
    Ok(())
}

/// The two finest meshes of a build-mesh directory.
fn read_meshes(dir: &Path) -> Result<(TriMesh, TriMesh)> {
    let entries = std::fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    let mut levels = Vec::new();
    for e in entries {
        let name = e.map_err(|e| io_err(dir, e))?.file_name();
        if let Some(l) = name
            .to_string_lossy()
            .strip_prefix("mesh_L")
            .and_then(|r| r.strip_suffix(".omsh"))
            .and_then(|r| r.parse::<u32>().ok())
        {
            levels.push(l);
        }
    }
    let fine_level = levels
        .iter()
        .copied()
        .max()
        .ok_or_else(|| Error::Data(format!("no meshes in {}", dir.display())))?;
    if fine_level == 0 || !levels.contains(&(fine_level - 1)) {
        return Err(Error::Data(format!(
            "{} lacks the coarse mesh for level {fine_level}",
            dir.display()
        )));
    }
    let coarse = TriMesh::read(&dir.join(mesh_file(fine_level - 1)))?;
    let fine = TriMesh::read(&dir.join(mesh_file(fine_level)))?;
    Ok((coarse, fine))
}

fn read_grid(path: &Path) -> Result<OceanGrid> {
    if path.is_dir() {
        DatasetDir::open(path)?.grid()
    } else {
        OceanGrid::from_statics(&FieldSet::read(path)?)
    }
}

pub fn build_graph(grid: &Path, mesh: &Path, radius_factor: f64, out: &Path) -> Result<()> {
    let g = read_grid(grid)?;
    let (coarse, fine) = read_meshes(mesh)?;
    let options = GraphOptions {
        radius_factor,
        ..Default::default()
    };
    let graph = build_ocean_graph(&g, &coarse, &fine, &options)?;
    graph.write(out)?;
    Manifest::new("build-graph", serde_json::to_value(&options)?)
        .input(grid)?
        .input(mesh)?
        .output(out)
        .write(&sidecar(out))?;
    println!("{}", graph.summary());
    Ok(())
}

pub fn gen_data(config: &Path, start: i64, days: usize, out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let ds = generate(&cfg.generator, start, days)?;
    ds.write(out)?;
    Manifest::new("gen-data", cfg.resolved())
        .input(config)?
        .output(out)
        .write(&out.join("manifest.json"))?;
    println!(
        "days={} first={} grid={}x{} ocean cells={}",
        days,
        start,
        ds.grid.n_lat,
        ds.grid.n_lon,
        ds.grid.n_ocean()
    );
    Ok(())
}

fn graph_for(grid: &OceanGrid, model: &ModelConfig) -> Result<OceanGraph> {
    let (coarse, fine) = build_hierarchy(model.mesh_level)?;
    build_ocean_graph(grid, &coarse, &fine, &model.graph)
}

fn daily(dir: &DatasetDir, days: [i64; 2]) -> Result<DailyData> {
    let (o, a) = dir.range(days[0], days[1])?;
    DailyData::new(o, a)
}

pub fn train(config: &Path, phase: Phase, resume: Option<&Path>) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let mut tc = cfg.training.clone();
    tc.phase = phase;
    tc.validate()?;
    let dir = DatasetDir::open(&cfg.data.dataset)?;
    let statics = dir.statics()?;
    let grid = OceanGrid::from_statics(&statics)?;
    let train_data = daily(&dir, cfg.data.train_days)?;
    let val_data = daily(&dir, cfg.data.val_days)?;
    create_dir(&cfg.output_dir)?;
    let n = match phase {
        Phase::OneStep => 1,
        Phase::TwoStep => 2,
    };
    let ckpt_path = cfg.output_dir.join(format!("phase{n}.ockp"));
    let log_path = cfg.output_dir.join(format!("phase{n}_log.csv"));

    let (mut state, model_cfg, schema, stats, mut log) = if let Some(p) = resume {
        let (state, meta) = TrainState::resume(&Checkpoint::read(p)?)?;
        if meta.phase != phase {
            return Err(Error::Config(format!(
                "checkpoint is from phase {}, not {phase}",
                meta.phase
            )));
        }
        let log = match std::fs::read_to_string(&log_path) {
            Ok(text) => {
                let mut log = TrainLog::from_csv(&text)?;
                log.rows.retain(|r| r.step <= state.step());
                log
            }
            Err(_) => TrainLog::default(),
        };
        (state, meta.model, meta.schema, meta.stats, log)
    } else if phase == Phase::TwoStep {
        let p1 = cfg.output_dir.join("phase1.ockp");
        if !p1.is_file() {
            return Err(Error::Config(format!(
                "phase two_step requires a phase-one checkpoint at {}",
                p1.display()
            )));
        }
        let ck = Checkpoint::read(&p1)?;
        let (_, meta) = load_model(&ck)?;
        let state = TrainState::start(&tc, ck.params);
        (state, meta.model, meta.schema, meta.stats, TrainLog::default())
    } else {
        let schema = cfg.generator.schema.schema();
        let stats = compute_norm_stats(&train_data.ocean, &train_data.forcing, &statics)?;
        let (_, params) = Model::init::<f32>(&cfg.model, &schema, cfg.init_seed)?;
        let state = TrainState::start(&tc, params);
        (state, cfg.model.clone(), schema, stats, TrainLog::default())
    };
    let model = Model::bind(&model_cfg, &schema, &state.params)?;
    let graph = graph_for(&grid, &model_cfg)?;
    let gt = GraphTensors::<f32>::new(&graph);
    let weights = tc.weights(schema.c_x())?;
    let ctx = LossContext {
        model: &model,
        graph: &gt,
        stats: &stats,
        statics: &statics,
        weights: &weights,
    };
    let resolved = cfg.resolved();
    let mut save = |s: &TrainState, log: &TrainLog| -> Result<()> {
        let meta = CheckpointMeta {
            phase,
            step: s.step(),
            model: model_cfg.clone(),
            schema: schema.clone(),
            stats: stats.clone(),
            config: resolved.clone(),
        };
        write_atomic(&ckpt_path, &s.checkpoint(&meta)?.encode())?;
        write_atomic(&log_path, log.to_csv().as_bytes())
    };
    train_phase(&tc, &ctx, &train_data, &val_data, &mut state, &mut log, &mut save)?;
    let mut m = Manifest::new("train", resolved.clone()).input(config)?;
    if let Some(p) = resume {
        m = m.input(p)?;
    }
    m.output(&ckpt_path)
        .output(&log_path)
        .write(&cfg.output_dir.join(format!("phase{n}_manifest.json")))?;
    let last = log.rows.last();
    println!(
        "phase={phase} steps={} loss={} val_loss={}",
        state.step(),
        last.map_or(f64::NAN, |r| r.loss),
        log.last_val_loss().unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn forecast(
    ckpt: &Path,
    init: &Path,
    day: Option<i64>,
    kind: ForcingKind,
    horizon: usize,
    out: &Path,
) -> Result<()> {
    let ck = Checkpoint::read(ckpt)?;
    let (model, meta) = load_model(&ck)?;
    let exp: ExperimentConfig = serde_json::from_value(meta.config.clone())?;
    let dir = DatasetDir::open(init)?;
    let statics = dir.statics()?;
    let grid = OceanGrid::from_statics(&statics)?;
    let t0 = day.unwrap_or(exp.data.val_days[0] + 1);
    let x_m1 = dir.ocean(t0 - 1)?;
    let x_0 = dir.ocean(t0)?;
    let last = match kind {
        ForcingKind::Reanalysis => t0 + horizon as i64,
        _ => t0,
    };
    let analysis = (t0 - 1..=last)
        .map(|d| dir.forcing(d))
        .collect::<Result<Vec<_>>>()?;
    let forcing = match kind {
        ForcingKind::Reanalysis => Forcing::reanalysis(analysis),
        ForcingKind::Climatology => {
            let [a, b] = exp.data.train_days;
            let fields = (a..=b).map(|d| dir.forcing(d)).collect::<Result<Vec<_>>>()?;
            Forcing::climatology(analysis, build_climatology(&fields)?)
        }
        ForcingKind::Forecast => {
            let product = SyntheticForecast {
                config: dir.truth()?.config,
                grid: grid.clone(),
            };
            Forcing::forecast(analysis, Arc::new(product))
        }
    };
    let graph = graph_for(&grid, &meta.model)?;
    let gt = GraphTensors::<f32>::new(&graph);
    let run = run_forecast(
        &model, &ck.params, &gt, &meta.stats, &statics, &x_m1, &x_0, &forcing, horizon,
    )?;
    let request = json!({
        "checkpoint": ckpt.display().to_string(),
        "init": init.display().to_string(),
        "init_day": t0,
        "forcing": kind,
        "horizon": horizon,
    });
    run.write(out, json!({ "experiment": meta.config, "forecast": request }))?;
    Manifest::new("forecast", request)
        .input(ckpt)?
        .input(&dir.statics_path())?
        .input(&dir.ocean_path(t0 - 1))?
        .input(&dir.ocean_path(t0))?
        .output(out)
        .write(&out.join("provenance.json"))?;
    println!("forcing={kind} init_day={t0} leads={horizon}");
    Ok(())
}

fn read_run(pred: &Path) -> Result<RunManifest> {
    let path = pred.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Predicted fields of a run with their leads.
fn run_fields(pred: &Path) -> Result<(RunManifest, Vec<(usize, FieldSet)>)> {
    let run = read_run(pred)?;
    let fields = run
        .leads
        .iter()
        .map(|l| {
            let name = l
                .path
                .as_ref()
                .ok_or_else(|| Error::Data(format!("lead {} has no file", l.lead)))?;
            Ok((l.lead, FieldSet::read(&pred.join(name))?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((run, fields))
}

fn parse_channels(f: &FieldSet) -> Result<Vec<Channel>> {
    f.channels.iter().map(|c| c.parse()).collect()
}

pub fn eval_rmse(
    pred: &Path,
    truth: &Path,
    region: Option<&str>,
    depth_profile: bool,
    cos_lat: bool,
    out: &Path,
) -> Result<()> {
    let (run, fields) = run_fields(pred)?;
    let dir = DatasetDir::open(truth)?;
    let grid = dir.grid()?;
    let region = match region {
        Some(name) => region_by_name(name)?,
        None => None,
    };
    let region_name = region.as_ref().map_or("global".to_string(), |r| r.name.clone());
    let weighting = if cos_lat {
        AreaWeighting::CosLat
    } else {
        AreaWeighting::Uniform
    };
    let mut records = Vec::new();
    for (lead, p) in &fields {
        let t = dir.ocean(p.day)?;
        let channels = parse_channels(&t)?;
        let mut selected: Vec<usize> = (0..channels.len()).collect();
        if depth_profile {
            let mut levels: BTreeMap<&str, usize> = BTreeMap::new();
            for c in &channels {
                *levels.entry(c.variable.as_str()).or_default() += 1;
            }
            selected.retain(|&i| levels[channels[i].variable.as_str()] > 1);
            if selected.is_empty() {
                return Err(Error::Config("no variable has several depth levels".into()));
            }
            selected.sort_by(|&a, &b| {
                channels[a]
                    .variable
                    .cmp(&channels[b].variable)
                    .then(channels[a].depth.unwrap_or(0.0).total_cmp(&channels[b].depth.unwrap_or(0.0)))
            });
        }
        let values = rmse(&grid, p, &t, &selected, region.as_ref(), weighting)?;
        for (&i, v) in selected.iter().zip(values) {
            records.push(RmseRecord {
                case: run.init_date.clone(),
                lead: *lead,
                variable: channels[i].variable.clone(),
                depth: channels[i].depth,
                region: region_name.clone(),
                value: v,
            });
        }
    }
    write_text(out, &rmse_csv(&records))?;
    Manifest::new(
        "eval-rmse",
        json!({ "region": region_name, "depth_profile": depth_profile, "weighting": weighting }),
    )
    .input(pred)?
    .output(out)
    .write(&sidecar(out))?;
    println!("rows={}", records.len());
    Ok(())
}

/// Shallowest channel of `variable`.
fn surface_index(channels: &[Channel], variable: &str) -> Result<usize> {
    channels
        .iter()
        .enumerate()
        .filter(|(_, c)| c.variable == variable)
        .min_by(|a, b| a.1.depth.unwrap_or(0.0).total_cmp(&b.1.depth.unwrap_or(0.0)))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Data(format!("fields have no {variable} channel")))
}

pub fn eval_spectra(pred: &Path, truth: &Path, region: &str, no_window: bool, out: &Path) -> Result<()> {
    let (_, fields) = run_fields(pred)?;
    let dir = DatasetDir::open(truth)?;
    let grid = dir.grid()?;
    let region = region_by_name(region)?
        .ok_or_else(|| Error::Config("spectra need a bounded region".into()))?;
    let window = if no_window {
        SpectralWindow::None
    } else {
        SpectralWindow::Hann
    };
    let mut csv = String::from("region,lead,wavenumber,amplitude,source\n");
    for (lead, p) in &fields {
        let t = dir.ocean(p.day)?;
        for (source, f) in [("pred", p), ("truth", &t)] {
            let ch = parse_channels(f)?;
            let plane = |i: usize| f.channel(i).iter().map(|&x| x as f64).collect::<Vec<_>>();
            let u = plane(surface_index(&ch, "eastward_current")?);
            let v = plane(surface_index(&ch, "northward_current")?);
            let s = ke_spectrum(&grid, &u, &v, &region, window)?;
            for (k, a) in s.wavenumbers.iter().zip(&s.amplitude) {
                csv.push_str(&format!("{},{lead},{k},{a},{source}\n", region.name));
            }
        }
    }
    write_text(out, &csv)?;
    Manifest::new(
        "eval-spectra",
        json!({ "region": region.name, "window": window }),
    )
    .input(pred)?
    .output(out)
    .write(&sidecar(out))?;
    println!("leads={}", fields.len());
    Ok(())
}
