//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Value};
use uno3d::container::{
    self, load_checkpoint, load_role, read_manifest, sample_file_name, save_checkpoint, store, verify_dataset,
    write_manifest, FailedSample, FileEntry, Manifest, SampleEntry, CHECKPOINT_META, MANIFEST_FILE,
};
use uno3d::geology::{generate, GeologyConfig, GeologyField};
use uno3d::metrics::{self, gof_report, mae_per_component, GofBand, GofReport};
use uno3d::operator::UnoModel;
use uno3d::rng::derive_seed;
use uno3d::tensorcore::Tensor;
use uno3d::training::{self, split_indices, EpochRecord, Sample};
use uno3d::wavesim::{run_simulation, SimConfig};

use crate::config::PipelineConfig;
use crate::error::CliError;

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("config types serialize")
}

fn expect_kind(m: &Manifest, kind: &str, dir: &Path) -> Result<(), CliError> {
    if m.kind != kind {
        return Err(CliError::Usage(format!("{} holds a `{}` dataset, expected `{kind}`", dir.display(), m.kind)));
    }
    Ok(())
}

pub fn gen_geology(cfg: &PipelineConfig, seed: Option<u64>, count: usize, out: &Path) -> Result<(), CliError> {
    let root = seed.unwrap_or(cfg.geology.seed);
    let geo_cfg = GeologyConfig { seed: root, ..cfg.geology.clone() };
    fs::create_dir_all(out)?;
    let entries = (0..count)
        .into_par_iter()
        .map(|i| {
            let s = derive_seed(root, i as u64);
            let g = generate::<f64>(&geo_cfg, s)?;
            let file = store(out, "vs", &sample_file_name("geology", i), &g.vs.cast::<f32>())?;
            Ok(SampleEntry { index: i, seed: s, files: vec![file] })
        })
        .collect::<uno3d::Result<Vec<_>>>()?;
    let mut m = Manifest::new("geology", root);
    m.configs.insert("geology".into(), to_value(&geo_cfg));
    m.units.insert("vs".into(), "m/s".into());
    m.samples = entries;
    write_manifest(out, &m)?;
    eprintln!("wrote {count} geologies to {}", out.display());
    Ok(())
}

struct Simulated {
    entry: SampleEntry,
    times: Vec<f64>,
    sensors: (Vec<f64>, Vec<f64>),
}

pub fn simulate(cfg: &PipelineConfig, seed: Option<u64>, geology_dir: &Path, out: &Path) -> Result<(), CliError> {
    // everything that can fail cheaply happens before the output exists
    let input = read_manifest(geology_dir)?;
    expect_kind(&input, "geology", geology_dir)?;
    verify_dataset(geology_dir, &input)?;
    let geo_cfg: GeologyConfig = match input.configs.get("geology") {
        Some(v) => serde_json::from_value(v.clone())?,
        None => cfg.geology.clone(),
    };
    let sim = cfg.simulation.solver_config(&geo_cfg)?;
    sim.validate()?;
    let grid = geo_cfg.grid;
    let lateral = cfg.simulation.interpolate_to.unwrap_or([grid[0], grid[1]]);
    let domain = [geo_cfg.domain_size_m[0], geo_cfg.domain_size_m[1]];
    let root = seed.unwrap_or(input.root_seed);
    fs::create_dir_all(out)?;

    let results: Vec<Result<Simulated, FailedSample>> = input
        .samples
        .par_iter()
        .map(|s| simulate_one(geology_dir, out, s, cfg, &sim, grid, lateral, domain).map_err(|e| {
            eprintln!("sample {} failed: {e}", s.index);
            FailedSample { index: s.index, reason: e.to_string() }
        }))
        .collect();

    let mut m = Manifest::new("simulation", root);
    m.configs.insert("geology".into(), to_value(&geo_cfg));
    m.configs.insert("simulation".into(), to_value(&sim));
    m.configs.insert("source".into(), to_value(&cfg.source));
    m.units.extend([("vs", "m/s"), ("record", "m/s"), ("target", "m/s")].map(|(a, b)| (a.to_string(), b.to_string())));
    let mut extras = None;
    for r in results {
        match r {
            Ok(s) => {
                extras.get_or_insert((s.times, s.sensors));
                m.samples.push(s.entry);
            }
            Err(f) => m.failed.push(f),
        }
    }
    if let Some((times, (sx, sy))) = extras {
        m.extra.insert("times_s".into(), to_value(&times));
        m.extra.insert("sensor_x_m".into(), to_value(&sx));
        m.extra.insert("sensor_y_m".into(), to_value(&sy));
    }
    m.extra.insert("record_rate_hz".into(), to_value(&sim.record_rate_hz));
    m.extra.insert("domain_m".into(), to_value(&domain));
    m.extra.insert("target_grid".into(), to_value(&lateral));
    m.split = Some(split_indices(m.samples.len(), cfg.training.split_fraction, root));
    write_manifest(out, &m)?;
    eprintln!("simulated {} of {} geologies into {}", m.samples.len(), input.samples.len(), out.display());
    if !m.failed.is_empty() {
        let list: Vec<String> = m.failed.iter().map(|f| f.index.to_string()).collect();
        return Err(CliError::Partial(format!("{} samples failed: {}", m.failed.len(), list.join(", "))));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn simulate_one(
    geology_dir: &Path,
    out: &Path,
    s: &SampleEntry,
    cfg: &PipelineConfig,
    sim: &SimConfig,
    grid: [usize; 3],
    lateral: [usize; 2],
    domain: [f64; 2],
) -> uno3d::Result<Simulated> {
    let vs: Tensor<f64> = load_role(geology_dir, s, "vs")?;
    vs.expect_shape("geology", &grid)?;
    let field = GeologyField { vs, layers: Vec::new(), bottom_start: grid[2], seed: s.seed };
    let rec = run_simulation(&field, &cfg.source, sim)?;
    let target = rec.interpolate(lateral, domain)?;
    let src = s.file("vs").expect("checked by load_role");
    let vs_name = sample_file_name("vs", s.index);
    fs::copy(geology_dir.join(&src.path), out.join(&vs_name))?;
    let files = vec![
        FileEntry { path: vs_name, ..src.clone() },
        store(out, "record", &sample_file_name("record", s.index), &rec.data.cast::<f32>())?,
        store(out, "target", &sample_file_name("target", s.index), &target.cast::<f32>())?,
    ];
    Ok(Simulated { entry: SampleEntry { index: s.index, seed: s.seed, files }, times: rec.times_s, sensors: (rec.sensor_x_m, rec.sensor_y_m) })
}

fn load_samples(dir: &Path, m: &Manifest) -> Result<Vec<Sample<f64>>, CliError> {
    m.samples
        .par_iter()
        .map(|s| {
            let vs: Tensor<f64> = load_role(dir, s, "vs")?;
            Ok(Sample { input: vs.map(|v| v * v), target: load_role(dir, s, "target")? })
        })
        .collect::<uno3d::Result<Vec<_>>>()
        .map_err(CliError::from)
}

pub fn train(cfg: &PipelineConfig, seed: Option<u64>, data: &Path, out: &Path) -> Result<(), CliError> {
    let m = read_manifest(data)?;
    expect_kind(&m, "simulation", data)?;
    if m.samples.is_empty() {
        return Err(CliError::Usage(format!("{} holds no samples", data.display())));
    }
    let mut tcfg = cfg.training.clone();
    if let Some(s) = seed {
        tcfg.seed = s;
    }
    let schedule = cfg.model.schedule()?;
    let samples = load_samples(data, &m)?;
    let in_shape = samples[0].input.shape();
    let want = schedule.output_shape([in_shape[0], in_shape[1], in_shape[2]])?;
    if samples[0].target.shape() != want {
        return Err(CliError::Usage(format!(
            "schedule maps {in_shape:?} to {want:?} but the targets are {:?}",
            samples[0].target.shape()
        )));
    }
    let split = m.split.clone().unwrap_or_else(|| split_indices(samples.len(), tcfg.split_fraction, tcfg.seed));
    let mut model = UnoModel::<f64>::new(schedule, cfg.model.seed.unwrap_or(tcfg.seed))?;
    eprintln!(
        "training {} parameters on {} samples ({} validation)",
        model.parameter_count(),
        split.train.len(),
        split.validation.len()
    );
    fs::create_dir_all(out)?;
    let best_dir = out.join("best");
    let mut history: Vec<EpochRecord> = Vec::new();
    let meta = |r: &EpochRecord| -> BTreeMap<String, Value> {
        BTreeMap::from([("epoch".to_string(), json!(r.epoch)), ("val_mae".to_string(), json!(r.val_mae))])
    };
    let result = training::train(&mut model, &samples, &split, &tcfg, |r, model, is_best| {
        eprintln!("epoch {:4}  train {:.4e}  val {:.4e}  lr {:.2e}", r.epoch, r.train_mae, r.val_mae, r.lr);
        history.push(r.clone());
        fs::write(out.join("loss.csv"), loss_csv(&history))?;
        if is_best {
            save_checkpoint(&best_dir, model, meta(r))?;
        }
        Ok(())
    });
    let report = result?;
    save_checkpoint(&out.join("final"), &model, report.history.last().map(meta).unwrap_or_default())?;
    fs::write(out.join("loss.csv"), report.to_csv())?;
    let summary = json!({
        "best_epoch": report.best_epoch,
        "best_val_mae": report.best_val_mae,
        "parameter_count": model.parameter_count(),
        "split": split,
        "training": tcfg,
        "history": report.history,
    });
    fs::write(out.join("training.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

fn loss_csv(history: &[EpochRecord]) -> String {
    training::TrainingReport::<f64> { history: history.to_vec(), best_epoch: 0, best_val_mae: 0.0, best_params: Vec::new() }.to_csv()
}

pub enum Selection {
    All,
    Validation,
    Indices(Vec<usize>),
}

pub fn predict(checkpoint: &Path, data: &Path, selection: &Selection, out: &Path) -> Result<(), CliError> {
    let (model, _) = load_checkpoint::<f64>(checkpoint)?;
    let m = read_manifest(data)?;
    let chosen: Vec<&SampleEntry> = match selection {
        Selection::All => m.samples.iter().collect(),
        Selection::Validation => {
            let split = m.split.as_ref().ok_or_else(|| CliError::Usage("dataset has no split".into()))?;
            split.validation.iter().map(|&i| &m.samples[i]).collect()
        }
        Selection::Indices(idx) => idx
            .iter()
            .map(|&i| {
                m.samples
                    .iter()
                    .find(|s| s.index == i)
                    .ok_or_else(|| CliError::Usage(format!("no sample with index {i} in {}", data.display())))
            })
            .collect::<Result<_, _>>()?,
    };
    fs::create_dir_all(out)?;
    let entries = chosen
        .par_iter()
        .map(|s| {
            let vs: Tensor<f64> = load_role(data, s, "vs")?;
            let pred = model.forward(&vs.map(|v| v * v))?;
            let file = store(out, "prediction", &sample_file_name("prediction", s.index), &pred.cast::<f32>())?;
            Ok(SampleEntry { index: s.index, seed: s.seed, files: vec![file] })
        })
        .collect::<uno3d::Result<Vec<_>>>()?;
    let mut pm = Manifest::new("prediction", m.root_seed);
    pm.configs.insert("schedule".into(), to_value(&model.schedule));
    pm.units.insert("prediction".into(), "m/s".into());
    pm.extra = m.extra.clone();
    pm.extra.insert("checkpoint".into(), json!(checkpoint.display().to_string()));
    pm.samples = entries;
    write_manifest(out, &pm)?;
    eprintln!("wrote {} predictions to {}", pm.samples.len(), out.display());
    Ok(())
}

pub fn evaluate(cfg: &PipelineConfig, pred_dir: &Path, data: &Path, out: &Path) -> Result<(), CliError> {
    let pm = read_manifest(pred_dir)?;
    let dm = read_manifest(data)?;
    expect_kind(&dm, "simulation", data)?;
    if pm.samples.is_empty() {
        return Err(CliError::Usage(format!("{} holds no predictions", pred_dir.display())));
    }
    let rate: f64 = dm
        .extra
        .get("record_rate_hz")
        .and_then(Value::as_f64)
        .ok_or_else(|| CliError::Usage("reference dataset lacks record_rate_hz".into()))?;
    let times: Vec<f64> = dm.extra.get("times_s").map(|v| serde_json::from_value(v.clone())).transpose()?.unwrap_or_default();
    let band = GofBand { n_freqs: cfg.evaluation.n_freqs, ..GofBand::up_to(cfg.evaluation.validity_hz, rate) };

    let pairs = pm
        .samples
        .iter()
        .map(|p| {
            let r = dm
                .samples
                .iter()
                .find(|s| s.index == p.index)
                .ok_or_else(|| CliError::Usage(format!("reference has no sample {}", p.index)))?;
            Ok((p, r))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let role = |s: &SampleEntry| if s.file("prediction").is_some() { "prediction" } else { "target" };

    let evaluated = pairs
        .iter()
        .map(|(p, r)| {
            let pred: Tensor<f64> = load_role(pred_dir, p, role(p))?;
            let reference: Tensor<f64> = load_role(data, r, "target")?;
            let mae = mae_per_component(&pred, &reference)?;
            let gof = gof_report(&pred, &reference, rate, &band)?;
            Ok((p.index, mae, gof, pred, reference))
        })
        .collect::<uno3d::Result<Vec<_>>>()?;

    fs::create_dir_all(out)?;
    let rows: Vec<(String, [f64; 3])> = evaluated.iter().map(|(i, m, ..)| (i.to_string(), *m)).collect();
    fs::write(out.join("mae.csv"), metrics::mae_csv(&rows))?;

    let mut gof_csv = String::from("sample,");
    gof_csv.push_str(&GofReport::to_csv(&evaluated[0].2).lines().next().unwrap_or_default().to_string());
    gof_csv.push('\n');
    let (mut env_ok, mut phase_ok, mut scored, mut silent) = (0usize, 0usize, 0usize, 0usize);
    for (i, _, g, ..) in &evaluated {
        for line in g.to_csv().lines().skip(1) {
            gof_csv.push_str(&format!("{i},{line}\n"));
        }
        let s: Vec<(f64, f64)> = g.envelope.iter().zip(&g.phase).filter_map(|(e, p)| Some(((*e)?, (*p)?))).collect();
        env_ok += s.iter().filter(|x| x.0 > 6.0).count();
        phase_ok += s.iter().filter(|x| x.1 > 8.0).count();
        scored += s.len();
        silent += g.silent_reference;
    }
    fs::write(out.join("gof.csv"), gof_csv)?;
    let share = |k: usize| if scored == 0 { Value::Null } else { json!(k as f64 / scored as f64) };
    let reports: Vec<Value> = evaluated.iter().map(|(i, _, g, ..)| json!({"sample": i, "report": g})).collect();
    let gof_json = json!({
        "band": band,
        "formula": metrics::GOF_FORMULA,
        "scored_points": scored,
        "silent_reference_points": silent,
        "envelope_above_6": share(env_ok),
        "phase_above_8": share(phase_ok),
        "samples": reports,
    });
    fs::write(out.join("gof.json"), serde_json::to_string_pretty(&gof_json)?)?;

    let (first, _, _, pred, reference) = &evaluated[0];
    let shape = reference.shape();
    let sensor = cfg.evaluation.sensor.unwrap_or([shape[1] / 2, shape[2] / 2]);
    if sensor[0] >= shape[1] || sensor[1] >= shape[2] {
        return Err(CliError::Usage(format!("[evaluation] sensor {sensor:?} outside the {}x{} grid", shape[1], shape[2])));
    }
    let times = if times.len() == shape[3] { times } else { (0..shape[3]).map(|k| k as f64 / rate).collect() };
    let sensor = (sensor[0], sensor[1]);
    fs::write(out.join("traces.csv"), metrics::trace_csv(pred, reference, &times, sensor)?)?;
    fs::write(out.join("spectra.csv"), metrics::spectra_csv(pred, reference, rate, sensor)?)?;
    fs::write(out.join("pgv.csv"), pgv_csv(pred, reference)?)?;

    let n = evaluated.len() as f64;
    let mean: Vec<f64> = (0..3).map(|c| evaluated.iter().map(|e| e.1[c]).sum::<f64>() / n).collect();
    let summary = json!({
        "samples": evaluated.len(),
        "mean_mae": {"E": mean[0], "N": mean[1], "Z": mean[2]},
        "envelope_above_6": share(env_ok),
        "phase_above_8": share(phase_ok),
        "trace_sample": first,
        "trace_sensor": [sensor.0, sensor.1],
    });
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    eprintln!(
        "evaluated {} samples: mean MAE E {:.3e} N {:.3e} Z {:.3e}",
        evaluated.len(),
        mean[0],
        mean[1],
        mean[2]
    );
    Ok(())
}

fn pgv_csv(pred: &Tensor<f64>, reference: &Tensor<f64>) -> uno3d::Result<String> {
    let (p, r) = (metrics::pgv(pred)?, metrics::pgv(reference)?);
    let s = r.shape();
    let mut out = String::from("component,ix,iy,pgv_pred,pgv_ref\n");
    for c in 0..3 {
        for i in 0..s[1] {
            for j in 0..s[2] {
                out.push_str(&format!(
                    "{},{i},{j},{:e},{:e}\n",
                    metrics::COMPONENTS[c],
                    p.get(&[c, i, j]),
                    r.get(&[c, i, j])
                ));
            }
        }
    }
    Ok(out)
}

pub fn info(path: &Path) -> Result<(), CliError> {
    let summary = if path.join(MANIFEST_FILE).exists() {
        let m = read_manifest(path)?;
        verify_dataset(path, &m)?;
        json!({
            "kind": m.kind,
            "format_version": m.format_version,
            "root_seed": m.root_seed,
            "samples": m.samples.len(),
            "failed": m.failed,
            "train": m.split.as_ref().map(|s| s.train.len()),
            "validation": m.split.as_ref().map(|s| s.validation.len()),
            "files": m.samples.first().map(|s| s.files.clone()),
            "units": m.units,
        })
    } else if path.join(CHECKPOINT_META).exists() {
        let (model, meta) = load_checkpoint::<f64>(path)?;
        json!({
            "kind": "checkpoint",
            "parameter_count": model.parameter_count(),
            "reference_input": meta.schedule.reference_input,
            "output_at_reference": meta.schedule.output_shape(meta.schedule.reference_input)?,
            "norm": meta.norm,
            "seed": meta.seed,
            "extra": meta.extra,
        })
    } else if path.is_file() {
        let h = container::peek_header(path)?;
        json!({"kind": "tensor", "dtype": h.dtype, "shape": h.shape})
    } else {
        return Err(CliError::Usage(format!("{} is not a dataset, checkpoint or tensor file", path.display())));
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
