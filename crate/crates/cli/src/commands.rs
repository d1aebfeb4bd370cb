use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::Serialize;

use seqdetect::calibration::{omega0_lambert, theta_from_pow, OMEGA0_FLOOR};
use seqdetect::detector::{group_frames, run_offline, write_events_jsonl, write_trace_csv};
use seqdetect::feature::{read_dataset, read_feature_csv};
use seqdetect::sim::{default_max_steps, estimate_false_alarm_period, write_simulation_csv, SimConfig};
use seqdetect::specfun::volume_constant;
use seqdetect::{calibrate, DetectorConfig, DetectorModel, EmptyFramePolicy, FeatureWeights, PhiConvention, TrainParams};

use crate::config::Settings;
use crate::output::{emit, sha256_hex, to_json_line, to_json_pretty, OutputPlan, Provenance, Report};
use crate::CliError;

const DEFAULT_WEIGHTS: [f64; 3] = [1.0, 0.4, 0.9];

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn weights(settings: &Settings) -> Result<[f64; 3], CliError> {
    let w = settings.list("weights", &DEFAULT_WEIGHTS)?;
    let arr: [f64; 3] = w
        .try_into()
        .map_err(|_| CliError::Usage("--weights takes three comma-separated values (motion,location,appearance)".into()))?;
    FeatureWeights::new(arr[0], arr[1], arr[2]).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(arr)
}

fn feature_weights(w: [f64; 3]) -> FeatureWeights {
    FeatureWeights { motion: w[0], location: w[1], appearance: w[2] }
}

fn load_model(path: &Path) -> Result<(DetectorModel, String), CliError> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::Core(seqdetect::Error::Data(format!("{} is not UTF-8", path.display()))))?;
    Ok((DetectorModel::from_json(&text)?, sha256_hex(&bytes)))
}

fn check_rate(far: f64) -> Result<f64, CliError> {
    if far > 0.0 && far < 1.0 {
        Ok(far)
    } else {
        Err(CliError::Usage(format!("--far must lie strictly between 0 and 1, got {far}")))
    }
}

#[derive(Debug, Serialize)]
struct TrainConfig {
    input: PathBuf,
    output: PathBuf,
    summary: Option<PathBuf>,
    k: usize,
    alpha: f64,
    fraction: f64,
    seed: u64,
    phi_convention: PhiConvention,
    weights: [f64; 3],
    force: bool,
}

pub fn train(settings: &Settings) -> Result<(), CliError> {
    let cfg = TrainConfig {
        input: settings.require_path("input")?,
        output: settings.require_path("output")?,
        summary: settings.path("summary"),
        k: settings.get("k", 1)?,
        alpha: settings.get("alpha", 0.05)?,
        fraction: settings.get("fraction", 0.5)?,
        seed: settings.require("seed")?,
        phi_convention: settings.get("phi_convention", PhiConvention::default())?,
        weights: weights(settings)?,
        force: settings.flag("force")?,
    };
    let mut plan = OutputPlan::new(cfg.force);
    plan.input(&cfg.input);
    plan.check(&cfg.output)?;
    if let Some(s) = &cfg.summary {
        plan.check(s)?;
    }
    let dataset = read_dataset(open(&cfg.input)?, &feature_weights(cfg.weights))?;
    let params = TrainParams {
        k: cfg.k,
        alpha: cfg.alpha,
        partition_fraction: cfg.fraction,
        partition_seed: cfg.seed,
        phi_convention: cfg.phi_convention,
    };
    let (model, summary) = seqdetect::train(&dataset, &params)?;
    let model_text = model.to_json()?;
    let hash = sha256_hex(model_text.as_bytes());
    plan.write(&cfg.output, model_text.as_bytes())?;
    log::info!("trained on {} vectors: d_alpha = {}, phi = {}", summary.total_count, summary.d_alpha, summary.phi);
    let summary_path = cfg.summary.clone();
    let provenance = Provenance::new("train", cfg, Some(hash));
    let report = to_json_pretty(&Report { body: &summary, provenance: &provenance })?;
    emit(&plan, summary_path.as_deref(), report.as_bytes())
}

#[derive(Debug, Serialize)]
struct CalibrateConfig {
    model: PathBuf,
    output: Option<PathBuf>,
    far: f64,
    phi_convention: PhiConvention,
    force: bool,
}

pub fn calibrate_cmd(settings: &Settings) -> Result<(), CliError> {
    let model_path = settings.require_path("model")?;
    let far = check_rate(settings.get("far", 0.01)?)?;
    let output = settings.path("output");
    let force = settings.flag("force")?;
    let mut plan = OutputPlan::new(force);
    plan.input(&model_path);
    if let Some(o) = &output {
        plan.check(o)?;
    }
    let (model, hash) = load_model(&model_path)?;
    let calibration = calibrate(&model, far)?;
    let cfg = CalibrateConfig { model: model_path, output: output.clone(), far, phi_convention: model.phi_convention, force };
    let provenance = Provenance::new("calibrate", cfg, Some(hash));
    let report = to_json_pretty(&Report { body: &calibration, provenance: &provenance })?;
    emit(&plan, output.as_deref(), report.as_bytes())
}

#[derive(Debug, Serialize)]
struct DetectConfig {
    input: PathBuf,
    model: PathBuf,
    output: Option<PathBuf>,
    trace: Option<PathBuf>,
    calibration: Option<PathBuf>,
    far: f64,
    threshold: Option<f64>,
    n_end: u32,
    empty_frame_policy: String,
    weights: [f64; 3],
    force: bool,
}

#[derive(Debug, Serialize)]
struct ThresholdInfo {
    source: &'static str,
    h: f64,
    omega0: Option<f64>,
    far_bound: Option<f64>,
}

#[derive(Debug, Serialize)]
struct DetectHeader {
    threshold: ThresholdInfo,
    frames: usize,
    events: usize,
}

fn threshold_from_file(path: &Path) -> Result<ThresholdInfo, CliError> {
    let bytes = read_bytes(path)?;
    let value: serde_json::Value = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Core(seqdetect::Error::Data(format!("{}: {e}", path.display()))))?;
    let h = value
        .get("h")
        .and_then(serde_json::Value::as_f64)
        .ok_or_else(|| CliError::Core(seqdetect::Error::Data(format!("{}: no numeric h field", path.display()))))?;
    Ok(ThresholdInfo {
        source: "calibration",
        h,
        omega0: value.get("omega0").and_then(serde_json::Value::as_f64),
        far_bound: value.get("far_bound").and_then(serde_json::Value::as_f64),
    })
}

pub fn detect(settings: &Settings) -> Result<(), CliError> {
    let cfg = DetectConfig {
        input: settings.require_path("input")?,
        model: settings.require_path("model")?,
        output: settings.path("output"),
        trace: settings.path("trace"),
        calibration: settings.path("calibration"),
        far: check_rate(settings.get("far", 0.01)?)?,
        threshold: settings.optional("threshold")?,
        n_end: settings.get("n_end", 5)?,
        empty_frame_policy: settings.get("empty_frame_policy", EmptyFramePolicy::default())?.to_string(),
        weights: weights(settings)?,
        force: settings.flag("force")?,
    };
    let mut plan = OutputPlan::new(cfg.force);
    plan.input(&cfg.input);
    plan.input(&cfg.model);
    if let Some(c) = &cfg.calibration {
        plan.input(c);
    }
    for p in [&cfg.output, &cfg.trace].into_iter().flatten() {
        plan.check(p)?;
    }
    let stream = open(&cfg.input)?;
    let (model, hash) = load_model(&cfg.model)?;
    let threshold = if let Some(h) = cfg.threshold {
        ThresholdInfo { source: "threshold", h, omega0: None, far_bound: None }
    } else if let Some(path) = &cfg.calibration {
        threshold_from_file(path)?
    } else {
        let c = calibrate(&model, cfg.far)?;
        ThresholdInfo { source: "far", h: c.h, omega0: Some(c.omega0), far_bound: Some(c.far_bound) }
    };
    let policy: EmptyFramePolicy = cfg.empty_frame_policy.parse()?;
    let detector = DetectorConfig::new(threshold.h, cfg.n_end)
        .map_err(|e| CliError::Usage(e.to_string()))?
        .with_policy(policy);
    let (layout, rows) = read_feature_csv(stream, &feature_weights(cfg.weights))?;
    if layout.dim() != model.m {
        return Err(seqdetect::Error::Data(format!(
            "stream has {} feature columns, model expects {}",
            layout.dim(),
            model.m
        ))
        .into());
    }
    let frames = group_frames(rows)?;
    let run = run_offline(&frames, &model, &detector)?;
    log::info!("{} frames, {} events", frames.len(), run.events.len());

    let header = DetectHeader { threshold, frames: frames.len(), events: run.events.len() };
    let output = cfg.output.clone();
    let trace = cfg.trace.clone();
    let provenance = Provenance::new("detect", cfg, Some(hash));
    let mut events = to_json_line(&Report { body: &header, provenance: &provenance })?.into_bytes();
    events.push(b'\n');
    write_events_jsonl(&mut events, &run.events)?;
    if let Some(path) = &trace {
        let mut bytes = format!("# {}\n", to_json_line(&provenance)?).into_bytes();
        write_trace_csv(&mut bytes, &run.trace)?;
        plan.write(path, &bytes)?;
    }
    emit(&plan, output.as_deref(), &events)
}

#[derive(Debug, Serialize)]
struct SimulateConfig {
    output: Option<PathBuf>,
    model: Option<PathBuf>,
    seed: u64,
    dim: u32,
    d_alpha_pow: f64,
    phi: f64,
    periods: Vec<f64>,
    runs: usize,
    max_steps: Option<u64>,
    omega0: f64,
    force: bool,
}

pub fn simulate(settings: &Settings) -> Result<(), CliError> {
    let seed: u64 = settings.require("seed")?;
    let output = settings.path("output");
    let model_path = settings.path("model");
    let force = settings.flag("force")?;
    let mut plan = OutputPlan::new(force);
    if let Some(m) = &model_path {
        plan.input(m);
    }
    if let Some(o) = &output {
        plan.check(o)?;
    }
    let (dim, c, phi, hash) = match &model_path {
        Some(path) => {
            let (model, hash) = load_model(path)?;
            let dim = u32::try_from(model.m).map_err(|_| CliError::Usage("model dimension too large".into()))?;
            (dim, model.d_alpha_pow(), model.phi, Some(hash))
        }
        None => (settings.get("dim", 2u32)?, settings.get("d_alpha_pow", 1e-3)?, settings.get("phi", 2.5)?, None),
    };
    let periods = settings.list("periods", &[1e2, 1e3])?;
    if let Some(p) = periods.iter().find(|p| !(**p > 1.0) || !p.is_finite()) {
        return Err(CliError::Usage(format!("bound periods must be finite and above 1, got {p}")));
    }
    let runs: usize = settings.get("runs", 1000)?;
    let max_steps: Option<u64> = settings.optional("max_steps")?;
    let v = volume_constant(dim).map_err(|e| CliError::Usage(e.to_string()))?;
    let theta = theta_from_pow(v, c).map_err(|e| CliError::Usage(e.to_string()))?;
    let omega0 = omega0_lambert(v, theta, phi)?;
    if omega0 <= OMEGA0_FLOOR {
        return Err(seqdetect::Error::Degenerate(format!("omega0 = {omega0:e} is below {OMEGA0_FLOOR:e}")).into());
    }

    let mut rows = Vec::with_capacity(periods.len());
    for (i, &period) in periods.iter().enumerate() {
        let sim = SimConfig {
            m: dim,
            intensity: 1.0,
            n_samples: runs,
            seed: seed.wrapping_add((i as u64) << 32),
            h: period.ln() / omega0,
            omega0,
            max_steps: max_steps.unwrap_or_else(|| default_max_steps(period)),
        };
        let est = estimate_false_alarm_period(&sim, c, Some(phi))?;
        log::info!("bound {period}: mean period {} ± {}", est.mean_period, est.std_error);
        rows.push(est);
    }

    let cfg = SimulateConfig {
        output: output.clone(),
        model: model_path,
        seed,
        dim,
        d_alpha_pow: c,
        phi,
        periods,
        runs,
        max_steps,
        omega0,
        force,
    };
    let provenance = Provenance::new("simulate", cfg, hash);
    let mut bytes = format!("# {}\n", to_json_line(&provenance)?).into_bytes();
    write_simulation_csv(&mut bytes, &rows)?;
    emit(&plan, output.as_deref(), &bytes)
}
