//! Subcommand implementations.

use crate::config::{ensure_out_dir, write_atomic, FileConfig, Manifest, Params};
use crate::{CliError, GlobalArgs};
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Deserialize;
use std::path::{Path, PathBuf};

use veli_core::baselines::{kalman_denoise, knn_impute, pca_denoise, KalmanConfig, PcaConfig};
use veli_core::eval::{
    block_average, correct_location, histogram, mae, run_loss_weight_sweep, run_na_injection,
    run_sensor_subset, seed_repeat, BinRule, EvalReport, TrainDriver, WeightScales,
};
use veli_core::model::{
    fine_tune, infer as model_infer, infer_sampled, snapshots_from_rows, train as model_train,
    LossWeights, ModelCheckpoint, TrainConfig, VeliConfig, VeliModel,
};
use veli_core::pipeline::{
    build_location, dbscan_scrub, eligibility_filter, range_validate, read_location_csv,
    read_raw_series_csv, resample_hourly, split_train_rows, write_location_csv, CorrectedColumns,
    DbscanParams, HourStamp, LocationDataset, MeasurementKind, Scaler, DBSCAN_BATCH_HOURS,
    DEFAULT_MIN_HOURS,
};
use veli_core::synth::{gen_base, inject_noise, BaseSignal, BaseSignalSpec, NoiseConfig};

fn out_dir(global: &GlobalArgs) -> Result<PathBuf, CliError> {
    let dir = global
        .out
        .clone()
        .ok_or_else(|| CliError::config("--out is required"))?;
    ensure_out_dir(&dir)?;
    Ok(dir)
}

fn resolve(global: &GlobalArgs) -> Result<(Params, u64), CliError> {
    let mut params = Params::default();
    let mut seed = 0u64;
    if let Some(path) = &global.config {
        let file = FileConfig::load(path)?;
        file.apply(&mut params);
        if let Some(s) = file.seed {
            seed = s;
        }
    }
    if let Some(s) = global.seed {
        seed = s;
    }
    Ok((params, seed))
}

fn validate_params(params: &Params) -> Result<(), CliError> {
    if params.batch == 0 {
        return Err(CliError::config("batch must be at least 1"));
    }
    if !(params.learning_rate > 0.0) {
        return Err(CliError::config("learning_rate must be positive"));
    }
    if params.beta_y <= 0.0 {
        return Err(CliError::config(
            "beta_y must be positive: a zero beta_y removes the observation prior and the loss diverges",
        ));
    }
    if params.alpha <= 0.0 || params.beta_z <= 0.0 {
        return Err(CliError::config("alpha and beta_z must be positive"));
    }
    if !(params.train_fraction > 0.0 && params.train_fraction <= 1.0) {
        return Err(CliError::config("train_fraction must be in (0, 1]"));
    }
    Ok(())
}

fn load_location(path: &Path) -> Result<(LocationDataset, Option<CorrectedColumns>), CliError> {
    Ok(read_location_csv(path)?)
}

fn verbose(global: &GlobalArgs, msg: impl AsRef<str>) {
    if global.verbose {
        eprintln!("[veli] {}", msg.as_ref());
    }
}

// ---------------------------------------------------------------- preprocess

/// Location manifest listing raw per-device files.
#[derive(Debug, Deserialize)]
struct LocationManifest {
    location: LocationBlock,
}

#[derive(Debug, Deserialize)]
struct LocationBlock {
    id: String,
    #[serde(default = "default_kind")]
    kind: String,
    sensors: Vec<String>,
    #[serde(default)]
    refs: Vec<String>,
}

fn default_kind() -> String {
    "pm25".into()
}

#[derive(Args, Clone)]
pub struct PreprocessArgs {
    /// TOML manifest listing raw per-device CSVs (timestamp,value).
    #[arg(long, conflicts_with = "data")]
    manifest: Option<PathBuf>,
    /// An already-hourly location CSV to validate/scrub/filter in place.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Minimum observed hours per surviving sensor.
    #[arg(long, default_value_t = DEFAULT_MIN_HOURS)]
    min_hours: usize,
    /// Minimum sensors that must survive eligibility.
    #[arg(long, default_value_t = 3)]
    min_sensors: usize,
    /// Skip the density-based outlier scrub.
    #[arg(long)]
    no_scrub: bool,
    /// Skip the eligibility filter (keep every sensor).
    #[arg(long)]
    no_eligibility: bool,
}

fn parse_kind(kind: &str) -> Result<MeasurementKind, CliError> {
    match kind {
        "pm25" => Ok(MeasurementKind::Pm25),
        "temperature" => Ok(MeasurementKind::TemperatureC),
        other => Err(CliError::config(format!(
            "unknown measurement kind {other:?}; expected pm25|temperature"
        ))),
    }
}

pub fn preprocess(global: &GlobalArgs, args: &PreprocessArgs) -> Result<(), CliError> {
    let dir = out_dir(global)?;
    let (params, seed) = resolve(global)?;
    let mut kind = MeasurementKind::Pm25;
    if let Some(manifest_path) = &args.manifest {
        let text = std::fs::read_to_string(manifest_path)
            .map_err(|e| CliError::data(format!("cannot read {}: {e}", manifest_path.display())))?;
        let manifest: LocationManifest = toml::from_str(&text)
            .map_err(|e| CliError::config(format!("location manifest: {e}")))?;
        kind = parse_kind(&manifest.location.kind)?;
    }
    let stages = |series: &veli_core::pipeline::HourlySeries| {
        let validated = range_validate(series, kind.default_bounds());
        if args.no_scrub {
            validated
        } else {
            dbscan_scrub(&validated, DbscanParams::default(), DBSCAN_BATCH_HOURS)
        }
    };

    let (location, inputs) = if let Some(manifest_path) = &args.manifest {
        let text = std::fs::read_to_string(manifest_path)
            .map_err(|e| CliError::data(format!("cannot read {}: {e}", manifest_path.display())))?;
        let manifest: LocationManifest = toml::from_str(&text)
            .map_err(|e| CliError::config(format!("location manifest: {e}")))?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let mut sensors = Vec::new();
        let mut inputs = vec![manifest_path.clone()];
        for file in &manifest.location.sensors {
            let path = base.join(file);
            let raw = read_raw_series_csv(&path, file.trim_end_matches(".csv"))?;
            sensors.push(stages(&resample_hourly(&raw)));
            inputs.push(path);
        }
        // Reference stations are validated but never scrubbed: they are the
        // trusted instruments.
        let mut refs = Vec::new();
        for file in &manifest.location.refs {
            let path = base.join(file);
            let raw = read_raw_series_csv(&path, file.trim_end_matches(".csv"))?;
            refs.push(range_validate(&resample_hourly(&raw), kind.default_bounds()));
            inputs.push(path);
        }
        verbose(global, format!("location {}", manifest.location.id));
        (build_location(&sensors, &refs)?, inputs)
    } else if let Some(data_path) = &args.data {
        let (loc, _) = load_location(data_path)?;
        let sensors: Vec<_> = loc.sensors.iter().map(&stages).collect();
        let refs: Vec<_> = loc.reference.iter().cloned().collect();
        (build_location(&sensors, &refs)?, vec![data_path.clone()])
    } else {
        return Err(CliError::config("preprocess needs --manifest or --data"));
    };

    let location = if args.no_eligibility {
        location
    } else {
        eligibility_filter(&location, args.min_hours, args.min_sensors)?
    };

    let out_csv = dir.join("location.csv");
    write_location_via_temp(&out_csv, &location, None)?;
    Manifest::new("preprocess", seed, params, None, inputs, vec![out_csv])?.write(&dir)?;
    Ok(())
}

fn write_location_via_temp(
    path: &Path,
    location: &LocationDataset,
    corrected: Option<&CorrectedColumns>,
) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    write_location_csv(&tmp, location, corrected)?;
    std::fs::rename(&tmp, path)
        .map_err(|e| CliError::data(format!("cannot rename into {}: {e}", path.display())))?;
    Ok(())
}

// --------------------------------------------------------------------- synth

#[derive(Args, Clone)]
pub struct SynthArgs {
    /// Base signal: sinusoid | sawtooth | exponential | reference.
    #[arg(long, default_value = "sinusoid")]
    base: String,
    /// Clean series CSV (timestamp,value) for --base reference.
    #[arg(long)]
    reference_csv: Option<PathBuf>,
    /// Noise preset: fig9 | fig10 | clean.
    #[arg(long, default_value = "fig9")]
    noise: String,
    #[arg(long, default_value_t = 4000)]
    hours: usize,
    #[arg(long, default_value_t = 10)]
    channels: usize,
    /// Base signal offset (sinusoid/sawtooth).
    #[arg(long, default_value_t = 2.0)]
    offset: f64,
    /// Base signal maximum (sinusoid/sawtooth).
    #[arg(long, default_value_t = 30.0)]
    max_value: f64,
    /// Base signal period in hours (sinusoid/sawtooth).
    #[arg(long, default_value_t = 48.0)]
    period: f64,
    /// Exponential rate (mean is 1/rate).
    #[arg(long, default_value_t = 1.0 / 12.0)]
    rate: f64,
}

pub fn synth(global: &GlobalArgs, args: &SynthArgs) -> Result<(), CliError> {
    let dir = out_dir(global)?;
    let (params, seed) = resolve(global)?;
    let signal = match args.base.as_str() {
        "sinusoid" => BaseSignal::Sinusoid {
            offset: args.offset,
            max_value: args.max_value,
            period_hours: args.period,
        },
        "sawtooth" => BaseSignal::Sawtooth {
            offset: args.offset,
            max_value: args.max_value,
            period_hours: args.period,
        },
        "exponential" => BaseSignal::Exponential { rate: args.rate },
        "reference" => {
            let path = args.reference_csv.as_ref().ok_or_else(|| {
                CliError::config("--base reference requires --reference-csv")
            })?;
            let raw = read_raw_series_csv(path, "reference")?;
            let hourly = resample_hourly(&raw);
            let values: Vec<f64> = hourly.values.iter().filter_map(|v| *v).collect();
            BaseSignal::ReferenceFile { values }
        }
        other => {
            return Err(CliError::config(format!(
                "unknown base {other:?}; expected sinusoid|sawtooth|exponential|reference"
            )))
        }
    };
    let noise = match args.noise.as_str() {
        "fig9" => NoiseConfig::fig9(),
        "fig10" => NoiseConfig::fig10(),
        "clean" => NoiseConfig::clean(),
        other => {
            return Err(CliError::config(format!(
                "unknown noise preset {other:?}; expected fig9|fig10|clean"
            )))
        }
    };

    let base = gen_base(
        &BaseSignalSpec {
            signal,
            length: args.hours,
        },
        seed,
    )?;
    let synthetic = inject_noise(&base, &noise, args.channels, seed)?;
    let location = synthetic.to_location(HourStamp(0));

    let out_csv = dir.join("data.csv");
    write_location_via_temp(&out_csv, &location, None)?;
    Manifest::new("synth", seed, params, Some(noise), Vec::new(), vec![out_csv])?.write(&dir)?;
    Ok(())
}

// --------------------------------------------------------------------- train

#[derive(Args, Clone)]
pub struct TrainArgs {
    /// Location CSV to train on.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long, value_name = "LR")]
    learning_rate: Option<f64>,
    #[arg(long)]
    latent: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    k_samples: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta_z: Option<f64>,
    #[arg(long)]
    beta_y: Option<f64>,
    /// Chronological fraction of rows used for fitting.
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Minimum observed channels for a row to train.
    #[arg(long)]
    min_observed: Option<usize>,
}

fn apply_train_flags(params: &mut Params, args: &TrainArgs) {
    macro_rules! take {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field { params.$field = v; })*
        };
    }
    take!(
        epochs,
        batch,
        learning_rate,
        latent,
        hidden,
        k_samples,
        alpha,
        beta_z,
        beta_y,
        train_fraction,
        min_observed
    );
}

struct Prepared {
    model: VeliModel,
    snapshots: Vec<veli_core::model::SensorSnapshot>,
}

fn prepare_training(
    location: &LocationDataset,
    params: &Params,
    seed: u64,
) -> Result<Prepared, CliError> {
    let d = location.sensor_count();
    let rows = location.rows();
    let (train_rows, _) = split_train_rows(location.hours, params.train_fraction);
    let fit_rows: Vec<Vec<Option<f64>>> = train_rows.iter().map(|&t| rows[t].clone()).collect();
    let scaler = Scaler::fit(&fit_rows, d)?;
    let min_obs = params.min_observed.max(1);
    let admissible: Vec<Vec<Option<f64>>> = fit_rows
        .into_iter()
        .filter(|row| row.iter().filter(|v| v.is_some()).count() >= min_obs)
        .collect();
    let snapshots = snapshots_from_rows(&scaler, &admissible, location.start_hour);
    if snapshots.is_empty() {
        return Err(CliError::data(
            "no admissible training rows after masking/filtering",
        ));
    }
    let mut config = VeliConfig::new(d);
    config.latent = params.latent.min(d).max(1);
    config.hidden = params.hidden;
    config.k_samples = params.k_samples;
    config.weights = LossWeights {
        alpha: params.alpha,
        beta_z: params.beta_z,
        beta_y: params.beta_y,
    };
    let model = VeliModel::new(config, scaler, seed)?;
    Ok(Prepared { model, snapshots })
}

fn write_history(
    path: &Path,
    history: &[veli_core::model::LossBreakdown],
) -> Result<(), CliError> {
    let mut text = String::from("epoch,kl_z,kl_y,recon_nll,total\n");
    for (e, h) in history.iter().enumerate() {
        text.push_str(&format!(
            "{e},{},{},{},{}\n",
            h.kl_z, h.kl_y, h.recon_nll, h.total
        ));
    }
    write_atomic(path, text.as_bytes())
}

pub fn train(global: &GlobalArgs, args: &TrainArgs) -> Result<(), CliError> {
    let dir = out_dir(global)?;
    let (mut params, seed) = resolve(global)?;
    apply_train_flags(&mut params, args);
    validate_params(&params)?;
    let (location, _) = load_location(&args.data)?;
    let Prepared {
        mut model,
        snapshots,
    } = prepare_training(&location, &params, seed)?;
    verbose(
        global,
        format!(
            "training on {} snapshots ({} sensors)",
            snapshots.len(),
            location.sensor_count()
        ),
    );
    let tc = TrainConfig {
        epochs: params.epochs,
        batch_size: params.batch,
        learning_rate: params.learning_rate,
        seed,
    };
    let history = model_train(&mut model, &snapshots, &tc)?;

    let manifest = Manifest::new(
        "train",
        seed,
        params,
        None,
        vec![args.data.clone()],
        vec![dir.join("checkpoint.json"), dir.join("history.csv")],
    )?;
    let ckpt = ModelCheckpoint::from_model(&model, seed, manifest.config_hash());
    let json = ckpt
        .to_json()
        .map_err(|e| CliError::data(format!("cannot serialize checkpoint: {e}")))?;
    write_atomic(&dir.join("checkpoint.json"), json.as_bytes())?;
    write_history(&dir.join("history.csv"), &history)?;
    manifest.write(&dir)?;
    Ok(())
}

// ------------------------------------------------------------------ finetune

#[derive(Args, Clone)]
pub struct FinetuneArgs {
    /// Location CSV from the shifted distribution.
    #[arg(long)]
    data: PathBuf,
    /// Trained checkpoint to adapt.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_name = "LR")]
    learning_rate: Option<f64>,
    #[arg(long)]
    min_observed: Option<usize>,
}

pub fn finetune(global: &GlobalArgs, args: &FinetuneArgs) -> Result<(), CliError> {
    let dir = out_dir(global)?;
    let (mut params, seed) = resolve(global)?;
    if let Some(e) = args.epochs {
        params.finetune_epochs = e;
    }
    if let Some(lr) = args.learning_rate {
        params.learning_rate = lr;
    }
    if let Some(m) = args.min_observed {
        params.min_observed = m;
    }
    validate_params(&params)?;

    let mut model = ModelCheckpoint::load(&args.checkpoint)?.into_model()?;
    let (location, _) = load_location(&args.data)?;
    if location.sensor_count() != model.sensors() {
        return Err(CliError::data(format!(
            "checkpoint expects {} sensors, data has {}",
            model.sensors(),
            location.sensor_count()
        )));
    }
    // The scaler stays as trained: the frozen decoder is tied to it.
    let min_obs = params.min_observed.max(1);
    let rows: Vec<Vec<Option<f64>>> = location
        .rows()
        .into_iter()
        .filter(|row| row.iter().filter(|v| v.is_some()).count() >= min_obs)
        .collect();
    let snapshots = snapshots_from_rows(&model.scaler, &rows, location.start_hour);
    if snapshots.is_empty() {
        return Err(CliError::data("no admissible fine-tuning rows"));
    }
    let tc = TrainConfig {
        epochs: params.finetune_epochs,
        batch_size: params.batch,
        learning_rate: params.learning_rate,
        seed,
    };
    let history = fine_tune(&mut model, &snapshots, &tc)?;

    let manifest = Manifest::new(
        "finetune",
        seed,
        params,
        None,
        vec![args.data.clone(), args.checkpoint.clone()],
        vec![dir.join("checkpoint.json"), dir.join("history.csv")],
    )?;
    let ckpt = ModelCheckpoint::from_model(&model, seed, manifest.config_hash());
    let json = ckpt
        .to_json()
        .map_err(|e| CliError::data(format!("cannot serialize checkpoint: {e}")))?;
    write_atomic(&dir.join("checkpoint.json"), json.as_bytes())?;
    write_history(&dir.join("history.csv"), &history)?;
    manifest.write(&dir)?;
    Ok(())
}

// --------------------------------------------------------------------- infer

#[derive(Args, Clone)]
pub struct InferArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Sample z from the encoder posterior instead of taking its mean
    /// (credible-interval studies); uses --seed.
    #[arg(long)]
    sample_z: bool,
}

pub fn infer(global: &GlobalArgs, args: &InferArgs) -> Result<(), CliError> {
    let dir = out_dir(global)?;
    let (params, seed) = resolve(global)?;
    let model = ModelCheckpoint::load(&args.checkpoint)?.into_model()?;
    let (location, _) = load_location(&args.data)?;
    if location.sensor_count() != model.sensors() {
        return Err(CliError::data(format!(
            "checkpoint expects {} sensors, data has {}",
            model.sensors(),
            location.sensor_count()
        )));
    }
    let d = location.sensor_count();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut corrected = CorrectedColumns::default();
    for t in 0..location.hours {
        let row = location.row(t);
        let (x, mask) = model.scaler.standardize_row(&row);
        let snap = veli_core::model::SensorSnapshot::new(
            x,
            mask,
            HourStamp(location.start_hour.0 + t as i64),
        )?;
        let reading = if args.sample_z {
            infer_sampled(&model, &snap, &mut rng)?
        } else {
            model_infer(&model, &snap)?
        };
        corrected.y_hat.push(reading.y_hat);
        corrected.y_std.push(reading.y_std);
    }
    debug_assert_eq!(corrected.y_hat.len(), location.hours);
    debug_assert!(corrected.y_hat.iter().all(|r| r.len() == d));

    let out_csv = dir.join("corrected.csv");
    write_location_via_temp(&out_csv, &location, Some(&corrected))?;
    Manifest::new(
        "infer",
        seed,
        params,
        None,
        vec![args.data.clone(), args.checkpoint.clone()],
        vec![out_csv],
    )?
    .write(&dir)?;
    Ok(())
}

// ---------------------------------------------------------------------- eval

#[derive(Args, Clone)]
pub struct EvalArgs {
    /// Location CSV with a reference column.
    #[arg(long)]
    data: PathBuf,
    /// Evaluate this checkpoint (runs inference internally).
    #[arg(long, conflicts_with = "pred")]
    checkpoint: Option<PathBuf>,
    /// Evaluate a corrected.csv produced by `infer`.
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Also compute KNN-imputed Kalman and PCA baselines.
    #[arg(long)]
    baselines: bool,
    /// Retrain per seed (comma-separated) and report mean +- std MAE.
    #[arg(long, value_delimiter = ',')]
    seed_repeat: Option<Vec<u64>>,
    /// Emit a binned histogram of the method series to this file.
    #[arg(long)]
    hist: Option<PathBuf>,
    /// Emit a block-averaged method series (window in hours) to avg.csv.
    #[arg(long)]
    avg_window: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_name = "LR")]
    learning_rate: Option<f64>,
}

fn fused_from_corrected(
    location: &LocationDataset,
    corrected: &CorrectedColumns,
) -> Vec<Option<f64>> {
    (0..location.hours)
        .map(|t| {
            let mask = location.mask_row(t);
            let mut acc = 0.0;
            let mut n = 0usize;
            for (v, m) in corrected.y_hat[t].iter().zip(mask.iter()) {
                if *m == 1.0 && v.is_finite() {
                    acc += v;
                    n += 1;
                }
            }
            if n == 0 {
                let all: Vec<f64> = corrected.y_hat[t]
                    .iter()
                    .copied()
                    .filter(|v| v.is_finite())
                    .collect();
                if all.is_empty() {
                    None
                } else {
                    Some(all.iter().sum::<f64>() / all.len() as f64)
                }
            } else {
                Some(acc / n as f64)
            }
        })
        .collect()
}

/// Baselines run on rows with at least one observed value; fully-masked rows
/// stay NA in the fused outputs.
fn baseline_maes(location: &LocationDataset) -> Result<Vec<(String, f64)>, CliError> {
    let reference = location
        .reference
        .as_ref()
        .ok_or_else(|| CliError::data("baselines need a reference column"))?;
    let rows = location.rows();
    let kept: Vec<usize> = (0..location.hours)
        .filter(|&t| rows[t].iter().any(|v| v.is_some()))
        .collect();
    let matrix: Vec<Vec<Option<f64>>> = kept.iter().map(|&t| rows[t].clone()).collect();
    let imputed = knn_impute(&matrix, 5).map_err(|e| CliError::data(e.to_string()))?;

    let expand = |fused: Vec<f64>| -> Vec<Option<f64>> {
        let mut out = vec![None; location.hours];
        for (slot, value) in kept.iter().zip(fused) {
            out[*slot] = Some(value);
        }
        out
    };

    let kf_cfg = KalmanConfig::from_data(&imputed).map_err(|e| CliError::data(e.to_string()))?;
    let kf = kalman_denoise(&imputed, &kf_cfg).map_err(|e| CliError::data(e.to_string()))?;
    let mae_kf = mae(&expand(kf), &reference.values)?;

    let pca = pca_denoise(&imputed, PcaConfig::default())
        .map_err(|e| CliError::data(e.to_string()))?;
    let mae_pca = mae(&expand(pca.fused), &reference.values)?;

    Ok(vec![
        ("mae_kf".to_string(), mae_kf),
        ("mae_pca".to_string(), mae_pca),
    ])
}

pub fn eval(global: &GlobalArgs, args: &EvalArgs) -> Result<(), CliError> {
    let dir = out_dir(global)?;
    let (mut params, seed) = resolve(global)?;
    if let Some(e) = args.epochs {
        params.epochs = e;
    }
    if let Some(lr) = args.learning_rate {
        params.learning_rate = lr;
    }
    validate_params(&params)?;

    let (location, embedded) = load_location(&args.data)?;
    if location.reference.is_none() {
        return Err(CliError::data("eval needs a `ref` column in --data"));
    }

    let fused: Vec<Option<f64>> = if let Some(ckpt_path) = &args.checkpoint {
        let model = ModelCheckpoint::load(ckpt_path)?.into_model()?;
        let (fused, _) = correct_location(&model, &location)?;
        fused
    } else if let Some(pred_path) = &args.pred {
        let (pred_loc, corrected) = load_location(pred_path)?;
        let corrected = corrected.ok_or_else(|| {
            CliError::data(format!(
                "{} carries no yhat_* columns; produce it with `veli infer`",
                pred_path.display()
            ))
        })?;
        fused_from_corrected(&pred_loc, &corrected)
    } else if let Some(corrected) = embedded {
        fused_from_corrected(&location, &corrected)
    } else {
        return Err(CliError::config("eval needs --checkpoint or --pred"));
    };

    let mut report = EvalReport::build("location", &location, &fused)?;
    if args.baselines {
        report.extra = baseline_maes(&location)?;
    }
    if let Some(seeds) = &args.seed_repeat {
        if seeds.is_empty() {
            return Err(CliError::config("--seed-repeat needs at least one seed"));
        }
        let stats = seed_repeat(seeds, |s| -> Result<f64, CliError> {
            let mut p = params.clone();
            p.min_observed = p.min_observed.max(1);
            let prepared = prepare_training(&location, &p, s)?;
            let mut model = prepared.model;
            let tc = TrainConfig {
                epochs: p.epochs,
                batch_size: p.batch,
                learning_rate: p.learning_rate,
                seed: s,
            };
            model_train(&mut model, &prepared.snapshots, &tc)?;
            let (fused, _) = correct_location(&model, &location)?;
            Ok(EvalReport::build("seed", &location, &fused)?.mae_method)
        })?;
        report.seed_stats = Some((stats.mean, stats.std));
    }

    let mut outputs = vec![dir.join("report.txt")];
    write_atomic(&dir.join("report.txt"), report.to_text().as_bytes())?;

    if let Some(hist_path) = &args.hist {
        let values: Vec<f64> = fused.iter().filter_map(|v| *v).collect();
        let bins = histogram(&values, BinRule::FreedmanDiaconis);
        let mut text = String::from("lo,hi,count\n");
        for b in bins {
            text.push_str(&format!("{},{},{}\n", b.lo, b.hi, b.count));
        }
        write_atomic(hist_path, text.as_bytes())?;
        outputs.push(hist_path.clone());
    }
    if let Some(window) = args.avg_window {
        if window == 0 {
            return Err(CliError::config("--avg-window must be at least 1"));
        }
        let avg = block_average(&fused, window);
        let mut text = String::from("block,value\n");
        for (i, v) in avg.iter().enumerate() {
            match v {
                Some(v) => text.push_str(&format!("{i},{v}\n")),
                None => text.push_str(&format!("{i},\n")),
            }
        }
        write_atomic(&dir.join("avg.csv"), text.as_bytes())?;
        outputs.push(dir.join("avg.csv"));
    }

    let mut inputs = vec![args.data.clone()];
    if let Some(p) = &args.checkpoint {
        inputs.push(p.clone());
    }
    if let Some(p) = &args.pred {
        inputs.push(p.clone());
    }
    Manifest::new("eval", seed, params, None, inputs, outputs)?.write(&dir)?;
    Ok(())
}

// -------------------------------------------------------------------- ablate

#[derive(Args, Clone)]
pub struct AblateArgs {
    /// Ablation kind: na | subset | weights.
    #[arg(long)]
    kind: String,
    #[arg(long)]
    data: PathBuf,
    /// Trained checkpoint (required for --kind na).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// NA counts per row for --kind na.
    #[arg(long, value_delimiter = ',', default_value = "1,3,5,7,9")]
    n_list: Vec<usize>,
    /// Subset sizes for --kind subset.
    #[arg(long, value_delimiter = ',', default_value = "3,5,7,10")]
    sizes: Vec<usize>,
    /// Scale grid (applied to beta_z x beta_y) for --kind weights.
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,2")]
    scales: Vec<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_name = "LR")]
    learning_rate: Option<f64>,
}

pub fn ablate(global: &GlobalArgs, args: &AblateArgs) -> Result<(), CliError> {
    let dir = out_dir(global)?;
    let (mut params, seed) = resolve(global)?;
    if let Some(e) = args.epochs {
        params.epochs = e;
    }
    if let Some(lr) = args.learning_rate {
        params.learning_rate = lr;
    }
    validate_params(&params)?;
    let (location, _) = load_location(&args.data)?;
    if location.reference.is_none() {
        return Err(CliError::data("ablate needs a `ref` column in --data"));
    }

    let driver = || {
        let mut d = TrainDriver::new(TrainConfig {
            epochs: params.epochs,
            batch_size: params.batch,
            learning_rate: params.learning_rate,
            seed,
        });
        d.latent = params.latent;
        d.hidden = params.hidden;
        d.k_samples = params.k_samples;
        d.weights = LossWeights {
            alpha: params.alpha,
            beta_z: params.beta_z,
            beta_y: params.beta_y,
        };
        d.min_observed = params.min_observed;
        d
    };

    let mut table = String::new();
    match args.kind.as_str() {
        "na" => {
            let ckpt = args.checkpoint.as_ref().ok_or_else(|| {
                CliError::config("--kind na requires --checkpoint (a trained model)")
            })?;
            let model = ModelCheckpoint::load(ckpt)?.into_model()?;
            table.push_str("n,mae_method,mae_raw_mean\n");
            for &n in &args.n_list {
                let report = run_na_injection(&model, &location, n, seed.wrapping_add(n as u64))?;
                table.push_str(&format!(
                    "{n},{},{}\n",
                    report.mae_method, report.mae_raw_mean
                ));
            }
        }
        "subset" => {
            let results = run_sensor_subset(&location, &args.sizes, &driver())?;
            table.push_str("size,mae_method,mae_raw_mean\n");
            for (s, report) in results {
                table.push_str(&format!(
                    "{s},{},{}\n",
                    report.mae_method, report.mae_raw_mean
                ));
            }
        }
        "weights" => {
            let mut grid = Vec::new();
            for &bz in &args.scales {
                for &by in &args.scales {
                    grid.push(WeightScales {
                        alpha: 1.0,
                        beta_z: bz,
                        beta_y: by,
                    });
                }
            }
            let sweep = run_loss_weight_sweep(&location, &grid, &driver())?;
            table.push_str("alpha_scale,beta_z_scale,beta_y_scale,mae\n");
            for entry in sweep {
                table.push_str(&format!(
                    "{},{},{},{}\n",
                    entry.scales.alpha, entry.scales.beta_z, entry.scales.beta_y, entry.mae
                ));
            }
        }
        other => {
            return Err(CliError::config(format!(
                "unknown ablation kind {other:?}; expected na|subset|weights"
            )))
        }
    }

    write_atomic(&dir.join("ablation.csv"), table.as_bytes())?;
    let mut inputs = vec![args.data.clone()];
    if let Some(p) = &args.checkpoint {
        inputs.push(p.clone());
    }
    Manifest::new(
        "ablate",
        seed,
        params,
        None,
        inputs,
        vec![dir.join("ablation.csv")],
    )?
    .write(&dir)?;
    Ok(())
}
