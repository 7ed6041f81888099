//! Scratch diagnostics: per-epoch trajectory of a subset run.

use veli_core::eval::{correct_location, mae};
use veli_core::model::{snapshots_from_rows, train, TrainConfig, VeliConfig, VeliModel};
use veli_core::pipeline::{dbscan_scrub, DbscanParams, HourStamp, Scaler, DBSCAN_BATCH_HOURS};
use veli_core::synth::{gen_base, inject_noise, BaseSignal, BaseSignalSpec, NoiseConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let s: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(3);
    let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let hours = 2000;
    let base = gen_base(
        &BaseSignalSpec { signal: BaseSignal::sinusoid_default(), length: hours },
        seed,
    )
    .unwrap();
    let noisy = inject_noise(&base, &NoiseConfig::fig9(), 10, seed).unwrap();
    let mut location = noisy.to_location(HourStamp(0));
    for sensor in location.sensors.iter_mut() {
        *sensor = dbscan_scrub(sensor, DbscanParams::default(), DBSCAN_BATCH_HOURS);
    }
    let subset = location.take_sensors(s);
    let rows = subset.rows();
    let scaler = Scaler::fit(&rows, s).unwrap();
    let min_obs = (s / 2).max(1);
    let admissible: Vec<Vec<Option<f64>>> = rows
        .iter()
        .filter(|r| r.iter().filter(|v| v.is_some()).count() >= min_obs)
        .cloned()
        .collect();
    let snaps = snapshots_from_rows(&scaler, &admissible, HourStamp(0));
    let mut config = VeliConfig::new(s);
    config.latent = 4.min(s);
    let mut model = VeliModel::new(config, scaler, seed).unwrap();
    let reference = subset.reference.as_ref().unwrap();
    for epoch in 0..20 {
        let (fused, readings) = correct_location(&model, &subset).unwrap();
        let m = mae(&fused, &reference.values).unwrap();
        let fmean = fused.iter().map(|v| v.unwrap()).sum::<f64>() / fused.len() as f64;
        let ystd = readings.iter().map(|r| r.y_std.iter().sum::<f64>() / s as f64).sum::<f64>()
            / readings.len() as f64;
        let h = train(
            &mut model,
            &snaps,
            &TrainConfig { epochs: 1, batch_size: 64, learning_rate: lr, seed: seed + epoch },
        )
        .unwrap();
        println!(
            "epoch {epoch:2}: mae={m:7.3} fused_mean={fmean:6.2} ystd={ystd:5.2} | kl_z={:7.4} kl_y={:8.4} recon={:8.3}",
            h[0].kl_z, h[0].kl_y, h[0].recon_nll
        );
    }
}
