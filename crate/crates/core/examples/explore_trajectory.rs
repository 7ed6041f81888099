//! Scratch driver: MAE trajectory across training, with and without the
//! DBSCAN scrub stage in front.

use veli_core::eval::{correct_location, mae};
use veli_core::model::{snapshots_from_rows, train, TrainConfig, VeliConfig, VeliModel};
use veli_core::pipeline::{dbscan_scrub, DbscanParams, HourStamp, LocationDataset, Scaler, DBSCAN_BATCH_HOURS};
use veli_core::synth::{gen_base, inject_noise, BaseSignal, BaseSignalSpec, NoiseConfig};

fn eval_model(model: &VeliModel, location: &LocationDataset) -> (f64, f64) {
    let (fused, _) = correct_location(model, location).unwrap();
    let reference = location.reference.as_ref().unwrap();
    let m = mae(&fused, &reference.values).unwrap();
    let fused_mean =
        fused.iter().map(|v| v.unwrap()).sum::<f64>() / fused.len() as f64;
    (m, fused_mean)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let hours: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(4000);
    let lr: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let chunks: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(12);
    let chunk_epochs: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(5);
    let seed: u64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(1);
    let scrub: bool = args.get(6).map(|s| s == "scrub").unwrap_or(false);

    let base = gen_base(
        &BaseSignalSpec {
            signal: BaseSignal::sinusoid_default(),
            length: hours,
        },
        seed,
    )
    .unwrap();
    let noisy = inject_noise(&base, &NoiseConfig::fig9(), 10, seed).unwrap();
    let mut location = noisy.to_location(HourStamp(0));
    let raw_mae = mae(
        &location.raw_channel_mean(),
        &location.reference.as_ref().unwrap().values,
    )
    .unwrap();

    if scrub {
        let mut removed = 0usize;
        let mut total = 0usize;
        for s in location.sensors.iter_mut() {
            let before = s.observed_count();
            *s = dbscan_scrub(s, DbscanParams::default(), DBSCAN_BATCH_HOURS);
            removed += before - s.observed_count();
            total += before;
        }
        println!("scrub removed {removed}/{total} points");
    }

    let d = location.sensor_count();
    let rows = location.rows();
    let scaler = Scaler::fit(&rows, d).unwrap();
    println!(
        "raw_mae={raw_mae:.3}  scaler means[0]={:.2} stds[0]={:.2}",
        scaler.means[0], scaler.stds[0]
    );
    let snapshots = snapshots_from_rows(&scaler, &rows, HourStamp(0));
    let config = VeliConfig::new(d);
    let mut model = VeliModel::new(config, scaler, seed).unwrap();

    let (m0, f0) = eval_model(&model, &location);
    println!("epoch   0: mae={m0:8.3} ratio={:6.3} fused_mean={f0:7.2}", m0 / raw_mae);
    for chunk in 0..chunks {
        let tc = TrainConfig {
            epochs: chunk_epochs,
            batch_size: 64,
            learning_rate: lr,
            seed: seed + chunk as u64,
        };
        train(&mut model, &snapshots, &tc).unwrap();
        let (m, f) = eval_model(&model, &location);
        println!(
            "epoch {:3}: mae={m:8.3} ratio={:6.3} fused_mean={f:7.2}",
            (chunk + 1) * chunk_epochs,
            m / raw_mae
        );
    }
}
