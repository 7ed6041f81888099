//! Scratch driver: sensor-subset ratio across seeds/config.

use veli_core::eval::{run_sensor_subset, TrainDriver};
use veli_core::model::TrainConfig;
use veli_core::pipeline::{dbscan_scrub, DbscanParams, HourStamp, DBSCAN_BATCH_HOURS};
use veli_core::synth::{gen_base, inject_noise, BaseSignal, BaseSignalSpec, NoiseConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(20);
    let hours: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let k: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1);
    let batch: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(64);
    let lr: f64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
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
    for s in location.sensors.iter_mut() {
        *s = dbscan_scrub(s, DbscanParams::default(), DBSCAN_BATCH_HOURS);
    }
    let mut driver = TrainDriver::new(TrainConfig {
        epochs,
        batch_size: batch,
        learning_rate: lr,
        seed,
    });
    driver.k_samples = k;
    let results = run_sensor_subset(&location, &[3, 10], &driver).unwrap();
    let m3 = results[0].1.mae_method;
    let m10 = results[1].1.mae_method;
    println!("s3={m3:.3} s10={m10:.3} ratio={:.3}", m3 / m10);
}
