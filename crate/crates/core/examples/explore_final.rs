//! Scratch driver: the pinned acceptance configuration end to end.

use veli_core::eval::{correct_location, run_na_injection, EvalReport, TrainDriver};
use veli_core::model::TrainConfig;
use veli_core::pipeline::{dbscan_scrub, DbscanParams, HourStamp, DBSCAN_BATCH_HOURS};
use veli_core::synth::{gen_base, inject_noise, BaseSignal, BaseSignalSpec, NoiseConfig};

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let epochs: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(20);
    let base = gen_base(
        &BaseSignalSpec { signal: BaseSignal::sinusoid_default(), length: 4000 },
        seed,
    )
    .unwrap();
    let noisy = inject_noise(&base, &NoiseConfig::fig9(), 10, seed).unwrap();
    let mut location = noisy.to_location(HourStamp(0));
    for s in location.sensors.iter_mut() {
        *s = dbscan_scrub(s, DbscanParams::default(), DBSCAN_BATCH_HOURS);
    }
    let t0 = std::time::Instant::now();
    let driver = TrainDriver::new(TrainConfig {
        epochs,
        batch_size: 64,
        learning_rate: 1e-3,
        seed,
    });
    let model = driver.train_on(&location).unwrap();
    let (fused, _) = correct_location(&model, &location).unwrap();
    let report = EvalReport::build("recovery", &location, &fused).unwrap();
    println!(
        "c3 seed={seed} ep={epochs}: raw={:.3} veli={:.3} ratio={:.3} ({:?})",
        report.mae_raw_mean,
        report.mae_method,
        report.mae_method / report.mae_raw_mean,
        t0.elapsed()
    );
    let mut maes = Vec::new();
    for n in [1usize, 3, 5, 7, 9] {
        let r = run_na_injection(&model, &location, n, 100 + n as u64).unwrap();
        maes.push((n, (r.mae_method * 1000.0).round() / 1000.0));
    }
    println!("c5: {maes:?}");
    let endpoint = maes[4].1 >= maes[0].1;
    let inversions = maes.windows(2).filter(|w| w[1].1 < w[0].1).count();
    println!("c5 endpoint={endpoint} inversions={inversions}");
}
