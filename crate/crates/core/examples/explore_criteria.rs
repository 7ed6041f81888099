//! Scratch driver for the remaining run-as-oracle acceptance checks.

use veli_core::eval::{
    correct_location, run_loss_weight_sweep, run_na_injection, run_sensor_subset, EvalReport,
    TrainDriver, WeightScales,
};
use veli_core::model::TrainConfig;
use veli_core::pipeline::{dbscan_scrub, DbscanParams, HourStamp, LocationDataset, DBSCAN_BATCH_HOURS};
use veli_core::synth::{gen_base, inject_noise, BaseSignal, BaseSignalSpec, NoiseConfig};

fn scrubbed_location(hours: usize, noise: &NoiseConfig, seed: u64) -> LocationDataset {
    let base = gen_base(
        &BaseSignalSpec {
            signal: BaseSignal::sinusoid_default(),
            length: hours,
        },
        seed,
    )
    .unwrap();
    let noisy = inject_noise(&base, noise, 10, seed).unwrap();
    let mut location = noisy.to_location(HourStamp(0));
    for s in location.sensors.iter_mut() {
        *s = dbscan_scrub(s, DbscanParams::default(), DBSCAN_BATCH_HOURS);
    }
    location
}

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "all".into());
    let seed = 2u64;
    let train = TrainConfig {
        epochs: 20,
        batch_size: 64,
        learning_rate: 1e-3,
        seed,
    };

    if which == "all" || which == "c4" {
        // Criterion 4: fig10 extreme preset completes and flags non-recovery.
        let t0 = std::time::Instant::now();
        let location = scrubbed_location(4000, &NoiseConfig::fig10(), seed);
        let driver = TrainDriver::new(train.clone());
        let model = driver.train_on(&location).unwrap();
        let (fused, _) = correct_location(&model, &location).unwrap();
        let report = EvalReport::build("fig10", &location, &fused).unwrap();
        println!(
            "c4 fig10: raw={:.2} veli={:.2} ratio={:.3} recovered={} ({:?})",
            report.mae_raw_mean,
            report.mae_method,
            report.mae_method / report.mae_raw_mean,
            report.recovered,
            t0.elapsed()
        );
    }

    if which == "all" || which == "c5" {
        // Criterion 5: NA injection trend on the recovery model.
        let t0 = std::time::Instant::now();
        let location = scrubbed_location(4000, &NoiseConfig::fig9(), seed);
        let driver = TrainDriver::new(train.clone());
        let model = driver.train_on(&location).unwrap();
        let mut maes = Vec::new();
        for n in [1usize, 3, 5, 7, 9] {
            let report = run_na_injection(&model, &location, n, 100 + n as u64).unwrap();
            maes.push((n, report.mae_method));
        }
        println!("c5 na-injection: {maes:?} ({:?})", t0.elapsed());
    }

    if which == "all" || which == "c6" {
        // Criterion 6: subset robustness s=3 vs s=10.
        let t0 = std::time::Instant::now();
        let location = scrubbed_location(2000, &NoiseConfig::fig9(), seed);
        let driver = TrainDriver::new(train.clone());
        let results = run_sensor_subset(&location, &[3, 5, 7, 10], &driver).unwrap();
        for (s, report) in &results {
            println!(
                "c6 subset s={s}: veli={:.3} raw={:.3}",
                report.mae_method, report.mae_raw_mean
            );
        }
        let m3 = results[0].1.mae_method;
        let m10 = results[3].1.mae_method;
        println!("c6 ratio s3/s10 = {:.3} ({:?})", m3 / m10, t0.elapsed());
    }

    if which == "all" || which == "c7" {
        // Criterion 7: 3x3 weight-scale grid within 20% of default.
        let t0 = std::time::Instant::now();
        let location = scrubbed_location(2000, &NoiseConfig::fig9(), seed);
        let driver = TrainDriver::new(train.clone());
        let mut grid = Vec::new();
        for bz in [0.5, 1.0, 2.0] {
            for by in [0.5, 1.0, 2.0] {
                grid.push(WeightScales {
                    alpha: 1.0,
                    beta_z: bz,
                    beta_y: by,
                });
            }
        }
        let sweep = run_loss_weight_sweep(&location, &grid, &driver).unwrap();
        let default_mae = sweep
            .iter()
            .find(|e| e.scales.beta_z == 1.0 && e.scales.beta_y == 1.0)
            .unwrap()
            .mae;
        for entry in &sweep {
            println!(
                "c7 bz={:.1} by={:.1}: mae={:.3} rel={:+.1}%",
                entry.scales.beta_z,
                entry.scales.beta_y,
                entry.mae,
                (entry.mae / default_mae - 1.0) * 100.0
            );
        }
        println!("c7 done ({:?})", t0.elapsed());
    }
}
