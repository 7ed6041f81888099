//! Scratch driver for sizing the synthetic-recovery training run.

use veli_core::eval::{correct_location, EvalReport, TrainDriver};
use veli_core::model::TrainConfig;
use veli_core::pipeline::HourStamp;
use veli_core::synth::{gen_base, inject_noise, BaseSignal, BaseSignalSpec, NoiseConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let hours: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(4000);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(40);
    let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let seed: u64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1);

    let base = gen_base(
        &BaseSignalSpec {
            signal: BaseSignal::sinusoid_default(),
            length: hours,
        },
        seed,
    )
    .unwrap();
    let noisy = inject_noise(&base, &NoiseConfig::fig9(), 10, seed).unwrap();
    let location = noisy.to_location(HourStamp(0));

    let start = std::time::Instant::now();
    let driver = TrainDriver::new(TrainConfig {
        epochs,
        batch_size: 64,
        learning_rate: lr,
        seed,
    });
    let d = location.sensor_count();
    let rows = location.rows();
    let scaler = veli_core::pipeline::Scaler::fit(&rows, d).unwrap();
    let snapshots = veli_core::model::snapshots_from_rows(&scaler, &rows, HourStamp(0));
    let mut config = veli_core::model::VeliConfig::new(d);
    config.latent = driver.latent;
    config.hidden = driver.hidden;
    let mut model = veli_core::model::VeliModel::new(config, scaler, seed).unwrap();
    let history = veli_core::model::train(&mut model, &snapshots, &driver.train).unwrap();
    let train_time = start.elapsed();
    for (e, h) in history.iter().enumerate() {
        if e % (epochs / 8).max(1) == 0 || e == epochs - 1 {
            println!(
                "  epoch {e:3}: total={:9.3} kl_z={:8.4} kl_y={:8.4} recon={:9.3}",
                h.total, h.kl_z, h.kl_y, h.recon_nll
            );
        }
    }

    let (fused, readings) = correct_location(&model, &location).unwrap();
    let report = EvalReport::build("explore", &location, &fused).unwrap();

    // Diagnostics on the corrected output.
    let fused_vals: Vec<f64> = fused.iter().map(|v| v.unwrap()).collect();
    let fmean = fused_vals.iter().sum::<f64>() / fused_vals.len() as f64;
    let bmean = base.iter().sum::<f64>() / base.len() as f64;
    let corr = {
        let fm = fmean;
        let bm = bmean;
        let mut c = 0.0;
        let mut sf = 0.0;
        let mut sb = 0.0;
        for (f, b) in fused_vals.iter().zip(base.iter()) {
            c += (f - fm) * (b - bm);
            sf += (f - fm) * (f - fm);
            sb += (b - bm) * (b - bm);
        }
        c / (sf.sqrt() * sb.sqrt())
    };
    let mean_ystd = readings
        .iter()
        .map(|r| r.y_std.iter().sum::<f64>() / r.y_std.len() as f64)
        .sum::<f64>()
        / readings.len() as f64;
    println!(
        "  fused mean={fmean:.2} (base mean {bmean:.2}) corr(fused,base)={corr:.3} mean y_std={mean_ystd:.2}"
    );
    println!(
        "hours={hours} epochs={epochs} lr={lr} seed={seed} | mae_raw={:.3} mae_veli={:.3} ratio={:.3} recovered={} | train {:?}",
        report.mae_raw_mean,
        report.mae_method,
        report.mae_method / report.mae_raw_mean,
        report.recovered,
        train_time
    );
}
