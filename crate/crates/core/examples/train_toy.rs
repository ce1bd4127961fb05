//! Train the toy segmenter on synthetic rooms and score a held-out split.
//!
//! cargo run --release --example train_toy -- [epochs] [train_n]

use layoutforge::metrics::evaluate_samples;
use layoutforge::model::{infer, train, TrainSetup};
use layoutforge::synth::{generate_samples, SynthConfig};
use layoutforge::RoomTaxonomy;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LAYOUTFORGE_LOG", "info")).init();
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let epochs = args.first().copied().unwrap_or(30);
    let n = args.get(1).copied().unwrap_or(500);
    let tax = RoomTaxonomy::default_lsun();
    let render = SynthConfig { width: 64, height: 64, seed: 1, ..Default::default() }.resolved(&tax)?;
    let train_set = generate_samples(&render, &tax, 0..n as u64)?;
    let held_out = generate_samples(&render, &tax, 100_000..100_100)?;

    let mut setup = TrainSetup::default();
    setup.train.epochs = epochs;
    let t0 = std::time::Instant::now();
    let out = train(&setup, &train_set, &tax, &render, Some(&held_out[..20]), None)?;
    println!("trained in {:.1}s", t0.elapsed().as_secs_f64());

    let report = evaluate_samples(&held_out, |s| infer(&out.model, &out.params, &s.image));
    print!("{}", report.summary());
    Ok(())
}
