//! Augment one sample across a few epochs and report what happened to it.
//! The stream is keyed by (seed, epoch, index), so reruns print the same table.

use layoutforge::degen::{augment_sample, augment_stream, AugmentConfig};
use layoutforge::layout::{build_dag, rasterize};
use layoutforge::synth::{generate_sample, SynthConfig, TypeDistribution};
use layoutforge::RoomTaxonomy;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tax = RoomTaxonomy::default_lsun();
    let dag = build_dag(&tax)?;
    // full-box rooms have four outgoing edges, so degeneration shows up
    let render = SynthConfig {
        width: 64,
        height: 64,
        seed: 2,
        type_distribution: TypeDistribution([(0, 1.0)].into()),
        ..Default::default()
    };
    let sample = generate_sample(&render, &tax, 3)?;
    let cfg = AugmentConfig { degen_prob: 0.5, ..Default::default() };

    println!("source type {}", sample.poly.room_type);
    println!("epoch  type   flip  degen      bright  contrast  mask==raster");
    for epoch in 0..8 {
        let mut rng = augment_stream(&cfg, epoch, sample.id);
        let (aug, log) = augment_sample(&sample, &dag, &tax, &cfg, &render, &mut rng)?;
        let degen = log.degenerated.map(|e| format!("{}->{}", e.parent, e.child)).unwrap_or_else(|| "-".into());
        println!(
            "{epoch:>5}  {:>4}  {:>5}  {degen:<9}  {:>+6.3}  {:>8.3}  {}",
            aug.poly.room_type,
            log.flipped,
            log.brightness,
            log.contrast,
            rasterize(&aug.poly)? == aug.mask
        );
    }
    Ok(())
}
