//! Write a small synthetic dataset to disk and read it back.
//!
//! cargo run --example synth_dataset -- [out_dir] [n]

use std::path::PathBuf;

use layoutforge::synth::{gen_dataset, load_dataset, DatasetManifest, SynthConfig, TypeDistribution};
use layoutforge::RoomTaxonomy;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("layoutforge_synth"));
    let n: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(40);

    let tax = RoomTaxonomy::default_lsun();
    // most mass on the full five-surface room, the rest spread thin
    let cfg = SynthConfig {
        width: 64,
        height: 64,
        seed: 11,
        type_distribution: TypeDistribution::long_tail(&tax, 0, 0.6),
        ..Default::default()
    };
    let manifest = gen_dataset(&cfg, &tax, n, &out)?;
    println!("wrote {} samples to {}", manifest.records.len(), out.display());

    let back = load_dataset(&DatasetManifest::load(&manifest.path())?)?;
    let mut counts = vec![0usize; tax.len()];
    for s in &back {
        counts[s.poly.room_type as usize] += 1;
    }
    for t in tax.types() {
        println!("type {:>2} {:<24} {}", t.id, t.name, counts[t.id as usize]);
    }
    Ok(())
}
