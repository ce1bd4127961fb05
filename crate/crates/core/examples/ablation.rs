//! Long-tail ablation: base vs. +geometry losses vs. +degeneration.
//!
//! cargo run --release --example ablation

use layoutforge::ablation::{AblationProtocol, Arm};
use layoutforge::RoomTaxonomy;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LAYOUTFORGE_LOG", "info")).init();
    let tax = RoomTaxonomy::default_lsun();
    let report = AblationProtocol::default().run(&tax)?;
    for arm in Arm::ALL {
        println!("{:<16} mean PE {:.3}%", arm.name(), report.mean_pe(arm));
    }
    println!("strict ordering: {}", report.strictly_ordered());
    Ok(())
}
