//! Walk the degeneration graph: every edge applied to one sample of its
//! parent type, with the resulting masks written side by side.
//!
//! cargo run --example degeneration -- [out_dir]

use std::path::PathBuf;

use layoutforge::degen::degenerate;
use layoutforge::imageio::render_mask;
use layoutforge::layout::{build_dag, rasterize, validate_layout};
use layoutforge::synth::{sample_layout, SynthConfig, TypeDistribution};
use layoutforge::RoomTaxonomy;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("layoutforge_degen"));
    std::fs::create_dir_all(&out)?;
    let tax = RoomTaxonomy::default_lsun();
    let dag = build_dag(&tax)?;
    println!("{} types, {} edges", dag.nodes().len(), dag.edges().len());
    println!("topological order {:?}", dag.topological_order().unwrap_or_default());

    for e in dag.edges() {
        let cfg = SynthConfig {
            width: 96,
            height: 96,
            seed: 5,
            type_distribution: TypeDistribution([(e.parent, 1.0)].into()),
            ..Default::default()
        };
        let parent = sample_layout(&cfg, &tax, 0)?;
        let child = degenerate(&parent, *e, &dag)?;
        let (before, after) = (rasterize(&parent)?, rasterize(&child)?);
        let ok = validate_layout(&after, &tax).is_valid() && after.labels().iter().all(|&l| l != 0);
        let removed = dag.removed_surface(*e).map(|s| s.name()).unwrap_or("-");
        println!("{:>2} -> {:<2} drop {:<11} valid {ok}", e.parent, e.child, removed);
        render_mask(&before, None).save(out.join(format!("{}_{}_before.png", e.parent, e.child)))?;
        render_mask(&after, None).save(out.join(format!("{}_{}_after.png", e.parent, e.child)))?;
    }
    println!("masks in {}", out.display());
    Ok(())
}
