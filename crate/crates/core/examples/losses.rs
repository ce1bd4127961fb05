//! Evaluate every loss term on a ground-truth mask against a blurred
//! prediction, then check the total against finite differences.

use layoutforge::layout::Grid;
use layoutforge::losses::{
    contrastive_loss, edge_loss, geo_loss, gradcheck, gt_edge_map, one_hot, smoothness_loss, surface_loss, total_loss,
    CheckConfig, ContrastiveConfig, EdgeLossConfig, LossWeights,
};
use layoutforge::synth::{generate_sample, SynthConfig};
use layoutforge::RoomTaxonomy;

/// Mix the one-hot stack with a uniform distribution.
fn soften(stack: &[Grid], keep: f64) -> Vec<Grid> {
    let u = 1.0 / stack.len() as f64;
    stack.iter().map(|g| Grid::from_fn(g.width(), g.height(), |r, c| keep * g.get(r, c) + (1.0 - keep) * u)).collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tax = RoomTaxonomy::default_lsun();
    let cfg = SynthConfig { width: 24, height: 24, seed: 8, ..Default::default() }.resolved(&tax)?;
    let gt = generate_sample(&cfg, &tax, 0)?.mask;
    let weights = LossWeights::default();
    let edge_cfg = EdgeLossConfig::default();

    let target = one_hot(&gt, 6);
    for keep in [0.99, 0.8, 0.5] {
        let probs = soften(&target, keep);
        let surf = surface_loss(&probs, &probs[1..], &gt, &weights)?;
        let e_gt = gt_edge_map(&gt, &edge_cfg);
        let edge = edge_loss(&probs, &e_gt, &edge_cfg)?;
        let smooth = smoothness_loss(&probs, &target)?;
        let geo = geo_loss(&edge, &smooth, &weights)?;
        println!(
            "keep {keep:.2}: ce {:.4} dice {:.4} bce {:.4} edge {:.4} smooth {:.4}",
            surf.term("ce").unwrap_or(0.0),
            surf.term("dice").unwrap_or(0.0),
            surf.term("bce").unwrap_or(0.0),
            edge.value,
            smooth.value
        );
        let q: Vec<f64> = (0..12).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.3).collect();
        let t: Vec<f64> = (0..12).map(|i| ((i * 3 % 4) as f64 - 1.5) * 0.4).collect();
        let con = contrastive_loss(&q, &t, 4, &ContrastiveConfig::default())?;
        println!("           total {:.4}", total_loss(&surf, &con, &geo).value);
    }

    // smoothness alone, checked coordinate by coordinate
    let flat: Vec<f64> = soften(&target, 0.7).iter().flat_map(|g| g.data().to_vec()).collect();
    let (w, h) = (gt.width(), gt.height());
    let f = |x: &[f64]| {
        let stack = layoutforge::losses::unflatten(x, w, h);
        let b = smoothness_loss(&stack, &target).expect("shapes");
        (b.value, b.grads[0].clone())
    };
    let report = gradcheck(f, &flat, &CheckConfig { samples: 100, ..Default::default() });
    println!("smoothness gradcheck: {report}");
    Ok(())
}
