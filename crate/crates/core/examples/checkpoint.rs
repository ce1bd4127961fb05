//! Train briefly, save a checkpoint, reload it and confirm the reloaded
//! model predicts the same masks.

use layoutforge::model::{infer, load_checkpoint, save_checkpoint, train, Checkpoint, ToyModel, TrainSetup};
use layoutforge::synth::{generate_samples, SynthConfig};
use layoutforge::RoomTaxonomy;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tax = RoomTaxonomy::default_lsun();
    let render = SynthConfig { width: 64, height: 64, seed: 9, ..Default::default() }.resolved(&tax)?;
    let data = generate_samples(&render, &tax, 0..48)?;
    let mut setup = TrainSetup::default();
    setup.train.epochs = 3;
    let out = train(&setup, &data, &tax, &render, None, None)?;
    for e in &out.log {
        println!("epoch {} loss {:.4}", e.epoch, e.loss);
    }

    let path = std::env::temp_dir().join("layoutforge_example.lfck");
    let ck = Checkpoint { model: setup.model.clone(), extra: serde_json::json!({ "epochs": 3 }), params: out.params.clone() };
    save_checkpoint(&ck, &path)?;
    let back = load_checkpoint(&path)?;
    let model = ToyModel::new(back.model.clone())?;
    let same = data[..8]
        .iter()
        .all(|s| infer(&model, &back.params, &s.image).ok() == infer(&out.model, &out.params, &s.image).ok());
    println!("{} parameters, {} bytes, predictions identical: {same}", back.params.len(), std::fs::metadata(&path)?.len());
    Ok(())
}
