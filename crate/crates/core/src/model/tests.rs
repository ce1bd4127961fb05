use super::*;
use crate::losses::{gradcheck, CheckConfig, EdgeLossConfig, LossWeights};
use crate::synth::{generate_sample, SynthConfig};
use crate::RoomTaxonomy;

fn small() -> ModelConfig {
    ModelConfig { width: 16, height: 16, ..Default::default() }
}

#[test]
fn shapes() {
    let m = ToyModel::new(ModelConfig::default()).unwrap();
    let p = m.init_params(1, 0.07);
    let img = RgbImage::from_fn(64, 64, |r, c| [r as f64 / 64.0, c as f64 / 64.0, 0.5]);
    let fp = m.encode(&p, &img).unwrap();
    assert_eq!((fp.quarter, fp.eighth, fp.channels), ((16, 16), (8, 8), 32));
    let pred = m.predict(&p, &img).unwrap();
    assert_eq!(pred.mask_logits.len(), 6 * 64 * 64);
    for a in m.attention_maps(&p, &img).unwrap() {
        for row in a.chunks(a.len() / 6) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
    let probs = predict_masks(&pred);
    for i in 0..64 * 64 {
        let s: f64 = probs.iter().map(|g| g.data()[i]).sum();
        assert!((s - 1.0).abs() < 1e-6);
    }
}

#[test]
fn queries_from_task() {
    let m = ToyModel::new(ModelConfig::default()).unwrap();
    let mut p = m.init_params(1, 0.07);
    let t = m.embed_task(&p, "the task is semantic").unwrap();
    assert_eq!(t, m.embed_task(&p, "the task is semantic").unwrap());
    assert_ne!(t.embedding, m.embed_task(&p, "semantic is task the").unwrap().embedding);
    let q = m.init_queries(&p, &t);
    assert_eq!(&q.q[5 * 16..], &t.embedding[..]);
    let r = m.layout().get("offsets").unwrap();
    p[r].iter_mut().for_each(|v| *v = 0.0);
    let q = m.init_queries(&p, &t);
    for row in q.q.chunks(16) {
        assert_eq!(row, &t.embedding[..]);
    }
}

#[test]
fn zero_encoder_gives_zero_features() {
    let m = ToyModel::new(small()).unwrap();
    let p = vec![0.0; m.num_params()];
    let img = RgbImage::from_fn(16, 16, |r, _| [r as f64 / 16.0; 3]);
    let fp = m.encode(&p, &img).unwrap();
    assert!(fp.f4.iter().chain(&fp.f8).all(|&v| v == 0.0));
}

#[test]
fn end_to_end_gradcheck() {
    let tax = RoomTaxonomy::default_lsun();
    let sc = SynthConfig { width: 16, height: 16, seed: 3, ..Default::default() };
    let edge = EdgeLossConfig::default();
    let items: Vec<TrainItem> =
        (0..2).map(|i| TrainItem::from_sample(&generate_sample(&sc, &tax, i).unwrap(), &edge)).collect();
    let m = ToyModel::new(small()).unwrap();
    let p = m.init_params(7, 0.5);
    let w = LossWeights::default();
    let f = |x: &[f64]| {
        let b = batch_loss(&m, x, &items, &w, &edge).unwrap();
        (b.value, b.grad)
    };
    let rep = gradcheck(f, &p, &CheckConfig { tolerance: 1e-3, samples: 400, ..Default::default() });
    assert!(rep.passed, "{rep}");
}
