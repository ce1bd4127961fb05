//! Component ablation under a long-tail room-type distribution.
//!
//! Three configurations are trained per seed on the same data: surface and
//! contrastive losses only (`base`), plus edge and smoothness losses
//! (`geo`), plus degeneration augmentation (`geo_degen`). Each is scored
//! by pixel error on held-out samples drawn uniformly over room types.

use serde::{Deserialize, Serialize};

use crate::layout::RoomTaxonomy;
use crate::metrics::evaluate_samples;
use crate::model::{infer, train, ModelError, TrainSetup};
use crate::synth::{generate_samples, SynthConfig, TypeDistribution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationProtocol {
    pub seeds: Vec<u64>,
    pub train_samples: usize,
    pub eval_samples: usize,
    pub head_type: u32,
    pub head_mass: f64,
    pub noise_std: f64,
    pub degen_prob: f64,
    /// Training settings shared by every arm; loss weights for the geometry
    /// terms come from `setup.weights` and are zeroed for `base`.
    pub setup: TrainSetup,
}

impl Default for AblationProtocol {
    fn default() -> Self {
        let mut setup = TrainSetup::default();
        setup.train.epochs = 12;
        setup.train.monitor = 0;
        Self {
            seeds: vec![0, 1, 2],
            train_samples: 300,
            eval_samples: 100,
            head_type: 0,
            head_mass: 0.8,
            noise_std: 0.4,
            degen_prob: 0.5,
            setup,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Base,
    Geo,
    GeoDegen,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::Base, Arm::Geo, Arm::GeoDegen];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Base => "base",
            Arm::Geo => "base+geo",
            Arm::GeoDegen => "base+geo+degen",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub arm: Arm,
    pub seed: u64,
    pub pe: f64,
    pub e_cor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub runs: Vec<ArmResult>,
}

impl AblationReport {
    pub fn mean_pe(&self, arm: Arm) -> f64 {
        let v: Vec<f64> = self.runs.iter().filter(|r| r.arm == arm).map(|r| r.pe).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    }

    /// PE(base) > PE(geo) > PE(geo_degen) on seed means.
    pub fn strictly_ordered(&self) -> bool {
        self.mean_pe(Arm::Base) > self.mean_pe(Arm::Geo) && self.mean_pe(Arm::Geo) > self.mean_pe(Arm::GeoDegen)
    }
}

impl AblationProtocol {
    fn arm_setup(&self, arm: Arm, seed: u64) -> TrainSetup {
        let mut s = self.setup.clone();
        s.train.seed = seed;
        s.augment.seed = seed;
        if arm == Arm::Base {
            s.weights = s.weights.without_geo();
        }
        s.augment.degen_prob = if arm == Arm::GeoDegen { self.degen_prob } else { 0.0 };
        s
    }

    /// Train and score one arm for one seed.
    pub fn run_arm(&self, taxonomy: &RoomTaxonomy, arm: Arm, seed: u64) -> Result<ArmResult, ModelError> {
        let (w, h) = (self.setup.model.width, self.setup.model.height);
        let base = SynthConfig { width: w, height: h, seed, noise_std: self.noise_std, ..Default::default() };
        let train_cfg = SynthConfig {
            type_distribution: TypeDistribution::long_tail(taxonomy, self.head_type, self.head_mass),
            ..base.clone()
        }
        .resolved(taxonomy)?;
        let eval_cfg =
            SynthConfig { type_distribution: TypeDistribution::uniform(taxonomy), ..base }.resolved(taxonomy)?;
        let train_set = generate_samples(&train_cfg, taxonomy, 0..self.train_samples as u64)?;
        let eval_set = generate_samples(&eval_cfg, taxonomy, 1 << 32..(1 << 32) + self.eval_samples as u64)?;
        let out = train(&self.arm_setup(arm, seed), &train_set, taxonomy, &train_cfg, Some(&[]), None)?;
        let rep = evaluate_samples(&eval_set, |s| infer(&out.model, &out.params, &s.image));
        Ok(ArmResult { arm, seed, pe: rep.aggregate.pe, e_cor: rep.aggregate.e_cor })
    }

    pub fn run(&self, taxonomy: &RoomTaxonomy) -> Result<AblationReport, ModelError> {
        let mut runs = Vec::new();
        for &seed in &self.seeds {
            for arm in Arm::ALL {
                let r = self.run_arm(taxonomy, arm, seed)?;
                log::info!("{} seed {}: pe {:.3} e_cor {:.3}", arm.name(), seed, r.pe, r.e_cor);
                runs.push(r);
            }
        }
        Ok(AblationReport { runs })
    }
}
