//! Training configuration with the published defaults.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statpool::Spread;

/// Ablation switches selecting the model variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    /// Use the frequency-weighted target distribution; off falls back to the
    /// DEC target `q²/u_j`.
    pub weighted_target: bool,
    /// Insert the statistics pooling layer in the decoder.
    pub stat_pooling: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self {
            weighted_target: true,
            stat_pooling: true,
        }
    }
}

impl Ablation {
    pub fn variant_name(&self) -> &'static str {
        match (self.weighted_target, self.stat_pooling) {
            (true, true) => "StatDEC-1",
            (true, false) => "StatDEC-2",
            (false, true) => "StatDEC-3",
            (false, false) => "baseline-IDEC",
        }
    }
}

/// Dataset-specific batch size and target update interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Mnist,
    Cifar10,
    Cifar100,
    Refuge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Weight of the clustering loss in `λ·Lc + (1-λ)·Lr`.
    pub lambda: f64,
    /// Degrees of freedom of the Student's-t kernel.
    pub alpha: f64,
    /// Relaxation exponent in the sample frequency.
    pub gamma: f64,
    /// Stop when the fraction of changed labels between target updates is below this.
    pub delta: f64,
    pub eta0: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    pub batch: usize,
    pub k: usize,
    pub update_interval: usize,
    /// Clustering-phase iteration cap (before scaling).
    pub max_iters: usize,
    /// Greedy per-layer pretraining iterations (before scaling).
    pub pretrain_iters: usize,
    /// End-to-end autoencoder fine-tuning iterations (before scaling).
    pub finetune_iters: usize,
    /// Divisor applied to every iteration count.
    pub scale: usize,
    pub dropout: f64,
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    pub kmeans_restarts: usize,
    pub spread: Spread,
    pub ablation: Ablation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            alpha: 1.0,
            gamma: 2.0,
            delta: 0.001,
            eta0: 0.01,
            lr_decay_factor: 10.0,
            lr_decay_every: 20_000,
            batch: 256,
            k: 10,
            update_interval: 80,
            max_iters: 20_000,
            pretrain_iters: 100_000,
            finetune_iters: 200_000,
            scale: 1,
            dropout: 0.2,
            hidden: vec![500, 500, 1000],
            embed_dim: 10,
            kmeans_restarts: 20,
            spread: Spread::Std,
            ablation: Ablation::default(),
        }
    }
}

impl TrainConfig {
    pub fn preset(preset: Preset) -> Self {
        let (batch, update_interval) = match preset {
            Preset::Mnist => (256, 80),
            Preset::Cifar10 => (128, 100),
            Preset::Cifar100 => (128, 120),
            Preset::Refuge => (8, 70),
        };
        Self {
            batch,
            update_interval,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return bad(format!("lambda must lie in (0,1), got {}", self.lambda));
        }
        if !(self.alpha > 0.0) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.gamma >= 0.0) {
            return bad(format!("gamma must be non-negative, got {}", self.gamma));
        }
        if !(self.delta > 0.0) {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        if !(self.eta0 > 0.0) || !(self.lr_decay_factor >= 1.0) {
            return bad("learning rate must be positive with decay factor >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0,1), got {}", self.dropout));
        }
        if self.batch == 0 || self.update_interval == 0 || self.scale == 0 {
            return bad("batch, update_interval and scale must be >= 1".into());
        }
        if self.k < 2 {
            return bad(format!("k must be >= 2, got {}", self.k));
        }
        if self.embed_dim == 0 || self.hidden.contains(&0) {
            return bad("layer widths must be positive".into());
        }
        if self.kmeans_restarts == 0 {
            return bad("kmeans_restarts must be >= 1".into());
        }
        Ok(())
    }

    /// Divides an iteration count by `scale`, keeping non-zero counts non-zero.
    pub fn scaled(&self, iters: usize) -> usize {
        if iters == 0 {
            0
        } else {
            (iters / self.scale.max(1)).max(1)
        }
    }

    /// Encoder widths `d_x, hidden.., embed_dim`.
    pub fn encoder_widths(&self, input_dim: usize) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(input_dim);
        w.extend_from_slice(&self.hidden);
        w.push(self.embed_dim);
        w
    }
}

/// Step learning rate `eta0 / factor^floor(iteration / step)` with the step
/// shortened by `scale`.
pub fn lr_at(iteration: usize, config: &TrainConfig) -> f64 {
    let step = (config.lr_decay_every / config.scale.max(1)).max(1);
    let decays = (iteration / step) as i32;
    config.eta0 / config.lr_decay_factor.powi(decays)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_defaults() {
        let c = TrainConfig::default();
        assert_eq!(c.lambda, 0.1);
        assert_eq!(c.delta, 0.001);
        assert_eq!(c.gamma, 2.0);
        assert_eq!(c.alpha, 1.0);
        assert_eq!(c.encoder_widths(784), vec![784, 500, 500, 1000, 10]);
        c.validate().unwrap();
    }

    #[test]
    fn presets() {
        assert_eq!(TrainConfig::preset(Preset::Mnist).update_interval, 80);
        assert_eq!(TrainConfig::preset(Preset::Cifar10).batch, 128);
        assert_eq!(TrainConfig::preset(Preset::Cifar100).update_interval, 120);
        assert_eq!(TrainConfig::preset(Preset::Refuge).batch, 8);
    }

    #[test]
    fn lr_schedule() {
        let c = TrainConfig::default();
        assert_eq!(lr_at(0, &c), 0.01);
        assert_eq!(lr_at(19_999, &c), 0.01);
        assert!((lr_at(20_000, &c) - 0.001).abs() < 1e-15);
        assert!((lr_at(45_000, &c) - 0.0001).abs() < 1e-15);
        let s = TrainConfig { scale: 100, ..c.clone() };
        assert!((lr_at(200, &s) - 0.001).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for it in (0..100_000).step_by(997) {
            let lr = lr_at(it, &c);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn validation_rejects() {
        let base = TrainConfig::default();
        for bad in [
            TrainConfig { lambda: 1.0, ..base.clone() },
            TrainConfig { lambda: 0.0, ..base.clone() },
            TrainConfig { delta: 0.0, ..base.clone() },
            TrainConfig { k: 1, ..base.clone() },
            TrainConfig { batch: 0, ..base.clone() },
            TrainConfig { update_interval: 0, ..base.clone() },
            TrainConfig { gamma: -1.0, ..base.clone() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn scaling_keeps_nonzero_counts() {
        let c = TrainConfig { scale: 1000, ..TrainConfig::default() };
        assert_eq!(c.scaled(0), 0);
        assert_eq!(c.scaled(10), 1);
        assert_eq!(c.scaled(100_000), 100);
    }

    #[test]
    fn variant_names() {
        let mut a = Ablation::default();
        assert_eq!(a.variant_name(), "StatDEC-1");
        a.stat_pooling = false;
        assert_eq!(a.variant_name(), "StatDEC-2");
        a.weighted_target = false;
        assert_eq!(a.variant_name(), "baseline-IDEC");
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: TrainConfig = serde_json::from_str(r#"{"k": 3, "ablation": {"stat_pooling": false}}"#).unwrap();
        assert_eq!(c.k, 3);
        assert_eq!(c.lambda, 0.1);
        assert!(c.ablation.weighted_target);
        assert!(!c.ablation.stat_pooling);
    }
}
