use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::LayoutKind;
use crate::losses::{LossWeights, PseudoLabel};
use crate::nn::ModelSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    /// Labeled examples per step, `B`.
    pub batch_size: usize,
    /// Unlabeled examples per labeled example, `μ`.
    pub mu: usize,
    /// Total optimizer steps, `K`.
    pub steps: u64,
    pub lr: f64,
    pub momentum: f64,
    pub nesterov: bool,
    pub weight_decay: f64,
    /// Apply weight decay directly to the weights instead of adding it to the
    /// gradient.
    pub decoupled_weight_decay: bool,
    pub ema_decay: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            batch_size: 64,
            mu: 7,
            steps: 1 << 20,
            lr: 0.03,
            momentum: 0.9,
            nesterov: true,
            weight_decay: 5e-4,
            decoupled_weight_decay: false,
            ema_decay: 0.999,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub lambda_u: f64,
    pub lambda_dc: f64,
    pub tau: f64,
    pub hard_pseudo: bool,
    pub stop_grad_labeled_delta: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_u: 1.0,
            lambda_dc: 1.0,
            tau: 0.95,
            hard_pseudo: true,
            stop_grad_labeled_delta: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub enabled: bool,
    pub alpha: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            enabled: true,
            alpha: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlusConfig {
    pub enabled: bool,
    pub lambda_saf: f64,
    pub ema_momentum: f64,
    /// Advance the adaptive statistics before computing the step's losses.
    pub update_before_loss: bool,
}

impl Default for PlusConfig {
    fn default() -> Self {
        PlusConfig {
            enabled: false,
            lambda_saf: 0.05,
            ema_momentum: 0.999,
            update_before_loss: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Weak jitter scale for vector inputs.
    pub jitter_sigma: f64,
    /// Strong jitter scale as a multiple of `jitter_sigma`.
    pub strong_scale: f64,
    /// Reflection padding before the random crop, in pixels.
    pub pad: usize,
    pub n_ops: usize,
    pub magnitude: u32,
    /// Cutout side as a fraction of the image width.
    pub cutout: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            jitter_sigma: 0.1,
            strong_scale: 3.0,
            pad: 4,
            n_ops: 2,
            magnitude: 10,
            cutout: 0.5,
        }
    }
}

/// Every hyperparameter of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub layout: LayoutKind,
    pub model: ModelSpec,
    pub optim: OptimConfig,
    pub loss: LossConfig,
    pub fusion: FusionConfig,
    pub plus: PlusConfig,
    pub augment: AugmentConfig,
    /// Evaluate every this many steps; 0 disables periodic evaluation.
    pub eval_every: u64,
    /// Checkpoint every this many steps; 0 disables periodic checkpoints.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            layout: LayoutKind::HighI3,
            model: ModelSpec::default(),
            optim: OptimConfig::default(),
            loss: LossConfig::default(),
            fusion: FusionConfig::default(),
            plus: PlusConfig::default(),
            augment: AugmentConfig::default(),
            eval_every: 1024,
            checkpoint_every: 1024,
        }
    }
}

fn unit_interval(name: &str, v: f64, open_low: bool, open_high: bool) -> Result<()> {
    let lo_ok = if open_low { v > 0.0 } else { v >= 0.0 };
    let hi_ok = if open_high { v < 1.0 } else { v <= 1.0 };
    if lo_ok && hi_ok {
        Ok(())
    } else {
        Err(Error::config(format!("{name} = {v} is out of range")))
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let o = &self.optim;
        if o.batch_size == 0 {
            return Err(Error::config("optim.batch_size must be >= 1"));
        }
        if o.mu == 0 {
            return Err(Error::config("optim.mu must be >= 1"));
        }
        if o.steps == 0 {
            return Err(Error::config("optim.steps must be > 0"));
        }
        if !(o.lr > 0.0 && o.lr.is_finite()) {
            return Err(Error::config(format!("optim.lr = {} must be positive", o.lr)));
        }
        unit_interval("optim.momentum", o.momentum, false, true)?;
        if !(o.weight_decay >= 0.0 && o.weight_decay.is_finite()) {
            return Err(Error::config(format!(
                "optim.weight_decay = {} must be >= 0",
                o.weight_decay
            )));
        }
        unit_interval("optim.ema_decay", o.ema_decay, false, false)?;
        unit_interval("loss.tau", self.loss.tau, false, false)?;
        self.weights().validate()?;
        if !(self.fusion.alpha > 0.0 && self.fusion.alpha < 0.5) {
            return Err(Error::config(format!(
                "fusion.alpha = {} must lie in (0, 0.5)",
                self.fusion.alpha
            )));
        }
        unit_interval("plus.ema_momentum", self.plus.ema_momentum, false, true)?;
        if !(self.augment.jitter_sigma >= 0.0 && self.augment.jitter_sigma.is_finite()) {
            return Err(Error::config("augment.jitter_sigma must be >= 0"));
        }
        if !(self.augment.strong_scale >= 1.0 && self.augment.strong_scale.is_finite()) {
            return Err(Error::config("augment.strong_scale must be >= 1"));
        }
        unit_interval("augment.cutout", self.augment.cutout, false, false)?;
        if self.augment.magnitude > 10 {
            return Err(Error::config("augment.magnitude must be at most 10"));
        }
        if self.layout == LayoutKind::HighI1 && !o.batch_size.is_multiple_of(2 * (o.mu + 1)) {
            return Err(Error::config(format!(
                "layout high_i1 needs optim.batch_size divisible by 2(mu+1) = {}",
                2 * (o.mu + 1)
            )));
        }
        Ok(())
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            lambda_u: self.loss.lambda_u,
            lambda_dc: self.loss.lambda_dc,
            lambda_saf: if self.plus.enabled { self.plus.lambda_saf } else { 0.0 },
        }
    }

    pub fn pseudo_label(&self) -> PseudoLabel {
        if self.loss.hard_pseudo {
            PseudoLabel::Hard
        } else {
            PseudoLabel::Soft
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn alpha_range() {
        let mut c = TrainConfig::default();
        c.fusion.alpha = 0.5;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.fusion.alpha = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn high_i1_divisibility() {
        let mut c = TrainConfig {
            layout: LayoutKind::HighI1,
            ..Default::default()
        };
        assert!(c.validate().is_ok());
        c.optim.batch_size = 8;
        assert!(c.validate().is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = TrainConfig::default();
        let text = toml::to_string(&c).unwrap();
        let back: TrainConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<TrainConfig>("[loss]\nlambda_x = 1.0\n").is_err());
    }
}
