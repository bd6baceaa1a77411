use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::optim::{cosine_lr, sgd_step, EmaModel};
use crate::adaptive::AdaptiveState;
use crate::data::{draw_aug_params, get_aug, AugPolicy, AugRealization, DatasetSplit, Sample};
use crate::error::{Error, Result};
use crate::fusion::FusionPlan;
use crate::layout::{interdigitate, GroupedRows};
use crate::losses::{
    delta_consistency_loss_grad, instance_consistency_loss_grad, supervised_loss_grad, total_loss, GroupedPredictions,
    LossBreakdown, LossParts, Threshold,
};
use crate::nn::{softmax, softmax_backward, stack_features, InputShape, Network};

const DATA_STREAM: u64 = 1;
const AUG_STREAM: u64 = 2;

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    /// Number of completed optimizer steps.
    pub step: u64,
    pub lr: f64,
    pub l_sup: f64,
    pub l_unsup: f64,
    pub l_dc: f64,
    pub l_saf: Option<f64>,
    pub mask_rate: f64,
    pub tau_global: f64,
    pub eval_error: Option<f64>,
}

/// Everything that changes during training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub step: u64,
    pub params: Vec<f64>,
    pub buffers: Vec<f64>,
    pub momentum: Vec<f64>,
    pub ema: EmaModel,
    pub adaptive: Option<AdaptiveState>,
    pub data_rng: ChaCha8Rng,
    pub aug_rng: ChaCha8Rng,
    pub history: Vec<MetricRecord>,
}

/// The augmented views consumed by one step, grouped per labeled index.
#[derive(Clone, Debug, PartialEq)]
pub struct StepBatch {
    pub labels: Vec<usize>,
    pub labeled_w: Vec<Sample>,
    pub labeled_s: Vec<Sample>,
    /// Member `m` of group `i` at index `i·μ + m`.
    pub unlabeled_w: Vec<Sample>,
    pub unlabeled_s: Vec<Sample>,
    pub labeled_indices: Vec<usize>,
    pub unlabeled_indices: Vec<usize>,
    pub realizations: Vec<(AugRealization, AugRealization)>,
}

/// Loss value, gradient and the advanced adaptive state for one batch.
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub breakdown: LossBreakdown,
    pub grad: Vec<f64>,
    pub adaptive: Option<AdaptiveState>,
    pub tau_global: f64,
}

/// Immutable training context: configuration, network and fusion operator.
#[derive(Clone, Debug)]
pub struct Trainer {
    cfg: TrainConfig,
    net: Network,
    fusion: Option<FusionPlan>,
    policy: AugPolicy,
}

fn input_shape(sample: &Sample) -> InputShape {
    match sample {
        Sample::Vector(v) => InputShape::Vector(v.len()),
        Sample::Image(img) => InputShape::Image {
            channels: img.channels,
            height: img.height,
            width: img.width,
        },
    }
}

impl Trainer {
    /// Build the network and fusion operator for inputs shaped like the
    /// split's labeled samples.
    pub fn new(cfg: TrainConfig, split: &DatasetSplit) -> Result<Self> {
        cfg.validate()?;
        let first = split
            .labeled
            .first()
            .map(|(s, _)| s)
            .ok_or_else(|| Error::data("no labeled samples"))?;
        let shape = input_shape(first);
        let policy = match shape {
            InputShape::Vector(dim) => AugPolicy::Jitter {
                dim,
                sigma_weak: cfg.augment.jitter_sigma,
                sigma_strong: cfg.augment.jitter_sigma * cfg.augment.strong_scale,
            },
            InputShape::Image { height, width, .. } => AugPolicy::Image {
                height,
                width,
                pad: cfg.augment.pad,
                n_ops: cfg.augment.n_ops,
                magnitude: cfg.augment.magnitude,
                cutout: cfg.augment.cutout,
            },
        };
        let net = Network::new(&cfg.model, shape, split.num_classes)?;
        Self::with_network(cfg, net, policy)
    }

    pub fn with_network(cfg: TrainConfig, net: Network, policy: AugPolicy) -> Result<Self> {
        cfg.validate()?;
        let q = 2 * (1 + cfg.optim.mu) * cfg.optim.batch_size;
        let fusion = if cfg.fusion.enabled {
            Some(FusionPlan::circular_shift(q, cfg.fusion.alpha)?)
        } else {
            None
        };
        Ok(Trainer {
            cfg,
            net,
            fusion,
            policy,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn policy(&self) -> &AugPolicy {
        &self.policy
    }

    pub fn fusion(&self) -> Option<&FusionPlan> {
        self.fusion.as_ref()
    }

    pub fn init_state(&self) -> Result<TrainState> {
        let seed = self.cfg.seed;
        let (params, buffers) = self.net.init(seed);
        let mut data_rng = ChaCha8Rng::seed_from_u64(seed);
        data_rng.set_stream(DATA_STREAM);
        let mut aug_rng = ChaCha8Rng::seed_from_u64(seed);
        aug_rng.set_stream(AUG_STREAM);
        let adaptive = if self.cfg.plus.enabled {
            Some(AdaptiveState::new(self.net.num_classes(), self.cfg.plus.ema_momentum)?)
        } else {
            None
        };
        Ok(TrainState {
            step: 0,
            momentum: vec![0.0; params.len()],
            ema: EmaModel::new(&params, &buffers, self.cfg.optim.ema_decay),
            params,
            buffers,
            adaptive,
            data_rng,
            aug_rng,
            history: Vec::new(),
        })
    }

    /// Sample `B` labeled and `μB` unlabeled items with replacement and
    /// augment each group with its own weak/strong realization pair. When the
    /// split has no unlabeled pool the labeled inputs stand in for it.
    pub fn draw_batch(&self, state: &mut TrainState, split: &DatasetSplit) -> Result<StepBatch> {
        let (b, mu) = (self.cfg.optim.batch_size, self.cfg.optim.mu);
        if split.labeled.is_empty() {
            return Err(Error::data("no labeled samples"));
        }
        let n_u = if split.unlabeled.is_empty() {
            split.labeled.len()
        } else {
            split.unlabeled.len()
        };
        let unlabeled = |j: usize| -> &Sample {
            if split.unlabeled.is_empty() {
                &split.labeled[j].0
            } else {
                &split.unlabeled[j]
            }
        };
        let labeled_indices: Vec<usize> = (0..b)
            .map(|_| state.data_rng.random_range(0..split.labeled.len()))
            .collect();
        let unlabeled_indices: Vec<usize> = (0..b * mu).map(|_| state.data_rng.random_range(0..n_u)).collect();

        let mut batch = StepBatch {
            labels: Vec::with_capacity(b),
            labeled_w: Vec::with_capacity(b),
            labeled_s: Vec::with_capacity(b),
            unlabeled_w: Vec::with_capacity(b * mu),
            unlabeled_s: Vec::with_capacity(b * mu),
            labeled_indices,
            unlabeled_indices,
            realizations: Vec::with_capacity(b),
        };
        for i in 0..b {
            let (x, y) = &split.labeled[batch.labeled_indices[i]];
            let group: Vec<Sample> = batch.unlabeled_indices[i * mu..(i + 1) * mu]
                .iter()
                .map(|&j| unlabeled(j).clone())
                .collect();
            let (weak, strong) = draw_aug_params(&self.policy, &mut state.aug_rng);
            let views = get_aug(x, &group, mu, &weak, &strong)?;
            batch.labels.push(*y);
            batch.labeled_w.push(views.labeled_w);
            batch.labeled_s.push(views.labeled_s);
            batch.unlabeled_w.extend(views.unlabeled_w);
            batch.unlabeled_s.extend(views.unlabeled_s);
            batch.realizations.push((weak, strong));
        }
        Ok(batch)
    }

    /// Forward the interdigitated batch, compute every loss term and
    /// backpropagate. Normalization buffers are updated in place.
    pub fn forward_backward(
        &self,
        params: &[f64],
        buffers: &mut [f64],
        adaptive: Option<&AdaptiveState>,
        batch: &StepBatch,
    ) -> Result<StepOutput> {
        let cfg = &self.cfg;
        let ordered = interdigitate(
            batch.labeled_w.clone(),
            batch.labeled_s.clone(),
            batch.unlabeled_w.clone(),
            batch.unlabeled_s.clone(),
            cfg.layout,
        )?;
        let feats: Vec<Vec<f64>> = ordered.samples().map(Sample::features).collect();
        let x = stack_features(&feats)?;

        let (z, tape) = self.net.embed_train(params, buffers, &x)?;
        let z = match &self.fusion {
            Some(plan) => plan.apply(&z)?,
            None => z,
        };
        let probs = softmax(&self.net.classify(params, &z));
        if probs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite predictions; labeled indices {:?}, unlabeled indices {:?}",
                batch.labeled_indices, batch.unlabeled_indices
            )));
        }
        let g = GroupedPredictions::new(ordered.deinterleave(&probs)?, batch.labels.clone())?;

        let plus = cfg.plus.enabled;
        let advanced = match (plus, adaptive) {
            (true, Some(a)) => Some(a.observe(&g.q_w)?),
            (true, None) => return Err(Error::Internal("plus mode without adaptive state".into())),
            _ => None,
        };
        let basis = if cfg.plus.update_before_loss {
            advanced.as_ref()
        } else {
            adaptive.filter(|_| plus)
        };
        let threshold = match basis {
            Some(a) => Threshold::PerClass(a.class_thresholds()?),
            None => Threshold::Fixed(cfg.loss.tau),
        };

        let (l_sup, g_sup) = supervised_loss_grad(&g.p_w, &g.labels)?;
        let (inst, g_unsup) = instance_consistency_loss_grad(&g.q_w, &g.q_s, &threshold, cfg.pseudo_label())?;
        let (l_dc, g_dc) = delta_consistency_loss_grad(&g, cfg.loss.stop_grad_labeled_delta)?;
        let saf = basis.map(|a| a.saf_loss_grad(&g.q_w, &g.q_s)).transpose()?;

        let weights = cfg.weights();
        let breakdown = total_loss(
            &LossParts {
                l_sup,
                l_unsup: inst.value,
                l_dc,
                l_saf: saf.as_ref().map(|(v, _)| *v),
                mask_rate: inst.mask_rate,
            },
            &weights,
            plus,
        )?;
        if !breakdown.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss {breakdown:?}; labeled indices {:?}, unlabeled indices {:?}",
                batch.labeled_indices, batch.unlabeled_indices
            )));
        }

        let GroupedRows {
            mut p_w,
            mut p_s,
            mut q_w,
            mut q_s,
            mu,
        } = g_dc;
        for a in [&mut p_w, &mut p_s, &mut q_w, &mut q_s] {
            a.mapv_inplace(|v| v * weights.lambda_dc);
        }
        p_w += &g_sup;
        q_s.scaled_add(weights.lambda_u, &g_unsup);
        if let Some((_, g_saf)) = &saf {
            q_s.scaled_add(weights.lambda_saf, g_saf);
        }
        let dprobs = ordered.interleave_rows(&GroupedRows { p_w, p_s, q_w, q_s, mu })?;
        let dlogits = softmax_backward(&probs, &dprobs);

        let mut grad = vec![0.0; params.len()];
        let dz = self.net.backward_head(params, &z, dlogits, &mut grad);
        let dz = match &self.fusion {
            Some(plan) => plan.backward(&dz)?,
            None => dz,
        };
        self.net.backward_embed(params, &tape, dz, &mut grad);

        let tau_global = advanced.as_ref().map_or(cfg.loss.tau, |a| a.tau_global);
        Ok(StepOutput {
            breakdown,
            grad,
            adaptive: advanced,
            tau_global,
        })
    }

    /// One optimizer step on a prepared batch.
    pub fn train_step_on(&self, state: &mut TrainState, batch: &StepBatch) -> Result<LossBreakdown> {
        let o = &self.cfg.optim;
        let lr = cosine_lr(state.step, o.steps, o.lr)?;
        let out = self.forward_backward(&state.params, &mut state.buffers, state.adaptive.as_ref(), batch)?;
        sgd_step(&mut state.params, &out.grad, &mut state.momentum, lr, o)?;
        if let Some(p) = state.params.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "parameter {p} became non-finite at step {} (lr {lr}, loss {:?})",
                state.step, out.breakdown
            )));
        }
        state.ema.update(&state.params, &state.buffers)?;
        state.adaptive = out.adaptive;
        state.step += 1;
        let b = &out.breakdown;
        state.history.push(MetricRecord {
            step: state.step,
            lr,
            l_sup: b.l_sup,
            l_unsup: b.l_unsup,
            l_dc: b.l_dc,
            l_saf: b.l_saf,
            mask_rate: b.mask_rate,
            tau_global: out.tau_global,
            eval_error: None,
        });
        Ok(out.breakdown)
    }

    /// Draw a batch from `split` and take one optimizer step on it.
    pub fn train_step(&self, state: &mut TrainState, split: &DatasetSplit) -> Result<LossBreakdown> {
        if state.step >= self.cfg.optim.steps {
            return Err(Error::config(format!(
                "training already finished ({} of {} steps)",
                state.step, self.cfg.optim.steps
            )));
        }
        let batch = self.draw_batch(state, split)?;
        self.train_step_on(state, &batch)
    }
}

/// Features of `samples` stacked row-wise.
pub fn feature_matrix<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> Result<Array2<f64>> {
    let rows: Vec<Vec<f64>> = samples.into_iter().map(Sample::features).collect();
    stack_features(&rows)
}
