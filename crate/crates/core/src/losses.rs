//! Loss terms over grouped class-probability predictions.
//!
//! Every term comes in two forms: a value-only function and a `*_grad`
//! variant that also returns the gradient with respect to the probability
//! vectors it reads. The trainer chains those through the softmax.

use ndarray::{Array1, Array2, ArrayView1, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::GroupedRows;

/// Floor applied to every probability before taking a logarithm.
pub const LOG_FLOOR: f64 = 1e-12;
const SIMPLEX_TOL: f64 = 1e-6;

pub(crate) fn safe_ln(p: f64) -> f64 {
    p.max(LOG_FLOOR).ln()
}

/// d/dp of `safe_ln(p)`; zero where the floor is active.
fn safe_ln_grad(p: f64) -> f64 {
    if p > LOG_FLOOR {
        1.0 / p
    } else {
        0.0
    }
}

/// First index of the largest entry.
pub fn argmax(v: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn max_of(v: ArrayView1<'_, f64>) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Per-labeled-index grouping of the model's class probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupedPredictions {
    pub p_w: Array2<f64>,
    pub p_s: Array2<f64>,
    /// `μB` rows, row `i·μ + m − 1` is member `m` of group `i`.
    pub q_w: Array2<f64>,
    pub q_s: Array2<f64>,
    pub labels: Vec<usize>,
    pub mu: usize,
}

impl GroupedPredictions {
    /// Validate shapes, labels and simplex membership of every row.
    pub fn new(rows: GroupedRows, labels: Vec<usize>) -> Result<Self> {
        let GroupedRows { p_w, p_s, q_w, q_s, mu } = rows;
        let b = p_w.nrows();
        let c = p_w.ncols();
        if p_s.dim() != (b, c) || q_w.dim() != (b * mu, c) || q_s.dim() != (b * mu, c) {
            return Err(Error::shape(format!(
                "inconsistent prediction shapes: p_w {:?}, p_s {:?}, q_w {:?}, q_s {:?} (mu={mu})",
                p_w.dim(),
                p_s.dim(),
                q_w.dim(),
                q_s.dim()
            )));
        }
        if labels.len() != b {
            return Err(Error::shape(format!("{} labels for {b} labeled rows", labels.len())));
        }
        check_labels(&labels, c)?;
        for (name, arr) in [("p_w", &p_w), ("p_s", &p_s), ("q_w", &q_w), ("q_s", &q_s)] {
            for (r, row) in arr.rows().into_iter().enumerate() {
                let sum: f64 = row.sum();
                if (sum - 1.0).abs() > SIMPLEX_TOL || row.iter().any(|&v| v < 0.0 || !v.is_finite()) {
                    return Err(Error::shape(format!(
                        "{name} row {r} is not a probability vector (sum {sum})"
                    )));
                }
            }
        }
        Ok(GroupedPredictions {
            p_w,
            p_s,
            q_w,
            q_s,
            labels,
            mu,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.p_w.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.p_w.ncols()
    }
}

fn check_labels(labels: &[usize], c: usize) -> Result<()> {
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::data(format!("label {bad} out of range for {c} classes")));
    }
    Ok(())
}

/// `−(1/B) Σ log p_i^w[y_i]`.
pub fn supervised_loss(p_w: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    supervised_loss_grad(p_w, labels).map(|(v, _)| v)
}

pub fn supervised_loss_grad(p_w: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let b = p_w.nrows();
    if labels.len() != b || b == 0 {
        return Err(Error::shape(format!("{} labels for {b} rows", labels.len())));
    }
    check_labels(labels, p_w.ncols())?;
    let mut sum = 0.0;
    let mut grad = Array2::zeros(p_w.dim());
    for (i, &y) in labels.iter().enumerate() {
        let p = p_w[[i, y]];
        sum += safe_ln(p);
        grad[[i, y]] = -safe_ln_grad(p) / b as f64;
    }
    Ok((-sum / b as f64, grad))
}

/// Confidence threshold for the instance-wise consistency term.
#[derive(Clone, Debug, PartialEq)]
pub enum Threshold {
    /// One value for every class; passes when `max q^w > τ`.
    Fixed(f64),
    /// Per-class values indexed by the pseudo-label; passes when
    /// `max q^w ≥ τ(argmax q^w)`.
    PerClass(Vec<f64>),
}

impl Threshold {
    pub fn passes(&self, confidence: f64, class: usize) -> bool {
        match self {
            Threshold::Fixed(t) => confidence > *t,
            Threshold::PerClass(ts) => confidence >= ts[class],
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoLabel {
    /// Cross-entropy against the argmax class of the weak view.
    #[default]
    Hard,
    /// Cross-entropy against the full weak distribution.
    Soft,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstanceLoss {
    pub value: f64,
    pub mask_rate: f64,
    pub mask: Vec<bool>,
}

/// Mask of unlabeled rows whose weak-view confidence clears the threshold.
pub fn confidence_mask(q_w: &Array2<f64>, threshold: &Threshold) -> Result<Vec<bool>> {
    if let Threshold::PerClass(ts) = threshold {
        if ts.len() != q_w.ncols() {
            return Err(Error::shape(format!(
                "{} per-class thresholds for {} classes",
                ts.len(),
                q_w.ncols()
            )));
        }
    }
    Ok(q_w
        .rows()
        .into_iter()
        .map(|row| threshold.passes(max_of(row), argmax(row)))
        .collect())
}

/// `(1/μB) Σ_j 1(conf_j) · H(target_j, q_j^s)`; the weak view is treated as
/// a constant target.
pub fn instance_consistency_loss(
    q_w: &Array2<f64>,
    q_s: &Array2<f64>,
    threshold: &Threshold,
    pseudo: PseudoLabel,
) -> Result<InstanceLoss> {
    instance_consistency_loss_grad(q_w, q_s, threshold, pseudo).map(|(l, _)| l)
}

/// Also returns the gradient with respect to `q_s`.
pub fn instance_consistency_loss_grad(
    q_w: &Array2<f64>,
    q_s: &Array2<f64>,
    threshold: &Threshold,
    pseudo: PseudoLabel,
) -> Result<(InstanceLoss, Array2<f64>)> {
    if q_w.dim() != q_s.dim() {
        return Err(Error::shape(format!(
            "weak predictions {:?} vs strong predictions {:?}",
            q_w.dim(),
            q_s.dim()
        )));
    }
    let n = q_w.nrows();
    if n == 0 {
        return Err(Error::shape("instance consistency on an empty batch"));
    }
    let mask = confidence_mask(q_w, threshold)?;
    let scale = 1.0 / n as f64;
    let mut sum = 0.0;
    let mut grad = Array2::zeros(q_s.dim());
    for (j, &keep) in mask.iter().enumerate() {
        if !keep {
            continue;
        }
        let w = q_w.row(j);
        let s = q_s.row(j);
        match pseudo {
            PseudoLabel::Hard => {
                let y = argmax(w);
                sum += -safe_ln(s[y]);
                grad[[j, y]] = -safe_ln_grad(s[y]) * scale;
            }
            PseudoLabel::Soft => {
                for c in 0..w.len() {
                    sum += -w[c] * safe_ln(s[c]);
                    grad[[j, c]] = -w[c] * safe_ln_grad(s[c]) * scale;
                }
            }
        }
    }
    let passed = mask.iter().filter(|&&m| m).count();
    Ok((
        InstanceLoss {
            value: sum * scale,
            mask_rate: passed as f64 / n as f64,
            mask,
        },
        grad,
    ))
}

/// Per-group prediction deltas `Δ^L_i = p_i^w − p_i^s` and
/// `Δ^U_i = (1/μ) Σ_m (q_{i,m}^w − q_{i,m}^s)`.
pub fn prediction_deltas(g: &GroupedPredictions) -> Result<(Array2<f64>, Array2<f64>)> {
    let mu = g.mu;
    if mu == 0 {
        return Err(Error::config("delta consistency needs mu >= 1"));
    }
    let b = g.batch_size();
    let c = g.num_classes();
    let delta_l = &g.p_w - &g.p_s;
    let mut delta_u = Array2::zeros((b, c));
    for i in 0..b {
        let mut acc = Array1::<f64>::zeros(c);
        for m in 0..mu {
            let j = i * mu + m;
            Zip::from(&mut acc)
                .and(g.q_w.row(j))
                .and(g.q_s.row(j))
                .for_each(|a, &w, &s| *a += w - s);
        }
        delta_u.row_mut(i).assign(&(acc / mu as f64));
    }
    Ok((delta_l, delta_u))
}

/// `(1/B) Σ_i ‖Δ^L_i − Δ^U_i‖²`.
pub fn delta_consistency_loss(g: &GroupedPredictions) -> Result<f64> {
    delta_consistency_loss_grad(g, true).map(|(v, _)| v)
}

/// Value plus gradient for all four prediction arrays. With
/// `stop_grad_labeled` the labeled delta is a fixed target and `p_w`, `p_s`
/// receive zero gradient from this term.
pub fn delta_consistency_loss_grad(g: &GroupedPredictions, stop_grad_labeled: bool) -> Result<(f64, GroupedRows)> {
    let (delta_l, delta_u) = prediction_deltas(g)?;
    let b = g.batch_size();
    let mu = g.mu;
    let diff = &delta_l - &delta_u;
    let value = diff.iter().map(|d| d * d).sum::<f64>() / b as f64;

    let mut grad = GroupedRows::zeros(b, mu, g.num_classes());
    // dL/dΔ^L = 2/B · diff, dL/dΔ^U = −2/B · diff
    let d_l = &diff * (2.0 / b as f64);
    if !stop_grad_labeled {
        grad.p_w.assign(&d_l);
        grad.p_s.assign(&(-&d_l));
    }
    for i in 0..b {
        let d_u = d_l.row(i).mapv(|v| -v / mu as f64);
        for m in 0..mu {
            let j = i * mu + m;
            grad.q_w.row_mut(j).assign(&d_u);
            grad.q_s.row_mut(j).assign(&(-&d_u));
        }
    }
    Ok((value, grad))
}

/// Relative weights of the loss terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_u: f64,
    pub lambda_dc: f64,
    pub lambda_saf: f64,
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_u", self.lambda_u),
            ("lambda_dc", self.lambda_dc),
            ("lambda_saf", self.lambda_saf),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Raw, unweighted loss terms of one step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub l_sup: f64,
    pub l_unsup: f64,
    pub l_dc: f64,
    pub l_saf: Option<f64>,
    pub mask_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_sup: f64,
    pub l_unsup: f64,
    pub l_dc: f64,
    pub l_saf: Option<f64>,
    pub total: f64,
    pub mask_rate: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
            && self.l_sup.is_finite()
            && self.l_unsup.is_finite()
            && self.l_dc.is_finite()
            && self.l_saf.is_none_or(f64::is_finite)
    }
}

/// `L^L + λ_u L^U + λ_DC L^DC`, plus `λ_SAF L^SAF` in plus mode.
pub fn total_loss(parts: &LossParts, weights: &LossWeights, plus_mode: bool) -> Result<LossBreakdown> {
    weights.validate()?;
    let mut total = parts.l_sup + weights.lambda_u * parts.l_unsup + weights.lambda_dc * parts.l_dc;
    let l_saf = if plus_mode {
        let saf = parts.l_saf.unwrap_or(0.0);
        total += weights.lambda_saf * saf;
        Some(saf)
    } else {
        None
    };
    Ok(LossBreakdown {
        l_sup: parts.l_sup,
        l_unsup: parts.l_unsup,
        l_dc: parts.l_dc,
        l_saf,
        total,
        mask_rate: parts.mask_rate,
    })
}
