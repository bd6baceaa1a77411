//! Self-adaptive thresholds and the fairness regulariser.
//!
//! Three exponential moving averages are tracked over the weak-view
//! predictions of the unlabeled batch:
//!
//! * `τ_t`, the global threshold, from the mean top-1 confidence,
//! * `p̃_t(c)`, the mean predicted probability of each class,
//! * `h̃_t`, the histogram of hard (argmax) predictions.
//!
//! All three start at `1/C`. The per-class threshold is
//! `τ_t(c) = p̃_t(c) / max_c' p̃_t(c') · τ_t`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{argmax, max_of, safe_ln, LOG_FLOOR};

/// Floor applied to histogram entries before they are used as divisors.
pub const HIST_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveState {
    pub tau_global: f64,
    pub p_tilde: Vec<f64>,
    pub h_tilde: Vec<f64>,
    pub momentum: f64,
    pub step: u64,
}

fn check_batch(q: &Array2<f64>, c: usize) -> Result<()> {
    if q.nrows() == 0 {
        return Err(Error::batch("adaptive update on an empty batch"));
    }
    if q.ncols() != c {
        return Err(Error::shape(format!(
            "adaptive state tracks {c} classes, batch has {}",
            q.ncols()
        )));
    }
    Ok(())
}

/// Normalised histogram of argmax classes over `rows`.
fn hard_histogram<'a>(rows: impl Iterator<Item = ndarray::ArrayView1<'a, f64>>, c: usize) -> (Vec<f64>, usize) {
    let mut hist = vec![0.0; c];
    let mut n = 0;
    for row in rows {
        hist[argmax(row)] += 1.0;
        n += 1;
    }
    if n > 0 {
        hist.iter_mut().for_each(|h| *h /= n as f64);
    }
    (hist, n)
}

fn sum_norm(v: &[f64]) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

impl AdaptiveState {
    /// Initial state at `t = 0`.
    pub fn new(num_classes: usize, momentum: f64) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::config("adaptive state needs at least one class"));
        }
        if !(0.0..=1.0).contains(&momentum) {
            return Err(Error::config(format!(
                "EMA momentum must lie in [0, 1], got {momentum}"
            )));
        }
        let init = 1.0 / num_classes as f64;
        Ok(AdaptiveState {
            tau_global: init,
            p_tilde: vec![init; num_classes],
            h_tilde: vec![init; num_classes],
            momentum,
            step: 0,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.p_tilde.len()
    }

    /// Advance `τ_t` and `p̃_t` by one step with the weak predictions of a
    /// batch. Increments `t`.
    pub fn update_sat(&self, q_w: &Array2<f64>) -> Result<Self> {
        let c = self.num_classes();
        check_batch(q_w, c)?;
        let n = q_w.nrows() as f64;
        let lam = self.momentum;
        let mean_conf = q_w.rows().into_iter().map(max_of).sum::<f64>() / n;
        let mean_prob = q_w.sum_axis(ndarray::Axis(0)) / n;
        let mut next = self.clone();
        next.tau_global = lam * self.tau_global + (1.0 - lam) * mean_conf;
        for (p, m) in next.p_tilde.iter_mut().zip(mean_prob.iter()) {
            *p = lam * *p + (1.0 - lam) * m;
        }
        next.step += 1;
        Ok(next)
    }

    /// Advance `h̃_t` with the normalised histogram of hard weak predictions.
    /// Leaves `t` alone.
    pub fn update_fairness_hist(&self, q_w: &Array2<f64>) -> Result<Self> {
        let c = self.num_classes();
        check_batch(q_w, c)?;
        let (hist, _) = hard_histogram(q_w.rows().into_iter(), c);
        let lam = self.momentum;
        let mut next = self.clone();
        for (h, obs) in next.h_tilde.iter_mut().zip(hist) {
            *h = lam * *h + (1.0 - lam) * obs;
        }
        Ok(next)
    }

    /// Both recurrences for one training step.
    pub fn observe(&self, q_w: &Array2<f64>) -> Result<Self> {
        self.update_sat(q_w)?.update_fairness_hist(q_w)
    }

    pub fn class_thresholds(&self) -> Result<Vec<f64>> {
        let max = self.p_tilde.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max > 0.0) {
            return Err(Error::Internal("class estimates are all zero".into()));
        }
        Ok(self.p_tilde.iter().map(|&p| p / max * self.tau_global).collect())
    }

    /// Confidence mask under the per-class thresholds (`≥`).
    pub fn confident(&self, q_w: &Array2<f64>) -> Result<Vec<bool>> {
        let th = self.class_thresholds()?;
        Ok(q_w.rows().into_iter().map(|r| max_of(r) >= th[argmax(r)]).collect())
    }

    pub fn saf_loss(&self, q_w: &Array2<f64>, q_s: &Array2<f64>) -> Result<f64> {
        self.saf_loss_grad(q_w, q_s).map(|(v, _)| v)
    }

    /// `Σ_c a(c) log b(c)` with `a = SumNorm(p̃/h̃)` and `b = SumNorm(p̄/h̄)`,
    /// plus its gradient with respect to `q_s`. The value is the negated
    /// cross-entropy, so it is ≤ 0 and decreases as the confident strong
    /// predictions spread over classes in proportion to `a`.
    pub fn saf_loss_grad(&self, q_w: &Array2<f64>, q_s: &Array2<f64>) -> Result<(f64, Array2<f64>)> {
        let c = self.num_classes();
        check_batch(q_w, c)?;
        if q_s.dim() != q_w.dim() {
            return Err(Error::shape(format!(
                "weak predictions {:?} vs strong predictions {:?}",
                q_w.dim(),
                q_s.dim()
            )));
        }
        let n = q_w.nrows();
        let mask = self.confident(q_w)?;
        let mut grad = Array2::zeros(q_s.dim());
        let confident: Vec<usize> = (0..n).filter(|&j| mask[j]).collect();
        if confident.is_empty() {
            log::warn!("fairness term skipped: no confident unlabeled predictions");
            return Ok((0.0, grad));
        }

        let mut p_bar = vec![0.0; c];
        for &j in &confident {
            for (acc, v) in p_bar.iter_mut().zip(q_s.row(j)) {
                *acc += v;
            }
        }
        p_bar.iter_mut().for_each(|v| *v /= n as f64);
        let (h_bar, _) = hard_histogram(confident.iter().map(|&j| q_s.row(j)), c);

        let h_bar_f: Vec<f64> = h_bar.iter().map(|h| h.max(HIST_FLOOR)).collect();
        let a = sum_norm(
            &self
                .p_tilde
                .iter()
                .zip(&self.h_tilde)
                .map(|(p, h)| p / h.max(HIST_FLOOR))
                .collect::<Vec<_>>(),
        );
        let r: Vec<f64> = p_bar.iter().zip(&h_bar_f).map(|(p, h)| p / h).collect();
        let s: f64 = r.iter().sum();
        let b: Vec<f64> = r.iter().map(|x| x / s).collect();
        let value: f64 = a.iter().zip(&b).map(|(ac, bc)| ac * safe_ln(*bc)).sum();

        // dL/db_c, then through the normalisation and the 1/h̄ scaling
        let g: Vec<f64> = a
            .iter()
            .zip(&b)
            .map(|(ac, bc)| if *bc > LOG_FLOOR { ac / bc } else { 0.0 })
            .collect();
        let gb: f64 = g.iter().zip(&b).map(|(gc, bc)| gc * bc).sum();
        let d_pbar: Vec<f64> = (0..c).map(|k| (g[k] - gb) / s / h_bar_f[k]).collect();
        for &j in &confident {
            for (k, d) in d_pbar.iter().enumerate() {
                grad[[j, k]] = d / n as f64;
            }
        }
        Ok((value, grad))
    }
}
