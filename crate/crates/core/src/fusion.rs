//! Embedding fusion `Z' = (I + A) Z`.
//!
//! A fusion operator must keep `I + A` full rank, make every diagonal entry
//! strictly larger than the off-diagonal entries of its row, and give every
//! row unit L1 norm. The circular-shift instance sets `A = αU − αI` where `U`
//! is the cyclic superdiagonal, so row `i` of the fused embeddings is
//!
//! ```text
//! z'_i = (1 − α) z_i + α z_{(i+1) mod Q}
//! ```
//!
//! with `α` in `(0, 0.5)`.

use std::f64::consts::PI;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Rows ordered like the batch slots, columns are embedding dimensions.
pub type EmbeddingMatrix = Array2<f64>;

const ROW_NORM_TOL: f64 = 1e-9;
const RANK_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionKind {
    CircularShift,
    CustomMatrix,
}

/// An immutable `(I + A)` operator of size `Q`.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionPlan {
    size: usize,
    alpha: f64,
    kind: FusionKind,
    /// Only materialised for custom matrices.
    matrix: Option<Array2<f64>>,
}

/// Outcome of checking the three fusion desiderata. Never an error; callers
/// decide what to do with a failing report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub full_rank: bool,
    pub diagonal_dominant: bool,
    pub unit_row_norms: bool,
    pub determinant: f64,
    pub min_singular_value: f64,
    /// Smallest `diag − max off-diagonal` over all rows.
    pub min_dominance_margin: f64,
    /// Largest `| ‖row‖₁ − 1 |` over all rows.
    pub max_row_norm_error: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.full_rank && self.diagonal_dominant && self.unit_row_norms
    }
}

/// Circular-shift operator with validated `Q >= 2` and `0 < α < 0.5`.
pub fn build_circular_shift(q: usize, alpha: f64) -> Result<FusionPlan> {
    FusionPlan::circular_shift(q, alpha)
}

pub fn validate_desiderata(plan: &FusionPlan) -> ValidationReport {
    plan.validate()
}

pub fn apply_fusion(z: &EmbeddingMatrix, plan: &FusionPlan) -> Result<EmbeddingMatrix> {
    plan.apply(z)
}

impl FusionPlan {
    pub fn circular_shift(q: usize, alpha: f64) -> Result<Self> {
        if q < 2 {
            return Err(Error::config(format!("fusion size must be >= 2, got {q}")));
        }
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(Error::config(format!(
                "fusion strength alpha must lie in (0, 0.5), got {alpha}"
            )));
        }
        Ok(Self::circular_shift_unchecked(q, alpha))
    }

    /// Circular shift without range checks. `alpha = 0` gives the identity;
    /// used for ablations and tests.
    pub fn circular_shift_unchecked(q: usize, alpha: f64) -> Self {
        FusionPlan {
            size: q,
            alpha,
            kind: FusionKind::CircularShift,
            matrix: None,
        }
    }

    /// An arbitrary `Q×Q` operator `I + A`. It is not validated here; call
    /// [`FusionPlan::validate`].
    pub fn custom(matrix: Array2<f64>) -> Result<Self> {
        let (r, c) = matrix.dim();
        if r != c || r == 0 {
            return Err(Error::shape(format!("fusion matrix must be square, got {r}x{c}")));
        }
        Ok(FusionPlan {
            size: r,
            alpha: f64::NAN,
            kind: FusionKind::CustomMatrix,
            matrix: Some(matrix),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Fusion strength; NaN for custom matrices.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn kind(&self) -> FusionKind {
        self.kind
    }

    /// Dense `I + A`.
    pub fn dense(&self) -> Array2<f64> {
        match &self.matrix {
            Some(m) => m.clone(),
            None => {
                let q = self.size;
                let mut m = Array2::zeros((q, q));
                for i in 0..q {
                    m[[i, i]] += 1.0 - self.alpha;
                    m[[i, (i + 1) % q]] += self.alpha;
                }
                m
            }
        }
    }

    fn check_rows(&self, rows: usize) -> Result<()> {
        if rows != self.size {
            return Err(Error::shape(format!(
                "fusion plan has size {}, embeddings have {rows} rows",
                self.size
            )));
        }
        Ok(())
    }

    /// `Z' = (I + A) Z`.
    pub fn apply(&self, z: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        self.check_rows(z.nrows())?;
        match &self.matrix {
            Some(m) => Ok(m.dot(z)),
            None => {
                let q = self.size;
                let keep = 1.0 - self.alpha;
                let mut out = Array2::zeros(z.dim());
                for i in 0..q {
                    let next = z.row((i + 1) % q);
                    Zip::from(out.row_mut(i))
                        .and(z.row(i))
                        .and(next)
                        .for_each(|o, &own, &nb| *o = keep * own + self.alpha * nb);
                }
                Ok(out)
            }
        }
    }

    /// Gradient with respect to `Z` given the gradient with respect to `Z'`:
    /// `(I + A)ᵀ dZ'`.
    pub fn backward(&self, grad_out: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        self.check_rows(grad_out.nrows())?;
        match &self.matrix {
            Some(m) => Ok(m.t().dot(grad_out)),
            None => {
                let q = self.size;
                let keep = 1.0 - self.alpha;
                let mut out = Array2::zeros(grad_out.dim());
                for i in 0..q {
                    let prev = grad_out.row((i + q - 1) % q);
                    Zip::from(out.row_mut(i))
                        .and(grad_out.row(i))
                        .and(prev)
                        .for_each(|o, &own, &pv| *o = keep * own + self.alpha * pv);
                }
                Ok(out)
            }
        }
    }

    /// Recover `Z` from `Z'` by solving `(I + A) Z = Z'`.
    pub fn invert(&self, fused: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        self.check_rows(fused.nrows())?;
        linalg::solve(self.dense().view(), fused.view())
    }

    /// Closed-form spectrum `(1 − α) + α·e^{2πik/Q}` as `(re, im)` pairs.
    /// `None` for custom matrices.
    pub fn eigenvalues(&self) -> Option<Vec<(f64, f64)>> {
        if self.kind != FusionKind::CircularShift {
            return None;
        }
        let q = self.size as f64;
        Some(
            (0..self.size)
                .map(|k| {
                    let theta = 2.0 * PI * k as f64 / q;
                    (1.0 - self.alpha + self.alpha * theta.cos(), self.alpha * theta.sin())
                })
                .collect(),
        )
    }

    pub fn validate(&self) -> ValidationReport {
        let m = self.dense();
        let q = self.size;
        let determinant = linalg::determinant(m.view());
        let min_singular_value = linalg::singular_values(m.view()).last().copied().unwrap_or(0.0);

        let mut min_margin = f64::INFINITY;
        let mut max_norm_err: f64 = 0.0;
        for (i, row) in m.rows().into_iter().enumerate() {
            let off = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, v)| *v)
                .fold(f64::NEG_INFINITY, f64::max);
            // a 1x1 operator has no off-diagonal entries
            let margin = if q > 1 { row[i] - off } else { f64::INFINITY };
            min_margin = min_margin.min(margin);
            let l1: f64 = row.iter().map(|v| v.abs()).sum();
            max_norm_err = max_norm_err.max((l1 - 1.0).abs());
        }

        ValidationReport {
            full_rank: min_singular_value > RANK_TOL,
            diagonal_dominant: min_margin > 0.0,
            unit_row_norms: max_norm_err <= ROW_NORM_TOL,
            determinant,
            min_singular_value,
            min_dominance_margin: min_margin,
            max_row_norm_error: max_norm_err,
        }
    }
}
